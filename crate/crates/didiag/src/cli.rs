//! The `didiag` command line: argument parsing, dispatch and the JSON envelope.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diagram::{evaluate, parse, Bindings, DiagramError};
use crate::extractor::{
    bits_to_hex, classical_min_entropy, extract_subnormalized, extractor_distance_exact, hex_to_bits, leftover_hash_bound,
    toeplitz_extract, unbounded_pipeline, ExpansionPlan, ExtractorParams, RConfig,
};
use crate::protocol::{abort_frequency, chsh_game, game_value, min_entropy_cq, spotcheck_run, DeviceStrategy, EntropyMethod, SpotCheckParams};
use crate::regcalc::{CQState, FORMAT_VERSION};
use crate::rewrite::witness::measure_axiom;
use crate::rewrite::{axiom_rules, builtin_rules, compare_numerically, rule_names, run_script, BudgetOptions, EpsFn, NumericOptions, ProofScript, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "didiag", version, about = "Diagrams for classical-quantum processes and spot-checking randomness expansion")]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Numeric tolerance [default: 1e-6 for entropy, 1e-9 otherwise].
    #[arg(long, global = true, env = "DIDIAG_TOL")]
    pub tol: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for independent trials; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a diagram under a bindings file.
    Eval(EvalArgs),
    /// Replay a proof script.
    Check(CheckArgs),
    /// Simulate the spot-checking protocol or the expansion pipeline.
    Simulate(SimulateArgs),
    /// Certify the min-entropy of a classical-quantum state.
    Entropy(EntropyArgs),
    /// Toeplitz extraction and its exact error.
    Extract(ExtractArgs),
    /// List the rule library with self-test results.
    Rules(RulesArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Diagram in the text syntax.
    #[serde(skip)]
    pub diagram: PathBuf,
    /// Bindings for holes and payload-free boxes.
    #[arg(long)]
    #[serde(skip)]
    pub bindings: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CheckArgs {
    #[serde(skip)]
    pub script: PathBuf,
    /// Error function for the numeric budget: exp2:c:a, pow:c:p or const:c.
    #[arg(long)]
    pub eps: Option<String>,
    /// Value substituted for every base symbol in the budget.
    #[arg(long, default_value_t = 1.0)]
    pub n: f64,
    /// Terms summed before a series is closed with its tail bound.
    #[arg(long, default_value_t = 64)]
    pub k_max: u32,
    /// Also compare both sides of every step on random bindings.
    #[arg(long)]
    pub numeric: bool,
    /// Largest register dimension used by the numeric comparison.
    #[arg(long, default_value_t = 2)]
    pub max_base: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SimulateMode {
    Spotcheck,
    Pipeline,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "spotcheck")]
    pub mode: SimulateMode,
    /// Device strategy file; the optimal CHSH strategy when absent.
    #[arg(long)]
    #[serde(skip)]
    pub strategy: Option<PathBuf>,
    /// Strategy for the second device pair in pipeline mode; defaults to the first.
    #[arg(long)]
    #[serde(skip)]
    pub strategy_b: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0.2)]
    pub q: f64,
    #[arg(long, default_value_t = 0.85)]
    pub chi: f64,
    /// Independent runs on consecutive seeds; reports the abort frequency when above one.
    #[arg(long, default_value_t = 1)]
    pub runs: u64,
    /// Pipeline input width.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Pipeline depth: output width `4^k n`.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Rounds per test-half bit in each expansion stage.
    #[arg(long, default_value_t = 4)]
    pub ratio: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    Auto,
    Diagonal,
    Helstrom,
    Iterative,
}

impl From<MethodArg> for EntropyMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Auto => EntropyMethod::Auto,
            MethodArg::Diagonal => EntropyMethod::Diagonal,
            MethodArg::Helstrom => EntropyMethod::Helstrom,
            MethodArg::Iterative => EntropyMethod::Iterative,
        }
    }
}

impl Serialize for MethodArg {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        EntropyMethod::from(*self).serialize(s)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct EntropyArgs {
    /// Classical-quantum state file.
    #[serde(skip)]
    pub state: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub method: MethodArg,
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    #[command(subcommand)]
    pub mode: ExtractMode,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum ExtractMode {
    /// Hash a hex source with a hex seed.
    Toeplitz {
        /// Source bits as hex.
        #[arg(long)]
        source: String,
        /// Seed bits as hex, `n + m − 1` bits long.
        #[arg(long)]
        seed_bits: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
    },
    /// Exact seed-averaged error over a source distribution, against the leftover-hash bound.
    Source {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        /// JSON array of `2^n` probabilities.
        #[arg(long, conflicts_with = "h")]
        #[serde(skip)]
        dist: Option<PathBuf>,
        /// Flat source on `2^h` values chosen with the seed.
        #[arg(long)]
        h: Option<u32>,
    },
    /// Extract from a classical-quantum state file, possibly subnormalized.
    Cq {
        #[serde(skip)]
        state: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 8)]
        e: u32,
    },
}

#[derive(Debug, Args, Serialize)]
pub struct RulesArgs {
    /// Random bindings per exact rule instance.
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
}

/// The configuration echoed at the top of every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: u32,
    pub command: String,
    pub inputs: Vec<String>,
    pub seed: u64,
    pub tol: f64,
    pub options: Value,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    format_version: u32,
    config: &'a RunConfig,
    report: T,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable or malformed input.
    Usage(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn echo(x: &impl Serialize) -> Value {
    serde_json::to_value(x).expect("options serialize")
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// A finished command: the report and whether it verified.
pub struct Outcome {
    pub config: RunConfig,
    pub report: Value,
    pub ok: bool,
}

impl Outcome {
    pub fn to_json(&self) -> String {
        let env = Envelope { format_version: FORMAT_VERSION, config: &self.config, report: &self.report };
        serde_json::to_string_pretty(&env).expect("report serializes") + "\n"
    }
}

/// Run a parsed command line.
pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let default_tol = if matches!(cli.command, Command::Entropy(_)) { 1e-6 } else { 1e-9 };
    let tol = cli.tol.unwrap_or(default_tol);
    if !(tol.is_finite() && tol > 0.0) {
        return Err(usage(format!("--tol must be positive, got {tol}")));
    }
    let mut config = RunConfig { format_version: FORMAT_VERSION, command: String::new(), inputs: vec![], seed: cli.seed, tol, options: Value::Null };
    let (report, ok) = match &cli.command {
        Command::Eval(a) => {
            config.command = "eval".into();
            config.inputs = std::iter::once(&a.diagram).chain(&a.bindings).map(|p| path_str(p)).collect();
            config.options = echo(a);
            cmd_eval(a)?
        }
        Command::Check(a) => {
            config.command = "check".into();
            config.inputs = vec![path_str(&a.script)];
            config.options = echo(a);
            cmd_check(a, cli.seed, tol)?
        }
        Command::Simulate(a) => {
            config.command = "simulate".into();
            config.inputs = a.strategy.iter().chain(&a.strategy_b).map(|p| path_str(p)).collect();
            config.options = echo(a);
            cmd_simulate(a, cli.seed, tol)?
        }
        Command::Entropy(a) => {
            config.command = "entropy".into();
            config.inputs = vec![path_str(&a.state)];
            config.options = echo(a);
            cmd_entropy(a, tol)?
        }
        Command::Extract(a) => {
            config.command = "extract".into();
            config.inputs = match &a.mode {
                ExtractMode::Source { dist: Some(p), .. } | ExtractMode::Cq { state: p, .. } => vec![path_str(p)],
                _ => vec![],
            };
            config.options = echo(a);
            cmd_extract(a, cli.seed, tol)?
        }
        Command::Rules(a) => {
            config.command = "rules".into();
            config.options = echo(a);
            cmd_rules(a, cli.seed, tol)?
        }
    };
    Ok(Outcome { config, report, ok })
}

/// Parse `args` (including the program name), run, write the report and return the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if cli.jobs > 0 {
        // Fails only if a pool already exists, which keeps the earlier setting.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    let outcome = match execute(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let text = outcome.to_json();
    match &cli.out {
        Some(p) => {
            if let Err(e) = std::fs::write(p, &text) {
                eprintln!("error: {}: {e}", p.display());
                return EXIT_USAGE;
            }
        }
        None => print!("{text}"),
    }
    if outcome.ok {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

#[derive(Serialize)]
struct EvalReport {
    inputs: Vec<crate::regcalc::Register>,
    outputs: Vec<crate::regcalc::Register>,
    /// Real parts in row-major order, present when every entry is real.
    #[serde(skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scalar: Option<f64>,
    tensor: crate::regcalc::ProcessTensor,
}

fn diagram_error(path: &Path, e: DiagramError) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

fn cmd_eval(a: &EvalArgs) -> Result<(Value, bool), CliError> {
    let d = parse(&read(&a.diagram)?).map_err(|e| diagram_error(&a.diagram, e))?;
    let b = match &a.bindings {
        Some(p) => read_json::<Bindings>(p)?,
        None => Bindings::new(),
    };
    let t = evaluate(&d, &b).map_err(|e| diagram_error(&a.diagram, e))?;
    let m = t.matrix();
    let values = m.iter().all(|z| z.im == 0.0).then(|| (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)].re)).collect::<Vec<_>>());
    let scalar = (m.nrows() == 1 && m.ncols() == 1 && m[(0, 0)].im == 0.0).then(|| m[(0, 0)].re);
    let rep = EvalReport { inputs: t.inputs().to_vec(), outputs: t.outputs().to_vec(), values, scalar, tensor: t.clone() };
    Ok((echo(&rep), true))
}

fn cmd_check(a: &CheckArgs, seed: u64, tol: f64) -> Result<(Value, bool), CliError> {
    let script: ProofScript = read_json(&a.script)?;
    let budget = match &a.eps {
        Some(s) => Some(BudgetOptions { eps_fn: s.parse::<EpsFn>().map_err(usage)?, n: a.n, k_max: a.k_max }),
        None => None,
    };
    let numeric = a.numeric.then_some(NumericOptions { max_base: a.max_base, seed, tol });
    let r = run_script(&script, budget.as_ref(), numeric.as_ref());
    let ok = r.verdict == Verdict::Verified;
    Ok((echo(&r), ok))
}

fn load_strategy(p: &Option<PathBuf>, tol: f64) -> Result<DeviceStrategy, CliError> {
    let s = match p {
        Some(p) => read_json::<DeviceStrategy>(p)?,
        None => DeviceStrategy::chsh_optimal(),
    };
    s.validate(tol.max(1e-9)).map_err(usage)?;
    Ok(s)
}

#[derive(Serialize)]
struct AbortSummary {
    runs: u64,
    first_seed: u64,
    strategy: String,
    game_value: f64,
    abort_frequency: f64,
}

fn cmd_simulate(a: &SimulateArgs, seed: u64, tol: f64) -> Result<(Value, bool), CliError> {
    let dev = load_strategy(&a.strategy, tol)?;
    match a.mode {
        SimulateMode::Spotcheck => {
            let p = SpotCheckParams { rounds: a.rounds, q: a.q, chi: a.chi, seed };
            p.validate().map_err(usage)?;
            if a.runs <= 1 {
                let r = spotcheck_run(&p, &dev).map_err(usage)?;
                return Ok((echo(&r), true));
            }
            let freq = abort_frequency(&p, &dev, a.runs).map_err(usage)?;
            let value = game_value(&chsh_game(), &dev).map_err(usage)?;
            Ok((echo(&AbortSummary { runs: a.runs, first_seed: seed, strategy: dev.name.clone(), game_value: value, abort_frequency: freq }), true))
        }
        SimulateMode::Pipeline => {
            let dev_b = match &a.strategy_b {
                Some(_) => load_strategy(&a.strategy_b, tol)?,
                None => dev.clone(),
            };
            let plan = ExpansionPlan { n: a.n, k: a.k, config: RConfig { ratio: a.ratio, q: a.q, chi: a.chi } };
            let r = unbounded_pipeline(&plan, &dev, &dev_b, seed).map_err(usage)?;
            Ok((echo(&r), true))
        }
    }
}

fn cmd_entropy(a: &EntropyArgs, tol: f64) -> Result<(Value, bool), CliError> {
    let psi: CQState = read_json(&a.state)?;
    let r = min_entropy_cq(&psi, tol, a.method.into()).map_err(usage)?;
    let ok = r.converged;
    Ok((echo(&r), ok))
}

#[derive(Serialize)]
struct SourceReport {
    n: usize,
    m: usize,
    h_min: f64,
    distance: f64,
    bound: f64,
    within_bound: bool,
    support: Option<Vec<u64>>,
}

fn cmd_extract(a: &ExtractArgs, seed: u64, tol: f64) -> Result<(Value, bool), CliError> {
    match &a.mode {
        ExtractMode::Toeplitz { source, seed_bits, n, m } => {
            let x = hex_to_bits(source, *n).map_err(usage)?;
            let s = hex_to_bits(seed_bits, n + m - 1).map_err(usage)?;
            let z = toeplitz_extract(&x, &s, *m).map_err(usage)?;
            let out: BTreeMap<&str, Value> = [("output_bits", Value::from(bits_to_hex(&z))), ("output", Value::from(z.iter().map(|b| b.to_string()).collect::<String>()))].into();
            Ok((echo(&out), true))
        }
        ExtractMode::Source { n, m, dist, h } => {
            let (p, support) = match (dist, h) {
                (Some(path), None) => (read_json::<Vec<f64>>(path)?, None),
                (None, Some(h)) => {
                    if *h as usize > *n || *n > 63 {
                        return Err(usage(format!("--h must be at most --n, got h={h} n={n}")));
                    }
                    let mut all: Vec<u64> = (0..1u64 << n).collect();
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    all.shuffle(&mut rng);
                    let mut chosen: Vec<u64> = all[..1usize << h].to_vec();
                    chosen.sort_unstable();
                    let mut p = vec![0.0; 1usize << n];
                    for &x in &chosen {
                        p[x as usize] = 1.0 / (1u64 << h) as f64;
                    }
                    (p, Some(chosen))
                }
                _ => return Err(usage("extract source needs exactly one of --dist or --h")),
            };
            let distance = extractor_distance_exact(&p, *n, *m).map_err(usage)?;
            let h_min = classical_min_entropy(&p);
            let bound = leftover_hash_bound(h_min, *m);
            let rep = SourceReport { n: *n, m: *m, h_min, distance, bound, within_bound: distance <= bound + tol, support };
            let ok = rep.within_bound;
            Ok((echo(&rep), ok))
        }
        ExtractMode::Cq { state, m, e } => {
            let y: CQState = read_json(state)?;
            let n = y.classical_dim().trailing_zeros() as usize;
            if 1usize << n != y.classical_dim() {
                return Err(usage(format!("classical dimension {} is not a power of two", y.classical_dim())));
            }
            let r = extract_subnormalized(&y, ExtractorParams { n, m: *m, e: *e }).map_err(usage)?;
            let ok = r.exact_distance.is_none_or(|d| d <= r.bound + tol);
            Ok((echo(&r), ok))
        }
    }
}

#[derive(Serialize)]
struct RuleEntry {
    name: String,
    mode: crate::rewrite::Mode,
    instances: Vec<RuleInstance>,
}

#[derive(Serialize)]
struct RuleInstance {
    lhs: String,
    rhs: String,
    cost: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_entry_diff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    distance: Option<crate::regcalc::DistanceInterval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    passed: Option<bool>,
}

#[derive(Serialize)]
struct RulesReport {
    trials: usize,
    rules: Vec<RuleEntry>,
    failures: usize,
}

fn cmd_rules(a: &RulesArgs, seed: u64, tol: f64) -> Result<(Value, bool), CliError> {
    use crate::diagram::print;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_name: BTreeMap<String, RuleEntry> = BTreeMap::new();
    let mut failures = 0;
    for r in builtin_rules() {
        let mut worst = 0.0f64;
        let mut error = None;
        for _ in 0..a.trials {
            match compare_numerically(&r.lhs, &r.rhs, &Bindings::new(), &mut rng) {
                Ok(d) => worst = worst.max(d),
                Err(e) => error = Some(e.to_string()),
            }
        }
        let passed = error.is_none() && worst <= tol;
        failures += usize::from(!passed);
        let inst = RuleInstance {
            lhs: print(&r.lhs),
            rhs: print(&r.rhs),
            cost: r.cost.to_string(),
            max_entry_diff: Some(worst),
            distance: None,
            witness: None,
            error,
            passed: Some(passed),
        };
        by_name.entry(r.name.clone()).or_insert_with(|| RuleEntry { name: r.name.clone(), mode: r.mode, instances: vec![] }).instances.push(inst);
    }
    for r in axiom_rules() {
        let (distance, witness, error) = match measure_axiom(&r) {
            Some(Ok(m)) => (Some(m.distance), Some(m.witness), None),
            Some(Err(e)) => (None, None, Some(e.to_string())),
            None => (None, None, None),
        };
        failures += usize::from(error.is_some());
        let inst = RuleInstance { lhs: print(&r.lhs), rhs: print(&r.rhs), cost: r.cost.to_string(), max_entry_diff: None, distance, witness, passed: None, error };
        by_name.entry(r.name.clone()).or_insert_with(|| RuleEntry { name: r.name.clone(), mode: r.mode, instances: vec![] }).instances.push(inst);
    }
    let rules = rule_names()
        .iter()
        .map(|n| by_name.remove(*n).unwrap_or_else(|| RuleEntry { name: n.to_string(), mode: crate::rewrite::Mode::Abstraction, instances: vec![] }))
        .collect();
    let rep = RulesReport { trials: a.trials, rules, failures };
    Ok((echo(&rep), failures == 0))
}
