use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bits_to_index, index_to_bits, statistical_distance, toeplitz_extract, ExtractorError, ToeplitzMasks};
use crate::diagram::{Diagram, Generator};
use crate::protocol::{chsh_game, play_round, rational_approx, DeviceMode, DeviceStrategy, RationalB, RoundRecord};
use crate::regcalc::linalg::{c, CMat};
use crate::regcalc::{ProcessTensor, Register, FORMAT_VERSION};
use crate::rewrite::EpsExpr;

/// Largest spot-checking run whose outcomes are enumerated exactly.
const EXACT_ROUNDS: usize = 8;
const EXACT_SAMPLER_TOPUP: usize = 16;
const EXACT_OUTPUT_BITS: usize = 12;

/// Parameters of the inner spot-checking protocol shared by every `R(M)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RConfig {
    /// Device output bits per seed bit fed to the spot-checker.
    pub ratio: usize,
    pub q: f64,
    pub chi: f64,
}

impl Default for RConfig {
    fn default() -> Self {
        RConfig { ratio: 4, q: 0.2, chi: 0.85 }
    }
}

/// `R(M)`: split the `M` seed bits into `⌊M/2⌋ + ⌈M/2⌉`, run spot-checking on the second
/// half, extract from the device outputs seeded by the first half, and emit the extracted
/// bits followed by a copy of the first half. Output `2M` bits.
///
/// At desk scale neither half is long enough: the sampler reads `ℓ` bits and the Toeplitz
/// seed needs `n + m − 1`. The difference is drawn as extra uniform bits and reported.
#[derive(Clone, Debug, Serialize)]
pub struct RProtocol {
    pub m: usize,
    pub config: RConfig,
    pub seed_half: usize,
    pub t_half: usize,
    pub rounds: usize,
    /// Device outcome bits, two per round.
    pub source_bits: usize,
    /// Extracted bits, `2M − ⌊M/2⌋`.
    pub fresh_bits: usize,
    pub out_bits: usize,
    pub extractor_seed_len: usize,
    /// Bits read by the `B_q` sampler.
    pub ell: u32,
    pub sampler_topup: usize,
    pub extractor_topup: usize,
    #[serde(skip)]
    approx: RationalB,
}

/// One execution of `R(M)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RRun {
    pub format_version: u32,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    pub input_bits: String,
    pub aborted: bool,
    /// The sampler landed on the mass removed by truncation and flooring.
    pub sampler_failed: bool,
    pub test_round_count: usize,
    pub pass_count: usize,
    pub transcript: Vec<RoundRecord>,
    pub output_bits: Option<String>,
}

fn bit_string(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
}

/// Build `R(M)`. `M = 1` is rejected: it leaves the extractor seed half empty.
pub fn compose_r(m: usize, config: RConfig) -> Result<RProtocol, ExtractorError> {
    if m == 1 {
        return Err(ExtractorError::Width("R(1) would split its seed into halves of 0 and 1 bits; the extractor half must be nonempty".into()));
    }
    RProtocol::build(m, config)
}

impl RProtocol {
    /// Like [`compose_r`] but allows `M = 1`, whose extractor seed is entirely top-up.
    pub(crate) fn build(m: usize, config: RConfig) -> Result<Self, ExtractorError> {
        if m == 0 {
            return Err(ExtractorError::Width("R(0) has no input".into()));
        }
        let (seed_half, t_half) = (m / 2, m.div_ceil(2));
        if config.ratio == 0 || !(config.ratio * t_half).is_multiple_of(2) {
            return Err(ExtractorError::Width(format!("ratio {} times {t_half} seed bits is not a whole number of two-bit rounds", config.ratio)));
        }
        let rounds = config.ratio * t_half / 2;
        let source_bits = 2 * rounds;
        let fresh_bits = 2 * m - seed_half;
        if fresh_bits > source_bits {
            return Err(ExtractorError::Width(format!("{fresh_bits} extracted bits from a {source_bits}-bit source; raise the ratio")));
        }
        if !(0.5..=1.0).contains(&config.chi) {
            return Err(ExtractorError::Invalid(format!("chi = {} is outside [1/2, 1]", config.chi)));
        }
        let approx = rational_approx(config.q, rounds)?;
        let extractor_seed_len = source_bits + fresh_bits - 1;
        Ok(RProtocol {
            m,
            config,
            seed_half,
            t_half,
            rounds,
            source_bits,
            fresh_bits,
            out_bits: 2 * m,
            extractor_seed_len,
            ell: approx.ell,
            sampler_topup: (approx.ell as usize).saturating_sub(t_half),
            extractor_topup: extractor_seed_len - seed_half,
            approx,
        })
    }

    fn sampler_input(&self, j2: &[u8], topup: &[u8]) -> u128 {
        let own = j2.len().min(self.ell as usize);
        j2[..own].iter().chain(topup).fold(0u128, |acc, &b| (acc << 1) | b as u128)
    }

    /// Run on `input` (`M` bits) with the given extractor top-up; sampler top-up comes from `rng`.
    /// `rho` is the device pair's state, carried between calls in scripted mode.
    pub fn run(&self, input: &[u8], extractor_topup: &[u8], dev: &DeviceStrategy, rho: &mut CMat, rng: &mut ChaCha8Rng) -> Result<RRun, ExtractorError> {
        if input.len() != self.m || extractor_topup.len() != self.extractor_topup {
            return Err(ExtractorError::Length(format!("R({}) takes {} input and {} top-up bits", self.m, self.m, self.extractor_topup)));
        }
        let g = chsh_game();
        dev.check_shape(&g)?;
        let (j1, j2) = input.split_at(self.seed_half);
        let topup: Vec<u8> = (0..self.sampler_topup).map(|_| rng.gen_range(0..2u8)).collect();
        let mut report = RRun {
            format_version: FORMAT_VERSION,
            m: self.m,
            rng_seed: None,
            input_bits: bit_string(input),
            aborted: true,
            sampler_failed: false,
            test_round_count: 0,
            pass_count: 0,
            transcript: vec![],
            output_bits: None,
        };
        let Some(schedule) = self.approx.sample(self.sampler_input(j2, &topup)) else {
            report.sampler_failed = true;
            return Ok(report);
        };
        let mut source = Vec::with_capacity(self.source_bits);
        for s in schedule {
            let (t, x, y) = if s >= 4 { (1, ((s / 2) % 2) as usize, (s % 2) as usize) } else { (0, 0, 0) };
            let (a, b) = play_round(dev, rho, x, y, rng);
            let win = (t == 1).then(|| g.predicate(&[x, y], &[a, b]));
            if let Some(w) = win {
                report.test_round_count += 1;
                report.pass_count += w as usize;
            }
            source.extend([a as u8, b as u8]);
            report.transcript.push(RoundRecord { t, x: x as u8, y: y as u8, a: a as u8, b: b as u8, win });
        }
        report.aborted = aborts(report.test_round_count, report.pass_count, self.config.chi);
        if !report.aborted {
            let seed: Vec<u8> = j1.iter().chain(extractor_topup).copied().collect();
            let mut out = toeplitz_extract(&source, &seed, self.fresh_bits)?;
            out.extend_from_slice(j1);
            report.output_bits = Some(bit_string(&out));
        }
        Ok(report)
    }

    /// A single seeded run with fresh devices; all top-up bits come from the seed.
    pub fn simulate(&self, input: &[u8], dev: &DeviceStrategy, seed: u64) -> Result<RRun, ExtractorError> {
        dev.validate(1e-9)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topup: Vec<u8> = (0..self.extractor_topup).map(|_| rng.gen_range(0..2u8)).collect();
        let mut rho = dev.state.clone();
        let mut r = self.run(input, &topup, dev, &mut rho, &mut rng)?;
        r.rng_seed = Some(seed);
        Ok(r)
    }

    fn check_exact(&self, dev: &DeviceStrategy) -> Result<(), ExtractorError> {
        if dev.mode != DeviceMode::Iid {
            return Err(ExtractorError::Cap("exact enumeration needs IID devices".into()));
        }
        if self.rounds > EXACT_ROUNDS || self.sampler_topup > EXACT_SAMPLER_TOPUP || self.out_bits > 2 * EXACT_OUTPUT_BITS {
            return Err(ExtractorError::Cap(format!("R({}) with {} rounds is too large to enumerate", self.m, self.rounds)));
        }
        Ok(())
    }

    /// `kernel[j2][o]`: probability that the spot-checker, given seed half `j2`, does not
    /// abort and the devices emit `o`. Averages over the sampler top-up.
    pub fn t_kernel(&self, dev: &DeviceStrategy) -> Result<Vec<Vec<f64>>, ExtractorError> {
        self.check_exact(dev)?;
        let g = chsh_game();
        dev.check_shape(&g)?;
        let weight = 0.5f64.powi(self.sampler_topup as i32);
        let mut cache: HashMap<Vec<u8>, Vec<f64>> = HashMap::new();
        let mut kernel = vec![vec![0.0; 1 << self.source_bits]; 1 << self.t_half];
        for (j2, row) in kernel.iter_mut().enumerate() {
            let j2_bits = index_to_bits(j2 as u64, self.t_half);
            for u in 0..1u64 << self.sampler_topup {
                let Some(schedule) = self.approx.sample(self.sampler_input(&j2_bits, &index_to_bits(u, self.sampler_topup))) else {
                    continue;
                };
                let dist = cache.entry(schedule.clone()).or_insert_with(|| self.outcome_distribution(&schedule, dev));
                for (o, p) in dist.iter().enumerate() {
                    row[o] += weight * p;
                }
            }
        }
        Ok(kernel)
    }

    /// Non-aborting device outcome distribution for a fixed round schedule.
    fn outcome_distribution(&self, schedule: &[u8], dev: &DeviceStrategy) -> Vec<f64> {
        let g = chsh_game();
        // (outcome prefix, passes) -> probability
        let mut states: BTreeMap<(u64, usize), f64> = BTreeMap::from([((0, 0), 1.0)]);
        let mut tests = 0;
        for &s in schedule {
            let (t, x, y) = if s >= 4 { (true, ((s / 2) % 2) as usize, (s % 2) as usize) } else { (false, 0, 0) };
            tests += t as usize;
            let probs = dev.outcome_probs(&dev.state, &[x, y]);
            let mut next = BTreeMap::new();
            for (&(prefix, passes), &p) in &states {
                for (ab, &q) in probs.iter().enumerate() {
                    if q == 0.0 {
                        continue;
                    }
                    let win = t && g.predicate(&[x, y], &[ab / 2, ab % 2]);
                    *next.entry(((prefix << 2) | ab as u64, passes + win as usize)).or_insert(0.0) += p * q;
                }
            }
            states = next;
        }
        let mut out = vec![0.0; 1 << self.source_bits];
        for ((o, passes), p) in states {
            if !aborts(tests, passes, self.config.chi) {
                out[o as usize] += p;
            }
        }
        out
    }

    /// `kernel[j][z]`: probability of output `z` on input `j` without abort, for a fixed extractor top-up.
    pub fn exact_kernel(&self, dev: &DeviceStrategy, extractor_topup: &[u8]) -> Result<Vec<Vec<f64>>, ExtractorError> {
        let tk = self.t_kernel(dev)?;
        let mut kernel = vec![vec![0.0; 1 << self.out_bits]; 1 << self.m];
        for (j, row) in kernel.iter_mut().enumerate() {
            let bits = index_to_bits(j as u64, self.m);
            let (j1, j2) = bits.split_at(self.seed_half);
            let seed: Vec<u8> = j1.iter().chain(extractor_topup).copied().collect();
            let t = ToeplitzMasks::new(&seed, self.source_bits, self.fresh_bits);
            for (o, &p) in tk[bits_to_index(j2) as usize].iter().enumerate() {
                if p != 0.0 {
                    let z = (t.apply(o as u64) << self.seed_half) | bits_to_index(j1);
                    row[z as usize] += p;
                }
            }
        }
        Ok(kernel)
    }

    /// The wiring of `R(M)` with the spot-checker as the causal hole `T` and the extractor as
    /// the box `V`, whose top-up seed register `U` is fed a uniform state. Inputs are the
    /// `M` seed bits as separate `C2` wires; outputs are `Z` (extracted bits) then the copied seed half.
    pub fn diagram(&self) -> Result<Diagram, ExtractorError> {
        let cols_bits = self.source_bits + self.seed_half + self.extractor_topup;
        if cols_bits > 16 || self.fresh_bits > 16 {
            return Err(ExtractorError::Cap(format!("R({}) is too wide to tabulate as a diagram", self.m)));
        }
        let regs: BTreeMap<String, Register> = [
            ("C2", Register::classical(2)),
            ("O", Register::classical(1 << self.source_bits)),
            ("Z", Register::classical(1 << self.fresh_bits)),
            ("U", Register::classical(1 << self.extractor_topup)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let id = |n: usize, r: &str| Diagram::identity(regs.clone(), vec![r.to_string(); n]);
        let bits = |n: usize| vec!["C2".to_string(); n];
        let (s, t) = (self.seed_half, self.t_half);

        // copy each seed-half bit
        let mut d = id(0, "C2");
        for _ in 0..s {
            d = d.beside(&Diagram::single(regs.clone(), Generator::spider("C2", 1, 2)))?;
        }
        d = d.beside(&id(t, "C2"))?;
        // order: T half, copies for V, originals
        let mut perm: Vec<usize> = (2 * s..2 * s + t).collect();
        perm.extend((0..s).map(|i| 2 * i + 1));
        perm.extend((0..s).map(|i| 2 * i));
        d = d.then(&Diagram::permutation(regs.clone(), bits(2 * s + t), &perm))?;
        let hole_t = Generator::hole("T", bits(t), vec!["O".into()], true);
        d = d.then(&Diagram::single(regs.clone(), hole_t).beside(&id(2 * s, "C2"))?)?;
        let with_u = id(1, "O").beside(&id(s, "C2"))?.beside(&Diagram::single(regs.clone(), Generator::uniform("U", 1)))?.beside(&id(s, "C2"))?;
        d = d.then(&with_u)?;
        let mut v_ins = vec!["O".to_string()];
        v_ins.extend(bits(s));
        v_ins.push("U".into());
        let mut v = Generator::boxed("V", v_ins, vec!["Z".into()], true);
        v.payload = Some(self.extractor_tensor()?);
        d = d.then(&Diagram::single(regs.clone(), v).beside(&id(s, "C2"))?)?;
        Ok(d)
    }

    /// The extractor as a deterministic map `O * C2^{⌊M/2⌋} * U → Z`.
    fn extractor_tensor(&self) -> Result<ProcessTensor, ExtractorError> {
        let s = self.seed_half;
        let mut ins = vec![Register::classical(1 << self.source_bits)];
        ins.extend(vec![Register::classical(2); s]);
        ins.push(Register::classical(1 << self.extractor_topup));
        let cols = 1usize << (self.source_bits + s + self.extractor_topup);
        let mut m = CMat::zeros(1 << self.fresh_bits, cols);
        for col in 0..cols {
            let o = (col >> (s + self.extractor_topup)) as u64;
            let seed = index_to_bits((col & ((1 << (s + self.extractor_topup)) - 1)) as u64, s + self.extractor_topup);
            let z = ToeplitzMasks::new(&seed, self.source_bits, self.fresh_bits).apply(o);
            m[(z as usize, col)] = c(1.0);
        }
        Ok(ProcessTensor::new(ins, vec![Register::classical(1 << self.fresh_bits)], m).map_err(crate::protocol::ProtocolError::from)?)
    }
}

fn aborts(tests: usize, passes: usize, chi: f64) -> bool {
    tests == 0 || (passes as f64) < chi * tests as f64
}

/// `S_k(N)`: levels `i = 0..k`, each `R(2·4^i N) ∘ R(4^i N)`, with consecutive `R`s on
/// alternating device pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionPlan {
    pub n: usize,
    pub k: usize,
    pub config: RConfig,
}

impl ExpansionPlan {
    /// `N, 4N, …, 4^k N`.
    pub fn widths(&self) -> Vec<usize> {
        (0..=self.k).map(|i| self.n << (2 * i)).collect()
    }

    /// Input widths of the `2k` successive `R` stages.
    pub fn stage_widths(&self) -> Vec<usize> {
        (0..2 * self.k).map(|j| self.n << j).collect()
    }

    /// `ε(4^i N) + ε(2·4^i N)` for level `i` (zero-based).
    pub fn level_budget(&self, i: usize) -> EpsExpr {
        EpsExpr::eps(1 << (2 * i), "N").plus(&EpsExpr::eps(1 << (2 * i + 1), "N"))
    }

    pub fn total_budget(&self) -> EpsExpr {
        EpsExpr::gamma("N", 2 * self.k as u32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageReport {
    pub m: usize,
    /// `A` or `B`.
    pub device_pair: String,
    /// Absent when an earlier stage aborted.
    pub run: Option<RRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelReport {
    pub level: usize,
    pub input_width: usize,
    pub output_width: usize,
    pub budget: String,
    /// `None` when the level did not run.
    pub aborted: Option<bool>,
    pub stages: Vec<StageReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactSummary {
    pub output_width: usize,
    pub abort_probability: f64,
    /// Distance of the non-aborting output from uniform over all protocol randomness,
    /// with the extractor top-up bits of this run held fixed.
    pub distance_from_uniform: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineReport {
    pub format_version: u32,
    pub rng: String,
    pub rng_seed: u64,
    pub plan: ExpansionPlan,
    pub widths: Vec<usize>,
    pub total_budget: String,
    pub levels: Vec<LevelReport>,
    pub aborted: bool,
    pub aborted_at_level: Option<usize>,
    pub input_bits: String,
    pub output_bits: Option<String>,
    pub exact: Option<ExactSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_skipped: Option<String>,
}

/// Execute `S_k(N)` on a uniformly drawn `N`-bit seed. Aborts are reported, not raised.
pub fn unbounded_pipeline(plan: &ExpansionPlan, pair_a: &DeviceStrategy, pair_b: &DeviceStrategy, seed: u64) -> Result<PipelineReport, ExtractorError> {
    if plan.n == 0 || plan.k == 0 {
        return Err(ExtractorError::Invalid("the plan needs N ≥ 1 and k ≥ 1".into()));
    }
    if plan.stage_widths().last().map_or(0, |w| 2 * w) > 1 << 20 {
        return Err(ExtractorError::Cap("output width past 2^20 bits".into()));
    }
    pair_a.validate(1e-9)?;
    pair_b.validate(1e-9)?;
    let stages: Vec<RProtocol> = plan.stage_widths().into_iter().map(|m| RProtocol::build(m, plan.config)).collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input: Vec<u8> = (0..plan.n).map(|_| rng.gen_range(0..2u8)).collect();
    let topups: Vec<Vec<u8>> = stages.iter().map(|r| (0..r.extractor_topup).map(|_| rng.gen_range(0..2u8)).collect()).collect();
    let pairs = [pair_a, pair_b];
    let mut rhos = [pair_a.state.clone(), pair_b.state.clone()];

    let mut current = Some(input.clone());
    let mut levels = Vec::new();
    let mut aborted_at_level = None;
    for i in 0..plan.k {
        let mut level = LevelReport {
            level: i + 1,
            input_width: plan.n << (2 * i),
            output_width: plan.n << (2 * i + 2),
            budget: plan.level_budget(i).to_string(),
            aborted: None,
            stages: vec![],
        };
        for j in [2 * i, 2 * i + 1] {
            let run = match &current {
                Some(bits) => {
                    let r = stages[j].run(bits, &topups[j], pairs[j % 2], &mut rhos[j % 2], &mut rng)?;
                    current = r.output_bits.as_ref().map(|s| s.bytes().map(|b| b - b'0').collect());
                    Some(r)
                }
                None => None,
            };
            level.stages.push(StageReport { m: stages[j].m, device_pair: ["A", "B"][j % 2].into(), run });
        }
        if level.stages[0].run.is_some() {
            level.aborted = Some(current.is_none());
            if current.is_none() && aborted_at_level.is_none() {
                aborted_at_level = Some(i + 1);
            }
        }
        levels.push(level);
    }

    let (exact, exact_skipped) = match exact_summary(plan, &stages, &topups, pairs) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(PipelineReport {
        format_version: FORMAT_VERSION,
        rng: crate::protocol::RNG_NAME.into(),
        rng_seed: seed,
        plan: *plan,
        widths: plan.widths(),
        total_budget: plan.total_budget().to_string(),
        levels,
        aborted: current.is_none(),
        aborted_at_level,
        input_bits: bit_string(&input),
        output_bits: current.map(|b| bit_string(&b)),
        exact,
        exact_skipped,
    })
}

fn exact_summary(plan: &ExpansionPlan, stages: &[RProtocol], topups: &[Vec<u8>], pairs: [&DeviceStrategy; 2]) -> Result<ExactSummary, ExtractorError> {
    let width = plan.n << (2 * plan.k);
    if width > EXACT_OUTPUT_BITS {
        return Err(ExtractorError::Cap(format!("output width {width} exceeds {EXACT_OUTPUT_BITS} bits")));
    }
    let mut dist = vec![0.5f64.powi(plan.n as i32); 1 << plan.n];
    for (j, r) in stages.iter().enumerate() {
        let kernel = r.exact_kernel(pairs[j % 2], &topups[j])?;
        let mut next = vec![0.0; 1 << r.out_bits];
        for (x, &p) in dist.iter().enumerate() {
            if p != 0.0 {
                for (z, &k) in kernel[x].iter().enumerate() {
                    next[z] += p * k;
                }
            }
        }
        dist = next;
    }
    let uniform = vec![0.5f64.powi(width as i32); 1 << width];
    Ok(ExactSummary { output_width: width, abort_probability: 1.0 - dist.iter().sum::<f64>(), distance_from_uniform: statistical_distance(&dist, &uniform) })
}
