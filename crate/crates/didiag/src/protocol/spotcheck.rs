use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bq::b_q_distribution;
use super::game::{chsh_game, DeviceMode, DeviceStrategy, Game};
use super::ProtocolError;
use crate::regcalc::linalg::{unflatten, CMat};
use crate::regcalc::FORMAT_VERSION;

pub const RNG_NAME: &str = "chacha8";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpotCheckParams {
    pub rounds: usize,
    pub q: f64,
    pub chi: f64,
    pub seed: u64,
}

impl SpotCheckParams {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.rounds == 0 {
            return Err(ProtocolError::Invalid("at least one round is required".into()));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(ProtocolError::Invalid(format!("q = {} is outside (0, 1]", self.q)));
        }
        if !(0.5..=1.0).contains(&self.chi) {
            return Err(ProtocolError::Invalid(format!("chi = {} is outside [1/2, 1]", self.chi)));
        }
        Ok(())
    }
}

/// One round: the `B_q` symbol `(t, a1, a2)`, the inputs given and the outcomes received.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundRecord {
    pub t: u8,
    pub x: u8,
    pub y: u8,
    pub a: u8,
    pub b: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub win: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub format_version: u32,
    pub rng: String,
    pub rng_seed: u64,
    pub rounds: usize,
    pub q: f64,
    pub chi: f64,
    pub strategy: String,
    pub aborted: bool,
    pub test_round_count: usize,
    pub pass_count: usize,
    pub transcript: Vec<RoundRecord>,
    /// Both outcomes of every round, `a` then `b`, as `0`/`1` characters.
    pub output_bits: String,
}

/// Sample one outcome pair for inputs `(x, y)` and advance the state in scripted mode.
pub fn play_round(s: &DeviceStrategy, rho: &mut CMat, x: usize, y: usize, rng: &mut impl Rng) -> (usize, usize) {
    let probs = s.outcome_probs(rho, &[x, y]);
    let total: f64 = probs.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut k = probs.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            k = i;
            break;
        }
        u -= p;
    }
    let out = unflatten(k, &[s.povms[0][x].len(), s.povms[1][y].len()]);
    if s.mode == DeviceMode::Scripted {
        if let Some(next) = s.post_measurement(rho, &[x, y], &out) {
            *rho = next;
        }
    }
    (out[0], out[1])
}

pub(crate) fn check_chsh_strategy(s: &DeviceStrategy) -> Result<Game, ProtocolError> {
    let g = chsh_game();
    s.validate(1e-9)?;
    s.check_shape(&g)?;
    Ok(g)
}

/// Aborts when no round was a test round or the pass rate falls below `chi`.
pub(crate) fn aborts(tests: usize, passes: usize, chi: f64) -> bool {
    tests == 0 || (passes as f64) < chi * tests as f64
}

/// Spot-checking with CHSH: each round draws `(t, a1, a2) ~ B_q`; test rounds
/// (`t = 1`) play CHSH on inputs `(a1, a2)` and are scored, generation rounds give `(0, 0)`.
pub fn spotcheck_run(p: &SpotCheckParams, s: &DeviceStrategy) -> Result<RunReport, ProtocolError> {
    p.validate()?;
    let g = check_chsh_strategy(s)?;
    let bq = if p.q < 1.0 { Some(b_q_distribution(p.q)?) } else { None };
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut rho = s.state.clone();
    let mut transcript = Vec::with_capacity(p.rounds);
    let mut output_bits = String::with_capacity(2 * p.rounds);
    let (mut tests, mut passes) = (0, 0);
    for _ in 0..p.rounds {
        let symbol = match &bq {
            Some(d) => draw(d, rng.gen::<f64>()),
            None => 4 + rng.gen_range(0..4),
        };
        let (t, a1, a2) = (symbol / 4, (symbol / 2) % 2, symbol % 2);
        let (x, y) = if t == 1 { (a1, a2) } else { (0, 0) };
        let (a, b) = play_round(s, &mut rho, x, y, &mut rng);
        let win = (t == 1).then(|| g.predicate(&[x, y], &[a, b]));
        if let Some(w) = win {
            tests += 1;
            passes += w as usize;
        }
        output_bits.push(if a == 1 { '1' } else { '0' });
        output_bits.push(if b == 1 { '1' } else { '0' });
        transcript.push(RoundRecord { t: t as u8, x: x as u8, y: y as u8, a: a as u8, b: b as u8, win });
    }
    Ok(RunReport {
        format_version: FORMAT_VERSION,
        rng: RNG_NAME.into(),
        rng_seed: p.seed,
        rounds: p.rounds,
        q: p.q,
        chi: p.chi,
        strategy: s.name.clone(),
        aborted: aborts(tests, passes, p.chi),
        test_round_count: tests,
        pass_count: passes,
        transcript,
        output_bits,
    })
}

fn draw(dist: &[f64; 8], mut u: f64) -> usize {
    for (i, p) in dist.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    // rounding slack lands on the last nonzero entry
    7
}

/// Fraction of aborted runs over seeds `first_seed .. first_seed + runs`, in parallel.
pub fn abort_frequency(p: &SpotCheckParams, s: &DeviceStrategy, runs: u64) -> Result<f64, ProtocolError> {
    let aborted: Result<Vec<bool>, ProtocolError> =
        (0..runs).into_par_iter().map(|k| spotcheck_run(&SpotCheckParams { seed: p.seed + k, ..*p }, s).map(|r| r.aborted)).collect();
    let aborted = aborted?;
    Ok(aborted.iter().filter(|&&a| a).count() as f64 / runs.max(1) as f64)
}
