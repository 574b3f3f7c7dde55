//! Seeded extraction by Toeplitz hashing and the expansion pipeline built on it.
//!
//! Bit strings are `u8` slices of 0/1 values. When a string is read as an integer it
//! is big-endian: the first bit is the most significant.

mod pipeline;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pipeline::{compose_r, unbounded_pipeline, ExpansionPlan, LevelReport, PipelineReport, RConfig, RProtocol, RRun};

use crate::protocol::{min_entropy_cq, EntropyMethod, ProtocolError};
use crate::regcalc::linalg::{trace_norm, CMat};
use crate::regcalc::{CQState, FORMAT_VERSION};

pub const MAX_EXACT_SOURCE_BITS: usize = 12;
pub const MAX_EXACT_OUTPUT_BITS: usize = 4;

#[derive(Debug, Error)]
pub enum ExtractorError {
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("size cap exceeded: {0}")]
    Cap(String),
    #[error("width mismatch: {0}")]
    Width(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Diagram(#[from] crate::diagram::DiagramError),
}

/// `T·x` over GF(2) with `T[i][j] = seed[j − i + m − 1]`: the first row is
/// `seed[m−1..]` and the first column runs up `seed[0..m)`.
pub fn toeplitz_extract(source: &[u8], seed: &[u8], m: usize) -> Result<Vec<u8>, ExtractorError> {
    let n = source.len();
    if m == 0 || m > n {
        return Err(ExtractorError::Length(format!("output length {m} must be in 1..={n}")));
    }
    if seed.len() != n + m - 1 {
        return Err(ExtractorError::Length(format!("seed has {} bits, expected n + m − 1 = {}", seed.len(), n + m - 1)));
    }
    if source.iter().chain(seed).any(|&b| b > 1) {
        return Err(ExtractorError::Invalid("bits must be 0 or 1".into()));
    }
    Ok((0..m).map(|i| (0..n).fold(0, |acc, j| acc ^ (seed[j + m - 1 - i] & source[j]))).collect())
}

/// The Toeplitz matrix as row masks over sources of at most 64 bits.
#[derive(Clone, Debug)]
pub(crate) struct ToeplitzMasks {
    rows: Vec<u64>,
}

impl ToeplitzMasks {
    pub(crate) fn new(seed: &[u8], n: usize, m: usize) -> Self {
        assert!(n <= 64 && m <= 64 && seed.len() == n + m - 1);
        let rows = (0..m).map(|i| (0..n).fold(0u64, |acc, j| acc | ((seed[j + m - 1 - i] as u64) << (n - 1 - j)))).collect();
        ToeplitzMasks { rows }
    }

    /// Apply to a big-endian source integer, giving a big-endian output integer.
    pub(crate) fn apply(&self, x: u64) -> u64 {
        self.rows.iter().fold(0u64, |acc, r| (acc << 1) | ((r & x).count_ones() as u64 & 1))
    }
}

pub fn bits_to_index(bits: &[u8]) -> u64 {
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | (b & 1) as u64)
}

pub fn index_to_bits(mut x: u64, len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len];
    for b in out.iter_mut().rev() {
        *b = (x & 1) as u8;
        x >>= 1;
    }
    out
}

/// Parse hex into exactly `len` bits; the string must have `⌈len/4⌉` digits.
pub fn hex_to_bits(hex: &str, len: usize) -> Result<Vec<u8>, ExtractorError> {
    let hex = hex.trim().trim_start_matches("0x");
    if hex.len() != len.div_ceil(4) {
        return Err(ExtractorError::Length(format!("{len} bits need {} hex digits, got {}", len.div_ceil(4), hex.len())));
    }
    let mut bits = Vec::with_capacity(hex.len() * 4);
    for ch in hex.chars() {
        let v = ch.to_digit(16).ok_or_else(|| ExtractorError::Invalid(format!("`{ch}` is not a hex digit")))?;
        bits.extend((0..4).rev().map(|k| ((v >> k) & 1) as u8));
    }
    if bits[len..].iter().any(|&b| b != 0) {
        return Err(ExtractorError::Invalid("padding bits past the declared length must be zero".into()));
    }
    bits.truncate(len);
    Ok(bits)
}

/// Hex with the last digit zero-padded.
pub fn bits_to_hex(bits: &[u8]) -> String {
    bits.chunks(4)
        .map(|ch| {
            let v = ch.iter().enumerate().fold(0u32, |acc, (k, &b)| acc | ((b as u32) << (3 - k)));
            std::char::from_digit(v, 16).expect("nibble")
        })
        .collect()
}

/// Statistical distance between subnormalized distributions: the largest gap over events.
pub fn statistical_distance(p: &[f64], q: &[f64]) -> f64 {
    let (mut over, mut under) = (0.0, 0.0);
    for (a, b) in p.iter().zip(q) {
        if a > b {
            over += a - b;
        } else {
            under += b - a;
        }
    }
    over.max(under)
}

/// `H_min` of a classical distribution.
pub fn classical_min_entropy(p: &[f64]) -> f64 {
    -p.iter().cloned().fold(0.0, f64::max).log2()
}

/// Leftover-hash bound `½·2^{(m − H_min)/2}`, clamped at 1.
pub fn leftover_hash_bound(h_min: f64, m: usize) -> f64 {
    (0.5 * 2f64.powf((m as f64 - h_min) / 2.0)).min(1.0)
}

/// Distance of `(seed, T_seed·x)` from `(seed, uniform)`, averaged exactly over all seeds.
/// `source_dist` is indexed by the big-endian value of `x`.
pub fn extractor_distance_exact(source_dist: &[f64], n: usize, m: usize) -> Result<f64, ExtractorError> {
    if n > MAX_EXACT_SOURCE_BITS || m > MAX_EXACT_OUTPUT_BITS {
        return Err(ExtractorError::Cap(format!("enumeration is limited to n ≤ {MAX_EXACT_SOURCE_BITS}, m ≤ {MAX_EXACT_OUTPUT_BITS}")));
    }
    if m == 0 || m > n || source_dist.len() != 1 << n {
        return Err(ExtractorError::Length(format!("need 1 ≤ m ≤ n and 2^n = {} probabilities", 1usize << n)));
    }
    let seeds = 1u64 << (n + m - 1);
    let uniform = 1.0 / (1u64 << m) as f64;
    let total: f64 = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let t = ToeplitzMasks::new(&index_to_bits(s, n + m - 1), n, m);
            let mut out = vec![0.0; 1 << m];
            for (x, &p) in source_dist.iter().enumerate() {
                if p != 0.0 {
                    out[t.apply(x as u64) as usize] += p;
                }
            }
            statistical_distance(&out, &vec![uniform * source_dist.iter().sum::<f64>(); 1 << m])
        })
        .sum();
    Ok(total / seeds as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractorParams {
    /// Source bits; the classical register of the input state has `2^n` values.
    pub n: usize,
    /// Output bits.
    pub m: usize,
    /// Target exponent: the certified error is at least `2^{−e}`.
    pub e: u32,
}

impl ExtractorParams {
    pub fn seed_len(&self) -> usize {
        self.n + self.m - 1
    }
}

/// Result of extracting from a possibly subnormalized classical-quantum source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubnormalizedExtraction {
    pub format_version: u32,
    pub params: ExtractorParams,
    pub trace: f64,
    /// `Tr y < 2^{−e}`: no normalization, both sides are that small.
    pub small_trace: bool,
    /// `H_min(X|E)` of `y / Tr y`, when normalized.
    pub h_min_normalized: Option<f64>,
    /// `Tr y` times the leftover-hash bound for the normalized state.
    pub normalized_branch: Option<f64>,
    /// `2^{−e}`.
    pub small_branch: f64,
    /// The larger of the applicable branch bounds.
    pub bound: f64,
    /// Exact seed-averaged trace distance of `(seed, output, E)` from `(seed, uniform, E)`, when small enough to enumerate.
    pub exact_distance: Option<f64>,
    /// Output branches `Σ_{x : T x = z} M_x` averaged over seeds, indexed by `z`; absent past the enumeration cap.
    pub output: Option<CQState>,
}

/// Extract from `y` (classical part `2^n` values) with the case split on `Tr y` against `2^{−e}`.
pub fn extract_subnormalized(y: &CQState, params: ExtractorParams) -> Result<SubnormalizedExtraction, ExtractorError> {
    let ExtractorParams { n, m, e } = params;
    if m == 0 || m > n || n > 63 {
        return Err(ExtractorError::Length(format!("need 1 ≤ m ≤ n ≤ 63, got n = {n}, m = {m}")));
    }
    if y.classical_dim() != 1 << n {
        return Err(ExtractorError::Length(format!("state has {} classical values, expected 2^{n}", y.classical_dim())));
    }
    y.validate(1e-9).map_err(ProtocolError::from)?;
    let trace = y.trace();
    let small_branch = 2f64.powi(-(e as i32));
    let small_trace = trace < small_branch;
    let (h, normalized_branch) = if small_trace || trace <= 0.0 {
        (None, None)
    } else {
        let h = min_entropy_cq(&y.scale(1.0 / trace), 1e-9, EntropyMethod::Auto)?.h_min;
        (Some(h), Some(trace * leftover_hash_bound(h, m)))
    };
    let bound = normalized_branch.map_or(small_branch, |b| b.max(small_branch));
    let (exact_distance, output) = if n + m - 1 <= 12 && n <= MAX_EXACT_SOURCE_BITS {
        let (d, out) = exact_quantum_distance(y, n, m);
        (Some(d), Some(out))
    } else {
        (None, None)
    };
    Ok(SubnormalizedExtraction {
        format_version: FORMAT_VERSION,
        params,
        trace,
        small_trace,
        h_min_normalized: h,
        normalized_branch,
        small_branch,
        bound,
        exact_distance,
        output,
    })
}

fn exact_quantum_distance(y: &CQState, n: usize, m: usize) -> (f64, CQState) {
    let dq = y.quantum_dim();
    let seeds = 1u64 << (n + m - 1);
    let rho_e = y.branches().iter().fold(CMat::zeros(dq, dq), |acc, b| acc + b);
    let ideal = rho_e.unscale((1u64 << m) as f64);
    let per_seed: Vec<(f64, Vec<CMat>)> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let t = ToeplitzMasks::new(&index_to_bits(s, n + m - 1), n, m);
            let mut out = vec![CMat::zeros(dq, dq); 1 << m];
            for (x, b) in y.branches().iter().enumerate() {
                out[t.apply(x as u64) as usize] += b;
            }
            let d = 0.5 * out.iter().map(|o| trace_norm(&(o - &ideal))).sum::<f64>();
            (d, out)
        })
        .collect();
    let mut avg = vec![CMat::zeros(dq, dq); 1 << m];
    let mut dist = 0.0;
    for (d, out) in per_seed {
        dist += d;
        for (a, o) in avg.iter_mut().zip(out) {
            *a += o;
        }
    }
    let avg = avg.into_iter().map(|a| a.unscale(seeds as f64)).collect();
    (dist / seeds as f64, CQState::new(avg).expect("nonempty"))
}
