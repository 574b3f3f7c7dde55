use serde::Serialize;

use super::ProtocolError;

/// Above this many rounds the numerators no longer fit the sampler's 128-bit arithmetic.
pub const MAX_EXACT_ROUNDS: usize = 60;
/// Round counts small enough to enumerate all `8^M` sequences.
const ENUMERATE_ROUNDS: usize = 8;

/// `B_q` on `(t, a1, a2)`, index `t·4 + a1·2 + a2`: mass `1 − q` at `(0,0,0)` and `q/4` on each `t = 1` entry.
pub fn b_q_distribution(q: f64) -> Result<[f64; 8], ProtocolError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(ProtocolError::Invalid(format!("q = {q} is outside (0, 1)")));
    }
    let mut p = [0.0; 8];
    p[0] = 1.0 - q;
    for e in &mut p[4..] {
        *e = q / 4.0;
    }
    Ok(p)
}

/// The `2^ℓ`-rational approximation of `B_q^{⊗M}`: sequences with more than `2qM`
/// test rounds are dropped, the rest floored to the `2^{-ℓ}` grid.
///
/// All sequences with `j` test rounds share one probability, so the distribution is
/// stored as one numerator per `j`.
#[derive(Clone, Debug, Serialize)]
pub struct RationalB {
    pub q: f64,
    pub rounds: usize,
    /// Largest kept number of test rounds, `⌊2qM⌋`.
    pub max_tests: usize,
    pub ell: u32,
    /// `|Supp B'|` after truncation.
    pub support_size: u128,
    /// `numerators[j] = ⌊2^ℓ (1−q)^{M−j} (q/4)^j⌋`.
    pub numerators: Vec<u128>,
    /// `Σ_x 2^ℓ B(x)`, at most `2^ℓ`.
    pub total_numerator: u128,
    pub truncation_mass: f64,
    /// Mass lost to flooring.
    pub grid_mass: f64,
    /// `2^{-ℓ} |Supp B'|`.
    pub grid_bound: f64,
    /// Statistical distance to `B_q^{⊗M}`. `B` lies pointwise below it, so this is `1 − Σ B`.
    pub distance: f64,
    /// The same distance by enumerating all `8^M` sequences (`M ≤ 8`).
    pub enumerated_distance: Option<f64>,
    #[serde(skip)]
    completions: Vec<Vec<u128>>,
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Build the approximation. Requires `q ∈ (0, 1/4)` and `1 ≤ M ≤ 60`.
pub fn rational_approx(q: f64, rounds: usize) -> Result<RationalB, ProtocolError> {
    if !(q > 0.0 && q < 0.25) {
        return Err(ProtocolError::Invalid(format!("q = {q} is outside (0, 1/4)")));
    }
    if rounds == 0 || rounds > MAX_EXACT_ROUNDS {
        return Err(ProtocolError::Invalid(format!("rounds = {rounds} is outside 1..={MAX_EXACT_ROUNDS}")));
    }
    let m = rounds;
    let max_tests = ((2.0 * q * m as f64).floor() as usize).min(m);
    let support_size: u128 = (0..=max_tests).map(|j| binomial(m, j) << (2 * j)).sum();
    let ell = (q * m as f64 + (support_size as f64).log2()).ceil().max(0.0) as u32;
    if ell > 126 {
        return Err(ProtocolError::Invalid(format!("ℓ = {ell} exceeds the sampler's precision")));
    }
    let scale = 2f64.powi(ell as i32);
    let prob = |j: usize| (1.0 - q).powi((m - j) as i32) * (q / 4.0).powi(j as i32);
    let numerators: Vec<u128> = (0..=max_tests).map(|j| (scale * prob(j)).floor() as u128).collect();

    // completions[r][j]: numerator mass of all ways to finish r rounds after j tests
    let mut completions = vec![vec![0u128; max_tests + 2]; m + 1];
    completions[0][..=max_tests].copy_from_slice(&numerators);
    for r in 1..=m {
        for j in 0..=max_tests {
            completions[r][j] = completions[r - 1][j] + 4 * completions[r - 1][j + 1];
        }
    }
    let total_numerator = completions[m][0];

    let mut truncation_mass = 0.0;
    let mut grid_mass = 0.0;
    for j in 0..=m {
        let count = binomial(m, j) as f64 * 4f64.powi(j as i32);
        if j > max_tests {
            truncation_mass += count * prob(j);
        } else {
            grid_mass += count * (prob(j) - numerators[j] as f64 / scale);
        }
    }
    let mut b = RationalB {
        q,
        rounds,
        max_tests,
        ell,
        support_size,
        numerators,
        total_numerator,
        truncation_mass,
        grid_mass,
        grid_bound: support_size as f64 / scale,
        distance: 1.0 - total_numerator as f64 / scale,
        enumerated_distance: None,
        completions,
    };
    if rounds <= ENUMERATE_ROUNDS {
        b.enumerated_distance = Some(b.enumerate_distance());
    }
    Ok(b)
}

impl RationalB {
    /// `2^ℓ · B(seq)` for a sequence of `(t, a1, a2)` symbols `t·4 + a1·2 + a2`.
    pub fn numerator_of(&self, seq: &[u8]) -> u128 {
        if seq.len() != self.rounds || seq.iter().any(|&s| s > 7 || (1..4).contains(&s)) {
            return 0;
        }
        let j = seq.iter().filter(|&&s| s >= 4).count();
        self.numerators.get(j).copied().unwrap_or(0)
    }

    pub fn prob_of(&self, seq: &[u8]) -> f64 {
        self.numerator_of(seq) as f64 / 2f64.powi(self.ell as i32)
    }

    /// The deterministic map from `ℓ` uniform bits (as an integer `u < 2^ℓ`) to a
    /// sequence; `None` on the leftover mass, which the protocol treats as failure.
    pub fn sample(&self, mut u: u128) -> Option<Vec<u8>> {
        if u >= self.total_numerator {
            return None;
        }
        let mut seq = Vec::with_capacity(self.rounds);
        let mut tests = 0;
        for r in (0..self.rounds).rev() {
            let stay = self.completions[r][tests];
            if u < stay {
                seq.push(0);
                continue;
            }
            u -= stay;
            let each = self.completions[r][tests + 1];
            let k = u / each;
            debug_assert!(k < 4);
            seq.push(4 + k as u8);
            u -= k * each;
            tests += 1;
        }
        Some(seq)
    }

    /// Read `ℓ` bits, most significant first.
    pub fn sample_bits(&self, bits: &[u8]) -> Option<Vec<u8>> {
        assert_eq!(bits.len(), self.ell as usize, "sampler reads exactly ℓ bits");
        self.sample(bits.iter().fold(0u128, |acc, &b| (acc << 1) | (b & 1) as u128))
    }

    fn enumerate_distance(&self) -> f64 {
        let bq = b_q_distribution(self.q).expect("q already checked");
        let scale = 2f64.powi(self.ell as i32);
        let (mut over, mut under) = (0.0, 0.0);
        let mut seq = vec![0u8; self.rounds];
        for idx in 0..8usize.pow(self.rounds as u32) {
            let mut rest = idx;
            for s in seq.iter_mut().rev() {
                *s = (rest % 8) as u8;
                rest /= 8;
            }
            let p: f64 = seq.iter().map(|&s| bq[s as usize]).product();
            let b = self.numerator_of(&seq) as f64 / scale;
            if p > b {
                over += p - b;
            } else {
                under += b - p;
            }
        }
        over.max(under)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn b_q_entries() {
        let p = b_q_distribution(0.2).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
        assert!(p[4..].iter().all(|&x| (x - 0.05).abs() < 1e-15));
        assert!(p[1..4].iter().all(|&x| x == 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(b_q_distribution(1e-12).unwrap()[0] > 1.0 - 1e-11);
        assert!(b_q_distribution(0.0).is_err() && b_q_distribution(1.0).is_err());
    }

    #[test]
    fn single_round() {
        let b = rational_approx(0.2, 1).unwrap();
        assert_eq!(b.max_tests, 0);
        assert!((b.truncation_mass - 0.2).abs() < 1e-12);
        assert_eq!(b.ell, 1);
        assert_eq!(b.numerators, vec![1]);
        // flooring 0.8 to the 1/2 grid costs another 0.3
        assert!((b.distance - 0.5).abs() < 1e-12);
        assert!((b.enumerated_distance.unwrap() - 0.5).abs() < 1e-12);
        assert!(b.distance <= b.truncation_mass + b.grid_bound + 1e-12);
    }

    #[test]
    fn sampler_realizes_numerators() {
        let b = rational_approx(0.2, 4).unwrap();
        let mut counts = std::collections::BTreeMap::new();
        for u in 0..(1u128 << b.ell) {
            if let Some(s) = b.sample(u) {
                *counts.entry(s).or_insert(0u128) += 1;
            }
        }
        assert_eq!(counts.values().sum::<u128>(), b.total_numerator);
        for (s, n) in counts {
            assert_eq!(n, b.numerator_of(&s), "{s:?}");
        }
    }

    #[test]
    fn four_rounds_within_proof_bound() {
        let b = rational_approx(0.2, 4).unwrap();
        let d = b.enumerated_distance.unwrap();
        assert!((d - b.distance).abs() < 1e-12);
        assert!(d <= b.truncation_mass + b.grid_bound + 1e-12);
        assert!(b.grid_bound <= 2f64.powf(-0.2 * 4.0) + 1e-12);
    }

    #[test]
    fn range_errors() {
        assert!(rational_approx(0.25, 3).is_err());
        assert!(rational_approx(0.1, 0).is_err());
        assert!(rational_approx(0.1, MAX_EXACT_ROUNDS + 1).is_err());
        assert!(rational_approx(0.2, MAX_EXACT_ROUNDS).is_ok());
    }
}
