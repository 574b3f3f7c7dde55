use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::regcalc::linalg::{c, herm_eigenvalues, herm_part, pos_part, psd_inv_sqrt, trace, trace_norm, CMat};
use crate::regcalc::{CQState, FORMAT_VERSION};

pub const MAX_ITERATIONS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyMethod {
    /// Pick the closed form when one applies.
    Auto,
    /// All branches diagonal: `p_guess = Σ_j max_i (M_i)_jj`.
    Diagonal,
    /// Two branches: `p_guess = ½(Tr M₀ + Tr M₁ + ‖M₀ − M₁‖₁)`.
    Helstrom,
    /// Fixed-point POVM iteration with a dual certificate.
    Iterative,
}

/// Guessing probability bounds and the certificate `σ ⪰ M_i` behind the upper one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinEntropyReport {
    pub format_version: u32,
    pub method: EntropyMethod,
    /// `−log₂ Tr σ`, a certified lower bound on `H_min(C|Q)`.
    pub h_min: f64,
    /// `−log₂` of the achieved guessing probability.
    pub h_min_upper: f64,
    pub p_guess_lower: f64,
    pub p_guess_upper: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest violation of `σ − M_i ⪰ 0` over all branches.
    pub certificate_violation: f64,
    pub quantum_dim: usize,
    /// Row-major `[re, im]` entries of `σ`.
    pub sigma: Vec<[f64; 2]>,
}

fn is_diagonal(m: &CMat) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)].norm() <= 1e-14))
}

/// Bounds on `min { Tr σ : σ ⪰ M_i ∀i }` and the resulting min-entropy.
pub fn min_entropy_cq(psi: &CQState, tol: f64, method: EntropyMethod) -> Result<MinEntropyReport, ProtocolError> {
    psi.validate(1e-9)?;
    if psi.trace() <= 0.0 {
        return Err(ProtocolError::Invalid("the state has zero trace".into()));
    }
    let ms: Vec<CMat> = psi.branches().iter().map(herm_part).collect();
    let method = match method {
        EntropyMethod::Auto if ms.iter().all(is_diagonal) => EntropyMethod::Diagonal,
        EntropyMethod::Auto if ms.len() == 2 => EntropyMethod::Helstrom,
        EntropyMethod::Auto => EntropyMethod::Iterative,
        m => m,
    };
    let n = psi.quantum_dim();
    let (sigma, lower, iterations, converged) = match method {
        EntropyMethod::Diagonal => {
            if !ms.iter().all(is_diagonal) {
                return Err(ProtocolError::Invalid("branches are not diagonal".into()));
            }
            let mut s = CMat::zeros(n, n);
            for j in 0..n {
                s[(j, j)] = c(ms.iter().map(|m| m[(j, j)].re).fold(f64::NEG_INFINITY, f64::max));
            }
            let p = trace(&s).re;
            (s, p, 0, true)
        }
        EntropyMethod::Helstrom => {
            if ms.len() != 2 {
                return Err(ProtocolError::Invalid("the closed form needs exactly two branches".into()));
            }
            let p = 0.5 * (trace(&ms[0]).re + trace(&ms[1]).re + trace_norm(&(&ms[0] - &ms[1])));
            (&ms[0] + pos_part(&(&ms[1] - &ms[0])), p, 0, true)
        }
        _ => iterate(&ms, tol),
    };
    let upper = trace(&sigma).re;
    let violation = ms.iter().map(|m| (-herm_eigenvalues(&(&sigma - m))[0]).max(0.0)).fold(0.0, f64::max);
    Ok(MinEntropyReport {
        format_version: FORMAT_VERSION,
        method,
        h_min: -upper.log2(),
        h_min_upper: -lower.log2(),
        p_guess_lower: lower,
        p_guess_upper: upper,
        gap: upper - lower,
        iterations,
        converged,
        certificate_violation: violation,
        quantum_dim: n,
        sigma: (0..n * n).map(|k| [sigma[(k / n, k % n)].re, sigma[(k / n, k % n)].im]).collect(),
    })
}

/// Feasible `σ` from the candidate `Y = Σ M_i E_i`: the cheaper of `Y + t·I` and `Y + Σ(M_i − Y)₊`.
fn certificate(ms: &[CMat], y: &CMat) -> CMat {
    let n = y.nrows();
    let excess: Vec<CMat> = ms.iter().map(|m| pos_part(&(m - y))).collect();
    let t = ms.iter().map(|m| herm_eigenvalues(&(m - y))[n - 1].max(0.0)).fold(0.0, f64::max);
    let summed = excess.iter().fold(y.clone(), |acc, e| acc + e);
    if t * n as f64 <= trace(&summed).re - trace(y).re {
        y + CMat::identity(n, n).scale(t)
    } else {
        summed
    }
}

/// `E_i ← G^{-1/2} M_i E_i M_i G^{-1/2}`, `G = Σ_j M_j E_j M_j`, from the pretty-good measurement.
fn iterate(ms: &[CMat], tol: f64) -> (CMat, f64, usize, bool) {
    let cut = 1e-14;
    let total = ms.iter().fold(CMat::zeros(ms[0].nrows(), ms[0].nrows()), |acc, m| acc + m);
    let g = psd_inv_sqrt(&total, cut);
    let mut es: Vec<CMat> = ms.iter().map(|m| &g * m * &g).collect();
    let mut best = (CMat::zeros(0, 0), f64::INFINITY);
    let mut lower = 0.0f64;
    for it in 1..=MAX_ITERATIONS {
        let y = herm_part(&ms.iter().zip(&es).fold(CMat::zeros(ms[0].nrows(), ms[0].nrows()), |acc, (m, e)| acc + m * e));
        lower = lower.max(trace(&y).re);
        let sigma = certificate(ms, &y);
        let upper = trace(&sigma).re;
        if upper < best.1 {
            best = (sigma, upper);
        }
        if best.1 - lower <= tol {
            return (best.0, lower, it, true);
        }
        let grams: Vec<CMat> = ms.iter().zip(&es).map(|(m, e)| m * e * m).collect();
        let g = psd_inv_sqrt(&herm_part(&grams.iter().fold(CMat::zeros(ms[0].nrows(), ms[0].nrows()), |acc, x| acc + x)), cut);
        es = grams.iter().map(|x| herm_part(&(&g * x * &g))).collect();
    }
    (best.0, lower, MAX_ITERATIONS, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regcalc::random::random_density;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> CMat {
        CMat::from_fn(v.len(), v.len(), |i, j| c(if i == j { v[i] } else { 0.0 }))
    }

    #[test]
    fn orthogonal_branches() {
        let s = CQState::new(vec![diag(&[0.5, 0.0]), diag(&[0.0, 0.5])]).unwrap();
        for m in [EntropyMethod::Auto, EntropyMethod::Helstrom, EntropyMethod::Iterative] {
            let r = min_entropy_cq(&s, 1e-9, m).unwrap();
            assert!((r.p_guess_upper - 1.0).abs() < 1e-8 && r.h_min.abs() < 1e-8, "{m:?} {r:?}");
        }
    }

    #[test]
    fn independent_uniform_bit() {
        let s = CQState::new(vec![diag(&[0.25, 0.25]), diag(&[0.25, 0.25])]).unwrap();
        let r = min_entropy_cq(&s, 1e-9, EntropyMethod::Auto).unwrap();
        assert_eq!(r.method, EntropyMethod::Diagonal);
        assert!((r.h_min - 1.0).abs() < 1e-12);
        let r = min_entropy_cq(&s, 1e-9, EntropyMethod::Helstrom).unwrap();
        assert!((r.h_min - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iteration_agrees_with_helstrom() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let s = CQState::new(vec![random_density(&mut rng, 3, 3).scale(0.4), random_density(&mut rng, 3, 2).scale(0.6)]).unwrap();
            let exact = min_entropy_cq(&s, 1e-9, EntropyMethod::Helstrom).unwrap();
            let it = min_entropy_cq(&s, 1e-7, EntropyMethod::Iterative).unwrap();
            assert!(it.converged, "{it:?}");
            assert!(it.p_guess_lower <= exact.p_guess_upper + 1e-9 && exact.p_guess_upper <= it.p_guess_upper + 1e-9);
            assert!(it.certificate_violation <= 1e-8);
        }
    }

    #[test]
    fn zero_state_is_rejected() {
        let s = CQState::new(vec![diag(&[0.0]), diag(&[0.0])]).unwrap();
        assert!(min_entropy_cq(&s, 1e-6, EntropyMethod::Auto).is_err());
    }
}
