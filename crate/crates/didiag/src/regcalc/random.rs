//! Seeded random instances: vectors, unitaries, densities and channels.

use rand::Rng;
use rand_distr::StandardNormal;

use super::linalg::{c, CMat, CVec, C64};
use super::{from_kraus, hilbert_dim, CalcError, ProcessTensor, Register};

pub fn gaussian(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_vector(rng: &mut impl Rng, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| gaussian(rng))
}

pub fn gaussian_matrix(rng: &mut impl Rng, r: usize, cols: usize) -> CMat {
    CMat::from_fn(r, cols, |_, _| gaussian(rng))
}

/// Haar-random isometry `C^cols → C^rows` (`rows ≥ cols`).
pub fn random_isometry(rng: &mut impl Rng, rows: usize, cols: usize) -> CMat {
    assert!(rows >= cols, "isometry needs rows ≥ cols");
    let g = gaussian_matrix(rng, rows, cols);
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut out = q.columns(0, cols).into_owned();
    for k in 0..cols {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0) };
        let col = out.column(k) * phase;
        out.set_column(k, &col);
    }
    out
}

pub fn random_unitary(rng: &mut impl Rng, n: usize) -> CMat {
    random_isometry(rng, n, n)
}

pub fn random_unit_vector(rng: &mut impl Rng, n: usize) -> CVec {
    let v = gaussian_vector(rng, n);
    let norm = v.norm();
    v.unscale(norm)
}

/// Random density operator of the given rank, trace one.
pub fn random_density(rng: &mut impl Rng, n: usize, rank: usize) -> CMat {
    let g = gaussian_matrix(rng, n, rank.max(1));
    let m = &g * g.adjoint();
    let t = super::linalg::trace(&m).re;
    m.unscale(t)
}

/// Random causal process between register lists (Stinespring dilation with `env` Kraus operators).
pub fn random_channel(rng: &mut impl Rng, inputs: &[Register], outputs: &[Register], env: usize) -> Result<ProcessTensor, CalcError> {
    let hin = hilbert_dim(inputs);
    let hout = hilbert_dim(outputs);
    let env = env.max(hin.div_ceil(hout)).max(1);
    let v = random_isometry(rng, hout * env, hin);
    let kraus: Vec<CMat> = (0..env)
        .map(|k| CMat::from_fn(hout, hin, |r, col| v[(r * env + k, col)]))
        .collect();
    from_kraus(inputs.to_vec(), outputs.to_vec(), &kraus)
}

/// Random stochastic (trace non-increasing) process: a channel scaled into `[lo, 1]`.
pub fn random_stochastic(rng: &mut impl Rng, inputs: &[Register], outputs: &[Register], lo: f64) -> Result<ProcessTensor, CalcError> {
    let ch = random_channel(rng, inputs, outputs, 2)?;
    let s: f64 = rng.gen_range(lo..=1.0);
    Ok(ch.scale(c(s)))
}

/// Random normalized state on `regs`.
pub fn random_state(rng: &mut impl Rng, regs: &[Register], rank: usize) -> Result<ProcessTensor, CalcError> {
    let rho = random_density(rng, hilbert_dim(regs), rank);
    ProcessTensor::from_density(regs.to_vec(), &rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regcalc::structural_predicates;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn isometry_columns_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_isometry(&mut rng, 5, 3);
        let g = v.adjoint() * &v;
        assert!(super::super::linalg::max_abs_diff(&g, &CMat::identity(3, 3)) < 1e-12);
    }

    #[test]
    fn random_channels_are_causal_and_cp() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = Register::quantum(2);
        let cl = Register::classical(3);
        let ch = random_channel(&mut rng, &[q, cl], &[cl, q], 2).unwrap();
        let f = structural_predicates(&ch, 1e-9);
        assert!(f.causal && f.stochastic && f.completely_positive);
    }
}
