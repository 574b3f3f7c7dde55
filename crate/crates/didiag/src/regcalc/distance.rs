use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{c, herm_eig, herm_part, trace_norm, CMat, CVec, C64};
use super::random::gaussian_vector;
use super::{action_on_basis, choi, fmt_regs, CalcError, ProcessTensor};

/// Certified bracket `lower ≤ ½‖p1 − p2‖◇ ≤ upper`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceInterval {
    pub lower: f64,
    pub upper: f64,
}

impl DistanceInterval {
    pub fn point(x: f64) -> Self {
        DistanceInterval { lower: x, upper: x }
    }
}

/// `½‖ρ1 − ρ2‖₁` for two states on the same registers.
pub fn trace_distance_half(s1: &ProcessTensor, s2: &ProcessTensor) -> Result<f64, CalcError> {
    if !s1.is_state() || !s2.is_state() {
        return Err(CalcError::Invalid("trace_distance_half takes states".into()));
    }
    if s1.outputs() != s2.outputs() {
        return Err(CalcError::TypeMismatch { expected: fmt_regs(s1.outputs()), found: fmt_regs(s2.outputs()) });
    }
    let d = s1.density()? - s2.density()?;
    Ok(0.5 * trace_norm(&d))
}

pub const DEFAULT_RESTARTS: usize = 32;
pub const DEFAULT_SEED: u64 = 0x5eed;

pub fn process_distance(p1: &ProcessTensor, p2: &ProcessTensor) -> Result<DistanceInterval, CalcError> {
    process_distance_with(p1, p2, DEFAULT_RESTARTS, DEFAULT_SEED)
}

/// Half diamond-norm distance bracket.
///
/// The lower bound is the best value of an alternating ascent over pure inputs with an
/// ancilla as large as the input, started from the maximally entangled vector and
/// `restarts` seeded random vectors. The upper bound is half the trace norm of the
/// unnormalized Choi matrix of the difference.
pub fn process_distance_with(
    p1: &ProcessTensor,
    p2: &ProcessTensor,
    restarts: usize,
    seed: u64,
) -> Result<DistanceInterval, CalcError> {
    let diff = p1.sub(p2)?;
    if diff.is_state() {
        let d = trace_distance_half(p1, p2)?;
        return Ok(DistanceInterval::point(d));
    }
    let blocks = action_on_basis(&diff);
    let d = blocks.len();
    let upper = 0.5 * trace_norm(&choi(&diff));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = Vec::with_capacity(restarts + 1);
    let mut me = CVec::zeros(d * d);
    for i in 0..d {
        me[i * d + i] = c(1.0 / (d as f64).sqrt());
    }
    starts.push(me);
    for _ in 0..restarts {
        let v = gaussian_vector(&mut rng, d * d);
        let n = v.norm();
        starts.push(v.unscale(n));
    }
    let mut lower: f64 = 0.0;
    for psi in starts {
        lower = lower.max(ascend(&blocks, psi));
    }
    Ok(DistanceInterval { lower, upper: upper.max(lower) })
}

/// Output operator `(Δ ⊗ id)(ψψ*)` on `H_out ⊗ H_anc`.
fn output_operator(blocks: &[Vec<CMat>], psi: &CVec) -> CMat {
    let d = blocks.len();
    let e = blocks[0][0].nrows();
    let mut x = CMat::zeros(e * d, e * d);
    for i in 0..d {
        for j in 0..d {
            let blk = &blocks[i][j];
            if blk.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                continue;
            }
            for a in 0..d {
                let pa = psi[i * d + a];
                if pa == C64::new(0.0, 0.0) {
                    continue;
                }
                for b in 0..d {
                    let w = pa * psi[j * d + b].conj();
                    for o in 0..e {
                        for o2 in 0..e {
                            x[(o * d + a, o2 * d + b)] += w * blk[(o, o2)];
                        }
                    }
                }
            }
        }
    }
    x
}

fn ascend(blocks: &[Vec<CMat>], mut psi: CVec) -> f64 {
    let d = blocks.len();
    let e = blocks[0][0].nrows();
    let mut best = 0.5 * trace_norm(&output_operator(blocks, &psi));
    for _ in 0..200 {
        let x = herm_part(&output_operator(blocks, &psi));
        let (vals, vecs) = herm_eig(&x);
        let mut sign = CMat::zeros(e * d, e * d);
        for (k, v) in vals.iter().enumerate() {
            let s = if *v >= 0.0 { 1.0 } else { -1.0 };
            let col = vecs.column(k);
            sign += (col * col.adjoint()).scale(s);
        }
        // H[(j,b),(i,a)] = Σ_{o,o'} W[(o',b),(o,a)] Δ_ij[o,o']
        let mut h = CMat::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                let blk = &blocks[i][j];
                for a in 0..d {
                    for b in 0..d {
                        let mut acc = C64::new(0.0, 0.0);
                        for o in 0..e {
                            for o2 in 0..e {
                                acc += sign[(o2 * d + b, o * d + a)] * blk[(o, o2)];
                            }
                        }
                        h[(j * d + b, i * d + a)] = acc;
                    }
                }
            }
        }
        // Tr(W X(ψ)) = ψ* H ψ, maximized by the top eigenvector.
        let (hv, hvecs) = herm_eig(&h);
        let top: CVec = hvecs.column(hv.len() - 1).into_owned();
        let val = 0.5 * trace_norm(&output_operator(blocks, &top));
        psi = top;
        if val <= best + 1e-13 {
            best = best.max(val);
            break;
        }
        best = val;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regcalc::{from_kraus, identity, linalg, Register};

    fn z_channel() -> ProcessTensor {
        let q = Register::quantum(2);
        let mut z = linalg::identity(2);
        z[(1, 1)] = c(-1.0);
        from_kraus(vec![q], vec![q], &[z]).unwrap()
    }

    #[test]
    fn identical_processes_have_zero_distance() {
        let id = identity(&[Register::quantum(2)]);
        let d = process_distance(&id, &id).unwrap();
        assert_eq!(d, DistanceInterval { lower: 0.0, upper: 0.0 });
    }

    #[test]
    fn identity_vs_z_conjugation() {
        let id = identity(&[Register::quantum(2)]);
        let d = process_distance(&id, &z_channel()).unwrap();
        assert!((d.lower - 1.0).abs() < 1e-6, "{d:?}");
        assert!((d.upper - 2.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_states() {
        let q = Register::quantum(2);
        let a = ProcessTensor::from_pure(vec![q], &[c(1.0), c(0.0)]).unwrap();
        let b = ProcessTensor::from_pure(vec![q], &[c(0.0), c(1.0)]).unwrap();
        assert!((trace_distance_half(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(trace_distance_half(&a, &a).unwrap(), 0.0);
        let d = process_distance(&a, &b).unwrap();
        assert_eq!(d.lower, d.upper);
    }

    #[test]
    fn mismatched_registers_rejected() {
        let a = ProcessTensor::from_pure(vec![Register::quantum(2)], &[c(1.0), c(0.0)]).unwrap();
        let b = ProcessTensor::from_pure(vec![Register::classical(4)], &[c(1.0), c(0.0), c(0.0), c(0.0)]).unwrap();
        assert!(trace_distance_half(&a, &b).is_err());
        assert!(process_distance(&a, &b).is_err());
    }
}
