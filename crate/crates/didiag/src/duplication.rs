//! Duplicate states of classical-quantum states.
//!
//! A duplicate of `Ψ = Σ_i |i⟩⟨i| ⊗ M_i` lives on `C Q Q C` and has the form
//! `Σ_i |i⟩⟨i| ⊗ ψ_i ψ_i* ⊗ |i⟩⟨i|` with `ψ_i` a purification of `M_i`. The canonical one
//! takes `ψ_i = Vec √M_i`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::regcalc::linalg::{c, complement_basis, herm_eig, herm_fn, CMat, CVec};
use crate::regcalc::random::{random_density, random_unitary};
use crate::regcalc::{compose_seq, embed_at, from_kraus, partial_discard, trace_distance_half, CQState, CalcError, ProcessTensor, Register};

/// Eigenvalues in `[-CLAMP, 0]` are treated as zero when taking square roots.
pub const CLAMP: f64 = 1e-10;

/// `√m` for a PSD `m`; fails on eigenvalues below `-tol`.
pub fn psd_sqrt_checked(m: &CMat, tol: f64) -> Result<CMat, CalcError> {
    let (vals, _) = herm_eig(m);
    if let Some(&min) = vals.first() {
        if min < -tol {
            return Err(CalcError::NotPositive(min));
        }
    }
    Ok(herm_fn(m, |x| x.max(0.0).sqrt()))
}

/// Row-major vectorization `Σ_ij x_ij |i⟩⊗|j⟩`.
pub fn vec_of(x: &CMat) -> CVec {
    CVec::from_fn(x.nrows() * x.ncols(), |k, _| x[(k / x.ncols(), k % x.ncols())])
}

/// Inverse of [`vec_of`] for an `rows × cols` matrix.
pub fn unvec(v: &CVec, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |i, j| v[i * cols + j])
}

#[derive(Clone, Debug, PartialEq)]
pub struct DuplicateState {
    pub source: CQState,
    /// `ψ_i` on `V ⊗ V`, index `a·n + b`.
    pub branches: Vec<CVec>,
    /// The state on `[C, Q, Q, C]`.
    pub state: ProcessTensor,
}

/// Registers of a duplicate of `src`.
pub fn layout(src: &CQState) -> Vec<Register> {
    let (cl, q) = (Register::classical(src.classical_dim()), Register::quantum(src.quantum_dim()));
    vec![cl, q, q, cl]
}

impl DuplicateState {
    /// Assemble `Σ_i |i⟩⟨i| ⊗ ψ_i ψ_i* ⊗ |i⟩⟨i|`. No marginal check is made.
    pub fn from_branches(source: CQState, branches: Vec<CVec>) -> Result<Self, CalcError> {
        let (cd, n) = (source.classical_dim(), source.quantum_dim());
        if branches.len() != cd || branches.iter().any(|v| v.len() != n * n) {
            return Err(CalcError::Dimension(format!("expected {cd} branches of length {}", n * n)));
        }
        let block = n * n * cd;
        let mut rho = CMat::zeros(cd * block, cd * block);
        for (i, v) in branches.iter().enumerate() {
            let pp = v * v.adjoint();
            for a in 0..n * n {
                for b in 0..n * n {
                    rho[(i * block + a * cd + i, i * block + b * cd + i)] = pp[(a, b)];
                }
            }
        }
        let state = ProcessTensor::from_density(layout(&source), &rho)?;
        Ok(DuplicateState { source, branches, state })
    }

    /// Apply `U_i` to the second quantum register of branch `i`.
    pub fn rotated(&self, unitaries: &[CMat]) -> Result<Self, CalcError> {
        let n = self.source.quantum_dim();
        let branches = self
            .branches
            .iter()
            .zip(unitaries)
            .map(|(v, u)| vec_of(&(unvec(v, n, n) * u.transpose())))
            .collect();
        Self::from_branches(self.source.clone(), branches)
    }
}

pub fn canonical_duplicate(psi: &CQState) -> Result<DuplicateState, CalcError> {
    let branches = psi.branches().iter().map(|m| psd_sqrt_checked(m, CLAMP).map(|r| vec_of(&r))).collect::<Result<_, _>>()?;
    DuplicateState::from_branches(psi.clone(), branches)
}

/// Half trace distance between the left `C Q` marginal of `d` and its source.
pub fn verify_marginal(d: &DuplicateState) -> Result<f64, CalcError> {
    let marginal = partial_discard(&d.state, &[2, 3])?;
    trace_distance_half(&marginal, &d.source.to_state())
}

/// An isometry `V` with `(I ⊗ V) Vec x = Vec y`, where `x x† = y y†`. `x` is `n × k`, `y`
/// is `n × m` with `m ≥ k`; the result is `m × k`. Off the support of `x` the map is
/// completed arbitrarily.
pub fn purification_isometry(x: &CMat, y: &CMat, tol: f64) -> Result<CMat, CalcError> {
    let (k, m) = (x.ncols(), y.ncols());
    if x.nrows() != y.nrows() || m < k {
        return Err(CalcError::Dimension(format!("cannot map a {k}-dim purifying system into {m} dims")));
    }
    let mx = x * x.adjoint();
    let my = y * y.adjoint();
    let scale = mx.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if crate::regcalc::linalg::max_abs_diff(&mx, &my) > tol * scale {
        return Err(CalcError::Invalid("the two purifications have different marginals".into()));
    }
    let cut = 1e-12 * scale;
    let inv = herm_fn(&mx, |v| if v > cut { 1.0 / v.sqrt() } else { 0.0 });
    let wx = &inv * x;
    let wy = &inv * y;
    // V^T = Wx† Wy on the support
    let v0 = (wx.adjoint() * &wy).transpose();
    let support = herm_fn(&(v0.adjoint() * &v0), |v| if v > 0.5 { 1.0 } else { 0.0 });
    let kernel = complement_basis(&orthonormal_columns(&support), 0.5);
    let free = complement_basis(&orthonormal_columns(&(&v0 * v0.adjoint())), 0.5);
    let mut v = v0;
    for j in 0..kernel.ncols() {
        v += free.column(j) * kernel.column(j).adjoint();
    }
    Ok(v)
}

/// Orthonormal basis of the range of a projector.
fn orthonormal_columns(p: &CMat) -> CMat {
    let (vals, vecs) = herm_eig(p);
    let cols: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 0.5).collect();
    CMat::from_fn(p.nrows(), cols.len(), |r, j| vecs[(r, cols[j])])
}

/// Block `i` of the classical first register of a density operator.
fn classical_block(rho: &CMat, cd: usize, i: usize) -> CMat {
    let b = rho.nrows() / cd;
    rho.view((i * b, i * b), (b, b)).into_owned()
}

/// `Vec` of a purification of `m` (on `A ⊗ B` with `dim A = a`), as an `a × (b·r)` matrix.
fn purify(m: &CMat, a: usize) -> CMat {
    let (vals, vecs) = herm_eig(m);
    let r = vals.len();
    let b = m.nrows() / a;
    CMat::from_fn(a, b * r, |row, col| {
        let (x, k) = (col / r, col % r);
        vecs[(row * b + x, k)] * c(vals[k].max(0.0).sqrt())
    })
}

/// Causal `Q C -> R D` process from branch Kraus families `V_i` (each `(rd·e) × n`).
fn controlled_process(q: Register, cl: Register, r_out: &[Register], isos: &[CMat], e: usize) -> Result<ProcessTensor, CalcError> {
    let n = q.base_dim;
    let cd = cl.base_dim;
    let rd: usize = crate::regcalc::hilbert_dim(r_out);
    let mut kraus = Vec::new();
    for (i, v) in isos.iter().enumerate() {
        for k in 0..e {
            let mut kop = CMat::zeros(rd, n * cd);
            for x in 0..rd {
                for a in 0..n {
                    kop[(x, a * cd + i)] = v[(x * e + k, a)];
                }
            }
            kraus.push(kop);
        }
    }
    from_kraus(vec![q, cl], r_out.to_vec(), &kraus)
}

/// Registers of `phi` must be `[C, Q, R..., D...]` with `C, Q` matching the duplicate.
fn split_extension<'a>(phi: &'a ProcessTensor, d: &DuplicateState) -> Result<&'a [Register], CalcError> {
    let regs = phi.outputs();
    let want = &layout(&d.source)[..2];
    if !phi.is_state() || regs.len() < 2 || regs[..2] != *want {
        return Err(CalcError::TypeMismatch { expected: crate::regcalc::fmt_regs(want), found: crate::regcalc::fmt_regs(regs) });
    }
    Ok(&regs[2..])
}

/// Apply a `Q C -> ...` process to the right half of a duplicate.
pub fn apply_right(d: &DuplicateState, alpha: &ProcessTensor) -> Result<ProcessTensor, CalcError> {
    let regs = layout(&d.source);
    compose_seq(&d.state, &embed_at(&regs, 2, alpha)?)
}

/// The causal process `α : Q C -> R D` with `(id ⊗ α) d = phi`, where `phi` extends the
/// source of `d`. `d` may be any duplicate, not only the canonical one.
pub fn universality_alpha(phi: &ProcessTensor, d: &DuplicateState, tol: f64) -> Result<ProcessTensor, CalcError> {
    let rest = split_extension(phi, d)?;
    let marginal = partial_discard(phi, &(2..phi.outputs().len()).collect::<Vec<_>>())?;
    let gap = trace_distance_half(&marginal, &d.source.to_state())?;
    if gap > tol {
        return Err(CalcError::Invalid(format!("marginal of the extension is {gap:e} away from the source")));
    }
    let (cd, n) = (d.source.classical_dim(), d.source.quantum_dim());
    let rho = phi.density()?;
    let rd = crate::regcalc::hilbert_dim(rest);
    let e = n * rd;
    let mut isos = Vec::with_capacity(cd);
    for (i, psi) in d.branches.iter().enumerate() {
        let y = purify(&classical_block(&rho, cd, i), n);
        // y is n × (rd·e); the purifying system of the duplicate is the second copy of V
        let x = unvec(psi, n, n);
        isos.push(purification_isometry(&x, &y, tol.max(1e-6))?);
    }
    controlled_process(Register::quantum(n), Register::classical(cd), rest, &isos, e)
}

/// A controlled unitary on the right `Q C` taking duplicate `from` to duplicate `to`.
pub fn controlled_unitary(from: &DuplicateState, to: &DuplicateState, tol: f64) -> Result<ProcessTensor, CalcError> {
    if from.source.classical_dim() != to.source.classical_dim() || from.source.quantum_dim() != to.source.quantum_dim() {
        return Err(CalcError::Dimension("duplicates of different shapes".into()));
    }
    let n = from.source.quantum_dim();
    let q = Register::quantum(n);
    let cl = Register::classical(from.source.classical_dim());
    let isos = from
        .branches
        .iter()
        .zip(&to.branches)
        .map(|(a, b)| purification_isometry(&unvec(a, n, n), &unvec(b, n, n), tol))
        .collect::<Result<Vec<_>, _>>()?;
    // Kraus operators V_i ⊗ |i⟩⟨i|
    let cd = cl.base_dim;
    let kraus: Vec<CMat> = isos
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut k = CMat::zeros(n * cd, n * cd);
            for a in 0..n {
                for b in 0..n {
                    k[(a * cd + i, b * cd + i)] = v[(a, b)];
                }
            }
            k
        })
        .collect();
    from_kraus(vec![q, cl], vec![q, cl], &kraus)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityTrial {
    /// `½‖Ψ − Φ‖₁`, the `ε` of `Ψ =_ε Φ`.
    pub eps: f64,
    /// `½‖Ψ' − Φ'‖₁`.
    pub duplicate_distance: f64,
    /// `‖Ψ' − Φ'‖₁`.
    pub duplicate_trace_norm: f64,
    /// `√(2ε)`, the bound in the same half-trace units as `eps`.
    pub bound: f64,
    /// `√(2·2ε)`, the bound read with `ε` in raw trace-norm units.
    pub bound_raw: f64,
    pub margin: f64,
    pub holds: bool,
}

pub fn check_duplicate_stability(psi: &CQState, phi: &CQState) -> Result<StabilityTrial, CalcError> {
    let eps = trace_distance_half(&psi.to_state(), &phi.to_state())?;
    let dd = trace_distance_half(&canonical_duplicate(psi)?.state, &canonical_duplicate(phi)?.state)?;
    let bound = (2.0 * eps).sqrt();
    Ok(StabilityTrial {
        eps,
        duplicate_distance: dd,
        duplicate_trace_norm: 2.0 * dd,
        bound,
        bound_raw: (4.0 * eps).sqrt(),
        margin: bound - dd,
        holds: dd <= bound + 1e-12,
    })
}

/// Random normalized CQ state with `cd` branches on a `n`-dimensional space.
pub fn random_cq(rng: &mut impl Rng, cd: usize, n: usize) -> CQState {
    let weights: Vec<f64> = (0..cd).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let branches = weights
        .iter()
        .map(|w| {
            let rank = rng.gen_range(1..=n);
            random_density(rng, n, rank).scale(w / total)
        })
        .collect();
    CQState::new(branches).expect("branches share a shape")
}

/// A state exactly `eps` away from `psi` (in half trace distance), on the segment towards
/// a random state. `eps` must not exceed the distance to that random state.
pub fn perturb(rng: &mut impl Rng, psi: &CQState, eps: f64) -> Result<CQState, CalcError> {
    for _ in 0..64 {
        let sigma = random_cq(rng, psi.classical_dim(), psi.quantum_dim());
        let d = trace_distance_half(&psi.to_state(), &sigma.to_state())?;
        if d > eps {
            let t = eps / d;
            let branches = psi.branches().iter().zip(sigma.branches()).map(|(a, b)| a.scale(1.0 - t) + b.scale(t)).collect();
            return CQState::new(branches);
        }
    }
    Err(CalcError::Invalid(format!("could not find a state {eps} away")))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub classical_dim: usize,
    pub quantum_dim: usize,
    pub target_eps: f64,
    pub seed: u64,
    pub trials: Vec<StabilityTrial>,
    pub all_hold: bool,
}

/// `trials` seeded random pairs at distance `eps`; trial `t` uses seed `seed + t`.
pub fn stability_trials(cd: usize, n: usize, eps: f64, trials: usize, seed: u64) -> Result<StabilityReport, CalcError> {
    let trials = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let psi = random_cq(&mut rng, cd, n);
            let phi = perturb(&mut rng, &psi, eps)?;
            check_duplicate_stability(&psi, &phi)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let all_hold = trials.iter().all(|t| t.holds);
    Ok(StabilityReport { classical_dim: cd, quantum_dim: n, target_eps: eps, seed, trials, all_hold })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorollaryCheck {
    /// `ε` between the `C Q` marginal of `phi` and the duplicate's source.
    pub eps: f64,
    /// `½‖Φ − (id ⊗ α) Ψ''‖₁`.
    pub distance: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Build `α` for an extension `phi` of a state close to the source of `dup`: route
/// through the canonical duplicate of the source, then through the canonical duplicate
/// of `phi`'s marginal, where universality is exact.
pub fn corollary_alpha(phi: &ProcessTensor, dup: &DuplicateState) -> Result<(ProcessTensor, CorollaryCheck), CalcError> {
    split_extension(phi, dup)?;
    let marginal = CQState::from_state(&partial_discard(phi, &(2..phi.outputs().len()).collect::<Vec<_>>())?)?;
    let eps = trace_distance_half(&marginal.to_state(), &dup.source.to_state())?;
    let sigma = canonical_duplicate(&marginal)?;
    let alpha = universality_alpha(phi, &sigma, 1e-9)?;
    let canon = canonical_duplicate(&dup.source)?;
    let back = controlled_unitary(dup, &canon, 1e-6)?;
    let alpha = compose_seq(&back, &alpha)?;
    let distance = trace_distance_half(phi, &apply_right(dup, &alpha)?)?;
    let bound = (2.0 * eps).sqrt();
    Ok((alpha, CorollaryCheck { eps, distance, bound, holds: distance <= bound + 1e-6 }))
}

/// Random controlled unitaries, one per classical value.
pub fn random_controlled(rng: &mut impl Rng, cd: usize, n: usize) -> Vec<CMat> {
    (0..cd).map(|_| random_unitary(rng, n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regcalc::random::random_state;
    use crate::regcalc::structural_predicates;

    fn rng(s: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(s)
    }

    #[test]
    fn classical_source_is_copied() {
        let p = CQState::classical(&[0.3, 0.7]).unwrap();
        let d = canonical_duplicate(&p).unwrap();
        let v = d.state.matrix().column(0);
        // [C2, Q1, Q1, C2]: only |0..0⟩ and |1..1⟩ are populated
        assert!((v[0].re - 0.3).abs() < 1e-12 && (v[3].re - 0.7).abs() < 1e-12);
        assert!(v[1].norm() < 1e-12 && v[2].norm() < 1e-12);
    }

    #[test]
    fn maximally_mixed_qubit_gives_bell_vector() {
        let s = CQState::new(vec![CMat::identity(2, 2).scale(0.5)]).unwrap();
        let d = canonical_duplicate(&s).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let want = [h, 0.0, 0.0, h];
        for (x, w) in d.branches[0].iter().zip(want) {
            assert!((x.re - w).abs() < 1e-12 && x.im.abs() < 1e-12);
        }
    }

    #[test]
    fn pure_branch_gives_v_tensor_conjugate() {
        let mut r = rng(3);
        let v = crate::regcalc::random::random_unit_vector(&mut r, 2);
        let s = CQState::new(vec![&v * v.adjoint()]).unwrap();
        let d = canonical_duplicate(&s).unwrap();
        let want = v.kronecker(&v.map(|z| z.conj()));
        let overlap = (d.branches[0].adjoint() * &want)[(0, 0)].norm();
        assert!((overlap - 1.0).abs() < 1e-9, "{overlap}");
    }

    #[test]
    fn non_psd_branch_rejected() {
        let mut m = CMat::identity(2, 2);
        m[(1, 1)] = c(-0.1);
        let s = CQState::new(vec![m]).unwrap();
        assert!(matches!(canonical_duplicate(&s), Err(CalcError::NotPositive(_))));
    }

    #[test]
    fn marginals() {
        let mut r = rng(5);
        let d = canonical_duplicate(&random_cq(&mut r, 2, 3)).unwrap();
        assert!(verify_marginal(&d).unwrap() < 1e-9);
        let mut bad = d.branches.clone();
        bad[0] = bad[0].scale(0.5);
        let bad = DuplicateState::from_branches(d.source.clone(), bad).unwrap();
        assert!(verify_marginal(&bad).unwrap() > 1e-3);
        let pure = CQState::new(vec![CMat::from_fn(2, 2, |i, j| c(if i == 0 && j == 0 { 1.0 } else { 0.0 }))]).unwrap();
        assert_eq!(verify_marginal(&canonical_duplicate(&pure).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn self_extension_gives_identity_like_alpha() {
        let mut r = rng(8);
        let d = canonical_duplicate(&random_cq(&mut r, 2, 2)).unwrap();
        let alpha = universality_alpha(&d.state, &d, 1e-9).unwrap();
        assert!(trace_distance_half(&apply_right(&d, &alpha).unwrap(), &d.state).unwrap() < 1e-9);
        assert!(structural_predicates(&alpha, 1e-9).causal);
    }

    #[test]
    fn product_extension_reproduced() {
        let mut r = rng(9);
        let src = random_cq(&mut r, 2, 2);
        let extra = random_state(&mut r, &[Register::quantum(2), Register::classical(2)], 1).unwrap();
        let phi = crate::regcalc::compose_par(&src.to_state(), &extra);
        let d = canonical_duplicate(&src).unwrap();
        let alpha = universality_alpha(&phi, &d, 1e-9).unwrap();
        assert!(trace_distance_half(&apply_right(&d, &alpha).unwrap(), &phi).unwrap() <= 1e-6);
    }

    #[test]
    fn marginal_mismatch_rejected() {
        let mut r = rng(10);
        let d = canonical_duplicate(&random_cq(&mut r, 2, 2)).unwrap();
        let other = canonical_duplicate(&random_cq(&mut r, 2, 2)).unwrap();
        assert!(universality_alpha(&other.state, &d, 1e-6).is_err());
    }

    #[test]
    fn classical_pair_distance_is_eps() {
        let a = CQState::classical(&[0.5, 0.3, 0.2]).unwrap();
        let b = CQState::classical(&[0.4, 0.3, 0.3]).unwrap();
        let t = check_duplicate_stability(&a, &b).unwrap();
        assert!((t.eps - 0.1).abs() < 1e-12);
        assert!((t.duplicate_distance - t.eps).abs() < 1e-12);
        assert!(t.holds);
    }

    #[test]
    fn equal_states_have_equal_duplicates() {
        let mut r = rng(11);
        let a = random_cq(&mut r, 2, 2);
        assert!(check_duplicate_stability(&a, &a).unwrap().duplicate_distance < 1e-12);
    }

    #[test]
    fn perturb_hits_eps() {
        let mut r = rng(12);
        let a = random_cq(&mut r, 2, 3);
        let b = perturb(&mut r, &a, 0.05).unwrap();
        assert!((trace_distance_half(&a.to_state(), &b.to_state()).unwrap() - 0.05).abs() < 1e-9);
    }
}
