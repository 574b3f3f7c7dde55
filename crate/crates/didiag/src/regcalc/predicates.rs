use serde::{Deserialize, Serialize};

use super::linalg::{anti_herm_norm, herm_eigenvalues, CMat};
use super::{choi, compose_seq, discard_all, vec_to_operator, ProcessTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicates {
    pub causal: bool,
    pub stochastic: bool,
    pub pure_state: bool,
    pub pure_process: bool,
    pub completely_positive: bool,
    pub effect_valid: bool,
}

/// The operator `G` with `discard ∘ p (ρ) = Tr(G ρ)`.
pub(crate) fn effect_operator(p: &ProcessTensor) -> CMat {
    let f = compose_seq(p, &discard_all(p.outputs())).expect("discard matches outputs");
    vec_to_operator(p.inputs(), f.matrix().row(0).iter().copied()).transpose()
}

pub fn structural_predicates(p: &ProcessTensor, tol: f64) -> Predicates {
    let f = compose_seq(p, &discard_all(p.outputs())).expect("discard matches outputs");
    let d_in = discard_all(p.inputs());
    let causal = f.max_abs_diff(&d_in) <= tol;

    let g = effect_operator(p);
    let g_herm = anti_herm_norm(&g) <= tol;
    let g_eigs = herm_eigenvalues(&g);
    let g_max = g_eigs.last().copied().unwrap_or(0.0);
    let g_min = g_eigs.first().copied().unwrap_or(0.0);
    let stochastic = g_herm && g_max <= 1.0 + tol;
    let effect_valid = p.outputs().is_empty() && g_herm && g_min >= -tol && g_max <= 1.0 + tol;

    let j = choi(p);
    let j_herm = anti_herm_norm(&j) <= tol;
    let j_eigs = herm_eigenvalues(&j);
    let completely_positive = j_herm && j_eigs.first().is_none_or(|&m| m >= -tol);
    let second = if j_eigs.len() >= 2 { j_eigs[j_eigs.len() - 2] } else { 0.0 };
    let pure_process = completely_positive && second <= tol;

    let pure_state = p.is_state() && {
        let rho = p.density().expect("state");
        let eigs = herm_eigenvalues(&rho);
        let top = eigs.last().copied().unwrap_or(0.0);
        anti_herm_norm(&rho) <= tol
            && (top - 1.0).abs() <= tol
            && eigs[..eigs.len() - 1].iter().all(|e| e.abs() <= tol)
    };

    Predicates { causal, stochastic, pure_state, pure_process, completely_positive, effect_valid }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regcalc::linalg::{c, C64};
    use crate::regcalc::{discard, from_kraus, identity, Register};

    #[test]
    fn identity_channel_flags() {
        let q = Register::quantum(2);
        let f = structural_predicates(&identity(&[q]), 1e-9);
        assert!(f.causal && f.stochastic && f.completely_positive && f.pure_process);
        assert!(!f.pure_state && !f.effect_valid);
    }

    #[test]
    fn subset_filter_is_stochastic_not_causal() {
        let r = Register::classical(3);
        let mut m = CMat::zeros(3, 3);
        m[(0, 0)] = c(1.0);
        m[(2, 2)] = c(1.0);
        let filt = ProcessTensor::new(vec![r], vec![r], m).unwrap();
        let f = structural_predicates(&filt, 1e-9);
        assert!(!f.causal && f.stochastic && f.completely_positive);
    }

    #[test]
    fn scaled_identity_is_neither() {
        let q = Register::quantum(2);
        let f = structural_predicates(&identity(&[q]).scale(c(1.5)), 1e-9);
        assert!(!f.causal && !f.stochastic);
    }

    #[test]
    fn transpose_map_is_not_cp() {
        let q = Register::quantum(2);
        let mut m = CMat::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                m[(j * 2 + i, i * 2 + j)] = c(1.0);
            }
        }
        let t = ProcessTensor::new(vec![q], vec![q], m).unwrap();
        let f = structural_predicates(&t, 1e-9);
        assert!(f.causal && !f.completely_positive);
    }

    #[test]
    fn pure_state_detection() {
        let q = Register::quantum(2);
        let s = 0.5f64.sqrt();
        let plus = ProcessTensor::from_pure(vec![q], &[c(s), C64::new(0.0, s)]).unwrap();
        assert!(structural_predicates(&plus, 1e-9).pure_state);
        let mixed = ProcessTensor::from_density(vec![q], &CMat::identity(2, 2).scale(0.5)).unwrap();
        assert!(!structural_predicates(&mixed, 1e-9).pure_state);
    }

    #[test]
    fn effects() {
        let q = Register::quantum(2);
        assert!(structural_predicates(&discard(q), 1e-9).effect_valid);
        let mut proj = CMat::zeros(2, 2);
        proj[(0, 0)] = c(1.0);
        let e = from_kraus(vec![q], vec![], &[proj.rows(0, 1).into_owned()]).unwrap();
        let f = structural_predicates(&e, 1e-9);
        assert!(f.effect_valid && !f.causal && f.stochastic);
        assert!(!structural_predicates(&discard(q).scale(c(2.0)), 1e-9).effect_valid);
    }
}
