//! Concrete instances for the approximate axioms.
//!
//! The axioms hold with unspecified constants, so nothing here is asserted. Each axiom is
//! instantiated with a toy honest device and a hand-picked right-hand-side witness, and
//! the distance between the two sides is measured and reported.

use serde::Serialize;

use super::RewriteRule;
use crate::diagram::{evaluate, Bindings, GenKind};
use crate::regcalc::linalg::{c, CMat, C64};
use crate::regcalc::{self, process_distance, CalcError, DistanceInterval, ProcessTensor, Register};

/// Toy run `seed * device -> out * device`: the seed parity picks the Z or X basis, the
/// device qubit is measured in it, the outcome is written to `out` and the
/// post-measurement qubit is passed on. Never aborts.
pub fn toy_run(seed: Register, out: Register, device: Register) -> Result<ProcessTensor, CalcError> {
    if device != Register::quantum(2) || seed.is_quantum() || out.is_quantum() || out.base_dim < 2 {
        return Err(CalcError::Invalid("toy run needs classical seed/output and a qubit device".into()));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let bases: [[[f64; 2]; 2]; 2] = [[[1.0, 0.0], [0.0, 1.0]], [[h, h], [h, -h]]];
    let (n, m) = (seed.base_dim, out.base_dim);
    let mut mat = CMat::zeros(m * 4, n * 4);
    for t in 0..n {
        let basis = &bases[t % 2];
        for (a, v) in basis.iter().enumerate() {
            let p = |x: usize, y: usize| v[x] * v[y];
            for (k, l, i, j) in (0..16).map(|z| (z >> 3 & 1, z >> 2 & 1, z >> 1 & 1, z & 1)) {
                let val = p(k, i) * p(l, j);
                mat[(a * 4 + k * 2 + l, t * 4 + i * 2 + j)] = c(val);
            }
        }
    }
    ProcessTensor::new(vec![seed, device], vec![out, device], mat)
}

fn bell() -> Vec<C64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    vec![c(h), c(0.0), c(0.0), c(h)]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomMeasurement {
    pub rule: String,
    pub distance: DistanceInterval,
    pub witness: String,
}

fn hole_types(r: &RewriteRule, label: &str) -> Option<(Vec<Register>, Vec<Register>)> {
    let d = if r.lhs.nodes.values().any(|g| g.label.as_deref() == Some(label)) { &r.lhs } else { &r.rhs };
    let g = d.nodes.values().find(|g| g.kind == GenKind::Hole && g.label.as_deref() == Some(label))?;
    Some((d.registers_of(&g.in_ports).ok()?, d.registers_of(&g.out_ports).ok()?))
}

fn run_label(r: &RewriteRule) -> Option<String> {
    r.lhs.nodes.values().chain(r.rhs.nodes.values()).filter_map(|g| g.label.clone()).find(|l| l.starts_with('R'))
}

/// Measure an axiom instance with toy devices. `None` if the rule is not an axiom this
/// module knows or its registers do not fit the toy device.
pub fn measure_axiom(r: &RewriteRule) -> Option<Result<AxiomMeasurement, CalcError>> {
    let run = run_label(r)?;
    let (rin, rout) = hole_types(r, &run)?;
    let dev = toy_run(rin[0], rout[0], rin[1]).ok()?;
    let (lhs, rhs, witness) = match r.name.as_str() {
        "spot_check" => {
            let (bin, bout) = hole_types(r, "blank")?;
            let (cin, cout) = hole_types(r, "cause")?;
            let blank = toy_run(bin[0], bout[0], bin[1]).ok()?;
            let causal = regcalc::compose_par(&regcalc::discard_all(&cin[..2]), &regcalc::identity(&cout));
            let lb = Bindings::new().with(&run, dev);
            let rb = Bindings::new().with("blank", blank).with("cause", causal);
            (evaluate(&r.lhs, &lb), evaluate(&r.rhs, &rb), "blank = toy run, cause = discard classical wires")
        }
        "soundness" => {
            let (_, gout) = hole_types(r, "Gamma")?;
            let gamma = ProcessTensor::from_pure(gout, &bell()).ok()?;
            let b = Bindings::new().with(&run, dev).with("Gamma", gamma);
            (evaluate(&r.lhs, &b), evaluate(&r.rhs, &b), "Gamma = Bell pair between device and environment")
        }
        "completeness" => {
            let (_, gout) = hole_types(r, "Gamma")?;
            let mixed = CMat::identity(2, 2) * c(0.5);
            let gamma = ProcessTensor::from_density(gout, &mixed).ok()?;
            let b = Bindings::new().with(&run, dev).with("Gamma", gamma);
            (evaluate(&r.lhs, &b), evaluate(&r.rhs, &b), "Gamma = maximally mixed qubit")
        }
        _ => return None,
    };
    let out = (|| {
        let l = lhs.map_err(|e| CalcError::Invalid(e.to_string()))?;
        let r2 = rhs.map_err(|e| CalcError::Invalid(e.to_string()))?;
        let distance = process_distance(&l, &r2)?;
        Ok(AxiomMeasurement { rule: r.name.clone(), distance, witness: witness.into() })
    })();
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regcalc::structural_predicates;
    use crate::rewrite::axiom_rules;

    #[test]
    fn toy_run_is_causal() {
        let p = toy_run(Register::classical(2), Register::classical(2), Register::quantum(2)).unwrap();
        let f = structural_predicates(&p, 1e-12);
        assert!(f.causal && f.completely_positive);
    }

    #[test]
    fn every_axiom_is_measured() {
        for r in axiom_rules() {
            let m = measure_axiom(&r).expect("toy fits").unwrap();
            assert!(m.distance.lower.is_finite() && m.distance.upper.is_finite(), "{}", r.name);
            assert!(m.distance.lower <= m.distance.upper + 1e-9);
        }
    }

    #[test]
    fn honest_completeness_is_exact() {
        let r = axiom_rules().into_iter().find(|r| r.name == "completeness").unwrap();
        let m = measure_axiom(&r).unwrap().unwrap();
        assert!(m.distance.upper < 1e-9, "{m:?}");
    }
}
