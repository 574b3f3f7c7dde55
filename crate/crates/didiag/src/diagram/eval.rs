use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Diagram, DiagramError, GenKind, Generator, NodeId, Source, Target};
use crate::regcalc::linalg::{flatten, unflatten, CMat};
use crate::regcalc::{self, fmt_regs, total_dim, ProcessTensor, Register};

/// Concrete tensors for holes and payload-free boxes, keyed by label.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bindings {
    #[serde(default = "format_version")]
    pub format_version: u32,
    pub bindings: BTreeMap<String, ProcessTensor>,
}

fn format_version() -> u32 {
    regcalc::FORMAT_VERSION
}

impl Bindings {
    pub fn new() -> Self {
        Bindings { format_version: regcalc::FORMAT_VERSION, bindings: BTreeMap::new() }
    }

    pub fn with(mut self, label: &str, p: ProcessTensor) -> Self {
        self.bindings.insert(label.into(), p);
        self
    }

    pub fn insert(&mut self, label: &str, p: ProcessTensor) {
        self.bindings.insert(label.into(), p);
    }

    pub fn get(&self, label: &str) -> Option<&ProcessTensor> {
        self.bindings.get(label)
    }
}

pub(crate) fn node_tensor(d: &Diagram, g: &Generator, b: &Bindings) -> Result<ProcessTensor, DiagramError> {
    let reg = |name: &str| d.register(name);
    let p = match g.kind {
        GenKind::Box | GenKind::Hole => {
            let label = g.label.clone().unwrap_or_default();
            let p = match (&g.payload, b.get(&label)) {
                (Some(p), _) if g.kind == GenKind::Box => p.clone(),
                (_, Some(p)) => p.clone(),
                _ => return Err(DiagramError::Unbound { kind: if g.kind == GenKind::Box { "box" } else { "hole" }, label }),
            };
            let ins = d.registers_of(&g.in_ports)?;
            let outs = d.registers_of(&g.out_ports)?;
            if p.inputs() != ins || p.outputs() != outs {
                return Err(DiagramError::Eval(format!(
                    "binding for `{label}` has type [{}] -> [{}], expected [{}] -> [{}]",
                    fmt_regs(p.inputs()),
                    fmt_regs(p.outputs()),
                    fmt_regs(&ins),
                    fmt_regs(&outs)
                )));
            }
            p
        }
        GenKind::Spider => regcalc::spider_process(reg(g.reg_name())?, g.in_ports.len(), g.out_ports.len())?,
        GenKind::Uniform => regcalc::uniform(reg(g.reg_name())?, g.out_ports.len())?,
        GenKind::Discard => regcalc::discard(reg(g.reg_name())?),
        GenKind::Scalar => ProcessTensor::number(regcalc::linalg::c(g.scalar.unwrap_or(0.0))),
        GenKind::Swap => regcalc::swap(reg(&g.in_ports[0])?, reg(&g.in_ports[1])?),
        GenKind::Identity => regcalc::identity(&[reg(&g.in_ports[0])?]),
    };
    Ok(p)
}

/// Contract the diagram into a single process tensor.
pub fn evaluate(d: &Diagram, b: &Bindings) -> Result<ProcessTensor, DiagramError> {
    let order = d.topo_order()?;
    evaluate_in_order(d, b, &order)
}

/// Contract following a caller-chosen topological order of the nodes.
pub fn evaluate_in_order(d: &Diagram, b: &Bindings, order: &[NodeId]) -> Result<ProcessTensor, DiagramError> {
    d.typecheck()?;
    let ids: BTreeSet<NodeId> = order.iter().copied().collect();
    if ids.len() != order.len() || ids.len() != d.nodes.len() || !ids.iter().all(|n| d.nodes.contains_key(n)) {
        return Err(DiagramError::Eval("order is not a permutation of the nodes".into()));
    }
    let in_regs = d.registers_of(&d.inputs)?;
    let mut frontier: Vec<Source> = (0..d.inputs.len()).map(Source::Input).collect();
    let mut regs: Vec<Register> = in_regs.clone();
    let n_in = total_dim(&in_regs);
    let mut t = CMat::identity(n_in, n_in);
    for &n in order {
        let g = &d.nodes[&n];
        let ins: Vec<Source> = d.sources_of(n).into_iter().map(|s| s.expect("typechecked")).collect();
        let mut perm: Vec<usize> = (0..frontier.len()).filter(|&k| !ins.contains(&frontier[k])).collect();
        let rest = perm.len();
        for s in &ins {
            match frontier.iter().position(|f| f == s) {
                Some(k) => perm.push(k),
                None => return Err(DiagramError::Eval(format!("node {n} evaluated before its inputs"))),
            }
        }
        t = permute_rows(&t, &regs, &perm);
        let mut new_regs: Vec<Register> = perm.iter().map(|&k| regs[k]).collect();
        let mut new_front: Vec<Source> = perm.iter().map(|&k| frontier[k]).collect();
        let p = node_tensor(d, g, b)?;
        t = apply_last(&t, total_dim(&new_regs[..rest]), p.matrix());
        new_regs.truncate(rest);
        new_regs.extend_from_slice(p.outputs());
        new_front.truncate(rest);
        new_front.extend((0..g.out_ports.len()).map(|j| Source::Port(n, j)));
        regs = new_regs;
        frontier = new_front;
    }
    let mut perm = Vec::with_capacity(d.outputs.len());
    for j in 0..d.outputs.len() {
        let s = d.source_of(Target::Output(j)).expect("typechecked");
        perm.push(frontier.iter().position(|f| *f == s).expect("output source on frontier"));
    }
    let t = permute_rows(&t, &regs, &perm);
    let out_regs = d.registers_of(&d.outputs)?;
    Ok(ProcessTensor::new(in_regs, out_regs, t)?)
}

/// Reorder the row index of `t`: new wire `k` is old wire `perm[k]`.
fn permute_rows(t: &CMat, regs: &[Register], perm: &[usize]) -> CMat {
    if perm.iter().enumerate().all(|(k, &p)| k == p) {
        return t.clone();
    }
    let old: Vec<usize> = regs.iter().map(Register::total_dim).collect();
    let new: Vec<usize> = perm.iter().map(|&k| old[k]).collect();
    let mut out = CMat::zeros(t.nrows(), t.ncols());
    for r in 0..t.nrows() {
        let digits = unflatten(r, &old);
        let nd: Vec<usize> = perm.iter().map(|&k| digits[k]).collect();
        out.set_row(flatten(&nd, &new), &t.row(r));
    }
    out
}

/// `(id_rest ⊗ m) · t` where the last wires of `t`'s rows are `m`'s inputs.
fn apply_last(t: &CMat, rest: usize, m: &CMat) -> CMat {
    let (nout, nin) = m.shape();
    let cols = t.ncols();
    let mut out = CMat::zeros(rest * nout, cols);
    for r in 0..rest {
        let block = t.rows(r * nin, nin);
        out.rows_mut(r * nout, nout).copy_from(&(m * block));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::parse;
    use crate::regcalc::{compose_par, compose_seq, identity, spider, uniform};

    #[test]
    fn spider_with_discarded_leg() {
        let d = parse("spider C2 0 2 ; (discard C2 * id C2)").unwrap();
        let v = evaluate(&d, &Bindings::new()).unwrap();
        assert!(v.approx_eq(&spider(Register::classical(2), 1).unwrap(), 1e-15));
    }

    #[test]
    fn uniform_absorbs_discard() {
        let d = parse("uniform C3 3 ; (id C3 * discard C3 * id C3)").unwrap();
        let v = evaluate(&d, &Bindings::new()).unwrap();
        assert!(v.approx_eq(&uniform(Register::classical(3), 2).unwrap(), 1e-15));
    }

    #[test]
    fn matches_direct_composition() {
        let q = Register::quantum(2);
        let cl = Register::classical(2);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(9);
        let f = regcalc::random::random_channel(&mut rng, &[cl, q], &[q], 2).unwrap();
        let g = regcalc::random::random_channel(&mut rng, &[q, cl], &[cl], 2).unwrap();
        let d = parse("reg D = quantum 2\nhole f : C2*D -> D\nhole g : D*C2 -> C2\n(uniform C2 2 * id D) ; (id C2 * f) ; swap C2 D ; g").unwrap();
        let b = Bindings::new().with("f", f.clone()).with("g", g.clone());
        let got = evaluate(&d, &b).unwrap();
        let u = uniform(cl, 2).unwrap();
        let s1 = compose_seq(&compose_par(&u, &identity(&[q])), &compose_par(&identity(&[cl]), &f)).unwrap();
        let s2 = compose_seq(&s1, &regcalc::swap(cl, q)).unwrap();
        let want = compose_seq(&s2, &g).unwrap();
        assert!(got.approx_eq(&want, 1e-12));
        let total = compose_seq(&got, &regcalc::discard_all(got.outputs())).unwrap();
        assert!(total.approx_eq(&regcalc::discard(q), 1e-12));
    }

    #[test]
    fn unbound_hole_is_reported() {
        let d = parse("hole h : C2 -> C2\nh").unwrap();
        assert!(matches!(evaluate(&d, &Bindings::new()), Err(DiagramError::Unbound { .. })));
    }

    #[test]
    fn evaluation_order_does_not_matter() {
        let d = parse("box f : C2 -> C2\nbox g : C3 -> C3\nf * g * uniform C2 1").unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let b = Bindings::new()
            .with("f", regcalc::random::random_channel(&mut rng, &[Register::classical(2)], &[Register::classical(2)], 1).unwrap())
            .with("g", regcalc::random::random_channel(&mut rng, &[Register::classical(3)], &[Register::classical(3)], 1).unwrap());
        let a = evaluate_in_order(&d, &b, &[0, 1, 2]).unwrap();
        let z = evaluate_in_order(&d, &b, &[2, 1, 0]).unwrap();
        assert!(a.approx_eq(&z, 1e-14));
    }
}
