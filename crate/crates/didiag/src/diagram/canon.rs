//! Normal form up to planar isotopy and interchange.
//!
//! Wiring nodes are spliced out, then nodes are labelled by a breadth-first traversal
//! that starts at the ordered boundary and follows ports in order. Ports being ordered,
//! this labelling is invariant under isomorphism. Components that never touch the
//! boundary are labelled from the root giving the smallest traversal code. The final
//! numbering is a topological order with ties broken by those labels.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{Diagram, GenKind, NodeId, Source, Target};

pub(super) fn canonical_form(d: &Diagram) -> Diagram {
    let mut d = splice_wiring(d);
    d.prune_registers();
    let labels = traversal_labels(&d);
    let order = d.topo_order_by(|n| labels[&n]).expect("canonical form needs an acyclic diagram");
    d.renumbered(&order)
}

fn splice_wiring(d: &Diagram) -> Diagram {
    let mut d = d.clone();
    while let Some((&n, g)) = d.nodes.iter().find(|(_, g)| g.is_wiring()) {
        let kind = g.kind;
        let ins: Vec<Source> = d.sources_of(n).into_iter().map(|s| s.expect("connected wiring node")).collect();
        let outs: Vec<Target> = d.targets_of(n).into_iter().map(|t| t.expect("connected wiring node")).collect();
        for i in 0..ins.len() {
            d.wires.remove(&Target::Port(n, i));
        }
        d.nodes.remove(&n);
        match kind {
            GenKind::Identity => {
                d.wires.insert(outs[0], ins[0]);
            }
            _ => {
                d.wires.insert(outs[0], ins[1]);
                d.wires.insert(outs[1], ins[0]);
            }
        }
    }
    d
}

fn neighbours(d: &Diagram, fwd: &BTreeMap<Source, Target>, n: NodeId) -> Vec<NodeId> {
    let g = &d.nodes[&n];
    let mut out = Vec::new();
    for i in 0..g.in_ports.len() {
        if let Some(Source::Port(m, _)) = d.wires.get(&Target::Port(n, i)) {
            out.push(*m);
        }
    }
    for j in 0..g.out_ports.len() {
        if let Some(Target::Port(m, _)) = fwd.get(&Source::Port(n, j)) {
            out.push(*m);
        }
    }
    out
}

fn bfs(d: &Diagram, fwd: &BTreeMap<Source, Target>, seeds: &[NodeId], skip: &BTreeSet<NodeId>) -> Vec<NodeId> {
    let mut seen: BTreeSet<NodeId> = skip.clone();
    let mut queue = VecDeque::new();
    let mut order = Vec::new();
    for &s in seeds {
        if seen.insert(s) {
            queue.push_back(s);
        }
    }
    while let Some(n) = queue.pop_front() {
        order.push(n);
        for m in neighbours(d, fwd, n) {
            if seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    order
}

/// Isomorphism-invariant code of a traversal, used to choose roots of closed components.
fn traversal_code(d: &Diagram, fwd: &BTreeMap<Source, Target>, order: &[NodeId]) -> Vec<String> {
    let idx: BTreeMap<NodeId, usize> = order.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    order
        .iter()
        .map(|n| {
            let g = &d.nodes[n];
            let ins: Vec<String> = (0..g.in_ports.len())
                .map(|i| match d.wires.get(&Target::Port(*n, i)) {
                    Some(Source::Port(m, p)) => format!("{}.{}", idx.get(m).map_or(usize::MAX, |x| *x), p),
                    Some(Source::Input(k)) => format!("in{k}"),
                    None => "-".into(),
                })
                .collect();
            let outs: Vec<String> = (0..g.out_ports.len())
                .map(|j| match fwd.get(&Source::Port(*n, j)) {
                    Some(Target::Port(m, p)) => format!("{}.{}", idx.get(m).map_or(usize::MAX, |x| *x), p),
                    Some(Target::Output(k)) => format!("out{k}"),
                    None => "-".into(),
                })
                .collect();
            format!("{}|{}|{}", g.signature(), ins.join(","), outs.join(","))
        })
        .collect()
}

fn traversal_labels(d: &Diagram) -> BTreeMap<NodeId, usize> {
    let fwd = d.forward();
    let mut seeds = Vec::new();
    for i in 0..d.inputs.len() {
        if let Some(Target::Port(n, _)) = fwd.get(&Source::Input(i)) {
            seeds.push(*n);
        }
    }
    for j in 0..d.outputs.len() {
        if let Some(Source::Port(n, _)) = d.wires.get(&Target::Output(j)) {
            seeds.push(*n);
        }
    }
    let mut order = bfs(d, &fwd, &seeds, &BTreeSet::new());
    loop {
        let done: BTreeSet<NodeId> = order.iter().copied().collect();
        let rest: Vec<NodeId> = d.nodes.keys().filter(|n| !done.contains(n)).copied().collect();
        if rest.is_empty() {
            break;
        }
        let best = rest
            .iter()
            .map(|&r| {
                let comp = bfs(d, &fwd, &[r], &done);
                (traversal_code(d, &fwd, &comp), comp)
            })
            .min_by(|a, b| a.0.cmp(&b.0))
            .expect("non-empty");
        order.extend(best.1);
    }
    order.into_iter().enumerate().map(|(i, n)| (n, i)).collect()
}

#[cfg(test)]
mod tests {
    use crate::diagram::{parse, Diagram, Generator};

    #[test]
    fn interchange_variants_agree() {
        let pre = "box f : C2 -> C3\nbox g : C4 -> C5\n";
        let a = parse(&format!("{pre}f * g")).unwrap();
        let b = parse(&format!("{pre}(f * id C4) ; (id C3 * g)")).unwrap();
        let c = parse(&format!("{pre}(id C2 * g) ; (f * id C5)")).unwrap();
        assert_eq!(a.canonical_form(), b.canonical_form());
        assert_eq!(a.canonical_form(), c.canonical_form());
        assert_ne!(a, c);
    }

    #[test]
    fn double_swap_is_identity() {
        let a = parse("swap C2 C3 ; swap C3 C2").unwrap();
        let b = parse("id (C2*C3)").unwrap();
        assert_eq!(a.canonical_form(), b.canonical_form());
    }

    #[test]
    fn wiring_nodes_are_spliced() {
        let regs = parse("id C2").unwrap().registers;
        let with_node = Diagram::single(regs.clone(), Generator::identity("C2"));
        assert_eq!(with_node.canonical_form(), Diagram::identity(regs, vec!["C2".into()]).canonical_form());
    }

    #[test]
    fn closed_components_in_any_order() {
        let a = parse("scalar 0.5 * (uniform C2 1 ; discard C2)").unwrap();
        let b = parse("(uniform C2 1 ; discard C2) * scalar 0.5").unwrap();
        assert_eq!(a.canonical_form(), b.canonical_form());
    }
}
