use std::collections::BTreeMap;

use super::{fmt_types, Diagram, GenKind, Generator, Source, Target};

/// Emit DSL text. Nodes are printed one per layer in topological order (smallest id
/// first) with adjacent swaps routing the wires, so parsing the output reproduces the
/// port graph for any diagram without explicit wiring nodes.
pub fn print(d: &Diagram) -> String {
    let mut out = String::new();
    for (name, r) in &d.registers {
        out.push_str(&format!("reg {name} = {r}\n"));
    }
    let mut decls: BTreeMap<&str, &Generator> = BTreeMap::new();
    for g in d.nodes.values() {
        if let (true, Some(l)) = (g.is_labeled(), &g.label) {
            decls.entry(l).or_insert(g);
        }
    }
    for (l, g) in decls {
        out.push_str(&format!(
            "{} {l} : {} -> {}{}\n",
            if g.kind == GenKind::Box { "box" } else { "hole" },
            fmt_type_decl(&g.in_ports),
            fmt_type_decl(&g.out_ports),
            if g.causal { " causal" } else { "" }
        ));
    }
    out.push_str(&expression(d));
    out.push('\n');
    out
}

fn fmt_type_decl(t: &[String]) -> String {
    fmt_types(t)
}

fn fmt_type_atom(t: &[String]) -> String {
    match t.len() {
        0 => "I".into(),
        1 => t[0].clone(),
        _ => format!("({})", t.join("*")),
    }
}

fn atom(g: &Generator) -> String {
    match g.kind {
        GenKind::Box | GenKind::Hole => g.label.clone().unwrap_or_default(),
        GenKind::Spider => format!("spider {} {} {}", g.reg_name(), g.in_ports.len(), g.out_ports.len()),
        GenKind::Uniform => format!("uniform {} {}", g.reg_name(), g.out_ports.len()),
        GenKind::Discard => format!("discard {}", g.reg_name()),
        GenKind::Scalar => format!("scalar {}", g.scalar.unwrap_or(0.0)),
        GenKind::Swap => format!("swap {} {}", g.in_ports[0], g.in_ports[1]),
        GenKind::Identity => format!("id {}", g.in_ports[0]),
    }
}

struct Layers<'a> {
    d: &'a Diagram,
    frontier: Vec<Source>,
    layers: Vec<String>,
}

impl Layers<'_> {
    fn ty(&self, s: &Source) -> String {
        match s {
            Source::Input(i) => self.d.inputs[*i].clone(),
            Source::Port(n, p) => self.d.nodes[n].out_ports[*p].clone(),
        }
    }

    fn layer(&mut self, before: usize, body: String, after: usize) {
        let types = |r: std::ops::Range<usize>| self.frontier[r].iter().map(|s| self.ty(s)).collect::<Vec<_>>();
        let mut parts = Vec::new();
        if before > 0 {
            parts.push(format!("id {}", fmt_type_atom(&types(0..before))));
        }
        parts.push(body);
        let n = self.frontier.len();
        if after > 0 {
            parts.push(format!("id {}", fmt_type_atom(&types(n - after..n))));
        }
        self.layers.push(if parts.len() == 1 { parts.pop().expect("one") } else { parts.join(" * ") });
    }

    /// Reorder the frontier into `target` using adjacent swaps.
    fn route(&mut self, target: &[Source]) {
        let pos: BTreeMap<Source, usize> = target.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let n = self.frontier.len();
        loop {
            let mut swapped = false;
            for i in 0..n.saturating_sub(1) {
                if pos[&self.frontier[i]] > pos[&self.frontier[i + 1]] {
                    let body = format!("swap {} {}", self.ty(&self.frontier[i]), self.ty(&self.frontier[i + 1]));
                    self.layer(i, body, n - i - 2);
                    self.frontier.swap(i, i + 1);
                    swapped = true;
                }
            }
            if !swapped {
                break;
            }
        }
    }
}

fn expression(d: &Diagram) -> String {
    let order = match d.topo_order() {
        Ok(o) => o,
        Err(_) => return "# cyclic diagram".into(),
    };
    let mut st = Layers { d, frontier: (0..d.inputs.len()).map(Source::Input).collect(), layers: Vec::new() };
    for n in order {
        let g = &d.nodes[&n];
        let ins: Vec<Source> = d.sources_of(n).into_iter().map(|s| s.expect("typechecked diagram")).collect();
        let others: Vec<Source> = st.frontier.iter().filter(|s| !ins.contains(s)).copied().collect();
        let at = if ins.is_empty() {
            others.len()
        } else {
            let first = st.frontier.iter().position(|s| ins.contains(s)).expect("inputs on frontier");
            st.frontier[..first].iter().filter(|s| !ins.contains(s)).count()
        };
        let mut target = others[..at].to_vec();
        target.extend(&ins);
        target.extend(&others[at..]);
        st.route(&target);
        let after = others.len() - at;
        st.layer(at, atom(g), after);
        let mut next = others[..at].to_vec();
        next.extend((0..g.out_ports.len()).map(|p| Source::Port(n, p)));
        next.extend(&others[at..]);
        st.frontier = next;
    }
    let target: Vec<Source> = (0..d.outputs.len()).map(|j| d.source_of(Target::Output(j)).expect("typechecked diagram")).collect();
    st.route(&target);
    if st.layers.is_empty() {
        return format!("id {}", fmt_type_atom(&d.inputs));
    }
    st.layers.join(" ;\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::parse;

    fn round_trip(text: &str) {
        let d = parse(text).unwrap();
        let printed = print(&d);
        let back = parse(&printed).unwrap_or_else(|e| panic!("{printed}\n{e}"));
        assert_eq!(back, d, "\n{printed}");
    }

    #[test]
    fn simple_round_trips() {
        round_trip("uniform C2 2 ; (discard C2 * id C2)");
        round_trip("id (C2*C3)");
        round_trip("id I");
        round_trip("swap C2 C3");
        round_trip("scalar 0.125 * uniform C4 3");
        round_trip("reg D = quantum 2\nhole R : C2*D -> C4*D causal\n(uniform C2 2 * id D) ; (id C2 * R) ; swap C2 (C4*D)");
    }

    #[test]
    fn crossing_wires() {
        round_trip("box f : C2 -> C3*C4\nbox g : C4*C2 -> C5\n(f * id C2) ; (id C3 * g) ; swap C3 C5");
    }
}
