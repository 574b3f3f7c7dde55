//! Open diagrams as directed acyclic port graphs.
//!
//! Wires are typed nominally by register name; the diagram carries the table mapping
//! names to [`Register`]s. Every node input port and every boundary output receives
//! exactly one wire, and every node output port and boundary input emits exactly one.
//! Identity and swap are pure wiring in the DSL; they only exist as nodes when a
//! diagram is built programmatically, and [`Diagram::canonical_form`] removes them.

mod canon;
mod eval;
mod parse;
mod print;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::regcalc::{CalcError, ProcessTensor, Register};

pub use eval::{evaluate, evaluate_in_order, Bindings};
pub use parse::{parse, ParseError};
pub use print::print;

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenKind {
    Box,
    Hole,
    Spider,
    Uniform,
    Discard,
    Scalar,
    Swap,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub kind: GenKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub in_ports: Vec<String>,
    pub out_ports: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub causal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<ProcessTensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar: Option<f64>,
}

impl Generator {
    fn bare(kind: GenKind, ins: Vec<String>, outs: Vec<String>) -> Self {
        Generator { kind, label: None, in_ports: ins, out_ports: outs, causal: false, payload: None, scalar: None }
    }

    pub fn boxed(label: &str, ins: Vec<String>, outs: Vec<String>, causal: bool) -> Self {
        Generator { label: Some(label.into()), causal, ..Self::bare(GenKind::Box, ins, outs) }
    }

    pub fn hole(label: &str, ins: Vec<String>, outs: Vec<String>, causal: bool) -> Self {
        Generator { label: Some(label.into()), causal, ..Self::bare(GenKind::Hole, ins, outs) }
    }

    pub fn spider(reg: &str, k_in: usize, k_out: usize) -> Self {
        Self::bare(GenKind::Spider, vec![reg.into(); k_in], vec![reg.into(); k_out])
    }

    pub fn uniform(reg: &str, k: usize) -> Self {
        Self::bare(GenKind::Uniform, vec![], vec![reg.into(); k])
    }

    pub fn discard(reg: &str) -> Self {
        Self::bare(GenKind::Discard, vec![reg.into()], vec![])
    }

    pub fn scalar(x: f64) -> Self {
        Generator { scalar: Some(x), ..Self::bare(GenKind::Scalar, vec![], vec![]) }
    }

    pub fn swap(a: &str, b: &str) -> Self {
        Self::bare(GenKind::Swap, vec![a.into(), b.into()], vec![b.into(), a.into()])
    }

    pub fn identity(reg: &str) -> Self {
        Self::bare(GenKind::Identity, vec![reg.into()], vec![reg.into()])
    }

    pub fn is_labeled(&self) -> bool {
        matches!(self.kind, GenKind::Box | GenKind::Hole)
    }

    pub fn is_wiring(&self) -> bool {
        matches!(self.kind, GenKind::Swap | GenKind::Identity)
    }

    /// Structural signature used for canonical ordering and matching; ignores payload contents.
    pub fn signature(&self) -> String {
        let ports = |p: &[String]| if p.is_empty() { "I".to_string() } else { p.join("*") };
        match self.kind {
            GenKind::Box | GenKind::Hole => format!(
                "{} {} : {} -> {}{}{}",
                if self.kind == GenKind::Box { "box" } else { "hole" },
                self.label.as_deref().unwrap_or("?"),
                ports(&self.in_ports),
                ports(&self.out_ports),
                if self.causal { " causal" } else { "" },
                if self.payload.is_some() { " +payload" } else { "" },
            ),
            GenKind::Spider => format!("spider {} {} {}", self.reg_name(), self.in_ports.len(), self.out_ports.len()),
            GenKind::Uniform => format!("uniform {} {}", self.reg_name(), self.out_ports.len()),
            GenKind::Discard => format!("discard {}", self.reg_name()),
            GenKind::Scalar => format!("scalar {}", self.scalar.unwrap_or(f64::NAN)),
            GenKind::Swap => format!("swap {} {}", self.in_ports[0], self.in_ports[1]),
            GenKind::Identity => format!("id {}", self.in_ports[0]),
        }
    }

    pub(crate) fn reg_name(&self) -> &str {
        self.in_ports.first().or_else(|| self.out_ports.first()).map(String::as_str).unwrap_or("I")
    }
}

/// Start of a wire: a boundary input or a node output port.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Input(usize),
    Port(NodeId, usize),
}

/// End of a wire: a boundary output or a node input port.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Output(usize),
    Port(NodeId, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wire {
    pub src: Source,
    pub dst: Target,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagramError {
    #[error("{}", fmt_parse_errors(.0))]
    Parse(Vec<ParseError>),
    #[error("type errors: {}", .0.join("; "))]
    Type(Vec<String>),
    #[error("unbound {kind} `{label}`")]
    Unbound { kind: &'static str, label: String },
    #[error("evaluation: {0}")]
    Eval(String),
    #[error(transparent)]
    Calc(#[from] CalcError),
}

fn fmt_parse_errors(errs: &[ParseError]) -> String {
    errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n")
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "DiagramFile", try_from = "DiagramFile")]
pub struct Diagram {
    pub registers: BTreeMap<String, Register>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub nodes: BTreeMap<NodeId, Generator>,
    /// Keyed by wire end; every target has exactly one source.
    pub wires: BTreeMap<Target, Source>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagramFile {
    format_version: u32,
    registers: BTreeMap<String, Register>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    nodes: BTreeMap<NodeId, Generator>,
    wires: Vec<Wire>,
}

impl From<Diagram> for DiagramFile {
    fn from(d: Diagram) -> Self {
        let wires = d.wires.iter().map(|(t, s)| Wire { src: *s, dst: *t }).collect();
        DiagramFile { format_version: crate::regcalc::FORMAT_VERSION, registers: d.registers, inputs: d.inputs, outputs: d.outputs, nodes: d.nodes, wires }
    }
}

impl TryFrom<DiagramFile> for Diagram {
    type Error = String;
    fn try_from(f: DiagramFile) -> Result<Self, String> {
        if f.format_version != crate::regcalc::FORMAT_VERSION {
            return Err(format!("unsupported format_version {}", f.format_version));
        }
        let mut wires = BTreeMap::new();
        for w in f.wires {
            if wires.insert(w.dst, w.src).is_some() {
                return Err(format!("two wires end at {:?}", w.dst));
            }
        }
        Ok(Diagram { registers: f.registers, inputs: f.inputs, outputs: f.outputs, nodes: f.nodes, wires })
    }
}

impl Diagram {
    /// The diagram of identity wires on `types`.
    pub fn identity(registers: BTreeMap<String, Register>, types: Vec<String>) -> Self {
        let wires = (0..types.len()).map(|i| (Target::Output(i), Source::Input(i))).collect();
        Diagram { registers, inputs: types.clone(), outputs: types, nodes: BTreeMap::new(), wires }
    }

    /// A diagram holding a single generator.
    pub fn single(registers: BTreeMap<String, Register>, g: Generator) -> Self {
        let mut wires = BTreeMap::new();
        for i in 0..g.in_ports.len() {
            wires.insert(Target::Port(0, i), Source::Input(i));
        }
        for j in 0..g.out_ports.len() {
            wires.insert(Target::Output(j), Source::Port(0, j));
        }
        Diagram { registers, inputs: g.in_ports.clone(), outputs: g.out_ports.clone(), nodes: BTreeMap::from([(0, g)]), wires }
    }

    /// Wire permutation diagram: output `k` carries input `perm[k]`.
    pub fn permutation(registers: BTreeMap<String, Register>, types: Vec<String>, perm: &[usize]) -> Self {
        let outputs = perm.iter().map(|&p| types[p].clone()).collect();
        let wires = perm.iter().enumerate().map(|(k, &p)| (Target::Output(k), Source::Input(p))).collect();
        Diagram { registers, inputs: types, outputs, nodes: BTreeMap::new(), wires }
    }

    pub fn next_id(&self) -> NodeId {
        self.nodes.keys().next_back().map_or(0, |k| k + 1)
    }

    fn shifted(&self, by: NodeId) -> (BTreeMap<NodeId, Generator>, Vec<(Target, Source)>) {
        let nodes = self.nodes.iter().map(|(k, g)| (k + by, g.clone())).collect();
        let shift_s = |s: Source| match s {
            Source::Port(n, p) => Source::Port(n + by, p),
            other => other,
        };
        let shift_t = |t: Target| match t {
            Target::Port(n, p) => Target::Port(n + by, p),
            other => other,
        };
        let wires = self.wires.iter().map(|(t, s)| (shift_t(*t), shift_s(*s))).collect();
        (nodes, wires)
    }

    fn merge_registers(&self, other: &Diagram) -> Result<BTreeMap<String, Register>, DiagramError> {
        let mut regs = self.registers.clone();
        for (k, r) in &other.registers {
            match regs.get(k) {
                Some(x) if x != r => return Err(DiagramError::Type(vec![format!("register `{k}` declared as both {x} and {r}")])),
                _ => {
                    regs.insert(k.clone(), *r);
                }
            }
        }
        Ok(regs)
    }

    /// `self ; other`.
    pub fn then(&self, other: &Diagram) -> Result<Diagram, DiagramError> {
        if self.outputs != other.inputs {
            return Err(DiagramError::Type(vec![format!(
                "cannot compose: outputs [{}] do not match inputs [{}]",
                fmt_types(&self.outputs),
                fmt_types(&other.inputs)
            )]));
        }
        let registers = self.merge_registers(other)?;
        let by = self.next_id();
        let (bnodes, bwires) = other.shifted(by);
        let mut nodes = self.nodes.clone();
        nodes.extend(bnodes);
        let mut wires: BTreeMap<Target, Source> = self.wires.iter().filter(|(t, _)| !matches!(t, Target::Output(_))).map(|(t, s)| (*t, *s)).collect();
        let mid: BTreeMap<usize, Source> = self.wires.iter().filter_map(|(t, s)| if let Target::Output(j) = t { Some((*j, *s)) } else { None }).collect();
        for (t, s) in bwires {
            let s = match s {
                Source::Input(i) => mid[&i],
                other => other,
            };
            wires.insert(t, s);
        }
        Ok(Diagram { registers, inputs: self.inputs.clone(), outputs: other.outputs.clone(), nodes, wires })
    }

    /// `self * other`.
    pub fn beside(&self, other: &Diagram) -> Result<Diagram, DiagramError> {
        let registers = self.merge_registers(other)?;
        let by = self.next_id();
        let (bnodes, bwires) = other.shifted(by);
        let (ni, no) = (self.inputs.len(), self.outputs.len());
        let mut nodes = self.nodes.clone();
        nodes.extend(bnodes);
        let mut wires = self.wires.clone();
        for (t, s) in bwires {
            let t = match t {
                Target::Output(j) => Target::Output(j + no),
                other => other,
            };
            let s = match s {
                Source::Input(i) => Source::Input(i + ni),
                other => other,
            };
            wires.insert(t, s);
        }
        let mut inputs = self.inputs.clone();
        inputs.extend(other.inputs.iter().cloned());
        let mut outputs = self.outputs.clone();
        outputs.extend(other.outputs.iter().cloned());
        Ok(Diagram { registers, inputs, outputs, nodes, wires })
    }

    pub fn source_of(&self, t: Target) -> Option<Source> {
        self.wires.get(&t).copied()
    }

    /// Where each output port of `node` goes, in port order.
    pub fn targets_of(&self, node: NodeId) -> Vec<Option<Target>> {
        let g = &self.nodes[&node];
        let mut out = vec![None; g.out_ports.len()];
        for (t, s) in &self.wires {
            if let Source::Port(n, p) = s {
                if *n == node && *p < out.len() {
                    out[*p] = Some(*t);
                }
            }
        }
        out
    }

    pub fn sources_of(&self, node: NodeId) -> Vec<Option<Source>> {
        let g = &self.nodes[&node];
        (0..g.in_ports.len()).map(|i| self.source_of(Target::Port(node, i))).collect()
    }

    /// Reverse wire map: source → target.
    pub fn forward(&self) -> BTreeMap<Source, Target> {
        self.wires.iter().map(|(t, s)| (*s, *t)).collect()
    }

    pub fn register(&self, name: &str) -> Result<Register, DiagramError> {
        self.registers.get(name).copied().ok_or_else(|| DiagramError::Type(vec![format!("undeclared register `{name}`")]))
    }

    pub fn registers_of(&self, names: &[String]) -> Result<Vec<Register>, DiagramError> {
        names.iter().map(|n| self.register(n)).collect()
    }

    /// Topological order; ties broken by smallest id. Fails on cycles.
    pub fn topo_order(&self) -> Result<Vec<NodeId>, DiagramError> {
        self.topo_order_by(|n| n)
    }

    pub(crate) fn topo_order_by<K: Ord>(&self, key: impl Fn(NodeId) -> K) -> Result<Vec<NodeId>, DiagramError> {
        let mut indeg: BTreeMap<NodeId, usize> = self.nodes.keys().map(|&k| (k, 0)).collect();
        let mut succ: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for (t, s) in &self.wires {
            if let (Target::Port(b, _), Source::Port(a, _)) = (t, s) {
                if let Some(d) = indeg.get_mut(b) {
                    *d += 1;
                }
                succ.entry(*a).or_default().push(*b);
            }
        }
        let mut ready: BTreeSet<(K, NodeId)> = indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| (key(*n), *n)).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(first) = ready.pop_first() {
            let n = first.1;
            order.push(n);
            for m in succ.get(&n).into_iter().flatten() {
                let d = indeg.get_mut(m).expect("known node");
                *d -= 1;
                if *d == 0 {
                    ready.insert((key(*m), *m));
                }
            }
        }
        if order.len() != self.nodes.len() {
            return Err(DiagramError::Type(vec!["diagram contains a cycle".into()]));
        }
        Ok(order)
    }

    /// Collect every typing problem: undeclared names, port totality, wire types, acyclicity, generator shape.
    pub fn typecheck(&self) -> Result<(), DiagramError> {
        let mut errs = Vec::new();
        let known = |n: &String| self.registers.contains_key(n);
        for n in self.inputs.iter().chain(&self.outputs) {
            if !known(n) {
                errs.push(format!("boundary uses undeclared register `{n}`"));
            }
        }
        for (id, g) in &self.nodes {
            for n in g.in_ports.iter().chain(&g.out_ports) {
                if !known(n) {
                    errs.push(format!("node {id} uses undeclared register `{n}`"));
                }
            }
            match g.kind {
                GenKind::Spider | GenKind::Uniform => {
                    let r = g.reg_name();
                    if g.in_ports.iter().chain(&g.out_ports).any(|p| p != r) {
                        errs.push(format!("node {id}: spider legs must share one register"));
                    }
                    if g.in_ports.len() + g.out_ports.len() == 0 {
                        errs.push(format!("node {id}: spider without legs"));
                    }
                    if g.kind == GenKind::Uniform && !g.in_ports.is_empty() {
                        errs.push(format!("node {id}: uniform has no inputs"));
                    }
                }
                GenKind::Discard if g.in_ports.len() != 1 || !g.out_ports.is_empty() => errs.push(format!("node {id}: discard takes one wire")),
                GenKind::Scalar => match g.scalar {
                    Some(x) if (0.0..=1.0).contains(&x) => {}
                    _ => errs.push(format!("node {id}: scalar must lie in [0,1]")),
                },
                GenKind::Box | GenKind::Hole if g.label.is_none() => errs.push(format!("node {id}: {:?} needs a label", g.kind)),
                _ => {}
            }
            if let Some(p) = &g.payload {
                let ins = self.registers_of(&g.in_ports).ok();
                let outs = self.registers_of(&g.out_ports).ok();
                if ins.as_deref() != Some(p.inputs()) || outs.as_deref() != Some(p.outputs()) {
                    errs.push(format!("node {id}: payload typing differs from declared ports"));
                }
            }
        }
        let type_of_src = |s: &Source| -> Option<&String> {
            match s {
                Source::Input(i) => self.inputs.get(*i),
                Source::Port(n, p) => self.nodes.get(n).and_then(|g| g.out_ports.get(*p)),
            }
        };
        let type_of_dst = |t: &Target| -> Option<&String> {
            match t {
                Target::Output(j) => self.outputs.get(*j),
                Target::Port(n, p) => self.nodes.get(n).and_then(|g| g.in_ports.get(*p)),
            }
        };
        let mut used: BTreeMap<Source, usize> = BTreeMap::new();
        for (t, s) in &self.wires {
            match (type_of_src(s), type_of_dst(t)) {
                (Some(a), Some(b)) if a == b => {}
                (Some(a), Some(b)) => errs.push(format!("wire {s:?} -> {t:?} joins `{a}` to `{b}`")),
                _ => errs.push(format!("wire {s:?} -> {t:?} has a dangling end")),
            }
            *used.entry(*s).or_default() += 1;
        }
        for j in 0..self.outputs.len() {
            if !self.wires.contains_key(&Target::Output(j)) {
                errs.push(format!("boundary output {j} is not connected"));
            }
        }
        for i in 0..self.inputs.len() {
            match used.get(&Source::Input(i)) {
                Some(1) => {}
                Some(k) => errs.push(format!("boundary input {i} feeds {k} wires")),
                None => errs.push(format!("boundary input {i} is not connected")),
            }
        }
        for (id, g) in &self.nodes {
            for i in 0..g.in_ports.len() {
                if !self.wires.contains_key(&Target::Port(*id, i)) {
                    errs.push(format!("node {id} input {i} is not connected"));
                }
            }
            for j in 0..g.out_ports.len() {
                match used.get(&Source::Port(*id, j)) {
                    Some(1) => {}
                    Some(k) => errs.push(format!("node {id} output {j} feeds {k} wires")),
                    None => errs.push(format!("node {id} output {j} is not connected")),
                }
            }
        }
        if errs.is_empty() {
            if let Err(DiagramError::Type(e)) = self.topo_order() {
                errs.extend(e);
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(DiagramError::Type(errs))
        }
    }

    /// Retype registers by name, e.g. to instantiate a schematic diagram at small dimensions.
    /// Payloads are dropped since their typing no longer applies.
    pub fn with_registers(&self, overrides: &BTreeMap<String, Register>) -> Diagram {
        let mut d = self.clone();
        for (k, r) in overrides {
            if let Some(slot) = d.registers.get_mut(k) {
                if slot != r {
                    *slot = *r;
                    for g in d.nodes.values_mut() {
                        if g.in_ports.iter().chain(&g.out_ports).any(|p| p == k) {
                            g.payload = None;
                        }
                    }
                }
            }
        }
        d
    }

    /// Drop register entries no wire or port refers to.
    pub fn prune_registers(&mut self) {
        let used: BTreeSet<String> = self
            .inputs
            .iter()
            .chain(&self.outputs)
            .chain(self.nodes.values().flat_map(|g| g.in_ports.iter().chain(&g.out_ports)))
            .cloned()
            .collect();
        self.registers.retain(|k, _| used.contains(k));
    }

    pub fn canonical_form(&self) -> Diagram {
        canon::canonical_form(self)
    }

    /// Labels of holes and boxes without payload, i.e. what a binding must supply.
    pub fn open_labels(&self) -> BTreeSet<String> {
        self.nodes
            .values()
            .filter(|g| g.kind == GenKind::Hole || (g.kind == GenKind::Box && g.payload.is_none()))
            .filter_map(|g| g.label.clone())
            .collect()
    }

    /// Renumber nodes so that ids follow `order`.
    pub fn renumbered(&self, order: &[NodeId]) -> Diagram {
        let map: BTreeMap<NodeId, NodeId> = order.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let nodes = order.iter().enumerate().map(|(i, n)| (i, self.nodes[n].clone())).collect();
        let wires = self
            .wires
            .iter()
            .map(|(t, s)| {
                let t = match t {
                    Target::Port(n, p) => Target::Port(map[n], *p),
                    o => *o,
                };
                let s = match s {
                    Source::Port(n, p) => Source::Port(map[n], *p),
                    o => *o,
                };
                (t, s)
            })
            .collect();
        Diagram { registers: self.registers.clone(), inputs: self.inputs.clone(), outputs: self.outputs.clone(), nodes, wires }
    }
}

pub fn fmt_types(t: &[String]) -> String {
    if t.is_empty() {
        "I".into()
    } else {
        t.join("*")
    }
}

/// Registers named `C<n>` and `Q<n>` need no declaration.
pub fn implicit_register(name: &str) -> Option<Register> {
    let (kind, digits) = name.split_at(1);
    let n: usize = digits.parse().ok().filter(|&n| n > 0 && !digits.starts_with('0'))?;
    match kind {
        "C" => Some(Register::classical(n)),
        "Q" => Some(Register::quantum(n)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn regs() -> BTreeMap<String, Register> {
        BTreeMap::from([("C2".to_string(), Register::classical(2))])
    }

    #[test]
    fn implicit_names() {
        assert_eq!(implicit_register("C2"), Some(Register::classical(2)));
        assert_eq!(implicit_register("Q3"), Some(Register::quantum(3)));
        assert_eq!(implicit_register("C0"), None);
        assert_eq!(implicit_register("C02"), None);
        assert_eq!(implicit_register("X2"), None);
    }

    #[test]
    fn compose_single_nodes() {
        let u = Diagram::single(regs(), Generator::uniform("C2", 2));
        let d = Diagram::single(regs(), Generator::discard("C2"));
        let id = Diagram::identity(regs(), vec!["C2".into()]);
        let dd = u.then(&d.beside(&id).unwrap()).unwrap();
        assert_eq!(dd.nodes.len(), 2);
        assert_eq!(dd.outputs, vec!["C2".to_string()]);
        dd.typecheck().unwrap();
        assert_eq!(dd.source_of(Target::Output(0)), Some(Source::Port(0, 1)));
    }

    #[test]
    fn typecheck_reports_all_errors() {
        let mut d = Diagram::single(regs(), Generator::uniform("C2", 2));
        d.wires.remove(&Target::Output(1));
        d.outputs.push("C9".into());
        let Err(DiagramError::Type(errs)) = d.typecheck() else { panic!() };
        assert!(errs.len() >= 3, "{errs:?}");
    }

    #[test]
    fn then_rejects_mismatch() {
        let u = Diagram::single(regs(), Generator::uniform("C2", 2));
        let d = Diagram::single(regs(), Generator::discard("C2"));
        assert!(u.then(&d).is_err());
    }

    #[test]
    fn json_round_trip() {
        let u = Diagram::single(regs(), Generator::uniform("C2", 2));
        let s = serde_json::to_string(&u).unwrap();
        assert_eq!(serde_json::from_str::<Diagram>(&s).unwrap(), u);
    }
}
