//! Budgeted rewriting of diagrams.
//!
//! A rule is a pair of pattern diagrams. A match sends every pattern node to a distinct
//! node of the target; the location of a match is the list of target ids in pattern-id
//! order. Node ids of the target are stable across steps and new nodes get fresh ids,
//! so a proof script can name locations by id.
//!
//! Pattern holes whose label starts with `?` are metavariables: they match any hole or
//! box with the same port types (and the causal flag, if the pattern sets it), and an
//! occurrence on the right-hand side is replaced by whatever was matched. Other labels
//! match literally.

mod eps;
pub mod library;
mod rules;
mod script;
pub mod witness;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagram::{Diagram, DiagramError, GenKind, Generator, NodeId, Source, Target};

pub use eps::{budget_eval, Atom, BudgetError, EpsExpr, EpsFn};
pub use rules::{axiom_rules, builtin_rules, fold_rule, instantiate, rule_names, Params};
pub use script::{compare_numerically, random_bindings, run_script, shrink, BudgetOptions, Failure, NumericCheck, NumericOptions, ProofScript, ScriptReport, Step, StepReport, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Both sides denote the same process for every binding.
    Exact,
    /// An approximate inclusion assumed with a symbolic cost.
    Axiom,
    /// Replaces a subdiagram by a fresh hole of a class containing it.
    Abstraction,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Forward,
    Backward,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewriteRule {
    pub name: String,
    pub lhs: Diagram,
    pub rhs: Diagram,
    pub cost: EpsExpr,
    pub bidirectional: bool,
    pub mode: Mode,
    /// Hole labels on the right-hand side that are renamed to an unused `label<k>`.
    pub fresh: Vec<String>,
}

impl RewriteRule {
    /// The rule read right to left.
    pub fn reversed(&self) -> Result<RewriteRule, RewriteError> {
        if !self.bidirectional {
            return Err(RewriteError::NotReversible(self.name.clone()));
        }
        Ok(RewriteRule { lhs: self.rhs.clone(), rhs: self.lhs.clone(), ..self.clone() })
    }

    pub fn oriented(&self, dir: Direction) -> Result<RewriteRule, RewriteError> {
        match dir {
            Direction::Forward => Ok(self.clone()),
            Direction::Backward => self.reversed(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RewriteError {
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("rule `{rule}`: {message}")]
    BadParams { rule: String, message: String },
    #[error("rule `{0}` cannot be applied backwards")]
    NotReversible(String),
    #[error("no match at {location:?}: {reason}")]
    NoMatch { location: Vec<NodeId>, reason: String, candidates: Vec<Vec<NodeId>> },
    #[error("side condition failed: {0}")]
    SideCondition(String),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
}

/// A diagram together with the budget spent to reach it.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub diagram: Diagram,
    pub budget: EpsExpr,
}

impl State {
    pub fn new(diagram: Diagram) -> Self {
        State { diagram, budget: EpsExpr::zero() }
    }
}

/// Result of a successful match.
#[derive(Clone, Debug, PartialEq)]
pub struct Match {
    pub location: Vec<NodeId>,
    /// Where each pattern input wire comes from in the target.
    pub inputs: Vec<Source>,
    /// Where each pattern output wire goes in the target.
    pub outputs: Vec<Target>,
    /// Metavariable bindings.
    pub meta: BTreeMap<String, Generator>,
}

fn compatible(p: &Generator, t: &Generator) -> bool {
    if p.in_ports != t.in_ports || p.out_ports != t.out_ports {
        return false;
    }
    match p.kind {
        GenKind::Hole if p.label.as_deref().is_some_and(|l| l.starts_with('?')) => t.is_labeled() && (!p.causal || t.causal),
        GenKind::Box | GenKind::Hole => p.kind == t.kind && p.label == t.label && p.causal == t.causal,
        GenKind::Scalar => t.kind == GenKind::Scalar && p.scalar == t.scalar,
        _ => p.kind == t.kind,
    }
}

fn meta_label(g: &Generator) -> Option<&str> {
    match (g.kind, g.label.as_deref()) {
        (GenKind::Hole, Some(l)) if l.starts_with('?') => Some(l),
        _ => None,
    }
}

/// Check a full candidate assignment of pattern nodes to target nodes.
pub fn check_match(target: &Diagram, pattern: &Diagram, location: &[NodeId]) -> Result<Match, String> {
    let pids: Vec<NodeId> = pattern.nodes.keys().copied().collect();
    if location.len() != pids.len() {
        return Err(format!("pattern has {} nodes, location names {}", pids.len(), location.len()));
    }
    let map: BTreeMap<NodeId, NodeId> = pids.iter().copied().zip(location.iter().copied()).collect();
    let image: BTreeSet<NodeId> = location.iter().copied().collect();
    if image.len() != location.len() {
        return Err("location repeats a node".into());
    }
    let mut meta: BTreeMap<String, Generator> = BTreeMap::new();
    for (p, t) in &map {
        let pg = &pattern.nodes[p];
        let Some(tg) = target.nodes.get(t) else { return Err(format!("no node {t}")) };
        if !compatible(pg, tg) {
            return Err(format!("node {t} is `{}`, pattern wants `{}`", tg.signature(), pg.signature()));
        }
        if let Some(l) = meta_label(pg) {
            match meta.get(l) {
                Some(prev) if prev != tg => return Err(format!("metavariable {l} bound twice differently")),
                _ => {
                    meta.insert(l.to_string(), tg.clone());
                }
            }
        }
    }
    let fwd = target.forward();
    let mut inputs: Vec<Option<Source>> = vec![None; pattern.inputs.len()];
    let mut outputs: Vec<Option<Target>> = vec![None; pattern.outputs.len()];
    for (pt, ps) in &pattern.wires {
        match (pt, ps) {
            (Target::Port(n, i), Source::Port(m, j)) => {
                let want = Source::Port(map[m], *j);
                if target.wires.get(&Target::Port(map[n], *i)) != Some(&want) {
                    return Err(format!("wire {}.{} -> {}.{} missing", map[m], j, map[n], i));
                }
            }
            (Target::Port(n, i), Source::Input(k)) => {
                let src = *target.wires.get(&Target::Port(map[n], *i)).ok_or("target is not fully wired")?;
                if let Source::Port(m, _) = src {
                    if image.contains(&m) {
                        return Err(format!("input of node {} comes from inside the match", map[n]));
                    }
                }
                inputs[*k] = Some(src);
            }
            (Target::Output(k), Source::Port(m, j)) => {
                let dst = *fwd.get(&Source::Port(map[m], *j)).ok_or("target is not fully wired")?;
                if let Target::Port(n, _) = dst {
                    if image.contains(&n) {
                        return Err(format!("output of node {} stays inside the match", map[m]));
                    }
                }
                outputs[*k] = Some(dst);
            }
            (Target::Output(_), Source::Input(_)) => return Err("pattern has a bare wire".into()),
        }
    }
    if !convex(target, &image, &fwd) {
        return Err("matched region is not convex".into());
    }
    Ok(Match {
        location: location.to_vec(),
        inputs: inputs.into_iter().map(|s| s.expect("pattern inputs are wired")).collect(),
        outputs: outputs.into_iter().map(|t| t.expect("pattern outputs are wired")).collect(),
        meta,
    })
}

/// No path leaves the region and comes back.
fn convex(d: &Diagram, image: &BTreeSet<NodeId>, fwd: &BTreeMap<Source, Target>) -> bool {
    let succ = |n: NodeId| -> Vec<NodeId> {
        (0..d.nodes[&n].out_ports.len())
            .filter_map(|j| match fwd.get(&Source::Port(n, j)) {
                Some(Target::Port(m, _)) => Some(*m),
                _ => None,
            })
            .collect()
    };
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<NodeId> = image.iter().flat_map(|&n| succ(n)).filter(|m| !image.contains(m)).collect();
    while let Some(n) = queue.pop_front() {
        if !seen.insert(n) {
            continue;
        }
        for m in succ(n) {
            if image.contains(&m) {
                return false;
            }
            queue.push_back(m);
        }
    }
    true
}

/// Every location at which `pattern` matches `target`.
pub fn find_matches(target: &Diagram, pattern: &Diagram) -> Vec<Match> {
    let pids: Vec<NodeId> = pattern.nodes.keys().copied().collect();
    let mut out = Vec::new();
    let mut loc = Vec::new();
    search(target, pattern, &pids, &mut loc, &mut out);
    out
}

fn search(target: &Diagram, pattern: &Diagram, pids: &[NodeId], loc: &mut Vec<NodeId>, out: &mut Vec<Match>) {
    if loc.len() == pids.len() {
        if let Ok(m) = check_match(target, pattern, loc) {
            out.push(m);
        }
        return;
    }
    let p = pids[loc.len()];
    let pg = &pattern.nodes[&p];
    for (&t, tg) in &target.nodes {
        if loc.contains(&t) || !compatible(pg, tg) {
            continue;
        }
        // prune on wires between already placed pattern nodes
        let placed: BTreeMap<NodeId, NodeId> = pids.iter().copied().zip(loc.iter().copied().chain([t])).collect();
        let consistent = pattern.wires.iter().all(|(pt, ps)| match (pt, ps) {
            (Target::Port(n, i), Source::Port(m, j)) => match (placed.get(n), placed.get(m)) {
                (Some(&tn), Some(&tm)) => target.wires.get(&Target::Port(tn, *i)) == Some(&Source::Port(tm, *j)),
                _ => true,
            },
            _ => true,
        });
        if consistent {
            loc.push(t);
            search(target, pattern, pids, loc, out);
            loc.pop();
        }
    }
}

fn fresh_label(used: &BTreeSet<String>, base: &str) -> String {
    (1..).map(|k| format!("{base}{k}")).find(|l| !used.contains(l)).expect("unbounded")
}

fn labels(d: &Diagram) -> BTreeSet<String> {
    d.nodes.values().filter_map(|g| g.label.clone()).collect()
}

/// Replace the matched region by the rule's right-hand side. Returns the new state and
/// the ids given to right-hand-side nodes, in right-hand-side id order.
pub fn apply_rule(state: &State, rule: &RewriteRule, location: &[NodeId]) -> Result<(State, Vec<NodeId>), RewriteError> {
    let target = &state.diagram;
    let m = check_match(target, &rule.lhs, location).map_err(|reason| RewriteError::NoMatch {
        location: location.to_vec(),
        reason,
        candidates: find_matches(target, &rule.lhs).into_iter().map(|m| m.location).collect(),
    })?;
    let mut d = target.clone();
    for (k, r) in &rule.rhs.registers {
        match d.registers.get(k) {
            Some(x) if x != r => return Err(RewriteError::SideCondition(format!("register `{k}` is {x} in the diagram but {r} in the rule"))),
            _ => {
                d.registers.insert(k.clone(), *r);
            }
        }
    }
    let image: BTreeSet<NodeId> = location.iter().copied().collect();
    d.wires.retain(|t, s| {
        let t_in = matches!(t, Target::Port(n, _) if image.contains(n));
        let s_in = matches!(s, Source::Port(n, _) if image.contains(n));
        !(t_in || s_in)
    });
    // labels of matched literal holes carry over so a right-hand occurrence reuses the node
    let mut matched: BTreeMap<String, Generator> = m.meta.clone();
    for (p, t) in rule.lhs.nodes.keys().zip(location) {
        let g = &rule.lhs.nodes[p];
        if g.is_labeled() && meta_label(g).is_none() {
            matched.insert(g.label.clone().expect("labeled"), target.nodes[t].clone());
        }
    }
    for n in &image {
        d.nodes.remove(n);
    }
    let mut used = labels(&d);
    used.extend(labels(target));
    let mut renamed: BTreeMap<String, String> = BTreeMap::new();
    for base in &rule.fresh {
        let l = fresh_label(&used, base);
        used.insert(l.clone());
        renamed.insert(base.clone(), l);
    }
    let first = target.next_id().max(d.next_id());
    let mut ids = BTreeMap::new();
    for (k, (&rid, g)) in rule.rhs.nodes.iter().enumerate() {
        let id = first + k;
        ids.insert(rid, id);
        let mut g = g.clone();
        if let Some(l) = g.label.clone() {
            if let Some(bound) = matched.get(&l) {
                g = bound.clone();
            } else if let Some(nl) = renamed.get(&l) {
                g.label = Some(nl.clone());
            } else if l.starts_with('?') {
                return Err(RewriteError::SideCondition(format!("metavariable {l} is not bound by the left-hand side")));
            }
        }
        d.nodes.insert(id, g);
    }
    for (rt, rs) in &rule.rhs.wires {
        let s = match rs {
            Source::Input(i) => m.inputs[*i],
            Source::Port(n, j) => Source::Port(ids[n], *j),
        };
        let t = match rt {
            Target::Output(o) => m.outputs[*o],
            Target::Port(n, i) => Target::Port(ids[n], *i),
        };
        d.wires.insert(t, s);
    }
    d.typecheck()?;
    let new_ids = ids.values().copied().collect();
    Ok((State { diagram: d, budget: state.budget.plus(&rule.cost) }, new_ids))
}
