//! Proof scripts: an initial diagram, a list of rule applications and a claimed budget.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::witness::{measure_axiom, AxiomMeasurement};
use super::{apply_rule, budget_eval, instantiate, EpsExpr, EpsFn, Direction, Mode, Params, RewriteError, RewriteRule, State};
use crate::diagram::{evaluate, parse, print, Bindings, Diagram, DiagramError, GenKind, NodeId};
use crate::regcalc::random::{random_channel, random_stochastic};
use crate::regcalc::{structural_predicates, Register, FORMAT_VERSION};

fn is_forward(d: &Direction) -> bool {
    *d == Direction::Forward
}

fn format_version() -> u32 {
    FORMAT_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub rule: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: Params,
    pub location: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "is_forward")]
    pub direction: Direction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProofScript {
    #[serde(default = "format_version")]
    pub format_version: u32,
    pub name: String,
    /// Initial diagram in the text syntax.
    pub initial: String,
    pub steps: Vec<Step>,
    pub claimed_total: EpsExpr,
    /// Expected final diagram, compared up to canonical form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

/// Instantiation used to check steps numerically.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NumericOptions {
    /// Registers with a larger base dimension are shrunk to this one.
    pub max_base: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for NumericOptions {
    fn default() -> Self {
        NumericOptions { max_base: 2, seed: 0x5eed, tol: crate::regcalc::DEFAULT_TOL }
    }
}

/// Concrete error function used to put a number on the total.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BudgetOptions {
    pub eps_fn: EpsFn,
    pub n: f64,
    pub k_max: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Verified,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NumericCheck {
    /// Largest entrywise difference between the evaluated diagrams before and after.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_entry_diff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axiom: Option<AxiomMeasurement>,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepReport {
    pub index: usize,
    pub rule: String,
    pub mode: Mode,
    pub direction: Direction,
    pub location: Vec<NodeId>,
    pub new_nodes: Vec<NodeId>,
    pub cost: String,
    pub budget: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub numeric: Option<NumericCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<Vec<NodeId>>,
    /// Line diff between the expected and the actual canonical forms.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diff: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScriptReport {
    pub format_version: u32,
    pub name: String,
    pub verdict: Verdict,
    pub steps: Vec<StepReport>,
    pub total: String,
    pub total_expr: EpsExpr,
    pub claimed_total: String,
    pub claim_matches: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_matches: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_error: Option<String>,
    pub final_diagram: String,
    pub failures: Vec<Failure>,
}

fn line_diff(expected: &str, actual: &str) -> Vec<String> {
    similar::TextDiff::from_lines(expected, actual)
        .iter_all_changes()
        .filter(|c| c.tag() != similar::ChangeTag::Equal)
        .map(|c| {
            let sign = if c.tag() == similar::ChangeTag::Delete { "-" } else { "+" };
            format!("{sign} {}", c.value().trim_end())
        })
        .collect()
}

/// Shrink every register to at most `max_base` levels.
pub fn shrink(d: &Diagram, max_base: usize) -> Diagram {
    let overrides: BTreeMap<String, Register> = d
        .registers
        .iter()
        .filter(|(_, r)| r.base_dim > max_base)
        .map(|(k, r)| (k.clone(), Register { kind: r.kind, base_dim: max_base }))
        .collect();
    d.with_registers(&overrides)
}

/// Random tensors for the open labels of the given diagrams: channels for causal holes,
/// scaled channels otherwise. A label keeps one tensor across diagrams.
pub fn random_bindings(ds: &[&Diagram], rng: &mut ChaCha8Rng) -> Result<Bindings, DiagramError> {
    let mut b = Bindings::new();
    for d in ds {
        for g in d.nodes.values() {
            let open = g.kind == GenKind::Hole || (g.kind == GenKind::Box && g.payload.is_none());
            let Some(label) = g.label.as_deref().filter(|_| open) else { continue };
            if b.get(label).is_some() {
                continue;
            }
            let ins = d.registers_of(&g.in_ports)?;
            let outs = d.registers_of(&g.out_ports)?;
            let p = if g.causal { random_channel(rng, &ins, &outs, 2)? } else { random_stochastic(rng, &ins, &outs, 0.5)? };
            b.insert(label, p);
        }
    }
    Ok(b)
}

/// Evaluate two diagrams under shared random bindings and return the largest entry gap.
pub fn compare_numerically(a: &Diagram, b: &Diagram, extra: &Bindings, rng: &mut ChaCha8Rng) -> Result<f64, DiagramError> {
    let mut bind = random_bindings(&[a, b], rng)?;
    for (k, v) in &extra.bindings {
        bind.insert(k, v.clone());
    }
    let x = evaluate(a, &bind)?;
    let y = evaluate(b, &bind)?;
    if x.inputs() != y.inputs() || x.outputs() != y.outputs() {
        return Err(DiagramError::Eval("the two sides have different typing".into()));
    }
    Ok(x.max_abs_diff(&y))
}

fn check_step(rule: &RewriteRule, before: &Diagram, after: &Diagram, opts: &NumericOptions, index: usize) -> NumericCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let small_before = shrink(before, opts.max_base);
    let small_after = shrink(after, opts.max_base);
    let fail = |e: String| NumericCheck { max_entry_diff: None, axiom: None, ok: false, note: Some(e) };
    match rule.mode {
        Mode::Exact => match compare_numerically(&small_before, &small_after, &Bindings::new(), &mut rng) {
            Ok(d) => NumericCheck { max_entry_diff: Some(d), axiom: None, ok: d <= opts.tol, note: None },
            Err(e) => fail(e.to_string()),
        },
        Mode::Abstraction => {
            // the folded region, evaluated under the same random bindings, is the witness
            let mut run = || -> Result<NumericCheck, DiagramError> {
                let mut bind = random_bindings(&[&small_before], &mut rng)?;
                let sub = shrink(&rule.lhs, opts.max_base);
                let folded = evaluate(&sub, &bind)?;
                let hole = rule.rhs.nodes.values().next().expect("fold has one node");
                let preds = structural_predicates(&folded, opts.tol);
                let in_class = preds.stochastic && (!hole.causal || preds.causal);
                // the fold may reuse a label from inside the region, so each side gets its own bindings
                let x = evaluate(&small_before, &bind)?;
                bind.insert(hole.label.as_deref().expect("labeled"), folded);
                let d = x.max_abs_diff(&evaluate(&small_after, &bind)?);
                let note = (!in_class).then(|| format!("folded region is not {}", if hole.causal { "causal" } else { "stochastic" }));
                Ok(NumericCheck { max_entry_diff: Some(d), axiom: None, ok: in_class && d <= opts.tol, note })
            };
            run().unwrap_or_else(|e| fail(e.to_string()))
        }
        Mode::Axiom => match measure_axiom(rule) {
            Some(Ok(m)) => NumericCheck { max_entry_diff: None, axiom: Some(m), ok: true, note: Some("measured, not asserted".into()) },
            Some(Err(e)) => fail(e.to_string()),
            None => NumericCheck { max_entry_diff: None, axiom: None, ok: true, note: Some("no toy instance for these registers".into()) },
        },
    }
}

/// Replay a script. Every step must apply; the accumulated budget must equal the claim
/// symbolically; the final diagram must match the target if one is given. With
/// `numeric`, exact and folding steps are also checked at small dimensions and axiom
/// steps get a measured toy distance.
pub fn run_script(s: &ProofScript, budget: Option<&BudgetOptions>, numeric: Option<&NumericOptions>) -> ScriptReport {
    let mut failures = Vec::new();
    let mut steps = Vec::new();
    let report = |state: Option<&State>, steps: Vec<StepReport>, failures: Vec<Failure>| {
        let total_expr = state.map(|st| st.budget.clone()).unwrap_or_default();
        let claim_matches = state.is_some() && total_expr == s.claimed_total;
        let mut failures = failures;
        if state.is_some() && !claim_matches {
            failures.push(Failure { step: None, message: format!("total {} differs from claimed {}", total_expr, s.claimed_total), candidates: vec![], diff: vec![] });
        }
        let mut target_matches = None;
        if let (Some(st), Some(t)) = (state, &s.target) {
            match parse(t) {
                Ok(td) => {
                    let want = td.canonical_form();
                    let got = st.diagram.canonical_form();
                    let ok = want == got;
                    target_matches = Some(ok);
                    if !ok {
                        failures.push(Failure { step: None, message: "final diagram differs from target".into(), candidates: vec![], diff: line_diff(&print(&want), &print(&got)) });
                    }
                }
                Err(e) => failures.push(Failure { step: None, message: format!("target does not parse: {e}"), candidates: vec![], diff: vec![] }),
            }
        }
        let (budget_value, budget_error) = match budget.map(|b| budget_eval(&total_expr, &b.eps_fn, b.n, b.k_max)) {
            Some(Ok(v)) => (Some(v), None),
            Some(Err(e)) => (None, Some(e.to_string())),
            None => (None, None),
        };
        let ok = failures.is_empty() && steps.iter().all(|r: &StepReport| r.numeric.as_ref().is_none_or(|n| n.ok));
        ScriptReport {
            format_version: FORMAT_VERSION,
            name: s.name.clone(),
            verdict: if ok { Verdict::Verified } else { Verdict::Failed },
            steps,
            total: total_expr.to_string(),
            total_expr,
            claimed_total: s.claimed_total.to_string(),
            claim_matches,
            target_matches,
            budget_value,
            budget_error,
            final_diagram: state.map(|st| print(&st.diagram)).unwrap_or_default(),
            failures,
        }
    };
    let initial = match parse(&s.initial) {
        Ok(d) => d,
        Err(e) => {
            failures.push(Failure { step: None, message: format!("initial diagram: {e}"), candidates: vec![], diff: vec![] });
            return report(None, steps, failures);
        }
    };
    let mut state = State::new(initial);
    for (i, step) in s.steps.iter().enumerate() {
        let rule = instantiate(&step.rule, &step.params, &state.diagram, &step.location).and_then(|r| r.oriented(step.direction));
        let applied = rule.and_then(|r| apply_rule(&state, &r, &step.location).map(|x| (r, x)));
        match applied {
            Ok((rule, (next, new_nodes))) => {
                let numeric = numeric.map(|o| check_step(&rule, &state.diagram, &next.diagram, o, i));
                let failed = numeric.as_ref().is_some_and(|n| !n.ok);
                steps.push(StepReport {
                    index: i,
                    rule: step.rule.clone(),
                    mode: rule.mode,
                    direction: step.direction,
                    location: step.location.clone(),
                    new_nodes,
                    cost: rule.cost.to_string(),
                    budget: next.budget.to_string(),
                    numeric,
                });
                state = next;
                if failed {
                    failures.push(Failure { step: Some(i), message: "numeric check failed".into(), candidates: vec![], diff: vec![] });
                    return report(Some(&state), steps, failures);
                }
            }
            Err(e) => {
                let (candidates, diff) = match (&e, instantiate(&step.rule, &step.params, &state.diagram, &step.location)) {
                    (RewriteError::NoMatch { candidates, .. }, Ok(r)) => {
                        let pat = r.oriented(step.direction).map(|r| r.lhs).unwrap_or(r.lhs);
                        (candidates.clone(), line_diff(&print(&pat.canonical_form()), &print(&state.diagram.canonical_form())))
                    }
                    _ => (vec![], vec![]),
                };
                failures.push(Failure { step: Some(i), message: e.to_string(), candidates, diff });
                let mut r = report(Some(&state), steps, failures);
                r.verdict = Verdict::Failed;
                return r;
            }
        }
    }
    report(Some(&state), steps, failures)
}
