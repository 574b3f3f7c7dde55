//! The rule library. Rules are families indexed by parameters; `instantiate` builds one
//! member from a parameter map and, where a rule reads its shape off the target, from
//! the location.

use std::collections::BTreeMap;

use serde_json::Value;

use super::{EpsExpr, Mode, RewriteError, RewriteRule};
use crate::diagram::{fmt_types, implicit_register, parse, Diagram, GenKind, Generator, NodeId, Source, Target};
use crate::regcalc::Register;

pub type Params = BTreeMap<String, Value>;

/// Names accepted by [`instantiate`].
pub fn rule_names() -> &'static [&'static str] {
    &[
        "uniform_as_spider",
        "uniform_absorbs_discard",
        "causality",
        "spider_fusion",
        "spider_identity",
        "legs_commute",
        "scalar_one",
        "identity_elim",
        "swap_elim",
        "fold",
        "spot_check",
        "soundness",
        "completeness",
    ]
}

struct Ctx<'a> {
    rule: &'a str,
    params: &'a Params,
    regs: &'a BTreeMap<String, Register>,
}

impl Ctx<'_> {
    fn bad(&self, message: impl Into<String>) -> RewriteError {
        RewriteError::BadParams { rule: self.rule.into(), message: message.into() }
    }

    fn str_or(&self, key: &str, default: &str) -> Result<String, RewriteError> {
        match self.params.get(key) {
            None => Ok(default.into()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(v) => Err(self.bad(format!("`{key}` should be a string, got {v}"))),
        }
    }

    fn str(&self, key: &str) -> Result<String, RewriteError> {
        match self.params.get(key) {
            None => Err(self.bad(format!("missing `{key}`"))),
            Some(_) => self.str_or(key, ""),
        }
    }

    fn uint_or(&self, key: &str, default: Option<u64>) -> Result<u64, RewriteError> {
        match (self.params.get(key), default) {
            (None, Some(d)) => Ok(d),
            (None, None) => Err(self.bad(format!("missing `{key}`"))),
            (Some(v), _) => v.as_u64().ok_or_else(|| self.bad(format!("`{key}` should be a nonnegative integer, got {v}"))),
        }
    }

    fn uint(&self, key: &str) -> Result<usize, RewriteError> {
        Ok(self.uint_or(key, None)? as usize)
    }

    /// Declaration of register `name`: the target's, an implicit `C<n>`/`Q<n>`, or `default`.
    fn reg(&self, name: &str, default: Option<Register>) -> Result<Register, RewriteError> {
        self.regs
            .get(name)
            .copied()
            .or_else(|| implicit_register(name))
            .or(default)
            .ok_or_else(|| self.bad(format!("register `{name}` is not declared in the diagram")))
    }

    fn prelude(&self, names: &[(&str, Option<Register>)]) -> Result<String, RewriteError> {
        let mut out = String::new();
        for (n, d) in names {
            let r = self.reg(n, *d)?;
            if implicit_register(n) != Some(r) {
                out.push_str(&format!("reg {n} = {r}\n"));
            }
        }
        Ok(out)
    }

    fn parse(&self, text: &str) -> Result<Diagram, RewriteError> {
        parse(text).map_err(|e| self.bad(format!("pattern does not parse: {e}\n{text}")))
    }

    fn rule(&self, lhs: &str, rhs: &str, cost: EpsExpr, bidirectional: bool, mode: Mode) -> Result<RewriteRule, RewriteError> {
        Ok(RewriteRule {
            name: self.rule.into(),
            lhs: self.parse(lhs)?,
            rhs: self.parse(rhs)?,
            cost,
            bidirectional,
            mode,
            fresh: Vec::new(),
        })
    }
}

fn ids(t: &str, n: usize) -> String {
    if n == 0 {
        "id I".into()
    } else {
        format!("id ({})", vec![t; n].join("*"))
    }
}

/// Parallel composition of the non-trivial parts.
fn beside(parts: &[String]) -> String {
    let kept: Vec<&String> = parts.iter().filter(|p| p.as_str() != "id I").collect();
    if kept.is_empty() {
        "id I".into()
    } else {
        kept.iter().map(|p| format!("({p})")).collect::<Vec<_>>().join(" * ")
    }
}

/// Build the member of family `name` described by `params`. `target` and `location`
/// are consulted by rules whose shape depends on the matched nodes (`fold`, and
/// `causality` when its types are not given).
pub fn instantiate(name: &str, params: &Params, target: &Diagram, location: &[NodeId]) -> Result<RewriteRule, RewriteError> {
    let cx = Ctx { rule: name, params, regs: &target.registers };
    match name {
        "uniform_as_spider" => {
            let t = cx.str("reg")?;
            let k = cx.uint("k")?;
            let m = cx.reg(&t, None)?.total_dim();
            let pre = cx.prelude(&[(&t, None)])?;
            cx.rule(&format!("{pre}uniform {t} {k}"), &format!("{pre}spider {t} 0 {k} * scalar {}", 1.0 / m as f64), EpsExpr::zero(), true, Mode::Exact)
        }
        "uniform_absorbs_discard" => {
            let t = cx.str("reg")?;
            let k = cx.uint("k")?;
            let leg = cx.uint_or("leg", Some(0))? as usize;
            if k == 0 || leg >= k {
                return Err(cx.bad("need k ≥ 1 and leg < k"));
            }
            if cx.reg(&t, None)?.is_quantum() {
                return Err(cx.bad("discards are absorbed only on classical registers"));
            }
            let pre = cx.prelude(&[(&t, None)])?;
            let layer = beside(&[ids(&t, leg), format!("discard {t}"), ids(&t, k - 1 - leg)]);
            let rhs = if k == 1 { "id I".to_string() } else { format!("uniform {t} {}", k - 1) };
            cx.rule(&format!("{pre}uniform {t} {k} ; {layer}"), &format!("{pre}{rhs}"), EpsExpr::zero(), true, Mode::Exact)
        }
        "causality" => {
            let (ins, outs) = match (params.get("ins"), params.get("outs")) {
                (Some(_), Some(_)) => (split_types(&cx.str("ins")?), split_types(&cx.str("outs")?)),
                _ => {
                    let g = location.first().and_then(|n| target.nodes.get(n)).ok_or_else(|| cx.bad("give `ins`/`outs` or a location"))?;
                    (g.in_ports.clone(), g.out_ports.clone())
                }
            };
            let names: Vec<(&str, Option<Register>)> = ins.iter().chain(&outs).map(|n| (n.as_str(), None)).collect();
            let pre = cx.prelude(&names)?;
            let decl = format!("{pre}hole ?c : {} -> {} causal\n", fmt_types(&ins), fmt_types(&outs));
            let discards = beside(&outs.iter().map(|t| format!("discard {t}")).collect::<Vec<_>>());
            let rhs = beside(&ins.iter().map(|t| format!("discard {t}")).collect::<Vec<_>>());
            cx.rule(&format!("{decl}?c ; {discards}"), &format!("{decl}{rhs}"), EpsExpr::zero(), false, Mode::Exact)
        }
        "spider_fusion" => {
            let t = cx.str("reg")?;
            let (a, b, c, d) = (cx.uint("a")?, cx.uint("b")?, cx.uint("c")?, cx.uint("d")?);
            if b == 0 || c == 0 {
                return Err(cx.bad("fusion needs b ≥ 1 and c ≥ 1"));
            }
            let pre = cx.prelude(&[(&t, None)])?;
            let lhs = format!("{pre}{} ; {}", beside(&[format!("spider {t} {a} {b}"), ids(&t, c - 1)]), beside(&[ids(&t, b - 1), format!("spider {t} {c} {d}")]));
            cx.rule(&lhs, &format!("{pre}spider {t} {} {}", a + c - 1, b + d - 1), EpsExpr::zero(), true, Mode::Exact)
        }
        "spider_identity" => {
            let t = cx.str("reg")?;
            let pre = cx.prelude(&[(&t, None)])?;
            cx.rule(&format!("{pre}spider {t} 1 1"), &format!("{pre}id {t}"), EpsExpr::zero(), false, Mode::Exact)
        }
        "legs_commute" => {
            let t = cx.str("reg")?;
            let k = cx.uint("k")?;
            let leg = cx.uint_or("leg", Some(0))? as usize;
            if leg + 1 >= k {
                return Err(cx.bad("need leg + 1 < k"));
            }
            let pre = cx.prelude(&[(&t, None)])?;
            let layer = beside(&[ids(&t, leg), format!("swap {t} {t}"), ids(&t, k - 2 - leg)]);
            cx.rule(&format!("{pre}uniform {t} {k} ; {layer}"), &format!("{pre}uniform {t} {k}"), EpsExpr::zero(), true, Mode::Exact)
        }
        "scalar_one" => cx.rule("scalar 1", "id I", EpsExpr::zero(), true, Mode::Exact),
        "identity_elim" => {
            let t = cx.str("reg")?;
            let r = cx.reg(&t, None)?;
            let regs = BTreeMap::from([(t.clone(), r)]);
            Ok(RewriteRule {
                name: name.into(),
                lhs: Diagram::single(regs.clone(), Generator::identity(&t)),
                rhs: Diagram::identity(regs, vec![t]),
                cost: EpsExpr::zero(),
                bidirectional: false,
                mode: Mode::Exact,
                fresh: Vec::new(),
            })
        }
        "swap_elim" => {
            let a = cx.str("a")?;
            let b = cx.str("b")?;
            let regs = BTreeMap::from([(a.clone(), cx.reg(&a, None)?), (b.clone(), cx.reg(&b, None)?)]);
            Ok(RewriteRule {
                name: name.into(),
                lhs: Diagram::single(regs.clone(), Generator::swap(&a, &b)),
                rhs: Diagram::permutation(regs, vec![a, b], &[1, 0]),
                cost: EpsExpr::zero(),
                bidirectional: false,
                mode: Mode::Exact,
                fresh: Vec::new(),
            })
        }
        "fold" => fold_rule(target, location, &cx.str_or("label", "fold")?),
        "spot_check" => spot_check(&cx),
        "soundness" => soundness(&cx),
        "completeness" => completeness(&cx),
        _ => Err(RewriteError::UnknownRule(name.into())),
    }
}

fn split_types(s: &str) -> Vec<String> {
    s.split('*').map(str::trim).filter(|t| !t.is_empty() && *t != "I").map(String::from).collect()
}

/// Seed registers are named `<base><s>` for width `s·base`; undeclared ones default
/// to a two-level placeholder, since proofs are symbolic in the base.
fn seed_regs(cx: &Ctx) -> Result<(u64, String, String, String), RewriteError> {
    let s = cx.uint_or("s", Some(1))?;
    if s == 0 || !s.is_power_of_two() {
        return Err(cx.bad("`s` must be a power of two"));
    }
    let base = cx.str_or("base", "N")?;
    Ok((s, base.clone(), format!("{base}{s}"), format!("{base}{}", 2 * s)))
}

const PLACEHOLDER_C: Option<Register> = Some(Register::classical(2));
const PLACEHOLDER_Q: Option<Register> = Some(Register::quantum(2));

/// Spot-check: a seeded run of `R<s>` with the seed copied out is close to a fresh
/// uniform output followed by a causal completion.
fn spot_check(cx: &Ctx) -> Result<RewriteRule, RewriteError> {
    let (s, base, ns, n2s) = seed_regs(cx)?;
    let d = cx.str_or("D", "D")?;
    let pre = cx.prelude(&[(&ns, PLACEHOLDER_C), (&n2s, PLACEHOLDER_C), (&d, PLACEHOLDER_Q), ("K", PLACEHOLDER_C)])?;
    let lhs = format!("{pre}hole R{s} : {ns}*{d} -> {n2s}*{d}\n(uniform {ns} 2 * id {d}) ; (id {ns} * R{s})");
    let rhs = format!(
        "{pre}hole blank : {ns}*{d} -> K*{d}\nhole cause : {n2s}*K*{d} -> {d} causal\n\
         (uniform {ns} 2 * id {d}) ; (id {ns} * blank) ; (id {ns} * uniform {n2s} 2 * id (K*{d})) ; (id {ns} * id {n2s} * cause)"
    );
    let mut r = cx.rule(&lhs, &rhs, EpsExpr::eps(s, &base), false, Mode::Axiom)?;
    r.fresh = vec!["blank".into(), "cause".into()];
    Ok(r)
}

/// Soundness of a single run against an arbitrary device state `Gamma`: the output is
/// close to uniform or the run aborted.
fn soundness(cx: &Ctx) -> Result<RewriteRule, RewriteError> {
    let (s, base, ns, n2s) = seed_regs(cx)?;
    let d = cx.str_or("D", "D")?;
    let e = cx.str_or("E", "X")?;
    let pre = cx.prelude(&[(&ns, PLACEHOLDER_C), (&n2s, PLACEHOLDER_C), (&d, PLACEHOLDER_Q), (&e, PLACEHOLDER_Q)])?;
    let decl = format!("{pre}hole R{s} : {ns}*{d} -> {n2s}*{d}\nhole Gamma : I -> {d}*{e}\n");
    let run = format!("(uniform {ns} 2 * Gamma) ; (id {ns} * R{s} * id {e})");
    let lhs = format!("{decl}{run} ; (id ({ns}*{n2s}) * discard {d} * id {e})");
    let rhs = format!("{decl}{run} ; (id {ns} * discard {n2s} * discard {d} * id {e}) ; (id {ns} * uniform {n2s} 1 * id {e})");
    cx.rule(&lhs, &rhs, EpsExpr::delta(s, &base), false, Mode::Axiom)
}

/// Adjusted completeness: a uniform string of width `2s` is within reach of an honest run.
fn completeness(cx: &Ctx) -> Result<RewriteRule, RewriteError> {
    let (s, base, ns, n2s) = seed_regs(cx)?;
    let d = cx.str_or("D", "D")?;
    let pre = cx.prelude(&[(&ns, PLACEHOLDER_C), (&n2s, PLACEHOLDER_C), (&d, PLACEHOLDER_Q)])?;
    let lhs = format!("{pre}uniform {n2s} 1");
    let rhs = format!("{pre}hole R{s} : {ns}*{d} -> {n2s}*{d}\nhole Gamma : I -> {d}\n(uniform {ns} 1 * Gamma) ; R{s} ; (id {n2s} * discard {d})");
    let cost = EpsExpr::delta(s, &base).plus(&EpsExpr::delta(s, &base));
    let mut r = cx.rule(&lhs, &rhs, cost, false, Mode::Axiom)?;
    r.fresh = vec!["Gamma".into()];
    Ok(r)
}

/// Fold the nodes at `location` into one hole named `label`. Boundary wires are ordered
/// by member order, then port. The hole is causal when every member is.
pub fn fold_rule(target: &Diagram, location: &[NodeId], label: &str) -> Result<RewriteRule, RewriteError> {
    let bad = |m: String| RewriteError::BadParams { rule: "fold".into(), message: m };
    if location.is_empty() {
        return Err(bad("nothing to fold".into()));
    }
    let pos: BTreeMap<NodeId, usize> = location.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    if pos.len() != location.len() {
        return Err(bad("location repeats a node".into()));
    }
    if target.nodes.iter().any(|(n, g)| !pos.contains_key(n) && g.label.as_deref() == Some(label)) {
        return Err(bad(format!("label `{label}` is already in use")));
    }
    let fwd = target.forward();
    let mut sub = Diagram { registers: target.registers.clone(), ..Diagram::default() };
    let mut causal = true;
    for (i, n) in location.iter().enumerate() {
        let g = target.nodes.get(n).ok_or_else(|| bad(format!("no node {n}")))?;
        let (allowed, c) = match g.kind {
            GenKind::Box | GenKind::Hole => (true, g.causal),
            GenKind::Uniform | GenKind::Discard | GenKind::Swap | GenKind::Identity => (true, true),
            GenKind::Scalar => (true, g.scalar == Some(1.0)),
            GenKind::Spider => (!g.in_ports.is_empty(), g.in_ports.len() == 1),
        };
        if !allowed {
            return Err(bad(format!("node {n} (`{}`) is not stochastic", g.signature())));
        }
        causal &= c;
        sub.nodes.insert(i, g.clone());
    }
    for (i, n) in location.iter().enumerate() {
        let g = &target.nodes[n];
        for p in 0..g.in_ports.len() {
            let src = target.wires.get(&Target::Port(*n, p)).ok_or_else(|| bad("diagram is not fully wired".into()))?;
            let s = match src {
                Source::Port(m, q) if pos.contains_key(m) => Source::Port(pos[m], *q),
                _ => {
                    sub.inputs.push(g.in_ports[p].clone());
                    Source::Input(sub.inputs.len() - 1)
                }
            };
            sub.wires.insert(Target::Port(i, p), s);
        }
        for q in 0..g.out_ports.len() {
            let dst = fwd.get(&Source::Port(*n, q)).ok_or_else(|| bad("diagram is not fully wired".into()))?;
            if !matches!(dst, Target::Port(m, _) if pos.contains_key(m)) {
                sub.outputs.push(g.out_ports[q].clone());
                sub.wires.insert(Target::Output(sub.outputs.len() - 1), Source::Port(i, q));
            }
        }
    }
    sub.prune_registers();
    let hole = Generator::hole(label, sub.inputs.clone(), sub.outputs.clone(), causal);
    let rhs = Diagram::single(sub.registers.clone(), hole);
    Ok(RewriteRule { name: "fold".into(), lhs: sub, rhs, cost: EpsExpr::zero(), bidirectional: false, mode: Mode::Abstraction, fresh: Vec::new() })
}

fn p(pairs: &[(&str, Value)]) -> Params {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// One instance of every exact rule per small register, for self-tests.
pub fn builtin_rules() -> Vec<RewriteRule> {
    let empty = Diagram::default();
    let mut out = Vec::new();
    let mut add = |name: &str, params: Params| out.push(instantiate(name, &params, &empty, &[]).expect("builtin instance"));
    for t in ["C2", "C3", "Q2"] {
        let r = || Value::from(t);
        add("uniform_as_spider", p(&[("reg", r()), ("k", 3.into())]));
        if t != "Q2" {
            add("uniform_absorbs_discard", p(&[("reg", r()), ("k", 1.into())]));
            add("uniform_absorbs_discard", p(&[("reg", r()), ("k", 3.into()), ("leg", 1.into())]));
        }
        add("causality", p(&[("ins", format!("{t}*C2").into()), ("outs", r())]));
        add("spider_fusion", p(&[("reg", r()), ("a", 0.into()), ("b", 3.into()), ("c", 1.into()), ("d", 2.into())]));
        add("spider_fusion", p(&[("reg", r()), ("a", 1.into()), ("b", 2.into()), ("c", 2.into()), ("d", 1.into())]));
        add("spider_identity", p(&[("reg", r())]));
        add("legs_commute", p(&[("reg", r()), ("k", 3.into()), ("leg", 1.into())]));
        add("identity_elim", p(&[("reg", r())]));
        add("swap_elim", p(&[("a", r()), ("b", "C2".into())]));
    }
    add("scalar_one", Params::new());
    out
}

/// The approximate axioms at unit width.
pub fn axiom_rules() -> Vec<RewriteRule> {
    let empty = Diagram::default();
    ["spot_check", "soundness", "completeness"]
        .iter()
        .map(|n| instantiate(n, &Params::new(), &empty, &[]).expect("axiom instance"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{evaluate, Bindings};
    use crate::regcalc::{self, spider};
    use crate::rewrite::{apply_rule, find_matches, State};

    #[test]
    fn sides_share_typing() {
        for r in builtin_rules().iter().chain(&axiom_rules()) {
            assert_eq!(r.lhs.inputs, r.rhs.inputs, "{}", r.name);
            assert_eq!(r.lhs.outputs, r.rhs.outputs, "{}", r.name);
            r.lhs.typecheck().unwrap();
            r.rhs.typecheck().unwrap();
        }
    }

    #[test]
    fn absorbs_discard_needs_classical() {
        assert!(instantiate("uniform_absorbs_discard", &p(&[("reg", "Q2".into()), ("k", 1.into())]), &Diagram::default(), &[]).is_err());
    }

    #[test]
    fn absorbs_discard_drops_a_leg() {
        let r = instantiate("uniform_absorbs_discard", &p(&[("reg", "C2".into()), ("k", 3.into())]), &Diagram::default(), &[]).unwrap();
        let l = evaluate(&r.lhs, &Bindings::new()).unwrap();
        assert!(l.approx_eq(&regcalc::uniform(Register::classical(2), 2).unwrap(), 1e-15));
    }

    #[test]
    fn fusion_of_three_and_two_legs() {
        let r = instantiate("spider_fusion", &p(&[("reg", "C2".into()), ("a", 0.into()), ("b", 3.into()), ("c", 1.into()), ("d", 2.into())]), &Diagram::default(), &[]).unwrap();
        let l = evaluate(&r.lhs, &Bindings::new()).unwrap();
        assert!(l.approx_eq(&spider(Register::classical(2), 4).unwrap(), 1e-15));
    }

    #[test]
    fn causality_needs_causal_hole() {
        let t = parse("hole f : C2 -> C3\nf ; discard C3").unwrap();
        let r = instantiate("causality", &Params::new(), &t, &[0]).unwrap();
        let err = apply_rule(&State::new(t), &r, &[0, 1]).unwrap_err();
        assert!(err.to_string().contains("pattern wants"), "{err}");
    }

    #[test]
    fn spot_check_cost_scales() {
        let r = instantiate("spot_check", &p(&[("s", 2.into())]), &Diagram::default(), &[]).unwrap();
        assert_eq!(r.cost, EpsExpr::eps(2, "N"));
        assert_eq!(r.lhs.inputs, vec!["D".to_string()]);
        assert_eq!(r.lhs.outputs, vec!["N2".to_string(), "N4".into(), "D".into()]);
    }

    #[test]
    fn spot_check_wrong_width_fails() {
        let t = parse("reg N1 = classical 2\nreg N2 = classical 2\nreg D = quantum 2\nhole R1 : N1*D -> N2*D\n(uniform N1 2 * id D) ; (id N1 * R1)").unwrap();
        let r2 = instantiate("spot_check", &p(&[("s", 2.into())]), &t, &[]).unwrap();
        assert!(find_matches(&t, &r2.lhs).is_empty());
        let r1 = instantiate("spot_check", &p(&[("s", 1.into())]), &t, &[]).unwrap();
        assert_eq!(find_matches(&t, &r1.lhs).len(), 1);
    }

    #[test]
    fn fold_orders_boundary() {
        let t = parse("hole f : C2 -> C3*C4\nhole g : C4*C5 -> C2 causal\n(f * id C5) ; (id C3 * g)").unwrap();
        let r = fold_rule(&t, &[1, 0], "h").unwrap();
        let g = &r.rhs.nodes[&0];
        assert_eq!(g.in_ports, vec!["C5".to_string(), "C2".into()]);
        assert_eq!(g.out_ports, vec!["C2".to_string(), "C3".into()]);
        assert!(!g.causal);
        let (s, _) = apply_rule(&State::new(t), &r, &[1, 0]).unwrap();
        assert_eq!(s.diagram.nodes.len(), 1);
    }

    #[test]
    fn fold_rejects_unnormalized_spider() {
        let t = parse("spider C2 0 2").unwrap();
        assert!(fold_rule(&t, &[0], "h").is_err());
    }
}
