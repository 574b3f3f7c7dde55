//! Generators for the shipped proof scripts under `data/scripts`.
//!
//! Each generator replays its steps while it builds them, so locations are read off
//! the current diagram instead of being written by hand.

use serde_json::Value;

use super::{apply_rule, instantiate, Direction, EpsExpr, Params, ProofScript, State, Step};
use crate::diagram::{parse, GenKind, NodeId, Source, Target};

const SEED_NOTE: &str = "# seed registers are named by width; their dimension is a placeholder\n";

struct Builder {
    state: State,
    script: ProofScript,
    blank: Option<NodeId>,
    causal: Option<NodeId>,
}

fn params(pairs: &[(&str, Value)]) -> Params {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

impl Builder {
    fn new(name: &str, initial: String) -> Self {
        let d = parse(&initial).unwrap_or_else(|e| panic!("{name}: initial diagram: {e}\n{initial}"));
        Builder {
            state: State::new(d),
            script: ProofScript { format_version: 1, name: name.into(), initial, steps: Vec::new(), claimed_total: EpsExpr::zero(), target: None },
            blank: None,
            causal: None,
        }
    }

    fn find(&self, what: &str, pred: impl Fn(&crate::diagram::Generator) -> bool) -> NodeId {
        let hits: Vec<NodeId> = self.state.diagram.nodes.iter().filter(|(_, g)| pred(g)).map(|(n, _)| *n).collect();
        assert_eq!(hits.len(), 1, "{}: expected one {what}, found {hits:?}", self.script.name);
        hits[0]
    }

    fn label(&self, l: &str) -> NodeId {
        self.find(l, |g| g.label.as_deref() == Some(l))
    }

    fn uniform(&self, reg: &str) -> NodeId {
        self.find(&format!("uniform on {reg}"), |g| g.kind == GenKind::Uniform && g.out_ports[0] == reg)
    }

    /// The discard fed by output `port` of `node`.
    fn discard_after(&self, node: NodeId, port: usize) -> NodeId {
        match self.state.diagram.forward().get(&Source::Port(node, port)) {
            Some(Target::Port(n, 0)) if self.state.diagram.nodes[n].kind == GenKind::Discard => *n,
            other => panic!("{}: node {node} port {port} feeds {other:?}, not a discard", self.script.name),
        }
    }

    fn step(&mut self, rule: &str, p: Params, location: Vec<NodeId>, direction: Direction) -> Vec<NodeId> {
        let r = instantiate(rule, &p, &self.state.diagram, &location)
            .and_then(|r| r.oriented(direction))
            .unwrap_or_else(|e| panic!("{}: {rule}: {e}", self.script.name));
        let (next, ids) = apply_rule(&self.state, &r, &location).unwrap_or_else(|e| panic!("{}: {rule} at {location:?}: {e}", self.script.name));
        self.state = next;
        self.script.steps.push(Step { rule: rule.into(), params: p, location, direction });
        ids
    }

    /// Spot-check `R<s>` acting on device `d`, first turning the seed's uniform state so
    /// that its second leg feeds the run. Returns the new uniform seed, blank, uniform
    /// output and causal completion.
    fn spot(&mut self, base: &str, s: u64, d: &str) -> [NodeId; 4] {
        let reg = format!("{base}{s}");
        let mut u = self.uniform(&reg);
        let r = self.label(&format!("R{s}"));
        if self.state.diagram.source_of(Target::Port(r, 0)) != Some(Source::Port(u, 1)) {
            let ids = self.step("legs_commute", params(&[("reg", reg.as_str().into()), ("k", 2.into()), ("leg", 0.into())]), vec![u], Direction::Backward);
            u = ids[0];
        }
        let ids = self.step("spot_check", params(&[("s", s.into()), ("D", d.into()), ("base", base.into())]), vec![u, r], Direction::Forward);
        [ids[0], ids[1], ids[2], ids[3]]
    }

    fn fold(&mut self, members: Vec<NodeId>, label: &str) -> NodeId {
        self.step("fold", params(&[("label", label.into())]), members, Direction::Forward)[0]
    }

    /// One level of the doubling protocol at width `s`: two spot-checks, then fold
    /// everything but the last causal completion into `blank`.
    fn level(&mut self, base: &str, s: u64) {
        let prev = self.blank.zip(self.causal);
        let [u_s, blank_a, _, causal_a] = self.spot(base, s, "D1");
        let [u_2s, blank_b, _, causal_b] = self.spot(base, 2 * s, "D2");
        let members = match prev {
            None => vec![blank_a, causal_a, u_2s, blank_b],
            Some((blank, causal_prev)) => vec![blank, causal_prev, u_s, blank_a, causal_a, u_2s, blank_b],
        };
        self.blank = Some(self.fold(members, "blank"));
        self.causal = Some(causal_b);
    }

    fn finish(mut self, claimed: EpsExpr, target: Option<String>) -> ProofScript {
        if let Some(t) = &target {
            let want = parse(t).unwrap_or_else(|e| panic!("{}: target: {e}", self.script.name)).canonical_form();
            assert_eq!(self.state.diagram.canonical_form(), want, "{}: final diagram differs from target", self.script.name);
        }
        assert_eq!(self.state.budget, claimed, "{}: budget", self.script.name);
        self.script.claimed_total = claimed;
        self.script.target = target;
        self.script
    }
}

fn declare(base: &str, widths: &[u64], extra: &str) -> String {
    let mut out = String::from(SEED_NOTE);
    for w in widths {
        out.push_str(&format!("reg {base}{w} = classical 2\n"));
    }
    out.push_str("reg D1 = quantum 2\nreg D2 = quantum 2\n");
    out.push_str(extra);
    out
}

/// Runs of `S(s)`, `S(4s)`, … for `k` levels with `pre`/`post` wires alongside.
fn protocol(base: &str, k: u32, pre: &str, post: &str) -> (Vec<u64>, String, String) {
    let mut widths = vec![1u64];
    let mut holes = String::new();
    let mut layers = Vec::new();
    let wrap = |mid: String| {
        let mut parts = Vec::new();
        if !pre.is_empty() {
            parts.push(format!("id {pre}"));
        }
        parts.push(mid);
        if !post.is_empty() {
            parts.push(format!("id {post}"));
        }
        parts.join(" * ")
    };
    for level in 0..k {
        let s = 4u64.pow(level);
        for (w, d) in [(s, "D1"), (2 * s, "D2")] {
            holes.push_str(&format!("hole R{w} : {base}{w}*{d} -> {base}{}*{d}\n", 2 * w));
            widths.push(2 * w);
        }
        let (n2, n4) = (format!("{base}{}", 2 * s), format!("{base}{}", 4 * s));
        layers.push(wrap(format!("R{s} * id D2")));
        layers.push(wrap(format!("id {n2} * swap D1 D2")));
        layers.push(wrap(format!("R{} * id D1", 2 * s)));
        layers.push(wrap(format!("id {n4} * swap D2 D1")));
    }
    (widths, holes, layers.join(" ;\n"))
}

fn lemma_target(base: &str, top: u64) -> String {
    format!(
        "reg {base}1 = classical 2\nreg {base}{top} = classical 2\nreg D1 = quantum 2\nreg D2 = quantum 2\nreg K = classical 2\n\
         hole blank : {base}1*D1*D2 -> D1*K*D2\nhole cause : {base}{top}*K*D2 -> D2 causal\n\
         (uniform {base}1 2 * id (D1*D2)) ; (id {base}1 * blank) ; (id ({base}1*D1) * uniform {base}{top} 2 * id (K*D2)) ; (id {base}1 * swap D1 {base}{top} * cause)\n"
    )
}

/// The `k`-level induction: a seeded run of `S_k` is close to a blank process next to a
/// fresh uniform string of width `4^k` and a causal completion.
pub fn induction(name: &str, base: &str, k: u32) -> ProofScript {
    let (widths, holes, body) = protocol(base, k, &format!("{base}1"), "");
    let initial = format!("{}{holes}(uniform {base}1 2 * id (D1*D2)) ;\n{body}\n", declare(base, &widths, ""));
    let mut b = Builder::new(name, initial);
    for level in 0..k {
        b.level(base, 4u64.pow(level));
    }
    let last = b.causal.expect("at least one level");
    b.fold(vec![last], "cause");
    b.finish(EpsExpr::gamma(base, 2 * k), Some(lemma_target(base, 4u64.pow(k))))
}

pub fn lemma_sm() -> ProofScript {
    induction("lemma_sm", "M", 1)
}

/// Unbounded expansion at `k` levels: against any initial device state, the output of
/// `S_k` with devices discarded is close to a uniform string next to a residual state.
pub fn theorem_ure(k: u32) -> ProofScript {
    let base = "N";
    let top = 4u64.pow(k);
    let (widths, holes, body) = protocol(base, k, "", "X");
    let initial = format!(
        "{}{holes}hole Gamma : I -> D1*D2*X\n(uniform {base}1 1 * Gamma) ;\n{body} ;\n(id {base}{top} * discard D1 * discard D2 * id X)\n",
        declare(base, &widths, "reg X = quantum 2\n")
    );
    let name = format!("theorem_ure_k{k}");
    let mut b = Builder::new(&name, initial);
    let reg1 = format!("{base}1");
    let u1 = b.uniform(&reg1);
    b.step("uniform_absorbs_discard", params(&[("reg", reg1.as_str().into()), ("k", 2.into()), ("leg", 0.into())]), vec![u1], Direction::Backward);
    for level in 0..k {
        b.level(base, 4u64.pow(level));
    }
    let causal = b.causal.expect("at least one level");
    let out_discard = b.discard_after(causal, 0);
    b.step("causality", Params::new(), vec![causal, out_discard], Direction::Forward);
    let top_reg = format!("{base}{top}");
    let u_top = b.uniform(&top_reg);
    let d_top = b.discard_after(u_top, 1);
    b.step("uniform_absorbs_discard", params(&[("reg", top_reg.as_str().into()), ("k", 2.into()), ("leg", 1.into())]), vec![u_top, d_top], Direction::Forward);
    let u1 = b.uniform(&reg1);
    let d1 = b.discard_after(u1, 0);
    b.step("uniform_absorbs_discard", params(&[("reg", reg1.as_str().into()), ("k", 2.into()), ("leg", 0.into())]), vec![u1, d1], Direction::Forward);
    let u1 = b.uniform(&reg1);
    let blank = b.blank.expect("at least one level");
    let mut members = vec![u1, b.label("Gamma"), blank];
    members.extend((0..3).map(|p| b.discard_after(blank, p)));
    b.fold(members, "residual");
    let target = format!("reg {top_reg} = classical 2\nreg X = quantum 2\nhole residual : I -> X\nuniform {top_reg} 1 * residual\n");
    b.finish(EpsExpr::gamma(base, 2 * k), Some(target))
}

/// All shipped scripts, keyed by file stem.
pub fn shipped() -> Vec<ProofScript> {
    vec![lemma_sm(), induction("induction_k1", "N", 1), induction("induction_k2", "N", 2), induction("induction_k3", "N", 3), theorem_ure(2)]
}
