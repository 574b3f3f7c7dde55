//! One PASS/FAIL line per acceptance criterion. Runs without the libtest harness and exits
//! non-zero if any criterion fails.

use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use didiag::diagram::Bindings;
use didiag::duplication::{apply_right, canonical_duplicate, random_cq, stability_trials, universality_alpha, verify_marginal};
use didiag::extractor::{classical_min_entropy, extractor_distance_exact, leftover_hash_bound, toeplitz_extract, unbounded_pipeline, ExpansionPlan, RConfig};
use didiag::protocol::{abort_frequency, b_q_distribution, chsh_game, classical_value, game_value, min_entropy_cq, rational_approx, DeviceStrategy, EntropyMethod, SpotCheckParams};
use didiag::regcalc::linalg::{c, CMat};
use didiag::regcalc::random::{random_channel, random_density, random_unit_vector};
use didiag::regcalc::{trace_distance_half, CQState, Register};
use didiag::rewrite::{builtin_rules, compare_numerically, instantiate, run_script, BudgetOptions, EpsExpr, EpsFn, Mode, Params, ProofScript, RewriteRule, Verdict};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

fn load_script(name: &str) -> ProofScript {
    serde_json::from_str(&std::fs::read_to_string(data(&format!("scripts/{name}.json"))).unwrap()).unwrap()
}

fn diag(v: &[f64]) -> CMat {
    CMat::from_fn(v.len(), v.len(), |i, j| c(if i == j { v[i] } else { 0.0 }))
}

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;
type Fixture = (&'static [u8], &'static [u8], usize, &'static [u8]);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn chsh_values() -> Outcome {
    let start = Instant::now();
    let (classical, _) = classical_value(&chsh_game());
    let s: DeviceStrategy = serde_json::from_str(&std::fs::read_to_string(data("strategies/chsh_optimal.json")).unwrap()).unwrap();
    let quantum = game_value(&chsh_game(), &s).unwrap();
    let target = 0.5 + 2f64.sqrt() / 4.0;
    let secs = start.elapsed().as_secs_f64();
    check(
        classical == 0.75 && (quantum - target).abs() <= 1e-9 && quantum > 0.85 && secs < 1.0,
        format!("classical {classical}, quantum {quantum:.12} (|Δ| {:.1e}), {secs:.3}s", (quantum - target).abs()),
    )
}

/// The shipped instances plus the same rules on `Q3`.
fn exact_rules_at_dims_2_3() -> Vec<RewriteRule> {
    let mut rules = builtin_rules();
    let empty = didiag::diagram::Diagram::default();
    let p = |pairs: &[(&str, Value)]| -> Params { pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect() };
    let q3 = || Value::from("Q3");
    let extra = [
        ("uniform_as_spider", p(&[("reg", q3()), ("k", 2.into())])),
        ("causality", p(&[("ins", "Q3*C2".into()), ("outs", q3())])),
        ("spider_fusion", p(&[("reg", q3()), ("a", 1.into()), ("b", 1.into()), ("c", 1.into()), ("d", 1.into())])),
        ("spider_identity", p(&[("reg", q3())])),
        ("legs_commute", p(&[("reg", q3()), ("k", 2.into()), ("leg", 0.into())])),
        ("identity_elim", p(&[("reg", q3())])),
        ("swap_elim", p(&[("a", q3()), ("b", "C3".into())])),
    ];
    for (name, params) in extra {
        rules.push(instantiate(name, &params, &empty, &[]).unwrap());
    }
    rules
}

fn exact_rules() -> Outcome {
    let start = Instant::now();
    let rules = exact_rules_at_dims_2_3();
    let mut worst = (0.0f64, String::new());
    let mut bad = vec![];
    for (i, r) in rules.iter().enumerate() {
        if r.mode != Mode::Exact {
            bad.push(format!("{} is not exact", r.name));
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        for _ in 0..50 {
            match compare_numerically(&r.lhs, &r.rhs, &Bindings::new(), &mut rng) {
                Ok(d) if d > worst.0 => worst = (d, r.name.clone()),
                Ok(_) => {}
                Err(e) => bad.push(format!("{}: {e}", r.name)),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        bad.is_empty() && worst.0 <= 1e-12 && secs < 10.0,
        format!("{} instances x 50 bindings, worst {:.1e} ({}), {secs:.2}s{}", rules.len(), worst.0, worst.1, if bad.is_empty() { String::new() } else { format!(", errors: {bad:?}") }),
    )
}

fn budget_algebra() -> Outcome {
    let mut notes = vec![];
    let mut ok = true;
    let sm = run_script(&load_script("lemma_sm"), None, None);
    let want_sm = EpsExpr::eps(1, "M").plus(&EpsExpr::eps(2, "M"));
    ok &= sm.verdict == Verdict::Verified && sm.total_expr == want_sm;
    notes.push(format!("lemma_sm {}", sm.total));
    for k in 1..=3u32 {
        let r = run_script(&load_script(&format!("induction_k{k}")), None, None);
        let want = (0..2 * k).fold(EpsExpr::zero(), |acc, i| acc.plus(&EpsExpr::eps(1 << i, "N")));
        ok &= r.verdict == Verdict::Verified && r.total_expr == want;
        notes.push(format!("k={k} {} terms", r.total_expr.terms().len()));
    }
    let budget = BudgetOptions { eps_fn: EpsFn::Exp2 { c: 1.0, a: 1.0 }, n: 1.0, k_max: 64 };
    let ure = run_script(&load_script("theorem_ure_k2"), Some(&budget), None);
    ok &= ure.verdict == Verdict::Verified && ure.target_matches == Some(true) && ure.final_diagram.contains("uniform N16 1");
    ok &= ure.budget_value == Some(0.81640625);
    notes.push(format!("ure_k2 target {:?}, budget {:?}", ure.target_matches, ure.budget_value));
    check(ok, notes.join("; "))
}

fn duplication() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut marginal = 0.0f64;
    for (cd, n) in [(1, 2), (2, 2), (2, 3), (3, 2)] {
        for _ in 0..10 {
            marginal = marginal.max(verify_marginal(&canonical_duplicate(&random_cq(&mut rng, cd, n)).unwrap()).unwrap());
        }
    }
    let mut stability = true;
    let mut ratio = 0.0f64;
    for (cd, n) in [(1, 2), (2, 2), (2, 3)] {
        let r = stability_trials(cd, n, 0.05, 100, 4100).unwrap();
        stability &= r.all_hold && r.trials.len() == 100;
        ratio = r.trials.iter().map(|t| t.duplicate_distance / t.bound).fold(ratio, f64::max);
    }
    let mut universality = 0.0f64;
    for _ in 0..5 {
        let src = random_cq(&mut rng, 2, 2);
        let d = canonical_duplicate(&src).unwrap();
        let ch = random_channel(&mut rng, &[Register::quantum(2), Register::classical(2)], &[Register::quantum(2), Register::classical(2)], 3).unwrap();
        let phi = apply_right(&d, &ch).unwrap();
        let alpha = universality_alpha(&phi, &d, 1e-6).unwrap();
        universality = universality.max(trace_distance_half(&apply_right(&d, &alpha).unwrap(), &phi).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        marginal <= 1e-9 && stability && universality <= 1e-6 && secs < 30.0,
        format!("marginal {marginal:.1e}, stability holds {stability} (worst distance/bound {ratio:.3}), universality {universality:.1e}, {secs:.2}s"),
    )
}

/// Best deterministic guess, by trying every map from the diagonal index to a branch.
fn brute_force_guess(p: &[Vec<f64>]) -> f64 {
    let (k, n) = (p.len(), p[0].len());
    (0..k.pow(n as u32))
        .map(|mut g| {
            (0..n)
                .map(|j| {
                    let i = g % k;
                    g /= k;
                    p[i][j]
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

fn min_entropy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut diag_err = 0.0f64;
    for _ in 0..100 {
        let (k, n) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let mut p: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.gen::<f64>()).collect()).collect();
        let total: f64 = p.iter().flatten().sum();
        p.iter_mut().flatten().for_each(|x| *x /= total);
        let s = CQState::new(p.iter().map(|r| diag(r)).collect()).unwrap();
        let r = min_entropy_cq(&s, 1e-9, EntropyMethod::Diagonal).unwrap();
        diag_err = diag_err.max((r.p_guess_upper - brute_force_guess(&p)).abs()).max((r.p_guess_lower - r.p_guess_upper).abs());
    }
    // two pure branches: ½(1 + √(1 − 4 p₀ p₁ |⟨ψ₀|ψ₁⟩|²))
    let mut helstrom_err = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(2..=4);
        let p0: f64 = rng.gen_range(0.05..0.95);
        let (a, b) = (random_unit_vector(&mut rng, n), random_unit_vector(&mut rng, n));
        let overlap = a.dotc(&b).norm_sqr();
        let oracle = 0.5 * (1.0 + (1.0 - 4.0 * p0 * (1.0 - p0) * overlap).sqrt());
        let s = CQState::new(vec![(&a * a.adjoint()).scale(p0), (&b * b.adjoint()).scale(1.0 - p0)]).unwrap();
        let r = min_entropy_cq(&s, 1e-9, EntropyMethod::Helstrom).unwrap();
        helstrom_err = helstrom_err.max((r.p_guess_upper - oracle).abs()).max((r.p_guess_lower - oracle).abs());
    }
    let mut gap = 0.0f64;
    let mut violation = 0.0f64;
    let mut unconverged = 0;
    for _ in 0..40 {
        let (k, n) = (rng.gen_range(2..=4), rng.gen_range(2..=4));
        let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = w.iter().sum();
        let s = CQState::new(w.iter().map(|x| random_density(&mut rng, n, n).scale(x / total)).collect()).unwrap();
        let r = min_entropy_cq(&s, 1e-7, EntropyMethod::Iterative).unwrap();
        gap = gap.max(r.gap);
        violation = violation.max(r.certificate_violation);
        unconverged += usize::from(!r.converged);
    }
    check(
        diag_err <= 1e-9 && helstrom_err <= 1e-9 && gap <= 1e-6 && violation <= 1e-9,
        format!("diagonal {diag_err:.1e}, Helstrom {helstrom_err:.1e}, iterative gap {gap:.1e} (certificate violation {violation:.1e}, {unconverged} unconverged)"),
    )
}

fn b_q_machinery() -> Outcome {
    let mut ok = true;
    let mut notes = vec![];
    for q in [0.05, 0.1, 0.2] {
        for m in 1..=4usize {
            let b = rational_approx(q, m).unwrap();
            let scale = 2f64.powi(b.ell as i32);
            let exact = b_q_distribution(q).unwrap();
            let mut counts = vec![0u128; 8usize.pow(m as u32)];
            for u in 0..b.total_numerator {
                let seq = b.sample(u).unwrap();
                counts[seq.iter().fold(0, |acc, &s| acc * 8 + s as usize)] += 1;
            }
            ok &= b.sample(b.total_numerator).is_none();
            let (mut over, mut under) = (0.0, 0.0);
            for (idx, &count) in counts.iter().enumerate() {
                let seq: Vec<u8> = (0..m).rev().map(|r| ((idx >> (3 * r)) & 7) as u8).collect();
                ok &= count == b.numerator_of(&seq) && b.prob_of(&seq) * scale == count as f64;
                let p: f64 = seq.iter().map(|&s| exact[s as usize]).product();
                let approx = count as f64 / scale;
                over += (p - approx).max(0.0);
                under += (approx - p).max(0.0);
            }
            let distance = f64::max(over, under);
            let bound = b.truncation_mass + b.grid_bound;
            ok &= distance <= bound + 1e-12 && (Some(distance) == b.enumerated_distance || (b.enumerated_distance.unwrap() - distance).abs() < 1e-12);
            if q == 0.2 {
                notes.push(format!("M={m}: {distance:.4} <= {bound:.4}"));
            }
        }
    }
    check(ok, format!("q in {{0.05, 0.1, 0.2}}; q=0.2 {}", notes.join(", ")))
}

fn spot_check() -> Outcome {
    let p = SpotCheckParams { rounds: 500, q: 0.2, chi: 0.85, seed: 0 };
    let honest = abort_frequency(&p, &DeviceStrategy::chsh_optimal(), 200).unwrap();
    let zero = abort_frequency(&p, &DeviceStrategy::all_zero(), 200).unwrap();
    check(honest < 0.05 && zero > 0.95, format!("honest abort {honest:.3} (need < 0.05), all-zero abort {zero:.3} (need > 0.95)"))
}

fn extractor() -> Outcome {
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut cases = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    for n in 1..=10usize {
        for h in 0..=n as u32 {
            for _ in 0..2 {
                let mut support: Vec<usize> = (0..1 << n).collect();
                support.shuffle(&mut rng);
                let mut p = vec![0.0; 1 << n];
                for &x in &support[..1 << h] {
                    p[x] = 1.0 / (1u64 << h) as f64;
                }
                let hm = classical_min_entropy(&p);
                ok &= (hm - h as f64).abs() < 1e-12;
                for m in 1..=3.min(n) {
                    let d = extractor_distance_exact(&p, n, m).unwrap();
                    let bound = leftover_hash_bound(hm, m);
                    ok &= d <= bound + 1e-12;
                    worst = worst.max(d / bound);
                    cases += 1;
                }
            }
        }
    }
    // T[i][j] = seed[j − i + m − 1], worked by hand
    let fixtures: [Fixture; 5] = [
        (&[1, 1, 0], &[1, 0, 1, 1], 2, &[1, 1]),
        (&[0, 1, 1], &[1, 0, 1, 1], 2, &[0, 1]),
        (&[1, 0, 1, 1], &[1, 1, 0, 1, 0, 0], 3, &[0, 0, 0]),
        (&[0, 1, 1, 1], &[1, 1, 0, 1, 0, 0], 3, &[1, 1, 0]),
        (&[1, 0, 1], &[1, 0, 1], 1, &[0]),
    ];
    let fixtures_ok = fixtures.iter().all(|(x, s, m, want)| toeplitz_extract(x, s, *m).unwrap() == *want);
    check(ok && fixtures_ok, format!("{cases} flat sources, worst distance/bound {worst:.3}, fixtures {fixtures_ok}"))
}

fn pipeline_widths() -> Outcome {
    let dev = DeviceStrategy::chsh_optimal();
    let mut ok = true;
    let mut notes = vec![];
    for (n, k) in [(1usize, 1usize), (1, 2), (2, 2)] {
        let plan = ExpansionPlan { n, k, config: RConfig { ratio: 12, ..RConfig::default() } };
        let want_total = run_script(&load_script(&format!("induction_k{k}")), None, None).total_expr;
        let levels = (0..k).fold(EpsExpr::zero(), |acc, i| acc.plus(&plan.level_budget(i)));
        ok &= plan.total_budget() == want_total && levels == want_total;
        let hit = (0..200u64).find_map(|seed| {
            let r = unbounded_pipeline(&plan, &dev, &dev, seed).unwrap();
            r.output_bits.clone().map(|bits| (seed, bits, r))
        });
        match hit {
            Some((seed, bits, r)) => {
                let level_budgets = r.levels.iter().zip(0..).all(|(l, i)| l.budget == plan.level_budget(i).to_string());
                ok &= bits.len() == 4usize.pow(k as u32) * n && level_budgets && !r.aborted;
                notes.push(format!("(N={n},k={k}) {} bits at seed {seed}", bits.len()));
            }
            None => {
                ok = false;
                notes.push(format!("(N={n},k={k}) no successful run in 200 seeds"));
            }
        }
    }
    check(ok, format!("ratio 12; {}", notes.join(", ")))
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_didiag");
    let d = |rel: &str| data(rel).display().to_string();
    let runs: Vec<Vec<String>> = vec![
        vec!["eval".into(), d("diagrams/chsh.dsl"), "--bindings".into(), d("diagrams/chsh_optimal.bindings.json")],
        vec!["check".into(), d("scripts/theorem_ure_k2.json"), "--eps".into(), "exp2:1:1".into(), "--numeric".into()],
        vec!["simulate".into(), "--rounds".into(), "500".into(), "--seed".into(), "7".into()],
        vec!["simulate".into(), "--runs".into(), "50".into(), "--seed".into(), "7".into()],
        vec!["simulate".into(), "--mode".into(), "pipeline".into(), "--n".into(), "1".into(), "--k".into(), "2".into(), "--ratio".into(), "12".into(), "--seed".into(), "5".into()],
        vec!["entropy".into(), d("states/helstrom.json"), "--method".into(), "iterative".into()],
        vec!["extract".into(), "source".into(), "--n".into(), "8".into(), "--m".into(), "2".into(), "--h".into(), "4".into(), "--seed".into(), "3".into()],
        vec!["extract".into(), "cq".into(), d("states/helstrom.json"), "--m".into(), "1".into()],
        vec!["extract".into(), "toeplitz".into(), "--source".into(), "b5".into(), "--seed-bits".into(), "ff8".into(), "--n".into(), "8".into(), "--m".into(), "2".into()],
        vec!["rules".into(), "--seed".into(), "3".into()],
    ];
    let mut bad = vec![];
    for args in &runs {
        let once = || Command::new(bin).args(args).env_remove("DIDIAG_TOL").output().unwrap();
        let (a, b) = (once(), once());
        if a.stdout.is_empty() || a.stdout != b.stdout || a.status != b.status {
            bad.push(args[0].clone());
        }
    }
    let jobs = |j: &str| Command::new(bin).args(["simulate", "--runs", "50", "--jobs", j]).output().unwrap().stdout;
    let across_jobs = jobs("1") == jobs("4");
    check(bad.is_empty() && across_jobs, format!("{} invocations byte-identical twice, --jobs 1 vs 4 identical {across_jobs}{}", runs.len(), if bad.is_empty() { String::new() } else { format!("; differing: {bad:?}") }))
}

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("CHSH values", chsh_values),
        ("exact rewrite rules", exact_rules),
        ("budget algebra", budget_algebra),
        ("duplication", duplication),
        ("min-entropy", min_entropy),
        ("B_q machinery", b_q_machinery),
        ("spot-check simulation", spot_check),
        ("extractor", extractor),
        ("pipeline widths", pipeline_widths),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
