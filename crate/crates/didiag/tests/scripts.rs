use std::path::PathBuf;

use didiag::diagram::Bindings;
use didiag::rewrite::library::shipped;
use didiag::rewrite::{builtin_rules, compare_numerically, run_script, EpsExpr, Mode, NumericOptions, ProofScript, Verdict};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scripts_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/scripts")
}

/// Set `DIDIAG_BLESS=1` to rewrite the shipped files from the generators.
#[test]
fn shipped_files_match_generators() {
    let bless = std::env::var_os("DIDIAG_BLESS").is_some();
    for s in shipped() {
        let path = scripts_dir().join(format!("{}.json", s.name));
        let text = serde_json::to_string_pretty(&s).unwrap() + "\n";
        if bless {
            std::fs::write(&path, &text).unwrap();
        }
        let on_disk = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(on_disk, text, "{} is stale; rerun with DIDIAG_BLESS=1", path.display());
    }
}

#[test]
fn shipped_scripts_verify_with_numerics() {
    for s in shipped() {
        let r = run_script(&s, None, Some(&NumericOptions::default()));
        assert_eq!(r.verdict, Verdict::Verified, "{}: {:#?}", s.name, r.failures);
        assert!(r.claim_matches && r.target_matches == Some(true), "{}", s.name);
        for st in &r.steps {
            let n = st.numeric.as_ref().unwrap();
            if st.mode == Mode::Axiom {
                assert!(n.axiom.is_some(), "{} step {}: axiom not measured", s.name, st.index);
            } else {
                assert!(n.max_entry_diff.unwrap() <= 1e-9, "{} step {}", s.name, st.index);
            }
        }
    }
}

#[test]
fn script_totals() {
    let load = |name: &str| -> ProofScript { serde_json::from_str(&std::fs::read_to_string(scripts_dir().join(format!("{name}.json"))).unwrap()).unwrap() };
    let r = run_script(&load("lemma_sm"), None, None);
    assert_eq!(r.total, "eps(1,M) + eps(2,M)");
    let r = run_script(&load("induction_k2"), None, None);
    assert_eq!(r.total, "eps(1,N) + eps(2,N) + eps(4,N) + eps(8,N)");
    for k in 1..=3u32 {
        let r = run_script(&load(&format!("induction_k{k}")), None, None);
        assert_eq!(r.verdict, Verdict::Verified);
        assert_eq!(r.total_expr, EpsExpr::gamma("N", 2 * k));
    }
    let r = run_script(&load("theorem_ure_k2"), None, None);
    assert_eq!(r.verdict, Verdict::Verified);
    assert!(r.final_diagram.contains("uniform N16 1"), "{}", r.final_diagram);
}

#[test]
fn exact_rules_self_test() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rules = builtin_rules();
    assert!(rules.iter().all(|r| r.mode == Mode::Exact));
    for r in &rules {
        for _ in 0..3 {
            let d = compare_numerically(&r.lhs, &r.rhs, &Bindings::new(), &mut rng).unwrap();
            assert!(d <= 1e-12, "{}: {d}", r.name);
        }
    }
}
