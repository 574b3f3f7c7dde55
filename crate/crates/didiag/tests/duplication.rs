use didiag::duplication::*;
use didiag::regcalc::random::random_state;
use didiag::regcalc::{structural_predicates, trace_distance_half, CQState, Register};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn stability_bound_on_seeded_trials() {
    for (cd, n) in [(1, 2), (2, 2), (2, 3)] {
        for eps in [0.01, 0.05] {
            let r = stability_trials(cd, n, eps, 100, 1000).unwrap();
            assert_eq!(r.trials.len(), 100);
            for t in &r.trials {
                assert!((t.eps - eps).abs() < 1e-9);
                assert!(t.duplicate_distance <= t.bound + 1e-12, "({cd},{n}) eps {eps}: {t:?}");
                assert!(t.duplicate_distance <= t.bound_raw + 1e-12);
            }
            assert!(r.all_hold);
        }
    }
}

/// Extension of `src` on `C Q R D` built from a random channel on the second copy.
fn random_extension(rng: &mut ChaCha8Rng, src: &CQState) -> didiag::regcalc::ProcessTensor {
    let d = canonical_duplicate(src).unwrap();
    let q = Register::quantum(src.quantum_dim());
    let cl = Register::classical(src.classical_dim());
    let ch = didiag::regcalc::random::random_channel(rng, &[q, cl], &[Register::quantum(2), Register::classical(2)], 3).unwrap();
    apply_right(&d, &ch).unwrap()
}

#[test]
fn random_extension_reconstructed() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let src = random_cq(&mut rng, 2, 2);
        let phi = random_extension(&mut rng, &src);
        let d = canonical_duplicate(&src).unwrap();
        let alpha = universality_alpha(&phi, &d, 1e-6).unwrap();
        assert!(structural_predicates(&alpha, 1e-9).causal);
        assert!(trace_distance_half(&apply_right(&d, &alpha).unwrap(), &phi).unwrap() <= 1e-6);
    }
}

#[test]
fn generic_extension_reconstructed() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let regs = [Register::classical(2), Register::quantum(2), Register::quantum(2), Register::classical(2)];
    let phi = random_state(&mut rng, &regs, 3).unwrap();
    let marginal = CQState::from_state(&didiag::regcalc::partial_discard(&phi, &[2, 3]).unwrap()).unwrap();
    let d = canonical_duplicate(&marginal).unwrap();
    let alpha = universality_alpha(&phi, &d, 1e-9).unwrap();
    assert!(trace_distance_half(&apply_right(&d, &alpha).unwrap(), &phi).unwrap() <= 1e-6);
}

#[test]
fn corollary_at_small_eps() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let regs = [Register::classical(2), Register::quantum(2), Register::quantum(2), Register::classical(2)];
    let phi = random_state(&mut rng, &regs, 2).unwrap();
    let marginal = CQState::from_state(&didiag::regcalc::partial_discard(&phi, &[2, 3]).unwrap()).unwrap();
    let psi = perturb(&mut rng, &marginal, 0.02).unwrap();
    let dup = canonical_duplicate(&psi).unwrap();
    let (alpha, check) = corollary_alpha(&phi, &dup).unwrap();
    assert!((check.eps - 0.02).abs() < 1e-9);
    assert!(check.distance <= 0.2 + 1e-6, "{check:?}");
    assert!(check.holds);
    assert!(structural_predicates(&alpha, 1e-9).causal);

    // the same bound for a duplicate rotated by a controlled unitary
    let rotated = dup.rotated(&random_controlled(&mut rng, 2, 2)).unwrap();
    assert!(verify_marginal(&rotated).unwrap() < 1e-9);
    let (_, check) = corollary_alpha(&phi, &rotated).unwrap();
    assert!(check.distance <= 0.2 + 1e-6, "{check:?}");
}

#[test]
fn corollary_at_zero_eps_is_universality() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let src = random_cq(&mut rng, 2, 2);
    let phi = random_extension(&mut rng, &src);
    let (_, check) = corollary_alpha(&phi, &canonical_duplicate(&src).unwrap()).unwrap();
    assert!(check.eps < 1e-9 && check.distance < 1e-6, "{check:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn canonical_marginal_is_exact(seed in any::<u64>(), cd in 1usize..4, n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = canonical_duplicate(&random_cq(&mut rng, cd, n)).unwrap();
        prop_assert!(verify_marginal(&d).unwrap() <= 1e-9);
    }

    #[test]
    fn duplicates_agree_up_to_controlled_unitary(seed in any::<u64>(), cd in 1usize..3, n in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = canonical_duplicate(&random_cq(&mut rng, cd, n)).unwrap();
        let a = d.rotated(&random_controlled(&mut rng, cd, n)).unwrap();
        let b = d.rotated(&random_controlled(&mut rng, cd, n)).unwrap();
        let u = controlled_unitary(&a, &b, 1e-6).unwrap();
        prop_assert!(trace_distance_half(&apply_right(&a, &u).unwrap(), &b.state).unwrap() <= 1e-6);
    }

    #[test]
    fn stability_holds(seed in any::<u64>(), eps in 0.001f64..0.2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = random_cq(&mut rng, 2, 2);
        let phi = perturb(&mut rng, &psi, eps).unwrap();
        let t = check_duplicate_stability(&psi, &phi).unwrap();
        prop_assert!(t.holds, "{:?}", t);
    }
}
