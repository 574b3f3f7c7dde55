//! Canonical duplicates of a random cq-state and the stability bound under perturbation.

use didiag::duplication::{canonical_duplicate, stability_trials, verify_marginal, random_cq};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let psi = random_cq(&mut rng, 2, 3);
    let d = canonical_duplicate(&psi).unwrap();
    println!("marginal error {:.2e}", verify_marginal(&d).unwrap());

    for (cd, n) in [(1, 2), (2, 2), (2, 3)] {
        let r = stability_trials(cd, n, 0.05, 20, 7).unwrap();
        let worst = r.trials.iter().map(|t| t.duplicate_distance / t.bound).fold(0.0, f64::max);
        println!("|C|={cd} dim={n}: all hold {}, worst distance/bound {worst:.3}", r.all_hold);
    }
}
