//! Min-entropy of cq-states: diagonal closed form, Helstrom and the iterative certificate.

use didiag::protocol::{min_entropy_cq, EntropyMethod};
use didiag::regcalc::linalg::{c, CMat};
use didiag::regcalc::CQState;

fn main() {
    let diag = |v: &[f64]| CMat::from_fn(v.len(), v.len(), |i, j| c(if i == j { v[i] } else { 0.0 }));
    let classical = CQState::new(vec![diag(&[0.30, 0.10]), diag(&[0.05, 0.25]), diag(&[0.20, 0.10])]).unwrap();
    let r = min_entropy_cq(&classical, 1e-9, EntropyMethod::Auto).unwrap();
    println!("diagonal: p_guess {} H_min {:.6}", r.p_guess_upper, r.h_min);

    let plus = CMat::from_fn(2, 2, |_, _| c(0.25));
    let bb84 = CQState::new(vec![diag(&[0.5, 0.0]), plus]).unwrap();
    for m in [EntropyMethod::Helstrom, EntropyMethod::Iterative] {
        let r = min_entropy_cq(&bb84, 1e-8, m).unwrap();
        println!("{m:?}: H_min {:.9} gap {:.1e} after {} iterations", r.h_min, r.gap, r.iterations);
    }
}
