//! Abort rates of the spot-checking protocol for honest and all-zero devices.

use didiag::protocol::{abort_frequency, spotcheck_run, DeviceStrategy, SpotCheckParams};

fn main() {
    let p = SpotCheckParams { rounds: 500, q: 0.2, chi: 0.85, seed: 7 };
    let run = spotcheck_run(&p, &DeviceStrategy::chsh_optimal()).unwrap();
    println!("seed 7: {} of {} tests passed, aborted {}", run.pass_count, run.test_round_count, run.aborted);
    for s in [DeviceStrategy::chsh_optimal(), DeviceStrategy::all_zero()] {
        let f = abort_frequency(&p, &s, 200).unwrap();
        println!("{:<14} abort frequency over 200 runs: {f:.3}", s.name);
    }
}
