//! Chain expansion stages from N = 1 input bit up to 4^k bits, retrying seeds until one run succeeds.

use didiag::extractor::{unbounded_pipeline, ExpansionPlan, RConfig};
use didiag::protocol::DeviceStrategy;

fn main() {
    let dev = DeviceStrategy::chsh_optimal();
    for (n, k) in [(1, 1), (1, 2), (2, 2)] {
        let plan = ExpansionPlan { n, k, config: RConfig { ratio: 12, ..RConfig::default() } };
        println!("N={n} k={k}: widths {:?}, budget {}", plan.widths(), plan.total_budget());
        for seed in 0..100 {
            let r = unbounded_pipeline(&plan, &dev, &dev, seed).unwrap();
            if let Some(bits) = &r.output_bits {
                println!("  seed {seed}: {} bits {bits}", bits.len());
                if let Some(e) = &r.exact {
                    println!("  exact abort probability {:.4}", e.abort_probability);
                }
                break;
            }
            println!("  seed {seed}: aborted at level {:?}", r.aborted_at_level);
        }
    }
}
