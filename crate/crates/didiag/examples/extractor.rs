//! Toeplitz hashing of a flat source: exact error against the leftover-hash bound.

use didiag::extractor::{classical_min_entropy, extractor_distance_exact, leftover_hash_bound, toeplitz_extract};

fn main() {
    let source = [1, 0, 1, 1, 0, 1, 0, 1];
    let seed = [1, 1, 0, 1, 0, 0, 1, 0, 1];
    println!("T(seed)·x = {:?}", toeplitz_extract(&source, &seed, 2).unwrap());

    let n = 8;
    for h in 2..=6u32 {
        let mut p = vec![0.0; 1 << n];
        // support spread over the whole range so no prefix is constant
        for k in 0..1usize << h {
            p[(k * 0x9d) % (1 << n)] += 1.0 / (1u64 << h) as f64;
        }
        let hm = classical_min_entropy(&p);
        for m in 1..=3 {
            let d = extractor_distance_exact(&p, n, m).unwrap();
            println!("H_min {hm:.1} m {m}: distance {d:.5} bound {:.5}", leftover_hash_bound(hm, m));
        }
    }
}
