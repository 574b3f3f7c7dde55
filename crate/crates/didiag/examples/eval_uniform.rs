//! Parse a small diagram, evaluate it and print the tensor.

use didiag::diagram::{evaluate, parse, print, Bindings};

fn main() {
    let d = parse("uniform C2 2 ; (id C2 * discard C2)").expect("parses");
    println!("{}", print(&d));
    let t = evaluate(&d, &Bindings::new()).expect("evaluates");
    let probs: Vec<f64> = t.matrix().iter().map(|z| z.re).collect();
    println!("outputs {:?} -> {probs:?}", t.outputs());
}
