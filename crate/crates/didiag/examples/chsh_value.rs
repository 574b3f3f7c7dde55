//! Classical and quantum CHSH values, computed directly and through the game diagram.

use didiag::diagram::evaluate;
use didiag::protocol::{chsh_game, classical_value, game_bindings, game_diagram, game_value, DeviceStrategy};

fn main() {
    let g = chsh_game();
    let (classical, answers) = classical_value(&g);
    println!("classical value {classical} with answer tables {answers:?}");

    let s = DeviceStrategy::chsh_optimal();
    let direct = game_value(&g, &s).unwrap();
    let d = game_diagram(&g, &s.local_dims).unwrap();
    let b = game_bindings(&g, &s).unwrap();
    let via_diagram = evaluate(&d, &b).unwrap().matrix()[(0, 0)].re;
    println!("quantum value {direct:.10} (diagram {via_diagram:.10}, 1/2 + sqrt2/4 = {:.10})", 0.5 + 2f64.sqrt() / 4.0);
}
