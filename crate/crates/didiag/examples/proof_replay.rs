//! Replay the shipped proof scripts and evaluate their budgets under eps(x) = 2^-x at N = 1.

use didiag::rewrite::library::shipped;
use didiag::rewrite::{run_script, BudgetOptions, EpsFn};

fn main() {
    let budget = BudgetOptions { eps_fn: EpsFn::Exp2 { c: 1.0, a: 1.0 }, n: 1.0, k_max: 64 };
    for s in shipped() {
        let r = run_script(&s, Some(&budget), None);
        println!("{:<16} {:?} {} steps, total {} = {:?}", s.name, r.verdict, r.steps.len(), r.total, r.budget_value);
    }
}
