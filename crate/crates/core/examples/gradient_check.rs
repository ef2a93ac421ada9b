//! Finite-difference verification of every hand-written backward pass.

use offlang::nn::gradcheck::{self, TOLERANCE};

fn main() {
    let results = gradcheck::check_all(0..20);
    let mut names: Vec<&str> = results.iter().map(|r| r.name).collect();
    names.dedup();
    names.sort_unstable();
    names.dedup();
    for name in names {
        let worst = results.iter().filter(|r| r.name == name).map(|r| r.rel_error).fold(0.0, f64::max);
        let mark = if worst <= TOLERANCE { "ok" } else { "FAIL" };
        println!("{name:<28} worst relative error {worst:.2e}  {mark}");
    }
}
