// Positive-real certificates for the Hamiltonian system `Σ⁺` of linear RC
// variants. A lossless interconnection with `D = 0` falls outside the test.

use optimal_load::linalg::Mat;
use optimal_load::model::LinearSystem;
use optimal_load::power::{passivity_of, Verdict};

fn rc(r: f64) -> optimal_load::Result<LinearSystem> {
    let one = |v: f64| Mat::from_element(1, 1, v);
    LinearSystem::new(one(0.0), one(1.0), one(1.0), one(r))
}

pub fn run_example() -> optimal_load::Result<Vec<(f64, Verdict)>> {
    [1.0, -1.0, 0.0]
        .into_iter()
        .map(|r| Ok((r, passivity_of(&rc(r)?)?.verdict)))
        .collect()
}

#[allow(dead_code)]
fn main() -> optimal_load::Result<()> {
    for (r, verdict) in run_example()? {
        println!("R = {r:>4}: {verdict:?}");
    }
    Ok(())
}
