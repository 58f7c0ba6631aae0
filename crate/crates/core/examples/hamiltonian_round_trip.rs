// Drive `Σ⁺` with an input, feed its output `y⁺` to the inverse system `Σ×`
// from the same initial point and recover the input.

use std::collections::BTreeMap;

use optimal_load::hamiltonian::HamiltonianSystem;
use optimal_load::linalg::Vector;
use optimal_load::model::GenericSystem;
use optimal_load::signal::{GridSignal, TimeGrid};

/// Largest deviation between the original and recovered inputs.
pub fn run_example() -> optimal_load::Result<f64> {
    let sys = GenericSystem::parse(&["-x0 + u0"], &["x0^3 + 2*u0 + 0.1*u0^3"], &BTreeMap::new())?;
    let hs = HamiltonianSystem::new(sys);
    let grid = TimeGrid::new(2.0, 2000)?;
    let u = GridSignal::sample(grid, |t| Vector::from_element(1, (3.0 * t).cos()));
    let (x0, p0) = (Vector::from_element(1, 0.5), Vector::from_element(1, 0.2));
    let plus = hs.simulate_plus(&x0, &p0, &u)?;
    let back = hs.simulate_times(&x0, &p0, &plus.output)?;
    Ok(back.output.zip_with(&u, |a, b| a - b).linf_norm())
}

#[allow(dead_code)]
fn main() -> optimal_load::Result<()> {
    println!("max |u - u_recovered| = {:.3e}", run_example()?);
    Ok(())
}
