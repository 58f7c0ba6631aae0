// Memoryless source resistance: `y = R·u` against `y_S ≡ V`. The optimal
// current is `V/(2R)` at every instant; no costate is involved.

use std::collections::BTreeMap;

use optimal_load::linalg::Vector;
use optimal_load::model::StaticNonlinearity;
use optimal_load::signal::SourceSignal;
use optimal_load::solver::{solve_optimal_input, ProblemSpec};

pub fn run_example() -> optimal_load::Result<(f64, f64)> {
    let constants = BTreeMap::from([("R".to_string(), 2.0)]);
    let resistor = StaticNonlinearity::parse(&["R*u0"], &constants)?;
    let spec = ProblemSpec::new(
        resistor.to_generic()?,
        SourceSignal::constant(vec![3.0]),
        Vector::zeros(0),
        1.0,
        100,
    )?;
    let sol = solve_optimal_input(&spec)?;
    Ok((sol.traj.u[0][0], sol.extracted_energy))
}

#[allow(dead_code)]
fn main() -> optimal_load::Result<()> {
    let (u, energy) = run_example()?;
    println!("current {u}, energy {energy} (expected 0.75 and 1.125)");
    Ok(())
}
