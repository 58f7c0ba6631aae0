// Nonlinear capacitor `ẋ = u`, `y = x³ + u`: the shooting solution against
// plain gradient descent on the sampled input.

use std::collections::BTreeMap;

use optimal_load::linalg::Vector;
use optimal_load::model::GenericSystem;
use optimal_load::power::{oracle_minimize, OracleSettings};
use optimal_load::signal::SourceSignal;
use optimal_load::solver::{solve_optimal_input, ProblemSpec};

pub struct CrossCheck {
    pub shooting_power: f64,
    pub oracle_power: f64,
    pub l2_distance: f64,
}

pub fn run_example() -> optimal_load::Result<CrossCheck> {
    let sys = GenericSystem::parse(&["u0"], &["x0^3 + u0"], &BTreeMap::new())?;
    let spec = ProblemSpec::new(
        sys,
        SourceSignal::constant(vec![1.0]),
        Vector::zeros(1),
        1.0,
        400,
    )?;
    let sol = solve_optimal_input(&spec)?;
    let oracle = oracle_minimize(
        &spec.sys,
        &spec.source,
        &spec.x0,
        spec.grid,
        OracleSettings::default(),
    )?;
    let diff = sol.traj.input().zip_with(&oracle.u, |a, b| a - b);
    Ok(CrossCheck {
        shooting_power: -sol.extracted_energy,
        oracle_power: oracle.power,
        l2_distance: diff.l2_norm(),
    })
}

#[allow(dead_code)]
fn main() -> optimal_load::Result<()> {
    let c = run_example()?;
    println!("P shooting {:.12}", c.shooting_power);
    println!("P oracle   {:.12}", c.oracle_power);
    println!("L2 input distance {:.3e}", c.l2_distance);
    Ok(())
}
