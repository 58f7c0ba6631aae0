// Seeded smooth perturbations around the optimal RC input never lower the
// extracted power below the optimum; around a shifted input they do.

use std::collections::BTreeMap;

use optimal_load::linalg::Vector;
use optimal_load::model::GenericSystem;
use optimal_load::power::perturbation_test;
use optimal_load::signal::SourceSignal;
use optimal_load::solver::{solve_optimal_input, ProblemSpec};

/// Margins `(at the optimum, at the optimum shifted by 0.1)`.
pub fn run_example() -> optimal_load::Result<(f64, f64)> {
    let sys = GenericSystem::parse(&["u0"], &["x0 + u0"], &BTreeMap::new())?;
    let spec = ProblemSpec::new(
        sys,
        SourceSignal::constant(vec![1.0]),
        Vector::zeros(1),
        1.0,
        1000,
    )?;
    let u_hat = solve_optimal_input(&spec)?.traj.input();
    let at_optimum = perturbation_test(&spec.sys, &spec.source, &spec.x0, &u_hat, 100, 0.1, 42)?;
    let shifted = u_hat.map(|v| v.add_scalar(0.1));
    let off_optimum = perturbation_test(&spec.sys, &spec.source, &spec.x0, &shifted, 100, 0.1, 42)?;
    Ok((
        at_optimum.perturbation_margin,
        off_optimum.perturbation_margin,
    ))
}

#[allow(dead_code)]
fn main() -> optimal_load::Result<()> {
    let (good, bad) = run_example()?;
    println!("margin at the optimum      {good:.3e}");
    println!("margin at a shifted input  {bad:.3e}");
    Ok(())
}
