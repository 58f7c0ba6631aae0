// RC Thévenin source: capacitor charge `x`, terminal voltage `x/C + R·u`,
// source `y_S ≡ 1`. The optimal current is the constant 1/3 and the
// extracted energy over one second is 1/6.

use std::collections::BTreeMap;

use optimal_load::linalg::Vector;
use optimal_load::loads::load_from_solution;
use optimal_load::model::GenericSystem;
use optimal_load::signal::SourceSignal;
use optimal_load::solver::{solve_optimal_input, ProblemSpec};

pub struct RcOutcome {
    pub u_min: f64,
    pub u_max: f64,
    pub extracted_energy: f64,
    pub load_start: f64,
    pub load_end: f64,
}

pub fn run_example() -> optimal_load::Result<RcOutcome> {
    let constants = BTreeMap::from([("C".to_string(), 1.0), ("R".to_string(), 1.0)]);
    let sys = GenericSystem::parse(&["u0"], &["x0/C + R*u0"], &constants)?;
    let spec = ProblemSpec::new(
        sys,
        SourceSignal::constant(vec![1.0]),
        Vector::zeros(1),
        1.0,
        1000,
    )?;
    let sol = solve_optimal_input(&spec)?;
    let load = load_from_solution(&spec, &sol)?;
    let u: Vec<f64> = sol.traj.u.iter().map(|v| v[0]).collect();
    Ok(RcOutcome {
        u_min: u.iter().copied().fold(f64::INFINITY, f64::min),
        u_max: u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        extracted_energy: sol.extracted_energy,
        load_start: load.y_load[0][0],
        load_end: load.y_load[sol.traj.len() - 1][0],
    })
}

#[allow(dead_code)]
fn main() -> optimal_load::Result<()> {
    let r = run_example()?;
    println!("optimal current in [{:.9}, {:.9}]", r.u_min, r.u_max);
    println!("extracted energy {:.9}", r.extracted_energy);
    println!("load voltage {:.6} -> {:.6}", r.load_start, r.load_end);
    Ok(())
}
