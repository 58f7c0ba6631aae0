// Optimal loads that keep the structure of the source system: the linear
// port-Hamiltonian RC source yields a negative-capacitance load, and a
// quartic port-Hamiltonian source yields a load whose Hamiltonian follows
// the trajectory.

use std::collections::BTreeMap;

use optimal_load::expr::Expr;
use optimal_load::linalg::{Mat, Vector};
use optimal_load::loads::{structured_adjoint, verify_structure, StructuredLoad};
use optimal_load::model::{PortHamiltonianLinear, PortHamiltonianNonlinear, StructuredSystem};
use optimal_load::signal::SourceSignal;
use optimal_load::solver::{solve_optimal_input, ProblemSpec};

pub struct StructuredOutcome {
    pub load_capacitance: f64,
    pub rc_discrepancy: f64,
    pub quartic_discrepancy: f64,
    pub quartic_frozen_discrepancy: f64,
}

fn one(v: f64) -> Mat {
    Mat::from_element(1, 1, v)
}

fn solved(
    s: &StructuredSystem,
    x0: f64,
) -> optimal_load::Result<optimal_load::trajectory::Trajectory> {
    let spec = ProblemSpec::new(
        s.to_generic()?,
        SourceSignal::constant(vec![1.0]),
        Vector::from_element(1, x0),
        1.0,
        1000,
    )?;
    Ok(solve_optimal_input(&spec)?.traj)
}

pub fn run_example() -> optimal_load::Result<StructuredOutcome> {
    let rc = StructuredSystem::PortHamiltonianLinear(PortHamiltonianLinear::new(
        one(0.0),
        one(0.0),
        one(1.0),
        one(1.0),
        one(1.0),
    )?);
    let traj = solved(&rc, 0.0)?;
    let StructuredLoad::PortHamiltonianLinear(load) = structured_adjoint(&rc, Some(&traj))? else {
        unreachable!("linear port-Hamiltonian sources give linear port-Hamiltonian loads");
    };
    let rc_report = verify_structure(&rc, &traj)?;

    let h = Expr::parse("x0^4/4", 1, 1, &BTreeMap::new())?;
    let quartic = StructuredSystem::PortHamiltonianNonlinear(PortHamiltonianNonlinear::new(
        one(0.0),
        one(0.5),
        one(1.0),
        one(1.0),
        h,
    )?);
    let traj = solved(&quartic, 0.5)?;
    let q_report = verify_structure(&quartic, &traj)?;

    Ok(StructuredOutcome {
        load_capacitance: 1.0 / load.q[(0, 0)],
        rc_discrepancy: rc_report.discrepancy,
        quartic_discrepancy: q_report.discrepancy,
        quartic_frozen_discrepancy: q_report.frozen_discrepancy.unwrap_or(f64::NAN),
    })
}

#[allow(dead_code)]
fn main() -> optimal_load::Result<()> {
    let o = run_example()?;
    println!("RC load capacitance {}", o.load_capacitance);
    println!("RC structured vs generic adjoint {:.3e}", o.rc_discrepancy);
    println!(
        "quartic structured vs generic adjoint {:.3e}",
        o.quartic_discrepancy
    );
    println!(
        "quartic with frozen coordinates {:.3e}",
        o.quartic_frozen_discrepancy
    );
    Ok(())
}
