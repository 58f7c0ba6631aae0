// The variational system and its adjoint along a nonlinear trajectory satisfy
// `[pᵀδx]₀ᵀ = ∫ y_aᵀδu − u_aᵀδy dt`. The discrete residual shrinks like `h⁴`.

use std::collections::BTreeMap;

use optimal_load::linalg::Vector;
use optimal_load::model::GenericSystem;
use optimal_load::signal::{GridSignal, TimeGrid};
use optimal_load::variational::{duality_residual, state_trajectory, FnSignal};

/// `(steps, residual)` on a sequence of refined grids.
pub fn run_example() -> optimal_load::Result<Vec<(usize, f64)>> {
    let sys = GenericSystem::parse(
        &["-x0 + x1*u0", "-x1^3 + sin(x0) + u1"],
        &["x0 + u0", "x1*x0 + 2*u1"],
        &BTreeMap::new(),
    )?;
    let du = FnSignal(|t: f64| Vector::from_vec(vec![(4.0 * t).sin(), t * t]));
    let ua = FnSignal(|t: f64| Vector::from_vec(vec![1.0 - t, (2.0 * t).cos()]));
    let mut out = Vec::new();
    for steps in [10, 20, 40, 80] {
        let grid = TimeGrid::new(1.0, steps)?;
        let u = GridSignal::sample(grid, |t| Vector::from_vec(vec![0.5 * t, 1.0]));
        let traj = state_trajectory(&sys, &Vector::from_vec(vec![0.3, -0.2]), &u)?;
        out.push((steps, duality_residual(&sys, &traj, &du, &ua)?));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> optimal_load::Result<()> {
    let rows = run_example()?;
    for w in rows.windows(2) {
        let order = (w[0].1 / w[1].1).ln() / (w[1].0 as f64 / w[0].0 as f64).ln();
        println!(
            "N = {:>3}  residual {:.3e}  observed order {order:.2}",
            w[1].0, w[1].1
        );
    }
    Ok(())
}
