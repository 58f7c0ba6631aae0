//! Shooting solver for the two-point boundary value problem
//!
//! ```text
//! Σ×:  ẋ = f(x,u),  ṗ = −∂H⁺/∂x(x,p,u),  y_S(t) = ∂H⁺/∂u(x,p,u)
//!      x(0) = x₀,   p(T) = 0
//! ```
//!
//! whose `u` column is the extremizing input `û` of the power functional.

use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianSystem, InversionSettings};
use crate::linalg::{self, Mat, Vector, MAX_CONDITION};
use crate::model::GenericSystem;
use crate::signal::{SourceSignal, TimeGrid};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Bound on `‖p(T)‖∞`.
    pub shooting: f64,
    /// Bound on the inner inversion residual.
    pub newton: f64,
    pub max_shooting_iterations: usize,
    pub max_newton_iterations: usize,
    /// Forward-difference step for the shooting Jacobian.
    pub fd_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            shooting: 1e-10,
            newton: 1e-10,
            max_shooting_iterations: 30,
            max_newton_iterations: 50,
            fd_step: 1e-6,
        }
    }
}

/// Everything that determines one energy-extraction problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub sys: GenericSystem,
    pub source: SourceSignal,
    pub x0: Vector,
    pub grid: TimeGrid,
    pub tolerances: Tolerances,
}

impl ProblemSpec {
    pub fn new(
        sys: GenericSystem,
        source: SourceSignal,
        x0: Vector,
        horizon: f64,
        steps: usize,
    ) -> Result<Self> {
        if steps < 10 {
            return Err(Error::InvalidProblem(format!(
                "steps = {steps}, need at least 10"
            )));
        }
        let grid = TimeGrid::new(horizon, steps)?;
        if x0.len() != sys.state_dim() {
            return Err(Error::Dimension(format!(
                "x0 has length {}, system has {} states",
                x0.len(),
                sys.state_dim()
            )));
        }
        source.validate(sys.input_dim(), horizon)?;
        Ok(Self {
            sys,
            source,
            x0,
            grid,
            tolerances: Tolerances::default(),
        })
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon
    }

    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    pub fn hamiltonian(&self) -> HamiltonianSystem {
        HamiltonianSystem::new(self.sys.clone()).with_settings(InversionSettings {
            tolerance: self.tolerances.newton,
            max_iterations: self.tolerances.max_newton_iterations,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BvpSolution {
    pub traj: Trajectory,
    pub p0: Vector,
    /// `‖p(T)‖∞`
    pub shooting_residual: f64,
    pub shooting_iterations: usize,
    /// Inner Newton iterations spent on the final trajectory.
    pub newton_iterations: usize,
    /// `−P(û)` by trapezoidal quadrature on the grid.
    pub extracted_energy: f64,
}

/// Forward integration of `Σ×` from `(x₀, p0)` with `y⁺ = y_S`.
pub fn integrate_sigma_times(spec: &ProblemSpec, p0: &Vector) -> Result<Trajectory> {
    Ok(integrate_with(spec, &spec.hamiltonian(), p0)?.0)
}

fn join(x: &Vector, p: &Vector) -> Vector {
    let n = x.len();
    let mut z = Vector::zeros(2 * n);
    z.rows_mut(0, n).copy_from(x);
    z.rows_mut(n, n).copy_from(p);
    z
}

fn split(z: &Vector) -> (Vector, Vector) {
    let n = z.len() / 2;
    (z.rows(0, n).into_owned(), z.rows(n, n).into_owned())
}

fn integrate_with(
    spec: &ProblemSpec,
    hs: &HamiltonianSystem,
    p0: &Vector,
) -> Result<(Trajectory, usize)> {
    let n = spec.sys.state_dim();
    let m = spec.sys.input_dim();
    if p0.len() != n {
        return Err(Error::Dimension(format!(
            "p0 has length {}, expected {n}",
            p0.len()
        )));
    }
    let grid = spec.grid;
    let h = grid.step();
    let mut guess = Vector::zeros(m);
    let mut iterations = 0usize;

    // stage evaluation; the warm start follows the integration order
    let mut stage = |t: f64, z: &Vector, guess: &mut Vector| -> Result<(Vector, Vector)> {
        let (x, p) = split(z);
        let target = spec.source.eval(t);
        let (xdot, pdot, inv) = hs
            .sigma_times_rhs(x.as_slice(), p.as_slice(), &target, guess)
            .map_err(|e| e.at_time(t))?;
        iterations += inv.iterations;
        *guess = inv.u.clone();
        Ok((join(&xdot, &pdot), inv.u))
    };

    let mut zs = Vec::with_capacity(grid.len());
    let mut us = Vec::with_capacity(grid.len());
    zs.push(join(&spec.x0, p0));
    for k in 0..grid.steps {
        let (t0, t1) = (grid.time(k), grid.time(k + 1));
        let tm = t0 + 0.5 * h;
        let z = zs[k].clone();
        let (k1, u) = stage(t0, &z, &mut guess)?;
        us.push(u);
        let (k2, _) = stage(tm, &(&z + &k1 * (0.5 * h)), &mut guess)?;
        let (k3, _) = stage(tm, &(&z + &k2 * (0.5 * h)), &mut guess)?;
        let (k4, _) = stage(t1, &(&z + &k3 * h), &mut guess)?;
        zs.push(z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0));
    }
    let (_, u_end) = stage(grid.time(grid.steps), &zs[grid.steps], &mut guess)?;
    us.push(u_end);
    drop(stage);

    let mut traj = Trajectory {
        grid,
        x: Vec::with_capacity(grid.len()),
        p: Vec::with_capacity(grid.len()),
        u: us,
        y: Vec::with_capacity(grid.len()),
        yplus: Vec::with_capacity(grid.len()),
    };
    for (k, z) in zs.iter().enumerate() {
        let (x, p) = split(z);
        let u = &traj.u[k];
        let t = grid.time(k);
        let y = spec
            .sys
            .output(x.as_slice(), u.as_slice())
            .map_err(|e| e.at_time(t))?;
        let (yplus, _) = hs
            .input_derivatives(x.as_slice(), p.as_slice(), u.as_slice())
            .map_err(|e| e.at_time(t))?;
        traj.x.push(x);
        traj.p.push(p);
        traj.y.push(y);
        traj.yplus.push(yplus);
    }
    Ok((traj, iterations))
}

/// `∫₀ᵀ (y − y_S)ᵀu dt` on the trajectory's grid.
pub fn power_on_trajectory(traj: &Trajectory, source: &SourceSignal) -> f64 {
    let integrand: Vec<f64> = (0..traj.len())
        .map(|k| (&traj.y[k] - source.eval(traj.grid.time(k))).dot(&traj.u[k]))
        .collect();
    traj.grid.trapezoid(&integrand)
}

fn finish(
    spec: &ProblemSpec,
    traj: Trajectory,
    p0: Vector,
    iters: usize,
    newton: usize,
) -> BvpSolution {
    let shooting_residual = traj.p.last().map(linalg::inf_norm).unwrap_or(0.0);
    let extracted_energy = -power_on_trajectory(&traj, &spec.source);
    BvpSolution {
        traj,
        p0,
        shooting_residual,
        shooting_iterations: iters,
        newton_iterations: newton,
        extracted_energy,
    }
}

/// Solves for `p0` with `p(T) = 0` and returns the extremizing trajectory.
pub fn solve_optimal_input(spec: &ProblemSpec) -> Result<BvpSolution> {
    let hs = spec.hamiltonian();
    let n = spec.sys.state_dim();
    let tol = spec.tolerances;

    let mut p0 = Vector::zeros(n);
    let (mut traj, mut newton) = integrate_with(spec, &hs, &p0)?;
    if n == 0 {
        return Ok(finish(spec, traj, p0, 0, newton));
    }
    let terminal = |t: &Trajectory| t.p.last().expect("non-empty grid").clone();
    let mut r = terminal(&traj);
    let mut norm = linalg::inf_norm(&r);
    let linear = spec.sys.linear().is_some();
    let mut jac: Option<Mat> = None;

    for iter in 0..tol.max_shooting_iterations {
        if norm <= tol.shooting {
            return Ok(finish(spec, traj, p0, iter, newton));
        }
        if jac.is_none() || !linear {
            jac = Some(shooting_jacobian(spec, &hs, &p0, &r, linear)?);
        }
        let j = jac.as_ref().expect("just computed");
        let cond = linalg::condition_number(j);
        if !(cond < MAX_CONDITION) {
            return Err(Error::SingularMatrix(format!(
                "shooting Jacobian has condition number {cond:e}"
            )));
        }
        let step = linalg::solve(j, &(-&r))
            .ok_or_else(|| Error::SingularMatrix("shooting Jacobian".into()))?;

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &p0 + &step * alpha;
            if let Ok((tc, nc)) = integrate_with(spec, &hs, &cand) {
                let rc = terminal(&tc);
                let norm_c = linalg::inf_norm(&rc);
                if norm_c < norm {
                    p0 = cand;
                    traj = tc;
                    newton = nc;
                    r = rc;
                    norm = norm_c;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::ShootingDivergence {
                residual: norm,
                iterations: iter,
            });
        }
    }
    if norm <= tol.shooting {
        return Ok(finish(spec, traj, p0, tol.max_shooting_iterations, newton));
    }
    Err(Error::ShootingDivergence {
        residual: norm,
        iterations: tol.max_shooting_iterations,
    })
}

/// Jacobian of `p0 ↦ p(T)`; unit steps suffice when the map is affine.
fn shooting_jacobian(
    spec: &ProblemSpec,
    hs: &HamiltonianSystem,
    p0: &Vector,
    base: &Vector,
    linear: bool,
) -> Result<Mat> {
    let n = p0.len();
    let mut j = Mat::zeros(n, n);
    for col in 0..n {
        let step = if linear {
            1.0
        } else {
            spec.tolerances.fd_step * p0[col].abs().max(1.0)
        };
        let mut pert = p0.clone();
        pert[col] += step;
        let (traj, _) = integrate_with(spec, hs, &pert)?;
        let column = (traj.p.last().expect("non-empty grid") - base) / step;
        j.set_column(col, &column);
    }
    Ok(j)
}

/// `max_k ‖y⁺(t_k) − y_S(t_k)‖∞`.
pub fn residual_first_order(spec: &ProblemSpec, sol: &BvpSolution) -> f64 {
    let traj = &sol.traj;
    (0..traj.len())
        .map(|k| linalg::inf_norm(&(&traj.yplus[k] - spec.source.eval(traj.grid.time(k)))))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::model::LinearSystem;

    fn rc_spec(steps: usize) -> ProblemSpec {
        let sys = GenericSystem::parse(&["u0"], &["x0 + u0"], &BTreeMap::new()).unwrap();
        ProblemSpec::new(
            sys,
            SourceSignal::constant(vec![1.0]),
            Vector::zeros(1),
            1.0,
            steps,
        )
        .unwrap()
    }

    #[test]
    fn rc_closed_form() {
        let sol = solve_optimal_input(&rc_spec(200)).unwrap();
        for (k, u) in sol.traj.u.iter().enumerate() {
            assert!((u[0] - 1.0 / 3.0).abs() < 1e-9);
            let t = sol.traj.grid.time(k);
            assert!((sol.traj.p[k][0] - (1.0 - t) / 3.0).abs() < 1e-9);
        }
        assert!((sol.extracted_energy - 1.0 / 6.0).abs() < 1e-9);
        assert!(sol.shooting_residual <= 1e-10);
    }

    #[test]
    fn rc_conserved_quantity() {
        let traj = integrate_sigma_times(&rc_spec(50), &Vector::from_element(1, 0.7)).unwrap();
        let w0 = traj.x[0][0] + traj.p[0][0];
        for k in 0..traj.len() {
            assert!((traj.x[k][0] + traj.p[k][0] - w0).abs() < 1e-13);
        }
    }

    #[test]
    fn static_resistor_bypasses_shooting() {
        let sys = GenericSystem::parse(&[], &["2*u0"], &BTreeMap::new()).unwrap();
        let spec = ProblemSpec::new(
            sys,
            SourceSignal::constant(vec![3.0]),
            Vector::zeros(0),
            2.0,
            10,
        )
        .unwrap();
        let sol = solve_optimal_input(&spec).unwrap();
        assert_eq!(sol.shooting_iterations, 0);
        for u in &sol.traj.u {
            assert!((u[0] - 0.75).abs() < 1e-15);
        }
        assert!((sol.extracted_energy - 2.0 * 9.0 / 8.0).abs() < 1e-12);
        assert!(residual_first_order(&spec, &sol) < 1e-14);
    }

    #[test]
    fn perturbed_input_is_not_stationary() {
        let spec = rc_spec(100);
        let mut sol = solve_optimal_input(&spec).unwrap();
        for yp in sol.traj.yplus.iter_mut() {
            yp[0] += 0.2;
        }
        assert!(residual_first_order(&spec, &sol) > 0.1);
    }

    #[test]
    fn too_few_steps_rejected() {
        let sys = GenericSystem::parse(&["u0"], &["x0 + u0"], &BTreeMap::new()).unwrap();
        assert!(ProblemSpec::new(
            sys,
            SourceSignal::constant(vec![1.0]),
            Vector::zeros(1),
            1.0,
            9
        )
        .is_err());
    }

    #[test]
    fn singular_hessian_carries_time() {
        let sys = LinearSystem::new(
            Mat::from_element(1, 1, -1.0),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, 1.0),
            Mat::zeros(1, 1),
        )
        .unwrap()
        .to_generic()
        .unwrap();
        let spec = ProblemSpec::new(
            sys,
            SourceSignal::constant(vec![1.0]),
            Vector::zeros(1),
            1.0,
            10,
        )
        .unwrap();
        match solve_optimal_input(&spec) {
            Err(Error::SingularHessian { t: Some(t), .. }) => assert_eq!(t, 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn linear_matches_matrix_exponential() {
        // Σ× for a linear system is the LTI system ż = M z + N y_S
        let lin = LinearSystem::new(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.5]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(1, 2, &[0.3, 1.0]),
            Mat::from_element(1, 1, 0.8),
        )
        .unwrap();
        let spec = ProblemSpec::new(
            lin.to_generic().unwrap(),
            SourceSignal::constant(vec![1.0]),
            Vector::from_column_slice(&[0.2, -0.1]),
            1.5,
            400,
        )
        .unwrap();
        let p0 = Vector::from_column_slice(&[0.4, -0.3]);
        let traj = integrate_sigma_times(&spec, &p0).unwrap();

        let s_inv = (&lin.d + lin.d.transpose()).try_inverse().unwrap();
        let mut big = Mat::zeros(5, 5);
        let bs = &lin.b * &s_inv;
        let cs = lin.c.transpose() * &s_inv;
        big.view_mut((0, 0), (2, 2))
            .copy_from(&(&lin.a - &bs * &lin.c));
        big.view_mut((0, 2), (2, 2))
            .copy_from(&(-&bs * lin.b.transpose()));
        big.view_mut((2, 0), (2, 2)).copy_from(&(&cs * &lin.c));
        big.view_mut((2, 2), (2, 2))
            .copy_from(&(-lin.a.transpose() + &cs * lin.b.transpose()));
        big.view_mut((0, 4), (2, 1)).copy_from(&bs);
        big.view_mut((2, 4), (2, 1)).copy_from(&(-&cs));
        let z0 = Vector::from_column_slice(&[0.2, -0.1, 0.4, -0.3, 1.0]);
        for k in (0..traj.len()).step_by(50) {
            let exact = (&big * traj.grid.time(k)).exp() * &z0;
            assert!((exact[0] - traj.x[k][0]).abs() < 1e-8);
            assert!((exact[1] - traj.x[k][1]).abs() < 1e-8);
            assert!((exact[2] - traj.p[k][0]).abs() < 1e-8);
            assert!((exact[3] - traj.p[k][1]).abs() < 1e-8);
        }
    }

    #[test]
    fn deterministic() {
        let sys = GenericSystem::parse(&["u0"], &["x0^3 + u0"], &BTreeMap::new()).unwrap();
        let spec = ProblemSpec::new(
            sys,
            SourceSignal::constant(vec![1.0]),
            Vector::zeros(1),
            1.0,
            100,
        )
        .unwrap();
        assert_eq!(
            solve_optimal_input(&spec).unwrap(),
            solve_optimal_input(&spec).unwrap()
        );
    }
}
