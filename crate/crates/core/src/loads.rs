//! Optimal loads.
//!
//! Along a solution `(x̂, û, p)` the optimal load is the adjoint variational
//! system driven by `u_a = û` with `p(T) = 0`; its output is
//! `y_L = (∂fᵀ/∂u)p + (∂hᵀ/∂u)û` and the series interconnection satisfies
//! `y_S = ŷ + y_L`. For port-Hamiltonian and gradient systems the adjoint
//! keeps the structure in the coordinates `z = M⁻¹p`:
//!
//! | class              | load                                   | `M`          |
//! |--------------------|----------------------------------------|--------------|
//! | pH linear          | `(−J, R, −Q, −B, Dᵀ)`                  | `Q`          |
//! | gradient linear    | `(−G, P, C, D)`                        | `G`          |
//! | pH nonlinear       | `(−J, R, −B, Dᵀ)`, `−½zᵀ∇²H(x̂(t))z`    | `∇²H(x̂(t))`  |
//! | gradient nonlinear | `−G`, `½[z;u_a]ᵀ∇²V(x̂(t),û(t))[z;u_a]` | `G`          |
//!
//! The last two depend on the trajectory and are stored sampled on its grid.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector, MAX_CONDITION, SYMMETRY_TOL};
use crate::model::{GenericSystem, GradientLinear, PortHamiltonianLinear, StructuredSystem};
use crate::signal::{GridSignal, TimeGrid};
use crate::solver::{BvpSolution, ProblemSpec};
use crate::trajectory::Trajectory;
use crate::variational::{adjoint_along, LtvSystem, Signal};

/// Kirchhoff consistency `y_S = ŷ + y_L` above this is an error.
pub const CONSISTENCY_LIMIT: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLoad {
    /// Adjoint variational system along `(x̂, û)`.
    pub adjoint: LtvSystem,
    pub y_load: Vec<Vector>,
    /// `max_k ‖y_S − ŷ − y_L‖∞`.
    pub consistency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimalLoadRealization {
    Trajectory(TrajectoryLoad),
    Structured(StructuredLoad),
}

/// `y_L(t_k)` and the trajectory-level realization of the load.
pub fn load_from_solution(spec: &ProblemSpec, sol: &BvpSolution) -> Result<TrajectoryLoad> {
    let traj = &sol.traj;
    let adjoint = adjoint_along(&spec.sys, traj)?;
    let mut y_load = Vec::with_capacity(traj.len());
    let mut consistency: f64 = 0.0;
    for k in 0..traj.len() {
        let t = traj.grid.time(k);
        let j = spec
            .sys
            .jacobians(traj.x[k].as_slice(), traj.u[k].as_slice())
            .map_err(|e| e.at_time(t))?;
        let yl = j.fu.transpose() * &traj.p[k] + j.hu.transpose() * &traj.u[k];
        let gap = spec.source.eval(t) - &traj.y[k] - &yl;
        consistency = consistency.max(linalg::inf_norm(&gap));
        y_load.push(yl);
    }
    if !(consistency <= CONSISTENCY_LIMIT) {
        return Err(Error::ConsistencyViolation { max: consistency });
    }
    Ok(TrajectoryLoad {
        adjoint,
        y_load,
        consistency,
    })
}

/// Structured realization of the adjoint in `z`-coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum StructuredLoad {
    /// `p = Q z`.
    PortHamiltonianLinear(PortHamiltonianLinear),
    /// `p = G z`.
    GradientLinear(GradientLinear),
    /// Structure `(−J, R, −B, Dᵀ)` and `p = ∇²H(x̂(t)) z`.
    PortHamiltonianNonlinear {
        j: Mat,
        r: Mat,
        b: Mat,
        d: Mat,
        grid: TimeGrid,
        /// `∇²H(x̂(t_k))`; the load Hamiltonian is `−½zᵀ∇²H z`.
        hessians: Vec<Mat>,
    },
    /// Metric `−G` and `p = G z`.
    GradientNonlinear {
        g: Mat,
        grid: TimeGrid,
        /// `(V_xx, V_xu, V_uu)` at `(x̂(t_k), û(t_k))`.
        blocks: Vec<(Mat, Mat, Mat)>,
    },
}

impl StructuredLoad {
    pub fn kind(&self) -> &'static str {
        match self {
            StructuredLoad::PortHamiltonianLinear(_) => "port_hamiltonian_linear",
            StructuredLoad::GradientLinear(_) => "gradient_linear",
            StructuredLoad::PortHamiltonianNonlinear { .. } => "port_hamiltonian_nonlinear",
            StructuredLoad::GradientNonlinear { .. } => "gradient_nonlinear",
        }
    }

    pub fn is_trajectory_dependent(&self) -> bool {
        matches!(
            self,
            StructuredLoad::PortHamiltonianNonlinear { .. }
                | StructuredLoad::GradientNonlinear { .. }
        )
    }
}

fn needs_traj<'a>(traj: Option<&'a Trajectory>, kind: &str) -> Result<&'a Trajectory> {
    traj.ok_or_else(|| Error::InvalidProblem(format!("the {kind} load depends on a trajectory")))
}

/// Structure-preserving adjoint. Nonlinear classes are evaluated along `traj`.
pub fn structured_adjoint(
    s: &StructuredSystem,
    traj: Option<&Trajectory>,
) -> Result<StructuredLoad> {
    match s {
        StructuredSystem::PortHamiltonianLinear(ph) => Ok(StructuredLoad::PortHamiltonianLinear(
            PortHamiltonianLinear::new(-&ph.j, ph.r.clone(), -&ph.q, -&ph.b, ph.d.transpose())?,
        )),
        StructuredSystem::GradientLinear(gr) => Ok(StructuredLoad::GradientLinear(
            GradientLinear::new(-&gr.g, gr.p_grad.clone(), gr.c.clone(), gr.d.clone())?,
        )),
        StructuredSystem::PortHamiltonianNonlinear(ph) => {
            let traj = needs_traj(traj, s.kind())?;
            let hessians = traj
                .x
                .iter()
                .enumerate()
                .map(|(k, x)| {
                    ph.hessian(x.as_slice())
                        .map_err(|e| e.at_time(traj.grid.time(k)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(StructuredLoad::PortHamiltonianNonlinear {
                j: -&ph.j,
                r: ph.r.clone(),
                b: -&ph.b,
                d: ph.d.transpose(),
                grid: traj.grid,
                hessians,
            })
        }
        StructuredSystem::GradientNonlinear(gr) => {
            let traj = needs_traj(traj, s.kind())?;
            let blocks = (0..traj.len())
                .map(|k| {
                    gr.potential_blocks(traj.x[k].as_slice(), traj.u[k].as_slice())
                        .map_err(|e| e.at_time(traj.grid.time(k)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(StructuredLoad::GradientNonlinear {
                g: -&gr.g,
                grid: traj.grid,
                blocks,
            })
        }
        other => Err(Error::Unsupported(format!(
            "no structured adjoint for class {}",
            other.kind()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub kind: String,
    /// `max ‖y_a − y_z‖∞` between the generic adjoint and the structured load.
    pub discrepancy: f64,
    /// Same comparison for the nonlinear pH load with the coordinate change
    /// frozen at each instant, i.e. without the `d/dt ∇²H` correction.
    pub frozen_discrepancy: Option<f64>,
    /// `−J` skew, `R` symmetric PSD (pH classes) or `−G` symmetric (gradient classes).
    pub structure_ok: bool,
    /// Linear pH: the load storage `−½zᵀQz` is nonpositive (holds when `Q ⪰ 0`).
    pub storage_nonpositive: Option<bool>,
    pub trajectory_dependent: bool,
}

/// Dynamics of a structured load in `z` on one step, with the coordinate
/// matrix and its (constant per step) time derivative.
struct ZField<'a> {
    load: &'a StructuredLoad,
    corrected: bool,
}

impl ZField<'_> {
    fn lerp(a: &Mat, b: &Mat, theta: f64) -> Mat {
        a * (1.0 - theta) + b * theta
    }

    /// `(ż, y)` at `(k, θ)` inside step `[t_k, t_{k+1}]`.
    fn eval(
        &self,
        k: usize,
        theta: f64,
        h: f64,
        z: &Vector,
        ua: &Vector,
    ) -> Result<(Vector, Vector)> {
        Ok(match self.load {
            StructuredLoad::PortHamiltonianLinear(ph) => {
                // ż = (J_L − R)Q_L z + B_L u_a with the load's own matrices
                let zdot = (&ph.j - &ph.r) * &ph.q * z + &ph.b * ua;
                let y = ph.b.transpose() * &ph.q * z + &ph.d * ua;
                (zdot, y)
            }
            StructuredLoad::GradientLinear(gr) => {
                let rhs = -(&gr.p_grad * z) + gr.c.transpose() * ua;
                let zdot =
                    linalg::solve(&gr.g, &rhs).ok_or_else(|| Error::SingularMatrix("G".into()))?;
                (zdot, &gr.c * z + &gr.d * ua)
            }
            StructuredLoad::PortHamiltonianNonlinear {
                j,
                r,
                b,
                d,
                hessians,
                ..
            } => {
                let hs = Self::lerp(&hessians[k], &hessians[k + 1], theta);
                // ∂/∂z of −½zᵀHz
                let grad = -(&hs * z);
                let mut zdot = (j - r) * &grad + b * ua;
                if self.corrected {
                    let hdot = (&hessians[k + 1] - &hessians[k]) / h;
                    let corr = linalg::solve(&hs, &(hdot * z))
                        .ok_or_else(|| Error::SingularMatrix("Hessian of H".into()))?;
                    zdot -= corr;
                }
                (zdot, b.transpose() * grad + d * ua)
            }
            StructuredLoad::GradientNonlinear { g, blocks, .. } => {
                let (a0, b0, c0) = &blocks[k];
                let (a1, b1, c1) = &blocks[k + 1];
                let (vxx, vxu, vuu) = (
                    Self::lerp(a0, a1, theta),
                    Self::lerp(b0, b1, theta),
                    Self::lerp(c0, c1, theta),
                );
                // (−G)ż = −∂W/∂z, y = −∂W/∂u_a
                let wz = &vxx * z + &vxu * ua;
                let zdot =
                    linalg::solve(g, &(-wz)).ok_or_else(|| Error::SingularMatrix("G".into()))?;
                (zdot, -(vxu.transpose() * z) - vuu * ua)
            }
        })
    }

    /// `p = M(t_k) z`; the load stores `−Q` and `−G`, hence the signs.
    fn coordinate(&self, k: usize) -> Mat {
        match self.load {
            StructuredLoad::PortHamiltonianLinear(ph) => -&ph.q,
            StructuredLoad::GradientLinear(gr) => -&gr.g,
            StructuredLoad::PortHamiltonianNonlinear { hessians, .. } => hessians[k].clone(),
            StructuredLoad::GradientNonlinear { g, .. } => -g,
        }
    }

    /// Backward RK4 from `z(T)`; returns the output samples.
    fn outputs(&self, grid: TimeGrid, z_end: Vector, ua: &dyn Signal) -> Result<Vec<Vector>> {
        let h = grid.step();
        let n = grid.steps;
        let mut z = z_end;
        let mut ys = vec![Vector::zeros(0); n + 1];
        ys[n] = self.eval(n - 1, 1.0, h, &z, &ua.value_at(grid.time(n)))?.1;
        for k in (0..n).rev() {
            let (t0, t1) = (grid.time(k), grid.time(k + 1));
            let tm = t1 - 0.5 * h;
            let f = |theta: f64, t: f64, z: &Vector| {
                self.eval(k, theta, h, z, &ua.value_at(t)).map(|r| r.0)
            };
            let k1 = f(1.0, t1, &z)?;
            let k2 = f(0.5, tm, &(&z - &k1 * (0.5 * h)))?;
            let k3 = f(0.5, tm, &(&z - &k2 * (0.5 * h)))?;
            let k4 = f(0.0, t0, &(&z - &k3 * h))?;
            z -= (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            ys[k] = self.eval(k, 0.0, h, &z, &ua.value_at(t0))?.1;
        }
        Ok(ys)
    }
}

fn max_gap(a: &[Vector], b: &[Vector]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| linalg::inf_norm(&(x - y)))
        .fold(0.0, f64::max)
}

/// Compares the generic adjoint of `s` along `traj` with its structured
/// load, both integrated backward from matching terminal data under `u_a`.
pub fn verify_structure_with(
    s: &StructuredSystem,
    traj: &Trajectory,
    u_a: &dyn Signal,
    p_end: &Vector,
) -> Result<StructureReport> {
    let generic: GenericSystem = s.to_generic()?;
    let adjoint = adjoint_along(&generic, traj)?;
    let (_, y_generic) = adjoint.simulate_backward(p_end.clone(), u_a)?;
    let load = structured_adjoint(s, Some(traj))?;

    let field = ZField {
        load: &load,
        corrected: true,
    };
    let m_end = field.coordinate(traj.grid.steps);
    let cond = linalg::condition_number(&m_end);
    if !(cond < MAX_CONDITION) {
        return Err(Error::SingularMatrix(format!(
            "coordinate change has condition number {cond:.3e}"
        )));
    }
    if let StructuredLoad::PortHamiltonianNonlinear { hessians, .. } = &load {
        for (k, hs) in hessians.iter().enumerate() {
            let c = linalg::condition_number(hs);
            if !(c < MAX_CONDITION) {
                return Err(Error::SingularMatrix(format!(
                    "Hessian of H has condition number {c:.3e} at t = {}",
                    traj.grid.time(k)
                )));
            }
        }
    }
    let z_end = linalg::solve(&m_end, p_end)
        .ok_or_else(|| Error::SingularMatrix("coordinate change".into()))?;
    let y_struct = field.outputs(traj.grid, z_end.clone(), u_a)?;
    let discrepancy = max_gap(&y_generic, &y_struct);

    let frozen_discrepancy = match &load {
        StructuredLoad::PortHamiltonianNonlinear { .. } => {
            let frozen = ZField {
                load: &load,
                corrected: false,
            };
            Some(max_gap(&y_generic, &frozen.outputs(traj.grid, z_end, u_a)?))
        }
        _ => None,
    };

    let (structure_ok, storage_nonpositive) = match &load {
        StructuredLoad::PortHamiltonianLinear(ph) => {
            let ok = linalg::is_skew(&ph.j, SYMMETRY_TOL)
                && linalg::is_symmetric(&ph.r, SYMMETRY_TOL)
                && linalg::is_psd(&ph.r);
            // load storage ½zᵀQ_L z with Q_L = −Q
            let largest = -linalg::min_eigenvalue(&-&ph.q);
            (ok, Some(largest <= -linalg::PSD_FLOOR))
        }
        StructuredLoad::PortHamiltonianNonlinear { j, r, .. } => (
            linalg::is_skew(j, SYMMETRY_TOL)
                && linalg::is_symmetric(r, SYMMETRY_TOL)
                && linalg::is_psd(r),
            None,
        ),
        StructuredLoad::GradientLinear(gr) => (linalg::is_symmetric(&gr.g, SYMMETRY_TOL), None),
        StructuredLoad::GradientNonlinear { g, .. } => {
            (linalg::is_symmetric(g, SYMMETRY_TOL), None)
        }
    };

    Ok(StructureReport {
        kind: load.kind().to_string(),
        discrepancy,
        frozen_discrepancy,
        structure_ok,
        storage_nonpositive,
        trajectory_dependent: load.is_trajectory_dependent(),
    })
}

/// [`verify_structure_with`] using `u_a = u` from the trajectory and unit
/// terminal co-state, so that the comparison is not trivially zero.
pub fn verify_structure(s: &StructuredSystem, traj: &Trajectory) -> Result<StructureReport> {
    let n = traj.x.first().map_or(0, Vector::len);
    let ua = GridSignal {
        grid: traj.grid,
        values: traj.u.clone(),
    };
    verify_structure_with(s, traj, &ua, &Vector::from_element(n, 1.0))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::expr::Expr;
    use crate::model::{GradientNonlinear, PortHamiltonianNonlinear};
    use crate::signal::SourceSignal;
    use crate::solver::solve_optimal_input;
    use crate::variational::state_trajectory;

    fn m1(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn rc_ph() -> PortHamiltonianLinear {
        PortHamiltonianLinear::new(m1(0.0), m1(0.0), m1(1.0), m1(1.0), m1(1.0)).unwrap()
    }

    #[test]
    fn rc_load_matches_closed_form() {
        let sys = GenericSystem::parse(&["u0"], &["x0 + u0"], &BTreeMap::new()).unwrap();
        let spec = ProblemSpec::new(
            sys,
            SourceSignal::constant(vec![1.0]),
            Vector::zeros(1),
            1.0,
            100,
        )
        .unwrap();
        let sol = solve_optimal_input(&spec).unwrap();
        let load = load_from_solution(&spec, &sol).unwrap();
        for (k, yl) in load.y_load.iter().enumerate() {
            let t = sol.traj.grid.time(k);
            assert!((yl[0] - ((1.0 - t) / 3.0 + 1.0 / 3.0)).abs() < 1e-9);
        }
        assert!(load.consistency < 1e-9);
    }

    #[test]
    fn static_and_resistor_loads() {
        let sys = GenericSystem::parse(&[], &["2*u0"], &BTreeMap::new()).unwrap();
        let spec = ProblemSpec::new(
            sys,
            SourceSignal::constant(vec![1.0]),
            Vector::zeros(0),
            1.0,
            10,
        )
        .unwrap();
        let sol = solve_optimal_input(&spec).unwrap();
        let load = load_from_solution(&spec, &sol).unwrap();
        // matched resistance: y_L = R û
        assert!(load.y_load.iter().all(|y| (y[0] - 0.5).abs() < 1e-15));
    }

    #[test]
    fn inconsistent_solution_rejected() {
        let sys = GenericSystem::parse(&["u0"], &["x0 + u0"], &BTreeMap::new()).unwrap();
        let spec = ProblemSpec::new(
            sys,
            SourceSignal::constant(vec![1.0]),
            Vector::zeros(1),
            1.0,
            20,
        )
        .unwrap();
        let mut sol = solve_optimal_input(&spec).unwrap();
        sol.traj.u[3][0] += 1e-3;
        assert!(matches!(
            load_from_solution(&spec, &sol),
            Err(Error::ConsistencyViolation { .. })
        ));
    }

    #[test]
    fn rc_negative_capacitance() {
        let s = StructuredSystem::PortHamiltonianLinear(rc_ph());
        let StructuredLoad::PortHamiltonianLinear(load) = structured_adjoint(&s, None).unwrap()
        else {
            panic!("wrong class");
        };
        // Q = 1/C so the load capacitance is 1/Q_L = −C
        assert_eq!(1.0 / load.q[(0, 0)], -1.0);
        assert_eq!(load.d[(0, 0)], 1.0);
        assert_eq!(load.r, rc_ph().r);
    }

    #[test]
    fn unsupported_and_missing_trajectory() {
        let lin = StructuredSystem::Linear(rc_ph().to_linear());
        assert!(matches!(
            structured_adjoint(&lin, None),
            Err(Error::Unsupported(_))
        ));
        let h = Expr::parse("x0^4/4", 1, 1, &BTreeMap::new()).unwrap();
        let ph = PortHamiltonianNonlinear::new(m1(0.0), m1(0.5), m1(1.0), m1(1.0), h).unwrap();
        let s = StructuredSystem::PortHamiltonianNonlinear(ph);
        assert!(matches!(
            structured_adjoint(&s, None),
            Err(Error::InvalidProblem(_))
        ));
    }

    fn sine_traj(sys: &GenericSystem, x0: f64, steps: usize) -> Trajectory {
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let u = GridSignal::sample(grid, |t| {
            Vector::from_element(1, 1.0 + 0.5 * (3.0 * t).sin())
        });
        state_trajectory(sys, &Vector::from_element(1, x0), &u).unwrap()
    }

    #[test]
    fn rc_structure_verified() {
        let s = StructuredSystem::PortHamiltonianLinear(rc_ph());
        let traj = sine_traj(&s.to_generic().unwrap(), 0.0, 100);
        let rep = verify_structure(&s, &traj).unwrap();
        assert!(rep.discrepancy < 1e-12, "{rep:?}");
        assert_eq!(rep.storage_nonpositive, Some(true));
        assert!(rep.structure_ok);
    }

    #[test]
    fn quartic_ph_needs_coordinate_rate() {
        let h = Expr::parse("x0^4/4", 1, 1, &BTreeMap::new()).unwrap();
        let ph = PortHamiltonianNonlinear::new(m1(0.0), m1(0.5), m1(1.0), m1(0.2), h).unwrap();
        let s = StructuredSystem::PortHamiltonianNonlinear(ph);
        let traj = sine_traj(&s.to_generic().unwrap(), 0.8, 400);
        let rep = verify_structure(&s, &traj).unwrap();
        assert!(rep.discrepancy < 1e-8, "{rep:?}");
        assert!(rep.frozen_discrepancy.unwrap() > 1e-3, "{rep:?}");
    }

    #[test]
    fn gradient_nonlinear_structure() {
        let v = Expr::parse("x0^4/4 + x0^2/2 - x0*u0 - u0^2/2", 1, 1, &BTreeMap::new()).unwrap();
        let s = StructuredSystem::GradientNonlinear(GradientNonlinear::new(m1(2.0), v).unwrap());
        let traj = sine_traj(&s.to_generic().unwrap(), 0.3, 200);
        let rep = verify_structure(&s, &traj).unwrap();
        assert!(rep.discrepancy < 1e-10, "{rep:?}");
        assert!(rep.trajectory_dependent);
    }
}
