//! Linearization of `Σ` along a trajectory and its adjoint.
//!
//! The variational system is `δẋ = A(t)δx + B(t)δu`, `δy = C(t)δx + D(t)δu`
//! with the Jacobians of `f` and `h` evaluated along `(x(t), u(t))`. The
//! adjoint `ṗ = −Aᵀp − Cᵀu_a`, `y_a = Bᵀp + Dᵀu_a` is the unique LTV system
//! for which `d/dt pᵀδx = y_aᵀδu − u_aᵀδy`.

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::GenericSystem;
use crate::ode;
use crate::signal::{GridSignal, SourceSignal, TimeGrid};
use crate::trajectory::Trajectory;

/// Anything that yields a vector at an arbitrary time.
pub trait Signal {
    fn value_at(&self, t: f64) -> Vector;
}

impl Signal for GridSignal {
    fn value_at(&self, t: f64) -> Vector {
        self.at(t)
    }
}

impl Signal for SourceSignal {
    fn value_at(&self, t: f64) -> Vector {
        self.eval(t)
    }
}

/// Adapter for closures.
pub struct FnSignal<F>(pub F);

impl<F: Fn(f64) -> Vector> Signal for FnSignal<F> {
    fn value_at(&self, t: f64) -> Vector {
        (self.0)(t)
    }
}

/// Linear time-varying system with matrices sampled on a grid and
/// interpolated linearly in between.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvSystem {
    pub grid: TimeGrid,
    pub a: Vec<Mat>,
    pub b: Vec<Mat>,
    pub c: Vec<Mat>,
    pub d: Vec<Mat>,
}

fn lerp(a: &Mat, b: &Mat, theta: f64) -> Mat {
    if theta == 0.0 {
        a.clone()
    } else if theta == 1.0 {
        b.clone()
    } else {
        a + (b - a) * theta
    }
}

impl LtvSystem {
    pub fn new(grid: TimeGrid, a: Vec<Mat>, b: Vec<Mat>, c: Vec<Mat>, d: Vec<Mat>) -> Result<Self> {
        let len = grid.len();
        if [a.len(), b.len(), c.len(), d.len()]
            .iter()
            .any(|&l| l != len)
        {
            return Err(Error::Dimension(format!(
                "LTV system needs {len} samples per matrix"
            )));
        }
        let (n, m) = (a[0].nrows(), d[0].nrows());
        let consistent = (0..len).all(|k| {
            a[k].shape() == (n, n)
                && b[k].shape() == (n, m)
                && c[k].shape() == (m, n)
                && d[k].shape() == (m, m)
        });
        if !consistent {
            return Err(Error::Dimension(
                "LTV matrix samples have inconsistent shapes".into(),
            ));
        }
        Ok(Self { grid, a, b, c, d })
    }

    pub fn state_dim(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.d[0].nrows()
    }

    /// Interpolated `(A, B, C, D)` at time `t`.
    pub fn at(&self, t: f64) -> (Mat, Mat, Mat, Mat) {
        let (k, th) = self.grid.locate(t);
        (
            lerp(&self.a[k], &self.a[k + 1], th),
            lerp(&self.b[k], &self.b[k + 1], th),
            lerp(&self.c[k], &self.c[k + 1], th),
            lerp(&self.d[k], &self.d[k + 1], th),
        )
    }

    /// Pointwise `(−Aᵀ, −Cᵀ, Bᵀ, Dᵀ)`.
    pub fn adjoint(&self) -> Self {
        Self {
            grid: self.grid,
            a: self.a.iter().map(|m| -m.transpose()).collect(),
            b: self.c.iter().map(|m| -m.transpose()).collect(),
            c: self.b.iter().map(|m| m.transpose()).collect(),
            d: self.d.iter().map(|m| m.transpose()).collect(),
        }
    }

    /// True when every sample equals the first one.
    pub fn is_constant(&self) -> bool {
        let same = |v: &[Mat]| v.iter().all(|m| m == &v[0]);
        same(&self.a) && same(&self.b) && same(&self.c) && same(&self.d)
    }

    /// Forward simulation from `x(0) = x0`. Returns state and output samples.
    pub fn simulate_forward(
        &self,
        x0: Vector,
        input: &dyn Signal,
    ) -> Result<(Vec<Vector>, Vec<Vector>)> {
        let xs = ode::rk4(self.grid, x0, |t, x| {
            let (a, b, _, _) = self.at(t);
            Ok(a * x + b * input.value_at(t))
        })?;
        Ok((xs.clone(), self.outputs(&xs, input)))
    }

    /// Backward simulation from the terminal state `x(T) = x_end`.
    pub fn simulate_backward(
        &self,
        x_end: Vector,
        input: &dyn Signal,
    ) -> Result<(Vec<Vector>, Vec<Vector>)> {
        let xs = ode::rk4_backward(self.grid, x_end, |t, x| {
            let (a, b, _, _) = self.at(t);
            Ok(a * x + b * input.value_at(t))
        })?;
        Ok((xs.clone(), self.outputs(&xs, input)))
    }

    fn outputs(&self, xs: &[Vector], input: &dyn Signal) -> Vec<Vector> {
        xs.iter()
            .enumerate()
            .map(|(k, x)| {
                let t = self.grid.time(k);
                &self.c[k] * x + &self.d[k] * input.value_at(t)
            })
            .collect()
    }
}

/// `(A, B, C, D)` = Jacobians of `(f, h)` along the trajectory's `(x, u)` columns.
pub fn variational_along(sys: &GenericSystem, traj: &Trajectory) -> Result<LtvSystem> {
    let len = traj.len();
    let (mut a, mut b, mut c, mut d) = (
        Vec::with_capacity(len),
        Vec::with_capacity(len),
        Vec::with_capacity(len),
        Vec::with_capacity(len),
    );
    for k in 0..len {
        let j = sys
            .jacobians(traj.x[k].as_slice(), traj.u[k].as_slice())
            .map_err(|e| e.at_time(traj.grid.time(k)))?;
        a.push(j.fx);
        b.push(j.fu);
        c.push(j.hx);
        d.push(j.hu);
    }
    LtvSystem::new(traj.grid, a, b, c, d)
}

/// The adjoint variational system `(−Aᵀ, −Cᵀ, Bᵀ, Dᵀ)` along the trajectory.
pub fn adjoint_along(sys: &GenericSystem, traj: &Trajectory) -> Result<LtvSystem> {
    Ok(variational_along(sys, traj)?.adjoint())
}

/// Both sides of the duality identity `∫y_aᵀδu − ∫u_aᵀδy = [pᵀδx]₀ᵀ`
/// with `δx(0) = 0`, `p(T) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityBalance {
    /// `∫₀ᵀ y_aᵀ δu dt`
    pub adjoint_pairing: f64,
    /// `∫₀ᵀ u_aᵀ δy dt`
    pub variational_pairing: f64,
    /// `p(T)ᵀδx(T) − p(0)ᵀδx(0)`
    pub boundary: f64,
}

impl DualityBalance {
    pub fn residual(&self) -> f64 {
        (self.adjoint_pairing - self.variational_pairing - self.boundary).abs()
    }
}

/// Cubic Hermite interpolant of the stored states, using `ẋ = f(x, u)` at the
/// grid points as slopes. Fourth-order accurate between samples.
fn hermite_state<'a>(
    sys: &GenericSystem,
    traj: &'a Trajectory,
) -> Result<impl Fn(f64) -> Vector + 'a> {
    let slopes = (0..traj.len())
        .map(|k| {
            let (xdot, _) = sys
                .rhs(traj.x[k].as_slice(), traj.u[k].as_slice())
                .map_err(|e| e.at_time(traj.grid.time(k)))?;
            Ok(xdot)
        })
        .collect::<Result<Vec<_>>>()?;
    let h = traj.grid.step();
    Ok(move |t: f64| {
        let (k, s) = traj.grid.locate(t);
        let (s2, s3) = (s * s, s * s * s);
        &traj.x[k] * (2.0 * s3 - 3.0 * s2 + 1.0)
            + &slopes[k] * (h * (s3 - 2.0 * s2 + s))
            + &traj.x[k + 1] * (3.0 * s2 - 2.0 * s3)
            + &slopes[k + 1] * (h * (s3 - s2))
    })
}

/// Adjoint vector field along the trajectory: `t, p ↦ (ṗ, y_a)` with exact
/// Jacobians at the Hermite-interpolated state.
fn adjoint_field<'a>(
    sys: &'a GenericSystem,
    traj: &'a Trajectory,
    u_a: &'a dyn Signal,
) -> Result<impl Fn(f64, &Vector) -> Result<(Vector, Vector)> + 'a> {
    let x_of = hermite_state(sys, traj)?;
    let u = traj.input();
    Ok(move |t: f64, p: &Vector| {
        let x = x_of(t);
        let j = sys.jacobians(x.as_slice(), u.at(t).as_slice())?;
        let ua = u_a.value_at(t);
        let pdot = -(j.fx.transpose() * p) - j.hx.transpose() * &ua;
        let ya = j.fu.transpose() * p + j.hu.transpose() * &ua;
        Ok((pdot, ya))
    })
}

/// Integrates the adjoint variational system backward from `p(T) = 0` under
/// input `u_a`; returns `(p, y_a)` samples. Stage Jacobians are evaluated
/// along a Hermite interpolant of the stored states, which keeps the sweep
/// fourth-order accurate.
pub fn integrate_adjoint(
    sys: &GenericSystem,
    traj: &Trajectory,
    u_a: &dyn Signal,
) -> Result<(Vec<Vector>, Vec<Vector>)> {
    let field = adjoint_field(sys, traj, u_a)?;
    let ps = ode::rk4_backward(traj.grid, Vector::zeros(sys.state_dim()), |t, p| {
        Ok(field(t, p)?.0)
    })?;
    let ya = ps
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let t = traj.grid.time(k);
            Ok(field(t, p).map_err(|e| e.at_time(t))?.1)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ps, ya))
}

/// The variational system is integrated forward together with `Σ` itself;
/// the adjoint is integrated backward along a Hermite interpolant of the
/// stored states. Both passes use exact Jacobians at every RK4 stage and
/// carry their pairing integral as an extra state, so the residual is
/// integration error of order four.
pub fn duality_balance(
    sys: &GenericSystem,
    traj: &Trajectory,
    delta_u: &dyn Signal,
    u_a: &dyn Signal,
) -> Result<DualityBalance> {
    let n = sys.state_dim();
    let grid = traj.grid;
    let u = traj.input();

    let mut z0 = Vector::zeros(2 * n + 1);
    z0.rows_mut(0, n).copy_from(&traj.x[0]);
    let fwd = ode::rk4(grid, z0, |t, z| {
        let x = z.rows(0, n).into_owned();
        let dx = z.rows(n, n).into_owned();
        let ut = u.at(t);
        let (xdot, _) = sys.rhs(x.as_slice(), ut.as_slice())?;
        let j = sys.jacobians(x.as_slice(), ut.as_slice())?;
        let du = delta_u.value_at(t);
        let dy = &j.hx * &dx + &j.hu * &du;
        let mut out = Vector::zeros(2 * n + 1);
        out.rows_mut(0, n).copy_from(&xdot);
        out.rows_mut(n, n).copy_from(&(&j.fx * &dx + &j.fu * &du));
        out[2 * n] = u_a.value_at(t).dot(&dy);
        Ok(out)
    })?;
    let field = adjoint_field(sys, traj, u_a)?;
    let bwd = ode::rk4_backward(grid, Vector::zeros(n + 1), |t, z| {
        let p = z.rows(0, n).into_owned();
        let (pdot, ya) = field(t, &p)?;
        let mut out = Vector::zeros(n + 1);
        out.rows_mut(0, n).copy_from(&pdot);
        out[n] = ya.dot(&delta_u.value_at(t));
        Ok(out)
    })?;

    let end = grid.steps;
    let dx = |k: usize| fwd[k].rows(n, n).into_owned();
    let p = |k: usize| bwd[k].rows(0, n).into_owned();
    Ok(DualityBalance {
        // the backward pass accumulates −∫ from T down to 0
        adjoint_pairing: -bwd[0][n],
        variational_pairing: fwd[end][2 * n],
        boundary: p(end).dot(&dx(end)) - p(0).dot(&dx(0)),
    })
}

/// `|∫₀ᵀ y_aᵀδu dt − ∫₀ᵀ u_aᵀδy dt − pᵀδx|₀ᵀ|`.
pub fn duality_residual(
    sys: &GenericSystem,
    traj: &Trajectory,
    delta_u: &dyn Signal,
    u_a: &dyn Signal,
) -> Result<f64> {
    Ok(duality_balance(sys, traj, delta_u, u_a)?.residual())
}

/// Trajectory with only `x` and `u` filled in, from a forward simulation of `Σ`.
pub fn state_trajectory(
    sys: &GenericSystem,
    x0: &Vector,
    input: &GridSignal,
) -> Result<Trajectory> {
    let (x, y) = ode::simulate(sys, x0, input)?;
    let n = sys.state_dim();
    Ok(Trajectory {
        grid: input.grid,
        p: vec![Vector::zeros(n); x.len()],
        yplus: vec![Vector::zeros(sys.input_dim()); x.len()],
        x,
        u: input.values.clone(),
        y,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::model::LinearSystem;

    fn m1(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn rc(cap: f64, r: f64) -> GenericSystem {
        LinearSystem::new(m1(0.0), m1(1.0), m1(1.0 / cap), m1(r))
            .unwrap()
            .to_generic()
            .unwrap()
    }

    fn traj_for(sys: &GenericSystem, x0: f64, steps: usize) -> Trajectory {
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let u = GridSignal::sample(grid, |t| {
            Vector::from_element(sys.input_dim(), (3.0 * t).sin())
        });
        state_trajectory(sys, &Vector::from_element(sys.state_dim(), x0), &u).unwrap()
    }

    #[test]
    fn rc_variational_is_system_itself() {
        let sys = rc(2.0, 0.5);
        let ltv = variational_along(&sys, &traj_for(&sys, 0.3, 20)).unwrap();
        assert!(ltv.is_constant());
        assert_eq!(ltv.a[0][(0, 0)], 0.0);
        assert_eq!(ltv.b[0][(0, 0)], 1.0);
        assert_eq!(ltv.c[0][(0, 0)], 0.5);
        assert_eq!(ltv.d[0][(0, 0)], 0.5);
    }

    #[test]
    fn rc_adjoint_matches_hand_derivation() {
        let (cap, r) = (2.0, 0.5);
        let sys = rc(cap, r);
        let adj = adjoint_along(&sys, &traj_for(&sys, 0.0, 10)).unwrap();
        // ṗ = −u_a / C, y_a = p + R u_a
        assert_eq!(adj.a[3][(0, 0)], 0.0);
        assert_eq!(adj.b[3][(0, 0)], -1.0 / cap);
        assert_eq!(adj.c[3][(0, 0)], 1.0);
        assert_eq!(adj.d[3][(0, 0)], r);
    }

    #[test]
    fn nonlinear_capacitor_output_jacobian_along_ramp() {
        let sys = GenericSystem::parse(&["u0"], &["x0^3 + u0"], &BTreeMap::new()).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let u = GridSignal::sample(grid, |_| Vector::from_element(1, 1.0));
        let traj = state_trajectory(&sys, &Vector::zeros(1), &u).unwrap();
        let ltv = variational_along(&sys, &traj).unwrap();
        for k in 0..grid.len() {
            let t = grid.time(k);
            assert!((ltv.c[k][(0, 0)] - 3.0 * t * t).abs() < 1e-12);
        }
    }

    #[test]
    fn static_adjoint_has_no_state() {
        let sys = GenericSystem::parse(&[], &["u0^3"], &BTreeMap::new()).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let u = GridSignal::sample(grid, |_| Vector::from_element(1, 2.0));
        let traj = state_trajectory(&sys, &Vector::zeros(0), &u).unwrap();
        let adj = adjoint_along(&sys, &traj).unwrap();
        assert_eq!(adj.state_dim(), 0);
        assert_eq!(adj.d[0][(0, 0)], 12.0);
    }

    #[test]
    fn zero_variation_gives_exactly_zero_residual() {
        let sys = GenericSystem::parse(&["u0 - x0"], &["x0^3 + u0"], &BTreeMap::new()).unwrap();
        let traj = traj_for(&sys, 0.2, 50);
        let zero = FnSignal(|_| Vector::zeros(1));
        let ua = FnSignal(|t: f64| Vector::from_element(1, t.cos()));
        assert_eq!(duality_residual(&sys, &traj, &zero, &ua).unwrap(), 0.0);
    }

    #[test]
    fn linear_adjoint_involution() {
        let sys = LinearSystem::new(
            Mat::from_row_slice(2, 2, &[0.1, -0.4, 0.3, -0.2]),
            Mat::from_row_slice(2, 1, &[1.0, 0.5]),
            Mat::from_row_slice(1, 2, &[0.7, -1.2]),
            m1(0.25),
        )
        .unwrap();
        // twice adjoint is the original up to the state sign change x -> -x
        let twice = sys.adjoint().adjoint();
        assert_eq!(twice.a, sys.a);
        assert_eq!(twice.b, -&sys.b);
        assert_eq!(twice.c, -&sys.c);
        assert_eq!(twice.d, sys.d);
        let g = sys.to_generic().unwrap();
        let ltv = variational_along(&g, &traj_for(&g, 0.1, 8)).unwrap();
        let ltv2 = ltv.adjoint().adjoint();
        assert_eq!(ltv2.a, ltv.a);
        assert!(ltv2.b.iter().zip(&ltv.b).all(|(x, y)| *x == -y));
        assert_eq!(ltv.a[5], sys.a);
        assert_eq!(ltv.c[2], sys.c);
    }
}
