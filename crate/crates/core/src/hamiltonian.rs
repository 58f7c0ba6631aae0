//! The Hamiltonian input-output system generated by
//! `H⁺(x,p,u) = pᵀf(x,u) + uᵀh(x,u)`:
//!
//! ```text
//! ẋ  =  ∂H⁺/∂p = f(x,u)
//! ṗ  = −∂H⁺/∂x = −(∂fᵀ/∂x)p − (∂hᵀ/∂x)u
//! y⁺ =  ∂H⁺/∂u = (∂fᵀ/∂u)p + h(x,u) + (∂hᵀ/∂u)u
//! ```
//!
//! and its inverse, obtained by solving `y⁺ = ∂H⁺/∂u(x,p,u)` for `u`
//! whenever `∂²H⁺/∂u∂uᵀ` is nonsingular. The inverse is realized implicitly:
//! `u*` comes from Newton's method and the vector field is that of `Σ⁺`
//! evaluated at `u*`.

use crate::error::{Error, Result};
use crate::expr::Var;
use crate::linalg::{self, Mat, Vector, MAX_CONDITION};
use crate::model::{GenericSystem, LinearSystem};
use crate::ode;
use crate::signal::GridSignal;

/// Newton settings for input inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionSettings {
    /// Bound on `‖∂H⁺/∂u − y⁺‖∞`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for InversionSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 50,
        }
    }
}

/// Outcome of a successful inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub u: Vector,
    pub residual: f64,
    pub iterations: usize,
}

/// Right-hand side of `Σ⁺` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPlusRhs {
    pub xdot: Vector,
    pub pdot: Vector,
    pub yplus: Vector,
}

#[derive(Debug, Clone, PartialEq)]
struct LinearCache {
    sys: LinearSystem,
    /// `(D + Dᵀ)⁻¹`, absent when singular.
    sym_inv: Option<Mat>,
    sym: Mat,
}

/// `Σ⁺` built over a [`GenericSystem`].
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSystem {
    base: GenericSystem,
    linear: Option<LinearCache>,
    settings: InversionSettings,
}

impl HamiltonianSystem {
    pub fn new(base: GenericSystem) -> Self {
        let linear = base.linear().map(|sys| {
            let sym = &sys.d + sys.d.transpose();
            let sym_inv = if linalg::condition_number(&sym) < MAX_CONDITION {
                sym.clone().try_inverse()
            } else {
                None
            };
            LinearCache {
                sys: sys.clone(),
                sym_inv,
                sym,
            }
        });
        Self {
            base,
            linear,
            settings: InversionSettings::default(),
        }
    }

    pub fn with_settings(mut self, settings: InversionSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn settings(&self) -> InversionSettings {
        self.settings
    }

    pub fn base(&self) -> &GenericSystem {
        &self.base
    }

    pub fn state_dim(&self) -> usize {
        self.base.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.base.input_dim()
    }

    fn check(&self, x: &[f64], p: &[f64], u: &[f64]) -> Result<()> {
        let (n, m) = (self.state_dim(), self.input_dim());
        if x.len() != n || p.len() != n || u.len() != m {
            return Err(Error::Dimension(format!(
                "(|x|, |p|, |u|) = ({}, {}, {}), expected ({n}, {n}, {m})",
                x.len(),
                p.len(),
                u.len()
            )));
        }
        Ok(())
    }

    /// `pᵀf(x,u) + uᵀh(x,u)`.
    pub fn hplus(&self, x: &[f64], p: &[f64], u: &[f64]) -> Result<f64> {
        self.check(x, p, u)?;
        let (f, h) = self.base.rhs(x, u)?;
        let pv = Vector::from_column_slice(p);
        let uv = Vector::from_column_slice(u);
        Ok(pv.dot(&f) + uv.dot(&h))
    }

    /// `∂H⁺/∂u` and `∂²H⁺/∂u∂uᵀ` at `(x, p, u)`.
    pub fn input_derivatives(&self, x: &[f64], p: &[f64], u: &[f64]) -> Result<(Vector, Mat)> {
        self.check(x, p, u)?;
        if let Some(lin) = &self.linear {
            let s = &lin.sys;
            let xv = Vector::from_column_slice(x);
            let pv = Vector::from_column_slice(p);
            let uv = Vector::from_column_slice(u);
            let yplus = &s.c * xv + &lin.sym * uv + s.b.transpose() * pv;
            return Ok((yplus, lin.sym.clone()));
        }
        let m = self.input_dim();
        let active: Vec<Var> = (0..m).map(Var::U).collect();
        let mut grad = Vector::zeros(m);
        let mut hess = Mat::zeros(m, m);
        for (i, fi) in self.base.f().iter().enumerate() {
            let d = fi.eval_d2(x, u, &active)?;
            grad += d.grad * p[i];
            hess += d.hess * p[i];
        }
        let hd = self
            .base
            .h()
            .iter()
            .map(|hj| hj.eval_d2(x, u, &active))
            .collect::<Result<Vec<_>, _>>()?;
        for (j, d) in hd.iter().enumerate() {
            grad[j] += d.value;
            grad += &d.grad * u[j];
            hess += &d.hess * u[j];
        }
        for k in 0..m {
            for l in k..m {
                let v = hess[(k, l)] + (hd[k].grad[l] + hd[l].grad[k]);
                hess[(k, l)] = v;
                hess[(l, k)] = v;
            }
        }
        Ok((grad, hess))
    }

    /// `∂²H⁺/∂u∂uᵀ`; symmetric by construction.
    pub fn partial_hessian(&self, x: &[f64], p: &[f64], u: &[f64]) -> Result<Mat> {
        Ok(self.input_derivatives(x, p, u)?.1)
    }

    /// `−∂H⁺/∂x = −(∂fᵀ/∂x)p − (∂hᵀ/∂x)u`.
    pub fn costate_rate(&self, x: &[f64], p: &[f64], u: &[f64]) -> Result<Vector> {
        self.check(x, p, u)?;
        let pv = Vector::from_column_slice(p);
        let uv = Vector::from_column_slice(u);
        if let Some(lin) = &self.linear {
            return Ok(-(lin.sys.a.transpose() * pv) - lin.sys.c.transpose() * uv);
        }
        let j = self.base.jacobians(x, u)?;
        Ok(-(j.fx.transpose() * pv) - j.hx.transpose() * uv)
    }

    pub fn sigma_plus_rhs(&self, x: &[f64], p: &[f64], u: &[f64]) -> Result<SigmaPlusRhs> {
        self.check(x, p, u)?;
        let (xdot, _) = self.base.rhs(x, u)?;
        let pdot = self.costate_rate(x, p, u)?;
        let (yplus, _) = self.input_derivatives(x, p, u)?;
        Ok(SigmaPlusRhs { xdot, pdot, yplus })
    }

    /// Solves `∂H⁺/∂u(x, p, u) = target` for `u`, starting from `guess`.
    pub fn invert_input(
        &self,
        x: &[f64],
        p: &[f64],
        target: &Vector,
        guess: &Vector,
    ) -> Result<Inversion> {
        self.check(x, p, guess.as_slice())?;
        if target.len() != self.input_dim() {
            return Err(Error::Dimension("target y⁺ has wrong length".into()));
        }
        if let Some(lin) = &self.linear {
            let inv = lin.sym_inv.as_ref().ok_or(Error::SingularHessian {
                condition: linalg::condition_number(&lin.sym),
                t: None,
            })?;
            let s = &lin.sys;
            let xv = Vector::from_column_slice(x);
            let pv = Vector::from_column_slice(p);
            let u = inv * (target - &s.c * xv - s.b.transpose() * pv);
            let (g, _) = self.input_derivatives(x, p, u.as_slice())?;
            let residual = linalg::inf_norm(&(g - target));
            return Ok(Inversion {
                u,
                residual,
                iterations: 0,
            });
        }
        self.newton(x, p, target, guess.clone())
    }

    fn newton(&self, x: &[f64], p: &[f64], target: &Vector, mut u: Vector) -> Result<Inversion> {
        let InversionSettings {
            tolerance,
            max_iterations,
        } = self.settings;
        let residual_at = |u: &Vector| -> Result<(Vector, Mat)> {
            let (g, hess) = self.input_derivatives(x, p, u.as_slice())?;
            Ok((g - target, hess))
        };
        let (mut r, mut hess) = residual_at(&u)?;
        let mut norm = linalg::inf_norm(&r);
        let mut polished = false;
        for iter in 0..=max_iterations {
            if norm <= tolerance && (polished || iter == max_iterations) {
                return Ok(Inversion {
                    u,
                    residual: norm,
                    iterations: iter,
                });
            }
            if iter == max_iterations {
                break;
            }
            let cond = linalg::condition_number(&hess);
            if !(cond < MAX_CONDITION) {
                return Err(Error::SingularHessian {
                    condition: cond,
                    t: None,
                });
            }
            let step = linalg::solve(&hess, &(-&r)).ok_or(Error::SingularHessian {
                condition: cond,
                t: None,
            })?;
            if norm <= tolerance {
                // one extra full step drives the residual to rounding level
                polished = true;
                let cand = &u + &step;
                let (rc, hc) = residual_at(&cand)?;
                let nc = linalg::inf_norm(&rc);
                if nc <= norm {
                    u = cand;
                    r = rc;
                    hess = hc;
                    norm = nc;
                }
                continue;
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let cand = &u + &step * alpha;
                if let Ok((rc, hc)) = residual_at(&cand) {
                    let nc = linalg::inf_norm(&rc);
                    if nc < norm {
                        u = cand;
                        r = rc;
                        hess = hc;
                        norm = nc;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(Error::NoConvergence {
                    residual: norm,
                    iterations: iter,
                    t: None,
                });
            }
        }
        Err(Error::NoConvergence {
            residual: norm,
            iterations: max_iterations,
            t: None,
        })
    }

    /// `H×(x,p,y⁺) = H⁺(x,p,u*) − u*ᵀy⁺` with `u*` from [`Self::invert_input`].
    pub fn htimes(&self, x: &[f64], p: &[f64], yplus: &Vector, guess: &Vector) -> Result<f64> {
        let inv = self.invert_input(x, p, yplus, guess)?;
        Ok(self.hplus(x, p, inv.u.as_slice())? - inv.u.dot(yplus))
    }

    /// Vector field of the inverse system: `(ẋ, ṗ, u*)` for input `y⁺`.
    pub fn sigma_times_rhs(
        &self,
        x: &[f64],
        p: &[f64],
        yplus: &Vector,
        guess: &Vector,
    ) -> Result<(Vector, Vector, Inversion)> {
        let inv = self.invert_input(x, p, yplus, guess)?;
        let (xdot, _) = self.base.rhs(x, inv.u.as_slice())?;
        let pdot = self.costate_rate(x, p, inv.u.as_slice())?;
        Ok((xdot, pdot, inv))
    }
}

/// Grid samples of an initial-value simulation of `Σ⁺` or `Σ×`.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianRun {
    pub x: Vec<Vector>,
    pub p: Vec<Vector>,
    /// `y⁺` for `Σ⁺`, the recovered `u` for `Σ×`.
    pub output: GridSignal,
}

fn stack(x: &Vector, p: &Vector) -> Vector {
    Vector::from_iterator(x.len() + p.len(), x.iter().chain(p.iter()).copied())
}

fn unstack(z: &Vector, n: usize) -> (Vector, Vector) {
    (z.rows(0, n).into_owned(), z.rows(n, n).into_owned())
}

impl HamiltonianSystem {
    fn check_start(&self, x0: &Vector, p0: &Vector, input: &GridSignal) -> Result<()> {
        let (n, m) = (self.state_dim(), self.input_dim());
        if x0.len() != n || p0.len() != n || input.dim() != m {
            return Err(Error::Dimension(format!(
                "(|x0|, |p0|, channels) = ({}, {}, {}), expected ({n}, {n}, {m})",
                x0.len(),
                p0.len(),
                input.dim()
            )));
        }
        Ok(())
    }

    /// Simulates `Σ⁺` from `(x0, p0)` under `u`, linearly interpolated between samples.
    pub fn simulate_plus(
        &self,
        x0: &Vector,
        p0: &Vector,
        u: &GridSignal,
    ) -> Result<HamiltonianRun> {
        self.check_start(x0, p0, u)?;
        let n = self.state_dim();
        let zs = ode::rk4(u.grid, stack(x0, p0), |t, z| {
            let (x, p) = unstack(z, n);
            let r = self.sigma_plus_rhs(x.as_slice(), p.as_slice(), u.at(t).as_slice())?;
            Ok(stack(&r.xdot, &r.pdot))
        })?;
        let mut run = HamiltonianRun {
            x: Vec::with_capacity(zs.len()),
            p: Vec::with_capacity(zs.len()),
            output: u.clone(),
        };
        for (k, z) in zs.iter().enumerate() {
            let (x, p) = unstack(z, n);
            let (yplus, _) = self
                .input_derivatives(x.as_slice(), p.as_slice(), u.values[k].as_slice())
                .map_err(|e| e.at_time(u.grid.time(k)))?;
            run.output.values[k] = yplus;
            run.x.push(x);
            run.p.push(p);
        }
        Ok(run)
    }

    /// Simulates `Σ×` from `(x0, p0)` under `y⁺`, linearly interpolated between
    /// samples, and reports the input `u*` recovered at each grid point.
    pub fn simulate_times(
        &self,
        x0: &Vector,
        p0: &Vector,
        yplus: &GridSignal,
    ) -> Result<HamiltonianRun> {
        self.check_start(x0, p0, yplus)?;
        let n = self.state_dim();
        let mut guess = Vector::zeros(self.input_dim());
        let zs = ode::rk4(yplus.grid, stack(x0, p0), |t, z| {
            let (x, p) = unstack(z, n);
            let (xdot, pdot, inv) =
                self.sigma_times_rhs(x.as_slice(), p.as_slice(), &yplus.at(t), &guess)?;
            guess = inv.u;
            Ok(stack(&xdot, &pdot))
        })?;
        let mut run = HamiltonianRun {
            x: Vec::with_capacity(zs.len()),
            p: Vec::with_capacity(zs.len()),
            output: yplus.clone(),
        };
        for (k, z) in zs.iter().enumerate() {
            let (x, p) = unstack(z, n);
            let inv = self
                .invert_input(x.as_slice(), p.as_slice(), &yplus.values[k], &guess)
                .map_err(|e| e.at_time(yplus.grid.time(k)))?;
            guess = inv.u.clone();
            run.output.values[k] = inv.u;
            run.x.push(x);
            run.p.push(p);
        }
        Ok(run)
    }
}

/// State-space realization of `Σ⁺` for a linear `Σ`: state `(x, p)`,
/// `A⁺ = diag(A, −Aᵀ)`, `B⁺ = [B; −Cᵀ]`, `C⁺ = [C, Bᵀ]`, `D⁺ = D + Dᵀ`.
pub fn sigma_plus_linear(sys: &LinearSystem) -> LinearSystem {
    let n = sys.state_dim();
    let m = sys.input_dim();
    let mut a = Mat::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    a.view_mut((n, n), (n, n)).copy_from(&(-sys.a.transpose()));
    let mut b = Mat::zeros(2 * n, m);
    b.view_mut((0, 0), (n, m)).copy_from(&sys.b);
    b.view_mut((n, 0), (n, m)).copy_from(&(-sys.c.transpose()));
    let mut c = Mat::zeros(m, 2 * n);
    c.view_mut((0, 0), (m, n)).copy_from(&sys.c);
    c.view_mut((0, n), (m, n)).copy_from(&sys.b.transpose());
    LinearSystem {
        a,
        b,
        c,
        d: &sys.d + sys.d.transpose(),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn m1(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn rc_generic(linear_path: bool) -> GenericSystem {
        if linear_path {
            LinearSystem::new(m1(0.0), m1(1.0), m1(1.0), m1(1.0))
                .unwrap()
                .to_generic()
                .unwrap()
        } else {
            GenericSystem::parse(&["u0"], &["x0 + u0"], &BTreeMap::new())
                .unwrap()
                .without_linear_realization()
        }
    }

    fn v1(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    #[test]
    fn rc_hamiltonian_value() {
        for lin in [true, false] {
            let hs = HamiltonianSystem::new(rc_generic(lin));
            assert_eq!(hs.hplus(&[1.0], &[1.0], &[1.0]).unwrap(), 3.0);
        }
    }

    #[test]
    fn rc_sigma_plus_rhs() {
        for lin in [true, false] {
            let hs = HamiltonianSystem::new(rc_generic(lin));
            let r = hs.sigma_plus_rhs(&[0.0], &[0.0], &[1.0]).unwrap();
            assert_eq!((r.xdot[0], r.pdot[0], r.yplus[0]), (1.0, -1.0, 2.0));
        }
    }

    #[test]
    fn zero_costate_and_input() {
        let sys =
            GenericSystem::parse(&["-x0 + sin(u0)"], &["x0^3 + u0"], &BTreeMap::new()).unwrap();
        let hs = HamiltonianSystem::new(sys);
        let r = hs.sigma_plus_rhs(&[0.7], &[0.0], &[0.0]).unwrap();
        assert_eq!(r.pdot[0], 0.0);
        assert!((r.yplus[0] - 0.7f64.powi(3)).abs() < 1e-15);
        assert_eq!(hs.hplus(&[0.7], &[0.5], &[0.0]).unwrap(), 0.5 * -0.7);
    }

    #[test]
    fn partial_hessian_examples() {
        let hs = HamiltonianSystem::new(rc_generic(false));
        assert_eq!(
            hs.partial_hessian(&[0.3], &[0.2], &[0.1]).unwrap()[(0, 0)],
            2.0
        );
        let cubic = GenericSystem::parse(&[], &["u0^3"], &BTreeMap::new()).unwrap();
        let hs = HamiltonianSystem::new(cubic);
        assert_eq!(hs.partial_hessian(&[], &[], &[1.0]).unwrap()[(0, 0)], 12.0);
    }

    #[test]
    fn rc_inversion_and_legendre_value() {
        for lin in [true, false] {
            let hs = HamiltonianSystem::new(rc_generic(lin));
            let inv = hs.invert_input(&[0.0], &[0.0], &v1(1.0), &v1(0.0)).unwrap();
            assert!((inv.u[0] - 0.5).abs() < 1e-14);
            let ht = hs.htimes(&[0.0], &[0.0], &v1(1.0), &v1(0.0)).unwrap();
            assert!((ht + 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_hessian_is_reported() {
        let constant_out = GenericSystem::parse(&[], &["1"], &BTreeMap::new()).unwrap();
        let hs = HamiltonianSystem::new(constant_out);
        assert!(matches!(
            hs.invert_input(&[], &[], &v1(1.0), &v1(0.0)),
            Err(Error::SingularHessian { .. })
        ));
        let no_feedthrough = LinearSystem::new(m1(0.0), m1(1.0), m1(1.0), m1(0.0))
            .unwrap()
            .to_generic()
            .unwrap();
        let hs = HamiltonianSystem::new(no_feedthrough);
        assert!(matches!(
            hs.invert_input(&[0.0], &[0.0], &v1(1.0), &v1(0.0)),
            Err(Error::SingularHessian { .. })
        ));
    }

    #[test]
    fn linear_closed_form_inverse() {
        let sys = LinearSystem::new(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.3]),
            Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 1.0]),
            Mat::from_row_slice(2, 2, &[0.2, 0.0, 0.1, 1.0]),
            Mat::from_row_slice(2, 2, &[1.0, 0.3, -0.1, 2.0]),
        )
        .unwrap();
        let hs = HamiltonianSystem::new(sys.to_generic().unwrap());
        let (x, p) = ([0.3, -0.2], [0.5, 0.1]);
        let target = Vector::from_column_slice(&[0.7, -0.4]);
        let inv = hs.invert_input(&x, &p, &target, &Vector::zeros(2)).unwrap();
        let sym = &sys.d + sys.d.transpose();
        let expected = sym.try_inverse().unwrap()
            * (&target
                - &sys.c * Vector::from_column_slice(&x)
                - sys.b.transpose() * Vector::from_column_slice(&p));
        assert!((inv.u - expected).amax() < 1e-14);
        // generic Newton path agrees with the closed form
        let generic = HamiltonianSystem::new(
            GenericSystem::new(
                sys.to_generic().unwrap().f().to_vec(),
                sys.to_generic().unwrap().h().to_vec(),
            )
            .unwrap(),
        );
        let inv2 = generic
            .invert_input(&x, &p, &target, &Vector::zeros(2))
            .unwrap();
        let inv1 = hs.invert_input(&x, &p, &target, &Vector::zeros(2)).unwrap();
        assert!((inv2.u - inv1.u).amax() < 1e-13);
    }

    #[test]
    fn sigma_plus_realization_matches_rhs() {
        let sys = LinearSystem::new(m1(-0.5), m1(2.0), m1(0.3), m1(1.5)).unwrap();
        let plus = sigma_plus_linear(&sys);
        let hs = HamiltonianSystem::new(sys.to_generic().unwrap());
        let (x, p, u) = (0.4, -0.7, 1.1);
        let r = hs.sigma_plus_rhs(&[x], &[p], &[u]).unwrap();
        let z = Vector::from_column_slice(&[x, p]);
        let zdot = &plus.a * &z + &plus.b * v1(u);
        let y = &plus.c * &z + &plus.d * v1(u);
        assert!((zdot[0] - r.xdot[0]).abs() < 1e-15);
        assert!((zdot[1] - r.pdot[0]).abs() < 1e-15);
        assert!((y[0] - r.yplus[0]).abs() < 1e-15);
    }

    #[test]
    fn plus_then_times_recovers_input() {
        let cap = GenericSystem::parse(&["u0"], &["x0^3 + u0"], &BTreeMap::new()).unwrap();
        let hs = HamiltonianSystem::new(cap);
        let grid = crate::signal::TimeGrid::new(1.0, 400).unwrap();
        let u = GridSignal::sample(grid, |t| v1(0.4 + 0.3 * (5.0 * t).sin()));
        let (x0, p0) = (v1(0.1), v1(-0.2));
        let plus = hs.simulate_plus(&x0, &p0, &u).unwrap();
        let back = hs.simulate_times(&x0, &p0, &plus.output).unwrap();
        let err = back.output.zip_with(&u, |a, b| a - b).linf_norm();
        assert!(err < 1e-5, "{err}");
        assert!((back.x[400][0] - plus.x[400][0]).abs() < 1e-5);
    }
}
