//! The power functional `P(u) = ∫₀ᵀ (y − y_S)ᵀu dt`, its gradient, an
//! independent descent minimizer and the optimality certificates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::sigma_plus_linear;
use crate::linalg::{self, Mat, Vector};
use crate::model::{GenericSystem, LinearSystem};
use crate::ode;
use crate::signal::{GridSignal, SourceSignal};
use crate::variational::{integrate_adjoint, state_trajectory};

fn check_input(sys: &GenericSystem, x0: &Vector, u: &GridSignal) -> Result<()> {
    if u.dim() != sys.input_dim() || x0.len() != sys.state_dim() {
        return Err(Error::Dimension(format!(
            "input has {} channels and x0 has {} entries; system is {}×{}",
            u.dim(),
            x0.len(),
            sys.state_dim(),
            sys.input_dim()
        )));
    }
    Ok(())
}

/// Simulates `Σ` under `u` and integrates `(y − y_S)ᵀu` by the trapezoidal rule.
pub fn power_functional(
    sys: &GenericSystem,
    source: &SourceSignal,
    x0: &Vector,
    u: &GridSignal,
) -> Result<f64> {
    check_input(sys, x0, u)?;
    let (_, ys) = ode::simulate(sys, x0, u)?;
    let integrand: Vec<f64> = ys
        .iter()
        .zip(&u.values)
        .enumerate()
        .map(|(k, (y, uk))| (y - source.eval(u.grid.time(k))).dot(uk))
        .collect();
    Ok(u.grid.trapezoid(&integrand))
}

/// `t ↦ y⁺(t) − y_S(t)` where `y⁺ = y + y_a` and `y_a` comes from the adjoint
/// variational system driven by `u_a = u` with `p(T) = 0`.
pub fn variational_derivative(
    sys: &GenericSystem,
    source: &SourceSignal,
    x0: &Vector,
    u: &GridSignal,
) -> Result<GridSignal> {
    check_input(sys, x0, u)?;
    let traj = state_trajectory(sys, x0, u)?;
    let (_, ya) = integrate_adjoint(sys, &traj, u)?;
    let values = (0..traj.len())
        .map(|k| &traj.y[k] + &ya[k] - source.eval(u.grid.time(k)))
        .collect();
    GridSignal::new(u.grid, values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    pub max_iterations: usize,
    /// Stop when `‖grad‖∞` falls below this.
    pub gradient_tolerance: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub initial_step: f64,
    pub max_halvings: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            armijo: 1e-4,
            initial_step: 1.0,
            max_halvings: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleStatus {
    Converged,
    /// The line search found no strict decrease in `P`; the iterate sits at
    /// the rounding floor of the discretized functional.
    Stalled,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub u: GridSignal,
    pub power: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub status: OracleStatus,
    /// `P` after every accepted step, starting with `P(0)`.
    pub history: Vec<f64>,
}

/// Gradient descent with Armijo backtracking on the grid values of `u`,
/// starting from `u = 0`.
pub fn oracle_minimize(
    sys: &GenericSystem,
    source: &SourceSignal,
    x0: &Vector,
    grid: crate::signal::TimeGrid,
    settings: OracleSettings,
) -> Result<OracleResult> {
    let mut u = GridSignal::zeros(grid, sys.input_dim());
    let mut power = power_functional(sys, source, x0, &u)?;
    let mut history = vec![power];
    let mut grad = variational_derivative(sys, source, x0, &u)?;
    let mut gnorm = grad.linf_norm();
    let mut iterations = 0;
    let status = loop {
        if gnorm <= settings.gradient_tolerance {
            break OracleStatus::Converged;
        }
        if iterations >= settings.max_iterations {
            break OracleStatus::BudgetExhausted;
        }
        let slope = grad.inner(&grad);
        let mut alpha = settings.initial_step;
        let mut next = None;
        for _ in 0..settings.max_halvings {
            let cand = u.zip_with(&grad, |a, g| a - g * alpha);
            let pc = power_functional(sys, source, x0, &cand)?;
            if pc <= power - settings.armijo * alpha * slope {
                next = Some((cand, pc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, pc)) = next.filter(|(_, pc)| *pc < power) else {
            break OracleStatus::Stalled;
        };
        u = cand;
        power = pc;
        history.push(power);
        grad = variational_derivative(sys, source, x0, &u)?;
        gnorm = grad.linf_norm();
        iterations += 1;
    };
    Ok(OracleResult {
        u,
        power,
        iterations,
        gradient_norm: gnorm,
        status,
        history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    PositiveReal,
    NotPositiveReal,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassivityCertificate {
    pub verdict: Verdict,
    /// Order of the controllable and observable part that was tested.
    pub minimal_order: usize,
    pub notes: Vec<String>,
}

/// Real parts at or below this magnitude count as imaginary-axis eigenvalues.
pub const IMAGINARY_AXIS_TOL: f64 = 1e-8;
const RANK_TOL: f64 = 1e-9;

/// Controllable and observable part of `(A, B, C)` via orthogonal projections.
pub fn minimal_realization(sys: &LinearSystem) -> LinearSystem {
    let n = sys.state_dim();
    let krylov = |a: &Mat, b: &Mat| {
        let mut blocks = Mat::zeros(a.nrows(), b.ncols() * a.nrows().max(1));
        let mut cur = b.clone();
        for k in 0..a.nrows() {
            blocks
                .view_mut((0, k * b.ncols()), (a.nrows(), b.ncols()))
                .copy_from(&cur);
            cur = a * cur;
        }
        blocks
    };
    if n == 0 {
        return sys.clone();
    }
    let scale = sys.a.norm().max(sys.b.norm()).max(sys.c.norm()).max(1.0);
    let vc = linalg::range_basis(&krylov(&sys.a, &sys.b), RANK_TOL, scale);
    let (a1, b1, c1) = (
        vc.transpose() * &sys.a * &vc,
        vc.transpose() * &sys.b,
        &sys.c * &vc,
    );
    let vo = linalg::range_basis(&krylov(&a1.transpose(), &c1.transpose()), RANK_TOL, scale);
    LinearSystem {
        a: vo.transpose() * &a1 * &vo,
        b: vo.transpose() * &b1,
        c: &c1 * &vo,
        d: sys.d.clone(),
    }
}

/// Positive-real test of a linear realization of `Σ⁺`.
///
/// The feedthrough must have a nonsingular symmetric part. The remaining
/// checks run on the minimal realization: no poles on the imaginary axis,
/// and no imaginary-axis eigenvalues of the Hamiltonian test matrix
/// `A − B D⁻¹ C`. For a `Σ⁺` realization that matrix has the block form
/// `[[A − BS⁻¹C, −BS⁻¹Bᵀ], [CᵀS⁻¹C, −(A − BS⁻¹C)ᵀ]]` with `S = D + Dᵀ` of `Σ`,
/// and its imaginary eigenvalues `jω` are where `Σ⁺(jω)` becomes singular.
pub fn linear_passivity_test(sigma_plus: &LinearSystem) -> Result<PassivityCertificate> {
    let mut notes = Vec::new();
    let d = &sigma_plus.d;
    let sym = d + d.transpose();
    let cond = linalg::condition_number(&sym);
    if !(cond < linalg::MAX_CONDITION) {
        notes.push(format!(
            "symmetric part of the feedthrough is singular (condition {cond:.3e})"
        ));
        return Ok(PassivityCertificate {
            verdict: Verdict::NotApplicable,
            minimal_order: sigma_plus.state_dim(),
            notes,
        });
    }
    let min = minimal_realization(sigma_plus);
    let order = min.state_dim();
    if order < sigma_plus.state_dim() {
        notes.push(format!(
            "{} uncontrollable or unobservable modes removed before testing",
            sigma_plus.state_dim() - order
        ));
    }
    let (verdict, note) = passivity_verdict(&min, &sym, &mut notes)?;
    notes.extend(note);
    Ok(PassivityCertificate {
        verdict,
        minimal_order: order,
        notes,
    })
}

fn passivity_verdict(
    min: &LinearSystem,
    sym: &Mat,
    notes: &mut Vec<String>,
) -> Result<(Verdict, Option<String>)> {
    let order = min.state_dim();
    let lowest = linalg::min_eigenvalue(sym);
    if lowest <= 0.0 {
        return Ok((
            Verdict::NotPositiveReal,
            Some(format!(
                "feedthrough is not positive definite (eigenvalue {lowest:.3e})"
            )),
        ));
    }
    let poles = linalg::eigenvalues(&min.a)?;
    if let Some(p) = poles.iter().find(|p| p.0.abs() <= IMAGINARY_AXIS_TOL) {
        return Ok((
            Verdict::NotPositiveReal,
            Some(format!(
                "pole on the imaginary axis at {:.3e}{:+.3e}i",
                p.0, p.1
            )),
        ));
    }
    let stable = poles.iter().filter(|p| p.0 < 0.0).count();
    if 2 * stable != order {
        notes.push(format!(
            "{stable} of {order} poles are stable; the spectrum is not mirror-symmetric"
        ));
    }
    if order == 0 {
        return Ok((
            Verdict::PositiveReal,
            Some("transfer function is a constant".into()),
        ));
    }
    let d_inv = linalg::checked_inverse(&min.d, "Σ⁺ feedthrough")?;
    let test = &min.a - &min.b * d_inv * &min.c;
    let zeros = linalg::eigenvalues(&test)?;
    Ok(
        match zeros.iter().find(|z| z.0.abs() <= IMAGINARY_AXIS_TOL) {
            Some(z) => (
                Verdict::NotPositiveReal,
                Some(format!("test matrix has imaginary eigenvalue {:.3e}i", z.1)),
            ),
            None => (Verdict::PositiveReal, None),
        },
    )
}

/// Certificate for a linear `Σ`, tested through its `Σ⁺` realization.
pub fn passivity_of(sys: &LinearSystem) -> Result<PassivityCertificate> {
    linear_passivity_test(&sigma_plus_linear(sys))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PassivityStatus {
    Certified(PassivityCertificate),
    /// Nonlinear systems: minimality rests on the perturbation test alone.
    EmpiricalOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalityReport {
    /// `‖y⁺ − y_S‖∞` from the adjoint gradient at `û`.
    pub first_order_residual: f64,
    /// `min_trials P(û + δu) − P(û)`.
    pub perturbation_margin: f64,
    pub worst_trial: usize,
    pub passivity_certificate: PassivityStatus,
    pub trials: usize,
}

/// Smooth random perturbation: per channel a sum of at most five sinusoids,
/// rescaled to `‖δu‖∞ = magnitude · s` with `s ~ U(0.1, 1)`. Trial 0 is zero.
pub fn perturbation(
    grid: crate::signal::TimeGrid,
    m: usize,
    magnitude: f64,
    seed: u64,
    trial: u64,
) -> GridSignal {
    if trial == 0 {
        return GridSignal::zeros(grid, m);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let horizon = grid.horizon;
    let terms: Vec<Vec<(f64, f64, f64)>> = (0..m)
        .map(|_| {
            let count = rng.random_range(1..=5);
            (0..count)
                .map(|_| {
                    let amp = rng.random_range(-1.0..1.0);
                    let omega = rng.random_range(0.0..(8.0 * std::f64::consts::PI / horizon));
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    (amp, omega, phase)
                })
                .collect()
        })
        .collect();
    let scale_draw = rng.random_range(0.1..1.0);
    let raw = GridSignal::sample(grid, |t| {
        Vector::from_fn(m, |i, _| {
            terms[i].iter().map(|(a, w, p)| a * (w * t + p).sin()).sum()
        })
    });
    let peak = raw.linf_norm();
    if peak == 0.0 {
        return raw;
    }
    let scale = magnitude * scale_draw / peak;
    raw.map(|v| v * scale)
}

/// `min P(û + δu) − P(û)` over seeded smooth perturbations.
pub fn perturbation_test(
    sys: &GenericSystem,
    source: &SourceSignal,
    x0: &Vector,
    u_hat: &GridSignal,
    trials: usize,
    magnitude: f64,
    seed: u64,
) -> Result<OptimalityReport> {
    if trials == 0 {
        return Err(Error::InvalidProblem(
            "perturbation test needs at least one trial".into(),
        ));
    }
    let base = power_functional(sys, source, x0, u_hat)?;
    let mut margin = f64::INFINITY;
    let mut worst = 0;
    for trial in 0..trials {
        let du = perturbation(u_hat.grid, u_hat.dim(), magnitude, seed, trial as u64);
        let perturbed = u_hat.zip_with(&du, |a, b| a + b);
        let delta = power_functional(sys, source, x0, &perturbed)? - base;
        if delta < margin {
            margin = delta;
            worst = trial;
        }
    }
    let first_order_residual = variational_derivative(sys, source, x0, u_hat)?.linf_norm();
    let passivity_certificate = match sys.linear() {
        Some(lin) => PassivityStatus::Certified(passivity_of(lin)?),
        None => PassivityStatus::EmpiricalOnly,
    };
    Ok(OptimalityReport {
        first_order_residual,
        perturbation_margin: margin,
        worst_trial: worst,
        passivity_certificate,
        trials,
    })
}
