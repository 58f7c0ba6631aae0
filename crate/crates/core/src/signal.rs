//! Source signals `y_S: [0,T] → ℝᵐ` and grid-sampled signals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// A `(t, value)` breakpoint of a piecewise-linear signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub t: f64,
    pub value: Vec<f64>,
}

/// Analytic source signal, evaluable at any time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceSignal {
    Constant {
        value: Vec<f64>,
    },
    /// `amplitude_i · sin(omega_i · t + phase_i)` per channel.
    Sinusoid {
        amplitude: Vec<f64>,
        omega: Vec<f64>,
        phase: Vec<f64>,
    },
    PiecewiseLinear {
        knots: Vec<Knot>,
    },
    Sum {
        terms: Vec<SourceSignal>,
    },
}

impl SourceSignal {
    pub fn constant(value: Vec<f64>) -> Self {
        SourceSignal::Constant { value }
    }

    pub fn dim(&self) -> usize {
        match self {
            SourceSignal::Constant { value } => value.len(),
            SourceSignal::Sinusoid { amplitude, .. } => amplitude.len(),
            SourceSignal::PiecewiseLinear { knots } => knots.first().map_or(0, |k| k.value.len()),
            SourceSignal::Sum { terms } => terms.first().map_or(0, SourceSignal::dim),
        }
    }

    /// Checks channel counts and, for piecewise-linear parts, that knots are
    /// strictly increasing and cover `[0, horizon]`.
    pub fn validate(&self, m: usize, horizon: f64) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProblem(msg));
        match self {
            SourceSignal::Constant { value } => {
                if value.len() != m {
                    return bad(format!(
                        "constant source has {} channels, expected {m}",
                        value.len()
                    ));
                }
            }
            SourceSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => {
                if amplitude.len() != m || omega.len() != m || phase.len() != m {
                    return bad(format!(
                        "sinusoid source must have {m} channels in every field"
                    ));
                }
            }
            SourceSignal::PiecewiseLinear { knots } => {
                if knots.len() < 2 {
                    return bad("piecewise-linear source needs at least two knots".into());
                }
                if knots.iter().any(|k| k.value.len() != m) {
                    return bad(format!("every knot must carry {m} values"));
                }
                if knots.windows(2).any(|w| !(w[1].t > w[0].t)) {
                    return bad("knot times must be strictly increasing".into());
                }
                let (first, last) = (knots[0].t, knots[knots.len() - 1].t);
                if first > 0.0 || last < horizon {
                    return bad(format!(
                        "knots span [{first}, {last}] which does not cover [0, {horizon}]"
                    ));
                }
            }
            SourceSignal::Sum { terms } => {
                if terms.is_empty() {
                    return bad("sum source needs at least one term".into());
                }
                for term in terms {
                    term.validate(m, horizon)?;
                }
            }
        }
        if self.values().any(|v| !v.is_finite()) {
            return bad("source parameters must be finite".into());
        }
        Ok(())
    }

    fn values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            SourceSignal::Constant { value } => Box::new(value.iter().copied()),
            SourceSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => Box::new(amplitude.iter().chain(omega).chain(phase).copied()),
            SourceSignal::PiecewiseLinear { knots } => Box::new(
                knots
                    .iter()
                    .flat_map(|k| std::iter::once(k.t).chain(k.value.iter().copied())),
            ),
            SourceSignal::Sum { terms } => Box::new(terms.iter().flat_map(|t| t.values())),
        }
    }

    pub fn eval(&self, t: f64) -> Vector {
        match self {
            SourceSignal::Constant { value } => Vector::from_column_slice(value),
            SourceSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => Vector::from_fn(amplitude.len(), |i, _| {
                amplitude[i] * (omega[i] * t + phase[i]).sin()
            }),
            SourceSignal::PiecewiseLinear { knots } => {
                let k = knots.partition_point(|k| k.t <= t);
                if k == 0 {
                    return Vector::from_column_slice(&knots[0].value);
                }
                if k == knots.len() {
                    return Vector::from_column_slice(&knots[k - 1].value);
                }
                let (a, b) = (&knots[k - 1], &knots[k]);
                let theta = (t - a.t) / (b.t - a.t);
                Vector::from_fn(a.value.len(), |i, _| {
                    a.value[i] + theta * (b.value[i] - a.value[i])
                })
            }
            SourceSignal::Sum { terms } => {
                let mut acc = Vector::zeros(self.dim());
                for term in terms {
                    acc += term.eval(t);
                }
                acc
            }
        }
    }
}

/// Uniform time grid `t_k = k·T/N`, `k = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidProblem("grid needs at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.step()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Step index `k` and weight `θ ∈ [0, 1]` with `t = t_k + θ·h`.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let h = self.step();
        let k = ((t / h).floor().max(0.0) as usize).min(self.steps - 1);
        let theta = ((t - self.time(k)) / h).clamp(0.0, 1.0);
        (k, theta)
    }

    /// Trapezoidal quadrature of grid samples.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        let h = self.step();
        let n = values.len();
        debug_assert_eq!(n, self.len());
        let inner: f64 = values[1..n - 1].iter().sum();
        h * (inner + 0.5 * (values[0] + values[n - 1]))
    }
}

/// A vector signal sampled on a [`TimeGrid`], linearly interpolated between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSignal {
    pub grid: TimeGrid,
    pub values: Vec<Vector>,
}

impl GridSignal {
    pub fn new(grid: TimeGrid, values: Vec<Vector>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "signal has {} samples, grid has {}",
                values.len(),
                grid.len()
            )));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::Dimension("signal samples differ in length".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn sample(grid: TimeGrid, f: impl Fn(f64) -> Vector) -> Self {
        let values = grid.times().into_iter().map(f).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self::sample(grid, |_| Vector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn at(&self, t: f64) -> Vector {
        let (k, theta) = self.grid.locate(t);
        let a = &self.values[k];
        let b = &self.values[k + 1];
        a + (b - a) * theta
    }

    /// `∫₀ᵀ ⟨self, other⟩ dt` by the trapezoidal rule.
    pub fn inner(&self, other: &GridSignal) -> f64 {
        let prods: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.dot(b))
            .collect();
        self.grid.trapezoid(&prods)
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(&Vector) -> Vector) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(f).collect(),
        }
    }

    pub fn zip_with(&self, other: &GridSignal, f: impl Fn(&Vector, &Vector) -> Vector) -> Self {
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }
}
