//! Fixed-step classical Runge–Kutta integration on a [`TimeGrid`].

use crate::error::Result;
use crate::linalg::Vector;
use crate::model::GenericSystem;
use crate::signal::{GridSignal, TimeGrid};

/// Integrates `ẏ = f(t, y)` forward from `y(0) = y0`; returns one sample per grid point.
pub fn rk4<F>(grid: TimeGrid, y0: Vector, mut f: F) -> Result<Vec<Vector>>
where
    F: FnMut(f64, &Vector) -> Result<Vector>,
{
    let h = grid.step();
    let mut out = Vec::with_capacity(grid.len());
    out.push(y0);
    for k in 0..grid.steps {
        let (t0, t1) = (grid.time(k), grid.time(k + 1));
        let tm = t0 + 0.5 * h;
        let y = &out[k];
        let k1 = f(t0, y).map_err(|e| e.at_time(t0))?;
        let k2 = f(tm, &(y + &k1 * (0.5 * h))).map_err(|e| e.at_time(tm))?;
        let k3 = f(tm, &(y + &k2 * (0.5 * h))).map_err(|e| e.at_time(tm))?;
        let k4 = f(t1, &(y + &k3 * h)).map_err(|e| e.at_time(t1))?;
        let next = y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        out.push(next);
    }
    Ok(out)
}

/// Integrates `ẏ = f(t, y)` backward from the terminal value `y(T) = y_end`
/// (forward in reversed time `τ = T − t`); samples are indexed like the grid.
pub fn rk4_backward<F>(grid: TimeGrid, y_end: Vector, mut f: F) -> Result<Vec<Vector>>
where
    F: FnMut(f64, &Vector) -> Result<Vector>,
{
    let h = grid.step();
    let mut rev = Vec::with_capacity(grid.len());
    rev.push(y_end);
    for k in (0..grid.steps).rev() {
        let (t1, t0) = (grid.time(k + 1), grid.time(k));
        let tm = t1 - 0.5 * h;
        let y = rev.last().expect("non-empty");
        let k1 = f(t1, y).map_err(|e| e.at_time(t1))?;
        let k2 = f(tm, &(y - &k1 * (0.5 * h))).map_err(|e| e.at_time(tm))?;
        let k3 = f(tm, &(y - &k2 * (0.5 * h))).map_err(|e| e.at_time(tm))?;
        let k4 = f(t0, &(y - &k3 * h)).map_err(|e| e.at_time(t0))?;
        let next = y - (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        rev.push(next);
    }
    rev.reverse();
    Ok(rev)
}

/// Forward simulation of `Σ` under a grid-sampled input. Returns `(x, y)` samples.
pub fn simulate(
    sys: &GenericSystem,
    x0: &Vector,
    input: &GridSignal,
) -> Result<(Vec<Vector>, Vec<Vector>)> {
    let grid = input.grid;
    let xs = rk4(grid, x0.clone(), |t, x| {
        let u = input.at(t);
        let (xdot, _) = sys.rhs(x.as_slice(), u.as_slice())?;
        Ok(xdot)
    })?;
    let ys = xs
        .iter()
        .zip(&input.values)
        .enumerate()
        .map(|(k, (x, u))| {
            sys.output(x.as_slice(), u.as_slice())
                .map_err(|e| e.at_time(grid.time(k)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((xs, ys))
}
