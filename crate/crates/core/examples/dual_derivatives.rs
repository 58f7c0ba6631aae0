// Parsing an expression and reading exact gradients and Hessians from
// nested dual numbers.

use std::collections::BTreeMap;

use optimal_load::expr::{all_vars, Expr};

/// `(value, gradient, Hessian)` of `k·x0²·sin(u0) + exp(x0·u0)` at `(0.5, 0.3)`.
pub fn run_example() -> optimal_load::Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
    let constants = BTreeMap::from([("k".to_string(), 2.0)]);
    let e = Expr::parse("k*x0^2*sin(u0) + exp(x0*u0)", 1, 1, &constants)?;
    let d = e.eval_d2(&[0.5], &[0.3], &all_vars(1, 1))?;
    let hess = (0..2)
        .map(|i| (0..2).map(|j| d.hess[(i, j)]).collect())
        .collect();
    Ok((d.value, d.grad.iter().copied().collect(), hess))
}

#[allow(dead_code)]
fn main() -> optimal_load::Result<()> {
    let (v, g, h) = run_example()?;
    println!("value    {v}");
    println!("gradient {g:?}");
    println!("hessian  {h:?}");
    Ok(())
}
