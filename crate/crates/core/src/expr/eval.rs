use nalgebra::{DMatrix, DVector};

use super::scalar::{Dual, Scalar};
use super::{BinOp, ExprError, Func, Node, Var};

/// Value, gradient and Hessian of an expression with respect to a set of
/// active variables. `hess` is symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual2 {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

fn domain(node: &Node, reason: impl Into<String>) -> ExprError {
    ExprError::Domain {
        subexpr: node.to_string(),
        reason: reason.into(),
    }
}

pub(crate) fn eval_node<T: Scalar>(node: &Node, x: &[T], u: &[T]) -> Result<T, ExprError> {
    Ok(match node {
        Node::Num(v) => T::from_f64(*v),
        Node::Var(Var::X(i)) => x[*i].clone(),
        Node::Var(Var::U(i)) => u[*i].clone(),
        Node::Neg(a) => -eval_node(a, x, u)?,
        Node::Bin(op, a, b) => {
            let a = eval_node(a, x, u)?;
            let b = eval_node(b, x, u)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b.value() == 0.0 {
                        return Err(domain(node, "division by zero"));
                    }
                    a / b
                }
            }
        }
        Node::Pow(a, e) => {
            let base = eval_node(a, x, u)?;
            let b = base.value();
            if e.fract() == 0.0 && e.abs() <= i32::MAX as f64 {
                if *e < 0.0 && b == 0.0 {
                    return Err(domain(node, "zero raised to a negative power"));
                }
                base.powi(*e as i32)
            } else {
                if b <= 0.0 {
                    return Err(domain(
                        node,
                        format!("non-integer power of non-positive base {b}"),
                    ));
                }
                base.powf(*e)
            }
        }
        Node::Call(func, a) => {
            let arg = eval_node(a, x, u)?;
            let v = arg.value();
            match func {
                Func::Sin => arg.sin(),
                Func::Cos => arg.cos(),
                Func::Tanh => arg.tanh(),
                Func::Exp => arg.exp(),
                Func::Log => {
                    if v <= 0.0 {
                        return Err(domain(node, format!("logarithm of non-positive value {v}")));
                    }
                    arg.ln()
                }
                Func::Sqrt => {
                    if v < 0.0 {
                        return Err(domain(node, format!("square root of negative value {v}")));
                    }
                    arg.sqrt()
                }
            }
        }
    })
}

fn seeded<T: Scalar>(x: &[f64], u: &[f64], seed: impl Fn(Var, f64) -> T) -> (Vec<T>, Vec<T>) {
    let xs = x
        .iter()
        .enumerate()
        .map(|(i, v)| seed(Var::X(i), *v))
        .collect();
    let us = u
        .iter()
        .enumerate()
        .map(|(i, v)| seed(Var::U(i), *v))
        .collect();
    (xs, us)
}

pub(super) fn eval_d1(
    node: &Node,
    x: &[f64],
    u: &[f64],
    active: &[Var],
) -> Result<(f64, Vec<f64>), ExprError> {
    if active.is_empty() {
        return Ok((eval_node::<f64>(node, x, u)?, Vec::new()));
    }
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(active.len());
    for dir in active {
        let (xs, us) = seeded(x, u, |v, val| {
            Dual::new(val, if v == *dir { 1.0 } else { 0.0 })
        });
        let r: Dual<f64> = eval_node(node, &xs, &us)?;
        value = r.re;
        grad.push(r.eps);
    }
    Ok((value, grad))
}

/// Forward-over-forward: one nested-dual pass per unordered pair `(i, j)`.
pub(super) fn eval_d2(
    node: &Node,
    x: &[f64],
    u: &[f64],
    active: &[Var],
) -> Result<Dual2, ExprError> {
    let k = active.len();
    let mut grad = DVector::zeros(k);
    let mut hess = DMatrix::zeros(k, k);
    if k == 0 {
        let value = eval_node::<f64>(node, x, u)?;
        return Ok(Dual2 { value, grad, hess });
    }
    let mut value = 0.0;
    for i in 0..k {
        for j in i..k {
            let (xs, us) = seeded(x, u, |v, val| {
                let outer = if v == active[i] { 1.0 } else { 0.0 };
                let inner = if v == active[j] { 1.0 } else { 0.0 };
                Dual::new(Dual::new(val, inner), Dual::new(outer, 0.0))
            });
            let r: Dual<Dual<f64>> = eval_node(node, &xs, &us)?;
            value = r.re.re;
            if j == i {
                grad[i] = r.eps.re;
            }
            hess[(i, j)] = r.eps.eps;
            hess[(j, i)] = r.eps.eps;
        }
    }
    Ok(Dual2 { value, grad, hess })
}
