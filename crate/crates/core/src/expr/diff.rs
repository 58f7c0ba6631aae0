//! Symbolic partial derivatives, used to lower Hamiltonian and potential
//! based system descriptions into explicit vector fields.

use super::{BinOp, Func, Node, Var};

fn num(v: f64) -> Node {
    Node::Num(v)
}

fn is_num(n: &Node, v: f64) -> bool {
    matches!(n, Node::Num(c) if *c == v)
}

fn add(a: Node, b: Node) -> Node {
    match (&a, &b) {
        _ if is_num(&a, 0.0) => b,
        _ if is_num(&b, 0.0) => a,
        (Node::Num(x), Node::Num(y)) => num(x + y),
        _ => Node::Bin(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

fn sub(a: Node, b: Node) -> Node {
    match (&a, &b) {
        _ if is_num(&b, 0.0) => a,
        _ if is_num(&a, 0.0) => neg(b),
        (Node::Num(x), Node::Num(y)) => num(x - y),
        _ => Node::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

fn mul(a: Node, b: Node) -> Node {
    match (&a, &b) {
        _ if is_num(&a, 0.0) || is_num(&b, 0.0) => num(0.0),
        _ if is_num(&a, 1.0) => b,
        _ if is_num(&b, 1.0) => a,
        (Node::Num(x), Node::Num(y)) => num(x * y),
        _ => Node::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

fn div(a: Node, b: Node) -> Node {
    if is_num(&a, 0.0) {
        return num(0.0);
    }
    if is_num(&b, 1.0) {
        return a;
    }
    Node::Bin(BinOp::Div, Box::new(a), Box::new(b))
}

fn neg(a: Node) -> Node {
    match a {
        Node::Num(v) => num(-v),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

fn pow(a: Node, e: f64) -> Node {
    if e == 0.0 {
        num(1.0)
    } else if e == 1.0 {
        a
    } else {
        Node::Pow(Box::new(a), e)
    }
}

fn call(f: Func, a: Node) -> Node {
    Node::Call(f, Box::new(a))
}

pub(super) fn derivative(node: &Node, var: Var) -> Node {
    match node {
        Node::Num(_) => num(0.0),
        Node::Var(v) => num(if *v == var { 1.0 } else { 0.0 }),
        Node::Neg(a) => neg(derivative(a, var)),
        Node::Bin(op, a, b) => {
            let da = derivative(a, var);
            let db = derivative(b, var);
            let (a, b) = ((**a).clone(), (**b).clone());
            match op {
                BinOp::Add => add(da, db),
                BinOp::Sub => sub(da, db),
                BinOp::Mul => add(mul(da, b), mul(a, db)),
                BinOp::Div => {
                    if is_num(&db, 0.0) {
                        div(da, b)
                    } else {
                        sub(div(da, b.clone()), div(mul(a, db), mul(b.clone(), b)))
                    }
                }
            }
        }
        Node::Pow(a, e) => {
            let da = derivative(a, var);
            mul(mul(num(*e), pow((**a).clone(), e - 1.0)), da)
        }
        Node::Call(f, a) => {
            let da = derivative(a, var);
            if is_num(&da, 0.0) {
                return num(0.0);
            }
            let a = (**a).clone();
            match f {
                Func::Sin => mul(call(Func::Cos, a), da),
                Func::Cos => neg(mul(call(Func::Sin, a), da)),
                Func::Tanh => mul(sub(num(1.0), pow(call(Func::Tanh, a), 2.0)), da),
                Func::Exp => mul(call(Func::Exp, a), da),
                Func::Log => div(da, a),
                Func::Sqrt => div(da, mul(num(2.0), call(Func::Sqrt, a))),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use crate::expr::{Expr, Var};

    #[test]
    fn symbolic_matches_dual_gradient() {
        let srcs = [
            "x0^4/4 + sin(x1)*x0",
            "exp(-x0*x1) + tanh(x1)^2",
            "sqrt(1 + x0^2) - log(2 + cos(x1))",
            "x0 / (1 + x1^2)",
        ];
        let point = [0.7, -0.4];
        for src in srcs {
            let e = Expr::parse(src, 2, 0, &BTreeMap::new()).unwrap();
            let (_, grad) = e.eval_d1(&point, &[], &[Var::X(0), Var::X(1)]).unwrap();
            for (k, g) in grad.iter().enumerate() {
                let d = e.derivative(Var::X(k)).eval(&point, &[]).unwrap();
                assert!(
                    (d - g).abs() <= 1e-14 * (1.0 + g.abs()),
                    "{src}: {d} vs {g}"
                );
            }
        }
    }

    #[test]
    fn quartic_derivative_is_cubic() {
        let e = Expr::parse("x0^4/4", 1, 0, &BTreeMap::new()).unwrap();
        let d = e.derivative(Var::X(0));
        assert_eq!(d.eval(&[2.0], &[]).unwrap(), 8.0);
        assert!(!d.depends_on_inputs());
    }
}
