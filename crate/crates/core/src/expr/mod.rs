//! Scalar expressions over state variables `x0..x{n-1}` and inputs `u0..u{m-1}`.
//!
//! Grammar (whitespace is ignored):
//!
//! ```text
//! expr     = term { ("+" | "-") term } ;
//! term     = unary { ("*" | "/") unary } ;
//! unary    = "-" unary | power ;
//! power    = atom [ "^" exponent ] ;
//! exponent = unary ;                       (* must fold to a constant *)
//! atom     = number | variable | constant | func "(" expr ")" | "(" expr ")" ;
//! func     = "sin" | "cos" | "tanh" | "exp" | "log" | "sqrt" ;
//! variable = ("x" | "u") digit { digit } ;
//! number   = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;
//! ```
//!
//! `^` binds tightest and is right-associative, so `-x0^2` is `-(x0^2)` and
//! `2^3^2` is `2^9`. Named constants are inlined at parse time.
//!
//! Derivatives are computed by forward-mode dual numbers; second derivatives
//! nest one dual inside another (see [`Dual`]).

mod diff;
mod eval;
mod parse;
mod scalar;

use std::collections::BTreeMap;
use std::fmt;

pub use eval::Dual2;
pub use scalar::{Dual, Scalar};

/// Errors raised while parsing or evaluating an expression.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("variable `{name}` at position {pos} is out of range (n = {n}, m = {m})")]
    VariableOutOfRange {
        name: String,
        pos: usize,
        n: usize,
        m: usize,
    },
    #[error("exponent at position {pos} is not a constant")]
    NonConstantExponent { pos: usize },
    #[error("domain error in `{subexpr}`: {reason}")]
    Domain { subexpr: String, reason: String },
    #[error("expected {expected} {what} values, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("constant `{name}` is not finite")]
    NonFiniteConstant { name: String },
}

/// A free variable of an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X(usize),
    U(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{i}"),
            Var::U(i) => write!(f, "u{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tanh,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

/// Expression tree node. Exponents of `Pow` are constants.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, f64),
    Call(Func, Box<Node>),
}

const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

impl Node {
    fn precedence(&self) -> u8 {
        match self {
            Node::Bin(op, ..) => op.precedence(),
            Node::Neg(_) => PREC_NEG,
            Node::Pow(..) => PREC_POW,
            _ => PREC_ATOM,
        }
    }

    /// Polynomial degree in the variables when it is at most one.
    fn affine_degree(&self) -> Option<u8> {
        match self {
            Node::Num(_) => Some(0),
            Node::Var(_) => Some(1),
            Node::Neg(a) => a.affine_degree(),
            Node::Bin(op, a, b) => {
                let (da, db) = (a.affine_degree()?, b.affine_degree()?);
                match op {
                    BinOp::Add | BinOp::Sub => Some(da.max(db)),
                    BinOp::Mul if da + db <= 1 => Some(da + db),
                    BinOp::Div if db == 0 => Some(da),
                    _ => None,
                }
            }
            Node::Pow(a, e) => match a.affine_degree()? {
                0 => Some(0),
                _ if *e == 0.0 => Some(0),
                d if *e == 1.0 => Some(d),
                _ => None,
            },
            Node::Call(_, a) => (a.affine_degree()? == 0).then_some(0),
        }
    }

    fn visit_vars(&self, out: &mut Vec<Var>) {
        match self {
            Node::Num(_) => {}
            Node::Var(v) => out.push(*v),
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.visit_vars(out),
            Node::Bin(_, a, b) => {
                a.visit_vars(out);
                b.visit_vars(out);
            }
        }
    }

    /// Value of a variable-free subtree.
    pub(crate) fn const_value(&self) -> Option<f64> {
        let mut vars = Vec::new();
        self.visit_vars(&mut vars);
        if !vars.is_empty() {
            return None;
        }
        eval::eval_node::<f64>(self, &[], &[]).ok()
    }

    fn write(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) => write_number(f, *v),
            Node::Var(v) => write!(f, "{v}"),
            Node::Neg(a) => {
                f.write_str("-")?;
                a.write_wrapped(f, a.precedence() < PREC_NEG)
            }
            Node::Bin(op, a, b) => {
                let p = op.precedence();
                a.write_wrapped(f, a.precedence() < p)?;
                write!(f, " {} ", op.symbol())?;
                b.write_wrapped(f, b.precedence() <= p)
            }
            Node::Pow(a, e) => {
                a.write_wrapped(f, a.precedence() <= PREC_POW)?;
                f.write_str("^")?;
                write_number(f, *e)
            }
            Node::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write(f)?;
                f.write_str(")")
            }
        }
    }

    fn write_wrapped(&self, f: &mut fmt::Formatter<'_>, parens: bool) -> fmt::Result {
        if parens {
            f.write_str("(")?;
            self.write(f)?;
            f.write_str(")")
        } else {
            self.write(f)
        }
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v.is_sign_negative() {
        write!(f, "(-{})", -v)
    } else {
        write!(f, "{v}")
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f)
    }
}

/// A parsed expression bound to `n` states and `m` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    n: usize,
    m: usize,
}

impl Expr {
    /// Parses `source`, inlining the named `constants`.
    pub fn parse(
        source: &str,
        n: usize,
        m: usize,
        constants: &BTreeMap<String, f64>,
    ) -> Result<Self, ExprError> {
        if let Some((name, _)) = constants.iter().find(|(_, v)| !v.is_finite()) {
            return Err(ExprError::NonFiniteConstant { name: name.clone() });
        }
        let root = parse::Parser::new(source, n, m, constants)?.parse()?;
        Ok(Self { root, n, m })
    }

    /// Wraps an already-built tree. Variable indices are checked against `(n, m)`.
    pub fn from_node(root: Node, n: usize, m: usize) -> Result<Self, ExprError> {
        let mut vars = Vec::new();
        root.visit_vars(&mut vars);
        for v in vars {
            let ok = match v {
                Var::X(i) => i < n,
                Var::U(i) => i < m,
            };
            if !ok {
                return Err(ExprError::VariableOutOfRange {
                    name: v.to_string(),
                    pos: 0,
                    n,
                    m,
                });
            }
        }
        Ok(Self { root, n, m })
    }

    pub fn constant(value: f64, n: usize, m: usize) -> Self {
        Self {
            root: Node::Num(value),
            n,
            m,
        }
    }

    /// `Σ coeff·node`, skipping zero coefficients and unit multipliers.
    pub fn linear_combination(
        terms: Vec<(f64, Node)>,
        n: usize,
        m: usize,
    ) -> Result<Self, ExprError> {
        let mut acc: Option<Node> = None;
        for (c, node) in terms {
            if c == 0.0 {
                continue;
            }
            let (negate, mag) = if c < 0.0 { (true, -c) } else { (false, c) };
            let term = if mag == 1.0 {
                node
            } else {
                Node::Bin(BinOp::Mul, Box::new(Node::Num(mag)), Box::new(node))
            };
            acc = Some(match (acc, negate) {
                (None, false) => term,
                (None, true) => Node::Neg(Box::new(term)),
                (Some(a), false) => Node::Bin(BinOp::Add, Box::new(a), Box::new(term)),
                (Some(a), true) => Node::Bin(BinOp::Sub, Box::new(a), Box::new(term)),
            });
        }
        Self::from_node(acc.unwrap_or(Node::Num(0.0)), n, m)
    }

    /// Whether the expression is affine in the variables, judged from its tree.
    pub fn is_affine(&self) -> bool {
        self.root.affine_degree().is_some()
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    /// Sorted, deduplicated free variables.
    pub fn variables(&self) -> Vec<Var> {
        let mut vars = Vec::new();
        self.root.visit_vars(&mut vars);
        vars.sort();
        vars.dedup();
        vars
    }

    pub fn depends_on_states(&self) -> bool {
        self.variables().iter().any(|v| matches!(v, Var::X(_)))
    }

    pub fn depends_on_inputs(&self) -> bool {
        self.variables().iter().any(|v| matches!(v, Var::U(_)))
    }

    fn check_dims(&self, x: usize, u: usize) -> Result<(), ExprError> {
        if x != self.n {
            return Err(ExprError::Dimension {
                what: "state",
                expected: self.n,
                got: x,
            });
        }
        if u != self.m {
            return Err(ExprError::Dimension {
                what: "input",
                expected: self.m,
                got: u,
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> Result<f64, ExprError> {
        self.check_dims(x.len(), u.len())?;
        eval::eval_node(&self.root, x, u)
    }

    /// Evaluates over any [`Scalar`], e.g. dual numbers.
    pub fn eval_scalar<T: Scalar>(&self, x: &[T], u: &[T]) -> Result<T, ExprError> {
        self.check_dims(x.len(), u.len())?;
        eval::eval_node(&self.root, x, u)
    }

    /// Value and gradient with respect to `active`.
    pub fn eval_d1(
        &self,
        x: &[f64],
        u: &[f64],
        active: &[Var],
    ) -> Result<(f64, Vec<f64>), ExprError> {
        self.check_dims(x.len(), u.len())?;
        self.check_active(active)?;
        eval::eval_d1(&self.root, x, u, active)
    }

    /// Value, gradient and Hessian with respect to `active`.
    pub fn eval_d2(&self, x: &[f64], u: &[f64], active: &[Var]) -> Result<Dual2, ExprError> {
        self.check_dims(x.len(), u.len())?;
        self.check_active(active)?;
        eval::eval_d2(&self.root, x, u, active)
    }

    fn check_active(&self, active: &[Var]) -> Result<(), ExprError> {
        for v in active {
            let ok = match v {
                Var::X(i) => *i < self.n,
                Var::U(i) => *i < self.m,
            };
            if !ok {
                return Err(ExprError::VariableOutOfRange {
                    name: v.to_string(),
                    pos: 0,
                    n: self.n,
                    m: self.m,
                });
            }
        }
        Ok(())
    }

    /// Symbolic partial derivative with respect to `var`.
    pub fn derivative(&self, var: Var) -> Expr {
        Expr {
            root: diff::derivative(&self.root, var),
            n: self.n,
            m: self.m,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.write(f)
    }
}

/// All variables of an `(n, m)` system in the order `x0.., u0..`.
pub fn all_vars(n: usize, m: usize) -> Vec<Var> {
    (0..n).map(Var::X).chain((0..m).map(Var::U)).collect()
}
