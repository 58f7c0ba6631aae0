//! Nonlinear state-space systems `ẋ = f(x,u)`, `y = h(x,u)` with `u, y ∈ ℝᵐ`,
//! and the structured classes (linear, port-Hamiltonian, gradient, static)
//! that lower to that form.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expr::{all_vars, Expr, Node, Var};
use crate::linalg::{self, Mat, Vector, SYMMETRY_TOL};

/// Partial derivatives of `f` and `h` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobians {
    /// ∂f/∂xᵀ, n×n
    pub fx: Mat,
    /// ∂f/∂uᵀ, n×m
    pub fu: Mat,
    /// ∂h/∂xᵀ, m×n
    pub hx: Mat,
    /// ∂h/∂uᵀ, m×m
    pub hu: Mat,
}

/// Square system in generic form.
#[derive(Debug, Clone, PartialEq)]
pub struct GenericSystem {
    n: usize,
    m: usize,
    f: Vec<Expr>,
    h: Vec<Expr>,
    linear: Option<LinearSystem>,
}

impl GenericSystem {
    pub fn new(f: Vec<Expr>, h: Vec<Expr>) -> Result<Self> {
        let n = f.len();
        let m = h.len();
        for e in f.iter().chain(&h) {
            if e.state_dim() != n || e.input_dim() != m {
                return Err(Error::Dimension(format!(
                    "expression `{e}` is bound to (n, m) = ({}, {}), system has ({n}, {m})",
                    e.state_dim(),
                    e.input_dim()
                )));
            }
        }
        if m == 0 {
            return Err(Error::InvalidSystem(
                "system needs at least one input".into(),
            ));
        }
        let mut sys = Self {
            n,
            m,
            f,
            h,
            linear: None,
        };
        sys.linear = sys.detect_linear()?;
        Ok(sys)
    }

    /// Matrix realization of a system whose expressions are affine with zero offset.
    fn detect_linear(&self) -> Result<Option<LinearSystem>> {
        if !self.f.iter().chain(&self.h).all(Expr::is_affine) {
            return Ok(None);
        }
        let (x, u) = (vec![0.0; self.n], vec![0.0; self.m]);
        let (xdot, y) = match self.rhs(&x, &u) {
            Ok(v) => v,
            Err(_) => return Ok(None),
        };
        if xdot.iter().chain(y.iter()).any(|v| *v != 0.0) {
            return Ok(None);
        }
        let j = self.jacobians(&x, &u)?;
        Ok(Some(LinearSystem::new(j.fx, j.fu, j.hx, j.hu)?))
    }

    /// Parses `f` and `h` component strings.
    pub fn parse(f: &[&str], h: &[&str], constants: &BTreeMap<String, f64>) -> Result<Self> {
        let (n, m) = (f.len(), h.len());
        let f = f
            .iter()
            .map(|s| Expr::parse(s, n, m, constants))
            .collect::<Result<Vec<_>, _>>()?;
        let h = h
            .iter()
            .map(|s| Expr::parse(s, n, m, constants))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(f, h)
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn f(&self) -> &[Expr] {
        &self.f
    }

    pub fn h(&self) -> &[Expr] {
        &self.h
    }

    /// Matrix realization, present for the linear classes and for generic
    /// systems whose expressions are linear.
    pub fn linear(&self) -> Option<&LinearSystem> {
        self.linear.as_ref()
    }

    /// Drops the matrix realization so every evaluation goes through the
    /// expressions and the generic Newton paths.
    pub fn without_linear_realization(mut self) -> Self {
        self.linear = None;
        self
    }

    fn check_point(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.n || u.len() != self.m {
            return Err(Error::Dimension(format!(
                "point has (|x|, |u|) = ({}, {}), system expects ({}, {})",
                x.len(),
                u.len(),
                self.n,
                self.m
            )));
        }
        Ok(())
    }

    /// `(f(x,u), h(x,u))`.
    pub fn rhs(&self, x: &[f64], u: &[f64]) -> Result<(Vector, Vector)> {
        self.check_point(x, u)?;
        let xdot = self
            .f
            .iter()
            .map(|e| e.eval(x, u))
            .collect::<Result<Vec<_>, _>>()?;
        let y = self.output(x, u)?;
        Ok((Vector::from_vec(xdot), y))
    }

    pub fn output(&self, x: &[f64], u: &[f64]) -> Result<Vector> {
        self.check_point(x, u)?;
        let y = self
            .h
            .iter()
            .map(|e| e.eval(x, u))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Vector::from_vec(y))
    }

    pub fn jacobians(&self, x: &[f64], u: &[f64]) -> Result<Jacobians> {
        self.check_point(x, u)?;
        let (n, m) = (self.n, self.m);
        let vars = all_vars(n, m);
        let mut fx = Mat::zeros(n, n);
        let mut fu = Mat::zeros(n, m);
        let mut hx = Mat::zeros(m, n);
        let mut hu = Mat::zeros(m, m);
        for (i, e) in self.f.iter().enumerate() {
            let (_, g) = e.eval_d1(x, u, &vars)?;
            for j in 0..n {
                fx[(i, j)] = g[j];
            }
            for j in 0..m {
                fu[(i, j)] = g[n + j];
            }
        }
        for (i, e) in self.h.iter().enumerate() {
            let (_, g) = e.eval_d1(x, u, &vars)?;
            for j in 0..n {
                hx[(i, j)] = g[j];
            }
            for j in 0..m {
                hu[(i, j)] = g[n + j];
            }
        }
        Ok(Jacobians { fx, fu, hx, hu })
    }
}

fn var_x(j: usize) -> Node {
    Node::Var(Var::X(j))
}

fn var_u(j: usize) -> Node {
    Node::Var(Var::U(j))
}

/// Rows of `[M₁ | M₂]·[x; u]` as expressions.
fn affine_rows(mx: &Mat, mu: &Mat, n: usize, m: usize) -> Result<Vec<Expr>> {
    (0..mx.nrows())
        .map(|i| {
            let terms = (0..n)
                .map(|j| (mx[(i, j)], var_x(j)))
                .chain((0..m).map(|j| (mu[(i, j)], var_u(j))))
                .collect();
            Ok(Expr::linear_combination(terms, n, m)?)
        })
        .collect()
}

fn check_shape(mat: &Mat, rows: usize, cols: usize, what: &str) -> Result<()> {
    if mat.nrows() != rows || mat.ncols() != cols {
        return Err(Error::Dimension(format!(
            "{what} is {}×{}, expected {rows}×{cols}",
            mat.nrows(),
            mat.ncols()
        )));
    }
    Ok(())
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidSystem(msg.to_string()))
    }
}

/// `ẋ = Ax + Bu`, `y = Cx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl LinearSystem {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let n = a.nrows();
        let m = d.nrows();
        check_shape(&a, n, n, "A")?;
        check_shape(&b, n, m, "B")?;
        check_shape(&c, m, n, "C")?;
        check_shape(&d, m, m, "D")?;
        require(m > 0, "linear system needs at least one input")?;
        Ok(Self { a, b, c, d })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.d.nrows()
    }

    /// The adjoint system `(−Aᵀ, −Cᵀ, Bᵀ, Dᵀ)`.
    pub fn adjoint(&self) -> Self {
        Self {
            a: -self.a.transpose(),
            b: -self.c.transpose(),
            c: self.b.transpose(),
            d: self.d.transpose(),
        }
    }

    pub fn to_generic(&self) -> Result<GenericSystem> {
        let (n, m) = (self.state_dim(), self.input_dim());
        let f = affine_rows(&self.a, &self.b, n, m)?;
        let h = affine_rows(&self.c, &self.d, n, m)?;
        let mut sys = GenericSystem::new(f, h)?;
        sys.linear = Some(self.clone());
        Ok(sys)
    }
}

/// `ẋ = (J−R)Qx + Bu`, `y = BᵀQx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct PortHamiltonianLinear {
    pub j: Mat,
    pub r: Mat,
    pub q: Mat,
    pub b: Mat,
    pub d: Mat,
}

impl PortHamiltonianLinear {
    pub fn new(j: Mat, r: Mat, q: Mat, b: Mat, d: Mat) -> Result<Self> {
        let n = j.nrows();
        let m = d.nrows();
        check_shape(&j, n, n, "J")?;
        check_shape(&r, n, n, "R")?;
        check_shape(&q, n, n, "Q")?;
        check_shape(&b, n, m, "B")?;
        check_shape(&d, m, m, "D")?;
        require(m > 0, "port-Hamiltonian system needs at least one port")?;
        require(
            linalg::is_skew(&j, SYMMETRY_TOL),
            "J must be skew-symmetric",
        )?;
        require(
            linalg::is_symmetric(&r, SYMMETRY_TOL),
            "R must be symmetric",
        )?;
        require(linalg::is_psd(&r), "R must be positive semidefinite")?;
        require(
            linalg::is_symmetric(&d, SYMMETRY_TOL),
            "D must be symmetric",
        )?;
        require(linalg::is_psd(&d), "D must be positive semidefinite")?;
        require(
            linalg::is_symmetric(&q, SYMMETRY_TOL),
            "Q must be symmetric",
        )?;
        Ok(Self { j, r, q, b, d })
    }

    pub fn state_dim(&self) -> usize {
        self.j.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.d.nrows()
    }

    pub fn to_linear(&self) -> LinearSystem {
        LinearSystem {
            a: (&self.j - &self.r) * &self.q,
            b: self.b.clone(),
            c: self.b.transpose() * &self.q,
            d: self.d.clone(),
        }
    }
}

/// `Gẋ = −P x + Cᵀu`, `y = Cx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientLinear {
    pub g: Mat,
    pub p_grad: Mat,
    pub c: Mat,
    pub d: Mat,
    g_inv: Mat,
}

impl GradientLinear {
    pub fn new(g: Mat, p_grad: Mat, c: Mat, d: Mat) -> Result<Self> {
        let n = g.nrows();
        let m = d.nrows();
        check_shape(&g, n, n, "G")?;
        check_shape(&p_grad, n, n, "P")?;
        check_shape(&c, m, n, "C")?;
        check_shape(&d, m, m, "D")?;
        require(m > 0, "gradient system needs at least one input")?;
        require(
            linalg::is_symmetric(&g, SYMMETRY_TOL),
            "G must be symmetric",
        )?;
        require(
            linalg::is_symmetric(&p_grad, SYMMETRY_TOL),
            "P must be symmetric",
        )?;
        require(
            linalg::is_symmetric(&d, SYMMETRY_TOL),
            "D must be symmetric",
        )?;
        let g_inv = linalg::checked_inverse(&g, "G")?;
        Ok(Self {
            g,
            p_grad,
            c,
            d,
            g_inv,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.d.nrows()
    }

    pub fn g_inverse(&self) -> &Mat {
        &self.g_inv
    }

    pub fn to_linear(&self) -> LinearSystem {
        LinearSystem {
            a: -(&self.g_inv * &self.p_grad),
            b: &self.g_inv * self.c.transpose(),
            c: self.c.clone(),
            d: self.d.clone(),
        }
    }
}

/// `ẋ = (J−R)∂H/∂x + Bu`, `y = Bᵀ∂H/∂x + Du` with constant structure matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PortHamiltonianNonlinear {
    pub j: Mat,
    pub r: Mat,
    pub b: Mat,
    pub d: Mat,
    pub hamiltonian: Expr,
}

impl PortHamiltonianNonlinear {
    pub fn new(j: Mat, r: Mat, b: Mat, d: Mat, hamiltonian: Expr) -> Result<Self> {
        let n = j.nrows();
        let m = d.nrows();
        check_shape(&j, n, n, "J")?;
        check_shape(&r, n, n, "R")?;
        check_shape(&b, n, m, "B")?;
        check_shape(&d, m, m, "D")?;
        require(m > 0, "port-Hamiltonian system needs at least one port")?;
        require(
            linalg::is_skew(&j, SYMMETRY_TOL),
            "J must be skew-symmetric",
        )?;
        require(
            linalg::is_symmetric(&r, SYMMETRY_TOL),
            "R must be symmetric",
        )?;
        require(linalg::is_psd(&r), "R must be positive semidefinite")?;
        require(
            linalg::is_symmetric(&d, SYMMETRY_TOL),
            "D must be symmetric",
        )?;
        require(linalg::is_psd(&d), "D must be positive semidefinite")?;
        if hamiltonian.state_dim() != n || hamiltonian.input_dim() != m {
            return Err(Error::Dimension(
                "Hamiltonian must be bound to (n, m)".into(),
            ));
        }
        require(
            !hamiltonian.depends_on_inputs(),
            "Hamiltonian must not depend on u",
        )?;
        Ok(Self {
            j,
            r,
            b,
            d,
            hamiltonian,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.j.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.d.nrows()
    }

    /// ∂²H/∂x∂xᵀ at `x`.
    pub fn hessian(&self, x: &[f64]) -> Result<Mat> {
        let n = self.state_dim();
        let u = vec![0.0; self.input_dim()];
        let vars: Vec<Var> = (0..n).map(Var::X).collect();
        Ok(self.hamiltonian.eval_d2(x, &u, &vars)?.hess)
    }

    pub fn to_generic(&self) -> Result<GenericSystem> {
        let (n, m) = (self.state_dim(), self.input_dim());
        let grad: Vec<Node> = (0..n)
            .map(|k| self.hamiltonian.derivative(Var::X(k)).root().clone())
            .collect();
        let jr = &self.j - &self.r;
        let f = (0..n)
            .map(|i| {
                let terms = (0..n)
                    .map(|k| (jr[(i, k)], grad[k].clone()))
                    .chain((0..m).map(|j| (self.b[(i, j)], var_u(j))))
                    .collect();
                Ok(Expr::linear_combination(terms, n, m)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let h = (0..m)
            .map(|i| {
                let terms = (0..n)
                    .map(|k| (self.b[(k, i)], grad[k].clone()))
                    .chain((0..m).map(|j| (self.d[(i, j)], var_u(j))))
                    .collect();
                Ok(Expr::linear_combination(terms, n, m)?)
            })
            .collect::<Result<Vec<_>>>()?;
        GenericSystem::new(f, h)
    }
}

/// `Gẋ = −∂V/∂x`, `y = −∂V/∂u` with constant metric `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientNonlinear {
    pub g: Mat,
    pub potential: Expr,
    g_inv: Mat,
}

impl GradientNonlinear {
    pub fn new(g: Mat, potential: Expr) -> Result<Self> {
        let n = g.nrows();
        check_shape(&g, n, n, "G")?;
        require(
            linalg::is_symmetric(&g, SYMMETRY_TOL),
            "G must be symmetric",
        )?;
        if potential.state_dim() != n {
            return Err(Error::Dimension(
                "potential must be bound to n = dim G".into(),
            ));
        }
        require(
            potential.input_dim() > 0,
            "gradient system needs at least one input",
        )?;
        let g_inv = linalg::checked_inverse(&g, "G")?;
        Ok(Self {
            g,
            potential,
            g_inv,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.potential.input_dim()
    }

    pub fn g_inverse(&self) -> &Mat {
        &self.g_inv
    }

    /// Second derivatives `(V_xx, V_xu, V_uu)` at `(x, u)`.
    pub fn potential_blocks(&self, x: &[f64], u: &[f64]) -> Result<(Mat, Mat, Mat)> {
        let (n, m) = (self.state_dim(), self.input_dim());
        let d2 = self.potential.eval_d2(x, u, &all_vars(n, m))?;
        let hs = d2.hess;
        Ok((
            hs.view((0, 0), (n, n)).into_owned(),
            hs.view((0, n), (n, m)).into_owned(),
            hs.view((n, n), (m, m)).into_owned(),
        ))
    }

    pub fn to_generic(&self) -> Result<GenericSystem> {
        let (n, m) = (self.state_dim(), self.input_dim());
        let vx: Vec<Node> = (0..n)
            .map(|k| self.potential.derivative(Var::X(k)).root().clone())
            .collect();
        let f = (0..n)
            .map(|i| {
                let terms = (0..n)
                    .map(|k| (-self.g_inv[(i, k)], vx[k].clone()))
                    .collect();
                Ok(Expr::linear_combination(terms, n, m)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let h = (0..m)
            .map(|j| {
                let vu = self.potential.derivative(Var::U(j)).root().clone();
                Ok(Expr::linear_combination(vec![(-1.0, vu)], n, m)?)
            })
            .collect::<Result<Vec<_>>>()?;
        GenericSystem::new(f, h)
    }
}

/// Memoryless `y = h(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticNonlinearity {
    pub h: Vec<Expr>,
}

impl StaticNonlinearity {
    pub fn new(h: Vec<Expr>) -> Result<Self> {
        let m = h.len();
        for e in &h {
            if e.state_dim() != 0 || e.input_dim() != m {
                return Err(Error::Dimension(
                    "static nonlinearity expressions must be bound to (0, m)".into(),
                ));
            }
        }
        require(m > 0, "static nonlinearity needs at least one input")?;
        Ok(Self { h })
    }

    pub fn parse(h: &[&str], constants: &BTreeMap<String, f64>) -> Result<Self> {
        let m = h.len();
        let h = h
            .iter()
            .map(|s| Expr::parse(s, 0, m, constants))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(h)
    }

    pub fn to_generic(&self) -> Result<GenericSystem> {
        GenericSystem::new(Vec::new(), self.h.clone())
    }
}

/// The structured system classes.
#[derive(Debug, Clone, PartialEq)]
pub enum StructuredSystem {
    Linear(LinearSystem),
    PortHamiltonianLinear(PortHamiltonianLinear),
    GradientLinear(GradientLinear),
    PortHamiltonianNonlinear(PortHamiltonianNonlinear),
    GradientNonlinear(GradientNonlinear),
    Static(StaticNonlinearity),
}

impl StructuredSystem {
    pub fn to_generic(&self) -> Result<GenericSystem> {
        match self {
            StructuredSystem::Linear(s) => s.to_generic(),
            StructuredSystem::PortHamiltonianLinear(s) => s.to_linear().to_generic(),
            StructuredSystem::GradientLinear(s) => s.to_linear().to_generic(),
            StructuredSystem::PortHamiltonianNonlinear(s) => s.to_generic(),
            StructuredSystem::GradientNonlinear(s) => s.to_generic(),
            StructuredSystem::Static(s) => s.to_generic(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StructuredSystem::Linear(_) => "linear",
            StructuredSystem::PortHamiltonianLinear(_) => "port_hamiltonian_linear",
            StructuredSystem::GradientLinear(_) => "gradient_linear",
            StructuredSystem::PortHamiltonianNonlinear(_) => "port_hamiltonian_nonlinear",
            StructuredSystem::GradientNonlinear(_) => "gradient_nonlinear",
            StructuredSystem::Static(_) => "static",
        }
    }

    /// Matrix realization for the linear classes.
    pub fn linear_realization(&self) -> Option<LinearSystem> {
        match self {
            StructuredSystem::Linear(s) => Some(s.clone()),
            StructuredSystem::PortHamiltonianLinear(s) => Some(s.to_linear()),
            StructuredSystem::GradientLinear(s) => Some(s.to_linear()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn rc() -> LinearSystem {
        LinearSystem::new(m1(0.0), m1(1.0), m1(1.0), m1(1.0)).unwrap()
    }

    #[test]
    fn rc_lowers_to_expected_expressions() {
        let g = rc().to_generic().unwrap();
        assert_eq!(g.f()[0].to_string(), "u0");
        assert_eq!(g.h()[0].to_string(), "x0 + u0");
        assert!(g.linear().is_some());
    }

    #[test]
    fn linear_expressions_get_a_realization() {
        let c = BTreeMap::from([("C".to_string(), 2.0), ("R".to_string(), 3.0)]);
        let g = GenericSystem::parse(&["u0"], &["x0/C + R*u0"], &c).unwrap();
        let lin = g.linear().unwrap();
        assert_eq!(
            (lin.a[(0, 0)], lin.b[(0, 0)], lin.c[(0, 0)], lin.d[(0, 0)]),
            (0.0, 1.0, 0.5, 3.0)
        );
        let offset = GenericSystem::parse(&["u0 + 1"], &["x0 + u0"], &c).unwrap();
        assert!(offset.linear().is_none());
        let cubic = GenericSystem::parse(&["u0"], &["x0^3 + u0"], &c).unwrap();
        assert!(cubic.linear().is_none());
        assert!(g.without_linear_realization().linear().is_none());
    }

    #[test]
    fn scalar_port_hamiltonian_lowering() {
        let (q, b) = (2.5, 0.75);
        let ph = PortHamiltonianLinear::new(m1(0.0), m1(0.0), m1(q), m1(b), m1(0.0)).unwrap();
        let g = StructuredSystem::PortHamiltonianLinear(ph)
            .to_generic()
            .unwrap();
        let (xdot, y) = g.rhs(&[1.3], &[0.4]).unwrap();
        assert_eq!(xdot[0], b * 0.4);
        assert_eq!(y[0], b * q * 1.3);
    }

    #[test]
    fn static_lowering_has_no_state() {
        let s = StaticNonlinearity::parse(&["u0^3"], &BTreeMap::new()).unwrap();
        let g = s.to_generic().unwrap();
        assert_eq!(g.state_dim(), 0);
        assert_eq!(g.h()[0].to_string(), "u0^3");
    }

    #[test]
    fn rhs_examples() {
        let g = rc().to_generic().unwrap();
        let (xdot, y) = g.rhs(&[0.0], &[1.0]).unwrap();
        assert_eq!((xdot[0], y[0]), (1.0, 1.0));

        let cap = GenericSystem::parse(&["u0"], &["x0^3 + u0"], &BTreeMap::new()).unwrap();
        let (xdot, y) = cap.rhs(&[2.0], &[0.0]).unwrap();
        assert_eq!((xdot[0], y[0]), (0.0, 8.0));
        assert!(matches!(
            cap.rhs(&[1.0, 2.0], &[0.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn jacobian_examples() {
        let j = rc()
            .to_generic()
            .unwrap()
            .jacobians(&[0.3], &[-1.1])
            .unwrap();
        assert_eq!(
            (j.fx[(0, 0)], j.fu[(0, 0)], j.hx[(0, 0)], j.hu[(0, 0)]),
            (0.0, 1.0, 1.0, 1.0)
        );
        let cap = GenericSystem::parse(&["u0"], &["x0^3 + u0"], &BTreeMap::new()).unwrap();
        assert_eq!(cap.jacobians(&[2.0], &[0.0]).unwrap().hx[(0, 0)], 12.0);
    }

    #[test]
    fn structural_invariants_are_enforced() {
        let nonskew = Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let z = Mat::zeros(2, 2);
        let b = Mat::zeros(2, 1);
        assert!(
            PortHamiltonianLinear::new(nonskew, z.clone(), z.clone(), b.clone(), m1(0.0)).is_err()
        );
        let neg_r = Mat::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 0.0]);
        assert!(
            PortHamiltonianLinear::new(z.clone(), neg_r, z.clone(), b.clone(), m1(0.0)).is_err()
        );
        assert!(matches!(
            GradientLinear::new(z.clone(), z.clone(), Mat::zeros(1, 2), m1(0.0)),
            Err(Error::SingularMatrix(_))
        ));
        let h = Expr::parse("x0^2 + u0", 2, 1, &BTreeMap::new()).unwrap();
        assert!(PortHamiltonianNonlinear::new(z.clone(), z, b, m1(0.0), h).is_err());
    }

    #[test]
    fn nonlinear_port_hamiltonian_lowering() {
        let h = Expr::parse("x0^4/4", 1, 1, &BTreeMap::new()).unwrap();
        let ph = PortHamiltonianNonlinear::new(m1(0.0), m1(0.5), m1(1.0), m1(0.2), h).unwrap();
        let g = ph.to_generic().unwrap();
        let (xdot, y) = g.rhs(&[2.0], &[1.0]).unwrap();
        assert!((xdot[0] - (-0.5 * 8.0 + 1.0)).abs() < 1e-15);
        assert!((y[0] - (8.0 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn nonlinear_gradient_lowering() {
        let v = Expr::parse("x0^2/2 - u0*x0 + cos(x0)", 1, 1, &BTreeMap::new()).unwrap();
        let gs = GradientNonlinear::new(m1(2.0), v).unwrap();
        let g = gs.to_generic().unwrap();
        let (x, u) = (0.8_f64, 0.3_f64);
        let (xdot, y) = g.rhs(&[x], &[u]).unwrap();
        assert!((xdot[0] + (x - u - x.sin()) / 2.0).abs() < 1e-15);
        assert!((y[0] - x).abs() < 1e-15);
    }
}
