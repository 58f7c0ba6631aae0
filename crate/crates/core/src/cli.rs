//! Batch front end: JSON run configurations in, CSV trajectories and JSON
//! reports out.
//!
//! Exit codes: `0` success, `1` a verification check failed, `2` invalid
//! configuration, `3` solver failure (including an exhausted oracle budget),
//! `4` I/O failure. Failures print one JSON object to stderr with a
//! machine-readable `category`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Error;
use crate::expr::Expr;
use crate::linalg::{self, Vector};
use crate::loads::{self, StructureReport};
use crate::model::{
    GenericSystem, GradientLinear, GradientNonlinear, LinearSystem, PortHamiltonianLinear,
    PortHamiltonianNonlinear, StaticNonlinearity, StructuredSystem,
};
use crate::ode;
use crate::power::{self, OracleSettings, OracleStatus, PassivityStatus, Verdict};
use crate::signal::{GridSignal, SourceSignal, TimeGrid};
use crate::solver::{self, BvpSolution, ProblemSpec, Tolerances};
use crate::variational;

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub source: SourceSignal,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Generic {
        f: Vec<String>,
        h: Vec<String>,
        #[serde(default)]
        constants: BTreeMap<String, f64>,
    },
    Linear {
        a: Rows,
        b: Rows,
        c: Rows,
        d: Rows,
    },
    PortHamiltonianLinear {
        j: Rows,
        r: Rows,
        q: Rows,
        b: Rows,
        d: Rows,
    },
    GradientLinear {
        g: Rows,
        p: Rows,
        c: Rows,
        d: Rows,
    },
    PortHamiltonianNonlinear {
        j: Rows,
        r: Rows,
        b: Rows,
        d: Rows,
        hamiltonian: String,
        #[serde(default)]
        constants: BTreeMap<String, f64>,
    },
    GradientNonlinear {
        g: Rows,
        potential: String,
        inputs: usize,
        #[serde(default)]
        constants: BTreeMap<String, f64>,
    },
    Static {
        h: Vec<String>,
        #[serde(default)]
        constants: BTreeMap<String, f64>,
    },
}

fn default_steps() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub x0: Vec<f64>,
    pub horizon: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    pub shooting: f64,
    pub newton: f64,
    pub max_shooting_iterations: usize,
    pub max_newton_iterations: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        let t = Tolerances::default();
        Self {
            shooting: t.shooting,
            newton: t.newton,
            max_shooting_iterations: t.max_shooting_iterations,
            max_newton_iterations: t.max_newton_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub trajectory: String,
    pub summary: String,
    pub verify: String,
    pub oracle_trajectory: String,
    pub oracle_summary: String,
    pub load: String,
    pub load_summary: String,
    pub simulation: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            trajectory: "trajectory.csv".into(),
            summary: "summary.json".into(),
            verify: "verify.json".into(),
            oracle_trajectory: "oracle_trajectory.csv".into(),
            oracle_summary: "oracle.json".into(),
            load: "load.csv".into(),
            load_summary: "load.json".into(),
            simulation: "simulation.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub trials: usize,
    pub magnitude: f64,
    pub first_order_tolerance: f64,
    pub margin_tolerance: f64,
    pub duality_tolerance: f64,
    pub structure_tolerance: f64,
    pub load_tolerance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            magnitude: 0.1,
            first_order_tolerance: 1e-6,
            margin_tolerance: 1e-8,
            duality_tolerance: 1e-6,
            structure_tolerance: 1e-6,
            load_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub iterations: usize,
    /// Grid for the oracle; defaults to the problem grid.
    pub steps: Option<usize>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            iterations: OracleSettings::default().max_iterations,
            steps: None,
        }
    }
}

/// The system in generic form plus its structured description, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltSystem {
    pub kind: &'static str,
    pub generic: GenericSystem,
    pub structured: Option<StructuredSystem>,
}

fn matrix(rows: &Rows, what: &str) -> crate::Result<linalg::Mat> {
    linalg::from_rows(rows, what)
}

impl SystemConfig {
    pub fn build(&self) -> crate::Result<BuiltSystem> {
        let structured = match self {
            SystemConfig::Generic { f, h, constants } => {
                let f: Vec<&str> = f.iter().map(String::as_str).collect();
                let h: Vec<&str> = h.iter().map(String::as_str).collect();
                return Ok(BuiltSystem {
                    kind: "generic",
                    generic: GenericSystem::parse(&f, &h, constants)?,
                    structured: None,
                });
            }
            SystemConfig::Linear { a, b, c, d } => StructuredSystem::Linear(LinearSystem::new(
                matrix(a, "a")?,
                matrix(b, "b")?,
                matrix(c, "c")?,
                matrix(d, "d")?,
            )?),
            SystemConfig::PortHamiltonianLinear { j, r, q, b, d } => {
                StructuredSystem::PortHamiltonianLinear(PortHamiltonianLinear::new(
                    matrix(j, "j")?,
                    matrix(r, "r")?,
                    matrix(q, "q")?,
                    matrix(b, "b")?,
                    matrix(d, "d")?,
                )?)
            }
            SystemConfig::GradientLinear { g, p, c, d } => {
                StructuredSystem::GradientLinear(GradientLinear::new(
                    matrix(g, "g")?,
                    matrix(p, "p")?,
                    matrix(c, "c")?,
                    matrix(d, "d")?,
                )?)
            }
            SystemConfig::PortHamiltonianNonlinear {
                j,
                r,
                b,
                d,
                hamiltonian,
                constants,
            } => {
                let j = matrix(j, "j")?;
                let d = matrix(d, "d")?;
                let h = Expr::parse(hamiltonian, j.nrows(), d.nrows(), constants)?;
                StructuredSystem::PortHamiltonianNonlinear(PortHamiltonianNonlinear::new(
                    j,
                    matrix(r, "r")?,
                    matrix(b, "b")?,
                    d,
                    h,
                )?)
            }
            SystemConfig::GradientNonlinear {
                g,
                potential,
                inputs,
                constants,
            } => {
                let g = matrix(g, "g")?;
                let v = Expr::parse(potential, g.nrows(), *inputs, constants)?;
                StructuredSystem::GradientNonlinear(GradientNonlinear::new(g, v)?)
            }
            SystemConfig::Static { h, constants } => {
                let h: Vec<&str> = h.iter().map(String::as_str).collect();
                StructuredSystem::Static(StaticNonlinearity::parse(&h, constants)?)
            }
        };
        Ok(BuiltSystem {
            kind: structured.kind(),
            generic: structured.to_generic()?,
            structured: Some(structured),
        })
    }
}

// ---------------------------------------------------------------------------
// errors

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(Error),
    Budget(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) | CliError::Budget(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn category(&self) -> String {
        match self {
            CliError::Config(_) => "config".into(),
            CliError::Solver(e) => format!("solver.{}", e.category()),
            CliError::Budget(_) => "solver.budget_exhausted".into(),
            CliError::Io(_) => "io".into(),
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Config(m) | CliError::Budget(m) | CliError::Io(m) => m.clone(),
            CliError::Solver(e) => e.to_string(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "category": self.category(), "message": self.message(), "exit_code": self.exit_code() })
    }
}

fn solver_err(e: Error) -> CliError {
    CliError::Solver(e)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// command line

#[derive(Debug, Parser)]
#[command(
    name = "optimal-load",
    version,
    about = "Energy-extracting inputs and optimal loads for state-space systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the boundary value problem and write the trajectory and summary.
    Solve(CommonArgs),
    /// Solve, then run every optimality and structure check.
    Verify(CommonArgs),
    /// Minimize the power functional by gradient descent and compare with a previous solve.
    Oracle(CommonArgs),
    /// Solve and write the optimal load signal and its structured realization.
    Load(CommonArgs),
    /// Forward-simulate the system under an input read from CSV.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// CSV with columns t, u0, ..., on a uniform grid starting at 0.
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Run configuration (JSON), or a directory of them.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory receiving all outputs.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Overrides problem.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides problem.steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Write CSV values with 17 significant digits instead of 12.
    #[arg(long)]
    pub full_precision: bool,
    /// Parallel runs when --config is a directory.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Solve(c) | Command::Verify(c) | Command::Oracle(c) | Command::Load(c) => c,
            Command::Simulate { common, .. } => common,
        }
    }
}

/// Parses a configuration, reporting the JSON path of the offending field.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner()))
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_config(&text)
}

/// Configuration with command-line overrides applied and the system built.
pub struct Prepared {
    pub config: RunConfig,
    pub system: BuiltSystem,
    pub spec: ProblemSpec,
    pub seed: u64,
}

pub fn prepare(
    mut config: RunConfig,
    seed: Option<u64>,
    steps: Option<usize>,
) -> Result<Prepared, CliError> {
    if let Some(s) = seed {
        config.problem.seed = s;
    }
    if let Some(n) = steps {
        config.problem.steps = n;
    }
    let system = config
        .system
        .build()
        .map_err(|e| CliError::Config(format!("system: {e}")))?;
    let t = &config.problem.tolerances;
    let spec = ProblemSpec::new(
        system.generic.clone(),
        config.source.clone(),
        Vector::from_column_slice(&config.problem.x0),
        config.problem.horizon,
        config.problem.steps,
    )
    .map_err(|e| CliError::Config(format!("problem: {e}")))?
    .with_tolerances(Tolerances {
        shooting: t.shooting,
        newton: t.newton,
        max_shooting_iterations: t.max_shooting_iterations,
        max_newton_iterations: t.max_newton_iterations,
        ..Tolerances::default()
    });
    let seed = config.problem.seed;
    Ok(Prepared {
        config,
        system,
        spec,
        seed,
    })
}

// ---------------------------------------------------------------------------
// output helpers

/// Formats a value for CSV output.
pub fn fmt_value(v: f64, full_precision: bool) -> String {
    if full_precision || !v.is_finite() {
        return format!("{v:?}");
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    format!("{rounded:?}")
}

struct Csv {
    text: String,
    full: bool,
}

impl Csv {
    fn new(header: &[String], full: bool) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text, full }
    }

    fn row(&mut self, values: impl IntoIterator<Item = f64>) {
        let cells: Vec<String> = values
            .into_iter()
            .map(|v| fmt_value(v, self.full))
            .collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }
}

fn names(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (0..count).map(move |i| format!("{prefix}{i}"))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    write_file(dir, name, &text)
}

fn to_vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

// ---------------------------------------------------------------------------
// runs

/// Solution plus load signal, shared by several subcommands.
pub struct Solved {
    pub sol: BvpSolution,
    pub y_load: Vec<Vector>,
    pub load_consistency: f64,
    pub first_order_residual: f64,
}

pub fn solve(p: &Prepared) -> Result<Solved, CliError> {
    let sol = solver::solve_optimal_input(&p.spec).map_err(solver_err)?;
    let load = loads::load_from_solution(&p.spec, &sol).map_err(solver_err)?;
    let first_order_residual = solver::residual_first_order(&p.spec, &sol);
    Ok(Solved {
        sol,
        y_load: load.y_load,
        load_consistency: load.consistency,
        first_order_residual,
    })
}

fn trajectory_csv(p: &Prepared, s: &Solved, full: bool) -> String {
    let (n, m) = (p.spec.sys.state_dim(), p.spec.sys.input_dim());
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(names("x", n))
        .chain(names("p", n))
        .chain(names("u", m))
        .chain(names("y", m))
        .chain(names("yplus", m))
        .chain(names("yS", m))
        .chain(names("yL", m))
        .collect();
    let mut csv = Csv::new(&header, full);
    let tr = &s.sol.traj;
    for k in 0..tr.len() {
        let t = tr.grid.time(k);
        let ys = p.spec.source.eval(t);
        csv.row(
            std::iter::once(t)
                .chain(tr.x[k].iter().copied())
                .chain(tr.p[k].iter().copied())
                .chain(tr.u[k].iter().copied())
                .chain(tr.y[k].iter().copied())
                .chain(tr.yplus[k].iter().copied())
                .chain(ys.iter().copied())
                .chain(s.y_load[k].iter().copied()),
        );
    }
    csv.text
}

fn passivity_status(system: &BuiltSystem) -> Result<PassivityStatus, CliError> {
    match system.generic.linear() {
        Some(lin) => Ok(PassivityStatus::Certified(
            power::passivity_of(lin).map_err(solver_err)?,
        )),
        None => Ok(PassivityStatus::EmpiricalOnly),
    }
}

fn summary_json(p: &Prepared, s: &Solved, passivity: &PassivityStatus) -> serde_json::Value {
    let sol = &s.sol;
    json!({
        "system": p.system.kind,
        "state_dim": p.spec.sys.state_dim(),
        "input_dim": p.spec.sys.input_dim(),
        "horizon": p.spec.horizon(),
        "steps": p.spec.steps(),
        "seed": p.seed,
        "extracted_energy": sol.extracted_energy,
        "power": -sol.extracted_energy,
        "shooting_residual": sol.shooting_residual,
        "first_order_residual": s.first_order_residual,
        "load_consistency": s.load_consistency,
        "p0": to_vec(&sol.p0),
        "shooting_iterations": sol.shooting_iterations,
        "newton_iterations": sol.newton_iterations,
        "certificates": { "passivity": passivity },
    })
}

pub fn run_solve(p: &Prepared, out: &Path, full: bool) -> Result<i32, CliError> {
    let s = solve(p)?;
    let passivity = passivity_status(&p.system)?;
    let o = &p.config.outputs;
    write_file(out, &o.trajectory, &trajectory_csv(p, &s, full))?;
    write_json(out, &o.summary, &summary_json(p, &s, &passivity))?;
    println!(
        "extracted energy {}  shooting residual {:.3e}  first-order residual {:.3e}",
        fmt_value(s.sol.extracted_energy, false),
        s.sol.shooting_residual,
        s.first_order_residual
    );
    Ok(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    EmpiricalOnly,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: String,
}

fn bounded(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        status: if value <= tolerance {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        value: Some(value),
        tolerance: Some(tolerance),
        detail: detail.into(),
    }
}

/// Runs the certificate suite on a solved problem.
pub fn verification_checks(
    p: &Prepared,
    s: &Solved,
) -> Result<(Vec<Check>, serde_json::Value), CliError> {
    let v = &p.config.verify;
    let sys = &p.spec.sys;
    let u_hat = s.sol.traj.input();
    let mut checks = vec![bounded(
        "first_order_residual",
        s.first_order_residual,
        v.first_order_tolerance,
        "max |y+ - y_S| on the grid",
    )];

    let report = power::perturbation_test(
        sys,
        &p.spec.source,
        &p.spec.x0,
        &u_hat,
        v.trials.max(1),
        v.magnitude,
        p.seed,
    )
    .map_err(solver_err)?;
    checks.push(Check {
        name: "perturbation_margin".into(),
        status: if report.perturbation_margin >= -v.margin_tolerance {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        value: Some(report.perturbation_margin),
        tolerance: Some(-v.margin_tolerance),
        detail: format!(
            "min P(u+du) - P(u) over {} trials, worst trial {}",
            report.trials, report.worst_trial
        ),
    });

    checks.push(match &report.passivity_certificate {
        PassivityStatus::Certified(cert) => Check {
            name: "passivity".into(),
            status: match cert.verdict {
                Verdict::PositiveReal => CheckStatus::Pass,
                Verdict::NotPositiveReal => CheckStatus::Fail,
                Verdict::NotApplicable => CheckStatus::NotApplicable,
            },
            value: None,
            tolerance: None,
            detail: format!("{:?}; {}", cert.verdict, cert.notes.join("; ")),
        },
        PassivityStatus::EmpiricalOnly => Check {
            name: "passivity".into(),
            status: CheckStatus::EmpiricalOnly,
            value: None,
            tolerance: None,
            detail: "nonlinear system: minimality supported by the perturbation test only".into(),
        },
    });

    let du = power::perturbation(u_hat.grid, u_hat.dim(), v.magnitude, p.seed, 1);
    let duality =
        variational::duality_residual(sys, &s.sol.traj, &du, &u_hat).map_err(solver_err)?;
    checks.push(bounded(
        "duality_residual",
        duality,
        v.duality_tolerance,
        "|int y_a du - int u_a dy - [p dx]| with u_a = u",
    ));

    checks.push(bounded(
        "load_consistency",
        s.load_consistency,
        v.load_tolerance,
        "max |y_S - y - y_L| on the grid",
    ));

    let mut structure: Option<StructureReport> = None;
    if let Some(st) = &p.system.structured {
        match loads::verify_structure(st, &s.sol.traj) {
            Ok(rep) => {
                checks.push(bounded(
                    "structure_discrepancy",
                    rep.discrepancy,
                    v.structure_tolerance,
                    format!("{} load against the generic adjoint", rep.kind),
                ));
                checks.push(Check {
                    name: "structure_matrices".into(),
                    status: if rep.structure_ok {
                        CheckStatus::Pass
                    } else {
                        CheckStatus::Fail
                    },
                    value: None,
                    tolerance: None,
                    detail: "skew/symmetric/PSD structure of the load".into(),
                });
                structure = Some(rep);
            }
            Err(Error::Unsupported(_)) => {}
            Err(e) => return Err(solver_err(e)),
        }
    }
    let extra = json!({ "optimality": report, "structure": structure });
    Ok((checks, extra))
}

pub fn run_verify(p: &Prepared, out: &Path) -> Result<i32, CliError> {
    let s = solve(p)?;
    let (checks, extra) = verification_checks(p, &s)?;
    let failed = checks.iter().any(|c| c.status == CheckStatus::Fail);
    for c in &checks {
        let tag = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::EmpiricalOnly => "EMPIRICAL",
            CheckStatus::NotApplicable => "N/A",
        };
        match c.value {
            Some(v) => println!("{tag:<9} {:<22} {v:.3e}  {}", c.name, c.detail),
            None => println!("{tag:<9} {:<22} {}", c.name, c.detail),
        }
    }
    let doc = json!({
        "system": p.system.kind,
        "seed": p.seed,
        "passed": !failed,
        "checks": checks,
        "details": extra,
    });
    write_json(out, &p.config.outputs.verify, &doc)?;
    Ok(if failed { 1 } else { 0 })
}

/// Reads the `u` columns of a trajectory CSV written by `solve`.
fn read_solved_input(path: &Path, m: usize) -> Result<Option<(Vec<f64>, Vec<Vector>)>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let cols: Vec<usize> = (0..m)
        .map(|i| header.iter().position(|h| *h == format!("u{i}")))
        .collect::<Option<_>>()
        .ok_or_else(|| CliError::Io(format!("{}: missing u columns", path.display())))?;
    let mut ts = Vec::new();
    let mut us = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        ts.push(cells[0]);
        us.push(Vector::from_fn(m, |i, _| cells[cols[i]]));
    }
    Ok(Some((ts, us)))
}

fn lerp_samples(ts: &[f64], us: &[Vector], t: f64) -> Vector {
    let k = ts.partition_point(|s| *s <= t).clamp(1, ts.len() - 1);
    let (t0, t1) = (ts[k - 1], ts[k]);
    let theta = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
    &us[k - 1] + (&us[k] - &us[k - 1]) * theta
}

pub fn run_oracle(p: &Prepared, out: &Path, full: bool) -> Result<i32, CliError> {
    let grid = TimeGrid::new(
        p.spec.horizon(),
        p.config.oracle.steps.unwrap_or(p.spec.steps()),
    )
    .map_err(|e| CliError::Config(format!("oracle: {e}")))?;
    let settings = OracleSettings {
        max_iterations: p.config.oracle.iterations,
        ..OracleSettings::default()
    };
    let res = power::oracle_minimize(&p.spec.sys, &p.spec.source, &p.spec.x0, grid, settings)
        .map_err(solver_err)?;

    let m = p.spec.sys.input_dim();
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(names("u", m))
        .collect();
    let mut csv = Csv::new(&header, full);
    for (k, u) in res.u.values.iter().enumerate() {
        csv.row(std::iter::once(grid.time(k)).chain(u.iter().copied()));
    }
    let o = &p.config.outputs;
    write_file(out, &o.oracle_trajectory, &csv.text)?;

    let mut doc = json!({
        "system": p.system.kind,
        "status": res.status,
        "power": res.power,
        "extracted_energy": -res.power,
        "iterations": res.iterations,
        "gradient_norm": res.gradient_norm,
    });
    let summary_path = out.join(&o.summary);
    if let (Some((ts, us)), true) = (
        read_solved_input(&out.join(&o.trajectory), m)?,
        summary_path.exists(),
    ) {
        let text = fs::read_to_string(&summary_path).map_err(|e| io_err(&summary_path, e))?;
        let summary: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Io(format!("{}: {e}", summary_path.display())))?;
        let solved = GridSignal::sample(grid, |t| lerp_samples(&ts, &us, t));
        let diff = solved.zip_with(&res.u, |a, b| a - b);
        let mut cmp = json!({ "l2_distance": diff.l2_norm() });
        if let Some(p_solve) = summary.get("power").and_then(serde_json::Value::as_f64) {
            cmp["power_difference"] = json!((res.power - p_solve).abs());
        }
        doc["comparison"] = cmp;
    }
    write_json(out, &o.oracle_summary, &doc)?;
    println!(
        "oracle {:?} after {} iterations: P = {}",
        res.status,
        res.iterations,
        fmt_value(res.power, false)
    );
    if res.status == OracleStatus::BudgetExhausted {
        return Err(CliError::Budget(format!(
            "iteration budget of {} exhausted with gradient norm {:.3e}; best input written",
            settings.max_iterations, res.gradient_norm
        )));
    }
    Ok(0)
}

fn structured_json(p: &Prepared, s: &Solved) -> Result<serde_json::Value, CliError> {
    let Some(st) = &p.system.structured else {
        return Ok(serde_json::Value::Null);
    };
    let load = match loads::structured_adjoint(st, Some(&s.sol.traj)) {
        Ok(l) => l,
        Err(Error::Unsupported(_)) => return Ok(serde_json::Value::Null),
        Err(e) => return Err(solver_err(e)),
    };
    let rows = linalg::to_rows;
    let matrices = match &load {
        loads::StructuredLoad::PortHamiltonianLinear(ph) => json!({
            "j": rows(&ph.j), "r": rows(&ph.r), "q": rows(&ph.q), "b": rows(&ph.b), "d": rows(&ph.d),
            "coordinates": "p = -q z",
        }),
        loads::StructuredLoad::GradientLinear(gr) => json!({
            "g": rows(&gr.g), "p": rows(&gr.p_grad), "c": rows(&gr.c), "d": rows(&gr.d),
            "coordinates": "p = -g z",
        }),
        loads::StructuredLoad::PortHamiltonianNonlinear { j, r, b, d, .. } => json!({
            "j": rows(j), "r": rows(r), "b": rows(b), "d": rows(d),
            "hamiltonian": "-1/2 z' Hess H(x(t)) z",
            "coordinates": "p = Hess H(x(t)) z",
        }),
        loads::StructuredLoad::GradientNonlinear { g, .. } => json!({
            "g": rows(g),
            "potential": "1/2 [z; u_a]' Hess V(x(t), u(t)) [z; u_a]",
            "coordinates": "p = -g z",
        }),
    };
    let report = loads::verify_structure(st, &s.sol.traj).map_err(solver_err)?;
    Ok(json!({
        "kind": load.kind(),
        "trajectory_dependent": load.is_trajectory_dependent(),
        "matrices": matrices,
        "verification": report,
    }))
}

pub fn run_load(p: &Prepared, out: &Path, full: bool) -> Result<i32, CliError> {
    let s = solve(p)?;
    let m = p.spec.sys.input_dim();
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(names("u", m))
        .chain(names("yL", m))
        .collect();
    let mut csv = Csv::new(&header, full);
    for k in 0..s.sol.traj.len() {
        csv.row(
            std::iter::once(s.sol.traj.grid.time(k))
                .chain(s.sol.traj.u[k].iter().copied())
                .chain(s.y_load[k].iter().copied()),
        );
    }
    let o = &p.config.outputs;
    write_file(out, &o.load, &csv.text)?;
    let doc = json!({
        "system": p.system.kind,
        "load_consistency": s.load_consistency,
        "extracted_energy": s.sol.extracted_energy,
        "structured": structured_json(p, &s)?,
    });
    write_json(out, &o.load_summary, &doc)?;
    println!("load written; consistency {:.3e}", s.load_consistency);
    Ok(0)
}

/// Reads an input CSV (`t, u0, …`) sampled on a uniform grid starting at 0.
pub fn read_input_csv(path: &Path, m: usize) -> Result<GridSignal, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .split(',')
        .collect();
    if header.len() != m + 1 || header[0].trim() != "t" {
        return Err(bad(format!(
            "expected header t,u0..u{}",
            m.saturating_sub(1)
        )));
    }
    let mut ts = Vec::new();
    let mut us = Vec::new();
    for (row, line) in lines.enumerate() {
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("row {}: {e}", row + 2)))?;
        if cells.len() != m + 1 {
            return Err(bad(format!("row {} has {} cells", row + 2, cells.len())));
        }
        ts.push(cells[0]);
        us.push(Vector::from_column_slice(&cells[1..]));
    }
    if ts.len() < 2 || ts[0] != 0.0 {
        return Err(bad("need at least two samples starting at t = 0".into()));
    }
    let steps = ts.len() - 1;
    let grid = TimeGrid::new(ts[steps], steps).map_err(|e| bad(e.to_string()))?;
    let h = grid.step();
    if ts
        .iter()
        .enumerate()
        .any(|(k, t)| (t - grid.time(k)).abs() > 1e-9 * h.max(1.0))
    {
        return Err(bad("sample times must be uniformly spaced".into()));
    }
    GridSignal::new(grid, us).map_err(|e| bad(e.to_string()))
}

pub fn run_simulate(p: &Prepared, input: &Path, out: &Path, full: bool) -> Result<i32, CliError> {
    let (n, m) = (p.spec.sys.state_dim(), p.spec.sys.input_dim());
    let u = read_input_csv(input, m)?;
    let (xs, ys) = ode::simulate(&p.spec.sys, &p.spec.x0, &u).map_err(solver_err)?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(names("x", n))
        .chain(names("u", m))
        .chain(names("y", m))
        .collect();
    let mut csv = Csv::new(&header, full);
    for k in 0..u.grid.len() {
        csv.row(
            std::iter::once(u.grid.time(k))
                .chain(xs[k].iter().copied())
                .chain(u.values[k].iter().copied())
                .chain(ys[k].iter().copied()),
        );
    }
    write_file(out, &p.config.outputs.simulation, &csv.text)?;
    let power =
        power::power_functional(&p.spec.sys, &p.spec.source, &p.spec.x0, &u).map_err(solver_err)?;
    println!(
        "simulated {} steps; P = {}",
        u.grid.steps,
        fmt_value(power, false)
    );
    Ok(0)
}

/// Runs one subcommand on one configuration file.
pub fn run_one(command: &Command, config: &Path, out: &Path) -> Result<i32, CliError> {
    let common = command.common();
    let p = prepare(load_config(config)?, common.seed, common.steps)?;
    let full = common.full_precision;
    match command {
        Command::Solve(_) => run_solve(&p, out, full),
        Command::Verify(_) => run_verify(&p, out),
        Command::Oracle(_) => run_oracle(&p, out, full),
        Command::Load(_) => run_load(&p, out, full),
        Command::Simulate { input, .. } => run_simulate(&p, input, out, full),
    }
}

fn report(result: Result<i32, CliError>) -> i32 {
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

/// Entry point; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let common = cli.command.common().clone();
    if !common.config.is_dir() {
        return report(run_one(&cli.command, &common.config, &common.out_dir));
    }
    let mut configs: Vec<PathBuf> = match fs::read_dir(&common.config) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(e) => return report(Err(io_err(&common.config, e))),
    };
    configs.sort();
    let next = AtomicUsize::new(0);
    let codes = Mutex::new(vec![0; configs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..common.jobs.max(1).min(configs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = configs.get(i) else { break };
                let stem = cfg.file_stem().unwrap_or_default();
                let code = report(run_one(&cli.command, cfg, &common.out_dir.join(stem)));
                codes.lock().expect("no panics while holding the lock")[i] = code;
            });
        }
    });
    let codes = codes.into_inner().expect("threads joined");
    let mut summary = String::new();
    for (cfg, code) in configs.iter().zip(&codes) {
        let _ = writeln!(summary, "{code} {}", cfg.display());
    }
    print!("{summary}");
    codes.into_iter().max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RC: &str = r#"{
        "system": {"type": "generic", "f": ["u0/C"], "h": ["x0/C + R*u0"], "constants": {"C": 1, "R": 1}},
        "source": {"type": "constant", "value": [1.0]},
        "problem": {"x0": [0.0], "horizon": 1.0, "steps": 100}
    }"#;

    #[test]
    fn config_errors_carry_field_path() {
        let bad = RC.replace("\"horizon\": 1.0", "\"horizon\": \"one\"");
        let CliError::Config(msg) = parse_config(&bad).unwrap_err() else {
            panic!("expected config error");
        };
        assert!(msg.starts_with("problem.horizon"), "{msg}");
        let unknown = RC.replace("\"steps\": 100", "\"stepz\": 100");
        let err = parse_config(&unknown).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.message().contains("stepz"));
    }

    #[test]
    fn semantic_errors_are_config_errors() {
        let bad = RC.replace("\"x0\": [0.0]", "\"x0\": [0.0, 1.0]");
        let err = prepare(parse_config(&bad).unwrap(), None, None)
            .err()
            .unwrap();
        assert_eq!(err.exit_code(), 2);
        assert!(err.message().starts_with("problem:"));
        let bad = RC.replace("x0/C", "x0/K");
        let err = prepare(parse_config(&bad).unwrap(), None, None)
            .err()
            .unwrap();
        assert!(err.message().contains("K"), "{}", err.message());
    }

    #[test]
    fn overrides_apply() {
        let p = prepare(parse_config(RC).unwrap(), Some(9), Some(40)).unwrap();
        assert_eq!((p.seed, p.spec.steps()), (9, 40));
    }

    #[test]
    fn csv_precision() {
        assert_eq!(fmt_value(1.0 / 3.0, false), "0.333333333333");
        assert_eq!(fmt_value(1.0 / 3.0, true), "0.3333333333333333");
        assert_eq!(fmt_value(0.5, false), "0.5");
        assert_eq!(fmt_value(-2.5e-17, false), "-2.5e-17");
    }

    #[test]
    fn solver_errors_map_to_exit_three() {
        let e = CliError::Solver(Error::SingularHessian {
            condition: f64::INFINITY,
            t: Some(0.0),
        });
        assert_eq!(e.exit_code(), 3);
        assert_eq!(e.to_json()["category"], "solver.singular_hessian");
    }
}
