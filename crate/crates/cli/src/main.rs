//! Command-line front end for the solver library: validate instances,
//! evaluate and minimize risk functionals of the leader's random outcome,
//! emit single-level reformulations, check and optimize under stochastic
//! dominance constraints, run the resampling study, and reproduce the
//! reference-instance report.
//!
//! Exit codes: 0 success, 1 infeasible / no solution, 2 input error,
//! 3 numerical failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use bslp_core::analysis::{
    counterexample_escaping_mass, oracle_e1, oracle_e1_min_on, stability_csv,
    stability_experiment, StabilityConfig,
};
use bslp_core::dominance::{solve_dominance, DominanceMethod};
use bslp_core::lower::{eval_outcomes_detail, induced_polyhedron, LowerError};
use bslp_core::lp::{check_dom_f, gordan_complete_recourse, DomF, DomFailure, RecourseTest};
use bslp_core::model::{BenchmarkSpec, ModelError};
use bslp_core::reformulate::{
    build_excess_prob_form, build_table1, kkt_reformulate, ReformulateError, Table1,
};
use bslp_core::risk::{q_risk, RiskError};
use bslp_core::solve::{
    solve_eps_path, solve_risk_model, Method, SolveError, SolveOptions, SolveStatus,
};
use bslp_core::{BilevelStochasticProblem, RiskSpec};

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "bslp",
    version,
    about = "Bilevel stochastic linear programs over finite scenario laws"
)]
struct Cli {
    /// Thread budget for internal parallelism (1 keeps runs reproducible).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Write the main payload to this file instead of standard output.
    #[arg(long, global = true, value_name = "path")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate an instance: finiteness of the objective, recourse
    /// completeness, and the induced leader domain
    Check {
        /// Instance file (JSON)
        input: PathBuf,
    },
    /// Evaluate the leader objective at a point or along a grid
    Evaluate {
        /// Instance file (JSON)
        input: PathBuf,
        /// Risk functional, `kind[:params]` (see `--spec help`)
        #[arg(long, default_value = "expectation")]
        spec: String,
        /// Evaluation point `x1,x2,...` (JSON report)
        #[arg(long, value_name = "x1,x2,...", allow_hyphen_values = true)]
        at: Option<String>,
        /// One-dimensional sweep `lo:hi:step` (CSV report)
        #[arg(long, value_name = "lo:hi:step")]
        grid: Option<String>,
    },
    /// Minimize the risk functional over the leader set
    Solve {
        /// Instance file (JSON)
        input: PathBuf,
        /// Risk functional, `kind[:params]` (see `--spec help`)
        #[arg(long, default_value = "expectation")]
        spec: String,
        /// Engine: `reformulate` (certified global) or `grid`
        #[arg(long, default_value = "reformulate")]
        method: String,
        /// Solver tolerance override
        #[arg(long)]
        tol: Option<f64>,
        /// Decreasing complementarity relaxations `e1,e2,...`; runs the
        /// relaxation path on the single-level form instead of the
        /// branch-and-bound engine
        #[arg(long, value_name = "e1,e2,...")]
        eps_schedule: Option<String>,
    },
    /// Emit the single-level equivalent and its complementarity system
    Reformulate {
        /// Instance file (JSON)
        input: PathBuf,
        /// Risk functional, `kind[:params]` (see `--spec help`)
        #[arg(long, default_value = "expectation")]
        spec: String,
        /// Complementarity relaxation recorded in the emitted system
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
    },
    /// Feasibility or linear optimization under a dominance constraint
    Dominance {
        /// Instance file (JSON)
        input: PathBuf,
        /// Benchmark file: `{"order": "first"|"second", "atoms": [...],
        /// "probs": [...]}`
        #[arg(long, value_name = "path")]
        bench: PathBuf,
        /// Linear objective over x, `c1,c2,...`; omitted = feasibility probe
        #[arg(long, value_name = "c1,c2,...", allow_hyphen_values = true)]
        objective: Option<String>,
        /// Engine: `bigm` (certified global) or `grid`
        #[arg(long, default_value = "bigm")]
        method: String,
        /// Solver tolerance override
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Resampling study of the reference instance (CSV)
    Stability {
        /// Sample sizes, comma separated
        #[arg(long, default_value = "100,1000,10000")]
        sizes: String,
        /// Replications per sample size
        #[arg(long, default_value_t = 20)]
        reps: usize,
        /// Base seed for the replication streams
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Reproduce the reference-instance numbers and the escaping-mass table
    ExampleE1,
}

// ---------------------------------------------------------------------------
// Error-to-exit-code mapping
// ---------------------------------------------------------------------------

enum CliError {
    /// Malformed input, unsupported combination, unreadable path (exit 2).
    Input(String),
    /// The model admits no solution / no finite value (exit 1).
    NoSolution(String),
    /// Numerical failure inside an engine (exit 3).
    Numeric(String),
}

impl CliError {
    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::NoSolution(m) | CliError::Numeric(m) => m,
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::NoSolution(_) => 1,
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<LowerError> for CliError {
    fn from(e: LowerError) -> Self {
        match e {
            LowerError::Infeasible { .. }
            | LowerError::FollowerUnbounded { .. }
            | LowerError::UnboundedSelection { .. } => CliError::NoSolution(e.to_string()),
            LowerError::SizeLimit { .. } | LowerError::Lp(_) => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<RiskError> for CliError {
    fn from(e: RiskError) -> Self {
        match e {
            RiskError::Spec(m) => CliError::Input(m.to_string()),
            RiskError::NotScalar { .. } => CliError::Input(e.to_string()),
            RiskError::EntropicOverflow { .. } => CliError::Numeric(e.to_string()),
            RiskError::Lower(l) => l.into(),
        }
    }
}

impl From<ReformulateError> for CliError {
    fn from(e: ReformulateError) -> Self {
        match e {
            ReformulateError::Unsupported { .. } | ReformulateError::Pessimistic => {
                CliError::Input(e.to_string())
            }
            ReformulateError::UnboundedValues { .. } => CliError::NoSolution(e.to_string()),
            ReformulateError::Lp(_) => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Reformulate(r) => r.into(),
            SolveError::Risk(r) => r.into(),
            SolveError::Lower(l) => l.into(),
            SolveError::Lp(l) => CliError::Numeric(l.to_string()),
            SolveError::UnboundedLeaderSet { .. } => CliError::NoSolution(e.to_string()),
            SolveError::BinariesInEpsPath => CliError::Input(e.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// Flag parsing helpers
// ---------------------------------------------------------------------------

fn parse_f64(text: &str, what: &str) -> Result<f64, CliError> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Input(format!("cannot parse {what} `{text}` as a number")))
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',').map(|t| parse_f64(t, what)).collect()
}

/// Risk functional syntax: `kind[:param[:param]]` —
/// `expectation`, `expected-excess:eta[:p]`, `semidev:rho[:p]`,
/// `excess-prob:eta`, `var:alpha`, `cvar:alpha`, `entropic:alpha`,
/// `worst-case`, `mean-risk:rho:<inner spec>`.
fn parse_spec(text: &str) -> Result<RiskSpec, CliError> {
    let (kind, rest) = match text.split_once(':') {
        Some((k, r)) => (k, Some(r)),
        None => (text, None),
    };
    let no_params = |spec: RiskSpec| match rest {
        None => Ok(spec),
        Some(_) => Err(CliError::Input(format!("`{kind}` takes no parameters"))),
    };
    let params = || -> Result<Vec<f64>, CliError> {
        let r = rest
            .ok_or_else(|| CliError::Input(format!("`{kind}` needs parameters, e.g. `{kind}:0.5`")))?;
        parse_f64_list(r, "risk parameter")
    };
    let one = || -> Result<f64, CliError> {
        let p = params()?;
        if p.len() == 1 {
            Ok(p[0])
        } else {
            Err(CliError::Input(format!("`{kind}` takes exactly one parameter")))
        }
    };
    let one_or_two = |default_second: f64| -> Result<(f64, f64), CliError> {
        let p = params()?;
        match p.len() {
            1 => Ok((p[0], default_second)),
            2 => Ok((p[0], p[1])),
            _ => Err(CliError::Input(format!("`{kind}` takes one or two parameters"))),
        }
    };

    let spec = match kind {
        "expectation" | "mean" => no_params(RiskSpec::Expectation)?,
        "worst-case" | "max" => no_params(RiskSpec::WorstCase)?,
        "expected-excess" => {
            let (eta, p) = one_or_two(1.0)?;
            RiskSpec::ExpectedExcess { eta, p }
        }
        "semidev" => {
            let (rho, p) = one_or_two(1.0)?;
            RiskSpec::MeanUpperSemiDeviation { rho, p }
        }
        "excess-prob" => RiskSpec::ExcessProbability { eta: one()? },
        "var" => RiskSpec::ValueAtRisk { alpha: one()? },
        "cvar" => RiskSpec::ConditionalValueAtRisk { alpha: one()? },
        "entropic" => RiskSpec::Entropic { alpha: one()? },
        "mean-risk" => {
            let r = rest.ok_or_else(|| {
                CliError::Input("`mean-risk` needs `mean-risk:rho:<inner spec>`".into())
            })?;
            let (rho_text, inner_text) = r.split_once(':').ok_or_else(|| {
                CliError::Input("`mean-risk` needs `mean-risk:rho:<inner spec>`".into())
            })?;
            RiskSpec::MeanRisk {
                rho: parse_f64(rho_text, "mean-risk weight")?,
                inner: Box::new(parse_spec(inner_text)?),
            }
        }
        other => {
            return Err(CliError::Input(format!(
                "unknown risk functional `{other}` (expected expectation, expected-excess, \
                 semidev, excess-prob, var, cvar, entropic, worst-case, or mean-risk)"
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_method(text: &str) -> Result<Method, CliError> {
    match text {
        "reformulate" => Ok(Method::Reformulate),
        "grid" => Ok(Method::GridRefine),
        other => Err(CliError::Input(format!(
            "unknown method `{other}` (expected `reformulate` or `grid`)"
        ))),
    }
}

fn parse_dominance_method(text: &str) -> Result<DominanceMethod, CliError> {
    match text {
        "bigm" => Ok(DominanceMethod::BigM),
        "grid" => Ok(DominanceMethod::Grid),
        other => Err(CliError::Input(format!(
            "unknown method `{other}` (expected `bigm` or `grid`)"
        ))),
    }
}

/// `lo:hi:step` with `step > 0`; yields `lo, lo+step, ...` through `hi`
/// (the endpoint is included when it lands on the step lattice).
fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Input(format!("grid `{text}` is not of the form lo:hi:step")));
    }
    let lo = parse_f64(parts[0], "grid start")?;
    let hi = parse_f64(parts[1], "grid end")?;
    let step = parse_f64(parts[2], "grid step")?;
    if !(step > 0.0) {
        return Err(CliError::Input("grid step must be positive".into()));
    }
    if hi < lo {
        return Err(CliError::Input("grid end must not precede its start".into()));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| lo + step * i as f64).collect())
}

fn load_problem(path: &Path) -> Result<BilevelStochasticProblem, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(BilevelStochasticProblem::from_json(&text)?)
}

/// Write the main payload to `--out` if given, standard output otherwise.
fn emit(out: &Option<PathBuf>, payload: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, payload)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{payload}");
            Ok(())
        }
    }
}

fn report_exit(status: SolveStatus) -> ExitCode {
    match status {
        SolveStatus::Infeasible | SolveStatus::Unbounded => ExitCode::from(1),
        _ => ExitCode::SUCCESS,
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn run_check(out: &Option<PathBuf>, input: &Path) -> Result<ExitCode, CliError> {
    let p = load_problem(input)?;

    let dom = check_dom_f(&p).map_err(|e| CliError::Numeric(e.to_string()))?;
    let dom_json = match &dom {
        DomF::NonEmpty { x, z, dual_witness, value } => json!({
            "status": "non_empty",
            "x": x,
            "z": z,
            "dual_witness": dual_witness,
            "value": value,
        }),
        DomF::Empty(reason) => json!({
            "status": "empty",
            "reason": match reason {
                DomFailure::NoFeasiblePair =>
                    "no feasible leader/scenario pair admits a follower point",
                DomFailure::NoDualCertificate =>
                    "follower objective unbounded below (no dual certificate)",
                DomFailure::UnboundedSelection =>
                    "selection objective unbounded over the follower's optimal set",
            },
        }),
    };

    let recourse = gordan_complete_recourse(&p.a).map_err(|e| CliError::Numeric(e.to_string()))?;
    let recourse_json = match &recourse {
        RecourseTest::Complete => json!({ "status": "complete" }),
        RecourseTest::Incomplete { witness } => json!({
            "status": "incomplete",
            "witness": witness,
        }),
    };

    let induced_json = match induced_polyhedron(&p) {
        Ok(poly) => json!({ "rows": poly.num_rows() }),
        Err(e) => json!({ "error": e.to_string() }),
    };

    let payload = serde_json::to_string_pretty(&json!({
        "instance": {
            "n": p.n(),
            "m": p.m(),
            "s": p.s(),
            "scenarios": p.num_scenarios(),
        },
        "dom_f": dom_json,
        "recourse": recourse_json,
        "induced_set": induced_json,
    }))
    .expect("serializable")
        + "\n";
    emit(out, &payload)?;

    Ok(match dom {
        DomF::NonEmpty { .. } => ExitCode::SUCCESS,
        DomF::Empty(_) => ExitCode::from(1),
    })
}

fn run_evaluate(
    out: &Option<PathBuf>,
    input: &Path,
    spec_text: &str,
    at: Option<&str>,
    grid: Option<&str>,
) -> Result<ExitCode, CliError> {
    let p = load_problem(input)?;
    let spec = parse_spec(spec_text)?;

    match (at, grid) {
        (Some(point), None) => {
            let x = parse_f64_list(point, "coordinate")?;
            if x.len() != p.n() {
                return Err(CliError::Input(format!(
                    "point has {} coordinates, the instance has {}",
                    x.len(),
                    p.n()
                )));
            }
            let value = q_risk(&p, &spec, &x)?;
            let outcomes = eval_outcomes_detail(&p, &x)?;
            let payload = serde_json::to_string_pretty(&json!({
                "x": x,
                "spec": spec,
                "value": value,
                "outcomes": outcomes,
            }))
            .expect("serializable")
                + "\n";
            emit(out, &payload)?;
            Ok(ExitCode::SUCCESS)
        }
        (None, Some(grid_text)) => {
            if p.n() != 1 {
                return Err(CliError::Input(
                    "grid sweeps need a one-dimensional leader set; use --at".into(),
                ));
            }
            let points = parse_grid(grid_text)?;
            let mut csv = String::from("x,value\n");
            for x in &points {
                match q_risk(&p, &spec, &[*x]) {
                    Ok(v) => {
                        let _ = writeln!(csv, "{x},{v}");
                    }
                    Err(_) => {
                        let _ = writeln!(csv, "{x},");
                    }
                }
            }
            emit(out, &csv)?;
            Ok(ExitCode::SUCCESS)
        }
        (None, None) => Err(CliError::Input("provide --at or --grid".into())),
        (Some(_), Some(_)) => Err(CliError::Input("--at and --grid are exclusive".into())),
    }
}

fn run_solve(
    out: &Option<PathBuf>,
    input: &Path,
    spec_text: &str,
    method_text: &str,
    tol: Option<f64>,
    eps_schedule: Option<&str>,
) -> Result<ExitCode, CliError> {
    let p = load_problem(input)?;
    let spec = parse_spec(spec_text)?;
    let mut opts = SolveOptions::default();
    if let Some(t) = tol {
        if !(t > 0.0) {
            return Err(CliError::Input("tolerance must be positive".into()));
        }
        opts.tol = t;
    }

    let report = if let Some(schedule_text) = eps_schedule {
        let schedule = parse_f64_list(schedule_text, "relaxation level")?;
        if schedule.is_empty() || schedule.iter().any(|e| !(*e >= 0.0)) {
            return Err(CliError::Input(
                "the relaxation schedule needs nonnegative levels".into(),
            ));
        }
        let form = match build_table1(&p, &spec)? {
            Table1::Direct(form) => form,
            Table1::VarBisection { .. } => {
                return Err(CliError::Input(
                    "quantile minimization runs through bisection and has no single \
                     relaxation path; drop --eps-schedule"
                        .into(),
                ))
            }
        };
        solve_eps_path(&form, &schedule, None)?
    } else {
        solve_risk_model(&p, &spec, parse_method(method_text)?, &opts)?
    };

    let payload = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
    emit(out, &payload)?;
    Ok(report_exit(report.status))
}

fn run_reformulate(
    out: &Option<PathBuf>,
    input: &Path,
    spec_text: &str,
    eps: f64,
) -> Result<ExitCode, CliError> {
    if !(eps >= 0.0) {
        return Err(CliError::Input("eps must be nonnegative".into()));
    }
    let p = load_problem(input)?;
    let spec = parse_spec(spec_text)?;

    let (payload, listing) = match build_table1(&p, &spec)? {
        Table1::Direct(form) => {
            let system = kkt_reformulate(&form, eps);
            let listing = system.describe();
            let payload = serde_json::to_string_pretty(&json!({
                "kind": "direct",
                "system": system,
            }))
            .expect("serializable")
                + "\n";
            (payload, listing)
        }
        Table1::VarBisection { alpha, lo, hi, big_m_base } => {
            // The quantile target is swept by bisection; emit the exceedance
            // system at the midpoint target as the representative member.
            let eta = 0.5 * (lo + hi);
            let form = build_excess_prob_form(&p, eta, big_m_base - eta)?;
            let system = kkt_reformulate(&form, eps);
            let listing = system.describe();
            let payload = serde_json::to_string_pretty(&json!({
                "kind": "quantile_bisection",
                "alpha": alpha,
                "target_range": [lo, hi],
                "probe_target": eta,
                "system": system,
            }))
            .expect("serializable")
                + "\n";
            (payload, listing)
        }
    };

    // Machine payload to --out (or standard output); the algebraic listing
    // goes to standard output either way.
    match out {
        Some(_) => {
            emit(out, &payload)?;
            print!("{listing}");
        }
        None => {
            print!("{payload}\n{listing}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_dominance(
    out: &Option<PathBuf>,
    input: &Path,
    bench_path: &Path,
    objective: Option<&str>,
    method_text: &str,
    tol: Option<f64>,
) -> Result<ExitCode, CliError> {
    let p = load_problem(input)?;
    let bench_text = std::fs::read_to_string(bench_path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", bench_path.display())))?;
    let bench: BenchmarkSpec = serde_json::from_str(&bench_text)
        .map_err(|e| CliError::Input(format!("benchmark file: {e}")))?;

    let g = match objective {
        Some(text) => {
            let g = parse_f64_list(text, "objective coefficient")?;
            if g.len() != p.n() {
                return Err(CliError::Input(format!(
                    "objective has {} coefficients, the instance has {} leader variables",
                    g.len(),
                    p.n()
                )));
            }
            g
        }
        None => vec![0.0; p.n()],
    };

    let mut opts = SolveOptions::default();
    if let Some(t) = tol {
        if !(t > 0.0) {
            return Err(CliError::Input("tolerance must be positive".into()));
        }
        opts.tol = t;
    }

    let report = solve_dominance(&p, &bench, &g, parse_dominance_method(method_text)?, &opts)?;
    let payload = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
    emit(out, &payload)?;
    Ok(report_exit(report.status))
}

fn run_stability(
    out: &Option<PathBuf>,
    sizes_text: &str,
    reps: usize,
    seed: u64,
) -> Result<ExitCode, CliError> {
    let mut sizes = Vec::new();
    for part in sizes_text.split(',') {
        let n: usize = part
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("cannot parse sample size `{part}`")))?;
        if n == 0 {
            return Err(CliError::Input("sample sizes must be positive".into()));
        }
        sizes.push(n);
    }
    if sizes.is_empty() || reps == 0 {
        return Err(CliError::Input("need at least one sample size and one replication".into()));
    }
    let rows = stability_experiment(&StabilityConfig {
        sample_sizes: sizes,
        replications: reps,
        base_seed: seed,
    });
    emit(out, &stability_csv(&rows))?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// Reference-instance report
// ---------------------------------------------------------------------------

/// Deterministic report: closed-form expected-cost curve, minimizers of every
/// supported risk functional on the two-scenario discretization, and the
/// escaping-mass table. Contains no wall times, so repeated runs are
/// byte-identical.
fn reference_report() -> Result<String, CliError> {
    let mut r = String::new();
    let line = |r: &mut String, s: &str| {
        r.push_str(s);
        r.push('\n');
    };

    line(&mut r, "reference instance");
    line(&mut r, "==================");
    line(&mut r, "");
    line(&mut r, "leader: choose x in [1, 6]; cost = follower response y");
    line(
        &mut r,
        "follower: maximize y subject to  y <= x + 2 + z1,  y <= -x + 8.5 + z2,  y >= 1 - z3",
    );
    line(&mut r, "");

    line(&mut r, "expected cost under the uniform law on the square (closed form)");
    line(&mut r, "  [1.00, 2.75]  x + 2");
    line(&mut r, "  [2.75, 3.25]  -(4/3)x^3 + 11x^2 - (117/4)x + 1427/48");
    line(&mut r, "  [3.25, 3.75]  (4/3)x^3 - 15x^2 + (221/4)x - 989/16");
    line(&mut r, "  [3.75, 6.00]  -x + 8.5");
    for x in [2.0, 3.0, 5.0] {
        let v = oracle_e1(x).map_err(|e| CliError::Numeric(e.to_string()))?;
        line(&mut r, &format!("  value at x = {x}: {v}"));
    }
    let (xmin, vmin) = oracle_e1_min_on(1.0, 6.0).map_err(|e| CliError::Numeric(e.to_string()))?;
    line(&mut r, &format!("  global minimum: {vmin} at x = {xmin}"));
    line(&mut r, "");

    line(&mut r, "two-scenario discretization (z1 = z2 = +-0.5, equal weights)");
    let p = bslp_core::analysis::example_e1_two_scenario();
    let table: [(&str, RiskSpec, Method); 7] = [
        ("expectation", RiskSpec::Expectation, Method::Reformulate),
        ("worst-case", RiskSpec::WorstCase, Method::Reformulate),
        (
            "cvar:0.5",
            RiskSpec::ConditionalValueAtRisk { alpha: 0.5 },
            Method::Reformulate,
        ),
        (
            "semidev:0.5",
            RiskSpec::MeanUpperSemiDeviation { rho: 0.5, p: 1.0 },
            Method::Reformulate,
        ),
        ("var:0.5", RiskSpec::ValueAtRisk { alpha: 0.5 }, Method::Reformulate),
        (
            "expected-excess:4",
            RiskSpec::ExpectedExcess { eta: 4.0, p: 1.0 },
            Method::Reformulate,
        ),
        ("excess-prob:4", RiskSpec::ExcessProbability { eta: 4.0 }, Method::Reformulate),
    ];
    for (name, spec, method) in table {
        let rep = solve_risk_model(&p, &spec, method, &SolveOptions::default())?;
        line(
            &mut r,
            &format!("  {name:<18} x* = {}  value = {}", rep.x[0], rep.value),
        );
    }
    let outcomes = eval_outcomes_detail(&p, &[6.0])?;
    let listed: Vec<String> = outcomes
        .iter()
        .map(|o| format!("{} w.p. {}", o.value, o.probability))
        .collect();
    line(&mut r, &format!("  outcome law at x = 6: {{{}}}", listed.join(", ")));
    line(&mut r, "");

    line(&mut r, "escaping-mass family (laws converge, values do not)");
    line(&mut r, "  l       mass at l   expected cost");
    let escaping = counterexample_escaping_mass(&[1, 10, 100, 10_000]);
    for step in &escaping.steps {
        line(
            &mut r,
            &format!("  {:<7} {:<11} {}", step.l, step.mass_far, step.expectation),
        );
    }
    line(
        &mut r,
        &format!(
            "  limit law: point mass at 0, expected cost {} - persistent gap {}",
            escaping.limit_value, escaping.gap
        ),
    );

    Ok(r)
}

fn run_example_e1(out: &Option<PathBuf>) -> Result<ExitCode, CliError> {
    emit(out, &reference_report()?)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    if cli.threads == 0 {
        return Err(CliError::Input("--threads must be at least 1".into()));
    }
    if cli.threads > 1 {
        // All engines are deterministic; the pool only caps any parallelism
        // adopted by the library.
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    }

    match &cli.cmd {
        Cmd::Check { input } => run_check(&cli.out, input),
        Cmd::Evaluate { input, spec, at, grid } => {
            run_evaluate(&cli.out, input, spec, at.as_deref(), grid.as_deref())
        }
        Cmd::Solve { input, spec, method, tol, eps_schedule } => {
            run_solve(&cli.out, input, spec, method, *tol, eps_schedule.as_deref())
        }
        Cmd::Reformulate { input, spec, eps } => run_reformulate(&cli.out, input, spec, *eps),
        Cmd::Dominance { input, bench, objective, method, tol } => {
            run_dominance(&cli.out, input, bench, objective.as_deref(), method, *tol)
        }
        Cmd::Stability { sizes, reps, seed } => run_stability(&cli.out, sizes, *reps, *seed),
        Cmd::ExampleE1 => run_example_e1(&cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
