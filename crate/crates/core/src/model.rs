//! Problem data for bilevel stochastic linear programs.
//!
//! The leader picks `x` from a polyhedron `X = {x : Gx <= h}` and pays
//! `c'x` plus a selection `q'y` over the follower's optimal set
//!
//! ```text
//!     Psi(x, z) = Argmin_y { d'y : Ay <= Tx + b0 + z },
//! ```
//!
//! where the right-hand-side perturbation `z` follows a finitely supported
//! distribution. All matrices are dense; dimensions are `n` leader
//! variables, `m` follower variables and `s` follower constraint rows.

use crate::matrix::Matrix;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Which element of `Psi(x, z)` prices the leader's objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    /// Leader gets the best optimal follower response (`min q'y` over ties).
    Optimistic,
    /// Leader gets the worst optimal follower response (`max q'y` over ties).
    Pessimistic,
}

/// H-representation `{x : Gx <= h}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyhedron {
    #[serde(rename = "G")]
    pub g: Matrix,
    pub h: Vec<f64>,
}

impl Polyhedron {
    /// Unconstrained set in `dim` variables.
    pub fn free(dim: usize) -> Self {
        Polyhedron { g: Matrix::zeros(0, dim), h: Vec::new() }
    }

    /// Axis-aligned box `lo <= x <= hi`.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Self {
        assert_eq!(lo.len(), hi.len());
        let n = lo.len();
        let mut g = Matrix::zeros(2 * n, n);
        let mut h = vec![0.0; 2 * n];
        for j in 0..n {
            g.set(2 * j, j, 1.0);
            h[2 * j] = hi[j];
            g.set(2 * j + 1, j, -1.0);
            h[2 * j + 1] = -lo[j];
        }
        Polyhedron { g, h }
    }

    pub fn dim(&self) -> usize {
        self.g.cols()
    }

    pub fn num_rows(&self) -> usize {
        self.g.rows()
    }

    /// Membership test `Gx <= h + tol` componentwise.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.g
            .iter_rows()
            .zip(&self.h)
            .all(|(row, &hi)| crate::matrix::dot(row, x) <= hi + tol)
    }
}

/// Finitely supported distribution: atoms with strictly positive weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct DiscreteDistribution {
    atoms: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDistribution {
    atoms: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl TryFrom<RawDistribution> for DiscreteDistribution {
    type Error = ModelError;
    fn try_from(raw: RawDistribution) -> Result<Self, ModelError> {
        DiscreteDistribution::new(raw.atoms, raw.probs)
    }
}

impl From<DiscreteDistribution> for RawDistribution {
    fn from(d: DiscreteDistribution) -> Self {
        RawDistribution { atoms: d.atoms, probs: d.probs }
    }
}

impl DiscreteDistribution {
    /// Validating constructor. Weights must be strictly positive and sum to 1
    /// within `1e-12`; they are then renormalized by exact division so the
    /// stored weights are a true probability vector up to rounding.
    pub fn new(atoms: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self, ModelError> {
        if atoms.is_empty() {
            return Err(ModelError::EmptyScenarios);
        }
        if atoms.len() != probs.len() {
            return Err(ModelError::Dimension {
                field: "scenarios.probs".into(),
                expected: atoms.len().to_string(),
                got: probs.len().to_string(),
            });
        }
        let dim = atoms[0].len();
        for (k, atom) in atoms.iter().enumerate() {
            if atom.len() != dim {
                return Err(ModelError::Dimension {
                    field: format!("scenarios.atoms[{k}]"),
                    expected: dim.to_string(),
                    got: atom.len().to_string(),
                });
            }
            if atom.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite { field: format!("scenarios.atoms[{k}]") });
            }
        }
        for (k, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p <= 0.0 {
                return Err(ModelError::ProbNonPositive { index: k, value: p });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ModelError::ProbSum { sum });
        }
        let probs = probs.iter().map(|p| p / sum).collect();
        Ok(DiscreteDistribution { atoms, probs })
    }

    /// Equal-weight law of a list of atoms (an empirical distribution).
    /// Unlike [`DiscreteDistribution::new`], no probabilities are supplied,
    /// so no sum check applies; the weights are `1/n` by construction.
    pub fn empirical(atoms: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let n = atoms.len();
        if n == 0 {
            return Err(ModelError::EmptyScenarios);
        }
        let dim = atoms[0].len();
        for (k, atom) in atoms.iter().enumerate() {
            if atom.len() != dim {
                return Err(ModelError::Dimension {
                    field: format!("scenarios.atoms[{k}]"),
                    expected: dim.to_string(),
                    got: atom.len().to_string(),
                });
            }
            if atom.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite { field: format!("scenarios.atoms[{k}]") });
            }
        }
        let probs = vec![1.0 / n as f64; n];
        Ok(DiscreteDistribution { atoms, probs })
    }

    /// Distribution of a scalar random variable.
    pub fn scalar(values: Vec<f64>, probs: Vec<f64>) -> Result<Self, ModelError> {
        Self::new(values.into_iter().map(|v| vec![v]).collect(), probs)
    }

    /// Point mass at a scalar value.
    pub fn dirac(value: f64) -> Self {
        DiscreteDistribution { atoms: vec![vec![value]], probs: vec![1.0] }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn atom(&self, k: usize) -> &[f64] {
        &self.atoms[k]
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Values of a one-dimensional distribution.
    /// Atom values of a one-dimensional distribution.
    ///
    /// # Panics
    /// If the atoms are not scalars; gate on [`Self::dim`] first when the
    /// dimension is not known statically.
    pub fn values(&self) -> Vec<f64> {
        assert_eq!(self.dim(), 1, "values() requires scalar atoms");
        self.atoms.iter().map(|a| a[0]).collect()
    }
}

/// Risk functional applied to the scalar outcome distribution.
///
/// Every variant maps a finitely supported law to a real number; see the
/// `risk` module for definitions and the validation rules encoded in
/// [`RiskSpec::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiskSpec {
    /// `E[Y]`.
    Expectation,
    /// `(E[max(Y - eta, 0)^p])^(1/p)`.
    ExpectedExcess { eta: f64, p: f64 },
    /// `E[Y] + rho * (E[max(Y - E[Y], 0)^p])^(1/p)`.
    MeanUpperSemiDeviation { rho: f64, p: f64 },
    /// `P[Y > eta]`.
    ExcessProbability { eta: f64 },
    /// `inf { eta : P[Y <= eta] >= alpha }`.
    ValueAtRisk { alpha: f64 },
    /// `inf_eta { eta + E[max(Y - eta, 0)] / (1 - alpha) }`.
    ConditionalValueAtRisk { alpha: f64 },
    /// `ln(E[exp(alpha Y)]) / alpha`.
    Entropic { alpha: f64 },
    /// `max Y` over the support.
    WorstCase,
    /// `E[Y] + rho * inner(Y)` for a convex inner functional.
    MeanRisk { rho: f64, inner: Box<RiskSpec> },
}

impl RiskSpec {
    /// Check parameter ranges: `alpha` in (0,1), entropic `alpha > 0`,
    /// `p >= 1`, semideviation weight in (0,1], mean-risk weight `>= 0` with
    /// a convex inner functional.
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |what: &str| Err(ModelError::RiskParam { what: what.into() });
        match self {
            RiskSpec::Expectation | RiskSpec::WorstCase => Ok(()),
            RiskSpec::ExpectedExcess { eta, p } => {
                if !eta.is_finite() {
                    return bad("expected-excess threshold must be finite");
                }
                if !(*p >= 1.0) || !p.is_finite() {
                    return bad("expected-excess order must satisfy p >= 1");
                }
                Ok(())
            }
            RiskSpec::MeanUpperSemiDeviation { rho, p } => {
                if !(*rho > 0.0 && *rho <= 1.0) {
                    return bad("semideviation weight must lie in (0, 1]");
                }
                if !(*p >= 1.0) || !p.is_finite() {
                    return bad("semideviation order must satisfy p >= 1");
                }
                Ok(())
            }
            RiskSpec::ExcessProbability { eta } => {
                if !eta.is_finite() {
                    return bad("excess-probability threshold must be finite");
                }
                Ok(())
            }
            RiskSpec::ValueAtRisk { alpha } | RiskSpec::ConditionalValueAtRisk { alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return bad("quantile level must lie in (0, 1)");
                }
                Ok(())
            }
            RiskSpec::Entropic { alpha } => {
                if !(*alpha > 0.0) || !alpha.is_finite() {
                    return bad("entropic coefficient must be positive");
                }
                Ok(())
            }
            RiskSpec::MeanRisk { rho, inner } => {
                if !(*rho >= 0.0) || !rho.is_finite() {
                    return bad("mean-risk weight must be nonnegative");
                }
                if !inner.is_convex() {
                    return bad("mean-risk inner functional must be convex");
                }
                inner.validate()
            }
        }
    }

    /// Convexity as a functional of the outcome (quantile-type functionals
    /// are not convex).
    pub fn is_convex(&self) -> bool {
        !matches!(
            self,
            RiskSpec::ExcessProbability { .. } | RiskSpec::ValueAtRisk { .. }
        )
    }
}

impl fmt::Display for RiskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RiskSpec::Expectation => write!(f, "expectation"),
            RiskSpec::ExpectedExcess { eta, p } => write!(f, "expected-excess(eta={eta}, p={p})"),
            RiskSpec::MeanUpperSemiDeviation { rho, p } => {
                write!(f, "semideviation(rho={rho}, p={p})")
            }
            RiskSpec::ExcessProbability { eta } => write!(f, "excess-probability(eta={eta})"),
            RiskSpec::ValueAtRisk { alpha } => write!(f, "var(alpha={alpha})"),
            RiskSpec::ConditionalValueAtRisk { alpha } => write!(f, "cvar(alpha={alpha})"),
            RiskSpec::Entropic { alpha } => write!(f, "entropic(alpha={alpha})"),
            RiskSpec::WorstCase => write!(f, "worst-case"),
            RiskSpec::MeanRisk { rho, inner } => write!(f, "mean-risk(rho={rho}, {inner})"),
        }
    }
}

/// Stochastic-order relation used in dominance constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DominanceOrder {
    /// First order: compare distribution functions everywhere.
    First,
    /// Second order (increasing convex): compare expected excesses.
    Second,
}

/// Scalar benchmark law plus the order in which the outcome must dominate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub order: DominanceOrder,
    pub atoms: Vec<f64>,
    pub probs: Vec<f64>,
}

impl BenchmarkSpec {
    pub fn distribution(&self) -> Result<DiscreteDistribution, ModelError> {
        DiscreteDistribution::scalar(self.atoms.clone(), self.probs.clone())
    }
}

/// Full problem instance. See the module docs for the roles of the fields.
#[derive(Debug, Clone, PartialEq)]
pub struct BilevelStochasticProblem {
    /// Leader cost on `x` (length `n`).
    pub c: Vec<f64>,
    /// Selection cost on the follower response (length `m`).
    pub q: Vec<f64>,
    /// Follower objective (length `m`).
    pub d: Vec<f64>,
    /// Follower constraint matrix (`s x m`).
    pub a: Matrix,
    /// Leader-to-follower coupling (`s x n`).
    pub t: Matrix,
    /// Deterministic right-hand side offset (length `s`).
    pub b0: Vec<f64>,
    /// Leader feasible set.
    pub x_set: Polyhedron,
    /// Law of the right-hand-side perturbation (atoms in `R^s`).
    pub scenarios: DiscreteDistribution,
    /// Tie-breaking among optimal follower responses.
    pub sense: Sense,
}

impl BilevelStochasticProblem {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.q.len()
    }

    pub fn s(&self) -> usize {
        self.b0.len()
    }

    pub fn num_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    /// Structural validation: shapes, finiteness, nonempty dimensions.
    pub fn validate(&self) -> Result<(), ModelError> {
        let (n, m, s) = (self.n(), self.m(), self.s());
        for (name, len) in [("n", n), ("m", m), ("s", s)] {
            if len == 0 {
                return Err(ModelError::EmptyDimension { field: name.into() });
            }
        }
        let shape = |field: &str, ok: bool, expected: String, got: String| {
            if ok {
                Ok(())
            } else {
                Err(ModelError::Dimension { field: field.into(), expected, got })
            }
        };
        shape(
            "A",
            self.a.rows() == s && self.a.cols() == m,
            format!("{s}x{m}"),
            format!("{}x{}", self.a.rows(), self.a.cols()),
        )?;
        shape(
            "T",
            self.t.rows() == s && self.t.cols() == n,
            format!("{s}x{n}"),
            format!("{}x{}", self.t.rows(), self.t.cols()),
        )?;
        shape("d", self.d.len() == m, m.to_string(), self.d.len().to_string())?;
        shape(
            "X.G",
            self.x_set.g.cols() == n,
            format!("*x{n}"),
            format!("*x{}", self.x_set.g.cols()),
        )?;
        shape(
            "X.h",
            self.x_set.h.len() == self.x_set.g.rows(),
            self.x_set.g.rows().to_string(),
            self.x_set.h.len().to_string(),
        )?;
        shape(
            "scenarios.atoms",
            self.scenarios.dim() == s,
            format!("atoms in R^{s}"),
            format!("atoms in R^{}", self.scenarios.dim()),
        )?;
        for (field, finite) in [
            ("c", self.c.iter().all(|v| v.is_finite())),
            ("q", self.q.iter().all(|v| v.is_finite())),
            ("d", self.d.iter().all(|v| v.is_finite())),
            ("b0", self.b0.iter().all(|v| v.is_finite())),
            ("A", self.a.is_finite()),
            ("T", self.t.is_finite()),
            ("X.G", self.x_set.g.is_finite()),
            ("X.h", self.x_set.h.iter().all(|v| v.is_finite())),
        ] {
            if !finite {
                return Err(ModelError::NonFinite { field: field.into() });
            }
        }
        Ok(())
    }

    /// Right-hand side `Tx + b0 + z` of the follower system.
    pub fn follower_rhs(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let mut rhs = self.t.mul_vec(x);
        for ((r, &b), &zi) in rhs.iter_mut().zip(&self.b0).zip(z) {
            *r += b + zi;
        }
        rhs
    }

    /// Parse from the documented JSON schema.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let raw: RawProblem = serde_json::from_str(text).map_err(|e| ModelError::Syntax {
            line: e.line(),
            col: e.column(),
            msg: e.to_string(),
        })?;
        raw.into_problem()
    }

    /// Serialize to the documented JSON schema (canonical field order,
    /// explicit `b0`, pretty-printed with a trailing newline).
    pub fn to_json(&self) -> String {
        let raw = RawProblem::from_problem(self);
        let mut s = serde_json::to_string_pretty(&raw).expect("serializable");
        s.push('\n');
        s
    }
}

/// On-disk schema. Field order here is the canonical serialization order.
#[derive(Serialize, Deserialize)]
struct RawProblem {
    n: usize,
    m: usize,
    s: usize,
    c: Vec<f64>,
    q: Vec<f64>,
    d: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "T")]
    t: Vec<Vec<f64>>,
    b0: Vec<f64>,
    #[serde(rename = "X")]
    x: RawPolyhedron,
    scenarios: RawDistribution,
    sense: Sense,
}

#[derive(Serialize, Deserialize)]
struct RawPolyhedron {
    #[serde(rename = "G")]
    g: Vec<Vec<f64>>,
    h: Vec<f64>,
}

impl RawProblem {
    fn into_problem(self) -> Result<BilevelStochasticProblem, ModelError> {
        let dim_err = |field: &str, expected: String, got: String| ModelError::Dimension {
            field: field.into(),
            expected,
            got,
        };
        if self.c.len() != self.n {
            return Err(dim_err("c", self.n.to_string(), self.c.len().to_string()));
        }
        if self.q.len() != self.m {
            return Err(dim_err("q", self.m.to_string(), self.q.len().to_string()));
        }
        if self.b0.len() != self.s {
            return Err(dim_err("b0", self.s.to_string(), self.b0.len().to_string()));
        }
        let a = Matrix::from_rows(self.a)
            .map_err(|e| dim_err("A", "rectangular".into(), e))?
            .with_cols_if_empty(self.m);
        let t = Matrix::from_rows(self.t)
            .map_err(|e| dim_err("T", "rectangular".into(), e))?
            .with_cols_if_empty(self.n);
        let g = Matrix::from_rows(self.x.g)
            .map_err(|e| dim_err("X.G", "rectangular".into(), e))?
            .with_cols_if_empty(self.n);
        let scenarios = DiscreteDistribution::new(self.scenarios.atoms, self.scenarios.probs)?;
        let p = BilevelStochasticProblem {
            c: self.c,
            q: self.q,
            d: self.d,
            a,
            t,
            b0: self.b0,
            x_set: Polyhedron { g, h: self.x.h },
            scenarios,
            sense: self.sense,
        };
        p.validate()?;
        Ok(p)
    }

    fn from_problem(p: &BilevelStochasticProblem) -> Self {
        RawProblem {
            n: p.n(),
            m: p.m(),
            s: p.s(),
            c: p.c.clone(),
            q: p.q.clone(),
            d: p.d.clone(),
            a: p.a.to_nested(),
            t: p.t.to_nested(),
            b0: p.b0.clone(),
            x: RawPolyhedron { g: p.x_set.g.to_nested(), h: p.x_set.h.clone() },
            scenarios: RawDistribution {
                atoms: p.scenarios.atoms().to_vec(),
                probs: p.scenarios.probs().to_vec(),
            },
            sense: p.sense,
        }
    }
}

/// Validation and parsing failures, each with a stable machine code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("JSON syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("dimension mismatch in `{field}`: expected {expected}, got {got}")]
    Dimension { field: String, expected: String, got: String },
    #[error("scenario probabilities sum to {sum}, not 1 (tolerance 1e-12)")]
    ProbSum { sum: f64 },
    #[error("scenario probability {index} is {value}; weights must be strictly positive")]
    ProbNonPositive { index: usize, value: f64 },
    #[error("non-finite entry in `{field}`")]
    NonFinite { field: String },
    #[error("scenario list is empty")]
    EmptyScenarios,
    #[error("dimension `{field}` must be at least 1")]
    EmptyDimension { field: String },
    #[error("invalid risk parameter: {what}")]
    RiskParam { what: String },
}

impl ModelError {
    /// Stable error code, one per violated invariant.
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::Syntax { .. } => "E-SYNTAX",
            ModelError::Dimension { .. } => "E-DIM",
            ModelError::ProbSum { .. } => "E-PROB-SUM",
            ModelError::ProbNonPositive { .. } => "E-PROB-SIGN",
            ModelError::NonFinite { .. } => "E-NONFINITE",
            ModelError::EmptyScenarios => "E-NO-SCENARIOS",
            ModelError::EmptyDimension { .. } => "E-EMPTY-DIM",
            ModelError::RiskParam { .. } => "E-RISK-PARAM",
        }
    }
}
