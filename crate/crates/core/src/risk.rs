//! Risk functionals on finite discrete cost distributions.
//!
//! All functionals map a random cost (finitely many atoms, higher = worse)
//! to a scalar. Evaluation is exact up to floating point: sorting replaces
//! quantile estimation and the conditional value-at-risk is computed as the
//! exact minimum of its variational form over atom candidates, which for
//! finite distributions is attained at the value-at-risk.

use crate::lower::LowerError;
use crate::model::{DiscreteDistribution, ModelError, RiskSpec};

/// Bound on `alpha * (max - min)` beyond which the entropic functional is
/// reported as an overflow instead of silently saturating.
pub const ENTROPIC_SPAN_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum RiskError {
    #[error("invalid risk specification: {0}")]
    Spec(#[from] ModelError),
    #[error("entropic functional overflows: alpha * value span = {product:.3e} > {limit}")]
    EntropicOverflow { product: f64, limit: f64 },
    #[error("risk functionals need a one-dimensional distribution, got dimension {dim}")]
    NotScalar { dim: usize },
    #[error("lower level evaluation failed: {0}")]
    Lower(#[from] LowerError),
}

/// Mean of the distribution.
pub fn expectation(values: &[f64], probs: &[f64]) -> f64 {
    values.iter().zip(probs).map(|(v, p)| p * v).sum()
}

/// Expected excess of order `p` over the target `eta`:
/// `( E[ (Y - eta)_+^p ] )^(1/p)`.
pub fn expected_excess(values: &[f64], probs: &[f64], eta: f64, p: f64) -> f64 {
    let moment: f64 = values
        .iter()
        .zip(probs)
        .map(|(v, pr)| {
            let e = (v - eta).max(0.0);
            if e > 0.0 {
                pr * e.powf(p)
            } else {
                0.0
            }
        })
        .sum();
    if p == 1.0 {
        moment
    } else {
        moment.powf(1.0 / p)
    }
}

/// Probability of strictly exceeding the target: `P[Y > eta]`.
pub fn excess_probability(values: &[f64], probs: &[f64], eta: f64) -> f64 {
    values.iter().zip(probs).filter(|(v, _)| **v > eta).map(|(_, p)| p).sum()
}

/// Smallest atom value whose cumulative probability reaches `alpha`.
pub fn value_at_risk(values: &[f64], probs: &[f64], alpha: f64) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut cum = 0.0;
    for &i in &idx {
        cum += probs[i];
        if cum >= alpha - 1e-12 {
            return values[i];
        }
    }
    values[*idx.last().expect("nonempty distribution")]
}

/// Conditional value-at-risk at level `alpha`, i.e. the mean of the worst
/// `1 - alpha` probability mass; exact minimum of
/// `eta + E[(Y - eta)_+] / (1 - alpha)` over atom candidates `eta`.
pub fn conditional_value_at_risk(values: &[f64], probs: &[f64], alpha: f64) -> f64 {
    values
        .iter()
        .map(|&eta| eta + expected_excess(values, probs, eta, 1.0) / (1.0 - alpha))
        .fold(f64::INFINITY, f64::min)
}

/// Entropic functional `ln( E[ exp(alpha Y) ] ) / alpha`, evaluated with a
/// max shift for stability.
pub fn entropic(values: &[f64], probs: &[f64], alpha: f64) -> Result<f64, RiskError> {
    let max = values.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let min = values.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let product = alpha * (max - min);
    if product > ENTROPIC_SPAN_LIMIT {
        return Err(RiskError::EntropicOverflow { product, limit: ENTROPIC_SPAN_LIMIT });
    }
    let shifted: f64 =
        values.iter().zip(probs).map(|(v, p)| p * (alpha * (v - max)).exp()).sum();
    Ok(max + shifted.ln() / alpha)
}

/// Largest atom value.
pub fn worst_case(values: &[f64]) -> f64 {
    values.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v))
}

/// Evaluate a risk specification on a one-dimensional distribution.
pub fn risk_eval(spec: &RiskSpec, dist: &DiscreteDistribution) -> Result<f64, RiskError> {
    spec.validate()?;
    if dist.dim() != 1 {
        return Err(RiskError::NotScalar { dim: dist.dim() });
    }
    let values = dist.values();
    let probs = dist.probs();
    eval_on(spec, &values, probs)
}

fn eval_on(spec: &RiskSpec, values: &[f64], probs: &[f64]) -> Result<f64, RiskError> {
    Ok(match spec {
        RiskSpec::Expectation => expectation(values, probs),
        RiskSpec::ExpectedExcess { eta, p } => expected_excess(values, probs, *eta, *p),
        RiskSpec::MeanUpperSemiDeviation { rho, p } => {
            let mean = expectation(values, probs);
            mean + rho * expected_excess(values, probs, mean, *p)
        }
        RiskSpec::ExcessProbability { eta } => excess_probability(values, probs, *eta),
        RiskSpec::ValueAtRisk { alpha } => value_at_risk(values, probs, *alpha),
        RiskSpec::ConditionalValueAtRisk { alpha } => {
            conditional_value_at_risk(values, probs, *alpha)
        }
        RiskSpec::Entropic { alpha } => entropic(values, probs, *alpha)?,
        RiskSpec::WorstCase => worst_case(values),
        RiskSpec::MeanRisk { rho, inner } => {
            expectation(values, probs) + rho * eval_on(inner, values, probs)?
        }
    })
}

/// Leader's objective `R[f(x, Z)]`: evaluate the follower in every scenario
/// and aggregate the outcome distribution with the risk functional.
pub fn q_risk(
    p: &crate::model::BilevelStochasticProblem,
    spec: &RiskSpec,
    x: &[f64],
) -> Result<f64, RiskError> {
    let outcomes = crate::lower::eval_outcomes(p, x)?;
    risk_eval(spec, &outcomes)
}
