//! Stochastic-order comparison of outcome distributions, and optimization
//! under dominance constraints.
//!
//! Orientation: outcomes are costs, so "acceptable relative to a benchmark"
//! means stochastically *smaller*. First order compares distribution
//! functions everywhere (`P[f <= t] >= P[B <= t]` for all `t`); second order
//! compares expected excesses (`E[(f - t)_+] <= E[(B - t)_+]` for all `t`),
//! the increasing-convex order. Both checks reduce to finitely many test
//! points:
//!
//! - first order: both distribution functions are right-continuous steps,
//!   constant between atoms, so the union of atoms is enough;
//! - second order: `t -> E[(f - t)_+] - E[(B - t)_+]` is a difference of
//!   piecewise-linear convex functions, affine outside the atom hull of
//!   either law and kinked only at atoms of the benchmark once the sample's
//!   excess is the convex side being bounded; on each benchmark segment the
//!   left side is convex and the right side affine, so extremes sit at
//!   segment ends. Beyond the largest benchmark atom the cap is zero, which
//!   forces the sample's essential maximum below it; below the smallest one,
//!   both sides fall with slope -1 once the constraint at that atom holds.
//!
//! The same reduction turns a dominance constraint on the random outcome
//! into finitely many distribution caps, which [`solve_dominance`] handles
//! exactly (indicator binaries for first order, excess blocks for second)
//! or approximately on a refined grid.

use crate::lower::eval_outcomes;
use crate::model::{
    BenchmarkSpec, BilevelStochasticProblem, DiscreteDistribution, DominanceOrder,
};
use crate::reformulate::{build_dominance_form, DistributionCaps};
use crate::solve::{
    leader_box, solve_global, SolveError, SolveOptions, SolveReport, SolveStatus,
};
use serde::Serialize;
use std::time::Instant;

/// Default slack allowed when comparing distribution functions or excesses.
pub const DOMINANCE_TOL: f64 = 1e-9;

/// Outcome of a dominance feasibility check.
#[derive(Debug, Clone, Serialize)]
pub struct DominanceCheck {
    pub feasible: bool,
    /// Largest constraint violation over all test points (0 when feasible).
    pub worst_violation: f64,
    /// Test point where the worst violation occurs.
    pub worst_point: Option<f64>,
}

fn sorted_unique_atoms(dist: &DiscreteDistribution) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> = dist
        .values()
        .into_iter()
        .zip(dist.probs().iter().copied())
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (v, p) in pairs {
        match out.last_mut() {
            Some((lv, lp)) if *lv == v => *lp += p,
            _ => out.push((v, p)),
        }
    }
    out
}

/// `P[X <= t]` for a scalar law.
pub fn cdf(dist: &DiscreteDistribution, t: f64) -> f64 {
    dist.values()
        .iter()
        .zip(dist.probs())
        .filter(|(v, _)| **v <= t)
        .map(|(_, p)| p)
        .sum()
}

/// `E[(X - t)_+]` for a scalar law.
pub fn upper_excess(dist: &DiscreteDistribution, t: f64) -> f64 {
    dist.values()
        .iter()
        .zip(dist.probs())
        .map(|(v, p)| p * (v - t).max(0.0))
        .sum()
}

fn atom_union(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Vec<f64> {
    let mut pts: Vec<f64> = a.values();
    pts.extend(b.values());
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// First-order check: `P[sample <= t] >= P[benchmark <= t]` at every point.
pub fn fsd_feasible(
    sample: &DiscreteDistribution,
    benchmark: &DiscreteDistribution,
    tol: f64,
) -> DominanceCheck {
    let mut worst = 0.0f64;
    let mut at = None;
    for t in atom_union(sample, benchmark) {
        let gap = cdf(benchmark, t) - cdf(sample, t);
        if gap > worst {
            worst = gap;
            at = Some(t);
        }
    }
    DominanceCheck { feasible: worst <= tol, worst_violation: worst, worst_point: at }
}

/// Second-order check: `E[(sample - t)_+] <= E[(benchmark - t)_+]` at every
/// point.
pub fn ssd_feasible(
    sample: &DiscreteDistribution,
    benchmark: &DiscreteDistribution,
    tol: f64,
) -> DominanceCheck {
    let mut worst = 0.0f64;
    let mut at = None;
    for t in atom_union(sample, benchmark) {
        let gap = upper_excess(sample, t) - upper_excess(benchmark, t);
        if gap > worst {
            worst = gap;
            at = Some(t);
        }
    }
    DominanceCheck { feasible: worst <= tol, worst_violation: worst, worst_point: at }
}

/// Check one order against a benchmark law.
pub fn dominance_feasible(
    sample: &DiscreteDistribution,
    order: DominanceOrder,
    benchmark: &DiscreteDistribution,
    tol: f64,
) -> DominanceCheck {
    match order {
        DominanceOrder::First => fsd_feasible(sample, benchmark, tol),
        DominanceOrder::Second => ssd_feasible(sample, benchmark, tol),
    }
}

/// Finite cap system equivalent to the dominance constraint, anchored at the
/// benchmark atoms (see the module docs for why those suffice).
pub fn caps_from_benchmark(
    order: DominanceOrder,
    benchmark: &DiscreteDistribution,
) -> DistributionCaps {
    let atoms = sorted_unique_atoms(benchmark);
    let mut caps = DistributionCaps::default();
    match order {
        DominanceOrder::First => {
            let mut below = 0.0;
            for &(v, p) in &atoms {
                below += p;
                caps.prob.push((v, 1.0 - below));
            }
        }
        DominanceOrder::Second => {
            for &(v, _) in &atoms {
                caps.excess.push((v, upper_excess(benchmark, v)));
            }
        }
    }
    caps
}

/// Engine for [`solve_dominance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DominanceMethod {
    /// Exact mixed single-level form plus global branch-and-bound.
    BigM,
    /// Feasibility-filtered grid refinement.
    Grid,
}

/// Minimize `objective_x' x` over leader decisions whose outcome law is
/// acceptable against the benchmark in the requested order.
pub fn solve_dominance(
    p: &BilevelStochasticProblem,
    benchmark: &BenchmarkSpec,
    objective_x: &[f64],
    method: DominanceMethod,
    opts: &SolveOptions,
) -> Result<SolveReport, SolveError> {
    let start = Instant::now();
    let bench = benchmark.distribution().map_err(crate::risk::RiskError::from)?;
    match method {
        DominanceMethod::BigM => {
            let caps = caps_from_benchmark(benchmark.order, &bench);
            let form = build_dominance_form(p, objective_x, &caps)?;
            let sol = solve_global(&form, opts)?;
            let x: Vec<f64> = if sol.u.is_empty() {
                Vec::new()
            } else {
                sol.u[..p.n()].to_vec()
            };
            let responses = if x.is_empty() {
                Vec::new()
            } else {
                form.blocks
                    .iter()
                    .map(|bl| bl.y_cols.iter().map(|&c| sol.w[c]).collect())
                    .collect()
            };
            let recheck = if x.is_empty() {
                None
            } else {
                Some(objective_x.iter().zip(&x).map(|(c, v)| c * v).sum())
            };
            Ok(SolveReport {
                status: sol.status,
                value: sol.value,
                x,
                scenario_responses: responses,
                multipliers: sol.lambda,
                complementarity_pattern: String::new(),
                nodes: sol.nodes,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
                value_recheck: recheck,
                min_pruned_bound: sol
                    .pruned_bounds
                    .iter()
                    .copied()
                    .fold(None, |a: Option<f64>, b| Some(a.map_or(b, |v| v.min(b)))),
            })
        }
        DominanceMethod::Grid => {
            let boxes = leader_box(p)?;
            let n = p.n();
            let levels = opts.grid_points.max(3);
            let mut center: Vec<f64> =
                boxes.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
            let mut half: Vec<f64> =
                boxes.iter().map(|&(lo, hi)| 0.5 * (hi - lo)).collect();
            let mut best: Option<(Vec<f64>, f64)> = None;
            for _round in 0..opts.grid_rounds {
                let mut idx = vec![0usize; n];
                loop {
                    let x: Vec<f64> = (0..n)
                        .map(|j| {
                            let lo = (center[j] - half[j]).max(boxes[j].0);
                            let hi = (center[j] + half[j]).min(boxes[j].1);
                            lo + (hi - lo) * idx[j] as f64 / (levels - 1) as f64
                        })
                        .collect();
                    if p.x_set.contains(&x, 1e-9) {
                        if let Ok(outcomes) = eval_outcomes(p, &x) {
                            let check = dominance_feasible(
                                &outcomes,
                                benchmark.order,
                                &bench,
                                DOMINANCE_TOL,
                            );
                            if check.feasible {
                                let v: f64 =
                                    objective_x.iter().zip(&x).map(|(c, xv)| c * xv).sum();
                                if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
                                    best = Some((x.clone(), v));
                                }
                            }
                        }
                    }
                    let mut j = 0;
                    loop {
                        if j == n {
                            break;
                        }
                        idx[j] += 1;
                        if idx[j] < levels {
                            break;
                        }
                        idx[j] = 0;
                        j += 1;
                    }
                    if j == n {
                        break;
                    }
                }
                let Some((bx, _)) = &best else { break };
                center = bx.clone();
                let mut done = true;
                for h in half.iter_mut() {
                    *h *= 1.75 / (levels as f64 - 1.0);
                    if *h > 1e-10 {
                        done = false;
                    }
                }
                if done {
                    break;
                }
            }
            match best {
                Some((x, value)) => {
                    let responses = crate::lower::eval_outcomes_detail(p, &x)
                        .map(|d| d.into_iter().map(|o| o.y).collect())
                        .unwrap_or_default();
                    Ok(SolveReport {
                        status: SolveStatus::Feasible,
                        value,
                        value_recheck: Some(value),
                        x,
                        scenario_responses: responses,
                        multipliers: Vec::new(),
                        complementarity_pattern: String::new(),
                        nodes: 0,
                        wall_ms: start.elapsed().as_secs_f64() * 1e3,
                        min_pruned_bound: None,
                    })
                }
                None => Ok(SolveReport {
                    status: SolveStatus::Infeasible,
                    value: f64::INFINITY,
                    x: Vec::new(),
                    scenario_responses: Vec::new(),
                    multipliers: Vec::new(),
                    complementarity_pattern: String::new(),
                    nodes: 0,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                    value_recheck: None,
                    min_pruned_bound: None,
                }),
            }
        }
    }
}
