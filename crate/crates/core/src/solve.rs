//! Solvers for the single-level deterministic equivalents.
//!
//! Three engines, one driver:
//!
//! - [`solve_global`]: best-first branch-and-bound over the complementarity
//!   and binary structure of a [`GenForm`]. Every node is a linear program
//!   over `(u, w, lambda)` containing the stationarity equations; branching
//!   fixes either a complementarity pair (slack to zero, or multiplier to
//!   zero) or a fractional binary. Exhausting the tree certifies global
//!   optimality of the bilevel program.
//! - [`solve_eps_path`]: local descent along a decreasing relaxation of the
//!   aggregated complementarity residual, alternating a multiplier step and
//!   a primal step; cheap, deterministic, no optimality certificate.
//! - [`grid_refine`]: derivative-free refinement of the leader objective on
//!   the feasible box; the fallback for functionals without an exact linear
//!   equivalent and for pessimistic selection.
//!
//! [`solve_risk_model`] wires them to a problem/risk-functional pair and
//! cross-validates reformulation answers against direct evaluation.

use crate::lp::{solve_lp, LpError, LpProblem, LpStatus, RowSense};
use crate::lower::LowerError;
use crate::model::{BilevelStochasticProblem, RiskSpec};
use crate::reformulate::{
    build_excess_prob_form, build_table1, GenForm, ReformulateError, Table1,
};
use crate::risk::{q_risk, RiskError};
use serde::Serialize;
use std::time::Instant;

/// Complementarity gap below which a pair counts as satisfied.
pub const COMPLEMENTARITY_TOL: f64 = 1e-7;
/// Node budget for branch-and-bound.
pub const DEFAULT_NODE_LIMIT: usize = 1_000_000;
/// Relative pruning slack: nodes at least this close to the incumbent are cut.
pub const PRUNE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Optimal within tolerances, certified by an exhausted search tree.
    GlobalOptimal,
    /// Stationary point of a relaxation path; no global certificate.
    LocalOptimal,
    /// Feasible point from grid refinement; no optimality certificate.
    Feasible,
    Infeasible,
    Unbounded,
    /// Search stopped at the node budget; best incumbent reported.
    IterLimit,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Reformulate(#[from] ReformulateError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Lower(#[from] LowerError),
    #[error("linear programming failure: {0}")]
    Lp(#[from] LpError),
    #[error("the leader set is unbounded along axis {axis}; grid methods need a box")]
    UnboundedLeaderSet { axis: usize },
    #[error("the relaxation path requires a form without binary variables")]
    BinariesInEpsPath,
}

/// Options for the global and grid solvers.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub node_limit: usize,
    /// Tolerance used for optimality cross-checks and reporting.
    pub tol: f64,
    /// Known upper bound on the optimal value (e.g. from a grid pass); used
    /// only for pruning.
    pub incumbent_hint: Option<f64>,
    /// Grid resolution per axis for grid refinement and incumbent seeding.
    pub grid_points: usize,
    /// Refinement rounds for the grid engine.
    pub grid_rounds: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            node_limit: DEFAULT_NODE_LIMIT,
            tol: 1e-6,
            incumbent_hint: None,
            grid_points: 33,
            grid_rounds: 40,
        }
    }
}

/// Raw output of [`solve_global`].
#[derive(Debug, Clone)]
pub struct GlobalSolution {
    pub status: SolveStatus,
    pub value: f64,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    /// Multiplier per follower row of the form (aligned with
    /// `form.follower_rows`).
    pub lambda: Vec<f64>,
    pub nodes: usize,
    /// Bounds of nodes pruned against the incumbent; their minimum certifies
    /// that nothing better than `value - PRUNE_TOL` was cut off.
    pub pruned_bounds: Vec<f64>,
}

/// Uniform result of the driver-level solvers.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub value: f64,
    /// Follower response per scenario at the reported point.
    pub scenario_responses: Vec<Vec<f64>>,
    /// Multipliers on the follower rows (empty for grid solutions).
    pub multipliers: Vec<f64>,
    /// One flag per follower row: `S` slack active, `D` multiplier zero,
    /// `B` both within tolerance.
    pub complementarity_pattern: String,
    pub nodes: usize,
    pub wall_ms: f64,
    /// Independent re-evaluation of the risk objective at `x`.
    pub value_recheck: Option<f64>,
    /// Minimum pruned node bound, when branch-and-bound ran.
    pub min_pruned_bound: Option<f64>,
}

// ---------------------------------------------------------------------------
// Branch and bound
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairFix {
    Unfixed,
    SlackZero,
    DualZero,
}

#[derive(Debug, Clone)]
struct Node {
    pair_fix: Vec<PairFix>,
    /// Parallel to `form.binary_cols`: None = relaxed, Some(b) = fixed.
    bin_fix: Vec<Option<bool>>,
}

struct HeapEntry {
    bound: f64,
    id: usize,
    node: Node,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.id == other.id
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max-heap: invert so the smallest bound (then oldest id) pops first.
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Variable layout of a node LP: `[u | w | lambda]`.
struct NodeLp {
    base: LpProblem,
    num_u: usize,
    num_w: usize,
    /// Row index (in the LP) of each coupled form row.
    coupled_row_at: Vec<usize>,
}

fn build_node_lp(form: &GenForm) -> NodeLp {
    let (nu, nw) = (form.num_u(), form.num_w());
    let nl = form.follower_rows.len();
    let total = nu + nw + nl;
    let mut lp = LpProblem::new(total);
    for j in 0..nu {
        lp.objective[j] = form.upper_cost[j];
    }
    for j in 0..nw {
        lp.objective[nu + j] = form.lower_cost[j];
    }
    for (l, _) in form.follower_rows.iter().enumerate() {
        lp.bounds[nu + nw + l] = (None, Some(0.0));
    }
    // Upper set rows over u.
    for i in 0..form.upper_set.num_rows() {
        let mut row = vec![0.0; total];
        row[..nu].copy_from_slice(form.upper_set.g.row(i));
        lp.add_row(row, RowSense::Le, form.upper_set.h[i]);
    }
    // Coupled rows: W w - B u <= b.
    let mut coupled_row_at = Vec::with_capacity(form.num_rows());
    for i in 0..form.num_rows() {
        let mut row = vec![0.0; total];
        for j in 0..nu {
            row[j] = -form.b_mat.get(i, j);
        }
        for j in 0..nw {
            row[nu + j] = form.w_mat.get(i, j);
        }
        coupled_row_at.push(lp.a.rows());
        lp.add_row(row, RowSense::Le, form.rhs[i]);
    }
    // Stationarity: sum over follower rows of W_ij lambda_i = t_j.
    for j in 0..nw {
        let mut row = vec![0.0; total];
        let mut nonzero = false;
        for (l, &i) in form.follower_rows.iter().enumerate() {
            let c = form.w_mat.get(i, j);
            if c != 0.0 {
                row[nu + nw + l] = c;
                nonzero = true;
            }
        }
        if nonzero || form.lower_objective[j] != 0.0 {
            lp.add_row(row, RowSense::Eq, form.lower_objective[j]);
        }
    }
    NodeLp { base: lp, num_u: nu, num_w: nw, coupled_row_at }
}

/// Globally solve a form by branch-and-bound on complementarity pairs and
/// binaries. Exhausting the tree yields `GlobalOptimal` (or `Infeasible` /
/// `Unbounded`); hitting the node budget yields `IterLimit` with the best
/// incumbent found.
pub fn solve_global(form: &GenForm, opts: &SolveOptions) -> Result<GlobalSolution, SolveError> {
    let node_lp = build_node_lp(form);
    let npairs = form.follower_rows.len();
    let nbins = form.binary_cols.len();
    let root = Node { pair_fix: vec![PairFix::Unfixed; npairs], bin_fix: vec![None; nbins] };
    let mut heap = std::collections::BinaryHeap::new();
    let mut next_id = 0usize;
    heap.push(HeapEntry { bound: f64::NEG_INFINITY, id: next_id, node: root });
    next_id += 1;

    let mut incumbent: Option<GlobalSolution> = None;
    let mut incumbent_value = opts.incumbent_hint.unwrap_or(f64::INFINITY);
    let mut nodes = 0usize;
    let mut pruned_bounds: Vec<f64> = Vec::new();
    let mut saw_infeasible_leaf = false;

    while let Some(HeapEntry { bound, node, .. }) = heap.pop() {
        if bound >= incumbent_value - PRUNE_TOL {
            pruned_bounds.push(bound);
            continue;
        }
        if nodes >= opts.node_limit {
            return Ok(finish_global(
                incumbent,
                incumbent_value,
                SolveStatus::IterLimit,
                nodes,
                pruned_bounds,
            ));
        }
        nodes += 1;
        // Materialize the node LP.
        let mut lp = node_lp.base.clone();
        for (l, fix) in node.pair_fix.iter().enumerate() {
            match fix {
                PairFix::Unfixed => {}
                PairFix::SlackZero => {
                    lp.senses[node_lp.coupled_row_at[form.follower_rows[l]]] = RowSense::Eq;
                }
                PairFix::DualZero => {
                    lp.bounds[node_lp.num_u + node_lp.num_w + l] = (Some(0.0), Some(0.0));
                }
            }
        }
        for (b, fix) in node.bin_fix.iter().enumerate() {
            if let Some(v) = fix {
                let val = if *v { 1.0 } else { 0.0 };
                lp.bounds[form.binary_cols[b]] = (Some(val), Some(val));
            }
        }
        let res = solve_lp(&lp)?;
        match res.status {
            LpStatus::Infeasible => {
                saw_infeasible_leaf = true;
                continue;
            }
            LpStatus::Unbounded => {
                // Fixing more structure may restore boundedness; branch on
                // the first unfixed pair, then the first free binary.
                if let Some(l) = node.pair_fix.iter().position(|f| *f == PairFix::Unfixed) {
                    for fix in [PairFix::SlackZero, PairFix::DualZero] {
                        let mut child = node.clone();
                        child.pair_fix[l] = fix;
                        heap.push(HeapEntry { bound, id: next_id, node: child });
                        next_id += 1;
                    }
                    continue;
                }
                if let Some(b) = node.bin_fix.iter().position(|f| f.is_none()) {
                    for v in [false, true] {
                        let mut child = node.clone();
                        child.bin_fix[b] = Some(v);
                        heap.push(HeapEntry { bound, id: next_id, node: child });
                        next_id += 1;
                    }
                    continue;
                }
                // Fully fixed and still unbounded: the bilevel program is
                // unbounded along this complementarity pattern.
                return Ok(GlobalSolution {
                    status: SolveStatus::Unbounded,
                    value: f64::NEG_INFINITY,
                    u: res.x[..node_lp.num_u].to_vec(),
                    w: res.x[node_lp.num_u..node_lp.num_u + node_lp.num_w].to_vec(),
                    lambda: Vec::new(),
                    nodes,
                    pruned_bounds,
                });
            }
            LpStatus::Optimal => {}
        }
        let node_value = res.value + form.constant;
        if node_value >= incumbent_value - PRUNE_TOL {
            pruned_bounds.push(node_value);
            continue;
        }
        let u = &res.x[..node_lp.num_u];
        let w = &res.x[node_lp.num_u..node_lp.num_u + node_lp.num_w];
        let lambda = &res.x[node_lp.num_u + node_lp.num_w..];
        let slacks = form.slack(u, w);

        // Most violated complementarity pair among unfixed ones.
        let mut worst_pair: Option<(usize, f64)> = None;
        for (l, &i) in form.follower_rows.iter().enumerate() {
            if node.pair_fix[l] != PairFix::Unfixed {
                continue;
            }
            let gap = (-lambda[l]).min(slacks[i].max(0.0));
            if gap > COMPLEMENTARITY_TOL
                && worst_pair.map_or(true, |(_, g)| gap > g)
            {
                worst_pair = Some((l, gap));
            }
        }
        // Most fractional free binary.
        let mut worst_bin: Option<(usize, f64)> = None;
        for (b, fix) in node.bin_fix.iter().enumerate() {
            if fix.is_some() {
                continue;
            }
            let v = u[form.binary_cols[b]];
            let frac = v.min(1.0 - v).max(0.0);
            if frac > COMPLEMENTARITY_TOL && worst_bin.map_or(true, |(_, f)| frac > f) {
                worst_bin = Some((b, frac));
            }
        }

        if let Some((l, _)) = worst_pair {
            for fix in [PairFix::SlackZero, PairFix::DualZero] {
                let mut child = node.clone();
                child.pair_fix[l] = fix;
                heap.push(HeapEntry { bound: node_value, id: next_id, node: child });
                next_id += 1;
            }
            continue;
        }
        if let Some((b, _)) = worst_bin {
            for v in [false, true] {
                let mut child = node.clone();
                child.bin_fix[b] = Some(v);
                heap.push(HeapEntry { bound: node_value, id: next_id, node: child });
                next_id += 1;
            }
            continue;
        }
        // Complementarity and integrality hold: a feasible bilevel point.
        incumbent_value = node_value;
        incumbent = Some(GlobalSolution {
            status: SolveStatus::GlobalOptimal,
            value: node_value,
            u: u.to_vec(),
            w: w.to_vec(),
            lambda: lambda.to_vec(),
            nodes,
            pruned_bounds: Vec::new(),
        });
    }
    let _ = saw_infeasible_leaf;
    Ok(finish_global(
        incumbent,
        incumbent_value,
        SolveStatus::GlobalOptimal,
        nodes,
        pruned_bounds,
    ))
}

fn finish_global(
    incumbent: Option<GlobalSolution>,
    incumbent_value: f64,
    status_when_found: SolveStatus,
    nodes: usize,
    pruned_bounds: Vec<f64>,
) -> GlobalSolution {
    match incumbent {
        Some(mut sol) => {
            sol.status = status_when_found;
            sol.nodes = nodes;
            sol.pruned_bounds = pruned_bounds;
            sol
        }
        None => GlobalSolution {
            status: if status_when_found == SolveStatus::IterLimit {
                SolveStatus::IterLimit
            } else if incumbent_value.is_finite() {
                // An external hint bounded the search and the tree offered
                // nothing better: the hint stands, but there is no point to
                // report here.
                SolveStatus::GlobalOptimal
            } else {
                SolveStatus::Infeasible
            },
            value: if incumbent_value.is_finite() { incumbent_value } else { f64::INFINITY },
            u: Vec::new(),
            w: Vec::new(),
            lambda: Vec::new(),
            nodes,
            pruned_bounds,
        },
    }
}

// ---------------------------------------------------------------------------
// Relaxation path
// ---------------------------------------------------------------------------

/// Local solve along a decreasing schedule of complementarity relaxations.
///
/// At each `epsilon`, alternate: (i) a multiplier step minimizing the
/// aggregated residual `sum_i (-lambda_i) slack_i` over the stationarity
/// polytope at the current primal point, and (ii) a primal step minimizing
/// the objective subject to the rows plus the linearized residual cap
/// `sum_i (-lambda_i)(B_i u + b - W_i w) <= epsilon`. A monotone safeguard
/// keeps the best primal point if a step regresses.
pub fn solve_eps_path(
    form: &GenForm,
    schedule: &[f64],
    seed_u: Option<&[f64]>,
) -> Result<SolveReport, SolveError> {
    if !form.binary_cols.is_empty() {
        return Err(SolveError::BinariesInEpsPath);
    }
    let start = Instant::now();
    let (nu, nw) = (form.num_u(), form.num_w());
    let nl = form.follower_rows.len();

    // Primal base LP over (u, w): upper rows + coupled rows.
    let mut primal_base = LpProblem::new(nu + nw);
    for j in 0..nu {
        primal_base.objective[j] = form.upper_cost[j];
    }
    for j in 0..nw {
        primal_base.objective[nu + j] = form.lower_cost[j];
    }
    for i in 0..form.upper_set.num_rows() {
        let mut row = vec![0.0; nu + nw];
        row[..nu].copy_from_slice(form.upper_set.g.row(i));
        primal_base.add_row(row, RowSense::Le, form.upper_set.h[i]);
    }
    for i in 0..form.num_rows() {
        let mut row = vec![0.0; nu + nw];
        for j in 0..nu {
            row[j] = -form.b_mat.get(i, j);
        }
        for j in 0..nw {
            row[nu + j] = form.w_mat.get(i, j);
        }
        primal_base.add_row(row, RowSense::Le, form.rhs[i]);
    }

    // Initial primal point: plain relaxation, optionally pinned to a seed.
    // The relaxation may be unbounded even when the bilevel program is not
    // (the lower objective is what tames `w`); in that case we start from
    // the multiplier step instead of a primal point.
    let mut init = primal_base.clone();
    if let Some(seed) = seed_u {
        for (j, &v) in seed.iter().enumerate() {
            init.bounds[j] = (Some(v), Some(v));
        }
    }
    let first = solve_lp(&init)?;
    if first.status == LpStatus::Infeasible {
        let mut rep = empty_report(SolveStatus::Infeasible, 0, start);
        rep.wall_ms = ms(start);
        return Ok(rep);
    }
    let mut have_point = first.status == LpStatus::Optimal;
    let mut u: Vec<f64> = if have_point { first.x[..nu].to_vec() } else { vec![0.0; nu] };
    let mut w: Vec<f64> = if have_point { first.x[nu..].to_vec() } else { vec![0.0; nw] };
    let mut lambda = vec![0.0; nl];
    let mut iterations = 0usize;
    let mut capped_unbounded = false;

    'outer: for &eps in schedule {
        let mut best_obj = f64::INFINITY;
        for _round in 0..50 {
            iterations += 1;
            // Multiplier step at the current slacks (zero weights before the
            // first primal point: any stationarity-feasible vertex will do).
            let slacks = if have_point { form.slack(&u, &w) } else { vec![0.0; form.num_rows()] };
            let mut mult = LpProblem::new(nl);
            for l in 0..nl {
                mult.bounds[l] = (None, Some(0.0));
                mult.objective[l] = -slacks[form.follower_rows[l]].max(0.0);
            }
            for j in 0..nw {
                let mut row = vec![0.0; nl];
                let mut nonzero = false;
                for (l, &i) in form.follower_rows.iter().enumerate() {
                    let c = form.w_mat.get(i, j);
                    if c != 0.0 {
                        row[l] = c;
                        nonzero = true;
                    }
                }
                if nonzero || form.lower_objective[j] != 0.0 {
                    mult.add_row(row, RowSense::Eq, form.lower_objective[j]);
                }
            }
            let mres = solve_lp(&mult)?;
            if mres.status != LpStatus::Optimal {
                // No stationarity certificate: the followers are unbounded
                // or degenerate; stop with what we have.
                break;
            }
            lambda = mres.x.clone();

            // Primal step under the linearized residual cap.
            let mut primal = primal_base.clone();
            let mut cap = vec![0.0; nu + nw];
            let mut cap_rhs = eps;
            for (l, &i) in form.follower_rows.iter().enumerate() {
                let weight = -lambda[l]; // >= 0
                if weight == 0.0 {
                    continue;
                }
                for j in 0..nu {
                    cap[j] += weight * form.b_mat.get(i, j);
                }
                for j in 0..nw {
                    cap[nu + j] -= weight * form.w_mat.get(i, j);
                }
                cap_rhs -= weight * form.rhs[i];
            }
            // weight'(B u + b - W w) <= eps, written over (u, w):
            // (weight' B) u - (weight' W) w <= eps - weight' b.
            primal.add_row(cap, RowSense::Le, cap_rhs);
            let pres = solve_lp(&primal)?;
            if pres.status != LpStatus::Optimal {
                if pres.status == LpStatus::Unbounded && !have_point {
                    capped_unbounded = true;
                    break 'outer;
                }
                break;
            }
            let obj = pres.value + form.constant;
            if obj >= best_obj - 1e-12 {
                // Converged (or regressing): monotone safeguard.
                if obj < best_obj {
                    u = pres.x[..nu].to_vec();
                    w = pres.x[nu..].to_vec();
                    have_point = true;
                }
                break;
            }
            best_obj = obj;
            u = pres.x[..nu].to_vec();
            w = pres.x[nu..].to_vec();
            have_point = true;
        }
    }
    if capped_unbounded || !have_point {
        let mut rep = empty_report(SolveStatus::Unbounded, iterations, start);
        rep.value = f64::NEG_INFINITY;
        return Ok(rep);
    }

    let slacks = form.slack(&u, &w);
    let pattern: String = form
        .follower_rows
        .iter()
        .enumerate()
        .map(|(l, &i)| pattern_char(lambda[l], slacks[i]))
        .collect();
    Ok(SolveReport {
        status: SolveStatus::LocalOptimal,
        x: u[..form.num_u()].to_vec(),
        value: form.objective(&u, &w),
        scenario_responses: form
            .blocks
            .iter()
            .map(|b| b.y_cols.iter().map(|&c| w[c]).collect())
            .collect(),
        multipliers: lambda,
        complementarity_pattern: pattern,
        nodes: iterations,
        wall_ms: ms(start),
        value_recheck: None,
        min_pruned_bound: None,
    })
}

fn pattern_char(lambda: f64, slack: f64) -> char {
    let dual_zero = lambda.abs() <= COMPLEMENTARITY_TOL;
    let slack_zero = slack.abs() <= COMPLEMENTARITY_TOL;
    match (slack_zero, dual_zero) {
        (true, true) => 'B',
        (true, false) => 'S',
        (false, true) => 'D',
        (false, false) => '!',
    }
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

// ---------------------------------------------------------------------------
// Grid refinement
// ---------------------------------------------------------------------------

/// Bounding box of the leader set, from `2n` support LPs.
pub fn leader_box(p: &BilevelStochasticProblem) -> Result<Vec<(f64, f64)>, SolveError> {
    let n = p.n();
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let mut obj = vec![0.0; n];
        obj[j] = 1.0;
        let lo = crate::lp::solve_over_polyhedron(&obj, &p.x_set)?;
        if lo.status != LpStatus::Optimal {
            return Err(SolveError::UnboundedLeaderSet { axis: j });
        }
        obj[j] = -1.0;
        let hi = crate::lp::solve_over_polyhedron(&obj, &p.x_set)?;
        if hi.status != LpStatus::Optimal {
            return Err(SolveError::UnboundedLeaderSet { axis: j });
        }
        out.push((lo.value, -hi.value));
    }
    Ok(out)
}

/// Derivative-free minimization of `x -> R[f(x, Z)]` by iterated grid
/// halving on the leader box. Evaluation errors (infeasible scenarios)
/// exclude a point. Returns the best point, its value, and the final step.
pub fn grid_refine(
    p: &BilevelStochasticProblem,
    spec: &RiskSpec,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, f64, f64), SolveError> {
    let boxes = leader_box(p)?;
    let n = p.n();
    let levels = opts.grid_points.max(3);
    let mut center: Vec<f64> =
        boxes.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
    let mut half: Vec<f64> = boxes.iter().map(|&(lo, hi)| 0.5 * (hi - lo)).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut last_step = f64::INFINITY;
    for _round in 0..opts.grid_rounds {
        let steps: Vec<f64> =
            half.iter().map(|h| 2.0 * h / (levels as f64 - 1.0)).collect();
        last_step = steps.iter().fold(0.0f64, |a, &s| a.max(s));
        let mut idx = vec![0usize; n];
        loop {
            let x: Vec<f64> = (0..n)
                .map(|j| {
                    let lo = (center[j] - half[j]).max(boxes[j].0);
                    let hi = (center[j] + half[j]).min(boxes[j].1);
                    if levels == 1 {
                        0.5 * (lo + hi)
                    } else {
                        lo + (hi - lo) * idx[j] as f64 / (levels - 1) as f64
                    }
                })
                .collect();
            if p.x_set.contains(&x, 1e-9) {
                if let Ok(v) = q_risk(p, spec, &x) {
                    if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
                        best = Some((x.clone(), v));
                    }
                }
            }
            // Advance the mixed-radix counter.
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
        for h in half.iter_mut() {
            *h *= 1.75 / (levels as f64 - 1.0);
        }
        if last_step < 1e-9 {
            break;
        }
    }
    match best {
        Some((x, v)) => Ok((x, v, last_step)),
        None => Ok((Vec::new(), f64::INFINITY, last_step)),
    }
}

/// Best value of a coarse direct scan over the leader box, used only to
/// seed branch-and-bound pruning.
fn coarse_hint(p: &BilevelStochasticProblem, spec: &RiskSpec) -> Option<f64> {
    let bounds = leader_box(p).ok()?;
    let n = p.n();
    let per_axis = match n {
        1 => 33,
        2 => 9,
        _ => 4,
    };
    let mut hint = f64::INFINITY;
    let mut idx = vec![0usize; n];
    loop {
        let x: Vec<f64> = (0..n)
            .map(|j| {
                bounds[j].0
                    + (bounds[j].1 - bounds[j].0) * idx[j] as f64 / (per_axis - 1) as f64
            })
            .collect();
        if let Ok(v) = q_risk(p, spec, &x) {
            hint = hint.min(v);
        }
        let mut j = 0;
        loop {
            if j == n {
                break;
            }
            idx[j] += 1;
            if idx[j] < per_axis {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == n {
            break;
        }
    }
    hint.is_finite().then_some(hint)
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

/// How [`solve_risk_model`] should attack the problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Exact single-level reformulation plus global branch-and-bound.
    Reformulate,
    /// Derivative-free grid refinement on direct evaluations.
    GridRefine,
}

/// Solve `min_x R[f(x, Z)]` with the requested engine. The reformulation
/// engine certifies global optimality for supported functionals under
/// optimistic selection; grid refinement handles everything else and tags
/// its answers `Feasible`.
pub fn solve_risk_model(
    p: &BilevelStochasticProblem,
    spec: &RiskSpec,
    method: Method,
    opts: &SolveOptions,
) -> Result<SolveReport, SolveError> {
    let start = Instant::now();
    match method {
        Method::GridRefine => {
            let (x, value, _step) = grid_refine(p, spec, opts)?;
            if x.is_empty() {
                return Ok(SolveReport {
                    status: SolveStatus::Infeasible,
                    x,
                    value: f64::INFINITY,
                    scenario_responses: Vec::new(),
                    multipliers: Vec::new(),
                    complementarity_pattern: String::new(),
                    nodes: 0,
                    wall_ms: ms(start),
                    value_recheck: None,
                    min_pruned_bound: None,
                });
            }
            let responses = crate::lower::eval_outcomes_detail(p, &x)
                .map(|d| d.into_iter().map(|o| o.y).collect())
                .unwrap_or_default();
            Ok(SolveReport {
                status: SolveStatus::Feasible,
                value: q_risk(p, spec, &x)?,
                value_recheck: Some(value),
                x,
                scenario_responses: responses,
                multipliers: Vec::new(),
                complementarity_pattern: String::new(),
                nodes: 0,
                wall_ms: ms(start),
                min_pruned_bound: None,
            })
        }
        Method::Reformulate => match build_table1(p, spec)? {
            Table1::Direct(form) => {
                let mut local = opts.clone();
                if local.incumbent_hint.is_none() {
                    // Seed pruning with a coarse direct scan when the box
                    // is available; purely an accelerator.
                    if let Some(hint) = coarse_hint(p, spec) {
                        local.incumbent_hint = Some(hint + 1e-6);
                    }
                }
                let sol = solve_global(&form, &local)?;
                finish_report(p, spec, &form, sol, start)
            }
            Table1::VarBisection { alpha, lo, hi, big_m_base } => {
                let mut lo = lo;
                let mut hi = hi;
                let mut nodes = 0usize;
                let mut best: Option<(GenForm, GlobalSolution)> = None;
                let tol = (opts.tol * (1.0 + hi.abs())).max(1e-9);
                // Invariant: target `hi` is feasible (P[f > hi] = 0 always).
                while hi - lo > tol {
                    let mid = 0.5 * (lo + hi);
                    let form = build_excess_prob_form(p, mid, big_m_base - mid)?;
                    let sol = solve_global(&form, opts)?;
                    nodes += sol.nodes;
                    match sol.status {
                        SolveStatus::GlobalOptimal if sol.value <= 1.0 - alpha + 1e-9 => {
                            hi = mid;
                            best = Some((form, sol));
                        }
                        SolveStatus::GlobalOptimal => lo = mid,
                        SolveStatus::Infeasible => {
                            return Ok(SolveReport {
                                status: SolveStatus::Infeasible,
                                x: Vec::new(),
                                value: f64::INFINITY,
                                scenario_responses: Vec::new(),
                                multipliers: Vec::new(),
                                complementarity_pattern: String::new(),
                                nodes,
                                wall_ms: ms(start),
                                value_recheck: None,
                                min_pruned_bound: None,
                            });
                        }
                        other => {
                            let mut rep = empty_report(other, nodes, start);
                            rep.value = hi;
                            return Ok(rep);
                        }
                    }
                }
                match best {
                    Some((form, sol)) => {
                        let mut rep = finish_report(p, spec, &form, sol, start)?;
                        rep.nodes = nodes;
                        // The bisected target is the certified quantile level.
                        rep.value = rep.value_recheck.unwrap_or(hi).min(hi);
                        Ok(rep)
                    }
                    None => {
                        // Even the upper end never came back feasible within
                        // the budget; fall back to reporting the bracket.
                        let mut rep = empty_report(SolveStatus::IterLimit, nodes, start);
                        rep.value = hi;
                        Ok(rep)
                    }
                }
            }
        },
    }
}

fn empty_report(status: SolveStatus, nodes: usize, start: Instant) -> SolveReport {
    SolveReport {
        status,
        x: Vec::new(),
        value: f64::INFINITY,
        scenario_responses: Vec::new(),
        multipliers: Vec::new(),
        complementarity_pattern: String::new(),
        nodes,
        wall_ms: ms(start),
        value_recheck: None,
        min_pruned_bound: None,
    }
}

fn finish_report(
    p: &BilevelStochasticProblem,
    spec: &RiskSpec,
    form: &GenForm,
    sol: GlobalSolution,
    start: Instant,
) -> Result<SolveReport, SolveError> {
    if sol.u.is_empty() {
        let mut rep = empty_report(sol.status, sol.nodes, start);
        rep.value = sol.value;
        rep.min_pruned_bound =
            sol.pruned_bounds.iter().copied().fold(None, |a: Option<f64>, b| {
                Some(a.map_or(b, |v| v.min(b)))
            });
        return Ok(rep);
    }
    let x = sol.u[..p.n()].to_vec();
    let slacks = form.slack(&sol.u, &sol.w);
    let pattern: String = form
        .follower_rows
        .iter()
        .enumerate()
        .map(|(l, &i)| pattern_char(sol.lambda.get(l).copied().unwrap_or(0.0), slacks[i]))
        .collect();
    let recheck = q_risk(p, spec, &x).ok();
    Ok(SolveReport {
        status: sol.status,
        value: sol.value,
        scenario_responses: form
            .blocks
            .iter()
            .map(|b| b.y_cols.iter().map(|&c| sol.w[c]).collect())
            .collect(),
        multipliers: sol.lambda,
        complementarity_pattern: pattern,
        nodes: sol.nodes,
        wall_ms: ms(start),
        value_recheck: recheck,
        min_pruned_bound: sol
            .pruned_bounds
            .iter()
            .copied()
            .fold(None, |a: Option<f64>, b| Some(a.map_or(b, |v| v.min(b)))),
        x,
    })
}

// ---------------------------------------------------------------------------
// Stationarity checking
// ---------------------------------------------------------------------------

/// One probed direction of a stationarity check.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionalSlope {
    /// Signed coordinate direction: `+(j+1)` for `+e_j`, `-(j+1)` for `-e_j`.
    pub direction: i32,
    pub slope: f64,
    /// Agreement gap between the two step sizes.
    pub consistency: f64,
}

/// Finite-difference stationarity report at a point.
#[derive(Debug, Clone, Serialize)]
pub struct StationarityReport {
    pub x: Vec<f64>,
    /// Slopes along feasible coordinate directions.
    pub slopes: Vec<DirectionalSlope>,
    /// No feasible direction descends faster than the tolerance.
    pub stationary: bool,
    /// Most negative feasible slope.
    pub worst_slope: f64,
}

/// Probe `x` for descent along feasible coordinate directions with one-sided
/// finite differences at two step sizes (`1e-4`, `1e-5`); a direction is
/// feasible if it does not leave active leader constraints.
pub fn stationarity_check(
    p: &BilevelStochasticProblem,
    spec: &RiskSpec,
    x: &[f64],
    slope_tol: f64,
) -> Result<StationarityReport, SolveError> {
    let n = p.n();
    let f0 = q_risk(p, spec, x)?;
    let gx = p.x_set.g.mul_vec(x);
    let mut slopes = Vec::new();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for sign in [1.0f64, -1.0] {
            // Feasible cone at x: active rows must not increase.
            let mut feasible = true;
            for i in 0..p.x_set.num_rows() {
                let active = gx[i] >= p.x_set.h[i] - 1e-7;
                if active && sign * p.x_set.g.get(i, j) > 1e-12 {
                    feasible = false;
                    break;
                }
            }
            if !feasible {
                continue;
            }
            let mut vals = Vec::new();
            for h in [1e-4, 1e-5] {
                let mut xs = x.to_vec();
                xs[j] += sign * h;
                let fh = q_risk(p, spec, &xs)?;
                vals.push((fh - f0) / h);
            }
            let slope = vals[1];
            let consistency = (vals[0] - vals[1]).abs();
            worst = worst.min(slope);
            slopes.push(DirectionalSlope {
                direction: sign as i32 * (j as i32 + 1),
                slope,
                consistency,
            });
        }
    }
    Ok(StationarityReport {
        x: x.to_vec(),
        slopes,
        stationary: worst >= -slope_tol,
        worst_slope: worst,
    })
}
