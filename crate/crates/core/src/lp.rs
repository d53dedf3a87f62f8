//! Dense two-phase primal simplex with certificates.
//!
//! The kernel solves desk-sized linear programs
//!
//! ```text
//!     min c'x   s.t.   a_i'x {<=,=,>=} b_i,   lo_j <= x_j <= hi_j,
//! ```
//!
//! and returns, depending on the outcome, an optimal point with row duals
//! (strong duality holds to high accuracy), a Farkas infeasibility
//! certificate, or an improving ray. Pivoting is deterministic: largest
//! reduced cost with lowest-index tie-breaking, switching to Bland's rule
//! after a run of degenerate pivots so cycling is impossible.

use crate::matrix::{dot, Matrix};
use crate::model::{BilevelStochasticProblem, Polyhedron};

/// Primal feasibility tolerance (phase-1 objective and residual checks).
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Reduced-cost optimality tolerance.
pub const OPTIMALITY_TOL: f64 = 1e-9;
/// Entries below this magnitude are never used as pivots.
pub const ZERO_PIVOT_TOL: f64 = 1e-11;
/// Degenerate pivots tolerated before switching to Bland's rule.
pub const DEGENERATE_PIVOT_LIMIT: usize = 1000;
/// Hard cap on total pivots per solve.
pub const PIVOT_LIMIT: usize = 50_000;

/// Row relation in [`LpProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

/// A linear program in the mixed row/bound form accepted by [`solve_lp`].
#[derive(Debug, Clone)]
pub struct LpProblem {
    /// Minimization objective, length `n`.
    pub objective: Vec<f64>,
    /// Row coefficient matrix, `r x n`.
    pub a: Matrix,
    pub senses: Vec<RowSense>,
    pub rhs: Vec<f64>,
    /// Per-variable `(lower, upper)`; `None` means unbounded on that side.
    pub bounds: Vec<(Option<f64>, Option<f64>)>,
}

impl LpProblem {
    /// Problem with `n` free variables, zero objective and no rows.
    pub fn new(n: usize) -> Self {
        LpProblem {
            objective: vec![0.0; n],
            a: Matrix::zeros(0, n),
            senses: Vec::new(),
            rhs: Vec::new(),
            bounds: vec![(None, None); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, sense: RowSense, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars());
        self.a = self.a.vstack(&Matrix::from_flat(1, coeffs.len(), coeffs));
        self.senses.push(sense);
        self.rhs.push(rhs);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of a solve. Tie-breaking is fixed, so identical inputs produce
/// identical results including the recorded pivot sequence.
#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    /// Primal point: optimal for `Optimal`, a feasible point for `Unbounded`,
    /// empty for `Infeasible`.
    pub x: Vec<f64>,
    pub value: f64,
    /// Dual objective on the original scale; equals `value` up to the strong
    /// duality gap for `Optimal`.
    pub dual_objective: f64,
    /// Row multipliers for the original rows: `<= 0` on `Le` rows, `>= 0` on
    /// `Ge` rows, free on `Eq` rows, with `value = dual_objective` closing
    /// the loop through the bound terms.
    pub duals: Vec<f64>,
    /// Sense-adjusted infeasibility multipliers on the original rows
    /// (`>= 0` on `Le`, `<= 0` on `Ge`), present when `Infeasible`.
    pub farkas: Option<Vec<f64>>,
    /// Improving ray in original variables, present when `Unbounded`.
    pub ray: Option<Vec<f64>>,
    /// Basic column indices of the internal standard form.
    pub basis: Vec<usize>,
    /// `(entering column, leaving row)` per pivot, in order.
    pub pivots: Vec<(u32, u32)>,
    farkas_full: Option<Vec<f64>>,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum LpError {
    #[error("pivot limit of {limit} exceeded")]
    PivotLimit { limit: usize },
}

// ---------------------------------------------------------------------------
// Standard-form transformation
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum VarMap {
    /// `x = lo + x'[col]`
    Shift { col: usize, lo: f64 },
    /// `x = hi - x'[col]`
    Negate { col: usize, hi: f64 },
    /// `x = x'[pos] - x'[neg]`
    Split { pos: usize, neg: usize },
}

struct Standard {
    /// Row coefficients over structural columns, senses and rhs after
    /// substitution; original rows first, bound rows appended.
    rows: Vec<(Vec<f64>, RowSense, f64)>,
    var_map: Vec<VarMap>,
    n_struct: usize,
    /// Objective over structural columns plus constant offset.
    costs: Vec<f64>,
    obj_shift: f64,
}

fn standardize(p: &LpProblem) -> Standard {
    let n = p.num_vars();
    let mut var_map = Vec::with_capacity(n);
    let mut n_struct = 0usize;
    let mut upper_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        match p.bounds[j] {
            (Some(lo), None) => {
                var_map.push(VarMap::Shift { col: n_struct, lo });
                n_struct += 1;
            }
            (Some(lo), Some(hi)) => {
                var_map.push(VarMap::Shift { col: n_struct, lo });
                upper_rows.push((n_struct, hi - lo));
                n_struct += 1;
            }
            (None, Some(hi)) => {
                var_map.push(VarMap::Negate { col: n_struct, hi });
                n_struct += 1;
            }
            (None, None) => {
                var_map.push(VarMap::Split { pos: n_struct, neg: n_struct + 1 });
                n_struct += 2;
            }
        }
    }
    let substitute = |coeffs: &[f64]| -> (Vec<f64>, f64) {
        // Returns structural coefficients and the constant absorbed into rhs.
        let mut out = vec![0.0; n_struct];
        let mut shift = 0.0;
        for (j, &a) in coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match var_map[j] {
                VarMap::Shift { col, lo } => {
                    out[col] += a;
                    shift += a * lo;
                }
                VarMap::Negate { col, hi } => {
                    out[col] -= a;
                    shift += a * hi;
                }
                VarMap::Split { pos, neg } => {
                    out[pos] += a;
                    out[neg] -= a;
                }
            }
        }
        (out, shift)
    };
    let mut rows = Vec::with_capacity(p.a.rows() + upper_rows.len());
    for i in 0..p.a.rows() {
        let (coeffs, shift) = substitute(p.a.row(i));
        rows.push((coeffs, p.senses[i], p.rhs[i] - shift));
    }
    for &(col, cap) in &upper_rows {
        let mut coeffs = vec![0.0; n_struct];
        coeffs[col] = 1.0;
        rows.push((coeffs, RowSense::Le, cap));
    }
    let (costs, obj_shift) = substitute(&p.objective);
    Standard { rows, var_map, n_struct, costs, obj_shift }
}

fn map_point(std: &Standard, xp: &[f64]) -> Vec<f64> {
    std.var_map
        .iter()
        .map(|vm| match *vm {
            VarMap::Shift { col, lo } => lo + xp[col],
            VarMap::Negate { col, hi } => hi - xp[col],
            VarMap::Split { pos, neg } => xp[pos] - xp[neg],
        })
        .collect()
}

fn map_ray(std: &Standard, rp: &[f64]) -> Vec<f64> {
    std.var_map
        .iter()
        .map(|vm| match *vm {
            VarMap::Shift { col, .. } => rp[col],
            VarMap::Negate { col, .. } => -rp[col],
            VarMap::Split { pos, neg } => rp[pos] - rp[neg],
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Tableau simplex
// ---------------------------------------------------------------------------

struct Tableau {
    /// `rows x (ncols + 1)`; the last column is the right-hand side.
    tab: Matrix,
    basis: Vec<usize>,
    ncols: usize,
    /// Standardized right-hand side as built, before any pivoting.
    rhs0: Vec<f64>,
    /// First artificial column; artificials never enter a basis.
    art_start: usize,
    /// Per row: the unit column used to read duals (+1 entry in that row).
    unit_col: Vec<usize>,
    /// +-1 per row: -1 when the row was negated to make the rhs nonnegative.
    flip: Vec<f64>,
    pivots: Vec<(u32, u32)>,
    degenerate: usize,
    bland: bool,
}

impl Tableau {
    fn build(std: &Standard) -> Tableau {
        let m = std.rows.len();
        // Column layout: structural | one slack/surplus per inequality |
        // one artificial per row needing it.
        let mut n_slack = 0usize;
        for (_, sense, _) in &std.rows {
            if *sense != RowSense::Eq {
                n_slack += 1;
            }
        }
        let mut flips = vec![1.0; m];
        let mut needs_art = vec![false; m];
        let mut eff_sense = vec![RowSense::Eq; m];
        for (i, (_, sense, rhs)) in std.rows.iter().enumerate() {
            let mut s = *sense;
            if *rhs < 0.0 {
                flips[i] = -1.0;
                s = match s {
                    RowSense::Le => RowSense::Ge,
                    RowSense::Ge => RowSense::Le,
                    RowSense::Eq => RowSense::Eq,
                };
            }
            eff_sense[i] = s;
            needs_art[i] = s != RowSense::Le;
        }
        let n_art = needs_art.iter().filter(|&&b| b).count();
        let art_start = std.n_struct + n_slack;
        let ncols = art_start + n_art;
        let mut tab = Matrix::zeros(m, ncols + 1);
        let mut basis = vec![0usize; m];
        let mut unit_col = vec![0usize; m];
        let mut slack_at = std.n_struct;
        let mut art_at = art_start;
        for (i, (coeffs, _, rhs)) in std.rows.iter().enumerate() {
            let f = flips[i];
            for (j, &a) in coeffs.iter().enumerate() {
                if a != 0.0 {
                    tab.set(i, j, f * a);
                }
            }
            tab.set(i, ncols, f * rhs);
            match eff_sense[i] {
                RowSense::Le => {
                    tab.set(i, slack_at, 1.0);
                    basis[i] = slack_at;
                    unit_col[i] = slack_at;
                    slack_at += 1;
                }
                RowSense::Ge => {
                    tab.set(i, slack_at, -1.0);
                    slack_at += 1;
                    tab.set(i, art_at, 1.0);
                    basis[i] = art_at;
                    unit_col[i] = art_at;
                    art_at += 1;
                }
                RowSense::Eq => {
                    tab.set(i, art_at, 1.0);
                    basis[i] = art_at;
                    unit_col[i] = art_at;
                    art_at += 1;
                }
            }
        }
        let rhs0 = (0..m).map(|i| tab.get(i, ncols)).collect();
        Tableau {
            tab,
            basis,
            ncols,
            rhs0,
            art_start,
            unit_col,
            flip: flips,
            pivots: Vec::new(),
            degenerate: 0,
            bland: false,
        }
    }

    fn m(&self) -> usize {
        self.tab.rows()
    }

    fn rhs(&self, i: usize) -> f64 {
        self.tab.get(i, self.ncols)
    }

    /// Reduced-cost row for the given column costs, plus current objective.
    fn price(&self, costs: &[f64]) -> (Vec<f64>, f64) {
        let mut rc = vec![0.0; self.ncols];
        rc[..costs.len()].copy_from_slice(costs);
        let mut obj = 0.0;
        for i in 0..self.m() {
            let cb = if self.basis[i] < costs.len() { costs[self.basis[i]] } else { 0.0 };
            if cb != 0.0 {
                obj += cb * self.rhs(i);
                let row = self.tab.row(i);
                for j in 0..self.ncols {
                    rc[j] -= cb * row[j];
                }
            }
        }
        (rc, obj)
    }

    fn pivot(&mut self, r: usize, c: usize, rc: &mut [f64], obj: &mut f64) {
        let ncols = self.ncols;
        let piv = self.tab.get(r, c);
        let inv = 1.0 / piv;
        for j in 0..=ncols {
            let v = self.tab.get(r, j) * inv;
            self.tab.set(r, j, v);
        }
        self.tab.set(r, c, 1.0);
        for i in 0..self.m() {
            if i == r {
                continue;
            }
            let f = self.tab.get(i, c);
            if f.abs() > 1e-300 {
                for j in 0..=ncols {
                    let v = self.tab.get(i, j) - f * self.tab.get(r, j);
                    self.tab.set(i, j, v);
                }
                self.tab.set(i, c, 0.0);
            }
        }
        let f = rc[c];
        if f != 0.0 {
            for j in 0..ncols {
                rc[j] -= f * self.tab.get(r, j);
            }
            *obj += f * self.rhs(r);
            rc[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots.push((c as u32, r as u32));
    }

    /// Run simplex iterations on the given cost row. Artificials are barred
    /// from entering when `ban_artificials` is set.
    fn iterate(
        &mut self,
        rc: &mut [f64],
        obj: &mut f64,
        ban_artificials: bool,
    ) -> Result<Option<usize>, LpError> {
        loop {
            if self.pivots.len() >= PIVOT_LIMIT {
                return Err(LpError::PivotLimit { limit: PIVOT_LIMIT });
            }
            let limit = if ban_artificials { self.art_start } else { self.ncols };
            let entering = if self.bland {
                (0..limit).find(|&j| rc[j] < -OPTIMALITY_TOL)
            } else {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..limit {
                    if rc[j] < -OPTIMALITY_TOL && best.map_or(true, |(_, b)| rc[j] < b) {
                        best = Some((j, rc[j]));
                    }
                }
                best.map(|(j, _)| j)
            };
            let Some(c) = entering else { return Ok(None) };
            // Ratio test: smallest ratio; ties by lowest basis column index
            // (Bland-compatible, deterministic).
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m() {
                let a = self.tab.get(i, c);
                if a > ZERO_PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12
                                || (ratio < lr + 1e-12 && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, ratio)) = leave else { return Ok(Some(c)) };
            if ratio.abs() <= 1e-12 {
                self.degenerate += 1;
                if self.degenerate > DEGENERATE_PIVOT_LIMIT {
                    self.bland = true;
                }
            }
            self.pivot(r, c, rc, obj);
        }
    }
}

/// Solve a linear program. See the module docs for conventions.
pub fn solve_lp(p: &LpProblem) -> Result<LpResult, LpError> {
    debug_assert_eq!(p.a.cols(), p.num_vars());
    debug_assert_eq!(p.a.rows(), p.senses.len());
    debug_assert_eq!(p.a.rows(), p.rhs.len());
    let std = standardize(p);
    let mut t = Tableau::build(&std);
    let n_orig_rows = p.a.rows();
    let scale = 1.0 + (0..t.m()).map(|i| t.rhs(i).abs()).fold(0.0, f64::max);

    // Phase 1: minimize the sum of artificials when any exist.
    if t.art_start < t.ncols {
        let mut costs1 = vec![0.0; t.ncols];
        for c in costs1.iter_mut().skip(t.art_start) {
            *c = 1.0;
        }
        let (mut rc1, mut obj1) = t.price(&costs1);
        let hit = t.iterate(&mut rc1, &mut obj1, false)?;
        debug_assert!(hit.is_none(), "phase 1 objective is bounded below by 0");
        if obj1 > FEASIBILITY_TOL * scale {
            // Infeasible; the phase-1 duals are a Farkas certificate.
            let mut y = vec![0.0; t.m()];
            for i in 0..t.m() {
                let u = t.unit_col[i];
                let cost_u = if u >= t.art_start { 1.0 } else { 0.0 };
                y[i] = cost_u - rc1[u];
            }
            // Original-row multipliers, sense-adjusted so that Le rows get
            // nonnegative weights and u'rhs < 0.
            let farkas_rows: Vec<f64> =
                (0..n_orig_rows).map(|i| -t.flip[i] * y[i]).collect();
            return Ok(LpResult {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                value: f64::INFINITY,
                dual_objective: f64::INFINITY,
                duals: Vec::new(),
                farkas: Some(farkas_rows),
                ray: None,
                basis: t.basis.clone(),
                pivots: t.pivots.clone(),
                farkas_full: Some(y),
            });
        }
        // Drive leftover artificials out of the basis where possible.
        for i in 0..t.m() {
            if t.basis[i] >= t.art_start {
                let col = (0..t.art_start).find(|&j| t.tab.get(i, j).abs() > ZERO_PIVOT_TOL);
                if let Some(c) = col {
                    let mut dummy_rc = vec![0.0; t.ncols];
                    let mut dummy_obj = 0.0;
                    t.pivot(i, c, &mut dummy_rc, &mut dummy_obj);
                }
            }
        }
    }

    // Phase 2 on the real objective.
    let (mut rc2, mut obj2) = t.price(&std.costs);
    let unbounded_col = t.iterate(&mut rc2, &mut obj2, true)?;

    let mut xp = vec![0.0; std.n_struct];
    for i in 0..t.m() {
        if t.basis[i] < std.n_struct {
            xp[t.basis[i]] = t.rhs(i);
        }
    }
    let x = map_point(&std, &xp);

    if let Some(c) = unbounded_col {
        let mut rp = vec![0.0; std.n_struct];
        if c < std.n_struct {
            rp[c] = 1.0;
        }
        for i in 0..t.m() {
            if t.basis[i] < std.n_struct {
                rp[t.basis[i]] = -t.tab.get(i, c);
            }
        }
        return Ok(LpResult {
            status: LpStatus::Unbounded,
            x,
            value: f64::NEG_INFINITY,
            dual_objective: f64::NEG_INFINITY,
            duals: Vec::new(),
            farkas: None,
            ray: Some(map_ray(&std, &rp)),
            basis: t.basis.clone(),
            pivots: t.pivots.clone(),
            farkas_full: None,
        });
    }

    // Duals from the unit columns; phase-2 artificial cost is zero.
    let mut y = vec![0.0; t.m()];
    for i in 0..t.m() {
        y[i] = -rc2[t.unit_col[i]];
    }
    let dual_obj_std: f64 = (0..t.m()).map(|i| y[i] * t.rhs0[i]).sum();
    let duals: Vec<f64> = (0..n_orig_rows).map(|i| t.flip[i] * y[i]).collect();
    let value = dot(&p.objective, &x);
    Ok(LpResult {
        status: LpStatus::Optimal,
        x,
        value,
        dual_objective: dual_obj_std + std.obj_shift,
        duals,
        farkas: None,
        ray: None,
        basis: t.basis.clone(),
        pivots: t.pivots.clone(),
        farkas_full: None,
    })
}

impl LpResult {
    /// Margin by which the stored Farkas certificate proves infeasibility of
    /// `p`: positive means valid. Checks the certificate against the exact
    /// standard form the solver used, so it covers bounded variables too.
    pub fn farkas_margin(&self, p: &LpProblem) -> Option<f64> {
        let y = self.farkas_full.as_ref()?;
        let std = standardize(p);
        let t = Tableau::build(&std);
        if y.len() != t.m() {
            return None;
        }
        // Valid certificate: y'col <= 0 for every non-artificial column and
        // y'rhs > 0, all for the standardized system.
        let mut worst_col: f64 = 0.0;
        for j in 0..t.art_start {
            let mut v = 0.0;
            for i in 0..t.m() {
                v += y[i] * t.tab.get(i, j);
            }
            worst_col = worst_col.max(v);
        }
        let yb: f64 = (0..t.m()).map(|i| y[i] * t.rhs0[i]).sum();
        let tol = FEASIBILITY_TOL * (1.0 + y.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        if worst_col > tol {
            return Some(-worst_col);
        }
        Some(yb)
    }

    /// Max violation of primal feasibility, dual signs, complementary
    /// slackness and the relative duality gap; used by tests.
    pub fn certify_optimal(&self, p: &LpProblem) -> f64 {
        assert_eq!(self.status, LpStatus::Optimal);
        let mut worst = 0.0f64;
        let ax = p.a.mul_vec(&self.x);
        for i in 0..p.a.rows() {
            let slack = p.rhs[i] - ax[i];
            let viol = match p.senses[i] {
                RowSense::Le => -slack,
                RowSense::Ge => slack,
                RowSense::Eq => slack.abs(),
            };
            worst = worst.max(viol);
            let y = self.duals[i];
            match p.senses[i] {
                RowSense::Le => worst = worst.max(y),
                RowSense::Ge => worst = worst.max(-y),
                RowSense::Eq => {}
            }
            // Complementary slackness on rows.
            worst = worst.max((y * slack).abs() / (1.0 + slack.abs()));
        }
        for (j, &(lo, hi)) in p.bounds.iter().enumerate() {
            if let Some(l) = lo {
                worst = worst.max(l - self.x[j]);
            }
            if let Some(h) = hi {
                worst = worst.max(self.x[j] - h);
            }
        }
        let gap = (self.value - self.dual_objective).abs() / (1.0 + self.value.abs());
        worst.max(gap)
    }
}

// ---------------------------------------------------------------------------
// Complete recourse (Gordan) and domain checks
// ---------------------------------------------------------------------------

/// Outcome of the complete-recourse test for a follower matrix `A`.
#[derive(Debug, Clone, PartialEq)]
pub enum RecourseTest {
    /// `{y : Ay <= r}` is nonempty for every right-hand side `r`.
    Complete,
    /// A nonzero `u >= 0` with `A'u = 0` exists (returned normalized to
    /// `sum u = 1`), so some right-hand sides are infeasible.
    Incomplete { witness: Vec<f64> },
}

/// Complete-recourse test via Gordan's alternative: `Ay <= r` is solvable
/// for all `r` iff `u = 0` is the only nonnegative solution of `A'u = 0`.
pub fn gordan_complete_recourse(a: &Matrix) -> Result<RecourseTest, LpError> {
    let s = a.rows();
    let mut lp = LpProblem::new(s);
    lp.bounds = vec![(Some(0.0), None); s];
    let at = a.transpose();
    for i in 0..at.rows() {
        lp.add_row(at.row(i).to_vec(), RowSense::Eq, 0.0);
    }
    lp.add_row(vec![1.0; s], RowSense::Eq, 1.0);
    let res = solve_lp(&lp)?;
    Ok(match res.status {
        LpStatus::Optimal => RecourseTest::Incomplete { witness: res.x },
        LpStatus::Infeasible => RecourseTest::Complete,
        LpStatus::Unbounded => unreachable!("feasibility problem has zero objective"),
    })
}

/// Why `f` is identically `+inf` / undefined, when it is.
#[derive(Debug, Clone, PartialEq)]
pub enum DomFailure {
    /// No `(x, z)` with `x` feasible and `z` in the scenario box makes the
    /// follower system solvable.
    NoFeasiblePair,
    /// No `u <= 0` with `A'u = d`: the follower objective is unbounded below
    /// whenever its feasible set is nonempty.
    NoDualCertificate,
    /// The selection objective `q'y` is unbounded over the follower's
    /// optimal set at the feasibility witness.
    UnboundedSelection,
}

/// Result of [`check_dom_f`].
#[derive(Debug, Clone, PartialEq)]
pub enum DomF {
    /// `f` is finite somewhere; carries a witness `(x, z)`, the dual
    /// certificate `u <= 0` with `A'u = d`, and `f(x, z)`.
    NonEmpty { x: Vec<f64>, z: Vec<f64>, dual_witness: Vec<f64>, value: f64 },
    Empty(DomFailure),
}

/// Decide whether `f` is finite anywhere: (a) some `(x, z)` with `x` in `X`
/// and `z` in the componentwise scenario hull admits a follower point,
/// (b) the follower objective is bounded below (dual certificate), and
/// (c) the selection `q'y` is bounded over the optimal set at the witness.
pub fn check_dom_f(p: &BilevelStochasticProblem) -> Result<DomF, LpError> {
    let (n, m, s) = (p.n(), p.m(), p.s());
    // Componentwise hull of the scenario atoms bounds z in condition (a).
    let mut z_lo = p.scenarios.atom(0).to_vec();
    let mut z_hi = z_lo.clone();
    for k in 1..p.scenarios.len() {
        for (j, &v) in p.scenarios.atom(k).iter().enumerate() {
            z_lo[j] = z_lo[j].min(v);
            z_hi[j] = z_hi[j].max(v);
        }
    }

    // (a): feasibility LP over (x, y, z).
    let mut lp = LpProblem::new(n + m + s);
    for j in 0..s {
        lp.bounds[n + m + j] = (Some(z_lo[j]), Some(z_hi[j]));
    }
    for i in 0..p.x_set.num_rows() {
        let mut row = vec![0.0; n + m + s];
        row[..n].copy_from_slice(p.x_set.g.row(i));
        lp.add_row(row, RowSense::Le, p.x_set.h[i]);
    }
    for i in 0..s {
        // A y - T x - z <= b0.
        let mut row = vec![0.0; n + m + s];
        for j in 0..n {
            row[j] = -p.t.get(i, j);
        }
        for j in 0..m {
            row[n + j] = p.a.get(i, j);
        }
        row[n + m + i] = -1.0;
        lp.add_row(row, RowSense::Le, p.b0[i]);
    }
    let feas = solve_lp(&lp)?;
    if feas.status == LpStatus::Infeasible {
        return Ok(DomF::Empty(DomFailure::NoFeasiblePair));
    }
    let x: Vec<f64> = feas.x[..n].to_vec();
    let z: Vec<f64> = feas.x[n + m..].to_vec();

    // (b): dual certificate u <= 0 with A'u = d.
    let mut dual = LpProblem::new(s);
    dual.bounds = vec![(None, Some(0.0)); s];
    let at = p.a.transpose();
    for i in 0..m {
        dual.add_row(at.row(i).to_vec(), RowSense::Eq, p.d[i]);
    }
    let cert = solve_lp(&dual)?;
    if cert.status == LpStatus::Infeasible {
        return Ok(DomF::Empty(DomFailure::NoDualCertificate));
    }
    let dual_witness = cert.x;

    // (c): two-stage value at the witness; unbounded selection means empty
    // domain in the chosen sense.
    let rhs = p.follower_rhs(&x, &z);
    let mut stage1 = LpProblem::new(m);
    stage1.objective = p.d.clone();
    for i in 0..s {
        stage1.add_row(p.a.row(i).to_vec(), RowSense::Le, rhs[i]);
    }
    let first = solve_lp(&stage1)?;
    match first.status {
        LpStatus::Infeasible | LpStatus::Unbounded => {
            // (a) produced a solvable system, so only unboundedness can land
            // here, and (b) already ruled it out; keep the guard anyway.
            return Ok(DomF::Empty(DomFailure::NoDualCertificate));
        }
        LpStatus::Optimal => {}
    }
    let mut stage2 = stage1.clone();
    let sign = match p.sense {
        crate::model::Sense::Optimistic => 1.0,
        crate::model::Sense::Pessimistic => -1.0,
    };
    stage2.objective = p.q.iter().map(|&v| sign * v).collect();
    stage2.add_row(p.d.clone(), RowSense::Le, first.value + 1e-9);
    let second = solve_lp(&stage2)?;
    match second.status {
        LpStatus::Optimal => Ok(DomF::NonEmpty {
            value: dot(&p.c, &x) + sign * second.value,
            x,
            z,
            dual_witness,
        }),
        LpStatus::Unbounded => Ok(DomF::Empty(DomFailure::UnboundedSelection)),
        LpStatus::Infeasible => unreachable!("stage-1 optimum is stage-2 feasible"),
    }
}

/// Convenience: solve `min obj` over a polyhedron.
pub fn solve_over_polyhedron(
    obj: &[f64],
    set: &Polyhedron,
) -> Result<LpResult, LpError> {
    let mut lp = LpProblem::new(set.dim());
    lp.objective = obj.to_vec();
    for i in 0..set.num_rows() {
        lp.add_row(set.g.row(i).to_vec(), RowSense::Le, set.h[i]);
    }
    solve_lp(&lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::inf_norm;

    fn simple(objective: Vec<f64>, rows: Vec<(Vec<f64>, RowSense, f64)>) -> LpProblem {
        let n = objective.len();
        let mut p = LpProblem::new(n);
        p.objective = objective;
        for (c, s, b) in rows {
            p.add_row(c, s, b);
        }
        p
    }

    #[test]
    fn two_variable_optimum() {
        // min -x - y s.t. x + y <= 1, x, y >= 0 -> value -1 on the facet.
        let mut p = simple(vec![-1.0, -1.0], vec![(vec![1.0, 1.0], RowSense::Le, 1.0)]);
        p.bounds = vec![(Some(0.0), None); 2];
        let r = solve_lp(&p).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.value + 1.0).abs() < 1e-9);
        assert!(r.certify_optimal(&p) < 1e-8);
        // Dual of the single row: y = -1 (Le row, minimization).
        assert!((r.duals[0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_with_certificate() {
        // x <= -1, x >= 1 is infeasible.
        let p = simple(
            vec![0.0],
            vec![(vec![1.0], RowSense::Le, -1.0), (vec![1.0], RowSense::Ge, 1.0)],
        );
        let r = solve_lp(&p).unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
        assert!(r.farkas_margin(&p).unwrap() > 1e-10);
        let u = r.farkas.as_ref().unwrap();
        // Sense-adjusted signs and u'M = 0, u'rhs < 0.
        assert!(u[0] >= -1e-12 && u[1] <= 1e-12);
        assert!((u[0] + u[1]).abs() < 1e-9, "u'M = {}", u[0] + u[1]);
        assert!(u[0] * -1.0 + u[1] * 1.0 < -1e-9);
    }

    #[test]
    fn unbounded_with_ray() {
        let p = simple(vec![-1.0, 0.0], vec![(vec![-1.0, 1.0], RowSense::Le, 0.0)]);
        let r = solve_lp(&p).unwrap();
        assert_eq!(r.status, LpStatus::Unbounded);
        let ray = r.ray.as_ref().unwrap();
        assert!(dot(&p.objective, ray) < -1e-9);
        // The ray respects the row: -r0 + r1 <= 0.
        assert!(-ray[0] + ray[1] <= 1e-9);
    }

    #[test]
    fn equality_rows_and_free_variables() {
        // min x + y s.t. x + 2y = 3, x - y = 0 -> x = y = 1, value 2.
        let p = simple(
            vec![1.0, 1.0],
            vec![
                (vec![1.0, 2.0], RowSense::Eq, 3.0),
                (vec![1.0, -1.0], RowSense::Eq, 0.0),
            ],
        );
        let r = solve_lp(&p).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.x[0] - 1.0).abs() < 1e-9 && (r.x[1] - 1.0).abs() < 1e-9);
        assert!((r.value - r.dual_objective).abs() < 1e-9);
    }

    #[test]
    fn double_bounded_variables() {
        let mut p = simple(vec![1.0, -2.0], vec![(vec![1.0, 1.0], RowSense::Le, 3.0)]);
        p.bounds = vec![(Some(-1.0), Some(4.0)), (Some(0.0), Some(2.5))];
        let r = solve_lp(&p).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.x[0] + 1.0).abs() < 1e-9);
        assert!((r.x[1] - 2.5).abs() < 1e-9);
        assert!((r.value - r.dual_objective).abs() < 1e-8);
    }

    #[test]
    fn contradictory_box_is_certified_infeasible() {
        let mut p = simple(vec![0.0], vec![]);
        p.bounds = vec![(Some(2.0), Some(1.0))];
        let r = solve_lp(&p).unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
        assert!(r.farkas_margin(&p).unwrap() > 1e-10);
    }

    #[test]
    fn deterministic_pivot_sequences() {
        let mut p = simple(
            vec![-2.0, -3.0, 1.0],
            vec![
                (vec![1.0, 1.0, 1.0], RowSense::Le, 4.0),
                (vec![1.0, 3.0, 0.0], RowSense::Le, 6.0),
                (vec![0.5, -1.0, 2.0], RowSense::Ge, -1.0),
            ],
        );
        p.bounds = vec![(Some(0.0), None); 3];
        let a = solve_lp(&p).unwrap();
        let b = solve_lp(&p).unwrap();
        assert_eq!(a.pivots, b.pivots);
        assert_eq!(a.x, b.x);
        assert_eq!(a.basis, b.basis);
    }

    #[test]
    fn gordan_examples() {
        // Identity-like A = [-1; 1; 1] (one column): u = (t, a, b) with
        // -t + a + b = 0 admits nonzero solutions -> incomplete.
        let a = Matrix::from_rows(vec![vec![-1.0], vec![1.0], vec![1.0]]).unwrap();
        match gordan_complete_recourse(&a).unwrap() {
            RecourseTest::Incomplete { witness } => {
                let s: f64 = witness.iter().sum();
                assert!((s - 1.0).abs() < 1e-9);
                assert!(witness.iter().all(|&u| u >= -1e-9));
                let atu = a.tr_mul_vec(&witness);
                assert!(inf_norm(&atu) < 1e-9);
            }
            other => panic!("expected incomplete, got {other:?}"),
        }
        // A = [1; -1] eliminates both signs: y <= r1, -y <= r2 always
        // solvable? No: u = (1, 1) gives A'u = 0 -> incomplete.
        let a = Matrix::from_rows(vec![vec![1.0], vec![-1.0]]).unwrap();
        assert!(matches!(
            gordan_complete_recourse(&a).unwrap(),
            RecourseTest::Incomplete { .. }
        ));
        // A = [1] (y <= r): complete (u >= 0 with u = 0 only).
        let a = Matrix::from_rows(vec![vec![1.0]]).unwrap();
        assert_eq!(gordan_complete_recourse(&a).unwrap(), RecourseTest::Complete);
        // 2x2 with linearly independent rows whose cone misses 0.
        let a = Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(gordan_complete_recourse(&a).unwrap(), RecourseTest::Complete);
    }

    #[test]
    fn random_lps_satisfy_certificates() {
        // Small deterministic batch; the acceptance suite runs the large one.
        let mut state = 0x1234_5678_u64;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) * (1.0 / (1u64 << 53) as f64)
        };
        let mut seen_optimal = 0;
        for _ in 0..500 {
            let n = 1 + (rnd() * 4.0) as usize;
            let rows = (rnd() * 5.0) as usize;
            let mut p = LpProblem::new(n);
            for j in 0..n {
                p.objective[j] = rnd() * 4.0 - 2.0;
                let kind = rnd();
                p.bounds[j] = if kind < 0.5 {
                    (Some(-1.0 - rnd()), Some(1.0 + rnd()))
                } else if kind < 0.7 {
                    (Some(-rnd()), None)
                } else if kind < 0.9 {
                    (None, Some(rnd()))
                } else {
                    (None, None)
                };
            }
            for _ in 0..rows {
                let coeffs: Vec<f64> = (0..n).map(|_| rnd() * 2.0 - 1.0).collect();
                let sense = match (rnd() * 3.0) as usize {
                    0 => RowSense::Le,
                    1 => RowSense::Ge,
                    _ => RowSense::Eq,
                };
                p.add_row(coeffs, sense, rnd() * 2.0 - 1.0);
            }
            let r = solve_lp(&p).unwrap();
            match r.status {
                LpStatus::Optimal => {
                    seen_optimal += 1;
                    assert!(r.certify_optimal(&p) < 1e-8, "certificate failed");
                }
                LpStatus::Infeasible => {
                    assert!(r.farkas_margin(&p).unwrap() > 0.0);
                }
                LpStatus::Unbounded => {
                    let ray = r.ray.as_ref().unwrap();
                    assert!(dot(&p.objective, ray) < -1e-7);
                }
            }
        }
        assert!(seen_optimal > 50, "generator should produce solvable LPs");
    }
}
