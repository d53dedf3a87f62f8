//! Reference instance, closed-form value curves, resampling and stability
//! experiments, and Lipschitz estimation.
//!
//! Everything here is either a fixture (the worked instance and its
//! discretizations) or an independent yardstick: the closed-form expected
//! value [`oracle_e1`] and its quadrature cross-check never touch the LP
//! machinery, so they can referee it.

use crate::lower::eval_f;
use crate::matrix::Matrix;
use crate::model::{BilevelStochasticProblem, DiscreteDistribution, Polyhedron, Sense};
use crate::risk::q_risk;
use crate::rng::CounterRng;
use serde::Serialize;
use std::time::Instant;

/// The worked single-leader / single-follower instance used throughout the
/// tests and the command line (`example-e1`):
///
/// ```text
///     leader:    x in [1, 6], cost 0'x
///     follower:  max y   s.t. y <= x + 2 + z1,  y <= -x + 8.5 + z2,  y >= 1
///     leader pays q'y = y (the follower's response)
/// ```
///
/// with `Z = (z1, z2, 0)` uniform on `[-1/2, 1/2]^2`. Discrete stand-ins for
/// the uniform law are produced by the builders below.
pub fn example_e1(scenarios: DiscreteDistribution) -> BilevelStochasticProblem {
    BilevelStochasticProblem {
        c: vec![0.0],
        q: vec![1.0],
        d: vec![-1.0],
        a: Matrix::from_rows(vec![vec![1.0], vec![1.0], vec![-1.0]]).unwrap(),
        t: Matrix::from_rows(vec![vec![1.0], vec![-1.0], vec![0.0]]).unwrap(),
        b0: vec![2.0, 8.5, -1.0],
        x_set: Polyhedron::from_box(&[1.0], &[6.0]),
        scenarios,
        sense: Sense::Optimistic,
    }
}

/// Two coupled atoms `z1 = z2 = +-1/2`: the coarsest symmetric stand-in.
/// Its expected response is `min(x + 2, -x + 8.5)`.
pub fn example_e1_two_scenario() -> BilevelStochasticProblem {
    example_e1(
        DiscreteDistribution::new(
            vec![vec![-0.5, -0.5, 0.0], vec![0.5, 0.5, 0.0]],
            vec![0.5, 0.5],
        )
        .unwrap(),
    )
}

/// Product midpoint grid with `l x l` equally likely atoms for the uniform
/// law on `[-1/2, 1/2]^2` (third coordinate fixed to zero).
pub fn example_e1_grid(l: usize) -> BilevelStochasticProblem {
    assert!(l >= 1);
    let mut atoms = Vec::with_capacity(l * l);
    for i in 0..l {
        for j in 0..l {
            let z1 = (i as f64 + 0.5) / l as f64 - 0.5;
            let z2 = (j as f64 + 0.5) / l as f64 - 0.5;
            atoms.push(vec![z1, z2, 0.0]);
        }
    }
    let probs = vec![1.0 / (l * l) as f64; l * l];
    example_e1(DiscreteDistribution::new(atoms, probs).unwrap())
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum AnalysisError {
    #[error("x = {x} is outside the leader interval [1, 6]")]
    OutOfDomain { x: f64 },
}

// ---------------------------------------------------------------------------
// Closed-form expected value of the continuous-uniform instance
// ---------------------------------------------------------------------------

/// Exact `E[f(x, Z)]` for the instance above under the *continuous* uniform
/// law on the square. Obtained by integrating
/// `min(x + 2 + z1, -x + 8.5 + z2)` over the square: four regimes in `x`
/// depending on whether the crossing line `z1 - z2 = 6.5 - 2x` misses or
/// cuts the square.
///
/// ```text
///     [1.00, 2.75]  x + 2                                   (left branch only)
///     [2.75, 3.25]  -(4/3)x^3 + 11x^2 - (117/4)x + 1427/48  (corner cut)
///     [3.25, 3.75]  (4/3)x^3 - 15x^2 + (221/4)x - 989/16    (corner cut)
///     [3.75, 6.00]  -x + 8.5                                (right branch only)
/// ```
pub fn oracle_e1(x: f64) -> Result<f64, AnalysisError> {
    if !(1.0 - 1e-12..=6.0 + 1e-12).contains(&x) {
        return Err(AnalysisError::OutOfDomain { x });
    }
    Ok(if x <= 2.75 {
        x + 2.0
    } else if x <= 3.25 {
        ((-4.0 / 3.0 * x + 11.0) * x - 117.0 / 4.0) * x + 1427.0 / 48.0
    } else if x <= 3.75 {
        ((4.0 / 3.0 * x - 15.0) * x + 221.0 / 4.0) * x - 989.0 / 16.0
    } else {
        -x + 8.5
    })
}

/// Exact minimizer and value of [`oracle_e1`] on `[lo, hi]`, found by
/// evaluating endpoints, piece boundaries, and stationary points of the
/// cubic pieces (the derivative roots at 2.25, 3.25, 4.25 — only 3.25 can
/// land inside its piece).
pub fn oracle_e1_min_on(lo: f64, hi: f64) -> Result<(f64, f64), AnalysisError> {
    let mut candidates = vec![lo, hi];
    for b in [2.75, 3.25, 3.75] {
        if (lo..=hi).contains(&b) {
            candidates.push(b);
        }
    }
    let mut best = (lo, oracle_e1(lo)?);
    for c in candidates {
        let v = oracle_e1(c)?;
        if v < best.1 {
            best = (c, v);
        }
    }
    Ok(best)
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// found by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let legendre = |x: f64| -> (f64, f64) {
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = pk;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        (p1, dp)
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x =
            (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(x);
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn gl_integrate(rule: &[(f64, f64)], lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mid, rad) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    rad * rule.iter().map(|&(x, w)| w * f(mid + rad * x)).sum::<f64>()
}

/// Independent cross-check of [`oracle_e1`]: iterated Gauss-Legendre
/// integration of the pointwise minimum over the square. The integrand is
/// linear in `z1` on either side of the crossing `z1 = 6.5 - 2x + z2`, and
/// the inner integral is piecewise quadratic in `z2` with kinks where the
/// crossing leaves the square, so splitting at those lines makes the rule
/// exact up to roundoff.
pub fn quadrature_e1(x: f64) -> f64 {
    let rule = gauss_legendre(24);
    let inner = |z2: f64| -> f64 {
        let a = x + 2.0; // left branch at z1 = 0
        let b = -x + 8.5 + z2; // right branch (constant in z1)
        let k = (b - a).clamp(-0.5, 0.5); // crossing, clipped to the square
        let mut v = 0.0;
        if k > -0.5 {
            v += gl_integrate(&rule, -0.5, k, |z1| (a + z1).min(b));
        }
        if k < 0.5 {
            v += gl_integrate(&rule, k, 0.5, |z1| (a + z1).min(b));
        }
        v
    };
    // Outer kinks: the crossing hits z1 = +-1/2 at z2 = 2x - 6 and 2x - 7.
    let mut cuts = vec![-0.5, 0.5];
    for c in [2.0 * x - 6.0, 2.0 * x - 7.0] {
        if (-0.5..=0.5).contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = 0.0;
    for win in cuts.windows(2) {
        if win[1] - win[0] > 1e-15 {
            total += gl_integrate(&rule, win[0], win[1], inner);
        }
    }
    total
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Source law for empirical resampling.
#[derive(Debug, Clone)]
pub enum ScenarioFamily {
    /// Independent uniform coordinates on a box (degenerate sides allowed).
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Resample atoms of a finite law by inverse transform.
    FiniteSupport { dist: DiscreteDistribution },
}

/// Empirical law of `n` independent draws (equal weights `1/n`), fully
/// determined by `(family, n, seed)`.
pub fn sample_empirical(
    family: &ScenarioFamily,
    n: usize,
    seed: u64,
) -> DiscreteDistribution {
    assert!(n > 0);
    let mut rng = CounterRng::new(seed);
    let atoms: Vec<Vec<f64>> = match family {
        ScenarioFamily::UniformBox { lo, hi } => (0..n)
            .map(|_| {
                lo.iter()
                    .zip(hi)
                    .map(|(&l, &h)| rng.uniform(l, h))
                    .collect()
            })
            .collect(),
        ScenarioFamily::FiniteSupport { dist } => {
            let cum: Vec<f64> = dist
                .probs()
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect();
            (0..n)
                .map(|_| {
                    let u = rng.next_f64();
                    let idx = cum.partition_point(|&c| c < u).min(dist.len() - 1);
                    dist.atom(idx).to_vec()
                })
                .collect()
        }
    };
    DiscreteDistribution::empirical(atoms).expect("empirical law is valid")
}

/// The square the reference instance draws from.
pub fn e1_uniform_family() -> ScenarioFamily {
    ScenarioFamily::UniformBox {
        lo: vec![-0.5, -0.5, 0.0],
        hi: vec![0.5, 0.5, 0.0],
    }
}

// ---------------------------------------------------------------------------
// Stability experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct StabilityConfig {
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub base_seed: u64,
}

/// One resampled solve: sample size, stream tag, attained empirical optimum
/// and minimizer, error against the exact continuous optimum, and wall time.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub n: usize,
    pub seed: u64,
    pub value: f64,
    pub x_star: f64,
    pub error: f64,
    pub wall_ms: f64,
}

/// Resample the reference instance and solve each empirical surrogate of
/// `min_x E[f(x, Z_n)]` exactly.
///
/// Each scenario's `f(., z)` is a pointwise minimum of affine functions of
/// `x`, hence concave; so is any mixture. A concave objective on an interval
/// attains its minimum at an endpoint, so comparing the two endpoints solves
/// every surrogate exactly — no grid error enters the experiment.
pub fn stability_experiment(cfg: &StabilityConfig) -> Vec<StabilityRow> {
    let family = e1_uniform_family();
    let (_, exact) = oracle_e1_min_on(1.0, 6.0).expect("reference domain");
    let spec = crate::model::RiskSpec::Expectation;
    let mut rows = Vec::new();
    for &n in &cfg.sample_sizes {
        for rep in 0..cfg.replications {
            let tag = (n as u64).wrapping_mul(1_000_003).wrapping_add(rep as u64);
            let seed = CounterRng::stream(cfg.base_seed, tag).nth_u64(0);
            let start = Instant::now();
            let p = example_e1(sample_empirical(&family, n, seed));
            let mut best = (f64::INFINITY, f64::NAN);
            for x in [1.0, 6.0] {
                let v = q_risk(&p, &spec, &[x]).expect("reference instance is feasible");
                if v < best.0 {
                    best = (v, x);
                }
            }
            rows.push(StabilityRow {
                n,
                seed,
                value: best.0,
                x_star: best.1,
                error: (best.0 - exact).abs(),
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
    }
    rows
}

/// Render rows as CSV with full-precision floats.
pub fn stability_csv(rows: &[StabilityRow]) -> String {
    let mut out = String::from("n,seed,value,x_star,error,wall_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.16e},{:.16e},{:.16e},{:.3}\n",
            r.n, r.seed, r.value, r.x_star, r.error, r.wall_ms
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Escaping mass
// ---------------------------------------------------------------------------

/// One member of the escaping-mass sequence.
#[derive(Debug, Clone, Serialize)]
pub struct EscapingMassStep {
    pub l: u64,
    /// Probability placed on the runaway atom (`1/l`).
    pub mass_far: f64,
    /// Location of the runaway atom (`l`).
    pub atom_far: f64,
    /// Expected cost under this member, computed with per-term division so
    /// the product `(1/l) * l` suffers no rounding.
    pub expectation: f64,
}

/// Demonstration that weak convergence of the scenario law does not carry
/// the value with it. The laws `nu_l = (1 - 1/l) d_0 + (1/l) d_l` converge
/// weakly to a point mass at zero, yet the expected cost of the follower
/// response stays exactly `1.0` along the whole sequence while the limit
/// law yields exactly `0.0`: a unit of value escapes with the vanishing
/// mass. Built on a one-variable instance whose outcome equals the
/// perturbation itself (`f(x, z) = z` at the only feasible `x = 0`).
#[derive(Debug, Clone, Serialize)]
pub struct EscapingMass {
    pub steps: Vec<EscapingMassStep>,
    pub limit_value: f64,
    pub gap: f64,
}

fn escaping_mass_instance() -> BilevelStochasticProblem {
    // Follower: max y s.t. y <= 0*x + 0 + z; leader pays y, earns nothing
    // else; leader set {0}.
    BilevelStochasticProblem {
        c: vec![0.0],
        q: vec![1.0],
        d: vec![-1.0],
        a: Matrix::from_rows(vec![vec![1.0]]).unwrap(),
        t: Matrix::from_rows(vec![vec![0.0]]).unwrap(),
        b0: vec![0.0],
        x_set: Polyhedron::from_box(&[0.0], &[0.0]),
        scenarios: DiscreteDistribution::dirac(0.0),
        sense: Sense::Optimistic,
    }
}

/// Evaluate the sequence at the given indices (each `l >= 1`; at `l = 1`
/// the whole mass sits on the runaway atom).
pub fn counterexample_escaping_mass(ls: &[u64]) -> EscapingMass {
    let p = escaping_mass_instance();
    let mut steps = Vec::new();
    for &l in ls {
        assert!(l >= 1);
        let lf = l as f64;
        // Follower responses at the two atoms, via the real evaluator.
        let f_zero = eval_f(&p, &[0.0], &[0.0]).expect("feasible");
        let f_far = eval_f(&p, &[0.0], &[lf]).expect("feasible");
        // Expectation with a division per term instead of a product with
        // the rounded weight 1/l: (l - 1)/l * 0 and l/l = 1 are exact.
        let expectation = (f_zero * (lf - 1.0)) / lf + f_far / lf;
        steps.push(EscapingMassStep {
            l,
            mass_far: 1.0 / lf,
            atom_far: lf,
            expectation,
        });
    }
    let limit_value = eval_f(&p, &[0.0], &[0.0]).expect("feasible");
    let gap = steps.last().map_or(0.0, |s| s.expectation - limit_value);
    EscapingMass { steps, limit_value, gap }
}

// ---------------------------------------------------------------------------
// Lipschitz estimation
// ---------------------------------------------------------------------------

/// Largest observed difference quotient of `f` over random point pairs in a
/// box. Pairs where `f` is undefined are skipped.
pub fn empirical_lipschitz<F>(
    f: F,
    lo: &[f64],
    hi: &[f64],
    pairs: usize,
    seed: u64,
) -> f64
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let mut rng = CounterRng::new(seed);
    let dim = lo.len();
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let a: Vec<f64> = (0..dim).map(|j| rng.uniform(lo[j], hi[j])).collect();
        let b: Vec<f64> = (0..dim).map(|j| rng.uniform(lo[j], hi[j])).collect();
        let dist: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        if dist < 1e-12 {
            continue;
        }
        if let (Some(fa), Some(fb)) = (f(&a), f(&b)) {
            worst = worst.max((fa - fb).abs() / dist);
        }
    }
    worst
}

/// Empirical Lipschitz modulus of the leader's objective `x -> R[f(x, Z)]`
/// over an axis-aligned region: the largest secant slope across `pairs`
/// random point pairs. Points where the evaluation fails (outside the
/// induced domain) are skipped.
pub fn lipschitz_estimate(
    p: &BilevelStochasticProblem,
    spec: &crate::model::RiskSpec,
    lo: &[f64],
    hi: &[f64],
    pairs: usize,
    seed: u64,
) -> f64 {
    empirical_lipschitz(|x| crate::risk::q_risk(p, spec, x).ok(), lo, hi, pairs, seed)
}
