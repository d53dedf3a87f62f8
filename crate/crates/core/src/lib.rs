//! Solver library for bilevel stochastic linear programs with a random
//! right-hand side over finite discrete scenario sets.
//!
//! The leader picks `x` from a polyhedron `X`; for each scenario `z` the
//! follower solves `min { d'y : Ay <= Tx + b0 + z }` and the leader pays
//! `f(x, z) = c'x + q'y` for an optimal `y`, resolved optimistically or
//! pessimistically when the follower's optimal set is not a singleton. The
//! random total cost `f(x, Z)` is aggregated by a risk functional, and the
//! resulting nonsmooth program is evaluated, reformulated as a single-level
//! mathematical program with complementarity structure, and solved globally
//! for desk-sized instances by branch-and-bound.
//!
//! Module map:
//! - [`matrix`]: dense matrices sized for tableau work.
//! - [`model`]: problem data, scenario distributions, risk specifications.
//! - [`lp`]: two-phase simplex kernel with duals, Farkas certificates and
//!   rays; complete-recourse and domain checks.
//! - [`lower`]: follower evaluation (lexicographic two-stage solves), outcome
//!   distributions, induced feasible sets.
//! - [`risk`]: risk functionals on finite discrete distributions.
//! - [`rng`]: counter-based deterministic sampling.
//! - [`reformulate`]: deterministic-equivalent single-level forms and their
//!   complementarity systems.
//! - [`solve`]: global branch-and-bound, penalty-path local search, grid
//!   refinement, stationarity checks.
//! - [`dominance`]: first/second-order stochastic dominance tests and
//!   dominance-constrained solves.
//! - [`analysis`]: closed-form reference curves, empirical resampling,
//!   stability experiments, Lipschitz estimation.

pub mod analysis;
pub mod dominance;
pub mod lower;
pub mod lp;
pub mod matrix;
pub mod model;
pub mod reformulate;
pub mod risk;
pub mod rng;
pub mod solve;

pub use lp::{solve_lp, LpProblem, LpResult, LpStatus, RowSense};
pub use matrix::Matrix;
pub use model::{
    BilevelStochasticProblem, DiscreteDistribution, ModelError, Polyhedron, RiskSpec, Sense,
};
