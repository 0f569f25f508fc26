//! Numerical laboratory for discounted ergodic optimization on the expanding
//! circle map `T(x) = d·x (mod 1)`.
//!
//! Given a discount `λ ∈ (0,1)` and a potential `A: S¹ → ℝ`, the skew product
//! `F(x,s) = (T(x), λ·s + A(x))` has a global attractor whose upper boundary
//! is the graph of the unique λ-calibrated subaction
//!
//! ```text
//! b(x) = max over T(y) = x of [ λ·b(y) + A(y) ].
//! ```
//!
//! The crate computes this boundary along three independent routes and
//! cross-checks them:
//!
//! * [`solver`] — value iteration for the discounted Bellman operator on a
//!   grid, plus rate/gap diagnostics, turning points, realizers and
//!   empirical measures;
//! * [`series`] — the symbolic series `S(x,a) = Σ λᵏ A(τ_{k,a} x)` over
//!   backward branch itineraries `a`, assembled into a finite envelope of
//!   curves with refined switch points;
//! * [`quadratic`] — closed forms for `d = 2` and quadratic potentials
//!   (twist criterion, crossing formula, explicit two-piece subaction).
//!
//! [`transport`] adds the dual side (dual potential, dual subaction,
//! admissibility gap, plan orbits) and [`attractor`] produces forward-orbit
//! point clouds of the attractor itself.

pub mod attractor;
pub mod potentials;
pub mod quadratic;
pub mod series;
pub mod solver;
pub mod symbolic;
pub mod transport;

pub use potentials::Potential;
pub use series::{Envelope, EnvelopePiece, SeriesValue};
pub use solver::{GridFunction, SolveReport};
pub use symbolic::SymbolSeq;

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("alphabet mismatch: d = {0} vs d = {1}")]
    AlphabetMismatch(usize, usize),
    #[error("digit {digit} out of range for alphabet {{0,…,{}}}", d - 1)]
    DigitOutOfRange { digit: u8, d: usize },
    #[error("operation only supports d = 2, got d = {0}")]
    BinaryOnly(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("solver did not converge in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("no crossing in bracket [{0}, {1}]")]
    NoCrossing(f64, f64),
    #[error("x = {0} is on a branch boundary")]
    BranchBoundary(f64),
    #[error("parallel curves: Z(a) = Z(b)")]
    ParallelCurves,
    #[error("derivative unavailable for potential '{0}'")]
    NoDerivative(String),
    #[error("potential is not symmetric")]
    NotSymmetric,
    #[error("twist condition could not be verified")]
    NotTwist,
    #[error("envelope pieces do not cover [0,1] (gap near x = {0})")]
    CoverageGap(f64),
    #[error("start pair is not optimal: p = {0:.3e}")]
    NonOptimalStart(f64),
    #[error("attractor cloud is empty")]
    EmptyCloud,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Wraps a point of the real line onto the circle `[0,1)`.
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let t = x - x.floor();
    if t >= 1.0 {
        0.0
    } else {
        t
    }
}

/// The expanding map `T(x) = d·x (mod 1)`.
#[inline]
pub fn doubling(x: f64, d: usize) -> f64 {
    wrap_unit(x * d as f64)
}

/// The inverse branch `τ_i(y) = (y + i)/d`, `i ∈ {0,…,d−1}`.
#[inline]
pub fn branch(i: u8, y: f64, d: usize) -> f64 {
    (y + i as f64) / d as f64
}
