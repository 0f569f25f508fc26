//! Value iteration for the discounted Bellman operator
//! `(ℒ_λ v)(x) = max_i [ A(τ_i x) + λ·v(τ_i x) ]` on a uniform grid, and the
//! diagnostics derived from its fixed point: the rate function, the branch
//! gap and its zeros (turning points), greedy backward realizers, empirical
//! maximizing measures and discount sweeps.

use rayon::prelude::*;
use serde::Serialize;

use crate::potentials::Potential;
use crate::symbolic::SymbolSeq;
use crate::{branch, doubling, Error, Result};

/// Iteration cap for `solve_subaction`.
pub const MAX_ITERATIONS: usize = 1_000_000;

/// Recurrence window and tolerance for backward-orbit periodicity detection.
const RECURRENCE_WINDOW: usize = 64;
const RECURRENCE_EPS: f64 = 1e-9;

/// Values of a real function at the nodes `x_j = j/n`, with linear
/// interpolation in between and periodic wrap from `x_{n−1}` to `x_0`.
#[derive(Clone, Debug, Serialize)]
pub struct GridFunction {
    n: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Self {
        assert!(values.len() >= 2, "grid needs at least 2 nodes");
        GridFunction {
            n: values.len(),
            values,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Self {
        Self::new((0..n).map(|j| f(j as f64 / n as f64)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node_x(&self, j: usize) -> f64 {
        j as f64 / self.n as f64
    }

    /// Linear interpolation at an arbitrary point of the circle.
    pub fn eval(&self, x: f64) -> f64 {
        let t = crate::wrap_unit(x);
        let pos = t * self.n as f64;
        let j = (pos.floor() as usize).min(self.n - 1);
        let fr = pos - j as f64;
        (1.0 - fr) * self.values[j] + fr * self.values[(j + 1) % self.n]
    }

    /// Node-wise sup distance to another grid function of equal size.
    pub fn sup_dist(&self, other: &GridFunction) -> f64 {
        assert_eq!(self.n, other.n, "grid size mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Outcome of `solve_subaction`.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub b: GridFunction,
    pub iterations: usize,
    pub final_residual: f64,
    pub lambda: f64,
    pub potential: String,
}

fn bellman_step(
    v: &GridFunction,
    a_of: &(impl Fn(f64) -> f64 + Sync),
    lambda: f64,
    d: usize,
) -> GridFunction {
    let n = v.n();
    let values = (0..n)
        .into_par_iter()
        .map(|j| {
            let x = j as f64 / n as f64;
            let mut best = f64::NEG_INFINITY;
            for i in 0..d {
                let y = branch(i as u8, x, d);
                let w = a_of(y) + lambda * v.eval(y);
                if w > best {
                    best = w;
                }
            }
            best
        })
        .collect();
    GridFunction::new(values)
}

/// One application of the discounted Bellman operator. Monotone and a
/// λ-contraction in the sup norm (linear interpolation is a convex
/// combination, so the contraction bound survives discretization).
pub fn bellman_apply(v: &GridFunction, pot: &Potential, lambda: f64, d: usize) -> GridFunction {
    bellman_step(v, &|y| pot.value(y), lambda, d)
}

fn solve_value_fn(
    a_of: &(impl Fn(f64) -> f64 + Sync),
    lambda: f64,
    d: usize,
    n: usize,
    tol: f64,
    cap: usize,
) -> Result<(GridFunction, usize, f64)> {
    assert!(0.0 < lambda && lambda < 1.0, "lambda must lie in (0,1)");
    assert!(n >= 2, "grid size must be at least 2");
    // Successive-iterate stop rule: ‖v_{k+1} − v_k‖ ≤ tol·(1−λ)/λ gives
    // ‖v_{k+1} − v*‖ ≤ tol for the discretized fixed point v*.
    let stop = tol * (1.0 - lambda) / lambda;
    let mut v = GridFunction::zeros(n);
    let mut residual = f64::INFINITY;
    for it in 1..=cap {
        let w = bellman_step(&v, a_of, lambda, d);
        residual = w.sup_dist(&v);
        v = w;
        if residual <= stop {
            return Ok((v, it, residual));
        }
    }
    Err(Error::NoConvergence {
        iterations: cap,
        residual,
    })
}

/// Iterates the Bellman operator from `v ≡ 0` until the fixed point of the
/// discretized operator is pinned within `tol` in sup norm.
pub fn solve_subaction(
    pot: &Potential,
    lambda: f64,
    d: usize,
    n: usize,
    tol: f64,
) -> Result<SolveReport> {
    solve_subaction_capped(pot, lambda, d, n, tol, MAX_ITERATIONS)
}

/// `solve_subaction` with an explicit iteration cap; exceeding it returns
/// the non-convergence error carrying the last residual.
pub fn solve_subaction_capped(
    pot: &Potential,
    lambda: f64,
    d: usize,
    n: usize,
    tol: f64,
    cap: usize,
) -> Result<SolveReport> {
    let (b, iterations, final_residual) =
        solve_value_fn(&|y| pot.value(y), lambda, d, n, tol, cap)?;
    Ok(SolveReport {
        b,
        iterations,
        final_residual,
        lambda,
        potential: pot.name().to_string(),
    })
}

/// Solves for both `A` and `A + (g∘T)/λ − g` and returns
/// `‖b_{A′} − (b_A + g/λ)‖∞` over the nodes; the two subactions must agree
/// up to the coboundary shift.
pub fn coboundary_shift_check(
    pot: &Potential,
    g: &GridFunction,
    lambda: f64,
    d: usize,
    n: usize,
    tol: f64,
) -> Result<f64> {
    let (b, _, _) = solve_value_fn(&|y| pot.value(y), lambda, d, n, tol, MAX_ITERATIONS)?;
    let shifted = |y: f64| pot.value(y) + g.eval(doubling(y, d)) / lambda - g.eval(y);
    let (b_shift, _, _) = solve_value_fn(&shifted, lambda, d, n, tol, MAX_ITERATIONS)?;
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let x = j as f64 / n as f64;
        worst = worst.max((b_shift.eval(x) - (b.eval(x) + g.eval(x) / lambda)).abs());
    }
    Ok(worst)
}

/// The rate function `R(z) = b(T z) − λ·b(z) − A(z) ≥ 0`, sampled at the
/// grid nodes (where `T z` lands on a node exactly).
pub fn rate_function(b: &GridFunction, pot: &Potential, lambda: f64, d: usize) -> GridFunction {
    let n = b.n();
    let values = (0..n)
        .map(|j| {
            let x = j as f64 / n as f64;
            b.values()[(d * j) % n] - lambda * b.values()[j] - pot.value(x)
        })
        .collect();
    GridFunction::new(values)
}

/// Pointwise rate `R(z) = b(T z) − λ·b(z) − A(z)` via interpolation of `b`.
pub fn rate_at(b: &GridFunction, pot: &Potential, lambda: f64, d: usize, z: f64) -> f64 {
    b.eval(doubling(z, d)) - lambda * b.eval(z) - pot.value(z)
}

/// Branch gap for `d = 2`:
/// `gap(x) = (λ·b(τ₁x) + A(τ₁x)) − (λ·b(τ₀x) + A(τ₀x))`.
/// Its zero set is the set of turning points.
pub fn gap_at(b: &GridFunction, pot: &Potential, lambda: f64, x: f64) -> f64 {
    let y1 = x / 2.0 + 0.5;
    let y0 = x / 2.0;
    (lambda * b.eval(y1) + pot.value(y1)) - (lambda * b.eval(y0) + pot.value(y0))
}

/// The gap sampled at the grid nodes.
pub fn gap_function(b: &GridFunction, pot: &Potential, lambda: f64) -> GridFunction {
    GridFunction::new(
        (0..b.n())
            .map(|j| gap_at(b, pot, lambda, b.node_x(j)))
            .collect(),
    )
}

/// Turning points of `b`: zeros of the branch gap.
#[derive(Clone, Debug, Serialize)]
pub struct TurningPoints {
    pub points: Vec<f64>,
    /// Set when the gap vanishes identically within the tie tolerance; the
    /// zero set is then the whole circle and `points` is left empty.
    pub degenerate: bool,
}

impl TurningPoints {
    pub fn count(&self) -> usize {
        self.points.len()
    }
}

/// Brackets sign changes of the gap over the grid and refines each root by
/// bisection to 1e−8. Nodes where the gap vanishes within `tie_tol` count as
/// roots directly.
pub fn turning_points(
    b: &GridFunction,
    pot: &Potential,
    lambda: f64,
    tie_tol: f64,
) -> TurningPoints {
    let n = b.n();
    let gap: Vec<f64> = (0..n)
        .map(|j| gap_at(b, pot, lambda, b.node_x(j)))
        .collect();
    let max_abs = gap.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    if max_abs <= tie_tol {
        return TurningPoints {
            points: Vec::new(),
            degenerate: true,
        };
    }
    let mut roots = Vec::new();
    for j in 0..n {
        let x = b.node_x(j);
        if gap[j].abs() <= tie_tol {
            roots.push(x);
            continue;
        }
        if j + 1 < n && gap[j + 1].abs() > tie_tol && gap[j] * gap[j + 1] < 0.0 {
            let (mut lo, mut hi) = (x, b.node_x(j + 1));
            let mut g_lo = gap[j];
            while hi - lo > 1e-9 {
                let mid = 0.5 * (lo + hi);
                let g_mid = gap_at(b, pot, lambda, mid);
                if g_mid == 0.0 {
                    lo = mid;
                    hi = mid;
                } else if g_lo * g_mid < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    g_lo = g_mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-7);
    TurningPoints {
        points: roots,
        degenerate: false,
    }
}

/// Greedy backward itinerary from a point.
#[derive(Clone, Debug)]
pub struct RealizerReport {
    /// Chosen branch digits, in backward order.
    pub digits: Vec<u8>,
    /// Eventually periodic sequence, when the visited points recur.
    pub seq: Option<SymbolSeq>,
    /// Steps at which two or more branches tied within the tolerance.
    pub tie_steps: Vec<usize>,
    /// Points visited (after each backward step).
    pub points: Vec<f64>,
}

/// Descends backwards from `x0`, at each step choosing the branch that
/// maximizes `λ·b(τ_i y) + A(τ_i y)` (ties broken toward the larger digit).
/// Point recurrence within 1e−9 over a sliding window closes the itinerary
/// into an eventually periodic sequence.
pub fn realizer(
    b: &GridFunction,
    pot: &Potential,
    lambda: f64,
    d: usize,
    x0: f64,
    depth: usize,
    tie_tol: f64,
) -> RealizerReport {
    let mut digits: Vec<u8> = Vec::with_capacity(depth);
    let mut points: Vec<f64> = Vec::with_capacity(depth);
    let mut tie_steps = Vec::new();
    let mut y = crate::wrap_unit(x0);
    let mut seq = None;
    for k in 0..depth {
        let mut best = f64::NEG_INFINITY;
        let mut best_i = 0u8;
        let mut tie = false;
        for i in (0..d as u8).rev() {
            let cand = branch(i, y, d);
            let w = lambda * b.eval(cand) + pot.value(cand);
            if w > best + tie_tol {
                best = w;
                best_i = i;
                tie = false;
            } else if w > best - tie_tol {
                // Within tolerance of the current best: a tie. The larger
                // digit was visited first, so keep it.
                tie = true;
                if w > best {
                    best = w;
                }
            }
        }
        if tie {
            tie_steps.push(k);
        }
        y = branch(best_i, y, d);
        digits.push(best_i);
        points.push(y);
        // Recurrence scan over the recent window.
        let lo = k.saturating_sub(RECURRENCE_WINDOW);
        if let Some(m) = (lo..k).find(|&m| (points[m] - y).abs() <= RECURRENCE_EPS) {
            let pre = digits[..=m].to_vec();
            let per = digits[m + 1..=k].to_vec();
            seq = Some(SymbolSeq::new(pre, per, d).expect("digits are valid"));
            break;
        }
    }
    RealizerReport {
        digits,
        seq,
        tie_steps,
        points,
    }
}

/// Visit statistics of a backward orbit.
#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalMeasure {
    /// Visit frequency per grid bin (`n` bins over `[0,1)`).
    pub histogram: Vec<f64>,
    /// Detected periodic tail: orbit points in visit order.
    pub orbit: Option<OrbitReport>,
    /// Set when tie-breaking decided most steps (the measure is then an
    /// artifact of the tie rule, not of the potential).
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitReport {
    pub points: Vec<f64>,
    pub period: usize,
}

/// Runs the greedy backward descent for `n_steps` and histograms the visited
/// points over the solver grid.
pub fn empirical_measure(
    b: &GridFunction,
    pot: &Potential,
    lambda: f64,
    d: usize,
    x0: f64,
    n_steps: usize,
) -> EmpiricalMeasure {
    let tie_tol = 1e-9 * (1.0 + pot.sup_abs());
    let rep = realizer(b, pot, lambda, d, x0, n_steps, tie_tol);
    let n = b.n();
    let mut histogram = vec![0.0; n];
    // When the orbit closed early, continue the periodic tail for the count.
    let total = n_steps.max(rep.points.len());
    for k in 0..total {
        let y = if k < rep.points.len() {
            rep.points[k]
        } else if let Some(seq) = &rep.seq {
            let p = seq.period().len();
            let base = rep.points.len() - p;
            rep.points[base + (k - base) % p]
        } else {
            break;
        };
        let bin = ((y * n as f64).floor() as usize).min(n - 1);
        histogram[bin] += 1.0 / total as f64;
    }
    let orbit = rep.seq.as_ref().map(|seq| {
        let p = seq.period().len();
        let pts = rep.points[rep.points.len() - p..].to_vec();
        OrbitReport {
            points: pts,
            period: p,
        }
    });
    let degenerate = rep.tie_steps.len() * 2 >= rep.digits.len().max(1);
    EmpiricalMeasure {
        histogram,
        orbit,
        degenerate,
    }
}

/// One row of a discount sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub max_b: f64,
    /// `(1−λ)·max b_λ`, the approximation of the maximal ergodic average.
    pub scaled: f64,
    pub iterations: usize,
    /// Contraction degrades like 1/(1−λ); flagged for λ ≥ 0.95.
    pub slow: bool,
}

/// Solves for each discount in the list and tabulates `(1−λ)·max b_λ`.
pub fn lambda_sweep(
    pot: &Potential,
    lambdas: &[f64],
    d: usize,
    n: usize,
    tol: f64,
) -> Result<Vec<SweepRow>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let rep = solve_subaction(pot, lambda, d, n, tol)?;
            let max_b = rep.b.max();
            Ok(SweepRow {
                lambda,
                max_b,
                scaled: (1.0 - lambda) * max_b,
                iterations: rep.iterations,
                slow: lambda >= 0.95,
            })
        })
        .collect()
}
