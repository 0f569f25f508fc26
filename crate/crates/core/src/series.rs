//! The symbolic series `S(x,a) = Σ_k λᵏ A(τ_{k,a} x)` along a backward
//! branch itinerary `a`, its derivative, differences and crossing points,
//! and the assembly of the calibrated subaction as a finite upper envelope
//! of the curves `S(·,a)`.
//!
//! Partial sums are closed analytically over the attracting cycle of the
//! periodic branch block once the backward orbit has converged to it, so
//! eventually periodic itineraries are evaluated essentially to machine
//! precision instead of by plain truncation.

use rayon::prelude::*;
use serde::Serialize;

use crate::potentials::Potential;
use crate::symbolic::SymbolSeq;
use crate::{branch, doubling, Error, Result};

/// Point distance at which the backward orbit counts as having reached the
/// attracting cycle of the periodic block.
const CONV_EPS: f64 = 1e-13;

/// A partial evaluation of `S(x,a)` with a certified remainder.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    /// `|true S − value| ≤ tail_bound`.
    pub tail_bound: f64,
    /// Truncation index / index at which the periodic tail was closed.
    pub depth: usize,
}

struct SeriesTerm<'a> {
    f: &'a dyn Fn(f64) -> f64,
    sup_f: f64,
    lip_f: Option<f64>,
}

/// Sums `Σ_k scale·ratioᵏ f(y_k)` where `y_k = τ_{a_k}(y_{k−1})`, `y_{−1} = x`.
/// When the orbit reaches the attracting cycle of the periodic block at a
/// block boundary, the tail is closed by the geometric sum over the cycle.
fn series_sum(
    term: &SeriesTerm,
    a: &SymbolSeq,
    x: f64,
    ratio: f64,
    scale: f64,
    tol: f64,
) -> SeriesValue {
    let d = a.d();
    let q = a.preperiod().len();
    let p = a.period().len();

    // Exact cycle of the periodic block: applying the block once is the
    // affine contraction y ↦ (y + C)/dᵖ with fixed point z* = C/(dᵖ − 1).
    let dp = (d as f64).powi(p as i32);
    let closable = dp.is_finite() && dp > 1.0;
    let z_star = if closable {
        let mut c = 0.0;
        let mut w = 1.0;
        for &digit in a.period() {
            c += w * digit as f64;
            w *= d as f64;
        }
        c / (dp - 1.0)
    } else {
        f64::NAN
    };
    let denom = 1.0 - ratio.powi(p as i32);

    // Depth at which plain truncation already meets the tolerance.
    let n_tol = if term.sup_f == 0.0 {
        q + p + 1
    } else {
        let need = tol * (1.0 - ratio) / (scale * term.sup_f);
        if need >= 1.0 {
            q + p + 1
        } else {
            (need.ln() / ratio.ln()).ceil() as usize + 1
        }
    };
    // The orbit contracts by 1/d per step, so the cycle is reached well
    // within q + 60 steps for d = 2; allow the longer of the two limits.
    let n_limit = n_tol.max(q + 60 + 2 * p).min(200_000);

    // x = 1 is a legal evaluation point for S: the branch maps absorb it
    // into the interior, so keep it rather than wrapping to 0.
    let mut y = if x >= 1.0 {
        1.0
    } else {
        crate::wrap_unit(x.max(0.0))
    };
    let mut value = 0.0;
    let mut w = scale;
    for k in 0..n_limit {
        if closable && k >= q && (k - q).is_multiple_of(p) && (y - z_star).abs() <= CONV_EPS {
            // Evaluate the cycle the way the orbit reads it. The all-top
            // cycle has z* = 1, where the 1-periodic wrap would substitute
            // A(0); an orbit still strictly below 1 sees the left limit
            // instead, so nudge those cycle points just inside.
            let top = if y >= 1.0 { 1.0 } else { 1.0 - 1e-12 };
            let mut z = z_star;
            let mut cycle_sum = 0.0;
            let mut rw = 1.0;
            let mut nudged = 0.0;
            for &digit in a.period() {
                z = branch(digit, z, d);
                let ze = z.min(top);
                nudged = f64::max(nudged, z - ze);
                cycle_sum += rw * (term.f)(ze);
                rw *= ratio;
            }
            value += w * cycle_sum / denom;
            let slack = match term.lip_f {
                Some(lip) => lip * ((y - z_star).abs() + nudged),
                None => term.sup_f * 1e-12,
            };
            return SeriesValue {
                value,
                tail_bound: w * slack / (1.0 - ratio) + 1e-300,
                depth: k,
            };
        }
        y = branch(a.digit(k), y, d);
        value += w * (term.f)(y);
        w *= ratio;
    }
    SeriesValue {
        value,
        tail_bound: w * term.sup_f / (1.0 - ratio),
        depth: n_limit,
    }
}

/// Evaluates `S(x,a) = Σ λᵏ A(τ_{k,a} x)` with remainder at most `tol`
/// (far tighter when the periodic tail closes).
pub fn s_value(pot: &Potential, lambda: f64, x: f64, a: &SymbolSeq, tol: f64) -> SeriesValue {
    let term = SeriesTerm {
        f: &|y| pot.value(y),
        sup_f: pot.sup_abs(),
        lip_f: Some(pot.deriv_sup()),
    };
    series_sum(&term, a, x, lambda, 1.0, tol)
}

/// Plain partial sum of the first `depth` terms, no cycle closure; the
/// fixed-truncation compatibility mode for coarse figure pipelines.
pub fn s_value_fixed_depth(
    pot: &Potential,
    lambda: f64,
    x: f64,
    a: &SymbolSeq,
    depth: usize,
) -> SeriesValue {
    let mut y = if x >= 1.0 { 1.0 } else { crate::wrap_unit(x) };
    let mut value = 0.0;
    let mut w = 1.0;
    for k in 0..depth {
        y = branch(a.digit(k), y, a.d());
        value += w * pot.value(y);
        w *= lambda;
    }
    SeriesValue {
        value,
        tail_bound: w * pot.sup_abs() / (1.0 - lambda),
        depth,
    }
}

/// Residual of the cocycle identity `S(T x, π(x)·a) = A(x) + λ·S(x,a)`.
/// Branch-boundary points (where `d·x` is an integer) are rejected.
pub fn s_cocycle_check(
    pot: &Potential,
    lambda: f64,
    x: f64,
    a: &SymbolSeq,
    tol: f64,
) -> Result<f64> {
    let d = a.d();
    if (x * d as f64).fract() == 0.0 {
        return Err(Error::BranchBoundary(x));
    }
    let digit = crate::attractor::digit(x, d) as u8;
    let lifted = a.concat(digit)?;
    let lhs = s_value(pot, lambda, doubling(x, d), &lifted, tol);
    let rhs = s_value(pot, lambda, x, a, tol);
    Ok((lhs.value - pot.value(x) - lambda * rhs.value).abs())
}

/// The involution kernel `W(x,a) = S(x,a) − S(x̄,a)`.
pub fn w_value(
    pot: &Potential,
    lambda: f64,
    x: f64,
    a: &SymbolSeq,
    x_bar: f64,
    tol: f64,
) -> SeriesValue {
    let sx = s_value(pot, lambda, x, a, tol);
    let sb = s_value(pot, lambda, x_bar, a, tol);
    SeriesValue {
        value: sx.value - sb.value,
        tail_bound: sx.tail_bound + sb.tail_bound,
        depth: sx.depth.max(sb.depth),
    }
}

/// `∂S/∂x(x,a) = (1/2) Σ (λ/2)ᵏ A′(τ_{k,a} x)` for `d = 2`.
pub fn s_deriv(pot: &Potential, lambda: f64, x: f64, a: &SymbolSeq, tol: f64) -> Result<f64> {
    if a.d() != 2 {
        return Err(Error::BinaryOnly(a.d()));
    }
    if pot.deriv1(0.3).is_none() {
        return Err(Error::NoDerivative(pot.name().to_string()));
    }
    let term = SeriesTerm {
        f: &|y| pot.deriv1(y).unwrap(),
        sup_f: pot.deriv_sup(),
        lip_f: pot.deriv2_sup(),
    };
    Ok(series_sum(&term, a, x, lambda / 2.0, 0.5, tol).value)
}

/// `Δ(x,a,b) = S(x,a) − S(x,b)` and its `x`-derivative.
pub fn delta(
    pot: &Potential,
    lambda: f64,
    x: f64,
    a: &SymbolSeq,
    b: &SymbolSeq,
    tol: f64,
) -> Result<(f64, f64)> {
    if a.d() != b.d() {
        return Err(Error::AlphabetMismatch(a.d(), b.d()));
    }
    let va = s_value(pot, lambda, x, a, tol);
    let vb = s_value(pot, lambda, x, b, tol);
    let da = s_deriv(pot, lambda, x, a, tol)?;
    let db = s_deriv(pot, lambda, x, b, tol)?;
    Ok((va.value - vb.value, da - db))
}

/// Bisects `Δ(·,a,b)` to 1e−10 inside a bracket where it changes sign.
pub fn crossing_point(
    pot: &Potential,
    lambda: f64,
    a: &SymbolSeq,
    b: &SymbolSeq,
    bracket: (f64, f64),
) -> Result<f64> {
    if a == b {
        return Err(Error::NoCrossing(bracket.0, bracket.1));
    }
    let tol = 1e-13 * (1.0 + pot.sup_abs());
    let dv = |x: f64| s_value(pot, lambda, x, a, tol).value - s_value(pot, lambda, x, b, tol).value;
    let (mut lo, mut hi) = bracket;
    let (mut f_lo, f_hi) = (dv(lo), dv(hi));
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo * f_hi > 0.0 {
        return Err(Error::NoCrossing(lo, hi));
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        let f_mid = dv(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_lo * f_mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Both sides of the transversality angle bound
/// `|Δ′(x,a,b)| ≤ ‖A′‖∞ (λ/2)ⁿ · 2/(2−λ)`, `n` the first differing digit.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AngleCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub first_diff: usize,
    pub ok: bool,
}

pub fn angle_bound_check(
    pot: &Potential,
    lambda: f64,
    a: &SymbolSeq,
    b: &SymbolSeq,
    x: f64,
) -> Result<AngleCheck> {
    let n = a
        .first_diff_index(b)
        .ok_or_else(|| Error::InvalidParameter("angle bound needs a ≠ b".into()))?;
    let da = s_deriv(pot, lambda, x, a, 1e-12)?;
    let db = s_deriv(pot, lambda, x, b, 1e-12)?;
    let lhs = (da - db).abs();
    let rhs = pot.deriv_sup() * (lambda / 2.0).powi(n as i32) * 2.0 / (2.0 - lambda);
    Ok(AngleCheck {
        lhs,
        rhs,
        first_diff: n,
        ok: lhs <= rhs + 1e-12,
    })
}

/// All canonical eventually periodic sequences with period length at most
/// `period_max` and preperiod length at most `preperiod_max`, sorted in
/// lexicographic order.
pub fn candidates(d: usize, period_max: usize, preperiod_max: usize) -> Vec<SymbolSeq> {
    assert!(period_max >= 1);
    let mut set = std::collections::BTreeSet::new();
    let words = |len: usize| -> Vec<Vec<u8>> {
        let mut out = vec![Vec::new()];
        for _ in 0..len {
            out = out
                .into_iter()
                .flat_map(|w| {
                    (0..d as u8).map(move |digit| {
                        let mut w2 = w.clone();
                        w2.push(digit);
                        w2
                    })
                })
                .collect();
        }
        out
    };
    for p in 1..=period_max {
        for per in words(p) {
            for q in 0..=preperiod_max {
                for pre in words(q) {
                    set.insert(SymbolSeq::new(pre, per.clone(), d).expect("valid digits"));
                }
            }
        }
    }
    set.into_iter().collect()
}

/// One maximal interval on which a single sequence realizes the envelope.
#[derive(Clone, Debug, Serialize)]
pub struct EnvelopePiece {
    #[serde(serialize_with = "crate::series::serialize_seq")]
    pub seq: SymbolSeq,
    pub l: f64,
    pub r: f64,
}

pub(crate) fn serialize_seq<S: serde::Serializer>(
    seq: &SymbolSeq,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&seq.to_string())
}

/// A finite envelope `b(x) = max_j S(x, seq_j)` with refined switch points.
#[derive(Clone, Debug, Serialize)]
pub struct Envelope {
    pub pieces: Vec<EnvelopePiece>,
    pub switch_points: Vec<f64>,
}

impl Envelope {
    /// Index of the piece whose interval contains `x`.
    pub fn piece_index(&self, x: f64) -> usize {
        match self.pieces.iter().position(|p| x <= p.r) {
            Some(i) => i,
            None => self.pieces.len() - 1,
        }
    }

    /// Envelope value at `x` (series evaluation of the active piece).
    pub fn value(&self, pot: &Potential, lambda: f64, x: f64, tol: f64) -> f64 {
        let piece = &self.pieces[self.piece_index(x)];
        s_value(pot, lambda, x, &piece.seq, tol).value
    }
}

/// Builds the upper envelope of `S(·,a)` over a finite candidate family by
/// pointwise argmax on a grid of `n + 1` points spanning `[0,1]`, with each
/// switch refined by Δ-bisection (bracket one grid cell on each side).
/// Value ties go to the lexicographically greater sequence.
pub fn envelope(pot: &Potential, lambda: f64, cands: &[SymbolSeq], n: usize) -> Result<Envelope> {
    if cands.is_empty() {
        return Err(Error::InvalidParameter("empty candidate family".into()));
    }
    let mut cands = cands.to_vec();
    cands.sort();
    let tol = 1e-12 * (1.0 + pot.sup_abs());
    let rows: Vec<Vec<f64>> = cands
        .par_iter()
        .map(|a| {
            (0..=n)
                .map(|j| s_value(pot, lambda, j as f64 / n as f64, a, tol).value)
                .collect()
        })
        .collect();
    // Values within tie_eps of the column maximum count as tied; the
    // ascending candidate order then resolves ties lex-greater.
    let tie_eps = 1e-12 * (1.0 + pot.sup_abs());
    let argmax: Vec<usize> = (0..=n)
        .map(|j| {
            let vmax = rows
                .iter()
                .map(|row| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            rows.iter()
                .rposition(|row| row[j] >= vmax - tie_eps)
                .unwrap()
        })
        .collect();

    fn runs_of(arg: &[usize]) -> Vec<(usize, usize, usize)> {
        let mut runs = Vec::new(); // (cand, j_from, j_to)
        let mut start = 0usize;
        for j in 1..arg.len() {
            if arg[j] != arg[j - 1] {
                runs.push((arg[start], start, j - 1));
                start = j;
            }
        }
        runs.push((arg[start], start, arg.len() - 1));
        runs
    }

    // A run of a single grid column whose value ties the neighboring run's
    // candidate is a measure-zero contact (two itineraries optimal at one
    // point, e.g. both realizers of x = 0 when 1/2 is a turning point);
    // absorb it into the neighbor so every piece has interior.
    let mut arg = argmax;
    for _ in 0..4 {
        let runs = runs_of(&arg);
        let mut changed = false;
        for (k, &(ci, j0, j1)) in runs.iter().enumerate() {
            if j0 != j1 {
                continue;
            }
            let ties = |other: usize| rows[other][j0] >= rows[ci][j0] - tie_eps;
            if k + 1 < runs.len() && ties(runs[k + 1].0) {
                arg[j0] = runs[k + 1].0;
                changed = true;
            } else if k > 0 && ties(runs[k - 1].0) {
                arg[j0] = runs[k - 1].0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let runs = runs_of(&arg);

    let h = 1.0 / n as f64;
    let mut switches = Vec::with_capacity(runs.len().saturating_sub(1));
    for win in runs.windows(2) {
        let (ia, _, j_end) = win[0];
        let (ib, j_start, _) = win[1];
        let lo = (j_end as f64 * h - h).max(0.0);
        let hi = (j_start as f64 * h + h).min(1.0);
        let sw = crossing_point(pot, lambda, &cands[ia], &cands[ib], (lo, hi))
            .unwrap_or(0.5 * (j_end as f64 + j_start as f64) * h);
        switches.push(sw);
    }
    // Keep switches strictly increasing; a refinement that escaped its cell
    // falls back to the grid midpoint.
    for i in 0..switches.len() {
        let lo = if i == 0 { 0.0 } else { switches[i - 1] };
        let hi = if i + 1 < switches.len() {
            switches[i + 1]
        } else {
            1.0
        };
        if !(switches[i] > lo && switches[i] < hi) {
            switches[i] = 0.5 * (runs[i].2 as f64 + runs[i + 1].1 as f64) * h;
        }
    }

    let mut pieces = Vec::with_capacity(runs.len());
    for (i, &(ci, _, _)) in runs.iter().enumerate() {
        let l = if i == 0 { 0.0 } else { switches[i - 1] };
        let r = if i < switches.len() { switches[i] } else { 1.0 };
        pieces.push(EnvelopePiece {
            seq: cands[ci].clone(),
            l,
            r,
        });
    }
    Ok(Envelope {
        pieces,
        switch_points: switches,
    })
}

/// Validation of an envelope against the calibration equation.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnvelopeValidation {
    /// `max_x |b(x) − max_i(λ·b(τ_i x) + A(τ_i x))|` over the check grid.
    pub max_residual: f64,
    /// Worst gap in the backward-invariance check: dropping the leading
    /// digit of a piece must land on an optimal pair.
    pub max_invariance_gap: f64,
}

/// Checks coverage of `[0,1]`, the calibration residual on a grid, and
/// backward invariance of optimality along each piece.
pub fn validate_envelope(
    env: &Envelope,
    pot: &Potential,
    lambda: f64,
    grid_n: usize,
    tol: f64,
) -> Result<EnvelopeValidation> {
    if env.pieces.is_empty() {
        return Err(Error::CoverageGap(0.0));
    }
    let d = env.pieces[0].seq.d();
    if env.pieces[0].l > 1e-12 {
        return Err(Error::CoverageGap(0.0));
    }
    if env.pieces.last().unwrap().r < 1.0 - 1e-12 {
        return Err(Error::CoverageGap(1.0));
    }
    for win in env.pieces.windows(2) {
        if (win[1].l - win[0].r).abs() > 1e-9 {
            return Err(Error::CoverageGap(win[0].r));
        }
    }
    let stol = tol.min(1e-12) * (1.0 + pot.sup_abs());
    let ev = |x: f64| env.value(pot, lambda, x, stol);
    let mut max_residual: f64 = 0.0;
    for j in 0..=grid_n {
        let x = j as f64 / grid_n as f64;
        let mut cal = f64::NEG_INFINITY;
        for i in 0..d {
            let y = branch(i as u8, x, d);
            cal = cal.max(lambda * ev(y) + pot.value(y));
        }
        max_residual = max_residual.max((ev(x) - cal).abs());
    }
    let mut max_invariance_gap: f64 = 0.0;
    for piece in &env.pieces {
        let shifted = piece.seq.shift();
        for s in 1..=5 {
            let x = piece.l + (piece.r - piece.l) * s as f64 / 6.0;
            let y = branch(piece.seq.digit(0), x, d);
            let gap = (s_value(pot, lambda, y, &shifted, stol).value - ev(y)).abs();
            max_invariance_gap = max_invariance_gap.max(gap);
        }
    }
    Ok(EnvelopeValidation {
        max_residual,
        max_invariance_gap,
    })
}

/// The two-piece envelope of a symmetric twist potential:
/// `S(·,(10)^∞)` on `[0,1/2]` and `S(·,(01)^∞)` on `[1/2,1]`.
///
/// Requires the symmetry flag, a verified twist sign (closed form for
/// quadratics, sampled `Δ′` otherwise) and the symmetry identity
/// `S(x,(10)^∞) = S(1−x,(01)^∞)` to hold on a sample grid.
pub fn symmetric_envelope(pot: &Potential, lambda: f64) -> Result<Envelope> {
    if !pot.symmetric() {
        return Err(Error::NotSymmetric);
    }
    let s10 = SymbolSeq::periodic(&[1, 0], 2).unwrap();
    let s01 = SymbolSeq::periodic(&[0, 1], 2).unwrap();
    let s1 = SymbolSeq::periodic(&[1], 2).unwrap();
    let s0 = SymbolSeq::periodic(&[0], 2).unwrap();
    for (hi, lo) in [(&s10, &s01), (&s1, &s0)] {
        for j in 1..10 {
            let x = j as f64 / 10.0;
            let dp = s_deriv(pot, lambda, x, hi, 1e-10)? - s_deriv(pot, lambda, x, lo, 1e-10)?;
            if dp >= 0.0 {
                return Err(Error::NotTwist);
            }
        }
    }
    let tol = 1e-12 * (1.0 + pot.sup_abs());
    for j in 0..=32 {
        let x = j as f64 / 32.0;
        let lhs = s_value(pot, lambda, x, &s10, tol).value;
        let rhs = s_value(pot, lambda, 1.0 - x, &s01, tol).value;
        if (lhs - rhs).abs() > 1e-9 {
            return Err(Error::NotSymmetric);
        }
    }
    Ok(Envelope {
        pieces: vec![
            EnvelopePiece {
                seq: s10,
                l: 0.0,
                r: 0.5,
            },
            EnvelopePiece {
                seq: s01,
                l: 0.5,
                r: 1.0,
            },
        ],
        switch_points: vec![0.5],
    })
}

/// Endpoint arithmetic for the period-3 structure condition
/// `τ₁[0,u] ⊆ [u,v]`, `τ₁[u,v] ⊆ [v,1]`, `τ₀[v,1] ⊆ [0,u]`
/// (closed intervals, containment allows equality).
pub fn period3_condition(u: f64, v: f64) -> (bool, Option<String>) {
    assert!(0.0 < u && u < v && v < 1.0, "need 0 < u < v < 1");
    if 0.5 < u {
        return (false, Some(format!("τ₁[0,u] starts at 0.5 < u = {u}")));
    }
    if (u + 1.0) / 2.0 > v {
        return (
            false,
            Some(format!("τ₁[0,u] ends at {} > v = {v}", (u + 1.0) / 2.0)),
        );
    }
    if (u + 1.0) / 2.0 < v {
        return (
            false,
            Some(format!("τ₁[u,v] starts at {} < v = {v}", (u + 1.0) / 2.0)),
        );
    }
    if 0.5 > u {
        return (false, Some(format!("τ₀[v,1] ends at 0.5 > u = {u}")));
    }
    (true, None)
}

/// Sign report for the concavity propagation `A concave ⇒ S(·,a) concave`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConcavityReport {
    pub concave: bool,
    pub max_second_diff: f64,
}

/// Second differences of `x ↦ S(x,a)` over an interior grid.
pub fn concavity_check(
    pot: &Potential,
    lambda: f64,
    a: &SymbolSeq,
    grid_n: usize,
) -> ConcavityReport {
    let tol = 1e-13 * (1.0 + pot.sup_abs());
    let h = 1.0 / (grid_n + 2) as f64;
    let mut max_sd = f64::NEG_INFINITY;
    for j in 1..=grid_n {
        let x = j as f64 * h;
        let sm = s_value(pot, lambda, x - h, a, tol).value;
        let s0 = s_value(pot, lambda, x, a, tol).value;
        let sp = s_value(pot, lambda, x + h, a, tol).value;
        max_sd = max_sd.max((sp - 2.0 * s0 + sm) / (h * h));
    }
    ConcavityReport {
        concave: max_sd <= 1e-6,
        max_second_diff: max_sd,
    }
}
