//! Forward iteration of the skew product `F(x,s) = (T x, λs + A(x))` and
//! the binned upper boundary of the resulting point cloud.
//!
//! The base orbit is generated in 64-bit fixed point (angle `θ`, `x = θ/2⁶⁴`,
//! one step multiplies by `d` mod 2⁶⁴): naive doubling of an `f64` collapses
//! to 0 after ~52 iterations because the mantissa shifts out. The vacated
//! low bits are refilled from a seeded stream, which emulates a typical
//! infinite expansion and keeps long orbits equidistributed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::potentials::Potential;
use crate::{Error, Result};

/// Branch index of `x` under `T`: `π(x) = ⌊d·x⌋`. The convention at branch
/// boundaries is right-closed: `digit(0.5, 2) = 1`.
#[inline]
pub fn digit(x: f64, d: usize) -> usize {
    ((x * d as f64).floor() as usize).min(d - 1)
}

/// A forward-orbit point cloud of the attractor.
#[derive(Clone, Debug, Serialize)]
pub struct AttractorCloud {
    /// Retained `(x, s)` points, in orbit order.
    pub points: Vec<(f64, f64)>,
    pub burn_in: usize,
    pub lambda: f64,
    pub potential: String,
    pub d: usize,
    pub seed: u64,
    /// Largest `|s|` seen across the whole run (before burn-in discard).
    pub max_abs_s: f64,
}

/// Orbit generation parameters.
#[derive(Clone, Copy, Debug)]
pub struct IterateParams {
    /// Start of the first orbit. The default `√2 − 1` avoids the dyadic
    /// orbit of `T` that would collapse onto 0.
    pub x0: f64,
    pub s0: f64,
    /// Total number of `F` applications, across all orbits.
    pub n: usize,
    /// Discarded leading points per orbit.
    pub burn: usize,
    /// Number of restarts; starts after the first are drawn uniformly.
    pub orbits: usize,
    pub seed: u64,
}

impl Default for IterateParams {
    fn default() -> Self {
        IterateParams {
            x0: std::f64::consts::SQRT_2 - 1.0,
            s0: 0.0,
            n: 4000,
            burn: 100,
            orbits: 1,
            seed: 0,
        }
    }
}

/// Iterates `F` and retains the post-burn-in points of each orbit.
pub fn iterate_f(
    pot: &Potential,
    lambda: f64,
    d: usize,
    params: IterateParams,
) -> Result<AttractorCloud> {
    if params.orbits == 0 || params.n == 0 {
        return Err(Error::InvalidParameter("need n > 0 and orbits > 0".into()));
    }
    let per_orbit = params.n / params.orbits;
    if per_orbit <= params.burn {
        return Err(Error::InvalidParameter(format!(
            "n/orbits = {per_orbit} does not exceed burn = {}",
            params.burn
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut points = Vec::with_capacity(params.n - params.orbits * params.burn);
    let mut max_abs_s: f64 = 0.0;
    let sup = pot.sup_abs();
    for orbit in 0..params.orbits {
        let mut theta: u64 = if orbit == 0 {
            (crate::wrap_unit(params.x0) * 2f64.powi(64)) as u64
        } else {
            rng.next_u64()
        };
        let mut s = params.s0;
        for k in 0..per_orbit {
            let x = theta as f64 / 2f64.powi(64);
            s = lambda * s + pot.value(x);
            theta = theta.wrapping_mul(d as u64) | (rng.next_u32() & 1) as u64;
            let x_next = theta as f64 / 2f64.powi(64);
            max_abs_s = max_abs_s.max(s.abs());
            // |s_k| stays within λᵏ|s₀| + ‖A‖∞/(1−λ).
            debug_assert!(
                s.abs()
                    <= lambda.powi(k as i32 + 1) * params.s0.abs() + sup / (1.0 - lambda) + 1e-9
            );
            if k >= params.burn {
                points.push((x_next, s));
            }
        }
    }
    Ok(AttractorCloud {
        points,
        burn_in: params.burn,
        lambda,
        potential: pot.name().to_string(),
        d,
        seed: params.seed,
        max_abs_s,
    })
}

/// Per-bin maximum of the cloud.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundaryBin {
    pub x_center: f64,
    /// Maximum `s` among the points in the bin; `None` for empty bins.
    pub smax: Option<f64>,
    pub count: usize,
    /// `x` of the point attaining the maximum.
    pub x_at_max: Option<f64>,
}

/// Bins the cloud over `[0,1)` and takes the per-bin maximum of `s`.
pub fn upper_boundary(cloud: &AttractorCloud, bins: usize) -> Result<Vec<BoundaryBin>> {
    if bins < 2 {
        return Err(Error::InvalidParameter("bins must be at least 2".into()));
    }
    let mut out: Vec<BoundaryBin> = (0..bins)
        .map(|b| BoundaryBin {
            x_center: (b as f64 + 0.5) / bins as f64,
            smax: None,
            count: 0,
            x_at_max: None,
        })
        .collect();
    for &(x, s) in &cloud.points {
        let b = ((x * bins as f64).floor() as usize).min(bins - 1);
        out[b].count += 1;
        if out[b].smax.is_none_or(|m| s > m) {
            out[b].smax = Some(s);
            out[b].x_at_max = Some(x);
        }
    }
    if out.iter().all(|b| b.count == 0) {
        return Err(Error::EmptyCloud);
    }
    Ok(out)
}
