//! Closed forms for `d = 2` and quadratic potentials
//! `A(x) = c₀ + c₁x + c₂x²`:
//!
//! ```text
//! ∂S/∂x(x,a) = c₁/(2−λ) + 2c₂x/(4−λ) + 2c₂·Z(a)/(4−λ),
//! ```
//!
//! the twist criterion `c₂ < 0`, the crossing formula
//! `x_ab = (4−λ)/2 · Δ(0,a,b)/(Z(a)−Z(b))` and the explicit two-piece
//! subaction of the symmetric case. Every closed form is cross-checked
//! against the series module, which acts as the independent oracle.
//!
//! The additive constants of the explicit subaction are anchored at
//! oracle-computed values of `S(0,a)`. A second closed form for `b(0)`
//! floats around whose half-step estimate collapses differently; it does
//! not match the oracle, so [`SymmetricSubaction`] carries both values
//! side by side and flags the gap instead of asserting either.

use serde::Serialize;

use crate::potentials::Potential;
use crate::series::s_value;
use crate::symbolic::SymbolSeq;
use crate::{Error, Result};

/// A quadratic potential paired with a discount; `d = 2` only.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct QuadraticSpec {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub lambda: f64,
}

impl QuadraticSpec {
    pub fn new(c0: f64, c1: f64, c2: f64, lambda: f64, d: usize) -> Result<Self> {
        if d != 2 {
            return Err(Error::BinaryOnly(d));
        }
        if !(0.0 < lambda && lambda < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda = {lambda} outside (0,1)"
            )));
        }
        Ok(QuadraticSpec { c0, c1, c2, lambda })
    }

    /// The standard symmetric case `−(x−1/2)²`.
    pub fn quad_sym(lambda: f64) -> Self {
        Self::new(-0.25, 1.0, -1.0, lambda, 2).unwrap()
    }

    pub fn potential(&self) -> Potential {
        Potential::poly(&[self.c0, self.c1, self.c2])
    }

    /// Exact `∂S/∂x(x,a)` via `Z(a)`.
    pub fn closed_s_deriv(&self, x: f64, a: &SymbolSeq) -> Result<f64> {
        let l = self.lambda;
        let z = a.z_value(l)?;
        Ok(self.c1 / (2.0 - l) + 2.0 * self.c2 * x / (4.0 - l) + 2.0 * self.c2 * z / (4.0 - l))
    }

    /// The potential is twist exactly when `c₂ < 0`.
    pub fn twist_predicate(&self) -> bool {
        self.c2 < 0.0
    }

    /// Closed-form crossing point of `S(·,a)` and `S(·,b)`.
    pub fn closed_crossing(&self, a: &SymbolSeq, b: &SymbolSeq) -> Result<Crossing> {
        let l = self.lambda;
        let za = a.z_value(l)?;
        let zb = b.z_value(l)?;
        if (za - zb).abs() < 1e-15 {
            return Err(Error::ParallelCurves);
        }
        let pot = self.potential();
        let tol = 1e-13 * (1.0 + pot.sup_abs());
        let delta0 = s_value(&pot, l, 0.0, a, tol).value - s_value(&pot, l, 0.0, b, tol).value;
        let x = (4.0 - l) / 2.0 * delta0 / (za - zb);
        Ok(Crossing {
            x,
            inside: 0.0 < x && x < 1.0,
        })
    }
}

/// A closed-form crossing point, flagged when it falls outside `(0,1)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Crossing {
    pub x: f64,
    pub inside: bool,
}

/// The explicit two-piece subaction of `A(x) = −(x−1/2)²`: coefficients of
/// both parabola pieces anchored at the oracle value of `S(0,(10)^∞)`,
/// together with the printed closed-form value it disagrees with.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SymmetricSubaction {
    pub lambda: f64,
    /// `b(0) = S(0,(10)^∞)` from the series oracle with periodic-tail closure.
    pub b0_oracle: f64,
    /// Corrected closed form `λ(2−λ)/(4(4−λ)(2+λ)(λ−1))`; agrees with the oracle.
    pub b0_closed: f64,
    /// The alternative closed form `2λ/(4(4−λ)(2+λ)(λ−1))`; does not
    /// match the oracle.
    pub b0_alt_closed: f64,
    /// `|b0_alt_closed − b0_oracle|`, reported, never asserted small.
    pub alt_mismatch: f64,
    pub s0_01: f64,
    pub b_half: f64,
    /// `S(x,(10)^∞) = piece10[0] + piece10[1]·x + piece10[2]·x²` on `[0,1/2]`.
    pub piece10: [f64; 3],
    /// `S(x,(01)^∞)` coefficients, valid on `[1/2,1]`.
    pub piece01: [f64; 3],
}

/// Assembles the explicit symmetric subaction at the given discount.
pub fn explicit_symmetric_subaction(lambda: f64) -> Result<SymmetricSubaction> {
    if !(0.0 < lambda && lambda < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda = {lambda} outside (0,1)"
        )));
    }
    let l = lambda;
    let pot = Potential::quad_sym();
    let s10 = SymbolSeq::periodic(&[1, 0], 2).unwrap();
    let s01 = SymbolSeq::periodic(&[0, 1], 2).unwrap();
    let tol = 1e-13;
    let b0_oracle = s_value(&pot, l, 0.0, &s10, tol).value;
    let s0_01 = s_value(&pot, l, 0.0, &s01, tol).value;
    let b_half = s_value(&pot, l, 0.5, &s10, tol).value;
    let b0_closed = l * (2.0 - l) / (4.0 * (4.0 - l) * (2.0 + l) * (l - 1.0));
    let b0_alt_closed = 2.0 * l / (4.0 * (4.0 - l) * (2.0 + l) * (l - 1.0));
    let denom = (4.0 - l) * (4.0 - l * l);
    Ok(SymmetricSubaction {
        lambda: l,
        b0_oracle,
        b0_closed,
        b0_alt_closed,
        alt_mismatch: (b0_alt_closed - b0_oracle).abs(),
        s0_01,
        b_half,
        piece10: [b0_oracle, (2.0 * l - l * l) / denom, -1.0 / (4.0 - l)],
        piece01: [s0_01, (8.0 - 2.0 * l - l * l) / denom, -1.0 / (4.0 - l)],
    })
}
