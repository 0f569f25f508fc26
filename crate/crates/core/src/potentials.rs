//! The potential contract `A: S¹ → ℝ` and the built-in example potentials.
//!
//! Evaluation is 1-periodic by convention (`x ∈ ℝ` is folded into `[0,1)`),
//! even for polynomial potentials that are not continuous on the circle.
//! Grid conventions always include `x = 0` and never evaluate at `x = 1`.

use std::fmt;
use std::sync::Arc;

use crate::{wrap_unit, Error, Result};

const SCAN_GRID: usize = 8192;

#[derive(Clone)]
enum Form {
    /// `c_0 + c_1 x + … + c_k x^k` on `[0,1)`.
    Polynomial(Vec<f64>),
    /// `6x−3` for `x < 1/2`, `−6x+3` for `x ≥ 1/2`.
    Tent,
    /// `−1/2 − cos(2πx)/2`.
    Cosine,
    /// `sin(2πx)`.
    Sine,
    /// Sampled table with linear interpolation, periodic wrap.
    Table {
        xs: Arc<Vec<f64>>,
        ys: Arc<Vec<f64>>,
    },
}

/// An immutable potential: value, optional analytic derivatives and cached
/// sup-norm estimates. Cheap to clone and safe to share across threads.
#[derive(Clone)]
pub struct Potential {
    name: String,
    form: Form,
    symmetric: bool,
    sup_abs: f64,
    deriv_sup: f64,
    deriv2_sup: Option<f64>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Potential({})", self.name)
    }
}

impl Potential {
    fn build(name: impl Into<String>, form: Form, symmetric: Option<bool>) -> Self {
        let name = name.into();
        let mut p = Potential {
            name,
            form,
            symmetric: false,
            sup_abs: 0.0,
            deriv_sup: 0.0,
            deriv2_sup: None,
        };
        p.symmetric = symmetric.unwrap_or_else(|| p.detect_symmetry());
        p.sup_abs = p.scan_sup_abs();
        p.deriv_sup = p.deriv_sup_norm(SCAN_GRID);
        p.deriv2_sup = p.scan_deriv2_sup();
        p
    }

    /// General polynomial `c_0 + c_1 x + …` evaluated literally on `[0,1)`.
    pub fn poly(coeffs: &[f64]) -> Self {
        let name = format!(
            "poly:{}",
            coeffs
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        Self::build(name, Form::Polynomial(coeffs.to_vec()), None)
    }

    /// A constant potential.
    pub fn constant(c: f64) -> Self {
        Self::build(format!("const:{c}"), Form::Polynomial(vec![c]), Some(true))
    }

    /// The standard symmetric twist potential `−(x − 1/2)²`.
    pub fn quad_sym() -> Self {
        Self::build(
            "quad_sym",
            Form::Polynomial(vec![-0.25, 1.0, -1.0]),
            Some(true),
        )
    }

    /// The tent potential `6x−3` / `−6x+3`; symmetric but not twist.
    pub fn tent() -> Self {
        Self::build("tent", Form::Tent, Some(true))
    }

    /// `−1/2 − cos(2πx)/2`.
    pub fn cosine() -> Self {
        Self::build("cosine", Form::Cosine, Some(true))
    }

    /// `sin(2πx)`.
    pub fn sine() -> Self {
        Self::build("sine", Form::Sine, Some(false))
    }

    /// The perturbed quadratic `−(x−1/2)² + ε·ψ(x) − drift` with
    /// `ψ(x) = (x−x²)(1 + 3x + 9/2·x² + 9/2·x³ + 27/8·x⁴ + 81/40·x⁵)`.
    pub fn quad_eps(eps: f64, drift: f64) -> Self {
        let mut coeffs = vec![-0.25 - drift, 1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let psi = conv(
            &[0.0, 1.0, -1.0],
            &[1.0, 3.0, 4.5, 4.5, 27.0 / 8.0, 81.0 / 40.0],
        );
        for (c, p) in coeffs.iter_mut().zip(psi.iter()) {
            *c += eps * p;
        }
        Self::build(
            format!("quad_eps:{eps},{drift}"),
            Form::Polynomial(coeffs),
            None,
        )
    }

    /// The drifted quadratic `−(1.010·x − 0.455)²`.
    pub fn quad_drift() -> Self {
        let (a, b) = (1.010, 0.455);
        Self::build(
            "quad_drift",
            Form::Polynomial(vec![-b * b, 2.0 * a * b, -a * a]),
            None,
        )
    }

    /// A sampled potential: nodes in `[0,1)`, linear interpolation between
    /// them and a periodic wrap from the last node back to the first.
    pub fn table(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidParameter(
                "table needs at least 2 samples".into(),
            ));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        if samples.iter().any(|&(x, _)| !(0.0..1.0).contains(&x)) {
            return Err(Error::InvalidParameter(
                "table abscissae must lie in [0,1)".into(),
            ));
        }
        let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
        Ok(Self::build(
            "table",
            Form::Table {
                xs: Arc::new(xs),
                ys: Arc::new(ys),
            },
            None,
        ))
    }

    /// Parses the `--potential` grammar:
    /// `poly:c0,c1,c2` | `quad_sym` | `tent` | `cosine` | `sine` |
    /// `quad_eps:eps,drift` | `quad_drift` | `table:<csv path>`.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let (head, args) = match spec.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (spec, None),
        };
        let nums = |a: Option<&str>, want: usize| -> Result<Vec<f64>> {
            let raw = a.ok_or_else(|| Error::Parse(format!("{head} requires parameters")))?;
            let vals: Vec<f64> = raw
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("{t:?}: {e}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != want {
                return Err(Error::Parse(format!(
                    "{head} expects {want} parameters, got {}",
                    vals.len()
                )));
            }
            Ok(vals)
        };
        let bare = |p: Potential| -> Result<Potential> {
            match args {
                Some(extra) => Err(Error::Parse(format!(
                    "{head} takes no parameters, got {extra:?}"
                ))),
                None => Ok(p),
            }
        };
        match head {
            "poly" => {
                let c = nums(args, 3)?;
                Ok(Self::poly(&c))
            }
            "quad_sym" => bare(Self::quad_sym()),
            "tent" => bare(Self::tent()),
            "cosine" => bare(Self::cosine()),
            "sine" => bare(Self::sine()),
            "quad_eps" => {
                let c = nums(args, 2)?;
                Ok(Self::quad_eps(c[0], c[1]))
            }
            "quad_drift" => bare(Self::quad_drift()),
            "table" => {
                let path = args.ok_or_else(|| Error::Parse("table requires a path".into()))?;
                let text = std::fs::read_to_string(path)?;
                let mut samples = Vec::new();
                for (i, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with('x'))
                    {
                        continue;
                    }
                    let (x, y) = line.split_once(',').ok_or_else(|| {
                        Error::Parse(format!("table line {}: missing comma", i + 1))
                    })?;
                    let parse = |t: &str| {
                        t.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Parse(format!("table line {}: {e}", i + 1)))
                    };
                    samples.push((parse(x)?, parse(y)?));
                }
                Self::table(samples)
            }
            other => Err(Error::Parse(format!("unknown potential {other:?}"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Whether `A(1−x) = A(x)`.
    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    /// Grid estimate of `max |A|` over `[0,1)` (a lower bound of the true
    /// sup-norm; adequate for the truncation bounds it feeds).
    pub fn sup_abs(&self) -> f64 {
        self.sup_abs
    }

    /// Cached `deriv_sup_norm` at the default scan resolution.
    pub fn deriv_sup(&self) -> f64 {
        self.deriv_sup
    }

    /// Grid estimate of `max |A″|`, when a second derivative exists.
    pub fn deriv2_sup(&self) -> Option<f64> {
        self.deriv2_sup
    }

    /// Coefficients when the potential is a literal polynomial.
    pub fn poly_coeffs(&self) -> Option<&[f64]> {
        match &self.form {
            Form::Polynomial(c) => Some(c),
            _ => None,
        }
    }

    /// Evaluates `A(x)`, folding `x` into `[0,1)`.
    pub fn value(&self, x: f64) -> f64 {
        let t = wrap_unit(x);
        match &self.form {
            Form::Polynomial(c) => horner(c, t),
            Form::Tent => {
                if t < 0.5 {
                    6.0 * t - 3.0
                } else {
                    -6.0 * t + 3.0
                }
            }
            Form::Cosine => -0.5 - 0.5 * (2.0 * std::f64::consts::PI * t).cos(),
            Form::Sine => (2.0 * std::f64::consts::PI * t).sin(),
            Form::Table { xs, ys } => table_eval(xs, ys, t),
        }
    }

    /// First derivative: analytic where available, finite differences for
    /// tables, one-sided (left) values at the tent kinks.
    pub fn deriv1(&self, x: f64) -> Option<f64> {
        let t = wrap_unit(x);
        match &self.form {
            Form::Polynomial(c) => {
                let mut acc = 0.0;
                for k in (1..c.len()).rev() {
                    acc = acc * t + k as f64 * c[k];
                }
                Some(acc)
            }
            Form::Tent => Some(if t == 0.0 || t >= 0.5 { -6.0 } else { 6.0 }),
            Form::Cosine => Some(std::f64::consts::PI * (2.0 * std::f64::consts::PI * t).sin()),
            Form::Sine => Some(2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * t).cos()),
            Form::Table { .. } => {
                let h = 1e-6;
                Some((self.value(x + h) - self.value(x - h)) / (2.0 * h))
            }
        }
    }

    /// Second derivative where analytic (polynomial, cosine, sine).
    pub fn deriv2(&self, x: f64) -> Option<f64> {
        let t = wrap_unit(x);
        match &self.form {
            Form::Polynomial(c) => {
                let mut acc = 0.0;
                for k in (2..c.len()).rev() {
                    acc = acc * t + (k * (k - 1)) as f64 * c[k];
                }
                Some(acc)
            }
            Form::Cosine => {
                let w = 2.0 * std::f64::consts::PI;
                Some(0.5 * w * w * (w * t).cos())
            }
            Form::Sine => {
                let w = 2.0 * std::f64::consts::PI;
                Some(-w * w * (w * t).sin())
            }
            Form::Tent | Form::Table { .. } => None,
        }
    }

    /// `max |A′|` over a uniform grid of the given resolution (plus the tent
    /// kink values); a lower bound of the true sup-norm, used by the angle
    /// bound diagnostic.
    pub fn deriv_sup_norm(&self, grid: usize) -> f64 {
        let mut m: f64 = 0.0;
        for j in 0..grid {
            let x = j as f64 / grid as f64;
            if let Some(d) = self.deriv1(x) {
                m = m.max(d.abs());
            }
        }
        if matches!(self.form, Form::Tent) {
            m = m.max(6.0);
        }
        m
    }

    fn detect_symmetry(&self) -> bool {
        let n = 1000;
        (0..=n).all(|j| {
            let x = j as f64 / n as f64 * 0.5;
            (self.value(x) - self.value(1.0 - x)).abs() <= 1e-12
        })
    }

    fn scan_deriv2_sup(&self) -> Option<f64> {
        self.deriv2(0.3)?;
        let mut m: f64 = 0.0;
        for j in 0..512 {
            if let Some(d2) = self.deriv2(j as f64 / 512.0) {
                m = m.max(d2.abs());
            }
        }
        Some(m)
    }

    fn scan_sup_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for j in 0..SCAN_GRID {
            m = m.max(self.value(j as f64 / SCAN_GRID as f64).abs());
        }
        match &self.form {
            // Table extrema sit on nodes; include them exactly.
            Form::Table { ys, .. } => ys.iter().fold(m, |acc, y| acc.max(y.abs())),
            _ => m,
        }
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn conv(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn table_eval(xs: &[f64], ys: &[f64], t: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&t));
    // Last interval wraps [x_last, x_0 + 1).
    let k = xs.partition_point(|&x| x <= t);
    if k == 0 || k == xs.len() {
        let (x0, y0) = (xs[xs.len() - 1], ys[ys.len() - 1]);
        let (x1, y1) = (xs[0] + 1.0, ys[0]);
        let t = if k == 0 { t + 1.0 } else { t };
        if x1 == x0 {
            return y0;
        }
        y0 + (y1 - y0) * (t - x0) / (x1 - x0)
    } else {
        let (x0, y0) = (xs[k - 1], ys[k - 1]);
        let (x1, y1) = (xs[k], ys[k]);
        y0 + (y1 - y0) * (t - x0) / (x1 - x0)
    }
}
