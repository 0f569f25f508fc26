//! Eventually periodic itineraries over the alphabet `{0,…,d−1}` and the
//! closed-form quantities attached to them for `d = 2`: the branch
//! compositions `τ_{k,a}x`, the dyadic sums `ψ_k(a)` and the discounted
//! digit sum `Z(a) = Σ (λ/2)ᵏ a_k`.

use std::cmp::Ordering;
use std::fmt;

use crate::{Error, Result};

/// An eventually periodic infinite word `pre · per · per · per ···` over
/// `{0,…,d−1}`, kept in canonical form: the period is primitive and the
/// preperiod is minimal (no trailing preperiod digit can be absorbed into
/// the periodic tail). Two values denoting the same infinite word compare
/// equal and hash identically.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SymbolSeq {
    pre: Vec<u8>,
    per: Vec<u8>,
    d: usize,
}

impl SymbolSeq {
    /// Builds a sequence from preperiod and period digit lists.
    ///
    /// The period must be nonempty and every digit `< d`. The result is
    /// canonicalized.
    pub fn new(pre: Vec<u8>, per: Vec<u8>, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!("branch count d = {d} < 2")));
        }
        if per.is_empty() {
            return Err(Error::InvalidParameter("empty period".into()));
        }
        for &digit in pre.iter().chain(per.iter()) {
            if digit as usize >= d {
                return Err(Error::DigitOutOfRange { digit, d });
            }
        }
        let mut s = SymbolSeq { pre, per, d };
        s.canonicalize();
        Ok(s)
    }

    /// The purely periodic word `per^∞`.
    pub fn periodic(per: &[u8], d: usize) -> Result<Self> {
        Self::new(Vec::new(), per.to_vec(), d)
    }

    /// Parses the text notation `pre|per`, e.g. `|10` for `(10)^∞` and
    /// `0|10` for `0(10)^∞`.
    pub fn parse(text: &str, d: usize) -> Result<Self> {
        let (pre, per) = text
            .split_once('|')
            .ok_or_else(|| Error::Parse(format!("missing '|' in sequence {text:?}")))?;
        let digits = |part: &str| -> Result<Vec<u8>> {
            part.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|v| v as u8)
                        .ok_or_else(|| Error::Parse(format!("bad digit {c:?} in {text:?}")))
                })
                .collect()
        };
        Self::new(digits(pre)?, digits(per)?, d)
    }

    fn canonicalize(&mut self) {
        // Primitive period: shortest word whose repetition gives `per`.
        for len in 1..self.per.len() {
            if self.per.len().is_multiple_of(len)
                && self.per.chunks(len).all(|c| c == &self.per[..len])
            {
                self.per.truncate(len);
                break;
            }
        }
        // Absorb preperiod digits that already follow the periodic pattern:
        // pre·i·(w)^∞ = pre·(rot_right w)^∞ whenever i equals the last digit of w.
        while let Some(&last) = self.pre.last() {
            if last == *self.per.last().unwrap() {
                self.pre.pop();
                self.per.rotate_right(1);
            } else {
                break;
            }
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn preperiod(&self) -> &[u8] {
        &self.pre
    }

    pub fn period(&self) -> &[u8] {
        &self.per
    }

    pub fn is_periodic(&self) -> bool {
        self.pre.is_empty()
    }

    /// Digit at position `k` of the infinite word.
    #[inline]
    pub fn digit(&self, k: usize) -> u8 {
        if k < self.pre.len() {
            self.pre[k]
        } else {
            self.per[(k - self.pre.len()) % self.per.len()]
        }
    }

    /// Positions `0..bound` decide equality and order for this pair: beyond
    /// `max(q₁,q₂)` both words are periodic, and agreement on a full
    /// `lcm(p₁,p₂)` window there forces agreement forever.
    fn decision_bound(&self, other: &Self) -> usize {
        let q = self.pre.len().max(other.pre.len());
        q + lcm(self.per.len(), other.per.len()) + 1
    }

    /// Lexicographic order of the two infinite words.
    pub fn lex_compare(&self, other: &Self) -> Result<Ordering> {
        if self.d != other.d {
            return Err(Error::AlphabetMismatch(self.d, other.d));
        }
        Ok(self.lex_cmp_unchecked(other))
    }

    fn lex_cmp_unchecked(&self, other: &Self) -> Ordering {
        for k in 0..self.decision_bound(other) {
            match self.digit(k).cmp(&other.digit(k)) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        Ordering::Equal
    }

    /// Index of the first digit where the two words differ; `None` when they
    /// denote the same word.
    pub fn first_diff_index(&self, other: &Self) -> Option<usize> {
        (0..self.decision_bound(other)).find(|&k| self.digit(k) != other.digit(k))
    }

    /// Drops the first digit (the shift map σ).
    pub fn shift(&self) -> Self {
        let mut s = if self.pre.is_empty() {
            let mut per = self.per.clone();
            per.rotate_left(1);
            SymbolSeq {
                pre: Vec::new(),
                per,
                d: self.d,
            }
        } else {
            SymbolSeq {
                pre: self.pre[1..].to_vec(),
                per: self.per.clone(),
                d: self.d,
            }
        };
        s.canonicalize();
        s
    }

    /// Prepends a digit, so that `concat(i, a).shift() == a`.
    pub fn concat(&self, i: u8) -> Result<Self> {
        if i as usize >= self.d {
            return Err(Error::DigitOutOfRange {
                digit: i,
                d: self.d,
            });
        }
        let mut pre = Vec::with_capacity(self.pre.len() + 1);
        pre.push(i);
        pre.extend_from_slice(&self.pre);
        let mut s = SymbolSeq {
            pre,
            per: self.per.clone(),
            d: self.d,
        };
        s.canonicalize();
        Ok(s)
    }

    /// The composition `(τ_{a_k} ∘ … ∘ τ_{a_0})(x)` of inverse branches.
    pub fn branch_compose(&self, k: usize, x: f64) -> f64 {
        let mut y = x;
        for j in 0..=k {
            y = crate::branch(self.digit(j), y, self.d);
        }
        y
    }

    /// `ψ_k(a) = a_0/2^{k+1} + a_1/2^k + … + a_k/2` for `d = 2`; satisfies
    /// `2ψ_{k+1} = ψ_k + a_{k+1}` and equals `branch_compose(k, 0)`.
    pub fn psi(&self, k: usize) -> Result<f64> {
        if self.d != 2 {
            return Err(Error::BinaryOnly(self.d));
        }
        let mut psi = self.digit(0) as f64 / 2.0;
        for j in 1..=k {
            psi = (psi + self.digit(j) as f64) / 2.0;
        }
        Ok(psi)
    }

    /// `Z(a) = Σ_k (λ/2)ᵏ a_k` for `d = 2`, evaluated exactly: finite sum
    /// over the preperiod plus a geometric closed form for the periodic tail.
    pub fn z_value(&self, lambda: f64) -> Result<f64> {
        if self.d != 2 {
            return Err(Error::BinaryOnly(self.d));
        }
        if !(0.0 < lambda && lambda < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda = {lambda} outside (0,1)"
            )));
        }
        let r = lambda / 2.0;
        let mut head = 0.0;
        let mut w = 1.0;
        for &digit in &self.pre {
            head += w * digit as f64;
            w *= r;
        }
        // w = r^{pre.len()} at this point.
        let mut tail = 0.0;
        let mut wp = 1.0;
        for &digit in &self.per {
            tail += wp * digit as f64;
            wp *= r;
        }
        // wp = r^{per.len()}.
        Ok(head + w * tail / (1.0 - wp))
    }
}

impl fmt::Display for SymbolSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &digit in &self.pre {
            write!(f, "{digit}")?;
        }
        write!(f, "|")?;
        for &digit in &self.per {
            write!(f, "{digit}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for SymbolSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl PartialOrd for SymbolSeq {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SymbolSeq {
    /// Total order: alphabet size first, then lexicographic order of the
    /// infinite words.
    fn cmp(&self, other: &Self) -> Ordering {
        self.d
            .cmp(&other.d)
            .then_with(|| self.lex_cmp_unchecked(other))
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}
