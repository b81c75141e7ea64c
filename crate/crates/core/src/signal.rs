//! Scalar data on an interval: initial profiles φ(z), boundary signals ψ(t),
//! porosity p(z).
//!
//! Configured data is piecewise polynomial (degree ≤ 3, local power basis
//! on each piece), so sup-norms of values and derivatives needed by the
//! certificate are computed exactly from the coefficients.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scalar function of one variable with an optional derivative.
pub trait Signal: Send + Sync {
    fn value(&self, x: f64) -> f64;
    /// `None` when the derivative is not available.
    fn derivative(&self, x: f64) -> Option<f64>;
}

/// Piecewise cubic (or lower) polynomial with explicit breakpoints.
///
/// Piece `k` covers `[breakpoints[k], breakpoints[k+1]]` and evaluates
/// `Σ_m coeffs[k][m] (x − breakpoints[k])^m`. Outside the breakpoints the
/// first/last piece is extended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewisePoly {
    pub breakpoints: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
}

impl PiecewisePoly {
    pub fn constant(value: f64) -> Self {
        Self { breakpoints: vec![0.0, 1.0], coeffs: vec![vec![value]] }
    }

    pub fn linear(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { breakpoints: vec![x0, x1], coeffs: vec![vec![y0, (y1 - y0) / (x1 - x0)]] }
    }

    pub fn validate(&self, key: &str) -> Result<()> {
        if self.breakpoints.len() < 2 {
            return Err(Error::validation(key, "need at least two breakpoints"));
        }
        if self.coeffs.len() + 1 != self.breakpoints.len() {
            return Err(Error::validation(key, "need one coefficient row per piece"));
        }
        if self.breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation(key, "breakpoints must be strictly increasing"));
        }
        if self.coeffs.iter().any(|c| c.is_empty() || c.len() > 4) {
            return Err(Error::validation(key, "each piece needs 1..=4 coefficients"));
        }
        if self.coeffs.iter().flatten().chain(&self.breakpoints).any(|v| !v.is_finite()) {
            return Err(Error::validation(key, "non-finite coefficient"));
        }
        Ok(())
    }

    fn piece(&self, x: f64) -> usize {
        let n = self.coeffs.len();
        match self.breakpoints[1..n].iter().position(|&b| x < b) {
            Some(k) => k,
            None => n - 1,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.piece(x);
        let dx = x - self.breakpoints[k];
        self.coeffs[k].iter().rev().fold(0.0, |acc, &c| acc * dx + c)
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        let k = self.piece(x);
        let dx = x - self.breakpoints[k];
        let c = &self.coeffs[k];
        (1..c.len()).rev().fold(0.0, |acc, m| acc * dx + m as f64 * c[m])
    }

    pub fn eval_second_derivative(&self, x: f64) -> f64 {
        let k = self.piece(x);
        let dx = x - self.breakpoints[k];
        let c = &self.coeffs[k];
        (2..c.len()).rev().fold(0.0, |acc, m| acc * dx + (m * (m - 1)) as f64 * c[m])
    }

    /// Exact sup of |p| over `[a, b]` (critical points of each cubic piece).
    pub fn sup_abs(&self, a: f64, b: f64) -> f64 {
        self.sup_of(a, b, |x| self.eval(x).abs(), |k| derivative_coeffs(&self.coeffs[k]))
    }

    /// Exact sup of |p'| over `[a, b]`.
    pub fn sup_abs_derivative(&self, a: f64, b: f64) -> f64 {
        self.sup_of(
            a,
            b,
            |x| self.eval_derivative(x).abs(),
            |k| derivative_coeffs(&derivative_coeffs(&self.coeffs[k])),
        )
    }

    fn sup_of(
        &self,
        a: f64,
        b: f64,
        f: impl Fn(f64) -> f64,
        crit_poly: impl Fn(usize) -> Vec<f64>,
    ) -> f64 {
        let mut cands = vec![a, b];
        for (k, w) in self.breakpoints.windows(2).enumerate() {
            let lo = if k == 0 { f64::NEG_INFINITY } else { w[0] };
            let hi = if k + 1 == self.coeffs.len() { f64::INFINITY } else { w[1] };
            let (lo, hi) = (lo.max(a), hi.min(b));
            if lo > hi {
                continue;
            }
            cands.push(lo);
            cands.push(hi);
            for r in real_roots(&crit_poly(k)) {
                let x = self.breakpoints[k] + r;
                if x >= lo && x <= hi {
                    cands.push(x);
                }
            }
        }
        cands.into_iter().filter(|x| x.is_finite()).map(f).fold(0.0, f64::max)
    }
}

fn derivative_coeffs(c: &[f64]) -> Vec<f64> {
    (1..c.len()).map(|m| m as f64 * c[m]).collect()
}

/// Real roots of a polynomial of degree ≤ 2 given in ascending coefficients.
fn real_roots(c: &[f64]) -> Vec<f64> {
    let c: Vec<f64> = {
        let mut v = c.to_vec();
        while v.last().is_some_and(|x| *x == 0.0) {
            v.pop();
        }
        v
    };
    match c.len() {
        0 | 1 => vec![],
        2 => vec![-c[0] / c[1]],
        3 => {
            let (a, b, cc) = (c[2], c[1], c[0]);
            let disc = b * b - 4.0 * a * cc;
            if disc < 0.0 {
                vec![]
            } else {
                let s = disc.sqrt();
                vec![(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)]
            }
        }
        _ => unreachable!("critical-point polynomials have degree <= 2"),
    }
}

impl Signal for PiecewisePoly {
    fn value(&self, x: f64) -> f64 {
        self.eval(x)
    }
    fn derivative(&self, x: f64) -> Option<f64> {
        Some(self.eval_derivative(x))
    }
}

/// Closure-backed signal; used for manufactured solutions in tests.
#[derive(Clone)]
pub struct FnSignal {
    value: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    derivative: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl FnSignal {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { value: Arc::new(value), derivative: Some(Arc::new(derivative)) }
    }

    pub fn without_derivative(value: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { value: Arc::new(value), derivative: None }
    }
}

impl fmt::Debug for FnSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnSignal").field("has_derivative", &self.derivative.is_some()).finish()
    }
}

impl Signal for FnSignal {
    fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }
    fn derivative(&self, x: f64) -> Option<f64> {
        self.derivative.as_ref().map(|d| d(x))
    }
}

/// Shared, thread-safe handle to any signal.
pub type SharedSignal = Arc<dyn Signal>;

/// Sup of |f| and |f'| over `[a, b]` by dense sampling; used when a signal
/// is not piecewise polynomial.
pub fn sampled_sup(sig: &dyn Signal, a: f64, b: f64, samples: usize) -> (f64, Option<f64>) {
    let mut sv: f64 = 0.0;
    let mut sd: Option<f64> = Some(0.0);
    for k in 0..=samples {
        let x = a + (b - a) * k as f64 / samples as f64;
        sv = sv.max(sig.value(x).abs());
        sd = match (sd, sig.derivative(x)) {
            (Some(m), Some(d)) => Some(m.max(d.abs())),
            _ => None,
        };
    }
    (sv, sd)
}
