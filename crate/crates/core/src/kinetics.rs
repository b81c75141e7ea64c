//! Reaction terms of the biofilm model: species growth `H̃_i`, the
//! advected form `H_i = H̃_i − X_i R`, the velocity source `R = Σ H̃_i/ρ_i`
//! and substrate sources `F_j`.
//!
//! Substrates enter as concentrations `C_j`; the solver works with the
//! unscaled concentration and carries the diffusivity in its kernels.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Inputs within this distance below zero are clamped to zero.
pub const NEGATIVE_TOLERANCE: f64 = -1e-12;

/// Safety factor applied to sampled Lipschitz constants.
pub const LIPSCHITZ_SAFETY: f64 = 1.1;

/// Monod growth parameters of one species.
#[derive(Debug, Clone, PartialEq)]
pub struct MonodSpecies {
    pub mu_max: f64,
    /// Half-saturation constant per substrate (indexed like `substrates`).
    pub k_s: Vec<f64>,
    pub decay: f64,
    /// Substrates this species grows on.
    pub substrates: Vec<usize>,
    /// Yield per substrate (indexed like `substrates`).
    pub yields: Vec<f64>,
}

type TermFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

/// User-supplied `H̃(X, C)` and `F(X, C)`.
#[derive(Clone)]
pub struct CustomTerms {
    growth: Arc<TermFn>,
    sources: Arc<TermFn>,
}

impl CustomTerms {
    pub fn new(
        growth: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        sources: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self { growth: Arc::new(growth), sources: Arc::new(sources) }
    }
}

impl fmt::Debug for CustomTerms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomTerms")
    }
}

#[derive(Debug, Clone)]
pub enum Terms {
    Monod(Vec<MonodSpecies>),
    Custom(CustomTerms),
}

#[derive(Debug, Clone)]
pub struct KineticsSpec {
    pub n: usize,
    pub m: usize,
    pub rho: Vec<f64>,
    pub terms: Terms,
}

/// `(H̃_i, H_i, R)` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthTerms {
    pub h_tilde: Vec<f64>,
    pub h: Vec<f64>,
    pub r: f64,
}

/// Upper corner of the state box `[0, x_max] × [0, c_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBox {
    pub x_max: Vec<f64>,
    pub c_max: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    pub raw: f64,
    pub reported: f64,
}

impl KineticsSpec {
    pub fn monod(rho: Vec<f64>, m: usize, species: Vec<MonodSpecies>) -> Result<Self> {
        let spec = Self { n: rho.len(), m, rho, terms: Terms::Monod(species) };
        spec.validate()?;
        Ok(spec)
    }

    pub fn custom(rho: Vec<f64>, m: usize, terms: CustomTerms) -> Result<Self> {
        let spec = Self { n: rho.len(), m, rho, terms: Terms::Custom(terms) };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.rho.len() != self.n {
            return Err(Error::validation("species", "need at least one species with a density"));
        }
        for (i, &r) in self.rho.iter().enumerate() {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::validation(format!("species.{}.rho", i + 1), "must be positive"));
            }
        }
        if let Terms::Monod(sp) = &self.terms {
            if sp.len() != self.n {
                return Err(Error::validation("species", "one Monod block per species"));
            }
            for (i, s) in sp.iter().enumerate() {
                let key = |k: &str| format!("species.{}.{}", i + 1, k);
                if !(s.mu_max >= 0.0 && s.mu_max.is_finite()) {
                    return Err(Error::validation(key("mu_max"), "must be non-negative"));
                }
                if !(s.decay >= 0.0 && s.decay.is_finite()) {
                    return Err(Error::validation(key("decay"), "must be non-negative"));
                }
                if s.k_s.len() != s.substrates.len() || s.yields.len() != s.substrates.len() {
                    return Err(Error::validation(key("K_S"), "one entry per substrate"));
                }
                if s.substrates.iter().any(|&j| j >= self.m) {
                    return Err(Error::validation(key("substrates"), "substrate index out of range"));
                }
                if s.k_s.iter().any(|&k| !(k > 0.0)) {
                    return Err(Error::validation(key("K_S"), "must be positive"));
                }
                if s.yields.iter().any(|&y| !(y > 0.0)) {
                    return Err(Error::validation(key("Y"), "must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Monod growth part `μ X Π C/(K + C)` of species `i` (no decay).
    fn monod_growth(s: &MonodSpecies, x: f64, c: &[f64]) -> f64 {
        s.substrates
            .iter()
            .zip(&s.k_s)
            .fold(s.mu_max * x, |acc, (&j, &k)| acc * c[j] / (k + c[j]))
    }

    fn h_tilde_into(&self, x: &[f64], c: &[f64], out: &mut [f64]) {
        match &self.terms {
            Terms::Monod(sp) => {
                for (i, s) in sp.iter().enumerate() {
                    out[i] = Self::monod_growth(s, x[i], c) - s.decay * x[i];
                }
            }
            Terms::Custom(t) => (t.growth)(x, c, out),
        }
    }

    fn sources_into(&self, x: &[f64], c: &[f64], out: &mut [f64]) {
        match &self.terms {
            Terms::Monod(sp) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for (i, s) in sp.iter().enumerate() {
                    let g = Self::monod_growth(s, x[i], c);
                    for (&j, &y) in s.substrates.iter().zip(&s.yields) {
                        out[j] -= g / y;
                    }
                }
            }
            Terms::Custom(t) => (t.sources)(x, c, out),
        }
    }

    /// `H̃_i`, `H_i`, `R` at state `(X, C)`.
    pub fn eval_growth_terms(&self, x: &[f64], c: &[f64]) -> Result<GrowthTerms> {
        let (x, c) = (clamp_state("X", x)?, clamp_state("C", c)?);
        let mut h_tilde = vec![0.0; self.n];
        self.h_tilde_into(&x, &c, &mut h_tilde);
        let r = h_tilde.iter().zip(&self.rho).map(|(h, r)| h / r).sum::<f64>();
        let h = h_tilde.iter().zip(&x).map(|(ht, xi)| ht - xi * r).collect();
        Ok(GrowthTerms { h_tilde, h, r })
    }

    /// `F_j` at state `(X, C)`.
    pub fn eval_substrate_sources(&self, x: &[f64], c: &[f64]) -> Result<Vec<f64>> {
        let (x, c) = (clamp_state("X", x)?, clamp_state("C", c)?);
        let mut out = vec![0.0; self.m];
        self.sources_into(&x, &c, &mut out);
        Ok(out)
    }

    /// Sampled Lipschitz constant of `(H̃, F)` over the state box.
    ///
    /// The lattice starts at the origin with fixed `spacing`, so a larger
    /// box samples a superset of points and the estimate cannot decrease.
    /// Gradients come from Richardson-extrapolated differences (one-sided
    /// at the lower faces, where negative states are not admissible).
    pub fn estimate_lipschitz(&self, bx: &StateBox, spacing: f64) -> LipschitzEstimate {
        let upper: Vec<f64> = bx.x_max.iter().chain(&bx.c_max).copied().collect();
        let dim = upper.len();
        let counts: Vec<usize> =
            upper.iter().map(|&u| (u.max(0.0) / spacing + 1e-9).floor() as usize + 1).collect();
        let total: usize = counts.iter().product();
        let mut idx = vec![0usize; dim];
        let mut point = vec![0.0; dim];
        let mut raw: f64 = 0.0;
        let outputs = self.n + self.m;
        let mut grads = vec![vec![0.0; dim]; outputs];
        for _ in 0..total {
            for d in 0..dim {
                point[d] = idx[d] as f64 * spacing;
            }
            for d in 0..dim {
                let h = 1e-3 * spacing;
                let col = self.directional_derivative(&point, d, h);
                for (o, g) in col.into_iter().enumerate() {
                    grads[o][d] = g;
                }
            }
            for g in &grads {
                raw = raw.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
            for d in 0..dim {
                idx[d] += 1;
                if idx[d] < counts[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        LipschitzEstimate { raw, reported: raw * LIPSCHITZ_SAFETY }
    }

    fn all_terms(&self, p: &[f64]) -> Vec<f64> {
        let (x, c) = p.split_at(self.n);
        let mut out = vec![0.0; self.n + self.m];
        let (h, f) = out.split_at_mut(self.n);
        self.h_tilde_into(x, c, h);
        self.sources_into(x, c, f);
        out
    }

    fn directional_derivative(&self, p: &[f64], d: usize, h: f64) -> Vec<f64> {
        let shifted = |delta: f64| {
            let mut q = p.to_vec();
            q[d] += delta;
            self.all_terms(&q)
        };
        let one_sided = p[d] - 2.0 * h < 0.0;
        let diff = |step: f64| -> Vec<f64> {
            if one_sided {
                let (f0, f1, f2) = (shifted(0.0), shifted(step), shifted(2.0 * step));
                f0.iter()
                    .zip(&f1)
                    .zip(&f2)
                    .map(|((a, b), c)| (-3.0 * a + 4.0 * b - c) / (2.0 * step))
                    .collect()
            } else {
                let (fp, fm) = (shifted(step), shifted(-step));
                fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * step)).collect()
            }
        };
        let coarse = diff(h);
        let fine = diff(0.5 * h);
        coarse.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect()
    }
}

fn clamp_state(what: &'static str, v: &[f64]) -> Result<Vec<f64>> {
    v.iter()
        .map(|&x| {
            if x >= 0.0 {
                Ok(x)
            } else if x >= NEGATIVE_TOLERANCE {
                Ok(0.0)
            } else {
                Err(Error::NegativeState { what, value: x })
            }
        })
        .collect()
}
