//! Biomass transport along characteristics: species concentrations
//! `X_i(z0, t)`, the map `η(z0, t)`, its Jacobian `∂η/∂z0` and the
//! velocity `u(η, t) = ∫_0^{z0} R ∂η/∂ζ0 dζ0`.

use crate::error::{Error, Result};
use crate::kinetics::{GrowthTerms, KineticsSpec, NEGATIVE_TOLERANCE};

/// Uniform material grid on `[0, L0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialGrid {
    pub l0: f64,
    pub nodes: Vec<f64>,
}

impl MaterialGrid {
    pub const MIN_INTERVALS: usize = 16;

    pub fn uniform(l0: f64, intervals: usize) -> Result<Self> {
        if !(l0 > 0.0 && l0.is_finite()) {
            return Err(Error::validation("domain.L0", "must be positive"));
        }
        if intervals < Self::MIN_INTERVALS {
            return Err(Error::validation("domain.N_z", "need at least 16 intervals"));
        }
        let nodes = (0..=intervals)
            .map(|k| if k == intervals { l0 } else { l0 * k as f64 / intervals as f64 })
            .collect();
        Ok(Self { l0, nodes })
    }
}

/// Per-node biomass state at time `t`. Vectors are indexed by material
/// node; `x[k][i]` is species `i` at node `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiomassState {
    pub t: f64,
    pub z0: Vec<f64>,
    pub eta: Vec<f64>,
    pub jac: Vec<f64>,
    pub u: Vec<f64>,
    pub x: Vec<Vec<f64>>,
}

impl BiomassState {
    /// State at `t = 0` with `η = z0`, unit Jacobian and velocity from the
    /// initial growth field.
    pub fn initial(grid: &MaterialGrid, x: Vec<Vec<f64>>, c: &[Vec<f64>], spec: &KineticsSpec) -> Result<Self> {
        let z0 = grid.nodes.clone();
        let jac = vec![1.0; z0.len()];
        let r = growth_at_nodes(spec, &x, c)?.iter().map(|g| g.r).collect::<Vec<_>>();
        let u = cumulative_trapezoid(&z0, |k| r[k] * jac[k]);
        Ok(Self { t: 0.0, eta: z0.clone(), z0, jac, u, x })
    }

    pub fn len(&self) -> usize {
        self.z0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z0.is_empty()
    }

    /// Volume fractions `f_i = X_i/ρ_i`.
    pub fn fractions(&self, rho: &[f64]) -> Vec<Vec<f64>> {
        self.x.iter().map(|xs| xs.iter().zip(rho).map(|(x, r)| x / r).collect()).collect()
    }

    /// Largest `|Σ_i f_i − 1|` over nodes.
    pub fn fraction_drift(&self, rho: &[f64]) -> f64 {
        self.fractions(rho)
            .iter()
            .map(|f| (f.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Linear interpolation of a nodal field at position `z` (extrapolates
    /// from the last interval above the top node).
    pub fn interpolate(&self, field: &[f64], z: f64) -> f64 {
        interpolate(&self.eta, field, z)
    }

    pub fn species_at(&self, z: f64) -> Vec<f64> {
        let n = self.x[0].len();
        (0..n)
            .map(|i| {
                let col: Vec<f64> = self.x.iter().map(|x| x[i]).collect();
                self.interpolate(&col, z)
            })
            .collect()
    }
}

/// Piecewise-linear interpolation on increasing `xs`, extending the end
/// intervals linearly.
pub fn interpolate(xs: &[f64], ys: &[f64], z: f64) -> f64 {
    let n = xs.len();
    if n == 1 {
        return ys[0];
    }
    let k = match xs[1..n - 1].iter().position(|&x| z < x) {
        Some(k) => k,
        None => n - 2,
    };
    let w = (z - xs[k]) / (xs[k + 1] - xs[k]);
    ys[k] + w * (ys[k + 1] - ys[k])
}

fn cumulative_trapezoid(z0: &[f64], f: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(z0.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..z0.len() {
        acc += 0.5 * (z0[k] - z0[k - 1]) * (f(k - 1) + f(k));
        out.push(acc);
    }
    out
}

fn growth_at_nodes(spec: &KineticsSpec, x: &[Vec<f64>], c: &[Vec<f64>]) -> Result<Vec<GrowthTerms>> {
    x.iter().zip(c).map(|(xk, ck)| spec.eval_growth_terms(xk, ck)).collect()
}

/// Advance the characteristics system by `dt`.
///
/// `c_prev`/`c_next` are substrate concentrations per node at the old and
/// new time levels. `guess` is the current Picard iterate at the new time;
/// without one an explicit Euler predictor is used for `X`.
///
/// `X` uses the trapezoidal rule on `H_i`; the Jacobian uses the
/// multiplicative update `jac · exp(dt (R^n + R^{n+1})/2)`; `η` and `u` are
/// composite-trapezoid integrals in `z0` of `jac` and `R · jac`.
pub fn step_characteristics(
    prev: &BiomassState,
    c_prev: &[Vec<f64>],
    c_next: &[Vec<f64>],
    spec: &KineticsSpec,
    dt: f64,
    guess: Option<&BiomassState>,
) -> Result<BiomassState> {
    debug_assert!(dt > 0.0);
    let g_prev = growth_at_nodes(spec, &prev.x, c_prev)?;
    let x_star: Vec<Vec<f64>> = match guess {
        Some(g) if g.len() == prev.len() => g.x.clone(),
        _ => prev
            .x
            .iter()
            .zip(&g_prev)
            .map(|(x, g)| x.iter().zip(&g.h).map(|(x, h)| (x + dt * h).max(0.0)).collect())
            .collect(),
    };
    let g_star = growth_at_nodes(spec, &x_star, c_next)?;
    let mut x_new = Vec::with_capacity(prev.len());
    for ((x, gp), gs) in prev.x.iter().zip(&g_prev).zip(&g_star) {
        let row = x
            .iter()
            .zip(gp.h.iter().zip(&gs.h))
            .map(|(x, (hp, hs))| {
                let v = x + 0.5 * dt * (hp + hs);
                if v >= 0.0 {
                    Ok(v)
                } else if v >= NEGATIVE_TOLERANCE {
                    Ok(0.0)
                } else {
                    Err(Error::NegativeState { what: "X", value: v })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        x_new.push(row);
    }
    let g_new = growth_at_nodes(spec, &x_new, c_next)?;
    let mut jac = Vec::with_capacity(prev.len());
    for (k, (&j, (gp, gn))) in prev.jac.iter().zip(g_prev.iter().zip(&g_new)).enumerate() {
        let v = j * (0.5 * dt * (gp.r + gn.r)).exp();
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::JacobianCollapse { node: k, value: v });
        }
        jac.push(v);
    }
    let eta = cumulative_trapezoid(&prev.z0, |k| jac[k]);
    let u = cumulative_trapezoid(&prev.z0, |k| g_new[k].r * jac[k]);
    Ok(BiomassState { t: prev.t + dt, z0: prev.z0.clone(), eta, jac, u, x: x_new })
}
