//! Fundamental solution of `u_t = (a(z) u_z)_z` by the parametrix (Levi)
//! construction.
//!
//! The parametrix freezes the coefficient at the source point,
//! `Z(z, ξ; s) = K(z − ξ; a(ξ) s)`. With `L = −PZ = (a(z) − a(ξ)) Z_zz + b(z) Z_z`
//! and the space-time convolution `(A ⊛ B)(z, ξ; s) = ∫₀ˢ∫ A(z, y; s − σ) B(y, ξ; σ) dy dσ`,
//! the truncated series is
//!
//! ```text
//! Φ₁ = L,   Φ_{m+1} = L + L ⊛ Φ_m,   Γ_m = Z + Z ⊛ Φ_m,   Γ_0 = Z.
//! ```
//!
//! The coefficient is extended evenly to `z < 0` and the convolutions run
//! over the whole line. Each convolution uses Gauss–Legendre in `θ` with
//! `σ = s sin²θ` (removing both endpoint singularities) and Gauss–Hermite
//! in `y` centred on the product of the two Gaussian envelopes.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{heat, heat_dx, heat_dxx, KernelPoint};
use crate::rules::Rule;
use crate::signal::PiecewisePoly;
use crate::substrate::KernelFamily;

/// Step of the centred difference used for `b = a'` when `a` is not given
/// in closed form.
pub const FD_STEP: f64 = 1e-5;

/// A user-supplied coefficient `a(z)` on `z ≥ 0`.
#[derive(Clone)]
pub struct ProfileField {
    a: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl ProfileField {
    pub fn new(a: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { a: Arc::new(a) }
    }
}

impl fmt::Debug for ProfileField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ProfileField(..)")
    }
}

/// Diffusivity `a(z)` of one substrate, time independent.
#[derive(Debug, Clone)]
pub enum DiffusivityField {
    Constant { d: f64 },
    /// `a = D0 exp(−(1 − p)^(1/2))` with the porosity `p` clamped to `[0, 1]`.
    Porous { d0: f64, porosity: PiecewisePoly },
    /// Arbitrary profile; `b` by centred differences with [`FD_STEP`].
    Profile(ProfileField),
}

impl DiffusivityField {
    pub fn is_constant(&self) -> bool {
        matches!(self, DiffusivityField::Constant { .. })
    }

    /// `a(z)`, extended evenly.
    pub fn a(&self, z: f64) -> f64 {
        let z = z.abs();
        match self {
            DiffusivityField::Constant { d } => *d,
            DiffusivityField::Porous { d0, porosity } => {
                let p = porosity.eval(z).clamp(0.0, 1.0);
                d0 * (-(1.0 - p).sqrt()).exp()
            }
            DiffusivityField::Profile(f) => (f.a)(z),
        }
    }

    /// `b(z) = a'(z)`, odd under the even extension.
    pub fn b(&self, z: f64) -> f64 {
        let sign = if z < 0.0 { -1.0 } else { 1.0 };
        let z = z.abs();
        let db = match self {
            DiffusivityField::Constant { .. } => 0.0,
            DiffusivityField::Porous { porosity, .. } => {
                let p = porosity.eval(z);
                if p <= 0.0 || p >= 1.0 {
                    0.0
                } else {
                    self.a(z) * porosity.eval_derivative(z) / (2.0 * (1.0 - p).sqrt())
                }
            }
            DiffusivityField::Profile(f) => {
                let h = FD_STEP;
                if z < h {
                    ((f.a)(z + h) - (f.a)(z)) / h
                } else {
                    ((f.a)(z + h) - (f.a)(z - h)) / (2.0 * h)
                }
            }
        };
        sign * db
    }

    /// `(min a, max a)` sampled on `[0, l]`.
    pub fn range(&self, l: f64) -> (f64, f64) {
        (0..=256)
            .map(|k| self.a(l * k as f64 / 256.0))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(a), hi.max(a)))
    }

    /// Uniform parabolicity on `[0, l]`.
    pub fn validate(&self, l: f64) -> Result<()> {
        for k in 0..=256 {
            let z = l * k as f64 / 256.0;
            let a = self.a(z);
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::NonParabolic { z, t: 0.0, a });
            }
        }
        Ok(())
    }
}

fn default_order() -> usize {
    2
}
fn default_nodes() -> usize {
    12
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametrixConfig {
    #[serde(default = "default_order")]
    pub series_order: usize,
    #[serde(default = "default_nodes")]
    pub space_quad_nodes: usize,
    #[serde(default = "default_nodes")]
    pub time_quad_nodes: usize,
}

impl Default for ParametrixConfig {
    fn default() -> Self {
        Self { series_order: default_order(), space_quad_nodes: default_nodes(), time_quad_nodes: default_nodes() }
    }
}

impl ParametrixConfig {
    pub const MAX_ORDER: usize = 4;

    pub fn validate(&self) -> Result<()> {
        if self.series_order > Self::MAX_ORDER {
            return Err(Error::validation("series_order", format!("must be at most {}", Self::MAX_ORDER)));
        }
        if self.space_quad_nodes < 8 || self.time_quad_nodes < 8 {
            return Err(Error::validation("quad_nodes", "node counts must be at least 8"));
        }
        Ok(())
    }
}

/// The parametrix `Z = K(z − ξ; a(ξ)(t − τ))`.
pub fn eval_z(p: KernelPoint, field: &DiffusivityField) -> Result<f64> {
    let s = p.t - p.tau;
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::DegenerateTime { t: p.t, tau: p.tau });
    }
    let a = field.a(p.xi);
    if !(a > 0.0) {
        return Err(Error::NonParabolic { z: p.xi, t: p.tau, a });
    }
    Ok(heat(p.z - p.xi, a * s))
}

/// Evaluator of the truncated Levi series. Immutable and shareable.
#[derive(Debug, Clone)]
pub struct Gamma {
    field: DiffusivityField,
    cfg: ParametrixConfig,
    theta: Rule,
    hermite: Rule,
    /// `e^{x²}` times the Hermite weights.
    hermite_scaled: Vec<f64>,
}

/// Sup of each series term `Z ⊛ L^{⊛k}` on the test lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesReport {
    pub term_sups: Vec<f64>,
}

/// Build the evaluator and check that the series terms decrease on a
/// small lattice around `ξ = 0.5`.
pub fn build_gamma(field: DiffusivityField, cfg: ParametrixConfig) -> Result<(Gamma, SeriesReport)> {
    cfg.validate()?;
    field.validate(1.0)?;
    let gamma = Gamma::new(field, cfg);
    let report = gamma.series_report();
    for (k, w) in report.term_sups.windows(2).enumerate() {
        if w[0] > 0.0 && w[1] >= w[0] {
            return Err(Error::SeriesDivergence { order: k + 2, prev: w[0], next: w[1] });
        }
    }
    Ok((gamma, report))
}

impl Gamma {
    fn new(field: DiffusivityField, cfg: ParametrixConfig) -> Self {
        let hermite = Rule::gauss_hermite(cfg.space_quad_nodes);
        let hermite_scaled = hermite.nodes.iter().zip(&hermite.weights).map(|(x, w)| w * (x * x).exp()).collect();
        Self { field, cfg, theta: Rule::gauss_legendre(cfg.time_quad_nodes), hermite, hermite_scaled }
    }

    pub fn field(&self) -> &DiffusivityField {
        &self.field
    }

    pub fn config(&self) -> ParametrixConfig {
        self.cfg
    }

    /// The same evaluator truncated at another order.
    pub fn with_order(&self, series_order: usize) -> Self {
        Self { cfg: ParametrixConfig { series_order, ..self.cfg }, ..self.clone() }
    }

    fn z(&self, z: f64, xi: f64, s: f64) -> f64 {
        heat(z - xi, self.field.a(xi) * s)
    }

    /// `L = −PZ`.
    fn l(&self, z: f64, xi: f64, s: f64) -> f64 {
        let ax = self.field.a(xi);
        if self.field.is_constant() {
            return 0.0;
        }
        let x = z - xi;
        (self.field.a(z) - ax) * heat_dxx(x, ax * s) + self.field.b(z) * heat_dx(x, ax * s)
    }

    /// `(A ⊛ B)(z, ξ; s)`.
    fn conv(
        &self,
        z: f64,
        xi: f64,
        s: f64,
        a: impl Fn(f64, f64, f64) -> f64,
        b: impl Fn(f64, f64, f64) -> f64,
    ) -> f64 {
        let (az, ax) = (self.field.a(z), self.field.a(xi));
        let quarter_pi = 0.25 * std::f64::consts::PI;
        let mut acc = 0.0;
        for (u, wu) in self.theta.nodes.iter().zip(&self.theta.weights) {
            let th = quarter_pi * (1.0 + u);
            let (sn, cs) = th.sin_cos();
            let sigma = s * sn * sn;
            let rest = s * cs * cs;
            let jac = quarter_pi * wu * s * 2.0 * sn * cs;
            let pa = 1.0 / (4.0 * az * rest);
            let pb = 1.0 / (4.0 * ax * sigma);
            let prec = pa + pb;
            let mean = (z * pa + xi * pb) / prec;
            let r = 1.0 / prec.sqrt();
            let mut inner = 0.0;
            for (x, w) in self.hermite.nodes.iter().zip(&self.hermite_scaled) {
                let y = mean + r * x;
                inner += w * a(z, y, rest) * b(y, xi, sigma);
            }
            acc += jac * r * inner;
        }
        acc
    }

    /// Truncated density `Φ_m(y, ξ; σ)`.
    fn density(&self, order: usize, y: f64, xi: f64, sigma: f64) -> f64 {
        let l = self.l(y, xi, sigma);
        if order <= 1 {
            return l;
        }
        l + self.conv(y, xi, sigma, |z, w, s| self.l(z, w, s), |w, x, s| self.density(order - 1, w, x, s))
    }

    /// `k`-fold term `L^{⊛k}`.
    fn power(&self, k: usize, y: f64, xi: f64, sigma: f64) -> f64 {
        if k <= 1 {
            return self.l(y, xi, sigma);
        }
        self.conv(y, xi, sigma, |z, w, s| self.l(z, w, s), |w, x, s| self.power(k - 1, w, x, s))
    }

    /// Correction `Γ − Z` at lag `s > 0`.
    pub fn correction(&self, z: f64, xi: f64, s: f64) -> f64 {
        let m = self.cfg.series_order;
        if m == 0 || self.field.is_constant() {
            return 0.0;
        }
        self.conv(z, xi, s, |z, y, s| self.z(z, y, s), |y, x, s| self.density(m, y, x, s))
    }

    /// `Γ(z, ξ; s)` for `s > 0`.
    pub fn value(&self, z: f64, xi: f64, s: f64) -> f64 {
        self.z(z, xi, s) + self.correction(z, xi, s)
    }

    pub fn eval(&self, p: KernelPoint) -> Result<f64> {
        eval_z(p, &self.field)?;
        Ok(self.value(p.z, p.xi, p.t - p.tau))
    }

    /// `|PΓ|` at one point by centred differences with relative step `h`.
    pub fn residual(&self, z: f64, xi: f64, s: f64, h: f64) -> f64 {
        let dz = h * (self.field.a(xi) * s).sqrt();
        let ds = h * s;
        let g = |z: f64, s: f64| self.value(z, xi, s);
        let g0 = g(z, s);
        let gt = (g(z, s + ds) - g(z, s - ds)) / (2.0 * ds);
        let (gp, gm) = (g(z + dz, s), g(z - dz, s));
        let gz = (gp - gm) / (2.0 * dz);
        let gzz = (gp - 2.0 * g0 + gm) / (dz * dz);
        (gt - self.field.a(z) * gzz - self.field.b(z) * gz).abs()
    }

    fn series_report(&self) -> SeriesReport {
        let lattice = [(0.45, 0.5), (0.5, 0.5), (0.55, 0.5)];
        let s = 0.01;
        let term_sups = (1..=self.cfg.series_order)
            .map(|k| {
                if self.field.is_constant() {
                    return 0.0;
                }
                lattice
                    .iter()
                    .map(|&(z, xi)| {
                        self.conv(z, xi, s, |z, y, s| self.z(z, y, s), |y, x, s| self.power(k, y, x, s)).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        SeriesReport { term_sups }
    }

    /// Log-log slopes of `sup_z |Γ|`, `sup_z |Γ_z|`, `sup_z |Γ_t|` against
    /// the lag, measured over `lags` (increasing) at source `ξ`.
    pub fn bound_slopes(&self, xi: f64, lags: &[f64]) -> BoundSlopes {
        let mut logs = [Vec::new(), Vec::new(), Vec::new()];
        for &s in lags {
            let w = (self.field.a(xi) * s).sqrt();
            let mut sup = [0.0f64; 3];
            for k in -24..=24 {
                let z = xi + w * k as f64 / 6.0;
                let h = 1e-4;
                let g = self.value(z, xi, s);
                let gz = (self.value(z + h * w, xi, s) - self.value(z - h * w, xi, s)) / (2.0 * h * w);
                let gt = (self.value(z, xi, s * (1.0 + h)) - self.value(z, xi, s * (1.0 - h))) / (2.0 * h * s);
                sup[0] = sup[0].max(g.abs());
                sup[1] = sup[1].max(gz.abs());
                sup[2] = sup[2].max(gt.abs());
            }
            for (l, v) in logs.iter_mut().zip(sup) {
                l.push((s.ln(), v.ln()));
            }
        }
        BoundSlopes { value: fit_slope(&logs[0]), dz: fit_slope(&logs[1]), dt: fit_slope(&logs[2]) }
    }
}

/// Measured growth exponents; the bounds predict `−½`, `−1`, `−3/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundSlopes {
    pub value: f64,
    pub dz: f64,
    pub dt: f64,
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `H = Γ(z, ξ) − Γ(−z, ξ)`, zero on `z = 0`.
pub fn eval_h_vardiff(gamma: &Gamma, p: KernelPoint) -> Result<f64> {
    let g = gamma.eval(p)?;
    if p.z == 0.0 {
        return Ok(0.0);
    }
    let reflected = gamma.eval(KernelPoint { z: -p.z, ..p })?;
    Ok(g - reflected)
}

/// Tabulated correction `Γ − Z` in the scaled variables
/// `(ξ, √s, x = (z − ξ)/√(4a(ξ)s))`, in which it is smooth and bounded.
#[derive(Debug, Clone)]
struct CorrectionTable {
    xi: Vec<f64>,
    v: Vec<f64>,
    x_max: f64,
    nx: usize,
    data: Vec<f64>,
}

impl CorrectionTable {
    const NXI: usize = 9;
    const NV: usize = 10;
    const NX: usize = 49;
    const X_MAX: f64 = 6.0;

    fn build(gamma: &Gamma, l_max: f64, s_max: f64) -> Self {
        let xi: Vec<f64> = (0..Self::NXI).map(|i| l_max * i as f64 / (Self::NXI - 1) as f64).collect();
        let vmax = s_max.sqrt();
        let v: Vec<f64> = (0..Self::NV)
            .map(|j| if j == 0 { 1e-3 * vmax } else { vmax * j as f64 / (Self::NV - 1) as f64 })
            .collect();
        let mut data = Vec::with_capacity(Self::NXI * Self::NV * Self::NX);
        for &x0 in &xi {
            let w0 = (4.0 * gamma.field.a(x0)).sqrt();
            for &vj in &v {
                let s = vj * vj;
                for k in 0..Self::NX {
                    let x = Self::X_MAX * (2.0 * k as f64 / (Self::NX - 1) as f64 - 1.0);
                    data.push(gamma.correction(x0 + x * w0 * vj, x0, s));
                }
            }
        }
        Self { xi, v, x_max: Self::X_MAX, nx: Self::NX, data }
    }

    fn cell(grid: &[f64], x: f64) -> (usize, f64) {
        let x = x.clamp(grid[0], grid[grid.len() - 1]);
        let i = grid[1..].iter().position(|&g| x <= g).unwrap_or(grid.len() - 2);
        (i, (x - grid[i]) / (grid[i + 1] - grid[i]))
    }

    /// Catmull-Rom along `x` for fixed `(ξ_i, v_j)`.
    fn along_x(&self, i: usize, j: usize, x: f64) -> f64 {
        if x.abs() >= self.x_max {
            return 0.0;
        }
        let row = &self.data[(i * self.v.len() + j) * self.nx..][..self.nx];
        let h = 2.0 * self.x_max / (self.nx - 1) as f64;
        let u = (x + self.x_max) / h;
        let k = (u.floor() as usize).min(self.nx - 2);
        let f = u - k as f64;
        let at = |m: isize| -> f64 {
            if m < 0 || m as usize >= self.nx {
                0.0
            } else {
                row[m as usize]
            }
        };
        let k = k as isize;
        let (p0, p1, p2, p3) = (at(k - 1), at(k), at(k + 1), at(k + 2));
        let (m1, m2) = (0.5 * (p2 - p0), 0.5 * (p3 - p1));
        let (f2, f3) = (f * f, f * f * f);
        (2.0 * f3 - 3.0 * f2 + 1.0) * p1 + (f3 - 2.0 * f2 + f) * m1 + (-2.0 * f3 + 3.0 * f2) * p2 + (f3 - f2) * m2
    }

    fn eval(&self, field: &DiffusivityField, z: f64, xi: f64, s: f64) -> f64 {
        let (i, fi) = Self::cell(&self.xi, xi);
        let (j, fj) = Self::cell(&self.v, s.sqrt());
        let mut acc = 0.0;
        for (di, wi) in [(0, 1.0 - fi), (1, fi)] {
            if wi == 0.0 {
                continue;
            }
            let xn = self.xi[i + di];
            let x = (z - xi) / (4.0 * field.a(xn) * s).sqrt();
            for (dj, wj) in [(0, 1.0 - fj), (1, fj)] {
                if wj != 0.0 {
                    acc += wi * wj * self.along_x(i + di, j + dj, x);
                }
            }
        }
        acc
    }
}

/// The parametrix fundamental solution as a kernel family for the
/// boundary-integral solver. For a variable field the series correction
/// is tabulated once over `[0, l_max]` and lags up to `s_max`; beyond
/// `s_max` the last tabulated lag is used.
#[derive(Debug, Clone)]
pub struct GammaFamily {
    gamma: Gamma,
    table: Option<CorrectionTable>,
    a_max: f64,
}

impl GammaFamily {
    pub fn new(gamma: Gamma, l_max: f64, s_max: f64) -> Result<Self> {
        gamma.field.validate(l_max)?;
        let table = if gamma.field.is_constant() || gamma.cfg.series_order == 0 {
            None
        } else {
            Some(CorrectionTable::build(&gamma, l_max, s_max))
        };
        let a_max = gamma.field.range(l_max).1;
        Ok(Self { gamma, table, a_max })
    }

    pub fn gamma(&self) -> &Gamma {
        &self.gamma
    }

    fn corr(&self, z: f64, xi: f64, s: f64) -> f64 {
        self.table.as_ref().map_or(0.0, |t| t.eval(&self.gamma.field, z, xi, s))
    }

    fn fd_step(&self, xi: f64, s: f64) -> f64 {
        1e-3 * (self.gamma.field.a(xi) * s).sqrt()
    }
}

impl KernelFamily for GammaFamily {
    fn diffusivity(&self, z: f64) -> f64 {
        self.gamma.field.a(z)
    }
    fn max_diffusivity(&self) -> f64 {
        self.a_max
    }
    fn value(&self, z: f64, xi: f64, s: f64) -> f64 {
        self.gamma.z(z, xi, s) + self.corr(z, xi, s)
    }
    fn d_z(&self, z: f64, xi: f64, s: f64) -> f64 {
        let a = self.gamma.field.a(xi);
        let mut d = heat_dx(z - xi, a * s);
        if self.table.is_some() {
            let h = self.fd_step(xi, s);
            d += (self.corr(z + h, xi, s) - self.corr(z - h, xi, s)) / (2.0 * h);
        }
        d
    }
    fn d_xi(&self, z: f64, xi: f64, s: f64) -> f64 {
        let field = &self.gamma.field;
        let a = field.a(xi);
        let mut d = -heat_dx(z - xi, a * s);
        if !field.is_constant() {
            d += field.b(xi) * s * heat_dxx(z - xi, a * s);
        }
        if self.table.is_some() {
            let h = self.fd_step(xi, s);
            d += (self.corr(z, xi + h, s) - self.corr(z, xi - h, s)) / (2.0 * h);
        }
        d
    }
}

#[cfg(test)]
mod tests;
