//! Substrate diffusion on the moving domain `0 < z < L(t)` by boundary
//! integral equations.
//!
//! Each substrate solves `C_t = D C_zz + F` with `C_z(0, t) = 0` and either
//! `C(L(t), t) = ψ(t)` or the Robin law `C_z = α1 ψ − α2 C` at `z = L(t)`.
//! The diffusivity is carried by the kernel family (`K(x; D s)` for a
//! constant `D`) rather than by rescaling the unknown.
//!
//! In the default image-corrected representation the even image kernel
//! `N` handles the substratum, so the zero-flux condition holds by
//! construction:
//!
//! ```text
//! C(z,t) = ∫ φ N dξ + ∫ [D N θ − D N_ξ b + L̇ N b](z; L(τ)) dτ + ∬ N F
//! ```
//!
//! with `θ = C_z(L)` and `b = C(L)`. The boundary flux solves the
//! second-kind equation obtained from `w = C_z` and the odd kernel `G`:
//!
//! ```text
//! θ(t) = 2∫ φ' G dξ + 2∫ G ψ̇ dτ − 2D ∫ θ G_ξ dτ − 2∬ G_ξ F
//! ```
//!
//! (the `L̇` and `F(L)` boundary contributions cancel for `w`).

pub mod family;
pub mod quadrature;
mod representation;
mod volterra;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{SharedSignal, Signal};

pub use family::{HeatFamily, KernelFamily};
pub use quadrature::{quad_weights_singular, trapezoid_weights};

/// Which boundary representation to use.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepresentationMode {
    /// Even-image kernel at the substratum, moving-boundary term included,
    /// substratum trace recovered from the representation.
    #[default]
    ImageCorrected,
    /// Literal formulas: odd kernel, zero substratum trace, no
    /// moving-boundary term. Diagnostic only.
    PaperLiteral,
}

impl RepresentationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RepresentationMode::ImageCorrected => "image-corrected",
            RepresentationMode::PaperLiteral => "paper-literal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryKind {
    DirichletNeumann,
    NeumannRobin { h: f64, k: f64, d_star: f64 },
}

/// Boundary data of one substrate at `z = L(t)`.
#[derive(Clone)]
pub struct BoundarySpec {
    pub kind: BoundaryKind,
    pub psi: SharedSignal,
}

impl std::fmt::Debug for BoundarySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundarySpec").field("kind", &self.kind).finish()
    }
}

impl BoundarySpec {
    pub fn dirichlet(psi: SharedSignal) -> Self {
        Self { kind: BoundaryKind::DirichletNeumann, psi }
    }

    pub fn robin(psi: SharedSignal, h: f64, k: f64, d_star: f64) -> Self {
        Self { kind: BoundaryKind::NeumannRobin { h, k, d_star }, psi }
    }

    /// `(α1, α2) = (D*/(h D), k D*/(h D))`.
    pub fn alphas(&self, d: f64) -> Option<(f64, f64)> {
        match self.kind {
            BoundaryKind::NeumannRobin { h, k, d_star } if h > 0.0 => {
                Some((d_star / (h * d), k * d_star / (h * d)))
            }
            _ => None,
        }
    }
}

struct Scaled {
    inner: SharedSignal,
    factor: f64,
}

impl Signal for Scaled {
    fn value(&self, x: f64) -> f64 {
        self.inner.value(x) / self.factor
    }
    fn derivative(&self, x: f64) -> Option<f64> {
        self.inner.derivative(x).map(|d| d / self.factor)
    }
}

/// Geometry at one time level: the boundary, its speed, the top Jacobian
/// and the source positions (increasing, first `0`, last `L`).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeLevel {
    pub t: f64,
    pub l: f64,
    pub ldot: f64,
    pub jac_top: f64,
    pub xs: Vec<f64>,
}

/// Time levels shared by all substrates since the last rebaseline.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Geometry {
    pub levels: Vec<TimeLevel>,
}

impl Geometry {
    pub fn times(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.t).collect()
    }

    pub fn last(&self) -> &TimeLevel {
        self.levels.last().expect("geometry has a base level")
    }

    /// Replace level `n` (or append it).
    pub fn set_level(&mut self, n: usize, level: TimeLevel) {
        self.levels.truncate(n);
        self.levels.push(level);
    }
}

/// Initial profile on `[0, L_b]` at time `t0`, piecewise linear on a fine
/// sampling, with its slope sampled the same way.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub t0: f64,
    pub xs: Vec<f64>,
    pub value: Vec<f64>,
    pub slope: Vec<f64>,
}

impl InitialData {
    /// Sample a signal on `segments` equal pieces of `[0, l0]`. Missing
    /// derivatives fall back to central differences.
    pub fn from_signal(sig: &dyn Signal, l0: f64, segments: usize) -> Self {
        let xs: Vec<f64> = (0..=segments).map(|k| l0 * k as f64 / segments as f64).collect();
        let value = xs.iter().map(|&x| sig.value(x)).collect();
        let h = 1e-6 * l0;
        let slope = xs
            .iter()
            .map(|&x| sig.derivative(x).unwrap_or_else(|| (sig.value(x + h) - sig.value(x - h)) / (2.0 * h)))
            .collect();
        Self { t0: 0.0, xs, value, slope }
    }

    /// Clamped cubic spline through `(xs, ys)` with end slopes `0` and
    /// `slope_end`, resampled `refine` times per interval.
    pub fn from_profile(t0: f64, xs: &[f64], ys: &[f64], slope_end: f64, refine: usize) -> Result<Self> {
        let n = xs.len();
        if n < 3 || ys.len() != n || xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::ProfileUnavailable("need at least three increasing nodes".into()));
        }
        if ys.iter().any(|v| !v.is_finite()) {
            return Err(Error::ProfileUnavailable("non-finite profile value".into()));
        }
        let m = clamped_spline_slopes(xs, ys, 0.0, slope_end);
        let mut out_x = Vec::with_capacity((n - 1) * refine + 1);
        let mut out_v = Vec::with_capacity(out_x.capacity());
        let mut out_d = Vec::with_capacity(out_x.capacity());
        for k in 0..n - 1 {
            let h = xs[k + 1] - xs[k];
            for r in 0..refine {
                let u = r as f64 / refine as f64;
                let (v, d) = hermite(ys[k], ys[k + 1], m[k], m[k + 1], h, u);
                out_x.push(xs[k] + u * h);
                out_v.push(v);
                out_d.push(d);
            }
        }
        out_x.push(xs[n - 1]);
        out_v.push(ys[n - 1]);
        out_d.push(m[n - 1]);
        Ok(Self { t0, xs: out_x, value: out_v, slope: out_d })
    }

    pub fn top(&self) -> f64 {
        *self.xs.last().expect("non-empty")
    }
}

fn hermite(y0: f64, y1: f64, m0: f64, m1: f64, h: f64, u: f64) -> (f64, f64) {
    let (u2, u3) = (u * u, u * u * u);
    let v = (2.0 * u3 - 3.0 * u2 + 1.0) * y0
        + (u3 - 2.0 * u2 + u) * h * m0
        + (-2.0 * u3 + 3.0 * u2) * y1
        + (u3 - u2) * h * m1;
    let d = ((6.0 * u2 - 6.0 * u) * y0 + (-6.0 * u2 + 6.0 * u) * y1) / h
        + (3.0 * u2 - 4.0 * u + 1.0) * m0
        + (3.0 * u2 - 2.0 * u) * m1;
    (v, d)
}

/// Node slopes of the clamped cubic spline (tridiagonal solve).
pub fn clamped_spline_slopes(xs: &[f64], ys: &[f64], m_start: f64, m_end: f64) -> Vec<f64> {
    let n = xs.len();
    let mut m = vec![0.0; n];
    m[0] = m_start;
    m[n - 1] = m_end;
    if n == 2 {
        return m;
    }
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
    // unknowns m_1..m_{n-2}
    let k = n - 2;
    let mut a = vec![0.0; k];
    let mut b = vec![0.0; k];
    let mut c = vec![0.0; k];
    let mut r = vec![0.0; k];
    for j in 0..k {
        let i = j + 1;
        a[j] = h[i];
        b[j] = 2.0 * (h[i - 1] + h[i]);
        c[j] = h[i - 1];
        r[j] = 3.0 * (h[i] * delta[i - 1] + h[i - 1] * delta[i]);
    }
    r[0] -= a[0] * m_start;
    r[k - 1] -= c[k - 1] * m_end;
    for j in 1..k {
        let w = a[j] / b[j - 1];
        b[j] -= w * c[j - 1];
        r[j] -= w * r[j - 1];
    }
    m[k] = r[k - 1] / b[k - 1];
    for j in (0..k - 1).rev() {
        m[j + 1] = (r[j] - c[j] * m[j + 2]) / b[j];
    }
    m
}

/// Boundary densities and sources per time level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubstrateHistory {
    /// `F` at the level's source positions.
    pub f: Vec<Vec<f64>>,
    /// Flux `C_z(L(t), t)`.
    pub theta: Vec<f64>,
    /// Trace `C(L(t), t)`: `ψ` (Dirichlet) or `ρ` (Robin).
    pub trace: Vec<f64>,
    pub psi: Vec<f64>,
    pub psi_dot: Vec<f64>,
    /// Substratum trace `Φ = C(0, t)`.
    pub phi: Vec<f64>,
}

impl SubstrateHistory {
    fn truncate(&mut self, n: usize) {
        self.f.truncate(n);
        self.theta.truncate(n);
        self.trace.truncate(n);
        self.psi.truncate(n);
        self.psi_dot.truncate(n);
        self.phi.truncate(n);
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// Result of one level solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSolution {
    pub theta: f64,
    pub trace: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Condition {
    Dirichlet,
    Robin { alpha1: f64, alpha2: f64 },
}

/// Volterra solver for one substrate.
#[derive(Clone)]
pub struct SubstrateSolver {
    pub family: Arc<dyn KernelFamily>,
    pub mode: RepresentationMode,
    pub init: InitialData,
    pub hist: SubstrateHistory,
    psi: SharedSignal,
    condition: Condition,
}

impl std::fmt::Debug for SubstrateSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubstrateSolver")
            .field("mode", &self.mode)
            .field("condition", &self.condition)
            .field("levels", &self.hist.len())
            .finish()
    }
}

pub(crate) fn inv_sqrt_4pi_d(d: f64) -> f64 {
    1.0 / (4.0 * PI * d).sqrt()
}

impl SubstrateSolver {
    /// A Robin boundary with `h = 0` becomes the Dirichlet condition
    /// `C = ψ/k`.
    pub fn new(
        family: Arc<dyn KernelFamily>,
        mode: RepresentationMode,
        boundary: &BoundarySpec,
        init: InitialData,
    ) -> Result<Self> {
        let (psi, condition) = match boundary.kind {
            BoundaryKind::DirichletNeumann => (boundary.psi.clone(), Condition::Dirichlet),
            BoundaryKind::NeumannRobin { h, k, .. } => {
                if !(k > 0.0) {
                    return Err(Error::NonPhysicalRobin { k });
                }
                if !(h >= 0.0) {
                    return Err(Error::validation("boundary.h", "must be non-negative"));
                }
                if h == 0.0 {
                    let scaled: SharedSignal = Arc::new(Scaled { inner: boundary.psi.clone(), factor: k });
                    (scaled, Condition::Dirichlet)
                } else {
                    let d = family.diffusivity(init.top());
                    let (alpha1, alpha2) = boundary.alphas(d).expect("h > 0");
                    (boundary.psi.clone(), Condition::Robin { alpha1, alpha2 })
                }
            }
        };
        Ok(Self { family, mode, init, hist: SubstrateHistory::default(), psi, condition })
    }

    /// Drop stored levels from `levels` on.
    pub fn truncate_history(&mut self, levels: usize) {
        self.hist.truncate(levels.max(1));
    }

    pub fn is_robin(&self) -> bool {
        matches!(self.condition, Condition::Robin { .. })
    }

    fn psi_at(&self, t: f64) -> (f64, f64) {
        let v = self.psi.value(t);
        let d = self.psi.derivative(t).unwrap_or_else(|| {
            let h = 1e-6 * t.abs().max(1.0);
            (self.psi.value(t + h) - self.psi.value(t - h)) / (2.0 * h)
        });
        (v, d)
    }

    /// Install level 0 from the initial data.
    pub fn start(&mut self, geom: &Geometry, f0: Vec<f64>) {
        let lv = &geom.levels[0];
        let (psi, psi_dot) = self.psi_at(lv.t);
        let theta0 = *self.init.slope.last().expect("non-empty");
        let phi_top = *self.init.value.last().expect("non-empty");
        let trace = match self.condition {
            Condition::Dirichlet => psi,
            Condition::Robin { .. } => phi_top,
        };
        let theta = match self.condition {
            Condition::Dirichlet => theta0,
            Condition::Robin { alpha1, alpha2 } => alpha1 * psi - alpha2 * trace,
        };
        let phi = match self.mode {
            RepresentationMode::ImageCorrected => self.init.value[0],
            RepresentationMode::PaperLiteral => 0.0,
        };
        self.hist = SubstrateHistory {
            f: vec![f0],
            theta: vec![theta],
            trace: vec![trace],
            psi: vec![psi],
            psi_dot: vec![psi_dot],
            phi: vec![phi],
        };
    }

    /// Solve the boundary densities at the last geometry level with the
    /// sources `f_n` at that level's positions. Re-solving the same level
    /// overwrites it.
    pub fn advance(&mut self, geom: &Geometry, f_n: Vec<f64>) -> Result<LevelSolution> {
        let n = geom.levels.len() - 1;
        if n == 0 || self.hist.len() < n {
            return Err(Error::HistoryGap(format!(
                "level {n} requested with {} stored levels",
                self.hist.len()
            )));
        }
        if f_n.len() != geom.levels[n].xs.len() {
            return Err(Error::HistoryGap("source sample count does not match positions".into()));
        }
        self.hist.truncate(n);
        let (psi, psi_dot) = self.psi_at(geom.levels[n].t);
        self.hist.f.push(f_n);
        self.hist.psi.push(psi);
        self.hist.psi_dot.push(psi_dot);
        let (theta, trace) = match self.condition {
            Condition::Dirichlet => {
                let theta = match self.mode {
                    RepresentationMode::ImageCorrected => self.solve_theta_step(geom)?,
                    RepresentationMode::PaperLiteral => self.solve_theta_literal(geom)?,
                };
                (theta, psi)
            }
            Condition::Robin { alpha1, alpha2 } => {
                let rho = self.solve_robin_step(geom, alpha1, alpha2)?;
                (alpha1 * psi - alpha2 * rho, rho)
            }
        };
        self.hist.theta.push(theta);
        self.hist.trace.push(trace);
        self.hist.phi.push(0.0);
        let phi = self.eval_phi(geom)?;
        *self.hist.phi.last_mut().expect("pushed") = phi;
        Ok(LevelSolution { theta, trace, phi })
    }

    /// Substratum trace `Φ(t_n)` at the last level.
    pub fn eval_phi(&self, geom: &Geometry) -> Result<f64> {
        match self.mode {
            RepresentationMode::ImageCorrected => self.representation_at(geom, 0.0),
            RepresentationMode::PaperLiteral => self.literal_phi(geom),
        }
    }

    /// Profile at positions `zs` (each in `[0, L(t_n)]`) at the last level.
    pub fn eval_substrate_profile(&self, geom: &Geometry, zs: &[f64]) -> Result<Vec<f64>> {
        let n = geom.levels.len() - 1;
        if self.hist.len() != n + 1 {
            return Err(Error::HistoryGap(format!("profile at level {n} with {} levels", self.hist.len())));
        }
        if n == 0 {
            return Ok(zs
                .iter()
                .map(|&z| crate::biomass::interpolate(&self.init.xs, &self.init.value, z))
                .collect());
        }
        let l = geom.levels[n].l;
        zs.iter()
            .map(|&z| if z >= l { Ok(self.hist.trace[n]) } else { self.representation_at(geom, z) })
            .collect()
    }

    /// `|C(L(t), t) − b(t)|` with `C(L)` reconstructed from the
    /// representation (jump term included) and `b` the imposed trace.
    pub fn boundary_residual(&self, geom: &Geometry) -> Result<f64> {
        let n = geom.levels.len() - 1;
        if n == 0 {
            return Ok(0.0);
        }
        let rep = self.boundary_representation(geom)?;
        let b = self.hist.trace[n];
        let c = rep.known + rep.c_theta * self.hist.theta[n] + (rep.c_trace + 0.5) * b;
        Ok((c - b).abs())
    }

    /// Replace the initial data by the profile `(xs, ys)` at the last level
    /// and drop all earlier history. The caller resets the geometry to the
    /// same single level.
    pub fn rebaseline(&mut self, t_base: f64, xs: &[f64], ys: &[f64], refine: usize) -> Result<()> {
        let n = self.hist.len() - 1;
        let theta = self.hist.theta[n];
        let init = InitialData::from_profile(t_base, xs, ys, theta, refine)?;
        let keep = |v: &Vec<f64>| vec![v[n]];
        self.hist = SubstrateHistory {
            f: vec![self.hist.f[n].clone()],
            theta: keep(&self.hist.theta),
            trace: keep(&self.hist.trace),
            psi: keep(&self.hist.psi),
            psi_dot: keep(&self.hist.psi_dot),
            phi: keep(&self.hist.phi),
        };
        self.init = init;
        Ok(())
    }
}

/// One-sided second-order estimate of `|C_z(0)|` from the three nodes
/// nearest the substratum.
pub fn verify_flux_zero(zs: &[f64], cs: &[f64]) -> f64 {
    if zs.len() < 3 {
        return 0.0;
    }
    let (x0, x1, x2) = (zs[0], zs[1], zs[2]);
    let (h1, h2) = (x1 - x0, x2 - x0);
    // derivative at x0 of the quadratic through the three points
    let d = -(h1 + h2) / (h1 * h2) * cs[0] + h2 / (h1 * (h2 - h1)) * cs[1] - h1 / (h2 * (h2 - h1)) * cs[2];
    d.abs()
}
