//! Evaluation of the substrate representation at a point.
//!
//! Time integrals over `[τ_k, τ_{k+1}]` use the substitution
//! `v = √(t − τ)`, which removes the `(t − τ)^(−1/2)` endpoint singularity,
//! with Gauss–Legendre panels graded geometrically around the scale
//! `v ≈ d/√(4D)` at which a kernel centred at distance `d` peaks. Densities
//! and `L(τ)` are linear between levels. The source term is exact in space
//! for piecewise-linear `F`; in time it is trapezoidal except over the
//! last few intervals, which use the same `v` substitution.

use std::sync::OnceLock;

use crate::biomass::interpolate;
use crate::error::{Error, Result};
use crate::kernels::ImageKind;
use crate::rules::Rule;

use super::family::{image, image_dxi, image_integral, image_integral_smooth};
use super::{Geometry, RepresentationMode, SubstrateSolver};

/// Representation value split as `known + c_theta θ_n + c_trace b_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Split {
    pub known: f64,
    pub c_theta: f64,
    pub c_trace: f64,
}

fn gl() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| Rule::gauss_legendre(6))
}

fn gl_source() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| Rule::gauss_legendre(4))
}

/// Number of most recent intervals whose source integral is taken in
/// `v = √(t − τ)` rather than by the trapezoid rule. Close to the surface
/// the spatial integral changes on the time scale `d²/D`, which the
/// trapezoid rule only resolves once `t − τ` is many steps.
const SOURCE_WINDOW: usize = 8;

/// Panel edges on `[vb, va]`, doubling outward from `scale/16`.
fn graded_edges(vb: f64, va: f64, scale: f64) -> Vec<f64> {
    let mut edges = vec![vb];
    if scale > 0.0 {
        let mut e = scale / 16.0;
        while e < va {
            if e > vb {
                edges.push(e);
            }
            e *= 2.0;
        }
    }
    edges.push(va);
    edges
}

/// Where the point sits relative to the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Site {
    Interior,
    Boundary,
}

impl SubstrateSolver {
    fn kernel_kind(&self) -> ImageKind {
        match self.mode {
            RepresentationMode::ImageCorrected => ImageKind::Neumann,
            RepresentationMode::PaperLiteral => ImageKind::Dirichlet,
        }
    }

    /// Limit of the source integral as `τ → t`.
    fn source_limit(&self, geom: &Geometry, z: f64, site: Site, kind: ImageKind) -> f64 {
        let lv = geom.last();
        let f_here = interpolate(&lv.xs, self.hist.f.last().expect("non-empty sources"), z);
        match (site, kind) {
            (Site::Boundary, _) => 0.5 * f_here,
            (Site::Interior, ImageKind::Dirichlet) if z == 0.0 => 0.0,
            (Site::Interior, _) => f_here,
        }
    }

    /// Value at an interior point (or `z = 0`) at the last level, using the
    /// stored level-`n` densities.
    pub(crate) fn representation_at(&self, geom: &Geometry, z: f64) -> Result<f64> {
        let n = geom.levels.len() - 1;
        let sp = self.split(geom, z, Site::Interior)?;
        Ok(sp.known + sp.c_theta * self.hist.theta[n] + sp.c_trace * self.hist.trace[n])
    }

    /// Principal value at `z = L(t_n)`; the inside limit adds `½ b_n`.
    pub(crate) fn boundary_representation(&self, geom: &Geometry) -> Result<Split> {
        let l = geom.levels.last().expect("levels").l;
        self.split(geom, l, Site::Boundary)
    }

    fn split(&self, geom: &Geometry, z: f64, site: Site) -> Result<Split> {
        let fam = self.family.as_ref();
        let n = geom.levels.len() - 1;
        if self.hist.f.len() != n + 1 || self.hist.theta.len() < n || self.hist.trace.len() < n {
            return Err(Error::HistoryGap(format!("representation at level {n}")));
        }
        let kind = self.kernel_kind();
        let literal = self.mode == RepresentationMode::PaperLiteral;
        let lv = &geom.levels[n];
        let t = lv.t;

        let mut known = image_integral_smooth(fam, kind, z, &self.init.xs, &self.init.value, t - self.init.t0);
        let mut c_theta = 0.0;
        let mut c_trace = 0.0;

        // boundary layers
        let rule = gl();
        let dmax = fam.max_diffusivity();
        for k in 0..n {
            let (a, b) = (&geom.levels[k], &geom.levels[k + 1]);
            let va = (t - a.t).sqrt();
            let vb = (t - b.t).max(0.0).sqrt();
            let dist = match site {
                Site::Boundary if k + 1 == n => 0.0,
                _ => (a.l - z).abs().min((b.l - z).abs()),
            };
            let edges = graded_edges(vb, va, dist / (4.0 * dmax).sqrt());
            let th = (self.hist.theta[k], self.hist.theta.get(k + 1).copied());
            let tr = (self.hist.trace[k], self.hist.trace.get(k + 1).copied());
            let last = k + 1 == n;
            let span = b.t - a.t;
            for e in edges.windows(2) {
                let (p, q) = (e[0], e[1]);
                let half = 0.5 * (q - p);
                let mid = 0.5 * (q + p);
                for (x, wq) in rule.nodes.iter().zip(&rule.weights) {
                    let v = mid + half * x;
                    let s = v * v;
                    let tau = t - s;
                    let lam = ((tau - a.t) / span).clamp(0.0, 1.0);
                    let l_tau = a.l + lam * (b.l - a.l);
                    let ldot = a.ldot + lam * (b.ldot - a.ldot);
                    let d = fam.diffusivity(l_tau);
                    let weight = wq * half * 2.0 * v;
                    let kn = image(fam, kind, z, l_tau, s);
                    let kx = image_dxi(fam, kind, z, l_tau, s);
                    let a_theta = weight * d * kn;
                    let a_trace = if literal {
                        let jac = a.jac_top + lam * (b.jac_top - a.jac_top);
                        -weight * d * kx * jac
                    } else {
                        weight * (-d * kx + ldot * kn)
                    };
                    known += a_theta * (1.0 - lam) * th.0 + a_trace * (1.0 - lam) * tr.0;
                    if last {
                        c_theta += a_theta * lam;
                        c_trace += a_trace * lam;
                    } else {
                        known += a_theta * lam * th.1.expect("stored") + a_trace * lam * tr.1.expect("stored");
                    }
                }
            }
        }

        // sources
        let recent = n.saturating_sub(SOURCE_WINDOW);
        let integral = |k: usize, s: f64| {
            let f = &self.hist.f[k];
            if f.iter().all(|&v| v == 0.0) {
                return 0.0;
            }
            image_integral(fam, kind, z, &geom.levels[k].xs, f, s)
        };
        for k in 0..recent {
            let (a, b) = (&geom.levels[k], &geom.levels[k + 1]);
            let half = 0.5 * (b.t - a.t);
            known += half * integral(k, t - a.t);
            known += half * if k + 1 < n { integral(k + 1, t - b.t) } else { self.source_limit(geom, z, site, kind) };
        }
        let dist = match site {
            Site::Boundary => 0.0,
            Site::Interior => (lv.l - z).abs(),
        };
        let scale = dist / (4.0 * dmax).sqrt();
        let rule = gl_source();
        for k in recent..n {
            let (a, b) = (&geom.levels[k], &geom.levels[k + 1]);
            let va = (t - a.t).sqrt();
            let vb = (t - b.t).max(0.0).sqrt();
            let span = b.t - a.t;
            for e in graded_edges(vb, va, 4.0 * scale).windows(2) {
                let half = 0.5 * (e[1] - e[0]);
                let mid = 0.5 * (e[1] + e[0]);
                for (x, wq) in rule.nodes.iter().zip(&rule.weights) {
                    let v = mid + half * x;
                    let s = v * v;
                    let lam = ((t - s - a.t) / span).clamp(0.0, 1.0);
                    let blend = (1.0 - lam) * integral(k, s) + lam * integral(k + 1, s);
                    known += wq * half * 2.0 * v * blend;
                }
            }
        }
        Ok(Split { known, c_theta, c_trace })
    }
}
