//! One-level updates of the second-kind Volterra equations for the
//! boundary densities.
//!
//! Every history sum is a product-integration sum: the integrand `g` is
//! written as `κ(τ) (t − τ)^(−1/2)` with `κ = √(t − τ) g`, `κ` is taken
//! linear between levels, and the value of `κ` at `τ = t` is the analytic
//! limit of the kernel.

use crate::error::{Error, Result};
use crate::kernels::ImageKind;

use super::family::{image, image_dxi, image_dxi_integral, image_dz};
use super::quadrature::quad_weights_singular;
use super::{inv_sqrt_4pi_d, Geometry, SubstrateSolver};

const DEGENERATE: f64 = 1e-12;

fn check_coefficient(c: f64) -> Result<f64> {
    if c.abs() < DEGENERATE || !c.is_finite() {
        Err(Error::DiagonalDegeneracy { coefficient: c })
    } else {
        Ok(c)
    }
}

impl SubstrateSolver {
    /// Flux `θ(t_n)` from the image-corrected equation
    /// `θ = 2∫φ'G + 2∫Gψ̇ − 2D∫θG_ξ − 2∬G_ξF`.
    pub(crate) fn solve_theta_step(&self, geom: &Geometry) -> Result<f64> {
        let fam = self.family.as_ref();
        let n = geom.levels.len() - 1;
        let lv = &geom.levels[n];
        let (t, l) = (lv.t, lv.l);
        let w = quad_weights_singular(&geom.times());
        let dl = fam.diffusivity(l);
        let k0 = inv_sqrt_4pi_d(dl);
        let g = ImageKind::Dirichlet;

        let initial = super::family::image_integral_smooth(
            fam,
            g,
            l,
            &self.init.xs,
            &self.init.slope,
            t - self.init.t0,
        );
        let mut psi_sum = 0.0;
        let mut theta_sum = 0.0;
        let mut vol_sum = 0.0;
        for k in 0..n {
            let lk = &geom.levels[k];
            let s = t - lk.t;
            let rs = s.sqrt();
            let dk = fam.diffusivity(lk.l);
            psi_sum += w[k] * rs * image(fam, g, l, lk.l, s) * self.hist.psi_dot[k];
            theta_sum += w[k] * rs * dk * image_dxi(fam, g, l, lk.l, s) * self.hist.theta[k];
            vol_sum += w[k] * rs * image_dxi_integral(fam, g, l, &lk.xs, &self.hist.f[k], s);
        }
        psi_sum += w[n] * k0 * self.hist.psi_dot[n];
        let f_l = *self.hist.f[n].last().expect("non-empty sources");
        vol_sum += w[n] * k0 * f_l;
        // limit of √s · D G_ξ(L(t); L(τ)) as τ → t
        let diag = 0.5 * lv.ldot * k0;
        let coef = check_coefficient(1.0 + 2.0 * w[n] * diag)?;
        Ok((2.0 * initial + 2.0 * psi_sum - 2.0 * theta_sum - 2.0 * vol_sum) / coef)
    }

    /// Literal flux equation: Neumann kernel on data and
    /// sources, `G_z` on the flux, the `U` term, `Φ ≡ 0`, no
    /// moving-boundary term.
    pub(crate) fn solve_theta_literal(&self, geom: &Geometry) -> Result<f64> {
        let fam = self.family.as_ref();
        let n = geom.levels.len() - 1;
        let lv = &geom.levels[n];
        let (t, l) = (lv.t, lv.l);
        let w = quad_weights_singular(&geom.times());
        let dl = fam.diffusivity(l);
        let k0 = inv_sqrt_4pi_d(dl);
        let nk = ImageKind::Neumann;
        let g = ImageKind::Dirichlet;
        let base = &geom.levels[0];
        let s0 = t - base.t;

        let u = 2.0 * image(fam, nk, l, 0.0, s0) * self.init.value[0]
            - 2.0 * self.hist.psi[0] * image(fam, nk, l, base.l, s0);
        let initial = super::family::image_integral_smooth(fam, nk, l, &self.init.xs, &self.init.slope, s0);
        let mut psi_sum = 0.0;
        let mut theta_sum = 0.0;
        let mut src_sum = 0.0;
        for k in 0..n {
            let lk = &geom.levels[k];
            let s = t - lk.t;
            let rs = s.sqrt();
            let dk = fam.diffusivity(lk.l);
            let n_top = image(fam, nk, l, lk.l, s);
            psi_sum += w[k] * rs * n_top * self.hist.psi_dot[k];
            theta_sum += w[k] * rs * dk * image_dz(fam, g, l, lk.l, s) * self.hist.theta[k];
            let f = &self.hist.f[k];
            let (f0, fl) = (f[0], *f.last().expect("non-empty"));
            src_sum += w[k] * rs * (-n_top * fl + image(fam, nk, l, 0.0, s) * f0);
        }
        psi_sum += w[n] * k0 * self.hist.psi_dot[n];
        src_sum += -w[n] * k0 * self.hist.f[n].last().expect("non-empty");
        // limit of √s · D G_z(L(t); L(τ)) as τ → t
        let diag = -0.5 * lv.ldot * k0;
        let coef = check_coefficient(1.0 - 2.0 * w[n] * diag)?;
        Ok((u + 2.0 * initial + 2.0 * psi_sum + 2.0 * theta_sum + 2.0 * src_sum) / coef)
    }

    /// Literal substratum trace: `−∫ G_ξ(0, t; L(τ), τ) ψ dτ`.
    pub(crate) fn literal_phi(&self, geom: &Geometry) -> Result<f64> {
        let fam = self.family.as_ref();
        let n = geom.levels.len() - 1;
        let t = geom.levels[n].t;
        let w = quad_weights_singular(&geom.times());
        let mut acc = 0.0;
        for k in 0..n {
            let lk = &geom.levels[k];
            let s = t - lk.t;
            acc -= w[k] * s.sqrt() * image_dxi(fam, ImageKind::Dirichlet, 0.0, lk.l, s) * self.hist.psi[k];
        }
        Ok(acc)
    }

    /// Robin trace `ρ(t_n)` from `½ρ = (representation at z = L)` with the
    /// flux `α1ψ − α2ρ` in the single layer.
    pub(crate) fn solve_robin_step(&self, geom: &Geometry, alpha1: f64, alpha2: f64) -> Result<f64> {
        let rep = self.boundary_representation(geom)?;
        let n = geom.levels.len() - 1;
        let psi = self.hist.psi[n];
        // ρ = ½ρ + known + c_θ (α1ψ − α2ρ) + c_b ρ
        let coef = check_coefficient(0.5 + rep.c_theta * alpha2 - rep.c_trace)?;
        Ok((rep.known + rep.c_theta * alpha1 * psi) / coef)
    }
}
