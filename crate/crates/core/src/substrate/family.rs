//! Free-space kernels used by the boundary-integral solver. The solver
//! only needs the kernel, its two first derivatives and integrals against
//! piecewise-linear densities; the half-line images are assembled here.

use std::sync::OnceLock;

use crate::kernels::{heat, heat_dx, heat_dxi_segment_linear, heat_segment_linear, ImageKind};
use crate::rules::Rule;

/// Number of diffusion lengths beyond which a Gaussian contribution is
/// below double precision.
pub const REACH: f64 = 12.0;

/// A free-space fundamental solution `Γ(z, ξ; s)` with `s = t − τ`.
pub trait KernelFamily: Send + Sync {
    /// Diffusivity seen by boundary terms at `z`.
    fn diffusivity(&self, z: f64) -> f64;
    /// Largest diffusivity over the domain (sets the support width).
    fn max_diffusivity(&self) -> f64;
    fn value(&self, z: f64, xi: f64, s: f64) -> f64;
    fn d_z(&self, z: f64, xi: f64, s: f64) -> f64;
    fn d_xi(&self, z: f64, xi: f64, s: f64) -> f64;

    /// `∫_a^b Γ(z, ξ; s) f(ξ) dξ` for `f` linear between `fa` and `fb`.
    fn segment(&self, z: f64, a: f64, b: f64, fa: f64, fb: f64, s: f64) -> f64 {
        composite_segment(self.max_diffusivity(), z, a, b, fa, fb, s, |x| self.value(z, x, s))
    }

    /// `∫_a^b ∂_ξΓ(z, ξ; s) f(ξ) dξ` for linear `f`.
    fn segment_dxi(&self, z: f64, a: f64, b: f64, fa: f64, fb: f64, s: f64) -> f64 {
        composite_segment(self.max_diffusivity(), z, a, b, fa, fb, s, |x| self.d_xi(z, x, s))
    }

    /// Distance from `z` beyond which the kernel is negligible.
    fn reach(&self, s: f64) -> f64 {
        REACH * (self.max_diffusivity() * s).sqrt()
    }
}

fn gl6() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| Rule::gauss_legendre(6))
}

#[allow(clippy::too_many_arguments)]
fn composite_segment(
    d: f64,
    z: f64,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    s: f64,
    kernel: impl Fn(f64) -> f64,
) -> f64 {
    let width = (d * s).sqrt();
    let reach = REACH * width;
    let lo = a.max(z - reach);
    let hi = b.min(z + reach);
    if lo >= hi {
        return 0.0;
    }
    let pieces = (((hi - lo) / width).ceil() as usize).clamp(1, 96);
    let step = (hi - lo) / pieces as f64;
    let slope = (fb - fa) / (b - a);
    let rule = gl6();
    (0..pieces)
        .map(|p| {
            let pa = lo + p as f64 * step;
            rule.integrate(pa, pa + step, |x| kernel(x) * (fa + slope * (x - a)))
        })
        .sum()
}

/// Constant-coefficient heat kernel with diffusivity `D`:
/// `K_D(x; s) = K(x; D s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatFamily {
    pub d: f64,
}

impl KernelFamily for HeatFamily {
    fn diffusivity(&self, _z: f64) -> f64 {
        self.d
    }
    fn max_diffusivity(&self) -> f64 {
        self.d
    }
    #[inline]
    fn value(&self, z: f64, xi: f64, s: f64) -> f64 {
        heat(z - xi, self.d * s)
    }
    #[inline]
    fn d_z(&self, z: f64, xi: f64, s: f64) -> f64 {
        heat_dx(z - xi, self.d * s)
    }
    #[inline]
    fn d_xi(&self, z: f64, xi: f64, s: f64) -> f64 {
        -heat_dx(z - xi, self.d * s)
    }
    fn segment(&self, z: f64, a: f64, b: f64, fa: f64, fb: f64, s: f64) -> f64 {
        heat_segment_linear(z, a, b, fa, fb, self.d * s)
    }
    fn segment_dxi(&self, z: f64, a: f64, b: f64, fa: f64, fb: f64, s: f64) -> f64 {
        heat_dxi_segment_linear(z, a, b, fa, fb, self.d * s)
    }
}

#[inline]
fn sign(kind: ImageKind) -> f64 {
    match kind {
        ImageKind::Dirichlet => -1.0,
        ImageKind::Neumann => 1.0,
    }
}

/// `Γ(z, ξ) ± Γ(−z, ξ)`.
#[inline]
pub fn image(fam: &dyn KernelFamily, kind: ImageKind, z: f64, xi: f64, s: f64) -> f64 {
    fam.value(z, xi, s) + sign(kind) * fam.value(-z, xi, s)
}

/// `∂_z [Γ(z, ξ) ± Γ(−z, ξ)]`.
#[inline]
pub fn image_dz(fam: &dyn KernelFamily, kind: ImageKind, z: f64, xi: f64, s: f64) -> f64 {
    fam.d_z(z, xi, s) - sign(kind) * fam.d_z(-z, xi, s)
}

/// `∂_ξ [Γ(z, ξ) ± Γ(−z, ξ)]`.
#[inline]
pub fn image_dxi(fam: &dyn KernelFamily, kind: ImageKind, z: f64, xi: f64, s: f64) -> f64 {
    fam.d_xi(z, xi, s) + sign(kind) * fam.d_xi(-z, xi, s)
}

fn near(fam: &dyn KernelFamily, z: f64, a: f64, b: f64, s: f64) -> bool {
    let r = fam.reach(s);
    a < z + r && b > z - r
}

/// `∫ (Γ(z, ξ) ± Γ(−z, ξ)) f dξ` over a piecewise-linear density given by
/// samples `(xs, fs)`.
pub fn image_integral(fam: &dyn KernelFamily, kind: ImageKind, z: f64, xs: &[f64], fs: &[f64], s: f64) -> f64 {
    let sg = sign(kind);
    let mut acc = 0.0;
    for k in 0..xs.len().saturating_sub(1) {
        let (a, b) = (xs[k], xs[k + 1]);
        if b <= a {
            continue;
        }
        if near(fam, z, a, b, s) {
            acc += fam.segment(z, a, b, fs[k], fs[k + 1], s);
        }
        if near(fam, -z, a, b, s) {
            acc += sg * fam.segment(-z, a, b, fs[k], fs[k + 1], s);
        }
    }
    acc
}

/// Like [`image_integral`] for nodal samples of a smooth density. Linear
/// interpolation misses `−h³ f''/12` per segment; that term is added back
/// with a midpoint rule whenever the kernel is wide compared with `h`.
pub fn image_integral_smooth(
    fam: &dyn KernelFamily,
    kind: ImageKind,
    z: f64,
    xs: &[f64],
    fs: &[f64],
    s: f64,
) -> f64 {
    let base = image_integral(fam, kind, z, xs, fs, s);
    let n = xs.len();
    if n < 3 {
        return base;
    }
    let width = (fam.max_diffusivity() * s).sqrt();
    let curv = nodal_curvature(xs, fs);
    let sg = sign(kind);
    let mut acc = 0.0;
    for k in 0..n - 1 {
        let (a, b) = (xs[k], xs[k + 1]);
        let h = b - a;
        if h <= 0.0 || h > 0.25 * width {
            continue;
        }
        let mid = 0.5 * (a + b);
        let c = 0.5 * (curv[k] + curv[k + 1]);
        let mut kern = 0.0;
        if near(fam, z, a, b, s) {
            kern += fam.value(z, mid, s);
        }
        if near(fam, -z, a, b, s) {
            kern += sg * fam.value(-z, mid, s);
        }
        acc -= c * h * h * h / 12.0 * kern;
    }
    base + acc
}

/// Second derivative at the nodes from three-point differences; the end
/// nodes copy their neighbour.
fn nodal_curvature(xs: &[f64], fs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![0.0; n];
    for k in 1..n - 1 {
        let (h0, h1) = (xs[k] - xs[k - 1], xs[k + 1] - xs[k]);
        if h0 > 0.0 && h1 > 0.0 {
            c[k] = 2.0 * ((fs[k + 1] - fs[k]) / h1 - (fs[k] - fs[k - 1]) / h0) / (h0 + h1);
        }
    }
    c[0] = c[1];
    c[n - 1] = c[n - 2];
    c
}

/// `∫ ∂_ξ(Γ(z, ξ) ± Γ(−z, ξ)) f dξ` over a piecewise-linear density.
pub fn image_dxi_integral(
    fam: &dyn KernelFamily,
    kind: ImageKind,
    z: f64,
    xs: &[f64],
    fs: &[f64],
    s: f64,
) -> f64 {
    let sg = sign(kind);
    let mut acc = 0.0;
    for k in 0..xs.len().saturating_sub(1) {
        let (a, b) = (xs[k], xs[k + 1]);
        if b <= a {
            continue;
        }
        if near(fam, z, a, b, s) {
            acc += fam.segment_dxi(z, a, b, fs[k], fs[k + 1], s);
        }
        if near(fam, -z, a, b, s) {
            acc += sg * fam.segment_dxi(-z, a, b, fs[k], fs[k + 1], s);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Forces the generic quadrature path on the heat kernel.
    struct Generic(HeatFamily);

    impl KernelFamily for Generic {
        fn diffusivity(&self, z: f64) -> f64 {
            self.0.diffusivity(z)
        }
        fn max_diffusivity(&self) -> f64 {
            self.0.d
        }
        fn value(&self, z: f64, xi: f64, s: f64) -> f64 {
            self.0.value(z, xi, s)
        }
        fn d_z(&self, z: f64, xi: f64, s: f64) -> f64 {
            self.0.d_z(z, xi, s)
        }
        fn d_xi(&self, z: f64, xi: f64, s: f64) -> f64 {
            self.0.d_xi(z, xi, s)
        }
    }

    #[test]
    fn generic_segments_match_closed_forms() {
        let h = HeatFamily { d: 0.7 };
        let g = Generic(h);
        for &s in &[1e-5, 1e-3, 0.1, 3.0] {
            for &z in &[0.0, 0.31, 0.5, 0.9] {
                let exact = h.segment(z, 0.2, 0.6, 1.0, -2.0, s);
                let approx = g.segment(z, 0.2, 0.6, 1.0, -2.0, s);
                assert!((exact - approx).abs() < 1e-10, "s={s} z={z}: {exact} vs {approx}");
                let exact = h.segment_dxi(z, 0.2, 0.6, 1.0, -2.0, s);
                let approx = g.segment_dxi(z, 0.2, 0.6, 1.0, -2.0, s);
                assert!((exact - approx).abs() < 1e-8 * (1.0 + exact.abs()), "s={s} z={z}");
            }
        }
    }

    #[test]
    fn image_identities() {
        let h = HeatFamily { d: 2.0 };
        assert_eq!(image(&h, ImageKind::Dirichlet, 0.0, 0.4, 0.3), 0.0);
        assert_eq!(image_dz(&h, ImageKind::Neumann, 0.0, 0.4, 0.3), 0.0);
        assert_eq!(image_dxi(&h, ImageKind::Dirichlet, 0.0, 0.4, 0.3), 0.0);
        // constant density on the half line: Neumann mass is 1 for z in the interior
        let xs: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let fs = vec![1.0; xs.len()];
        let m = image_integral(&h, ImageKind::Neumann, 0.3, &xs, &fs, 0.01);
        assert!((m - 1.0).abs() < 1e-14);
    }
}
