use std::f64::consts::PI;

use super::*;
use crate::kernels::eval_k;

fn linear_field() -> DiffusivityField {
    DiffusivityField::Profile(ProfileField::new(|z| 1.0 + 0.1 * z))
}

fn cfg(order: usize) -> ParametrixConfig {
    ParametrixConfig { series_order: order, space_quad_nodes: 12, time_quad_nodes: 12 }
}

#[test]
fn parametrix_closed_forms() {
    let one = DiffusivityField::Constant { d: 1.0 };
    let p = KernelPoint::new(0.3, 0.7, 0.1, 0.2);
    assert_eq!(eval_z(p, &one).unwrap(), eval_k(p).unwrap());
    let two = DiffusivityField::Constant { d: 2.0 };
    let v = eval_z(KernelPoint::new(0.0, 1.0, 0.0, 0.0), &two).unwrap();
    assert!((v - 1.0 / (8.0 * PI).sqrt()).abs() < 1e-15);
    assert!((v - 0.1994711).abs() < 1e-7);
    let porous = DiffusivityField::Porous { d0: 1.7, porosity: PiecewisePoly::constant(1.0) };
    assert_eq!(porous.a(0.4), 1.7);
    assert!(matches!(
        eval_z(KernelPoint::new(0.0, 1.0, 0.0, 1.0), &two),
        Err(Error::DegenerateTime { .. })
    ));
    let bad = DiffusivityField::Constant { d: 0.0 };
    assert!(matches!(eval_z(KernelPoint::new(0.0, 1.0, 0.0, 0.0), &bad), Err(Error::NonParabolic { .. })));
}

#[test]
fn porous_derivative_matches_differences() {
    let f = DiffusivityField::Porous { d0: 1.0, porosity: PiecewisePoly::linear(0.0, 1.0, 0.3, 0.8) };
    for &z in &[0.1, 0.5, 0.9] {
        let h = 1e-6;
        let fd = (f.a(z + h) - f.a(z - h)) / (2.0 * h);
        assert!((f.b(z) - fd).abs() < 1e-8);
        assert_eq!(f.b(-z), -f.b(z));
        assert_eq!(f.a(-z), f.a(z));
    }
}

#[test]
fn config_guards() {
    assert!(ParametrixConfig { series_order: 5, ..cfg(0) }.validate().is_err());
    assert!(ParametrixConfig { space_quad_nodes: 7, ..cfg(0) }.validate().is_err());
    assert!(cfg(4).validate().is_ok());
}

#[test]
fn constant_field_reduces_to_scaled_heat_kernel() {
    for order in [0, 2] {
        let (g, report) = build_gamma(DiffusivityField::Constant { d: 1.3 }, cfg(order)).unwrap();
        assert!(report.term_sups.iter().all(|&t| t == 0.0));
        for i in 0..10 {
            for j in 0..10 {
                for k in 1..=10 {
                    let (z, xi, s) = (0.1 * i as f64, 0.1 * j as f64, 0.05 * k as f64);
                    let x = z - xi;
                    let oracle = (-x * x / (4.0 * 1.3 * s)).exp() / (4.0 * PI * 1.3 * s).sqrt();
                    assert!((g.value(z, xi, s) - oracle).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn reflected_kernel() {
    let (g, _) = build_gamma(DiffusivityField::Constant { d: 2.0 }, cfg(2)).unwrap();
    let h = eval_h_vardiff(&g, KernelPoint::new(1.0, 1.0, 0.5, 0.0)).unwrap();
    let oracle = ((-0.25f64 / 8.0).exp() - (-2.25f64 / 8.0).exp()) / (8.0 * PI).sqrt();
    assert!((h - oracle).abs() < 1e-14);
    let (g, _) = build_gamma(linear_field(), cfg(1)).unwrap();
    assert_eq!(eval_h_vardiff(&g, KernelPoint::new(0.0, 0.3, 0.4, 0.0)).unwrap(), 0.0);
}

#[test]
fn series_terms_decrease() {
    let (_, report) = build_gamma(linear_field(), cfg(3)).unwrap();
    let t = &report.term_sups;
    assert_eq!(t.len(), 3);
    assert!(t[0] > 0.0 && t[1] < t[0] && t[2] < t[1], "{t:?}");
}

#[test]
fn residual_decreases_with_order() {
    let (g, _) = build_gamma(linear_field(), cfg(2)).unwrap();
    let lattice = [(0.4, 0.5, 0.02), (0.55, 0.5, 0.02), (0.5, 0.5, 0.05), (0.62, 0.5, 0.05)];
    let sup = |order: usize| {
        let g = g.with_order(order);
        lattice.iter().map(|&(z, xi, s)| g.residual(z, xi, s, 1e-3)).fold(0.0, f64::max)
    };
    let r: Vec<f64> = (0..=2).map(sup).collect();
    assert!(r[1] < r[0] && r[2] < r[1], "{r:?}");
}

#[test]
fn growth_exponents() {
    let lags = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2];
    let (g, _) = build_gamma(linear_field(), cfg(1)).unwrap();
    let b = g.bound_slopes(0.5, &lags);
    assert!((b.value + 0.5).abs() < 0.1, "{b:?}");
    assert!((b.dz + 1.0).abs() < 0.1, "{b:?}");
    assert!((b.dt + 1.5).abs() < 0.1, "{b:?}");
}

#[test]
fn family_matches_direct_evaluation() {
    let (g, _) = build_gamma(linear_field(), cfg(1)).unwrap();
    let fam = GammaFamily::new(g.clone(), 1.0, 0.1).unwrap();
    for &(z, xi, s) in &[(0.5, 0.5, 0.01), (0.3, 0.35, 0.05), (0.9, 0.7, 0.08), (-0.1, 0.05, 0.02)] {
        let direct = g.value(z, xi, s);
        let tab = fam.value(z, xi, s);
        assert!((direct - tab).abs() < 2e-3 * direct.abs().max(1.0), "{z} {xi} {s}: {direct} vs {tab}");
    }
    let h = 1e-5;
    let (z, xi, s) = (0.55, 0.5, 0.03);
    let fd = (fam.value(z + h, xi, s) - fam.value(z - h, xi, s)) / (2.0 * h);
    assert!((fam.d_z(z, xi, s) - fd).abs() < 1e-4 * fd.abs().max(1.0));
    let fd = (fam.value(z, xi + h, s) - fam.value(z, xi - h, s)) / (2.0 * h);
    assert!((fam.d_xi(z, xi, s) - fd).abs() < 1e-2 * fd.abs().max(1.0));
}

#[test]
fn constant_family_is_the_heat_family() {
    use crate::substrate::HeatFamily;
    let (g, _) = build_gamma(DiffusivityField::Constant { d: 0.8 }, cfg(2)).unwrap();
    let fam = GammaFamily::new(g, 1.0, 1.0).unwrap();
    let heat = HeatFamily { d: 0.8 };
    for &(z, xi, s) in &[(0.5, 0.4, 0.01), (1.0, 1.0, 0.3)] {
        assert!((fam.value(z, xi, s) - heat.value(z, xi, s)).abs() < 1e-14);
        assert!((fam.d_z(z, xi, s) - heat.d_z(z, xi, s)).abs() < 1e-13);
        assert!((fam.d_xi(z, xi, s) - heat.d_xi(z, xi, s)).abs() < 1e-13);
    }
}
