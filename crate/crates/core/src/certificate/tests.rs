use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::driver::SubstrateSetup;
use crate::free_boundary::SigmaMode;
use crate::kinetics::{KineticsSpec, MonodSpecies};
use crate::signal::{FnSignal, SharedSignal};
use crate::substrate::{BoundarySpec, HeatFamily, RepresentationMode};

fn inputs() -> CertificateInputs {
    CertificateInputs {
        l0: 1.0,
        dt: 1e-3,
        phi_at_zero: 0.3,
        phi_sup: 0.3,
        phi_prime_sup: 0.0,
        psi_at_zero: 0.2,
        psi_dot_sup: 0.0,
        lipschitz: 0.1,
        velocity_source: 0.1,
    }
}

fn signal(v: impl Fn(f64) -> f64 + Send + Sync + 'static, d: impl Fn(f64) -> f64 + Send + Sync + 'static) -> SharedSignal {
    Arc::new(FnSignal::new(v, d))
}

fn problem(initial: SharedSignal, psi: SharedSignal) -> Problem {
    let sp = MonodSpecies { mu_max: 0.1, k_s: vec![0.5], decay: 0.0, substrates: vec![0], yields: vec![0.5] };
    Problem {
        kinetics: KineticsSpec::monod(vec![1.0], 1, vec![sp]).unwrap(),
        l0: 1.0,
        intervals: 16,
        species: vec![signal(|_| 1.0, |_| 0.0)],
        substrates: vec![SubstrateSetup {
            family: Arc::new(HeatFamily { d: 1.0 }),
            boundary: BoundarySpec::dirichlet(psi),
            initial,
        }],
        sigma: SigmaMode::None,
        mode: RepresentationMode::ImageCorrected,
    }
}

#[test]
fn constant_formulas() {
    let r = evaluate(&inputs(), 0.25);
    assert_eq!(r.m1, 0.5);
    assert_eq!(r.m3, r.m4);
    assert!((r.m5 - 2.0 * 0.1 * 0.5 / PI.sqrt()).abs() < 1e-15);
    assert!((r.m6 - 0.2 * (0.25 / E).sqrt()).abs() < 1e-15);
    let sum = r.m1 + r.m2 + r.m3 + r.m4 + r.m5 + r.m6;
    assert!((r.k1 - sum).abs() < 1e-14);
    assert!((r.k2 - r.k2_terms.iter().sum::<f64>()).abs() < 1e-14);
    assert_eq!(r.m, 1.3);
}

#[test]
fn boundary_window_limits_lambda() {
    let i = CertificateInputs { phi_sup: 0.0, phi_at_zero: 0.0, psi_at_zero: 0.0, lipschitz: 0.0, velocity_source: 0.0, ..inputs() };
    assert_eq!(i.iterate_bound(), 1.0);
    assert!(evaluate(&i, 0.5).flags.boundary_window);
    assert!(!evaluate(&i, 0.5001).flags.boundary_window);
    let r = certify(&i).unwrap();
    assert!(r.lambda <= 0.5);
}

#[test]
fn steep_initial_data_is_uncertified() {
    let i = CertificateInputs { phi_prime_sup: 2.0, ..inputs() };
    let r = certify(&i).unwrap();
    assert_eq!(r.m2, 2.0);
    assert!(r.k1 > 1.0);
    assert_eq!(r.verdict, Verdict::Uncertified(Condition::SelfMap));
    assert_eq!(r.lambda, LAMBDA_FLOOR);
}

#[test]
fn small_data_is_certified_and_lambda_is_maximal() {
    let i = CertificateInputs { l0: 0.1, phi_at_zero: 0.05, phi_sup: 0.05, psi_at_zero: 0.05, ..inputs() };
    let r = certify(&i).unwrap();
    assert!(r.certified(), "{r}");
    assert!(r.flags.all());
    assert!(r.lambda < 1.0);
    assert!(!evaluate(&i, r.lambda * (1.0 + 2.0 * LAMBDA_REL_TOL)).flags.all());
}

#[test]
fn verdict_names_first_failure() {
    let r = evaluate(&inputs(), 2.0);
    assert_eq!(r.verdict, Verdict::Uncertified(Condition::WindowAtMostOne));
    assert!(r.to_string().contains("uncertified (lambda <= 1)"));
}

#[test]
fn problem_norms_are_collected() {
    let p = problem(signal(|z| 0.3 + 0.1 * z, |_| 0.1), signal(|t| 0.2 + 0.05 * t, |_| 0.05));
    let r = compute_certificate(&p, 1e-3).unwrap();
    let i = r.inputs;
    assert_eq!(i.phi_at_zero, 0.3);
    assert!((i.phi_sup - 0.4).abs() < 1e-12);
    assert!((i.phi_prime_sup - 0.1).abs() < 1e-12);
    assert!((i.psi_dot_sup - 0.05).abs() < 1e-12);
    assert!((r.m1 - 0.5).abs() < 1e-15);
    // dF/dC = μ X K_S / (Y (K_S + C)^2) is largest at C = 0.
    let oracle = 0.1 / 0.5 / 0.5;
    assert!(i.lipschitz >= oracle && i.lipschitz < 1.2 * oracle, "{}", i.lipschitz);
}

#[test]
fn missing_derivative_is_rejected() {
    let p = problem(Arc::new(FnSignal::without_derivative(|_| 0.3)), signal(|_| 0.2, |_| 0.0));
    assert!(matches!(compute_certificate(&p, 1e-3), Err(Error::DataNotC1(_))));
}

proptest! {
    #[test]
    fn constants_are_monotone(
        lambda in 1e-6f64..1.0,
        k in 0.0f64..5.0,
        phi_prime in 0.0f64..2.0,
        psi_dot in 0.0f64..2.0,
        phi in 0.0f64..2.0,
        bump in 1.0f64..2.0,
    ) {
        let base = CertificateInputs { lipschitz: k, phi_prime_sup: phi_prime, psi_dot_sup: psi_dot, phi_sup: phi, ..inputs() };
        let r0 = evaluate(&base, lambda);
        let bumped = [
            (base, lambda * bump),
            (CertificateInputs { lipschitz: k * bump + 1e-3, ..base }, lambda),
            (CertificateInputs { phi_prime_sup: phi_prime * bump + 1e-3, ..base }, lambda),
            (CertificateInputs { psi_dot_sup: psi_dot * bump + 1e-3, ..base }, lambda),
            (CertificateInputs { phi_sup: phi * bump + 1e-3, ..base }, lambda),
        ];
        for (i, l) in bumped {
            let r = evaluate(&i, l);
            prop_assert!(r.k1 >= r0.k1 - 1e-15);
            prop_assert!(r.k2 >= r0.k2 - 1e-15);
        }
    }
}
