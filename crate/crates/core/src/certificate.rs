//! Existence and contraction constants of the fixed-point map.
//!
//! The window `λ` and the iterate bound `M` must satisfy
//!
//! * `λ ≤ 1` and `2Mλ ≤ L0` (the boundary stays in `[L0/2, 3L0/2]`),
//! * `K1 = M1 + … + M6 ≤ 1` (the map sends the ball into itself),
//! * `K2 < 1` (the map contracts),
//!
//! with `M = 1 + 2‖φ'‖ + ‖φ‖`. `K2` adds the difference bounds of the seven
//! potentials of the boundary-flux equation, evaluated for unit differences
//! of the iterates. Every constant is nondecreasing in `λ`, so the feasible
//! windows form an interval `(0, λ*]` and `λ*` is found by bisection.

use std::f64::consts::{E, PI};
use std::fmt;

use serde::Serialize;

use crate::driver::Problem;
use crate::error::{Error, Result};
use crate::kinetics::StateBox;
use crate::signal::{sampled_sup, Signal};

/// Samples used for sup-norms of data signals.
const DATA_SAMPLES: usize = 4096;

/// Lattice cells along the shortest state-box edge for the kinetics bounds.
const BOX_CELLS: f64 = 16.0;

/// Cap on lattice cells along the longest edge.
const MAX_BOX_CELLS: f64 = 256.0;

/// Smallest window tried; failing here means failing for every `λ`.
pub const LAMBDA_FLOOR: f64 = 1e-12;

/// Relative width at which the bisection stops.
pub const LAMBDA_REL_TOL: f64 = 1e-3;

/// Problem constants entering the certificate. Norms are maxima over the
/// substrates; `ψ` and its derivative are taken over `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateInputs {
    pub l0: f64,
    /// Time step; the sup of `1/√(t − τ)` over the window is `1/√dt`.
    pub dt: f64,
    pub phi_at_zero: f64,
    pub phi_sup: f64,
    pub phi_prime_sup: f64,
    pub psi_at_zero: f64,
    pub psi_dot_sup: f64,
    /// Lipschitz constant of the kinetics on the state box.
    pub lipschitz: f64,
    /// Sup of `|R|` on the state box.
    pub velocity_source: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Condition {
    WindowAtMostOne,
    BoundaryWindow,
    SelfMap,
    Contraction,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::WindowAtMostOne => "lambda <= 1",
            Condition::BoundaryWindow => "2 M lambda <= L0",
            Condition::SelfMap => "K1 <= 1",
            Condition::Contraction => "K2 < 1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Flags {
    pub lambda_at_most_one: bool,
    pub boundary_window: bool,
    pub k1_at_most_one: bool,
    pub k2_below_one: bool,
}

impl Flags {
    pub fn all(&self) -> bool {
        self.first_failure().is_none()
    }

    pub fn first_failure(&self) -> Option<Condition> {
        [
            (self.lambda_at_most_one, Condition::WindowAtMostOne),
            (self.boundary_window, Condition::BoundaryWindow),
            (self.k1_at_most_one, Condition::SelfMap),
            (self.k2_below_one, Condition::Contraction),
        ]
        .into_iter()
        .find(|(ok, _)| !ok)
        .map(|(_, c)| c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Verdict {
    Certified,
    Uncertified(Condition),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub inputs: CertificateInputs,
    pub m: f64,
    /// Largest certified window, or [`LAMBDA_FLOOR`] when none exists.
    pub lambda: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub m5: f64,
    pub m6: f64,
    pub k1: f64,
    /// The seven difference bounds summed into `k2`.
    pub k2_terms: [f64; 7],
    pub k2: f64,
    /// Bound on the boundary-flux potential with `1/√(t − τ)` replaced by
    /// its sup over `[dt, λ]`; reported, not part of `K1`.
    pub flux_potential_bound: f64,
    pub flags: Flags,
    pub verdict: Verdict,
}

impl CertificateReport {
    pub fn certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }
}

impl fmt::Display for CertificateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = &self.inputs;
        writeln!(f, "[data]")?;
        writeln!(f, "L0 = {:.6e}", i.l0)?;
        writeln!(f, "phi(0) = {:.6e}", i.phi_at_zero)?;
        writeln!(f, "sup|phi| = {:.6e}", i.phi_sup)?;
        writeln!(f, "sup|phi'| = {:.6e}", i.phi_prime_sup)?;
        writeln!(f, "psi(0) = {:.6e}", i.psi_at_zero)?;
        writeln!(f, "sup|psi'| = {:.6e}", i.psi_dot_sup)?;
        writeln!(f, "lipschitz K = {:.6e}", i.lipschitz)?;
        writeln!(f, "sup|R| = {:.6e}", i.velocity_source)?;
        writeln!(f, "[constants]")?;
        writeln!(f, "M = {:.6e}", self.m)?;
        writeln!(f, "lambda = {:.6e}", self.lambda)?;
        for (k, v) in [self.m1, self.m2, self.m3, self.m4, self.m5, self.m6].iter().enumerate() {
            writeln!(f, "M{} = {:.6e}", k + 1, v)?;
        }
        writeln!(f, "K1 = {:.6e}", self.k1)?;
        writeln!(f, "K2 = {:.6e}", self.k2)?;
        writeln!(f, "flux potential bound = {:.6e}", self.flux_potential_bound)?;
        writeln!(f, "[conditions]")?;
        writeln!(f, "lambda <= 1: {}", self.flags.lambda_at_most_one)?;
        writeln!(f, "2 M lambda <= L0: {}", self.flags.boundary_window)?;
        writeln!(f, "K1 <= 1: {}", self.flags.k1_at_most_one)?;
        writeln!(f, "K2 < 1: {}", self.flags.k2_below_one)?;
        match self.verdict {
            Verdict::Certified => write!(f, "verdict = certified"),
            Verdict::Uncertified(c) => write!(f, "verdict = uncertified ({c})"),
        }
    }
}

impl CertificateInputs {
    fn validate(&self) -> Result<()> {
        let finite = [
            self.phi_at_zero,
            self.phi_sup,
            self.phi_prime_sup,
            self.psi_at_zero,
            self.psi_dot_sup,
            self.lipschitz,
            self.velocity_source,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::DataNotC1("non-finite data norm".into()));
        }
        if !(self.l0 > 0.0 && self.dt > 0.0) {
            return Err(Error::validation("domain.L0", "L0 and dt must be positive"));
        }
        Ok(())
    }

    /// `M = 1 + 2‖φ'‖ + ‖φ‖`.
    pub fn iterate_bound(&self) -> f64 {
        1.0 + 2.0 * self.phi_prime_sup + self.phi_sup
    }
}

/// All constants at a fixed window `lambda`.
pub fn evaluate(inputs: &CertificateInputs, lambda: f64) -> CertificateReport {
    let i = *inputs;
    let m = i.iterate_bound();
    let sp = PI.sqrt();
    let sl = lambda.sqrt();
    let k = i.lipschitz;

    let m1 = i.phi_at_zero.abs() + i.psi_at_zero.abs();
    let m2 = i.phi_prime_sup;
    let m3 = i.psi_dot_sup * sl / sp;
    let m4 = m3;
    let m5 = 2.0 * k * sl / sp;
    let m6 = 2.0 * k / i.l0 * (lambda / E).sqrt();
    let k1 = m1 + m2 + m3 + m4 + m5 + m6;

    // Unit differences of the iterates; squared differences are bounded by
    // the diameter 2M of the ball times the difference.
    let delta = 1.0;
    let delta_sq = 2.0 * m * delta;
    // Difference of the initial traces through the mean value theorem.
    let c1 = 2.0 / (2.0 * PI * E).sqrt();
    // Jacobian difference of two characteristics maps over the window.
    let rho_diff = k * lambda * (k * lambda).exp() * delta;
    // Substratum trace rate: boundary rate plus the source rate.
    let trace_rate = i.psi_dot_sup + k;
    let a1 = 2.0 * k * delta * (lambda / PI).sqrt();
    let a2 = (m * delta_sq * sl + 3.0 * m * delta * i.l0) / (2.0 * sp);
    let terms = [
        c1 * m1 * delta,
        2.0 * m2 * delta / sp,
        4.0 * i.psi_dot_sup * delta * lambda / sp,
        (i.velocity_source * sl + 2.0) / sp * rho_diff + delta * m / 2.0 * (lambda / PI).sqrt() + lambda,
        trace_rate * delta_sq * lambda / sp,
        2.0 * (a1 + a2),
        2.0 * k / i.l0 * (lambda / E).sqrt() * (2.0 * delta + 1.0),
    ];
    let k2 = terms.iter().sum();

    let inv_sqrt_gap = 1.0 / i.dt.min(lambda).sqrt();
    let flux_potential_bound =
        (m * inv_sqrt_gap + 3.0 * i.l0 * (2.0 / (3.0 * E * i.l0 * i.l0)).powf(1.5)) / (4.0 * sp);

    let flags = Flags {
        lambda_at_most_one: lambda <= 1.0,
        boundary_window: 2.0 * m * lambda <= i.l0,
        k1_at_most_one: k1 <= 1.0,
        k2_below_one: k2 < 1.0,
    };
    let verdict = match flags.first_failure() {
        None => Verdict::Certified,
        Some(c) => Verdict::Uncertified(c),
    };
    CertificateReport {
        inputs: i,
        m,
        lambda,
        m1,
        m2,
        m3,
        m4,
        m5,
        m6,
        k1,
        k2_terms: terms,
        k2,
        flux_potential_bound,
        flags,
        verdict,
    }
}

/// Largest window in `(0, 1]` passing every condition.
pub fn certify(inputs: &CertificateInputs) -> Result<CertificateReport> {
    inputs.validate()?;
    let ok = |l: f64| evaluate(inputs, l).flags.all();
    if ok(1.0) {
        return Ok(evaluate(inputs, 1.0));
    }
    if !ok(LAMBDA_FLOOR) {
        return Ok(evaluate(inputs, LAMBDA_FLOOR));
    }
    let (mut lo, mut hi) = (LAMBDA_FLOOR, 1.0);
    while hi - lo > LAMBDA_REL_TOL * lo {
        // Geometric midpoint while the bracket spans decades.
        let mid = if hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(evaluate(inputs, lo))
}

fn signal_norms(sig: &dyn Signal, a: f64, b: f64, what: &str) -> Result<(f64, f64)> {
    match sampled_sup(sig, a, b, DATA_SAMPLES) {
        (v, Some(d)) if v.is_finite() && d.is_finite() => Ok((v, d)),
        _ => Err(Error::DataNotC1(format!("{what} has no usable derivative"))),
    }
}

/// Gather the problem constants and certify.
pub fn compute_certificate(problem: &Problem, dt: f64) -> Result<CertificateReport> {
    let l0 = problem.l0;
    let (mut phi_at_zero, mut phi_sup, mut phi_prime_sup) = (0.0f64, 0.0f64, 0.0f64);
    let (mut psi_at_zero, mut psi_sup, mut psi_dot_sup) = (0.0f64, 0.0f64, 0.0f64);
    for (j, s) in problem.substrates.iter().enumerate() {
        let (v, d) = signal_norms(s.initial.as_ref(), 0.0, l0, &format!("initial substrate {}", j + 1))?;
        phi_at_zero = phi_at_zero.max(s.initial.value(0.0).abs());
        phi_sup = phi_sup.max(v);
        phi_prime_sup = phi_prime_sup.max(d);
        let (v, d) = signal_norms(s.boundary.psi.as_ref(), 0.0, 1.0, &format!("boundary signal {}", j + 1))?;
        psi_at_zero = psi_at_zero.max(s.boundary.psi.value(0.0).abs());
        psi_sup = psi_sup.max(v);
        psi_dot_sup = psi_dot_sup.max(d);
    }
    let spec = &problem.kinetics;
    let x_max: Vec<f64> = problem
        .species
        .iter()
        .zip(&spec.rho)
        .map(|(x, &rho)| sampled_sup(x.as_ref(), 0.0, l0, DATA_SAMPLES).0.max(rho))
        .collect();
    let c_max = vec![phi_sup.max(psi_sup); spec.m];
    // Resolve the shortest edge, within a cap on the longest.
    let edges: Vec<f64> = x_max.iter().chain(&c_max).copied().filter(|&e| e > 0.0).collect();
    let shortest = edges.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let longest = edges.iter().fold(0.0f64, |a, &b| a.max(b));
    let spacing = if edges.is_empty() { 1.0 } else { (shortest / BOX_CELLS).max(longest / MAX_BOX_CELLS) };
    let bx = StateBox { x_max, c_max };
    let lipschitz = spec.estimate_lipschitz(&bx, spacing).reported;
    let velocity_source = velocity_source_bound(problem, &bx, spacing)?;
    certify(&CertificateInputs {
        l0,
        dt,
        phi_at_zero,
        phi_sup,
        phi_prime_sup,
        psi_at_zero,
        psi_dot_sup,
        lipschitz,
        velocity_source,
    })
}

/// Sup of `|R|` over a lattice of the state box.
fn velocity_source_bound(problem: &Problem, bx: &StateBox, spacing: f64) -> Result<f64> {
    let spec = &problem.kinetics;
    let upper: Vec<f64> = bx.x_max.iter().chain(&bx.c_max).copied().collect();
    let counts: Vec<usize> = upper.iter().map(|&u| (u / spacing + 1e-9).floor() as usize + 1).collect();
    let mut idx = vec![0usize; upper.len()];
    let mut sup: f64 = 0.0;
    for _ in 0..counts.iter().product::<usize>() {
        let p: Vec<f64> = idx.iter().map(|&k| k as f64 * spacing).collect();
        let (x, c) = p.split_at(spec.n);
        sup = sup.max(spec.eval_growth_terms(x, c)?.r.abs());
        for d in 0..idx.len() {
            idx[d] += 1;
            if idx[d] < counts[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests;
