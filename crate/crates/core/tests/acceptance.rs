//! Acceptance suite: every criterion is measured, printed as one line and
//! then asserted together, so the full table shows up in the test log even
//! when a criterion fails.

use std::sync::Arc;
use std::time::Instant;

use biofilm_core::certificate::{compute_certificate, Condition, Verdict};
use biofilm_core::driver::{run_simulation, MarchConfig, Problem, Simulation, SubstrateSetup};
use biofilm_core::free_boundary::{SigmaLaw, SigmaMode};
use biofilm_core::kernels::{heat, heat_dx, verify_kernels};
use biofilm_core::kinetics::{CustomTerms, KineticsSpec, MonodSpecies};
use biofilm_core::oracle::{compare_with_oracle, solve_front_fixed, OracleConfig};
use biofilm_core::parametrix::{build_gamma, DiffusivityField, GammaFamily, ParametrixConfig, ProfileField};
use biofilm_core::rules::Rule;
use biofilm_core::signal::{FnSignal, SharedSignal};
use biofilm_core::substrate::{
    BoundarySpec, Geometry, HeatFamily, InitialData, KernelFamily, RepresentationMode, SubstrateSolver, TimeLevel,
};

struct Outcome {
    id: u32,
    title: &'static str,
    passed: bool,
    /// Diagnostic criteria are reported but excluded from the verdict.
    counted: bool,
    detail: String,
}

fn outcome(id: u32, title: &'static str, passed: bool, detail: String) -> Outcome {
    Outcome { id, title, passed, counted: true, detail }
}

fn constant(v: f64) -> SharedSignal {
    Arc::new(FnSignal::new(move |_| v, |_| 0.0))
}

fn sup_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Fixed-boundary substrate marches (criteria 3, 7, 8, 11).

struct FixedRun {
    /// Sup errors of the profile, `θ` and `Φ` against the exact solution.
    profile_err: f64,
    theta_err: f64,
    phi_err: f64,
    /// Profile at the final time (nodes, last one the trace at `L`).
    profile: Vec<f64>,
    phis: Vec<f64>,
    residual: f64,
}

fn exact(z: f64, t: f64) -> f64 {
    (-t).exp() * z.cos()
}

fn cosine_psi() -> SharedSignal {
    let c1 = 1f64.cos();
    Arc::new(FnSignal::new(move |t| (-t).exp() * c1, move |t| -(-t).exp() * c1))
}

fn march_fixed(
    family: Arc<dyn KernelFamily>,
    boundary: BoundarySpec,
    mode: RepresentationMode,
    dt: f64,
    t_end: f64,
    nz: usize,
) -> FixedRun {
    let phi = FnSignal::new(|z| z.cos(), |z| -z.sin());
    let init = InitialData::from_signal(&phi, 1.0, 8 * nz);
    let mut solver = SubstrateSolver::new(family, mode, &boundary, init).unwrap();
    let level = |t: f64| TimeLevel {
        t,
        l: 1.0,
        ldot: 0.0,
        jac_top: 1.0,
        xs: (0..=nz).map(|k| k as f64 / nz as f64).collect(),
    };
    let mut geom = Geometry { levels: vec![level(0.0)] };
    solver.start(&geom, vec![0.0; nz + 1]);
    let steps = (t_end / dt).round() as usize;
    let mut run = FixedRun {
        profile_err: 0.0,
        theta_err: 0.0,
        phi_err: 0.0,
        profile: Vec::new(),
        phis: Vec::new(),
        residual: 0.0,
    };
    for n in 1..=steps {
        let t = n as f64 * dt;
        geom.set_level(n, level(t));
        let sol = solver.advance(&geom, vec![0.0; nz + 1]).unwrap();
        run.theta_err = run.theta_err.max((sol.theta + (-t).exp() * 1f64.sin()).abs());
        run.phi_err = run.phi_err.max((sol.phi - exact(0.0, t)).abs());
        run.phis.push(sol.phi);
        let xs = geom.last().xs.clone();
        let prof = solver.eval_substrate_profile(&geom, &xs[..nz]).unwrap();
        for (z, c) in xs.iter().zip(&prof) {
            run.profile_err = run.profile_err.max((c - exact(*z, t)).abs());
        }
        run.residual = run.residual.max(solver.boundary_residual(&geom).unwrap());
        if n == steps {
            run.profile = prof;
            run.profile.push(*solver.hist.trace.last().unwrap());
        }
    }
    run
}

fn heat_family() -> Arc<dyn KernelFamily> {
    Arc::new(HeatFamily { d: 1.0 })
}

// ---------------------------------------------------------------------------
// Coupled problems.

fn monod_benchmark(intervals: usize) -> Problem {
    let sp = MonodSpecies { mu_max: 4.0, k_s: vec![0.5], decay: 0.0, substrates: vec![0], yields: vec![0.5] };
    Problem {
        kinetics: KineticsSpec::monod(vec![1.0], 1, vec![sp]).unwrap(),
        l0: 0.1,
        intervals,
        species: vec![constant(1.0)],
        substrates: vec![SubstrateSetup { family: heat_family(), boundary: BoundarySpec::dirichlet(constant(1.0)), initial: constant(1.0) }],
        sigma: SigmaMode::None,
        mode: RepresentationMode::ImageCorrected,
    }
}

fn custom_problem(rate: f64, sigma: SigmaMode) -> Problem {
    let kinetics = KineticsSpec::custom(
        vec![1.0],
        1,
        CustomTerms::new(move |x, _, h| h[0] = rate * x[0], |_, _, f| f[0] = 0.0),
    )
    .unwrap();
    Problem {
        kinetics,
        l0: 1.0,
        intervals: 16,
        species: vec![constant(1.0)],
        substrates: vec![SubstrateSetup { family: heat_family(), boundary: BoundarySpec::dirichlet(constant(1.0)), initial: constant(1.0) }],
        sigma,
        mode: RepresentationMode::ImageCorrected,
    }
}

// ---------------------------------------------------------------------------

fn kernel_suite() -> Outcome {
    let start = Instant::now();
    let report = verify_kernels(7, 200);
    let elapsed = start.elapsed().as_secs_f64();
    let worst: Vec<String> = report.checks.iter().map(|c| format!("{}={:.1e}", c.name, c.measured)).collect();
    outcome(1, "kernel suite", report.passed() && elapsed < 5.0, format!("{} in {elapsed:.2}s", worst.join(" ")))
}

/// `∂/∂z ∫_0^t K(z − L, t − τ) dτ` at `z = L − x`, by panels refined
/// geometrically towards `t − τ = 0`.
fn layer_derivative(x: f64, t: f64) -> f64 {
    let rule = Rule::gauss_legendre(20);
    let mut total = 0.0;
    let mut hi = t;
    while hi > 1e-16 {
        let lo = if hi > 1e-14 { hi / 4.0 } else { 0.0 };
        total += rule.integrate(lo, hi, |s| heat_dx(-x, s));
        hi = lo;
    }
    total
}

fn jump_relation() -> Outcome {
    let t = 0.5;
    let xs = [4e-3, 2e-3, 1e-3];
    let v: Vec<f64> = xs.iter().map(|&x| layer_derivative(x, t)).collect();
    // Quadratic extrapolation to x = 0 on the halving sequence.
    let limit = (8.0 * v[2] - 6.0 * v[1] + v[0]) / 3.0;
    // The potential is smooth across the source line away from it: at the
    // line itself the derivative integrand vanishes identically.
    let on_line = heat_dx(0.0, 0.1);
    let passed = (limit - 0.5).abs() < 1e-3 && on_line == 0.0;
    outcome(2, "jump relation", passed, format!("one-sided limit {limit:.6} (expected 0.5)"))
}

fn manufactured(dt: f64, mode: RepresentationMode, family: Arc<dyn KernelFamily>) -> FixedRun {
    march_fixed(family, BoundarySpec::dirichlet(cosine_psi()), mode, dt, 0.1, 64)
}

fn manufactured_solution() -> Outcome {
    let start = Instant::now();
    let a = manufactured(1e-3, RepresentationMode::ImageCorrected, heat_family());
    // The budget covers the stated run; the halved step is a reference.
    let elapsed = start.elapsed().as_secs_f64();
    let b = manufactured(5e-4, RepresentationMode::ImageCorrected, heat_family());
    let err = |r: &FixedRun| r.profile_err.max(r.theta_err).max(r.phi_err);
    let ratio = err(&a) / err(&b);
    let passed = a.profile_err <= 1e-3 && a.theta_err <= 1e-3 && a.phi_err <= 1e-3 && ratio >= 1.8 && elapsed < 10.0;
    outcome(
        3,
        "manufactured substrate solution",
        passed,
        format!(
            "S {:.2e} theta {:.2e} Phi {:.2e}; halving dt gains {ratio:.2}x; {elapsed:.1}s",
            a.profile_err, a.theta_err, a.phi_err
        ),
    )
}

fn moving_boundary() -> Outcome {
    let out = run_simulation(custom_problem(0.1, SigmaMode::None), MarchConfig::new(0.01, 1.0)).unwrap();
    let last = out.snapshots.last().unwrap();
    let l_err = (last.l - 0.1f64.exp()).abs();
    let mut u_err: f64 = 0.0;
    for s in &out.snapshots {
        for (z, u) in s.z.iter().zip(&s.u) {
            u_err = u_err.max((u - 0.1 * z).abs());
        }
    }
    let detach = SigmaMode::Detach(SigmaLaw::Constant { rate: 0.05 });
    let out = run_simulation(custom_problem(0.0, detach), MarchConfig::new(0.01, 1.0)).unwrap();
    let d_err = out.boundary.iter().map(|(t, l)| (l - (1.0 - 0.05 * t)).abs()).fold(0.0, f64::max);
    let passed = l_err < 1e-6 && u_err < 1e-12 && d_err < 1e-10;
    outcome(
        4,
        "moving-boundary closed forms",
        passed,
        format!("L(1) err {l_err:.2e}, u err {u_err:.2e}, detachment err {d_err:.2e}"),
    )
}

fn constraint_preservation() -> Outcome {
    let species = vec![
        MonodSpecies { mu_max: 2.0, k_s: vec![0.5], decay: 0.1, substrates: vec![0], yields: vec![0.5] },
        MonodSpecies { mu_max: 0.5, k_s: vec![0.2], decay: 0.0, substrates: vec![0], yields: vec![0.3] },
    ];
    let problem = Problem {
        kinetics: KineticsSpec::monod(vec![1.0, 2.0], 1, species).unwrap(),
        l0: 0.1,
        intervals: 16,
        species: vec![constant(0.6), constant(0.8)],
        substrates: vec![SubstrateSetup { family: heat_family(), boundary: BoundarySpec::dirichlet(constant(1.0)), initial: constant(1.0) }],
        sigma: SigmaMode::None,
        mode: RepresentationMode::ImageCorrected,
    };
    let rho = problem.kinetics.rho.clone();
    let mut sim = Simulation::new(problem, MarchConfig::new(1e-3, 1.0)).unwrap();
    let mut drift = sim.biomass().fraction_drift(&rho);
    for _ in 0..1000 {
        sim.advance().unwrap();
        drift = drift.max(sim.biomass().fraction_drift(&rho));
    }
    outcome(5, "volume-fraction constraint", drift <= 1e-6, format!("max drift {drift:.2e} over 1000 steps"))
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let oracle_cfg = OracleConfig { n_x: 128, dt: 2e-4, t_end: 1.0, theta_scheme: 0.5, output_stride: 50 };
    let oracle = solve_front_fixed(&monod_benchmark(32), &oracle_cfg).unwrap();
    let cfg = MarchConfig { output_stride: 2, ..MarchConfig::new(0.005, 1.0) };
    let run = run_simulation(monod_benchmark(32), cfg).unwrap();
    let cmp = compare_with_oracle(&run, &oracle);
    let elapsed = start.elapsed().as_secs_f64();
    // ψ ≡ 1, so absolute and relative-to-sup-ψ substrate differences agree.
    let passed = cmp.substrate <= 5e-3 && cmp.thickness_rel <= 1e-3 && cmp.snapshots_compared >= 10 && elapsed < 120.0;
    outcome(
        6,
        "oracle equivalence",
        passed,
        format!(
            "S {:.2e}, L {:.2e} rel over {} snapshots; {elapsed:.1}s",
            cmp.substrate, cmp.thickness_rel, cmp.snapshots_compared
        ),
    )
}

fn robin_limit() -> Outcome {
    let run = |b: BoundarySpec| march_fixed(heat_family(), b, RepresentationMode::ImageCorrected, 1e-3, 0.1, 32);
    let dirichlet = run(BoundarySpec::dirichlet(cosine_psi()));
    let dist = |h: f64| {
        let r = run(BoundarySpec::robin(cosine_psi(), h, 1.0, 1.0));
        sup_abs_diff(&r.profile, &dirichlet.profile)
    };
    let (d2, d1) = (dist(0.02), dist(0.01));
    let ratio = d2 / d1;
    let zero = run(BoundarySpec::robin(cosine_psi(), 0.0, 1.0, 1.0));
    let identical = zero.profile.iter().zip(&dirichlet.profile).all(|(a, b)| a.to_bits() == b.to_bits());
    let passed = (ratio - 2.0).abs() <= 0.3 && identical;
    outcome(
        7,
        "Robin limit",
        passed,
        format!("distance {d2:.2e} -> {d1:.2e} (ratio {ratio:.2}); h = 0 bit-identical: {identical}"),
    )
}

fn variable_diffusivity() -> Outcome {
    // Constant coefficient through the parametrix path.
    let (gamma, _) = build_gamma(DiffusivityField::Constant { d: 1.0 }, ParametrixConfig::default()).unwrap();
    let fam: Arc<dyn KernelFamily> = Arc::new(GammaFamily::new(gamma, 1.0, 0.1).unwrap());
    let via_gamma = manufactured(1e-3, RepresentationMode::ImageCorrected, fam);
    let via_heat = manufactured(1e-3, RepresentationMode::ImageCorrected, heat_family());
    let path_diff = sup_abs_diff(&via_gamma.profile, &via_heat.profile).max(sup_abs_diff(&via_gamma.phis, &via_heat.phis));

    let d = 1.3;
    let (g, _) = build_gamma(DiffusivityField::Constant { d }, ParametrixConfig::default()).unwrap();
    let mut kernel_diff: f64 = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            for k in 1..=10 {
                let (z, xi, s) = (0.1 * i as f64, 0.1 * j as f64, 0.05 * k as f64);
                let scaled = heat((z - xi) / d.sqrt(), s) / d.sqrt();
                kernel_diff = kernel_diff.max((g.value(z, xi, s) - scaled).abs());
            }
        }
    }

    let field = DiffusivityField::Profile(ProfileField::new(|z| 1.0 + 0.1 * z));
    let (g, _) = build_gamma(field, ParametrixConfig { series_order: 1, ..ParametrixConfig::default() }).unwrap();
    let b = g.bound_slopes(0.5, &[1e-4, 3e-4, 1e-3, 3e-3, 1e-2]);
    let slopes_ok = (b.value + 0.5).abs() <= 0.1 && (b.dz + 1.0).abs() <= 0.1 && (b.dt + 1.5).abs() <= 0.1;
    let passed = path_diff <= 1e-4 && kernel_diff <= 1e-12 && slopes_ok;
    outcome(
        8,
        "variable-diffusivity reduction",
        passed,
        format!(
            "path diff {path_diff:.2e}, kernel diff {kernel_diff:.2e}, exponents {:.3}/{:.3}/{:.3} (expected -0.5/-1/-1.5)",
            b.value, b.dz, b.dt
        ),
    )
}

fn certificate_consistency() -> Outcome {
    let small = |phi: SharedSignal| {
        let sp = MonodSpecies { mu_max: 0.1, k_s: vec![0.5], decay: 0.0, substrates: vec![0], yields: vec![0.5] };
        Problem {
            kinetics: KineticsSpec::monod(vec![1.0], 1, vec![sp]).unwrap(),
            l0: 0.1,
            intervals: 16,
            species: vec![constant(1.0)],
            substrates: vec![SubstrateSetup {
                family: heat_family(),
                boundary: BoundarySpec::dirichlet(constant(0.05)),
                initial: phi,
            }],
            sigma: SigmaMode::None,
            mode: RepresentationMode::ImageCorrected,
        }
    };
    let problem = small(constant(0.05));
    let report = compute_certificate(&problem, 1e-4).unwrap();
    let lambda = report.lambda;
    let dt = lambda / 8.0;
    let mut sim = Simulation::new(problem, MarchConfig::new(dt, lambda)).unwrap();
    let mut q_max: f64 = 0.0;
    for _ in 0..8 {
        let rec = sim.advance().unwrap();
        for p in &rec.picard {
            q_max = p.ratios.iter().skip(1).fold(q_max, |a, &q| a.max(q));
        }
    }
    let bounds = sim.boundary().trajectory_bounds_hold(report.m, lambda);

    let steep = small(Arc::new(FnSignal::new(|z| 2.0 * z, |_| 2.0)));
    let steep_report = compute_certificate(&steep, 1e-4).unwrap();
    let steep_ok = steep_report.verdict == Verdict::Uncertified(Condition::SelfMap) && steep_report.k1 > 1.0;
    let passed = report.certified() && q_max <= report.k2 + 0.05 && bounds && steep_ok;
    outcome(
        9,
        "certificate/driver consistency",
        passed,
        format!(
            "lambda {lambda:.3e}, K2 {:.4}, max q {q_max:.2e}, trajectory bounds {bounds}; steep data K1 {:.3} uncertified {steep_ok}",
            report.k2, steep_report.k1
        ),
    )
}

fn rebaseline_transparency() -> Outcome {
    let dt = 0.005;
    let cfg = MarchConfig { rebaseline_every: None, ..MarchConfig::new(dt, 0.6) };
    let mut plain = Simulation::new(monod_benchmark(32), cfg.clone()).unwrap();
    let mut rebased = Simulation::new(monod_benchmark(32), cfg).unwrap();
    let half = (0.5 / dt).round() as usize;
    for n in 1..=(0.6 / dt).round() as usize {
        plain.advance().unwrap();
        rebased.advance().unwrap();
        if n == half {
            rebased.rebaseline().unwrap();
        }
    }
    let (a, b) = (plain.snapshot(), rebased.snapshot());
    let ds = a.c.iter().zip(&b.c).map(|(x, y)| (x[0] - y[0]).abs()).fold(0.0, f64::max);
    let dl = (a.l - b.l).abs();
    outcome(10, "rebaseline transparency", ds <= 1e-6 && dl <= 1e-6, format!("at t = 0.6: S {ds:.2e}, L {dl:.2e}"))
}

fn literal_mode() -> Outcome {
    let run = manufactured(1e-3, RepresentationMode::PaperLiteral, heat_family());
    let zero_phi = run.phis.iter().all(|&p| p == 0.0);
    Outcome {
        id: 11,
        title: "literal representation diagnostic",
        passed: zero_phi && run.residual > 0.0,
        counted: false,
        detail: format!("Phi identically zero: {zero_phi}; boundary residual {:.2e}", run.residual),
    }
}

#[test]
fn acceptance_suite() {
    let checks: Vec<fn() -> Outcome> = vec![
        kernel_suite,
        jump_relation,
        manufactured_solution,
        moving_boundary,
        constraint_preservation,
        oracle_equivalence,
        robin_limit,
        variable_diffusivity,
        certificate_consistency,
        rebaseline_transparency,
        literal_mode,
    ];
    let mut failed = Vec::new();
    for check in checks {
        let o = check();
        let tag = match (o.counted, o.passed) {
            (false, _) => "INFO",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        };
        println!("criterion {:>2} [{tag}] {}: {}", o.id, o.title, o.detail);
        if o.counted && !o.passed {
            failed.push(o.id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
