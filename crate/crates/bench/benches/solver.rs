use std::sync::Arc;

use biofilm_core::driver::{run_simulation, MarchConfig, Problem, SubstrateSetup};
use biofilm_core::oracle::{solve_front_fixed, OracleConfig};
use biofilm_core::signal::FnSignal;
use biofilm_core::{BoundarySpec, HeatFamily, KineticsSpec, MonodSpecies, RepresentationMode, SigmaMode};
use criterion::{criterion_group, criterion_main, Criterion};

fn monod(intervals: usize) -> Problem {
    let one = Arc::new(FnSignal::new(|_| 1.0, |_| 0.0));
    let sp = MonodSpecies { mu_max: 4.0, k_s: vec![0.5], decay: 0.0, substrates: vec![0], yields: vec![0.5] };
    Problem {
        kinetics: KineticsSpec::monod(vec![1.0], 1, vec![sp]).unwrap(),
        l0: 0.1,
        intervals,
        species: vec![one.clone()],
        substrates: vec![SubstrateSetup {
            family: Arc::new(HeatFamily { d: 1.0 }),
            boundary: BoundarySpec::dirichlet(one.clone()),
            initial: one,
        }],
        sigma: SigmaMode::None,
        mode: RepresentationMode::ImageCorrected,
    }
}

fn march(c: &mut Criterion) {
    let mut g = c.benchmark_group("monod");
    g.sample_size(10);
    g.bench_function("integral_50_steps", |b| {
        b.iter(|| run_simulation(monod(16), MarchConfig { output_stride: 1000, ..MarchConfig::new(0.002, 0.1) }).unwrap())
    });
    g.bench_function("oracle_100_steps", |b| {
        let cfg = OracleConfig { n_x: 64, dt: 1e-3, t_end: 0.1, theta_scheme: 0.5, output_stride: 1000 };
        b.iter(|| solve_front_fixed(&monod(16), &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, march);
criterion_main!(benches);
