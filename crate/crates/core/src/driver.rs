//! Time marching of the coupled system.
//!
//! Each step solves the fixed point `U = T(U)` for `U = (u, X, η, θ)` at the
//! new time level by Picard iteration, updating the biomass
//! (characteristics), then the boundary, then every substrate's boundary
//! densities from the freshest values. The substrate profile at the
//! material nodes closes the loop through the kinetics.
//!
//! Every `rebaseline_every` steps the substrate profiles are frozen into
//! new initial data and the boundary-density histories are dropped, which
//! bounds the cost of the history sums.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::biomass::{interpolate, step_characteristics, BiomassState, MaterialGrid};
use crate::error::{Error, Result};
use crate::free_boundary::{trim_domain, FreeBoundaryState, SigmaMode};
use crate::kinetics::KineticsSpec;
use crate::signal::SharedSignal;
use crate::substrate::{
    BoundarySpec, Geometry, InitialData, KernelFamily, RepresentationMode, SubstrateSolver, TimeLevel,
};

/// Environment variable capping the number of substrate worker threads.
pub const THREADS_ENV: &str = "BIOFILM_FBP_THREADS";

/// Samples per material interval used for the initial substrate data.
const INITIAL_REFINE: usize = 8;

/// One dissolved substrate.
#[derive(Clone)]
pub struct SubstrateSetup {
    pub family: Arc<dyn KernelFamily>,
    pub boundary: BoundarySpec,
    pub initial: SharedSignal,
}

/// Everything needed to start a run.
#[derive(Clone)]
pub struct Problem {
    pub kinetics: KineticsSpec,
    pub l0: f64,
    /// Material intervals on `[0, L0]`.
    pub intervals: usize,
    /// Initial `X_i(z)`, one per species.
    pub species: Vec<SharedSignal>,
    pub substrates: Vec<SubstrateSetup>,
    pub sigma: SigmaMode,
    pub mode: RepresentationMode,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    50
}
fn default_rebaseline() -> Option<usize> {
    Some(256)
}
fn default_stride() -> usize {
    1
}
fn default_budget() -> f64 {
    5e-3
}
fn default_halvings() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarchConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Relative tolerance on the Picard change.
    #[serde(default = "default_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_max_iter")]
    pub picard_max_iter: usize,
    /// Steps between rebaselines; `None` keeps the full history.
    #[serde(default = "default_rebaseline")]
    pub rebaseline_every: Option<usize>,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    /// Boundary residual allowed on top of `100 × picard_tol`, relative to
    /// the boundary trace.
    #[serde(default = "default_budget")]
    pub residual_budget: f64,
    #[serde(default = "default_halvings")]
    pub max_halvings: usize,
    /// Thread cap; the environment variable wins when set.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl MarchConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            picard_tol: default_tol(),
            picard_max_iter: default_max_iter(),
            rebaseline_every: default_rebaseline(),
            output_stride: default_stride(),
            residual_budget: default_budget(),
            max_halvings: default_halvings(),
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation("numerics.dt", "must be positive"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::validation("domain.t_end", "must be non-negative"));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::validation("numerics.picard_tol", "must be positive"));
        }
        if self.picard_max_iter == 0 {
            return Err(Error::validation("numerics.picard_max_iter", "must be at least 1"));
        }
        if matches!(self.rebaseline_every, Some(n) if n < 16) {
            return Err(Error::validation("numerics.rebaseline_every", "must be at least 16"));
        }
        if self.output_stride == 0 {
            return Err(Error::validation("output.stride", "must be at least 1"));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Convergence record of one Picard solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardState {
    pub iterations: usize,
    /// `r_k = ‖U^{k+1} − U^k‖`.
    pub residuals: Vec<f64>,
    /// `q_k = r_k / r_{k−1}`.
    pub ratios: Vec<f64>,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub halvings: usize,
    pub picard: Vec<PicardState>,
    pub boundary_residual: f64,
}

/// Profiles at one output time. `c[k][j]` is substrate `j` at position
/// `z[k]`; the last position is the biofilm surface.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub l: f64,
    pub ldot: f64,
    pub z: Vec<f64>,
    /// Material label of each position.
    pub z0: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// Substrate trace at the surface.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationOutput {
    pub snapshots: Vec<Snapshot>,
    pub steps: Vec<StepRecord>,
    /// `(t, L)` at every accepted level.
    pub boundary: Vec<(f64, f64)>,
}

/// Live state of a run.
pub struct Simulation {
    kinetics: KineticsSpec,
    mode: RepresentationMode,
    cfg: MarchConfig,
    threads: usize,
    solvers: Vec<SubstrateSolver>,
    geom: Geometry,
    biomass: BiomassState,
    fb: FreeBoundaryState,
    /// Substrate per material node, `c[k][j]`.
    c: Vec<Vec<f64>>,
    step: usize,
    since_rebaseline: usize,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation").field("t", &self.t()).field("l", &self.fb.l).finish()
    }
}

fn thread_count(cfg: &MarchConfig) -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .or(cfg.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

/// Apply `f` to every solver, on up to `threads` scoped threads.
fn for_each_solver<T: Send>(
    solvers: &mut [SubstrateSolver],
    threads: usize,
    f: impl Fn(usize, &mut SubstrateSolver) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    if threads <= 1 || solvers.len() <= 1 {
        return solvers.iter_mut().enumerate().map(|(j, s)| f(j, s)).collect();
    }
    let total = solvers.len();
    let chunk = total.div_ceil(threads);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = solvers
            .chunks_mut(chunk)
            .enumerate()
            .map(|(c, part)| {
                scope.spawn(move || {
                    part.iter_mut().enumerate().map(|(i, s)| f(c * chunk + i, s)).collect::<Result<Vec<T>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(total);
        for h in handles {
            out.extend(h.join().expect("substrate worker panicked")?);
        }
        Ok(out)
    })
}

/// Positions carried by the substrate solver: nodes strictly below `L`,
/// then `L` itself.
fn positions(biomass: &BiomassState, l: f64) -> (Vec<f64>, usize) {
    let below = biomass.eta.iter().take_while(|&&e| e < l * (1.0 - 1e-12)).count();
    let mut xs = biomass.eta[..below].to_vec();
    xs.push(l);
    (xs, below)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn sup(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// State of one Picard iterate, for the change measure.
struct Iterate {
    u: Vec<f64>,
    x: Vec<f64>,
    eta: Vec<f64>,
    theta: Vec<f64>,
}

impl Iterate {
    fn of(b: &BiomassState, theta: Vec<f64>) -> Self {
        Self { u: b.u.clone(), x: b.x.concat(), eta: b.eta.clone(), theta }
    }

    fn distance(&self, o: &Iterate) -> f64 {
        sup_diff(&self.u, &o.u)
            + sup_diff(&self.x, &o.x)
            + sup_diff(&self.eta, &o.eta)
            + self.theta.iter().zip(&o.theta).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    fn norm(&self) -> f64 {
        sup(&self.u) + sup(&self.x) + sup(&self.eta) + self.theta.iter().map(|t| t.abs()).sum::<f64>()
    }
}

impl Simulation {
    pub fn new(problem: Problem, cfg: MarchConfig) -> Result<Self> {
        cfg.validate()?;
        let Problem { kinetics, l0, intervals, species, substrates, sigma, mode } = problem;
        kinetics.validate()?;
        if species.len() != kinetics.n || substrates.len() != kinetics.m {
            return Err(Error::validation("species", "species/substrate counts do not match the kinetics"));
        }
        let grid = MaterialGrid::uniform(l0, intervals)?;
        let x0: Vec<Vec<f64>> = grid.nodes.iter().map(|&z| species.iter().map(|s| s.value(z)).collect()).collect();
        let c0: Vec<Vec<f64>> =
            grid.nodes.iter().map(|&z| substrates.iter().map(|s| s.initial.value(z)).collect()).collect();
        let biomass = BiomassState::initial(&grid, x0, &c0, &kinetics)?;
        let u_top = *biomass.u.last().expect("non-empty grid");
        let fb = FreeBoundaryState::new(l0, u_top, sigma, None);

        let (xs, _) = positions(&biomass, l0);
        let geom = Geometry {
            levels: vec![TimeLevel { t: 0.0, l: l0, ldot: fb.ldot, jac_top: 1.0, xs: xs.clone() }],
        };
        let mut solvers = Vec::with_capacity(substrates.len());
        for s in &substrates {
            let init = InitialData::from_signal(s.initial.as_ref(), l0, INITIAL_REFINE * intervals);
            solvers.push(SubstrateSolver::new(s.family.clone(), mode, &s.boundary, init)?);
        }
        let mut sim = Self {
            kinetics,
            mode,
            threads: thread_count(&cfg),
            cfg,
            solvers,
            geom,
            biomass,
            fb,
            c: c0,
            step: 0,
            since_rebaseline: 0,
        };
        let top: Vec<f64> = substrates.iter().map(|s| s.initial.value(l0)).collect();
        let f0 = sim.sources(&sim.biomass, sim.fb.l, &sim.c, &top)?;
        for (j, s) in sim.solvers.iter_mut().enumerate() {
            s.start(&sim.geom, f0[j].clone());
        }
        Ok(sim)
    }

    pub fn t(&self) -> f64 {
        self.geom.last().t
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn boundary(&self) -> &FreeBoundaryState {
        &self.fb
    }

    pub fn biomass(&self) -> &BiomassState {
        &self.biomass
    }

    pub fn solvers(&self) -> &[SubstrateSolver] {
        &self.solvers
    }

    fn surface_traces(&self) -> Vec<f64> {
        self.solvers.iter().map(|s| *s.hist.trace.last().expect("started")).collect()
    }

    /// Sources `F_j` at the solver positions for the biomass `b`, surface
    /// `l`, nodal substrate `c` and surface traces.
    fn sources(&self, b: &BiomassState, l: f64, c: &[Vec<f64>], traces: &[f64]) -> Result<Vec<Vec<f64>>> {
        let (xs, below) = positions(b, l);
        let mut out = vec![Vec::with_capacity(xs.len()); self.kinetics.m];
        for k in 0..xs.len() {
            let (x, ck) = if k < below { (b.x[k].clone(), c[k].clone()) } else { (b.species_at(l), traces.to_vec()) };
            let f = self.kinetics.eval_substrate_sources(&x, &ck)?;
            for (j, v) in f.into_iter().enumerate() {
                out[j].push(v);
            }
        }
        Ok(out)
    }

    /// Solve the fixed point at `t + dt` and install the new level. The
    /// caller is responsible for restoring state on failure.
    pub fn picard_step(&mut self, dt: f64) -> Result<PicardState> {
        let prev = self.biomass.clone();
        let c_prev = self.c.clone();
        let fb_prev = self.fb.clone();
        let u_prev = interpolate(&prev.eta, &prev.u, fb_prev.l);
        let n = self.geom.levels.len();
        let t = fb_prev.t + dt;

        let mut c_next = c_prev.clone();
        let mut traces = self.surface_traces();
        let mut guess: Option<BiomassState> = None;
        let mut last = Iterate::of(&prev, self.solvers.iter().map(|s| *s.hist.theta.last().expect("started")).collect());
        let mut state = PicardState { iterations: 0, residuals: Vec::new(), ratios: Vec::new() };
        loop {
            state.iterations += 1;
            // T1–T3 and the boundary
            let bio = step_characteristics(&prev, &c_prev, &c_next, &self.kinetics, dt, guess.as_ref())?;
            let eta_top = *bio.eta.last().expect("non-empty");
            let fb = if fb_prev.mode == SigmaMode::None {
                let u_top = *bio.u.last().expect("non-empty");
                fb_prev.step_boundary(u_prev, u_top, eta_top, dt)?
            } else {
                // u at the predicted surface, then once more at the corrected one
                let guess_l = fb_prev.step_boundary(u_prev, interpolate(&bio.eta, &bio.u, fb_prev.l), eta_top, dt)?;
                let u_l = interpolate(&bio.eta, &bio.u, guess_l.l);
                fb_prev.step_boundary(u_prev, u_l, eta_top, dt)?
            };
            if matches!(fb.mode, SigmaMode::Detach(_)) && fb.l > eta_top * (1.0 + 1e-12) {
                return Err(Error::BoundaryOutsideDomain { thickness: fb.l, top: eta_top });
            }
            // T4
            let (xs, below) = positions(&bio, fb.l);
            let level = TimeLevel {
                t,
                l: fb.l,
                ldot: fb.ldot,
                jac_top: interpolate(&bio.eta, &bio.jac, fb.l),
                xs: xs.clone(),
            };
            self.geom.set_level(n, level);
            let f = self.sources(&bio, fb.l, &c_next, &traces)?;
            let geom = &self.geom;
            let solved = for_each_solver(&mut self.solvers, self.threads, |j, s| {
                let sol = s.advance(geom, f[j].clone())?;
                let prof = s.eval_substrate_profile(geom, &xs[..below])?;
                Ok((sol, prof))
            })?;
            let mut c_new = vec![vec![0.0; self.kinetics.m]; bio.len()];
            for (j, (sol, prof)) in solved.iter().enumerate() {
                for (k, row) in c_new.iter_mut().enumerate() {
                    row[j] = if k < below { prof[k].max(0.0) } else { sol.trace };
                }
            }
            traces = solved.iter().map(|(s, _)| s.trace).collect();
            let cur = Iterate::of(&bio, solved.iter().map(|(s, _)| s.theta).collect());
            let r = cur.distance(&last);
            if let Some(&rp) = state.residuals.last() {
                state.ratios.push(if rp > 0.0 { r / rp } else { 0.0 });
            }
            state.residuals.push(r);
            let converged = r <= self.cfg.picard_tol * (1.0 + cur.norm());
            last = cur;
            c_next = c_new;
            self.biomass = bio.clone();
            self.fb = fb;
            guess = Some(bio);
            if converged {
                break;
            }
            if state.iterations >= self.cfg.picard_max_iter {
                return Err(Error::NonContraction {
                    iterations: state.iterations,
                    ratio: state.ratios.last().copied().unwrap_or(f64::INFINITY),
                });
            }
        }
        self.c = c_next;
        Ok(state)
    }

    fn boundary_residual(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for s in &self.solvers {
            let b = s.hist.trace.last().expect("started").abs().max(1e-300);
            worst = worst.max(s.boundary_residual(&self.geom)? / b.max(1.0));
        }
        Ok(worst)
    }

    /// Advance one step of size `dt`, subdividing it when the boundary
    /// residual exceeds the budget.
    pub fn advance(&mut self) -> Result<StepRecord> {
        let t0 = self.t();
        let step = self.step + 1;
        let dt = self.cfg.dt.min(self.cfg.t_end - t0).max(self.cfg.dt * 1e-9);
        let saved = (self.biomass.clone(), self.fb.clone(), self.c.clone(), self.geom.levels.len());
        let literal = self.mode == RepresentationMode::PaperLiteral;
        let budget = 100.0 * self.cfg.picard_tol + self.cfg.residual_budget;
        let mut halvings = 0;
        loop {
            let parts = 1usize << halvings;
            let sub = dt / parts as f64;
            let mut picard = Vec::with_capacity(parts);
            let mut residual: f64 = 0.0;
            let attempt = (|| -> Result<()> {
                for _ in 0..parts {
                    picard.push(self.picard_step(sub)?);
                    self.accept_level()?;
                    if !literal {
                        residual = residual.max(self.boundary_residual()?);
                    }
                }
                Ok(())
            })();
            let ok = attempt.is_ok() && (literal || residual <= budget);
            if ok {
                self.step = step;
                self.since_rebaseline += 1;
                if matches!(self.cfg.rebaseline_every, Some(k) if self.since_rebaseline >= k) {
                    self.rebaseline().map_err(|e| e.at_step(step, self.t()))?;
                }
                return Ok(StepRecord { step, t: self.t(), halvings, picard, boundary_residual: residual });
            }
            // restore and retry with a finer subdivision
            self.biomass = saved.0.clone();
            self.fb = saved.1.clone();
            self.c = saved.2.clone();
            self.geom.levels.truncate(saved.3);
            for s in &mut self.solvers {
                s.truncate_history(saved.3);
            }
            if halvings >= self.cfg.max_halvings {
                let err = match attempt {
                    Err(e) => e,
                    Ok(()) => Error::BoundaryResidual { residual, budget },
                };
                return Err(err.at_step(step, t0 + dt));
            }
            halvings += 1;
        }
    }

    /// Post-convergence bookkeeping: trim or extend the material grid.
    fn accept_level(&mut self) -> Result<()> {
        if self.fb.mode != SigmaMode::None {
            let before = self.biomass.len();
            let mix = self.biomass.species_at(self.fb.l);
            trim_domain(&self.fb, &mut self.biomass, Some(&mix), 1e-3 * self.fb.l0)?;
            let traces = self.surface_traces();
            self.c.truncate(self.biomass.len());
            while self.c.len() < self.biomass.len() {
                self.c.push(traces.clone());
            }
            debug_assert!(self.biomass.len() <= before + 1);
        }
        Ok(())
    }

    /// Freeze the substrate profiles at the current level into new initial
    /// data and restart the histories there.
    pub fn rebaseline(&mut self) -> Result<()> {
        let lv = self.geom.last().clone();
        if self.geom.levels.len() == 1 {
            return Ok(());
        }
        let below = lv.xs.len() - 1;
        let t = lv.t;
        let c = &self.c;
        for_each_solver(&mut self.solvers, self.threads, |j, s| {
            let trace = *s.hist.trace.last().ok_or_else(|| Error::ProfileUnavailable("empty history".into()))?;
            let mut ys: Vec<f64> = c[..below].iter().map(|row| row[j]).collect();
            ys.push(trace);
            if ys.iter().any(|v| !v.is_finite()) {
                return Err(Error::ProfileUnavailable(format!("non-finite profile for substrate {j}")));
            }
            s.rebaseline(t, &lv.xs, &ys, INITIAL_REFINE)
        })?;
        self.geom = Geometry { levels: vec![lv] };
        self.since_rebaseline = 0;
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        let lv = self.geom.last();
        let below = lv.xs.len() - 1;
        let mut c: Vec<Vec<f64>> = self.c[..below].to_vec();
        c.push(self.surface_traces());
        let mut x: Vec<Vec<f64>> = self.biomass.x[..below].to_vec();
        x.push(self.biomass.species_at(lv.l));
        let mut u = self.biomass.u[..below].to_vec();
        u.push(interpolate(&self.biomass.eta, &self.biomass.u, lv.l));
        let mut z0 = self.biomass.z0[..below].to_vec();
        z0.push(interpolate(&self.biomass.eta, &self.biomass.z0, lv.l));
        Snapshot {
            t: lv.t,
            l: lv.l,
            ldot: lv.ldot,
            z: lv.xs.clone(),
            z0,
            x,
            c,
            u,
            theta: self.solvers.iter().map(|s| *s.hist.theta.last().expect("started")).collect(),
            phi: self.solvers.iter().map(|s| *s.hist.phi.last().expect("started")).collect(),
            trace: self.surface_traces(),
        }
    }

    /// March to `t_end`, recording snapshots at the output stride.
    pub fn run(mut self) -> Result<SimulationOutput> {
        let steps = self.cfg.steps();
        let stride = self.cfg.output_stride;
        let mut out = SimulationOutput {
            snapshots: vec![self.snapshot()],
            steps: Vec::with_capacity(steps),
            boundary: vec![(self.t(), self.fb.l)],
        };
        for n in 1..=steps {
            let rec = self.advance().map_err(|e| e.at_step(n, self.t()))?;
            out.steps.push(rec);
            out.boundary.push((self.t(), self.fb.l));
            if n % stride == 0 || n == steps {
                out.snapshots.push(self.snapshot());
            }
        }
        Ok(out)
    }
}

pub fn run_simulation(problem: Problem, cfg: MarchConfig) -> Result<SimulationOutput> {
    Simulation::new(problem, cfg)?.run()
}
