//! Independent reference solver by front fixing.
//!
//! With `ξ = z/L(t)` the domain is `[0, 1]`. Substrates are nodal and
//! advanced by a θ-scheme for
//! `g_t = (a g_ξ)_ξ / L² + ξ (L̇/L) g_ξ + F`;
//! biomass lives on cells and is advanced by explicit upwind finite volumes
//! for `g_t + ((u − ξL̇) g / L)_ξ + (L̇/L) g = H̃`, with `u` the cumulative
//! growth rate and `L̇ = u(L) ± σ` integrated by Heun's method.

use serde::{Deserialize, Serialize};

use crate::driver::{Problem, SimulationOutput};
use crate::error::{Error, Result};
use crate::substrate::BoundaryKind;

fn default_theta() -> f64 {
    0.5
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Intervals on `ξ ∈ [0, 1]`.
    pub n_x: usize,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_theta")]
    pub theta_scheme: f64,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_x < 32 {
            return Err(Error::validation("oracle.n_x", "need at least 32 intervals"));
        }
        if !(self.dt > 0.0 && self.t_end > 0.0) {
            return Err(Error::validation("oracle.dt", "dt and t_end must be positive"));
        }
        if !(0.5..=1.0).contains(&self.theta_scheme) {
            return Err(Error::validation("oracle.theta_scheme", "must lie in [0.5, 1]"));
        }
        if self.output_stride == 0 {
            return Err(Error::validation("oracle.output_stride", "must be at least 1"));
        }
        Ok(())
    }
}

/// Oracle state at one output time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSnapshot {
    pub t: f64,
    pub l: f64,
    /// Substrate at the nodes `ξ_k = k/n_x`, `c[k][j]`.
    pub c: Vec<Vec<f64>>,
    /// Biomass at the cell centres, `x[i][s]`.
    pub x: Vec<Vec<f64>>,
}

impl OracleSnapshot {
    /// Substrate `j` at physical position `z` (linear in `ξ`).
    pub fn substrate_at(&self, j: usize, z: f64) -> f64 {
        let n = self.c.len() - 1;
        let xi = (z / self.l).clamp(0.0, 1.0) * n as f64;
        let k = (xi.floor() as usize).min(n - 1);
        let w = xi - k as f64;
        (1.0 - w) * self.c[k][j] + w * self.c[k + 1][j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleOutput {
    pub snapshots: Vec<OracleSnapshot>,
    pub boundary: Vec<(f64, f64)>,
}

struct State {
    t: f64,
    l: f64,
    c: Vec<Vec<f64>>,
    x: Vec<Vec<f64>>,
}

/// Solve `A y = d` for tridiagonal `A` with sub/main/super diagonals.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], d: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut y = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    y[0] = d[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / m } else { 0.0 };
        y[i] = (d[i] - sub[i] * y[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        y[i] -= c[i] * y[i + 1];
    }
    y
}

struct Oracle<'a> {
    p: &'a Problem,
    cfg: &'a OracleConfig,
    n: usize,
    h: f64,
}

impl Oracle<'_> {
    fn cell_c(&self, c: &[Vec<f64>], i: usize) -> Vec<f64> {
        c[i].iter().zip(&c[i + 1]).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    fn node_x(&self, x: &[Vec<f64>], k: usize) -> Vec<f64> {
        if k == 0 {
            x[0].clone()
        } else if k == self.n {
            x[self.n - 1].clone()
        } else {
            x[k - 1].iter().zip(&x[k]).map(|(a, b)| 0.5 * (a + b)).collect()
        }
    }

    /// Cell growth rates, face velocities `u` and `L̇`.
    fn growth(&self, l: f64, x: &[Vec<f64>], c: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<f64>, f64)> {
        let mut h_tilde = Vec::with_capacity(self.n);
        let mut u = vec![0.0; self.n + 1];
        for i in 0..self.n {
            let g = self.p.kinetics.eval_growth_terms(&x[i], &self.cell_c(c, i))?;
            u[i + 1] = u[i] + l * self.h * g.r;
            h_tilde.push(g.h_tilde);
        }
        let ldot = u[self.n] + self.p.sigma.rate(l);
        Ok((h_tilde, u, ldot))
    }

    /// Right-hand side of the biomass equation.
    fn biomass_rate(
        &self,
        l: f64,
        x: &[Vec<f64>],
        h_tilde: &[Vec<f64>],
        u: &[f64],
        ldot: f64,
    ) -> Result<Vec<Vec<f64>>> {
        let w: Vec<f64> = (0..=self.n).map(|f| (u[f] - f as f64 * self.h * ldot) / l).collect();
        let courant = w.iter().map(|v| v.abs()).fold(0.0, f64::max) * self.cfg.dt / self.h;
        if courant > 1.0 {
            return Err(Error::CflViolation { courant });
        }
        let species = x[0].len();
        let flux = |f: usize, s: usize| -> f64 {
            if f == 0 {
                return 0.0;
            }
            let up = if f == self.n || w[f] >= 0.0 { f - 1 } else { f };
            w[f] * x[up][s]
        };
        Ok((0..self.n)
            .map(|i| {
                (0..species)
                    .map(|s| -(flux(i + 1, s) - flux(i, s)) / self.h - ldot / l * x[i][s] + h_tilde[i][s])
                    .collect()
            })
            .collect())
    }

    fn sources(&self, x: &[Vec<f64>], c: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        (0..=self.n).map(|k| self.p.kinetics.eval_substrate_sources(&self.node_x(x, k), &c[k])).collect()
    }

    /// θ-scheme for substrate `j` from `(l0, ld0)` to `(l1, ld1)` with
    /// sources `f0`, `f1`.
    #[allow(clippy::too_many_arguments)]
    fn diffuse(
        &self,
        j: usize,
        t1: f64,
        c0: &[f64],
        (l0, ld0): (f64, f64),
        (l1, ld1): (f64, f64),
        f0: &[f64],
        f1: &[f64],
    ) -> Vec<f64> {
        let (n, h, dt, th) = (self.n, self.h, self.cfg.dt, self.cfg.theta_scheme);
        let setup = &self.p.substrates[j];
        let a_half: Vec<f64> = (0..n).map(|k| setup.family.diffusivity((k as f64 + 0.5) * h * l1)).collect();
        let a0_half: Vec<f64> = (0..n).map(|k| setup.family.diffusivity((k as f64 + 0.5) * h * l0)).collect();
        let psi1 = setup.boundary.psi.value(t1);
        let psi0 = setup.boundary.psi.value(t1 - dt);
        // Robin: g_ξ = L β (ψ − k g) at ξ = 1 with β = D*/(h D)
        let robin = match setup.boundary.kind {
            BoundaryKind::NeumannRobin { h: hr, k, d_star } if hr > 0.0 => Some((hr, k, d_star)),
            _ => None,
        };
        let dirichlet_value = match setup.boundary.kind {
            BoundaryKind::NeumannRobin { k, .. } => psi1 / k,
            BoundaryKind::DirichletNeumann => psi1,
        };
        // row k of the spatial operator as (lower, centre, upper, constant)
        let row = |k: usize, l: f64, ld: f64, a: &[f64], psi: f64| -> (f64, f64, f64, f64) {
            let inv = 1.0 / (l * l * h * h);
            let adv = k as f64 * h * ld / l / (2.0 * h);
            if k == 0 {
                let am = a[0];
                return (0.0, -2.0 * am * inv, 2.0 * am * inv, 0.0);
            }
            if k == n {
                let (hr, kk, ds) = robin.expect("Robin row");
                let am = a[n - 1];
                let d_top = setup.family.diffusivity(l);
                let beta = ds / (hr * d_top);
                // ghost g_{n+1} = g_{n−1} + 2h L β (ψ − k g_n)
                let g = 2.0 * h * l * beta;
                let lower = 2.0 * am * inv;
                let centre = -2.0 * am * inv - am * inv * g * kk - adv * g * kk;
                let constant = am * inv * g * psi + adv * g * psi;
                return (lower, centre, 0.0, constant);
            }
            let (am, ap) = (a[k - 1], a[k]);
            (am * inv - adv, -(am + ap) * inv, ap * inv + adv, 0.0)
        };
        let mut sub = vec![0.0; n + 1];
        let mut diag = vec![0.0; n + 1];
        let mut sup = vec![0.0; n + 1];
        let mut rhs = vec![0.0; n + 1];
        for k in 0..=n {
            if k == n && robin.is_none() {
                diag[k] = 1.0;
                rhs[k] = dirichlet_value;
                continue;
            }
            let (lo0, ce0, up0, k0) = row(k, l0, ld0, &a0_half, psi0);
            let (lo1, ce1, up1, k1) = row(k, l1, ld1, &a_half, psi1);
            let mut explicit = ce0 * c0[k] + k0;
            if k > 0 {
                explicit += lo0 * c0[k - 1];
            }
            if k < n {
                explicit += up0 * c0[k + 1];
            }
            sub[k] = -dt * th * lo1;
            diag[k] = 1.0 - dt * th * ce1;
            sup[k] = -dt * th * up1;
            rhs[k] = c0[k] + dt * (1.0 - th) * explicit + dt * th * k1 + dt * ((1.0 - th) * f0[k] + th * f1[k]);
        }
        thomas(&sub, &diag, &sup, &rhs)
    }

    fn step(&self, s: &State) -> Result<State> {
        let dt = self.cfg.dt;
        let (ht0, u0, ld0) = self.growth(s.l, &s.x, &s.c)?;
        let r0 = self.biomass_rate(s.l, &s.x, &ht0, &u0, ld0)?;
        let euler = |x: &[Vec<f64>], r: &[Vec<f64>], scale: f64| -> Vec<Vec<f64>> {
            x.iter().zip(r).map(|(a, b)| a.iter().zip(b).map(|(a, b)| a + scale * dt * b).collect()).collect()
        };
        let x_pred = euler(&s.x, &r0, 1.0);
        let l_pred = s.l + dt * ld0;
        let (ht1, u1, ld1) = self.growth(l_pred, &x_pred, &s.c)?;
        let r1 = self.biomass_rate(l_pred, &x_pred, &ht1, &u1, ld1)?;
        let x_new: Vec<Vec<f64>> = s
            .x
            .iter()
            .zip(r0.iter().zip(&r1))
            .map(|(a, (p, q))| a.iter().zip(p.iter().zip(q)).map(|(a, (p, q))| a + 0.5 * dt * (p + q)).collect())
            .collect();
        let l_new = s.l + 0.5 * dt * (ld0 + ld1);
        if !(l_new > 0.0) || x_new.iter().flatten().any(|v| !v.is_finite() || *v < -1e-10) {
            return Err(Error::NonPhysicalState(format!("biomass at t = {}", s.t + dt)));
        }
        let x_new: Vec<Vec<f64>> = x_new.into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect();

        let t1 = s.t + dt;
        let f0 = self.sources(&s.x, &s.c)?;
        let m = self.p.kinetics.m;
        let mut c_new = s.c.clone();
        for _pass in 0..2 {
            let (_, _, ld_new) = self.growth(l_new, &x_new, &c_new)?;
            let f1 = self.sources(&x_new, &c_new)?;
            let mut next = vec![vec![0.0; m]; self.n + 1];
            for j in 0..m {
                let col0: Vec<f64> = s.c.iter().map(|r| r[j]).collect();
                let f0j: Vec<f64> = f0.iter().map(|r| r[j]).collect();
                let f1j: Vec<f64> = f1.iter().map(|r| r[j]).collect();
                let col = self.diffuse(j, t1, &col0, (s.l, ld0), (l_new, ld_new), &f0j, &f1j);
                for (k, v) in col.into_iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::NonPhysicalState(format!("substrate {j} at t = {t1}")));
                    }
                    next[k][j] = v.max(0.0);
                }
            }
            c_new = next;
        }
        Ok(State { t: t1, l: l_new, c: c_new, x: x_new })
    }
}

/// March the problem with the front-fixing scheme.
pub fn solve_front_fixed(problem: &Problem, cfg: &OracleConfig) -> Result<OracleOutput> {
    cfg.validate()?;
    let n = cfg.n_x;
    let h = 1.0 / n as f64;
    let oracle = Oracle { p: problem, cfg, n, h };
    let l0 = problem.l0;
    let c = (0..=n)
        .map(|k| problem.substrates.iter().map(|s| s.initial.value(k as f64 * h * l0)).collect())
        .collect();
    let x = (0..n)
        .map(|i| problem.species.iter().map(|s| s.value((i as f64 + 0.5) * h * l0)).collect())
        .collect();
    let mut state = State { t: 0.0, l: l0, c, x };
    let snap = |s: &State| OracleSnapshot { t: s.t, l: s.l, c: s.c.clone(), x: s.x.clone() };
    let steps = ((cfg.t_end / cfg.dt).round() as usize).max(1);
    let mut out = OracleOutput { snapshots: vec![snap(&state)], boundary: vec![(0.0, l0)] };
    for step in 1..=steps {
        state = oracle.step(&state).map_err(|e| e.at_step(step, state.t + cfg.dt))?;
        out.boundary.push((state.t, state.l));
        if step % cfg.output_stride == 0 || step == steps {
            out.snapshots.push(snap(&state));
        }
    }
    Ok(out)
}

/// Sup differences between an integral-equation run and the oracle at
/// their common output times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleComparison {
    /// Sup over common snapshots and positions of `|C − C_oracle|`.
    pub substrate: f64,
    /// Sup over common boundary samples of `|L − L_oracle| / L_oracle`.
    pub thickness_rel: f64,
    pub snapshots_compared: usize,
    pub boundary_samples_compared: usize,
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

pub fn compare_with_oracle(run: &SimulationOutput, oracle: &OracleOutput) -> OracleComparison {
    let mut cmp = OracleComparison { substrate: 0.0, thickness_rel: 0.0, snapshots_compared: 0, boundary_samples_compared: 0 };
    for s in &run.snapshots {
        let Some(o) = oracle.snapshots.iter().find(|o| same_time(o.t, s.t)) else { continue };
        cmp.snapshots_compared += 1;
        for (z, c) in s.z.iter().zip(&s.c) {
            for (j, v) in c.iter().enumerate() {
                cmp.substrate = cmp.substrate.max((v - o.substrate_at(j, *z)).abs());
            }
        }
    }
    let mut k = 0;
    for &(t, l) in &run.boundary {
        while k < oracle.boundary.len() && oracle.boundary[k].0 < t && !same_time(oracle.boundary[k].0, t) {
            k += 1;
        }
        if let Some(&(to, lo)) = oracle.boundary.get(k) {
            if same_time(to, t) {
                cmp.boundary_samples_compared += 1;
                cmp.thickness_rel = cmp.thickness_rel.max((l - lo).abs() / lo);
            }
        }
    }
    cmp
}
