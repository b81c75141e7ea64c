//! Biofilm thickness `L(t)`: `dL/dt = u(L, t)` without exchange,
//! `u(L, t) − σ_d(L)` under detachment and `u(L, t) + σ_a(L)` under
//! attachment.

use serde::{Deserialize, Serialize};

use crate::biomass::{interpolate, BiomassState};
use crate::error::{Error, Result};

/// Exchange rate law `σ(L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaLaw {
    Constant { rate: f64 },
    Linear { rate: f64 },
    Quadratic { rate: f64 },
}

impl SigmaLaw {
    pub fn eval(&self, l: f64) -> f64 {
        match *self {
            SigmaLaw::Constant { rate } => rate,
            SigmaLaw::Linear { rate } => rate * l,
            SigmaLaw::Quadratic { rate } => rate * l * l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaMode {
    None,
    Detach(SigmaLaw),
    Attach(SigmaLaw),
}

impl SigmaMode {
    /// Signed exchange contribution to `dL/dt`.
    pub fn rate(&self, l: f64) -> f64 {
        match self {
            SigmaMode::None => 0.0,
            SigmaMode::Detach(law) => -law.eval(l),
            SigmaMode::Attach(law) => law.eval(l),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeBoundaryState {
    pub l0: f64,
    pub l: f64,
    pub ldot: f64,
    pub t: f64,
    pub l_min: f64,
    pub mode: SigmaMode,
    /// `(t, L)` samples, strictly increasing in `t`.
    pub history: Vec<(f64, f64)>,
}

impl FreeBoundaryState {
    pub fn new(l0: f64, u_at_l: f64, mode: SigmaMode, l_min: Option<f64>) -> Self {
        Self {
            l0,
            l: l0,
            ldot: u_at_l + mode.rate(l0),
            t: 0.0,
            l_min: l_min.unwrap_or(1e-6 * l0),
            mode,
            history: vec![(0.0, l0)],
        }
    }

    /// Advance to `t + dt`. `u_prev`, `u_next` are `u(L)` at the two time
    /// levels (the latter from the current iterate) and `eta_top` is
    /// `η(L0, t + dt)`, which is the boundary itself when there is no
    /// exchange.
    pub fn step_boundary(&self, u_prev: f64, u_next: f64, eta_top: f64, dt: f64) -> Result<Self> {
        debug_assert!(dt > 0.0);
        let t = self.t + dt;
        let (l, ldot) = match self.mode {
            SigmaMode::None => (eta_top, u_next),
            mode => {
                let f0 = u_prev + mode.rate(self.l);
                let predictor = self.l + dt * f0;
                let l = self.l + 0.5 * dt * (f0 + u_next + mode.rate(predictor));
                (l, u_next + mode.rate(l))
            }
        };
        if !(l > self.l_min) {
            return Err(Error::ExtinctionReached { thickness: l, floor: self.l_min });
        }
        let mut history = self.history.clone();
        history.push((t, l));
        Ok(Self { l, ldot, t, history, ..self.clone() })
    }

    /// Check `|L(t) − L(τ)| ≤ M (t − τ)` and `L0/2 ≤ L ≤ 3 L0/2` on the
    /// recorded trajectory up to `t_max`.
    pub fn trajectory_bounds_hold(&self, m: f64, t_max: f64) -> bool {
        let window: Vec<_> = self.history.iter().filter(|(t, _)| *t <= t_max).collect();
        let lipschitz = window.windows(2).all(|w| (w[1].1 - w[0].1).abs() <= m * (w[1].0 - w[0].0) * (1.0 + 1e-12));
        let range = window.iter().all(|(_, l)| *l >= 0.5 * self.l0 && *l <= 1.5 * self.l0);
        lipschitz && range
    }
}

/// Material coordinate `z0*` with `η(z0*, t) = L(t)`.
///
/// Detachment: nodes above the first one at or beyond `L` are removed.
/// Attachment: a node carrying `mix` is appended at `η = L` whenever the
/// boundary has moved more than `min_spacing` past the top node.
pub fn trim_domain(
    fb: &FreeBoundaryState,
    biomass: &mut BiomassState,
    mix: Option<&[f64]>,
    min_spacing: f64,
) -> Result<f64> {
    let top = *biomass.eta.last().expect("non-empty grid");
    match fb.mode {
        SigmaMode::None => Ok(*biomass.z0.last().expect("non-empty grid")),
        SigmaMode::Detach(_) => {
            if fb.l > top * (1.0 + 1e-12) {
                return Err(Error::BoundaryOutsideDomain { thickness: fb.l, top });
            }
            // bisection on the monotone node sequence
            let (mut lo, mut hi) = (0usize, biomass.len() - 1);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if biomass.eta[mid] < fb.l {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let z0_star = interpolate(&biomass.eta[lo..=hi], &biomass.z0[lo..=hi], fb.l);
            let keep = hi + 1;
            biomass.z0.truncate(keep);
            biomass.eta.truncate(keep);
            biomass.jac.truncate(keep);
            biomass.u.truncate(keep);
            biomass.x.truncate(keep);
            Ok(z0_star)
        }
        SigmaMode::Attach(_) => {
            if fb.l > top + min_spacing {
                let last = biomass.len() - 1;
                let jac = biomass.jac[last];
                let z0 = biomass.z0[last] + (fb.l - top) / jac;
                let u = biomass.u[last];
                let x = mix.map(|m| m.to_vec()).unwrap_or_else(|| biomass.x[last].clone());
                biomass.z0.push(z0);
                biomass.eta.push(fb.l);
                biomass.jac.push(jac);
                biomass.u.push(u);
                biomass.x.push(x);
            }
            Ok(interpolate(&biomass.eta, &biomass.z0, fb.l))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biomass::{step_characteristics, MaterialGrid};
    use crate::kinetics::{CustomTerms, KineticsSpec};

    #[test]
    fn static_boundary() {
        let fb = FreeBoundaryState::new(1.0, 0.0, SigmaMode::None, None);
        let next = fb.step_boundary(0.0, 0.0, 1.0, 0.1).unwrap();
        assert_eq!(next.l, 1.0);
    }

    #[test]
    fn linear_detachment_is_exact() {
        let mut fb = FreeBoundaryState::new(1.0, 0.0, SigmaMode::Detach(SigmaLaw::Constant { rate: 0.05 }), None);
        for _ in 0..1000 {
            fb = fb.step_boundary(0.0, 0.0, 1.0, 1e-2).unwrap();
        }
        assert!((fb.l - (1.0 - 0.05 * fb.t)).abs() < 1e-10);
    }

    #[test]
    fn extinction() {
        let fb = FreeBoundaryState::new(1.0, 0.0, SigmaMode::Detach(SigmaLaw::Constant { rate: 2.0 }), None);
        assert!(matches!(fb.step_boundary(0.0, 0.0, 1.0, 1.0), Err(Error::ExtinctionReached { .. })));
    }

    fn constant_r(c: f64) -> KineticsSpec {
        KineticsSpec::custom(vec![1.0], 1, CustomTerms::new(move |x, _, h| h[0] = c * x[0], |_, _, f| f[0] = 0.0))
            .unwrap()
    }

    #[test]
    fn exponential_growth_without_exchange() {
        let spec = constant_r(0.1);
        let grid = MaterialGrid::uniform(1.0, 16).unwrap();
        let c = vec![vec![1.0]; 17];
        let mut b = BiomassState::initial(&grid, vec![vec![1.0]; 17], &c, &spec).unwrap();
        let mut fb = FreeBoundaryState::new(1.0, *b.u.last().unwrap(), SigmaMode::None, None);
        for _ in 0..1000 {
            let next = step_characteristics(&b, &c, &c, &spec, 1e-3, None).unwrap();
            fb = fb.step_boundary(*b.u.last().unwrap(), *next.u.last().unwrap(), *next.eta.last().unwrap(), 1e-3).unwrap();
            b = next;
            assert!((fb.l - b.eta.last().unwrap()).abs() <= 1e-10);
        }
        assert!((fb.l - 0.1f64.exp()).abs() < 1e-6);
    }

    #[test]
    fn balanced_detachment_trims_to_closed_form() {
        let c_rate = 0.2;
        let spec = constant_r(c_rate);
        let grid = MaterialGrid::uniform(1.0, 64).unwrap();
        let c = vec![vec![1.0]; 65];
        let mut b = BiomassState::initial(&grid, vec![vec![1.0]; 65], &c, &spec).unwrap();
        let mode = SigmaMode::Detach(SigmaLaw::Linear { rate: c_rate });
        let mut fb = FreeBoundaryState::new(1.0, c_rate, mode, None);
        let dt = 1e-3;
        let mut z0_star = 1.0;
        for _ in 0..500 {
            let next = step_characteristics(&b, &c, &c, &spec, dt, None).unwrap();
            let u0 = b.interpolate(&b.u, fb.l);
            let u1 = next.interpolate(&next.u, fb.l);
            fb = fb.step_boundary(u0, u1, *next.eta.last().unwrap(), dt).unwrap();
            b = next;
            z0_star = trim_domain(&fb, &mut b, None, 0.0).unwrap();
        }
        assert!((fb.l - 1.0).abs() < 1e-9);
        let expected = (-c_rate * fb.t).exp();
        assert!((z0_star - expected).abs() < 1e-6, "{z0_star} vs {expected}");
    }

    #[test]
    fn quiescent_detachment_trims_to_boundary() {
        let spec = constant_r(0.0);
        let grid = MaterialGrid::uniform(1.0, 16).unwrap();
        let c = vec![vec![1.0]; 17];
        let mut b = BiomassState::initial(&grid, vec![vec![1.0]; 17], &c, &spec).unwrap();
        let mut fb = FreeBoundaryState::new(1.0, 0.0, SigmaMode::Detach(SigmaLaw::Constant { rate: 0.05 }), None);
        fb = fb.step_boundary(0.0, 0.0, 1.0, 2.0).unwrap();
        let z = trim_domain(&fb, &mut b, None, 0.0).unwrap();
        assert!((z - 0.9).abs() < 1e-14);
        assert!(*b.eta.last().unwrap() >= 0.9);
    }

    #[test]
    fn detachment_cannot_exceed_top() {
        let spec = constant_r(0.0);
        let grid = MaterialGrid::uniform(1.0, 16).unwrap();
        let c = vec![vec![1.0]; 17];
        let mut b = BiomassState::initial(&grid, vec![vec![1.0]; 17], &c, &spec).unwrap();
        let mut fb = FreeBoundaryState::new(1.0, 0.0, SigmaMode::Detach(SigmaLaw::Constant { rate: 0.0 }), None);
        fb.l = 1.5;
        assert!(matches!(trim_domain(&fb, &mut b, None, 0.0), Err(Error::BoundaryOutsideDomain { .. })));
    }

    #[test]
    fn attachment_appends_nodes() {
        let spec = constant_r(0.0);
        let grid = MaterialGrid::uniform(1.0, 16).unwrap();
        let c = vec![vec![1.0]; 17];
        let mut b = BiomassState::initial(&grid, vec![vec![1.0]; 17], &c, &spec).unwrap();
        let mut fb = FreeBoundaryState::new(1.0, 0.0, SigmaMode::Attach(SigmaLaw::Constant { rate: 0.1 }), None);
        fb = fb.step_boundary(0.0, 0.0, 1.0, 1.0).unwrap();
        let z = trim_domain(&fb, &mut b, Some(&[0.5]), 0.01).unwrap();
        assert_eq!(b.len(), 18);
        assert!((z - 1.1).abs() < 1e-12);
        assert_eq!(b.x[17], vec![0.5]);
    }
}
