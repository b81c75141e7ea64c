//! TOML run configuration.
//!
//! ```toml
//! [domain]
//! L0 = 0.1
//! n = 1
//! m = 1
//! t_end = 1.0
//! dt = 0.005
//! N_z = 32
//!
//! [species.1]
//! rho = 1.0
//! mu_max = 4.0
//! K_S = [0.5]
//! Y = [0.5]
//! phi = { breakpoints = [0.0, 0.1], coeffs = [[1.0]] }
//!
//! [substrate.1]
//! D = 1.0
//! phi = { breakpoints = [0.0, 0.1], coeffs = [[1.0]] }
//! psi = { breakpoints = [0.0, 1.0], coeffs = [[1.0]] }
//!
//! [boundary]
//! kind = "dirichlet"
//! ```
//!
//! Unknown keys are errors. Every optional key is filled with its default
//! on parse, so serializing a parsed config records the defaults.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::driver::{MarchConfig, Problem, SubstrateSetup};
use crate::error::{Error, Result};
use crate::free_boundary::{SigmaLaw, SigmaMode};
use crate::kinetics::{KineticsSpec, MonodSpecies};
use crate::oracle::OracleConfig;
use crate::parametrix::{build_gamma, DiffusivityField, GammaFamily, ParametrixConfig};
use crate::signal::{PiecewisePoly, SharedSignal};
use crate::substrate::{BoundarySpec, HeatFamily, KernelFamily, RepresentationMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    #[serde(rename = "L0")]
    pub l0: f64,
    pub n: usize,
    pub m: usize,
    pub t_end: f64,
    pub dt: f64,
    /// Material intervals on `[0, L0]`.
    #[serde(rename = "N_z")]
    pub n_z: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesSection {
    pub rho: f64,
    pub mu_max: f64,
    /// One half-saturation constant per consumed substrate.
    #[serde(rename = "K_S")]
    pub k_s: Vec<f64>,
    /// One yield per consumed substrate.
    #[serde(rename = "Y")]
    pub yields: Vec<f64>,
    #[serde(default)]
    pub decay: f64,
    /// Consumed substrates, 1-based; all of them when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substrates: Option<Vec<usize>>,
    pub phi: PiecewisePoly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstrateSection {
    #[serde(rename = "D")]
    pub d: f64,
    pub phi: PiecewisePoly,
    pub psi: PiecewisePoly,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKindName {
    #[default]
    Dirichlet,
    Robin,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaName {
    #[default]
    None,
    Detach,
    Attach,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaLawName {
    #[default]
    Constant,
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundarySection {
    pub kind: BoundaryKindName,
    /// Mass-transfer layer thickness (Robin only).
    pub h: f64,
    /// Transfer coefficient (Robin only).
    pub k: f64,
    /// Diffusivity in the transfer layer (Robin only).
    #[serde(rename = "Dstar")]
    pub d_star: f64,
    pub sigma: SigmaName,
    pub sigma_law: SigmaLawName,
    pub sigma_rate: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusivityKind {
    #[default]
    Constant,
    Variable,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusivitySection {
    #[serde(default)]
    pub kind: DiffusivityKind,
    /// Free-liquid diffusivity for every substrate; each substrate's `D`
    /// when omitted.
    #[serde(rename = "D0", default, skip_serializing_if = "Option::is_none")]
    pub d0: Option<f64>,
    /// Porosity `p(z)`, giving `D(z) = D0 exp(−√(1 − p))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub porosity: Option<PiecewisePoly>,
}

fn default_order() -> usize {
    ParametrixConfig::default().series_order
}
fn default_nodes() -> usize {
    ParametrixConfig::default().space_quad_nodes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsSection {
    pub picard_tol: f64,
    pub max_iter: usize,
    /// Steps between rebaselines; `0` keeps the full history.
    pub rebaseline_every: usize,
    pub mode: RepresentationMode,
    pub parametrix_order: usize,
    pub residual_budget: f64,
    pub max_halvings: usize,
    /// Worker threads; `0` uses every available core.
    pub threads: usize,
    pub space_quad_nodes: usize,
    pub time_quad_nodes: usize,
}

impl Default for NumericsSection {
    fn default() -> Self {
        let m = MarchConfig::new(1.0, 1.0);
        Self {
            picard_tol: m.picard_tol,
            max_iter: m.picard_max_iter,
            rebaseline_every: m.rebaseline_every.unwrap_or(0),
            mode: RepresentationMode::default(),
            parametrix_order: default_order(),
            residual_budget: m.residual_budget,
            max_halvings: m.max_halvings,
            threads: 0,
            space_quad_nodes: default_nodes(),
            time_quad_nodes: default_nodes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    #[serde(rename = "N_x")]
    pub n_x: usize,
    /// Oracle time step; the run's `dt` when zero.
    pub dt: f64,
    pub theta_scheme: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { n_x: 256, dt: 0.0, theta_scheme: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    JsonLines,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub stride: usize,
    pub format: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), stride: 1, format: OutputFormat::Csv }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub domain: DomainSection,
    pub species: BTreeMap<String, SpeciesSection>,
    pub substrate: BTreeMap<String, SubstrateSection>,
    #[serde(default)]
    pub boundary: BoundarySection,
    #[serde(default)]
    pub diffusivity: DiffusivitySection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Parse and validate a configuration.
pub fn parse_config(text: &str) -> Result<SimulationConfig> {
    let cfg: SimulationConfig = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<SimulationConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Unknown and missing keys become validation errors naming the key; the
/// rest carry the position of the offending text.
fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let msg = e.message();
    for prefix in ["unknown field `", "missing field `"] {
        if let Some(rest) = msg.strip_prefix(prefix) {
            let key = rest.split('`').next().unwrap_or_default();
            return Error::validation(key, msg);
        }
    }
    let offset = e.span().map_or(0, |s| s.start).min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    Error::Parse { line, column, message: msg.to_string() }
}

/// Entries `"1"..="count"` of a numbered section, in order.
fn numbered<'a, T>(map: &'a BTreeMap<String, T>, count: usize, section: &str) -> Result<Vec<&'a T>> {
    if map.len() != count {
        return Err(Error::validation(section, format!("expected {count} entries, found {}", map.len())));
    }
    (1..=count)
        .map(|i| map.get(&i.to_string()).ok_or_else(|| Error::validation(format!("{section}.{i}"), "missing entry")))
        .collect()
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if !(d.l0 > 0.0 && d.l0.is_finite()) {
            return Err(Error::validation("domain.L0", "must be positive"));
        }
        if !(d.t_end >= 0.0 && d.t_end.is_finite()) {
            return Err(Error::validation("domain.t_end", "must be non-negative"));
        }
        if d.n == 0 {
            return Err(Error::validation("domain.n", "need at least one species"));
        }
        for (i, sp) in numbered(&self.species, d.n, "species")?.into_iter().enumerate() {
            sp.phi.validate(&format!("species.{}.phi", i + 1))?;
            let consumed = sp.substrates.as_ref().map_or(d.m, Vec::len);
            if sp.k_s.len() != consumed {
                return Err(Error::validation(format!("species.{}.K_S", i + 1), "one entry per consumed substrate"));
            }
            if sp.yields.len() != consumed {
                return Err(Error::validation(format!("species.{}.Y", i + 1), "one entry per consumed substrate"));
            }
            if let Some(list) = &sp.substrates {
                if list.iter().any(|&j| j == 0 || j > d.m) {
                    return Err(Error::validation(format!("species.{}.substrates", i + 1), "indices run from 1 to m"));
                }
            }
        }
        for (j, sub) in numbered(&self.substrate, d.m, "substrate")?.into_iter().enumerate() {
            if !(sub.d > 0.0 && sub.d.is_finite()) {
                return Err(Error::validation(format!("substrate.{}.D", j + 1), "must be positive"));
            }
            sub.phi.validate(&format!("substrate.{}.phi", j + 1))?;
            sub.psi.validate(&format!("substrate.{}.psi", j + 1))?;
        }
        let b = &self.boundary;
        if b.kind == BoundaryKindName::Robin {
            if !(b.h >= 0.0) {
                return Err(Error::validation("boundary.h", "must be non-negative"));
            }
            if !(b.k > 0.0) {
                return Err(Error::validation("boundary.k", "must be positive"));
            }
            if !(b.d_star > 0.0) {
                return Err(Error::validation("boundary.Dstar", "must be positive"));
            }
        }
        if !(b.sigma_rate >= 0.0 && b.sigma_rate.is_finite()) {
            return Err(Error::validation("boundary.sigma_rate", "must be non-negative"));
        }
        let v = &self.diffusivity;
        match v.kind {
            DiffusivityKind::Constant if v.d0.is_some() || v.porosity.is_some() => {
                return Err(Error::validation("diffusivity.kind", "D0 and porosity need kind = \"variable\""));
            }
            DiffusivityKind::Variable => match &v.porosity {
                None => return Err(Error::validation("diffusivity.porosity", "required for variable diffusivity")),
                Some(p) => p.validate("diffusivity.porosity")?,
            },
            _ => {}
        }
        if matches!(v.d0, Some(x) if !(x > 0.0)) {
            return Err(Error::validation("diffusivity.D0", "must be positive"));
        }
        if self.output.stride == 0 {
            return Err(Error::validation("output.stride", "must be at least 1"));
        }
        self.march_config().validate()?;
        self.parametrix_config().validate()?;
        if d.t_end > 0.0 {
            self.oracle_config().validate()?;
        }
        Ok(())
    }

    pub fn march_config(&self) -> MarchConfig {
        let n = &self.numerics;
        MarchConfig {
            dt: self.domain.dt,
            t_end: self.domain.t_end,
            picard_tol: n.picard_tol,
            picard_max_iter: n.max_iter,
            rebaseline_every: (n.rebaseline_every > 0).then_some(n.rebaseline_every),
            output_stride: self.output.stride,
            residual_budget: n.residual_budget,
            max_halvings: n.max_halvings,
            threads: (n.threads > 0).then_some(n.threads),
        }
    }

    pub fn parametrix_config(&self) -> ParametrixConfig {
        let n = &self.numerics;
        ParametrixConfig {
            series_order: n.parametrix_order,
            space_quad_nodes: n.space_quad_nodes,
            time_quad_nodes: n.time_quad_nodes,
        }
    }

    pub fn oracle_config(&self) -> OracleConfig {
        let o = &self.oracle;
        OracleConfig {
            n_x: o.n_x,
            dt: if o.dt > 0.0 { o.dt } else { self.domain.dt },
            t_end: self.domain.t_end,
            theta_scheme: o.theta_scheme,
            output_stride: self.output.stride,
        }
    }

    pub fn kinetics(&self) -> Result<KineticsSpec> {
        let d = &self.domain;
        let species = numbered(&self.species, d.n, "species")?;
        let monod = species
            .iter()
            .map(|sp| MonodSpecies {
                mu_max: sp.mu_max,
                k_s: sp.k_s.clone(),
                decay: sp.decay,
                substrates: sp.substrates.as_ref().map_or_else(|| (0..d.m).collect(), |l| l.iter().map(|j| j - 1).collect()),
                yields: sp.yields.clone(),
            })
            .collect();
        KineticsSpec::monod(species.iter().map(|sp| sp.rho).collect(), d.m, monod)
    }

    fn family(&self, sub: &SubstrateSection) -> Result<Arc<dyn KernelFamily>> {
        let v = &self.diffusivity;
        match (&v.kind, &v.porosity) {
            (DiffusivityKind::Variable, Some(porosity)) => {
                let field = DiffusivityField::Porous { d0: v.d0.unwrap_or(sub.d), porosity: porosity.clone() };
                let (gamma, _) = build_gamma(field, self.parametrix_config())?;
                let l_max = porosity.breakpoints.last().copied().unwrap_or(0.0).max(self.domain.l0);
                let window = match self.numerics.rebaseline_every {
                    0 => self.domain.t_end,
                    k => self.domain.t_end.min(k as f64 * self.domain.dt),
                };
                Ok(Arc::new(GammaFamily::new(gamma, l_max, window.max(self.domain.dt))?))
            }
            _ => Ok(Arc::new(HeatFamily { d: sub.d })),
        }
    }

    pub fn sigma_mode(&self) -> SigmaMode {
        let b = &self.boundary;
        let law = match b.sigma_law {
            SigmaLawName::Constant => SigmaLaw::Constant { rate: b.sigma_rate },
            SigmaLawName::Linear => SigmaLaw::Linear { rate: b.sigma_rate },
            SigmaLawName::Quadratic => SigmaLaw::Quadratic { rate: b.sigma_rate },
        };
        match b.sigma {
            SigmaName::None => SigmaMode::None,
            SigmaName::Detach => SigmaMode::Detach(law),
            SigmaName::Attach => SigmaMode::Attach(law),
        }
    }

    /// Build the solver problem; `mode` overrides the configured representation.
    pub fn problem(&self, mode: Option<RepresentationMode>) -> Result<Problem> {
        let d = &self.domain;
        let species = numbered(&self.species, d.n, "species")?
            .into_iter()
            .map(|sp| Arc::new(sp.phi.clone()) as SharedSignal)
            .collect();
        let substrates = numbered(&self.substrate, d.m, "substrate")?
            .into_iter()
            .map(|sub| {
                let psi: SharedSignal = Arc::new(sub.psi.clone());
                let b = &self.boundary;
                let boundary = match b.kind {
                    BoundaryKindName::Dirichlet => BoundarySpec::dirichlet(psi),
                    BoundaryKindName::Robin => BoundarySpec::robin(psi, b.h, b.k, b.d_star),
                };
                Ok(SubstrateSetup { family: self.family(sub)?, boundary, initial: Arc::new(sub.phi.clone()) })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Problem {
            kinetics: self.kinetics()?,
            l0: d.l0,
            intervals: d.n_z,
            species,
            substrates,
            sigma: self.sigma_mode(),
            mode: mode.unwrap_or(self.numerics.mode),
        })
    }

    /// Canonical TOML with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
