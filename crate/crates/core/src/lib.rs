//! Integral-equation solver for the one-dimensional free-boundary biofilm
//! model: biomass transported along characteristics, substrates diffusing
//! in the moving layer, and the layer thickness driven by growth and
//! attachment or detachment.

pub mod biomass;
pub mod certificate;
pub mod config;
pub mod driver;
pub mod error;
pub mod free_boundary;
pub mod kernels;
pub mod kinetics;
pub mod oracle;
pub mod output;
pub mod parametrix;
pub mod rules;
pub mod signal;
pub mod substrate;

pub use certificate::{compute_certificate, CertificateReport, Verdict};
pub use driver::{run_simulation, MarchConfig, Problem, SimulationOutput, Snapshot, SubstrateSetup};
pub use error::{Error, Result};
pub use free_boundary::{SigmaLaw, SigmaMode};
pub use kinetics::{KineticsSpec, MonodSpecies};
pub use oracle::{compare_with_oracle, solve_front_fixed, OracleComparison, OracleConfig, OracleOutput};
pub use parametrix::{DiffusivityField, GammaFamily, ParametrixConfig};
pub use signal::{PiecewisePoly, SharedSignal, Signal};
pub use substrate::{BoundarySpec, HeatFamily, KernelFamily, RepresentationMode};
