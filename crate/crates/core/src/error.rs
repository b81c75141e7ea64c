use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the solver stack can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate time: t = {t} must exceed source time tau = {tau}")]
    DegenerateTime { t: f64, tau: f64 },
    #[error("guarded exponential ratio is singular at x = 0, delta = 0")]
    SingularAtOrigin,
    #[error("diffusivity a = {a} at ({z}, {t}) is not uniformly parabolic")]
    NonParabolic { z: f64, t: f64, a: f64 },
    #[error("parametrix series does not decrease at order {order}: {prev} -> {next}")]
    SeriesDivergence { order: usize, prev: f64, next: f64 },
    #[error("negative state {value} in {what}")]
    NegativeState { what: &'static str, value: f64 },
    #[error("characteristics jacobian collapsed at node {node}: {value}")]
    JacobianCollapse { node: usize, value: f64 },
    #[error("biofilm thickness {thickness} fell below the extinction floor {floor}")]
    ExtinctionReached { thickness: f64, floor: f64 },
    #[error("boundary L = {thickness} lies above the top characteristic {top}")]
    BoundaryOutsideDomain { thickness: f64, top: f64 },
    #[error("diagonal coefficient {coefficient} of the Volterra step is degenerate")]
    DiagonalDegeneracy { coefficient: f64 },
    #[error("history gap: {0}")]
    HistoryGap(String),
    #[error("Robin transfer coefficient k = {k} must be positive")]
    NonPhysicalRobin { k: f64 },
    #[error("Picard iteration did not converge in {iterations} iterations (last ratio {ratio})")]
    NonContraction { iterations: usize, ratio: f64 },
    #[error("profile unavailable for rebaseline: {0}")]
    ProfileUnavailable(String),
    #[error("data is not C1: {0}")]
    DataNotC1(String),
    #[error("CFL violation: Courant number {courant}")]
    CflViolation { courant: f64 },
    #[error("non-physical state: {0}")]
    NonPhysicalState(String),
    #[error("boundary residual {residual} exceeds budget {budget} after step halving")]
    BoundaryResidual { residual: f64, budget: f64 },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid configuration key `{key}`: {message}")]
    Validation { key: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("step {step} (t = {t}): {source}")]
    AtStep {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn validation(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { key: key.into(), message: message.into() }
    }

    pub fn at_step(self, step: usize, t: f64) -> Self {
        match self {
            e @ Error::AtStep { .. } => e,
            e => Error::AtStep { step, t, source: Box::new(e) },
        }
    }

    /// The innermost error, with step annotations stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            e => e,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
