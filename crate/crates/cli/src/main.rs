use std::path::{Path, PathBuf};
use std::process::ExitCode;

use biofilm_core::config::{parse_config, SimulationConfig};
use biofilm_core::kernels::verify_kernels;
use biofilm_core::output::{write_output, Provenance};
use biofilm_core::substrate::BoundaryKind;
use biofilm_core::{
    compare_with_oracle, compute_certificate, run_simulation, solve_front_fixed, Error, RepresentationMode,
};
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_CONFIG: u8 = 2;
const EXIT_UNCERTIFIED: u8 = 3;
const EXIT_SOLVER: u8 = 4;

#[derive(Parser)]
#[command(name = "biofilm-fbp", version, about = "Free-boundary biofilm growth solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    ImageCorrected,
    PaperLiteral,
}

impl From<Mode> for RepresentationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::ImageCorrected => RepresentationMode::ImageCorrected,
            Mode::PaperLiteral => RepresentationMode::PaperLiteral,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the integral-equation solver and write profiles and series.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `[output] directory`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Evaluate the existence and contraction constants.
    Certify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the kernel property suite.
    VerifyKernels {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Run the solver and the front-fixing finite-difference oracle and
    /// report their differences.
    CompareOracle {
        #[arg(long)]
        config: PathBuf,
    },
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Parse { .. } | Error::Validation { .. } | Error::DataNotC1(_) | Error::NonPhysicalRobin { .. } => {
                EXIT_CONFIG
            }
            _ => EXIT_SOLVER,
        };
        Failure { code, message: e.to_string() }
    }
}

fn load(path: &Path) -> Result<(String, SimulationConfig), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure { code: EXIT_CONFIG, message: format!("{}: {e}", path.display()) })?;
    let cfg = parse_config(&text)?;
    Ok((text, cfg))
}

fn simulate(config: &Path, out: Option<PathBuf>, mode: Option<Mode>) -> Result<u8, Failure> {
    let (text, cfg) = load(config)?;
    let mode = mode.map(RepresentationMode::from).unwrap_or(cfg.numerics.mode);
    let problem = cfg.problem(Some(mode))?;
    let rho = problem.kinetics.rho.clone();
    let robin = problem.substrates.iter().any(|s| matches!(s.boundary.kind, BoundaryKind::NeumannRobin { .. }));
    let output = run_simulation(problem, cfg.march_config())?;
    let dir = out.unwrap_or_else(|| cfg.output.directory.clone());
    let prov = Provenance::new(&text, mode);
    let files = write_output(&output, &dir, cfg.output.format, &prov, &rho, robin)?;
    let last = output.snapshots.last().expect("initial snapshot");
    println!("mode = {}", mode.as_str());
    println!("steps = {}", output.steps.len());
    println!("t = {:.6e}", last.t);
    println!("L = {:.16e}", last.l);
    println!("files = {} in {}", files.len(), dir.display());
    Ok(0)
}

fn certify(config: &Path) -> Result<u8, Failure> {
    let (_, cfg) = load(config)?;
    let problem = cfg.problem(None)?;
    let report = compute_certificate(&problem, cfg.domain.dt)?;
    println!("{report}");
    Ok(if report.certified() { 0 } else { EXIT_UNCERTIFIED })
}

fn verify(seed: u64, samples: usize) -> Result<u8, Failure> {
    let report = verify_kernels(seed, samples);
    for c in &report.checks {
        let verdict = if c.passed { "pass" } else { "FAIL" };
        println!("{verdict} {:<32} {:.3e} (< {:.1e})", c.name, c.measured, c.threshold);
    }
    Ok(if report.passed() { 0 } else { EXIT_SOLVER })
}

fn compare(config: &Path) -> Result<u8, Failure> {
    let (_, cfg) = load(config)?;
    let problem = cfg.problem(None)?;
    let psi_sup = problem
        .substrates
        .iter()
        .map(|s| biofilm_core::signal::sampled_sup(s.boundary.psi.as_ref(), 0.0, cfg.domain.t_end, 1024).0)
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let oracle = solve_front_fixed(&problem, &cfg.oracle_config())?;
    let run = run_simulation(problem, cfg.march_config())?;
    let cmp = compare_with_oracle(&run, &oracle);
    println!("snapshots compared = {}", cmp.snapshots_compared);
    println!("boundary samples compared = {}", cmp.boundary_samples_compared);
    println!("sup |C - C_oracle| / sup psi = {:.6e}", cmp.substrate / psi_sup);
    println!("sup |L - L_oracle| / L_oracle = {:.6e}", cmp.thickness_rel);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out, mode } => simulate(&config, out, mode),
        Command::Certify { config } => certify(&config),
        Command::VerifyKernels { seed, samples } => verify(seed, samples),
        Command::CompareOracle { config } => compare(&config),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
