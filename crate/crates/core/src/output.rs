//! Result files: one profile per emitted time plus a series file.
//!
//! CSV files open with `#` provenance lines (tool version, config hash,
//! representation mode) followed by a header row. Floats are written with
//! 17 significant digits, which round-trips every `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::OutputFormat;
use crate::driver::{SimulationOutput, Snapshot, StepRecord};
use crate::error::{Error, Result};
use crate::substrate::{verify_flux_zero, RepresentationMode};

/// Who produced a run and from what.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub mode: String,
}

impl Provenance {
    pub fn new(config_text: &str, mode: RepresentationMode) -> Self {
        Self {
            tool: "biofilm-fbp".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            mode: mode.as_str().into(),
        }
    }

    fn header(&self) -> String {
        format!(
            "# tool = {} {}\n# config_sha256 = {}\n# mode = {}\n",
            self.tool, self.version, self.config_sha256, self.mode
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Column names of a profile file.
pub fn profile_columns(species: usize, substrates: usize) -> Vec<String> {
    let mut cols: Vec<String> = vec!["z".into(), "z0".into(), "u".into()];
    cols.extend((1..=species).map(|i| format!("X_{i}")));
    cols.extend((1..=species).map(|i| format!("f_{i}")));
    cols.extend((1..=substrates).map(|j| format!("C_{j}")));
    cols
}

/// Column names of the series file.
pub fn series_columns(substrates: usize, robin: bool) -> Vec<String> {
    let mut cols: Vec<String> = vec!["t".into(), "L".into(), "Ldot".into()];
    cols.extend((1..=substrates).map(|j| format!("theta_{j}")));
    cols.extend((1..=substrates).map(|j| format!("Phi_{j}")));
    if robin {
        cols.extend((1..=substrates).map(|j| format!("rho_{j}")));
    }
    cols.extend(["picard_iterations", "q_max", "boundary_residual", "flux_zero_residual"].map(String::from));
    cols
}

fn profile_rows(s: &Snapshot, rho: &[f64]) -> Vec<Vec<f64>> {
    (0..s.z.len())
        .map(|k| {
            let mut row = vec![s.z[k], s.z0[k], s.u[k]];
            row.extend(&s.x[k]);
            row.extend(s.x[k].iter().zip(rho).map(|(x, r)| x / r));
            row.extend(&s.c[k]);
            row
        })
        .collect()
}

fn series_row(s: &Snapshot, rec: Option<&StepRecord>, robin: bool) -> Vec<f64> {
    let mut row = vec![s.t, s.l, s.ldot];
    row.extend(&s.theta);
    row.extend(&s.phi);
    if robin {
        row.extend(&s.trace);
    }
    let (iters, q) = rec.map_or((0.0, 0.0), |r| {
        let it = r.picard.iter().map(|p| p.iterations).sum::<usize>() as f64;
        let q = r.picard.iter().flat_map(|p| p.ratios.iter().skip(1)).fold(0.0f64, |a, &b| a.max(b));
        (it, q)
    });
    let flux = (0..s.theta.len())
        .map(|j| {
            let col: Vec<f64> = s.c.iter().map(|c| c[j]).collect();
            verify_flux_zero(&s.z, &col)
        })
        .fold(0.0f64, f64::max);
    row.extend([iters, q, rec.map_or(0.0, |r| r.boundary_residual), flux]);
    row
}

fn csv(prov: &Provenance, extra: &str, cols: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = prov.header();
    out.push_str(extra);
    out.push_str(&cols.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.iter().map(|&v| num(v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct JsonProfile<'a> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    t: f64,
    columns: &'a [String],
    rows: Vec<Vec<f64>>,
}

/// Write `out` under `dir`, returning the files written.
pub fn write_output(
    out: &SimulationOutput,
    dir: &Path,
    format: OutputFormat,
    prov: &Provenance,
    rho: &[f64],
    robin: bool,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let species = rho.len();
    let substrates = out.snapshots.first().map_or(0, |s| s.theta.len());
    let pcols = profile_columns(species, substrates);
    let scols = series_columns(substrates, robin);
    let series: Vec<Vec<f64>> = out
        .snapshots
        .iter()
        .map(|s| series_row(s, out.steps.iter().find(|r| r.t == s.t), robin))
        .collect();
    let mut files = Vec::new();
    match format {
        OutputFormat::Csv => {
            for (k, s) in out.snapshots.iter().enumerate() {
                let path = dir.join(format!("profile_{k:05}.csv"));
                let text = csv(prov, &format!("# t = {}\n", num(s.t)), &pcols, &profile_rows(s, rho));
                fs::write(&path, text)?;
                files.push(path);
            }
            let path = dir.join("series.csv");
            fs::write(&path, csv(prov, "", &scols, &series))?;
            files.push(path);
        }
        OutputFormat::JsonLines => {
            let mut text = String::new();
            for s in &out.snapshots {
                let rec = JsonProfile { provenance: prov, t: s.t, columns: &pcols, rows: profile_rows(s, rho) };
                text.push_str(&serde_json::to_string(&rec).map_err(|e| Error::Io(e.to_string()))?);
                text.push('\n');
            }
            let path = dir.join("profiles.jsonl");
            fs::write(&path, text)?;
            files.push(path);
            let mut text = String::new();
            for row in &series {
                let obj: serde_json::Map<String, serde_json::Value> =
                    scols.iter().cloned().zip(row.iter().map(|&v| serde_json::json!(v))).collect();
                text.push_str(&serde_json::Value::Object(obj).to_string());
                text.push('\n');
            }
            let path = dir.join("series.jsonl");
            fs::write(&path, text)?;
            files.push(path);
        }
    }
    Ok(files)
}

/// A parsed CSV file: `#` lines, header and numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let text = fs::read_to_string(path)?;
    let mut comments = Vec::new();
    let mut lines = text.lines().filter(|l| {
        if let Some(c) = l.strip_prefix('#') {
            comments.push(c.trim().to_string());
            false
        } else {
            !l.is_empty()
        }
    });
    let columns = lines.next().map(|h| h.split(',').map(String::from).collect()).unwrap_or_default();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|v| v.parse::<f64>().map_err(|e| Error::Io(format!("{}: {e}", path.display()))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CsvTable { comments, columns, rows })
}
