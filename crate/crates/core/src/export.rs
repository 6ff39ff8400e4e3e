//! Plot-ready text files and run manifests.
//!
//! Data files are comma-separated with one header row. Floats use Rust's
//! shortest round-trip formatting, so identical values give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::ExperimentParams;
use crate::lyapunov::{lyapunov_v, CertificateParams, LyapunovConstants};
use crate::pure_state::{PureParams, SpectrumResult};
use crate::simulator::{EnsembleSummary, SimConfig, Trajectory};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const TRAJECTORY_HEADER: &str = "t,lambda,nu,V";
pub const SUMMARY_HEADER: &str = "t,mean_nu,mean_V,unconverged_fraction";
pub const SPECTRUM_HEADER: &str = "n,eigenvalue,physical_rate";
pub const COEFFICIENT_HEADER: &str = "n,k,a_k";

/// I/O failure tagged with the offending path.
#[derive(Debug, thiserror::Error)]
#[error("{path}: {source}")]
pub struct ExportError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExportError> {
    fs::write(path, contents).map_err(|source| ExportError {
        path: path.to_path_buf(),
        source,
    })
}

pub fn trajectory_csv(t: &Trajectory, k: &LyapunovConstants) -> String {
    let mut out = String::with_capacity(48 * t.times.len());
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for (time, s) in t.times.iter().zip(&t.states) {
        let _ = writeln!(out, "{},{},{},{}", time, s.lambda, s.nu, lyapunov_v(*s, k));
    }
    out
}

pub fn summary_csv(s: &EnsembleSummary) -> String {
    let mut out = String::with_capacity(64 * s.mean_nu_curve.len());
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for ((nu, v), u) in s
        .mean_nu_curve
        .iter()
        .zip(&s.mean_v_curve)
        .zip(&s.unconverged_curve)
    {
        let _ = writeln!(out, "{},{},{},{}", nu.0, nu.1, v.1, u.1);
    }
    out
}

pub fn spectrum_csv(s: &SpectrumResult) -> String {
    let mut out = String::from(SPECTRUM_HEADER);
    out.push('\n');
    for (i, (l, r)) in s.eigenvalues.iter().zip(&s.physical_rates).enumerate() {
        let _ = writeln!(out, "{},{},{}", i + 1, l, r);
    }
    out
}

pub fn coefficients_csv(s: &SpectrumResult) -> String {
    let mut out = String::from(COEFFICIENT_HEADER);
    out.push('\n');
    for (i, table) in s.coefficient_tables.iter().enumerate() {
        for (k, a) in table.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", i + 1, k, a);
        }
    }
    out
}

pub fn write_trajectory(
    path: &Path,
    t: &Trajectory,
    k: &LyapunovConstants,
) -> Result<(), ExportError> {
    write_file(path, &trajectory_csv(t, k))
}

pub fn write_summary(path: &Path, s: &EnsembleSummary) -> Result<(), ExportError> {
    write_file(path, &summary_csv(s))
}

pub fn write_spectrum(dir: &Path, s: &SpectrumResult) -> Result<(), ExportError> {
    write_file(&dir.join("spectrum.csv"), &spectrum_csv(s))?;
    write_file(&dir.join("coefficients.csv"), &coefficients_csv(s))
}

/// Fully resolved inputs of one CLI invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum CommandSpec {
    Certify {
        experiment: ExperimentParams,
        certificate: CertificateParams,
    },
    Simulate {
        experiment: ExperimentParams,
        sim: SimConfig,
        lambda0: f64,
        nu0: f64,
        path_index: u64,
        lyapunov: LyapunovConstants,
    },
    Ensemble {
        experiment: ExperimentParams,
        sim: SimConfig,
        lambda0: f64,
        nu0: f64,
        lyapunov: LyapunovConstants,
    },
    ExitTime {
        pure: PureParams,
        sim: SimConfig,
        theta0: f64,
        angle_tol: f64,
        lyapunov: LyapunovConstants,
    },
    Spectrum {
        pure: PureParams,
        n_max: usize,
        order: usize,
    },
}

impl CommandSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CommandSpec::Certify { .. } => "certify",
            CommandSpec::Simulate { .. } => "simulate",
            CommandSpec::Ensemble { .. } => "ensemble",
            CommandSpec::ExitTime { .. } => "exit-time",
            CommandSpec::Spectrum { .. } => "spectrum",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            CommandSpec::Simulate { sim, .. }
            | CommandSpec::Ensemble { sim, .. }
            | CommandSpec::ExitTime { sim, .. } => Some(sim.seed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub timestamp: String,
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub command: CommandSpec,
}

impl RunManifest {
    pub fn new(command: CommandSpec) -> Self {
        Self {
            artifact_version: ARTIFACT_VERSION.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            seed: command.seed(),
            command,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    pub fn write(&self, path: &Path) -> Result<(), ExportError> {
        write_file(path, &(self.to_json() + "\n"))
    }

    pub fn read(path: &Path) -> Result<Self, ExportError> {
        let text = fs::read_to_string(path).map_err(|source| ExportError {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| ExportError {
            path: path.to_path_buf(),
            source: io::Error::new(io::ErrorKind::InvalidData, e),
        })
    }
}
