//! The `qfc` command-line front end.
//!
//! Every invocation is first resolved into a [`CommandSpec`] with all
//! defaults filled in. That spec is executed, and it is also written as
//! `manifest.json` next to the outputs. `qfc --manifest manifest.json --out DIR`
//! re-executes the same spec.
//!
//! Exit statuses: `0` success, `1` usage, parameter or I/O error, `2` not
//! certified, `3` integration blow-up.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dynamics::ExperimentParams;
use crate::error::Error;
use crate::export::{self, CommandSpec, ExportError, RunManifest};
use crate::lyapunov::{certify, CertificateParams, LyapunovConstants};
use crate::pure_state::{simulate_pure_exit, spectrum, PureParams, DEFAULT_ANGLE_TOL};
use crate::simulator::{run_ensemble, simulate_path, SimConfig};
use crate::state_space::QubitState;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CERTIFIED: i32 = 2;
pub const EXIT_INTEGRATION: i32 = 3;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(
    name = "qfc",
    version,
    about = "Spin-1/2 quantum feedback control toolkit"
)]
pub struct Cli {
    /// Replay a run from a manifest instead of a subcommand.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grid certificate that ℒV < 0 on the disc.
    Certify(CertifyArgs),
    /// One Euler–Maruyama trajectory.
    Simulate(SimulateArgs),
    /// Monte Carlo ensemble with convergence statistics.
    Ensemble(EnsembleArgs),
    /// First-exit-time Monte Carlo on the pure-state circle.
    ExitTime(ExitTimeArgs),
    /// Eigenvalues of the pure-state series operator.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub m: f64,
    #[arg(long)]
    pub eta: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub g1: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub g2: f64,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentParams, Error> {
        ExperimentParams::new(self.m, self.eta, self.g1, self.g2)
    }
}

#[derive(Debug, Args)]
pub struct ConstantsArgs {
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    pub c: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub d: f64,
}

impl ConstantsArgs {
    fn resolve(&self) -> Result<LyapunovConstants, Error> {
        LyapunovConstants::new(self.c, self.d)
    }
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[command(flatten)]
    pub constants: ConstantsArgs,
    #[arg(long, default_value_t = CertificateParams::DEFAULT_GRID_R)]
    pub grid_r: usize,
    #[arg(long, default_value_t = CertificateParams::DEFAULT_GRID_THETA)]
    pub grid_theta: usize,
    #[arg(long, default_value_t = CertificateParams::DEFAULT_REFINE_DEPTH)]
    pub refine_depth: usize,
    #[arg(long, default_value_t = CertificateParams::DEFAULT_REFINE_FRACTION)]
    pub refine_fraction: f64,
    #[arg(long, default_value_t = CertificateParams::DEFAULT_MARGIN)]
    pub margin: f64,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Time step; defaults to 1e-3/M.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Horizon; defaults to 50/M (20/M for exit-time).
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = SimConfig::DEFAULT_RECORD_STRIDE)]
    pub record_stride: usize,
    #[arg(long, default_value_t = SimConfig::DEFAULT_CONVERGENCE_RADIUS)]
    pub convergence_radius: f64,
}

impl SimArgs {
    fn resolve(&self, m: f64, default_horizon: f64, n_paths: usize) -> Result<SimConfig, Error> {
        let cfg = SimConfig {
            dt: self.dt.unwrap_or(1e-3 / m),
            t_max: self.t_max.unwrap_or(default_horizon / m),
            seed: self.seed,
            n_paths,
            record_stride: self.record_stride,
            convergence_radius: self.convergence_radius,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[command(flatten)]
    pub constants: ConstantsArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda0: f64,
    #[arg(long)]
    pub nu0: f64,
    #[arg(long, default_value_t = 0)]
    pub path_index: u64,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[command(flatten)]
    pub constants: ConstantsArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda0: f64,
    #[arg(long)]
    pub nu0: f64,
    #[arg(long, default_value_t = 1000)]
    pub n_paths: usize,
}

#[derive(Debug, Args)]
pub struct PureArgs {
    #[arg(long)]
    pub m: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub g1: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub g2: f64,
}

impl PureArgs {
    fn resolve(&self) -> Result<PureParams, Error> {
        PureParams::new(self.m, self.g1, self.g2)
    }
}

#[derive(Debug, Args)]
pub struct ExitTimeArgs {
    #[command(flatten)]
    pub pure: PureArgs,
    #[command(flatten)]
    pub constants: ConstantsArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub theta0: f64,
    #[arg(long, default_value_t = 5000)]
    pub n_paths: usize,
    #[arg(long, default_value_t = DEFAULT_ANGLE_TOL)]
    pub angle_tol: f64,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub pure: PureArgs,
    #[arg(long, default_value_t = 3)]
    pub n_max: usize,
    /// Truncation order of the power series.
    #[arg(long, default_value_t = 40)]
    pub order: usize,
}

/// Why a run stopped early.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] Error),
    #[error(transparent)]
    Io(#[from] ExportError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(Error::Integration { .. }) => EXIT_INTEGRATION,
            _ => EXIT_ERROR,
        }
    }
}

/// Resolves parsed flags into a fully specified command.
pub fn resolve(command: &Command) -> Result<CommandSpec, Error> {
    Ok(match command {
        Command::Certify(a) => {
            let experiment = a.experiment.resolve()?;
            let k = a.constants.resolve()?;
            let certificate = CertificateParams {
                c: k.c,
                d: k.d,
                grid_r: a.grid_r,
                grid_theta: a.grid_theta,
                refine_depth: a.refine_depth,
                refine_fraction: a.refine_fraction,
                margin: a.margin,
            };
            certificate.validate()?;
            CommandSpec::Certify {
                experiment,
                certificate,
            }
        }
        Command::Simulate(a) => {
            let experiment = a.experiment.resolve()?;
            CommandSpec::Simulate {
                sim: a.sim.resolve(experiment.m, 50.0, 1)?,
                experiment,
                lambda0: a.lambda0,
                nu0: a.nu0,
                path_index: a.path_index,
                lyapunov: a.constants.resolve()?,
            }
        }
        Command::Ensemble(a) => {
            let experiment = a.experiment.resolve()?;
            CommandSpec::Ensemble {
                sim: a.sim.resolve(experiment.m, 50.0, a.n_paths)?,
                experiment,
                lambda0: a.lambda0,
                nu0: a.nu0,
                lyapunov: a.constants.resolve()?,
            }
        }
        Command::ExitTime(a) => {
            let pure = a.pure.resolve()?;
            CommandSpec::ExitTime {
                sim: a.sim.resolve(pure.m, 20.0, a.n_paths)?,
                pure,
                theta0: a.theta0,
                angle_tol: a.angle_tol,
                lyapunov: a.constants.resolve()?,
            }
        }
        Command::Spectrum(a) => CommandSpec::Spectrum {
            pure: a.pure.resolve()?,
            n_max: a.n_max,
            order: a.order,
        },
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), |v| format!("{v:.6}"))
}

/// Executes a resolved command, writing data files and the manifest into
/// `out`. Returns the exit status on success.
pub fn execute(spec: &CommandSpec, out: &Path, stdout: &mut dyn Write) -> Result<i32, CliError> {
    fs::create_dir_all(out).map_err(|source| ExportError {
        path: out.to_path_buf(),
        source,
    })?;
    let mut status = EXIT_OK;
    let line = match spec {
        CommandSpec::Certify {
            experiment,
            certificate,
        } => {
            let res = certify(experiment, certificate)?;
            let path = out.join("certificate.json");
            let text = serde_json::to_string_pretty(&res).expect("certificate serializes") + "\n";
            fs::write(&path, text).map_err(|source| ExportError { path, source })?;
            if !res.certified {
                status = EXIT_NOT_CERTIFIED;
            }
            format!(
                "certified={} f_max={:.6} argmax=(r={:.6}, theta={:.6}) consistent_f_max={:.6} necessary_conditions={}",
                res.certified,
                res.f_max_estimate,
                res.argmax.r,
                res.argmax.theta,
                res.consistent_f_max,
                res.necessary_conditions_hold
            )
        }
        CommandSpec::Simulate {
            experiment,
            sim,
            lambda0,
            nu0,
            path_index,
            lyapunov,
        } => {
            let t = simulate_path(
                QubitState::new(*lambda0, *nu0),
                experiment,
                sim,
                *path_index,
            )?;
            export::write_trajectory(&out.join("trajectory.csv"), &t, lyapunov)?;
            let last = t.states.last().copied().unwrap_or(QubitState::TARGET);
            format!(
                "converged_at={} final=({:.6}, {:.6}) projections={}",
                fmt_opt(t.converged_at),
                last.lambda,
                last.nu,
                t.projections
            )
        }
        CommandSpec::Ensemble {
            experiment,
            sim,
            lambda0,
            nu0,
            lyapunov,
        } => {
            let s = run_ensemble(QubitState::new(*lambda0, *nu0), experiment, sim, lyapunov)?;
            export::write_summary(&out.join("summary.csv"), &s)?;
            format!(
                "fraction_converged={:.4} fitted_rate={} n_paths={}",
                s.fraction_converged,
                fmt_opt(s.fitted_rate),
                s.n_paths
            )
        }
        CommandSpec::ExitTime {
            pure,
            sim,
            theta0,
            angle_tol,
            lyapunov,
        } => {
            let e = simulate_pure_exit(*theta0, pure, sim, *angle_tol, lyapunov)?;
            export::write_summary(&out.join("exit_time.csv"), &e.summary)?;
            format!(
                "fitted_rate={} leading_rate={:.6} absorbed_fraction={:.4} exits_through_zero={}",
                fmt_opt(e.summary.fitted_rate),
                e.leading_physical_rate,
                e.summary.fraction_converged,
                e.exits_through_zero
            )
        }
        CommandSpec::Spectrum { pure, n_max, order } => {
            let s = spectrum(pure, *n_max, *order)?;
            export::write_spectrum(out, &s)?;
            let join = |v: &[f64]| {
                v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            format!(
                "lambda={} physical_rate={}",
                join(&s.eigenvalues),
                join(&s.physical_rates)
            )
        }
    };
    RunManifest::new(spec.clone()).write(&out.join(MANIFEST_FILE))?;
    let _ = writeln!(stdout, "{} {line}", spec.name());
    Ok(status)
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let spec = match (&cli.manifest, &cli.command) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "--manifest cannot be combined with a subcommand".into(),
            ))
        }
        (None, None) => {
            return Err(CliError::Usage(
                "a subcommand or --manifest is required".into(),
            ))
        }
        (Some(path), None) => RunManifest::read(path)?.command,
        (None, Some(cmd)) => resolve(cmd)?,
    };
    execute(&spec, &cli.out, stdout)
}

/// Parses `args` and runs; returns the process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{rendered}")
            } else {
                write!(stdout, "{rendered}")
            };
            return code;
        }
    };
    match dispatch(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(args.iter().copied(), &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn certify_statuses() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let base = [
            "qfc", "--out", out, "certify", "--m", "1", "--eta", "0.5", "--g1", "0.75",
        ];

        let (code, stdout, _) =
            run_capture(&[&base[..], &["--g2", "-0.25", "--c", "4", "--d", "2"]].concat());
        assert_eq!(code, EXIT_OK, "{stdout}");
        assert!(stdout.contains("certified=true"));

        let (code, _, _) =
            run_capture(&[&base[..], &["--g2", "0.1", "--c", "4", "--d", "2"]].concat());
        assert_eq!(code, EXIT_NOT_CERTIFIED);

        let (code, _, stderr) =
            run_capture(&[&base[..], &["--g2", "-0.25", "--c", "0.5", "--d", "2"]].concat());
        assert_eq!(code, EXIT_ERROR);
        assert!(stderr.contains("c > 1"), "{stderr}");
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run_capture(&["qfc"]).0, EXIT_ERROR);
        assert_eq!(run_capture(&["qfc", "certify", "--m", "1"]).0, EXIT_ERROR);
        assert_eq!(run_capture(&["qfc", "--help"]).0, EXIT_OK);
        // seed is mandatory for stochastic commands
        let (code, _, stderr) = run_capture(&[
            "qfc",
            "simulate",
            "--m",
            "1",
            "--eta",
            "1",
            "--g1",
            "1",
            "--g2",
            "-0.5",
            "--lambda0",
            "0",
            "--nu0",
            "1",
        ]);
        assert_eq!(code, EXIT_ERROR);
        assert!(stderr.contains("--seed"));
    }

    #[test]
    fn spectrum_prints_eigenvalues() {
        let dir = tempfile::tempdir().unwrap();
        let (code, stdout, _) = run_capture(&[
            "qfc",
            "--out",
            dir.path().to_str().unwrap(),
            "spectrum",
            "--m",
            "1",
            "--g1",
            "1",
            "--g2",
            "-0.5",
            "--n-max",
            "3",
        ]);
        assert_eq!(code, EXIT_OK);
        assert!(stdout.contains("lambda=2,6,12"), "{stdout}");
        assert!(dir.path().join("spectrum.csv").exists());
        assert!(dir.path().join(MANIFEST_FILE).exists());
    }

    #[test]
    fn integration_failure_maps_to_status_3() {
        let dir = tempfile::tempdir().unwrap();
        let (code, _, stderr) = run_capture(&[
            "qfc",
            "--out",
            dir.path().to_str().unwrap(),
            "simulate",
            "--m",
            "1",
            "--eta",
            "1",
            "--g1",
            "1e308",
            "--g2",
            "1e308",
            "--lambda0",
            "0.3",
            "--nu0",
            "0.5",
            "--seed",
            "1",
            "--dt",
            "10",
            "--t-max",
            "100",
        ]);
        assert_eq!(code, EXIT_INTEGRATION, "{stderr}");
        assert!(stderr.contains("path 0"));
    }

    #[test]
    fn unwritable_output_is_status_1() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let target = blocker.join("sub");
        let (code, _, stderr) = run_capture(&[
            "qfc",
            "--out",
            target.to_str().unwrap(),
            "spectrum",
            "--m",
            "1",
            "--g1",
            "1",
            "--g2",
            "-0.5",
        ]);
        assert_eq!(code, EXIT_ERROR);
        assert!(stderr.contains(target.to_str().unwrap()));
    }
}
