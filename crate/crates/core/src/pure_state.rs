//! The pure-state chart at perfect detection efficiency.
//!
//! With `η = 1` the boundary of the disc is invariant and the state is an
//! angle `θ ∈ (−π, π]` following
//!
//! ```text
//! dθ = [(g1/2)sin θ + (g2/2)(1 + cos θ) − (M/2) sin θ cos θ] dt − √M sin θ dW.
//! ```
//!
//! `θ = ±π` is the absorbing target. On `J⁻ = (−π, 0)` the point `θ = 0` is
//! an entrance boundary; on `J⁺ = (0, π)` it is an exit boundary. Under
//! `x = cot(θ/2)` the first-exit-time equation becomes a singular
//! Sturm–Liouville problem whose eigenvalues are found here by power series.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{DriftDiffusion, ExperimentParams};
use crate::error::{Error, Result};
use crate::lyapunov::LyapunovConstants;
use crate::rng::PathNoise;
use crate::simulator::{
    record_steps, run_paths, summarize, EnsembleSummary, PathRecord, SimConfig,
};
use crate::state_space::PureAngle;

/// Feedback gains for the pure-state problem (`η = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PureParams {
    pub m: f64,
    pub g1: f64,
    pub g2: f64,
}

impl PureParams {
    pub fn new(m: f64, g1: f64, g2: f64) -> Result<Self> {
        let p = Self { m, g1, g2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::invalid(
                "m",
                self.m,
                "measurement strength must be > 0",
            ));
        }
        if !(self.g1 > 0.0 && self.g1.is_finite()) {
            return Err(Error::invalid(
                "g1",
                self.g1,
                "pure-state analysis requires g1 > 0",
            ));
        }
        if !(self.g2 < 0.0 && self.g2.is_finite()) {
            return Err(Error::invalid(
                "g2",
                self.g2,
                "pure-state analysis requires g2 < 0",
            ));
        }
        Ok(())
    }

    /// `g1/M`.
    pub fn kappa(&self) -> f64 {
        self.g1 / self.m
    }

    /// `g2/M`.
    pub fn gamma(&self) -> f64 {
        self.g2 / self.m
    }

    /// The same gains in the two-dimensional model with `η = 1`.
    pub fn experiment_params(&self) -> ExperimentParams {
        ExperimentParams {
            m: self.m,
            eta: 1.0,
            g1: self.g1,
            g2: self.g2,
        }
    }

    /// Default exit-time configuration: `dt = 10⁻³/M`, `t_max = 20/M`.
    pub fn default_exit_config(&self, seed: u64, n_paths: usize) -> Result<SimConfig> {
        SimConfig::new(1e-3 / self.m, 20.0 / self.m, seed, n_paths)
    }
}

/// Drift in slot 0, diffusion in slot 0; slot 1 is zero.
pub fn pure_drift_diffusion(theta: PureAngle, pp: &PureParams) -> DriftDiffusion {
    let (b, s) = angle_coefficients(theta.theta(), pp);
    DriftDiffusion {
        drift: [b, 0.0],
        diffusion: [s, 0.0],
    }
}

#[inline]
fn angle_coefficients(theta: f64, pp: &PureParams) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    let b = 0.5 * pp.g1 * s + 0.5 * pp.g2 * (1.0 + c) - 0.5 * pp.m * s * c;
    (b, -pp.m.sqrt() * s)
}

pub const DEFAULT_ANGLE_TOL: f64 = 1e-3;

/// Exit-time ensemble with boundary bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitTimeSummary {
    pub summary: EnsembleSummary,
    /// Paths absorbed within `angle_tol` of `±π`.
    pub absorbed: usize,
    /// Steps that moved a path from `θ < 0` to `θ > 0`.
    pub crossings_into_positive: usize,
    /// Paths that left `J⁺` through `θ = 0` at least once.
    pub exits_through_zero: usize,
    /// `(M/2)·λ₁ = (g1 + M)/2`.
    pub leading_physical_rate: f64,
}

struct ExitPath {
    record: PathRecord,
    crossings: usize,
    left_positive: bool,
}

/// Euler–Maruyama on the angle, clamped to `[−π, π]`, absorbed once
/// `π − |θ| ≤ angle_tol`.
pub fn simulate_pure_exit(
    theta0: f64,
    pp: &PureParams,
    cfg: &SimConfig,
    angle_tol: f64,
    k: &LyapunovConstants,
) -> Result<ExitTimeSummary> {
    pp.validate()?;
    cfg.validate()?;
    if !(angle_tol > 0.0 && angle_tol < PI) {
        return Err(Error::invalid(
            "angle_tol",
            angle_tol,
            "tolerance must lie in (0, π)",
        ));
    }
    if !theta0.is_finite() || theta0.abs() >= PI {
        return Err(Error::Domain(format!(
            "initial angle {theta0} must lie in (−π, π)"
        )));
    }

    let steps = cfg.steps();
    let recorded = record_steps(steps, cfg.record_stride);
    let paths = run_paths(cfg.n_paths, |i| {
        let mut noise = PathNoise::new(cfg.seed, i).increments(cfg.dt);
        let mut theta = theta0;
        let mut absorbed_at = (PI - theta.abs() <= angle_tol).then_some(0.0);
        let mut crossings = 0;
        let mut left_positive = false;
        let mut states = Vec::with_capacity(recorded.len());
        let mut next_record = recorded.iter().peekable();
        for step in 0..=steps {
            if step > 0 && absorbed_at.is_none() {
                let dw = noise.next().unwrap_or(0.0);
                let (b, s) = angle_coefficients(theta, pp);
                let next = theta + b * cfg.dt + s * dw;
                if !next.is_finite() {
                    return Err(Error::Integration { path: i, step });
                }
                if theta < 0.0 && next > 0.0 {
                    crossings += 1;
                }
                if theta > 0.0 && next <= 0.0 {
                    left_positive = true;
                }
                theta = next.clamp(-PI, PI);
                if PI - theta.abs() <= angle_tol {
                    absorbed_at = Some(step as f64 * cfg.dt);
                }
            }
            if next_record.peek() == Some(&&step) {
                next_record.next();
                states.push(PureAngle::new(theta).to_state());
            }
        }
        Ok(ExitPath {
            record: PathRecord {
                states,
                converged_at: absorbed_at,
            },
            crossings,
            left_positive,
        })
    })?;

    let absorbed = paths
        .iter()
        .filter(|p| p.record.converged_at.is_some())
        .count();
    let crossings_into_positive = paths.iter().map(|p| p.crossings).sum();
    let exits_through_zero = paths.iter().filter(|p| p.left_positive).count();
    let records: Vec<PathRecord> = paths.into_iter().map(|p| p.record).collect();
    let times: Vec<f64> = recorded.iter().map(|&s| s as f64 * cfg.dt).collect();
    let summary = summarize(&times, &records, k, cfg.t_max);
    Ok(ExitTimeSummary {
        summary,
        absorbed,
        crossings_into_positive,
        exits_through_zero,
        leading_physical_rate: 0.5 * (pp.g1 + pp.m),
    })
}

/// `x = cot(θ/2)`; exactly `0` at `θ = ±π`.
pub fn change_of_variable(theta: PureAngle) -> Result<f64> {
    let t = theta.theta();
    if t == 0.0 {
        return Err(Error::Domain("cot(θ/2) has a pole at θ = 0".into()));
    }
    if t == PI {
        return Ok(0.0);
    }
    let (s, c) = (0.5 * t).sin_cos();
    Ok(c / s)
}

/// Inverse of [`change_of_variable`]: `x > 0 ↦ J⁺`, `x < 0 ↦ J⁻`, `0 ↦ π`.
pub fn angle_from_x(x: f64) -> PureAngle {
    if x == 0.0 {
        PureAngle::new(PI)
    } else {
        PureAngle::new(2.0 * (1.0 / x).atan())
    }
}

/// `h(x) = (g1/M)x + (g2/M)x² + (x − 3x³)/(1 + x²)`.
pub fn h_function(x: f64, pp: &PureParams) -> f64 {
    let x2 = x * x;
    pp.kappa() * x + pp.gamma() * x2 + (x - 3.0 * x * x2) / (1.0 + x2)
}

/// `h` with `1/(1 + x²)` expanded to `terms` geometric terms; `|x| < 1`.
pub fn h_series(x: f64, pp: &PureParams, terms: usize) -> Result<f64> {
    if !(x.abs() < 1.0) {
        return Err(Error::Domain(format!(
            "series form of h needs |x| < 1, got {x}"
        )));
    }
    let x2 = x * x;
    let mut geometric = 0.0;
    let mut power = 1.0;
    for _ in 0..terms {
        geometric += power;
        power *= -x2;
    }
    Ok(pp.kappa() * x + pp.gamma() * x2 + (x - 3.0 * x * x2) * geometric)
}

/// Coefficient of `x^j` in the power series of `h`.
pub fn h_coefficient(j: usize, pp: &PureParams) -> f64 {
    match j {
        0 => 0.0,
        1 => pp.kappa() + 1.0,
        2 => pp.gamma(),
        j if j % 2 == 1 => {
            if (j / 2) % 2 == 1 {
                -4.0
            } else {
                4.0
            }
        }
        _ => 0.0,
    }
}

fn check_weight_arg(x: f64) -> Result<()> {
    if x == 0.0 || !x.is_finite() {
        return Err(Error::Domain(format!(
            "weight functions are singular at x = {x}"
        )));
    }
    Ok(())
}

/// `p = (1 + x²)|x|^{−g1/M} e^{−(g2/M)x}`, `r = p/x²`.
pub fn weight_functions(x: f64, pp: &PureParams) -> Result<(f64, f64)> {
    check_weight_arg(x)?;
    let p = (1.0 + x * x) * x.abs().powf(-pp.kappa()) * (-pp.gamma() * x).exp();
    Ok((p, p / (x * x)))
}

/// `p = (1 + x²)² |x|^{−(g1/M + 1)} e^{−(g2/M)x}`, `r = p/x²`.
///
/// These satisfy `p'/p = −h/x²`, so `−(p y')'/r = −x² y'' + h y'`.
pub fn weight_functions_consistent(x: f64, pp: &PureParams) -> Result<(f64, f64)> {
    check_weight_arg(x)?;
    let q = 1.0 + x * x;
    let p = q * q * x.abs().powf(-(pp.kappa() + 1.0)) * (-pp.gamma() * x).exp();
    Ok((p, p / (x * x)))
}

/// Sign convention of the second-order term in the series operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SeriesOperator {
    /// `x² y'' + h y'`.
    #[default]
    Standard,
    /// `−x² y'' + h y'`, the form produced by the exit-time equation.
    ExitTime,
}

impl SeriesOperator {
    fn sign(self) -> f64 {
        match self {
            SeriesOperator::Standard => 1.0,
            SeriesOperator::ExitTime => -1.0,
        }
    }
}

/// Coefficients `c_0..=c_{max_power}` of `L(Σ a_k x^k)` using the series of `h`.
pub fn apply_series_operator(
    a: &[f64],
    pp: &PureParams,
    op: SeriesOperator,
    max_power: usize,
) -> Vec<f64> {
    let s = op.sign();
    (0..=max_power)
        .map(|m| {
            let second = a
                .get(m)
                .map_or(0.0, |&am| s * (m * m.saturating_sub(1)) as f64 * am);
            let first: f64 = (1..=m.min(a.len().saturating_sub(1)))
                .map(|k| k as f64 * a[k] * h_coefficient(m - k + 1, pp))
                .sum();
            second + first
        })
        .collect()
}

/// One eigenpair of the series operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenEntry {
    pub n: usize,
    pub eigenvalue: f64,
    /// `(M/2)·λₙ` in Hz.
    pub physical_rate: f64,
    /// `a_0..=a_order`, with `a_n = 1` and `a_k = 0` for `k < n`.
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    pub physical_rates: Vec<f64>,
    pub coefficient_tables: Vec<Vec<f64>>,
    pub truncation_order: usize,
}

pub fn eigen_recursion(pp: &PureParams, n: usize, order: usize) -> Result<EigenEntry> {
    eigen_recursion_with(pp, n, order, SeriesOperator::Standard)
}

/// Solves the triangular coefficient-matching system for `yₙ = xⁿ + …`.
pub fn eigen_recursion_with(
    pp: &PureParams,
    n: usize,
    order: usize,
    op: SeriesOperator,
) -> Result<EigenEntry> {
    pp.validate()?;
    if n == 0 {
        return Err(Error::invalid("n", 0.0, "eigenfunction index must be >= 1"));
    }
    if order < n + 2 {
        return Err(Error::invalid(
            "order",
            order as f64,
            format!("order must be >= n + 2 = {}", n + 2),
        ));
    }
    let s = op.sign();
    let h1 = h_coefficient(1, pp);
    let diag = |m: usize| s * (m * (m - 1)) as f64 + m as f64 * h1;
    let lambda = diag(n);

    let mut a = vec![0.0; order + 1];
    a[n] = 1.0;
    for m in n + 1..=order {
        let factor = diag(m) - lambda;
        if factor.abs() <= 1e-12 * lambda.abs().max(1.0) {
            return Err(Error::Degenerate { n, index: m });
        }
        let rhs: f64 = (n..m)
            .map(|k| k as f64 * a[k] * h_coefficient(m - k + 1, pp))
            .sum();
        a[m] = -rhs / factor;
    }
    Ok(EigenEntry {
        n,
        eigenvalue: lambda,
        physical_rate: 0.5 * pp.m * lambda,
        coefficients: a,
    })
}

pub fn spectrum(pp: &PureParams, n_max: usize, order: usize) -> Result<SpectrumResult> {
    if n_max == 0 {
        return Err(Error::invalid("n_max", 0.0, "need at least one eigenvalue"));
    }
    let entries = (1..=n_max)
        .map(|n| eigen_recursion(pp, n, order))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumResult {
        eigenvalues: entries.iter().map(|e| e.eigenvalue).collect(),
        physical_rates: entries.iter().map(|e| e.physical_rate).collect(),
        coefficient_tables: entries.into_iter().map(|e| e.coefficients).collect(),
        truncation_order: order,
    })
}

/// `(y, y', y'')` of a polynomial with coefficients `a` at `x`.
pub fn eval_series(a: &[f64], x: f64) -> (f64, f64, f64) {
    let (mut y, mut dy, mut d2y) = (0.0, 0.0, 0.0);
    for &c in a.iter().rev() {
        d2y = d2y * x + 2.0 * dy;
        dy = dy * x + y;
        y = y * x + c;
    }
    (y, dy, d2y)
}

/// `L yₙ − λₙ yₙ` at `x`, with the closed form of `h`.
pub fn series_residual(entry: &EigenEntry, pp: &PureParams, op: SeriesOperator, x: f64) -> f64 {
    let (y, dy, d2y) = eval_series(&entry.coefficients, x);
    op.sign() * x * x * d2y + h_function(x, pp) * dy - entry.eigenvalue * y
}
