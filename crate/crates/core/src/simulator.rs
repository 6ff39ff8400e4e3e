//! Euler–Maruyama paths and Monte Carlo ensembles of the reduced SME.
//!
//! One step is
//!
//! ```text
//! x_{k+1} = Π(x_k + b(x_k)·dt + σ(x_k)·ΔW_k),   ΔW_k ~ N(0, dt)
//! ```
//!
//! where `Π` is [`project_to_disc`] and the scalar `ΔW_k` drives both
//! components. Path `i` of a run with seed `s` always sees the same increments
//! (see [`crate::rng::PathNoise`]), and every reduction runs in path-index
//! order, so results are bit-identical for any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{drift_diffusion, ExperimentParams};
use crate::error::{Error, Result};
use crate::lyapunov::{lv_closed_form, lv_ito, lyapunov_v, LyapunovConstants};
use crate::rng::PathNoise;
use crate::state_space::{membership_defect, project_to_disc, QubitState};
use crate::stats::{linear_fit, mean_and_se};

/// Tolerance on `λ² + ν(ν − 1)` for accepting an initial state.
pub const START_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Time step in seconds.
    pub dt: f64,
    /// Horizon in seconds.
    pub t_max: f64,
    pub seed: u64,
    pub n_paths: usize,
    /// Keep every `record_stride`-th step.
    pub record_stride: usize,
    /// Radius of the ball around `(0, 0)` that counts as converged.
    pub convergence_radius: f64,
}

impl SimConfig {
    pub const DEFAULT_RECORD_STRIDE: usize = 100;
    pub const DEFAULT_CONVERGENCE_RADIUS: f64 = 1e-2;

    pub fn new(dt: f64, t_max: f64, seed: u64, n_paths: usize) -> Result<Self> {
        let cfg = Self {
            dt,
            t_max,
            seed,
            n_paths,
            record_stride: Self::DEFAULT_RECORD_STRIDE,
            convergence_radius: Self::DEFAULT_CONVERGENCE_RADIUS,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_record_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", self.dt, "time step must be positive"));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::invalid(
                "t_max",
                self.t_max,
                "horizon must be positive",
            ));
        }
        if self.dt > self.t_max {
            return Err(Error::invalid(
                "dt",
                self.dt,
                format!("time step exceeds horizon {}", self.t_max),
            ));
        }
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths", 0.0, "need at least one path"));
        }
        if self.record_stride == 0 {
            return Err(Error::invalid("record_stride", 0.0, "stride must be >= 1"));
        }
        if !(self.convergence_radius > 0.0) {
            return Err(Error::invalid(
                "convergence_radius",
                self.convergence_radius,
                "radius must be positive",
            ));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    /// Step indices that are recorded: `0, k, 2k, …` and the final step.
    pub fn record_steps(&self) -> Vec<usize> {
        record_steps(self.steps(), self.record_stride)
    }

    pub fn record_times(&self) -> Vec<f64> {
        self.record_steps()
            .iter()
            .map(|&k| k as f64 * self.dt)
            .collect()
    }
}

pub(crate) fn record_steps(steps: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..=steps).step_by(stride).collect();
    if out.last() != Some(&steps) {
        out.push(steps);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<QubitState>,
    /// Start of the final recorded stretch inside the convergence ball.
    pub converged_at: Option<f64>,
    /// Largest `membership_defect` of an Euler step before projection.
    pub max_pre_projection_defect: f64,
    /// Number of steps that needed projection.
    pub projections: usize,
}

/// Mean curves and convergence statistics of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_paths: usize,
    pub fraction_converged: f64,
    pub mean_v_curve: Vec<(f64, f64)>,
    pub mean_nu_curve: Vec<(f64, f64)>,
    /// Fraction of paths not (yet) converged at each recorded time.
    pub unconverged_curve: Vec<(f64, f64)>,
    /// Standard error of the mean of `V` at each recorded time.
    pub v_standard_error: Vec<f64>,
    /// Standard error of the mean of `ν`.
    pub nu_standard_error: Vec<f64>,
    /// Standard error of the mean per-path increment of `V` between
    /// consecutive records (first entry is zero).
    pub v_increment_standard_error: Vec<f64>,
    /// Exponential decay rate (Hz) of the unconverged fraction on the second
    /// half of the horizon.
    pub fitted_rate: Option<f64>,
}

impl EnsembleSummary {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.mean_nu_curve.iter().map(|p| p.0)
    }

    /// First record index where mean `V` rises by more than `k` standard
    /// errors of the increment, if any.
    pub fn v_increase_beyond(&self, k: f64) -> Option<usize> {
        (1..self.mean_v_curve.len()).find(|&j| {
            self.mean_v_curve[j].1 - self.mean_v_curve[j - 1].1
                > k * self.v_increment_standard_error[j]
        })
    }

    /// First record index where `|mean ν − ν₀|` exceeds `k` standard errors.
    pub fn nu_departure_beyond(&self, nu0: f64, k: f64) -> Option<usize> {
        (0..self.mean_nu_curve.len())
            .find(|&j| (self.mean_nu_curve[j].1 - nu0).abs() > k * self.nu_standard_error[j])
    }
}

/// What an ensemble keeps of each path.
#[derive(Debug, Clone)]
pub(crate) struct PathRecord {
    pub states: Vec<QubitState>,
    pub converged_at: Option<f64>,
}

fn check_start(s0: QubitState) -> Result<()> {
    if !s0.is_finite() || !s0.in_disc(START_TOLERANCE) {
        return Err(Error::Domain(format!(
            "initial state ({}, {}) is not in the disc",
            s0.lambda, s0.nu
        )));
    }
    Ok(())
}

/// Index-of-record of the last stretch inside the ball.
fn convergence_time(times: &[f64], states: &[QubitState], radius: f64) -> Option<f64> {
    match states.iter().rposition(|s| s.distance_to_target() > radius) {
        None => times.first().copied(),
        Some(j) if j + 1 < times.len() => Some(times[j + 1]),
        Some(_) => None,
    }
}

/// Integrates one path from explicit Brownian increments `ΔW_k`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_driven<I>(
    s0: QubitState,
    ep: &ExperimentParams,
    dt: f64,
    steps: usize,
    record_stride: usize,
    convergence_radius: f64,
    increments: I,
    path_index: u64,
) -> Result<Trajectory>
where
    I: IntoIterator<Item = f64>,
{
    check_start(s0)?;
    let stride = record_stride.max(1);
    let capacity = steps / stride + 2;
    let mut times = Vec::with_capacity(capacity);
    let mut states = Vec::with_capacity(capacity);
    times.push(0.0);
    states.push(s0);

    let mut s = s0;
    let mut max_defect = 0.0f64;
    let mut projections = 0;
    let mut dw_iter = increments.into_iter();
    for step in 1..=steps {
        let dw = dw_iter.next().ok_or_else(|| {
            Error::Domain(format!("increment stream ended at step {step} of {steps}"))
        })?;
        let dd = drift_diffusion(s, ep);
        let next = QubitState::new(
            s.lambda + dd.drift[0] * dt + dd.diffusion[0] * dw,
            s.nu + dd.drift[1] * dt + dd.diffusion[1] * dw,
        );
        if !next.is_finite() {
            return Err(Error::Integration {
                path: path_index,
                step,
            });
        }
        let defect = membership_defect(next);
        if defect > 0.0 {
            projections += 1;
            max_defect = max_defect.max(defect);
        }
        s = project_to_disc(next);
        if step % stride == 0 || step == steps {
            times.push(step as f64 * dt);
            states.push(s);
        }
    }

    let converged_at = convergence_time(&times, &states, convergence_radius);
    Ok(Trajectory {
        times,
        states,
        converged_at,
        max_pre_projection_defect: max_defect,
        projections,
    })
}

pub fn simulate_path(
    s0: QubitState,
    ep: &ExperimentParams,
    cfg: &SimConfig,
    path_index: u64,
) -> Result<Trajectory> {
    ep.validate()?;
    cfg.validate()?;
    simulate_driven(
        s0,
        ep,
        cfg.dt,
        cfg.steps(),
        cfg.record_stride,
        cfg.convergence_radius,
        PathNoise::new(cfg.seed, path_index).increments(cfg.dt),
        path_index,
    )
}

/// Runs `f` for every path index in parallel and returns results in index
/// order; the lowest-index error wins.
pub(crate) fn run_paths<T, F>(n_paths: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = (0..n_paths as u64).into_par_iter().map(f).collect();
    results.into_iter().collect()
}

pub fn run_ensemble(
    s0: QubitState,
    ep: &ExperimentParams,
    cfg: &SimConfig,
    k: &LyapunovConstants,
) -> Result<EnsembleSummary> {
    ep.validate()?;
    cfg.validate()?;
    check_start(s0)?;
    let records = run_paths(cfg.n_paths, |i| {
        simulate_path(s0, ep, cfg, i).map(|t| PathRecord {
            states: t.states,
            converged_at: t.converged_at,
        })
    })?;
    Ok(summarize(&cfg.record_times(), &records, k, cfg.t_max))
}

pub(crate) fn summarize(
    times: &[f64],
    records: &[PathRecord],
    k: &LyapunovConstants,
    t_max: f64,
) -> EnsembleSummary {
    let n = records.len();
    let mut mean_v_curve = Vec::with_capacity(times.len());
    let mut mean_nu_curve = Vec::with_capacity(times.len());
    let mut unconverged_curve = Vec::with_capacity(times.len());
    let mut v_se = Vec::with_capacity(times.len());
    let mut nu_se = Vec::with_capacity(times.len());
    let mut dv_se = Vec::with_capacity(times.len());

    let mut prev_v: Option<Vec<f64>> = None;
    for (j, &t) in times.iter().enumerate() {
        let nus: Vec<f64> = records.iter().map(|r| r.states[j].nu).collect();
        let vs: Vec<f64> = records.iter().map(|r| lyapunov_v(r.states[j], k)).collect();
        let (mnu, senu) = mean_and_se(&nus);
        let (mv, sev) = mean_and_se(&vs);
        let dse = match &prev_v {
            Some(pv) => {
                let diffs: Vec<f64> = vs.iter().zip(pv).map(|(a, b)| a - b).collect();
                mean_and_se(&diffs).1
            }
            None => 0.0,
        };
        let unconverged = records
            .iter()
            .filter(|r| r.converged_at.is_none_or(|c| c > t))
            .count();
        mean_nu_curve.push((t, mnu));
        mean_v_curve.push((t, mv));
        nu_se.push(senu);
        v_se.push(sev);
        dv_se.push(dse);
        unconverged_curve.push((t, unconverged as f64 / n as f64));
        prev_v = Some(vs);
    }

    let converged = records.iter().filter(|r| r.converged_at.is_some()).count();
    EnsembleSummary {
        n_paths: n,
        fraction_converged: converged as f64 / n as f64,
        fitted_rate: tail_rate(&unconverged_curve, 0.5 * t_max),
        mean_v_curve,
        mean_nu_curve,
        unconverged_curve,
        v_standard_error: v_se,
        nu_standard_error: nu_se,
        v_increment_standard_error: dv_se,
    }
}

/// `−slope` of `ln(fraction)` against time over points with `t ≥ t_from`
/// and a positive fraction.
pub fn tail_rate(curve: &[(f64, f64)], t_from: f64) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = curve
        .iter()
        .filter(|(t, f)| *t >= t_from && *f > 0.0)
        .map(|(t, f)| (*t, f.ln()))
        .unzip();
    linear_fit(&x, &y).map(|(slope, _)| -slope)
}

/// Monte Carlo estimate of `d/dt E[V(x_t)]` at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCheck {
    /// `lv_closed_form(s0)`.
    pub closed_form: f64,
    /// `ℒV(s0)` including the mixed Itô term.
    pub ito_closed_form: f64,
    /// Control-variate estimate of `(E[V(x_Δ)] − V(x_0))/Δ`.
    pub estimate: f64,
    pub standard_error: f64,
    /// Plain estimate without the control variate.
    pub raw_estimate: f64,
    pub raw_standard_error: f64,
    /// `Δ` in seconds.
    pub horizon: f64,
}

impl GeneratorCheck {
    pub fn discrepancy(&self) -> f64 {
        self.estimate - self.closed_form
    }
}

/// Default number of steps in the finite-difference horizon `Δ`.
pub const GENERATOR_CHECK_STEPS: usize = 10;

/// Compares `(E[V(x_Δ)] − V(x_0))/Δ` against the closed-form `ℒV(x_0)`.
///
/// The control variate `Σ_k ∇V(x_k)·σ(x_k) ΔW_k` has mean zero and removes
/// the leading martingale noise from each path's increment.
pub fn mean_generator_check(
    s0: QubitState,
    ep: &ExperimentParams,
    cfg: &SimConfig,
    k: &LyapunovConstants,
    horizon_steps: usize,
) -> Result<GeneratorCheck> {
    ep.validate()?;
    cfg.validate()?;
    check_start(s0)?;
    let steps = horizon_steps.max(1);
    let horizon = steps as f64 * cfg.dt;
    let v0 = lyapunov_v(s0, k);

    let per_path = run_paths(cfg.n_paths, |i| {
        let mut s = s0;
        let mut martingale = 0.0;
        let mut noise = PathNoise::new(cfg.seed, i).increments(cfg.dt);
        for step in 1..=steps {
            let dw = noise.next().unwrap_or(0.0);
            let dd = drift_diffusion(s, ep);
            let g = k.gradient(s);
            martingale += (g[0] * dd.diffusion[0] + g[1] * dd.diffusion[1]) * dw;
            let next = QubitState::new(
                s.lambda + dd.drift[0] * cfg.dt + dd.diffusion[0] * dw,
                s.nu + dd.drift[1] * cfg.dt + dd.diffusion[1] * dw,
            );
            if !next.is_finite() {
                return Err(Error::Integration { path: i, step });
            }
            s = project_to_disc(next);
        }
        let dv = lyapunov_v(s, k) - v0;
        Ok((dv / horizon, (dv - martingale) / horizon))
    })?;

    let raw: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let controlled: Vec<f64> = per_path.iter().map(|p| p.1).collect();
    let (raw_estimate, raw_standard_error) = mean_and_se(&raw);
    let (estimate, standard_error) = mean_and_se(&controlled);
    Ok(GeneratorCheck {
        closed_form: lv_closed_form(s0, ep, k),
        ito_closed_form: lv_ito(s0, ep, k),
        estimate,
        standard_error,
        raw_estimate,
        raw_standard_error,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_space::PureAngle;

    fn reference_gains() -> ExperimentParams {
        ExperimentParams::new(1.0, 0.5, 0.75, -0.25).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(0.0, 1.0, 1, 1).is_err());
        assert!(SimConfig::new(2.0, 1.0, 1, 1).is_err());
        assert!(SimConfig::new(0.1, 1.0, 1, 0).is_err());
        assert!(SimConfig::new(0.1, 1.0, 1, 1)
            .unwrap()
            .with_record_stride(0)
            .validate()
            .is_err());
        let cfg = SimConfig::new(0.1, 1.0, 1, 1)
            .unwrap()
            .with_record_stride(3);
        assert_eq!(cfg.record_steps(), vec![0, 3, 6, 9, 10]);
    }

    #[test]
    fn origin_is_a_fixed_path() {
        let cfg = SimConfig::new(1e-3, 1.0, 5, 1).unwrap();
        let t = simulate_path(QubitState::TARGET, &reference_gains(), &cfg, 0).unwrap();
        assert!(t.states.iter().all(|s| *s == QubitState::TARGET));
        assert_eq!(t.converged_at, Some(0.0));
        assert!(t.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn north_pole_is_fixed_without_feedback() {
        let ep = ExperimentParams::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let cfg = SimConfig::new(1e-3, 2.0, 5, 1).unwrap();
        let t = simulate_path(QubitState::NORTH_POLE, &ep, &cfg, 3).unwrap();
        assert!(t.states.iter().all(|s| *s == QubitState::NORTH_POLE));
        assert_eq!(t.converged_at, None);
    }

    #[test]
    fn feedback_pushes_off_the_north_pole() {
        let cfg = SimConfig::new(1e-3, 1.0, 9, 1)
            .unwrap()
            .with_record_stride(1);
        let t = simulate_path(QubitState::NORTH_POLE, &reference_gains(), &cfg, 0).unwrap();
        // first step is deterministic: λ drift g2/2, no noise at the pole
        assert!(t.states[1].lambda < 0.0);
        assert!((t.states[1].lambda - (-0.125e-3)).abs() < 1e-7);
        assert!(t.states.iter().all(|s| membership_defect(*s) <= 1e-12));
    }

    #[test]
    fn rejects_start_outside_disc() {
        let cfg = SimConfig::new(1e-3, 1.0, 9, 1).unwrap();
        assert!(matches!(
            simulate_path(QubitState::new(0.6, 0.5), &reference_gains(), &cfg, 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn blow_up_reports_step() {
        let ep = ExperimentParams::new(1.0, 1.0, 1e308, 1e308).unwrap();
        let err = simulate_driven(
            QubitState::new(0.3, 0.5),
            &ep,
            10.0,
            10,
            1,
            0.01,
            std::iter::repeat(0.0),
            4,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Integration { path: 4, .. }));
    }

    #[test]
    fn ensemble_at_target() {
        let cfg = SimConfig::new(1e-2, 1.0, 1, 16)
            .unwrap()
            .with_record_stride(10);
        let sum = run_ensemble(
            QubitState::TARGET,
            &reference_gains(),
            &cfg,
            &LyapunovConstants::default(),
        )
        .unwrap();
        assert_eq!(sum.fraction_converged, 1.0);
        assert!(sum.mean_v_curve.iter().all(|p| p.1 == 0.0));
        assert!(sum.unconverged_curve.iter().all(|p| p.1 == 0.0));
    }

    #[test]
    fn ensemble_is_thread_count_independent() {
        let cfg = SimConfig::new(1e-3, 2.0, 77, 64).unwrap();
        let run = || {
            run_ensemble(
                QubitState::NORTH_POLE,
                &reference_gains(),
                &cfg,
                &LyapunovConstants::default(),
            )
            .unwrap()
        };
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(run);
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(run);
        assert_eq!(one, four);
    }

    #[test]
    fn nu_is_a_martingale_without_feedback() {
        let ep = ExperimentParams::new(1.0, 0.5, 0.0, 0.0).unwrap();
        let cfg = SimConfig::new(1e-3, 2.0, 2024, 2000)
            .unwrap()
            .with_record_stride(50);
        let s0 = QubitState::new(0.3, 0.5);
        let sum = run_ensemble(s0, &ep, &cfg, &LyapunovConstants::default()).unwrap();
        assert_eq!(sum.nu_departure_beyond(0.5, 3.0), None);
    }

    #[test]
    fn pure_start_defect_is_first_order() {
        let mut ep = reference_gains();
        ep.eta = 1.0;
        let s0 = PureAngle::new(2.0).to_state();
        let t = simulate_path(s0, &ep, &SimConfig::new(1e-3, 1.0, 3, 1).unwrap(), 0).unwrap();
        assert!(t.max_pre_projection_defect > 0.0);
        assert!(t.max_pre_projection_defect < 0.02);
    }

    #[test]
    fn generator_check_at_origin_is_exact() {
        let cfg = SimConfig::new(1e-3, 1.0, 3, 32).unwrap();
        let chk = mean_generator_check(
            QubitState::TARGET,
            &reference_gains(),
            &cfg,
            &LyapunovConstants::default(),
            10,
        )
        .unwrap();
        assert_eq!(chk.discrepancy(), 0.0);
        assert_eq!(chk.standard_error, 0.0);
    }

    #[test]
    fn generator_check_matches_closed_form() {
        let cfg = SimConfig::new(1e-4, 1.0, 31, 10_000).unwrap();
        let k = LyapunovConstants::default();
        let chk = mean_generator_check(
            QubitState::new(0.3, 0.5),
            &reference_gains(),
            &cfg,
            &k,
            GENERATOR_CHECK_STEPS,
        )
        .unwrap();
        assert!(
            chk.discrepancy().abs() <= 3.0 * chk.standard_error + 0.05,
            "{chk:?}"
        );
        // the mixed Itô term vanishes at ν = ½
        assert!((chk.closed_form - chk.ito_closed_form).abs() < 1e-15);
        assert!(chk.standard_error < chk.raw_standard_error);

        let chk = mean_generator_check(
            QubitState::new(0.0, 0.9),
            &reference_gains(),
            &cfg,
            &k,
            GENERATOR_CHECK_STEPS,
        )
        .unwrap();
        assert!(chk.closed_form < 0.0);
        assert!(chk.estimate < 0.0, "{chk:?}");
    }

    #[test]
    fn tail_rate_of_exact_exponential() {
        let curve: Vec<(f64, f64)> = (0..=20)
            .map(|i| (i as f64 * 0.5, (-0.8 * i as f64 * 0.5).exp()))
            .collect();
        assert!((tail_rate(&curve, 5.0).unwrap() - 0.8).abs() < 1e-12);
        assert!(tail_rate(&[(1.0, 0.0), (2.0, 0.0)], 0.0).is_none());
    }
}
