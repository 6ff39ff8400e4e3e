//! Lyapunov certificate for global stability of the target state `(0, 0)`.
//!
//! With `V(λ, ν) = cν + dλν − λ² − ν²` (`c > 1`, `0 < d < 2(c − 1)`), the
//! linear controller `B = g1·λ + g2·ν` stabilizes `(0, 0)` whenever
//! `ℒV < 0` on `D² ∖ {0}`. In the polar chart `(λ, ν) = r(sin θ, 1 + cos θ)`
//! this reduces to negativity of an auxiliary trigonometric polynomial
//! `f(r, θ)` on the compact box `[0, ½] × [−π, π]`, which [`certify`] checks by
//! grid search with adaptive refinement.
//!
//! Two versions of `f` are provided. [`f_aux`] is the six-term form whose
//! boundary values give the necessary gain conditions.
//! Its `d·g2` term is twice what `ℒV / (r²(1 + cos θ))` produces, so
//! [`f_aux_consistent`] carries the corrected coefficient and is the quotient
//! exactly. The certificate requires both maxima to be negative.

use std::cmp::Ordering;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{controller, drift_diffusion, ExperimentParams};
use crate::error::{Error, Result};
use crate::state_space::{PolarState, QubitState};

/// The constants `(c, d)` of `V(λ, ν) = cν + dλν − λ² − ν²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConstants {
    pub c: f64,
    pub d: f64,
}

impl LyapunovConstants {
    pub fn new(c: f64, d: f64) -> Result<Self> {
        let k = Self { c, d };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 1.0 && self.c.is_finite()) {
            return Err(Error::invalid(
                "c",
                self.c,
                "Lyapunov constant must satisfy c > 1",
            ));
        }
        if !(self.d > 0.0 && self.d < 2.0 * (self.c - 1.0)) {
            return Err(Error::invalid(
                "d",
                self.d,
                format!(
                    "Lyapunov constant must satisfy 0 < d < 2(c - 1) = {}",
                    2.0 * (self.c - 1.0)
                ),
            ));
        }
        Ok(())
    }

    /// `(∂_λ V, ∂_ν V)`.
    pub fn gradient(&self, s: QubitState) -> [f64; 2] {
        [
            self.d * s.nu - 2.0 * s.lambda,
            self.c + self.d * s.lambda - 2.0 * s.nu,
        ]
    }

    /// Constant Hessian of `V`.
    pub fn hessian(&self) -> [[f64; 2]; 2] {
        [[-2.0, self.d], [self.d, -2.0]]
    }
}

impl Default for LyapunovConstants {
    fn default() -> Self {
        Self { c: 4.0, d: 2.0 }
    }
}

/// Lyapunov constants plus the controls of the grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateParams {
    pub c: f64,
    pub d: f64,
    /// Radial nodes on `[0, ½]`.
    pub grid_r: usize,
    /// Angular nodes on `[−π, π]`.
    pub grid_theta: usize,
    /// Number of refinement passes.
    pub refine_depth: usize,
    /// Fraction of leaf cells bisected per pass.
    pub refine_fraction: f64,
    /// Certified iff the refined maximum is below `-margin`.
    pub margin: f64,
}

impl CertificateParams {
    pub const DEFAULT_GRID_R: usize = 201;
    pub const DEFAULT_GRID_THETA: usize = 629;
    pub const DEFAULT_REFINE_DEPTH: usize = 3;
    pub const DEFAULT_REFINE_FRACTION: f64 = 0.01;
    pub const DEFAULT_MARGIN: f64 = 1e-6;

    pub fn new(c: f64, d: f64) -> Result<Self> {
        let cp = Self {
            c,
            d,
            grid_r: Self::DEFAULT_GRID_R,
            grid_theta: Self::DEFAULT_GRID_THETA,
            refine_depth: Self::DEFAULT_REFINE_DEPTH,
            refine_fraction: Self::DEFAULT_REFINE_FRACTION,
            margin: Self::DEFAULT_MARGIN,
        };
        cp.validate()?;
        Ok(cp)
    }

    pub fn constants(&self) -> LyapunovConstants {
        LyapunovConstants {
            c: self.c,
            d: self.d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.constants().validate()?;
        if self.grid_r < 2 {
            return Err(Error::invalid(
                "grid_r",
                self.grid_r as f64,
                "need at least 2 radial nodes",
            ));
        }
        if self.grid_theta < 2 {
            return Err(Error::invalid(
                "grid_theta",
                self.grid_theta as f64,
                "need at least 2 angular nodes",
            ));
        }
        if !(self.refine_fraction > 0.0 && self.refine_fraction <= 1.0) {
            return Err(Error::invalid(
                "refine_fraction",
                self.refine_fraction,
                "must lie in (0, 1]",
            ));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::invalid(
                "margin",
                self.margin,
                "safety margin must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateResult {
    pub certified: bool,
    /// Refined maximum of [`f_aux`].
    pub f_max_estimate: f64,
    pub argmax: PolarState,
    /// Refined maximum of [`f_aux_consistent`].
    pub consistent_f_max: f64,
    pub consistent_argmax: PolarState,
    /// `g1 > (1 − η)M/(c − 1)` and `−4Mη/d < g2 < 0`.
    pub necessary_conditions_hold: bool,
    pub grid_evaluations: usize,
    pub margin: f64,
}

pub fn lyapunov_v(s: QubitState, k: &LyapunovConstants) -> f64 {
    let (l, n) = (s.lambda, s.nu);
    k.c * n + k.d * l * n - l * l - n * n
}

#[inline]
fn aux(r: f64, theta: f64, ep: &ExperimentParams, k: &LyapunovConstants, g2_term: f64) -> f64 {
    let LyapunovConstants { c, d } = *k;
    let ExperimentParams { m, eta, g1, g2 } = *ep;
    let (s, co) = theta.sin_cos();
    let (sh, ch) = (0.5 * theta).sin_cos();
    let one_minus = 2.0 * sh * sh;
    let one_plus = 2.0 * ch * ch;
    let half = one_plus * r - 0.5;
    let pure = one_plus * r - 1.0;
    (m - (c - 1.0) * g1) * one_minus - d * g1 * r * s * one_minus
        + (d * g1 * one_plus * r - (c - 1.0) * g2 - 0.5 * d * (g1 + m)) * s
        + g2_term * d * g2 * one_plus * (2.0 * r * co - 0.5)
        - 4.0 * m * eta * one_minus * half * half
        - 4.0 * m * eta * one_plus * pure * pure
}

/// The auxiliary function in its six-term form.
pub fn f_aux(p: PolarState, ep: &ExperimentParams, k: &LyapunovConstants) -> f64 {
    aux(p.r, p.theta, ep, k, 2.0)
}

/// `ℒV(r sin θ, r(1 + cos θ)) / (r²(1 + cos θ))`, extended continuously to
/// `r = 0` and `θ = ±π`.
pub fn f_aux_consistent(p: PolarState, ep: &ExperimentParams, k: &LyapunovConstants) -> f64 {
    aux(p.r, p.theta, ep, k, 1.0)
}

/// `f(r, ±π) = 2((1 − η)M − (c − 1)g1)`, shared by both forms.
pub fn f_aux_at_pi(ep: &ExperimentParams, k: &LyapunovConstants) -> f64 {
    2.0 * ((1.0 - ep.eta) * ep.m - (k.c - 1.0) * ep.g1)
}

/// `f(r, 0) = −32Mη(r² − (1 + d·g2/(4Mη))r + (4Mη + d·g2)/(16Mη))` for [`f_aux`].
pub fn f_aux_at_zero(r: f64, ep: &ExperimentParams, k: &LyapunovConstants) -> f64 {
    let me = ep.m * ep.eta;
    let dg = k.d * ep.g2;
    -32.0 * me * (r * r - (1.0 + dg / (4.0 * me)) * r + (4.0 * me + dg) / (16.0 * me))
}

/// Expanded closed form of the diagonal generator applied to `V`.
pub fn lv_closed_form(s: QubitState, ep: &ExperimentParams, k: &LyapunovConstants) -> f64 {
    let LyapunovConstants { c, d } = *k;
    let (l, n) = (s.lambda, s.nu);
    let b = controller(s, ep);
    let a = l * (n - 0.5);
    let q = n * (n - 1.0);
    (ep.m - d * b - (c - 1.0) * ep.g1) * l * l
        + d * ep.g2 * n * n * (n - 0.5)
        + (d * ep.g1 * (n - 0.5) - (c - 1.0) * ep.g2 - 0.5 * d * ep.m) * l * n
        - 4.0 * ep.m * ep.eta * (a * a + q * q)
}

/// `ℒV` under the full Itô generator: [`lv_closed_form`] plus `d·σ_λσ_ν`.
pub fn lv_ito(s: QubitState, ep: &ExperimentParams, k: &LyapunovConstants) -> f64 {
    let dd = drift_diffusion(s, ep);
    lv_closed_form(s, ep, k) + k.d * dd.diffusion[0] * dd.diffusion[1]
}

pub fn necessary_conditions(ep: &ExperimentParams, k: &LyapunovConstants) -> bool {
    let g1_min = (1.0 - ep.eta) * ep.m / (k.c - 1.0);
    let g2_min = -4.0 * ep.m * ep.eta / k.d;
    ep.g1 > g1_min && ep.g2 > g2_min && ep.g2 < 0.0
}

/// Grid search with adaptive refinement over `[0, ½] × [−π, π]`.
pub fn certify(ep: &ExperimentParams, cp: &CertificateParams) -> Result<CertificateResult> {
    ep.validate()?;
    cp.validate()?;
    let k = cp.constants();
    let six_term = grid_maximize(|r, t| f_aux(PolarState::new(r, t), ep, &k), cp);
    let consistent = grid_maximize(|r, t| f_aux_consistent(PolarState::new(r, t), ep, &k), cp);
    let necessary = necessary_conditions(ep, &k);
    let certified =
        necessary && six_term.value + cp.margin < 0.0 && consistent.value + cp.margin < 0.0;
    Ok(CertificateResult {
        certified,
        f_max_estimate: six_term.value,
        argmax: six_term.argmax,
        consistent_f_max: consistent.value,
        consistent_argmax: consistent.argmax,
        necessary_conditions_hold: necessary,
        grid_evaluations: six_term.evaluations + consistent.evaluations,
        margin: cp.margin,
    })
}

/// Result of [`grid_maximize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMax {
    pub value: f64,
    pub argmax: PolarState,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    r: [f64; 2],
    t: [f64; 2],
    // corner values, indexed [r][t]
    v: [[f64; 2]; 2],
}

impl Cell {
    /// Optimistic bound on the cell maximum: largest corner plus corner spread.
    fn score(&self) -> f64 {
        let c = [self.v[0][0], self.v[0][1], self.v[1][0], self.v[1][1]];
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        hi + (hi - lo)
    }
}

#[derive(Debug, Clone, Copy)]
struct Best {
    value: f64,
    r: f64,
    t: f64,
}

impl Best {
    fn offer(&mut self, value: f64, r: f64, t: f64) {
        // NaN loses; ties keep the earlier point
        if value > self.value || (self.value.is_nan() && !value.is_nan()) {
            *self = Best { value, r, t };
        }
    }
}

/// Maximizes `f(r, θ)` on a `grid_r × grid_theta` node grid, then bisects the
/// top `refine_fraction` of leaf cells (at least four, ranked by
/// an optimistic bound on their maximum) `refine_depth` times. Deterministic for any thread count.
pub fn grid_maximize<F>(f: F, cp: &CertificateParams) -> GridMax
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let nr = cp.grid_r;
    let nt = cp.grid_theta;
    let r_at = |i: usize| 0.5 * i as f64 / (nr - 1) as f64;
    let t_at = |j: usize| {
        if j == nt - 1 {
            PI
        } else {
            -PI + 2.0 * PI * j as f64 / (nt - 1) as f64
        }
    };

    let values: Vec<Vec<f64>> = (0..nr)
        .into_par_iter()
        .map(|i| (0..nt).map(|j| f(r_at(i), t_at(j))).collect())
        .collect();
    let mut evaluations = nr * nt;

    let mut best = Best {
        value: f64::NEG_INFINITY,
        r: 0.0,
        t: 0.0,
    };
    for (i, row) in values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            best.offer(v, r_at(i), t_at(j));
        }
    }

    let mut leaves: Vec<Cell> = Vec::with_capacity((nr - 1) * (nt - 1));
    for i in 0..nr - 1 {
        for j in 0..nt - 1 {
            leaves.push(Cell {
                r: [r_at(i), r_at(i + 1)],
                t: [t_at(j), t_at(j + 1)],
                v: [
                    [values[i][j], values[i][j + 1]],
                    [values[i + 1][j], values[i + 1][j + 1]],
                ],
            });
        }
    }

    for _ in 0..cp.refine_depth {
        let take = ((leaves.len() as f64 * cp.refine_fraction).ceil() as usize)
            .clamp(4.min(leaves.len()), leaves.len());
        let mut order: Vec<usize> = (0..leaves.len()).collect();
        // stable: equal scores keep index order
        order.sort_by(|&a, &b| {
            leaves[b]
                .score()
                .partial_cmp(&leaves[a].score())
                .unwrap_or(Ordering::Equal)
        });
        let mut selected = vec![false; leaves.len()];
        for &idx in &order[..take] {
            selected[idx] = true;
        }
        let chosen: Vec<Cell> = order[..take].iter().map(|&i| leaves[i]).collect();

        let refined: Vec<([Cell; 4], [(f64, f64, f64); 5])> = chosen
            .par_iter()
            .map(|cell| {
                let rm = 0.5 * (cell.r[0] + cell.r[1]);
                let tm = 0.5 * (cell.t[0] + cell.t[1]);
                let pts = [
                    (rm, cell.t[0]),
                    (rm, cell.t[1]),
                    (cell.r[0], tm),
                    (cell.r[1], tm),
                    (rm, tm),
                ];
                let ev = pts.map(|(r, t)| (f(r, t), r, t));
                let [e_r0, e_r1, e_t0, e_t1, e_c] = ev.map(|e| e.0);
                let v = cell.v;
                let children = [
                    Cell {
                        r: [cell.r[0], rm],
                        t: [cell.t[0], tm],
                        v: [[v[0][0], e_t0], [e_r0, e_c]],
                    },
                    Cell {
                        r: [cell.r[0], rm],
                        t: [tm, cell.t[1]],
                        v: [[e_t0, v[0][1]], [e_c, e_r1]],
                    },
                    Cell {
                        r: [rm, cell.r[1]],
                        t: [cell.t[0], tm],
                        v: [[e_r0, e_c], [v[1][0], e_t1]],
                    },
                    Cell {
                        r: [rm, cell.r[1]],
                        t: [tm, cell.t[1]],
                        v: [[e_c, e_r1], [e_t1, v[1][1]]],
                    },
                ];
                (children, ev)
            })
            .collect();

        evaluations += 5 * refined.len();
        for (_, ev) in &refined {
            for &(v, r, t) in ev {
                best.offer(v, r, t);
            }
        }
        let mut next: Vec<Cell> = leaves
            .iter()
            .zip(&selected)
            .filter(|(_, &s)| !s)
            .map(|(c, _)| *c)
            .collect();
        next.extend(refined.into_iter().flat_map(|(children, _)| children));
        leaves = next;
    }

    GridMax {
        value: best.value,
        argmax: PolarState::new(best.r, best.t),
        evaluations,
    }
}

/// Uniform sample of the disc's interior via rejection, for tests and checks.
#[cfg(test)]
pub(crate) fn sample_disc<R: rand::Rng>(rng: &mut R) -> QubitState {
    loop {
        let l = rng.random_range(-0.5..0.5);
        let n = rng.random_range(0.0..1.0);
        let s = QubitState::new(l, n);
        if s.disc_function() <= 0.0 {
            return s;
        }
    }
}
