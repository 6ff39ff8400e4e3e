//! Reduced stochastic master equation of a homodyne-monitored qubit.
//!
//! The operator-valued filter is
//!
//! ```text
//! dρ = 𝒢*[H, L] ρ dt + √η ℋ[L] ρ dW
//! 𝒢* ρ = −i[H, ρ] + LρL* − ½(L*Lρ + ρL*L)
//! ℋ[L] ρ = Lρ + ρL* − Tr[ρ(L + L*)] ρ
//! ```
//!
//! with `L = √M J_z`, `H = B(t) J_y` and a single scalar innovations increment
//! `dW`. On real density matrices it reduces to the planar Itô equation
//!
//! ```text
//! dλ = [B(ν − ½) − (M/2)λ] dt + √(Mη) λ(1 − 2ν) dW
//! dν = −Bλ dt − 2√(Mη) ν(ν − 1) dW
//! ```
//!
//! which is the only form implemented here. Both components share the same
//! `dW`, so the true Itô generator carries a mixed second-derivative term.
//! [`generator_apply`] omits it (diagonal form used by the stability
//! analysis), [`generator_apply_ito`] keeps it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state_space::QubitState;

/// Measurement rate `m` and efficiency `eta` of the probe, and the linear
/// feedback gains of `B(λ, ν) = g1·λ + g2·ν`. Rates are in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub m: f64,
    pub eta: f64,
    pub g1: f64,
    pub g2: f64,
}

impl ExperimentParams {
    pub fn new(m: f64, eta: f64, g1: f64, g2: f64) -> Result<Self> {
        let p = Self { m, eta, g1, g2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::invalid(
                "m",
                self.m,
                "measurement rate must satisfy M > 0",
            ));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::invalid(
                "eta",
                self.eta,
                "detection efficiency must satisfy 0 < eta <= 1",
            ));
        }
        if !self.g1.is_finite() {
            return Err(Error::invalid("g1", self.g1, "gain must be finite"));
        }
        if !self.g2.is_finite() {
            return Err(Error::invalid("g2", self.g2, "gain must be finite"));
        }
        Ok(())
    }

    /// `√(Mη)`, the measurement strength entering the noise terms.
    #[inline]
    pub fn noise_strength(&self) -> f64 {
        (self.m * self.eta).sqrt()
    }
}

/// Drift `b` and diffusion `σ` of `dx = b dt + σ dW` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftDiffusion {
    pub drift: [f64; 2],
    pub diffusion: [f64; 2],
}

/// The applied field `B = g1·λ + g2·ν`.
#[inline]
pub fn controller(s: QubitState, p: &ExperimentParams) -> f64 {
    p.g1 * s.lambda + p.g2 * s.nu
}

#[inline]
pub fn drift_diffusion(s: QubitState, p: &ExperimentParams) -> DriftDiffusion {
    let b = controller(s, p);
    let k = p.noise_strength();
    DriftDiffusion {
        drift: [b * (s.nu - 0.5) - 0.5 * p.m * s.lambda, -b * s.lambda],
        diffusion: [
            k * s.lambda * (1.0 - 2.0 * s.nu),
            -2.0 * k * s.nu * (s.nu - 1.0),
        ],
    }
}

/// Diagonal generator
/// `[B(ν−½) − (M/2)λ]∂_λ − Bλ∂_ν + 2Mη[λ²(ν−½)²∂²_λ + ν²(ν−1)²∂²_ν]`.
///
/// `grad = (∂_λ f, ∂_ν f)`, `hess_diag = (∂²_λ f, ∂²_ν f)`.
pub fn generator_apply(
    s: QubitState,
    p: &ExperimentParams,
    grad: [f64; 2],
    hess_diag: [f64; 2],
) -> f64 {
    let b = controller(s, p);
    let (l, n) = (s.lambda, s.nu);
    let first = (b * (n - 0.5) - 0.5 * p.m * l) * grad[0] - b * l * grad[1];
    let a = l * (n - 0.5);
    let c = n * (n - 1.0);
    first + 2.0 * p.m * p.eta * (a * a * hess_diag[0] + c * c * hess_diag[1])
}

/// Full Itô generator `b·∇f + ½ σᵀ(∇²f)σ`, including `σ_λσ_ν ∂²f/∂λ∂ν`.
pub fn generator_apply_ito(
    s: QubitState,
    p: &ExperimentParams,
    grad: [f64; 2],
    hess: [[f64; 2]; 2],
) -> f64 {
    let dd = drift_diffusion(s, p);
    let [sl, sn] = dd.diffusion;
    dd.drift[0] * grad[0]
        + dd.drift[1] * grad[1]
        + 0.5 * (sl * sl * hess[0][0] + sn * sn * hess[1][1])
        + sl * sn * 0.5 * (hess[0][1] + hess[1][0])
}
