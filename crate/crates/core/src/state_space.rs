//! Geometry of the real spin-½ density-operator disc.
//!
//! A qubit density matrix with real off-diagonal part is
//!
//! ```text
//! ρ = [ ν   λ ]      D² = {(λ, ν): λ² + ν(ν − 1) ≤ 0}
//!     [ λ 1−ν ]
//! ```
//!
//! i.e. the closed disc with center `(0, ½)` and radius `½`. The target state
//! `|1⟩⟨1|` is the origin `(0, 0)`, and `|0⟩⟨0|` is the north pole `(0, 1)`.
//! Imaginary parts of the coherences decouple from the feedback dynamics and
//! are not represented.
//!
//! Two charts are used:
//!
//! * the polar chart `(λ, ν) = r(sin θ, 1 + cos θ)` with `r ∈ [0, ½]`, in which
//!   every `θ = ±π` collapses onto the origin;
//! * the pure-state circle `(λ, ν) = ½(sin θ, 1 + cos θ)`, where `θ = ±π` is
//!   the target state and `θ = 0` is `|0⟩⟨0|`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radius of the disc.
pub const DISC_RADIUS: f64 = 0.5;

/// A point `(λ, ν)`; `λ = ρ₂₁ = ρ₁₂`, `ν = ρ₁₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitState {
    pub lambda: f64,
    pub nu: f64,
}

impl QubitState {
    pub const TARGET: QubitState = QubitState {
        lambda: 0.0,
        nu: 0.0,
    };
    pub const NORTH_POLE: QubitState = QubitState {
        lambda: 0.0,
        nu: 1.0,
    };

    pub const fn new(lambda: f64, nu: f64) -> Self {
        Self { lambda, nu }
    }

    /// `λ² + ν(ν − 1)`, signed. Non-positive exactly on the disc.
    #[inline]
    pub fn disc_function(&self) -> f64 {
        self.lambda * self.lambda + self.nu * (self.nu - 1.0)
    }

    pub fn in_disc(&self, tol: f64) -> bool {
        self.disc_function() <= tol
    }

    /// Euclidean distance to the target state `(0, 0)`.
    pub fn distance_to_target(&self) -> f64 {
        self.lambda.hypot(self.nu)
    }

    pub fn is_finite(&self) -> bool {
        self.lambda.is_finite() && self.nu.is_finite()
    }
}

/// Polar coordinates `(r, θ)` with `(λ, ν) = r(sin θ, 1 + cos θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarState {
    pub r: f64,
    pub theta: f64,
}

impl PolarState {
    pub const fn new(r: f64, theta: f64) -> Self {
        Self { r, theta }
    }
}

/// An angle on the pure-state circle, canonicalized to `(−π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PureAngle(f64);

impl PureAngle {
    pub fn new(theta: f64) -> Self {
        Self(canonical_angle(theta))
    }

    pub fn theta(self) -> f64 {
        self.0
    }

    /// The boundary point `½(sin θ, 1 + cos θ)` of the disc.
    pub fn to_state(self) -> QubitState {
        polar_point(DISC_RADIUS, self.0)
    }
}

/// Maps any finite angle to `(−π, π]`; `−π` is identified with `π`.
pub fn canonical_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t > PI {
        t - TAU
    } else {
        t
    }
}

/// `r = (λ² + ν²)/(2ν)`, `θ = 2·atan2(λ, ν)`.
pub fn to_polar(s: QubitState) -> Result<PolarState> {
    if s.lambda == 0.0 && s.nu == 0.0 {
        return Err(Error::Domain("polar chart undefined at origin".into()));
    }
    if !(s.nu > 0.0) {
        return Err(Error::Domain(format!(
            "polar chart requires nu > 0, got ({}, {})",
            s.lambda, s.nu
        )));
    }
    let r = (s.lambda * s.lambda + s.nu * s.nu) / (2.0 * s.nu);
    let theta = 2.0 * s.lambda.atan2(s.nu);
    Ok(PolarState { r, theta })
}

pub fn from_polar(p: PolarState) -> Result<QubitState> {
    if !(0.0..=DISC_RADIUS).contains(&p.r) {
        return Err(Error::Domain(format!(
            "radius r = {} outside [0, 1/2]",
            p.r
        )));
    }
    if !p.theta.is_finite() {
        return Err(Error::Domain(format!("non-finite angle {}", p.theta)));
    }
    Ok(polar_point(p.r, p.theta))
}

/// Unchecked polar map, for hot loops over validated grids.
#[inline]
pub(crate) fn polar_point(r: f64, theta: f64) -> QubitState {
    // 1 + cos θ = 2cos²(θ/2), accurate near θ = ±π
    let h = (0.5 * theta).cos();
    QubitState::new(r * theta.sin(), 2.0 * r * h * h)
}

/// `max(0, λ² + ν(ν − 1))`.
pub fn membership_defect(s: QubitState) -> f64 {
    s.disc_function().max(0.0)
}

/// Radial projection toward the disc center `(0, ½)`; identity on `D²`.
pub fn project_to_disc(s: QubitState) -> QubitState {
    if s.disc_function() <= 0.0 {
        return s;
    }
    let dl = s.lambda;
    let dn = s.nu - DISC_RADIUS;
    let dist = dl.hypot(dn);
    let mut radius = DISC_RADIUS;
    loop {
        let k = radius / dist;
        let p = QubitState::new(dl * k, DISC_RADIUS + dn * k);
        // rounding can leave the image a few ulps outside
        if p.disc_function() <= 0.0 {
            return p;
        }
        radius *= 1.0 - f64::EPSILON;
    }
}
