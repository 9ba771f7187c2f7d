//! Oblateness-averaged relative-motion coefficients, integration constants,
//! and the drift-center dynamics.
//!
//! The relative trajectory splits into a secular drift center plus bounded
//! oscillations. The drift center is carried as the pair `(C1', C4')` in the
//! vector representation `[2*C1'; C4']`, so free drift composes exactly:
//! position at time t is `Psi(t) * [2*C1'; C4']`.

use serde::Serialize;
use thiserror::Error;

use crate::numerics::{Mat2, Vec2};

/// Standard second zonal harmonic of Earth.
pub const J2_EARTH: f64 = 1.0826e-3;

#[derive(Debug, Error)]
pub enum OrbitError {
    #[error("averaged oblateness parameter s_J2 = {0} is outside (-1, 1)")]
    InvalidRegime(f64),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
}

/// Reference-orbit parameters and every derived coefficient of the averaged
/// in-plane model.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OrbitModel {
    /// Gravitational parameter [m^3/s^2].
    pub mu_g: f64,
    /// Reference orbital radius in meters.
    pub r_ref: f64,
    /// Reference inclination in radians.
    pub i_ref: f64,
    /// Scale constant of the averaged oblateness contribution [m^5/s^2].
    pub k_j2: f64,
    /// Dimensionless averaged oblateness parameter.
    pub s_j2: f64,
    /// sqrt(1 + s_j2).
    pub c_plus: f64,
    /// sqrt(1 - s_j2).
    pub c_minus: f64,
    /// In-plane eigenfrequency [rad/s].
    pub omega_xy: f64,
    /// Secular drift-rate coefficient [rad/s].
    pub epsilon_2: f64,
    /// Orbital motion constant `2 c+ / (omega_xy c-)` in seconds; also the forced
    /// response gain.
    pub k_0: f64,
    /// epsilon_2 / 2 * k_0 (dimensionless).
    pub k_eps: f64,
}

impl OrbitModel {
    /// Forced-response gain; identical to `k_0`.
    pub fn gamma_gain(&self) -> f64 {
        self.k_0
    }

    /// Mean motion of the unperturbed reference orbit [rad/s].
    pub fn mean_motion(&self) -> f64 {
        (self.mu_g / self.r_ref.powi(3)).sqrt()
    }

    /// Circular orbital speed in m/s.
    pub fn orbital_speed(&self) -> f64 {
        (self.mu_g / self.r_ref).sqrt()
    }
}

/// Conventional scale constant for the averaged oblateness term,
/// `k_J2 = (3/2) J2 mu R_e^2`, which reproduces the standard mean
/// oblateness parameter `(3 J2 Re^2 / (8 r^2)) (1 + 3 cos 2i)`.
pub fn k_j2_conventional(mu_g: f64, earth_radius: f64) -> f64 {
    1.5 * J2_EARTH * mu_g * earth_radius * earth_radius
}

/// Derive all model coefficients from the reference orbit.
pub fn derive_coefficients(
    mu_g: f64,
    r_ref: f64,
    i_ref: f64,
    k_j2: f64,
) -> Result<OrbitModel, OrbitError> {
    if !(mu_g > 0.0 && mu_g.is_finite()) {
        return Err(OrbitError::NonFinite("mu_g"));
    }
    if !(r_ref > 0.0 && r_ref.is_finite()) {
        return Err(OrbitError::NonFinite("r_ref"));
    }
    if !i_ref.is_finite() || !k_j2.is_finite() {
        return Err(OrbitError::NonFinite("i_ref/k_j2"));
    }
    let s_j2 = k_j2 * (1.0 + 3.0 * (2.0 * i_ref).cos()) / (4.0 * mu_g * r_ref * r_ref);
    if s_j2 >= 1.0 || s_j2 <= -1.0 {
        return Err(OrbitError::InvalidRegime(s_j2));
    }
    let c_plus = (1.0 + s_j2).sqrt();
    let c_minus = (1.0 - s_j2).sqrt();
    let omega_xy = c_minus * (mu_g / r_ref.powi(3)).sqrt();
    let epsilon_2 = (3.0 + 5.0 * s_j2) / (c_plus * c_minus) * omega_xy;
    let k_0 = 2.0 * c_plus / (omega_xy * c_minus);
    let k_eps = 0.5 * epsilon_2 * k_0;
    Ok(OrbitModel {
        mu_g,
        r_ref,
        i_ref,
        k_j2,
        s_j2,
        c_plus,
        c_minus,
        omega_xy,
        epsilon_2,
        k_0,
        k_eps,
    })
}

/// In-plane relative state in the curvilinear local frame (x radial,
/// y along-track), in meters and meters per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InPlaneState {
    pub x: f64,
    pub y: f64,
    pub xdot: f64,
    pub ydot: f64,
}

/// In-plane integration constants in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InPlaneElements {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

/// Drift center parameterized by (C1', C4'); the state vector used for all
/// propagation is `[2*C1'; C4']`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriftCenterState {
    pub c1p: f64,
    pub c4p: f64,
}

impl DriftCenterState {
    pub fn new(c1p: f64, c4p: f64) -> Self {
        Self { c1p, c4p }
    }

    /// Vector representation `[2*C1'; C4']`.
    pub fn vector(&self) -> Vec2 {
        Vec2::new(2.0 * self.c1p, self.c4p)
    }

    pub fn from_vector(v: Vec2) -> Self {
        Self {
            c1p: 0.5 * v.x,
            c4p: v.y,
        }
    }
}

/// Integration constants from an in-plane state.
pub fn elements_from_state(model: &OrbitModel, s: &InPlaneState) -> InPlaneElements {
    let (cp, cm, w) = (model.c_plus, model.c_minus, model.omega_xy);
    let xb = cp * s.x;
    let yb = cm * s.y;
    let xdb = cp * s.xdot;
    let ydb = cm * s.ydot;
    let c1 = cp / (cm * cm) * (2.0 * xb + ydb / w);
    let c4 = (yb - 2.0 * xdb / w) / cm;
    let c2 = 0.5 * (yb - cm * c4);
    let c3 = xb - 2.0 * cp * c1;
    InPlaneElements { c1, c2, c3, c4 }
}

/// Drift-center position at time `t`: `[2*C1'; C4' - eps2 * C1' * t]`.
pub fn drift_center_at(model: &OrbitModel, state: &DriftCenterState, t: f64) -> Vec2 {
    Vec2::new(2.0 * state.c1p, state.c4p - model.epsilon_2 * state.c1p * t)
}

/// Free-drift transition matrix acting on `[2*C1'; C4']`.
pub fn free_drift_transition(model: &OrbitModel, t: f64) -> Mat2 {
    Mat2::new(1.0, 0.0, -0.5 * model.epsilon_2 * t, 1.0)
}
