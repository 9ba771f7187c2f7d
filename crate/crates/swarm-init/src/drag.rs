//! Along-track drag forcing under a residual tip-off spin, its Fourier
//! decomposition, closed-form particular solutions of the forced in-plane
//! equations, and the secular drift-center increments.
//!
//! A spinning cube face presents a projected area proportional to
//! `|cos| + |sin|` of the attitude phase. The forcing decomposes into a DC
//! term plus even harmonics at `nu_m = 4 m nu`. Only the harmonic secular
//! terms enter the drift-center increments; the DC part is common to every
//! satellite and cancels from relative quantities.
//!
//! The forced in-plane model here, in scaled coordinates, is
//!
//! ```text
//!   xbar'' = g xbar + h ybar'          g = 3 w^2 + alpha,  h = 2 w + beta
//!   ybar'' = -2 w xbar' - c_minus F(t)
//! ```
//!
//! with `alpha = 4 w^2 s / c_minus^2`, `beta = 4 w s / c_minus^2`. Its
//! natural in-plane frequency is `wn = sqrt(w^2 + 2 w beta - alpha)`. All
//! closed forms below are exact solutions of this system under zero initial
//! conditions; the increments are the non-oscillatory parts of the harmonic
//! responses mapped to the drift-center parameters.

use std::f64::consts::PI;

use thiserror::Error;

use crate::numerics::Vec2;
use crate::orbit::{DriftCenterState, OrbitModel};

/// Relative refusal band around the in-plane frequency for the increment
/// mapping.
pub const RESONANCE_TOL: f64 = 1e-3;

/// Default truncation order of the harmonic series.
pub const DEFAULT_M_TRUNC: usize = 5;

#[derive(Debug, Error)]
pub enum DragError {
    #[error("spin rate is zero; harmonic frequencies are undefined")]
    ZeroSpinRate,
    #[error("harmonic {harmonic} at {nu_m} rad/s is within the resonance band of {omega} rad/s")]
    ResonantSpin {
        harmonic: usize,
        nu_m: f64,
        omega: f64,
    },
    #[error("invalid forcing parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Spin-modulated along-track drag forcing and its Fourier data.
#[derive(Debug, Clone)]
pub struct DragForcing {
    /// Dynamic-pressure constant rho * C_d * v^2 [N/m^2 scale].
    pub k_air: f64,
    /// Cube side length in meters.
    pub side_length: f64,
    /// Satellite mass in kilograms.
    pub mass: f64,
    /// Spin rate [rad/s].
    pub nu: f64,
    /// Attitude phase at release in radians.
    pub phi: f64,
    /// Truncation order of the harmonic series.
    pub m_trunc: usize,
    /// Reference acceleration (8/pi^2) k_air a^2 / m [m/s^2].
    pub f_ref: f64,
}

impl DragForcing {
    /// DC component (pi/4) F_ref [m/s^2].
    pub fn f_dc(&self) -> f64 {
        0.25 * PI * self.f_ref
    }

    /// Harmonic amplitude (pi/2) F_ref / (16 m^2 - 1), m >= 1.
    pub fn fhat(&self, m: usize) -> f64 {
        0.5 * PI * self.f_ref / ((16 * m * m) as f64 - 1.0)
    }

    /// Harmonic frequency 4 m nu [rad/s].
    pub fn nu_m(&self, m: usize) -> f64 {
        4.0 * m as f64 * self.nu
    }

    /// Harmonic phase `4 m phi` in radians.
    pub fn psi_m(&self, m: usize) -> f64 {
        4.0 * m as f64 * self.phi
    }

    /// Truncated series value F_DC - sum_m Fhat_m cos(nu_m t + psi_m).
    pub fn series_value(&self, t: f64) -> f64 {
        let mut v = self.f_dc();
        for m in 1..=self.m_trunc {
            v -= self.fhat(m) * (self.nu_m(m) * t + self.psi_m(m)).cos();
        }
        v
    }

    /// Exact projected-area forcing (k/2)(a^2/m)(|cos| + |sin|)(nu t + phi).
    pub fn exact_value(&self, t: f64) -> f64 {
        let th = self.nu * t + self.phi;
        0.5 * self.k_air * self.side_length * self.side_length / self.mass
            * (th.cos().abs() + th.sin().abs())
    }

    /// Same forcing with a different attitude phase.
    pub fn with_phase(&self, phi: f64) -> Self {
        Self {
            phi,
            ..self.clone()
        }
    }

    /// Harmonic-only part of the series (DC removed).
    pub fn harmonic_value(&self, t: f64) -> f64 {
        self.series_value(t) - self.f_dc()
    }
}

/// Build the forcing and its Fourier data.
pub fn forcing_series(
    k_air: f64,
    side_length: f64,
    mass: f64,
    nu: f64,
    phi: f64,
    m_trunc: usize,
) -> Result<DragForcing, DragError> {
    if !side_length.is_finite() || side_length < 0.0 {
        return Err(DragError::InvalidParameter("side_length"));
    }
    if !mass.is_finite() || mass <= 0.0 {
        return Err(DragError::InvalidParameter("mass"));
    }
    if m_trunc >= 1 && nu == 0.0 {
        return Err(DragError::ZeroSpinRate);
    }
    let f_ref = 8.0 / (PI * PI) * k_air * side_length * side_length / mass;
    Ok(DragForcing {
        k_air,
        side_length,
        mass,
        nu,
        phi,
        m_trunc,
        f_ref,
    })
}

/// Dynamic-pressure constant rho C_d v^2 for a circular reference orbit.
pub fn k_air_from_density(model: &OrbitModel, rho: f64, c_d: f64) -> f64 {
    let v = model.orbital_speed();
    rho * c_d * v * v
}

/// Secular drift-center increments induced by the harmonic drag terms.
/// `c1_air` is a center offset in meters; `c4_air` carries meter-seconds and
/// always appears weighted by epsilon_2 / 2.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DragIncrements {
    pub c1_air: f64,
    pub c4_air: f64,
}

/// Coefficients of the forced in-plane system derived from the orbit model.
#[derive(Debug, Clone, Copy)]
pub struct ForcedSystem {
    pub omega: f64,
    pub alpha: f64,
    pub beta_coeff: f64,
    /// g = 3 w^2 + alpha.
    pub g: f64,
    /// h = 2 w + beta.
    pub h: f64,
    /// Natural frequency squared of the forced system.
    pub wn2: f64,
    pub c_plus: f64,
    pub c_minus: f64,
}

impl ForcedSystem {
    pub fn new(model: &OrbitModel) -> Self {
        let w = model.omega_xy;
        let cm2 = model.c_minus * model.c_minus;
        let alpha = 4.0 * w * w * model.s_j2 / cm2;
        let beta_coeff = 4.0 * w * model.s_j2 / cm2;
        let g = 3.0 * w * w + alpha;
        let h = 2.0 * w + beta_coeff;
        let wn2 = w * w + 2.0 * w * beta_coeff - alpha;
        Self {
            omega: w,
            alpha,
            beta_coeff,
            g,
            h,
            wn2,
            c_plus: model.c_plus,
            c_minus: model.c_minus,
        }
    }

    pub fn wn(&self) -> f64 {
        self.wn2.sqrt()
    }
}

/// Per-harmonic increment coefficients with the resonance check done once,
/// so increments can be evaluated repeatedly at sampled attitude phases.
#[derive(Debug, Clone)]
pub struct IncrementEvaluator {
    /// (c1 coefficient, c4 coefficient, phase multiple 4m) per harmonic.
    terms: Vec<(f64, f64, f64)>,
}

impl IncrementEvaluator {
    pub fn new(model: &OrbitModel, forcing: &DragForcing) -> Result<Self, DragError> {
        let sys = ForcedSystem::new(model);
        let mut terms = Vec::with_capacity(forcing.m_trunc);
        for m in 1..=forcing.m_trunc {
            let nu_m = forcing.nu_m(m);
            if (nu_m - model.omega_xy).abs() < RESONANCE_TOL * model.omega_xy {
                return Err(DragError::ResonantSpin {
                    harmonic: m,
                    nu_m,
                    omega: model.omega_xy,
                });
            }
            let fhat = forcing.fhat(m);
            // Non-oscillatory parts of the harmonic response, mapped to the
            // unscaled drift-center parametrization.
            let cx = -sys.h * sys.c_minus / (sys.c_plus * sys.wn2) * fhat / nu_m;
            let cy = -2.0 * sys.g / (model.epsilon_2 * sys.wn2) * fhat / (nu_m * nu_m);
            terms.push((cx, cy, 4.0 * m as f64));
        }
        Ok(Self { terms })
    }

    pub fn at_phase(&self, phi: f64) -> DragIncrements {
        let mut c1 = 0.0;
        let mut c4 = 0.0;
        for &(cx, cy, k) in &self.terms {
            let (s, c) = (k * phi).sin_cos();
            c1 += cx * s;
            c4 += cy * c;
        }
        DragIncrements {
            c1_air: c1,
            c4_air: c4,
        }
    }
}

/// Drift-center increments from the nonresonant harmonic secular terms.
///
/// Refuses when any retained harmonic falls inside the resonance band; the
/// resonant branch lives only in the verification oracle.
pub fn drag_increments(
    model: &OrbitModel,
    forcing: &DragForcing,
) -> Result<DragIncrements, DragError> {
    Ok(IncrementEvaluator::new(model, forcing)?.at_phase(forcing.phi))
}

/// Apply the drag increments to a drift center:
/// `C1' = C1 + C1_air/2`, `C4' = C4 + (eps2/2) C4_air`.
pub fn corrected_drift_center(
    model: &OrbitModel,
    base: &DriftCenterState,
    inc: &DragIncrements,
) -> DriftCenterState {
    DriftCenterState::new(
        base.c1p + 0.5 * inc.c1_air,
        base.c4p + 0.5 * model.epsilon_2 * inc.c4_air,
    )
}

/// Secular (non-oscillatory) drift predicted by the increments, in unscaled
/// coordinates: constant x offset plus an affine-in-time y component.
pub fn predicted_secular_drift(model: &OrbitModel, inc: &DragIncrements, t: f64) -> Vec2 {
    Vec2::new(
        inc.c1_air,
        0.5 * model.epsilon_2 * inc.c4_air - 0.5 * model.epsilon_2 * inc.c1_air * t,
    )
}

/// Sampled particular solution of the forced system (verification oracle).
#[derive(Debug, Clone)]
pub struct ForcedResponse {
    pub t: Vec<f64>,
    pub xbar: Vec<f64>,
    pub ybar: Vec<f64>,
    pub alpha: f64,
    pub beta_coeff: f64,
}

/// Relative frequency gap below which a harmonic is evaluated with the
/// resonant branch of the closed form.
const RESONANT_BRANCH_TOL: f64 = 1e-7;

/// Closed-form particular solution under zero initial conditions, as the
/// superposition of the DC response and one response per retained harmonic.
/// Both the nonresonant and resonant branches are implemented here.
pub fn forced_particular_solution(
    model: &OrbitModel,
    forcing: &DragForcing,
    t_grid: &[f64],
) -> ForcedResponse {
    let sys = ForcedSystem::new(model);
    let wn = sys.wn();
    let (g, h) = (sys.g, sys.h);
    let u0 = -sys.c_minus * forcing.f_dc();
    // Coefficient of (1 - cos) in the DC y response.
    let a_dc = (sys.wn2 + g) / (sys.wn2 * sys.wn2);

    let mut xbar = Vec::with_capacity(t_grid.len());
    let mut ybar = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let swn = (wn * t).sin();
        let cwn = (wn * t).cos();
        let mut x = h * u0 / sys.wn2 * (t - swn / wn);
        let mut y = u0 * (a_dc * (1.0 - cwn) - g / (2.0 * sys.wn2) * t * t);

        for m in 1..=forcing.m_trunc {
            let nu = forcing.nu_m(m);
            let psi = forcing.psi_m(m);
            let um = sys.c_minus * forcing.fhat(m);
            let (cpsi, spsi) = (psi.cos(), psi.sin());
            let (snu, cnu) = ((nu * t).sin(), (nu * t).cos());

            if (nu - wn).abs() <= RESONANT_BRANCH_TOL * wn {
                // Resonant branch: secular and t-modulated oscillations.
                x += h
                    * um
                    * (cpsi * (swn - wn * t * cwn) / (2.0 * wn.powi(3))
                        - spsi * ((1.0 - cwn) / wn.powi(3) - t * swn / (2.0 * sys.wn2)));
                y += um
                    * cpsi
                    * (-g / sys.wn2.powi(2)
                        + g * cwn / sys.wn2.powi(2)
                        + (1.0 + g / sys.wn2) * t * swn / (2.0 * wn));
                y -= um
                    * spsi
                    * wn
                    * (-g * t / sys.wn2.powi(2)
                        + g * swn / wn.powi(5)
                        + (1.0 + g / sys.wn2) * (swn - wn * t * cwn) / (2.0 * wn.powi(3)));
            } else {
                let delta = sys.wn2 - nu * nu;
                x += h
                    * um
                    * (cpsi * (snu / nu - swn / wn) / delta
                        - spsi
                            * (1.0 / (nu * sys.wn2) - cnu / (nu * delta)
                                + nu * cwn / (sys.wn2 * delta)));
                let nu2 = nu * nu;
                y += um
                    * cpsi
                    * (-g / (nu2 * sys.wn2) + (nu2 + g) * cnu / (nu2 * delta)
                        - (sys.wn2 + g) * cwn / (sys.wn2 * delta));
                y -= um
                    * spsi
                    * nu
                    * (-g * t / (nu2 * sys.wn2) + (nu2 + g) * snu / (nu2 * nu * delta)
                        - (sys.wn2 + g) * swn / (sys.wn2 * wn * delta));
            }
        }
        xbar.push(x);
        ybar.push(y);
    }
    ForcedResponse {
        t: t_grid.to_vec(),
        xbar,
        ybar,
        alpha: sys.alpha,
        beta_coeff: sys.beta_coeff,
    }
}

/// Fixed-step RK4 integration of the forced in-plane system under zero
/// initial conditions. `f_air` is the along-track forcing magnitude; the
/// applied input is `-c_minus * f_air(t)`. Returns states sampled every
/// `stride` steps, including t = 0 and the final step.
pub fn integrate_forced_rk4(
    model: &OrbitModel,
    f_air: impl Fn(f64) -> f64,
    t_end: f64,
    step: f64,
    stride: usize,
) -> ForcedResponse {
    let sys = ForcedSystem::new(model);
    let deriv = |t: f64, s: [f64; 4]| -> [f64; 4] {
        let [x, xd, _y, yd] = s;
        [
            xd,
            sys.g * x + sys.h * yd,
            yd,
            -2.0 * sys.omega * xd - sys.c_minus * f_air(t),
        ]
    };
    let n_steps = (t_end / step).ceil() as usize;
    let mut s = [0.0_f64; 4];
    let mut t = 0.0;
    let mut out_t = vec![0.0];
    let mut out_x = vec![0.0];
    let mut out_y = vec![0.0];
    for i in 1..=n_steps {
        let k1 = deriv(t, s);
        let half = |k: &[f64; 4], f: f64| {
            [
                s[0] + f * k[0],
                s[1] + f * k[1],
                s[2] + f * k[2],
                s[3] + f * k[3],
            ]
        };
        let k2 = deriv(t + 0.5 * step, half(&k1, 0.5 * step));
        let k3 = deriv(t + 0.5 * step, half(&k2, 0.5 * step));
        let k4 = deriv(t + step, half(&k3, step));
        for j in 0..4 {
            s[j] += step / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        t += step;
        if i % stride == 0 || i == n_steps {
            out_t.push(t);
            out_x.push(s[0]);
            out_y.push(s[2]);
        }
    }
    ForcedResponse {
        t: out_t,
        xbar: out_x,
        ybar: out_y,
        alpha: sys.alpha,
        beta_coeff: sys.beta_coeff,
    }
}

/// Tip-off spin rate from an impulse `dv` whose line of action is offset by
/// `d_off` from the center of mass of a cube with side `ell`:
/// `nu = 6 dv d_off / ell^2`.
pub fn tip_off_spin_rate(dv: f64, d_off: f64, ell: f64) -> f64 {
    6.0 * dv * d_off / (ell * ell)
}
