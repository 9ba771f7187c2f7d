//! Experiment configuration: a single JSON document holding every science
//! parameter. The command line only selects the command and file paths.

use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::drag::k_air_from_density;
use crate::orbit::{derive_coefficients, k_j2_conventional, OrbitModel};
use crate::safety::{
    AnalysisSetup, DragSetup, PolicyMode, ReleasePolicy, SafetyConfig, SafetyError,
};
use crate::stages::ConsensusModel;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config key `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error(transparent)]
    Safety(#[from] SafetyError),
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitBlock {
    pub mu: f64,
    #[serde(rename = "R_e")]
    pub r_e: f64,
    pub h: f64,
    /// Inclination in degrees.
    pub i0: f64,
    pub rho: f64,
    #[serde(rename = "C_d")]
    pub c_d: f64,
    #[serde(rename = "A_over_m")]
    pub a_over_m: f64,
    pub m: f64,
    pub ell: f64,
    pub d_off: f64,
    /// Override of the averaged-oblateness scale constant [m^5/s^2].
    #[serde(rename = "k_J2", default)]
    pub k_j2: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusBlock {
    #[serde(rename = "k_A")]
    pub k_a: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyBlock {
    pub r_c: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Copy> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentBlock {
    #[serde(rename = "N")]
    pub n: OneOrMany<u64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub dt_grid: Option<Vec<f64>>,
    pub policy: String,
    pub xdot: f64,
    pub ydot: f64,
    #[serde(default)]
    pub dt_ref: Option<f64>,
    #[serde(default)]
    pub row_spacing: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DragBlock {
    #[serde(rename = "M_trunc", default)]
    pub m_trunc: Option<u32>,
    /// Override of the derived dynamic-pressure constant.
    #[serde(default)]
    pub k_air: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    pub n_trials: u64,
    pub seed: u64,
    pub variance_factor: f64,
    #[serde(default)]
    pub worst_q: Option<u64>,
    #[serde(default)]
    pub trace_dt: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub orbit: OrbitBlock,
    pub consensus: ConsensusBlock,
    pub safety: SafetyBlock,
    pub deployment: DeploymentBlock,
    #[serde(default)]
    pub drag: DragBlock,
    #[serde(default)]
    pub mc: Option<McBlock>,
}

pub const DEFAULT_ROW_SPACING: f64 = 0.25;
pub const DEFAULT_M_TRUNC: u32 = 5;
pub const DEFAULT_WORST_Q: u64 = 100;
pub const DEFAULT_TRACE_DT: f64 = 1.0;

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let o = &self.orbit;
        let pos: [(&'static str, f64); 9] = [
            ("mu", o.mu),
            ("R_e", o.r_e),
            ("h", o.h),
            ("rho", o.rho),
            ("C_d", o.c_d),
            ("A_over_m", o.a_over_m),
            ("m", o.m),
            ("ell", o.ell),
            ("d_off", o.d_off),
        ];
        for (key, v) in pos {
            if !v.is_finite() || v <= 0.0 {
                return Err(invalid(
                    key,
                    format!("must be positive and finite, got {v}"),
                ));
            }
        }
        if !(0.0..=180.0).contains(&o.i0) {
            return Err(invalid("i0", "inclination must lie in [0, 180] degrees"));
        }
        let geom = o.ell * o.ell / o.m;
        if (o.a_over_m - geom).abs() > 1e-6 * geom {
            return Err(invalid(
                "A_over_m",
                format!("inconsistent with ell^2/m = {geom}"),
            ));
        }
        if let Some(k) = o.k_j2 {
            if !k.is_finite() {
                return Err(invalid("k_J2", "must be finite"));
            }
        }
        if !self.consensus.k_a.is_finite() || self.consensus.k_a < 0.0 {
            return Err(invalid("k_A", "must be nonnegative and finite"));
        }
        if !(self.safety.r_c.is_finite()) || self.safety.r_c <= 0.0 {
            return Err(invalid("r_c", "must be positive"));
        }
        if self.safety.beta.is_nan() || self.safety.beta <= 0.0 || self.safety.beta >= 1.0 {
            return Err(invalid("beta", "must lie in (0, 1)"));
        }

        let d = &self.deployment;
        for n in d.n.to_vec() {
            if n < 1 {
                return Err(invalid("N", "cluster count must be >= 1"));
            }
        }
        match (&d.dt, &d.dt_grid) {
            (Some(dt), None) => {
                if !dt.is_finite() || *dt <= 0.0 {
                    return Err(invalid("dt", "must be positive"));
                }
            }
            (None, Some(grid)) => {
                if grid.is_empty() {
                    return Err(invalid("dt_grid", "must not be empty"));
                }
                let mut prev = 0.0;
                for &v in grid {
                    if !v.is_finite() || v <= 0.0 {
                        return Err(invalid("dt_grid", "entries must be positive"));
                    }
                    if v <= prev {
                        return Err(invalid("dt_grid", "entries must be strictly ascending"));
                    }
                    prev = v;
                }
            }
            (Some(_), Some(_)) => {
                return Err(invalid("dt_grid", "provide either dt or dt_grid, not both"));
            }
            (None, None) => {
                return Err(invalid("dt", "one of dt or dt_grid is required"));
            }
        }
        match d.policy.as_str() {
            "fixed_velocity" => {}
            "drift_matched" => {
                if !matches!(d.dt_ref, Some(v) if v > 0.0) {
                    return Err(invalid("dt_ref", "required and positive for drift_matched"));
                }
            }
            other => {
                return Err(invalid(
                    "policy",
                    format!("unknown mode `{other}`; use fixed_velocity or drift_matched"),
                ));
            }
        }
        if !(d.xdot.is_finite() && d.ydot.is_finite()) {
            return Err(invalid("xdot", "velocities must be finite"));
        }
        if let Some(s) = d.row_spacing {
            if !s.is_finite() || s <= 0.0 {
                return Err(invalid("row_spacing", "must be positive"));
            }
        }
        if let Some(m) = self.drag.m_trunc {
            if m < 1 {
                return Err(invalid("M_trunc", "must be >= 1"));
            }
        }
        if let Some(k) = self.drag.k_air {
            if !k.is_finite() || k <= 0.0 {
                return Err(invalid("k_air", "must be positive"));
            }
        }
        if let Some(mc) = &self.mc {
            if mc.n_trials < 1 {
                return Err(invalid("n_trials", "must be >= 1"));
            }
            if !mc.variance_factor.is_finite() || mc.variance_factor < 0.0 {
                return Err(invalid("variance_factor", "must be nonnegative and finite"));
            }
            if let Some(q) = mc.worst_q {
                if q < 1 {
                    return Err(invalid("worst_q", "must be >= 1"));
                }
            }
            if let Some(t) = mc.trace_dt {
                if !t.is_finite() || t <= 0.0 {
                    return Err(invalid("trace_dt", "must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn orbit_model(&self) -> Result<OrbitModel, ConfigError> {
        let o = &self.orbit;
        let r_ref = o.r_e + o.h;
        let k_j2 = o.k_j2.unwrap_or_else(|| k_j2_conventional(o.mu, o.r_e));
        derive_coefficients(o.mu, r_ref, o.i0.to_radians(), k_j2)
            .map_err(|e| invalid("i0", e.to_string()))
    }

    pub fn resolved_k_air(&self, model: &OrbitModel) -> f64 {
        self.drag
            .k_air
            .unwrap_or_else(|| k_air_from_density(model, self.orbit.rho, self.orbit.c_d))
    }

    pub fn analysis_setup(&self) -> Result<AnalysisSetup, ConfigError> {
        let model = self.orbit_model()?;
        let policy = ReleasePolicy {
            mode: match self.deployment.policy.as_str() {
                "fixed_velocity" => PolicyMode::FixedVelocity,
                _ => PolicyMode::DriftMatched,
            },
            base_xdot: self.deployment.xdot,
            base_ydot: self.deployment.ydot,
            dt_ref: self.deployment.dt_ref.unwrap_or(0.0),
        };
        Ok(AnalysisSetup {
            model,
            consensus: ConsensusModel::new(self.consensus.k_a, &model),
            policy,
            drag: DragSetup {
                k_air: self.resolved_k_air(&model),
                side_length: self.orbit.ell,
                mass: self.orbit.m,
                d_off: self.orbit.d_off,
                m_trunc: self.drag.m_trunc.unwrap_or(DEFAULT_M_TRUNC) as usize,
            },
            row_spacing: self.deployment.row_spacing.unwrap_or(DEFAULT_ROW_SPACING),
            safety: SafetyConfig::new(self.safety.r_c, self.safety.beta)?,
        })
    }

    pub fn n_list(&self) -> Vec<usize> {
        self.deployment
            .n
            .to_vec()
            .iter()
            .map(|&n| n as usize)
            .collect()
    }

    pub fn dt_grid(&self) -> Vec<f64> {
        match (&self.deployment.dt, &self.deployment.dt_grid) {
            (Some(dt), _) => vec![*dt],
            (_, Some(grid)) => grid.clone(),
            _ => unreachable!("validated"),
        }
    }

    /// Full config echo with defaults and derived constants resolved, for
    /// embedding in every output file.
    pub fn resolved_json(&self) -> Result<Value, ConfigError> {
        let model = self.orbit_model()?;
        Ok(json!({
            "orbit": {
                "mu": self.orbit.mu,
                "R_e": self.orbit.r_e,
                "h": self.orbit.h,
                "i0": self.orbit.i0,
                "rho": self.orbit.rho,
                "C_d": self.orbit.c_d,
                "A_over_m": self.orbit.a_over_m,
                "m": self.orbit.m,
                "ell": self.orbit.ell,
                "d_off": self.orbit.d_off,
                "k_J2": self.orbit.k_j2.unwrap_or_else(|| k_j2_conventional(self.orbit.mu, self.orbit.r_e)),
            },
            "consensus": { "k_A": self.consensus.k_a },
            "safety": { "r_c": self.safety.r_c, "beta": self.safety.beta },
            "deployment": {
                "N": self.deployment.n.to_vec(),
                "dt_grid": self.dt_grid(),
                "policy": self.deployment.policy,
                "xdot": self.deployment.xdot,
                "ydot": self.deployment.ydot,
                "dt_ref": self.deployment.dt_ref,
                "row_spacing": self.deployment.row_spacing.unwrap_or(DEFAULT_ROW_SPACING),
            },
            "drag": {
                "M_trunc": self.drag.m_trunc.unwrap_or(DEFAULT_M_TRUNC),
                "k_air": self.resolved_k_air(&model),
            },
            "mc": self.mc.as_ref().map(|mc| json!({
                "n_trials": mc.n_trials,
                "seed": mc.seed,
                "variance_factor": mc.variance_factor,
                "worst_q": mc.worst_q.unwrap_or(DEFAULT_WORST_Q),
                "trace_dt": mc.trace_dt.unwrap_or(DEFAULT_TRACE_DT),
            })),
        }))
    }
}
