//! Machine-readable outputs: sweep tables, Monte Carlo summaries and
//! traces, and the coefficient echo. All outputs are deterministic
//! functions of the configuration and embed the resolved config for
//! provenance.

use serde_json::json;

use crate::config::{ConfigError, ExperimentConfig, DEFAULT_TRACE_DT, DEFAULT_WORST_Q};
use crate::drag::predicted_secular_drift;
use crate::graph::build_row_ladder;
use crate::monte_carlo::{run_trials, TrialConfig};
use crate::safety::{release_policy_nominal, sweep_interval, DEFAULT_SEARCH_TOL};

/// Fixed-precision scientific formatting: 12 significant digits, point
/// decimal separator, no locale.
pub fn fmt_sig(x: f64) -> String {
    format!("{x:.11e}")
}

fn invalid(key: &'static str, reason: &str) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.to_string(),
    }
}

/// Derived-coefficient echo for `validate`: model constants plus the
/// nominal tip-off spin rate and drag increments at the first grid
/// interval.
pub fn validate_echo(cfg: &ExperimentConfig) -> Result<String, ConfigError> {
    let setup = cfg.analysis_setup()?;
    let dt = cfg.dt_grid()[0];
    let row = release_policy_nominal(
        &setup.policy,
        &setup.model,
        &setup.drag,
        setup.row_spacing,
        dt,
    )?;
    let m = &setup.model;
    let drift = predicted_secular_drift(m, &row.increments, dt);
    let mut out = String::new();
    out.push_str(&format!("s_J2        = {}\n", fmt_sig(m.s_j2)));
    out.push_str(&format!("omega_xy    = {} rad/s\n", fmt_sig(m.omega_xy)));
    out.push_str(&format!("epsilon_2   = {} 1/s\n", fmt_sig(m.epsilon_2)));
    out.push_str(&format!("k_0         = {} s\n", fmt_sig(m.k_0)));
    out.push_str(&format!("nu          = {} rad/s\n", fmt_sig(row.nu)));
    out.push_str(&format!(
        "C1_air      = {} m\n",
        fmt_sig(row.increments.c1_air)
    ));
    out.push_str(&format!(
        "C4_air      = {} m*s\n",
        fmt_sig(row.increments.c4_air)
    ));
    out.push_str(&format!(
        "drag drift over dt = ({}, {}) m\n",
        fmt_sig(drift.x),
        fmt_sig(drift.y)
    ));
    out.push_str(&format!(
        "nominal centers (2C1', C4') per column = {}\n",
        row.centers
            .iter()
            .map(|c| format!("({}, {})", fmt_sig(2.0 * c.c1p), fmt_sig(c.c4p)))
            .collect::<Vec<_>>()
            .join(" ")
    ));
    Ok(out)
}

/// Allowable-factor sweep over every configured (dt, N) pair, as CSV with
/// the resolved config embedded in a leading comment line.
pub fn sweep_csv(cfg: &ExperimentConfig) -> Result<String, ConfigError> {
    let setup = cfg.analysis_setup()?;
    let grid = cfg.dt_grid();
    let mut out = String::new();
    out.push_str(&format!(
        "# config: {}\n",
        serde_json::to_string(&cfg.resolved_json()?).expect("serializable")
    ));
    out.push_str(
        "dt_s,N,allowable_factor,worst_stage,mean_budget_Akmu_m,mean_budget_Bkmu_m,diagnostic\n",
    );
    for n in cfg.n_list() {
        let rows = sweep_interval(&setup, n, &grid, DEFAULT_SEARCH_TOL);
        for r in rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt_sig(r.dt),
                r.n_rows,
                fmt_sig(r.factor),
                r.worst_stage,
                fmt_sig(r.mean_budget_akmu),
                fmt_sig(r.mean_budget_bkmu),
                r.diagnostic
            ));
        }
    }
    Ok(out)
}

/// Bundle of Monte Carlo output documents.
pub struct McOutputs {
    pub summary_json: String,
    pub trace_csv: String,
    pub topology_json: String,
    /// Empirical failure rate within the configured risk level.
    pub gate_pass: bool,
}

/// Run the configured Monte Carlo batch and render its outputs.
pub fn montecarlo_outputs(cfg: &ExperimentConfig) -> Result<McOutputs, ConfigError> {
    let mc = cfg
        .mc
        .as_ref()
        .ok_or_else(|| invalid("mc", "the montecarlo command requires an mc block"))?;
    let n_list = cfg.n_list();
    if n_list.len() != 1 {
        return Err(invalid("N", "montecarlo requires a single cluster count"));
    }
    let grid = cfg.dt_grid();
    if grid.len() != 1 {
        return Err(invalid("dt", "montecarlo requires a single interval"));
    }
    let setup = cfg.analysis_setup()?;
    let factor = mc.variance_factor;
    let trial_cfg = TrialConfig {
        n_trials: mc.n_trials as usize,
        master_seed: mc.seed,
        n_rows: n_list[0],
        dt: grid[0],
        variance_factor: factor,
        worst_q: mc.worst_q.unwrap_or(DEFAULT_WORST_Q) as usize,
        trace_dt: mc.trace_dt.unwrap_or(DEFAULT_TRACE_DT),
    };
    let report = run_trials(&setup, &trial_cfg)?;
    let echo = cfg.resolved_json()?;
    let gate_pass = report.empirical_rate <= cfg.safety.beta;

    let summary = json!({
        "failures": report.failures,
        "n_trials": report.n_trials,
        "empirical_rate": report.empirical_rate,
        "variance_factor": factor,
        "worst_q": trial_cfg.worst_q,
        "gate_pass": gate_pass,
        "config": echo,
    });
    let summary_json = serde_json::to_string_pretty(&summary).expect("serializable") + "\n";

    let mut trace_csv = String::new();
    trace_csv.push_str(&format!(
        "# config: {}\n",
        serde_json::to_string(&cfg.resolved_json()?).expect("serializable")
    ));
    trace_csv.push_str("time_s,worst_trial_distance_m,mean_worstq_distance_m\n");
    let worst = &report.worst_traces[0].1;
    for (i, &t) in report.time_grid.iter().enumerate() {
        trace_csv.push_str(&format!(
            "{},{},{}\n",
            fmt_sig(t),
            fmt_sig(worst[i]),
            fmt_sig(report.mean_worst_q[i])
        ));
    }

    let ladder = build_row_ladder(trial_cfg.n_rows);
    let topology = json!({
        "config": cfg.resolved_json()?,
        "topology": ladder.topology_json(),
    });
    let topology_json = serde_json::to_string_pretty(&topology).expect("serializable") + "\n";

    Ok(McOutputs {
        summary_json,
        trace_csv,
        topology_json,
        gate_pass,
    })
}
