//! Seeded Monte Carlo validation of a deployment design: independent
//! realizations of the release sequence, failure statistics against the
//! safe radius, and worst-case trace aggregation.
//!
//! Trials are independent work items on counter-split random streams, so
//! the report is bit-identical for a fixed master seed regardless of the
//! number of worker threads.

use rayon::prelude::*;

use crate::deployment::TrialRealization;
use crate::numerics::{StreamSeed, Vec2};
use crate::safety::{AnalysisSetup, SafetyError};

/// Stateless counter split: trial `i` draws from stream `i` of the master
/// seed. Distinct trials never share a stream.
pub fn per_trial_seed(master: u64, trial: u64) -> StreamSeed {
    StreamSeed::new(master, trial)
}

#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub n_trials: usize,
    pub master_seed: u64,
    pub n_rows: usize,
    pub dt: f64,
    pub variance_factor: f64,
    /// Number of worst trials retained for the trace aggregate.
    pub worst_q: usize,
    /// Trace sampling resolution in seconds.
    pub trace_dt: f64,
}

impl TrialConfig {
    fn validate(&self) -> Result<(), SafetyError> {
        if self.n_trials == 0 {
            return Err(SafetyError::InvalidConfig("n_trials must be >= 1".into()));
        }
        if self.worst_q == 0 {
            return Err(SafetyError::InvalidConfig("worst_q must be >= 1".into()));
        }
        if self.trace_dt.is_nan() || self.trace_dt <= 0.0 {
            return Err(SafetyError::InvalidConfig(
                "trace_dt must be positive".into(),
            ));
        }
        if self.variance_factor.is_nan() || self.variance_factor < 0.0 {
            return Err(SafetyError::InvalidConfig(
                "variance_factor must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrialReport {
    pub n_trials: usize,
    pub failures: usize,
    pub empirical_rate: f64,
    /// Mission times of the trace samples.
    pub time_grid: Vec<f64>,
    /// Worst trials by peak traced distance, most severe first.
    pub worst_traces: Vec<(usize, Vec<f64>)>,
    /// Pointwise mean over the retained worst trials.
    pub mean_worst_q: Vec<f64>,
}

impl TrialReport {
    /// Pointwise maximum over the retained worst trials.
    pub fn envelope(&self) -> Vec<f64> {
        let n = self.time_grid.len();
        let mut env = vec![0.0_f64; n];
        for (_, trace) in &self.worst_traces {
            for (e, v) in env.iter_mut().zip(trace.iter()) {
                *e = e.max(*v);
            }
        }
        env
    }
}

/// Run the full trial batch for a deployment design.
pub fn run_trials(setup: &AnalysisSetup, cfg: &TrialConfig) -> Result<TrialReport, SafetyError> {
    cfg.validate()?;
    let plan = setup.plan(cfg.n_rows, cfg.dt)?;
    let time_grid = plan.trace_grid(cfg.trace_dt);
    let r_c = setup.safety.r_c;

    let outcomes: Vec<TrialRealization> = (0..cfg.n_trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = per_trial_seed(cfg.master_seed, t).rng();
            plan.realize_trial(
                &mut rng,
                cfg.variance_factor,
                r_c,
                Some(cfg.trace_dt),
                false,
            )
        })
        .collect();

    let failures = outcomes.iter().filter(|o| o.failed).count();
    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by(|&a, &b| {
        outcomes[b]
            .peak
            .total_cmp(&outcomes[a].peak)
            .then(a.cmp(&b))
    });
    let q = cfg.worst_q.min(outcomes.len());
    let worst_traces: Vec<(usize, Vec<f64>)> = order[..q]
        .iter()
        .map(|&i| (i, outcomes[i].trace.clone()))
        .collect();

    let mut mean_worst_q = vec![0.0_f64; time_grid.len()];
    for (_, trace) in &worst_traces {
        for (m, v) in mean_worst_q.iter_mut().zip(trace.iter()) {
            *m += v;
        }
    }
    for m in mean_worst_q.iter_mut() {
        *m /= q as f64;
    }

    Ok(TrialReport {
        n_trials: cfg.n_trials,
        failures,
        empirical_rate: failures as f64 / cfg.n_trials as f64,
        time_grid,
        worst_traces,
        mean_worst_q,
    })
}

/// Final stacked edge states of `n` independent realizations (sampling
/// oracle for moment cross-checks).
pub fn sample_final_states(
    setup: &AnalysisSetup,
    n_rows: usize,
    dt: f64,
    variance_factor: f64,
    n: usize,
    master_seed: u64,
) -> Result<Vec<Vec<Vec2>>, SafetyError> {
    let plan = setup.plan(n_rows, dt)?;
    Ok((0..n as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = per_trial_seed(master_seed, t).rng();
            plan.realize_trial(&mut rng, variance_factor, f64::INFINITY, None, true)
                .final_state
                .unwrap()
        })
        .collect())
}
