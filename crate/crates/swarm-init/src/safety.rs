//! Stage-wise chance-constrained safety: per-edge confidence-ball margins,
//! release policies, the allowable-variance-factor search, and interval
//! sweeps.
//!
//! For a Gaussian edge state the ball of radius
//! `sqrt(chi2_{2,1-beta} lambda_max(Sigma_e))` around the mean contains the
//! `1-beta` confidence ellipsoid, so an edge passes when
//! `||mu_e|| + radius <= r_c`. Covariances scale with the square of the
//! variance factor, which makes the pass set monotone in the factor and the
//! bisection search exact.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::deployment::{DeploymentPlan, LadderCache, RowNominal, StageStats, ROW_WIDTH};
use crate::drag::{
    corrected_drift_center, drag_increments, forcing_series, tip_off_spin_rate, DragError,
};
use crate::numerics::{chi2_quantile, NumericsError};
use crate::orbit::{elements_from_state, DriftCenterState, InPlaneState, OrbitModel};
use crate::stages::{ConsensusModel, StageError, StageMoments};

#[derive(Debug, Error)]
pub enum SafetyError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("edge covariance is not positive semidefinite (eigenvalue {0})")]
    NotPsd(f64),
    #[error(transparent)]
    Drag(#[from] DragError),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Safe radius and risk level, with the chi-square quantile cached.
#[derive(Debug, Clone, Copy)]
pub struct SafetyConfig {
    pub r_c: f64,
    pub beta: f64,
    pub chi2: f64,
}

impl SafetyConfig {
    pub fn new(r_c: f64, beta: f64) -> Result<Self, SafetyError> {
        if r_c.is_nan() || r_c <= 0.0 {
            return Err(SafetyError::InvalidConfig("r_c must be positive".into()));
        }
        let chi2 = chi2_quantile(2, 1.0 - beta)
            .map_err(|_| SafetyError::InvalidConfig("beta must lie in (0, 1)".into()))?;
        Ok(Self { r_c, beta, chi2 })
    }

    /// Confidence-ball radius for the largest covariance eigenvalue.
    pub fn radius(&self, lambda_max: f64) -> f64 {
        (self.chi2 * lambda_max.max(0.0)).sqrt()
    }
}

/// Per-edge safety outcome.
#[derive(Debug, Clone)]
pub struct EdgeVerdict {
    pub edge_id: usize,
    pub mean_norm: f64,
    pub radius: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Verdict over the newly created edges of one stage.
#[derive(Debug, Clone)]
pub struct SafetyVerdict {
    pub stage: usize,
    pub edges: Vec<EdgeVerdict>,
    pub pass: bool,
    pub worst_edge: usize,
}

/// Evaluate the sufficient condition on the listed edges of a stage's
/// moments.
pub fn edge_safety(
    moments: &StageMoments,
    stage: usize,
    edge_ids: &[usize],
    cfg: &SafetyConfig,
) -> Result<SafetyVerdict, SafetyError> {
    let mut edges = Vec::with_capacity(edge_ids.len());
    let mut worst = (f64::INFINITY, 0usize);
    for &e in edge_ids {
        let cov = moments.edge_cov(e);
        let lam = cov.sym_eig_max();
        // The trailing eigenvalue must not be materially negative.
        let lam_min = cov.a + cov.d - lam;
        if lam_min < -1e-9 * lam.abs().max(1e-12) {
            return Err(SafetyError::NotPsd(lam_min));
        }
        let mean_norm = moments.edge_mean(e).norm();
        let radius = cfg.radius(lam);
        let margin = cfg.r_c - mean_norm - radius;
        if margin < worst.0 {
            worst = (margin, e);
        }
        edges.push(EdgeVerdict {
            edge_id: e,
            mean_norm,
            radius,
            margin,
            pass: margin >= 0.0,
        });
    }
    Ok(SafetyVerdict {
        stage,
        pass: edges.iter().all(|e| e.pass),
        worst_edge: worst.1,
        edges,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    /// Release velocities identical for every interval.
    FixedVelocity,
    /// Along-track release rate retuned with the interval so the per-stage
    /// nominal drift distance stays constant.
    DriftMatched,
}

#[derive(Debug, Clone, Copy)]
pub struct ReleasePolicy {
    pub mode: PolicyMode,
    pub base_xdot: f64,
    pub base_ydot: f64,
    pub dt_ref: f64,
}

impl ReleasePolicy {
    pub fn velocities(&self, dt: f64) -> Result<(f64, f64), SafetyError> {
        if dt <= 0.0 {
            return Err(SafetyError::InvalidConfig(
                "deployment interval must be positive".into(),
            ));
        }
        match self.mode {
            PolicyMode::FixedVelocity => Ok((self.base_xdot, self.base_ydot)),
            PolicyMode::DriftMatched => {
                if self.dt_ref <= 0.0 {
                    return Err(SafetyError::InvalidConfig(
                        "dt_ref must be positive for the drift-matched policy".into(),
                    ));
                }
                Ok((self.base_xdot, self.base_ydot * self.dt_ref / dt))
            }
        }
    }
}

/// Deployment-mechanism and drag parameters needed to resolve a row nominal.
#[derive(Debug, Clone, Copy)]
pub struct DragSetup {
    pub k_air: f64,
    pub side_length: f64,
    pub mass: f64,
    pub d_off: f64,
    pub m_trunc: usize,
}

/// Nominal per-column release state for one row under a policy: integration
/// constants from the release state, drag-corrected at the nominal attitude
/// phase, plus the tip-off spin rate induced by the release impulse.
pub fn release_policy_nominal(
    policy: &ReleasePolicy,
    model: &OrbitModel,
    drag: &DragSetup,
    row_spacing: f64,
    dt: f64,
) -> Result<RowNominal, SafetyError> {
    let (xdot, ydot) = policy.velocities(dt)?;
    let dv = xdot.hypot(ydot);
    let nu = tip_off_spin_rate(dv, drag.d_off, drag.side_length);
    let forcing = forcing_series(
        drag.k_air,
        drag.side_length,
        drag.mass,
        nu,
        0.0,
        drag.m_trunc,
    )?;
    let increments = drag_increments(model, &forcing)?;
    let mut centers = [DriftCenterState::default(); ROW_WIDTH];
    for (c, center) in centers.iter_mut().enumerate() {
        let y_off = (c as f64 - (ROW_WIDTH as f64 - 1.0) / 2.0) * row_spacing;
        let elems = elements_from_state(
            model,
            &InPlaneState {
                x: 0.0,
                y: y_off,
                xdot,
                ydot,
            },
        );
        *center = corrected_drift_center(
            model,
            &DriftCenterState::new(elems.c1, elems.c4),
            &increments,
        );
    }
    Ok(RowNominal {
        centers,
        nu,
        increments,
        forcing,
    })
}

/// Everything needed to evaluate one deployment design.
#[derive(Debug, Clone)]
pub struct AnalysisSetup {
    pub model: OrbitModel,
    pub consensus: ConsensusModel,
    pub policy: ReleasePolicy,
    pub drag: DragSetup,
    pub row_spacing: f64,
    pub safety: SafetyConfig,
}

impl AnalysisSetup {
    pub fn plan(&self, n_rows: usize, dt: f64) -> Result<DeploymentPlan, SafetyError> {
        let row =
            release_policy_nominal(&self.policy, &self.model, &self.drag, self.row_spacing, dt)?;
        Ok(DeploymentPlan::new(
            self.model,
            self.consensus,
            row,
            n_rows,
            dt,
        )?)
    }
}

/// Upper bisection bracket for the variance factor.
pub const FACTOR_CAP: f64 = 1.0;

/// Default absolute bisection tolerance on the factor.
pub const DEFAULT_SEARCH_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct FactorOutcome {
    /// Largest passing variance factor (zero when the nominal already
    /// violates the radius).
    pub factor: f64,
    /// The search hit the upper bracket.
    pub capped: bool,
    /// The deterministic means alone violate the safe radius.
    pub nominal_unsafe: bool,
    pub worst_stage: usize,
    pub worst_edge: usize,
    /// Stacked new-edge anchor-displacement mean norm at the worst stage.
    pub mean_budget_akmu: f64,
    /// Stacked injected mean norm at the worst stage.
    pub mean_budget_bkmu: f64,
}

fn stage_pass(stats: &[StageStats], cfg: &SafetyConfig, factor: f64) -> bool {
    stats.iter().all(|s| {
        s.edges
            .iter()
            .all(|e| e.mean.norm() + factor * cfg.radius(e.lambda_unit) <= cfg.r_c)
    })
}

/// Worst (stage, edge) by margin at the given factor.
fn worst_case(stats: &[StageStats], cfg: &SafetyConfig, factor: f64) -> (usize, usize, f64) {
    let mut worst = (0usize, 0usize, f64::INFINITY);
    for s in stats {
        for e in &s.edges {
            let margin = cfg.r_c - e.mean.norm() - factor * cfg.radius(e.lambda_unit);
            if margin < worst.2 {
                worst = (s.stage, e.edge_id, margin);
            }
        }
    }
    worst
}

/// Bisection for the largest variance factor that keeps every stage's new
/// edges inside the safe radius. The radius term scales linearly in the
/// factor, so feasibility is monotone and the returned factor passes while
/// `factor + 2 search_tol` fails (unless capped).
pub fn max_allowable_factor_from_stats(
    stats: &[StageStats],
    cfg: &SafetyConfig,
    search_tol: f64,
) -> FactorOutcome {
    let (w_stage, w_edge, _) = worst_case(stats, cfg, 0.0);
    let budgets = |stage: usize| -> (f64, f64) {
        let s = &stats[stage];
        (s.anchor_mean_norm, s.injected_mean_norm)
    };
    if !stage_pass(stats, cfg, 0.0) {
        let (akmu, bkmu) = budgets(w_stage);
        return FactorOutcome {
            factor: 0.0,
            capped: false,
            nominal_unsafe: true,
            worst_stage: w_stage,
            worst_edge: w_edge,
            mean_budget_akmu: akmu,
            mean_budget_bkmu: bkmu,
        };
    }
    if stage_pass(stats, cfg, FACTOR_CAP) {
        let (s, e, _) = worst_case(stats, cfg, FACTOR_CAP);
        let (akmu, bkmu) = budgets(s);
        return FactorOutcome {
            factor: FACTOR_CAP,
            capped: true,
            nominal_unsafe: false,
            worst_stage: s,
            worst_edge: e,
            mean_budget_akmu: akmu,
            mean_budget_bkmu: bkmu,
        };
    }
    let mut lo = 0.0_f64;
    let mut hi = FACTOR_CAP;
    while hi - lo > search_tol {
        let mid = 0.5 * (lo + hi);
        if stage_pass(stats, cfg, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (s, e, _) = worst_case(stats, cfg, lo);
    let (akmu, bkmu) = budgets(s);
    FactorOutcome {
        factor: lo,
        capped: false,
        nominal_unsafe: false,
        worst_stage: s,
        worst_edge: e,
        mean_budget_akmu: akmu,
        mean_budget_bkmu: bkmu,
    }
}

fn factor_with_cache(
    setup: &AnalysisSetup,
    cache: &Arc<LadderCache>,
    dt: f64,
    search_tol: f64,
) -> Result<FactorOutcome, SafetyError> {
    let row = release_policy_nominal(
        &setup.policy,
        &setup.model,
        &setup.drag,
        setup.row_spacing,
        dt,
    )?;
    let plan =
        DeploymentPlan::with_cache(setup.model, setup.consensus, row, dt, Arc::clone(cache))?;
    let stats = plan.analytic_stage_stats()?;
    Ok(max_allowable_factor_from_stats(
        &stats,
        &setup.safety,
        search_tol,
    ))
}

/// Resolve the plan for `(n_rows, dt)` and search the allowable factor.
pub fn max_allowable_factor(
    setup: &AnalysisSetup,
    n_rows: usize,
    dt: f64,
    search_tol: f64,
) -> Result<FactorOutcome, SafetyError> {
    let cache = Arc::new(LadderCache::new(n_rows)?);
    factor_with_cache(setup, &cache, dt, search_tol)
}

/// One row of an interval sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub dt: f64,
    pub n_rows: usize,
    pub factor: f64,
    pub worst_stage: usize,
    pub mean_budget_akmu: f64,
    pub mean_budget_bkmu: f64,
    /// Non-empty when the point is degenerate (infeasible nominal or a
    /// refused drag regime).
    pub diagnostic: String,
}

/// Allowable factor and mean budgets over an ascending interval grid.
/// Grid points share one ladder cache and are evaluated in parallel;
/// results keep grid order.
pub fn sweep_interval(
    setup: &AnalysisSetup,
    n_rows: usize,
    dt_grid: &[f64],
    search_tol: f64,
) -> Vec<SweepRow> {
    let cache = match LadderCache::new(n_rows) {
        Ok(c) => Arc::new(c),
        Err(err) => {
            let msg = err.to_string().replace(',', ";");
            return dt_grid
                .iter()
                .map(|&dt| SweepRow {
                    dt,
                    n_rows,
                    factor: 0.0,
                    worst_stage: 0,
                    mean_budget_akmu: 0.0,
                    mean_budget_bkmu: 0.0,
                    diagnostic: msg.clone(),
                })
                .collect();
        }
    };
    dt_grid
        .par_iter()
        .map(
            |&dt| match factor_with_cache(setup, &cache, dt, search_tol) {
                Ok(out) => SweepRow {
                    dt,
                    n_rows,
                    factor: out.factor,
                    worst_stage: out.worst_stage,
                    mean_budget_akmu: out.mean_budget_akmu,
                    mean_budget_bkmu: out.mean_budget_bkmu,
                    diagnostic: if out.nominal_unsafe {
                        "nominal_unsafe".to_string()
                    } else {
                        String::new()
                    },
                },
                Err(err) => SweepRow {
                    dt,
                    n_rows,
                    factor: 0.0,
                    worst_stage: 0,
                    mean_budget_akmu: 0.0,
                    mean_budget_bkmu: 0.0,
                    diagnostic: err.to_string().replace(',', ";"),
                },
            },
        )
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Mat;
    use crate::orbit::{derive_coefficients, k_j2_conventional};
    use crate::stages::propagate_moments;

    fn model() -> OrbitModel {
        let mu = 3.99e14;
        let re = 6.37e6;
        derive_coefficients(
            mu,
            re + 4.0e5,
            51.7_f64.to_radians(),
            k_j2_conventional(mu, re),
        )
        .unwrap()
    }

    fn setup(k_a: f64, mode: PolicyMode) -> AnalysisSetup {
        let m = model();
        AnalysisSetup {
            model: m,
            consensus: ConsensusModel::new(k_a, &m),
            policy: ReleasePolicy {
                mode,
                base_xdot: 1e-3,
                base_ydot: 1e-3,
                dt_ref: 4.0,
            },
            drag: DragSetup {
                k_air: crate::drag::k_air_from_density(&m, 1.18e-12, 2.0),
                side_length: 0.1,
                mass: 1.0,
                d_off: 0.01,
                m_trunc: 5,
            },
            row_spacing: 0.25,
            safety: SafetyConfig::new(1.0, 0.01).unwrap(),
        }
    }

    fn moments(mean: &[f64], cov: Mat) -> StageMoments {
        StageMoments {
            mean: mean.to_vec(),
            cov,
        }
    }

    #[test]
    fn deterministic_limit() {
        let cfg = SafetyConfig::new(1.0, 0.01).unwrap();
        let m = moments(&[0.3, -0.4], Mat::zeros(2, 2));
        let v = edge_safety(&m, 0, &[0], &cfg).unwrap();
        assert!(v.pass);
        assert!((v.edges[0].margin - 0.5).abs() < 1e-12);

        let m = moments(&[0.8, -0.8], Mat::zeros(2, 2));
        let v = edge_safety(&m, 0, &[0], &cfg).unwrap();
        assert!(!v.pass);
    }

    #[test]
    fn isotropic_threshold() {
        // With beta = 0.01 the quantile is 9.21034 and the ball radius is
        // 3.035 sigma.
        let cfg = SafetyConfig::new(1.0, 0.01).unwrap();
        assert!((cfg.chi2 - 9.21034).abs() < 1e-5);
        let scale = cfg.chi2.sqrt();
        let sigma_pass = (1.0 / scale) * 0.999;
        let sigma_fail = (1.0 / scale) * 1.001;
        for (sigma, want) in [(sigma_pass, true), (sigma_fail, false)] {
            let mut cov = Mat::zeros(2, 2);
            cov[(0, 0)] = sigma * sigma;
            cov[(1, 1)] = sigma * sigma;
            let m = moments(&[0.0, 0.0], cov);
            let v = edge_safety(&m, 0, &[0], &cfg).unwrap();
            assert_eq!(v.pass, want, "sigma {sigma}");
        }
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let cfg = SafetyConfig::new(1.0, 0.01).unwrap();
        let mut cov = Mat::zeros(2, 2);
        cov[(0, 0)] = 1.0;
        cov[(1, 1)] = -1.0;
        let m = moments(&[0.0, 0.0], cov);
        assert!(matches!(
            edge_safety(&m, 0, &[0], &cfg),
            Err(SafetyError::NotPsd(_))
        ));
    }

    #[test]
    fn bad_config_rejected() {
        assert!(SafetyConfig::new(0.0, 0.01).is_err());
        assert!(SafetyConfig::new(1.0, 0.0).is_err());
        assert!(SafetyConfig::new(1.0, 1.0).is_err());
    }

    #[test]
    fn drift_matched_policy_invariants() {
        let s = setup(10.0, PolicyMode::DriftMatched);
        let m = s.model;
        // At dt == dt_ref the tuned policy equals the fixed one.
        let tuned = release_policy_nominal(&s.policy, &m, &s.drag, 0.25, 4.0).unwrap();
        let fixed_policy = ReleasePolicy {
            mode: PolicyMode::FixedVelocity,
            ..s.policy
        };
        let fixed = release_policy_nominal(&fixed_policy, &m, &s.drag, 0.25, 4.0).unwrap();
        for c in 0..ROW_WIDTH {
            assert!((tuned.centers[c].c1p - fixed.centers[c].c1p).abs() < 1e-15);
            assert!((tuned.centers[c].c4p - fixed.centers[c].c4p).abs() < 1e-15);
        }
        assert_eq!(tuned.nu, fixed.nu);

        // C1 dt is interval-invariant for the tuned policy.
        let refv = release_policy_nominal(&s.policy, &m, &s.drag, 0.25, 1.0).unwrap();
        let c1dt_ref = refv.centers[1].c1p * 1.0;
        for dt in [2.0, 4.0, 8.0] {
            let row = release_policy_nominal(&s.policy, &m, &s.drag, 0.25, dt).unwrap();
            let c1dt = row.centers[1].c1p * dt;
            assert!(
                (c1dt - c1dt_ref).abs() <= 1e-12 * c1dt_ref.abs(),
                "dt {dt}: {c1dt} vs {c1dt_ref}"
            );
        }

        // The fixed policy induces the same spin rate for every interval.
        for dt in [1.0, 3.0, 9.0] {
            let row = release_policy_nominal(&fixed_policy, &m, &s.drag, 0.25, dt).unwrap();
            assert_eq!(row.nu, fixed.nu);
        }
    }

    #[test]
    fn factor_search_bisection_contract() {
        let s = setup(10.0, PolicyMode::DriftMatched);
        let plan = s.plan(4, 4.0).unwrap();
        let stats = plan.analytic_stage_stats().unwrap();
        let tol = 1e-4;
        let out = max_allowable_factor_from_stats(&stats, &s.safety, tol);
        assert!(!out.nominal_unsafe);
        assert!(out.factor > 0.0);
        if !out.capped {
            assert!(stage_pass(&stats, &s.safety, out.factor));
            assert!(!stage_pass(&stats, &s.safety, out.factor + 2.0 * tol));
        }
    }

    #[test]
    fn factor_margins_monotone() {
        let s = setup(10.0, PolicyMode::DriftMatched);
        let plan = s.plan(3, 4.0).unwrap();
        let stats = plan.analytic_stage_stats().unwrap();
        let margins = |f: f64| -> f64 { worst_case(&stats, &s.safety, f).2 };
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let f = i as f64 * 0.02;
            let m = margins(f);
            assert!(m <= prev + 1e-12, "margin must not increase with factor");
            prev = m;
        }
    }

    #[test]
    fn infinite_radius_caps_factor() {
        let mut s = setup(10.0, PolicyMode::DriftMatched);
        s.safety = SafetyConfig::new(1e12, 0.01).unwrap();
        let out = max_allowable_factor(&s, 3, 4.0, 1e-4).unwrap();
        assert!(out.capped);
        assert_eq!(out.factor, FACTOR_CAP);
    }

    #[test]
    fn tiny_radius_reports_nominal_unsafe() {
        let mut s = setup(10.0, PolicyMode::DriftMatched);
        s.safety = SafetyConfig::new(1e-4, 0.01).unwrap();
        let out = max_allowable_factor(&s, 3, 4.0, 1e-4).unwrap();
        assert!(out.nominal_unsafe);
        assert_eq!(out.factor, 0.0);
    }

    #[test]
    fn factor_monotone_in_rows() {
        let s = setup(10.0, PolicyMode::DriftMatched);
        let mut prev = f64::INFINITY;
        for n in [2usize, 4, 6] {
            let out = max_allowable_factor(&s, n, 4.0, 1e-4).unwrap();
            assert!(out.factor <= prev + 1e-12, "requirements tighten with n");
            prev = out.factor;
        }
    }

    #[test]
    fn fast_margins_match_dense_edge_safety() {
        let s = setup(8.0, PolicyMode::DriftMatched);
        let plan = s.plan(4, 6.0).unwrap();
        let f = 0.03;
        let stats = plan.analytic_stage_stats().unwrap();
        let (initial, ops, ws) = plan.dense_sequence(f).unwrap();
        let mut dense = vec![initial];
        for (i, (a, b)) in ops.iter().enumerate() {
            dense.push(propagate_moments(dense.last().unwrap(), a, b, &ws[i]).unwrap());
        }
        for (stage, stat) in stats.iter().enumerate() {
            let ids: Vec<usize> = stat.edges.iter().map(|e| e.edge_id).collect();
            let verdict = edge_safety(&dense[stage], stage, &ids, &s.safety).unwrap();
            for (ev, es) in verdict.edges.iter().zip(stat.edges.iter()) {
                let fast_margin =
                    s.safety.r_c - es.mean.norm() - f * s.safety.radius(es.lambda_unit);
                assert!(
                    (ev.margin - fast_margin).abs() <= 1e-9 * fast_margin.abs().max(1e-9),
                    "stage {stage} edge {}",
                    ev.edge_id
                );
            }
        }
    }

    #[test]
    fn sweep_rows_keep_grid_order() {
        let s = setup(10.0, PolicyMode::FixedVelocity);
        let grid = [2.0, 4.0, 8.0];
        let rows = sweep_interval(&s, 3, &grid, 1e-3);
        assert_eq!(rows.len(), 3);
        for (r, &dt) in rows.iter().zip(grid.iter()) {
            assert_eq!(r.dt, dt);
            assert!(r.diagnostic.is_empty());
            assert!(r.factor > 0.0);
        }
    }
}
