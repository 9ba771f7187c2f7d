//! Deployment plan for the row ladder: per-stage release hookups, the
//! analytic moment recursion (dense reference and sparse fast path), and
//! realization-level trials for Monte Carlo validation.
//!
//! Stage 0 activates the first row's two intra-row edges after one interval
//! of free drift. Every later stage s attaches row s: three inter-row edges
//! whose leading endpoint (previous row) carries two intervals of free
//! drift, then the two intra-row edges of the new row, all anchored at
//! previous-row nodes. Release errors are drawn fresh for every satellite
//! slot of a stage, matching the stage-to-stage independence of the moment
//! recursion.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::drag::{DragForcing, DragIncrements, IncrementEvaluator};
use crate::graph::{anchor_projection_scalar_fast, build_row_ladder, CsrMatrix, RowLadder};
use crate::numerics::{Mat, Mat2, Vec2};
use crate::orbit::{free_drift_transition, DriftCenterState, OrbitModel};
use crate::stages::{
    injected_mismatch, ConsensusModel, ExpAction, InjectedMismatch, MismatchEdge,
    ReleasedSatellite, StageError, StageMoments, D,
};

pub const ROW_WIDTH: usize = crate::graph::ROW_WIDTH;

/// Initial stage moments, per-step dense operator pairs, and per-step
/// injected mismatches.
pub type DenseSequence = (StageMoments, Vec<(Mat, Mat)>, Vec<InjectedMismatch>);

/// Nominal release data shared by every row: drag-corrected drift centers
/// per column and the tip-off spin state.
#[derive(Debug, Clone)]
pub struct RowNominal {
    pub centers: [DriftCenterState; ROW_WIDTH],
    /// Tip-off spin rate [rad/s].
    pub nu: f64,
    /// Increments at the nominal attitude phase (zero).
    pub increments: DragIncrements,
    /// Forcing at phase zero; per-satellite phases are applied on top.
    pub forcing: DragForcing,
}

/// Per-trial outcome of one realization of the release sequence.
#[derive(Debug, Clone)]
pub struct TrialRealization {
    /// Any new edge exceeded the safe radius at its activation instant.
    pub failed: bool,
    /// Largest traced new-edge drift-center distance.
    pub peak: f64,
    /// Worst new-edge distance per trace-grid time.
    pub trace: Vec<f64>,
    /// Max activation-time new-edge norm per stage.
    pub stage_activation_max: Vec<f64>,
    /// Final stacked edge state, when requested.
    pub final_state: Option<Vec<Vec2>>,
}

/// Safety-relevant statistics of one stage's new edges at unit variance
/// factor; covariances scale with the square of the factor.
#[derive(Debug, Clone)]
pub struct EdgeStat {
    pub edge_id: usize,
    pub mean: Vec2,
    /// Largest eigenvalue of the edge covariance at variance factor one.
    pub lambda_unit: f64,
}

#[derive(Debug, Clone)]
pub struct StageStats {
    pub stage: usize,
    pub edges: Vec<EdgeStat>,
    /// Norm of the stacked new-edge block of `A mu` (anchor displacement).
    pub anchor_mean_norm: f64,
    /// Norm of the stacked injected mean.
    pub injected_mean_norm: f64,
}

struct StageCache {
    lap: CsrMatrix,
    r_tilde: Mat,
}

/// Interval-independent per-ladder data: the graph sequence plus each
/// step's sparse edge Laplacian and anchor-projection rows. Built once per
/// swarm size and shared across grid points.
pub struct LadderCache {
    pub ladder: RowLadder,
    stages: Vec<StageCache>,
}

impl LadderCache {
    pub fn new(n_rows: usize) -> Result<Self, StageError> {
        assert!(n_rows >= 1, "at least one row");
        Self::from_ladder(build_row_ladder(n_rows))
    }

    fn from_ladder(ladder: RowLadder) -> Result<Self, StageError> {
        use rayon::prelude::*;
        let stages = ladder
            .steps
            .par_iter()
            .enumerate()
            .map(|(k, step)| {
                let g = &ladder.graphs[k];
                Ok(StageCache {
                    lap: g.edge_laplacian_sparse(),
                    r_tilde: anchor_projection_scalar_fast(g, step)?,
                })
            })
            .collect::<Result<Vec<_>, StageError>>()?;
        Ok(Self { ladder, stages })
    }
}

/// A fully resolved deployment sequence for one (N, dt) configuration.
pub struct DeploymentPlan {
    pub model: OrbitModel,
    pub consensus: ConsensusModel,
    pub dt: f64,
    /// Number of stages, including the initial row (equals the row count).
    pub n_stages: usize,
    pub row: RowNominal,
    evaluator: IncrementEvaluator,
    cache: Arc<LadderCache>,
}

impl DeploymentPlan {
    pub fn new(
        model: OrbitModel,
        consensus: ConsensusModel,
        row: RowNominal,
        n_rows: usize,
        dt: f64,
    ) -> Result<Self, StageError> {
        Self::with_cache(
            model,
            consensus,
            row,
            dt,
            Arc::new(LadderCache::new(n_rows)?),
        )
    }

    /// Plan over a shared ladder cache (the cache carries no interval or
    /// policy state).
    pub fn with_cache(
        model: OrbitModel,
        consensus: ConsensusModel,
        row: RowNominal,
        dt: f64,
        cache: Arc<LadderCache>,
    ) -> Result<Self, StageError> {
        assert!(dt > 0.0, "deployment interval must be positive");
        let evaluator = IncrementEvaluator::new(&model, &row.forcing)
            .map_err(|e| StageError::DimensionMismatch(e.to_string()))?;
        Ok(Self {
            model,
            consensus,
            dt,
            n_stages: cache.ladder.n_rows(),
            row,
            evaluator,
            cache,
        })
    }

    pub fn ladder(&self) -> &RowLadder {
        &self.cache.ladder
    }

    /// Copy with one edge orientation flipped everywhere it appears,
    /// including the anchor side of a new edge (test support).
    pub fn with_flipped_edge(&self, edge_id: usize) -> Result<Self, StageError> {
        let mut ladder = self.cache.ladder.clone();
        for g in &mut ladder.graphs {
            if edge_id < g.n_edges() {
                *g = g.with_flipped_edge(edge_id);
            }
        }
        for step in &mut ladder.steps {
            if let Some(local) = step.new_edges.iter().position(|&e| e == edge_id) {
                step.anchors[local].sign = -step.anchors[local].sign;
            }
        }
        Ok(Self {
            model: self.model,
            consensus: self.consensus,
            dt: self.dt,
            n_stages: self.n_stages,
            row: self.row.clone(),
            evaluator: self.evaluator.clone(),
            cache: Arc::new(LadderCache::from_ladder(ladder)?),
        })
    }

    /// Global edge ids created at `stage`.
    pub fn stage_new_edges(&self, stage: usize) -> Vec<usize> {
        if stage == 0 {
            vec![0, 1]
        } else {
            self.cache.ladder.steps[stage - 1].new_edges.clone()
        }
    }

    /// Satellite slots and edge hookups of one stage. Slot order: leading
    /// satellites by column (absent at stage 0), then trailing satellites
    /// by column.
    pub fn stage_hookup(&self, stage: usize) -> (Vec<ReleasedSatellite>, Vec<MismatchEdge>) {
        let col_of = |node: usize| node % ROW_WIDTH;
        let mk = |col: usize, tau: f64| ReleasedSatellite {
            nominal: self.row.centers[col],
            free_drift: tau,
        };
        if stage == 0 {
            let sats = (0..ROW_WIDTH).map(|c| mk(c, self.dt)).collect();
            let edges = self.cache.ladder.graphs[0]
                .edges()
                .iter()
                .map(|e| MismatchEdge {
                    tail_sat: col_of(e.tail),
                    head_sat: col_of(e.head),
                })
                .collect();
            (sats, edges)
        } else {
            let mut sats = Vec::with_capacity(2 * ROW_WIDTH);
            for c in 0..ROW_WIDTH {
                sats.push(mk(c, 2.0 * self.dt));
            }
            for c in 0..ROW_WIDTH {
                sats.push(mk(c, self.dt));
            }
            let new_row = stage;
            let graph = &self.cache.ladder.graphs[stage];
            let slot_of = |node: usize| {
                let row = node / ROW_WIDTH;
                if row == new_row {
                    ROW_WIDTH + col_of(node)
                } else {
                    col_of(node)
                }
            };
            let edges = self.cache.ladder.steps[stage - 1]
                .new_edges
                .iter()
                .map(|&e| {
                    let ed = graph.edge(e).unwrap();
                    MismatchEdge {
                        tail_sat: slot_of(ed.tail),
                        head_sat: slot_of(ed.head),
                    }
                })
                .collect();
            (sats, edges)
        }
    }

    /// Injected mismatch of one stage at the given variance factor.
    pub fn stage_mismatch(
        &self,
        stage: usize,
        variance_factor: f64,
    ) -> Result<InjectedMismatch, StageError> {
        let (sats, edges) = self.stage_hookup(stage);
        injected_mismatch(&self.model, &sats, &edges, variance_factor)
    }

    /// Dense reference sequence: initial moments plus per-step operators and
    /// mismatches, built from the explicit stage-update matrices. Intended
    /// for small ladders and cross-validation.
    pub fn dense_sequence(&self, variance_factor: f64) -> Result<DenseSequence, StageError> {
        let w0 = self.stage_mismatch(0, variance_factor)?;
        let initial = StageMoments {
            mean: w0.stacked_mean(),
            cov: w0.cov.clone(),
        };
        let mut ops = Vec::new();
        let mut ws = Vec::new();
        for stage in 1..self.n_stages {
            let g = &self.cache.ladder.graphs[stage - 1];
            let step = &self.cache.ladder.steps[stage - 1];
            ops.push(crate::stages::build_lemma_operators(
                g,
                step,
                &self.consensus,
                self.dt,
            )?);
            ws.push(self.stage_mismatch(stage, variance_factor)?);
        }
        Ok((initial, ops, ws))
    }

    /// Analytic per-stage new-edge statistics at unit variance factor, via
    /// the sparse contraction action and a per-satellite covariance factor
    /// representation. Covariances scale exactly with the squared factor and
    /// means do not depend on it.
    pub fn analytic_stage_stats(&self) -> Result<Vec<StageStats>, StageError> {
        let rate = self.consensus.rate();
        let mut stats = Vec::with_capacity(self.n_stages);

        // Stage 0.
        let w0 = self.stage_mismatch(0, 1.0)?;
        let m0 = self.cache.ladder.graphs[0].n_edges();
        let mut mean = Mat::zeros(m0, 2);
        for (e, v) in w0.mean.iter().enumerate() {
            mean[(e, 0)] = v.x;
            mean[(e, 1)] = v.y;
        }
        let mut src_cols = Mat::zeros(m0, w0.sources.len());
        let mut src_covs: Vec<Mat2> = Vec::new();
        for (j, s) in w0.sources.iter().enumerate() {
            for &(e, p) in &s.pattern {
                src_cols[(e, j)] = p;
            }
            src_covs.push(s.cov);
        }
        stats.push(self.collect_stats(
            0,
            &self.stage_new_edges(0),
            &mean,
            &src_cols,
            &src_covs,
            0,
            0.0,
            &w0,
        ));

        for stage in 1..self.n_stages {
            let cache = &self.cache.stages[stage - 1];
            let m_prev = cache.lap.n;
            let w = self.stage_mismatch(stage, 1.0)?;
            let n_new = w.mean.len();
            let exp = ExpAction::new(&cache.lap, self.dt, rate);

            let phi_mean = exp.apply(&cache.lap, &mean);
            let anchor_mean = cache.r_tilde.matmul(&mean.sub(&phi_mean));
            let mut next_mean = Mat::zeros(m_prev + n_new, 2);
            for i in 0..m_prev {
                next_mean.row_mut(i).copy_from_slice(phi_mean.row(i));
            }
            for e in 0..n_new {
                next_mean[(m_prev + e, 0)] = anchor_mean[(e, 0)] + w.mean[e].x;
                next_mean[(m_prev + e, 1)] = anchor_mean[(e, 1)] + w.mean[e].y;
            }

            let phi_src = exp.apply(&cache.lap, &src_cols);
            let anchor_src = cache.r_tilde.matmul(&src_cols.sub(&phi_src));
            let n_src_old = src_covs.len();
            let mut next_src = Mat::zeros(m_prev + n_new, n_src_old + w.sources.len());
            for i in 0..m_prev {
                next_src.row_mut(i)[..n_src_old].copy_from_slice(phi_src.row(i));
            }
            for e in 0..n_new {
                next_src.row_mut(m_prev + e)[..n_src_old].copy_from_slice(anchor_src.row(e));
            }
            for (j, s) in w.sources.iter().enumerate() {
                for &(e, p) in &s.pattern {
                    next_src[(m_prev + e, n_src_old + j)] = p;
                }
                src_covs.push(s.cov);
            }

            mean = next_mean;
            src_cols = next_src;

            let anchor_norm = anchor_mean.frobenius();
            stats.push(self.collect_stats(
                stage,
                &self.stage_new_edges(stage),
                &mean,
                &src_cols,
                &src_covs,
                m_prev,
                anchor_norm,
                &w,
            ));
        }
        Ok(stats)
    }

    #[allow(clippy::too_many_arguments)]
    fn collect_stats(
        &self,
        stage: usize,
        edge_ids: &[usize],
        mean: &Mat,
        src_cols: &Mat,
        src_covs: &[Mat2],
        first_new_row: usize,
        anchor_mean_norm: f64,
        w: &InjectedMismatch,
    ) -> StageStats {
        let mut edges = Vec::with_capacity(edge_ids.len());
        for (local, &edge_id) in edge_ids.iter().enumerate() {
            let row = first_new_row + local;
            let mut cov = Mat2::zero();
            for (j, d) in src_covs.iter().enumerate() {
                let g = src_cols[(row, j)];
                if g != 0.0 {
                    cov = cov + *d * (g * g);
                }
            }
            edges.push(EdgeStat {
                edge_id,
                mean: Vec2::new(mean[(row, 0)], mean[(row, 1)]),
                lambda_unit: cov.sym_eig_max(),
            });
        }
        let injected: f64 = w
            .mean
            .iter()
            .map(|v| v.x * v.x + v.y * v.y)
            .sum::<f64>()
            .sqrt();
        StageStats {
            stage,
            edges,
            anchor_mean_norm,
            injected_mean_norm: injected,
        }
    }

    /// Full analytic moments of the final stage via the fast recursion,
    /// for cross-checks against sampled realizations.
    pub fn analytic_final_moments(&self, variance_factor: f64) -> Result<StageMoments, StageError> {
        let rate = self.consensus.rate();
        let w0 = self.stage_mismatch(0, variance_factor)?;
        let mut mean = Mat::zeros(self.cache.ladder.graphs[0].n_edges(), 2);
        for (e, v) in w0.mean.iter().enumerate() {
            mean[(e, 0)] = v.x;
            mean[(e, 1)] = v.y;
        }
        let mut src_cols = Mat::zeros(mean.rows(), w0.sources.len());
        let mut src_covs: Vec<Mat2> = Vec::new();
        for (j, s) in w0.sources.iter().enumerate() {
            for &(e, p) in &s.pattern {
                src_cols[(e, j)] = p;
            }
            src_covs.push(s.cov);
        }
        for stage in 1..self.n_stages {
            let cache = &self.cache.stages[stage - 1];
            let m_prev = cache.lap.n;
            let w = self.stage_mismatch(stage, variance_factor)?;
            let n_new = w.mean.len();
            let exp = ExpAction::new(&cache.lap, self.dt, rate);
            let phi_mean = exp.apply(&cache.lap, &mean);
            let anchor_mean = cache.r_tilde.matmul(&mean.sub(&phi_mean));
            let mut next_mean = Mat::zeros(m_prev + n_new, 2);
            for i in 0..m_prev {
                next_mean.row_mut(i).copy_from_slice(phi_mean.row(i));
            }
            for e in 0..n_new {
                next_mean[(m_prev + e, 0)] = anchor_mean[(e, 0)] + w.mean[e].x;
                next_mean[(m_prev + e, 1)] = anchor_mean[(e, 1)] + w.mean[e].y;
            }
            let phi_src = exp.apply(&cache.lap, &src_cols);
            let anchor_src = cache.r_tilde.matmul(&src_cols.sub(&phi_src));
            let n_src_old = src_covs.len();
            let mut next_src = Mat::zeros(m_prev + n_new, n_src_old + w.sources.len());
            for i in 0..m_prev {
                next_src.row_mut(i)[..n_src_old].copy_from_slice(phi_src.row(i));
            }
            for e in 0..n_new {
                next_src.row_mut(m_prev + e)[..n_src_old].copy_from_slice(anchor_src.row(e));
            }
            for (j, s) in w.sources.iter().enumerate() {
                for &(e, p) in &s.pattern {
                    next_src[(m_prev + e, n_src_old + j)] = p;
                }
                src_covs.push(s.cov);
            }
            mean = next_mean;
            src_cols = next_src;
        }

        let m_final = mean.rows();
        let mut mu = Vec::with_capacity(D * m_final);
        for i in 0..m_final {
            mu.push(mean[(i, 0)]);
            mu.push(mean[(i, 1)]);
        }
        let mut cov = Mat::zeros(D * m_final, D * m_final);
        for (j, d) in src_covs.iter().enumerate() {
            for a in 0..m_final {
                let ga = src_cols[(a, j)];
                if ga == 0.0 {
                    continue;
                }
                for b in 0..m_final {
                    let w = ga * src_cols[(b, j)];
                    if w == 0.0 {
                        continue;
                    }
                    cov[(D * a, D * b)] += w * d.a;
                    cov[(D * a, D * b + 1)] += w * d.b;
                    cov[(D * a + 1, D * b)] += w * d.c;
                    cov[(D * a + 1, D * b + 1)] += w * d.d;
                }
            }
        }
        cov.symmetrize();
        Ok(StageMoments { mean: mu, cov })
    }

    /// Trace sampling grid in mission time.
    pub fn trace_grid(&self, trace_dt: f64) -> Vec<f64> {
        let mut grid = Vec::new();
        for stage in 0..self.n_stages {
            let t0 = stage as f64 * self.dt;
            let mut j = 0usize;
            loop {
                let tau = j as f64 * trace_dt;
                if tau >= self.dt - 1e-12 {
                    break;
                }
                grid.push(t0 + tau);
                j += 1;
            }
        }
        grid.push(self.n_stages as f64 * self.dt);
        grid
    }

    /// One realization of the release sequence: sampled release errors and
    /// attitude phases are pushed through the same contraction and anchor
    /// projection as the moment recursion.
    pub fn realize_trial(
        &self,
        rng: &mut ChaCha12Rng,
        variance_factor: f64,
        r_c: f64,
        trace_dt: Option<f64>,
        keep_final: bool,
    ) -> TrialRealization {
        let rate = self.consensus.rate();
        let mut trace = Vec::new();
        let mut stage_activation_max = Vec::with_capacity(self.n_stages);
        let mut failed = false;

        // Sampled drift-center vector per satellite slot.
        let draw_row = |rng: &mut ChaCha12Rng, count: usize| -> Vec<Vec2> {
            let mut out = Vec::with_capacity(count);
            for slot in 0..count {
                let col = slot % ROW_WIDTH;
                let nominal = self.row.centers[col].vector();
                let ex: f64 = rng.sample(StandardNormal);
                let ey: f64 = rng.sample(StandardNormal);
                let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let inc = self.evaluator.at_phase(phi);
                let jitter = Vec2::new(
                    inc.c1_air - self.row.increments.c1_air,
                    0.5 * self.model.epsilon_2 * (inc.c4_air - self.row.increments.c4_air),
                );
                out.push(Vec2::new(
                    nominal.x + jitter.x + variance_factor * nominal.x.abs() * ex,
                    nominal.y + jitter.y + variance_factor * nominal.y.abs() * ey,
                ));
            }
            out
        };

        // Stage 0: the first row drifts one interval, then its edges become
        // active.
        let (_, edges0) = self.stage_hookup(0);
        let sats0 = draw_row(rng, ROW_WIDTH);
        let edge_state_at = |sats: &[Vec2], edges: &[MismatchEdge], taus: &[f64]| -> Vec<Vec2> {
            edges
                .iter()
                .map(|e| {
                    let pt = free_drift_transition(&self.model, taus[e.tail_sat]);
                    let ph = free_drift_transition(&self.model, taus[e.head_sat]);
                    pt.apply(sats[e.tail_sat]) - ph.apply(sats[e.head_sat])
                })
                .collect()
        };

        if let Some(step) = trace_dt {
            let mut j = 0usize;
            loop {
                let tau = j as f64 * step;
                if tau >= self.dt - 1e-12 {
                    break;
                }
                let taus = vec![tau; ROW_WIDTH];
                let worst = edge_state_at(&sats0, &edges0, &taus)
                    .iter()
                    .map(Vec2::norm)
                    .fold(0.0, f64::max);
                trace.push(worst);
                j += 1;
            }
        }

        let taus0 = vec![self.dt; ROW_WIDTH];
        let mut rho: Vec<Vec2> = edge_state_at(&sats0, &edges0, &taus0);
        let act0 = rho.iter().map(Vec2::norm).fold(0.0, f64::max);
        stage_activation_max.push(act0);
        failed |= act0 > r_c;

        for stage in 1..self.n_stages {
            let cache = &self.cache.stages[stage - 1];
            let m_prev = cache.lap.n;
            debug_assert_eq!(m_prev, rho.len());
            let (_, edges) = self.stage_hookup(stage);
            let lead = draw_row(rng, ROW_WIDTH);
            let trail = draw_row(rng, ROW_WIDTH);
            let sats: Vec<Vec2> = lead.iter().chain(trail.iter()).copied().collect();

            let rho_mat = {
                let mut m = Mat::zeros(m_prev, 2);
                for (i, v) in rho.iter().enumerate() {
                    m[(i, 0)] = v.x;
                    m[(i, 1)] = v.y;
                }
                m
            };
            let r_rho = cache.r_tilde.matmul(&rho_mat);

            if let Some(step) = trace_dt {
                let unit = ExpAction::new(&cache.lap, step, rate);
                let mut contracted = rho_mat.clone();
                let mut j = 0usize;
                loop {
                    let tau = j as f64 * step;
                    if tau >= self.dt - 1e-12 {
                        break;
                    }
                    if j > 0 {
                        contracted = unit.apply(&cache.lap, &contracted);
                    }
                    let r_part = cache.r_tilde.matmul(&contracted);
                    let taus: Vec<f64> = (0..2 * ROW_WIDTH)
                        .map(|s| if s < ROW_WIDTH { self.dt + tau } else { tau })
                        .collect();
                    let w_tau = edge_state_at(&sats, &edges, &taus);
                    let worst = w_tau
                        .iter()
                        .enumerate()
                        .map(|(e, w)| {
                            Vec2::new(
                                w.x + r_rho[(e, 0)] - r_part[(e, 0)],
                                w.y + r_rho[(e, 1)] - r_part[(e, 1)],
                            )
                            .norm()
                        })
                        .fold(0.0, f64::max);
                    trace.push(worst);
                    j += 1;
                }
            }

            // Activation update through the exact full-interval contraction.
            let exp_full = ExpAction::new(&cache.lap, self.dt, rate);
            let rho_contracted = exp_full.apply(&cache.lap, &rho_mat);
            let r_phi = cache.r_tilde.matmul(&rho_contracted);
            let taus: Vec<f64> = (0..2 * ROW_WIDTH)
                .map(|s| {
                    if s < ROW_WIDTH {
                        2.0 * self.dt
                    } else {
                        self.dt
                    }
                })
                .collect();
            let w_act = edge_state_at(&sats, &edges, &taus);

            let mut next = Vec::with_capacity(m_prev + w_act.len());
            for i in 0..m_prev {
                next.push(Vec2::new(rho_contracted[(i, 0)], rho_contracted[(i, 1)]));
            }
            let mut act_max = 0.0_f64;
            for (e, w) in w_act.iter().enumerate() {
                let v = Vec2::new(
                    w.x + r_rho[(e, 0)] - r_phi[(e, 0)],
                    w.y + r_rho[(e, 1)] - r_phi[(e, 1)],
                );
                act_max = act_max.max(v.norm());
                next.push(v);
            }
            stage_activation_max.push(act_max);
            failed |= act_max > r_c;
            rho = next;
        }

        if trace_dt.is_some() {
            trace.push(*stage_activation_max.last().unwrap());
        }
        let peak = if trace.is_empty() {
            stage_activation_max.iter().copied().fold(0.0, f64::max)
        } else {
            trace.iter().copied().fold(0.0, f64::max)
        };
        TrialRealization {
            failed,
            peak,
            trace,
            stage_activation_max,
            final_state: keep_final.then_some(rho),
        }
    }
}
