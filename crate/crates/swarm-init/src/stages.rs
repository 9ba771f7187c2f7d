//! Stage-to-stage affine recursion of the stacked edge state across graph
//! expansion steps: consensus contraction of the existing cluster, anchor
//! projection into newly created edges, injected release mismatch, and
//! mean/covariance propagation with a closed-form batch evaluation.
//!
//! Two routes are provided. The dense operators (`contraction`,
//! `build_lemma_operators`, `propagate_moments`, `closed_form_stack`) build
//! explicit matrices through the eigendecomposition and pseudoinverse; they
//! are the reference for tests and small problems. [`ExpAction`] applies the
//! same contraction semigroup through a truncated Taylor series on the
//! sparse edge Laplacian and powers the large-swarm pipeline; the two routes
//! are held equal by tests.

use thiserror::Error;

use crate::graph::{anchor_projection, CsrMatrix, ExpansionStep, GraphError, StageGraph};
use crate::numerics::{sym_expm, Mat, Mat2, NumericsError, Vec2};
use crate::orbit::{free_drift_transition, DriftCenterState, OrbitModel};

/// Planar edge state dimension.
pub const D: usize = 2;

#[derive(Debug, Error)]
pub enum StageError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("a nominal drift-center component is zero; relative dispersion is undefined")]
    DegenerateNominal,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Consensus closed loop: `A = (k_a / k_0) I`, so the per-coordinate
/// contraction rate is `k_a / k_0`.
#[derive(Debug, Clone, Copy)]
pub struct ConsensusModel {
    pub k_a: f64,
    pub k_0: f64,
}

impl ConsensusModel {
    pub fn new(k_a: f64, model: &OrbitModel) -> Self {
        Self {
            k_a,
            k_0: model.k_0,
        }
    }

    /// Contraction rate [1/s].
    pub fn rate(&self) -> f64 {
        self.k_a / self.k_0
    }

    pub fn closed_loop_matrix(&self) -> Mat2 {
        Mat2::diag(self.rate(), self.rate())
    }
}

/// Dense contraction operator `exp(-dt (L_e (x) A)) = exp(-dt a L_e) (x) I_2`.
pub fn contraction(
    graph: &StageGraph,
    consensus: &ConsensusModel,
    dt: f64,
) -> Result<Mat, StageError> {
    let scalar = sym_expm(&graph.edge_laplacian(), -dt * consensus.rate())?;
    Ok(scalar.as_mat().kron_identity(D))
}

/// Dense stage-update operators: `A = P [Phi; R (I - Phi)]`, `B = P [0; I]`.
pub fn build_lemma_operators(
    graph: &StageGraph,
    step: &ExpansionStep,
    consensus: &ConsensusModel,
    dt: f64,
) -> Result<(Mat, Mat), StageError> {
    let m = graph.n_edges();
    let f = step.new_edges.len();
    let phi = contraction(graph, consensus, dt)?;
    let r = anchor_projection(graph, step, D)?;
    let i_minus_phi = Mat::identity(D * m).sub(&phi);
    let bottom = r.matmul(&i_minus_phi);
    let a0 = phi.vstack(&bottom);
    let b0 = Mat::zeros(D * m, D * f).vstack(&Mat::identity(D * f));
    let p = step.permutation_matrix(D);
    Ok((p.matmul(&a0), p.matmul(&b0)))
}

/// One satellite release feeding a stage's new edges.
#[derive(Debug, Clone, Copy)]
pub struct ReleasedSatellite {
    /// Drag-corrected nominal drift center at its own release instant.
    pub nominal: DriftCenterState,
    /// Free-drift duration from release to edge activation in seconds.
    pub free_drift: f64,
}

/// Endpoints of one new edge, as indices into the stage's satellite list,
/// oriented tail to head.
#[derive(Debug, Clone, Copy)]
pub struct MismatchEdge {
    pub tail_sat: usize,
    pub head_sat: usize,
}

/// Per-satellite contribution to the injected covariance: a signed
/// incidence pattern over the new edges and a propagated 2x2 covariance.
#[derive(Debug, Clone)]
pub struct MismatchSource {
    pub pattern: Vec<(usize, f64)>,
    pub cov: Mat2,
}

/// Mean and covariance of the drift-center mismatch injected into the new
/// edges of one stage.
#[derive(Debug, Clone)]
pub struct InjectedMismatch {
    pub mean: Vec<Vec2>,
    /// Dense covariance, (2 |F|) x (2 |F|).
    pub cov: Mat,
    /// Per-satellite decomposition of `cov`.
    pub sources: Vec<MismatchSource>,
    /// Free-drift duration per satellite in seconds.
    pub durations: Vec<f64>,
}

impl InjectedMismatch {
    pub fn stacked_mean(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(D * self.mean.len());
        for m in &self.mean {
            v.push(m.x);
            v.push(m.y);
        }
        v
    }
}

/// Build the injected mismatch for one stage.
///
/// Edge means are differences of the free-drift propagated nominals,
/// `Psi(tau_tail) v_tail - Psi(tau_head) v_head`. Release errors are
/// independent per satellite, Gaussian on the `[2 C1', C4']` components with
/// standard deviation `variance_factor` times the absolute nominal
/// component, and propagated through the same free drift. Edges sharing a
/// satellite pick up the corresponding cross-covariance.
pub fn injected_mismatch(
    model: &OrbitModel,
    sats: &[ReleasedSatellite],
    edges: &[MismatchEdge],
    variance_factor: f64,
) -> Result<InjectedMismatch, StageError> {
    let n_edges = edges.len();
    let propagated: Vec<(Mat2, Vec2)> = sats
        .iter()
        .map(|s| {
            let psi = free_drift_transition(model, s.free_drift);
            (psi, psi.apply(s.nominal.vector()))
        })
        .collect();

    let mean: Vec<Vec2> = edges
        .iter()
        .map(|e| propagated[e.tail_sat].1 - propagated[e.head_sat].1)
        .collect();

    let mut sources = Vec::with_capacity(sats.len());
    for (idx, sat) in sats.iter().enumerate() {
        let v = sat.nominal.vector();
        if variance_factor > 0.0 && (v.x == 0.0 || v.y == 0.0) {
            return Err(StageError::DegenerateNominal);
        }
        let sx = variance_factor * v.x.abs();
        let sy = variance_factor * v.y.abs();
        let cov = propagated[idx].0.sandwich(Mat2::diag(sx * sx, sy * sy));
        let mut pattern = Vec::new();
        for (e, edge) in edges.iter().enumerate() {
            if edge.tail_sat == idx {
                pattern.push((e, 1.0));
            }
            if edge.head_sat == idx {
                pattern.push((e, -1.0));
            }
        }
        sources.push(MismatchSource { pattern, cov });
    }

    let mut cov = Mat::zeros(D * n_edges, D * n_edges);
    for s in &sources {
        for &(e, pe) in &s.pattern {
            for &(f, pf) in &s.pattern {
                let w = pe * pf;
                cov[(D * e, D * f)] += w * s.cov.a;
                cov[(D * e, D * f + 1)] += w * s.cov.b;
                cov[(D * e + 1, D * f)] += w * s.cov.c;
                cov[(D * e + 1, D * f + 1)] += w * s.cov.d;
            }
        }
    }
    cov.symmetrize();

    Ok(InjectedMismatch {
        mean,
        cov,
        sources,
        durations: sats.iter().map(|s| s.free_drift).collect(),
    })
}

/// Stacked edge-state mean and covariance at one stage.
#[derive(Debug, Clone)]
pub struct StageMoments {
    pub mean: Vec<f64>,
    pub cov: Mat,
}

impl StageMoments {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn edge_mean(&self, e: usize) -> Vec2 {
        Vec2::new(self.mean[D * e], self.mean[D * e + 1])
    }

    pub fn edge_cov(&self, e: usize) -> Mat2 {
        Mat2::new(
            self.cov[(D * e, D * e)],
            self.cov[(D * e, D * e + 1)],
            self.cov[(D * e + 1, D * e)],
            self.cov[(D * e + 1, D * e + 1)],
        )
    }
}

/// One affine update: `mu' = A mu + B mu_w`, `Sigma' = A Sigma A^T + B
/// Sigma_w B^T`, symmetrized after accumulation.
pub fn propagate_moments(
    m: &StageMoments,
    a: &Mat,
    b: &Mat,
    w: &InjectedMismatch,
) -> Result<StageMoments, StageError> {
    if a.cols() != m.dim() {
        return Err(StageError::DimensionMismatch(format!(
            "A expects {} states, got {}",
            a.cols(),
            m.dim()
        )));
    }
    if b.cols() != D * w.mean.len() || b.rows() != a.rows() {
        return Err(StageError::DimensionMismatch(format!(
            "B is {}x{}, expected {}x{}",
            b.rows(),
            b.cols(),
            a.rows(),
            D * w.mean.len()
        )));
    }
    let mut mean = a.matvec(&m.mean);
    let bw = b.matvec(&w.stacked_mean());
    for (x, y) in mean.iter_mut().zip(bw.iter()) {
        *x += y;
    }
    let mut cov = a.matmul(&m.cov).matmul(&a.transpose());
    cov.add_assign_scaled(&b.matmul(&w.cov).matmul(&b.transpose()), 1.0);
    cov.symmetrize();
    Ok(StageMoments { mean, cov })
}

/// Closed-form batch evaluation for a fixed operator sequence: the final
/// moments via the products `Gamma_i = (A_{M-1} ... A_i) B_{i-1}`, equal to
/// the iterated one-step updates.
pub fn closed_form_stack(
    operators: &[(Mat, Mat)],
    initial: &StageMoments,
    mismatches: &[InjectedMismatch],
) -> Result<StageMoments, StageError> {
    let m = operators.len();
    if mismatches.len() != m {
        return Err(StageError::DimensionMismatch(format!(
            "{} operator pairs but {} mismatches",
            m,
            mismatches.len()
        )));
    }
    let final_dim = if m == 0 {
        initial.dim()
    } else {
        operators[m - 1].0.rows()
    };
    // suffix[i] = A_{m-1} ... A_i, suffix[m] = I.
    let mut suffix = vec![Mat::identity(final_dim)];
    for (a, _) in operators.iter().rev() {
        let last = suffix.last().unwrap();
        suffix.push(last.matmul(a));
    }
    suffix.reverse();

    let mut mean = suffix[0].matvec(&initial.mean);
    let mut cov = suffix[0]
        .matmul(&initial.cov)
        .matmul(&suffix[0].transpose());
    for i in 1..=m {
        let gamma = suffix[i].matmul(&operators[i - 1].1);
        let w = &mismatches[i - 1];
        let gw = gamma.matvec(&w.stacked_mean());
        for (x, y) in mean.iter_mut().zip(gw.iter()) {
            *x += y;
        }
        cov.add_assign_scaled(&gamma.matmul(&w.cov).matmul(&gamma.transpose()), 1.0);
    }
    cov.symmetrize();
    Ok(StageMoments { mean, cov })
}

/// Action of `exp(-dt a L)` on blocks of column vectors, by a truncated
/// Taylor series with substepping so each substep exponent stays small.
#[derive(Debug, Clone)]
pub struct ExpAction {
    coeff: f64,
    substeps: usize,
}

impl ExpAction {
    /// Largest per-substep exponent norm. Taylor cancellation amplifies
    /// roundoff by about e^theta, so 4 keeps the error near 5e-15 while
    /// cutting the term count.
    const THETA_MAX: f64 = 4.0;

    pub fn new(lap: &CsrMatrix, dt: f64, rate: f64) -> Self {
        let coeff = -dt * rate;
        let theta = coeff.abs() * lap.max_row_sum();
        let substeps = ((theta / Self::THETA_MAX).ceil() as usize).max(1);
        Self { coeff, substeps }
    }

    /// Apply to `x` (n x k row-major), returning `exp(coeff L) x`.
    pub fn apply(&self, lap: &CsrMatrix, x: &Mat) -> Mat {
        let c = self.coeff / self.substeps as f64;
        let mut acc = x.clone();
        let mut term = Mat::zeros(x.rows(), x.cols());
        let mut buf = Mat::zeros(x.rows(), x.cols());
        for _ in 0..self.substeps {
            term.clone_from(&acc);
            for j in 1..=64 {
                lap.mul_block(&term, &mut buf);
                let s = c / j as f64;
                std::mem::swap(&mut term, &mut buf);
                for v in 0..term.rows() {
                    let row = term.row_mut(v);
                    for e in row.iter_mut() {
                        *e *= s;
                    }
                }
                for v in 0..acc.rows() {
                    let arow = acc.row_mut(v);
                    for (a, t) in arow.iter_mut().zip(term.row(v).iter()) {
                        *a += t;
                    }
                }
                if term.max_abs() <= 1e-17 * acc.max_abs().max(1e-300) {
                    break;
                }
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_row_ladder, Anchor, Edge, ExpansionStep, StageGraph};
    use crate::numerics::{sym_eigen, SymMatrix};
    use crate::orbit::{derive_coefficients, k_j2_conventional};

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

    #[test]
    fn contraction_identity_at_zero_dt() {
        let ladder = build_row_ladder(2);
        let g = ladder.final_graph();
        let c = ConsensusModel::new(10.0, &model());
        let phi = contraction(g, &c, 0.0).unwrap();
        assert!(phi.sub(&Mat::identity(D * g.n_edges())).frobenius() < 1e-12);
    }

    #[test]
    fn contraction_single_edge_scalar() {
        // Two-node, one-edge graph: L_e = [2], Phi = e^{-2 a dt} I_2.
        let g = StageGraph::new(2, vec![Edge::new(0, 1)]);
        let c = ConsensusModel::new(10.0, &model());
        let dt = 5.0;
        let phi = contraction(&g, &c, dt).unwrap();
        let want = (-2.0 * c.rate() * dt).exp();
        assert!((phi[(0, 0)] - want).abs() < 1e-13);
        assert!((phi[(1, 1)] - want).abs() < 1e-13);
        assert!(phi[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn contraction_spectrum() {
        // Eigenvalues of Phi are exp(-a dt lambda_i(L_e)), each doubled.
        let ladder = build_row_ladder(2);
        let g = ladder.final_graph();
        let c = ConsensusModel::new(20.0, &model());
        let dt = 30.0;
        let le = sym_eigen(&g.edge_laplacian()).unwrap();
        let phi = contraction(g, &c, dt).unwrap();
        let phi_sym = crate::numerics::SymMatrix::new(phi).unwrap();
        let pe = sym_eigen(&phi_sym).unwrap();
        let mut want: Vec<f64> = le
            .values
            .iter()
            .flat_map(|&l| [(-c.rate() * dt * l).exp(); 2])
            .collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in pe.values.iter().zip(want.iter()) {
            assert!((got - want).abs() <= 1e-10 * want.max(1e-10));
        }
        // Contraction on the range of L_e: no eigenvalue exceeds one.
        assert!(pe.values.iter().all(|&v| v <= 1.0 + 1e-12));
    }

    #[test]
    fn lemma_operator_shapes_and_limits() {
        let ladder = build_row_ladder(3);
        let g = &ladder.graphs[1];
        let step = &ladder.steps[1];
        let c = ConsensusModel::new(10.0, &model());

        let m = g.n_edges();
        let f = step.new_edges.len();
        let (a, b) = build_lemma_operators(g, step, &c, 8.0).unwrap();
        assert_eq!(a.rows(), D * (m + f));
        assert_eq!(a.cols(), D * m);
        assert_eq!(b.rows(), D * (m + f));
        assert_eq!(b.cols(), D * f);

        // dt = 0: new edges inherit nothing from anchor motion.
        let (a0, _) = build_lemma_operators(g, step, &c, 0.0).unwrap();
        let top = Mat::from_fn(D * m, D * m, |i, j| a0[(i, j)]);
        assert!(top.sub(&Mat::identity(D * m)).frobenius() < 1e-11);
        for i in D * m..D * (m + f) {
            for j in 0..D * m {
                assert!(a0[(i, j)].abs() < 1e-11);
            }
        }
    }

    #[test]
    fn tree_graph_large_dt_limit() {
        // Tree: the edge Laplacian is nonsingular, Phi -> 0, A -> P [0; R].
        let g = StageGraph::new(3, vec![Edge::new(0, 1), Edge::new(1, 2)]);
        let step = ExpansionStep {
            new_nodes: vec![3],
            new_edges: vec![2],
            anchors: vec![Anchor { node: 2, sign: 1 }],
            permutation: vec![0, 1, 2],
        };
        let c = ConsensusModel::new(10.0, &model());
        let dt = 1e7;
        let (a, _) = build_lemma_operators(&g, &step, &c, dt).unwrap();
        let r = anchor_projection(&g, &step, D).unwrap();
        for i in 0..D * 2 {
            for j in 0..D * 2 {
                assert!(a[(i, j)].abs() < 1e-12, "Phi should vanish");
            }
        }
        for i in 0..D {
            for j in 0..D * 2 {
                assert!((a[(D * 2 + i, j)] - r[(i, j)]).abs() < 1e-10);
            }
        }
    }

    fn demo_sats(model: &OrbitModel, dt: f64) -> (Vec<ReleasedSatellite>, Vec<MismatchEdge>) {
        let sats = vec![
            ReleasedSatellite {
                nominal: DriftCenterState::new(0.9, -1.8),
                free_drift: 2.0 * dt,
            },
            ReleasedSatellite {
                nominal: DriftCenterState::new(0.9, -1.5),
                free_drift: dt,
            },
            ReleasedSatellite {
                nominal: DriftCenterState::new(0.9, -1.2),
                free_drift: dt,
            },
        ];
        let edges = vec![
            MismatchEdge {
                tail_sat: 0,
                head_sat: 1,
            },
            MismatchEdge {
                tail_sat: 1,
                head_sat: 2,
            },
        ];
        let _ = model;
        (sats, edges)
    }

    #[test]
    fn zero_factor_mismatch_is_deterministic() {
        let m = model();
        let (sats, edges) = demo_sats(&m, 4.0);
        let w = injected_mismatch(&m, &sats, &edges, 0.0).unwrap();
        assert_eq!(w.cov.frobenius(), 0.0);
        assert_eq!(w.mean.len(), 2);
    }

    #[test]
    fn disjoint_edges_block_diagonal() {
        let m = model();
        let sats = vec![
            ReleasedSatellite {
                nominal: DriftCenterState::new(0.9, -1.8),
                free_drift: 8.0,
            },
            ReleasedSatellite {
                nominal: DriftCenterState::new(0.9, -1.5),
                free_drift: 4.0,
            },
            ReleasedSatellite {
                nominal: DriftCenterState::new(0.8, -1.2),
                free_drift: 8.0,
            },
            ReleasedSatellite {
                nominal: DriftCenterState::new(0.8, -1.1),
                free_drift: 4.0,
            },
        ];
        let edges = vec![
            MismatchEdge {
                tail_sat: 0,
                head_sat: 1,
            },
            MismatchEdge {
                tail_sat: 2,
                head_sat: 3,
            },
        ];
        let w = injected_mismatch(&m, &sats, &edges, 0.05).unwrap();
        for i in 0..D {
            for j in 0..D {
                assert_eq!(w.cov[(i, D + j)], 0.0);
                assert_eq!(w.cov[(D + i, j)], 0.0);
            }
        }
    }

    #[test]
    fn identical_satellites_expose_interval_drift() {
        // Same nominal, leading drifts 2 dt, trailing dt: the mean reduces
        // to [0; -eps2 C1' dt].
        let m = model();
        let dt = 6.0;
        let nominal = DriftCenterState::new(0.9, -1.8);
        let sats = vec![
            ReleasedSatellite {
                nominal,
                free_drift: 2.0 * dt,
            },
            ReleasedSatellite {
                nominal,
                free_drift: dt,
            },
        ];
        let edges = vec![MismatchEdge {
            tail_sat: 0,
            head_sat: 1,
        }];
        let w = injected_mismatch(&m, &sats, &edges, 0.0).unwrap();
        assert!(w.mean[0].x.abs() < 1e-15);
        let want = -m.epsilon_2 * nominal.c1p * dt;
        assert!((w.mean[0].y - want).abs() <= 1e-12 * want.abs());
    }

    #[test]
    fn degenerate_nominal_rejected() {
        let m = model();
        let sats = vec![ReleasedSatellite {
            nominal: DriftCenterState::new(0.0, -1.8),
            free_drift: 4.0,
        }];
        let edges: Vec<MismatchEdge> = vec![];
        assert!(matches!(
            injected_mismatch(&m, &sats, &edges, 0.1),
            Err(StageError::DegenerateNominal)
        ));
        assert!(injected_mismatch(&m, &sats, &edges, 0.0).is_ok());
    }

    #[test]
    fn propagate_zero_and_identity_cases() {
        let m = model();
        let ladder = build_row_ladder(2);
        let g = &ladder.graphs[0];
        let step = &ladder.steps[0];
        let c = ConsensusModel::new(10.0, &m);
        let (a, b) = build_lemma_operators(g, step, &c, 4.0).unwrap();

        let zero = StageMoments {
            mean: vec![0.0; D * g.n_edges()],
            cov: Mat::zeros(D * g.n_edges(), D * g.n_edges()),
        };
        let (sats, edges) = {
            let nominal = DriftCenterState::new(0.9, -1.8);
            let mk = |tau: f64| ReleasedSatellite {
                nominal,
                free_drift: tau,
            };
            (
                vec![mk(8.0), mk(8.0), mk(8.0), mk(4.0), mk(4.0), mk(4.0)],
                vec![
                    MismatchEdge {
                        tail_sat: 0,
                        head_sat: 3,
                    },
                    MismatchEdge {
                        tail_sat: 1,
                        head_sat: 4,
                    },
                    MismatchEdge {
                        tail_sat: 2,
                        head_sat: 5,
                    },
                    MismatchEdge {
                        tail_sat: 3,
                        head_sat: 4,
                    },
                    MismatchEdge {
                        tail_sat: 4,
                        head_sat: 5,
                    },
                ],
            )
        };
        let mut w = injected_mismatch(&m, &sats, &edges, 0.0).unwrap();
        // Zero means and identity injected covariance: Sigma' = B B^T.
        for mean in &mut w.mean {
            *mean = Vec2::zero();
        }
        w.cov = Mat::identity(D * 5);
        let out = propagate_moments(&zero, &a, &b, &w).unwrap();
        assert!(out.mean.iter().all(|&v| v == 0.0));
        let bbt = b.matmul(&b.transpose());
        assert!(out.cov.sub(&bbt).frobenius() < 1e-12);

        // Dimension mismatch is reported.
        let bad = StageMoments {
            mean: vec![0.0; 2],
            cov: Mat::zeros(2, 2),
        };
        assert!(matches!(
            propagate_moments(&bad, &a, &b, &w),
            Err(StageError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn permutation_reorders_operator_rows() {
        // A shuffled edge ordering must land each stacked block on the row
        // the permutation names.
        let ladder = build_row_ladder(2);
        let g = &ladder.graphs[0];
        let mut step = ladder.steps[0].clone();
        let c = ConsensusModel::new(10.0, &model());
        let (a_id, b_id) = build_lemma_operators(g, &step, &c, 3.0).unwrap();
        step.permutation = vec![6, 0, 5, 1, 4, 2, 3];
        let (a_p, b_p) = build_lemma_operators(g, &step, &c, 3.0).unwrap();
        for (src, &dst) in step.permutation.iter().enumerate() {
            for d in 0..D {
                for j in 0..a_id.cols() {
                    assert_eq!(a_p[(D * dst + d, j)], a_id[(D * src + d, j)]);
                }
                for j in 0..b_id.cols() {
                    assert_eq!(b_p[(D * dst + d, j)], b_id[(D * src + d, j)]);
                }
            }
        }
    }

    #[test]
    fn contraction_monotone_in_interval() {
        // On the range of the edge Laplacian the contraction strictly
        // shrinks with the interval; the spectrum makes it explicit.
        let ladder = build_row_ladder(3);
        let g = ladder.final_graph();
        let c = ConsensusModel::new(15.0, &model());
        let le = g.edge_laplacian();
        let eig = sym_eigen(&le).unwrap();
        let z: Vec<f64> = (0..D * g.n_edges())
            .map(|i| ((i * 13 + 5) % 7) as f64 - 3.0)
            .collect();
        // Project onto the range of (L_e (x) I) by applying it once.
        let mu = le.as_mat().kron_identity(D).matvec(&z);
        let mut prev = f64::INFINITY;
        for dt in [0.0, 2.0, 8.0, 32.0, 128.0] {
            let phi = contraction(g, &c, dt).unwrap();
            let norm: f64 = phi.matvec(&mu).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= prev + 1e-12, "contraction must not grow with dt");
            prev = norm;
            // Spectral check: every eigenvalue decays per exp(-rate dt l).
            let spec = sym_eigen(&SymMatrix::new(phi).unwrap()).unwrap();
            let lmax_nonzero = eig.values.iter().fold(0.0_f64, |a, &v| a.max(v));
            let floor = (-c.rate() * dt * lmax_nonzero).exp();
            assert!(spec.values[0] >= floor - 1e-12);
        }
    }

    #[test]
    fn zero_operators_keep_only_last_mismatch() {
        let m = model();
        let nominal = DriftCenterState::new(0.9, -1.8);
        let sat = |tau: f64| ReleasedSatellite {
            nominal,
            free_drift: tau,
        };
        let edge = MismatchEdge {
            tail_sat: 0,
            head_sat: 1,
        };
        let w1 = injected_mismatch(&m, &[sat(8.0), sat(4.0)], &[edge], 0.1).unwrap();
        let w2 = injected_mismatch(&m, &[sat(6.0), sat(3.0)], &[edge], 0.1).unwrap();
        let initial = StageMoments {
            mean: vec![1.0, 2.0],
            cov: Mat::identity(2),
        };
        let zero_a = Mat::zeros(2, 2);
        let b = Mat::identity(2);
        let ops = vec![(zero_a.clone(), b.clone()), (zero_a, b)];
        let out = closed_form_stack(&ops, &initial, &[w1, w2.clone()]).unwrap();
        assert_eq!(out.mean, w2.stacked_mean());
        assert!(out.cov.sub(&w2.cov).frobenius() < 1e-14);
    }

    #[test]
    fn exp_action_matches_dense_exponential() {
        let ladder = build_row_ladder(3);
        let g = ladder.final_graph();
        let c = ConsensusModel::new(25.0, &model());
        for dt in [0.5, 4.0, 60.0, 400.0] {
            let lap = g.edge_laplacian_sparse();
            let action = ExpAction::new(&lap, dt, c.rate());
            let dense = sym_expm(&g.edge_laplacian(), -dt * c.rate()).unwrap();
            let x = Mat::from_fn(g.n_edges(), 3, |i, j| ((i * 7 + j * 13) % 11) as f64 - 5.0);
            let got = action.apply(&lap, &x);
            let want = dense.as_mat().matmul(&x);
            assert!(
                got.sub(&want).frobenius() <= 1e-11 * want.frobenius().max(1.0),
                "dt {dt}"
            );
        }
    }
}
