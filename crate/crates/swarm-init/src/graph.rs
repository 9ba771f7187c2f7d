//! Expanding deployment graphs: oriented incidence, node and edge
//! Laplacians, anchor selection for newly created edges, and the
//! row-of-three ladder generator.
//!
//! Edges are oriented from `tail` to `head`; the incidence column carries
//! +1 at the tail and -1 at the head. Norm-level results do not depend on
//! the orientation, and the tests confirm it.

use serde_json::json;
use thiserror::Error;

use crate::numerics::{pseudo_inverse, Mat, SymMatrix, DEFAULT_RANK_TOL};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph is disconnected")]
    Disconnected,
    #[error("edge index {0} out of range")]
    BadEdge(usize),
    #[error("invalid expansion step: {0}")]
    InvalidExpansion(String),
}

/// One oriented edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
}

impl Edge {
    pub fn new(tail: usize, head: usize) -> Self {
        assert_ne!(tail, head, "self loops are not allowed");
        Self { tail, head }
    }

    pub fn flipped(&self) -> Self {
        Self {
            tail: self.head,
            head: self.tail,
        }
    }
}

/// Interaction graph at one deployment stage.
#[derive(Debug, Clone)]
pub struct StageGraph {
    n_nodes: usize,
    edges: Vec<Edge>,
}

impl StageGraph {
    pub fn new(n_nodes: usize, edges: Vec<Edge>) -> Self {
        for e in &edges {
            assert!(e.tail < n_nodes && e.head < n_nodes, "edge out of range");
        }
        Self { n_nodes, edges }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> Result<Edge, GraphError> {
        self.edges.get(e).copied().ok_or(GraphError::BadEdge(e))
    }

    /// Copy with one edge orientation flipped (test support).
    pub fn with_flipped_edge(&self, e: usize) -> Self {
        let mut edges = self.edges.clone();
        edges[e] = edges[e].flipped();
        Self {
            n_nodes: self.n_nodes,
            edges,
        }
    }

    /// Oriented incidence matrix (nodes x edges).
    pub fn incidence(&self) -> Mat {
        let mut e = Mat::zeros(self.n_nodes, self.edges.len());
        for (j, ed) in self.edges.iter().enumerate() {
            e[(ed.tail, j)] = 1.0;
            e[(ed.head, j)] = -1.0;
        }
        e
    }

    /// Node Laplacian E E^T.
    pub fn node_laplacian(&self) -> SymMatrix {
        let mut l = Mat::zeros(self.n_nodes, self.n_nodes);
        for ed in &self.edges {
            l[(ed.tail, ed.tail)] += 1.0;
            l[(ed.head, ed.head)] += 1.0;
            l[(ed.tail, ed.head)] -= 1.0;
            l[(ed.head, ed.tail)] -= 1.0;
        }
        SymMatrix::new(l).expect("laplacian is symmetric by construction")
    }

    /// Adjacency matrix (no self terms).
    pub fn adjacency(&self) -> Mat {
        let mut a = Mat::zeros(self.n_nodes, self.n_nodes);
        for ed in &self.edges {
            a[(ed.tail, ed.head)] = 1.0;
            a[(ed.head, ed.tail)] = 1.0;
        }
        a
    }

    /// Edge Laplacian E^T E.
    pub fn edge_laplacian(&self) -> SymMatrix {
        let m = self.edges.len();
        let mut l = Mat::zeros(m, m);
        let mut per_node: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n_nodes];
        for (j, ed) in self.edges.iter().enumerate() {
            per_node[ed.tail].push((j, 1.0));
            per_node[ed.head].push((j, -1.0));
        }
        for signs in &per_node {
            for &(i, si) in signs {
                for &(j, sj) in signs {
                    l[(i, j)] += si * sj;
                }
            }
        }
        SymMatrix::new(l).expect("edge laplacian is symmetric by construction")
    }

    /// Edge Laplacian in compressed sparse rows.
    pub fn edge_laplacian_sparse(&self) -> CsrMatrix {
        let m = self.edges.len();
        let mut per_node: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n_nodes];
        for (j, ed) in self.edges.iter().enumerate() {
            per_node[ed.tail].push((j, 1.0));
            per_node[ed.head].push((j, -1.0));
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        for signs in &per_node {
            for &(i, si) in signs {
                for &(j, sj) in signs {
                    rows[i].push((j, si * sj));
                }
            }
        }
        CsrMatrix::from_rows(m, rows)
    }

    /// Moore-Penrose pseudoinverse of the edge Laplacian.
    pub fn edge_laplacian_pinv(&self) -> Result<SymMatrix, GraphError> {
        pseudo_inverse(&self.edge_laplacian(), DEFAULT_RANK_TOL)
            .map_err(|_| GraphError::Disconnected)
    }

    /// Projector onto the range of the incidence matrix, E L_e^+ E^T.
    pub fn range_projector(&self) -> Result<Mat, GraphError> {
        let e = self.incidence();
        let pinv = self.edge_laplacian_pinv()?;
        Ok(e.matmul(pinv.as_mat()).matmul(&e.transpose()))
    }

    pub fn is_connected(&self) -> bool {
        if self.n_nodes == 0 {
            return true;
        }
        let mut parent: Vec<usize> = (0..self.n_nodes).collect();
        fn find(parent: &mut [usize], mut a: usize) -> usize {
            while parent[a] != a {
                parent[a] = parent[parent[a]];
                a = parent[a];
            }
            a
        }
        for ed in &self.edges {
            let (ra, rb) = (find(&mut parent, ed.tail), find(&mut parent, ed.head));
            parent[ra] = rb;
        }
        let root = find(&mut parent, 0);
        (0..self.n_nodes).all(|v| find(&mut parent, v) == root)
    }

    pub fn node_degree(&self, v: usize) -> usize {
        self.edges
            .iter()
            .filter(|e| e.tail == v || e.head == v)
            .count()
    }
}

/// Compressed sparse row matrix (square, used for edge Laplacians).
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    fn from_rows(n: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                if let Some(last) = merged.last_mut() {
                    if last.0 == j {
                        last.1 += v;
                        continue;
                    }
                }
                merged.push((j, v));
            }
            for (j, v) in merged {
                if v != 0.0 {
                    col_idx.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            vals,
        }
    }

    /// Max absolute row sum (one-norm of the symmetric matrix).
    pub fn max_row_sum(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                self.vals[self.row_ptr[i]..self.row_ptr[i + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// out = self * x for a block of column vectors stored as rows of `x`
    /// (x is n x k row-major).
    pub fn mul_block(&self, x: &Mat, out: &mut Mat) {
        assert_eq!(x.rows(), self.n);
        assert_eq!(out.rows(), self.n);
        assert_eq!(x.cols(), out.cols());
        for i in 0..self.n {
            let orow = out.row_mut(i);
            orow.fill(0.0);
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[idx];
                let v = self.vals[idx];
                for (o, &xv) in orow.iter_mut().zip(x.row(j).iter()) {
                    *o += v * xv;
                }
            }
        }
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.n, self.n);
        for i in 0..self.n {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[idx])] = self.vals[idx];
            }
        }
        m
    }
}

/// Dense Cholesky of the node Laplacian grounded at node 0; solves
/// `L y = b` for right-hand sides orthogonal to the all-ones vector,
/// returning the solution with `y[0] = 0`.
#[derive(Debug, Clone)]
pub struct GroundedLaplacian {
    n: usize,
    /// Lower factor of L[1.., 1..], row-major.
    lower: Mat,
}

impl GroundedLaplacian {
    pub fn new(graph: &StageGraph) -> Result<Self, GraphError> {
        if !graph.is_connected() {
            return Err(GraphError::Disconnected);
        }
        let n = graph.n_nodes();
        let l = graph.node_laplacian();
        let k = n - 1;
        let mut a = Mat::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                a[(i, j)] = l.as_mat()[(i + 1, j + 1)];
            }
        }
        // In-place dense Cholesky.
        for i in 0..k {
            for j in 0..=i {
                let mut s = a[(i, j)];
                for p in 0..j {
                    s -= a[(i, p)] * a[(j, p)];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(GraphError::Disconnected);
                    }
                    a[(i, i)] = s.sqrt();
                } else {
                    a[(i, j)] = s / a[(j, j)];
                }
            }
        }
        Ok(Self { n, lower: a })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let k = self.n - 1;
        let mut y = vec![0.0; k];
        for i in 0..k {
            let mut s = b[i + 1];
            for p in 0..i {
                s -= self.lower[(i, p)] * y[p];
            }
            y[i] = s / self.lower[(i, i)];
        }
        for i in (0..k).rev() {
            let mut s = y[i];
            for p in (i + 1)..k {
                s -= self.lower[(p, i)] * y[p];
            }
            y[i] = s / self.lower[(i, i)];
        }
        let mut out = vec![0.0; self.n];
        out[1..].copy_from_slice(&y);
        out
    }
}

/// Anchor assignment of one new edge: the existing-cluster node whose
/// displacement is imputed to the edge, and the side it stands in for
/// (+1 tail, -1 head).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Anchor {
    pub node: usize,
    pub sign: i8,
}

/// One expansion step from the stage-k graph to the stage-(k+1) graph.
#[derive(Debug, Clone)]
pub struct ExpansionStep {
    /// Nodes added by this step.
    pub new_nodes: Vec<usize>,
    /// Edge indices (in the next graph's canonical ordering) created here.
    pub new_edges: Vec<usize>,
    /// Anchor per new edge, parallel to `new_edges`.
    pub anchors: Vec<Anchor>,
    /// Maps position in the stacked [old edges, new edges] order to the
    /// canonical edge index of the next graph.
    pub permutation: Vec<usize>,
}

impl ExpansionStep {
    pub fn validate(&self, prev: &StageGraph, next: &StageGraph) -> Result<(), GraphError> {
        if self.new_edges.len() != self.anchors.len() {
            return Err(GraphError::InvalidExpansion(
                "one anchor required per new edge".into(),
            ));
        }
        if next.n_edges() != prev.n_edges() + self.new_edges.len() {
            return Err(GraphError::InvalidExpansion("edge count mismatch".into()));
        }
        for a in &self.anchors {
            if a.node >= prev.n_nodes() {
                return Err(GraphError::InvalidExpansion(format!(
                    "anchor node {} is not in the existing cluster",
                    a.node
                )));
            }
            if a.sign != 1 && a.sign != -1 {
                return Err(GraphError::InvalidExpansion(
                    "anchor sign must be +-1".into(),
                ));
            }
        }
        let mut seen = vec![false; self.permutation.len()];
        for &p in &self.permutation {
            if p >= seen.len() || seen[p] {
                return Err(GraphError::InvalidExpansion("invalid permutation".into()));
            }
            seen[p] = true;
        }
        Ok(())
    }

    /// Selection of distinct anchor nodes, ascending (nodes x u).
    pub fn u_matrix(&self, prev_nodes: usize) -> Mat {
        let mut nodes: Vec<usize> = self.anchors.iter().map(|a| a.node).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let mut u = Mat::zeros(prev_nodes, nodes.len());
        for (c, &v) in nodes.iter().enumerate() {
            u[(v, c)] = 1.0;
        }
        u
    }

    /// Maps distinct anchors to new edges (u x |F|), unsigned.
    pub fn s_matrix(&self) -> Mat {
        let mut nodes: Vec<usize> = self.anchors.iter().map(|a| a.node).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let mut s = Mat::zeros(nodes.len(), self.anchors.len());
        for (e, a) in self.anchors.iter().enumerate() {
            let r = nodes.binary_search(&a.node).unwrap();
            s[(r, e)] = 1.0;
        }
        s
    }

    /// Signed anchor selection (nodes x |F|): column e holds `sign` at the
    /// anchor node of edge e. With every sign +1 this is U * S.
    pub fn v_matrix(&self, prev_nodes: usize) -> Mat {
        let mut v = Mat::zeros(prev_nodes, self.anchors.len());
        for (e, a) in self.anchors.iter().enumerate() {
            v[(a.node, e)] = a.sign as f64;
        }
        v
    }

    /// Permutation as a dense matrix over edge blocks of size d.
    pub fn permutation_matrix(&self, d: usize) -> Mat {
        let m = self.permutation.len();
        let mut p = Mat::zeros(m, m);
        for (src, &dst) in self.permutation.iter().enumerate() {
            p[(dst, src)] = 1.0;
        }
        p.kron_identity(d)
    }

    pub fn is_identity_permutation(&self) -> bool {
        self.permutation.iter().enumerate().all(|(i, &p)| i == p)
    }
}

/// Projection of contracted existing-edge state onto the newly created
/// edges: `R = (V^T E L_e^+) (x) I_d`.
pub fn anchor_projection(
    graph: &StageGraph,
    step: &ExpansionStep,
    d: usize,
) -> Result<Mat, GraphError> {
    Ok(anchor_projection_scalar_dense(graph, step)?.kron_identity(d))
}

/// Scalar (per-coordinate) anchor projection via the dense pseudoinverse.
pub fn anchor_projection_scalar_dense(
    graph: &StageGraph,
    step: &ExpansionStep,
) -> Result<Mat, GraphError> {
    if !graph.is_connected() {
        return Err(GraphError::Disconnected);
    }
    let v = step.v_matrix(graph.n_nodes());
    let e = graph.incidence();
    let pinv = graph.edge_laplacian_pinv()?;
    Ok(v.transpose().matmul(&e).matmul(pinv.as_mat()))
}

/// Scalar anchor projection via grounded node-Laplacian solves. Row e is
/// `sign_e * (L^+ e_anchor)^T E`; the grounding constant cancels against
/// the incidence columns.
pub fn anchor_projection_scalar_fast(
    graph: &StageGraph,
    step: &ExpansionStep,
) -> Result<Mat, GraphError> {
    let solver = GroundedLaplacian::new(graph)?;
    let n = graph.n_nodes();
    let m = graph.n_edges();
    let mut out = Mat::zeros(step.anchors.len(), m);
    for (row, a) in step.anchors.iter().enumerate() {
        let mut b = vec![-1.0 / n as f64; n];
        b[a.node] += 1.0;
        let y = solver.solve(&b);
        let r = out.row_mut(row);
        for (j, ed) in graph.edges().iter().enumerate() {
            r[j] = a.sign as f64 * (y[ed.tail] - y[ed.head]);
        }
    }
    Ok(out)
}

/// Selector extracting the d-dimensional block of edge `e` from a stacked
/// edge vector.
pub fn edge_selector(graph: &StageGraph, e: usize, d: usize) -> Result<Mat, GraphError> {
    if e >= graph.n_edges() {
        return Err(GraphError::BadEdge(e));
    }
    let mut j = Mat::zeros(d, d * graph.n_edges());
    for r in 0..d {
        j[(r, d * e + r)] = 1.0;
    }
    Ok(j)
}

/// Row ladder: stage k holds k rows of `ROW_WIDTH` satellites. Adjacent
/// columns within a row are linked; consecutive rows are linked column to
/// column. New edges at each step: one inter-row edge per column, then the
/// two intra-row edges of the new row, each anchored at the previous-row
/// node of its lower column.
pub const ROW_WIDTH: usize = 3;

#[derive(Debug, Clone)]
pub struct RowLadder {
    /// Graphs for stages 1..=n_rows.
    pub graphs: Vec<StageGraph>,
    /// Steps mapping stage k to k+1, for k = 1..n_rows-1.
    pub steps: Vec<ExpansionStep>,
}

pub fn build_row_ladder(n_rows: usize) -> RowLadder {
    assert!(n_rows >= 1);
    let node = |row: usize, col: usize| row * ROW_WIDTH + col;
    let mut edges: Vec<Edge> = vec![
        Edge::new(node(0, 0), node(0, 1)),
        Edge::new(node(0, 1), node(0, 2)),
    ];
    let mut graphs = vec![StageGraph::new(ROW_WIDTH, edges.clone())];
    let mut steps = Vec::new();

    for row in 1..n_rows {
        let m_old = edges.len();
        let mut new_edges = Vec::new();
        let mut anchors = Vec::new();
        for col in 0..ROW_WIDTH {
            edges.push(Edge::new(node(row - 1, col), node(row, col)));
            new_edges.push(edges.len() - 1);
            anchors.push(Anchor {
                node: node(row - 1, col),
                sign: 1,
            });
        }
        for col in 0..ROW_WIDTH - 1 {
            edges.push(Edge::new(node(row, col), node(row, col + 1)));
            new_edges.push(edges.len() - 1);
            anchors.push(Anchor {
                node: node(row - 1, col),
                sign: 1,
            });
        }
        let n_new = new_edges.len();
        graphs.push(StageGraph::new((row + 1) * ROW_WIDTH, edges.clone()));
        steps.push(ExpansionStep {
            new_nodes: (0..ROW_WIDTH).map(|c| node(row, c)).collect(),
            new_edges,
            anchors,
            permutation: (0..m_old + n_new).collect(),
        });
    }
    RowLadder { graphs, steps }
}

impl RowLadder {
    pub fn n_rows(&self) -> usize {
        self.graphs.len()
    }

    pub fn final_graph(&self) -> &StageGraph {
        self.graphs.last().unwrap()
    }

    /// Topology dump: node list, ordered edge pairs, and per-stage sizes.
    pub fn topology_json(&self) -> serde_json::Value {
        let last = self.final_graph();
        json!({
            "nodes": (0..last.n_nodes()).collect::<Vec<_>>(),
            "edges": last
                .edges()
                .iter()
                .map(|e| vec![e.tail, e.head])
                .collect::<Vec<_>>(),
            "stage_boundaries": self
                .graphs
                .iter()
                .enumerate()
                .map(|(k, g)| json!({
                    "stage": k,
                    "rows": k + 1,
                    "nodes": g.n_nodes(),
                    "edges": g.n_edges(),
                }))
                .collect::<Vec<_>>(),
        })
    }
}
