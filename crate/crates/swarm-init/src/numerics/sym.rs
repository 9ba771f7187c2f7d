//! Symmetric dense matrices: validated construction, cyclic-Jacobi
//! eigendecomposition, Moore-Penrose pseudoinverse, and the symmetric
//! matrix exponential.

use super::mat::Mat;
use super::NumericsError;

/// Relative symmetry tolerance enforced at construction.
const SYMMETRY_TOL: f64 = 1e-12;

/// Default relative threshold separating structural zero eigenvalues from the
/// rest of the spectrum in [`pseudo_inverse`].
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Symmetric real matrix. Construction checks finiteness and symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    mat: Mat,
}

impl SymMatrix {
    pub fn new(mat: Mat) -> Result<Self, NumericsError> {
        if mat.rows() != mat.cols() {
            return Err(NumericsError::InvalidMatrix(format!(
                "not square: {}x{}",
                mat.rows(),
                mat.cols()
            )));
        }
        if !mat.is_finite() {
            return Err(NumericsError::InvalidMatrix("non-finite entry".into()));
        }
        for i in 0..mat.rows() {
            for j in (i + 1)..mat.cols() {
                let a = mat[(i, j)];
                let b = mat[(j, i)];
                if (a - b).abs() > SYMMETRY_TOL * a.abs().max(1.0) {
                    return Err(NumericsError::InvalidMatrix(format!(
                        "asymmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { mat })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, NumericsError> {
        Self::new(Mat::from_rows(rows))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mat: Mat::identity(n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            mat: Mat::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.mat
    }

    pub fn into_mat(self) -> Mat {
        self.mat
    }
}

/// Eigendecomposition of a symmetric matrix: `M = Q diag(values) Q^T` with
/// eigenvalues ascending and orthonormal columns in `q`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub q: Mat,
}

impl EigenDecomposition {
    /// Rebuild `Q f(Lambda) Q^T` for an eigenvalue map `f`.
    pub fn assemble(&self, mut f: impl FnMut(f64) -> f64) -> Mat {
        let n = self.values.len();
        let mut scaled = self.q.clone();
        // scaled = Q * diag(f(lambda)); columns of Q scaled in place.
        for j in 0..n {
            let fj = f(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= fj;
            }
        }
        let mut out = scaled.matmul(&self.q.transpose());
        out.symmetrize();
        out
    }
}

/// Cyclic Jacobi eigendecomposition. Eigenvalues are returned ascending.
pub fn sym_eigen(m: &SymMatrix) -> Result<EigenDecomposition, NumericsError> {
    let n = m.dim();
    let mut a = m.as_mat().clone();
    let mut q = Mat::identity(n);
    if n == 0 {
        return Ok(EigenDecomposition { values: vec![], q });
    }

    let off = |a: &Mat| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += a[(i, j)] * a[(i, j)];
            }
        }
        s.sqrt()
    };
    let scale = m.as_mat().frobenius().max(f64::MIN_POSITIVE);
    let tol = 1e-15 * scale;

    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        if off(&a) <= tol {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = a[(p, r)];
                if apr.abs() <= 1e-300 {
                    continue;
                }
                let app = a[(p, p)];
                let arr = a[(r, r)];
                let theta = (arr - app) / (2.0 * apr);
                // Stable tangent of the rotation angle.
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // Update rows/columns p and r of A.
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akr = a[(k, r)];
                    a[(k, p)] = c * akp - s * akr;
                    a[(k, r)] = s * akp + c * akr;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let ark = a[(r, k)];
                    a[(p, k)] = c * apk - s * ark;
                    a[(r, k)] = s * apk + c * ark;
                }
                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkr = q[(k, r)];
                    q[(k, p)] = c * qkp - s * qkr;
                    q[(k, r)] = s * qkp + c * qkr;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut qs = Mat::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            qs[(i, new_j)] = q[(i, old_j)];
        }
    }
    Ok(EigenDecomposition { values, q: qs })
}

/// Moore-Penrose pseudoinverse of a symmetric PSD matrix. Eigenvalues below
/// `rank_tol * lambda_max` are treated as structural zeros; an eigenvalue
/// below `-rank_tol * lambda_max` is rejected.
pub fn pseudo_inverse(m: &SymMatrix, rank_tol: f64) -> Result<SymMatrix, NumericsError> {
    let eig = sym_eigen(m)?;
    let lam_max = eig.values.iter().fold(0.0_f64, |a, &v| a.max(v));
    let cut = rank_tol * lam_max.max(f64::MIN_POSITIVE);
    if let Some(&min) = eig.values.iter().min_by(|a, b| a.partial_cmp(b).unwrap()) {
        if min < -cut {
            return Err(NumericsError::NotPsd(min));
        }
    }
    let inv = eig.assemble(|l| if l > cut { 1.0 / l } else { 0.0 });
    SymMatrix::new(inv)
}

/// `exp(scale * M)` for symmetric `M`, via the spectral decomposition.
pub fn sym_expm(m: &SymMatrix, scale: f64) -> Result<SymMatrix, NumericsError> {
    let eig = sym_eigen(m)?;
    for &l in &eig.values {
        let e = scale * l;
        if e > 700.0 {
            return Err(NumericsError::Overflow(e));
        }
    }
    let out = eig.assemble(|l| (scale * l).exp());
    SymMatrix::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn eigen_identity() {
        let m = SymMatrix::identity(3);
        let e = sym_eigen(&m).unwrap();
        for v in e.values {
            assert_close(v, 1.0, 1e-14);
        }
    }

    #[test]
    fn eigen_path_adjacency() {
        // Path-of-three adjacency: eigenvalues -sqrt(2), 0, sqrt(2).
        let m =
            SymMatrix::from_rows(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0]]).unwrap();
        let e = sym_eigen(&m).unwrap();
        let s2 = 2.0_f64.sqrt();
        assert_close(e.values[0], -s2, 1e-12);
        assert_close(e.values[1], 0.0, 1e-12);
        assert_close(e.values[2], s2, 1e-12);
    }

    #[test]
    fn eigen_two_node_laplacian() {
        let m = SymMatrix::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]]).unwrap();
        let e = sym_eigen(&m).unwrap();
        assert_close(e.values[0], 0.0, 1e-13);
        assert_close(e.values[1], 2.0, 1e-13);
    }

    #[test]
    fn eigen_reconstruction_and_orthonormality() {
        // Deterministic pseudo-random symmetric matrix.
        let n = 24;
        let mut seed = 0x2545F4914F6CDD1Du64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut raw = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = next();
                raw[(i, j)] = v;
                raw[(j, i)] = v;
            }
        }
        let m = SymMatrix::new(raw.clone()).unwrap();
        let e = sym_eigen(&m).unwrap();
        let rebuilt = e.assemble(|l| l);
        assert!(rebuilt.sub(&raw).frobenius() <= 1e-9 * raw.frobenius());
        let qtq = e.q.transpose().matmul(&e.q);
        assert!(qtq.sub(&Mat::identity(n)).frobenius() <= 1e-10 * (n as f64));
        for w in e.values.windows(2) {
            assert!(w[0] <= w[1] + 1e-12);
        }
    }

    #[test]
    fn eigen_rejects_nonfinite() {
        let m = Mat::from_rows(&[&[f64::NAN, 0.0], &[0.0, 1.0]]);
        assert!(SymMatrix::new(m).is_err());
    }

    #[test]
    fn pinv_diagonal() {
        let m = SymMatrix::from_rows(&[&[2.0, 0.0], &[0.0, 0.0]]).unwrap();
        let p = pseudo_inverse(&m, DEFAULT_RANK_TOL).unwrap();
        assert_close(p.as_mat()[(0, 0)], 0.5, 1e-14);
        assert_close(p.as_mat()[(1, 1)], 0.0, 1e-14);
    }

    #[test]
    fn pinv_rank_one_laplacian() {
        // Hand-checked Penrose pair: pinv([[1,-1],[-1,1]]) = 0.25*[[1,-1],[-1,1]].
        let m = SymMatrix::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]]).unwrap();
        let p = pseudo_inverse(&m, DEFAULT_RANK_TOL).unwrap();
        for (i, j, want) in [(0, 0, 0.25), (0, 1, -0.25), (1, 0, -0.25), (1, 1, 0.25)] {
            assert_close(p.as_mat()[(i, j)], want, 1e-12);
        }
        // Penrose identities.
        let mm = m.as_mat();
        let pm = p.as_mat();
        let mpm = mm.matmul(pm).matmul(mm);
        assert!(mpm.sub(mm).frobenius() <= 1e-8 * mm.frobenius());
        let pmp = pm.matmul(mm).matmul(pm);
        assert!(pmp.sub(pm).frobenius() <= 1e-8 * pm.frobenius());
    }

    #[test]
    fn pinv_zero_matrix() {
        let m = SymMatrix::zeros(3);
        let p = pseudo_inverse(&m, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(p.as_mat().frobenius(), 0.0);
    }

    #[test]
    fn pinv_involution_on_psd() {
        let m = SymMatrix::from_rows(&[&[2.0, -1.0, 0.0], &[-1.0, 2.0, -1.0], &[0.0, -1.0, 2.0]])
            .unwrap();
        let p = pseudo_inverse(&m, DEFAULT_RANK_TOL).unwrap();
        let pp = pseudo_inverse(&p, DEFAULT_RANK_TOL).unwrap();
        assert!(pp.as_mat().sub(m.as_mat()).frobenius() <= 1e-8 * m.as_mat().frobenius());
    }

    #[test]
    fn pinv_rejects_indefinite() {
        let m = SymMatrix::from_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap();
        assert!(matches!(
            pseudo_inverse(&m, DEFAULT_RANK_TOL),
            Err(NumericsError::NotPsd(_))
        ));
    }

    #[test]
    fn expm_zero_scale_is_identity() {
        let m = SymMatrix::from_rows(&[&[1.3, 0.2], &[0.2, -0.7]]).unwrap();
        let e = sym_expm(&m, 0.0).unwrap();
        assert!(e.as_mat().sub(&Mat::identity(2)).frobenius() < 1e-13);
    }

    #[test]
    fn expm_diagonal() {
        let m = SymMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 2.0]]).unwrap();
        let e = sym_expm(&m, 2.0_f64.ln()).unwrap();
        assert_close(e.as_mat()[(0, 0)], 2.0, 1e-12);
        assert_close(e.as_mat()[(1, 1)], 4.0, 1e-12);
    }

    #[test]
    fn expm_two_node_laplacian_closed_form() {
        // exp(-t L) for L = [[1,-1],[-1,1]] has entries (1 +- e^{-2t})/2.
        let m = SymMatrix::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]]).unwrap();
        for t in [0.3, 1.7] {
            let e = sym_expm(&m, -t).unwrap();
            let d = 0.5 * (1.0 + (-2.0 * t).exp());
            let o = 0.5 * (1.0 - (-2.0 * t).exp());
            assert_close(e.as_mat()[(0, 0)], d, 1e-12);
            assert_close(e.as_mat()[(0, 1)], o, 1e-12);
        }
    }

    #[test]
    fn expm_overflow() {
        let m = SymMatrix::from_rows(&[&[1000.0]]).unwrap();
        assert!(matches!(sym_expm(&m, 1.0), Err(NumericsError::Overflow(_))));
    }
}
