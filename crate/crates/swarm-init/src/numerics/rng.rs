//! Seeded sampling support: multivariate normal draws over reproducible
//! counter-split ChaCha streams.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use super::mat::Mat;
use super::sym::{sym_eigen, SymMatrix};
use super::NumericsError;

/// Deterministic stream handle: a master seed plus a stream counter.
/// Streams with distinct counters are statistically independent, so work
/// items can be sampled in parallel without sharing state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamSeed {
    pub master: u64,
    pub stream: u64,
}

impl StreamSeed {
    pub fn new(master: u64, stream: u64) -> Self {
        Self { master, stream }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }
}

/// Square-root factor `Q sqrt(Lambda)` of a PSD covariance, reusable across
/// draws.
#[derive(Debug, Clone)]
pub struct CovFactor {
    factor: Mat,
}

impl CovFactor {
    pub fn new(cov: &SymMatrix) -> Result<Self, NumericsError> {
        let eig = sym_eigen(cov)?;
        let lam_max = eig.values.iter().fold(0.0_f64, |a, &v| a.max(v));
        let cut = 1e-12 * lam_max.max(f64::MIN_POSITIVE);
        for &l in &eig.values {
            if l < -cut {
                return Err(NumericsError::NotPsd(l));
            }
        }
        let n = cov.dim();
        let mut factor = eig.q.clone();
        for j in 0..n {
            let s = eig.values[j].max(0.0).sqrt();
            for i in 0..n {
                factor[(i, j)] *= s;
            }
        }
        Ok(Self { factor })
    }

    pub fn sample(&self, mean: &[f64], rng: &mut impl Rng) -> Vec<f64> {
        let n = self.factor.rows();
        assert_eq!(mean.len(), n);
        let z: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut out = self.factor.matvec(&z);
        for (o, m) in out.iter_mut().zip(mean.iter()) {
            *o += m;
        }
        out
    }
}

/// One multivariate normal draw, deterministic in the seed.
pub fn mvn_sample(
    mean: &[f64],
    cov: &SymMatrix,
    seed: StreamSeed,
) -> Result<Vec<f64>, NumericsError> {
    let factor = CovFactor::new(cov)?;
    let mut rng = seed.rng();
    Ok(factor.sample(mean, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_covariance_returns_mean() {
        let mean = [1.5, -2.0];
        let cov = SymMatrix::zeros(2);
        for s in 0..5 {
            let x = mvn_sample(&mean, &cov, StreamSeed::new(7, s)).unwrap();
            assert_eq!(x, mean.to_vec());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cov = SymMatrix::identity(3);
        let a = mvn_sample(&[0.0; 3], &cov, StreamSeed::new(42, 9)).unwrap();
        let b = mvn_sample(&[0.0; 3], &cov, StreamSeed::new(42, 9)).unwrap();
        assert_eq!(a, b);
        let c = mvn_sample(&[0.0; 3], &cov, StreamSeed::new(42, 10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_mean_within_clt_bound() {
        let cov = SymMatrix::identity(2);
        let factor = CovFactor::new(&cov).unwrap();
        let n = 100_000;
        let mut sums = [0.0_f64; 2];
        let mut rng = StreamSeed::new(1, 0).rng();
        for _ in 0..n {
            let x = factor.sample(&[0.0, 0.0], &mut rng);
            sums[0] += x[0];
            sums[1] += x[1];
        }
        let bound = 4.0 / (n as f64).sqrt();
        assert!(sums[0].abs() / n as f64 <= bound);
        assert!(sums[1].abs() / n as f64 <= bound);
    }

    #[test]
    fn sample_variance_within_five_percent() {
        let cov = SymMatrix::from_rows(&[&[4.0, 0.0], &[0.0, 1.0]]).unwrap();
        let factor = CovFactor::new(&cov).unwrap();
        let n = 100_000;
        let mut sq = [0.0_f64; 2];
        let mut rng = StreamSeed::new(3, 0).rng();
        for _ in 0..n {
            let x = factor.sample(&[0.0, 0.0], &mut rng);
            sq[0] += x[0] * x[0];
            sq[1] += x[1] * x[1];
        }
        assert!((sq[0] / n as f64 - 4.0).abs() <= 0.05 * 4.0);
        assert!((sq[1] / n as f64 - 1.0).abs() <= 0.05);
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let cov = SymMatrix::from_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap();
        assert!(mvn_sample(&[0.0, 0.0], &cov, StreamSeed::new(0, 0)).is_err());
    }

    #[test]
    fn empirical_covariance_converges() {
        let cov = SymMatrix::from_rows(&[&[2.0, 0.7, 0.0], &[0.7, 1.0, -0.3], &[0.0, -0.3, 0.5]])
            .unwrap();
        let factor = CovFactor::new(&cov).unwrap();
        let n = 100_000;
        let mut acc = Mat::zeros(3, 3);
        let mut rng = StreamSeed::new(11, 0).rng();
        for _ in 0..n {
            let x = factor.sample(&[0.0; 3], &mut rng);
            for i in 0..3 {
                for j in 0..3 {
                    acc[(i, j)] += x[i] * x[j];
                }
            }
        }
        let emp = acc.scale(1.0 / n as f64);
        let diff = emp.sub(cov.as_mat()).frobenius();
        assert!(diff <= 0.05 * cov.as_mat().frobenius(), "diff {diff}");
    }
}
