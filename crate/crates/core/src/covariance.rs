//! Exponential covariance kernels, the linear model of coregionalization and
//! Gaussian field sampling.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Isotropic exponential covariance `σ² exp(−φ‖u − v‖)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialKernel {
    pub sigma2: f64,
    pub phi: f64,
}

impl ExponentialKernel {
    pub fn new(sigma2: f64, phi: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite() && phi > 0.0 && phi.is_finite()) {
            return Err(Error::Config(format!("kernel needs sigma2 > 0 and phi > 0, got ({sigma2}, {phi})")));
        }
        Ok(Self { sigma2, phi })
    }

    /// Kernel without validation; `sigma2 = 0` gives the degenerate (Poisson) case.
    pub fn unchecked(sigma2: f64, phi: f64) -> Self {
        Self { sigma2, phi }
    }

    #[inline]
    pub fn at_distance(&self, d: f64) -> f64 {
        self.sigma2 * (-self.phi * d).exp()
    }

    #[inline]
    pub fn eval(&self, u: [f64; 2], v: [f64; 2]) -> f64 {
        self.at_distance(distance(u, v))
    }
}

#[inline]
pub fn distance(u: [f64; 2], v: [f64; 2]) -> f64 {
    (u[0] - v[0]).hypot(u[1] - v[1])
}

/// Linear model of coregionalization: `z_ℓ(s) = Σ_h γ_ℓh ν_h(s)` with
/// independent unit-variance exponential fields `ν_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmcSpec {
    /// `L × H` loadings, row-major.
    pub gamma: Vec<f64>,
    pub n_components: usize,
    pub n_factors: usize,
    /// Decay of each factor's correlation.
    pub phis: Vec<f64>,
}

impl LmcSpec {
    pub fn new(gamma: Vec<f64>, n_components: usize, n_factors: usize, phis: Vec<f64>) -> Result<Self> {
        if n_factors == 0 || n_factors > n_components {
            return Err(Error::Config(format!("need 1 <= H <= L, got H={n_factors}, L={n_components}")));
        }
        if gamma.len() != n_components * n_factors {
            return Err(Error::DimensionMismatch { expected: n_components * n_factors, got: gamma.len() });
        }
        if phis.len() != n_factors {
            return Err(Error::DimensionMismatch { expected: n_factors, got: phis.len() });
        }
        for l in 0..n_components {
            for h in 0..n_factors {
                let g = gamma[l * n_factors + h];
                if h > l && g != 0.0 {
                    return Err(Error::Config("loading matrix must be lower triangular".into()));
                }
                if h == l && g <= 0.0 {
                    return Err(Error::Config("loading diagonal must be positive".into()));
                }
            }
        }
        if phis.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::Config("factor decays must be positive".into()));
        }
        Ok(Self { gamma, n_components, n_factors, phis })
    }

    #[inline]
    pub fn loading(&self, l: usize, h: usize) -> f64 {
        self.gamma[l * self.n_factors + h]
    }

    /// Marginal variance `Σ_h γ_ℓh²` of component `ℓ`.
    pub fn marginal_variance(&self, l: usize) -> f64 {
        (0..self.n_factors).map(|h| self.loading(l, h).powi(2)).sum()
    }

    /// Cross covariance `C_ℓℓ'(u, v) = Σ_h ρ_h(u, v) γ_ℓh γ_ℓ'h`.
    pub fn cross_covariance(&self, l: usize, lp: usize, u: [f64; 2], v: [f64; 2]) -> f64 {
        let d = distance(u, v);
        (0..self.n_factors).map(|h| (-self.phis[h] * d).exp() * self.loading(l, h) * self.loading(lp, h)).sum()
    }
}

/// Covariance matrix of `kernel` over `pts`.
pub fn cov_matrix(kernel: &ExponentialKernel, pts: &[[f64; 2]]) -> DMatrix<f64> {
    let n = pts.len();
    let mut c = DMatrix::zeros(n, n);
    for j in 0..n {
        c[(j, j)] = kernel.sigma2;
        for i in j + 1..n {
            let v = kernel.eval(pts[i], pts[j]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Lower Cholesky factor together with the diagonal jitter that was needed.
#[derive(Debug, Clone)]
pub struct LowerFactor {
    pub l: DMatrix<f64>,
    pub jitter: f64,
}

impl LowerFactor {
    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `log det(L L')`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `L v`.
    pub fn mul(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.l * v
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        self.l.solve_lower_triangular(b).expect("factor has a positive diagonal")
    }

    /// Solves `L' x = b`.
    pub fn solve_upper_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        self.l.tr_solve_lower_triangular(b).expect("factor has a positive diagonal")
    }

    /// Solves `(L L') x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.solve_upper_transpose(&self.solve_lower(b))
    }
}

/// Jitter ladder: none first, then `1e-10 … 1e-4` times the mean diagonal.
pub const JITTER_LADDER: [f64; 8] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Cholesky factorization with an escalating diagonal jitter.
pub fn cholesky(matrix: &DMatrix<f64>) -> Result<LowerFactor> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::DimensionMismatch { expected: n, got: matrix.ncols() });
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    let scale = if n == 0 { 0.0 } else { matrix.trace() / n as f64 };
    for &rel in &JITTER_LADDER {
        let jitter = rel * scale;
        if rel > 0.0 && !(jitter > 0.0) {
            break;
        }
        let mut m = matrix.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = m.cholesky() {
            let l = ch.unpack();
            if l.diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
                return Ok(LowerFactor { l, jitter });
            }
        }
    }
    Err(Error::NotPositiveDefinite)
}

/// Pair correlation `exp(C(u, v))` of the log Gaussian Cox process.
pub fn pair_correlation(kernel: &ExponentialKernel, u: [f64; 2], v: [f64; 2]) -> f64 {
    kernel.eval(u, v).exp()
}

/// Cross pair correlation `exp(Σ_h ρ_h(u, v) γ_ℓh γ_ℓ'h)` between components.
pub fn cross_pair_correlation(lmc: &LmcSpec, l: usize, lp: usize, u: [f64; 2], v: [f64; 2]) -> f64 {
    lmc.cross_covariance(l, lp, u, v).exp()
}

/// Gaussian field `z = L ν`.
pub fn sample_gp(chol: &LowerFactor, standard_normals: &[f64]) -> Result<DVector<f64>> {
    if standard_normals.len() != chol.dim() {
        return Err(Error::DimensionMismatch { expected: chol.dim(), got: standard_normals.len() });
    }
    Ok(chol.mul(&DVector::from_column_slice(standard_normals)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn paper_lmc() -> LmcSpec {
        LmcSpec::new(vec![2.0, 0.0, 0.0, -1.0, 1.0, 0.0, 1.0, 0.0, 1.0], 3, 3, vec![3.0, 5.0, 5.0]).unwrap()
    }

    #[test]
    fn cov_matrix_examples() {
        let k = ExponentialKernel::new(2.0, 1.0).unwrap();
        let c = cov_matrix(&k, &[[0.3, 0.3]]);
        assert_eq!(c[(0, 0)], 2.0);
        let k = ExponentialKernel::new(1.0, 1.0).unwrap();
        let c = cov_matrix(&k, &[[0.0, 0.0], [1.0, 0.0]]);
        assert!((c[(0, 1)] - 0.367879).abs() < 1e-6);
        assert_eq!(c[(0, 1)], c[(1, 0)]);
        let k = ExponentialKernel::new(1.0, 40.0).unwrap();
        let c = cov_matrix(&k, &[[0.0, 0.0], [1.0, 0.0]]);
        assert!(c[(0, 1)] < 1e-12);
    }

    #[test]
    fn cholesky_examples() {
        let i = DMatrix::<f64>::identity(3, 3);
        let f = cholesky(&i).unwrap();
        assert_eq!(f.l, i);
        assert_eq!(f.jitter, 0.0);
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]);
        let f = cholesky(&m).unwrap();
        assert_eq!(f.l, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
    }

    #[test]
    fn rank_one_needs_jitter() {
        let m = DMatrix::from_element(2, 2, 1.0);
        let f = cholesky(&m).unwrap();
        assert!(f.jitter > 0.0);
        let rec = &f.l * f.l.transpose();
        assert!((rec - &m).amax() <= 2.0 * f.jitter);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cholesky(&m), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn reconstruction_is_accurate() {
        let pts: Vec<[f64; 2]> = (0..30).map(|i| [(i % 6) as f64 / 6.0, (i / 6) as f64 / 5.0]).collect();
        let c = cov_matrix(&ExponentialKernel::new(1.3, 2.0).unwrap(), &pts);
        let f = cholesky(&c).unwrap();
        let rec = &f.l * f.l.transpose();
        assert!((rec - &c).norm() / c.norm() < 1e-8);
    }

    #[test]
    fn pair_correlation_examples() {
        let k = ExponentialKernel::unchecked(1.0, 1.0);
        assert!((pair_correlation(&k, [0.2, 0.2], [0.2, 0.2]) - std::f64::consts::E).abs() < 1e-12);
        assert!((pair_correlation(&k, [0.0, 0.0], [1e3, 0.0]) - 1.0).abs() < 1e-12);
        let zero = ExponentialKernel::unchecked(0.0, 1.0);
        assert_eq!(pair_correlation(&zero, [0.0, 0.0], [0.1, 0.0]), 1.0);
    }

    #[test]
    fn cross_pair_correlation_examples() {
        let lmc = paper_lmc();
        let u = [0.4, 0.4];
        assert!((cross_pair_correlation(&lmc, 0, 1, u, u) - 0.135335).abs() < 1e-6);
        assert!((cross_pair_correlation(&lmc, 0, 0, u, u) - 54.598150).abs() < 1e-5);
        assert!((cross_pair_correlation(&lmc, 0, 1, u, [1e3, 0.0]) - 1.0).abs() < 1e-12);
        let v = [0.1, 0.9];
        assert_eq!(cross_pair_correlation(&lmc, 0, 2, u, v), cross_pair_correlation(&lmc, 2, 0, v, u));
    }

    #[test]
    fn lmc_reduces_to_univariate() {
        let k = ExponentialKernel::new(1.7, 2.5).unwrap();
        let lmc = LmcSpec::new(vec![k.sigma2.sqrt()], 1, 1, vec![k.phi]).unwrap();
        let (u, v) = ([0.1, 0.2], [0.5, 0.7]);
        let a = cross_pair_correlation(&lmc, 0, 0, u, v);
        let b = pair_correlation(&k, u, v);
        assert!((a - b).abs() <= 1e-14 * b);
    }

    #[test]
    fn lmc_marginal_variance_matches_covariance() {
        let lmc = paper_lmc();
        let u = [0.3, 0.8];
        for l in 0..3 {
            assert!((lmc.marginal_variance(l) - lmc.cross_covariance(l, l, u, u)).abs() < 1e-14);
        }
        assert_eq!(lmc.marginal_variance(0), 4.0);
        assert_eq!(lmc.marginal_variance(1), 2.0);
    }

    #[test]
    fn lmc_validation() {
        assert!(LmcSpec::new(vec![1.0, 0.5, 0.0, 1.0], 2, 2, vec![1.0, 1.0]).is_err());
        assert!(LmcSpec::new(vec![-1.0, 0.0, 0.0, 1.0], 2, 2, vec![1.0, 1.0]).is_err());
        assert!(LmcSpec::new(vec![1.0, 0.0, 0.3, 1.0], 2, 2, vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn sample_gp_examples() {
        let f = cholesky(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(sample_gp(&f, &[0.0; 3]).unwrap().as_slice(), &[0.0; 3]);
        assert_eq!(sample_gp(&f, &[1.0, -2.0, 0.5]).unwrap().as_slice(), &[1.0, -2.0, 0.5]);
        assert!(matches!(sample_gp(&f, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sample_gp_empirical_covariance() {
        let l = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.5, 0.8, 0.0, -0.3, 0.2, 0.6]);
        let f = LowerFactor { l: l.clone(), jitter: 0.0 };
        let target = &l * l.transpose();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut acc = DMatrix::<f64>::zeros(3, 3);
        for _ in 0..n {
            let nu: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
            let z = sample_gp(&f, &nu).unwrap();
            acc += &z * z.transpose();
        }
        acc /= n as f64;
        assert!((acc - target).amax() < 0.02);
    }

    #[test]
    fn random_point_sets_are_psd() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(2..40);
            let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
            let k = ExponentialKernel::new(rng.random_range(0.1..3.0), rng.random_range(0.05..20.0)).unwrap();
            assert!(cholesky(&cov_matrix(&k, &pts)).is_ok());
        }
    }
}
