//! Cox-process count moments on a block partition and their inversion into
//! multivariate Poisson log-normal parameters.
//!
//! For block counts `T_m^ℓ` the first and second moments are
//!
//! ```text
//! α_m^ℓ      = ∫_{B_m} λ^ℓ(u) du
//! β_mm'^ℓℓ'  = 1(m = m', ℓ = ℓ') α_m^ℓ
//!            + ∫_{B_m} ∫_{B_m'} λ^ℓ(u) λ^ℓ'(v) {g^ℓℓ'(u, v) − 1} du dv
//! ```
//!
//! with `λ^ℓ(s) = exp(X(s)β_ℓ + σ_ℓ²/2)` and `g^ℓℓ' = exp(C_ℓℓ')`. Both
//! integrals are evaluated by quadrature on each block's representative
//! points. Counts are indexed component-major: `ℓ·M + m`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::covariance::{cholesky, LowerFactor};
use crate::domain::BlockPartition;
use crate::error::{Error, Result};
use crate::model::{design_matrix, design_row, Covariate, FieldParams, Params};

/// Mean vector `α` and covariance matrix `β` of the block counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CoxMoments {
    pub alpha: DVector<f64>,
    pub beta: DMatrix<f64>,
}

/// Mean `μ` and covariance `Σ` of the log intensities of a multivariate
/// Poisson log-normal, together with a (possibly jittered) factor of `Σ`.
#[derive(Debug, Clone)]
pub struct MplnParams {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub sigma_chol: LowerFactor,
}

impl MplnParams {
    /// Validates the diagonal and factors `Σ`.
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let n = mu.len();
        if sigma.nrows() != n || sigma.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: sigma.nrows() });
        }
        let sigma_chol = cholesky(&sigma)?;
        Ok(Self { mu, sigma, sigma_chol })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// `exp(X(s)β_ℓ + σ_ℓ²/2)`, the intensity averaged over the latent field.
pub fn expected_intensity(covariates: &[Covariate], params: &Params, l: usize, s: [f64; 2]) -> Result<f64> {
    let row = design_row(covariates, s)?;
    let eta: f64 = row.iter().zip(params.beta_for(l)).map(|(x, b)| x * b).sum();
    Ok((eta + params.field.marginal_variance(l) / 2.0).exp())
}

fn n_components_of(field: &FieldParams) -> usize {
    match field {
        FieldParams::Exponential(_) => 1,
        FieldParams::Lmc(lmc) => lmc.n_components,
    }
}

/// Reusable moment calculator: holds the design matrix at the representative
/// points so each parameter value only costs the quadrature itself.
#[derive(Debug, Clone)]
pub struct CoxMomentCalculator {
    partition: BlockPartition,
    design: Vec<f64>,
    n_coef: usize,
}

impl CoxMomentCalculator {
    pub fn new(partition: &BlockPartition, covariates: &[Covariate]) -> Result<Self> {
        let design = design_matrix(covariates, &partition.fine_points)?;
        Ok(Self { partition: partition.clone(), design, n_coef: covariates.len() + 1 })
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    /// Linear predictor `X(u_k)β` at every representative point.
    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        self.design.chunks_exact(self.n_coef).map(|row| row.iter().zip(beta).map(|(x, b)| x * b).sum()).collect()
    }

    /// `λ_ℓ(u_k) Δ_k` for every component, component-major.
    fn weights(&self, params: &Params, n_comp: usize) -> Vec<Vec<f64>> {
        (0..n_comp)
            .map(|l| {
                let half_var = params.field.marginal_variance(l) / 2.0;
                self.linear_predictor(params.beta_for(l))
                    .into_iter()
                    .zip(&self.partition.fine_areas)
                    .map(|(eta, area)| (eta + half_var).exp() * area)
                    .collect()
            })
            .collect()
    }

    /// `g_ℓℓ' − 1` tabulated by lattice offset `(|di|, |dj|)`.
    fn excess_correlation_table(&self, field: &FieldParams, l: usize, lp: usize) -> Vec<f64> {
        let (nx, ny) = self.partition.lattice_dims;
        let (hx, hy) = self.partition.spacing;
        let mut table = Vec::with_capacity(nx * ny);
        for dj in 0..ny {
            for di in 0..nx {
                let d = (di as f64 * hx).hypot(dj as f64 * hy);
                table.push(field.cross_covariance_at(l, lp, d).exp_m1());
            }
        }
        table
    }

    /// Quadrature moments for `params`.
    pub fn compute(&self, params: &Params) -> CoxMoments {
        let n_comp = n_components_of(&params.field);
        let part = &self.partition;
        let m = part.n_blocks();
        let n = m * n_comp;
        let nx = part.lattice_dims.0;
        let weights = self.weights(params, n_comp);

        let mut alpha = DVector::zeros(n);
        for l in 0..n_comp {
            for (b, block) in part.blocks.iter().enumerate() {
                alpha[l * m + b] = block.points.clone().map(|k| weights[l][k]).sum();
            }
        }

        // Tables for every unordered component pair.
        let mut tables = vec![Vec::new(); n_comp * n_comp];
        for l in 0..n_comp {
            for lp in l..n_comp {
                tables[l * n_comp + lp] = self.excess_correlation_table(&params.field, l, lp);
            }
        }

        let lattice: Vec<(i64, i64)> = part.lattice.iter().map(|&(i, j)| (i as i64, j as i64)).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|a| {
                let (la, ma) = (a / m, a % m);
                let ra = part.blocks[ma].points.clone();
                (a..n)
                    .map(|b| {
                        let (lb, mb) = (b / m, b % m);
                        let rb = part.blocks[mb].points.clone();
                        let table = &tables[la * n_comp + lb];
                        let wa = &weights[la];
                        let wb = &weights[lb];
                        let mut acc = 0.0;
                        for k in ra.clone() {
                            let (ik, jk) = lattice[k];
                            let mut inner = 0.0;
                            for kp in rb.clone() {
                                let (ip, jp) = lattice[kp];
                                let idx = (ik - ip).unsigned_abs() as usize + nx * (jk - jp).unsigned_abs() as usize;
                                inner += wb[kp] * table[idx];
                            }
                            acc += wa[k] * inner;
                        }
                        if a == b {
                            acc += alpha[a];
                        }
                        acc
                    })
                    .collect()
            })
            .collect();

        let mut beta = DMatrix::zeros(n, n);
        for (a, row) in rows.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                beta[(a, a + off)] = v;
                beta[(a + off, a)] = v;
            }
        }
        CoxMoments { alpha, beta }
    }
}

/// One-shot moment computation on `partition`.
pub fn compute_cox_moments(
    covariates: &[Covariate],
    params: &Params,
    partition: &BlockPartition,
) -> Result<CoxMoments> {
    Ok(CoxMomentCalculator::new(partition, covariates)?.compute(params))
}

/// Inverts count moments into Poisson log-normal parameters.
///
/// Fails with [`Error::MomentMismatch`] when a block is not overdispersed
/// (`β_mm ≤ α_m`) or an off-diagonal log argument is non-positive, and with
/// [`Error::NotPositiveDefinite`] when the induced `Σ` cannot be factored.
pub fn moments_to_mpln(m: &CoxMoments) -> Result<MplnParams> {
    let n = m.alpha.len();
    if let Some(i) = m.alpha.iter().position(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::MomentMismatch { index: i, argument: m.alpha[i] });
    }
    let mut sigma = DMatrix::zeros(n, n);
    for i in 0..n {
        let a = m.alpha[i];
        let excess = m.beta[(i, i)] / (a * a) - 1.0 / a;
        if !(excess > 0.0 && excess.is_finite()) {
            return Err(Error::MomentMismatch { index: i, argument: 1.0 + excess });
        }
        sigma[(i, i)] = excess.ln_1p();
        for j in 0..i {
            let r = m.beta[(i, j)] / (a * m.alpha[j]);
            if !(r > -1.0 && r.is_finite()) {
                return Err(Error::MomentMismatch { index: i * n + j, argument: 1.0 + r });
            }
            let s = r.ln_1p();
            sigma[(i, j)] = s;
            sigma[(j, i)] = s;
        }
    }
    let mu = DVector::from_fn(n, |i, _| m.alpha[i].ln() - sigma[(i, i)] / 2.0);
    MplnParams::new(mu, sigma)
}

/// Forward map from Poisson log-normal parameters to count moments.
pub fn mpln_to_moments(p: &MplnParams) -> CoxMoments {
    mpln_moments(&p.mu, &p.sigma)
}

/// Forward map on raw `(μ, Σ)`; accepts a zero `Σ` (the pure Poisson limit).
pub fn mpln_moments(mu: &DVector<f64>, sigma: &DMatrix<f64>) -> CoxMoments {
    let n = mu.len();
    let alpha = DVector::from_fn(n, |i, _| (mu[i] + sigma[(i, i)] / 2.0).exp());
    let beta = DMatrix::from_fn(n, n, |i, j| {
        let cross = alpha[i] * alpha[j] * sigma[(i, j)].exp_m1();
        if i == j {
            alpha[i] + cross
        } else {
            cross
        }
    });
    CoxMoments { alpha, beta }
}
