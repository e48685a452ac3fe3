//! Stage 2: the latent field given `θ`.
//!
//! The field on the fine grid is written `z_ℓ = Σ_h γ_ℓh L_h ν_h` with
//! `ν ~ N(0, I)` and `L_h` the Cholesky factor of factor `h`'s correlation
//! matrix (univariate: `z = σ L ν`). Conditional draws use elliptical slice
//! sampling on `ν`; draws for a thinned set of retained `θ` values are pooled
//! into the mixture approximation of the marginal posterior of `z`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{cholesky, cov_matrix, ExponentialKernel};
use crate::diagnostics::quantile;
use crate::domain::{BlockPartition, PointPattern};
use crate::error::{Error, Result};
use crate::model::{design_matrix, Covariate, FieldParams, ModelLayout, Params, ThetaVector};

/// Event counts, cell areas and covariates on the fine grid.
#[derive(Debug, Clone)]
pub struct GridModel {
    pub points: Vec<[f64; 2]>,
    pub areas: Vec<f64>,
    /// `K × P` design matrix, intercept first.
    pub design: DMatrix<f64>,
    /// Per-cell counts, component-major (`ℓ·K + k`).
    pub counts: Vec<f64>,
    pub n_components: usize,
}

impl GridModel {
    pub fn new(grid: &BlockPartition, covariates: &[Covariate], pattern: &PointPattern) -> Result<Self> {
        let k = grid.n_fine();
        let p = covariates.len() + 1;
        let design = DMatrix::from_row_slice(k, p, &design_matrix(covariates, &grid.fine_points)?);
        Ok(Self {
            points: grid.fine_points.clone(),
            areas: grid.fine_areas.clone(),
            design,
            counts: grid.fine_counts(pattern),
            n_components: pattern.n_components,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.points.len()
    }

    /// `X β_ℓ` for every component, component-major.
    pub fn linear_predictor(&self, params: &Params) -> Vec<f64> {
        let mut eta = Vec::with_capacity(self.n_cells() * self.n_components);
        for l in 0..self.n_components {
            let beta = DVector::from_column_slice(params.beta_for(l));
            eta.extend((&self.design * beta).iter());
        }
        eta
    }

    /// `Σ [n (η + z) − exp(η + z) Δ]`; the constant `|D|` is dropped.
    pub fn loglik(&self, eta: &[f64], z: &[f64]) -> f64 {
        let k = self.n_cells();
        let mut acc = 0.0;
        for (i, ((e, zi), n)) in eta.iter().zip(z).zip(&self.counts).enumerate() {
            let s = e + zi;
            acc += n * s - s.exp() * self.areas[i % k];
        }
        acc
    }

    /// Expected counts `exp(η + z) Δ`.
    pub fn expected(&self, eta: &[f64], z: &[f64]) -> Vec<f64> {
        let k = self.n_cells();
        eta.iter().zip(z).enumerate().map(|(i, (e, zi))| (e + zi).exp() * self.areas[i % k]).collect()
    }
}

/// Log likelihood of the gridded pattern at `(β, z)`.
pub fn grid_loglik(model: &GridModel, params: &Params, z: &[f64]) -> Result<f64> {
    let n = model.n_cells() * model.n_components;
    if z.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: z.len() });
    }
    Ok(model.loglik(&model.linear_predictor(params), z))
}

/// Linear map `ν ↦ z` for given field parameters on the fine grid.
#[derive(Debug, Clone)]
pub struct FieldFactor {
    /// Cholesky factor of each factor's unit-variance correlation matrix.
    pub chols: Vec<DMatrix<f64>>,
    /// `L × H` loadings; `σ` in the univariate case.
    pub loadings: DMatrix<f64>,
    pub n_cells: usize,
}

impl FieldFactor {
    pub fn new(field: &FieldParams, points: &[[f64; 2]], n_components: usize) -> Result<Self> {
        let h = field.n_factors();
        let chols = (0..h)
            .map(|j| Ok(cholesky(&cov_matrix(&ExponentialKernel::unchecked(1.0, field.factor_phi(j)), points))?.l))
            .collect::<Result<Vec<_>>>()?;
        let loadings = DMatrix::from_fn(n_components, h, |l, j| field.loading(l, j));
        Ok(Self { chols, loadings, n_cells: points.len() })
    }

    pub fn n_factors(&self) -> usize {
        self.chols.len()
    }

    pub fn n_components(&self) -> usize {
        self.loadings.nrows()
    }

    /// Length of `ν`.
    pub fn latent_dim(&self) -> usize {
        self.n_cells * self.n_factors()
    }

    /// Length of `z`.
    pub fn field_dim(&self) -> usize {
        self.n_cells * self.n_components()
    }

    /// `z = Γ ⊗ L ν`.
    pub fn apply(&self, nu: &DVector<f64>) -> DVector<f64> {
        let k = self.n_cells;
        let mut z = DVector::zeros(self.field_dim());
        for (h, l) in self.chols.iter().enumerate() {
            let u = l * nu.rows(h * k, k);
            for c in 0..self.n_components() {
                let g = self.loadings[(c, h)];
                if g != 0.0 {
                    z.rows_mut(c * k, k).axpy(g, &u, 1.0);
                }
            }
        }
        z
    }

    /// Adjoint of [`FieldFactor::apply`].
    pub fn apply_transpose(&self, r: &DVector<f64>) -> DVector<f64> {
        let k = self.n_cells;
        let mut out = DVector::zeros(self.latent_dim());
        for (h, l) in self.chols.iter().enumerate() {
            let mut acc = DVector::zeros(k);
            for c in 0..self.n_components() {
                let g = self.loadings[(c, h)];
                if g != 0.0 {
                    acc.axpy(g, &r.rows(c * k, k), 1.0);
                }
            }
            out.rows_mut(h * k, k).copy_from(&l.tr_mul(&acc));
        }
        out
    }
}

/// Current point of an elliptical slice chain: `ν`, its image `z` under the
/// (linear) prior map and the log likelihood there.
#[derive(Debug, Clone)]
pub struct EssState {
    pub nu: DVector<f64>,
    pub z: DVector<f64>,
    pub loglik: f64,
}

/// `ν cos ω + η sin ω`.
pub fn ellipse_point(nu: &DVector<f64>, eta: &DVector<f64>, omega: f64) -> DVector<f64> {
    nu * omega.cos() + eta * omega.sin()
}

/// Slice-shrinkage loop for a given auxiliary draw `η` (with image `z_eta`),
/// slice level `log_y` and first angle `omega`.
pub fn elliptical_slice_from<F>(
    state: &EssState,
    eta: &DVector<f64>,
    z_eta: &DVector<f64>,
    log_y: f64,
    mut omega: f64,
    loglik: &F,
    rng: &mut dyn RngCore,
) -> EssState
where
    F: Fn(&DVector<f64>) -> f64 + ?Sized,
{
    let two_pi = 2.0 * std::f64::consts::PI;
    let (mut lo, mut hi) = (omega - two_pi, omega);
    loop {
        let z = ellipse_point(&state.z, z_eta, omega);
        let ll = loglik(&z);
        if ll > log_y {
            return EssState { nu: ellipse_point(&state.nu, eta, omega), z, loglik: ll };
        }
        if omega < 0.0 {
            lo = omega;
        } else {
            hi = omega;
        }
        if hi - lo < 1e-12 {
            return state.clone();
        }
        omega = rng.random_range(lo..hi);
    }
}

/// One elliptical slice step. `map` is the linear prior map `ν ↦ z` and
/// `loglik` is evaluated on `z`. Leaves `N(ν | 0, I) exp(loglik)` invariant.
pub fn elliptical_slice_step<M, F>(state: &EssState, map: &M, loglik: &F, rng: &mut dyn RngCore) -> EssState
where
    M: Fn(&DVector<f64>) -> DVector<f64> + ?Sized,
    F: Fn(&DVector<f64>) -> f64 + ?Sized,
{
    let eta = DVector::from_fn(state.nu.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let z_eta = map(&eta);
    let u: f64 = rng.random();
    let log_y = state.loglik + u.ln();
    let omega = rng.random_range(0.0..2.0 * std::f64::consts::PI);
    elliptical_slice_from(state, &eta, &z_eta, log_y, omega, loglik, rng)
}

/// Chain lengths for conditional latent sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage2Config {
    /// Use every `every`-th retained `θ`.
    pub every: usize,
    pub n_samples: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self { every: 10, n_samples: 200, burn_in: 200, thin: 1, seed: 1 }
    }
}

/// Latent draws for one retained `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDraws {
    pub theta_index: usize,
    /// Each draw has length `K·L`, component-major.
    pub z_samples: Vec<Vec<f64>>,
    pub thin: usize,
    pub n_samples: usize,
}

/// Elliptical slice chain on `ν ~ N(0, I)` with an arbitrary likelihood of `z`.
pub fn sample_latent_with<F>(
    factor: &FieldFactor,
    loglik: &F,
    config: &Stage2Config,
    rng: &mut dyn RngCore,
) -> Vec<Vec<f64>>
where
    F: Fn(&DVector<f64>) -> f64 + ?Sized,
{
    let map = |v: &DVector<f64>| factor.apply(v);
    let nu = DVector::zeros(factor.latent_dim());
    let z = factor.apply(&nu);
    let mut state = EssState { loglik: loglik(&z), nu, z };
    let thin = config.thin.max(1);
    for _ in 0..config.burn_in {
        state = elliptical_slice_step(&state, &map, loglik, rng);
    }
    let mut out = Vec::with_capacity(config.n_samples);
    for _ in 0..config.n_samples {
        for _ in 0..thin {
            state = elliptical_slice_step(&state, &map, loglik, rng);
        }
        out.push(state.z.as_slice().to_vec());
    }
    out
}

/// Conditional draws of `z` given `params` on the fine grid.
pub fn sample_latent_given_theta(
    model: &GridModel,
    params: &Params,
    config: &Stage2Config,
    theta_index: usize,
    rng: &mut dyn RngCore,
) -> Result<LatentDraws> {
    let factor = FieldFactor::new(&params.field, &model.points, model.n_components)?;
    let eta = model.linear_predictor(params);
    let loglik = |z: &DVector<f64>| model.loglik(&eta, z.as_slice());
    let z_samples = sample_latent_with(&factor, &loglik, config, rng);
    Ok(LatentDraws { theta_index, z_samples, thin: config.thin.max(1), n_samples: config.n_samples })
}

/// Random stream for the `θ` with chain index `i`.
pub fn theta_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(i as u64);
    r
}

/// Runs stage 2 for every `config.every`-th draw of `thetas`, in parallel.
/// Output is in `θ`-index order and does not depend on the thread count.
pub fn run_stage2(
    model: &GridModel,
    layout: &ModelLayout,
    thetas: &[ThetaVector],
    config: &Stage2Config,
) -> Result<Vec<LatentDraws>> {
    if config.every == 0 || config.n_samples == 0 {
        return Err(Error::Config("stage 2 needs every >= 1 and n_samples >= 1".into()));
    }
    let picks: Vec<usize> = (0..thetas.len()).step_by(config.every).collect();
    picks
        .into_par_iter()
        .map(|i| {
            let params = layout.decode(&thetas[i])?;
            let mut rng = theta_rng(config.seed, i);
            sample_latent_given_theta(model, &params, config, i, &mut rng)
        })
        .collect()
}

/// Draws pooled across `θ` values.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledDraws {
    pub draws: Vec<Vec<f64>>,
    pub dim: usize,
}

/// Pools an equal number of draws per `θ`; uniform weights because the
/// retained `θ` already carry posterior frequencies.
pub fn mix_latent_posterior(per_theta: &[LatentDraws]) -> Result<PooledDraws> {
    let first = per_theta.first().ok_or_else(|| Error::Config("no latent draws to pool".into()))?;
    let dim = first.z_samples.first().map_or(0, Vec::len);
    let take = per_theta.iter().map(|d| d.z_samples.len()).min().unwrap_or(0);
    let mut draws = Vec::with_capacity(take * per_theta.len());
    for d in per_theta {
        for z in &d.z_samples[..take] {
            if z.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: z.len() });
            }
            draws.push(z.clone());
        }
    }
    Ok(PooledDraws { draws, dim })
}

impl PooledDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.draws.len() as f64;
        let mut m = vec![0.0; self.dim];
        for d in &self.draws {
            for (a, b) in m.iter_mut().zip(d) {
                *a += b / n;
            }
        }
        m
    }

    pub fn sd(&self) -> Vec<f64> {
        let m = self.mean();
        let n = self.draws.len();
        let mut v = vec![0.0; self.dim];
        for d in &self.draws {
            for ((a, b), mu) in v.iter_mut().zip(d).zip(&m) {
                *a += (b - mu).powi(2);
            }
        }
        v.iter().map(|s| (s / (n.max(2) - 1) as f64).sqrt()).collect()
    }

    /// Per-cell empirical quantiles.
    pub fn quantiles(&self, p: f64) -> Vec<f64> {
        (0..self.dim)
            .map(|j| {
                let mut col: Vec<f64> = self.draws.iter().map(|d| d[j]).collect();
                col.sort_by(|a, b| a.total_cmp(b));
                quantile(&col, p)
            })
            .collect()
    }

    /// Maximum over cells of each draw.
    pub fn max_per_draw(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect()
    }

    /// Per-cell probability that `z` exceeds `level`.
    pub fn exceedance(&self, level: f64) -> Vec<f64> {
        let n = self.draws.len() as f64;
        (0..self.dim).map(|j| self.draws.iter().filter(|d| d[j] > level).count() as f64 / n).collect()
    }
}

const MAGIC: &[u8; 6] = b"LGCPZ1";

/// Writes pooled draws: magic, then `K`, `L`, `n_draws` as little-endian
/// `u64`, then row-major little-endian `f64`.
pub fn write_draws(path: impl AsRef<Path>, n_cells: usize, n_components: usize, pooled: &PooledDraws) -> Result<()> {
    if pooled.dim != n_cells * n_components {
        return Err(Error::DimensionMismatch { expected: n_cells * n_components, got: pooled.dim });
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    for v in [n_cells, n_components, pooled.len()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for d in &pooled.draws {
        for x in d {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_draws`]; returns `(K, L, draws)`.
pub fn read_draws(path: impl AsRef<Path>) -> Result<(usize, usize, PooledDraws)> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not an LGCPZ1 file".into()));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        *d = u64::from_le_bytes(b) as usize;
    }
    let [k, l, n] = dims;
    let dim = k * l;
    let mut draws = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        let mut row = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut b)?;
            row.push(f64::from_le_bytes(b));
        }
        draws.push(row);
    }
    Ok((k, l, PooledDraws { draws, dim }))
}

/// Writes per-cell posterior summaries: location, component, mean, sd and quantiles.
pub fn write_cell_summary(path: impl AsRef<Path>, model: &GridModel, pooled: &PooledDraws) -> Result<()> {
    let k = model.n_cells();
    let mean = pooled.mean();
    let sd = pooled.sd();
    let q = [pooled.quantiles(0.025), pooled.quantiles(0.5), pooled.quantiles(0.975)];
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "component", "mean", "sd", "q025", "q50", "q975"])?;
    for j in 0..pooled.dim {
        let p = model.points[j % k];
        w.write_record([
            p[0].to_string(),
            p[1].to_string(),
            (j / k + 1).to_string(),
            mean[j].to_string(),
            sd[j].to_string(),
            q[0][j].to_string(),
            q[1][j].to_string(),
            q[2][j].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Result of the `(ν, β)` mode search.
#[derive(Debug, Clone)]
pub struct MapEstimate {
    pub nu: DVector<f64>,
    pub beta: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every iteration, starting value first.
    pub trace: Vec<f64>,
}

/// Settings of the fixed-step gradient ascent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapConfig {
    pub step_nu: f64,
    pub step_beta: f64,
    pub tol: f64,
    pub kappa_beta: f64,
    pub max_iter: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self { step_nu: 1e-3, step_beta: 1e-4, tol: 1e-6, kappa_beta: 100.0, max_iter: 20_000 }
    }
}

/// Log posterior of `(ν, β)` at fixed `ζ` and its gradients, univariate
/// model with a single coefficient vector.
#[derive(Debug, Clone)]
pub struct MapObjective<'a> {
    pub model: &'a GridModel,
    pub factor: &'a FieldFactor,
    pub kappa_beta: f64,
}

impl MapObjective<'_> {
    fn eta(&self, beta: &[f64]) -> Vec<f64> {
        let e = &self.model.design * DVector::from_column_slice(beta);
        let k = self.model.n_cells();
        (0..k * self.factor.n_components()).map(|i| e[i % k]).collect()
    }

    pub fn value(&self, nu: &DVector<f64>, beta: &[f64]) -> f64 {
        let z = self.factor.apply(nu);
        self.model.loglik(&self.eta(beta), z.as_slice())
            - 0.5 * nu.norm_squared()
            - 0.5 * beta.iter().map(|b| b * b).sum::<f64>() / self.kappa_beta
    }

    /// `(∂/∂ν, ∂/∂β)`: `L'(n − e) − ν` and `X'(n − e) − β/κ`.
    pub fn gradient(&self, nu: &DVector<f64>, beta: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let z = self.factor.apply(nu);
        let e = self.model.expected(&self.eta(beta), z.as_slice());
        let r = DVector::from_iterator(e.len(), self.model.counts.iter().zip(&e).map(|(n, ei)| n - ei));
        let g_nu = self.factor.apply_transpose(&r) - nu;
        let k = self.model.n_cells();
        let mut r_sum = DVector::zeros(k);
        for c in 0..self.factor.n_components() {
            r_sum += r.rows(c * k, k);
        }
        let g_beta = self.model.design.tr_mul(&r_sum) - DVector::from_column_slice(beta) / self.kappa_beta;
        (g_nu, g_beta)
    }
}

/// Fixed-step gradient ascent for the joint mode of `(ν, β)` at fixed `ζ`.
///
/// Fails with [`Error::Diverged`] after 10 consecutive decreases of the
/// objective. Stops when the gradient norm is below `tol` or after
/// `max_iter` iterations (then `converged` is false).
pub fn map_estimate(
    objective: &MapObjective<'_>,
    nu0: DVector<f64>,
    beta0: Vec<f64>,
    config: &MapConfig,
) -> Result<MapEstimate> {
    let mut nu = nu0;
    let mut beta = DVector::from_vec(beta0);
    let mut f = objective.value(&nu, beta.as_slice());
    let mut trace = vec![f];
    let mut decreases = 0;
    for iter in 0..config.max_iter {
        let (g_nu, g_beta) = objective.gradient(&nu, beta.as_slice());
        let norm = (g_nu.norm_squared() + g_beta.norm_squared()).sqrt();
        if norm < config.tol {
            return Ok(MapEstimate {
                nu,
                beta: beta.as_slice().to_vec(),
                objective: f,
                iterations: iter,
                converged: true,
                trace,
            });
        }
        nu += config.step_nu * g_nu;
        beta += config.step_beta * g_beta;
        let fn_ = objective.value(&nu, beta.as_slice());
        if !(fn_ >= f) {
            decreases += 1;
            if decreases >= 10 || !fn_.is_finite() {
                return Err(Error::Diverged(decreases));
            }
        } else {
            decreases = 0;
        }
        f = fn_;
        trace.push(f);
    }
    Ok(MapEstimate {
        nu,
        beta: beta.as_slice().to_vec(),
        objective: f,
        iterations: config.max_iter,
        converged: false,
        trace,
    })
}
