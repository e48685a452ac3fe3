//! Grid-discretized simulation of univariate and multivariate LGCPs.
//!
//! The latent field is drawn jointly at the cell centers of a simulation
//! grid; each cell then receives a Poisson number of points with mean
//! `λ(u_k)Δ_k`, placed uniformly inside the cell.

use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::covariance::{cholesky, cov_matrix, ExponentialKernel};
use crate::domain::{BlockPartition, Domain, PointPattern};
use crate::error::{Error, Result};
use crate::model::{design_matrix, Covariate, FieldParams, Params};

/// Cell means above this are treated as a mis-specified model.
pub const MAX_CELL_MEAN: f64 = 1e9;

/// Default simulation grid for the unit square.
pub const DEFAULT_SIM_GRID: (usize, usize) = (64, 64);

/// A generative model: covariates plus true parameters.
#[derive(Debug, Clone)]
pub struct LgcpModel {
    pub covariates: Vec<Covariate>,
    pub params: Params,
}

impl LgcpModel {
    pub fn n_components(&self) -> usize {
        match &self.params.field {
            FieldParams::Exponential(_) => 1,
            FieldParams::Lmc(lmc) => lmc.n_components,
        }
    }
}

/// Latent field values at simulation cell centers, component-major.
#[derive(Debug, Clone)]
pub struct LatentField {
    pub points: Vec<[f64; 2]>,
    pub n_components: usize,
    pub z: Vec<f64>,
}

impl LatentField {
    pub fn component(&self, l: usize) -> &[f64] {
        let k = self.points.len();
        &self.z[l * k..(l + 1) * k]
    }

    /// Writes `x,y,component,z` rows (one-based components).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "y", "component", "z"])?;
        for l in 0..self.n_components {
            for (p, z) in self.points.iter().zip(self.component(l)) {
                w.write_record(&[p[0].to_string(), p[1].to_string(), (l + 1).to_string(), z.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws the latent field on `pts` from `field`.
pub fn sample_field(field: &FieldParams, pts: &[[f64; 2]], rng: &mut impl Rng) -> Result<Vec<f64>> {
    let k = pts.len();
    let draw_factor = |kernel: ExponentialKernel, rng: &mut dyn rand::RngCore| -> Result<DVector<f64>> {
        let chol = cholesky(&cov_matrix(&kernel, pts))?;
        let nu = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
        Ok(chol.mul(&nu))
    };
    match field {
        FieldParams::Exponential(kern) => {
            if kern.sigma2 == 0.0 {
                return Ok(vec![0.0; k]);
            }
            Ok(draw_factor(*kern, rng)?.as_slice().to_vec())
        }
        FieldParams::Lmc(lmc) => {
            let mut z = vec![0.0; k * lmc.n_components];
            for h in 0..lmc.n_factors {
                let nu = draw_factor(ExponentialKernel::unchecked(1.0, lmc.phis[h]), rng)?;
                for l in 0..lmc.n_components {
                    let g = lmc.loading(l, h);
                    if g != 0.0 {
                        for (zi, ni) in z[l * k..(l + 1) * k].iter_mut().zip(nu.iter()) {
                            *zi += g * ni;
                        }
                    }
                }
            }
            Ok(z)
        }
    }
}

/// Places Poisson points in the cells of `grid` given a latent field on its
/// cell centers. Returns the pattern and, for testing, the per-cell counts.
pub fn simulate_given_field(
    model: &LgcpModel,
    grid: &BlockPartition,
    z: &[f64],
    rng: &mut impl Rng,
) -> Result<(PointPattern, Vec<u64>)> {
    let k = grid.n_fine();
    let n_comp = model.n_components();
    if z.len() != k * n_comp {
        return Err(Error::DimensionMismatch { expected: k * n_comp, got: z.len() });
    }
    let design = design_matrix(&model.covariates, &grid.fine_points)?;
    let p = model.covariates.len() + 1;
    let (hx, hy) = grid.spacing;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut counts = vec![0u64; k * n_comp];
    for l in 0..n_comp {
        let beta = model.params.beta_for(l);
        for c in 0..k {
            let eta: f64 = design[c * p..(c + 1) * p].iter().zip(beta).map(|(x, b)| x * b).sum();
            let mean = (eta + z[l * k + c]).exp() * grid.fine_areas[c];
            if !(mean <= MAX_CELL_MEAN) {
                return Err(Error::Overflow(mean));
            }
            if mean <= 0.0 {
                continue;
            }
            let n = Poisson::new(mean).map_err(|_| Error::Overflow(mean))?.sample(rng) as u64;
            counts[l * k + c] = n;
            let [cx, cy] = grid.fine_points[c];
            for _ in 0..n {
                let x = cx + (rng.random::<f64>() - 0.5) * hx;
                let y = cy + (rng.random::<f64>() - 0.5) * hy;
                points.push([x, y]);
                labels.push(l);
            }
        }
    }
    Ok((PointPattern::new(points, labels, n_comp)?, counts))
}

/// Simulates a pattern and its latent field on a `sim_grid = (rows, cols)` grid.
pub fn simulate_lgcp(
    model: &LgcpModel,
    domain: &Domain,
    sim_grid: (usize, usize),
    seed: u64,
) -> Result<(PointPattern, LatentField)> {
    let grid = BlockPartition::build(domain, sim_grid, (1, 1))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = sample_field(&model.params.field, &grid.fine_points, &mut rng)?;
    let (pattern, _) = simulate_given_field(model, &grid, &z, &mut rng)?;
    let field = LatentField { points: grid.fine_points.clone(), n_components: model.n_components(), z };
    Ok((pattern, field))
}
