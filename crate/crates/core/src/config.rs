//! JSON configuration shared by all fitting commands.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineConfig;
use crate::covariance::{ExponentialKernel, LmcSpec};
use crate::domain::{count_points, BlockPartition, CountSummary, Domain, PointPattern};
use crate::error::{Error, Result};
use crate::latent::{GridModel, Stage2Config};
use crate::model::{Covariate, CovariateSpec, FieldParams, LoadingStructure, ModelLayout, Params, ThetaVector};
use crate::moments::CoxMomentCalculator;
use crate::pm::{AdaptConfig, AmpConfig, AmpTarget, PriorSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmcConfig {
    #[serde(rename = "H")]
    pub n_factors: usize,
    #[serde(default)]
    pub structure: LoadingStructure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "L", default = "one")]
    pub n_components: usize,
    #[serde(default)]
    pub covariates: Vec<CovariateSpec>,
    #[serde(default)]
    pub shared_beta: bool,
    #[serde(default)]
    pub lmc: Option<LmcConfig>,
}

fn one() -> usize {
    1
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { n_components: 1, covariates: Vec::new(), shared_beta: false, lmc: None }
    }
}

/// Field parameters of a simulation truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruthField {
    Exponential {
        sigma2: f64,
        phi: f64,
    },
    /// `gamma` is `L × H`, one row per component.
    Lmc {
        gamma: Vec<Vec<f64>>,
        phis: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    /// One coefficient vector, or one per component; intercept first.
    pub beta: Vec<Vec<f64>>,
    pub field: TruthField,
}

impl TruthConfig {
    pub fn to_params(&self) -> Result<Params> {
        let field = match &self.field {
            TruthField::Exponential { sigma2, phi } => FieldParams::Exponential(if *sigma2 == 0.0 {
                ExponentialKernel::unchecked(0.0, *phi)
            } else {
                ExponentialKernel::new(*sigma2, *phi)?
            }),
            TruthField::Lmc { gamma, phis } => {
                let l = gamma.len();
                let h = phis.len();
                if gamma.iter().any(|row| row.len() != h) {
                    return Err(Error::Config("every gamma row needs one entry per factor".into()));
                }
                FieldParams::Lmc(LmcSpec::new(gamma.concat(), l, h, phis.clone())?)
            }
        };
        if self.beta.is_empty() {
            return Err(Error::Config("truth.beta is empty".into()));
        }
        Ok(Params { beta: self.beta.clone(), field })
    }
}

/// Complete configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "unit_domain")]
    pub domain: Domain,
    pub coarse_dims: (usize, usize),
    pub fine_dims: (usize, usize),
    #[serde(default = "default_i0")]
    pub i0: usize,
    #[serde(rename = "I", default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_n_imp")]
    pub n_imp: usize,
    #[serde(default = "one_u64")]
    pub seed: u64,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub adapt: AdaptConfig,
    #[serde(default)]
    pub model: ModelConfig,
    /// Starting value on the natural scale, in chain column order.
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    /// Nelder-Mead iterations from `init` toward the posterior mode before the chain; 0 disables.
    #[serde(default = "default_mode_search")]
    pub mode_search: u64,
    #[serde(default)]
    pub truth: Option<TruthConfig>,
    #[serde(default = "default_sim_grid")]
    pub sim_grid: (usize, usize),
    #[serde(default)]
    pub stage2: Stage2Config,
    #[serde(default)]
    pub baseline: BaselineConfig,
    /// Starting `(σ², φ)` of the joint samplers; minimum contrast when absent.
    #[serde(default)]
    pub zeta_init: Option<(f64, f64)>,
}

fn unit_domain() -> Domain {
    Domain::unit_square()
}
fn default_i0() -> usize {
    1000
}
fn default_iterations() -> usize {
    5000
}
fn default_n_imp() -> usize {
    1000
}
fn default_mode_search() -> u64 {
    2000
}
fn one_u64() -> u64 {
    1
}
fn default_sim_grid() -> (usize, usize) {
    (64, 64)
}

impl FitConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: FitConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Overrides the seed of every stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.stage2.seed = seed;
        self.baseline.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.coarse_dims.0, self.coarse_dims.1, self.fine_dims.0, self.fine_dims.1];
        if dims.contains(&0) || self.sim_grid.0 == 0 || self.sim_grid.1 == 0 {
            return Err(Error::Config("grid dimensions must be positive".into()));
        }
        if self.iterations == 0 || self.n_imp == 0 {
            return Err(Error::Config("I and n_imp must be positive".into()));
        }
        if self.model.n_components == 0 {
            return Err(Error::Config("L must be at least 1".into()));
        }
        if self.model.n_components > 1 && self.model.lmc.is_none() {
            return Err(Error::Config("a multivariate model needs an lmc section".into()));
        }
        if self.stage2.every == 0 || self.stage2.thin == 0 {
            return Err(Error::Config("stage2.every and stage2.thin must be positive".into()));
        }
        self.prior.validate()
    }

    pub fn amp_config(&self) -> AmpConfig {
        AmpConfig {
            burn_in: self.i0,
            iterations: self.iterations,
            seed: self.seed,
            adapt: self.adapt,
            mode_search_iters: self.mode_search,
        }
    }

    pub fn layout(&self) -> Result<ModelLayout> {
        let m = &self.model;
        match &m.lmc {
            None => Ok(ModelLayout::univariate(m.covariates.len())),
            Some(lmc) => {
                ModelLayout::lmc(m.n_components, m.covariates.len(), lmc.n_factors, lmc.structure, m.shared_beta)
            }
        }
    }

    pub fn covariates(&self, base: Option<&Path>) -> Result<Vec<Covariate>> {
        self.model.covariates.iter().map(|c| c.resolve(base)).collect()
    }

    pub fn partition(&self) -> Result<BlockPartition> {
        BlockPartition::build(&self.domain, self.coarse_dims, self.fine_dims)
    }
}

/// Everything a fit needs, derived from a configuration and a pattern.
#[derive(Debug, Clone)]
pub struct FitSetup {
    pub layout: ModelLayout,
    pub covariates: Vec<Covariate>,
    pub partition: BlockPartition,
    pub counts: CountSummary,
    pub init: ThetaVector,
}

impl FitSetup {
    /// `base` resolves relative raster paths.
    pub fn new(config: &FitConfig, pattern: &PointPattern, base: Option<&Path>) -> Result<Self> {
        let layout = config.layout()?;
        if pattern.n_components > layout.n_components {
            return Err(Error::Config(format!(
                "pattern has {} components, model has L={}",
                pattern.n_components, layout.n_components
            )));
        }
        pattern.validate(&config.domain)?;
        let covariates = config.covariates(base)?;
        let partition = config.partition()?;
        let counts = count_points(pattern, &partition);
        let init = match &config.init {
            Some(values) => layout.from_natural(values)?,
            None => default_init(&layout, pattern, &config.domain)?,
        };
        Ok(Self { layout, covariates, partition, counts, init })
    }

    pub fn amp_target(&self, config: &FitConfig) -> Result<AmpTarget> {
        let calc = CoxMomentCalculator::new(&self.partition, &self.covariates)?;
        AmpTarget::new(self.layout.clone(), config.prior, calc, &self.counts, config.n_imp)
    }

    pub fn grid_model(&self, pattern: &PointPattern) -> Result<GridModel> {
        GridModel::new(&self.partition, &self.covariates, pattern)
    }
}

/// Unit field variance and decay; intercepts match the observed counts.
pub fn default_init(layout: &ModelLayout, pattern: &PointPattern, domain: &Domain) -> Result<ThetaVector> {
    let area = domain.area();
    let p = layout.n_coefficients();
    let sizes = pattern.component_sizes();
    let intercept = |n: f64| (n.max(1.0) / area).ln() - 0.5;
    let field = match &layout.latent {
        crate::model::LatentStructure::Univariate => FieldParams::Exponential(ExponentialKernel::unchecked(1.0, 1.0)),
        crate::model::LatentStructure::Lmc { n_factors, .. } => {
            let (l, h) = (layout.n_components, *n_factors);
            let signs = count_correlation_signs(pattern, domain)?;
            let gamma = (0..l * h)
                .map(|i| match (i / h, i % h) {
                    (r, c) if r == c => 1.0,
                    (r, c) if r > c => 0.1 * signs[r][c],
                    _ => 0.0,
                })
                .collect();
            FieldParams::Lmc(LmcSpec { gamma, n_components: l, n_factors: h, phis: vec![1.0; h] })
        }
    };
    let beta: Vec<Vec<f64>> = if layout.shared_beta || layout.n_components == 1 {
        let n = pattern.len() as f64 / layout.n_components as f64;
        let mut b = vec![0.0; p];
        b[0] = intercept(n);
        vec![b]
    } else {
        (0..layout.n_components)
            .map(|l| {
                let mut b = vec![0.0; p];
                b[0] = intercept(sizes.get(l).copied().unwrap_or(0) as f64);
                b
            })
            .collect()
    };
    layout.encode(&Params { beta, field })
}

/// Signs of the correlations of per-block counts between components on a
/// 10 x 10 grid. Off-diagonal loadings start at ±0.1 because the loading
/// prior vanishes at zero.
fn count_correlation_signs(pattern: &PointPattern, domain: &Domain) -> Result<Vec<Vec<f64>>> {
    let grid = BlockPartition::build(domain, (10, 10), (1, 1))?;
    let counts = count_points(pattern, &grid);
    let l = counts.n_components;
    let cols: Vec<Vec<f64>> =
        (0..l).map(|c| counts.component(c).iter().map(|&n| (n as f64).ln_1p()).collect()).collect();
    let centered: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    Ok((0..l)
        .map(|a| {
            (0..l)
                .map(|b| {
                    let cov: f64 = centered[a].iter().zip(&centered[b]).map(|(x, y)| x * y).sum();
                    if cov < 0.0 {
                        -1.0
                    } else {
                        1.0
                    }
                })
                .collect()
        })
        .collect())
}
