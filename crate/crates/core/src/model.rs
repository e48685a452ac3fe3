//! Model structure and parameter vectors.
//!
//! [`ModelLayout`] describes which parameters are free and how they map onto
//! an unconstrained [`ThetaVector`]: positive quantities are stored on the log
//! scale, so every vector in `R^p` decodes to a valid parameter set.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::covariance::{ExponentialKernel, LmcSpec};
use crate::domain::CovariateRaster;
use crate::error::{Error, Result};

/// A spatial covariate `X_j(s)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariate {
    /// `|s_x − center|`
    AbsOffsetX(f64),
    /// `|s_y − center|`
    AbsOffsetY(f64),
    X,
    Y,
    Raster(CovariateRaster),
}

impl Covariate {
    pub fn eval(&self, s: [f64; 2]) -> Result<f64> {
        Ok(match self {
            Covariate::AbsOffsetX(c) => (s[0] - c).abs(),
            Covariate::AbsOffsetY(c) => (s[1] - c).abs(),
            Covariate::X => s[0],
            Covariate::Y => s[1],
            Covariate::Raster(r) => r.value_at(s[0], s[1])?,
        })
    }
}

/// Serialized form of a covariate, as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateSpec {
    AbsX { center: f64 },
    AbsY { center: f64 },
    X,
    Y,
    Raster { path: String },
}

impl CovariateSpec {
    /// Resolves raster paths relative to `base`.
    pub fn resolve(&self, base: Option<&Path>) -> Result<Covariate> {
        Ok(match self {
            CovariateSpec::AbsX { center } => Covariate::AbsOffsetX(*center),
            CovariateSpec::AbsY { center } => Covariate::AbsOffsetY(*center),
            CovariateSpec::X => Covariate::X,
            CovariateSpec::Y => Covariate::Y,
            CovariateSpec::Raster { path } => {
                let p = Path::new(path);
                let full = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.to_path_buf(),
                };
                Covariate::Raster(CovariateRaster::read_csv(full)?)
            }
        })
    }
}

/// Row `(1, X_1(s), …, X_J(s))` of the design matrix.
pub fn design_row(covariates: &[Covariate], s: [f64; 2]) -> Result<Vec<f64>> {
    let mut row = Vec::with_capacity(covariates.len() + 1);
    row.push(1.0);
    for c in covariates {
        row.push(c.eval(s)?);
    }
    Ok(row)
}

/// Design matrix over `pts`, row-major `K × P`.
pub fn design_matrix(covariates: &[Covariate], pts: &[[f64; 2]]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(pts.len() * (covariates.len() + 1));
    for &s in pts {
        out.extend(design_row(covariates, s)?);
    }
    Ok(out)
}

/// Which loadings of the coregionalization matrix are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LoadingStructure {
    /// Every entry on or below the diagonal.
    #[default]
    Lower,
    /// The first column plus the diagonal: one common factor and one
    /// individual factor per component.
    CommonPlusDiagonal,
}

/// Latent field parameters on the natural scale.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldParams {
    Exponential(ExponentialKernel),
    Lmc(LmcSpec),
}

impl FieldParams {
    /// Marginal variance of component `l`.
    pub fn marginal_variance(&self, l: usize) -> f64 {
        match self {
            FieldParams::Exponential(k) => k.sigma2,
            FieldParams::Lmc(lmc) => lmc.marginal_variance(l),
        }
    }

    /// Number of independent factor fields.
    pub fn n_factors(&self) -> usize {
        match self {
            FieldParams::Exponential(_) => 1,
            FieldParams::Lmc(lmc) => lmc.n_factors,
        }
    }

    /// Decay of factor `h`.
    pub fn factor_phi(&self, h: usize) -> f64 {
        match self {
            FieldParams::Exponential(k) => k.phi,
            FieldParams::Lmc(lmc) => lmc.phis[h],
        }
    }

    /// Loading of factor `h` on component `l`; `σ` in the univariate case.
    pub fn loading(&self, l: usize, h: usize) -> f64 {
        match self {
            FieldParams::Exponential(k) => k.sigma2.sqrt(),
            FieldParams::Lmc(lmc) => lmc.loading(l, h),
        }
    }

    /// Cross covariance between components at distance `d`.
    pub fn cross_covariance_at(&self, l: usize, lp: usize, d: f64) -> f64 {
        match self {
            FieldParams::Exponential(k) => k.at_distance(d),
            FieldParams::Lmc(lmc) => {
                (0..lmc.n_factors).map(|h| (-lmc.phis[h] * d).exp() * lmc.loading(l, h) * lmc.loading(lp, h)).sum()
            }
        }
    }
}

/// Full parameter set `θ = (β, ζ)` on the natural scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// Regression coefficients per component, intercept first.
    pub beta: Vec<Vec<f64>>,
    pub field: FieldParams,
}

impl Params {
    pub fn beta_for(&self, l: usize) -> &[f64] {
        if self.beta.len() == 1 {
            &self.beta[0]
        } else {
            &self.beta[l]
        }
    }
}

/// Latent structure of the model.
#[derive(Debug, Clone, PartialEq)]
pub enum LatentStructure {
    Univariate,
    Lmc { n_factors: usize, loadings: LoadingStructure },
}

/// Maps between unconstrained parameter vectors and [`Params`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelLayout {
    pub n_components: usize,
    /// Number of covariates, excluding the intercept.
    pub n_covariates: usize,
    /// One coefficient vector shared by all components.
    pub shared_beta: bool,
    pub latent: LatentStructure,
    /// When set, the field parameters are held fixed and only `β` is sampled.
    pub fixed_field: Option<FieldParams>,
}

/// Unconstrained parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector(pub Vec<f64>);

impl ThetaVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Role of a coordinate of the unconstrained vector; drives the prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Beta,
    LogSigma2,
    LogPhi,
    LogDiagLoading,
    OffDiagLoading,
}

impl ModelLayout {
    pub fn univariate(n_covariates: usize) -> Self {
        Self {
            n_components: 1,
            n_covariates,
            shared_beta: false,
            latent: LatentStructure::Univariate,
            fixed_field: None,
        }
    }

    pub fn lmc(
        n_components: usize,
        n_covariates: usize,
        n_factors: usize,
        loadings: LoadingStructure,
        shared_beta: bool,
    ) -> Result<Self> {
        if n_factors == 0 || n_factors > n_components {
            return Err(Error::Config(format!("need 1 <= H <= L, got H={n_factors}, L={n_components}")));
        }
        Ok(Self {
            n_components,
            n_covariates,
            shared_beta,
            latent: LatentStructure::Lmc { n_factors, loadings },
            fixed_field: None,
        })
    }

    pub fn with_fixed_field(mut self, field: FieldParams) -> Self {
        self.fixed_field = Some(field);
        self
    }

    pub fn n_coefficients(&self) -> usize {
        self.n_covariates + 1
    }

    fn n_beta_vectors(&self) -> usize {
        if self.shared_beta || self.n_components == 1 {
            1
        } else {
            self.n_components
        }
    }

    /// Free loading positions `(ℓ, h)` in storage order.
    pub fn free_loadings(&self) -> Vec<(usize, usize)> {
        match self.latent {
            LatentStructure::Univariate => Vec::new(),
            LatentStructure::Lmc { n_factors, loadings } => {
                let mut out = Vec::new();
                for l in 0..self.n_components {
                    for h in 0..n_factors.min(l + 1) {
                        let free = match loadings {
                            LoadingStructure::Lower => true,
                            LoadingStructure::CommonPlusDiagonal => h == 0 || h == l,
                        };
                        if free {
                            out.push((l, h));
                        }
                    }
                }
                out
            }
        }
    }

    /// Kinds of each coordinate, in storage order.
    pub fn kinds(&self) -> Vec<ParamKind> {
        let mut kinds = vec![ParamKind::Beta; self.n_beta_vectors() * self.n_coefficients()];
        if self.fixed_field.is_some() {
            return kinds;
        }
        match self.latent {
            LatentStructure::Univariate => {
                kinds.push(ParamKind::LogSigma2);
                kinds.push(ParamKind::LogPhi);
            }
            LatentStructure::Lmc { n_factors, .. } => {
                kinds.extend(std::iter::repeat_n(ParamKind::LogPhi, n_factors));
                for (l, h) in self.free_loadings() {
                    kinds.push(if l == h { ParamKind::LogDiagLoading } else { ParamKind::OffDiagLoading });
                }
            }
        }
        kinds
    }

    pub fn dim(&self) -> usize {
        self.kinds().len()
    }

    /// Column names on the natural scale.
    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let nb = self.n_beta_vectors();
        for b in 0..nb {
            for j in 0..self.n_coefficients() {
                if nb == 1 {
                    names.push(format!("beta{j}"));
                } else {
                    names.push(format!("beta{j}_{}", b + 1));
                }
            }
        }
        if self.fixed_field.is_some() {
            return names;
        }
        match self.latent {
            LatentStructure::Univariate => {
                names.push("sigma2".into());
                names.push("phi".into());
            }
            LatentStructure::Lmc { n_factors, .. } => {
                for h in 0..n_factors {
                    names.push(format!("phi{}", h + 1));
                }
                for (l, h) in self.free_loadings() {
                    names.push(format!("gamma{}{}", l + 1, h + 1));
                }
            }
        }
        names
    }

    /// Decodes an unconstrained vector.
    pub fn decode(&self, theta: &ThetaVector) -> Result<Params> {
        let v = &theta.0;
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        let p = self.n_coefficients();
        let nb = self.n_beta_vectors();
        let beta: Vec<Vec<f64>> = (0..nb).map(|b| v[b * p..(b + 1) * p].to_vec()).collect();
        let mut i = nb * p;
        let field = if let Some(f) = &self.fixed_field {
            f.clone()
        } else {
            match self.latent {
                LatentStructure::Univariate => {
                    FieldParams::Exponential(ExponentialKernel::unchecked(v[i].exp(), v[i + 1].exp()))
                }
                LatentStructure::Lmc { n_factors, .. } => {
                    let phis: Vec<f64> = v[i..i + n_factors].iter().map(|t| t.exp()).collect();
                    i += n_factors;
                    let mut gamma = vec![0.0; self.n_components * n_factors];
                    for (l, h) in self.free_loadings() {
                        gamma[l * n_factors + h] = if l == h { v[i].exp() } else { v[i] };
                        i += 1;
                    }
                    FieldParams::Lmc(LmcSpec { gamma, n_components: self.n_components, n_factors, phis })
                }
            }
        };
        Ok(Params { beta, field })
    }

    /// Encodes natural-scale parameters; loadings outside the free pattern are ignored.
    pub fn encode(&self, params: &Params) -> Result<ThetaVector> {
        let nb = self.n_beta_vectors();
        let p = self.n_coefficients();
        let mut v = Vec::with_capacity(self.dim());
        for b in 0..nb {
            let beta =
                params.beta.get(b).or(params.beta.first()).ok_or_else(|| Error::Config("missing beta".into()))?;
            if beta.len() != p {
                return Err(Error::DimensionMismatch { expected: p, got: beta.len() });
            }
            v.extend_from_slice(beta);
        }
        if self.fixed_field.is_none() {
            match (&self.latent, &params.field) {
                (LatentStructure::Univariate, FieldParams::Exponential(k)) => {
                    if !(k.sigma2 > 0.0 && k.phi > 0.0) {
                        return Err(Error::Config("sigma2 and phi must be positive".into()));
                    }
                    v.push(k.sigma2.ln());
                    v.push(k.phi.ln());
                }
                (LatentStructure::Lmc { n_factors, .. }, FieldParams::Lmc(lmc)) => {
                    if lmc.n_factors != *n_factors || lmc.n_components != self.n_components {
                        return Err(Error::Config("LMC dimensions do not match the layout".into()));
                    }
                    for &phi in &lmc.phis {
                        v.push(phi.ln());
                    }
                    for (l, h) in self.free_loadings() {
                        let g = lmc.loading(l, h);
                        if l == h {
                            if g <= 0.0 {
                                return Err(Error::Config("loading diagonal must be positive".into()));
                            }
                            v.push(g.ln());
                        } else {
                            v.push(g);
                        }
                    }
                }
                _ => return Err(Error::Config("field parameters do not match the layout".into())),
            }
        }
        Ok(ThetaVector(v))
    }

    /// Natural-scale values in the order of [`ModelLayout::names`].
    pub fn natural_values(&self, theta: &ThetaVector) -> Vec<f64> {
        self.kinds()
            .iter()
            .zip(&theta.0)
            .map(|(kind, &t)| match kind {
                ParamKind::Beta | ParamKind::OffDiagLoading => t,
                _ => t.exp(),
            })
            .collect()
    }

    /// Inverse of [`ModelLayout::natural_values`].
    pub fn from_natural(&self, values: &[f64]) -> Result<ThetaVector> {
        let kinds = self.kinds();
        if values.len() != kinds.len() {
            return Err(Error::DimensionMismatch { expected: kinds.len(), got: values.len() });
        }
        let mut out = Vec::with_capacity(values.len());
        for (kind, &v) in kinds.iter().zip(values) {
            out.push(match kind {
                ParamKind::Beta | ParamKind::OffDiagLoading => v,
                _ => {
                    if !(v > 0.0) {
                        return Err(Error::Config(format!("positive parameter has value {v}")));
                    }
                    v.ln()
                }
            });
        }
        Ok(ThetaVector(out))
    }
}
