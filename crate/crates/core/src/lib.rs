//! Simulation and inference for log Gaussian Cox processes.
//!
//! The inference side implements a two-stage approximate marginal posterior
//! scheme. Stage one runs a pseudo-marginal Metropolis–Hastings chain over the
//! model parameters, where the likelihood of block counts is estimated without
//! bias by importance sampling from a Laplace approximation to a moment-matched
//! multivariate Poisson log-normal surrogate. Stage two draws the latent
//! Gaussian field conditionally on each retained parameter value.
//!
//! Two joint samplers (elliptical slice within Metropolis–Hastings, and a
//! manifold-preconditioned Langevin sampler) are provided as baselines.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod config;
pub mod covariance;
pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod latent;
pub mod model;
pub mod moments;
pub mod pm;
pub mod simulate;

pub use baselines::{BaselineConfig, BaselineInit, BaselineRun};
pub use config::{FitConfig, FitSetup};
pub use covariance::{ExponentialKernel, LmcSpec, LowerFactor};
pub use diagnostics::{Chain, ChainMeta, SummaryRow};
pub use domain::{BlockPartition, CountSummary, CovariateRaster, Domain, Mask, PointPattern, Rect};
pub use error::{Error, Result};
pub use model::{Covariate, CovariateSpec, FieldParams, LoadingStructure, ModelLayout, Params, ThetaVector};
pub use moments::{CoxMomentCalculator, CoxMoments, MplnParams};
pub use pm::{AmpConfig, AmpTarget, PriorSpec, PseudoMarginalTarget};
