//! Stage 1: pseudo-marginal Metropolis-Hastings over `θ`.
//!
//! The likelihood of the block counts under the Poisson log-normal surrogate
//! is estimated without bias by importance sampling from a Laplace
//! approximation of `π(w | T, θ)`, `w = log δ`. The mode search and the
//! importance draws work in whitened coordinates `x` with `w = μ + L x`,
//! `Σ = L L'`, so `Σ` is never inverted.

use std::time::Instant;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::covariance::{cholesky, LowerFactor};
use crate::diagnostics::{Chain, ChainMeta};
use crate::domain::CountSummary;
use crate::error::{Error, Result};
use crate::model::{ModelLayout, ParamKind, ThetaVector};
use crate::moments::{moments_to_mpln, CoxMomentCalculator, MplnParams};

/// Gradient-norm tolerance of the mode search.
pub const LAPLACE_TOL: f64 = 1e-8;
/// Newton iteration limit of the mode search.
pub const LAPLACE_MAX_ITER: usize = 100;
/// Importance draws per independent random stream.
const CHUNK: usize = 64;

/// Priors on the natural-scale parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSpec {
    /// Variance of the zero-mean normal prior on each regression coefficient.
    pub beta_var: f64,
    /// Support of the flat prior on each decay parameter.
    pub phi_lo: f64,
    pub phi_hi: f64,
    /// Gamma(shape, rate) prior on `σ²` and on each squared loading.
    pub gamma_shape: f64,
    pub gamma_rate: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self { beta_var: 100.0, phi_lo: 0.01, phi_hi: 50.0, gamma_shape: 2.0, gamma_rate: 1.0 }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta_var > 0.0
            && self.phi_lo > 0.0
            && self.phi_hi > self.phi_lo
            && self.phi_hi.is_finite()
            && self.gamma_shape > 0.0
            && self.gamma_rate > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid prior {self:?}")))
        }
    }

    /// Log density of one unconstrained coordinate, Jacobian included.
    /// Returns `-∞` outside the support.
    pub fn log_density(&self, kind: ParamKind, t: f64) -> f64 {
        let (a, b) = (self.gamma_shape, self.gamma_rate);
        match kind {
            ParamKind::Beta => -0.5 * t * t / self.beta_var - 0.5 * (2.0 * std::f64::consts::PI * self.beta_var).ln(),
            ParamKind::LogPhi => {
                let phi = t.exp();
                if phi >= self.phi_lo && phi <= self.phi_hi {
                    t - (self.phi_hi - self.phi_lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            // σ² = e^t ~ Gamma(a, b).
            ParamKind::LogSigma2 => a * b.ln() - ln_gamma(a) + a * t - b * t.exp(),
            // γ = e^t, γ² ~ Gamma(a, b).
            ParamKind::LogDiagLoading => {
                a * b.ln() - ln_gamma(a) + std::f64::consts::LN_2 + 2.0 * a * t - b * (2.0 * t).exp()
            }
            // γ real, γ² ~ Gamma(a, b), sign symmetric.
            ParamKind::OffDiagLoading => {
                let power = if a == 0.5 { 0.0 } else { (2.0 * a - 1.0) * t.abs().ln() };
                a * b.ln() - ln_gamma(a) + power - b * t * t
            }
        }
    }

    pub fn log_prior(&self, kinds: &[ParamKind], theta: &ThetaVector) -> f64 {
        kinds.iter().zip(&theta.0).map(|(&k, &t)| self.log_density(k, t)).sum()
    }
}

/// Gaussian importance density for `w`, stored in whitened coordinates.
///
/// `x* = L⁻¹(w* − μ)` is the mode and `R R' = I + L' diag(e^{w*}) L` is the
/// negative Hessian there; this is `L' H L` for the log-δ Hessian
/// `H = diag(e^{w*}) + Σ⁻¹`, so the density equals `N(w*, H⁻¹)`.
#[derive(Debug, Clone)]
pub struct ImportanceDensity {
    pub mode: DVector<f64>,
    pub whitened_mode: DVector<f64>,
    pub hessian_chol: LowerFactor,
    pub iterations: usize,
}

fn log_target_whitened(t: &DVector<f64>, p: &MplnParams, x: &DVector<f64>) -> f64 {
    let w = &p.mu + p.sigma_chol.mul(x);
    let data: f64 = t.iter().zip(w.iter()).map(|(ti, wi)| ti * wi - wi.exp()).sum();
    data - 0.5 * x.norm_squared()
}

/// Laplace approximation of `π(w | T) ∝ Π Poisson(T_m | e^{w_m}) · N(w | μ, Σ)`.
///
/// Damped Newton with step halving. Stops when the gradient norm reaches
/// [`LAPLACE_TOL`] or when the Newton decrement falls below the rounding
/// level of the objective.
pub fn laplace_fit(counts: &DVector<f64>, p: &MplnParams) -> Result<ImportanceDensity> {
    let n = p.dim();
    if counts.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: counts.len() });
    }
    let l = &p.sigma_chol.l;
    let mut x = DVector::zeros(n);
    let mut f = log_target_whitened(counts, p, &x);
    for iter in 0..LAPLACE_MAX_ITER {
        let w = &p.mu + l * &x;
        let e = w.map(f64::exp);
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow(e.amax()));
        }
        let grad = l.tr_mul(&(counts - &e)) - &x;
        let mut b = l.clone();
        for (i, mut row) in b.row_iter_mut().enumerate() {
            row *= e[i].sqrt();
        }
        let mut h = b.tr_mul(&b);
        for i in 0..n {
            h[(i, i)] += 1.0;
        }
        let r = cholesky(&h)?;
        let step = r.solve(&grad);
        let decrement = grad.dot(&step);
        if grad.norm() <= LAPLACE_TOL || decrement <= 4.0 * f64::EPSILON * (1.0 + f.abs()) {
            return Ok(ImportanceDensity { mode: w, whitened_mode: x, hessian_chol: r, iterations: iter });
        }
        let mut t = 1.0;
        loop {
            let cand = &x + t * &step;
            let fc = log_target_whitened(counts, p, &cand);
            if fc >= f {
                x = cand;
                f = fc;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::NoConvergence(iter));
            }
        }
    }
    Err(Error::NoConvergence(LAPLACE_MAX_ITER))
}

fn log_mean_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + (v.iter().map(|x| (x - max).exp()).sum::<f64>() / v.len() as f64).ln()
}

/// Importance-sampling estimate of `log ∫ exp(loglik(w)) N(w | μ, Σ) dw`
/// with `n_imp` draws from `q`.
///
/// Draws are split into fixed-size chunks, each with its own ChaCha stream
/// keyed by one seed taken from `rng`, so the result does not depend on the
/// number of worker threads.
pub fn log_importance_estimate<F>(
    loglik: F,
    p: &MplnParams,
    q: &ImportanceDensity,
    n_imp: usize,
    rng: &mut dyn RngCore,
) -> f64
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    assert!(n_imp >= 1, "need at least one importance draw");
    let n = p.dim();
    let master: u64 = rng.random();
    let log_det_r: f64 = q.hessian_chol.l.diagonal().iter().map(|d| d.ln()).sum();
    let n_chunks = n_imp.div_ceil(CHUNK);
    let weights: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut r = ChaCha8Rng::seed_from_u64(master);
            r.set_stream(c as u64);
            let take = CHUNK.min(n_imp - c * CHUNK);
            let loglik = &loglik;
            (0..take)
                .map(move |_| {
                    let xi = DVector::from_fn(n, |_, _| r.sample::<f64, _>(StandardNormal));
                    let x = &q.whitened_mode + q.hessian_chol.solve_upper_transpose(&xi);
                    let w = &p.mu + p.sigma_chol.mul(&x);
                    let lw = loglik(&w) - 0.5 * x.norm_squared() + 0.5 * xi.norm_squared() - log_det_r;
                    if lw.is_nan() {
                        f64::NEG_INFINITY
                    } else {
                        lw
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    log_mean_exp(&weights)
}

/// `Σ_m log Poisson(T_m | e^{w_m})`.
pub fn poisson_loglik(counts: &DVector<f64>, log_factorials: f64, w: &DVector<f64>) -> f64 {
    counts.iter().zip(w.iter()).map(|(t, wi)| t * wi - wi.exp()).sum::<f64>() - log_factorials
}

/// Unbiased estimate of `log π(T | θ)` under the Poisson log-normal surrogate.
pub fn log_marginal_estimate(
    counts: &DVector<f64>,
    p: &MplnParams,
    q: &ImportanceDensity,
    n_imp: usize,
    rng: &mut dyn RngCore,
) -> f64 {
    let lf: f64 = counts.iter().map(|t| ln_gamma(t + 1.0)).sum();
    log_importance_estimate(|w| poisson_loglik(counts, lf, w), p, q, n_imp, rng)
}

/// A target whose likelihood is only available through a noisy, unbiased
/// estimate on the natural scale.
pub trait PseudoMarginalTarget {
    fn dim(&self) -> usize;
    /// Log prior on the unconstrained scale; `-∞` outside the support.
    fn log_prior(&self, theta: &ThetaVector) -> f64;
    /// Log of an unbiased likelihood estimate. Recoverable errors reject.
    fn log_likelihood_estimate(&self, theta: &ThetaVector, rng: &mut dyn RngCore) -> Result<f64>;
}

/// The surrogate count likelihood for a fitted model.
#[derive(Debug, Clone)]
pub struct AmpTarget {
    pub layout: ModelLayout,
    pub prior: PriorSpec,
    pub n_imp: usize,
    calculator: CoxMomentCalculator,
    counts: DVector<f64>,
    kinds: Vec<ParamKind>,
}

impl AmpTarget {
    pub fn new(
        layout: ModelLayout,
        prior: PriorSpec,
        calculator: CoxMomentCalculator,
        counts: &CountSummary,
        n_imp: usize,
    ) -> Result<Self> {
        prior.validate()?;
        if n_imp == 0 {
            return Err(Error::Config("n_imp must be positive".into()));
        }
        let expected = calculator.partition().n_blocks() * layout.n_components;
        if counts.counts.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: counts.counts.len() });
        }
        let kinds = layout.kinds();
        Ok(Self { layout, prior, n_imp, calculator, counts: DVector::from_vec(counts.as_f64()), kinds })
    }

    pub fn counts(&self) -> &DVector<f64> {
        &self.counts
    }

    /// Surrogate parameters at `θ`.
    pub fn mpln(&self, theta: &ThetaVector) -> Result<MplnParams> {
        let params = self.layout.decode(theta)?;
        moments_to_mpln(&self.calculator.compute(&params))
    }
}

impl PseudoMarginalTarget for AmpTarget {
    fn dim(&self) -> usize {
        self.kinds.len()
    }

    fn log_prior(&self, theta: &ThetaVector) -> f64 {
        self.prior.log_prior(&self.kinds, theta)
    }

    fn log_likelihood_estimate(&self, theta: &ThetaVector, rng: &mut dyn RngCore) -> Result<f64> {
        let p = self.mpln(theta)?;
        let q = laplace_fit(&self.counts, &p)?;
        Ok(log_marginal_estimate(&self.counts, &p, &q, self.n_imp, rng))
    }
}

/// Tuning of the adaptive random-walk proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub target_accept: f64,
    /// Exponent `a` of the step sizes `i^{-a}`.
    pub rate_exponent: f64,
    /// Offset `i0` in the covariance step size `(i + i0)^{-a}`.
    pub cov_offset: f64,
    /// Initial proposal standard deviation per coordinate.
    pub initial_sd: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self { target_accept: 0.234, rate_exponent: 0.6, cov_offset: 100.0, initial_sd: 0.1 }
    }
}

/// Global scale, mean and covariance of the proposal.
#[derive(Debug, Clone)]
pub struct AdaptiveScaling {
    pub config: AdaptConfig,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub log_lambda: f64,
    pub count: usize,
    pub frozen: bool,
    chol: DMatrix<f64>,
}

impl AdaptiveScaling {
    pub fn new(config: AdaptConfig, start: &ThetaVector) -> Self {
        let p = start.len();
        let cov = DMatrix::identity(p, p) * config.initial_sd.powi(2);
        let chol = DMatrix::identity(p, p) * config.initial_sd;
        Self {
            config,
            mean: DVector::from_column_slice(&start.0),
            cov,
            log_lambda: (2.38 / (p.max(1) as f64).sqrt()).ln(),
            count: 0,
            frozen: false,
            chol,
        }
    }

    /// Starts the proposal covariance at `cov` instead of `initial_sd² I`.
    pub fn with_covariance(config: AdaptConfig, start: &ThetaVector, cov: DMatrix<f64>) -> Result<Self> {
        let chol = cholesky(&cov)?.l;
        Ok(Self { cov, chol, ..Self::new(config, start) })
    }

    pub fn lambda(&self) -> f64 {
        self.log_lambda.exp()
    }

    /// `θ + λ chol(Σ) η` for a given standard normal `η`.
    pub fn step(&self, theta: &ThetaVector, eta: &DVector<f64>) -> ThetaVector {
        let d = (&self.chol * eta) * self.lambda();
        ThetaVector(theta.0.iter().zip(d.iter()).map(|(a, b)| a + b).collect())
    }

    pub fn propose(&self, theta: &ThetaVector, rng: &mut dyn RngCore) -> ThetaVector {
        let eta = DVector::from_fn(theta.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        self.step(theta, &eta)
    }

    /// Robbins-Monro update after an iteration with acceptance probability `alpha`.
    pub fn update(&mut self, theta: &ThetaVector, alpha: f64) {
        if self.frozen {
            return;
        }
        self.count += 1;
        let a = self.config.rate_exponent;
        let i = self.count as f64;
        self.log_lambda = (self.log_lambda + i.powf(-a) * (alpha - self.config.target_accept)).clamp(-30.0, 5.0);
        let g = (i + self.config.cov_offset).powf(-a);
        let d = DVector::from_column_slice(&theta.0) - &self.mean;
        self.mean += g * &d;
        self.cov = (1.0 - g) * &self.cov + g * (&d * d.transpose());
        if let Ok(f) = cholesky(&self.cov) {
            self.chol = f.l;
        }
    }
}

/// State of the pseudo-marginal chain, with the cached estimate at `θ`.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub theta: ThetaVector,
    pub log_prior: f64,
    pub log_pi_hat: f64,
    pub iteration: usize,
    pub adapt: AdaptiveScaling,
}

impl ChainState {
    /// Evaluates the prior and one likelihood estimate at `theta`.
    pub fn initialize<T: PseudoMarginalTarget + ?Sized>(
        target: &T,
        theta: ThetaVector,
        adapt: AdaptConfig,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        if theta.len() != target.dim() {
            return Err(Error::DimensionMismatch { expected: target.dim(), got: theta.len() });
        }
        let log_prior = target.log_prior(&theta);
        if !log_prior.is_finite() {
            return Err(Error::Config("initial value is outside the prior support".into()));
        }
        let log_pi_hat = target.log_likelihood_estimate(&theta, rng)?;
        if !log_pi_hat.is_finite() {
            return Err(Error::Config("likelihood estimate at the initial value is not finite".into()));
        }
        let adapt = AdaptiveScaling::new(adapt, &theta);
        Ok(Self { theta, log_prior, log_pi_hat, iteration: 0, adapt })
    }
}

/// Outcome of one Metropolis-Hastings step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub accept_prob: f64,
}

/// Accept/reject a given proposal, reusing the cached estimate at the
/// current `θ`. Any numerical failure at the proposal is a rejection.
pub fn mh_accept<T: PseudoMarginalTarget + ?Sized>(
    state: &mut ChainState,
    target: &T,
    proposal: ThetaVector,
    rng: &mut dyn RngCore,
) -> StepOutcome {
    state.iteration += 1;
    let reject = StepOutcome { accepted: false, accept_prob: 0.0 };
    let lp = target.log_prior(&proposal);
    if !lp.is_finite() {
        return reject;
    }
    let ll = match target.log_likelihood_estimate(&proposal, rng) {
        Ok(v) if v.is_finite() => v,
        _ => return reject,
    };
    let log_ratio = lp + ll - state.log_prior - state.log_pi_hat;
    let accept_prob = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
    let u: f64 = rng.random();
    if u < accept_prob {
        state.theta = proposal;
        state.log_prior = lp;
        state.log_pi_hat = ll;
        StepOutcome { accepted: true, accept_prob }
    } else {
        StepOutcome { accepted: false, accept_prob }
    }
}

/// One adaptive pseudo-marginal step: propose, accept/reject, adapt.
pub fn pm_mh_step<T: PseudoMarginalTarget + ?Sized>(
    state: &mut ChainState,
    target: &T,
    rng: &mut dyn RngCore,
) -> StepOutcome {
    let proposal = state.adapt.propose(&state.theta, rng);
    let out = mh_accept(state, target, proposal, rng);
    let theta = state.theta.clone();
    state.adapt.update(&theta, out.accept_prob);
    out
}

/// Run lengths and seed for a pseudo-marginal chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmpConfig {
    pub burn_in: usize,
    pub iterations: usize,
    pub seed: u64,
    pub adapt: AdaptConfig,
    /// Nelder-Mead iterations spent moving the start to the posterior mode; 0 disables.
    pub mode_search_iters: u64,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self { burn_in: 1000, iterations: 5000, seed: 1, adapt: AdaptConfig::default(), mode_search_iters: 2000 }
    }
}

/// Retained draws plus run statistics.
#[derive(Debug, Clone)]
pub struct AmpRun {
    /// Draws on the unconstrained scale.
    pub thetas: Vec<ThetaVector>,
    /// Acceptance rate over retained iterations.
    pub acceptance_rate: f64,
    pub burn_in_acceptance_rate: f64,
    /// Wall-clock seconds of each iteration, burn-in included.
    pub iteration_seconds: Vec<f64>,
    pub total_seconds: f64,
    pub final_state: ChainState,
}

impl AmpRun {
    /// Chain on the natural scale with the layout's column names.
    pub fn to_chain(&self, layout: &ModelLayout, sampler: &str, seed: u64) -> Chain {
        let draws = self.thetas.iter().map(|t| layout.natural_values(t)).collect();
        let meta = ChainMeta {
            sampler: sampler.to_string(),
            seed: Some(seed),
            acceptance_rate: Some(self.acceptance_rate),
            burn_in: self.iteration_seconds.len() - self.thetas.len(),
            total_seconds: self.total_seconds,
        };
        Chain::new(layout.names(), draws, meta).expect("layout names are unique")
    }
}

/// Runs `burn_in` adaptive iterations followed by `iterations` retained
/// iterations with the proposal frozen.
pub fn run_pseudo_marginal<T: PseudoMarginalTarget + Sync + ?Sized>(
    target: &T,
    init: ThetaVector,
    config: &AmpConfig,
) -> Result<AmpRun> {
    run_with_covariance(target, init, config, None)
}

fn run_with_covariance<T: PseudoMarginalTarget + Sync + ?Sized>(
    target: &T,
    init: ThetaVector,
    config: &AmpConfig,
    cov: Option<DMatrix<f64>>,
) -> Result<AmpRun> {
    if config.iterations == 0 {
        return Err(Error::Config("iterations must be positive".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = ChainState::initialize(target, init, config.adapt, &mut rng)?;
    if let Some(cov) = cov {
        state.adapt = AdaptiveScaling::with_covariance(config.adapt, &state.theta, cov)?;
    }
    let total = config.burn_in + config.iterations;
    let mut thetas = Vec::with_capacity(config.iterations);
    let mut iteration_seconds = Vec::with_capacity(total);
    let (mut acc_burn, mut acc_keep) = (0usize, 0usize);
    for i in 0..total {
        if i == config.burn_in {
            state.adapt.frozen = true;
        }
        let t0 = Instant::now();
        let out = pm_mh_step(&mut state, target, &mut rng);
        iteration_seconds.push(t0.elapsed().as_secs_f64());
        if i < config.burn_in {
            acc_burn += out.accepted as usize;
        } else {
            acc_keep += out.accepted as usize;
            thetas.push(state.theta.clone());
        }
    }
    Ok(AmpRun {
        thetas,
        acceptance_rate: acc_keep as f64 / config.iterations as f64,
        burn_in_acceptance_rate: if config.burn_in > 0 { acc_burn as f64 / config.burn_in as f64 } else { 0.0 },
        iteration_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
        final_state: state,
    })
}

/// Stage 1 of the approximate marginal posterior on the surrogate target.
/// The chain starts from the mode found from `init`, with the proposal
/// covariance started at the inverse Hessian there; burn-in then adapts
/// around the posterior instead of along the path to it.
pub fn run_amp(target: &AmpTarget, init: ThetaVector, config: &AmpConfig) -> Result<AmpRun> {
    if config.mode_search_iters == 0 {
        return run_pseudo_marginal(target, init, config);
    }
    let start = posterior_mode(target, &init, config.mode_search_iters, config.seed)?;
    let cov = mode_covariance(target, &start, config.seed);
    run_with_covariance(target, start, config, cov)
}

struct NegLogPosterior<'a, T: ?Sized> {
    target: &'a T,
    seed: u64,
}

impl<T: PseudoMarginalTarget + ?Sized> CostFunction for NegLogPosterior<'_, T> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let theta = ThetaVector(p.clone());
        let lp = self.target.log_prior(&theta);
        if !lp.is_finite() {
            return Ok(f64::INFINITY);
        }
        // Common random numbers make the estimate a deterministic function of θ.
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok(match self.target.log_likelihood_estimate(&theta, &mut rng) {
            Ok(ll) if ll.is_finite() => -(lp + ll),
            _ => f64::INFINITY,
        })
    }
}

/// Nelder-Mead search for the mode of prior times estimated likelihood,
/// used as a starting value. Returns `start` unchanged when `max_iters` is 0.
pub fn posterior_mode<T: PseudoMarginalTarget + ?Sized>(
    target: &T,
    start: &ThetaVector,
    max_iters: u64,
    seed: u64,
) -> Result<ThetaVector> {
    if max_iters == 0 {
        return Ok(start.clone());
    }
    let mut simplex = vec![start.0.clone()];
    for j in 0..start.len() {
        let mut v = start.0.clone();
        v[j] += 0.5;
        simplex.push(v);
    }
    let cost = NegLogPosterior { target, seed };
    // An invalid start is reported by the chain itself.
    if !cost.cost(&start.0).map_err(|e| Error::Config(e.to_string()))?.is_finite() {
        return Ok(start.clone());
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-3).map_err(|e| Error::Config(e.to_string()))?;
    let res = Executor::new(cost, solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(ThetaVector(res.state().get_best_param().cloned().unwrap_or_else(|| start.0.clone())))
}

/// Inverse of the finite-difference Hessian of the negative log posterior
/// at `mode`, with eigenvalues clipped to stay positive definite. `None`
/// when the posterior is not finite around `mode`.
pub fn mode_covariance<T: PseudoMarginalTarget + ?Sized>(
    target: &T,
    mode: &ThetaVector,
    seed: u64,
) -> Option<DMatrix<f64>> {
    let cost = NegLogPosterior { target, seed };
    let p = mode.len();
    let h = 0.02;
    let f = |steps: &[(usize, f64)]| {
        let mut v = mode.0.clone();
        for &(i, d) in steps {
            v[i] += d;
        }
        cost.cost(&v).ok().filter(|c| c.is_finite())
    };
    let f0 = f(&[])?;
    let mut hess = DMatrix::zeros(p, p);
    for i in 0..p {
        hess[(i, i)] = (f(&[(i, h)])? - 2.0 * f0 + f(&[(i, -h)])?) / (h * h);
        for j in 0..i {
            let v = (f(&[(i, h), (j, h)])? - f(&[(i, h), (j, -h)])? - f(&[(i, -h), (j, h)])? + f(&[(i, -h), (j, -h)])?)
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let eig = hess.symmetric_eigen();
    let top = eig.eigenvalues.max();
    if !(top > 0.0) {
        return None;
    }
    let inv = eig.eigenvalues.map(|l| 1.0 / l.max(1e-3 * top));
    Some(&eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose())
}
