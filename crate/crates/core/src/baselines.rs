//! Joint samplers over `(ν, β, ζ)` used as comparators: elliptical slice
//! sampling within Metropolis-Hastings, and a manifold-preconditioned
//! Langevin sampler (MMALA). Univariate model only; `ζ = (log σ², log φ)`.
//!
//! Both share the `(β, ζ)` block: a preconditioned Langevin proposal for
//! `β` with `M_β = X'DX + I/κ` refreshed at every state, and a Gaussian
//! random walk for `ζ`. Since `z = σ L_φ ν` moves with `ζ` at fixed `ν`,
//! no Gaussian process prior density enters that ratio.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covariance::{cholesky, ExponentialKernel, LowerFactor};
use crate::diagnostics::{Chain, ChainMeta};
use crate::domain::{Domain, PointPattern};
use crate::error::{Error, Result};
use crate::latent::{elliptical_slice_step, map_estimate, EssState, FieldFactor, GridModel, MapConfig, MapObjective};
use crate::model::{FieldParams, ParamKind};
use crate::pm::PriorSpec;

/// Step-size constants and run lengths of the baseline samplers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub burn_in: usize,
    pub iterations: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub c: f64,
    /// Hold `ζ` at its initial value (only `ν` and `β` are sampled).
    pub fix_zeta: bool,
    /// Draws of `ζ` before its running covariance replaces the identity.
    pub zeta_cov_warmup: usize,
    pub map_max_iter: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            burn_in: 10_000,
            iterations: 100_000,
            seed: 1,
            target_accept: 0.574,
            c: 0.4,
            fix_zeta: false,
            zeta_cov_warmup: 100,
            map_max_iter: 5000,
        }
    }
}

/// Proposal variances `1.65²/dim^{1/3}` for `ν` and `β`, `2.38²/dim` for `ζ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmalaScales {
    pub sigma_nu2: f64,
    pub sigma_beta2: f64,
    pub sigma_zeta2: f64,
}

impl MmalaScales {
    pub fn new(dim_nu: usize, dim_beta: usize, dim_zeta: usize) -> Self {
        Self {
            sigma_nu2: 1.65f64.powi(2) / (dim_nu as f64).cbrt(),
            sigma_beta2: 1.65f64.powi(2) / (dim_beta as f64).cbrt(),
            sigma_zeta2: 2.38f64.powi(2) / dim_zeta.max(1) as f64,
        }
    }
}

/// `D_kk = exp(X(s_k)β + σ²/2) Δ_k`.
fn fisher_weights(model: &GridModel, beta: &DVector<f64>, sigma2: f64) -> DVector<f64> {
    let eta = &model.design * beta;
    DVector::from_fn(model.n_cells(), |k, _| (eta[k] + sigma2 / 2.0).exp() * model.areas[k])
}

/// `M_β = X' D X + I/κ`.
pub fn beta_preconditioner(model: &GridModel, beta: &DVector<f64>, sigma2: f64, kappa: f64) -> DMatrix<f64> {
    let d = fisher_weights(model, beta, sigma2);
    let mut xd = model.design.clone();
    for (k, mut row) in xd.row_iter_mut().enumerate() {
        row *= d[k];
    }
    let mut m = model.design.tr_mul(&xd);
    for i in 0..m.nrows() {
        m[(i, i)] += 1.0 / kappa;
    }
    m
}

/// `M_ν = L_ζ' D L_ζ + I` with `L_ζ = σ L_φ`.
pub fn nu_preconditioner(model: &GridModel, factor: &FieldFactor, beta: &DVector<f64>, sigma2: f64) -> DMatrix<f64> {
    let d = fisher_weights(model, beta, sigma2);
    let mut l = factor.chols[0].clone() * factor.loadings[(0, 0)];
    let k = l.nrows();
    let mut dl = l.clone();
    for (i, mut row) in dl.row_iter_mut().enumerate() {
        row *= d[i];
    }
    l = l.tr_mul(&dl);
    for i in 0..k {
        l[(i, i)] += 1.0;
    }
    l
}

/// Both preconditioners at `(β, σ², φ)`.
pub fn mmala_preconditioners(
    model: &GridModel,
    beta: &[f64],
    sigma2: f64,
    phi: f64,
    kappa: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let field = FieldParams::Exponential(ExponentialKernel::unchecked(sigma2, phi));
    let factor = FieldFactor::new(&field, &model.points, 1)?;
    let b = DVector::from_column_slice(beta);
    Ok((nu_preconditioner(model, &factor, &b, sigma2), beta_preconditioner(model, &b, sigma2, kappa)))
}

/// `x + (s/2) M⁻¹ g + √s R⁻ᵀ ξ` for `M = R R'`.
pub fn langevin_proposal(
    x: &DVector<f64>,
    grad: &DVector<f64>,
    m: &LowerFactor,
    scale: f64,
    xi: &DVector<f64>,
) -> DVector<f64> {
    x + m.solve(grad) * (scale / 2.0) + m.solve_upper_transpose(xi) * scale.sqrt()
}

/// `log N(y | x + (s/2) M⁻¹ g, s M⁻¹)` up to a constant common to all
/// proposals of the same dimension and scale.
pub fn langevin_log_q(y: &DVector<f64>, x: &DVector<f64>, grad_x: &DVector<f64>, m: &LowerFactor, scale: f64) -> f64 {
    let d = y - x - m.solve(grad_x) * (scale / 2.0);
    let r = m.l.tr_mul(&d);
    0.5 * m.log_det() - 0.5 * r.norm_squared() / scale
}

/// One preconditioned Langevin step with a fixed preconditioner on a
/// target given by its log density and gradient. Returns whether it moved.
pub fn mala_step<F, G>(
    x: &mut DVector<f64>,
    logp: &F,
    grad: &G,
    m: &LowerFactor,
    scale: f64,
    rng: &mut dyn RngCore,
) -> (bool, f64)
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let xi = DVector::from_fn(x.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let gx = grad(x);
    let y = langevin_proposal(x, &gx, m, scale, &xi);
    let lp_y = logp(&y);
    if !lp_y.is_finite() {
        return (false, 0.0);
    }
    let gy = grad(&y);
    let log_ratio = lp_y - logp(x) + langevin_log_q(x, &y, &gy, m, scale) - langevin_log_q(&y, x, &gx, m, scale);
    let prob = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
    if rng.random::<f64>() < prob {
        *x = y;
        (true, prob)
    } else {
        (false, prob)
    }
}

/// Starting values: MAP of `(ν, β)` at fixed `ζ` and the frozen `M_ν`.
#[derive(Debug, Clone)]
pub struct BaselineInit {
    pub nu: DVector<f64>,
    pub beta: Vec<f64>,
    /// `(σ², φ)`.
    pub zeta: [f64; 2],
    pub m_nu: LowerFactor,
    pub map_objective: f64,
    pub start_objective: f64,
}

/// MAP search at fixed `ζ` by gradient ascent; step sizes start at half the
/// inverse curvature scale and are halved whenever the ascent diverges.
pub fn initialize_from_map(model: &GridModel, zeta: [f64; 2], kappa: f64, max_iter: usize) -> Result<BaselineInit> {
    let [sigma2, phi] = zeta;
    if !(sigma2 > 0.0 && phi > 0.0) {
        return Err(Error::Config(format!("zeta_init must be positive, got {zeta:?}")));
    }
    let field = FieldParams::Exponential(ExponentialKernel::unchecked(sigma2, phi));
    let factor = FieldFactor::new(&field, &model.points, 1)?;
    let obj = MapObjective { model, factor: &factor, kappa_beta: kappa };
    let n_total: f64 = model.counts.iter().sum();
    let area: f64 = model.areas.iter().sum();
    let mut beta0 = vec![0.0; model.design.ncols()];
    beta0[0] = ((n_total.max(1.0)) / area).ln() - sigma2 / 2.0;
    let nu0 = DVector::zeros(model.n_cells());
    let start_objective = obj.value(&nu0, &beta0);
    let mut config = MapConfig {
        step_nu: 0.5 / (1.0 + sigma2 * n_total),
        step_beta: 0.5 / (n_total + 1.0 / kappa),
        tol: 1e-6 * (1.0 + n_total).sqrt(),
        kappa_beta: kappa,
        max_iter,
    };
    let est = loop {
        match map_estimate(&obj, nu0.clone(), beta0.clone(), &config) {
            Ok(e) => break e,
            Err(Error::Diverged(_)) if config.step_nu > 1e-12 => {
                config.step_nu /= 2.0;
                config.step_beta /= 2.0;
            }
            Err(e) => return Err(e),
        }
    };
    let b = DVector::from_column_slice(&est.beta);
    let m_nu = cholesky(&nu_preconditioner(model, &factor, &b, sigma2))?;
    Ok(BaselineInit { nu: est.nu, beta: est.beta, zeta, m_nu, map_objective: est.objective, start_objective })
}

/// Minimum-contrast starting value for `(σ², φ)`.
///
/// Fits `log g(r) = σ² exp(−φ r)` by grid search to a kernel-smoothed pair
/// correlation estimate with translation edge correction. The pattern is
/// reweighted by a fitted log-linear intensity so covariate trends are not
/// mistaken for clustering.
pub fn min_contrast_zeta(
    pattern: &PointPattern,
    domain: &Domain,
    model: &GridModel,
    phi_range: (f64, f64),
) -> Result<[f64; 2]> {
    let n = pattern.len();
    if n < 10 {
        return Err(Error::Config("too few points for a pair correlation estimate".into()));
    }
    let b = domain.bounds;
    let (w, h) = (b.width(), b.height());
    let area = domain.area();
    // Poisson GLM on the grid by Newton's method.
    let mut beta = DVector::zeros(model.design.ncols());
    beta[0] = (n as f64 / area).ln();
    for _ in 0..50 {
        let eta = &model.design * &beta;
        let e = DVector::from_fn(model.n_cells(), |k, _| eta[k].exp() * model.areas[k]);
        let r = DVector::from_fn(model.n_cells(), |k, _| model.counts[k] - e[k]);
        let g = model.design.tr_mul(&r);
        let mut xd = model.design.clone();
        for (k, mut row) in xd.row_iter_mut().enumerate() {
            row *= e[k];
        }
        let hm = model.design.tr_mul(&xd);
        let step = cholesky(&hm)?.solve(&g);
        beta += &step;
        if step.norm() < 1e-10 {
            break;
        }
    }
    let lambda_at = |s: [f64; 2]| -> f64 {
        let mut best = (f64::INFINITY, 0);
        for (k, p) in model.points.iter().enumerate() {
            let d = (p[0] - s[0]).powi(2) + (p[1] - s[1]).powi(2);
            if d < best.0 {
                best = (d, k);
            }
        }
        (model.design.row(best.1) * &beta)[0].exp()
    };
    let lam: Vec<f64> = pattern.points.iter().map(|&p| lambda_at(p)).collect();

    let r_max = 0.25 * w.min(h);
    let n_r = 60;
    let bw = 0.15 / (n as f64 / area).sqrt();
    let rs: Vec<f64> = (1..=n_r).map(|i| r_max * i as f64 / n_r as f64).collect();
    let mut g = vec![0.0; n_r];
    let pts = &pattern.points;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = pts[i][0] - pts[j][0];
            let dy = pts[i][1] - pts[j][1];
            let d = dx.hypot(dy);
            if d > r_max + bw {
                continue;
            }
            let edge = (w - dx.abs()) * (h - dy.abs());
            let wgt = 2.0 / (lam[i] * lam[j] * edge);
            for (ri, gr) in rs.iter().zip(g.iter_mut()) {
                let u = (ri - d) / bw;
                if u.abs() < 1.0 {
                    *gr += wgt * 0.75 * (1.0 - u * u) / bw;
                }
            }
        }
    }
    let obs: Vec<(f64, f64)> = rs
        .iter()
        .zip(&g)
        .filter(|(r, _)| **r > bw)
        .map(|(r, gr)| (*r, gr / (2.0 * std::f64::consts::PI * r)))
        .filter(|(_, gr)| *gr > 0.0)
        .map(|(r, gr)| (r, gr.ln()))
        .collect();
    if obs.len() < 3 {
        return Err(Error::Config("pair correlation estimate is degenerate".into()));
    }
    let mut best = (f64::INFINITY, [1.0, 1.0]);
    let (plo, phi_hi) = (phi_range.0.max(1e-3), phi_range.1);
    for a in 0..=80 {
        let s2 = 0.02 * (500f64).powf(a as f64 / 80.0);
        for c in 0..=80 {
            let phi = plo * (phi_hi / plo).powf(c as f64 / 80.0);
            let loss: f64 = obs.iter().map(|(r, lg)| (lg - s2 * (-phi * r).exp()).powi(2)).sum();
            if loss < best.0 {
                best = (loss, [s2, phi]);
            }
        }
    }
    Ok(best.1)
}

/// Which joint sampler moves `ν`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    EssJoint,
    Mmala,
}

struct JointState {
    nu: DVector<f64>,
    beta: DVector<f64>,
    zeta: DVector<f64>,
    factor: FieldFactor,
    eta: Vec<f64>,
    z: DVector<f64>,
    loglik: f64,
    log_prior: f64,
}

struct BlockContext<'a> {
    model: &'a GridModel,
    prior: &'a PriorSpec,
    kappa: f64,
}

impl BlockContext<'_> {
    fn log_prior(&self, beta: &DVector<f64>, zeta: &DVector<f64>, fix_zeta: bool) -> f64 {
        let lb: f64 = beta.iter().map(|&b| self.prior.log_density(ParamKind::Beta, b)).sum();
        if fix_zeta {
            return lb;
        }
        lb + self.prior.log_density(ParamKind::LogSigma2, zeta[0]) + self.prior.log_density(ParamKind::LogPhi, zeta[1])
    }

    fn factor(&self, zeta: &DVector<f64>) -> Result<FieldFactor> {
        let field = FieldParams::Exponential(ExponentialKernel::unchecked(zeta[0].exp(), zeta[1].exp()));
        FieldFactor::new(&field, &self.model.points, 1)
    }

    fn eta(&self, beta: &DVector<f64>) -> Vec<f64> {
        (&self.model.design * beta).as_slice().to_vec()
    }

    fn grad_beta(&self, beta: &DVector<f64>, eta: &[f64], z: &DVector<f64>) -> DVector<f64> {
        let e = self.model.expected(eta, z.as_slice());
        let r = DVector::from_fn(e.len(), |k, _| self.model.counts[k] - e[k]);
        self.model.design.tr_mul(&r) - beta / self.kappa
    }

    fn grad_nu(&self, st: &JointState, nu: &DVector<f64>) -> DVector<f64> {
        let z = st.factor.apply(nu);
        let e = self.model.expected(&st.eta, z.as_slice());
        let r = DVector::from_fn(e.len(), |k, _| self.model.counts[k] - e[k]);
        st.factor.apply_transpose(&r) - nu
    }
}

/// Retained draws and acceptance statistics of a baseline run.
#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub names: Vec<String>,
    /// Natural-scale draws `(β…, σ², φ)`.
    pub draws: Vec<Vec<f64>>,
    pub acceptance_nu: f64,
    pub acceptance_theta: f64,
    pub total_seconds: f64,
    /// Posterior mean of `z` over retained iterations.
    pub z_mean: Vec<f64>,
}

impl BaselineRun {
    pub fn to_chain(&self, sampler: &str, seed: u64, burn_in: usize) -> Chain {
        let meta = ChainMeta {
            sampler: sampler.to_string(),
            seed: Some(seed),
            acceptance_rate: Some(self.acceptance_theta),
            burn_in,
            total_seconds: self.total_seconds,
        };
        Chain::new(self.names.clone(), self.draws.clone(), meta).expect("baseline names are unique")
    }
}

/// Runs one of the joint samplers from `init`.
pub fn run_baseline(
    kind: BaselineKind,
    model: &GridModel,
    prior: &PriorSpec,
    init: &BaselineInit,
    config: &BaselineConfig,
) -> Result<BaselineRun> {
    if model.n_components != 1 {
        return Err(Error::Config("the joint samplers support univariate patterns only".into()));
    }
    if config.iterations == 0 {
        return Err(Error::Config("iterations must be positive".into()));
    }
    prior.validate()?;
    let start = Instant::now();
    let ctx = BlockContext { model, prior, kappa: prior.beta_var };
    let p = model.design.ncols();
    let scales = MmalaScales::new(model.n_cells(), p, if config.fix_zeta { 0 } else { 2 });
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let zeta = DVector::from_vec(vec![init.zeta[0].ln(), init.zeta[1].ln()]);
    let beta = DVector::from_column_slice(&init.beta);
    let factor = ctx.factor(&zeta)?;
    let eta = ctx.eta(&beta);
    let z = factor.apply(&init.nu);
    let loglik = model.loglik(&eta, z.as_slice());
    let log_prior = ctx.log_prior(&beta, &zeta, config.fix_zeta);
    if !log_prior.is_finite() {
        return Err(Error::Config("initial zeta is outside the prior support".into()));
    }
    let mut st = JointState { nu: init.nu.clone(), beta, zeta, factor, eta, z, loglik, log_prior };

    let (mut log_s0, mut log_s1) = (0.0f64, 0.0f64);
    let mut zeta_mean = st.zeta.clone();
    let mut zeta_m2 = DMatrix::<f64>::zeros(2, 2);
    let mut zeta_count = 0usize;
    let mut zeta_chol = DMatrix::<f64>::identity(2, 2);

    let mut names: Vec<String> = (0..p).map(|j| format!("beta{j}")).collect();
    if !config.fix_zeta {
        names.push("sigma2".into());
        names.push("phi".into());
    }
    let mut draws = Vec::with_capacity(config.iterations);
    let mut z_mean = vec![0.0; model.n_cells()];
    let (mut acc_nu, mut acc_th) = (0usize, 0usize);
    let total = config.burn_in + config.iterations;

    for i in 0..total {
        let adapting = i < config.burn_in;
        let gamma = ((i + 1) as f64).powf(-0.6);

        // ν block.
        let nu_moved = match kind {
            BaselineKind::EssJoint => {
                let eta = &st.eta;
                let loglik = |z: &DVector<f64>| model.loglik(eta, z.as_slice());
                let map = |v: &DVector<f64>| st.factor.apply(v);
                let cur = EssState { nu: st.nu.clone(), z: st.z.clone(), loglik: st.loglik };
                let next = elliptical_slice_step(&cur, &map, &loglik, &mut rng);
                let moved = next.nu != st.nu;
                st.nu = next.nu;
                st.z = next.z;
                st.loglik = next.loglik;
                moved
            }
            BaselineKind::Mmala => {
                let scale = log_s0.exp() * scales.sigma_nu2;
                let logp =
                    |v: &DVector<f64>| model.loglik(&st.eta, st.factor.apply(v).as_slice()) - 0.5 * v.norm_squared();
                let grad = |v: &DVector<f64>| ctx.grad_nu(&st, v);
                let mut nu = st.nu.clone();
                let (moved, prob) = mala_step(&mut nu, &logp, &grad, &init.m_nu, scale, &mut rng);
                if adapting {
                    log_s0 = (log_s0 + gamma * (prob - config.target_accept)).clamp(-30.0, 10.0);
                }
                if moved {
                    st.z = st.factor.apply(&nu);
                    st.loglik = model.loglik(&st.eta, st.z.as_slice());
                    st.nu = nu;
                }
                moved
            }
        };
        acc_nu += (nu_moved && !adapting) as usize;

        // (β, ζ) block.
        let s1 = log_s1.exp();
        let beta_scale = s1 * scales.sigma_beta2;
        let sigma2 = st.zeta[0].exp();
        let prob = match beta_zeta_proposal(&ctx, &st, sigma2, beta_scale, s1, &scales, config, &zeta_chol, &mut rng) {
            Some((cand, log_ratio)) => {
                let prob = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
                if rng.random::<f64>() < prob {
                    st = cand;
                    acc_th += (!adapting) as usize;
                }
                prob
            }
            None => 0.0,
        };
        if adapting {
            log_s1 = (log_s1 + gamma * (prob - config.target_accept)).clamp(-30.0, 10.0);
            if !config.fix_zeta {
                zeta_count += 1;
                let d = &st.zeta - &zeta_mean;
                zeta_mean += &d / zeta_count as f64;
                zeta_m2 += &d * (&st.zeta - &zeta_mean).transpose();
                if zeta_count >= config.zeta_cov_warmup {
                    let cov = &zeta_m2 / (zeta_count - 1) as f64 + DMatrix::identity(2, 2) * 1e-10;
                    if let Ok(f) = cholesky(&cov) {
                        zeta_chol = f.l;
                    }
                }
            }
        } else {
            let mut row: Vec<f64> = st.beta.iter().cloned().collect();
            if !config.fix_zeta {
                row.push(st.zeta[0].exp());
                row.push(st.zeta[1].exp());
            }
            draws.push(row);
            for (m, zi) in z_mean.iter_mut().zip(st.z.iter()) {
                *m += zi / config.iterations as f64;
            }
        }
    }
    Ok(BaselineRun {
        names,
        draws,
        acceptance_nu: acc_nu as f64 / config.iterations as f64,
        acceptance_theta: acc_th as f64 / config.iterations as f64,
        total_seconds: start.elapsed().as_secs_f64(),
        z_mean,
    })
}

/// Proposes `(β*, ζ*)` and returns the candidate state with the log
/// acceptance ratio, or `None` when the proposal is outside the support
/// or numerically invalid.
#[allow(clippy::too_many_arguments)]
fn beta_zeta_proposal(
    ctx: &BlockContext<'_>,
    st: &JointState,
    sigma2: f64,
    beta_scale: f64,
    s1: f64,
    scales: &MmalaScales,
    config: &BaselineConfig,
    zeta_chol: &DMatrix<f64>,
    rng: &mut dyn RngCore,
) -> Option<(JointState, f64)> {
    let model = ctx.model;
    let p = st.beta.len();
    let m_fwd = cholesky(&beta_preconditioner(model, &st.beta, sigma2, ctx.kappa)).ok()?;
    let g_fwd = ctx.grad_beta(&st.beta, &st.eta, &st.z);
    let xi = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let beta_new = langevin_proposal(&st.beta, &g_fwd, &m_fwd, beta_scale, &xi);

    let zeta_new = if config.fix_zeta {
        st.zeta.clone()
    } else {
        let xz = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
        &st.zeta + zeta_chol * xz * (s1 * config.c * scales.sigma_zeta2).sqrt()
    };
    let log_prior = ctx.log_prior(&beta_new, &zeta_new, config.fix_zeta);
    if !log_prior.is_finite() {
        return None;
    }
    let new_factor = if config.fix_zeta { st.factor.clone() } else { ctx.factor(&zeta_new).ok()? };
    let eta = ctx.eta(&beta_new);
    let z = new_factor.apply(&st.nu);
    let loglik = model.loglik(&eta, z.as_slice());
    if !loglik.is_finite() {
        return None;
    }
    let sigma2_new = zeta_new[0].exp();
    let m_rev = cholesky(&beta_preconditioner(model, &beta_new, sigma2_new, ctx.kappa)).ok()?;
    let g_rev = ctx.grad_beta(&beta_new, &eta, &z);
    let log_q_ratio = langevin_log_q(&st.beta, &beta_new, &g_rev, &m_rev, beta_scale)
        - langevin_log_q(&beta_new, &st.beta, &g_fwd, &m_fwd, beta_scale);
    let log_ratio = loglik + log_prior - st.loglik - st.log_prior + log_q_ratio;
    let cand =
        JointState { nu: st.nu.clone(), beta: beta_new, zeta: zeta_new, factor: new_factor, eta, z, loglik, log_prior };
    Some((cand, log_ratio))
}

pub fn run_ess_joint(
    model: &GridModel,
    prior: &PriorSpec,
    init: &BaselineInit,
    config: &BaselineConfig,
) -> Result<BaselineRun> {
    run_baseline(BaselineKind::EssJoint, model, prior, init, config)
}

pub fn run_mmala(
    model: &GridModel,
    prior: &PriorSpec,
    init: &BaselineInit,
    config: &BaselineConfig,
) -> Result<BaselineRun> {
    run_baseline(BaselineKind::Mmala, model, prior, init, config)
}
