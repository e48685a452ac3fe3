//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line.
//!
//! Criteria 5 to 8 run full simulation studies and take from minutes to an
//! hour each; they are ignored by default. Run them with
//! `cargo test --release -p lgcp-core --test acceptance -- --ignored`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use statrs::function::gamma::ln_gamma;

use lgcp_core::baselines::{initialize_from_map, min_contrast_zeta, mmala_preconditioners, run_ess_joint, run_mmala};
use lgcp_core::config::default_init;
use lgcp_core::covariance::{cholesky, cov_matrix};
use lgcp_core::diagnostics::{inefficiency_factor, summarize, SummaryRow};
use lgcp_core::domain::count_points;
use lgcp_core::latent::{
    elliptical_slice_step, run_stage2, EssState, FieldFactor, GridModel, MapObjective, Stage2Config,
};
use lgcp_core::moments::{moments_to_mpln, mpln_to_moments};
use lgcp_core::pm::{laplace_fit, log_marginal_estimate, run_amp};
use lgcp_core::simulate::{simulate_lgcp, LgcpModel};
use lgcp_core::{
    AmpConfig, AmpTarget, BaselineConfig, BlockPartition, Chain, Covariate, CoxMomentCalculator, Domain,
    ExponentialKernel, FieldParams, LmcSpec, LoadingStructure, ModelLayout, MplnParams, Params, PointPattern,
    PriorSpec,
};

fn report(n: u32, pass: bool, detail: &str) {
    // Written to the raw handle so the line survives output capture.
    let line = format!("criterion {n}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn random_mpln(dim: usize, rng: &mut ChaCha8Rng) -> MplnParams {
    let a = DMatrix::from_fn(dim, dim, |_, _| 0.4 * rng.sample::<f64, _>(StandardNormal));
    let mut s = &a * a.transpose();
    for i in 0..dim {
        s[(i, i)] += rng.random_range(0.05..0.5);
    }
    let mu = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..3.0));
    MplnParams::new(mu, s).unwrap()
}

#[test]
fn criterion_1_mpln_moment_laws() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let p = random_mpln(1 + i % 4, &mut rng);
        let back = moments_to_mpln(&mpln_to_moments(&p)).unwrap();
        for (x, y) in p.mu.iter().zip(back.mu.iter()).chain(p.sigma.iter().zip(back.sigma.iter())) {
            worst = worst.max((x - y).abs() / x.abs().max(1.0));
        }
    }
    let round_trip = worst <= 1e-10;

    let n = 100_000;
    let mut worst_z = 0.0f64;
    for dim in 1..=3 {
        let p = random_mpln(dim, &mut rng);
        let m = mpln_to_moments(&p);
        let y: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let xi = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let w = &p.mu + p.sigma_chol.mul(&xi);
                w.iter().map(|wi| Poisson::new(wi.exp()).unwrap().sample(&mut rng)).collect()
            })
            .collect();
        let means: Vec<f64> = (0..dim).map(|j| y.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        for i in 0..dim {
            let se = (m.beta[(i, i)] / n as f64).sqrt();
            worst_z = worst_z.max((means[i] - m.alpha[i]).abs() / se);
            for j in i..dim {
                let prods: Vec<f64> = y.iter().map(|r| (r[i] - means[i]) * (r[j] - means[j])).collect();
                let (c, v) = mean_var(&prods);
                let se = (v / n as f64).sqrt();
                worst_z = worst_z.max((c - m.beta[(i, j)]).abs() / se);
            }
        }
    }
    let mc = worst_z <= 4.0;
    report(
        1,
        round_trip && mc,
        &format!("round-trip max rel err {worst:.2e} (<= 1e-10), MC max |z| {worst_z:.2} (<= 4)"),
    );
    assert!(round_trip && mc);
}

#[test]
fn criterion_2_cox_moment_quadrature() {
    let (beta0, sigma2, phi) = (3.0, 0.5, 2.0);
    let partition = BlockPartition::build(&Domain::unit_square(), (1, 1), (16, 16)).unwrap();
    let calc = CoxMomentCalculator::new(&partition, &[]).unwrap();
    let params = Params {
        beta: vec![vec![beta0]],
        field: FieldParams::Exponential(ExponentialKernel::new(sigma2, phi).unwrap()),
    };
    let m = calc.compute(&params);
    let (alpha, beta) = (m.alpha[0], m.beta[(0, 0)]);

    // Independent simulation on a finer 32 x 32 grid with one shared factor.
    let g = 32;
    let h = 1.0 / g as f64;
    let pts: Vec<[f64; 2]> = (0..g * g).map(|k| [((k % g) as f64 + 0.5) * h, ((k / g) as f64 + 0.5) * h]).collect();
    let chol = cholesky(&cov_matrix(&ExponentialKernel::new(sigma2, phi).unwrap(), &pts)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let reps = 10_000;
    let counts: Vec<f64> = (0..reps)
        .map(|_| {
            let xi = DVector::from_fn(g * g, |_, _| rng.sample::<f64, _>(StandardNormal));
            let z = chol.mul(&xi);
            let mass: f64 = z.iter().map(|zk| (beta0 + zk).exp() * h * h).sum();
            Poisson::new(mass).unwrap().sample(&mut rng)
        })
        .collect();
    let (mean, var) = mean_var(&counts);
    let m4 = counts.iter().map(|c| (c - mean).powi(4)).sum::<f64>() / reps as f64;
    let z_mean = (mean - alpha) / (var / reps as f64).sqrt();
    let z_var = (var - beta) / ((m4 - var * var) / reps as f64).sqrt();
    let pass = z_mean.abs() <= 3.0 && z_var.abs() <= 3.0;
    report(
        2,
        pass,
        &format!("alpha {alpha:.3} vs {mean:.3} (z {z_mean:.2}), beta {beta:.2} vs {var:.2} (z {z_var:.2}), bound 3"),
    );
    assert!(pass);
}

/// `log ∫ Π Poisson(T_m | e^{w_m}) N(w | μ, Σ) dw` by a tensor trapezoid
/// rule in whitened coordinates.
fn quadrature_log_marginal(t: &[f64], p: &MplnParams) -> f64 {
    let dim = t.len();
    let (lo, hi, n) = (-9.0, 9.0, if dim == 1 { 20_001 } else { 1201 });
    let h = (hi - lo) / (n - 1) as f64;
    let lf: f64 = t.iter().map(|v| ln_gamma(v + 1.0)).sum();
    let log_f = |x: &DVector<f64>| {
        let w = &p.mu + p.sigma_chol.mul(x);
        let ll: f64 = t.iter().zip(w.iter()).map(|(ti, wi)| ti * wi - wi.exp()).sum::<f64>() - lf;
        ll - 0.5 * x.norm_squared() - 0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln()
    };
    let mut acc = 0.0;
    if dim == 1 {
        for i in 0..n {
            let wt = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            acc += wt * log_f(&DVector::from_element(1, lo + i as f64 * h)).exp();
        }
        (acc * h).ln()
    } else {
        for i in 0..n {
            for j in 0..n {
                let wt = if i == 0 || i == n - 1 { 0.5 } else { 1.0 } * if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                let x = DVector::from_vec(vec![lo + i as f64 * h, lo + j as f64 * h]);
                acc += wt * log_f(&x).exp();
            }
        }
        (acc * h * h).ln()
    }
}

#[test]
fn criterion_3_estimator_unbiasedness() {
    let cases = [
        (vec![4.0], MplnParams::new(DVector::from_vec(vec![1.0]), DMatrix::from_element(1, 1, 0.8)).unwrap()),
        (
            vec![2.0, 6.0],
            MplnParams::new(DVector::from_vec(vec![1.0, 1.5]), DMatrix::from_row_slice(2, 2, &[0.8, 0.3, 0.3, 0.6]))
                .unwrap(),
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut pass = true;
    let mut detail = Vec::new();
    for (t, p) in &cases {
        let counts = DVector::from_column_slice(t);
        let exact = quadrature_log_marginal(t, p);
        let q = laplace_fit(&counts, p).unwrap();
        let mut scaled_var = Vec::new();
        for n_imp in [10, 100, 1000] {
            let r: Vec<f64> =
                (0..10_000).map(|_| (log_marginal_estimate(&counts, p, &q, n_imp, &mut rng) - exact).exp()).collect();
            let (m, v) = mean_var(&r);
            let z = (m - 1.0) / (v / r.len() as f64).sqrt();
            if n_imp == 100 {
                pass &= z.abs() <= 3.0;
                detail.push(format!("M={} ratio {m:.5} (z {z:.2})", t.len()));
            }
            scaled_var.push(v * n_imp as f64);
        }
        let reference = scaled_var[2];
        let dev = scaled_var.iter().map(|s| (s / reference - 1.0).abs()).fold(0.0, f64::max);
        pass &= dev <= 0.2;
        detail.push(format!("M={} N*Var spread {dev:.3}", t.len()));
    }
    report(3, pass, &format!("{} (bounds: |z| <= 3, spread <= 0.2)", detail.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_4_pseudo_marginal_exactness() {
    let sigma2 = 0.5;
    let field = FieldParams::Exponential(ExponentialKernel::new(sigma2, 1.0).unwrap());
    let layout = ModelLayout::univariate(0).with_fixed_field(field);
    let partition = BlockPartition::build(&Domain::unit_square(), (1, 1), (1, 1)).unwrap();
    let pattern = PointPattern::unlabeled((0..5).map(|i| [0.1 + 0.2 * i as f64, 0.5]).collect());
    let counts = count_points(&pattern, &partition);
    let calc = CoxMomentCalculator::new(&partition, &[]).unwrap();
    let target = AmpTarget::new(layout, PriorSpec::default(), calc, &counts, 100).unwrap();
    let config = AmpConfig { burn_in: 2000, iterations: 50_000, seed: 4, ..Default::default() };
    let run = run_amp(&target, lgcp_core::ThetaVector(vec![1.0]), &config).unwrap();
    let mut draws: Vec<f64> = run.thetas.iter().map(|t| t.0[0]).collect();
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Posterior of β0 ∝ N(β0 | 0, 100) ∫ Poisson(5 | e^w) N(w | β0, σ²) dw.
    let (lo, hi, n) = (-4.0, 6.0, 4001);
    let h = (hi - lo) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
    let dens: Vec<f64> = grid
        .iter()
        .map(|&b| {
            let s = sigma2.sqrt();
            let inner: f64 = (0..801)
                .map(|j| {
                    let u = -8.0 + 16.0 * j as f64 / 800.0;
                    let w = b + s * u;
                    (5.0 * w - w.exp() - 0.5 * u * u).exp()
                })
                .sum();
            inner * (-b * b / 200.0).exp()
        })
        .collect();
    let mut cdf = vec![0.0; n];
    for i in 1..n {
        cdf[i] = cdf[i - 1] + 0.5 * h * (dens[i] + dens[i - 1]);
    }
    let total = cdf[n - 1];
    let cdf_at = |x: f64| {
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let f = (x - lo) / h;
        let i = (f.floor() as usize).min(n - 2);
        (cdf[i] + (f - i as f64) * (cdf[i + 1] - cdf[i])) / total
    };
    let m = draws.len() as f64;
    let ks = draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf_at(x);
            (c - i as f64 / m).abs().max(((i + 1) as f64 / m - c).abs())
        })
        .fold(0.0, f64::max);
    let pass = ks < 0.05;
    report(4, pass, &format!("KS distance {ks:.4} (< 0.05), acceptance {:.3}", run.acceptance_rate));
    assert!(pass);
}

fn univariate_truth(phi: f64) -> LgcpModel {
    LgcpModel {
        covariates: vec![Covariate::AbsOffsetX(0.3), Covariate::AbsOffsetY(0.3)],
        params: Params {
            beta: vec![vec![6.0, 3.0, 3.0]],
            field: FieldParams::Exponential(ExponentialKernel::new(1.0, phi).unwrap()),
        },
    }
}

struct AmpFit {
    chain: Chain,
    rows: Vec<SummaryRow>,
}

impl AmpFit {
    fn row(&self, name: &str) -> &SummaryRow {
        self.rows.iter().find(|r| r.name == name).unwrap()
    }
}

#[allow(clippy::too_many_arguments)]
fn fit_amp(
    pattern: &PointPattern,
    covariates: &[Covariate],
    layout: ModelLayout,
    coarse: (usize, usize),
    fine: (usize, usize),
    config: &AmpConfig,
    n_imp: usize,
    derived: &[String],
) -> AmpFit {
    let domain = Domain::unit_square();
    let partition = BlockPartition::build(&domain, coarse, fine).unwrap();
    let counts = count_points(pattern, &partition);
    let calc = CoxMomentCalculator::new(&partition, covariates).unwrap();
    let init = default_init(&layout, pattern, &domain).unwrap();
    let target = AmpTarget::new(layout.clone(), PriorSpec::default(), calc, &counts, n_imp).unwrap();
    let run = run_amp(&target, init, config).unwrap();
    let chain = run.to_chain(&layout, "amp", config.seed);
    let rows = summarize(&chain, derived).unwrap();
    AmpFit { chain, rows }
}

fn paper_amp_config(seed: u64) -> AmpConfig {
    AmpConfig { burn_in: 1000, iterations: 5000, seed, ..Default::default() }
}

fn covers(r: &SummaryRow, v: f64) -> bool {
    r.q025 <= v && v <= r.q975
}

#[test]
#[ignore = "simulation study; run in release with --ignored"]
fn criterion_5_univariate_replication() {
    let truth = univariate_truth(1.0);
    let derived = vec!["sigma2*phi".to_string()];
    let mut covered = 0;
    let mut max_if = 0.0f64;
    let mut lines = Vec::new();
    for rep in 0..10u64 {
        let (pattern, _) = simulate_lgcp(&truth, &Domain::unit_square(), (64, 64), 500 + rep).unwrap();
        let fit = fit_amp(
            &pattern,
            &truth.covariates,
            ModelLayout::univariate(2),
            (10, 10),
            (2, 2),
            &paper_amp_config(rep + 1),
            1000,
            &derived,
        );
        let (b0, sp) = (fit.row("beta0"), fit.row("sigma2*phi"));
        let ok = covers(b0, 6.0) && covers(sp, 1.0);
        covered += ok as usize;
        let rep_if = fit.rows.iter().map(|r| r.inefficiency).fold(0.0, f64::max);
        max_if = max_if.max(rep_if);
        lines.push(format!(
            "rep {rep}: n={} beta0 [{:.3}, {:.3}] sigma2*phi [{:.3}, {:.3}] max IF {rep_if:.1}",
            pattern.len(),
            b0.q025,
            b0.q975,
            sp.q025,
            sp.q975
        ));
        let _ = std::io::stderr().write_all(format!("  {}\n", lines.last().unwrap()).as_bytes());
        let _ = &fit.chain;
    }
    let pass = covered >= 8 && max_if < 200.0;
    report(5, pass, &format!("coverage {covered}/10 (>= 8), max IF {max_if:.1} (< 200)"));
    assert!(pass);
}

#[test]
#[ignore = "simulation study; run in release with --ignored"]
fn criterion_6_rough_surface_discrimination() {
    let truth = univariate_truth(5.0);
    let (pattern, _) = simulate_lgcp(&truth, &Domain::unit_square(), (64, 64), 600).unwrap();
    let derived = vec!["sigma2*phi".to_string()];
    let fine = fit_amp(
        &pattern,
        &truth.covariates,
        ModelLayout::univariate(2),
        (20, 20),
        (3, 3),
        &paper_amp_config(6),
        1000,
        &derived,
    );
    let coarse = fit_amp(
        &pattern,
        &truth.covariates,
        ModelLayout::univariate(2),
        (20, 20),
        (1, 1),
        &paper_amp_config(6),
        1000,
        &derived,
    );
    let (a, b) = (fine.row("sigma2*phi"), coarse.row("sigma2*phi"));
    let pass = covers(a, 5.0) && b.q975 < 5.0;
    report(
        6,
        pass,
        &format!(
            "n={} N_B=9: [{:.3}, {:.3}] must contain 5; N_B=1: [{:.3}, {:.3}] upper must be < 5",
            pattern.len(),
            a.q025,
            a.q975,
            b.q025,
            b.q975
        ),
    );
    assert!(pass);
}

#[test]
#[ignore = "runs three samplers at K = 400; run in release with --ignored"]
fn criterion_7_baseline_concordance() {
    let truth = univariate_truth(1.0);
    let (pattern, _) = simulate_lgcp(&truth, &Domain::unit_square(), (64, 64), 700).unwrap();
    let derived = vec!["sigma2*phi".to_string()];
    let amp = fit_amp(
        &pattern,
        &truth.covariates,
        ModelLayout::univariate(2),
        (10, 10),
        (2, 2),
        &paper_amp_config(7),
        1000,
        &derived,
    );
    let amp_row = amp.row("sigma2*phi").clone();

    let partition = BlockPartition::build(&Domain::unit_square(), (10, 10), (2, 2)).unwrap();
    let model = GridModel::new(&partition, &truth.covariates, &pattern).unwrap();
    let prior = PriorSpec::default();
    let zeta = min_contrast_zeta(&pattern, &Domain::unit_square(), &model, (prior.phi_lo, prior.phi_hi)).unwrap();
    let init = initialize_from_map(&model, zeta, prior.beta_var, 5000).unwrap();
    let cfg = BaselineConfig { burn_in: 5000, iterations: 10_000, seed: 7, ..Default::default() };
    let mut pass = true;
    let mut detail = format!("AMP sigma2*phi [{:.3}, {:.3}] mean {:.3}", amp_row.q025, amp_row.q975, amp_row.mean);
    for (name, run) in [
        ("ESS", run_ess_joint(&model, &prior, &init, &cfg).unwrap()),
        ("MMALA", run_mmala(&model, &prior, &init, &cfg).unwrap()),
    ] {
        let chain = run.to_chain(name, 7, cfg.burn_in);
        let rows = summarize(&chain, &derived).unwrap();
        let r = rows.iter().find(|r| r.name == "sigma2*phi").unwrap();
        let ok = covers(&amp_row, r.mean) && r.q025 <= amp_row.q975 && amp_row.q025 <= r.q975;
        pass &= ok;
        detail += &format!(
            "; {name} mean {:.3} [{:.3}, {:.3}] IF {:.0} acc {:.2}/{:.2} {:.0}s",
            r.mean, r.q025, r.q975, r.inefficiency, run.acceptance_nu, run.acceptance_theta, run.total_seconds
        );
    }
    report(7, pass, &format!("{detail} (min-contrast start {:.3}, {:.3})", zeta[0], zeta[1]));
    assert!(pass);
}

#[test]
#[ignore = "simulation study; run in release with --ignored"]
fn criterion_8_multivariate_recovery() {
    let gamma = vec![2.0, 0.0, 0.0, -1.0, 1.0, 0.0, 1.0, 0.0, 1.0];
    let truth = LgcpModel {
        covariates: vec![],
        params: Params {
            beta: vec![vec![7.0]],
            field: FieldParams::Lmc(LmcSpec::new(gamma, 3, 3, vec![3.0, 5.0, 5.0]).unwrap()),
        },
    };
    let (pattern, _) = simulate_lgcp(&truth, &Domain::unit_square(), (64, 64), 800).unwrap();
    let layout = ModelLayout::lmc(3, 0, 3, LoadingStructure::CommonPlusDiagonal, true).unwrap();
    let fit = fit_amp(&pattern, &[], layout, (8, 8), (3, 3), &paper_amp_config(8), 1000, &[]);
    let (g21, g31, b0) = (fit.row("gamma21"), fit.row("gamma31"), fit.row("beta0"));
    let pass = g21.q975 < 0.0 && covers(g21, -1.0) && g31.q025 > 0.0 && covers(g31, 1.0) && covers(b0, 7.0);
    let sizes = pattern.component_sizes();
    report(
        8,
        pass,
        &format!(
            "sizes {sizes:?}; gamma21 [{:.3}, {:.3}], gamma31 [{:.3}, {:.3}], beta0 [{:.3}, {:.3}]",
            g21.q025, g21.q975, g31.q025, g31.q975, b0.q025, b0.q975
        ),
    );
    for r in &fit.rows {
        let _ = std::io::stderr().write_all(
            format!(
                "  {} mean {:.3} sd {:.3} [{:.3}, {:.3}] IF {:.1}\n",
                r.name, r.mean, r.stdev, r.q025, r.q975, r.inefficiency
            )
            .as_bytes(),
        );
    }
    assert!(pass);
}

fn small_grid_model() -> GridModel {
    let partition = BlockPartition::build(&Domain::unit_square(), (2, 2), (2, 2)).unwrap();
    let pts: Vec<[f64; 2]> = (0..40).map(|i| [(i as f64 * 0.618).fract(), (i as f64 * 0.377).fract()]).collect();
    GridModel::new(&partition, &[Covariate::X], &PointPattern::unlabeled(pts)).unwrap()
}

#[test]
fn criterion_9_numerical_properties() {
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let model = small_grid_model();
    let k = model.n_cells();
    let eta: Vec<f64> = (0..k).map(|i| 2.0 + 0.1 * i as f64).collect();
    let z: Vec<f64> = (0..k).map(|i| 0.3 * ((i as f64) * 1.3).sin()).collect();

    // Gradient of the grid log-likelihood in z is n − e.
    let e = model.expected(&eta, &z);
    let h = 1e-6;
    let fd_ok = (0..k).all(|i| {
        let (mut zp, mut zm) = (z.clone(), z.clone());
        zp[i] += h;
        zm[i] -= h;
        let fd = (model.loglik(&eta, &zp) - model.loglik(&eta, &zm)) / (2.0 * h);
        (fd - (model.counts[i] - e[i])).abs() < 1e-5
    });
    checks.push(("grid_loglik gradient", fd_ok));

    let field = FieldParams::Exponential(ExponentialKernel::new(0.7, 2.0).unwrap());
    let factor = FieldFactor::new(&field, &model.points, 1).unwrap();
    let obj = MapObjective { model: &model, factor: &factor, kappa_beta: 100.0 };
    let nu = DVector::from_fn(k, |i, _| 0.2 * (i as f64).cos());
    let beta = vec![2.5, -0.4];
    let (g_nu, g_beta) = obj.gradient(&nu, &beta);
    let mut map_ok = true;
    for i in 0..k {
        let (mut p, mut m) = (nu.clone(), nu.clone());
        p[i] += h;
        m[i] -= h;
        let fd = (obj.value(&p, &beta) - obj.value(&m, &beta)) / (2.0 * h);
        map_ok &= (fd - g_nu[i]).abs() < 1e-5 * (1.0 + fd.abs());
    }
    for j in 0..2 {
        let (mut p, mut m) = (beta.clone(), beta.clone());
        p[j] += h;
        m[j] -= h;
        let fd = (obj.value(&nu, &p) - obj.value(&nu, &m)) / (2.0 * h);
        map_ok &= (fd - g_beta[j]).abs() < 1e-5 * (1.0 + fd.abs());
    }
    checks.push(("MAP gradients", map_ok));

    // M_ν − I is the negative Hessian of E_ν log L(ν + a) in a at 0.
    let (sigma2, phi, b) = (0.7, 2.0, [2.5, -0.4]);
    let (m_nu, _) = mmala_preconditioners(&model, &b, sigma2, phi, 100.0).unwrap();
    let lin: Vec<f64> = (0..k).map(|i| b[0] + b[1] * model.design[(i, 1)]).collect();
    let expected_ll = |a: &DVector<f64>| {
        let la = factor.apply(a);
        (0..k)
            .map(|i| model.counts[i] * (lin[i] + la[i]) - (lin[i] + la[i] + sigma2 / 2.0).exp() * model.areas[i])
            .sum::<f64>()
    };
    let hh = 1e-4;
    let mut pre_ok = true;
    for i in 0..k {
        for j in 0..k {
            let f = |s: f64, t: f64| {
                let mut a = DVector::zeros(k);
                a[i] += s;
                a[j] += t;
                expected_ll(&a)
            };
            let hess = (f(hh, hh) - f(hh, -hh) - f(-hh, hh) + f(-hh, -hh)) / (4.0 * hh * hh);
            let target = -hess + if i == j { 1.0 } else { 0.0 };
            pre_ok &= (target - m_nu[(i, j)]).abs() < 1e-4 * m_nu[(i, j)].abs().max(1.0);
        }
    }
    checks.push(("MMALA preconditioner", pre_ok));

    // Elliptical slice on N(0, 1) prior with N(y | ν, 1) likelihood: posterior N(y/2, 1/2).
    let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let ll = |v: &DVector<f64>| -0.5 * (v - &y).norm_squared();
    let id = |v: &DVector<f64>| v.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut st = EssState { nu: DVector::zeros(3), z: DVector::zeros(3), loglik: ll(&DVector::zeros(3)) };
    let n = 100_000;
    let mut sums = (DVector::<f64>::zeros(3), DVector::<f64>::zeros(3));
    for _ in 0..n {
        st = elliptical_slice_step(&st, &id, &ll, &mut rng);
        sums.0 += &st.nu;
        sums.1 += st.nu.component_mul(&st.nu);
    }
    let mean = &sums.0 / n as f64;
    let var = &sums.1 / n as f64 - mean.component_mul(&mean);
    let ess_ok = (0..3).all(|i| (mean[i] - y[i] / 2.0).abs() < 0.02 && (var[i] - 0.5).abs() < 0.02);
    checks.push(("elliptical slice stationarity", ess_ok));

    // Laplace mode: stationarity of the log target and a positive definite Hessian.
    let p = MplnParams::new(
        DVector::from_vec(vec![1.0, 2.0, 0.5]),
        DMatrix::from_row_slice(3, 3, &[1.0, 0.4, 0.2, 0.4, 0.8, 0.1, 0.2, 0.1, 0.6]),
    )
    .unwrap();
    let t = DVector::from_vec(vec![3.0, 12.0, 0.0]);
    let q = laplace_fit(&t, &p).unwrap();
    let sinv = p.sigma_chol.solve(&(&q.mode - &p.mu));
    let grad = DVector::from_fn(3, |i, _| t[i] - q.mode[i].exp()) - sinv;
    let concave_ok = grad.norm() < 1e-6 && q.hessian_chol.l.diagonal().iter().all(|d| *d > 0.0);
    checks.push(("Laplace concavity", concave_ok));

    let iid: Vec<f64> = (0..100_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let if_iid = inefficiency_factor(&iid).unwrap();
    let mut ar = Vec::with_capacity(1_000_000);
    let mut x = 0.0;
    for _ in 0..1_000_000 {
        x = 0.5 * x + rng.sample::<f64, _>(StandardNormal);
        ar.push(x);
    }
    let if_ar = inefficiency_factor(&ar).unwrap();
    checks.push(("IF oracles", (0.9..=1.1).contains(&if_iid) && (if_ar / 3.0 - 1.0).abs() <= 0.1));

    // Thread count must not change any random output.
    let run_in = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut r = ChaCha8Rng::seed_from_u64(5);
            let est: Vec<f64> = (0..5).map(|_| log_marginal_estimate(&t, &p, &q, 300, &mut r)).collect();
            let layout = ModelLayout::univariate(1);
            let thetas: Vec<_> =
                (0..6).map(|i| layout.from_natural(&[2.5, -0.4, 0.5 + 0.1 * i as f64, 2.0]).unwrap()).collect();
            let cfg = Stage2Config { every: 2, n_samples: 5, burn_in: 5, thin: 1, seed: 3 };
            let z: Vec<Vec<Vec<f64>>> =
                run_stage2(&model, &layout, &thetas, &cfg).unwrap().into_iter().map(|d| d.z_samples).collect();
            (est, z)
        })
    };
    checks.push(("determinism under parallelism", run_in(1) == run_in(4)));

    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let pass = failed.is_empty();
    report(9, pass, &format!("{} checks, failed: {failed:?} (IF iid {if_iid:.3}, AR(1) {if_ar:.3})", checks.len()));
    assert!(pass);
}
