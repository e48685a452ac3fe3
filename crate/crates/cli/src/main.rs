use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lgcp_core::baselines::{initialize_from_map, min_contrast_zeta, run_baseline, BaselineKind};
use lgcp_core::diagnostics::{density_export, efficiency_report, summarize, write_summary_csv, Chain, ChainMeta};
use lgcp_core::latent::{mix_latent_posterior, run_stage2, write_cell_summary, write_draws};
use lgcp_core::moments::moments_to_mpln;
use lgcp_core::pm::run_amp;
use lgcp_core::simulate::{simulate_lgcp, LgcpModel};
use lgcp_core::{CoxMomentCalculator, Error, FitConfig, FitSetup, PointPattern};

#[derive(Parser)]
#[command(name = "lgcp", version, about = "Simulate and fit log Gaussian Cox processes")]
struct Cli {
    /// Overrides the seed of every stage in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a pattern from the config's `truth` section.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage one: pseudo-marginal chain over the parameters.
    FitAmp(FitArgs),
    /// Joint elliptical slice / Metropolis-Hastings sampler.
    FitEss(FitArgs),
    /// Joint preconditioned Langevin sampler.
    FitMmala(FitArgs),
    /// Stage two: latent field draws given a stage-one chain.
    Latent {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        pattern: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the pooled draws as a binary file.
        #[arg(long)]
        raw: bool,
    },
    /// Chain summaries, densities and efficiency; or surrogate moments at one θ.
    Diagnose {
        #[arg(long)]
        chain: Option<PathBuf>,
        /// Per-draw product of columns, e.g. "sigma2*phi". Repeatable.
        #[arg(long)]
        derived: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Wall time in seconds; read from run.json next to the chain when omitted.
        #[arg(long)]
        time: Option<f64>,
        #[arg(long, default_value_t = 512)]
        grid: usize,
        /// Natural-scale parameter values, comma separated; dumps moments.csv.
        #[arg(long, requires = "config")]
        theta: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        pattern: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    pattern: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct RunInfo {
    #[serde(flatten)]
    meta: ChainMeta,
    iterations: usize,
    time_per_iteration: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    burn_in_acceptance_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acceptance_rate_nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    zeta_init: Option<[f64; 2]>,
    config: FitConfig,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => 4,
        Error::NotPositiveDefinite
        | Error::MomentMismatch { .. }
        | Error::NoConvergence(_)
        | Error::Diverged(_)
        | Error::Overflow(_)
        | Error::TooShort { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> lgcp_core::Result<FitConfig> {
    let mut cfg = FitConfig::read(path)?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

fn load_pattern(path: &Path, cfg: &FitConfig) -> lgcp_core::Result<PointPattern> {
    PointPattern::read_csv(path, cfg.model.n_components)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> lgcp_core::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn run(cli: Cli) -> lgcp_core::Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let truth = cfg.truth.as_ref().ok_or_else(|| Error::Config("simulate needs a truth section".into()))?;
            let model = LgcpModel { covariates: cfg.covariates(config.parent())?, params: truth.to_params()? };
            let (pattern, field) = simulate_lgcp(&model, &cfg.domain, cfg.sim_grid, cfg.seed)?;
            fs::create_dir_all(&out)?;
            pattern.write_csv(out.join("pattern.csv"))?;
            field.write_csv(out.join("field.csv"))?;
            eprintln!("simulated {} points", pattern.len());
        }
        Command::FitAmp(args) => {
            let cfg = load_config(&args.config, cli.seed)?;
            let pattern = load_pattern(&args.pattern, &cfg)?;
            let setup = FitSetup::new(&cfg, &pattern, args.config.parent())?;
            let target = setup.amp_target(&cfg)?;
            let amp = run_amp(&target, setup.init.clone(), &cfg.amp_config())?;
            let chain = amp.to_chain(&setup.layout, "amp", cfg.seed);
            fs::create_dir_all(&args.out)?;
            chain.write_csv(args.out.join("chain.csv"))?;
            let info = RunInfo {
                iterations: chain.len(),
                time_per_iteration: amp.total_seconds / chain.len() as f64,
                meta: chain.meta.clone(),
                burn_in_acceptance_rate: Some(amp.burn_in_acceptance_rate),
                acceptance_rate_nu: None,
                zeta_init: None,
                config: cfg,
            };
            write_json(&args.out.join("run.json"), &info)?;
            eprintln!("acceptance rate {:.3}, {:.1} s", amp.acceptance_rate, amp.total_seconds);
        }
        Command::FitEss(args) => fit_baseline(BaselineKind::EssJoint, args, cli.seed)?,
        Command::FitMmala(args) => fit_baseline(BaselineKind::Mmala, args, cli.seed)?,
        Command::Latent { chain, pattern, config, out, raw } => {
            let cfg = load_config(&config, cli.seed)?;
            let pattern = load_pattern(&pattern, &cfg)?;
            let setup = FitSetup::new(&cfg, &pattern, config.parent())?;
            let chain = Chain::read_csv(&chain)?;
            if chain.names != setup.layout.names() {
                return Err(Error::Config(format!(
                    "chain columns {:?} do not match the model {:?}",
                    chain.names,
                    setup.layout.names()
                )));
            }
            let thetas =
                chain.draws.iter().map(|r| setup.layout.from_natural(r)).collect::<lgcp_core::Result<Vec<_>>>()?;
            let model = setup.grid_model(&pattern)?;
            let per_theta = run_stage2(&model, &setup.layout, &thetas, &cfg.stage2)?;
            let pooled = mix_latent_posterior(&per_theta)?;
            fs::create_dir_all(&out)?;
            write_cell_summary(out.join("cells.csv"), &model, &pooled)?;
            if raw {
                write_draws(out.join("draws.bin"), model.n_cells(), model.n_components, &pooled)?;
            }
            eprintln!("{} pooled draws from {} parameter values", pooled.len(), per_theta.len());
        }
        Command::Diagnose { chain, derived, out, time, grid, theta, config, pattern } => {
            fs::create_dir_all(&out)?;
            if let Some(values) = theta {
                let cfg = load_config(config.as_deref().expect("clap enforces --config"), cli.seed)?;
                dump_moments(&cfg, &values, config.as_deref().and_then(Path::parent), pattern.as_deref(), &out)?;
            }
            if let Some(path) = chain {
                diagnose_chain(&path, &derived, time, grid, &out)?;
            }
        }
    }
    Ok(())
}

fn fit_baseline(kind: BaselineKind, args: FitArgs, seed: Option<u64>) -> lgcp_core::Result<()> {
    let cfg = load_config(&args.config, seed)?;
    if cfg.model.n_components != 1 {
        return Err(Error::Config("the joint samplers support univariate models only".into()));
    }
    let pattern = load_pattern(&args.pattern, &cfg)?;
    let setup = FitSetup::new(&cfg, &pattern, args.config.parent())?;
    let model = setup.grid_model(&pattern)?;
    let zeta = match cfg.zeta_init {
        Some((s, p)) => [s, p],
        None => min_contrast_zeta(&pattern, &cfg.domain, &model, (cfg.prior.phi_lo, cfg.prior.phi_hi))?,
    };
    let init = initialize_from_map(&model, zeta, cfg.prior.beta_var, cfg.baseline.map_max_iter)?;
    let run = run_baseline(kind, &model, &cfg.prior, &init, &cfg.baseline)?;
    let name = match kind {
        BaselineKind::EssJoint => "ess",
        BaselineKind::Mmala => "mmala",
    };
    let chain = run.to_chain(name, cfg.baseline.seed, cfg.baseline.burn_in);
    fs::create_dir_all(&args.out)?;
    chain.write_csv(args.out.join("chain.csv"))?;
    let info = RunInfo {
        iterations: chain.len(),
        time_per_iteration: run.total_seconds / chain.len() as f64,
        meta: chain.meta.clone(),
        burn_in_acceptance_rate: None,
        acceptance_rate_nu: Some(run.acceptance_nu),
        zeta_init: Some(zeta),
        config: cfg,
    };
    write_json(&args.out.join("run.json"), &info)?;
    eprintln!(
        "acceptance rates: nu {:.3}, (beta, zeta) {:.3}, {:.1} s",
        run.acceptance_nu, run.acceptance_theta, run.total_seconds
    );
    Ok(())
}

fn diagnose_chain(
    path: &Path,
    derived: &[String],
    time: Option<f64>,
    grid: usize,
    out: &Path,
) -> lgcp_core::Result<()> {
    let chain = Chain::read_csv(path)?;
    let rows = summarize(&chain, derived)?;
    write_summary_csv(&rows, out.join("summary.csv"))?;
    let mut columns: Vec<(String, Vec<f64>)> =
        chain.names.iter().enumerate().map(|(j, n)| (n.clone(), chain.column(j))).collect();
    for d in derived {
        columns.push((d.clone(), chain.derived(d)?));
    }
    for (name, series) in &columns {
        let dens = density_export(series, grid)?;
        let mut w = csv::Writer::from_path(out.join(format!("density_{}.csv", name.replace('*', "_x_"))))?;
        w.write_record(["x", "density"])?;
        for (x, d) in dens {
            w.write_record([x.to_string(), d.to_string()])?;
        }
        w.flush()?;
    }
    let time = match time {
        Some(t) => Some(t),
        None => path
            .parent()
            .map(|d| d.join("run.json"))
            .filter(|p| p.exists())
            .map(|p| -> lgcp_core::Result<Option<f64>> {
                let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p)?)?;
                Ok(v.get("total_seconds").and_then(|t| t.as_f64()))
            })
            .transpose()?
            .flatten(),
    };
    match time {
        Some(t) => write_json(&out.join("efficiency.json"), &efficiency_report(&chain, t)?)?,
        None => eprintln!("no wall time available; efficiency.json not written"),
    }
    Ok(())
}

fn dump_moments(
    cfg: &FitConfig,
    values: &str,
    base: Option<&Path>,
    pattern: Option<&Path>,
    out: &Path,
) -> lgcp_core::Result<()> {
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad theta value {v}: {e}"))))
        .collect::<lgcp_core::Result<Vec<_>>>()?;
    let layout = cfg.layout()?;
    let params = layout.decode(&layout.from_natural(&values)?)?;
    let partition = cfg.partition()?;
    let calc = CoxMomentCalculator::new(&partition, &cfg.covariates(base)?)?;
    let moments = calc.compute(&params);
    let mpln = moments_to_mpln(&moments)?;
    let counts = match pattern {
        Some(p) => Some(lgcp_core::domain::count_points(&load_pattern(p, cfg)?, &partition).as_f64()),
        None => None,
    };
    let n = mpln.dim();
    let mut w = csv::Writer::from_path(out.join("moments.csv"))?;
    let mut header = vec!["index".to_string(), "alpha".into(), "mu".into()];
    if counts.is_some() {
        header.push("count".into());
    }
    header.extend((0..n).map(|j| format!("beta_{j}")));
    header.extend((0..n).map(|j| format!("sigma_{j}")));
    w.write_record(&header)?;
    for i in 0..n {
        let mut rec = vec![i.to_string(), moments.alpha[i].to_string(), mpln.mu[i].to_string()];
        if let Some(c) = &counts {
            rec.push(c[i].to_string());
        }
        rec.extend((0..n).map(|j| moments.beta[(i, j)].to_string()));
        rec.extend((0..n).map(|j| mpln.sigma[(i, j)].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
