use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use minmax_langevin::checks::{self, CheckReport};
use minmax_langevin::config::{self, CoupledSpec, ExperimentConfig};
use minmax_langevin::deterministic::solve_equilibrium;
use minmax_langevin::experiment::{self, EQUILIBRIUM_MAX_ITERS, EQUILIBRIUM_TOL};
use minmax_langevin::oracle::{self, Plan, Regime};
use minmax_langevin::payoff::Constants;
use minmax_langevin::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_PROPERTY: u8 = 4;

#[derive(Parser)]
#[command(name = "minmax-langevin", version, about = "Finite-particle min-max Langevin dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file; repeat to layer overrides (later files win).
    #[arg(short, long = "config", required = true)]
    configs: Vec<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        load_layers(&self.configs)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Step size, particle count and iteration counts for a target accuracy.
    Plan(PlanArgs),
    /// Print the equilibrium point and, for quadratic payoffs, the equilibrium laws.
    Equilibrium(ConfigArgs),
    /// Run an experiment and write metrics.csv and manifest.json.
    Run(RunArgs),
    /// Run two synchronously coupled systems and verify the contraction rate.
    Couple(CoupleArgs),
    /// Run the randomized property suites on the configured payoff.
    Check(CheckArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct PlanArgs {
    /// Target average-particle KL accuracy.
    #[arg(long)]
    eps: f64,
    /// Take alpha, L, tau, d and the equilibrium norm from this config; the
    /// output is then that config with the plan applied.
    #[arg(short, long = "config")]
    configs: Vec<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "smooth-l")]
    smooth_l: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    /// Squared norm of the equilibrium point.
    #[arg(long, default_value_t = 0.0)]
    z_star_norm_sq: f64,
    /// Write the config (fragment) here instead of stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Override the output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Override the seed.
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,
}

#[derive(Args)]
struct CoupleArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Initial separation when the config has no `[coupled]` section.
    #[arg(long, default_value_t = 1.0)]
    distance: f64,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Seed for the probe streams (defaults to the config seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long)]
    seed: Option<u64>,
}

fn load_layers(paths: &[PathBuf]) -> anyhow::Result<ExperimentConfig> {
    let texts = paths
        .iter()
        .map(|p| fs::read_to_string(p).with_context(|| format!("reading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    Ok(config::parse_config_layers(&refs)?)
}

fn plan_fragment(plan: &Plan, tau: f64) -> String {
    let mut doc = toml::Table::new();
    doc.insert("tau".into(), tau.into());
    let mut alg = toml::Table::new();
    alg.insert("eta".into(), plan.eta.into());
    alg.insert("n_particles".into(), (plan.n_particles as i64).into());
    alg.insert("steps".into(), (plan.iters as i64).into());
    alg.insert("strict_eta".into(), true.into());
    doc.insert("algorithm".into(), alg.into());
    let mut init = toml::Table::new();
    init.insert("kind".into(), "gaussian".into());
    init.insert("mean_mode".into(), "warm_start".into());
    init.insert("cov_scale".into(), plan.init_cov_scale.into());
    doc.insert("init".into(), init.into());
    toml::to_string(&doc).expect("plan fragments always serialize")
}

fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_plan(args: &PlanArgs) -> anyhow::Result<()> {
    let (regime, z_sq, base) = if args.configs.is_empty() {
        let (Some(alpha), Some(smooth_l), Some(tau), Some(dim)) = (args.alpha, args.smooth_l, args.tau, args.dim) else {
            bail!(Error::Config(
                "plan needs --config, or all of --alpha, --smooth-l, --tau and --dim".into()
            ));
        };
        (Regime::new(Constants { alpha, smooth_l }, tau, dim), args.z_star_norm_sq, None)
    } else {
        let cfg = load_layers(&args.configs)?;
        let (z, _) = solve_equilibrium(&cfg.payoff, EQUILIBRIUM_TOL, EQUILIBRIUM_MAX_ITERS)?;
        let regime = Regime::new(cfg.payoff.constants()?, cfg.tau, cfg.payoff.dim());
        (regime, z.norm_sq(), Some(args.configs.clone()))
    };
    let plan = oracle::plan_parameters(&regime, args.eps, z_sq)?;
    eprintln!("eps            = {}", plan.eps);
    eprintln!("eta            = {:e}", plan.eta);
    eprintln!("n_particles    = {}", plan.n_particles);
    eprintln!("iters          = {}", plan.iters);
    eprintln!("gd_iters       = {}", plan.gd_iters);
    eprintln!("gd_eta         = {}", plan.gd_eta);
    eprintln!("init_cov_scale = {}", plan.init_cov_scale);
    let fragment = plan_fragment(&plan, regime.tau);
    let text = match base {
        None => fragment,
        Some(paths) => {
            let mut texts = paths
                .iter()
                .map(fs::read_to_string)
                .collect::<std::io::Result<Vec<_>>>()?;
            texts.push(fragment);
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            config::to_toml(&config::parse_config_layers(&refs)?)?
        }
    };
    emit(&text, args.out.as_deref())
}

fn fmt_vec(v: &[f64]) -> String {
    let cells: Vec<String> = v.iter().map(|x| format!("{x:.12}")).collect();
    format!("[{}]", cells.join(", "))
}

fn print_gaussian(name: &str, g: &oracle::GaussianDist) {
    println!("{name}.mean = {}", fmt_vec(g.mean().as_slice()));
    for (i, row) in g.cov().row_iter().enumerate() {
        let r: Vec<f64> = row.iter().copied().collect();
        println!("{name}.cov[{i}] = {}", fmt_vec(&r));
    }
}

fn cmd_equilibrium(args: &ConfigArgs) -> anyhow::Result<()> {
    let cfg = args.load()?;
    let (z, iters) = solve_equilibrium(&cfg.payoff, EQUILIBRIUM_TOL, EQUILIBRIUM_MAX_ITERS)?;
    let c = cfg.payoff.constants()?;
    println!("alpha = {}", c.alpha);
    println!("smooth_l = {}", c.smooth_l);
    println!("x* = {}", fmt_vec(&z.x));
    println!("y* = {}", fmt_vec(&z.y));
    println!("iterations = {iters}");
    if cfg.tau > 0.0 {
        if cfg.payoff.is_quadratic() {
            let (nx, ny) = oracle::quadratic_equilibrium(&cfg.payoff, cfg.tau)?;
            print_gaussian("nu_x", &nx);
            print_gaussian("nu_y", &ny);
        } else {
            println!("# non-quadratic payoff: Gaussian proxy from the curvature at z*");
            print_gaussian("proxy", &oracle::laplace_proxy(&cfg.payoff, cfg.tau, &z)?);
        }
    }
    Ok(())
}

fn apply_run_overrides(cfg: &mut ExperimentConfig, args: &RunArgs) {
    if let Some(dir) = &args.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<()> {
    let mut cfg = args.config.load()?;
    apply_run_overrides(&mut cfg, args);
    let report = experiment::run_experiment(&cfg)?;
    let last = report.records.last().expect("runs record step 0");
    println!("rows = {}", report.records.len());
    if let Some(kl) = last.kl_fit_to_eq {
        println!("final kl_fit_to_eq = {kl:e}");
    }
    if let Some(b) = last.bias_bound {
        println!("bias_bound = {b:e}");
    }
    println!("csv = {}", report.csv_path.display());
    println!("manifest = {}", report.manifest_path.display());
    Ok(())
}

fn cmd_couple(args: &CoupleArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = args.run.config.load()?;
    apply_run_overrides(&mut cfg, &args.run);
    if cfg.coupled.is_none() {
        cfg.coupled = Some(CoupledSpec::Shift {
            distance: args.distance,
        });
    }
    cfg.metrics.insert(config::Metric::Coupling);
    let report = experiment::run_experiment(&cfg)?;
    let m2 = report.theory.contraction_factor.powi(2);
    let mut ok = true;
    for w in report.records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (Some(da), Some(db)) = (a.coupling_dist_sq, b.coupling_dist_sq) else {
            continue;
        };
        let bound = m2.powf((b.step - a.step) as f64) * da * (1.0 + 1e-9);
        if db > bound {
            ok = false;
            eprintln!("step {}: coupling distance^2 {db:e} exceeds {bound:e}", b.step);
        }
    }
    let first = report.records.first().and_then(|r| r.coupling_dist_sq).unwrap_or(f64::NAN);
    let last = report.records.last().and_then(|r| r.coupling_dist_sq).unwrap_or(f64::NAN);
    println!("M^2 = {m2}");
    println!("initial distance^2 = {first:e}");
    println!("final distance^2 = {last:e}");
    println!("csv = {}", report.csv_path.display());
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_PROPERTY)
    })
}

fn print_reports(reports: &[CheckReport]) -> ExitCode {
    for r in reports {
        println!("{r}");
    }
    if reports.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_PROPERTY)
    }
}

fn cmd_check(args: &CheckArgs) -> anyhow::Result<ExitCode> {
    let cfg = args.config.load()?;
    let reports = checks::run_all(&cfg.payoff, cfg.tau, args.seed.unwrap_or(cfg.seed))?;
    Ok(print_reports(&reports))
}

fn cmd_gradcheck(args: &GradcheckArgs) -> anyhow::Result<ExitCode> {
    let cfg = args.config.load()?;
    let report = checks::gradient_check(&cfg.payoff, args.points, args.seed.unwrap_or(cfg.seed))?;
    Ok(print_reports(&[report]))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Divergence { .. }) => EXIT_DIVERGENCE,
        Some(
            Error::Config(_)
            | Error::InvalidParameter { .. }
            | Error::InvalidPayoff(_)
            | Error::StepSizeRegime { .. }
            | Error::DimensionMismatch { .. }
            | Error::Snapshot { .. },
        ) => EXIT_CONFIG,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Plan(a) => cmd_plan(a).map(|_| ExitCode::SUCCESS),
        Command::Equilibrium(a) => cmd_equilibrium(a).map(|_| ExitCode::SUCCESS),
        Command::Run(a) => cmd_run(a).map(|_| ExitCode::SUCCESS),
        Command::Couple(a) => cmd_couple(a),
        Command::Check(a) => cmd_check(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
