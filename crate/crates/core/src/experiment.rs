//! Experiment orchestration: warm start, particle initialization, the run
//! itself, per-checkpoint metrics, and the CSV + manifest report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::DVector;
use serde::Serialize;

use crate::config::{self, CoupledSpec, ExperimentConfig, InitSpec, MeanMode, Metric};
use crate::deterministic::{duality_gap_bound, solve_equilibrium, JointPoint};
use crate::dynamics::{ParticleAlgorithm, ParticleState};
use crate::error::{Error, Result};
use crate::metrics::{fit_gaussian_rows, gaussian_kl, gaussian_w2, MetricsRecord};
use crate::oracle::{
    exact_equilibrium_variance, kl_bias_bound, laplace_proxy, plan_parameters, quadratic_equilibrium_joint,
    transient_kl_envelope, variance_and_fisher_bounds, GaussianDist, Plan, Regime,
    VarianceFisherBounds,
};
use crate::payoff::Constants;
use crate::rng::{KeyedNoise, NoiseRole};
use crate::snapshot::{self, fmt_f64};

/// Gradient-norm tolerance for the equilibrium point used as warm start and KL reference.
pub const EQUILIBRIUM_TOL: f64 = 1e-10;
/// Iteration cap for the equilibrium solve of perturbed payoffs.
pub const EQUILIBRIUM_MAX_ITERS: usize = 1_000_000;

pub const CSV_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SNAPSHOT_DIR: &str = "snapshots";

/// What the KL and W2 columns compare against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KlReference {
    /// The closed-form Gaussian equilibrium of a quadratic game.
    ExactEquilibrium,
    /// Gaussian proxy built from the curvature at the equilibrium point.
    GaussianProxy,
    /// No reference (zero temperature).
    None,
}

/// Everything a run needs before the first step.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub z_star: JointPoint,
    pub equilibrium_iters: usize,
    pub constants: Constants,
    pub reference: Option<GaussianDist>,
    pub kl_reference: KlReference,
    pub init: ParticleState,
    /// Law of one initial particle, when the init is Gaussian.
    pub init_law: Option<GaussianDist>,
    pub coupled_init: Option<ParticleState>,
}

fn gaussian_init(
    cfg: &ExperimentConfig,
    z_star: &JointPoint,
    mean_mode: &MeanMode,
    cov_scale: f64,
    roles: (NoiseRole, NoiseRole),
) -> Result<(ParticleState, GaussianDist)> {
    let d = cfg.payoff.dim();
    let n = cfg.algorithm.n_particles;
    let mean = match mean_mode {
        MeanMode::Zero => JointPoint::zeros(d),
        MeanMode::WarmStart => z_star.clone(),
        MeanMode::Explicit(m) => JointPoint::from_joint(m)?,
    };
    let noise = KeyedNoise::new(cfg.seed);
    let sd = cov_scale.sqrt();
    let mut xs = vec![0.0; n * d];
    let mut ys = vec![0.0; n * d];
    for i in 0..n {
        let row = i * d..(i + 1) * d;
        noise.stream(roles.0, i as u64, 0).fill_standard_normal(&mut xs[row.clone()]);
        noise.stream(roles.1, i as u64, 0).fill_standard_normal(&mut ys[row.clone()]);
        for (j, k) in row.enumerate() {
            xs[k] = mean.x[j] + sd * xs[k];
            ys[k] = mean.y[j] + sd * ys[k];
        }
    }
    let law = GaussianDist::isotropic(DVector::from_vec(mean.to_joint()), cov_scale)?;
    Ok((ParticleState::new(n, d, xs, ys, 0)?, law))
}

fn snapshot_init(cfg: &ExperimentConfig, path: &Path) -> Result<ParticleState> {
    let state = snapshot::read(path)?;
    let (n, d) = (cfg.algorithm.n_particles, cfg.payoff.dim());
    if state.n_particles() != n || state.dim() != d {
        return Err(Error::Snapshot {
            path: path.to_path_buf(),
            reason: format!(
                "holds {} particles of dimension {}, config expects {n} of dimension {d}",
                state.n_particles(),
                state.dim()
            ),
        });
    }
    Ok(state)
}

fn shifted(state: &ParticleState, distance: f64, seed: u64) -> Result<ParticleState> {
    let mut z = state.joint();
    let mut dir = vec![0.0; z.len()];
    let mut stream = KeyedNoise::new(seed).stream(NoiseRole::CoupledInitX, 0, 0);
    let norm = loop {
        stream.fill_standard_normal(&mut dir);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            break norm;
        }
    };
    for (v, u) in z.iter_mut().zip(&dir) {
        *v += distance * u / norm;
    }
    ParticleState::from_joint(state.n_particles(), state.dim(), &z, state.step)
}

/// Solves for the equilibrium point and builds the initial particle states.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let constants = cfg.payoff.constants()?;
    let (z_star, equilibrium_iters) = solve_equilibrium(&cfg.payoff, EQUILIBRIUM_TOL, EQUILIBRIUM_MAX_ITERS)?;
    let (reference, kl_reference) = if cfg.tau <= 0.0 {
        (None, KlReference::None)
    } else if cfg.payoff.is_quadratic() {
        (
            Some(quadratic_equilibrium_joint(&cfg.payoff, cfg.tau)?),
            KlReference::ExactEquilibrium,
        )
    } else {
        (
            Some(laplace_proxy(&cfg.payoff, cfg.tau, &z_star)?),
            KlReference::GaussianProxy,
        )
    };
    let (init, init_law) = match &cfg.init {
        InitSpec::Gaussian {
            mean_mode,
            cov_scale,
        } => {
            let (s, law) = gaussian_init(cfg, &z_star, mean_mode, *cov_scale, (NoiseRole::InitX, NoiseRole::InitY))?;
            (s, Some(law))
        }
        InitSpec::Snapshot(path) => (snapshot_init(cfg, path)?, None),
    };
    let coupled_init = match &cfg.coupled {
        None => None,
        Some(CoupledSpec::Shift { distance }) => Some(shifted(&init, *distance, cfg.seed)?),
        Some(CoupledSpec::Init(InitSpec::Gaussian {
            mean_mode,
            cov_scale,
        })) => Some(
            gaussian_init(
                cfg,
                &z_star,
                mean_mode,
                *cov_scale,
                (NoiseRole::CoupledInitX, NoiseRole::CoupledInitY),
            )?
            .0,
        ),
        Some(CoupledSpec::Init(InitSpec::Snapshot(path))) => {
            let mut s = snapshot_init(cfg, path)?;
            s.step = init.step;
            Some(s)
        }
    };
    Ok(Prepared {
        z_star,
        equilibrium_iters,
        constants,
        reference,
        kl_reference,
        init,
        init_law,
        coupled_init,
    })
}

/// Theory values attached to a run.
#[derive(Clone, Debug, Serialize)]
pub struct Theory {
    pub contraction_factor: f64,
    /// Exact equilibrium variance (quadratic payoffs).
    pub exact_variance: Option<f64>,
    pub bounds: Option<VarianceFisherBounds>,
    /// `kl_bias_bound` evaluated with the exact variance.
    pub bias_bound: Option<f64>,
    /// `N·KL(γ‖νᶻ)` for an i.i.d. Gaussian init.
    pub initial_kl: Option<f64>,
    /// `N·W₂²(γ, νᶻ)` for an i.i.d. Gaussian init.
    pub initial_w2_sq: Option<f64>,
    /// The recipe target `ε` whose step size equals the configured one, and its plan.
    pub plan_for_eta: Option<Plan>,
}

fn theory(cfg: &ExperimentConfig, prep: &Prepared) -> Result<Theory> {
    let c = prep.constants;
    let eta = cfg.algorithm.eta;
    let d = cfg.payoff.dim();
    let n = cfg.algorithm.n_particles as f64;
    let mut t = Theory {
        contraction_factor: c.contraction_factor(eta),
        exact_variance: None,
        bounds: None,
        bias_bound: None,
        initial_kl: None,
        initial_w2_sq: None,
        plan_for_eta: None,
    };
    if cfg.tau <= 0.0 {
        return Ok(t);
    }
    let regime = Regime::new(c, cfg.tau, d);
    t.bounds = Some(variance_and_fisher_bounds(&regime, prep.z_star.norm_sq())?);
    let eps = 7500.0 * regime.dim * c.smooth_l.powi(4) * eta / c.alpha.powi(3);
    t.plan_for_eta = plan_parameters(&regime, eps, prep.z_star.norm_sq()).ok();
    if cfg.payoff.is_quadratic() {
        let var = exact_equilibrium_variance(&cfg.payoff, cfg.tau)?;
        t.exact_variance = Some(var);
        t.bias_bound = Some(kl_bias_bound(&regime, n, eta, var));
        if let (Some(law), Some(nu)) = (&prep.init_law, &prep.reference) {
            t.initial_kl = Some(n * gaussian_kl(law, nu)?);
            t.initial_w2_sq = Some(n * gaussian_w2(law, nu)?);
        }
    }
    Ok(t)
}

/// Computes the metric row for one checkpoint.
pub fn measure(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    theory: &Theory,
    state: &ParticleState,
    coupled: Option<&ParticleState>,
    elapsed: f64,
) -> Result<MetricsRecord> {
    let n = state.n_particles();
    let m = 2 * state.dim();
    let rows = state.particle_rows();
    let on = |metric| cfg.metric_enabled(metric);
    let mut rec = MetricsRecord {
        step: state.step,
        wall_time: elapsed,
        avg_mean: None,
        avg_cov_trace: None,
        kl_fit_to_eq: None,
        w2_fit_to_eq_sq: None,
        grad_gap_bound: None,
        coupling_dist_sq: None,
        envelope_kl: None,
        bias_bound: None,
    };
    let mut mean = vec![0.0; m];
    for row in rows.chunks(m) {
        for (a, v) in mean.iter_mut().zip(row) {
            *a += v;
        }
    }
    for a in &mut mean {
        *a /= n as f64;
    }
    let fit = if n >= 2 { Some(fit_gaussian_rows(&rows, m)?) } else { None };
    if on(Metric::Moments) {
        rec.avg_mean = Some(mean.clone());
        rec.avg_cov_trace = fit.as_ref().map(|f| f.dist.cov_trace());
    }
    if let (Some(fit), Some(nu)) = (&fit, &prep.reference) {
        if on(Metric::Kl) {
            rec.kl_fit_to_eq = Some(gaussian_kl(&fit.dist, nu)?);
        }
        if on(Metric::W2) {
            rec.w2_fit_to_eq_sq = Some(gaussian_w2(&fit.dist, nu)?);
        }
    }
    if on(Metric::GradGap) {
        rec.grad_gap_bound = Some(duality_gap_bound(&cfg.payoff, &JointPoint::from_joint(&mean)?)?);
    }
    if on(Metric::Coupling) {
        if let Some(b) = coupled {
            rec.coupling_dist_sq = Some(state.distance_sq(b)?);
        }
    }
    if on(Metric::Envelope) {
        if let Some(bias) = theory.bias_bound {
            rec.bias_bound = Some(bias);
            if let (Some(kl0), Some(w0)) = (theory.initial_kl, theory.initial_w2_sq) {
                let regime = Regime::new(prep.constants, cfg.tau, cfg.payoff.dim());
                let k = (state.step - prep.init.step) as f64;
                rec.envelope_kl = Some(transient_kl_envelope(
                    &regime,
                    kl0,
                    w0,
                    cfg.algorithm.eta,
                    k,
                    n as f64,
                    bias,
                ));
            }
        }
    }
    Ok(rec)
}

/// CSV header for per-player dimension `d`.
pub fn csv_header(d: usize) -> String {
    let mut cols = vec!["step".to_string()];
    cols.extend((0..2 * d).map(|i| format!("avg_mean_{i}")));
    cols.extend(
        [
            "avg_cov_trace",
            "kl_fit_to_eq",
            "w2_fit_to_eq_sq",
            "grad_gap_bound",
            "coupling_dist_sq",
            "envelope_kl",
            "bias_bound",
        ]
        .map(String::from),
    );
    cols.join(",")
}

fn cell(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// One CSV row; disabled or undefined metrics are empty cells.
pub fn csv_row(rec: &MetricsRecord, d: usize) -> String {
    let mut cells = vec![rec.step.to_string()];
    match &rec.avg_mean {
        Some(m) => cells.extend(m.iter().map(|v| fmt_f64(*v))),
        None => cells.extend(std::iter::repeat_n(String::new(), 2 * d)),
    }
    cells.extend(
        [
            rec.avg_cov_trace,
            rec.kl_fit_to_eq,
            rec.w2_fit_to_eq_sq,
            rec.grad_gap_bound,
            rec.coupling_dist_sq,
            rec.envelope_kl,
            rec.bias_bound,
        ]
        .map(cell),
    );
    cells.join(",")
}

pub fn to_csv(records: &[MetricsRecord], d: usize) -> String {
    let mut out = csv_header(d);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", csv_row(r, d));
    }
    out
}

/// Outcome of [`run_experiment`].
#[derive(Clone, Debug)]
pub struct RunReport {
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
    pub records: Vec<MetricsRecord>,
    pub final_state: ParticleState,
    pub coupled_final: Option<ParticleState>,
    pub prepared: Prepared,
    pub theory: Theory,
}

#[derive(Serialize)]
struct RegimeChecks {
    eta: f64,
    strict_eta_limit: f64,
    stability_eta_limit: f64,
    gd_eta: f64,
    within_strict: bool,
    within_stability: bool,
    strict_eta_enforced: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    seed: u64,
    payoff_kind: crate::payoff::PayoffKind,
    dim: usize,
    constants: Constants,
    regime_checks: RegimeChecks,
    variance_reading: &'static str,
    kl_reference: KlReference,
    z_star: Vec<f64>,
    equilibrium_iters: usize,
    theory: &'a Theory,
    rows: usize,
    csv: &'static str,
    config: String,
    started_at_unix: f64,
    finished_at_unix: f64,
    wall_time_seconds: f64,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Runs the configured experiment and writes `metrics.csv` and
/// `manifest.json` (plus optional snapshots) under `cfg.output.dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let started_at = unix_now();
    let clock = Instant::now();
    let prep = prepare(cfg)?;
    let theory = theory(cfg, &prep)?;
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    if cfg.output.snapshots {
        fs::create_dir_all(dir.join(SNAPSHOT_DIR))?;
    }
    let alg = ParticleAlgorithm::new(&cfg.payoff, cfg.algorithm)?;
    let noise = KeyedNoise::new(cfg.seed);
    let mut a = prep.init.clone();
    let mut b = prep.coupled_init.clone();
    let mut records = Vec::new();
    let record = |a: &ParticleState, b: Option<&ParticleState>, records: &mut Vec<MetricsRecord>| -> Result<()> {
        records.push(measure(cfg, &prep, &theory, a, b, clock.elapsed().as_secs_f64())?);
        if cfg.output.snapshots {
            snapshot::write(&dir.join(SNAPSHOT_DIR).join(format!("step_{:010}.csv", a.step)), a)?;
        }
        Ok(())
    };
    record(&a, b.as_ref(), &mut records)?;
    let steps = cfg.algorithm.steps;
    for k in 1..=steps {
        a = alg.step(&a, &noise)?;
        if let Some(bs) = &b {
            b = Some(alg.step(bs, &noise)?);
        }
        if k % cfg.checkpoint_every == 0 || k == steps {
            log::debug!("checkpoint at step {k}");
            record(&a, b.as_ref(), &mut records)?;
        }
    }
    let csv_path = dir.join(CSV_FILE);
    fs::write(&csv_path, to_csv(&records, cfg.payoff.dim()))?;
    let c = prep.constants;
    let eta = cfg.algorithm.eta;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        payoff_kind: cfg.payoff.kind(),
        dim: cfg.payoff.dim(),
        constants: c,
        regime_checks: RegimeChecks {
            eta,
            strict_eta_limit: c.strict_eta_limit(),
            stability_eta_limit: c.stability_eta_limit(),
            gd_eta: c.gd_eta(),
            within_strict: eta <= c.strict_eta_limit(),
            within_stability: eta < c.stability_eta_limit(),
            strict_eta_enforced: cfg.algorithm.strict_eta,
        },
        variance_reading: if theory.exact_variance.is_some() {
            "exact"
        } else {
            "none"
        },
        kl_reference: prep.kl_reference,
        z_star: prep.z_star.to_joint(),
        equilibrium_iters: prep.equilibrium_iters,
        theory: &theory,
        rows: records.len(),
        csv: CSV_FILE,
        config: config::to_toml(cfg)?,
        started_at_unix: started_at,
        finished_at_unix: unix_now(),
        wall_time_seconds: clock.elapsed().as_secs_f64(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&manifest_path, json)?;
    log::info!("wrote {} rows to {}", records.len(), csv_path.display());
    Ok(RunReport {
        csv_path,
        manifest_path,
        records,
        final_state: a,
        coupled_final: b,
        prepared: prep,
        theory,
    })
}
