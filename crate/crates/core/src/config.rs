//! Experiment configuration documents.
//!
//! Configs are TOML with flat dotted sections. Matrices are row-major
//! nested lists. A minimal document:
//!
//! ```toml
//! seed = 42
//! tau = 1.0
//!
//! [payoff]
//! kind = "quadratic_bilinear"
//! a = [[1.0]]
//! b = [[1.0]]
//! c = [[0.5]]
//!
//! [algorithm]
//! eta = 0.001
//! n_particles = 512
//! steps = 20000
//! ```
//!
//! Defaults: `c`, `u`, `v` are zero; `checkpoint_every = max(1, steps/200)`;
//! every metric is enabled; the init is Gaussian around the warm-start
//! equilibrium point with covariance `(τ/L)·I`; output goes to `./out`.
//! Seeds are TOML integers, so they range over `0..=i64::MAX`.
//!
//! Several documents can be layered with [`parse_config_layers`]; later
//! documents override earlier ones key by key. This is how a `plan`
//! fragment is applied on top of a payoff config.

use std::collections::BTreeSet;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{AlgorithmParams, DriftMode};
use crate::error::{Error, Result};
use crate::payoff::{PayoffKind, PayoffSpec, Quadratic};

/// Metric columns that can be switched on or off.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `avg_mean_*` and `avg_cov_trace`.
    Moments,
    /// `kl_fit_to_eq`.
    Kl,
    /// `w2_fit_to_eq_sq`.
    W2,
    /// `grad_gap_bound`.
    GradGap,
    /// `coupling_dist_sq` (needs a `[coupled]` section).
    Coupling,
    /// `envelope_kl` and `bias_bound` (quadratic payoffs only).
    Envelope,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Moments,
        Metric::Kl,
        Metric::W2,
        Metric::GradGap,
        Metric::Coupling,
        Metric::Envelope,
    ];
}

/// Where the Gaussian initialization is centred.
#[derive(Clone, Debug, PartialEq)]
pub enum MeanMode {
    Zero,
    /// The equilibrium point found by [`crate::deterministic::solve_equilibrium`].
    WarmStart,
    /// An explicit `2d` vector `(x, y)`.
    Explicit(Vec<f64>),
}

/// How the initial particle configuration is produced.
#[derive(Clone, Debug, PartialEq)]
pub enum InitSpec {
    /// Particles i.i.d. `N(m, cov_scale·I)` on ℝ^{2d}.
    Gaussian { mean_mode: MeanMode, cov_scale: f64 },
    /// Load a particle snapshot.
    Snapshot(PathBuf),
}

/// Second system of a synchronous-coupling run.
#[derive(Clone, Debug, PartialEq)]
pub enum CoupledSpec {
    /// Independent initialization (drawn from separate noise streams).
    Init(InitSpec),
    /// The first system's initial state moved by `distance` along a random unit direction.
    Shift { distance: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Write a particle snapshot at every checkpoint.
    pub snapshots: bool,
}

/// A validated experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub payoff: PayoffSpec,
    pub tau: f64,
    pub algorithm: AlgorithmParams,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub metrics: BTreeSet<Metric>,
    pub init: InitSpec,
    pub coupled: Option<CoupledSpec>,
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn metric_enabled(&self, m: Metric) -> bool {
        self.metrics.contains(&m)
    }
}

// ---- document layer ----

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    seed: u64,
    tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    checkpoint_every: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metrics: Option<Vec<Metric>>,
    payoff: PayoffDoc,
    algorithm: AlgorithmDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    init: Option<InitDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coupled: Option<CoupledDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<OutputDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PayoffDoc {
    kind: PayoffKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frequency: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlgorithmDoc {
    eta: f64,
    n_particles: usize,
    steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    strict_eta: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    drift: Option<DriftMode>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum InitKind {
    Gaussian,
    Snapshot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum MeanModeDoc {
    Zero,
    WarmStart,
    Explicit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitDoc {
    kind: InitKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean_mode: Option<MeanModeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cov_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CoupledKind {
    Gaussian,
    Snapshot,
    Shift,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoupledDoc {
    kind: CoupledKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean_mode: Option<MeanModeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cov_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    snapshots: Option<bool>,
}

fn cfg_err(field: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {reason}"))
}

fn matrix(field: &str, rows: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(cfg_err(field, format!("expected a {d}x{d} row-major matrix")));
    }
    Ok(DMatrix::from_row_iterator(d, d, rows.iter().flatten().copied()))
}

fn vector(field: &str, v: &Option<Vec<f64>>, d: usize) -> Result<DVector<f64>> {
    match v {
        None => Ok(DVector::zeros(d)),
        Some(v) if v.len() == d => Ok(DVector::from_column_slice(v)),
        Some(v) => Err(cfg_err(field, format!("expected {d} entries, got {}", v.len()))),
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl PayoffDoc {
    fn build(&self) -> Result<PayoffSpec> {
        let d = self.dim.unwrap_or(self.a.len());
        if d == 0 {
            return Err(cfg_err("payoff.dim", "must be positive"));
        }
        let a = matrix("payoff.a", &self.a, d)?;
        let b = matrix("payoff.b", &self.b, d)?;
        let c = match &self.c {
            Some(rows) => matrix("payoff.c", rows, d)?,
            None => DMatrix::zeros(d, d),
        };
        let u = vector("payoff.u", &self.u, d)?;
        let v = vector("payoff.v", &self.v, d)?;
        let base = Quadratic::new(a, b, c, u, v)?;
        match self.kind {
            PayoffKind::QuadraticBilinear => {
                if self.amplitude.is_some() || self.frequency.is_some() {
                    return Err(cfg_err(
                        "payoff.amplitude",
                        "amplitude/frequency only apply to kind = \"perturbed_quadratic\"",
                    ));
                }
                Ok(PayoffSpec::quadratic(base))
            }
            PayoffKind::PerturbedQuadratic => {
                let amplitude = self
                    .amplitude
                    .ok_or_else(|| cfg_err("payoff.amplitude", "required for perturbed_quadratic"))?;
                let frequency = self
                    .frequency
                    .ok_or_else(|| cfg_err("payoff.frequency", "required for perturbed_quadratic"))?;
                PayoffSpec::perturbed(base, amplitude, frequency)
            }
        }
    }

    fn from_spec(spec: &PayoffSpec) -> Self {
        let q = spec.base();
        Self {
            kind: spec.kind(),
            dim: Some(spec.dim()),
            a: rows_of(q.a()),
            b: rows_of(q.b()),
            c: Some(rows_of(q.c())),
            u: Some(q.u().iter().copied().collect()),
            v: Some(q.v().iter().copied().collect()),
            amplitude: spec.frequency().map(|_| spec.amplitude()),
            frequency: spec.frequency(),
        }
    }
}

fn build_mean_mode(
    section: &str,
    mode: Option<MeanModeDoc>,
    mean: &Option<Vec<f64>>,
    d: usize,
) -> Result<MeanMode> {
    match (mode.unwrap_or(MeanModeDoc::WarmStart), mean) {
        (MeanModeDoc::Explicit, Some(m)) => {
            if m.len() != 2 * d {
                return Err(cfg_err(
                    &format!("{section}.mean"),
                    format!("expected {} entries (x then y), got {}", 2 * d, m.len()),
                ));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(cfg_err(&format!("{section}.mean"), "entries must be finite"));
            }
            Ok(MeanMode::Explicit(m.clone()))
        }
        (MeanModeDoc::Explicit, None) => Err(cfg_err(
            &format!("{section}.mean"),
            "required when mean_mode = \"explicit\"",
        )),
        (_, Some(_)) => Err(cfg_err(
            &format!("{section}.mean"),
            "only allowed when mean_mode = \"explicit\"",
        )),
        (MeanModeDoc::Zero, None) => Ok(MeanMode::Zero),
        (MeanModeDoc::WarmStart, None) => Ok(MeanMode::WarmStart),
    }
}

fn build_gaussian(
    section: &str,
    mode: Option<MeanModeDoc>,
    mean: &Option<Vec<f64>>,
    cov_scale: Option<f64>,
    default_cov: f64,
    d: usize,
) -> Result<InitSpec> {
    let mean_mode = build_mean_mode(section, mode, mean, d)?;
    let cov_scale = cov_scale.unwrap_or(default_cov);
    if !(cov_scale > 0.0 && cov_scale.is_finite()) {
        return Err(cfg_err(
            &format!("{section}.cov_scale"),
            format!("must be positive, got {cov_scale} (the default tau/L is zero when tau = 0)"),
        ));
    }
    Ok(InitSpec::Gaussian {
        mean_mode,
        cov_scale,
    })
}

fn mean_mode_doc(m: &MeanMode) -> (Option<MeanModeDoc>, Option<Vec<f64>>) {
    match m {
        MeanMode::Zero => (Some(MeanModeDoc::Zero), None),
        MeanMode::WarmStart => (Some(MeanModeDoc::WarmStart), None),
        MeanMode::Explicit(v) => (Some(MeanModeDoc::Explicit), Some(v.clone())),
    }
}

impl ConfigDoc {
    fn build(self) -> Result<ExperimentConfig> {
        let payoff = self.payoff.build()?;
        let constants = payoff.constants()?;
        let d = payoff.dim();
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(cfg_err("tau", format!("must be nonnegative, got {}", self.tau)));
        }
        let a = &self.algorithm;
        let algorithm = AlgorithmParams {
            eta: a.eta,
            tau: self.tau,
            n_particles: a.n_particles,
            steps: a.steps,
            strict_eta: a.strict_eta.unwrap_or(false),
            drift: a.drift.unwrap_or_default(),
        };
        algorithm.validate(&constants)?;
        let checkpoint_every = self
            .checkpoint_every
            .unwrap_or_else(|| (algorithm.steps / 200).max(1));
        if checkpoint_every == 0 {
            return Err(cfg_err("checkpoint_every", "must be at least 1"));
        }
        let metrics: BTreeSet<Metric> = match self.metrics {
            Some(list) => list.into_iter().collect(),
            None => Metric::ALL.into_iter().collect(),
        };
        let default_cov = self.tau / constants.smooth_l;
        let init = match self.init {
            None => build_gaussian("init", None, &None, None, default_cov, d)?,
            Some(doc) => match doc.kind {
                InitKind::Gaussian => {
                    if doc.path.is_some() {
                        return Err(cfg_err("init.path", "only allowed when kind = \"snapshot\""));
                    }
                    build_gaussian("init", doc.mean_mode, &doc.mean, doc.cov_scale, default_cov, d)?
                }
                InitKind::Snapshot => {
                    if doc.mean_mode.is_some() || doc.mean.is_some() || doc.cov_scale.is_some() {
                        return Err(cfg_err("init", "snapshot init takes only `path`"));
                    }
                    InitSpec::Snapshot(
                        doc.path
                            .ok_or_else(|| cfg_err("init.path", "required when kind = \"snapshot\""))?,
                    )
                }
            },
        };
        let coupled = match self.coupled {
            None => None,
            Some(doc) => Some(match doc.kind {
                CoupledKind::Shift => {
                    if doc.mean_mode.is_some() || doc.mean.is_some() || doc.cov_scale.is_some() || doc.path.is_some() {
                        return Err(cfg_err("coupled", "shift coupling takes only `distance`"));
                    }
                    let distance = doc
                        .distance
                        .ok_or_else(|| cfg_err("coupled.distance", "required when kind = \"shift\""))?;
                    if !(distance >= 0.0 && distance.is_finite()) {
                        return Err(cfg_err("coupled.distance", "must be finite and nonnegative"));
                    }
                    CoupledSpec::Shift { distance }
                }
                CoupledKind::Gaussian => {
                    if doc.distance.is_some() || doc.path.is_some() {
                        return Err(cfg_err("coupled", "gaussian coupling takes mean_mode, mean, cov_scale"));
                    }
                    CoupledSpec::Init(build_gaussian(
                        "coupled",
                        doc.mean_mode,
                        &doc.mean,
                        doc.cov_scale,
                        default_cov,
                        d,
                    )?)
                }
                CoupledKind::Snapshot => {
                    if doc.distance.is_some() || doc.mean_mode.is_some() || doc.mean.is_some() || doc.cov_scale.is_some() {
                        return Err(cfg_err("coupled", "snapshot coupling takes only `path`"));
                    }
                    CoupledSpec::Init(InitSpec::Snapshot(
                        doc.path
                            .ok_or_else(|| cfg_err("coupled.path", "required when kind = \"snapshot\""))?,
                    ))
                }
            }),
        };
        let output = OutputSpec {
            dir: self
                .output
                .as_ref()
                .and_then(|o| o.dir.clone())
                .unwrap_or_else(|| PathBuf::from("out")),
            snapshots: self.output.as_ref().and_then(|o| o.snapshots).unwrap_or(false),
        };
        Ok(ExperimentConfig {
            payoff,
            tau: self.tau,
            algorithm,
            seed: self.seed,
            checkpoint_every,
            metrics,
            init,
            coupled,
            output,
        })
    }

    fn from_config(cfg: &ExperimentConfig) -> Self {
        let init = match &cfg.init {
            InitSpec::Gaussian {
                mean_mode,
                cov_scale,
            } => {
                let (mode, mean) = mean_mode_doc(mean_mode);
                InitDoc {
                    kind: InitKind::Gaussian,
                    mean_mode: mode,
                    mean,
                    cov_scale: Some(*cov_scale),
                    path: None,
                }
            }
            InitSpec::Snapshot(p) => InitDoc {
                kind: InitKind::Snapshot,
                mean_mode: None,
                mean: None,
                cov_scale: None,
                path: Some(p.clone()),
            },
        };
        let coupled = cfg.coupled.as_ref().map(|c| match c {
            CoupledSpec::Shift { distance } => CoupledDoc {
                kind: CoupledKind::Shift,
                distance: Some(*distance),
                mean_mode: None,
                mean: None,
                cov_scale: None,
                path: None,
            },
            CoupledSpec::Init(InitSpec::Gaussian {
                mean_mode,
                cov_scale,
            }) => {
                let (mode, mean) = mean_mode_doc(mean_mode);
                CoupledDoc {
                    kind: CoupledKind::Gaussian,
                    distance: None,
                    mean_mode: mode,
                    mean,
                    cov_scale: Some(*cov_scale),
                    path: None,
                }
            }
            CoupledSpec::Init(InitSpec::Snapshot(p)) => CoupledDoc {
                kind: CoupledKind::Snapshot,
                distance: None,
                mean_mode: None,
                mean: None,
                cov_scale: None,
                path: Some(p.clone()),
            },
        });
        Self {
            seed: cfg.seed,
            tau: cfg.tau,
            checkpoint_every: Some(cfg.checkpoint_every),
            metrics: Some(cfg.metrics.iter().copied().collect()),
            payoff: PayoffDoc::from_spec(&cfg.payoff),
            algorithm: AlgorithmDoc {
                eta: cfg.algorithm.eta,
                n_particles: cfg.algorithm.n_particles,
                steps: cfg.algorithm.steps,
                strict_eta: Some(cfg.algorithm.strict_eta),
                drift: Some(cfg.algorithm.drift),
            },
            init: Some(init),
            coupled,
            output: Some(OutputDoc {
                dir: Some(cfg.output.dir.clone()),
                snapshots: Some(cfg.output.snapshots),
            }),
        }
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(e.to_string()))
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_layers(&[text])
}

/// Parses several documents, merging them key by key (later wins), then validates.
pub fn parse_config_layers(texts: &[&str]) -> Result<ExperimentConfig> {
    let mut table = toml::Table::new();
    for text in texts {
        merge(&mut table, parse_table(text)?);
    }
    let doc: ConfigDoc = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    doc.build()
}

/// Serializes a config so that [`parse_config`] reproduces it exactly.
///
/// TOML integers are signed 64-bit, so seeds above `i64::MAX` are rejected.
pub fn to_toml(cfg: &ExperimentConfig) -> Result<String> {
    if i64::try_from(cfg.seed).is_err() {
        return Err(cfg_err("seed", "must not exceed i64::MAX to be representable in TOML"));
    }
    toml::to_string(&ConfigDoc::from_config(cfg)).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7
tau = 1.0

[payoff]
kind = "quadratic_bilinear"
a = [[1.0]]
b = [[1.0]]
c = [[0.5]]

[algorithm]
eta = 0.001
n_particles = 16
steps = 1000
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.checkpoint_every, 5);
        assert_eq!(cfg.metrics.len(), Metric::ALL.len());
        let l = cfg.payoff.constants().unwrap().smooth_l;
        assert_eq!(
            cfg.init,
            InitSpec::Gaussian {
                mean_mode: MeanMode::WarmStart,
                cov_scale: 1.0 / l
            }
        );
        assert_eq!(cfg.output.dir, PathBuf::from("out"));
        assert!(!cfg.algorithm.strict_eta);
        assert_eq!(cfg.algorithm.drift, DriftMode::Pairwise);
        assert!(cfg.coupled.is_none());
    }

    #[test]
    fn short_runs_checkpoint_every_step() {
        let text = MINIMAL.replace("steps = 1000", "steps = 150");
        assert_eq!(parse_config(&text).unwrap().checkpoint_every, 1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("steps = 1000", "steps = 1000\nlearning_rate = 3");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("learning_rate"), "{err}");
        let text = format!("{MINIMAL}\n[extra]\nx = 1\n");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn strict_eta_violation_is_rejected() {
        // alpha = 1, L^2 = 1.25: alpha/(32 L^2) = 0.025 > alpha/(64 L^2)
        let text = MINIMAL.replace("eta = 0.001", "eta = 0.025\nstrict_eta = true");
        match parse_config(&text) {
            Err(Error::StepSizeRegime { bound_label, .. }) => assert_eq!(bound_label, "alpha/(64 L^2)"),
            other => panic!("expected regime error, got {other:?}"),
        }
        let text = MINIMAL.replace("eta = 0.001", "eta = 0.025");
        assert!(parse_config(&text).is_ok());
    }

    #[test]
    fn field_level_messages() {
        let text = MINIMAL.replace("c = [[0.5]]", "c = [[0.5, 1.0]]");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("payoff.c"), "{err}");
        let text = format!("{MINIMAL}\n[init]\nkind = \"gaussian\"\ncov_scale = -1.0\n");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("init.cov_scale"), "{err}");
        let text = MINIMAL.replace("a = [[1.0]]", "a = [[-1.0]]");
        assert!(matches!(parse_config(&text), Err(Error::InvalidPayoff(_))));
    }

    #[test]
    fn round_trip() {
        let text = format!(
            "{}\n[coupled]\nkind = \"shift\"\ndistance = 1.0\n[output]\ndir = \"runs/a\"\nsnapshots = true\n",
            MINIMAL.replace("kind = \"quadratic_bilinear\"", "kind = \"perturbed_quadratic\"\namplitude = 0.1\nfrequency = 1.0")
        );
        let cfg = parse_config(&text).unwrap();
        let again = parse_config(&to_toml(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn layers_override() {
        let overlay = "[algorithm]\neta = 0.002\nn_particles = 4\nsteps = 10\n";
        let cfg = parse_config_layers(&[MINIMAL, overlay]).unwrap();
        assert_eq!(cfg.algorithm.eta, 0.002);
        assert_eq!(cfg.algorithm.n_particles, 4);
        assert_eq!(cfg.payoff.dim(), 1);
    }

    #[test]
    fn explicit_mean_and_snapshot_init() {
        let text = format!("{MINIMAL}\n[init]\nkind = \"gaussian\"\nmean_mode = \"explicit\"\nmean = [1.0, 2.0]\n");
        let cfg = parse_config(&text).unwrap();
        assert!(matches!(cfg.init, InitSpec::Gaussian { mean_mode: MeanMode::Explicit(ref m), .. } if m == &vec![1.0, 2.0]));
        let text = format!("{MINIMAL}\n[init]\nkind = \"gaussian\"\nmean_mode = \"explicit\"\nmean = [1.0]\n");
        assert!(parse_config(&text).is_err());
        let text = format!("{MINIMAL}\n[init]\nkind = \"snapshot\"\npath = \"s.csv\"\n");
        assert_eq!(parse_config(&text).unwrap().init, InitSpec::Snapshot("s.csv".into()));
    }
}
