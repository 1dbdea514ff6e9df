//! Randomized property suites for payoffs, drifts and the Gaussian oracles.
//!
//! Every suite draws its probes from [`NoiseRole::Probe`] streams keyed by
//! `(suite, sample)`, so a report is a pure function of its inputs and seed.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::deterministic::{gd_rate_audit, gd_step, grad_norm_sq, solve_equilibrium, JointPoint};
use crate::dynamics::{drift_map, drift_particles_with, DriftMode, ParticleState};
use crate::error::{Error, Result};
use crate::metrics::{gaussian_kl, gaussian_relative_fi, gaussian_w2};
use crate::oracle::{best_response_x, best_response_y, quadratic_equilibrium, quadratic_equilibrium_joint, GaussianDist};
use crate::payoff::{PayoffSpec, Quadratic, DEFAULT_FD_STEP};
use crate::rng::{KeyedNoise, NoiseRole, NoiseStream};

/// Outcome of one suite: `passed` iff `worst ≤ limit` over all samples.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub samples: usize,
    pub worst: f64,
    pub limit: f64,
    pub passed: bool,
}

impl CheckReport {
    fn new(name: &'static str, samples: usize, worst: f64, limit: f64) -> Self {
        Self {
            name,
            samples,
            worst,
            limit,
            passed: worst <= limit,
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<4} {:<22} samples={:<6} worst={:.6e} limit={:.6e}",
            if self.passed { "ok" } else { "FAIL" },
            self.name,
            self.samples,
            self.worst,
            self.limit
        )
    }
}

#[derive(Clone, Copy)]
enum Suite {
    Monotone = 1,
    Lipschitz,
    Contraction,
    Gradient,
    FixedPoint,
    Talagrand,
    LogSobolev,
    GdRate,
}

fn probe(seed: u64, suite: Suite, sample: usize) -> NoiseStream {
    KeyedNoise::new(seed).stream(NoiseRole::Probe, suite as u64, sample as u64)
}

fn normals(stream: &mut NoiseStream, n: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; n];
    stream.fill_standard_normal(&mut v);
    v.iter_mut().for_each(|x| *x *= scale);
    v
}

fn random_matrix(stream: &mut NoiseStream, n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_vec(n, n, normals(stream, n * n, scale))
}

fn random_spd(stream: &mut NoiseStream, n: usize, floor: f64) -> DMatrix<f64> {
    let g = random_matrix(stream, n, 1.0 / (n as f64).sqrt());
    &g * g.transpose() + DMatrix::identity(n, n) * floor
}

/// A random well-conditioned quadratic payoff of dimension `d`.
pub fn random_quadratic(stream: &mut NoiseStream, d: usize) -> Result<PayoffSpec> {
    let floor_a = 0.5 + stream.next_uniform();
    let a = random_spd(stream, d, floor_a);
    let floor_b = 0.5 + stream.next_uniform();
    let b = random_spd(stream, d, floor_b);
    let c = random_matrix(stream, d, 1.0);
    let u = DVector::from_vec(normals(stream, d, 1.0));
    let v = DVector::from_vec(normals(stream, d, 1.0));
    Ok(PayoffSpec::quadratic(Quadratic::new(a, b, c, u, v)?))
}

/// A random Gaussian on ℝᵐ with mean spread `mean_scale` around `center`.
pub fn random_gaussian(stream: &mut NoiseStream, center: &DVector<f64>, mean_scale: f64) -> Result<GaussianDist> {
    let m = center.len();
    let mean = center + DVector::from_vec(normals(stream, m, mean_scale));
    let floor = 0.05 + 0.5 * stream.next_uniform();
    let cov = random_spd(stream, m, floor);
    GaussianDist::new(mean, cov)
}

fn random_state(stream: &mut NoiseStream, n: usize, d: usize, scale: f64) -> Result<ParticleState> {
    let xs = normals(stream, n * d, scale);
    let ys = normals(stream, n * d, scale);
    ParticleState::new(n, d, xs, ys, 0)
}

/// A pair of states whose separation ranges over several orders of magnitude.
fn random_pair(stream: &mut NoiseStream, n: usize, d: usize) -> Result<(ParticleState, ParticleState)> {
    let a = random_state(stream, n, d, 3.0)?;
    let gap = 10f64.powf(-3.0 + 4.0 * stream.next_uniform());
    let delta = random_state(stream, n, d, gap)?;
    let b = ParticleState::from_joint(
        n,
        d,
        &a.joint().iter().zip(delta.joint()).map(|(p, q)| p + q).collect::<Vec<_>>(),
        0,
    )?;
    Ok((a, b))
}

fn drift_joint(spec: &PayoffSpec, s: &ParticleState) -> Result<Vec<f64>> {
    let (mut bx, by) = drift_particles_with(spec, s, DriftMode::Pairwise)?;
    bx.extend(by);
    Ok(bx)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// `⟨b(𝐳) − b(𝐳′), 𝐳 − 𝐳′⟩ ≤ −α‖𝐳 − 𝐳′‖²` over random pairs in ℝ^{2dN}.
///
/// Reports `max ⟨Δb, Δz⟩/‖Δz‖² + α`, which must not exceed `1e−10·α`.
pub fn monotonicity_probe(spec: &PayoffSpec, n_particles: usize, pairs: usize, seed: u64) -> Result<CheckReport> {
    let alpha = spec.constants()?.alpha;
    let mut worst = f64::NEG_INFINITY;
    for s in 0..pairs {
        let (a, b) = random_pair(&mut probe(seed, Suite::Monotone, s), n_particles, spec.dim())?;
        let dz = diff(&a.joint(), &b.joint());
        let db = diff(&drift_joint(spec, &a)?, &drift_joint(spec, &b)?);
        worst = worst.max(dot(&db, &dz) / dot(&dz, &dz) + alpha);
    }
    Ok(CheckReport::new("strong_monotonicity", pairs, worst, 1e-10 * alpha))
}

/// `‖b(𝐳) − b(𝐳′)‖ ≤ 2L‖𝐳 − 𝐳′‖`; reports the worst ratio.
pub fn lipschitz_probe(spec: &PayoffSpec, n_particles: usize, pairs: usize, seed: u64) -> Result<CheckReport> {
    let l = spec.constants()?.smooth_l;
    let mut worst: f64 = 0.0;
    for s in 0..pairs {
        let (a, b) = random_pair(&mut probe(seed, Suite::Lipschitz, s), n_particles, spec.dim())?;
        let dz = diff(&a.joint(), &b.joint());
        let db = diff(&drift_joint(spec, &a)?, &drift_joint(spec, &b)?);
        worst = worst.max((dot(&db, &db) / dot(&dz, &dz)).sqrt());
    }
    Ok(CheckReport::new("drift_lipschitz", pairs, worst, 2.0 * l * (1.0 + 1e-10)))
}

/// `‖G(𝐳) − G(𝐳′)‖/‖𝐳 − 𝐳′‖ ≤ M·(1 + 1e−10)` with `G = id + η·b`.
pub fn contraction_probe(
    spec: &PayoffSpec,
    eta: f64,
    n_particles: usize,
    pairs: usize,
    seed: u64,
) -> Result<CheckReport> {
    let m = spec.constants()?.contraction_factor(eta);
    let mut worst: f64 = 0.0;
    for s in 0..pairs {
        let (a, b) = random_pair(&mut probe(seed, Suite::Contraction, s), n_particles, spec.dim())?;
        let ga = drift_map(spec, &a, eta, DriftMode::Pairwise)?;
        let gb = drift_map(spec, &b, eta, DriftMode::Pairwise)?;
        worst = worst.max((ga.distance_sq(&gb)? / a.distance_sq(&b)?).sqrt());
    }
    Ok(CheckReport::new("one_step_contraction", pairs, worst, m * (1.0 + 1e-10)))
}

/// Finite-difference gradient check; tolerance `1e−8` for quadratic and
/// `1e−6` for perturbed payoffs.
pub fn gradient_check(spec: &PayoffSpec, points: usize, seed: u64) -> Result<CheckReport> {
    let d = spec.dim();
    let mut worst: f64 = 0.0;
    for s in 0..points {
        let mut st = probe(seed, Suite::Gradient, s);
        let x = normals(&mut st, d, 2.0);
        let y = normals(&mut st, d, 2.0);
        worst = worst.max(spec.check_gradient_fd(&x, &y, DEFAULT_FD_STEP)?);
    }
    let limit = if spec.is_quadratic() { 1e-8 } else { 1e-6 };
    Ok(CheckReport::new("gradient_fd", points, worst, limit))
}

/// The drift at the all-equilibrium configuration vanishes.
pub fn equilibrium_drift_check(spec: &PayoffSpec, n_particles: usize) -> Result<CheckReport> {
    let (z, _) = solve_equilibrium(spec, 1e-13, 1_000_000)?;
    let state = ParticleState::filled(n_particles, &z)?;
    let b = drift_joint(spec, &state)?;
    let worst = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = 1.0 + z.norm_sq().sqrt();
    Ok(CheckReport::new("zero_drift_at_equilibrium", 1, worst, 1e-11 * scale))
}

/// Gaussian best responses to `quadratic_equilibrium` return it unchanged
/// on `specs` random quadratic games; reports the largest entry residual.
pub fn fixed_point_check(d: usize, tau: f64, specs: usize, seed: u64) -> Result<CheckReport> {
    let mut worst: f64 = 0.0;
    for s in 0..specs {
        let spec = random_quadratic(&mut probe(seed, Suite::FixedPoint, s), d)?;
        let (nx, ny) = quadratic_equilibrium(&spec, tau)?;
        let bx = best_response_x(spec.base(), tau, &ny)?;
        let by = best_response_y(spec.base(), tau, &nx)?;
        for (p, q) in [(&bx, &nx), (&by, &ny)] {
            worst = worst
                .max((p.mean() - q.mean()).amax())
                .max((p.cov() - q.cov()).amax());
        }
    }
    Ok(CheckReport::new("best_response_fixed_point", specs, worst, 1e-12))
}

fn inequality_suite(
    spec: &PayoffSpec,
    tau: f64,
    pairs: usize,
    seed: u64,
    suite: Suite,
) -> Result<CheckReport> {
    let alpha = spec.constants()?.alpha;
    let nu = quadratic_equilibrium_joint(spec, tau)?;
    let mut worst = f64::NEG_INFINITY;
    for s in 0..pairs {
        let p = random_gaussian(&mut probe(seed, suite, s), nu.mean(), 1.0)?;
        let kl = gaussian_kl(&p, &nu)?;
        let (lhs, rhs) = match suite {
            Suite::Talagrand => (kl, alpha / (2.0 * tau) * gaussian_w2(&p, &nu)?),
            _ => (gaussian_relative_fi(&p, &nu)?, 2.0 * alpha / tau * kl),
        };
        worst = worst.max((rhs - lhs) / rhs.abs().max(1.0));
    }
    let name = match suite {
        Suite::Talagrand => "talagrand",
        _ => "log_sobolev",
    };
    Ok(CheckReport::new(name, pairs, worst, 1e-9))
}

/// `KL(p‖νᶻ) ≥ (α/2τ)·W₂²(p, νᶻ)` on random Gaussians `p`; reports the
/// largest normalized violation `(rhs − lhs)/max(1, rhs)`.
pub fn talagrand_check(spec: &PayoffSpec, tau: f64, pairs: usize, seed: u64) -> Result<CheckReport> {
    inequality_suite(spec, tau, pairs, seed, Suite::Talagrand)
}

/// `FI(p‖νᶻ) ≥ 2(α/τ)·KL(p‖νᶻ)` on random Gaussians `p`.
pub fn log_sobolev_check(spec: &PayoffSpec, tau: f64, pairs: usize, seed: u64) -> Result<CheckReport> {
    inequality_suite(spec, tau, pairs, seed, Suite::LogSobolev)
}

/// GD with `η = α/(4L²)` from `starts` random points stays under
/// `e^{−αηk}‖z_0 − z*‖²` for `steps` iterations; reports the worst ratio.
pub fn gd_rate_check(spec: &PayoffSpec, steps: usize, starts: usize, seed: u64) -> Result<CheckReport> {
    let eta = spec.constants()?.gd_eta();
    let mut worst: f64 = 0.0;
    let mut violated = false;
    for s in 0..starts {
        let mut st = probe(seed, Suite::GdRate, s);
        let d = spec.dim();
        let z0 = JointPoint::new(normals(&mut st, d, 3.0), normals(&mut st, d, 3.0))?;
        match gd_rate_audit(spec, &z0, eta, steps) {
            Ok(entries) => {
                for e in entries {
                    worst = worst.max(e.ratio());
                }
            }
            Err(Error::EnvelopeViolated { value, envelope, .. }) => {
                violated = true;
                worst = worst.max(value / envelope);
            }
            Err(e) => return Err(e),
        }
    }
    let limit = 1.0 + 1e-9;
    let mut report = CheckReport::new("gd_rate", starts, worst, limit);
    report.passed &= !violated;
    Ok(report)
}

/// `‖∇V(z_k)‖² ≤ e^{−αηk}‖∇V(z_0)‖²` along GD with `η = α/(16L²)`.
pub fn gd_gradient_decay_check(spec: &PayoffSpec, steps: usize, starts: usize, seed: u64) -> Result<CheckReport> {
    let c = spec.constants()?;
    let eta = c.alpha / (16.0 * c.smooth_l * c.smooth_l);
    let mut worst: f64 = 0.0;
    for s in 0..starts {
        let mut st = probe(seed, Suite::GdRate, starts + s);
        let d = spec.dim();
        let mut z = JointPoint::new(normals(&mut st, d, 3.0), normals(&mut st, d, 3.0))?;
        let g0 = grad_norm_sq(spec, &z)?;
        let floor = (64.0 * f64::EPSILON).powi(2) * (1.0 + g0);
        for k in 1..=steps {
            z = gd_step(spec, &z, eta)?;
            let envelope = (-c.alpha * eta * k as f64).exp() * g0;
            let g = grad_norm_sq(spec, &z)?;
            worst = worst.max((g - floor).max(0.0) / envelope);
        }
    }
    Ok(CheckReport::new("gd_gradient_decay", starts, worst, 1.0 + 1e-9))
}

/// Runs every suite that applies to `spec` at the documented sample counts.
pub fn run_all(spec: &PayoffSpec, tau: f64, seed: u64) -> Result<Vec<CheckReport>> {
    let c = spec.constants()?;
    let n = 8;
    let mut out = vec![
        monotonicity_probe(spec, n, 1000, seed)?,
        lipschitz_probe(spec, n, 1000, seed)?,
        contraction_probe(spec, c.strict_eta_limit(), n, 10_000, seed)?,
        gradient_check(spec, 100, seed)?,
        equilibrium_drift_check(spec, n)?,
        gd_rate_check(spec, 500, 4, seed)?,
        gd_gradient_decay_check(spec, 500, 4, seed)?,
    ];
    if tau > 0.0 {
        out.push(fixed_point_check(spec.dim(), tau, 20, seed)?);
        if spec.is_quadratic() {
            out.push(talagrand_check(spec, tau, 200, seed)?);
            out.push(log_sobolev_check(spec, tau, 200, seed)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> PayoffSpec {
        PayoffSpec::quadratic(Quadratic::isotropic(2, 1.0, 1.0, 0.5).unwrap())
    }

    fn perturbed() -> PayoffSpec {
        PayoffSpec::perturbed(Quadratic::isotropic(2, 1.0, 1.0, 0.5).unwrap(), 0.2, 1.0).unwrap()
    }

    #[test]
    fn suites_pass_on_both_families() {
        for spec in [quad(), perturbed()] {
            for r in run_all(&spec, 1.0, 11).unwrap() {
                assert!(r.passed, "{r}");
            }
        }
    }

    #[test]
    fn too_large_step_breaks_contraction_bound() {
        let spec = quad();
        let c = spec.constants().unwrap();
        let r = contraction_probe(&spec, 4.0 * c.alpha / (c.smooth_l * c.smooth_l), 2, 50, 1).unwrap();
        assert!(r.worst > 1.0);
    }

    #[test]
    fn reports_are_deterministic() {
        let spec = perturbed();
        assert_eq!(
            monotonicity_probe(&spec, 3, 50, 5).unwrap(),
            monotonicity_probe(&spec, 3, 50, 5).unwrap()
        );
    }
}
