//! Finite-particle drift fields and the discrete-time min-max Langevin update.
//!
//! With `N` particle pairs `(xⁱ, yⁱ)` the drift is
//!
//! ```text
//! bXⁱ = −(1/N) Σⱼ ∇ₓV(xⁱ, yʲ)        bYⁱ = +(1/N) Σⱼ ∇ᵧV(xʲ, yⁱ)
//! ```
//!
//! and one step of the algorithm is
//!
//! ```text
//! xⁱ ← xⁱ + η·bXⁱ + √(2τη)·ζ^{x,i}      yⁱ ← yⁱ + η·bYⁱ + √(2τη)·ζ^{y,i}
//! ```
//!
//! Noise for particle `i` at step `k` is read from the stream keyed by
//! `(role, i, k)`, so a run is reproducible from its seed alone.

use serde::{Deserialize, Serialize};

use crate::deterministic::JointPoint;
use crate::error::{Error, Result};
use crate::payoff::{Constants, PayoffSpec};
use crate::rng::{KeyedNoise, NoiseRole, NoiseSource};

/// Joint particle configuration `(x¹..x^N, y¹..y^N)` at a given step.
///
/// `xs` and `ys` are `N×d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleState {
    n: usize,
    d: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    pub step: u64,
}

impl ParticleState {
    pub fn new(n: usize, d: usize, xs: Vec<f64>, ys: Vec<f64>, step: u64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::param("state", "N and d must be positive"));
        }
        if xs.len() != n * d {
            return Err(Error::dims("particle xs", n * d, xs.len()));
        }
        if ys.len() != n * d {
            return Err(Error::dims("particle ys", n * d, ys.len()));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::param("state", "entries must be finite"));
        }
        Ok(Self { n, d, xs, ys, step })
    }

    /// All `N` particles placed at `z`.
    pub fn filled(n: usize, z: &JointPoint) -> Result<Self> {
        let xs = z.x.iter().copied().cycle().take(n * z.dim()).collect();
        let ys = z.y.iter().copied().cycle().take(n * z.dim()).collect();
        Self::new(n, z.dim(), xs, ys, 0)
    }

    pub fn n_particles(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.d..(i + 1) * self.d]
    }

    pub fn y(&self, i: usize) -> &[f64] {
        &self.ys[i * self.d..(i + 1) * self.d]
    }

    /// Particle `i` as a point `zⁱ = (xⁱ, yⁱ) ∈ ℝ^{2d}`.
    pub fn particle(&self, i: usize) -> Vec<f64> {
        self.x(i).iter().chain(self.y(i)).copied().collect()
    }

    /// The joint vector `𝐳 = (𝐱, 𝐲) ∈ ℝ^{2dN}`.
    pub fn joint(&self) -> Vec<f64> {
        self.xs.iter().chain(&self.ys).copied().collect()
    }

    /// Rebuilds a state from a joint vector laid out as [`joint`](Self::joint).
    pub fn from_joint(n: usize, d: usize, z: &[f64], step: u64) -> Result<Self> {
        if z.len() != 2 * n * d {
            return Err(Error::dims("joint particle vector", 2 * n * d, z.len()));
        }
        Self::new(n, d, z[..n * d].to_vec(), z[n * d..].to_vec(), step)
    }

    fn check_same_shape(&self, other: &ParticleState) -> Result<()> {
        if self.n != other.n {
            return Err(Error::dims("particle count", self.n, other.n));
        }
        if self.d != other.d {
            return Err(Error::dims("particle dimension", self.d, other.d));
        }
        Ok(())
    }

    /// `‖𝐳 − 𝐳′‖²`.
    pub fn distance_sq(&self, other: &ParticleState) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .xs
            .iter()
            .chain(&self.ys)
            .zip(other.xs.iter().chain(&other.ys))
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    /// `‖𝐳 − 𝐳*‖²` with every particle compared against `z*`.
    pub fn distance_sq_to_point(&self, z: &JointPoint) -> Result<f64> {
        if z.dim() != self.d {
            return Err(Error::dims("equilibrium point", self.d, z.dim()));
        }
        let d = self.d;
        let mut acc = 0.0;
        for i in 0..self.n {
            for k in 0..d {
                acc += (self.xs[i * d + k] - z.x[k]).powi(2);
                acc += (self.ys[i * d + k] - z.y[k]).powi(2);
            }
        }
        Ok(acc)
    }

    /// `N × 2d` row-major matrix of particles `zⁱ = (xⁱ, yⁱ)`.
    pub fn particle_rows(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * 2 * self.d);
        for i in 0..self.n {
            out.extend_from_slice(self.x(i));
            out.extend_from_slice(self.y(i));
        }
        out
    }

    fn check_spec(&self, spec: &PayoffSpec) -> Result<()> {
        if spec.dim() != self.d {
            return Err(Error::dims("particle dimension vs payoff", spec.dim(), self.d));
        }
        Ok(())
    }
}

/// How the empirical-mean drift is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    /// Direct `O(N²d)` double loop, `j` summed in ascending order.
    #[default]
    Pairwise,
    /// `O(Nd²)` evaluation at the opponents' empirical mean.
    ///
    /// Both payoff families have `∇ₓV(x, ·)` and `∇ᵧV(·, y)` affine, so
    /// `(1/N)Σⱼ∇ₓV(xⁱ, yʲ) = ∇ₓV(xⁱ, ȳ)` exactly in real arithmetic. Results
    /// agree with [`Pairwise`](Self::Pairwise) up to rounding.
    OpponentMean,
}

/// Step size, regularization, particle count and run length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmParams {
    pub eta: f64,
    /// `τ = 0` switches off the noise and is allowed as a deterministic test mode.
    pub tau: f64,
    pub n_particles: usize,
    pub steps: u64,
    /// Enforce `η ≤ α/(64L²)`, the regime of the finite-particle guarantee.
    pub strict_eta: bool,
    pub drift: DriftMode,
}

impl AlgorithmParams {
    pub fn new(eta: f64, tau: f64, n_particles: usize, steps: u64) -> Self {
        Self {
            eta,
            tau,
            n_particles,
            steps,
            strict_eta: false,
            drift: DriftMode::Pairwise,
        }
    }

    pub fn with_strict_eta(mut self, strict: bool) -> Self {
        self.strict_eta = strict;
        self
    }

    pub fn with_drift(mut self, drift: DriftMode) -> Self {
        self.drift = drift;
        self
    }

    /// Noise scale `√(2τη)`.
    pub fn noise_scale(&self) -> f64 {
        (2.0 * self.tau * self.eta).sqrt()
    }

    /// Checks the parameter invariants against the payoff constants.
    pub fn validate(&self, constants: &Constants) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::param("algorithm.eta", format!("must be positive, got {}", self.eta)));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::param("tau", format!("must be nonnegative, got {}", self.tau)));
        }
        if self.n_particles == 0 {
            return Err(Error::param("algorithm.n_particles", "must be at least 1"));
        }
        if self.strict_eta && self.eta > constants.strict_eta_limit() {
            return Err(Error::StepSizeRegime {
                eta: self.eta,
                bound: constants.strict_eta_limit(),
                bound_label: "alpha/(64 L^2)",
                regime: "strict_eta requires the step-size regime of the finite-particle convergence guarantee",
            });
        }
        if self.eta >= constants.stability_eta_limit() {
            return Err(Error::StepSizeRegime {
                eta: self.eta,
                bound: constants.stability_eta_limit(),
                bound_label: "alpha/(2 L^2)",
                regime: "the second moment of the particle algorithm is only controlled below this",
            });
        }
        Ok(())
    }
}

/// Pairwise drift `(bX, bY)`, each `N×d` row-major.
pub fn drift_particles(spec: &PayoffSpec, state: &ParticleState) -> Result<(Vec<f64>, Vec<f64>)> {
    drift_particles_with(spec, state, DriftMode::Pairwise)
}

/// Drift `(bX, bY)` evaluated with the given strategy.
pub fn drift_particles_with(
    spec: &PayoffSpec,
    state: &ParticleState,
    mode: DriftMode,
) -> Result<(Vec<f64>, Vec<f64>)> {
    state.check_spec(spec)?;
    let mut bx = vec![0.0; state.n * state.d];
    let mut by = vec![0.0; state.n * state.d];
    fill_drift(spec, state, mode, &mut bx, &mut by);
    Ok((bx, by))
}

fn fill_drift(spec: &PayoffSpec, state: &ParticleState, mode: DriftMode, bx: &mut [f64], by: &mut [f64]) {
    let (n, d) = (state.n, state.d);
    let inv_count = n as f64;
    match mode {
        DriftMode::Pairwise => {
            let mut g = vec![0.0; d];
            for i in 0..n {
                let out = &mut bx[i * d..(i + 1) * d];
                out.fill(0.0);
                let xi = state.x(i);
                for j in 0..n {
                    spec.grad_x_into(xi, state.y(j), &mut g);
                    for (o, gk) in out.iter_mut().zip(&g) {
                        *o += gk;
                    }
                }
                for o in out.iter_mut() {
                    *o = -(*o / inv_count);
                }
            }
            for i in 0..n {
                let out = &mut by[i * d..(i + 1) * d];
                out.fill(0.0);
                let yi = state.y(i);
                for j in 0..n {
                    spec.grad_y_into(state.x(j), yi, &mut g);
                    for (o, gk) in out.iter_mut().zip(&g) {
                        *o += gk;
                    }
                }
                for o in out.iter_mut() {
                    *o /= inv_count;
                }
            }
        }
        DriftMode::OpponentMean => {
            let mut x_mean = vec![0.0; d];
            let mut y_mean = vec![0.0; d];
            for j in 0..n {
                for k in 0..d {
                    x_mean[k] += state.xs[j * d + k];
                    y_mean[k] += state.ys[j * d + k];
                }
            }
            for k in 0..d {
                x_mean[k] /= inv_count;
                y_mean[k] /= inv_count;
            }
            for i in 0..n {
                let out = &mut bx[i * d..(i + 1) * d];
                spec.grad_x_into(state.x(i), &y_mean, out);
                for o in out.iter_mut() {
                    *o = -*o;
                }
                spec.grad_y_into(&x_mean, state.y(i), &mut by[i * d..(i + 1) * d]);
            }
        }
    }
}

/// The deterministic half-step `G(𝐳) = 𝐳 + η·b^Z(𝐳)`.
pub fn drift_map(spec: &PayoffSpec, state: &ParticleState, eta: f64, mode: DriftMode) -> Result<ParticleState> {
    let (bx, by) = drift_particles_with(spec, state, mode)?;
    let xs = state.xs.iter().zip(&bx).map(|(x, b)| x + eta * b).collect();
    let ys = state.ys.iter().zip(&by).map(|(y, b)| y + eta * b).collect();
    Ok(ParticleState {
        n: state.n,
        d: state.d,
        xs,
        ys,
        step: state.step,
    })
}

/// A validated `(payoff, params)` pair that advances particle states.
#[derive(Clone, Debug)]
pub struct ParticleAlgorithm<'a> {
    spec: &'a PayoffSpec,
    params: AlgorithmParams,
    constants: Constants,
    noise_scale: f64,
}

impl<'a> ParticleAlgorithm<'a> {
    pub fn new(spec: &'a PayoffSpec, params: AlgorithmParams) -> Result<Self> {
        let constants = spec.constants()?;
        params.validate(&constants)?;
        Ok(Self {
            spec,
            params,
            constants,
            noise_scale: params.noise_scale(),
        })
    }

    pub fn params(&self) -> &AlgorithmParams {
        &self.params
    }

    pub fn constants(&self) -> &Constants {
        &self.constants
    }

    /// One update `𝐳_{k+1} = G(𝐳_k) + √(2τη)·ζ_k`.
    pub fn step<S: NoiseSource>(&self, state: &ParticleState, noise: &S) -> Result<ParticleState> {
        state.check_spec(self.spec)?;
        if state.n != self.params.n_particles {
            return Err(Error::dims("particle count", self.params.n_particles, state.n));
        }
        let (n, d) = (state.n, state.d);
        let mut bx = vec![0.0; n * d];
        let mut by = vec![0.0; n * d];
        fill_drift(self.spec, state, self.params.drift, &mut bx, &mut by);
        let next_step = state.step + 1;
        if bx.iter().chain(&by).any(|b| !b.is_finite()) {
            return Err(Error::Divergence { step: next_step });
        }
        let eta = self.params.eta;
        let mut xs: Vec<f64> = state.xs.iter().zip(&bx).map(|(x, b)| x + eta * b).collect();
        let mut ys: Vec<f64> = state.ys.iter().zip(&by).map(|(y, b)| y + eta * b).collect();
        if self.params.tau > 0.0 {
            let mut zeta = vec![0.0; d];
            let s = self.noise_scale;
            for i in 0..n {
                noise.fill(NoiseRole::ParticleX, i, state.step, &mut zeta);
                for (x, z) in xs[i * d..(i + 1) * d].iter_mut().zip(&zeta) {
                    *x += s * z;
                }
                noise.fill(NoiseRole::ParticleY, i, state.step, &mut zeta);
                for (y, z) in ys[i * d..(i + 1) * d].iter_mut().zip(&zeta) {
                    *y += s * z;
                }
            }
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: next_step });
        }
        Ok(ParticleState {
            n,
            d,
            xs,
            ys,
            step: next_step,
        })
    }

    /// Runs `params.steps` updates, calling `observe` at step 0, every
    /// `checkpoint_every` steps, and at the final step.
    pub fn run<S, T, F>(
        &self,
        init: &ParticleState,
        noise: &S,
        checkpoint_every: u64,
        mut observe: F,
    ) -> Result<RunOutput<T>>
    where
        S: NoiseSource,
        F: FnMut(&ParticleState) -> Result<T>,
    {
        if checkpoint_every == 0 {
            return Err(Error::param("checkpoint_every", "must be at least 1"));
        }
        let mut state = init.clone();
        let mut checkpoints = vec![observe(&state)?];
        for k in 1..=self.params.steps {
            state = self.step(&state, noise)?;
            if k % checkpoint_every == 0 || k == self.params.steps {
                checkpoints.push(observe(&state)?);
            }
        }
        Ok(RunOutput {
            checkpoints,
            final_state: state,
        })
    }
}

/// Checkpoints of a run plus its final state.
#[derive(Clone, Debug)]
pub struct RunOutput<T> {
    pub checkpoints: Vec<T>,
    pub final_state: ParticleState,
}

/// Number of checkpoints a run of `steps` steps records at cadence `every`.
pub fn checkpoint_count(steps: u64, every: u64) -> usize {
    let on_cadence = steps / every;
    let extra = u64::from(!steps.is_multiple_of(every));
    (1 + on_cadence + extra) as usize
}

/// One update of the particle algorithm.
pub fn step_algorithm<S: NoiseSource>(
    spec: &PayoffSpec,
    state: &ParticleState,
    params: &AlgorithmParams,
    noise: &S,
) -> Result<ParticleState> {
    ParticleAlgorithm::new(spec, *params)?.step(state, noise)
}

/// A recorded checkpoint of [`run_algorithm`].
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub state: ParticleState,
}

/// Runs the particle algorithm with keyed noise from `seed`, keeping full
/// snapshots at the checkpoint cadence (step 0 and the final step included).
pub fn run_algorithm(
    spec: &PayoffSpec,
    init: &ParticleState,
    params: &AlgorithmParams,
    seed: u64,
    checkpoint_every: u64,
) -> Result<RunOutput<Checkpoint>> {
    let alg = ParticleAlgorithm::new(spec, *params)?;
    alg.run(init, &KeyedNoise::new(seed), checkpoint_every, |s| {
        Ok(Checkpoint {
            step: s.step,
            state: s.clone(),
        })
    })
}

/// Runs two systems with identical noise and returns `‖𝐳ᴬ_k − 𝐳ᴮ_k‖²` for
/// `k = 0..=steps`.
///
/// Requires `η < α/(2L²)`, where the one-step drift map contracts with
/// factor `M = √(1 − 2ηα + 4η²L²)`.
pub fn coupled_contraction_run(
    spec: &PayoffSpec,
    init_a: &ParticleState,
    init_b: &ParticleState,
    params: &AlgorithmParams,
    seed: u64,
) -> Result<Vec<f64>> {
    init_a.check_same_shape(init_b)?;
    let alg = ParticleAlgorithm::new(spec, *params)?;
    let noise = KeyedNoise::new(seed);
    let mut a = init_a.clone();
    let mut b = init_b.clone();
    b.step = a.step;
    let mut out = Vec::with_capacity(params.steps as usize + 1);
    out.push(a.distance_sq(&b)?);
    for _ in 0..params.steps {
        a = alg.step(&a, &noise)?;
        b = alg.step(&b, &noise)?;
        out.push(a.distance_sq(&b)?);
    }
    Ok(out)
}
