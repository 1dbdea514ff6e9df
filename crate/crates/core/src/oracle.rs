//! Closed-form equilibria for quadratic payoffs and the theory-bound calculators.
//!
//! For quadratic `V`, the best response to any Gaussian opponent is Gaussian:
//!
//! ```text
//! Φˣ(ρʸ) ∝ exp(−τ⁻¹ E_ρʸ[V(x, Y)]) = N(−A⁻¹(C·E[Y] + u), τA⁻¹)
//! Φʸ(ρˣ) ∝ exp(+τ⁻¹ E_ρˣ[V(X, y)]) = N( B⁻¹(Cᵀ·E[X] + v), τB⁻¹)
//! ```
//!
//! so the equilibrium is `νˣ = N(x*, τA⁻¹)`, `νʸ = N(y*, τB⁻¹)`.
//!
//! The bound constants (45, 2475, 7500, 270, 684, 9) come from worst-case
//! proofs and are far from tight; all envelopes here are one-sided.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::deterministic::{solve_equilibrium, JointPoint};
use crate::error::{Error, Result};
use crate::linalg;
use crate::payoff::{Constants, PayoffSpec, Quadratic};

/// A Gaussian `N(mean, cov)` on ℝᵐ.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

const PSD_TOL: f64 = 1e-12;

impl GaussianDist {
    /// Validates that `cov` is `m×m`, symmetric and positive semidefinite.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if cov.nrows() != m || cov.ncols() != m {
            return Err(Error::dims("gaussian covariance", m, cov.nrows()));
        }
        if !linalg::is_symmetric(&cov, 1e-10) {
            return Err(Error::param("cov", "covariance must be symmetric"));
        }
        let cov = linalg::symmetrize(&cov);
        if m > 0 && linalg::min_eigenvalue(&cov) < -PSD_TOL * cov.amax().max(1.0) {
            return Err(Error::param("cov", "covariance must be positive semidefinite"));
        }
        Ok(Self { mean, cov })
    }

    /// `N(mean, scale·I)`.
    pub fn isotropic(mean: DVector<f64>, scale: f64) -> Result<Self> {
        if !(scale >= 0.0) {
            return Err(Error::param("scale", format!("must be nonnegative, got {scale}")));
        }
        let m = mean.len();
        Self::new(mean, DMatrix::identity(m, m) * scale)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn cov_trace(&self) -> f64 {
        self.cov.trace()
    }

    /// Independent product `self ⊗ other` on ℝ^{m+m′}.
    pub fn product(&self, other: &GaussianDist) -> GaussianDist {
        let mean = DVector::from_iterator(
            self.dim() + other.dim(),
            self.mean.iter().chain(other.mean.iter()).copied(),
        );
        GaussianDist {
            mean,
            cov: linalg::block_diag(&self.cov, &other.cov),
        }
    }

    /// Image under `z ↦ Tz + b`.
    pub fn affine_image(&self, t: &DMatrix<f64>, b: &DVector<f64>) -> Result<GaussianDist> {
        if t.ncols() != self.dim() || t.nrows() != b.len() {
            return Err(Error::dims("affine map", self.dim(), t.ncols()));
        }
        GaussianDist::new(t * &self.mean + b, t * &self.cov * t.transpose())
    }
}

fn spd_solve(m: &DMatrix<f64>, rhs: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))?;
    Ok(chol.solve(rhs))
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::param("tau", format!("must be positive, got {tau}")));
    }
    Ok(())
}

fn check_player(q: &Quadratic, rho: &GaussianDist) -> Result<()> {
    if rho.dim() != q.dim() {
        return Err(Error::dims("opponent distribution", q.dim(), rho.dim()));
    }
    Ok(())
}

/// `Φˣ(ρʸ) = N(−A⁻¹(C·E[Y] + u), τA⁻¹)`.
pub fn best_response_x(q: &Quadratic, tau: f64, rho_y: &GaussianDist) -> Result<GaussianDist> {
    check_tau(tau)?;
    check_player(q, rho_y)?;
    let rhs = -(q.c() * rho_y.mean() + q.u());
    let mean = spd_solve(q.a(), &rhs, "A")?;
    let (a_inv, _) = linalg::spd_inverse_logdet(q.a(), "A")?;
    GaussianDist::new(mean, a_inv * tau)
}

/// `Φʸ(ρˣ) = N(B⁻¹(Cᵀ·E[X] + v), τB⁻¹)`.
pub fn best_response_y(q: &Quadratic, tau: f64, rho_x: &GaussianDist) -> Result<GaussianDist> {
    check_tau(tau)?;
    check_player(q, rho_x)?;
    let rhs = q.c().transpose() * rho_x.mean() + q.v();
    let mean = spd_solve(q.b(), &rhs, "B")?;
    let (b_inv, _) = linalg::spd_inverse_logdet(q.b(), "B")?;
    GaussianDist::new(mean, b_inv * tau)
}

fn require_quadratic(spec: &PayoffSpec) -> Result<&Quadratic> {
    if !spec.is_quadratic() {
        return Err(Error::InvalidPayoff(
            "closed-form equilibrium requires a quadratic_bilinear payoff".into(),
        ));
    }
    Ok(spec.base())
}

/// Equilibrium `(νˣ, νʸ) = (N(x*, τA⁻¹), N(y*, τB⁻¹))` of a quadratic game.
pub fn quadratic_equilibrium(spec: &PayoffSpec, tau: f64) -> Result<(GaussianDist, GaussianDist)> {
    let q = require_quadratic(spec)?;
    check_tau(tau)?;
    let (z, _) = solve_equilibrium(spec, 1e-12, 1)?;
    let (a_inv, _) = linalg::spd_inverse_logdet(q.a(), "A")?;
    let (b_inv, _) = linalg::spd_inverse_logdet(q.b(), "B")?;
    Ok((
        GaussianDist::new(DVector::from_vec(z.x), a_inv * tau)?,
        GaussianDist::new(DVector::from_vec(z.y), b_inv * tau)?,
    ))
}

/// `νᶻ = νˣ ⊗ νʸ` on ℝ^{2d}.
pub fn quadratic_equilibrium_joint(spec: &PayoffSpec, tau: f64) -> Result<GaussianDist> {
    let (nx, ny) = quadratic_equilibrium(spec, tau)?;
    Ok(nx.product(&ny))
}

/// `Var_νᶻ = τ(tr A⁻¹ + tr B⁻¹)`, the exact equilibrium variance of a quadratic game.
pub fn exact_equilibrium_variance(spec: &PayoffSpec, tau: f64) -> Result<f64> {
    Ok(quadratic_equilibrium_joint(spec, tau)?.cov_trace())
}

/// Gaussian stand-in for the non-Gaussian equilibrium of a perturbed payoff:
/// `N(z*, τ·diag(∇²ₓₓV(z*)⁻¹, (−∇²ᵧᵧV(z*))⁻¹))`. Exact for quadratic payoffs.
pub fn laplace_proxy(spec: &PayoffSpec, tau: f64, z_star: &JointPoint) -> Result<GaussianDist> {
    check_tau(tau)?;
    let (hxx, hyy) = spec.curvature_blocks(&z_star.x, &z_star.y)?;
    let (hx_inv, _) = linalg::spd_inverse_logdet(&hxx, "x curvature block")?;
    let (hy_inv, _) = linalg::spd_inverse_logdet(&hyy, "y curvature block")?;
    let nx = GaussianDist::new(DVector::from_vec(z_star.x.clone()), hx_inv * tau)?;
    let ny = GaussianDist::new(DVector::from_vec(z_star.y.clone()), hy_inv * tau)?;
    Ok(nx.product(&ny))
}

/// Problem constants shared by the bound calculators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub alpha: f64,
    pub smooth_l: f64,
    pub tau: f64,
    /// Per-player dimension `d`.
    pub dim: f64,
}

impl Regime {
    pub fn new(constants: Constants, tau: f64, dim: usize) -> Self {
        Self {
            alpha: constants.alpha,
            smooth_l: constants.smooth_l,
            tau,
            dim: dim as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("L", self.smooth_l),
            ("tau", self.tau),
            ("d", self.dim),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Step size, particle count and iteration counts that drive the
/// average-particle KL below a target `ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub eps: f64,
    pub eta: f64,
    pub n_particles: u64,
    pub iters: u64,
    pub gd_iters: u64,
    pub gd_eta: f64,
    pub init_cov_scale: f64,
}

/// Ceiling that ignores rounding noise within `1e−12` relative of an integer
/// (so `270/0.1` is 2700, not 2701).
fn ceil_count(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * r.abs().max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// `ln(max(arg, 1))`: arguments at or below 1 need zero iterations.
fn clamped_ln(arg: f64) -> f64 {
    if arg <= 1.0 {
        0.0
    } else {
        arg.ln()
    }
}

/// The parameter recipe:
///
/// ```text
/// η     = εα³ / (7500 d L⁴)
/// N     = ⌈270 d L⁴ / (ε α⁴)⌉
/// k     = ⌈(7500 d L⁴ / (ε α⁴)) · ln(684 d L⁶ / (ε α⁶))⌉
/// k_GD  = ⌈(4L²/α²) · ln(α³‖z*‖² / (τ d L²))⌉,   η_GD = α/(4L²)
/// ```
///
/// with logs clamped at 1 and the initial covariance scale `τ/L`. Rejects
/// `ε` large enough that `η > α/(64L²)`.
pub fn plan_parameters(regime: &Regime, eps: f64, z_star_norm_sq: f64) -> Result<Plan> {
    regime.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param("eps", format!("must be positive, got {eps}")));
    }
    if !(z_star_norm_sq >= 0.0 && z_star_norm_sq.is_finite()) {
        return Err(Error::param("z_star_norm_sq", "must be nonnegative"));
    }
    let Regime {
        alpha: a,
        smooth_l: l,
        tau,
        dim: d,
    } = *regime;
    let l2 = l * l;
    let l4 = l2 * l2;
    let eta = eps * a.powi(3) / (7500.0 * d * l4);
    let limit = a / (64.0 * l2);
    if eta > limit {
        return Err(Error::StepSizeRegime {
            eta,
            bound: limit,
            bound_label: "alpha/(64 L^2)",
            regime: "eps is too large: the recipe step size leaves the regime of the finite-particle guarantee",
        });
    }
    let n_particles = ceil_count(270.0 * d * l4 / (eps * a.powi(4)));
    let iters = ceil_count(
        (7500.0 * d * l4 / (eps * a.powi(4))) * clamped_ln(684.0 * d * l4 * l2 / (eps * a.powi(6))),
    );
    let gd_iters = ceil_count(
        (4.0 * l2 / (a * a)) * clamped_ln(a.powi(3) * z_star_norm_sq / (tau * d * l2)),
    );
    Ok(Plan {
        eps,
        eta,
        n_particles,
        iters,
        gd_iters,
        gd_eta: a / (4.0 * l2),
        init_cov_scale: tau / l,
    })
}

/// Equilibrium variance bound and initial Fisher-information bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceFisherBounds {
    /// `2τd/α` with `d` the per-player dimension.
    pub var_bound: f64,
    /// `2τ(2d)/α`, the reading with `d` replaced by the joint dimension `2d`.
    pub var_bound_joint_dim: f64,
    /// `2d(1 + L²/τ²) + L²‖z*‖²/τ²`.
    pub fi_bound: f64,
}

pub fn variance_and_fisher_bounds(regime: &Regime, z_star_norm_sq: f64) -> Result<VarianceFisherBounds> {
    regime.validate()?;
    if !(z_star_norm_sq >= 0.0) {
        return Err(Error::param("z_star_norm_sq", "must be nonnegative"));
    }
    let Regime {
        alpha,
        smooth_l: l,
        tau,
        dim: d,
    } = *regime;
    let var_bound = 2.0 * tau * d / alpha;
    Ok(VarianceFisherBounds {
        var_bound,
        var_bound_joint_dim: 2.0 * var_bound,
        fi_bound: 2.0 * d * (1.0 + l * l / (tau * tau)) + l * l * z_star_norm_sq / (tau * tau),
    })
}

/// Limiting average-particle KL bias
/// `45 L⁴ Var / (α³ τ N) + 2475 η d L⁴ / α³`.
pub fn kl_bias_bound(regime: &Regime, n_particles: f64, eta: f64, var_value: f64) -> f64 {
    let l4 = regime.smooth_l.powi(4);
    let a3 = regime.alpha.powi(3);
    45.0 * l4 * var_value / (a3 * regime.tau * n_particles) + 2475.0 * eta * regime.dim * l4 / a3
}

/// Transient average-particle KL envelope
/// `e^{−αηk}·(KL₀ + 9L²/(ατ)·W₀²)/N + bias`, where `KL₀` and `W₀²` compare
/// the joint `N`-particle initial law with `(νᶻ)^{⊗N}`.
pub fn transient_kl_envelope(
    regime: &Regime,
    initial_kl: f64,
    initial_w2_sq: f64,
    eta: f64,
    k: f64,
    n_particles: f64,
    bias: f64,
) -> f64 {
    let decay = (-regime.alpha * eta * k).exp();
    let weight = 9.0 * regime.smooth_l.powi(2) / (regime.alpha * regime.tau);
    decay * (initial_kl + weight * initial_w2_sq) / n_particles + bias
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_regime() -> Regime {
        Regime {
            alpha: 1.0,
            smooth_l: 1.0,
            tau: 1.0,
            dim: 1.0,
        }
    }

    fn q1(a: f64, b: f64, c: f64, u: f64, v: f64) -> PayoffSpec {
        PayoffSpec::quadratic(
            Quadratic::new(
                DMatrix::from_element(1, 1, a),
                DMatrix::from_element(1, 1, b),
                DMatrix::from_element(1, 1, c),
                DVector::from_element(1, u),
                DVector::from_element(1, v),
            )
            .unwrap(),
        )
    }

    #[test]
    fn equilibrium_examples() {
        let (nx, ny) = quadratic_equilibrium(&q1(1.0, 1.0, 0.0, 0.0, 0.0), 1.0).unwrap();
        assert_eq!(nx.mean()[0], 0.0);
        assert!((nx.cov()[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((ny.cov()[(0, 0)] - 1.0).abs() < 1e-15);

        let (nx, ny) = quadratic_equilibrium(&q1(1.0, 1.0, 1.0, 1.0, 0.0), 2.0).unwrap();
        assert!((nx.mean()[0] + 0.5).abs() < 1e-15);
        assert!((ny.mean()[0] + 0.5).abs() < 1e-15);
        assert!((nx.cov()[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((ny.cov()[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_is_best_response_fixed_point() {
        let spec = q1(1.5, 0.8, -0.6, 0.3, 1.1);
        let tau = 0.7;
        let (nx, ny) = quadratic_equilibrium(&spec, tau).unwrap();
        let bx = best_response_x(spec.base(), tau, &ny).unwrap();
        let by = best_response_y(spec.base(), tau, &nx).unwrap();
        assert!((bx.mean() - nx.mean()).amax() < 1e-12);
        assert!((by.mean() - ny.mean()).amax() < 1e-12);
        assert!((bx.cov() - nx.cov()).amax() < 1e-12);
        assert!((by.cov() - ny.cov()).amax() < 1e-12);
    }

    #[test]
    fn equilibrium_rejects_perturbed_and_bad_tau() {
        let spec = q1(1.0, 1.0, 0.0, 0.0, 0.0);
        assert!(quadratic_equilibrium(&spec, 0.0).is_err());
        let pert = PayoffSpec::perturbed(spec.base().clone(), 0.1, 1.0).unwrap();
        assert!(matches!(quadratic_equilibrium(&pert, 1.0), Err(Error::InvalidPayoff(_))));
    }

    #[test]
    fn plan_reference_values() {
        let plan = plan_parameters(&unit_regime(), 0.1, 0.0).unwrap();
        assert!((plan.eta - 1.0 / 75_000.0).abs() <= 1e-12 * plan.eta);
        assert_eq!(plan.n_particles, 2700);
        // 75000 * ln(6840) = 662290.73
        assert_eq!(plan.iters, 662_291);
        assert_eq!(plan.gd_iters, 0);
        assert_eq!(plan.gd_eta, 0.25);
        assert_eq!(plan.init_cov_scale, 1.0);
    }

    #[test]
    fn plan_rejects_large_eps() {
        assert!(matches!(
            plan_parameters(&unit_regime(), 1000.0, 0.0),
            Err(Error::StepSizeRegime { .. })
        ));
        assert!(plan_parameters(&unit_regime(), 0.0, 0.0).is_err());
    }

    #[test]
    fn plan_gd_iters() {
        // ln(alpha^3 |z*|^2 / (tau d L^2)) = ln(e^2) = 2, times 4L^2/alpha^2 = 4
        let plan = plan_parameters(&unit_regime(), 0.1, std::f64::consts::E.powi(2)).unwrap();
        assert_eq!(plan.gd_iters, 8);
    }

    #[test]
    fn variance_and_fisher_examples() {
        let r = Regime {
            alpha: 1.0,
            smooth_l: 1.0,
            tau: 1.0,
            dim: 2.0,
        };
        let b = variance_and_fisher_bounds(&r, 0.0).unwrap();
        assert_eq!(b.var_bound, 4.0);
        assert_eq!(b.var_bound_joint_dim, 8.0);
        let b = variance_and_fisher_bounds(&unit_regime(), 0.0).unwrap();
        assert_eq!(b.fi_bound, 4.0);
        let doubled = variance_and_fisher_bounds(&Regime { tau: 2.0, ..r }, 0.0).unwrap();
        assert_eq!(doubled.var_bound, 8.0);
        assert!(variance_and_fisher_bounds(&Regime { alpha: 0.0, ..r }, 0.0).is_err());
    }

    #[test]
    fn bias_bound_examples() {
        let b = kl_bias_bound(&unit_regime(), 2700.0, 1.3333e-5, 2.0);
        assert!((b - 0.066_332_508_333).abs() < 1e-9, "{b}");
        let first = kl_bias_bound(&unit_regime(), 100.0, 0.0, 2.0);
        let halved = kl_bias_bound(&unit_regime(), 200.0, 0.0, 2.0);
        assert!((halved - first / 2.0).abs() < 1e-15);
        assert!(kl_bias_bound(&unit_regime(), 1e300, 0.0, 2.0) < 1e-290);
    }

    #[test]
    fn transient_envelope_examples() {
        let r = Regime {
            alpha: 1.0,
            smooth_l: 2.0,
            tau: 0.5,
            dim: 1.0,
        };
        let at_zero = transient_kl_envelope(&r, 3.0, 0.25, 0.1, 0.0, 4.0, 0.0);
        assert!((at_zero - (3.0 + 9.0 * 4.0 / 0.5 * 0.25) / 4.0).abs() < 1e-15);
        let late = transient_kl_envelope(&r, 3.0, 0.25, 0.1, 1e6, 4.0, 0.125);
        assert_eq!(late, 0.125);
        let r1 = Regime { smooth_l: 1.0, ..r };
        let full = transient_kl_envelope(&r1, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0);
        let half = transient_kl_envelope(&r1, 1.0, 0.0, 1.0, std::f64::consts::LN_2, 1.0, 0.0);
        assert!((half - full / 2.0).abs() < 1e-15);
    }

    #[test]
    fn exact_variance_within_bound() {
        let spec = q1(2.0, 3.0, 0.5, 0.0, 0.0);
        let v = exact_equilibrium_variance(&spec, 1.5).unwrap();
        assert!((v - 1.5 * (0.5 + 1.0 / 3.0)).abs() < 1e-15);
        let c = spec.constants().unwrap();
        let bounds = variance_and_fisher_bounds(&Regime::new(c, 1.5, 1), 0.0).unwrap();
        assert!(v <= bounds.var_bound);
    }

    #[test]
    fn gaussian_validation() {
        let bad = GaussianDist::new(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(bad.is_err());
        let g = GaussianDist::isotropic(DVector::from_vec(vec![1.0, 2.0]), 0.5).unwrap();
        let p = g.product(&g);
        assert_eq!(p.dim(), 4);
        assert_eq!(p.cov_trace(), 2.0);
    }
}
