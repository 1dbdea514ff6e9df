//! Deterministic min-max gradient descent on `V`.
//!
//! Used to locate the equilibrium point `z* = (x*, y*)` where `∇V(z*) = 0`,
//! to warm-start the particle algorithm, and to bound the duality gap from
//! the gradient norm.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::payoff::PayoffSpec;

/// A point `z = (x, y) ∈ ℝ^{2d}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl JointPoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::dims("joint point", x.len(), y.len()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::param("z", "entries must be finite"));
        }
        Ok(Self { x, y })
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            x: vec![0.0; d],
            y: vec![0.0; d],
        }
    }

    /// Splits a `2d` vector laid out as `(x, y)`.
    pub fn from_joint(z: &[f64]) -> Result<Self> {
        if !z.len().is_multiple_of(2) {
            return Err(Error::param("z", "joint vector must have even length"));
        }
        let d = z.len() / 2;
        Self::new(z[..d].to_vec(), z[d..].to_vec())
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn to_joint(&self) -> Vec<f64> {
        self.x.iter().chain(&self.y).copied().collect()
    }

    pub fn distance_sq(&self, other: &JointPoint) -> f64 {
        self.x
            .iter()
            .chain(&self.y)
            .zip(other.x.iter().chain(&other.y))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.x.iter().chain(&self.y).map(|v| v * v).sum()
    }
}

fn check_dim(spec: &PayoffSpec, z: &JointPoint) -> Result<()> {
    if z.dim() != spec.dim() {
        return Err(Error::dims("joint point", spec.dim(), z.dim()));
    }
    Ok(())
}

/// `‖∇V(z)‖² = ‖∇ₓV‖² + ‖∇ᵧV‖²`.
pub fn grad_norm_sq(spec: &PayoffSpec, z: &JointPoint) -> Result<f64> {
    let (gx, gy) = spec.grad(&z.x, &z.y)?;
    Ok(gx.iter().chain(&gy).map(|g| g * g).sum())
}

/// One step `x' = x − η∇ₓV`, `y' = y + η∇ᵧV`.
///
/// A step size above `α/(4L²)` is allowed but logs a warning, since the
/// linear rate is only guaranteed below it.
pub fn gd_step(spec: &PayoffSpec, z: &JointPoint, eta_gd: f64) -> Result<JointPoint> {
    check_dim(spec, z)?;
    if let Ok(c) = spec.constants() {
        if eta_gd > c.gd_eta() {
            log::warn!(
                "gd step size {eta_gd} exceeds alpha/(4L^2) = {}; rate not guaranteed",
                c.gd_eta()
            );
        }
    }
    Ok(gd_step_unchecked(spec, z, eta_gd))
}

pub(crate) fn gd_step_unchecked(spec: &PayoffSpec, z: &JointPoint, eta: f64) -> JointPoint {
    let d = z.dim();
    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    spec.grad_x_into(&z.x, &z.y, &mut gx);
    spec.grad_y_into(&z.x, &z.y, &mut gy);
    JointPoint {
        x: z.x.iter().zip(&gx).map(|(x, g)| x + eta * -g).collect(),
        y: z.y.iter().zip(&gy).map(|(y, g)| y + eta * g).collect(),
    }
}

/// Exact stationary point of the quadratic part: solves
/// `Ax + Cy = −u`, `Cᵀx − By = −v` by LU with partial pivoting.
fn solve_quadratic_stationary(spec: &PayoffSpec) -> Result<JointPoint> {
    let q = spec.base();
    let d = q.dim();
    let h: DMatrix<f64> = q.hessian();
    let mut rhs = DVector::zeros(2 * d);
    for i in 0..d {
        rhs[i] = -q.u()[i];
        rhs[d + i] = -q.v()[i];
    }
    let sol = h.lu().solve(&rhs).ok_or_else(|| {
        Error::Singular("saddle system [[A, C], [C^T, -B]] is singular (internal error)".into())
    })?;
    JointPoint::from_joint(sol.as_slice())
}

/// Equilibrium point `z*` with `‖∇V(z*)‖ ≤ tol`.
///
/// Quadratic payoffs use a direct linear solve (zero iterations). Perturbed
/// payoffs run gradient descent with `η = α/(4L²)` from the solution of the
/// quadratic base.
pub fn solve_equilibrium(
    spec: &PayoffSpec,
    tol: f64,
    max_iters: usize,
) -> Result<(JointPoint, usize)> {
    if !(tol > 0.0) {
        return Err(Error::param("tol", format!("must be positive, got {tol}")));
    }
    let start = solve_quadratic_stationary(spec)?;
    if spec.is_quadratic() {
        return Ok((start, 0));
    }
    let eta = spec.constants()?.gd_eta();
    let tol_sq = tol * tol;
    let mut z = start;
    let mut residual = grad_norm_sq(spec, &z)?;
    let mut iters = 0;
    while residual > tol_sq {
        if iters >= max_iters {
            return Err(Error::NotConverged {
                iters,
                residual: residual.sqrt(),
            });
        }
        z = gd_step_unchecked(spec, &z, eta);
        residual = grad_norm_sq(spec, &z)?;
        iters += 1;
    }
    Ok((z, iters))
}

/// Default warm-start tolerance `√(τdL²/α³)`.
pub fn warm_start_tol(spec: &PayoffSpec, tau: f64) -> Result<f64> {
    let c = spec.constants()?;
    let d = spec.dim() as f64;
    Ok((tau * d * c.smooth_l * c.smooth_l / c.alpha.powi(3)).sqrt())
}

/// Duality-gap upper bound `‖∇V(z)‖²/(2α)`.
pub fn duality_gap_bound(spec: &PayoffSpec, z: &JointPoint) -> Result<f64> {
    check_dim(spec, z)?;
    let alpha = spec.constants()?.alpha;
    Ok(grad_norm_sq(spec, z)? / (2.0 * alpha))
}

/// One row of [`gd_rate_audit`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateAuditEntry {
    pub k: usize,
    pub dist_sq: f64,
    pub envelope: f64,
}

impl RateAuditEntry {
    pub fn ratio(&self) -> f64 {
        if self.envelope == 0.0 {
            1.0
        } else {
            self.dist_sq / self.envelope
        }
    }
}

const AUDIT_REL_SLACK: f64 = 1e-9;

/// Runs `steps` GD iterations from `z0` and checks
/// `‖z_k − z*‖² ≤ e^{−αηk}‖z_0 − z*‖²` at every `k` (relative slack `1e−9`).
pub fn gd_rate_audit(
    spec: &PayoffSpec,
    z0: &JointPoint,
    eta_gd: f64,
    steps: usize,
) -> Result<Vec<RateAuditEntry>> {
    check_dim(spec, z0)?;
    let c = spec.constants()?;
    if !(eta_gd > 0.0 && eta_gd <= c.gd_eta() * (1.0 + 1e-12)) {
        return Err(Error::StepSizeRegime {
            eta: eta_gd,
            bound: c.gd_eta(),
            bound_label: "alpha/(4L^2)",
            regime: "the gradient-descent rate is only certified below this",
        });
    }
    let (z_star, _) = solve_equilibrium(spec, 1e-13, 1_000_000)?;
    let d0 = z0.distance_sq(&z_star);
    // iterates cannot resolve z* better than a few ulps of its magnitude
    let floor = (64.0 * f64::EPSILON * (1.0 + z_star.norm_sq().sqrt())).powi(2);
    let mut z = z0.clone();
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        if k > 0 {
            z = gd_step_unchecked(spec, &z, eta_gd);
        }
        let dist_sq = z.distance_sq(&z_star);
        let envelope = (-c.alpha * eta_gd * k as f64).exp() * d0;
        if dist_sq > envelope * (1.0 + AUDIT_REL_SLACK) + floor {
            return Err(Error::EnvelopeViolated {
                step: k,
                value: dist_sq,
                envelope,
            });
        }
        out.push(RateAuditEntry {
            k,
            dist_sq,
            envelope,
        });
    }
    Ok(out)
}
