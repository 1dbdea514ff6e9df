//! Base payoff functions `V(x, y)` for the regularized game.
//!
//! Two families are supported, both strongly convex in `x`, strongly concave
//! in `y`, and smooth:
//!
//! ```text
//! quadratic:  V(x,y) = ½xᵀAx − ½yᵀBy + xᵀCy + uᵀx + vᵀy
//! perturbed:  V(x,y) = quadratic + a·Σᵢ (cos(w·xᵢ) − cos(w·yᵢ))
//! ```
//!
//! The cosine perturbation has Hessian entries bounded by `a·w²`, and the
//! constructor caps `a·w² ≤ ½·min(λmin(A), λmin(B))` so the perturbed
//! Hessian blocks stay uniformly definite.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Default finite-difference step for [`PayoffSpec::check_gradient_fd`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

const SYMMETRY_TOL: f64 = 1e-12;

/// Which payoff family a [`PayoffSpec`] belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffKind {
    QuadraticBilinear,
    PerturbedQuadratic,
}

/// Strong convexity/concavity modulus and smoothness bound of a payoff.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub alpha: f64,
    pub smooth_l: f64,
}

impl Constants {
    /// `α/(64L²)`: the step-size ceiling of the finite-particle convergence guarantee.
    pub fn strict_eta_limit(&self) -> f64 {
        self.alpha / (64.0 * self.smooth_l * self.smooth_l)
    }

    /// `α/(2L²)`: above this the one-step drift map is no longer certified to contract.
    pub fn stability_eta_limit(&self) -> f64 {
        self.alpha / (2.0 * self.smooth_l * self.smooth_l)
    }

    /// `α/(4L²)`: step size of the deterministic min-max gradient descent.
    pub fn gd_eta(&self) -> f64 {
        self.alpha / (4.0 * self.smooth_l * self.smooth_l)
    }

    /// Per-step Lipschitz factor `M = √(1 − 2ηα + 4η²L²)` of `z ↦ z + η b(z)`.
    pub fn contraction_factor(&self, eta: f64) -> f64 {
        let l = self.smooth_l;
        (1.0 - 2.0 * eta * self.alpha + 4.0 * eta * eta * l * l)
            .max(0.0)
            .sqrt()
    }
}

/// Quadratic-bilinear payload `(A, B, C, u, v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    u: DVector<f64>,
    v: DVector<f64>,
    // row-major copies for the inner drift loops
    a_rm: Vec<f64>,
    b_rm: Vec<f64>,
    c_rm: Vec<f64>,
    ct_rm: Vec<f64>,
}

impl Quadratic {
    /// Validates shapes, symmetry and positive definiteness of `A` and `B`.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        u: DVector<f64>,
        v: DVector<f64>,
    ) -> Result<Self> {
        let d = a.nrows();
        if d == 0 {
            return Err(Error::InvalidPayoff("dimension must be positive".into()));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::InvalidPayoff(format!(
                    "{name} is {}x{}, expected {d}x{d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|e| !e.is_finite()) {
                return Err(Error::InvalidPayoff(format!("{name} has non-finite entries")));
            }
        }
        for (name, w) in [("u", &u), ("v", &v)] {
            if w.len() != d {
                return Err(Error::InvalidPayoff(format!(
                    "{name} has length {}, expected {d}",
                    w.len()
                )));
            }
            if w.iter().any(|e| !e.is_finite()) {
                return Err(Error::InvalidPayoff(format!("{name} has non-finite entries")));
            }
        }
        for (name, m) in [("A", &a), ("B", &b)] {
            if !linalg::is_symmetric(m, SYMMETRY_TOL) {
                return Err(Error::InvalidPayoff(format!("{name} is not symmetric")));
            }
            let lmin = linalg::min_eigenvalue(m);
            if lmin <= 0.0 {
                return Err(Error::InvalidPayoff(format!(
                    "{name} is not positive definite (smallest eigenvalue {lmin:e})"
                )));
            }
        }
        let row_major = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
        Ok(Self {
            a_rm: row_major(&a),
            b_rm: row_major(&b),
            c_rm: row_major(&c),
            ct_rm: c.as_slice().to_vec(),
            a,
            b,
            c,
            u,
            v,
        })
    }

    /// `A = αI`, `B = βI`, `C = γI`, `u = v = 0`.
    pub fn isotropic(d: usize, a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(
            DMatrix::identity(d, d) * a,
            DMatrix::identity(d, d) * b,
            DMatrix::identity(d, d) * c,
            DVector::zeros(d),
            DVector::zeros(d),
        )
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn v(&self) -> &DVector<f64> {
        &self.v
    }

    /// Full Hessian `[[A, C], [Cᵀ, −B]]` of the quadratic part.
    pub fn hessian(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = DMatrix::zeros(2 * d, 2 * d);
        h.view_mut((0, 0), (d, d)).copy_from(&self.a);
        h.view_mut((0, d), (d, d)).copy_from(&self.c);
        h.view_mut((d, 0), (d, d)).copy_from(&self.c.transpose());
        h.view_mut((d, d), (d, d)).copy_from(&(-&self.b));
        h
    }

    fn min_curvature(&self) -> f64 {
        linalg::min_eigenvalue(&self.a).min(linalg::min_eigenvalue(&self.b))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Perturbation {
    amplitude: f64,
    frequency: f64,
}

/// A concrete payoff `V` with analytic gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct PayoffSpec {
    base: Quadratic,
    perturbation: Option<Perturbation>,
}

impl PayoffSpec {
    pub fn quadratic(base: Quadratic) -> Self {
        Self {
            base,
            perturbation: None,
        }
    }

    /// Quadratic base plus `amplitude·Σᵢ(cos(frequency·xᵢ) − cos(frequency·yᵢ))`.
    pub fn perturbed(base: Quadratic, amplitude: f64, frequency: f64) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidPayoff(format!(
                "amplitude must be finite and nonnegative, got {amplitude}"
            )));
        }
        if !(frequency > 0.0 && frequency.is_finite()) {
            return Err(Error::InvalidPayoff(format!(
                "frequency must be finite and positive, got {frequency}"
            )));
        }
        let curvature = amplitude * frequency * frequency;
        let cap = 0.5 * base.min_curvature();
        if curvature > cap {
            return Err(Error::InvalidPayoff(format!(
                "amplitude*frequency^2 = {curvature} exceeds half the smallest eigenvalue of A, B ({cap})"
            )));
        }
        Ok(Self {
            base,
            perturbation: Some(Perturbation {
                amplitude,
                frequency,
            }),
        })
    }

    pub fn kind(&self) -> PayoffKind {
        match self.perturbation {
            None => PayoffKind::QuadraticBilinear,
            Some(_) => PayoffKind::PerturbedQuadratic,
        }
    }

    pub fn is_quadratic(&self) -> bool {
        self.perturbation.is_none()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn base(&self) -> &Quadratic {
        &self.base
    }

    pub fn amplitude(&self) -> f64 {
        self.perturbation.map_or(0.0, |p| p.amplitude)
    }

    pub fn frequency(&self) -> Option<f64> {
        self.perturbation.map(|p| p.frequency)
    }

    fn perturbation_curvature(&self) -> f64 {
        self.perturbation
            .map_or(0.0, |p| p.amplitude * p.frequency * p.frequency)
    }

    fn check_dims(&self, x: &[f64], y: &[f64]) -> Result<()> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::dims("payoff x", d, x.len()));
        }
        if y.len() != d {
            return Err(Error::dims("payoff y", d, y.len()));
        }
        Ok(())
    }

    /// `V(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dims(x, y)?;
        let q = &self.base;
        let d = self.dim();
        let mut value = 0.0;
        for r in 0..d {
            let row = r * d;
            let mut ax = 0.0;
            let mut by = 0.0;
            let mut cy = 0.0;
            for c in 0..d {
                ax += q.a_rm[row + c] * x[c];
                by += q.b_rm[row + c] * y[c];
                cy += q.c_rm[row + c] * y[c];
            }
            value += 0.5 * x[r] * ax - 0.5 * y[r] * by + x[r] * cy + q.u[r] * x[r] + q.v[r] * y[r];
        }
        if let Some(p) = self.perturbation {
            let w = p.frequency;
            value += p.amplitude
                * x.iter()
                    .zip(y)
                    .map(|(xi, yi)| (w * xi).cos() - (w * yi).cos())
                    .sum::<f64>();
        }
        Ok(value)
    }

    /// `(∇ₓV(x, y), ∇ᵧV(x, y))`.
    pub fn grad(&self, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_dims(x, y)?;
        let d = self.dim();
        let mut gx = vec![0.0; d];
        let mut gy = vec![0.0; d];
        self.grad_x_into(x, y, &mut gx);
        self.grad_y_into(x, y, &mut gy);
        Ok((gx, gy))
    }

    /// `out = ∇ₓV(x, y) = Ax + Cy + u − a·w·sin(w·x)`. Slices must have length `dim`.
    #[inline]
    pub fn grad_x_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let q = &self.base;
        let d = out.len();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &q.a_rm[r * d..(r + 1) * d];
            let crow = &q.c_rm[r * d..(r + 1) * d];
            let mut acc = q.u[r];
            for c in 0..d {
                acc += row[c] * x[c] + crow[c] * y[c];
            }
            *o = acc;
        }
        if let Some(p) = self.perturbation {
            let w = p.frequency;
            for (o, xi) in out.iter_mut().zip(x) {
                *o -= p.amplitude * w * (w * xi).sin();
            }
        }
    }

    /// `out = ∇ᵧV(x, y) = −By + Cᵀx + v + a·w·sin(w·y)`. Slices must have length `dim`.
    #[inline]
    pub fn grad_y_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let q = &self.base;
        let d = out.len();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &q.b_rm[r * d..(r + 1) * d];
            let ctrow = &q.ct_rm[r * d..(r + 1) * d];
            let mut acc = q.v[r];
            for c in 0..d {
                acc += ctrow[c] * x[c] - row[c] * y[c];
            }
            *o = acc;
        }
        if let Some(p) = self.perturbation {
            let w = p.frequency;
            for (o, yi) in out.iter_mut().zip(y) {
                *o += p.amplitude * w * (w * yi).sin();
            }
        }
    }

    /// Certified `(α, L)`.
    ///
    /// `α = min(λmin(A), λmin(B)) − a·w²` and `L = ‖[[A, C], [Cᵀ, −B]]‖op + a·w²`.
    /// For the perturbed family both are conservative bounds, not the tight
    /// constants; for the quadratic family they are exact.
    pub fn constants(&self) -> Result<Constants> {
        let pert = self.perturbation_curvature();
        let alpha = self.base.min_curvature() - pert;
        let smooth_l = linalg::operator_norm(&self.base.hessian()) + pert;
        if !(alpha > 0.0) {
            return Err(Error::InvalidPayoff(format!(
                "strong convexity modulus is not positive ({alpha:e})"
            )));
        }
        Ok(Constants { alpha, smooth_l })
    }

    /// Largest relative deviation between [`grad`](Self::grad) and central
    /// finite differences of [`eval`](Self::eval), over all `2d` coordinates.
    ///
    /// The deviation of each coordinate is `|fd − g| / max(1, |g|)`.
    pub fn check_gradient_fd(&self, x: &[f64], y: &[f64], h: f64) -> Result<f64> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::param("h", format!("must be positive, got {h}")));
        }
        let (gx, gy) = self.grad(x, y)?;
        let mut worst: f64 = 0.0;
        let mut xp = x.to_vec();
        let mut yp = y.to_vec();
        for i in 0..self.dim() {
            xp[i] = x[i] + h;
            let f_plus = self.eval(&xp, y)?;
            xp[i] = x[i] - h;
            let f_minus = self.eval(&xp, y)?;
            xp[i] = x[i];
            let fd = (f_plus - f_minus) / (2.0 * h);
            worst = worst.max((fd - gx[i]).abs() / gx[i].abs().max(1.0));

            yp[i] = y[i] + h;
            let f_plus = self.eval(x, &yp)?;
            yp[i] = y[i] - h;
            let f_minus = self.eval(x, &yp)?;
            yp[i] = y[i];
            let fd = (f_plus - f_minus) / (2.0 * h);
            worst = worst.max((fd - gy[i]).abs() / gy[i].abs().max(1.0));
        }
        Ok(worst)
    }

    /// Hessian blocks `(∇²ₓₓV, −∇²ᵧᵧV)` at `(x, y)`; both are positive definite.
    pub fn curvature_blocks(&self, x: &[f64], y: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_dims(x, y)?;
        let mut hxx = self.base.a.clone();
        let mut hyy = self.base.b.clone();
        if let Some(p) = self.perturbation {
            let k = p.amplitude * p.frequency * p.frequency;
            for i in 0..self.dim() {
                hxx[(i, i)] -= k * (p.frequency * x[i]).cos();
                hyy[(i, i)] -= k * (p.frequency * y[i]).cos();
            }
        }
        Ok((hxx, hyy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_1d() -> PayoffSpec {
        PayoffSpec::quadratic(Quadratic::isotropic(1, 1.0, 1.0, 1.0).unwrap())
    }

    #[test]
    fn eval_examples() {
        let p = unit_1d();
        assert_eq!(p.eval(&[0.0], &[0.0]).unwrap(), 0.0);
        assert_eq!(p.eval(&[1.0], &[2.0]).unwrap(), 0.5);
        let pert = PayoffSpec::perturbed(p.base().clone(), 0.0, 1.0).unwrap();
        for (x, y) in [(0.3, -1.2), (2.0, 0.5)] {
            assert_eq!(pert.eval(&[x], &[y]).unwrap(), p.eval(&[x], &[y]).unwrap());
        }
    }

    #[test]
    fn grad_examples() {
        let p = unit_1d();
        assert_eq!(p.grad(&[1.0], &[2.0]).unwrap(), (vec![3.0], vec![-1.0]));
        assert_eq!(p.grad(&[0.0], &[0.0]).unwrap(), (vec![0.0], vec![0.0]));
        let pert = PayoffSpec::perturbed(p.base().clone(), 0.1, 1.0).unwrap();
        assert_eq!(pert.grad(&[0.0], &[0.0]).unwrap(), (vec![0.0], vec![0.0]));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = unit_1d();
        assert!(matches!(
            p.eval(&[0.0, 1.0], &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(p.grad(&[0.0], &[]).is_err());
    }

    #[test]
    fn constants_examples() {
        let id = PayoffSpec::quadratic(Quadratic::isotropic(3, 1.0, 1.0, 0.0).unwrap());
        let c = id.constants().unwrap();
        assert!((c.alpha - 1.0).abs() < 1e-15);
        assert!((c.smooth_l - 1.0).abs() < 1e-12);

        let c = unit_1d().constants().unwrap();
        assert!((c.alpha - 1.0).abs() < 1e-15);
        assert!((c.smooth_l - 2f64.sqrt()).abs() < 1e-12);

        let pert =
            PayoffSpec::perturbed(Quadratic::isotropic(2, 1.0, 1.0, 0.0).unwrap(), 0.1, 1.0).unwrap();
        let c = pert.constants().unwrap();
        assert!((c.alpha - 0.9).abs() < 1e-12);
        assert!((c.smooth_l - 1.1).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_payloads() {
        let neg = Quadratic::isotropic(2, -1.0, 1.0, 0.0);
        assert!(matches!(neg, Err(Error::InvalidPayoff(_))));
        let asym = Quadratic::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DVector::zeros(2),
            DVector::zeros(2),
        );
        assert!(asym.is_err());
        let base = Quadratic::isotropic(1, 1.0, 1.0, 0.0).unwrap();
        // cap is a*w^2 <= 1/2
        assert!(PayoffSpec::perturbed(base.clone(), 0.5, 1.0).is_ok());
        assert!(PayoffSpec::perturbed(base.clone(), 0.51, 1.0).is_err());
        assert!(PayoffSpec::perturbed(base, 0.1, 0.0).is_err());
    }

    #[test]
    fn gradient_fd_examples() {
        let p = PayoffSpec::quadratic(
            Quadratic::new(
                DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]),
                DMatrix::from_row_slice(2, 2, &[1.2, -0.2, -0.2, 0.9]),
                DMatrix::from_row_slice(2, 2, &[0.4, -1.0, 0.7, 0.1]),
                DVector::from_vec(vec![0.5, -0.3]),
                DVector::from_vec(vec![-0.1, 0.2]),
            )
            .unwrap(),
        );
        let err = p.check_gradient_fd(&[0.3, -0.7], &[1.1, 0.4], 1e-5).unwrap();
        assert!(err <= 1e-8, "{err}");
        let pert = PayoffSpec::perturbed(p.base().clone(), 0.2, 1.3).unwrap();
        let err = pert.check_gradient_fd(&[0.3, -0.7], &[1.1, 0.4], 1e-5).unwrap();
        assert!(err <= 1e-6, "{err}");
        assert!(p.check_gradient_fd(&[0.0, 0.0], &[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn hessian_layout() {
        let q = Quadratic::new(
            DMatrix::identity(2, 2) * 2.0,
            DMatrix::identity(2, 2) * 3.0,
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DVector::zeros(2),
            DVector::zeros(2),
        )
        .unwrap();
        let h = q.hessian();
        assert_eq!(h[(0, 3)], 1.0);
        assert_eq!(h[(3, 0)], 1.0);
        assert_eq!(h[(2, 2)], -3.0);
    }
}
