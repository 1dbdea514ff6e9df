//! Distributional diagnostics: Gaussian closed forms, Gaussian fits of
//! particle clouds, and sample-based Wasserstein estimates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::GaussianDist;
use crate::rng::NoiseStream;

/// Default number of random directions for [`sliced_w2`].
pub const DEFAULT_PROJECTIONS: usize = 64;

/// Per-checkpoint diagnostics of a particle run.
///
/// `None` marks a metric that was disabled or is undefined for the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub wall_time: f64,
    pub avg_mean: Option<Vec<f64>>,
    pub avg_cov_trace: Option<f64>,
    pub kl_fit_to_eq: Option<f64>,
    pub w2_fit_to_eq_sq: Option<f64>,
    pub grad_gap_bound: Option<f64>,
    pub coupling_dist_sq: Option<f64>,
    pub envelope_kl: Option<f64>,
    pub bias_bound: Option<f64>,
}

/// Result of [`fit_gaussian`].
#[derive(Clone, Debug, PartialEq)]
pub struct FittedGaussian {
    pub dist: GaussianDist,
    /// Sample covariance is rank-deficient.
    pub degenerate: bool,
}

/// Sample mean and unbiased (divisor `n − 1`) covariance of the rows of `samples`.
pub fn fit_gaussian(samples: &DMatrix<f64>) -> Result<FittedGaussian> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::param("samples", format!("need at least 2 rows, got {n}")));
    }
    let m = samples.ncols();
    let mean: DVector<f64> = samples.row_mean().transpose();
    let mut centered = samples.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = linalg::symmetrize(&((centered.transpose() * &centered) / (n as f64 - 1.0)));
    let degenerate = if m == 0 {
        true
    } else {
        let eig = cov.clone().symmetric_eigenvalues();
        let top = eig.amax();
        eig.iter().any(|&l| l <= linalg::EIGEN_CLAMP * top.max(1.0))
    };
    Ok(FittedGaussian {
        dist: GaussianDist::new(mean, cov)?,
        degenerate,
    })
}

/// [`fit_gaussian`] over `n` samples stored row-major with `m` columns.
pub fn fit_gaussian_rows(rows: &[f64], m: usize) -> Result<FittedGaussian> {
    if m == 0 || !rows.len().is_multiple_of(m) {
        return Err(Error::param("samples", "row-major buffer does not match the column count"));
    }
    fit_gaussian(&DMatrix::from_row_slice(rows.len() / m, m, rows))
}

fn check_same_dim(p: &GaussianDist, q: &GaussianDist) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::dims("gaussian pair", q.dim(), p.dim()));
    }
    Ok(())
}

/// `KL(p‖q) = ½(tr(Σq⁻¹Σp) + Δmᵀ Σq⁻¹ Δm − m + ln det Σq − ln det Σp)`.
///
/// Returns `+∞` when `Σp` is singular; errors when `Σq` is.
pub fn gaussian_kl(p: &GaussianDist, q: &GaussianDist) -> Result<f64> {
    check_same_dim(p, q)?;
    let (q_inv, q_logdet) = linalg::spd_inverse_logdet(q.cov(), "reference covariance")?;
    let p_logdet = match linalg::spd_inverse_logdet(p.cov(), "covariance") {
        Ok((_, ld)) => ld,
        Err(_) => return Ok(f64::INFINITY),
    };
    let dm = q.mean() - p.mean();
    let trace = (&q_inv * p.cov()).trace();
    let quad = dm.dot(&(&q_inv * &dm));
    let kl = 0.5 * (trace + quad - p.dim() as f64 + q_logdet - p_logdet);
    Ok(kl.max(0.0))
}

/// Squared 2-Wasserstein distance between Gaussians:
/// `‖Δm‖² + tr(Σp + Σq − 2(Σq^{½} Σp Σq^{½})^{½})`.
pub fn gaussian_w2(p: &GaussianDist, q: &GaussianDist) -> Result<f64> {
    check_same_dim(p, q)?;
    let mean_part = (p.mean() - q.mean()).norm_squared();
    let q_half = linalg::sym_sqrt(q.cov());
    let cross = linalg::sym_sqrt(&linalg::symmetrize(&(&q_half * p.cov() * &q_half)));
    let cov_part = p.cov().trace() + q.cov().trace() - 2.0 * cross.trace();
    Ok(mean_part + cov_part.max(0.0))
}

/// Relative Fisher information
/// `FI(p‖q) = ‖Σq⁻¹Δm‖² + tr((Σq⁻¹ − Σp⁻¹) Σp (Σq⁻¹ − Σp⁻¹))`.
pub fn gaussian_relative_fi(p: &GaussianDist, q: &GaussianDist) -> Result<f64> {
    check_same_dim(p, q)?;
    let (p_inv, _) = linalg::spd_inverse_logdet(p.cov(), "covariance")?;
    let (q_inv, _) = linalg::spd_inverse_logdet(q.cov(), "reference covariance")?;
    let shift = &q_inv * (p.mean() - q.mean());
    let diff = &q_inv - &p_inv;
    let trace = (&diff * p.cov() * &diff).trace();
    Ok((shift.norm_squared() + trace).max(0.0))
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Exact 1-d `W₂` between two equal-size empirical measures (sorted matching).
pub fn empirical_w2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims("empirical samples", a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::param("samples", "need at least one sample"));
    }
    Ok(sorted_w2_sq(&sorted(a), &sorted(b)).sqrt())
}

fn sorted_w2_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Sliced `W₂`: root-mean of squared 1-d `W₂` over `n_projections` random
/// unit directions drawn from `stream`. Inputs are `n×m` sample matrices.
pub fn sliced_w2(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    n_projections: usize,
    stream: &mut NoiseStream,
) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::dims("sliced samples", a.nrows() * a.ncols(), b.nrows() * b.ncols()));
    }
    if n_projections == 0 {
        return Err(Error::param("n_projections", "must be at least 1"));
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::param("samples", "need at least one sample"));
    }
    let m = a.ncols();
    let mut dir = DVector::zeros(m);
    let mut total = 0.0;
    for _ in 0..n_projections {
        loop {
            stream.fill_standard_normal(dir.as_mut_slice());
            let norm = dir.norm();
            if norm > 0.0 {
                dir /= norm;
                break;
            }
        }
        let pa: Vec<f64> = (a * &dir).iter().copied().collect();
        let pb: Vec<f64> = (b * &dir).iter().copied().collect();
        total += sorted_w2_sq(&sorted(&pa), &sorted(&pb));
    }
    Ok((total / n_projections as f64).sqrt())
}
