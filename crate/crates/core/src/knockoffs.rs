//! Knockoff copies of a design matrix.
//!
//! Two samplers: second-order Gaussian knockoffs with the equicorrelated
//! choice of `s`, and a sequential residual-permutation sampler that only
//! relies on linear Lasso fits of each column on the others.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, KopiError, Result};
use crate::lasso::{cross_validate, fit_lasso_with, Blocks, LassoConfig, SolverOptions};
use crate::rng::{tags, Stream};

/// Smallest eigenvalue accepted for Σ̂.
const MIN_EIGENVALUE: f64 = 1e-12;
/// Negative eigenvalues of 2S − SΣ̂⁻¹S down to this level are round-off.
const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnockoffMethod {
    Gaussian,
    Sequential,
}

impl std::str::FromStr for KnockoffMethod {
    type Err = KopiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KnockoffMethod::Gaussian),
            "sequential" => Ok(KnockoffMethod::Sequential),
            other => Err(invalid(format!("unknown knockoff method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct KnockoffDraw {
    pub xtilde: DMatrix<f64>,
    pub draw_seed: u64,
    pub method: KnockoffMethod,
}

/// Gaussian knockoff model on the correlation scale of the data.
#[derive(Clone, Debug)]
pub struct GaussianKnockoffModel {
    pub sigma_hat: DMatrix<f64>,
    pub s_vec: DVector<f64>,
    /// I − Σ̂⁻¹S
    pub cond_mean_map: DMatrix<f64>,
    /// C with CᵀC = 2S − SΣ̂⁻¹S
    pub cond_cov_factor: DMatrix<f64>,
    /// Column standard deviations mapping the data to the correlation scale.
    pub scales: DVector<f64>,
    pub means: DVector<f64>,
    /// Ledoit-Wolf intensity used when the model was fitted from data.
    pub shrinkage: f64,
}

impl GaussianKnockoffModel {
    /// Shrinkage covariance estimate rescaled to unit diagonal, then the equicorrelated construction.
    pub fn fit(x: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(invalid(format!("need at least 2 samples, got {n}")));
        }
        let nf = n as f64;
        let means = DVector::from_iterator(p, x.column_iter().map(|c| c.sum() / nf));
        let mut z = x.clone();
        let mut scales = DVector::zeros(p);
        for (j, mut col) in z.column_iter_mut().enumerate() {
            col.add_scalar_mut(-means[j]);
            let sd = (col.norm_squared() / nf).sqrt();
            if sd == 0.0 {
                return Err(KopiError::Conditioning(format!("column {j} is constant")));
            }
            col /= sd;
            scales[j] = sd;
        }
        let (sigma_hat, shrinkage) = ledoit_wolf_correlation(&z);
        let mut model = Self::from_correlation(sigma_hat)?;
        model.scales = scales;
        model.means = means;
        model.shrinkage = shrinkage;
        Ok(model)
    }

    /// Builds the model for a known correlation matrix (unit scales, zero means).
    pub fn from_correlation(sigma: DMatrix<f64>) -> Result<Self> {
        let p = sigma.nrows();
        if sigma.ncols() != p || p == 0 {
            return Err(invalid("correlation matrix must be square and non-empty"));
        }
        let asym = (&sigma - sigma.transpose()).abs().max();
        if asym > 1e-10 {
            return Err(invalid(format!("correlation matrix is not symmetric ({asym:e})")));
        }
        let eig = SymmetricEigen::new(sigma.clone());
        let lambda_min = eig.eigenvalues.min();
        if !(lambda_min > MIN_EIGENVALUE) {
            return Err(KopiError::Conditioning(format!(
                "covariance estimate is singular (smallest eigenvalue {lambda_min:e})"
            )));
        }
        let s = (2.0 * lambda_min).min(1.0);
        let s_vec = DVector::from_element(p, s);
        let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
        let sigma_inv = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
        let s_mat = DMatrix::from_diagonal(&s_vec);
        let cond_mean_map = DMatrix::identity(p, p) - &sigma_inv * &s_mat;
        let mut cov = &s_mat * 2.0 - &s_mat * &sigma_inv * &s_mat;
        cov = (&cov + cov.transpose()) * 0.5;
        let cond_cov_factor = psd_factor(cov)?;
        Ok(GaussianKnockoffModel {
            sigma_hat: sigma,
            s_vec,
            cond_mean_map,
            cond_cov_factor,
            scales: DVector::from_element(p, 1.0),
            means: DVector::zeros(p),
            shrinkage: 0.0,
        })
    }

    pub fn p(&self) -> usize {
        self.sigma_hat.nrows()
    }

    /// Target covariance of (x, x̃) on the correlation scale.
    pub fn joint_covariance(&self) -> DMatrix<f64> {
        let p = self.p();
        let off = &self.sigma_hat - DMatrix::from_diagonal(&self.s_vec);
        let mut g = DMatrix::zeros(2 * p, 2 * p);
        g.view_mut((0, 0), (p, p)).copy_from(&self.sigma_hat);
        g.view_mut((p, p), (p, p)).copy_from(&self.sigma_hat);
        g.view_mut((0, p), (p, p)).copy_from(&off);
        g.view_mut((p, 0), (p, p)).copy_from(&off);
        g
    }

    /// Target covariance of (x, x̃) in the units of the data.
    pub fn joint_covariance_data_scale(&self) -> DMatrix<f64> {
        let p = self.p();
        let d = DVector::from_iterator(2 * p, self.scales.iter().chain(self.scales.iter()).copied());
        let dm = DMatrix::from_diagonal(&d);
        &dm * self.joint_covariance() * &dm
    }
}

/// Returns C with CᵀC = m for a symmetric matrix that is PSD up to round-off.
fn psd_factor(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m);
    let min = eig.eigenvalues.min();
    if min < -PSD_TOLERANCE {
        return Err(KopiError::Conditioning(format!(
            "knockoff conditional covariance is not PSD (eigenvalue {min:e})"
        )));
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Ledoit-Wolf shrinkage of the sample correlation toward the identity.
/// `z` must have centred, unit-variance columns.
fn ledoit_wolf_correlation(z: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let (n, p) = z.shape();
    let nf = n as f64;
    let mut r = z.transpose() * z / nf;
    for j in 0..p {
        r[(j, j)] = 1.0;
    }
    let target_dist = (&r - DMatrix::identity(p, p)).norm_squared();
    let row_fourth: f64 = z.row_iter().map(|row| row.norm_squared().powi(2)).sum();
    let spread = ((row_fourth - nf * r.norm_squared()) / (nf * nf)).max(0.0);
    let intensity = if target_dist > 0.0 {
        (spread / target_dist).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let shrunk = &r * (1.0 - intensity) + DMatrix::identity(p, p) * intensity;
    (shrunk, intensity)
}

/// Each row: x̃ = x(I − Σ̂⁻¹S) + zC on the correlation scale, mapped back to data units.
pub fn sample_gaussian_knockoffs(
    x: &DMatrix<f64>,
    model: &GaussianKnockoffModel,
    stream: &Stream,
) -> Result<KnockoffDraw> {
    let (n, p) = x.shape();
    if p != model.p() {
        return Err(invalid(format!(
            "model has {} variables but the design has {p}",
            model.p()
        )));
    }
    let mut rng = stream.rng();
    let mut standardized = x.clone();
    for (j, mut col) in standardized.column_iter_mut().enumerate() {
        col.add_scalar_mut(-model.means[j]);
        col /= model.scales[j];
    }
    let noise = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut xtilde = standardized * &model.cond_mean_map + noise * &model.cond_cov_factor;
    for (j, mut col) in xtilde.column_iter_mut().enumerate() {
        col *= model.scales[j];
        col.add_scalar_mut(model.means[j]);
    }
    Ok(KnockoffDraw {
        xtilde,
        draw_seed: stream.id(),
        method: KnockoffMethod::Gaussian,
    })
}

/// Per-column linear fits X_j ≈ X_{−j}β̂_j used by the sequential sampler.
#[derive(Clone, Debug)]
pub struct ColumnFits {
    pub fitted: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
}

pub fn fit_columns(x: &DMatrix<f64>, cfg: &LassoConfig, stream: &Stream) -> Result<ColumnFits> {
    let (n, p) = x.shape();
    if n < 3 {
        return Err(invalid(format!("need at least 3 samples, got {n}")));
    }
    if p < 2 {
        return Err(invalid("need at least 2 variables"));
    }
    let mut fitted = DMatrix::zeros(n, p);
    let mut residuals = DMatrix::zeros(n, p);
    for j in 0..p {
        let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let mut a = x.select_columns(&others);
        crate::simgen::center_columns(&mut a);
        let target = x.column(j).into_owned();
        let tmean = target.mean();
        let tc = target.add_scalar(-tmean);
        let cv = cross_validate(
            &a,
            &tc,
            cfg,
            Blocks::Single,
            &mut stream.child(tags::CROSS_VALIDATION).child(j as u64).rng(),
        )?;
        let fit = fit_lasso_with(
            &a,
            &tc,
            cv.lambda,
            &SolverOptions {
                tol: cfg.tol,
                max_iter: cfg.max_iter,
                ..SolverOptions::default()
            },
        )?;
        let pred = &a * DVector::from_column_slice(&fit.coefficients);
        let fit_col = pred.add_scalar(tmean);
        let res = &target - &fit_col;
        fitted.set_column(j, &fit_col);
        residuals.set_column(j, &res);
    }
    Ok(ColumnFits { fitted, residuals })
}

/// X̃_j = X_{−j}β̂_j + ε_{ρ(j)} for a uniformly random ordering ρ.
pub fn sample_sequential_knockoffs(x: &DMatrix<f64>, cfg: &LassoConfig, stream: &Stream) -> Result<KnockoffDraw> {
    let fits = fit_columns(x, cfg, stream)?;
    let mut perm: Vec<usize> = (0..x.ncols()).collect();
    perm.shuffle(&mut stream.child(tags::KNOCKOFF).rng());
    let xtilde = permute_residuals(x, &fits, &perm)?;
    Ok(KnockoffDraw {
        xtilde,
        draw_seed: stream.id(),
        method: KnockoffMethod::Sequential,
    })
}

/// Reassembles knockoff columns from fitted values and the residuals picked by `perm`.
pub fn permute_residuals(x: &DMatrix<f64>, fits: &ColumnFits, perm: &[usize]) -> Result<DMatrix<f64>> {
    let p = x.ncols();
    if perm.len() != p {
        return Err(invalid("permutation length differs from the variable count"));
    }
    let mut seen = vec![false; p];
    for &k in perm {
        if k >= p || std::mem::replace(&mut seen[k], true) {
            return Err(invalid("not a permutation"));
        }
    }
    let mut xtilde = DMatrix::zeros(x.nrows(), p);
    for (j, &k) in perm.iter().enumerate() {
        if k == j {
            // fitted + own residual is X_j; copy to avoid round-off
            xtilde.set_column(j, &x.column(j));
        } else {
            let col = fits.fitted.column(j) + fits.residuals.column(k);
            xtilde.set_column(j, &col);
        }
    }
    Ok(xtilde)
}
