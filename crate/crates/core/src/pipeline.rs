//! D knockoff draws turned into per-draw W, π and e-value vectors.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::knockoffs::{
    fit_columns, permute_residuals, sample_gaussian_knockoffs, GaussianKnockoffModel, KnockoffMethod,
};
use crate::lasso::{augmented_design, cross_validate, lcd_statistic_with, Blocks, LassoConfig};
use crate::pistats::{evalues_from_w, sign_process_pi};
use crate::rng::{tags, Stream};

/// Where the Gaussian knockoff model gets its correlation matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    /// Shrinkage estimate from the design.
    LedoitWolf,
    /// The known population correlation, for simulations.
    Oracle,
}

impl std::str::FromStr for CovarianceSource {
    type Err = crate::error::KopiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ledoit_wolf" => Ok(CovarianceSource::LedoitWolf),
            "oracle" => Ok(CovarianceSource::Oracle),
            other => Err(invalid(format!("unknown covariance source {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub draws: usize,
    pub method: KnockoffMethod,
    pub lasso: LassoConfig,
    /// Cross-validate once on the first draw and reuse λ for the others.
    pub shared_lambda: bool,
    pub q_e: f64,
    pub covariance: CovarianceSource,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            draws: 50,
            method: KnockoffMethod::Gaussian,
            lasso: LassoConfig::default(),
            shared_lambda: false,
            q_e: 0.05,
            covariance: CovarianceSource::LedoitWolf,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawStatistics {
    pub w: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
    pub evalues: Vec<Vec<f64>>,
    pub lambdas: Vec<f64>,
    pub draw_ids: Vec<u64>,
}

impl DrawStatistics {
    pub fn draws(&self) -> usize {
        self.w.len()
    }
}

enum Sampler {
    Gaussian(GaussianKnockoffModel),
    Sequential(crate::knockoffs::ColumnFits),
}

/// Runs the knockoff draws on a fixed design and response.
pub fn draw_statistics(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &PipelineConfig,
    stream: &Stream,
) -> Result<DrawStatistics> {
    draw_statistics_with(x, y, cfg, stream, None)
}

/// As `draw_statistics`; `known` is the population correlation used by `CovarianceSource::Oracle`.
pub fn draw_statistics_with(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &PipelineConfig,
    stream: &Stream,
    known: Option<&DMatrix<f64>>,
) -> Result<DrawStatistics> {
    if cfg.draws == 0 {
        return Err(invalid("D must be at least 1"));
    }
    if x.nrows() != y.len() {
        return Err(invalid(format!(
            "design has {} rows but the response has {}",
            x.nrows(),
            y.len()
        )));
    }
    let sampler = match cfg.method {
        KnockoffMethod::Gaussian => Sampler::Gaussian(match (cfg.covariance, known) {
            (CovarianceSource::LedoitWolf, _) => GaussianKnockoffModel::fit(x)?,
            (CovarianceSource::Oracle, Some(sigma)) => GaussianKnockoffModel::from_correlation(sigma.clone())?,
            (CovarianceSource::Oracle, None) => {
                return Err(invalid(
                    "oracle covariance requested but no population correlation is known",
                ))
            }
        }),
        KnockoffMethod::Sequential => Sampler::Sequential(fit_columns(x, &cfg.lasso, &stream.child(tags::KNOCKOFF))?),
    };
    let yc = y.add_scalar(-y.mean());
    let mut out = DrawStatistics {
        w: Vec::with_capacity(cfg.draws),
        pi: Vec::with_capacity(cfg.draws),
        evalues: Vec::with_capacity(cfg.draws),
        lambdas: Vec::with_capacity(cfg.draws),
        draw_ids: Vec::with_capacity(cfg.draws),
    };
    let mut shared = None;
    for d in 0..cfg.draws {
        let draw_stream = stream.child(tags::KNOCKOFF).child(d as u64);
        let xtilde = match &sampler {
            Sampler::Gaussian(model) => sample_gaussian_knockoffs(x, model, &draw_stream)?.xtilde,
            Sampler::Sequential(fits) => {
                let mut perm: Vec<usize> = (0..x.ncols()).collect();
                perm.shuffle(&mut draw_stream.rng());
                permute_residuals(x, fits, &perm)?
            }
        };
        let lambda = match shared {
            Some(l) => l,
            None => {
                let a = augmented_design(x, &xtilde)?;
                let mut rng = stream.child(tags::CROSS_VALIDATION).child(d as u64).rng();
                let l = cross_validate(&a, &yc, &cfg.lasso, Blocks::KnockoffPairs, &mut rng)?.lambda;
                if cfg.shared_lambda {
                    shared = Some(l);
                }
                l
            }
        };
        let (w, _) = lcd_statistic_with(x, &xtilde, y, lambda, &cfg.lasso)?;
        out.pi.push(sign_process_pi(&w.values).values);
        out.evalues.push(evalues_from_w(&w.values, cfg.q_e).values);
        out.w.push(w.values);
        out.lambdas.push(lambda);
        out.draw_ids.push(draw_stream.id());
    }
    Ok(out)
}
