//! Flat key-value configuration with command-line overrides.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use kopi::bench::{BenchConfig, MethodSpec, SweepParam};
use kopi::jer::Pairing;
use kopi::knockoffs::KnockoffMethod;
use kopi::lasso::LassoConfig;
use kopi::pipeline::{CovarianceSource, PipelineConfig};
use kopi::pistats::{AggregationKind, AggregationScheme};
use kopi::simgen::SimConfig;

use crate::CliError;

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    /// CSV with a `y` column; when absent, data are simulated from the keys below.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub sparsity: f64,
    pub snr: f64,
    pub standardize: bool,

    pub knockoff_method: KnockoffMethod,
    /// Defaults to the population correlation for simulated data and Ledoit-Wolf for datasets.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceSource>,
    pub draws: usize,
    pub b: usize,
    pub b_prime: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    pub alpha: f64,
    pub q: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_e: Option<f64>,
    pub aggregation: AggregationKind,
    pub gamma: f64,
    pub pairing: Pairing,
    pub methods: Vec<String>,
    pub vanilla_strict: bool,

    pub folds: usize,
    pub grid_size: usize,
    pub lambda_min_ratio: f64,
    pub lasso_tol: f64,
    pub lasso_max_iter: usize,
    pub cv_tol: f64,
    pub cv_max_iter: usize,
    pub cv_patience: usize,
    pub shared_lambda: bool,

    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    pub output: PathBuf,

    pub stability_runs: usize,

    pub sweep_param: String,
    pub sweep_values: Vec<f64>,
    pub runs: usize,
    pub record_timing: bool,
}

impl Default for AppConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        let lasso = LassoConfig::default();
        AppConfig {
            dataset: None,
            n: sim.n,
            p: sim.p,
            rho: sim.rho,
            sparsity: sim.sparsity,
            snr: sim.snr,
            standardize: sim.standardize,
            knockoff_method: KnockoffMethod::Gaussian,
            covariance: None,
            draws: 50,
            b: 10_000,
            b_prime: 1_000,
            k_max: None,
            alpha: 0.1,
            q: 0.1,
            q_e: None,
            aggregation: AggregationKind::Harmonic,
            gamma: 0.5,
            pairing: Pairing::Sorted,
            methods: vec!["kopi".into(), "vanilla".into(), "evalues".into(), "ako".into()],
            vanilla_strict: false,
            folds: lasso.folds,
            grid_size: lasso.grid_size,
            lambda_min_ratio: lasso.lambda_min_ratio,
            lasso_tol: lasso.tol,
            lasso_max_iter: lasso.max_iter,
            cv_tol: lasso.cv_tol,
            cv_max_iter: lasso.cv_max_iter,
            cv_patience: lasso.cv_patience,
            shared_lambda: false,
            seed: 0,
            cache_dir: None,
            output: PathBuf::from("kopi-out"),
            stability_runs: 0,
            sweep_param: "rho".into(),
            sweep_values: vec![0.5],
            runs: 50,
            record_timing: false,
        }
    }
}

/// Every config key as an optional flag of the same name.
#[derive(Args, Debug, Default, Clone)]
#[command(rename_all = "snake_case")]
pub struct Overrides {
    /// Flat TOML file; flags override its values.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub sparsity: Option<f64>,
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub standardize: Option<bool>,
    #[arg(long)]
    pub knockoff_method: Option<String>,
    #[arg(long)]
    pub covariance: Option<String>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub b: Option<usize>,
    #[arg(long)]
    pub b_prime: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub q_e: Option<f64>,
    #[arg(long)]
    pub aggregation: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub pairing: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub vanilla_strict: Option<bool>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub lambda_min_ratio: Option<f64>,
    #[arg(long)]
    pub lasso_tol: Option<f64>,
    #[arg(long)]
    pub lasso_max_iter: Option<usize>,
    #[arg(long)]
    pub cv_tol: Option<f64>,
    #[arg(long)]
    pub cv_max_iter: Option<usize>,
    #[arg(long)]
    pub cv_patience: Option<usize>,
    #[arg(long)]
    pub shared_lambda: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub stability_runs: Option<usize>,
    #[arg(long)]
    pub sweep_param: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_values: Option<Vec<f64>>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub record_timing: Option<bool>,
}

fn parsed<T: std::str::FromStr<Err = kopi::KopiError>>(v: &str) -> Result<T, CliError> {
    v.parse().map_err(|e: kopi::KopiError| CliError::Config(e.to_string()))
}

macro_rules! take {
    ($cfg:ident, $o:ident, $($field:ident),*) => {
        $(if let Some(v) = $o.$field.clone() { $cfg.$field = v; })*
    };
}

impl AppConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Defaults, then the config file, then flags, then environment.
    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match &o.config {
            Some(path) => AppConfig::from_file(path)?,
            None => AppConfig::default(),
        };
        take!(
            cfg,
            o,
            n,
            p,
            rho,
            sparsity,
            snr,
            standardize,
            draws,
            b,
            b_prime,
            alpha,
            q,
            gamma,
            methods,
            vanilla_strict,
            folds,
            grid_size,
            lambda_min_ratio,
            lasso_tol,
            lasso_max_iter,
            cv_tol,
            cv_max_iter,
            cv_patience,
            shared_lambda,
            seed,
            output,
            stability_runs,
            sweep_param,
            sweep_values,
            runs,
            record_timing
        );
        if o.dataset.is_some() {
            cfg.dataset = o.dataset.clone();
        }
        if o.k_max.is_some() {
            cfg.k_max = o.k_max;
        }
        if o.q_e.is_some() {
            cfg.q_e = o.q_e;
        }
        if o.cache_dir.is_some() {
            cfg.cache_dir = o.cache_dir.clone();
        }
        if let Some(v) = &o.knockoff_method {
            cfg.knockoff_method = parsed(v)?;
        }
        if let Some(v) = &o.covariance {
            cfg.covariance = Some(parsed(v)?);
        }
        if let Some(v) = &o.aggregation {
            cfg.aggregation = parsed(v)?;
        }
        if let Some(v) = &o.pairing {
            cfg.pairing = parsed(v)?;
        }
        if let Ok(dir) = std::env::var("KOPI_CACHE_DIR") {
            if !dir.is_empty() {
                cfg.cache_dir = Some(PathBuf::from(dir));
            }
        }
        cfg.covariance.get_or_insert(match cfg.dataset {
            Some(_) => CovarianceSource::LedoitWolf,
            None => CovarianceSource::Oracle,
        });
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad(format!("q must lie in (0, 1), got {}", self.q));
        }
        if let Some(qe) = self.q_e {
            if !(qe > 0.0 && qe < 1.0) {
                return bad(format!("q_e must lie in (0, 1), got {qe}"));
            }
        }
        if self.draws == 0 || self.b == 0 || self.b_prime == 0 {
            return bad("draws, b and b_prime must be positive".into());
        }
        if self.k_max == Some(0) {
            return bad("k_max must be positive".into());
        }
        if self.runs == 0 {
            return bad("runs must be positive".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        self.method_specs()?;
        self.scheme().validate()?;
        self.sweep()?;
        if self.dataset.is_some() && self.covariance == Some(CovarianceSource::Oracle) {
            return bad("the oracle covariance is only available for simulated data".into());
        }
        if self.dataset.is_none() {
            // sparsity 0 selects the global null
            let sparsity = if self.sparsity == 0.0 { 1.0 } else { self.sparsity };
            SimConfig {
                sparsity,
                ..self.sim_config()
            }
            .validate()?;
        }
        Ok(())
    }

    pub fn scheme(&self) -> AggregationScheme {
        AggregationScheme::new(self.aggregation, self.gamma)
    }

    /// `kopi` uses the configured scheme; `kopi_<scheme>` names one explicitly.
    pub fn method_specs(&self) -> Result<Vec<MethodSpec>, CliError> {
        self.methods
            .iter()
            .map(|m| {
                let spec = if m == "kopi" {
                    MethodSpec::Kopi { scheme: self.scheme() }
                } else {
                    parsed::<MethodSpec>(m)?
                };
                Ok(match spec {
                    MethodSpec::Kopi { scheme } => MethodSpec::Kopi {
                        scheme: AggregationScheme::new(scheme.kind, self.gamma),
                    },
                    other => other,
                })
            })
            .collect()
    }

    pub fn sweep(&self) -> Result<(SweepParam, Vec<f64>), CliError> {
        if self.sweep_values.is_empty() {
            return Err(CliError::Config("sweep_values is empty".into()));
        }
        Ok((parsed(&self.sweep_param)?, self.sweep_values.clone()))
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            n: self.n,
            p: self.p,
            rho: self.rho,
            sparsity: self.sparsity,
            snr: self.snr,
            seed: self.seed,
            standardize: self.standardize,
        }
    }

    pub fn lasso_config(&self) -> LassoConfig {
        LassoConfig {
            tol: self.lasso_tol,
            max_iter: self.lasso_max_iter,
            folds: self.folds,
            grid_size: self.grid_size,
            lambda_min_ratio: self.lambda_min_ratio,
            cv_tol: self.cv_tol,
            cv_max_iter: self.cv_max_iter,
            cv_patience: self.cv_patience,
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            draws: self.draws,
            method: self.knockoff_method,
            lasso: self.lasso_config(),
            shared_lambda: self.shared_lambda,
            q_e: self.q_e.unwrap_or(self.q / 2.0),
            covariance: self.covariance.unwrap_or(CovarianceSource::Oracle),
        }
    }

    pub fn bench_config(&self) -> Result<BenchConfig, CliError> {
        Ok(BenchConfig {
            sim: self.sim_config(),
            pipeline: self.pipeline_config(),
            methods: self.method_specs()?,
            q: self.q,
            alpha: self.alpha,
            b: self.b,
            b_prime: self.b_prime,
            k_max: self.k_max,
            pairing: self.pairing,
            gamma: self.gamma,
            vanilla_strict: self.vanilla_strict,
            calibration_seed: self.seed,
            record_timing: self.record_timing,
        })
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output.join("cache"))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = AppConfig::default();
        let text = cfg.to_toml().unwrap();
        let back: AppConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<AppConfig>("colour = 3").is_err());
        let partial: AppConfig = toml::from_str("q = 0.2\npairing = \"rank\"").unwrap();
        assert_eq!(partial.q, 0.2);
        assert_eq!(partial.pairing, Pairing::Rank);
        assert_eq!(partial.draws, 50);
    }

    #[test]
    fn validation_catches_bad_levels() {
        let cfg = AppConfig {
            alpha: 1.5,
            ..AppConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = AppConfig {
            methods: vec!["kopi_median".into()],
            ..AppConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn kopi_method_follows_configured_scheme() {
        let cfg = AppConfig {
            aggregation: AggregationKind::Geometric,
            methods: vec!["kopi".into(), "kopi_quantile".into()],
            gamma: 0.3,
            ..AppConfig::default()
        };
        let specs = cfg.method_specs().unwrap();
        assert_eq!(specs[0].label(), "kopi_geometric");
        assert_eq!(specs[1].label(), "kopi_quantile0.3");
    }
}
