//! Simulation harness: repeated runs, empirical FDP and TPP, parameter sweeps and reports.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cache::{CacheKey, NullCache};
use crate::error::{invalid, KopiError, Result};
use crate::inference::{select_ako, select_ebh, select_kopi, select_vanilla, SelectionResult};
use crate::jer::{calibrate_with_null, default_k_max, CalibrationConfig, CalibrationResult, Pairing};
use crate::pipeline::{draw_statistics_with, CovarianceSource, DrawStatistics, PipelineConfig};
use crate::pistats::{aggregate, AggregationKind, AggregationScheme};
use crate::rng::{tags, Stream};
use crate::simgen::{simulate, toeplitz_covariance, SimConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MethodSpec {
    Vanilla,
    EValues,
    Ako,
    Kopi { scheme: AggregationScheme },
}

impl MethodSpec {
    pub fn label(&self) -> String {
        match self {
            MethodSpec::Vanilla => "vanilla".into(),
            MethodSpec::EValues => "evalues".into(),
            MethodSpec::Ako => "ako".into(),
            MethodSpec::Kopi { scheme } => format!("kopi_{}", scheme.label()),
        }
    }

    /// The four baselines and KOPI with harmonic aggregation.
    pub fn defaults() -> Vec<MethodSpec> {
        vec![
            MethodSpec::Vanilla,
            MethodSpec::EValues,
            MethodSpec::Ako,
            MethodSpec::Kopi {
                scheme: AggregationScheme::harmonic(),
            },
        ]
    }

    /// KOPI with every aggregation scheme.
    pub fn all_kopi(gamma: f64) -> Vec<MethodSpec> {
        AggregationKind::ALL
            .iter()
            .map(|&kind| MethodSpec::Kopi {
                scheme: AggregationScheme::new(kind, gamma),
            })
            .collect()
    }
}

impl std::str::FromStr for MethodSpec {
    type Err = KopiError;

    /// `vanilla`, `evalues`, `ako`, `kopi` (harmonic) or `kopi_<scheme>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(MethodSpec::Vanilla),
            "evalues" | "ebh" => Ok(MethodSpec::EValues),
            "ako" => Ok(MethodSpec::Ako),
            "kopi" => Ok(MethodSpec::Kopi {
                scheme: AggregationScheme::harmonic(),
            }),
            other => match other.strip_prefix("kopi_") {
                Some(kind) => Ok(MethodSpec::Kopi {
                    scheme: AggregationScheme::new(kind.parse()?, 0.5),
                }),
                None => Err(invalid(format!("unknown method {other:?}"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub sim: SimConfig,
    pub pipeline: PipelineConfig,
    pub methods: Vec<MethodSpec>,
    pub q: f64,
    pub alpha: f64,
    pub b: usize,
    pub b_prime: usize,
    pub k_max: Option<usize>,
    pub pairing: Pairing,
    /// Quantile level used by the AKO baseline.
    pub gamma: f64,
    pub vanilla_strict: bool,
    pub calibration_seed: u64,
    pub record_timing: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sim: SimConfig::default(),
            pipeline: PipelineConfig {
                covariance: CovarianceSource::Oracle,
                ..PipelineConfig::default()
            },
            methods: MethodSpec::defaults(),
            q: 0.1,
            alpha: 0.1,
            b: 10_000,
            b_prime: 1_000,
            k_max: None,
            pairing: Pairing::Sorted,
            gamma: 0.5,
            vanilla_strict: false,
            calibration_seed: 0,
            record_timing: false,
        }
    }
}

impl BenchConfig {
    pub fn calibration_config(&self, p: usize, scheme: &AggregationScheme) -> CalibrationConfig {
        CalibrationConfig {
            p,
            draws: self.pipeline.draws,
            b: self.b,
            b_prime: self.b_prime,
            k_max: self.k_max.unwrap_or_else(|| default_k_max(p)).min(p),
            scheme: *scheme,
            pairing: self.pairing,
            alpha: self.alpha,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_id: usize,
    pub method: String,
    pub fdp: f64,
    /// Absent when the run has no signal variables.
    pub tpp: Option<f64>,
    pub selected_size: usize,
    /// Seconds; only recorded when timing is enabled, so reports stay reproducible otherwise.
    pub wall_time: Option<f64>,
}

/// FDP = |Ŝ∩H₀|/max(1,|Ŝ|) and TPP = |Ŝ∩H₁|/|H₁| (absent when H₁ is empty).
pub fn selection_metrics(selected: &[usize], support: &[usize]) -> (f64, Option<f64>) {
    let true_pos = selected.iter().filter(|j| support.contains(j)).count();
    let false_pos = selected.len() - true_pos;
    let fdp = false_pos as f64 / selected.len().max(1) as f64;
    let tpp = (!support.is_empty()).then(|| true_pos as f64 / support.len() as f64);
    (fdp, tpp)
}

/// Memoised calibrations keyed by (p, scheme), backed by the null cache.
pub struct CalibrationProvider<'a> {
    cache: &'a NullCache,
    memo: Mutex<HashMap<(usize, String), CalibrationResult>>,
}

impl<'a> CalibrationProvider<'a> {
    pub fn new(cache: &'a NullCache) -> Self {
        CalibrationProvider {
            cache,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, cfg: &BenchConfig, p: usize, scheme: &AggregationScheme) -> Result<CalibrationResult> {
        let key = (p, scheme.label());
        if let Some(r) = self.memo.lock().unwrap().get(&key) {
            return Ok(r.clone());
        }
        let cal_cfg = cfg.calibration_config(p, scheme);
        let null = self.cache.null_matrix(&CacheKey {
            p,
            b: cal_cfg.b,
            draws: cal_cfg.draws,
            scheme: *scheme,
            pairing: cal_cfg.pairing,
            seed: cfg.calibration_seed,
        })?;
        let result = calibrate_with_null(&cal_cfg, &null, cfg.calibration_seed)?;
        if result.degenerate {
            log::warn!("calibration for p={p}, {} is degenerate", scheme.label());
        }
        self.memo.lock().unwrap().insert(key, result.clone());
        Ok(result)
    }
}

/// Applies one method to shared draw statistics.
pub fn apply_method(
    method: &MethodSpec,
    stats: &DrawStatistics,
    cfg: &BenchConfig,
    calibrations: &CalibrationProvider<'_>,
) -> Result<SelectionResult> {
    let mut result = match method {
        MethodSpec::Vanilla => select_vanilla(&stats.w[0], cfg.q, cfg.vanilla_strict)?,
        MethodSpec::EValues => select_ebh(&stats.evalues, cfg.q)?,
        MethodSpec::Ako => select_ako(&stats.pi, cfg.gamma, cfg.q)?,
        MethodSpec::Kopi { scheme } => {
            let p = stats.pi[0].len();
            let cal = calibrations.get(cfg, p, scheme)?;
            let pibar = aggregate(&stats.pi, scheme)?;
            let mut r = select_kopi(&pibar, &cal.family, cfg.q)?;
            r.alpha = Some(cfg.alpha);
            r.sizes.b = Some(cfg.b);
            r.sizes.b_prime = Some(cfg.b_prime);
            r.sizes.k_max = Some(cal.family.k_max());
            r.sizes.lambda = Some(cal.lambda);
            r.seeds.insert("calibration".into(), cfg.calibration_seed);
            r
        }
    };
    result.method = method.label();
    result.sizes.draws = Some(stats.draws());
    Ok(result)
}

/// One simulated dataset, shared knockoff draws, every enabled method.
pub fn run_once(
    sim: &SimConfig,
    cfg: &BenchConfig,
    run_id: usize,
    stream: &Stream,
    calibrations: &CalibrationProvider<'_>,
) -> Result<Vec<RunMetrics>> {
    let sim = SimConfig {
        seed: stream.child(tags::DESIGN).derive_seed(),
        ..sim.clone()
    };
    let data = simulate(&sim)?;
    let sigma = toeplitz_covariance(sim.p, sim.rho);
    let stats = draw_statistics_with(
        &data.design,
        &data.response,
        &cfg.pipeline,
        &stream.child(tags::KNOCKOFF),
        Some(&sigma),
    )?;
    cfg.methods
        .iter()
        .map(|m| {
            let start = Instant::now();
            let sel = apply_method(m, &stats, cfg, calibrations)?;
            let (fdp, tpp) = selection_metrics(&sel.selected, &data.support);
            Ok(RunMetrics {
                run_id,
                method: sel.method,
                fdp,
                tpp,
                selected_size: sel.selected.len(),
                wall_time: cfg.record_timing.then(|| start.elapsed().as_secs_f64()),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    N,
    P,
    Rho,
    Sparsity,
    Snr,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::N => "n",
            SweepParam::P => "p",
            SweepParam::Rho => "rho",
            SweepParam::Sparsity => "sparsity",
            SweepParam::Snr => "snr",
        }
    }

    pub fn apply(&self, sim: &SimConfig, value: f64) -> Result<SimConfig> {
        let mut s = sim.clone();
        let as_count = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(invalid(format!("{} must be a positive integer, got {v}", self.name())))
            }
        };
        match self {
            SweepParam::N => s.n = as_count(value)?,
            SweepParam::P => s.p = as_count(value)?,
            SweepParam::Rho => s.rho = value,
            SweepParam::Sparsity => s.sparsity = value,
            SweepParam::Snr => s.snr = value,
        }
        s.validate()?;
        Ok(s)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SweepParam {
    type Err = KopiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(SweepParam::N),
            "p" => Ok(SweepParam::P),
            "rho" => Ok(SweepParam::Rho),
            "sparsity" | "s_p" => Ok(SweepParam::Sparsity),
            "snr" => Ok(SweepParam::Snr),
            other => Err(invalid(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub value: f64,
    #[serde(flatten)]
    pub metrics: RunMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub param: String,
    pub value: f64,
    pub method: String,
    pub runs: usize,
    pub violation_rate: f64,
    pub mean_fdp: f64,
    pub power: Option<f64>,
    pub mean_size: f64,
    pub band_half_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub param: String,
    pub grid: Vec<f64>,
    pub runs_per_point: usize,
    pub q: f64,
    pub alpha: f64,
    pub summary: Vec<SummaryRow>,
    pub runs: Vec<RunRecord>,
}

/// 2√(α(1−α)/N).
pub fn band_half_width(alpha: f64, runs: usize) -> f64 {
    2.0 * (alpha * (1.0 - alpha) / runs as f64).sqrt()
}

/// Summary rows recomputed from per-run records, in first-appearance order.
pub fn summarize(param: &str, records: &[RunRecord], q: f64, alpha: f64) -> Vec<SummaryRow> {
    let mut keys: Vec<(f64, String)> = Vec::new();
    for r in records {
        let k = (r.value, r.metrics.method.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(value, method)| {
            let rows: Vec<&RunMetrics> = records
                .iter()
                .filter(|r| r.value == value && r.metrics.method == method)
                .map(|r| &r.metrics)
                .collect();
            let n = rows.len();
            let tpps: Vec<f64> = rows.iter().filter_map(|m| m.tpp).collect();
            SummaryRow {
                param: param.to_string(),
                value,
                method,
                runs: n,
                violation_rate: rows.iter().filter(|m| m.fdp > q).count() as f64 / n as f64,
                mean_fdp: rows.iter().map(|m| m.fdp).sum::<f64>() / n as f64,
                power: (!tpps.is_empty()).then(|| tpps.iter().sum::<f64>() / tpps.len() as f64),
                mean_size: rows.iter().map(|m| m.selected_size as f64).sum::<f64>() / n as f64,
                band_half_width: band_half_width(alpha, n),
            }
        })
        .collect()
}

/// N runs at every grid value; run r uses the same random stream at every grid value.
pub fn run_sweep(
    base: &BenchConfig,
    param: SweepParam,
    grid: &[f64],
    runs: usize,
    master_seed: u64,
    cache: &NullCache,
) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(invalid("sweep grid is empty"));
    }
    if runs == 0 {
        return Err(invalid("need at least one run per grid point"));
    }
    let sims = grid
        .iter()
        .map(|&v| param.apply(&base.sim, v))
        .collect::<Result<Vec<_>>>()?;
    let calibrations = CalibrationProvider::new(cache);
    // calibrate up front so parallel runs only read the memo
    for sim in &sims {
        for m in &base.methods {
            if let MethodSpec::Kopi { scheme } = m {
                calibrations.get(base, sim.p, scheme)?;
            }
        }
    }
    let root = Stream::new(master_seed).child(tags::RUN);
    let jobs: Vec<(usize, usize)> = (0..sims.len()).flat_map(|g| (0..runs).map(move |r| (g, r))).collect();
    let job = |&(g, r): &(usize, usize)| -> Result<Vec<RunRecord>> {
        let metrics = run_once(&sims[g], base, r, &root.child(r as u64), &calibrations)?;
        log::debug!("{}={} run {r} done", param, grid[g]);
        Ok(metrics
            .into_iter()
            .map(|metrics| RunRecord {
                value: grid[g],
                metrics,
            })
            .collect())
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<Vec<RunRecord>>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(job).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<Vec<RunRecord>>> = jobs.iter().map(job).collect();
    let mut records = Vec::with_capacity(jobs.len() * base.methods.len());
    for r in results {
        records.extend(r?);
    }
    Ok(SweepReport {
        param: param.name().to_string(),
        grid: grid.to_vec(),
        runs_per_point: runs,
        q: base.q,
        alpha: base.alpha,
        summary: summarize(param.name(), &records, base.q, base.alpha),
        runs: records,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    /// One row per method and grid value.
    SummaryCsv,
    /// Whole report.
    Json,
    /// Columns param, value, method, metric, mean, band.
    LongCsv,
    /// One row per run and method.
    RunsCsv,
}

const SUMMARY_HEADER: [&str; 9] = [
    "param",
    "value",
    "method",
    "runs",
    "violation_rate",
    "mean_fdp",
    "power",
    "mean_size",
    "band_half_width",
];
const LONG_HEADER: [&str; 6] = ["param", "value", "method", "metric", "mean", "band"];
const RUNS_HEADER: [&str; 7] = ["value", "run_id", "method", "fdp", "tpp", "selected_size", "wall_time"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn emit_report(report: &SweepReport, format: ReportFormat, path: &Path) -> Result<()> {
    if format == ReportFormat::Json {
        fs::write(path, serde_json::to_string_pretty(report)? + "\n")?;
        return Ok(());
    }
    let mut w = csv::Writer::from_path(path)?;
    match format {
        ReportFormat::SummaryCsv => {
            w.write_record(SUMMARY_HEADER)?;
            for r in &report.summary {
                w.write_record([
                    r.param.clone(),
                    r.value.to_string(),
                    r.method.clone(),
                    r.runs.to_string(),
                    r.violation_rate.to_string(),
                    r.mean_fdp.to_string(),
                    opt(r.power),
                    r.mean_size.to_string(),
                    r.band_half_width.to_string(),
                ])?;
            }
        }
        ReportFormat::LongCsv => {
            w.write_record(LONG_HEADER)?;
            for r in &report.summary {
                let metrics = [
                    ("violation_rate", Some(r.violation_rate), Some(r.band_half_width)),
                    ("fdp", Some(r.mean_fdp), None),
                    ("power", r.power, None),
                    ("selected_size", Some(r.mean_size), None),
                ];
                for (name, mean, band) in metrics {
                    w.write_record([
                        r.param.clone(),
                        r.value.to_string(),
                        r.method.clone(),
                        name.to_string(),
                        opt(mean),
                        opt(band),
                    ])?;
                }
            }
        }
        ReportFormat::RunsCsv => {
            w.write_record(RUNS_HEADER)?;
            for r in &report.runs {
                let m = &r.metrics;
                w.write_record([
                    r.value.to_string(),
                    m.run_id.to_string(),
                    m.method.clone(),
                    m.fdp.to_string(),
                    opt(m.tpp),
                    m.selected_size.to_string(),
                    opt(m.wall_time),
                ])?;
            }
        }
        ReportFormat::Json => unreachable!(),
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_json(path: &Path) -> Result<SweepReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| invalid(format!("bad number {s:?}")))
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| invalid(format!("bad number {s:?}")))
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(SummaryRow {
                param: rec[0].to_string(),
                value: parse_num(&rec[1])?,
                method: rec[2].to_string(),
                runs: parse_num(&rec[3])?,
                violation_rate: parse_num(&rec[4])?,
                mean_fdp: parse_num(&rec[5])?,
                power: parse_opt(&rec[6])?,
                mean_size: parse_num(&rec[7])?,
                band_half_width: parse_num(&rec[8])?,
            })
        })
        .collect()
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(RunRecord {
                value: parse_num(&rec[0])?,
                metrics: RunMetrics {
                    run_id: parse_num(&rec[1])?,
                    method: rec[2].to_string(),
                    fdp: parse_num(&rec[3])?,
                    tpp: parse_opt(&rec[4])?,
                    selected_size: parse_num(&rec[5])?,
                    wall_time: parse_opt(&rec[6])?,
                },
            })
        })
        .collect()
}

/// Rows: schemes; columns: grid values; entries: power.
pub fn power_matrix(report: &SweepReport, methods: &[String]) -> Vec<Vec<Option<f64>>> {
    methods
        .iter()
        .map(|m| {
            report
                .grid
                .iter()
                .map(|&v| {
                    report
                        .summary
                        .iter()
                        .find(|r| r.value == v && &r.method == m)
                        .and_then(|r| r.power)
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BenchConfig {
        BenchConfig {
            sim: SimConfig {
                n: 60,
                p: 20,
                sparsity: 0.2,
                snr: 3.0,
                ..SimConfig::default()
            },
            pipeline: PipelineConfig {
                draws: 2,
                ..PipelineConfig::default()
            },
            b: 300,
            b_prime: 50,
            methods: {
                let mut m = MethodSpec::defaults();
                m.extend(MethodSpec::all_kopi(0.5).into_iter().skip(1));
                m
            },
            ..BenchConfig::default()
        }
    }

    #[test]
    fn metrics_for_oracle_and_null() {
        assert_eq!(selection_metrics(&[1, 4], &[1, 4]), (0.0, Some(1.0)));
        assert_eq!(selection_metrics(&[0, 2], &[]), (1.0, None));
        assert_eq!(selection_metrics(&[], &[3]), (0.0, Some(0.0)));
        assert_eq!(selection_metrics(&[1, 2, 3, 4], &[1, 9]), (0.75, Some(0.5)));
    }

    #[test]
    fn band_examples() {
        assert!((band_half_width(0.1, 1) - 0.6).abs() < 1e-12);
        assert!((band_half_width(0.1, 50) - 0.0849).abs() < 5e-5);
    }

    #[test]
    fn method_labels_parse_back() {
        for m in tiny().methods {
            assert_eq!(m.label().parse::<MethodSpec>().unwrap().label(), m.label());
        }
        assert!("magic".parse::<MethodSpec>().is_err());
        assert!("temperature".parse::<SweepParam>().is_err());
    }

    #[test]
    fn sweep_is_deterministic_and_round_trips() {
        let cfg = tiny();
        let cache = NullCache::disabled();
        let report = run_sweep(&cfg, SweepParam::Rho, &[0.3, 0.6], 2, 7, &cache).unwrap();
        assert_eq!(report.runs.len(), 2 * 2 * cfg.methods.len());
        assert_eq!(report.summary.len(), 2 * cfg.methods.len());
        assert_eq!(
            report,
            run_sweep(&cfg, SweepParam::Rho, &[0.3, 0.6], 2, 7, &cache).unwrap()
        );
        assert_eq!(summarize("rho", &report.runs, cfg.q, cfg.alpha), report.summary);

        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("r.json");
        emit_report(&report, ReportFormat::Json, &json).unwrap();
        assert_eq!(read_report_json(&json).unwrap(), report);
        let csv = dir.path().join("s.csv");
        emit_report(&report, ReportFormat::SummaryCsv, &csv).unwrap();
        assert_eq!(read_summary_csv(&csv).unwrap(), report.summary);
        let runs = dir.path().join("runs.csv");
        emit_report(&report, ReportFormat::RunsCsv, &runs).unwrap();
        let parsed = read_runs_csv(&runs).unwrap();
        assert_eq!(parsed, report.runs);
        assert_eq!(summarize("rho", &parsed, cfg.q, cfg.alpha), report.summary);
        let long = dir.path().join("long.csv");
        emit_report(&report, ReportFormat::LongCsv, &long).unwrap();
        let text = fs::read_to_string(&long).unwrap();
        assert!(text.starts_with("param,value,method,metric,mean,band"));
        assert_eq!(text.lines().count(), 1 + 4 * report.summary.len());

        let names: Vec<String> = MethodSpec::all_kopi(0.5).iter().map(|m| m.label()).collect();
        let matrix = power_matrix(&report, &names);
        assert_eq!(matrix.len(), 4);
        assert!(matrix
            .iter()
            .all(|row| row.len() == 2 && row.iter().all(|v| v.is_some())));
    }

    #[test]
    fn empty_report_gives_header_only_csv() {
        let report = SweepReport {
            param: "rho".into(),
            grid: vec![],
            runs_per_point: 0,
            q: 0.1,
            alpha: 0.1,
            summary: vec![],
            runs: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        emit_report(&report, ReportFormat::SummaryCsv, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 1);
        assert!(read_summary_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn global_null_runs_report_no_power() {
        let cfg = tiny();
        let cache = NullCache::disabled();
        let calibrations = CalibrationProvider::new(&cache);
        let data = crate::simgen::simulate_global_null(60, 20, 0.5, 3).unwrap();
        let stats =
            crate::pipeline::draw_statistics(&data.design, &data.response, &cfg.pipeline, &Stream::new(1)).unwrap();
        for m in &cfg.methods {
            let sel = apply_method(m, &stats, &cfg, &calibrations).unwrap();
            let (fdp, tpp) = selection_metrics(&sel.selected, &data.support);
            assert_eq!(tpp, None);
            assert_eq!(fdp, if sel.selected.is_empty() { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn invalid_grid_values() {
        let cfg = tiny();
        let cache = NullCache::disabled();
        assert!(run_sweep(&cfg, SweepParam::N, &[10.5], 1, 0, &cache).is_err());
        assert!(run_sweep(&cfg, SweepParam::Rho, &[], 1, 0, &cache).is_err());
    }
}
