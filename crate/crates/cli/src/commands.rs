use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use kopi::bench::{apply_method, emit_report, run_sweep, CalibrationProvider, MethodSpec, ReportFormat};
use kopi::cache::{CacheKey, NullCache};
use kopi::io::{feature_names, load_dataset, write_simulation};
use kopi::jer::{calibrate_with_null, CalibrationConfig, CalibrationResult};
use kopi::pipeline::draw_statistics_with;
use kopi::rng::tags;
use kopi::simgen::{self, simulate_global_null, toeplitz_covariance, SimulatedDataset};
use kopi::{KopiError, Stream};

use crate::config::{AppConfig, RESOLVED_CONFIG};
use crate::CliError;

/// Creates the output directory and writes the resolved configuration into it.
fn prepare_output(cfg: &AppConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.output)?;
    fs::write(cfg.output.join(RESOLVED_CONFIG), cfg.to_toml()?)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(KopiError::from)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn report_cache(cache: &NullCache) {
    eprintln!("null cache: {} hits, {} misses", cache.hits(), cache.misses());
}

fn simulated(cfg: &AppConfig) -> Result<SimulatedDataset, CliError> {
    let sim = cfg.sim_config();
    Ok(if sim.support_size() == 0 {
        simulate_global_null(sim.n, sim.p, sim.rho, sim.seed)?
    } else {
        simgen::simulate(&sim)?
    })
}

pub fn simulate(cfg: &AppConfig) -> Result<(), CliError> {
    prepare_output(cfg)?;
    let data = simulated(cfg)?;
    write_simulation(
        &cfg.output.join("dataset.csv"),
        &cfg.output.join("dataset.support.json"),
        &cfg.sim_config(),
        &data,
    )?;
    Ok(())
}

/// Design, response, names and, for simulations, the support and population correlation.
struct Problem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    names: Vec<String>,
    support: Option<Vec<usize>>,
    sigma: Option<DMatrix<f64>>,
}

fn problem(cfg: &AppConfig) -> Result<Problem, CliError> {
    match &cfg.dataset {
        Some(path) => {
            let d = load_dataset(path)?;
            Ok(Problem {
                x: d.x,
                y: d.y,
                names: d.names,
                support: None,
                sigma: None,
            })
        }
        None => {
            let data = simulated(cfg)?;
            Ok(Problem {
                names: feature_names(data.p()),
                sigma: Some(toeplitz_covariance(data.p(), cfg.rho)),
                support: Some(data.support),
                x: data.design,
                y: data.response,
            })
        }
    }
}

fn problem_p(cfg: &AppConfig) -> Result<usize, CliError> {
    Ok(match &cfg.dataset {
        Some(path) => load_dataset(path)?.p(),
        None => cfg.p,
    })
}

#[derive(Serialize)]
struct CalibrationReport {
    config: CalibrationConfig,
    seed: u64,
    cache_file: Option<String>,
    result: CalibrationResult,
}

pub fn calibrate(cfg: &AppConfig) -> Result<(), CliError> {
    prepare_output(cfg)?;
    let p = problem_p(cfg)?;
    let bench = cfg.bench_config()?;
    let cal_cfg = bench.calibration_config(p, &cfg.scheme());
    cal_cfg.validate()?;
    let cache = NullCache::new(cfg.cache_dir());
    let key = CacheKey {
        p,
        b: cal_cfg.b,
        draws: cal_cfg.draws,
        scheme: cal_cfg.scheme,
        pairing: cal_cfg.pairing,
        seed: cfg.seed,
    };
    let null = cache.null_matrix(&key)?;
    let result = calibrate_with_null(&cal_cfg, &null, cfg.seed)?;
    if result.degenerate {
        log::warn!("no template member controls the JER at alpha={}", cfg.alpha);
    }
    report_cache(&cache);
    write_json(
        &cfg.output.join("calibration.json"),
        &CalibrationReport {
            config: cal_cfg,
            seed: cfg.seed,
            cache_file: Some(key.file_name()),
            result,
        },
    )
}

pub fn infer(cfg: &AppConfig) -> Result<(), CliError> {
    prepare_output(cfg)?;
    let prob = problem(cfg)?;
    let bench = cfg.bench_config()?;
    let cache = NullCache::new(cfg.cache_dir());
    let calibrations = CalibrationProvider::new(&cache);
    let methods = cfg.method_specs()?;

    let select = |seed: u64| -> Result<Vec<kopi::inference::SelectionResult>, CliError> {
        let stream = Stream::new(seed).child(tags::KNOCKOFF);
        let stats = draw_statistics_with(&prob.x, &prob.y, &bench.pipeline, &stream, prob.sigma.as_ref())?;
        methods
            .iter()
            .map(|m| {
                let mut r = apply_method(m, &stats, &bench, &calibrations)?.with_names(&prob.names);
                r.seeds.insert("draws".into(), seed);
                Ok(r)
            })
            .collect()
    };

    for r in select(cfg.seed)? {
        write_json(&cfg.output.join(format!("selection_{}.json", r.method)), &r)?;
    }
    if cfg.stability_runs > 0 {
        stability(cfg, &prob, &methods, select)?;
    }
    report_cache(&cache);
    Ok(())
}

/// Selection frequencies over `stability_runs` knockoff seeds on the fixed dataset.
fn stability<F>(cfg: &AppConfig, prob: &Problem, methods: &[MethodSpec], select: F) -> Result<(), CliError>
where
    F: Fn(u64) -> Result<Vec<kopi::inference::SelectionResult>, CliError>,
{
    let mut counts: BTreeMap<String, Vec<usize>> =
        methods.iter().map(|m| (m.label(), vec![0; prob.names.len()])).collect();
    for s in 0..cfg.stability_runs {
        let seed = Stream::new(cfg.seed).child(tags::RUN).child(s as u64).derive_seed();
        for r in select(seed)? {
            let c = counts.get_mut(&r.method).expect("method label");
            for &j in &r.selected {
                c[j] += 1;
            }
        }
    }
    let mut w = csv::Writer::from_path(cfg.output.join("stability.csv")).map_err(KopiError::from)?;
    w.write_record(["method", "index", "name", "count", "frequency", "in_support"])
        .map_err(KopiError::from)?;
    for m in methods {
        let label = m.label();
        for (j, &c) in counts[&label].iter().enumerate() {
            if c == 0 {
                continue;
            }
            let in_support = match &prob.support {
                Some(s) => s.binary_search(&j).is_ok().to_string(),
                None => String::new(),
            };
            w.write_record([
                label.clone(),
                j.to_string(),
                prob.names[j].clone(),
                c.to_string(),
                (c as f64 / cfg.stability_runs as f64).to_string(),
                in_support,
            ])
            .map_err(KopiError::from)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn bench(cfg: &AppConfig) -> Result<(), CliError> {
    if cfg.dataset.is_some() {
        return Err(CliError::Config(
            "bench needs a simulated source; remove `dataset`".into(),
        ));
    }
    prepare_output(cfg)?;
    let (param, grid) = cfg.sweep()?;
    let cache = NullCache::new(cfg.cache_dir());
    let report = run_sweep(&cfg.bench_config()?, param, &grid, cfg.runs, cfg.seed, &cache)?;
    for (format, name) in [
        (ReportFormat::SummaryCsv, "summary.csv"),
        (ReportFormat::Json, "report.json"),
        (ReportFormat::LongCsv, "long.csv"),
        (ReportFormat::RunsCsv, "runs.csv"),
    ] {
        emit_report(&report, format, &cfg.output.join(name))?;
    }
    report_cache(&cache);
    Ok(())
}
