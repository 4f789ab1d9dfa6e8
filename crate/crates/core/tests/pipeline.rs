use kopi::bench::{
    emit_report, read_report_json, read_runs_csv, run_sweep, selection_metrics, summarize, BenchConfig, MethodSpec,
    ReportFormat, SweepParam,
};
use kopi::cache::{CacheKey, NullCache};
use kopi::inference::{fdp_bound_v, select_kopi};
use kopi::jer::{aggregated_calibrate, calibrate_with_null, CalibrationConfig, Pairing};
use kopi::pipeline::{draw_statistics_with, CovarianceSource, PipelineConfig};
use kopi::pistats::{aggregate, AggregationScheme};
use kopi::simgen::{simulate, toeplitz_covariance, SimConfig};
use kopi::Stream;

fn small_sim() -> SimConfig {
    SimConfig {
        n: 120,
        p: 30,
        rho: 0.5,
        sparsity: 0.2,
        snr: 3.0,
        seed: 8,
        standardize: false,
    }
}

fn small_bench() -> BenchConfig {
    BenchConfig {
        sim: small_sim(),
        pipeline: PipelineConfig {
            draws: 3,
            ..BenchConfig::default().pipeline
        },
        methods: MethodSpec::defaults(),
        b: 1000,
        b_prime: 100,
        ..BenchConfig::default()
    }
}

#[test]
fn end_to_end_selection_respects_its_bound() {
    let sim = SimConfig {
        n: 300,
        p: 200,
        sparsity: 0.1,
        snr: 2.0,
        ..small_sim()
    };
    let data = simulate(&sim).unwrap();
    let sigma = toeplitz_covariance(sim.p, sim.rho);
    let pipeline = PipelineConfig {
        draws: 4,
        covariance: CovarianceSource::Oracle,
        ..PipelineConfig::default()
    };
    let stats = draw_statistics_with(&data.design, &data.response, &pipeline, &Stream::new(3), Some(&sigma)).unwrap();
    let scheme = AggregationScheme::harmonic();
    let cal = aggregated_calibrate(
        &CalibrationConfig {
            p: sim.p,
            draws: 4,
            b: 2000,
            b_prime: 200,
            k_max: 4,
            scheme,
            pairing: Pairing::Sorted,
            alpha: 0.1,
        },
        5,
    )
    .unwrap();
    let pibar = aggregate(&stats.pi, &scheme).unwrap();
    let sel = select_kopi(&pibar, &cal.family, 0.1).unwrap();
    let v = fdp_bound_v(&pibar, &cal.family, &sel.selected);
    assert!(v as f64 <= 0.1 * sel.selected.len() as f64);
    if let Some(bound) = sel.fdp_bound {
        assert!(bound <= 0.1);
    }
    // the central setting has ample power
    let (_, tpp) = selection_metrics(&sel.selected, &data.support);
    assert!(tpp.unwrap() > 0.5, "tpp {tpp:?}");
}

#[test]
fn oracle_selector_has_zero_fdp_and_full_power() {
    let data = simulate(&small_sim()).unwrap();
    assert_eq!(selection_metrics(&data.support, &data.support), (0.0, Some(1.0)));
}

#[test]
fn cached_null_gives_the_same_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CalibrationConfig {
        p: 12,
        draws: 2,
        b: 300,
        b_prime: 40,
        k_max: 2,
        scheme: AggregationScheme::harmonic(),
        pairing: Pairing::Sorted,
        alpha: 0.1,
    };
    let key = CacheKey {
        p: 12,
        b: 300,
        draws: 2,
        scheme: cfg.scheme,
        pairing: cfg.pairing,
        seed: 4,
    };
    let cache = NullCache::new(dir.path());
    let miss = calibrate_with_null(&cfg, &cache.null_matrix(&key).unwrap(), 4).unwrap();
    let hit = calibrate_with_null(&cfg, &cache.null_matrix(&key).unwrap(), 4).unwrap();
    assert_eq!((cache.hits(), cache.misses()), (1, 1));
    assert_eq!(miss, hit);
    assert_eq!(miss, aggregated_calibrate(&cfg, 4).unwrap());
}

#[test]
fn sweep_reports_round_trip_and_recount() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_bench();
    let report = run_sweep(&cfg, SweepParam::Rho, &[0.3, 0.6], 2, 1, &NullCache::disabled()).unwrap();
    assert_eq!(report.runs.len(), 2 * 2 * cfg.methods.len());
    let json = dir.path().join("r.json");
    let runs = dir.path().join("runs.csv");
    emit_report(&report, ReportFormat::Json, &json).unwrap();
    emit_report(&report, ReportFormat::RunsCsv, &runs).unwrap();
    assert_eq!(read_report_json(&json).unwrap(), report);
    // violation rates recomputed from the persisted runs match the summary
    let persisted = read_runs_csv(&runs).unwrap();
    assert_eq!(summarize("rho", &persisted, cfg.q, cfg.alpha), report.summary);
}
