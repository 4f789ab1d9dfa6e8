//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a JSON string; the `*_json` functions hold the logic and run natively in tests.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use kopi::bench::selection_metrics;
use kopi::inference::{nested_bounds, select_kopi, select_vanilla};
use kopi::jer::{
    aggregated_template, calibrate, calibration_streams, default_k_max, empirical_jer, sample_null_pi, Pairing,
};
use kopi::pipeline::{draw_statistics_with, CovarianceSource, PipelineConfig};
use kopi::pistats::{aggregate, pi_from_w, AggregationScheme};
use kopi::simgen::{simulate, toeplitz_covariance, SimConfig};
use kopi::{KopiError, Stream};

fn to_json<T: Serialize>(value: &T) -> Result<String, KopiError> {
    Ok(serde_json::to_string(value)?)
}

fn js(r: Result<String, KopiError>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[derive(Serialize)]
struct CalibrationCurve {
    lambda: Vec<f64>,
    jer: Vec<f64>,
    chosen_lambda: f64,
    chosen_jer: f64,
    degenerate: bool,
    thresholds: Vec<f64>,
}

/// Empirical JER of template members on an evenly spaced λ grid, plus the calibrated member.
pub fn calibration_curve_json(
    p: usize,
    b: usize,
    b_prime: usize,
    alpha: f64,
    points: usize,
    seed: u64,
) -> Result<String, KopiError> {
    let k_max = default_k_max(p).max(p.min(5));
    let (null_stream, template_stream) = calibration_streams(seed);
    let null = sample_null_pi(b, p, &null_stream, true)?;
    let template = aggregated_template(1, b_prime, p, k_max, &AggregationScheme::harmonic(), &template_stream)?;
    let points = points.clamp(2, b_prime.max(2));
    let mut curve = CalibrationCurve {
        lambda: Vec::with_capacity(points),
        jer: Vec::with_capacity(points),
        chosen_lambda: 0.0,
        chosen_jer: 0.0,
        degenerate: false,
        thresholds: Vec::new(),
    };
    for i in 0..points {
        let index = 1 + i * (b_prime - 1) / (points - 1);
        curve.lambda.push(index as f64 / b_prime as f64);
        curve.jer.push(empirical_jer(&null, template.family(index))?);
    }
    let cal = calibrate(&null, &template, alpha)?;
    curve.chosen_lambda = cal.lambda;
    curve.chosen_jer = cal.empirical_jer;
    curve.degenerate = cal.degenerate;
    curve.thresholds = cal.family.thresholds;
    to_json(&curve)
}

#[derive(Serialize)]
struct Selection {
    method: String,
    selected: Vec<usize>,
    fdp: f64,
    tpp: Option<f64>,
    fdp_bound: Option<f64>,
}

#[derive(Serialize)]
struct Demo {
    support: Vec<usize>,
    pi_bar: Vec<f64>,
    w_first_draw: Vec<f64>,
    /// Simultaneous bound on false positives among the m smallest π̄, for m = 0..=p.
    nested_bounds: Vec<usize>,
    selections: Vec<Selection>,
}

/// Simulates one dataset, runs D knockoff draws and compares KOPI with vanilla knockoffs.
#[allow(clippy::too_many_arguments)]
pub fn simulate_and_select_json(
    n: usize,
    p: usize,
    rho: f64,
    sparsity: f64,
    snr: f64,
    draws: usize,
    q: f64,
    alpha: f64,
    seed: u64,
) -> Result<String, KopiError> {
    let sim = SimConfig {
        n,
        p,
        rho,
        sparsity,
        snr,
        seed,
        standardize: false,
    };
    let data = simulate(&sim)?;
    let sigma = toeplitz_covariance(p, rho);
    let cfg = PipelineConfig {
        draws,
        covariance: CovarianceSource::Oracle,
        ..PipelineConfig::default()
    };
    let stream = Stream::new(seed);
    let stats = draw_statistics_with(&data.design, &data.response, &cfg, &stream.child(1), Some(&sigma))?;
    let scheme = AggregationScheme::harmonic();
    let cal_cfg = kopi::jer::CalibrationConfig {
        p,
        draws,
        b: 2000,
        b_prime: 200,
        k_max: default_k_max(p),
        scheme,
        pairing: Pairing::Sorted,
        alpha,
    };
    let cal = kopi::jer::aggregated_calibrate(&cal_cfg, seed)?;
    let pi_bar = aggregate(&stats.pi, &scheme)?;
    let kopi_sel = select_kopi(&pi_bar, &cal.family, q)?;
    let vanilla = select_vanilla(&stats.w[0], q, false)?;
    let selections = [("kopi", kopi_sel), ("vanilla", vanilla)]
        .into_iter()
        .map(|(name, s)| {
            let (fdp, tpp) = selection_metrics(&s.selected, &data.support);
            Selection {
                method: name.into(),
                fdp,
                tpp,
                fdp_bound: s.fdp_bound,
                selected: s.selected,
            }
        })
        .collect();
    to_json(&Demo {
        support: data.support,
        nested_bounds: nested_bounds(&pi_bar, &cal.family),
        pi_bar,
        w_first_draw: stats.w[0].clone(),
        selections,
    })
}

/// π statistics for a comma- or space-separated list of W values.
pub fn pi_from_w_json(w: &str) -> Result<String, KopiError> {
    let values = w
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| KopiError::InvalidInput(format!("{s:?} is not a finite number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(KopiError::InvalidInput("no W values given".into()));
    }
    to_json(&pi_from_w(&values).values)
}

#[wasm_bindgen]
pub fn calibration_curve(
    p: usize,
    b: usize,
    b_prime: usize,
    alpha: f64,
    points: usize,
    seed: u64,
) -> Result<String, JsError> {
    js(calibration_curve_json(p, b, b_prime, alpha, points, seed))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn simulate_and_select(
    n: usize,
    p: usize,
    rho: f64,
    sparsity: f64,
    snr: f64,
    draws: usize,
    q: f64,
    alpha: f64,
    seed: u64,
) -> Result<String, JsError> {
    js(simulate_and_select_json(
        n, p, rho, sparsity, snr, draws, q, alpha, seed,
    ))
}

#[wasm_bindgen]
pub fn pi_statistics(w: &str) -> Result<String, JsError> {
    js(pi_from_w_json(w))
}
