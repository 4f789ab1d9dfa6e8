//! Monte-Carlo null π statistics, empirical joint error rate, templates and calibration.
//!
//! Under the null, π statistics are a deterministic function of i.i.d. Rademacher
//! signs visited in decreasing |W| order, so their joint law can be sampled without
//! data. Calibration picks the least conservative member of a template of
//! threshold curves whose empirical JER stays below α.

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, KopiError, Result};
use crate::pistats::{lattice_value, AggregationScheme};
use crate::rng::{tags, Stream};

const ROWS_PER_CHUNK: usize = 64;

/// B×p matrix of null π statistics, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct NullPiMatrix {
    rows: Vec<f64>,
    b: usize,
    p: usize,
    pub seed: u64,
    sorted: bool,
}

impl NullPiMatrix {
    pub fn from_rows(rows: Vec<f64>, b: usize, p: usize, seed: u64, sorted: bool) -> Result<Self> {
        if rows.len() != b * p {
            return Err(invalid(format!(
                "expected {b}x{p} = {} entries, got {}",
                b * p,
                rows.len()
            )));
        }
        Ok(NullPiMatrix {
            rows,
            b,
            p,
            seed,
            sorted,
        })
    }

    pub fn nrows(&self) -> usize {
        self.b
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn is_sorted(&self) -> bool {
        self.sorted
    }

    pub fn row(&self, b: usize) -> &[f64] {
        &self.rows[b * self.p..(b + 1) * self.p]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks_exact(self.p.max(1))
    }

    /// Sorts every row ascending.
    pub fn sort_rows(&mut self) {
        if self.p > 0 {
            for row in self.rows.chunks_exact_mut(self.p) {
                row.sort_by(f64::total_cmp);
            }
        }
        self.sorted = true;
    }
}

/// Null π row for a given sign vector (`true` = +1), in sign-process order.
pub fn null_row_from_signs(signs: &[bool], out: &mut [f64]) {
    let p = signs.len();
    let mut negatives = 0usize;
    for (o, &positive) in out.iter_mut().zip(signs) {
        if positive {
            *o = lattice_value(negatives, p);
        } else {
            *o = 1.0;
            negatives += 1;
        }
    }
}

/// Draws one unsorted null row: i.i.d. fair signs, cumulative count of negatives.
fn fill_null_row<R: RngCore + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let p = out.len();
    let mut negatives = 0usize;
    let mut word = 0u64;
    for (j, o) in out.iter_mut().enumerate() {
        if j % 64 == 0 {
            word = rng.next_u64();
        }
        let negative = (word >> (j % 64)) & 1 == 1;
        if negative {
            *o = 1.0;
            negatives += 1;
        } else {
            *o = lattice_value(negatives, p);
        }
    }
}

/// Sorting an unsorted null row is a merge of two runs: positive entries are already
/// non-decreasing and negatives are all 1.
fn sort_null_row(row: &mut [f64]) {
    let mut write = 0;
    for read in 0..row.len() {
        if row[read] < 1.0 {
            row[write] = row[read];
            write += 1;
        }
    }
    for v in &mut row[write..] {
        *v = 1.0;
    }
}

fn for_each_chunk<F>(b: usize, p: usize, rows: &mut [f64], f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if p == 0 {
        return;
    }
    let chunk_len = ROWS_PER_CHUNK * p;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        rows.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(c, chunk)| f(c, chunk));
    }
    #[cfg(not(feature = "parallel"))]
    {
        rows.chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(c, chunk)| f(c, chunk));
    }
    let _ = b;
}

/// B null π rows from the sign process; rows sorted ascending iff `sort`.
pub fn sample_null_pi(b: usize, p: usize, stream: &Stream, sort: bool) -> Result<NullPiMatrix> {
    if b == 0 || p == 0 {
        return Err(invalid(format!("need B >= 1 and p >= 1, got B={b}, p={p}")));
    }
    let mut rows = vec![0.0; b * p];
    for_each_chunk(b, p, &mut rows, |c, chunk| {
        let mut rng = stream.child(c as u64).rng();
        for row in chunk.chunks_exact_mut(p) {
            fill_null_row(&mut rng, row);
            if sort {
                sort_null_row(row);
            }
        }
    });
    Ok(NullPiMatrix {
        rows,
        b,
        p,
        seed: stream.seed(),
        sorted: sort,
    })
}

/// Non-decreasing thresholds t_1 ≤ … ≤ t_kmax in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFamily {
    pub thresholds: Vec<f64>,
}

impl ThresholdFamily {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(invalid("threshold family must have k_max >= 1"));
        }
        if thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(invalid("thresholds must lie in [0, 1]"));
        }
        if thresholds.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("thresholds must be non-decreasing"));
        }
        Ok(ThresholdFamily { thresholds })
    }

    pub fn zeros(k_max: usize) -> Self {
        ThresholdFamily {
            thresholds: vec![0.0; k_max],
        }
    }

    pub fn k_max(&self) -> usize {
        self.thresholds.len()
    }
}

/// B′ threshold families, non-decreasing in the family index for every coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub families: Vec<ThresholdFamily>,
    pub k_max: usize,
}

impl Template {
    pub fn b_prime(&self) -> usize {
        self.families.len()
    }

    /// T(b′/B′) for b′ in 1..=B′.
    pub fn family(&self, b_prime_index: usize) -> &ThresholdFamily {
        &self.families[b_prime_index - 1]
    }

    pub fn is_monotone(&self) -> bool {
        self.families
            .windows(2)
            .all(|w| w[0].thresholds.iter().zip(&w[1].thresholds).all(|(a, b)| a <= b))
    }
}

/// Fraction of rows with π⁰_(k) < t_k for some k ≤ k_max.
pub fn empirical_jer(null_pi: &NullPiMatrix, t: &ThresholdFamily) -> Result<f64> {
    if !null_pi.is_sorted() {
        return Err(invalid("empirical JER needs row-sorted null statistics"));
    }
    let k_max = t.k_max();
    if k_max > null_pi.p() {
        return Err(invalid(format!("k_max = {k_max} exceeds p = {}", null_pi.p())));
    }
    let violations = null_pi
        .rows()
        .filter(|row| row[..k_max].iter().zip(&t.thresholds).any(|(v, t)| v < t))
        .count();
    Ok(violations as f64 / null_pi.nrows() as f64)
}

/// Template whose family b′ is the coordinate-wise b′-th order statistic of sorted rows.
pub fn template_from_sorted_rows(rows: &NullPiMatrix, k_max: usize) -> Result<Template> {
    if !rows.is_sorted() {
        return Err(invalid("template rows must be sorted"));
    }
    if k_max == 0 || k_max > rows.p() {
        return Err(invalid(format!("k_max must lie in 1..={}, got {k_max}", rows.p())));
    }
    let b_prime = rows.nrows();
    let mut columns: Vec<Vec<f64>> = (0..k_max).map(|k| rows.rows().map(|r| r[k]).collect()).collect();
    for col in &mut columns {
        col.sort_by(f64::total_cmp);
    }
    let families = (0..b_prime)
        .map(|i| ThresholdFamily {
            thresholds: columns.iter().map(|c| c[i]).collect(),
        })
        .collect();
    Ok(Template { families, k_max })
}

/// Draws B′ fresh sorted null rows and takes coordinate-wise order statistics.
pub fn build_template(b_prime: usize, p: usize, k_max: usize, stream: &Stream) -> Result<Template> {
    if b_prime == 0 {
        return Err(invalid("B' must be at least 1"));
    }
    let rows = sample_null_pi(b_prime, p, stream, true)?;
    template_from_sorted_rows(&rows, k_max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// b′_cal / B′; zero when degenerate.
    pub lambda: f64,
    pub b_prime_index: usize,
    pub family: ThresholdFamily,
    pub alpha: f64,
    pub empirical_jer: f64,
    /// No template member controlled the empirical JER; `family` is all zeros.
    pub degenerate: bool,
}

/// Largest b′ with empirical JER ≤ α, by binary search over the monotone template.
pub fn calibrate(null_pi: &NullPiMatrix, template: &Template, alpha: f64) -> Result<CalibrationResult> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(invalid(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let b_prime = template.b_prime();
    if b_prime == 0 {
        return Err(invalid("empty template"));
    }
    let jer = |i: usize| empirical_jer(null_pi, template.family(i));
    let first = jer(1)?;
    if first > alpha {
        return Ok(CalibrationResult {
            lambda: 0.0,
            b_prime_index: 0,
            family: ThresholdFamily::zeros(template.k_max),
            alpha,
            empirical_jer: 0.0,
            degenerate: true,
        });
    }
    let last = jer(b_prime)?;
    let (index, value) = if last <= alpha {
        (b_prime, last)
    } else {
        // invariant: jer(lo) <= alpha < jer(hi)
        let (mut lo, mut hi, mut lo_value) = (1usize, b_prime, first);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let v = jer(mid)?;
            if v <= alpha {
                lo = mid;
                lo_value = v;
            } else {
                hi = mid;
            }
        }
        (lo, lo_value)
    };
    Ok(CalibrationResult {
        lambda: index as f64 / b_prime as f64,
        b_prime_index: index,
        family: template.family(index).clone(),
        alpha,
        empirical_jer: value,
        degenerate: false,
    })
}

/// How per-draw null coordinates are matched before aggregation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    /// Coordinate j of each draw's unsorted sign-process row.
    Rank,
    /// Each draw's unsorted row is shuffled independently first.
    Permuted,
    /// Each draw's row is sorted first (aggregation of order statistics).
    Sorted,
}

impl Pairing {
    pub fn name(&self) -> &'static str {
        match self {
            Pairing::Rank => "rank",
            Pairing::Permuted => "permuted",
            Pairing::Sorted => "sorted",
        }
    }

    pub fn id(&self) -> u8 {
        match self {
            Pairing::Rank => 0,
            Pairing::Permuted => 1,
            Pairing::Sorted => 2,
        }
    }
}

impl std::str::FromStr for Pairing {
    type Err = KopiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank" => Ok(Pairing::Rank),
            "permuted" => Ok(Pairing::Permuted),
            "sorted" => Ok(Pairing::Sorted),
            other => Err(invalid(format!("unknown pairing mode {other:?}"))),
        }
    }
}

/// k_max = max(1, ⌊p/50⌋), clamped to p.
pub fn default_k_max(p: usize) -> usize {
    (p / 50).max(1).min(p.max(1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub p: usize,
    pub draws: usize,
    pub b: usize,
    pub b_prime: usize,
    pub k_max: usize,
    pub scheme: AggregationScheme,
    pub pairing: Pairing,
    pub alpha: f64,
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.draws == 0 || self.b == 0 || self.b_prime == 0 {
            return Err(invalid("p, D, B and B' must all be positive"));
        }
        if self.k_max == 0 || self.k_max > self.p {
            return Err(invalid(format!("k_max must lie in 1..={}, got {}", self.p, self.k_max)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        self.scheme.validate()
    }
}

/// Aggregated null matrix: for each row, D independent sign-process rows are matched by
/// `pairing`, combined coordinate-wise with `scheme`, and the result is sorted.
pub fn aggregated_null(
    draws: usize,
    b: usize,
    p: usize,
    scheme: &AggregationScheme,
    pairing: Pairing,
    stream: &Stream,
) -> Result<NullPiMatrix> {
    if draws == 0 || b == 0 || p == 0 {
        return Err(invalid("D, B and p must be positive"));
    }
    scheme.validate()?;
    let mut rows = vec![0.0; b * p];
    let failure = std::sync::Mutex::new(None);
    for_each_chunk(b, p, &mut rows, |c, chunk| {
        let mut rng = stream.child(c as u64).rng();
        let mut shuffle_rng = stream.child(tags::PAIRING).child(c as u64).rng();
        let mut per_draw = vec![0.0; draws * p];
        let mut column = vec![0.0; draws];
        let mut scratch = Vec::with_capacity(draws);
        for out in chunk.chunks_exact_mut(p) {
            for row in per_draw.chunks_exact_mut(p) {
                fill_null_row(&mut rng, row);
                match pairing {
                    Pairing::Rank => {}
                    Pairing::Permuted => row.shuffle(&mut shuffle_rng),
                    Pairing::Sorted => sort_null_row(row),
                }
            }
            for (j, o) in out.iter_mut().enumerate() {
                for (d, c) in column.iter_mut().enumerate() {
                    *c = per_draw[d * p + j];
                }
                match scheme.combine(&column, &mut scratch) {
                    Ok(v) => *o = v,
                    Err(e) => {
                        failure.lock().unwrap().get_or_insert(e);
                        return;
                    }
                }
            }
            out.sort_by(f64::total_cmp);
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(NullPiMatrix {
        rows,
        b,
        p,
        seed: stream.seed(),
        sorted: true,
    })
}

/// D independent templates combined family by family: T̄(b′) = f((T^d(b′))_d).
pub fn aggregated_template(
    draws: usize,
    b_prime: usize,
    p: usize,
    k_max: usize,
    scheme: &AggregationScheme,
    stream: &Stream,
) -> Result<Template> {
    if draws == 0 {
        return Err(invalid("D must be positive"));
    }
    let templates = (0..draws)
        .map(|d| build_template(b_prime, p, k_max, &stream.child(d as u64)))
        .collect::<Result<Vec<_>>>()?;
    if draws == 1 && scheme.is_identity_at_one_draw() {
        return Ok(templates.into_iter().next().unwrap());
    }
    let mut column = vec![0.0; draws];
    let mut scratch = Vec::with_capacity(draws);
    let mut families = Vec::with_capacity(b_prime);
    for i in 0..b_prime {
        let mut thresholds = Vec::with_capacity(k_max);
        for k in 0..k_max {
            for (c, t) in column.iter_mut().zip(&templates) {
                *c = t.families[i].thresholds[k];
            }
            thresholds.push(scheme.combine(&column, &mut scratch)?);
        }
        families.push(ThresholdFamily { thresholds });
    }
    Ok(Template { families, k_max })
}

/// The two independent random sources behind a calibration.
pub fn calibration_streams(seed: u64) -> (Stream, Stream) {
    let root = Stream::new(seed);
    (root.child(tags::NULL_PI), root.child(tags::TEMPLATE))
}

/// Full aggregated calibration from a seed: aggregated null, aggregated template, calibrate.
pub fn aggregated_calibrate(cfg: &CalibrationConfig, seed: u64) -> Result<CalibrationResult> {
    cfg.validate()?;
    let (null_stream, _) = calibration_streams(seed);
    let null = aggregated_null(cfg.draws, cfg.b, cfg.p, &cfg.scheme, cfg.pairing, &null_stream)?;
    calibrate_with_null(cfg, &null, seed)
}

/// Calibration given an already drawn (for example cached) aggregated null matrix.
pub fn calibrate_with_null(cfg: &CalibrationConfig, null: &NullPiMatrix, seed: u64) -> Result<CalibrationResult> {
    cfg.validate()?;
    if null.p() != cfg.p {
        return Err(invalid("null matrix dimension does not match the configuration"));
    }
    let (_, template_stream) = calibration_streams(seed);
    let template = aggregated_template(cfg.draws, cfg.b_prime, cfg.p, cfg.k_max, &cfg.scheme, &template_stream)?;
    calibrate(null, &template, cfg.alpha)
}
