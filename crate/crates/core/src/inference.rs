//! Selection rules: the post-hoc FDP bound, KOPI selection and the baseline selectors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::jer::ThresholdFamily;
use crate::pistats::{aggregate, knockoff_threshold, AggregationKind, AggregationScheme};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sizes {
    #[serde(rename = "D")]
    pub draws: Option<usize>,
    #[serde(rename = "B")]
    pub b: Option<usize>,
    #[serde(rename = "B_prime")]
    pub b_prime: Option<usize>,
    pub k_max: Option<usize>,
    pub lambda: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: String,
    pub q: f64,
    pub alpha: Option<f64>,
    /// Zero-based variable indices, ascending.
    pub selected: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    pub fdp_bound: Option<f64>,
    pub seeds: BTreeMap<String, u64>,
    pub sizes: Sizes,
}

impl SelectionResult {
    fn new(method: &str, q: f64, mut selected: Vec<usize>) -> Self {
        selected.sort_unstable();
        SelectionResult {
            method: method.to_string(),
            q,
            alpha: None,
            selected,
            names: None,
            fdp_bound: None,
            seeds: BTreeMap::new(),
            sizes: Sizes::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// Attaches column names for the selected indices.
    pub fn with_names(mut self, names: &[String]) -> Self {
        self.names = Some(self.selected.iter().map(|&j| names[j].clone()).collect());
        self
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("q must lie in (0, 1), got {q}")))
    }
}

/// V(S) = min_k (k−1) + #{i ∈ S : π_i ≥ t_k}.
pub fn fdp_bound_v(pi: &[f64], t: &ThresholdFamily, set: &[usize]) -> usize {
    t.thresholds
        .iter()
        .enumerate()
        .map(|(k, &tk)| k + set.iter().filter(|&&i| pi[i] >= tk).count())
        .min()
        .unwrap_or(0)
}

/// Indices ordered by increasing π, ties by index.
pub fn pi_order(pi: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pi.len()).collect();
    order.sort_by(|&a, &b| pi[a].total_cmp(&pi[b]).then(a.cmp(&b)));
    order
}

/// V(S_m) for every m = 0..=p where S_m holds the m smallest π values.
pub fn nested_bounds(pi: &[f64], t: &ThresholdFamily) -> Vec<usize> {
    let below: Vec<usize> = t
        .thresholds
        .iter()
        .map(|&tk| pi.iter().filter(|&&v| v < tk).count())
        .collect();
    (0..=pi.len())
        .map(|m| {
            below
                .iter()
                .enumerate()
                .map(|(k, &c)| k + m.saturating_sub(c))
                .min()
                .unwrap_or(0)
        })
        .collect()
}

/// Largest S_m with V(S_m) ≤ q·m.
pub fn select_kopi(pi: &[f64], t: &ThresholdFamily, q: f64) -> Result<SelectionResult> {
    check_q(q)?;
    let bounds = nested_bounds(pi, t);
    let m = (1..=pi.len())
        .rev()
        .find(|&m| bounds[m] as f64 <= q * m as f64)
        .unwrap_or(0);
    let order = pi_order(pi);
    let mut result = SelectionResult::new("kopi", q, order[..m].to_vec());
    if m > 0 {
        result.fdp_bound = Some(bounds[m] as f64 / m as f64);
    }
    Ok(result)
}

/// Knockoff+ selection {W_j ≥ T}; `strict` gives {W_j > T}.
pub fn select_vanilla(w: &[f64], q: f64, strict: bool) -> Result<SelectionResult> {
    check_q(q)?;
    let t = knockoff_threshold(w, q);
    let selected = if t.is_finite() {
        (0..w.len())
            .filter(|&j| if strict { w[j] > t } else { w[j] >= t })
            .collect()
    } else {
        Vec::new()
    };
    Ok(SelectionResult::new("vanilla", q, selected))
}

/// e-BH on e-values averaged over draws.
pub fn select_ebh(evalues: &[Vec<f64>], q: f64) -> Result<SelectionResult> {
    check_q(q)?;
    let mean = aggregate(evalues, &AggregationScheme::new(AggregationKind::Arithmetic, 0.5))?;
    let p = mean.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| mean[b].total_cmp(&mean[a]).then(a.cmp(&b)));
    let k = (1..=p)
        .rev()
        .find(|&k| mean[order[k - 1]] >= p as f64 / (q * k as f64))
        .unwrap_or(0);
    Ok(SelectionResult::new("ebh", q, order[..k].to_vec()))
}

/// Benjamini-Hochberg step-up; returns the rejected indices.
pub fn bh_step_up(pvalues: &[f64], q: f64) -> Vec<usize> {
    let p = pvalues.len();
    let order = pi_order(pvalues);
    let k = (1..=p)
        .rev()
        .find(|&k| pvalues[order[k - 1]] <= q * k as f64 / p as f64)
        .unwrap_or(0);
    order[..k].to_vec()
}

/// Quantile aggregation of π across draws followed by BH.
pub fn select_ako(pi: &[Vec<f64>], gamma: f64, q: f64) -> Result<SelectionResult> {
    check_q(q)?;
    let pbar = aggregate(pi, &AggregationScheme::new(AggregationKind::Quantile, gamma))?;
    Ok(SelectionResult::new("ako", q, bh_step_up(&pbar, q)))
}
