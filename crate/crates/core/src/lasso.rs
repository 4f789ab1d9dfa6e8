//! Coordinate-descent Lasso and the Lasso-coefficient-difference statistic.
//!
//! The solver minimises `(1/2n)‖y − Aβ‖² + λ‖β‖₁` by block coordinate descent
//! with exact block minimisation. Blocks are single coordinates for a generic
//! design, and `(j, j+p)` pairs for an augmented design `[X, X̃]`. Pair blocks
//! are solved in a canonical orientation, so exchanging a column with its
//! knockoff produces the exchanged iterates bit for bit. This makes the sign
//! flip of `W_j` exact and splits exactly duplicated pairs evenly.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, KopiError, Result};

/// Solver and tuning settings shared by every Lasso fit in a pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub folds: usize,
    pub grid_size: usize,
    /// Smallest grid value as a fraction of λ_max.
    pub lambda_min_ratio: f64,
    /// KKT tolerance along cross-validation paths, relative to λ_max.
    pub cv_tol: f64,
    /// Sweep budget per cross-validation fit; the last iterate is scored when it runs out.
    pub cv_max_iter: usize,
    /// The path stops after this many grid points without a new error minimum; 0 runs it fully.
    pub cv_patience: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            tol: 1e-8,
            max_iter: 100_000,
            folds: 5,
            grid_size: 20,
            lambda_min_ratio: 1e-3,
            cv_tol: 1e-4,
            cv_max_iter: 1_000,
            cv_patience: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoFit {
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    /// Number of sweeps (full or active-set) performed.
    pub iterations: usize,
    pub max_kkt_violation: f64,
    /// Objective after each sweep, when tracing was requested.
    pub objective_trace: Vec<f64>,
}

/// Signed knockoff importance, one entry per original variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WStatistics {
    pub values: Vec<f64>,
}

impl WStatistics {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Blocks {
    /// Cyclic single-coordinate updates 0..m.
    Single,
    /// Pairs (j, j + m/2), visited for j in 0..m/2.
    KnockoffPairs,
}

#[derive(Clone, Debug)]
pub struct SolverOptions<'a> {
    pub tol: f64,
    pub max_iter: usize,
    pub blocks: Blocks,
    pub warm_start: Option<&'a [f64]>,
    pub trace: bool,
}

impl Default for SolverOptions<'_> {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 100_000,
            blocks: Blocks::Single,
            warm_start: None,
            trace: false,
        }
    }
}

pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// ‖Aᵀy‖_∞ / n: the smallest penalty with an all-zero solution.
pub fn lambda_max(a: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let n = a.nrows() as f64;
    let ys = y.as_slice();
    a.column_iter()
        .map(|c| dot(c.as_slice(), ys).abs() / n)
        .fold(0.0, f64::max)
}

/// Largest deviation from the Lasso subgradient optimality conditions.
pub fn kkt_violation(a: &DMatrix<f64>, y: &DVector<f64>, beta: &[f64], lambda: f64) -> f64 {
    let residual = y - a * DVector::from_column_slice(beta);
    let n = a.nrows() as f64;
    a.column_iter()
        .zip(beta)
        .map(|(col, &b)| {
            let g = dot(col.as_slice(), residual.as_slice()) / n;
            coordinate_violation(g, b, lambda)
        })
        .fold(0.0, f64::max)
}

#[inline]
fn coordinate_violation(gradient: f64, beta: f64, lambda: f64) -> f64 {
    if beta == 0.0 {
        (gradient.abs() - lambda).max(0.0)
    } else {
        (gradient - lambda * beta.signum()).abs()
    }
}

pub fn lasso_objective(a: &DMatrix<f64>, y: &DVector<f64>, beta: &[f64], lambda: f64) -> f64 {
    let residual = y - a * DVector::from_column_slice(beta);
    let n = a.nrows() as f64;
    residual.norm_squared() / (2.0 * n) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Fits the Lasso with single-coordinate cyclic updates.
pub fn fit_lasso(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, tol: f64, max_iter: usize) -> Result<LassoFit> {
    fit_lasso_with(
        a,
        y,
        lambda,
        &SolverOptions {
            tol,
            max_iter,
            ..SolverOptions::default()
        },
    )
}

pub fn fit_lasso_with(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, opts: &SolverOptions<'_>) -> Result<LassoFit> {
    if !(lambda > 0.0) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    if a.nrows() != y.len() {
        return Err(invalid(format!(
            "design has {} rows but the response has length {}",
            a.nrows(),
            y.len()
        )));
    }
    if opts.blocks == Blocks::KnockoffPairs && !a.ncols().is_multiple_of(2) {
        return Err(invalid("pair blocks need an even number of columns"));
    }
    let mut solver = Solver::new(a, y, lambda, opts);
    let (fit, converged) = solver.run(opts);
    if converged {
        Ok(fit)
    } else {
        Err(KopiError::NonConvergence {
            iterations: fit.iterations,
            violation: fit.max_kkt_violation,
        })
    }
}

/// Like `fit_lasso_with` but returns the last iterate when the sweep budget runs out.
fn fit_lasso_budgeted(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, opts: &SolverOptions<'_>) -> (LassoFit, bool) {
    Solver::new(a, y, lambda, opts).run(opts)
}

enum Block {
    Single(usize),
    Pair { first: usize, second: usize, cross: f64 },
}

struct Solver<'a> {
    n: usize,
    data: &'a [f64],
    y: &'a [f64],
    lambda: f64,
    sq_norms: Vec<f64>,
    blocks: Vec<Block>,
    beta: Vec<f64>,
    residual: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(a: &'a DMatrix<f64>, y: &'a DVector<f64>, lambda: f64, opts: &SolverOptions<'_>) -> Self {
        let n = a.nrows();
        let m = a.ncols();
        let data = a.as_slice();
        let col = |j: usize| &data[j * n..(j + 1) * n];
        let nf = n as f64;
        let sq_norms: Vec<f64> = (0..m).map(|j| dot(col(j), col(j)) / nf).collect();
        let blocks = match opts.blocks {
            Blocks::Single => (0..m).map(Block::Single).collect(),
            Blocks::KnockoffPairs => {
                let p = m / 2;
                (0..p)
                    .map(|j| Block::Pair {
                        first: j,
                        second: j + p,
                        cross: dot(col(j), col(j + p)) / nf,
                    })
                    .collect()
            }
        };
        let beta = match opts.warm_start {
            Some(w) if w.len() == m => w.to_vec(),
            _ => vec![0.0; m],
        };
        let mut solver = Solver {
            n,
            data,
            y: y.as_slice(),
            lambda,
            sq_norms,
            blocks,
            beta,
            residual: Vec::new(),
        };
        solver.recompute_residual();
        solver
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    /// r = y − Aβ, accumulated block by block so that the sum is symmetric within pairs.
    fn recompute_residual(&mut self) {
        let mut r = self.y.to_vec();
        for block in &self.blocks {
            match *block {
                Block::Single(j) => {
                    let b = self.beta[j];
                    if b != 0.0 {
                        let c = &self.data[j * self.n..(j + 1) * self.n];
                        r.iter_mut().zip(c).for_each(|(ri, ci)| *ri -= ci * b);
                    }
                }
                Block::Pair { first, second, .. } => {
                    let (b1, b2) = (self.beta[first], self.beta[second]);
                    if b1 != 0.0 || b2 != 0.0 {
                        let c1 = &self.data[first * self.n..(first + 1) * self.n];
                        let c2 = &self.data[second * self.n..(second + 1) * self.n];
                        for ((ri, x1), x2) in r.iter_mut().zip(c1).zip(c2) {
                            *ri -= x1 * b1 + x2 * b2;
                        }
                    }
                }
            }
        }
        self.residual = r;
    }

    fn gradient(&self, j: usize) -> f64 {
        dot(self.col(j), &self.residual) / self.n as f64
    }

    /// Exactly minimises over one block; returns the largest curvature-scaled change.
    fn update_block(&mut self, idx: usize) -> f64 {
        let n = self.n;
        match self.blocks[idx] {
            Block::Single(j) => {
                let s = self.sq_norms[j];
                if s == 0.0 {
                    return 0.0;
                }
                let old = self.beta[j];
                let g = self.gradient(j) + s * old;
                let new = soft_threshold(g, self.lambda) / s;
                let delta = new - old;
                if delta != 0.0 {
                    self.beta[j] = new;
                    let c = &self.data[j * n..(j + 1) * n];
                    self.residual.iter_mut().zip(c).for_each(|(ri, ci)| *ri -= ci * delta);
                }
                delta.abs() * s
            }
            Block::Pair { first, second, cross } => {
                let (s1, s2) = (self.sq_norms[first], self.sq_norms[second]);
                let (o1, o2) = (self.beta[first], self.beta[second]);
                let g1 = self.gradient(first) + s1 * o1 + cross * o2;
                let g2 = self.gradient(second) + s2 * o2 + cross * o1;
                let (n1, n2) = solve_pair(s1, s2, cross, g1, g2, self.lambda);
                let (d1, d2) = (n1 - o1, n2 - o2);
                if d1 != 0.0 || d2 != 0.0 {
                    self.beta[first] = n1;
                    self.beta[second] = n2;
                    let c1 = &self.data[first * n..(first + 1) * n];
                    let c2 = &self.data[second * n..(second + 1) * n];
                    for ((ri, x1), x2) in self.residual.iter_mut().zip(c1).zip(c2) {
                        *ri -= x1 * d1 + x2 * d2;
                    }
                }
                (d1.abs() * s1).max(d2.abs() * s2)
            }
        }
    }

    fn block_active(&self, idx: usize) -> bool {
        match self.blocks[idx] {
            Block::Single(j) => self.beta[j] != 0.0,
            Block::Pair { first, second, .. } => self.beta[first] != 0.0 || self.beta[second] != 0.0,
        }
    }

    fn kkt(&self) -> f64 {
        (0..self.beta.len())
            .map(|j| coordinate_violation(self.gradient(j), self.beta[j], self.lambda))
            .fold(0.0, f64::max)
    }

    fn objective(&self) -> f64 {
        let rss: f64 = self.residual.iter().map(|r| r * r).sum();
        rss / (2.0 * self.n as f64) + self.lambda * self.beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    fn run(&mut self, opts: &SolverOptions<'_>) -> (LassoFit, bool) {
        let mut trace = Vec::new();
        let mut iterations = 0usize;
        let mut inner_tol = opts.tol * 0.1;
        let mut violation;
        loop {
            // full sweep, then converge on the active set
            let mut change = 0.0f64;
            for idx in 0..self.blocks.len() {
                change = change.max(self.update_block(idx));
            }
            iterations += 1;
            if opts.trace {
                trace.push(self.objective());
            }
            while iterations < opts.max_iter {
                let active: Vec<usize> = (0..self.blocks.len()).filter(|&i| self.block_active(i)).collect();
                if active.is_empty() {
                    break;
                }
                let mut change = 0.0f64;
                for idx in active {
                    change = change.max(self.update_block(idx));
                }
                iterations += 1;
                if opts.trace {
                    trace.push(self.objective());
                }
                if change <= inner_tol {
                    break;
                }
            }
            self.recompute_residual();
            violation = self.kkt();
            if violation <= opts.tol {
                break;
            }
            if iterations >= opts.max_iter {
                break;
            }
            inner_tol = (inner_tol * 0.1).max(1e-18);
        }
        let fit = LassoFit {
            coefficients: self.beta.clone(),
            lambda: self.lambda,
            iterations,
            max_kkt_violation: violation,
            objective_trace: trace,
        };
        (fit, violation <= opts.tol)
    }
}

/// Exact minimiser of `½βᵀHβ − gᵀβ + λ‖β‖₁` over β ∈ ℝ², H = [[a, c], [c, b]].
///
/// Evaluated in a canonical orientation so that `solve_pair(b, a, c, g2, g1)`
/// returns the swapped result of `solve_pair(a, b, c, g1, g2)` exactly.
pub fn solve_pair(a: f64, b: f64, c: f64, g1: f64, g2: f64, lambda: f64) -> (f64, f64) {
    let swap = a.total_cmp(&b).then_with(|| g1.total_cmp(&g2)).is_gt();
    if swap {
        let (x2, x1) = solve_pair_oriented(b, a, c, g2, g1, lambda);
        (x1, x2)
    } else {
        solve_pair_oriented(a, b, c, g1, g2, lambda)
    }
}

fn solve_pair_oriented(a: f64, b: f64, c: f64, g1: f64, g2: f64, lambda: f64) -> (f64, f64) {
    let objective = |x1: f64, x2: f64| {
        0.5 * (a * x1 * x1 + 2.0 * c * x1 * x2 + b * x2 * x2) - g1 * x1 - g2 * x2 + lambda * (x1.abs() + x2.abs())
    };
    let mut best = (0.0, 0.0);
    let mut best_value = 0.0;
    let mut consider = |x1: f64, x2: f64| {
        let v = objective(x1, x2);
        if v < best_value {
            best_value = v;
            best = (x1, x2);
        }
    };
    if a > 0.0 {
        consider(soft_threshold(g1, lambda) / a, 0.0);
    }
    if b > 0.0 {
        consider(0.0, soft_threshold(g2, lambda) / b);
    }
    let det = a * b - c * c;
    if a > 0.0 && b > 0.0 && det > 1e-12 * a * b {
        for s1 in [1.0, -1.0] {
            for s2 in [1.0, -1.0] {
                let r1 = g1 - lambda * s1;
                let r2 = g2 - lambda * s2;
                let x1 = (b * r1 - c * r2) / det;
                let x2 = (a * r2 - c * r1) / det;
                if x1 * s1 > 0.0 && x2 * s2 > 0.0 {
                    consider(x1, x2);
                }
            }
        }
        return best;
    }
    if a > 0.0 && b > 0.0 && c != 0.0 {
        // (near-)collinear pair: the optimum is not unique, prefer the even split
        let sign = c.signum();
        let h = (a + b + 2.0 * sign * c) / 4.0;
        if h > 0.0 {
            let t = soft_threshold((g1 + sign * g2) / 2.0, lambda) / h;
            let split = (t / 2.0, sign * t / 2.0);
            let v = objective(split.0, split.1);
            if v <= best_value + 1e-12 * (1.0 + best_value.abs()) {
                return split;
            }
        }
    }
    best
}

/// Held-out mean squared error of each penalty on a log grid; returns the minimiser.
pub fn cross_validate_lambda<R: Rng + ?Sized>(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    folds: usize,
    grid_size: usize,
    rng: &mut R,
) -> Result<f64> {
    let cfg = LassoConfig {
        folds,
        grid_size,
        ..LassoConfig::default()
    };
    cross_validate(a, y, &cfg, Blocks::Single, rng).map(|cv| cv.lambda)
}

#[derive(Clone, Debug)]
pub struct CrossValidation {
    pub lambda: f64,
    pub grid: Vec<f64>,
    /// Held-out error for each grid point visited before the path stopped.
    pub mean_errors: Vec<f64>,
}

/// Log-spaced grid from λ_max down to λ_max · min_ratio.
pub fn lambda_grid(lambda_max: f64, grid_size: usize, min_ratio: f64) -> Vec<f64> {
    if grid_size <= 1 {
        return vec![lambda_max];
    }
    let lo = min_ratio.ln();
    (0..grid_size)
        .map(|i| lambda_max * (lo * i as f64 / (grid_size - 1) as f64).exp())
        .collect()
}

pub fn cross_validate<R: Rng + ?Sized>(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &LassoConfig,
    blocks: Blocks,
    rng: &mut R,
) -> Result<CrossValidation> {
    let n = a.nrows();
    let m = a.ncols();
    if cfg.folds < 2 {
        return Err(invalid(format!("need at least 2 folds, got {}", cfg.folds)));
    }
    if n < cfg.folds {
        return Err(invalid(format!("cannot split {n} samples into {} folds", cfg.folds)));
    }
    if cfg.grid_size == 0 {
        return Err(invalid("grid_size must be positive"));
    }
    let ybar = y.mean();
    let yc = y.add_scalar(-ybar);
    let lmax = lambda_max(a, &yc);
    if lmax == 0.0 {
        // nothing correlates with y: any positive penalty gives β = 0
        return Ok(CrossValidation {
            lambda: f64::MIN_POSITIVE.max(1e-300),
            grid: vec![],
            mean_errors: vec![],
        });
    }
    let grid = lambda_grid(lmax, cfg.grid_size, cfg.lambda_min_ratio);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % cfg.folds;
    }

    struct Fold {
        a_train: DMatrix<f64>,
        y_train: DVector<f64>,
        a_test: DMatrix<f64>,
        y_test: DVector<f64>,
        warm: Vec<f64>,
    }
    let mut fold_data: Vec<Fold> = (0..cfg.folds)
        .map(|fold| {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
            let mut a_train = a.select_rows(&train);
            let means = crate::simgen::center_columns(&mut a_train);
            let y_train = y.select_rows(&train);
            let y_mean = y_train.mean();
            let mut a_test = a.select_rows(&test);
            for (j, mut col) in a_test.column_iter_mut().enumerate() {
                col.add_scalar_mut(-means[j]);
            }
            Fold {
                a_train,
                y_train: y_train.add_scalar(-y_mean),
                a_test,
                y_test: y.select_rows(&test).add_scalar(-y_mean),
                warm: vec![0.0; m],
            }
        })
        .collect();

    let mut mean_errors = Vec::with_capacity(grid.len());
    let mut best = 0usize;
    for (g, &lambda) in grid.iter().enumerate() {
        let mut sse = 0.0;
        for f in &mut fold_data {
            let (fit, converged) = fit_lasso_budgeted(
                &f.a_train,
                &f.y_train,
                lambda,
                &SolverOptions {
                    tol: cfg.cv_tol * lmax,
                    max_iter: cfg.cv_max_iter,
                    blocks,
                    warm_start: Some(&f.warm),
                    trace: false,
                },
            );
            if !converged {
                log::debug!(
                    "cross-validation fit at lambda {lambda:.3e} stopped after {} sweeps (KKT {:.1e})",
                    fit.iterations,
                    fit.max_kkt_violation
                );
            }
            let pred = &f.a_test * DVector::from_column_slice(&fit.coefficients);
            sse += (&f.y_test - pred).norm_squared();
            f.warm = fit.coefficients;
        }
        mean_errors.push(sse / n as f64);
        // ties resolve to the larger penalty (earlier grid point)
        if mean_errors[g] < mean_errors[best] {
            best = g;
        }
        if cfg.cv_patience > 0 && g - best >= cfg.cv_patience {
            break;
        }
    }
    Ok(CrossValidation {
        lambda: grid[best],
        grid,
        mean_errors,
    })
}

/// Column-centred `[X, X̃]`.
pub fn augmented_design(x: &DMatrix<f64>, xtilde: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.shape() != xtilde.shape() {
        return Err(invalid(format!(
            "knockoff shape {:?} differs from design shape {:?}",
            xtilde.shape(),
            x.shape()
        )));
    }
    let (n, p) = x.shape();
    let mut a = DMatrix::zeros(n, 2 * p);
    a.columns_mut(0, p).copy_from(x);
    a.columns_mut(p, p).copy_from(xtilde);
    crate::simgen::center_columns(&mut a);
    Ok(a)
}

/// W_j = |β̂_j| − |β̂_{j+p}| from a Lasso fit on the augmented design.
pub fn lcd_statistic(x: &DMatrix<f64>, xtilde: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<WStatistics> {
    lcd_statistic_with(x, xtilde, y, lambda, &LassoConfig::default()).map(|(w, _)| w)
}

pub fn lcd_statistic_with(
    x: &DMatrix<f64>,
    xtilde: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    cfg: &LassoConfig,
) -> Result<(WStatistics, LassoFit)> {
    let a = augmented_design(x, xtilde)?;
    let yc = y.add_scalar(-y.mean());
    let fit = fit_lasso_with(
        &a,
        &yc,
        lambda,
        &SolverOptions {
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            blocks: Blocks::KnockoffPairs,
            warm_start: None,
            trace: false,
        },
    )?;
    Ok((w_from_coefficients(&fit.coefficients), fit))
}

pub fn w_from_coefficients(beta: &[f64]) -> WStatistics {
    let p = beta.len() / 2;
    WStatistics {
        values: (0..p).map(|j| beta[j].abs() - beta[j + p].abs()).collect(),
    }
}
