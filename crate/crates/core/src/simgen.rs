//! Synthetic sparse regression problems with Toeplitz (AR(1)) designs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, KopiError, Result};
use crate::rng::{tags, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub sparsity: f64,
    pub snr: f64,
    pub seed: u64,
    /// Rescale columns to unit empirical variance after centering.
    #[serde(default)]
    pub standardize: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 500,
            p: 500,
            rho: 0.5,
            sparsity: 0.1,
            snr: 2.0,
            seed: 0,
            standardize: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid(format!("n must be at least 2, got {}", self.n)));
        }
        if self.p < 2 {
            return Err(invalid(format!("p must be at least 2, got {}", self.p)));
        }
        check_rho(self.rho)?;
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return Err(invalid(format!("sparsity must lie in (0, 1], got {}", self.sparsity)));
        }
        if !(self.snr > 0.0) {
            return Err(invalid(format!("snr must be positive, got {}", self.snr)));
        }
        Ok(())
    }

    /// Number of non-null variables, ⌊sparsity · p⌋.
    pub fn support_size(&self) -> usize {
        support_size(self.p, self.sparsity)
    }
}

#[derive(Clone, Debug)]
pub struct SimulatedDataset {
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
    /// Sorted indices of the non-null variables (H₁).
    pub support: Vec<usize>,
    pub beta: DVector<f64>,
    pub noise: DVector<f64>,
    pub noise_scale: f64,
}

impl SimulatedDataset {
    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    pub fn is_null(&self, j: usize) -> bool {
        self.support.binary_search(&j).is_err()
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(invalid(format!("rho must lie in [0, 1), got {rho}")));
    }
    Ok(())
}

fn support_size(p: usize, sparsity: f64) -> usize {
    // 0.29 * 100 evaluates to 28.999999999999996
    (sparsity * p as f64 + 1e-9).floor() as usize
}

/// Σ with Σ_ij = ρ^|i−j|.
pub fn toeplitz_covariance(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// Rows drawn i.i.d. from N(0, Σ) with the AR(1) recursion, then centered.
pub fn gen_toeplitz_design<R: Rng + ?Sized>(n: usize, p: usize, rho: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    check_rho(rho)?;
    let innovation = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev: f64 = rng.sample(StandardNormal);
        if p > 0 {
            x[(i, 0)] = prev;
        }
        for j in 1..p {
            let z: f64 = rng.sample(StandardNormal);
            prev = rho * prev + innovation * z;
            x[(i, j)] = prev;
        }
    }
    center_columns(&mut x);
    Ok(x)
}

/// Binary coefficient vector with exactly ⌊sparsity · p⌋ ones at uniformly drawn positions.
pub fn draw_support<R: Rng + ?Sized>(p: usize, sparsity: f64, rng: &mut R) -> Result<DVector<f64>> {
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(invalid(format!("sparsity must lie in (0, 1], got {sparsity}")));
    }
    let k = support_size(p, sparsity);
    if k == 0 {
        return Err(KopiError::DegenerateSupport { p, sparsity });
    }
    let mut beta = DVector::zeros(p);
    for j in rand::seq::index::sample(rng, p, k) {
        beta[j] = 1.0;
    }
    Ok(beta)
}

#[derive(Clone, Debug)]
pub struct Response {
    pub y: DVector<f64>,
    pub sigma: f64,
    pub noise: DVector<f64>,
}

/// y = Xβ* + σε with σ = ‖Xβ*‖₂ / (snr ‖ε‖₂).
pub fn gen_response<R: Rng + ?Sized>(x: &DMatrix<f64>, beta: &DVector<f64>, snr: f64, rng: &mut R) -> Result<Response> {
    if beta.len() != x.ncols() {
        return Err(invalid(format!(
            "beta has length {} but the design has {} columns",
            beta.len(),
            x.ncols()
        )));
    }
    if !(snr > 0.0) {
        return Err(invalid(format!("snr must be positive, got {snr}")));
    }
    let signal = x * beta;
    let signal_norm = signal.norm();
    if signal_norm == 0.0 {
        return Err(KopiError::DegenerateSignal);
    }
    let noise = DVector::from_fn(x.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let sigma = signal_norm / (snr * noise.norm());
    let y = &signal + &noise * sigma;
    Ok(Response { y, sigma, noise })
}

/// Full simulation from a config; each ingredient uses its own sub-stream of `config.seed`.
pub fn simulate(config: &SimConfig) -> Result<SimulatedDataset> {
    config.validate()?;
    let root = Stream::new(config.seed);
    let mut design = gen_toeplitz_design(config.n, config.p, config.rho, &mut root.child(tags::DESIGN).rng())?;
    if config.standardize {
        standardize_columns(&mut design);
    }
    let beta = draw_support(config.p, config.sparsity, &mut root.child(tags::SUPPORT).rng())?;
    let response = gen_response(&design, &beta, config.snr, &mut root.child(tags::NOISE).rng())?;
    let support = (0..config.p).filter(|&j| beta[j] != 0.0).collect();
    Ok(SimulatedDataset {
        design,
        response: response.y,
        support,
        beta,
        noise: response.noise,
        noise_scale: response.sigma,
    })
}

/// Global-null data: the same design law, β* = 0 and y = ε.
pub fn simulate_global_null(n: usize, p: usize, rho: f64, seed: u64) -> Result<SimulatedDataset> {
    if n < 2 || p < 1 {
        return Err(invalid(format!("need n >= 2 and p >= 1, got n={n}, p={p}")));
    }
    let root = Stream::new(seed);
    let design = gen_toeplitz_design(n, p, rho, &mut root.child(tags::DESIGN).rng())?;
    let mut rng = root.child(tags::NOISE).rng();
    let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(SimulatedDataset {
        design,
        response: noise.clone(),
        support: Vec::new(),
        beta: DVector::zeros(p),
        noise,
        noise_scale: 1.0,
    })
}

/// Subtracts column means in place and returns them.
pub fn center_columns(x: &mut DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    let mut means = Vec::with_capacity(x.ncols());
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        means.push(mean);
    }
    means
}

/// Centers and rescales columns to unit empirical variance (1/n normalisation).
/// Constant columns are left at zero.
pub fn standardize_columns(x: &mut DMatrix<f64>) -> Vec<f64> {
    center_columns(x);
    let n = x.nrows() as f64;
    let mut scales = Vec::with_capacity(x.ncols());
    for mut col in x.column_iter_mut() {
        let sd = (col.norm_squared() / n).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
        scales.push(sd);
    }
    scales
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn empirical_cov(x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows() as f64;
        x.transpose() * x / n
    }

    #[test]
    fn toeplitz_target_matrix() {
        let s = toeplitz_covariance(3, 0.5);
        let want = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0]);
        assert_eq!(s, want);
    }

    #[test]
    fn independent_columns_at_rho_zero() {
        let x = gen_toeplitz_design(20_000, 4, 0.0, &mut Stream::new(1).rng()).unwrap();
        let c = empirical_cov(&x);
        for i in 0..4 {
            for j in 0..4 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((c[(i, j)] - target).abs() < 0.04, "{i},{j}: {}", c[(i, j)]);
            }
        }
    }

    #[test]
    fn lag_two_covariance_is_rho_squared() {
        let x = gen_toeplitz_design(50_000, 4, 0.5, &mut Stream::new(2).rng()).unwrap();
        let c = empirical_cov(&x);
        assert!((c[(0, 2)] - 0.25).abs() < 0.02, "{}", c[(0, 2)]);
    }

    #[test]
    fn covariance_fidelity_large_n() {
        for (seed, rho) in [(3u64, 0.3), (4, 0.7), (5, 0.9)] {
            let x = gen_toeplitz_design(100_000, 6, rho, &mut Stream::new(seed).rng()).unwrap();
            let diff = empirical_cov(&x) - toeplitz_covariance(6, rho);
            let worst = diff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(worst < 0.02, "rho={rho}: {worst}");
        }
    }

    #[test]
    fn columns_are_centered() {
        let x = gen_toeplitz_design(37, 5, 0.6, &mut Stream::new(6).rng()).unwrap();
        for col in x.column_iter() {
            assert!((col.sum() / 37.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rho_out_of_range() {
        let mut rng = Stream::new(0).rng();
        assert!(matches!(
            gen_toeplitz_design(5, 3, 1.0, &mut rng),
            Err(KopiError::InvalidParameter(_))
        ));
        assert!(gen_toeplitz_design(5, 3, -0.1, &mut rng).is_err());
    }

    #[test]
    fn support_sizes() {
        let mut rng = Stream::new(9).rng();
        let full = draw_support(7, 1.0, &mut rng).unwrap();
        assert!(full.iter().all(|&b| b == 1.0));
        let b = draw_support(500, 0.1, &mut rng).unwrap();
        assert_eq!(b.iter().filter(|&&v| v == 1.0).count(), 50);
        assert_eq!(b.iter().filter(|&&v| v == 0.0).count(), 450);
        let b = draw_support(100, 0.29, &mut rng).unwrap();
        assert_eq!(b.sum(), 29.0);
    }

    #[test]
    fn support_is_deterministic() {
        let a = draw_support(300, 0.2, &mut Stream::new(11).rng()).unwrap();
        let b = draw_support(300, 0.2, &mut Stream::new(11).rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_support_is_an_error() {
        let err = draw_support(5, 0.1, &mut Stream::new(0).rng()).unwrap_err();
        assert!(matches!(err, KopiError::DegenerateSupport { p: 5, .. }));
    }

    #[test]
    fn snr_identity_holds() {
        let mut rng = Stream::new(12).rng();
        let x = gen_toeplitz_design(80, 10, 0.5, &mut rng).unwrap();
        let beta = draw_support(10, 0.3, &mut rng).unwrap();
        for snr in [0.5, 2.0, 7.0] {
            let r = gen_response(&x, &beta, snr, &mut rng).unwrap();
            let achieved = (&x * &beta).norm() / (r.sigma * r.noise.norm());
            assert!((achieved - snr).abs() < 1e-12 * snr.max(1.0));
        }
    }

    #[test]
    fn sigma_recomputed_from_stored_noise() {
        let mut rng = Stream::new(13).rng();
        let x = gen_toeplitz_design(60, 8, 0.4, &mut rng).unwrap();
        let beta = draw_support(8, 0.25, &mut rng).unwrap();
        let r = gen_response(&x, &beta, 2.0, &mut rng).unwrap();
        let signal = &x * &beta;
        let sigma = signal.norm() / (2.0 * r.noise.norm());
        assert_eq!(sigma, r.sigma);
        let y = &signal + &r.noise * sigma;
        assert_eq!(y, r.y);
    }

    #[test]
    fn noiseless_limit() {
        let mut rng = Stream::new(14).rng();
        let x = gen_toeplitz_design(30, 5, 0.2, &mut rng).unwrap();
        let beta = draw_support(5, 0.4, &mut rng).unwrap();
        let r = gen_response(&x, &beta, 1e12, &mut rng).unwrap();
        assert!(r.sigma < 1e-10);
        assert!((r.y - &x * &beta).norm() < 1e-9);
    }

    #[test]
    fn zero_signal_is_an_error() {
        let mut rng = Stream::new(15).rng();
        let x = gen_toeplitz_design(10, 3, 0.2, &mut rng).unwrap();
        let beta = DVector::zeros(3);
        assert!(matches!(
            gen_response(&x, &beta, 2.0, &mut rng),
            Err(KopiError::DegenerateSignal)
        ));
    }

    #[test]
    fn simulate_is_bit_reproducible() {
        let cfg = SimConfig {
            n: 40,
            p: 30,
            seed: 99,
            ..SimConfig::default()
        };
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a.design, b.design);
        assert_eq!(a.response, b.response);
        assert_eq!(a.support, b.support);
        assert_eq!(a.support.len(), 3);
        assert!(a.support.iter().all(|&j| j < 30));
    }

    #[test]
    fn standardize_flag() {
        let cfg = SimConfig {
            n: 50,
            p: 6,
            sparsity: 0.5,
            standardize: true,
            seed: 5,
            ..SimConfig::default()
        };
        let d = simulate(&cfg).unwrap();
        for col in d.design.column_iter() {
            assert!((col.norm_squared() / 50.0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        let bad = SimConfig {
            rho: 1.0,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SimConfig {
            sparsity: 0.0,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SimConfig {
            n: 1,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(SimConfig::default().validate().is_ok());
    }
}
