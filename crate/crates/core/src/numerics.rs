//! Small sampling and linear-algebra helpers shared by the update blocks.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

pub type ChainRng = ChaCha8Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Scales the spread of every conditional draw. `1.0` is the correct sampler;
/// anything else is a deliberately corrupted update used to check that the
/// joint-distribution tests have power.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DrawScale(pub f64);

impl Default for DrawScale {
    fn default() -> Self {
        DrawScale(1.0)
    }
}

impl DrawScale {
    pub fn is_exact(self) -> bool {
        self.0 == 1.0
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent RNG stream for one (iteration, block, unit) triple of a chain.
/// Results do not depend on how per-unit work is scheduled across threads.
pub fn stream_rng(seed: u64, iteration: u64, block: u64, unit: u64) -> ChainRng {
    let key = splitmix(splitmix(splitmix(seed) ^ iteration) ^ block.wrapping_mul(0x1000_0001)) ^ unit;
    ChaCha8Rng::seed_from_u64(splitmix(key))
}

pub fn chain_rng(seed: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0x5EED))
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Gamma draw parametrized by shape and rate.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    debug_assert!(shape > 0.0 && rate > 0.0, "gamma({shape}, {rate})");
    let g = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters");
    // rand_distr can return exact zero for tiny shapes
    g.sample(rng).max(f64::MIN_POSITIVE)
}

/// Gamma draw whose variance is multiplied by `scale` while keeping the mean.
pub fn gamma_scaled<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64, scale: DrawScale) -> f64 {
    gamma(rng, shape / scale.0, rate / scale.0)
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Draws from N(Q^{-1} b, Q^{-1}) given the precision `Q` and the linear term `b`.
pub fn mvn_from_precision<R: Rng + ?Sized>(
    precision: DMatrix<f64>,
    linear: &DVector<f64>,
    rng: &mut R,
    scale: DrawScale,
    context: &'static str,
) -> Result<DVector<f64>> {
    let chol = Cholesky::new(precision).ok_or(Error::NotPositiveDefinite(context))?;
    let mean = chol.solve(linear);
    let z = DVector::from_fn(linear.len(), |_, _| std_normal(rng) * scale.0.sqrt());
    let noise = chol
        .l()
        .tr_solve_lower_triangular(&z)
        .ok_or(Error::NotPositiveDefinite(context))?;
    Ok(mean + noise)
}

pub fn cholesky(m: DMatrix<f64>, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or(Error::NotPositiveDefinite(context))
}

/// `log(sum(exp(v)))` without overflow.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with the `n - 1` divisor.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

/// Empirical quantile as an order statistic (inverse of the empirical CDF).
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    let rank = (prob * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}
