//! Brute-force posterior moments by trapezoidal integration, for checking
//! one- and two-parameter full conditionals.

use crate::error::{Error, Result};

/// Relative accuracy requested from the grid refinement.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
const START_INTERVALS: usize = 256;
const MAX_INTERVALS: usize = 1 << 22;
const MAX_INTERVALS_2D: usize = 1 << 11;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments2 {
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
}

fn trapezoid_1d(log_density: &impl Fn(f64) -> f64, lower: f64, upper: f64, intervals: usize) -> Result<Moments> {
    let h = (upper - lower) / intervals as f64;
    let logs: Vec<f64> = (0..=intervals).map(|k| log_density(lower + h * k as f64)).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Unnormalizable);
    }
    let (mut z, mut s1) = (0.0, 0.0);
    for (k, l) in logs.iter().enumerate() {
        let w = if k == 0 || k == intervals { 0.5 } else { 1.0 };
        let x = lower + h * k as f64;
        let d = w * (l - max).exp();
        z += d;
        s1 += d * x;
    }
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Unnormalizable);
    }
    let mean = s1 / z;
    // centre the second moment to avoid cancellation
    let mut v = 0.0;
    for (k, l) in logs.iter().enumerate() {
        let w = if k == 0 || k == intervals { 0.5 } else { 1.0 };
        let x = lower + h * k as f64 - mean;
        v += w * (l - max).exp() * x * x;
    }
    Ok(Moments { mean, variance: v / z })
}

/// Mean and variance of the density proportional to `exp(log_density)` on
/// `[lower, upper]`, refining the grid until both change by less than
/// `tolerance` (relative to the standard deviation and the variance).
///
/// The range must hold essentially all of the mass: a density that is not
/// negligible at either end is reported as unnormalizable.
pub fn moments_1d(log_density: impl Fn(f64) -> f64, lower: f64, upper: f64, tolerance: f64) -> Result<Moments> {
    if !(upper > lower) {
        return Err(Error::InvalidDimension(format!("empty range [{lower}, {upper}]")));
    }
    let mut n = START_INTERVALS;
    let mut prev = trapezoid_1d(&log_density, lower, upper, n)?;
    check_tails(&log_density, lower, upper, n)?;
    loop {
        n *= 2;
        let cur = trapezoid_1d(&log_density, lower, upper, n)?;
        let sd = cur.variance.sqrt();
        if (cur.mean - prev.mean).abs() <= tolerance * sd && (cur.variance - prev.variance).abs() <= tolerance * cur.variance {
            return Ok(cur);
        }
        if n >= MAX_INTERVALS {
            return Err(Error::Unnormalizable);
        }
        prev = cur;
    }
}

fn check_tails(log_density: &impl Fn(f64) -> f64, lower: f64, upper: f64, n: usize) -> Result<()> {
    let h = (upper - lower) / n as f64;
    let max = (0..=n)
        .map(|k| log_density(lower + h * k as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    let edge = log_density(lower).max(log_density(upper));
    if edge > max - 40.0 {
        return Err(Error::Unnormalizable);
    }
    Ok(())
}

fn trapezoid_2d(
    log_density: &impl Fn(f64, f64) -> f64,
    range: [(f64, f64); 2],
    intervals: usize,
) -> Result<Moments2> {
    let hx = (range[0].1 - range[0].0) / intervals as f64;
    let hy = (range[1].1 - range[1].0) / intervals as f64;
    let mut logs = vec![0.0; (intervals + 1) * (intervals + 1)];
    let mut max = f64::NEG_INFINITY;
    for a in 0..=intervals {
        for b in 0..=intervals {
            let l = log_density(range[0].0 + hx * a as f64, range[1].0 + hy * b as f64);
            logs[a * (intervals + 1) + b] = l;
            max = max.max(l);
        }
    }
    if !max.is_finite() {
        return Err(Error::Unnormalizable);
    }
    let weight = |k: usize| if k == 0 || k == intervals { 0.5 } else { 1.0 };
    let (mut z, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for a in 0..=intervals {
        for b in 0..=intervals {
            let d = weight(a) * weight(b) * (logs[a * (intervals + 1) + b] - max).exp();
            z += d;
            sx += d * (range[0].0 + hx * a as f64);
            sy += d * (range[1].0 + hy * b as f64);
        }
    }
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Unnormalizable);
    }
    let mean = [sx / z, sy / z];
    let mut c = [[0.0; 2]; 2];
    for a in 0..=intervals {
        for b in 0..=intervals {
            let d = weight(a) * weight(b) * (logs[a * (intervals + 1) + b] - max).exp();
            let dx = range[0].0 + hx * a as f64 - mean[0];
            let dy = range[1].0 + hy * b as f64 - mean[1];
            c[0][0] += d * dx * dx;
            c[0][1] += d * dx * dy;
            c[1][1] += d * dy * dy;
        }
    }
    c[0][0] /= z;
    c[0][1] /= z;
    c[1][1] /= z;
    c[1][0] = c[0][1];
    Ok(Moments2 { mean, covariance: c })
}

/// Two-parameter version of [`moments_1d`] on a rectangle.
pub fn moments_2d(log_density: impl Fn(f64, f64) -> f64, range: [(f64, f64); 2], tolerance: f64) -> Result<Moments2> {
    if range.iter().any(|(lo, hi)| !(hi > lo)) {
        return Err(Error::InvalidDimension("empty integration rectangle".into()));
    }
    let mut n = 64;
    let mut prev = trapezoid_2d(&log_density, range, n)?;
    loop {
        n *= 2;
        let cur = trapezoid_2d(&log_density, range, n)?;
        let converged = (0..2).all(|d| {
            let sd = cur.covariance[d][d].sqrt();
            (cur.mean[d] - prev.mean[d]).abs() <= tolerance * sd
                && (cur.covariance[d][d] - prev.covariance[d][d]).abs() <= tolerance * cur.covariance[d][d]
        }) && (cur.covariance[0][1] - prev.covariance[0][1]).abs()
            <= tolerance * (cur.covariance[0][0] * cur.covariance[1][1]).sqrt();
        if converged {
            return Ok(cur);
        }
        if n >= MAX_INTERVALS_2D {
            return Err(Error::Unnormalizable);
        }
        prev = cur;
    }
}

fn log_trapezoid(log_density: &impl Fn(f64) -> f64, lower: f64, upper: f64, intervals: usize) -> Result<f64> {
    let h = (upper - lower) / intervals as f64;
    let logs: Vec<f64> = (0..=intervals).map(|k| log_density(lower + h * k as f64)).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Unnormalizable);
    }
    let sum: f64 = logs
        .iter()
        .enumerate()
        .map(|(k, l)| if k == 0 || k == intervals { 0.5 } else { 1.0 } * (l - max).exp())
        .sum();
    Ok(max + (sum * h).ln())
}

/// Log of the integral of `exp(log_density)` over `[lower, upper]`, refined
/// until it changes by less than `tolerance`.
pub fn log_integral_1d(log_density: impl Fn(f64) -> f64, lower: f64, upper: f64, tolerance: f64) -> Result<f64> {
    if !(upper > lower) {
        return Err(Error::InvalidDimension(format!("empty range [{lower}, {upper}]")));
    }
    check_tails(&log_density, lower, upper, START_INTERVALS)?;
    let mut n = START_INTERVALS;
    let mut prev = log_trapezoid(&log_density, lower, upper, n)?;
    loop {
        n *= 2;
        let cur = log_trapezoid(&log_density, lower, upper, n)?;
        if (cur - prev).abs() <= tolerance {
            return Ok(cur);
        }
        if n >= MAX_INTERVALS {
            return Err(Error::Unnormalizable);
        }
        prev = cur;
    }
}

/// Distribution function of the normalized density on a grid, for comparing
/// against sampled histograms.
pub fn cdf_1d(log_density: impl Fn(f64) -> f64, lower: f64, upper: f64, intervals: usize) -> Result<Vec<(f64, f64)>> {
    let h = (upper - lower) / intervals as f64;
    let logs: Vec<f64> = (0..=intervals).map(|k| log_density(lower + h * k as f64)).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Unnormalizable);
    }
    let dens: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let mut out = Vec::with_capacity(intervals + 1);
    let mut acc = 0.0;
    out.push((lower, 0.0));
    for k in 1..=intervals {
        acc += 0.5 * (dens[k - 1] + dens[k]);
        out.push((lower + h * k as f64, acc));
    }
    if !(acc > 0.0) {
        return Err(Error::Unnormalizable);
    }
    for v in &mut out {
        v.1 /= acc;
    }
    Ok(out)
}

/// Largest gap between an empirical distribution and a tabulated CDF.
pub fn ks_distance(samples: &[f64], cdf: &[(f64, f64)]) -> f64 {
    let sorted = crate::numerics::sorted(samples);
    let n = sorted.len() as f64;
    let interp = |x: f64| -> f64 {
        match cdf.partition_point(|(t, _)| *t < x) {
            0 => 0.0,
            k if k >= cdf.len() => 1.0,
            k => {
                let (x0, f0) = cdf[k - 1];
                let (x1, f1) = cdf[k];
                f0 + (f1 - f0) * (x - x0) / (x1 - x0)
            }
        }
    };
    sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = interp(x);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
