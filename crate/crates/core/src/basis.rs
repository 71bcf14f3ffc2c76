//! Clamped, equispaced B-spline bases.
//!
//! A basis of degree `k` with `p` functions on `[L, U]` uses the knot vector
//!
//! ```text
//! L = t_1 = … = t_{k+1} < t_{k+2} < … < t_p < t_{p+1} = … = t_{p+k+1} = U
//! ```
//!
//! where the `p - k - 1` interior knots split `[L, U]` into `p - k` intervals of
//! equal length. Function `b_j` is supported on `[t_j, t_{j+k+1}]`, at most
//! `k + 1` functions are non-zero at any point and together they sum to one.
//! Evaluation uses the triangular form of the Cox–de Boor recursion; the right
//! end point belongs to the last non-degenerate knot interval so that
//! `b_p(U) = 1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    degree: usize,
    df: usize,
    lower: f64,
    upper: f64,
    knots: Vec<f64>,
}

/// Builds the equispaced `(k+1)`-open knot sequence for `df` functions of `degree` on `[lower, upper]`.
pub fn make_knots(df: usize, degree: usize, lower: f64, upper: f64) -> Result<SplineBasis> {
    if df < degree + 1 {
        return Err(Error::InvalidDimension(format!(
            "need at least {} basis functions for degree {degree}, got {df}",
            degree + 1
        )));
    }
    if !(lower < upper) {
        return Err(Error::InvalidDimension(format!(
            "empty interval [{lower}, {upper}]"
        )));
    }
    let intervals = df - degree;
    let mut knots = Vec::with_capacity(df + degree + 1);
    knots.extend(std::iter::repeat_n(lower, degree + 1));
    knots.extend((1..intervals).map(|i| lower + (upper - lower) * i as f64 / intervals as f64));
    knots.extend(std::iter::repeat_n(upper, degree + 1));
    Ok(SplineBasis {
        degree,
        df,
        lower,
        upper,
        knots,
    })
}

impl SplineBasis {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn df(&self) -> usize {
        self.df
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[self.degree + 1..self.df]
    }

    /// Closed support `[t_j, t_{j+k+1}]` of basis function `j` (0-based).
    pub fn support(&self, j: usize) -> (f64, f64) {
        (self.knots[j], self.knots[j + self.degree + 1])
    }

    /// Width of one interior knot interval.
    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.df - self.degree) as f64
    }

    /// Same knot spacing, continued past `upper` by at least `width`, with the
    /// old right end demoted to an ordinary interior knot.
    pub fn extended_right(&self, width: f64) -> SplineBasis {
        let h = self.spacing();
        let extra = (width / h).ceil().max(1.0) as usize;
        let new_upper = self.upper + extra as f64 * h;
        let mut knots = Vec::with_capacity(self.df + extra + self.degree + 1);
        knots.extend_from_slice(&self.knots[..self.df]);
        knots.extend((0..extra).map(|e| self.upper + e as f64 * h));
        knots.extend(std::iter::repeat_n(new_upper, self.degree + 1));
        SplineBasis {
            degree: self.degree,
            df: self.df + extra,
            lower: self.lower,
            upper: new_upper,
            knots,
        }
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        if t >= self.lower && t <= self.upper {
            Ok(())
        } else {
            Err(Error::Domain {
                value: t,
                lower: self.lower,
                upper: self.upper,
            })
        }
    }

    /// Index `s` of the knot interval `[t_s, t_{s+1})` holding `t`; `U` maps to the last one.
    fn span(&self, t: f64) -> usize {
        let (mut lo, mut hi) = (self.degree, self.df);
        if t >= self.knots[self.df] {
            return self.df - 1;
        }
        // invariant: knots[lo] <= t < knots[hi]
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// The `k + 1` possibly non-zero values at `t` and the index of the first one.
    pub fn eval_nonzero(&self, t: f64) -> Result<(usize, Vec<f64>)> {
        self.check_domain(t)?;
        let k = self.degree;
        let span = self.span(t);
        let mut values = vec![0.0; k + 1];
        let mut left = vec![0.0; k + 1];
        let mut right = vec![0.0; k + 1];
        values[0] = 1.0;
        for j in 1..=k {
            left[j] = t - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { values[r] / denom };
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        Ok((span - k, values))
    }

    /// `(b_1(t), …, b_p(t))`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let (first, nz) = self.eval_nonzero(t)?;
        let mut out = vec![0.0; self.df];
        out[first..first + nz.len()].copy_from_slice(&nz);
        Ok(out)
    }

    /// One row per time point.
    pub fn design_matrix(&self, times: &[f64]) -> Result<DMatrix<f64>> {
        let mut b = DMatrix::zeros(times.len(), self.df);
        for (row, &t) in times.iter().enumerate() {
            let (first, nz) = self.eval_nonzero(t)?;
            for (offset, v) in nz.into_iter().enumerate() {
                b[(row, first + offset)] = v;
            }
        }
        Ok(b)
    }

    /// `f(t) = Σ_m θ_m b_m(t)`.
    pub fn eval_function(&self, theta: &[f64], t: f64) -> Result<f64> {
        if theta.len() != self.df {
            return Err(Error::DimensionMismatch {
                expected: self.df,
                actual: theta.len(),
            });
        }
        let (first, nz) = self.eval_nonzero(t)?;
        Ok(nz.iter().zip(&theta[first..]).map(|(b, c)| b * c).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Textbook recursive definition with the 0/0 := 0 convention; the right
    /// end point is attached to the last non-empty interval.
    fn naive(knots: &[f64], j: usize, k: usize, t: f64, upper: f64) -> f64 {
        if k == 0 {
            let (a, b) = (knots[j], knots[j + 1]);
            let last_nonempty = b == upper && a < b;
            return if (a <= t && t < b) || (t == upper && last_nonempty) {
                1.0
            } else {
                0.0
            };
        }
        let mut out = 0.0;
        let d1 = knots[j + k] - knots[j];
        if d1 > 0.0 {
            out += (t - knots[j]) / d1 * naive(knots, j, k - 1, t, upper);
        }
        let d2 = knots[j + k + 1] - knots[j + 1];
        if d2 > 0.0 {
            out += (knots[j + k + 1] - t) / d2 * naive(knots, j + 1, k - 1, t, upper);
        }
        out
    }

    #[test]
    fn knot_counts() {
        let b = make_knots(80, 3, 0.0, 1.0).unwrap();
        assert_eq!(b.knots().len(), 84);
        assert_eq!(b.interior_knots().len(), 76);
        for (i, knot) in b.interior_knots().iter().enumerate() {
            assert!((knot - (i + 1) as f64 / 77.0).abs() < 1e-15);
        }
        assert_eq!(make_knots(120, 3, 0.0, 1.0).unwrap().interior_knots().len(), 116);
        let minimal = make_knots(4, 3, 0.0, 1.0).unwrap();
        assert_eq!(minimal.knots(), &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(make_knots(3, 3, 0.0, 1.0), Err(Error::InvalidDimension(_))));
        assert!(matches!(make_knots(10, 3, 1.0, 1.0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn bernstein_case() {
        let b = make_knots(4, 3, 0.0, 1.0).unwrap();
        let v = b.eval(0.5).unwrap();
        for (got, want) in v.iter().zip([0.125, 0.375, 0.375, 0.125]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!((b.eval_function(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn end_points() {
        let b = make_knots(80, 3, 0.0, 1.0).unwrap();
        let at_lower = b.eval(0.0).unwrap();
        assert_eq!(at_lower[0], 1.0);
        assert!(at_lower[1..].iter().all(|&v| v == 0.0));
        let at_upper = b.eval(1.0).unwrap();
        assert_eq!(at_upper[79], 1.0);
        assert!(at_upper[..79].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn domain_errors() {
        let b = make_knots(10, 3, 0.0, 1.0).unwrap();
        assert!(matches!(b.eval(1.5), Err(Error::Domain { .. })));
        assert!(matches!(b.eval(-1e-9), Err(Error::Domain { .. })));
        assert!(matches!(b.design_matrix(&[0.2, 2.0]), Err(Error::Domain { .. })));
        assert!(matches!(
            b.eval_function(&[1.0; 4], 0.5),
            Err(Error::DimensionMismatch { expected: 10, actual: 4 })
        ));
    }

    #[test]
    fn design_matrix_shapes() {
        let b = make_knots(12, 3, 0.0, 1.0).unwrap();
        assert_eq!(b.design_matrix(&[]).unwrap().shape(), (0, 12));
        let single = b.design_matrix(&[0.0]).unwrap();
        assert_eq!(single[(0, 0)], 1.0);
        let m = b.design_matrix(&[0.1, 0.33, 0.999, 1.0]).unwrap();
        for row in m.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_recursive_definition() {
        let b = make_knots(9, 3, 0.0, 1.0).unwrap();
        for step in 0..=200 {
            let t = step as f64 / 200.0;
            let fast = b.eval(t).unwrap();
            for (j, value) in fast.iter().enumerate() {
                let slow = naive(b.knots(), j, 3, t, 1.0);
                assert!((value - slow).abs() < 1e-13, "j={j} t={t}: {value} vs {slow}");
            }
        }
    }

    fn encloses_a_support(b: &SplineBasis, start: f64, end: f64) -> bool {
        (0..b.df()).any(|j| {
            let (a, z) = b.support(j);
            a >= start && z <= end
        })
    }

    #[test]
    fn seasons_hold_a_full_support() {
        // a window of (degree + 2) knot spacings always encloses one support,
        // whatever its offset
        let b = make_knots(80, 3, 0.0, 1.0).unwrap();
        let width = 5.0 * b.spacing() + 1e-12;
        for step in 0..1000 {
            let start = step as f64 / 1000.0 * (1.0 - width);
            assert!(encloses_a_support(&b, start, start + width), "offset {start}");
        }
        // 0.054 is only 0.0021 wider than one support (4/77), so it depends on alignment
        let knot = b.interior_knots()[9];
        assert!(encloses_a_support(&b, knot, knot + 0.054));
        assert!(!encloses_a_support(&b, knot + 0.003, knot + 0.057));
    }

    #[test]
    fn second_derivative_continuous_at_knots() {
        let b = make_knots(10, 3, 0.0, 1.0).unwrap();
        let theta: Vec<f64> = (0..10).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let f = |t: f64| b.eval_function(&theta, t).unwrap();
        let h = 1e-3;
        // central second differences are exact on a cubic piece and linear in
        // the centre, so each side extrapolates to its own limit at the knot
        let second = |c: f64| (f(c + h) - 2.0 * f(c) + f(c - h)) / (h * h);
        for &knot in b.interior_knots() {
            let left = 2.0 * second(knot - 2.0 * h) - second(knot - 4.0 * h);
            let right = 2.0 * second(knot + 2.0 * h) - second(knot + 4.0 * h);
            assert!((left - right).abs() < 1e-6, "{left} vs {right}");
            let jump = (f(knot + 1e-8) - f(knot)) / 1e-8 - (f(knot) - f(knot - 1e-8)) / 1e-8;
            assert!(jump.abs() < 1e-5 * (1.0 + left.abs()), "slope jump {jump}");
        }
    }

    #[test]
    fn extension_keeps_spacing() {
        let b = make_knots(20, 3, 0.0, 1.0).unwrap();
        let e = b.extended_right(0.1);
        assert!(e.upper() >= 1.1 - 1e-12);
        assert_eq!(e.df(), 20 + (0.1 / b.spacing()).ceil() as usize);
        let interior = e.interior_knots();
        for w in interior.windows(2) {
            assert!((w[1] - w[0] - b.spacing()).abs() < 1e-12);
        }
        let v = e.eval(1.05).unwrap();
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn partition_and_support(t in 0.0f64..=1.0, df in 4usize..60) {
            let b = make_knots(df, 3, 0.0, 1.0).unwrap();
            let v = b.eval(t).unwrap();
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(v.iter().all(|&x| x >= 0.0));
            prop_assert!(v.iter().filter(|&&x| x != 0.0).count() <= 4);
            for (j, &x) in v.iter().enumerate() {
                let (a, z) = b.support(j);
                if t < a || t > z {
                    prop_assert_eq!(x, 0.0);
                }
            }
        }

        #[test]
        fn constant_coefficients_reproduce_constant(t in 0.0f64..=1.0, c in -5.0f64..5.0) {
            let b = make_knots(30, 3, 0.0, 1.0).unwrap();
            prop_assert!((b.eval_function(&[c; 30], t).unwrap() - c).abs() < 1e-12);
            prop_assert_eq!(b.eval_function(&[0.0; 30], t).unwrap(), 0.0);
        }
    }
}
