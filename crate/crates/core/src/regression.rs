//! Linear covariate effects `x_i(t)ᵀβ` with `β ~ N(β0, σ_β² I)` and
//! `σ_β^{-2} ~ Ga(ν/2, ν s²/2)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::config::{Hyperparameters, SigmaBetaForm};
use crate::error::Result;
use crate::numerics::{self, DrawScale};

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionPrior {
    pub centre: DVector<f64>,
    pub dof: f64,
    pub scale: f64,
    pub form: SigmaBetaForm,
}

impl RegressionPrior {
    pub fn new(hyper: &Hyperparameters, r: usize, form: SigmaBetaForm) -> Self {
        Self {
            centre: DVector::from_vec(hyper.beta_0(r)),
            dof: hyper.nu_beta,
            scale: hyper.sigma_beta,
            form,
        }
    }

    pub fn r(&self) -> usize {
        self.centre.len()
    }
}

/// Cross products of the stacked covariate matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossProducts {
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
}

impl CrossProducts {
    pub fn new<'a>(rows: impl IntoIterator<Item = (&'a [f64], f64)>, r: usize) -> Self {
        let mut xtx = DMatrix::zeros(r, r);
        let mut xty = DVector::zeros(r);
        for (x, y) in rows {
            for a in 0..r {
                xty[a] += x[a] * y;
                for b in 0..r {
                    xtx[(a, b)] += x[a] * x[b];
                }
            }
        }
        Self { xtx, xty }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionState {
    pub coefficients: DVector<f64>,
    /// σ_β^{-2}
    pub prior_precision: f64,
}

impl RegressionState {
    pub fn from_prior<R: Rng + ?Sized>(prior: &RegressionPrior, rng: &mut R) -> Self {
        let prior_precision = numerics::gamma(rng, prior.dof / 2.0, prior.dof * prior.scale * prior.scale / 2.0);
        let sd = 1.0 / prior_precision.sqrt();
        let coefficients = prior.centre.map(|c| c + sd * numerics::std_normal(rng));
        Self {
            coefficients,
            prior_precision,
        }
    }

    /// Posterior precision `xᵀx/ψ² + σ_β^{-2} I` and linear term `σ_β^{-2} β0 + xᵀy/ψ²`.
    pub fn conditional(&self, cross: &CrossProducts, error_precision: f64, prior: &RegressionPrior) -> (DMatrix<f64>, DVector<f64>) {
        let r = prior.r();
        let precision = &cross.xtx * error_precision + DMatrix::identity(r, r) * self.prior_precision;
        let linear = &prior.centre * self.prior_precision + &cross.xty * error_precision;
        (precision, linear)
    }

    pub fn update_coefficients<R: Rng + ?Sized>(
        &mut self,
        cross: &CrossProducts,
        error_precision: f64,
        prior: &RegressionPrior,
        rng: &mut R,
        scale: DrawScale,
    ) -> Result<()> {
        if prior.r() == 0 {
            return Ok(());
        }
        let (precision, linear) = self.conditional(cross, error_precision, prior);
        self.coefficients = numerics::mvn_from_precision(precision, &linear, rng, scale, "regression")?;
        Ok(())
    }

    /// `residuals` carries (count, sum of squares) of the full residuals and is
    /// only read by [`SigmaBetaForm::Residual`].
    pub fn update_prior_precision<R: Rng + ?Sized>(
        &mut self,
        prior: &RegressionPrior,
        residuals: (usize, f64),
        rng: &mut R,
        scale: DrawScale,
    ) {
        if prior.r() == 0 {
            return;
        }
        let base = prior.dof * prior.scale * prior.scale;
        let (shape, rate) = match prior.form {
            SigmaBetaForm::Conjugate => {
                let dev = (&self.coefficients - &prior.centre).norm_squared();
                ((prior.r() as f64 + prior.dof) / 2.0, (base + dev) / 2.0)
            }
            SigmaBetaForm::Residual => ((residuals.0 as f64 + prior.dof) / 2.0, (base + residuals.1) / 2.0),
        };
        self.prior_precision = numerics::gamma_scaled(rng, shape, rate, scale);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{chain_rng, mean, variance};

    fn prior(r: usize) -> RegressionPrior {
        RegressionPrior::new(&Hyperparameters::default(), r, SigmaBetaForm::Conjugate)
    }

    #[test]
    fn scalar_posterior() {
        let cross = CrossProducts::new([(&[1.0][..], 1.0), (&[1.0][..], 3.0)], 1);
        let state = RegressionState {
            coefficients: DVector::zeros(1),
            prior_precision: 1.0,
        };
        let (a, b) = state.conditional(&cross, 1.0, &prior(1));
        assert_eq!((a[(0, 0)], b[0]), (3.0, 4.0));
        let mut rng = chain_rng(1);
        let mut s = state.clone();
        let draws: Vec<f64> = (0..100_000)
            .map(|_| {
                s.update_coefficients(&cross, 1.0, &prior(1), &mut rng, DrawScale::default()).unwrap();
                s.coefficients[0]
            })
            .collect();
        assert!((mean(&draws) - 4.0 / 3.0).abs() < 0.01);
        assert!((variance(&draws) - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn zero_design_gives_prior() {
        let cross = CrossProducts::new([(&[0.0, 0.0][..], 2.0)], 2);
        let state = RegressionState {
            coefficients: DVector::zeros(2),
            prior_precision: 4.0,
        };
        let (a, b) = state.conditional(&cross, 1.0, &prior(2));
        assert_eq!(a, DMatrix::identity(2, 2) * 4.0);
        assert_eq!(b, DVector::zeros(2));
    }

    #[test]
    fn flat_prior_limit_is_least_squares() {
        let rows: Vec<(Vec<f64>, f64)> = (0..20)
            .map(|i| {
                let x = vec![1.0, i as f64 / 10.0];
                let y = 0.5 - 1.5 * x[1] + ((i * 7) % 5) as f64 * 0.01;
                (x, y)
            })
            .collect();
        let cross = CrossProducts::new(rows.iter().map(|(x, y)| (x.as_slice(), *y)), 2);
        let state = RegressionState {
            coefficients: DVector::zeros(2),
            prior_precision: 1e-10,
        };
        let (a, b) = state.conditional(&cross, 1.0, &prior(2));
        let posterior_mean = a.cholesky().unwrap().solve(&b);
        let ls = cross.xtx.clone().cholesky().unwrap().solve(&cross.xty);
        assert!((posterior_mean - ls).amax() < 1e-6);
    }

    #[test]
    fn precision_with_beta_at_centre() {
        let mut rng = chain_rng(2);
        let p = prior(3);
        let mut state = RegressionState {
            coefficients: DVector::zeros(3),
            prior_precision: 1.0,
        };
        let draws: Vec<f64> = (0..200_000)
            .map(|_| {
                state.update_prior_precision(&p, (0, 0.0), &mut rng, DrawScale::default());
                state.prior_precision
            })
            .collect();
        // Ga(1.75, 0.0625)
        assert!((mean(&draws) / 28.0 - 1.0).abs() < 0.01);
        state.coefficients = DVector::from_element(3, 2.0);
        let far: Vec<f64> = (0..20_000)
            .map(|_| {
                state.update_prior_precision(&p, (0, 0.0), &mut rng, DrawScale::default());
                state.prior_precision
            })
            .collect();
        assert!(mean(&far) < mean(&draws));
    }
}
