//! Latent-factor functional component.
//!
//! Spline coefficients are modelled as `θ_i = Λ η_i + ξ_i` with
//! `ξ_i ~ N(0, diag(σ²))`, `η_i ~ N(0, I_k)` and a multiplicative gamma process
//! prior on the loadings: `λ_jl ~ N(0, 1 / (φ_jl τ_l))`, `τ_l = Π_{v≤l} δ_v`.
//! The number of columns `k` is adapted during sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::config::{Hyperparameters, TruncationSettings};
use crate::error::Result;
use crate::numerics::{self, ChainRng, DrawScale};

/// Shrinkage and residual hyperparameters of the factor block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorPrior {
    pub residual_shape: f64,
    pub residual_rate: f64,
    pub local_dof: f64,
    pub first_shape: f64,
    pub first_rate: f64,
    pub later_shape: f64,
    pub later_rate: f64,
}

impl From<&Hyperparameters> for FactorPrior {
    fn from(h: &Hyperparameters) -> Self {
        Self {
            residual_shape: h.a_sigma,
            residual_rate: h.b_sigma,
            local_dof: h.nu_phi,
            first_shape: h.a_1,
            first_rate: h.b_1,
            later_shape: h.a_l,
            later_rate: h.b_l,
        }
    }
}

impl FactorPrior {
    fn increment_params(&self, column: usize) -> (f64, f64) {
        if column == 0 {
            (self.first_shape, self.first_rate)
        } else {
            (self.later_shape, self.later_rate)
        }
    }
}

/// Per-athlete design: basis matrix at the observation times and its Gram matrix.
#[derive(Clone, Debug)]
pub struct AthleteDesign {
    pub basis: DMatrix<f64>,
    pub gram: DMatrix<f64>,
}

impl AthleteDesign {
    pub fn new(basis: DMatrix<f64>) -> Self {
        let gram = basis.transpose() * &basis;
        Self { basis, gram }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorState {
    /// Λ, p × k.
    pub loadings: DMatrix<f64>,
    /// η_i, one length-k vector per athlete.
    pub factors: Vec<DVector<f64>>,
    /// θ_i, one length-p vector per athlete.
    pub coefficients: Vec<DVector<f64>>,
    /// σ_j^{-2}, length p.
    pub residual_precision: DVector<f64>,
    /// φ, p × k.
    pub local_shrinkage: DMatrix<f64>,
    /// δ, length k.
    pub increments: Vec<f64>,
    /// τ, running product of `increments`.
    pub column_precision: Vec<f64>,
}

fn cumulative_product(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(1.0, |acc, v| {
            *acc *= v;
            Some(*acc)
        })
        .collect()
}

impl FactorState {
    /// Shrinkage, loadings, factors and residual precisions from the prior;
    /// coefficients from `θ_i = Λη_i + ξ_i`.
    pub fn from_prior<R: Rng + ?Sized>(p: usize, k: usize, n: usize, prior: &FactorPrior, rng: &mut R) -> Self {
        let increments: Vec<f64> = (0..k)
            .map(|l| {
                let (a, b) = prior.increment_params(l);
                numerics::gamma(rng, a, b)
            })
            .collect();
        let column_precision = cumulative_product(&increments);
        let half = prior.local_dof / 2.0;
        let local_shrinkage = DMatrix::from_fn(p, k, |_, _| numerics::gamma(rng, half, half));
        let loadings = DMatrix::from_fn(p, k, |j, l| {
            numerics::std_normal(rng) / (local_shrinkage[(j, l)] * column_precision[l]).sqrt()
        });
        let residual_precision =
            DVector::from_fn(p, |_, _| numerics::gamma(rng, prior.residual_shape, prior.residual_rate));
        let factors: Vec<DVector<f64>> = (0..n)
            .map(|_| DVector::from_fn(k, |_, _| numerics::std_normal(rng)))
            .collect();
        let coefficients = factors
            .iter()
            .map(|eta| {
                let mean = &loadings * eta;
                DVector::from_fn(p, |j, _| {
                    mean[j] + numerics::std_normal(rng) / residual_precision[j].sqrt()
                })
            })
            .collect();
        Self {
            loadings,
            factors,
            coefficients,
            residual_precision,
            local_shrinkage,
            increments,
            column_precision,
        }
    }

    pub fn p(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn k(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn n(&self) -> usize {
        self.factors.len()
    }

    /// Checks positivity, dimensions and `τ = cumprod(δ)`.
    pub fn is_consistent(&self) -> bool {
        let (p, k) = (self.p(), self.k());
        self.local_shrinkage.shape() == (p, k)
            && self.increments.len() == k
            && self.column_precision.len() == k
            && self.residual_precision.len() == p
            && self.factors.iter().all(|e| e.len() == k)
            && self.coefficients.iter().all(|t| t.len() == p)
            && self.residual_precision.iter().all(|v| *v > 0.0)
            && self.local_shrinkage.iter().all(|v| *v > 0.0)
            && self.increments.iter().all(|v| *v > 0.0)
            && self.column_precision == cumulative_product(&self.increments)
    }

    /// `n × k` matrix whose rows are the η_i.
    fn factor_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), self.k(), |i, l| self.factors[i][l])
    }

    /// Row `j` of Λ given θ, η, φ, τ and σ_j^{-2}.
    pub fn update_loadings<R: Rng + ?Sized>(&mut self, rng: &mut R, scale: DrawScale) -> Result<()> {
        let eta = self.factor_matrix();
        let gram = eta.transpose() * &eta;
        for j in 0..self.p() {
            let precision_j = self.residual_precision[j];
            let mut precision = &gram * precision_j;
            for l in 0..self.k() {
                precision[(l, l)] += self.local_shrinkage[(j, l)] * self.column_precision[l];
            }
            let target = DVector::from_fn(self.n(), |i, _| self.coefficients[i][j]);
            let linear = eta.transpose() * target * precision_j;
            let row = numerics::mvn_from_precision(precision, &linear, rng, scale, "loadings")?;
            self.loadings.set_row(j, &row.transpose());
        }
        Ok(())
    }

    pub fn update_local_shrinkage<R: Rng + ?Sized>(&mut self, prior: &FactorPrior, rng: &mut R, scale: DrawScale) {
        let shape = (prior.local_dof + 1.0) / 2.0;
        for l in 0..self.k() {
            for j in 0..self.p() {
                let lambda = self.loadings[(j, l)];
                let rate = (prior.local_dof + self.column_precision[l] * lambda * lambda) / 2.0;
                self.local_shrinkage[(j, l)] = numerics::gamma_scaled(rng, shape, rate, scale);
            }
        }
    }

    /// Sequential δ_1, …, δ_k draws; τ is rebuilt after each one.
    pub fn update_increments<R: Rng + ?Sized>(&mut self, prior: &FactorPrior, rng: &mut R, scale: DrawScale) {
        let (p, k) = (self.p() as f64, self.k());
        // Σ_j φ_jl λ_jl² per column
        let weighted: Vec<f64> = (0..k)
            .map(|l| {
                (0..self.p())
                    .map(|j| self.local_shrinkage[(j, l)] * self.loadings[(j, l)].powi(2))
                    .sum()
            })
            .collect();
        for h in 0..k {
            let (a, b) = prior.increment_params(h);
            let shape = a + p * (k - h) as f64 / 2.0;
            let mut partial = 1.0;
            let mut rate = b;
            for l in 0..k {
                if l != h {
                    partial *= self.increments[l];
                }
                if l >= h {
                    rate += 0.5 * partial * weighted[l];
                }
            }
            self.increments[h] = numerics::gamma_scaled(rng, shape, rate, scale);
            self.column_precision = cumulative_product(&self.increments);
        }
    }

    pub fn update_residual_precision<R: Rng + ?Sized>(&mut self, prior: &FactorPrior, rng: &mut R, scale: DrawScale) {
        let shape = prior.residual_shape + self.n() as f64 / 2.0;
        let mut ss = vec![0.0; self.p()];
        for (theta, eta) in self.coefficients.iter().zip(&self.factors) {
            let resid = theta - &self.loadings * eta;
            for (acc, r) in ss.iter_mut().zip(resid.iter()) {
                *acc += r * r;
            }
        }
        for (j, s) in ss.into_iter().enumerate() {
            self.residual_precision[j] = numerics::gamma_scaled(rng, shape, prior.residual_rate + s / 2.0, scale);
        }
    }

    /// `C = Σ^{-1} + ψ^{-2} BᵀB`, the precision of θ_i given η_i.
    fn coefficient_precision(&self, design: &AthleteDesign, error_precision: f64) -> DMatrix<f64> {
        let mut c = &design.gram * error_precision;
        for j in 0..self.p() {
            c[(j, j)] += self.residual_precision[j];
        }
        c
    }

    /// η_i with θ_i integrated out: the data enter through
    /// `y_i ~ N(B_i Λ η_i, ψ² I + B_i Σ B_iᵀ)`, handled with the Woodbury identity.
    pub fn draw_factor<R: Rng + ?Sized>(
        &self,
        design: &AthleteDesign,
        response: &DVector<f64>,
        error_precision: f64,
        rng: &mut R,
        scale: DrawScale,
    ) -> Result<DVector<f64>> {
        let k = self.k();
        let c = numerics::cholesky(self.coefficient_precision(design, error_precision), "factor marginal")?;
        let bty = design.basis.transpose() * response;
        let m = &design.gram;
        let w2 = error_precision * error_precision;
        let quad = m * error_precision - (m * c.solve(m)) * w2;
        let lin = &bty * error_precision - (m * c.solve(&bty)) * w2;
        let mut precision = self.loadings.transpose() * quad * &self.loadings;
        for l in 0..k {
            precision[(l, l)] += 1.0;
        }
        let precision = (&precision + precision.transpose()) * 0.5;
        let linear = self.loadings.transpose() * lin;
        numerics::mvn_from_precision(precision, &linear, rng, scale, "factors")
    }

    pub fn draw_coefficients<R: Rng + ?Sized>(
        &self,
        i: usize,
        design: &AthleteDesign,
        response: &DVector<f64>,
        error_precision: f64,
        rng: &mut R,
        scale: DrawScale,
    ) -> Result<DVector<f64>> {
        let precision = self.coefficient_precision(design, error_precision);
        let prior_mean = &self.loadings * &self.factors[i];
        let linear = design.basis.transpose() * response * error_precision
            + prior_mean.component_mul(&self.residual_precision);
        numerics::mvn_from_precision(precision, &linear, rng, scale, "coefficients")
    }

    /// All η_i in parallel; `rng_for(i)` supplies athlete i's stream.
    pub fn update_factors<F>(
        &mut self,
        designs: &[AthleteDesign],
        responses: &[DVector<f64>],
        error_precision: f64,
        rng_for: F,
        scale: DrawScale,
    ) -> Result<()>
    where
        F: Fn(usize) -> ChainRng + Sync,
    {
        let draws: Result<Vec<DVector<f64>>> = (0..self.n())
            .into_par_iter()
            .map(|i| self.draw_factor(&designs[i], &responses[i], error_precision, &mut rng_for(i), scale))
            .collect();
        self.factors = draws?;
        Ok(())
    }

    pub fn update_coefficients<F>(
        &mut self,
        designs: &[AthleteDesign],
        responses: &[DVector<f64>],
        error_precision: f64,
        rng_for: F,
        scale: DrawScale,
    ) -> Result<()>
    where
        F: Fn(usize) -> ChainRng + Sync,
    {
        let draws: Result<Vec<DVector<f64>>> = (0..self.n())
            .into_par_iter()
            .map(|i| self.draw_coefficients(i, &designs[i], &responses[i], error_precision, &mut rng_for(i), scale))
            .collect();
        self.coefficients = draws?;
        Ok(())
    }

    /// Columns whose loadings all lie within `epsilon` of zero.
    pub fn redundant_columns(&self, epsilon: f64) -> Vec<usize> {
        (0..self.k())
            .filter(|&l| self.loadings.column(l).iter().all(|v| v.abs() < epsilon))
            .collect()
    }

    fn keep_columns(&mut self, keep: &[usize]) {
        self.loadings = self.loadings.select_columns(keep);
        self.local_shrinkage = self.local_shrinkage.select_columns(keep);
        self.increments = keep.iter().map(|&l| self.increments[l]).collect();
        self.column_precision = cumulative_product(&self.increments);
        for eta in &mut self.factors {
            *eta = DVector::from_iterator(keep.len(), keep.iter().map(|&l| eta[l]));
        }
    }

    fn push_column<R: Rng + ?Sized>(&mut self, prior: &FactorPrior, rng: &mut R) {
        let (p, k) = (self.p(), self.k());
        let (a, b) = prior.increment_params(k);
        let delta = numerics::gamma(rng, a, b);
        self.increments.push(delta);
        self.column_precision = cumulative_product(&self.increments);
        let tau = self.column_precision[k];
        let half = prior.local_dof / 2.0;
        let phi = DVector::from_fn(p, |_, _| numerics::gamma(rng, half, half));
        let lambda = DVector::from_fn(p, |j, _| numerics::std_normal(rng) / (phi[j] * tau).sqrt());
        self.loadings = self.loadings.clone().insert_column(k, 0.0);
        self.loadings.set_column(k, &lambda);
        self.local_shrinkage = self.local_shrinkage.clone().insert_column(k, 0.0);
        self.local_shrinkage.set_column(k, &phi);
        for eta in &mut self.factors {
            *eta = eta.clone().push(numerics::std_normal(rng));
        }
    }

    /// With probability `exp(-(c0 + c1 g))` drops redundant columns (keeping at
    /// least one) or, when none is redundant, appends one drawn from the prior.
    /// Returns whether `k` changed.
    pub fn adapt_truncation<R: Rng + ?Sized>(
        &mut self,
        iteration: usize,
        uniform: f64,
        settings: &TruncationSettings,
        k_max: usize,
        prior: &FactorPrior,
        rng: &mut R,
    ) -> bool {
        let prob = (-(settings.c0 + settings.c1 * iteration as f64)).exp();
        if !settings.enabled || uniform >= prob {
            return false;
        }
        let redundant = self.redundant_columns(settings.epsilon);
        if !redundant.is_empty() {
            let mut keep: Vec<usize> = (0..self.k()).filter(|l| !redundant.contains(l)).collect();
            if keep.is_empty() {
                keep.push(0);
            }
            if keep.len() == self.k() {
                return false;
            }
            self.keep_columns(&keep);
            true
        } else if self.k() < k_max {
            self.push_column(prior, rng);
            true
        } else {
            false
        }
    }

    /// Φ_l(t) = Σ_m λ_ml b_m(t) for every column, given a basis row `b(t)`.
    pub fn induced_basis(&self, basis_row: &[f64]) -> Vec<f64> {
        (0..self.k())
            .map(|l| basis_row.iter().enumerate().map(|(m, b)| self.loadings[(m, l)] * b).sum())
            .collect()
    }

    /// f_i(t) = θ_iᵀ b(t).
    pub fn curve_value(&self, i: usize, basis_row: &[f64]) -> f64 {
        basis_row.iter().zip(self.coefficients[i].iter()).map(|(b, t)| b * t).sum()
    }
}
