//! Synthetic data from the generative model, plus the oracles used to check
//! the sampler against it.

pub mod geweke;
pub mod quadrature;
pub mod recovery;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::make_knots;
use crate::config::{Hyperparameters, SeasonalKind};
use crate::dataset::{prepare, AgeMode, CovariateSpec, Environment, PreparedDataset, RawRecord, Sex};
use crate::error::{Error, Result};
use crate::factor::{FactorPrior, FactorState};
use crate::numerics::{self, chain_rng};
use crate::regression::{RegressionPrior, RegressionState};
use crate::seasonal::{simulate_shocks, ArPrior, GarchParams, GarchPrior};

/// Values that override the prior draw of the matching parameter.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedParameters {
    /// Loadings drawn iid N(0, scale²) instead of from the shrinkage prior.
    pub loading_scale: Option<f64>,
    /// Common residual variance σ_j² of the coefficients around Λη.
    pub residual_variance: Option<f64>,
    pub grand_mean: Option<f64>,
    /// (α0, α1, ϖ)
    pub garch: Option<[f64; 3]>,
    pub ar_coefficient: Option<f64>,
    pub innovation_variance: Option<f64>,
    pub beta: Option<Vec<f64>>,
    pub error_variance: Option<f64>,
}

fn default_base() -> f64 {
    16.0
}

fn default_start_year() -> i32 {
    2000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_athletes: usize,
    pub df: usize,
    pub k_true: usize,
    pub seasons: usize,
    pub obs_per_season: usize,
    pub seasonal: SeasonalKind,
    pub covariates: Vec<String>,
    #[serde(default = "default_age_mode")]
    pub age_mode: AgeMode,
    #[serde(default)]
    pub hyper: Hyperparameters,
    #[serde(default)]
    pub fixed: FixedParameters,
    pub seed: u64,
    /// Level added to every emitted result, in meters.
    #[serde(default = "default_base")]
    pub base_result: f64,
    #[serde(default = "default_start_year")]
    pub start_year: i32,
}

fn default_age_mode() -> AgeMode {
    AgeMode::TimeDependent
}

impl SynthConfig {
    /// Sizes of the recovery experiment with the study's covariates.
    pub fn recovery(seed: u64) -> Self {
        Self {
            n_athletes: 30,
            df: 20,
            k_true: 2,
            seasons: 8,
            obs_per_season: 10,
            seasonal: SeasonalKind::Garch,
            covariates: vec!["sex".into(), "age".into(), "environment".into()],
            age_mode: AgeMode::TimeDependent,
            hyper: Hyperparameters::default(),
            fixed: FixedParameters {
                loading_scale: Some(1.0),
                residual_variance: Some(0.01),
                grand_mean: None,
                garch: Some([0.05, 0.3, 0.4]),
                ar_coefficient: None,
                innovation_variance: None,
                beta: Some(vec![-0.4, 0.05, 0.2]),
                error_variance: Some(0.04),
            },
            seed,
            base_result: default_base(),
            start_year: default_start_year(),
        }
    }

    pub fn covariate_spec(&self) -> Result<CovariateSpec> {
        CovariateSpec::from_names(&self.covariates, self.age_mode)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_athletes == 0 {
            problems.push("n_athletes must be positive");
        }
        if self.df < 4 {
            problems.push("df must be at least 4");
        }
        if self.k_true == 0 {
            problems.push("k_true must be positive");
        }
        if self.seasons == 0 || self.obs_per_season == 0 {
            problems.push("seasons and obs_per_season must be positive");
        }
        if self.obs_per_season > 365 {
            problems.push("at most 365 observations per season");
        }
        if let Some(b) = &self.fixed.beta {
            if b.len() != self.covariates.len() {
                problems.push("fixed beta must have one value per covariate");
            }
        }
        if let Some([a0, a1, w]) = self.fixed.garch {
            if !(a0 > 0.0 && a1 >= 0.0 && w >= 0.0) {
                problems.push("garch parameters must satisfy α0 > 0, α1 ≥ 0, ϖ ≥ 0");
            }
        }
        if self.fixed.error_variance.is_some_and(|v| v < 0.0) {
            problems.push("error variance must be non-negative");
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        self.hyper.validate()?;
        self.covariate_spec().map(|_| ())
    }
}

/// Every generative quantity behind a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub config: SynthConfig,
    /// p rows of k loadings.
    pub loadings: Vec<Vec<f64>>,
    pub factors: Vec<Vec<f64>>,
    pub coefficients: Vec<Vec<f64>>,
    pub residual_variance: Vec<f64>,
    pub levels: Vec<Vec<f64>>,
    pub grand_mean: Option<f64>,
    pub garch: Option<[f64; 3]>,
    pub ar_coefficients: Option<Vec<f64>>,
    pub innovation_variance: Option<f64>,
    pub beta: Vec<f64>,
    pub error_variance: f64,
    /// Responses on the model scale, before `base_result` is added.
    pub responses: Vec<Vec<f64>>,
    #[serde(skip)]
    pub records: Vec<RawRecord>,
}

fn schedule<R: Rng + ?Sized>(config: &SynthConfig, rng: &mut R) -> Vec<RawRecord> {
    let mut records = Vec::with_capacity(config.n_athletes * config.seasons * config.obs_per_season);
    for i in 0..config.n_athletes {
        let sex = if rng.random::<bool>() { Sex::Female } else { Sex::Male };
        let birth_year = config.start_year - 25 + rng.random_range(0..8);
        let birth_date = NaiveDate::from_yo_opt(birth_year, rng.random_range(1..=365)).expect("valid ordinal");
        let doped = rng.random::<f64>() < 0.2;
        for s in 0..config.seasons {
            let year = config.start_year + s as i32;
            let mut days = rand::seq::index::sample(rng, 365, config.obs_per_season).into_vec();
            days.sort_unstable();
            for d in days {
                let event_date = NaiveDate::from_yo_opt(year, d as u32 + 1).expect("valid ordinal");
                records.push(RawRecord {
                    athlete_id: format!("S{i:03}"),
                    event_date,
                    result: 0.0,
                    sex,
                    birth_date,
                    environment: Environment::by_month(chrono::Datelike::month(&event_date)),
                    doped,
                });
            }
        }
    }
    records
}

/// Draws a truth and a dataset from the generative model.
///
/// Returns the truth together with the prepared dataset whose responses are
/// exactly the simulated model-scale values (no re-centring), which is what
/// recovery experiments fit.
pub fn generate(config: &SynthConfig) -> Result<(SynthTruth, PreparedDataset)> {
    config.validate()?;
    let mut rng = chain_rng(config.seed);
    let mut records = schedule(config, &mut rng);
    let spec = config.covariate_spec()?;
    let mut data = prepare(&records, &spec)?;
    let n = data.n_athletes();
    let (p, k) = (config.df, config.k_true);
    let hyper = &config.hyper;
    let fixed = &config.fixed;

    let factor_prior = FactorPrior::from(hyper);
    let mut factor = FactorState::from_prior(p, k, n, &factor_prior, &mut rng);
    if let Some(scale) = fixed.loading_scale {
        factor.loadings = DMatrix::from_fn(p, k, |_, _| scale * numerics::std_normal(&mut rng));
    }
    let residual_variance: Vec<f64> = match fixed.residual_variance {
        Some(v) => vec![v; p],
        None => factor.residual_precision.iter().map(|s| 1.0 / s).collect(),
    };
    for i in 0..n {
        let mean = &factor.loadings * &factor.factors[i];
        factor.coefficients[i] =
            DVector::from_fn(p, |j, _| mean[j] + residual_variance[j].sqrt() * numerics::std_normal(&mut rng));
    }

    let season_counts: Vec<usize> = data.athletes.iter().map(|a| a.n_seasons()).collect();
    let (levels, grand_mean, garch, ar_coefficients, innovation_variance) = match config.seasonal {
        SeasonalKind::Garch => {
            let prior = GarchPrior::try_from(hyper)?;
            let m = fixed
                .grand_mean
                .unwrap_or_else(|| prior.mean_centre + prior.mean_var.sqrt() * numerics::std_normal(&mut rng));
            let params = match fixed.garch {
                Some([a0, a1, w]) => GarchParams::new(a0, a1, w),
                None => prior.draw_params(&mut rng),
            };
            let levels: Vec<Vec<f64>> = season_counts
                .iter()
                .map(|&s| simulate_shocks(&params, s, &mut rng).into_iter().map(|z| m + z).collect())
                .collect();
            (levels, Some(m), Some([params.intercept, params.arch, params.persistence]), None, None)
        }
        SeasonalKind::Ar => {
            let prior = ArPrior::from(hyper);
            let var = fixed
                .innovation_variance
                .unwrap_or_else(|| 1.0 / numerics::gamma(&mut rng, prior.innovation_shape, prior.innovation_scale));
            let mut rhos = Vec::with_capacity(n);
            let levels: Vec<Vec<f64>> = season_counts
                .iter()
                .map(|&s| {
                    let rho = fixed.ar_coefficient.unwrap_or_else(|| {
                        prior.coefficient_mean + prior.coefficient_var.sqrt() * numerics::std_normal(&mut rng)
                    });
                    rhos.push(rho);
                    let mut prev = 0.0;
                    (0..s)
                        .map(|_| {
                            prev = rho * prev + var.sqrt() * numerics::std_normal(&mut rng);
                            prev
                        })
                        .collect()
                })
                .collect();
            (levels, None, None, Some(rhos), Some(var))
        }
    };

    let r = spec.len();
    let beta: Vec<f64> = match &fixed.beta {
        Some(b) => b.clone(),
        None => {
            let prior = RegressionPrior::new(hyper, r, crate::config::SigmaBetaForm::Conjugate);
            RegressionState::from_prior(&prior, &mut rng).coefficients.iter().cloned().collect()
        }
    };
    let error_variance = fixed
        .error_variance
        .unwrap_or_else(|| 1.0 / numerics::gamma(&mut rng, hyper.psi_shape(), hyper.psi_rate()));

    let basis = make_knots(p, 3, 0.0, 1.0)?;
    let mut responses = Vec::with_capacity(n);
    for (i, a) in data.athletes.iter().enumerate() {
        let b = basis.design_matrix(&a.times)?;
        let f = b * &factor.coefficients[i];
        let y: Vec<f64> = (0..a.n_obs())
            .map(|j| {
                let reg: f64 = a.covariates[j].iter().zip(&beta).map(|(x, b)| x * b).sum();
                f[j] + levels[i][a.seasons[j]] + reg + error_variance.sqrt() * numerics::std_normal(&mut rng)
            })
            .collect();
        responses.push(y);
    }

    // records are grouped by athlete in order, matching the prepared layout
    let flat = responses.iter().flatten();
    for (rec, y) in records.iter_mut().zip(flat) {
        rec.result = config.base_result + y;
    }
    data = data.with_responses(responses.clone());
    for a in &mut data.athletes {
        a.mean = config.base_result;
    }

    let truth = SynthTruth {
        config: config.clone(),
        loadings: (0..p).map(|j| factor.loadings.row(j).iter().cloned().collect()).collect(),
        factors: factor.factors.iter().map(|e| e.iter().cloned().collect()).collect(),
        coefficients: factor.coefficients.iter().map(|t| t.iter().cloned().collect()).collect(),
        residual_variance,
        levels,
        grand_mean,
        garch,
        ar_coefficients,
        innovation_variance,
        beta,
        error_variance,
        responses,
        records,
    };
    Ok((truth, data))
}

impl SynthTruth {
    /// Noise-free curve `f_i + μ_i + x_iβ` at athlete `i`'s observation times.
    pub fn signal(&self, data: &PreparedDataset, i: usize) -> Result<Vec<f64>> {
        let basis = make_knots(self.config.df, 3, 0.0, 1.0)?;
        let a = &data.athletes[i];
        (0..a.n_obs())
            .map(|j| {
                let f = basis.eval_function(&self.coefficients[i], a.times[j])?;
                let reg: f64 = a.covariates[j].iter().zip(&self.beta).map(|(x, b)| x * b).sum();
                Ok(f + self.levels[i][a.seasons[j]] + reg)
            })
            .collect()
    }
}
