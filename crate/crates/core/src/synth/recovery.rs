//! Generate, fit and check that credible intervals cover the generating values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, SeasonalKind};
use crate::error::{Error, Result};
use crate::numerics::{quantile_sorted, sorted};
use crate::sampler::run_chain;
use crate::seasonal::stationarity_probability;
use crate::synth::{generate, SynthConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub replicates: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            replicates: 20,
            iterations: 4000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub name: String,
    pub truth: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    fn new(name: &str, truth: f64, values: &[f64]) -> Self {
        let s = sorted(values);
        Self {
            name: name.to_string(),
            truth,
            lower: quantile_sorted(&s, 0.025),
            upper: quantile_sorted(&s, 0.975),
        }
    }

    pub fn covers(&self) -> bool {
        self.lower <= self.truth && self.truth <= self.upper
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub seed: u64,
    /// m, ψ² and each β.
    pub headline: Vec<Interval>,
    /// α0, α1, ϖ
    pub garch: Vec<Interval>,
    pub stationarity: f64,
    pub modal_k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub replicates: Vec<Replicate>,
}

impl RecoveryReport {
    /// Replicates whose interval for the named parameter covers the truth.
    pub fn covered(&self, name: &str) -> usize {
        self.replicates
            .iter()
            .filter(|r| r.headline.iter().chain(&r.garch).any(|iv| iv.name == name && iv.covers()))
            .count()
    }

    pub fn headline_names(&self) -> Vec<String> {
        self.replicates
            .first()
            .map(|r| r.headline.iter().map(|iv| iv.name.clone()).collect())
            .unwrap_or_default()
    }

    pub fn garch_names(&self) -> Vec<String> {
        self.replicates
            .first()
            .map(|r| r.garch.iter().map(|iv| iv.name.clone()).collect())
            .unwrap_or_default()
    }

    pub fn modal_k(&self) -> Vec<Option<usize>> {
        self.replicates.iter().map(|r| r.modal_k).collect()
    }
}

/// One desk-scale replicate: data from [`SynthConfig::recovery`], fitted with
/// the default priors and truncation settings.
pub fn replicate(seed: u64, iterations: usize) -> Result<Replicate> {
    let synth = SynthConfig::recovery(seed);
    let (truth, data) = generate(&synth)?;
    let mut config = ModelConfig::custom(synth.df, synth.seasonal, synth.covariate_spec()?);
    config.hyper = synth.hyper.clone();
    config.run.iterations = iterations;
    config.run.seed = seed.wrapping_add(0x5eed);
    let draws = run_chain(&data, &config)?;
    let n = draws.len();

    let mut headline = Vec::new();
    if config.seasonal == SeasonalKind::Garch {
        let m: Vec<f64> = (0..n).filter_map(|d| draws.grand_mean(d)).collect();
        headline.push(Interval::new("m", truth.grand_mean.ok_or(Error::EmptyDraws)?, &m));
    }
    headline.push(Interval::new("psi2", truth.error_variance, &draws.error_variance));
    for (c, name) in draws.layout.covariates.iter().enumerate() {
        let b: Vec<f64> = (0..n).map(|d| draws.beta(d)[c]).collect();
        headline.push(Interval::new(&format!("beta_{name}"), truth.beta[c], &b));
    }

    let params: Vec<_> = (0..n).filter_map(|d| draws.garch_params(d)).collect();
    let mut garch = Vec::new();
    let mut stationarity = f64::NAN;
    if let Some([a0, a1, w]) = truth.garch {
        let pick = |f: fn(&crate::seasonal::GarchParams) -> f64| params.iter().map(f).collect::<Vec<f64>>();
        garch.push(Interval::new("alpha0", a0, &pick(|p| p.intercept)));
        garch.push(Interval::new("alpha1", a1, &pick(|p| p.arch)));
        garch.push(Interval::new("varpi", w, &pick(|p| p.persistence)));
        stationarity = stationarity_probability(&pick(|p| p.arch), &pick(|p| p.persistence))?;
    }
    Ok(Replicate {
        seed,
        headline,
        garch,
        stationarity,
        modal_k: draws.diagnostics.modal_k(),
    })
}

/// Replicates run in parallel, each on its own seed.
pub fn run_recovery(config: &RecoveryConfig) -> Result<RecoveryReport> {
    if config.replicates == 0 || config.iterations == 0 {
        return Err(Error::Config("recovery needs at least one replicate and one iteration".into()));
    }
    let replicates = (0..config.replicates as u64)
        .into_par_iter()
        .map(|r| replicate(config.seed + r, config.iterations))
        .collect::<Result<Vec<_>>>()?;
    Ok(RecoveryReport { replicates })
}
