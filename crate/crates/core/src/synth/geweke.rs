//! Joint-distribution tests of the sampler's updates.
//!
//! For a set of blocks `S`, the nodes that are not descendants of `S` are held
//! at one prior draw. The marginal-conditional simulator draws `S`, its
//! descendants and the data forward from the prior, independently each time.
//! The successive-conditional simulator alternates the sampler's update of
//! `S` given the data with a forward redraw of the descendants and the data.
//! Both target the same joint law, so the moments of every parameter in `S`
//! must agree; a mis-scaled update shows up as a large z-score.

use serde::Serialize;

use crate::config::{AswamSettings, Hyperparameters, ModelConfig, RunSettings, SeasonalKind, SigmaBetaForm, TruncationSettings};
use crate::dataset::{AgeMode, CovariateSpec, PreparedDataset};
use crate::error::{Error, Result};
use crate::numerics::{self, chain_rng};
use crate::posterior::{compute_ess, Ess};
use crate::sampler::{Block, BlockSet, ChainState, Fault, Model};
use crate::seasonal::SeasonalState;

use super::{generate, FixedParameters, SynthConfig};

/// Parents of each node in the generative model.
fn parents(block: Block, kind: SeasonalKind) -> &'static [Block] {
    match block {
        Block::Loadings => &[Block::LocalShrinkage, Block::Increments],
        Block::Coefficients => &[Block::Loadings, Block::Factors, Block::ResidualPrecision],
        Block::Levels => match kind {
            SeasonalKind::Garch => &[Block::GrandMean, Block::Alpha, Block::Persistence],
            SeasonalKind::Ar => &[Block::ArCoefficients, Block::InnovationVariance],
        },
        Block::Beta => &[Block::BetaPrecision],
        _ => &[],
    }
}

/// Nodes downstream of `blocks`, excluding the blocks themselves.
pub fn descendants(blocks: BlockSet, kind: SeasonalKind) -> BlockSet {
    let mut closed = blocks;
    loop {
        let mut grown = closed;
        for b in Block::ALL {
            if parents(b, kind).iter().any(|p| closed.contains(*p)) {
                grown = grown.with(b);
            }
        }
        if grown == closed {
            break;
        }
        closed = grown;
    }
    Block::ALL
        .into_iter()
        .filter(|b| closed.contains(*b) && !blocks.contains(*b))
        .fold(BlockSet::empty(), |s, b| s.with(b))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GewekeConfig {
    pub blocks: Vec<Block>,
    pub seasonal: SeasonalKind,
    pub marginal_draws: usize,
    pub sweeps: usize,
    pub threshold: f64,
    pub fault: Option<Fault>,
    pub seed: u64,
    pub n_athletes: usize,
    pub df: usize,
    pub k: usize,
    pub seasons: usize,
    pub obs_per_season: usize,
    pub hyper: Hyperparameters,
    pub sigma_beta_form: SigmaBetaForm,
}

/// Priors with light tails, so that moments are well estimated, and a residual
/// scale wide enough that the loadings chain mixes within a desk-sized run.
pub fn desk_hyperparameters() -> Hyperparameters {
    Hyperparameters {
        a_sigma: 3.0,
        b_sigma: 8.0,
        nu_phi: 9.0,
        a_1: 4.0,
        b_1: 2.0,
        a_l: 4.0,
        b_l: 2.0,
        m_mean: -0.2,
        m_var: 0.25,
        alpha_mean: [0.3, 0.2],
        alpha_cov: [[0.02, 0.0], [0.0, 0.02]],
        varpi_mean: 0.3,
        varpi_var: 0.02,
        nu_beta: 4.0,
        sigma_beta: 0.7,
        beta_0: None,
        mu_psi: 1.0,
        sigma_psi: 0.5,
        rho_mean: 0.3,
        rho_var: 0.1,
        sigma_mu_shape: 4.0,
        sigma_mu_scale: 1.0,
    }
}

impl GewekeConfig {
    /// Desk-scale test of `blocks`: p = 6, k = 2, n = 4 athletes, 10k sweeps.
    pub fn desk(blocks: &[Block], seasonal: SeasonalKind, seed: u64) -> Self {
        Self {
            blocks: blocks.to_vec(),
            seasonal,
            marginal_draws: 10_000,
            sweeps: 10_000,
            threshold: 4.0,
            fault: None,
            seed,
            n_athletes: 4,
            df: 6,
            k: 2,
            seasons: 2,
            obs_per_season: 2,
            hyper: desk_hyperparameters(),
            sigma_beta_form: SigmaBetaForm::Conjugate,
        }
    }

    /// Every block the sampler runs for this seasonal variant.
    pub fn full_sampler_blocks(seasonal: SeasonalKind) -> Vec<Block> {
        Block::ALL
            .into_iter()
            .filter(|b| *b != Block::Truncation)
            .filter(|b| match seasonal {
                SeasonalKind::Garch => !matches!(b, Block::ArCoefficients | Block::InnovationVariance),
                SeasonalKind::Ar => !matches!(b, Block::GrandMean | Block::Alpha | Block::Persistence),
            })
            .collect()
    }

    fn model(&self) -> Result<Model> {
        let synth = SynthConfig {
            n_athletes: self.n_athletes,
            df: self.df,
            k_true: self.k,
            seasons: self.seasons,
            obs_per_season: self.obs_per_season,
            seasonal: self.seasonal,
            covariates: vec!["sex".into(), "age".into()],
            age_mode: AgeMode::TimeDependent,
            hyper: self.hyper.clone(),
            fixed: FixedParameters::default(),
            seed: self.seed,
            base_result: 0.0,
            start_year: 2000,
        };
        let (_, mut data) = generate(&synth)?;
        standardize_age(&mut data);
        let mut config = ModelConfig::custom(
            self.df,
            self.seasonal,
            CovariateSpec::from_names(&["sex", "age"], AgeMode::TimeDependent)?,
        );
        config.hyper = self.hyper.clone();
        config.truncation = TruncationSettings {
            enabled: false,
            initial_k: self.k,
            ..TruncationSettings::default()
        };
        config.aswam = AswamSettings {
            initial_variance: 0.25,
            ..AswamSettings::default()
        };
        config.run = RunSettings {
            iterations: self.sweeps.max(1),
            burn_in: 0.0,
            thin: 1,
            seed: self.seed,
        };
        config.sigma_beta_form = self.sigma_beta_form;
        config.exact_garch_conditionals = true;
        Model::new(&data, &config)
    }
}

/// Ages in decades around 25 keep the regression term on the scale of the others.
fn standardize_age(data: &mut PreparedDataset) {
    if let Some(c) = data.covariates.columns.iter().position(|c| *c == crate::dataset::Covariate::Age) {
        for a in &mut data.athletes {
            for row in &mut a.covariates {
                row[c] = (row[c] - 25.0) / 10.0;
            }
        }
    }
}

/// Named scalars of the given blocks.
pub fn block_values(state: &ChainState, blocks: BlockSet) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let f = &state.factor;
    for b in blocks.iter() {
        match b {
            Block::Loadings => {
                for j in 0..f.p() {
                    for l in 0..f.k() {
                        out.push((format!("lambda_{j}_{l}"), f.loadings[(j, l)]));
                    }
                }
            }
            Block::LocalShrinkage => {
                for j in 0..f.p() {
                    for l in 0..f.k() {
                        out.push((format!("phi_{j}_{l}"), f.local_shrinkage[(j, l)]));
                    }
                }
            }
            Block::Increments => {
                for (l, d) in f.increments.iter().enumerate() {
                    out.push((format!("delta_{l}"), *d));
                }
            }
            Block::ResidualPrecision => {
                for (j, s) in f.residual_precision.iter().enumerate() {
                    out.push((format!("sigma_inv2_{j}"), *s));
                }
            }
            Block::Factors => {
                for (i, e) in f.factors.iter().enumerate() {
                    for (l, v) in e.iter().enumerate() {
                        out.push((format!("eta_{i}_{l}"), *v));
                    }
                }
            }
            Block::Coefficients => {
                for (i, t) in f.coefficients.iter().enumerate() {
                    for (j, v) in t.iter().enumerate() {
                        out.push((format!("theta_{i}_{j}"), *v));
                    }
                }
            }
            Block::Truncation => {}
            Block::Levels => {
                for (i, lv) in state.seasonal.levels().iter().enumerate() {
                    for (s, v) in lv.iter().enumerate() {
                        out.push((format!("mu_{i}_{s}"), *v));
                    }
                }
            }
            Block::GrandMean | Block::Alpha | Block::Persistence => {
                if let SeasonalState::Garch(g) = &state.seasonal {
                    match b {
                        Block::GrandMean => out.push(("m".into(), g.grand_mean)),
                        Block::Alpha => {
                            out.push(("alpha0".into(), g.params.intercept));
                            out.push(("alpha1".into(), g.params.arch));
                        }
                        _ => out.push(("varpi".into(), g.params.persistence)),
                    }
                }
            }
            Block::ArCoefficients | Block::InnovationVariance => {
                if let SeasonalState::Ar(a) = &state.seasonal {
                    if b == Block::ArCoefficients {
                        for (i, r) in a.coefficients.iter().enumerate() {
                            out.push((format!("rho_{i}"), *r));
                        }
                    } else {
                        out.push(("sigma_mu2".into(), a.innovation_variance));
                    }
                }
            }
            Block::Beta => {
                for (c, v) in state.regression.coefficients.iter().enumerate() {
                    out.push((format!("beta_{c}"), *v));
                }
            }
            Block::BetaPrecision => out.push(("sigma_beta_inv2".into(), state.regression.prior_precision)),
            Block::ErrorPrecision => out.push(("psi_inv2".into(), state.error_precision)),
        }
    }
    out
}

/// One desk check: blocks updated together under one seasonal variant.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteEntry {
    pub blocks: Vec<Block>,
    pub seasonal: SeasonalKind,
    /// Whether the first block has a mis-scalable draw, so the check's power
    /// can be shown by fault injection. Adaptive Metropolis steps do not.
    pub faultable: bool,
}

/// Every update of both seasonal variants, one check each, with the GARCH
/// coefficients tested jointly.
pub fn desk_suite() -> Vec<SuiteEntry> {
    use Block::*;
    let garch = [
        vec![Loadings],
        vec![LocalShrinkage],
        vec![Increments],
        vec![ResidualPrecision],
        vec![Factors],
        vec![Coefficients],
        vec![Levels],
        vec![GrandMean],
        vec![Alpha, Persistence],
        vec![Beta],
        vec![BetaPrecision],
        vec![ErrorPrecision],
    ];
    let ar = [vec![Levels], vec![ArCoefficients], vec![InnovationVariance]];
    let entry = |blocks: Vec<Block>, seasonal| SuiteEntry {
        faultable: !matches!(blocks[0], Alpha | Persistence),
        blocks,
        seasonal,
    };
    garch
        .into_iter()
        .map(|b| entry(b, SeasonalKind::Garch))
        .chain(ar.into_iter().map(|b| entry(b, SeasonalKind::Ar)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GewekeStatistic {
    pub name: String,
    pub marginal_mean: f64,
    pub successive_mean: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GewekeReport {
    pub blocks: Vec<String>,
    pub threshold: f64,
    pub statistics: Vec<GewekeStatistic>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.statistics.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }

    /// True when every statistic is within the threshold; vacuously true with none.
    pub fn passed(&self) -> bool {
        self.statistics.iter().all(|s| s.z.abs() < self.threshold)
    }

    pub fn worst(&self) -> Option<&GewekeStatistic> {
        self.statistics.iter().max_by(|a, b| a.z.abs().total_cmp(&b.z.abs()))
    }
}

fn z_score(marginal: &[f64], successive: &[f64]) -> Result<f64> {
    let diff = numerics::mean(marginal) - numerics::mean(successive);
    let v1 = numerics::variance(marginal) / marginal.len() as f64;
    let v2 = match compute_ess(successive)? {
        Ess::Value(ess) => numerics::variance(successive) / ess,
        Ess::Degenerate => 0.0,
    };
    let se = (v1 + v2).sqrt();
    Ok(if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    })
}

/// Runs both simulators and compares first and second moments of every
/// scalar in the selected blocks.
pub fn geweke_test(config: &GewekeConfig) -> Result<GewekeReport> {
    let selected = BlockSet::of(&config.blocks);
    let names: Vec<String> = config.blocks.iter().map(|b| b.name().to_string()).collect();
    if selected.is_empty() {
        return Ok(GewekeReport {
            blocks: names,
            threshold: config.threshold,
            statistics: Vec::new(),
        });
    }
    if selected.contains(Block::Truncation) {
        return Err(Error::Config("truncation changes dimensions and has no joint-distribution test".into()));
    }
    let downstream = descendants(selected, config.seasonal);
    for b in selected.iter() {
        if parents(b, config.seasonal).iter().any(|p| downstream.contains(*p)) {
            return Err(Error::Config(format!(
                "block `{}` depends on a node downstream of the selection",
                b.name()
            )));
        }
    }
    let regenerate = selected.iter().chain(downstream.iter()).fold(BlockSet::empty(), |s, b| s.with(b));

    let mut model = config.model()?;
    let mut rng = chain_rng(config.seed);
    let base = model.prior_state(&mut rng);

    let mut marginal: Vec<Vec<f64>> = Vec::with_capacity(config.marginal_draws);
    for _ in 0..config.marginal_draws {
        let mut s = base.clone();
        model.forward(&mut s, regenerate, &mut rng);
        marginal.push(block_values(&s, selected).into_iter().map(|(_, v)| v).collect());
    }

    let mut state = base.clone();
    model.forward(&mut state, regenerate, &mut rng);
    let y = model.simulate_responses(&state, &mut rng);
    model.set_responses(y);
    let labels: Vec<String> = block_values(&state, selected).into_iter().map(|(n, _)| n).collect();
    let mut successive: Vec<Vec<f64>> = Vec::with_capacity(config.sweeps);
    for g in 1..=config.sweeps {
        model.sweep(&mut state, g, &mut rng, selected, config.fault, false)?;
        model.forward(&mut state, downstream, &mut rng);
        let y = model.simulate_responses(&state, &mut rng);
        model.set_responses(y);
        successive.push(block_values(&state, selected).into_iter().map(|(_, v)| v).collect());
    }

    let mut statistics = Vec::with_capacity(2 * labels.len());
    for (c, name) in labels.iter().enumerate() {
        for power in [1, 2] {
            let a: Vec<f64> = marginal.iter().map(|r| r[c].powi(power)).collect();
            let b: Vec<f64> = successive.iter().map(|r| r[c].powi(power)).collect();
            statistics.push(GewekeStatistic {
                name: if power == 1 { name.clone() } else { format!("{name}^2") },
                marginal_mean: numerics::mean(&a),
                successive_mean: numerics::mean(&b),
                z: z_score(&a, &b)?,
            });
        }
    }
    Ok(GewekeReport {
        blocks: names,
        threshold: config.threshold,
        statistics,
    })
}
