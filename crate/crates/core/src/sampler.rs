//! Blocked Gibbs sampler.
//!
//! Each sweep updates, in order, the functional block on `y − μ − xβ`, the
//! seasonal block on `y − f − xβ`, the regression block on `y − f − μ`, and
//! finally the error precision on the full residuals.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::basis::{make_knots, SplineBasis};
use crate::config::{ModelConfig, SeasonalKind};
use crate::dataset::PreparedDataset;
use crate::draws::{ChainDiagnostics, Layout, PosteriorDraws};
use crate::error::{Error, Result};
use crate::factor::{AthleteDesign, FactorPrior, FactorState};
use crate::numerics::{self, ChainRng, DrawScale};
use crate::regression::{CrossProducts, RegressionPrior, RegressionState};
use crate::seasonal::{
    simulate_shocks, ArPrior, ArState, GarchParams, GarchPrior, GarchState, SeasonTotals, SeasonalState,
};

/// Individually schedulable updates. The same labels name the nodes of the
/// generative model when simulating forward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    Loadings,
    LocalShrinkage,
    Increments,
    ResidualPrecision,
    Factors,
    Coefficients,
    Truncation,
    Levels,
    GrandMean,
    Alpha,
    Persistence,
    ArCoefficients,
    InnovationVariance,
    Beta,
    BetaPrecision,
    ErrorPrecision,
}

impl Block {
    pub const ALL: [Block; 16] = [
        Block::Loadings,
        Block::LocalShrinkage,
        Block::Increments,
        Block::ResidualPrecision,
        Block::Factors,
        Block::Coefficients,
        Block::Truncation,
        Block::Levels,
        Block::GrandMean,
        Block::Alpha,
        Block::Persistence,
        Block::ArCoefficients,
        Block::InnovationVariance,
        Block::Beta,
        Block::BetaPrecision,
        Block::ErrorPrecision,
    ];

    fn bit(self) -> u32 {
        1 << (self as u32)
    }

    pub fn name(self) -> &'static str {
        match self {
            Block::Loadings => "loadings",
            Block::LocalShrinkage => "local_shrinkage",
            Block::Increments => "increments",
            Block::ResidualPrecision => "residual_precision",
            Block::Factors => "factors",
            Block::Coefficients => "coefficients",
            Block::Truncation => "truncation",
            Block::Levels => "levels",
            Block::GrandMean => "grand_mean",
            Block::Alpha => "alpha",
            Block::Persistence => "persistence",
            Block::ArCoefficients => "ar_coefficients",
            Block::InnovationVariance => "innovation_variance",
            Block::Beta => "beta",
            Block::BetaPrecision => "beta_precision",
            Block::ErrorPrecision => "error_precision",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Block::ALL
            .into_iter()
            .find(|b| b.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown block `{name}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BlockSet(u32);

impl BlockSet {
    pub fn empty() -> Self {
        BlockSet(0)
    }

    pub fn all() -> Self {
        Self::of(&Block::ALL)
    }

    pub fn of(blocks: &[Block]) -> Self {
        BlockSet(blocks.iter().fold(0, |acc, b| acc | b.bit()))
    }

    pub fn contains(self, b: Block) -> bool {
        self.0 & b.bit() != 0
    }

    pub fn with(self, b: Block) -> Self {
        BlockSet(self.0 | b.bit())
    }

    pub fn without(self, b: Block) -> Self {
        BlockSet(self.0 & !b.bit())
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Block> {
        Block::ALL.into_iter().filter(move |b| self.contains(*b))
    }
}

/// A deliberately mis-scaled update, for checking that correctness tests have power.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fault {
    pub block: Block,
    pub scale: DrawScale,
}

fn scale_for(fault: Option<Fault>, block: Block) -> DrawScale {
    match fault {
        Some(f) if f.block == block => f.scale,
        _ => DrawScale::default(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub factor: FactorState,
    pub seasonal: SeasonalState,
    pub regression: RegressionState,
    /// ψ^{-2}
    pub error_precision: f64,
}

/// Which components a partial residual keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// y − μ − xβ
    Functional,
    /// y − f − xβ
    Seasonal,
    /// y − f − μ
    Regression,
    /// y − f − μ − xβ
    Error,
}

/// Data-dependent quantities shared by every sweep of a chain.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub basis: SplineBasis,
    designs: Vec<AthleteDesign>,
    covariates: Vec<DMatrix<f64>>,
    seasons: Vec<Vec<usize>>,
    season_counts: Vec<usize>,
    responses: Vec<DVector<f64>>,
    xtx: DMatrix<f64>,
    pub factor_prior: FactorPrior,
    pub garch_prior: GarchPrior,
    pub ar_prior: ArPrior,
    pub regression_prior: RegressionPrior,
    layout: Layout,
    fingerprint: String,
}

fn non_finite(iteration: usize, block: Block) -> Error {
    Error::NonFinite {
        iteration,
        block: block.name(),
    }
}

impl Model {
    pub fn new(data: &PreparedDataset, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        if data.covariates != config.covariates {
            return Err(Error::Config(format!(
                "data were prepared with covariates {:?}, the model expects {:?}",
                data.covariates.names(),
                config.covariates.names()
            )));
        }
        if data.n_athletes() == 0 {
            return Err(Error::InvalidDimension("no athletes".into()));
        }
        let basis = make_knots(config.df, 3, 0.0, 1.0)?;
        let r = config.covariates.len();
        let mut designs = Vec::with_capacity(data.n_athletes());
        let mut covariates = Vec::with_capacity(data.n_athletes());
        for a in &data.athletes {
            designs.push(AthleteDesign::new(basis.design_matrix(&a.times)?));
            covariates.push(DMatrix::from_fn(a.n_obs(), r, |j, c| a.covariates[j][c]));
        }
        let xtx = covariates
            .iter()
            .fold(DMatrix::zeros(r, r), |acc, x| acc + x.transpose() * x);
        Ok(Self {
            config: config.clone(),
            basis,
            designs,
            covariates,
            seasons: data.athletes.iter().map(|a| a.seasons.clone()).collect(),
            season_counts: data.athletes.iter().map(|a| a.n_seasons()).collect(),
            responses: data
                .athletes
                .iter()
                .map(|a| DVector::from_vec(a.responses.clone()))
                .collect(),
            xtx,
            factor_prior: FactorPrior::from(&config.hyper),
            garch_prior: GarchPrior::try_from(&config.hyper)?,
            ar_prior: ArPrior::from(&config.hyper),
            regression_prior: RegressionPrior::new(&config.hyper, r, config.sigma_beta_form),
            layout: Layout {
                athlete_ids: data.athletes.iter().map(|a| a.profile.id.clone()).collect(),
                df: config.df,
                seasons: data.athletes.iter().map(|a| a.n_seasons()).collect(),
                covariates: config.covariates.names().iter().map(|s| s.to_string()).collect(),
                seasonal: config.seasonal,
            },
            fingerprint: data.fingerprint(),
        })
    }

    pub fn n_athletes(&self) -> usize {
        self.responses.len()
    }

    pub fn n_obs(&self) -> usize {
        self.responses.iter().map(|y| y.len()).sum()
    }

    pub fn responses(&self) -> &[DVector<f64>] {
        &self.responses
    }

    pub fn set_responses(&mut self, responses: Vec<DVector<f64>>) {
        debug_assert!(responses.iter().zip(&self.responses).all(|(a, b)| a.len() == b.len()));
        self.responses = responses;
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn functional(&self, state: &ChainState, i: usize) -> DVector<f64> {
        &self.designs[i].basis * &state.factor.coefficients[i]
    }

    pub fn seasonal_component(&self, state: &ChainState, i: usize) -> DVector<f64> {
        let levels = &state.seasonal.levels()[i];
        DVector::from_iterator(self.seasons[i].len(), self.seasons[i].iter().map(|&s| levels[s]))
    }

    pub fn regression_component(&self, state: &ChainState, i: usize) -> DVector<f64> {
        if self.covariates[i].ncols() == 0 {
            return DVector::zeros(self.responses[i].len());
        }
        &self.covariates[i] * &state.regression.coefficients
    }

    pub fn residuals(&self, state: &ChainState, stage: Stage) -> Vec<DVector<f64>> {
        (0..self.n_athletes())
            .map(|i| {
                let mut r = self.responses[i].clone();
                if stage != Stage::Functional {
                    r -= self.functional(state, i);
                }
                if stage != Stage::Seasonal {
                    r -= self.seasonal_component(state, i);
                }
                if stage != Stage::Regression {
                    r -= self.regression_component(state, i);
                }
                r
            })
            .collect()
    }

    fn season_totals(&self, residuals: &[DVector<f64>]) -> Vec<SeasonTotals> {
        residuals
            .iter()
            .enumerate()
            .map(|(i, r)| SeasonTotals::from_residuals(&self.seasons[i], self.season_counts[i], r.as_slice()))
            .collect()
    }

    /// Draws every parameter from the prior.
    pub fn prior_state<R: Rng + ?Sized>(&self, rng: &mut R) -> ChainState {
        let n = self.n_athletes();
        let factor = FactorState::from_prior(self.config.df, self.config.truncation.initial_k, n, &self.factor_prior, rng);
        let seasonal = match self.config.seasonal {
            SeasonalKind::Garch => SeasonalState::Garch(GarchState::from_prior(
                &self.season_counts,
                &self.garch_prior,
                &self.config.aswam,
                rng,
            )),
            SeasonalKind::Ar => SeasonalState::Ar(ArState::from_prior(&self.season_counts, &self.ar_prior, rng)),
        };
        let regression = RegressionState::from_prior(&self.regression_prior, rng);
        let hyper = &self.config.hyper;
        let error_precision = numerics::gamma(rng, hyper.psi_shape(), hyper.psi_rate());
        ChainState {
            factor,
            seasonal,
            regression,
            error_precision,
        }
    }

    /// Redraws the selected nodes from their priors given everything else,
    /// parents before children.
    pub fn forward<R: Rng + ?Sized>(&self, state: &mut ChainState, nodes: BlockSet, rng: &mut R) {
        let fp = &self.factor_prior;
        let f = &mut state.factor;
        let (p, k) = (f.p(), f.k());
        if nodes.contains(Block::Increments) {
            for l in 0..k {
                let (a, b) = if l == 0 {
                    (fp.first_shape, fp.first_rate)
                } else {
                    (fp.later_shape, fp.later_rate)
                };
                f.increments[l] = numerics::gamma(rng, a, b);
            }
            let mut acc = 1.0;
            for l in 0..k {
                acc *= f.increments[l];
                f.column_precision[l] = acc;
            }
        }
        if nodes.contains(Block::LocalShrinkage) {
            let half = fp.local_dof / 2.0;
            f.local_shrinkage = DMatrix::from_fn(p, k, |_, _| numerics::gamma(rng, half, half));
        }
        if nodes.contains(Block::Loadings) {
            for l in 0..k {
                for j in 0..p {
                    f.loadings[(j, l)] =
                        numerics::std_normal(rng) / (f.local_shrinkage[(j, l)] * f.column_precision[l]).sqrt();
                }
            }
        }
        if nodes.contains(Block::ResidualPrecision) {
            for j in 0..p {
                f.residual_precision[j] = numerics::gamma(rng, fp.residual_shape, fp.residual_rate);
            }
        }
        if nodes.contains(Block::Factors) {
            for eta in &mut f.factors {
                for l in 0..k {
                    eta[l] = numerics::std_normal(rng);
                }
            }
        }
        if nodes.contains(Block::Coefficients) {
            for (theta, eta) in f.coefficients.iter_mut().zip(&f.factors) {
                let mean = &f.loadings * eta;
                for j in 0..p {
                    theta[j] = mean[j] + numerics::std_normal(rng) / f.residual_precision[j].sqrt();
                }
            }
        }
        match &mut state.seasonal {
            SeasonalState::Garch(g) => {
                let gp = &self.garch_prior;
                if nodes.contains(Block::GrandMean) {
                    g.grand_mean = gp.mean_centre + gp.mean_var.sqrt() * numerics::std_normal(rng);
                }
                if nodes.contains(Block::Alpha) || nodes.contains(Block::Persistence) {
                    let fresh = gp.draw_params(rng);
                    if nodes.contains(Block::Alpha) {
                        g.params.intercept = fresh.intercept;
                        g.params.arch = fresh.arch;
                    }
                    if nodes.contains(Block::Persistence) {
                        g.params.persistence = fresh.persistence;
                    }
                }
                if nodes.contains(Block::Levels) {
                    for lv in &mut g.levels {
                        let z = simulate_shocks(&g.params, lv.len(), rng);
                        for (mu, z) in lv.iter_mut().zip(z) {
                            *mu = g.grand_mean + z;
                        }
                    }
                }
            }
            SeasonalState::Ar(a) => {
                let ap = &self.ar_prior;
                if nodes.contains(Block::ArCoefficients) {
                    for rho in &mut a.coefficients {
                        *rho = ap.coefficient_mean + ap.coefficient_var.sqrt() * numerics::std_normal(rng);
                    }
                }
                if nodes.contains(Block::InnovationVariance) {
                    a.innovation_variance = 1.0 / numerics::gamma(rng, ap.innovation_shape, ap.innovation_scale);
                }
                if nodes.contains(Block::Levels) {
                    let sd = a.innovation_variance.sqrt();
                    for (lv, rho) in a.levels.iter_mut().zip(&a.coefficients) {
                        let mut prev = 0.0;
                        for mu in lv.iter_mut() {
                            *mu = rho * prev + sd * numerics::std_normal(rng);
                            prev = *mu;
                        }
                    }
                }
            }
        }
        let rp = &self.regression_prior;
        if nodes.contains(Block::BetaPrecision) && rp.r() > 0 {
            state.regression.prior_precision = numerics::gamma(rng, rp.dof / 2.0, rp.dof * rp.scale * rp.scale / 2.0);
        }
        if nodes.contains(Block::Beta) {
            let sd = 1.0 / state.regression.prior_precision.sqrt();
            state.regression.coefficients = rp.centre.map(|c| c + sd * numerics::std_normal(rng));
        }
        if nodes.contains(Block::ErrorPrecision) {
            let hyper = &self.config.hyper;
            state.error_precision = numerics::gamma(rng, hyper.psi_shape(), hyper.psi_rate());
        }
    }

    /// `y = f + μ + xβ + ε` with fresh noise.
    pub fn simulate_responses<R: Rng + ?Sized>(&self, state: &ChainState, rng: &mut R) -> Vec<DVector<f64>> {
        let sd = 1.0 / state.error_precision.sqrt();
        (0..self.n_athletes())
            .map(|i| {
                let mean = self.functional(state, i) + self.seasonal_component(state, i) + self.regression_component(state, i);
                mean.map(|m| m + sd * numerics::std_normal(rng))
            })
            .collect()
    }

    /// Data-informed starting point.
    /// Slopes of a pooled regression of the responses on the covariates and
    /// an intercept; zeros when the design is singular.
    fn pooled_least_squares(&self) -> DVector<f64> {
        let r = self.regression_prior.r();
        if r == 0 {
            return DVector::zeros(0);
        }
        let mut gram = DMatrix::zeros(r + 1, r + 1);
        let mut rhs = DVector::zeros(r + 1);
        for (x, y) in self.covariates.iter().zip(&self.responses) {
            let design = x.clone().insert_column(0, 1.0);
            gram += design.transpose() * &design;
            rhs += design.transpose() * y;
        }
        match nalgebra::Cholesky::new(gram) {
            Some(c) => c.solve(&rhs).rows(1, r).into_owned(),
            None => DVector::zeros(r),
        }
    }

    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChainState> {
        let n = self.n_athletes();
        let p = self.config.df;
        let hyper = &self.config.hyper;
        let mut factor = FactorState::from_prior(p, self.config.truncation.initial_k, n, &self.factor_prior, rng);
        factor.residual_precision.fill(hyper.a_sigma / hyper.b_sigma);

        let r = self.regression_prior.r();
        let beta = self.pooled_least_squares();
        let regression = RegressionState {
            coefficients: beta.clone(),
            prior_precision: 1.0 / (hyper.sigma_beta * hyper.sigma_beta),
        };
        // What the covariates leave, split into season deviations around the
        // athlete's mean and a smooth remainder.
        let adjusted: Vec<DVector<f64>> = (0..n)
            .map(|i| {
                if r == 0 {
                    self.responses[i].clone()
                } else {
                    &self.responses[i] - &self.covariates[i] * &beta
                }
            })
            .collect();
        let base = match self.config.seasonal {
            SeasonalKind::Garch => hyper.m_mean,
            SeasonalKind::Ar => 0.0,
        };
        let levels: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = SeasonTotals::from_residuals(&self.seasons[i], self.season_counts[i], adjusted[i].as_slice());
                let athlete_mean = if adjusted[i].is_empty() { 0.0 } else { adjusted[i].mean() };
                t.count
                    .iter()
                    .zip(&t.sum)
                    .map(|(&c, &s)| if c > 0 { base + s / c as f64 - athlete_mean } else { base })
                    .collect()
            })
            .collect();
        for i in 0..n {
            let d = &self.designs[i];
            let ridge = &d.gram + DMatrix::identity(p, p);
            let seasonal = DVector::from_iterator(self.seasons[i].len(), self.seasons[i].iter().map(|&s| levels[i][s]));
            let rhs = d.basis.transpose() * (&adjusted[i] - seasonal);
            factor.coefficients[i] = numerics::cholesky(ridge, "ridge start")?.solve(&rhs);
        }
        let seasonal = match self.config.seasonal {
            SeasonalKind::Garch => SeasonalState::Garch(GarchState::new(
                levels,
                base,
                GarchParams::new(0.1, 0.1, 0.1),
                &self.config.aswam,
            )),
            SeasonalKind::Ar => {
                let deviations: Vec<f64> = levels.iter().flatten().cloned().collect();
                let spread = if deviations.len() > 1 { numerics::variance(&deviations) } else { 0.1 };
                SeasonalState::Ar(ArState {
                    levels,
                    coefficients: vec![self.ar_prior.coefficient_mean; n],
                    innovation_variance: spread.max(1e-3),
                })
            }
        };
        let mut state = ChainState {
            factor,
            seasonal,
            regression,
            error_precision: 1.0,
        };
        let eps: Vec<f64> = self
            .residuals(&state, Stage::Error)
            .iter()
            .flat_map(|r| r.iter().cloned().collect::<Vec<_>>())
            .collect();
        if eps.len() > 1 {
            let v = numerics::variance(&eps);
            if v > 0.0 && v.is_finite() {
                state.error_precision = 1.0 / v;
            }
        }
        Ok(state)
    }

    /// One sweep over the selected blocks.
    #[allow(clippy::too_many_arguments)]
    pub fn sweep(
        &self,
        state: &mut ChainState,
        iteration: usize,
        rng: &mut ChainRng,
        blocks: BlockSet,
        fault: Option<Fault>,
        adapt: bool,
    ) -> Result<()> {
        let seed = self.config.run.seed;
        let g = iteration as u64;
        let stream = |block: u64| move |i: usize| numerics::stream_rng(seed, g, block, i as u64);
        let hyper = &self.config.hyper;

        // functional component
        let y1 = self.residuals(state, Stage::Functional);
        let f = &mut state.factor;
        if blocks.contains(Block::Loadings) {
            f.update_loadings(rng, scale_for(fault, Block::Loadings))?;
            check(f.loadings.iter(), iteration, Block::Loadings)?;
        }
        if blocks.contains(Block::LocalShrinkage) {
            f.update_local_shrinkage(&self.factor_prior, rng, scale_for(fault, Block::LocalShrinkage));
            check(f.local_shrinkage.iter(), iteration, Block::LocalShrinkage)?;
        }
        if blocks.contains(Block::Increments) {
            f.update_increments(&self.factor_prior, rng, scale_for(fault, Block::Increments));
            check(f.column_precision.iter(), iteration, Block::Increments)?;
        }
        if blocks.contains(Block::ResidualPrecision) {
            f.update_residual_precision(&self.factor_prior, rng, scale_for(fault, Block::ResidualPrecision));
            check(f.residual_precision.iter(), iteration, Block::ResidualPrecision)?;
        }
        if blocks.contains(Block::Factors) {
            f.update_factors(&self.designs, &y1, state.error_precision, stream(1), scale_for(fault, Block::Factors))?;
            check(f.factors.iter().flat_map(|e| e.iter()), iteration, Block::Factors)?;
        }
        if blocks.contains(Block::Coefficients) {
            f.update_coefficients(&self.designs, &y1, state.error_precision, stream(2), scale_for(fault, Block::Coefficients))?;
            check(f.coefficients.iter().flat_map(|e| e.iter()), iteration, Block::Coefficients)?;
        }
        if blocks.contains(Block::Truncation) {
            let u: f64 = rng.random();
            f.adapt_truncation(iteration, u, &self.config.truncation, self.config.k_max(), &self.factor_prior, rng);
        }

        // seasonal component
        let seasonal_blocks = [
            Block::Levels,
            Block::GrandMean,
            Block::Alpha,
            Block::Persistence,
            Block::ArCoefficients,
            Block::InnovationVariance,
        ];
        if seasonal_blocks.iter().any(|b| blocks.contains(*b)) {
            let totals = self.season_totals(&self.residuals(state, Stage::Seasonal));
            let precision = state.error_precision;
            match &mut state.seasonal {
                SeasonalState::Garch(s) => {
                    let exact = self.config.exact_garch_conditionals;
                    if blocks.contains(Block::Levels) {
                        s.update_levels(&totals, precision, exact, stream(3), scale_for(fault, Block::Levels));
                        check(s.levels.iter().flatten(), iteration, Block::Levels)?;
                    }
                    if blocks.contains(Block::GrandMean) {
                        s.update_grand_mean(&self.garch_prior, exact, rng, scale_for(fault, Block::GrandMean));
                        check([s.grand_mean].iter(), iteration, Block::GrandMean)?;
                    }
                    if blocks.contains(Block::Alpha) {
                        s.update_alpha(&self.garch_prior, adapt, rng);
                        check([s.params.intercept, s.params.arch].iter(), iteration, Block::Alpha)?;
                    }
                    if blocks.contains(Block::Persistence) {
                        s.update_persistence(&self.garch_prior, adapt, rng);
                        check([s.params.persistence].iter(), iteration, Block::Persistence)?;
                    }
                }
                SeasonalState::Ar(s) => {
                    use rayon::prelude::*;
                    if blocks.contains(Block::Levels) {
                        let scale = scale_for(fault, Block::Levels);
                        let rng_for = stream(3);
                        let shared = &*s;
                        let levels: Vec<Vec<f64>> = (0..shared.levels.len())
                            .into_par_iter()
                            .map(|i| shared.draw_levels(i, &totals[i], precision, &mut rng_for(i), scale))
                            .collect();
                        s.levels = levels;
                        check(s.levels.iter().flatten(), iteration, Block::Levels)?;
                    }
                    if blocks.contains(Block::ArCoefficients) {
                        let scale = scale_for(fault, Block::ArCoefficients);
                        let rng_for = stream(4);
                        let shared = &*s;
                        let rhos: Vec<f64> = (0..shared.levels.len())
                            .into_par_iter()
                            .map(|i| shared.draw_coefficient(i, &self.ar_prior, &mut rng_for(i), scale))
                            .collect();
                        s.coefficients = rhos;
                        check(s.coefficients.iter(), iteration, Block::ArCoefficients)?;
                    }
                    if blocks.contains(Block::InnovationVariance) {
                        s.update_innovation_variance(&self.ar_prior, rng, scale_for(fault, Block::InnovationVariance));
                        check([s.innovation_variance].iter(), iteration, Block::InnovationVariance)?;
                    }
                }
            }
        }

        // regression component
        if self.regression_prior.r() > 0 && (blocks.contains(Block::Beta) || blocks.contains(Block::BetaPrecision)) {
            if blocks.contains(Block::Beta) {
                let y3 = self.residuals(state, Stage::Regression);
                let xty = self
                    .covariates
                    .iter()
                    .zip(&y3)
                    .fold(DVector::zeros(self.regression_prior.r()), |acc, (x, y)| acc + x.transpose() * y);
                let cross = CrossProducts {
                    xtx: self.xtx.clone(),
                    xty,
                };
                state.regression.update_coefficients(
                    &cross,
                    state.error_precision,
                    &self.regression_prior,
                    rng,
                    scale_for(fault, Block::Beta),
                )?;
                check(state.regression.coefficients.iter(), iteration, Block::Beta)?;
            }
            if blocks.contains(Block::BetaPrecision) {
                let ss = match self.config.sigma_beta_form {
                    crate::config::SigmaBetaForm::Conjugate => (0, 0.0),
                    crate::config::SigmaBetaForm::Residual => {
                        let eps = self.residuals(state, Stage::Error);
                        (self.n_obs(), eps.iter().map(|e| e.norm_squared()).sum())
                    }
                };
                state
                    .regression
                    .update_prior_precision(&self.regression_prior, ss, rng, scale_for(fault, Block::BetaPrecision));
                check([state.regression.prior_precision].iter(), iteration, Block::BetaPrecision)?;
            }
        }

        // error term
        if blocks.contains(Block::ErrorPrecision) {
            let eps = self.residuals(state, Stage::Error);
            let ss: f64 = eps.iter().map(|e| e.norm_squared()).sum();
            let shape = hyper.psi_shape() + self.n_obs() as f64 / 2.0;
            let rate = hyper.psi_rate() + ss / 2.0;
            state.error_precision = numerics::gamma_scaled(rng, shape, rate, scale_for(fault, Block::ErrorPrecision));
            check([state.error_precision].iter(), iteration, Block::ErrorPrecision)?;
        }
        Ok(())
    }

    /// Blocks of a full sweep for this model's seasonal variant.
    pub fn full_sweep(&self) -> BlockSet {
        let mut set = BlockSet::all();
        match self.config.seasonal {
            SeasonalKind::Garch => {
                set = set.without(Block::ArCoefficients).without(Block::InnovationVariance);
            }
            SeasonalKind::Ar => {
                set = set.without(Block::GrandMean).without(Block::Alpha).without(Block::Persistence);
            }
        }
        if !self.config.truncation.enabled {
            set = set.without(Block::Truncation);
        }
        set
    }

    fn record(&self, draws: &mut PosteriorDraws, g: usize, state: &ChainState) {
        draws.iterations.push(g);
        draws
            .theta
            .push(state.factor.coefficients.iter().flat_map(|t| t.iter().cloned()).collect());
        draws.levels.push(state.seasonal.levels().iter().flatten().cloned().collect());
        draws.seasonal.push(match &state.seasonal {
            SeasonalState::Garch(s) => vec![s.grand_mean, s.params.intercept, s.params.arch, s.params.persistence],
            SeasonalState::Ar(s) => std::iter::once(s.innovation_variance)
                .chain(s.coefficients.iter().cloned())
                .collect(),
        });
        draws.regression.push(
            state
                .regression
                .coefficients
                .iter()
                .cloned()
                .chain(std::iter::once(state.regression.prior_precision))
                .collect(),
        );
        draws.error_variance.push(1.0 / state.error_precision);
        draws.truncation.push(state.factor.k());
    }

    /// Runs the configured number of sweeps from the data-informed start.
    pub fn run(&self) -> Result<PosteriorDraws> {
        let run = &self.config.run;
        let mut rng = numerics::chain_rng(run.seed);
        let mut state = self.initial_state(&mut rng)?;
        let mut draws = PosteriorDraws::new(self.layout.clone(), self.config.clone(), self.fingerprint.clone());
        let blocks = self.full_sweep();
        let burn_in = run.burn_in_iterations();
        let mut diagnostics = ChainDiagnostics::default();
        for g in 1..=run.iterations {
            let adapt = !(self.config.aswam.freeze_after_burn_in && g > burn_in);
            self.sweep(&mut state, g, &mut rng, blocks, None, adapt)?;
            if g > burn_in {
                *diagnostics.k_histogram.entry(state.factor.k()).or_default() += 1;
            }
            if run.is_retained(g) {
                self.record(&mut draws, g, &state);
            }
        }
        if let SeasonalState::Garch(s) = &state.seasonal {
            diagnostics.alpha_acceptance = Some(s.alpha_sampler.acceptance_rate());
            diagnostics.persistence_acceptance = Some(s.persistence_sampler.acceptance_rate());
            if s.level_proposals > 0 {
                diagnostics.level_acceptance = Some(s.level_accepts as f64 / s.level_proposals as f64);
            }
        }
        draws.diagnostics = diagnostics;
        Ok(draws)
    }
}

fn check<'a>(mut values: impl Iterator<Item = &'a f64>, iteration: usize, block: Block) -> Result<()> {
    if values.all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(non_finite(iteration, block))
    }
}

/// Prepares the model and runs one chain.
pub fn run_chain(data: &PreparedDataset, config: &ModelConfig) -> Result<PosteriorDraws> {
    Model::new(data, config)?.run()
}
