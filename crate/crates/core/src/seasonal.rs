//! Season-specific random intercepts.
//!
//! GARCH variant: `μ_is = m + ζ_is`, `ζ_is ~ N(0, h_is)` with
//! `h_is = α0 + α1 ζ²_{i,s-1} + ϖ h_{i,s-1}` and `h_i0 = ζ_i0 = 0`.
//! AR variant: `μ_is ~ N(ρ_i μ_{i,s-1}, σ_μ²)` with `μ_i0 = 0`.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use crate::aswam::Aswam;
use crate::config::{AswamSettings, Hyperparameters};
use crate::error::{Error, Result};
use crate::numerics::{self, ChainRng, DrawScale};

/// GARCH coefficients are kept at or above this value so their logs exist.
pub const PARAMETER_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GarchParams {
    /// α0 > 0
    pub intercept: f64,
    /// α1 ≥ 0
    pub arch: f64,
    /// ϖ ≥ 0
    pub persistence: f64,
}

impl GarchParams {
    pub fn new(intercept: f64, arch: f64, persistence: f64) -> Self {
        Self {
            intercept,
            arch,
            persistence,
        }
    }

    /// α0 / (1 − α1 − ϖ) when α1 + ϖ < 1.
    pub fn stationary_variance(&self) -> Option<f64> {
        let s = self.arch + self.persistence;
        (s < 1.0).then(|| self.intercept / (1.0 - s))
    }

    pub fn next_variance(&self, prev_shock: f64, prev_variance: f64) -> f64 {
        self.intercept + self.arch * prev_shock * prev_shock + self.persistence * prev_variance
    }
}

/// Conditional variances h_1..h_S of a shock sequence.
pub fn conditional_variances(shocks: &[f64], params: &GarchParams) -> Vec<f64> {
    let mut h = Vec::with_capacity(shocks.len());
    let (mut prev_z, mut prev_h) = (0.0, 0.0);
    for &z in shocks {
        let cur = params.next_variance(prev_z, prev_h);
        h.push(cur);
        prev_z = z;
        prev_h = cur;
    }
    h
}

/// Variance of the season after the last shock.
pub fn variance_after(shocks: &[f64], params: &GarchParams) -> f64 {
    match shocks.last() {
        None => params.intercept,
        Some(&z) => {
            let h = conditional_variances(shocks, params);
            params.next_variance(z, *h.last().unwrap())
        }
    }
}

pub fn simulate_shocks<R: Rng + ?Sized>(params: &GarchParams, len: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let (mut prev_z, mut prev_h) = (0.0, 0.0);
    for _ in 0..len {
        let h = params.next_variance(prev_z, prev_h);
        let z = h.sqrt() * numerics::std_normal(rng);
        out.push(z);
        prev_z = z;
        prev_h = h;
    }
    out
}

fn shock_loglik(shocks: &[f64], params: &GarchParams) -> f64 {
    let mut total = 0.0;
    let (mut prev_z, mut prev_h) = (0.0, 0.0);
    for &z in shocks {
        let h = params.next_variance(prev_z, prev_h);
        total += numerics::normal_logpdf(z, 0.0, h);
        prev_z = z;
        prev_h = h;
    }
    total
}

/// Observation count and residual sum per season of one athlete.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeasonTotals {
    pub count: Vec<usize>,
    pub sum: Vec<f64>,
}

impl SeasonTotals {
    pub fn from_residuals(seasons: &[usize], n_seasons: usize, residuals: &[f64]) -> Self {
        let mut t = Self {
            count: vec![0; n_seasons],
            sum: vec![0.0; n_seasons],
        };
        for (&s, &r) in seasons.iter().zip(residuals) {
            t.count[s] += 1;
            t.sum[s] += r;
        }
        t
    }

    pub fn empty(n_seasons: usize) -> Self {
        Self::from_residuals(&[], n_seasons, &[])
    }
}

/// Mean and variance of `μ_is` given fixed `h_is`: the data term combined with N(m, h).
pub fn level_conditional(count: usize, sum: f64, error_precision: f64, centre: f64, variance: f64) -> (f64, f64) {
    let var = 1.0 / (count as f64 * error_precision + 1.0 / variance);
    (var * (sum * error_precision + centre / variance), var)
}

/// Mean and variance of `m` given fixed `h`.
pub fn grand_mean_conditional<'a, I>(pairs: I, prior_mean: f64, prior_var: f64) -> (f64, f64)
where
    I: IntoIterator<Item = (f64, f64)> + 'a,
{
    let (mut precision, mut linear) = (1.0 / prior_var, prior_mean / prior_var);
    for (mu, h) in pairs {
        precision += 1.0 / h;
        linear += mu / h;
    }
    (linear / precision, 1.0 / precision)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GarchPrior {
    pub mean_centre: f64,
    pub mean_var: f64,
    pub alpha_mean: [f64; 2],
    /// Inverse of the prior covariance of (α0, α1).
    pub alpha_precision: [[f64; 2]; 2],
    pub persistence_mean: f64,
    pub persistence_var: f64,
}

impl TryFrom<&Hyperparameters> for GarchPrior {
    type Error = Error;

    fn try_from(h: &Hyperparameters) -> Result<Self> {
        let [[a, b], [c, d]] = h.alpha_cov;
        let det = a * d - b * c;
        if !(det > 0.0 && a > 0.0) {
            return Err(Error::Config("alpha prior covariance must be positive definite".into()));
        }
        Ok(Self {
            mean_centre: h.m_mean,
            mean_var: h.m_var,
            alpha_mean: h.alpha_mean,
            alpha_precision: [[d / det, -b / det], [-c / det, a / det]],
            persistence_mean: h.varpi_mean,
            persistence_var: h.varpi_var,
        })
    }
}

impl GarchPrior {
    /// Truncated-normal log density of (α0, α1), without its normalizing constant.
    pub fn alpha_log_density(&self, intercept: f64, arch: f64) -> f64 {
        if intercept < PARAMETER_FLOOR || arch < PARAMETER_FLOOR {
            return f64::NEG_INFINITY;
        }
        let d = [intercept - self.alpha_mean[0], arch - self.alpha_mean[1]];
        let q = self.alpha_precision;
        -0.5 * (d[0] * (q[0][0] * d[0] + q[0][1] * d[1]) + d[1] * (q[1][0] * d[0] + q[1][1] * d[1]))
    }

    pub fn persistence_log_density(&self, persistence: f64) -> f64 {
        if persistence < PARAMETER_FLOOR {
            return f64::NEG_INFINITY;
        }
        let d = persistence - self.persistence_mean;
        -0.5 * d * d / self.persistence_var
    }

    fn alpha_covariance(&self) -> [[f64; 2]; 2] {
        let [[a, b], [c, d]] = self.alpha_precision;
        let det = a * d - b * c;
        [[d / det, -b / det], [-c / det, a / det]]
    }

    /// Rejection draw from the truncated priors.
    pub fn draw_params<R: Rng + ?Sized>(&self, rng: &mut R) -> GarchParams {
        let cov = self.alpha_covariance();
        let l00 = cov[0][0].sqrt();
        let l10 = cov[1][0] / l00;
        let l11 = (cov[1][1] - l10 * l10).sqrt();
        let (intercept, arch) = loop {
            let z0 = numerics::std_normal(rng);
            let z1 = numerics::std_normal(rng);
            let a0 = self.alpha_mean[0] + l00 * z0;
            let a1 = self.alpha_mean[1] + l10 * z0 + l11 * z1;
            if a0 >= PARAMETER_FLOOR && a1 >= PARAMETER_FLOOR {
                break (a0, a1);
            }
        };
        let persistence = loop {
            let v = self.persistence_mean + self.persistence_var.sqrt() * numerics::std_normal(rng);
            if v >= PARAMETER_FLOOR {
                break v;
            }
        };
        GarchParams::new(intercept, arch, persistence)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GarchState {
    /// μ_is per athlete.
    pub levels: Vec<Vec<f64>>,
    /// m
    pub grand_mean: f64,
    pub params: GarchParams,
    pub alpha_sampler: Aswam,
    pub persistence_sampler: Aswam,
    pub level_proposals: usize,
    pub level_accepts: usize,
}

impl GarchState {
    pub fn new(levels: Vec<Vec<f64>>, grand_mean: f64, params: GarchParams, settings: &AswamSettings) -> Self {
        Self {
            levels,
            grand_mean,
            alpha_sampler: Aswam::new(
                DVector::from_vec(vec![params.intercept.ln(), params.arch.ln()]),
                settings,
            ),
            persistence_sampler: Aswam::new(DVector::from_element(1, params.persistence.ln()), settings),
            params,
            level_proposals: 0,
            level_accepts: 0,
        }
    }

    /// m, α, ϖ from the prior and the levels simulated through the recursion.
    pub fn from_prior<R: Rng + ?Sized>(
        season_counts: &[usize],
        prior: &GarchPrior,
        settings: &AswamSettings,
        rng: &mut R,
    ) -> Self {
        let grand_mean = prior.mean_centre + prior.mean_var.sqrt() * numerics::std_normal(rng);
        let params = prior.draw_params(rng);
        let levels = season_counts
            .iter()
            .map(|&s| {
                simulate_shocks(&params, s, rng)
                    .into_iter()
                    .map(|z| grand_mean + z)
                    .collect()
            })
            .collect();
        Self::new(levels, grand_mean, params, settings)
    }

    pub fn shocks(&self, i: usize) -> Vec<f64> {
        self.levels[i].iter().map(|mu| mu - self.grand_mean).collect()
    }

    pub fn variances(&self, i: usize) -> Vec<f64> {
        conditional_variances(&self.shocks(i), &self.params)
    }

    /// Σ_i Σ_s log N(ζ_is; 0, h_is).
    pub fn log_likelihood(&self, params: &GarchParams) -> f64 {
        self.levels
            .iter()
            .map(|lv| {
                let z: Vec<f64> = lv.iter().map(|mu| mu - self.grand_mean).collect();
                shock_loglik(&z, params)
            })
            .sum()
    }

    fn log_likelihood_at_mean(&self, grand_mean: f64) -> f64 {
        self.levels
            .iter()
            .map(|lv| {
                let z: Vec<f64> = lv.iter().map(|mu| mu - grand_mean).collect();
                shock_loglik(&z, &self.params)
            })
            .sum()
    }

    /// Levels of one athlete, season by season.
    ///
    /// Each μ_is is proposed from its conditional with h_is held fixed. With
    /// `exact` the proposal is corrected by Metropolis–Hastings for the effect
    /// of μ_is on the later variances; otherwise it is accepted outright.
    #[allow(clippy::too_many_arguments)]
    pub fn draw_levels<R: Rng + ?Sized>(
        &self,
        i: usize,
        totals: &SeasonTotals,
        error_precision: f64,
        exact: bool,
        rng: &mut R,
        scale: DrawScale,
    ) -> (Vec<f64>, usize) {
        let m = self.grand_mean;
        let params = &self.params;
        let mut levels = self.levels[i].clone();
        let n_seasons = levels.len();
        let mut accepted = 0;
        let (mut prev_z, mut prev_h) = (0.0, 0.0);
        for s in 0..n_seasons {
            let h = params.next_variance(prev_z, prev_h);
            let (mean, var) = level_conditional(totals.count[s], totals.sum[s], error_precision, m, h);
            let proposal = mean + (var * scale.0).sqrt() * numerics::std_normal(rng);
            let accept = if exact && s + 1 < n_seasons {
                let tail_loglik = |z_s: f64| {
                    let mut total = 0.0;
                    let (mut pz, mut ph) = (z_s, h);
                    for &mu in &levels[s + 1..] {
                        let hh = params.next_variance(pz, ph);
                        let z = mu - m;
                        total += numerics::normal_logpdf(z, 0.0, hh);
                        pz = z;
                        ph = hh;
                    }
                    total
                };
                let log_ratio = tail_loglik(proposal - m) - tail_loglik(levels[s] - m);
                let u: f64 = rng.random();
                u.ln() < log_ratio
            } else {
                true
            };
            if accept {
                levels[s] = proposal;
                accepted += 1;
            }
            prev_z = levels[s] - m;
            prev_h = h;
        }
        (levels, accepted)
    }

    pub fn update_levels<F>(
        &mut self,
        totals: &[SeasonTotals],
        error_precision: f64,
        exact: bool,
        rng_for: F,
        scale: DrawScale,
    ) where
        F: Fn(usize) -> ChainRng + Sync,
    {
        let draws: Vec<(Vec<f64>, usize)> = (0..self.levels.len())
            .into_par_iter()
            .map(|i| self.draw_levels(i, &totals[i], error_precision, exact, &mut rng_for(i), scale))
            .collect();
        for (i, (lv, acc)) in draws.into_iter().enumerate() {
            self.level_proposals += lv.len();
            self.level_accepts += acc;
            self.levels[i] = lv;
        }
    }

    fn grand_mean_proposal(&self, grand_mean: f64, prior: &GarchPrior) -> (f64, f64) {
        let pairs = self.levels.iter().flat_map(|lv| {
            let z: Vec<f64> = lv.iter().map(|mu| mu - grand_mean).collect();
            let h = conditional_variances(&z, &self.params);
            lv.iter().cloned().zip(h).collect::<Vec<_>>()
        });
        grand_mean_conditional(pairs, prior.mean_centre, prior.mean_var)
    }

    /// m from its conditional with h evaluated at the current m; with `exact`
    /// the draw is a Metropolis–Hastings proposal against the full conditional.
    pub fn update_grand_mean<R: Rng + ?Sized>(&mut self, prior: &GarchPrior, exact: bool, rng: &mut R, scale: DrawScale) {
        let current = self.grand_mean;
        let (mean, var) = self.grand_mean_proposal(current, prior);
        let proposal = mean + (var * scale.0).sqrt() * numerics::std_normal(rng);
        if !exact {
            self.grand_mean = proposal;
            return;
        }
        let (back_mean, back_var) = self.grand_mean_proposal(proposal, prior);
        let target = |m: f64| self.log_likelihood_at_mean(m) + numerics::normal_logpdf(m, prior.mean_centre, prior.mean_var);
        let log_ratio = target(proposal) - target(current) + numerics::normal_logpdf(current, back_mean, back_var)
            - numerics::normal_logpdf(proposal, mean, var);
        let u: f64 = rng.random();
        if u.ln() < log_ratio {
            self.grand_mean = proposal;
        }
    }

    /// Log posterior of (α0, α1) in natural coordinates, ϖ fixed.
    pub fn alpha_log_target(&self, intercept: f64, arch: f64, prior: &GarchPrior) -> f64 {
        let lp = prior.alpha_log_density(intercept, arch);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        let ll = self.log_likelihood(&GarchParams::new(intercept, arch, self.params.persistence));
        if ll.is_finite() {
            lp + ll
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Same target in log coordinates, including the Jacobian `α0 α1`.
    pub fn alpha_log_target_log_scale(&self, log_alpha: &DVector<f64>, prior: &GarchPrior) -> f64 {
        self.alpha_log_target(log_alpha[0].exp(), log_alpha[1].exp(), prior) + log_alpha[0] + log_alpha[1]
    }

    pub fn persistence_log_target(&self, persistence: f64, prior: &GarchPrior) -> f64 {
        let lp = prior.persistence_log_density(persistence);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        let ll = self.log_likelihood(&GarchParams::new(self.params.intercept, self.params.arch, persistence));
        if ll.is_finite() {
            lp + ll
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn persistence_log_target_log_scale(&self, log_persistence: f64, prior: &GarchPrior) -> f64 {
        self.persistence_log_target(log_persistence.exp(), prior) + log_persistence
    }

    pub fn update_alpha<R: Rng + ?Sized>(&mut self, prior: &GarchPrior, adapt: bool, rng: &mut R) {
        let current = DVector::from_vec(vec![self.params.intercept.ln(), self.params.arch.ln()]);
        let current_log = self.alpha_log_target_log_scale(&current, prior);
        let mut sampler = self.alpha_sampler.clone();
        let (next, _, prob) = sampler.step(&current, current_log, |x| self.alpha_log_target_log_scale(x, prior), rng);
        if adapt {
            sampler.adapt(&next, prob);
        }
        self.alpha_sampler = sampler;
        self.params.intercept = next[0].exp();
        self.params.arch = next[1].exp();
    }

    pub fn update_persistence<R: Rng + ?Sized>(&mut self, prior: &GarchPrior, adapt: bool, rng: &mut R) {
        let current = DVector::from_element(1, self.params.persistence.ln());
        let current_log = self.persistence_log_target_log_scale(current[0], prior);
        let mut sampler = self.persistence_sampler.clone();
        let (next, _, prob) = sampler.step(
            &current,
            current_log,
            |x| self.persistence_log_target_log_scale(x[0], prior),
            rng,
        );
        if adapt {
            sampler.adapt(&next, prob);
        }
        self.persistence_sampler = sampler;
        self.params.persistence = next[0].exp();
    }
}

/// Fraction of draws satisfying α1 + ϖ < 1.
pub fn stationarity_probability(arch: &[f64], persistence: &[f64]) -> Result<f64> {
    if arch.is_empty() {
        return Err(Error::EmptyDraws);
    }
    if arch.len() != persistence.len() {
        return Err(Error::DimensionMismatch {
            expected: arch.len(),
            actual: persistence.len(),
        });
    }
    let hits = arch.iter().zip(persistence).filter(|(a, w)| *a + *w < 1.0).count();
    Ok(hits as f64 / arch.len() as f64)
}

// ---------------------------------------------------------------------------
// AR(1) variant

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArPrior {
    pub coefficient_mean: f64,
    pub coefficient_var: f64,
    /// Inverse-gamma shape and scale of σ_μ².
    pub innovation_shape: f64,
    pub innovation_scale: f64,
}

impl From<&Hyperparameters> for ArPrior {
    fn from(h: &Hyperparameters) -> Self {
        Self {
            coefficient_mean: h.rho_mean,
            coefficient_var: h.rho_var,
            innovation_shape: h.sigma_mu_shape,
            innovation_scale: h.sigma_mu_scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArState {
    pub levels: Vec<Vec<f64>>,
    /// ρ_i
    pub coefficients: Vec<f64>,
    /// σ_μ²
    pub innovation_variance: f64,
}

impl ArState {
    pub fn from_prior<R: Rng + ?Sized>(season_counts: &[usize], prior: &ArPrior, rng: &mut R) -> Self {
        let innovation_variance = 1.0 / numerics::gamma(rng, prior.innovation_shape, prior.innovation_scale);
        let sd = innovation_variance.sqrt();
        let mut coefficients = Vec::new();
        let levels = season_counts
            .iter()
            .map(|&s| {
                let rho = prior.coefficient_mean + prior.coefficient_var.sqrt() * numerics::std_normal(rng);
                coefficients.push(rho);
                let mut prev = 0.0;
                (0..s)
                    .map(|_| {
                        prev = rho * prev + sd * numerics::std_normal(rng);
                        prev
                    })
                    .collect()
            })
            .collect();
        Self {
            levels,
            coefficients,
            innovation_variance,
        }
    }

    /// Mean and variance of `levels[s]` given its neighbours in `levels`, for
    /// athlete `i`.
    pub fn level_conditional(&self, i: usize, s: usize, levels: &[f64], totals: &SeasonTotals, error_precision: f64) -> (f64, f64) {
        let rho = self.coefficients[i];
        let inv = 1.0 / self.innovation_variance;
        let prev = if s == 0 { 0.0 } else { levels[s - 1] };
        let mut precision = totals.count[s] as f64 * error_precision + inv;
        let mut linear = totals.sum[s] * error_precision + rho * prev * inv;
        if s + 1 < levels.len() {
            precision += rho * rho * inv;
            linear += rho * levels[s + 1] * inv;
        }
        (linear / precision, 1.0 / precision)
    }

    /// Systematic scan over the seasons of athlete `i`.
    pub fn draw_levels<R: Rng + ?Sized>(
        &self,
        i: usize,
        totals: &SeasonTotals,
        error_precision: f64,
        rng: &mut R,
        scale: DrawScale,
    ) -> Vec<f64> {
        let mut levels = self.levels[i].clone();
        for s in 0..levels.len() {
            let (mean, var) = self.level_conditional(i, s, &levels, totals, error_precision);
            levels[s] = mean + (var * scale.0).sqrt() * numerics::std_normal(rng);
        }
        levels
    }

    /// Mean and variance of ρ_i given the lag pairs (μ_{s-1}, μ_s), s ≥ 2.
    pub fn coefficient_conditional(&self, i: usize, prior: &ArPrior) -> (f64, f64) {
        let inv = 1.0 / self.innovation_variance;
        let mut precision = 1.0 / prior.coefficient_var;
        let mut linear = prior.coefficient_mean / prior.coefficient_var;
        for w in self.levels[i].windows(2) {
            precision += w[0] * w[0] * inv;
            linear += w[0] * w[1] * inv;
        }
        (linear / precision, 1.0 / precision)
    }

    pub fn draw_coefficient<R: Rng + ?Sized>(&self, i: usize, prior: &ArPrior, rng: &mut R, scale: DrawScale) -> f64 {
        let (mean, var) = self.coefficient_conditional(i, prior);
        mean + (var * scale.0).sqrt() * numerics::std_normal(rng)
    }

    /// Inverse-gamma draw of σ_μ² given all innovations μ_is − ρ_i μ_{i,s-1}.
    pub fn update_innovation_variance<R: Rng + ?Sized>(&mut self, prior: &ArPrior, rng: &mut R, scale: DrawScale) {
        let mut count = 0usize;
        let mut ss = 0.0;
        for (lv, &rho) in self.levels.iter().zip(&self.coefficients) {
            let mut prev = 0.0;
            for &mu in lv {
                let e = mu - rho * prev;
                ss += e * e;
                count += 1;
                prev = mu;
            }
        }
        let shape = prior.innovation_shape + count as f64 / 2.0;
        let rate = prior.innovation_scale + ss / 2.0;
        self.innovation_variance = 1.0 / numerics::gamma_scaled(rng, shape, rate, scale);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SeasonalState {
    Garch(GarchState),
    Ar(ArState),
}

impl SeasonalState {
    pub fn levels(&self) -> &[Vec<f64>] {
        match self {
            SeasonalState::Garch(g) => &g.levels,
            SeasonalState::Ar(a) => &a.levels,
        }
    }

    /// Level of athlete `i` in season `s`.
    pub fn level(&self, i: usize, s: usize) -> f64 {
        self.levels()[i][s]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{chain_rng, mean, variance};

    fn default_prior() -> GarchPrior {
        GarchPrior::try_from(&Hyperparameters::default()).unwrap()
    }

    #[test]
    fn recursion_examples() {
        let p = GarchParams::new(0.1, 0.2, 0.5);
        let h = conditional_variances(&[0.3, -1.0], &p);
        assert_eq!(h[0], 0.1);
        assert!((h[1] - 0.168).abs() < 1e-15);
        let flat = GarchParams::new(0.4, 0.0, 0.0);
        assert!(conditional_variances(&[1.0, -3.0, 2.0], &flat).iter().all(|&v| v == 0.4));
        assert_eq!(variance_after(&[], &p), 0.1);
        assert!((variance_after(&[0.3], &p) - 0.168).abs() < 1e-15);
        assert!((p.stationary_variance().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn stationary_variance_by_simulation() {
        let p = GarchParams::new(0.1, 0.2, 0.5);
        let mut rng = chain_rng(1);
        let z = simulate_shocks(&p, 1_000_000, &mut rng);
        let v = z.iter().map(|x| x * x).sum::<f64>() / z.len() as f64;
        assert!((v / (1.0 / 3.0) - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn level_conditional_examples() {
        assert_eq!(level_conditional(1, 2.0, 1.0, 0.0, 1.0), (1.0, 0.5));
        assert_eq!(level_conditional(0, 0.0, 1.0, 0.3, 2.0), (0.3, 2.0));
        let (m, v) = grand_mean_conditional(std::iter::empty(), -0.2, 1e-4);
        assert_eq!((m, v), (-0.2, 1e-4));
        let (m, _) = grand_mean_conditional([(1.0, 1.0)], 0.0, 1e12);
        assert!((m - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_seasons_draw_from_prior() {
        let mut rng = chain_rng(2);
        let state = GarchState::new(vec![vec![0.0]], 0.5, GarchParams::new(0.3, 0.1, 0.1), &AswamSettings::default());
        let totals = SeasonTotals::empty(1);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| state.draw_levels(0, &totals, 1.0, true, &mut rng, DrawScale::default()).0[0])
            .collect();
        assert!((mean(&draws) - 0.5).abs() < 0.01);
        assert!((variance(&draws) - 0.3).abs() < 0.01);
    }

    #[test]
    fn log_scale_target_carries_the_jacobian() {
        let mut rng = chain_rng(3);
        let prior = default_prior();
        let state = GarchState::from_prior(&[4, 3, 5], &prior, &AswamSettings::default(), &mut rng);
        for _ in 0..50 {
            let a = [rng.random::<f64>() + 0.01, rng.random::<f64>() + 0.01];
            let b = [rng.random::<f64>() + 0.01, rng.random::<f64>() + 0.01];
            let natural = state.alpha_log_target(b[0], b[1], &prior) - state.alpha_log_target(a[0], a[1], &prior)
                + (b[0] * b[1]).ln()
                - (a[0] * a[1]).ln();
            let la = DVector::from_vec(vec![a[0].ln(), a[1].ln()]);
            let lb = DVector::from_vec(vec![b[0].ln(), b[1].ln()]);
            let logged =
                state.alpha_log_target_log_scale(&lb, &prior) - state.alpha_log_target_log_scale(&la, &prior);
            assert!((natural - logged).abs() < 1e-12);
            let w = (rng.random::<f64>() + 0.01, rng.random::<f64>() + 0.01);
            let natural = state.persistence_log_target(w.1, &prior) - state.persistence_log_target(w.0, &prior)
                + (w.1 / w.0).ln();
            let logged = state.persistence_log_target_log_scale(w.1.ln(), &prior)
                - state.persistence_log_target_log_scale(w.0.ln(), &prior);
            assert!((natural - logged).abs() < 1e-12);
        }
    }

    #[test]
    fn constraints_hold_through_updates() {
        let mut rng = chain_rng(4);
        let prior = default_prior();
        let mut state = GarchState::from_prior(&[6, 6, 6], &prior, &AswamSettings::default(), &mut rng);
        let totals: Vec<SeasonTotals> = (0..3).map(|_| SeasonTotals::empty(6)).collect();
        for g in 0..500 {
            state.update_levels(&totals, 1.0, true, |i| numerics::stream_rng(1, g, 0, i as u64), DrawScale::default());
            state.update_grand_mean(&prior, true, &mut rng, DrawScale::default());
            state.update_alpha(&prior, true, &mut rng);
            state.update_persistence(&prior, true, &mut rng);
            let p = state.params;
            assert!(p.intercept > 0.0 && p.arch >= 0.0 && p.persistence >= 0.0);
        }
    }

    #[test]
    fn stationarity_fraction() {
        assert_eq!(stationarity_probability(&[0.1, 0.2], &[0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(stationarity_probability(&[0.1, 0.6], &[0.3, 0.6]).unwrap(), 0.5);
        assert!(matches!(stationarity_probability(&[], &[]), Err(Error::EmptyDraws)));
    }

    #[test]
    fn ar_single_season_coefficient_is_prior() {
        let mut rng = chain_rng(5);
        let prior = ArPrior::from(&Hyperparameters::default());
        let state = ArState {
            levels: vec![vec![0.7]],
            coefficients: vec![0.0],
            innovation_variance: 0.2,
        };
        let draws: Vec<f64> = (0..100_000)
            .map(|_| state.draw_coefficient(0, &prior, &mut rng, DrawScale::default()))
            .collect();
        assert!(mean(&draws).abs() < 0.01);
        assert!((variance(&draws) - 1.0).abs() < 0.02);
    }

    #[test]
    fn ar_zero_coefficient_prior_level() {
        let mut rng = chain_rng(6);
        let state = ArState {
            levels: vec![vec![5.0, 0.0]],
            coefficients: vec![0.0],
            innovation_variance: 0.3,
        };
        let totals = SeasonTotals::empty(2);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| state.draw_levels(0, &totals, 1.0, &mut rng, DrawScale::default())[1])
            .collect();
        assert!(mean(&draws).abs() < 0.01);
        assert!((variance(&draws) - 0.3).abs() < 0.01);
    }
}
