//! Summaries of retained draws: trajectories, next-season predictions, LPML
//! and effective sample sizes.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::{make_knots, SplineBasis};
use crate::config::SeasonalKind;
use crate::dataset::PreparedDataset;
use crate::draws::PosteriorDraws;
use crate::error::{Error, Result};
use crate::numerics::{self, log_sum_exp, quantile_sorted};
use crate::seasonal::variance_after;

/// Default number of grid points for trajectory displays.
pub const DEFAULT_GRID: usize = 1001;

/// Pointwise posterior summary of one athlete's performance curve.
///
/// `mean`, `lower` and `upper` are in meters; the three components are on the
/// centred scale, so `functional + seasonal + regression + offset == mean`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEstimate {
    pub athlete_id: String,
    pub offset: f64,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub functional: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub regression: Vec<f64>,
    pub predicted: Vec<bool>,
}

impl TrajectoryEstimate {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Appends a later segment, typically a prediction.
    pub fn extend(&mut self, other: TrajectoryEstimate) {
        self.times.extend(other.times);
        self.mean.extend(other.mean);
        self.lower.extend(other.lower);
        self.upper.extend(other.upper);
        self.functional.extend(other.functional);
        self.seasonal.extend(other.seasonal);
        self.regression.extend(other.regression);
        self.predicted.extend(other.predicted);
    }
}

fn check_draws(draws: &PosteriorDraws, data: &PreparedDataset) -> Result<()> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let actual = data.fingerprint();
    if draws.fingerprint != actual {
        return Err(Error::FingerprintMismatch {
            stored: draws.fingerprint.clone(),
            actual,
        });
    }
    Ok(())
}

/// Per-draw component values at each time, accumulated into summaries.
struct Accumulator {
    functional: Vec<f64>,
    seasonal: Vec<f64>,
    regression: Vec<f64>,
    totals: Vec<Vec<f64>>,
}

impl Accumulator {
    fn new(t: usize, draws: usize) -> Self {
        Self {
            functional: vec![0.0; t],
            seasonal: vec![0.0; t],
            regression: vec![0.0; t],
            totals: vec![Vec::with_capacity(draws); t],
        }
    }

    fn add(&mut self, k: usize, f: f64, mu: f64, reg: f64) {
        self.functional[k] += f;
        self.seasonal[k] += mu;
        self.regression[k] += reg;
        self.totals[k].push(f + mu + reg);
    }

    fn finish(self, athlete_id: String, offset: f64, times: Vec<f64>, predicted: bool, draws: usize) -> TrajectoryEstimate {
        let g = draws as f64;
        let functional: Vec<f64> = self.functional.iter().map(|v| v / g).collect();
        let seasonal: Vec<f64> = self.seasonal.iter().map(|v| v / g).collect();
        let regression: Vec<f64> = self.regression.iter().map(|v| v / g).collect();
        let mean = (0..times.len())
            .map(|k| functional[k] + seasonal[k] + regression[k] + offset)
            .collect();
        let (mut lower, mut upper) = (Vec::new(), Vec::new());
        for totals in &self.totals {
            let s = numerics::sorted(totals);
            lower.push(quantile_sorted(&s, 0.025) + offset);
            upper.push(quantile_sorted(&s, 0.975) + offset);
        }
        TrajectoryEstimate {
            athlete_id,
            offset,
            predicted: vec![predicted; times.len()],
            times,
            mean,
            lower,
            upper,
            functional,
            seasonal,
            regression,
        }
    }
}

/// End of athlete `i`'s observed career on the rescaled axis, capped at 1.
pub fn career_end(data: &PreparedDataset, i: usize) -> f64 {
    data.season_start(i, data.athletes[i].n_seasons()).min(1.0)
}

/// Posterior mean and 95% band of `g_i(t)` on `grid` equispaced points from 0
/// to the end of the athlete's last observed season.
pub fn estimate_trajectory(draws: &PosteriorDraws, data: &PreparedDataset, athlete: &str, grid: usize) -> Result<TrajectoryEstimate> {
    if grid < 2 {
        return Err(Error::InvalidDimension(format!("grid needs at least 2 points, got {grid}")));
    }
    let i = data.athlete_index(athlete)?;
    check_draws(draws, data)?;
    let basis = make_knots(draws.layout.df, 3, 0.0, 1.0)?;
    let end = career_end(data, i);
    let times: Vec<f64> = (0..grid).map(|k| end * k as f64 / (grid - 1) as f64).collect();
    let last = data.athletes[i].n_seasons() - 1;
    let rows: Vec<(usize, Vec<f64>, usize, Vec<f64>)> = times
        .iter()
        .map(|&t| {
            let (first, b) = basis.eval_nonzero(t)?;
            Ok((first, b, data.season_at(i, t).min(last), data.covariates_at(i, t)))
        })
        .collect::<Result<_>>()?;
    let mut acc = Accumulator::new(times.len(), draws.len());
    for d in 0..draws.len() {
        let theta = draws.theta(d, i);
        let levels = draws.levels(d, i);
        let beta = draws.beta(d);
        for (k, (first, b, s, x)) in rows.iter().enumerate() {
            let f: f64 = b.iter().zip(&theta[*first..]).map(|(b, c)| b * c).sum();
            let reg: f64 = x.iter().zip(beta).map(|(x, b)| x * b).sum();
            acc.add(k, f, levels[*s], reg);
        }
    }
    Ok(acc.finish(athlete.to_string(), data.athletes[i].mean, times, false, draws.len()))
}

/// Basis for evaluating the curve at `t`, extended past 1 when needed. New
/// coefficients repeat the last one.
fn basis_covering(p: usize, end: f64) -> Result<SplineBasis> {
    let basis = make_knots(p, 3, 0.0, 1.0)?;
    Ok(if end > 1.0 { basis.extended_right(end - 1.0) } else { basis })
}

fn padded(theta: &[f64], len: usize) -> Vec<f64> {
    let mut out = theta.to_vec();
    let last = *theta.last().expect("non-empty coefficients");
    out.resize(len, last);
    out
}

/// Draws the level of the season after athlete `i`'s last one for draw `d`.
pub fn next_level<R: rand::Rng + ?Sized>(draws: &PosteriorDraws, d: usize, i: usize, rng: &mut R) -> (f64, f64) {
    let levels = draws.levels(d, i);
    match draws.layout.seasonal {
        SeasonalKind::Garch => {
            let m = draws.grand_mean(d).expect("garch draws");
            let params = draws.garch_params(d).expect("garch draws");
            let shocks: Vec<f64> = levels.iter().map(|mu| mu - m).collect();
            let h = variance_after(&shocks, &params);
            (m + h.sqrt() * numerics::std_normal(rng), h)
        }
        SeasonalKind::Ar => {
            let rho = draws.ar_coefficient(d, i).expect("ar draws");
            let var = draws.innovation_variance(d).expect("ar draws");
            let prev = levels.last().copied().unwrap_or(0.0);
            (rho * prev + var.sqrt() * numerics::std_normal(rng), var)
        }
    }
}

/// Trajectory over the season after athlete `i`'s last observed one, on
/// `grid` points covering that season left-closed. Random draws use streams
/// keyed by `seed`, so the result is reproducible.
pub fn predict_next_season(
    draws: &PosteriorDraws,
    data: &PreparedDataset,
    athlete: &str,
    grid: usize,
    seed: u64,
) -> Result<TrajectoryEstimate> {
    if grid < 1 {
        return Err(Error::InvalidDimension("prediction grid is empty".into()));
    }
    let i = data.athlete_index(athlete)?;
    check_draws(draws, data)?;
    let next = data.athletes[i].n_seasons();
    let start = data.season_start(i, next);
    let end = data.season_start(i, next + 1);
    let times: Vec<f64> = (0..grid).map(|k| start + (end - start) * k as f64 / grid as f64).collect();
    let basis = basis_covering(draws.layout.df, times[grid - 1])?;
    let rows: Vec<(usize, Vec<f64>, Vec<f64>)> = times
        .iter()
        .map(|&t| {
            let (first, b) = basis.eval_nonzero(t)?;
            Ok((first, b, data.covariates_at(i, t)))
        })
        .collect::<Result<_>>()?;
    let mut acc = Accumulator::new(times.len(), draws.len());
    for d in 0..draws.len() {
        let theta = padded(draws.theta(d, i), basis.df());
        let mut rng = numerics::stream_rng(seed, d as u64, 0x9e3d, i as u64);
        let (level, _) = next_level(draws, d, i, &mut rng);
        let beta = draws.beta(d);
        for (k, (first, b, x)) in rows.iter().enumerate() {
            let f: f64 = b.iter().zip(&theta[*first..]).map(|(b, c)| b * c).sum();
            let reg: f64 = x.iter().zip(beta).map(|(x, b)| x * b).sum();
            acc.add(k, f, level, reg);
        }
    }
    Ok(acc.finish(athlete.to_string(), data.athletes[i].mean, times, true, draws.len()))
}

/// CPO of one observation from its per-draw log densities, in log space.
/// `None` when any density is not finite.
pub fn log_cpo(log_densities: &[f64]) -> Option<f64> {
    if log_densities.is_empty() || log_densities.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let neg: Vec<f64> = log_densities.iter().map(|v| -v).collect();
    Some((log_densities.len() as f64).ln() - log_sum_exp(&neg))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpmlReport {
    pub model: String,
    pub lpml: f64,
    pub n_obs: usize,
    /// (athlete index, observation index) pairs left out of the sum.
    pub flagged: Vec<(usize, usize)>,
    #[serde(skip)]
    pub log_cpo: Vec<Vec<f64>>,
}

/// Log pseudo-marginal likelihood with harmonic-mean CPO estimates.
pub fn compute_lpml(draws: &PosteriorDraws, data: &PreparedDataset) -> Result<LpmlReport> {
    check_draws(draws, data)?;
    let basis = make_knots(draws.layout.df, 3, 0.0, 1.0)?;
    let mut lpml = 0.0;
    let mut flagged = Vec::new();
    let mut all = Vec::with_capacity(data.n_athletes());
    for (i, a) in data.athletes.iter().enumerate() {
        let rows: Vec<(usize, Vec<f64>)> = a.times.iter().map(|&t| basis.eval_nonzero(t)).collect::<Result<_>>()?;
        let mut per_obs = vec![Vec::with_capacity(draws.len()); a.n_obs()];
        for d in 0..draws.len() {
            let theta = draws.theta(d, i);
            let levels = draws.levels(d, i);
            let beta = draws.beta(d);
            let var = draws.error_variance[d];
            for (j, (first, b)) in rows.iter().enumerate() {
                let f: f64 = b.iter().zip(&theta[*first..]).map(|(b, c)| b * c).sum();
                let reg: f64 = a.covariates[j].iter().zip(beta).map(|(x, b)| x * b).sum();
                let mean = f + levels[a.seasons[j]] + reg;
                per_obs[j].push(numerics::normal_logpdf(a.responses[j], mean, var));
            }
        }
        let mut cpos = Vec::with_capacity(a.n_obs());
        for (j, ld) in per_obs.iter().enumerate() {
            match log_cpo(ld) {
                Some(v) => {
                    lpml += v;
                    cpos.push(v);
                }
                None => {
                    flagged.push((i, j));
                    cpos.push(f64::NAN);
                }
            }
        }
        all.push(cpos);
    }
    Ok(LpmlReport {
        model: draws.config.variant.map(|v| v.to_string()).unwrap_or_else(|| "custom".into()),
        lpml,
        n_obs: data.n_obs(),
        flagged,
        log_cpo: all,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ess {
    Value(f64),
    /// The chain never moved; no autocorrelation can be estimated.
    Degenerate,
}

impl Ess {
    pub fn value(self) -> Option<f64> {
        match self {
            Ess::Value(v) => Some(v),
            Ess::Degenerate => None,
        }
    }
}

pub const MIN_ESS_DRAWS: usize = 10;

/// Effective sample size with Geyer's initial positive sequence, capped at the
/// number of draws.
pub fn compute_ess(values: &[f64]) -> Result<Ess> {
    let n = values.len();
    if n < MIN_ESS_DRAWS {
        return Err(Error::TooFewDraws {
            needed: MIN_ESS_DRAWS,
            got: n,
        });
    }
    let m = numerics::mean(values);
    let centred: Vec<f64> = values.iter().map(|v| v - m).collect();
    let autocov = |lag: usize| centred[..n - lag].iter().zip(&centred[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let gamma0 = autocov(0);
    if !(gamma0 > f64::EPSILON * m.abs().max(1.0) * 1e-6) {
        return Ok(Ess::Degenerate);
    }
    let mut tau = -gamma0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = autocov(lag) + autocov(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    let ess = if tau > 0.0 { n as f64 * gamma0 / tau } else { n as f64 };
    Ok(Ess::Value(ess.min(n as f64)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub ess: Option<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl std::fmt::Display for CoefficientSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ess = self.ess.map_or_else(|| "-".to_string(), |e| format!("{e:.0}"));
        write!(
            f,
            "{:<12} {:>9.4} {:>9.4} {:>7} ({:.4}, {:.4})",
            self.name, self.mean, self.sd, ess, self.lower, self.upper
        )
    }
}

pub fn summarize_values(name: &str, values: &[f64]) -> CoefficientSummary {
    let sorted = numerics::sorted(values);
    CoefficientSummary {
        name: name.to_string(),
        mean: numerics::mean(values),
        sd: if values.len() > 1 { numerics::variance(values).sqrt() } else { 0.0 },
        ess: compute_ess(values).ok().and_then(Ess::value),
        lower: quantile_sorted(&sorted, 0.025),
        upper: quantile_sorted(&sorted, 0.975),
    }
}

/// Potential scale reduction of equally long chains (between- against
/// within-chain variance). `None` with fewer than two chains or two draws.
pub fn potential_scale_reduction(chains: &[Vec<f64>]) -> Option<f64> {
    let n = chains.first()?.len();
    if chains.len() < 2 || n < 2 || chains.iter().any(|c| c.len() != n) {
        return None;
    }
    let means: Vec<f64> = chains.iter().map(|c| numerics::mean(c)).collect();
    let within = numerics::mean(&chains.iter().map(|c| numerics::variance(c)).collect::<Vec<_>>());
    let between_over_n = numerics::variance(&means);
    let pooled = (n as f64 - 1.0) / n as f64 * within + between_over_n;
    (within > 0.0).then(|| (pooled / within).sqrt())
}

/// One row per regression coefficient.
pub fn summarize_coefficients(draws: &PosteriorDraws) -> Result<Vec<CoefficientSummary>> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    Ok(draws
        .layout
        .covariates
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let values: Vec<f64> = (0..draws.len()).map(|d| draws.beta(d)[c]).collect();
            summarize_values(name, &values)
        })
        .collect())
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

pub const TRAJECTORY_COLUMNS: [&str; 9] = [
    "athlete_id",
    "t",
    "mean_m",
    "lo95_m",
    "hi95_m",
    "f_component",
    "mu_component",
    "reg_component",
    "predicted",
];

pub fn write_trajectories(path: impl AsRef<Path>, estimates: &[TrajectoryEstimate]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    let fail = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    w.write_record(TRAJECTORY_COLUMNS).map_err(fail)?;
    for e in estimates {
        for k in 0..e.len() {
            w.write_record([
                e.athlete_id.clone(),
                e.times[k].to_string(),
                e.mean[k].to_string(),
                e.lower[k].to_string(),
                e.upper[k].to_string(),
                e.functional[k].to_string(),
                e.seasonal[k].to_string(),
                e.regression[k].to_string(),
                u8::from(e.predicted[k]).to_string(),
            ])
            .map_err(fail)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_coefficients(path: impl AsRef<Path>, rows: &[CoefficientSummary]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut text = String::from("coefficient,mean,sd,ess,lo95,hi95\n");
    for r in rows {
        let ess = r.ess.map_or_else(String::new, |e| e.to_string());
        text.push_str(&format!("{},{},{},{},{},{}\n", r.name, r.mean, r.sd, ess, r.lower, r.upper));
    }
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ModelConfig, ModelVariant, RunSettings};
    use crate::dataset::{prepare, Environment, RawRecord, Sex};
    use crate::draws::Layout;
    use crate::numerics::chain_rng;
    use chrono::NaiveDate;
    use rand::Rng;

    fn records() -> Vec<RawRecord> {
        let mut out = Vec::new();
        for (a, base, years) in [("a", 17.0, 2000..2005), ("b", 15.0, 2002..2004)] {
            for year in years {
                for month in [1, 6, 8] {
                    out.push(RawRecord {
                        athlete_id: a.into(),
                        event_date: NaiveDate::from_ymd_opt(year, month, 15).unwrap(),
                        result: base + 0.2 * (year - 2000) as f64 - 0.01 * month as f64,
                        sex: Sex::Male,
                        birth_date: NaiveDate::from_ymd_opt(1980, 1, 1).unwrap(),
                        environment: Environment::by_month(month),
                        doped: false,
                    });
                }
            }
        }
        out
    }

    fn fitted(variant: ModelVariant) -> (PosteriorDraws, PreparedDataset) {
        let mut c = ModelConfig::for_variant(variant);
        c.df = 8;
        c.variant = None;
        c.run = RunSettings {
            iterations: 60,
            burn_in: 0.5,
            thin: 1,
            seed: 3,
        };
        let data = prepare(&records(), &c.covariates).unwrap();
        (crate::sampler::run_chain(&data, &c).unwrap(), data)
    }

    /// Draws whose every component is chosen by hand.
    fn handmade(data: &PreparedDataset, n: usize, fill: impl Fn(usize, &mut PosteriorDraws)) -> PosteriorDraws {
        let c = ModelConfig::for_variant(ModelVariant::M1);
        let layout = Layout {
            athlete_ids: data.athletes.iter().map(|a| a.profile.id.clone()).collect(),
            df: 8,
            seasons: data.athletes.iter().map(|a| a.n_seasons()).collect(),
            covariates: c.covariates.names().iter().map(|s| s.to_string()).collect(),
            seasonal: SeasonalKind::Garch,
        };
        let mut d = PosteriorDraws::new(layout.clone(), c, data.fingerprint());
        for g in 0..n {
            d.iterations.push(g + 1);
            d.theta.push(vec![0.0; 8 * layout.n_athletes()]);
            d.levels.push(vec![0.0; layout.n_levels()]);
            d.seasonal.push(vec![0.0, 0.1, 0.0, 0.0]);
            d.regression.push(vec![0.0; layout.r() + 1]);
            d.error_variance.push(1.0);
            d.truncation.push(1);
            fill(g, &mut d);
        }
        d
    }

    #[test]
    fn bands_bracket_the_mean_and_components_add_up() {
        let (draws, data) = fitted(ModelVariant::M1);
        let e = estimate_trajectory(&draws, &data, "a", 101).unwrap();
        assert_eq!(e.times[0], 0.0);
        assert!(e.times.windows(2).all(|w| w[0] < w[1]));
        for k in 0..e.len() {
            assert!(e.lower[k] <= e.mean[k] && e.mean[k] <= e.upper[k]);
            let sum = e.functional[k] + e.seasonal[k] + e.regression[k] + e.offset;
            assert!((sum - e.mean[k]).abs() < 1e-10);
        }
        // the longest career reaches the end of the axis
        assert!((e.times[100] - 1.0).abs() < 1e-12);
        let short = estimate_trajectory(&draws, &data, "b", 11).unwrap();
        assert!(*short.times.last().unwrap() < 1.0);
    }

    #[test]
    fn identical_draws_collapse_the_bands() {
        let data = prepare(&records(), &ModelVariant::M1.covariates()).unwrap();
        let draws = handmade(&data, 5, |_, d| {
            let last = d.theta.len() - 1;
            d.theta[last][3] = 0.7;
            d.regression[last][0] = -0.2;
        });
        let e = estimate_trajectory(&draws, &data, "a", 21).unwrap();
        for k in 0..e.len() {
            assert!((e.upper[k] - e.mean[k]).abs() < 1e-12 && (e.mean[k] - e.lower[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn seasonal_levels_alone_give_a_step_function() {
        let data = prepare(&records(), &ModelVariant::M1.covariates()).unwrap();
        let draws = handmade(&data, 3, |g, d| {
            let last = d.levels.len() - 1;
            for (s, v) in d.levels[last].iter_mut().enumerate() {
                *v = s as f64 + g as f64;
            }
        });
        let e = estimate_trajectory(&draws, &data, "a", 201).unwrap();
        let i = data.athlete_index("a").unwrap();
        let ybar = data.athletes[i].mean;
        for k in 0..e.len() {
            let s = data.season_at(i, e.times[k]).min(4) as f64;
            assert!((e.mean[k] - (s + 1.0 + ybar)).abs() < 1e-12);
            assert_eq!(e.functional[k], 0.0);
        }
    }

    #[test]
    fn single_draw_equals_direct_evaluation() {
        let (full, data) = fitted(ModelVariant::M1);
        let mut one = full.clone();
        for family in [&mut one.theta, &mut one.levels, &mut one.seasonal, &mut one.regression] {
            family.truncate(1);
        }
        one.iterations.truncate(1);
        one.error_variance.truncate(1);
        one.truncation.truncate(1);
        let e = estimate_trajectory(&one, &data, "a", 31).unwrap();
        let basis = make_knots(8, 3, 0.0, 1.0).unwrap();
        let i = 0;
        for k in 0..e.len() {
            let t = e.times[k];
            let f = basis.eval_function(one.theta(0, i), t).unwrap();
            let mu = one.levels(0, i)[data.season_at(i, t).min(4)];
            let reg: f64 = data.covariates_at(i, t).iter().zip(one.beta(0)).map(|(x, b)| x * b).sum();
            assert!((e.mean[k] - (f + mu + reg + data.athletes[i].mean)).abs() < 1e-10);
        }
    }

    #[test]
    fn trajectory_errors() {
        let (draws, data) = fitted(ModelVariant::M1);
        assert!(matches!(estimate_trajectory(&draws, &data, "zz", 10), Err(Error::UnknownAthlete(_))));
        assert!(matches!(estimate_trajectory(&draws, &data, "a", 1), Err(Error::InvalidDimension(_))));
        let other = data.with_responses(data.athletes.iter().map(|a| vec![0.0; a.n_obs()]).collect());
        assert!(matches!(
            estimate_trajectory(&draws, &other, "a", 10),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn prediction_follows_the_last_season() {
        for variant in [ModelVariant::M1, ModelVariant::M3] {
            let (draws, data) = fitted(variant);
            for id in ["a", "b"] {
                let i = data.athlete_index(id).unwrap();
                let p = predict_next_season(&draws, &data, id, 20, 5).unwrap();
                assert!(p.predicted.iter().all(|&f| f));
                let s = data.athletes[i].n_seasons();
                assert_eq!(p.times[0], data.season_start(i, s));
                assert!(p.times.iter().all(|&t| data.season_at(i, t) == s));
                assert!(p.lower.iter().zip(&p.upper).all(|(l, u)| l <= u));
                assert_eq!(p, predict_next_season(&draws, &data, id, 20, 5).unwrap());
            }
        }
    }

    #[test]
    fn homoskedastic_prediction_variance_is_the_intercept() {
        let data = prepare(&records(), &ModelVariant::M1.covariates()).unwrap();
        let draws = handmade(&data, 1, |_, d| {
            d.seasonal[0] = vec![0.3, 0.25, 0.0, 0.0];
            let last = d.levels.len() - 1;
            d.levels[last].iter_mut().for_each(|v| *v = 5.0);
        });
        let mut rng = chain_rng(4);
        let sims: Vec<f64> = (0..200_000)
            .map(|_| {
                let (lv, h) = next_level(&draws, 0, 0, &mut rng);
                assert_eq!(h, 0.25);
                lv
            })
            .collect();
        assert!((numerics::mean(&sims) - 0.3).abs() < 0.005);
        assert!((numerics::variance(&sims) / 0.25 - 1.0).abs() < 0.02);
    }

    #[test]
    fn tiny_variance_prediction_sits_on_the_grand_mean() {
        let data = prepare(&records(), &ModelVariant::M1.covariates()).unwrap();
        let draws = handmade(&data, 10, |_, d| {
            let last = d.seasonal.len() - 1;
            d.seasonal[last] = vec![-0.4, 1e-14, 0.0, 0.0];
        });
        let p = predict_next_season(&draws, &data, "b", 5, 1).unwrap();
        let ybar = data.athletes[data.athlete_index("b").unwrap()].mean;
        for k in 0..p.len() {
            assert!((p.seasonal[k] + 0.4).abs() < 1e-6);
            assert!((p.mean[k] - ybar + 0.4).abs() < 1e-6);
        }
    }

    #[test]
    fn simulated_shock_variance_matches_mean_conditional_variance() {
        let (draws, _) = fitted(ModelVariant::M1);
        let mut rng = chain_rng(8);
        let mut shocks = Vec::new();
        let mut hs = Vec::new();
        for _ in 0..400 {
            for d in 0..draws.len() {
                let (lv, h) = next_level(&draws, d, 0, &mut rng);
                shocks.push(lv - draws.grand_mean(d).unwrap());
                hs.push(h);
            }
        }
        let var = shocks.iter().map(|z| z * z).sum::<f64>() / shocks.len() as f64;
        let expected = numerics::mean(&hs);
        // shocks per draw are independent given h; 4σ Monte Carlo band on E[z²]
        let fourth = hs.iter().map(|h| 3.0 * h * h).sum::<f64>() / hs.len() as f64;
        let se = ((fourth - expected * expected) / shocks.len() as f64).sqrt();
        assert!((var - expected).abs() < 4.0 * se, "{var} vs {expected} ± {se}");
    }

    #[test]
    fn prediction_past_the_axis_extends_the_basis() {
        let (draws, data) = fitted(ModelVariant::M1);
        let i = data.athlete_index("a").unwrap();
        let p = predict_next_season(&draws, &data, "a", 10, 2).unwrap();
        assert!(data.season_start(i, data.athletes[i].n_seasons()) >= 1.0 - 1e-9);
        assert!(p.times.iter().all(|&t| t >= 1.0 - 1e-9));
        assert!(p.mean.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn harmonic_mean_by_hand() {
        let d: f64 = 0.2;
        let cpo = log_cpo(&[d.ln(), (3.0 * d).ln()]).unwrap().exp();
        assert!((cpo - 1.5 * d).abs() < 1e-15);
        let c: f64 = 0.37;
        assert!((log_cpo(&[c.ln(); 7]).unwrap() - c.ln()).abs() < 1e-15);
        assert_eq!(log_cpo(&[0.0, f64::NEG_INFINITY]), None);
    }

    #[test]
    fn log_space_matches_direct_evaluation() {
        let mut rng = chain_rng(11);
        for _ in 0..50 {
            let dens: Vec<f64> = (0..40).map(|_| rng.random_range(0.05..2.0)).collect();
            let direct = 1.0 / (dens.iter().map(|d| 1.0 / d).sum::<f64>() / dens.len() as f64);
            let logs: Vec<f64> = dens.iter().map(|d| d.ln()).collect();
            assert!((log_cpo(&logs).unwrap() - direct.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn lpml_is_deterministic_and_counts_everything() {
        let (draws, data) = fitted(ModelVariant::M1);
        let a = compute_lpml(&draws, &data).unwrap();
        let b = compute_lpml(&draws, &data).unwrap();
        assert_eq!(a.lpml.to_bits(), b.lpml.to_bits());
        assert!(a.flagged.is_empty());
        assert_eq!(a.n_obs, data.n_obs());
        let total: f64 = a.log_cpo.iter().flatten().sum();
        assert!((total - a.lpml).abs() < 1e-9);
        assert_eq!(a.model, "custom");
    }

    #[test]
    fn lpml_with_constant_likelihood() {
        let data = prepare(&records(), &ModelVariant::M1.covariates()).unwrap();
        // zero mean, unit variance: every density is φ(y) in every draw
        let draws = handmade(&data, 4, |_, _| {});
        let report = compute_lpml(&draws, &data).unwrap();
        let expected: f64 = data
            .athletes
            .iter()
            .flat_map(|a| a.responses.iter())
            .map(|y| numerics::normal_logpdf(*y, 0.0, 1.0))
            .sum();
        assert!((report.lpml - expected).abs() < 1e-10);
    }

    #[test]
    fn lpml_flags_non_finite_likelihoods() {
        let data = prepare(&records(), &ModelVariant::M1.covariates()).unwrap();
        let draws = handmade(&data, 3, |g, d| {
            if g == 1 {
                d.error_variance[1] = 0.0;
            }
        });
        let report = compute_lpml(&draws, &data).unwrap();
        assert!(!report.flagged.is_empty());
        assert!(report.lpml.is_finite());
    }

    #[test]
    fn ess_of_independent_draws() {
        let mut rng = chain_rng(5);
        let x: Vec<f64> = (0..4000).map(|_| numerics::std_normal(&mut rng)).collect();
        let ess = compute_ess(&x).unwrap().value().unwrap();
        assert!((ess / 4000.0 - 1.0).abs() < 0.15, "{ess}");
        assert!(ess <= 4000.0);
    }

    #[test]
    fn ess_of_ar1_draws() {
        let mut rng = chain_rng(6);
        let n = 50_000;
        let mut x = Vec::with_capacity(n);
        let mut prev = 0.0;
        for _ in 0..n {
            prev = 0.9 * prev + numerics::std_normal(&mut rng);
            x.push(prev);
        }
        let ess = compute_ess(&x).unwrap().value().unwrap();
        let expected = n as f64 * 0.1 / 1.9;
        assert!((ess / expected - 1.0).abs() < 0.25, "{ess} vs {expected}");
    }

    #[test]
    fn ess_edge_cases() {
        assert_eq!(compute_ess(&[1.5; 20]).unwrap(), Ess::Degenerate);
        assert!(matches!(compute_ess(&[1.0; 9]), Err(Error::TooFewDraws { needed: 10, got: 9 })));
        // alternating chains are capped at the draw count
        let alt: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(compute_ess(&alt).unwrap().value().unwrap() <= 100.0);
    }

    #[test]
    fn coefficient_summaries() {
        let mut rng = chain_rng(9);
        let values: Vec<f64> = (0..20_000).map(|_| 2.0 + numerics::std_normal(&mut rng)).collect();
        let row = summarize_values("sex", &values);
        let median = quantile_sorted(&numerics::sorted(&values), 0.5);
        assert!((row.mean - median).abs() < 0.03);
        assert!(values.contains(&row.lower) && values.contains(&row.upper));
        assert!((row.sd - 1.0).abs() < 0.03);

        let (draws, _) = fitted(ModelVariant::M1);
        let rows = summarize_coefficients(&draws).unwrap();
        assert_eq!(rows.iter().map(|r| r.name.as_str()).collect::<Vec<_>>(), ["sex", "age", "environment"]);
        assert!(rows.iter().all(|r| r.lower <= r.upper));
    }

    #[test]
    fn exports() {
        let (draws, data) = fitted(ModelVariant::M1);
        let dir = tempfile::tempdir().unwrap();
        let mut e = estimate_trajectory(&draws, &data, "b", 5).unwrap();
        e.extend(predict_next_season(&draws, &data, "b", 3, 0).unwrap());
        let path = dir.path().join("traj.csv");
        write_trajectories(&path, &[e]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_COLUMNS.join(","));
        assert_eq!(lines.len(), 9);
        let flags: Vec<&str> = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap()).collect();
        assert_eq!(flags, ["0", "0", "0", "0", "0", "1", "1", "1"]);
        let path = dir.path().join("coef.csv");
        write_coefficients(&path, &summarize_coefficients(&draws).unwrap()).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 4);
    }

    #[test]
    fn scale_reduction_near_one_for_agreeing_chains() {
        let mut rng = chain_rng(3);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..2000).map(|_| numerics::std_normal(&mut rng)).collect())
            .collect();
        let r = potential_scale_reduction(&chains).unwrap();
        assert!((r - 1.0).abs() < 0.01, "{r}");
        let shifted = vec![chains[0].clone(), chains[1].iter().map(|v| v + 3.0).collect()];
        assert!(potential_scale_reduction(&shifted).unwrap() > 1.5);
        assert!(potential_scale_reduction(&chains[..1]).is_none());
    }
}
