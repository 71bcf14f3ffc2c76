//! Ingestion and preparation of longitudinal performance records.
//!
//! Raw records are grouped per athlete and placed on a shared `[0, 1]` time
//! axis: an observation's raw time is the number of days since January 1st of
//! the athlete's first recorded year, and every raw time is divided by the
//! largest raw time found in the data. Seasons are calendar years; an
//! observation on a new-year day opens the new season. Responses are centered
//! per athlete.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics;

pub const DEFAULT_SEASON_LENGTH_DAYS: f64 = 365.25;

pub const CSV_COLUMNS: [&str; 7] = [
    "athlete_id",
    "event_date",
    "result_m",
    "sex",
    "birth_date",
    "environment",
    "doped",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    Male,
    Female,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Environment {
    Indoor,
    Outdoor,
}

impl Environment {
    /// Indoor meetings run from November to March.
    pub fn by_month(month: u32) -> Self {
        if month >= 11 || month <= 3 {
            Environment::Indoor
        } else {
            Environment::Outdoor
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub athlete_id: String,
    pub event_date: NaiveDate,
    pub result: f64,
    pub sex: Sex,
    pub birth_date: NaiveDate,
    pub environment: Environment,
    pub doped: bool,
}

/// Content hash of raw records, independent of the covariates a model uses.
/// Two files holding the same records in the same order hash equal.
pub fn records_fingerprint(records: &[RawRecord]) -> String {
    let bytes = serde_json::to_vec(records).expect("records serialize");
    hex::encode(Sha256::digest(&bytes))
}

fn parse_row(fields: &HashMap<&str, &str>) -> std::result::Result<RawRecord, String> {
    let get = |name: &str| -> std::result::Result<&str, String> {
        match fields.get(name).map(|s| s.trim()) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(format!("missing value for `{name}`")),
        }
    };
    let date = |name: &str| -> std::result::Result<NaiveDate, String> {
        let raw = get(name)?;
        NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|_| format!("`{name}` is not a yyyy-mm-dd date: `{raw}`"))
    };
    let athlete_id = get("athlete_id")?.to_string();
    let event_date = date("event_date")?;
    let birth_date = date("birth_date")?;
    let raw_result = get("result_m")?;
    let result: f64 = raw_result
        .parse()
        .map_err(|_| format!("`result_m` is not numeric: `{raw_result}`"))?;
    if !(result > 0.0 && result.is_finite()) {
        return Err(format!("`result_m` must be positive, got {result}"));
    }
    let sex = match get("sex")? {
        "M" | "m" => Sex::Male,
        "F" | "f" => Sex::Female,
        other => return Err(format!("`sex` must be M or F, got `{other}`")),
    };
    let environment = match get("environment")? {
        "I" | "i" => Environment::Indoor,
        "O" | "o" => Environment::Outdoor,
        other => return Err(format!("`environment` must be I or O, got `{other}`")),
    };
    let doped = match get("doped")? {
        "0" => false,
        "1" => true,
        other => return Err(format!("`doped` must be 0 or 1, got `{other}`")),
    };
    if event_date < birth_date {
        return Err("event_date precedes birth_date".into());
    }
    Ok(RawRecord {
        athlete_id,
        event_date,
        result,
        sex,
        birth_date,
        environment,
        doped,
    })
}

/// Parses records from CSV text. `source` only labels error messages.
pub fn parse_records<R: Read>(reader: R) -> Result<Vec<RawRecord>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| Error::Schema(vec![format!("unreadable header: {e}")]))?
        .clone();
    let missing: Vec<String> = CSV_COLUMNS
        .iter()
        .filter(|c| !headers.iter().any(|h| h == **c))
        .map(|c| format!("missing column `{c}`"))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema(missing));
    }
    let mut records = Vec::new();
    let mut problems = Vec::new();
    for row in csv.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let fields: HashMap<&str, &str> = headers.iter().zip(row.iter()).collect();
        match parse_row(&fields) {
            Ok(r) => records.push(r),
            Err(reason) => problems.push(format!("line {line}: {reason}")),
        }
    }
    if problems.is_empty() {
        Ok(records)
    } else {
        Err(Error::Schema(problems))
    }
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<RawRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_records(std::io::BufReader::new(file))
}

pub fn write_records(path: impl AsRef<Path>, records: &[RawRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    w.write_record(CSV_COLUMNS).map_err(|e| Error::io(path, e.into()))?;
    for r in records {
        w.write_record([
            r.athlete_id.clone(),
            r.event_date.format("%Y-%m-%d").to_string(),
            r.result.to_string(),
            match r.sex {
                Sex::Male => "M".into(),
                Sex::Female => "F".into(),
            },
            r.birth_date.format("%Y-%m-%d").to_string(),
            match r.environment {
                Environment::Indoor => "I".into(),
                Environment::Outdoor => "O".into(),
            },
            if r.doped { "1".into() } else { "0".into() },
        ])
        .map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// covariates

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    Sex,
    Age,
    Environment,
    Doping,
}

impl Covariate {
    pub fn name(self) -> &'static str {
        match self {
            Covariate::Sex => "sex",
            Covariate::Age => "age",
            Covariate::Environment => "environment",
            Covariate::Doping => "doping",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "sex" => Ok(Covariate::Sex),
            "age" => Ok(Covariate::Age),
            "environment" | "env" => Ok(Covariate::Environment),
            "doping" => Ok(Covariate::Doping),
            _ => Err(Error::UnknownCovariate(name.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeMode {
    /// Age in years at each observation.
    TimeDependent,
    /// Age in years at the athlete's first recorded result.
    TimeConstant,
}

/// Covariate columns, always in the order sex, age, environment, doping.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub columns: Vec<Covariate>,
    pub age_mode: AgeMode,
}

impl CovariateSpec {
    pub fn new(mut columns: Vec<Covariate>, age_mode: AgeMode) -> Self {
        columns.sort();
        columns.dedup();
        Self { columns, age_mode }
    }

    pub fn from_names<S: AsRef<str>>(names: &[S], age_mode: AgeMode) -> Result<Self> {
        let columns = names
            .iter()
            .map(|n| Covariate::from_name(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(columns, age_mode))
    }

    pub fn none() -> Self {
        Self::new(Vec::new(), AgeMode::TimeDependent)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.columns.iter().map(|c| c.name()).collect()
    }
}

/// Time-invariant facts about an athlete needed to evaluate covariates anywhere on the time axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AthleteProfile {
    pub id: String,
    pub sex: Sex,
    pub birth_date: NaiveDate,
    pub doped: bool,
    /// January 1st of the first recorded year.
    pub career_start: NaiveDate,
    pub first_observation: NaiveDate,
}

fn years_between(from: NaiveDate, to_days: f64) -> f64 {
    to_days / DEFAULT_SEASON_LENGTH_DAYS + 0.0 * from.ordinal() as f64
}

impl AthleteProfile {
    /// Age in years `days` after the career start.
    pub fn age_at(&self, days_since_start: f64) -> f64 {
        let offset = (self.career_start - self.birth_date).num_days() as f64;
        years_between(self.birth_date, offset + days_since_start)
    }

    pub fn date_at(&self, days_since_start: f64) -> NaiveDate {
        self.career_start + Duration::days(days_since_start.floor() as i64)
    }

    /// Covariate row for an observation `days_since_start` into the career.
    pub fn covariate_row(&self, spec: &CovariateSpec, days_since_start: f64, environment: Environment) -> Vec<f64> {
        spec.columns
            .iter()
            .map(|c| match c {
                Covariate::Sex => (self.sex == Sex::Female) as u8 as f64,
                Covariate::Age => match spec.age_mode {
                    AgeMode::TimeDependent => self.age_at(days_since_start),
                    AgeMode::TimeConstant => {
                        self.age_at((self.first_observation - self.career_start).num_days() as f64)
                    }
                },
                Covariate::Environment => (environment == Environment::Outdoor) as u8 as f64,
                Covariate::Doping => self.doped as u8 as f64,
            })
            .collect()
    }
}

/// Builds one covariate row per observation of an athlete.
pub fn build_covariates(
    profile: &AthleteProfile,
    days: &[i64],
    environments: &[Environment],
    spec: &CovariateSpec,
) -> Vec<Vec<f64>> {
    days.iter()
        .zip(environments)
        .map(|(&d, &env)| profile.covariate_row(spec, d as f64, env))
        .collect()
}

// ---------------------------------------------------------------------------
// time axis and seasons

/// Days from `career_start` to January 1st of the `season`-th following year.
pub fn season_start_day(career_start: NaiveDate, season: usize) -> i64 {
    let year = career_start.year() + season as i32;
    let jan1 = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
    (jan1 - career_start).num_days()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AthleteTimeline {
    pub profile: AthleteProfile,
    pub days: Vec<i64>,
    pub times: Vec<f64>,
    pub results: Vec<f64>,
    pub environments: Vec<Environment>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeAxis {
    /// Raw days mapped to t = 1.
    pub divisor: f64,
    pub season_length_days: f64,
    pub athletes: Vec<AthleteTimeline>,
}

impl TimeAxis {
    /// Width of one season on the rescaled axis.
    pub fn amplitude(&self) -> f64 {
        self.season_length_days / self.divisor
    }
}

/// Groups records per athlete (in order of first appearance), sorts them by
/// date and maps them onto the shared `[0, 1]` axis.
pub fn rescale_times(records: &[RawRecord], season_length_days: f64) -> Result<TimeAxis> {
    if records.is_empty() {
        return Err(Error::InvalidDimension("no records".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&RawRecord>> = HashMap::new();
    for r in records {
        groups
            .entry(r.athlete_id.as_str())
            .or_insert_with(|| {
                order.push(r.athlete_id.as_str());
                Vec::new()
            })
            .push(r);
    }
    let mut athletes = Vec::with_capacity(order.len());
    for id in order {
        let mut rows = groups.remove(id).unwrap_or_default();
        rows.sort_by_key(|r| r.event_date);
        let first = rows[0];
        let career_start = NaiveDate::from_ymd_opt(first.event_date.year(), 1, 1).expect("valid year");
        let profile = AthleteProfile {
            id: id.to_string(),
            sex: first.sex,
            birth_date: first.birth_date,
            doped: rows.iter().any(|r| r.doped),
            career_start,
            first_observation: first.event_date,
        };
        athletes.push(AthleteTimeline {
            profile,
            days: rows.iter().map(|r| (r.event_date - career_start).num_days()).collect(),
            times: Vec::new(),
            results: rows.iter().map(|r| r.result).collect(),
            environments: rows.iter().map(|r| r.environment).collect(),
        });
    }
    let max_day = athletes
        .iter()
        .flat_map(|a| a.days.last().copied())
        .max()
        .unwrap_or(0);
    if max_day <= 0 {
        return Err(Error::InvalidDimension(
            "all observations fall on the first day of the career; the time axis is degenerate".into(),
        ));
    }
    let divisor = max_day as f64;
    for a in &mut athletes {
        a.times = a.days.iter().map(|&d| d as f64 / divisor).collect();
    }
    Ok(TimeAxis {
        divisor,
        season_length_days,
        athletes,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeasonAssignment {
    /// 0-based season of each observation.
    pub index: Vec<usize>,
    /// Observations per season, `counts.len()` = number of seasons S_i.
    pub counts: Vec<usize>,
}

/// Seasons are left-closed calendar years `[Jan 1 of year s, Jan 1 of year s+1)`.
pub fn assign_seasons(career_start: NaiveDate, days: &[i64]) -> SeasonAssignment {
    let index: Vec<usize> = days
        .iter()
        .map(|&d| {
            let mut s = 0;
            while season_start_day(career_start, s + 1) <= d {
                s += 1;
            }
            s
        })
        .collect();
    let n_seasons = index.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0; n_seasons];
    for &s in &index {
        counts[s] += 1;
    }
    SeasonAssignment { index, counts }
}

/// Returns the centered responses and their mean.
pub fn center_responses(y: &[f64]) -> (Vec<f64>, f64) {
    if y.is_empty() {
        return (Vec::new(), 0.0);
    }
    let mean = numerics::mean(y);
    (y.iter().map(|v| v - mean).collect(), mean)
}

// ---------------------------------------------------------------------------
// prepared dataset

#[derive(Clone, Debug, PartialEq)]
pub struct AthleteData {
    pub profile: AthleteProfile,
    pub days: Vec<i64>,
    pub times: Vec<f64>,
    /// Responses fed to the sampler (centered when prepared from records).
    pub responses: Vec<f64>,
    /// Mean added back to obtain results in meters.
    pub mean: f64,
    pub seasons: Vec<usize>,
    pub season_counts: Vec<usize>,
    pub covariates: Vec<Vec<f64>>,
}

impl AthleteData {
    pub fn n_obs(&self) -> usize {
        self.times.len()
    }

    pub fn n_seasons(&self) -> usize {
        self.season_counts.len()
    }

    pub fn id(&self) -> &str {
        &self.profile.id
    }
}

/// The sampler's immutable input.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedDataset {
    pub athletes: Vec<AthleteData>,
    pub divisor: f64,
    pub season_length_days: f64,
    pub covariates: CovariateSpec,
}

/// Runs the full preparation pipeline with 365.25-day nominal seasons.
pub fn prepare(records: &[RawRecord], spec: &CovariateSpec) -> Result<PreparedDataset> {
    prepare_with(records, spec, DEFAULT_SEASON_LENGTH_DAYS)
}

pub fn prepare_with(records: &[RawRecord], spec: &CovariateSpec, season_length_days: f64) -> Result<PreparedDataset> {
    let axis = rescale_times(records, season_length_days)?;
    let athletes = axis
        .athletes
        .into_iter()
        .map(|a| {
            let seasons = assign_seasons(a.profile.career_start, &a.days);
            let (responses, mean) = center_responses(&a.results);
            let covariates = build_covariates(&a.profile, &a.days, &a.environments, spec);
            AthleteData {
                profile: a.profile,
                days: a.days,
                times: a.times,
                responses,
                mean,
                seasons: seasons.index,
                season_counts: seasons.counts,
                covariates,
            }
        })
        .collect();
    Ok(PreparedDataset {
        athletes,
        divisor: axis.divisor,
        season_length_days,
        covariates: spec.clone(),
    })
}

impl PreparedDataset {
    pub fn n_athletes(&self) -> usize {
        self.athletes.len()
    }

    pub fn n_obs(&self) -> usize {
        self.athletes.iter().map(|a| a.n_obs()).sum()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.len()
    }

    pub fn amplitude(&self) -> f64 {
        self.season_length_days / self.divisor
    }

    pub fn athlete_index(&self, id: &str) -> Result<usize> {
        self.athletes
            .iter()
            .position(|a| a.profile.id == id)
            .ok_or_else(|| Error::UnknownAthlete(id.to_string()))
    }

    /// Start of season `s` (0-based) of athlete `i` on the rescaled axis.
    pub fn season_start(&self, i: usize, s: usize) -> f64 {
        season_start_day(self.athletes[i].profile.career_start, s) as f64 / self.divisor
    }

    /// Season containing rescaled time `t` for athlete `i` (left-closed boundaries).
    pub fn season_at(&self, i: usize, t: f64) -> usize {
        // absorbs the round trip day -> t -> day so that season starts stay in their season
        let day = t * self.divisor + 1e-6;
        let start = self.athletes[i].profile.career_start;
        let mut s = 0;
        while (season_start_day(start, s + 1) as f64) <= day {
            s += 1;
        }
        s
    }

    /// Covariates of athlete `i` at rescaled time `t`; the environment follows the calendar rule.
    pub fn covariates_at(&self, i: usize, t: f64) -> Vec<f64> {
        let profile = &self.athletes[i].profile;
        let days = t * self.divisor;
        let env = Environment::by_month(profile.date_at(days).month());
        profile.covariate_row(&self.covariates, days, env)
    }

    /// Replaces the responses, keeping every structural field.
    pub fn with_responses(&self, responses: Vec<Vec<f64>>) -> Self {
        let mut out = self.clone();
        for (a, y) in out.athletes.iter_mut().zip(responses) {
            debug_assert_eq!(a.n_obs(), y.len());
            a.responses = y;
        }
        out
    }

    /// Content hash of everything the sampler reads.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.divisor.to_le_bytes());
        h.update(self.season_length_days.to_le_bytes());
        for name in self.covariates.names() {
            h.update(name.as_bytes());
        }
        h.update(format!("{:?}", self.covariates.age_mode).as_bytes());
        for a in &self.athletes {
            h.update(a.profile.id.as_bytes());
            h.update([0u8]);
            h.update(a.mean.to_le_bytes());
            for (k, (&d, &y)) in a.days.iter().zip(&a.responses).enumerate() {
                h.update(d.to_le_bytes());
                h.update(y.to_le_bytes());
                for x in &a.covariates[k] {
                    h.update(x.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }
}

// ---------------------------------------------------------------------------
// descriptive summaries

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub group: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub max: f64,
    pub min: f64,
}

impl fmt::Display for SummaryRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<10} {:>7.2} {:>6.2} {:>7.2} {:>7.2}",
            self.group, self.mean, self.sd, self.max, self.min
        )
    }
}

fn summary_row(group: &str, values: &[f64]) -> Option<SummaryRow> {
    if values.is_empty() {
        return None;
    }
    Some(SummaryRow {
        group: group.to_string(),
        n: values.len(),
        mean: numerics::mean(values),
        sd: if values.len() > 1 { numerics::variance(values).sqrt() } else { 0.0 },
        max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        min: values.iter().cloned().fold(f64::INFINITY, f64::min),
    })
}

/// Mean, sd, max and min of the results overall and per level of each binary covariate.
pub fn summarize(records: &[RawRecord]) -> Vec<SummaryRow> {
    let pick = |f: &dyn Fn(&RawRecord) -> bool| -> Vec<f64> {
        records.iter().filter(|r| f(r)).map(|r| r.result).collect()
    };
    let groups: [(&str, Vec<f64>); 7] = [
        ("Total", pick(&|_| true)),
        ("Women", pick(&|r| r.sex == Sex::Female)),
        ("Men", pick(&|r| r.sex == Sex::Male)),
        ("Not Doped", pick(&|r| !r.doped)),
        ("Doped", pick(&|r| r.doped)),
        ("Indoor", pick(&|r| r.environment == Environment::Indoor)),
        ("Outdoor", pick(&|r| r.environment == Environment::Outdoor)),
    ];
    groups.iter().filter_map(|(g, v)| summary_row(g, v)).collect()
}

pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    w.write_record(["group", "mean", "sd", "max", "min"])
        .map_err(|e| Error::io(path, e.into()))?;
    for r in rows {
        w.write_record([
            r.group.clone(),
            r.mean.to_string(),
            r.sd.to_string(),
            r.max.to_string(),
            r.min.to_string(),
        ])
        .map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "athlete_id,event_date,result_m,sex,birth_date,environment,doped\n";

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn rec(id: &str, day: &str, result: f64) -> RawRecord {
        RawRecord {
            athlete_id: id.into(),
            event_date: date(day),
            result,
            sex: Sex::Male,
            birth_date: date("1980-01-01"),
            environment: Environment::Outdoor,
            doped: false,
        }
    }

    #[test]
    fn parses_well_formed_rows() {
        let text = format!(
            "{HEADER}a,2000-07-01,18.5,M,1980-01-01,O,0\na,2000-02-01,17.9,M,1980-01-01,I,0\nb,2001-06-01,16.0,F,1982-05-05,O,1\n"
        );
        let recs = parse_records(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[2].sex, Sex::Female);
        assert!(recs[2].doped);
        assert_eq!(recs[1].environment, Environment::Indoor);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_records(HEADER.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn bad_rows_are_reported_with_lines() {
        let text = format!("{HEADER}a,2000-07-01,far,M,1980-01-01,O,0\na,2000-07-02,18,X,1980-01-01,O,0\n");
        match parse_records(text.as_bytes()) {
            Err(Error::Schema(problems)) => {
                assert_eq!(problems.len(), 2);
                assert!(problems[0].starts_with("line 2") && problems[0].contains("result_m"));
                assert!(problems[1].starts_with("line 3") && problems[1].contains("sex"));
            }
            other => panic!("expected schema error, got {other:?}"),
        }
        let missing = format!("{HEADER}a,2000-07-01,18.1,M,,O,0\n");
        assert!(matches!(parse_records(missing.as_bytes()), Err(Error::Schema(_))));
        let no_column = "athlete_id,event_date\na,2000-01-01\n";
        match parse_records(no_column.as_bytes()) {
            Err(Error::Schema(p)) => assert!(p.iter().any(|m| m.contains("result_m"))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_athlete_scaling() {
        let recs = vec![rec("a", "2000-01-01", 10.0), rec("a", "2000-04-10", 12.0)];
        let axis = rescale_times(&recs, 365.25).unwrap();
        assert_eq!(axis.divisor, 100.0);
        assert_eq!(axis.athletes[0].times, vec![0.0, 1.0]);
    }

    #[test]
    fn nineteen_year_span_amplitude() {
        // day 6939.75 ~ 19 seasons
        let recs = vec![rec("a", "1996-01-01", 17.0), rec("a", "2014-12-31", 18.0)];
        let axis = rescale_times(&recs, 365.25).unwrap();
        assert!((axis.amplitude() - 365.25 / axis.divisor).abs() < 1e-15);
        assert!((axis.amplitude() - 0.0526).abs() < 1e-3);
    }

    #[test]
    fn seasons_follow_calendar_years() {
        let start = date("2001-01-01");
        let a = assign_seasons(start, &[300, 400]);
        assert_eq!(a.index, vec![0, 1]);
        // day 365 is 2002-01-01: opens season 2
        let b = assign_seasons(start, &[364, 365]);
        assert_eq!(b.index, vec![0, 1]);
        let gap = assign_seasons(start, &[10, 800]);
        assert_eq!(gap.counts, vec![1, 0, 1]);
        let first_year = assign_seasons(start, &[0, 100, 200]);
        assert_eq!(first_year.counts, vec![3]);
    }

    #[test]
    fn centering() {
        let (c, m) = center_responses(&[10.0, 20.0]);
        assert_eq!((c, m), (vec![-5.0, 5.0], 15.0));
        let (c, m) = center_responses(&[17.3]);
        assert_eq!(c, vec![0.0]);
        assert_eq!(m, 17.3);
    }

    #[test]
    fn covariate_columns_and_age() {
        let spec = CovariateSpec::from_names(&["environment", "sex", "age"], AgeMode::TimeDependent).unwrap();
        assert_eq!(spec.names(), vec!["sex", "age", "environment"]);
        assert!(matches!(
            CovariateSpec::from_names(&["height"], AgeMode::TimeDependent),
            Err(Error::UnknownCovariate(_))
        ));
        let recs = vec![rec("a", "2000-07-01", 18.0), rec("a", "2001-07-01", 18.0)];
        let data = prepare(&recs, &spec).unwrap();
        let row = &data.athletes[0].covariates[0];
        assert_eq!(row[0], 0.0);
        assert!((row[1] - 20.5).abs() < 0.01, "age {}", row[1]);
        assert_eq!(row[2], 1.0);
        let constant = CovariateSpec::from_names(&["age"], AgeMode::TimeConstant).unwrap();
        let data = prepare(&recs, &constant).unwrap();
        assert_eq!(data.athletes[0].covariates[0], data.athletes[0].covariates[1]);
    }

    #[test]
    fn prepared_invariants() {
        let recs = vec![
            rec("a", "2000-03-01", 18.0),
            rec("a", "2000-08-01", 18.4),
            rec("b", "2003-06-01", 15.0),
            rec("a", "2002-01-01", 19.0),
            rec("b", "2005-06-01", 16.0),
        ];
        let data = prepare(&recs, &ModelSpecs::m1()).unwrap();
        assert_eq!(data.n_athletes(), 2);
        assert_eq!(data.n_obs(), 5);
        for a in &data.athletes {
            assert!(a.times.windows(2).all(|w| w[0] <= w[1]));
            assert!(a.times.iter().all(|t| (0.0..=1.0).contains(t)));
            assert!(a.responses.iter().sum::<f64>().abs() < 1e-10);
            assert_eq!(a.season_counts.iter().sum::<usize>(), a.n_obs());
        }
        let latest = data
            .athletes
            .iter()
            .flat_map(|a| a.times.iter().cloned())
            .fold(0.0, f64::max);
        assert_eq!(latest, 1.0);
        let a = &data.athletes[0];
        assert_eq!(a.seasons, vec![0, 0, 2]);
        assert_eq!(data.season_at(0, a.times[2]), 2);
        assert_eq!(data.season_start(0, 2), a.times[2]);
        assert_ne!(data.fingerprint(), data.with_responses(vec![vec![0.0; 3], vec![0.0; 2]]).fingerprint());
    }

    #[test]
    fn summaries() {
        let recs = vec![rec("a", "2000-03-01", 10.0), rec("b", "2000-03-01", 20.0)];
        let rows = summarize(&recs);
        assert_eq!(rows[0].group, "Total");
        assert_eq!((rows[0].mean, rows[0].max, rows[0].min), (15.0, 20.0, 10.0));
        let mut mixed = recs.clone();
        mixed.push(RawRecord {
            sex: Sex::Female,
            ..rec("c", "2000-03-01", 14.0)
        });
        let men: Vec<RawRecord> = mixed.iter().filter(|r| r.sex == Sex::Male).cloned().collect();
        let men_row = summarize(&mixed).into_iter().find(|r| r.group == "Men").unwrap();
        let total_of_men = summarize(&men).into_iter().find(|r| r.group == "Total").unwrap();
        assert_eq!(men_row.mean, total_of_men.mean);
        assert_eq!(men_row.sd, total_of_men.sd);
    }

    struct ModelSpecs;
    impl ModelSpecs {
        fn m1() -> CovariateSpec {
            CovariateSpec::new(
                vec![Covariate::Sex, Covariate::Age, Covariate::Environment],
                AgeMode::TimeDependent,
            )
        }
    }
}
