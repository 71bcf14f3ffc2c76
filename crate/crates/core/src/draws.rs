//! Retained posterior draws and their on-disk layout.
//!
//! A draws directory holds `manifest.json` plus one CSV per parameter family.
//! Each CSV row is one retained sweep, led by its iteration number.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, SeasonalKind};
use crate::error::{Error, Result};
use crate::seasonal::GarchParams;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

/// Dimensions needed to interpret a draw row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub athlete_ids: Vec<String>,
    pub df: usize,
    pub seasons: Vec<usize>,
    pub covariates: Vec<String>,
    pub seasonal: SeasonalKind,
}

impl Layout {
    pub fn n_athletes(&self) -> usize {
        self.athlete_ids.len()
    }

    pub fn r(&self) -> usize {
        self.covariates.len()
    }

    pub fn level_offset(&self, i: usize) -> usize {
        self.seasons[..i].iter().sum()
    }

    pub fn n_levels(&self) -> usize {
        self.seasons.iter().sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub alpha_acceptance: Option<f64>,
    pub persistence_acceptance: Option<f64>,
    pub level_acceptance: Option<f64>,
    /// Post-burn-in sweeps spent at each truncation level.
    pub k_histogram: BTreeMap<usize, usize>,
}

impl ChainDiagnostics {
    pub fn modal_k(&self) -> Option<usize> {
        self.k_histogram
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(k, _)| *k)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraws {
    pub layout: Layout,
    pub config: ModelConfig,
    pub fingerprint: String,
    pub iterations: Vec<usize>,
    /// θ of every athlete, concatenated.
    pub theta: Vec<Vec<f64>>,
    /// μ of every athlete and season, concatenated.
    pub levels: Vec<Vec<f64>>,
    /// GARCH: m, α0, α1, ϖ. AR: σ_μ², then ρ_i per athlete.
    pub seasonal: Vec<Vec<f64>>,
    /// β followed by σ_β^{-2}.
    pub regression: Vec<Vec<f64>>,
    /// ψ²
    pub error_variance: Vec<f64>,
    pub truncation: Vec<usize>,
    pub diagnostics: ChainDiagnostics,
}

impl PosteriorDraws {
    pub fn new(layout: Layout, config: ModelConfig, fingerprint: String) -> Self {
        Self {
            layout,
            config,
            fingerprint,
            iterations: Vec::new(),
            theta: Vec::new(),
            levels: Vec::new(),
            seasonal: Vec::new(),
            regression: Vec::new(),
            error_variance: Vec::new(),
            truncation: Vec::new(),
            diagnostics: ChainDiagnostics::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn theta(&self, d: usize, i: usize) -> &[f64] {
        let p = self.layout.df;
        &self.theta[d][i * p..(i + 1) * p]
    }

    pub fn levels(&self, d: usize, i: usize) -> &[f64] {
        let o = self.layout.level_offset(i);
        &self.levels[d][o..o + self.layout.seasons[i]]
    }

    pub fn beta(&self, d: usize) -> &[f64] {
        &self.regression[d][..self.layout.r()]
    }

    pub fn beta_precision(&self, d: usize) -> f64 {
        self.regression[d][self.layout.r()]
    }

    pub fn grand_mean(&self, d: usize) -> Option<f64> {
        (self.layout.seasonal == SeasonalKind::Garch).then(|| self.seasonal[d][0])
    }

    pub fn garch_params(&self, d: usize) -> Option<GarchParams> {
        (self.layout.seasonal == SeasonalKind::Garch).then(|| {
            let row = &self.seasonal[d];
            GarchParams::new(row[1], row[2], row[3])
        })
    }

    pub fn innovation_variance(&self, d: usize) -> Option<f64> {
        (self.layout.seasonal == SeasonalKind::Ar).then(|| self.seasonal[d][0])
    }

    pub fn ar_coefficient(&self, d: usize, i: usize) -> Option<f64> {
        (self.layout.seasonal == SeasonalKind::Ar).then(|| self.seasonal[d][1 + i])
    }

    /// One column of a family across draws, e.g. `("seasonal", "alpha1")`.
    pub fn column(&self, family: &str, name: &str) -> Option<Vec<f64>> {
        let columns = self.columns(family)?;
        let idx = columns.iter().position(|c| c == name)?;
        let rows = match family {
            "theta" => &self.theta,
            "mu" => &self.levels,
            "seasonal" => &self.seasonal,
            "regression" => &self.regression,
            "error" => return Some(self.error_variance.clone()),
            "truncation" => return Some(self.truncation.iter().map(|&k| k as f64).collect()),
            _ => return None,
        };
        Some(rows.iter().map(|r| r[idx]).collect())
    }

    pub fn families() -> [&'static str; 6] {
        ["theta", "mu", "seasonal", "regression", "error", "truncation"]
    }

    pub fn columns(&self, family: &str) -> Option<Vec<String>> {
        let l = &self.layout;
        Some(match family {
            "theta" => (0..l.n_athletes())
                .flat_map(|i| (0..l.df).map(move |m| format!("theta_{i}_{m}")))
                .collect(),
            "mu" => (0..l.n_athletes())
                .flat_map(|i| (0..l.seasons[i]).map(move |s| format!("mu_{i}_{s}")))
                .collect(),
            "seasonal" => match l.seasonal {
                SeasonalKind::Garch => ["m", "alpha0", "alpha1", "varpi"].iter().map(|s| s.to_string()).collect(),
                SeasonalKind::Ar => std::iter::once("sigma_mu2".to_string())
                    .chain((0..l.n_athletes()).map(|i| format!("rho_{i}")))
                    .collect(),
            },
            "regression" => l
                .covariates
                .iter()
                .map(|c| format!("beta_{c}"))
                .chain(std::iter::once("sigma_beta_inv2".to_string()))
                .collect(),
            "error" => vec!["psi2".into()],
            "truncation" => vec!["k".into()],
            _ => return None,
        })
    }

    fn family_rows(&self, family: &str) -> Vec<Vec<f64>> {
        match family {
            "theta" => self.theta.clone(),
            "mu" => self.levels.clone(),
            "seasonal" => self.seasonal.clone(),
            "regression" => self.regression.clone(),
            "error" => self.error_variance.iter().map(|v| vec![*v]).collect(),
            "truncation" => self.truncation.iter().map(|k| vec![*k as f64]).collect(),
            _ => Vec::new(),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut families = BTreeMap::new();
        for family in Self::families() {
            let columns = self.columns(family).unwrap_or_default();
            let path = dir.join(format!("{family}.csv"));
            write_family(&path, &columns, &self.iterations, &self.family_rows(family))?;
            families.insert(family.to_string(), columns);
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            seed: self.config.run.seed,
            config: self.config.clone(),
            fingerprint: self.fingerprint.clone(),
            layout: self.layout.clone(),
            retained: self.len(),
            families,
            diagnostics: self.diagnostics.clone(),
        };
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = Manifest::load(dir)?;
        let mut draws = PosteriorDraws::new(manifest.layout.clone(), manifest.config.clone(), manifest.fingerprint.clone());
        draws.diagnostics = manifest.diagnostics.clone();
        for family in Self::families() {
            let expected_columns = draws.columns(family).unwrap_or_default();
            let path = dir.join(format!("{family}.csv"));
            let (iterations, rows) = read_family(&path, &expected_columns, manifest.retained)?;
            match family {
                "theta" => {
                    draws.iterations = iterations;
                    draws.theta = rows;
                }
                "mu" => draws.levels = rows,
                "seasonal" => draws.seasonal = rows,
                "regression" => draws.regression = rows,
                "error" => draws.error_variance = rows.into_iter().map(|r| r[0]).collect(),
                _ => draws.truncation = rows.into_iter().map(|r| r[0] as usize).collect(),
            }
        }
        Ok(draws)
    }

    /// Loads and checks that the draws were produced from data with `fingerprint`.
    pub fn load_for(dir: impl AsRef<Path>, fingerprint: &str) -> Result<Self> {
        let draws = Self::load(dir)?;
        if draws.fingerprint != fingerprint {
            return Err(Error::FingerprintMismatch {
                stored: draws.fingerprint,
                actual: fingerprint.to_string(),
            });
        }
        Ok(draws)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub config: ModelConfig,
    pub fingerprint: String,
    pub layout: Layout,
    pub retained: usize,
    pub families: BTreeMap<String, Vec<String>>,
    pub diagnostics: ChainDiagnostics,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Format {
                path,
                message: format!(
                    "format version {} is not supported (expected {FORMAT_VERSION})",
                    manifest.format_version
                ),
            });
        }
        Ok(manifest)
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn write_family(path: &Path, columns: &[String], iterations: &[usize], rows: &[Vec<f64>]) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let header: Vec<&str> = std::iter::once("iteration").chain(columns.iter().map(|s| s.as_str())).collect();
    w.write_record(&header).map_err(io)?;
    let mut record = Vec::with_capacity(columns.len() + 1);
    for (g, row) in iterations.iter().zip(rows) {
        record.clear();
        record.push(g.to_string());
        record.extend(row.iter().map(|v| format_f64(*v)));
        w.write_record(&record).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_family(path: &PathBuf, columns: &[String], expected_rows: usize) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let format = |message: String| Error::Format {
        path: path.clone(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    // every complete write ends in a newline; anything else lost its tail
    if !text.ends_with('\n') {
        return Err(Error::Truncated {
            path: path.clone(),
            expected: expected_rows,
            found: text.lines().count().saturating_sub(2),
        });
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| format(e.to_string()))?.clone();
    if header.len() != columns.len() + 1 || header.iter().skip(1).zip(columns).any(|(a, b)| a != b) {
        return Err(format("columns differ from the manifest".into()));
    }
    let mut iterations = Vec::with_capacity(expected_rows);
    let mut rows = Vec::with_capacity(expected_rows);
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            // a partially written last line
            Err(e) if matches!(e.kind(), csv::ErrorKind::UnequalLengths { .. }) => {
                return Err(Error::Truncated {
                    path: path.clone(),
                    expected: expected_rows,
                    found: rows.len(),
                })
            }
            Err(e) => return Err(format(e.to_string())),
        };
        let g: usize = record[0].parse().map_err(|_| format(format!("bad iteration `{}`", &record[0])))?;
        let row = record
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|_| format(format!("bad value `{v}`"))))
            .collect::<Result<Vec<f64>>>()?;
        iterations.push(g);
        rows.push(row);
    }
    if rows.len() != expected_rows {
        return Err(Error::Truncated {
            path: path.clone(),
            expected: expected_rows,
            found: rows.len(),
        });
    }
    Ok((iterations, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AgeMode, Covariate, CovariateSpec};

    fn sample(kind: SeasonalKind) -> PosteriorDraws {
        let covs = CovariateSpec::new(vec![Covariate::Sex, Covariate::Age], AgeMode::TimeDependent);
        let config = ModelConfig::custom(4, kind, covs);
        let layout = Layout {
            athlete_ids: vec!["a".into(), "b, jr".into()],
            df: 4,
            seasons: vec![2, 3],
            covariates: vec!["sex".into(), "age".into()],
            seasonal: kind,
        };
        let mut d = PosteriorDraws::new(layout, config, "abc".into());
        for g in 0..3 {
            let x = g as f64;
            d.iterations.push(10 + g);
            d.theta.push((0..8).map(|m| (m as f64 + x) / 3.0).collect());
            d.levels.push((0..5).map(|m| -1e-9 * (m as f64 + 1.0) + x).collect());
            d.seasonal.push(match kind {
                SeasonalKind::Garch => vec![-0.2, 0.1 + x, 1e-12, std::f64::consts::PI],
                SeasonalKind::Ar => vec![0.3, 0.1, -0.7],
            });
            d.regression.push(vec![0.1 * x, -2.5, 1e20]);
            d.error_variance.push(0.04 + x * 1e-17);
            d.truncation.push(3 + g);
        }
        d.diagnostics.k_histogram.insert(3, 10);
        d
    }

    #[test]
    fn round_trip_is_exact() {
        for kind in [SeasonalKind::Garch, SeasonalKind::Ar] {
            let dir = tempfile::tempdir().unwrap();
            let d = sample(kind);
            d.save(dir.path()).unwrap();
            let back = PosteriorDraws::load(dir.path()).unwrap();
            assert_eq!(back, d);
        }
    }

    #[test]
    fn accessors() {
        let d = sample(SeasonalKind::Garch);
        assert_eq!(d.theta(1, 1), &d.theta[1][4..8]);
        assert_eq!(d.levels(2, 1).len(), 3);
        assert_eq!(d.beta(1), &[0.1, -2.5]);
        assert_eq!(d.garch_params(1).unwrap().intercept, 1.1);
        assert_eq!(d.column("seasonal", "varpi").unwrap()[0], std::f64::consts::PI);
        assert!(d.innovation_variance(0).is_none());
    }

    #[test]
    fn fingerprint_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        sample(SeasonalKind::Garch).save(dir.path()).unwrap();
        assert!(PosteriorDraws::load_for(dir.path(), "abc").is_ok());
        assert!(matches!(
            PosteriorDraws::load_for(dir.path(), "xyz"),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn truncated_files_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        sample(SeasonalKind::Garch).save(dir.path()).unwrap();
        let path = dir.path().join("mu.csv");
        let text = fs::read_to_string(&path).unwrap();
        let cut = &text[..text.len() - 12];
        fs::write(&path, cut).unwrap();
        assert!(matches!(PosteriorDraws::load(dir.path()), Err(Error::Truncated { .. })));
        let lines: Vec<&str> = text.lines().take(3).collect();
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        match PosteriorDraws::load(dir.path()) {
            Err(Error::Truncated { expected, found, .. }) => assert_eq!((expected, found), (3, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        sample(SeasonalKind::Garch).save(dir.path()).unwrap();
        let path = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&path).unwrap().replace("\"format_version\": 1", "\"format_version\": 99");
        fs::write(&path, text).unwrap();
        assert!(matches!(PosteriorDraws::load(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn modal_k_prefers_the_smaller_on_ties() {
        let mut diag = ChainDiagnostics::default();
        diag.k_histogram.insert(4, 5);
        diag.k_histogram.insert(3, 5);
        diag.k_histogram.insert(6, 1);
        assert_eq!(diag.modal_k(), Some(3));
    }
}
