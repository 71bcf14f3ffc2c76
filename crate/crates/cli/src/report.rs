//! Commands that read a fit or a results file and report on it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sfda_core::dataset::{load_records, prepare, records_fingerprint, summarize, write_summary_csv, PreparedDataset};
use sfda_core::draws::{Manifest, PosteriorDraws};
use sfda_core::posterior::{
    compute_lpml, estimate_trajectory, predict_next_season, summarize_coefficients, write_coefficients,
    write_trajectories, LpmlReport, TrajectoryEstimate,
};
use sfda_core::{Error, Result};

use crate::{finish, write_json, CoefficientsArgs, LpmlArgs, PredictArgs, SummarizeArgs, DATA_COPY, EXIT_OK};

/// A fit directory read back: draws and the data they were fitted to,
/// checked against each other by fingerprint.
pub struct LoadedFit {
    pub draws: PosteriorDraws,
    pub data: PreparedDataset,
    /// Hash of the raw records, shared by every model fitted to one file.
    pub data_fingerprint: String,
}

pub fn load_fit(dir: &Path) -> Result<LoadedFit> {
    let manifest = Manifest::load(dir)?;
    let records = load_records(dir.join(DATA_COPY))?;
    let data = prepare(&records, &manifest.config.covariates)?;
    let draws = PosteriorDraws::load_for(dir, &data.fingerprint())?;
    Ok(LoadedFit {
        draws,
        data,
        data_fingerprint: records_fingerprint(&records),
    })
}

/// The observed trajectory followed by the predicted next season.
pub fn predict(args: &PredictArgs) -> Result<TrajectoryEstimate> {
    let LoadedFit { draws, data, .. } = load_fit(&args.draws)?;
    let mut estimate = estimate_trajectory(&draws, &data, &args.athlete, args.grid)?;
    estimate.extend(predict_next_season(&draws, &data, &args.athlete, args.ahead_grid, args.seed)?);
    Ok(estimate)
}

pub fn cmd_predict(args: &PredictArgs) -> i32 {
    finish(predict(args).and_then(|estimate| {
        let out = args
            .out
            .clone()
            .unwrap_or_else(|| args.draws.join(format!("trajectory_{}.csv", args.athlete)));
        write_trajectories(&out, std::slice::from_ref(&estimate))?;
        let predicted = estimate.predicted.iter().filter(|p| **p).count();
        println!(
            "{} rows ({predicted} predicted) for {} written to {}",
            estimate.len(),
            args.athlete,
            out.display()
        );
        Ok(EXIT_OK)
    }))
}

/// One model's LPML with the directory it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpmlRecord {
    pub draws: String,
    #[serde(flatten)]
    pub report: LpmlReport,
}

/// LPML of every fit, in argument order. All fits must share one dataset.
pub fn lpml(dirs: &[impl AsRef<Path>]) -> Result<Vec<LpmlRecord>> {
    let mut records: Vec<LpmlRecord> = Vec::with_capacity(dirs.len());
    let mut first: Option<String> = None;
    for dir in dirs {
        let fit = load_fit(dir.as_ref())?;
        match &first {
            Some(stored) if *stored != fit.data_fingerprint => {
                return Err(Error::FingerprintMismatch {
                    stored: stored.clone(),
                    actual: fit.data_fingerprint,
                })
            }
            None => first = Some(fit.data_fingerprint.clone()),
            _ => {}
        }
        records.push(LpmlRecord {
            draws: dir.as_ref().display().to_string(),
            report: compute_lpml(&fit.draws, &fit.data)?,
        });
    }
    Ok(records)
}

/// Models ranked by LPML, higher first.
pub fn comparison_table(records: &[LpmlRecord]) -> String {
    let mut ranked: Vec<&LpmlRecord> = records.iter().collect();
    ranked.sort_by(|a, b| b.report.lpml.total_cmp(&a.report.lpml));
    let mut table = format!("{:<4} {:<8} {:>14} {:>7} {:>8}  draws\n", "rank", "model", "lpml", "n_obs", "flagged");
    for (r, rec) in ranked.iter().enumerate() {
        table.push_str(&format!(
            "{:<4} {:<8} {:>14.3} {:>7} {:>8}  {}\n",
            r + 1,
            rec.report.model,
            rec.report.lpml,
            rec.report.n_obs,
            rec.report.flagged.len(),
            rec.draws
        ));
    }
    table
}

/// JSON lines on stdout, one per model; with several models the ranking
/// follows on stderr so stdout stays machine-readable.
pub fn cmd_lpml(args: &LpmlArgs) -> i32 {
    finish(lpml(&args.draws).and_then(|records| {
        for r in &records {
            println!("{}", serde_json::to_string(r).expect("report serializes"));
        }
        if records.len() > 1 {
            eprint!("{}", comparison_table(&records));
        }
        if let Some(out) = &args.out {
            write_json(out, &records)?;
        }
        Ok(EXIT_OK)
    }))
}

pub fn cmd_coefficients(args: &CoefficientsArgs) -> i32 {
    finish((|| {
        let draws = PosteriorDraws::load(&args.draws)?;
        let rows = summarize_coefficients(&draws)?;
        println!("{:<12} {:>9} {:>9} {:>7} 95% interval", "coefficient", "mean", "sd", "ess");
        for r in &rows {
            println!("{r}");
        }
        if let Some(out) = &args.out {
            write_coefficients(out, &rows)?;
        }
        Ok(EXIT_OK)
    })())
}

pub fn cmd_summarize(args: &SummarizeArgs) -> i32 {
    finish((|| {
        let rows = summarize(&load_records(&args.data)?);
        println!("{:<10} {:>7} {:>6} {:>7} {:>7}", "group", "mean", "sd", "max", "min");
        for r in &rows {
            println!("{r}");
        }
        if let Some(out) = &args.out {
            write_summary_csv(out, &rows)?;
        }
        Ok(EXIT_OK)
    })())
}
