//! `simulate` and `diagnose`: synthetic data and the sampler's self-checks.

use rayon::prelude::*;
use serde::Serialize;
use sfda_core::dataset::write_records;
use sfda_core::numerics::DrawScale;
use sfda_core::sampler::{Block, Fault};
use sfda_core::synth::geweke::{desk_suite, geweke_test, GewekeConfig, GewekeReport};
use sfda_core::synth::recovery::{run_recovery, RecoveryConfig, RecoveryReport};
use sfda_core::synth::{generate, SynthConfig, SynthTruth};
use sfda_core::{Error, Result};

use crate::{create_dir, finish, read_json, write_json, DiagnoseArgs, SimulateArgs, DATA_COPY, EXIT_CHECK_FAILED, EXIT_OK};

pub const TRUTH: &str = "truth.json";

/// Scale applied to the faulted update's draws.
pub const FAULT_SCALE: f64 = 0.5;

/// Share of recovery replicates whose 95% interval must cover the truth (17 of 20).
pub const REQUIRED_COVERAGE: f64 = 0.85;

pub fn simulate(args: &SimulateArgs) -> Result<SynthTruth> {
    let mut config = match &args.config {
        Some(path) => read_json::<SynthConfig>(path)?,
        None => SynthConfig::recovery(args.seed.unwrap_or(0)),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let (truth, _) = generate(&config)?;
    create_dir(&args.out)?;
    write_records(args.out.join(DATA_COPY), &truth.records)?;
    write_json(&args.out.join(TRUTH), &truth)?;
    Ok(truth)
}

pub fn cmd_simulate(args: &SimulateArgs) -> i32 {
    finish(simulate(args).map(|truth| {
        println!(
            "{} results from {} athletes written to {}",
            truth.records.len(),
            truth.config.n_athletes,
            args.out.display()
        );
        EXIT_OK
    }))
}

#[derive(Clone, Debug, Serialize)]
pub struct GewekeLine {
    pub seasonal: String,
    pub faulted: bool,
    pub report: GewekeReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverageLine {
    pub parameter: String,
    pub covered: usize,
    pub replicates: usize,
    pub required: usize,
}

impl CoverageLine {
    pub fn passed(&self) -> bool {
        self.covered >= self.required
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Diagnosis {
    pub geweke: Vec<GewekeLine>,
    pub coverage: Vec<CoverageLine>,
    pub recovery: Option<RecoveryReport>,
}

impl Diagnosis {
    pub fn passed(&self) -> bool {
        self.geweke.iter().all(|g| g.report.passed()) && self.coverage.iter().all(CoverageLine::passed)
    }
}

fn fault_block(name: &str) -> Result<Block> {
    let block = Block::from_name(name)?;
    let faultable = desk_suite().iter().any(|e| e.faultable && e.blocks[0] == block);
    if !faultable {
        return Err(Error::Config(format!("update `{name}` has no draw that can be mis-scaled")));
    }
    Ok(block)
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<Diagnosis> {
    let fault = args.fault.as_deref().map(fault_block).transpose()?;
    let mut diagnosis = Diagnosis::default();
    if !args.skip_geweke {
        diagnosis.geweke = desk_suite()
            .into_par_iter()
            .map(|entry| {
                let mut config = GewekeConfig::desk(&entry.blocks, entry.seasonal, args.seed);
                let faulted = fault.is_some_and(|b| entry.blocks.contains(&b));
                if faulted {
                    config.fault = fault.map(|block| Fault {
                        block,
                        scale: DrawScale(FAULT_SCALE),
                    });
                }
                Ok(GewekeLine {
                    seasonal: format!("{:?}", entry.seasonal).to_lowercase(),
                    faulted,
                    report: geweke_test(&config)?,
                })
            })
            .collect::<Result<_>>()?;
    }
    if !args.skip_recovery {
        let report = run_recovery(&RecoveryConfig {
            replicates: args.replicates,
            iterations: args.iters,
            seed: args.seed,
        })?;
        let required = (REQUIRED_COVERAGE * args.replicates as f64).ceil() as usize;
        diagnosis.coverage = report
            .headline_names()
            .into_iter()
            .chain(report.garch_names())
            .map(|parameter| CoverageLine {
                covered: report.covered(&parameter),
                parameter,
                replicates: args.replicates,
                required,
            })
            .collect();
        diagnosis.recovery = Some(report);
    }
    Ok(diagnosis)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn print_diagnosis(d: &Diagnosis) {
    for g in &d.geweke {
        let worst = g.report.worst().map(|w| w.name.as_str()).unwrap_or("-");
        println!(
            "{} geweke {:<5} {:<40} max|z| = {:.2} ({worst}){}",
            verdict(g.report.passed()),
            g.seasonal,
            g.report.blocks.join("+"),
            g.report.max_abs_z(),
            if g.faulted { " [fault injected]" } else { "" }
        );
    }
    for c in &d.coverage {
        println!(
            "{} recovery {:<20} covered {}/{} (need {})",
            verdict(c.passed()),
            c.parameter,
            c.covered,
            c.replicates,
            c.required
        );
    }
    if let Some(report) = &d.recovery {
        let modes: Vec<String> = report
            .modal_k()
            .iter()
            .map(|k| k.map_or_else(|| "-".into(), |k| k.to_string()))
            .collect();
        println!("INFO recovery modal truncation level per replicate: {}", modes.join(" "));
        let stationary = report.replicates.iter().filter(|r| r.stationarity > 0.9).count();
        println!(
            "INFO recovery replicates with P(stationary) > 0.9: {stationary}/{}",
            report.replicates.len()
        );
    }
}

/// Exits 1 when any check fails, including the one a `--fault` targets.
pub fn cmd_diagnose(args: &DiagnoseArgs) -> i32 {
    finish(diagnose(args).and_then(|d| {
        print_diagnosis(&d);
        if let Some(out) = &args.out {
            write_json(out, &d)?;
        }
        Ok(if d.passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
    }))
}
