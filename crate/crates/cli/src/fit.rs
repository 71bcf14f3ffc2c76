//! `fit`: resolve the configuration, run one or more chains, write draws and a run manifest.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sfda_core::config::{Hyperparameters, ModelConfig};
use sfda_core::dataset::{load_records, prepare, records_fingerprint, PreparedDataset};
use sfda_core::draws::PosteriorDraws;
use sfda_core::posterior::{potential_scale_reduction, summarize_values, CoefficientSummary};
use sfda_core::sampler::run_chain;
use sfda_core::{Error, Result};

use crate::{create_dir, finish, read_json, write_json, FitArgs, DATA_COPY, EXIT_OK, RUN_MANIFEST};

/// Wall-clock seconds per stage. Excluded from the run id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub prepare_seconds: f64,
    pub sample_seconds: f64,
    pub write_seconds: f64,
}

/// Everything needed to reproduce a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: ModelConfig,
    /// Content hash of the raw records.
    pub data_fingerprint: String,
    /// Content hash of the prepared dataset (records plus covariate encoding).
    pub fingerprint: String,
    pub seed: u64,
    pub chains: usize,
    /// Hash of every field above; equal ids mean identical draws.
    pub run_id: String,
    pub timings: Timings,
}

#[derive(Serialize)]
struct RunIdentity<'a> {
    tool_version: &'a str,
    config: &'a ModelConfig,
    data_fingerprint: &'a str,
    fingerprint: &'a str,
    chains: usize,
}

impl RunManifest {
    pub fn new(config: ModelConfig, data_fingerprint: String, fingerprint: String, chains: usize) -> Self {
        let tool_version = env!("CARGO_PKG_VERSION").to_string();
        let identity = RunIdentity {
            tool_version: &tool_version,
            config: &config,
            data_fingerprint: &data_fingerprint,
            fingerprint: &fingerprint,
            chains,
        };
        let bytes = serde_json::to_vec(&identity).expect("configuration serializes");
        Self {
            run_id: hex::encode(Sha256::digest(&bytes)),
            seed: config.run.seed,
            tool_version,
            config,
            data_fingerprint,
            fingerprint,
            chains,
            timings: Timings::default(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join(RUN_MANIFEST))
    }
}

/// Per-chain facts and pooled coefficient summaries of a multi-chain fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergedSummary {
    pub chains: Vec<ChainSummary>,
    pub coefficients: Vec<CoefficientSummary>,
    /// Potential scale reduction per coefficient, in the order above.
    pub scale_reduction: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub directory: String,
    pub seed: u64,
    pub retained: usize,
    pub modal_k: Option<usize>,
}

pub const MERGED_SUMMARY: &str = "summary.json";

/// The model configuration after applying the config file, `--model`, the
/// hyperparameter file and the run flags, in that order.
pub fn resolve_config(args: &FitArgs) -> Result<ModelConfig> {
    let mut config = match (&args.config, args.model) {
        (Some(path), _) => read_json::<ModelConfig>(path)?,
        (None, Some(model)) => ModelConfig::for_variant(model),
        (None, None) => return Err(Error::Config("give --model or --config".into())),
    };
    if let Some(model) = args.model {
        let chosen = ModelConfig::for_variant(model);
        config.variant = chosen.variant;
        config.df = chosen.df;
        config.seasonal = chosen.seasonal;
        config.covariates = chosen.covariates;
    }
    if let Some(path) = &args.hyper {
        config.hyper = read_json::<Hyperparameters>(path)?;
    }
    if let Some(g) = args.iters {
        config.run.iterations = g;
    }
    if let Some(b) = args.burnin {
        config.run.burn_in = b;
    }
    if let Some(t) = args.thin {
        config.run.thin = t;
    }
    if let Some(s) = args.seed {
        config.run.seed = s;
    }
    if args.chains == 0 {
        return Err(Error::Config("need at least one chain".into()));
    }
    config.validate()?;
    Ok(config)
}

fn chain_dir(out: &Path, chains: usize, c: usize) -> std::path::PathBuf {
    if chains == 1 {
        out.to_path_buf()
    } else {
        out.join(format!("chain_{}", c + 1))
    }
}

fn save_chain(dir: &Path, draws: &PosteriorDraws, source: &Path) -> Result<()> {
    create_dir(dir)?;
    draws.save(dir)?;
    let copy = dir.join(DATA_COPY);
    std::fs::copy(source, &copy).map_err(|source| Error::Io { path: copy, source })?;
    Ok(())
}

fn merge(out: &Path, all: &[PosteriorDraws]) -> MergedSummary {
    let names = &all[0].layout.covariates;
    let per_chain = |c: usize| -> Vec<Vec<f64>> {
        all.iter().map(|d| (0..d.len()).map(|g| d.beta(g)[c]).collect()).collect()
    };
    let coefficients = names
        .iter()
        .enumerate()
        .map(|(c, name)| summarize_values(name, &per_chain(c).concat()))
        .collect();
    let scale_reduction = (0..names.len()).map(|c| potential_scale_reduction(&per_chain(c))).collect();
    let chains = all
        .iter()
        .enumerate()
        .map(|(c, d)| ChainSummary {
            directory: chain_dir(out, all.len(), c)
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            seed: d.config.run.seed,
            retained: d.len(),
            modal_k: d.diagnostics.modal_k(),
        })
        .collect();
    MergedSummary {
        chains,
        coefficients,
        scale_reduction,
    }
}

/// Fits the model and writes the output directory. With several chains each
/// gets its own `chain_<c>` subdirectory and the top level holds the merged
/// summary; every chain directory is self-contained for `predict` and `lpml`.
pub fn run_fit(args: &FitArgs) -> Result<RunManifest> {
    let started = Instant::now();
    let config = resolve_config(args)?;
    let records = load_records(&args.data)?;
    let data: PreparedDataset = prepare(&records, &config.covariates)?;
    let mut manifest = RunManifest::new(config.clone(), records_fingerprint(&records), data.fingerprint(), args.chains);
    manifest.timings.prepare_seconds = started.elapsed().as_secs_f64();

    let sampling = Instant::now();
    let all: Vec<PosteriorDraws> = (0..args.chains)
        .into_par_iter()
        .map(|c| {
            let mut chain = config.clone();
            chain.run.seed = config.run.seed.wrapping_add(c as u64);
            run_chain(&data, &chain)
        })
        .collect::<Result<_>>()?;
    manifest.timings.sample_seconds = sampling.elapsed().as_secs_f64();

    let writing = Instant::now();
    for (c, draws) in all.iter().enumerate() {
        save_chain(&chain_dir(&args.out, args.chains, c), draws, &args.data)?;
    }
    if args.chains > 1 {
        write_json(&args.out.join(MERGED_SUMMARY), &merge(&args.out, &all))?;
    }
    manifest.timings.write_seconds = writing.elapsed().as_secs_f64();
    write_json(&args.out.join(RUN_MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn cmd_fit(args: &FitArgs) -> i32 {
    finish(run_fit(args).map(|m| {
        let retained = m.config.run.retained_count();
        println!(
            "{} chain(s) x {retained} retained draws written to {} (run {})",
            m.chains,
            args.out.display(),
            &m.run_id[..12]
        );
        EXIT_OK
    }))
}
