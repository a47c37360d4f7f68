use std::path::Path;

use anyhow::{bail, Result};
use clap::Args;
use saccade_core::features::{embed_records, select_top_variance, FeatureSelection, FeatureVector, DEFAULT_K, GRID_SIZE};
use serde::{Deserialize, Serialize};

use crate::commands::trials::{load_trials, TrialsEcho};
use crate::settings::Settings;
use crate::store::{self, write_document, write_features};
use crate::Common;

pub const SELECTION_SCHEMA: &str = "saccade.selection";

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of highest-variance grid components to keep.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeaturesEcho {
    pub k: usize,
    pub grid_size: usize,
    pub seed: u64,
    pub trials: TrialsEcho,
}

pub fn run(args: &FeaturesArgs) -> Result<()> {
    let settings = Settings::load(args.common.config.as_deref())?;
    let seed = settings.resolve(args.common.seed, "seed", 0u64)?;
    let k = settings.resolve(args.k, "k", DEFAULT_K)?;
    if k == 0 || k > GRID_SIZE {
        bail!("--k must be in 1..={GRID_SIZE}, got {k}");
    }
    let dir = &args.common.work_dir;
    let (trials, records) = load_trials(dir)?;
    let (grid, vectors) = embed_records(&records)?;
    let selection = select_top_variance(&vectors, k)?;
    let echo = FeaturesEcho {
        k,
        grid_size: GRID_SIZE,
        seed,
        trials,
    };
    write_features(&dir.join(store::FEATURES), &echo, grid.lo, grid.hi, &vectors)?;
    write_document(&dir.join(store::SELECTION), SELECTION_SCHEMA, echo, selection)
}

pub fn load_features(dir: &Path) -> Result<(FeaturesEcho, FeatureSelection, Vec<FeatureVector>)> {
    let sel_path = store::upstream(dir, store::SELECTION)?;
    let feat_path = store::upstream(dir, store::FEATURES)?;
    let (echo, selection) = store::read_document(&sel_path, SELECTION_SCHEMA)?;
    let (_, _, vectors) = store::read_features(&feat_path)?;
    Ok((echo, selection, vectors))
}
