use std::path::Path;

use anyhow::{bail, Result};
use clap::Args;
use saccade_core::geometry::{Metric, DEFAULT_MARGIN};
use saccade_core::trials::{run_trials, TrialPlan, TrialRecord};
use serde::{Deserialize, Serialize};

use crate::commands::ingest::load_traces;
use crate::settings::Settings;
use crate::store::{self, write_jsonl};
use crate::Common;

pub const TRIALS_SCHEMA: &str = "saccade.trials";

#[derive(Debug, Args)]
pub struct TrialsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub n_trials: Option<usize>,
    #[arg(long)]
    pub images_per_trial: Option<usize>,
    /// `euclidean` or `hyperbolic`.
    #[arg(long)]
    pub metric: Option<Metric>,
    /// Fraction of the unit disc covered by the screen half-diagonal.
    #[arg(long)]
    pub disc_margin: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialsEcho {
    pub plan: TrialPlan,
    pub total_images: usize,
    pub n_observers: usize,
}

pub fn run(args: &TrialsArgs) -> Result<()> {
    let settings = Settings::load(args.common.config.as_deref())?;
    let seed = settings.resolve(args.common.seed, "seed", 0u64)?;
    let mut plan = TrialPlan::new(
        settings.resolve(args.n_trials, "n-trials", 500)?,
        settings.resolve(args.images_per_trial, "images-per-trial", 50)?,
        settings.resolve(args.metric, "metric", Metric::Euclidean)?,
        seed,
    );
    plan.disc_margin = settings.resolve(args.disc_margin, "disc-margin", DEFAULT_MARGIN)?;
    if plan.n_trials == 0 {
        bail!("--n-trials must be at least 1");
    }
    if plan.images_per_trial == 0 {
        bail!("--images-per-trial must be at least 1");
    }

    let dir = &args.common.work_dir;
    let (_, traces) = load_traces(dir)?;
    let total_images = saccade_core::trials::image_ids(&traces).len();
    plan.validate(total_images)?;
    let records = run_trials(&traces, &plan)?;
    let echo = TrialsEcho {
        plan,
        total_images,
        n_observers: saccade_core::trials::observer_ids(&traces).len(),
    };
    write_jsonl(&dir.join(store::TRIALS), TRIALS_SCHEMA, &echo, &records)
}

pub fn load_trials(dir: &Path) -> Result<(TrialsEcho, Vec<TrialRecord>)> {
    let path = store::upstream(dir, store::TRIALS)?;
    store::read_jsonl(&path, TRIALS_SCHEMA)
}
