use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Result};
use clap::Args;
use saccade_core::classify::{evaluate, EvalConfig, EvalReport, SweepTable};
use saccade_core::features::FeatureSelection;
use serde::{Deserialize, Serialize};

use crate::commands::features::{load_features, FeaturesEcho};
use crate::commands::trials::load_trials;
use crate::settings::{parse_list, Settings};
use crate::store::{self, csv_row, write_atomic, write_document};
use crate::Common;

pub const CLASSIFY_SCHEMA: &str = "saccade.classify";

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated feature counts; each uses the top entries of the
    /// stored selection. Defaults to the full selection.
    #[arg(long)]
    pub k: Option<String>,
    /// Comma-separated training-trial counts.
    #[arg(long)]
    pub m: Option<String>,
    /// Evaluation vectors per repeat.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Regularization; defaults to 1 / (m × observers).
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub class_weighted: Option<bool>,
    #[arg(long)]
    pub standardize: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub config_index: usize,
    pub k: usize,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyEcho {
    pub configs: Vec<SweepConfig>,
    pub features: FeaturesEcho,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyBody {
    pub reports: BTreeMap<usize, Vec<EvalReport>>,
    pub errors: BTreeMap<usize, String>,
}

pub fn run(args: &ClassifyArgs) -> Result<()> {
    let settings = Settings::load(args.common.config.as_deref())?;
    let d = EvalConfig::default();
    let base = EvalConfig {
        m: d.m,
        n: settings.resolve(args.n, "n", d.n)?,
        repeats: settings.resolve(args.repeats, "repeats", d.repeats)?,
        lambda: settings.optional(args.lambda, "lambda")?,
        iterations: settings.resolve(args.iterations, "iterations", d.iterations)?,
        class_weighted: settings.resolve(args.class_weighted, "class-weighted", d.class_weighted)?,
        standardize: settings.resolve(args.standardize, "standardize", d.standardize)?,
        seed: settings.resolve(args.common.seed, "seed", d.seed)?,
    };
    let ms: Vec<usize> = match settings.optional(args.m.clone(), "m")? {
        Some(text) => parse_list(&text)?,
        None => vec![d.m],
    };
    let ks: Option<Vec<usize>> = settings.optional(args.k.clone(), "k")?.map(|t| parse_list(&t)).transpose()?;
    if ms.is_empty() || ks.as_ref().is_some_and(Vec::is_empty) {
        bail!("--k and --m lists must not be empty");
    }

    let dir = &args.common.work_dir;
    let (features, selection, vectors) = load_features(dir)?;
    let (_, records) = load_trials(dir)?;
    let ks = ks.unwrap_or_else(|| vec![selection.indices.len()]);
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > selection.indices.len()) {
        bail!("--k {bad} outside 1..={} (the stored selection)", selection.indices.len());
    }

    let configs: Vec<SweepConfig> = ks
        .iter()
        .flat_map(|&k| ms.iter().map(move |&m| (k, m)))
        .enumerate()
        .map(|(config_index, (k, m))| SweepConfig {
            config_index,
            k,
            eval: EvalConfig { m, ..base },
        })
        .collect();

    let mut table = SweepTable::default();
    for c in &configs {
        let sel = FeatureSelection {
            indices: selection.indices[..c.k].to_vec(),
        };
        match evaluate(&records, &vectors, &sel, &c.eval) {
            Ok(reports) => {
                table.reports.insert(c.config_index, reports);
            }
            Err(e) => {
                table.errors.insert(c.config_index, e.to_string());
            }
        }
    }

    let mut csv = csv_row([
        "config_index", "metric_tag", "images_per_trial", "k", "m", "n", "repeats", "observer", "mean_rate",
        "repeat_index", "rate",
    ]);
    for r in table.rows() {
        csv.push_str(&csv_row([
            r.config_index.to_string(),
            r.metric_tag.map(|m| m.to_string()).unwrap_or_default(),
            r.images_per_trial.map(|v| v.to_string()).unwrap_or_default(),
            r.k.to_string(),
            r.m.to_string(),
            r.n.to_string(),
            r.repeats.to_string(),
            r.observer,
            r.mean_rate.to_string(),
            r.repeat_index.to_string(),
            r.rate.to_string(),
        ]));
    }
    write_atomic(&dir.join(store::CLASSIFY_TABLE), csv.as_bytes())?;
    let echo = ClassifyEcho { configs, features };
    let body = ClassifyBody {
        reports: table.reports,
        errors: table.errors,
    };
    write_document(&dir.join(store::CLASSIFY), CLASSIFY_SCHEMA, echo, body)
}

pub fn load_classify(dir: &Path) -> Result<(ClassifyEcho, ClassifyBody)> {
    let path = store::upstream(dir, store::CLASSIFY)?;
    store::read_document(&path, CLASSIFY_SCHEMA)
}
