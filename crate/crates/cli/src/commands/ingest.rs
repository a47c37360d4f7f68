use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use saccade_core::ingest::{parse_trace_file, segment_fixations, EyeTrace, IngestConfig, SegmentationParams};
use serde::{Deserialize, Serialize};

use crate::settings::Settings;
use crate::store::{self, write_document, write_jsonl};
use crate::Common;

pub const TRACES_SCHEMA: &str = "saccade.traces";
pub const SUMMARY_SCHEMA: &str = "saccade.summary";
/// Screen sidecar looked up next to the input files.
pub const SIDECAR: &str = "screen.cfg";

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: Common,
    /// Trace CSV file, or a directory whose `*.csv` files are read in name order.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub screen_w: Option<f64>,
    #[arg(long)]
    pub screen_h: Option<f64>,
    /// I-DT window limit: bounding-box width + height in pixels.
    #[arg(long)]
    pub dispersion_threshold: Option<f64>,
    /// Minimum fixation duration in milliseconds.
    #[arg(long)]
    pub min_duration: Option<f64>,
    /// Keep file labels when every sample of a trace has one.
    #[arg(long)]
    pub respect_labels: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestEcho {
    pub input: PathBuf,
    pub files: Vec<String>,
    pub screen_w: f64,
    pub screen_h: f64,
    pub segmentation: SegmentationParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverSummary {
    pub observer_id: String,
    pub images: usize,
    pub samples: usize,
    pub fixation_samples: usize,
    pub saccadic_samples: usize,
    pub out_of_range: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_observers: usize,
    pub n_images: usize,
    pub n_traces: usize,
    pub n_samples: usize,
    pub n_fixation_samples: usize,
    pub observers: Vec<ObserverSummary>,
}

pub fn summarize(traces: &[EyeTrace]) -> Summary {
    let mut per: BTreeMap<&str, ObserverSummary> = BTreeMap::new();
    let mut images = BTreeSet::new();
    for t in traces {
        images.insert(t.image_id.as_str());
        let e = per.entry(&t.observer_id).or_insert_with(|| ObserverSummary {
            observer_id: t.observer_id.clone(),
            images: 0,
            samples: 0,
            fixation_samples: 0,
            saccadic_samples: 0,
            out_of_range: 0,
        });
        let fix = t.fixation_count();
        e.images += 1;
        e.samples += t.samples.len();
        e.fixation_samples += fix;
        e.saccadic_samples += t.samples.len() - fix;
        e.out_of_range += t.out_of_range;
    }
    let observers: Vec<ObserverSummary> = per.into_values().collect();
    Summary {
        n_observers: observers.len(),
        n_images: images.len(),
        n_traces: traces.len(),
        n_samples: observers.iter().map(|o| o.samples).sum(),
        n_fixation_samples: observers.iter().map(|o| o.fixation_samples).sum(),
        observers,
    }
}

fn input_files(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        bail!("input {} does not exist", input.display());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| format!("listing {}", input.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "csv"));
    files.sort();
    Ok(files)
}

pub fn run(args: &IngestArgs) -> Result<()> {
    let settings = Settings::load(args.common.config.as_deref())?;
    let seed = settings.resolve(args.common.seed, "seed", 0u64)?;
    let input: PathBuf = settings
        .optional(args.input.clone(), "input")?
        .context("--input is required")?;
    let defaults = SegmentationParams::default();
    let segmentation = SegmentationParams {
        dispersion_threshold: settings.resolve(args.dispersion_threshold, "dispersion-threshold", defaults.dispersion_threshold)?,
        min_duration: settings.resolve(args.min_duration, "min-duration", defaults.min_duration)?,
        respect_labels: settings.resolve(args.respect_labels, "respect-labels", defaults.respect_labels)?,
    };

    let sidecar_dir = if input.is_dir() { input.clone() } else { input.parent().map(Path::to_path_buf).unwrap_or_default() };
    let sidecar = sidecar_dir.join(SIDECAR);
    let base = if sidecar.is_file() {
        IngestConfig::from_sidecar(&sidecar).with_context(|| format!("in {}", sidecar.display()))?
    } else {
        IngestConfig::default()
    };
    let screen = IngestConfig {
        screen_w: settings.resolve(args.screen_w, "screen-w", base.screen_w)?,
        screen_h: settings.resolve(args.screen_h, "screen-h", base.screen_h)?,
    };
    if !(screen.screen_w > 0.0 && screen.screen_h > 0.0) {
        bail!("screen dimensions must be positive");
    }

    let files = input_files(&input)?;
    let mut traces = Vec::new();
    let mut seen = BTreeSet::new();
    for file in &files {
        let parsed = parse_trace_file(file, &screen).with_context(|| format!("in {}", file.display()))?;
        for trace in parsed {
            if !seen.insert((trace.observer_id.clone(), trace.image_id.clone())) {
                bail!(
                    "in {}: observer {} image {} already appeared in an earlier file",
                    file.display(),
                    trace.observer_id,
                    trace.image_id
                );
            }
            let segmented = segment_fixations(&trace, &segmentation).with_context(|| {
                format!("in {}: segmenting ({}, {})", file.display(), trace.observer_id, trace.image_id)
            })?;
            traces.push(segmented);
        }
    }
    if traces.is_empty() {
        bail!("no traces found in {}", input.display());
    }

    let echo = IngestEcho {
        input: input.clone(),
        files: files
            .iter()
            .map(|f| f.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
        screen_w: screen.screen_w,
        screen_h: screen.screen_h,
        segmentation,
        seed,
    };
    let dir = &args.common.work_dir;
    write_jsonl(&dir.join(store::TRACES), TRACES_SCHEMA, &echo, &traces)?;
    write_document(&dir.join(store::SUMMARY), SUMMARY_SCHEMA, &echo, summarize(&traces))?;
    Ok(())
}

pub fn load_traces(dir: &Path) -> Result<(IngestEcho, Vec<EyeTrace>)> {
    let path = store::upstream(dir, store::TRACES)?;
    store::read_jsonl(&path, TRACES_SCHEMA)
}
