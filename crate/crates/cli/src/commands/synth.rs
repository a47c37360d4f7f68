use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use saccade_core::gpd::GpdParams;
use saccade_core::ingest::write_traces;
use saccade_core::json;
use saccade_core::synth::{generate_traces_with, ObserverProfile, SynthConfig};
use serde::Serialize;

use crate::settings::Settings;
use crate::store::write_atomic;
use crate::Common;

pub const DEFAULT_OUTPUT: &str = "synth.csv";

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output CSV; relative paths resolve against the work directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Semicolon-separated `id:k:sigma` profiles, e.g. `a:0.3:20;b:-0.2:15`.
    #[arg(long)]
    pub profiles: Option<String>,
    /// Number of evenly spread default profiles when `--profiles` is absent.
    #[arg(long)]
    pub observers: Option<usize>,
    #[arg(long)]
    pub images: Option<usize>,
    /// Fixation jitter standard deviation in pixels.
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub fixations_per_image: Option<usize>,
    #[arg(long)]
    pub screen_w: Option<f64>,
    #[arg(long)]
    pub screen_h: Option<f64>,
    /// Milliseconds between samples.
    #[arg(long)]
    pub sample_interval: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SynthEcho<'a> {
    profiles: &'a [ObserverProfile],
    images: usize,
    config: SynthConfig,
    seed: u64,
}

pub fn parse_profiles(text: &str) -> Result<Vec<(String, f64, f64)>> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|entry| {
            let parts: Vec<&str> = entry.split(':').map(str::trim).collect();
            let [id, k, sigma] = parts[..] else {
                bail!("profile {entry:?} is not id:k:sigma");
            };
            let k = k.parse().with_context(|| format!("profile {entry:?}: shape"))?;
            let sigma = sigma.parse().with_context(|| format!("profile {entry:?}: scale"))?;
            Ok((id.to_string(), k, sigma))
        })
        .collect()
}

/// `n` observers with shapes spread over [-0.3, 0.6] and scales over
/// [40, 15] pixels.
pub fn default_profiles(n: usize) -> Vec<(String, f64, f64)> {
    (0..n)
        .map(|i| {
            let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
            (format!("obs{i:02}"), -0.3 + 0.9 * t, 40.0 - 25.0 * t)
        })
        .collect()
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let settings = Settings::load(args.common.config.as_deref())?;
    let seed = settings.resolve(args.common.seed, "seed", 0u64)?;
    let images = settings.resolve(args.images, "images", 20usize)?;
    let jitter = settings.resolve(args.jitter, "jitter", 3.0)?;
    let d = SynthConfig::default();
    let config = SynthConfig {
        screen_w: settings.resolve(args.screen_w, "screen-w", d.screen_w)?,
        screen_h: settings.resolve(args.screen_h, "screen-h", d.screen_h)?,
        sample_interval: settings.resolve(args.sample_interval, "sample-interval", d.sample_interval)?,
        fixations_per_image: settings.resolve(args.fixations_per_image, "fixations-per-image", d.fixations_per_image)?,
    };
    let specs = match settings.optional(args.profiles.clone(), "profiles")? {
        Some(text) => parse_profiles(&text)?,
        None => default_profiles(settings.resolve(args.observers, "observers", 3usize)?),
    };
    if specs.is_empty() {
        bail!("no observer profiles");
    }
    let profiles: Vec<ObserverProfile> = specs
        .into_iter()
        .map(|(id, k, sigma)| {
            let gpd = GpdParams::new(0.0, k, sigma).with_context(|| format!("profile {id}"))?;
            let mut p = ObserverProfile::new(id, gpd);
            p.fixation_jitter_sigma = jitter;
            Ok(p)
        })
        .collect::<Result<_>>()?;

    let traces = generate_traces_with(&profiles, images, seed, &config)?;
    let echo = SynthEcho {
        profiles: &profiles,
        images,
        config,
        seed,
    };
    let mut buf = format!("# synth {}\n", json::to_string(&echo)?).into_bytes();
    write_traces(&mut buf, &traces)?;
    let output = settings.resolve(args.output.clone(), "output", PathBuf::from(DEFAULT_OUTPUT))?;
    write_atomic(&args.common.work_dir.join(output), &buf)
}
