use std::path::Path;

use anyhow::{bail, Result};
use clap::Args;
use saccade_core::gmm::{cluster_observer_map, fit_gmm, GmmConfig, GmmModel, ObserverMap, Point};
use saccade_core::trials::TrialRecord;
use serde::{Deserialize, Serialize};

use crate::commands::trials::{load_trials, TrialsEcho};
use crate::settings::Settings;
use crate::store::{self, csv_row, write_atomic, write_document};
use crate::Common;

pub const GMM_SCHEMA: &str = "saccade.gmm";
/// Mahalanobis radii of the emitted contour polylines.
pub const CONTOUR_SIGMAS: [f64; 2] = [1.0, 2.0];
pub const DEFAULT_CONTOUR_POINTS: usize = 100;

#[derive(Debug, Args)]
pub struct GmmArgs {
    #[command(flatten)]
    pub common: Common,
    /// Mixture components; defaults to the number of observers.
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub reg_covar: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Points per contour polyline.
    #[arg(long)]
    pub contour_points: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmEcho {
    pub n_components: usize,
    pub em: GmmConfig,
    pub contour_points: usize,
    pub seed: u64,
    pub trials: TrialsEcho,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmBody {
    pub n_points: usize,
    pub model: GmmModel,
    pub observer_map: ObserverMap,
}

/// (k, σ) of every successful trial record.
pub fn shape_scale_points(records: &[TrialRecord]) -> Vec<Point> {
    records
        .iter()
        .filter_map(|r| r.params.filter(|_| r.is_success()).map(|p| [p.k, p.sigma]))
        .collect()
}

/// Contour polylines as CSV: one row per (component, radius, vertex).
pub fn contour_csv(model: &GmmModel, n_points: usize) -> String {
    let mut out = csv_row(["component", "n_sigma", "vertex", "k", "sigma"]);
    for c in 0..model.n_components {
        for &ns in &CONTOUR_SIGMAS {
            for (i, p) in model.ellipse(c, ns, n_points).iter().enumerate() {
                out.push_str(&csv_row([c.to_string(), ns.to_string(), i.to_string(), p[0].to_string(), p[1].to_string()]));
            }
        }
    }
    out
}

pub fn run(args: &GmmArgs) -> Result<()> {
    let settings = Settings::load(args.common.config.as_deref())?;
    let seed = settings.resolve(args.common.seed, "seed", 0u64)?;
    let d = GmmConfig::default();
    let em = GmmConfig {
        max_iterations: settings.resolve(args.max_iterations, "max-iterations", d.max_iterations)?,
        tolerance: settings.resolve(args.tolerance, "tolerance", d.tolerance)?,
        reg_covar: settings.resolve(args.reg_covar, "reg-covar", d.reg_covar)?,
        restarts: settings.resolve(args.restarts, "restarts", d.restarts)?,
    };
    let contour_points = settings.resolve(args.contour_points, "contour-points", DEFAULT_CONTOUR_POINTS)?;
    let components = settings.optional(args.components, "components")?;
    if components == Some(0) || contour_points == 0 {
        bail!("--components and --contour-points must be at least 1");
    }

    let dir = &args.common.work_dir;
    let (trials, records) = load_trials(dir)?;
    let n_components = components.unwrap_or(trials.n_observers);
    let points = shape_scale_points(&records);
    let model = fit_gmm(&points, n_components, seed, &em)?;
    let observer_map = cluster_observer_map(&model, &records);
    write_atomic(&dir.join(store::GMM_CONTOURS), contour_csv(&model, contour_points).as_bytes())?;
    let echo = GmmEcho {
        n_components,
        em,
        contour_points,
        seed,
        trials,
    };
    let body = GmmBody {
        n_points: points.len(),
        model,
        observer_map,
    };
    write_document(&dir.join(store::GMM), GMM_SCHEMA, echo, body)
}

pub fn load_gmm(dir: &Path) -> Result<(GmmEcho, GmmBody)> {
    let path = store::upstream(dir, store::GMM)?;
    store::read_document(&path, GMM_SCHEMA)
}
