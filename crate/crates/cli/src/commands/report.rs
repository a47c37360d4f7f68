use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use clap::Args;
use saccade_core::gpd::{fit_three_param, gof_adjusted_r2, GpdParams};
use saccade_core::trials::{ecdf_of_r2, image_ids, observer_ids, pool_step_lengths, trial_subset};
use serde::Serialize;

use crate::commands::classify::load_classify;
use crate::commands::gmm::{contour_csv, load_gmm};
use crate::commands::ingest::load_traces;
use crate::commands::trials::{load_trials, TrialsEcho};
use crate::settings::Settings;
use crate::store::{self, csv_row, write_atomic, write_document};
use crate::Common;

pub const REPORT_SCHEMA: &str = "saccade.report";
pub const HISTOGRAM: &str = "histogram.csv";
pub const PDF_CURVE: &str = "pdf_curve.csv";
pub const QQ: &str = "qq.csv";
pub const ECDF_R2: &str = "ecdf_r2.csv";
pub const KSIGMA_POINTS: &str = "ksigma_points.csv";
pub const KSIGMA_MEDIANS: &str = "ksigma_medians.csv";
pub const GMM_ELLIPSES: &str = "gmm_ellipses.csv";
pub const RATES: &str = "rates.csv";
pub const MANIFEST: &str = "manifest.json";

/// Upper bound on the number of histogram bins.
const MAX_BINS: usize = 10_000;

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// Observer whose histogram, pdf and QQ data are emitted; defaults to the
    /// first observer in sorted order.
    #[arg(long)]
    pub observer: Option<String>,
    /// Trial whose image subset is pooled for the histogram and QQ data.
    #[arg(long)]
    pub trial: Option<usize>,
    /// Quantile at which the histogram range is clipped.
    #[arg(long)]
    pub clip_quantile: Option<f64>,
    #[arg(long)]
    pub pdf_points: Option<usize>,
    #[arg(long)]
    pub ellipse_points: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportEcho {
    pub observer: String,
    pub trial: usize,
    pub clip_quantile: f64,
    pub pdf_points: usize,
    pub ellipse_points: usize,
    pub seed: u64,
    pub trials: TrialsEcho,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest {
    files: Vec<&'static str>,
    /// Optional stages that were absent, so their outputs were not written.
    skipped: Vec<&'static str>,
    fitted: GpdParams,
    n_steps: usize,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Histogram on `[min, clip]` with Freedman–Diaconis bins, plus the count
/// above `clip`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub counts: Vec<usize>,
    pub overflow: usize,
    pub clip: f64,
}

pub fn histogram(data: &[f64], clip_quantile: f64) -> Histogram {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let lo = sorted[0];
    let clip = quantile_sorted(&sorted, clip_quantile);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let fd = 2.0 * iqr / (n as f64).cbrt();
    let range = clip - lo;
    let bins = if fd > 0.0 && range > 0.0 {
        ((range / fd).ceil() as usize).clamp(1, MAX_BINS)
    } else {
        1
    };
    let width = if range > 0.0 { range / bins as f64 } else { 1.0 };
    let mut counts = vec![0; bins];
    let mut overflow = 0;
    for &x in &sorted {
        if x > clip {
            overflow += 1;
        } else {
            let b = (((x - lo) / width).floor() as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    Histogram {
        lo,
        width,
        counts,
        overflow,
        clip,
    }
}

fn histogram_csv(h: &Histogram, n: usize, clip_quantile: f64, observer: &str, trial: usize) -> String {
    let mut out = String::new();
    writeln!(out, "# binning=freedman-diaconis width=2*IQR*n^(-1/3) range=[min, q{clip_quantile}]").unwrap();
    writeln!(out, "# values above the clip are counted in the overflow row").unwrap();
    writeln!(out, "# observer={observer} trial={trial} n_steps={n}").unwrap();
    out.push_str(&csv_row(["kind", "bin_lo", "bin_hi", "count", "density"]));
    let nf = n as f64;
    for (i, &c) in h.counts.iter().enumerate() {
        let a = h.lo + i as f64 * h.width;
        let b = if i + 1 == h.counts.len() { h.clip } else { h.lo + (i + 1) as f64 * h.width };
        out.push_str(&csv_row([
            "bin".to_string(),
            a.to_string(),
            b.to_string(),
            c.to_string(),
            (c as f64 / (nf * h.width)).to_string(),
        ]));
    }
    out.push_str(&csv_row(["overflow".to_string(), h.clip.to_string(), "inf".to_string(), h.overflow.to_string(), String::new()]));
    out
}

pub fn run(args: &ReportArgs) -> Result<()> {
    let settings = Settings::load(args.common.config.as_deref())?;
    let seed = settings.resolve(args.common.seed, "seed", 0u64)?;
    let trial = settings.resolve(args.trial, "trial", 0usize)?;
    let clip_quantile = settings.resolve(args.clip_quantile, "clip-quantile", 0.995)?;
    let pdf_points = settings.resolve(args.pdf_points, "pdf-points", 200usize)?;
    let ellipse_points = settings.resolve(args.ellipse_points, "ellipse-points", 100usize)?;
    if !(clip_quantile > 0.0 && clip_quantile <= 1.0) || pdf_points < 2 || ellipse_points == 0 {
        bail!("need 0 < --clip-quantile <= 1, --pdf-points >= 2 and --ellipse-points >= 1");
    }

    let dir = &args.common.work_dir;
    let (_, traces) = load_traces(dir)?;
    let (trials, records) = load_trials(dir)?;
    let observers = observer_ids(&traces);
    let observer = match settings.optional(args.observer.clone(), "observer")? {
        Some(o) if observers.contains(&o) => o,
        Some(o) => bail!("observer {o} is not in the trace store"),
        None => observers.first().cloned().context("trace store has no observers")?,
    };
    let plan = &trials.plan;
    if trial >= plan.n_trials {
        bail!("--trial {trial} outside 0..{}", plan.n_trials);
    }

    let images = image_ids(&traces);
    let subset: Vec<String> = trial_subset(plan.seed, trial, images.len(), plan.images_per_trial)
        .into_iter()
        .map(|i| images[i].clone())
        .collect();
    let steps = pool_step_lengths(&traces, &observer, &subset, plan.metric_tag, plan.disc_margin)?;
    let (fitted, _) = fit_three_param(&steps).with_context(|| format!("refitting trial {trial} of {observer}"))?;
    let gof = gof_adjusted_r2(&steps, &fitted)?;

    let out_dir = dir.join(store::REPORT_DIR);
    let mut files = Vec::new();
    let mut emit = |name: &'static str, text: String| -> Result<()> {
        write_atomic(&out_dir.join(name), text.as_bytes())?;
        files.push(name);
        Ok(())
    };

    let h = histogram(&steps, clip_quantile);
    emit(HISTOGRAM, histogram_csv(&h, steps.len(), clip_quantile, &observer, trial))?;

    let mut pdf = String::new();
    writeln!(pdf, "# theta={} k={} sigma={}", fitted.theta, fitted.k, fitted.sigma).unwrap();
    pdf.push_str(&csv_row(["x", "pdf"]));
    let top = fitted.upper_endpoint().map_or(h.clip, |e| e.min(h.clip));
    for i in 0..pdf_points {
        let x = fitted.theta + (top - fitted.theta) * i as f64 / (pdf_points - 1) as f64;
        pdf.push_str(&csv_row([x, fitted.pdf(x)]));
    }
    emit(PDF_CURVE, pdf)?;

    let mut qq = csv_row(["empirical", "model"]);
    for (e, m) in &gof.qq_points {
        qq.push_str(&csv_row([e, m]));
    }
    emit(QQ, qq)?;

    let mut ecdf = csv_row(["observer", "r_squared_adj", "ecdf"]);
    for o in &observers {
        if let Ok(points) = ecdf_of_r2(&records, o) {
            for (r2, f) in points {
                ecdf.push_str(&csv_row([o.clone(), r2.to_string(), f.to_string()]));
            }
        }
    }
    emit(ECDF_R2, ecdf)?;

    let mut points = csv_row(["trial_index", "observer", "k", "sigma"]);
    let mut per_observer: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_success()) {
        let p = r.params.expect("successful record has params");
        points.push_str(&csv_row([r.trial_index.to_string(), r.observer_id.clone(), p.k.to_string(), p.sigma.to_string()]));
        let e = per_observer.entry(&r.observer_id).or_default();
        e.0.push(p.k);
        e.1.push(p.sigma);
    }
    emit(KSIGMA_POINTS, points)?;
    let mut medians = csv_row(["observer", "k", "sigma", "n"]);
    for (o, (mut ks, mut ss)) in per_observer {
        let n = ks.len();
        medians.push_str(&csv_row([o.to_string(), median(&mut ks).to_string(), median(&mut ss).to_string(), n.to_string()]));
    }
    emit(KSIGMA_MEDIANS, medians)?;

    let mut skipped = Vec::new();
    if dir.join(store::GMM).is_file() {
        let (_, body) = load_gmm(dir)?;
        emit(GMM_ELLIPSES, contour_csv(&body.model, ellipse_points))?;
    } else {
        skipped.push("gmm");
    }
    if dir.join(store::CLASSIFY).is_file() {
        let (echo, body) = load_classify(dir)?;
        let mut rates = csv_row(["config_index", "k", "m", "observer", "mean_rate", "true_positive_rate", "true_negative_rate"]);
        for c in &echo.configs {
            for r in body.reports.get(&c.config_index).into_iter().flatten() {
                rates.push_str(&csv_row([
                    c.config_index.to_string(),
                    c.k.to_string(),
                    c.eval.m.to_string(),
                    r.observer_id.clone(),
                    r.mean_recognition_rate.to_string(),
                    r.true_positive_rate.to_string(),
                    r.true_negative_rate.to_string(),
                ]));
            }
        }
        emit(RATES, rates)?;
    } else {
        skipped.push("classify");
    }

    let echo = ReportEcho {
        observer,
        trial,
        clip_quantile,
        pdf_points,
        ellipse_points,
        seed,
        trials,
    };
    let manifest = Manifest {
        files,
        skipped,
        fitted,
        n_steps: steps.len(),
    };
    write_document(&out_dir.join(MANIFEST), REPORT_SCHEMA, echo, manifest)
}
