//! One-vs-rest linear SVMs over selected √pdf features.
//!
//! Training minimises
//!
//! ```text
//! (λ/2) |w|² + (1/n) Σ c_i max(0, 1 - y_i (w·x_i + b))
//! ```
//!
//! with Pegasos-style stochastic subgradient steps `η_t = 1/(λ t)` and
//! averages the iterates of the second half of the run. The bias is left
//! unregularised; its steps are scaled by the mean squared feature norm, which
//! makes training equivariant under `x → c x, λ → c² λ`. Class weights `c_i`
//! are inversely proportional to class counts unless disabled.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{embed_records, project, select_top_variance, FeatureSelection, FeatureVector};
use crate::geometry::Metric;
use crate::trials::TrialRecord;

pub const DEFAULT_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub lambda: f64,
    pub iterations: usize,
    pub class_weighted: bool,
}

impl SvmConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            iterations: DEFAULT_ITERATIONS,
            class_weighted: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub positive_label: String,
    pub lambda: f64,
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// True when `x` is classified as the positive observer.
    pub fn predict(&self, x: &[f64]) -> bool {
        self.decision(x) > 0.0
    }
}

fn class_weights(labels: &[bool], weighted: bool) -> Vec<f64> {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = n - pos;
    labels
        .iter()
        .map(|&l| match (weighted, l) {
            (false, _) => 1.0,
            (true, true) => n / (2.0 * pos),
            (true, false) => n / (2.0 * neg),
        })
        .collect()
}

/// Regularised, class-weighted hinge objective of a model.
pub fn svm_objective(model: &SvmModel, xs: &[Vec<f64>], labels: &[bool], class_weighted: bool) -> f64 {
    let weights = class_weights(labels, class_weighted);
    let hinge: f64 = xs
        .iter()
        .zip(labels)
        .zip(&weights)
        .map(|((x, &l), c)| {
            let y = if l { 1.0 } else { -1.0 };
            c * (1.0 - y * model.decision(x)).max(0.0)
        })
        .sum::<f64>()
        / xs.len() as f64;
    0.5 * model.lambda * model.weights.iter().map(|w| w * w).sum::<f64>() + hinge
}

/// Trains `target` against every other observer with the default iteration
/// count and class weighting.
pub fn train_ovr(features: &[(Vec<f64>, String)], target: &str, lambda: f64, seed: u64) -> Result<SvmModel> {
    let xs: Vec<Vec<f64>> = features.iter().map(|(x, _)| x.clone()).collect();
    let labels: Vec<bool> = features.iter().map(|(_, o)| o == target).collect();
    train_binary(&xs, &labels, target, &SvmConfig::new(lambda), seed)
}

pub fn train_binary(
    xs: &[Vec<f64>],
    labels: &[bool],
    positive_label: &str,
    config: &SvmConfig,
    seed: u64,
) -> Result<SvmModel> {
    if xs.len() != labels.len() || xs.is_empty() {
        return Err(Error::InvalidInput("features and labels must be non-empty and aligned".into()));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::InvalidInput(format!(
            "training set for {positive_label} has a single class"
        )));
    }
    if !(config.lambda > 0.0 && config.lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {}", config.lambda)));
    }
    let dim = xs[0].len();
    if xs.iter().any(|x| x.len() != dim) {
        return Err(Error::InvalidInput("feature vectors differ in length".into()));
    }

    let n = xs.len();
    let c = class_weights(labels, config.class_weighted);
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let bias_scale = {
        let s = xs.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / n as f64;
        if s > 0.0 {
            s
        } else {
            1.0
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut avg_w = vec![0.0; dim];
    let mut avg_b = 0.0;
    let mut averaged = 0usize;
    let t_max = config.iterations.max(1);
    let avg_from = t_max / 2 + 1;

    for t in 1..=t_max {
        let i = rng.random_range(0..n);
        let eta = 1.0 / (config.lambda * t as f64);
        let margin = y[i] * (w.iter().zip(&xs[i]).map(|(a, v)| a * v).sum::<f64>() + b);
        let shrink = 1.0 - 1.0 / t as f64;
        w.iter_mut().for_each(|a| *a *= shrink);
        if margin < 1.0 {
            let step = eta * c[i] * y[i];
            for (a, v) in w.iter_mut().zip(&xs[i]) {
                *a += step * v;
            }
            b += step * bias_scale;
        }
        if t >= avg_from {
            averaged += 1;
            for (a, v) in avg_w.iter_mut().zip(&w) {
                *a += v;
            }
            avg_b += b;
        }
    }
    let m = averaged as f64;
    let model = SvmModel {
        weights: avg_w.into_iter().map(|v| v / m).collect(),
        bias: avg_b / m,
        positive_label: positive_label.to_string(),
        lambda: config.lambda,
    };
    if model.weights.iter().any(|v| !v.is_finite()) || !model.bias.is_finite() {
        return Err(Error::InvalidInput("training diverged to non-finite weights".into()));
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Training trials per observer model.
    pub m: usize,
    /// Evaluation vectors per repeat.
    pub n: usize,
    pub repeats: usize,
    /// Defaults to `1 / (m * observers)`.
    pub lambda: Option<f64>,
    pub iterations: usize,
    pub class_weighted: bool,
    /// Z-score each selected component with the training vectors' mean and
    /// standard deviation before training and prediction.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            m: 50,
            n: 5000,
            repeats: 100,
            lambda: None,
            iterations: DEFAULT_ITERATIONS,
            class_weighted: true,
            standardize: true,
            seed: 0,
        }
    }
}

/// Per-component affine map to zero mean and unit variance.
struct Standardizer {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl Standardizer {
    fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            inv_std: vec![1.0; dim],
        }
    }

    fn fit(xs: &[&[f64]]) -> Self {
        let dim = xs.first().map_or(0, |x| x.len());
        let n = xs.len() as f64;
        let mut out = Self::identity(dim);
        for j in 0..dim {
            let mean = xs.iter().map(|x| x[j]).sum::<f64>() / n;
            let var = xs.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
            out.mean[j] = mean;
            out.inv_std[j] = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
        }
        out
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.inv_std)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }
}

/// Settings echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEcho {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub repeats: usize,
    pub metric_tag: Option<Metric>,
    pub images_per_trial: Option<usize>,
    pub lambda: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub observer_id: String,
    pub mean_recognition_rate: f64,
    pub per_repeat_rates: Vec<f64>,
    /// Mean over repeats of the positive-class accuracy (NaN-free: repeats
    /// with no positives are skipped).
    pub true_positive_rate: f64,
    pub true_negative_rate: f64,
    pub config: EvalEcho,
}

/// Trains one model per observer on `m` random trials and reports binary
/// accuracy over `repeats` draws of `n` held-out vectors.
pub fn evaluate(
    records: &[TrialRecord],
    features: &[FeatureVector],
    sel: &FeatureSelection,
    config: &EvalConfig,
) -> Result<Vec<EvalReport>> {
    if config.m == 0 || config.n == 0 || config.repeats == 0 {
        return Err(Error::InvalidParameter("m, n and repeats must be positive".into()));
    }
    let observers: Vec<String> = features
        .iter()
        .map(|f| f.observer_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let trials: Vec<usize> = features
        .iter()
        .map(|f| f.trial_index)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if observers.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: observers.len(),
        });
    }
    if trials.len() <= config.m {
        return Err(Error::InsufficientData {
            needed: config.m + 1,
            got: trials.len(),
        });
    }

    let projected: Vec<Vec<f64>> = features.iter().map(|f| project(f, sel)).collect::<Result<_>>()?;
    let lambda = config
        .lambda
        .unwrap_or(1.0 / (config.m * observers.len()) as f64);
    let svm = SvmConfig {
        lambda,
        iterations: config.iterations,
        class_weighted: config.class_weighted,
    };
    let echo = EvalEcho {
        m: config.m,
        k: sel.indices.len(),
        n: config.n,
        repeats: config.repeats,
        metric_tag: records.first().map(|r| r.metric_tag),
        images_per_trial: records.first().map(|r| r.images_per_trial),
        lambda,
        seed: config.seed,
    };

    observers
        .par_iter()
        .enumerate()
        .map(|(oi, observer)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(oi as u64);
            let train_trials: BTreeSet<usize> =
                rand::seq::index::sample(&mut rng, trials.len(), config.m)
                    .into_iter()
                    .map(|i| trials[i])
                    .collect();

            let (train, held_out): (Vec<usize>, Vec<usize>) =
                (0..features.len()).partition(|&i| train_trials.contains(&features[i].trial_index));
            if held_out.is_empty() {
                return Err(Error::InsufficientData { needed: 1, got: 0 });
            }
            let raw: Vec<&[f64]> = train.iter().map(|&i| projected[i].as_slice()).collect();
            let scaler = if config.standardize {
                Standardizer::fit(&raw)
            } else {
                Standardizer::identity(sel.indices.len())
            };
            let xs: Vec<Vec<f64>> = raw.iter().map(|x| scaler.apply(x)).collect();
            let labels: Vec<bool> = train.iter().map(|&i| &features[i].observer_id == observer).collect();
            let model = train_binary(&xs, &labels, observer, &svm, rng.random())?;
            let held_out_x: HashMap<usize, Vec<f64>> =
                held_out.iter().map(|&i| (i, scaler.apply(&projected[i]))).collect();

            let mut rates = Vec::with_capacity(config.repeats);
            let mut tpr = Vec::new();
            let mut tnr = Vec::new();
            for _ in 0..config.repeats {
                let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
                for _ in 0..config.n {
                    let i = held_out[rng.random_range(0..held_out.len())];
                    let truth = &features[i].observer_id == observer;
                    let guess = model.predict(&held_out_x[&i]);
                    if truth {
                        pos += 1;
                        tp += (guess == truth) as usize;
                    } else {
                        neg += 1;
                        tn += (guess == truth) as usize;
                    }
                }
                rates.push((tp + tn) as f64 / config.n as f64);
                if pos > 0 {
                    tpr.push(tp as f64 / pos as f64);
                }
                if neg > 0 {
                    tnr.push(tn as f64 / neg as f64);
                }
            }
            let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
            Ok(EvalReport {
                observer_id: observer.clone(),
                mean_recognition_rate: mean(&rates),
                per_repeat_rates: rates.clone(),
                true_positive_rate: mean(&tpr),
                true_negative_rate: mean(&tnr),
                config: echo.clone(),
            })
        })
        .collect()
}

/// One evaluation setting of a sweep: a trial database plus K and protocol.
#[derive(Debug, Clone)]
pub struct SweepJob<'a> {
    pub records: &'a [TrialRecord],
    pub k: usize,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub config_index: usize,
    pub metric_tag: Option<Metric>,
    pub images_per_trial: Option<usize>,
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub repeats: usize,
    pub observer: String,
    pub mean_rate: f64,
    pub repeat_index: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub reports: BTreeMap<usize, Vec<EvalReport>>,
    pub errors: BTreeMap<usize, String>,
}

impl SweepTable {
    /// Long-format rows, one per (config, observer, repeat).
    pub fn rows(&self) -> Vec<SweepRow> {
        let mut rows = Vec::new();
        for (&ci, reports) in &self.reports {
            for r in reports {
                for (ri, &rate) in r.per_repeat_rates.iter().enumerate() {
                    rows.push(SweepRow {
                        config_index: ci,
                        metric_tag: r.config.metric_tag,
                        images_per_trial: r.config.images_per_trial,
                        k: r.config.k,
                        m: r.config.m,
                        n: r.config.n,
                        repeats: r.config.repeats,
                        observer: r.observer_id.clone(),
                        mean_rate: r.mean_recognition_rate,
                        repeat_index: ri,
                        rate,
                    });
                }
            }
        }
        rows
    }
}

/// Embeds, selects and evaluates for each job; a failing job is recorded and
/// the rest still run.
pub fn sweep(jobs: &[SweepJob<'_>]) -> SweepTable {
    let mut table = SweepTable::default();
    for (ci, job) in jobs.iter().enumerate() {
        let vectors = embed_records(job.records).map(|(_, v)| v);
        let outcome = vectors.and_then(|vectors| {
            let sel = select_top_variance(&vectors, job.k)?;
            evaluate(job.records, &vectors, &sel, &job.eval)
        });
        match outcome {
            Ok(reports) => {
                table.reports.insert(ci, reports);
            }
            Err(e) => {
                table.errors.insert(ci, e.to_string());
            }
        }
    }
    table
}
