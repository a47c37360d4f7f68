//! Random image-subset experiments.
//!
//! Each trial draws one subset of images (shared by every observer in that
//! trial), pools each observer's saccadic step lengths over the subset and
//! fits a GPD. The result is a database of `n_trials x observers` records.

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{step_length, Metric, DEFAULT_MARGIN};
use crate::gpd::{fit_three_param, GofStats, GpdParams};
use crate::ingest::{nonfixation_pairs, EyeTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub n_trials: usize,
    pub images_per_trial: usize,
    pub metric_tag: Metric,
    pub seed: u64,
    /// Pixel-to-disc margin, used by the hyperbolic metric only.
    pub disc_margin: f64,
}

impl TrialPlan {
    pub fn new(n_trials: usize, images_per_trial: usize, metric_tag: Metric, seed: u64) -> Self {
        Self {
            n_trials,
            images_per_trial,
            metric_tag,
            seed,
            disc_margin: DEFAULT_MARGIN,
        }
    }

    pub fn validate(&self, total_images: usize) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::InvalidParameter("n_trials must be at least 1".into()));
        }
        if self.images_per_trial == 0 || self.images_per_trial > total_images {
            return Err(Error::InvalidParameter(format!(
                "images_per_trial must be in 1..={total_images}, got {}",
                self.images_per_trial
            )));
        }
        if !(self.disc_margin > 0.0 && self.disc_margin <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "disc margin {} outside (0, 1]",
                self.disc_margin
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub observer_id: String,
    pub metric_tag: Metric,
    pub images_per_trial: usize,
    pub params: Option<GpdParams>,
    pub gof: Option<GofStats>,
    pub n_steps: usize,
    /// Why the fit failed; `None` for successful trials.
    pub failure: Option<String>,
}

impl TrialRecord {
    pub fn is_success(&self) -> bool {
        self.failure.is_none() && self.params.is_some()
    }
}

/// Step lengths of all saccadic pairs of one trace, in temporal order.
pub fn trace_step_lengths(trace: &EyeTrace, metric: Metric, margin: f64) -> Result<Vec<f64>> {
    nonfixation_pairs(trace)?
        .iter()
        .map(|(a, b)| {
            step_length(a, b, metric, trace.screen_w, trace.screen_h, margin).map(|s| s.value)
        })
        .collect()
}

/// Concatenated step lengths of `observer` over the images in `image_subset`,
/// in subset order then temporal order.
pub fn pool_step_lengths(
    traces: &[EyeTrace],
    observer: &str,
    image_subset: &[String],
    metric: Metric,
    margin: f64,
) -> Result<Vec<f64>> {
    if image_subset.is_empty() {
        return Err(Error::InvalidParameter("image subset is empty".into()));
    }
    let mut pooled = Vec::new();
    let mut found = false;
    for image in image_subset {
        for trace in traces
            .iter()
            .filter(|t| t.observer_id == observer && &t.image_id == image)
        {
            found = true;
            pooled.extend(trace_step_lengths(trace, metric, margin)?);
        }
    }
    if !found {
        return Err(Error::UnknownObserver(observer.to_string()));
    }
    Ok(pooled)
}

/// Per-(observer, image) step lengths computed once up front.
struct StepTable {
    observers: Vec<String>,
    images: Vec<String>,
    steps: HashMap<(usize, usize), Vec<f64>>,
}

impl StepTable {
    fn build(traces: &[EyeTrace], metric: Metric, margin: f64) -> Result<Self> {
        let observers: Vec<String> = traces
            .iter()
            .map(|t| t.observer_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let images: Vec<String> = traces
            .iter()
            .map(|t| t.image_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let obs_index: HashMap<&str, usize> =
            observers.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let img_index: HashMap<&str, usize> =
            images.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

        let per_trace: Vec<Vec<f64>> = traces
            .par_iter()
            .map(|t| trace_step_lengths(t, metric, margin))
            .collect::<Result<_>>()?;
        let mut steps: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
        for (trace, s) in traces.iter().zip(per_trace) {
            let key = (
                obs_index[trace.observer_id.as_str()],
                img_index[trace.image_id.as_str()],
            );
            steps.entry(key).or_default().extend(s);
        }
        Ok(Self {
            observers,
            images,
            steps,
        })
    }
}

/// Image indices (into the sorted image list) drawn for one trial.
pub fn trial_subset(seed: u64, trial_index: usize, total_images: usize, amount: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index as u64);
    let mut subset = rand::seq::index::sample(&mut rng, total_images, amount).into_vec();
    subset.sort_unstable();
    subset
}

/// Sorted distinct image ids of a trace set.
pub fn image_ids(traces: &[EyeTrace]) -> Vec<String> {
    traces
        .iter()
        .map(|t| t.image_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Sorted distinct observer ids of a trace set.
pub fn observer_ids(traces: &[EyeTrace]) -> Vec<String> {
    traces
        .iter()
        .map(|t| t.observer_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Runs the plan. Records come back in (trial, observer) order; fits that
/// fail are kept with a failure message.
pub fn run_trials(traces: &[EyeTrace], plan: &TrialPlan) -> Result<Vec<TrialRecord>> {
    if traces.is_empty() {
        return Err(Error::NoTraces);
    }
    let table = StepTable::build(traces, plan.metric_tag, plan.disc_margin)?;
    plan.validate(table.images.len())?;

    let per_trial: Vec<Vec<TrialRecord>> = (0..plan.n_trials)
        .into_par_iter()
        .map(|trial_index| {
            let subset = trial_subset(plan.seed, trial_index, table.images.len(), plan.images_per_trial);
            table
                .observers
                .iter()
                .enumerate()
                .map(|(oi, observer)| {
                    let mut present = false;
                    let mut pooled = Vec::new();
                    for &img in &subset {
                        if let Some(s) = table.steps.get(&(oi, img)) {
                            present = true;
                            pooled.extend_from_slice(s);
                        }
                    }
                    let mut record = TrialRecord {
                        trial_index,
                        observer_id: observer.clone(),
                        metric_tag: plan.metric_tag,
                        images_per_trial: plan.images_per_trial,
                        params: None,
                        gof: None,
                        n_steps: pooled.len(),
                        failure: None,
                    };
                    if !present {
                        record.failure = Some(Error::UnknownObserver(observer.clone()).to_string());
                        return record;
                    }
                    match fit_three_param(&pooled) {
                        Ok((params, mut gof)) => {
                            gof.qq_points.clear();
                            record.params = Some(params);
                            record.gof = Some(gof);
                        }
                        Err(e) => record.failure = Some(e.to_string()),
                    }
                    record
                })
                .collect()
        })
        .collect();
    Ok(per_trial.into_iter().flatten().collect())
}

/// Sorted adjusted R² values of an observer's successful trials with
/// cumulative fractions `i/n`.
pub fn ecdf_of_r2(records: &[TrialRecord], observer: &str) -> Result<Vec<(f64, f64)>> {
    let mut values: Vec<f64> = records
        .iter()
        .filter(|r| r.observer_id == observer && r.is_success())
        .filter_map(|r| r.gof.as_ref().map(|g| g.r_squared_adj))
        .collect();
    if values.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    Ok(values
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect())
}
