//! Square-root density embedding of fitted GPDs.
//!
//! Every pdf is sampled at 100 points between its own 5% and 95% quantiles,
//! linearly interpolated onto a 200-point grid shared by the whole set (from
//! the lowest 5% quantile to the highest 95% quantile, zero outside the pdf's
//! own window) and square-rooted. Euclidean distances between such vectors
//! approximate Hellinger distances between the windowed densities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpd::{pdf, quantile, GpdParams};
use crate::trials::TrialRecord;

pub const GRID_SIZE: usize = 200;
pub const WINDOW_SAMPLES: usize = 100;
pub const WINDOW_LO: f64 = 0.05;
pub const WINDOW_HI: f64 = 0.95;
pub const DEFAULT_K: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!("grid needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self {
            lo,
            hi,
            points: linspace(lo, hi, GRID_SIZE),
        })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (GRID_SIZE - 1) as f64
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| lo + i as f64 * step).collect();
    v[n - 1] = hi;
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub trial_index: usize,
    pub observer_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSelection {
    /// Grid indices in descending variance order.
    pub indices: Vec<usize>,
}

fn window(p: &GpdParams) -> (f64, f64) {
    (
        quantile(WINDOW_LO, p).expect("constant level"),
        quantile(WINDOW_HI, p).expect("constant level"),
    )
}

/// Grid from the lowest 5% quantile to the highest 95% quantile of the set.
pub fn common_grid(params: &[GpdParams]) -> Result<FeatureGrid> {
    if params.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let (lo, hi) = params.iter().map(window).fold(
        (f64::INFINITY, f64::NEG_INFINITY),
        |(lo, hi), (a, b)| (lo.min(a), hi.max(b)),
    );
    FeatureGrid::new(lo, hi)
}

/// √pdf of `p` on `grid`, via linear interpolation of 100 samples on the
/// pdf's own 5–95% window.
pub fn embed_pdf(p: &GpdParams, grid: &FeatureGrid, trial_index: usize, observer_id: &str) -> FeatureVector {
    let (a, b) = window(p);
    let xs = linspace(a, b, WINDOW_SAMPLES);
    let ys: Vec<f64> = xs.iter().map(|&x| pdf(x, p)).collect();
    let step = (b - a) / (WINDOW_SAMPLES - 1) as f64;
    let values = grid
        .points
        .iter()
        .map(|&g| {
            if g < a || g > b {
                return 0.0;
            }
            let pos = ((g - a) / step).clamp(0.0, (WINDOW_SAMPLES - 1) as f64);
            let i = (pos.floor() as usize).min(WINDOW_SAMPLES - 2);
            let frac = pos - i as f64;
            let y = ys[i] + frac * (ys[i + 1] - ys[i]);
            y.max(0.0).sqrt()
        })
        .collect();
    FeatureVector {
        values,
        grid_lo: grid.lo,
        grid_hi: grid.hi,
        trial_index,
        observer_id: observer_id.to_string(),
    }
}

/// Embeds every successful record on the common grid of their fitted pdfs.
pub fn embed_records(records: &[TrialRecord]) -> Result<(FeatureGrid, Vec<FeatureVector>)> {
    let fitted: Vec<(&TrialRecord, GpdParams)> = records
        .iter()
        .filter_map(|r| r.params.filter(|_| r.is_success()).map(|p| (r, p)))
        .collect();
    let params: Vec<GpdParams> = fitted.iter().map(|(_, p)| *p).collect();
    let grid = common_grid(&params)?;
    let vectors = fitted
        .par_iter()
        .map(|(r, p)| embed_pdf(p, &grid, r.trial_index, &r.observer_id))
        .collect();
    Ok((grid, vectors))
}

/// The `k` grid indices with the largest sample variance across `vectors`,
/// ties broken towards the lower index.
pub fn select_top_variance(vectors: &[FeatureVector], k: usize) -> Result<FeatureSelection> {
    if vectors.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: vectors.len(),
        });
    }
    let dim = vectors[0].values.len();
    if k == 0 || k > dim {
        return Err(Error::InvalidParameter(format!("K must be in 1..={dim}, got {k}")));
    }
    let n = vectors.len() as f64;
    let variances: Vec<f64> = (0..dim)
        .map(|j| {
            let mean = vectors.iter().map(|v| v.values[j]).sum::<f64>() / n;
            vectors.iter().map(|v| (v.values[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .collect();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(FeatureSelection { indices: order })
}

/// Components of `vector` at the selected indices, in selection order.
pub fn project(vector: &FeatureVector, sel: &FeatureSelection) -> Result<Vec<f64>> {
    sel.indices
        .iter()
        .map(|&i| {
            vector.values.get(i).copied().ok_or_else(|| {
                Error::InvalidParameter(format!("selection index {i} out of range"))
            })
        })
        .collect()
}
