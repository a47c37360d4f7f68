//! Two-dimensional Gaussian mixtures over (k, σ) parameter vectors.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trials::TrialRecord;

pub type Point = [f64; 2];
pub type Cov = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub n_components: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Point>,
    /// Full covariances, row-major.
    pub covariances: Vec<Cov>,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub max_iterations: usize,
    /// Stop once the total log-likelihood improves by less than this.
    pub tolerance: f64,
    /// Added to covariance diagonals after every M-step.
    pub reg_covar: f64,
    pub restarts: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-7,
            reg_covar: 1e-8,
            restarts: 5,
        }
    }
}

/// Best model plus the per-iteration log-likelihood of every restart.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    pub traces: Vec<Vec<f64>>,
}

/// Slack allowed when checking that EM never lowers the log-likelihood; the
/// covariance floor and rounding can cost a few ulps per step.
pub fn monotone_slack(ll: f64) -> f64 {
    1e-9 * ll.abs().max(1.0)
}

struct Gaussian {
    mean: Point,
    inv: Cov,
    log_norm: f64,
}

impl Gaussian {
    fn new(mean: Point, cov: &Cov) -> Option<Self> {
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        if !(det > 0.0) || !det.is_finite() {
            return None;
        }
        let inv = [
            [cov[1][1] / det, -cov[0][1] / det],
            [-cov[1][0] / det, cov[0][0] / det],
        ];
        Some(Self {
            mean,
            inv,
            log_norm: -(TAU.ln()) - 0.5 * det.ln(),
        })
    }

    fn log_pdf(&self, p: &Point) -> f64 {
        let dx = p[0] - self.mean[0];
        let dy = p[1] - self.mean[1];
        let q = dx * (self.inv[0][0] * dx + self.inv[0][1] * dy) + dy * (self.inv[1][0] * dx + self.inv[1][1] * dy);
        self.log_norm - 0.5 * q
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl GmmModel {
    fn gaussians(&self) -> Vec<Option<Gaussian>> {
        self.means
            .iter()
            .zip(&self.covariances)
            .map(|(m, c)| Gaussian::new(*m, c))
            .collect()
    }

    fn log_joint(gaussians: &[Option<Gaussian>], weights: &[f64], p: &Point, out: &mut [f64]) {
        for ((o, g), w) in out.iter_mut().zip(gaussians).zip(weights) {
            *o = match g {
                Some(g) if *w > 0.0 => w.ln() + g.log_pdf(p),
                _ => f64::NEG_INFINITY,
            };
        }
    }

    /// Mixture density at `point`.
    pub fn density(&self, point: &Point) -> f64 {
        let gaussians = self.gaussians();
        let mut buf = vec![0.0; self.n_components];
        Self::log_joint(&gaussians, &self.weights, point, &mut buf);
        log_sum_exp(&buf).exp()
    }

    /// Total log-likelihood of `points` under the model.
    pub fn score(&self, points: &[Point]) -> f64 {
        let gaussians = self.gaussians();
        let mut buf = vec![0.0; self.n_components];
        points
            .iter()
            .map(|p| {
                Self::log_joint(&gaussians, &self.weights, p, &mut buf);
                log_sum_exp(&buf)
            })
            .sum()
    }

    /// Index of the component with the largest responsibility.
    pub fn predict(&self, point: &Point) -> usize {
        argmax(&responsibilities(self, point))
    }

    /// `n_points` points of the `n_sigma` Mahalanobis ellipse of a component.
    pub fn ellipse(&self, component: usize, n_sigma: f64, n_points: usize) -> Vec<Point> {
        let c = &self.covariances[component];
        let m = self.means[component];
        let (a, b, d) = (c[0][0], c[0][1], c[1][1]);
        let half_tr = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        let (l1, l2) = (half_tr + disc, (half_tr - disc).max(0.0));
        let angle = if b == 0.0 && a >= d {
            0.0
        } else if b == 0.0 {
            0.5 * PI
        } else {
            (l1 - a).atan2(b)
        };
        let (s, co) = angle.sin_cos();
        (0..n_points)
            .map(|i| {
                let t = TAU * i as f64 / n_points as f64;
                let x = n_sigma * l1.sqrt() * t.cos();
                let y = n_sigma * l2.sqrt() * t.sin();
                [m[0] + co * x - s * y, m[1] + s * x + co * y]
            })
            .collect()
    }
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Posterior component probabilities for one point.
pub fn responsibilities(model: &GmmModel, point: &Point) -> Vec<f64> {
    let gaussians = model.gaussians();
    let mut buf = vec![0.0; model.n_components];
    GmmModel::log_joint(&gaussians, &model.weights, point, &mut buf);
    let total = log_sum_exp(&buf);
    buf.iter().map(|v| (v - total).exp()).collect()
}

fn kmeans_pp(points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[next];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn sq_dist(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn weighted_cov(points: &[Point], weights: &[f64], mean: &Point, total: f64, reg: f64) -> Cov {
    let mut c = [[0.0; 2]; 2];
    for (p, w) in points.iter().zip(weights) {
        let dx = p[0] - mean[0];
        let dy = p[1] - mean[1];
        c[0][0] += w * dx * dx;
        c[0][1] += w * dx * dy;
        c[1][1] += w * dy * dy;
    }
    c[0][0] = c[0][0] / total + reg;
    c[1][1] = c[1][1] / total + reg;
    c[0][1] /= total;
    c[1][0] = c[0][1];
    c
}

fn initial_model(points: &[Point], k: usize, rng: &mut ChaCha8Rng, reg: f64) -> GmmModel {
    let centers = kmeans_pp(points, k, rng);
    let labels: Vec<usize> = points
        .iter()
        .map(|p| {
            let d: Vec<f64> = centers.iter().map(|c| -sq_dist(p, c)).collect();
            argmax(&d)
        })
        .collect();
    let n = points.len() as f64;
    let ones = vec![1.0; points.len()];
    let global_mean = [
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let global_cov = weighted_cov(points, &ones, &global_mean, n, reg);

    let mut weights = Vec::with_capacity(k);
    let mut covariances = Vec::with_capacity(k);
    for (j, center) in centers.iter().enumerate() {
        let member: Vec<f64> = labels.iter().map(|&l| if l == j { 1.0 } else { 0.0 }).collect();
        let count: f64 = member.iter().sum();
        weights.push(count.max(1.0) / n);
        let cov = if count >= 2.0 {
            weighted_cov(points, &member, center, count, reg)
        } else {
            global_cov
        };
        covariances.push(if Gaussian::new(*center, &cov).is_some() { cov } else { global_cov });
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GmmModel {
        n_components: k,
        weights,
        means: centers,
        covariances,
        log_likelihood: f64::NEG_INFINITY,
    }
}

fn run_em(points: &[Point], mut model: GmmModel, config: &GmmConfig) -> (GmmModel, Vec<f64>) {
    let n = points.len();
    let k = model.n_components;
    let mut resp = vec![0.0; n * k];
    let mut buf = vec![0.0; k];
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;

    for _ in 0..config.max_iterations {
        // E-step
        let gaussians = model.gaussians();
        let mut ll = 0.0;
        for (i, p) in points.iter().enumerate() {
            GmmModel::log_joint(&gaussians, &model.weights, p, &mut buf);
            let total = log_sum_exp(&buf);
            ll += total;
            for j in 0..k {
                resp[i * k + j] = (buf[j] - total).exp();
            }
        }
        debug_assert!(
            ll >= prev - monotone_slack(prev),
            "EM log-likelihood decreased from {prev} to {ll}"
        );
        trace.push(ll);
        model.log_likelihood = ll;
        if ll - prev < config.tolerance {
            break;
        }
        prev = ll;

        // M-step
        for j in 0..k {
            let w: Vec<f64> = (0..n).map(|i| resp[i * k + j]).collect();
            let nk: f64 = w.iter().sum();
            if nk < 1e-10 * n as f64 {
                continue;
            }
            let mean = [
                points.iter().zip(&w).map(|(p, w)| w * p[0]).sum::<f64>() / nk,
                points.iter().zip(&w).map(|(p, w)| w * p[1]).sum::<f64>() / nk,
            ];
            let cov = weighted_cov(points, &w, &mean, nk, config.reg_covar);
            if Gaussian::new(mean, &cov).is_some() {
                model.means[j] = mean;
                model.covariances[j] = cov;
            }
            model.weights[j] = nk / n as f64;
        }
        let total: f64 = model.weights.iter().sum();
        model.weights.iter_mut().for_each(|w| *w /= total);
    }
    (model, trace)
}

/// EM fit with k-means++ starts; keeps the best of `config.restarts` runs.
pub fn fit_gmm(points: &[Point], n_components: usize, seed: u64, config: &GmmConfig) -> Result<GmmModel> {
    fit_gmm_traced(points, n_components, seed, config).map(|f| f.model)
}

pub fn fit_gmm_traced(points: &[Point], n_components: usize, seed: u64, config: &GmmConfig) -> Result<GmmFit> {
    if n_components == 0 {
        return Err(Error::InvalidParameter("n_components must be at least 1".into()));
    }
    if points.len() < 10 * n_components {
        return Err(Error::InsufficientData {
            needed: 10 * n_components,
            got: points.len(),
        });
    }
    if points.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::InvalidInput("non-finite point".into()));
    }
    if points.iter().all(|p| p == &points[0]) {
        return Err(Error::InvalidInput("all points are identical".into()));
    }

    let mut best: Option<GmmModel> = None;
    let mut traces = Vec::with_capacity(config.restarts.max(1));
    for restart in 0..config.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let init = initial_model(points, n_components, &mut rng, config.reg_covar);
        let (model, trace) = run_em(points, init, config);
        traces.push(trace);
        if best.as_ref().is_none_or(|b| model.log_likelihood > b.log_likelihood) {
            best = Some(model);
        }
    }
    Ok(GmmFit {
        model: best.expect("at least one restart"),
        traces,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverMap {
    pub assignment: BTreeMap<String, usize>,
    /// Fraction of points whose hard component is the majority observer of
    /// that component.
    pub purity: f64,
}

/// Each observer's (k, σ) points mapped to the component with the largest
/// summed responsibility.
pub fn cluster_observer_map(model: &GmmModel, records: &[TrialRecord]) -> ObserverMap {
    let mut sums: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut table: BTreeMap<(usize, String), usize> = BTreeMap::new();
    let mut total = 0usize;
    for r in records.iter().filter(|r| r.is_success()) {
        let p = r.params.expect("successful record has params");
        let resp = responsibilities(model, &[p.k, p.sigma]);
        let entry = sums
            .entry(r.observer_id.clone())
            .or_insert_with(|| vec![0.0; model.n_components]);
        for (s, v) in entry.iter_mut().zip(&resp) {
            *s += v;
        }
        *table.entry((argmax(&resp), r.observer_id.clone())).or_default() += 1;
        total += 1;
    }
    let assignment = sums.into_iter().map(|(obs, s)| (obs, argmax(&s))).collect();
    let mut majority = vec![0usize; model.n_components];
    for ((component, _), count) in &table {
        majority[*component] = majority[*component].max(*count);
    }
    let purity = if total == 0 {
        0.0
    } else {
        majority.iter().sum::<usize>() as f64 / total as f64
    };
    ObserverMap { assignment, purity }
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must have equal length");
    let n = a.len();
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let c2 = |v: u64| (v * v.saturating_sub(1) / 2) as f64;
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sum_a: f64 = rows.values().map(|&v| c2(v)).sum();
    let sum_b: f64 = cols.values().map(|&v| c2(v)).sum();
    let total = c2(n as u64);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if max_index == expected {
        return 1.0;
    }
    (index - expected) / (max_index - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Metric;
    use crate::gpd::GpdParams;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(centers: &[Point], per: usize, sd: f64, seed: u64) -> (Vec<Point>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for (j, c) in centers.iter().enumerate() {
            for _ in 0..per {
                let dx: f64 = StandardNormal.sample(&mut rng);
                let dy: f64 = StandardNormal.sample(&mut rng);
                pts.push([c[0] + sd * dx, c[1] + sd * dy]);
                labels.push(j);
            }
        }
        (pts, labels)
    }

    fn two_component() -> GmmModel {
        GmmModel {
            n_components: 2,
            weights: vec![0.5, 0.5],
            means: vec![[-1.0, 0.0], [1.0, 0.0]],
            covariances: vec![[[0.3, 0.1], [0.1, 0.2]], [[0.3, -0.1], [-0.1, 0.2]]],
            log_likelihood: 0.0,
        }
    }

    #[test]
    fn single_gaussian() {
        let (pts, _) = blobs(&[[2.0, -1.0]], 500, 0.5, 1);
        let model = fit_gmm(&pts, 1, 3, &GmmConfig::default()).unwrap();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
        let se = 0.5 / n.sqrt();
        assert!((model.means[0][0] - mx).abs() < 3.0 * se);
        assert!((model.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_input() {
        let pts = vec![[1.0, 1.0]; 100];
        assert!(fit_gmm(&pts, 2, 0, &GmmConfig::default()).is_err());
        let (pts, _) = blobs(&[[0.0, 0.0]], 15, 1.0, 0);
        assert!(matches!(
            fit_gmm(&pts, 2, 0, &GmmConfig::default()),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn em_is_monotone_and_deterministic() {
        let (pts, _) = blobs(&[[0.0, 0.0], [3.0, 1.0], [1.0, 4.0]], 100, 1.0, 9);
        let fit = fit_gmm_traced(&pts, 3, 5, &GmmConfig::default()).unwrap();
        for trace in &fit.traces {
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - monotone_slack(w[0]));
            }
        }
        let again = fit_gmm(&pts, 3, 5, &GmmConfig::default()).unwrap();
        assert_eq!(fit.model, again);
        let s: f64 = fit.model.weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn responsibility_examples() {
        let model = GmmModel {
            n_components: 2,
            weights: vec![0.5, 0.5],
            means: vec![[0.0, 0.0], [10.0, 0.0]],
            covariances: vec![[[1.0, 0.0], [0.0, 1.0]]; 2],
            log_likelihood: 0.0,
        };
        assert!(responsibilities(&model, &[0.0, 0.0])[0] > 0.99);
        let r = responsibilities(&model, &[5.0, 3.0]);
        assert!((r[0] - 0.5).abs() < 1e-9 && (r[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn responsibilities_match_density_ratio() {
        let model = two_component();
        let normal = |m: Point, c: Cov, p: Point| {
            let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
            let (dx, dy) = (p[0] - m[0], p[1] - m[1]);
            let q = (c[1][1] * dx * dx - 2.0 * c[0][1] * dx * dy + c[0][0] * dy * dy) / det;
            (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
        };
        for p in [[0.1, 0.2], [-0.7, 0.4], [1.5, -0.3]] {
            let f: Vec<f64> = (0..2)
                .map(|j| model.weights[j] * normal(model.means[j], model.covariances[j], p))
                .collect();
            let total = f[0] + f[1];
            let r = responsibilities(&model, &p);
            for j in 0..2 {
                assert!((r[j] - f[j] / total).abs() < 1e-12);
            }
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((model.density(&p) - total).abs() < 1e-12);
        }
    }

    #[test]
    fn ari_basics() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.0);
    }

    #[test]
    fn ellipse_radius_matches_sigma() {
        let model = two_component();
        let pts = model.ellipse(0, 2.0, 100);
        assert_eq!(pts.len(), 100);
        let g = Gaussian::new(model.means[0], &model.covariances[0]).unwrap();
        for p in pts {
            // Mahalanobis distance 2 on every point
            let q = -2.0 * (g.log_pdf(&p) - g.log_norm);
            assert!((q - 4.0).abs() < 1e-9);
        }
    }

    fn rec(obs: &str, k: f64, sigma: f64) -> TrialRecord {
        TrialRecord {
            trial_index: 0,
            observer_id: obs.into(),
            metric_tag: Metric::Euclidean,
            images_per_trial: 1,
            params: Some(GpdParams::new(0.0, k, sigma).unwrap()),
            gof: None,
            n_steps: 100,
            failure: None,
        }
    }

    #[test]
    fn observer_map_single_component() {
        let (pts, labels) = blobs(&[[0.0, 1.0], [0.5, 2.0], [1.0, 3.0]], 20, 0.05, 2);
        let records: Vec<TrialRecord> = pts
            .iter()
            .zip(&labels)
            .map(|(p, l)| rec(&format!("o{l}"), p[0] + 0.1, p[1]))
            .collect();
        let points: Vec<Point> = records.iter().map(|r| [r.params.unwrap().k, r.params.unwrap().sigma]).collect();
        let model = fit_gmm(&points, 1, 0, &GmmConfig::default()).unwrap();
        let map = cluster_observer_map(&model, &records);
        assert!(map.assignment.values().all(|&c| c == 0));
        assert!((map.purity - 1.0 / 3.0).abs() < 1e-12);

        let model3 = fit_gmm(&points, 3, 0, &GmmConfig::default()).unwrap();
        let map3 = cluster_observer_map(&model3, &records);
        let mut comps: Vec<usize> = map3.assignment.values().copied().collect();
        comps.sort();
        comps.dedup();
        assert_eq!(comps.len(), 3);
        assert_eq!(map3.purity, 1.0);
        let mut reversed = records.clone();
        reversed.reverse();
        assert_eq!(cluster_observer_map(&model3, &reversed), map3);
    }
}
