//! Generalized Pareto distribution.
//!
//! Parameterised by location `theta`, shape `k` and scale `sigma`, with
//! density
//!
//! ```text
//! p(x) = (1/σ) (1 + k (x - θ)/σ)^(-1/k - 1)
//! ```
//!
//! on `θ < x` (and `x < θ - σ/k` when `k < 0`), zero elsewhere. The exponential
//! limit `k = 0` is not modelled; shapes closer to zero than [`MIN_ABS_SHAPE`]
//! are nudged away from it.
//!
//! Fitting follows a two-step scheme: the location is the sample minimum, the
//! data are shifted so that minimum sits at zero, exact zeros are dropped, and
//! a two-parameter (k, σ) GPD is fitted by maximum likelihood to the rest.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::NelderMead;

pub const MIN_ABS_SHAPE: f64 = 1e-8;

/// Minimum number of values strictly above the sample minimum for a fit.
pub const MIN_FIT_SIZE: usize = 50;

/// The likelihood is unbounded for `k < -1` (the density blows up at the
/// upper endpoint), so fitted shapes are restricted to `k >= -1`.
pub const MIN_SHAPE: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub theta: f64,
    pub k: f64,
    pub sigma: f64,
}

impl GpdParams {
    pub fn new(theta: f64, k: f64, sigma: f64) -> Result<Self> {
        if !(theta.is_finite() && k.is_finite() && sigma.is_finite()) || sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "GPD needs finite theta, k and sigma > 0 (got theta={theta}, k={k}, sigma={sigma})"
            )));
        }
        Ok(Self {
            theta,
            k: nudge_shape(k),
            sigma,
        })
    }

    /// Upper end of the support, finite only for negative shapes.
    pub fn upper_endpoint(&self) -> Option<f64> {
        (self.k < 0.0).then(|| self.theta - self.sigma / self.k)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        pdf(x, self)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        cdf(x, self)
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        quantile(q, self)
    }
}

fn nudge_shape(k: f64) -> f64 {
    if k.abs() < MIN_ABS_SHAPE {
        if k < 0.0 {
            -MIN_ABS_SHAPE
        } else {
            MIN_ABS_SHAPE
        }
    } else {
        k
    }
}

pub fn pdf(x: f64, p: &GpdParams) -> f64 {
    let z = (x - p.theta) / p.sigma;
    if z < 0.0 || x.is_nan() {
        return 0.0;
    }
    let t = p.k * z;
    if t <= -1.0 {
        return 0.0;
    }
    ((-1.0 / p.k - 1.0) * t.ln_1p()).exp() / p.sigma
}

pub fn cdf(x: f64, p: &GpdParams) -> f64 {
    let z = (x - p.theta) / p.sigma;
    if z <= 0.0 || x.is_nan() {
        return 0.0;
    }
    let t = p.k * z;
    if t <= -1.0 {
        return 1.0;
    }
    (-(-t.ln_1p() / p.k).exp_m1()).clamp(0.0, 1.0)
}

pub fn quantile(q: f64, p: &GpdParams) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile level {q} outside (0, 1)")));
    }
    Ok(p.theta + p.sigma * (-p.k * (-q).ln_1p()).exp_m1() / p.k)
}

/// Inverse-transform sampling, deterministic for a fixed seed.
pub fn sample(p: &GpdParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(p, n, &mut rng)
}

pub fn sample_with<R: Rng + ?Sized>(p: &GpdParams, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            quantile(u, p).expect("Open01 draws lie in (0, 1)")
        })
        .collect()
}

/// Log-likelihood of a two-parameter GPD (θ = 0); `-inf` outside the
/// feasible region `σ > 0`, `k >= -1`, `1 + k x/σ > 0`.
pub fn log_likelihood(data: &[f64], k: f64, sigma: f64) -> f64 {
    if !(sigma > 0.0) || !(k >= MIN_SHAPE) || !k.is_finite() {
        return f64::NEG_INFINITY;
    }
    let k = nudge_shape(k);
    let mut acc = 0.0;
    for &x in data {
        let t = k * x / sigma;
        if t <= -1.0 {
            return f64::NEG_INFINITY;
        }
        acc += t.ln_1p();
    }
    let ll = -(data.len() as f64) * sigma.ln() - (1.0 + 1.0 / k) * acc;
    if ll.is_nan() {
        f64::NEG_INFINITY
    } else {
        ll
    }
}

/// Method-of-moments start, or `(0.1, mean)` when moments are unusable.
fn moment_start(data: &[f64]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let fallback = (0.1, mean);
    if !(var > 0.0 && mean > 0.0) {
        return fallback;
    }
    let k = 0.5 * (1.0 - mean * mean / var);
    let sigma = mean * (1.0 - k);
    if k >= MIN_SHAPE && sigma > 0.0 && log_likelihood(data, k, sigma).is_finite() {
        (nudge_shape(k), sigma)
    } else {
        fallback
    }
}

struct Sums {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

fn sums(data: &[f64], k: f64, sigma: f64) -> Option<Sums> {
    let mut s = Sums {
        a: 0.0,
        b: 0.0,
        c: 0.0,
        d: 0.0,
    };
    for &x in data {
        let y = x / sigma;
        let u = 1.0 + k * y;
        if u <= 0.0 {
            return None;
        }
        s.a += (k * y).ln_1p();
        s.b += y / u;
        s.c += y * y / (u * u);
        s.d += y / (u * u);
    }
    Some(s)
}

/// Log-likelihood differences below this are rounding noise.
fn rounding_slack(ll: f64) -> f64 {
    1e-12 * ll.abs().max(1.0)
}

/// Newton refinement of the log-likelihood in (k, ln σ). Returns the refined
/// point and whether the last step was negligible.
fn newton_polish(data: &[f64], mut k: f64, mut sigma: f64) -> (f64, f64, bool) {
    let n = data.len() as f64;
    let mut ll = log_likelihood(data, k, sigma);
    for _ in 0..50 {
        let Some(s) = sums(data, k, sigma) else {
            return (k, sigma, false);
        };
        let inv = 1.0 / k;
        let gk = s.a * inv * inv - (1.0 + inv) * s.b;
        let gs = -n + (k + 1.0) * s.b;
        let hkk = 2.0 * s.b * inv * inv - 2.0 * s.a * inv * inv * inv + (1.0 + inv) * s.c;
        let hks = s.d - s.c;
        let hss = -(k + 1.0) * s.d;
        let det = hkk * hss - hks * hks;
        if !(hkk < 0.0 && det > 0.0) {
            return (k, sigma, false);
        }
        let dk = -(hss * gk - hks * gs) / det;
        let ds = -(-hks * gk + hkk * gs) / det;
        if !(dk.is_finite() && ds.is_finite()) {
            return (k, sigma, false);
        }
        let scale = 1.0 + k.abs();
        let small = |dk: f64, ds: f64| dk.abs() <= 1e-12 * scale && ds.abs() <= 1e-12;
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let nk = k + t * dk;
            let ns = sigma * (t * ds).exp();
            let nll = log_likelihood(data, nk, ns);
            if nll >= ll - rounding_slack(ll) {
                k = nk;
                sigma = ns;
                ll = nll.max(ll);
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            return (k, sigma, small(dk, ds));
        }
        if small(t * dk, t * ds) {
            return (k, sigma, true);
        }
    }
    (k, sigma, false)
}

/// Maximum-likelihood (k, σ) for positive data with location fixed at zero.
///
/// Nelder–Mead on (k, ln σ) from a method-of-moments start, restarted once
/// from its own optimum, then refined by Newton steps on the analytic score.
pub fn fit_two_param_mle(data: &[f64]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if let Some(bad) = data.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "two-parameter fit needs finite positive data, found {bad}"
        )));
    }

    let (k0, sigma0) = moment_start(data);
    let objective = |x: &[f64]| -log_likelihood(data, x[0], x[1].exp());
    let nm = NelderMead::default();
    let first = nm.minimize(objective, &[k0, sigma0.ln()], &[0.1, 0.1]);
    let second = nm.minimize(objective, &first.x, &[0.02, 0.02]);
    let iterations = first.iterations + second.iterations;
    let best = if second.value <= first.value { second } else { first };

    let (k_nm, sigma_nm) = (nudge_shape(best.x[0]), best.x[1].exp());
    let ll_nm = log_likelihood(data, k_nm, sigma_nm);
    if !ll_nm.is_finite() {
        return Err(Error::NonConvergence {
            iterations,
            best: GpdParams {
                theta: 0.0,
                k: k_nm,
                sigma: sigma_nm,
            },
        });
    }

    let (k, sigma, polished) = newton_polish(data, k_nm, sigma_nm);
    let (k, sigma) = if log_likelihood(data, k, sigma) >= ll_nm - rounding_slack(ll_nm) {
        (nudge_shape(k), sigma)
    } else {
        (k_nm, sigma_nm)
    };
    if !(best.converged || polished) {
        return Err(Error::NonConvergence {
            iterations,
            best: GpdParams { theta: 0.0, k, sigma },
        });
    }
    Ok((k, sigma))
}

/// Goodness of fit of a GPD against data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofStats {
    pub r_squared_adj: f64,
    pub n: usize,
    /// (empirical quantile, model quantile) pairs, at most [`MAX_QQ_POINTS`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub qq_points: Vec<(f64, f64)>,
}

pub const MAX_QQ_POINTS: usize = 500;

/// Number of distribution parameters charged in the adjusted R².
const R2_PARAMETERS: f64 = 2.0;

/// Adjusted R² between the model CDF and the Hazen plotting positions
/// `(i - 0.5)/n` of the sorted data, plus QQ pairs.
pub fn gof_adjusted_r2(data: &[f64], p: &GpdParams) -> Result<GofStats> {
    let n = data.len();
    if n < 10 {
        return Err(Error::InsufficientData { needed: 10, got: n });
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let position = |i: usize| (i as f64 + 0.5) / nf;

    let mean_emp = (0..n).map(position).sum::<f64>() / nf;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let emp = position(i);
        ss_res += (cdf(x, p) - emp).powi(2);
        ss_tot += (emp - mean_emp).powi(2);
    }
    let r2 = 1.0 - ss_res / ss_tot;
    let r_squared_adj = 1.0 - (1.0 - r2) * (nf - 1.0) / (nf - R2_PARAMETERS - 1.0);

    let m = n.min(MAX_QQ_POINTS);
    let qq_points = (0..m)
        .map(|j| {
            let i = if m == n {
                j
            } else {
                ((j as f64) * (n - 1) as f64 / (m - 1) as f64).round() as usize
            };
            (sorted[i], quantile(position(i), p).expect("plotting positions lie in (0, 1)"))
        })
        .collect();

    Ok(GofStats {
        r_squared_adj,
        n,
        qq_points,
    })
}

/// Location from the sample minimum, then a two-parameter MLE on the strictly
/// positive shifted values.
pub fn fit_three_param(data: &[f64]) -> Result<(GpdParams, GofStats)> {
    if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite value {bad} in data")));
    }
    let theta = data.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = data.iter().map(|x| x - theta).filter(|&x| x > 0.0).collect();
    if shifted.len() < MIN_FIT_SIZE {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_SIZE,
            got: shifted.len(),
        });
    }
    let (k, sigma) = fit_two_param_mle(&shifted).map_err(|e| match e {
        Error::NonConvergence { iterations, best } => Error::NonConvergence {
            iterations,
            best: GpdParams { theta, ..best },
        },
        other => other,
    })?;
    let params = GpdParams::new(theta, k, sigma)?;
    let gof = gof_adjusted_r2(data, &params)?;
    Ok((params, gof))
}
