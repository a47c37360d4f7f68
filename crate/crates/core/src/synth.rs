//! Synthetic saccade-and-fixate traces with known ground truth.
//!
//! Each trace alternates fixation clusters (Gaussian jitter around a center)
//! with saccadic runs whose per-sample step lengths are GPD draws in uniformly
//! random directions. A step that would leave the screen has the offending
//! direction component mirrored, which keeps its length intact; only when the
//! mirrored step is still outside (a step wider than the available room on
//! both sides) are the coordinates folded back, and the length changes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Open01};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpd::GpdParams;
use crate::ingest::{EyeSample, EyeTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverProfile {
    pub observer_id: String,
    pub saccade_gpd: GpdParams,
    /// Standard deviation of fixation samples around their center, in pixels.
    pub fixation_jitter_sigma: f64,
    /// Inclusive range of fixation durations in milliseconds.
    pub fixation_duration: (f64, f64),
    /// Inclusive range of saccadic samples per run.
    pub saccade_length: (usize, usize),
}

impl ObserverProfile {
    pub fn new(observer_id: impl Into<String>, saccade_gpd: GpdParams) -> Self {
        Self {
            observer_id: observer_id.into(),
            saccade_gpd,
            fixation_jitter_sigma: 3.0,
            fixation_duration: (150.0, 400.0),
            saccade_length: (4, 10),
        }
    }

    fn validate(&self) -> Result<()> {
        let (d0, d1) = self.fixation_duration;
        let (s0, s1) = self.saccade_length;
        if !(self.fixation_jitter_sigma >= 0.0 && self.fixation_jitter_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{}: jitter must be non-negative",
                self.observer_id
            )));
        }
        if !(d0 > 0.0 && d0 <= d1 && d1.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{}: fixation durations must form a positive range",
                self.observer_id
            )));
        }
        if s0 < 2 || s0 > s1 {
            return Err(Error::InvalidParameter(format!(
                "{}: saccade runs need at least 2 samples",
                self.observer_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub screen_w: f64,
    pub screen_h: f64,
    /// Milliseconds between consecutive samples.
    pub sample_interval: f64,
    /// Fixation clusters per trace; saccadic runs sit between them.
    pub fixations_per_image: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            screen_w: 1280.0,
            screen_h: 1024.0,
            sample_interval: 4.0,
            fixations_per_image: 10,
        }
    }
}

/// Image identifiers used by the generator, `img0000`, `img0001`, ...
pub fn image_id(index: usize) -> String {
    format!("img{index:04}")
}

pub fn generate_traces(profiles: &[ObserverProfile], n_images: usize, seed: u64) -> Result<Vec<EyeTrace>> {
    generate_traces_with(profiles, n_images, seed, &SynthConfig::default())
}

/// One trace per (observer, image), observers in input order, images
/// ascending. Every trace draws from its own RNG stream.
pub fn generate_traces_with(
    profiles: &[ObserverProfile],
    n_images: usize,
    seed: u64,
    config: &SynthConfig,
) -> Result<Vec<EyeTrace>> {
    if profiles.is_empty() {
        return Err(Error::InvalidInput("no observer profiles".into()));
    }
    if n_images == 0 || config.fixations_per_image == 0 {
        return Err(Error::InvalidParameter("need at least one image and one fixation".into()));
    }
    if !(config.screen_w > 0.0 && config.screen_h > 0.0 && config.sample_interval > 0.0) {
        return Err(Error::InvalidParameter("screen size and sample interval must be positive".into()));
    }
    profiles.iter().try_for_each(ObserverProfile::validate)?;

    let jobs: Vec<(usize, usize)> = (0..profiles.len())
        .flat_map(|o| (0..n_images).map(move |i| (o, i)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(o, i)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((o * n_images + i) as u64);
            one_trace(&profiles[o], &image_id(i), config, &mut rng)
        })
        .collect())
}

struct Walker<'a> {
    config: &'a SynthConfig,
    samples: Vec<EyeSample>,
    t: f64,
}

impl Walker<'_> {
    fn push(&mut self, x: f64, y: f64, fixation: bool) {
        self.samples.push(EyeSample::labeled(self.t, x, y, fixation));
        self.t += self.config.sample_interval;
    }
}

fn fold(v: f64, max: f64) -> f64 {
    let period = 2.0 * max;
    let r = v.rem_euclid(period);
    if r > max {
        period - r
    } else {
        r
    }
}

/// Moves `length` pixels from `(x, y)` in direction `angle`, mirroring the
/// direction at the borders.
fn step(x: f64, y: f64, length: f64, angle: f64, w: f64, h: f64) -> (f64, f64) {
    let (mut dx, mut dy) = (length * angle.cos(), length * angle.sin());
    if !(0.0..=w).contains(&(x + dx)) {
        dx = -dx;
    }
    if !(0.0..=h).contains(&(y + dy)) {
        dy = -dy;
    }
    (fold(x + dx, w), fold(y + dy, h))
}

fn one_trace(profile: &ObserverProfile, image: &str, config: &SynthConfig, rng: &mut ChaCha8Rng) -> EyeTrace {
    let (w, h) = (config.screen_w, config.screen_h);
    let jitter = Normal::new(0.0, profile.fixation_jitter_sigma.max(f64::MIN_POSITIVE))
        .expect("finite non-negative sigma");
    let gpd_step = |rng: &mut ChaCha8Rng| {
        let u: f64 = Open01.sample(rng);
        profile.saccade_gpd.quantile(u).expect("u in (0, 1)")
    };

    let mut walker = Walker {
        config,
        samples: Vec::new(),
        t: 0.0,
    };
    let (mut cx, mut cy) = (rng.random_range(0.0..=w), rng.random_range(0.0..=h));

    for f in 0..config.fixations_per_image {
        let (d0, d1) = profile.fixation_duration;
        let duration = if d0 == d1 { d0 } else { rng.random_range(d0..=d1) };
        let n_fix = ((duration / config.sample_interval).round() as usize).max(1);
        for _ in 0..n_fix {
            let (x, y) = if profile.fixation_jitter_sigma == 0.0 {
                (cx, cy)
            } else {
                (
                    fold(cx + jitter.sample(rng), w),
                    fold(cy + jitter.sample(rng), h),
                )
            };
            walker.push(x, y, true);
        }
        if f + 1 == config.fixations_per_image {
            break;
        }

        let (s0, s1) = profile.saccade_length;
        let run = rng.random_range(s0..=s1);
        let (mut x, mut y) = (cx, cy);
        for _ in 0..run {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            (x, y) = step(x, y, gpd_step(rng), angle, w, h);
            walker.push(x, y, false);
        }
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        (cx, cy) = step(x, y, gpd_step(rng), angle, w, h);
    }

    EyeTrace::new(profile.observer_id.clone(), image, w, h, walker.samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Metric;
    use crate::gpd::fit_three_param;
    use crate::trials::trace_step_lengths;

    fn profile(k: f64, sigma: f64) -> ObserverProfile {
        ObserverProfile::new("o", GpdParams::new(0.0, k, sigma).unwrap())
    }

    #[test]
    fn zero_jitter_steps_are_exact_gpd_draws() {
        let mut p = profile(0.2, 8.0);
        p.fixation_jitter_sigma = 0.0;
        let cfg = SynthConfig::default();
        let traces = generate_traces_with(&[p.clone()], 3, 11, &cfg).unwrap();
        for (i, trace) in traces.iter().enumerate() {
            // Regenerate the draws the generator made, in order, and keep the
            // within-run ones.
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            rng.set_stream(i as u64);
            let expected = replay_within_run_steps(&p, &cfg, &mut rng);
            let got = trace_step_lengths(trace, Metric::Euclidean, 0.95).unwrap();
            assert_eq!(got.len(), expected.len());
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() < 1e-9 * (1.0 + e), "{g} vs {e}");
            }
        }
    }

    fn replay_within_run_steps(p: &ObserverProfile, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut out = Vec::new();
        let _: f64 = rng.random_range(0.0..=cfg.screen_w);
        let _: f64 = rng.random_range(0.0..=cfg.screen_h);
        for f in 0..cfg.fixations_per_image {
            let _: f64 = rng.random_range(p.fixation_duration.0..=p.fixation_duration.1);
            if f + 1 == cfg.fixations_per_image {
                break;
            }
            let run = rng.random_range(p.saccade_length.0..=p.saccade_length.1);
            for j in 0..=run {
                let _: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let u: f64 = Open01.sample(rng);
                // The first draw leaves the fixation and the last enters the
                // next one; only the ones between saccadic samples count.
                if j > 0 && j < run {
                    out.push(p.saccade_gpd.quantile(u).unwrap());
                }
            }
        }
        out
    }

    #[test]
    fn labels_alternate_strictly() {
        let traces = generate_traces(&[profile(0.3, 10.0)], 4, 2).unwrap();
        for trace in &traces {
            let mut regimes: Vec<bool> = Vec::new();
            for s in &trace.samples {
                let fix = s.fixation.unwrap();
                if regimes.last() != Some(&fix) {
                    regimes.push(fix);
                }
            }
            assert_eq!(regimes.len(), 2 * SynthConfig::default().fixations_per_image - 1);
            assert!(regimes.iter().step_by(2).all(|&r| r));
            assert!(regimes.iter().skip(1).step_by(2).all(|&r| !r));
        }
    }

    #[test]
    fn samples_stay_on_screen_and_time_increases() {
        let traces = generate_traces(&[profile(0.8, 60.0), profile(-0.3, 40.0)], 20, 3).unwrap();
        for trace in &traces {
            assert_eq!(trace.out_of_range, 0);
            assert!(trace.samples.windows(2).all(|w| w[1].t > w[0].t));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let p = [profile(0.1, 5.0)];
        assert_eq!(generate_traces(&p, 5, 9).unwrap(), generate_traces(&p, 5, 9).unwrap());
        assert_ne!(generate_traces(&p, 5, 9).unwrap(), generate_traces(&p, 5, 10).unwrap());
    }

    #[test]
    fn pooled_steps_recover_profile() {
        let traces = generate_traces(&[profile(0.25, 2.0)], 200, 4).unwrap();
        let pooled: Vec<f64> = traces
            .iter()
            .flat_map(|t| trace_step_lengths(t, Metric::Euclidean, 0.95).unwrap())
            .collect();
        let (fit, _) = fit_three_param(&pooled).unwrap();
        assert!((fit.k - 0.25).abs() <= 0.05, "k {}", fit.k);
        assert!((fit.sigma - 2.0).abs() <= 0.1, "sigma {}", fit.sigma);
    }

    #[test]
    fn invalid_profiles_are_rejected() {
        assert!(generate_traces(&[], 1, 0).is_err());
        let mut p = profile(0.1, 1.0);
        p.saccade_length = (1, 3);
        assert!(generate_traces(&[p], 1, 0).is_err());
    }
}
