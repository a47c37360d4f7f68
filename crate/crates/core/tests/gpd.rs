use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saccade_core::gpd::{
    cdf, fit_three_param, fit_two_param_mle, gof_adjusted_r2, log_likelihood, pdf, quantile, sample, GpdParams,
};

mod common;

fn random_params(rng: &mut impl Rng) -> GpdParams {
    let mut k: f64 = rng.random_range(-0.9..0.9);
    if k.abs() < 0.01 {
        k = 0.01f64.copysign(k);
    }
    GpdParams::new(rng.random_range(-5.0..5.0), k, rng.random_range(0.1..10.0)).unwrap()
}

#[test]
fn density_integrates_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let p = random_params(&mut rng);
        // Truncated a hair below the top so finite supports avoid the
        // endpoint kink; the expected mass is then 1 - 1e-9.
        let upper = quantile(1.0 - 1e-9, &p).unwrap();
        let mass = common::gpd_mass(&p, upper);
        assert!((1.0 - 1e-6..=1.0).contains(&mass), "{p:?}: mass {mass}");
    }
}

#[test]
fn cdf_matches_integrated_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let p = random_params(&mut rng);
        let x = quantile(rng.random_range(0.01..0.99), &p).unwrap();
        let mass = common::gpd_mass(&p, x);
        assert!((mass - cdf(x, &p)).abs() < 1e-8, "{p:?} at {x}: {mass} vs {}", cdf(x, &p));
    }
}

#[test]
fn cdf_inverts_quantile() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let p = random_params(&mut rng);
        let q: f64 = rng.random_range(1e-6..1.0 - 1e-6);
        assert!((cdf(quantile(q, &p).unwrap(), &p) - q).abs() < 1e-12);
    }
    let p = GpdParams::new(1.0, 0.4, 3.0).unwrap();
    for i in 1..=999 {
        let q = i as f64 / 1000.0;
        assert!((cdf(quantile(q, &p).unwrap(), &p) - q).abs() < 1e-12);
    }
}

#[test]
fn cdf_is_monotone_and_pdf_non_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let p = random_params(&mut rng);
        let hi = quantile(0.999, &p).unwrap() + p.sigma;
        let mut prev = 0.0;
        for i in 0..=2000 {
            let x = p.theta - p.sigma + (hi - p.theta + p.sigma) * i as f64 / 2000.0;
            let c = cdf(x, &p);
            assert!(c >= prev && (0.0..=1.0).contains(&c));
            assert!(pdf(x, &p) >= 0.0);
            prev = c;
        }
    }
}

#[test]
fn single_draw_is_reproducible() {
    let p = GpdParams::new(0.0, 0.3, 2.0).unwrap();
    assert_eq!(sample(&p, 1, 42), sample(&p, 1, 42));
}

fn fit_params(data: &[f64]) -> GpdParams {
    fit_three_param(data).unwrap().0
}

#[test]
fn shift_equivariance() {
    for seed in 0..10 {
        let data = sample(&GpdParams::new(0.0, 0.3, 2.0).unwrap(), 5000, seed);
        let base = fit_params(&data);
        for c in [-3.0, 0.5, 17.0] {
            let shifted: Vec<f64> = data.iter().map(|x| x + c).collect();
            let fit = fit_params(&shifted);
            assert!((fit.theta - (base.theta + c)).abs() < 1e-9);
            assert!((fit.k - base.k).abs() < 1e-9, "k {} vs {}", fit.k, base.k);
            assert!((fit.sigma - base.sigma).abs() < 1e-9, "σ {} vs {}", fit.sigma, base.sigma);
        }
    }
}

#[test]
fn scale_equivariance() {
    for seed in 0..10 {
        let data = sample(&GpdParams::new(0.0, -0.2, 1.5).unwrap(), 5000, seed);
        let base = fit_params(&data);
        for c in [0.01, 3.0, 250.0] {
            let scaled: Vec<f64> = data.iter().map(|x| c * x).collect();
            let fit = fit_params(&scaled);
            assert!((fit.k - base.k).abs() < 1e-9, "k {} vs {}", fit.k, base.k);
            assert!((fit.sigma / (c * base.sigma) - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn mle_beats_grid_search() {
    for (seed, k, sigma) in [(1, 0.3, 2.0), (2, -0.3, 1.0), (3, 0.6, 0.5)] {
        let data = sample(&GpdParams::new(0.0, k, sigma).unwrap(), 2000, seed);
        let (kh, sh) = fit_two_param_mle(&data).unwrap();
        let best_fit = log_likelihood(&data, kh, sh);
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        let mut best_grid = f64::NEG_INFINITY;
        for i in 0..200 {
            for j in 0..200 {
                let kg = -1.0 + 2.0 * i as f64 / 199.0;
                let sg = 0.1 + (10.0 * mean - 0.1) * j as f64 / 199.0;
                best_grid = best_grid.max(log_likelihood(&data, kg, sg));
            }
        }
        assert!(best_fit >= best_grid - 1e-6, "{best_fit} < {best_grid}");
    }
}

#[test]
fn estimation_error_shrinks_with_sample_size() {
    let truth = GpdParams::new(0.0, 0.3, 2.0).unwrap();
    let error = |n: usize| {
        common::median(
            (0..50)
                .map(|seed| {
                    let (k, s) = fit_two_param_mle(&sample(&truth, n, 1000 + seed)).unwrap();
                    (k - truth.k).abs() + (s - truth.sigma).abs() / truth.sigma
                })
                .collect(),
        )
    };
    let (small, large) = (error(1000), error(100_000));
    assert!(large < small, "n=1e5 error {large} not below n=1e3 error {small}");
}

#[test]
fn recovers_positive_and_negative_shapes() {
    for (k, seed) in [(0.3, 7), (-0.2, 8)] {
        let truth = GpdParams::new(5.0, k, 2.0).unwrap();
        let (fit, gof) = fit_three_param(&sample(&truth, 20_000, seed)).unwrap();
        assert!((5.0..=5.01).contains(&fit.theta));
        assert!((fit.k - k).abs() <= 0.05);
        assert!((fit.sigma - 2.0).abs() <= 0.1);
        assert!(gof.r_squared_adj >= 0.99);
    }
}

#[test]
fn mismatched_data_fits_worse() {
    let matched = sample(&GpdParams::new(0.0, 0.2, 1.0).unwrap(), 5000, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let uniform: Vec<f64> = (0..5000).map(|_| rng.random_range(0.0..1.0)).collect();
    let r2 = |d: &[f64]| fit_three_param(d).unwrap().1.r_squared_adj;
    assert!(r2(&uniform) < r2(&matched));
}

#[test]
fn qq_points_are_sorted_and_bounded() {
    let data = sample(&GpdParams::new(0.0, 0.2, 1.0).unwrap(), 20_000, 10);
    let (fit, _) = fit_three_param(&data).unwrap();
    let gof = gof_adjusted_r2(&data, &fit).unwrap();
    assert!(gof.qq_points.len() <= 500 && gof.qq_points.len() >= 2);
    assert!(gof.qq_points.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    assert_eq!(gof.n, data.len());
}
