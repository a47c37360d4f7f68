use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saccade_core::geometry::{hyperbolic_distance, DiscPoint};

mod common;

fn d(a: Complex64, b: Complex64) -> f64 {
    hyperbolic_distance(&DiscPoint::new(a.re, a.im).unwrap(), &DiscPoint::new(b.re, b.im).unwrap())
        .unwrap()
        .value
}

fn random_point(rng: &mut impl Rng, max_r: f64) -> Complex64 {
    let r = max_r * rng.random::<f64>().sqrt();
    Complex64::from_polar(r, rng.random_range(0.0..std::f64::consts::TAU))
}

/// Disc automorphism `z ↦ e^{iα}(z − c)/(1 − c̄ z)`.
fn mobius(z: Complex64, c: Complex64, alpha: f64) -> Complex64 {
    Complex64::from_polar(1.0, alpha) * (z - c) / (1.0 - c.conj() * z)
}

#[test]
fn mobius_maps_preserve_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10_000 {
        let (z, w) = (random_point(&mut rng, 0.95), random_point(&mut rng, 0.95));
        let c = random_point(&mut rng, 0.9);
        let alpha = rng.random_range(0.0..std::f64::consts::TAU);
        let (mz, mw) = (mobius(z, c, alpha), mobius(w, c, alpha));
        if mz.norm() >= 0.999_999 || mw.norm() >= 0.999_999 {
            continue;
        }
        let (before, after) = (d(z, w), d(mz, mw));
        assert!((before - after).abs() <= 1e-9 * before.max(1.0), "{before} vs {after}");
    }
}

/// Length of the geodesic from `z` to `w` under `|dz| / (1 − |z|²)`, obtained
/// by pulling the radial segment from 0 to `M_z(w)` back through `M_z`.
fn geodesic_length(z: Complex64, w: Complex64) -> f64 {
    let a = mobius(w, z, 0.0);
    let speed = |t: f64| {
        let denom = 1.0 + z.conj() * a * t;
        let gamma = (a * t + z) / denom;
        let velocity = a * (1.0 - z.norm_sqr()) / (denom * denom);
        velocity.norm() / (1.0 - gamma.norm_sqr())
    };
    common::simpson(speed, 0.0, 1.0, 4000)
}

#[test]
fn distance_matches_metric_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let (z, w) = (random_point(&mut rng, 0.9), random_point(&mut rng, 0.9));
        let exact = d(z, w);
        let numeric = geodesic_length(z, w);
        assert!((exact - numeric).abs() <= 1e-8 * exact.max(1.0), "{exact} vs {numeric}");
    }
}

#[test]
fn geodesic_is_shorter_than_straight_chord() {
    // Integrating the metric along the Euclidean chord can only overestimate.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let (z, w) = (random_point(&mut rng, 0.9), random_point(&mut rng, 0.9));
        let chord = common::simpson(
            |t| {
                let p = z + (w - z) * t;
                (w - z).norm() / (1.0 - p.norm_sqr())
            },
            0.0,
            1.0,
            4000,
        );
        assert!(d(z, w) <= chord + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn mobius_invariance_property(
        zr in 0.0..0.95f64, za in 0.0..6.3f64,
        wr in 0.0..0.95f64, wa in 0.0..6.3f64,
        cr in 0.0..0.9f64, ca in 0.0..6.3f64,
        alpha in 0.0..6.3f64,
    ) {
        let (z, w, c) = (Complex64::from_polar(zr, za), Complex64::from_polar(wr, wa), Complex64::from_polar(cr, ca));
        let (mz, mw) = (mobius(z, c, alpha), mobius(w, c, alpha));
        prop_assume!(mz.norm() < 0.999_999 && mw.norm() < 0.999_999);
        let (before, after) = (d(z, w), d(mz, mw));
        prop_assert!((before - after).abs() <= 1e-9 * before.max(1.0));
    }
}
