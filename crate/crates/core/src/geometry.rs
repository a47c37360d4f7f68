//! Step lengths between eye positions.
//!
//! Euclidean steps are measured in screen pixels. Hyperbolic steps map both
//! positions into the Poincaré disc and use
//! `d(z, w) = artanh |(z - w) / (1 - z w̄)|`, which for `w = 0` and real
//! `z ∈ [0, 1)` is the hyperbolic angle `artanh z`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::EyeSample;

/// Largest radius a mapped point may have.
pub const MAX_RADIUS: f64 = 1.0 - 1e-9;

pub const DEFAULT_MARGIN: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Hyperbolic,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Hyperbolic => "hyperbolic",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "hyperbolic" => Ok(Metric::Hyperbolic),
            other => Err(Error::InvalidParameter(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLength {
    pub value: f64,
    pub metric: Metric,
}

/// A point of the open unit disc, `z = u + iv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscPoint {
    pub u: f64,
    pub v: f64,
}

impl DiscPoint {
    /// Fails unless `u² + v² < 1`.
    pub fn new(u: f64, v: f64) -> Result<Self> {
        let p = Self { u, v };
        if !(u.is_finite() && v.is_finite()) || p.norm_sqr() >= 1.0 {
            return Err(Error::OutsideDisc { u, v });
        }
        Ok(p)
    }

    /// Pulls the point radially inside `MAX_RADIUS` if needed.
    pub fn clamped(u: f64, v: f64) -> Result<Self> {
        if !(u.is_finite() && v.is_finite()) {
            return Err(Error::OutsideDisc { u, v });
        }
        let r = u.hypot(v);
        if r > MAX_RADIUS {
            let s = MAX_RADIUS / r;
            Ok(Self { u: u * s, v: v * s })
        } else {
            Ok(Self { u, v })
        }
    }

    pub fn norm(&self) -> f64 {
        self.u.hypot(self.v)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.u * self.u + self.v * self.v
    }
}

/// Affine pixel-to-disc map: screen center to the origin, half-diagonal to
/// radius `margin`, then clamped to `MAX_RADIUS`.
pub fn to_disc(sample: &EyeSample, screen_w: f64, screen_h: f64, margin: f64) -> Result<DiscPoint> {
    if !(screen_w > 0.0 && screen_h > 0.0) {
        return Err(Error::InvalidParameter("screen dimensions must be positive".into()));
    }
    if !(margin > 0.0 && margin <= 1.0) {
        return Err(Error::InvalidParameter(format!("margin {margin} outside (0, 1]")));
    }
    if !(sample.x.is_finite() && sample.y.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample coordinates".into()));
    }
    let half_diag = 0.5 * screen_w.hypot(screen_h);
    let scale = margin / half_diag;
    DiscPoint::clamped(
        (sample.x - 0.5 * screen_w) * scale,
        (sample.y - 0.5 * screen_h) * scale,
    )
}

pub fn euclidean_distance(a: &EyeSample, b: &EyeSample) -> Result<StepLength> {
    if ![a.x, a.y, b.x, b.y].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample coordinates".into()));
    }
    Ok(StepLength {
        value: (a.x - b.x).hypot(a.y - b.y),
        metric: Metric::Euclidean,
    })
}

pub fn hyperbolic_distance(a: &DiscPoint, b: &DiscPoint) -> Result<StepLength> {
    for p in [a, b] {
        if !(p.u.is_finite() && p.v.is_finite()) || p.norm_sqr() >= 1.0 {
            return Err(Error::OutsideDisc { u: p.u, v: p.v });
        }
    }
    // z - w and 1 - z * conj(w)
    let num = (a.u - b.u).hypot(a.v - b.v);
    let den_re = 1.0 - (a.u * b.u + a.v * b.v);
    let den_im = -(a.v * b.u - a.u * b.v);
    let den = den_re.hypot(den_im);
    let r = num / den;
    let value = if r < 0.5 {
        r.atanh()
    } else {
        // artanh r = ln(1 + r) - ln(1 - r²) / 2, with 1 - r² in product form
        // to avoid cancellation near the boundary.
        let one_minus_r2 = (1.0 - a.norm_sqr()) * (1.0 - b.norm_sqr()) / (den * den);
        r.ln_1p() - 0.5 * one_minus_r2.ln()
    };
    Ok(StepLength {
        value,
        metric: Metric::Hyperbolic,
    })
}

/// Step length between two samples under `metric`. Hyperbolic steps map the
/// samples with [`to_disc`] first.
pub fn step_length(
    a: &EyeSample,
    b: &EyeSample,
    metric: Metric,
    screen_w: f64,
    screen_h: f64,
    margin: f64,
) -> Result<StepLength> {
    match metric {
        Metric::Euclidean => euclidean_distance(a, b),
        Metric::Hyperbolic => {
            let za = to_disc(a, screen_w, screen_h, margin)?;
            let zb = to_disc(b, screen_w, screen_h, margin)?;
            hyperbolic_distance(&za, &zb)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(a: (f64, f64), b: (f64, f64)) -> f64 {
        hyperbolic_distance(&DiscPoint::new(a.0, a.1).unwrap(), &DiscPoint::new(b.0, b.1).unwrap())
            .unwrap()
            .value
    }

    #[test]
    fn center_maps_to_origin() {
        let p = to_disc(&EyeSample::new(0.0, 640.0, 512.0), 1280.0, 1024.0, 0.95).unwrap();
        assert_eq!((p.u, p.v), (0.0, 0.0));
    }

    #[test]
    fn corner_maps_to_margin_radius() {
        let p = to_disc(&EyeSample::new(0.0, 0.0, 0.0), 1280.0, 1024.0, 0.95).unwrap();
        assert!((p.norm() - 0.95).abs() < 1e-15);
        assert!((p.v / p.u - 1024.0 / 1280.0).abs() < 1e-15);
        assert!(p.u < 0.0 && p.v < 0.0);
    }

    #[test]
    fn far_outlier_is_clamped() {
        let p = to_disc(&EyeSample::new(0.0, 12800.0, 0.0), 1280.0, 1024.0, 0.95).unwrap();
        assert!((p.norm() - MAX_RADIUS).abs() < 1e-15);
        assert!(p.norm() < 1.0);
    }

    #[test]
    fn to_disc_rejects_bad_input() {
        let s = EyeSample::new(0.0, f64::NAN, 0.0);
        assert!(to_disc(&s, 10.0, 10.0, 0.95).is_err());
        let s = EyeSample::new(0.0, 1.0, 0.0);
        assert!(to_disc(&s, 10.0, 10.0, 0.0).is_err());
        assert!(to_disc(&s, 0.0, 10.0, 0.5).is_err());
    }

    #[test]
    fn euclidean_examples() {
        let a = EyeSample::new(0.0, 0.0, 0.0);
        let b = EyeSample::new(1.0, 3.0, 4.0);
        assert_eq!(euclidean_distance(&a, &a).unwrap().value, 0.0);
        assert_eq!(euclidean_distance(&a, &b).unwrap().value, 5.0);
        assert_eq!(euclidean_distance(&a, &b).unwrap().metric, Metric::Euclidean);
    }

    #[test]
    fn one_dimensional_reduction() {
        assert!((d((0.5, 0.0), (0.0, 0.0)) - 0.5f64.atanh()).abs() < 1e-15);
        assert!((d((0.5, 0.0), (0.0, 0.0)) - 0.549_306_144_334_054_8).abs() < 1e-12);
        assert!((d((0.99, 0.0), (0.0, 0.0)) - 0.99f64.atanh()).abs() < 1e-12);
    }

    #[test]
    fn boundary_points_are_rejected() {
        assert!(DiscPoint::new(1.0, 0.0).is_err());
        let bad = DiscPoint { u: 0.8, v: 0.8 };
        assert!(hyperbolic_distance(&bad, &DiscPoint::new(0.0, 0.0).unwrap()).is_err());
    }

    #[test]
    fn boundary_blow_up() {
        let mut prev = 0.0;
        for i in 1..=1000 {
            let r = 0.9999 * i as f64 / 1000.0;
            let v = d((r, 0.0), (0.0, 0.0));
            assert!(v > prev);
            prev = v;
        }
        // artanh r > 5 once r > tanh 5 = 0.999909...
        assert!((d((0.9999, 0.0), (0.0, 0.0)) - 4.951_718_775_643_098).abs() < 1e-9);
        assert!(d((0.99991, 0.0), (0.0, 0.0)) > 5.0);
        assert!(d((0.0, -0.99995), (0.0, 0.0)) > 5.0);
    }

    #[test]
    fn near_origin_matches_euclidean() {
        for i in 1..=100 {
            let r = 0.01 * i as f64 / 100.0;
            let ratio = d((r * 0.6, r * 0.8), (0.0, 0.0)) / r;
            assert!((1.0..=1.001).contains(&ratio), "ratio {ratio} at r={r}");
        }
    }

    fn disc_point() -> impl Strategy<Value = (f64, f64)> {
        (0.0..0.999f64, 0.0..std::f64::consts::TAU).prop_map(|(r, a)| (r * a.cos(), r * a.sin()))
    }

    proptest! {
        #[test]
        fn symmetric_exactly(a in disc_point(), b in disc_point()) {
            prop_assert_eq!(d(a, b).to_bits(), d(b, a).to_bits());
        }

        #[test]
        fn identity(a in disc_point()) {
            prop_assert_eq!(d(a, a), 0.0);
        }

        #[test]
        fn triangle(a in disc_point(), b in disc_point(), c in disc_point()) {
            prop_assert!(d(a, c) <= d(a, b) + d(b, c) + 1e-9);
        }
    }
}
