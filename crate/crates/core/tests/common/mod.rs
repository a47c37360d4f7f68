#![allow(dead_code)]

use saccade_core::gpd::GpdParams;

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// ∫ pdf from θ to `x`. Heavy tails (k > 0) substitute `x = θ + σ(eˢ - 1)`;
/// bounded supports substitute `1 + k(x - θ)/σ = w⁴`, which smooths the
/// power-law behaviour at the endpoint.
pub fn gpd_mass(p: &GpdParams, x: f64) -> f64 {
    if x <= p.theta {
        return 0.0;
    }
    if p.k > 0.0 {
        let s_max = ((x - p.theta) / p.sigma).ln_1p();
        return simpson(
            |s| {
                let y = p.theta + p.sigma * s.exp_m1();
                p.pdf(y) * p.sigma * s.exp()
            },
            0.0,
            s_max,
            20_000,
        );
    }
    let v_end = (1.0 + p.k * (x - p.theta) / p.sigma).max(0.0);
    simpson(
        |w| {
            let v = w.powi(4);
            let y = p.theta + p.sigma * (v - 1.0) / p.k;
            p.pdf(y) * p.sigma / p.k.abs() * 4.0 * w.powi(3)
        },
        v_end.powf(0.25),
        1.0,
        20_000,
    )
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Interquartile range with linear interpolation between order statistics.
pub fn iqr(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let i = pos.floor() as usize;
        let j = (i + 1).min(v.len() - 1);
        v[i] + (pos - i as f64) * (v[j] - v[i])
    };
    q(0.75) - q(0.25)
}
