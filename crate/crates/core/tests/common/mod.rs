//! Independent oracles shared by the integration tests. Nothing here calls into the
//! crate's integrators.

#![allow(dead_code)]

use std::f64::consts::PI;

use multihardy::PoleConfiguration;

pub fn single(n: usize) -> PoleConfiguration {
    PoleConfiguration::new(vec![vec![0.0; n]], n, Some(1.0)).unwrap()
}

pub fn pair3() -> PoleConfiguration {
    PoleConfiguration::new(vec![vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]], 3, None).unwrap()
}

pub fn pair4() -> PoleConfiguration {
    PoleConfiguration::new(vec![vec![1.0, 0.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0, 0.0]], 4, None).unwrap()
}

/// Composite Simpson on `[a, b]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `∫_lo^hi f(r) dr` after `r = e^s`, for integrands concentrated near `r = 0`.
pub fn log_simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    simpson(|s| f(s.exp()) * s.exp(), lo.ln(), hi.ln(), n)
}

/// `|S^{N-1}|`, by the Gamma-function recursion `|S^{N-1}| = 2π/(N-2) |S^{N-3}|`.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 2.0) * sphere_area(n - 2),
    }
}

/// Tensor grid with `per_axis` points per axis on `[lo, hi]^N`, endpoints excluded.
pub fn grid(dim: usize, lo: f64, hi: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let h = (hi - lo) / per_axis as f64;
    let total = per_axis.pow(dim as u32);
    (0..total)
        .map(|mut flat| {
            (0..dim)
                .map(|_| {
                    let i = flat % per_axis;
                    flat /= per_axis;
                    lo + (i as f64 + 0.5) * h
                })
                .collect()
        })
        .collect()
}

/// The quintic smoothstep cutoff: 1 on `[0,1]`, `p(2-s)` on `[1,2]`, 0 beyond.
pub fn theta(s: f64) -> f64 {
    if s <= 1.0 {
        1.0
    } else if s >= 2.0 {
        0.0
    } else {
        let t = 2.0 - s;
        6.0 * t.powi(5) - 15.0 * t.powi(4) + 10.0 * t.powi(3)
    }
}

pub fn theta_prime(s: f64) -> f64 {
    if s <= 1.0 || s >= 2.0 {
        0.0
    } else {
        let t = 2.0 - s;
        -(30.0 * t.powi(4) - 60.0 * t.powi(3) + 30.0 * t * t)
    }
}

/// Radial reduction of the witness quotient around a single pole, `μ = r^{-γ}`:
/// `∫(φ'² - cφ²/r²) r^{N-1-γ} dr / ∫ φ² r^{N-1-γ} dr` with `φ = (ε+r)^η θ(r)`.
pub fn radial_witness_quotient(n: usize, gamma: f64, c: f64, eta: f64, eps: f64) -> f64 {
    let p = n as f64 - 1.0 - gamma;
    let phi = |r: f64| (eps + r).powf(eta) * theta(r);
    let dphi = |r: f64| eta * (eps + r).powf(eta - 1.0) * theta(r) + (eps + r).powf(eta) * theta_prime(r);
    let lo = (eps * 1e-6).min(1e-12);
    let steps = 40_000;
    // Split at the kinks of θ so Simpson sees smooth pieces.
    let num = |a: f64, b: f64, log: bool| {
        let f = |r: f64| (dphi(r).powi(2) - c * phi(r).powi(2) / (r * r)) * r.powf(p);
        if log { log_simpson(f, a, b, steps) } else { simpson(f, a, b, steps) }
    };
    let den = |a: f64, b: f64, log: bool| {
        let f = |r: f64| phi(r).powi(2) * r.powf(p);
        if log { log_simpson(f, a, b, steps) } else { simpson(f, a, b, steps) }
    };
    (num(lo, 1.0, true) + num(1.0, 2.0, false)) / (den(lo, 1.0, true) + den(1.0, 2.0, false))
}
