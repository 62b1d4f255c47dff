//! Deterministic point sets: rotated Halton sequences for boxes, random directions on
//! spheres, and radially graded samples around poles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::PoleConfiguration;
use crate::vecmath;

const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// Halton points in `[0,1)^dim` with a Cranley-Patterson rotation drawn from `seed`.
pub fn halton_unit(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "halton supports up to {} dimensions", PRIMES.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    (0..count)
        .map(|i| {
            (0..dim)
                .map(|d| (radical_inverse(i as u64 + 1, PRIMES[d]) + shift[d]).fract())
                .collect()
        })
        .collect()
}

/// Low-discrepancy points in the box `center ± half_widths`.
pub fn halton_box(center: &[f64], half_widths: &[f64], count: usize, seed: u64) -> Vec<Vec<f64>> {
    halton_unit(center.len(), count, seed)
        .into_iter()
        .map(|u| {
            u.iter()
                .zip(center.iter().zip(half_widths))
                .map(|(t, (c, h))| c + h * (2.0 * t - 1.0))
                .collect()
        })
        .collect()
}

/// Uniformly distributed unit vectors in `R^dim`.
pub fn sphere_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let n = vecmath::norm(&v);
            if n > 1e-12 {
                break v.into_iter().map(|x| x / n).collect();
            }
        })
        .collect()
}

/// Points `center + r·ω` for log-spaced radii in `[r_inner, r_outer]` and random
/// directions `ω`.
pub fn graded_shell_samples(
    center: &[f64],
    r_inner: f64,
    r_outer: f64,
    radii: usize,
    directions: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let dirs = sphere_directions(center.len(), directions, seed);
    let (li, lo) = (r_inner.ln(), r_outer.ln());
    let mut out = Vec::with_capacity(radii * directions);
    for k in 0..radii {
        let t = if radii == 1 { 0.0 } else { k as f64 / (radii - 1) as f64 };
        let r = (li + t * (lo - li)).exp();
        for w in &dirs {
            out.push(center.iter().zip(w).map(|(c, d)| c + r * d).collect());
        }
    }
    out
}

/// Sample set used by the drift-hypothesis audit: low-discrepancy points in the box
/// `[-half_width, half_width]^N` outside the balls `B(a_i, 1e-3·r0)`, plus graded
/// radial samples inside each of those balls down to `1e-6·r0`.
#[derive(Debug, Clone)]
pub struct AuditSampling {
    pub box_half_width: f64,
    pub box_count: usize,
    pub radial_levels: usize,
    pub directions: usize,
    pub seed: u64,
}

impl Default for AuditSampling {
    fn default() -> Self {
        Self { box_half_width: 3.0, box_count: 20_000, radial_levels: 16, directions: 64, seed: 7 }
    }
}

impl AuditSampling {
    pub fn generate(&self, config: &PoleConfiguration) -> Vec<Vec<f64>> {
        let n = config.dimension();
        let excl = 1e-3 * config.r0();
        let center = vec![0.0; n];
        let half = vec![self.box_half_width; n];
        let mut pts: Vec<Vec<f64>> = halton_box(&center, &half, self.box_count, self.seed)
            .into_iter()
            .filter(|x| config.poles().iter().all(|a| vecmath::dist(x, a) > excl))
            .collect();
        for (i, a) in config.poles().iter().enumerate() {
            pts.extend(graded_shell_samples(
                a,
                1e-6 * config.r0(),
                excl,
                self.radial_levels,
                self.directions,
                self.seed.wrapping_add(1 + i as u64),
            ));
        }
        pts
    }

    /// Samples restricted to the ball `B(a_pole, r0)`, graded toward the pole.
    pub fn generate_in_ball(&self, config: &PoleConfiguration, pole: usize) -> Vec<Vec<f64>> {
        let a = &config.poles()[pole];
        let r0 = config.r0();
        let n = config.dimension();
        let mut pts: Vec<Vec<f64>> = halton_box(a, &vec![r0; n], self.box_count / config.len().max(1), self.seed)
            .into_iter()
            .filter(|x| {
                let d = vecmath::dist(x, a);
                d < r0 && d > 0.0
            })
            .collect();
        pts.extend(graded_shell_samples(
            a,
            1e-6 * r0,
            r0,
            self.radial_levels * 2,
            self.directions,
            self.seed.wrapping_add(101 + pole as u64),
        ));
        pts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_points_are_in_unit_cube_and_reproducible() {
        let a = halton_unit(4, 500, 3);
        let b = halton_unit(4, 500, 3);
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|&t| (0.0..1.0).contains(&t)));
    }

    #[test]
    fn halton_box_mean_is_near_center() {
        let pts = halton_box(&[1.0, -2.0, 0.5], &[1.0, 2.0, 0.5], 4096, 11);
        for d in 0..3 {
            let mean: f64 = pts.iter().map(|p| p[d]).sum::<f64>() / pts.len() as f64;
            assert!((mean - [1.0, -2.0, 0.5][d]).abs() < 0.01);
        }
    }

    #[test]
    fn directions_are_unit() {
        for w in sphere_directions(5, 100, 1) {
            assert!((vecmath::norm(&w) - 1.0).abs() < 1e-14);
        }
    }
}
