//! Pole configurations and the IMS partition of unity built from the profile
//!
//! ```text
//! J(t) = 1 for t ≤ 1/2,  sin(πt) for 1/2 ≤ t ≤ 1,  0 for t ≥ 1,
//! ```
//!
//! with `J_i(x) = J(|x - a_i| / r0)` for every pole and `J_{n+1} = sqrt(1 - Σ J_i²)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::sampling;
use crate::testfn::TestFunction;
use crate::vecmath;
use crate::weights::Weight;

/// Dimension `N ≥ 3`, distinct poles `a_1..a_n`, and the separation radius `r0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleConfiguration {
    dimension: usize,
    poles: Vec<Vec<f64>>,
    r0: f64,
}

impl PoleConfiguration {
    /// `r0 = min_{i≠j} |a_i - a_j| / 2`; a single pole takes `default_r0`.
    pub fn new(points: Vec<Vec<f64>>, dimension: usize, default_r0: Option<f64>) -> Result<Self> {
        if dimension < 3 {
            return Err(Error::DimensionBelowThree(dimension));
        }
        if points.is_empty() {
            return Err(Error::NoPoles);
        }
        for p in &points {
            if p.len() != dimension {
                return Err(Error::DimensionMismatch { expected: dimension, got: p.len() });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite pole coordinate".into()));
            }
        }
        let mut min_dist = f64::INFINITY;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let d = vecmath::dist(&points[i], &points[j]);
                if d == 0.0 {
                    return Err(Error::CoincidentPoles(i, j));
                }
                min_dist = min_dist.min(d);
            }
        }
        let r0 = if points.len() == 1 {
            match default_r0 {
                Some(r) if r > 0.0 && r.is_finite() => r,
                Some(r) => return Err(Error::InvalidRadius(r)),
                None => return Err(Error::MissingDefaultRadius),
            }
        } else {
            min_dist / 2.0
        };
        Ok(Self { dimension, poles: points, r0 })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn poles(&self) -> &[Vec<f64>] {
        &self.poles
    }

    pub fn len(&self) -> usize {
        self.poles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dimension];
        for p in &self.poles {
            vecmath::axpy(1.0 / self.poles.len() as f64, p, &mut c);
        }
        c
    }

    /// Index of the pole nearest to `a_i` among the others.
    pub fn nearest_other(&self, i: usize) -> Option<usize> {
        (0..self.len())
            .filter(|&j| j != i)
            .min_by(|&j, &k| {
                let dj = vecmath::dist_sq(&self.poles[i], &self.poles[j]);
                let dk = vecmath::dist_sq(&self.poles[i], &self.poles[k]);
                dj.total_cmp(&dk)
            })
    }

    /// Distances `|x - a_i|`.
    pub fn distances(&self, x: &[f64]) -> Vec<f64> {
        self.poles.iter().map(|a| vecmath::dist(x, a)).collect()
    }

    /// Returns the index of a pole coinciding with `x`, if any.
    pub fn pole_at(&self, x: &[f64]) -> Option<usize> {
        self.poles.iter().position(|a| vecmath::dist_sq(x, a) == 0.0)
    }

    /// Same configuration with every point mapped by `x ↦ R x + t` (`R` orthogonal,
    /// row-major).
    pub fn transformed(&self, rotation: &[Vec<f64>], translation: &[f64]) -> Result<Self> {
        let poles = self
            .poles
            .iter()
            .map(|p| {
                rotation
                    .iter()
                    .zip(translation)
                    .map(|(row, t)| vecmath::dot(row, p) + t)
                    .collect()
            })
            .collect();
        Self::new(poles, self.dimension, Some(self.r0))
    }
}

/// Value and derivative of the cut-off profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileValue {
    pub value: f64,
    pub derivative: f64,
    /// `sqrt(1 - value²)`, computed without cancellation.
    pub complement: f64,
}

/// The profile `J(t)`. At the kink `t = 1` the zero branch is taken.
pub fn eval_profile(t: f64) -> ProfileValue {
    if t <= 0.5 {
        ProfileValue { value: 1.0, derivative: 0.0, complement: 0.0 }
    } else if t < 1.0 {
        let (s, c) = (PI * t).sin_cos();
        ProfileValue { value: s, derivative: PI * c, complement: c.abs() }
    } else {
        ProfileValue { value: 0.0, derivative: 0.0, complement: 1.0 }
    }
}

/// Values and gradients of all `n + 1` partition members at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSample {
    /// `J_1..J_{n+1}`.
    pub values: Vec<f64>,
    /// `∇J_1..∇J_{n+1}`.
    pub gradients: Vec<Vec<f64>>,
    /// `sqrt(1 - J_i²)` for `i ≤ n`, free of cancellation.
    pub complements: Vec<f64>,
}

impl PartitionSample {
    pub fn n_poles(&self) -> usize {
        self.values.len() - 1
    }

    /// `Σ_{i≤n} |∇J_i|² / (1 - J_i²)`, zero where `∇J_i = 0`.
    pub fn localization_error(&self) -> f64 {
        (0..self.n_poles())
            .map(|i| {
                let g2 = vecmath::norm_sq(&self.gradients[i]);
                if g2 == 0.0 {
                    0.0
                } else {
                    g2 / (self.complements[i] * self.complements[i])
                }
            })
            .sum()
    }

    /// `Σ_{i≤n+1} |∇J_i|²`.
    pub fn gradient_energy(&self) -> f64 {
        self.gradients.iter().map(|g| vecmath::norm_sq(g)).sum()
    }
}

/// `{J_i}_{i=1}^{n+1}` for a pole configuration. Immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    config: PoleConfiguration,
}

impl PartitionOfUnity {
    pub fn new(config: PoleConfiguration) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &PoleConfiguration {
        &self.config
    }

    pub fn eval(&self, x: &[f64]) -> PartitionSample {
        let n = self.config.len();
        let dim = self.config.dimension();
        let r0 = self.config.r0();
        let mut values = Vec::with_capacity(n + 1);
        let mut complements = Vec::with_capacity(n);
        let mut gradients = Vec::with_capacity(n + 1);
        let mut active: Option<(usize, f64)> = None;
        let mut active_count = 0;
        let mut sum_sq = 0.0;
        for (i, a) in self.config.poles().iter().enumerate() {
            let d = vecmath::dist(x, a);
            let p = eval_profile(d / r0);
            let mut g = vec![0.0; dim];
            if p.derivative != 0.0 && d > 0.0 {
                let s = p.derivative / (r0 * d);
                for k in 0..dim {
                    g[k] = s * (x[k] - a[k]);
                }
            }
            if p.value != 0.0 {
                active = Some((i, p.complement));
                active_count += 1;
            }
            sum_sq += p.value * p.value;
            values.push(p.value);
            complements.push(p.complement);
            gradients.push(g);
        }
        let last = match (active_count, active) {
            (0, _) => 1.0,
            (1, Some((_, comp))) => comp,
            _ => (1.0 - sum_sq).max(0.0).sqrt(),
        };
        let mut g_last = vec![0.0; dim];
        if last > 0.0 {
            for i in 0..n {
                vecmath::axpy(-values[i] / last, &gradients[i], &mut g_last);
            }
        }
        values.push(last);
        gradients.push(g_last);
        PartitionSample { values, gradients, complements }
    }
}

/// Maximum violation of each structural property over a sample set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub samples: usize,
    /// `max |Σ J_i² - 1|`.
    pub sum_of_squares: f64,
    /// `max_α |Σ J_i ∂_α J_i|`.
    pub property_a: f64,
    /// `max |Σ_{i≤n+1} |∇J_i|² - Σ_{i≤n} |∇J_i|²/(1 - J_i²)| / (1 + Σ_{i≤n} |∇J_i|²/(1 - J_i²))`.
    pub property_d: f64,
    /// `max | |∇J_i|² - (π/r0)² (1 - J_i²) |` on the transition annuli.
    pub annulus_constraint: f64,
    /// Number of samples where two of `J_1..J_n` are nonzero simultaneously.
    pub support_overlaps: usize,
}

pub fn verify_partition(partition: &PartitionOfUnity, samples: &[Vec<f64>]) -> PartitionReport {
    let n = partition.config().len();
    let dim = partition.config().dimension();
    let r0 = partition.config().r0();
    let f = (PI / r0).powi(2);
    let mut rep = PartitionReport { samples: samples.len(), ..Default::default() };
    for x in samples {
        let s = partition.eval(x);
        let sq: f64 = s.values.iter().map(|v| v * v).sum();
        rep.sum_of_squares = rep.sum_of_squares.max((sq - 1.0).abs());
        for k in 0..dim {
            let a: f64 = (0..=n).map(|i| s.values[i] * s.gradients[i][k]).sum();
            rep.property_a = rep.property_a.max(a.abs());
        }
        let lhs = s.gradient_energy();
        let rhs = s.localization_error();
        rep.property_d = rep.property_d.max((lhs - rhs).abs() / (1.0 + rhs));
        for i in 0..n {
            let t = vecmath::dist(x, &partition.config().poles()[i]) / r0;
            if t > 0.5 && t < 1.0 {
                let g2 = vecmath::norm_sq(&s.gradients[i]);
                let resid = (g2 - f * s.complements[i].powi(2)).abs() / f;
                rep.annulus_constraint = rep.annulus_constraint.max(resid);
            }
        }
        if s.values[..n].iter().filter(|&&v| v != 0.0).count() > 1 {
            rep.support_overlaps += 1;
        }
    }
    rep
}

/// Options for the `k0` maximization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct K0Options {
    pub initial_samples: usize,
    pub refinement_rounds: usize,
    pub starts: usize,
    pub samples_per_start: usize,
    pub shrink: f64,
    pub seed: u64,
}

impl Default for K0Options {
    fn default() -> Self {
        Self {
            initial_samples: 200_000,
            refinement_rounds: 3,
            starts: 16,
            samples_per_start: 4_000,
            shrink: 0.1,
            seed: 20_240_531,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct K0Result {
    pub c: f64,
    pub k0: f64,
    /// `sup_Ω r0² [Σ|∇J_i|²/(1-J_i²) + c J_3² V_2]` over all evaluated samples.
    pub supremum: f64,
    /// Maximizer in the canonical frame `a_1 = a e_1`, `a_2 = -a e_1`.
    pub maximizer: Vec<f64>,
    pub below_pi_squared: bool,
    pub samples: usize,
    /// Increase of the supremum in the final refinement round, relative.
    pub last_round_gain: f64,
    pub converged: bool,
}

/// Two poles at `±a e_1` sharing the separation radius `r0 ≤ a`.
#[derive(Debug, Clone, Copy)]
struct CanonicalPair {
    dimension: usize,
    a: f64,
    r0: f64,
}

impl CanonicalPair {
    /// The localization integrand scaled by `r0²`, evaluated at the point with axial
    /// coordinate `s` and distance `rho` from the axis (the integrand is axisymmetric).
    fn scaled_integrand(&self, s: f64, rho: f64, c: f64) -> f64 {
        let d1 = ((s - self.a).powi(2) + rho * rho).sqrt();
        let d2 = ((s + self.a).powi(2) + rho * rho).sqrt();
        let p1 = eval_profile(d1 / self.r0);
        let p2 = eval_profile(d2 / self.r0);
        let mut loc = 0.0;
        for p in [p1, p2] {
            if p.derivative != 0.0 {
                // |∇J_i|² / (1 - J_i²) with |∇J_i| = |J'| / r0 and 1 - J² = complement².
                loc += (p.derivative / p.complement).powi(2) / (self.r0 * self.r0);
            }
        }
        let j3_sq = if p1.value != 0.0 {
            p1.complement * p1.complement
        } else if p2.value != 0.0 {
            p2.complement * p2.complement
        } else {
            1.0
        };
        let v2 = if d1 > 0.0 && d2 > 0.0 { 1.0 / (d1 * d1) + 1.0 / (d2 * d2) } else { f64::INFINITY };
        let pot = if j3_sq == 0.0 { 0.0 } else { c * j3_sq * v2 };
        self.r0 * self.r0 * (loc + pot)
    }

    fn in_omega(&self, s: f64, rho: f64) -> bool {
        ((s - self.a).powi(2) + rho * rho).sqrt() <= self.r0
    }

    fn point(&self, s: f64, rho: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.dimension];
        x[0] = s;
        x[1] = rho;
        x
    }

    /// By the reflection `x ↦ -x` the supremum over `Ω = supp J_1 ∪ supp J_2` equals the
    /// supremum over `supp J_1`; by rotation about the axis it is a 2-d problem in the
    /// meridian half-disk `{(s, ρ): ρ ≥ 0, (s - a)² + ρ² ≤ r0²}`.
    fn maximize(&self, c: f64, opts: &K0Options) -> K0Result {
        let (a, r0) = (self.a, self.r0);
        let eval = |s: f64, rho: f64| -> Option<f64> {
            if rho < 0.0 || !self.in_omega(s, rho) {
                None
            } else {
                Some(self.scaled_integrand(s, rho, c))
            }
        };
        let mut evaluated = 0usize;
        let mut best: Vec<(f64, f64, f64)> = Vec::new();
        for u in sampling::halton_unit(2, opts.initial_samples, opts.seed) {
            let s = a + r0 * (2.0 * u[0] - 1.0);
            let rho = r0 * u[1];
            if let Some(v) = eval(s, rho) {
                evaluated += 1;
                best.push((v, s, rho));
            }
        }
        let keep = |best: &mut Vec<(f64, f64, f64)>, k: usize| {
            best.sort_by(|x, y| y.0.total_cmp(&x.0));
            best.truncate(k);
        };
        keep(&mut best, opts.starts);
        let mut sup = best.first().map(|b| b.0).unwrap_or(0.0);
        let mut width = r0 * opts.shrink;
        let mut last_gain = 0.0;
        for round in 0..opts.refinement_rounds {
            let starts = best.clone();
            let before = sup;
            for (k, &(_, s0, rho0)) in starts.iter().enumerate() {
                let seed = opts.seed ^ ((round as u64) << 32) ^ (k as u64 + 1);
                for u in sampling::halton_unit(2, opts.samples_per_start, seed) {
                    let s = s0 + width * (2.0 * u[0] - 1.0);
                    let rho = rho0 + width * (2.0 * u[1] - 1.0);
                    if let Some(v) = eval(s, rho) {
                        evaluated += 1;
                        best.push((v, s, rho));
                    }
                }
            }
            keep(&mut best, opts.starts);
            sup = best[0].0;
            last_gain = (sup - before) / sup.abs().max(1.0);
            width *= opts.shrink;
        }
        let (_, s_best, rho_best) = best.first().copied().unwrap_or((0.0, a, 0.0));
        let k0 = (sup - 2.0 * c).max(0.0);
        K0Result {
            c,
            k0,
            supremum: sup,
            maximizer: self.point(s_best, rho_best),
            below_pi_squared: k0 < PI * PI,
            samples: evaluated,
            last_round_gain: last_gain,
            converged: last_gain <= 1e-6,
        }
    }
}

/// `k0 = max(0, sup_Ω r0²[Σ|∇J_i|²/(1-J_i²) + c J_3² V_2] - 2c)`.
///
/// For `n = 2` the pair is mapped to `(-a, a)` by an isometry. For `n > 2` every pole
/// is paired with its nearest neighbour in the same way and the largest value is
/// returned.
pub fn compute_k0(partition: &PartitionOfUnity, c: f64, opts: &K0Options) -> Result<K0Result> {
    let config = partition.config();
    if config.len() < 2 {
        return Err(Error::NeedsTwoPoles);
    }
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("c must be positive, got {c}")));
    }
    let mut halves: Vec<f64> = (0..config.len())
        .filter_map(|i| config.nearest_other(i).map(|j| vecmath::dist(&config.poles()[i], &config.poles()[j]) / 2.0))
        .collect();
    halves.sort_by(f64::total_cmp);
    halves.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * y.abs());
    let mut out: Option<K0Result> = None;
    for a in halves {
        let pair = CanonicalPair { dimension: config.dimension(), a, r0: config.r0() };
        let res = pair.maximize(c, opts);
        if out.as_ref().map_or(true, |o| res.k0 > o.k0) {
            out = Some(res);
        }
    }
    Ok(out.expect("at least one pair"))
}

/// The localization integrand `r0²[Σ_{i=1,2}|∇J_i|²/(1-J_i²) + c J_3² V_2(x)]` for a
/// two-pole partition, evaluated directly in the ambient coordinates.
pub fn localization_integrand(partition: &PartitionOfUnity, c: f64, x: &[f64]) -> f64 {
    let s = partition.eval(x);
    let r0 = partition.config().r0();
    let n = partition.config().len();
    let j_last = s.values[n];
    let pot = if j_last == 0.0 {
        0.0
    } else {
        let v: f64 = partition.config().distances(x).iter().map(|d| 1.0 / (d * d)).sum();
        c * j_last * j_last * v
    };
    r0 * r0 * (s.localization_error() + pot)
}

/// `|∫(|∇φ|² - Vφ²)dμ - Σ_i ∫(|∇(J_iφ)|² - V(J_iφ)²)dμ + ∫ Σ_i |∇J_i|² φ² dμ|`.
pub fn ims_decomposition_residual<W, P>(
    partition: &PartitionOfUnity,
    phi: &dyn TestFunction,
    potential: P,
    weight: &W,
    rule: &QuadratureRule,
) -> Result<f64>
where
    W: Weight + ?Sized,
    P: Fn(&[f64]) -> f64 + Sync,
{
    let n = partition.config().len();
    let whole = rule.integrate(
        |x| {
            let (v, g) = phi.eval(x);
            vecmath::norm_sq(&g) - potential(x) * v * v
        },
        weight,
    )?;
    let pieces = rule.integrate(
        |x| {
            let (v, g) = phi.eval(x);
            let s = partition.eval(x);
            let vx = potential(x);
            let mut acc = 0.0;
            for i in 0..=n {
                let ji = s.values[i];
                let grad: f64 = (0..g.len())
                    .map(|k| (s.gradients[i][k] * v + ji * g[k]).powi(2))
                    .sum();
                acc += grad - vx * (ji * v).powi(2);
            }
            acc
        },
        weight,
    )?;
    let loc = rule.integrate(
        |x| {
            let (v, _) = phi.eval(x);
            partition.eval(x).gradient_energy() * v * v
        },
        weight,
    )?;
    Ok((whole.value - pieces.value + loc.value).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_poles() -> PoleConfiguration {
        PoleConfiguration::new(vec![vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]], 3, None).unwrap()
    }

    #[test]
    fn r0_is_half_min_distance() {
        assert_eq!(two_poles().r0(), 1.0);
        let c = PoleConfiguration::new(vec![vec![0.0; 3], vec![3.0, 0.0, 0.0], vec![0.0, 4.0, 0.0]], 3, None).unwrap();
        assert_eq!(c.r0(), 1.5);
        let single = PoleConfiguration::new(vec![vec![0.0; 4]], 4, Some(1.0)).unwrap();
        assert_eq!(single.r0(), 1.0);
    }

    #[test]
    fn configuration_errors() {
        assert_eq!(
            PoleConfiguration::new(vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]], 3, None),
            Err(Error::CoincidentPoles(0, 1))
        );
        assert_eq!(PoleConfiguration::new(vec![vec![0.0, 0.0]], 2, Some(1.0)), Err(Error::DimensionBelowThree(2)));
        assert_eq!(PoleConfiguration::new(vec![vec![0.0; 3]], 3, None), Err(Error::MissingDefaultRadius));
    }

    #[test]
    fn profile_branches() {
        let p = eval_profile(0.25);
        assert_eq!((p.value, p.derivative), (1.0, 0.0));
        let p = eval_profile(0.75);
        assert_abs_diff_eq!(p.value, (0.75 * PI).sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(p.value, 0.70711, epsilon = 1e-5);
        assert_abs_diff_eq!(p.derivative, -2.22144, epsilon = 1e-5);
        let p = eval_profile(2.0);
        assert_eq!((p.value, p.derivative), (0.0, 0.0));
    }

    #[test]
    fn partition_at_reference_points() {
        let part = PartitionOfUnity::new(two_poles());
        let s = part.eval(&[1.0, 0.0, 0.0]);
        assert_eq!(s.values, vec![1.0, 0.0, 0.0]);
        let s = part.eval(&[0.0, 0.0, 0.0]);
        assert_eq!(s.values, vec![0.0, 0.0, 1.0]);
        let s = part.eval(&[0.25, 0.0, 0.0]);
        assert_abs_diff_eq!(s.values[0], 0.70711, epsilon = 1e-5);
        assert_eq!(s.values[1], 0.0);
        assert_abs_diff_eq!(s.values[2], 0.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let part = PartitionOfUnity::new(two_poles());
        let h = 1e-6;
        for x in sampling::halton_box(&[0.0; 3], &[2.2, 1.2, 1.2], 2000, 5) {
            let t: Vec<f64> = part.config().distances(&x).iter().map(|d| d / part.config().r0()).collect();
            if t.iter().any(|&t| (t - 0.5).abs() < 1e-3 || (t - 1.0).abs() < 1e-3) {
                continue;
            }
            let s = part.eval(&x);
            for k in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let (sp, sm) = (part.eval(&xp), part.eval(&xm));
                for i in 0..3 {
                    let fd = (sp.values[i] - sm.values[i]) / (2.0 * h);
                    assert!((fd - s.gradients[i][k]).abs() <= 1e-6 * (1.0 + fd.abs()), "i={i} k={k} x={x:?}");
                }
            }
        }
    }

    #[test]
    fn localization_integrand_vanishes_inside_inner_balls() {
        let part = PartitionOfUnity::new(two_poles());
        assert_eq!(localization_integrand(&part, 0.25, &[1.2, 0.1, 0.0]), 0.0);
    }

    #[test]
    fn canonical_integrand_matches_ambient_evaluation() {
        let part = PartitionOfUnity::new(two_poles());
        let pair = CanonicalPair { dimension: 3, a: 1.0, r0: 1.0 };
        for x in sampling::halton_box(&[1.0, 0.0, 0.0], &[1.0, 1.0, 1.0], 500, 3) {
            if vecmath::dist(&x, &[1.0, 0.0, 0.0]) > 1.0 {
                continue;
            }
            let rho = (x[1] * x[1] + x[2] * x[2]).sqrt();
            let a = pair.scaled_integrand(x[0], rho, 0.3);
            let b = localization_integrand(&part, 0.3, &x);
            assert!((a - b).abs() <= 1e-10 * (1.0 + b), "{a} vs {b}");
        }
    }
}
