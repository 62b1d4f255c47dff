//! Pole-graded quadrature against `dμ`.
//!
//! Two node sets are supported. The box rule covers `[-L, L]^N` with tensor Gauss-Legendre
//! panels and recursively splits every cell lying within half its edge length of a
//! pole, so the kept cells form nested cubic shells whose size halves at each level.
//! Cells that would need to be smaller than `r_min` are dropped. The ball rule covers
//! `B(center, R) \ B(center, r_min)` with Gauss radial nodes on dyadic shells times a
//! hyperspherical product rule. Both carry an embedded lower-order rule whose
//! disagreement is the error estimate.

use std::f64::consts::PI;

use gauss_quad::jacobi::GaussJacobi;
use gauss_quad::legendre::GaussLegendre;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PoleConfiguration;
use crate::vecmath;
use crate::weights::Weight;

/// Relative growth that marks the innermost shell as non-negligible.
pub const SHELL_GROWTH_THRESHOLD: f64 = 0.05;

fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    GaussLegendre::new(order.max(2)).expect("order ≥ 2").as_node_weight_pairs().to_vec()
}

/// Product rule on the unit sphere `S^{N-1}` in hyperspherical coordinates: Gauss-Jacobi
/// in `cos θ_j` for the polar angles and the trapezoid rule in the azimuth.
#[derive(Debug, Clone)]
pub struct SphereRule {
    dim: usize,
    dirs: Vec<f64>,
    weights: Vec<f64>,
}

impl SphereRule {
    pub fn new(dim: usize, n_theta: usize, n_phi: usize) -> Self {
        assert!(dim >= 2);
        // Start from the circle and prepend polar angles.
        let mut dirs: Vec<Vec<f64>> = (0..n_phi)
            .map(|k| {
                let p = 2.0 * PI * (k as f64 + 0.5) / n_phi as f64;
                vec![p.cos(), p.sin()]
            })
            .collect();
        let mut weights = vec![2.0 * PI / n_phi as f64; n_phi];
        for d in 3..=dim {
            // On S^{d-1}: x1 = t, rest = sqrt(1-t²)·(point of S^{d-2}), weight (1-t²)^{(d-3)/2} dt.
            let a = (d as f64 - 3.0) / 2.0;
            let rule: Vec<(f64, f64)> = if a == 0.0 {
                gauss_legendre(n_theta)
            } else {
                GaussJacobi::new(n_theta.max(2), a, a).expect("valid jacobi").as_node_weight_pairs().to_vec()
            };
            let mut nd = Vec::with_capacity(dirs.len() * rule.len());
            let mut nw = Vec::with_capacity(dirs.len() * rule.len());
            for &(t, wt) in &rule {
                let s = (1.0 - t * t).sqrt();
                for (v, w) in dirs.iter().zip(&weights) {
                    let mut p = Vec::with_capacity(d);
                    p.push(t);
                    p.extend(v.iter().map(|c| s * c));
                    nd.push(p);
                    nw.push(w * wt);
                }
            }
            dirs = nd;
            weights = nw;
        }
        Self { dim, dirs: dirs.concat(), weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.dirs.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }
}

/// `|S^{N-1}| = 2 π^{N/2} / Γ(N/2)`.
pub fn sphere_area(dim: usize) -> f64 {
    // Γ(N/2) by recursion from Γ(1) = 1, Γ(1/2) = √π.
    let mut g = if dim % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut s = if dim % 2 == 0 { 1.0 } else { 0.5 };
    while s + 1e-9 < dim as f64 / 2.0 {
        g *= s;
        s += 1.0;
    }
    2.0 * PI.powf(dim as f64 / 2.0) / g
}

/// Nodes, weights and shell level of one rule.
#[derive(Debug, Clone, Default)]
pub struct NodeSet {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub levels: Vec<u16>,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, k: usize, dim: usize) -> &[f64] {
        &self.points[k * dim..(k + 1) * dim]
    }

    fn extend(&mut self, other: NodeSet) {
        self.points.extend(other.points);
        self.weights.extend(other.weights);
        self.levels.extend(other.levels);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Box { half_width: f64 },
    Ball { center: Vec<f64>, radius: f64 },
}

/// Parameters of the box rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleParams {
    pub half_width: f64,
    pub panels_per_axis: usize,
    pub order: usize,
    /// Inner cutoff relative to `r0`.
    pub r_min_ratio: f64,
}

impl Default for RuleParams {
    fn default() -> Self {
        Self { half_width: 3.0, panels_per_axis: 12, order: 5, r_min_ratio: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub domain: Domain,
    pub config: PoleConfiguration,
    pub fine: NodeSet,
    pub coarse: NodeSet,
    pub r_min: f64,
    pub max_level: u16,
    /// Relative disagreement between the rule and its embedded rule on `Σ_i |x-a_i|^{-2}`.
    pub error_estimate: f64,
}

/// Result of one integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    /// `|fine - embedded| + |innermost shell|`.
    pub error_estimate: f64,
    /// Innermost-shell contribution divided by the rest of the integral.
    pub shell_growth: f64,
}

impl Integral {
    /// The innermost shell adds more than [`SHELL_GROWTH_THRESHOLD`] of the rest.
    pub fn diverging(&self) -> bool {
        self.shell_growth.abs() > SHELL_GROWTH_THRESHOLD
    }
}

/// Distance from `p` to the axis-aligned cell `[lo, lo + h]^N`.
fn cell_distance(p: &[f64], lo: &[f64], h: f64) -> f64 {
    p.iter()
        .zip(lo)
        .map(|(&x, &l)| {
            let d = if x < l { l - x } else if x > l + h { x - l - h } else { 0.0 };
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn tensor_nodes(lo: &[f64], h: f64, level: u16, gl: &[(f64, f64)], out: &mut NodeSet) {
    let dim = lo.len();
    let q = gl.len();
    let total = q.pow(dim as u32);
    let scale = (0.5 * h).powi(dim as i32);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        let mut w = scale;
        for k in 0..dim {
            let (t, wt) = gl[idx[k]];
            out.points.push(lo[k] + 0.5 * h * (t + 1.0));
            w *= wt;
        }
        out.weights.push(w);
        out.levels.push(level);
        for k in 0..dim {
            idx[k] += 1;
            if idx[k] < q {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Builds the pole-graded box rule on `[-L, L]^N`.
pub fn build_rule(config: &PoleConfiguration, params: &RuleParams) -> Result<QuadratureRule> {
    let dim = config.dimension();
    let l = params.half_width;
    if !(params.r_min_ratio > 0.0 && params.r_min_ratio < 1.0) {
        return Err(Error::InvalidParameter("r_min_ratio must lie in (0, 1)".into()));
    }
    if params.panels_per_axis == 0 || params.order < 3 {
        return Err(Error::InvalidParameter("need at least one panel and order ≥ 3".into()));
    }
    for (i, a) in config.poles().iter().enumerate() {
        if a.iter().any(|&c| c.abs() + config.r0() > l) {
            return Err(Error::BoxTooSmall { pole: i });
        }
    }
    let r_min = params.r_min_ratio * config.r0();
    let h0 = 2.0 * l / params.panels_per_axis as f64;

    // Leaf cells (lower corner, size, level), discovered depth first in a fixed order.
    let mut leaves: Vec<(Vec<f64>, f64, u16)> = Vec::new();
    let mut stack: Vec<(Vec<f64>, f64, u16)> = Vec::new();
    let p = params.panels_per_axis;
    for flat in (0..p.pow(dim as u32)).rev() {
        let mut rem = flat;
        let lo: Vec<f64> = (0..dim)
            .map(|_| {
                let i = rem % p;
                rem /= p;
                -l + i as f64 * h0
            })
            .collect();
        stack.push((lo, h0, 0));
    }
    let mut max_level = 0;
    while let Some((lo, h, level)) = stack.pop() {
        let near = config.poles().iter().any(|a| cell_distance(a, &lo, h) < 0.5 * h);
        if !near {
            max_level = max_level.max(level);
            leaves.push((lo, h, level));
            continue;
        }
        if h <= r_min {
            continue;
        }
        let hh = 0.5 * h;
        for child in (0..1usize << dim).rev() {
            let clo: Vec<f64> = (0..dim).map(|k| lo[k] + if child >> k & 1 == 1 { hh } else { 0.0 }).collect();
            stack.push((clo, hh, level + 1));
        }
    }

    let make = |order: usize| -> NodeSet {
        let gl = gauss_legendre(order);
        let parts: Vec<NodeSet> = leaves
            .par_iter()
            .map(|(lo, h, level)| {
                let mut ns = NodeSet::default();
                tensor_nodes(lo, *h, *level, &gl, &mut ns);
                ns
            })
            .collect();
        let mut all = NodeSet::default();
        for part in parts {
            all.extend(part);
        }
        all
    };
    let fine = make(params.order);
    let coarse = make(params.order - 2);
    finish(Domain::Box { half_width: l }, config, fine, coarse, r_min, max_level)
}

/// Ball rule on `B(center, radius) \ B(center, r_min)`: dyadic shells, `radial_order`
/// Gauss nodes per shell in the log-radius, and a `SphereRule` of the given size.
pub fn build_ball_rule(
    config: &PoleConfiguration,
    center: &[f64],
    radius: f64,
    r_min: f64,
    radial_order: usize,
    n_theta: usize,
    n_phi: usize,
) -> Result<QuadratureRule> {
    let dim = config.dimension();
    if center.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: center.len() });
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidRadius(radius));
    }
    if !(r_min > 0.0 && r_min < radius) {
        return Err(Error::InvalidParameter("need 0 < r_min < radius".into()));
    }
    let shells = (radius / r_min).log2().ceil() as usize;
    // Full dyadic shells: the effective cutoff is R·2^{-shells} ≤ r_min.
    let r_min = radius * 0.5f64.powi(shells as i32);
    let make = |order: usize, sphere: &SphereRule| -> NodeSet {
        let gl = gauss_legendre(order);
        let mut ns = NodeSet::default();
        for k in 0..shells {
            let hi = radius * 0.5f64.powi(k as i32);
            let lo = 0.5 * hi;
            let (ulo, uhi) = (lo.ln(), hi.ln());
            for &(t, wt) in &gl {
                let u = 0.5 * (ulo + uhi) + 0.5 * (uhi - ulo) * t;
                let rho = u.exp();
                // dx = ρ^{N-1} dρ dω = ρ^N du dω
                let radial_w = 0.5 * (uhi - ulo) * wt * rho.powi(dim as i32);
                for (dir, dw) in sphere.iter() {
                    ns.points.extend(center.iter().zip(dir).map(|(c, d)| c + rho * d));
                    ns.weights.push(radial_w * dw);
                    ns.levels.push(k as u16);
                }
            }
        }
        ns
    };
    let fine = make(radial_order, &SphereRule::new(dim, n_theta, n_phi));
    let coarse = make(radial_order.saturating_sub(2).max(2), &SphereRule::new(dim, (n_theta / 2).max(2), (n_phi / 2).max(3)));
    finish(
        Domain::Ball { center: center.to_vec(), radius },
        config,
        fine,
        coarse,
        r_min,
        shells.saturating_sub(1) as u16,
    )
}

fn finish(
    domain: Domain,
    config: &PoleConfiguration,
    fine: NodeSet,
    coarse: NodeSet,
    r_min: f64,
    max_level: u16,
) -> Result<QuadratureRule> {
    let dim = config.dimension();
    for k in 0..fine.len() {
        if let Some(_) = config.pole_at(fine.point(k, dim)) {
            return Err(Error::SingularEvaluation { node: k, point: fine.point(k, dim).to_vec() });
        }
    }
    let mut rule = QuadratureRule { domain, config: config.clone(), fine, coarse, r_min, max_level, error_estimate: 0.0 };
    let probe = |x: &[f64]| config.poles().iter().map(|a| 1.0 / vecmath::dist_sq(x, a)).sum::<f64>();
    let ones = WeightField::ones(&rule);
    let r = rule.integrate_field(probe, &ones)?;
    rule.error_estimate = r.error_estimate / r.value.abs().max(f64::MIN_POSITIVE);
    Ok(rule)
}

/// Values of `μ` at the nodes of a rule, so that several integrals share one evaluation.
#[derive(Debug, Clone)]
pub struct WeightField {
    pub fine: Vec<f64>,
    pub coarse: Vec<f64>,
}

impl WeightField {
    pub fn ones(rule: &QuadratureRule) -> Self {
        Self { fine: vec![1.0; rule.fine.len()], coarse: vec![1.0; rule.coarse.len()] }
    }
}

/// Integrand values on a rule, one per node.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub values: Vec<f64>,
    pub gradient_values: Option<Vec<Vec<f64>>>,
}

impl QuadratureRule {
    pub fn dim(&self) -> usize {
        self.config.dimension()
    }

    pub fn node_count(&self) -> usize {
        self.fine.len()
    }

    pub fn weight_field<W: Weight + ?Sized>(&self, w: &W) -> Result<WeightField> {
        let dim = self.dim();
        let eval = |ns: &NodeSet| -> Result<Vec<f64>> {
            (0..ns.len()).into_par_iter().map(|k| w.value(ns.point(k, dim))).collect()
        };
        Ok(WeightField { fine: eval(&self.fine)?, coarse: eval(&self.coarse)? })
    }

    /// `Σ w_k f(x_k) μ(x_k)` with the embedded-rule error estimate.
    pub fn integrate<W, F>(&self, f: F, w: &W) -> Result<Integral>
    where
        W: Weight + ?Sized,
        F: Fn(&[f64]) -> f64 + Sync,
    {
        self.integrate_field(f, &self.weight_field(w)?)
    }

    pub fn integrate_field<F>(&self, f: F, mu: &WeightField) -> Result<Integral>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        Ok(self.integrate_many(|x| [f(x)], mu)?[0])
    }

    /// Integrates `K` integrands in one pass over the nodes.
    pub fn integrate_many<const K: usize, F>(&self, f: F, mu: &WeightField) -> Result<[Integral; K]>
    where
        F: Fn(&[f64]) -> [f64; K] + Sync,
    {
        let dim = self.dim();
        let top = self.max_level;
        let sweep = |ns: &NodeSet, weights: &[f64]| -> Result<([f64; K], [f64; K])> {
            let vals: Vec<[f64; K]> = (0..ns.len())
                .into_par_iter()
                .map(|k| {
                    let x = ns.point(k, dim);
                    let v = f(x);
                    if v.iter().any(|c| !c.is_finite()) || !weights[k].is_finite() {
                        return Err(Error::SingularEvaluation { node: k, point: x.to_vec() });
                    }
                    let scale = ns.weights[k] * weights[k];
                    Ok(v.map(|c| c * scale))
                })
                .collect::<Result<_>>()?;
            let mut total = [0.0; K];
            let mut inner = [0.0; K];
            let mut buf = Vec::with_capacity(vals.len());
            for c in 0..K {
                buf.clear();
                buf.extend(vals.iter().map(|v| v[c]));
                total[c] = vecmath::stable_sum(&buf);
                buf.clear();
                buf.extend(vals.iter().zip(&ns.levels).filter(|(_, &l)| top > 0 && l == top).map(|(v, _)| v[c]));
                inner[c] = vecmath::stable_sum(&buf);
            }
            Ok((total, inner))
        };
        let (fine, inner) = sweep(&self.fine, &mu.fine)?;
        let (coarse, _) = sweep(&self.coarse, &mu.coarse)?;
        Ok(std::array::from_fn(|c| {
            let rest = fine[c] - inner[c];
            Integral {
                value: fine[c],
                error_estimate: (fine[c] - coarse[c]).abs() + inner[c].abs(),
                shell_growth: if rest != 0.0 { inner[c] / rest } else if inner[c] == 0.0 { 0.0 } else { f64::INFINITY },
            }
        }))
    }

    /// Samples `f` and optionally a gradient at the fine nodes.
    pub fn sample<F>(&self, f: F) -> FieldSample
    where
        F: Fn(&[f64]) -> (f64, Option<Vec<f64>>) + Sync,
    {
        let dim = self.dim();
        let pairs: Vec<(f64, Option<Vec<f64>>)> =
            (0..self.fine.len()).into_par_iter().map(|k| f(self.fine.point(k, dim))).collect();
        let has_grad = pairs.iter().all(|p| p.1.is_some()) && !pairs.is_empty();
        let (values, grads): (Vec<f64>, Vec<Option<Vec<f64>>>) = pairs.into_iter().unzip();
        FieldSample {
            values,
            gradient_values: if has_grad { Some(grads.into_iter().map(Option::unwrap).collect()) } else { None },
        }
    }
}

/// Uniform Monte Carlo over `[-L, L]^N` weighted by `μ`: returns `(estimate, std_error)`.
/// Points landing exactly on a pole are redrawn.
pub fn monte_carlo_oracle<W, F>(f: F, w: &W, half_width: f64, sample_count: usize, seed: u64) -> Result<(f64, f64)>
where
    W: Weight + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    if sample_count < 1000 {
        return Err(Error::InvalidParameter("monte carlo needs at least 1000 samples".into()));
    }
    let dim = w.config().dimension();
    let volume = (2.0 * half_width).powi(dim as i32);
    // Fixed-size chunks with derived seeds keep the result independent of thread count.
    const CHUNK: usize = 4096;
    let chunks = sample_count.div_ceil(CHUNK);
    let parts: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(sample_count - c * CHUNK);
            let mut vals = Vec::with_capacity(count);
            let mut x = vec![0.0; dim];
            while vals.len() < count {
                for xi in x.iter_mut() {
                    *xi = rng.gen_range(-half_width..half_width);
                }
                let Ok(mu) = w.value(&x) else { continue };
                vals.push(f(&x) * mu);
            }
            let s = vecmath::stable_sum(&vals);
            let sq: Vec<f64> = vals.iter().map(|v| v * v).collect();
            (s, vecmath::stable_sum(&sq))
        })
        .collect();
    let n = sample_count as f64;
    let sum: f64 = parts.iter().map(|p| p.0).sum();
    let sum_sq: f64 = parts.iter().map(|p| p.1).sum();
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok((mean * volume, volume * (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::WeightSpec;

    fn single(n: usize, r0: f64) -> PoleConfiguration {
        PoleConfiguration::new(vec![vec![0.0; n]], n, Some(r0)).unwrap()
    }

    #[test]
    fn sphere_rule_area() {
        for dim in 2..=5 {
            let s = SphereRule::new(dim, 6, 12);
            let total: f64 = s.iter().map(|(_, w)| w).sum();
            assert!((total - sphere_area(dim)).abs() < 1e-12 * total, "dim {dim}");
            for (d, _) in s.iter() {
                assert!((vecmath::norm(d) - 1.0).abs() < 1e-14);
            }
        }
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn sphere_rule_second_moments() {
        // ∫ ω_1² dω = |S^{N-1}| / N
        for dim in 3..=5 {
            let s = SphereRule::new(dim, 6, 12);
            let m: f64 = s.iter().map(|(d, w)| w * d[dim - 1] * d[dim - 1]).sum();
            assert!((m - sphere_area(dim) / dim as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn box_integrates_constant() {
        let cfg = single(3, 0.5);
        let rule = build_rule(&cfg, &RuleParams { half_width: 1.0, panels_per_axis: 4, ..Default::default() }).unwrap();
        let leb = WeightSpec::lebesgue(cfg);
        let r = rule.integrate(|_| 1.0, &leb).unwrap();
        assert!((r.value - 8.0).abs() < 1e-10, "{}", r.value);
        assert!(rule.fine.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn ball_rule_inverse_square() {
        let cfg = single(3, 2.0);
        let rule = build_ball_rule(&cfg, &[0.0; 3], 1.0, 1e-6, 6, 8, 16).unwrap();
        let leb = WeightSpec::lebesgue(cfg);
        let r = rule.integrate(|x| 1.0 / vecmath::norm_sq(x), &leb).unwrap();
        assert!((r.value / (4.0 * PI) - 1.0).abs() < 1e-3);
        assert!(!r.diverging());
    }

    #[test]
    fn ball_rule_flags_critical_case() {
        let cfg = single(3, 2.0);
        let rule = build_ball_rule(&cfg, &[0.0; 3], 1.0, 1e-6, 6, 8, 16).unwrap();
        let w = WeightSpec::new(1.0, 0.0, 2.0, 0.0, -1.0, cfg).unwrap();
        let r = rule.integrate(|x| 1.0 / vecmath::norm_sq(x), &w).unwrap();
        assert!(r.diverging(), "growth {}", r.shell_growth);
    }

    #[test]
    fn singular_integrand_is_reported() {
        let cfg = single(3, 0.5);
        let rule = build_rule(&cfg, &RuleParams { half_width: 1.0, panels_per_axis: 4, ..Default::default() }).unwrap();
        let leb = WeightSpec::lebesgue(cfg);
        let err = rule.integrate(|x| if x[0] > 0.9 { f64::NAN } else { 1.0 }, &leb).unwrap_err();
        assert!(matches!(err, Error::SingularEvaluation { .. }));
    }

    #[test]
    fn box_too_small() {
        let cfg = PoleConfiguration::new(vec![vec![2.5, 0.0, 0.0], vec![-2.5, 0.0, 0.0]], 3, None).unwrap();
        assert_eq!(
            build_rule(&cfg, &RuleParams { half_width: 3.0, ..Default::default() }).unwrap_err(),
            Error::BoxTooSmall { pole: 0 }
        );
    }

    #[test]
    fn monte_carlo_constant_is_exact() {
        let leb = WeightSpec::lebesgue(single(3, 0.5));
        let (est, se) = monte_carlo_oracle(|_| 1.0, &leb, 1.0, 5000, 3).unwrap();
        assert!((est - 8.0).abs() < 1e-12);
        assert!(se < 1e-12);
    }

    #[test]
    fn monte_carlo_gaussian() {
        let leb = WeightSpec::lebesgue(single(3, 0.5));
        let (est, se) = monte_carlo_oracle(|x| (-vecmath::norm_sq(x)).exp(), &leb, 4.0, 400_000, 11).unwrap();
        assert!((est - PI.powf(1.5)).abs() < 3.0 * se, "{est} ± {se}");
    }
}
