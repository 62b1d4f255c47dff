//! The weight family
//!
//! ```text
//! μ(x) = exp(-δ Σ_j |x - a_j|^m) / Π_j |x - a_j|^γ
//! ```
//!
//! its logarithmic gradient, and sampling audits of the drift hypotheses, the critical
//! integrability exponent at a pole and the density condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PoleConfiguration;
use crate::quadrature::SphereRule;
use crate::vecmath;

/// Anything that can act as the density of `dμ = μ(x) dx`.
pub trait Weight: Sync {
    fn config(&self) -> &PoleConfiguration;
    /// `μ(x)`; at a pole either `0` or [`Error::SingularPoint`].
    fn value(&self, x: &[f64]) -> Result<f64>;
    /// `∇μ / μ` away from the poles.
    fn log_gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Additive drift-hypothesis constant.
    fn k1(&self) -> f64;
    /// Hardy-shift constant, `k2 > 2 - N`.
    fn k2(&self) -> f64;
    /// Closed-form critical local integrability exponent at `pole`, when known.
    fn analytic_critical_exponent(&self, _pole: usize) -> Option<f64> {
        None
    }
}

/// Parameters of the built-in family together with candidate hypothesis constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub gamma: f64,
    pub delta: f64,
    pub m: f64,
    pub k1: f64,
    pub k2: f64,
    pub poles: PoleConfiguration,
}

impl WeightSpec {
    pub fn new(gamma: f64, delta: f64, m: f64, k1: f64, k2: f64, poles: PoleConfiguration) -> Result<Self> {
        let spec = Self { gamma, delta, m, k1, k2, poles };
        spec.validate()?;
        Ok(spec)
    }

    /// `μ ≡ 1`, `k1 = k2 = 0`.
    pub fn lebesgue(poles: PoleConfiguration) -> Self {
        Self { gamma: 0.0, delta: 0.0, m: 2.0, k1: 0.0, k2: 0.0, poles }
    }

    /// The family member with `k2 = -γ`, the value compatible with the critical
    /// integrability exponent `N - γ`.
    pub fn with_critical_shift(gamma: f64, delta: f64, m: f64, k1: f64, poles: PoleConfiguration) -> Result<Self> {
        Self::new(gamma, delta, m, k1, -gamma, poles)
    }

    /// Structural checks: `δ ≥ 0`, `m ≤ 2`, finite constants and local integrability of
    /// `μ` (`-N < γ < N`). The narrower Hardy window is [`WeightSpec::check_admissible`].
    pub fn validate(&self) -> Result<()> {
        let n = self.poles.dimension() as f64;
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.delta >= 0.0) {
            return bad(format!("delta must be nonnegative, got {}", self.delta));
        }
        if !(self.m <= 2.0) {
            return bad(format!("m must be at most 2, got {}", self.m));
        }
        if !(self.gamma < n && self.gamma > -n) {
            return bad(format!("gamma must lie in (-N, N) = ({}, {}), got {}", -n, n, self.gamma));
        }
        if !self.k1.is_finite() || !self.k2.is_finite() {
            return bad("k1 and k2 must be finite".into());
        }
        Ok(())
    }

    /// The window `-N < γ < N - 2` and `k2 > 2 - N` required by the Hardy inequalities.
    pub fn check_admissible(&self) -> Result<()> {
        let n = self.poles.dimension() as f64;
        if !(self.gamma < n - 2.0 && self.gamma > -n) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in (-N, N-2) = ({}, {}), got {}",
                -n,
                n - 2.0,
                self.gamma
            )));
        }
        if !(self.k2 > 2.0 - n) {
            return Err(Error::HardyShiftOutOfRange { k2: self.k2, dimension: self.poles.dimension() });
        }
        Ok(())
    }

    pub fn with_k1(&self, k1: f64) -> Self {
        Self { k1, ..self.clone() }
    }

    pub fn is_lebesgue(&self) -> bool {
        self.gamma == 0.0 && self.delta == 0.0
    }
}

/// `exp(-δ Σ r_j^m) / Π r_j^γ`.
pub fn eval_weight(spec: &WeightSpec, x: &[f64]) -> Result<f64> {
    let mut exponent = 0.0;
    let mut log_power = 0.0;
    for (j, a) in spec.poles.poles().iter().enumerate() {
        let r2 = vecmath::dist_sq(x, a);
        if r2 == 0.0 {
            if spec.gamma > 0.0 || (spec.delta > 0.0 && spec.m <= 0.0) {
                return Err(Error::SingularPoint { pole: j });
            }
            if spec.gamma < 0.0 {
                return Ok(0.0);
            }
            continue;
        }
        if spec.delta != 0.0 {
            exponent += r2.powf(spec.m / 2.0);
        }
        if spec.gamma != 0.0 {
            log_power += 0.5 * r2.ln();
        }
    }
    Ok((-spec.delta * exponent - spec.gamma * log_power).exp())
}

/// `∇μ/μ = Σ_j (-γ - δ m r_j^m) (x - a_j) / r_j²`.
pub fn eval_log_gradient(spec: &WeightSpec, x: &[f64]) -> Result<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    for (j, a) in spec.poles.poles().iter().enumerate() {
        let r2 = vecmath::dist_sq(x, a);
        if r2 == 0.0 {
            return Err(Error::SingularPoint { pole: j });
        }
        let coeff = -spec.gamma - spec.delta * spec.m * r2.powf(spec.m / 2.0);
        if coeff != 0.0 {
            for k in 0..x.len() {
                g[k] += coeff * (x[k] - a[k]) / r2;
            }
        }
    }
    Ok(g)
}

impl Weight for WeightSpec {
    fn config(&self) -> &PoleConfiguration {
        &self.poles
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        eval_weight(self, x)
    }
    fn log_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        eval_log_gradient(self, x)
    }
    fn k1(&self) -> f64 {
        self.k1
    }
    fn k2(&self) -> f64 {
        self.k2
    }
    fn analytic_critical_exponent(&self, _pole: usize) -> Option<f64> {
        Some(self.poles.dimension() as f64 - self.gamma)
    }
}

type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A user-supplied weight. The Hardy shift `k2` cannot be derived and must be given.
pub struct CallbackWeight {
    pub config: PoleConfiguration,
    pub value_fn: Box<ScalarFn>,
    pub log_gradient_fn: Box<VectorFn>,
    pub k1: f64,
    pub k2: f64,
}

impl Weight for CallbackWeight {
    fn config(&self) -> &PoleConfiguration {
        &self.config
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        if let Some(pole) = self.config.pole_at(x) {
            return Err(Error::SingularPoint { pole });
        }
        Ok((self.value_fn)(x))
    }
    fn log_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(pole) = self.config.pole_at(x) {
            return Err(Error::SingularPoint { pole });
        }
        Ok((self.log_gradient_fn)(x))
    }
    fn k1(&self) -> f64 {
        self.k1
    }
    fn k2(&self) -> f64 {
        self.k2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HypothesisId {
    H1,
    H2,
    H2prime,
    H3,
    DensityCond,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub hypothesis_id: HypothesisId,
    pub sample_count: usize,
    /// Most violated margin; positive means satisfied. For the drift hypotheses this is
    /// the slack per unit weight divided by `1 + |left| + |right|`.
    pub min_slack: f64,
    pub witness_point: Vec<f64>,
    pub verdict: Verdict,
    pub tolerance: f64,
    /// Auxiliary estimate (critical exponent, fitted power) where relevant.
    pub estimate: Option<f64>,
}

/// Default tolerance on the scaled drift slack.
pub const SLACK_TOLERANCE: f64 = 1e-9;

struct SlackMin {
    slack: f64,
    point: Vec<f64>,
    /// `max_x (rhs(x) - lhs(x))` with `k1` removed: the smallest admissible `k1`.
    k1_needed: f64,
}

fn minimize_slack<F>(samples: &[Vec<f64>], k1: f64, terms: F) -> Result<SlackMin>
where
    F: Fn(&[f64]) -> Result<Option<(f64, f64)>>,
{
    let mut best: Option<SlackMin> = None;
    let mut k1_needed = f64::NEG_INFINITY;
    for x in samples {
        // (lhs, rhs_without_k1) such that the hypothesis reads lhs + k1 ≥ rhs.
        let Some((lhs, rhs)) = terms(x)? else { continue };
        let raw = lhs + k1 - rhs;
        let scaled = raw / (1.0 + lhs.abs() + (rhs - k1).abs() + k1.abs());
        k1_needed = k1_needed.max(rhs - lhs);
        if best.as_ref().map_or(true, |b| scaled < b.slack) {
            best = Some(SlackMin { slack: scaled, point: x.clone(), k1_needed: 0.0 });
        }
    }
    let mut best = best.ok_or(Error::NoSamples)?;
    best.k1_needed = k1_needed;
    Ok(best)
}

fn report(id: HypothesisId, count: usize, m: SlackMin, tol: f64) -> HypothesisReport {
    HypothesisReport {
        hypothesis_id: id,
        sample_count: count,
        min_slack: m.slack,
        witness_point: m.point,
        verdict: if m.slack >= -tol { Verdict::Satisfied } else { Verdict::Violated },
        tolerance: tol,
        estimate: Some(m.k1_needed),
    }
}

fn h2_terms<W: Weight + ?Sized>(w: &W, beta: f64, x: &[f64]) -> Result<Option<(f64, f64)>> {
    if w.config().pole_at(x).is_some() {
        return Ok(None);
    }
    let g = w.log_gradient(x)?;
    let mut lhs = 0.0;
    let mut pot = 0.0;
    for a in w.config().poles() {
        let d = vecmath::sub(x, a);
        let r2 = vecmath::norm_sq(&d);
        lhs += beta * vecmath::dot(&d, &g) / r2;
        pot += 1.0 / r2;
    }
    Ok(Some((lhs, w.k2() * beta * pot)))
}

/// Audits `β Σ_i (x-a_i)/|x-a_i|² · ∇μ ≥ (-k1 + Σ_i k2 β / |x-a_i|²) μ` per unit weight.
///
/// `estimate` carries the smallest `k1` for which the samples pass.
pub fn check_h2<W: Weight + ?Sized>(w: &W, beta: f64, samples: &[Vec<f64>]) -> Result<HypothesisReport> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    let m = minimize_slack(samples, w.k1(), |x| h2_terms(w, beta, x))?;
    Ok(report(HypothesisId::H2, samples.len(), m, SLACK_TOLERANCE))
}

/// Smallest `k1` such that the H2 audit passes on `samples`.
pub fn required_k1_h2<W: Weight + ?Sized>(w: &W, beta: f64, samples: &[Vec<f64>]) -> Result<f64> {
    Ok(minimize_slack(samples, 0.0, |x| h2_terms(w, beta, x))?.k1_needed)
}

fn h2prime_terms<W: Weight + ?Sized>(w: &W, alpha: f64, eps: f64, pole: usize, x: &[f64]) -> Result<Option<(f64, f64)>> {
    let a = &w.config().poles()[pole];
    let d = vecmath::sub(x, a);
    let r2 = vecmath::norm_sq(&d);
    if r2 == 0.0 || r2 >= w.config().r0().powi(2) {
        return Ok(None);
    }
    let g = w.log_gradient(x)?;
    let drift = alpha * vecmath::dot(&d, &g) / (eps + r2);
    // k1 + k2 α/(ε + r²) - drift ≥ 0, i.e. lhs = k2 α/(ε + r²), rhs = drift.
    Ok(Some((w.k2() * alpha / (eps + r2), drift)))
}

/// Audits `α(x-a_i)/(ε+|x-a_i|²) · ∇μ ≤ (k1 + k2 α/(ε+|x-a_i|²)) μ` on every
/// `B(a_i, r0)` and for every `ε` in `eps_list`. `samples_per_ball[i]` are points of
/// `B(a_i, r0)`; points outside it are skipped.
pub fn check_h2prime<W: Weight + ?Sized>(
    w: &W,
    alpha: f64,
    eps_list: &[f64],
    samples_per_ball: &[Vec<Vec<f64>>],
) -> Result<HypothesisReport> {
    let m = h2prime_min(w, alpha, eps_list, samples_per_ball, w.k1())?;
    let count = samples_per_ball.iter().map(Vec::len).sum::<usize>() * eps_list.len();
    Ok(report(HypothesisId::H2prime, count, m, SLACK_TOLERANCE))
}

pub fn required_k1_h2prime<W: Weight + ?Sized>(
    w: &W,
    alpha: f64,
    eps_list: &[f64],
    samples_per_ball: &[Vec<Vec<f64>>],
) -> Result<f64> {
    Ok(h2prime_min(w, alpha, eps_list, samples_per_ball, 0.0)?.k1_needed)
}

fn h2prime_min<W: Weight + ?Sized>(
    w: &W,
    alpha: f64,
    eps_list: &[f64],
    samples_per_ball: &[Vec<Vec<f64>>],
    k1: f64,
) -> Result<SlackMin> {
    if !(alpha < 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be negative, got {alpha}")));
    }
    if eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidParameter("every epsilon must be positive".into()));
    }
    let mut best: Option<SlackMin> = None;
    let mut k1_needed = f64::NEG_INFINITY;
    for (pole, samples) in samples_per_ball.iter().enumerate() {
        for &eps in eps_list {
            match minimize_slack(samples, k1, |x| h2prime_terms(w, alpha, eps, pole, x)) {
                Ok(m) => {
                    k1_needed = k1_needed.max(m.k1_needed);
                    if best.as_ref().map_or(true, |b| m.slack < b.slack) {
                        best = Some(m);
                    }
                }
                Err(Error::NoSamples) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let mut best = best.ok_or(Error::NoSamples)?;
    best.k1_needed = k1_needed;
    Ok(best)
}

/// Positivity and finiteness of `μ` and `∇μ/μ` away from the poles, plus the
/// integrability window `-N < γ < N - 2` of the built-in family.
pub fn check_h1(spec: &WeightSpec, samples: &[Vec<f64>]) -> Result<HypothesisReport> {
    let n = spec.poles.dimension() as f64;
    let window = (n - 2.0 - spec.gamma).min(spec.gamma + n);
    let mut min_val = f64::INFINITY;
    let mut witness = None;
    let mut count = 0;
    for x in samples {
        if spec.poles.pole_at(x).is_some() {
            continue;
        }
        count += 1;
        let v = eval_weight(spec, x)?;
        let g = eval_log_gradient(spec, x)?;
        let ok = v.is_finite() && g.iter().all(|c| c.is_finite());
        let score = if ok { v } else { f64::NEG_INFINITY };
        if score < min_val {
            min_val = score;
            witness = Some(x.clone());
        }
    }
    let witness = witness.ok_or(Error::NoSamples)?;
    // Both the positivity margin and the window margin must be positive.
    let slack = if min_val > 0.0 { window } else { min_val.min(window).min(0.0) - f64::MIN_POSITIVE };
    Ok(HypothesisReport {
        hypothesis_id: HypothesisId::H1,
        sample_count: count,
        min_slack: slack,
        witness_point: witness,
        verdict: if slack > 0.0 { Verdict::Satisfied } else { Verdict::Violated },
        tolerance: 0.0,
        estimate: Some(min_val),
    })
}

/// Relative growth threshold that declares a radial integral divergent when the inner
/// cutoff is halved.
pub const DIVERGENCE_GROWTH: f64 = 0.05;

/// Radial shells `[r_{k+1}, r_k]` around a pole with the spherical means of `μ`
/// precomputed at every radial node, so that `∫ |x-a|^{-d} dμ` is cheap for any `d`.
struct RadialProfile {
    dim: usize,
    /// Per shell: (log-radius nodes, weights in the log variable, spherical integral of μ).
    shells: Vec<Vec<(f64, f64, f64)>>,
}

impl RadialProfile {
    fn new<W: Weight + ?Sized>(w: &W, pole: usize, radii: &[f64], sphere: &SphereRule, order: usize) -> Result<Self> {
        let a = &w.config().poles()[pole];
        let gl = gauss_quad::GaussLegendre::new(order).expect("order ≥ 2");
        let mut shells = Vec::with_capacity(radii.len().saturating_sub(1));
        for pair in radii.windows(2) {
            let (lo, hi) = (pair[1].ln(), pair[0].ln());
            let mut nodes = Vec::with_capacity(order);
            for &(t, wt) in gl.as_node_weight_pairs() {
                let u = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t;
                let rho = u.exp();
                let mut mean = 0.0;
                for (dir, dw) in sphere.iter() {
                    let x: Vec<f64> = a.iter().zip(dir).map(|(c, d)| c + rho * d).collect();
                    mean += dw * w.value(&x)?;
                }
                nodes.push((u, 0.5 * (hi - lo) * wt, mean));
            }
            shells.push(nodes);
        }
        Ok(Self { dim: w.config().dimension(), shells })
    }

    /// `∫_{r_{k+1} < |x-a| < r_k} |x-a|^{-d} dμ` for each shell, in `ρ = e^u` variables:
    /// `dx = ρ^{N-1} dρ dω = ρ^N du dω`.
    fn shell_integrals(&self, d: f64) -> Vec<f64> {
        let p = self.dim as f64 - d;
        self.shells
            .iter()
            .map(|nodes| nodes.iter().map(|&(u, wt, mean)| wt * (p * u).exp() * mean).sum())
            .collect()
    }
}

fn validate_decreasing(radii: &[f64]) -> Result<()> {
    if radii.len() < 3 {
        return Err(Error::InvalidParameter("need at least three radii".into()));
    }
    if radii.windows(2).any(|w| !(w[1] < w[0]) || !(w[1] > 0.0)) {
        return Err(Error::InvalidParameter("radii must be strictly decreasing and positive".into()));
    }
    Ok(())
}

/// Growth of the cumulative integral caused by the last cutoff reduction, rescaled to
/// one halving of the radius.
fn growth_per_halving(shells: &[f64], radii: &[f64]) -> f64 {
    let total: f64 = shells.iter().sum();
    let prev = total - shells[shells.len() - 1];
    let k = radii.len();
    let q = radii[k - 2] / radii[k - 1];
    if prev <= 0.0 {
        return f64::INFINITY;
    }
    (total / prev).powf(std::f64::consts::LN_2 / q.ln()) - 1.0
}

/// Radii `R·2^{-k}` for `k = 0..=levels`, with `R = min(1, r0)`.
pub fn default_radii(config: &PoleConfiguration, levels: usize) -> Vec<f64> {
    let r = config.r0().min(1.0);
    (0..=levels).map(|k| r * 0.5f64.powi(k as i32)).collect()
}

/// Estimates `sup{d : |x - a_i|^{-d} ∈ L¹(B(a_i, R), dμ)}` by bisection on `d`, declaring
/// divergence when halving the inner cutoff radius grows the integral by more than
/// [`DIVERGENCE_GROWTH`].
pub fn estimate_critical_exponent<W: Weight + ?Sized>(w: &W, pole_index: usize, radii: &[f64]) -> Result<f64> {
    validate_decreasing(radii)?;
    if pole_index >= w.config().len() {
        return Err(Error::InvalidParameter(format!("no pole with index {pole_index}")));
    }
    let dim = w.config().dimension();
    let sphere = SphereRule::new(dim, 8, 16);
    let profile = RadialProfile::new(w, pole_index, radii, &sphere, 6)?;
    let diverges = |d: f64| growth_per_halving(&profile.shell_integrals(d), radii) > DIVERGENCE_GROWTH;
    let (mut lo, mut hi) = (0.0, 2.0 * dim as f64 + 2.0);
    if diverges(lo) || !diverges(hi) {
        return Err(Error::Inconclusive("bisection failed to bracket the critical exponent".into()));
    }
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if diverges(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// H3 audit: the estimated critical exponent must equal `N + k2` within `tol`.
pub fn check_h3<W: Weight + ?Sized>(w: &W, pole_index: usize, radii: &[f64], tol: f64) -> Result<HypothesisReport> {
    let target = w.config().dimension() as f64 + w.k2();
    let (est, verdict, slack) = match estimate_critical_exponent(w, pole_index, radii) {
        Ok(e) => {
            let slack = tol - (e - target).abs();
            (Some(e), if slack >= 0.0 { Verdict::Satisfied } else { Verdict::Violated }, slack)
        }
        Err(Error::Inconclusive(_)) => (None, Verdict::Inconclusive, f64::NAN),
        Err(e) => return Err(e),
    };
    Ok(HypothesisReport {
        hypothesis_id: HypothesisId::H3,
        sample_count: radii.len(),
        min_slack: slack,
        witness_point: w.config().poles()[pole_index].clone(),
        verdict,
        tolerance: tol,
        estimate: est,
    })
}

/// Threshold on the fitted power of `q(δ)` separating decay from a nonzero limit.
pub const DENSITY_EXPONENT_TOL: f64 = 0.05;

/// Computes `q(δ) = δ^{-p} ∫_{B(a_i, δ)} dμ` and fits `q ∝ δ^e`. Satisfied iff `q`
/// decreases along the sequence and `e > 0`.
pub fn check_density_condition<W: Weight + ?Sized>(
    w: &W,
    p: f64,
    pole_index: usize,
    deltas: &[f64],
) -> Result<HypothesisReport> {
    let dim = w.config().dimension();
    if !(p >= 1.0 && p < dim as f64) {
        return Err(Error::InvalidParameter(format!("p must lie in [1, N), got {p}")));
    }
    validate_decreasing(deltas)?;
    let sphere = SphereRule::new(dim, 8, 16);
    let depth = 60;
    let mut qs = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let radii: Vec<f64> = (0..=depth).map(|k| delta * 0.5f64.powi(k)).collect();
        let prof = RadialProfile::new(w, pole_index, &radii, &sphere, 6)?;
        let mass: f64 = prof.shell_integrals(0.0).iter().sum();
        qs.push(delta.powf(-p) * mass);
    }
    let xs: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = qs.iter().map(|q| q.ln()).collect();
    let exponent = least_squares_slope(&xs, &ys);
    let flat = |a: f64, b: f64| (a - b).abs() <= 1e-6 * a.abs().max(b.abs());
    let decreasing = qs.windows(2).all(|w| w[1] < w[0] && !flat(w[0], w[1]));
    let non_increasing = qs.windows(2).all(|w| w[1] >= w[0] || flat(w[0], w[1]));
    let verdict = if decreasing && exponent > DENSITY_EXPONENT_TOL {
        Verdict::Satisfied
    } else if exponent <= DENSITY_EXPONENT_TOL && non_increasing {
        Verdict::Violated
    } else {
        Verdict::Inconclusive
    };
    Ok(HypothesisReport {
        hypothesis_id: HypothesisId::DensityCond,
        sample_count: deltas.len(),
        min_slack: exponent - DENSITY_EXPONENT_TOL,
        witness_point: w.config().poles()[pole_index].clone(),
        verdict,
        tolerance: DENSITY_EXPONENT_TOL,
        estimate: Some(exponent),
    })
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Admissibility constants of the built-in family around pole `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSplitConstants {
    pub pole: usize,
    pub rho: f64,
    pub c_rho: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// `-k2 / (1 + (n-1)/2)`: upper end of the admissible window for `γ ≥ 0`.
    pub gamma_upper: f64,
    /// `-(k2 + δ m c_ρ / 2) / (1 + (n-1)/2 + c1)` with the `γ < 0` branch of `c1`.
    pub gamma_lower: f64,
}

/// The case-split constants `c_ρ, c1..c4` for every pole, with `α < 0` the drift
/// exponent (`β = -α`). For `γ = 0` the `γ > 0` branches are used.
pub fn section4_constants(spec: &WeightSpec, rho: f64, alpha: f64) -> Result<Vec<CaseSplitConstants>> {
    if !(rho > 0.0) || rho > spec.poles.r0() * (1.0 + 1e-12) {
        return Err(Error::InvalidRadius(rho));
    }
    let n = spec.poles.len();
    let r0 = spec.poles.r0();
    let (g, dm) = (spec.gamma, spec.delta * spec.m);
    let nm1 = (n - 1) as f64;
    let poles = spec.poles.poles();
    Ok((0..n)
        .map(|k| {
            let dists: Vec<f64> = (0..n).filter(|&j| j != k).map(|j| vecmath::dist(&poles[k], &poles[j])).collect();
            let c_rho: f64 = dists
                .iter()
                .map(|&d| (rho + d).powf(spec.m) * (1.0 - d * d / ((rho + d) * (rho + d))))
                .sum();
            let c1_pos = -0.5 * dists.iter().map(|&d| d * d / ((r0 + d) * (r0 + d))).sum::<f64>();
            let c1_neg = -0.5 * dists.iter().map(|&d| d * d / (r0 * r0)).sum::<f64>();
            let positive = g >= 0.0;
            let c1 = if positive { c1_pos } else { c1_neg };
            let c2 = if positive { 0.0 } else { c1 };
            let drift_part = alpha * dm / 2.0 * nm1 / r0.powf(2.0 - spec.m);
            let c3 = if positive { alpha * g / 2.0 * nm1 / (r0 * r0) + drift_part } else { drift_part };
            let c4 = 1.0 + c_rho / (2.0 * rho.powf(spec.m));
            CaseSplitConstants {
                pole: k,
                rho,
                c_rho,
                c1,
                c2,
                c3,
                c4,
                gamma_upper: -spec.k2 / (1.0 + nm1 / 2.0),
                gamma_lower: -(spec.k2 + dm / 2.0 * c_rho) / (1.0 + nm1 / 2.0 + c1_neg),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{halton_box, AuditSampling};
    use approx::assert_abs_diff_eq;

    fn single(n: usize) -> PoleConfiguration {
        PoleConfiguration::new(vec![vec![0.0; n]], n, Some(1.0)).unwrap()
    }

    fn pair3() -> PoleConfiguration {
        PoleConfiguration::new(vec![vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]], 3, None).unwrap()
    }

    #[test]
    fn weight_examples() {
        let leb = WeightSpec::lebesgue(pair3());
        assert_eq!(eval_weight(&leb, &[0.3, -0.2, 7.0]).unwrap(), 1.0);
        let w = WeightSpec::new(1.0, 0.0, 2.0, 0.0, -1.0, single(3)).unwrap();
        assert_abs_diff_eq!(eval_weight(&w, &[2.0, 0.0, 0.0]).unwrap(), 0.5, epsilon = 1e-15);
        let g = WeightSpec::new(0.0, 1.0, 2.0, 0.0, 0.0, pair3()).unwrap();
        assert_abs_diff_eq!(eval_weight(&g, &[0.0; 3]).unwrap(), (-2.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn weight_at_pole() {
        let w = WeightSpec::new(1.0, 0.0, 2.0, 0.0, -1.0, single(3)).unwrap();
        assert_eq!(eval_weight(&w, &[0.0; 3]), Err(Error::SingularPoint { pole: 0 }));
        let w = WeightSpec::new(-1.0, 0.0, 2.0, 0.0, 1.0, single(3)).unwrap();
        assert_eq!(eval_weight(&w, &[0.0; 3]).unwrap(), 0.0);
        assert!(eval_log_gradient(&w, &[0.0; 3]).is_err());
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(WeightSpec::new(1.0, 0.0, 2.0, 0.0, -1.0, single(4)).is_ok());
        assert!(WeightSpec::new(1.0, 0.0, 2.5, 0.0, -1.0, single(3)).is_err());
        assert!(WeightSpec::new(1.0, -0.1, 2.0, 0.0, -1.0, single(3)).is_err());
        assert!(WeightSpec::new(3.0, 0.0, 2.0, 0.0, 0.0, single(3)).is_err());
        let w = WeightSpec::new(1.0, 0.0, 2.0, 0.0, -1.0, single(3)).unwrap();
        assert!(w.check_admissible().is_err());
        let w = WeightSpec::new(0.0, 0.0, 2.0, 0.0, -1.0, single(3)).unwrap();
        assert!(matches!(w.check_admissible(), Err(Error::HardyShiftOutOfRange { .. })));
        assert!(WeightSpec::new(0.5, 1.0, 2.0, 0.0, -0.5, single(3)).unwrap().check_admissible().is_ok());
    }

    #[test]
    fn log_gradient_examples() {
        let leb = WeightSpec::lebesgue(pair3());
        assert_eq!(eval_log_gradient(&leb, &[0.1, 0.2, 0.3]).unwrap(), vec![0.0; 3]);
        let gauss = WeightSpec::new(0.0, 0.5, 2.0, 0.0, 0.0, single(3)).unwrap();
        let x = [0.3, -1.2, 0.7];
        let g = eval_log_gradient(&gauss, &x).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(g[k], -x[k], epsilon = 1e-14);
        }
        let w = WeightSpec::new(1.0, 0.0, 2.0, 0.0, -1.0, single(3)).unwrap();
        let g = eval_log_gradient(&w, &[2.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(g[0], -0.5, epsilon = 1e-15);
        assert_eq!((g[1], g[2]), (0.0, 0.0));
    }

    #[test]
    fn gaussian_case_is_the_gaussian() {
        let g = WeightSpec::new(0.0, 0.7, 2.0, 0.0, 0.0, single(4)).unwrap();
        for x in halton_box(&[0.0; 4], &[2.0; 4], 200, 1) {
            let expect = (-0.7 * vecmath::norm_sq(&x)).exp();
            assert!((eval_weight(&g, &x).unwrap() - expect).abs() <= 1e-15 * expect.max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn h2_trivial_and_gaussian() {
        let leb = WeightSpec::lebesgue(pair3());
        let samples = AuditSampling { box_count: 2000, ..Default::default() }.generate(&pair3());
        let r = check_h2(&leb, 0.7, &samples).unwrap();
        assert_eq!(r.verdict, Verdict::Satisfied);
        assert_eq!(r.min_slack, 0.0);
        let beta = 0.4;
        let delta = 0.8;
        let gauss = WeightSpec::new(0.0, delta, 2.0, 2.0 * delta * beta, 0.0, single(3)).unwrap();
        let samples = AuditSampling { box_count: 2000, ..Default::default() }.generate(gauss.config());
        let r = check_h2(&gauss, beta, &samples).unwrap();
        assert_eq!(r.verdict, Verdict::Satisfied);
        assert!(r.min_slack.abs() < 1e-12);
        assert!(check_h2(&gauss, beta, &[]).is_err());
    }

    #[test]
    fn h2prime_trivial_and_gaussian() {
        let leb = WeightSpec::lebesgue(pair3());
        let s = AuditSampling { box_count: 4000, ..Default::default() };
        let balls: Vec<_> = (0..2).map(|i| s.generate_in_ball(&pair3(), i)).collect();
        let r = check_h2prime(&leb, -1.0, &[1.0, 0.1], &balls).unwrap();
        assert_eq!(r.verdict, Verdict::Satisfied);
        assert_eq!(r.min_slack, 0.0);
        let (alpha, delta): (f64, f64) = (-0.5, 0.3);
        let gauss = WeightSpec::new(0.0, delta, 2.0, 2.0 * delta * alpha.abs(), 0.0, single(3)).unwrap();
        let balls = vec![s.generate_in_ball(gauss.config(), 0)];
        let r = check_h2prime(&gauss, alpha, &[1.0, 0.1, 0.01], &balls).unwrap();
        assert_eq!(r.verdict, Verdict::Satisfied);
    }

    #[test]
    fn critical_exponent_examples() {
        let leb = WeightSpec::lebesgue(single(3));
        let radii = default_radii(leb.config(), 60);
        assert!((estimate_critical_exponent(&leb, 0, &radii).unwrap() - 3.0).abs() < 0.1);
        let w = WeightSpec::new(1.0, 0.0, 2.0, 0.0, -1.0, single(4)).unwrap();
        assert!((estimate_critical_exponent(&w, 0, &radii).unwrap() - 3.0).abs() < 0.1);
        let w = WeightSpec::new(-1.0, 1.0, 2.0, 0.0, 1.0, single(3)).unwrap();
        assert!((estimate_critical_exponent(&w, 0, &radii).unwrap() - 4.0).abs() < 0.1);
    }

    #[test]
    fn density_examples() {
        let deltas: Vec<f64> = (1..=8).map(|k| 0.5f64.powi(k)).collect();
        let leb = WeightSpec::lebesgue(single(3));
        let r = check_density_condition(&leb, 2.0, 0, &deltas).unwrap();
        assert_eq!(r.verdict, Verdict::Satisfied);
        assert!((r.estimate.unwrap() - 1.0).abs() < 1e-3);
        let w = WeightSpec::new(1.0, 0.0, 2.0, 0.0, -1.0, single(3)).unwrap();
        let r = check_density_condition(&w, 2.0, 0, &deltas).unwrap();
        assert_eq!(r.verdict, Verdict::Violated);
        let w = WeightSpec::new(1.0, 0.0, 2.0, 0.0, -1.0, single(4)).unwrap();
        let r = check_density_condition(&w, 2.0, 0, &deltas).unwrap();
        assert_eq!(r.verdict, Verdict::Satisfied);
    }

    #[test]
    fn case_split_constant_examples() {
        let w = WeightSpec::new(0.5, 1.0, 2.0, 0.0, -0.5, single(3)).unwrap();
        let c = &section4_constants(&w, 0.5, -1.0).unwrap()[0];
        assert_eq!((c.c_rho, c.c4), (0.0, 1.0));
        let w = WeightSpec::new(0.5, 1.0, 2.0, 0.0, -0.5, pair3()).unwrap();
        let c = &section4_constants(&w, 0.1, -1.0).unwrap()[0];
        assert_abs_diff_eq!(c.c_rho, 0.41, epsilon = 1e-12);
        let seq: Vec<f64> = [1.0, 0.1, 0.01, 0.001]
            .iter()
            .map(|&r| section4_constants(&w, r, -1.0).unwrap()[0].c_rho)
            .collect();
        assert!(seq.windows(2).all(|p| p[1] < p[0]));
        assert!(seq[3] < 5e-3);
        assert_eq!(section4_constants(&w, 0.0, -1.0), Err(Error::InvalidRadius(0.0)));
    }
}
