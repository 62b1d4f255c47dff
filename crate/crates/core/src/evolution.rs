//! Implicit Euler for `∂ₜu = Lu + Vu` in the discrete `L²_μ` geometry, the exponential
//! bound fit, a mesh-refinement blow-up indicator and positivity on a compact set.
//!
//! Steps solve `(M_L + dt·A) u_{k+1} = M_L u_k` with the row-sum lumped mass `M_L`, which
//! keeps the step matrix diagonally weighted and the norm `√(uᵀM_L u)` contractive for
//! `A ⪰ 0`. Existence versus nonexistence is judged only through the behaviour of the
//! fitted growth rate under refinement: a desk-scale proxy, not a proof.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hardy::hardy_constant;
use crate::linalg::{CholeskySolver, SymSparse};
use crate::spectrum::{assemble, DiscreteForms, MeshParams};
use crate::vecmath;
use crate::weights::Weight;
use crate::PoleConfiguration;

/// Fit tolerance on the log-linear misfit.
pub const FIT_TOLERANCE: f64 = 0.1;
/// Relative growth per level that counts as non-stabilizing.
pub const GROWTH_PER_LEVEL: f64 = 0.5;
pub const PROXY_NOTE: &str = "desk-scale proxy: evidence from mesh refinement of the discrete growth rate";

/// Axis-aligned compact box `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl CompactSet {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    /// Distance from the box to a point (0 inside).
    pub fn distance_to(&self, p: &[f64]) -> f64 {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| (l - v).max(v - h).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// A cube of half-width `L/8` centered at `centroid ± L/2 e_k`, taking the first of
    /// `+e_N, -e_N, +e_{N-1}, …` that stays clear of every pole.
    pub fn default_for(config: &PoleConfiguration, half_width: f64) -> Result<Self> {
        let c = config.centroid();
        let s = 0.125 * half_width;
        let mut last = None;
        for k in (0..config.dimension()).rev() {
            for sign in [1.0, -1.0] {
                let mut center = c.clone();
                center[k] += sign * 0.5 * half_width;
                let set = CompactSet { lo: center.iter().map(|v| v - s).collect(), hi: center.iter().map(|v| v + s).collect() };
                match set.check_clear(config) {
                    Ok(()) => return Ok(set),
                    Err(e) => last = Some(e),
                }
            }
        }
        Err(last.expect("dimension is at least 3"))
    }

    /// `K` must stay outside every `B(a_i, 10⁻²·r0)`.
    pub fn check_clear(&self, config: &PoleConfiguration) -> Result<()> {
        if self.lo.len() != config.dimension() || self.hi.len() != config.dimension() {
            return Err(Error::DimensionMismatch { expected: config.dimension(), got: self.lo.len() });
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidParameter("compact set needs lo ≤ hi".into()));
        }
        for (i, a) in config.poles().iter().enumerate() {
            if self.distance_to(a) <= 1e-2 * config.r0() {
                return Err(Error::InvalidParameter(format!("compact set touches the ball around pole {i}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    /// `√(uᵀM_L u)`.
    pub norms: Vec<f64>,
    /// Minimum of `u` over the dofs inside `K` (`+∞` when `K` holds no dof).
    pub min_on_k: Vec<f64>,
    /// Coordinates of that minimum.
    pub argmin_on_k: Vec<Vec<f64>>,
    /// Minimum over all dofs.
    pub global_min: Vec<f64>,
    pub dt: f64,
    pub mesh_level: usize,
    pub dofs: usize,
    /// `M_L + dt·A` was not positive definite, or the state stopped being finite.
    pub breakdown: bool,
    pub breakdown_time: Option<f64>,
}

fn record(forms: &DiscreteForms, ml: &[f64], u: &[f64], k_dofs: &[usize], trace: &mut EvolutionTrace, t: f64) {
    let norm = u.iter().zip(ml).map(|(v, m)| m * v * v).sum::<f64>().sqrt();
    let mut kmin = f64::INFINITY;
    let mut arg = None;
    for &d in k_dofs {
        if u[d] < kmin {
            kmin = u[d];
            arg = Some(d);
        }
    }
    trace.times.push(t);
    trace.norms.push(norm);
    trace.min_on_k.push(kmin);
    trace.argmin_on_k.push(arg.map(|d| forms.mesh.dof_coords(d)).unwrap_or_default());
    trace.global_min.push(u.iter().copied().fold(f64::INFINITY, f64::min));
}

/// Diagonal of the lumped mass.
pub fn lumped_diagonal(forms: &DiscreteForms) -> Vec<f64> {
    forms.mass.row_sums(&forms.pattern)
}

/// Implicit Euler from `u0` to `t_final` with step `dt`, recording every step.
pub fn evolve(forms: &DiscreteForms, u0: &[f64], t_final: f64, dt: f64, k: &CompactSet) -> Result<EvolutionTrace> {
    let n = forms.pattern.n;
    if u0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u0.len() });
    }
    if !(dt > 0.0) || !(t_final > 0.0) || !dt.is_finite() || !t_final.is_finite() {
        return Err(Error::InvalidParameter(format!("need dt > 0 and T > 0 (dt = {dt}, T = {t_final})")));
    }
    if let Some(i) = u0.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidParameter(format!("initial data must be nonnegative (entry {i} = {})", u0[i])));
    }
    let ml = lumped_diagonal(forms);
    let mlm = SymSparse::diagonal_from(&forms.pattern, &ml);
    let mut trace = EvolutionTrace {
        times: Vec::new(),
        norms: Vec::new(),
        min_on_k: Vec::new(),
        argmin_on_k: Vec::new(),
        global_min: Vec::new(),
        dt,
        mesh_level: forms.mesh_level,
        dofs: n,
        breakdown: false,
        breakdown_time: None,
    };
    let k_dofs: Vec<usize> = (0..n).filter(|&d| k.contains(&forms.mesh.dof_coords(d))).collect();
    let mut u = u0.to_vec();
    record(forms, &ml, &u, &k_dofs, &mut trace, 0.0);
    let solver = CholeskySolver::new(&forms.pattern)?;
    let Some(factor) = solver.factor(&mlm.combine(1.0, &forms.a, dt))? else {
        trace.breakdown = true;
        trace.breakdown_time = Some(0.0);
        return Ok(trace);
    };
    let steps = (t_final / dt).round().max(1.0) as usize;
    for s in 1..=steps {
        let rhs: Vec<f64> = u.iter().zip(&ml).map(|(v, m)| v * m).collect();
        u = factor.solve(&rhs);
        let t = s as f64 * dt;
        if u.iter().any(|v| !v.is_finite()) {
            trace.breakdown = true;
            trace.breakdown_time = Some(t);
            break;
        }
        record(forms, &ml, &u, &k_dofs, &mut trace, t);
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitVerdict {
    Bounded,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundFit {
    #[serde(rename = "M")]
    pub m: f64,
    pub omega: f64,
    /// Largest `|log(‖u(t)‖/‖u₀‖) - (b + ωt)|` about the least-squares line.
    pub residual: f64,
    pub samples: usize,
    pub verdict: FitVerdict,
}

/// Least-squares line through `(t, log ‖u(t)‖/‖u₀‖)` on the nonzero prefix of the trace.
///
/// `M = exp(max_t(log(‖u(t)‖/‖u₀‖) - ωt))`, clamped at 1, makes the bound hold at every sample.
pub fn fit_exponential_bound(trace: &EvolutionTrace) -> Result<BoundFit> {
    let len = trace.norms.iter().take_while(|v| **v > 0.0 && v.is_finite()).count();
    if len < 10 {
        return Err(Error::Inconclusive(format!("exponential fit needs 10 nonzero samples, got {len}")));
    }
    let n0 = trace.norms[0];
    let t = &trace.times[..len];
    let y: Vec<f64> = trace.norms[..len].iter().map(|v| (v / n0).ln()).collect();
    let omega = crate::weights::least_squares_slope(t, &y);
    let tm = t.iter().sum::<f64>() / len as f64;
    let ym = y.iter().sum::<f64>() / len as f64;
    let b = ym - omega * tm;
    let residual = t.iter().zip(&y).map(|(ti, yi)| (yi - b - omega * ti).abs()).fold(0.0, f64::max);
    let log_m = t.iter().zip(&y).map(|(ti, yi)| yi - omega * ti).fold(0.0, f64::max);
    Ok(BoundFit {
        m: log_m.exp(),
        omega,
        residual,
        samples: len,
        verdict: if residual <= FIT_TOLERANCE { FitVerdict::Bounded } else { FitVerdict::Unbounded },
    })
}

/// Growth rate of one implicit Euler step on the mode with eigenvalue `λ`:
/// `-ln(1 + dt·λ)/dt`, which tends to `-λ` as `dt → 0`.
pub fn implicit_euler_rate(lambda: f64, dt: f64) -> f64 {
    if 1.0 + dt * lambda <= 0.0 {
        f64::INFINITY
    } else {
        -(dt * lambda).ln_1p() / dt
    }
}

/// Normalized product bump `Π_k (1 - ((x_k - m_k)/(L - |m_k|))²)₊` centered at the pole
/// centroid `m`, scaled to unit lumped norm.
pub fn default_initial_data(forms: &DiscreteForms, config: &PoleConfiguration, half_width: f64) -> Vec<f64> {
    let m = config.centroid();
    let mut u: Vec<f64> = (0..forms.pattern.n)
        .map(|d| {
            let x = forms.mesh.dof_coords(d);
            x.iter()
                .zip(&m)
                .map(|(xi, mi)| {
                    let s = (xi - mi) / (half_width - mi.abs());
                    (1.0 - s * s).max(0.0)
                })
                .product()
        })
        .collect();
    let ml = lumped_diagonal(forms);
    let nrm = u.iter().zip(&ml).map(|(v, w)| w * v * v).sum::<f64>().sqrt();
    if nrm > 0.0 {
        u.iter_mut().for_each(|v| *v /= nrm);
    }
    u
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupVerdict {
    ExistenceConsistent,
    NonexistenceConsistent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRun {
    pub mesh_level: usize,
    pub dofs: usize,
    pub breakdown: bool,
    pub fit: Option<BoundFit>,
    pub omega: Option<f64>,
    /// Absent after a step breakdown.
    pub positivity: Option<PositivityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub c: f64,
    pub c_o: f64,
    pub t_final: f64,
    pub dt: f64,
    pub levels: Vec<LevelRun>,
    pub verdict: BlowupVerdict,
    pub note: String,
    #[serde(skip)]
    pub traces: Vec<EvolutionTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupOptions {
    pub mesh: MeshParams,
    pub levels: usize,
    pub layer_step: usize,
    pub t_final: f64,
    pub dt: f64,
}

impl Default for BlowupOptions {
    fn default() -> Self {
        Self {
            mesh: MeshParams { ratio: 0.3, ..MeshParams::default() },
            levels: 3,
            layer_step: 6,
            t_final: 0.1,
            dt: 1e-4,
        }
    }
}

/// Classifies a sequence of per-level growth rates (`None` = step breakdown).
///
/// Nonexistence-consistent: breakdown first appearing past the coarsest level, or every
/// consecutive ω growing by at least 50% (of `max(|ω|, 1)`). Existence-consistent: no
/// breakdown and the last change at most 10% of the first one, or within 5% of
/// `max(|ω|, 1)`.
pub fn classify_growth(omegas: &[Option<f64>]) -> BlowupVerdict {
    if omegas.len() < 2 || omegas[0].is_none() {
        return BlowupVerdict::Inconclusive;
    }
    if omegas.iter().any(Option::is_none) {
        return BlowupVerdict::NonexistenceConsistent;
    }
    let w: Vec<f64> = omegas.iter().map(|o| o.unwrap()).collect();
    if w.windows(2).all(|p| p[1] - p[0] >= GROWTH_PER_LEVEL * p[0].abs().max(1.0)) {
        return BlowupVerdict::NonexistenceConsistent;
    }
    let first = (w[1] - w[0]).abs();
    let last = (w[w.len() - 1] - w[w.len() - 2]).abs();
    let scale = w[w.len() - 1].abs().max(1.0);
    if (w.len() > 2 && last <= 0.1 * first) || last <= 0.05 * scale {
        BlowupVerdict::ExistenceConsistent
    } else {
        BlowupVerdict::Inconclusive
    }
}

/// `evolve` + `fit_exponential_bound` on successively graded meshes from the default bump.
pub fn blowup_indicator<W: Weight + ?Sized>(weight: &W, c: f64, opts: &BlowupOptions) -> Result<BlowupReport> {
    if !(c >= 0.0) {
        return Err(Error::InvalidParameter(format!("c must be nonnegative, got {c}")));
    }
    let config = weight.config();
    let co = hardy_constant(config.dimension(), weight.k2())?;
    let k = CompactSet::default_for(config, opts.mesh.half_width)?;
    let mut levels = Vec::new();
    let mut traces = Vec::new();
    for lvl in 0..opts.levels {
        let forms = assemble(weight, c, &opts.mesh.at_level(lvl, opts.layer_step), lvl)?;
        let u0 = default_initial_data(&forms, config, opts.mesh.half_width);
        let trace = evolve(&forms, &u0, opts.t_final, opts.dt, &k)?;
        let fit = if trace.breakdown { None } else { Some(fit_exponential_bound(&trace)?) };
        let positivity = if trace.breakdown { None } else { Some(positivity_check(&forms, config, &trace, &u0, &k)?) };
        levels.push(LevelRun {
            mesh_level: lvl,
            dofs: forms.pattern.n,
            breakdown: trace.breakdown,
            omega: fit.as_ref().map(|f| f.omega),
            fit,
            positivity,
        });
        traces.push(trace);
    }
    let omegas: Vec<Option<f64>> = levels.iter().map(|l| l.omega).collect();
    Ok(BlowupReport {
        c,
        c_o: co,
        t_final: opts.t_final,
        dt: opts.dt,
        verdict: classify_growth(&omegas),
        levels,
        note: PROXY_NOTE.into(),
        traces,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivityVerdict {
    Positive,
    PositivityViolated,
    ZeroInitialData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityViolation {
    pub time: f64,
    pub location: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub k: CompactSet,
    /// `∫_K u₀ dμ` with the lumped mass.
    pub initial_mass_on_k: f64,
    pub times: Vec<f64>,
    /// `min_K u(t) / ∫_K u₀ dμ`; absent when `u₀` vanishes on `K`.
    pub ratios: Vec<Option<f64>>,
    pub min_on_k: Vec<f64>,
    pub violations: Vec<PositivityViolation>,
    pub verdict: PositivityVerdict,
}

/// Checks `min_K u(t) > 0` for every recorded `t > 0`.
pub fn positivity_check(
    forms: &DiscreteForms,
    config: &PoleConfiguration,
    trace: &EvolutionTrace,
    u0: &[f64],
    k: &CompactSet,
) -> Result<PositivityReport> {
    k.check_clear(config)?;
    if u0.len() != forms.pattern.n {
        return Err(Error::DimensionMismatch { expected: forms.pattern.n, got: u0.len() });
    }
    let ml = lumped_diagonal(forms);
    let mass_k: f64 = vecmath::stable_sum(
        &(0..u0.len()).filter(|&d| k.contains(&forms.mesh.dof_coords(d))).map(|d| ml[d] * u0[d]).collect::<Vec<_>>(),
    );
    let mut report = PositivityReport {
        k: k.clone(),
        initial_mass_on_k: mass_k,
        times: Vec::new(),
        ratios: Vec::new(),
        min_on_k: Vec::new(),
        violations: Vec::new(),
        verdict: PositivityVerdict::Positive,
    };
    if u0.iter().all(|v| *v == 0.0) {
        report.verdict = PositivityVerdict::ZeroInitialData;
        return Ok(report);
    }
    for i in 1..trace.times.len() {
        let m = trace.min_on_k[i];
        report.times.push(trace.times[i]);
        report.min_on_k.push(m);
        report.ratios.push((mass_k > 0.0).then(|| m / mass_k));
        if !(m > 0.0) {
            report.violations.push(PositivityViolation { time: trace.times[i], location: trace.argmin_on_k[i].clone(), value: m });
        }
    }
    if !report.violations.is_empty() {
        report.verdict = PositivityVerdict::PositivityViolated;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::WeightSpec;

    fn trace_from(times: Vec<f64>, norms: Vec<f64>) -> EvolutionTrace {
        let n = times.len();
        EvolutionTrace {
            times,
            norms,
            min_on_k: vec![0.0; n],
            argmin_on_k: vec![Vec::new(); n],
            global_min: vec![0.0; n],
            dt: 0.01,
            mesh_level: 0,
            dofs: 1,
            breakdown: false,
            breakdown_time: None,
        }
    }

    #[test]
    fn fit_exact_exponential() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let f = fit_exponential_bound(&trace_from(t.clone(), t.iter().map(|s| (2.0 * s).exp()).collect())).unwrap();
        assert!((f.omega - 2.0).abs() < 1e-6);
        assert!((f.m - 1.0).abs() < 1e-9);
        assert_eq!(f.verdict, FitVerdict::Bounded);
        let f = fit_exponential_bound(&trace_from(t.clone(), vec![3.0; 50])).unwrap();
        assert_eq!((f.m, f.omega), (1.0, 0.0));
    }

    #[test]
    fn fit_uses_nonzero_prefix() {
        let t: Vec<f64> = (0..30).map(|i| i as f64 * 0.01).collect();
        let mut norms: Vec<f64> = t.iter().map(|s| (-s).exp()).collect();
        norms[20..].iter_mut().for_each(|v| *v = 0.0);
        let f = fit_exponential_bound(&trace_from(t, norms)).unwrap();
        assert_eq!(f.samples, 20);
        assert!((f.omega + 1.0).abs() < 1e-9);
    }

    #[test]
    fn growth_classification() {
        use BlowupVerdict::*;
        assert_eq!(classify_growth(&[Some(-6.0), Some(-5.8), Some(-5.79)]), ExistenceConsistent);
        assert_eq!(classify_growth(&[Some(2.0), Some(10.0), Some(100.0)]), NonexistenceConsistent);
        assert_eq!(classify_growth(&[Some(2.0), Some(10.0), None]), NonexistenceConsistent);
        assert_eq!(classify_growth(&[None, None, None]), Inconclusive);
        assert_eq!(classify_growth(&[Some(1.0), Some(3.0), Some(2.0)]), Inconclusive);
    }

    #[test]
    fn zero_data_stays_zero() {
        let cfg = PoleConfiguration::new(vec![vec![0.0; 3]], 3, Some(1.0)).unwrap();
        let w = WeightSpec::lebesgue(cfg.clone());
        let forms = assemble(&w, 0.1, &MeshParams { layers: 2, base_cells: 6, ..Default::default() }, 0).unwrap();
        let k = CompactSet::default_for(&cfg, 1.0).unwrap();
        let u0 = vec![0.0; forms.pattern.n];
        let tr = evolve(&forms, &u0, 0.01, 1e-3, &k).unwrap();
        assert!(tr.norms.iter().all(|v| *v == 0.0));
        assert_eq!(tr.times.len(), 11);
        let p = positivity_check(&forms, &cfg, &tr, &u0, &k).unwrap();
        assert_eq!(p.verdict, PositivityVerdict::ZeroInitialData);
        assert!(evolve(&forms, &vec![-1.0; forms.pattern.n], 0.01, 1e-3, &k).is_err());
    }

    #[test]
    fn compact_set_must_avoid_poles() {
        let cfg = PoleConfiguration::new(vec![vec![0.0; 3]], 3, Some(1.0)).unwrap();
        let bad = CompactSet { lo: vec![-0.1; 3], hi: vec![0.1; 3] };
        assert!(bad.check_clear(&cfg).is_err());
        assert!(CompactSet::default_for(&cfg, 1.0).is_ok());
    }

    #[test]
    fn heat_decay_matches_closed_form() {
        let cfg = PoleConfiguration::new(vec![vec![0.0; 3]], 3, Some(1.0)).unwrap();
        let w = WeightSpec::lebesgue(cfg.clone());
        // Lumping lowers λ₁ by O(h²); 16 base cells keep that well inside the 2% budget.
        let forms = assemble(&w, 0.0, &MeshParams { base_cells: 16, ..Default::default() }, 0).unwrap();
        let ml = forms.lumped_mass();
        let eig = crate::spectrum::lambda1_with_mass(&forms, &ml, 1e-10, 200).unwrap();
        let u0: Vec<f64> = eig.eigenvector.iter().map(|v| v.abs()).collect();
        let k = CompactSet::default_for(&cfg, 1.0).unwrap();
        let tr = evolve(&forms, &u0, 0.1, 1e-3, &k).unwrap();
        let lam = 3.0 * (std::f64::consts::PI / 2.0).powi(2);
        for (t, n) in tr.times.iter().zip(&tr.norms) {
            let expect = (-lam * t).exp() * tr.norms[0];
            assert!((n / expect - 1.0).abs() < 0.02, "t = {t}: {n} vs {expect}");
        }
        println!("lumped λ₁ = {}", eig.lambda1);
        let p = positivity_check(&forms, &cfg, &tr, &u0, &k).unwrap();
        assert_eq!(p.verdict, PositivityVerdict::Positive);
        assert!(tr.global_min.iter().all(|v| *v >= -1e-12), "{:?}", tr.global_min.iter().cloned().fold(0.0, f64::min));
    }
}
