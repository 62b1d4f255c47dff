//! The verification stages behind each subcommand.

use std::f64::consts::PI;
use std::path::PathBuf;

use anyhow::Context as _;
use multihardy::evolution::{self, BlowupOptions, BlowupVerdict, PositivityVerdict};
use multihardy::geometry::{compute_k0, verify_partition};
use multihardy::hardy::{self, beta_max, hardy_constant, CheckOptions, Method};
use multihardy::quadrature::build_rule;
use multihardy::sampling::halton_box;
use multihardy::spectrum::{self, MeshParams, OptimalityVerdict, SpectrumResult, SweepOptions};
use multihardy::testfn::regression_family;
use multihardy::weights::{self, default_radii, Verdict};
use multihardy::{PartitionOfUnity, PoleConfiguration, WeightSpec};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ConfigError, RunConfig};
use crate::report::{csv_bytes, write_atomic, Report, Status};

/// Partition residuals (sum of squares, properties a and d) must stay below this.
pub const PARTITION_TOLERANCE: f64 = 1e-10;

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub out_dir: PathBuf,
    pub quiet: bool,
    pub report: Report,
}

impl Context<'_> {
    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("[multihardy] {}", msg.as_ref());
        }
    }

    fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> anyhow::Result<()> {
        let path = self.out_dir.join(name);
        write_atomic(&path, &csv_bytes(rows)?).with_context(|| format!("writing {}", path.display()))?;
        self.report.files.push(name.to_string());
        Ok(())
    }

    fn section(&mut self, name: &str, value: Value) {
        self.report.sections.insert(name.to_string(), value);
    }

    fn config(&self) -> anyhow::Result<PoleConfiguration> {
        self.cfg.pole_configuration()
    }

    /// Weight with `k1 = 0` standing in for an audited value; only the hypothesis
    /// checks and inequality remainders read `k1`.
    fn weight(&self) -> anyhow::Result<WeightSpec> {
        let w = self.cfg.weight_spec(0.0)?;
        w.check_admissible().map_err(|e| ConfigError(format!("field `weight`: {e}")))?;
        Ok(w)
    }

    fn c_o(&self) -> anyhow::Result<f64> {
        Ok(hardy_constant(self.cfg.dimension, self.cfg.weight.k2)?)
    }

    /// `c` from the config, or `defaults` as fractions of `c_o`.
    fn c_values(&self, defaults: &[f64]) -> anyhow::Result<Vec<f64>> {
        let co = self.c_o()?;
        Ok(match &self.cfg.c {
            Some(c) => c.to_vec(),
            None => defaults.iter().map(|f| f * co).collect(),
        })
    }
}

fn from_verdict(v: Verdict) -> Status {
    match v {
        Verdict::Satisfied => Status::Pass,
        Verdict::Violated => Status::Fail,
        Verdict::Inconclusive => Status::Inconclusive,
    }
}

fn drift_alpha(w: &WeightSpec) -> f64 {
    -(w.poles.dimension() as f64 + w.k2 - 2.0) / 2.0
}

fn ball_samples(cx: &Context, config: &PoleConfiguration) -> Vec<Vec<Vec<f64>>> {
    let s = cx.cfg.audit_sampling();
    (0..config.len()).map(|i| s.generate_in_ball(config, i)).collect()
}

/// `k1` from the config, or the smallest value the H2 audit accepts at `beta`.
fn k1_for_h2(cx: &Context, w: &WeightSpec, beta: f64, samples: &[Vec<f64>]) -> anyhow::Result<f64> {
    Ok(match cx.cfg.weight.k1 {
        Some(k) => k,
        None => weights::required_k1_h2(w, beta, samples)?.max(0.0),
    })
}

fn k1_for_h2prime(cx: &Context, w: &WeightSpec, balls: &[Vec<Vec<f64>>]) -> anyhow::Result<f64> {
    Ok(match cx.cfg.weight.k1 {
        Some(k) => k,
        None => weights::required_k1_h2prime(w, drift_alpha(w), &cx.cfg.audit.h2prime_eps, balls)?.max(0.0),
    })
}

fn k1_source(cx: &Context) -> &'static str {
    if cx.cfg.weight.k1.is_some() {
        "config"
    } else {
        "audited"
    }
}

pub fn weight_check(cx: &mut Context) -> anyhow::Result<()> {
    const S: &str = "weight_check";
    cx.log("weight hypotheses");
    let config = cx.config()?;
    let w = cx.weight()?;
    let samples = cx.cfg.audit_sampling().generate(&config);
    let balls = ball_samples(cx, &config);
    let beta = beta_max(config.dimension(), w.k2, config.len());
    let alpha = drift_alpha(&w);

    let h1 = weights::check_h1(&w, &samples)?;
    let k1_h2 = k1_for_h2(cx, &w, beta, &samples)?;
    let h2 = weights::check_h2(&w.with_k1(k1_h2), beta, &samples)?;
    let k1_h2p = k1_for_h2prime(cx, &w, &balls)?;
    let h2p = weights::check_h2prime(&w.with_k1(k1_h2p), alpha, &cx.cfg.audit.h2prime_eps, &balls)?;
    cx.report.verdict(S, "H1", from_verdict(h1.verdict), format!("min slack {:.3e}", h1.min_slack));
    cx.report.verdict(S, "H2", from_verdict(h2.verdict), format!("k1 {k1_h2:.4e} ({}), min slack {:.3e}", k1_source(cx), h2.min_slack));
    cx.report.verdict(S, "H2prime", from_verdict(h2p.verdict), format!("k1 {k1_h2p:.4e} ({}), min slack {:.3e}", k1_source(cx), h2p.min_slack));

    let radii = default_radii(&config, cx.cfg.audit.radius_levels);
    let deltas: Vec<f64> = (1..=cx.cfg.audit.density_levels).map(|k| 0.5f64.powi(k as i32)).collect();
    let p = cx.cfg.audit.density_p;
    let mut h3 = Vec::new();
    let mut density = Vec::new();
    for i in 0..config.len() {
        let r = weights::check_h3(&w, i, &radii, cx.cfg.audit.h3_tolerance)?;
        cx.report.verdict(S, format!("H3 pole {i}"), from_verdict(r.verdict), format!("critical exponent {:?} vs N + k2 = {}", r.estimate, config.dimension() as f64 + w.k2));
        h3.push(r);
        let d = weights::check_density_condition(&w, p, i, &deltas)?;
        cx.report.verdict(S, format!("density pole {i}"), from_verdict(d.verdict), format!("p = {p}, fitted power {:?}", d.estimate));
        density.push(d);
    }
    let case_split = weights::section4_constants(&w, 0.5 * config.r0(), alpha).ok();
    cx.section(
        S,
        json!({
            "k1_source": k1_source(cx),
            "beta": beta,
            "alpha": alpha,
            "k1_h2": k1_h2,
            "k1_h2prime": k1_h2p,
            "h1": h1,
            "h2": h2,
            "h2prime": h2p,
            "h3": h3,
            "density": density,
            "case_split_constants": case_split,
        }),
    );
    Ok(())
}

pub fn partition_check(cx: &mut Context) -> anyhow::Result<()> {
    const S: &str = "partition_check";
    cx.log("partition of unity and k0");
    let config = cx.config()?;
    let part = PartitionOfUnity::new(config.clone());
    let half = vec![cx.cfg.box_half_width; config.dimension()];
    let samples = halton_box(&config.centroid(), &half, cx.cfg.partition.samples, cx.cfg.seed);
    let rep = verify_partition(&part, &samples);
    let worst = rep.sum_of_squares.max(rep.property_a).max(rep.property_d);
    let ok = worst <= PARTITION_TOLERANCE && rep.support_overlaps == 0;
    cx.report.verdict(
        S,
        "partition identities",
        if ok { Status::Pass } else { Status::Fail },
        format!("max residual {worst:.2e} (tolerance {PARTITION_TOLERANCE:.0e}), {} support overlaps", rep.support_overlaps),
    );
    let mut k0 = Vec::new();
    if config.len() >= 2 {
        for &c in &cx.cfg.partition.k0_c {
            let r = compute_k0(&part, c, &cx.cfg.k0_options())?;
            let status = match (r.below_pi_squared && r.k0 >= 0.0, r.converged) {
                (false, _) => Status::Fail,
                (true, false) => Status::Inconclusive,
                (true, true) => Status::Pass,
            };
            cx.report.verdict(S, format!("k0 at c = {c}"), status, format!("k0 {:.6} (pi^2 - k0 = {:.2e}), last round gain {:.1e}", r.k0, PI * PI - r.k0, r.last_round_gain));
            k0.push(r);
        }
    }
    cx.section(S, json!({ "tolerance": PARTITION_TOLERANCE, "partition": rep, "k0": k0 }));
    Ok(())
}

pub fn constants(cx: &mut Context) -> anyhow::Result<()> {
    const S: &str = "constants";
    cx.log("closed-form constants");
    let config = cx.config()?;
    let (dim, k2, n) = (config.dimension(), cx.cfg.weight.k2, config.len());
    let co = hardy_constant(dim, k2).map_err(|e| ConfigError(format!("field `weight.k2`: {e}")))?;
    let beta = beta_max(dim, k2, n);
    let mut vf = Vec::new();
    for c in cx.c_values(&[0.5, 0.9])? {
        if c > 0.0 && c < co {
            let eps = hardy::default_epsilon(c, co)?;
            vf.push(json!({ "c": c, "constants": hardy::vector_field_constants(n, c, config.r0(), eps, 0.0, dim, k2)? }));
        }
    }
    cx.report.verdict(S, "closed forms", Status::Pass, format!("c_o = {co}, beta_max = {beta}"));
    cx.section(
        S,
        json!({
            "c_o": co,
            "beta_max": beta,
            "two_term_remainder": co / n as f64,
            "tolerance": 0.0,
            "vector_field": vf,
        }),
    );
    Ok(())
}

/// Default `c` per method as fractions of `c_o`.
pub fn default_fractions(method: Method, n: usize) -> Vec<f64> {
    match method {
        Method::ImsThm31 => vec![1.0],
        Method::VectorFieldThm21 => vec![1.0 / n as f64],
        Method::VectorFieldThm22 => vec![0.5, 0.9],
    }
}

pub fn verify_hardy(cx: &mut Context, runs: &[(Method, Vec<f64>)]) -> anyhow::Result<()> {
    const S: &str = "verify_hardy";
    let config = cx.config()?;
    let w = cx.weight()?;
    let co = cx.c_o()?;
    // Surface range errors before building anything expensive.
    for (method, cs) in runs {
        for &c in cs {
            let k0 = (*method == Method::ImsThm31).then_some(0.0);
            hardy::remainder_for(*method, &config, 0.0, w.k2, c, &CheckOptions { k0, epsilon: None })
                .map_err(|e| ConfigError(format!("{e} (method {method:?})")))?;
        }
    }
    cx.log("inequality checks on the regression family");
    let rule = build_rule(&config, &cx.cfg.rule_params())?;
    let mu = rule.weight_field(&w)?;
    let family = regression_family(config.poles(), config.r0(), cx.cfg.box_half_width, cx.cfg.family.combinations, cx.cfg.seed);
    let samples = cx.cfg.audit_sampling().generate(&config);
    let balls = ball_samples(cx, &config);
    let part = PartitionOfUnity::new(config.clone());
    let mut out = Vec::new();
    for (method, cs) in runs {
        for &c in cs {
            let (k1, opts, k0) = match method {
                Method::ImsThm31 => {
                    let k0 = compute_k0(&part, c, &cx.cfg.k0_options())?;
                    let opts = CheckOptions { k0: Some(k0.k0), epsilon: None };
                    (k1_for_h2prime(cx, &w, &balls)?, opts, Some(k0))
                }
                Method::VectorFieldThm21 => {
                    (k1_for_h2(cx, &w, beta_max(config.dimension(), w.k2, config.len()), &samples)?, CheckOptions::default(), None)
                }
                Method::VectorFieldThm22 => {
                    let eps = hardy::default_epsilon(c, co)?;
                    let vf = hardy::vector_field_constants(config.len(), c, config.r0(), eps, 0.0, config.dimension(), w.k2)?;
                    (k1_for_h2(cx, &w, vf.beta_minus, &samples)?, CheckOptions::default(), None)
                }
            };
            let reports: Vec<_> = family
                .iter()
                .map(|phi| hardy::check_inequality(phi.as_ref(), k1, w.k2, c, *method, &rule, &mu, &opts))
                .collect::<Result<_, _>>()?;
            let held = reports.iter().filter(|r| r.passes()).count();
            let min_margin = reports.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
            cx.report.verdict(
                S,
                format!("{method:?} at c = {c}"),
                if held == reports.len() { Status::Pass } else { Status::Fail },
                format!("{held}/{} within quadrature error, min margin {min_margin:.3e}, k1 {k1:.4e} ({})", reports.len(), k1_source(cx)),
            );
            out.push(json!({ "method": method, "c": c, "k1": k1, "k1_source": k1_source(cx), "k0": k0, "reports": reports }));
        }
    }
    cx.section(S, json!({ "c_o": co, "runs": out }));
    Ok(())
}

fn sweep_options(cfg: &RunConfig) -> SweepOptions {
    let s = &cfg.spectral;
    SweepOptions {
        pole_index: s.pole_index,
        mesh: MeshParams { graded_pole: Some(s.pole_index), ..cfg.mesh_params() },
        levels: s.levels,
        layer_step: s.layer_step,
        threshold: s.threshold,
        tol: s.tol,
        max_iter: s.max_iter,
    }
}

#[derive(Serialize)]
struct LevelRow {
    level: usize,
    dofs: usize,
    lambda1: f64,
    residual: f64,
    lower_bound: f64,
    converged: bool,
}

fn level_rows(levels: &[SpectrumResult]) -> Vec<LevelRow> {
    levels
        .iter()
        .map(|s| LevelRow {
            level: s.mesh_level,
            dofs: s.dofs,
            lambda1: s.lambda1,
            residual: s.residual,
            lower_bound: s.lower_bound,
            converged: s.converged,
        })
        .collect()
}

/// Subcritical: the last change must drop below `fraction` of the first. Supercritical:
/// strictly decreasing and past `threshold`.
pub fn judge_levels(lam: &[f64], converged: bool, supercritical: bool, fraction: f64, threshold: f64) -> (Status, String) {
    if !converged {
        return (Status::Inconclusive, "eigensolver did not converge on every level".into());
    }
    if supercritical {
        let dec = lam.windows(2).all(|p| p[1] < p[0]);
        let crosses = lam.last().is_some_and(|&l| l < threshold);
        let s = if dec && crosses { Status::Pass } else { Status::Fail };
        return (s, format!("lambda1 {lam:.4?}, decreasing {dec}, below {threshold} {crosses}"));
    }
    if lam.len() < 3 {
        return (Status::Pass, format!("lambda1 {lam:.6?}; fewer than 3 levels, stability not assessed"));
    }
    let first = (lam[1] - lam[0]).abs();
    let last = (lam[lam.len() - 1] - lam[lam.len() - 2]).abs();
    let stable = last < fraction * first || last <= 1e-12 * lam[lam.len() - 1].abs().max(1.0);
    (if stable { Status::Pass } else { Status::Fail }, format!("lambda1 {lam:.6?}, last change {last:.2e} vs first {first:.2e}"))
}

pub fn lambda1(cx: &mut Context, cs: &[f64]) -> anyhow::Result<()> {
    const S: &str = "lambda1";
    let w = cx.weight()?;
    let co = cx.c_o()?;
    // Grading toward one pole only refines the others anisotropically and stalls convergence.
    let opts = SweepOptions { mesh: cx.cfg.mesh_params(), ..sweep_options(cx.cfg) };
    let mut out = Vec::new();
    for (i, &c) in cs.iter().enumerate() {
        cx.log(format!("lambda1 refinement at c = {c}"));
        let levels = spectrum::lambda1_levels(&w, c, &opts)?;
        let lam: Vec<f64> = levels.iter().map(|s| s.lambda1).collect();
        let (status, detail) = judge_levels(&lam, levels.iter().all(|s| s.converged), c > co, cx.cfg.spectral.stability_fraction, opts.threshold);
        cx.report.verdict(S, format!("refinement at c = {c}"), status, detail);
        cx.csv(&format!("lambda1_c{i}.csv"), &level_rows(&levels))?;
        out.push(json!({ "c": c, "tolerance": opts.tol, "levels": levels }));
    }
    cx.section(S, json!({ "c_o": co, "runs": out }));
    Ok(())
}

#[derive(Serialize)]
struct WitnessRow {
    epsilon: f64,
    quotient: f64,
}

pub fn optimality_sweep(cx: &mut Context, cs: &[f64]) -> anyhow::Result<()> {
    const S: &str = "optimality_sweep";
    let w = cx.weight()?;
    let co = cx.c_o()?;
    let opts = sweep_options(cx.cfg);
    let mut out = Vec::new();
    for (i, &c) in cs.iter().enumerate() {
        cx.log(format!("optimality sweep at c = {c}"));
        let sweep = spectrum::optimality_sweep(&w, c, &cx.cfg.spectral.eps_list, &opts).map_err(|e| match e {
            multihardy::Error::SweepRequiresSupercritical { .. } => anyhow::anyhow!(ConfigError(e.to_string())),
            e => e.into(),
        })?;
        let status = match sweep.verdict {
            OptimalityVerdict::Confirmed => Status::Pass,
            // The λ₁ half diverges but the witness stays above the threshold.
            OptimalityVerdict::NotConfirmed if sweep.lambda_crosses && sweep.lambda_decreasing && sweep.witness_decreasing => Status::Inconclusive,
            OptimalityVerdict::NotConfirmed => Status::Fail,
        };
        let lam: Vec<f64> = sweep.levels.iter().map(|s| s.lambda1).collect();
        cx.report.verdict(
            S,
            format!("divergence at c = {c}"),
            status,
            format!("witness {:.4?} (crosses {}), lambda1 {lam:.4?} (crosses {})", sweep.quotients, sweep.witness_crosses, sweep.lambda_crosses),
        );
        let rows: Vec<WitnessRow> = sweep.eps_list.iter().zip(&sweep.quotients).map(|(&epsilon, &quotient)| WitnessRow { epsilon, quotient }).collect();
        cx.csv(&format!("witness_c{i}.csv"), &rows)?;
        cx.csv(&format!("sweep_lambda1_c{i}.csv"), &level_rows(&sweep.levels))?;
        out.push(serde_json::to_value(&sweep)?);
    }
    cx.section(S, json!({ "c_o": co, "runs": out }));
    Ok(())
}

#[derive(Serialize)]
struct TraceRow {
    t: f64,
    norm: f64,
    #[serde(rename = "min_on_K")]
    min_on_k: f64,
}

pub fn evolve(cx: &mut Context, cs: &[f64]) -> anyhow::Result<()> {
    const S: &str = "evolve";
    let w = cx.weight()?;
    let co = cx.c_o()?;
    let opts = BlowupOptions {
        mesh: MeshParams { graded_pole: cx.cfg.evolution.graded_pole, ..cx.cfg.mesh_params() },
        levels: cx.cfg.evolution.levels,
        layer_step: cx.cfg.evolution.layer_step,
        t_final: cx.cfg.evolution.t_final,
        dt: cx.cfg.dt(),
    };
    let mut out = Vec::new();
    for (i, &c) in cs.iter().enumerate() {
        cx.log(format!("evolution at c = {c}"));
        let rep = evolution::blowup_indicator(&w, c, &opts).map_err(|e| match e {
            multihardy::Error::InvalidParameter(_) => anyhow::anyhow!(ConfigError(e.to_string())),
            e => e.into(),
        })?;
        let expected = if c <= co { BlowupVerdict::ExistenceConsistent } else { BlowupVerdict::NonexistenceConsistent };
        let status = match rep.verdict {
            BlowupVerdict::Inconclusive => Status::Inconclusive,
            v if v == expected => Status::Pass,
            _ => Status::Fail,
        };
        let omegas: Vec<String> = rep.levels.iter().map(|l| l.omega.map_or("breakdown".into(), |o| format!("{o:.4}"))).collect();
        cx.report.verdict(S, format!("dichotomy at c = {c}"), status, format!("omega per level {omegas:?}, {:?} (expected {expected:?})", rep.verdict));
        if c <= co {
            for l in &rep.levels {
                if let Some(p) = &l.positivity {
                    let s = if p.verdict == PositivityVerdict::PositivityViolated { Status::Fail } else { Status::Pass };
                    cx.report.verdict(S, format!("positivity at c = {c}, level {}", l.mesh_level), s, format!("{:?}, {} violations", p.verdict, p.violations.len()));
                }
            }
        }
        for tr in &rep.traces {
            let rows: Vec<TraceRow> = (0..tr.times.len())
                .map(|k| TraceRow { t: tr.times[k], norm: tr.norms[k], min_on_k: tr.min_on_k[k] })
                .collect();
            cx.csv(&format!("trace_c{i}_level{}.csv", tr.mesh_level), &rows)?;
        }
        out.push(serde_json::to_value(&rep)?);
    }
    cx.section(S, json!({ "c_o": co, "dt": opts.dt, "runs": out }));
    Ok(())
}

/// Every stage in pipeline order, with the fixed fractions of `c_o` the audit uses.
pub fn full_audit(cx: &mut Context) -> anyhow::Result<()> {
    let co = cx.c_o()?;
    let n = cx.config()?.len();
    weight_check(cx)?;
    partition_check(cx)?;
    constants(cx)?;
    let runs: Vec<(Method, Vec<f64>)> = [Method::VectorFieldThm21, Method::VectorFieldThm22, Method::ImsThm31]
        .into_iter()
        .map(|m| (m, default_fractions(m, n).iter().map(|f| f * co).collect()))
        .collect();
    verify_hardy(cx, &runs)?;
    lambda1(cx, &[0.8 * co])?;
    optimality_sweep(cx, &[1.2 * co])?;
    evolve(cx, &[0.5 * co, 2.0 * co])
}

pub fn c_values(cx: &Context, defaults: &[f64]) -> anyhow::Result<Vec<f64>> {
    cx.c_values(defaults)
}
