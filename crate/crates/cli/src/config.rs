//! Run configuration: a versioned JSON document where every field is optional.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use multihardy::geometry::K0Options;
use multihardy::hardy::Method;
use multihardy::quadrature::RuleParams;
use multihardy::sampling::AuditSampling;
use multihardy::spectrum::MeshParams;
use multihardy::{PoleConfiguration, WeightSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightConfig {
    pub gamma: f64,
    pub delta: f64,
    pub m: f64,
    /// `null` means "audit": each stage uses the smallest `k1` its hypothesis check accepts.
    pub k1: Option<f64>,
    pub k2: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self { gamma: 0.0, delta: 0.0, m: 2.0, k1: None, k2: 0.0 }
    }
}

/// `c` as one number or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CValues {
    One(f64),
    Many(Vec<f64>),
}

impl CValues {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            CValues::One(c) => vec![*c],
            CValues::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    pub panels_per_axis: usize,
    pub order: usize,
    pub r_min_ratio: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        let r = RuleParams::default();
        Self { panels_per_axis: r.panels_per_axis, order: r.order, r_min_ratio: r.r_min_ratio }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    pub box_count: usize,
    pub radial_levels: usize,
    pub directions: usize,
    pub h2prime_eps: Vec<f64>,
    /// Dyadic radii `min(1, r0)·2^-k`, `k = 0..=radius_levels`, for the critical exponent.
    pub radius_levels: usize,
    pub h3_tolerance: f64,
    pub density_p: f64,
    /// Radii `2^-k`, `k = 1..=density_levels`, for the density condition.
    pub density_levels: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        let s = AuditSampling::default();
        Self {
            box_count: s.box_count,
            radial_levels: s.radial_levels,
            directions: s.directions,
            h2prime_eps: vec![1.0, 0.1, 0.01, 1e-3],
            radius_levels: 60,
            h3_tolerance: 0.1,
            density_p: 2.0,
            density_levels: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    pub samples: usize,
    pub k0_c: Vec<f64>,
    pub initial_samples: usize,
    pub refinement_rounds: usize,
    pub starts: usize,
    pub samples_per_start: usize,
    pub shrink: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        let k = K0Options::default();
        Self {
            samples: 10_000,
            k0_c: vec![0.1, 0.25, 1.0],
            initial_samples: k.initial_samples,
            refinement_rounds: k.refinement_rounds,
            starts: k.starts,
            samples_per_start: k.samples_per_start,
            shrink: k.shrink,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyConfig {
    pub combinations: usize,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self { combinations: 3 }
    }
}

fn default_evolution_graded_pole() -> Option<usize> {
    Some(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    /// `null`: one more than the largest pole coordinate, rounded up.
    pub half_width: Option<f64>,
    pub base_cells: usize,
    pub ratio: f64,
    pub layers: usize,
    pub quad_order: usize,
    pub pole_subdivision: usize,
    /// `null` grades toward every pole. The sweep always grades toward its own pole.
    pub graded_pole: Option<usize>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        let m = MeshParams::default();
        Self {
            half_width: None,
            base_cells: m.base_cells,
            ratio: 0.3,
            layers: m.layers,
            quad_order: m.quad_order,
            pole_subdivision: m.pole_subdivision,
            graded_pole: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    pub pole_index: usize,
    pub levels: usize,
    pub layer_step: usize,
    pub threshold: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub eps_list: Vec<f64>,
    /// Stable when the last λ₁ change is below this fraction of the first.
    pub stability_fraction: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            pole_index: 0,
            levels: 3,
            layer_step: 6,
            threshold: -100.0,
            tol: 1e-8,
            max_iter: 200,
            eps_list: vec![1e-1, 1e-2, 1e-3, 1e-4],
            stability_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    pub t_final: f64,
    /// `null`: `10⁻³·t_final`.
    pub dt: Option<f64>,
    pub levels: usize,
    pub layer_step: usize,
    /// Overrides `mesh.graded_pole` for the heat runs; `null` grades toward every pole.
    #[serde(default = "default_evolution_graded_pole")]
    pub graded_pole: Option<usize>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self { t_final: 0.1, dt: None, levels: 3, layer_step: 4, graded_pole: default_evolution_graded_pole() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    pub dimension: usize,
    pub poles: Vec<Vec<f64>>,
    /// Required for a single pole.
    pub default_r0: Option<f64>,
    pub weight: WeightConfig,
    /// `null`: each subcommand picks fractions of `c_o`.
    pub c: Option<CValues>,
    pub method: Method,
    pub box_half_width: f64,
    pub quadrature: QuadratureConfig,
    pub audit: AuditConfig,
    pub partition: PartitionConfig,
    pub family: FamilyConfig,
    pub mesh: MeshConfig,
    pub spectral: SpectralConfig,
    pub evolution: EvolutionConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            dimension: 3,
            poles: vec![vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]],
            default_r0: None,
            weight: WeightConfig::default(),
            c: None,
            method: Method::ImsThm31,
            box_half_width: 3.0,
            quadrature: QuadratureConfig::default(),
            audit: AuditConfig::default(),
            partition: PartitionConfig::default(),
            family: FamilyConfig::default(),
            mesh: MeshConfig::default(),
            spectral: SpectralConfig::default(),
            evolution: EvolutionConfig::default(),
            seed: 7,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// A configuration or precondition problem; the run exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(ConfigError(msg.into()))
}

/// Parses `key=value` with a dotted key; the value is JSON when it parses as JSON and a
/// string otherwise.
fn apply_override(root: &mut Value, spec: &str) -> anyhow::Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| config_error(format!("override `{spec}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(config_error(format!("override key `{key}` has an empty segment")));
        }
        let obj = match node {
            Value::Object(o) => o,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().unwrap()
            }
            _ => return Err(config_error(format!("override `{key}`: `{}` is not an object", parts[..i].join(".")))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!()
}

impl RunConfig {
    /// Reads `path` (or starts from the defaults), applies `--set` overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let mut root = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_error(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str::<Value>(&text)
                    .map_err(|e| config_error(format!("{}: malformed JSON at line {}, column {}: {e}", p.display(), e.line(), e.column())))?
            }
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        Self::from_value(root)
    }

    pub fn from_value(root: Value) -> anyhow::Result<Self> {
        let cfg: RunConfig = serde_path_to_error::deserialize(root)
            .map_err(|e| config_error(format!("field `{}`: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.version != CONFIG_VERSION {
            bail!(ConfigError(format!("field `version`: unsupported version {} (expected {CONFIG_VERSION})", self.version)));
        }
        let positive = [
            ("box_half_width", self.box_half_width),
            ("evolution.t_final", self.evolution.t_final),
            ("spectral.tol", self.spectral.tol),
            ("mesh.ratio", self.mesh.ratio),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                bail!(ConfigError(format!("field `{name}`: must be positive, got {v}")));
            }
        }
        if let Some(dt) = self.evolution.dt {
            if !(dt > 0.0 && dt <= self.evolution.t_final) {
                bail!(ConfigError(format!("field `evolution.dt`: must lie in (0, t_final], got {dt}")));
            }
        }
        if self.spectral.eps_list.iter().any(|e| !(*e > 0.0)) {
            bail!(ConfigError("field `spectral.eps_list`: entries must be positive".into()));
        }
        if self.spectral.levels == 0 || self.evolution.levels == 0 {
            bail!(ConfigError("fields `spectral.levels` and `evolution.levels` must be at least 1".into()));
        }
        if let Some(c) = &self.c {
            if c.to_vec().iter().any(|c| !c.is_finite()) || c.to_vec().is_empty() {
                bail!(ConfigError("field `c`: must be a finite number or a nonempty list of them".into()));
            }
        }
        self.pole_configuration()?;
        self.weight_spec(0.0)?;
        Ok(())
    }

    pub fn pole_configuration(&self) -> anyhow::Result<PoleConfiguration> {
        PoleConfiguration::new(self.poles.clone(), self.dimension, self.default_r0)
            .map_err(|e| config_error(format!("field `poles`: {e}")))
    }

    /// The weight with `k1` from the config, or `fallback_k1` when it is audited.
    pub fn weight_spec(&self, fallback_k1: f64) -> anyhow::Result<WeightSpec> {
        let w = &self.weight;
        WeightSpec::new(w.gamma, w.delta, w.m, w.k1.unwrap_or(fallback_k1), w.k2, self.pole_configuration()?)
            .map_err(|e| config_error(format!("field `weight`: {e}")))
    }

    pub fn mesh_half_width(&self) -> f64 {
        self.mesh.half_width.unwrap_or_else(|| {
            let m = self.poles.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
            m.ceil() + 1.0
        })
    }

    pub fn mesh_params(&self) -> MeshParams {
        MeshParams {
            half_width: self.mesh_half_width(),
            base_cells: self.mesh.base_cells,
            ratio: self.mesh.ratio,
            layers: self.mesh.layers,
            quad_order: self.mesh.quad_order,
            pole_subdivision: self.mesh.pole_subdivision,
            graded_pole: self.mesh.graded_pole,
        }
    }

    pub fn rule_params(&self) -> RuleParams {
        RuleParams {
            half_width: self.box_half_width,
            panels_per_axis: self.quadrature.panels_per_axis,
            order: self.quadrature.order,
            r_min_ratio: self.quadrature.r_min_ratio,
        }
    }

    pub fn audit_sampling(&self) -> AuditSampling {
        AuditSampling {
            box_half_width: self.box_half_width,
            box_count: self.audit.box_count,
            radial_levels: self.audit.radial_levels,
            directions: self.audit.directions,
            seed: self.seed,
        }
    }

    pub fn k0_options(&self) -> K0Options {
        let p = &self.partition;
        K0Options {
            initial_samples: p.initial_samples,
            refinement_rounds: p.refinement_rounds,
            starts: p.starts,
            samples_per_start: p.samples_per_start,
            shrink: p.shrink,
            seed: self.seed,
        }
    }

    pub fn dt(&self) -> f64 {
        self.evolution.dt.unwrap_or(1e-3 * self.evolution.t_final)
    }

    pub fn write_json(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        crate::report::write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
    }
}
