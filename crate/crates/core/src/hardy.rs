//! Hardy constants, the multipolar potential, the quadratic form and the inequality
//! checks (vector-field and IMS forms).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PoleConfiguration;
use crate::quadrature::{Integral, QuadratureRule, WeightField};
use crate::testfn::TestFunction;
use crate::vecmath;

/// `V_n(x) = Σ_i |x - a_i|^{-2}`.
pub fn multipolar_potential(config: &PoleConfiguration, x: &[f64]) -> Result<f64> {
    let mut v = 0.0;
    for (i, a) in config.poles().iter().enumerate() {
        let r2 = vecmath::dist_sq(x, a);
        if r2 == 0.0 {
            return Err(Error::SingularPoint { pole: i });
        }
        v += 1.0 / r2;
    }
    Ok(v)
}

/// `Σ_{i≠j} |a_i - a_j|² / (|x - a_i|² |x - a_j|²)`.
pub fn cross_potential(config: &PoleConfiguration, x: &[f64]) -> f64 {
    let poles = config.poles();
    let r2: Vec<f64> = poles.iter().map(|a| vecmath::dist_sq(x, a)).collect();
    let mut s = 0.0;
    for i in 0..poles.len() {
        for j in 0..poles.len() {
            if i != j {
                s += vecmath::dist_sq(&poles[i], &poles[j]) / (r2[i] * r2[j]);
            }
        }
    }
    s
}

/// Residual of
/// `Σ_{i≠j} (x-a_i)·(x-a_j)/(|x-a_i|²|x-a_j|²) = (n-1) Σ_i |x-a_i|^{-2} - ½ Σ_{i≠j} |a_i-a_j|²/(|x-a_i|²|x-a_j|²)`.
pub fn cross_term_residual(config: &PoleConfiguration, x: &[f64]) -> Result<f64> {
    let n = config.len();
    if n < 2 {
        return Err(Error::NeedsTwoPoles);
    }
    let v = multipolar_potential(config, x)?;
    let diffs: Vec<Vec<f64>> = config.poles().iter().map(|a| vecmath::sub(x, a)).collect();
    let r2: Vec<f64> = diffs.iter().map(|d| vecmath::norm_sq(d)).collect();
    let mut left = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                left += vecmath::dot(&diffs[i], &diffs[j]) / (r2[i] * r2[j]);
            }
        }
    }
    let right = (n - 1) as f64 * v - 0.5 * cross_potential(config, x);
    Ok((left - right).abs())
}

/// `c_o(N + k2) = ((N + k2 - 2)/2)²`.
pub fn hardy_constant(dimension: usize, k2: f64) -> Result<f64> {
    if dimension < 3 {
        return Err(Error::DimensionBelowThree(dimension));
    }
    if !(k2 > 2.0 - dimension as f64) {
        return Err(Error::HardyShiftOutOfRange { k2, dimension });
    }
    let h = (dimension as f64 + k2 - 2.0) / 2.0;
    Ok(h * h)
}

/// `β_max = (N + k2 - 2)/(2n)`, the maximizer of `(N + k2 - 2)β - nβ²`.
pub fn beta_max(dimension: usize, k2: f64, n: usize) -> f64 {
    (dimension as f64 + k2 - 2.0) / (2.0 * n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldConstants {
    pub epsilon: f64,
    /// `K` with `β = β_-`.
    pub k: f64,
    /// `K` with `β = β_+`.
    pub k_plus: f64,
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub c_max: f64,
}

fn vector_field_k(n: usize, beta: f64, r0: f64, epsilon: f64, k1: f64) -> f64 {
    let nm1 = (n - 1) as f64;
    beta * beta / (r0 * r0) * nm1 * (nm1 + 1.0 / (2.0 * epsilon)) + k1
}

/// Constants of the vector-field inequality with remainder `K`:
/// `c_max = c_o/(1+ε/2)`, `β_± = (√c_o ± √(c_o - c(1+ε/2)))/(1+ε/2)` and
/// `K = β²/r0² (n-1)(n-1 + 1/(2ε)) + k1`.
pub fn vector_field_constants(
    n: usize,
    c: f64,
    r0: f64,
    epsilon: f64,
    k1: f64,
    dimension: usize,
    k2: f64,
) -> Result<VectorFieldConstants> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if n == 0 {
        return Err(Error::NoPoles);
    }
    let co = hardy_constant(dimension, k2)?;
    let s = 1.0 + epsilon / 2.0;
    let c_max = co / s;
    if !(c > 0.0) || c > c_max * (1.0 + 1e-12) {
        return Err(Error::CoefficientOutOfRange { c, max: c_max });
    }
    let root = (co - c * s).max(0.0).sqrt();
    let beta_plus = (co.sqrt() + root) / s;
    let beta_minus = (co.sqrt() - root) / s;
    Ok(VectorFieldConstants {
        epsilon,
        k: vector_field_k(n, beta_minus, r0, epsilon, k1),
        k_plus: vector_field_k(n, beta_plus, r0, epsilon, k1),
        beta_plus,
        beta_minus,
        c_max,
    })
}

/// The `ε` paired with a target `c < c_o`: `ε = c_o/c - 1`, half the largest admissible value.
pub fn default_epsilon(c: f64, c_o: f64) -> Result<f64> {
    if !(c > 0.0 && c < c_o) {
        return Err(Error::ConstantOutOfRange(format!("vector-field form needs 0 < c < c_o = {c_o}, got {c}")));
    }
    Ok(c_o / c - 1.0)
}

/// `(k0 + (n+1)c)/r0² + k1`.
pub fn ims_remainder(n: usize, c: f64, r0: f64, k0: f64, k1: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::NeedsTwoPoles);
    }
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("c must be positive, got {c}")));
    }
    if !(k0 >= 0.0 && k0 < std::f64::consts::PI * std::f64::consts::PI) {
        return Err(Error::K0OutOfRange(k0));
    }
    Ok((k0 + (n as f64 + 1.0) * c) / (r0 * r0) + k1)
}

/// `(∫|∇φ|²dμ, c∫V_nφ²dμ, ∫φ²dμ, Q)` with per-integral error estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    pub grad_energy: f64,
    pub potential_energy: f64,
    pub mass: f64,
    pub q: f64,
    pub grad_error: f64,
    pub potential_error: f64,
    pub mass_error: f64,
}

/// The four integrals `∫|∇φ|²`, `∫V_nφ²`, `∫Σ_{i≠j}|a_i-a_j|²φ²/(r_i²r_j²)` and `∫φ²` against `dμ`.
pub fn energies(phi: &dyn TestFunction, rule: &QuadratureRule, mu: &WeightField) -> Result<[Integral; 4]> {
    let config = &rule.config;
    rule.integrate_many(
        |x| {
            let (v, g) = phi.eval(x);
            if v == 0.0 && g.iter().all(|c| *c == 0.0) {
                return [0.0; 4];
            }
            let v2 = v * v;
            let pot: f64 = config.poles().iter().map(|a| 1.0 / vecmath::dist_sq(x, a)).sum();
            [vecmath::norm_sq(&g), pot * v2, cross_potential(config, x) * v2, v2]
        },
        mu,
    )
}

pub fn quadratic_form(phi: &dyn TestFunction, c: f64, rule: &QuadratureRule, mu: &WeightField) -> Result<QuadraticForm> {
    let [g, p, _, m] = energies(phi, rule, mu)?;
    Ok(QuadraticForm {
        grad_energy: g.value,
        potential_energy: c * p.value,
        mass: m.value,
        q: g.value - c * p.value,
        grad_error: g.error_estimate,
        potential_error: c.abs() * p.error_estimate,
        mass_error: m.error_estimate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    VectorFieldThm21,
    VectorFieldThm22,
    ImsThm31,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardyVerdict {
    Holds,
    ViolatedWithinError,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardyReport {
    pub method: Method,
    pub test_function: String,
    pub c: f64,
    pub c_o: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub quadrature_error: f64,
    pub verdict: HardyVerdict,
}

impl HardyReport {
    /// `margin ≥ -quadrature_error`.
    pub fn passes(&self) -> bool {
        self.verdict != HardyVerdict::Violated
    }
}

/// Per-check inputs beyond `φ` and `c`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CheckOptions {
    /// Required for the IMS form.
    pub k0: Option<f64>,
    /// Vector-field form with remainder: overrides the default `ε = c_o/c - 1`.
    pub epsilon: Option<f64>,
}

/// Remainder constant and the coefficient actually used on the left side.
pub fn remainder_for(
    method: Method,
    config: &PoleConfiguration,
    k1: f64,
    k2: f64,
    c: f64,
    opts: &CheckOptions,
) -> Result<(f64, f64)> {
    let dim = config.dimension();
    let n = config.len();
    let co = hardy_constant(dim, k2)?;
    match method {
        Method::VectorFieldThm21 => Ok((co / n as f64, k1)),
        Method::VectorFieldThm22 => {
            let eps = match opts.epsilon {
                Some(e) => e,
                None => default_epsilon(c, co)?,
            };
            if !(c > 0.0 && c < co) {
                return Err(Error::ConstantOutOfRange(format!("vector-field form needs 0 < c < c_o = {co}, got {c}")));
            }
            let vf = vector_field_constants(n, c, config.r0(), eps, k1, dim, k2)
                .map_err(|e| Error::ConstantOutOfRange(e.to_string()))?;
            Ok((c, vf.k))
        }
        Method::ImsThm31 => {
            if !(c > 0.0 && c <= co * (1.0 + 1e-12)) {
                return Err(Error::ConstantOutOfRange(format!("IMS form needs 0 < c ≤ c_o = {co}, got {c}")));
            }
            let k0 = opts.k0.ok_or_else(|| Error::ConstantOutOfRange("IMS form needs a computed k0".into()))?;
            Ok((c, ims_remainder(n, c, config.r0(), k0, k1)?))
        }
    }
}

/// Evaluates `lhs ≤ rhs` for one test function with a given left coefficient and
/// remainder, without admissibility checks.
pub fn evaluate_inequality(
    phi: &dyn TestFunction,
    method: Method,
    c: f64,
    k: f64,
    c_o: f64,
    beta_cross: f64,
    rule: &QuadratureRule,
    mu: &WeightField,
) -> Result<HardyReport> {
    let [g, p, x, m] = energies(phi, rule, mu)?;
    let cross = if method == Method::VectorFieldThm21 { 0.5 * beta_cross * beta_cross } else { 0.0 };
    let lhs = c * p.value + cross * x.value;
    let rhs = g.value + k * m.value;
    let err = c.abs() * p.error_estimate + cross * x.error_estimate + g.error_estimate + k.abs() * m.error_estimate;
    let margin = rhs - lhs;
    let verdict = if margin >= 0.0 {
        HardyVerdict::Holds
    } else if margin >= -err {
        HardyVerdict::ViolatedWithinError
    } else {
        HardyVerdict::Violated
    };
    Ok(HardyReport { method, test_function: phi.name(), c, c_o, k, lhs, rhs, margin, quadrature_error: err, verdict })
}

/// Checks one inequality form for `φ`. `k1`, `k2` are the weight's hypothesis constants.
#[allow(clippy::too_many_arguments)]
pub fn check_inequality(
    phi: &dyn TestFunction,
    k1: f64,
    k2: f64,
    c: f64,
    method: Method,
    rule: &QuadratureRule,
    mu: &WeightField,
    opts: &CheckOptions,
) -> Result<HardyReport> {
    let config = &rule.config;
    let (coef, k) = remainder_for(method, config, k1, k2, c, opts)?;
    let co = hardy_constant(config.dimension(), k2)?;
    let beta = beta_max(config.dimension(), k2, config.len());
    evaluate_inequality(phi, method, coef, k, co, beta, rule, mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pair() -> PoleConfiguration {
        PoleConfiguration::new(vec![vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]], 3, None).unwrap()
    }

    #[test]
    fn potential_examples() {
        assert_eq!(multipolar_potential(&pair(), &[0.0; 3]).unwrap(), 2.0);
        let one = PoleConfiguration::new(vec![vec![0.0; 3]], 3, Some(1.0)).unwrap();
        assert_eq!(multipolar_potential(&one, &[2.0, 0.0, 0.0]).unwrap(), 0.25);
        let three =
            PoleConfiguration::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, -2.0, 0.0]], 3, None).unwrap();
        assert_abs_diff_eq!(multipolar_potential(&three, &[0.0; 3]).unwrap(), 1.5, epsilon = 1e-15);
        assert_eq!(multipolar_potential(&pair(), &[1.0, 0.0, 0.0]), Err(Error::SingularPoint { pole: 0 }));
    }

    #[test]
    fn cross_term_hand_case() {
        assert!(cross_term_residual(&pair(), &[0.0, 1.0, 0.0]).unwrap() < 1e-15);
        let one = PoleConfiguration::new(vec![vec![0.0; 3]], 3, Some(1.0)).unwrap();
        assert_eq!(cross_term_residual(&one, &[1.0, 0.0, 0.0]), Err(Error::NeedsTwoPoles));
    }

    #[test]
    fn constants_examples() {
        assert_eq!(hardy_constant(3, 0.0).unwrap(), 0.25);
        assert_eq!(hardy_constant(4, 0.0).unwrap(), 1.0);
        assert_eq!(hardy_constant(3, 1.0).unwrap(), 1.0);
        assert!(hardy_constant(3, -1.0).is_err());
        let vf = vector_field_constants(1, 0.1, 1.0, 0.5, 0.7, 3, 0.0).unwrap();
        assert_eq!(vf.k, 0.7);
        let vf = vector_field_constants(2, 0.5, 1.0, 1.0, 0.0, 4, 0.0).unwrap();
        assert_abs_diff_eq!(vf.beta_minus, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(vf.k, 1.0 / 6.0, epsilon = 1e-15);
        let eps = 0.4;
        let vf = vector_field_constants(2, 0.25 / 1.2, 1.0, eps, 0.0, 3, 0.0).unwrap();
        assert_abs_diff_eq!(vf.beta_plus, vf.beta_minus, epsilon = 1e-7);
        assert_abs_diff_eq!(vf.beta_plus, 0.5 / 1.2, epsilon = 1e-7);
        assert!(matches!(
            vector_field_constants(2, 0.3, 1.0, 1.0, 0.0, 3, 0.0),
            Err(Error::CoefficientOutOfRange { .. })
        ));
    }

    #[test]
    fn ims_examples() {
        assert_abs_diff_eq!(ims_remainder(2, 0.25, 1.0, 0.0, 0.0).unwrap(), 0.75, epsilon = 1e-15);
        let pi2 = std::f64::consts::PI.powi(2);
        assert_abs_diff_eq!(ims_remainder(3, 1.0, 2.0, pi2 / 2.0, 1.0).unwrap(), 3.2337, epsilon = 1e-4);
        assert_eq!(ims_remainder(2, 0.25, 1.0, pi2, 0.0), Err(Error::K0OutOfRange(pi2)));
    }
}
