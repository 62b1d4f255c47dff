//! Test functions with analytic gradients: radial bumps, a Gaussian times a box cutoff,
//! the optimality witness and linear combinations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::vecmath;

pub trait TestFunction: Sync + Send {
    /// `(φ(x), ∇φ(x))`.
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>);
    fn name(&self) -> String;
}

/// `φ ≡ 0`.
#[derive(Debug, Clone)]
pub struct Zero {
    pub dim: usize,
}

impl TestFunction for Zero {
    fn eval(&self, _x: &[f64]) -> (f64, Vec<f64>) {
        (0.0, vec![0.0; self.dim])
    }
    fn name(&self) -> String {
        "zero".into()
    }
}

/// `(1 - s²)³` with `s = |x - center| / radius`, zero for `s ≥ 1`.
#[derive(Debug, Clone)]
pub struct RadialBump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
}

impl TestFunction for RadialBump {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d = vecmath::sub(x, &self.center);
        let s2 = vecmath::norm_sq(&d) / (self.radius * self.radius);
        if s2 >= 1.0 {
            return (0.0, vec![0.0; x.len()]);
        }
        let u = 1.0 - s2;
        // d/dx (1 - s²)³ = -6 (1 - s²)² x / R²
        let g = -6.0 * self.amplitude * u * u / (self.radius * self.radius);
        (self.amplitude * u * u * u, d.iter().map(|c| g * c).collect())
    }
    fn name(&self) -> String {
        format!("radial_bump(r={})", self.radius)
    }
}

/// A radial bump vanishing inside `B(center, inner)`: `ψ(s)` with
/// `s = (|x - center| - inner) / (outer - inner)` and `ψ(s) = (4 s (1 - s))³` on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct AnnularBump {
    pub center: Vec<f64>,
    pub inner: f64,
    pub outer: f64,
}

impl TestFunction for AnnularBump {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d = vecmath::sub(x, &self.center);
        let r = vecmath::norm(&d);
        let w = self.outer - self.inner;
        let s = (r - self.inner) / w;
        if s <= 0.0 || s >= 1.0 {
            return (0.0, vec![0.0; x.len()]);
        }
        let b = 4.0 * s * (1.0 - s);
        let db = 4.0 * (1.0 - 2.0 * s) / w;
        let g = 3.0 * b * b * db / r;
        (b * b * b, d.iter().map(|c| g * c).collect())
    }
    fn name(&self) -> String {
        format!("annular_bump({}..{})", self.inner, self.outer)
    }
}

/// `exp(-|x - center|²/σ²) · Π_k (1 - (x_k/L)²)²` on `[-L, L]^N`, zero outside.
#[derive(Debug, Clone)]
pub struct GaussianBump {
    pub center: Vec<f64>,
    pub sigma: f64,
    pub half_width: f64,
}

impl TestFunction for GaussianBump {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let l = self.half_width;
        if x.iter().any(|c| c.abs() >= l) {
            return (0.0, vec![0.0; x.len()]);
        }
        let d = vecmath::sub(x, &self.center);
        let s2 = self.sigma * self.sigma;
        let gauss = (-vecmath::norm_sq(&d) / s2).exp();
        let factors: Vec<f64> = x.iter().map(|c| (1.0 - (c / l).powi(2)).powi(2)).collect();
        let cutoff: f64 = factors.iter().product();
        let v = gauss * cutoff;
        let grad = (0..x.len())
            .map(|k| {
                let u = 1.0 - (x[k] / l).powi(2);
                // ∂_k log of the cutoff factor: 2·(-2x_k/L²)/u
                let dlog_cut = -4.0 * x[k] / (l * l * u);
                v * (-2.0 * d[k] / s2 + dlog_cut)
            })
            .collect();
        (v, grad)
    }
    fn name(&self) -> String {
        format!("gaussian_bump(sigma={})", self.sigma)
    }
}

/// Quintic smoothstep cutoff `θ(s)`: 1 for `s ≤ 1`, `p(2 - s)` with
/// `p(t) = 6t⁵ - 15t⁴ + 10t³` on `[1, 2]`, 0 beyond. Returns `(θ, θ')`.
pub fn cutoff_theta(s: f64) -> (f64, f64) {
    if s <= 1.0 {
        (1.0, 0.0)
    } else if s >= 2.0 {
        (0.0, 0.0)
    } else {
        let t = 2.0 - s;
        let p = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
        let dp = 30.0 * t * t * (1.0 - t) * (1.0 - t);
        (p, -dp)
    }
}

/// `φ_ε(x) = (ε + |x - a|)^η θ(|x - a|)`.
#[derive(Debug, Clone)]
pub struct Witness {
    pub center: Vec<f64>,
    pub eta: f64,
    pub epsilon: f64,
}

impl TestFunction for Witness {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d = vecmath::sub(x, &self.center);
        let r = vecmath::norm(&d);
        let (th, dth) = cutoff_theta(r);
        if th == 0.0 {
            return (0.0, vec![0.0; x.len()]);
        }
        let base = self.epsilon + r;
        let p = base.powf(self.eta);
        let v = p * th;
        if r == 0.0 {
            return (v, vec![0.0; x.len()]);
        }
        let dr = self.eta * p / base * th + p * dth;
        (v, d.iter().map(|c| dr * c / r).collect())
    }
    fn name(&self) -> String {
        format!("witness(eta={}, eps={})", self.eta, self.epsilon)
    }
}

/// `Σ_k c_k φ_k`.
pub struct LinearCombination {
    pub terms: Vec<(f64, Box<dyn TestFunction>)>,
}

impl TestFunction for LinearCombination {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut v = 0.0;
        let mut g = vec![0.0; x.len()];
        for (c, f) in &self.terms {
            let (fv, fg) = f.eval(x);
            v += c * fv;
            vecmath::axpy(*c, &fg, &mut g);
        }
        (v, g)
    }
    fn name(&self) -> String {
        let parts: Vec<String> = self.terms.iter().map(|(c, f)| format!("{c:.3}*{}", f.name())).collect();
        parts.join(" + ")
    }
}

/// `c · φ`.
pub struct Scaled<'a> {
    pub factor: f64,
    pub inner: &'a dyn TestFunction,
}

impl TestFunction for Scaled<'_> {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (v, g) = self.inner.eval(x);
        (self.factor * v, g.iter().map(|c| self.factor * c).collect())
    }
    fn name(&self) -> String {
        format!("{}*{}", self.factor, self.inner.name())
    }
}

/// The regression family used by the inequality checks: radial bumps of three widths at
/// every pole, a global Gaussian bump and random combinations of these.
pub fn regression_family(
    poles: &[Vec<f64>],
    r0: f64,
    half_width: f64,
    combinations: usize,
    seed: u64,
) -> Vec<Box<dyn TestFunction>> {
    let dim = poles[0].len();
    let centroid: Vec<f64> = (0..dim).map(|k| poles.iter().map(|p| p[k]).sum::<f64>() / poles.len() as f64).collect();
    let widths = [0.5 * r0, r0, 2.0 * r0];
    let mut fam: Vec<Box<dyn TestFunction>> = Vec::new();
    for p in poles {
        for &w in &widths {
            fam.push(Box::new(RadialBump { center: p.clone(), radius: w, amplitude: 1.0 }));
        }
    }
    let sigma = (0.5 * half_width).max(r0);
    fam.push(Box::new(GaussianBump { center: centroid.clone(), sigma, half_width }));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..combinations {
        let mut terms: Vec<(f64, Box<dyn TestFunction>)> = Vec::new();
        for p in poles {
            let w = widths[rng.gen_range(0..widths.len())];
            terms.push((rng.gen_range(-1.0..1.0), Box::new(RadialBump { center: p.clone(), radius: w, amplitude: 1.0 })));
        }
        terms.push((rng.gen_range(-1.0..1.0), Box::new(GaussianBump { center: centroid.clone(), sigma, half_width })));
        fam.push(Box::new(LinearCombination { terms }));
    }
    fam
}
