mod common;

use std::f64::consts::PI;

use common::{pair3, radial_witness_quotient, simpson, single};
use multihardy::geometry::{compute_k0, K0Options};
use multihardy::hardy::{
    beta_max, check_inequality, cross_term_residual, evaluate_inequality, hardy_constant, ims_remainder, quadratic_form,
    vector_field_constants, CheckOptions, HardyVerdict, Method,
};
use multihardy::quadrature::{build_rule, RuleParams};
use multihardy::spectrum::{choose_eta, witness_quotient, witness_rule, WitnessSpec};
use multihardy::testfn::{AnnularBump, GaussianBump, Scaled, Zero};
use multihardy::{PartitionOfUnity, PoleConfiguration, WeightSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn cross_term_identity_on_random_configurations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for trial in 0..100_000 {
        let dim = 3 + trial % 3;
        let n = 2 + (trial / 3) % 3;
        let poles: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let Ok(cfg) = PoleConfiguration::new(poles, dim, None) else { continue };
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        if cfg.pole_at(&x).is_some() {
            continue;
        }
        // Relative to the size of the terms involved.
        let v: f64 = cfg.distances(&x).iter().map(|d| 1.0 / (d * d)).sum();
        worst = worst.max(cross_term_residual(&cfg, &x).unwrap() / (1.0 + v * v));
    }
    assert!(worst <= 1e-11, "{worst}");
}

/// Bisection on `(1 + ε/2)β² - (N + k2 - 2)β + c = 0` over `[lo, hi]`.
fn root(dim: usize, k2: f64, eps: f64, c: f64, mut lo: f64, mut hi: f64) -> f64 {
    let f = |b: f64| (1.0 + eps / 2.0) * b * b - (dim as f64 + k2 - 2.0) * b + c;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn vector_field_roots_match_numeric_root_finder() {
    let vf = vector_field_constants(2, 0.5, 1.0, 1.0, 0.0, 4, 0.0).unwrap();
    let vertex = 2.0 / (2.0 * 1.5);
    let bm = root(4, 0.0, 1.0, 0.5, 0.0, vertex);
    let bp = root(4, 0.0, 1.0, 0.5, vertex, 10.0);
    assert!((vf.beta_minus - bm).abs() < 1e-12 && (vf.beta_minus - 1.0 / 3.0).abs() < 1e-12);
    assert!((vf.beta_plus - bp).abs() < 1e-12);
    // K = β²/r0² (n-1)(n-1 + 1/(2ε)) + k1 with β = β_-.
    assert!((vf.k - bm * bm * 1.5).abs() < 1e-12 && (vf.k - 1.0 / 6.0).abs() < 1e-12);

    for (dim, k2, eps, c) in [(3usize, 0.0, 0.5, 0.1), (5, -1.0, 0.2, 0.8), (4, 0.5, 2.0, 0.3)] {
        let vf = vector_field_constants(3, c, 0.7, eps, 0.2, dim, k2).unwrap();
        let v = (dim as f64 + k2 - 2.0) / (2.0 * (1.0 + eps / 2.0));
        assert!((vf.beta_minus - root(dim, k2, eps, c, 0.0, v)).abs() < 1e-10);
        assert!((vf.beta_plus - root(dim, k2, eps, c, v, 50.0)).abs() < 1e-10);
    }
}

#[test]
fn drift_profile_maximum_is_closed_form() {
    for (dim, k2, n) in [(3usize, 0.0, 1usize), (3, 0.0, 2), (4, -1.0, 3), (6, 0.5, 4)] {
        let a = dim as f64 + k2 - 2.0;
        let b = beta_max(dim, k2, n);
        assert!((b - a / (2.0 * n as f64)).abs() < 1e-15);
        let peak = a * b - n as f64 * b * b;
        assert!((peak - a * a / (4.0 * n as f64)).abs() < 1e-14);
        assert!((peak - hardy_constant(dim, k2).unwrap() / n as f64).abs() < 1e-14);
        for t in [0.5, 0.9, 1.1, 2.0] {
            assert!(a * t * b - n as f64 * (t * b).powi(2) < peak);
        }
    }
}

#[test]
fn remainder_grows_as_epsilon_shrinks_at_the_largest_c() {
    let co = hardy_constant(3, 0.0).unwrap();
    let ks: Vec<f64> = [1.0, 0.1, 0.01]
        .iter()
        .map(|&eps: &f64| vector_field_constants(2, co / (1.0 + eps / 2.0), 1.0, eps, 0.0, 3, 0.0).unwrap().k)
        .collect();
    assert!(ks.windows(2).all(|w| w[1] > w[0]), "{ks:?}");
}

#[test]
fn ims_remainder_monotonicity_sweep() {
    let base = (3usize, 0.5, 1.0, 2.0, 0.5);
    let k = |n: usize, c: f64, r0: f64, k0: f64, k1: f64| ims_remainder(n, c, r0, k0, k1).unwrap();
    let k_base = k(base.0, base.1, base.2, base.3, base.4);
    let h = 1e-3;
    assert!(k(base.0 + 1, base.1, base.2, base.3, base.4) > k_base);
    assert!(k(base.0, base.1 + h, base.2, base.3, base.4) > k_base);
    assert!(k(base.0, base.1, base.2 + h, base.3, base.4) < k_base);
    assert!(k(base.0, base.1, base.2, base.3 + h, base.4) > k_base);
    assert!(k(base.0, base.1, base.2, base.3, base.4 + h) > k_base);
    for n in 2..6 {
        for &c in &[0.1, 0.25, 1.0] {
            for &r0 in &[0.5, 1.0, 2.0] {
                for &k0 in &[0.0, 1.0, 9.0] {
                    assert!(k(n, c, r0, k0, 0.0) < k(n, c * 1.01, r0, k0, 0.0));
                    assert!(k(n, c, r0 * 1.01, k0, 0.0) < k(n, c, r0, k0, 0.0));
                    assert!(k(n, c, r0, k0, 0.0) < k(n, c, r0, k0 + 0.5, 0.0));
                }
            }
        }
    }
}

#[test]
fn quadratic_form_of_annular_bump_matches_radial_oracles() {
    let cfg = single(3);
    let leb = WeightSpec::lebesgue(cfg.clone());
    let rule = build_rule(&cfg, &RuleParams { half_width: 1.0, panels_per_axis: 8, ..Default::default() }).unwrap();
    let mu = rule.weight_field(&leb).unwrap();
    let (rho, big) = (0.2, 0.9);
    let phi = AnnularBump { center: vec![0.0; 3], inner: rho, outer: big };
    let q = quadratic_form(&phi, 0.25, &rule, &mu).unwrap();
    let psi = |r: f64| {
        let s = (r - rho) / (big - rho);
        (4.0 * s * (1.0 - s)).powi(3)
    };
    let dpsi = |r: f64| {
        let s = (r - rho) / (big - rho);
        3.0 * (4.0 * s * (1.0 - s)).powi(2) * 4.0 * (1.0 - 2.0 * s) / (big - rho)
    };
    let grad = simpson(|r| 4.0 * PI * r * r * dpsi(r).powi(2), rho, big, 4000);
    let pot = 0.25 * simpson(|r| 4.0 * PI * psi(r).powi(2), rho, big, 4000);
    let mass = simpson(|r| 4.0 * PI * r * r * psi(r).powi(2), rho, big, 4000);
    for (got, want) in [(q.grad_energy, grad), (q.potential_energy, pot), (q.mass, mass)] {
        assert!((got / want - 1.0).abs() < 5e-3, "{got} vs {want}");
    }

    let z = quadratic_form(&Zero { dim: 3 }, 0.25, &rule, &mu).unwrap();
    assert_eq!((z.grad_energy, z.potential_energy, z.mass, z.q), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn quadratic_form_is_two_homogeneous() {
    let cfg = pair3();
    let w = WeightSpec::new(0.5, 0.1, 2.0, 0.0, -0.5, cfg.clone()).unwrap();
    let rule = build_rule(&cfg, &RuleParams { half_width: 2.0, panels_per_axis: 6, ..Default::default() }).unwrap();
    let mu = rule.weight_field(&w).unwrap();
    let phi = GaussianBump { center: vec![0.3, 0.0, 0.1], sigma: 0.8, half_width: 2.0 };
    let one = quadratic_form(&phi, 0.2, &rule, &mu).unwrap();
    let two = quadratic_form(&Scaled { factor: 2.0, inner: &phi }, 0.2, &rule, &mu).unwrap();
    for (a, b) in [(one.grad_energy, two.grad_energy), (one.potential_energy, two.potential_energy), (one.mass, two.mass), (one.q, two.q)] {
        assert!((b - 4.0 * a).abs() <= 1e-12 * b.abs().max(1e-300), "{a} {b}");
    }
}

#[test]
fn zero_function_holds_with_zero_margin() {
    let cfg = pair3();
    let leb = WeightSpec::lebesgue(cfg.clone());
    let rule = build_rule(&cfg, &RuleParams { half_width: 2.0, panels_per_axis: 4, ..Default::default() }).unwrap();
    let mu = rule.weight_field(&leb).unwrap();
    for method in [Method::VectorFieldThm21, Method::VectorFieldThm22, Method::ImsThm31] {
        let r = check_inequality(&Zero { dim: 3 }, 0.0, 0.0, 0.2, method, &rule, &mu, &CheckOptions { k0: Some(1.0), epsilon: None })
            .unwrap();
        assert_eq!(r.margin, 0.0);
        assert_eq!(r.verdict, HardyVerdict::Holds);
    }
}

#[test]
fn ims_holds_at_the_critical_constant_and_fails_beyond_it() {
    let cfg = pair3();
    let leb = WeightSpec::lebesgue(cfg.clone());
    let part = PartitionOfUnity::new(cfg.clone());
    let co = hardy_constant(3, 0.0).unwrap();
    assert_eq!(co, 0.25);

    let rule = build_rule(&cfg, &RuleParams { half_width: 3.0, ..Default::default() }).unwrap();
    let mu = rule.weight_field(&leb).unwrap();
    let k0 = compute_k0(&part, co, &K0Options::default()).unwrap().k0;
    let bump = GaussianBump { center: vec![0.0; 3], sigma: 1.0, half_width: 3.0 };
    let r = check_inequality(&bump, 0.0, 0.0, co, Method::ImsThm31, &rule, &mu, &CheckOptions { k0: Some(k0), epsilon: None }).unwrap();
    assert_eq!(r.verdict, HardyVerdict::Holds);
    assert!(r.margin > r.quadrature_error, "{r:?}");

    // Supercritical: the witness around a_1 with shrinking ε beats the IMS remainder.
    let c = 0.5;
    let k0 = compute_k0(&part, c, &K0Options::default()).unwrap().k0;
    let k = ims_remainder(2, c, cfg.r0(), k0, 0.0).unwrap();
    let eta = choose_eta(c, 3, 0.0).unwrap();
    let eps_list = [1e-2, 1e-4, 1e-6, 1e-8];
    let wrule = witness_rule(&cfg, 0, 1e-14).unwrap();
    let wmu = wrule.weight_field(&leb).unwrap();
    let reports: Vec<_> = eps_list
        .iter()
        .map(|&epsilon| {
            let phi = WitnessSpec { pole_index: 0, eta, epsilon }.function(&cfg);
            evaluate_inequality(&phi, Method::ImsThm31, c, k, co, 0.0, &wrule, &wmu).unwrap()
        })
        .collect();
    let margins: Vec<f64> = reports.iter().map(|r| r.margin).collect();
    assert!(reports.iter().any(|r| r.verdict == HardyVerdict::Violated), "K = {k}, margins {margins:?}");
    // The admissibility check refuses the same constant outright.
    let phi = WitnessSpec { pole_index: 0, eta, epsilon: 0.1 }.function(&cfg);
    assert!(check_inequality(&phi, 0.0, 0.0, c, Method::ImsThm31, &wrule, &wmu, &CheckOptions { k0: Some(k0), epsilon: None }).is_err());
}

#[test]
fn witness_quotient_tracks_radial_oracle_at_twice_critical() {
    let cfg = single(3);
    let leb = WeightSpec::lebesgue(cfg.clone());
    let c = 2.0 * hardy_constant(3, 0.0).unwrap();
    let eta = choose_eta(c, 3, 0.0).unwrap();
    let eps_list = [1e-1, 1e-2, 1e-3, 1e-4];
    let rule = witness_rule(&cfg, 0, 1e-10).unwrap();
    let q: Vec<f64> = eps_list
        .iter()
        .map(|&epsilon| witness_quotient(&leb, &WitnessSpec { pole_index: 0, eta, epsilon }, c, &rule).unwrap())
        .collect();
    assert!(q.windows(2).all(|w| w[1] < w[0]), "{q:?}");
    for (&e, &qi) in eps_list.iter().zip(&q) {
        let oracle = radial_witness_quotient(3, 0.0, c, eta, e);
        assert!((qi - oracle).abs() <= 1e-2 * oracle.abs().max(1.0), "ε={e}: {qi} vs radial {oracle}");
    }
    let q1 = witness_quotient(&leb, &WitnessSpec { pole_index: 0, eta, epsilon: 1.0 }, c, &rule).unwrap();
    assert!(q1.abs() < 1e3);
}
