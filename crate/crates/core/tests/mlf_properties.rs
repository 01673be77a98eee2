use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tfslab_core::gamma::rgamma;
use tfslab_core::mlf::{
    certify_c0, default_lambda_grid, default_t_grid, log_grid, ml_eval, ml_kernel, rotated_arg, sector_bounds,
    KernelKind, MlParams, SectorParams,
};
use tfslab_core::{FractionalOrder, Phase, C64};

fn ml(alpha: f64, beta: f64, z: C64) -> C64 {
    ml_eval(MlParams::new(alpha, beta).unwrap(), z).unwrap()
}

#[test]
fn reduces_to_the_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let r = 10.0 * rng.random::<f64>().sqrt();
        let th = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let z = C64::from_polar(r, th);
        worst = worst.max((ml(1.0, 1.0, z) - z.exp()).norm() / z.exp().norm());
    }
    assert!(worst <= 1e-10, "{worst:e}");
}

/// Whether the dominant growth `exp(Re z^{1/α})` fits in an `f64`.
fn representable(alpha: f64, r: f64, theta: f64) -> bool {
    theta.abs() >= std::f64::consts::PI * alpha / 2.0 || r.powf(1.0 / alpha) * (theta / alpha).cos() < 600.0
}

#[test]
fn recurrence_holds_over_a_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut tested = 0;
    while tested < 500 {
        let alpha = rng.random_range(0.1..1.0);
        let beta = rng.random_range(0.2..2.5);
        let r = 50.0 * rng.random::<f64>();
        let th = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        if !representable(alpha, r, th) {
            continue;
        }
        let z = C64::from_polar(r, th);
        let e = ml(alpha, beta, z);
        let shifted = ml(alpha, alpha + beta, z);
        let res = (e - rgamma(beta) - z * shifted).norm() / (1.0 + e.norm());
        worst = worst.max(res);
        tested += 1;
    }
    assert!(worst <= 1e-9, "{worst:e}");
}

#[test]
fn erfc_identity_at_half_order() {
    // E_{1/2,1}(1) = e·erfc(−1) = e·(1 + erf 1), erf 1 from its Maclaurin series
    let mut erf = 0.0;
    let mut term = 1.0;
    for n in 0..40 {
        if n > 0 {
            term *= -1.0 / n as f64;
        }
        erf += term / (2 * n + 1) as f64;
    }
    erf *= 2.0 / std::f64::consts::PI.sqrt();
    let expected = std::f64::consts::E * (1.0 + erf);
    let v = ml(0.5, 1.0, C64::new(1.0, 0.0));
    assert!((v.re - expected).abs() < 1e-12 * expected && v.im.abs() < 1e-14);
    assert!((v.re - 5.00898).abs() < 1e-5);
}

#[test]
fn kernel_bound_holds_on_default_grids() {
    for alpha in [0.3, 0.5, 0.7, 0.9] {
        let order = FractionalOrder::standard(alpha).unwrap();
        let params = SectorParams::certify(&order).unwrap();
        assert!(params.c0 >= 1.0 && params.c0 <= 100.0, "alpha={alpha} c0={}", params.c0);
        for &lambda in &default_lambda_grid() {
            for &t in &default_t_grid() {
                let e = ml_kernel(&order, lambda, t, KernelKind::State).unwrap();
                assert!(e.norm() * (1.0 + lambda * t.powf(alpha)) <= params.c0);
            }
        }
    }
}

#[test]
fn certified_constant_is_stable_under_refinement() {
    for alpha in [0.5, 0.9] {
        let order = FractionalOrder::standard(alpha).unwrap();
        let mu = 0.75 * std::f64::consts::PI * alpha;
        let coarse = certify_c0(&order, mu, &default_lambda_grid(), &default_t_grid()).unwrap();
        let fine = certify_c0(&order, mu, &log_grid(1.0, 100.0, 81), &log_grid(1e-3, 1e3, 121)).unwrap();
        assert!(coarse.is_finite() && coarse >= 1.0);
        assert!((fine - coarse).abs() <= 0.05 * coarse, "alpha={alpha}: {coarse} vs {fine}");
    }
}

#[test]
fn kernel_value_at_half_order_obeys_the_bound() {
    // E_{1/2,1}(−4i) = e^{−16}·erfc(4i) = e^{−16}·(1 − i·erfi 4); the erfi series has positive terms only
    let mut erfi = 0.0;
    let mut power = 4.0;
    let mut fact = 1.0;
    for n in 0..120 {
        if n > 0 {
            fact *= n as f64;
            power *= 16.0;
        }
        erfi += power / (fact * (2 * n + 1) as f64);
    }
    erfi *= 2.0 / std::f64::consts::PI.sqrt();
    let expected = C64::new(1.0, -erfi) * (-16f64).exp();
    let order = FractionalOrder::standard(0.5).unwrap();
    let v = ml_kernel(&order, 4.0, 1.0, KernelKind::State).unwrap();
    assert!((v - expected).norm() < 1e-12 * expected.norm(), "{v} vs {expected}");
    let c0 = SectorParams::certify(&order).unwrap().c0;
    assert!(v.norm() * 5.0 <= c0);
}

#[test]
fn modulus_decay_stays_within_the_envelope_ratio() {
    for alpha in [0.3, 0.6, 0.9] {
        let order = FractionalOrder::standard(alpha).unwrap();
        let c0 = SectorParams::certify(&order).unwrap().c0;
        for &lambda in &[1.0, 10.0, 100.0] {
            for &t in &log_grid(1e-2, 10.0, 13) {
                let a = ml_kernel(&order, lambda, t, KernelKind::State).unwrap().norm();
                let b = ml_kernel(&order, lambda, 10.0 * t, KernelKind::State).unwrap().norm();
                let envelope = (1.0 + lambda * t.powf(alpha)) / (1.0 + lambda * (10.0 * t).powf(alpha));
                assert!(b / a <= c0 * c0 * envelope, "alpha={alpha} lambda={lambda} t={t}");
            }
        }
    }
}

#[test]
fn sector_examples() {
    let order = FractionalOrder::standard(0.5).unwrap();
    let s = sector_bounds(&order, std::f64::consts::FRAC_PI_3).unwrap();
    assert!((s.arg_lo + std::f64::consts::PI).abs() < 1e-15);
    assert!((s.arg_hi - std::f64::consts::FRAC_PI_3).abs() < 1e-15);
    assert!(s.contains(C64::new(0.0, -1.0)));
    let near_lower_edge = sector_bounds(&order, std::f64::consts::FRAC_PI_4 + 1e-3).unwrap();
    assert!(near_lower_edge.contains(C64::new(1.0, 0.0)));
    assert!(sector_bounds(&order, 0.1).is_err());
    assert!(sector_bounds(&order, 2.0).is_err());
}

#[test]
fn power_phase_kernel_uses_rotated_argument() {
    let order = FractionalOrder::new(0.6, Phase::PowerIAlpha).unwrap();
    let v = ml_kernel(&order, 3.0, 2.0, KernelKind::State).unwrap();
    let z = C64::from_polar(3.0 * 2f64.powf(0.6), -0.3 * std::f64::consts::PI);
    assert_eq!(v, ml(0.6, 1.0, z));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn sector_points_satisfy_the_defining_condition(
        alpha in 0.05f64..0.999,
        frac_mu in 0.001f64..0.999,
        frac_arg in 0.0f64..=1.0,
        modulus in 1e-3f64..1e3,
    ) {
        let order = FractionalOrder::standard(alpha).unwrap();
        let pi = std::f64::consts::PI;
        let mu = pi * alpha / 2.0 + frac_mu * pi * alpha / 2.0;
        let s = sector_bounds(&order, mu).unwrap();
        prop_assert!(s.arg_lo < s.arg_hi);
        let theta = s.arg_lo + frac_arg * (s.arg_hi - s.arg_lo);
        let theta = if theta <= -pi { -pi + 1e-15 } else { theta };
        let rotated = rotated_arg(alpha, theta).abs();
        prop_assert!(rotated >= mu - 1e-12 && rotated <= pi + 1e-12, "arg={theta} rotated={rotated} mu={mu}");
        prop_assert!(s.satisfies_defining_condition(C64::from_polar(modulus, theta)));
    }
}
