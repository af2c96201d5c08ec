use levylab::levy::{
    blumenthal_getoor_index, characteristic_exponent, classify_paths, moment_integral, tail_function,
    CharacteristicTriplet, JumpLaw, LevyMeasure, MomentDomain, Side, TabulatedDensity,
};
use levylab::quad::{integrate, QuadOptions};
use nalgebra::{Complex, DMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute-force `∫_0^∞ (e^{iux} − 1 − iux 1{x≤1}) x^{−1−α} dx`: adaptive
/// quadrature over whole periods, plus two integration-by-parts terms for
/// the remaining oscillatory tail.
fn half_line_by_quadrature(alpha: f64, u: f64) -> Complex<f64> {
    let opts = QuadOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-12,
        max_intervals: 20_000,
    };
    let w = |x: f64| x.powf(-1.0 - alpha);
    let near_re = integrate(|x| cos_m1(u * x) * w(x), 0.0, 1.0, opts).unwrap().value;
    let near_im = integrate(|x| sin_m_id(u * x) * w(x), 0.0, 1.0, opts).unwrap().value;
    let period = 2.0 * std::f64::consts::PI / u.abs();
    let (mut re, mut im) = (near_re - 1.0 / alpha, near_im);
    let mut a = 1.0;
    for _ in 0..3000 {
        let b = a + period;
        re += integrate(|x| (u * x).cos() * w(x), a, b, opts).unwrap().value;
        im += integrate(|x| (u * x).sin() * w(x), a, b, opts).unwrap().value;
        a = b;
    }
    let beta = 1.0 + alpha;
    let iu = Complex::new(0.0, u);
    let e = Complex::new(0.0, u * a).exp();
    let tail = -e * a.powf(-beta) / iu - beta * e * a.powf(-beta - 1.0) / (iu * iu);
    Complex::new(re, im) + tail
}

fn cos_m1(y: f64) -> f64 {
    -2.0 * (0.5 * y).sin().powi(2)
}

fn sin_m_id(y: f64) -> f64 {
    // Taylor series below 0.1 avoids cancellation.
    if y.abs() < 0.1 {
        (1..8).map(|k| {
            let n = 2 * k + 1;
            let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
            sign * y.powi(n) / (1..=n).map(f64::from).product::<f64>()
        }).sum()
    } else {
        y.sin() - y
    }
}

fn stable_triplet(alpha: f64, cp: f64, cm: f64) -> CharacteristicTriplet {
    CharacteristicTriplet::new(DMatrix::zeros(1, 1), LevyMeasure::stable(alpha, cp, cm).unwrap(), vec![0.0]).unwrap()
}

#[test]
fn stable_exponent_matches_quadrature() {
    for alpha in [0.5, 1.0, 1.5] {
        for u in [0.7, 2.5, -1.3] {
            let psi = characteristic_exponent(&stable_triplet(alpha, 1.0, 0.0), &[u]).unwrap();
            let oracle = half_line_by_quadrature(alpha, u);
            assert!(
                (psi - oracle).norm() <= 1e-6 * oracle.norm(),
                "α={alpha} u={u}: {psi} vs {oracle}"
            );
        }
    }
}

#[test]
fn negative_side_is_mirrored() {
    let a = characteristic_exponent(&stable_triplet(1.3, 0.0, 2.0), &[0.9]).unwrap();
    let b = characteristic_exponent(&stable_triplet(1.3, 2.0, 0.0), &[-0.9]).unwrap();
    assert!((a - b).norm() < 1e-14);
}

#[test]
fn truncated_exponential_exponent_matches_quadrature() {
    let t = CharacteristicTriplet::new(DMatrix::zeros(1, 1), LevyMeasure::TruncatedExponential, vec![0.0]).unwrap();
    for u in [0.3, 1.0, 7.0] {
        let psi = characteristic_exponent(&t, &[u]).unwrap();
        let oracle = 2.0
            * integrate(|x| cos_m1(u * x) * (-x).exp(), 0.0, 1.0, QuadOptions::default())
                .unwrap()
                .value;
        assert!((psi.re - oracle).abs() < 1e-12 && psi.im.abs() < 1e-15, "{psi} vs {oracle}");
    }
}

#[test]
fn tabulated_exponent_matches_quadrature() {
    // Density |x|^{-2.5} on [-1, 1] on a fine log-spaced grid.
    let grid: Vec<f64> = (0..=2000).map(|i| 10f64.powf(-4.0 + 4.0 * i as f64 / 2000.0)).collect();
    let tab = TabulatedDensity::from_fn(grid, |x| x.powf(-2.5), Some(2.5)).unwrap();
    let m = LevyMeasure::Tabulated(tab);
    let t = CharacteristicTriplet::new(DMatrix::zeros(1, 1), m, vec![0.0]).unwrap();
    for u in [0.5, 3.0] {
        let psi = characteristic_exponent(&t, &[u]).unwrap();
        let opts = QuadOptions::default();
        let oracle = 2.0 * integrate(|x| cos_m1(u * x) * x.powf(-2.5), 0.0, 1.0, opts).unwrap().value;
        assert!((psi.re - oracle).abs() < 1e-4 * oracle.abs(), "u={u}: {} vs {oracle}", psi.re);
        assert!(psi.im.abs() < 1e-12);
    }
}

#[test]
fn brownian_and_poisson_closed_forms_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let bm = CharacteristicTriplet::brownian(DMatrix::from_element(1, 1, 1.0)).unwrap();
    let poisson = CharacteristicTriplet::from_true_drift(
        DMatrix::zeros(1, 1),
        LevyMeasure::finite_activity(1.0, JumpLaw::Dirac { at: vec![1.0] }).unwrap(),
        vec![0.0],
    )
    .unwrap();
    for _ in 0..20 {
        let z: f64 = rng.random_range(-10.0..10.0);
        let b = characteristic_exponent(&bm, &[z]).unwrap();
        let expected_b = Complex::new(-0.5 * z * z, 0.0);
        assert!((b - expected_b).norm() <= 1e-8 * expected_b.norm().max(1e-300));
        let p = characteristic_exponent(&poisson, &[z]).unwrap();
        let expected_p = Complex::new(0.0, z).exp() - 1.0;
        assert!((p - expected_p).norm() <= 1e-8 * expected_p.norm().max(1e-12));
    }
}

#[test]
fn exponent_vanishes_at_origin() {
    for t in [
        stable_triplet(0.7, 1.0, 0.2),
        stable_triplet(1.0, 1.0, 1.0),
        CharacteristicTriplet::new(DMatrix::zeros(1, 1), LevyMeasure::TruncatedExponential, vec![1.0]).unwrap(),
    ] {
        assert_eq!(characteristic_exponent(&t, &[0.0]).unwrap(), Complex::new(0.0, 0.0));
    }
}

#[test]
fn multivariate_dirac_drift() {
    let m = LevyMeasure::finite_activity(2.0, JumpLaw::Dirac { at: vec![0.3, 0.4] }).unwrap();
    let t = CharacteristicTriplet::new(DMatrix::zeros(2, 2), m, vec![1.0, 1.0]).unwrap();
    match classify_paths(&t).unwrap() {
        levylab::levy::PathClass::BvWithDrift { drift } => {
            assert!((drift[0] - 0.4).abs() < 1e-12 && (drift[1] - 0.2).abs() < 1e-12)
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn truncated_exponential_bg_index() {
    assert_eq!(blumenthal_getoor_index(&LevyMeasure::TruncatedExponential).unwrap(), 0.0);
}

fn any_measure() -> impl Strategy<Value = LevyMeasure> {
    let stable = (0.05f64..1.95, 0.0f64..3.0, 0.0f64..3.0)
        .prop_filter("non-degenerate", |(_, a, b)| a + b > 1e-3)
        .prop_map(|(alpha, cp, cm)| LevyMeasure::stable(alpha, cp, cm).unwrap());
    let uniform = (0.0f64..5.0, -2.0f64..0.5, 0.6f64..3.0)
        .prop_map(|(rate, lo, hi)| LevyMeasure::finite_activity(rate, JumpLaw::Uniform { low: lo, high: hi }).unwrap());
    let normal = (0.0f64..5.0, -1.0f64..1.0, 0.1f64..2.0)
        .prop_map(|(rate, mean, sd)| LevyMeasure::finite_activity(rate, JumpLaw::Normal { mean, sd }).unwrap());
    let dirac = (0.0f64..5.0, -2.0f64..2.0)
        .prop_map(|(rate, at)| LevyMeasure::finite_activity(rate, JumpLaw::Dirac { at: vec![at] }).unwrap());
    let tabulated = (0.0f64..2.9, 0.1f64..2.0, 0.0f64..2.0).prop_map(|(kappa, cp, cm)| {
        let grid: Vec<f64> = (1..=50).map(|i| i as f64 / 50.0).collect();
        let pos = grid.iter().map(|x| cp * x.powf(-kappa)).collect();
        let neg = grid.iter().map(|x| cm * x.powf(-kappa)).collect();
        LevyMeasure::Tabulated(TabulatedDensity::new(grid, pos, neg, Some(kappa)).unwrap())
    });
    prop_oneof![
        stable,
        uniform,
        normal,
        dirac,
        tabulated,
        Just(LevyMeasure::TruncatedExponential)
    ]
}

fn bounded_support(m: &LevyMeasure) -> bool {
    match m {
        LevyMeasure::TruncatedExponential | LevyMeasure::Tabulated(_) => true,
        LevyMeasure::FiniteActivity { law: JumpLaw::Uniform { low, high }, .. } => low.abs() <= 1.0 && high.abs() <= 1.0,
        LevyMeasure::FiniteActivity { law: JumpLaw::Dirac { at }, .. } => at[0].abs() <= 1.0,
        _ => false,
    }
}

proptest! {
    #[test]
    fn tail_sides_add_up(m in any_measure(), x in 1e-3f64..3.0) {
        let both = tail_function(&m, x, Side::Both).unwrap();
        let sum = tail_function(&m, x, Side::Positive).unwrap() + tail_function(&m, x, Side::Negative).unwrap();
        prop_assert_eq!(both, sum);
    }

    #[test]
    fn tail_is_non_increasing(m in any_measure(), x in 1e-3f64..3.0, dx in 0.0f64..1.0) {
        let a = tail_function(&m, x, Side::Both).unwrap();
        let b = tail_function(&m, x + dx, Side::Both).unwrap();
        prop_assert!(b <= a * (1.0 + 1e-12) + 1e-12, "{} > {}", b, a);
    }

    #[test]
    fn moments_decrease_in_r_on_unit_support(m in any_measure(), r in 0.05f64..3.0, dr in 0.0f64..1.0) {
        prop_assume!(bounded_support(&m));
        let lo = moment_integral(&m, r, MomentDomain::Symmetric).unwrap();
        let hi = moment_integral(&m, r + dr, MomentDomain::Symmetric).unwrap();
        prop_assert!(hi.value <= lo.value * (1.0 + 1e-9) + 1e-12, "{:?} then {:?}", lo, hi);
        prop_assert!(!lo.finite || hi.finite);
    }

    #[test]
    fn stable_bv_iff_alpha_below_one(alpha in 0.05f64..1.95, cp in 0.1f64..2.0, cm in 0.1f64..2.0) {
        let t = stable_triplet(alpha, cp, cm);
        prop_assert_eq!(classify_paths(&t).unwrap().is_bounded_variation(), alpha < 1.0);
    }
}
