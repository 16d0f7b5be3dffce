use lclab::distributions::{weibull_standardization, Family};
use proptest::prelude::*;

fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    (0..=n).map(|i| f(a + i as f64 * h) * if i == 0 || i == n { 0.5 } else { 1.0 }).sum::<f64>() * h
}

#[test]
fn log_density_reference_points() {
    let g = Family::standard_gaussian(1).unwrap();
    assert!((g.log_density(&[0.0]) + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
    let e1 = Family::product_exponential(1).unwrap();
    assert_eq!(e1.log_density(&[0.0]), -1.0);
    let e2 = Family::product_exponential(2).unwrap();
    assert_eq!(e2.log_density(&[0.0, 0.0]), -2.0);
    assert_eq!(e1.log_density(&[-1.5]), f64::NEG_INFINITY);
}

#[test]
fn scores() {
    let g = Family::standard_gaussian(2).unwrap();
    assert_eq!(g.score(&[1.0, -2.0]).unwrap(), vec![-1.0, 2.0]);
    let e = Family::product_exponential(1).unwrap();
    for x in [-0.9, 0.0, 3.0] {
        assert_eq!(e.score(&[x]).unwrap(), vec![-1.0]);
    }
}

#[test]
fn weibull_constants_match_quadrature() {
    let (m, s) = weibull_standardization(2.0);
    let pdf = |w: f64| 2.0 * w * (-w * w).exp();
    let mean = trapezoid(|w| w * pdf(w), 0.0, 12.0, 200_000);
    let second = trapezoid(|w| w * w * pdf(w), 0.0, 12.0, 200_000);
    assert!((m - mean).abs() < 1e-9 && (m - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-12);
    assert!((s * s - (second - mean * mean)).abs() < 1e-9);
    assert!((s * s - (1.0 - std::f64::consts::PI / 4.0)).abs() < 1e-12);
}

#[test]
fn weibull_score_matches_finite_difference_at_median() {
    let f = Family::product_weibull(1, 2.0).unwrap();
    let (m, s) = weibull_standardization(2.0);
    let x = (2f64.ln().sqrt() - m) / s;
    let h = 1e-5;
    let fd = (f.log_density(&[x + h]) - f.log_density(&[x - h])) / (2.0 * h);
    assert!((f.score(&[x]).unwrap()[0] - fd).abs() < 1e-6);
}

#[test]
fn gaussian_sample_mean_envelope() {
    let s = Family::standard_gaussian(1).unwrap().sample(1_000_000, 11).unwrap();
    assert!(s.mean()[0].abs() < 4e-3);
}

#[test]
fn exponential_sample_variance() {
    let s = Family::product_exponential(1).unwrap().sample(1_000_000, 12).unwrap();
    assert!((s.covariance()[(0, 0)] - 1.0).abs() < 0.02);
}

#[test]
fn product_families_are_centered_and_isotropic() {
    for f in [Family::product_exponential(3).unwrap(), Family::product_weibull(3, 3.0).unwrap()] {
        let s = f.sample(400_000, 5).unwrap();
        let c = s.covariance();
        for j in 0..3 {
            assert!(s.mean()[j].abs() < 0.01, "{}", f.label());
            for k in 0..3 {
                let target = if j == k { 1.0 } else { 0.0 };
                assert!((c[(j, k)] - target).abs() < 0.02, "{}", f.label());
            }
        }
    }
}

#[test]
fn sampling_is_deterministic() {
    for f in [Family::standard_gaussian(2).unwrap(), Family::product_exponential(2).unwrap(), Family::product_weibull(2, 2.0).unwrap()] {
        let a = f.sample(5, 99).unwrap();
        let b = f.sample(5, 99).unwrap();
        assert_eq!(a.rows().flatten().map(|v| v.to_bits()).collect::<Vec<_>>(), b.rows().flatten().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}

proptest! {
    #[test]
    fn log_density_is_concave_along_lines(
        x in prop::collection::vec(-0.8f64..3.0, 3),
        v in prop::collection::vec(-1.0f64..1.0, 3),
        beta in 2.0f64..6.0,
    ) {
        let h = 1e-3;
        let fams = [Family::product_exponential(3).unwrap(), Family::product_weibull(3, beta).unwrap(), Family::standard_gaussian(3).unwrap()];
        for f in &fams {
            let at = |s: f64| f.log_density(&x.iter().zip(&v).map(|(a, b)| a + s * b).collect::<Vec<_>>());
            let (l, c, r) = (at(-h), at(0.0), at(h));
            if l.is_finite() && c.is_finite() && r.is_finite() {
                prop_assert!(l + r - 2.0 * c <= 1e-9 * (1.0 + c.abs()), "{}", f.label());
            }
        }
    }
}
