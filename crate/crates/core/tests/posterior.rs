use lclab::distributions::Family;
use lclab::error::Error;
use lclab::posterior::{follmer_drift, posterior_moments, posterior_sample, smoothed_score_snis};
use lclab::{special, stats};

/// `log ∫ e^{-(x+1)} exp(x y/(1-t) - t x^2/(2(1-t))) dx` over `(-1, 40)`.
fn exp_log_partition(t: f64, y: f64) -> (f64, f64) {
    let n = 100_000;
    let (a, b) = (-1.0, 40.0);
    let h = (b - a) / n as f64;
    let expo = |x: f64| -(x + 1.0) + x * y / (1.0 - t) - t * x * x / (2.0 * (1.0 - t));
    let peak = (0..=n).map(|i| expo(a + i as f64 * h)).fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut zx) = (0.0, 0.0);
    for i in 0..=n {
        let x = a + i as f64 * h;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 } * (expo(x) - peak).exp();
        z += w;
        zx += w * x;
    }
    (peak + (z * h).ln(), zx / z)
}

#[test]
fn gaussian_posterior_closed_form() {
    let g = Family::standard_gaussian(2).unwrap();
    let pm = posterior_moments(&g, 0.5, &[2.0, 0.0]).unwrap();
    assert!((pm.mean[0] - 2.0).abs() < 1e-12 && pm.mean[1].abs() < 1e-12);
    assert!((pm.cov.clone() - nalgebra::DMatrix::identity(2, 2) * 0.5).abs().max() < 1e-12);
    assert!(follmer_drift(&g, 0.3, &[1.0, -4.0]).unwrap().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn exponential_posterior_mean_matches_trapezoid() {
    let e = Family::product_exponential(1).unwrap();
    let pm = posterior_moments(&e, 0.5, &[0.0]).unwrap();
    let (_, mean) = exp_log_partition(0.5, 0.0);
    assert!((pm.mean[0] - mean).abs() < 1e-6, "{} vs {mean}", pm.mean[0]);
    assert!(follmer_drift(&e, 0.0, &[0.0]).unwrap()[0].abs() < 1e-10);
}

#[test]
fn exponential_drift_is_gradient_of_log_smoothed_density() {
    let e = Family::product_exponential(1).unwrap();
    let (t, y, h) = (0.9, 3.0, 1e-4);
    let log_p = |y: f64| -y * y / (2.0 * (1.0 - t)) + exp_log_partition(t, y).0;
    let fd = (log_p(y + h) - log_p(y - h)) / (2.0 * h);
    let drift = follmer_drift(&e, t, &[y]).unwrap()[0];
    assert!((drift - fd).abs() < 1e-5, "{drift} vs {fd}");
}

#[test]
fn snis_drift_estimates() {
    let g = Family::standard_gaussian(2).unwrap();
    let est = smoothed_score_snis(&g, 0.5, &[1.0, 1.0], 100_000, 3).unwrap();
    for j in 0..2 {
        assert!(est.drift[j].abs() <= 3.0 * est.se[j], "{:?}", est);
    }
    let e = Family::product_exponential(1).unwrap();
    let est = smoothed_score_snis(&e, 0.5, &[0.0], 100_000, 4).unwrap();
    let exact = follmer_drift(&e, 0.5, &[0.0]).unwrap()[0];
    assert!((est.drift[0] - exact).abs() <= 3.0 * est.se[0]);
}

#[test]
fn snis_far_tail_is_degenerate() {
    let e = Family::product_exponential(1).unwrap();
    assert!(matches!(smoothed_score_snis(&e, 0.9, &[-40.0], 10_000, 5), Err(Error::DegenerateWeights { .. })));
}

#[test]
fn gaussian_posterior_draws_pass_ks() {
    let g = Family::standard_gaussian(2).unwrap();
    let draws: Vec<Vec<f64>> = (0..100_000).map(|i| posterior_sample(&g, 0.5, &[0.0, 0.0], i).unwrap()).collect();
    for j in 0..2 {
        let col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
        let ks = stats::ks_statistic(&col, |x| special::norm_cdf(x / 0.5f64.sqrt()));
        assert!(stats::ks_pvalue(ks, col.len()) > 1e-3);
    }
}

#[test]
fn exponential_posterior_draws_match_moments() {
    let e = Family::product_exponential(1).unwrap();
    let pm = posterior_moments(&e, 0.5, &[0.0]).unwrap();
    let draws: Vec<f64> = (0..100_000).map(|i| posterior_sample(&e, 0.5, &[0.0], i).unwrap()[0]).collect();
    assert!((stats::mean(&draws) - pm.mean[0]).abs() <= 3.0 * stats::std_error(&draws));
}

#[test]
fn late_posteriors_concentrate() {
    let t = 0.999;
    for f in [Family::product_exponential(1).unwrap(), Family::product_weibull(1, 2.0).unwrap()] {
        let draws: Vec<f64> = (0..20_000).map(|i| posterior_sample(&f, t, &[0.0], i).unwrap()[0]).collect();
        assert!(stats::variance(&draws) <= 2.0 * (1.0 - t) / t, "{}", f.label());
    }
}
