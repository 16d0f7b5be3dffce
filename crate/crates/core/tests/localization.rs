use lclab::distributions::Family;
use lclab::localization::{
    composite_clt_couple, gamma_matrix, martingale_embed_couple, matrix_geometric_mean, mean_gamma, mgm_inequality_check,
    CompositeConfig, EmbedConfig,
};
use lclab::metrics;
use lclab::rng::{derived_rng, Stream};
use nalgebra::DMatrix;
use rand::Rng;

fn random_pd(d: usize, seed: u64) -> DMatrix<f64> {
    let mut r = derived_rng(seed, Stream::Sample, 0);
    let a = DMatrix::from_fn(d, d, |_, _| r.random::<f64>() - 0.5);
    &a * a.transpose() + DMatrix::identity(d, d) * 0.1
}

#[test]
fn gamma_at_time_zero_is_the_covariance() {
    for f in [Family::product_exponential(2).unwrap(), Family::product_weibull(2, 3.0).unwrap()] {
        let g = gamma_matrix(&f, 0.0, &[0.0, 0.0]).unwrap();
        assert!((g - DMatrix::identity(2, 2)).abs().max() < 1e-6, "{}", f.label());
    }
    let g = gamma_matrix(&Family::standard_gaussian(2).unwrap(), 0.5, &[3.0, 1.0]).unwrap();
    assert!((g - DMatrix::identity(2, 2)).abs().max() < 1e-12);
}

#[test]
fn early_gamma_lower_bound() {
    let e = Family::product_exponential(1).unwrap();
    for t in [0.05, 1.0 / 9.0] {
        let (m, se) = mean_gamma(&e, t, 10_000, 1).unwrap();
        assert!(m[(0, 0)] >= 1.0 / 3.0 - 3.0 * se[(0, 0)], "t={t}: {}", m[(0, 0)]);
    }
}

#[test]
fn geometric_mean_properties() {
    let i = DMatrix::<f64>::identity(3, 3);
    assert!((matrix_geometric_mean(&i, &i).unwrap() - &i).abs().max() < 1e-12);
    for seed in 0..20 {
        let (a, b) = (random_pd(5, seed), random_pd(5, seed + 100));
        let ab = matrix_geometric_mean(&a, &b).unwrap();
        let ba = matrix_geometric_mean(&b, &a).unwrap();
        assert!((&ab - &ba).abs().max() < 1e-10);
        // Defining property: (A#B) A^{-1} (A#B) = B.
        let back = &ab * a.clone().try_inverse().unwrap() * &ab;
        assert!((back - &b).abs().max() < 1e-9);
    }
}

#[test]
fn mgm_check_cases() {
    let a = random_pd(4, 7);
    let same = mgm_inequality_check(&a, &a).unwrap();
    assert!(same.holds && same.min_eigenvalue.abs() < 1e-10);
    for seed in 0..200 {
        let d = [2, 5, 10][seed as usize % 3];
        assert!(mgm_inequality_check(&random_pd(d, seed), &random_pd(d, seed + 1000)).unwrap().holds);
    }
}

#[test]
fn embedding_rotations_are_orthogonal() {
    let e = Family::product_exponential(2).unwrap();
    let out = martingale_embed_couple(&e, &EmbedConfig { n: 10, eps: 0.1, steps: 50, n_pairs: 20, pilot: 1000 }, 3).unwrap();
    assert!(out.pairs.diagnostic("orthogonality_error").unwrap().iter().all(|&v| v < 1e-8));
}

#[test]
fn embedding_gap_decays() {
    let e = Family::product_exponential(2).unwrap();
    let ns = [25usize, 100, 400];
    let d: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let cfg = EmbedConfig { n, eps: 0.1, steps: 50, n_pairs: 200, pilot: 2000 };
            let out = martingale_embed_couple(&e, &cfg, 10 + n as u64).unwrap();
            metrics::projected_lp(&out.pairs, &[1.0, 0.0], 2.0).unwrap().value
        })
        .collect();
    let lx: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = d.iter().map(|v| v.ln()).collect();
    let slope = lclab::stats::ols(&lx, &ly).slope;
    assert!(d.windows(2).all(|w| w[1] < w[0]) && (-0.8..=-0.2).contains(&slope), "{d:?} slope {slope}");
}

#[test]
fn gaussian_composite_collapses() {
    let g = Family::standard_gaussian(2).unwrap();
    let out = composite_clt_couple(&g, &CompositeConfig { pilot: 2000, ..CompositeConfig::new(50, 0.1, 200) }, 4).unwrap();
    assert!(metrics::projected_lp(&out.pairs, &[1.0, 0.0], 2.0).unwrap().value <= 0.02);
}
