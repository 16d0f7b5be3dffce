use lclab::distributions::{Family, SmoothedExponential, SumSampler, Tilted};
use lclab::error::Error;
use lclab::metrics;
use lclab::posterior::EmpiricalTarget;
use lclab::sde::{self, euler_maruyama, simulate_follmer_many, simulate_langevin_with_jacobian, FollmerConfig, COUPLING_DELTA};
use lclab::{special, stats};
use nalgebra::DMatrix;

fn terminal_variance(drift: impl Fn(f64, &[f64], &mut [f64]) -> lclab::error::Result<()> + Copy, steps: usize) -> f64 {
    let ends: Vec<f64> = (0..100_000).map(|i| euler_maruyama(drift, 1, 1.0, steps, &[0.0], i).unwrap().terminal()[0]).collect();
    stats::variance(&ends)
}

#[test]
fn brownian_terminal_variance() {
    let v = terminal_variance(|_, _, b| {
        b[0] = 0.0;
        Ok(())
    }, 10);
    assert!((v - 1.0).abs() < 0.02, "{v}");
}

#[test]
fn ornstein_uhlenbeck_terminal_variance() {
    let v = terminal_variance(|_, x, b| {
        b[0] = -x[0];
        Ok(())
    }, 1000);
    let exact = (1.0 - (-2.0f64).exp()) / 2.0;
    assert!((v - exact).abs() < 0.02, "{v} vs {exact}");
}

#[test]
fn gaussian_follmer_terminals_are_gaussian() {
    let g = Family::standard_gaussian(2).unwrap();
    let outs = simulate_follmer_many(&g, &FollmerConfig { steps: 50, ..Default::default() }, 10_000, 1).unwrap();
    for j in 0..2 {
        let col: Vec<f64> = outs.iter().map(|o| o.terminal[j]).collect();
        let ks = stats::ks_statistic(&col, special::norm_cdf);
        assert!(stats::ks_pvalue(ks, col.len()) > 1e-3);
    }
}

#[test]
fn snapshot_posterior_mean_is_centered() {
    let e = Family::product_exponential(2).unwrap();
    let cfg = FollmerConfig { steps: 100, snapshot: Some(0.1), ..Default::default() };
    let outs = simulate_follmer_many(&e, &cfg, 10_000, 2).unwrap();
    for j in 0..2 {
        let m: Vec<f64> = outs.iter().map(|o| o.snapshot.as_ref().unwrap().m[j]).collect();
        assert!(stats::mean(&m).abs() <= 3.0 * stats::std_error(&m));
    }
}

#[test]
fn gaussian_coupling_is_tight() {
    let g = Family::standard_gaussian(2).unwrap();
    let cfg = FollmerConfig { steps: 50, delta: COUPLING_DELTA, ..Default::default() };
    let pairs = sde::follmer_couple(&g, &cfg, 10_000, 3).unwrap();
    assert!(metrics::projected_lp(&pairs, &[1.0, 0.0], 2.0).unwrap().value <= 0.05);
}

#[test]
fn sum_coupling_shrinks_with_n() {
    let fam = Family::product_exponential(2).unwrap();
    let cfg = FollmerConfig { steps: 100, delta: COUPLING_DELTA, ..Default::default() };
    let dist = |n: usize| {
        let target = EmpiricalTarget::factorized(&SumSampler::new(fam.clone(), n).unwrap(), 4000, 7).unwrap();
        metrics::projected_lp(&sde::follmer_couple(&target, &cfg, 500, 8).unwrap(), &[1.0, 0.0], 2.0).unwrap().value
    };
    let (d25, d100) = (dist(25), dist(100));
    assert!(d100.is_finite() && d100 <= 5.0 * d25, "{d100} vs {d25}");
}

#[test]
fn zero_pairs_is_a_precondition_error() {
    let g = Family::standard_gaussian(1).unwrap();
    assert!(matches!(sde::follmer_couple(&g, &FollmerConfig::default(), 0, 0), Err(Error::Precondition(_))));
}

#[test]
fn langevin_jacobian_identity_at_time_zero() {
    let g = Family::standard_gaussian(2).unwrap();
    let out = simulate_langevin_with_jacobian(&g, &[0.3, -1.0], 0.0, 1, 0).unwrap();
    assert_eq!(out.jacobians.last().unwrap(), &DMatrix::<f64>::identity(2, 2));
}

#[test]
fn tilted_jacobian_contracts() {
    let eps = 0.3;
    let p = Tilted::new(SmoothedExponential::new(0.05, 2).unwrap(), eps).unwrap();
    for seed in 0..20 {
        let out = simulate_langevin_with_jacobian(&p, &[0.5, 2.0], 5.0, 500, seed).unwrap();
        for (k, j) in out.jacobians.iter().enumerate() {
            let op = j.singular_values().max();
            assert!(op <= (-eps * out.path.grid[k]).exp() + 1e-3, "seed {seed} step {k}: {op}");
        }
    }
}
