use lclab::distributions::{Family, SmoothedExponential, Tilted};
use lclab::stein::{
    kernel_second_moment_check, poincare_constant_1d, stein_kernel_1d_exact, stein_kernel_langevin, stein_residual, TestFunction,
};
use nalgebra::DMatrix;

fn gaussian_1d(variance: f64) -> Family {
    Family::gaussian(DMatrix::from_element(1, 1, variance)).unwrap()
}

#[test]
fn gaussian_langevin_kernels() {
    let est = stein_kernel_langevin(&gaussian_1d(1.0), &[vec![0.7]], 8.0, 200, 400, 1).unwrap();
    assert!((est.tau[0][(0, 0)] - 1.0).abs() <= 3.0 * est.se[0][(0, 0)]);
    let est = stein_kernel_langevin(&gaussian_1d(4.0), &[vec![-1.0], vec![2.5]], 20.0, 200, 1000, 2).unwrap();
    for i in 0..2 {
        assert!((est.tau[i][(0, 0)] - 4.0).abs() <= 3.0 * est.se[i][(0, 0)], "{:?}", est.tau[i]);
    }
}

#[test]
fn tilted_kernel_operator_norm_is_bounded() {
    let eps = 0.5;
    let p = Tilted::new(SmoothedExponential::new(0.05, 2).unwrap(), eps).unwrap();
    let pts = vec![vec![-0.5, 0.0], vec![1.0, 2.0], vec![3.0, -0.8]];
    let est = stein_kernel_langevin(&p, &pts, 12.0, 200, 600, 3).unwrap();
    for (t, se) in est.tau.iter().zip(&est.se) {
        let sym = (t + t.transpose()) * 0.5;
        assert!(sym.singular_values().max() <= 1.0 / eps + 3.0 * se.max());
    }
}

#[test]
fn exact_one_dimensional_kernels() {
    let g = gaussian_1d(1.0);
    for x in [-2.0, 0.0, 1.3] {
        assert!((stein_kernel_1d_exact(&g, x).unwrap() - 1.0).abs() < 1e-7);
    }
    let e = Family::product_exponential(1).unwrap();
    for x in [-0.5, 0.0, 2.0, 7.0] {
        assert!((stein_kernel_1d_exact(&e, x).unwrap() - (x + 1.0)).abs() < 1e-7);
    }
    assert!(stein_kernel_1d_exact(&e, -1.0).unwrap().abs() < 1e-7);
}

fn samples(f: &Family, n: usize, seed: u64) -> Vec<Vec<f64>> {
    f.sample(n, seed).unwrap().rows().map(|r| r.to_vec()).collect()
}

#[test]
fn exponential_square_residual() {
    let e = Family::product_exponential(1).unwrap();
    let s = samples(&e, 100_000, 4);
    let rows: Vec<&[f64]> = s.iter().map(|r| r.as_slice()).collect();
    let sq = TestFunction::new("x^2", 0, |x| x[0] * x[0], |x, g| g[0] = 2.0 * x[0]);
    let r = &stein_residual(&rows, |x| DMatrix::from_element(1, 1, x[0] + 1.0), &[sq])[0];
    assert!(r.value.abs() <= 3.0 * r.se);
}

#[test]
fn wrong_kernel_leaves_the_variance() {
    let e = Family::product_exponential(1).unwrap();
    let s = samples(&e, 100_000, 5);
    let rows: Vec<&[f64]> = s.iter().map(|r| r.as_slice()).collect();
    let id = TestFunction::new("x", 0, |x| x[0], |_, g| g[0] = 1.0);
    let r = &stein_residual(&rows, |_| DMatrix::zeros(1, 1), &[id])[0];
    assert!((r.value - 1.0).abs() <= 3.0 * r.se);
}

#[test]
fn kernel_second_moments() {
    let g = gaussian_1d(1.0);
    let s = samples(&g, 100_000, 6);
    let rows: Vec<&[f64]> = s.iter().map(|r| r.as_slice()).collect();
    let c = kernel_second_moment_check(|_| DMatrix::identity(1, 1), &[1.0], &rows, 1.0);
    assert_eq!(c.lhs, 1.0);
    assert!((c.rhs - 1.0).abs() < 3.0 * c.rhs_se && c.holds);

    let e = Family::product_exponential(1).unwrap();
    let s = samples(&e, 100_000, 7);
    let rows: Vec<&[f64]> = s.iter().map(|r| r.as_slice()).collect();
    let c = kernel_second_moment_check(|x| DMatrix::from_element(1, 1, x[0] + 1.0), &[1.0], &rows, 4.0);
    assert!((c.lhs - 2.0).abs() < 3.0 * c.lhs_se, "{c:?}");
    assert!(c.holds);

    let c = kernel_second_moment_check(|x| DMatrix::from_element(1, 1, x[0] + 1.0), &[0.0], &rows, 4.0);
    assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
    assert!(c.holds);
}

/// Independent oracle: smallest positive eigenvalue of the finite-difference
/// weighted Neumann Laplacian, by inverse iteration on the mean-zero subspace.
fn rayleigh_gap(log_density: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mid: Vec<f64> = (0..n).map(|i| log_density(a + (i as f64 + 0.5) * h).exp()).collect();
    let node: Vec<f64> = (0..=n).map(|i| log_density(a + i as f64 * h).exp()).collect();
    let mass: Vec<f64> = (0..=n).map(|i| node[i] * h * if i == 0 || i == n { 0.5 } else { 1.0 }).collect();
    let mut lap = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..n {
        let w = mid[i] / h;
        lap[(i, i)] += w;
        lap[(i + 1, i + 1)] += w;
        lap[(i, i + 1)] -= w;
        lap[(i + 1, i)] -= w;
    }
    // Generalized symmetric problem L v = lambda M v via M^{-1/2} L M^{-1/2}.
    let s: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let a_sym = DMatrix::from_fn(n + 1, n + 1, |i, j| lap[(i, j)] * s[i] * s[j]);
    let mut ev: Vec<f64> = a_sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev[1]
}

#[test]
fn exponential_poincare_constant() {
    let logd = |x: f64| -(x + 1.0);
    let fem = poincare_constant_1d(logd, -1.0, 20.0, 400).unwrap();
    let oracle = 1.0 / rayleigh_gap(logd, -1.0, 20.0, 400);
    assert!((fem - oracle).abs() / oracle < 5e-3, "{fem} vs {oracle}");
    assert!(fem < 4.0 && fem > 3.6);
}
