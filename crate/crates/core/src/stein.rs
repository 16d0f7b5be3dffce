//! Stein kernels: the Langevin representation `tau(x) = int_0^inf E J^x_s ds`,
//! exact one-dimensional kernels, Stein-identity residuals and the
//! second-moment check against a Poincaré constant.

use nalgebra::DMatrix;
use serde::Serialize;
use std::fmt::Write as _;

use crate::distributions::{LogDensity1d, Potential};
use crate::error::{Error, Result};
use crate::linalg;
use crate::parallel;
use crate::quadrature::{self, LogConcave1d, LOG_WINDOW};
use crate::rng::{self, Stream};
use crate::sde;
use crate::stats;

/// Kernel estimates at a set of points.
#[derive(Clone, Debug)]
pub struct SteinKernelEstimate {
    pub points: Vec<Vec<f64>>,
    pub tau: Vec<DMatrix<f64>>,
    /// Combined error: Monte Carlo, time-step (Richardson) and horizon tail,
    /// added in quadrature.
    pub se: Vec<DMatrix<f64>>,
    pub mc_se: Vec<DMatrix<f64>>,
    pub step_error: Vec<DMatrix<f64>>,
    pub tail_error: Vec<f64>,
    pub horizon: f64,
    pub n_paths: usize,
    pub steps: usize,
    pub seed: u64,
}

impl SteinKernelEstimate {
    /// CSV with columns `x_1..x_d, tau_11..tau_dd, se_11..se_dd` (row-major).
    pub fn to_csv(&self) -> String {
        let d = self.points.first().map_or(0, Vec::len);
        let mut head: Vec<String> = (1..=d).map(|j| format!("x_{j}")).collect();
        for p in ["tau", "se"] {
            for r in 1..=d {
                for c in 1..=d {
                    head.push(format!("{p}_{r}{c}"));
                }
            }
        }
        let mut s = head.join(",");
        s.push('\n');
        for ((x, t), e) in self.points.iter().zip(&self.tau).zip(&self.se) {
            let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            for m in [t, e] {
                for r in 0..d {
                    for c in 0..d {
                        row.push(m[(r, c)].to_string());
                    }
                }
            }
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

/// Langevin estimate of the Stein kernel at `points`.
///
/// When the potential reports a uniform convexity `eps`, the horizon must
/// satisfy `exp(-eps T) <= 0.01`. The tail beyond `T` is bounded by
/// `E|J_T| / eps`; without `eps` the decay rate is read off `J_{T/2}` and `J_T`.
pub fn stein_kernel_langevin<P: Potential + ?Sized>(
    potential: &P,
    points: &[Vec<f64>],
    horizon: f64,
    n_paths: usize,
    steps: usize,
    seed: u64,
) -> Result<SteinKernelEstimate> {
    if n_paths < 2 {
        return Err(Error::Precondition("need at least two paths per point".into()));
    }
    if steps < 2 {
        return Err(Error::Precondition("need at least two steps".into()));
    }
    let eps = potential.uniform_convexity();
    if let Some(e) = eps {
        if (-e * horizon).exp() > 0.01 {
            return Err(Error::Precondition(format!(
                "horizon {horizon} too short for convexity {e}: need at least {:.3}",
                100f64.ln() / e
            )));
        }
    }
    let d = potential.dim();
    let mut est = SteinKernelEstimate {
        points: points.to_vec(),
        tau: Vec::new(),
        se: Vec::new(),
        mc_se: Vec::new(),
        step_error: Vec::new(),
        tail_error: Vec::new(),
        horizon,
        n_paths,
        steps,
        seed,
    };
    for (pi, x0) in points.iter().enumerate() {
        let runs = parallel::try_map_indexed(n_paths, |p| {
            let mut r = rng::derived_rng(seed, Stream::Point, (pi * n_paths + p) as u64);
            sde::langevin_jacobian_integral(potential, x0, horizon, steps, &mut r)
        })?;
        let nf = n_paths as f64;
        let mean_of = |f: &dyn Fn(&sde::JacobianIntegral) -> &DMatrix<f64>| {
            runs.iter().fold(DMatrix::zeros(d, d), |acc, r| acc + f(r)) / nf
        };
        let fine = mean_of(&|r| &r.fine);
        let coarse = mean_of(&|r| &r.coarse);
        let j_half = mean_of(&|r| &r.j_half);
        let j_end = mean_of(&|r| &r.j_end);
        let mut var = DMatrix::zeros(d, d);
        for r in &runs {
            let dl = &r.fine - &fine;
            var += dl.component_mul(&dl);
        }
        let mc = var.map(|v| (v / (nf - 1.0) / nf).sqrt());
        let step_err = (&fine - &coarse).map(|v| v.abs() / 3.0);
        let end_norm = linalg::op_norm(&j_end);
        let tail = match eps {
            Some(e) => runs.iter().map(|r| linalg::op_norm(&r.j_end)).sum::<f64>() / nf / e,
            None => {
                let half_norm = linalg::op_norm(&j_half);
                let rate = (half_norm / end_norm).ln() / (0.5 * horizon);
                if rate.is_finite() && rate > 0.0 { end_norm / rate } else { end_norm * horizon }
            }
        };
        let se = DMatrix::from_fn(d, d, |r, c| (mc[(r, c)].powi(2) + step_err[(r, c)].powi(2) + tail * tail).sqrt());
        est.tau.push(fine);
        est.se.push(se);
        est.mc_se.push(mc);
        est.step_error.push(step_err);
        est.tail_error.push(tail);
    }
    Ok(est)
}

/// Extends from `x` in direction `dir` until the log-density drops `LOG_WINDOW`
/// below `level` or leaves the support.
fn tail_edge<F: LogDensity1d + ?Sized>(f: &F, x: f64, level: f64, dir: f64, scale: f64) -> f64 {
    let (lo, hi) = f.support();
    let mut step = scale;
    let mut e = x;
    for _ in 0..200 {
        let next = e + dir * step;
        if next <= lo {
            return lo;
        }
        if next >= hi {
            return hi;
        }
        e = next;
        if f.log_density(e) < level - LOG_WINDOW {
            return e;
        }
        step *= 1.5;
    }
    e
}

/// `tau(x) = int_x^inf (y - mean) rho(y) dy / rho(x)` by adaptive quadrature,
/// using the left tail for points below the mean.
pub fn stein_kernel_1d_exact<F: LogDensity1d + ?Sized>(f: &F, x: f64) -> Result<f64> {
    let (lo, hi) = f.support();
    if !(x >= lo && x <= hi) {
        return Err(Error::OutsideSupport { coordinate: 0, value: x });
    }
    let lx = f.log_density(x);
    if !lx.is_finite() {
        return Err(Error::OutsideSupport { coordinate: 0, value: x });
    }
    let mu = f.mean();
    let lc = LogConcave1d::new(|v| f.log_density(v), lo, hi);
    let scale = lc.moments(mu, 1.0, 1e-10)?.var.sqrt();
    let integrand = |y: f64| {
        let l = f.log_density(y);
        [if l.is_finite() { (y - mu) * (l - lx).exp() } else { 0.0 }]
    };
    let level = lx.max(lc.moments(mu, scale, 1e-10)?.log_peak);
    if x >= mu {
        let b = tail_edge(f, x, level, 1.0, scale);
        Ok(quadrature::integrate(integrand, x, b, 1e-8, 1e-300)?[0])
    } else {
        let a = tail_edge(f, x, level, -1.0, scale);
        Ok(-quadrature::integrate(integrand, a, x, 1e-8, 1e-300)?[0])
    }
}

pub type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Sync>;
pub type GradFn = Box<dyn Fn(&[f64], &mut [f64]) + Sync>;

/// `h = g e_j`: a scalar function placed in coordinate `j`.
pub struct TestFunction {
    pub name: String,
    pub coordinate: usize,
    pub value: ScalarFn,
    pub grad: GradFn,
}

impl TestFunction {
    pub fn new(
        name: impl Into<String>,
        coordinate: usize,
        value: impl Fn(&[f64]) -> f64 + Sync + 'static,
        grad: impl Fn(&[f64], &mut [f64]) + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), coordinate, value: Box::new(value), grad: Box::new(grad) }
    }
}

/// Coordinate maps, coordinate squares, pairwise products and a Gaussian bump.
pub fn default_test_functions(d: usize) -> Vec<TestFunction> {
    let mut out = Vec::new();
    for j in 0..d {
        out.push(TestFunction::new(format!("x{}", j + 1), j, move |x| x[j], move |_, g| {
            g.fill(0.0);
            g[j] = 1.0;
        }));
        out.push(TestFunction::new(format!("x{}^2", j + 1), j, move |x| x[j] * x[j], move |x, g| {
            g.fill(0.0);
            g[j] = 2.0 * x[j];
        }));
        for k in 0..d {
            if k != j && j < k {
                out.push(TestFunction::new(format!("x{}*x{}", j + 1, k + 1), j, move |x| x[k], move |_, g| {
                    g.fill(0.0);
                    g[k] = 1.0;
                }));
            }
        }
        out.push(TestFunction::new(
            format!("bump{}", j + 1),
            j,
            |x| (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp(),
            |x, g| {
                let b = (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp();
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi = -xi * b;
                }
            },
        ));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualRow {
    pub name: String,
    /// `E[X_j g(X)] - E[sum_k tau_jk(X) d_k g(X)]`.
    pub value: f64,
    pub se: f64,
}

/// Empirical Stein-identity residuals with jackknife standard errors.
/// `samples` are rows of length `d`.
pub fn stein_residual(
    samples: &[&[f64]],
    kernel: impl Fn(&[f64]) -> DMatrix<f64>,
    tests: &[TestFunction],
) -> Vec<ResidualRow> {
    let d = samples.first().map_or(0, |r| r.len());
    let taus: Vec<DMatrix<f64>> = samples.iter().map(|x| kernel(x)).collect();
    let mut grad = vec![0.0; d];
    tests
        .iter()
        .map(|tf| {
            let j = tf.coordinate;
            let mut lhs = Vec::with_capacity(samples.len());
            let mut rhs = Vec::with_capacity(samples.len());
            for (x, tau) in samples.iter().zip(&taus) {
                lhs.push(x[j] * (tf.value)(x));
                (tf.grad)(x, &mut grad);
                rhs.push((0..d).map(|k| tau[(j, k)] * grad[k]).sum());
            }
            let (value, se) = stats::jackknife_of_means(&[&lhs, &rhs], |m| m[0] - m[1]);
            ResidualRow { name: tf.name.clone(), value, se }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelMomentCheck {
    /// `E |tau(X)^T u|^2`
    pub lhs: f64,
    pub lhs_se: f64,
    /// `poincare * E (X . u)^2`
    pub rhs: f64,
    pub rhs_se: f64,
    pub ratio: f64,
    pub holds: bool,
}

/// Compares `E|tau(X)^T u|^2` with `poincare * E|X.u|^2` on a sample; holds
/// allows three standard errors of slack.
pub fn kernel_second_moment_check(
    kernel: impl Fn(&[f64]) -> DMatrix<f64>,
    u: &[f64],
    samples: &[&[f64]],
    poincare: f64,
) -> KernelMomentCheck {
    let mut l = Vec::with_capacity(samples.len());
    let mut r = Vec::with_capacity(samples.len());
    for x in samples {
        let tau = kernel(x);
        let tu: f64 = (0..u.len())
            .map(|c| (0..u.len()).map(|k| tau[(k, c)] * u[k]).sum::<f64>().powi(2))
            .sum();
        l.push(tu);
        r.push(poincare * x.iter().zip(u).map(|(a, b)| a * b).sum::<f64>().powi(2));
    }
    let (lhs, rhs) = (stats::mean(&l), stats::mean(&r));
    let (lhs_se, rhs_se) = (stats::std_error(&l), stats::std_error(&r));
    KernelMomentCheck {
        lhs,
        lhs_se,
        rhs,
        rhs_se,
        ratio: if rhs > 0.0 { lhs / rhs } else { f64::NAN },
        holds: lhs <= rhs + 3.0 * (lhs_se * lhs_se + rhs_se * rhs_se).sqrt(),
    }
}

/// Poincaré constant of `rho ∝ exp(log_density)` restricted to `[a, b]`:
/// the inverse spectral gap of the weighted Neumann Laplacian, discretized
/// with `cells` linear finite elements.
pub fn poincare_constant_1d(log_density: impl Fn(f64) -> f64, a: f64, b: f64, cells: usize) -> Result<f64> {
    if !(b > a) || cells < 4 {
        return Err(Error::InvalidParameter("need b > a and at least 4 cells".into()));
    }
    let n = cells + 1;
    let h = (b - a) / cells as f64;
    // 3-point Gauss on each cell, weights relative to the largest density
    let gp = [(-(0.6f64).sqrt(), 5.0 / 9.0), (0.0, 8.0 / 9.0), ((0.6f64).sqrt(), 5.0 / 9.0)];
    let peak = (0..=4 * cells)
        .map(|k| log_density(a + (b - a) * k as f64 / (4 * cells) as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut k = DMatrix::<f64>::zeros(n, n);
    let mut m = DMatrix::<f64>::zeros(n, n);
    for c in 0..cells {
        let x0 = a + c as f64 * h;
        for &(xi, w) in &gp {
            let s = 0.5 * (xi + 1.0);
            let x = x0 + s * h;
            let rho = (log_density(x) - peak).exp() * w * 0.5 * h;
            let phi = [1.0 - s, s];
            let dphi = [-1.0 / h, 1.0 / h];
            for p in 0..2 {
                for q in 0..2 {
                    k[(c + p, c + q)] += rho * dphi[p] * dphi[q];
                    m[(c + p, c + q)] += rho * phi[p] * phi[q];
                }
            }
        }
    }
    let chol = m.cholesky().ok_or_else(|| Error::NotPositiveDefinite("finite-element mass matrix".into()))?;
    let l_inv = chol.l().try_inverse().ok_or_else(|| Error::Degenerate("finite-element mass matrix".into()))?;
    let a_mat = linalg::symmetrize(&(&l_inv * k * l_inv.transpose()));
    let ev = linalg::eigenvalues(&a_mat);
    // ev[0] is the constant mode
    Ok(1.0 / ev[1])
}
