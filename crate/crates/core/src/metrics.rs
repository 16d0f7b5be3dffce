//! Distance estimators and exact Gaussian inequality checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localization::CoupledPairs;
use crate::special::{self, norm_pdf, norm_quantile, norm_sf};
use crate::stats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub method: String,
    pub n_a: usize,
    pub n_b: Option<usize>,
}

/// Grid size for the max-statistic distance.
pub const DEFAULT_GRID: usize = 201;

/// Law the max statistic of `W` is compared against.
#[derive(Clone, Copy, Debug)]
pub enum MaxReference<'a> {
    /// Independent `N(0, sigma_j^2)` coordinates; `max_j Z_j / sigma_j` has CDF `Phi(x)^d`.
    IndependentGaussian,
    /// Rows of an `n x d` sample (row-major).
    Samples(&'a [f64]),
}

/// `max_j x_j / sigma_j` for each row of a row-major `n x d` array.
pub fn max_statistics(rows: &[f64], sigma: &[f64]) -> Vec<f64> {
    rows.chunks(sigma.len())
        .map(|r| r.iter().zip(sigma).map(|(x, s)| x / s).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// CDF of the max of `d` independent standard normals.
pub fn gaussian_max_cdf(x: f64, d: usize) -> f64 {
    (d as f64 * special::ln_norm_cdf(x)).exp()
}

/// `p`-quantile of the max of `d` independent standard normals.
pub fn gaussian_max_quantile(p: f64, d: usize) -> f64 {
    norm_quantile(p.powf(1.0 / d as f64))
}

/// Thresholds at the reference probabilities `k / (m + 1)`, `k = 1..m`.
pub fn quantile_grid(reference: MaxReference<'_>, sigma: &[f64], m: usize) -> Vec<f64> {
    let probs = (1..=m).map(|k| k as f64 / (m + 1) as f64);
    match reference {
        MaxReference::IndependentGaussian => probs.map(|p| gaussian_max_quantile(p, sigma.len())).collect(),
        MaxReference::Samples(z) => {
            let mut mz = max_statistics(z, sigma);
            mz.sort_by(f64::total_cmp);
            probs.map(|p| stats::quantile_sorted(&mz, p)).collect()
        }
    }
}

fn ecdf_sorted(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64
}

/// `sup_x |P(max_j W_j/sigma_j <= x) - P(max_j Z_j/sigma_j <= x)|` over a
/// threshold grid (default: 201 quantile-matched points). The standard error
/// is the DKW envelope at one-sigma coverage, combined over both samples
/// when the reference is empirical.
pub fn kolmogorov_max_distance(
    w: &[f64],
    sigma: &[f64],
    reference: MaxReference<'_>,
    grid: Option<&[f64]>,
) -> Result<DistanceEstimate> {
    if sigma.is_empty() || sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidParameter("sigma must be non-empty and positive".into()));
    }
    let owned;
    let grid = match grid {
        Some(g) => g,
        None => {
            owned = quantile_grid(reference, sigma, DEFAULT_GRID);
            &owned
        }
    };
    if grid.is_empty() {
        return Err(Error::InvalidParameter("threshold grid is empty".into()));
    }
    let mut mw = max_statistics(w, sigma);
    if mw.is_empty() {
        return Err(Error::InvalidParameter("no samples".into()));
    }
    mw.sort_by(f64::total_cmp);
    let d = sigma.len();
    match reference {
        MaxReference::IndependentGaussian => {
            let value = grid
                .iter()
                .map(|&x| (ecdf_sorted(&mw, x) - gaussian_max_cdf(x, d)).abs())
                .fold(0.0, f64::max);
            Ok(DistanceEstimate {
                value,
                standard_error: stats::dkw_se(mw.len()),
                method: "max_statistic_ks_exact_gaussian".into(),
                n_a: mw.len(),
                n_b: None,
            })
        }
        MaxReference::Samples(z) => {
            let mut mz = max_statistics(z, sigma);
            mz.sort_by(f64::total_cmp);
            let value = grid
                .iter()
                .map(|&x| (ecdf_sorted(&mw, x) - ecdf_sorted(&mz, x)).abs())
                .fold(0.0, f64::max);
            Ok(DistanceEstimate {
                value,
                standard_error: stats::dkw_se(mw.len()).hypot(stats::dkw_se(mz.len())),
                method: "max_statistic_ks_two_sample".into(),
                n_a: mw.len(),
                n_b: Some(mz.len()),
            })
        }
    }
}

/// `P(max_j Z_j > x)` for independent `Z_j ~ N(0, sigma_j^2)`, accurate deep
/// into the tail.
pub fn gaussian_max_tail_independent(x: f64, sigma: &[f64]) -> f64 {
    let log_all_below: f64 = sigma.iter().map(|s| (-norm_sf(x / s)).ln_1p()).sum();
    -log_all_below.exp_m1()
}

/// Sorted-sample `p`-Wasserstein distance between two equal-size samples.
/// The standard error is the delta-method error of the mean transport cost,
/// conditional on the optimal (sorted) matching.
pub fn wasserstein_p_1d(a: &[f64], b: &[f64], p: f64) -> Result<DistanceEstimate> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidParameter(format!("samples must be non-empty and equal-size, got {} and {}", a.len(), b.len())));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p must be at least 1, got {p}")));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let costs: Vec<f64> = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs().powf(p)).collect();
    let m = stats::mean(&costs);
    let value = m.powf(1.0 / p);
    let se = if m > 0.0 { value / (p * m) * stats::std_error(&costs) } else { 0.0 };
    Ok(DistanceEstimate { value, standard_error: se, method: format!("sorted_w{p}"), n_a: a.len(), n_b: Some(b.len()) })
}

/// `(mean |u.(W - Z)|^p)^{1/p}` over coupled pairs, with jackknife SE.
pub fn projected_lp(pairs: &CoupledPairs, u: &[f64], p: f64) -> Result<DistanceEstimate> {
    if u.len() != pairs.d {
        return Err(Error::InvalidParameter("direction has the wrong dimension".into()));
    }
    if u.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidParameter("direction must be nonzero".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p must be at least 1, got {p}")));
    }
    if pairs.is_empty() {
        return Err(Error::Precondition("no pairs".into()));
    }
    let col: Vec<f64> = (0..pairs.len())
        .map(|i| {
            let (w, z) = (pairs.w_row(i), pairs.z_row(i));
            u.iter().zip(w.iter().zip(z)).map(|(c, (a, b))| c * (a - b)).sum::<f64>().abs().powf(p)
        })
        .collect();
    let (value, se) = stats::jackknife_of_means(&[&col], |m| m[0].max(0.0).powf(1.0 / p));
    Ok(DistanceEstimate {
        value,
        standard_error: if se.is_finite() { se } else { 0.0 },
        method: format!("projected_l{p}_{}", pairs.construction),
        n_a: pairs.len(),
        n_b: None,
    })
}

/// Outcome of an exact inequality evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Anti-concentration of the Gaussian max near `x` against its tail:
/// `P(x-eps < max Z <= x) <= (eps/s)(1 + x/s) exp(eps x / s^2) P(max Z > x)`,
/// with `s = min sigma_j`.
pub fn gmax_tail_check(sigma: &[f64], x: f64, eps: f64) -> Result<InequalityCheck> {
    if !(x >= 0.0) || !(eps > 0.0) || sigma.is_empty() || sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidParameter("need x >= 0, eps > 0 and positive sigma".into()));
    }
    let s = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    let tail = gaussian_max_tail_independent(x, sigma);
    let lhs = (gaussian_max_tail_independent(x - eps, sigma) - tail).max(0.0);
    let rhs = eps / s * (1.0 + x / s) * (eps * x / (s * s)).exp() * tail;
    Ok(InequalityCheck { lhs, rhs, holds: lhs <= rhs + 1e-12 })
}

/// `sup_t P(|max_j Z_j - t| <= eta)` for `d` iid standard normals, against
/// `2 eta (sqrt(2 log d) + 2)`. Exact CDFs on a fine grid, refined locally.
pub fn nazarov_check(d: usize, eta: f64) -> Result<InequalityCheck> {
    if d == 0 || !(eta >= 0.0) {
        return Err(Error::InvalidParameter("need d >= 1 and eta >= 0".into()));
    }
    let window = |t: f64| gaussian_max_cdf(t + eta, d) - gaussian_max_cdf(t - eta, d);
    let (mut best_t, mut best) = (0.0, 0.0f64);
    let mut t = -8.0;
    while t <= 12.0 {
        let v = window(t);
        if v > best {
            best = v;
            best_t = t;
        }
        t += 1e-2;
    }
    // golden-section refinement around the grid maximum
    let (mut a, mut b) = (best_t - 1e-2, best_t + 1e-2);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let e = a + g * (b - a);
        if window(c) > window(e) { b = e } else { a = c }
    }
    let lhs = best.max(window(0.5 * (a + b)));
    let rhs = 2.0 * eta * ((2.0 * (d as f64).ln()).sqrt() + 2.0);
    Ok(InequalityCheck { lhs, rhs, holds: lhs <= rhs + 1e-12 })
}

/// Mills-ratio bound `phi(z) / (1 - Phi(z)) <= (sqrt(4 + z^2) + z) / 2`.
pub fn birnbaum_ratio(z: f64) -> Result<InequalityCheck> {
    if !(z >= 0.0) {
        return Err(Error::InvalidParameter(format!("z must be non-negative, got {z}")));
    }
    let lhs = norm_pdf(z) / norm_sf(z);
    let rhs = 0.5 * ((4.0 + z * z).sqrt() + z);
    Ok(InequalityCheck { lhs, rhs, holds: lhs <= rhs * (1.0 + 1e-14) })
}
