//! Small statistical toolkit: moments, jackknife, KS, DKW, Wilson, OLS.

use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (zero for fewer than two points).
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the sample mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Leave-one-out jackknife for a statistic `g(mean of a, mean of b, ...)` of
/// several per-observation columns. Returns `(estimate, se)`.
///
/// Uses the closed form of leave-one-out means, so the cost is O(n·k).
pub fn jackknife_of_means(columns: &[&[f64]], g: impl Fn(&[f64]) -> f64) -> (f64, f64) {
    let k = columns.len();
    let n = columns[0].len();
    let sums: Vec<f64> = columns.iter().map(|c| c.iter().sum()).collect();
    let full: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    let estimate = g(&full);
    if n < 2 {
        return (estimate, f64::NAN);
    }
    let mut loo = vec![0.0; k];
    let mut vals = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..k {
            loo[j] = (sums[j] - columns[j][i]) / (n - 1) as f64;
        }
        vals.push(g(&loo));
    }
    let vbar = mean(&vals);
    let ss: f64 = vals.iter().map(|v| (v - vbar) * (v - vbar)).sum();
    (estimate, ((n - 1) as f64 / n as f64 * ss).sqrt())
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Asymptotic p-value of the KS statistic `d` with `n` samples
/// (Kolmogorov series with the Stephens small-sample correction).
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Dvoretzky–Kiefer–Wolfowitz half-width at confidence `1 - alpha`.
pub fn dkw_halfwidth(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// DKW envelope matched to one standard error (two-sided 68.27% coverage).
pub fn dkw_se(n: usize) -> f64 {
    dkw_halfwidth(n, 0.3173)
}

/// Wilson score interval for a binomial proportion at `z` standard
/// deviations. Returns `(center, half_width)`.
pub fn wilson(hits: u64, n: u64, z: f64) -> (f64, f64) {
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    (center, half)
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (NaN with two points).
    pub slope_se: f64,
    pub residuals: Vec<f64>,
}

pub fn ols(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let slope_se = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    LineFit { slope, intercept, slope_se, residuals }
}

/// Linear-interpolated empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_exact_line() {
        let x: Vec<f64> = (1..6).map(|v| (v as f64).ln()).collect();
        for &s in &[-1.0, -0.5, -0.25] {
            let y: Vec<f64> = x.iter().map(|v| 0.3 + s * v).collect();
            let f = ols(&x, &y);
            assert!((f.slope - s).abs() < 1e-12);
        }
    }

    #[test]
    fn jackknife_of_mean_is_classical_se() {
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        let (est, se) = jackknife_of_means(&[&xs], |m| m[0]);
        assert!((est - mean(&xs)).abs() < 1e-12);
        assert!((se - std_error(&xs)).abs() < 1e-12);
    }

    #[test]
    fn ks_pvalue_reference() {
        // Critical value at alpha = 0.05 is about 1.358 / sqrt(n).
        let n = 10_000;
        let p = ks_pvalue(1.358 / (n as f64).sqrt(), n);
        assert!((p - 0.05).abs() < 0.002, "{p}");
    }

    #[test]
    fn wilson_contains_proportion() {
        let (c, h) = wilson(30, 1000, 1.0);
        assert!((c - 0.03).abs() < h);
    }
}
