//! Max-statistic Kolmogorov distance of standardized sums against the
//! Gaussian max law, swept over `n`, with a log-log fit.

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::config::{independent_scales, RateSweepConfig};
use crate::distributions::{Family, Sampler, SumSampler};
use crate::error::{Error, Result};
use crate::metrics::{self, DistanceEstimate, MaxReference};
use crate::parallel;
use crate::rng::{self, Stream};
use crate::stats::{self, LineFit};

const BLOCK: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    /// Raw estimate `max_k |F_hat(x_k) - G(x_k)|`.
    pub distance: DistanceEstimate,
    /// Bootstrap estimate of the upward bias of `distance` from sampling
    /// noise; `distance - bias` is what gets fitted.
    pub bias: Option<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// Bootstrap 95% interval, when computed.
    pub slope_ci: Option<[f64; 2]>,
    pub residuals: Vec<f64>,
    /// `(log n, log error)`.
    pub points: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSweepOutput {
    pub points: Vec<RatePoint>,
    pub fit: RateFit,
    /// Slope of the uncorrected distances.
    pub raw_slope: f64,
}

/// OLS of `log err` on `log n`. Refuses non-positive errors.
pub fn fit_rate(ns: &[f64], errs: &[f64]) -> Result<RateFit> {
    if ns.len() != errs.len() || ns.len() < 2 {
        return Err(Error::InvalidParameter("need at least two (n, error) points".into()));
    }
    if errs.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::Degenerate("errors must be positive and finite to fit a rate".into()));
    }
    let x: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let y: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let LineFit { slope, intercept, slope_se, residuals } = stats::ols(&x, &y);
    Ok(RateFit { slope, intercept, slope_se, slope_ci: None, residuals, points: x.into_iter().zip(y).map(|(a, b)| [a, b]).collect() })
}

/// Counts of the max statistic between consecutive grid thresholds; bin `k`
/// holds values in `(grid[k-1], grid[k]]`, the last bin everything above.
struct Binned {
    counts: Vec<u64>,
    reps: u64,
}

impl Binned {
    fn distance(&self, cdf: &[f64]) -> f64 {
        let mut acc = 0u64;
        let mut best = 0.0f64;
        for (k, f) in cdf.iter().enumerate() {
            acc += self.counts[k];
            best = best.max((acc as f64 / self.reps as f64 - f).abs());
        }
        best
    }

    fn resample(&self, rng: &mut rng::TaskRng) -> Binned {
        let mut left = self.reps;
        let mut mass = 1.0f64;
        let mut counts = Vec::with_capacity(self.counts.len());
        for &c in &self.counts {
            let p = c as f64 / self.reps as f64;
            let k = if left == 0 || mass <= 0.0 {
                0
            } else {
                let q = (p / mass).clamp(0.0, 1.0);
                Binomial::new(left, q).expect("valid binomial").sample(rng)
            };
            counts.push(k);
            left -= k;
            mass -= p;
        }
        Binned { counts, reps: self.reps }
    }
}

fn sample_maxima(sampler: &SumSampler, scales: &[f64], reps: usize, seed: u64) -> Vec<f64> {
    let d = sampler.dim();
    parallel::map_indexed(reps.div_ceil(BLOCK), |b| {
        let rows = BLOCK.min(reps - b * BLOCK);
        let mut r = rng::derived_rng(seed, Stream::Replicate, b as u64);
        let mut buf = vec![0.0; d];
        (0..rows)
            .map(|_| {
                sampler.draw(&mut r, &mut buf);
                buf.iter().zip(scales).map(|(x, s)| x / s).fold(f64::NEG_INFINITY, f64::max)
            })
            .collect::<Vec<_>>()
    })
    .concat()
}

fn binned(maxima: &mut [f64], grid: &[f64]) -> Binned {
    maxima.sort_by(f64::total_cmp);
    let mut counts = Vec::with_capacity(grid.len() + 1);
    let mut prev = 0;
    for &g in grid {
        let c = maxima.partition_point(|&v| v <= g);
        counts.push((c - prev) as u64);
        prev = c;
    }
    counts.push((maxima.len() - prev) as u64);
    Binned { counts, reps: maxima.len() as u64 }
}

struct Sweep {
    points: Vec<RatePoint>,
    bins: Vec<Binned>,
    cdf: Vec<f64>,
}

fn sweep(cfg: &RateSweepConfig, seed: u64) -> Result<Sweep> {
    let family: Family = cfg.validate()?;
    let scales = independent_scales(&family)?;
    let d = family.dim();
    let grid = metrics::quantile_grid(MaxReference::IndependentGaussian, &scales, cfg.grid_points);
    let cdf: Vec<f64> = grid.iter().map(|&x| metrics::gaussian_max_cdf(x, d)).collect();
    let mut points = Vec::new();
    let mut bins = Vec::new();
    for (i, &n) in cfg.n_values.iter().enumerate() {
        let s = rng::derive_seed(seed, Stream::Replicate, i as u64);
        let sampler = SumSampler::new(family.clone(), n)?;
        let mut m = sample_maxima(&sampler, &scales, cfg.reps, s);
        let b = binned(&mut m, &grid);
        let distance = DistanceEstimate {
            value: b.distance(&cdf),
            standard_error: stats::dkw_se(cfg.reps),
            method: "max_statistic_ks_exact_gaussian".into(),
            n_a: cfg.reps,
            n_b: None,
        };
        points.push(RatePoint { n, distance, bias: None, seed: s });
        bins.push(b);
    }
    Ok(Sweep { points, bins, cdf })
}

/// Distances only (no fit), e.g. for families where no rate is expected.
pub fn rate_sweep_points(cfg: &RateSweepConfig, seed: u64) -> Result<Vec<RatePoint>> {
    Ok(sweep(cfg, seed)?.points)
}

/// Distances for every `n` and the log-log fit. With `bootstrap > 0` each
/// `n`'s binned maxima are resampled multinomially; the mean excess of the
/// resampled distances estimates the noise bias of the raw distance, the fit
/// uses the bias-corrected distances, and the slope interval is the
/// bootstrap percentile spread re-centred on the corrected slope.
/// Refuses to fit when every distance is within three DKW envelopes of zero.
pub fn rate_sweep(cfg: &RateSweepConfig, seed: u64) -> Result<RateSweepOutput> {
    let mut sw = sweep(cfg, seed)?;
    if sw.points.iter().all(|p| p.distance.value <= 3.0 * p.distance.standard_error) {
        return Err(Error::Degenerate("all distances are within 3 DKW envelopes of zero; no rate to fit".into()));
    }
    let ns: Vec<f64> = sw.points.iter().map(|p| p.n as f64).collect();
    let raw: Vec<f64> = sw.points.iter().map(|p| p.distance.value).collect();
    let raw_slope = fit_rate(&ns, &raw)?.slope;
    if cfg.bootstrap == 0 {
        return Ok(RateSweepOutput { points: sw.points, fit: fit_rate(&ns, &raw)?, raw_slope });
    }

    let boot: Vec<Vec<f64>> = parallel::map_indexed(cfg.bootstrap, |b| {
        let mut r = rng::derived_rng(seed, Stream::Bootstrap, b as u64);
        sw.bins.iter().map(|bn| bn.resample(&mut r).distance(&sw.cdf)).collect()
    });
    let corrected: Vec<f64> = (0..ns.len())
        .map(|i| {
            let bias = boot.iter().map(|e| e[i]).sum::<f64>() / boot.len() as f64 - raw[i];
            sw.points[i].bias = Some(bias);
            raw[i] - bias
        })
        .collect();
    let mut fit = fit_rate(&ns, &corrected)?;
    let mut slopes: Vec<f64> = boot.iter().filter_map(|e| fit_rate(&ns, e).ok().map(|f| f.slope)).collect();
    if slopes.len() >= 2 {
        slopes.sort_by(f64::total_cmp);
        let mid = stats::quantile_sorted(&slopes, 0.5);
        fit.slope_ci = Some([
            fit.slope + stats::quantile_sorted(&slopes, 0.025) - mid,
            fit.slope + stats::quantile_sorted(&slopes, 0.975) - mid,
        ]);
    }
    Ok(RateSweepOutput { points: sw.points, fit, raw_slope })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_slopes_are_recovered() {
        let ns = [250.0, 500.0, 1000.0, 2000.0, 4000.0];
        for s in [-1.0, -0.5, -0.25] {
            let e: Vec<f64> = ns.iter().map(|n: &f64| 0.7 * n.powf(s)).collect();
            let f = fit_rate(&ns, &e).unwrap();
            assert!((f.slope - s).abs() < 1e-12);
            let refit = fit_rate(&f.points.iter().map(|p| p[0].exp()).collect::<Vec<_>>(), &e).unwrap();
            assert!((refit.slope - f.slope).abs() < 1e-12);
        }
        assert!(fit_rate(&ns, &[0.0; 5]).is_err());
    }

    #[test]
    fn binned_distance_matches_direct() {
        let mut m: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 250.0 - 1.0).collect();
        let grid = [-0.5, 0.0, 0.5, 1.0, 2.0];
        let cdf = [0.1, 0.2, 0.4, 0.5, 0.8];
        let direct = grid
            .iter()
            .zip(&cdf)
            .map(|(g, f)| (m.iter().filter(|v| **v <= *g).count() as f64 / 1000.0 - f).abs())
            .fold(0.0, f64::max);
        let b = binned(&mut m, &grid);
        assert!((b.distance(&cdf) - direct).abs() < 1e-15);
        assert_eq!(b.counts.iter().sum::<u64>(), 1000);
    }
}
