//! Tail ratios `P(max W_j > x) / P(max Z_j > x)` for standardized sums.

use serde::{Deserialize, Serialize};

use super::config::{independent_scales, md_window, MdRatioConfig};
use crate::distributions::{Sampler, SumSampler};
use crate::error::{Error, Result};
use crate::metrics;
use crate::parallel;
use crate::rng::{self, Stream};
use crate::stats;

const BLOCK: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdRow {
    pub n: usize,
    pub x: f64,
    pub reps: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub gaussian_tail: f64,
    pub ratio: f64,
    /// One-sigma Wilson half-width of the numerator, divided by the exact tail.
    pub ratio_se: f64,
    pub window_upper: f64,
    /// `log d + log(s / Delta) + x^2 / S^2` with `Delta = S sqrt(poincare / n)`.
    pub bookkeeping_p: f64,
    /// `p Delta e` (unit constants, linear growth in `p`).
    pub bookkeeping_eps: f64,
    /// `(1 + x/s)(log(dn) + x^2/S^2)(S/s) sqrt(poincare / n)` with unit constant.
    pub reference_bound: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstRatio {
    pub n: usize,
    pub x: f64,
    pub deviation: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdOutput {
    pub rows: Vec<MdRow>,
    /// Per `n`, the `x` with the largest `|ratio - 1|`.
    pub worst: Vec<WorstRatio>,
}

/// Counts `max_j W_j / s_j > x` for every `x` over `reps` draws.
fn tail_hits(sampler: &SumSampler, xs: &[f64], reps: usize, seed: u64) -> Vec<u64> {
    let d = sampler.dim();
    let blocks = parallel::map_indexed(reps.div_ceil(BLOCK), |b| {
        let rows = BLOCK.min(reps - b * BLOCK);
        let mut r = rng::derived_rng(seed, Stream::Replicate, b as u64);
        let mut buf = vec![0.0; d];
        let mut hits = vec![0u64; xs.len()];
        for _ in 0..rows {
            sampler.draw(&mut r, &mut buf);
            let m = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (h, &x) in hits.iter_mut().zip(xs) {
                *h += (m > x) as u64;
            }
        }
        hits
    });
    let mut total = vec![0u64; xs.len()];
    for b in blocks {
        for (t, h) in total.iter_mut().zip(b) {
            *t += h;
        }
    }
    total
}

pub fn md_ratio_experiment(cfg: &MdRatioConfig, seed: u64) -> Result<MdOutput> {
    let family = cfg.validate()?;
    let scales = independent_scales(&family)?;
    if scales.iter().any(|s| (s - 1.0).abs() > 1e-12) {
        return Err(Error::InvalidParameter("tail ratios are computed for unit-scale coordinates".into()));
    }
    let d = family.dim() as f64;
    let poincare = family.poincare_bound;
    let (s_lo, s_hi) = (1.0, 1.0);
    let mut rows = Vec::new();
    let mut worst = Vec::new();
    for (i, &n) in cfg.n_values.iter().enumerate() {
        let s = rng::derive_seed(seed, Stream::Replicate, i as u64);
        let sampler = SumSampler::new(family.clone(), n)?;
        let hits = tail_hits(&sampler, &cfg.x_values, cfg.reps, s);
        let reps = cfg.reps as u64;
        let mut w: Option<WorstRatio> = None;
        for (&x, &h) in cfg.x_values.iter().zip(&hits) {
            let tail = metrics::gaussian_max_tail_independent(x, &scales);
            if h < cfg.min_tail_hits {
                let per_rep = (h as f64 / reps as f64).max(tail);
                return Err(Error::InsufficientTail {
                    hits: h,
                    suggested_reps: (1.5 * cfg.min_tail_hits as f64 / per_rep).ceil() as u64,
                });
            }
            let p_hat = h as f64 / reps as f64;
            let (_, half) = stats::wilson(h, reps, 1.0);
            let delta = s_hi * (poincare / n as f64).sqrt();
            let bp = d.ln() + (s_lo / delta).ln() + x * x / (s_hi * s_hi);
            let row = MdRow {
                n,
                x,
                reps,
                hits: h,
                p_hat,
                gaussian_tail: tail,
                ratio: p_hat / tail,
                ratio_se: half / tail,
                window_upper: md_window(&scales, n, poincare),
                bookkeeping_p: bp,
                bookkeeping_eps: bp * delta * std::f64::consts::E,
                reference_bound: (1.0 + x / s_lo) * ((d * n as f64).ln() + x * x / (s_hi * s_hi)) * (s_hi / s_lo) * (poincare / n as f64).sqrt(),
                seed: s,
            };
            let dev = (row.ratio - 1.0).abs();
            if w.as_ref().is_none_or(|b| dev > b.deviation) {
                w = Some(WorstRatio { n, x, deviation: dev, se: row.ratio_se });
            }
            rows.push(row);
        }
        worst.extend(w);
    }
    Ok(MdOutput { rows, worst })
}
