//! Tilted posteriors along the Föllmer process.
//!
//! For a target with Lebesgue density `rho`, the conditional law of the
//! endpoint given `Y_t = y` has density proportional to
//!
//! ```text
//! rho(x) * exp( x.y / (1-t) - t |x|^2 / (2 (1-t)) )
//! ```
//!
//! i.e. `f(x) exp(-|x-y|^2 / (2(1-t)))` with `f` the density of the target
//! relative to the standard Gaussian. The Föllmer drift is `(m(t,y) - y)/(1-t)`
//! with `m` the mean of this posterior.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::distributions::{self, Family, FamilyKind, Sampler};
use crate::error::{Error, Result};
use crate::quadrature::{LogConcave1d, Moments1d};
use crate::rng::TaskRng;
use crate::special::TruncatedNormal;

/// Relative tolerance for per-coordinate quadrature.
pub const QUAD_TOL: f64 = 1e-8;

/// Mean and covariance of the tilted posterior at `(t, y)`.
#[derive(Clone, Debug)]
pub struct PosteriorMoments {
    pub t: f64,
    pub y: Vec<f64>,
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

/// Anything whose tilted posteriors can be summarized and sampled.
pub trait TiltedPosterior: Sync {
    fn dim(&self) -> usize;

    fn moments(&self, t: f64, y: &[f64]) -> Result<PosteriorMoments>;

    fn mean(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.moments(t, y)?.mean);
        Ok(())
    }

    /// Exact draw from the posterior.
    fn sample(&self, t: f64, y: &[f64], rng: &mut TaskRng, out: &mut [f64]) -> Result<()>;

    /// True when posteriors factor over coordinates.
    fn is_product(&self) -> bool;
}

fn check_t(t: f64) -> Result<()> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("t must lie in [0,1), got {t}")));
    }
    Ok(())
}

/// Precision of the Gaussian tilt, `t/(1-t)`, and linear coefficient `y/(1-t)`.
#[inline]
fn tilt(t: f64, y: f64) -> (f64, f64) {
    (t / (1.0 - t), y / (1.0 - t))
}

/// One-dimensional tilted posterior of a product-family coordinate.
enum CoordPosterior {
    /// Exponential coordinate at `t > 0`.
    Truncated(TruncatedNormal),
    /// Exponential coordinate at `t = 0`: `-1 + Exp(rate)`.
    Shifted { rate: f64 },
    /// Weibull coordinate: log-density known, moments by quadrature.
    Quadrature { a: f64, b: f64, m: Moments1d },
}

fn coord_posterior(family: &Family, t: f64, y: f64) -> Result<CoordPosterior> {
    let (a, b) = tilt(t, y);
    match family.kind() {
        FamilyKind::ProductExponential => {
            if t == 0.0 {
                let rate = 1.0 - y;
                if !(rate > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "exponential tilt at t=0 is not normalizable for y = {y}"
                    )));
                }
                return Ok(CoordPosterior::Shifted { rate });
            }
            // -(x+1) - a x^2/2 + b x  =>  N((b-1)/a, 1/a) restricted to x >= -1
            Ok(CoordPosterior::Truncated(TruncatedNormal::new((b - 1.0) / a, (1.0 / a).sqrt(), -1.0)))
        }
        FamilyKind::ProductWeibull => {
            let lc = LogConcave1d::new(
                |x| family.coord_log_density(x) - 0.5 * a * x * x + b * x,
                family.coord_lower(),
                f64::INFINITY,
            );
            let scale = if a > 1.0 { 1.0 / a.sqrt() } else { 1.0 };
            let guess = if a > 1.0 { y.max(family.coord_lower() + 1e-3) } else { 0.0 };
            let m = lc.moments(guess, scale, QUAD_TOL)?;
            Ok(CoordPosterior::Quadrature { a, b, m })
        }
        FamilyKind::Gaussian => unreachable!("gaussian posteriors are handled jointly"),
    }
}

impl CoordPosterior {
    fn mean_var(&self) -> (f64, f64) {
        match self {
            CoordPosterior::Truncated(tn) => tn.moments(),
            CoordPosterior::Shifted { rate } => (-1.0 + 1.0 / rate, 1.0 / (rate * rate)),
            CoordPosterior::Quadrature { m, .. } => (m.mean, m.var),
        }
    }

    fn sample(&self, family: &Family, rng: &mut TaskRng) -> Result<f64> {
        match self {
            CoordPosterior::Truncated(tn) => Ok(tn.sample(rng)),
            CoordPosterior::Shifted { rate } => Ok(-1.0 - (1.0 - rng.random::<f64>()).ln() / rate),
            CoordPosterior::Quadrature { a, b, m } => {
                // The tilted potential has curvature >= a + kappa, so a
                // Gaussian centred at the mode with that precision dominates
                // the density once both are scaled to agree at the mode.
                let (_, sd) = distributions::weibull_standardization(family.beta().unwrap());
                let prec = a + distributions::weibull_min_curvature(family.beta().unwrap(), sd);
                let s = 1.0 / prec.sqrt();
                let logp = |x: f64| family.coord_log_density(x) - 0.5 * a * x * x + b * x - m.log_peak;
                const MAX_TRIES: u32 = 100_000;
                for _ in 0..MAX_TRIES {
                    let g: f64 = rng.sample(StandardNormal);
                    let x = m.mode + s * g;
                    let lr = logp(x) + 0.5 * g * g;
                    if lr.is_finite() && rng.random::<f64>().ln() < lr {
                        return Ok(x);
                    }
                }
                Err(Error::RejectionFailure { rate: 1.0 / MAX_TRIES as f64 })
            }
        }
    }
}

/// Posterior mean and covariance for a product or Gaussian family.
pub fn posterior_moments(family: &Family, t: f64, y: &[f64]) -> Result<PosteriorMoments> {
    check_t(t)?;
    if y.len() != family.dim() {
        return Err(Error::InvalidParameter("y has the wrong dimension".into()));
    }
    let d = family.dim();
    let (mean, cov) = match family.gaussian_eigen() {
        Some((evals, evecs)) => {
            // Sigma = U diag(l) U^T: mean = U diag(l/(1-t+t l)) U^T y,
            // cov = U diag(l (1-t)/(1-t+t l)) U^T.
            let yv = DVector::from_column_slice(y);
            let coords = evecs.transpose() * yv;
            let denom = evals.map(|l| 1.0 - t + t * l);
            let mc = DVector::from_fn(d, |i, _| evals[i] / denom[i] * coords[i]);
            let cv = DVector::from_fn(d, |i, _| evals[i] * (1.0 - t) / denom[i]);
            let mean = evecs * mc;
            let cov = crate::linalg::symmetrize(&(evecs * DMatrix::from_diagonal(&cv) * evecs.transpose()));
            (mean.iter().copied().collect(), cov)
        }
        None => {
            let mut mean = vec![0.0; d];
            let mut cov = DMatrix::zeros(d, d);
            for j in 0..d {
                let (m, v) = coord_posterior(family, t, y[j])?.mean_var();
                mean[j] = m;
                cov[(j, j)] = v;
            }
            (mean, cov)
        }
    };
    Ok(PosteriorMoments { t, y: y.to_vec(), mean, cov })
}

/// `(m(t,y) - y)/(1-t)`, the Föllmer drift.
pub fn follmer_drift(family: &Family, t: f64, y: &[f64]) -> Result<Vec<f64>> {
    let pm = posterior_moments(family, t, y)?;
    Ok(pm.mean.iter().zip(y).map(|(m, v)| (m - v) / (1.0 - t)).collect())
}

/// Exact draw from the posterior at `(t, y)`.
pub fn posterior_sample(family: &Family, t: f64, y: &[f64], seed: u64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; family.dim()];
    draw_posterior(family, t, y, &mut crate::rng::task_rng(seed), &mut out)?;
    Ok(out)
}

pub fn draw_posterior(family: &Family, t: f64, y: &[f64], rng: &mut TaskRng, out: &mut [f64]) -> Result<()> {
    check_t(t)?;
    match family.gaussian_eigen() {
        Some((evals, evecs)) => {
            let d = family.dim();
            let yv = DVector::from_column_slice(y);
            let coords = evecs.transpose() * yv;
            let z = DVector::from_fn(d, |i, _| {
                let denom = 1.0 - t + t * evals[i];
                let g: f64 = rng.sample(StandardNormal);
                evals[i] / denom * coords[i] + (evals[i] * (1.0 - t) / denom).sqrt() * g
            });
            out.copy_from_slice((evecs * z).as_slice());
        }
        None => {
            for (o, &yj) in out.iter_mut().zip(y) {
                *o = coord_posterior(family, t, yj)?.sample(family, rng)?;
            }
        }
    }
    Ok(())
}

impl TiltedPosterior for Family {
    fn dim(&self) -> usize {
        Family::dim(self)
    }

    fn moments(&self, t: f64, y: &[f64]) -> Result<PosteriorMoments> {
        posterior_moments(self, t, y)
    }

    fn mean(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        if self.kind() == FamilyKind::Gaussian {
            out.copy_from_slice(&posterior_moments(self, t, y)?.mean);
            return Ok(());
        }
        check_t(t)?;
        for (o, &yj) in out.iter_mut().zip(y) {
            *o = coord_posterior(self, t, yj)?.mean_var().0;
        }
        Ok(())
    }

    fn sample(&self, t: f64, y: &[f64], rng: &mut TaskRng, out: &mut [f64]) -> Result<()> {
        draw_posterior(self, t, y, rng, out)
    }

    fn is_product(&self) -> bool {
        Family::is_product(self)
    }
}

/// Log importance weight of a draw `w` of the target for the posterior at `(t, y)`.
#[inline]
pub fn log_weight(t: f64, w: &[f64], y: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut sq = 0.0;
    for (a, b) in w.iter().zip(y) {
        dot += a * b;
        sq += a * a;
    }
    (dot - 0.5 * t * sq) / (1.0 - t)
}

/// Normalizes log-weights in place into probabilities; returns the ESS.
fn normalize(logw: &mut [f64]) -> f64 {
    let mx = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for l in logw.iter_mut() {
        *l = (*l - mx).exp();
        s += *l;
    }
    let mut s2 = 0.0;
    for l in logw.iter_mut() {
        *l /= s;
        s2 += *l * *l;
    }
    1.0 / s2
}

/// Smoothed-score estimate with per-coordinate standard errors.
#[derive(Clone, Debug)]
pub struct SnisEstimate {
    pub drift: Vec<f64>,
    pub se: Vec<f64>,
    pub ess: f64,
}

/// Minimum effective sample size accepted by [`smoothed_score_snis`].
pub const MIN_ESS: f64 = 50.0;

/// Self-normalized importance-sampling estimate of the Föllmer drift of the
/// law produced by `sampler`, from `batch` fresh draws.
pub fn smoothed_score_snis<S: Sampler + ?Sized>(
    sampler: &S,
    t: f64,
    y: &[f64],
    batch: usize,
    seed: u64,
) -> Result<SnisEstimate> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidParameter(format!("t must lie in (0,1), got {t}")));
    }
    if batch < 1000 {
        return Err(Error::Precondition(format!("batch must be at least 1000, got {batch}")));
    }
    let d = sampler.dim();
    let draws = distributions::sample_blocks(d, batch, seed, |rng, row| sampler.draw(rng, row));
    let mut w: Vec<f64> = draws.chunks(d).map(|r| log_weight(t, r, y)).collect();
    let ess = normalize(&mut w);
    if !(ess >= MIN_ESS) {
        return Err(Error::DegenerateWeights { ess });
    }
    let mut m = vec![0.0; d];
    for (wk, r) in w.iter().zip(draws.chunks(d)) {
        for j in 0..d {
            m[j] += wk * r[j];
        }
    }
    // delta-method variance of a ratio estimator
    let mut v = vec![0.0; d];
    for (wk, r) in w.iter().zip(draws.chunks(d)) {
        for j in 0..d {
            v[j] += wk * wk * (r[j] - m[j]) * (r[j] - m[j]);
        }
    }
    Ok(SnisEstimate {
        drift: m.iter().zip(y).map(|(a, b)| (a - b) / (1.0 - t)).collect(),
        se: v.iter().map(|x| x.sqrt() / (1.0 - t)).collect(),
        ess,
    })
}

/// A target represented by a fixed set of exact draws ("atoms"). Posteriors
/// are the importance-reweighted atoms, so drift evaluations along a path
/// are mutually consistent and the final jump is an exact draw from the
/// reweighted atoms.
///
/// In the factorized form each coordinate has its own independent 1-D atoms,
/// which is exact for product laws and keeps the atom spacing small.
#[derive(Clone, Debug)]
pub struct EmpiricalTarget {
    d: usize,
    factorized: bool,
    /// Joint: `n x d` row-major. Factorized: `d` columns of `n` atoms.
    atoms: Vec<f64>,
    sq_norms: Vec<f64>,
    n: usize,
}

impl EmpiricalTarget {
    /// Joint atoms from `n` rows of `sampler`.
    pub fn joint<S: Sampler + ?Sized>(sampler: &S, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Precondition("need at least one atom".into()));
        }
        let d = sampler.dim();
        let atoms = distributions::sample_blocks(d, n, seed, |rng, row| sampler.draw(rng, row));
        Ok(Self::from_rows(d, atoms))
    }

    /// Joint atoms from explicit row-major data.
    pub fn from_rows(d: usize, atoms: Vec<f64>) -> Self {
        let sq_norms = atoms.chunks(d).map(|r| r.iter().map(|v| v * v).sum()).collect();
        let n = atoms.len() / d;
        Self { d, factorized: false, atoms, sq_norms, n }
    }

    /// Independent per-coordinate atoms from explicit columns of equal length.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let d = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if d == 0 || n == 0 || columns.iter().any(|c| c.len() != n) {
            return Err(Error::Precondition("columns must be non-empty and of equal length".into()));
        }
        let atoms = columns.concat();
        let sq_norms = atoms.iter().map(|v| v * v).collect();
        Ok(Self { d, factorized: true, atoms, sq_norms, n })
    }

    /// Per-coordinate atoms from a product sampler.
    pub fn factorized<S: Sampler + ?Sized>(sampler: &S, n: usize, seed: u64) -> Result<Self> {
        if !sampler.is_product() {
            return Err(Error::Precondition("factorized atoms need a product sampler".into()));
        }
        let joint = Self::joint(sampler, n, seed)?;
        let d = joint.d;
        let cols = (0..d).map(|j| joint.atoms.chunks(d).map(|r| r[j]).collect()).collect();
        Self::from_columns(cols)
    }

    pub fn atoms_per_coordinate(&self) -> usize {
        self.n
    }

    /// Normalized weights for coordinate `j` (factorized) or jointly.
    fn weights(&self, t: f64, y: &[f64], j: Option<usize>) -> (Vec<f64>, f64) {
        let c = 1.0 / (1.0 - t);
        let mut w: Vec<f64> = match j {
            Some(j) => {
                let col = &self.atoms[j * self.n..(j + 1) * self.n];
                let sq = &self.sq_norms[j * self.n..(j + 1) * self.n];
                col.iter().zip(sq).map(|(a, s)| (a * y[j] - 0.5 * t * s) * c).collect()
            }
            None => self
                .atoms
                .chunks(self.d)
                .zip(&self.sq_norms)
                .map(|(r, s)| (r.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() - 0.5 * t * s) * c)
                .collect(),
        };
        let ess = normalize(&mut w);
        (w, ess)
    }

    /// Smallest effective sample size over coordinates at `(t, y)`.
    pub fn ess(&self, t: f64, y: &[f64]) -> f64 {
        if self.factorized {
            (0..self.d).map(|j| self.weights(t, y, Some(j)).1).fold(f64::INFINITY, f64::min)
        } else {
            self.weights(t, y, None).1
        }
    }
}

impl TiltedPosterior for EmpiricalTarget {
    fn dim(&self) -> usize {
        self.d
    }

    fn moments(&self, t: f64, y: &[f64]) -> Result<PosteriorMoments> {
        check_t(t)?;
        let d = self.d;
        let mut mean = vec![0.0; d];
        let mut cov = DMatrix::zeros(d, d);
        if self.factorized {
            for j in 0..d {
                let (w, _) = self.weights(t, y, Some(j));
                let col = &self.atoms[j * self.n..(j + 1) * self.n];
                let m: f64 = w.iter().zip(col).map(|(a, b)| a * b).sum();
                let v: f64 = w.iter().zip(col).map(|(a, b)| a * (b - m) * (b - m)).sum();
                mean[j] = m;
                cov[(j, j)] = v;
            }
        } else {
            let (w, _) = self.weights(t, y, None);
            for (wk, r) in w.iter().zip(self.atoms.chunks(d)) {
                for j in 0..d {
                    mean[j] += wk * r[j];
                }
            }
            for (wk, r) in w.iter().zip(self.atoms.chunks(d)) {
                for i in 0..d {
                    for j in 0..=i {
                        cov[(i, j)] += wk * (r[i] - mean[i]) * (r[j] - mean[j]);
                    }
                }
            }
            for i in 0..d {
                for j in 0..i {
                    cov[(j, i)] = cov[(i, j)];
                }
            }
        }
        Ok(PosteriorMoments { t, y: y.to_vec(), mean, cov })
    }

    fn mean(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        check_t(t)?;
        if self.factorized {
            for j in 0..self.d {
                let (w, _) = self.weights(t, y, Some(j));
                let col = &self.atoms[j * self.n..(j + 1) * self.n];
                out[j] = w.iter().zip(col).map(|(a, b)| a * b).sum();
            }
        } else {
            out.fill(0.0);
            let (w, _) = self.weights(t, y, None);
            for (wk, r) in w.iter().zip(self.atoms.chunks(self.d)) {
                for j in 0..self.d {
                    out[j] += wk * r[j];
                }
            }
        }
        Ok(())
    }

    fn sample(&self, t: f64, y: &[f64], rng: &mut TaskRng, out: &mut [f64]) -> Result<()> {
        check_t(t)?;
        let pick = |w: &[f64], rng: &mut TaskRng| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, wk) in w.iter().enumerate() {
                acc += wk;
                if u < acc {
                    return k;
                }
            }
            w.len() - 1
        };
        if self.factorized {
            for j in 0..self.d {
                let (w, _) = self.weights(t, y, Some(j));
                out[j] = self.atoms[j * self.n + pick(&w, rng)];
            }
        } else {
            let (w, _) = self.weights(t, y, None);
            let k = pick(&w, rng);
            out.copy_from_slice(&self.atoms[k * self.d..(k + 1) * self.d]);
        }
        Ok(())
    }

    fn is_product(&self) -> bool {
        self.factorized
    }
}
