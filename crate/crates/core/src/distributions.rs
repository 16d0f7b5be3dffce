//! Log-concave families with exact samplers, densities and scores, plus the
//! smooth potentials used by Langevin dynamics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::parallel;
use crate::rng::{self, Stream, TaskRng};
use crate::special::{self, LN_SQRT_2PI};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Gaussian,
    ProductExponential,
    ProductWeibull,
}

/// JSON form of a family: `{"kind": ..., "d": ..., "beta"?: ..., "sigma"?: [[...]], "poincare_bound"?: ...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Row-major covariance; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poincare_bound: Option<f64>,
}

impl FamilySpec {
    pub fn new(kind: FamilyKind, d: usize) -> Self {
        Self { kind, d, beta: None, sigma: None, poincare_bound: None }
    }

    pub fn build(&self) -> Result<Family> {
        let sigma = match &self.sigma {
            None => None,
            Some(rows) => {
                if rows.len() != self.d || rows.iter().any(|r| r.len() != self.d) {
                    return Err(Error::InvalidParameter(format!("sigma must be {0}x{0}", self.d)));
                }
                Some(DMatrix::from_fn(self.d, self.d, |i, j| rows[i][j]))
            }
        };
        let mut fam = match self.kind {
            FamilyKind::Gaussian => Family::gaussian(sigma.unwrap_or_else(|| DMatrix::identity(self.d, self.d)))?,
            FamilyKind::ProductExponential => {
                reject_sigma(&sigma)?;
                Family::product_exponential(self.d)?
            }
            FamilyKind::ProductWeibull => {
                reject_sigma(&sigma)?;
                let beta = self
                    .beta
                    .ok_or_else(|| Error::InvalidParameter("product_weibull needs beta".into()))?;
                Family::product_weibull(self.d, beta)?
            }
        };
        if let Some(p) = self.poincare_bound {
            if !(p > 0.0) {
                return Err(Error::InvalidParameter(format!("poincare_bound must be positive, got {p}")));
            }
            fam.poincare_bound = p;
        }
        Ok(fam)
    }
}

fn reject_sigma(sigma: &Option<DMatrix<f64>>) -> Result<()> {
    if sigma.is_some() {
        return Err(Error::InvalidParameter("sigma is only meaningful for the gaussian family".into()));
    }
    Ok(())
}

/// Mean and standard deviation of a Weibull variable with shape `beta`, scale 1.
pub fn weibull_standardization(beta: f64) -> (f64, f64) {
    let g1 = special::gamma(1.0 + 1.0 / beta);
    let g2 = special::gamma(1.0 + 2.0 / beta);
    (g1, (g2 - g1 * g1).sqrt())
}

/// Default Poincaré reference `max(1, log^10 d)`; for reporting only.
pub fn default_poincare_bound(d: usize) -> f64 {
    (d as f64).ln().powi(10).max(1.0)
}

#[derive(Clone, Debug)]
struct GaussianParts {
    sigma: DMatrix<f64>,
    /// Eigenvalues (ascending) and eigenvectors of sigma.
    evals: DVector<f64>,
    evecs: DMatrix<f64>,
    /// Any factor L with L L^T = sigma.
    factor: DMatrix<f64>,
    /// Pseudo-inverse and log pseudo-determinant.
    precision: DMatrix<f64>,
    log_pdet: f64,
    rank: usize,
}

/// A centered log-concave family. Immutable once built.
#[derive(Clone, Debug)]
pub struct Family {
    kind: FamilyKind,
    d: usize,
    beta: f64,
    /// Weibull standardization (mean, sd) of the raw variable.
    wb: (f64, f64),
    gauss: Option<GaussianParts>,
    pub poincare_bound: f64,
}

impl Family {
    pub fn gaussian(sigma: DMatrix<f64>) -> Result<Self> {
        let d = sigma.nrows();
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        linalg::check_psd(&sigma, "sigma")?;
        let sigma = linalg::symmetrize(&sigma);
        let eig = SymmetricEigen::new(sigma.clone());
        let tol = 1e-12 * eig.eigenvalues.amax().max(1e-300);
        let evals = eig.eigenvalues.map(|v| if v > tol { v } else { 0.0 });
        let evecs = eig.eigenvectors;
        let factor = match sigma.clone().cholesky() {
            Some(c) => c.l(),
            None => &evecs * DMatrix::from_diagonal(&evals.map(f64::sqrt)),
        };
        let inv = evals.map(|v| if v > 0.0 { 1.0 / v } else { 0.0 });
        let precision = linalg::symmetrize(&(&evecs * DMatrix::from_diagonal(&inv) * evecs.transpose()));
        let rank = evals.iter().filter(|&&v| v > 0.0).count();
        let log_pdet = evals.iter().filter(|&&v| v > 0.0).map(|v| v.ln()).sum();
        Ok(Self {
            kind: FamilyKind::Gaussian,
            d,
            beta: f64::NAN,
            wb: (f64::NAN, f64::NAN),
            gauss: Some(GaussianParts { sigma, evals, evecs, factor, precision, log_pdet, rank }),
            poincare_bound: default_poincare_bound(d),
        })
    }

    pub fn standard_gaussian(d: usize) -> Result<Self> {
        Self::gaussian(DMatrix::identity(d, d))
    }

    pub fn product_exponential(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        Ok(Self {
            kind: FamilyKind::ProductExponential,
            d,
            beta: f64::NAN,
            wb: (f64::NAN, f64::NAN),
            gauss: None,
            poincare_bound: default_poincare_bound(d),
        })
    }

    pub fn product_weibull(d: usize, beta: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if !(beta >= 2.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("Weibull shape must be finite and >= 2, got {beta}")));
        }
        Ok(Self {
            kind: FamilyKind::ProductWeibull,
            d,
            beta,
            wb: weibull_standardization(beta),
            gauss: None,
            poincare_bound: default_poincare_bound(d),
        })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn beta(&self) -> Option<f64> {
        (self.kind == FamilyKind::ProductWeibull).then_some(self.beta)
    }

    pub fn is_product(&self) -> bool {
        self.kind != FamilyKind::Gaussian
    }

    /// Short identifier recorded alongside samples.
    pub fn label(&self) -> String {
        match self.kind {
            FamilyKind::Gaussian => format!("gaussian(d={})", self.d),
            FamilyKind::ProductExponential => format!("product_exponential(d={})", self.d),
            FamilyKind::ProductWeibull => format!("product_weibull(d={},beta={})", self.d, self.beta),
        }
    }

    pub fn spec(&self) -> FamilySpec {
        let sigma = self.gauss.as_ref().and_then(|g| {
            let id = DMatrix::identity(self.d, self.d);
            ((&g.sigma - id).abs().max() > 0.0)
                .then(|| (0..self.d).map(|i| g.sigma.row(i).iter().copied().collect()).collect())
        });
        FamilySpec {
            kind: self.kind,
            d: self.d,
            beta: self.beta(),
            sigma,
            poincare_bound: Some(self.poincare_bound),
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        match &self.gauss {
            Some(g) => g.sigma.clone(),
            None => DMatrix::identity(self.d, self.d),
        }
    }

    pub(crate) fn gaussian_eigen(&self) -> Option<(&DVector<f64>, &DMatrix<f64>)> {
        self.gauss.as_ref().map(|g| (&g.evals, &g.evecs))
    }

    /// Left edge of the support of one coordinate of a product family.
    pub fn coord_lower(&self) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => f64::NEG_INFINITY,
            FamilyKind::ProductExponential => -1.0,
            FamilyKind::ProductWeibull => -self.wb.0 / self.wb.1,
        }
    }

    /// Log-density of a single coordinate (product families only).
    ///
    /// The exponential density is taken right-continuous at its edge, so
    /// `-1` itself has log-density 0; the Weibull density vanishes at its edge.
    pub fn coord_log_density(&self, x: f64) -> f64 {
        match self.kind {
            FamilyKind::ProductExponential => {
                if x >= -1.0 { -(x + 1.0) } else { f64::NEG_INFINITY }
            }
            FamilyKind::ProductWeibull => {
                let (m, s) = self.wb;
                let w = m + s * x;
                if w <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let b = self.beta;
                s.ln() + b.ln() + (b - 1.0) * w.ln() - w.powf(b)
            }
            FamilyKind::Gaussian => -0.5 * x * x - LN_SQRT_2PI,
        }
    }

    /// Derivative of [`Self::coord_log_density`]; `None` outside the open support.
    pub fn coord_score(&self, x: f64) -> Option<f64> {
        match self.kind {
            FamilyKind::ProductExponential => (x > -1.0).then_some(-1.0),
            FamilyKind::ProductWeibull => {
                let (m, s) = self.wb;
                let w = m + s * x;
                (w > 0.0).then(|| s * ((self.beta - 1.0) / w - self.beta * w.powf(self.beta - 1.0)))
            }
            FamilyKind::Gaussian => Some(-x),
        }
    }

    /// Second derivative of the coordinate potential `-log density`.
    pub fn coord_curvature(&self, x: f64) -> Option<f64> {
        match self.kind {
            FamilyKind::ProductExponential => (x > -1.0).then_some(0.0),
            FamilyKind::ProductWeibull => {
                let (m, s) = self.wb;
                let w = m + s * x;
                let b = self.beta;
                (w > 0.0).then(|| s * s * ((b - 1.0) / (w * w) + b * (b - 1.0) * w.powf(b - 2.0)))
            }
            FamilyKind::Gaussian => Some(1.0),
        }
    }

    /// Natural log of the Lebesgue density; `-inf` outside the support.
    ///
    /// A singular Gaussian is treated as a density on the range of its
    /// covariance (pseudo-determinant), and is `-inf` off that subspace.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.d, "dimension mismatch");
        match &self.gauss {
            Some(g) => {
                let xv = DVector::from_column_slice(x);
                if g.rank < self.d {
                    let coords = g.evecs.transpose() * &xv;
                    let scale = xv.amax().max(1.0);
                    if coords.iter().zip(g.evals.iter()).any(|(c, &e)| e == 0.0 && c.abs() > 1e-9 * scale) {
                        return f64::NEG_INFINITY;
                    }
                }
                -0.5 * xv.dot(&(&g.precision * &xv)) - 0.5 * g.log_pdet - g.rank as f64 * LN_SQRT_2PI
            }
            None => x.iter().map(|&v| self.coord_log_density(v)).sum(),
        }
    }

    /// Gradient of the log-density; errors on the boundary or outside.
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(x.len(), self.d, "dimension mismatch");
        match &self.gauss {
            Some(g) => {
                let xv = DVector::from_column_slice(x);
                Ok((-(&g.precision * xv)).iter().copied().collect())
            }
            None => x
                .iter()
                .enumerate()
                .map(|(j, &v)| self.coord_score(v).ok_or(Error::OutsideSupport { coordinate: j, value: v }))
                .collect(),
        }
    }

    /// Draws one vector into `out`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.gauss {
            Some(g) => {
                let xi = DVector::from_fn(self.d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let v = &g.factor * xi;
                out.copy_from_slice(v.as_slice());
            }
            None => {
                for o in out.iter_mut() {
                    // 1 - U lies in (0, 1], so the log is finite.
                    let e = -(1.0 - rng.random::<f64>()).ln();
                    *o = match self.kind {
                        FamilyKind::ProductExponential => e - 1.0,
                        _ => (e.powf(1.0 / self.beta) - self.wb.0) / self.wb.1,
                    };
                }
            }
        }
    }

    /// `n` i.i.d. rows, deterministic in `seed` and independent of threading.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleMatrix> {
        if n == 0 {
            return Err(Error::Precondition("sample size must be at least 1".into()));
        }
        let data = sample_blocks(self.d, n, seed, |rng, row| self.draw(rng, row));
        Ok(SampleMatrix { n, d: self.d, data, seed, family_id: self.label() })
    }
}

const BLOCK: usize = 4096;

/// Fills an `n x d` row-major buffer in fixed-size blocks, one derived stream
/// per block.
pub fn sample_blocks(
    d: usize,
    n: usize,
    seed: u64,
    draw: impl Fn(&mut TaskRng, &mut [f64]) + Sync,
) -> Vec<f64> {
    let blocks = n.div_ceil(BLOCK);
    let chunks = parallel::map_indexed(blocks, |b| {
        let rows = BLOCK.min(n - b * BLOCK);
        let mut rng = rng::derived_rng(seed, Stream::Sample, b as u64);
        let mut buf = vec![0.0; rows * d];
        for row in buf.chunks_mut(d) {
            draw(&mut rng, row);
        }
        buf
    });
    chunks.concat()
}

/// An `n x d` block of i.i.d. draws with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    pub n: usize,
    pub d: usize,
    /// Row-major.
    pub data: Vec<f64>,
    pub seed: u64,
    pub family_id: String,
}

impl SampleMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.d)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.n as f64);
        m
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let mut c = DMatrix::zeros(self.d, self.d);
        for r in self.rows() {
            for i in 0..self.d {
                for j in 0..=i {
                    c[(i, j)] += (r[i] - m[i]) * (r[j] - m[j]);
                }
            }
        }
        for i in 0..self.d {
            for j in 0..=i {
                c[(i, j)] /= (self.n - 1) as f64;
                c[(j, i)] = c[(i, j)];
            }
        }
        c
    }
}

/// Anything that can produce i.i.d. draws of a centered random vector.
pub trait Sampler: Sync {
    fn dim(&self) -> usize;
    fn draw(&self, rng: &mut TaskRng, out: &mut [f64]);
    /// True when coordinates are independent.
    fn is_product(&self) -> bool;
    fn label(&self) -> String;
}

impl Sampler for Family {
    fn dim(&self) -> usize {
        self.d
    }
    fn draw(&self, rng: &mut TaskRng, out: &mut [f64]) {
        Family::draw(self, rng, out)
    }
    fn is_product(&self) -> bool {
        Family::is_product(self)
    }
    fn label(&self) -> String {
        Family::label(self)
    }
}

/// The standardized sum `n^{-1/2} (X_1 + ... + X_n)` of i.i.d. family draws.
#[derive(Clone, Debug)]
pub struct SumSampler {
    pub family: Family,
    pub n: usize,
    gamma: Option<Gamma<f64>>,
}

impl SumSampler {
    pub fn new(family: Family, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Precondition("number of summands must be at least 1".into()));
        }
        let gamma = (family.kind() == FamilyKind::ProductExponential)
            .then(|| Gamma::new(n as f64, 1.0).expect("valid gamma shape"));
        Ok(Self { family, n, gamma })
    }
}

impl Sampler for SumSampler {
    fn dim(&self) -> usize {
        self.family.dim()
    }

    fn draw(&self, rng: &mut TaskRng, out: &mut [f64]) {
        let sn = (self.n as f64).sqrt();
        match (self.family.kind(), &self.gamma) {
            // Gaussian sums are exactly Gaussian with the same covariance.
            (FamilyKind::Gaussian, _) => self.family.draw(rng, out),
            (FamilyKind::ProductExponential, Some(g)) => {
                for o in out.iter_mut() {
                    *o = (g.sample(rng) - self.n as f64) / sn;
                }
            }
            _ => {
                let mut buf = vec![0.0; out.len()];
                out.iter_mut().for_each(|o| *o = 0.0);
                for _ in 0..self.n {
                    self.family.draw(rng, &mut buf);
                    for (o, b) in out.iter_mut().zip(&buf) {
                        *o += b;
                    }
                }
                out.iter_mut().for_each(|o| *o /= sn);
            }
        }
    }

    fn is_product(&self) -> bool {
        self.family.is_product()
    }

    fn label(&self) -> String {
        format!("sum(n={}, {})", self.n, self.family.label())
    }
}

/// A twice-differentiable potential `V = -log density` (up to a constant),
/// the input to Langevin dynamics.
pub trait Potential: Sync {
    fn dim(&self) -> usize;

    /// Writes `grad V(x)` into `out`.
    fn grad(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    /// Writes `Hess V(x)` into `out`. Defaults to central differences of
    /// [`Potential::grad`] with step [`HESSIAN_FD_STEP`].
    fn hessian(&self, x: &[f64], out: &mut DMatrix<f64>) -> Result<()> {
        fd_hessian(self, x, HESSIAN_FD_STEP, out)
    }

    /// Largest known `eps` with `Hess V >= eps I`, if any.
    fn uniform_convexity(&self) -> Option<f64> {
        None
    }
}

pub const HESSIAN_FD_STEP: f64 = 1e-5;

pub fn fd_hessian<P: Potential + ?Sized>(p: &P, x: &[f64], h: f64, out: &mut DMatrix<f64>) -> Result<()> {
    let d = p.dim();
    let mut xp = x.to_vec();
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    for k in 0..d {
        xp[k] = x[k] + h;
        p.grad(&xp, &mut gp)?;
        xp[k] = x[k] - h;
        p.grad(&xp, &mut gm)?;
        xp[k] = x[k];
        for i in 0..d {
            out[(i, k)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let sym = linalg::symmetrize(out);
    out.copy_from(&sym);
    Ok(())
}

impl Potential for Family {
    fn dim(&self) -> usize {
        self.d
    }

    fn grad(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.gauss {
            Some(_) => {
                let s = self.score(x)?;
                for (o, v) in out.iter_mut().zip(s) {
                    *o = -v;
                }
            }
            None => {
                for (j, (o, &v)) in out.iter_mut().zip(x).enumerate() {
                    *o = -self.coord_score(v).ok_or(Error::OutsideSupport { coordinate: j, value: v })?;
                }
            }
        }
        Ok(())
    }

    fn hessian(&self, x: &[f64], out: &mut DMatrix<f64>) -> Result<()> {
        match &self.gauss {
            Some(g) => out.copy_from(&g.precision),
            None => {
                out.fill(0.0);
                for (j, &v) in x.iter().enumerate() {
                    out[(j, j)] = self.coord_curvature(v).ok_or(Error::OutsideSupport { coordinate: j, value: v })?;
                }
            }
        }
        Ok(())
    }

    fn uniform_convexity(&self) -> Option<f64> {
        match (self.kind, &self.gauss) {
            (FamilyKind::Gaussian, Some(g)) => {
                let top = g.evals.max();
                (g.rank == self.d && top > 0.0).then(|| 1.0 / top)
            }
            (FamilyKind::ProductExponential, _) => None,
            // curvature of the Weibull coordinate is bounded below by the
            // quantity computed in `weibull_min_curvature`
            (FamilyKind::ProductWeibull, _) => Some(weibull_min_curvature(self.beta, self.wb.1)),
            _ => None,
        }
    }
}

/// `inf_x` of the standardized Weibull potential's second derivative.
pub fn weibull_min_curvature(beta: f64, sd: f64) -> f64 {
    // h(w) = (b-1)/w^2 + b(b-1) w^(b-2) is minimized where w^b = 2/(b(b-2)),
    // and for b = 2 it decreases to its infimum 2 as w -> inf.
    let b = beta;
    let h = if (b - 2.0).abs() < 1e-12 {
        2.0
    } else {
        let w = (2.0 / (b * (b - 2.0))).powf(1.0 / b);
        (b - 1.0) / (w * w) + b * (b - 1.0) * w.powf(b - 2.0)
    };
    sd * sd * h
}

/// A one-dimensional density known through its log (possibly unnormalized).
pub trait LogDensity1d: Sync {
    fn log_density(&self, x: f64) -> f64;
    /// Closed-interval support `(lower, upper)`.
    fn support(&self) -> (f64, f64);
    fn mean(&self) -> f64;
}

impl LogDensity1d for Family {
    fn log_density(&self, x: f64) -> f64 {
        match &self.gauss {
            Some(g) => {
                let v = g.sigma[(0, 0)];
                -0.5 * x * x / v - 0.5 * v.ln() - LN_SQRT_2PI
            }
            None => self.coord_log_density(x),
        }
    }
    fn support(&self) -> (f64, f64) {
        (self.coord_lower(), f64::INFINITY)
    }
    fn mean(&self) -> f64 {
        0.0
    }
}

/// The standardized exponential smoothed by an independent Gaussian:
/// `Z = sqrt(1-a) (E - 1) + sqrt(a) G` per coordinate. Unit variance, smooth,
/// log-concave; its density is exponentially-modified Gaussian.
#[derive(Clone, Copy, Debug)]
pub struct SmoothedExponential {
    pub a: f64,
    pub d: usize,
    lambda: f64,
    sigma: f64,
    shift: f64,
}

impl SmoothedExponential {
    pub fn new(a: f64, d: usize) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParameter(format!("smoothing a must lie in (0,1), got {a}")));
        }
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        let s = (1.0 - a).sqrt();
        Ok(Self { a, d, lambda: 1.0 / s, sigma: a.sqrt(), shift: s })
    }

    #[inline]
    fn u(&self, z: f64) -> f64 {
        (self.lambda * self.sigma * self.sigma - (z + self.shift)) / (special::SQRT_2 * self.sigma)
    }

    /// Log-density of one coordinate.
    pub fn coord_log_density(&self, z: f64) -> f64 {
        let (l, s2) = (self.lambda, self.sigma * self.sigma);
        let zp = z + self.shift;
        let u = self.u(z);
        let tail = if u < 0.0 { special::erfc(u).ln() } else { special::erfcx(u).ln() - u * u };
        (0.5 * l).ln() + 0.5 * l * (l * s2 - 2.0 * zp) + tail
    }

    /// Derivative of the coordinate log-density.
    pub fn coord_score(&self, z: f64) -> f64 {
        let u = self.u(z);
        -self.lambda + (2.0 / std::f64::consts::PI).sqrt() / (self.sigma * special::erfcx(u))
    }

    /// Second derivative of the coordinate potential.
    pub fn coord_curvature(&self, z: f64) -> f64 {
        let u = self.u(z);
        let r = 1.0 / special::erfcx(u);
        let sp = std::f64::consts::PI.sqrt();
        2.0 * r / (sp * self.sigma * self.sigma) * (r / sp - u)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for o in out.iter_mut() {
            let e = -(1.0 - rng.random::<f64>()).ln();
            let g: f64 = rng.sample(StandardNormal);
            *o = self.shift * (e - 1.0) + self.sigma * g;
        }
    }
}

impl Potential for SmoothedExponential {
    fn dim(&self) -> usize {
        self.d
    }
    fn grad(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = -self.coord_score(v);
        }
        Ok(())
    }
    fn hessian(&self, x: &[f64], out: &mut DMatrix<f64>) -> Result<()> {
        out.fill(0.0);
        for (j, &v) in x.iter().enumerate() {
            out[(j, j)] = self.coord_curvature(v);
        }
        Ok(())
    }
}

impl LogDensity1d for SmoothedExponential {
    fn log_density(&self, x: f64) -> f64 {
        self.coord_log_density(x)
    }
    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
    fn mean(&self) -> f64 {
        0.0
    }
}

impl Sampler for SmoothedExponential {
    fn dim(&self) -> usize {
        self.d
    }
    fn draw(&self, rng: &mut TaskRng, out: &mut [f64]) {
        SmoothedExponential::draw(self, rng, out)
    }
    fn is_product(&self) -> bool {
        true
    }
    fn label(&self) -> String {
        format!("smoothed_exponential(d={},a={})", self.d, self.a)
    }
}

/// `V + eps |x|^2 / 2`: multiplies a density by a Gaussian factor, making it
/// `eps`-uniformly log-concave.
#[derive(Clone, Debug)]
pub struct Tilted<P> {
    pub inner: P,
    pub eps: f64,
}

impl<P: Potential> Tilted<P> {
    pub fn new(inner: P, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("tilt must be positive, got {eps}")));
        }
        Ok(Self { inner, eps })
    }
}

impl<P: Potential> Potential for Tilted<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn grad(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.inner.grad(x, out)?;
        for (o, &v) in out.iter_mut().zip(x) {
            *o += self.eps * v;
        }
        Ok(())
    }
    fn hessian(&self, x: &[f64], out: &mut DMatrix<f64>) -> Result<()> {
        self.inner.hessian(x, out)?;
        for j in 0..x.len() {
            out[(j, j)] += self.eps;
        }
        Ok(())
    }
    fn uniform_convexity(&self) -> Option<f64> {
        Some(self.eps + self.inner.uniform_convexity().unwrap_or(0.0))
    }
}

impl LogDensity1d for Tilted<SmoothedExponential> {
    fn log_density(&self, x: f64) -> f64 {
        self.inner.coord_log_density(x) - 0.5 * self.eps * x * x
    }
    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
    /// Not centered; computed by quadrature.
    fn mean(&self) -> f64 {
        let lc = crate::quadrature::LogConcave1d::new(|x| self.log_density(x), f64::NEG_INFINITY, f64::INFINITY);
        lc.moments(0.0, 1.0, 1e-10).map(|m| m.mean).unwrap_or(f64::NAN)
    }
}
