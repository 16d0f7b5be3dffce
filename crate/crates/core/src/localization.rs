//! Stochastic localization along the Föllmer process: the covariance flow
//! `Gamma_t`, matrix geometric means, the martingale-embedding coupling and
//! the composite CLT coupling built on top of it.
//!
//! Paths on `[0, eps]` are sampled exactly: the Föllmer process has the law of
//! a Brownian bridge from 0 to an exact draw `X` of the target, so
//! `Y_t = t X + W_t - t W_1` on any grid. The posterior means `m(t, Y_t)` and
//! covariances along such a path are therefore exact, and `X - m(eps, Y_eps)`
//! is an exact draw of the centred posterior residual given `Y_eps`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use std::fmt::Write as _;

use crate::distributions::{Family, FamilyKind};
use crate::error::{Error, Result};
use crate::linalg;
use crate::parallel;
use crate::posterior::{self, EmpiricalTarget, TiltedPosterior};
use crate::rng::{self, Stream, TaskRng};
use crate::sde::{self, FollmerConfig};
use crate::stats;

/// State of the localization flow at one time.
#[derive(Clone, Debug)]
pub struct LocalizationSnapshot {
    pub t: f64,
    pub y: Vec<f64>,
    pub m: Vec<f64>,
    pub gamma: DMatrix<f64>,
}

/// `Cov(posterior at (t, y)) / (1 - t)`.
pub fn gamma_matrix<T: TiltedPosterior + ?Sized>(target: &T, t: f64, y: &[f64]) -> Result<DMatrix<f64>> {
    let pm = target.moments(t, y)?;
    Ok(pm.cov / (1.0 - t))
}

pub fn snapshot<T: TiltedPosterior + ?Sized>(target: &T, t: f64, y: &[f64]) -> Result<LocalizationSnapshot> {
    let pm = target.moments(t, y)?;
    Ok(LocalizationSnapshot { t, y: y.to_vec(), m: pm.mean, gamma: pm.cov / (1.0 - t) })
}

/// `A # B`; errors if `A` is singular.
pub fn matrix_geometric_mean(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::check_psd(b, "B")?;
    linalg::geometric_mean(a, b)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct MgmCheck {
    /// Smallest eigenvalue of `(A-B) A^{-1} (A-B) - (A + B - 2 A#B)`.
    pub min_eigenvalue: f64,
    pub holds: bool,
}

pub fn mgm_inequality_check(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<MgmCheck> {
    let g = matrix_geometric_mean(a, b)?;
    let diff = a - b;
    let lhs = &diff * linalg::sym_inv(a) * &diff;
    let rhs = a + b - g * 2.0;
    let min_eigenvalue = linalg::min_eigenvalue(&linalg::symmetrize(&(lhs - rhs)));
    Ok(MgmCheck { min_eigenvalue, holds: min_eigenvalue >= -1e-10 })
}

/// Paired draws `(W, Z)` with per-pair diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledPairs {
    pub d: usize,
    /// `n_pairs x d`, row-major.
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub construction: String,
    pub diagnostic_names: Vec<String>,
    /// `n_pairs x diagnostic_names.len()`, row-major.
    pub diagnostics: Vec<f64>,
    pub seed: u64,
}

impl CoupledPairs {
    pub fn new(d: usize, construction: &str, seed: u64, diagnostic_names: &[&str]) -> Self {
        Self {
            d,
            w: Vec::new(),
            z: Vec::new(),
            construction: construction.to_string(),
            diagnostic_names: diagnostic_names.iter().map(|s| s.to_string()).collect(),
            diagnostics: Vec::new(),
            seed,
        }
    }

    pub fn push(&mut self, w: &[f64], z: &[f64], diag: &[f64]) {
        debug_assert_eq!(diag.len(), self.diagnostic_names.len());
        self.w.extend_from_slice(w);
        self.z.extend_from_slice(z);
        self.diagnostics.extend_from_slice(diag);
    }

    pub fn len(&self) -> usize {
        self.w.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn w_row(&self, i: usize) -> &[f64] {
        &self.w[i * self.d..(i + 1) * self.d]
    }

    pub fn z_row(&self, i: usize) -> &[f64] {
        &self.z[i * self.d..(i + 1) * self.d]
    }

    pub fn w_column(&self, j: usize) -> Vec<f64> {
        self.w.chunks(self.d).map(|r| r[j]).collect()
    }

    pub fn z_column(&self, j: usize) -> Vec<f64> {
        self.z.chunks(self.d).map(|r| r[j]).collect()
    }

    /// Column of a named diagnostic.
    pub fn diagnostic(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.diagnostic_names.iter().position(|n| n == name)?;
        let m = self.diagnostic_names.len();
        Some(self.diagnostics.chunks(m).map(|r| r[k]).collect())
    }

    /// Applies `x -> A x` to both sides.
    pub fn transform(&self, a: &DMatrix<f64>) -> CoupledPairs {
        let map = |v: &[f64]| -> Vec<f64> { (a * DVector::from_column_slice(v)).iter().copied().collect() };
        let mut out = CoupledPairs {
            d: a.nrows(),
            w: Vec::with_capacity(self.len() * a.nrows()),
            z: Vec::with_capacity(self.len() * a.nrows()),
            construction: self.construction.clone(),
            diagnostic_names: self.diagnostic_names.clone(),
            diagnostics: self.diagnostics.clone(),
            seed: self.seed,
        };
        for i in 0..self.len() {
            out.w.extend(map(self.w_row(i)));
            out.z.extend(map(self.z_row(i)));
        }
        out
    }

    /// CSV with columns `w_1..w_d, z_1..z_d, <diagnostics>`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let head: Vec<String> = (1..=self.d)
            .map(|j| format!("w_{j}"))
            .chain((1..=self.d).map(|j| format!("z_{j}")))
            .chain(self.diagnostic_names.iter().cloned())
            .collect();
        s.push_str(&head.join(","));
        s.push('\n');
        let m = self.diagnostic_names.len();
        for i in 0..self.len() {
            let row: Vec<String> = self
                .w_row(i)
                .iter()
                .chain(self.z_row(i))
                .chain(&self.diagnostics[i * m..(i + 1) * m])
                .map(|v| v.to_string())
                .collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

/// Uniform grid on `[0, eps]`.
fn embed_grid(eps: f64, steps: usize) -> Result<Vec<f64>> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1/2], got {eps}")));
    }
    if steps == 0 {
        return Err(Error::Precondition("steps must be at least 1".into()));
    }
    Ok((0..=steps).map(|k| eps * k as f64 / steps as f64).collect())
}

/// One exact Föllmer path on `grid`, reported through `visit(k, y_k)`.
/// Returns the endpoint draw `X = Y_1`.
fn exact_bridge(family: &Family, grid: &[f64], rng: &mut TaskRng, mut visit: impl FnMut(usize, &[f64]) -> Result<()>) -> Result<Vec<f64>> {
    let d = family.dim();
    let mut x = vec![0.0; d];
    family.draw(rng, &mut x);
    // Brownian motion on the grid, then its value at 1.
    let steps = grid.len() - 1;
    let mut w = vec![vec![0.0; d]; steps + 1];
    for k in 0..steps {
        let sd = (grid[k + 1] - grid[k]).sqrt();
        for j in 0..d {
            w[k + 1][j] = w[k][j] + sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let rest = (1.0 - grid[steps]).sqrt();
    let w1: Vec<f64> = (0..d).map(|j| w[steps][j] + rest * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut y = vec![0.0; d];
    for k in 0..=steps {
        let t = grid[k];
        for j in 0..d {
            y[j] = t * x[j] + w[k][j] - t * w1[j];
        }
        visit(k, &y).map_err(|e| Error::at_step(k, e))?;
    }
    Ok(x)
}

/// Frozen ensemble statistics used by the embedding.
#[derive(Clone, Debug)]
pub struct Pilot {
    pub grid: Vec<f64>,
    pub n_paths: usize,
    /// `E[Gamma_{t_k}^2]` for `k = 0..steps` (left points).
    pub e_gamma2: Vec<DMatrix<f64>>,
    sqrt_e: Vec<DMatrix<f64>>,
    inv_sqrt_e: Vec<DMatrix<f64>>,
    /// `E Cov(posterior at (eps, Y_eps))` with entrywise standard errors.
    pub sigma_eps: DMatrix<f64>,
    pub sigma_eps_se: DMatrix<f64>,
    /// `sum_k E[Gamma_{t_k}^2] dt_k`: the declared covariance of `Z_eps`.
    pub cov_z_eps: DMatrix<f64>,
    pub cov_z_eps_se: DMatrix<f64>,
    /// Per-path `Cov(posterior at eps) + sum_k Gamma_k^2 dt_k`, averaged,
    /// with entrywise standard errors. Its expectation is the target covariance.
    pub split_total: DMatrix<f64>,
    pub split_total_se: DMatrix<f64>,
    pub min_eigenvalue_e_gamma2: f64,
}

struct PilotPath {
    gamma2: Vec<DMatrix<f64>>,
    cov_eps: DMatrix<f64>,
    qv: DMatrix<f64>,
}

fn mean_and_se(mats: &[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = mats.len() as f64;
    let (r, c) = mats[0].shape();
    let mut mean = DMatrix::zeros(r, c);
    for m in mats {
        mean += m;
    }
    mean /= n;
    let mut var = DMatrix::zeros(r, c);
    for m in mats {
        let dlt = m - &mean;
        var += dlt.component_mul(&dlt);
    }
    var /= (n - 1.0).max(1.0);
    (mean, var.map(|v| (v / n).sqrt()))
}

/// Runs `n_paths` exact Föllmer paths on a uniform `steps`-grid over `[0, eps]`.
pub fn run_pilot(family: &Family, eps: f64, steps: usize, n_paths: usize, seed: u64) -> Result<Pilot> {
    if n_paths < 2 {
        return Err(Error::Precondition("pilot needs at least two paths".into()));
    }
    let grid = embed_grid(eps, steps)?;
    let paths = parallel::try_map_indexed(n_paths, |p| {
        let mut rng = rng::derived_rng(seed, Stream::Pilot, p as u64);
        let mut gamma2 = Vec::with_capacity(steps);
        let mut qv = DMatrix::zeros(family.dim(), family.dim());
        let mut cov_eps = DMatrix::zeros(family.dim(), family.dim());
        exact_bridge(family, &grid, &mut rng, |k, y| {
            let pm = posterior::posterior_moments(family, grid[k], y)?;
            if k < steps {
                let g = &pm.cov / (1.0 - grid[k]);
                let g2 = linalg::symmetrize(&(&g * &g));
                qv += &g2 * (grid[k + 1] - grid[k]);
                gamma2.push(g2);
            } else {
                cov_eps = pm.cov;
            }
            Ok(())
        })?;
        Ok::<_, Error>(PilotPath { gamma2, cov_eps, qv })
    })?;
    let e_gamma2: Vec<DMatrix<f64>> = (0..steps)
        .map(|k| {
            let mut s = DMatrix::zeros(family.dim(), family.dim());
            for p in &paths {
                s += &p.gamma2[k];
            }
            linalg::symmetrize(&(s / n_paths as f64))
        })
        .collect();
    let mut min_eig = f64::INFINITY;
    for (k, e) in e_gamma2.iter().enumerate() {
        linalg::check_psd(e, &format!("E[Gamma^2] at step {k}"))?;
        min_eig = min_eig.min(linalg::min_eigenvalue(e));
    }
    let covs: Vec<DMatrix<f64>> = paths.iter().map(|p| p.cov_eps.clone()).collect();
    let qvs: Vec<DMatrix<f64>> = paths.iter().map(|p| p.qv.clone()).collect();
    let totals: Vec<DMatrix<f64>> = paths.iter().map(|p| &p.cov_eps + &p.qv).collect();
    let (sigma_eps, sigma_eps_se) = mean_and_se(&covs);
    let (cov_z_eps, cov_z_eps_se) = mean_and_se(&qvs);
    let (split_total, split_total_se) = mean_and_se(&totals);
    if linalg::min_eigenvalue(&sigma_eps) <= 0.0 {
        return Err(Error::NotPositiveDefinite("pilot estimate of Sigma_eps".into()));
    }
    Ok(Pilot {
        sqrt_e: e_gamma2.iter().map(linalg::sym_sqrt).collect(),
        inv_sqrt_e: e_gamma2.iter().map(linalg::sym_inv_sqrt).collect(),
        grid,
        n_paths,
        e_gamma2,
        sigma_eps,
        sigma_eps_se,
        cov_z_eps,
        cov_z_eps_se,
        split_total,
        split_total_se,
        min_eigenvalue_e_gamma2: min_eig,
    })
}

/// Monte Carlo mean of `Gamma_t` over exact Föllmer marginals
/// `Y_t = t X + sqrt(t(1-t)) G`, with entrywise standard errors.
pub fn mean_gamma(family: &Family, t: f64, n_paths: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if n_paths < 2 {
        return Err(Error::Precondition("need at least two paths".into()));
    }
    let d = family.dim();
    let mats = parallel::try_map_indexed(n_paths, |p| {
        let mut rng = rng::derived_rng(seed, Stream::Path, p as u64);
        let mut x = vec![0.0; d];
        family.draw(&mut rng, &mut x);
        let s = (t * (1.0 - t)).sqrt();
        let y: Vec<f64> = x.iter().map(|v| t * v + s * rng.sample::<f64, _>(StandardNormal)).collect();
        gamma_matrix(family, t, &y)
    })?;
    Ok(mean_and_se(&mats))
}

/// One draw of the embedding together with what the composite coupling needs.
struct EmbedDraw {
    m_sum: Vec<f64>,
    z: Vec<f64>,
    /// `Y_eps^{(i)}`, `n x d` row-major.
    y_eps: Vec<f64>,
    orthogonality_error: f64,
    qv_error: f64,
}

fn embed_draw(family: &Family, pilot: &Pilot, n: usize, rng: &mut TaskRng) -> Result<EmbedDraw> {
    let d = family.dim();
    let grid = &pilot.grid;
    let steps = grid.len() - 1;
    let mut sum_m = vec![vec![0.0; d]; steps + 1];
    let mut sum_g2 = vec![DMatrix::<f64>::zeros(d, d); steps];
    let mut y_eps = Vec::with_capacity(n * d);
    let mut qv_direct = 0.0;
    for _ in 0..n {
        exact_bridge(family, grid, rng, |k, y| {
            let pm = posterior::posterior_moments(family, grid[k], y)?;
            for j in 0..d {
                sum_m[k][j] += pm.mean[j];
            }
            if k < steps {
                let g = &pm.cov / (1.0 - grid[k]);
                let g2 = linalg::symmetrize(&(&g * &g));
                qv_direct += g2[(0, 0)] * (grid[k + 1] - grid[k]);
                sum_g2[k] += g2;
            } else {
                y_eps.extend_from_slice(y);
            }
            Ok(())
        })?;
    }
    let sn = (n as f64).sqrt();
    let mut z = DVector::zeros(d);
    let mut orth: f64 = 0.0;
    let mut qv_scheme = 0.0;
    for k in 0..steps {
        let gbar2 = linalg::symmetrize(&(&sum_g2[k] / n as f64));
        linalg::check_psd(&gbar2, &format!("averaged Gamma^2 at step {k}"))?;
        let gbar = linalg::sym_sqrt(&gbar2);
        let cond = linalg::condition_number(&gbar);
        if !(cond <= 1e12) {
            return Err(Error::SingularStep { step: k, condition: cond });
        }
        let gbar_inv = linalg::sym_inv(&gbar);
        let dm = DVector::from_fn(d, |j, _| (sum_m[k + 1][j] - sum_m[k][j]) / sn);
        let db = &gbar_inv * dm;
        let inner = linalg::sym_sqrt(&linalg::symmetrize(&(&pilot.inv_sqrt_e[k] * &gbar2 * &pilot.inv_sqrt_e[k])));
        let u = inner * &pilot.sqrt_e[k] * &gbar_inv;
        orth = orth.max((u.transpose() * &u - DMatrix::identity(d, d)).abs().max());
        z += &pilot.sqrt_e[k] * &u * db;
        qv_scheme += (&gbar * &gbar)[(0, 0)] * (grid[k + 1] - grid[k]);
    }
    let m_sum = (0..d).map(|j| (sum_m[steps][j] - sum_m[0][j]) / sn).collect();
    Ok(EmbedDraw {
        m_sum,
        z: z.iter().copied().collect(),
        y_eps,
        orthogonality_error: orth,
        qv_error: (qv_scheme - qv_direct / n as f64).abs(),
    })
}

/// Settings for [`martingale_embed_couple`].
#[derive(Clone, Debug, PartialEq)]
pub struct EmbedConfig {
    /// Number of summands.
    pub n: usize,
    pub eps: f64,
    pub steps: usize,
    pub n_pairs: usize,
    pub pilot: usize,
}

#[derive(Clone, Debug)]
pub struct EmbedOutput {
    /// `(n^{-1/2} sum_i m_eps^{(i)}, Z_eps)`.
    pub pairs: CoupledPairs,
    pub pilot: Pilot,
}

fn check_embed(family: &Family, n: usize, n_pairs: usize, pilot: usize) -> Result<()> {
    if n == 0 || n_pairs == 0 {
        return Err(Error::Precondition("n and n_pairs must be at least 1".into()));
    }
    if pilot < 1000 {
        return Err(Error::Precondition(format!("pilot must have at least 1000 paths, got {pilot}")));
    }
    let cov = family.covariance();
    if (cov - DMatrix::identity(family.dim(), family.dim())).abs().max() > 1e-12 {
        return Err(Error::Precondition("the embedding needs an isotropic family".into()));
    }
    Ok(())
}

/// Couples `n^{-1/2} sum_i m_eps^{(i)}` with `Z_eps ~ N(0, Cov(m_eps))` by
/// rotating the averaged driving noise through `U_t`.
pub fn martingale_embed_couple(family: &Family, cfg: &EmbedConfig, seed: u64) -> Result<EmbedOutput> {
    check_embed(family, cfg.n, cfg.n_pairs, cfg.pilot)?;
    let pilot = run_pilot(family, cfg.eps, cfg.steps, cfg.pilot, rng::derive_seed(seed, Stream::Pilot, 0))?;
    let draws = parallel::try_map_indexed(cfg.n_pairs, |i| {
        embed_draw(family, &pilot, cfg.n, &mut rng::derived_rng(seed, Stream::Pair, i as u64))
    })?;
    let mut pairs = CoupledPairs::new(family.dim(), "martingale_embedding", seed, &["orthogonality_error", "qv_error"]);
    for dr in &draws {
        pairs.push(&dr.m_sum, &dr.z, &[dr.orthogonality_error, dr.qv_error]);
    }
    Ok(EmbedOutput { pairs, pilot })
}

/// Settings for [`composite_clt_couple`].
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeConfig {
    pub n: usize,
    pub eps: f64,
    /// Grid steps on `[0, eps]` for the embedding.
    pub embed_steps: usize,
    pub pilot: usize,
    pub n_pairs: usize,
    /// Draws of the conditional residual sum per coordinate and pair.
    pub residual_atoms: usize,
    /// Föllmer settings for the residual coupling.
    pub residual: FollmerConfig,
}

impl CompositeConfig {
    pub fn new(n: usize, eps: f64, n_pairs: usize) -> Self {
        Self {
            n,
            eps,
            embed_steps: 100,
            pilot: 10_000,
            n_pairs,
            residual_atoms: 4000,
            residual: FollmerConfig { steps: 100, delta: sde::COUPLING_DELTA, ..Default::default() },
        }
    }
}

/// `eps = 1 / (c0 * poincare * log(2d))`.
pub fn default_eps(c0: f64, poincare: f64, d: usize) -> f64 {
    1.0 / (c0 * poincare * (2.0 * d as f64).ln())
}

#[derive(Clone, Debug)]
pub struct CompositeOutput {
    pub pairs: CoupledPairs,
    /// Pilot of the isotropic core (after the spectral reduction, if any).
    pub pilot: Pilot,
}

/// The `(W, Z)` coupling with `W ~ n^{-1/2} sum X_i` and
/// `Z ~ N(0, Cov(Z_eps) + Sigma_eps)`.
pub fn composite_clt_couple(family: &Family, cfg: &CompositeConfig, seed: u64) -> Result<CompositeOutput> {
    let d = family.dim();
    let cov = family.covariance();
    if (cov.clone() - DMatrix::identity(d, d)).abs().max() > 1e-12 {
        // Spectral reduction: only Gaussian families carry a general covariance,
        // and their isotropic core is the standard Gaussian on the range.
        debug_assert_eq!(family.kind(), FamilyKind::Gaussian);
        let (evals, evecs) = family.gaussian_eigen().expect("non-isotropic family is gaussian");
        let keep: Vec<usize> = (0..d).filter(|&i| evals[i] > 0.0).collect();
        let r = keep.len();
        let lift = DMatrix::from_fn(d, r, |i, c| evecs[(i, keep[c])] * evals[keep[c]].sqrt());
        let core = Family::standard_gaussian(r)?;
        let out = composite_clt_couple(&core, cfg, seed)?;
        return Ok(CompositeOutput { pairs: out.pairs.transform(&lift), pilot: out.pilot });
    }
    if !family.is_product() && family.kind() != FamilyKind::Gaussian {
        return Err(Error::Precondition("composite coupling supports product and gaussian families".into()));
    }
    check_embed(family, cfg.n, cfg.n_pairs, cfg.pilot)?;
    if cfg.residual_atoms < 100 {
        return Err(Error::Precondition("residual_atoms must be at least 100".into()));
    }
    let pilot = run_pilot(family, cfg.eps, cfg.embed_steps, cfg.pilot, rng::derive_seed(seed, Stream::Pilot, 0))?;
    let sig_half = linalg::sym_sqrt(&pilot.sigma_eps);
    let sig_inv_half = linalg::sym_inv_sqrt(&pilot.sigma_eps);
    let gaussian = family.kind() == FamilyKind::Gaussian;
    let rows = parallel::try_map_indexed(cfg.n_pairs, |i| {
        let mut rng = rng::derived_rng(seed, Stream::Pair, i as u64);
        let dr = embed_draw(family, &pilot, cfg.n, &mut rng)?;
        let (w, z, bridge_residual) = if gaussian {
            // The residual sum is exactly standard normal; couple it with itself.
            let g: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            (g.clone(), g, 0.0)
        } else {
            let atoms = residual_atoms(family, cfg, &dr.y_eps, &sig_inv_half, &mut rng)?;
            let target = EmpiricalTarget::from_columns(atoms)?;
            let s = rng::derive_seed(seed, Stream::Residual, i as u64);
            let out = sde::simulate_follmer(&target, &cfg.residual, s)?;
            (out.terminal, out.bridge, out.bridge_residual)
        };
        let wv = DVector::from_column_slice(&dr.m_sum) + &sig_half * DVector::from_column_slice(&w);
        let zv = DVector::from_column_slice(&dr.z) + &sig_half * DVector::from_column_slice(&z);
        let m_gap = dr.m_sum.iter().zip(&dr.z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let r_gap = w.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        Ok::<_, Error>((
            wv.iter().copied().collect::<Vec<_>>(),
            zv.iter().copied().collect::<Vec<_>>(),
            [m_gap, r_gap, dr.orthogonality_error, bridge_residual],
        ))
    })?;
    let mut pairs = CoupledPairs::new(
        d,
        "composite_clt",
        seed,
        &["martingale_gap", "residual_gap", "orthogonality_error", "bridge_residual"],
    );
    for (w, z, diag) in &rows {
        pairs.push(w, z, diag);
    }
    Ok(CompositeOutput { pairs, pilot })
}

/// Draws of `Sigma_eps^{-1/2} n^{-1/2} sum_i (xi_i - m_i)` given the realized
/// `Y_eps^{(i)}`, one column per coordinate. Needs a diagonal `Sigma_eps`
/// (product family), so coordinates stay independent. Each column is then
/// moment-matched to the exact conditional mean (zero) and variance, which
/// removes the leading fluctuation of the empirical measure.
fn residual_atoms(
    family: &Family,
    cfg: &CompositeConfig,
    y_eps: &[f64],
    sig_inv_half: &DMatrix<f64>,
    rng: &mut TaskRng,
) -> Result<Vec<Vec<f64>>> {
    let d = family.dim();
    let n = cfg.n;
    let eps = cfg.eps;
    let sn = (n as f64).sqrt();
    let mut means = vec![0.0; n * d];
    let mut target_var = vec![0.0; d];
    for i in 0..n {
        let pm = posterior::posterior_moments(family, eps, &y_eps[i * d..(i + 1) * d])?;
        for j in 0..d {
            means[i * d + j] = pm.mean[j];
            target_var[j] += pm.cov[(j, j)] * sig_inv_half[(j, j)].powi(2) / n as f64;
        }
    }
    let mut cols = vec![vec![0.0; cfg.residual_atoms]; d];
    let mut xi = vec![0.0; d];
    let mut acc = vec![0.0; d];
    for k in 0..cfg.residual_atoms {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for i in 0..n {
            posterior::draw_posterior(family, eps, &y_eps[i * d..(i + 1) * d], rng, &mut xi)?;
            for j in 0..d {
                acc[j] += xi[j] - means[i * d + j];
            }
        }
        for j in 0..d {
            cols[j][k] = sig_inv_half[(j, j)] * acc[j] / sn;
        }
    }
    for (col, v) in cols.iter_mut().zip(&target_var) {
        let m = stats::mean(col);
        let scale = (v / stats::variance(col)).sqrt();
        col.iter_mut().for_each(|a| *a = (*a - m) * scale);
    }
    Ok(cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_mean_reference_cases() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert!((matrix_geometric_mean(&i2, &i2).unwrap() - &i2).abs().max() < 1e-14);
        let g = matrix_geometric_mean(&(&i2 * 4.0), &i2).unwrap();
        assert!((g - &i2 * 2.0).abs().max() < 1e-14);
    }

    #[test]
    fn mgm_diagonal_pair() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        assert!(mgm_inequality_check(&a, &b).unwrap().holds);
        let c = mgm_inequality_check(&a, &a).unwrap();
        assert!(c.min_eigenvalue.abs() < 1e-12 && c.holds);
    }

    #[test]
    fn gaussian_gamma_is_identity() {
        let f = Family::standard_gaussian(2).unwrap();
        let g = gamma_matrix(&f, 0.5, &[3.0, -1.0]).unwrap();
        assert!((g - DMatrix::identity(2, 2)).abs().max() < 1e-14);
    }

    #[test]
    fn gaussian_embedding_is_exact() {
        let f = Family::standard_gaussian(2).unwrap();
        let cfg = EmbedConfig { n: 10, eps: 0.1, steps: 20, n_pairs: 20, pilot: 1000 };
        let out = martingale_embed_couple(&f, &cfg, 3).unwrap();
        for i in 0..out.pairs.len() {
            let (w, z) = (out.pairs.w_row(i), out.pairs.z_row(i));
            assert!((w[0] - z[0]).abs() < 1e-10);
        }
    }
}
