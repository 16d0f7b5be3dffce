//! Euler–Maruyama integration, the Föllmer process with its Brownian bridge,
//! and overdamped Langevin dynamics with the co-simulated Jacobian flow.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use std::fmt::Write as _;

use crate::distributions::Potential;
use crate::error::{Error, Result};
use crate::linalg;
use crate::localization::CoupledPairs;
use crate::parallel;
use crate::posterior::TiltedPosterior;
use crate::rng::{self, Stream, TaskRng};

/// Increasing time points starting at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    pub points: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Precondition("steps must be at least 1".into()));
        }
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::Precondition(format!("horizon must be finite and non-negative, got {horizon}")));
        }
        Ok(Self { points: (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect() })
    }

    /// `1 - t_k = delta^(k/steps)`: the gaps shrink geometrically toward `1 - delta`.
    pub fn geometric(steps: usize, delta: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Precondition("steps must be at least 1".into()));
        }
        check_delta(delta)?;
        let mut points: Vec<f64> = (0..=steps).map(|k| 1.0 - delta.powf(k as f64 / steps as f64)).collect();
        points[0] = 0.0;
        points[steps] = 1.0 - delta;
        Ok(Self { points })
    }

    /// Ratio of consecutive remaining times `(1 - t_{k+1}) / (1 - t_k)` of a geometric grid.
    pub fn geometric_ratio(steps: usize, delta: f64) -> f64 {
        delta.powf(1.0 / steps as f64)
    }

    /// Inserts `s` as a node (no-op if already within 1e-12 of one).
    pub fn with_node(mut self, s: f64) -> Self {
        if self.points.iter().any(|p| (p - s).abs() < 1e-12) {
            return self;
        }
        let pos = self.points.partition_point(|&p| p < s);
        if pos > 0 && pos < self.points.len() {
            self.points.insert(pos, s);
        }
        self
    }

    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn last(&self) -> f64 {
        *self.points.last().unwrap()
    }

    /// Index of the node equal to `s` (within 1e-12).
    pub fn node_index(&self, s: f64) -> Option<usize> {
        self.points.iter().position(|p| (p - s).abs() < 1e-12)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0,1), got {delta}")));
    }
    Ok(())
}

/// A discretized trajectory with its driving noise.
#[derive(Clone, Debug)]
pub struct Path {
    pub d: usize,
    pub grid: Vec<f64>,
    /// `(steps + 1) x d`, row-major.
    pub states: Vec<f64>,
    /// `steps x d` Brownian increments, row-major.
    pub noise: Vec<f64>,
    pub seed: u64,
}

impl Path {
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.d..(k + 1) * self.d]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.grid.len() - 1)
    }

    /// CSV with columns `t, x_1..x_d`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for j in 1..=self.d {
            let _ = write!(s, ",x_{j}");
        }
        s.push('\n');
        for (k, t) in self.grid.iter().enumerate() {
            let _ = write!(s, "{t}");
            for v in self.state(k) {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

#[inline]
fn gaussian_increment(rng: &mut TaskRng, sd: f64) -> f64 {
    sd * rng.sample::<f64, _>(StandardNormal)
}

/// Explicit Euler–Maruyama on an arbitrary grid with unit diffusion.
/// `drift(t, x, out)` writes the drift at `(t, x)`.
pub fn euler_maruyama_on<F>(drift: F, d: usize, grid: &TimeGrid, x0: &[f64], seed: u64) -> Result<Path>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if x0.len() != d {
        return Err(Error::InvalidParameter("initial condition has the wrong dimension".into()));
    }
    let steps = grid.steps();
    let mut rng = rng::task_rng(seed);
    let mut states = Vec::with_capacity((steps + 1) * d);
    let mut noise = Vec::with_capacity(steps * d);
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut b = vec![0.0; d];
    for k in 0..steps {
        let (t, dt) = (grid.points[k], grid.points[k + 1] - grid.points[k]);
        drift(t, &x, &mut b).map_err(|e| Error::at_step(k, e))?;
        let sd = dt.sqrt();
        for j in 0..d {
            let db = gaussian_increment(&mut rng, sd);
            noise.push(db);
            x[j] += b[j] * dt + db;
        }
        states.extend_from_slice(&x);
    }
    Ok(Path { d, grid: grid.points.clone(), states, noise, seed })
}

/// Uniform-grid Euler–Maruyama on `[0, horizon]`.
pub fn euler_maruyama<F>(drift: F, d: usize, horizon: f64, steps: usize, x0: &[f64], seed: u64) -> Result<Path>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if !(horizon > 0.0) {
        return Err(Error::Precondition(format!("horizon must be positive, got {horizon}")));
    }
    euler_maruyama_on(drift, d, &TimeGrid::uniform(horizon, steps)?, x0, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Geometric,
    Uniform,
}

/// Settings for one Föllmer simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct FollmerConfig {
    pub steps: usize,
    /// The SDE is integrated up to `1 - delta`; the rest is an exact jump.
    pub delta: f64,
    pub grid: GridKind,
    /// Record `(Y_eps, m_eps)` at this time (inserted as a grid node).
    pub snapshot: Option<f64>,
    /// Keep the full trajectory.
    pub keep_path: bool,
}

impl Default for FollmerConfig {
    fn default() -> Self {
        Self { steps: 400, delta: 1e-3, grid: GridKind::Geometric, snapshot: None, keep_path: false }
    }
}

/// Default final-jump gap for couplings: small enough that the independent
/// Gaussian extension of the bridge stays far below coupling distances.
pub const COUPLING_DELTA: f64 = 1e-6;

impl FollmerConfig {
    pub fn time_grid(&self) -> Result<TimeGrid> {
        check_delta(self.delta)?;
        let grid = match self.grid {
            GridKind::Geometric => TimeGrid::geometric(self.steps, self.delta)?,
            GridKind::Uniform => TimeGrid::uniform(1.0 - self.delta, self.steps)?,
        };
        match self.snapshot {
            Some(eps) => {
                if !(eps > 0.0 && eps < 1.0 - self.delta) {
                    return Err(Error::InvalidParameter(format!(
                        "snapshot time must lie in (0, 1 - delta), got {eps}"
                    )));
                }
                Ok(grid.with_node(eps))
            }
            None => Ok(grid),
        }
    }
}

/// Position and posterior mean at the snapshot time.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub y: Vec<f64>,
    pub m: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FollmerOutput {
    /// `Y_1`, an exact posterior draw at `1 - delta`.
    pub terminal: Vec<f64>,
    /// `B_{1-delta}` extended by an independent `N(0, delta I)` increment.
    pub bridge: Vec<f64>,
    /// `max_j |B_{1-delta} - (Y_{1-delta} - sum drift dt)|` before the extension.
    pub bridge_residual: f64,
    /// Euclidean norm of the independent bridge extension.
    pub extension_norm: f64,
    pub snapshot: Option<Snapshot>,
    pub path: Option<Path>,
}

/// Simulates one Föllmer path from `Y_0 = 0`.
pub fn simulate_follmer<T: TiltedPosterior + ?Sized>(target: &T, cfg: &FollmerConfig, seed: u64) -> Result<FollmerOutput> {
    let grid = cfg.time_grid()?;
    follmer_on_grid(target, cfg, &grid, &mut rng::task_rng(seed), seed)
}

fn follmer_on_grid<T: TiltedPosterior + ?Sized>(
    target: &T,
    cfg: &FollmerConfig,
    grid: &TimeGrid,
    rng: &mut TaskRng,
    seed: u64,
) -> Result<FollmerOutput> {
    let d = target.dim();
    let steps = grid.steps();
    let snap_idx = cfg.snapshot.and_then(|s| grid.node_index(s));
    let mut y = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut integral = vec![0.0; d];
    let mut m = vec![0.0; d];
    let mut snapshot = None;
    let (mut states, mut noise) = if cfg.keep_path {
        (Vec::with_capacity((steps + 1) * d), Vec::with_capacity(steps * d))
    } else {
        (Vec::new(), Vec::new())
    };
    if cfg.keep_path {
        states.extend_from_slice(&y);
    }
    for k in 0..steps {
        let (t, dt) = (grid.points[k], grid.points[k + 1] - grid.points[k]);
        target.mean(t, &y, &mut m).map_err(|e| Error::at_step(k, e))?;
        if snap_idx == Some(k) {
            snapshot = Some(Snapshot { t, y: y.clone(), m: m.clone() });
        }
        let sd = dt.sqrt();
        for j in 0..d {
            let drift = (m[j] - y[j]) / (1.0 - t);
            let db = gaussian_increment(rng, sd);
            y[j] += drift * dt + db;
            b[j] += db;
            integral[j] += drift * dt;
            if cfg.keep_path {
                noise.push(db);
            }
        }
        if cfg.keep_path {
            states.extend_from_slice(&y);
        }
    }
    let t_last = grid.last();
    if snap_idx == Some(steps) {
        target.mean(t_last, &y, &mut m).map_err(|e| Error::at_step(steps, e))?;
        snapshot = Some(Snapshot { t: t_last, y: y.clone(), m: m.clone() });
    }
    let bridge_residual = (0..d).map(|j| (b[j] - (y[j] - integral[j])).abs()).fold(0.0, f64::max);
    let mut terminal = vec![0.0; d];
    target.sample(t_last, &y, rng, &mut terminal).map_err(|e| Error::at_step(steps, e))?;
    let gap = (1.0 - t_last).max(0.0).sqrt();
    let mut ext2 = 0.0;
    for bj in b.iter_mut() {
        let e = gaussian_increment(rng, gap);
        ext2 += e * e;
        *bj += e;
    }
    let path = cfg.keep_path.then(|| Path { d, grid: grid.points.clone(), states, noise, seed });
    Ok(FollmerOutput { terminal, bridge: b, bridge_residual, extension_norm: ext2.sqrt(), snapshot, path })
}

/// `n_paths` independent Föllmer paths; path `i` uses the stream derived from
/// `(seed, i)`, so results do not depend on scheduling.
pub fn simulate_follmer_many<T: TiltedPosterior + ?Sized>(
    target: &T,
    cfg: &FollmerConfig,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<FollmerOutput>> {
    let grid = cfg.time_grid()?;
    parallel::try_map_indexed(n_paths, |i| {
        let s = rng::derive_seed(seed, Stream::Path, i as u64);
        follmer_on_grid(target, cfg, &grid, &mut rng::task_rng(s), s)
    })
}

/// Pairs `(W, Z) = (Y_1, B_1)` from independent Föllmer paths.
pub fn follmer_couple<T: TiltedPosterior + ?Sized>(
    target: &T,
    cfg: &FollmerConfig,
    n_pairs: usize,
    seed: u64,
) -> Result<CoupledPairs> {
    if n_pairs == 0 {
        return Err(Error::Precondition("n_pairs must be at least 1".into()));
    }
    let outs = simulate_follmer_many(target, cfg, n_pairs, seed)?;
    let d = target.dim();
    let mut pairs = CoupledPairs::new(d, "follmer", seed, &["bridge_residual", "extension_norm"]);
    for o in &outs {
        pairs.push(&o.terminal, &o.bridge, &[o.bridge_residual, o.extension_norm]);
    }
    Ok(pairs)
}

/// Langevin trajectory together with the Jacobian `J_t = d X_t / d x0`.
#[derive(Clone, Debug)]
pub struct LangevinOutput {
    pub path: Path,
    /// One `d x d` matrix per grid node.
    pub jacobians: Vec<DMatrix<f64>>,
}

/// Advances `J <- exp(-H dt) J`. Exact for constant Hessians and contractive
/// whenever `H >= eps I`.
fn jacobian_step(h: &DMatrix<f64>, dt: f64, j: &mut DMatrix<f64>) {
    let d = h.nrows();
    let diagonal = (0..d).all(|r| (0..d).all(|c| r == c || h[(r, c)] == 0.0));
    if diagonal {
        for r in 0..d {
            let f = (-h[(r, r)] * dt).exp();
            for c in 0..d {
                j[(r, c)] *= f;
            }
        }
    } else {
        let e = linalg::sym_apply(h, |v| (-v * dt).exp());
        let next = e * &*j;
        j.copy_from(&next);
    }
}

fn check_langevin(d: usize, x0: &[f64], horizon: f64, steps: usize) -> Result<()> {
    if x0.len() != d {
        return Err(Error::InvalidParameter("initial condition has the wrong dimension".into()));
    }
    if steps == 0 {
        return Err(Error::Precondition("steps must be at least 1".into()));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::Precondition(format!("horizon must be finite and non-negative, got {horizon}")));
    }
    Ok(())
}

/// `dX = -grad V(X) dt + sqrt(2) dB` from `x0`, with `dJ = -Hess V(X) J dt`, `J_0 = I`.
pub fn simulate_langevin_with_jacobian<P: Potential + ?Sized>(
    potential: &P,
    x0: &[f64],
    horizon: f64,
    steps: usize,
    seed: u64,
) -> Result<LangevinOutput> {
    let d = potential.dim();
    check_langevin(d, x0, horizon, steps)?;
    let dt = horizon / steps as f64;
    let mut rng = rng::task_rng(seed);
    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];
    let mut h = DMatrix::zeros(d, d);
    let mut j = DMatrix::identity(d, d);
    let mut states = Vec::with_capacity((steps + 1) * d);
    let mut noise = Vec::with_capacity(steps * d);
    let mut jacobians = Vec::with_capacity(steps + 1);
    states.extend_from_slice(&x);
    jacobians.push(j.clone());
    let sd = (2.0 * dt).sqrt();
    for k in 0..steps {
        potential.grad(&x, &mut g).map_err(|e| Error::at_step(k, e))?;
        potential.hessian(&x, &mut h).map_err(|e| Error::at_step(k, e))?;
        jacobian_step(&h, dt, &mut j);
        for i in 0..d {
            let db = gaussian_increment(&mut rng, sd);
            noise.push(db);
            x[i] += -g[i] * dt + db;
        }
        states.extend_from_slice(&x);
        jacobians.push(j.clone());
    }
    let grid = (0..=steps).map(|k| k as f64 * dt).collect();
    Ok(LangevinOutput { path: Path { d, grid, states, noise, seed }, jacobians })
}

/// Streaming summary of one Langevin path's Jacobian flow.
#[derive(Clone, Debug)]
pub(crate) struct JacobianIntegral {
    /// Trapezoid rule for `int_0^T J_s ds` at the simulation step.
    pub fine: DMatrix<f64>,
    /// Same rule at twice the step (every other node), for Richardson error.
    pub coarse: DMatrix<f64>,
    pub j_half: DMatrix<f64>,
    pub j_end: DMatrix<f64>,
}

pub(crate) fn langevin_jacobian_integral<P: Potential + ?Sized>(
    potential: &P,
    x0: &[f64],
    horizon: f64,
    steps: usize,
    rng: &mut TaskRng,
) -> Result<JacobianIntegral> {
    let d = potential.dim();
    check_langevin(d, x0, horizon, steps)?;
    let dt = horizon / steps as f64;
    let sd = (2.0 * dt).sqrt();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];
    let mut h = DMatrix::zeros(d, d);
    let mut j = DMatrix::identity(d, d);
    let mut fine = DMatrix::zeros(d, d);
    let mut coarse = DMatrix::zeros(d, d);
    let mut j_half = j.clone();
    // endpoint weights 1/2, interior 1
    fine += &j * 0.5;
    coarse += &j * 0.5;
    for k in 0..steps {
        potential.grad(&x, &mut g).map_err(|e| Error::at_step(k, e))?;
        potential.hessian(&x, &mut h).map_err(|e| Error::at_step(k, e))?;
        jacobian_step(&h, dt, &mut j);
        for i in 0..d {
            x[i] += -g[i] * dt + gaussian_increment(rng, sd);
        }
        let node = k + 1;
        if node == steps / 2 {
            j_half.copy_from(&j);
        }
        let wf = if node == steps { 0.5 } else { 1.0 };
        fine.zip_apply(&j, |a, b| *a += wf * b);
        if node % 2 == 0 {
            let wc = if node == steps { 0.5 } else { 1.0 };
            coarse.zip_apply(&j, |a, b| *a += wc * b);
        }
    }
    fine *= dt;
    coarse *= 2.0 * dt;
    Ok(JacobianIntegral { fine, coarse, j_half, j_end: j })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Family;

    #[test]
    fn geometric_grid_endpoints() {
        let g = TimeGrid::geometric(66, 1e-3).unwrap();
        assert_eq!(g.points[0], 0.0);
        assert!((g.last() - (1.0 - 1e-3)).abs() < 1e-15);
        assert!((TimeGrid::geometric_ratio(66, 1e-3) - 0.9).abs() < 0.002);
        let g = g.with_node(0.1);
        assert!(g.node_index(0.1).is_some());
        assert!(g.points.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn zero_steps_is_rejected() {
        assert!(euler_maruyama(|_, _, o: &mut [f64]| { o[0] = 0.0; Ok(()) }, 1, 1.0, 0, &[0.0], 1).is_err());
    }

    #[test]
    fn gaussian_jacobian_is_exponential() {
        let f = Family::standard_gaussian(1).unwrap();
        let out = simulate_langevin_with_jacobian(&f, &[0.3], 1.0, 1000, 4).unwrap();
        let jt = out.jacobians.last().unwrap()[(0, 0)];
        assert!((jt - (-1.0f64).exp()).abs() < 1e-12);
        let zero = simulate_langevin_with_jacobian(&f, &[0.3], 0.0, 10, 4).unwrap();
        assert_eq!(zero.jacobians.last().unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn bridge_bookkeeping_is_exact() {
        let f = Family::product_exponential(2).unwrap();
        let cfg = FollmerConfig { steps: 50, snapshot: Some(0.1), ..Default::default() };
        let o = simulate_follmer(&f, &cfg, 9).unwrap();
        assert!(o.bridge_residual <= 1e-10);
        assert_eq!(o.snapshot.unwrap().t, 0.1);
        assert!(o.terminal.iter().all(|&v| v > -1.0));
    }

    #[test]
    fn path_replay_is_bit_identical() {
        let f = Family::product_exponential(2).unwrap();
        let cfg = FollmerConfig { steps: 30, keep_path: true, ..Default::default() };
        let a = simulate_follmer(&f, &cfg, 11).unwrap();
        let b = simulate_follmer(&f, &cfg, 11).unwrap();
        assert_eq!(a.path.unwrap().states, b.path.unwrap().states);
        assert_eq!(a.terminal, b.terminal);
    }
}
