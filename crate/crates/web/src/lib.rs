//! wasm-bindgen wrappers behind `www/index.html`. Every export takes plain
//! numbers and returns a JSON string; the `*_json` functions are the same
//! operations without the JS boundary, so they are testable natively.

use lclab::distributions::{Family, FamilyKind, FamilySpec, SmoothedExponential, Tilted};
use lclab::experiments::{coord_cdf, run};
use lclab::rng::{self, Stream};
use lclab::sde::{self, FollmerConfig};
use lclab::{stats, stein};
use serde_json::json;
use wasm_bindgen::prelude::*;

const SHOWN_PATHS: usize = 6;

fn family(kind: &str, d: usize, beta: f64) -> Result<Family, String> {
    let kind = match kind {
        "gaussian" => FamilyKind::Gaussian,
        "product_exponential" => FamilyKind::ProductExponential,
        "product_weibull" => FamilyKind::ProductWeibull,
        other => return Err(format!("unknown family '{other}'")),
    };
    let mut spec = FamilySpec::new(kind, d);
    if kind == FamilyKind::ProductWeibull {
        spec.beta = Some(beta);
    }
    spec.build().map_err(|e| e.to_string())
}

/// Föllmer paths for one family: first-coordinate trajectories of a few
/// paths, all first-coordinate endpoints, and their KS distance to the target.
pub fn follmer_paths_json(kind: &str, d: usize, beta: f64, n_paths: usize, steps: usize, seed: u64) -> Result<String, String> {
    if n_paths == 0 || n_paths > 20_000 || steps == 0 || steps > 5_000 {
        return Err("need 1..=20000 paths and 1..=5000 steps".into());
    }
    let fam = family(kind, d, beta)?;
    let cfg = FollmerConfig { steps, ..Default::default() };
    let outs = sde::simulate_follmer_many(&fam, &cfg, n_paths, seed).map_err(|e| e.to_string())?;
    let terminal: Vec<f64> = outs.iter().map(|o| o.terminal[0]).collect();
    let ks = stats::ks_statistic(&terminal, |x| coord_cdf(&fam, 0, x));

    let shown = FollmerConfig { keep_path: true, ..cfg };
    let mut grid = Vec::new();
    let mut paths = Vec::new();
    for i in 0..n_paths.min(SHOWN_PATHS) {
        let out = sde::simulate_follmer(&fam, &shown, rng::derive_seed(seed, Stream::Path, i as u64)).map_err(|e| e.to_string())?;
        let p = out.path.expect("path was requested");
        let mut ys: Vec<f64> = (0..p.grid.len()).map(|k| p.state(k)[0]).collect();
        ys.push(out.terminal[0]);
        grid = p.grid.clone();
        grid.push(1.0);
        paths.push(ys);
    }
    Ok(json!({"grid": grid, "paths": paths, "terminal": terminal, "ks": ks, "ks_p_value": stats::ks_pvalue(ks, n_paths)}).to_string())
}

/// Exact one-dimensional Stein kernel of the smoothed, centred Exp(1),
/// optionally tilted by `exp(-eps x^2 / 2)`, on `points` evenly spaced values.
pub fn stein_kernel_json(a: f64, eps: f64, lo: f64, hi: f64, points: usize) -> Result<String, String> {
    if points < 2 || lo.is_nan() || hi.is_nan() || hi <= lo {
        return Err("need at least 2 points and hi > lo".into());
    }
    let base = SmoothedExponential::new(a, 1).map_err(|e| e.to_string())?;
    let xs: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let tau: Result<Vec<f64>, _> = if eps > 0.0 {
        let t = Tilted::new(base, eps).map_err(|e| e.to_string())?;
        xs.iter().map(|&x| stein::stein_kernel_1d_exact(&t, x)).collect()
    } else {
        xs.iter().map(|&x| stein::stein_kernel_1d_exact(&base, x)).collect()
    };
    Ok(json!({"x": xs, "tau": tau.map_err(|e| e.to_string())?}).to_string())
}

/// Kolmogorov distance between the coordinate maximum of a normalized sum
/// of `n` draws and its Gaussian counterpart.
pub fn max_distance_json(kind: &str, d: usize, beta: f64, n: usize, reps: usize, seed: u64) -> Result<String, String> {
    let fam = family(kind, d, beta)?;
    let cfg = json!({"family": fam.spec(), "n": n, "reps": reps});
    let art = run("distance", &cfg, seed).map_err(|e| e.to_string())?;
    Ok(art.rows[0]["distance"].to_string())
}

#[wasm_bindgen]
pub fn follmer_paths(kind: &str, d: usize, beta: f64, n_paths: usize, steps: usize, seed: u32) -> Result<String, JsValue> {
    follmer_paths_json(kind, d, beta, n_paths, steps, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn stein_kernel(a: f64, eps: f64, lo: f64, hi: f64, points: usize) -> Result<String, JsValue> {
    stein_kernel_json(a, eps, lo, hi, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn max_distance(kind: &str, d: usize, beta: f64, n: usize, reps: usize, seed: u32) -> Result<String, JsValue> {
    max_distance_json(kind, d, beta, n, reps, seed as u64).map_err(|e| JsValue::from_str(&e))
}
