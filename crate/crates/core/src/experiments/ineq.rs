//! Exact evaluation of the Gaussian-max, anti-concentration, Mills-ratio and
//! matrix geometric-mean inequalities on fixed grids.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Result;
use crate::localization::{matrix_geometric_mean, mgm_inequality_check};
use crate::metrics::{birnbaum_ratio, gmax_tail_check, nazarov_check};
use crate::rng::{self, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IneqRow {
    pub params: serde_json::Value,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IneqSummary {
    pub check: String,
    pub cases: usize,
    pub all_hold: bool,
    /// Smallest `rhs - lhs` over the grid.
    pub min_margin: f64,
    pub rows: Vec<IneqRow>,
}

fn summarize(check: &str, rows: Vec<IneqRow>) -> IneqSummary {
    IneqSummary {
        check: check.to_string(),
        cases: rows.len(),
        all_hold: rows.iter().all(|r| r.holds),
        min_margin: rows.iter().map(|r| r.rhs - r.lhs).fold(f64::INFINITY, f64::min),
        rows,
    }
}

/// A random positive-definite matrix `G G^T / d + 0.05 I`.
pub fn random_pd(d: usize, rng: &mut rng::TaskRng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&g * g.transpose()) / d as f64 + DMatrix::identity(d, d) * 0.05
}

/// Runs all four grids. Matrix pairs are drawn from `seed`, split evenly
/// over `d in {2, 5, 10}`.
pub fn ineq_suite(mgm_pairs: usize, seed: u64) -> Result<Vec<IneqSummary>> {
    let mut gmax = Vec::new();
    for d in [1usize, 10, 100] {
        let sigma = vec![1.0; d];
        for k in 0..=8 {
            let x = 0.5 * k as f64;
            for eps in [0.01, 0.1, 0.5] {
                let c = gmax_tail_check(&sigma, x, eps)?;
                gmax.push(IneqRow { params: json!({"d": d, "x": x, "eps": eps}), lhs: c.lhs, rhs: c.rhs, holds: c.holds });
            }
        }
    }
    let mut naz = Vec::new();
    for d in [1usize, 2, 10, 100] {
        for eta in [0.0, 0.05, 0.1] {
            let c = nazarov_check(d, eta)?;
            naz.push(IneqRow { params: json!({"d": d, "eta": eta}), lhs: c.lhs, rhs: c.rhs, holds: c.holds });
        }
    }
    let mut birn = Vec::new();
    for k in 0..=100 {
        let z = 0.1 * k as f64;
        let c = birnbaum_ratio(z)?;
        birn.push(IneqRow { params: json!({"z": z}), lhs: c.lhs, rhs: c.rhs, holds: c.holds });
    }
    let mut mgm = Vec::new();
    let mut commute = Vec::new();
    let dims = [2usize, 5, 10];
    for i in 0..mgm_pairs {
        let d = dims[i % dims.len()];
        let mut r = rng::derived_rng(seed, Stream::Replicate, i as u64);
        let a = random_pd(d, &mut r);
        let b = random_pd(d, &mut r);
        let c = mgm_inequality_check(&a, &b)?;
        // reported as "0 <= min eigenvalue + tolerance"
        mgm.push(IneqRow { params: json!({"d": d, "pair": i}), lhs: -c.min_eigenvalue, rhs: 1e-10, holds: c.holds });
        if d == 5 && commute.len() < 100 {
            let diff = (matrix_geometric_mean(&a, &b)? - matrix_geometric_mean(&b, &a)?).abs().max();
            commute.push(IneqRow { params: json!({"d": d, "pair": i}), lhs: diff, rhs: 1e-10, holds: diff <= 1e-10 });
        }
    }
    Ok(vec![
        summarize("gmax_tail", gmax),
        summarize("nazarov", naz),
        summarize("birnbaum", birn),
        summarize("mgm", mgm),
        summarize("mgm_symmetry", commute),
    ])
}
