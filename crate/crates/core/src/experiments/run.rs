//! Subcommand runners: JSON config in, result rows plus optional CSV tables
//! and SVG plots out. File handling is left to the caller.

use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use super::config::*;
use super::svg::{LinePlot, Series};
use super::{ineq, md, rate};
use crate::distributions::{
    weibull_standardization, Family, FamilyKind, LogDensity1d, Potential, Sampler, SmoothedExponential, SumSampler, Tilted,
};
use crate::error::{Error, Result};
use crate::localization::{self, CompositeConfig, EmbedConfig};
use crate::metrics::{self, MaxReference};
use crate::posterior::EmpiricalTarget;
use crate::rng::{self, Stream};
use crate::sde::{self, FollmerConfig};
use crate::special;
use crate::stats;
use crate::stein;

pub const SUBCOMMANDS: [&str; 8] = ["sample", "follmer", "couple", "stein-check", "distance", "rate-sweep", "md-ratio", "ineq-suite"];

/// Output of one run: each entry of `rows` becomes one JSON-lines record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Artifacts {
    pub rows: Vec<Value>,
    /// `(file stem, contents)`.
    pub csv: Vec<(String, String)>,
    pub svg: Vec<(String, String)>,
}

fn parse<T: DeserializeOwned>(config: &Value) -> Result<T> {
    Ok(serde_json::from_value(config.clone())?)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results always serialize")
}

pub fn run(subcommand: &str, config: &Value, seed: u64) -> Result<Artifacts> {
    match subcommand {
        "sample" => run_sample(&parse(config)?, seed),
        "follmer" => run_follmer(&parse(config)?, seed),
        "couple" => run_couple(&parse(config)?, seed),
        "stein-check" => run_stein(&parse(config)?, seed),
        "distance" => run_distance(&parse(config)?, seed),
        "rate-sweep" => run_rate(&parse(config)?, seed),
        "md-ratio" => run_md(&parse(config)?, seed),
        "ineq-suite" => {
            let cfg: IneqSuiteConfig = if config.is_null() { IneqSuiteConfig::default() } else { parse(config)? };
            let sums = ineq::ineq_suite(cfg.mgm_pairs, seed)?;
            Ok(Artifacts { rows: sums.iter().map(to_value).collect(), ..Default::default() })
        }
        other => Err(Error::InvalidParameter(format!("unknown subcommand '{other}'"))),
    }
}

fn run_sample(cfg: &SampleConfig, seed: u64) -> Result<Artifacts> {
    let family = cfg.family.build()?;
    let s = family.sample(cfg.n, seed)?;
    let cov = s.covariance();
    let mut csv = (1..=s.d).map(|j| format!("x_{j}")).collect::<Vec<_>>().join(",");
    csv.push('\n');
    for r in s.rows() {
        csv.push_str(&r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        csv.push('\n');
    }
    let results = json!({
        "family": family.label(),
        "n": s.n,
        "d": s.d,
        "mean": s.mean(),
        "covariance": (0..s.d).map(|r| (0..s.d).map(|c| cov[(r, c)]).collect::<Vec<_>>()).collect::<Vec<_>>(),
    });
    Ok(Artifacts { rows: vec![results], csv: vec![("sample".into(), csv)], svg: vec![] })
}

/// Marginal CDF of one coordinate of a product family or Gaussian.
pub fn coord_cdf(family: &Family, j: usize, x: f64) -> f64 {
    match family.kind() {
        FamilyKind::Gaussian => {
            let v = family.covariance()[(j, j)];
            if v == 0.0 { (x >= 0.0) as u8 as f64 } else { special::norm_cdf(x / v.sqrt()) }
        }
        FamilyKind::ProductExponential => {
            if x <= -1.0 { 0.0 } else { -(-(x + 1.0)).exp_m1() }
        }
        FamilyKind::ProductWeibull => {
            let beta = family.beta().expect("weibull has a shape");
            let (m, s) = weibull_standardization(beta);
            let w = s * x + m;
            if w <= 0.0 { 0.0 } else { -(-w.powf(beta)).exp_m1() }
        }
    }
}

fn run_follmer(cfg: &FollmerRunConfig, seed: u64) -> Result<Artifacts> {
    let family = cfg.family.build()?;
    if cfg.n_paths == 0 {
        return Err(Error::Precondition("n_paths must be at least 1".into()));
    }
    let mut fc = FollmerConfig { snapshot: cfg.snapshot, ..Default::default() };
    if let Some(s) = cfg.steps {
        fc.steps = s;
    }
    if let Some(d) = cfg.delta {
        fc.delta = d;
    }
    if let Some(g) = cfg.grid {
        fc.grid = g;
    }
    let outs = sde::simulate_follmer_many(&family, &fc, cfg.n_paths, seed)?;
    let d = family.dim();
    let ks: Vec<Value> = (0..d)
        .map(|j| {
            let col: Vec<f64> = outs.iter().map(|o| o.terminal[j]).collect();
            let ks = stats::ks_statistic(&col, |x| coord_cdf(&family, j, x));
            json!({"coordinate": j + 1, "ks": ks, "p_value": stats::ks_pvalue(ks, col.len())})
        })
        .collect();
    let max_residual = outs.iter().map(|o| o.bridge_residual).fold(0.0, f64::max);
    let mut results = json!({
        "family": family.label(),
        "n_paths": cfg.n_paths,
        "steps": fc.steps,
        "delta": fc.delta,
        "terminal_ks": ks,
        "max_bridge_residual": max_residual,
    });
    if cfg.snapshot.is_some() {
        let snap: Vec<Value> = (0..d)
            .map(|j| {
                let m: Vec<f64> = outs.iter().filter_map(|o| o.snapshot.as_ref().map(|s| s.m[j])).collect();
                json!({"coordinate": j + 1, "mean_m": stats::mean(&m), "se": stats::std_error(&m)})
            })
            .collect();
        results["snapshot"] = json!(snap);
    }
    let mut csv = (1..=d).map(|j| format!("y_{j}")).chain((1..=d).map(|j| format!("z_{j}"))).collect::<Vec<_>>().join(",");
    csv.push('\n');
    for o in &outs {
        let row: Vec<String> = o.terminal.iter().chain(&o.bridge).map(|v| v.to_string()).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    Ok(Artifacts { rows: vec![results], csv: vec![("follmer".into(), csv)], svg: vec![] })
}

fn pilot_summary(p: &localization::Pilot) -> Value {
    let m = |a: &nalgebra::DMatrix<f64>| (0..a.nrows()).map(|r| (0..a.ncols()).map(|c| a[(r, c)]).collect::<Vec<_>>()).collect::<Vec<_>>();
    json!({
        "paths": p.n_paths,
        "sigma_eps": m(&p.sigma_eps),
        "sigma_eps_se": m(&p.sigma_eps_se),
        "cov_z_eps": m(&p.cov_z_eps),
        "cov_z_eps_se": m(&p.cov_z_eps_se),
        "split_total": m(&p.split_total),
        "split_total_se": m(&p.split_total_se),
        "min_eigenvalue_e_gamma2": p.min_eigenvalue_e_gamma2,
    })
}

fn run_couple(cfg: &CoupleConfig, seed: u64) -> Result<Artifacts> {
    let family = cfg.family.build()?;
    let d = family.dim();
    let u = cfg.u.clone().unwrap_or_else(|| {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    });
    let eps = cfg.eps.unwrap_or(0.1);
    let (pairs, pilot) = match cfg.construction {
        Construction::Follmer => {
            let sampler = SumSampler::new(family.clone(), cfg.n)?;
            let atoms = cfg.atoms.unwrap_or(4000);
            let aseed = rng::derive_seed(seed, Stream::Atoms, 0);
            let target = if sampler.is_product() {
                EmpiricalTarget::factorized(&sampler, atoms, aseed)?
            } else {
                EmpiricalTarget::joint(&sampler, atoms, aseed)?
            };
            let fc = FollmerConfig { steps: cfg.steps.unwrap_or(100), delta: sde::COUPLING_DELTA, ..Default::default() };
            (sde::follmer_couple(&target, &fc, cfg.n_pairs, seed)?, None)
        }
        Construction::MartingaleEmbedding => {
            let ec = EmbedConfig { n: cfg.n, eps, steps: cfg.steps.unwrap_or(100), n_pairs: cfg.n_pairs, pilot: cfg.pilot.unwrap_or(10_000) };
            let out = localization::martingale_embed_couple(&family, &ec, seed)?;
            (out.pairs, Some(out.pilot))
        }
        Construction::Composite => {
            let mut cc = CompositeConfig::new(cfg.n, eps, cfg.n_pairs);
            if let Some(s) = cfg.steps {
                cc.embed_steps = s;
            }
            if let Some(p) = cfg.pilot {
                cc.pilot = p;
            }
            if let Some(a) = cfg.atoms {
                cc.residual_atoms = a;
            }
            let out = localization::composite_clt_couple(&family, &cc, seed)?;
            (out.pairs, Some(out.pilot))
        }
    };
    let dist = metrics::projected_lp(&pairs, &u, cfg.p)?;
    let diags: Vec<Value> = pairs
        .diagnostic_names
        .iter()
        .map(|name| {
            let col = pairs.diagnostic(name).expect("named diagnostic");
            json!({"name": name, "mean": stats::mean(&col), "max": col.iter().copied().fold(f64::NEG_INFINITY, f64::max)})
        })
        .collect();
    let mut results = json!({
        "family": family.label(),
        "construction": pairs.construction,
        "n": cfg.n,
        "n_pairs": pairs.len(),
        "u": u,
        "projected": dist,
        "diagnostics": diags,
    });
    if let Some(p) = pilot {
        results["pilot"] = pilot_summary(&p);
    }
    Ok(Artifacts { rows: vec![results], csv: vec![("pairs".into(), pairs.to_csv())], svg: vec![] })
}

fn stein_rows<P: Potential + LogDensity1d>(p: &P, cfg: &SteinCheckConfig, seed: u64) -> Result<(Value, String)> {
    let points: Vec<Vec<f64>> = cfg.points.iter().map(|&x| vec![x]).collect();
    let est = stein::stein_kernel_langevin(p, &points, cfg.horizon, cfg.n_paths, cfg.steps, seed)?;
    let mut within = 0;
    let rows: Vec<Value> = cfg
        .points
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let exact = stein::stein_kernel_1d_exact(p, x)?;
            let (t, se) = (est.tau[i][(0, 0)], est.se[i][(0, 0)]);
            let z = (t - exact) / se;
            within += (z.abs() <= 3.0) as usize;
            Ok(json!({"x": x, "tau": t, "se": se, "exact": exact, "z": z, "tail_error": est.tail_error[i]}))
        })
        .collect::<Result<_>>()?;
    Ok((json!({"horizon": cfg.horizon, "n_paths": cfg.n_paths, "steps": cfg.steps, "points": rows, "within_3se": within}), est.to_csv()))
}

fn run_stein(cfg: &SteinCheckConfig, seed: u64) -> Result<Artifacts> {
    let (mut results, csv) = match &cfg.target {
        SteinTarget::Gaussian { variance } => {
            let f = Family::gaussian(nalgebra::DMatrix::from_element(1, 1, *variance))?;
            stein_rows(&f, cfg, seed)?
        }
        SteinTarget::SmoothedExponential { a } => stein_rows(&SmoothedExponential::new(*a, 1)?, cfg, seed)?,
        SteinTarget::TiltedSmoothedExponential { a, eps } => {
            stein_rows(&Tilted::new(SmoothedExponential::new(*a, 1)?, *eps)?, cfg, seed)?
        }
    };
    results["target"] = to_value(&cfg.target);
    Ok(Artifacts { rows: vec![results], csv: vec![("stein_kernel".into(), csv)], svg: vec![] })
}

fn run_distance(cfg: &DistanceConfig, seed: u64) -> Result<Artifacts> {
    let family = cfg.family.build()?;
    let scales = independent_scales(&family)?;
    if cfg.reps < 2 || cfg.n == 0 {
        return Err(Error::InvalidParameter("need reps >= 2 and n >= 1".into()));
    }
    let sampler = SumSampler::new(family.clone(), cfg.n)?;
    let w = crate::distributions::sample_blocks(family.dim(), cfg.reps, seed, |r, out| sampler.draw(r, out));
    let grid = metrics::quantile_grid(MaxReference::IndependentGaussian, &scales, cfg.grid_points);
    let est = metrics::kolmogorov_max_distance(&w, &scales, MaxReference::IndependentGaussian, Some(&grid))?;
    Ok(Artifacts {
        rows: vec![json!({"family": family.label(), "n": cfg.n, "reps": cfg.reps, "distance": est})],
        ..Default::default()
    })
}

fn run_rate(cfg: &RateSweepConfig, seed: u64) -> Result<Artifacts> {
    let out = rate::rate_sweep(cfg, seed)?;
    let mut csv = String::from("n,distance,se\n");
    for p in &out.points {
        csv.push_str(&format!("{},{},{}\n", p.n, p.distance.value, p.distance.standard_error));
    }
    let plot = LinePlot {
        title: format!("max-statistic Kolmogorov distance (slope {:.3})", out.fit.slope),
        x_label: "n".into(),
        y_label: "distance".into(),
        log_x: true,
        log_y: true,
        series: vec![
            Series { name: "measured".into(), points: out.points.iter().map(|p| (p.n as f64, p.distance.value, p.distance.standard_error)).collect() },
            Series {
                name: "fit".into(),
                points: out.points.iter().map(|p| (p.n as f64, (out.fit.intercept + out.fit.slope * (p.n as f64).ln()).exp(), 0.0)).collect(),
            },
        ],
    };
    Ok(Artifacts { rows: vec![to_value(&out)], csv: vec![("rate_sweep".into(), csv)], svg: vec![("rate_sweep".into(), plot.to_svg())] })
}

fn run_md(cfg: &MdRatioConfig, seed: u64) -> Result<Artifacts> {
    let out = md::md_ratio_experiment(cfg, seed)?;
    let mut csv = String::from("n,x,hits,reps,ratio,ratio_se,gaussian_tail\n");
    for r in &out.rows {
        csv.push_str(&format!("{},{},{},{},{},{},{}\n", r.n, r.x, r.hits, r.reps, r.ratio, r.ratio_se, r.gaussian_tail));
    }
    let series = cfg
        .n_values
        .iter()
        .map(|&n| Series {
            name: format!("n = {n}"),
            points: out.rows.iter().filter(|r| r.n == n).map(|r| (r.x, r.ratio, r.ratio_se)).collect(),
        })
        .collect();
    let plot = LinePlot { title: "tail ratio P(max W > x) / P(max Z > x)".into(), x_label: "x".into(), y_label: "ratio".into(), log_x: false, log_y: false, series };
    Ok(Artifacts { rows: vec![to_value(&out)], csv: vec![("md_ratio".into(), csv)], svg: vec![("md_ratio".into(), plot.to_svg())] })
}
