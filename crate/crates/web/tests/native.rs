use lclab_web::{follmer_paths_json, max_distance_json, stein_kernel_json};
use serde_json::Value;

#[test]
fn follmer_paths_end_at_terminal_draws() {
    let v: Value = serde_json::from_str(&follmer_paths_json("product_exponential", 2, 0.0, 300, 100, 1).unwrap()).unwrap();
    let paths = v["paths"].as_array().unwrap();
    assert_eq!(paths.len(), 6);
    let grid = v["grid"].as_array().unwrap();
    assert_eq!(paths[0].as_array().unwrap().len(), grid.len());
    assert_eq!(grid[0].as_f64(), Some(0.0));
    // The displayed paths reuse the seeds of the bulk run.
    assert_eq!(paths[0].as_array().unwrap().last().unwrap(), &v["terminal"][0]);
    assert!(v["ks"].as_f64().unwrap() < 0.1);
}

#[test]
fn stein_kernel_profile_is_positive() {
    let v: Value = serde_json::from_str(&stein_kernel_json(0.05, 0.0, -0.9, 3.0, 9).unwrap()).unwrap();
    let xs = v["x"].as_array().unwrap();
    let tau = v["tau"].as_array().unwrap();
    assert_eq!(xs.len(), 9);
    for (x, t) in xs.iter().zip(tau) {
        let (x, t) = (x.as_f64().unwrap(), t.as_f64().unwrap());
        assert!(t > 0.0);
        // Away from the smoothed edge it is the kernel of sqrt(1-a)(E-1).
        let s = 0.95f64.sqrt();
        if x > 1.0 {
            assert!((t - s * (x + s)).abs() < 1e-3, "x={x} tau={t}");
        }
    }
}

#[test]
fn max_distance_returns_an_estimate() {
    let v: Value = serde_json::from_str(&max_distance_json("product_exponential", 5, 0.0, 10, 4000, 3).unwrap()).unwrap();
    assert!(v["value"].as_f64().unwrap() > 0.0);
    assert!(v["standard_error"].as_f64().unwrap() > 0.0);
}

#[test]
fn bad_inputs_are_rejected() {
    assert!(follmer_paths_json("cauchy", 2, 0.0, 10, 10, 0).is_err());
    assert!(follmer_paths_json("product_weibull", 2, 1.0, 10, 10, 0).is_err());
    assert!(stein_kernel_json(0.05, 0.0, 1.0, 0.0, 5).is_err());
}
