//! Adaptive Gauss–Kronrod (7/15) quadrature and helpers for one-dimensional
//! log-concave densities.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Integrates the vector-valued `f` (K components) over one panel.
fn gk15<const K: usize>(f: &impl Fn(f64) -> [f64; K], a: f64, b: f64) -> ([f64; K], f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = [0.0; K];
    let mut gauss = [0.0; K];
    for k in 0..K {
        kron[k] = WGK[7] * fc[k];
        gauss[k] = WG[3] * fc[k];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        for k in 0..K {
            kron[k] += WGK[j] * (f1[k] + f2[k]);
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * (f1[k] + f2[k]);
            }
        }
    }
    let mut err = 0.0f64;
    for k in 0..K {
        kron[k] *= h;
        gauss[k] *= h;
        err = err.max((kron[k] - gauss[k]).abs());
    }
    (kron, err)
}

/// Adaptive integration of `f` over the finite interval `[a, b]`.
///
/// Convergence is declared when the summed Kronrod/Gauss discrepancy of the
/// first component is below `rel_tol * |integral| + abs_tol`.
pub fn integrate<const K: usize>(
    f: impl Fn(f64) -> [f64; K],
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<[f64; K]> {
    const MAX_PANELS: usize = 2000;
    let mut panels = vec![(a, b, gk15(&f, a, b))];
    loop {
        let mut total = [0.0; K];
        let mut err = 0.0;
        let mut worst = 0;
        for (i, p) in panels.iter().enumerate() {
            for k in 0..K {
                total[k] += p.2 .0[k];
            }
            err += p.2 .1;
            if p.2 .1 > panels[worst].2 .1 {
                worst = i;
            }
        }
        let target = rel_tol * total[0].abs() + abs_tol;
        if err <= target {
            return Ok(total);
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::Quadrature {
                achieved: err / total[0].abs().max(f64::MIN_POSITIVE),
                requested: rel_tol,
            });
        }
        let (pa, pb, _) = panels.swap_remove(worst);
        let mid = 0.5 * (pa + pb);
        panels.push((pa, mid, gk15(&f, pa, mid)));
        panels.push((mid, pb, gk15(&f, mid, pb)));
    }
}

/// A concave log-density on an interval, possibly unnormalized.
pub struct LogConcave1d<F: Fn(f64) -> f64> {
    pub log_density: F,
    pub lower: f64,
    pub upper: f64,
}

/// Summary of a 1-D log-concave density computed by quadrature.
#[derive(Clone, Copy, Debug)]
pub struct Moments1d {
    pub mode: f64,
    pub log_peak: f64,
    /// Integral of `exp(log_density - log_peak)`.
    pub mass: f64,
    pub mean: f64,
    pub var: f64,
    /// Integration window where the density exceeds `exp(log_peak - 40)`.
    pub window: (f64, f64),
}

/// Mass below `exp(-LOG_WINDOW)` of the peak is ignored.
pub const LOG_WINDOW: f64 = 40.0;

impl<F: Fn(f64) -> f64> LogConcave1d<F> {
    pub fn new(log_density: F, lower: f64, upper: f64) -> Self {
        Self { log_density, lower, upper }
    }

    /// Mode by bracketing plus golden-section search, starting from `guess`.
    pub fn mode(&self, guess: f64, scale: f64) -> f64 {
        let g = &self.log_density;
        let clamp = |x: f64| x.clamp(self.lower, self.upper);
        let mut x0 = clamp(guess);
        if !g(x0).is_finite() {
            // nudge into the open support
            x0 = if self.lower.is_finite() { self.lower + scale.min(1.0) * 1e-3 } else { 0.0 };
        }
        let mut h = scale;
        let (mut a, mut b);
        let f0 = g(x0);
        if g(clamp(x0 + h * 1e-3)) >= f0 {
            // ascend to the right
            a = x0;
            b = clamp(x0 + h);
            while b < self.upper && g(b) > g(clamp(b - h * 0.5)) {
                a = b - h * 0.5;
                h *= 2.0;
                b = clamp(b + h);
            }
        } else {
            b = x0;
            a = clamp(x0 - h);
            while a > self.lower && g(a) > g(clamp(a + h * 0.5)) {
                b = a + h * 0.5;
                h *= 2.0;
                a = clamp(a - h);
            }
        }
        a = a.min(x0);
        b = b.max(x0);
        let inv_phi = 0.618_033_988_749_894_9;
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let (mut fc, mut fd) = (g(c), g(d));
        for _ in 0..200 {
            if (b - a) <= 1e-12 * (1.0 + a.abs().max(b.abs())) {
                break;
            }
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = g(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = g(d);
            }
        }
        0.5 * (a + b)
    }

    /// Point where the log-density has dropped by `LOG_WINDOW` below `peak`
    /// moving from `mode` in direction `dir` (or the support edge).
    fn window_edge(&self, mode: f64, peak: f64, dir: f64, scale: f64) -> f64 {
        let g = &self.log_density;
        let edge = if dir > 0.0 { self.upper } else { self.lower };
        let mut inner = mode;
        let mut step = scale;
        loop {
            let x = mode + dir * step;
            if ((dir > 0.0 && x >= edge) || (dir < 0.0 && x <= edge)) && edge.is_finite() {
                return edge;
            }
            let v = g(x);
            if !(v > peak - LOG_WINDOW) {
                // bisect between inner and x
                let (mut lo, mut hi) = (inner, x);
                for _ in 0..100 {
                    let m = 0.5 * (lo + hi);
                    if g(m) > peak - LOG_WINDOW {
                        lo = m;
                    } else {
                        hi = m;
                    }
                    if (hi - lo).abs() < 1e-10 * scale {
                        break;
                    }
                }
                return hi;
            }
            inner = x;
            step *= 2.0;
        }
    }

    /// Normalizing mass, mean and variance.
    pub fn moments(&self, guess: f64, scale: f64, rel_tol: f64) -> Result<Moments1d> {
        let mode = self.mode(guess, scale);
        let peak = (self.log_density)(mode);
        if !peak.is_finite() {
            return Err(Error::InvalidParameter(format!("log-density is not finite at its mode {mode}")));
        }
        let lo = self.window_edge(mode, peak, -1.0, scale);
        let hi = self.window_edge(mode, peak, 1.0, scale);
        let g = &self.log_density;
        let dens = |x: f64| {
            let v = g(x) - peak;
            if v.is_finite() { v.exp() } else { 0.0 }
        };
        let [mass, first] = integrate(|x| {
            let p = dens(x);
            [p, p * (x - mode)]
        }, lo, hi, rel_tol, 0.0)?;
        let mean = mode + first / mass;
        let [_, second] = integrate(|x| {
            let p = dens(x);
            [p, p * (x - mean) * (x - mean)]
        }, lo, hi, rel_tol, 0.0)?;
        Ok(Moments1d {
            mode,
            log_peak: peak,
            mass,
            mean,
            var: second / mass,
            window: (lo, hi),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let [v] = integrate(|x| [x.powi(5) - 2.0 * x * x], -1.0, 2.0, 1e-12, 0.0).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - 2.0 * (8.0 + 1.0) / 3.0;
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn gaussian_moments() {
        let lc = LogConcave1d::new(|x: f64| -0.5 * (x - 1.5) * (x - 1.5) / 4.0, f64::NEG_INFINITY, f64::INFINITY);
        let m = lc.moments(0.0, 1.0, 1e-10).unwrap();
        assert!((m.mean - 1.5).abs() < 1e-9);
        assert!((m.var - 4.0).abs() < 1e-8);
        assert!((m.mass - (2.0 * std::f64::consts::PI * 4.0).sqrt()).abs() < 1e-8);
    }

    #[test]
    fn boundary_mode_exponential() {
        let lc = LogConcave1d::new(|x: f64| if x >= 0.0 { -2.0 * x } else { f64::NEG_INFINITY }, 0.0, f64::INFINITY);
        let m = lc.moments(1.0, 1.0, 1e-10).unwrap();
        assert!(m.mode.abs() < 1e-9);
        assert!((m.mean - 0.5).abs() < 1e-9);
        assert!((m.var - 0.25).abs() < 1e-9);
    }
}
