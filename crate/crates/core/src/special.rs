//! Normal-distribution special functions and truncated-normal helpers.
//!
//! `erfc` comes from `libm` (a port of the FreeBSD/musl routine, sub-ulp on the
//! whole real line). Everything that divides by a Gaussian tail goes through the
//! scaled function `erfcx(x) = exp(x^2) erfc(x)`, which stays representable far
//! beyond the point where `erfc` underflows.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const SQRT_PI: f64 = 1.772_453_850_905_516;
const SQRT_FRAC_PI_2: f64 = 1.253_314_137_315_500_3;

/// Complementary error function.
#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Scaled complementary error function `exp(x^2) erfc(x)`.
///
/// Returns `+inf` once the result overflows (x below about -26.6).
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        if x < -26.6 {
            return f64::INFINITY;
        }
        return exp_square(x) * (2.0 - libm::erfc(-x));
    }
    if x < 25.0 {
        return exp_square(x) * libm::erfc(x);
    }
    // Asymptotic expansion; at x >= 25 the dropped term is below 1e-20.
    let inv2 = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..8 {
        term *= -((2 * k - 1) as f64) * inv2;
        sum += term;
    }
    sum / (x * SQRT_PI)
}

/// `exp(x^2)` with the rounding error of `x*x` compensated.
#[inline]
fn exp_square(x: f64) -> f64 {
    let hi = x * x;
    let lo = x.mul_add(x, -hi);
    hi.exp() * (1.0 + lo)
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal distribution function.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal upper tail `1 - Φ(z)`, accurate in relative terms.
#[inline]
pub fn norm_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// `log Φ(z)`, accurate for both tails.
pub fn ln_norm_cdf(z: f64) -> f64 {
    if z > -5.0 {
        (-norm_sf(z)).ln_1p()
    } else {
        // Φ(z) = φ(z) R(-z)
        -0.5 * z * z - LN_SQRT_2PI + mills_ratio(-z).ln()
    }
}

/// Mills ratio `(1 - Φ(z)) / φ(z)`.
#[inline]
pub fn mills_ratio(z: f64) -> f64 {
    SQRT_FRAC_PI_2 * erfcx(z / SQRT_2)
}

/// Normal hazard `φ(z) / (1 - Φ(z))`.
#[inline]
pub fn normal_hazard(z: f64) -> f64 {
    1.0 / mills_ratio(z)
}

/// Gamma function.
#[inline]
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Standard normal quantile by safeguarded Newton iteration on `Φ`.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -norm_quantile(1.0 - p);
    }
    // Initial guess from the logistic-type approximation, refined on log scale.
    let t = (-2.0 * p.ln()).sqrt();
    let mut z = -(t - (2.515_517 + 0.802_853 * t + 0.010_328 * t * t)
        / (1.0 + 1.432_788 * t + 0.189_269 * t * t + 0.001_308 * t * t * t));
    let lp = p.ln();
    for _ in 0..50 {
        // d/dz log Φ(z) = φ(z)/Φ(z) = 1/R(-z)
        let f = ln_norm_cdf(z) - lp;
        let step = f * mills_ratio(-z);
        z -= step;
        if step.abs() < 1e-15 * z.abs().max(1.0) {
            break;
        }
    }
    z
}

/// Moments of `N(mu, s^2)` conditioned on `x > lower`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncatedNormal {
    pub mu: f64,
    pub s: f64,
    pub lower: f64,
}

impl TruncatedNormal {
    pub fn new(mu: f64, s: f64, lower: f64) -> Self {
        Self { mu, s, lower }
    }

    /// Standardized truncation point.
    #[inline]
    pub fn alpha(&self) -> f64 {
        (self.lower - self.mu) / self.s
    }

    /// Returns `(mean, variance)`.
    pub fn moments(&self) -> (f64, f64) {
        let alpha = self.alpha();
        let (r, v) = hazard_excess_and_variance(alpha);
        // mean = mu + s*lambda = lower + s*(lambda - alpha)
        (self.lower + self.s * r, self.s * self.s * v)
    }

    /// Exact draw (naive rejection below the mode, Robert's exponential
    /// proposal otherwise).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let alpha = self.alpha();
        let z = if alpha <= 0.0 {
            loop {
                let z: f64 = StandardNormal.sample(rng);
                if z >= alpha {
                    break z;
                }
            }
        } else {
            let rate = 0.5 * (alpha + (alpha * alpha + 4.0).sqrt());
            loop {
                let e: f64 = Exp1.sample(rng);
                let z = alpha + e / rate;
                let u: f64 = rng.random();
                let d = z - rate;
                if u <= (-0.5 * d * d).exp() {
                    break z;
                }
            }
        };
        (self.mu + self.s * z).max(self.lower)
    }
}

/// For the standard normal truncated to `(alpha, inf)`: returns
/// `(lambda - alpha, 1 + alpha*lambda - lambda^2)` with `lambda` the hazard.
fn hazard_excess_and_variance(alpha: f64) -> (f64, f64) {
    if alpha <= 20.0 {
        let lambda = normal_hazard(alpha);
        let r = lambda - alpha;
        (r, 1.0 - lambda * r)
    } else {
        // Asymptotic series in u = 1/alpha; truncation error < 1e-16 relative.
        const R: [f64; 10] = [1.0, -2.0, 10.0, -74.0, 706.0, -8162.0, 110410.0, -1708394.0, 29752066.0, -576037442.0];
        const V: [f64; 10] = [1.0, -6.0, 50.0, -518.0, 6354.0, -89782.0, 1435330.0, -25625910.0, 505785122.0, -10944711398.0];
        let u = 1.0 / alpha;
        let u2 = u * u;
        let poly = |c: &[f64; 10]| c.iter().rev().fold(0.0, |acc, &ck| acc * u2 + ck);
        (u * poly(&R), u2 * poly(&V))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn erfcx_matches_direct_product() {
        for &x in &[-3.0f64, -0.5, 0.0, 0.3, 1.7, 5.0, 12.0] {
            let direct = (x * x).exp() * erfc(x);
            assert!((erfcx(x) / direct - 1.0).abs() < 1e-13, "x={x}");
        }
    }

    #[test]
    fn erfcx_is_continuous_at_series_switch() {
        let a = erfcx(25.0 - 1e-9);
        let b = erfcx(25.0 + 1e-9);
        // the true function moves by ~1e-10 relative across this gap
        assert!((a / b - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normal_tail_reference_values() {
        // 1 - Φ(1.96) and Φ(-8)
        assert!((norm_sf(1.96) - 0.024_997_895_148_220_435).abs() < 1e-15);
        assert!((norm_cdf(-8.0) / 6.220_960_574_271_785e-16 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-5, 0.01, 0.3, 0.5, 0.77, 0.999_999] {
            let z = norm_quantile(p);
            assert!((norm_cdf(z) / p - 1.0).abs() < 1e-11, "p={p}");
        }
    }

    #[test]
    fn truncated_moments_branch_agreement() {
        let lo = hazard_excess_and_variance(20.0 - 1e-9);
        let hi = hazard_excess_and_variance(20.0 + 1e-9);
        assert!((lo.0 / hi.0 - 1.0).abs() < 1e-9);
        assert!((lo.1 / hi.1 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn truncated_at_mean_is_half_normal() {
        let (m, v) = TruncatedNormal::new(0.0, 1.0, 0.0).moments();
        let pi = std::f64::consts::PI;
        assert!((m - (2.0 / pi).sqrt()).abs() < 1e-15);
        assert!((v - (1.0 - 2.0 / pi)).abs() < 1e-15);
    }

    #[test]
    fn truncated_sampler_matches_moments() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for &(mu, lower) in &[(0.0, -1.0), (-2.0, -1.0), (-6.0, 0.0)] {
            let tn = TruncatedNormal::new(mu, 0.7, lower);
            let (m, v) = tn.moments();
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| tn.sample(&mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            assert!(xs.iter().all(|&x| x >= lower));
            assert!((mean - m).abs() < 5.0 * (v / n as f64).sqrt(), "mu={mu}");
        }
    }
}
