//! Standard normal distribution helpers and the upper-truncated normal sampler
//! used to impute left-censored responses.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::math;

const SQRT_2: f64 = core::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Tail threshold (in standard deviations below the mean) where inverse-CDF
/// sampling hands over to exponential rejection.
pub const TAIL_SWITCH: f64 = 5.0;
const MAX_REJECTIONS: usize = 10_000;

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * math::erfc(-x / SQRT_2)
}

pub fn std_normal_ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation followed by one Halley correction, good to
/// roughly machine precision on (0, 1).
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let x = if p < P_LOW {
        let q = math::sqrt(-2.0 * math::ln(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = math::sqrt(-2.0 * math::ln_1p(-p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley step; the error is measured on whichever tail keeps precision.
    let e = if x < 0.0 {
        std_normal_cdf(x) - p
    } else {
        (1.0 - p) - 0.5 * math::erfc(x / SQRT_2)
    };
    let u = e * math::sqrt(2.0 * core::f64::consts::PI) * math::exp(0.5 * x * x);
    x - u / (1.0 + 0.5 * x * u)
}

/// Draw from `Normal(mean, sd^2)` conditioned on the value being `<= upper`.
///
/// The standardized bound `b = (upper - mean) / sd` decides the method:
/// inverse CDF when `b >= -TAIL_SWITCH`, Robert's translated-exponential
/// rejection deeper in the lower tail. The result never exceeds `upper`.
pub fn sample_upper_truncated<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, upper: f64) -> f64 {
    debug_assert!(sd > 0.0);
    if upper == f64::INFINITY {
        let z: f64 = StandardNormal.sample(rng);
        return mean + sd * z;
    }
    let b = (upper - mean) / sd;
    let z = if b >= -TAIL_SWITCH {
        let cap = std_normal_cdf(b);
        // u in (0, cap]
        let u: f64 = 1.0 - rng.random::<f64>();
        std_normal_quantile(u * cap).min(b)
    } else {
        -sample_lower_tail(rng, -b)
    };
    // sd * z may round past the bound by an ulp
    (mean + sd * z).min(upper)
}

/// Standard normal conditioned on `z >= a` for `a > 0`, Robert (1995).
fn sample_lower_tail<R: Rng + ?Sized>(rng: &mut R, a: f64) -> f64 {
    let alpha = 0.5 * (a + math::sqrt(a * a + 4.0));
    let exp = Exp::new(alpha).expect("rate is positive");
    for _ in 0..MAX_REJECTIONS {
        let z = a + exp.sample(rng);
        let accept = math::exp(-0.5 * math::sq(z - alpha));
        if rng.random::<f64>() <= accept {
            return z;
        }
    }
    // acceptance is above 0.9 for a > 5; this is unreachable in practice
    a + 1.0 / alpha
}

/// Log density of the upper-truncated normal at `x`.
pub fn upper_truncated_ln_pdf(x: f64, mean: f64, sd: f64, upper: f64) -> f64 {
    if x > upper {
        return f64::NEG_INFINITY;
    }
    let z = (x - mean) / sd;
    let b = (upper - mean) / sd;
    std_normal_ln_pdf(z) - math::ln(sd) - ln_std_normal_cdf(b)
}

/// `ln Phi(x)` without underflow in the far lower tail.
pub fn ln_std_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        math::ln(std_normal_cdf(x))
    } else {
        // Mills-ratio asymptotic series
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        std_normal_ln_pdf(x) - math::ln(-x) + math::ln(series)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let x = std_normal_quantile(p);
            assert!((std_normal_cdf(x) - p).abs() < 1e-15, "p = {p}");
        }
        for &p in &[1e-300, 1e-100, 1e-20, 1e-8] {
            let x = std_normal_quantile(p);
            assert!(((std_normal_cdf(x) - p) / p).abs() < 1e-12, "p = {p}");
        }
        assert_eq!(std_normal_quantile(0.5), 0.0);
    }

    #[test]
    fn half_normal_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let draws: std::vec::Vec<f64> = (0..n)
            .map(|_| sample_upper_truncated(&mut rng, 0.0, 1.0, 0.0))
            .collect();
        let m = math::mean(&draws);
        let se = math::sqrt(math::variance(&draws) / n as f64);
        let target = -math::sqrt(2.0 / core::f64::consts::PI);
        assert!((m - target).abs() < 3.0 * se, "mean {m}, se {se}");
        assert!(draws.iter().all(|&x| x <= 0.0));
    }

    #[test]
    fn deep_tail_respects_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50_000 {
            let x = sample_upper_truncated(&mut rng, 3.0, 0.5, 3.0 - 0.5 * 12.0);
            assert!(x <= -3.0);
            assert!(x > -4.0);
        }
    }

    #[test]
    fn tail_mean_matches_mills_ratio() {
        // E[Z | Z <= b] = -phi(b) / Phi(b)
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = -6.0;
        let n = 50_000;
        let draws: std::vec::Vec<f64> = (0..n)
            .map(|_| sample_upper_truncated(&mut rng, 0.0, 1.0, b))
            .collect();
        let target = -math::exp(std_normal_ln_pdf(b) - ln_std_normal_cdf(b));
        let se = math::sqrt(math::variance(&draws) / n as f64);
        assert!((math::mean(&draws) - target).abs() < 4.0 * se);
    }

    #[test]
    fn far_above_limit_is_untruncated() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let draws: std::vec::Vec<f64> = (0..n)
            .map(|_| sample_upper_truncated(&mut rng, 2.0, 3.0, 1e12))
            .collect();
        assert!((math::mean(&draws) - 2.0).abs() < 4.0 * 3.0 / 100.0);
        assert!((math::variance(&draws) - 9.0).abs() < 0.5);
    }

    #[test]
    fn ln_cdf_continuous_at_switch() {
        let a = ln_std_normal_cdf(-29.999_999);
        let b = ln_std_normal_cdf(-30.000_001);
        assert!((a - b).abs() < 1e-4);
    }
}
