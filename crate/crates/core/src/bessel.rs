//! Modified Bessel function of the second kind, order one.
//!
//! Power series below `x = 2`, Temme's continued fraction (Steed's
//! algorithm) above. Both branches are accurate to a few ulps of the
//! scaled value `x K1(x)`.

use crate::math;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_SPLIT: f64 = 2.0;
const MAX_TERMS: usize = 500;

/// `K1(x)` for `x > 0`. Returns `+inf` at zero and NaN for negative input.
pub fn bessel_k1(x: f64) -> f64 {
    if x.is_nan() || x < 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::INFINITY;
    }
    if x <= SERIES_SPLIT {
        k1_series(x)
    } else {
        k1_continued_fraction(x)
    }
}

/// `x K1(x)`, continuously extended with value 1 at `x = 0`.
pub fn x_k1(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if x.is_infinite() && x > 0.0 {
        return 0.0;
    }
    x * bessel_k1(x)
}

// K1(x) = 1/x + ln(x/2) I1(x) - (x/4) sum_k [psi(k+1) + psi(k+2)] (x^2/4)^k / (k! (k+1)!)
fn k1_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0; // (x^2/4)^k / (k! (k+1)!)
    let mut i1_sum = 0.0;
    let mut psi_sum = 0.0;
    // psi(k+1) = -gamma + H_k
    let mut harmonic_k = 0.0;
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        let harmonic_k1 = harmonic_k + 1.0 / (kf + 1.0);
        let psi = 2.0 * (-EULER_GAMMA) + harmonic_k + harmonic_k1;
        i1_sum += term;
        psi_sum += psi * term;
        if term < 1e-18 * i1_sum {
            break;
        }
        term *= q / ((kf + 1.0) * (kf + 2.0));
        harmonic_k = harmonic_k1;
    }
    let i1 = 0.5 * x * i1_sum;
    1.0 / x + math::ln(0.5 * x) * i1 - 0.25 * x * psi_sum
}

// Temme's CF2 with mu = 0, returns K_{mu+1} = K1.
fn k1_continued_fraction(x: f64) -> f64 {
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..MAX_TERMS {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if math::abs(dels / s) < f64::EPSILON {
            break;
        }
    }
    h *= a1;
    let k0 = math::sqrt(core::f64::consts::PI / (2.0 * x)) * math::exp(-x) / s;
    k0 * (x + 0.5 - h) / x
}
