//! Statistical kernels for Monte-Carlo certification: the standard normal
//! CDF and quantile, the regularized incomplete beta function and its
//! inverse, and one-sided Clopper–Pearson lower bounds.

use std::f64::consts::{PI, SQRT_2};

use serde::Serialize;

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

// Acklam's rational approximation, relative error about 1.15e-9.
fn acklam_lower(p: f64) -> f64 {
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
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Inverse of the standard normal CDF.
///
/// Rational initial guess refined by Halley steps on `Φ(z) − p`. Computed on
/// the lower half and reflected, so `Φ⁻¹(1 − p) = −Φ⁻¹(p)` holds exactly
/// whenever `1 − p` is representable.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile needs 0 < p < 1, got {p}"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let (tail, sign) = if p < 0.5 { (p, 1.0) } else { (1.0 - p, -1.0) };
    let mut z = acklam_lower(tail);
    for _ in 0..3 {
        let err = std_normal_cdf(z) - tail;
        let pdf = std_normal_pdf(z);
        if pdf == 0.0 {
            break;
        }
        let u = err / pdf;
        let step = u / (1.0 + 0.5 * z * u);
        z -= step;
        if step.abs() <= 1e-16 * z.abs().max(1.0) {
            break;
        }
    }
    Ok(sign * z)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

// Continued fraction for I_x(a, b) by the modified Lentz method.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain(format!(
            "incomplete beta needs a, b > 0, got a={a}, b={b}"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!(
            "incomplete beta needs 0 ≤ x ≤ 1, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    let front = ln_front.exp();
    let value = if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    };
    Ok(value.clamp(0.0, 1.0))
}

/// `q`-quantile of `Beta(a, b)`: the `x` with `I_x(a, b) = q`, by bisection.
pub fn beta_quantile(a: f64, b: f64, q: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain(format!(
            "beta quantile needs a, b > 0, got a={a}, b={b}"
        )));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!(
            "beta quantile needs 0 < q < 1, got {q}"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    // I_x is continuous and increasing in x; bisect until the bracket collapses
    for _ in 0..1100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if regularized_incomplete_beta(a, b, mid)? < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Monte-Carlo estimate of a binary outcome probability with its one-sided
/// lower confidence bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProbabilityBound {
    pub point: f64,
    pub lower: f64,
    pub n_success: u64,
    pub n_fail: u64,
    pub alpha: f64,
}

/// One-sided Clopper–Pearson lower bound at confidence `1 − alpha`:
/// the `alpha`-quantile of `Beta(n_success, n_fail + 1)`, and 0 when no
/// success was observed.
pub fn binomial_lower_bound(n_success: u64, n_fail: u64, alpha: f64) -> Result<ProbabilityBound> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let total = n_success + n_fail;
    if total == 0 {
        return Err(Error::Domain(
            "binomial bound needs at least one trial".into(),
        ));
    }
    let lower = if n_success == 0 {
        0.0
    } else {
        beta_quantile(n_success as f64, n_fail as f64 + 1.0, alpha)?
    };
    Ok(ProbabilityBound {
        point: n_success as f64 / total as f64,
        lower,
        n_success,
        n_fail,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Independent CDF oracle: statrs' erf, inverted by plain bisection.
    fn oracle_quantile(p: f64) -> f64 {
        let cdf = |z: f64| 0.5 * (1.0 + statrs::function::erf::erf(z / SQRT_2));
        let (mut lo, mut hi) = (-40.0f64, 40.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < p {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    // Simpson integration of the beta density on [0, x], then bisection.
    fn simpson_beta_cdf(a: f64, b: f64, x: f64, panels: usize) -> f64 {
        let ln_b = ln_beta(a, b);
        let pdf = |t: f64| {
            if t <= 0.0 || t >= 1.0 {
                0.0
            } else {
                ((a - 1.0) * t.ln() + (b - 1.0) * (1.0 - t).ln() - ln_b).exp()
            }
        };
        let h = x / panels as f64;
        let mut sum = pdf(0.0) + pdf(x);
        for i in 1..panels {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * pdf(i as f64 * h);
        }
        sum * h / 3.0
    }

    fn simpson_beta_quantile(a: f64, b: f64, q: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..45 {
            let mid = 0.5 * (lo + hi);
            if simpson_beta_cdf(a, b, mid, 1_000_000) < q {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn normal_quantile_examples() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        let z975 = std_normal_quantile(0.975).unwrap();
        assert_abs_diff_eq!(z975, 1.959963984540054, epsilon = 1e-12);
        assert_abs_diff_eq!(z975, oracle_quantile(0.975), epsilon = 1e-10);
        let z9 = std_normal_quantile(0.9).unwrap();
        assert_abs_diff_eq!(z9, 1.2815515655446004, epsilon = 1e-12);
        assert_abs_diff_eq!(z9, oracle_quantile(0.9), epsilon = 1e-10);
    }

    #[test]
    fn normal_quantile_domain() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(std_normal_quantile(p), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn normal_quantile_matches_oracle_and_symmetry() {
        for i in 1..200 {
            let p = i as f64 / 200.0;
            let z = std_normal_quantile(p).unwrap();
            assert!((std_normal_cdf(z) - p).abs() <= 1e-12, "p={p}");
            assert_abs_diff_eq!(z, oracle_quantile(p), epsilon = 1e-10);
            let mirrored = std_normal_quantile(1.0 - p).unwrap();
            assert_abs_diff_eq!(mirrored, -z, epsilon = 1e-12);
        }
    }

    #[test]
    fn beta_quantile_examples() {
        assert_abs_diff_eq!(
            beta_quantile(1.0, 1.0, 0.25).unwrap(),
            0.25,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(beta_quantile(2.0, 1.0, 0.25).unwrap(), 0.5, epsilon = 1e-12);
        let x = beta_quantile(5.0, 3.0, 0.5).unwrap();
        assert_abs_diff_eq!(x, 0.6358839135519174, epsilon = 1e-10);
        assert_abs_diff_eq!(x, simpson_beta_quantile(5.0, 3.0, 0.5), epsilon = 1e-9);
        let i = regularized_incomplete_beta(5.0, 3.0, x).unwrap();
        assert!((i - 0.5).abs() <= 1e-10);
    }

    #[test]
    fn beta_quantile_domain() {
        assert!(beta_quantile(0.0, 1.0, 0.5).is_err());
        assert!(beta_quantile(1.0, -1.0, 0.5).is_err());
        assert!(beta_quantile(1.0, 1.0, 0.0).is_err());
        assert!(beta_quantile(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn incomplete_beta_matches_statrs() {
        for &(a, b) in &[
            (0.5, 0.5),
            (2.0, 3.0),
            (30.0, 4.0),
            (180.0, 21.0),
            (1.0, 200.0),
        ] {
            for k in 1..20 {
                let x = k as f64 / 20.0;
                let ours = regularized_incomplete_beta(a, b, x).unwrap();
                let theirs = statrs::function::beta::beta_reg(a, b, x);
                assert_abs_diff_eq!(ours, theirs, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn clopper_pearson_examples() {
        let none = binomial_lower_bound(0, 37, 0.3).unwrap();
        assert_eq!(none.lower, 0.0);
        let all = binomial_lower_bound(100, 0, 0.3).unwrap();
        assert_abs_diff_eq!(all.lower, 0.3f64.powf(0.01), epsilon = 1e-10);
        assert_abs_diff_eq!(all.lower, 0.9880324594859137, epsilon = 1e-10);
        let mixed = binomial_lower_bound(180, 20, 0.3).unwrap();
        assert_abs_diff_eq!(mixed.lower, 0.885218271700636, epsilon = 1e-10);
        assert_abs_diff_eq!(
            mixed.lower,
            simpson_beta_quantile(180.0, 21.0, 0.3),
            epsilon = 1e-9
        );
        assert!(mixed.lower <= mixed.point);
        assert!(binomial_lower_bound(0, 0, 0.3).is_err());
        assert!(binomial_lower_bound(3, 3, 1.0).is_err());
    }
}
