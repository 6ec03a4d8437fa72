//! Chi-square distribution functions built on the regularized incomplete
//! gamma function. Self-contained so results are bit-stable across builds.
#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 500;

/// Log-gamma via the Lanczos approximation (g = 7, 9 coefficients).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection formula
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Lower regularized incomplete gamma P(a, x) by series expansion.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    for n in 1..MAX_ITER {
        term *= x / (a + n as f64);
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (a * x.ln() - x - ln_gamma(a)).exp()
}

/// Upper regularized incomplete gamma Q(a, x) by Lentz continued fraction.
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    (a * x.ln() - x - ln_gamma(a)).exp() * h
}

/// Lower regularized incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_cf(a, x)
    }
}

/// Upper regularized incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

/// CDF of the chi-square distribution with `dof` degrees of freedom.
pub fn chi2_cdf(dof: usize, x: f64) -> f64 {
    assert!(dof >= 1);
    if x <= 0.0 {
        0.0
    } else {
        gamma_p(dof as f64 / 2.0, x / 2.0)
    }
}

/// Survival function 1 - CDF, computed on the stable branch.
pub fn chi2_sf(dof: usize, x: f64) -> f64 {
    assert!(dof >= 1);
    if x <= 0.0 {
        1.0
    } else {
        gamma_q(dof as f64 / 2.0, x / 2.0)
    }
}

/// Density of the chi-square distribution.
pub fn chi2_pdf(dof: usize, x: f64) -> f64 {
    assert!(dof >= 1);
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return match dof {
            1 => f64::INFINITY,
            2 => 0.5,
            _ => 0.0,
        };
    }
    let a = dof as f64 / 2.0;
    ((a - 1.0) * x.ln() - x / 2.0 - a * 2.0_f64.ln() - ln_gamma(a)).exp()
}

/// Quantile of order `p` of the chi-square distribution, by bracketed
/// Newton iteration on the CDF. Absolute error below 1e-10.
pub fn chi2_quantile(dof: usize, p: f64) -> Result<f64> {
    assert!(dof >= 1);
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "chi2_quantile: probability {p} outside (0, 1)"
        )));
    }
    let k = dof as f64;
    // Wilson-Hilferty starting point.
    let z = norm_quantile(p);
    let wh = {
        let c = 2.0 / (9.0 * k);
        let base = 1.0 - c + z * c.sqrt();
        k * base * base * base
    };
    let mut x = if wh.is_finite() && wh > 0.0 { wh } else { k };

    let mut lo = 0.0_f64;
    let mut hi = x.max(k).max(1.0);
    while chi2_cdf(dof, hi) < p {
        hi *= 2.0;
        if hi > 1e18 {
            return Err(Error::Numeric("chi2_quantile: bracket expansion failed".into()));
        }
    }
    x = x.clamp(lo + 1e-12, hi);

    for _ in 0..200 {
        let f = chi2_cdf(dof, x) - p;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if f.abs() < 1e-15 {
            break;
        }
        let dens = chi2_pdf(dof, x);
        let step_ok = dens > 1e-300;
        let mut next = if step_ok { x - f / dens } else { 0.5 * (lo + hi) };
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() < 1e-13 * x.max(1.0) {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x)
}

/// Inverse standard normal CDF (Acklam's rational approximation; absolute
/// error below 1.2e-9, ample for a Newton starting point).
pub fn norm_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -39.696_830_286_653_76,
        220.946_098_424_520_8,
        -275.928_510_446_968_94,
        138.357_751_867_269,
        -30.664_798_066_147_16,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -54.476_098_798_224_06,
        161.585_836_858_040_94,
        -155.698_979_859_886_66,
        66.801_311_887_719_72,
        -13.280_681_552_885_72,
    ];
    const C: [f64; 6] = [
        -0.007_784_894_002_430_293,
        -0.322_396_458_041_136_4,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        0.007_784_695_709_041_462,
        0.322_467_129_070_039_8,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let p_low = 0.024_25;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Quadrature oracle for the chi-square CDF: composite Simpson rule on
    /// the density, independent of the incomplete-gamma code path (the
    /// density normalisation uses exact factorials for even dof).
    fn chi2_cdf_simpson(dof: usize, x: f64) -> f64 {
        assert!(dof.is_multiple_of(2), "oracle uses exact even-dof normalisation");
        let a = dof as f64 / 2.0;
        let mut gamma_a = 1.0; // (a-1)! for integer a
        for k in 2..dof / 2 {
            gamma_a *= k as f64;
        }
        let pdf = |t: f64| -> f64 {
            if t <= 0.0 {
                // the density limit at zero: 1/2 for dof 2, zero for dof >= 4
                if dof == 2 { 0.5 } else { 0.0 }
            } else {
                t.powf(a - 1.0) * (-t / 2.0).exp() / (2.0_f64.powf(a) * gamma_a)
            }
        };
        let steps = 20_000;
        let h = x / steps as f64;
        let mut acc = pdf(0.0) + pdf(x);
        for i in 1..steps {
            let t = i as f64 * h;
            acc += pdf(t) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn quantile_dof2_closed_form() {
        // For dof 2 the CDF is 1 - exp(-x/2), so the median is 2 ln 2.
        let expect = 2.0 * 2.0_f64.ln();
        let got = chi2_quantile(2, 0.5).unwrap();
        assert!((got - expect).abs() < 1e-10, "got {got}");
    }

    #[test]
    fn quantile_dof6_cross_checked_by_quadrature() {
        let q = chi2_quantile(6, 0.95).unwrap();
        assert!((q - 12.5916).abs() < 5e-4, "got {q}");
        // Independent integration of the density at the computed quantile.
        let cdf = chi2_cdf_simpson(6, q);
        assert!((cdf - 0.95).abs() < 1e-8, "oracle cdf {cdf}");
    }

    #[test]
    fn cdf_matches_quadrature_on_grid() {
        for dof in [2usize, 4, 6, 10] {
            for x in [0.5, 2.0, 7.5, 20.0] {
                let diff = (chi2_cdf(dof, x) - chi2_cdf_simpson(dof, x)).abs();
                assert!(diff < 1e-9, "dof={dof} x={x} diff={diff:.2e}");
            }
        }
    }

    #[test]
    fn sf_quantile_inverse_pair() {
        for dof in [1usize, 2, 3, 6, 12] {
            for p in [0.01, 0.25, 0.5, 0.9, 0.99, 0.999] {
                let x = chi2_quantile(dof, p).unwrap();
                assert!(
                    (chi2_sf(dof, x) - (1.0 - p)).abs() < 1e-8,
                    "dof={dof} p={p}"
                );
            }
        }
    }

    #[test]
    fn quantile_strictly_increasing_in_p() {
        for dof in [1usize, 4, 9] {
            let mut prev = 0.0;
            for i in 1..40 {
                let p = i as f64 / 40.0;
                let x = chi2_quantile(dof, p).unwrap();
                assert!(x > prev, "dof={dof} p={p}");
                prev = x;
            }
        }
    }

    #[test]
    fn quantile_rejects_bad_probability() {
        assert!(chi2_quantile(3, 0.0).is_err());
        assert!(chi2_quantile(3, 1.0).is_err());
        assert!(chi2_quantile(3, -0.2).is_err());
    }
}
