//! Gamma-function kernel and the closed-form constants built on it.
//!
//! Everything here is a pure function of its arguments.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;

// g = 7, n = 9 coefficient set.
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Above this argument the direct product form would overflow `f64`.
const GAMMA_MAX_ARG: f64 = 171.6;

fn lanczos_sum(x: f64) -> f64 {
    // x is the shifted argument (z - 1).
    LANCZOS_COEFFS
        .iter()
        .enumerate()
        .skip(1)
        .fold(LANCZOS_COEFFS[0], |acc, (i, &c)| acc + c / (x + i as f64))
}

/// Gamma function for real `x > 0`.
///
/// Arguments below 1/2 are shifted up with `Γ(x) = Γ(x+1)/x`, which keeps the
/// whole positive axis inside the accurate region of the Lanczos series.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("gamma requires x > 0, got {x}")));
    }
    if x < 0.5 {
        return Ok(gamma(x + 1.0)? / x);
    }
    if x > GAMMA_MAX_ARG {
        return Err(Error::domain(format!(
            "gamma({x}) overflows f64; use ln_gamma"
        )));
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    // Split the power so t^(z+1/2) cannot overflow before the exponential damps it.
    let half_pow = t.powf((z + 0.5) / 2.0);
    Ok((2.0 * PI).sqrt() * half_pow * (half_pow * (-t).exp()) * lanczos_sum(z))
}

/// Natural logarithm of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("ln_gamma requires x > 0, got {x}")));
    }
    if x < 0.5 {
        return Ok(ln_gamma(x + 1.0)? - x.ln());
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    Ok(LN_SQRT_2PI + (z + 0.5) * t.ln() - t + lanczos_sum(z).ln())
}

/// `Γ(a) / Γ(b)`, switching to log space when either argument is large.
pub fn gamma_ratio(a: f64, b: f64) -> Result<f64> {
    if a.max(b) < 150.0 {
        Ok(gamma(a)? / gamma(b)?)
    } else {
        Ok((ln_gamma(a)? - ln_gamma(b)?).exp())
    }
}

fn check_order(k: u32, what: &str) -> Result<()> {
    if k == 0 {
        Err(Error::domain(format!("{what} requires k >= 1")))
    } else {
        Ok(())
    }
}

/// `∫₀^∞ e^{-ks} / √(1 - e^{-2s}) ds = √π Γ(k/2) / (2 Γ((k+1)/2))`.
pub fn stein_integral_constant(k: u32) -> Result<f64> {
    check_order(k, "stein_integral_constant")?;
    let k = f64::from(k);
    Ok(PI.sqrt() / 2.0 * gamma_ratio(k / 2.0, (k + 1.0) / 2.0)?)
}

/// The constant `Γ(k/2) / (√2 Γ((k+1)/2))` that multiplies `‖h^(k-1)‖` in the
/// one-derivative-lower bound on `‖f^(k)‖`.
///
/// It equals `stein_integral_constant(k) · √(2/π)`, i.e. the OU time integral
/// times `E|Z|`, and satisfies `1/√k < value < 1/√(k - 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaRatioConstant {
    pub k: u32,
    pub value: f64,
}

pub fn gamma_ratio_constant(k: u32) -> Result<GammaRatioConstant> {
    check_order(k, "gamma_ratio_constant")?;
    let kf = f64::from(k);
    let value = gamma_ratio(kf / 2.0, (kf + 1.0) / 2.0)? / std::f64::consts::SQRT_2;
    Ok(GammaRatioConstant { k, value })
}

/// `n!!` as a float; log space beyond `n = 40`.
pub fn double_factorial(n: u32) -> f64 {
    if n <= 40 {
        let mut acc = 1.0;
        let mut j = n;
        while j > 1 {
            acc *= f64::from(j);
            j -= 2;
        }
        acc
    } else {
        ln_double_factorial(n).exp()
    }
}

/// `ln(n!!)` via `n!! = 2^{n/2} Γ(n/2 + 1)` (even n) or
/// `2^{(n+1)/2} Γ(n/2 + 1) / √π` (odd n).
pub fn ln_double_factorial(n: u32) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let nf = f64::from(n);
    let lg = ln_gamma(nf / 2.0 + 1.0).expect("positive argument");
    if n % 2 == 0 {
        nf / 2.0 * std::f64::consts::LN_2 + lg
    } else {
        (nf + 1.0) / 2.0 * std::f64::consts::LN_2 + lg - 0.5 * PI.ln()
    }
}

/// `n!` as a float (log space when it would overflow).
pub fn factorial(n: u32) -> f64 {
    if n <= 170 {
        (1..=n).fold(1.0, |acc, j| acc * f64::from(j))
    } else {
        f64::INFINITY
    }
}

/// `ln(n!)`.
pub fn ln_factorial(n: u32) -> f64 {
    if n <= 170 {
        factorial(n).ln()
    } else {
        ln_gamma(f64::from(n) + 1.0).expect("positive argument")
    }
}

/// `E Z^k` for standard normal `Z`: zero for odd `k`, `(k-1)!!` for even `k`.
pub fn normal_moment(k: u32) -> f64 {
    if k % 2 == 1 {
        0.0
    } else if k == 0 {
        1.0
    } else {
        double_factorial(k - 1)
    }
}

/// `E|Z|^k = 2^{k/2} Γ((k+1)/2) / √π`.
///
/// Even orders coincide with `normal_moment`; odd orders reduce to
/// `√(2/π) (k-1)!!`. Both reductions are evaluated through the double
/// factorial so integer-valued results come out exact.
pub fn normal_abs_moment(k: u32) -> f64 {
    if k % 2 == 0 {
        normal_moment(k)
    } else if k == 1 {
        (2.0 / PI).sqrt()
    } else {
        (2.0 / PI).sqrt() * double_factorial(k - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_adaptive;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn gamma_known_values() {
        assert!(rel(gamma(0.5).unwrap(), PI.sqrt()) < 1e-14);
        assert!(rel(gamma(5.0).unwrap(), 24.0) < 1e-14);
        assert!(rel(gamma(1.0).unwrap(), 1.0) < 1e-14);
        assert!(rel(gamma(0.25).unwrap(), 3.625_609_908_221_908_3) < 1e-13);
        assert!(rel(gamma(171.0).unwrap(), factorial(170)) < 1e-12);
    }

    #[test]
    fn gamma_two_and_a_half_against_quadrature() {
        // Γ(2.5) = ∫₀^∞ t^{1.5} e^{-t} dt; t = u/(1-u) maps to [0, 1).
        let oracle = integrate_adaptive(
            |u| {
                if u >= 1.0 {
                    return 0.0;
                }
                let t = u / (1.0 - u);
                t.powf(1.5) * (-t).exp() / ((1.0 - u) * (1.0 - u))
            },
            0.0,
            1.0,
            1e-14,
        );
        assert!(rel(oracle, 1.329_340_388_179_137) < 1e-12);
        assert!(rel(gamma(2.5).unwrap(), oracle) < 1e-12);
    }

    #[test]
    fn gamma_rejects_non_positive() {
        assert!(matches!(gamma(0.0), Err(Error::Domain(_))));
        assert!(matches!(gamma(-1.5), Err(Error::Domain(_))));
        assert!(ln_gamma(-2.0).is_err());
    }

    #[test]
    fn gamma_recurrence() {
        let mut x = 0.5;
        while x <= 50.0 + 1e-9 {
            let lhs = gamma(x + 1.0).unwrap();
            let rhs = x * gamma(x).unwrap();
            assert!(rel(lhs, rhs) <= 1e-12, "x = {x}: {lhs} vs {rhs}");
            x += 0.2;
        }
    }

    #[test]
    fn ln_gamma_matches_gamma() {
        for &x in &[0.3, 0.5, 1.7, 10.0, 55.5, 150.0] {
            let direct = gamma(x).unwrap().ln();
            assert!((ln_gamma(x).unwrap() - direct).abs() < 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn integral_constant_examples() {
        assert!((stein_integral_constant(1).unwrap() - PI / 2.0).abs() < 1e-14);
        assert!((stein_integral_constant(2).unwrap() - 1.0).abs() < 1e-14);
        let k10 = stein_integral_constant(10).unwrap();
        // ∫₀^{π/2} sin^9 θ dθ = 8!!/9!! = 128/315
        assert!(rel(k10, 128.0 / 315.0) < 1e-13);
        let oracle = integrate_adaptive(
            |s: f64| (-10.0 * s).exp() / (-(-2.0 * s).exp_m1()).sqrt(),
            0.0,
            60.0,
            1e-12,
        );
        assert!(rel(k10, oracle) < 1e-9);
        assert!(stein_integral_constant(0).is_err());
    }

    #[test]
    fn gamma_ratio_constant_examples() {
        let c1 = gamma_ratio_constant(1).unwrap().value;
        assert!(rel(c1, (PI / 2.0).sqrt()) < 1e-13);
        let c2 = gamma_ratio_constant(2).unwrap().value;
        assert!(rel(c2, (2.0 / PI).sqrt()) < 1e-13);
        let c100 = gamma_ratio_constant(100).unwrap().value;
        assert!(c100 > 0.1 && c100 < 1.0 / 99.5f64.sqrt());
        assert!((c100 - 0.100_250_308_583_984_3).abs() < 1e-15);
        assert!(gamma_ratio_constant(0).is_err());
    }

    #[test]
    fn gamma_ratio_constant_sandwich_and_monotone() {
        let mut prev = f64::INFINITY;
        for k in 1..=200u32 {
            let v = gamma_ratio_constant(k).unwrap().value;
            let kf = f64::from(k);
            assert!(
                1.0 / kf.sqrt() < v && v < 1.0 / (kf - 0.5).sqrt(),
                "k = {k}"
            );
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn large_order_constants_stay_finite() {
        let v = gamma_ratio_constant(1000).unwrap().value;
        assert!(v > 1.0 / 1000f64.sqrt() && v < 1.0 / 999.5f64.sqrt());
    }

    #[test]
    fn abs_moments() {
        assert!(rel(normal_abs_moment(1), 0.797_884_560_802_865_4) < 1e-14);
        assert_eq!(normal_abs_moment(2), 1.0);
        assert!(rel(normal_abs_moment(3), 1.595_769_121_605_730_7) < 1e-14);
        // ∫|z|³φ(z)dz on a truncated range as an independent check
        let oracle = 2.0
            * integrate_adaptive(
                |z| z.powi(3) * (-z * z / 2.0).exp() / (2.0 * PI).sqrt(),
                0.0,
                40.0,
                1e-14,
            );
        assert!(rel(normal_abs_moment(3), oracle) < 1e-12);
    }

    #[test]
    fn abs_moment_gamma_route_agrees() {
        for k in 0..=60u32 {
            let kf = f64::from(k);
            let via_gamma = (kf / 2.0 * std::f64::consts::LN_2
                + ln_gamma((kf + 1.0) / 2.0).unwrap()
                - 0.5 * PI.ln())
            .exp();
            assert!(rel(normal_abs_moment(k), via_gamma) < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn even_moments_are_double_factorials() {
        let mut df = 1.0;
        for m in 0..=10u32 {
            if m > 0 {
                df *= f64::from(2 * m - 1);
            }
            assert_eq!(normal_moment(2 * m), df);
            assert_eq!(normal_abs_moment(2 * m), df);
            assert_eq!(normal_moment(2 * m + 1), 0.0);
        }
    }

    #[test]
    fn double_factorial_log_branch_continuous() {
        let direct: f64 = (1..=41u32).rev().step_by(2).map(f64::from).product();
        assert!(rel(double_factorial(41), direct) < 1e-12);
        let direct42: f64 = (2..=42u32).rev().step_by(2).map(f64::from).product();
        assert!(rel(double_factorial(42), direct42) < 1e-12);
    }
}
