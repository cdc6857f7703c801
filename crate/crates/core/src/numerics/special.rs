//! Modified Bessel functions of order 0 and 1 and the complete elliptic
//! integral of the first kind.
//!
//! I0/I1 use the ascending series below `SERIES_LIMIT` and the Hankel
//! asymptotic expansion above it. K(m) uses Carlson's symmetric form R_F.

use crate::error::{Error, Result};

/// Largest |x| accepted by the unscaled Bessel functions.
pub const BESSEL_MAX_ARG: f64 = 700.0;

const SERIES_LIMIT: f64 = 20.0;

fn check_arg(x: f64) -> Result<()> {
    if !x.is_finite() || x.abs() > BESSEL_MAX_ARG {
        return Err(Error::Range(format!("Bessel argument {x} outside |x| <= {BESSEL_MAX_ARG}")));
    }
    Ok(())
}

// Ascending series sum_k (x/2)^{2k+nu} / (k! (k+nu)!), all terms positive.
fn series(x: f64, nu: u32) -> f64 {
    let q = 0.25 * x * x;
    let mut term = if nu == 0 { 1.0 } else { 0.5 * x };
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + nu as f64));
        sum += term;
        if term <= sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

// Hankel expansion of e^{-x} I_nu(x) for large positive x.
fn asymptotic_scaled(x: f64, nu: u32) -> f64 {
    let mu = 4.0 * (nu * nu) as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k: f64 = 1.0;
    loop {
        let next = term * ((2.0 * k - 1.0).powi(2) - mu) / (8.0 * k * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() <= sum.abs() * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// e^{-|x|} I0(x), valid for every finite x.
pub fn bessel_i0e(x: f64) -> f64 {
    let a = x.abs();
    if a <= SERIES_LIMIT {
        series(a, 0) * (-a).exp()
    } else {
        asymptotic_scaled(a, 0)
    }
}

/// e^{-|x|} I1(x), valid for every finite x.
pub fn bessel_i1e(x: f64) -> f64 {
    let a = x.abs();
    let v = if a <= SERIES_LIMIT {
        series(a, 1) * (-a).exp()
    } else {
        asymptotic_scaled(a, 1)
    };
    v.copysign(x)
}

pub fn bessel_i0(x: f64) -> Result<f64> {
    check_arg(x)?;
    let a = x.abs();
    Ok(if a <= SERIES_LIMIT {
        series(a, 0)
    } else {
        asymptotic_scaled(a, 0) * a.exp()
    })
}

pub fn bessel_i1(x: f64) -> Result<f64> {
    check_arg(x)?;
    let a = x.abs();
    let v = if a <= SERIES_LIMIT {
        series(a, 1)
    } else {
        asymptotic_scaled(a, 1) * a.exp()
    };
    Ok(if x < 0.0 { -v } else { v })
}

// Carlson's R_F by the duplication theorem.
fn carlson_rf(x: f64, y: f64, z: f64) -> f64 {
    const ERRTOL: f64 = 1e-3;
    let (mut x, mut y, mut z) = (x, y, z);
    loop {
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let lambda = sx * (sy + sz) + sy * sz;
        x = 0.25 * (x + lambda);
        y = 0.25 * (y + lambda);
        z = 0.25 * (z + lambda);
        let ave = (x + y + z) / 3.0;
        let dx = (ave - x) / ave;
        let dy = (ave - y) / ave;
        let dz = (ave - z) / ave;
        if dx.abs().max(dy.abs()).max(dz.abs()) < ERRTOL {
            let e2 = dx * dy - dz * dz;
            let e3 = dx * dy * dz;
            return (1.0 + (e2 / 24.0 - 0.1 - 3.0 * e3 / 44.0) * e2 + e3 / 14.0) / ave.sqrt();
        }
    }
}

/// Complete elliptic integral of the first kind, K(m) = ∫₀^{π/2} dθ / √(1 − m sin²θ),
/// with m the parameter (m = k²).
pub fn elliptic_k(m: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&m) {
        return Err(Error::Domain(format!("elliptic parameter m = {m} outside [0, 1)")));
    }
    Ok(carlson_rf(0.0, 1.0 - m, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn trivial_values() {
        assert_eq!(bessel_i0(0.0).unwrap(), 1.0);
        assert_eq!(bessel_i1(0.0).unwrap(), 0.0);
        assert!((elliptic_k(0.0).unwrap() - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn i0_at_two_matches_forty_terms() {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..40 {
            term *= 1.0 / (k as f64 * k as f64);
            sum += term;
        }
        assert!(rel(bessel_i0(2.0).unwrap(), sum) < 1e-12);
    }

    #[test]
    fn branches_join_smoothly() {
        let lo = series(SERIES_LIMIT, 0) * (-SERIES_LIMIT).exp();
        let hi = asymptotic_scaled(SERIES_LIMIT, 0);
        assert!(rel(lo, hi) < 1e-14);
        let lo = series(SERIES_LIMIT, 1) * (-SERIES_LIMIT).exp();
        let hi = asymptotic_scaled(SERIES_LIMIT, 1);
        assert!(rel(lo, hi) < 1e-14);
    }

    #[test]
    fn range_guard() {
        assert!(matches!(bessel_i0(701.0), Err(Error::Range(_))));
        assert!(matches!(bessel_i1(f64::NAN), Err(Error::Range(_))));
        assert!(bessel_i0(700.0).unwrap().is_finite());
    }

    #[test]
    fn odd_and_even() {
        for &x in &[0.3, 5.0, 33.0] {
            assert_eq!(bessel_i0(-x).unwrap(), bessel_i0(x).unwrap());
            assert_eq!(bessel_i1(-x).unwrap(), -bessel_i1(x).unwrap());
        }
    }

    #[test]
    fn elliptic_domain() {
        assert!(elliptic_k(0.999999).unwrap().is_finite());
        assert!(matches!(elliptic_k(1.0), Err(Error::Domain(_))));
        assert!(matches!(elliptic_k(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn elliptic_near_one_is_logarithmic() {
        // K(m) ≈ ln(4/√(1−m)) as m → 1
        let m: f64 = 1.0 - 1e-12;
        let approx = (4.0 / (1.0 - m).sqrt()).ln();
        assert!((elliptic_k(m).unwrap() - approx).abs() < 1e-9);
    }
}
