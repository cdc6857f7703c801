//! Linear stability of the normal phase.
//!
//! For the Gaussian normal phase f₀ ∝ exp(−u²/2 − ξ²/ℓ²) the double integral
//! over position and momentum in the dispersion function separates: the
//! spatial factor integrates the normalized profile to one, and with s = γ
//! real the momentum factor reduces to
//!
//! ```text
//! D_n(γ) = (2n+1)π − 2πζ₀ε R(γ),   R(γ) = ∫ u²/(γ²+u²) g(u) du,
//! ```
//!
//! with g the standard normal density. R falls monotonically from 1 at γ = 0
//! to 0 as γ → ∞, so D_n is increasing in γ and has a positive root exactly
//! when 2ζ₀εR(0) > 2n+1.
//!
//! R is evaluated with an order-200 Gauss–Hermite rule when γ is large. For
//! small γ the poles at u = ±iγ spoil the Hermite rule, and R is written as
//! 1 − 2γ∫₀^{π/2} g(γ tan θ) dθ and integrated adaptively.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Params;
use crate::numerics::{quad_adaptive, try_find_root, GaussRule};

pub const HERMITE_ORDER: usize = 200;
const HERMITE_MIN_GAMMA: f64 = 1.5;
const QUAD_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeParameter {
    pub gamma: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub n: usize,
    pub eps: f64,
    pub eps_over_eps_c: f64,
    pub gamma: Option<f64>,
}

fn hermite_rule() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| GaussRule::hermite(HERMITE_ORDER))
}

fn normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

/// Velocity kernel R(γ) = ∫ u²/(γ²+u²) g(u) du for γ ≥ 0.
pub fn velocity_kernel(gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("growth rate must be non-negative, got {gamma}")));
    }
    if gamma == 0.0 {
        // ∫ g = 1, kept numerical so that the threshold stays a measured quantity
        return Ok(2.0 * quad_adaptive(normal_pdf, 0.0, f64::INFINITY, QUAD_TOL)?);
    }
    if gamma >= HERMITE_MIN_GAMMA {
        // u = √2 x turns g(u) du into e^{−x²} dx/√π
        let g2 = gamma * gamma;
        let s = hermite_rule().integrate(|x| {
            let u2 = 2.0 * x * x;
            u2 / (g2 + u2)
        });
        return Ok(s / PI.sqrt());
    }
    let inner = quad_adaptive(|t| normal_pdf(gamma * t.tan()), 0.0, 0.5 * PI, QUAD_TOL)?;
    Ok(1.0 - 2.0 * gamma * inner)
}

/// Dimensionless dispersion function D_n on the positive real axis.
pub fn dispersion(n: usize, gamma: f64, params: &Params) -> Result<f64> {
    let r = velocity_kernel(gamma)?;
    Ok((2 * n + 1) as f64 * PI - 2.0 * PI * params.zeta0 * params.eps * r)
}

/// The unique positive root of D_n, or `None` when the normal phase is stable
/// against mode n.
pub fn growth_rate(n: usize, params: &Params) -> Result<Option<ModeParameter>> {
    let d0 = dispersion(n, 0.0, params)?;
    if d0 >= 0.0 {
        return Ok(None);
    }
    let mut hi = 1.0;
    while dispersion(n, hi, params)? <= 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Numerical("no upper bracket for the growth rate".into()));
        }
    }
    let tol = 1e-15f64.max(hi * 1e-15);
    let r = try_find_root(|g| dispersion(n, g, params), (0.0, hi), tol).map_err(|e| match e {
        Error::Bracket { .. } => Error::Numerical(format!("growth-rate bracket failed: {e}")),
        other => other,
    })?;
    if r.location <= 0.0 {
        // marginal: D_n(0) is negative only by rounding
        return Ok(None);
    }
    Ok(Some(ModeParameter { gamma: r.location, omega: 0.0 }))
}

/// Growth rates for n = 0..=n_max at every ε of an ascending grid, ordered by
/// (ε, n).
pub fn threshold_scan(params: &Params, eps_grid: &[f64]) -> Result<Vec<StabilityReport>> {
    if eps_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain("eps grid must be strictly ascending".into()));
    }
    let eps_c = params.eps_c();
    let jobs: Vec<(f64, usize)> = eps_grid
        .iter()
        .flat_map(|&e| (0..=params.n_max).map(move |n| (e, n)))
        .collect();
    jobs.par_iter()
        .map(|&(eps, n)| {
            let p = params.with_eps(eps);
            let gamma = growth_rate(n, &p)?.map(|m| m.gamma);
            Ok(StabilityReport { n, eps, eps_over_eps_c: eps / eps_c, gamma })
        })
        .collect()
}

/// Two measurements of the onset of instability of mode n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdMeasurement {
    /// Bisection on the existence of a growth rate.
    pub existence: f64,
    /// Zero of γ(ε), extrapolated quadratically from three points just above onset.
    pub extrapolated: f64,
}

pub fn measure_threshold(zeta0: f64, n: usize, ell: f64) -> Result<ThresholdMeasurement> {
    let base = Params::new(zeta0, 0.0, ell, n)?;
    let guess = (2 * n + 1) as f64 * base.eps_c();
    let unstable = |eps: f64| -> Result<bool> { Ok(growth_rate(n, &base.with_eps(eps))?.is_some()) };
    let (mut lo, mut hi) = (0.5 * guess, 2.0 * guess);
    if unstable(lo)? || !unstable(hi)? {
        return Err(Error::Numerical("threshold not bracketed".into()));
    }
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if unstable(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let existence = 0.5 * (lo + hi);

    let xs = [1.001, 1.002, 1.003].map(|f| f * existence);
    let mut ys = [0.0; 3];
    for (y, &x) in ys.iter_mut().zip(&xs) {
        *y = growth_rate(n, &base.with_eps(x))?
            .ok_or_else(|| Error::Numerical("no growth rate above measured threshold".into()))?
            .gamma;
    }
    // root of the interpolating quadratic nearest the data
    let (x0, x1, x2) = (xs[0], xs[1], xs[2]);
    let d1 = (ys[1] - ys[0]) / (x1 - x0);
    let d2 = ((ys[2] - ys[1]) / (x2 - x1) - d1) / (x2 - x0);
    let f = |x: f64| ys[0] + d1 * (x - x0) + d2 * (x - x0) * (x - x1);
    let df = |x: f64| d1 + d2 * (2.0 * x - x0 - x1);
    let mut x = x0 - ys[0] / d1;
    for _ in 0..50 {
        let step = f(x) / df(x);
        x -= step;
        if step.abs() < 1e-16 * x.abs() {
            break;
        }
    }
    Ok(ThresholdMeasurement { existence, extrapolated: x })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(zeta0: f64, eps: f64) -> Params {
        Params::new(zeta0, eps, 100.0, 3).unwrap()
    }

    #[test]
    fn unpumped_dispersion_is_constant() {
        for n in 0..3 {
            for &g in &[0.01, 0.5, 3.0] {
                let d = dispersion(n, g, &params(0.4, 0.0)).unwrap();
                assert!((d - (2 * n + 1) as f64 * PI).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn large_gamma_limit() {
        let d = dispersion(1, 1e6, &params(0.05, 20.0)).unwrap();
        assert!((d - 3.0 * PI).abs() < 1e-8);
    }

    #[test]
    fn both_kernel_paths_agree() {
        let g = HERMITE_MIN_GAMMA;
        let h = {
            let g2 = g * g;
            hermite_rule().integrate(|x| 2.0 * x * x / (g2 + 2.0 * x * x)) / PI.sqrt()
        };
        let a = 1.0 - 2.0 * g * quad_adaptive(|t| normal_pdf(g * t.tan()), 0.0, 0.5 * PI, 1e-14).unwrap();
        assert!((h - a).abs() < 1e-13);
    }

    #[test]
    fn kernel_small_gamma_expansion() {
        // R(γ) = 1 − γ√(π/2) + γ² + O(γ³)
        let g = 1e-4;
        let r = velocity_kernel(g).unwrap();
        assert!((r - (1.0 - g * (0.5 * PI).sqrt() + g * g)).abs() < 1e-11);
    }

    #[test]
    fn stable_below_threshold() {
        assert!(growth_rate(0, &params(0.05, 0.99 * 10.0)).unwrap().is_none());
        assert!(growth_rate(1, &params(0.05, 25.0)).unwrap().is_none());
    }

    #[test]
    fn gamma_vanishes_continuously() {
        let g = |f: f64| growth_rate(0, &params(0.05, f * 10.0)).unwrap().unwrap().gamma;
        let (a, b, c) = (g(1.001), g(1.01), g(1.1));
        assert!(0.0 < a && a < b && b < c);
        assert!(a < 1e-3);
    }

    #[test]
    fn branch_ordering() {
        let p = params(0.05, 80.0);
        let g: Vec<f64> = (0..4).map(|n| growth_rate(n, &p).unwrap().unwrap().gamma).collect();
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn scan_brackets_threshold() {
        let p = params(0.5, 0.0);
        let grid = [0.99, 0.999, 1.001, 1.01];
        let r = threshold_scan(&Params { n_max: 0, ..p }, &grid).unwrap();
        let first = r.iter().position(|s| s.gamma.is_some()).unwrap();
        assert_eq!(r[first].eps, 1.001);
        assert!(threshold_scan(&p, &[0.1, 0.2]).unwrap().iter().all(|s| s.gamma.is_none()));
    }

    #[test]
    fn threshold_measurement() {
        let m = measure_threshold(1.0, 0, 100.0).unwrap();
        assert!((m.existence - 0.5).abs() < 1e-12);
        assert!((m.extrapolated / 0.5 - 1.0).abs() < 1e-6);
    }
}
