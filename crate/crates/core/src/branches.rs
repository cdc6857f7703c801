//! Order-parameter equations of the ordered phase and branch tracing.
//!
//! Three regimes are available: the weak-coupling Bessel equation, the
//! strong-coupling elliptic equation, and the averaged traveling-wave theory
//! of [`crate::reduced_hamiltonian::envelope`], which contains both as limits.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::Params;
use crate::numerics::{bessel_i0, bessel_i0e, bessel_i1, bessel_i1e, elliptic_k, roots_on_nodes};
use crate::reduced_hamiltonian::envelope::{averaged_residual, SEPARATRIX_THETA};

/// Lower end of every root search, separating ordered roots from Θ = 0.
pub const THETA_MIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Weak,
    Strong,
    Averaged,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Weak => "weak",
            Regime::Strong => "strong",
            Regime::Averaged => "averaged",
        })
    }
}

impl FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "weak" => Ok(Regime::Weak),
            "strong" => Ok(Regime::Strong),
            "averaged" => Ok(Regime::Averaged),
            other => Err(format!("unknown regime '{other}' (expected weak, strong or averaged)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPoint {
    pub n: usize,
    pub eps: f64,
    pub theta: f64,
    pub regime: Regime,
    /// Residual at the root in the scaled form used for root finding.
    pub residual: f64,
    /// Set on the points on either side of a detected discontinuity.
    pub fold: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchCurve {
    pub n: usize,
    pub regime: Regime,
    pub points: Vec<BranchPoint>,
    /// (ε*, ΔΘ) of the first discontinuity, if any.
    pub jump: Option<(f64, f64)>,
    pub stalled: bool,
}

/// 2ζ₀ I₁(2ε√Θ) − (1+2n) √Θ I₀(2ε√Θ).
pub fn weak_residual(theta: f64, eps: f64, zeta0: f64, n: usize) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(Error::Domain(format!("Θ must be non-negative, got {theta}")));
    }
    let s = theta.sqrt();
    let x = 2.0 * eps * s;
    Ok(2.0 * zeta0 * bessel_i1(x)? - (1 + 2 * n) as f64 * s * bessel_i0(x)?)
}

/// The weak residual divided by √Θ e^{2ε√Θ}: same sign, no trivial root, no overflow.
pub fn weak_residual_scaled(theta: f64, eps: f64, zeta0: f64, n: usize) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("Θ must be positive, got {theta}")));
    }
    let s = theta.sqrt();
    let x = 2.0 * eps * s;
    Ok(2.0 * zeta0 * bessel_i1e(x) / s - (1 + 2 * n) as f64 * bessel_i0e(x))
}

/// P(Θ) = (1 + 2εΘ)/(4 + 6εΘ).
pub fn strong_p(theta: f64, eps: f64) -> f64 {
    (1.0 + 2.0 * eps * theta) / (4.0 + 6.0 * eps * theta)
}

/// Largest Θ with P(Θ)·Θ < 1.
pub fn strong_bound(eps: f64) -> f64 {
    // 2εΘ² + (1 − 6ε)Θ − 4 = 0
    let b = 1.0 - 6.0 * eps;
    let root = (b * b + 32.0 * eps).sqrt();
    if b > 0.0 {
        8.0 / (b + root)
    } else {
        (root - b) / (4.0 * eps)
    }
}

/// ζ₀επ − 4(1+2n) P(Θ) K[(P(Θ)Θ)²].
pub fn strong_residual(theta: f64, eps: f64, zeta0: f64, n: usize) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("Θ must be positive, got {theta}")));
    }
    let p = strong_p(theta, eps);
    let m = (p * theta).powi(2);
    if m >= 1.0 {
        return Err(Error::Domain(format!("Θ = {theta} at or beyond its bound (PΘ = {})", p * theta)));
    }
    Ok(zeta0 * eps * PI - 4.0 * (1 + 2 * n) as f64 * p * elliptic_k(m)?)
}

/// Residual of `regime` in the form used for root finding.
pub fn residual(regime: Regime, theta: f64, eps: f64, zeta0: f64, n: usize) -> Result<f64> {
    match regime {
        Regime::Weak => weak_residual_scaled(theta, eps, zeta0, n),
        Regime::Strong => strong_residual(theta, eps, zeta0, n),
        Regime::Averaged => averaged_residual(theta, eps, zeta0, n),
    }
}

/// Upper end of the Θ search.
pub fn theta_upper(regime: Regime, eps: f64) -> f64 {
    match regime {
        Regime::Weak => 4.0,
        Regime::Strong => strong_bound(eps),
        Regime::Averaged => SEPARATRIX_THETA,
    }
}

fn scan_nodes(regime: Regime, eps: f64) -> Vec<f64> {
    let top = theta_upper(regime, eps);
    // the averaged flow resolves the distance to the separatrix only to ~1e-10
    let (n_geo, n_lin, n_edge, edge_exp) = match regime {
        Regime::Averaged => (30, 30, 24, 8.0),
        _ => (1500, 1500, 120, 13.0),
    };
    let mut v: Vec<f64> = Vec::with_capacity(n_geo + n_lin + n_edge + 2);
    let lmin = THETA_MIN.ln();
    let lmax = top.ln();
    for k in 0..=n_geo {
        v.push((lmin + (lmax - lmin) * k as f64 / n_geo as f64).exp());
    }
    for k in 1..n_lin {
        v.push(top * k as f64 / n_lin as f64);
    }
    // approach the bound geometrically
    for k in 0..=n_edge {
        let d = 10f64.powf(-2.0 - edge_exp * k as f64 / n_edge as f64);
        v.push(top * (1.0 - d));
    }
    v.retain(|x| *x >= THETA_MIN && *x < top);
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// All roots Θ ∈ (THETA_MIN, bound) of branch n, ascending.
pub fn branch_roots(regime: Regime, eps: f64, zeta0: f64, n: usize) -> Vec<(f64, f64)> {
    if eps <= 0.0 {
        return Vec::new();
    }
    let nodes = scan_nodes(regime, eps);
    roots_on_nodes(|t| residual(regime, t, eps, zeta0, n), &nodes, 1e-14)
        .into_iter()
        .filter(|r| r.location > THETA_MIN)
        .map(|r| (r.location, r.residual))
        .collect()
}

/// Every ordered root for n = 0..=n_max at the given parameters, ordered by
/// (n, Θ).
pub fn solve_branches(params: &Params, regime: Regime) -> Result<Vec<BranchPoint>> {
    params.validate()?;
    let mut out = Vec::new();
    for n in 0..=params.n_max {
        for (theta, residual) in branch_roots(regime, params.eps, params.zeta0, n) {
            out.push(BranchPoint { n, eps: params.eps, theta, regime, residual, fold: false });
        }
    }
    Ok(out)
}

fn select(roots: &[(f64, f64)], prev: Option<f64>) -> Option<(f64, f64)> {
    match prev {
        Some(p) if p > 0.0 => roots
            .iter()
            .copied()
            .min_by(|a, b| (a.0 - p).abs().total_cmp(&(b.0 - p).abs())),
        _ => roots.last().copied(),
    }
}

fn theta_at(regime: Regime, eps: f64, zeta0: f64, n: usize, prev: Option<f64>) -> (f64, f64) {
    select(&branch_roots(regime, eps, zeta0, n), prev).unwrap_or((0.0, 0.0))
}

/// Natural-parameter continuation over `steps` equally spaced ε values. Jumps
/// of Θ between neighbours are refined: a gap that does not halve when the
/// ε-interval around it shrinks tenfold is recorded as a discontinuity.
pub fn trace_branch(zeta0: f64, n: usize, eps_range: (f64, f64), steps: usize, regime: Regime) -> Result<BranchCurve> {
    if !(zeta0 > 0.0) {
        return Err(Error::Domain(format!("zeta0 must be positive, got {zeta0}")));
    }
    if !(eps_range.0 >= 0.0 && eps_range.1 > eps_range.0) {
        return Err(Error::Domain("eps range must be ascending and non-negative".into()));
    }
    let steps = steps.max(2);
    let mut points: Vec<BranchPoint> = Vec::with_capacity(steps);
    let mut prev: Option<f64> = None;
    for k in 0..steps {
        let eps = eps_range.0 + (eps_range.1 - eps_range.0) * k as f64 / (steps - 1) as f64;
        let (theta, residual) = theta_at(regime, eps, zeta0, n, prev);
        prev = Some(theta);
        points.push(BranchPoint { n, eps, theta, regime, residual, fold: false });
    }

    let mut jump = None;
    let spacing = (eps_range.1 - eps_range.0) / (steps - 1) as f64;
    let scale = points.iter().map(|p| p.theta).fold(0.0, f64::max).max(1e-12);
    for k in 0..points.len() - 1 {
        let (a, b) = (points[k], points[k + 1]);
        let gap = (b.theta - a.theta).abs();
        // only gaps well above the typical step change are candidates
        let typical = neighbour_change(&points, k);
        if gap <= 10.0 * typical.max(1e-9 * scale) {
            continue;
        }
        if let Some((eps_star, refined)) = refine_gap(regime, zeta0, n, a, b, spacing) {
            if refined > 0.5 * gap {
                points[k].fold = true;
                points[k + 1].fold = true;
                if jump.is_none() {
                    jump = Some((eps_star, refined));
                }
            }
        }
    }
    Ok(BranchCurve { n, regime, points, jump, stalled: false })
}

fn neighbour_change(points: &[BranchPoint], k: usize) -> f64 {
    let mut d = Vec::new();
    if k > 0 {
        d.push((points[k].theta - points[k - 1].theta).abs());
    }
    if k + 2 < points.len() {
        d.push((points[k + 2].theta - points[k + 1].theta).abs());
    }
    d.into_iter().fold(0.0, f64::max)
}

/// Shrink the interval around a Θ gap tenfold, keeping the transition inside,
/// and return the midpoint and the remaining gap.
fn refine_gap(regime: Regime, zeta0: f64, n: usize, a: BranchPoint, b: BranchPoint, spacing: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (a.eps, b.eps);
    let (mut tlo, mut thi) = (a.theta, b.theta);
    let target = spacing / 10.0;
    while hi - lo > target {
        let mid = 0.5 * (lo + hi);
        let (tm, _) = theta_at(regime, mid, zeta0, n, Some(tlo));
        if (tm - tlo).abs() <= (thi - tm).abs() {
            lo = mid;
            tlo = tm;
        } else {
            hi = mid;
            thi = tm;
        }
    }
    Some((0.5 * (lo + hi), (thi - tlo).abs()))
}

/// ΔΘ = 16(ζ₀ − 1) for ζ₀ > 1.
pub fn jump_magnitude(zeta0: f64) -> Result<f64> {
    if !(zeta0 > 1.0) {
        return Err(Error::Domain(format!("zeta0 = {zeta0} has a continuous onset")));
    }
    Ok(16.0 * (zeta0 - 1.0))
}

/// Discontinuity of the branch-0 curve of `regime` where the normal phase
/// loses stability, measured by tracing a window around ε_c. Zero when the
/// onset is continuous.
pub fn measured_onset_jump(zeta0: f64, regime: Regime) -> Result<f64> {
    let eps_c = 0.5 / zeta0;
    let curve = trace_branch(zeta0, 0, (0.98 * eps_c, 1.02 * eps_c), 41, regime)?;
    Ok(match curve.jump {
        Some((eps_star, d)) if (eps_star / eps_c - 1.0).abs() < 0.02 => d,
        _ => 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnsetFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub max_log_residual: f64,
}

/// Log-log fit of Θ against ε − ε_c for (ε − ε_c)/ε_c ∈ [1e-4, 1e-2] on
/// branch 0, following the root that emerges from Θ = 0.
pub fn onset_exponent(zeta0: f64, regime: Regime) -> Result<OnsetFit> {
    let eps_c = 0.5 / zeta0;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..9 {
        let rel = 10f64.powf(-4.0 + 2.0 * k as f64 / 8.0);
        let eps = eps_c * (1.0 + rel);
        let roots = branch_roots(regime, eps, zeta0, 0);
        let Some(&(theta, _)) = roots.first() else {
            return Err(Error::Accuracy(format!("no ordered root at (ε−ε_c)/ε_c = {rel:.1e}")));
        };
        xs.push((eps - eps_c).ln());
        ys.push(theta.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let max_res = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - icpt - slope * x).abs())
        .fold(0.0, f64::max);
    if max_res > 0.1 {
        return Err(Error::Accuracy(format!("onset is not a power law (log residual {max_res:.3})")));
    }
    Ok(OnsetFit { exponent: slope, prefactor: icpt.exp(), max_log_residual: max_res })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_phase_always_solves_weak() {
        assert_eq!(weak_residual(0.0, 3.0, 0.2, 1).unwrap(), 0.0);
    }

    #[test]
    fn weak_linearization_changes_sign_at_onset() {
        // slope in √Θ at Θ → 0 is 2ζ₀ε − (1+2n)
        let (z, n) = (0.05, 1);
        let onset = (1 + 2 * n) as f64 * 0.5 / z;
        let below = weak_residual_scaled(1e-12, 0.99 * onset, z, n).unwrap();
        let above = weak_residual_scaled(1e-12, 1.01 * onset, z, n).unwrap();
        assert!(below < 0.0 && above > 0.0);
    }

    #[test]
    fn strong_small_theta_limit() {
        let (z, n) = (75.0 / PI, 0);
        let eps_c = 0.5 / z;
        let r = strong_residual(1e-12, eps_c, z, n).unwrap();
        assert!(r.abs() < 1e-9);
        assert!(strong_residual(1e-12, 3.0 * eps_c, z, 1).unwrap().abs() < 1e-9);
    }

    #[test]
    fn strong_bound_and_divergence() {
        let eps = 1e-9;
        assert!((strong_bound(eps) - 4.0).abs() < 1e-6);
        let r = strong_residual(strong_bound(eps) * (1.0 - 1e-14), eps, 1.0, 0).unwrap();
        assert!(r < -10.0);
        assert!(matches!(strong_residual(4.1, eps, 1.0, 0), Err(Error::Domain(_))));
        let eps = 0.3;
        let tm = strong_bound(eps);
        assert!((strong_p(tm, eps) * tm - 1.0).abs() < 1e-13);
    }

    #[test]
    fn branch_counts_weak() {
        let p = |eps| Params::new(0.05, eps, 100.0, 3).unwrap();
        assert!(solve_branches(&p(9.0), Regime::Weak).unwrap().is_empty());
        assert_eq!(solve_branches(&p(25.0), Regime::Weak).unwrap().len(), 1);
        assert_eq!(solve_branches(&p(35.0), Regime::Weak).unwrap().len(), 2);
    }

    #[test]
    fn strong_roots_satisfy_bound() {
        let z = 150.0 / PI;
        let p = Params::new(z, 9.5 * 0.5 / z, 100.0, 3).unwrap();
        let roots = solve_branches(&p, Regime::Strong).unwrap();
        let ns: Vec<usize> = roots.iter().map(|r| r.n).collect();
        assert!(ns.contains(&0) && ns.contains(&1) && ns.contains(&2));
        for r in &roots {
            let pp = strong_p(r.theta, r.eps);
            assert!(r.theta < 4.0 && (pp * r.theta).powi(2) < 1.0);
            // K is steep next to the bound, so Θ is pinned far better than the residual
            assert!(r.residual.abs() < 1e-5, "{r:?}");
        }
    }

    #[test]
    fn jump_formula() {
        assert!((jump_magnitude(1.25).unwrap() - 4.0).abs() < 1e-14);
        assert!(jump_magnitude(1.0 + 1e-12).unwrap() < 1e-10);
        assert!(jump_magnitude(1.0).is_err());
    }

    #[test]
    fn trace_below_threshold_is_normal() {
        let c = trace_branch(0.05, 0, (1.0, 9.0), 9, Regime::Weak).unwrap();
        assert!(c.points.iter().all(|p| p.theta == 0.0));
        assert!(c.jump.is_none());
    }

    #[test]
    fn weak_onset_is_continuous() {
        let c = trace_branch(0.3, 0, (1.5, 2.0), 26, Regime::Weak).unwrap();
        assert!(c.jump.is_none());
        let thetas: Vec<f64> = c.points.iter().map(|p| p.theta).collect();
        assert!(thetas.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn regime_names_round_trip() {
        for r in [Regime::Weak, Regime::Strong, Regime::Averaged] {
            assert_eq!(r.to_string().parse::<Regime>().unwrap(), r);
        }
        assert!("medium".parse::<Regime>().is_err());
    }
}
