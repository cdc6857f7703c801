//! Bracketed root finding (Brent) and sign-change enumeration.

use crate::error::{Error, Result};

/// Default absolute tolerance on the independent variable.
pub const ROOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketedRoot {
    pub location: f64,
    pub residual: f64,
    pub bracket: (f64, f64),
}

/// Brent's method on a bracket with a sign change.
pub fn find_root<F: FnMut(f64) -> f64>(mut f: F, bracket: (f64, f64), tol: f64) -> Result<BracketedRoot> {
    try_find_root(|x| Ok(f(x)), bracket, tol)
}

/// Like [`find_root`] for functions that can fail.
pub fn try_find_root<F>(mut f: F, bracket: (f64, f64), tol: f64) -> Result<BracketedRoot>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (lo, hi) = bracket;
    let fa0 = f(lo)?;
    let fb0 = f(hi)?;
    brent(&mut f, lo, hi, fa0, fb0, tol)
}

fn brent<F>(f: &mut F, a0: f64, b0: f64, fa0: f64, fb0: f64, tol: f64) -> Result<BracketedRoot>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b, mut fa, mut fb) = (a0, b0, fa0, fb0);
    if fa == 0.0 {
        return Ok(BracketedRoot { location: a, residual: 0.0, bracket: (a, a) });
    }
    if fb == 0.0 {
        return Ok(BracketedRoot { location: b, residual: 0.0, bracket: (b, b) });
    }
    if !(fa * fb < 0.0) {
        return Err(Error::Bracket { lo: a0, hi: b0 });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..500 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            let (l, h) = if b < c { (b, c) } else { (c, b) };
            return Ok(BracketedRoot { location: b, residual: fb, bracket: (l, h) });
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
        if !fb.is_finite() {
            return Err(Error::Numerical(format!("non-finite function value at {b}")));
        }
    }
    Err(Error::Numerical("Brent iteration limit reached".into()))
}

/// One root per sign-changing subinterval of a uniform partition, ascending.
pub fn find_all_roots<F: FnMut(f64) -> f64>(mut f: F, range: (f64, f64), subdivisions: usize) -> Vec<BracketedRoot> {
    let n = subdivisions.max(2);
    let nodes: Vec<f64> = (0..=n)
        .map(|i| range.0 + (range.1 - range.0) * i as f64 / n as f64)
        .collect();
    let vals: Vec<Option<f64>> = nodes.iter().map(|&x| Some(f(x)).filter(|v| v.is_finite())).collect();
    scan(&mut |x| Ok(f(x)), &nodes, &vals, ROOT_TOL)
}

/// Sign-change scan over arbitrary ascending nodes, evaluated in parallel.
/// Nodes where `f` fails or is not finite break the scan locally, so a
/// function with a restricted domain can be scanned over a superset of it.
/// The tolerance is tightened to a millionth of the local node spacing.
pub fn roots_on_nodes<F>(f: F, nodes: &[f64], tol: f64) -> Vec<BracketedRoot>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    use rayon::prelude::*;
    let vals: Vec<Option<f64>> = nodes
        .par_iter()
        .map(|&x| f(x).ok().filter(|v| v.is_finite()))
        .collect();
    scan(&mut |x| f(x), nodes, &vals, tol)
}

fn scan<F>(f: &mut F, nodes: &[f64], vals: &[Option<f64>], tol: f64) -> Vec<BracketedRoot>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut out: Vec<BracketedRoot> = Vec::new();
    for i in 0..nodes.len() {
        let Some(fi) = vals[i] else { continue };
        if fi == 0.0 {
            if out.last().map_or(true, |r| r.location != nodes[i]) {
                out.push(BracketedRoot { location: nodes[i], residual: 0.0, bracket: (nodes[i], nodes[i]) });
            }
            continue;
        }
        if i + 1 == nodes.len() {
            break;
        }
        let Some(fj) = vals[i + 1] else { continue };
        if fi * fj < 0.0 {
            let t = tol.min(1e-6 * (nodes[i + 1] - nodes[i]));
            if let Ok(r) = brent(f, nodes[i], nodes[i + 1], fi, fj, t) {
                out.push(r);
            }
        }
    }
    out
}

/// Bisection on a predicate that is false below and true above some point.
pub fn bisect_predicate<P: FnMut(f64) -> bool>(mut p: P, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    while (hi - lo) > rel_tol * hi.abs().max(lo.abs()) {
        let mid = 0.5 * (lo + hi);
        if p(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn linear() {
        let r = find_root(|x| x - 1.0, (0.0, 2.0), 1e-12).unwrap();
        assert!((r.location - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine() {
        let r = find_root(f64::cos, (1.0, 2.0), 1e-12).unwrap();
        assert!((r.location - PI / 2.0).abs() < 1e-12);
        assert!(r.bracket.0 <= r.location && r.location <= r.bracket.1);
    }

    #[test]
    fn no_sign_change() {
        assert!(matches!(find_root(|x| x * x + 1.0, (-1.0, 1.0), 1e-10), Err(Error::Bracket { .. })));
    }

    #[test]
    fn all_roots_of_sine() {
        let r = find_all_roots(f64::sin, (0.1, 9.0), 1000);
        assert_eq!(r.len(), 2);
        assert!((r[0].location - PI).abs() < 1e-9);
        assert!((r[1].location - 2.0 * PI).abs() < 1e-9);
        assert!(find_all_roots(|_| 1.0, (0.0, 1.0), 10).is_empty());
    }

    #[test]
    fn node_zero_counted_once() {
        let r = find_all_roots(|x| x, (-1.0, 1.0), 4);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].location, 0.0);
    }

    #[test]
    fn failing_nodes_are_skipped() {
        let nodes: Vec<f64> = (0..=100).map(|i| i as f64 * 0.05).collect();
        let r = roots_on_nodes(
            |x| if x > 4.0 { Err(Error::Domain("beyond".into())) } else { Ok((x - 2.0) * (x - 3.9)) },
            &nodes,
            1e-12,
        );
        assert_eq!(r.len(), 2);
    }
}
