//! Quadrature: globally adaptive Gauss–Kronrod, Gauss–Hermite and
//! Gauss–Legendre rules, and the periodic trapezoid rule.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

const MAX_INTERVALS: usize = 4000;

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Panel { a, b, value: k * h, err: ((k - g) * h).abs() }
}

/// ∫ₐᵇ f with |result − exact| ≲ tol·(1+|exact|). Infinite limits are mapped
/// onto finite ones.
pub fn quad_adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return quad_adaptive(f, b, a, tol).map(|v| -v);
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive_finite(&mut f, a, b, tol),
        (false, false) => adaptive_finite(
            &mut |t: f64| {
                let d = 1.0 - t * t;
                f(t / d) * (1.0 + t * t) / (d * d)
            },
            -1.0,
            1.0,
            tol,
        ),
        (true, false) => adaptive_finite(
            &mut |t: f64| {
                let d = 1.0 - t;
                f(a + t / d) / (d * d)
            },
            0.0,
            1.0,
            tol,
        ),
        (false, true) => adaptive_finite(
            &mut |t: f64| {
                let d = 1.0 - t;
                f(b - t / d) / (d * d)
            },
            0.0,
            1.0,
            tol,
        ),
    }
}

fn adaptive_finite<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let first = gk15(f, a, b);
    let mut total = first.value;
    let mut err = first.err;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    loop {
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Accuracy("integrand produced a non-finite value".into()));
        }
        if err <= tol * (1.0 + total.abs()) {
            break;
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(Error::Accuracy(format!(
                "adaptive quadrature on [{a}, {b}] stalled at error {err:.3e}"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Accuracy("interval underflow in adaptive quadrature".into()));
        }
        let l = gk15(f, worst.a, mid);
        let r = gk15(f, mid, worst.b);
        total += l.value + r.value - worst.value;
        err += l.err + r.err - worst.err;
        heap.push(l);
        heap.push(r);
    }
    // re-sum to drop the accumulated update rounding
    Ok(heap.iter().map(|p| p.value).sum())
}

/// Nodes and weights of an n-point Gaussian rule.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Gauss–Hermite rule for ∫ f(x) e^{−x²} dx over ℝ. Nodes are the
    /// eigenvalues of the Jacobi matrix, polished by Newton steps on the
    /// normalized recurrence, which also yields the weights.
    pub fn hermite(n: usize) -> Self {
        assert!(n >= 1);
        const PIM4: f64 = 0.751_125_544_464_942_5;
        let mut d = vec![0.0; n];
        let mut off: Vec<f64> = (1..=n).map(|k| if k < n { (0.5 * k as f64).sqrt() } else { 0.0 }).collect();
        symmetric_tridiagonal_eigenvalues(&mut d, &mut off);
        d.sort_by(f64::total_cmp);
        let nf = n as f64;
        let mut w = vec![0.0; n];
        for (x, wi) in d.iter_mut().zip(w.iter_mut()) {
            let mut pp = 1.0;
            for _ in 0..3 {
                let mut p1 = PIM4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = *x * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                *x -= p1 / pp;
            }
            *wi = 2.0 / (pp * pp);
        }
        GaussRule { nodes: d, weights: w }
    }

    /// Gauss–Legendre rule on [−1, 1].
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut pp = 1.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() <= 1e-16 {
                    break;
                }
            }
            x[i] = -z;
            x[n - 1 - i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            w[n - 1 - i] = w[i];
        }
        GaussRule { nodes: x, weights: w }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Apply a Legendre rule to [a, b].
    pub fn integrate_on<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        h * self.integrate(|t| f(c + h * t))
    }
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// `e[i]` coupling rows i and i+1 (implicit QL), returned in `d`.
fn symmetric_tridiagonal_eigenvalues(d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for l in 0..n {
        for _ in 0..100 {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}

/// ∫ f(u) e^{−u²} du over ℝ with an `order`-point Gauss–Hermite rule.
pub fn quad_hermite<F: FnMut(f64) -> f64>(f: F, order: usize) -> f64 {
    GaussRule::hermite(order).integrate(f)
}

/// Mean of a 2π-periodic function over one period from `m` equispaced samples.
pub fn periodic_mean<F: FnMut(f64) -> f64>(mut f: F, m: usize) -> f64 {
    let h = 2.0 * std::f64::consts::PI / m as f64;
    (0..m).map(|k| f(h * k as f64)).sum::<f64>() / m as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sine_squared() {
        let v = quad_adaptive(|x| x.sin().powi(2), 0.0, 2.0 * PI, 1e-12).unwrap();
        assert!((v - PI).abs() < 1e-12);
    }

    #[test]
    fn gaussian_over_real_line() {
        assert!((quad_hermite(|_| 1.0, 20) - PI.sqrt()).abs() < 1e-13);
        let v = quad_adaptive(|x| (-x * x).exp(), f64::NEG_INFINITY, f64::INFINITY, 1e-12).unwrap();
        assert!((v - PI.sqrt()).abs() < 1e-11);
        let v = quad_adaptive(|x| (-x).exp(), 0.0, f64::INFINITY, 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-11);
        let v = quad_adaptive(|x| x.exp(), f64::NEG_INFINITY, 0.0, 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-11);
    }

    #[test]
    fn reversed_limits() {
        let v = quad_adaptive(|x| x, 1.0, 0.0, 1e-12).unwrap();
        assert!((v + 0.5).abs() < 1e-14);
    }

    #[test]
    fn hermite_moments() {
        let r = GaussRule::hermite(200);
        assert_eq!(r.nodes.len(), 200);
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        // ∫ x^4 e^{-x²} = 3√π/4
        assert!((r.integrate(|x| x.powi(4)) - 0.75 * PI.sqrt()).abs() < 1e-12);
        let odd = GaussRule::hermite(7);
        assert!((odd.integrate(|x| x * x) - 0.5 * PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn legendre_polynomials_exact() {
        let r = GaussRule::legendre(10);
        assert!((r.integrate(|x| x.powi(18)) - 2.0 / 19.0).abs() < 1e-14);
        assert!((r.integrate_on(|x| x.exp(), 0.0, 1.0) - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn periodic_trapezoid_is_spectral() {
        let v = periodic_mean(|t| (2.0 * t.cos()).exp(), 32);
        // mean of e^{2 cos t} is I0(2)
        assert!((v - 2.2795853023360673).abs() < 1e-14);
    }

    #[test]
    fn singular_integrand_reports_accuracy_error() {
        let r = quad_adaptive(|x| 1.0 / x, -1.0, 1.0, 1e-12);
        assert!(matches!(r, Err(Error::Accuracy(_))));
    }
}
