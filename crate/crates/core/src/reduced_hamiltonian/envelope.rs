//! Averaged traveling-wave theory.
//!
//! Writing the field as e = A e^{iξ} + B* e^{−iξ} with slowly varying A, B and
//! averaging the Helmholtz equation over the fast phase θ gives
//!
//! ```text
//! dA/dτ = i ⟨(1+e) W e^{−iθ}⟩ / W₀,   dB/dτ = i ⟨(1+e*) W e^{−iθ}⟩ / W₀,
//! W = exp[ε(|e|² + 2 Re e)],   dτ = πζ₀ ν₀(ξ) dξ,
//! ```
//!
//! where ⟨·⟩ is the θ-mean and W₀ the value of ⟨W⟩ on the orbit. The flow keeps
//! Θ = |A|² + |B|² and ⟨W⟩ fixed. Outgoing-wave conditions demand A = 0 where
//! the cloud begins (τ = 0) and B = 0 where it ends (τ = πζ₀), which fixes
//! W₀ = e^{εΘ} I₀(2ε√Θ). In the reduced coordinates D = |A|² − |B|² and
//! φ = arg A − arg B one has dD/dτ = 2⟨W Im e⟩/W₀, and branch n requires
//!
//! ```text
//! πζ₀ = (2n+1) τ_half(Θ, ε),
//! ```
//!
//! with τ_half the transit time from D = −Θ to D = Θ along the level set
//! ⟨W⟩ = W₀. The level set touches the saddle at D = 0, φ = π exactly when
//! Θ = 4, which bounds the order parameter for every ε. For small ε√Θ the
//! condition reduces to the weak-coupling Bessel equation, for small ε to
//! πζ₀ε = (2n+1) K((Θ/4)²).

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{dopri5, quad_adaptive, try_find_root, OdeOptions};

/// Upper bound on Θ for connecting orbits.
pub const SEPARATRIX_THETA: f64 = 4.0;

/// Number of phase samples needed to average exp(εx) over one period when the
/// exponent swings by about `swing`.
fn samples_for(swing: f64) -> usize {
    let m = (80.0 * swing.max(1.0)).sqrt().ceil() as usize + 32;
    (m + 7) / 8 * 8
}

fn phases(m: usize) -> impl Iterator<Item = (f64, Complex64)> {
    let h = 2.0 * PI / m as f64;
    (0..m).map(move |k| {
        let t = h * k as f64;
        (t, Complex64::from_polar(1.0, t))
    })
}

/// ln⟨W⟩ for the field A e^{iθ} + B* e^{−iθ}.
pub fn ln_mean_weight(eps: f64, a: Complex64, b: Complex64) -> f64 {
    let amp = a.norm() + b.norm();
    let m = samples_for(eps * (amp * amp + 2.0 * amp) * 2.0);
    let ex: Vec<f64> = phases(m)
        .map(|(_, u)| {
            let e = a * u + b.conj() * u.conj();
            eps * (e.norm_sqr() + 2.0 * e.re)
        })
        .collect();
    let max = ex.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // ln_1p keeps relative precision when the exponent barely varies (small ε)
    max + (ex.iter().map(|x| (x - max).exp_m1()).sum::<f64>() / m as f64).ln_1p()
}

/// ln W₀ = εΘ + ln I₀(2ε√Θ), the orbit level fixed by the boundary conditions.
pub fn ln_level(eps: f64, theta: f64) -> f64 {
    ln_mean_weight(eps, Complex64::new(theta.sqrt(), 0.0), Complex64::new(0.0, 0.0))
}

/// (ln⟨W⟩, ⟨W Im e⟩/⟨W⟩) at reduced coordinates (D, cos φ).
pub fn reduced_weight(eps: f64, theta: f64, d: f64, cos_phi: f64) -> (f64, f64) {
    let a1 = (0.5 * (theta + d)).max(0.0).sqrt();
    let b1 = (0.5 * (theta - d)).max(0.0).sqrt();
    let phi = cos_phi.clamp(-1.0, 1.0).acos();
    let rot = Complex64::from_polar(1.0, 0.5 * phi);
    let amp = a1 + b1;
    let m = samples_for(eps * (amp * amp + 2.0 * amp) * 2.0);
    let fields: Vec<Complex64> = phases(m).map(|(_, u)| rot * (a1 * u + b1 * u.conj())).collect();
    let ex: Vec<f64> = fields.iter().map(|e| eps * (e.norm_sqr() + 2.0 * e.re)).collect();
    let max = ex.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut s, mut si) = (0.0, 0.0);
    for (x, e) in ex.iter().zip(&fields) {
        let w1 = (x - max).exp_m1();
        s += w1;
        si += (1.0 + w1) * e.im;
    }
    (max + (s / m as f64).ln_1p(), si / (m as f64 + s))
}

/// Level-set value of cos φ at action difference D.
fn level_cos(eps: f64, theta: f64, d: f64, ln_w0: f64) -> Result<f64> {
    let f = |c: f64| Ok(reduced_weight(eps, theta, d, c).0 - ln_w0);
    try_find_root(f, (-1.0, 1.0), 1e-14)
        .map(|r| r.location)
        .map_err(|_| Error::Domain(format!("Θ = {theta} has no connecting orbit (bound {SEPARATRIX_THETA})")))
}

fn check_orbit_args(eps: f64, theta: f64) -> Result<()> {
    if !(theta > 0.0) || theta >= SEPARATRIX_THETA {
        return Err(Error::Domain(format!("Θ = {theta} outside (0, {SEPARATRIX_THETA})")));
    }
    if !(eps > 0.0) {
        return Err(Error::Domain("no ordered orbit without pump".into()));
    }
    Ok(())
}

/// Transit time in τ from D = −Θ to D = Θ along the connecting orbit.
///
/// The amplitude flow is integrated from A = 0 in chunks of growing length
/// until dD/dτ changes sign, and the turning point is then located by Brent's
/// method. A chunk never exceeds the time already elapsed, so it cannot step
/// over two turning points. Integrating the flow copes with the slow passage
/// near the saddle, where a quadrature in D has a near-singular integrand.
pub fn half_transit(eps: f64, theta: f64) -> Result<f64> {
    check_orbit_args(eps, theta)?;
    let ln_w0 = ln_level(eps, theta);
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-15 * theta.sqrt(), h_init: 1e-6, ..Default::default() };
    let rhs = |_: f64, y: &[f64], dy: &mut [f64]| rotating_rhs(eps, ln_w0, y, dy);
    let slope = |y: &[f64]| {
        let mut dy = [0.0; 4];
        amplitude_rhs(eps, ln_w0, y, &mut dy);
        // d(|A|² − |B|²)/dτ
        2.0 * (y[0] * dy[0] + y[1] * dy[1] - y[2] * dy[2] - y[3] * dy[3])
    };
    let advance = |y: &[f64], t0: f64, t1: f64| -> Result<Vec<f64>> {
        let o = OdeOptions { h_init: (0.1 * (t1 - t0)).min(opts.h_init.max(1e-3 * (t1 - t0))), ..opts };
        let tr = dopri5(rhs, t0, y, &[t1], &o)?;
        Ok(tr.y.into_iter().next().expect("one output"))
    };
    let y0 = [0.0, 0.0, theta.sqrt(), 0.0];
    let mut dy0 = [0.0; 4];
    rotating_rhs(eps, ln_w0, &y0, &mut dy0);
    let rate = dy0.iter().map(|v| v * v).sum::<f64>().sqrt() / theta.sqrt();
    let mut t = 1e-3 / rate.max(1e-300);
    let mut y = advance(&y0, 0.0, t)?;
    if !(slope(&y) > 0.0) {
        return Err(Error::Numerical("orbit does not leave D = −Θ".into()));
    }
    for _ in 0..200 {
        let t1 = 2.0 * t;
        let y1 = advance(&y, t, t1)?;
        if slope(&y1) <= 0.0 {
            // narrow the bracket before Brent so that each trial integrates a short span
            const PARTS: usize = 16;
            let (mut a, mut ya) = (t, y.clone());
            let mut b = t1;
            for k in 1..=PARTS {
                let tk = t + (t1 - t) * k as f64 / PARTS as f64;
                let yk = advance(&ya, a, tk)?;
                if slope(&yk) <= 0.0 {
                    b = tk;
                    break;
                }
                a = tk;
                ya = yk;
            }
            let root = try_find_root(|tau| Ok(slope(&advance(&ya, a, tau)?)), (a, b), 1e-13 * t1)?;
            return Ok(root.location);
        }
        t = t1;
        y = y1;
    }
    Err(Error::Numerical("no turning point of the orbit".into()))
}

/// The same transit time as a quadrature over D along the level set. Used as an
/// independent check away from the separatrix.
pub fn half_transit_quadrature(eps: f64, theta: f64) -> Result<f64> {
    check_orbit_args(eps, theta)?;
    let ln_w0 = ln_level(eps, theta);
    let mut failure = None;
    // D = Θ sin χ keeps the integrand finite at the turning points
    let integrand = |chi: f64| {
        let d = theta * chi.sin();
        match level_cos(eps, theta, d, ln_w0) {
            Ok(c) => {
                let ratio = reduced_weight(eps, theta, d, c).1;
                theta * chi.cos() / (2.0 * ratio.abs())
            }
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    let v = quad_adaptive(integrand, -0.5 * PI, 0.5 * PI, 1e-10)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Branch condition in the averaged theory, scaled by ε so that it tends to the
/// strong-coupling residual for small ε: ε[πζ₀ − (2n+1) τ_half(Θ, ε)].
pub fn averaged_residual(theta: f64, eps: f64, zeta0: f64, n: usize) -> Result<f64> {
    Ok(eps * (PI * zeta0 - (2 * n + 1) as f64 * half_transit(eps, theta)?))
}

/// Right-hand side of the amplitude equations, y = [Re A, Im A, Re B, Im B].
pub fn amplitude_rhs(eps: f64, ln_w0: f64, y: &[f64], dy: &mut [f64]) {
    let a = Complex64::new(y[0], y[1]);
    let b = Complex64::new(y[2], y[3]);
    let amp = a.norm() + b.norm();
    let m = samples_for(eps * (amp * amp + 2.0 * amp) * 2.0);
    let (mut ga, mut gb) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for (_, u) in phases(m) {
        let e = a * u + b.conj() * u.conj();
        let w = (eps * (e.norm_sqr() + 2.0 * e.re) - ln_w0).exp();
        let back = u.conj() * w;
        ga += (1.0 + e) * back;
        gb += (1.0 + e.conj()) * back;
    }
    let i = Complex64::new(0.0, 1.0);
    let da = i * ga / m as f64;
    let db = i * gb / m as f64;
    dy[0] = da.re;
    dy[1] = da.im;
    dy[2] = db.re;
    dy[3] = db.im;
}

/// The flow commutes with a common phase rotation of A and B, and for small ε
/// it is dominated by dA/dτ ≈ iA, dB/dτ ≈ iB. In the frame A = e^{iτ}a,
/// B = e^{iτ}b only the slow part remains.
fn rotating_rhs(eps: f64, ln_w0: f64, y: &[f64], dy: &mut [f64]) {
    amplitude_rhs(eps, ln_w0, y, dy);
    dy[0] += y[1];
    dy[1] -= y[0];
    dy[2] += y[3];
    dy[3] -= y[2];
}

/// Amplitudes (A, B) at the requested τ values (ascending), starting from the
/// incoming-wave-free state A = 0, B = √Θ at τ = 0.
pub fn amplitude_orbit(eps: f64, theta: f64, taus: &[f64]) -> Result<Vec<(Complex64, Complex64)>> {
    let ln_w0 = ln_level(eps, theta);
    let opts = OdeOptions { rtol: 1e-11, atol: 1e-13, h_init: 1e-4, ..Default::default() };
    let tr = dopri5(|_, y, dy| rotating_rhs(eps, ln_w0, y, dy), 0.0, &[0.0, 0.0, theta.sqrt(), 0.0], taus, &opts)?;
    Ok(tr
        .t
        .iter()
        .zip(&tr.y)
        .map(|(&t, y)| {
            let rot = Complex64::from_polar(1.0, t);
            (rot * Complex64::new(y[0], y[1]), rot * Complex64::new(y[2], y[3]))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{bessel_i0, elliptic_k};

    #[test]
    fn level_matches_bessel() {
        for &(eps, th) in &[(0.3, 0.5), (2.0, 1.7), (0.02, 3.9)] {
            let exact = eps * th + bessel_i0(2.0 * eps * f64::sqrt(th)).unwrap().ln();
            assert!((ln_level(eps, th) - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn separatrix_at_four() {
        // the saddle D = 0, φ = π sits on the level set only for Θ = 4
        for &eps in &[0.01, 0.5, 3.0] {
            let (w, _) = reduced_weight(eps, 4.0, 0.0, -1.0);
            assert!((w - ln_level(eps, 4.0)).abs() < 1e-12);
            let (w, _) = reduced_weight(eps, 3.0, 0.0, -1.0);
            assert!(w < ln_level(eps, 3.0));
        }
    }

    #[test]
    fn level_set_endpoints() {
        let (eps, th) = (0.7, 1.3);
        let l = ln_level(eps, th);
        for &c in &[-1.0, 0.0, 0.8] {
            assert!((reduced_weight(eps, th, th, c).0 - l).abs() < 1e-12);
            assert!((reduced_weight(eps, th, -th, c).0 - l).abs() < 1e-12);
        }
    }

    #[test]
    fn strong_limit_is_elliptic() {
        // small ε: ε τ_half → K((Θ/4)²)
        let th = 2.5;
        let eps = 1e-4;
        let t = eps * half_transit(eps, th).unwrap();
        let k = elliptic_k((th / 4.0).powi(2)).unwrap();
        assert!((t / k - 1.0).abs() < 1e-3);
    }

    #[test]
    fn orbit_conserves_theta_and_ends_outgoing() {
        let (eps, th) = (0.8, 1.2);
        let tau = half_transit(eps, th).unwrap();
        let pts = amplitude_orbit(eps, th, &[0.5 * tau, tau]).unwrap();
        for (a, b) in &pts {
            assert!((a.norm_sqr() + b.norm_sqr() - th).abs() < 1e-8);
        }
        // after one transit the orbit reaches B = 0
        assert!(pts[1].1.norm_sqr() < 1e-8);
        assert!((pts[0].0.norm_sqr() - pts[0].1.norm_sqr()).abs() < 1e-6);
    }

    #[test]
    fn flow_and_quadrature_agree() {
        for &(eps, th) in &[(0.3, 0.5), (2.0, 1.7), (0.01, 3.0), (25.0, 0.01)] {
            let a = half_transit(eps, th).unwrap();
            let b = half_transit_quadrature(eps, th).unwrap();
            assert!((a / b - 1.0).abs() < 1e-8, "{eps} {th}: {a} {b}");
        }
    }

    #[test]
    fn near_separatrix_transit_grows_logarithmically() {
        let eps = 0.04;
        let t: Vec<f64> = [1e-4, 1e-6, 1e-8].iter().map(|d| half_transit(eps, 4.0 * (1.0 - d)).unwrap()).collect();
        let (s1, s2) = (t[1] - t[0], t[2] - t[1]);
        assert!(s1 > 0.0 && (s2 / s1 - 1.0).abs() < 0.02, "{t:?}");
    }

    #[test]
    fn beyond_bound_is_domain_error() {
        assert!(matches!(half_transit(0.5, 4.2), Err(Error::Domain(_))));
        assert!(matches!(half_transit(0.5, 0.0), Err(Error::Domain(_))));
    }
}
