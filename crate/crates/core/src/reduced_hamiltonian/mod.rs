//! The stationary field equation as a canonical system in ξ, its action-angle
//! form, and the first-order averaged dynamics.
//!
//! With e = E_r + iE_i and Π = ∂ξE the Helmholtz equation follows from
//!
//! ```text
//! H = ½(Π_r² + Π_i² + E_r² + E_i²) + H₁,
//! H₁ = −(πζ₀/ε)[G(Φ_d + U) − G(U)],   Φ_d = −ε(|e|² + 2 Re e),
//! ```
//!
//! where G' = g is the density functional (thermal: g = e^{−Φ}/Z) and U the
//! trap potential in units of k_BT. Subtracting G(U) only removes a
//! field-independent term and keeps H₁ finite as ε → 0.
//!
//! In action-angle variables E = √(2J) sin ψ, Π = √(2J) cos ψ the unperturbed
//! part is Jr + Ji. Averaging H₁ over the common angle leaves K̃₁(J, Δ) with
//! Δ = ψr − ψi, so Θ̄ = Jr + Ji is conserved and the remaining pair
//! (D̄ = Jr − Ji, Δ̄) evolves under H̄ = 2K̃₁ with
//! dΔ̄/dz = ∂H̄/∂D̄ and dD̄/dz = −∂H̄/∂Δ̄.

pub mod envelope;

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::Params;
use crate::numerics::{dopri5, periodic_mean, OdeOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalFieldState {
    pub er: f64,
    pub ei: f64,
    pub pr: f64,
    pub pi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionAngleState {
    pub jr: f64,
    pub ji: f64,
    pub psir: f64,
    pub psii: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedState {
    pub theta: f64,
    pub d: f64,
    pub delta: f64,
}

/// Density functional g and its antiderivative G (G' = g, G → 0 as Φ → ∞).
pub trait GModel: Send + Sync {
    fn density(&self, phi: f64) -> f64;
    fn antiderivative(&self, phi: f64) -> f64;
    /// G(Φ + δ) − G(Φ), overridable where cancellation matters.
    fn increment(&self, phi: f64, delta: f64) -> f64 {
        self.antiderivative(phi + delta) - self.antiderivative(phi)
    }
}

/// Boltzmann closure g = e^{−Φ}/Z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalG {
    pub norm: f64,
}

impl ThermalG {
    /// Normalization of the Gaussian trap, Z = √π ℓ.
    pub fn for_trap(ell: f64) -> Self {
        ThermalG { norm: PI.sqrt() * ell }
    }
}

impl GModel for ThermalG {
    fn density(&self, phi: f64) -> f64 {
        (-phi).exp() / self.norm
    }
    fn antiderivative(&self, phi: f64) -> f64 {
        -(-phi).exp() / self.norm
    }
    fn increment(&self, phi: f64, delta: f64) -> f64 {
        -(-phi).exp() * (-delta).exp_m1() / self.norm
    }
}

/// Coupling constants of H₁ and the trap. `ell = None` drops the trap
/// potential, which makes the flow autonomous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldCoupling {
    pub zeta0: f64,
    pub eps: f64,
    pub ell: Option<f64>,
}

impl FieldCoupling {
    pub fn from_params(p: &Params) -> Self {
        FieldCoupling { zeta0: p.zeta0, eps: p.eps, ell: Some(p.ell) }
    }

    pub fn autonomous(zeta0: f64, eps: f64) -> Self {
        FieldCoupling { zeta0, eps, ell: None }
    }

    pub fn trap_potential(&self, z: f64) -> f64 {
        match self.ell {
            Some(l) => (z / l).powi(2),
            None => 0.0,
        }
    }
}

/// H₁ for field quadratures (E_r, E_i) at position z.
pub fn coupling_energy(er: f64, ei: f64, z: f64, c: &FieldCoupling, g: &dyn GModel) -> Result<f64> {
    let x = er * er + ei * ei + 2.0 * er;
    let u = c.trap_potential(z);
    let v = if c.eps == 0.0 {
        PI * c.zeta0 * g.density(u) * x
    } else {
        if c.eps * x > 700.0 {
            return Err(Error::Range(format!("coupling exponent {} overflows", c.eps * x)));
        }
        -(PI * c.zeta0 / c.eps) * g.increment(u, -c.eps * x)
    };
    if !v.is_finite() {
        return Err(Error::Range("non-finite coupling energy".into()));
    }
    Ok(v)
}

/// ∂H₁/∂(E_r, E_i) = 2πζ₀ g(Φ) (1 + E_r, E_i).
pub fn coupling_gradient(er: f64, ei: f64, z: f64, c: &FieldCoupling, g: &dyn GModel) -> (f64, f64) {
    let x = er * er + ei * ei + 2.0 * er;
    let phi = c.trap_potential(z) - c.eps * x;
    let k = 2.0 * PI * c.zeta0 * g.density(phi);
    (k * (1.0 + er), k * ei)
}

pub fn full_hamiltonian(s: &CanonicalFieldState, z: f64, c: &FieldCoupling, g: &dyn GModel) -> Result<f64> {
    let h0 = 0.5 * (s.pr * s.pr + s.pi * s.pi + s.er * s.er + s.ei * s.ei);
    Ok(h0 + coupling_energy(s.er, s.ei, z, c, g)?)
}

/// Canonical equations of the full Hamiltonian, y = [E_r, E_i, Π_r, Π_i].
pub fn canonical_rhs(z: f64, y: &[f64], dy: &mut [f64], c: &FieldCoupling, g: &dyn GModel) {
    let (gr, gi) = coupling_gradient(y[0], y[1], z, c, g);
    dy[0] = y[2];
    dy[1] = y[3];
    dy[2] = -y[0] - gr;
    dy[3] = -y[1] - gi;
}

/// Integrate the full canonical flow, reporting the state at `samples + 1`
/// equally spaced positions over `z_span`.
pub fn integrate_full(
    s0: &CanonicalFieldState,
    z_span: (f64, f64),
    samples: usize,
    c: &FieldCoupling,
    g: &dyn GModel,
) -> Result<Vec<(f64, CanonicalFieldState)>> {
    let n = samples.max(1);
    let zs: Vec<f64> = (1..=n).map(|k| z_span.0 + (z_span.1 - z_span.0) * k as f64 / n as f64).collect();
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-14, h_init: 1e-3, h_min: 1e-12, max_steps: 2_000_000 };
    let tr = dopri5(|z, y, dy| canonical_rhs(z, y, dy, c, g), z_span.0, &[s0.er, s0.ei, s0.pr, s0.pi], &zs, &opts)?;
    let mut out = vec![(z_span.0, *s0)];
    out.extend(
        tr.t.iter()
            .zip(&tr.y)
            .map(|(z, y)| (*z, CanonicalFieldState { er: y[0], ei: y[1], pr: y[2], pi: y[3] })),
    );
    Ok(out)
}

/// Largest relative change of Θ̄ = Jr + Ji along the full flow over `z_span`.
pub fn full_flow_drift(s0: &CanonicalFieldState, z_span: (f64, f64), c: &FieldCoupling, g: &dyn GModel) -> Result<f64> {
    let theta = |s: &CanonicalFieldState| {
        let a = to_action_angle(s);
        a.jr + a.ji
    };
    let t0 = theta(s0);
    if !(t0 > 0.0) {
        return Err(Error::Domain("initial state has zero action".into()));
    }
    let path = integrate_full(s0, z_span, 400, c, g)?;
    Ok(path.iter().map(|(_, s)| (theta(s) - t0).abs()).fold(0.0, f64::max) / t0)
}

fn wrap_angle(a: f64) -> f64 {
    let t = a.rem_euclid(2.0 * PI);
    if t >= 2.0 * PI {
        0.0
    } else {
        t
    }
}

fn to_pair(e: f64, p: f64) -> (f64, f64) {
    let j = 0.5 * (e * e + p * p);
    if j == 0.0 {
        (0.0, 0.0)
    } else {
        (j, wrap_angle(e.atan2(p)))
    }
}

pub fn to_action_angle(s: &CanonicalFieldState) -> ActionAngleState {
    let (jr, psir) = to_pair(s.er, s.pr);
    let (ji, psii) = to_pair(s.ei, s.pi);
    ActionAngleState { jr, ji, psir, psii }
}

pub fn from_action_angle(a: &ActionAngleState) -> CanonicalFieldState {
    let rr = (2.0 * a.jr).sqrt();
    let ri = (2.0 * a.ji).sqrt();
    CanonicalFieldState {
        er: rr * a.psir.sin(),
        pr: rr * a.psir.cos(),
        ei: ri * a.psii.sin(),
        pi: ri * a.psii.cos(),
    }
}

/// Angle samples for averaging exp(εx) when |E| reaches `amp`.
fn angle_samples(eps: f64, amp: f64) -> usize {
    let swing = eps * (amp * amp + 2.0 * amp) * 2.0;
    let m = (80.0 * swing.max(1.0)).sqrt().ceil() as usize + 64;
    (m + 7) / 8 * 8
}

/// K̃₁(J, Δ) = (1/2π)∫ H₁(J, ζ+Δ, ζ) dζ. The integrand is smooth and periodic,
/// so the trapezoid rule converges geometrically.
pub fn averaged_h(j: (f64, f64), delta: f64, z: f64, c: &FieldCoupling, g: &dyn GModel) -> Result<f64> {
    let (jr, ji) = j;
    if jr < 0.0 || ji < 0.0 {
        return Err(Error::Domain(format!("negative action ({jr}, {ji})")));
    }
    let ar = (2.0 * jr).sqrt();
    let ai = (2.0 * ji).sqrt();
    let m = angle_samples(c.eps, ar + ai);
    let mut fail = None;
    let v = periodic_mean(
        |zeta| match coupling_energy(ar * (zeta + delta).sin(), ai * zeta.sin(), z, c, g) {
            Ok(v) => v,
            Err(e) => {
                fail.get_or_insert(e);
                0.0
            }
        },
        m,
    );
    match fail {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// H̄(D, Δ) = 2K̃₁((Θ+D)/2, (Θ−D)/2, Δ).
pub fn reduced_hamiltonian(s: &ReducedState, z: f64, c: &FieldCoupling, g: &dyn GModel) -> Result<f64> {
    let d = s.d.clamp(-s.theta, s.theta);
    Ok(2.0 * averaged_h((0.5 * (s.theta + d), 0.5 * (s.theta - d)), s.delta, z, c, g)?)
}

/// Relative step of the finite differences in [`reduced_equations`].
pub const FD_STEP: f64 = 1e-3;

fn derivative<F: FnMut(f64) -> Result<f64>>(mut f: F, x: f64, h: f64, lo: f64, hi: f64) -> Result<f64> {
    if x - 2.0 * h >= lo && x + 2.0 * h <= hi {
        // fourth-order central stencil
        let v = (f(x - 2.0 * h)? - 8.0 * f(x - h)? + 8.0 * f(x + h)? - f(x + 2.0 * h)?) / (12.0 * h);
        return Ok(v);
    }
    // fourth-order one-sided stencil pointing into the domain
    let s = if x - 2.0 * h < lo { 1.0 } else { -1.0 };
    let hs = s * h;
    let v = (-25.0 * f(x)? + 48.0 * f(x + hs)? - 36.0 * f(x + 2.0 * hs)? + 16.0 * f(x + 3.0 * hs)?
        - 3.0 * f(x + 4.0 * hs)?)
        / (12.0 * hs);
    Ok(v)
}

/// (dD/dz, dΔ/dz) from finite differences of H̄.
pub fn reduced_equations(s: &ReducedState, z: f64, c: &FieldCoupling, g: &dyn GModel) -> Result<(f64, f64)> {
    if s.d.abs() > s.theta * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("|D| = {} exceeds Θ = {}", s.d.abs(), s.theta)));
    }
    let hd = FD_STEP * s.theta.max(1e-300);
    let dh_dd = derivative(
        |d| reduced_hamiltonian(&ReducedState { d, ..*s }, z, c, g),
        s.d,
        hd.min(0.25 * s.theta),
        -s.theta,
        s.theta,
    )?;
    let dh_ddelta = derivative(
        |delta| reduced_hamiltonian(&ReducedState { delta, ..*s }, z, c, g),
        s.delta,
        FD_STEP,
        f64::NEG_INFINITY,
        f64::INFINITY,
    )?;
    Ok((-dh_ddelta, dh_dd))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedSample {
    pub z: f64,
    pub state: ReducedState,
    pub hbar: f64,
}

/// Integrate the reduced flow, reporting the state at `samples + 1` equally
/// spaced positions over `z_span`.
pub fn integrate_reduced(
    state0: &ReducedState,
    z_span: (f64, f64),
    samples: usize,
    c: &FieldCoupling,
    g: &dyn GModel,
) -> Result<Vec<ReducedSample>> {
    if state0.d.abs() > state0.theta {
        return Err(Error::Domain("initial |D| exceeds Θ".into()));
    }
    let n = samples.max(1);
    let zs: Vec<f64> = (0..=n).map(|k| z_span.0 + (z_span.1 - z_span.0) * k as f64 / n as f64).collect();
    let theta = state0.theta;
    let mut fail = None;
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-14, h_init: 1e-3, h_min: 1e-12, max_steps: 2_000_000 };
    let tr = dopri5(
        |z, y, dy| {
            let s = ReducedState { theta, d: y[0].clamp(-theta, theta), delta: y[1] };
            match reduced_equations(&s, z, c, g) {
                Ok((a, b)) => {
                    dy[0] = a;
                    dy[1] = b;
                }
                Err(e) => {
                    fail.get_or_insert(e);
                    dy[0] = f64::NAN;
                    dy[1] = f64::NAN;
                }
            }
        },
        zs[0],
        &[state0.d, state0.delta],
        &zs[1..],
        &opts,
    );
    if let Some(e) = fail {
        return Err(e);
    }
    let tr = tr?;
    let mut out = Vec::with_capacity(zs.len());
    out.push(ReducedSample { z: zs[0], state: *state0, hbar: reduced_hamiltonian(state0, zs[0], c, g)? });
    for (z, y) in tr.t.iter().zip(&tr.y) {
        let state = ReducedState { theta, d: y[0], delta: y[1] };
        out.push(ReducedSample { z: *z, state, hbar: reduced_hamiltonian(&state, *z, c, g)? });
    }
    Ok(out)
}
