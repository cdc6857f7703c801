//! Self-consistent stationary fields.
//!
//! The Helmholtz equation e'' + (1 + 2πζ₀ν)e = −2πζ₀ν is discretized with the
//! three-point stencil
//!
//! ```text
//! (e_{j+1} − 2 cos h · e_j + e_{j−1}) / (h sin h) + 2πζ₀ν_j (1 + e_j) = 0,
//! ```
//!
//! which propagates the vacuum waves e^{±iξ} without numerical dispersion. The
//! outgoing-wave conditions become the exact ghost values e_{−1} = e^{ih} e_0 and
//! e_N = e^{ih} e_{N−1}.
//!
//! Two solvers are provided: the under-relaxed fixed point field → density →
//! field, and Newton's method on the discrete equations. The Newton Jacobian is
//! block tridiagonal plus a rank-one term from the normalization of ν, handled
//! with the Sherman–Morrison formula. Ordered branches are reached by Newton
//! continuation in ε from seeds built on the averaged traveling-wave orbit.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::branches::{branch_roots, Regime};
use crate::error::{Error, Result};
use crate::model::{thermal_density_on, thermal_weights, DensityProfile, Grid, Params};
use crate::numerics::linalg::{solve_tridiagonal, BlockTridiagonal, Mat2};
use crate::reduced_hamiltonian::envelope::amplitude_orbit;

/// Half-width of the computational domain in units of ℓ; the normal-phase
/// density there is e^{−20} of its peak.
pub const DOMAIN_FACTOR: f64 = 4.5;
pub const DEFAULT_PPW: usize = 24;
/// Grids coarser than this many points per wavelength are rejected.
pub const MIN_PPW: f64 = 20.0;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolution {
    pub grid: Grid,
    pub e: Vec<Complex64>,
    pub de: Vec<Complex64>,
    pub params: Params,
    pub iterations: usize,
    pub residual: f64,
}

impl FieldSolution {
    fn new(grid: Grid, e: Vec<Complex64>, params: Params, iterations: usize, residual: f64) -> Self {
        let de = derivative(&grid, &e);
        FieldSolution { grid, e, de, params, iterations, residual }
    }

    /// Violation of e' = ∓ie at the two ends relative to the largest field
    /// magnitude. The end values themselves can be dominated by the local
    /// response of the density tail, which is not a running wave.
    pub fn radiation_mismatch(&self) -> f64 {
        let i = Complex64::i();
        let n = self.e.len();
        let scale = sup(&self.e);
        if scale == 0.0 {
            return 0.0;
        }
        (self.de[0] + i * self.e[0]).norm().max((self.de[n - 1] - i * self.e[n - 1]).norm()) / scale
    }
}

/// The default grid for `params`.
pub fn stationary_grid(params: &Params, ppw: usize) -> Grid {
    Grid::symmetric(DOMAIN_FACTOR * params.ell, ppw)
}

fn check_grid(grid: &Grid) -> Result<()> {
    if grid.n < 3 {
        return Err(Error::Domain("grid needs at least three points".into()));
    }
    if !(grid.h > 0.0) || grid.h > 2.0 * PI / MIN_PPW {
        return Err(Error::Domain(format!("grid spacing {} exceeds 2π/{MIN_PPW}", grid.h)));
    }
    Ok(())
}

fn hs(h: f64) -> f64 {
    h * h.sin()
}

/// Central difference (e_{j+1} − e_{j−1})/(2 sin h), exact for e^{±iξ}, with the
/// outgoing ghost values at the ends.
pub fn derivative(grid: &Grid, e: &[Complex64]) -> Vec<Complex64> {
    let n = e.len();
    let lam = Complex64::from_polar(1.0, grid.h);
    let s = 2.0 * grid.h.sin();
    (0..n)
        .map(|j| {
            let left = if j == 0 { lam * e[0] } else { e[j - 1] };
            let right = if j + 1 == n { lam * e[n - 1] } else { e[j + 1] };
            (right - left) / s
        })
        .collect()
}

/// Discrete Helmholtz residual for a given field, recomputing ν from it.
pub fn discrete_residual(grid: &Grid, e: &[Complex64], params: &Params) -> Result<Vec<Complex64>> {
    let nu = thermal_density_on(grid, e, params)?;
    Ok(residual_with(grid, e, &nu.values, params.zeta0))
}

fn residual_with(grid: &Grid, e: &[Complex64], nu: &[f64], zeta0: f64) -> Vec<Complex64> {
    let n = e.len();
    let h = grid.h;
    let lam = Complex64::from_polar(1.0, h);
    let (c2, inv) = (2.0 * h.cos(), 1.0 / hs(h));
    let c = 2.0 * PI * zeta0;
    (0..n)
        .map(|j| {
            let left = if j == 0 { lam * e[0] } else { e[j - 1] };
            let right = if j + 1 == n { lam * e[n - 1] } else { e[j + 1] };
            (right - c2 * e[j] + left) * inv + c * nu[j] * (1.0 + e[j])
        })
        .collect()
}

fn sup(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Linear solve for a prescribed density.
pub fn helmholtz_solve(density: &DensityProfile, params: &Params) -> Result<FieldSolution> {
    params.validate()?;
    let grid = density.grid;
    check_grid(&grid)?;
    let e = solve_linear(&grid, &density.values, params.zeta0)?;
    let residual = sup(&residual_with(&grid, &e, &density.values, params.zeta0));
    Ok(FieldSolution::new(grid, e, *params, 1, residual))
}

fn solve_linear(grid: &Grid, nu: &[f64], zeta0: f64) -> Result<Vec<Complex64>> {
    let n = grid.n;
    let h = grid.h;
    let inv = 1.0 / hs(h);
    let c = 2.0 * PI * zeta0;
    let lam = Complex64::from_polar(1.0, h);
    let off = vec![Complex64::new(inv, 0.0); n];
    let mut diag: Vec<Complex64> = nu.iter().map(|&v| Complex64::new(-2.0 * h.cos() * inv + c * v, 0.0)).collect();
    diag[0] += lam * inv;
    diag[n - 1] += lam * inv;
    let mut rhs: Vec<Complex64> = nu.iter().map(|&v| Complex64::new(-c * v, 0.0)).collect();
    solve_tridiagonal(&off, &diag, &off, &mut rhs)?;
    if rhs.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numerical("Helmholtz solve produced non-finite values".into()));
    }
    Ok(rhs)
}

/// Initial field for the self-consistent solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum Seed {
    Zero,
    /// Explicit samples on the solver grid.
    Field(Vec<Complex64>),
    /// Averaged-theory orbit of branch n with order parameter Θ.
    Branch { n: usize, theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub ppw: usize,
    pub relaxation: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { ppw: DEFAULT_PPW, relaxation: 0.3, tol: 1e-8, max_iter: 10_000 }
    }
}

/// Field of the averaged orbit that starts with only a left-running wave,
/// mapped to ξ through τ(ξ) = πζ₀ ∫_{−∞}^{ξ} ν₀.
pub fn orbit_seed(grid: &Grid, params: &Params, theta: f64) -> Result<Vec<Complex64>> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("seed order parameter must be positive, got {theta}")));
    }
    let nu0 = DensityProfile::normal_phase(*grid, params.ell);
    let mut tau = vec![0.0; grid.n];
    for j in 1..grid.n {
        tau[j] = tau[j - 1] + 0.5 * grid.h * (nu0.values[j] + nu0.values[j - 1]);
    }
    let total = PI * params.zeta0;
    let scale = total / tau[grid.n - 1];
    tau.iter_mut().for_each(|t| *t *= scale);
    const NODES: usize = 4000;
    let nodes: Vec<f64> = (0..=NODES).map(|k| total * k as f64 / NODES as f64).collect();
    let orbit = amplitude_orbit(params.eps, theta, &nodes)?;
    let i = Complex64::i();
    Ok((0..grid.n)
        .map(|j| {
            let x = tau[j] / total * NODES as f64;
            let k = (x.floor() as usize).min(NODES - 1);
            let f = x - k as f64;
            let a = orbit[k].0 * (1.0 - f) + orbit[k + 1].0 * f;
            let b = orbit[k].1 * (1.0 - f) + orbit[k + 1].1 * f;
            let xi = grid.xi(j);
            a * (i * xi).exp() + b.conj() * (-i * xi).exp()
        })
        .collect())
}

fn seed_field(grid: &Grid, params: &Params, seed: &Seed) -> Result<Vec<Complex64>> {
    match seed {
        Seed::Zero => Ok(vec![ZERO; grid.n]),
        Seed::Field(v) if v.len() == grid.n => Ok(v.clone()),
        Seed::Field(v) => Err(Error::Domain(format!("seed has {} samples, grid has {}", v.len(), grid.n))),
        Seed::Branch { theta, .. } => orbit_seed(grid, params, *theta),
    }
}

/// Under-relaxed fixed-point iteration on the default grid.
pub fn solve_selfconsistent(params: &Params, seed: &Seed, relaxation: f64) -> Result<FieldSolution> {
    let opts = SolverOptions { relaxation, ..Default::default() };
    let grid = stationary_grid(params, opts.ppw);
    solve_selfconsistent_on(&grid, params, seed, &opts)
}

/// Fixed-point iteration; the relaxation is halved whenever the update size
/// grows for five consecutive iterations.
pub fn solve_selfconsistent_on(grid: &Grid, params: &Params, seed: &Seed, opts: &SolverOptions) -> Result<FieldSolution> {
    params.validate()?;
    check_grid(grid)?;
    if !(opts.relaxation > 0.0 && opts.relaxation <= 1.0) {
        return Err(Error::Domain(format!("relaxation must lie in (0, 1], got {}", opts.relaxation)));
    }
    let mut e = seed_field(grid, params, seed)?;
    let mut relax = opts.relaxation;
    let mut prev = f64::INFINITY;
    let mut rising = 0;
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let nu = thermal_density_on(grid, &e, params)?;
        let next = solve_linear(grid, &nu.values, params.zeta0)?;
        change = e.iter().zip(&next).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        for (a, b) in e.iter_mut().zip(&next) {
            *a = *a * (1.0 - relax) + b * relax;
        }
        if change < opts.tol {
            let residual = sup(&discrete_residual(grid, &e, params)?);
            return Ok(FieldSolution::new(*grid, e, *params, it, residual));
        }
        rising = if change > prev { rising + 1 } else { 0 };
        if rising >= 5 {
            relax = (0.5 * relax).max(1e-4);
            rising = 0;
        }
        prev = change;
    }
    let last = FieldSolution::new(*grid, e, *params, opts.max_iter, change);
    Err(Error::Convergence { iterations: opts.max_iter, residual: change, last: Some(Box::new(last)) })
}

/// Newton's method on the discrete equations, converged when the sup-norm
/// residual drops below `tol`.
pub fn newton_solve(grid: &Grid, params: &Params, e0: Vec<Complex64>, tol: f64, max_iter: usize) -> Result<FieldSolution> {
    params.validate()?;
    check_grid(grid)?;
    let n = grid.n;
    let h = grid.h;
    let inv = 1.0 / hs(h);
    let c = 2.0 * PI * params.zeta0;
    let eps = params.eps;
    let lam = Complex64::from_polar(1.0, h);
    let base = Complex64::new(-2.0 * h.cos() * inv, 0.0);
    let i = Complex64::i();
    let off = vec![inv; n];

    let mut e = e0;
    let mut r = discrete_residual(grid, &e, params)?;
    let mut res = sup(&r);
    let mut diag: Vec<Mat2> = vec![[[0.0; 2]; 2]; n];
    for it in 0..max_iter {
        if res < tol {
            return Ok(FieldSolution::new(*grid, e, *params, it, res));
        }
        let (w, z) = thermal_weights(grid, &e, params)?;
        let mut u = vec![[0.0; 2]; n];
        let mut v = vec![[0.0; 2]; n];
        for j in 0..n {
            let nu = w[j] / z;
            let ej = e[j];
            let one_e = 1.0 + ej;
            let mut dr = base + c * (nu * eps * (2.0 * ej.re + 2.0) * one_e + nu);
            let mut di = i * base + c * (nu * eps * 2.0 * ej.im * one_e + i * nu);
            if j == 0 || j + 1 == n {
                dr += lam * inv;
                di += i * lam * inv;
            }
            diag[j] = [[dr.re, di.re], [dr.im, di.im]];
            let uj = -c * nu * one_e;
            u[j] = [uj.re, uj.im];
            let q = if j == 0 || j + 1 == n { 0.5 } else { 1.0 };
            let s = h * q * w[j] / z * eps;
            v[j] = [s * (2.0 + 2.0 * ej.re), s * 2.0 * ej.im];
        }
        let lu = BlockTridiagonal::factor(&off, &diag, &off)?;
        let mut y: Vec<[f64; 2]> = r.iter().map(|z| [z.re, z.im]).collect();
        lu.solve(&mut y);
        lu.solve(&mut u);
        let dot = |a: &[[f64; 2]]| a.iter().zip(&v).map(|(p, q)| p[0] * q[0] + p[1] * q[1]).sum::<f64>();
        let k = dot(&y) / (1.0 + dot(&u));
        let step: Vec<Complex64> = y.iter().zip(&u).map(|(p, q)| Complex64::new(p[0] - k * q[0], p[1] - k * q[1])).collect();

        let r0 = norm2(&r);
        let mut damping = 1.0;
        loop {
            let trial: Vec<Complex64> = e.iter().zip(&step).map(|(a, d)| a - d * damping).collect();
            match discrete_residual(grid, &trial, params) {
                Ok(rt) if norm2(&rt) < r0 * (1.0 - 1e-4 * damping) => {
                    e = trial;
                    r = rt;
                    res = sup(&r);
                    break;
                }
                Ok(_) | Err(Error::Range(_)) => {}
                Err(other) => return Err(other),
            }
            damping *= 0.5;
            if damping < 1e-4 {
                let last = FieldSolution::new(*grid, e, *params, it + 1, res);
                return Err(Error::Convergence { iterations: it + 1, residual: res, last: Some(Box::new(last)) });
            }
        }
    }
    if res < tol {
        return Ok(FieldSolution::new(*grid, e, *params, max_iter, res));
    }
    let last = FieldSolution::new(*grid, e, *params, max_iter, res);
    Err(Error::Convergence { iterations: max_iter, residual: res, last: Some(Box::new(last)) })
}

const START_LADDER: f64 = 1.25;

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationStep {
    pub eps: f64,
    pub theta: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchSolution {
    pub n: usize,
    pub solution: FieldSolution,
    pub path: Vec<ContinuationStep>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    pub ppw: usize,
    pub tol: f64,
    /// Continuation starts at this multiple of the branch threshold (2n+1)ε_c.
    pub start_factor: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub newton_iter: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            ppw: DEFAULT_PPW,
            tol: 1e-9,
            start_factor: 1.2,
            initial_step: 0.1,
            max_step: 0.5,
            min_step: 1e-4,
            newton_iter: 15,
        }
    }
}

/// Averaged-theory order parameter used to seed branch n: the largest root.
pub fn seed_theta(params: &Params, n: usize) -> Result<f64> {
    branch_roots(Regime::Averaged, params.eps, params.zeta0, n)
        .last()
        .map(|r| r.0)
        .ok_or_else(|| Error::Domain(format!("no averaged root for branch {n} at eps = {}", params.eps)))
}

/// Ordered solution of branch n at `params`, reached from an orbit seed near
/// the branch threshold by continuation in ε with a secant predictor.
pub fn solve_branch(params: &Params, n: usize, opts: &ContinuationOptions) -> Result<BranchSolution> {
    params.validate()?;
    let grid = stationary_grid(params, opts.ppw);
    let threshold = (2 * n + 1) as f64 * params.eps_c();
    let target = params.eps;
    if target <= threshold {
        return Err(Error::Domain(format!("eps = {target} is below the threshold {threshold} of branch {n}")));
    }
    // the orbit seed can miss the basin close to the threshold; move the
    // starting point up geometrically until the first solve converges
    let mut start = (opts.start_factor * threshold).min(target);
    let mut sol = loop {
        let p0 = params.with_eps(start);
        let attempt = seed_theta(&p0, n)
            .and_then(|theta0| orbit_seed(&grid, &p0, theta0))
            .and_then(|e0| newton_solve(&grid, &p0, e0, opts.tol, 4 * opts.newton_iter));
        match attempt {
            Ok(s) => break s,
            Err(e) if start >= target => return Err(e),
            Err(Error::Convergence { .. }) | Err(Error::Domain(_)) | Err(Error::Range(_)) => {
                start = (START_LADDER * start).min(target);
            }
            Err(other) => return Err(other),
        }
    };
    let mut path = vec![ContinuationStep { eps: start, theta: order_parameter(&decompose(&sol)).theta, iterations: sol.iterations }];
    let mut prev: Option<(f64, Vec<Complex64>)> = None;
    let mut r = start / threshold;
    let r_target = target / threshold;
    let mut dr = opts.initial_step;
    while r < r_target {
        let rn = (r + dr).min(r_target);
        let guess = match &prev {
            Some((rp, ep)) => {
                let f = (rn - r) / (r - rp);
                sol.e.iter().zip(ep).map(|(a, b)| a + (a - b) * f).collect()
            }
            None => sol.e.clone(),
        };
        match newton_solve(&grid, &params.with_eps(rn * threshold), guess, opts.tol, opts.newton_iter) {
            Ok(next) => {
                prev = Some((r, std::mem::replace(&mut sol, next).e));
                r = rn;
                path.push(ContinuationStep {
                    eps: r * threshold,
                    theta: order_parameter(&decompose(&sol)).theta,
                    iterations: sol.iterations,
                });
                dr = (1.5 * dr).min(opts.max_step);
            }
            Err(Error::Convergence { .. }) | Err(Error::Range(_)) => {
                dr *= 0.5;
                if dr < opts.min_step {
                    return Err(Error::Convergence {
                        iterations: path.len(),
                        residual: sol.residual,
                        last: Some(Box::new(sol)),
                    });
                }
            }
            Err(other) => return Err(other),
        }
    }
    Ok(BranchSolution { n, solution: sol, path })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TravelingDecomposition {
    pub grid: Grid,
    pub e_plus: Vec<Complex64>,
    pub e_minus: Vec<Complex64>,
    pub theta_local: Vec<f64>,
    pub n_plus: Vec<f64>,
    pub n_minus: Vec<f64>,
    /// Width ℓ of the cloud the field belongs to.
    pub ell: f64,
}

/// E± = ½e^{∓iξ}(e ∓ i e'), Θ_local = |E₊|² + |E₋|².
pub fn decompose(field: &FieldSolution) -> TravelingDecomposition {
    decompose_samples(&field.grid, &field.e, &field.de, field.params.ell)
}

pub fn decompose_samples(grid: &Grid, e: &[Complex64], de: &[Complex64], ell: f64) -> TravelingDecomposition {
    let i = Complex64::i();
    let n = e.len();
    let mut out = TravelingDecomposition {
        grid: *grid,
        e_plus: Vec::with_capacity(n),
        e_minus: Vec::with_capacity(n),
        theta_local: Vec::with_capacity(n),
        n_plus: Vec::with_capacity(n),
        n_minus: Vec::with_capacity(n),
        ell,
    };
    for j in 0..n {
        let xi = grid.xi(j);
        let p = 0.5 * (-i * xi).exp() * (e[j] - i * de[j]);
        let m = 0.5 * (i * xi).exp() * (e[j] + i * de[j]);
        let (ap, am) = (p.norm_sqr(), m.norm_sqr());
        let t = ap + am;
        let (np, nm) = if t == 0.0 { (0.5, 0.5) } else { (ap / t, am / t) };
        out.e_plus.push(p);
        out.e_minus.push(m);
        out.theta_local.push(t);
        out.n_plus.push(np);
        out.n_minus.push(nm);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderParameter {
    pub theta: f64,
    /// max |Θ_local − Θ|/Θ over the region.
    pub max_deviation: f64,
}

/// Mean of Θ_local over the central half of the cloud, |ξ| ≤ ℓ/2.
pub fn order_parameter(dec: &TravelingDecomposition) -> OrderParameter {
    order_parameter_within(dec, 0.5 * dec.ell)
}

pub fn order_parameter_within(dec: &TravelingDecomposition, half_width: f64) -> OrderParameter {
    let vals: Vec<f64> = (0..dec.grid.n)
        .filter(|&j| dec.grid.xi(j).abs() <= half_width)
        .map(|j| dec.theta_local[j])
        .collect();
    if vals.is_empty() {
        return OrderParameter { theta: 0.0, max_deviation: 0.0 };
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let dev = if mean > 0.0 {
        vals.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max) / mean
    } else {
        0.0
    };
    OrderParameter { theta: mean, max_deviation: dev }
}

fn running_max(v: &[f64], half: usize) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|j| {
            let lo = j.saturating_sub(half);
            let hi = (j + half).min(n - 1);
            v[lo..=hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Envelopes (running maximum over one wavelength) of ε·2|Re e| and ε|e|².
pub fn potential_envelopes(field: &FieldSolution, params: &Params) -> (Vec<f64>, Vec<f64>) {
    let half = (PI / field.grid.h).round() as usize;
    let pump: Vec<f64> = field.e.iter().map(|z| params.eps * 2.0 * z.re.abs()).collect();
    let fiber: Vec<f64> = field.e.iter().map(|z| params.eps * z.norm_sqr()).collect();
    (running_max(&pump, half), running_max(&fiber, half))
}

/// Half-width, in units of ℓ, of the cloud centre used for the modulation
/// period. Higher branches switch between standing and running waves within
/// the central half, so the window is kept well inside it.
pub const PERIOD_WINDOW: f64 = 0.1;

/// Thermal density and the mean spacing of its local maxima in the cloud
/// centre, or `None` when the centre carries no modulation.
pub fn density_diagnostics(field: &FieldSolution, params: &Params) -> Result<(DensityProfile, Option<f64>)> {
    let profile = thermal_density_on(&field.grid, &field.e, params)?;
    let period = modulation_period(&profile, PERIOD_WINDOW * params.ell);
    Ok((profile, period))
}

pub fn modulation_period(profile: &DensityProfile, half_width: f64) -> Option<f64> {
    let g = &profile.grid;
    let v = &profile.values;
    let idx: Vec<usize> = (1..g.n - 1).filter(|&j| g.xi(j).abs() <= half_width).collect();
    if idx.len() < 3 {
        return None;
    }
    let peaks: Vec<f64> = idx
        .iter()
        .filter(|&&j| v[j] > v[j - 1] && v[j] >= v[j + 1])
        .map(|&j| {
            // parabolic refinement of the maximum
            let (a, b, c) = (v[j - 1], v[j], v[j + 1]);
            let den = a - 2.0 * b + c;
            let off = if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 };
            g.xi(j) + off.clamp(-0.5, 0.5) * g.h
        })
        .collect();
    if peaks.len() < 3 {
        return None;
    }
    Some((peaks[peaks.len() - 1] - peaks[0]) / (peaks.len() - 1) as f64)
}

/// Number of interior dips of N₊ and N₋: excursions below `low` that are
/// preceded and followed by excursions above `1 − low`, counted over the
/// whole grid.
pub fn fraction_dips(dec: &TravelingDecomposition, low: f64) -> (usize, usize) {
    (count_dips(&dec.n_plus, low), count_dips(&dec.n_minus, low))
}

fn count_dips(v: &[f64], low: f64) -> usize {
    // hysteresis states: 0 = low, 1 = high
    let mut states: Vec<u8> = Vec::new();
    for &x in v {
        let s = if x < low {
            0
        } else if x > 1.0 - low {
            1
        } else {
            continue;
        };
        if states.last() != Some(&s) {
            states.push(s);
        }
    }
    states.windows(3).filter(|w| w == &[1, 0, 1]).count()
}

/// Smallest value of N₊ and N₋ over |ξ| ≤ half_width.
pub fn fraction_minimum(dec: &TravelingDecomposition, half_width: f64) -> f64 {
    (0..dec.grid.n)
        .filter(|&j| dec.grid.xi(j).abs() <= half_width)
        .map(|j| dec.n_plus[j].min(dec.n_minus[j]))
        .fold(1.0, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::symmetric(40.0, 24)
    }

    fn analytic(grid: &Grid, f: impl Fn(f64) -> Complex64, df: impl Fn(f64) -> Complex64, ell: f64) -> TravelingDecomposition {
        let e: Vec<_> = (0..grid.n).map(|j| f(grid.xi(j))).collect();
        let de: Vec<_> = (0..grid.n).map(|j| df(grid.xi(j))).collect();
        decompose_samples(grid, &e, &de, ell)
    }

    #[test]
    fn no_source_no_field() {
        let p = Params::new(0.3, 0.0, 5.0, 0).unwrap();
        let d = DensityProfile::zero(grid());
        let s = helmholtz_solve(&d, &p).unwrap();
        assert!(s.e.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn derivative_exact_for_plane_waves() {
        let g = grid();
        let e: Vec<_> = (0..g.n).map(|j| Complex64::from_polar(1.0, g.xi(j))).collect();
        let de = derivative(&g, &e);
        for j in 1..g.n - 1 {
            assert!((de[j] - Complex64::i() * e[j]).norm() < 1e-13);
        }
    }

    #[test]
    fn plane_wave_decomposition() {
        let i = Complex64::i();
        let d = analytic(&grid(), |x| (i * x).exp(), |x| i * (i * x).exp(), 10.0);
        for j in 0..d.grid.n {
            assert!((d.e_plus[j] - 1.0).norm() < 1e-14 && d.e_minus[j].norm() < 1e-14);
            assert!((d.theta_local[j] - 1.0).abs() < 1e-14 && (d.n_plus[j] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn standing_wave_decomposition() {
        let d = analytic(&grid(), |x| Complex64::new(x.cos(), 0.0), |x| Complex64::new(-x.sin(), 0.0), 10.0);
        for j in 0..d.grid.n {
            assert!((d.e_plus[j] - 0.5).norm() < 1e-14 && (d.e_minus[j] - 0.5).norm() < 1e-14);
            assert!((d.n_plus[j] - 0.5).abs() < 1e-14);
        }
        let op = order_parameter(&d);
        assert!((op.theta - 0.5).abs() < 1e-14 && op.max_deviation < 1e-13);
    }

    #[test]
    fn zero_field_fractions_are_half() {
        let d = analytic(&grid(), |_| ZERO, |_| ZERO, 10.0);
        assert!(d.n_plus.iter().all(|&v| v == 0.5));
        assert_eq!(order_parameter(&d).theta, 0.0);
    }

    #[test]
    fn envelopes_of_plane_wave() {
        let g = grid();
        let p = Params::new(0.3, 2.0, 5.0, 0).unwrap();
        let e: Vec<_> = (0..g.n).map(|j| Complex64::from_polar(0.1, g.xi(j))).collect();
        let sol = FieldSolution::new(g, e, p, 0, 0.0);
        let (pump, fiber) = potential_envelopes(&sol, &p);
        let mid = g.n / 2;
        assert!((fiber[mid] - 0.01 * 2.0).abs() < 1e-12);
        assert!((pump[mid] - 0.2 * 2.0).abs() < 1e-3);
    }

    #[test]
    fn normal_phase_below_threshold() {
        let p = Params::new(0.5, 0.5, 20.0, 0).unwrap();
        let s = solve_selfconsistent(&p, &Seed::Zero, 0.3).unwrap();
        assert!(s.residual < 1e-7);
        // the cloud polarizes locally, e ≈ −cν/(1 + cν), without running waves
        let c_nu = 2.0 * PI * p.zeta0 * p.peak_density();
        let theta = order_parameter(&decompose(&s)).theta;
        assert!(theta < c_nu * c_nu, "{theta}");
        let mid = s.grid.n / 2;
        assert!((s.e[mid].re + c_nu / (1.0 + c_nu)).abs() < 0.2 * c_nu);
        assert!(s.radiation_mismatch() < 1e-6);
        let (_, period) = density_diagnostics(&s, &p).unwrap();
        assert!(period.is_none());
    }

    #[test]
    fn newton_matches_picard() {
        let p = Params::new(0.5, 0.5, 20.0, 0).unwrap();
        let a = solve_selfconsistent(&p, &Seed::Zero, 0.5).unwrap();
        let g = a.grid;
        let b = newton_solve(&g, &p, vec![ZERO; g.n], 1e-12, 20).unwrap();
        let diff = a.e.iter().zip(&b.e).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-7, "{diff}");
    }

    #[test]
    fn rejects_coarse_grid_and_bad_relaxation() {
        let p = Params::new(0.5, 0.5, 20.0, 0).unwrap();
        let coarse = Grid { x0: -10.0, h: 0.5, n: 41 };
        assert!(matches!(helmholtz_solve(&DensityProfile::zero(coarse), &p), Err(Error::Domain(_))));
        assert!(matches!(solve_selfconsistent(&p, &Seed::Zero, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn dip_counting() {
        assert_eq!(count_dips(&[0.0, 0.5, 1.0, 0.5, 0.0, 0.4, 1.0], 0.05), 1);
        assert_eq!(count_dips(&[0.0, 1.0], 0.05), 0);
        assert_eq!(count_dips(&[0.0, 1.0, 0.01, 1.0, 0.02, 0.99, 0.0], 0.05), 2);
    }
}
