//! N-particle dynamics with a quasistatic field.
//!
//! Particles move in the dimensionless potential ξ²/ℓ² − ε(|e|² + 2 Re e) with
//! kick–drift–kick leapfrog steps (time in 1/(β_m v_th)). After every
//! `field_refresh_every` drifts the line density is deposited with a Gaussian
//! kernel and the Helmholtz equation is solved again.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{DensityProfile, Grid, Params};
use crate::stationary::{decompose, helmholtz_solve, order_parameter, stationary_grid, FieldSolution};

pub const MIN_PARTICLES: usize = 1000;
pub const MAX_DT: f64 = 0.05;
/// Particles beyond this many ℓ from the trap centre are removed.
pub const ESCAPE_FACTOR: f64 = 3.0;
/// One grid spacing at the default resolution; wider kernels damp the
/// wavenumber-2 density modulation that drives the instability.
pub const DEFAULT_KERNEL_WIDTH: f64 = 2.0 * PI / DEFAULT_DYNAMICS_PPW as f64;
pub const DEFAULT_DYNAMICS_PPW: usize = 48;
/// Kernel support in standard deviations.
const KERNEL_CUTOFF: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub xi: Vec<f64>,
    pub u: Vec<f64>,
    pub seed: u64,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// |Σ e^{2iξ}|/N.
    pub fn bunching(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let s: Complex64 = self.xi.iter().map(|&x| Complex64::from_polar(1.0, 2.0 * x)).sum();
        s.norm() / self.len() as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub theta: Vec<f64>,
    pub bunching: Vec<f64>,
    pub energy: Vec<f64>,
    pub escaped: Vec<usize>,
}

/// Normal-phase sample: ξ ~ N(0, ℓ²/2), u ~ N(0, 1).
pub fn sample_normal_phase(n: usize, params: &Params, seed: u64) -> Result<ParticleEnsemble> {
    params.validate()?;
    if n < MIN_PARTICLES {
        return Err(Error::Domain(format!("need at least {MIN_PARTICLES} particles, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = Normal::new(0.0, params.ell / 2f64.sqrt()).expect("positive width");
    let mom = Normal::new(0.0, 1.0).expect("unit width");
    let mut xi = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    for _ in 0..n {
        xi.push(pos.sample(&mut rng));
        u.push(mom.sample(&mut rng));
    }
    Ok(ParticleEnsemble { xi, u, seed })
}

/// Gaussian-kernel estimate of the line density on `grid`, normalized to one.
pub fn deposit_density(ens: &ParticleEnsemble, grid: &Grid, kernel_width: f64) -> Result<DensityProfile> {
    if !(kernel_width >= grid.h) {
        return Err(Error::Domain(format!("kernel width {kernel_width} is below the grid spacing {}", grid.h)));
    }
    let mut values = vec![0.0; grid.n];
    let reach = (KERNEL_CUTOFF * kernel_width / grid.h).ceil() as isize;
    let inv2s2 = 0.5 / (kernel_width * kernel_width);
    for &x in &ens.xi {
        let centre = ((x - grid.x0) / grid.h).round() as isize;
        let lo = (centre - reach).max(0);
        let hi = (centre + reach).min(grid.n as isize - 1);
        for j in lo..=hi {
            let d = grid.xi(j as usize) - x;
            values[j as usize] += (-d * d * inv2s2).exp();
        }
    }
    let z = grid.integrate(&values);
    if !(z > 0.0) {
        return Err(Error::Numerical("no particle inside the grid".into()));
    }
    values.iter_mut().for_each(|v| *v /= z);
    Ok(DensityProfile { grid: *grid, values })
}

/// Samples of φ = |e|² + 2 Re e and ∂φ/∂ξ on the field grid.
struct Potential {
    grid: Grid,
    phi: Vec<f64>,
    grad: Vec<f64>,
}

impl Potential {
    fn new(field: &FieldSolution) -> Self {
        let phi = field.e.iter().map(|e| e.norm_sqr() + 2.0 * e.re).collect();
        let grad = field
            .e
            .iter()
            .zip(&field.de)
            .map(|(e, d)| 2.0 * (e.conj() * d).re + 2.0 * d.re)
            .collect();
        Potential { grid: field.grid, phi, grad }
    }

    fn interp(&self, v: &[f64], x: f64) -> f64 {
        let s = (x - self.grid.x0) / self.grid.h;
        if s <= 0.0 {
            return v[0];
        }
        let j = s.floor() as usize;
        if j + 1 >= self.grid.n {
            return v[self.grid.n - 1];
        }
        let f = s - j as f64;
        v[j] * (1.0 - f) + v[j + 1] * f
    }
}

fn kick(ens: &mut ParticleEnsemble, pot: &Potential, dt: f64, params: &Params) {
    let k = 2.0 / (params.ell * params.ell);
    for (x, u) in ens.xi.iter().zip(ens.u.iter_mut()) {
        let force = params.eps * pot.interp(&pot.grad, *x) - k * x;
        *u += force * dt;
    }
}

/// Drift, then remove escaped particles; returns how many left.
fn drift(ens: &mut ParticleEnsemble, dt: f64, params: &Params) -> usize {
    let limit = ESCAPE_FACTOR * params.ell;
    for (x, u) in ens.xi.iter_mut().zip(&ens.u) {
        *x += u * dt;
    }
    let before = ens.len();
    if ens.xi.iter().any(|x| x.abs() > limit) {
        let (xi, u): (Vec<f64>, Vec<f64>) = ens
            .xi
            .iter()
            .zip(&ens.u)
            .filter(|(x, _)| x.abs() <= limit)
            .map(|(x, u)| (*x, *u))
            .unzip();
        ens.xi = xi;
        ens.u = u;
    }
    before - ens.len()
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::Domain(format!("time step must lie in (0, {MAX_DT}], got {dt}")));
    }
    Ok(())
}

/// One kick–drift–kick step in a frozen field. Returns the number of escaped
/// particles.
pub fn step(ens: &mut ParticleEnsemble, field: &FieldSolution, dt: f64, params: &Params) -> Result<usize> {
    check_dt(dt)?;
    let pot = Potential::new(field);
    kick(ens, &pot, 0.5 * dt, params);
    let gone = drift(ens, dt, params);
    kick(ens, &pot, 0.5 * dt, params);
    Ok(gone)
}

/// Mean of u²/2 + ξ²/ℓ² − εφ(ξ) per particle.
fn energy(ens: &ParticleEnsemble, pot: &Potential, params: &Params) -> f64 {
    if ens.is_empty() {
        return 0.0;
    }
    let inv = 1.0 / (params.ell * params.ell);
    let s: f64 = ens
        .xi
        .iter()
        .zip(&ens.u)
        .map(|(&x, &u)| 0.5 * u * u + x * x * inv - params.eps * pot.interp(&pot.phi, x))
        .sum();
    s / ens.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub particles: usize,
    pub t_final: f64,
    pub dt: f64,
    pub field_refresh_every: usize,
    pub record_every: usize,
    pub kernel_width: f64,
    pub ppw: usize,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            particles: 10_000,
            t_final: 200.0,
            dt: 0.02,
            field_refresh_every: 1,
            record_every: 5,
            kernel_width: DEFAULT_KERNEL_WIDTH,
            ppw: DEFAULT_DYNAMICS_PPW,
            seed: 1,
        }
    }
}

/// Normal-phase start, default step size and kernel.
pub fn run(params: &Params, n: usize, t_final: f64, field_refresh_every: usize, seed: u64) -> Result<TimeSeries> {
    let opts = RunOptions { particles: n, t_final, field_refresh_every, seed, ..Default::default() };
    run_with(params, &opts).map(|(ts, _)| ts)
}

fn field_of(ens: &ParticleEnsemble, grid: &Grid, params: &Params, width: f64) -> Result<FieldSolution> {
    let nu = deposit_density(ens, grid, width)?;
    helmholtz_solve(&nu, params)
}

/// Full run; also returns the final ensemble.
pub fn run_with(params: &Params, opts: &RunOptions) -> Result<(TimeSeries, ParticleEnsemble)> {
    let ens = sample_normal_phase(opts.particles, params, opts.seed)?;
    evolve(ens, params, opts)
}

/// Evolve a given ensemble.
pub fn evolve(mut ens: ParticleEnsemble, params: &Params, opts: &RunOptions) -> Result<(TimeSeries, ParticleEnsemble)> {
    params.validate()?;
    check_dt(opts.dt)?;
    if !(opts.t_final > 0.0) {
        return Err(Error::Domain(format!("final time must be positive, got {}", opts.t_final)));
    }
    if opts.field_refresh_every == 0 || opts.record_every == 0 {
        return Err(Error::Domain("refresh and record strides must be positive".into()));
    }
    let grid = stationary_grid(params, opts.ppw);
    let steps = (opts.t_final / opts.dt).round().max(1.0) as usize;
    let mut field = field_of(&ens, &grid, params, opts.kernel_width)?;
    let mut pot = Potential::new(&field);
    let mut ts = TimeSeries::default();
    let mut escaped = 0usize;
    let mut record = |t: f64, ens: &ParticleEnsemble, field: &FieldSolution, pot: &Potential, escaped: usize| {
        ts.t.push(t);
        ts.theta.push(order_parameter(&decompose(field)).theta);
        ts.bunching.push(ens.bunching());
        ts.energy.push(energy(ens, pot, params));
        ts.escaped.push(escaped);
    };
    record(0.0, &ens, &field, &pot, 0);
    for k in 1..=steps {
        kick(&mut ens, &pot, 0.5 * opts.dt, params);
        escaped += drift(&mut ens, opts.dt, params);
        if ens.is_empty() {
            return Err(Error::Numerical("every particle escaped".into()));
        }
        if k % opts.field_refresh_every == 0 {
            field = field_of(&ens, &grid, params, opts.kernel_width)?;
            pot = Potential::new(&field);
        }
        kick(&mut ens, &pot, 0.5 * opts.dt, params);
        if k % opts.record_every == 0 || k == steps {
            record(k as f64 * opts.dt, &ens, &field, &pot, escaped);
        }
    }
    Ok((ts, ens))
}

/// Little-endian layout: N (u64), seed (u64), N positions, N momenta (f64).
pub fn write_checkpoint(ens: &ParticleEnsemble, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 16 * ens.len());
    buf.extend_from_slice(&(ens.len() as u64).to_le_bytes());
    buf.extend_from_slice(&ens.seed.to_le_bytes());
    for v in ens.xi.iter().chain(&ens.u) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ParticleEnsemble> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let word = |i: usize| -> [u8; 8] { buf[8 * i..8 * i + 8].try_into().expect("eight bytes") };
    if buf.len() < 16 {
        return Err(Error::Domain("checkpoint shorter than its header".into()));
    }
    let n = u64::from_le_bytes(word(0)) as usize;
    let seed = u64::from_le_bytes(word(1));
    if buf.len() != 16 + 16 * n {
        return Err(Error::Domain(format!("checkpoint holds {} bytes, expected {}", buf.len(), 16 + 16 * n)));
    }
    let xi = (0..n).map(|i| f64::from_le_bytes(word(2 + i))).collect();
    let u = (0..n).map(|i| f64::from_le_bytes(word(2 + n + i))).collect();
    Ok(ParticleEnsemble { xi, u, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eps: f64) -> Params {
        Params::new(0.05, eps, 100.0, 3).unwrap()
    }

    #[test]
    fn sampling_is_reproducible_and_checked() {
        let a = sample_normal_phase(2000, &params(0.0), 7).unwrap();
        let b = sample_normal_phase(2000, &params(0.0), 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_normal_phase(2000, &params(0.0), 8).unwrap());
        assert!(sample_normal_phase(999, &params(0.0), 7).is_err());
    }

    #[test]
    fn single_particle_unit_mass() {
        let grid = Grid::symmetric(20.0, 24);
        let ens = ParticleEnsemble { xi: vec![0.3], u: vec![0.0], seed: 0 };
        let d = deposit_density(&ens, &grid, PI / 8.0).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-12);
        let peak = d.values.iter().cloned().fold(0.0, f64::max);
        let expect = 1.0 / ((2.0 * PI).sqrt() * PI / 8.0);
        assert!((peak / expect - 1.0).abs() < 0.05);
        assert!(deposit_density(&ens, &grid, 0.5 * grid.h).is_err());
    }

    #[test]
    fn harmonic_energy_conserved() {
        let p = params(0.0);
        let mut ens = ParticleEnsemble { xi: vec![30.0; 1], u: vec![0.4], seed: 0 };
        let grid = Grid::symmetric(50.0, 24);
        let field = FieldSolution {
            grid,
            e: vec![Complex64::new(0.0, 0.0); grid.n],
            de: vec![Complex64::new(0.0, 0.0); grid.n],
            params: p,
            iterations: 0,
            residual: 0.0,
        };
        let e = |s: &ParticleEnsemble| 0.5 * s.u[0] * s.u[0] + (s.xi[0] / p.ell).powi(2);
        let e0 = e(&ens);
        for _ in 0..1000 {
            step(&mut ens, &field, 0.05, &p).unwrap();
        }
        assert!((e(&ens) / e0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn checkpoint_round_trip() {
        let ens = sample_normal_phase(1000, &params(0.0), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ens.bin");
        write_checkpoint(&ens, &path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 16 + 16 * 1000);
        assert_eq!(read_checkpoint(&path).unwrap(), ens);
        std::fs::write(&path, [0u8; 20]).unwrap();
        assert!(read_checkpoint(&path).is_err());
    }

    #[test]
    fn rejects_large_step() {
        let p = params(0.0);
        let opts = RunOptions { particles: 1000, t_final: 1.0, dt: 0.1, ..Default::default() };
        assert!(matches!(run_with(&p, &opts), Err(Error::Domain(_))));
    }

    #[test]
    fn sample_moments_and_ks() {
        let n = 20_000;
        let p = params(0.0);
        let ens = sample_normal_phase(n, &p, 11).unwrap();
        let sq = (n as f64).sqrt();
        let mean_x = ens.xi.iter().sum::<f64>() / n as f64;
        let var_u = ens.u.iter().map(|u| u * u).sum::<f64>() / n as f64;
        assert!(mean_x.abs() < 5.0 * (p.ell / 2f64.sqrt()) / sq);
        assert!((var_u - 1.0).abs() < 5.0 / sq);
        let mut u = ens.u.clone();
        u.sort_by(f64::total_cmp);
        let cdf = |x: f64| 0.5 * (1.0 + erf(x / 2f64.sqrt()));
        let d = u
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.63 / sq, "KS distance {d}");
    }

    // reference erf by quadrature
    fn erf(x: f64) -> f64 {
        let t = x.abs();
        let v = crate::numerics::quad::quad_adaptive(|s| (-s * s).exp(), 0.0, t, 1e-13).unwrap();
        (2.0 / PI.sqrt() * v).copysign(x)
    }

    #[test]
    fn uniform_particles_give_flat_profile() {
        let grid = Grid::symmetric(50.0, 24);
        let xi: Vec<f64> = (0..20_000).map(|k| -40.0 + 80.0 * (k as f64 + 0.5) / 20_000.0).collect();
        let ens = ParticleEnsemble { u: vec![0.0; xi.len()], xi, seed: 0 };
        let d = deposit_density(&ens, &grid, PI / 8.0).unwrap();
        for j in 0..grid.n {
            let x = grid.xi(j);
            if x.abs() < 35.0 {
                assert!((d.values[j] * 80.0 - 1.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn thermal_sample_matches_gaussian_profile() {
        let p = params(0.0);
        let ens = sample_normal_phase(100_000, &p, 5).unwrap();
        let grid = stationary_grid(&p, 24);
        let d = deposit_density(&ens, &grid, 3.0).unwrap();
        let exact = DensityProfile::normal_phase(grid, p.ell);
        let diff: Vec<f64> = d.values.iter().zip(&exact.values).map(|(a, b)| (a - b).powi(2)).collect();
        let norm: Vec<f64> = exact.values.iter().map(|b| b * b).collect();
        let rel = (grid.integrate(&diff) / grid.integrate(&norm)).sqrt();
        assert!(rel < 0.02, "L2 error {rel}");
    }

    fn frozen(grid: Grid, p: Params, amp: f64) -> FieldSolution {
        let e = (0..grid.n).map(|j| Complex64::new(amp * grid.xi(j).cos(), 0.0)).collect();
        let de = (0..grid.n).map(|j| Complex64::new(-amp * grid.xi(j).sin(), 0.0)).collect();
        FieldSolution { grid, e, de, params: p, iterations: 0, residual: 0.0 }
    }

    #[test]
    fn particle_trapped_in_lattice_well() {
        let p = Params::new(0.05, 1.0, 1e4, 0).unwrap();
        let field = frozen(Grid::symmetric(10.0, 200), p, 0.1);
        let mut ens = ParticleEnsemble { xi: vec![0.3], u: vec![0.0], seed: 0 };
        let mut seen = 0.0f64;
        for _ in 0..5000 {
            step(&mut ens, &field, 0.01, &p).unwrap();
            seen = seen.max(ens.xi[0].abs());
            assert!(ens.xi[0].abs() < 0.31);
        }
        assert!(seen > 0.29);
    }

    #[test]
    fn leapfrog_follows_adaptive_integrator() {
        use crate::numerics::ode::{dopri5, OdeOptions};
        let p = Params::new(0.05, 1.0, 30.0, 0).unwrap();
        let amp = 0.1;
        let field = frozen(Grid::symmetric(20.0, 3000), p, amp);
        let mut ens = ParticleEnsemble { xi: vec![0.4], u: vec![0.1], seed: 0 };
        let dt = 0.005;
        for _ in 0..2000 {
            step(&mut ens, &field, dt, &p).unwrap();
        }
        let tr = dopri5(
            |_, y, dy| {
                let (c, s) = (y[0].cos(), y[0].sin());
                let grad = -2.0 * amp * amp * c * s - 2.0 * amp * s;
                dy[0] = y[1];
                dy[1] = p.eps * grad - 2.0 * y[0] / (p.ell * p.ell);
            },
            0.0,
            &[0.4, 0.1],
            &[10.0],
            &OdeOptions::default(),
        )
        .unwrap();
        assert!((ens.xi[0] - tr.y[0][0]).abs() < 1e-4, "{} vs {}", ens.xi[0], tr.y[0][0]);
    }

    #[test]
    fn ensemble_energy_conserved_without_pump() {
        let p = params(0.0);
        let mut ens = sample_normal_phase(1000, &p, 9).unwrap();
        let grid = Grid::symmetric(10.0, 24);
        let field = frozen(grid, p, 0.0);
        let total = |s: &ParticleEnsemble| -> f64 {
            s.xi.iter().zip(&s.u).map(|(x, u)| 0.5 * u * u + (x / p.ell).powi(2)).sum()
        };
        let e0 = total(&ens);
        let mut gone = 0;
        for _ in 0..2000 {
            gone += step(&mut ens, &field, 0.05, &p).unwrap();
        }
        assert_eq!(gone, 0);
        assert!((total(&ens) / e0 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn runs_are_deterministic() {
        let p = params(20.0);
        let opts = RunOptions { particles: 1000, t_final: 1.0, ppw: 24, kernel_width: PI / 8.0, ..Default::default() };
        let (a, ea) = run_with(&p, &opts).unwrap();
        let (b, eb) = run_with(&p, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(ea, eb);
        assert!(a.t.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a.t.len(), a.theta.len());
        assert_eq!(a.t.len(), a.escaped.len());
    }
}
