//! Physical and dimensionless parameters, the spatial grid, and the thermal
//! density closure.
//!
//! Units: ξ = β_m z, momenta in m·v_th, fields in the pump amplitude E_L,
//! energies in k_B T. With these the scattered field obeys
//! e'' + (1 + 2πζ₀ν) e = −2πζ₀ν, where ν is the line density normalized to
//! unit integral.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::stationary::FieldSolution;

pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Parameters in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    pub laser_wavenumber: f64,
    pub propagation_constant: f64,
    pub polarizability: f64,
    pub vacuum_permittivity: f64,
    pub mode_cross_section: f64,
    pub particle_number: f64,
    pub temperature: f64,
    pub trap_frequency: f64,
    pub particle_mass: f64,
    pub pump_amplitude: f64,
}

/// Dimensionless system specification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub zeta0: f64,
    pub eps: f64,
    pub ell: f64,
    pub n_max: usize,
}

impl Params {
    pub fn new(zeta0: f64, eps: f64, ell: f64, n_max: usize) -> Result<Self> {
        let p = Params { zeta0, eps, ell, n_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta0 > 0.0) || !self.zeta0.is_finite() {
            return Err(Error::Domain(format!("zeta0 must be positive, got {}", self.zeta0)));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::Domain(format!("eps must be non-negative, got {}", self.eps)));
        }
        if !(self.ell > 0.0) || !self.ell.is_finite() {
            return Err(Error::Domain(format!("ell must be positive, got {}", self.ell)));
        }
        Ok(())
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.ell < 20.0 {
            w.push(format!("ell = {} is not large compared to the lattice period", self.ell));
        }
        w
    }

    pub fn eps_c(&self) -> f64 {
        0.5 / self.zeta0
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Params { eps, ..*self }
    }

    /// Peak of the Gaussian normal-phase density, 1/(√π ℓ).
    pub fn peak_density(&self) -> f64 {
        1.0 / (std::f64::consts::PI.sqrt() * self.ell)
    }
}

pub fn derive_dimensionless(p: &PhysicalParams) -> Result<Params> {
    let fields = [
        ("laser_wavenumber", p.laser_wavenumber),
        ("propagation_constant", p.propagation_constant),
        ("polarizability", p.polarizability),
        ("vacuum_permittivity", p.vacuum_permittivity),
        ("mode_cross_section", p.mode_cross_section),
        ("particle_number", p.particle_number),
        ("temperature", p.temperature),
        ("trap_frequency", p.trap_frequency),
        ("particle_mass", p.particle_mass),
    ];
    for (name, v) in fields {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    if !(p.pump_amplitude >= 0.0) || !p.pump_amplitude.is_finite() {
        return Err(Error::Domain(format!("pump_amplitude must be non-negative, got {}", p.pump_amplitude)));
    }
    let lambda = 2.0 * std::f64::consts::PI / p.laser_wavenumber;
    let zeta0 = (p.laser_wavenumber / p.propagation_constant) * p.particle_number * p.polarizability
        / (p.mode_cross_section * lambda * p.vacuum_permittivity);
    let kt = BOLTZMANN * p.temperature;
    let eps = p.polarizability * p.pump_amplitude * p.pump_amplitude / kt;
    let l_z = (2.0 * kt / (p.particle_mass * p.trap_frequency * p.trap_frequency)).sqrt();
    Ok(Params { zeta0, eps, ell: p.propagation_constant * l_z, n_max: 3 })
}

/// ε_c = 1/(2ζ₀).
pub fn critical_pump(zeta0: f64) -> Result<f64> {
    if !(zeta0 > 0.0) || !zeta0.is_finite() {
        return Err(Error::Domain(format!("zeta0 must be positive, got {zeta0}")));
    }
    Ok(0.5 / zeta0)
}

/// Uniform grid ξ_j = x0 + j·h, j = 0..n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub x0: f64,
    pub h: f64,
    pub n: usize,
}

impl Grid {
    /// Symmetric grid on [−half_width, half_width] with about `ppw` points per
    /// vacuum wavelength 2π.
    pub fn symmetric(half_width: f64, ppw: usize) -> Self {
        let h0 = 2.0 * std::f64::consts::PI / ppw as f64;
        let cells = (2.0 * half_width / h0).ceil() as usize;
        Grid { x0: -half_width, h: 2.0 * half_width / cells as f64, n: cells + 1 }
    }

    pub fn xi(&self, j: usize) -> f64 {
        self.x0 + self.h * j as f64
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.xi(j)).collect()
    }

    pub fn end(&self) -> f64 {
        self.xi(self.n - 1)
    }

    /// Trapezoid integral of samples on this grid.
    pub fn integrate(&self, v: &[f64]) -> f64 {
        let n = v.len();
        let inner: f64 = v.iter().sum();
        self.h * (inner - 0.5 * (v[0] + v[n - 1]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl DensityProfile {
    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn zero(grid: Grid) -> Self {
        DensityProfile { grid, values: vec![0.0; grid.n] }
    }

    /// Normal-phase Gaussian exp(−ξ²/ℓ²)/(√π ℓ), renormalized on the grid.
    pub fn normal_phase(grid: Grid, ell: f64) -> Self {
        let values: Vec<f64> = (0..grid.n).map(|j| (-(grid.xi(j) / ell).powi(2)).exp()).collect();
        let z = grid.integrate(&values);
        DensityProfile { grid, values: values.into_iter().map(|v| v / z).collect() }
    }
}

/// Optical potential exponent ε(|e|² + 2 Re e).
pub fn lattice_exponent(eps: f64, e: Complex64) -> f64 {
    eps * (e.norm_sqr() + 2.0 * e.re)
}

/// Unnormalized Boltzmann weights and their grid integral for a field sampled on `grid`.
pub fn thermal_weights(grid: &Grid, e: &[Complex64], params: &Params) -> Result<(Vec<f64>, f64)> {
    let mut expo = Vec::with_capacity(grid.n);
    let mut max = f64::NEG_INFINITY;
    for (j, &ej) in e.iter().enumerate() {
        let lat = lattice_exponent(params.eps, ej);
        if lat > 700.0 || !lat.is_finite() {
            return Err(Error::Range(format!("optical potential exponent {lat} overflows at xi = {}", grid.xi(j))));
        }
        let x = grid.xi(j) / params.ell;
        let v = lat - x * x;
        max = max.max(v);
        expo.push(v);
    }
    let w: Vec<f64> = expo.into_iter().map(|v| (v - max).exp()).collect();
    let z = grid.integrate(&w);
    Ok((w, z))
}

/// ν ∝ exp(−ξ²/ℓ²)·exp[ε(|e|² + 2 Re e)], normalized to unit integral.
pub fn thermal_density(field: &FieldSolution, params: &Params) -> Result<DensityProfile> {
    thermal_density_on(&field.grid, &field.e, params)
}

pub fn thermal_density_on(grid: &Grid, e: &[Complex64], params: &Params) -> Result<DensityProfile> {
    let (w, z) = thermal_weights(grid, e, params)?;
    Ok(DensityProfile { grid: *grid, values: w.into_iter().map(|v| v / z).collect() })
}
