//! Adaptive Dormand–Prince 5(4) integration.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-10, atol: 1e-12, h_init: 1e-3, h_min: 1e-14, max_steps: 1_000_000 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate y' = f(t, y) from `t0` through each time in `t_out` (ascending,
/// all ≥ t0), returning the state at those times.
pub fn dopri5<F>(mut f: F, t0: f64, y0: &[f64], t_out: &[f64], opts: &OdeOptions) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut h = opts.h_init;
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut traj = Trajectory::default();
    let mut steps = 0usize;
    f(t, &y, &mut k[0]);
    for &target in t_out {
        if target < t {
            return Err(Error::Domain("output times must be ascending".into()));
        }
        while t < target {
            if steps >= opts.max_steps {
                return Err(Error::Numerical(format!("step limit reached at t = {t}")));
            }
            let last = t + h >= target;
            let hs = if last { target - t } else { h };
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for j in 0..s {
                        acc += hs * A[s][j] * k[j][i];
                    }
                    tmp[i] = acc;
                }
                f(t + C[s] * hs, &tmp, &mut k[s]);
            }
            // tmp now holds the fifth-order solution (FSAL stage 7)
            let mut err = 0.0f64;
            for i in 0..n {
                let mut e = 0.0;
                for s in 0..7 {
                    e += E[s] * k[s][i];
                }
                let sc = opts.atol + opts.rtol * y[i].abs().max(tmp[i].abs());
                err = err.max((hs * e / sc).abs());
            }
            if !err.is_finite() || tmp.iter().any(|v| !v.is_finite()) {
                h = hs * 0.1;
                if h < opts.h_min {
                    return Err(Error::Stiffness(t));
                }
                continue;
            }
            steps += 1;
            if err <= 1.0 {
                t = if last { target } else { t + hs };
                y.copy_from_slice(&tmp);
                k.swap(0, 6);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || fac < 1.0 {
                    h = hs * fac;
                }
            } else {
                h = hs * (0.9 * err.powf(-0.2)).max(0.1);
                if h < opts.h_min {
                    return Err(Error::Stiffness(t));
                }
            }
        }
        traj.t.push(t);
        traj.y.push(y.clone());
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let opts = OdeOptions { rtol: 1e-12, atol: 1e-14, ..Default::default() };
        let tr = dopri5(|_, y, d| d[0] = -y[0], 0.0, &[1.0], &[1.0, 2.0], &opts).unwrap();
        assert!((tr.y[0][0] - (-1f64).exp()).abs() < 1e-11);
        assert!((tr.y[1][0] - (-2f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn harmonic_oscillator_energy() {
        let opts = OdeOptions { rtol: 1e-12, atol: 1e-14, ..Default::default() };
        let tr = dopri5(
            |_, y, d| {
                d[0] = y[1];
                d[1] = -y[0];
            },
            0.0,
            &[1.0, 0.0],
            &[100.0],
            &opts,
        )
        .unwrap();
        assert!((tr.y[0][0] - 100f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn blow_up_is_reported() {
        let r = dopri5(|_, y, d| d[0] = y[0] * y[0], 0.0, &[1.0], &[2.0], &OdeOptions::default());
        assert!(r.is_err());
    }
}
