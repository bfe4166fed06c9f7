use serde::Serialize;

use super::norms::fd_weights;
use crate::error::Result;
use crate::linear::Trajectory;
use crate::torus::sobolev_seminorm_sq;

#[derive(Clone, Debug, Serialize)]
pub struct EnergySample {
    pub t: f64,
    /// `E = ∫(|∇^p w|² + w²)`.
    pub energy: f64,
    pub rate: f64,
    /// `∫w²`.
    pub mass: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    pub samples: Vec<EnergySample>,
    /// Smallest `C ≥ 0` with `dE/dt ≤ C∫w²` at every sample where `∫w² > 0`.
    pub c_fit: f64,
    pub max_energy: f64,
    /// Largest `E(t) − E(0)e^{C t}` (positive means the Gronwall bound fails).
    pub max_excess: f64,
}

impl EnergyReport {
    /// Relative slack for discrete derivatives, plus an absolute floor.
    pub const RELATIVE_SLACK: f64 = 1e-6;
    pub const ABSOLUTE_SLACK: f64 = 1e-16;

    pub fn gronwall_holds(&self) -> bool {
        let e0 = self.samples[0].energy;
        self.samples
            .iter()
            .all(|s| s.energy <= e0 * (self.c_fit * s.t).exp() * (1.0 + Self::RELATIVE_SLACK) + Self::ABSOLUTE_SLACK)
    }
}

/// Energy of `w = u − v` and the discrete Gronwall check `E(t) ≤ E(0)e^{C t}`.
pub fn energy_monitor(u: &Trajectory, v: &Trajectory, p: usize) -> Result<EnergyReport> {
    let w = u.difference(v)?;
    let times = w.times();
    let mass: Vec<f64> = w.states().iter().map(|s| s.l2_norm_sq()).collect();
    let energy: Vec<f64> = w.states().iter().zip(&mass).map(|(s, m)| sobolev_seminorm_sq(s, p) + m).collect();
    let len = times.len();
    let rate: Vec<f64> = (0..len)
        .map(|k| {
            let start = k.saturating_sub(1).min(len.saturating_sub(3));
            let end = (start + 3).min(len);
            let wts = fd_weights(times[k], &times[start..end], 1);
            wts.iter().zip(&energy[start..end]).map(|(a, e)| a * e).sum()
        })
        .collect();
    let c_fit = rate.iter().zip(&mass).filter(|(_, &m)| m > 0.0).map(|(r, m)| r / m).fold(0.0, f64::max);
    let e0 = energy[0];
    let max_excess =
        times.iter().zip(&energy).map(|(t, e)| e - e0 * (c_fit * t).exp()).fold(f64::NEG_INFINITY, f64::max);
    let samples =
        (0..len).map(|k| EnergySample { t: times[k], energy: energy[k], rate: rate[k], mass: mass[k] }).collect();
    Ok(EnergyReport { samples, c_fit, max_energy: energy.iter().copied().fold(0.0, f64::max), max_excess })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::uniform_times;
    use crate::torus::{ScalarField, TorusGrid};
    use std::f64::consts::PI;

    fn decay(amplitude: f64, n: usize, dt: f64) -> Trajectory {
        let g = TorusGrid::circle(16).unwrap();
        let times = uniform_times(n, dt);
        let states = times.iter().map(|&t| ScalarField::from_fn(&g, |x| amplitude * (-t).exp() * x[0].sin())).collect();
        Trajectory::new(times, states).unwrap()
    }

    #[test]
    fn identical_trajectories_have_zero_energy() {
        let u = decay(1.0, 10, 0.01);
        let rep = energy_monitor(&u, &u, 1).unwrap();
        assert_eq!(rep.max_energy, 0.0);
        assert!(rep.gronwall_holds());
    }

    #[test]
    fn decaying_difference_matches_exact_energy() {
        // w = 0.01 e^{−t} sin x: E = 2π·10⁻⁴·e^{−2t}
        let rep = energy_monitor(&decay(1.01, 100, 0.01), &decay(1.0, 100, 0.01), 1).unwrap();
        for s in &rep.samples {
            let exact = 2.0 * PI * 1e-4 * (-2.0 * s.t).exp();
            assert!((s.energy - exact).abs() <= 1e-12 * exact.max(1e-4));
        }
        assert!(rep.samples.windows(2).all(|w| w[1].energy < w[0].energy));
        assert_eq!(rep.c_fit, 0.0);
        assert!(rep.gronwall_holds());
    }

    #[test]
    fn growth_is_captured_by_the_fit() {
        let g = TorusGrid::circle(8).unwrap();
        let times = uniform_times(50, 0.02);
        let states = times.iter().map(|&t| ScalarField::constant(&g, (0.5 * t).exp())).collect();
        let u = Trajectory::new(times.clone(), states).unwrap();
        let zero = Trajectory::new(times, vec![ScalarField::zeros(&g); 51]).unwrap();
        let rep = energy_monitor(&u, &zero, 1).unwrap();
        // E = 2π e^{t}, so dE/dt / ∫w² = 1
        assert!((rep.c_fit - 1.0).abs() < 1e-3);
        assert!(rep.gronwall_holds());
    }

    #[test]
    fn rejects_grid_mismatch() {
        let a = decay(1.0, 4, 0.1);
        let g = TorusGrid::circle(8).unwrap();
        let b = Trajectory::new(uniform_times(4, 0.1), vec![ScalarField::zeros(&g); 5]).unwrap();
        assert!(energy_monitor(&a, &b, 1).is_err());
    }
}
