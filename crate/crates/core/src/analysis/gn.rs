use rayon::prelude::*;
use serde::Serialize;

use super::{full_band, random_band_limited, sample_rng};
use crate::error::{Error, Result};
use crate::torus::{sobolev_seminorm_sq, ScalarField, TorusGrid};

#[derive(Clone, Debug, Serialize)]
pub struct GnReport {
    pub p: usize,
    pub r: usize,
    pub eps: f64,
    /// `max (‖∇^r f‖² − ε‖∇^{2p} f‖²) / ‖f‖²` over the samples.
    pub c_eps: f64,
    pub worst_sample: String,
    /// `max (|κ|^{2r} − ε|κ|^{4p})` over the grid's resolved wave vectors.
    pub integer_oracle: f64,
    /// `max_{s ≥ 0} (s^{2r} − ε s^{4p})`.
    pub real_envelope: f64,
    pub samples_tested: usize,
    pub seed: u64,
}

impl GnReport {
    /// Integer oracle ≤ `c_eps` ≤ real envelope, up to roundoff.
    pub fn bracketed(&self) -> bool {
        let slack = 1e-9 * (1.0 + self.real_envelope.abs());
        self.c_eps >= self.integer_oracle - slack && self.c_eps <= self.real_envelope + slack
    }
}

/// `max_{s ≥ 0} (s^{2r} − ε s^{4p})`, attained at `s² = (r / 2pε)^{1/(2p−r)}`.
pub fn gn_real_envelope(p: usize, r: usize, eps: f64) -> f64 {
    if r == 0 {
        return 1.0;
    }
    let x = (r as f64 / (2.0 * p as f64 * eps)).powf(1.0 / (2 * p - r) as f64);
    x.powi(r as i32) - eps * x.powi(2 * p as i32)
}

/// `max (|κ|^{2r} − ε|κ|^{4p})` over the non-Nyquist wave vectors of `grid`.
pub fn gn_integer_oracle(p: usize, r: usize, eps: f64, grid: &TorusGrid) -> f64 {
    (0..grid.len())
        .filter(|&f| !grid.touches_nyquist(f))
        .map(|f| {
            let x = grid.wave_norm_sq(f);
            x.powi(r as i32) - eps * x.powi(2 * p as i32)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Empirical constant in `‖∇^r f‖² ≤ ε‖∇^{2p} f‖² + C_ε‖f‖²` from single-mode probes and random band-limited samples.
pub fn verify_gn_interpolation(
    p: usize,
    r: usize,
    eps: f64,
    n_samples: usize,
    grid: &TorusGrid,
    seed: u64,
) -> Result<GnReport> {
    if p == 0 || r >= 2 * p {
        return Err(Error::InvalidArgument(format!("need p ≥ 1 and 0 ≤ r < 2p, got p={p}, r={r}")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("ε = {eps} must be positive")));
    }
    let quotient = |f: &ScalarField| (sobolev_seminorm_sq(f, r) - eps * sobolev_seminorm_sq(f, 2 * p)) / f.l2_norm_sq();
    let probes: Vec<(String, f64)> = (0..grid.len())
        .into_par_iter()
        .filter(|&f| !grid.touches_nyquist(f))
        .map(|flat| {
            let idx = grid.unflatten(flat);
            let kappa: Vec<f64> = (0..grid.n_dims()).map(|a| grid.angular_wavenumber(a, idx[a])).collect();
            let f = ScalarField::from_fn(grid, |x| kappa.iter().zip(x).map(|(k, x)| k * x).sum::<f64>().cos());
            (format!("mode {kappa:?}"), quotient(&f))
        })
        .collect();
    let band = full_band(grid);
    let random: Vec<(String, f64)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let f = random_band_limited(grid, band, &mut sample_rng(seed, i as u64));
            (format!("random sample {i} (seed {seed})"), quotient(&f))
        })
        .collect();
    let samples_tested = probes.len() + random.len();
    let (worst_sample, c_eps) =
        probes.into_iter().chain(random).max_by(|a, b| a.1.total_cmp(&b.1)).expect("the constant mode is a probe");
    Ok(GnReport {
        p,
        r,
        eps,
        c_eps,
        worst_sample,
        integer_oracle: gn_integer_oracle(p, r, eps, grid),
        real_envelope: gn_real_envelope(p, r, eps),
        samples_tested,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_zero_constant_is_at_most_one() {
        let g = TorusGrid::circle(32).unwrap();
        for eps in [1.0, 0.01] {
            let rep = verify_gn_interpolation(1, 0, eps, 50, &g, 3).unwrap();
            assert!(rep.c_eps <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn unit_eps_first_order() {
        // k² − k⁴ peaks at 1/4 over the reals and at 0 over the integers
        let g = TorusGrid::circle(64).unwrap();
        let rep = verify_gn_interpolation(1, 1, 1.0, 100, &g, 3).unwrap();
        assert!((rep.real_envelope - 0.25).abs() < 1e-15);
        assert!(rep.c_eps <= 0.25 + 1e-12);
        assert!(rep.c_eps.abs() < 1e-12);
        assert!(rep.bracketed());
    }

    #[test]
    fn fourth_order_matches_integer_oracle() {
        let g = TorusGrid::circle(64).unwrap();
        let rep = verify_gn_interpolation(2, 2, 0.01, 100, &g, 3).unwrap();
        let oracle = (0..32).map(|k| (k as f64).powi(4) - 0.01 * (k as f64).powi(8)).fold(f64::MIN, f64::max);
        assert!((rep.c_eps - oracle).abs() <= 0.05 * oracle);
        assert!(rep.bracketed());
    }

    #[test]
    fn envelope_closed_form() {
        // p=1, r=1: max (x − εx²) = 1/(4ε)
        for eps in [1.0, 0.1, 0.01] {
            assert!((gn_real_envelope(1, 1, eps) - 0.25 / eps).abs() < 1e-12 / eps);
        }
    }

    #[test]
    fn rejects_out_of_range_r() {
        let g = TorusGrid::circle(8).unwrap();
        assert!(verify_gn_interpolation(1, 2, 0.1, 1, &g, 0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn empirical_constant_is_bracketed(p in 1usize..3, r_frac in 0.0f64..1.0, log_eps in -3.0f64..0.5, seed in 0u64..1000) {
                let r = ((2 * p) as f64 * r_frac) as usize;
                let g = TorusGrid::circle(32).unwrap();
                let rep = verify_gn_interpolation(p, r, 10f64.powf(log_eps), 20, &g, seed).unwrap();
                prop_assert!(rep.bracketed(), "{rep:?}");
            }
        }
    }
}
