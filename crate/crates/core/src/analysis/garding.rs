use rayon::prelude::*;
use serde::Serialize;

use super::{full_band, random_band_limited, sample_rng};
use crate::operator::{project, OperatorSpec, PaddedState, StateJet};
use crate::torus::{sobolev_norm, spectral_derivative_padded, ScalarField};

/// Outcome of sampling `−⟨ψ, A·∇^{2p}ψ⟩ ≥ σ‖ψ‖²_{W^{p,2}} − C‖ψ‖²_{L²}`.
#[derive(Clone, Debug, Serialize)]
pub struct GardingCertificate {
    pub sigma: f64,
    pub c_const: f64,
    pub samples_tested: usize,
    /// Minimum of `LHS − σ‖ψ‖²_{W^{p,2}} + C‖ψ‖²` over unit-`L²` samples.
    pub worst_margin: f64,
    pub worst_sample: String,
    /// The first sample with margin below `−1e−10`, if any.
    pub first_violator: Option<String>,
    pub seed: u64,
}

impl GardingCertificate {
    pub const MARGIN_TOLERANCE: f64 = 1e-10;

    pub fn is_valid(&self) -> bool {
        self.worst_margin >= -Self::MARGIN_TOLERANCE
    }
}

/// Deterministic probes: the constant mode, then `cos(k·x)` and `sin(k·x)` for every resolved wave vector.
fn mode_probes(grid: &crate::torus::TorusGrid) -> Vec<(String, ScalarField)> {
    let mut out = vec![("constant mode".to_string(), ScalarField::constant(grid, 1.0))];
    let n = grid.n_dims();
    for flat in 1..grid.len() {
        if grid.touches_nyquist(flat) {
            continue;
        }
        let idx = grid.unflatten(flat);
        let k: Vec<i64> = (0..n).map(|a| grid.wavenumber(a, idx[a])).collect();
        // keep one representative of ±k
        let first = k.iter().find(|&&v| v != 0).copied().unwrap_or(0);
        if first < 0 {
            continue;
        }
        let kappa: Vec<f64> = (0..n).map(|a| grid.angular_wavenumber(a, idx[a])).collect();
        let phase = |x: &[f64]| kappa.iter().zip(x).map(|(k, x)| k * x).sum::<f64>();
        let name = k.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        out.push((format!("cos mode k=({name})"), ScalarField::from_fn(grid, |x| phase(x).cos())));
        out.push((format!("sin mode k=({name})"), ScalarField::from_fn(grid, |x| phase(x).sin())));
    }
    out
}

/// Samples the Gårding inequality for the top-order part of `spec` frozen at `state`.
///
/// Mode probes come first; random band-limited samples fill up to `n_samples`.
pub fn verify_garding(
    spec: &OperatorSpec,
    state: &StateJet,
    sigma: f64,
    c_const: f64,
    n_samples: usize,
    seed: u64,
) -> GardingCertificate {
    let grid = state.grid();
    let padded = PaddedState::new(state.base(), state.t(), &spec.compiled().slots);
    let top: Vec<_> = spec.top_coefficients().iter().map(|(b, e)| (*b, padded.eval(e))).collect();
    let p = spec.p();
    let margin = |psi: &ScalarField| {
        let psi = psi.scale(1.0 / psi.l2_norm());
        let mut acc = vec![0.0; padded.grid().len()];
        for (beta, c) in &top {
            let d = spectral_derivative_padded(&psi, beta, padded.grid());
            acc.iter_mut().zip(c).zip(d).for_each(|((a, ci), di)| *a += ci * di);
        }
        let a_psi = project(grid, &acc, padded.grid());
        let lhs = -grid.weight() * psi.values().iter().zip(a_psi.values()).map(|(x, y)| x * y).sum::<f64>();
        lhs - sigma * sobolev_norm(&psi, p).powi(2) + c_const * psi.l2_norm_sq()
    };

    let probes = mode_probes(grid);
    let n_random = n_samples.saturating_sub(probes.len());
    let band = full_band(grid);
    let mut results: Vec<(String, f64)> = probes.par_iter().map(|(name, psi)| (name.clone(), margin(psi))).collect();
    results.extend(
        (0..n_random)
            .into_par_iter()
            .map(|i| {
                let psi = random_band_limited(grid, band, &mut sample_rng(seed, i as u64));
                (format!("random sample {i} (seed {seed})"), margin(&psi))
            })
            .collect::<Vec<_>>(),
    );
    let (worst_sample, worst_margin) =
        results.iter().min_by(|a, b| a.1.total_cmp(&b.1)).cloned().expect("at least the constant mode");
    let first_violator =
        results.iter().find(|(_, m)| *m < -GardingCertificate::MARGIN_TOLERANCE).map(|(n, _)| n.clone());
    GardingCertificate {
        sigma,
        c_const,
        samples_tested: results.len(),
        worst_margin,
        worst_sample,
        first_violator,
        seed,
    }
}
