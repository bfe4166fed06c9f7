//! Numerical certificates for the inequalities behind the solver: parabolic
//! norms, Gårding and Gagliardo–Nirenberg constants, the jet-order threshold,
//! parabolic Sobolev embeddings and the energy estimate used for uniqueness.
//!
//! Verifiers sample; they falsify, they do not prove. Each random sample `i`
//! draws from its own ChaCha stream `(seed, i)`, so results do not depend on
//! the thread count.

mod embedding;
mod energy;
mod garding;
mod gn;
mod norms;

pub use embedding::{
    embedding_exponent, embedding_ratio, min_order, verify_embedding, EmbeddingExponent, EmbeddingParams,
    EmbeddingReport, Regime,
};
pub use energy::{energy_monitor, EnergyReport, EnergySample};
pub use garding::{verify_garding, GardingCertificate};
pub use gn::{gn_integer_oracle, gn_real_envelope, verify_gn_interpolation, GnReport};
pub use norms::{fd_weights, parabolic_norm, time_derivative};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::torus::{ScalarField, TorusGrid};

pub(crate) fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Real field with independent Gaussian Fourier coefficients on every
/// non-Nyquist mode with `max_a |k_a| ≤ band`.
pub fn random_band_limited(grid: &TorusGrid, band: usize, rng: &mut impl Rng) -> ScalarField {
    let coeffs: Vec<Complex64> = (0..grid.len())
        .map(|flat| {
            let idx = grid.unflatten(flat);
            let inside = !grid.touches_nyquist(flat)
                && (0..grid.n_dims()).all(|a| grid.wavenumber(a, idx[a]).unsigned_abs() as usize <= band);
            if inside {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    ScalarField::new(grid, grid.inverse(&coeffs)).expect("grid-sized values")
}

/// Largest bandwidth free of Nyquist modes.
pub(crate) fn full_band(grid: &TorusGrid) -> usize {
    grid.shape().iter().map(|&n| n / 2 - 1).min().unwrap_or(0)
}
