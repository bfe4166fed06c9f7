use gauss_quad::GaussLegendre;
use num_rational::Rational64;
use rayon::prelude::*;
use serde::Serialize;

use super::{random_band_limited, sample_rng};
use crate::error::{Error, Result};
use crate::torus::{gradient_tensor, sobolev_seminorm_sq, ScalarField, TorusGrid};

/// Smallest integer `m` with `m > (n + 6p − 2)/(4p)`.
pub fn min_order(n: usize, p: usize) -> usize {
    assert!(p >= 1, "p must be ≥ 1");
    (n + 6 * p - 2) / (4 * p) + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct EmbeddingParams {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub r: usize,
    pub ell: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `∂_t^r ∇^ℓ u ∈ L^q` for the finite `q` given.
    Subcritical { q: f64 },
    /// `∂_t^r ∇^ℓ u ∈ L^q` for every finite `q`.
    Critical,
    /// `∂_t^r ∇^ℓ u` is continuous.
    Supercritical,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbeddingExponent {
    /// `1/q = 1/2 − (2pm − ℓ − 2pr)/(n + 2p)`, exact.
    pub inv_q: Rational64,
    pub regime: Regime,
}

/// Classifies `P^m ↪ ∂_t^{−r}∇^{−ℓ} L^q` by the sign of `1/q`.
pub fn embedding_exponent(params: EmbeddingParams) -> Result<EmbeddingExponent> {
    let EmbeddingParams { n, p, m, r, ell } = params;
    if p == 0 || n == 0 {
        return Err(Error::InvalidArgument("n and p must be ≥ 1".into()));
    }
    if 2 * p * r + ell > 2 * p * m {
        return Err(Error::InvalidArgument(format!("2pr + ℓ = {} exceeds 2pm = {}", 2 * p * r + ell, 2 * p * m)));
    }
    let gain = (2 * p * m - ell - 2 * p * r) as i64;
    let inv_q = Rational64::new(1, 2) - Rational64::new(gain, (n + 2 * p) as i64);
    let zero = Rational64::new(0, 1);
    let regime = if inv_q > zero {
        Regime::Subcritical { q: *inv_q.denom() as f64 / *inv_q.numer() as f64 }
    } else if inv_q == zero {
        Regime::Critical
    } else {
        Regime::Supercritical
    };
    Ok(EmbeddingExponent { inv_q, regime })
}

/// Exponent used to measure the critical case.
pub const CRITICAL_TEST_EXPONENT: f64 = 6.0;

const TIME_NODES: usize = 12;
const SUP_TIMES: usize = 65;

/// `u(x, t) = Σ_j (t/T)^j f_j(x)` and its time derivatives.
fn time_derivative_at(profile: &[ScalarField], r: usize, t: f64, horizon: f64) -> ScalarField {
    let s = t / horizon;
    profile.iter().enumerate().skip(r).fold(ScalarField::zeros(profile[0].grid()), |acc, (j, f)| {
        let falling: f64 = (j - r + 1..=j).map(|i| i as f64).product();
        acc.axpy(falling * s.powi((j - r) as i32) / horizon.powi(r as i32), f)
    })
}

/// `‖∂_t^r ∇^ℓ u‖_{L^q(M×[0,T])} / ‖u‖_{P^m}` for the polynomial-in-time field `u = Σ_j (t/T)^j f_j`.
///
/// Time integrals use Gauss–Legendre quadrature, exact for the `P^m` norm.
pub fn embedding_ratio(params: EmbeddingParams, profile: &[ScalarField], horizon: f64) -> Result<f64> {
    let exponent = embedding_exponent(params)?;
    let Some(first) = profile.first() else {
        return Err(Error::InvalidArgument("empty profile".into()));
    };
    if first.grid().n_dims() != params.n {
        return Err(Error::GridMismatch("profile dimension differs from n".into()));
    }
    let EmbeddingParams { p, m, r, ell, .. } = params;
    let quad = GaussLegendre::new(TIME_NODES.try_into().expect("nonzero"));
    let mut norm_sq = 0.0f64;
    for j in 0..=m {
        for k in 0..=2 * p * (m - j) {
            norm_sq +=
                quad.integrate(0.0, horizon, |t| sobolev_seminorm_sq(&time_derivative_at(profile, j, t, horizon), k));
        }
    }
    if norm_sq == 0.0 {
        return Err(Error::InvalidArgument("u ≡ 0 has no embedding ratio".into()));
    }
    let pointwise = |t: f64| gradient_tensor(&time_derivative_at(profile, r, t, horizon), ell).pointwise_norm();
    let weight = first.grid().weight();
    let lq = |q: f64| {
        quad.integrate(0.0, horizon, |t| weight * pointwise(t).iter().map(|v| v.powf(q)).sum::<f64>()).powf(1.0 / q)
    };
    let top = match exponent.regime {
        Regime::Subcritical { q } => lq(q),
        Regime::Critical => lq(CRITICAL_TEST_EXPONENT),
        Regime::Supercritical => (0..SUP_TIMES)
            .map(|i| pointwise(horizon * i as f64 / (SUP_TIMES - 1) as f64).into_iter().fold(0.0, f64::max))
            .fold(0.0, f64::max),
    };
    Ok(top / norm_sq.sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct EmbeddingReport {
    pub params: EmbeddingParams,
    pub regime: Regime,
    pub inv_q: String,
    pub resolutions_tested: Vec<usize>,
    /// Largest sampled ratio at each resolution.
    pub sup_ratios: Vec<f64>,
    pub sup_ratio: f64,
    /// Largest growth factor between consecutive resolutions.
    pub max_growth: f64,
    pub seed: u64,
}

impl EmbeddingReport {
    pub const GROWTH_LIMIT: f64 = 1.10;

    pub fn passes(&self) -> bool {
        self.max_growth <= Self::GROWTH_LIMIT
    }
}

/// Samples `u = Σ_{j≤3} (t/T)^j f_j` with random `f_j` band-limited to a quarter of each resolution.
pub fn verify_embedding(
    params: EmbeddingParams,
    n_samples: usize,
    resolutions: &[usize],
    horizon: f64,
    seed: u64,
) -> Result<EmbeddingReport> {
    let exponent = embedding_exponent(params)?;
    if resolutions.is_empty() || n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one resolution and one sample".into()));
    }
    let mut sup_ratios = Vec::with_capacity(resolutions.len());
    for &modes in resolutions {
        let grid = TorusGrid::standard(params.n, modes)?;
        let band = (modes / 4).max(1);
        let ratios = (0..n_samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(seed, i as u64);
                let profile: Vec<ScalarField> = (0..4).map(|_| random_band_limited(&grid, band, &mut rng)).collect();
                embedding_ratio(params, &profile, horizon)
            })
            .collect::<Result<Vec<f64>>>()?;
        sup_ratios.push(ratios.into_iter().fold(0.0, f64::max));
    }
    let max_growth = sup_ratios.windows(2).map(|w| w[1] / w[0]).fold(1.0, f64::max);
    Ok(EmbeddingReport {
        params,
        regime: exponent.regime,
        inv_q: exponent.inv_q.to_string(),
        resolutions_tested: resolutions.to_vec(),
        sup_ratio: sup_ratios.iter().copied().fold(0.0, f64::max),
        sup_ratios,
        max_growth,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params(n: usize, p: usize, m: usize, r: usize, ell: usize) -> EmbeddingParams {
        EmbeddingParams { n, p, m, r, ell }
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(min_order(1, 1), 2);
        assert_eq!(min_order(2, 2), 2);
        assert_eq!(min_order(6, 1), 3);
    }

    #[test]
    fn threshold_matches_rational_arithmetic() {
        for n in 1..=6 {
            for p in 1..=3 {
                let bound = Rational64::new((n + 6 * p - 2) as i64, (4 * p) as i64);
                let m = min_order(n, p);
                assert!(Rational64::from_integer(m as i64) > bound);
                assert!(Rational64::from_integer(m as i64 - 1) <= bound);
            }
        }
    }

    #[test]
    fn regime_examples() {
        assert_eq!(embedding_exponent(params(1, 1, 1, 0, 0)).unwrap().regime, Regime::Supercritical);
        let e = embedding_exponent(params(1, 1, 1, 0, 2)).unwrap();
        assert_eq!(e.inv_q, Rational64::new(1, 2));
        assert_eq!(e.regime, Regime::Subcritical { q: 2.0 });
        let e = embedding_exponent(params(3, 1, 1, 0, 1)).unwrap();
        assert_eq!(e.inv_q, Rational64::new(3, 10));
        assert_eq!(e.regime, Regime::Subcritical { q: 10.0 / 3.0 });
        assert!(embedding_exponent(params(1, 1, 1, 1, 1)).is_err());
    }

    #[test]
    fn critical_surface() {
        // n = 2, p = 1, m = 1: 1/q = 1/2 − (2 − ℓ)/4 vanishes at ℓ = 0
        assert_eq!(embedding_exponent(params(2, 1, 1, 0, 0)).unwrap().regime, Regime::Critical);
        assert!(matches!(embedding_exponent(params(2, 1, 1, 0, 1)).unwrap().regime, Regime::Subcritical { .. }));
        assert_eq!(embedding_exponent(params(2, 1, 2, 0, 1)).unwrap().regime, Regime::Supercritical);
    }

    #[test]
    fn single_mode_ratio_closed_form() {
        // u = sin x, constant in t: ‖u‖_{C⁰} = 1 and ‖u‖²_{P²} = 5πT
        let g = TorusGrid::circle(16).unwrap();
        let t = 0.7;
        let profile = vec![ScalarField::from_fn(&g, |x| x[0].sin())];
        let ratio = embedding_ratio(params(1, 1, 2, 0, 0), &profile, t).unwrap();
        assert!((ratio - 1.0 / (5.0 * PI * t).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn time_linear_mode_in_l2() {
        // u = (t/T) sin x, r = 1, ℓ = 0, m = 1 (q = 2):
        // ‖∂_t u‖_{L²} = √(π/T), ‖u‖²_{P¹} = πT + π/T
        let g = TorusGrid::circle(16).unwrap();
        let t = 0.5;
        let profile = vec![ScalarField::zeros(&g), ScalarField::from_fn(&g, |x| x[0].sin())];
        let p = params(1, 1, 1, 1, 0);
        assert_eq!(embedding_exponent(p).unwrap().regime, Regime::Subcritical { q: 2.0 });
        let ratio = embedding_ratio(p, &profile, t).unwrap();
        let expected = (PI / t).sqrt() / (PI * t + PI / t).sqrt();
        assert!((ratio - expected).abs() < 1e-12, "{ratio} vs {expected}");
    }

    #[test]
    fn zero_sample_rejected() {
        let g = TorusGrid::circle(8).unwrap();
        assert!(embedding_ratio(params(1, 1, 2, 0, 0), &[ScalarField::zeros(&g)], 1.0).is_err());
    }

    #[test]
    fn supercritical_ratio_is_stable() {
        let rep = verify_embedding(params(1, 1, 2, 0, 0), 30, &[16, 32], 1.0, 11).unwrap();
        assert!(rep.passes(), "{rep:?}");
    }
}
