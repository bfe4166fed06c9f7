use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{FactorMatrix, OperatorSpec, StateJet};
use crate::error::{Error, Result};
use crate::expr::{Expr, Func, Var};
use crate::torus::{MultiIndex, ScalarField};

/// Result of sampling the factor quadratic forms over a compact argument box.
#[derive(Clone, Debug, Serialize)]
pub struct EllipticityCertificate {
    /// Minimum over samples and factors of the smallest eigenvalue.
    pub lambda: f64,
    pub samples_tested: usize,
    pub worst_factor: usize,
    pub worst_sample: String,
}

struct Sample {
    x: Vec<f64>,
    t: f64,
    slots: BTreeMap<MultiIndex, f64>,
}

impl Sample {
    fn describe(&self) -> String {
        let x: Vec<String> = self.x.iter().map(|v| format!("{v:.4}")).collect();
        let mut s = format!("x=({}), t={:.4}", x.join(", "), self.t);
        for (m, v) in &self.slots {
            if *v != 0.0 {
                s.push_str(&format!(", {m}={v:.4}"));
            }
        }
        s
    }

    fn value(&self, v: Var) -> f64 {
        match v {
            Var::Coord(a) => self.x[a],
            Var::Time => self.t,
            Var::Slot(m) => self.slots.get(&m).copied().unwrap_or(0.0),
        }
    }
}

fn min_eigenvalue(f: &FactorMatrix, sample: &Sample) -> f64 {
    let n = f.dim();
    let vals: Vec<f64> = (0..n * n).map(|k| f.entry(k / n, k % n).eval(&|v| sample.value(v))).collect();
    if n == 1 {
        return vals[0];
    }
    let m = DMatrix::from_row_slice(n, n, &vals);
    m.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn slot_blocks(spec: &OperatorSpec) -> Vec<Vec<MultiIndex>> {
    (0..spec.order()).map(|k| MultiIndex::all_of_order(spec.n_dims(), k)).collect()
}

/// Scales a block so its full tensor norm `(Σ mult·v²)^{1/2}` equals `radius`.
fn normalize_block(block: &[MultiIndex], raw: &[f64], radius: f64) -> Vec<f64> {
    let norm: f64 = block.iter().zip(raw).map(|(m, v)| m.multiplicity() as f64 * v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; raw.len()];
    }
    raw.iter().map(|v| v * radius / norm).collect()
}

fn corner_samples(spec: &OperatorSpec, bound_l: f64, horizon: f64) -> Vec<Sample> {
    let blocks = slot_blocks(spec);
    let x = vec![0.0; spec.n_dims()];
    let times = if horizon > 0.0 { vec![0.0, horizon] } else { vec![0.0] };
    let mut out = Vec::new();
    for &t in &times {
        out.push(Sample { x: x.clone(), t, slots: BTreeMap::new() });
        for block in &blocks {
            for m in block {
                for sign in [1.0, -1.0] {
                    let v = sign * bound_l / (m.multiplicity() as f64).sqrt();
                    out.push(Sample { x: x.clone(), t, slots: BTreeMap::from([(*m, v)]) });
                }
            }
        }
        for sign in [1.0, -1.0] {
            let mut slots = BTreeMap::new();
            for block in &blocks {
                let vals = normalize_block(block, &vec![sign; block.len()], bound_l);
                slots.extend(block.iter().copied().zip(vals));
            }
            out.push(Sample { x: x.clone(), t, slots });
        }
    }
    out
}

fn random_sample(spec: &OperatorSpec, bound_l: f64, horizon: f64, rng: &mut ChaCha8Rng) -> Sample {
    let grid_period = 2.0 * std::f64::consts::PI;
    let x = (0..spec.n_dims()).map(|_| rng.random::<f64>() * grid_period).collect();
    let t = rng.random::<f64>() * horizon;
    let mut slots = BTreeMap::new();
    for block in slot_blocks(spec) {
        let raw: Vec<f64> = block.iter().map(|_| rng.sample(StandardNormal)).collect();
        let radius = bound_l * rng.random::<f64>();
        slots.extend(block.iter().copied().zip(normalize_block(&block, &raw, radius)));
    }
    Sample { x, t, slots }
}

/// Samples `min_ℓ min_{|ξ|=1} E_ℓ^{ij} ξ_i ξ_j` over `|u|, |∇^k u| ≤ L`, `t ∈ [0, horizon]`.
///
/// Box corners are tested first, then `samples` random points drawn from `seed`.
/// Coordinates are drawn from `[0, 2π)` on each axis.
pub fn ellipticity_certificate(
    spec: &OperatorSpec,
    bound_l: f64,
    samples: usize,
    horizon: f64,
    seed: u64,
) -> Result<EllipticityCertificate> {
    if samples == 0 {
        return Err(Error::InvalidArgument("ellipticity check needs at least one sample".into()));
    }
    if !(bound_l.is_finite() && bound_l >= 0.0) || !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::InvalidArgument("bound and horizon must be finite and nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (f64::INFINITY, 0usize, String::new());
    let mut tested = 0;
    let corners = corner_samples(spec, bound_l, horizon);
    let randoms = (0..samples).map(|_| random_sample(spec, bound_l, horizon, &mut rng)).collect::<Vec<_>>();
    for s in corners.iter().chain(&randoms) {
        tested += 1;
        for (l, f) in spec.factors().iter().enumerate() {
            let lam = min_eigenvalue(f, s);
            if lam < best.0 || lam.is_nan() {
                best = (lam, l, s.describe());
            }
        }
    }
    Ok(EllipticityCertificate { lambda: best.0, samples_tested: tested, worst_factor: best.1, worst_sample: best.2 })
}

/// The sampled ellipticity constant; nonpositive minima are errors naming the violator.
pub fn check_ellipticity(spec: &OperatorSpec, bound_l: f64, samples: usize, horizon: f64, seed: u64) -> Result<f64> {
    let cert = ellipticity_certificate(spec, bound_l, samples, horizon, seed)?;
    if !(cert.lambda > 0.0) {
        return Err(Error::NotElliptic {
            min_eigenvalue: cert.lambda,
            violator: format!("factor E{} at {}", cert.worst_factor + 1, cert.worst_sample),
        });
    }
    Ok(cert.lambda)
}

/// `sup_x |u₀| + |∇u₀| + ⋯ + |∇^{2p−1}u₀|`.
pub fn jet_size(spec: &OperatorSpec, u0: &ScalarField) -> f64 {
    StateJet::for_spec(spec, u0, 0.0).pointwise_size().into_iter().fold(0.0, f64::max)
}

/// Expression for `s = |u| + |∇u| + ⋯ + |∇^{2p−1}u| + t`.
fn jet_size_expr(spec: &OperatorSpec) -> Expr {
    let mut s = Expr::var(Var::Time);
    for block in slot_blocks(spec) {
        let term = if block.len() == 1 && block[0].multiplicity() == 1 {
            Expr::call(Func::Abs, Expr::slot(block[0]))
        } else {
            let sq = block.iter().fold(Expr::zero(), |acc, m| {
                Expr::sum(acc, Expr::product(Expr::Const(m.multiplicity() as f64), Expr::power(Expr::slot(*m), 2.0)))
            });
            Expr::call(Func::Sqrt, sq)
        };
        s = Expr::sum(s, term);
    }
    s
}

/// Blends factors to the identity and `b` to zero once the jet size passes `jet_bound`.
///
/// With `χ = 1 − S((s − J)/J)` for the quintic smoothstep `S`, the result has
/// `E_ℓ ↦ χE_ℓ + (1−χ)I` and `b ↦ χb`, so `χ ≡ 1` for `s ≤ J` and `χ ≡ 0` for `s ≥ 2J`.
pub fn apply_cutoff(spec: &OperatorSpec, jet_bound: f64, u0: &ScalarField) -> Result<OperatorSpec> {
    if !(jet_bound.is_finite() && jet_bound > 0.0) {
        return Err(Error::InvalidArgument(format!("jet bound {jet_bound} must be positive and finite")));
    }
    let measured = jet_size(spec, u0);
    if jet_bound < measured {
        return Err(Error::CutoffBelowJet { jet_bound, measured });
    }
    let z = Expr::quotient(Expr::difference(jet_size_expr(spec), Expr::Const(jet_bound)), Expr::Const(jet_bound));
    let chi = Expr::difference(Expr::one(), Expr::call(Func::Smoothstep(0), z));
    let one_minus_chi = Expr::difference(Expr::one(), chi.clone());
    let factors = spec
        .factors()
        .iter()
        .map(|f| {
            f.map(|i, j, e| {
                let blended = Expr::product(chi.clone(), e.clone());
                if i == j {
                    Expr::sum(blended, one_minus_chi.clone())
                } else {
                    blended
                }
            })
        })
        .collect();
    let lower = Expr::product(chi, spec.lower_order().expr().clone());
    let mut out = OperatorSpec::new(spec.n_dims(), spec.p(), factors, lower)?
        .with_cutoff_radius(2.0 * jet_bound)
        .with_ellipticity_floor(spec.ellipticity_floor().min(1.0));
    if let Some(f) = spec.forcing() {
        out = out.with_forcing(f.clone());
    }
    Ok(out)
}
