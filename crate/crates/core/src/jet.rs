//! Compatible initial time-jets by Taylor-mode arithmetic.
//!
//! The jet `a_ℓ = ∂_t^ℓ u(·,0)` of a solution is forced by the equation:
//! `a_{ℓ+1}` is the `ℓ`-th time derivative of `Q[u]` at `t = 0`, and that
//! derivative only involves `a₀, …, a_ℓ`. Evaluating `Q` along a truncated
//! power series in `t` yields it directly.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Series, Var};
use crate::operator::{project, OperatorSpec, StateJet};
use crate::torus::{factorial, sobolev_norm, spectral_derivative_padded, MultiIndex, ScalarField, TorusGrid};

/// Time derivatives `a_ℓ = ∂_t^ℓ f(·, t0)` for `ℓ < order`.
#[derive(Clone, Debug)]
pub struct TimeSeriesField {
    coeffs: Vec<ScalarField>,
}

impl TimeSeriesField {
    pub fn new(coeffs: Vec<ScalarField>) -> Result<Self> {
        let Some(first) = coeffs.first() else {
            return Err(Error::InvalidArgument("a time series needs at least one coefficient".into()));
        };
        if coeffs.iter().any(|c| c.grid() != first.grid()) {
            return Err(Error::GridMismatch("series coefficients on different grids".into()));
        }
        Ok(TimeSeriesField { coeffs })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn grid(&self) -> &TorusGrid {
        self.coeffs[0].grid()
    }

    /// Derivative values `a_ℓ`.
    pub fn coeffs(&self) -> &[ScalarField] {
        &self.coeffs
    }

    /// `Σ a_ℓ s^ℓ / ℓ!`.
    pub fn evaluate(&self, s: f64) -> ScalarField {
        let mut acc = ScalarField::zeros(self.grid());
        let mut w = 1.0;
        for (l, a) in self.coeffs.iter().enumerate() {
            if l > 0 {
                w *= s / l as f64;
            }
            acc = acc.axpy(w, a);
        }
        acc
    }
}

/// Evaluates `Q` along a time series, returning the series of `t ↦ Q[u(·, t0 + t)]`
/// through the same order.
#[allow(non_snake_case)]
pub fn series_apply_Q(spec: &OperatorSpec, u: &TimeSeriesField, t0: f64) -> Result<TimeSeriesField> {
    let grid = u.grid();
    if grid.n_dims() != spec.n_dims() {
        return Err(Error::GridMismatch("series and operator dimensions differ".into()));
    }
    let m = u.order();
    let compiled = spec.compiled();
    let padded = grid.padded();
    let mut needed: Vec<MultiIndex> = compiled.slots.clone();
    needed.extend(compiled.top.iter().map(|(b, _)| *b));
    needed.sort();
    needed.dedup();

    // Taylor-normalized padded values of ∂^α a_ℓ / ℓ!
    let tables: Vec<(MultiIndex, Vec<Vec<f64>>)> = needed
        .iter()
        .map(|alpha| {
            let rows = u
                .coeffs
                .iter()
                .enumerate()
                .map(|(l, a)| {
                    let scale = 1.0 / factorial(l) as f64;
                    spectral_derivative_padded(a, alpha, padded).into_iter().map(|v| v * scale).collect()
                })
                .collect();
            (*alpha, rows)
        })
        .collect();
    let series_at = |alpha: &MultiIndex, j: usize| -> Series {
        let rows = &tables.iter().find(|(a, _)| a == alpha).expect("slot table").1;
        Series(rows.iter().map(|r| r[j]).collect())
    };
    let coords: Vec<Vec<f64>> = (0..padded.n_dims()).map(|a| padded.coordinates(a)).collect();

    let mut out = vec![vec![0.0; padded.len()]; m];
    for j in 0..padded.len() {
        let env = |v: Var| -> Series {
            match v {
                Var::Coord(a) => Series::constant(coords[a][j]),
                Var::Time => Series::variable(t0, m),
                Var::Slot(alpha) => series_at(&alpha, j),
            }
        };
        let mut q = spec.lower_order().eval(&env);
        for (beta, c) in &compiled.top {
            q = q + c.eval(&env) * series_at(beta, j);
        }
        for (k, row) in out.iter_mut().enumerate() {
            row[j] = q.coeff(k);
        }
    }
    let forcing = spec.forcing().map(|f| f.series(grid, t0, m));
    let coeffs = out
        .iter()
        .enumerate()
        .map(|(k, vals)| {
            let mut c = project(grid, vals, padded);
            if let Some(f) = &forcing {
                c = c.add(&f[k]);
            }
            c.scale(factorial(k) as f64)
        })
        .collect();
    TimeSeriesField::new(coeffs)
}

/// The compatible jet `a₀, …, a_{m−1}` and the polynomial `ũ₀ = Σ a_ℓ t^ℓ/ℓ!`.
#[derive(Clone, Debug)]
pub struct TimeJet {
    a: Vec<ScalarField>,
    order: usize,
    under_resolved: Vec<bool>,
}

/// Per-coefficient diagnostics of a jet.
#[derive(Clone, Debug, Serialize)]
pub struct JetDiagnostics {
    pub l: usize,
    pub sobolev_norm: f64,
    pub tail_fraction: f64,
    pub under_resolved: bool,
}

impl TimeJet {
    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn coeffs(&self) -> &[ScalarField] {
        &self.a
    }

    pub fn grid(&self) -> &TorusGrid {
        self.a[0].grid()
    }

    /// Spatial order `2p` of the operator the jet was built for.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn any_under_resolved(&self) -> bool {
        self.under_resolved.iter().any(|&b| b)
    }

    /// `‖a_ℓ‖_{W^{2p,2}}` and spectral tail fractions.
    pub fn diagnostics(&self) -> Vec<JetDiagnostics> {
        self.a
            .iter()
            .enumerate()
            .map(|(l, a)| JetDiagnostics {
                l,
                sobolev_norm: sobolev_norm(a, self.order),
                tail_fraction: a.tail_fraction(),
                under_resolved: self.under_resolved[l],
            })
            .collect()
    }

    /// `ũ₀(·, t)`.
    pub fn polynomial(&self, t: f64) -> ScalarField {
        TimeSeriesField { coeffs: self.a.clone() }.evaluate(t)
    }

    /// `∂_t ũ₀(·, t)`.
    pub fn polynomial_derivative(&self, t: f64) -> ScalarField {
        if self.a.len() == 1 {
            return ScalarField::zeros(self.grid());
        }
        TimeSeriesField { coeffs: self.a[1..].to_vec() }.evaluate(t)
    }
}

/// `a₀ = u₀` and `a_{ℓ+1}` = `ℓ`-th derivative of `Q` along the series `a₀, …, a_ℓ`.
pub fn build_jet(spec: &OperatorSpec, u0: &ScalarField, m: usize) -> Result<TimeJet> {
    if m == 0 {
        return Err(Error::InvalidArgument("jet order m must be ≥ 1".into()));
    }
    let mut a = vec![u0.clone()];
    while a.len() < m {
        let l = a.len() - 1;
        let q = series_apply_Q(spec, &TimeSeriesField::new(a.clone())?, 0.0)?;
        a.push(q.coeffs[l].clone());
    }
    let under_resolved = a.iter().map(|c| c.is_under_resolved()).collect();
    Ok(TimeJet { a, order: spec.order(), under_resolved })
}

/// `ũ₀(·, t)` and its spatial derivatives through `∇^{2p−1}`.
pub fn assemble_u_tilde(jet: &TimeJet, t: f64) -> StateJet {
    StateJet::new(&jet.polynomial(t), t, jet.order)
}
