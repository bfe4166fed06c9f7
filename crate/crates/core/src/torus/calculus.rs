use super::{index_tuples, MultiIndex, ScalarField, TensorField, TorusGrid};
use crate::error::{Error, Result};

/// Exact Fourier derivative `∂_{i_1}⋯∂_{i_k} f` for an ordered list of axes.
pub fn spectral_derivative(f: &ScalarField, axes: &[usize]) -> Result<ScalarField> {
    let n = f.grid().n_dims();
    if let Some(&bad) = axes.iter().find(|&&a| a >= n) {
        return Err(Error::AxisOutOfRange { index: bad, n_dims: n });
    }
    Ok(derivative(f, &MultiIndex::from_axes(axes)))
}

pub(crate) fn derivative(f: &ScalarField, alpha: &MultiIndex) -> ScalarField {
    if alpha.order() == 0 {
        return f.clone();
    }
    let g = f.grid();
    let coeffs = f.spectrum().iter().enumerate().map(|(j, c)| c * g.derivative_symbol(j, alpha)).collect();
    ScalarField::from_spectrum(g, coeffs)
}

/// `∂^α f` evaluated on a finer grid by spectral interpolation.
pub fn spectral_derivative_padded(f: &ScalarField, alpha: &MultiIndex, target: &TorusGrid) -> Vec<f64> {
    let g = f.grid();
    let coeffs: Vec<_> = f.spectrum().iter().enumerate().map(|(j, c)| c * g.derivative_symbol(j, alpha)).collect();
    target.inverse(&g.pad_spectrum(&coeffs, target))
}

/// The full tensor `∇^k f`.
pub fn gradient_tensor(f: &ScalarField, rank: usize) -> TensorField {
    let g = f.grid();
    TensorField::from_symmetric(g, rank, |alpha| derivative(f, alpha).into_values())
}

/// `∫ ⟨f, h⟩ dμ` with full contraction over all index tuples.
pub fn l2_inner(f: &TensorField, h: &TensorField) -> Result<f64> {
    if f.grid() != h.grid() {
        return Err(Error::GridMismatch("inner product of fields on different grids".into()));
    }
    if f.rank() != h.rank() {
        return Err(Error::RankMismatch { expected: f.rank(), found: h.rank() });
    }
    let sum: f64 = f.data().iter().zip(h.data()).map(|(a, b)| a * b).sum();
    Ok(sum * f.grid().weight())
}

/// `‖∇^j f‖²_{L²}` computed on the Fourier side.
pub fn sobolev_seminorm_sq(f: &ScalarField, j: usize) -> f64 {
    let g = f.grid();
    let alphas = MultiIndex::all_of_order(g.n_dims(), j);
    let spec = f.spectrum();
    let sum: f64 = spec
        .iter()
        .enumerate()
        .map(|(flat, c)| {
            let s: f64 = alphas.iter().map(|a| a.multiplicity() as f64 * g.derivative_symbol(flat, a).norm_sqr()).sum();
            s * c.norm_sqr()
        })
        .sum();
    sum * g.volume()
}

/// `(Σ_{j≤k} ‖∇^j f‖²)^{1/2}`.
pub fn sobolev_norm(f: &ScalarField, k: usize) -> f64 {
    (0..=k).map(|j| sobolev_seminorm_sq(f, j)).sum::<f64>().sqrt()
}

/// Divergence of a rank-1 field, used by integration-by-parts checks.
pub fn divergence(h: &TensorField) -> Result<ScalarField> {
    if h.rank() != 1 {
        return Err(Error::RankMismatch { expected: 1, found: h.rank() });
    }
    let g = h.grid();
    let mut acc = ScalarField::zeros(g);
    for tuple in index_tuples(g.n_dims(), 1) {
        let comp = ScalarField::from_values(g, h.component(&tuple).to_vec());
        acc = acc.add(&derivative(&comp, &MultiIndex::from_axes(&tuple)));
    }
    Ok(acc)
}
