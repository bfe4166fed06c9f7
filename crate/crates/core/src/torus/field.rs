use std::sync::OnceLock;

use num_complex::Complex64;

use super::{index_tuples, tuple_offset, MultiIndex, TorusGrid};
use crate::error::{Error, Result};

/// Real nodal field on a torus grid with a lazily computed spectrum.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
    spectral_cache: OnceLock<Vec<Complex64>>,
}

impl ScalarField {
    pub fn new(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for a {}-node grid", values.len(), grid.len())));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("field value {bad} is not finite")));
        }
        Ok(Self::from_values(grid, values))
    }

    /// Unchecked constructor for values produced inside the crate.
    pub(crate) fn from_values(grid: &TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid: grid.clone(), values, spectral_cache: OnceLock::new() }
    }

    pub fn from_spectrum(grid: &TorusGrid, coeffs: Vec<Complex64>) -> Self {
        let values = grid.inverse(&coeffs);
        ScalarField { grid: grid.clone(), values, spectral_cache: OnceLock::new() }
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &TorusGrid, c: f64) -> Self {
        Self::from_values(grid, vec![c; grid.len()])
    }

    /// Samples `f(x)` at every node; `x` has one entry per axis.
    pub fn from_fn(grid: &TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let n = grid.n_dims();
        let mut x = vec![0.0; n];
        let values = (0..grid.len())
            .map(|j| {
                for (a, xa) in x.iter_mut().enumerate() {
                    *xa = grid.coordinate(j, a);
                }
                f(&x)
            })
            .collect();
        Self::from_values(grid, values)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn spectrum(&self) -> &[Complex64] {
        self.spectral_cache.get_or_init(|| self.grid.forward(&self.values))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Plain quadrature `∫ f² dμ`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.weight() * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn tail_fraction(&self) -> f64 {
        self.grid.tail_fraction(self.spectrum())
    }

    pub fn is_under_resolved(&self) -> bool {
        self.tail_fraction() > super::UNDER_RESOLVED_FRACTION
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        Self::from_values(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        Self::from_values(&self.grid, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> ScalarField {
        self.map(|v| s * v)
    }

    /// `self + s·other`
    pub fn axpy(&self, s: f64, other: &ScalarField) -> ScalarField {
        self.zip_with(other, |a, b| a + s * b)
    }

    /// Spectral interpolation onto a finer grid with the same periods.
    pub fn interpolate(&self, target: &TorusGrid) -> ScalarField {
        ScalarField::from_spectrum(target, self.grid.pad_spectrum(self.spectrum(), target))
    }
}

/// Rank-k tensor field; `k`-fold ordered indices, components stored component-major.
#[derive(Clone, Debug)]
pub struct TensorField {
    grid: TorusGrid,
    rank: usize,
    data: Vec<f64>,
}

impl TensorField {
    pub fn new(grid: &TorusGrid, rank: usize, data: Vec<f64>) -> Result<Self> {
        let expected = grid.n_dims().pow(rank as u32) * grid.len();
        if data.len() != expected {
            return Err(Error::GridMismatch(format!("rank-{rank} tensor needs {expected} values, got {}", data.len())));
        }
        Ok(TensorField { grid: grid.clone(), rank, data })
    }

    pub fn zeros(grid: &TorusGrid, rank: usize) -> Self {
        let len = grid.n_dims().pow(rank as u32) * grid.len();
        TensorField { grid: grid.clone(), rank, data: vec![0.0; len] }
    }

    /// Rank-0 tensor wrapping a scalar field.
    pub fn from_scalar(f: &ScalarField) -> Self {
        TensorField { grid: f.grid().clone(), rank: 0, data: f.values().to_vec() }
    }

    /// Builds a totally symmetric tensor from one value array per multi-index.
    pub fn from_symmetric(grid: &TorusGrid, rank: usize, component: impl Fn(&MultiIndex) -> Vec<f64>) -> Self {
        let n = grid.n_dims();
        let mut out = Self::zeros(grid, rank);
        let len = grid.len();
        for alpha in MultiIndex::all_of_order(n, rank) {
            let vals = component(&alpha);
            for tuple in index_tuples(n, rank) {
                if MultiIndex::from_axes(&tuple) == alpha {
                    let off = tuple_offset(n, &tuple) * len;
                    out.data[off..off + len].copy_from_slice(&vals);
                }
            }
        }
        out
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n_components(&self) -> usize {
        self.grid.n_dims().pow(self.rank as u32)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Nodal values of the component with ordered index `tuple`.
    pub fn component(&self, tuple: &[usize]) -> &[f64] {
        assert_eq!(tuple.len(), self.rank, "index tuple length must equal rank");
        let len = self.grid.len();
        let off = tuple_offset(self.grid.n_dims(), tuple) * len;
        &self.data[off..off + len]
    }

    pub fn component_mut(&mut self, tuple: &[usize]) -> &mut [f64] {
        let len = self.grid.len();
        let off = tuple_offset(self.grid.n_dims(), tuple) * len;
        &mut self.data[off..off + len]
    }

    /// The value at one node as a flat component vector.
    pub fn at_node(&self, node: usize) -> Vec<f64> {
        let len = self.grid.len();
        (0..self.n_components()).map(|c| self.data[c * len + node]).collect()
    }

    /// Pointwise norm `|T|` with full contraction over all index tuples.
    pub fn pointwise_norm(&self) -> Vec<f64> {
        let len = self.grid.len();
        let mut acc = vec![0.0; len];
        for c in 0..self.n_components() {
            for (a, v) in acc.iter_mut().zip(&self.data[c * len..(c + 1) * len]) {
                *a += v * v;
            }
        }
        acc.into_iter().map(f64::sqrt).collect()
    }

    pub fn to_scalar(&self) -> Result<ScalarField> {
        if self.rank != 0 {
            return Err(Error::RankMismatch { expected: 0, found: self.rank });
        }
        Ok(ScalarField::from_values(&self.grid, self.data.clone()))
    }

    pub fn max_abs_diff(&self, other: &TensorField) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_zero_tensor_matches_scalar() {
        let g = TorusGrid::circle(8).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0].sin());
        let t = TensorField::from_scalar(&f);
        assert_eq!(t.n_components(), 1);
        assert_eq!(t.to_scalar().unwrap().values(), f.values());
    }

    #[test]
    fn component_count_is_n_pow_rank() {
        let g = TorusGrid::standard(3, 4).unwrap();
        assert_eq!(TensorField::zeros(&g, 2).n_components(), 9);
        assert!(TensorField::new(&g, 1, vec![0.0; 10]).is_err());
    }

    #[test]
    fn rejects_non_finite_values() {
        let g = TorusGrid::circle(4).unwrap();
        assert!(ScalarField::new(&g, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn spectral_cache_round_trips() {
        let g = TorusGrid::standard(2, 8).unwrap();
        let f = ScalarField::from_fn(&g, |x| (x[0] + 2.0 * x[1]).cos() + 0.3 * x[1].sin());
        let back = ScalarField::from_spectrum(&g, f.spectrum().to_vec());
        let scale = f.max_abs();
        assert!(f.max_abs_diff(&back) <= 1e-12 * scale);
    }
}
