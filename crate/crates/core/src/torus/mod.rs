//! Flat-torus discretization with exact Fourier calculus.
//!
//! A [`TorusGrid`] is a uniform periodic grid on `T^n = Π [0, L_a)`. Fields
//! are stored as nodal values; spectral coefficients are normalized so that
//! `f(x) = Σ_k f̂_k e^{i κ_k · x}` with `κ_k = 2π k / L`.

mod calculus;
mod field;
mod multi_index;

pub use calculus::{
    divergence, gradient_tensor, l2_inner, sobolev_norm, sobolev_seminorm_sq, spectral_derivative,
    spectral_derivative_padded,
};
pub use field::{ScalarField, TensorField};
pub use multi_index::{axis_name, factorial, index_tuples, tuple_offset, MultiIndex, MAX_DIMS};

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

struct AxisPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

struct GridInner {
    shape: Vec<usize>,
    period: Vec<f64>,
    plans: Vec<AxisPlan>,
    /// Signed integer wavenumber per axis and index.
    wavenumbers: Vec<Vec<i64>>,
    padded: OnceLock<TorusGrid>,
}

/// Periodic n-dimensional grid (n ≤ 3) with FFT plans.
///
/// Cloning is cheap; clones share plans and compare equal.
#[derive(Clone)]
pub struct TorusGrid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid").field("shape", &self.inner.shape).field("period", &self.inner.period).finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.shape == other.inner.shape && self.inner.period == other.inner.period)
    }
}

/// Builds a grid with the given per-axis bandwidths and periods.
pub fn make_grid(n_dims: usize, modes_per_dim: &[usize], period: &[f64]) -> Result<TorusGrid> {
    if !(1..=MAX_DIMS).contains(&n_dims) {
        return Err(Error::InvalidGrid(format!("n_dims must be in 1..=3, got {n_dims}")));
    }
    if modes_per_dim.len() != n_dims || period.len() != n_dims {
        return Err(Error::InvalidGrid(format!(
            "expected {n_dims} bandwidths and periods, got {} and {}",
            modes_per_dim.len(),
            period.len()
        )));
    }
    for &m in modes_per_dim {
        if m == 0 || m % 2 != 0 {
            return Err(Error::InvalidGrid(format!("bandwidth {m} must be positive and even")));
        }
    }
    for &l in period {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::InvalidGrid(format!("period {l} must be positive and finite")));
        }
    }
    Ok(TorusGrid::build(modes_per_dim.to_vec(), period.to_vec()))
}

impl TorusGrid {
    fn build(shape: Vec<usize>, period: Vec<f64>) -> TorusGrid {
        let mut planner = FftPlanner::new();
        let plans = shape
            .iter()
            .map(|&n| AxisPlan { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) })
            .collect();
        let wavenumbers = shape
            .iter()
            .map(|&n| (0..n).map(|j| if j <= n / 2 { j as i64 } else { j as i64 - n as i64 }).collect())
            .collect();
        TorusGrid { inner: Arc::new(GridInner { shape, period, plans, wavenumbers, padded: OnceLock::new() }) }
    }

    /// Unit circle grid `[0, 2π)` with `modes` nodes.
    pub fn circle(modes: usize) -> Result<TorusGrid> {
        make_grid(1, &[modes], &[2.0 * PI])
    }

    /// Square `2π`-periodic torus in `n_dims` dimensions.
    pub fn standard(n_dims: usize, modes: usize) -> Result<TorusGrid> {
        make_grid(n_dims, &vec![modes; n_dims], &vec![2.0 * PI; n_dims])
    }

    pub fn n_dims(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn period(&self) -> &[f64] {
        &self.inner.period
    }

    pub fn len(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.inner.period[axis] / self.inner.shape[axis] as f64
    }

    /// Uniform quadrature weight: the product of the spacings.
    pub fn weight(&self) -> f64 {
        (0..self.n_dims()).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.inner.period.iter().product()
    }

    /// Multi-dimensional index of a flat node (row-major, last axis fastest).
    pub fn unflatten(&self, mut flat: usize) -> [usize; MAX_DIMS] {
        let mut idx = [0; MAX_DIMS];
        for a in (0..self.n_dims()).rev() {
            idx[a] = flat % self.inner.shape[a];
            flat /= self.inner.shape[a];
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.inner.shape).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn coordinate(&self, flat: usize, axis: usize) -> f64 {
        self.unflatten(flat)[axis] as f64 * self.spacing(axis)
    }

    /// Coordinates of every node along `axis`.
    pub fn coordinates(&self, axis: usize) -> Vec<f64> {
        (0..self.len()).map(|j| self.coordinate(j, axis)).collect()
    }

    /// Integer wavenumber of spectral index `j` on `axis`.
    pub fn wavenumber(&self, axis: usize, j: usize) -> i64 {
        self.inner.wavenumbers[axis][j]
    }

    /// Physical wavenumber `2π k / L` of spectral index `j` on `axis`.
    pub fn angular_wavenumber(&self, axis: usize, j: usize) -> f64 {
        2.0 * PI * self.wavenumber(axis, j) as f64 / self.inner.period[axis]
    }

    pub fn is_nyquist(&self, axis: usize, j: usize) -> bool {
        j == self.inner.shape[axis] / 2
    }

    /// True when any axis index of the flat spectral position is a Nyquist index.
    pub fn touches_nyquist(&self, flat: usize) -> bool {
        let idx = self.unflatten(flat);
        (0..self.n_dims()).any(|a| self.is_nyquist(a, idx[a]))
    }

    /// `|κ|²` at a flat spectral position.
    pub fn wave_norm_sq(&self, flat: usize) -> f64 {
        let idx = self.unflatten(flat);
        (0..self.n_dims()).map(|a| self.angular_wavenumber(a, idx[a]).powi(2)).sum()
    }

    /// The 3/2-padded grid used to evaluate products without aliasing.
    pub fn padded(&self) -> &TorusGrid {
        self.inner.padded.get_or_init(|| {
            let shape = self
                .inner
                .shape
                .iter()
                .map(|&n| {
                    let m = (3 * n).div_ceil(2);
                    m + m % 2
                })
                .collect();
            TorusGrid::build(shape, self.inner.period.clone())
        })
    }

    /// Normalized forward transform: returns `f̂` with `f = Σ f̂ e^{iκx}`.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.len(), "field length does not match grid");
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        data
    }

    /// Inverse of [`forward`](Self::forward), projected onto real values.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.len(), "spectrum length does not match grid");
        let mut data = coeffs.to_vec();
        self.transform(&mut data, true);
        data.into_iter().map(|c| c.re).collect()
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let shape = &self.inner.shape;
        let n_dims = shape.len();
        for axis in 0..n_dims {
            let len = shape[axis];
            if len == 1 {
                continue;
            }
            let stride: usize = shape[axis + 1..].iter().product();
            let outer: usize = shape[..axis].iter().product();
            let plan = if inverse { &self.inner.plans[axis].inverse } else { &self.inner.plans[axis].forward };
            let mut line = vec![Complex64::new(0.0, 0.0); len];
            let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * len * stride + s;
                    for (j, c) in line.iter_mut().enumerate() {
                        *c = data[base + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, c) in line.iter().enumerate() {
                        data[base + j * stride] = *c;
                    }
                }
            }
        }
    }

    /// Copies base-grid coefficients into a larger grid's spectrum. Nyquist modes are dropped.
    pub fn pad_spectrum(&self, coeffs: &[Complex64], target: &TorusGrid) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); target.len()];
        for (flat, c) in coeffs.iter().enumerate() {
            if self.touches_nyquist(flat) {
                continue;
            }
            out[self.map_mode(flat, target)] = *c;
        }
        out
    }

    /// Restricts a larger grid's spectrum to this grid. Nyquist modes are zeroed.
    pub fn truncate_spectrum(&self, coeffs: &[Complex64], source: &TorusGrid) -> Vec<Complex64> {
        (0..self.len())
            .map(|flat| {
                if self.touches_nyquist(flat) {
                    Complex64::new(0.0, 0.0)
                } else {
                    coeffs[self.map_mode(flat, source)]
                }
            })
            .collect()
    }

    fn map_mode(&self, flat: usize, other: &TorusGrid) -> usize {
        let idx = self.unflatten(flat);
        let mut target = [0usize; MAX_DIMS];
        for a in 0..self.n_dims() {
            let k = self.wavenumber(a, idx[a]);
            let m = other.shape()[a] as i64;
            target[a] = if k >= 0 { k as usize } else { (m + k) as usize };
        }
        other.flatten(&target[..self.n_dims()])
    }

    /// Spectral multiplier of `∂^α`, zeroed on Nyquist indices hit by an odd count.
    pub fn derivative_symbol(&self, flat: usize, alpha: &MultiIndex) -> Complex64 {
        let idx = self.unflatten(flat);
        let mut sym = Complex64::new(1.0, 0.0);
        for a in 0..self.n_dims() {
            let c = alpha.count(a);
            if c == 0 {
                continue;
            }
            if c % 2 == 1 && self.is_nyquist(a, idx[a]) {
                return Complex64::new(0.0, 0.0);
            }
            let ik = Complex64::new(0.0, self.angular_wavenumber(a, idx[a]));
            sym *= ik.powu(c as u32);
        }
        sym
    }

    /// Fraction of spectral energy in the top third of the resolved band.
    pub fn tail_fraction(&self, coeffs: &[Complex64]) -> f64 {
        let mut total = 0.0;
        let mut tail = 0.0;
        for (flat, c) in coeffs.iter().enumerate() {
            let e = c.norm_sqr();
            total += e;
            let idx = self.unflatten(flat);
            let top = (0..self.n_dims()).any(|a| {
                let half = self.shape()[a] as f64 / 2.0;
                self.wavenumber(a, idx[a]).unsigned_abs() as f64 > 2.0 * half / 3.0
            });
            if top {
                tail += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }
}

/// Spectral energy above which a field is flagged as under-resolved.
pub const UNDER_RESOLVED_FRACTION: f64 = 0.1;
