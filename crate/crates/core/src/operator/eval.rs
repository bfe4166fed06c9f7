use std::collections::BTreeMap;

use crate::expr::{Expr, Var};
use crate::torus::{spectral_derivative_padded, MultiIndex, ScalarField, TorusGrid};

/// Nodal values of `x`, `t`, and the slots `∂^α u` on an evaluation grid.
pub(crate) struct PaddedState {
    grid: TorusGrid,
    t: f64,
    coords: Vec<Vec<f64>>,
    slots: BTreeMap<MultiIndex, Vec<f64>>,
}

impl PaddedState {
    /// Slots interpolated onto the 3/2-padded grid of `u`.
    pub fn new(u: &ScalarField, t: f64, slots: &[MultiIndex]) -> Self {
        Self::build(u, t, slots, u.grid().padded())
    }

    /// Slots at the nodes of `u`'s own grid.
    pub fn on_grid(u: &ScalarField, t: f64, slots: &[MultiIndex]) -> Self {
        Self::build(u, t, slots, u.grid())
    }

    fn build(u: &ScalarField, t: f64, slots: &[MultiIndex], target: &TorusGrid) -> Self {
        let coords = (0..target.n_dims()).map(|a| target.coordinates(a)).collect();
        let slots = slots.iter().map(|&m| (m, spectral_derivative_padded(u, &m, target))).collect();
        PaddedState { grid: target.clone(), t, coords, slots }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn eval(&self, e: &Expr) -> Vec<f64> {
        let len = self.grid.len();
        if let Some(c) = e.as_const() {
            return vec![c; len];
        }
        (0..len)
            .map(|j| {
                e.eval(&|v| match v {
                    Var::Coord(a) => self.coords[a][j],
                    Var::Time => self.t,
                    Var::Slot(m) => self.slots[&m][j],
                })
            })
            .collect()
    }
}

/// Truncates padded-grid values back onto `grid`.
pub(crate) fn project(grid: &TorusGrid, values: &[f64], padded: &TorusGrid) -> ScalarField {
    if padded == grid {
        return ScalarField::from_values(grid, values.to_vec());
    }
    let spec = padded.forward(values);
    ScalarField::from_spectrum(grid, grid.truncate_spectrum(&spec, padded))
}
