use crate::error::Result;
use crate::expr::{parse, Expr, ParseContext, Series, Var};
use crate::torus::{ScalarField, TorusGrid};

/// A source term `f(x, t)` that does not read the state.
pub trait Forcing: Send + Sync {
    fn at(&self, grid: &TorusGrid, t: f64) -> ScalarField;

    /// Normalized Taylor coefficients `f_k` of `f(·, t0 + s) = Σ f_k s^k`, `len` of them.
    fn series(&self, grid: &TorusGrid, t0: f64, len: usize) -> Vec<ScalarField>;
}

/// Forcing given by a closed-form expression in `(x, t)`.
#[derive(Clone, Debug)]
pub struct ExprForcing {
    expr: Expr,
}

impl ExprForcing {
    pub fn new(expr: Expr) -> Self {
        ExprForcing { expr }
    }

    pub fn parse(src: &str, n_dims: usize) -> Result<Self> {
        Ok(Self::new(parse(src, ParseContext::data(n_dims))?))
    }
}

impl Forcing for ExprForcing {
    fn at(&self, grid: &TorusGrid, t: f64) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.expr.eval_at(x, t))
    }

    fn series(&self, grid: &TorusGrid, t0: f64, len: usize) -> Vec<ScalarField> {
        let per_node: Vec<Series> = (0..grid.len())
            .map(|j| {
                let x: Vec<f64> = (0..grid.n_dims()).map(|a| grid.coordinate(j, a)).collect();
                self.expr.eval(&|v| match v {
                    Var::Coord(a) => Series::constant(x[a]),
                    Var::Time => Series::variable(t0, len),
                    Var::Slot(_) => Series::constant(f64::NAN),
                })
            })
            .collect();
        (0..len).map(|k| ScalarField::from_values(grid, per_node.iter().map(|s| s.coeff(k)).collect())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_of_separable_forcing() {
        let g = TorusGrid::circle(8).unwrap();
        let f = ExprForcing::parse("exp(-t)*sin(x)", 1).unwrap();
        let s = f.series(&g, 0.0, 3);
        let sin = ScalarField::from_fn(&g, |x| x[0].sin());
        assert!(s[0].max_abs_diff(&sin) < 1e-15);
        assert!(s[1].max_abs_diff(&sin.scale(-1.0)) < 1e-15);
        assert!(s[2].max_abs_diff(&sin.scale(0.5)) < 1e-15);
        assert!(f.at(&g, 1.0).max_abs_diff(&sin.scale((-1.0f64).exp())) < 1e-15);
    }
}
