use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{parse, Expr, ParseContext, Var};
use crate::jet::{series_apply_Q, TimeSeriesField};
use crate::operator::{apply_self, Forcing, OperatorSpec};
use crate::torus::{factorial, ScalarField, TorusGrid};

/// Forcing `f = u*_t − Q[u*]` for the exact solution `u* = e^{−λt} g(x)`.
#[derive(Clone, Debug)]
pub struct ManufacturedForcing {
    base: OperatorSpec,
    profile: Expr,
    rate: f64,
}

impl ManufacturedForcing {
    /// `profile` is an expression in the coordinates only.
    pub fn new(spec: &OperatorSpec, profile: &str, rate: f64) -> Result<Self> {
        let profile = parse(profile, ParseContext::data(spec.n_dims()))?;
        if profile.vars().contains(&Var::Time) {
            return Err(Error::InvalidArgument("manufactured profile must not depend on t".into()));
        }
        Ok(ManufacturedForcing { base: spec.clone().without_forcing(), profile, rate })
    }

    pub fn exact(&self, grid: &TorusGrid, t: f64) -> ScalarField {
        let decay = (-self.rate * t).exp();
        ScalarField::from_fn(grid, |x| decay * self.profile.eval_at(x, 0.0))
    }

    /// The operator with this forcing attached.
    pub fn spec(&self) -> OperatorSpec {
        self.base.clone().with_forcing(Arc::new(self.clone()))
    }
}

impl Forcing for ManufacturedForcing {
    fn at(&self, grid: &TorusGrid, t: f64) -> ScalarField {
        let u = self.exact(grid, t);
        let q = apply_self(&self.base, &u, t).expect("manufactured forcing on the operator's dimension").value;
        u.scale(-self.rate).sub(&q)
    }

    fn series(&self, grid: &TorusGrid, t0: f64, len: usize) -> Vec<ScalarField> {
        let u = self.exact(grid, t0);
        let derivs: Vec<ScalarField> = (0..=len).map(|k| u.scale((-self.rate).powi(k as i32))).collect();
        let q = series_apply_Q(&self.base, &TimeSeriesField::new(derivs[..len].to_vec()).expect("nonempty"), t0)
            .expect("manufactured forcing on the operator's dimension");
        (0..len).map(|k| derivs[k + 1].sub(&q.coeffs()[k]).scale(1.0 / factorial(k) as f64)).collect()
    }
}
