//! The quasilinear operator `Q[u] = A(…)·∇^{2p}u + b(…)` with product-structure
//! top coefficients `A = (−1)^{p−1} E₁ ⊗ ⋯ ⊗ E_p`.
//!
//! On a flat torus all derivatives commute, so the contraction
//! `A^{i₁j₁…i_pj_p} ∂_{i₁}∂_{j₁}⋯u` collapses onto one scalar coefficient per
//! multi-index of order `2p`. Those coefficients and their formal slot
//! derivatives are compiled once per spec.

mod ellipticity;
mod eval;
mod forcing;

pub use ellipticity::{apply_cutoff, check_ellipticity, ellipticity_certificate, jet_size, EllipticityCertificate};
pub(crate) use eval::{project, PaddedState};
pub use forcing::{ExprForcing, Forcing};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{parse, Expr, ParseContext, Scalar, Var};
use crate::torus::{index_tuples, tuple_offset, MultiIndex, ScalarField, TensorField, TorusGrid, MAX_DIMS};

/// A coefficient expression together with the slots it reads.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientFunction {
    expr: Expr,
    arity: Vec<MultiIndex>,
}

impl CoefficientFunction {
    pub fn new(expr: Expr) -> Self {
        let arity = expr
            .vars()
            .into_iter()
            .filter_map(|v| match v {
                Var::Slot(m) => Some(m),
                _ => None,
            })
            .collect();
        CoefficientFunction { expr, arity }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(Expr::Const(c))
    }

    pub fn parse(src: &str, n_dims: usize, p: usize) -> Result<Self> {
        Ok(Self::new(parse(src, ParseContext::coefficient(n_dims, p))?))
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// Slots read by the expression.
    pub fn arity(&self) -> &[MultiIndex] {
        &self.arity
    }

    pub fn derivative(&self, slot: MultiIndex) -> CoefficientFunction {
        Self::new(self.expr.diff(Var::Slot(slot)))
    }

    pub fn eval<S: Scalar>(&self, env: &dyn Fn(Var) -> S) -> S {
        self.expr.eval(env)
    }
}

impl From<Expr> for CoefficientFunction {
    fn from(e: Expr) -> Self {
        Self::new(e)
    }
}

/// An `n×n` symmetric matrix of coefficient functions.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorMatrix {
    n: usize,
    entries: Vec<CoefficientFunction>,
}

impl FactorMatrix {
    /// Row-major entries; rejected unless structurally symmetric.
    pub fn new(n: usize, entries: Vec<Expr>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::InvalidOperator(format!("factor needs {} entries, got {}", n * n, entries.len())));
        }
        for i in 0..n {
            for j in 0..i {
                if entries[i * n + j] != entries[j * n + i] {
                    return Err(Error::InvalidOperator(format!("factor is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(FactorMatrix { n, entries: entries.into_iter().map(CoefficientFunction::new).collect() })
    }

    /// `s·I` for a scalar expression `s`.
    pub fn scalar(n: usize, s: Expr) -> Self {
        let entries = (0..n * n)
            .map(|k| CoefficientFunction::new(if k / n == k % n { s.clone() } else { Expr::zero() }))
            .collect();
        FactorMatrix { n, entries }
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, Expr::one())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> &CoefficientFunction {
        &self.entries[i * self.n + j]
    }

    pub fn map(&self, f: impl Fn(usize, usize, &Expr) -> Expr) -> FactorMatrix {
        let n = self.n;
        let entries = (0..n * n).map(|k| CoefficientFunction::new(f(k / n, k % n, self.entries[k].expr()))).collect();
        FactorMatrix { n, entries }
    }
}

#[derive(Debug)]
pub(crate) struct Compiled {
    /// `(β, c_β)` with `Σ_β c_β ∂^β u` equal to the full `A·∇^{2p}u` contraction.
    pub top: Vec<(MultiIndex, Expr)>,
    /// Every slot read by `A` or `b`, sorted.
    pub slots: Vec<MultiIndex>,
    /// Per read slot `α`: the nonzero `∂c_β/∂u_α` and `∂b/∂u_α`.
    pub slot_derivatives: Vec<SlotDerivative>,
}

#[derive(Debug)]
pub(crate) struct SlotDerivative {
    pub slot: MultiIndex,
    pub top: Vec<(MultiIndex, Expr)>,
    pub lower: Expr,
}

/// The quasilinear operator of order `2p`.
#[derive(Clone)]
pub struct OperatorSpec {
    n_dims: usize,
    p: usize,
    factors: Vec<FactorMatrix>,
    lower_order: CoefficientFunction,
    cutoff_radius: f64,
    ellipticity_floor: f64,
    forcing: Option<Arc<dyn Forcing>>,
    compiled: Arc<Compiled>,
}

impl fmt::Debug for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorSpec")
            .field("n_dims", &self.n_dims)
            .field("p", &self.p)
            .field("factors", &self.factors)
            .field("lower_order", &self.lower_order.expr().to_string())
            .field("cutoff_radius", &self.cutoff_radius)
            .field("ellipticity_floor", &self.ellipticity_floor)
            .field("forcing", &self.forcing.is_some())
            .finish()
    }
}

impl OperatorSpec {
    pub fn new(n_dims: usize, p: usize, factors: Vec<FactorMatrix>, lower_order: Expr) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidOperator("p must be ≥ 1".into()));
        }
        if !(1..=MAX_DIMS).contains(&n_dims) {
            return Err(Error::InvalidOperator(format!("n_dims must be in 1..=3, got {n_dims}")));
        }
        if factors.len() != p {
            return Err(Error::InvalidOperator(format!("expected {p} factors, got {}", factors.len())));
        }
        if let Some(f) = factors.iter().find(|f| f.dim() != n_dims) {
            return Err(Error::InvalidOperator(format!("factor of size {} on a {n_dims}-dimensional torus", f.dim())));
        }
        let lower_order = CoefficientFunction::new(lower_order);
        let all = factors.iter().flat_map(|f| f.entries.iter()).chain(std::iter::once(&lower_order));
        for c in all {
            if let Some(bad) = c.arity().iter().find(|m| m.order() >= 2 * p) {
                return Err(Error::InvalidOperator(format!(
                    "`{bad}` has order {}: coefficients may read only up to ∇^{}u",
                    bad.order(),
                    2 * p - 1
                )));
            }
            if let Some(bad) = c.expr().vars().into_iter().find(|v| matches!(v, Var::Coord(a) if *a >= n_dims)) {
                return Err(Error::InvalidOperator(format!("coordinate `{bad}` on a {n_dims}-dimensional torus")));
            }
        }
        let compiled = Arc::new(compile(n_dims, p, &factors, &lower_order));
        Ok(OperatorSpec {
            n_dims,
            p,
            factors,
            lower_order,
            cutoff_radius: f64::INFINITY,
            ellipticity_floor: 0.0,
            forcing: None,
            compiled,
        })
    }

    /// Parses scalar factors `E_ℓ = s_ℓ·I` and a lower-order term.
    pub fn from_scalar_factors(n_dims: usize, p: usize, factors: &[&str], lower_order: &str) -> Result<Self> {
        let ctx = ParseContext::coefficient(n_dims, p);
        let factors =
            factors.iter().map(|s| Ok(FactorMatrix::scalar(n_dims, parse(s, ctx)?))).collect::<Result<Vec<_>>>()?;
        Self::new(n_dims, p, factors, parse(lower_order, ctx)?)
    }

    /// `u_t = (−1)^{p−1} Δ^p u`: heat for `p = 1`, biharmonic for `p = 2`.
    pub fn polyharmonic(n_dims: usize, p: usize) -> Result<Self> {
        Self::new(n_dims, p, vec![FactorMatrix::identity(n_dims); p], Expr::zero())
    }

    pub fn heat(n_dims: usize) -> Self {
        Self::polyharmonic(n_dims, 1).expect("valid heat operator")
    }

    pub fn biharmonic(n_dims: usize) -> Self {
        Self::polyharmonic(n_dims, 2).expect("valid biharmonic operator")
    }

    pub fn with_cutoff_radius(mut self, r: f64) -> Self {
        self.cutoff_radius = r;
        self
    }

    pub fn with_ellipticity_floor(mut self, lambda: f64) -> Self {
        self.ellipticity_floor = lambda;
        self
    }

    /// Adds a state-independent source `f(x, t)` to `Q`.
    pub fn with_forcing(mut self, forcing: Arc<dyn Forcing>) -> Self {
        self.forcing = Some(forcing);
        self
    }

    pub fn without_forcing(mut self) -> Self {
        self.forcing = None;
        self
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn order(&self) -> usize {
        2 * self.p
    }

    pub fn factors(&self) -> &[FactorMatrix] {
        &self.factors
    }

    pub fn lower_order(&self) -> &CoefficientFunction {
        &self.lower_order
    }

    pub fn cutoff_radius(&self) -> f64 {
        self.cutoff_radius
    }

    pub fn ellipticity_floor(&self) -> f64 {
        self.ellipticity_floor
    }

    pub fn forcing(&self) -> Option<&Arc<dyn Forcing>> {
        self.forcing.as_ref()
    }

    /// Sign `(−1)^{p−1}` of the assembled top tensor.
    pub fn sign(&self) -> f64 {
        if self.p % 2 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// True when neither `A` nor `b` reads the state.
    pub fn is_linear(&self) -> bool {
        self.compiled.slots.is_empty()
    }

    pub(crate) fn compiled(&self) -> &Compiled {
        &self.compiled
    }

    /// The collapsed top coefficients `c_β`.
    pub fn top_coefficients(&self) -> &[(MultiIndex, Expr)] {
        &self.compiled.top
    }

    pub(crate) fn check_grid(&self, grid: &TorusGrid) -> Result<()> {
        if grid.n_dims() != self.n_dims {
            return Err(Error::GridMismatch(format!(
                "operator on {} dimensions applied on a {}-dimensional grid",
                self.n_dims,
                grid.n_dims()
            )));
        }
        Ok(())
    }
}

fn compile(n: usize, p: usize, factors: &[FactorMatrix], lower: &CoefficientFunction) -> Compiled {
    let sign = if p % 2 == 1 { 1.0 } else { -1.0 };
    let mut top: BTreeMap<MultiIndex, Expr> = BTreeMap::new();
    for tuple in index_tuples(n, 2 * p) {
        let mut term = Expr::Const(sign);
        for (l, f) in factors.iter().enumerate() {
            term = Expr::product(term, f.entry(tuple[2 * l], tuple[2 * l + 1]).expr().clone());
        }
        if term.is_zero() {
            continue;
        }
        let beta = MultiIndex::from_axes(&tuple);
        let acc = top.remove(&beta).unwrap_or_else(Expr::zero);
        top.insert(beta, Expr::sum(acc, term));
    }
    let top: Vec<_> = top.into_iter().filter(|(_, e)| !e.is_zero()).collect();

    let mut slots = std::collections::BTreeSet::new();
    for (_, e) in &top {
        for v in e.vars() {
            if let Var::Slot(m) = v {
                slots.insert(m);
            }
        }
    }
    slots.extend(lower.arity().iter().copied());
    let slots: Vec<_> = slots.into_iter().collect();

    let slot_derivatives = slots
        .iter()
        .map(|&alpha| SlotDerivative {
            slot: alpha,
            top: top.iter().map(|(beta, c)| (*beta, c.diff(Var::Slot(alpha)))).filter(|(_, d)| !d.is_zero()).collect(),
            lower: lower.expr().diff(Var::Slot(alpha)),
        })
        .collect();
    Compiled { top, slots, slot_derivatives }
}

/// `(t, u, ∇u, …, ∇^{2p−1}u)` generated from one base field.
#[derive(Clone, Debug)]
pub struct StateJet {
    t: f64,
    u: ScalarField,
    order: usize,
}

impl StateJet {
    /// The jet of `u` through `∇^{order−1}u` at time `t`.
    pub fn new(u: &ScalarField, t: f64, order: usize) -> Self {
        StateJet { t, u: u.clone(), order }
    }

    pub fn for_spec(spec: &OperatorSpec, u: &ScalarField, t: f64) -> Self {
        Self::new(u, t, spec.order())
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn base(&self) -> &ScalarField {
        &self.u
    }

    pub fn grid(&self) -> &TorusGrid {
        self.u.grid()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Entry `k` of the jet: the rank-`k` tensor `∇^k u`.
    pub fn derivative(&self, k: usize) -> TensorField {
        crate::torus::gradient_tensor(&self.u, k)
    }

    pub fn derivatives(&self) -> Vec<TensorField> {
        (0..self.order).map(|k| self.derivative(k)).collect()
    }

    /// Pointwise `|u| + |∇u| + ⋯ + |∇^{order−1}u|`.
    pub fn pointwise_size(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.grid().len()];
        for k in 0..self.order {
            for (a, v) in acc.iter_mut().zip(self.derivative(k).pointwise_norm()) {
                *a += v;
            }
        }
        acc
    }
}

/// Output of [`apply_Q`].
#[derive(Clone, Debug)]
pub struct QEvaluation {
    pub value: ScalarField,
    /// More than 10% of the probe's spectral energy sits in the top third of the band.
    pub under_resolved: bool,
}

/// Pointwise `A^{i₁j₁…i_pj_p} = (−1)^{p−1} Π_ℓ E_ℓ^{i_ℓ j_ℓ}` on the state's grid.
#[allow(non_snake_case)]
pub fn assemble_A(spec: &OperatorSpec, state: &StateJet) -> Result<TensorField> {
    let grid = state.grid();
    spec.check_grid(grid)?;
    let n = spec.n_dims;
    let len = grid.len();
    let nodal = PaddedState::on_grid(state.base(), state.t(), &spec.compiled.slots);
    let factor_values: Vec<Vec<Vec<f64>>> =
        spec.factors.iter().map(|f| f.entries.iter().map(|e| nodal.eval(e.expr())).collect()).collect();
    let rank = 2 * spec.p;
    let mut data = vec![0.0; n.pow(rank as u32) * len];
    for tuple in index_tuples(n, rank) {
        let off = tuple_offset(n, &tuple) * len;
        for j in 0..len {
            let mut v = spec.sign();
            for (l, f) in factor_values.iter().enumerate() {
                v *= f[tuple[2 * l] * n + tuple[2 * l + 1]][j];
            }
            data[off + j] = v;
        }
    }
    TensorField::new(grid, rank, data)
}

/// `A(state)·∇^{2p}u + b(state)`, dealiased on the padded grid.
#[allow(non_snake_case)]
pub fn apply_Q(spec: &OperatorSpec, state: &StateJet, u: &ScalarField) -> Result<QEvaluation> {
    let grid = state.grid();
    spec.check_grid(grid)?;
    if u.grid() != grid {
        return Err(Error::GridMismatch("probe and state live on different grids".into()));
    }
    let padded = PaddedState::new(state.base(), state.t(), &spec.compiled.slots);
    let mut acc = padded.eval(spec.lower_order.expr());
    for (beta, c) in &spec.compiled.top {
        let coeff = padded.eval(c);
        let d = crate::torus::spectral_derivative_padded(u, beta, padded.grid());
        for ((a, c), d) in acc.iter_mut().zip(coeff).zip(d) {
            *a += c * d;
        }
    }
    let mut value = project(grid, &acc, padded.grid());
    if let Some(f) = &spec.forcing {
        value = value.add(&f.at(grid, state.t()));
    }
    Ok(QEvaluation { value, under_resolved: u.is_under_resolved() })
}

/// `Q[u](t)` with the state taken from `u` itself.
pub fn apply_self(spec: &OperatorSpec, u: &ScalarField, t: f64) -> Result<QEvaluation> {
    apply_Q(spec, &StateJet::for_spec(spec, u, t), u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sin_field(modes: usize) -> ScalarField {
        ScalarField::from_fn(&TorusGrid::circle(modes).unwrap(), |x| x[0].sin())
    }

    #[test]
    fn identity_factor_gives_laplacian_coefficients() {
        let g = TorusGrid::standard(2, 8).unwrap();
        let spec = OperatorSpec::heat(2);
        let a = assemble_A(&spec, &StateJet::new(&ScalarField::zeros(&g), 0.0, 2)).unwrap();
        for tuple in index_tuples(2, 2) {
            let expected = if tuple[0] == tuple[1] { 1.0 } else { 0.0 };
            assert!(a.component(&tuple).iter().all(|&v| v == expected));
        }
    }

    #[test]
    fn biharmonic_sign() {
        let spec = OperatorSpec::biharmonic(1);
        let a = assemble_A(&spec, &StateJet::new(&sin_field(8), 0.0, 4)).unwrap();
        assert!(a.data().iter().all(|&v| v == -1.0));
        assert_eq!(spec.top_coefficients().len(), 1);
    }

    #[test]
    fn state_dependent_factor() {
        let spec = OperatorSpec::from_scalar_factors(1, 1, &["1 + u^2"], "0").unwrap();
        let u = sin_field(16);
        let a = assemble_A(&spec, &StateJet::for_spec(&spec, &u, 0.0)).unwrap();
        let oracle: Vec<f64> = u.values().iter().map(|s| 1.0 + s * s).collect();
        for (x, y) in a.data().iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn single_mode_images() {
        let u = sin_field(16);
        let heat = apply_self(&OperatorSpec::heat(1), &u, 0.0).unwrap();
        assert!(heat.value.max_abs_diff(&u.scale(-1.0)) < 1e-12);
        assert!(!heat.under_resolved);
        let bih = apply_self(&OperatorSpec::biharmonic(1), &u, 0.0).unwrap();
        assert!(bih.value.max_abs_diff(&u.scale(-1.0)) < 1e-12);
        let spec = OperatorSpec::from_scalar_factors(1, 1, &["1"], "u^2").unwrap();
        let q = apply_self(&spec, &u, 0.0).unwrap();
        let oracle = ScalarField::from_fn(u.grid(), |x| -x[0].sin() + x[0].sin().powi(2));
        assert!(q.value.max_abs_diff(&oracle) < 1e-12);
    }

    #[test]
    fn quasilinear_top_term_is_dealiased() {
        // (1+u²)u_xx with u = sin x equals −sin x − sin³x; sin³x has modes ≤ 3
        let spec = OperatorSpec::from_scalar_factors(1, 1, &["1 + u^2"], "0").unwrap();
        let u = sin_field(16);
        let q = apply_self(&spec, &u, 0.0).unwrap();
        let oracle = ScalarField::from_fn(u.grid(), |x| -x[0].sin() - x[0].sin().powi(3));
        assert!(q.value.max_abs_diff(&oracle) < 1e-12);
    }

    #[test]
    fn mixed_two_dimensional_contraction() {
        // E₁ = [[2, 1], [1, 3]] gives 2u_xx + 2u_xy + 3u_yy
        let e = FactorMatrix::new(2, vec![Expr::Const(2.0), Expr::one(), Expr::one(), Expr::Const(3.0)]).unwrap();
        let spec = OperatorSpec::new(2, 1, vec![e], Expr::zero()).unwrap();
        let g = TorusGrid::standard(2, 8).unwrap();
        let u = ScalarField::from_fn(&g, |x| (x[0] + 2.0 * x[1]).sin());
        let q = apply_self(&spec, &u, 0.0).unwrap();
        let oracle = u.scale(-(2.0 + 2.0 * 2.0 + 3.0 * 4.0));
        assert!(q.value.max_abs_diff(&oracle) < 1e-11);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(OperatorSpec::polyharmonic(1, 0).is_err());
        assert!(OperatorSpec::from_scalar_factors(1, 1, &["1 + d2u"], "0").is_err());
        let asym = FactorMatrix::new(2, vec![Expr::one(), Expr::zero(), Expr::one(), Expr::one()]);
        assert!(asym.is_err());
        let spec = OperatorSpec::heat(2);
        assert!(apply_self(&spec, &sin_field(8), 0.0).is_err());
    }

    #[test]
    fn flags_under_resolved_probe() {
        let g = TorusGrid::circle(16).unwrap();
        let rough = ScalarField::from_fn(&g, |x| (7.0 * x[0]).sin());
        assert!(apply_self(&OperatorSpec::heat(1), &rough, 0.0).unwrap().under_resolved);
    }

    #[test]
    fn swapping_paired_indices_leaves_a_invariant() {
        let e = FactorMatrix::new(2, vec![Expr::Const(2.0), Expr::u(), Expr::u(), Expr::Const(3.0)]).unwrap();
        let spec = OperatorSpec::new(2, 2, vec![e.clone(), e], Expr::zero()).unwrap();
        let g = TorusGrid::standard(2, 8).unwrap();
        let u = ScalarField::from_fn(&g, |x| 0.3 * (x[0] - x[1]).cos());
        let a = assemble_A(&spec, &StateJet::for_spec(&spec, &u, 0.0)).unwrap();
        for t in index_tuples(2, 4) {
            let swapped = [t[1], t[0], t[3], t[2]];
            assert_eq!(a.component(&t), a.component(&swapped));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn linear_in_the_top_slot(a in -2.0f64..2.0, b in -2.0f64..2.0, c in prop::collection::vec(-1.0f64..1.0, 4)) {
                let spec = OperatorSpec::from_scalar_factors(1, 1, &["1 + u^2 + 0.5*sin(d1u)"], "0").unwrap();
                let g = TorusGrid::circle(16).unwrap();
                let state = ScalarField::from_fn(&g, |x| c[0] * x[0].sin() + c[1] * (2.0 * x[0]).cos());
                let f = ScalarField::from_fn(&g, |x| c[2] * (3.0 * x[0]).sin());
                let h = ScalarField::from_fn(&g, |x| c[3] * x[0].cos() + 0.2);
                let jet = StateJet::for_spec(&spec, &state, 0.0);
                let lhs = apply_Q(&spec, &jet, &f.scale(a).add(&h.scale(b))).unwrap().value;
                let rhs = apply_Q(&spec, &jet, &f).unwrap().value.scale(a).add(&apply_Q(&spec, &jet, &h).unwrap().value.scale(b));
                prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-10);
            }
        }
    }
}
