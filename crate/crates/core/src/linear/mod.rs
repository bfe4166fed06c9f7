//! Frozen-coefficient linear problems
//! `u_t = A(x,t)·∇^{2p}u + Σ_k R_k(x,t)·∇^k u + b(x,t)` by Crank–Nicolson.
//!
//! Each implicit stage is solved with GMRES, right-preconditioned by the
//! exact Fourier inverse of the mean-coefficient operator.

mod gmres;
mod trajectory;

pub use gmres::{gmres, GmresOptions, GmresOutcome};
pub(crate) use trajectory::uniform_times;
pub use trajectory::{step_count, write_atomic, SolverStats, Trajectory};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operator::{project, OperatorSpec, PaddedState, StateJet};
use crate::torus::{
    index_tuples, spectral_derivative_padded, tuple_offset, MultiIndex, ScalarField, TensorField, TorusGrid,
};

/// Coefficients of the spatial operator `L` at one time node, on the padded grid.
#[derive(Clone, Debug)]
pub(crate) struct NodeCoefficients {
    /// `p × n² × padded nodes`.
    factors: Vec<Vec<Vec<f64>>>,
    top: Vec<(MultiIndex, Vec<f64>)>,
    lower: Vec<(MultiIndex, Vec<f64>)>,
    /// Symbol of the mean-coefficient operator on the base grid.
    mean_symbol: Vec<Complex64>,
}

impl NodeCoefficients {
    /// `A(state)` only; returns the node and `b(state) + f(t)` on the base grid.
    pub(crate) fn frozen(spec: &OperatorSpec, state: &StateJet) -> Result<(Self, ScalarField)> {
        let grid = state.grid();
        let padded = PaddedState::new(state.base(), state.t(), &spec.compiled().slots);
        let mut source = project(grid, &padded.eval(spec.lower_order().expr()), padded.grid());
        if let Some(f) = spec.forcing() {
            source = source.add(&f.at(grid, state.t()));
        }
        let node = Self::assemble(spec, state, &padded, Vec::new())?;
        Ok((node, source))
    }

    /// `Ã = A(w)` plus `R̃_α = Σ_β ∂c_β/∂u_α · ∂^β w + ∂b/∂u_α`.
    pub(crate) fn linearized(spec: &OperatorSpec, state: &StateJet) -> Result<Self> {
        let padded = PaddedState::new(state.base(), state.t(), &spec.compiled().slots);
        let mut lower = Vec::new();
        for sd in &spec.compiled().slot_derivatives {
            let mut r = padded.eval(&sd.lower);
            for (beta, e) in &sd.top {
                let c = padded.eval(e);
                let d = spectral_derivative_padded(state.base(), beta, padded.grid());
                for ((ri, ci), di) in r.iter_mut().zip(c).zip(d) {
                    *ri += ci * di;
                }
            }
            if r.iter().any(|&v| v != 0.0) {
                lower.push((sd.slot, r));
            }
        }
        Self::assemble(spec, state, &padded, lower)
    }

    fn assemble(
        spec: &OperatorSpec,
        state: &StateJet,
        padded: &PaddedState,
        lower: Vec<(MultiIndex, Vec<f64>)>,
    ) -> Result<Self> {
        let n = spec.n_dims();
        let factors: Vec<Vec<Vec<f64>>> = spec
            .factors()
            .iter()
            .map(|f| (0..n * n).map(|k| padded.eval(f.entry(k / n, k % n).expr())).collect())
            .collect();
        check_frozen_ellipticity(spec, &factors, state.t())?;
        let top: Vec<_> = spec.top_coefficients().iter().map(|(b, e)| (*b, padded.eval(e))).collect();
        let grid = state.grid();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let mean_symbol = (0..grid.len())
            .map(|k| {
                top.iter().chain(&lower).map(|(alpha, c)| grid.derivative_symbol(k, alpha) * mean(c)).sum::<Complex64>()
            })
            .collect();
        Ok(NodeCoefficients { factors, top, lower, mean_symbol })
    }
}

fn check_frozen_ellipticity(spec: &OperatorSpec, factors: &[Vec<Vec<f64>>], t: f64) -> Result<()> {
    let n = spec.n_dims();
    let floor = spec.ellipticity_floor();
    let threshold = if floor > 0.0 { 0.5 * floor } else { 0.0 };
    for (l, f) in factors.iter().enumerate() {
        let len = f[0].len();
        for j in 0..len {
            let lam = if n == 1 {
                f[0][j]
            } else {
                let vals: Vec<f64> = (0..n * n).map(|k| f[k][j]).collect();
                DMatrix::from_row_slice(n, n, &vals).symmetric_eigen().eigenvalues.min()
            };
            if !(lam > threshold) {
                return Err(Error::NotElliptic {
                    min_eigenvalue: lam,
                    violator: format!("frozen factor E{} at padded node {j}, t={t}", l + 1),
                });
            }
        }
    }
    Ok(())
}

/// Time-sampled coefficients `A`, `R₀ … R_{2p−1}` and interval sources of a linear problem.
///
/// A single time node means the coefficients and source are constant in time.
#[derive(Clone, Debug)]
pub struct FrozenLinearOperator {
    grid: TorusGrid,
    p: usize,
    times: Vec<f64>,
    nodes: Vec<NodeCoefficients>,
    /// One per interval `[t_k, t_{k+1}]` (or a single one when static).
    sources: Vec<ScalarField>,
}

/// `A(reference(t))` and `b(reference(t))` along a reference path; `R_k = 0`.
///
/// Interval sources are trapezoid averages of the node values.
pub fn freeze_coefficients(spec: &OperatorSpec, reference: &[StateJet]) -> Result<FrozenLinearOperator> {
    let Some(first) = reference.first() else {
        return Err(Error::InvalidArgument("freezing needs at least one reference state".into()));
    };
    let grid = first.grid().clone();
    let mut nodes = Vec::with_capacity(reference.len());
    let mut node_sources = Vec::with_capacity(reference.len());
    for state in reference {
        if state.grid() != &grid {
            return Err(Error::GridMismatch("reference states on different grids".into()));
        }
        let (node, src) = NodeCoefficients::frozen(spec, state)?;
        nodes.push(node);
        node_sources.push(src);
    }
    let sources = if node_sources.len() == 1 {
        node_sources
    } else {
        node_sources.windows(2).map(|w| w[0].add(&w[1]).scale(0.5)).collect()
    };
    let times = reference.iter().map(StateJet::t).collect();
    FrozenLinearOperator::from_nodes(grid, spec.p(), times, nodes, sources)
}

impl FrozenLinearOperator {
    pub(crate) fn from_nodes(
        grid: TorusGrid,
        p: usize,
        times: Vec<f64>,
        nodes: Vec<NodeCoefficients>,
        sources: Vec<ScalarField>,
    ) -> Result<Self> {
        let expected = times.len().saturating_sub(1).max(1);
        if sources.len() != expected || nodes.len() != times.len() {
            return Err(Error::TimeGrid(format!("{} sources for {} time nodes", sources.len(), times.len())));
        }
        Ok(FrozenLinearOperator { grid, p, times, nodes, sources })
    }

    /// Replaces the interval sources.
    pub fn with_sources(mut self, sources: Vec<ScalarField>) -> Result<Self> {
        if sources.len() != self.sources.len() {
            return Err(Error::TimeGrid(format!("expected {} sources, got {}", self.sources.len(), sources.len())));
        }
        self.sources = sources;
        Ok(self)
    }

    pub fn without_source(self) -> Self {
        let zero = ScalarField::zeros(&self.grid);
        let n = self.sources.len();
        self.with_sources(vec![zero; n]).expect("same length")
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn is_static(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn source(&self, interval: usize) -> &ScalarField {
        &self.sources[if self.is_static() { 0 } else { interval }]
    }

    /// `A` at time node `k` as a rank-`2p` tensor on the padded grid.
    #[allow(non_snake_case)]
    pub fn A_field(&self, k: usize) -> TensorField {
        let node = &self.nodes[k];
        let padded = self.grid.padded();
        let n = self.grid.n_dims();
        let rank = 2 * self.p;
        let sign = if self.p % 2 == 1 { 1.0 } else { -1.0 };
        let len = padded.len();
        let mut data = vec![0.0; n.pow(rank as u32) * len];
        for tuple in index_tuples(n, rank) {
            let off = tuple_offset(n, &tuple) * len;
            for j in 0..len {
                data[off + j] = node
                    .factors
                    .iter()
                    .enumerate()
                    .fold(sign, |acc, (l, f)| acc * f[tuple[2 * l] * n + tuple[2 * l + 1]][j]);
            }
        }
        TensorField::new(padded, rank, data).expect("consistent tensor size")
    }

    /// `R₀, …, R_{2p−1}` at time node `k`, each symmetric with `R^{i₁…i_k} ∂_{i₁…i_k}` summing to the lower-order part.
    #[allow(non_snake_case)]
    pub fn R_fields(&self, k: usize) -> Vec<TensorField> {
        let node = &self.nodes[k];
        let padded = self.grid.padded();
        (0..2 * self.p)
            .map(|rank| {
                TensorField::from_symmetric(padded, rank, |alpha| match node.lower.iter().find(|(a, _)| a == alpha) {
                    Some((_, c)) => c.iter().map(|v| v / alpha.multiplicity() as f64).collect(),
                    None => vec![0.0; padded.len()],
                })
            })
            .collect()
    }

    /// `L_k v`: the spatial operator at time node `k`, dealiased.
    pub fn apply(&self, k: usize, v: &ScalarField) -> ScalarField {
        let node = &self.nodes[k];
        let padded = self.grid.padded();
        let mut acc = vec![0.0; padded.len()];
        for (alpha, c) in node.top.iter().chain(&node.lower) {
            let d = spectral_derivative_padded(v, alpha, padded);
            for ((a, ci), di) in acc.iter_mut().zip(c).zip(d) {
                *a += ci * di;
            }
        }
        project(&self.grid, &acc, padded)
    }

    fn precondition(&self, k: usize, dt: f64, y: &[f64]) -> Vec<f64> {
        let node = &self.nodes[k];
        let mut spec = self.grid.forward(y);
        for (flat, c) in spec.iter_mut().enumerate() {
            if self.grid.touches_nyquist(flat) {
                continue;
            }
            let den = Complex64::new(1.0, 0.0) - 0.5 * dt * node.mean_symbol[flat];
            if den.norm() > 1e-12 {
                *c /= den;
            }
        }
        self.grid.inverse(&spec)
    }

    fn node_index(&self, t: f64, dt: f64) -> Result<usize> {
        if self.is_static() {
            return Ok(0);
        }
        let tol = 1e-9 * dt.max(1e-300);
        let k = self
            .times
            .iter()
            .position(|&s| (s - t).abs() <= tol)
            .ok_or_else(|| Error::TimeGrid(format!("t = {t} is not a node of the frozen operator")))?;
        if k + 1 >= self.times.len() || (self.times[k + 1] - (t + dt)).abs() > tol {
            return Err(Error::TimeGrid(format!("[{t}, {}] is not an interval of the frozen operator", t + dt)));
        }
        Ok(k)
    }

    /// One Crank–Nicolson step over interval `k`; returns the state and Krylov stats.
    pub(crate) fn step_interval(&self, k: usize, state: &ScalarField, dt: f64) -> Result<(ScalarField, GmresOutcome)> {
        let (now, next) = if self.is_static() { (0, 0) } else { (k, k + 1) };
        let rhs = state.axpy(0.5 * dt, &self.apply(now, state)).axpy(dt, self.source(k));
        let grid = &self.grid;
        let out = gmres(
            |x| {
                let xf = ScalarField::from_values(grid, x.to_vec());
                xf.axpy(-0.5 * dt, &self.apply(next, &xf)).into_values()
            },
            |y| self.precondition(next, dt, y),
            rhs.values(),
            GmresOptions::default(),
        )?;
        Ok((ScalarField::from_values(grid, out.x.clone()), out))
    }
}

/// `(I − dt/2 L_{t+dt}) u_new = (I + dt/2 L_t) u_old + dt·b` with `b` the interval source.
pub fn step_linear(op: &FrozenLinearOperator, state: &ScalarField, t: f64, dt: f64) -> Result<ScalarField> {
    if !(dt > 0.0) {
        return Err(Error::TimeGrid(format!("dt = {dt} must be positive")));
    }
    if state.grid() != op.grid() {
        return Err(Error::GridMismatch("state and operator on different grids".into()));
    }
    let k = op.node_index(t, dt)?;
    Ok(op.step_interval(k, state, dt)?.0)
}

/// Crank–Nicolson trajectory from `u0` over `[0, T]`.
pub fn solve_linear(op: &FrozenLinearOperator, u0: &ScalarField, horizon: f64, dt: f64) -> Result<Trajectory> {
    solve_linear_guarded(op, u0, horizon, dt, f64::INFINITY)
}

/// As [`solve_linear`], aborting once any state's sup norm exceeds `sup_limit`.
pub fn solve_linear_guarded(
    op: &FrozenLinearOperator,
    u0: &ScalarField,
    horizon: f64,
    dt: f64,
    sup_limit: f64,
) -> Result<Trajectory> {
    if u0.grid() != op.grid() {
        return Err(Error::GridMismatch("initial datum and operator on different grids".into()));
    }
    let n = step_count(horizon, dt)?;
    let times = uniform_times(n, dt);
    if !op.is_static() {
        if op.times.len() != n + 1 {
            return Err(Error::TimeGrid(format!("operator has {} time nodes, solve needs {}", op.times.len(), n + 1)));
        }
        for (a, b) in op.times.iter().zip(&times) {
            if (a - b).abs() > 1e-9 * dt {
                return Err(Error::TimeGrid(format!("operator node {a} does not match solve time {b}")));
            }
        }
    }
    let mut states = Vec::with_capacity(n + 1);
    states.push(u0.clone());
    let mut stats = SolverStats::default();
    for k in 0..n {
        let (next, out) = op.step_interval(k, &states[k], dt)?;
        let sup = next.max_abs();
        if !sup.is_finite() || sup > sup_limit {
            return Err(Error::BlowUp { t: times[k + 1], sup, limit: sup_limit });
        }
        stats.iterations.push(out.iterations);
        stats.residuals.push(out.relative_residual);
        states.push(next);
    }
    let mut traj = Trajectory::new(times, states)?;
    traj.stats = stats;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::ExprForcing;
    use nalgebra::{DMatrix, DVector};
    use std::sync::Arc;

    fn circle(n: usize) -> TorusGrid {
        TorusGrid::circle(n).unwrap()
    }

    fn static_op(spec: &OperatorSpec, reference: &ScalarField) -> FrozenLinearOperator {
        freeze_coefficients(spec, &[StateJet::for_spec(spec, reference, 0.0)]).unwrap()
    }

    fn sin(g: &TorusGrid) -> ScalarField {
        ScalarField::from_fn(g, |x| x[0].sin())
    }

    #[test]
    fn single_mode_rational_step() {
        let g = circle(16);
        let u = sin(&g);
        let dt = 1e-3;
        let factor = (1.0 - dt / 2.0) / (1.0 + dt / 2.0);
        for spec in [OperatorSpec::heat(1), OperatorSpec::biharmonic(1)] {
            let op = static_op(&spec, &ScalarField::zeros(&g));
            let next = step_linear(&op, &u, 0.0, dt).unwrap();
            assert!(next.max_abs_diff(&u.scale(factor)) <= 1e-12);
        }
    }

    #[test]
    fn variable_coefficient_step_matches_galerkin_oracle() {
        // A = 1 + sin²x = 1.5 − 0.5 cos 2x, so Â₀ = 1.5 and Â_{±2} = −0.25
        let g = circle(16);
        let spec = OperatorSpec::from_scalar_factors(1, 1, &["1 + u^2"], "0").unwrap();
        let op = static_op(&spec, &sin(&g));
        let u = ScalarField::from_fn(&g, |x| (2.0 * x[0]).sin());
        let dt = 1e-3;
        let next = step_linear(&op, &u, 0.0, dt).unwrap();

        let modes: Vec<i64> = (-7..=7).collect();
        let coef = |d: i64| match d {
            0 => 1.5,
            2 | -2 => -0.25,
            _ => 0.0,
        };
        let m = modes.len();
        let l = DMatrix::from_fn(m, m, |i, j| {
            let kj = modes[j] as f64;
            num_complex::Complex64::new(coef(modes[i] - modes[j]) * -kj * kj, 0.0)
        });
        let id = DMatrix::<num_complex::Complex64>::identity(m, m);
        let half = num_complex::Complex64::new(0.5 * dt, 0.0);
        let lhs = &id - &l * half;
        let rhs_op = &id + &l * half;
        // sin 2x = (e^{2ix} − e^{−2ix}) / 2i
        let u_hat = DVector::from_fn(m, |i, _| match modes[i] {
            2 => num_complex::Complex64::new(0.0, -0.5),
            -2 => num_complex::Complex64::new(0.0, 0.5),
            _ => num_complex::Complex64::new(0.0, 0.0),
        });
        let sol = lhs.lu().solve(&(rhs_op * u_hat)).unwrap();
        let oracle = ScalarField::from_fn(&g, |x| {
            modes
                .iter()
                .enumerate()
                .map(|(i, &k)| (sol[i] * num_complex::Complex64::new(0.0, k as f64 * x[0]).exp()).re)
                .sum()
        });
        assert!(next.max_abs_diff(&oracle) <= 1e-9);
    }

    #[test]
    fn heat_decay_over_horizon() {
        let g = circle(16);
        let u = sin(&g);
        let op = static_op(&OperatorSpec::heat(1), &u);
        let traj = solve_linear(&op, &u, 0.1, 1e-3).unwrap();
        assert_eq!(traj.initial().values(), u.values());
        assert!(traj.last().max_abs_diff(&u.scale((-0.1f64).exp())) <= 1e-7);
        assert_eq!(traj.stats.max_iterations(), 1);
    }

    #[test]
    fn static_source_reaches_steady_state() {
        let g = circle(16);
        let spec = OperatorSpec::heat(1).with_forcing(Arc::new(ExprForcing::parse("sin(x)", 1).unwrap()));
        let op = static_op(&spec, &ScalarField::zeros(&g));
        // steady state solves −Δu = b in Fourier space: û_k = b̂_k / k²
        let b = sin(&g);
        let oracle_spec: Vec<_> = b
            .spectrum()
            .iter()
            .enumerate()
            .map(|(k, c)| if k == 0 { *c * 0.0 } else { *c / g.wave_norm_sq(k) })
            .collect();
        let oracle = ScalarField::from_spectrum(&g, oracle_spec);
        let traj = solve_linear(&op, &ScalarField::zeros(&g), 25.0, 0.05).unwrap();
        assert!(traj.last().max_abs_diff(&oracle) <= 1e-8);
    }

    #[test]
    fn zero_data_stay_zero() {
        let g = circle(8);
        let op = static_op(&OperatorSpec::heat(1), &ScalarField::zeros(&g));
        let traj = solve_linear(&op, &ScalarField::zeros(&g), 0.05, 1e-2).unwrap();
        assert!(traj.states().iter().all(|s| s.max_abs() == 0.0));
    }

    #[test]
    fn non_elliptic_frozen_coefficients_rejected() {
        let g = circle(16);
        let spec = OperatorSpec::from_scalar_factors(1, 1, &["u"], "0").unwrap();
        let err = freeze_coefficients(&spec, &[StateJet::for_spec(&spec, &sin(&g), 0.0)]).unwrap_err();
        assert!(matches!(err, Error::NotElliptic { .. }));
    }

    #[test]
    fn tensor_views_of_coefficients() {
        let g = circle(16);
        let spec = OperatorSpec::from_scalar_factors(1, 1, &["1 + u^2"], "0").unwrap();
        let op = static_op(&spec, &sin(&g));
        let a = op.A_field(0);
        let padded = g.padded();
        for j in 0..padded.len() {
            let s = padded.coordinate(j, 0).sin();
            assert!((a.data()[j] - (1.0 + s * s)).abs() < 1e-13);
        }
        assert!(op.R_fields(0).iter().all(|r| r.data().iter().all(|&v| v == 0.0)));
    }

    fn manufactured_errors(dts: &[f64]) -> Vec<f64> {
        // u* = e^{−t} sin x for u_t = (1 + 0.5 sin x cos t) u_xx + f
        let g = circle(16);
        let forcing = ExprForcing::parse("-exp(-t)*sin(x) + (1 + 0.5*sin(x)*cos(t))*exp(-t)*sin(x)", 1).unwrap();
        let spec = OperatorSpec::from_scalar_factors(1, 1, &["1 + 0.5*sin(x)*cos(t)"], "0")
            .unwrap()
            .with_forcing(Arc::new(forcing));
        dts.iter()
            .map(|&dt| {
                let n = step_count(1.0, dt).unwrap();
                let refs: Vec<_> = uniform_times(n, dt)
                    .into_iter()
                    .map(|t| StateJet::for_spec(&spec, &ScalarField::zeros(&g), t))
                    .collect();
                let op = freeze_coefficients(&spec, &refs).unwrap();
                let traj = solve_linear(&op, &sin(&g), 1.0, dt).unwrap();
                traj.last().max_abs_diff(&sin(&g).scale((-1.0f64).exp()))
            })
            .collect()
    }

    #[test]
    fn second_order_in_time() {
        let e = manufactured_errors(&[0.04, 0.02, 0.01]);
        for w in e.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() <= 0.1, "order {order} from {e:?}");
        }
    }

    #[test]
    fn discrete_energy_growth_is_bounded() {
        // d/dt ∫u² = −2∫a u_x² + ∫a_xx u² ≤ max(a_xx)·∫u², with a = 1 + 0.5 sin x
        let c = 0.5;
        for (modes, dt) in [(16, 1e-2), (32, 5e-3)] {
            let g = circle(modes);
            let spec = OperatorSpec::from_scalar_factors(1, 1, &["1 + 0.5*sin(x)"], "0").unwrap();
            let op = static_op(&spec, &ScalarField::zeros(&g));
            let u0 = ScalarField::from_fn(&g, |x| 1.0 + x[0].cos() + 0.5 * (3.0 * x[0]).sin());
            let traj = solve_linear(&op, &u0, 0.5, dt).unwrap();
            for w in traj.states().windows(2) {
                assert!(w[1].l2_norm_sq() <= (1.0 + c * dt) * w[0].l2_norm_sq() * (1.0 + 1e-12));
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]
            #[test]
            fn superposition(a in prop::collection::vec(-1.0f64..1.0, 4)) {
                let g = circle(16);
                let spec = OperatorSpec::from_scalar_factors(1, 1, &["1 + 0.5*cos(x)"], "0").unwrap();
                let op = static_op(&spec, &ScalarField::zeros(&g));
                let u0 = ScalarField::from_fn(&g, |x| a[0] * x[0].sin());
                let u1 = ScalarField::from_fn(&g, |x| a[1] * (2.0 * x[0]).cos());
                let b0 = ScalarField::from_fn(&g, |x| a[2] * x[0].cos());
                let b1 = ScalarField::from_fn(&g, |x| a[3] * (3.0 * x[0]).sin());
                let solve = |u: &ScalarField, b: &ScalarField| {
                    solve_linear(&op.clone().with_sources(vec![b.clone()]).unwrap(), u, 0.05, 1e-2).unwrap()
                };
                let sum = solve(&u0.add(&u1), &b0.add(&b1));
                let parts = solve(&u0, &b0).axpy(1.0, &solve(&u1, &b1)).unwrap();
                let d = sum.max_abs_diff(&parts).unwrap();
                // each solve is exact only up to the Krylov tolerance
                prop_assert!(d <= 20.0 * GmresOptions::default().rtol, "{d}");
            }
        }
    }
}
