//! The nonlinear solve: compatible jet, frozen linear problem along the jet
//! polynomial, then Newton on the discrete map `F(u) = (u(·,0), u_t − Q[u])`.
//!
//! The discrete map uses the same Crank–Nicolson pairing as the linear
//! stepper, so its exact derivative is a linear problem of the same form and
//! each Newton correction is one call to the linear solver.

mod manufactured;

pub use manufactured::ManufacturedForcing;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::analysis::{min_order, parabolic_norm};
use crate::error::{Error, Result};
use crate::jet::{assemble_u_tilde, build_jet, TimeJet};
use crate::linear::{
    freeze_coefficients, solve_linear_guarded, step_count, uniform_times, FrozenLinearOperator, NodeCoefficients,
    Trajectory,
};
use crate::operator::{apply_self, OperatorSpec, StateJet};
use crate::torus::{sobolev_norm, ScalarField, TensorField};

/// Value of the discrete map: the initial trace and one residual per time interval.
#[derive(Clone, Debug)]
pub struct FValue {
    pub initial: ScalarField,
    /// `r_n = (u^{n+1} − u^n)/dt − ½(Q[u^{n+1}] + Q[u^n])`.
    pub residual: Vec<ScalarField>,
    pub dt: f64,
}

impl FValue {
    /// Space-time `L²` norm `(Σ dt‖r_n‖²)^{1/2}` of the residual.
    pub fn residual_norm(&self) -> f64 {
        (self.dt * self.residual.iter().map(ScalarField::l2_norm_sq).sum::<f64>()).sqrt()
    }

    pub fn max_abs_diff(&self, other: &FValue) -> f64 {
        self.residual
            .iter()
            .zip(&other.residual)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(self.initial.max_abs_diff(&other.initial), f64::max)
    }

    fn combine(&self, other: &FValue, s: f64, scale: f64) -> FValue {
        FValue {
            initial: self.initial.axpy(s, &other.initial).scale(scale),
            residual: self.residual.iter().zip(&other.residual).map(|(a, b)| a.axpy(s, b).scale(scale)).collect(),
            dt: self.dt,
        }
    }
}

fn crank_nicolson_residual(u: &Trajectory, q: &[ScalarField]) -> Vec<ScalarField> {
    let dt = u.dt();
    u.states()
        .windows(2)
        .zip(q.windows(2))
        .map(|(s, q)| s[1].sub(&s[0]).scale(1.0 / dt).sub(&q[0].add(&q[1]).scale(0.5)))
        .collect()
}

/// `F(u)` with `Q` evaluated at each stored time, forcing included.
#[allow(non_snake_case)]
pub fn evaluate_F(spec: &OperatorSpec, u: &Trajectory) -> Result<FValue> {
    let q = u
        .times()
        .iter()
        .zip(u.states())
        .map(|(&t, s)| Ok(apply_self(spec, s, t)?.value))
        .collect::<Result<Vec<_>>>()?;
    Ok(FValue { initial: u.initial().clone(), residual: crank_nicolson_residual(u, &q), dt: u.dt() })
}

/// `dF` at a base trajectory: `Ã = A(w)` and `R̃_k` at every time node.
#[derive(Clone, Debug)]
pub struct LinearizationAt {
    base: Trajectory,
    op: FrozenLinearOperator,
}

/// Formally differentiates `A` and `b` in every slot along `base`.
#[allow(non_snake_case)]
pub fn linearize_F(spec: &OperatorSpec, base: &Trajectory) -> Result<LinearizationAt> {
    let nodes = base
        .times()
        .iter()
        .zip(base.states())
        .map(|(&t, s)| NodeCoefficients::linearized(spec, &StateJet::for_spec(spec, s, t)))
        .collect::<Result<Vec<_>>>()?;
    let sources = vec![ScalarField::zeros(base.grid()); base.n_steps()];
    let op = FrozenLinearOperator::from_nodes(base.grid().clone(), spec.p(), base.times().to_vec(), nodes, sources)?;
    Ok(LinearizationAt { base: base.clone(), op })
}

#[allow(non_snake_case)]
impl LinearizationAt {
    pub fn base(&self) -> &Trajectory {
        &self.base
    }

    /// The linearized spatial operator, with zero sources.
    pub fn operator(&self) -> &FrozenLinearOperator {
        &self.op
    }

    /// `Ã` at time node `k`, on the padded grid.
    pub fn A_tilde(&self, k: usize) -> TensorField {
        self.op.A_field(k)
    }

    /// `R̃₀, …, R̃_{2p−1}` at time node `k`, on the padded grid.
    pub fn R_tilde(&self, k: usize) -> Vec<TensorField> {
        self.op.R_fields(k)
    }

    /// `dF(base)·v`.
    pub fn apply(&self, v: &Trajectory) -> Result<FValue> {
        self.base.check_compatible(v)?;
        let lv: Vec<ScalarField> = v.states().iter().enumerate().map(|(k, s)| self.op.apply(k, s)).collect();
        Ok(FValue { initial: v.initial().clone(), residual: crank_nicolson_residual(v, &lv), dt: v.dt() })
    }
}

/// Max-norm gap between the central difference `(F(u + h v) − F(u − h v))/2h` and `dF(u)·v`.
pub fn directional_derivative_check(
    spec: &OperatorSpec,
    base: &Trajectory,
    direction: &Trajectory,
    h: f64,
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::InvalidArgument(format!("step h = {h} outside [1e-7, 1e-3]")));
    }
    let plus = evaluate_F(spec, &base.axpy(h, direction)?)?;
    let minus = evaluate_F(spec, &base.axpy(-h, direction)?)?;
    let fd = plus.combine(&minus, -1.0, 0.5 / h);
    let exact = linearize_F(spec, base)?.apply(direction)?;
    Ok(fd.max_abs_diff(&exact))
}

/// Starting point of the Newton iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NewtonStart {
    /// The solution of the problem frozen along the jet polynomial.
    FrozenJet,
    /// `u(·, t) = u₀` for all `t`.
    ConstantExtension,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    /// Jet order; `None` uses [`default_jet_order`].
    pub jet_order: Option<usize>,
    pub start: NewtonStart,
    pub max_newton: usize,
    pub max_halvings: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { jet_order: None, start: NewtonStart::FrozenJet, max_newton: 12, max_halvings: 6 }
    }
}

/// `max(2, min_order(n, p))`.
pub fn default_jet_order(spec: &OperatorSpec) -> usize {
    min_order(spec.n_dims(), spec.p()).max(2)
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub trajectory: Trajectory,
    /// Residual norm of the starting guess, then after each correction.
    pub newton_history: Vec<f64>,
    /// Achieved horizon, at most the requested one.
    pub horizon: f64,
    pub halvings: usize,
    pub jet: TimeJet,
    /// Krylov iterations over all linear solves.
    pub linear_iterations: usize,
}

impl Solution {
    pub fn newton_iterations(&self) -> usize {
        self.newton_history.len() - 1
    }

    pub fn final_residual(&self) -> f64 {
        *self.newton_history.last().unwrap()
    }

    pub fn export(&self, dir: &std::path::Path, stem: &str) -> Result<()> {
        self.trajectory.export(
            dir,
            stem,
            json!({
                "newton_history": self.newton_history,
                "horizon": self.horizon,
                "halvings": self.halvings,
                "jet_order": self.jet.m(),
                "linear_iterations": self.linear_iterations,
            }),
        )
    }
}

fn blow_up_limit(spec: &OperatorSpec) -> f64 {
    10.0 * spec.cutoff_radius()
}

fn check_sup(traj: &Trajectory, limit: f64) -> Result<()> {
    for (t, s) in traj.times().iter().zip(traj.states()) {
        let sup = s.max_abs();
        if !sup.is_finite() || sup > limit {
            return Err(Error::BlowUp { t: *t, sup, limit });
        }
    }
    Ok(())
}

/// Newton correction `v` with `v(0) = 0` and `dF(u)·v = −F(u)`.
fn newton_correction(spec: &OperatorSpec, u: &Trajectory, f: &FValue, limit: f64) -> Result<Trajectory> {
    let lin = linearize_F(spec, u)?;
    let sources = f.residual.iter().map(|r| r.scale(-1.0)).collect();
    let op = lin.op.with_sources(sources)?;
    solve_linear_guarded(&op, &ScalarField::zeros(u.grid()), u.horizon(), u.dt(), limit)
}

struct Attempt {
    trajectory: Trajectory,
    history: Vec<f64>,
    linear_iterations: usize,
}

fn newton_attempt(
    spec: &OperatorSpec,
    u0: &ScalarField,
    jet: &TimeJet,
    n_steps: usize,
    dt: f64,
    tol: f64,
    opts: &SolveOptions,
) -> std::result::Result<Attempt, Vec<f64>> {
    let limit = blow_up_limit(spec);
    let times = uniform_times(n_steps, dt);
    let horizon = n_steps as f64 * dt;
    let mut history = Vec::new();
    let mut linear_iterations = 0;
    let start = match opts.start {
        NewtonStart::FrozenJet => {
            let refs: Vec<StateJet> = times.iter().map(|&t| assemble_u_tilde(jet, t)).collect();
            freeze_coefficients(spec, &refs).and_then(|op| solve_linear_guarded(&op, u0, horizon, dt, limit))
        }
        NewtonStart::ConstantExtension => Trajectory::new(times.clone(), vec![u0.clone(); n_steps + 1]),
    };
    let mut u = start.map_err(|_| history.clone())?;
    linear_iterations += u.stats.total_iterations();
    let mut f = evaluate_F(spec, &u).map_err(|_| history.clone())?;
    history.push(f.residual_norm());
    while *history.last().unwrap() > tol {
        if history.len() > opts.max_newton {
            return Err(history);
        }
        let step = newton_correction(spec, &u, &f, limit)
            .and_then(|v| {
                linear_iterations += v.stats.total_iterations();
                u.axpy(1.0, &v)
            })
            .and_then(|next| check_sup(&next, limit).map(|_| next));
        let Ok(next) = step else {
            return Err(history);
        };
        let Ok(f_next) = evaluate_F(spec, &next) else {
            return Err(history);
        };
        let r = f_next.residual_norm();
        let prev = *history.last().unwrap();
        history.push(r);
        if !(r < prev) {
            return Err(history);
        }
        u = next;
        f = f_next;
    }
    Ok(Attempt { trajectory: u, history, linear_iterations })
}

/// Solves `u_t = Q[u]`, `u(0) = u₀` on `[0, T′]` with `T′ ≤ T`, using default options.
pub fn solve_quasilinear(spec: &OperatorSpec, u0: &ScalarField, horizon: f64, dt: f64, tol: f64) -> Result<Solution> {
    solve_quasilinear_with(spec, u0, horizon, dt, tol, &SolveOptions::default())
}

/// As [`solve_quasilinear`]; a stalled Newton iteration halves the horizon.
pub fn solve_quasilinear_with(
    spec: &OperatorSpec,
    u0: &ScalarField,
    horizon: f64,
    dt: f64,
    tol: f64,
    opts: &SolveOptions,
) -> Result<Solution> {
    if !(tol >= 1e-12) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} below 1e-12")));
    }
    spec.check_grid(u0.grid())?;
    let m = opts.jet_order.unwrap_or_else(|| default_jet_order(spec));
    let jet = build_jet(spec, u0, m)?;
    let mut n_steps = step_count(horizon, dt)?;
    let mut failures = Vec::new();
    for halvings in 0..=opts.max_halvings {
        match newton_attempt(spec, u0, &jet, n_steps, dt, tol, opts) {
            Ok(a) => {
                return Ok(Solution {
                    horizon: a.trajectory.horizon(),
                    trajectory: a.trajectory,
                    newton_history: a.history,
                    halvings,
                    jet,
                    linear_iterations: a.linear_iterations,
                })
            }
            Err(history) => failures.push(history.last().copied().unwrap_or(f64::NAN)),
        }
        if n_steps < 2 {
            break;
        }
        n_steps /= 2;
    }
    Err(Error::NoShortTimeSolution { halvings: failures.len() - 1, history: failures })
}

#[derive(Clone, Debug)]
pub struct PicardSolution {
    pub trajectory: Trajectory,
    pub residual_history: Vec<f64>,
}

/// Damped fixed-point iteration `u ← (1−ω)u + ω·S(u)`, where `S(u)` solves the
/// problem frozen along `u`. Starts from the constant extension of `u₀`.
pub fn solve_picard(
    spec: &OperatorSpec,
    u0: &ScalarField,
    horizon: f64,
    dt: f64,
    tol: f64,
    relaxation: f64,
    max_iterations: usize,
) -> Result<PicardSolution> {
    if !(relaxation > 0.0 && relaxation <= 1.0) {
        return Err(Error::InvalidArgument(format!("relaxation {relaxation} outside (0, 1]")));
    }
    spec.check_grid(u0.grid())?;
    let n = step_count(horizon, dt)?;
    let limit = blow_up_limit(spec);
    let mut u = Trajectory::new(uniform_times(n, dt), vec![u0.clone(); n + 1])?;
    let mut history = vec![evaluate_F(spec, &u)?.residual_norm()];
    while *history.last().unwrap() > tol {
        if history.len() > max_iterations {
            return Err(Error::NoShortTimeSolution { halvings: 0, history });
        }
        let refs: Vec<StateJet> =
            u.times().iter().zip(u.states()).map(|(&t, s)| StateJet::for_spec(spec, s, t)).collect();
        let next = solve_linear_guarded(&freeze_coefficients(spec, &refs)?, u0, horizon, dt, limit)?;
        u = u.axpy(relaxation, &next.difference(&u)?)?;
        history.push(evaluate_F(spec, &u)?.residual_norm());
    }
    Ok(PicardSolution { trajectory: u, residual_history: history })
}

/// One perturbed solve in a dependence probe.
#[derive(Clone, Debug, Serialize)]
pub struct DependencePoint {
    /// `‖δ‖_{W^{2p,2}}`.
    pub input_distance: f64,
    /// Discrete `P¹` distance between the perturbed and unperturbed solutions.
    pub output_distance: Option<f64>,
    pub failure: Option<String>,
}

impl DependencePoint {
    pub fn ratio(&self) -> Option<f64> {
        self.output_distance.map(|o| o / self.input_distance)
    }
}

/// Solves from `u₀` and from each `u₀ + δ`, concurrently.
pub fn continuous_dependence_probe(
    spec: &OperatorSpec,
    u0: &ScalarField,
    perturbations: &[ScalarField],
    horizon: f64,
    dt: f64,
    tol: f64,
) -> Result<Vec<DependencePoint>> {
    let base = solve_quasilinear(spec, u0, horizon, dt, tol)?;
    Ok(perturbations
        .par_iter()
        .map(|delta| {
            let input_distance = sobolev_norm(delta, spec.order());
            let outcome = solve_quasilinear(spec, &u0.add(delta), horizon, dt, tol).and_then(|s| {
                if s.trajectory.n_steps() != base.trajectory.n_steps() {
                    return Err(Error::InvalidArgument(format!(
                        "perturbed horizon {} differs from {}",
                        s.horizon, base.horizon
                    )));
                }
                parabolic_norm(&s.trajectory.difference(&base.trajectory)?, 1, spec.p())
            });
            match outcome {
                Ok(d) => DependencePoint { input_distance, output_distance: Some(d), failure: None },
                Err(e) => DependencePoint { input_distance, output_distance: None, failure: Some(e.to_string()) },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests;
