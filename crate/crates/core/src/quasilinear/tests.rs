use super::*;
use crate::torus::TorusGrid;
use num_complex::Complex64;

fn circle(n: usize) -> TorusGrid {
    TorusGrid::circle(n).unwrap()
}

fn sin(g: &TorusGrid, a: f64) -> ScalarField {
    ScalarField::from_fn(g, |x| a * x[0].sin())
}

fn reaction() -> OperatorSpec {
    OperatorSpec::from_scalar_factors(1, 1, &["1"], "u^2").unwrap()
}

fn quasilinear_top() -> OperatorSpec {
    OperatorSpec::from_scalar_factors(1, 1, &["1 + u^2"], "0").unwrap()
}

fn traj_of(g: &TorusGrid, n: usize, dt: f64, f: impl Fn(&[f64], f64) -> f64) -> Trajectory {
    let times = uniform_times(n, dt);
    let states = times.iter().map(|&t| ScalarField::from_fn(g, |x| f(x, t))).collect();
    Trajectory::new(times, states).unwrap()
}

#[test]
fn linearization_of_reaction_term() {
    let g = circle(16);
    let base = traj_of(&g, 2, 0.1, |x, t| (1.0 + t) * x[0].sin());
    let lin = linearize_F(&reaction(), &base).unwrap();
    for k in 0..=2 {
        let r = lin.R_tilde(k);
        let padded = g.padded();
        for j in 0..padded.len() {
            let u = (1.0 + 0.1 * k as f64) * padded.coordinate(j, 0).sin();
            assert!((r[0].data()[j] - 2.0 * u).abs() < 1e-13);
        }
        assert!(r[1].data().iter().all(|&v| v == 0.0));
        assert!(lin.A_tilde(k).data().iter().all(|&v| v == 1.0));
    }
}

#[test]
fn linearization_of_state_dependent_diffusion() {
    // R̃₀ = 2u·u_xx for A = 1 + u²
    let g = circle(16);
    let base = traj_of(&g, 1, 0.1, |x, _| x[0].sin());
    let lin = linearize_F(&quasilinear_top(), &base).unwrap();
    let r0 = &lin.R_tilde(0)[0];
    let padded = g.padded();
    for j in 0..padded.len() {
        let s = padded.coordinate(j, 0).sin();
        assert!((r0.data()[j] - 2.0 * s * -s).abs() < 1e-13);
        assert!((lin.A_tilde(0).data()[j] - (1.0 + s * s)).abs() < 1e-13);
    }
}

#[test]
fn constant_coefficients_have_no_lower_terms() {
    let g = circle(16);
    let base = traj_of(&g, 1, 0.1, |x, _| x[0].cos());
    let lin = linearize_F(&OperatorSpec::biharmonic(1), &base).unwrap();
    assert!(lin.R_tilde(0).iter().all(|r| r.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn directional_derivative_of_linear_map_is_exact() {
    let g = circle(16);
    let zero = traj_of(&g, 10, 0.01, |_, _| 0.0);
    let dir = traj_of(&g, 10, 0.01, |x, t| (1.0 - t) * x[0].cos() + 0.3 * (2.0 * x[0]).sin());
    for spec in [OperatorSpec::heat(1), OperatorSpec::biharmonic(1)] {
        assert!(directional_derivative_check(&spec, &zero, &dir, 1e-3).unwrap() <= 1e-12);
    }
    assert_eq!(directional_derivative_check(&reaction(), &dir, &zero, 1e-4).unwrap(), 0.0);
    assert!(directional_derivative_check(&reaction(), &zero, &dir, 1.0).is_err());
}

#[test]
fn cubic_nonlinearity_has_second_order_mismatch() {
    let g = circle(16);
    let base = traj_of(&g, 10, 0.01, |x, t| (1.0 - t) * x[0].sin());
    let dir = traj_of(&g, 10, 0.01, |x, _| x[0].cos() + 0.5);
    let m1 = directional_derivative_check(&quasilinear_top(), &base, &dir, 1e-3).unwrap();
    let m2 = directional_derivative_check(&quasilinear_top(), &base, &dir, 5e-4).unwrap();
    assert!((m1 / m2 - 4.0).abs() <= 0.5, "{m1} {m2}");
}

#[test]
fn heat_and_biharmonic_single_mode_decay() {
    let g = circle(16);
    for spec in [OperatorSpec::heat(1), OperatorSpec::biharmonic(1)] {
        let sol = solve_quasilinear(&spec, &sin(&g, 1.0), 0.1, 1e-3, 1e-10).unwrap();
        assert_eq!(sol.trajectory.initial().values(), sin(&g, 1.0).values());
        assert!(sol.trajectory.last().max_abs_diff(&sin(&g, (-0.1f64).exp())) <= 1e-7);
        assert!(sol.newton_iterations() <= 1);
        assert!(sol.final_residual() <= 1e-10);
        assert_eq!(sol.halvings, 0);
    }
}

/// Fourier–Galerkin RK4 for `u_t = u_xx + u²` with modes `|k| ≤ 7`.
fn galerkin_rk4(a0: f64, horizon: f64, steps: usize) -> Vec<Complex64> {
    const K: i64 = 7;
    let idx = |k: i64| (k + K) as usize;
    let rhs = |u: &[Complex64]| -> Vec<Complex64> {
        (-K..=K)
            .map(|k| {
                let mut s = u[idx(k)] * -(k * k) as f64;
                for j in -K..=K {
                    if (k - j).abs() <= K {
                        s += u[idx(j)] * u[idx(k - j)];
                    }
                }
                s
            })
            .collect()
    };
    let mut u = vec![Complex64::new(0.0, 0.0); (2 * K + 1) as usize];
    u[idx(1)] = Complex64::new(0.0, -0.5 * a0);
    u[idx(-1)] = Complex64::new(0.0, 0.5 * a0);
    let h = horizon / steps as f64;
    let add = |u: &[Complex64], k: &[Complex64], s: f64| -> Vec<Complex64> {
        u.iter().zip(k).map(|(a, b)| a + b * s).collect()
    };
    for _ in 0..steps {
        let k1 = rhs(&u);
        let k2 = rhs(&add(&u, &k1, h / 2.0));
        let k3 = rhs(&add(&u, &k2, h / 2.0));
        let k4 = rhs(&add(&u, &k3, h));
        for i in 0..u.len() {
            u[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
        }
    }
    u
}

#[test]
fn reaction_diffusion_matches_galerkin_reference() {
    let g = circle(16);
    let sol = solve_quasilinear(&reaction(), &sin(&g, 0.1), 0.1, 1e-3, 1e-10).unwrap();
    assert!(sol.final_residual() <= 1e-10);
    assert!(sol.newton_iterations() <= 5);
    let coeffs = galerkin_rk4(0.1, 0.1, 2000);
    let reference = ScalarField::from_fn(&g, |x| {
        (-7..=7i64).map(|k| (coeffs[(k + 7) as usize] * Complex64::new(0.0, k as f64 * x[0]).exp()).re).sum()
    });
    assert!(sol.trajectory.last().max_abs_diff(&reference) <= 1e-6);
}

#[test]
fn newton_history_decreases() {
    let g = circle(16);
    let sol = solve_quasilinear(&quasilinear_top(), &sin(&g, 0.5), 0.1, 1e-3, 1e-10).unwrap();
    assert!(sol.newton_history.windows(2).all(|w| w[1] < w[0]), "{:?}", sol.newton_history);
    assert!(sol.final_residual() <= 1e-10);
}

#[test]
fn frozen_jet_start_is_no_worse_than_constant_start() {
    let g = circle(16);
    for spec in [reaction(), quasilinear_top()] {
        let jet = solve_quasilinear(&spec, &sin(&g, 0.5), 0.1, 1e-3, 1e-10).unwrap();
        let opts = SolveOptions { start: NewtonStart::ConstantExtension, ..Default::default() };
        let flat = solve_quasilinear_with(&spec, &sin(&g, 0.5), 0.1, 1e-3, 1e-10, &opts).unwrap();
        assert!(jet.newton_iterations() <= flat.newton_iterations());
        assert!(jet.trajectory.max_abs_diff(&flat.trajectory).unwrap() <= 1e-9);
    }
}

#[test]
fn newton_and_picard_agree() {
    let g = circle(16);
    let newton = solve_quasilinear(&reaction(), &sin(&g, 0.5), 0.1, 1e-3, 1e-10).unwrap();
    let picard = solve_picard(&reaction(), &sin(&g, 0.5), 0.1, 1e-3, 1e-10, 0.5, 200).unwrap();
    let gap = parabolic_norm(&newton.trajectory.difference(&picard.trajectory).unwrap(), 1, 1).unwrap();
    assert!(gap <= 1e-8, "{gap}");
}

#[test]
fn large_data_shrinks_the_horizon() {
    // u' = u² from u ≈ 20 blows up near t = 1/20
    let g = circle(16);
    let u0 = ScalarField::from_fn(&g, |x| 20.0 + x[0].sin());
    let sol = solve_quasilinear(&reaction(), &u0, 1.0, 1.0 / 256.0, 1e-9).unwrap();
    assert!(sol.halvings > 0);
    assert!(sol.horizon < 0.05);
    assert!(sol.final_residual() <= 1e-9);
}

#[test]
fn exhausted_halvings_report_history() {
    let g = circle(16);
    let opts = SolveOptions { max_newton: 0, start: NewtonStart::ConstantExtension, ..Default::default() };
    let err = solve_quasilinear_with(&reaction(), &sin(&g, 0.5), 0.64, 1e-2, 1e-10, &opts).unwrap_err();
    match err {
        Error::NoShortTimeSolution { halvings, history } => {
            assert_eq!(halvings, 6);
            assert_eq!(history.len(), 7);
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn tolerance_floor_enforced() {
    let g = circle(8);
    assert!(solve_quasilinear(&reaction(), &sin(&g, 0.1), 0.1, 1e-2, 1e-13).is_err());
}

#[test]
fn dependence_probe_on_heat_is_contractive() {
    let g = circle(16);
    let deltas: Vec<ScalarField> = (1..=3).map(|k| sin(&g, 0.5f64.powi(k))).chain([ScalarField::zeros(&g)]).collect();
    let pts = continuous_dependence_probe(&OperatorSpec::heat(1), &sin(&g, 1.0), &deltas, 0.1, 1e-2, 1e-10).unwrap();
    for pt in &pts[..3] {
        assert!(pt.ratio().unwrap() <= 1.0 + 1e-6);
    }
    assert!(pts[3].output_distance.unwrap() <= 2e-10);
}

#[test]
fn manufactured_solution_is_recovered() {
    let g = circle(16);
    let m = ManufacturedForcing::new(&quasilinear_top(), "sin(x)", 1.0).unwrap();
    let sol = solve_quasilinear(&m.spec(), &m.exact(&g, 0.0), 0.2, 1e-3, 1e-10).unwrap();
    assert!(sol.trajectory.last().max_abs_diff(&m.exact(&g, 0.2)) <= 1e-6);
}
