use crate::error::{Error, Result};
use crate::linear::Trajectory;
use crate::torus::{sobolev_seminorm_sq, ScalarField};

/// Finite-difference weights for the `order`-th derivative at `x0` from values at `nodes` (Fornberg's recursion).
pub fn fd_weights(x0: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// `∂_t^j u` at every stored time, second-order accurate.
///
/// Interior points use the centered stencil; near the ends the stencil is
/// shifted inward and lengthened by one point to keep second order.
pub fn time_derivative(traj: &Trajectory, j: usize) -> Result<Vec<ScalarField>> {
    if j == 0 {
        return Ok(traj.states().to_vec());
    }
    let times = traj.times();
    let len = times.len();
    let centered = if j % 2 == 0 { j + 1 } else { j + 2 };
    let one_sided = j + 2;
    if len < one_sided {
        return Err(Error::TimeGrid(format!("∂_t^{j} needs at least {one_sided} time samples, got {len}")));
    }
    let half = centered / 2;
    Ok((0..len)
        .map(|k| {
            let (start, width) = if k >= half && k + half < len {
                (k - half, centered)
            } else if k < half {
                (0, one_sided)
            } else {
                (len - one_sided, one_sided)
            };
            let w = fd_weights(times[k], &times[start..start + width], j);
            let states = &traj.states()[start..start + width];
            states.iter().zip(&w).fold(ScalarField::zeros(traj.grid()), |acc, (s, &wi)| acc.axpy(wi, s))
        })
        .collect())
}

fn trapezoid(dt: f64, values: &[f64]) -> f64 {
    let n = values.len();
    dt * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]))
}

/// Discrete `‖u‖_{P^m}`: `(Σ_{2pj+k ≤ 2pm} ∫₀^T ‖∂_t^j ∇^k u‖² dt)^{1/2}`.
pub fn parabolic_norm(traj: &Trajectory, m: usize, p: usize) -> Result<f64> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be ≥ 1".into()));
    }
    if traj.times().len() < 2 * m + 1 {
        return Err(Error::TimeGrid(format!(
            "P^{m} needs at least {} time samples, got {}",
            2 * m + 1,
            traj.times().len()
        )));
    }
    let mut total = 0.0;
    for j in 0..=m {
        let dj = time_derivative(traj, j)?;
        for k in 0..=2 * p * (m - j) {
            let integrand: Vec<f64> = dj.iter().map(|s| sobolev_seminorm_sq(s, k)).collect();
            total += trapezoid(traj.dt(), &integrand);
        }
    }
    Ok(total.sqrt())
}
