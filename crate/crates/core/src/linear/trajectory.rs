use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::torus::{ScalarField, TorusGrid};

/// Per-step Krylov statistics.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SolverStats {
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
}

impl SolverStats {
    pub fn total_iterations(&self) -> usize {
        self.iterations.iter().sum()
    }

    pub fn max_iterations(&self) -> usize {
        self.iterations.iter().copied().max().unwrap_or(0)
    }
}

/// Uniformly time-sampled solution `t_k = k·dt`, `k = 0, …, N`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    grid: TorusGrid,
    times: Vec<f64>,
    states: Vec<ScalarField>,
    dt: f64,
    pub stats: SolverStats,
}

pub(crate) fn uniform_times(n_steps: usize, dt: f64) -> Vec<f64> {
    (0..=n_steps).map(|k| k as f64 * dt).collect()
}

/// Number of steps `T/dt`, required to be an integer within 1e−9.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) || !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::TimeGrid(format!("need positive finite T and dt, got T={horizon}, dt={dt}")));
    }
    let ratio = horizon / dt;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * n.max(1.0) || n < 1.0 {
        return Err(Error::TimeGrid(format!("T/dt = {ratio} is not an integer")));
    }
    Ok(n as usize)
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<ScalarField>) -> Result<Self> {
        if times.len() != states.len() || times.len() < 2 {
            return Err(Error::TimeGrid("a trajectory needs matching times and states, at least two".into()));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(Error::TimeGrid("times must increase".into()));
        }
        for (k, &t) in times.iter().enumerate() {
            if (t - times[0] - k as f64 * dt).abs() > 1e-12 * (1.0 + t.abs()) {
                return Err(Error::TimeGrid(format!("time {t} at index {k} breaks uniform spacing")));
            }
        }
        let grid = states[0].grid().clone();
        if states.iter().any(|s| s.grid() != &grid) {
            return Err(Error::GridMismatch("trajectory states on different grids".into()));
        }
        Ok(Trajectory { grid, times, states, dt, stats: SolverStats::default() })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[ScalarField] {
        &self.states
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn initial(&self) -> &ScalarField {
        &self.states[0]
    }

    pub fn last(&self) -> &ScalarField {
        self.states.last().unwrap()
    }

    pub fn sup_norm(&self) -> f64 {
        self.states.iter().map(ScalarField::max_abs).fold(0.0, f64::max)
    }

    /// `self − other` on a common time grid.
    pub fn difference(&self, other: &Trajectory) -> Result<Trajectory> {
        self.check_compatible(other)?;
        let states = self.states.iter().zip(&other.states).map(|(a, b)| a.sub(b)).collect();
        Trajectory::new(self.times.clone(), states)
    }

    pub fn axpy(&self, s: f64, other: &Trajectory) -> Result<Trajectory> {
        self.check_compatible(other)?;
        let states = self.states.iter().zip(&other.states).map(|(a, b)| a.axpy(s, b)).collect();
        Trajectory::new(self.times.clone(), states)
    }

    pub fn max_abs_diff(&self, other: &Trajectory) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self.states.iter().zip(&other.states).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max))
    }

    pub fn check_compatible(&self, other: &Trajectory) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("trajectories on different grids".into()));
        }
        if self.times.len() != other.times.len() || (self.dt - other.dt).abs() > 1e-12 * self.dt {
            return Err(Error::TimeGrid("trajectories on different time grids".into()));
        }
        Ok(())
    }

    /// Keeps every `stride`-th sample.
    pub fn subsample(&self, stride: usize) -> Result<Trajectory> {
        if stride == 0 || self.n_steps() % stride != 0 {
            return Err(Error::TimeGrid(format!("stride {stride} does not divide {} steps", self.n_steps())));
        }
        let times = self.times.iter().step_by(stride).copied().collect();
        let states = self.states.iter().step_by(stride).cloned().collect();
        Trajectory::new(times, states)
    }

    /// CSV with header `t,node_0,…` and one row per time.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for j in 0..self.grid.len() {
            write!(s, ",node_{j}").unwrap();
        }
        s.push('\n');
        for (t, u) in self.times.iter().zip(&self.states) {
            write!(s, "{t}").unwrap();
            for v in u.values() {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn sidecar(&self, extra: serde_json::Value) -> serde_json::Value {
        json!({
            "grid": { "shape": self.grid.shape(), "period": self.grid.period() },
            "dt": self.dt,
            "horizon": self.horizon(),
            "n_steps": self.n_steps(),
            "stats": self.stats,
            "extra": extra,
        })
    }

    /// Writes `<stem>.csv` and `<stem>.json` atomically into `dir`.
    pub fn export(&self, dir: &Path, stem: &str, extra: serde_json::Value) -> Result<()> {
        write_atomic(&dir.join(format!("{stem}.csv")), self.to_csv().as_bytes())?;
        let json = serde_json::to_string_pretty(&self.sidecar(extra))?;
        write_atomic(&dir.join(format!("{stem}.json")), json.as_bytes())
    }
}

/// Writes through a temporary file in the same directory and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
