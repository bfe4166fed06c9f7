//! Batch front end: validated experiment configs in, deterministic reports out.

mod config;

pub use config::{
    load_config, parse_config, validate, ConvergenceConfig, DependConfig, EmbeddingConfig, Experiment,
    ExperimentConfig, FactorConfig, GardingConfig, GnConfig, GridConfig, Kind, Modes, SolveConfig, SpecConfig,
    UniquenessConfig,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{
    energy_monitor, parabolic_norm, verify_embedding, verify_garding, verify_gn_interpolation, EmbeddingParams,
};
use crate::error::{Error, Result};
use crate::expr::{parse, ParseContext};
use crate::jet::build_jet;
use crate::linear::write_atomic;
use crate::operator::StateJet;
use crate::quasilinear::{
    continuous_dependence_probe, default_jet_order, solve_picard, solve_quasilinear_with, ManufacturedForcing,
    SolveOptions,
};
use crate::torus::{axis_name, make_grid, ScalarField};

#[derive(Clone, Debug, Serialize)]
pub struct Criterion {
    pub passed: bool,
    pub detail: String,
}

/// Metrics, tables and per-criterion verdicts of one run.
#[derive(Clone, Debug)]
pub struct Report {
    pub kind: Kind,
    pub config: Value,
    pub metrics: BTreeMap<String, f64>,
    pub series: BTreeMap<String, Vec<f64>>,
    /// Certificates and other structured outputs.
    pub details: BTreeMap<String, Value>,
    /// CSV payloads, written as `<name>.csv`.
    pub tables: BTreeMap<String, String>,
    pub status: BTreeMap<String, Criterion>,
}

impl Report {
    fn new(exp: &Experiment) -> Self {
        let mut config = serde_json::to_value(&exp.config).expect("config serializes");
        config["kind"] = json!(exp.kind);
        config["m"] = json!(exp.config.m.unwrap_or_else(|| default_jet_order(&exp.spec)));
        Report {
            kind: exp.kind,
            config,
            metrics: BTreeMap::new(),
            series: BTreeMap::new(),
            details: BTreeMap::new(),
            tables: BTreeMap::new(),
            status: BTreeMap::new(),
        }
    }

    fn metric(&mut self, name: impl Into<String>, v: f64) {
        self.metrics.insert(name.into(), v);
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.status.insert(name.into(), Criterion { passed, detail: detail.into() });
    }

    /// True iff at least one criterion was evaluated and all passed.
    pub fn passed(&self) -> bool {
        !self.status.is_empty() && self.status.values().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "kind": self.kind,
            "config": self.config,
            "metrics": self.metrics,
            "series": self.series,
            "details": self.details,
            "tables": self.tables.keys().map(|k| format!("{k}.csv")).collect::<Vec<_>>(),
            "status": self.status,
            "passed": self.passed(),
        })
    }

    /// Writes `report.json` and every table into `dir`, each through a temporary file.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, csv) in &self.tables {
            write_atomic(&dir.join(format!("{name}.csv")), csv.as_bytes())?;
        }
        let mut text = serde_json::to_string_pretty(&self.to_json())?;
        text.push('\n');
        write_atomic(&dir.join("report.json"), text.as_bytes())
    }
}

/// Runs one experiment; downstream errors become a failed `run` criterion.
pub fn run(exp: &Experiment) -> Report {
    let mut report = Report::new(exp);
    let outcome = match exp.kind {
        Kind::Solve => run_solve(exp, &mut report),
        Kind::Jet => run_jet(exp, &mut report),
        Kind::Garding => run_garding(exp, &mut report),
        Kind::Gn => run_gn(exp, &mut report),
        Kind::Embedding => run_embedding(exp, &mut report),
        Kind::Convergence => convergence_study(exp, &mut report),
        Kind::Depend => depend_study(exp, &mut report),
        Kind::Uniqueness => uniqueness_study(exp, &mut report),
    };
    if let Err(e) = outcome {
        report.check("run", false, e.to_string());
    }
    report
}

fn solve_options(exp: &Experiment) -> SolveOptions {
    SolveOptions { jet_order: exp.config.m, ..Default::default() }
}

fn run_solve(exp: &Experiment, report: &mut Report) -> Result<()> {
    let c = &exp.config;
    let sol = solve_quasilinear_with(&exp.spec, &exp.initial, c.horizon, c.dt, c.tol, &solve_options(exp))?;
    report.metric("horizon", sol.horizon);
    report.metric("halvings", sol.halvings as f64);
    report.metric("newton_iterations", sol.newton_iterations() as f64);
    report.metric("final_residual", sol.final_residual());
    report.metric("linear_iterations", sol.linear_iterations as f64);
    report.metric("sup_norm", sol.trajectory.sup_norm());
    report.series.insert("newton_history".into(), sol.newton_history.clone());
    report.tables.insert("solution".into(), sol.trajectory.to_csv());
    report.check(
        "converged",
        sol.final_residual() <= c.tol,
        format!("residual {:e} on [0, {}] after {} halvings", sol.final_residual(), sol.horizon, sol.halvings),
    );
    if let Some(src) = &c.solve.exact {
        let exact = parse(src, ParseContext::data(exp.grid.n_dims()))
            .map_err(|e| Error::Config { path: "solve.exact".into(), message: e.to_string() })?;
        let err = sol
            .trajectory
            .times()
            .iter()
            .zip(sol.trajectory.states())
            .map(|(&t, s)| s.max_abs_diff(&ScalarField::from_fn(&exp.grid, |x| exact.eval_at(x, t))))
            .fold(0.0, f64::max);
        report.metric("max_error", err);
        report.check("exact_error", err <= c.solve.max_error, format!("max error {err:e} vs {:e}", c.solve.max_error));
    }
    Ok(())
}

/// CSV with node coordinates and one column per jet coefficient.
pub fn jet_csv(grid: &crate::torus::TorusGrid, coeffs: &[ScalarField]) -> String {
    let mut s = String::from("node");
    for a in 0..grid.n_dims() {
        write!(s, ",{}", axis_name(a)).unwrap();
    }
    for l in 0..coeffs.len() {
        write!(s, ",a{l}").unwrap();
    }
    s.push('\n');
    for j in 0..grid.len() {
        write!(s, "{j}").unwrap();
        for a in 0..grid.n_dims() {
            write!(s, ",{}", grid.coordinate(j, a)).unwrap();
        }
        for c in coeffs {
            write!(s, ",{}", c.values()[j]).unwrap();
        }
        s.push('\n');
    }
    s
}

fn run_jet(exp: &Experiment, report: &mut Report) -> Result<()> {
    let m = exp.config.m.unwrap_or_else(|| default_jet_order(&exp.spec));
    let jet = build_jet(&exp.spec, &exp.initial, m)?;
    for d in jet.diagnostics() {
        report.metric(format!("a{}_sobolev_norm", d.l), d.sobolev_norm);
        report.metric(format!("a{}_tail_fraction", d.l), d.tail_fraction);
    }
    report.tables.insert("jet".into(), jet_csv(&exp.grid, jet.coeffs()));
    report.check(
        "resolved",
        !jet.any_under_resolved(),
        if jet.any_under_resolved() { "some jet coefficient is under-resolved" } else { "all coefficients resolved" },
    );
    Ok(())
}

fn run_garding(exp: &Experiment, report: &mut Report) -> Result<()> {
    let g = &exp.config.garding;
    let state = StateJet::for_spec(&exp.spec, &exp.initial, 0.0);
    let cert = verify_garding(&exp.spec, &state, g.sigma, g.c, g.samples, exp.config.seed);
    report.metric("worst_margin", cert.worst_margin);
    report.metric("samples_tested", cert.samples_tested as f64);
    report.check(
        "certificate",
        cert.is_valid() == g.expect_valid,
        format!(
            "valid = {} (expected {}); worst margin {:e} at {}; first violator {}",
            cert.is_valid(),
            g.expect_valid,
            cert.worst_margin,
            cert.worst_sample,
            cert.first_violator.as_deref().unwrap_or("none")
        ),
    );
    report.details.insert("certificate".into(), serde_json::to_value(&cert)?);
    Ok(())
}

fn run_gn(exp: &Experiment, report: &mut Report) -> Result<()> {
    let g = &exp.config.gn;
    let mut rows = String::from("eps,c_eps,integer_oracle,real_envelope\n");
    for &eps in &g.eps {
        let rep = verify_gn_interpolation(exp.spec.p(), g.r, eps, g.samples, &exp.grid, exp.config.seed)?;
        writeln!(rows, "{eps},{},{},{}", rep.c_eps, rep.integer_oracle, rep.real_envelope).unwrap();
        report.metric(format!("c_eps[{eps}]"), rep.c_eps);
        report.check(
            format!("bracketed[{eps}]"),
            rep.bracketed(),
            format!("{:e} ≤ {:e} ≤ {:e}", rep.integer_oracle, rep.c_eps, rep.real_envelope),
        );
        let gap = (rep.c_eps - rep.integer_oracle).abs();
        report.check(
            format!("integer_oracle[{eps}]"),
            gap <= 0.05 * rep.integer_oracle.abs() + 1e-12,
            format!("relative gap {:e}", gap / rep.integer_oracle.abs().max(1e-300)),
        );
        report.details.insert(format!("gn[{eps}]"), serde_json::to_value(&rep)?);
    }
    report.tables.insert("gn".into(), rows);
    Ok(())
}

fn run_embedding(exp: &Experiment, report: &mut Report) -> Result<()> {
    let e = &exp.config.embedding;
    let params = EmbeddingParams { n: exp.spec.n_dims(), p: exp.spec.p(), m: e.m, r: e.r, ell: e.ell };
    let rep = verify_embedding(params, e.samples, &e.resolutions, exp.config.horizon, exp.config.seed)?;
    for (modes, ratio) in rep.resolutions_tested.iter().zip(&rep.sup_ratios) {
        report.metric(format!("sup_ratio[{modes}]"), *ratio);
    }
    report.metric("max_growth", rep.max_growth);
    report.check("bounded", rep.passes(), format!("largest growth per doubling {:.4}", rep.max_growth));
    report.details.insert("embedding".into(), serde_json::to_value(&rep)?);
    Ok(())
}

/// Least-squares slope of `log e` against `log dt`.
pub fn fitted_order(dts: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Manufactured-solution errors over the configured `dt` and mode lists, with a fitted temporal order.
pub fn convergence_study(exp: &Experiment, report: &mut Report) -> Result<()> {
    let c = &exp.config;
    let cc = &c.convergence;
    if cc.dts.len() < 3 {
        return Err(Error::Config { path: "convergence.dts".into(), message: "need ≥ 3 dt values".into() });
    }
    let q = cc.dts[1] / cc.dts[0];
    if !(q > 0.0 && q != 1.0) || cc.dts.windows(2).any(|w| ((w[1] / w[0]) / q - 1.0).abs() > 1e-9) {
        return Err(Error::Config { path: "convergence.dts".into(), message: "dt values must be geometric".into() });
    }
    let modes = if cc.modes.is_empty() { vec![exp.grid.shape()[0]] } else { cc.modes.clone() };
    let mf = ManufacturedForcing::new(&exp.spec, &cc.exact, cc.rate)?;
    let spec = mf.spec();
    let n = exp.grid.n_dims();
    let period = exp.grid.period().to_vec();
    let cases: Vec<(usize, f64)> = modes.iter().flat_map(|&m| cc.dts.iter().map(move |&dt| (m, dt))).collect();
    let results = cases
        .par_iter()
        .map(|&(m, dt)| {
            let grid = make_grid(n, &vec![m; n], &period)?;
            let sol = solve_quasilinear_with(&spec, &mf.exact(&grid, 0.0), c.horizon, dt, c.tol, &solve_options(exp))?;
            let err = sol
                .trajectory
                .times()
                .iter()
                .zip(sol.trajectory.states())
                .map(|(&t, s)| s.max_abs_diff(&mf.exact(&grid, t)))
                .fold(0.0, f64::max);
            Ok((err, sol.newton_iterations(), sol.horizon))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = String::from("modes,dt,error,newton_iterations,horizon\n");
    for ((m, dt), (err, it, h)) in cases.iter().zip(&results) {
        writeln!(table, "{m},{dt},{err},{it},{h}").unwrap();
    }
    report.tables.insert("convergence".into(), table);
    let k = cc.dts.len();
    for (i, &m) in modes.iter().enumerate() {
        let errors: Vec<f64> = results[i * k..(i + 1) * k].iter().map(|r| r.0).collect();
        let full = results[i * k..(i + 1) * k].iter().all(|r| (r.2 - c.horizon).abs() <= 1e-9 * c.horizon);
        let decreasing = cc.dts.windows(2).zip(errors.windows(2)).all(|(d, e)| (d[1] < d[0]) == (e[1] < e[0]));
        let order = fitted_order(&cc.dts, &errors);
        report.metric(format!("order[{m}]"), order);
        report.series.insert(format!("errors[{m}]"), errors);
        report.check(
            format!("monotone[{m}]"),
            decreasing && full,
            if decreasing && full { "errors decrease with dt".to_string() } else { "order not observed".to_string() },
        );
        report.check(
            format!("order[{m}]"),
            (order - cc.expected_order).abs() <= cc.order_tolerance,
            format!("fitted order {order:.4}, expected {} ± {}", cc.expected_order, cc.order_tolerance),
        );
    }
    Ok(())
}

/// Solves from `u₀ + 2^{−k}δ`, `k = 1..=levels`, and checks the distance ratios.
pub fn depend_study(exp: &Experiment, report: &mut Report) -> Result<()> {
    let c = &exp.config;
    let dc = &c.depend;
    let pert = parse(&dc.perturbation, ParseContext::data(exp.grid.n_dims()))
        .map_err(|e| Error::Config { path: "depend.perturbation".into(), message: e.to_string() })?;
    let delta = ScalarField::from_fn(&exp.grid, |x| pert.eval_at(x, 0.0));
    let deltas: Vec<ScalarField> = (1..=dc.levels).map(|k| delta.scale(0.5f64.powi(k as i32))).collect();
    let points = continuous_dependence_probe(&exp.spec, &exp.initial, &deltas, c.horizon, c.dt, c.tol)?;
    let mut table = String::from("k,input_distance,output_distance,ratio,failure\n");
    for (k, pt) in points.iter().enumerate() {
        let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            table,
            "{},{},{},{},{}",
            k + 1,
            pt.input_distance,
            fmt(pt.output_distance),
            fmt(pt.ratio()),
            pt.failure.as_deref().unwrap_or("").replace(',', ";")
        )
        .unwrap();
    }
    report.tables.insert("depend".into(), table);
    let failures: Vec<&str> = points.iter().filter_map(|p| p.failure.as_deref()).collect();
    report.check("all_solved", failures.is_empty(), failures.join("; "));
    let ratios: Vec<f64> = points.iter().filter_map(|p| p.ratio()).collect();
    let spread = ratios.iter().copied().fold(0.0, f64::max) / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    report.metric("ratio_spread", spread);
    report.series.insert("ratios".into(), ratios);
    report.check("bounded_ratio", spread <= dc.max_ratio_spread, format!("max/min ratio {spread:.4}"));
    let outputs: Vec<f64> = points.iter().filter_map(|p| p.output_distance).collect();
    let monotone = outputs.windows(2).all(|w| w[1] < w[0]);
    report.check("tail_monotone", monotone, "output distances decrease with the perturbation");
    Ok(())
}

/// Newton against damped Picard, with a `dt/2` Newton solve to measure the discretization error.
pub fn uniqueness_study(exp: &Experiment, report: &mut Report) -> Result<()> {
    let c = &exp.config;
    let p = exp.spec.p();
    let opts = solve_options(exp);
    let newton = solve_quasilinear_with(&exp.spec, &exp.initial, c.horizon, c.dt, c.tol, &opts)?;
    let horizon = newton.horizon;
    let picard =
        solve_picard(&exp.spec, &exp.initial, horizon, c.dt, c.tol, c.uniqueness.relaxation, c.uniqueness.max_picard)?;
    let fine = solve_quasilinear_with(&exp.spec, &exp.initial, horizon, c.dt / 2.0, c.tol, &opts)?;
    let discretization = parabolic_norm(&newton.trajectory.difference(&fine.trajectory.subsample(2)?)?, 1, p)?;
    let gap = parabolic_norm(&newton.trajectory.difference(&picard.trajectory)?, 1, p)?;
    let bound = 10.0 * c.tol.max(discretization);
    report.metric("p1_gap", gap);
    report.metric("discretization_error", discretization);
    report.metric("picard_iterations", (picard.residual_history.len() - 1) as f64);
    report.series.insert("newton_history".into(), newton.newton_history.clone());
    report.series.insert("picard_history".into(), picard.residual_history.clone());
    report.check("paths_agree", gap <= bound, format!("P¹ gap {gap:e} vs bound {bound:e}"));

    let energy = energy_monitor(&newton.trajectory, &picard.trajectory, p)?;
    let mut table = String::from("t,energy,rate,mass\n");
    for s in &energy.samples {
        writeln!(table, "{},{},{},{}", s.t, s.energy, s.rate, s.mass).unwrap();
    }
    report.tables.insert("energy".into(), table);
    report.metric("max_energy", energy.max_energy);
    report.metric("c_fit", energy.c_fit);
    let e0 = energy.samples[0].energy;
    let limit = 1e-16 + c.tol;
    report.check(
        "energy_zero",
        e0 == 0.0 && energy.max_energy <= limit && energy.gronwall_holds(),
        format!("E(0) = {e0:e}, max E = {:e} vs {limit:e}", energy.max_energy),
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(text: &str) -> Experiment {
        parse_config(text, None).unwrap()
    }

    #[test]
    fn heat_solve_report() {
        let r = run(&exp(
            r#"{"kind": "solve", "spec": {"p": 1}, "solve": {"exact": "exp(-t)*sin(x)", "max_error": 1e-7}}"#,
        ));
        assert!(r.passed(), "{:?}", r.status);
        assert!(r.metrics["max_error"] <= 1e-7);
        assert!(r.tables["solution"].starts_with("t,node_0"));
    }

    #[test]
    fn biharmonic_garding_report() {
        let r = run(&exp(
            r#"{"kind": "garding", "spec": {"p": 2}, "garding": {"sigma": 0.3333333333333333, "c": 0.3333333333333333}}"#,
        ));
        assert!(r.passed(), "{:?}", r.status);
    }

    #[test]
    fn convergence_needs_three_dts() {
        let r = run(&exp(r#"{"kind": "convergence", "spec": {"p": 1}, "convergence": {"dts": [0.01]}}"#));
        assert!(!r.passed());
        assert!(r.status["run"].detail.contains("need ≥ 3"));
    }

    #[test]
    fn linear_convergence_order() {
        let r = run(&exp(r#"{"kind": "convergence", "spec": {"p": 1}, "horizon": 1.0,
                "convergence": {"dts": [0.04, 0.02, 0.01], "order_tolerance": 0.1}}"#));
        assert!(r.passed(), "{:?}", r.status);
    }

    #[test]
    fn reports_are_deterministic() {
        let e = exp(r#"{"kind": "gn", "spec": {"p": 1}, "grid": {"modes": 32}, "seed": 4}"#);
        let a = serde_json::to_string(&run(&e).to_json()).unwrap();
        let b = serde_json::to_string(&run(&e).to_json()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn write_creates_report_and_tables() {
        let dir = tempfile::tempdir().unwrap();
        let r = run(&exp(r#"{"kind": "jet", "spec": {"p": 1, "lower_order": "u^2"}, "m": 3}"#));
        r.write(dir.path()).unwrap();
        let json: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(json["config"]["m"], 3);
        assert_eq!(json["passed"], true);
        let csv = std::fs::read_to_string(dir.path().join("jet.csv")).unwrap();
        assert!(csv.starts_with("node,x,a0,a1,a2\n"));
        let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 2);
    }
}
