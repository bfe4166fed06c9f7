use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse, ParseContext};
use crate::operator::{apply_cutoff, check_ellipticity, jet_size, ExprForcing, FactorMatrix, OperatorSpec};
use crate::torus::{make_grid, ScalarField, TorusGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Solve,
    Jet,
    Garding,
    Gn,
    Embedding,
    Convergence,
    Depend,
    Uniqueness,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Solve => "solve",
            Kind::Jet => "jet",
            Kind::Garding => "garding",
            Kind::Gn => "gn",
            Kind::Embedding => "embedding",
            Kind::Convergence => "convergence",
            Kind::Depend => "depend",
            Kind::Uniqueness => "uniqueness",
        }
    }
}

/// A factor `E_ℓ`: one expression for `s·I`, or a full symmetric matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FactorConfig {
    Scalar(String),
    Matrix(Vec<Vec<String>>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    #[serde(default = "one")]
    pub n_dims: usize,
    pub p: usize,
    /// `p` factors; omitted means `E_ℓ = I`.
    #[serde(default)]
    pub factors: Vec<FactorConfig>,
    #[serde(default = "zero_expr")]
    pub lower_order: String,
    #[serde(default)]
    pub forcing: Option<String>,
    /// Jet bound for the cutoff modification; omitted means no cutoff.
    #[serde(default)]
    pub cutoff: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Modes {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_modes")]
    pub modes: Modes,
    /// Per-axis periods; `2π` when omitted.
    #[serde(default)]
    pub period: Option<Vec<f64>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { modes: default_modes(), period: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    /// Exact solution in `(x, t)` for an error metric.
    #[serde(default)]
    pub exact: Option<String>,
    #[serde(default = "default_max_error")]
    pub max_error: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { exact: None, max_error: default_max_error() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GardingConfig {
    #[serde(default = "half")]
    pub sigma: f64,
    #[serde(default = "half")]
    pub c: f64,
    #[serde(default = "thousand")]
    pub samples: usize,
    /// Expected verdict; a deliberately inflated `σ` sets this to `false`.
    #[serde(default = "yes")]
    pub expect_valid: bool,
}

impl Default for GardingConfig {
    fn default() -> Self {
        GardingConfig { sigma: 0.5, c: 0.5, samples: 1000, expect_valid: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnConfig {
    #[serde(default = "one")]
    pub r: usize,
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "two_hundred")]
    pub samples: usize,
}

impl Default for GnConfig {
    fn default() -> Self {
        GnConfig { r: 1, eps: default_eps(), samples: 200 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    #[serde(default = "two")]
    pub m: usize,
    #[serde(default)]
    pub r: usize,
    #[serde(default)]
    pub ell: usize,
    #[serde(default = "hundred")]
    pub samples: usize,
    #[serde(default = "default_resolutions")]
    pub resolutions: Vec<usize>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig { m: 2, r: 0, ell: 0, samples: 100, resolutions: default_resolutions() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// At least three, geometric.
    #[serde(default)]
    pub dts: Vec<f64>,
    /// Spatial resolutions; the grid's when empty.
    #[serde(default)]
    pub modes: Vec<usize>,
    /// Spatial profile `g` of `u* = e^{−λt} g(x)`.
    #[serde(default = "sin_x")]
    pub exact: String,
    #[serde(default = "one_f")]
    pub rate: f64,
    #[serde(default = "two_f")]
    pub expected_order: f64,
    #[serde(default = "default_order_tolerance")]
    pub order_tolerance: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            dts: Vec::new(),
            modes: Vec::new(),
            exact: sin_x(),
            rate: 1.0,
            expected_order: 2.0,
            order_tolerance: default_order_tolerance(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependConfig {
    #[serde(default = "sin_x")]
    pub perturbation: String,
    /// Perturbations `2^{−k}·δ` for `k = 1..=levels`.
    #[serde(default = "eight")]
    pub levels: usize,
    #[serde(default = "three")]
    pub max_ratio_spread: f64,
}

impl Default for DependConfig {
    fn default() -> Self {
        DependConfig { perturbation: sin_x(), levels: 8, max_ratio_spread: 3.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniquenessConfig {
    #[serde(default = "half")]
    pub relaxation: f64,
    #[serde(default = "two_hundred")]
    pub max_picard: usize,
}

impl Default for UniquenessConfig {
    fn default() -> Self {
        UniquenessConfig { relaxation: 0.5, max_picard: 200 }
    }
}

/// One experiment, as written in a config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: Option<Kind>,
    pub spec: SpecConfig,
    #[serde(default)]
    pub grid: GridConfig,
    /// Initial datum as an expression in the coordinates.
    #[serde(default = "sin_x")]
    pub initial: String,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Jet order; `max(2, min_order(n, p))` when omitted.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub garding: GardingConfig,
    #[serde(default)]
    pub gn: GnConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub depend: DependConfig,
    #[serde(default)]
    pub uniqueness: UniquenessConfig,
}

fn one() -> usize {
    1
}
fn two() -> usize {
    2
}
fn eight() -> usize {
    8
}
fn hundred() -> usize {
    100
}
fn two_hundred() -> usize {
    200
}
fn thousand() -> usize {
    1000
}
fn half() -> f64 {
    0.5
}
fn one_f() -> f64 {
    1.0
}
fn two_f() -> f64 {
    2.0
}
fn three() -> f64 {
    3.0
}
fn yes() -> bool {
    true
}
fn zero_expr() -> String {
    "0".into()
}
fn sin_x() -> String {
    "sin(x)".into()
}
fn default_modes() -> Modes {
    Modes::Uniform(16)
}
fn default_eps() -> Vec<f64> {
    vec![1.0, 0.1, 0.01]
}
fn default_resolutions() -> Vec<usize> {
    vec![16, 32, 64]
}
fn default_order_tolerance() -> f64 {
    0.15
}
fn default_max_error() -> f64 {
    1e-6
}
fn default_horizon() -> f64 {
    0.1
}
fn default_dt() -> f64 {
    1e-3
}
fn default_tol() -> f64 {
    1e-10
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// A validated config with its operator, grid and initial datum built.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub kind: Kind,
    pub spec: OperatorSpec,
    pub grid: TorusGrid,
    pub initial: ScalarField,
    /// Certified lower bound of the factors' eigenvalues over the sampled jet ball.
    pub ellipticity: f64,
}

fn at(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::Config { path: path.to_string(), message: other.to_string() },
    }
}

fn invalid(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.to_string(), message: message.into() }
}

/// Reads and validates a config file; `kind` overrides or fills in the file's kind.
pub fn load_config(path: &Path, kind: Option<Kind>) -> Result<Experiment> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, kind)
}

/// Parses a config document; see [`load_config`].
pub fn parse_config(text: &str, kind: Option<Kind>) -> Result<Experiment> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Config { path: e.path().to_string(), message: e.inner().to_string() })?;
    validate(config, kind)
}

/// Builds the operator, grid and datum, and pre-checks ellipticity.
pub fn validate(config: ExperimentConfig, kind: Option<Kind>) -> Result<Experiment> {
    let kind = match (kind, config.kind) {
        (Some(a), Some(b)) if a != b => {
            return Err(invalid("kind", format!("config is `{}` but `{}` was requested", b.name(), a.name())))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(invalid("kind", "missing experiment kind")),
    };
    let sc = &config.spec;
    if sc.p == 0 {
        return Err(invalid("spec.p", "p must be ≥ 1"));
    }
    if !(1..=3).contains(&sc.n_dims) {
        return Err(invalid("spec.n_dims", "n_dims must be 1, 2 or 3"));
    }
    let (n, p) = (sc.n_dims, sc.p);
    let ctx = ParseContext::coefficient(n, p);
    let factors = if sc.factors.is_empty() {
        vec![FactorMatrix::identity(n); p]
    } else {
        if sc.factors.len() != p {
            return Err(invalid("spec.factors", format!("expected {p} factors, got {}", sc.factors.len())));
        }
        sc.factors
            .iter()
            .enumerate()
            .map(|(l, f)| {
                let path = format!("spec.factors[{l}]");
                match f {
                    FactorConfig::Scalar(s) => Ok(FactorMatrix::scalar(n, parse(s, ctx).map_err(at(&path))?)),
                    FactorConfig::Matrix(rows) => {
                        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                            return Err(invalid(&path, format!("factor must be {n}×{n}")));
                        }
                        let entries = rows
                            .iter()
                            .enumerate()
                            .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, s)| (i, j, s)))
                            .map(|(i, j, s)| parse(s, ctx).map_err(at(&format!("{path}[{i}][{j}]"))))
                            .collect::<Result<Vec<_>>>()?;
                        FactorMatrix::new(n, entries).map_err(at(&path))
                    }
                }
            })
            .collect::<Result<Vec<_>>>()?
    };
    let lower = parse(&sc.lower_order, ctx).map_err(at("spec.lower_order"))?;
    let mut spec = OperatorSpec::new(n, p, factors, lower).map_err(at("spec"))?;
    if let Some(f) = &sc.forcing {
        spec = spec.with_forcing(std::sync::Arc::new(ExprForcing::parse(f, n).map_err(at("spec.forcing"))?));
    }

    let modes = match &config.grid.modes {
        Modes::Uniform(m) => vec![*m; n],
        Modes::PerAxis(v) => v.clone(),
    };
    let period = config.grid.period.clone().unwrap_or_else(|| vec![2.0 * PI; n]);
    let grid = make_grid(n, &modes, &period).map_err(at("grid"))?;
    let init = parse(&config.initial, ParseContext::data(n)).map_err(at("initial"))?;
    let initial = ScalarField::from_fn(&grid, |x| init.eval_at(x, 0.0));

    for (name, v) in [("horizon", config.horizon), ("dt", config.dt), ("tol", config.tol)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(name, format!("{name} must be positive, got {v}")));
        }
    }
    if config.m == Some(0) {
        return Err(invalid("m", "jet order must be ≥ 1"));
    }

    if let Some(bound) = sc.cutoff {
        spec = apply_cutoff(&spec, bound, &initial).map_err(at("spec.cutoff"))?;
    }
    let reach =
        if spec.cutoff_radius().is_finite() { spec.cutoff_radius() } else { 2.0 * jet_size(&spec, &initial) + 1.0 };
    let ellipticity = check_ellipticity(&spec, reach, 256, config.horizon, config.seed).map_err(at("spec.factors"))?;
    if spec.ellipticity_floor() == 0.0 {
        spec = spec.with_ellipticity_floor(ellipticity);
    }
    Ok(Experiment { config, kind, spec, grid, initial, ellipticity })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<Experiment> {
        parse_config(text, None)
    }

    #[test]
    fn minimal_heat_config_gets_defaults() {
        let exp = load(r#"{"kind": "solve", "spec": {"p": 1}}"#).unwrap();
        assert_eq!(exp.config.dt, 1e-3);
        assert_eq!(exp.config.tol, 1e-10);
        assert_eq!(exp.config.m, None);
        assert_eq!(exp.grid.shape(), &[16]);
        assert!(exp.spec.is_linear());
        assert_eq!(exp.ellipticity, 1.0);
    }

    #[test]
    fn p_zero_rejected() {
        let err = load(r#"{"kind": "solve", "spec": {"p": 0}}"#).unwrap_err();
        assert!(
            matches!(&err, Error::Config { path, message } if path == "spec.p" && message.contains("p must be ≥ 1"))
        );
    }

    #[test]
    fn top_order_slot_rejected_with_path() {
        let err = load(r#"{"kind": "solve", "spec": {"p": 1, "factors": ["1 + u_xx"]}}"#).unwrap_err();
        match err {
            Error::Config { path, message } => {
                assert_eq!(path, "spec.factors[0]");
                assert!(message.contains("coefficients may read only up to ∇^1u"), "{message}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn schema_violations_carry_field_paths() {
        let err = load(r#"{"kind": "solve", "spec": {"p": 1}, "grid": {"modes": "many"}}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path == "grid.modes"), "{err}");
        let err = load(r#"{"kind": "solve", "spec": {"p": 1, "colour": 3}}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path.starts_with("spec")), "{err}");
    }

    #[test]
    fn non_elliptic_spec_rejected() {
        let err = load(r#"{"kind": "solve", "spec": {"p": 1, "factors": ["u"]}}"#).unwrap_err();
        assert!(
            matches!(&err, Error::Config { path, message } if path == "spec.factors" && message.contains("not locally elliptic")),
            "{err}"
        );
    }

    #[test]
    fn kind_conflicts_and_gaps() {
        assert!(parse_config(r#"{"spec": {"p": 1}}"#, None).is_err());
        assert_eq!(parse_config(r#"{"spec": {"p": 1}}"#, Some(Kind::Jet)).unwrap().kind, Kind::Jet);
        assert!(parse_config(r#"{"kind": "gn", "spec": {"p": 1}}"#, Some(Kind::Jet)).is_err());
    }

    #[test]
    fn matrix_factors_and_cutoff() {
        let exp = load(
            r#"{"kind": "solve", "spec": {"n_dims": 2, "p": 1, "factors": [[["1 + u^2", "0"], ["0", "1"]]],
                "cutoff": 3.0}, "initial": "sin(x)*cos(y)", "grid": {"modes": [8, 8]}}"#,
        )
        .unwrap();
        assert_eq!(exp.spec.cutoff_radius(), 6.0);
        assert!(exp.spec.ellipticity_floor() > 0.0);
    }
}
