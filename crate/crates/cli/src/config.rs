//! Run configuration: a JSON document validated in full before anything is
//! computed. Unknown keys are rejected at every level.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use neklab_core::experiments::{desk_family, DeskParams, HorizonRule, SystemFamily};
use neklab_core::normalform::{LemmaId, RecipeInputs};
use neklab_core::{parse_polynomial, Ambient, Polynomial, SystemSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    pub experiment: Experiment,
    #[serde(default)]
    pub numeric: Numeric,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_seed() -> u64 {
    42
}

/// Either the built-in desk family or an explicit polynomial system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Desk {
        #[serde(rename = "N")]
        big_n: usize,
        #[serde(default)]
        kappa: f64,
        #[serde(default)]
        params: DeskParams,
    },
    Custom(CustomSystem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSystem {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub alpha: Vec<f64>,
    /// Rows of `A`.
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "I0", default, skip_serializing_if = "Option::is_none")]
    pub i0: Option<Vec<f64>>,
    pub f: String,
    /// κ-proportional part of the perturbation, `f_κ = f + κ·coupling`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<String>,
    #[serde(rename = "Lambda", default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<String>,
    #[serde(default)]
    pub kappa: f64,
    #[serde(rename = "M")]
    pub m_const: f64,
    #[serde(rename = "C_Lambda", default = "one")]
    pub c_lambda: f64,
    #[serde(rename = "C0", default = "one")]
    pub c0: f64,
}

fn one() -> f64 {
    1.0
}

/// A phase point given explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub z: Vec<f64>,
    #[serde(default)]
    pub zeta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Dirichlet {
        omega: Vec<f64>,
        #[serde(rename = "Q")]
        big_q: u64,
    },
    Normalform {
        omega0: Vec<f64>,
        #[serde(rename = "T")]
        t_period: f64,
        #[serde(rename = "I0", default, skip_serializing_if = "Option::is_none")]
        i0: Option<Vec<f64>>,
        radii: [f64; 3],
        #[serde(default = "one_usize")]
        steps: usize,
    },
    Drift {
        theta: f64,
        a: f64,
        /// Initial point; a random phase at `|I(0)|₁ = θ²` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        init: Option<PointConfig>,
        #[serde(default = "default_tau")]
        tau: f64,
        #[serde(rename = "C_A", default, skip_serializing_if = "Option::is_none")]
        c_a: Option<f64>,
    },
    Constrained {
        kappa_grid: Vec<f64>,
        init: PointConfig,
    },
    Smallkappa {
        theta_grid: Vec<f64>,
        a: f64,
        #[serde(rename = "N_grid", default, skip_serializing_if = "Option::is_none")]
        n_grid: Option<Vec<usize>>,
        #[serde(default = "default_rule")]
        horizon_rule: HorizonRule,
        #[serde(default = "default_phases")]
        phases: usize,
        #[serde(default = "default_tau")]
        tau: f64,
        #[serde(rename = "C_A", default, skip_serializing_if = "Option::is_none")]
        c_a: Option<f64>,
    },
    Variant {
        theta: f64,
        a: f64,
        kappa_grid: Vec<f64>,
        #[serde(default = "default_rule")]
        horizon_rule: HorizonRule,
        #[serde(default = "default_phases")]
        phases: usize,
        #[serde(default = "default_tau")]
        tau: f64,
        #[serde(rename = "C_A", default, skip_serializing_if = "Option::is_none")]
        c_a: Option<f64>,
    },
    Check {
        lemma: LemmaId,
        /// Explicit scalars of the lemma.
        #[serde(default)]
        inputs: BTreeMap<String, f64>,
        /// Fills the scalars from the recipe instead (explicit inputs win).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        recipe: Option<RecipeInputs>,
        /// θ values at which to re-run the recipe-based check.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        theta_scan: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        integrals: Vec<String>,
    },
}

fn one_usize() -> usize {
    1
}

fn default_tau() -> f64 {
    std::f64::consts::PI
}

fn default_rule() -> HorizonRule {
    HorizonRule::Fixed(1000.0)
}

fn default_phases() -> usize {
    neklab_core::experiments::DEFAULT_PHASES
}

impl Experiment {
    /// The subcommand that runs this experiment.
    pub fn subcommand(&self) -> &'static str {
        match self {
            Experiment::Dirichlet { .. } => "dirichlet",
            Experiment::Normalform { .. } => "normal-form",
            Experiment::Drift { .. } => "drift",
            Experiment::Constrained { .. } => "constrained",
            Experiment::Smallkappa { .. } => "small-kappa",
            Experiment::Variant { .. } => "variant",
            Experiment::Check { .. } => "check-conditions",
        }
    }

    fn needs_system(&self) -> bool {
        !matches!(self, Experiment::Dirichlet { .. } | Experiment::Check { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numeric {
    /// Default `(2π/|ω|∞)/64` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_cap")]
    pub horizon_cap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree_cap: Option<usize>,
    /// Quadrature nodes for the averaging cross-check; none when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
}

fn default_horizon() -> f64 {
    1000.0
}

fn default_cap() -> f64 {
    neklab_core::experiments::DEFAULT_HORIZON_CAP
}

impl Default for Numeric {
    fn default() -> Self {
        Self {
            dt: None,
            horizon: default_horizon(),
            horizon_cap: default_cap(),
            degree_cap: None,
            nodes: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_format")]
    pub format: Format,
}

fn default_dir() -> PathBuf {
    PathBuf::from("neklab-out")
}

fn default_format() -> Format {
    Format::Csv
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            format: default_format(),
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let errors = validate(&cfg);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(errors))
    }
}

/// The canonical text of a configuration, with every default filled in.
pub fn canonical(cfg: &RunConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("configs always serialize")
}

fn validate(cfg: &RunConfig) -> Vec<String> {
    let mut errs = Vec::new();
    let mut positive = |name: &str, v: f64| {
        if !(v > 0.0 && v.is_finite()) {
            errs.push(format!("{name} must be > 0 (got {v})"));
        }
    };
    if let Some(dt) = cfg.numeric.dt {
        positive("numeric.dt", dt);
    }
    positive("numeric.horizon_cap", cfg.numeric.horizon_cap);
    if !(cfg.numeric.horizon >= 0.0) {
        errs.push(format!("numeric.horizon must be ≥ 0 (got {})", cfg.numeric.horizon));
    }
    if cfg.workers == Some(0) {
        errs.push("workers must be ≥ 1".into());
    }
    match &cfg.system {
        Some(sys) => {
            if let Err(e) = build_system(sys) {
                errs.push(format!("system: {e}"));
            }
        }
        None if cfg.experiment.needs_system() => {
            errs.push(format!("system is required for `{}`", cfg.experiment.subcommand()))
        }
        None => {}
    }
    match &cfg.experiment {
        Experiment::Dirichlet { omega, big_q } => {
            if omega.is_empty() {
                errs.push("experiment.omega must be non-empty".into());
            }
            if *big_q == 0 {
                errs.push("experiment.Q must be ≥ 1".into());
            }
        }
        Experiment::Normalform {
            t_period, radii, steps, ..
        } => {
            if !(*t_period > 0.0) {
                errs.push("experiment.T must be > 0".into());
            }
            if radii.iter().any(|r| !(*r > 0.0)) {
                errs.push("experiment.radii must be positive".into());
            }
            if *steps == 0 {
                errs.push("experiment.steps must be ≥ 1".into());
            }
        }
        Experiment::Drift { theta, .. } => {
            if !(*theta > 0.0 && *theta < 1.0) {
                errs.push(format!("experiment.theta must lie in (0, 1) (got {theta})"));
            }
        }
        Experiment::Constrained { kappa_grid, .. } | Experiment::Variant { kappa_grid, .. } => {
            if kappa_grid.is_empty() || kappa_grid.iter().any(|k| !(*k > 0.0)) {
                errs.push("experiment.kappa_grid must be non-empty and positive".into());
            }
        }
        Experiment::Smallkappa { theta_grid, phases, .. } => {
            if theta_grid.len() < 2 {
                errs.push("experiment.theta_grid needs at least two values for the slope fit".into());
            }
            if *phases == 0 {
                errs.push("experiment.phases must be ≥ 1".into());
            }
        }
        Experiment::Check { lemma, inputs, recipe, .. } => {
            if recipe.is_none() {
                let missing: Vec<&str> =
                    lemma.required().iter().copied().filter(|k| !inputs.contains_key(*k)).collect();
                if !missing.is_empty() {
                    errs.push(format!("experiment.inputs is missing {}", missing.join(", ")));
                }
            }
        }
    }
    if let Some(kappa) = system_kappa(cfg.system.as_ref()) {
        if !(kappa >= 0.0) {
            errs.push("kappa must be ≥ 0".into());
        }
    }
    errs
}

fn system_kappa(sys: Option<&SystemConfig>) -> Option<f64> {
    match sys? {
        SystemConfig::Desk { kappa, .. } => Some(*kappa),
        SystemConfig::Custom(c) => Some(c.kappa),
    }
}

/// The configured system as a κ-family.
pub fn build_family(sys: &SystemConfig) -> neklab_core::Result<SystemFamily> {
    match sys {
        SystemConfig::Desk { big_n, params, .. } => desk_family(*big_n, *params),
        SystemConfig::Custom(c) => {
            let amb = Ambient::new(c.n, c.big_n);
            let rows = c.a.len();
            let cols = c.a.first().map_or(0, Vec::len);
            if c.a.iter().any(|r| r.len() != cols) {
                return Err(neklab_core::Error::Domain("A must be rectangular".into()));
            }
            let a = DMatrix::from_fn(rows, cols, |i, j| c.a[i][j]);
            let f = parse_polynomial(&c.f, amb)?;
            let lambda = match &c.lambda {
                Some(t) => parse_polynomial(t, amb)?,
                None => Polynomial::zero(amb),
            };
            let i0 = c.i0.clone().unwrap_or_else(|| vec![0.0; c.n]);
            let base = SystemSpec::new(amb, c.alpha.clone(), a, i0, f, lambda, 0.0, c.m_const, c.c_lambda, c.c0)?;
            match &c.coupling {
                Some(t) => SystemFamily::new(base, parse_polynomial(t, amb)?),
                None => Ok(SystemFamily::constant(base)),
            }
        }
    }
}

/// The configured system at its configured coupling.
pub fn build_system(sys: &SystemConfig) -> neklab_core::Result<SystemSpec> {
    let kappa = system_kappa(Some(sys)).unwrap_or(0.0);
    if !(kappa >= 0.0) {
        return Err(neklab_core::Error::Domain("kappa must be ≥ 0".into()));
    }
    Ok(build_family(sys)?.at_kappa(kappa))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{ "experiment": { "kind": "dirichlet", "omega": [1.4142135623730951, 2.0], "Q": 10 } }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.numeric, Numeric::default());
        assert_eq!(cfg.output.format, Format::Csv);
        assert!(cfg.workers.is_none());
    }

    #[test]
    fn negative_kappa_is_rejected() {
        let text = r#"{
            "system": { "desk": { "N": 1, "kappa": -1 } },
            "experiment": { "kind": "drift", "theta": 0.2, "a": 0.125 }
        }"#;
        match parse_config(text) {
            Err(ConfigError::Invalid(v)) => assert!(v.iter().any(|e| e.contains("kappa must be ≥ 0")), "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{ "experiment": { "kind": "dirichlet", "omega": [1.5], "Q": 3, "extra": 1 } }"#;
        assert!(matches!(parse_config(text), Err(ConfigError::Syntax { .. })));
        let text = r#"{ "experiment": { "kind": "dirichlet", "omega": [1.5], "Q": 3 }, "colour": "red" }"#;
        assert!(matches!(parse_config(text), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_config("{\n  \"experiment\": [\n") {
            Err(ConfigError::Syntax { line, .. }) => assert!(line >= 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config(""), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn all_errors_are_listed() {
        let text = r#"{
            "experiment": { "kind": "normalform", "omega0": [1.0], "T": -1, "radii": [0, 1, 1], "steps": 0 },
            "numeric": { "dt": -0.1 }
        }"#;
        match parse_config(text) {
            Err(ConfigError::Invalid(v)) => assert_eq!(v.len(), 5, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn canonical_form_round_trips() {
        let texts = [
            MINIMAL.to_string(),
            r#"{
                "system": { "custom": { "n": 1, "N": 1, "alpha": [1.0], "A": [[0.5]], "f": "x1^3 + xi1 x1",
                            "Lambda": "0.5 * xi1^2 + 0.5 * eta1^2", "M": 2 } },
                "experiment": { "kind": "constrained", "kappa_grid": [10, 100], "init": { "z": [0.1, 0.2], "zeta": [1, 0] } },
                "output": { "dir": "runs/x", "format": "json" },
                "workers": 2
            }"#
            .to_string(),
            r#"{
                "system": { "desk": { "N": 4 } },
                "experiment": { "kind": "smallkappa", "theta_grid": [0.3, 0.2], "a": 0.125, "horizon_rule": "recipe" }
            }"#
            .to_string(),
            r#"{ "experiment": { "kind": "check", "lemma": "L7.5",
                 "recipe": { "theta": 0.2, "a": 0.125, "n": 2, "norm_a": 1, "C0": 1, "M": 1, "C_Lambda": 1, "tau": 3.2, "C_A": 1 } } }"#
                .to_string(),
        ];
        for t in texts {
            let cfg = parse_config(&t).unwrap();
            let c1 = canonical(&cfg);
            let again = parse_config(&c1).unwrap();
            assert_eq!(again, cfg);
            assert_eq!(canonical(&again), c1);
        }
    }
}
