//! Experiment files.
//!
//! An experiment is a TOML document with `domain`, `equation`, `network`,
//! `training` and optional `oracle`, `homogenization` and `output` tables.
//! Field expressions use the language of [`crate::expr`].

use crate::expr::{parse_expression, Expr, Var, Vars};
use crate::geometry::{validate_configuration, PerforatedDomain, Perforation, Rect, Vec2};
use crate::network::NetworkConfig;
use crate::oracle::OracleConfig;
use crate::sde::{check_timestep, Fields, StepConfig, WalkMode};
use crate::trainer::{Problem, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

/// Configurations shipped with the crate, by file stem.
pub const BUNDLED: &[(&str, &str)] = &[
    ("exp1", include_str!("../configs/exp1.toml")),
    ("exp1_desk", include_str!("../configs/exp1_desk.toml")),
    ("exp2", include_str!("../configs/exp2.toml")),
    ("exp3", include_str!("../configs/exp3.toml")),
    ("exp3_desk", include_str!("../configs/exp3_desk.toml")),
    ("constant", include_str!("../configs/constant.toml")),
    ("harmonic", include_str!("../configs/harmonic.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("config is not valid TOML for an experiment: {0}")]
    Syntax(String),
    #[error("config has {} problem(s): {}", .0.len(), .0.join("; "))]
    Invalid(Vec<String>),
}

impl ConfigError {
    pub fn problems(&self) -> Vec<String> {
        match self {
            ConfigError::Invalid(v) => v.clone(),
            other => vec![other.to_string()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub domain: DomainSection,
    pub equation: EquationSection,
    pub network: NetworkConfig,
    pub training: TrainingSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub homogenization: HomogenizationSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_lo() -> Vec2 {
    [-0.5, -0.5]
}

fn default_hi() -> Vec2 {
    [0.5, 0.5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    #[serde(default = "default_lo")]
    pub lo: Vec2,
    #[serde(default = "default_hi")]
    pub hi: Vec2,
    #[serde(default)]
    pub perforations: Vec<Perforation>,
    /// Periodic array of equal disks, added to `perforations`.
    #[serde(default)]
    pub lattice: Option<LatticeSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub count: [usize; 2],
    pub radius: f64,
}

fn zero_drift() -> [String; 2] {
    ["0".into(), "0".into()]
}

/// `½Δu + V·∇u = G` in the domain, `u = g` on the outer boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationSection {
    #[serde(default = "zero_drift")]
    pub drift: [String; 2],
    pub source: String,
    pub dirichlet: String,
}

fn three() -> usize {
    3
}

fn beta_default() -> f64 {
    0.99
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub n_collocation: usize,
    pub n_walkers: usize,
    pub dt_micro: f64,
    pub steps_per_macro: usize,
    #[serde(default = "three")]
    pub inner_steps: usize,
    pub iterations: u64,
    pub alpha0: f64,
    pub gamma: f64,
    #[serde(default = "beta_default")]
    pub beta1: f64,
    #[serde(default = "beta_default")]
    pub beta2: f64,
    #[serde(default)]
    pub mode: WalkMode,
    #[serde(default)]
    pub validate_every: u64,
    #[serde(default)]
    pub checkpoint_every: u64,
    /// Start from a network that outputs this constant.
    #[serde(default)]
    pub init_constant: Option<f64>,
}

fn oracle_walkers() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "oracle_walkers")]
    pub n_walkers: usize,
    /// Defaults to the training micro step.
    #[serde(default)]
    pub dt_micro: Option<f64>,
    #[serde(default)]
    pub max_steps: Option<u64>,
    #[serde(default)]
    pub probes: Option<Vec<Vec2>>,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            n_walkers: oracle_walkers(),
            dt_micro: None,
            max_steps: None,
            probes: None,
        }
    }
}

fn cell_resolution() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogenizationSection {
    #[serde(default = "cell_resolution")]
    pub cell_resolution: usize,
}

impl Default for HomogenizationSection {
    fn default() -> Self {
        Self {
            cell_resolution: cell_resolution(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default)]
    pub log_wall_time: bool,
}

/// Drift and source given by parsed expressions.
#[derive(Debug, Clone)]
pub struct ExprFields {
    drift: [Expr; 2],
    source: Expr,
    constant_source: Option<f64>,
    has_drift: bool,
    uses_u: bool,
}

impl ExprFields {
    pub fn new(drift: [Expr; 2], source: Expr) -> Self {
        let has_drift = !drift.iter().all(|e| e.constant_value() == Some(0.0));
        let uses_u = source.depends_on(Var::U) || drift.iter().any(|e| e.depends_on(Var::U));
        Self {
            constant_source: source.constant_value(),
            drift,
            source,
            has_drift,
            uses_u,
        }
    }

    pub fn source_expr(&self) -> &Expr {
        &self.source
    }
}

// Evaluation failures surface as NaN, which the divergence guard and the
// oracle statistics then report.
impl Fields for ExprFields {
    fn drift(&self, x: Vec2, u: f64) -> Vec2 {
        if !self.has_drift {
            return [0.0, 0.0];
        }
        let v = Vars::at(x, u);
        [
            self.drift[0].eval(&v).unwrap_or(f64::NAN),
            self.drift[1].eval(&v).unwrap_or(f64::NAN),
        ]
    }

    fn source(&self, x: Vec2, u: f64) -> f64 {
        match self.constant_source {
            Some(c) => c,
            None => self.source.eval(&Vars::at(x, u)).unwrap_or(f64::NAN),
        }
    }

    fn uses_solution(&self) -> bool {
        self.uses_u
    }

    fn has_drift(&self) -> bool {
        self.has_drift
    }
}

/// A fully validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub domain: PerforatedDomain,
    pub fields: Arc<ExprFields>,
    pub dirichlet: Expr,
}

impl Experiment {
    pub fn problem(&self) -> Problem {
        let g = self.dirichlet.clone();
        let fields: Arc<dyn Fields> = self.fields.clone();
        Problem {
            domain: self.domain.clone(),
            fields,
            dirichlet: Arc::new(move |x: Vec2| g.eval(&Vars::at(x, 0.0)).unwrap_or(f64::NAN)),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.config.training;
        TrainConfig {
            n_collocation: t.n_collocation,
            n_walkers: t.n_walkers,
            step: StepConfig::new(t.dt_micro, t.steps_per_macro, t.mode),
            inner_steps: t.inner_steps,
            iterations: t.iterations,
            alpha0: t.alpha0,
            gamma: t.gamma,
            beta1: t.beta1,
            beta2: t.beta2,
            seed: self.config.seed,
            validate_every: t.validate_every,
            checkpoint_every: t.checkpoint_every,
        }
    }

    pub fn oracle_config(&self) -> OracleConfig {
        let o = &self.config.oracle;
        let mut c = OracleConfig::new(o.n_walkers, o.dt_micro.unwrap_or(self.config.training.dt_micro), self.config.seed);
        if let Some(m) = o.max_steps {
            c.max_steps = m;
        }
        c
    }

    /// Overrides the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.config.seed = seed;
        self
    }
}

pub fn parse_config(path: &Path) -> Result<Experiment, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Parses and validates, reporting every problem found.
pub fn parse_config_str(text: &str) -> Result<Experiment, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let mut errors = Vec::new();

    let rect = Rect::new(config.domain.lo, config.domain.hi);
    let mut perfs = config.domain.perforations.clone();
    if let Some(l) = config.domain.lattice {
        if l.count[0] == 0 || l.count[1] == 0 {
            errors.push("domain.lattice.count must be positive".to_string());
        } else {
            perfs.extend_from_slice(PerforatedDomain::periodic_lattice(rect, l.count, l.radius).perforations());
        }
    }
    let domain = PerforatedDomain::new(rect, perfs);
    for v in validate_configuration(&domain) {
        errors.push(format!("domain: {v}"));
    }

    let t = &config.training;
    if t.n_collocation == 0 || t.n_walkers == 0 || t.inner_steps == 0 || t.steps_per_macro == 0 {
        errors.push("training: n_collocation, n_walkers, inner_steps and steps_per_macro must be at least 1".into());
    }
    if !(t.dt_micro > 0.0 && t.dt_micro.is_finite()) {
        errors.push("training: dt_micro must be positive".into());
    } else if let Some(r) = domain.min_radius().filter(|r| *r > 0.0) {
        let c = check_timestep(t.dt_micro, r);
        if !c.ok {
            errors.push(format!(
                "timestep check failed: mean step {:.4e} exceeds 0.2 x min radius {r}",
                c.mean_step
            ));
        }
    }
    if let Some(dt) = config.oracle.dt_micro {
        if let Some(r) = domain.min_radius().filter(|r| *r > 0.0) {
            if !check_timestep(dt, r).ok {
                errors.push(format!("oracle: timestep check failed for dt_micro {dt}"));
            }
        }
    }
    if !(t.alpha0 > 0.0) || !(t.gamma > 0.0 && t.gamma <= 1.0) {
        errors.push("training: need alpha0 > 0 and gamma in (0, 1]".into());
    }
    if !(0.0..1.0).contains(&t.beta1) || !(0.0..1.0).contains(&t.beta2) {
        errors.push("training: Adam betas must lie in [0, 1)".into());
    }
    if config.oracle.n_walkers < 2 {
        errors.push("oracle: n_walkers must be at least 2".into());
    }
    if config.homogenization.cell_resolution < 32 {
        errors.push("homogenization: cell_resolution must be at least 32".into());
    }
    if let Err(e) = config.network.validate() {
        errors.push(format!("network: {e}"));
    }

    let center = rect.center();
    let mut parse = |label: &str, src: &str| -> Option<Expr> {
        match parse_expression(src) {
            Ok(e) => {
                match e.eval(&Vars::at(center, 0.0)) {
                    Ok(v) if v.is_finite() => {}
                    Ok(_) => errors.push(format!("equation.{label}: not finite at the domain center")),
                    Err(err) => errors.push(format!("equation.{label}: {err} at the domain center")),
                }
                Some(e)
            }
            Err(err) => {
                errors.push(format!("equation.{label}: {err}"));
                None
            }
        }
    };
    let eq = &config.equation;
    let d1 = parse("drift[0]", &eq.drift[0]);
    let d2 = parse("drift[1]", &eq.drift[1]);
    let source = parse("source", &eq.source);
    let dirichlet = parse("dirichlet", &eq.dirichlet);
    if let Some(g) = &dirichlet {
        if g.depends_on(Var::U) {
            errors.push("equation.dirichlet: boundary data cannot depend on u".into());
        }
    }
    if let Some(probes) = &config.oracle.probes {
        for p in probes {
            if !domain.is_interior(*p) {
                errors.push(format!("oracle: probe ({}, {}) is not an interior point", p[0], p[1]));
            }
        }
    }

    if !errors.is_empty() {
        return Err(ConfigError::Invalid(errors));
    }
    let (Some(d1), Some(d2), Some(source), Some(dirichlet)) = (d1, d2, source, dirichlet) else {
        unreachable!("parse failures are recorded as errors");
    };
    Ok(Experiment {
        config,
        domain,
        fields: Arc::new(ExprFields::new([d1, d2], source)),
        dirichlet,
    })
}
