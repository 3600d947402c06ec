//! TOML run configuration. Unknown keys are rejected everywhere; the
//! resolved form (defaults and anchors made explicit) is what a run echoes
//! back as its manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::convex::ConvexConfig;
use crate::error::{Error, Result};
use crate::model::{DriverConfig, ForwardConfig, Problem, TerminalConfig};
use crate::paths::{generate_with, GenerateOptions, PathEnsemble, TimeGrid};
use crate::regression::Basis;
use crate::solver::{Mode, SchemeConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub convex: ConvexConfig,
    pub driver: DriverConfig,
    pub terminal: TerminalConfig,
    #[serde(default)]
    pub forward: ForwardConfig,
    pub grid: GridConfig,
    pub mc: McConfig,
    pub scheme: SchemeBlock,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub study: StudyConfig,
    /// Not echoed in manifests, so a re-run into another directory
    /// reproduces them byte for byte.
    #[serde(default, skip_serializing)]
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(rename = "M")]
    pub paths: usize,
    #[serde(default = "one_usize")]
    pub k: usize,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    #[default]
    Penalized,
    Limit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeBlock {
    #[serde(default)]
    pub mode: ModeName,
    pub epsilon: f64,
    #[serde(default)]
    pub basis: Basis,
    #[serde(default)]
    pub picard_iters: usize,
    #[serde(default = "two")]
    pub a: f64,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp_radius: Option<f64>,
    /// ε levels for schedules: explicit list, or `eps0·2^{−j}` for
    /// `levels` values. Defaults to four halvings of `epsilon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<EpsilonSchedule>,
}

fn two() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    /// Checks run by `solve` after the solution is written.
    #[serde(default)]
    pub names: Vec<String>,
    /// Terminal shifts of the uniqueness sweep.
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    /// Sample count of the sampled property checks.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Second regularization parameter of the Yosida check.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Relative slack of the appendix premise.
    #[serde(default = "default_premise_tol")]
    pub premise_tol: f64,
    #[serde(default = "default_subdiff_tol")]
    pub subdiff_tol: f64,
}

fn default_deltas() -> Vec<f64> {
    vec![0.0, 0.01, 0.02, 0.04, 0.08]
}
fn default_samples() -> usize {
    10_000
}
fn default_delta() -> f64 {
    0.05
}
fn default_premise_tol() -> f64 {
    1e-9
}
fn default_subdiff_tol() -> f64 {
    1e-9
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            deltas: default_deltas(),
            samples: default_samples(),
            delta: default_delta(),
            premise_tol: default_premise_tol(),
            subdiff_tol: default_subdiff_tol(),
        }
    }
}

pub const CHECK_NAMES: [&str; 8] = ["yosida", "assumptions", "prop1", "uniq", "tv", "penetration", "appendix", "subdiff"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Truncation levels; `inf` means no truncation.
    #[serde(default = "default_n_values")]
    pub n_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(default)]
    pub gate: bool,
    /// Grid levels of the refinement study (N, 2N, ...).
    #[serde(default = "default_refine_levels")]
    pub refine_levels: usize,
    /// Lattice steps of the oracle comparison.
    #[serde(default = "default_tree_steps")]
    pub tree_steps: usize,
}

fn default_n_values() -> Vec<f64> {
    vec![2.0, 4.0, 8.0, f64::INFINITY]
}
fn default_refine_levels() -> usize {
    3
}
fn default_tree_steps() -> usize {
    2000
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n_values: default_n_values(),
            r0: None,
            gate: false,
            refine_levels: default_refine_levels(),
            tree_steps: default_tree_steps(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

/// Everything a command needs, built once from a validated config.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: RunConfig,
    pub problem: Problem,
    pub grid: TimeGrid,
    pub scheme: SchemeConfig,
    pub mode: Mode,
}

impl Resolved {
    pub fn ensemble(&self) -> Result<PathEnsemble> {
        let mc = &self.config.mc;
        generate_with(self.grid, &self.problem.forward, mc.k, GenerateOptions { paths: mc.paths, seed: mc.seed, antithetic: mc.antithetic })
    }

    /// The ε levels of the schedule block.
    pub fn epsilons(&self) -> Result<Vec<f64>> {
        let s = self.config.scheme.schedule.clone().unwrap_or(EpsilonSchedule { eps0: None, levels: None, values: None });
        let eps = match (s.values, s.eps0, s.levels) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(Error::config("scheme.schedule: give either values or eps0/levels, not both"))
            }
            (Some(v), None, None) => v,
            (None, e0, lv) => {
                let e0 = e0.unwrap_or(self.scheme.epsilon);
                let lv = lv.unwrap_or(4);
                if lv < 2 {
                    return Err(Error::config("scheme.schedule.levels must be at least 2"));
                }
                (0..lv).map(|j| e0 * 0.5_f64.powi(j as i32)).collect()
            }
        };
        if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::config("scheme.schedule values must be positive and finite"));
        }
        Ok(eps)
    }
}

impl RunConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        Ok(toml::from_str(src)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&src)
    }

    pub fn resolve(&self) -> Result<Resolved> {
        if !(self.grid.horizon > 0.0 && self.grid.horizon.is_finite()) {
            return Err(Error::config("grid.T must be positive and finite"));
        }
        if self.grid.steps == 0 {
            return Err(Error::config("grid.N must be at least 1"));
        }
        if self.mc.paths == 0 {
            return Err(Error::config("mc.M must be at least 1"));
        }
        if self.mc.k == 0 {
            return Err(Error::config("mc.k must be at least 1"));
        }
        if self.checks.samples == 0 {
            return Err(Error::config("checks.samples must be at least 1"));
        }
        if !(self.checks.delta > 0.0) {
            return Err(Error::config("checks.delta must be positive"));
        }
        for name in &self.checks.names {
            if !CHECK_NAMES.contains(&name.as_str()) {
                return Err(Error::config(format!("checks.names: unknown check \"{name}\" (one of {})", CHECK_NAMES.join(", "))));
            }
        }
        if self.study.tree_steps == 0 {
            return Err(Error::config("study.tree_steps must be at least 1"));
        }
        let grid = TimeGrid::new(self.grid.horizon, self.grid.steps)?;
        let phi = self.convex.build()?;
        let m = phi.dim();
        let k = self.mc.k;
        let driver = self.driver.build(m, k)?;
        let terminal = self.terminal.build(m)?;
        let forward = self.forward.build(k)?;
        let problem = Problem::new(phi, driver, terminal, forward, self.grid.horizon)?;
        let s = &self.scheme;
        let scheme = SchemeConfig {
            epsilon: s.epsilon,
            basis: s.basis,
            picard_iters: s.picard_iters,
            a: s.a,
            p: s.p,
            clamp_radius: s.clamp_radius,
        };
        scheme.validate()?;
        let mode = match s.mode {
            ModeName::Penalized => Mode::Penalized { epsilon: s.epsilon },
            ModeName::Limit => Mode::Limit,
        };
        let mut config = self.clone();
        config.convex = self.convex.resolved(&problem.phi);
        config.terminal.shift = Some(problem.terminal.shift.clone());
        config.forward.x0 = Some(problem.forward.x0.clone());
        let out = Resolved { config, problem, grid, scheme, mode };
        out.epsilons()?;
        Ok(out)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// SHA-256 of the manifest text.
pub fn config_hash(manifest: &str) -> String {
    hex::encode(Sha256::digest(manifest.as_bytes()))
}
