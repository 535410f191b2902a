//! TOML run configuration with field-level validation.
//!
//! ```toml
//! version = 1
//! [grid]
//! dim = 1
//! n = 256
//! [params]
//! mu = 0.1
//! kappa = 0.01
//! [solver]
//! dt = 1e-4
//! t_end = 1.0
//! formulation = "effective"
//! [initial]
//! name = "smooth_bump"
//! amplitude = 0.1
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{VacuumBoundConfig, ENERGY_TOL, LP_GAIN_EXPONENTS, LP_GAIN_TOL};
use crate::fields::{Grid, GridSpec};
use crate::model::PhysParams;
use crate::presets::Preset;
use crate::solver::SolverConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config: {}", format_issues(.0))]
    Invalid(Vec<FieldIssue>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldIssue {
    pub field: String,
    pub message: String,
}

fn format_issues(issues: &[FieldIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("{}: {}", i.field, i.message))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSetConfig {
    pub alpha: f64,
    pub k: f64,
    /// Exponent `q` with `1/r + N/(2q) = 1/2`.
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub energy_tol: f64,
    pub lp_gain: Vec<f64>,
    pub lp_gain_tol: f64,
    pub level_set: Option<LevelSetConfig>,
    pub vacuum_bound: Option<VacuumBoundConfig>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            energy_tol: ENERGY_TOL,
            lp_gain: LP_GAIN_EXPONENTS.to_vec(),
            lp_gain_tol: LP_GAIN_TOL,
            level_set: None,
            vacuum_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub csv: String,
    pub json: String,
    /// Times at which checkpoints are written as `checkpoint_<step>.json`.
    pub checkpoint_at: Vec<f64>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            csv: "diagnostics.csv".into(),
            json: "summary.json".into(),
            checkpoint_at: Vec::new(),
        }
    }
}

impl OutputConfig {
    pub fn csv_path(&self) -> PathBuf {
        self.dir.join(&self.csv)
    }

    pub fn json_path(&self) -> PathBuf {
        self.dir.join(&self.json)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub grid: GridSpec,
    pub params: PhysParams,
    pub solver: SolverConfig,
    pub initial: Preset,
    pub diagnostics: DiagnosticsConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            grid: GridSpec {
                dim: 1,
                n: 256,
                length: 2.0 * std::f64::consts::PI,
            },
            params: PhysParams::default(),
            solver: SolverConfig::default(),
            initial: Preset::default(),
            diagnostics: DiagnosticsConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        Grid::from_spec(self.grid).map_err(|e| {
            ConfigError::Invalid(vec![FieldIssue {
                field: "grid".into(),
                message: e.to_string(),
            }])
        })
    }

    /// Every problem found, each tagged with its dotted field path.
    pub fn issues(&self) -> Vec<FieldIssue> {
        let mut out = Vec::new();
        fn push(out: &mut Vec<FieldIssue>, field: &str, message: String) {
            out.push(FieldIssue {
                field: field.into(),
                message,
            })
        }
        if self.version != CONFIG_VERSION {
            push(
                &mut out,
                "version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", self.version),
            );
        }
        let grid = match Grid::from_spec(self.grid) {
            Ok(g) => Some(g),
            Err(e) => {
                push(&mut out, "grid", e.to_string());
                None
            }
        };
        let p = &self.params;
        let positive = [
            ("params.mu", p.mu),
            ("params.gamma", p.gamma),
            ("params.rho_bar", p.rho_bar),
        ];
        for (f, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                push(&mut out, f, format!("must be > 0, got {v}"));
            }
        }
        for (f, v) in [("params.kappa", p.kappa), ("params.a", p.a)] {
            if !(v >= 0.0 && v.is_finite()) {
                push(&mut out, f, format!("must be >= 0, got {v}"));
            }
        }
        let s = &self.solver;
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            push(&mut out, "solver.dt", format!("must be > 0, got {}", s.dt));
        }
        if !(s.t_end >= 0.0 && s.t_end.is_finite()) {
            push(&mut out, "solver.t_end", format!("must be >= 0, got {}", s.t_end));
        }
        if !(s.vacuum_floor > 0.0) {
            push(&mut out, "solver.vacuum_floor", format!("must be > 0, got {}", s.vacuum_floor));
        }
        if s.diag_stride == 0 {
            push(&mut out, "solver.diag_stride", "must be >= 1".into());
        }
        if !(s.c_stab > 0.0) {
            push(&mut out, "solver.c_stab", format!("must be > 0, got {}", s.c_stab));
        }
        if let (Some(g), true) = (&grid, out.is_empty()) {
            // remaining checks need a valid grid and parameters
            if let Err(e) = p.validate() {
                push(&mut out, "params", e.to_string());
            } else if s.dt > s.dt_ceiling(g, p) {
                push(
                    &mut out,
                    "solver.dt",
                    format!("{} exceeds the stability ceiling {:e}", s.dt, s.dt_ceiling(g, p)),
                );
            } else if let Err(e) = s.validate(g, p) {
                push(&mut out, "solver", e.to_string());
            }
        }
        if let Err(e) = self.initial.validate() {
            push(&mut out, "initial", e);
        }
        let d = &self.diagnostics;
        if !(d.energy_tol >= 0.0) {
            push(&mut out, "diagnostics.energy_tol", format!("must be >= 0, got {}", d.energy_tol));
        }
        if !(d.lp_gain_tol >= 0.0) {
            push(&mut out, "diagnostics.lp_gain_tol", format!("must be >= 0, got {}", d.lp_gain_tol));
        }
        if let Some(p) = d.lp_gain.iter().find(|&&p| !(p >= 2.0 && p.is_finite())) {
            push(&mut out, "diagnostics.lp_gain", format!("exponents must be >= 2, got {p}"));
        }
        if let Some(ls) = &d.level_set {
            if !(ls.k >= 1.0) {
                push(&mut out, "diagnostics.level_set.k", format!("must be >= 1, got {}", ls.k));
            }
            if !(ls.alpha > 0.0) {
                push(&mut out, "diagnostics.level_set.alpha", format!("must be > 0, got {}", ls.alpha));
            }
            if !(ls.q > self.grid.dim as f64) {
                push(&mut out, "diagnostics.level_set.q", format!("must exceed N, got {}", ls.q));
            }
        }
        if let Some(vb) = &d.vacuum_bound {
            if !(vb.t1 > 0.0) {
                push(&mut out, "diagnostics.vacuum_bound.t1", format!("must be > 0, got {}", vb.t1));
            }
            if !(self.params.rho_bar > 1.0) {
                push(
                    &mut out,
                    "diagnostics.vacuum_bound",
                    format!("needs params.rho_bar > 1, got {}", self.params.rho_bar),
                );
            }
        }
        if let Some(t) = self.output.checkpoint_at.iter().find(|t| !(**t >= 0.0)) {
            push(&mut out, "output.checkpoint_at", format!("times must be >= 0, got {t}"));
        }
        if self.output.csv.is_empty() || self.output.json.is_empty() {
            push(&mut out, "output", "file names must be non-empty".into());
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }

    /// Whether the run must keep state samples for level-set or vacuum reports.
    pub fn needs_samples(&self) -> bool {
        self.diagnostics.level_set.is_some() || self.diagnostics.vacuum_bound.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn minimal_config() {
        let c = RunConfig::from_toml_str(
            "version = 1\n[grid]\ndim = 1\nn = 64\n[solver]\nt_end = 0.5\n[initial]\nname = \"near_vacuum\"\ndelta = 0.2\n",
        )
        .unwrap();
        assert_eq!(c.grid.n, 64);
        assert_eq!(c.solver.t_end, 0.5);
        assert_eq!(c.initial.delta, 0.2);
    }

    #[test]
    fn field_level_messages() {
        let err = RunConfig::from_toml_str("[params]\nmu = -1.0\n[solver]\ndt = 0.0\n").unwrap_err();
        let ConfigError::Invalid(issues) = err else {
            panic!("{err:?}")
        };
        let fields: Vec<&str> = issues.iter().map(|i| i.field.as_str()).collect();
        assert!(fields.contains(&"params.mu"));
        assert!(fields.contains(&"solver.dt"));
    }

    #[test]
    fn dt_above_ceiling_rejected() {
        let err = RunConfig::from_toml_str("[solver]\ndt = 0.01\n").unwrap_err();
        assert!(err.to_string().contains("solver.dt"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            RunConfig::from_toml_str("[solver]\nfoo = 1\n"),
            Err(ConfigError::Parse(_))
        ));
    }
}
