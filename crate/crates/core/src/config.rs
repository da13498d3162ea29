//! Declarative run configuration.
//!
//! A config is a strict JSON document: matrices as nested arrays and every
//! function (`f`, `κ`, `g`, `ν`, `d`) chosen from a small registry of
//! parameterised families. Unknown fields are rejected.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::system::{EtaChoice, FtsQuery, NonlinearFn, ScalarFn, SystemSpec, VectorFn};
use crate::simulator::DEFAULT_STEPS;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub system: SystemConfig,
    pub query: QueryConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub beta: f64,
    pub t0: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(rename = "A0")]
    pub a0: Vec<Vec<f64>>,
    #[serde(rename = "A1")]
    pub a1: Vec<Vec<f64>>,
    #[serde(rename = "A2")]
    pub a2: Vec<Vec<f64>>,
    pub nonlinearity: NonlinearityConfig,
    pub kappa: KappaConfig,
    pub delay: DelayConfig,
    pub history: HistoryConfig,
    pub disturbance: DisturbanceConfig,
    pub rho: f64,
}

/// Which argument of `f(t, x, x_delayed, d)` a term reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    X,
    XDelayed,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinTerm {
    pub source: Source,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityConfig {
    Zero {},
    /// `fᵢ = sin(scale · source[index])`, one term per state component.
    SinComponentwise { scale: f64, terms: Vec<SinTerm> },
    /// `f = state · x + delayed · x_delayed`.
    Linear {
        state: Vec<Vec<f64>>,
        delayed: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KappaConfig {
    Constant { value: f64 },
    /// `κ(t) = offset + slope · (t - t0)`
    Affine { offset: f64, slope: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayConfig {
    Zero {},
    Constant { value: f64 },
    /// `g(s) = amplitude · cos²(s) sin²(s)`, capped at `amplitude / 4`.
    #[serde(rename = "cos2sin2_delay")]
    Cos2Sin2 { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum HistoryConfig {
    Zero {},
    Constant { value: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceConfig {
    Zero {},
    Constant { value: Vec<f64> },
    /// `d(t) = amplitude · (sin ωt, cos ωt)`; two-dimensional, `‖d‖ = amplitude`.
    Rotating { amplitude: f64, omega: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaSearchConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaConfig {
    Fixed(f64),
    Search { search: EtaSearchConfig },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryConfig {
    pub eps1: f64,
    pub eps2: f64,
    pub eta: EtaConfig,
}

/// `"auto"` or an explicit step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepConfig {
    Value(f64),
    Named(String),
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig::Named("auto".into())
    }
}

impl StepConfig {
    /// Resolve against the horizon; `auto` is `(T - t0) / 2048`.
    pub fn resolve(&self, spec: &SystemSpec) -> Result<f64, ConfigError> {
        match self {
            StepConfig::Value(h) if *h > 0.0 && h.is_finite() => Ok(*h),
            StepConfig::Value(h) => Err(field_err("solver.step", format!("must be positive, got {h}"))),
            StepConfig::Named(s) if s == "auto" => Ok((spec.t_end - spec.t0) / DEFAULT_STEPS as f64),
            StepConfig::Named(s) => Err(field_err("solver.step", format!("expected a number or \"auto\", got {s:?}"))),
        }
    }
}

fn default_corrector_iters() -> usize {
    1
}
fn default_samples() -> usize {
    32
}
fn default_seed() -> u64 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub step: StepConfig,
    #[serde(default = "default_corrector_iters")]
    pub corrector_iters: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step: StepConfig::default(),
            corrector_iters: default_corrector_iters(),
            samples: default_samples(),
            seed: default_seed(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Build and fully validate the system and query.
    pub fn build(&self) -> Result<(SystemSpec, FtsQuery), ConfigError> {
        let spec = self.system.build()?;
        let q = &self.query;
        let eta = match q.eta {
            EtaConfig::Fixed(v) => EtaChoice::Fixed(v),
            EtaConfig::Search { search } => EtaChoice::Search {
                lo: search.min,
                hi: search.max,
                points: search.points,
            },
        };
        let query = FtsQuery::for_spec(&spec, q.eps1, q.eps2, eta);
        query.validate_for(&spec).map_err(|e| field_err("query", e.to_string()))?;
        if self.solver.corrector_iters == 0 {
            return Err(field_err("solver.corrector_iters", "must be >= 1"));
        }
        if self.solver.samples == 0 {
            return Err(field_err("solver.samples", "must be >= 1"));
        }
        self.solver.step.resolve(&spec)?;
        Ok((spec, query))
    }
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ConfigError> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(field_err(field, "matrix must have at least one row"));
    }
    let ncols = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(field_err(
                format!("{field}[{i}]"),
                format!("row has {} entries, expected {ncols}", row.len()),
            ));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(field_err(format!("{field}[{i}][{j}]"), "entry must be finite"));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl SystemConfig {
    pub fn build(&self) -> Result<SystemSpec, ConfigError> {
        let a0 = matrix("system.A0", &self.a0)?;
        let a1 = matrix("system.A1", &self.a1)?;
        let a2 = matrix("system.A2", &self.a2)?;
        let n = a0.nrows();
        let p = a2.ncols();
        let t0 = self.t0;

        let f: NonlinearFn = match &self.nonlinearity {
            NonlinearityConfig::Zero {} => Arc::new(move |_, _, _, _| DVector::zeros(n)),
            NonlinearityConfig::SinComponentwise { scale, terms } => {
                if terms.len() != n {
                    return Err(field_err(
                        "system.nonlinearity.terms",
                        format!("need one term per state component ({n}), got {}", terms.len()),
                    ));
                }
                for (i, term) in terms.iter().enumerate() {
                    let len = if term.source == Source::D { p } else { n };
                    if term.index >= len {
                        return Err(field_err(
                            format!("system.nonlinearity.terms[{i}].index"),
                            format!("index {} out of range for a vector of length {len}", term.index),
                        ));
                    }
                }
                let (scale, terms) = (*scale, terms.clone());
                Arc::new(move |_, x, xd, d| {
                    DVector::from_fn(n, |i, _| {
                        let src = match terms[i].source {
                            Source::X => x,
                            Source::XDelayed => xd,
                            Source::D => d,
                        };
                        (scale * src[terms[i].index]).sin()
                    })
                })
            }
            NonlinearityConfig::Linear { state, delayed } => {
                let ks = matrix("system.nonlinearity.state", state)?;
                let kd = matrix("system.nonlinearity.delayed", delayed)?;
                for (name, k) in [("state", &ks), ("delayed", &kd)] {
                    if k.shape() != (n, n) {
                        return Err(field_err(
                            format!("system.nonlinearity.{name}"),
                            format!("must be {n}x{n}"),
                        ));
                    }
                }
                Arc::new(move |_, x, xd, _| &ks * x + &kd * xd)
            }
        };

        let kappa: ScalarFn = match self.kappa {
            KappaConfig::Constant { value } => Arc::new(move |_| value),
            KappaConfig::Affine { offset, slope } => Arc::new(move |t| offset + slope * (t - t0)),
        };

        let (delay, g_max): (ScalarFn, f64) = match self.delay {
            DelayConfig::Zero {} => (Arc::new(|_| 0.0), 0.0),
            DelayConfig::Constant { value } => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(field_err("system.delay.value", "must be finite and >= 0"));
                }
                (Arc::new(move |_| value), value)
            }
            DelayConfig::Cos2Sin2 { amplitude } => {
                if !(amplitude >= 0.0 && amplitude.is_finite()) {
                    return Err(field_err("system.delay.amplitude", "must be finite and >= 0"));
                }
                (
                    Arc::new(move |s: f64| amplitude * s.cos().powi(2) * s.sin().powi(2)),
                    amplitude / 4.0,
                )
            }
        };

        let history: VectorFn = match &self.history {
            HistoryConfig::Zero {} => Arc::new(move |_| DVector::zeros(n)),
            HistoryConfig::Constant { value } => {
                if value.len() != n {
                    return Err(field_err(
                        "system.history.value",
                        format!("expected {n} components, got {}", value.len()),
                    ));
                }
                let v = DVector::from_column_slice(value);
                Arc::new(move |_| v.clone())
            }
        };

        let disturbance: VectorFn = match &self.disturbance {
            DisturbanceConfig::Zero {} => Arc::new(move |_| DVector::zeros(p)),
            DisturbanceConfig::Constant { value } => {
                if value.len() != p {
                    return Err(field_err(
                        "system.disturbance.value",
                        format!("expected {p} components, got {}", value.len()),
                    ));
                }
                let v = DVector::from_column_slice(value);
                Arc::new(move |_| v.clone())
            }
            DisturbanceConfig::Rotating { amplitude, omega } => {
                if p != 2 {
                    return Err(field_err(
                        "system.disturbance",
                        format!("rotating disturbance is two-dimensional, A2 has {p} columns"),
                    ));
                }
                let (a, w) = (*amplitude, *omega);
                Arc::new(move |t: f64| DVector::from_vec(vec![a * (w * t).sin(), a * (w * t).cos()]))
            }
        };

        let spec = SystemSpec::linear(self.beta, self.t0, self.t_end, a0, a1, a2)
            .with_nonlinearity(f, kappa)
            .with_delay(delay, g_max)
            .with_history(history)
            .with_disturbance(disturbance, self.rho);
        spec.validate().map_err(|e| field_err("system", e.to_string()))?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "system": {
            "beta": 0.5, "t0": 0.0, "T": 1.0,
            "A0": [[-1.0]], "A1": [[0.0]], "A2": [[1.0]],
            "nonlinearity": {"family": "zero"},
            "kappa": {"family": "constant", "value": 0.0},
            "delay": {"family": "zero"},
            "history": {"family": "constant", "value": [0.05]},
            "disturbance": {"family": "zero"},
            "rho": 0.0
        },
        "query": {"eps1": 0.1, "eps2": 1.0, "eta": 1.0}
    }"#;

    #[test]
    fn minimal_config_builds() {
        let cfg = RunConfig::from_json_str(MINIMAL).unwrap();
        let (spec, query) = cfg.build().unwrap();
        assert_eq!(spec.dim(), 1);
        assert_eq!(query.eta, EtaChoice::Fixed(1.0));
        assert_eq!(cfg.solver.samples, 32);
        assert_eq!(cfg.solver.step.resolve(&spec).unwrap(), 1.0 / 2048.0);
    }

    #[test]
    fn unknown_fields_are_rejected_with_position() {
        let text = MINIMAL.replace("\"rho\": 0.0", "\"rho\": 0.0, \"mystery\": 1");
        match RunConfig::from_json_str(&text) {
            Err(ConfigError::Syntax { line, message, .. }) => {
                assert_eq!(line, 10);
                assert!(message.contains("mystery"));
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
        let text = MINIMAL.replace("\"family\": \"zero\"}", "\"family\": \"zero\", \"x\": 1}");
        assert!(RunConfig::from_json_str(&text).is_err());
    }

    #[test]
    fn ragged_matrix_is_addressed() {
        let text = MINIMAL.replace("\"A0\": [[-1.0]]", "\"A0\": [[-1.0], [1.0, 2.0]]");
        let err = RunConfig::from_json_str(&text).unwrap().build().unwrap_err();
        assert!(err.to_string().starts_with("system.A0[1]"), "{err}");
    }

    #[test]
    fn eta_search_directive_parses() {
        let text = MINIMAL.replace("\"eta\": 1.0", "\"eta\": {\"search\": {\"min\": 0.1, \"max\": 10, \"points\": 32}}");
        let (_, q) = RunConfig::from_json_str(&text).unwrap().build().unwrap();
        assert_eq!(q.eta, EtaChoice::Search { lo: 0.1, hi: 10.0, points: 32 });
    }

    #[test]
    fn bad_step_name_is_rejected() {
        let text = MINIMAL.replace("\"eta\": 1.0}", "\"eta\": 1.0}, \"solver\": {\"step\": \"fast\"}");
        let err = RunConfig::from_json_str(&text).unwrap().build().unwrap_err();
        assert!(err.to_string().starts_with("solver.step"));
    }

    #[test]
    fn invalid_query_is_addressed() {
        let text = MINIMAL.replace("\"eps2\": 1.0", "\"eps2\": 0.01");
        let err = RunConfig::from_json_str(&text).unwrap().build().unwrap_err();
        assert!(err.to_string().starts_with("query"));
    }

    #[test]
    fn serialisation_round_trips() {
        let cfg = RunConfig::from_json_str(MINIMAL).unwrap();
        let again = RunConfig::from_json_str(&cfg.to_json_string()).unwrap();
        assert_eq!(cfg, again);
    }
}
