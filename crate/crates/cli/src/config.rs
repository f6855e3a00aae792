//! Experiment configuration files.
//!
//! A config is a JSON object with one `experiment` entry, optional `seed`
//! and `tol`, and optional `output` settings. Models, sources and distortion
//! tables may be given inline or as paths relative to the config file; they
//! are read at load time and stored inline, which is the canonical form.

use std::path::{Path, PathBuf};

use nardf::finite::KernelForm;
use nardf::gauss::{DecoderGain, Design};
use nardf::model::{DistortionSpec, FiniteMarkovSource, StateSpaceModel};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Where results go. Not part of the config hash.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    /// Simulation trace CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Waterfill(WaterfillExperiment),
    FiniteRdf(FiniteRdfExperiment),
    GaussRealize(GaussRealizeExperiment),
    Simulate(SimulateExperiment),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Waterfill(_) => "waterfill",
            Experiment::FiniteRdf(_) => "finite-rdf",
            Experiment::GaussRealize(_) => "gauss-realize",
            Experiment::Simulate(_) => "simulate",
        }
    }

    /// Output format used when none is requested.
    pub fn default_format(&self) -> Format {
        match self {
            Experiment::GaussRealize(_) => Format::Json,
            Experiment::Waterfill(w) if matches!(w.distortion, OneOrMany::One(_)) => Format::Json,
            _ => Format::Csv,
        }
    }
}

/// A single value or a list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Inline JSON object or a path to a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reference {
    Path(String),
    Inline(Value),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaterfillExperiment {
    pub eigenvalues: Vec<f64>,
    pub distortion: OneOrMany,
}

/// Multiplier grid: a list, or `"start:stop:points"` (evenly spaced).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SGrid {
    List(Vec<f64>),
    Range(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteRdfExperiment {
    pub source: Reference,
    /// `"hamming"`, `"squared_error"`, a path, or an inline specification.
    /// Defaults to the `distortion` entry of the source file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortion: Option<Reference>,
    pub s_grid: SGrid,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// Kernel update: plain tilt, or tilt corrected by the cost to come.
    #[serde(default)]
    pub kernel: KernelForm,
}

fn default_max_iter() -> usize {
    10_000
}

fn default_damping() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussRealizeExperiment {
    pub model: Reference,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortion_level: Option<f64>,
    /// Fixed channel power; the achievable distortion is solved for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    pub channel_noise: f64,
    #[serde(default)]
    pub steady_state: bool,
    /// Steps designed when not in steady state.
    #[serde(default = "default_design_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub decoder: DecoderGain,
    #[serde(default = "default_riccati_iter")]
    pub max_iter: usize,
}

fn default_design_horizon() -> usize {
    100
}

fn default_riccati_iter() -> usize {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateExperiment {
    pub model: Reference,
    pub distortion_level: f64,
    pub channel_noise: f64,
    pub trials: usize,
    pub horizon: usize,
    #[serde(default)]
    pub design: Design,
    #[serde(default)]
    pub decoder: DecoderGain,
    #[serde(default = "default_riccati_iter")]
    pub max_iter: usize,
}

fn parse_error(path: &str, e: &serde_json::Error) -> ConfigError {
    ConfigError::Parse {
        path: path.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Read and validate a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, &path.display().to_string(), base)
}

/// Parse config text; relative references resolve against `base`.
pub fn parse_config(text: &str, origin: &str, base: &Path) -> Result<ExperimentConfig, ConfigError> {
    let raw: ExperimentConfig = serde_json::from_str(text).map_err(|e| parse_error(origin, &e))?;
    resolve(raw, base)
}

fn read_json(base: &Path, rel: &str, field: &str) -> Result<Value, ConfigError> {
    let p = base.join(rel);
    let text = std::fs::read_to_string(&p).map_err(|e| invalid(field, format!("cannot read {}: {e}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| parse_error(&p.display().to_string(), &e))
}

fn inline(r: &Reference, base: &Path, field: &str) -> Result<Value, ConfigError> {
    match r {
        Reference::Inline(v) => Ok(v.clone()),
        Reference::Path(p) => read_json(base, p, field),
    }
}

/// Expand `"start:stop:points"` into a list sorted from 0 toward -inf.
pub fn parse_s_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, stop, points] = parts.as_slice() else {
        return Err(format!("expected start:stop:points, got {spec:?}"));
    };
    let start: f64 = start.trim().parse().map_err(|_| format!("bad start in {spec:?}"))?;
    let stop: f64 = stop.trim().parse().map_err(|_| format!("bad stop in {spec:?}"))?;
    let points: usize = points.trim().parse().map_err(|_| format!("bad point count in {spec:?}"))?;
    if points == 0 {
        return Err("grids must be nonempty".into());
    }
    let mut grid: Vec<f64> = if points == 1 {
        vec![start]
    } else {
        (0..points)
            .map(|i| start + (stop - start) * i as f64 / (points - 1) as f64)
            .collect()
    };
    grid.sort_by(|a, b| b.total_cmp(a));
    Ok(grid)
}

fn resolve_distortion(d: &Option<Reference>, source: &Value, nx: usize, base: &Path) -> Result<Value, ConfigError> {
    let field = "finite_rdf.distortion";
    let value = match d {
        None => source
            .get("distortion")
            .cloned()
            .ok_or_else(|| invalid(field, "no distortion given and the source has none"))?,
        Some(Reference::Path(s)) if s == "hamming" => serde_json::to_value(DistortionSpec::hamming(nx)).unwrap(),
        Some(Reference::Path(s)) if s == "squared_error" => serde_json::to_value(DistortionSpec::SquaredError).unwrap(),
        Some(r) => inline(r, base, field)?,
    };
    let spec: DistortionSpec = serde_json::from_value(value.clone()).map_err(|e| invalid(field, e.to_string()))?;
    spec.validate().map_err(|e| invalid(field, e.to_string()))?;
    Ok(serde_json::to_value(spec).unwrap())
}

fn check_model(r: &Reference, base: &Path, field: &str) -> Result<Reference, ConfigError> {
    let value = inline(r, base, field)?;
    let model = StateSpaceModel::from_json_value(value).map_err(|e| invalid(field, e.to_string()))?;
    Ok(Reference::Inline(model.to_json_value()))
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

fn resolve(mut cfg: ExperimentConfig, base: &Path) -> Result<ExperimentConfig, ConfigError> {
    if !(cfg.tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {}", cfg.tol)));
    }
    match &mut cfg.experiment {
        Experiment::Waterfill(w) => {
            if w.eigenvalues.is_empty() {
                return Err(invalid("waterfill.eigenvalues", "must be nonempty"));
            }
            if w.distortion.values().is_empty() {
                return Err(invalid("waterfill.distortion", "grids must be nonempty"));
            }
        }
        Experiment::FiniteRdf(f) => {
            let source = inline(&f.source, base, "finite_rdf.source")?;
            let parsed: FiniteMarkovSource =
                serde_json::from_value(source.clone()).map_err(|e| invalid("finite_rdf.source", e.to_string()))?;
            let dist = resolve_distortion(&f.distortion, &source, parsed.alphabet_size(), base)?;
            f.distortion = Some(Reference::Inline(dist));
            f.source = Reference::Inline(serde_json::to_value(parsed).unwrap());
            let grid = match &f.s_grid {
                SGrid::List(v) => {
                    let mut v = v.clone();
                    v.sort_by(|a, b| b.total_cmp(a));
                    v
                }
                SGrid::Range(s) => parse_s_grid(s).map_err(|e| invalid("finite_rdf.s_grid", e))?,
            };
            if grid.is_empty() {
                return Err(invalid("finite_rdf.s_grid", "grids must be nonempty"));
            }
            if let Some(bad) = grid.iter().find(|s| !(**s <= 0.0)) {
                return Err(invalid("finite_rdf.s_grid", format!("multipliers must be <= 0, got {bad}")));
            }
            f.s_grid = SGrid::List(grid);
            if !(f.damping > 0.0 && f.damping <= 1.0) {
                return Err(invalid("finite_rdf.damping", "must lie in (0, 1]"));
            }
            if f.max_iter == 0 {
                return Err(invalid("finite_rdf.max_iter", "max_iter ≥ 1"));
            }
        }
        Experiment::GaussRealize(g) => {
            g.model = check_model(&g.model, base, "gauss_realize.model")?;
            positive("gauss_realize.channel_noise", g.channel_noise)?;
            match (g.distortion_level, g.power) {
                (Some(d), None) => positive("gauss_realize.distortion_level", d)?,
                (None, Some(p)) => {
                    positive("gauss_realize.power", p)?;
                    if !g.steady_state {
                        return Err(invalid("gauss_realize.power", "a fixed power requires steady_state"));
                    }
                }
                _ => {
                    return Err(invalid(
                        "gauss_realize.distortion_level",
                        "exactly one of distortion_level and power is required",
                    ))
                }
            }
            if !g.steady_state && g.horizon == 0 {
                return Err(invalid("gauss_realize.horizon", "horizon ≥ 1"));
            }
        }
        Experiment::Simulate(s) => {
            s.model = check_model(&s.model, base, "simulate.model")?;
            if s.trials == 0 {
                return Err(invalid("simulate.trials", "trials ≥ 1"));
            }
            if s.horizon == 0 {
                return Err(invalid("simulate.horizon", "horizon ≥ 1"));
            }
            positive("simulate.channel_noise", s.channel_noise)?;
            positive("simulate.distortion_level", s.distortion_level)?;
        }
    }
    Ok(cfg)
}

impl ExperimentConfig {
    /// Canonical JSON: resolved references, output settings removed.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        serde_json::to_string(&c).expect("config serializes")
    }

    /// Hex SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn format(&self) -> Format {
        self.output
            .as_ref()
            .and_then(|o| o.format)
            .unwrap_or_else(|| self.experiment.default_format())
    }
}
