//! Run configuration: defaults, overlaid by a JSON file, overlaid by flags.

use std::path::{Path, PathBuf};

use epsreach::hybrid::HybridAutomaton;
use epsreach::models::{self, BallParams, ModelSpec, OscillatorParams, SgnParams};
use epsreach::reach::QEBackend;
use epsreach::sim::SimConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub h0: Option<f64>,
    pub g: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Built-in model name or path to an automaton JSON document.
    pub model: String,
    pub params: Params,
    pub epsilon: f64,
    /// Analysis box, `[lo, hi]` per variable. Empty means a model default.
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    pub resolution: usize,
    pub sim: SimConfig,
    pub backend: QEBackend,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: "taylor".into(),
            params: Params::default(),
            epsilon: 0.1,
            bounds: Vec::new(),
            resolution: 200,
            sim: SimConfig::default(),
            backend: QEBackend::smt(),
            out: PathBuf::from("epsreach-out"),
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config `{path}`: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        serde_json::from_str(&src).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.resolution == 0 {
            return bad("resolution must be at least 1".into());
        }
        for [lo, hi] in &self.bounds {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return bad(format!("box side [{lo}, {hi}] is empty or unbounded"));
            }
        }
        self.sim.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.backend.timeout_secs > 0.0) {
            return bad("backend timeout must be positive".into());
        }
        self.oscillator_params().map(|_| ())
    }

    pub fn oscillator_params(&self) -> Result<OscillatorParams, ConfigError> {
        let d = OscillatorParams::default();
        let p = &self.params;
        OscillatorParams::new(p.tau.unwrap_or(d.tau), p.lambda.unwrap_or(d.lambda), p.alpha.unwrap_or(d.alpha))
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    fn ball_params(&self) -> BallParams {
        let d = BallParams::default();
        let p = &self.params;
        BallParams { h0: p.h0.unwrap_or(d.h0), g: p.g.unwrap_or(d.g), gamma: p.gamma.unwrap_or(d.gamma) }
    }

    /// The built-in model named by `model`, if it names one.
    pub fn model_spec(&self) -> Result<Option<ModelSpec>, ConfigError> {
        let p = self.oscillator_params()?;
        Ok(Some(match self.model.as_str() {
            "oscillator" | "tanh" => ModelSpec::Oscillator(p),
            "sgn" => ModelSpec::Sgn(SgnParams { tau: p.tau }),
            "pwl" | "ath" => ModelSpec::Pwl(p),
            "taylor" => ModelSpec::Taylor(p),
            "bouncing-ball" | "ball" => ModelSpec::BouncingBall(self.ball_params()),
            _ => return Ok(None),
        }))
    }

    pub fn automaton(&self) -> Result<HybridAutomaton, ConfigError> {
        let invalid = |e: epsreach::Error| ConfigError::Invalid(e.to_string());
        match self.model_spec()? {
            Some(spec) => spec.build().map_err(invalid),
            None => {
                let path = Path::new(&self.model);
                if !path.is_file() {
                    return Err(ConfigError::Invalid(format!("`{}` is neither a built-in model nor a file", self.model)));
                }
                let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
                models::load_automaton(&src).map_err(invalid)
            }
        }
    }

    pub fn default_start(&self) -> Result<Vec<f64>, ConfigError> {
        Ok(self.model_spec()?.map(|s| s.default_start()).unwrap_or_default())
    }

    /// The configured box, or a default that fits the model.
    pub fn box_or_default(&self, dim: usize) -> Result<Vec<(f64, f64)>, ConfigError> {
        if !self.bounds.is_empty() {
            if self.bounds.len() != dim {
                return Err(ConfigError::Invalid(format!("box has {} sides, the model has {dim} variables", self.bounds.len())));
            }
            return Ok(self.bounds.iter().map(|[lo, hi]| (*lo, *hi)).collect());
        }
        Ok(match self.model_spec()? {
            Some(ModelSpec::BouncingBall(b)) => vec![(-1.0, b.h0 + 1.0), (-(2.0 * b.g * b.h0).sqrt() - 1.0, (2.0 * b.g * b.h0).sqrt() + 1.0)],
            _ => vec![(-10.0, 10.0); dim],
        })
    }
}
