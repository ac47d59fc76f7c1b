//! JSON run configuration.
//!
//! Every field is optional; unknown fields are rejected.
//!
//! ```json
//! {
//!   "input": "series.csv",
//!   "output": "out.qfa",
//!   "levels": { "min": 0.1, "max": 0.9, "step": 0.01 },
//!   "window": { "kind": "tukey-hanning", "m": 30 },
//!   "smoother": { "lambda_mode": "gcv", "lambda": 1.0, "normalized": true,
//!                 "ar1_whiten": false, "ar1_rho_mode": "estimate", "ar1_rho": 0.0 },
//!   "sqr": { "mu": 4.0, "weighted": false },
//!   "simulation": { "n": 512, "burn_in": 1000, "delay": 10 },
//!   "seeds": { "truth": 1, "eval": 2 },
//!   "runs": { "truth": 2000, "eval": 500 },
//!   "estimators": ["lw", "lwqs", "qslw", "sqrlw"],
//!   "threads": 4
//! }
//! ```

use std::path::{Path, PathBuf};

use qfa_core::qsmooth::{LambdaMode, RhoMode, SmootherConfig};
use qfa_core::sim::{EstimatorSpec, SimConfig};
use qfa_core::spectral::{LagWindow, WindowKind};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LevelSpec {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for LevelSpec {
    fn default() -> Self {
        Self {
            min: 0.1,
            max: 0.9,
            step: 0.01,
        }
    }
}

impl LevelSpec {
    /// `min, min + step, …, max`; `max` must be reached within rounding.
    pub fn levels(&self) -> Result<Vec<f64>, CliError> {
        let bad = || {
            CliError::Validation(format!(
                "levels {}:{}:{} must satisfy 0 < min <= max < 1 with step > 0 dividing max - min",
                self.min, self.max, self.step
            ))
        };
        if !(self.min > 0.0 && self.max < 1.0 && self.min <= self.max && self.step > 0.0) {
            return Err(bad());
        }
        let k = (self.max - self.min) / self.step;
        let count = k.round();
        if (k - count).abs() > 1e-6 {
            return Err(bad());
        }
        Ok((0..=count as usize)
            .map(|i| {
                // round to 12 digits so 0.1 + 0.01·i prints as typed
                let v = self.min + self.step * i as f64;
                (v * 1e12).round() / 1e12
            })
            .collect())
    }

    /// Parse `min:max:step`.
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Validation(format!("bad level spec '{s}'")))
        };
        match parts.as_slice() {
            [a, b, c] => Ok(Self {
                min: num(a)?,
                max: num(b)?,
                step: num(c)?,
            }),
            _ => Err(CliError::Validation(format!(
                "level spec '{s}' must be min:max:step"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowName {
    TukeyHanning,
    Bartlett,
    Parzen,
}

impl From<WindowName> for WindowKind {
    fn from(w: WindowName) -> Self {
        match w {
            WindowName::TukeyHanning => WindowKind::TukeyHanning,
            WindowName::Bartlett => WindowKind::Bartlett,
            WindowName::Parzen => WindowKind::Parzen,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSpec {
    pub kind: WindowName,
    pub m: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            kind: WindowName::TukeyHanning,
            m: 30.0,
        }
    }
}

impl WindowSpec {
    pub fn window(&self) -> Result<LagWindow, CliError> {
        Ok(LagWindow::new(self.kind.into(), self.m)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaModeName {
    Gcv,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoModeName {
    Estimate,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmootherSpec {
    pub lambda_mode: LambdaModeName,
    pub lambda: f64,
    pub normalized: bool,
    pub ar1_whiten: bool,
    pub ar1_rho_mode: RhoModeName,
    pub ar1_rho: f64,
}

impl Default for SmootherSpec {
    fn default() -> Self {
        Self {
            lambda_mode: LambdaModeName::Gcv,
            lambda: 1.0,
            normalized: true,
            ar1_whiten: false,
            ar1_rho_mode: RhoModeName::Estimate,
            ar1_rho: 0.0,
        }
    }
}

impl SmootherSpec {
    pub fn config(&self) -> Result<SmootherConfig, CliError> {
        let cfg = SmootherConfig {
            lambda_mode: match self.lambda_mode {
                LambdaModeName::Gcv => LambdaMode::Gcv,
                LambdaModeName::Fixed => LambdaMode::Fixed,
            },
            lambda: self.lambda,
            normalized: self.normalized,
            ar1_whiten: self.ar1_whiten,
            ar1_rho_mode: match self.ar1_rho_mode {
                RhoModeName::Estimate => RhoMode::Estimate,
                RhoModeName::Fixed => RhoMode::Fixed,
            },
            ar1_rho: self.ar1_rho,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SqrSpec {
    pub mu: f64,
    pub weighted: bool,
}

impl Default for SqrSpec {
    fn default() -> Self {
        Self {
            mu: 4.0,
            weighted: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSpec {
    pub n: usize,
    pub burn_in: usize,
    pub delay: usize,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            n: d.n,
            burn_in: d.burn_in,
            delay: d.delay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedSpec {
    pub truth: u64,
    pub eval: u64,
}

impl Default for SeedSpec {
    fn default() -> Self {
        Self { truth: 1, eval: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub truth: usize,
    pub eval: usize,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            truth: 2000,
            eval: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorName {
    Lw,
    Lwqs,
    Qslw,
    Sqrlw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub levels: LevelSpec,
    pub window: WindowSpec,
    pub smoother: SmootherSpec,
    pub sqr: SqrSpec,
    pub simulation: SimulationSpec,
    pub seeds: SeedSpec,
    pub runs: RunSpec,
    pub estimators: Vec<EstimatorName>,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            output: None,
            levels: LevelSpec::default(),
            window: WindowSpec::default(),
            smoother: SmootherSpec::default(),
            sqr: SqrSpec::default(),
            simulation: SimulationSpec::default(),
            seeds: SeedSpec::default(),
            runs: RunSpec::default(),
            estimators: vec![EstimatorName::Lw],
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.levels.levels()?;
        self.window.window()?;
        self.smoother.config()?;
        if !self.sqr.mu.is_finite() {
            return Err(CliError::Validation("sqr.mu must be finite".into()));
        }
        self.sim_config(self.seeds.eval).validate()?;
        if self.window.m >= self.simulation.n as f64 {
            return Err(CliError::Validation(
                "window bandwidth must be below the series length".into(),
            ));
        }
        if self.threads == Some(0) {
            return Err(CliError::Validation("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            n: self.simulation.n,
            burn_in: self.simulation.burn_in,
            delay: self.simulation.delay,
            seed,
            ..SimConfig::default()
        }
    }

    pub fn estimator_specs(&self) -> Result<Vec<EstimatorSpec>, CliError> {
        let window = self.window.window()?;
        let smoother = self.smoother.config()?;
        Ok(self
            .estimators
            .iter()
            .map(|e| match e {
                EstimatorName::Lw => EstimatorSpec::Lw { window },
                EstimatorName::Lwqs => EstimatorSpec::Lwqs { window, smoother },
                EstimatorName::Qslw => EstimatorSpec::Qslw { window, smoother },
                EstimatorName::Sqrlw => EstimatorSpec::Sqrlw {
                    window,
                    mu: self.sqr.mu,
                    weighted: self.sqr.weighted,
                },
            })
            .collect())
    }
}
