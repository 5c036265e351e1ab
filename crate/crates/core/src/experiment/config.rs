use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attendance::{JourneyTypeSpec, TimeGrid};
use crate::distributions::Density1D;
use crate::em::EmConfig;
use crate::error::{Error, Result};
use crate::quadrature::QuadratureSpec;

/// Whether counters are redrawn for every replicate or day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    #[default]
    PerReplicate,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterConfig {
    pub count: usize,
    pub density: Density1D,
    #[serde(default)]
    pub resample: Resample,
}

/// Count generator used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Individual trips and their crossings.
    Trajectory,
    /// Independent Poisson counts with rates `N_k a_k(i, x_j)`.
    #[default]
    Poisson,
}

/// Law of the daily number of trips per journey around `true_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DayLaw {
    Fixed,
    /// `N_k exp(σ Z - σ²/2)`, which keeps the mean at `N_k`.
    Lognormal {
        sigma: f64,
    },
}

impl Default for DayLaw {
    fn default() -> Self {
        DayLaw::Lognormal { sigma: 0.1 }
    }
}

/// Table the estimator is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttendanceMode {
    /// Closed-form attendance from the journey laws.
    #[default]
    Theoretical,
    /// Average of `days` simulated learning days at the counters.
    Empirical { days: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsistencyConfig {
    pub ladder: Vec<usize>,
    pub replicates: usize,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            ladder: (1..=10).map(|m| 5 * m).collect(),
            replicates: 50,
        }
    }
}

/// A named counter density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Strategy {
    pub label: String,
    pub density: Density1D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeCheckConfig {
    /// Interior `(t, x)` points.
    pub points: Vec<(f64, f64)>,
    /// Finite-difference steps; consecutive ratios are reported.
    pub steps: Vec<f64>,
}

impl Default for PdeCheckConfig {
    fn default() -> Self {
        let mut points = Vec::new();
        for t in [7.5, 9.0, 12.5, 17.0] {
            for x in [0.25, 0.4, 0.55, 0.7] {
                points.push((t, x));
            }
        }
        Self {
            points,
            steps: vec![2e-2, 1e-2, 5e-3],
        }
    }
}

fn default_domain() -> (f64, f64) {
    (0.0, 1.0)
}

fn one() -> usize {
    1
}

fn default_level() -> f64 {
    0.95
}

fn default_dense() -> usize {
    512
}

/// One experiment, read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_domain")]
    pub domain: (f64, f64),
    #[serde(default)]
    pub grid: TimeGrid,
    pub journeys: Vec<JourneyTypeSpec>,
    pub true_n: Vec<f64>,
    pub counters: CounterConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replicates: usize,
    /// Days produced by `simulate`.
    #[serde(default = "one")]
    pub days: usize,
    #[serde(default)]
    pub day_law: DayLaw,
    #[serde(default)]
    pub generator: Generator,
    #[serde(default)]
    pub em: EmConfig,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub attendance_mode: AttendanceMode,
    #[serde(default)]
    pub consistency: ConsistencyConfig,
    #[serde(default)]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Locations in the dense attendance profile.
    #[serde(default = "default_dense")]
    pub dense_locations: usize,
    #[serde(default)]
    pub pde_check: PdeCheckConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("domain [{lo}, {hi}] is empty")));
        }
        self.grid
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.quadrature
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.em.validate()?;
        for j in &self.journeys {
            j.validate(self.domain)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.true_n.len() != self.journeys.len() {
            return Err(Error::Config(format!(
                "{} journeys but {} entries in true_n",
                self.journeys.len(),
                self.true_n.len()
            )));
        }
        if self.true_n.iter().any(|n| !(*n >= 0.0 && n.is_finite())) {
            return Err(Error::Config(
                "true_n entries must be finite and >= 0".into(),
            ));
        }
        if self.counters.count == 0 {
            return Err(Error::Config("at least one counter is required".into()));
        }
        let (clo, chi) = self.counters.density.support();
        if clo < lo || chi > hi {
            return Err(Error::Config("counter density leaves the domain".into()));
        }
        if self.replicates == 0 || self.days == 0 {
            return Err(Error::Config("replicates and days must be >= 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level {} not in (0, 1)", self.level)));
        }
        if let DayLaw::Lognormal { sigma } = self.day_law {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::Config("day_law sigma must be >= 0".into()));
            }
        }
        if let AttendanceMode::Empirical { days } = self.attendance_mode {
            if days == 0 {
                return Err(Error::Config(
                    "empirical attendance needs >= 1 learning day".into(),
                ));
            }
        }
        if self.consistency.ladder.is_empty()
            || self.consistency.ladder.contains(&0)
            || self.consistency.replicates == 0
        {
            return Err(Error::Config(
                "consistency ladder rungs and replicates must be >= 1".into(),
            ));
        }
        for s in &self.strategies {
            let (a, b) = s.density.support();
            if a < lo || b > hi {
                return Err(Error::Config(format!(
                    "strategy {} leaves the domain",
                    s.label
                )));
            }
        }
        if self.pde_check.steps.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::Config(
                "finite-difference steps must be positive".into(),
            ));
        }
        if self.dense_locations < 2 {
            return Err(Error::Config("dense_locations must be >= 2".into()));
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        self.journeys.iter().map(|j| j.label.clone()).collect()
    }
}
