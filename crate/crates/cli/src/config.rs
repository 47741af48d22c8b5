//! Versioned experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use twistlab::iet::Permutation;
use twistlab::observables::CellwiseObservable;
use twistlab::rng::StreamRng;
use twistlab::surface::ZipperedRectangles;
use twistlab::twisted::FitMode;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    StratumInfo,
    TwistedSweep,
    KzExponents,
    GapSweep,
    Spectral,
    Weakmix,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::StratumInfo => "stratum-info",
            Experiment::TwistedSweep => "twisted-sweep",
            Experiment::KzExponents => "kz-exponents",
            Experiment::GapSweep => "gap-sweep",
            Experiment::Spectral => "spectral",
            Experiment::Weakmix => "weakmix",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Observable drawn for each surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObservableSpec {
    /// Random zero-mean constant on each rectangle.
    CellwiseConstant,
    /// Random zero-mean sum of vertical modes `e^{2 pi i n y / h}`.
    Vertical { max_mode: i64, terms: usize },
    /// Random zero-mean cellwise trigonometric polynomial.
    Trig { max_mode: i64, terms: usize },
    /// `e^{2 pi i y / h_j}` on every rectangle; an eigenfunction when all
    /// heights agree.
    Eigenfunction,
    /// Explicit terms in the observable JSON format.
    Terms { terms: serde_json::Value },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Samples {
    /// Monte Carlo start points per estimate.
    pub mc: usize,
    pub zorich_steps: usize,
    pub paths: usize,
    /// Lyapunov exponents to estimate.
    pub exponents: usize,
    /// Transversal base points for correlations.
    pub base_points: usize,
    /// Time step of the correlation grid.
    pub dt: f64,
    pub max_evaluations: u64,
}

impl Default for Samples {
    fn default() -> Self {
        Samples { mc: 400, zorich_steps: 10_000, paths: 4, exponents: 2, base_points: 256, dt: 0.5, max_evaluations: 2_000_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Named stratum (`H(2)`, `H(1,1)`, `torus`) or `golden-torus` for the
    /// fixed torus with golden rotation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
    /// Two letter rows; alternative to `stratum`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<String>,
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub surfaces: usize,
    pub observable: ObservableSpec,
    pub lambda_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub r_grid: Vec<f64>,
    #[serde(default)]
    pub samples: Samples,
    #[serde(default = "envelope")]
    pub fit_mode: FitMode,
    /// Write per-step Zorich path logs as newline-delimited JSON.
    #[serde(default)]
    pub path_log: bool,
    #[serde(default)]
    pub format: OutputFormat,
    pub out: PathBuf,
}

fn one() -> usize {
    1
}

fn envelope() -> FitMode {
    FitMode::Envelope
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    twistlab::twisted::geometric_grid(lo, hi, n)
}

impl ExperimentConfig {
    /// Smoke-sized defaults for each experiment.
    pub fn preset(kind: Experiment) -> Self {
        let mut c = ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            stratum: Some("H(2)".into()),
            permutation: None,
            seed: None,
            surfaces: 1,
            observable: ObservableSpec::CellwiseConstant,
            lambda_grid: vec![0.5, 1.0, 2.0],
            t_grid: geometric(1e2, 1e4, 9),
            r_grid: geometric(0.004, 0.4, 6),
            samples: Samples::default(),
            fit_mode: FitMode::Envelope,
            path_log: false,
            format: OutputFormat::Csv,
            out: PathBuf::from(format!("out/{}", kind.name())),
        };
        match kind {
            Experiment::GapSweep => {
                c.lambda_grid = std::iter::once(0.0).chain(geometric(0.25, 4.0, 9)).collect();
            }
            Experiment::Spectral => c.lambda_grid = vec![1.0],
            Experiment::Weakmix => {
                c.t_grid = geometric(1e2, 1e4, 7);
                c.samples.base_points = 64;
            }
            _ => {}
        }
        c
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// sha256 of the compact serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or_else(|| ConfigError::Invalid("a seed is required".into()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.schema_version != SCHEMA_VERSION {
            return bad(&format!("unsupported schema version {}", self.schema_version));
        }
        self.seed()?;
        self.permutation()?;
        for (name, grid) in [("lambda_grid", &self.lambda_grid), ("t_grid", &self.t_grid), ("r_grid", &self.r_grid)] {
            if grid.is_empty() {
                return bad(&format!("{name} is empty"));
            }
            if grid.iter().any(|v| !v.is_finite()) {
                return bad(&format!("{name} has a non-finite entry"));
            }
        }
        if self.t_grid.iter().any(|&t| t <= 0.0) {
            return bad("t_grid entries must be positive");
        }
        if self.r_grid.iter().any(|&r| !(r > 0.0 && r <= 0.5)) {
            return bad("r_grid entries must lie in (0, 1/2]");
        }
        if self.surfaces == 0 {
            return bad("surfaces must be positive");
        }
        let s = &self.samples;
        if s.mc < 100 || s.paths == 0 || s.zorich_steps == 0 || s.exponents == 0 || s.base_points < 8 || s.dt.is_nan() || s.dt <= 0.0 {
            return bad("sample counts are out of range");
        }
        Ok(())
    }

    /// The permutation surfaces are drawn on.
    pub fn permutation(&self) -> Result<Permutation, ConfigError> {
        match (&self.stratum, &self.permutation) {
            (Some(_), Some(_)) => Err(ConfigError::Invalid("give either stratum or permutation, not both".into())),
            (None, None) => Err(ConfigError::Invalid("a stratum or permutation is required".into())),
            (Some(name), None) if name == "golden-torus" => Ok(ZipperedRectangles::golden_torus().permutation().clone()),
            (Some(name), None) => Permutation::for_stratum(name).map_err(|e| ConfigError::Invalid(e.to_string())),
            (None, Some(text)) => {
                let p: Permutation = text.parse().map_err(|e: twistlab::Error| ConfigError::Invalid(e.to_string()))?;
                p.stratum().map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Ok(p)
            }
        }
    }

    pub fn surface(&self, rng: &mut StreamRng) -> twistlab::Result<ZipperedRectangles> {
        if self.stratum.as_deref() == Some("golden-torus") {
            return Ok(ZipperedRectangles::golden_torus());
        }
        let p = self.permutation().map_err(|e| twistlab::Error::InvalidArgument(e.to_string()))?;
        ZipperedRectangles::random(&p, rng)
    }

    pub fn observable(&self, s: &ZipperedRectangles, rng: &mut StreamRng) -> twistlab::Result<CellwiseObservable> {
        Ok(match &self.observable {
            ObservableSpec::CellwiseConstant => CellwiseObservable::random_cellwise_constant(s, rng),
            ObservableSpec::Vertical { max_mode, terms } => CellwiseObservable::random_vertical(s, *max_mode, *terms, rng),
            ObservableSpec::Trig { max_mode, terms } => CellwiseObservable::random_trig(s, *max_mode, *terms, rng),
            ObservableSpec::Eigenfunction => {
                let mut f = CellwiseObservable::zero(s.d());
                for j in 0..s.d() {
                    f.add_term(j, 0, 1, num_complex::Complex64::new(1.0, 0.0));
                }
                f
            }
            ObservableSpec::Terms { terms } => {
                let f = CellwiseObservable::from_json(&terms.to_string(), s.d())?;
                f.validate_for(s)?;
                f
            }
        })
    }
}
