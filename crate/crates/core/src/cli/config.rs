//! Analysis and scenario configuration: TOML files with command-line
//! overrides (precedence: flags > file > defaults).

use crate::aipw::TargetParameter;
use crate::error::{Error, Result};
use crate::glmfit::{CvRule, Penalty};
use crate::sensitivity::SigmaMode;
use crate::simulate::{AteExtension, BiasEstimator, SimScenario};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub input: InputConfig,
    #[serde(default)]
    pub expand: ExpandSpec,
    #[serde(default)]
    pub sensitivity: SensitivityConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub path: PathBuf,
    pub treatment: String,
    pub outcome: String,
    /// covariate columns in model order
    pub covariates: Vec<String>,
    /// subset of `covariates` treated as categorical (one-hot encoded with
    /// the lexicographically first level as reference)
    #[serde(default)]
    pub categorical: Vec<String>,
}

/// Covariate expansion rule. The default is the identity expansion. The
/// `categorical_numeric = "cross"` reading interacts each dummy with the
/// base numerics and their pairwise products.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpandSpec {
    /// highest power of each numeric variable (1..=3)
    pub degree: usize,
    /// include numeric x numeric monomials of total degree <= `degree`
    pub numeric_cross: bool,
    /// include dummy x dummy products across categorical variables
    pub categorical_pairs: bool,
    /// how dummies interact with numeric terms
    pub categorical_numeric: CatNumericInteractions,
}

impl Default for ExpandSpec {
    fn default() -> Self {
        ExpandSpec {
            degree: 1,
            numeric_cross: false,
            categorical_pairs: false,
            categorical_numeric: CatNumericInteractions::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatNumericInteractions {
    None,
    /// dummy x numeric
    Linear,
    /// dummy x numeric and dummy x (numeric pairwise product)
    Cross,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityConfig {
    pub target: TargetParameter,
    /// rho range for single-arm targets
    pub rho_min: f64,
    pub rho_max: f64,
    /// per-arm ranges for the ATE
    pub rho1_min: f64,
    pub rho1_max: f64,
    pub rho0_min: f64,
    pub rho0_max: f64,
    pub grid_size: usize,
    pub sigma: SigmaMode,
    pub alpha: f64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig {
            target: TargetParameter::Ate,
            rho_min: 0.0,
            rho_max: 0.0,
            rho1_min: 0.0,
            rho1_max: 0.0,
            rho0_min: 0.0,
            rho0_max: 0.0,
            grid_size: 101,
            sigma: SigmaMode::Corrected,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub trim: f64,
    pub seed: u64,
    pub cv_folds: usize,
    pub outcome_penalty: PenaltyConfig,
    pub propensity_penalty: PenaltyConfig,
    /// probit-lasso cross-validation rule: "min" or "one_se"
    pub cv_rule: CvRule,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            trim: 0.01,
            seed: 0,
            cv_folds: 10,
            outcome_penalty: PenaltyConfig::default(),
            propensity_penalty: PenaltyConfig::default(),
            cv_rule: CvRule::OneSe,
        }
    }
}

/// `"auto"` or a nonnegative number.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PenaltyConfig {
    Named(String),
    Fixed(f64),
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig::Named("auto".into())
    }
}

impl PenaltyConfig {
    pub fn to_penalty(&self) -> Result<Penalty> {
        match self {
            PenaltyConfig::Named(s) if s == "auto" => Ok(Penalty::Auto),
            PenaltyConfig::Named(s) => {
                Err(Error::Config(format!("penalty must be \"auto\" or a number, got {s:?}")))
            }
            PenaltyConfig::Fixed(v) if *v >= 0.0 => Ok(Penalty::Fixed(*v)),
            PenaltyConfig::Fixed(v) => {
                Err(Error::Config(format!("penalty must be nonnegative, got {v}")))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub grid_step: f64,
    pub grid_min: f64,
    pub grid_max: f64,
    pub sigma: SigmaMode,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig { grid_step: 0.01, grid_min: -0.99, grid_max: 0.99, sigma: SigmaMode::Corrected }
    }
}

impl AnalysisConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: AnalysisConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.covariates.is_empty() {
            return Err(Error::Config("input.covariates must be nonempty".into()));
        }
        for c in &self.input.categorical {
            if !self.input.covariates.contains(c) {
                return Err(Error::Config(format!(
                    "categorical column {c:?} is not listed in covariates"
                )));
            }
        }
        if !(1..=3).contains(&self.expand.degree) {
            return Err(Error::Config(format!(
                "expand.degree must be in 1..=3, got {}",
                self.expand.degree
            )));
        }
        let s = &self.sensitivity;
        for (lo, hi, what) in [
            (s.rho_min, s.rho_max, "rho"),
            (s.rho1_min, s.rho1_max, "rho1"),
            (s.rho0_min, s.rho0_max, "rho0"),
        ] {
            if !(lo > -1.0 && hi < 1.0 && lo <= hi) {
                return Err(Error::Config(format!(
                    "need -1 < {what}_min <= {what}_max < 1, got [{lo}, {hi}]"
                )));
            }
        }
        if !(s.alpha > 0.0 && s.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0,1), got {}", s.alpha)));
        }
        if s.grid_size < 2 {
            return Err(Error::Config("sensitivity.grid_size must be >= 2".into()));
        }
        if !(self.fit.trim >= 0.0 && self.fit.trim < 0.5) {
            return Err(Error::Config(format!("fit.trim must be in [0, 0.5), got {}", self.fit.trim)));
        }
        if !(self.bounds.grid_step > 0.0
            && self.bounds.grid_min < self.bounds.grid_max
            && self.bounds.grid_min > -1.0
            && self.bounds.grid_max < 1.0)
        {
            return Err(Error::Config("bad bounds grid".into()));
        }
        Ok(())
    }

    pub fn bounds_grid(&self) -> Vec<f64> {
        let b = &self.bounds;
        let k = ((b.grid_max - b.grid_min) / b.grid_step).round() as usize;
        (0..=k)
            .map(|i| {
                let rho = b.grid_min + b.grid_step * i as f64;
                (rho / b.grid_step).round() * b.grid_step
            })
            .filter(|r| r.abs() < 1.0)
            .collect()
    }
}

/// Command-line overrides layered on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trim: Option<f64>,
    pub alpha: Option<f64>,
    pub target: Option<TargetParameter>,
    pub sigma: Option<SigmaMode>,
    pub grid_size: Option<usize>,
    pub rho_min: Option<f64>,
    pub rho_max: Option<f64>,
    pub rho1_min: Option<f64>,
    pub rho1_max: Option<f64>,
    pub rho0_min: Option<f64>,
    pub rho0_max: Option<f64>,
    pub bounds_step: Option<f64>,
}

impl AnalysisConfig {
    pub fn apply(&mut self, ov: &Overrides) -> Result<()> {
        if let Some(d) = &ov.out_dir {
            self.output.dir = d.clone();
        }
        if let Some(v) = ov.seed {
            self.fit.seed = v;
        }
        if let Some(v) = ov.trim {
            self.fit.trim = v;
        }
        if let Some(v) = ov.alpha {
            self.sensitivity.alpha = v;
        }
        if let Some(v) = ov.target {
            self.sensitivity.target = v;
        }
        if let Some(v) = ov.sigma {
            self.sensitivity.sigma = v;
        }
        if let Some(v) = ov.grid_size {
            self.sensitivity.grid_size = v;
        }
        if let Some(v) = ov.rho_min {
            self.sensitivity.rho_min = v;
        }
        if let Some(v) = ov.rho_max {
            self.sensitivity.rho_max = v;
        }
        if let Some(v) = ov.rho1_min {
            self.sensitivity.rho1_min = v;
        }
        if let Some(v) = ov.rho1_max {
            self.sensitivity.rho1_max = v;
        }
        if let Some(v) = ov.rho0_min {
            self.sensitivity.rho0_min = v;
        }
        if let Some(v) = ov.rho0_max {
            self.sensitivity.rho0_max = v;
        }
        if let Some(v) = ov.bounds_step {
            self.bounds.grid_step = v;
        }
        self.validate()
    }
}

/// Scenario file for the simulation subcommand. `n` and `rho` may be single
/// values or lists; the cross product defines the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub n: OneOrMany<usize>,
    pub rho: OneOrMany<f64>,
    pub n_reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub estimators: Option<Vec<BiasEstimator>>,
    #[serde(default)]
    pub trim: Option<f64>,
    #[serde(default)]
    pub ate: Option<AteExtension>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("bad scenario: {e}")))
    }

    /// Expand to the (n, rho) grid. Each cell gets a seed mixed from the base
    /// seed and its coordinates so cells draw independent streams.
    pub fn scenarios(&self) -> Vec<SimScenario> {
        let mut out = Vec::new();
        for &n in &self.n.to_vec() {
            for &rho in &self.rho.to_vec() {
                let cell_seed = self
                    .seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add((n as u64) << 20)
                    .wrapping_add(rho.to_bits().rotate_left(17));
                let mut sc = SimScenario::table_cell(n, rho, self.n_reps, cell_seed);
                sc.p = self.p;
                if let Some(e) = &self.estimators {
                    sc.estimators = e.clone();
                }
                if let Some(t) = self.trim {
                    sc.trim = t;
                }
                sc.ate = self.ate.clone();
                out.push(sc);
            }
        }
        out
    }
}
