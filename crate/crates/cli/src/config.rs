//! Experiment configuration files (TOML).

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use rfan_core::{AcquisitionKind, SpendingSchedule, SwitchMode, TrialConfig};

/// A configuration problem tied to the field that caused it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        #[serde(default = "default_pool")]
        pool_size: usize,
        #[serde(default = "default_test")]
        test_size: usize,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "default_pool_fraction")]
        pool_fraction: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOver {
    /// Trial size in patients; the step count becomes `N / batch_size`.
    N,
    TStar,
}

impl SweepOver {
    pub fn name(self) -> &'static str {
        match self {
            SweepOver::N => "n",
            SweepOver::TStar => "t_star",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub over: SweepOver,
    pub values: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Fixed,
    EarlyStopping,
    Rct,
    CausalBald,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub label: String,
    pub mode: ModeKind,
    pub acquisition: Option<AcquisitionKind>,
    #[serde(default = "default_steps")]
    pub total_steps: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub t_star: Option<usize>,
    /// Switching point as a share of `total_steps`, rounded, at least 1.
    pub t_star_fraction: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_ratio")]
    pub train_val_ratio: f64,
    #[serde(default = "default_draws")]
    pub sign_bald_draws: usize,
    pub look_fractions: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_seeds")]
    pub n_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Subgroup labels for the worst-case metrics. Defaults to the synthetic
    /// labels, or every label present in a CSV dataset.
    pub subgroups: Option<Vec<String>>,
    pub dataset: DatasetSpec,
    pub sweep: Option<Sweep>,
    #[serde(rename = "design")]
    pub designs: Vec<DesignSpec>,
}

fn default_pool() -> usize {
    10_000
}
fn default_test() -> usize {
    2_000
}
fn default_pool_fraction() -> f64 {
    0.8
}
fn default_steps() -> usize {
    30
}
fn default_batch() -> usize {
    10
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_ratio() -> f64 {
    0.9
}
fn default_draws() -> usize {
    rfan_core::acquisition::DEFAULT_SIGN_BALD_DRAWS
}
fn default_seeds() -> usize {
    10
}

impl DesignSpec {
    fn field(&self, index: usize, name: &str) -> String {
        format!("design[{index}] `{}`.{name}", self.label)
    }

    /// Trial configuration for one sweep value (`None` without a sweep).
    pub fn trial_config(
        &self,
        index: usize,
        sweep: Option<(SweepOver, usize)>,
        seed: u64,
    ) -> Result<TrialConfig, ConfigError> {
        let err = |name: &str, msg: String| ConfigError::new(self.field(index, name), msg);
        let mut total_steps = self.total_steps;
        let mut t_star_override = None;
        match sweep {
            Some((SweepOver::N, n)) => {
                if self.batch_size == 0 || n % self.batch_size != 0 || n == 0 {
                    return Err(ConfigError::new(
                        "sweep.values",
                        format!(
                            "N = {n} is not a positive multiple of batch_size {} of design `{}`",
                            self.batch_size, self.label
                        ),
                    ));
                }
                total_steps = n / self.batch_size;
            }
            Some((SweepOver::TStar, t)) => t_star_override = Some(t),
            None => {}
        }

        let acquisition = match (self.mode, self.acquisition) {
            (ModeKind::Rct, None | Some(AcquisitionKind::Uniform)) => AcquisitionKind::Uniform,
            (ModeKind::CausalBald, None | Some(AcquisitionKind::MuMax)) => AcquisitionKind::MuMax,
            (ModeKind::Rct, Some(_)) => return Err(err("acquisition", "rct mode uses uniform acquisition".into())),
            (ModeKind::CausalBald, Some(_)) => {
                return Err(err("acquisition", "causal_bald mode uses mu_max acquisition".into()))
            }
            (_, Some(kind)) => kind,
            (_, None) => return Err(err("acquisition", "required for fixed and early_stopping modes".into())),
        };

        let switch_mode = match self.mode {
            ModeKind::Rct => SwitchMode::Rct,
            ModeKind::CausalBald => SwitchMode::CausalBald,
            ModeKind::Fixed => {
                let t = match (t_star_override, self.t_star, self.t_star_fraction) {
                    (Some(t), _, _) => t,
                    (None, Some(_), Some(_)) => {
                        return Err(err("t_star", "give t_star or t_star_fraction, not both".into()))
                    }
                    (None, Some(t), None) => t,
                    (None, None, Some(f)) => {
                        if !(f > 0.0 && f <= 1.0) {
                            return Err(err("t_star_fraction", format!("must lie in (0, 1], got {f}")));
                        }
                        ((f * total_steps as f64).round() as usize).max(1)
                    }
                    (None, None, None) => {
                        return Err(err("t_star", "required for fixed mode".into()))
                    }
                };
                if t == 0 || t > total_steps {
                    return Err(err("t_star", format!("must lie in [1, {total_steps}], got {t}")));
                }
                SwitchMode::Fixed(t)
            }
            ModeKind::EarlyStopping => {
                let fractions = self.look_fractions.clone().unwrap_or_else(|| vec![0.25, 0.5, 0.75, 1.0]);
                let schedule = SpendingSchedule::new(self.epsilon, &fractions)
                    .map_err(|e| err("look_fractions", e.to_string()))?;
                SwitchMode::EarlyStopping(schedule)
            }
        };
        if self.mode != ModeKind::Fixed && (self.t_star.is_some() || self.t_star_fraction.is_some()) {
            return Err(err("t_star", "only fixed mode takes a switching point".into()));
        }
        if self.mode != ModeKind::EarlyStopping && self.look_fractions.is_some() {
            return Err(err("look_fractions", "only early_stopping mode takes look fractions".into()));
        }

        let config = TrialConfig {
            total_steps,
            batch_size: self.batch_size,
            switch_mode,
            acquisition,
            epsilon: self.epsilon,
            train_val_ratio: self.train_val_ratio,
            seed,
            sign_bald_draws: self.sign_bald_draws,
        };
        config.validate().map_err(|e| err("config", e.to_string()))?;
        Ok(config)
    }
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| {
            ConfigError::new("config", e.message().to_string() + &span_hint(text, e.span()))
        })?;
        spec.validate()?;
        Ok(spec)
    }

    /// Reads and validates a config; a relative CSV path is resolved against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
        let mut spec = Self::parse(&text)?;
        if let DatasetSpec::Csv { path: csv, .. } = &mut spec.dataset {
            if csv.is_relative() {
                if let Some(dir) = path.parent() {
                    *csv = dir.join(&*csv);
                }
            }
        }
        Ok(spec)
    }

    pub fn sweep_points(&self) -> Vec<Option<(SweepOver, usize)>> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| Some((s.over, v))).collect(),
            None => vec![None],
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_seeds == 0 {
            return Err(ConfigError::new("n_seeds", "must be at least 1"));
        }
        if self.designs.is_empty() {
            return Err(ConfigError::new("design", "at least one [[design]] section is required"));
        }
        match &self.dataset {
            DatasetSpec::Synthetic { pool_size, test_size } => {
                if *pool_size == 0 {
                    return Err(ConfigError::new("dataset.pool_size", "must be positive"));
                }
                if *test_size == 0 {
                    return Err(ConfigError::new("dataset.test_size", "must be positive"));
                }
            }
            DatasetSpec::Csv { pool_fraction, .. } => {
                if !(*pool_fraction > 0.0 && *pool_fraction < 1.0) {
                    return Err(ConfigError::new(
                        "dataset.pool_fraction",
                        format!("must lie in (0, 1), got {pool_fraction}"),
                    ));
                }
            }
        }
        if let Some(s) = &self.subgroups {
            if s.is_empty() {
                return Err(ConfigError::new("subgroups", "must name at least one subgroup"));
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(ConfigError::new("sweep.values", "must not be empty"));
            }
            let mut seen = HashSet::new();
            if let Some(v) = s.values.iter().find(|v| !seen.insert(**v)) {
                return Err(ConfigError::new("sweep.values", format!("duplicate value {v}")));
            }
        }
        let mut labels = HashSet::new();
        for (i, d) in self.designs.iter().enumerate() {
            if d.label.trim().is_empty() {
                return Err(ConfigError::new(format!("design[{i}].label"), "must not be empty"));
            }
            if !labels.insert(d.label.as_str()) {
                return Err(ConfigError::new(
                    format!("design[{i}].label"),
                    format!("duplicate label `{}`", d.label),
                ));
            }
            for point in self.sweep_points() {
                d.trial_config(i, point, self.base_seed)?;
            }
        }
        Ok(())
    }
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}
