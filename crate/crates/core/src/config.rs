//! Flat key=value configuration shared by every pipeline command.
//!
//! A config file is a plain text document of `key = value` lines. `#`
//! starts a comment, blank lines are skipped, and a key given twice keeps
//! the last value. Every key has a default, so an empty file is a valid
//! configuration; unknown keys are rejected. Command-line flags apply on
//! top of the file through the same [`RunConfig::set`] path.
//!
//! [`RunConfig::canonical_text`] renders every key in sorted order with
//! its resolved value, and [`RunConfig::hash`] digests that rendering.
//! The hash goes into every artifact's sidecar metadata, so any output
//! file can be traced back to the exact configuration that produced it.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::toxicity::ToxicityMode;
use crate::features::UserFilter;
use crate::labeling::{TargetDefinition, DEFAULT_QUANTILE_GRID};
use crate::learner::regress::RegressionParams;
use crate::learner::{BoostParams, CvParams, ForestParams};
use crate::synth::ScenarioConfig;

/// Which target definitions a run sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefinitionChoice {
    Raw,
    Norm,
    Both,
}

impl DefinitionChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            DefinitionChoice::Raw => "raw",
            DefinitionChoice::Norm => "norm",
            DefinitionChoice::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<DefinitionChoice> {
        match s {
            "raw" => Some(DefinitionChoice::Raw),
            "norm" => Some(DefinitionChoice::Norm),
            "both" => Some(DefinitionChoice::Both),
            _ => None,
        }
    }

    /// The definitions the choice expands to, in fixed order.
    pub fn definitions(self) -> Vec<TargetDefinition> {
        match self {
            DefinitionChoice::Raw => vec![TargetDefinition::Raw],
            DefinitionChoice::Norm => vec![TargetDefinition::Norm],
            DefinitionChoice::Both => vec![TargetDefinition::Raw, TargetDefinition::Norm],
        }
    }
}

/// Toxicity scoring mode as a config value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToxChoice {
    Sidecar,
    Lexicon,
}

impl ToxChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            ToxChoice::Sidecar => "sidecar",
            ToxChoice::Lexicon => "lexicon",
        }
    }

    pub fn parse(s: &str) -> Option<ToxChoice> {
        match s {
            "sidecar" => Some(ToxChoice::Sidecar),
            "lexicon" => Some(ToxChoice::Lexicon),
            _ => None,
        }
    }

    pub fn mode(self) -> ToxicityMode {
        match self {
            ToxChoice::Sidecar => ToxicityMode::Sidecar,
            ToxChoice::Lexicon => ToxicityMode::lexicon(),
        }
    }
}

/// Synthetic scenario preset selected by the `scenario` key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioChoice {
    Default,
    Classification,
    Regression,
}

impl ScenarioChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioChoice::Default => "default",
            ScenarioChoice::Classification => "classification",
            ScenarioChoice::Regression => "regression",
        }
    }

    pub fn parse(s: &str) -> Option<ScenarioChoice> {
        match s {
            "default" => Some(ScenarioChoice::Default),
            "classification" => Some(ScenarioChoice::Classification),
            "regression" => Some(ScenarioChoice::Regression),
            _ => None,
        }
    }
}

/// Resolved configuration for one pipeline run.
///
/// Paths left empty fall back at run time: `replay`, `ratings`, and
/// `quality` default to the synthetic corpus emitted into the output
/// directory, and `manifest` defaults to the built-in feature manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub replay: Option<PathBuf>,
    pub ratings: Option<PathBuf>,
    pub quality: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub window_start: Option<DateTime<Utc>>,
    pub window_end: Option<DateTime<Utc>>,
    pub min_posts: u64,
    pub majority_lang: String,
    pub quantiles: Vec<f64>,
    pub definition: DefinitionChoice,
    pub tox_mode: ToxChoice,
    pub seed: u64,
    /// Worker threads; 0 keeps the library default.
    pub jobs: usize,
    pub estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub cv_runs: usize,
    pub cv_folds: usize,
    pub undersample: bool,
    pub forest_trees: usize,
    pub forest_depth: usize,
    pub split_ratio: f64,
    pub bins: usize,
    pub best_worst_grid: Vec<usize>,
    pub scenario: ScenarioChoice,
    pub synth_users: Option<usize>,
    pub synth_days: Option<i64>,
    pub synth_activity_exponent: Option<f64>,
    pub synth_activity_coupling: Option<f64>,
    pub synth_toxicity_coupling: Option<f64>,
    pub synth_extreme_fraction: Option<f64>,
    pub synth_base_blocks: Option<f64>,
    pub synth_dispersion: Option<f64>,
    /// Lines to corrupt in the emitted synthetic replay.
    pub synth_malformed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let boost = BoostParams::default();
        let cv = CvParams::default();
        let forest = ForestParams::default();
        let regress = RegressionParams::default();
        RunConfig {
            replay: None,
            ratings: None,
            quality: None,
            manifest: None,
            out_dir: PathBuf::from("out"),
            window_start: None,
            window_end: None,
            min_posts: 10,
            majority_lang: "en".into(),
            quantiles: DEFAULT_QUANTILE_GRID.to_vec(),
            definition: DefinitionChoice::Both,
            tox_mode: ToxChoice::Sidecar,
            seed: 7,
            jobs: 0,
            estimators: boost.n_estimators,
            learning_rate: boost.learning_rate,
            max_depth: boost.max_depth,
            subsample: boost.subsample,
            lambda: boost.lambda,
            min_child_weight: boost.min_child_weight,
            cv_runs: cv.runs,
            cv_folds: cv.folds,
            undersample: cv.undersample,
            forest_trees: forest.n_trees,
            forest_depth: forest.max_depth,
            split_ratio: regress.split_ratio,
            bins: regress.bins,
            best_worst_grid: vec![1, 2, 4, 8, 16, 32, 64],
            scenario: ScenarioChoice::Default,
            synth_users: None,
            synth_days: None,
            synth_activity_exponent: None,
            synth_activity_coupling: None,
            synth_toxicity_coupling: None,
            synth_extreme_fraction: None,
            synth_base_blocks: None,
            synth_dispersion: None,
            synth_malformed: 0,
        }
    }
}

/// Every key the config format accepts, in canonical order.
pub const CONFIG_KEYS: [&str; 37] = [
    "best_worst_grid",
    "bins",
    "cv_folds",
    "cv_runs",
    "definition",
    "estimators",
    "forest_depth",
    "forest_trees",
    "jobs",
    "lambda",
    "learning_rate",
    "majority_lang",
    "manifest",
    "max_depth",
    "min_child_weight",
    "min_posts",
    "out_dir",
    "quality",
    "quantiles",
    "ratings",
    "replay",
    "scenario",
    "seed",
    "split_ratio",
    "subsample",
    "synth_activity_coupling",
    "synth_activity_exponent",
    "synth_base_blocks",
    "synth_days",
    "synth_dispersion",
    "synth_extreme_fraction",
    "synth_malformed",
    "synth_users",
    "tox_mode",
    "undersample",
    "window_end",
    "window_start",
];

impl RunConfig {
    /// Parses a flat key=value document on top of the defaults.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "config line {} is not `key = value`: `{}`",
                    lineno + 1,
                    raw.trim()
                )));
            };
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and parses a config file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        RunConfig::parse(&text)
    }

    /// Sets one key from its text value; unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "replay" => self.replay = opt_path(value),
            "ratings" => self.ratings = opt_path(value),
            "quality" => self.quality = opt_path(value),
            "manifest" => self.manifest = opt_path(value),
            "out_dir" => {
                if value.is_empty() {
                    return Err(Error::Config("out_dir must not be empty".into()));
                }
                self.out_dir = PathBuf::from(value);
            }
            "window_start" => self.window_start = opt_ts(key, value)?,
            "window_end" => self.window_end = opt_ts(key, value)?,
            "min_posts" => self.min_posts = num(key, value)?,
            "majority_lang" => {
                if value.is_empty() {
                    return Err(Error::Config("majority_lang must not be empty".into()));
                }
                self.majority_lang = value.to_string();
            }
            "quantiles" => self.quantiles = float_list(key, value)?,
            "definition" => {
                self.definition = DefinitionChoice::parse(value).ok_or_else(|| {
                    Error::Config(format!("definition must be raw, norm, or both, got `{value}`"))
                })?;
            }
            "tox_mode" => {
                self.tox_mode = ToxChoice::parse(value).ok_or_else(|| {
                    Error::Config(format!("tox_mode must be sidecar or lexicon, got `{value}`"))
                })?;
            }
            "seed" => self.seed = num(key, value)?,
            "jobs" => self.jobs = num(key, value)?,
            "estimators" => self.estimators = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "max_depth" => self.max_depth = num(key, value)?,
            "subsample" => self.subsample = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "min_child_weight" => self.min_child_weight = num(key, value)?,
            "cv_runs" => self.cv_runs = num(key, value)?,
            "cv_folds" => self.cv_folds = num(key, value)?,
            "undersample" => self.undersample = boolean(key, value)?,
            "forest_trees" => self.forest_trees = num(key, value)?,
            "forest_depth" => self.forest_depth = num(key, value)?,
            "split_ratio" => self.split_ratio = num(key, value)?,
            "bins" => self.bins = num(key, value)?,
            "best_worst_grid" => self.best_worst_grid = usize_list(key, value)?,
            "scenario" => {
                self.scenario = ScenarioChoice::parse(value).ok_or_else(|| {
                    Error::Config(format!(
                        "scenario must be default, classification, or regression, got `{value}`"
                    ))
                })?;
            }
            "synth_users" => self.synth_users = opt_num(key, value)?,
            "synth_days" => self.synth_days = opt_num(key, value)?,
            "synth_activity_exponent" => self.synth_activity_exponent = opt_num(key, value)?,
            "synth_activity_coupling" => self.synth_activity_coupling = opt_num(key, value)?,
            "synth_toxicity_coupling" => self.synth_toxicity_coupling = opt_num(key, value)?,
            "synth_extreme_fraction" => self.synth_extreme_fraction = opt_num(key, value)?,
            "synth_base_blocks" => self.synth_base_blocks = opt_num(key, value)?,
            "synth_dispersion" => self.synth_dispersion = opt_num(key, value)?,
            "synth_malformed" => self.synth_malformed = num(key, value)?,
            _ => {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
        }
        Ok(())
    }

    /// Cross-field checks run after all keys are applied.
    pub fn validate(&self) -> Result<()> {
        if self.quantiles.is_empty() {
            return Err(Error::Config("quantiles must not be empty".into()));
        }
        for &q in &self.quantiles {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::Config(format!(
                    "quantiles must lie strictly between 0 and 1, got {q}"
                )));
            }
        }
        for pair in self.quantiles.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::Config(format!(
                    "quantiles must be strictly increasing, got {} before {}",
                    pair[0], pair[1]
                )));
            }
        }
        if self.window_start.is_some() != self.window_end.is_some() {
            return Err(Error::Config(
                "window_start and window_end must be set together".into(),
            ));
        }
        if let (Some(start), Some(end)) = (self.window_start, self.window_end) {
            if start >= end {
                return Err(Error::Config(format!(
                    "window_start {start} must precede window_end {end}"
                )));
            }
        }
        if self.min_posts == 0 {
            return Err(Error::Config("min_posts must be at least 1".into()));
        }
        if self.estimators == 0 || self.forest_trees == 0 {
            return Err(Error::Config("tree counts must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.cv_runs == 0 || self.cv_folds < 2 {
            return Err(Error::Config(
                "cross-validation needs at least 1 run and 2 folds".into(),
            ));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split_ratio must lie strictly between 0 and 1, got {}",
                self.split_ratio
            )));
        }
        if self.bins == 0 {
            return Err(Error::Config("bins must be at least 1".into()));
        }
        if self.best_worst_grid.is_empty() || self.best_worst_grid.contains(&0) {
            return Err(Error::Config(
                "best_worst_grid needs at least one positive entry".into(),
            ));
        }
        Ok(())
    }

    /// Renders every key in canonical order with its resolved value.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.render(key));
            out.push('\n');
        }
        out
    }

    fn render(&self, key: &str) -> String {
        match key {
            "replay" => path_str(&self.replay),
            "ratings" => path_str(&self.ratings),
            "quality" => path_str(&self.quality),
            "manifest" => path_str(&self.manifest),
            "out_dir" => self.out_dir.display().to_string(),
            "window_start" => ts_str(&self.window_start),
            "window_end" => ts_str(&self.window_end),
            "min_posts" => self.min_posts.to_string(),
            "majority_lang" => self.majority_lang.clone(),
            "quantiles" => join_floats(&self.quantiles),
            "definition" => self.definition.as_str().into(),
            "tox_mode" => self.tox_mode.as_str().into(),
            "seed" => self.seed.to_string(),
            "jobs" => self.jobs.to_string(),
            "estimators" => self.estimators.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "max_depth" => self.max_depth.to_string(),
            "subsample" => self.subsample.to_string(),
            "lambda" => self.lambda.to_string(),
            "min_child_weight" => self.min_child_weight.to_string(),
            "cv_runs" => self.cv_runs.to_string(),
            "cv_folds" => self.cv_folds.to_string(),
            "undersample" => self.undersample.to_string(),
            "forest_trees" => self.forest_trees.to_string(),
            "forest_depth" => self.forest_depth.to_string(),
            "split_ratio" => self.split_ratio.to_string(),
            "bins" => self.bins.to_string(),
            "best_worst_grid" => self
                .best_worst_grid
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(","),
            "scenario" => self.scenario.as_str().into(),
            "synth_users" => opt_str(&self.synth_users),
            "synth_days" => opt_str(&self.synth_days),
            "synth_activity_exponent" => opt_str(&self.synth_activity_exponent),
            "synth_activity_coupling" => opt_str(&self.synth_activity_coupling),
            "synth_toxicity_coupling" => opt_str(&self.synth_toxicity_coupling),
            "synth_extreme_fraction" => opt_str(&self.synth_extreme_fraction),
            "synth_base_blocks" => opt_str(&self.synth_base_blocks),
            "synth_dispersion" => opt_str(&self.synth_dispersion),
            "synth_malformed" => self.synth_malformed.to_string(),
            _ => unreachable!("render covers every config key"),
        }
    }

    /// Hex SHA-256 of the canonical rendering.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn user_filter(&self) -> UserFilter {
        UserFilter {
            min_posts: self.min_posts,
            majority_lang: self.majority_lang.clone(),
        }
    }

    pub fn boost_params(&self, seed: u64) -> BoostParams {
        BoostParams {
            n_estimators: self.estimators,
            learning_rate: self.learning_rate,
            max_depth: self.max_depth,
            subsample: self.subsample,
            lambda: self.lambda,
            min_child_weight: self.min_child_weight,
            seed,
        }
    }

    pub fn cv_params(&self, seed: u64) -> CvParams {
        CvParams {
            runs: self.cv_runs,
            folds: self.cv_folds,
            seed,
            undersample: self.undersample,
        }
    }

    pub fn regression_params(&self, seed: u64) -> RegressionParams {
        RegressionParams {
            forest: ForestParams {
                n_trees: self.forest_trees,
                max_depth: self.forest_depth,
                min_child_weight: 2.0,
                seed,
            },
            split_ratio: self.split_ratio,
            split_seed: seed,
            bins: self.bins,
        }
    }

    /// Builds the generator scenario: preset first, overrides on top.
    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        let mut sc = match self.scenario {
            ScenarioChoice::Default => ScenarioConfig {
                seed: self.seed,
                ..ScenarioConfig::default()
            },
            ScenarioChoice::Classification => ScenarioConfig::classification(self.seed),
            ScenarioChoice::Regression => ScenarioConfig::regression(self.seed),
        };
        if let Some(n) = self.synth_users {
            sc.n_users = n;
        }
        if let Some(d) = self.synth_days {
            sc.window_days = d;
        }
        if let Some(v) = self.synth_activity_exponent {
            sc.activity_exponent = v;
        }
        if let Some(v) = self.synth_activity_coupling {
            sc.activity_coupling = v;
        }
        if let Some(v) = self.synth_toxicity_coupling {
            sc.toxicity_coupling = v;
        }
        if let Some(v) = self.synth_extreme_fraction {
            sc.extreme_fraction = v;
        }
        if let Some(v) = self.synth_base_blocks {
            sc.base_blocks = v;
        }
        if let Some(v) = self.synth_dispersion {
            sc.dispersion = v;
        }
        sc.roster_min_posts = self.min_posts;
        sc.roster_lang = self.majority_lang.clone();
        sc.validate()?;
        Ok(sc)
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    if value.is_empty() {
        None
    } else {
        Some(PathBuf::from(value))
    }
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn ts_str(t: &Option<DateTime<Utc>>) -> String {
    t.map(|t| t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
        .unwrap_or_default()
}

fn opt_str<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|v| v.to_string()).unwrap_or_default()
}

fn opt_ts(key: &str, value: &str) -> Result<Option<DateTime<Utc>>> {
    if value.is_empty() {
        return Ok(None);
    }
    DateTime::parse_from_rfc3339(value)
        .map(|t| Some(t.with_timezone(&Utc)))
        .map_err(|e| Error::Config(format!("{key} must be an RFC 3339 timestamp: {e}")))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} has invalid value `{value}`: {e}")))
}

fn opt_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if value.is_empty() {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key} must be true or false, got `{value}`"
        ))),
    }
}

fn float_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn usize_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}
