//! Flat `key = value` run configuration with overrides and a fingerprint.
//!
//! Lines starting with `#` and text after a `#` are comments. Every key has a
//! default; unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::data::SplitPolicy;
use crate::error::{Error, Result};
use crate::eval::FscoreMode;
use crate::model::ModelConfig;
use crate::train::TrainConfig;

/// F-score combination, possibly chosen from the dataset name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FscoreSetting {
    #[default]
    Auto,
    Fixed(FscoreMode),
}

impl FscoreSetting {
    pub fn resolve(self, dataset: &str) -> FscoreMode {
        match self {
            FscoreSetting::Auto => FscoreMode::for_dataset(dataset),
            FscoreSetting::Fixed(m) => m,
        }
    }
}

impl fmt::Display for FscoreSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FscoreSetting::Auto => f.write_str("auto"),
            FscoreSetting::Fixed(m) => m.fmt(f),
        }
    }
}

impl FromStr for FscoreSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            Ok(FscoreSetting::Auto)
        } else {
            s.parse().map(FscoreSetting::Fixed)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub fscore_mode: FscoreSetting,
    pub split_policy: SplitPolicy,
    /// Target dataset name; empty means the stem of the data file.
    pub target: String,
    pub folds: usize,
    /// Extra containers for the augment and transfer policies.
    pub extra_data: Vec<PathBuf>,
    pub strict_load: bool,
    pub synth_videos: usize,
    pub synth_frames: usize,
    pub synth_users: usize,
    pub synth_captions: usize,
    /// Frames of the random input used by `trace`.
    pub trace_frames: usize,
    /// Frames of the random video used by `gradcheck`.
    pub gradcheck_frames: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            fscore_mode: FscoreSetting::Auto,
            split_policy: SplitPolicy::Standard,
            target: String::new(),
            folds: 5,
            extra_data: Vec::new(),
            strict_load: false,
            synth_videos: 10,
            synth_frames: 120,
            synth_users: 5,
            synth_captions: 3,
            trace_frames: 60,
            gradcheck_frames: 24,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_with<T>(key: &str, value: &str, f: impl FnOnce(&str) -> Result<T>) -> Result<T> {
    f(value).map_err(|e| Error::Config(format!("`{key}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl RunConfig {
    /// Every key paired with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let m = &self.model;
        let t = &self.train;
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        vec![
            ("feat_dim", m.feat_dim.to_string()),
            ("audio_dim", m.audio_dim.to_string()),
            ("caption_dim", m.caption_dim.to_string()),
            ("lambda", m.lambda.to_string()),
            ("heads", m.heads.to_string()),
            ("layers", m.layers.to_string()),
            ("shots", join(&m.shots)),
            ("pad_ratio", m.pad_ratio.to_string()),
            ("filters_per_branch", m.filters_per_branch.to_string()),
            ("head_hidden", m.head_hidden.to_string()),
            ("caption_mode", m.caption_mode.to_string()),
            ("sharing", m.sharing.to_string()),
            ("lr", t.lr.to_string()),
            ("epochs", t.epochs.to_string()),
            ("seed", t.seed.to_string()),
            ("alpha", t.focal.alpha.to_string()),
            ("gamma", t.focal.gamma.to_string()),
            ("eval_every", t.eval_every.to_string()),
            ("checkpoint_every", t.checkpoint_every.to_string()),
            ("budget_ratio", t.summary.budget_ratio.to_string()),
            (
                "kts_max_change_points",
                t.summary.kts.max_change_points.map_or("auto".into(), |v| v.to_string()),
            ),
            ("kts_penalty", t.summary.kts.penalty.to_string()),
            ("fscore_mode", self.fscore_mode.to_string()),
            ("split_policy", self.split_policy.to_string()),
            ("target", self.target.clone()),
            ("folds", self.folds.to_string()),
            (
                "extra_data",
                self.extra_data.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","),
            ),
            ("strict_load", self.strict_load.to_string()),
            ("synth_videos", self.synth_videos.to_string()),
            ("synth_frames", self.synth_frames.to_string()),
            ("synth_users", self.synth_users.to_string()),
            ("synth_captions", self.synth_captions.to_string()),
            ("trace_frames", self.trace_frames.to_string()),
            ("gradcheck_frames", self.gradcheck_frames.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "feat_dim" => m.feat_dim = parse(key, value)?,
            "audio_dim" => m.audio_dim = parse(key, value)?,
            "caption_dim" => m.caption_dim = parse(key, value)?,
            "lambda" => m.lambda = parse(key, value)?,
            "heads" => m.heads = parse(key, value)?,
            "layers" => m.layers = parse(key, value)?,
            "shots" => m.shots = parse_list(key, value)?,
            "pad_ratio" => m.pad_ratio = parse(key, value)?,
            "filters_per_branch" => m.filters_per_branch = parse(key, value)?,
            "head_hidden" => m.head_hidden = parse(key, value)?,
            "caption_mode" => m.caption_mode = parse_with(key, value, str::parse)?,
            "sharing" => m.sharing = parse_with(key, value, str::parse)?,
            "lr" => t.lr = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "alpha" => t.focal.alpha = parse(key, value)?,
            "gamma" => t.focal.gamma = parse(key, value)?,
            "eval_every" => t.eval_every = parse(key, value)?,
            "checkpoint_every" => t.checkpoint_every = parse(key, value)?,
            "budget_ratio" => t.summary.budget_ratio = parse(key, value)?,
            "kts_max_change_points" => {
                t.summary.kts.max_change_points = if value == "auto" { None } else { Some(parse(key, value)?) }
            }
            "kts_penalty" => t.summary.kts.penalty = parse(key, value)?,
            "fscore_mode" => self.fscore_mode = parse_with(key, value, str::parse)?,
            "split_policy" => self.split_policy = parse_with(key, value, str::parse)?,
            "target" => self.target = value.to_string(),
            "folds" => self.folds = parse(key, value)?,
            "extra_data" => self.extra_data = parse_list(key, value)?,
            "strict_load" => self.strict_load = parse_bool(key, value)?,
            "synth_videos" => self.synth_videos = parse(key, value)?,
            "synth_frames" => self.synth_frames = parse(key, value)?,
            "synth_users" => self.synth_users = parse(key, value)?,
            "synth_captions" => self.synth_captions = parse(key, value)?,
            "trace_frames" => self.trace_frames = parse(key, value)?,
            "gradcheck_frames" => self.gradcheck_frames = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            self.set(k.trim(), v).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", lineno + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Applies a single `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not `key=value`")))?;
        self.set(k.trim(), v)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.folds < 2 && self.split_policy != SplitPolicy::Transfer {
            return Err(Error::Config(format!("`folds` must be at least 2, got {}", self.folds)));
        }
        Ok(())
    }

    /// Normalized text form: every key, one per line, in a fixed order.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of the normalized text, hex encoded.
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
