//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment. Every key has a default, so an
//! empty file is valid. Unknown keys are rejected and every error names the
//! offending key.
//!
//! ```text
//! synth.n = 400
//! noise.kind = uniform      # none | uniform | pair
//! train.runs = 5
//! corr.gamma = 0.8
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::SplitPolicy;
use crate::noise::{validate_pair_map, NoiseKind, NoiseSpec, SynthSpec};
use crate::optim::OptimizerKind;
use crate::trainer::ProtocolConfig;

/// Threshold grid used when no `sweep.*` keys are given.
pub const DEFAULT_SWEEP_GRID: [f64; 5] = [0.6, 0.7, 0.8, 0.9, 0.95];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Directory holding `graph.txt`, `attrs.bin` and `labels.txt`.
    pub data_dir: Option<PathBuf>,
    /// Optional split file; when absent a split is drawn per run.
    pub split_file: Option<PathBuf>,
    pub synth: SynthSpec,
    pub noise: NoiseSpec,
    /// `false` (`noise.kind = none`) keeps the clean labels.
    pub inject_noise: bool,
    pub protocol: ProtocolConfig,
    pub sweep_gamma: Vec<f64>,
    pub sweep_omega: Vec<f64>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            split_file: None,
            synth: SynthSpec::default(),
            noise: NoiseSpec::default(),
            inject_noise: true,
            protocol: ProtocolConfig::default(),
            sweep_gamma: DEFAULT_SWEEP_GRID.to_vec(),
            sweep_omega: DEFAULT_SWEEP_GRID.to_vec(),
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Every accepted key, in the order `to_text` writes them.
pub const KEYS: &[&str] = &[
    "data.dir",
    "split.rate",
    "split.policy",
    "split.file",
    "synth.n",
    "synth.C",
    "synth.p_in",
    "synth.p_out",
    "synth.d",
    "synth.signal",
    "synth.seed",
    "noise.kind",
    "noise.rate",
    "noise.seed",
    "noise.pair_map",
    "enc.layers",
    "enc.hidden",
    "enc.embed",
    "aug.edge_drop",
    "aug.attr_mask",
    "loss.tau",
    "loss.contrastive_weight",
    "corr.gamma",
    "corr.omega",
    "train.epochs",
    "train.warmup",
    "train.period",
    "train.lr",
    "train.weight_decay",
    "train.optimizer",
    "train.seed",
    "train.runs",
    "train.use_contrastive",
    "train.use_correction",
    "sweep.gamma",
    "sweep.omega",
    "out_dir",
];

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{raw}`")))
}

fn list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| value(key, s))
        .collect()
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Parses a config document on top of the defaults.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_text(text, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Applies every `key = value` line of `text`; does not validate.
    pub fn merge_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, val) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), val.trim())?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides, e.g. from the command line.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (key, val) = o
                .split_once('=')
                .ok_or_else(|| Error::config(o, "override must look like key=value"))?;
            self.set(key.trim(), val.trim())?;
        }
        Ok(())
    }

    /// Sets one key. Values are range-checked by `validate`.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let train = &mut self.protocol.train;
        match key {
            "data.dir" => self.data_dir = (!raw.is_empty()).then(|| PathBuf::from(raw)),
            "split.rate" => self.protocol.label_rate = value(key, raw)?,
            "split.policy" => {
                self.protocol.split_policy = match raw {
                    "stratified" => SplitPolicy::Stratified,
                    "random" => SplitPolicy::Random,
                    _ => return Err(Error::config(key, format!("expected stratified|random, got `{raw}`"))),
                }
            }
            "split.file" => self.split_file = (!raw.is_empty()).then(|| PathBuf::from(raw)),
            "synth.n" => self.synth.n = value(key, raw)?,
            "synth.C" => self.synth.num_classes = value(key, raw)?,
            "synth.p_in" => self.synth.p_in = value(key, raw)?,
            "synth.p_out" => self.synth.p_out = value(key, raw)?,
            "synth.d" => self.synth.dim = value(key, raw)?,
            "synth.signal" => self.synth.attr_signal = value(key, raw)?,
            "synth.seed" => self.synth.seed = value(key, raw)?,
            "noise.kind" => {
                self.inject_noise = raw != "none";
                if self.inject_noise {
                    self.noise.kind = raw.parse::<NoiseKind>()?;
                }
            }
            "noise.rate" => self.noise.rate = value(key, raw)?,
            "noise.seed" => self.noise.seed = value(key, raw)?,
            "noise.pair_map" => self.noise.pair_map = if raw.is_empty() { None } else { Some(list(key, raw)?) },
            "enc.layers" => train.encoder.num_layers = value(key, raw)?,
            "enc.hidden" => train.encoder.hidden_dim = value(key, raw)?,
            "enc.embed" => train.encoder.embed_dim = value(key, raw)?,
            "aug.edge_drop" => train.augment.edge_drop_prob = value(key, raw)?,
            "aug.attr_mask" => train.augment.attr_mask_prob = value(key, raw)?,
            "loss.tau" => train.loss.temperature = value(key, raw)?,
            "loss.contrastive_weight" => train.loss.contrastive_weight = value(key, raw)?,
            "corr.gamma" => train.correction.gamma = value(key, raw)?,
            "corr.omega" => train.correction.omega = value(key, raw)?,
            "train.epochs" => train.epochs = value(key, raw)?,
            "train.warmup" => train.warmup = value(key, raw)?,
            "train.period" => train.correction_period = value(key, raw)?,
            "train.lr" => train.learning_rate = value(key, raw)?,
            "train.weight_decay" => train.weight_decay = value(key, raw)?,
            "train.optimizer" => train.optimizer = OptimizerKind::from_str(raw)?,
            "train.seed" => train.seed = value(key, raw)?,
            "train.runs" => self.protocol.num_runs = value(key, raw)?,
            "train.use_contrastive" => train.use_contrastive = value(key, raw)?,
            "train.use_correction" => train.use_correction = value(key, raw)?,
            "sweep.gamma" => self.sweep_gamma = list(key, raw)?,
            "sweep.omega" => self.sweep_omega = list(key, raw)?,
            "out_dir" => self.out_dir = PathBuf::from(raw),
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        if !(0.0..=1.0).contains(&self.noise.rate) {
            return Err(Error::config("noise.rate", "must lie in [0, 1]"));
        }
        if let Some(map) = &self.noise.pair_map {
            validate_pair_map(map, map.len())
                .map_err(|e| Error::config("noise.pair_map", e.to_string()))?;
        }
        if !(self.protocol.label_rate > 0.0 && self.protocol.label_rate < 1.0) {
            return Err(Error::config("split.rate", "must lie in (0, 1)"));
        }
        if self.protocol.num_runs == 0 {
            return Err(Error::config("train.runs", "must be at least 1"));
        }
        self.protocol.train.validate()?;
        for (key, grid, lo_open) in [("sweep.gamma", &self.sweep_gamma, true), ("sweep.omega", &self.sweep_omega, false)] {
            if grid.is_empty() {
                return Err(Error::config(key, "grid is empty"));
            }
            for &v in grid {
                let ok = if lo_open { v > -1.0 && v <= 1.0 } else { (0.0..=1.0).contains(&v) };
                if !ok {
                    return Err(Error::config(key, format!("{v} is outside the allowed range")));
                }
            }
        }
        Ok(())
    }

    /// The corruption applied to every run, if any.
    pub fn noise_spec(&self) -> Option<&NoiseSpec> {
        self.inject_noise.then_some(&self.noise)
    }

    /// Current value of `key` in the same syntax `set` accepts.
    pub fn get(&self, key: &str) -> Result<String> {
        let train = &self.protocol.train;
        let noise = &self.noise;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Ok(match key {
            "data.dir" => path(&self.data_dir),
            "split.rate" => self.protocol.label_rate.to_string(),
            "split.policy" => match self.protocol.split_policy {
                SplitPolicy::Stratified => "stratified".into(),
                SplitPolicy::Random => "random".into(),
            },
            "split.file" => path(&self.split_file),
            "synth.n" => self.synth.n.to_string(),
            "synth.C" => self.synth.num_classes.to_string(),
            "synth.p_in" => self.synth.p_in.to_string(),
            "synth.p_out" => self.synth.p_out.to_string(),
            "synth.d" => self.synth.dim.to_string(),
            "synth.signal" => self.synth.attr_signal.to_string(),
            "synth.seed" => self.synth.seed.to_string(),
            "noise.kind" if !self.inject_noise => "none".into(),
            "noise.kind" => noise.kind.to_string(),
            "noise.rate" => noise.rate.to_string(),
            "noise.seed" => noise.seed.to_string(),
            "noise.pair_map" => noise.pair_map.as_deref().map(join).unwrap_or_default(),
            "enc.layers" => train.encoder.num_layers.to_string(),
            "enc.hidden" => train.encoder.hidden_dim.to_string(),
            "enc.embed" => train.encoder.embed_dim.to_string(),
            "aug.edge_drop" => train.augment.edge_drop_prob.to_string(),
            "aug.attr_mask" => train.augment.attr_mask_prob.to_string(),
            "loss.tau" => train.loss.temperature.to_string(),
            "loss.contrastive_weight" => train.loss.contrastive_weight.to_string(),
            "corr.gamma" => train.correction.gamma.to_string(),
            "corr.omega" => train.correction.omega.to_string(),
            "train.epochs" => train.epochs.to_string(),
            "train.warmup" => train.warmup.to_string(),
            "train.period" => train.correction_period.to_string(),
            "train.lr" => train.learning_rate.to_string(),
            "train.weight_decay" => train.weight_decay.to_string(),
            "train.optimizer" => train.optimizer.to_string(),
            "train.seed" => train.seed.to_string(),
            "train.runs" => self.protocol.num_runs.to_string(),
            "train.use_contrastive" => train.use_contrastive.to_string(),
            "train.use_correction" => train.use_correction.to_string(),
            "sweep.gamma" => join(&self.sweep_gamma),
            "sweep.omega" => join(&self.sweep_omega),
            "out_dir" => self.out_dir.display().to_string(),
            _ => return Err(Error::config(key, "unknown key")),
        })
    }

    /// Full config as a document that `parse` reads back to an equal value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let v = self.get(key).expect("listed key");
            let _ = writeln!(out, "{key} = {v}");
        }
        out
    }
}
