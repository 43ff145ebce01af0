//! `key = value` run configuration.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imgpipe::{Normalization, SplitParams, DEFAULT_RATIOS};
use crate::modelzoo::{ArchKind, ModelConfig, DEFAULT_DROPOUT, DEFAULT_INPUT_SIZE, DEFAULT_L2_LAMBDA};
use crate::optim::{FreezeMode, RmsPropConfig, DEFAULT_EPSILON, DEFAULT_LR, DEFAULT_RHO};

pub const DEFAULT_EPOCHS: usize = 50;
pub const DEFAULT_BATCH_SIZE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitMode {
    /// All variants of a source image land in one split.
    LeakageSafe,
    /// Every augmented sample is assigned on its own.
    PerVariant,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::LeakageSafe => "leakage-safe",
            SplitMode::PerVariant => "per-variant",
        })
    }
}

impl FromStr for SplitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leakage-safe" => Ok(SplitMode::LeakageSafe),
            "per-variant" => Ok(SplitMode::PerVariant),
            _ => Err(Error::Config(format!(
                "unknown split mode '{s}' (expected leakage-safe or per-variant)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub arch: ArchKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub dropout: f64,
    /// Used only by architectures that carry an L2 term.
    pub l2_lambda: f64,
    pub seed: u64,
    pub width_divisor: usize,
    pub input_size: usize,
    pub normalize: Normalization,
    pub freeze: FreezeMode,
    pub split: SplitMode,
    pub deterministic: bool,
    /// Stop once the epoch-end train accuracy reaches this value.
    pub target_train_accuracy: Option<f64>,
    /// Write `epoch_NNNN.ckpt` for every epoch besides `best` and `last`.
    pub keep_epoch_checkpoints: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            arch: ArchKind::Arch1,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            lr: DEFAULT_LR,
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
            dropout: DEFAULT_DROPOUT,
            l2_lambda: DEFAULT_L2_LAMBDA,
            seed: 0,
            width_divisor: 1,
            input_size: DEFAULT_INPUT_SIZE,
            normalize: Normalization::default(),
            freeze: FreezeMode::PretrainedFrozen,
            split: SplitMode::LeakageSafe,
            deterministic: false,
            target_train_accuracy: None,
            keep_epoch_checkpoints: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value '{value}' for '{key}'")))
}

impl TrainingConfig {
    pub const KEYS: [&'static str; 17] = [
        "arch",
        "epochs",
        "batch_size",
        "lr",
        "rho",
        "epsilon",
        "dropout",
        "l2_lambda",
        "seed",
        "width_divisor",
        "input_size",
        "normalize",
        "freeze",
        "split",
        "deterministic",
        "target_train_accuracy",
        "keep_epoch_checkpoints",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "arch" => self.arch = value.parse()?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "rho" => self.rho = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "l2_lambda" => self.l2_lambda = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "width_divisor" => self.width_divisor = parse(key, value)?,
            "input_size" => self.input_size = parse(key, value)?,
            "normalize" => self.normalize = value.parse()?,
            "freeze" => self.freeze = value.parse()?,
            "split" => self.split = value.parse()?,
            "deterministic" => self.deterministic = parse(key, value)?,
            "target_train_accuracy" => {
                self.target_train_accuracy = match value {
                    "none" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "keep_epoch_checkpoints" => self.keep_epoch_checkpoints = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Parses a config file on top of the defaults. Blank lines and `#`
    /// comments are ignored; later lines win.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainingConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", i + 1)))?;
            cfg.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, e)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let target = self
            .target_train_accuracy
            .map_or_else(|| "none".to_string(), |v| v.to_string());
        let values = [
            self.arch.to_string(),
            self.epochs.to_string(),
            self.batch_size.to_string(),
            self.lr.to_string(),
            self.rho.to_string(),
            self.epsilon.to_string(),
            self.dropout.to_string(),
            self.l2_lambda.to_string(),
            self.seed.to_string(),
            self.width_divisor.to_string(),
            self.input_size.to_string(),
            self.normalize.to_string(),
            self.freeze.to_string(),
            self.split.to_string(),
            self.deterministic.to_string(),
            target,
            self.keep_epoch_checkpoints.to_string(),
        ];
        Self::KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.arch == ArchKind::Vgg16Base {
            return Err(Error::Config(
                "vgg16-base has no classification head; use arch1 or arch2".into(),
            ));
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("input_size", self.input_size),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if let Some(t) = self.target_train_accuracy {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!(
                    "target_train_accuracy must be in [0, 1], got {t}"
                )));
            }
        }
        self.optimizer().validate()?;
        self.model().build()?;
        Ok(())
    }

    pub fn optimizer(&self) -> RmsPropConfig {
        RmsPropConfig {
            lr: self.lr,
            rho: self.rho,
            epsilon: self.epsilon,
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            arch: self.arch,
            width_divisor: self.width_divisor,
            input_size: self.input_size,
            dropout: self.dropout,
            l2_lambda: self.l2_lambda,
            normalize: self.normalize,
        }
    }

    pub fn split_params(&self) -> SplitParams {
        SplitParams {
            seed: self.seed,
            ratios: DEFAULT_RATIOS,
            leakage_safe: self.split == SplitMode::LeakageSafe,
        }
    }
}
