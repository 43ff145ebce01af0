//! Training checkpoints stored in the weight-manifest format.
//!
//! Parameters are stored as `param/<name>`, optimizer accumulators as
//! `rmsprop/<name>`. Run settings, the epoch, the validation accuracy and the
//! training history so far go into meta entries; floats use Rust's shortest
//! round-trip formatting so a reload is exact.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use super::arch::{build, ArchKind, ArchitectureSpec};
use super::manifest::WeightManifest;
use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::harness::EpochRecord;
use crate::imgpipe::Normalization;
use crate::optim::RmsPropState;

const PARAM_PREFIX: &str = "param/";
const RMSPROP_PREFIX: &str = "rmsprop/";

/// Settings needed to rebuild the network a checkpoint belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub arch: ArchKind,
    pub width_divisor: usize,
    pub input_size: usize,
    pub dropout: f64,
    pub l2_lambda: f64,
    pub normalize: Normalization,
}

impl ModelConfig {
    pub fn build(&self) -> Result<ArchitectureSpec> {
        build(self.arch, self.width_divisor, self.input_size)?
            .with_dropout(self.dropout)?
            .with_l2_lambda(self.l2_lambda)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    /// 1-based epoch after which this state was saved.
    pub epoch: usize,
    pub val_accuracy: f64,
    pub params: ParamSet<f32>,
    pub optimizer: RmsPropState<f32>,
    pub history: Vec<EpochRecord>,
}

fn load_err(reason: String) -> Error {
    Error::Load { offset: 0, reason }
}

fn meta_get<T: FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = meta
        .get(key)
        .ok_or_else(|| load_err(format!("checkpoint meta lacks '{key}'")))?;
    raw.parse()
        .map_err(|_| load_err(format!("checkpoint meta '{key}' has bad value '{raw}'")))
}

fn encode_history(history: &[EpochRecord]) -> String {
    history
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
            )
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn decode_history(s: &str) -> Result<Vec<EpochRecord>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|rec| {
            let f: Vec<&str> = rec.split(',').collect();
            let bad = || load_err(format!("bad history record '{rec}'"));
            let [e, tl, ta, vl, va] = f[..] else { return Err(bad()) };
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad());
            Ok(EpochRecord {
                epoch: e.parse().map_err(|_| bad())?,
                train_loss: num(tl)?,
                train_acc: num(ta)?,
                val_loss: num(vl)?,
                val_acc: num(va)?,
            })
        })
        .collect()
}

impl Checkpoint {
    pub fn to_manifest(&self) -> WeightManifest {
        let m = &self.model;
        let meta: BTreeMap<String, String> = [
            ("arch", m.arch.to_string()),
            ("width_divisor", m.width_divisor.to_string()),
            ("input_size", m.input_size.to_string()),
            ("dropout", m.dropout.to_string()),
            ("l2_lambda", m.l2_lambda.to_string()),
            ("normalize", m.normalize.to_string()),
            ("epoch", self.epoch.to_string()),
            ("val_accuracy", self.val_accuracy.to_string()),
            ("step_count", self.optimizer.step_count().to_string()),
            ("history", encode_history(&self.history)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let mut tensors: Vec<_> = self
            .params
            .iter()
            .map(|(n, t)| (format!("{PARAM_PREFIX}{n}"), t.clone()))
            .collect();
        tensors.extend(
            self.optimizer
                .mean_square()
                .iter()
                .map(|(n, t)| (format!("{RMSPROP_PREFIX}{n}"), t.clone())),
        );
        WeightManifest { meta, tensors }
    }

    /// Rebuilds a checkpoint, checking every parameter against the recorded
    /// architecture.
    pub fn from_manifest(manifest: WeightManifest) -> Result<Self> {
        let meta = &manifest.meta;
        let model = ModelConfig {
            arch: meta_get(meta, "arch")?,
            width_divisor: meta_get(meta, "width_divisor")?,
            input_size: meta_get(meta, "input_size")?,
            dropout: meta_get(meta, "dropout")?,
            l2_lambda: meta_get(meta, "l2_lambda")?,
            normalize: meta_get(meta, "normalize")?,
        };
        let arch = model
            .build()
            .map_err(|e| load_err(format!("checkpoint settings invalid: {e}")))?;
        let epoch = meta_get(meta, "epoch")?;
        let val_accuracy = meta_get(meta, "val_accuracy")?;
        let step_count = meta_get(meta, "step_count")?;
        let history = decode_history(meta.get("history").map(String::as_str).unwrap_or(""))?;

        let mut params = ParamSet::zeros(&arch)?;
        let mut seen = 0;
        let mut mean_square = Vec::new();
        for (name, t) in manifest.tensors {
            if let Some(p) = name.strip_prefix(PARAM_PREFIX) {
                let target = params
                    .get(p)
                    .ok_or_else(|| load_err(format!("checkpoint parameter '{p}' not in {}", model.arch)))?;
                if target.shape() != t.shape() {
                    return Err(load_err(format!(
                        "checkpoint parameter '{p}' has shape {:?}, architecture expects {:?}",
                        t.shape(),
                        target.shape()
                    )));
                }
                params.set(p, t)?;
                seen += 1;
            } else if let Some(p) = name.strip_prefix(RMSPROP_PREFIX) {
                match params.get(p) {
                    Some(target) if target.shape() == t.shape() => mean_square.push((p.to_string(), t)),
                    _ => return Err(load_err(format!("optimizer state '{p}' matches no parameter"))),
                }
            } else {
                return Err(load_err(format!("unexpected checkpoint tensor '{name}'")));
            }
        }
        if seen != params.len() {
            return Err(load_err(format!(
                "checkpoint holds {seen} of {} parameters",
                params.len()
            )));
        }
        Ok(Checkpoint {
            model,
            epoch,
            val_accuracy,
            params,
            optimizer: RmsPropState::from_parts(mean_square, step_count),
            history,
        })
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    checkpoint.to_manifest().write(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_manifest(WeightManifest::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelzoo::init_weights;
    use crate::optim::FreezePolicy;

    fn sample() -> Checkpoint {
        let model = ModelConfig {
            arch: ArchKind::Arch2,
            width_divisor: 16,
            input_size: 32,
            dropout: 0.2,
            l2_lambda: 0.01,
            normalize: Normalization::UnitScale,
        };
        let arch = model.build().unwrap();
        let params = init_weights(&arch, 3).unwrap();
        let mut optimizer = RmsPropState::new(&params, &FreezePolicy::default());
        optimizer = RmsPropState::from_parts(
            optimizer
                .mean_square()
                .iter()
                .map(|(n, t)| (n.clone(), t.map(|v| v * v + 1e-3)))
                .collect(),
            7,
        );
        Checkpoint {
            model,
            epoch: 2,
            val_accuracy: 1.0 / 3.0,
            params,
            optimizer,
            history: vec![
                EpochRecord {
                    epoch: 1,
                    train_loss: 1.9459101090932196,
                    train_acc: 0.1,
                    val_loss: 2.0,
                    val_acc: 0.0,
                },
                EpochRecord {
                    epoch: 2,
                    train_loss: 0.1 + 0.2,
                    train_acc: 0.5,
                    val_loss: 1e-300,
                    val_acc: 1.0 / 3.0,
                },
            ],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = c.to_manifest().encode().unwrap();
        let back = Checkpoint::from_manifest(WeightManifest::decode(&bytes).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.val_accuracy.to_bits(), c.val_accuracy.to_bits());
    }

    #[test]
    fn truncated_file_is_an_error() {
        let bytes = sample().to_manifest().encode().unwrap();
        for cut in [bytes.len() - 1, bytes.len() / 2, 10] {
            assert!(matches!(
                WeightManifest::decode(&bytes[..cut]).and_then(Checkpoint::from_manifest),
                Err(Error::Load { .. })
            ));
        }
    }

    #[test]
    fn missing_parameter_rejected() {
        let mut m = sample().to_manifest();
        m.tensors.retain(|(n, _)| n != "param/fc1.bias");
        assert!(Checkpoint::from_manifest(m).is_err());
    }

    #[test]
    fn records_epoch_and_accuracy() {
        let m = sample().to_manifest();
        assert_eq!(m.meta["epoch"], "2");
        assert_eq!(m.meta["val_accuracy"].parse::<f64>().unwrap(), 1.0 / 3.0);
    }
}
