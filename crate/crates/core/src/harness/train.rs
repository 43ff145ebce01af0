use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainingConfig;
use super::history::{EpochRecord, TrainingHistory};
use crate::error::{Error, Result};
use crate::imgpipe::{augment, ingest, split, stack_batch, DatasetManifest, LabeledSample, Normalization, Split};
use crate::layers::{l2_penalty, softmax_cross_entropy, Mode};
use crate::modelzoo::{
    backward, forward, init_weights, load_weights_partial, predict_logits, save_checkpoint, ArchitectureSpec,
    Checkpoint, LoadPolicy, LoadReport, ParamSet, WeightManifest,
};
use crate::optim::{build_freeze_policy, rmsprop_step, FreezeMode, FreezePolicy, RmsPropConfig, RmsPropState};
use crate::tensor::{set_deterministic, Tensor};

/// Mixes several integers into one RNG seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h = 0x243F_6A88_85A3_08D3u64;
    for &p in parts {
        h ^= p
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(h << 6)
            .wrapping_add(h >> 2);
        // splitmix64 finaliser
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

fn weight_refs(params: &ParamSet<f32>) -> Vec<(&str, &Tensor<f32>)> {
    params.iter().collect()
}

/// L2 loss of the current parameters, or 0 for architectures without L2.
pub fn l2_loss(arch: &ArchitectureSpec, params: &ParamSet<f32>) -> Result<f64> {
    match &arch.l2 {
        Some(l2) => Ok(l2_penalty(&weight_refs(params), l2.lambda, &l2.scope)?.loss as f64),
        None => Ok(0.0),
    }
}

/// One optimizer step on a labelled batch. Returns the training loss
/// (cross-entropy plus any L2 term) before the update.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    arch: &ArchitectureSpec,
    params: &mut ParamSet<f32>,
    state: &mut RmsPropState<f32>,
    freeze: &FreezePolicy,
    config: &RmsPropConfig,
    batch: &Tensor<f32>,
    labels: &[usize],
    dropout_seed: u64,
) -> Result<f64> {
    let pass = forward(arch, params, batch, Mode::Train, dropout_seed)?;
    let (ce, d_logits) = softmax_cross_entropy(&pass.logits, labels)?;
    let mut loss = ce as f64;
    let mut grads = backward(arch, params, &pass, &d_logits, &|layer| !freeze.is_frozen(layer))?;
    if let Some(l2) = &arch.l2 {
        let term = l2_penalty(&weight_refs(params), l2.lambda, &l2.scope)?;
        loss += term.loss as f64;
        for (name, g) in term.grads {
            if let Some(target) = grads.get_mut(&name) {
                *target = target.add(&g)?;
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::Numeric {
            context: "training step".into(),
            detail: format!("loss is {loss}"),
        });
    }
    rmsprop_step(params, &grads, state, config)?;
    Ok(loss)
}

/// Eval-mode mean loss (cross-entropy plus L2) and accuracy over `samples`.
pub fn measure(
    arch: &ArchitectureSpec,
    params: &ParamSet<f32>,
    samples: &[&LabeledSample],
    normalize: Normalization,
    batch_size: usize,
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Data("cannot measure an empty split".into()));
    }
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    for chunk in samples.chunks(batch_size.max(1)) {
        let x = stack_batch(chunk, normalize)?;
        let labels: Vec<usize> = chunk.iter().map(|s| s.class_index).collect();
        let logits = predict_logits(arch, params, &x)?;
        let (ce, _) = softmax_cross_entropy(&logits, &labels)?;
        total_loss += ce as f64 * chunk.len() as f64;
        let [_, c] = logits.dims2("measure")?;
        for (row, &y) in logits.data().chunks(c).zip(&labels) {
            if super::eval::argmax(row) == y {
                correct += 1;
            }
        }
    }
    let n = samples.len() as f64;
    let loss = total_loss / n + l2_loss(arch, params)?;
    if !loss.is_finite() {
        return Err(Error::Numeric {
            context: "epoch-end evaluation".into(),
            detail: format!("loss is {loss}"),
        });
    }
    Ok((loss, correct as f64 / n))
}

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: TrainingHistory,
    pub best_epoch: usize,
    pub load_report: LoadReport,
    /// Layers excluded from updates.
    pub frozen_layers: Vec<String>,
    pub params: ParamSet<f32>,
    pub run_dir: PathBuf,
}

pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const SPLIT_FILE: &str = "split.tsv";
pub const HISTORY_FILE: &str = "history.csv";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

pub fn epoch_checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}.ckpt")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{name}: {m}")),
        Error::Numeric { context, detail } => Error::Numeric {
            context: format!("{name}: {context}"),
            detail,
        },
        other => other,
    })
}

/// Ingests, augments and splits `data_root`, then trains and writes the run
/// files into `out_dir`.
pub fn train(
    config: &TrainingConfig,
    data_root: &Path,
    base_weights: Option<&Path>,
    out_dir: &Path,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if config.deterministic {
        set_deterministic(true);
    }
    let originals = stage("ingest", ingest(data_root, config.input_size))?;
    let samples = stage("augment", augment(&originals))?;
    let plan = stage("split", split(&samples, &config.split_params()))?;
    let train_set = plan.select(&samples, Split::Train);
    let val_set = plan.select(&samples, Split::Val);
    for (name, set) in [("train", &train_set), ("val", &val_set)] {
        if set.is_empty() {
            return Err(Error::Data(format!("split: {name} split is empty")));
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_text(&out_dir.join(CONFIG_FILE), &config.to_text())?;
    write_text(
        &out_dir.join(MANIFEST_FILE),
        &DatasetManifest::from_samples(&samples).encode()?,
    )?;
    write_text(&out_dir.join(SPLIT_FILE), &plan.encode())?;
    let base = base_weights.map(WeightManifest::read).transpose()?;
    train_on(config, &train_set, &val_set, base.as_ref(), out_dir, progress)
}

/// The epoch loop over already prepared train and validation samples.
pub fn train_on(
    config: &TrainingConfig,
    train_set: &[&LabeledSample],
    val_set: &[&LabeledSample],
    base: Option<&WeightManifest>,
    out_dir: &Path,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Data("train and validation sets must be non-empty".into()));
    }
    let model = config.model();
    let arch = model.build()?;
    let mut params = init_weights(&arch, config.seed)?;
    let load_report = match base {
        Some(m) => load_weights_partial(&arch, &mut params, m, LoadPolicy::ByNamePrefix)?,
        None => LoadReport::default(),
    };
    let mut freeze = build_freeze_policy(&arch, &config.freeze)?;
    if config.freeze == FreezeMode::PretrainedFrozen {
        freeze = freeze.retain_loaded(&load_report.loaded);
    }
    let opt = config.optimizer();
    let mut state = RmsPropState::new(&params, &freeze);
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut history = TrainingHistory::default();
    let mut best_acc = f64::NEG_INFINITY;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[
            config.seed,
            epoch as u64,
        ])));
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&LabeledSample> = idx.iter().map(|&i| train_set[i]).collect();
            let x = stack_batch(&batch, config.normalize)?;
            let labels: Vec<usize> = batch.iter().map(|s| s.class_index).collect();
            let seed = derive_seed(&[config.seed, epoch as u64, b as u64]);
            stage(
                &format!("epoch {epoch} batch {}", b + 1),
                train_step(&arch, &mut params, &mut state, &freeze, &opt, &x, &labels, seed),
            )?;
        }
        let (train_loss, train_acc) = stage(
            "train metrics",
            measure(&arch, &params, train_set, config.normalize, config.batch_size),
        )?;
        let (val_loss, val_acc) = stage(
            "val metrics",
            measure(&arch, &params, val_set, config.normalize, config.batch_size),
        )?;
        let record = EpochRecord {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        };
        history.records.push(record);
        progress(&record);

        let checkpoint = Checkpoint {
            model: model.clone(),
            epoch,
            val_accuracy: val_acc,
            params: params.clone(),
            optimizer: state.clone(),
            history: history.records.clone(),
        };
        if config.keep_epoch_checkpoints {
            save_checkpoint(&out_dir.join(epoch_checkpoint_name(epoch)), &checkpoint)?;
        }
        if val_acc > best_acc {
            best_acc = val_acc;
            save_checkpoint(&out_dir.join(BEST_CHECKPOINT), &checkpoint)?;
        }
        save_checkpoint(&out_dir.join(LAST_CHECKPOINT), &checkpoint)?;
        write_text(&out_dir.join(HISTORY_FILE), &history.to_csv())?;
        if config.target_train_accuracy.is_some_and(|t| train_acc >= t) {
            break;
        }
    }
    Ok(TrainOutcome {
        best_epoch: history.best_epoch().unwrap_or(1),
        history,
        load_report,
        frozen_layers: freeze.frozen_layer_names().iter().cloned().collect(),
        params,
        run_dir: out_dir.to_path_buf(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(&[1, 2, 3]);
        assert_eq!(a, derive_seed(&[1, 2, 3]));
        assert_ne!(a, derive_seed(&[1, 3, 2]));
        assert_ne!(derive_seed(&[0]), derive_seed(&[0, 0]));
    }
}
