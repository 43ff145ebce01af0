//! Evaluation reports, single-image prediction and the misclassification
//! listing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::train::SPLIT_FILE;
use crate::error::{Error, Result};
use crate::imgpipe::Normalization;
use crate::imgpipe::{
    augment, decode_ppm, ingest, normalize, resize_bilinear, stack_batch, LabeledSample, Split, SplitPlan, Variant,
    CLASS_NAMES, NUM_CLASSES,
};
use crate::modelzoo::{load_checkpoint, predict_logits, ArchitectureSpec, Checkpoint, ParamSet};
use crate::tensor::Tensor;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Softmax computed in double precision.
pub fn probabilities(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|&z| (z as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Misclassified {
    pub source_id: String,
    pub variant: Variant,
    pub true_class: usize,
    pub predicted: usize,
    pub probabilities: [f64; NUM_CLASSES],
}

impl Misclassified {
    /// The three most probable classes, most probable first; ties go to the
    /// lower index.
    pub fn top3(&self) -> [(usize, f64); 3] {
        let mut idx: Vec<usize> = (0..NUM_CLASSES).collect();
        idx.sort_by(|&a, &b| self.probabilities[b].total_cmp(&self.probabilities[a]).then(a.cmp(&b)));
        [0, 1, 2].map(|k| (idx[k], self.probabilities[idx[k]]))
    }

    pub fn confidence(&self) -> f64 {
        self.probabilities[self.predicted]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    /// `train`, `val`, `test` or `dir`.
    pub split: String,
    /// Rows are true classes, columns predictions.
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
    pub misclassified: Vec<Misclassified>,
}

impl EvaluationReport {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..NUM_CLASSES).map(|i| self.confusion[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.correct() as f64 / t as f64,
        }
    }

    /// Recall of each class; `None` for classes absent from the split.
    pub fn per_class_accuracy(&self) -> [Option<f64>; NUM_CLASSES] {
        std::array::from_fn(|i| {
            let row: usize = self.confusion[i].iter().sum();
            (row > 0).then(|| self.confusion[i][i] as f64 / row as f64)
        })
    }

    pub fn encode(&self) -> Result<String> {
        if self.split.is_empty() || self.split.contains(['\t', '\n', '\r']) {
            return Err(Error::Data(format!("bad split label {:?}", self.split)));
        }
        let mut out = String::from("# statenet evaluation report\n");
        let _ = writeln!(out, "split\t{}", self.split);
        let _ = writeln!(out, "total\t{}", self.total());
        let _ = writeln!(out, "accuracy\t{}", self.accuracy());
        for (i, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "confusion\t{}\t{}", CLASS_NAMES[i], cells.join(","));
        }
        for m in &self.misclassified {
            if m.source_id.contains(['\t', '\n', '\r']) {
                return Err(Error::Data(format!("bad source id {:?}", m.source_id)));
            }
            let probs: Vec<String> = m.probabilities.iter().map(|p| p.to_string()).collect();
            let _ = writeln!(
                out,
                "miss\t{}\t{}\t{}\t{}\t{}",
                m.source_id,
                m.variant,
                CLASS_NAMES[m.true_class],
                CLASS_NAMES[m.predicted],
                probs.join(",")
            );
        }
        Ok(out)
    }

    pub fn decode(text: &str) -> Result<Self> {
        let mut split = None;
        let mut total = None;
        let mut rows = [false; NUM_CLASSES];
        let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
        let mut misclassified = Vec::new();
        let class = |name: &str, n: usize| {
            CLASS_NAMES
                .iter()
                .position(|&c| c == name)
                .ok_or_else(|| Error::Data(format!("line {n}: unknown class '{name}'")))
        };
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let bad = |what: &str| Error::Data(format!("line {n}: {what}"));
            match f[..] {
                ["split", s] if !s.is_empty() => split = Some(s.to_string()),
                ["total", t] => total = Some(t.parse::<usize>().map_err(|_| bad("bad total"))?),
                ["accuracy", _] => {}
                ["confusion", name, cells] => {
                    let r = class(name, n)?;
                    let vals: Vec<usize> = cells
                        .split(',')
                        .map(|c| c.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("bad confusion row"))?;
                    confusion[r] = vals.try_into().map_err(|_| bad("confusion row needs 7 counts"))?;
                    if std::mem::replace(&mut rows[r], true) {
                        return Err(bad("repeated confusion row"));
                    }
                }
                ["miss", source_id, variant, t, p, probs] => {
                    let vals: Vec<f64> = probs
                        .split(',')
                        .map(|c| c.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("bad probabilities"))?;
                    let probabilities: [f64; NUM_CLASSES] = vals.try_into().map_err(|_| bad("need 7 probabilities"))?;
                    let m = Misclassified {
                        source_id: source_id.to_string(),
                        variant: variant.parse().map_err(|_| bad("bad variant"))?,
                        true_class: class(t, n)?,
                        predicted: class(p, n)?,
                        probabilities,
                    };
                    if m.true_class == m.predicted {
                        return Err(bad("misclassified entry has equal true and predicted class"));
                    }
                    misclassified.push(m);
                }
                _ => return Err(bad("unrecognised report line")),
            }
        }
        let report = EvaluationReport {
            split: split.ok_or_else(|| Error::Data("report lacks a split line".into()))?,
            confusion,
            misclassified,
        };
        if rows.contains(&false) {
            return Err(Error::Data("report lacks confusion rows".into()));
        }
        let total = total.ok_or_else(|| Error::Data("report lacks a total line".into()))?;
        if report.total() != total {
            return Err(Error::Data(format!(
                "confusion sums to {}, total says {total}",
                report.total()
            )));
        }
        Ok(report)
    }
}

/// Eval-mode predictions for `samples`, folded into a report.
pub fn evaluate_samples(
    arch: &ArchitectureSpec,
    params: &ParamSet<f32>,
    samples: &[&LabeledSample],
    normalize_mode: Normalization,
    batch_size: usize,
    split: &str,
) -> Result<EvaluationReport> {
    if samples.is_empty() {
        return Err(Error::Data(format!("{split} split is empty")));
    }
    let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    let mut misclassified = Vec::new();
    for chunk in samples.chunks(batch_size.max(1)) {
        let x = stack_batch(chunk, normalize_mode)?;
        let logits = predict_logits(arch, params, &x)?;
        let [_, c] = logits.dims2("evaluate")?;
        if c != NUM_CLASSES {
            return Err(Error::Config(format!(
                "model emits {c} classes, registry has {NUM_CLASSES}"
            )));
        }
        for (row, s) in logits.data().chunks(c).zip(chunk) {
            let predicted = argmax(row);
            confusion[s.class_index][predicted] += 1;
            if predicted != s.class_index {
                let p = probabilities(row);
                misclassified.push(Misclassified {
                    source_id: s.source_id.clone(),
                    variant: s.variant,
                    true_class: s.class_index,
                    predicted,
                    probabilities: std::array::from_fn(|i| p[i]),
                });
            }
        }
    }
    Ok(EvaluationReport {
        split: split.to_string(),
        confusion,
        misclassified,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalSplit {
    Named(Split),
    /// A separate `<dir>/<class>/*.ppm` tree, evaluated without augmentation.
    Dir(PathBuf),
}

impl EvalSplit {
    pub fn label(&self) -> String {
        match self {
            EvalSplit::Named(s) => s.to_string(),
            EvalSplit::Dir(_) => "dir".into(),
        }
    }
}

fn checkpoint_dir(checkpoint: &Path) -> PathBuf {
    checkpoint.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Evaluates a saved checkpoint. Named splits are rebuilt from `data_root`
/// using the split plan stored next to the checkpoint.
pub fn evaluate(checkpoint: &Path, data_root: &Path, split: &EvalSplit) -> Result<EvaluationReport> {
    let ckpt = load_checkpoint(checkpoint)?;
    let arch = ckpt.model.build()?;
    let size = ckpt.model.input_size;
    let samples = match split {
        EvalSplit::Dir(dir) => ingest(dir, size)?,
        EvalSplit::Named(which) => {
            let plan_path = checkpoint_dir(checkpoint).join(SPLIT_FILE);
            let text = std::fs::read_to_string(&plan_path).map_err(|e| Error::io(&plan_path, e))?;
            let plan = SplitPlan::decode(&text)?;
            let all = augment(&ingest(data_root, size)?)?;
            let chosen: Vec<LabeledSample> = plan.select(&all, *which).into_iter().cloned().collect();
            chosen
        }
    };
    let refs: Vec<&LabeledSample> = samples.iter().collect();
    evaluate_samples(&arch, &ckpt.params, &refs, ckpt.model.normalize, 16, &split.label())
}

pub fn report_file_name(split: &str) -> String {
    format!("report_{split}.tsv")
}

pub fn write_report(dir: &Path, report: &EvaluationReport) -> Result<PathBuf> {
    let path = dir.join(report_file_name(&report.split));
    std::fs::write(&path, report.encode()?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub class_index: usize,
    pub class_name: &'static str,
    pub probabilities: [f64; NUM_CLASSES],
}

/// Classifies one decoded `[3,H,W]` image with a loaded checkpoint.
pub fn predict_image(ckpt: &Checkpoint, image: &Tensor<f32>) -> Result<Prediction> {
    let arch = ckpt.model.build()?;
    let size = ckpt.model.input_size;
    let x = normalize(&resize_bilinear(image, size, size)?, ckpt.model.normalize)?;
    let mut shape = vec![1];
    shape.extend_from_slice(x.shape());
    let logits = predict_logits(&arch, &ckpt.params, &x.into_reshape(&shape)?)?;
    if logits.len() != NUM_CLASSES {
        return Err(Error::Config(format!(
            "model emits {} classes, registry has {NUM_CLASSES}",
            logits.len()
        )));
    }
    let class_index = argmax(logits.data());
    let p = probabilities(logits.data());
    Ok(Prediction {
        class_index,
        class_name: CLASS_NAMES[class_index],
        probabilities: std::array::from_fn(|i| p[i]),
    })
}

pub fn predict(checkpoint: &Path, image: &Path) -> Result<Prediction> {
    let ckpt = load_checkpoint(checkpoint)?;
    let bytes = std::fs::read(image).map_err(|e| Error::io(image, e))?;
    predict_image(&ckpt, &decode_ppm(&bytes)?)
}

/// Misclassified samples by descending confidence in the wrong class,
/// at most `limit` of them.
pub fn report_misclassified(report: &EvaluationReport, limit: usize) -> Vec<&Misclassified> {
    let mut rows: Vec<&Misclassified> = report.misclassified.iter().collect();
    rows.sort_by(|a, b| {
        b.confidence()
            .total_cmp(&a.confidence())
            .then_with(|| a.source_id.cmp(&b.source_id))
            .then_with(|| a.variant.cmp(&b.variant))
    });
    rows.truncate(limit);
    rows
}

pub fn format_misclassified(rows: &[&Misclassified]) -> String {
    let mut out = String::from("source_id,variant,true,predicted,confidence,top1,p1,top2,p2,top3,p3\n");
    for m in rows {
        let t = m.top3();
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{},{:.6},{},{:.6},{},{:.6}",
            m.source_id,
            m.variant,
            CLASS_NAMES[m.true_class],
            CLASS_NAMES[m.predicted],
            m.confidence(),
            CLASS_NAMES[t[0].0],
            t[0].1,
            CLASS_NAMES[t[1].0],
            t[1].1,
            CLASS_NAMES[t[2].0],
            t[2].1
        );
    }
    out
}
