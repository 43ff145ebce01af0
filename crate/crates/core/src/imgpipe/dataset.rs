use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use super::ppm::decode_ppm;
use super::transform::{flip, normalize, resize_bilinear, rotate45, FlipAxis, Normalization};
use super::{parse_field, ClassRegistry, CLASS_NAMES, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Original,
    Rot45,
    Hflip,
    Vflip,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Original, Variant::Rot45, Variant::Hflip, Variant::Vflip];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Rot45 => "rot45",
            Variant::Hflip => "hflip",
            Variant::Vflip => "vflip",
        }
    }

    fn apply(self, img: &Tensor<f32>) -> Result<Tensor<f32>> {
        match self {
            Variant::Original => Ok(img.clone()),
            Variant::Rot45 => rotate45(img),
            Variant::Hflip => flip(img, FlipAxis::Horizontal),
            Variant::Vflip => flip(img, FlipAxis::Vertical),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Data(format!("unknown variant '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    /// `<class>/<file stem>`, shared by all variants of one image.
    pub source_id: String,
    pub variant: Variant,
    pub class_index: usize,
    /// `[3,H,W]`, values in `0..=255`.
    pub pixels: Tensor<f32>,
    /// Path of the source file relative to the dataset root.
    pub relative_path: String,
}

fn ppm_files(dir: &Path) -> Result<Vec<String>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".ppm") && entry.path().is_file() {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Reads `<root>/<class>/*.ppm` in class order then file-name order and
/// resizes every image to `input_size`. Missing class directories yield no
/// samples.
pub fn ingest(root: &Path, input_size: usize) -> Result<Vec<LabeledSample>> {
    if !root.is_dir() {
        return Err(Error::Data(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }
    let mut jobs = Vec::new();
    for (class_index, class) in CLASS_NAMES.iter().enumerate() {
        for file in ppm_files(&root.join(class))? {
            jobs.push((class_index, format!("{class}/{file}")));
        }
    }
    jobs.into_par_iter()
        .map(|(class_index, rel)| {
            let path = root.join(&rel);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let img = decode_ppm(&bytes).map_err(|e| match e {
                Error::Decode { offset, reason } => Error::Decode {
                    offset,
                    reason: format!("{}: {reason}", path.display()),
                },
                other => other,
            })?;
            let pixels = resize_bilinear(&img, input_size, input_size)?;
            let stem = rel.strip_suffix(".ppm").unwrap_or(&rel).to_string();
            Ok(LabeledSample {
                source_id: stem,
                variant: Variant::Original,
                class_index,
                pixels,
                relative_path: rel,
            })
        })
        .collect()
}

/// Expands every original into its four variants, in `Variant::ALL` order.
pub fn augment(samples: &[LabeledSample]) -> Result<Vec<LabeledSample>> {
    if let Some(s) = samples.iter().find(|s| s.variant != Variant::Original) {
        return Err(Error::Data(format!(
            "augment expects original samples, got {} variant of {}",
            s.variant, s.source_id
        )));
    }
    let expanded: Vec<Vec<LabeledSample>> = samples
        .par_iter()
        .map(|s| {
            Variant::ALL
                .iter()
                .map(|&v| {
                    Ok(LabeledSample {
                        variant: v,
                        pixels: v.apply(&s.pixels)?,
                        ..s.clone()
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(expanded.into_iter().flatten().collect())
}

/// Normalises and stacks samples into an `[N,3,H,W]` batch.
pub fn stack_batch(samples: &[&LabeledSample], mode: Normalization) -> Result<Tensor<f32>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Data("cannot build an empty batch".into()))?;
    let shape = first.pixels.shape().to_vec();
    let mut data = Vec::with_capacity(samples.len() * first.pixels.len());
    for s in samples {
        if s.pixels.shape() != shape.as_slice() {
            return Err(Error::dim(
                "stack_batch",
                format!(
                    "{} has shape {:?}, batch has {:?}",
                    s.source_id,
                    s.pixels.shape(),
                    shape
                ),
            ));
        }
        data.extend_from_slice(normalize(&s.pixels, mode)?.data());
    }
    let mut full = vec![samples.len()];
    full.extend(shape);
    Tensor::from_vec(&full, data)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub source_id: String,
    pub variant: Variant,
    pub class_name: String,
    pub relative_path: String,
}

/// Tab-separated listing of the samples a run used:
/// `source_id<TAB>variant<TAB>class_name<TAB>relative_path`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn from_samples(samples: &[LabeledSample]) -> Self {
        let records = samples
            .iter()
            .map(|s| ManifestRecord {
                source_id: s.source_id.clone(),
                variant: s.variant,
                class_name: CLASS_NAMES[s.class_index].to_string(),
                relative_path: s.relative_path.clone(),
            })
            .collect();
        DatasetManifest { records }
    }

    pub fn encode(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            for field in [&r.source_id, &r.class_name, &r.relative_path] {
                if field.is_empty() || field.contains(['\t', '\n', '\r']) {
                    return Err(Error::Data(format!(
                        "manifest field {field:?} is empty or has a tab/newline"
                    )));
                }
            }
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.source_id, r.variant, r.class_name, r.relative_path
            ));
        }
        Ok(out)
    }

    pub fn decode(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            let [source_id, variant, class_name, relative_path] = fields[..] else {
                return Err(Error::Data(format!(
                    "line {n}: expected 4 tab-separated fields, got {}",
                    fields.len()
                )));
            };
            if source_id.is_empty() || relative_path.is_empty() {
                return Err(Error::Data(format!("line {n}: empty source_id or path")));
            }
            ClassRegistry.index_of(class_name)?;
            records.push(ManifestRecord {
                source_id: source_id.to_string(),
                variant: parse_field("variant", variant, n)?,
                class_name: class_name.to_string(),
                relative_path: relative_path.to_string(),
            });
        }
        Ok(DatasetManifest { records })
    }

    /// Samples per class, in registry order.
    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for r in &self.records {
            if let Ok(i) = ClassRegistry.index_of(&r.class_name) {
                counts[i] += 1;
            }
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, class_index: usize) -> LabeledSample {
        let pixels = Tensor::from_vec(&[3, 4, 4], (0..48).map(|v| v as f32).collect()).unwrap();
        LabeledSample {
            source_id: id.into(),
            variant: Variant::Original,
            class_index,
            pixels,
            relative_path: format!("{id}.ppm"),
        }
    }

    #[test]
    fn augment_counts_and_sharing() {
        assert!(augment(&[]).unwrap().is_empty());
        let out = augment(&[sample("whole/a", 0)]).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|s| s.source_id == "whole/a" && s.class_index == 0));
        assert_eq!(out.iter().map(|s| s.variant).collect::<Vec<_>>(), Variant::ALL);
        let many: Vec<_> = (0..9).map(|i| sample(&format!("diced/{i}"), 3)).collect();
        assert_eq!(augment(&many).unwrap().len(), 36);
    }

    #[test]
    fn augment_rejects_variants() {
        let mut s = sample("whole/a", 0);
        s.variant = Variant::Hflip;
        assert!(matches!(augment(&[s]), Err(Error::Data(_))));
    }

    #[test]
    fn manifest_round_trip() {
        let samples = augment(&[sample("whole/a", 0), sample("grated/b", 6)]).unwrap();
        let m = DatasetManifest::from_samples(&samples);
        let text = m.encode().unwrap();
        assert!(text.starts_with("whole/a\toriginal\twhole\twhole/a.ppm\n"));
        assert_eq!(DatasetManifest::decode(&text).unwrap(), m);
        assert_eq!(m.class_counts(), [4, 0, 0, 0, 0, 0, 4]);
        assert!(DatasetManifest::decode("a\tb\n").is_err());
        assert!(DatasetManifest::decode("a\toriginal\tboiled\tp\n").is_err());
    }

    #[test]
    fn stack_batch_shapes() {
        let a = sample("whole/a", 0);
        let b = sample("whole/b", 0);
        let t = stack_batch(&[&a, &b], Normalization::UnitScale).unwrap();
        assert_eq!(t.shape(), &[2, 3, 4, 4]);
        assert_eq!(t.data()[47], 47.0 / 255.0);
        assert!(stack_batch(&[], Normalization::UnitScale).is_err());
    }
}
