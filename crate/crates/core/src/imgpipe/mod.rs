//! Image decoding, resizing, normalisation, offline augmentation and
//! deterministic dataset splitting.

mod dataset;
mod ppm;
mod split;
mod transform;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use dataset::{augment, ingest, stack_batch, DatasetManifest, LabeledSample, ManifestRecord, Variant};
pub use ppm::{decode_ppm, encode_pgm, encode_ppm, MAX_DIMENSION};
pub use split::{split, Split, SplitParams, SplitPlan, DEFAULT_RATIOS};
pub use transform::{flip, normalize, resize_bilinear, rotate, rotate45, FlipAxis, Normalization, IMAGENET_MEANS};

/// Class names in confusion-matrix order.
pub const CLASS_NAMES: [&str; 7] = [
    "whole",
    "juiced",
    "sliced",
    "diced",
    "creamy_paste",
    "julienne",
    "grated",
];

pub const NUM_CLASSES: usize = CLASS_NAMES.len();

/// Lookup between class names and indices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassRegistry;

impl ClassRegistry {
    pub fn names(&self) -> &'static [&'static str; NUM_CLASSES] {
        &CLASS_NAMES
    }

    pub fn len(&self) -> usize {
        NUM_CLASSES
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        CLASS_NAMES
            .iter()
            .position(|&n| n == name)
            .ok_or_else(|| Error::Data(format!("unknown class '{name}'")))
    }

    pub fn name(&self, index: usize) -> Result<&'static str> {
        CLASS_NAMES
            .get(index)
            .copied()
            .ok_or_else(|| Error::Data(format!("class index {index} out of range 0..{NUM_CLASSES}")))
    }
}

/// Parses one field of a line-oriented text format.
pub(crate) fn parse_field<T: FromStr>(what: &str, s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Data(format!("line {line}: bad {what} '{s}'")))
}

impl fmt::Display for ClassRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&CLASS_NAMES.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn registry_is_stable() {
        let r = ClassRegistry;
        assert_eq!(r.len(), 7);
        assert_eq!(CLASS_NAMES.iter().collect::<BTreeSet<_>>().len(), 7);
        for (i, n) in CLASS_NAMES.iter().enumerate() {
            assert_eq!(r.index_of(n).unwrap(), i);
            assert_eq!(r.name(i).unwrap(), *n);
        }
        assert_eq!(r.index_of("creamy_paste").unwrap(), 4);
        assert!(r.index_of("boiled").is_err());
        assert!(r.name(7).is_err());
    }
}
