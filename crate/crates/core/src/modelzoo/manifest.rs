//! Named-tensor file format used for base weights and checkpoints.
//!
//! A file is a UTF-8 index followed by one raw blob:
//!
//! ```text
//! statenet-weights 1\n
//! meta\t<key>\t<value>\n                      zero or more
//! tensor\t<name>\tf32\t<d0>,<d1>,..\t<offset>\n  one per tensor
//! blob\t<byte length>\n
//! <blob bytes>
//! ```
//!
//! Offsets are byte positions inside the blob. Tensors are stored in index
//! order as little-endian `f32`, row-major, with no gaps, so every offset
//! equals the sum of the sizes before it and the blob length equals the total
//! element count times four. Names and meta fields may not contain tabs or
//! newlines.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &str = "statenet-weights 1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightManifest {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

/// One index line as it appears in the file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

fn check_field(what: &str, s: &str) -> Result<()> {
    if s.is_empty() && what != "meta value" {
        return Err(Error::Config(format!("{what} may not be empty")));
    }
    if s.contains(['\t', '\n', '\r']) {
        return Err(Error::Config(format!("{what} {s:?} contains a tab or newline")));
    }
    Ok(())
}

impl WeightManifest {
    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn index(&self) -> Vec<IndexEntry> {
        let mut offset = 0;
        self.tensors
            .iter()
            .map(|(name, t)| {
                let e = IndexEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += t.len() * 4;
                e
            })
            .collect()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut head = String::new();
        head.push_str(MAGIC);
        head.push('\n');
        for (k, v) in &self.meta {
            check_field("meta key", k)?;
            check_field("meta value", v)?;
            head.push_str(&format!("meta\t{k}\t{v}\n"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in self.index() {
            check_field("tensor name", &e.name)?;
            if !seen.insert(e.name.clone()) {
                return Err(Error::Config(format!("duplicate tensor name '{}'", e.name)));
            }
            let dims: Vec<String> = e.shape.iter().map(|d| d.to_string()).collect();
            head.push_str(&format!("tensor\t{}\tf32\t{}\t{}\n", e.name, dims.join(","), e.offset));
        }
        let blob_len: usize = self.tensors.iter().map(|(_, t)| t.len() * 4).sum();
        head.push_str(&format!("blob\t{blob_len}\n"));
        let mut out = head.into_bytes();
        out.reserve(blob_len);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let next_line = |pos: &mut usize| -> Result<(usize, &str)> {
            let start = *pos;
            let rel = bytes[start..].iter().position(|&b| b == b'\n').ok_or(Error::Load {
                offset: start,
                reason: "unterminated index line".into(),
            })?;
            let line = std::str::from_utf8(&bytes[start..start + rel]).map_err(|_| Error::Load {
                offset: start,
                reason: "index line is not UTF-8".into(),
            })?;
            *pos = start + rel + 1;
            Ok((start, line))
        };

        let (at, magic) = next_line(&mut pos)?;
        if magic != MAGIC {
            return Err(Error::Load {
                offset: at,
                reason: format!("bad magic line {magic:?}"),
            });
        }
        let mut meta = BTreeMap::new();
        let mut index: Vec<IndexEntry> = Vec::new();
        let mut expected_offset = 0usize;
        let blob_len = loop {
            let (at, line) = next_line(&mut pos)?;
            let bad = |reason: String| Error::Load { offset: at, reason };
            let fields: Vec<&str> = line.split('\t').collect();
            match fields[..] {
                ["meta", k, v] => {
                    if k.is_empty() || meta.insert(k.to_string(), v.to_string()).is_some() {
                        return Err(bad(format!("empty or repeated meta key {k:?}")));
                    }
                }
                ["tensor", name, dtype, dims, offset] => {
                    if name.is_empty() || index.iter().any(|e| e.name == name) {
                        return Err(bad(format!("empty or repeated tensor name {name:?}")));
                    }
                    if dtype != "f32" {
                        return Err(bad(format!("unsupported dtype {dtype:?}")));
                    }
                    let shape = dims
                        .split(',')
                        .map(|d| d.parse::<usize>().ok().filter(|&d| d > 0))
                        .collect::<Option<Vec<_>>>()
                        .filter(|s| (1..=4).contains(&s.len()))
                        .ok_or_else(|| bad(format!("bad shape {dims:?}")))?;
                    let offset: usize = offset.parse().map_err(|_| bad(format!("bad offset {offset:?}")))?;
                    if offset != expected_offset {
                        return Err(bad(format!(
                            "offset {offset} of '{name}' inconsistent with preceding tensors (expected {expected_offset})"
                        )));
                    }
                    let bytes_len = shape
                        .iter()
                        .try_fold(4usize, |acc, &d| acc.checked_mul(d))
                        .ok_or_else(|| bad("tensor size overflows".into()))?;
                    expected_offset = expected_offset
                        .checked_add(bytes_len)
                        .ok_or_else(|| bad("tensor size overflows".into()))?;
                    index.push(IndexEntry {
                        name: name.to_string(),
                        shape,
                        offset,
                    });
                }
                ["blob", len] => {
                    let len: usize = len.parse().map_err(|_| bad(format!("bad blob length {len:?}")))?;
                    if len != expected_offset {
                        return Err(bad(format!(
                            "blob length {len} does not match indexed size {expected_offset}"
                        )));
                    }
                    break len;
                }
                _ => return Err(bad(format!("unrecognised index line {line:?}"))),
            }
        };
        let blob = &bytes[pos..];
        if blob.len() < blob_len {
            return Err(Error::Load {
                offset: bytes.len(),
                reason: format!("truncated blob: {} of {blob_len} bytes present", blob.len()),
            });
        }
        if blob.len() > blob_len {
            return Err(Error::Load {
                offset: pos + blob_len,
                reason: format!("{} trailing bytes after blob", blob.len() - blob_len),
            });
        }
        let mut tensors = Vec::with_capacity(index.len());
        for e in index {
            let n: usize = e.shape.iter().product();
            let raw = &blob[e.offset..e.offset + 4 * n];
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((e.name, Tensor::from_vec(&e.shape, data)?));
        }
        Ok(WeightManifest { meta, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.encode()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WeightManifest {
        WeightManifest {
            meta: [("epoch".to_string(), "3".to_string())].into(),
            tensors: vec![
                (
                    "a.weight".into(),
                    Tensor::from_vec(&[2, 2], vec![1.0, -2.0, 0.5, f32::MIN_POSITIVE]).unwrap(),
                ),
                ("a.bias".into(), Tensor::from_vec(&[2], vec![0.0, -0.0]).unwrap()),
            ],
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = sample();
        let back = WeightManifest::decode(&m.encode().unwrap()).unwrap();
        assert_eq!(back.meta, m.meta);
        for ((n1, t1), (n2, t2)) in m.tensors.iter().zip(&back.tensors) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let b1: Vec<u32> = t1.data().iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u32> = t2.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn truncated_blob_reports_offset() {
        let bytes = sample().encode().unwrap();
        let cut = &bytes[..bytes.len() - 3];
        match WeightManifest::decode(cut) {
            Err(Error::Load { offset, reason }) => {
                assert_eq!(offset, cut.len());
                assert!(reason.contains("truncated"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inconsistent_offset_rejected() {
        let text = "statenet-weights 1\ntensor\tx\tf32\t2\t4\nblob\t8\n";
        let mut bytes = text.as_bytes().to_vec();
        bytes.extend_from_slice(&[0; 8]);
        assert!(matches!(
            WeightManifest::decode(&bytes),
            Err(Error::Load { offset: 19, .. })
        ));
    }

    #[test]
    fn garbage_rejected() {
        for bad in [
            &b""[..],
            b"hello\n",
            b"statenet-weights 1\n",
            b"statenet-weights 1\nblob\t4\n",
        ] {
            assert!(WeightManifest::decode(bad).is_err());
        }
    }

    #[test]
    fn names_with_tabs_rejected() {
        let m = WeightManifest {
            meta: BTreeMap::new(),
            tensors: vec![("a\tb".into(), Tensor::zeros(&[1]))],
        };
        assert!(m.encode().is_err());
    }

    #[test]
    fn empty_manifest() {
        let m = WeightManifest::default();
        let bytes = m.encode().unwrap();
        assert_eq!(bytes, b"statenet-weights 1\nblob\t0\n");
        assert_eq!(WeightManifest::decode(&bytes).unwrap(), m);
    }
}
