use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::LabeledSample;
use super::{parse_field, CLASS_NAMES, NUM_CLASSES};
use crate::error::{Error, Result};

/// Train, validation and test fractions.
pub const DEFAULT_RATIOS: [f64; 3] = [0.7, 0.2, 0.1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown split '{s}' (expected train, val or test)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitParams {
    pub seed: u64,
    pub ratios: [f64; 3],
    /// Keep every variant of one source image in the same split.
    pub leakage_safe: bool,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams {
            seed: 0,
            ratios: DEFAULT_RATIOS,
            leakage_safe: true,
        }
    }
}

impl SplitParams {
    fn validate(&self) -> Result<()> {
        let sum: f64 = self.ratios.iter().sum();
        if self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios {:?} must be in [0,1] and sum to 1",
                self.ratios
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitPlan {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub leakage_safe: bool,
    /// Keyed by source id, or by `source_id#variant` when not leakage-safe.
    pub assignment: BTreeMap<String, Split>,
}

fn class_seed(seed: u64, class_index: usize) -> u64 {
    seed ^ (class_index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Per-class sizes: rounded train and validation counts, test takes the rest.
fn partition_sizes(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let train = ((n as f64 * ratios[0]).round() as usize).min(n);
    let val = ((n as f64 * ratios[1]).round() as usize).min(n - train);
    [train, val, n - train - val]
}

/// Stratified, seeded assignment of samples to train/val/test.
pub fn split(samples: &[LabeledSample], params: &SplitParams) -> Result<SplitPlan> {
    params.validate()?;
    let mut per_class: Vec<BTreeSet<String>> = vec![BTreeSet::new(); NUM_CLASSES];
    let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
    for s in samples {
        if s.class_index >= NUM_CLASSES {
            return Err(Error::Data(format!(
                "{} has class index {}",
                s.source_id, s.class_index
            )));
        }
        if let Some(&c) = owner.get(s.source_id.as_str()) {
            if c != s.class_index {
                return Err(Error::Data(format!(
                    "source {} labelled both {} and {}",
                    s.source_id, CLASS_NAMES[c], CLASS_NAMES[s.class_index]
                )));
            }
        }
        owner.insert(&s.source_id, s.class_index);
        per_class[s.class_index].insert(SplitPlan::key_for(s, params.leakage_safe));
    }
    let mut assignment = BTreeMap::new();
    for (class_index, keys) in per_class.into_iter().enumerate() {
        if keys.is_empty() {
            return Err(Error::Data(format!(
                "class '{}' has no samples",
                CLASS_NAMES[class_index]
            )));
        }
        let mut keys: Vec<String> = keys.into_iter().collect();
        keys.shuffle(&mut ChaCha8Rng::seed_from_u64(class_seed(params.seed, class_index)));
        let [train, val, _] = partition_sizes(keys.len(), params.ratios);
        for (i, key) in keys.into_iter().enumerate() {
            let split = if i < train {
                Split::Train
            } else if i < train + val {
                Split::Val
            } else {
                Split::Test
            };
            assignment.insert(key, split);
        }
    }
    Ok(SplitPlan {
        seed: params.seed,
        ratios: params.ratios,
        leakage_safe: params.leakage_safe,
        assignment,
    })
}

impl SplitPlan {
    pub fn key_for(sample: &LabeledSample, leakage_safe: bool) -> String {
        if leakage_safe {
            sample.source_id.clone()
        } else {
            format!("{}#{}", sample.source_id, sample.variant)
        }
    }

    pub fn split_of(&self, sample: &LabeledSample) -> Option<Split> {
        self.assignment.get(&Self::key_for(sample, self.leakage_safe)).copied()
    }

    /// Samples assigned to `split`, in input order.
    pub fn select<'a>(&self, samples: &'a [LabeledSample], split: Split) -> Vec<&'a LabeledSample> {
        samples.iter().filter(|s| self.split_of(s) == Some(split)).collect()
    }

    pub fn encode(&self) -> String {
        let r = self.ratios;
        let mut out = format!(
            "# seed: {}\n# ratios: {},{},{}\n# leakage_safe: {}\n",
            self.seed, r[0], r[1], r[2], self.leakage_safe
        );
        for (k, s) in &self.assignment {
            out.push_str(&format!("{k}\t{s}\n"));
        }
        out
    }

    pub fn decode(text: &str) -> Result<Self> {
        let mut seed = None;
        let mut ratios = None;
        let mut leakage_safe = None;
        let mut assignment = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if let Some(comment) = line.strip_prefix('#') {
                let Some((k, v)) = comment.split_once(':') else {
                    continue;
                };
                let v = v.trim();
                match k.trim() {
                    "seed" => seed = Some(parse_field::<u64>("seed", v, n)?),
                    "leakage_safe" => leakage_safe = Some(parse_field::<bool>("leakage_safe", v, n)?),
                    "ratios" => {
                        let parts: Vec<f64> = v
                            .split(',')
                            .map(|p| parse_field("ratio", p, n))
                            .collect::<Result<_>>()?;
                        let arr: [f64; 3] = parts
                            .try_into()
                            .map_err(|_| Error::Data(format!("line {n}: expected three ratios")))?;
                        ratios = Some(arr);
                    }
                    _ => {}
                }
                continue;
            }
            let Some((key, split)) = line.split_once('\t') else {
                return Err(Error::Data(format!("line {n}: expected key<TAB>split")));
            };
            if key.is_empty() {
                return Err(Error::Data(format!("line {n}: empty key")));
            }
            let split = split
                .parse::<Split>()
                .map_err(|_| Error::Data(format!("line {n}: bad split '{split}'")))?;
            if assignment.insert(key.to_string(), split).is_some() {
                return Err(Error::Data(format!("line {n}: duplicate key '{key}'")));
            }
        }
        let missing = |what: &str| Error::Data(format!("split plan lacks '# {what}:' header"));
        let plan = SplitPlan {
            seed: seed.ok_or_else(|| missing("seed"))?,
            ratios: ratios.ok_or_else(|| missing("ratios"))?,
            leakage_safe: leakage_safe.ok_or_else(|| missing("leakage_safe"))?,
            assignment,
        };
        SplitParams {
            seed: plan.seed,
            ratios: plan.ratios,
            leakage_safe: plan.leakage_safe,
        }
        .validate()
        .map_err(|e| Error::Data(e.to_string()))?;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgpipe::{augment, Variant};
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn originals(per_class: usize) -> Vec<LabeledSample> {
        let mut out = Vec::new();
        for (c, name) in CLASS_NAMES.iter().enumerate() {
            for i in 0..per_class {
                out.push(LabeledSample {
                    source_id: format!("{name}/{i:04}"),
                    variant: Variant::Original,
                    class_index: c,
                    pixels: Tensor::zeros(&[3, 1, 1]),
                    relative_path: String::new(),
                });
            }
        }
        out
    }

    fn counts(plan: &SplitPlan, samples: &[LabeledSample], class: usize) -> [usize; 3] {
        let mut c = [0; 3];
        let keys: BTreeSet<_> = samples
            .iter()
            .filter(|s| s.class_index == class)
            .map(|s| SplitPlan::key_for(s, plan.leakage_safe))
            .collect();
        for k in keys {
            c[plan.assignment[&k] as usize] += 1;
        }
        c
    }

    #[test]
    fn seven_hundred_per_class() {
        let s = originals(700);
        let plan = split(
            &s,
            &SplitParams {
                seed: 11,
                ..Default::default()
            },
        )
        .unwrap();
        for c in 0..NUM_CLASSES {
            assert_eq!(counts(&plan, &s, c), [490, 140, 70]);
        }
    }

    #[test]
    fn same_seed_same_plan() {
        let s = originals(23);
        let p = SplitParams {
            seed: 5,
            ..Default::default()
        };
        assert_eq!(split(&s, &p).unwrap(), split(&s, &p).unwrap());
        let q = SplitParams {
            seed: 6,
            ..Default::default()
        };
        assert_ne!(split(&s, &p).unwrap().assignment, split(&s, &q).unwrap().assignment);
    }

    #[test]
    fn leakage_safe_groups_variants() {
        let s = augment(&originals(10)).unwrap();
        let plan = split(&s, &SplitParams::default()).unwrap();
        assert_eq!(plan.assignment.len(), 70);
        let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
        for x in &s {
            let sp = plan.split_of(x).unwrap();
            assert_eq!(*seen.entry(&x.source_id).or_insert(sp), sp);
        }
    }

    #[test]
    fn per_variant_keys_each_variant() {
        let s = augment(&originals(10)).unwrap();
        let plan = split(
            &s,
            &SplitParams {
                leakage_safe: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(plan.assignment.len(), 280);
        assert_eq!(counts(&plan, &s, 0), [28, 8, 4]);
    }

    #[test]
    fn empty_class_named() {
        let s: Vec<_> = originals(3).into_iter().filter(|x| x.class_index != 5).collect();
        match split(&s, &SplitParams::default()) {
            Err(Error::Data(msg)) => assert!(msg.contains("julienne"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let plan = split(
            &originals(4),
            &SplitParams {
                seed: 99,
                ..Default::default()
            },
        )
        .unwrap();
        let text = plan.encode();
        assert_eq!(SplitPlan::decode(&text).unwrap(), plan);
        assert!(SplitPlan::decode("a\ttrain\n").is_err());
        assert!(SplitPlan::decode("# seed: 1\n# ratios: 0.7,0.2,0.1\n# leakage_safe: true\na\tdev\n").is_err());
    }

    proptest! {
        #[test]
        fn realised_ratios_within_one(sizes in proptest::collection::vec(1usize..60, 7), seed in any::<u64>(), safe in any::<bool>()) {
            let mut s = Vec::new();
            for (c, &n) in sizes.iter().enumerate() {
                for i in 0..n {
                    s.push(LabeledSample {
                        source_id: format!("{}/{i}", CLASS_NAMES[c]),
                        variant: Variant::Original,
                        class_index: c,
                        pixels: Tensor::zeros(&[3, 1, 1]),
                        relative_path: String::new(),
                    });
                }
            }
            let plan = split(&s, &SplitParams { seed, ratios: DEFAULT_RATIOS, leakage_safe: safe }).unwrap();
            for (c, &n) in sizes.iter().enumerate() {
                let got = counts(&plan, &s, c);
                prop_assert_eq!(got.iter().sum::<usize>(), n);
                for k in 0..3 {
                    prop_assert!((got[k] as f64 - DEFAULT_RATIOS[k] * n as f64).abs() <= 1.0 + 1e-9);
                }
            }
        }
    }
}
