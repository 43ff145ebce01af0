//! RMSprop with per-layer freezing.
//!
//! Update for every trainable parameter:
//!
//! ```text
//! ms <- rho * ms + (1 - rho) * g^2
//! w  <- w - lr * g / sqrt(ms + epsilon)
//! ```

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::modelzoo::{ArchitectureSpec, Origin, ParamSet};
use crate::tensor::{Real, Tensor};

pub const DEFAULT_LR: f64 = 1e-4;
pub const DEFAULT_RHO: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            lr: DEFAULT_LR,
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl RmsPropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must be in [0, 1), got {}", self.rho)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Running mean of squared gradients, one tensor per trainable parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsPropState<T: Real = f32> {
    mean_square: Vec<(String, Tensor<T>)>,
    step_count: u64,
}

impl<T: Real> RmsPropState<T> {
    /// Zero state for every parameter of `params` not frozen by `freeze`.
    pub fn new(params: &ParamSet<T>, freeze: &FreezePolicy) -> Self {
        let mean_square = params
            .iter()
            .filter(|(name, _)| !freeze.is_frozen_param(name))
            .map(|(name, t)| (name.to_string(), Tensor::zeros_like(t)))
            .collect();
        RmsPropState {
            mean_square,
            step_count: 0,
        }
    }

    pub fn from_parts(mean_square: Vec<(String, Tensor<T>)>, step_count: u64) -> Self {
        RmsPropState {
            mean_square,
            step_count,
        }
    }

    pub fn mean_square(&self) -> &[(String, Tensor<T>)] {
        &self.mean_square
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.mean_square.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Names of the parameters the state tracks, i.e. the trainable ones.
    pub fn tracked(&self) -> impl Iterator<Item = &str> {
        self.mean_square.iter().map(|(n, _)| n.as_str())
    }
}

/// One RMSprop step. `grads` must hold exactly the parameters tracked by
/// `state`; everything else in `params` is left bitwise untouched.
///
/// Either the whole step applies or, on error, nothing changes.
pub fn rmsprop_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    state: &mut RmsPropState<T>,
    config: &RmsPropConfig,
) -> Result<()> {
    if grads.len() != state.mean_square.len() {
        return Err(Error::dim(
            "rmsprop_step",
            format!(
                "{} gradients for {} trainable parameters",
                grads.len(),
                state.mean_square.len()
            ),
        ));
    }
    for (name, ms) in &state.mean_square {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::dim("rmsprop_step", format!("no gradient for '{name}'")))?;
        let p = params
            .get(name)
            .ok_or_else(|| Error::dim("rmsprop_step", format!("no parameter '{name}'")))?;
        if g.shape() != p.shape() || ms.shape() != p.shape() {
            return Err(Error::dim(
                "rmsprop_step",
                format!("'{name}': parameter {:?}, gradient {:?}", p.shape(), g.shape()),
            ));
        }
        if !g.all_finite() {
            return Err(Error::Numeric {
                context: format!("layer {}", ParamSet::<T>::layer_of(name)),
                detail: format!("non-finite gradient in '{name}'"),
            });
        }
    }

    let rho = T::from_f64(config.rho);
    let one_minus_rho = T::from_f64(1.0 - config.rho);
    let lr = T::from_f64(config.lr);
    let eps = T::from_f64(config.epsilon);
    for (name, ms) in &mut state.mean_square {
        let g = grads.get(name).expect("checked above");
        let p = params.get_mut(name).expect("checked above");
        for ((w, m), &gi) in p.data_mut().iter_mut().zip(ms.data_mut()).zip(g.data()) {
            *m = rho * *m + one_minus_rho * gi * gi;
            *w = *w - lr * gi / (*m + eps).sqrt();
        }
    }
    state.step_count += 1;
    Ok(())
}

/// Layers excluded from optimizer updates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FreezePolicy {
    frozen_layer_names: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FreezeMode {
    /// Freeze the parameterised layers that carry pretrained base weights.
    PretrainedFrozen,
    AllTrainable,
    Custom(Vec<String>),
}

impl std::str::FromStr for FreezeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "pretrained-frozen" => Ok(FreezeMode::PretrainedFrozen),
            "all-trainable" => Ok(FreezeMode::AllTrainable),
            _ => match s.strip_prefix("custom:") {
                Some(list) => Ok(FreezeMode::Custom(
                    list.split(',')
                        .map(str::trim)
                        .filter(|n| !n.is_empty())
                        .map(String::from)
                        .collect(),
                )),
                None => Err(Error::Config(format!(
                    "unknown freeze mode '{s}' (expected pretrained-frozen, all-trainable or custom:<layers>)"
                ))),
            },
        }
    }
}

impl std::fmt::Display for FreezeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FreezeMode::PretrainedFrozen => f.write_str("pretrained-frozen"),
            FreezeMode::AllTrainable => f.write_str("all-trainable"),
            FreezeMode::Custom(names) => write!(f, "custom:{}", names.join(",")),
        }
    }
}

pub fn build_freeze_policy(arch: &ArchitectureSpec, mode: &FreezeMode) -> Result<FreezePolicy> {
    let frozen_layer_names = match mode {
        FreezeMode::PretrainedFrozen => arch
            .layers
            .iter()
            .filter(|l| l.trainable && l.origin == Origin::Base)
            .map(|l| l.name.clone())
            .collect(),
        FreezeMode::AllTrainable => BTreeSet::new(),
        FreezeMode::Custom(names) => {
            for n in names {
                if arch.layer(n).is_none() {
                    return Err(Error::Config(format!("freeze list names unknown layer '{n}'")));
                }
            }
            names.iter().cloned().collect()
        }
    };
    Ok(FreezePolicy { frozen_layer_names })
}

impl FreezePolicy {
    pub fn frozen_layer_names(&self) -> &BTreeSet<String> {
        &self.frozen_layer_names
    }

    pub fn is_frozen(&self, layer: &str) -> bool {
        self.frozen_layer_names.contains(layer)
    }

    pub fn is_frozen_param(&self, param: &str) -> bool {
        self.is_frozen(ParamSet::<f32>::layer_of(param))
    }

    /// Keeps only layers that are also in `loaded`; used when pretrained
    /// freezing should apply just to weights that really came from a manifest.
    pub fn retain_loaded(mut self, loaded: &[String]) -> Self {
        self.frozen_layer_names.retain(|n| loaded.contains(n));
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelzoo::{build_arch1, init_weights};
    use proptest::prelude::*;

    fn scalar(v: f64) -> ParamSet<f64> {
        ParamSet::new(vec![("w.weight".into(), Tensor::from_vec(&[1], vec![v]).unwrap())])
    }

    #[test]
    fn single_step_closed_form() {
        let mut p = scalar(1.0);
        let mut s = RmsPropState::new(&p, &FreezePolicy::default());
        rmsprop_step(&mut p, &scalar(1.0), &mut s, &RmsPropConfig::default()).unwrap();
        let expected = 1.0 - 1e-4 / (0.1f64 + 1e-8).sqrt();
        let got = p.get("w.weight").unwrap().data()[0];
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.999683772).abs() < 1e-9);
        assert_eq!(s.step_count(), 1);

        let mut p32 = scalar(1.0).cast::<f32>();
        let mut s32 = RmsPropState::new(&p32, &FreezePolicy::default());
        rmsprop_step(&mut p32, &scalar(1.0).cast(), &mut s32, &RmsPropConfig::default()).unwrap();
        assert!((p32.get("w.weight").unwrap().data()[0] as f64 - 0.999683772).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = scalar(0.3);
        let mut s = RmsPropState::new(&p, &FreezePolicy::default());
        for _ in 0..5 {
            rmsprop_step(&mut p, &scalar(0.0), &mut s, &RmsPropConfig::default()).unwrap();
        }
        assert_eq!(p.get("w.weight").unwrap().data()[0], 0.3);
        assert_eq!(s.get("w.weight").unwrap().data()[0], 0.0);
    }

    #[test]
    fn nan_gradient_is_numeric_error_naming_layer() {
        let mut p = scalar(1.0);
        let mut s = RmsPropState::new(&p, &FreezePolicy::default());
        let err = rmsprop_step(&mut p, &scalar(f64::NAN), &mut s, &RmsPropConfig::default()).unwrap_err();
        assert!(matches!(&err, Error::Numeric { context, .. } if context.contains("w")));
        assert_eq!(p.get("w.weight").unwrap().data()[0], 1.0);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = scalar(1.0);
        let mut s = RmsPropState::new(&p, &FreezePolicy::default());
        let g = ParamSet::new(vec![("w.weight".into(), Tensor::<f64>::zeros(&[2]))]);
        assert!(matches!(
            rmsprop_step(&mut p, &g, &mut s, &RmsPropConfig::default()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn freeze_policies() {
        let arch = build_arch1(8, 64).unwrap();
        let frozen = build_freeze_policy(&arch, &FreezeMode::PretrainedFrozen).unwrap();
        assert_eq!(frozen.frozen_layer_names().len(), 13);
        for t in ["conv5_4", "fc1", "fc2", "fc3"] {
            assert!(!frozen.is_frozen(t));
        }
        assert!(frozen.is_frozen("conv5_3"));
        assert!(build_freeze_policy(&arch, &FreezeMode::AllTrainable)
            .unwrap()
            .frozen_layer_names()
            .is_empty());
        let custom = build_freeze_policy(&arch, &FreezeMode::Custom(vec!["conv1_1".into()])).unwrap();
        assert_eq!(custom.frozen_layer_names().iter().collect::<Vec<_>>(), vec!["conv1_1"]);
        assert!(matches!(
            build_freeze_policy(&arch, &FreezeMode::Custom(vec!["conv9_9".into()])),
            Err(Error::Config(_))
        ));
        let narrowed = frozen.retain_loaded(&["conv1_1".into()]);
        assert_eq!(narrowed.frozen_layer_names().len(), 1);
    }

    #[test]
    fn state_tracks_only_trainable() {
        let arch = build_arch1(8, 64).unwrap();
        let p = init_weights(&arch, 0).unwrap();
        let freeze = build_freeze_policy(&arch, &FreezeMode::PretrainedFrozen).unwrap();
        let s = RmsPropState::new(&p, &freeze);
        assert_eq!(s.mean_square().len(), 8);
        assert!(s.tracked().all(|n| !freeze.is_frozen_param(n)));
    }

    #[test]
    fn freeze_mode_parse() {
        assert_eq!("all-trainable".parse::<FreezeMode>().unwrap(), FreezeMode::AllTrainable);
        assert_eq!(
            "custom:conv1_1, conv1_2".parse::<FreezeMode>().unwrap(),
            FreezeMode::Custom(vec!["conv1_1".into(), "conv1_2".into()])
        );
        assert!("frozen".parse::<FreezeMode>().is_err());
    }

    proptest! {
        #[test]
        fn rho_zero_is_sign_normalised_sgd(w in -5.0f64..5.0, g in -5.0f64..5.0) {
            let mut p = scalar(w);
            let mut s = RmsPropState::new(&p, &FreezePolicy::default());
            let cfg = RmsPropConfig { rho: 0.0, ..Default::default() };
            rmsprop_step(&mut p, &scalar(g), &mut s, &cfg).unwrap();
            let expected = w - 1e-4 * g / (g * g + 1e-8).sqrt();
            prop_assert!((p.get("w.weight").unwrap().data()[0] - expected).abs() < 1e-12);
        }

        #[test]
        fn mean_square_is_convex_combination(m0 in 0.0f64..4.0, g in -3.0f64..3.0) {
            let mut p = scalar(0.0);
            let mut s = RmsPropState::from_parts(vec![("w.weight".into(), Tensor::from_vec(&[1], vec![m0]).unwrap())], 0);
            rmsprop_step(&mut p, &scalar(g), &mut s, &RmsPropConfig::default()).unwrap();
            let m1 = s.get("w.weight").unwrap().data()[0];
            let (lo, hi) = if m0 < g * g { (m0, g * g) } else { (g * g, m0) };
            prop_assert!(m1 >= lo - 1e-12 && m1 <= hi + 1e-12 && m1 >= 0.0);
        }

        #[test]
        fn identical_inputs_identical_outputs(w in -5.0f32..5.0, g in -5.0f32..5.0) {
            let run = || {
                let mut p = scalar(w as f64).cast::<f32>();
                let mut s = RmsPropState::new(&p, &FreezePolicy::default());
                for _ in 0..3 {
                    rmsprop_step(&mut p, &scalar(g as f64).cast(), &mut s, &RmsPropConfig::default()).unwrap();
                }
                (p, s)
            };
            let (a, b) = (run(), run());
            prop_assert_eq!(a.0.get("w.weight").unwrap().data()[0].to_bits(), b.0.get("w.weight").unwrap().data()[0].to_bits());
        }
    }
}
