use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::ArchitectureSpec;
use crate::error::{Error, Result};
use crate::layers::{param_name, split_param_name, BIAS, WEIGHT};
use crate::tensor::{Real, Tensor};

/// Named parameter tensors of a network, in layer order (weight before bias).
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T: Real = f32> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Real> ParamSet<T> {
    pub fn new(entries: Vec<(String, Tensor<T>)>) -> Self {
        ParamSet { entries }
    }

    /// All-zero parameters with the architecture's shapes.
    pub fn zeros(arch: &ArchitectureSpec) -> Result<Self> {
        let mut entries = Vec::new();
        for (layer, shapes) in arch.param_shapes()? {
            entries.push((param_name(&layer, WEIGHT), Tensor::zeros(&shapes[0])));
            entries.push((param_name(&layer, BIAS), Tensor::zeros(&shapes[1])));
        }
        Ok(ParamSet { entries })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Weight and bias of a parameterised layer.
    pub fn layer(&self, layer: &str) -> Result<(&Tensor<T>, &Tensor<T>)> {
        let w = self.get(&param_name(layer, WEIGHT));
        let b = self.get(&param_name(layer, BIAS));
        match (w, b) {
            (Some(w), Some(b)) => Ok((w, b)),
            _ => Err(Error::Config(format!("no parameters for layer '{layer}'"))),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn element_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn into_entries(self) -> Vec<(String, Tensor<T>)> {
        self.entries
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self.entries.iter().map(|(n, t)| (n.clone(), t.cast())).collect(),
        }
    }

    /// Replaces a tensor, requiring the same shape.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let slot = self
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter '{name}'")))?;
        if slot.shape() != value.shape() {
            return Err(Error::dim(
                "set_param",
                format!("{name}: expected {:?}, got {:?}", slot.shape(), value.shape()),
            ));
        }
        *slot = value;
        Ok(())
    }

    /// Layer that owns parameter `name`.
    pub fn layer_of(name: &str) -> &str {
        split_param_name(name).map_or(name, |(l, _)| l)
    }
}

/// Uniform `±sqrt(6 / (fan_in + fan_out))` weights and zero biases, drawn in
/// layer order from one seeded stream.
///
/// Convolution fans include the receptive field: `fan_in = C*k*k`,
/// `fan_out = K*k*k`.
pub fn init_weights(arch: &ArchitectureSpec, seed: u64) -> Result<ParamSet<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::zeros(arch)?;
    for (name, t) in params.iter_mut() {
        if !name.ends_with(WEIGHT) {
            continue;
        }
        let (fan_in, fan_out) = fans(t.shape());
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
        for v in t.data_mut() {
            *v = rng.random_range(-bound..bound);
        }
    }
    Ok(params)
}

fn fans(shape: &[usize]) -> (usize, usize) {
    match *shape {
        [out, inp, kh, kw] => (inp * kh * kw, out * kh * kw),
        [inp, out] => (inp, out),
        _ => (1, 1),
    }
}
