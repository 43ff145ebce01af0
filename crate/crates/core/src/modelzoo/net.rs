//! Whole-network forward and backward passes over an [`ArchitectureSpec`].

use super::arch::{ArchitectureSpec, LayerKind};
use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, dropout_apply, dropout_backward,
    global_avg_pool_backward, global_avg_pool_forward, maxpool2x2_backward, maxpool2x2_forward, param_name,
    relu_backward, relu_forward, ConvParamGrads, DropoutMask, Mode, PoolArgmax, BIAS, WEIGHT,
};
use crate::tensor::{Real, Tensor};

enum Cached<T: Real> {
    Input(Tensor<T>),
    Pool(PoolArgmax),
    Shape(Vec<usize>),
    Mask(Option<DropoutMask<T>>),
}

/// Logits plus whatever each layer needs for the backward pass.
pub struct ForwardPass<T: Real = f32> {
    pub logits: Tensor<T>,
    cache: Vec<Cached<T>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> ForwardPass<T> {
    /// Output shape of every layer, batch dimension included.
    pub fn activation_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }
}

/// Dropout seed of layer `index` for a pass seeded with `seed`.
pub fn layer_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn check_batch<T: Real>(arch: &ArchitectureSpec, batch: &Tensor<T>) -> Result<()> {
    let [_, c, h, w] = batch.dims4("forward")?;
    if [c, h, w] != arch.input_shape {
        return Err(Error::dim(
            "forward",
            format!(
                "batch {:?} does not match architecture input {:?}",
                batch.shape(),
                arch.input_shape
            ),
        ));
    }
    Ok(())
}

fn run<T: Real>(
    arch: &ArchitectureSpec,
    params: &ParamSet<T>,
    batch: &Tensor<T>,
    mode: Mode,
    seed: u64,
    keep: bool,
) -> Result<ForwardPass<T>> {
    check_batch(arch, batch)?;
    let mut x = batch.clone();
    let mut cache = Vec::with_capacity(if keep { arch.layers.len() } else { 0 });
    let mut shapes = Vec::with_capacity(arch.layers.len());
    for (idx, layer) in arch.layers.iter().enumerate() {
        let (y, c) = match layer.kind {
            LayerKind::Conv3 { .. } | LayerKind::Conv1 { .. } => {
                let (w, b) = params.layer(&layer.name)?;
                (conv2d_forward(&x, w, b)?, Cached::Input(x))
            }
            LayerKind::Dense { .. } => {
                let (w, b) = params.layer(&layer.name)?;
                (dense_forward(&x, w, b)?, Cached::Input(x))
            }
            LayerKind::Relu => (relu_forward(&x), Cached::Input(x)),
            LayerKind::MaxPool => {
                let (y, arg) = maxpool2x2_forward(&x)?;
                (y, Cached::Pool(arg))
            }
            LayerKind::Gap => (global_avg_pool_forward(&x)?, Cached::Shape(x.shape().to_vec())),
            LayerKind::Flatten => {
                let shape = x.shape().to_vec();
                let n = shape[0];
                let f = x.len() / n;
                (x.into_reshape(&[n, f])?, Cached::Shape(shape))
            }
            LayerKind::Dropout { rate } => {
                let (y, mask) = dropout_apply(&x, rate, mode, layer_seed(seed, idx))?;
                (y, Cached::Mask(mask))
            }
        };
        shapes.push(y.shape().to_vec());
        if keep {
            cache.push(c);
        }
        x = y;
    }
    Ok(ForwardPass {
        logits: x,
        cache,
        shapes,
    })
}

/// Applies every layer in order, caching what [`backward`] needs. Dropout is
/// active only in [`Mode::Train`], seeded per layer from `seed`.
pub fn forward<T: Real>(
    arch: &ArchitectureSpec,
    params: &ParamSet<T>,
    batch: &Tensor<T>,
    mode: Mode,
    seed: u64,
) -> Result<ForwardPass<T>> {
    run(arch, params, batch, mode, seed, true)
}

/// Eval-mode logits without keeping intermediate activations.
pub fn predict_logits<T: Real>(arch: &ArchitectureSpec, params: &ParamSet<T>, batch: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(run(arch, params, batch, Mode::Eval, 0, false)?.logits)
}

/// Reverse pass from `d_logits`. Returns gradients for the parameters of the
/// layers for which `wants_grad` holds, in layer order; propagation stops at
/// the lowest such layer.
pub fn backward<T: Real>(
    arch: &ArchitectureSpec,
    params: &ParamSet<T>,
    pass: &ForwardPass<T>,
    d_logits: &Tensor<T>,
    wants_grad: &dyn Fn(&str) -> bool,
) -> Result<ParamSet<T>> {
    if pass.cache.len() != arch.layers.len() {
        return Err(Error::Config("forward pass was run without a cache".into()));
    }
    if d_logits.shape() != pass.logits.shape() {
        return Err(Error::dim(
            "backward",
            format!("d_logits {:?} vs logits {:?}", d_logits.shape(), pass.logits.shape()),
        ));
    }
    let Some(lowest) = arch.layers.iter().position(|l| l.trainable && wants_grad(&l.name)) else {
        return Ok(ParamSet::new(Vec::new()));
    };
    let mut grads = Vec::new();
    let mut g = d_logits.clone();
    for idx in (lowest..arch.layers.len()).rev() {
        let layer = &arch.layers[idx];
        let need_input = idx > lowest;
        let want_params = layer.trainable && wants_grad(&layer.name);
        let cached = &pass.cache[idx];
        g = match (layer.kind, cached) {
            (LayerKind::Conv3 { .. } | LayerKind::Conv1 { .. }, Cached::Input(x)) => {
                let (w, _) = params.layer(&layer.name)?;
                let want = ConvParamGrads {
                    params: want_params,
                    input: need_input,
                };
                let lg = conv2d_backward(x, w, &g, want)?;
                collect(&mut grads, &layer.name, lg.d_params);
                lg.d_input
            }
            (LayerKind::Dense { .. }, Cached::Input(x)) => {
                let (w, _) = params.layer(&layer.name)?;
                let lg = dense_backward(x, w, &g, want_params)?;
                collect(&mut grads, &layer.name, lg.d_params);
                lg.d_input
            }
            (LayerKind::Relu, Cached::Input(x)) => relu_backward(x, &g)?.d_input,
            (LayerKind::MaxPool, Cached::Pool(arg)) => maxpool2x2_backward(arg, &g)?.d_input,
            (LayerKind::Gap, Cached::Shape(s)) => global_avg_pool_backward(s, &g)?.d_input,
            (LayerKind::Flatten, Cached::Shape(s)) => g.into_reshape(s)?,
            (LayerKind::Dropout { .. }, Cached::Mask(m)) => dropout_backward(m.as_ref(), &g)?,
            _ => unreachable!("cache entry does not match layer kind"),
        };
    }
    grads.reverse();
    Ok(ParamSet::new(grads))
}

// pushed in reverse so the final reverse() restores weight-before-bias order
fn collect<T: Real>(grads: &mut Vec<(String, Tensor<T>)>, layer: &str, d_params: Vec<(String, Tensor<T>)>) {
    let mut w = None;
    let mut b = None;
    for (suffix, t) in d_params {
        if suffix == WEIGHT {
            w = Some(t);
        } else if suffix == BIAS {
            b = Some(t);
        }
    }
    if let Some(b) = b {
        grads.push((param_name(layer, BIAS), b));
    }
    if let Some(w) = w {
        grads.push((param_name(layer, WEIGHT), w));
    }
}
