//! Declarative layer lists for VGG-16 and the two tuned variants.
//!
//! Layer names follow `conv{block}_{index}`, `relu{block}_{index}`,
//! `pool{block}`, `fc{index}`, `relu_fc{index}`, `drop{index}`. The 1x1
//! convolution of architecture 2 is `conv6_1`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imgpipe::NUM_CLASSES;

/// Default dropout rate of the tuned heads.
pub const DEFAULT_DROPOUT: f64 = 0.2;
/// Default L2 strength of architecture 2.
pub const DEFAULT_L2_LAMBDA: f64 = 0.01;
pub const DEFAULT_INPUT_SIZE: usize = 224;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerKind {
    Conv3 { filters: usize },
    Conv1 { filters: usize },
    MaxPool,
    Gap,
    Dense { units: usize },
    Relu,
    Dropout { rate: f64 },
    Flatten,
}

impl LayerKind {
    pub fn has_params(&self) -> bool {
        matches!(
            self,
            LayerKind::Conv3 { .. } | LayerKind::Conv1 { .. } | LayerKind::Dense { .. }
        )
    }

    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::Conv3 { .. } => "conv3",
            LayerKind::Conv1 { .. } => "conv1",
            LayerKind::MaxPool => "maxpool",
            LayerKind::Gap => "gap",
            LayerKind::Dense { .. } => "dense",
            LayerKind::Relu => "relu",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::Flatten => "flatten",
        }
    }
}

/// Whether a layer's weights come from the pretrained base network or were
/// added for the tuned head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Base,
    Added,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// True for layers that own parameters.
    pub trainable: bool,
    pub origin: Origin,
}

impl LayerSpec {
    fn new(name: impl Into<String>, kind: LayerKind, origin: Origin) -> Self {
        LayerSpec {
            name: name.into(),
            trainable: kind.has_params(),
            kind,
            origin,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArchKind {
    Vgg16Base,
    Arch1,
    Arch2,
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchKind::Vgg16Base => "vgg16-base",
            ArchKind::Arch1 => "arch1",
            ArchKind::Arch2 => "arch2",
        })
    }
}

impl FromStr for ArchKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "vgg16-base" => Ok(ArchKind::Vgg16Base),
            "arch1" => Ok(ArchKind::Arch1),
            "arch2" => Ok(ArchKind::Arch2),
            other => Err(Error::Config(format!(
                "unknown architecture '{other}' (expected arch1, arch2 or vgg16-base)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct L2Spec {
    pub lambda: f64,
    pub scope: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchitectureSpec {
    pub kind: ArchKind,
    /// `[3, H, W]`.
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub l2: Option<L2Spec>,
    pub width_divisor: usize,
}

/// Per-sample output shape of one layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub output: Vec<usize>,
}

const BASE_BLOCKS: [(usize, usize); 5] = [(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)];

fn check_divisor(width_divisor: usize) -> Result<()> {
    if width_divisor == 0 || 64 % width_divisor != 0 {
        return Err(Error::Config(format!(
            "width divisor must be a positive divisor of 64, got {width_divisor}"
        )));
    }
    Ok(())
}

fn scaled_units(full: usize, width_divisor: usize) -> usize {
    (full / width_divisor).max(NUM_CLASSES)
}

fn push_conv(layers: &mut Vec<LayerSpec>, block: usize, index: usize, kind: LayerKind, origin: Origin) {
    layers.push(LayerSpec::new(format!("conv{block}_{index}"), kind, origin));
    layers.push(LayerSpec::new(format!("relu{block}_{index}"), LayerKind::Relu, origin));
}

fn base_layers(width_divisor: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for (b, &(width, count)) in BASE_BLOCKS.iter().enumerate() {
        let block = b + 1;
        for i in 1..=count {
            push_conv(
                &mut layers,
                block,
                i,
                LayerKind::Conv3 {
                    filters: width / width_divisor,
                },
                Origin::Base,
            );
        }
        // the fifth block is pooled by the tuned heads, after their added conv
        if block < 5 {
            layers.push(LayerSpec::new(format!("pool{block}"), LayerKind::MaxPool, Origin::Base));
        }
    }
    layers
}

/// The 13-convolution VGG-16 feature stack (four pools, no fifth pool, no head).
pub fn build_vgg16_base(width_divisor: usize, input_size: usize) -> Result<ArchitectureSpec> {
    check_divisor(width_divisor)?;
    let spec = ArchitectureSpec {
        kind: ArchKind::Vgg16Base,
        input_shape: [3, input_size, input_size],
        layers: base_layers(width_divisor),
        l2: None,
        width_divisor,
    };
    spec.validate()?;
    Ok(spec)
}

/// Base stack + added Conv3-512 + pool + FC-4096 / dropout / FC-128 / dropout / FC-7.
pub fn build_arch1(width_divisor: usize, input_size: usize) -> Result<ArchitectureSpec> {
    check_divisor(width_divisor)?;
    let mut layers = base_layers(width_divisor);
    let added = Origin::Added;
    push_conv(
        &mut layers,
        5,
        4,
        LayerKind::Conv3 {
            filters: 512 / width_divisor,
        },
        added,
    );
    layers.push(LayerSpec::new("pool5", LayerKind::MaxPool, added));
    layers.push(LayerSpec::new("flatten", LayerKind::Flatten, added));
    let widths = [scaled_units(4096, width_divisor), scaled_units(128, width_divisor)];
    for (i, units) in widths.into_iter().enumerate() {
        let idx = i + 1;
        layers.push(LayerSpec::new(format!("fc{idx}"), LayerKind::Dense { units }, added));
        layers.push(LayerSpec::new(format!("relu_fc{idx}"), LayerKind::Relu, added));
        layers.push(LayerSpec::new(
            format!("drop{idx}"),
            LayerKind::Dropout { rate: DEFAULT_DROPOUT },
            added,
        ));
    }
    layers.push(LayerSpec::new("fc3", LayerKind::Dense { units: NUM_CLASSES }, added));
    let spec = ArchitectureSpec {
        kind: ArchKind::Arch1,
        input_shape: [3, input_size, input_size],
        layers,
        l2: None,
        width_divisor,
    };
    spec.validate()?;
    Ok(spec)
}

/// Base stack + added Conv3-512 + pool + 1x1 Conv-512 + GAP + dropout + FC-7,
/// with L2 on the dense head.
pub fn build_arch2(width_divisor: usize, input_size: usize) -> Result<ArchitectureSpec> {
    check_divisor(width_divisor)?;
    let mut layers = base_layers(width_divisor);
    let added = Origin::Added;
    let width = 512 / width_divisor;
    push_conv(&mut layers, 5, 4, LayerKind::Conv3 { filters: width }, added);
    layers.push(LayerSpec::new("pool5", LayerKind::MaxPool, added));
    push_conv(&mut layers, 6, 1, LayerKind::Conv1 { filters: width }, added);
    layers.push(LayerSpec::new("gap", LayerKind::Gap, added));
    layers.push(LayerSpec::new(
        "drop1",
        LayerKind::Dropout { rate: DEFAULT_DROPOUT },
        added,
    ));
    layers.push(LayerSpec::new("fc1", LayerKind::Dense { units: NUM_CLASSES }, added));
    let mut spec = ArchitectureSpec {
        kind: ArchKind::Arch2,
        input_shape: [3, input_size, input_size],
        layers,
        l2: None,
        width_divisor,
    };
    spec.l2 = Some(L2Spec {
        lambda: DEFAULT_L2_LAMBDA,
        scope: spec.dense_layer_names(),
    });
    spec.validate()?;
    Ok(spec)
}

/// Builds any of the three families.
pub fn build(kind: ArchKind, width_divisor: usize, input_size: usize) -> Result<ArchitectureSpec> {
    match kind {
        ArchKind::Vgg16Base => build_vgg16_base(width_divisor, input_size),
        ArchKind::Arch1 => build_arch1(width_divisor, input_size),
        ArchKind::Arch2 => build_arch2(width_divisor, input_size),
    }
}

impl ArchitectureSpec {
    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn dense_layer_names(&self) -> BTreeSet<String> {
        self.layers
            .iter()
            .filter(|l| matches!(l.kind, LayerKind::Dense { .. }))
            .map(|l| l.name.clone())
            .collect()
    }

    /// Sets the rate of every dropout layer.
    pub fn with_dropout(mut self, rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        for l in &mut self.layers {
            if let LayerKind::Dropout { rate: r } = &mut l.kind {
                *r = rate;
            }
        }
        Ok(self)
    }

    /// Replaces the L2 strength; a no-op for architectures without L2.
    pub fn with_l2_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!(
                "L2 lambda must be finite and >= 0, got {lambda}"
            )));
        }
        if let Some(l2) = &mut self.l2 {
            l2.lambda = lambda;
        }
        Ok(self)
    }

    /// Replaces the set of layers whose weights the L2 penalty covers.
    pub fn with_l2_scope(mut self, scope: BTreeSet<String>) -> Result<Self> {
        if let Some(bad) = scope
            .iter()
            .find(|n| self.layer(n).map(|l| !l.trainable).unwrap_or(true))
        {
            return Err(Error::Config(format!(
                "L2 scope layer '{bad}' is not a parameterised layer"
            )));
        }
        if let Some(l2) = &mut self.l2 {
            l2.scope = scope;
        }
        Ok(self)
    }

    /// Per-sample output shape of every layer, in order.
    pub fn propagate(&self) -> Result<Vec<LayerShape>> {
        let mut names = BTreeSet::new();
        let mut shape: Vec<usize> = self.input_shape.to_vec();
        if shape.contains(&0) {
            return Err(Error::Config(format!("input shape {shape:?} has a zero extent")));
        }
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            if !names.insert(layer.name.as_str()) {
                return Err(Error::Config(format!("duplicate layer name '{}'", layer.name)));
            }
            let fail = |why: String| Error::Config(format!("shape propagation fails at {}: {why}", layer.name));
            shape = match (layer.kind, shape.as_slice()) {
                (LayerKind::Conv3 { filters } | LayerKind::Conv1 { filters }, &[_, h, w]) => {
                    if filters == 0 {
                        return Err(fail("zero filters".into()));
                    }
                    vec![filters, h, w]
                }
                (LayerKind::MaxPool, &[c, h, w]) => {
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(fail(format!("odd spatial extent {h}x{w}")));
                    }
                    vec![c, h / 2, w / 2]
                }
                (LayerKind::Gap, &[c, _, _]) => vec![c],
                (LayerKind::Flatten, s) => vec![s.iter().product()],
                (LayerKind::Dense { units }, &[_]) => {
                    if units == 0 {
                        return Err(fail("zero units".into()));
                    }
                    vec![units]
                }
                (LayerKind::Relu | LayerKind::Dropout { .. }, s) => s.to_vec(),
                (kind, s) => return Err(fail(format!("{} cannot take input shape {s:?}", kind.tag()))),
            };
            out.push(LayerShape {
                name: layer.name.clone(),
                output: shape.clone(),
            });
        }
        Ok(out)
    }

    /// Checks propagation, and for the tuned families a 7-logit output.
    pub fn validate(&self) -> Result<()> {
        let shapes = self.propagate()?;
        if self.kind != ArchKind::Vgg16Base {
            let last = shapes.last().map(|s| s.output.clone()).unwrap_or_default();
            if last != [NUM_CLASSES] {
                return Err(Error::Config(format!(
                    "{} must end in {NUM_CLASSES} logits, ends in {last:?}",
                    self.kind
                )));
            }
        }
        if let Some(l2) = &self.l2 {
            if let Some(bad) = l2.scope.iter().find(|n| self.layer(n).is_none()) {
                return Err(Error::Config(format!("L2 scope names unknown layer '{bad}'")));
            }
        }
        Ok(())
    }

    /// Spatial side length after each max-pool layer.
    pub fn pool_extents(&self) -> Result<Vec<usize>> {
        Ok(self
            .layers
            .iter()
            .zip(self.propagate()?)
            .filter(|(l, _)| l.kind == LayerKind::MaxPool)
            .map(|(_, s)| s.output[1])
            .collect())
    }

    /// `(layer name, [weight shape, bias shape])` for every parameterised layer.
    pub fn param_shapes(&self) -> Result<Vec<(String, Vec<Vec<usize>>)>> {
        let shapes = self.propagate()?;
        let mut prev = self.input_shape.to_vec();
        let mut out = Vec::new();
        for (layer, shape) in self.layers.iter().zip(shapes) {
            match layer.kind {
                LayerKind::Conv3 { filters } => {
                    out.push((layer.name.clone(), vec![vec![filters, prev[0], 3, 3], vec![filters]]))
                }
                LayerKind::Conv1 { filters } => {
                    out.push((layer.name.clone(), vec![vec![filters, prev[0], 1, 1], vec![filters]]))
                }
                LayerKind::Dense { units } => out.push((layer.name.clone(), vec![vec![prev[0], units], vec![units]])),
                _ => {}
            }
            prev = shape.output;
        }
        Ok(out)
    }
}

/// Parameter counts per layer (every layer listed, zero for parameterless ones).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub per_layer: Vec<(String, usize)>,
    pub total: usize,
}

impl ParamCount {
    pub fn layer(&self, name: &str) -> Option<usize> {
        self.per_layer.iter().find(|(n, _)| n == name).map(|&(_, c)| c)
    }

    /// Sum over the layers that follow the last max-pool.
    pub fn after_last_pool(&self, arch: &ArchitectureSpec) -> usize {
        let start = arch
            .layers
            .iter()
            .rposition(|l| l.kind == LayerKind::MaxPool)
            .map_or(0, |i| i + 1);
        self.per_layer[start..].iter().map(|&(_, c)| c).sum()
    }
}

/// Closed-form counts: `k*k*Cin*Cout + Cout` for convolutions, `F*U + U` for
/// dense layers, zero otherwise.
pub fn param_count(arch: &ArchitectureSpec) -> Result<ParamCount> {
    let shapes = arch.propagate()?;
    let mut prev = arch.input_shape.to_vec();
    let mut per_layer = Vec::with_capacity(arch.layers.len());
    for (layer, shape) in arch.layers.iter().zip(shapes) {
        let count = match layer.kind {
            LayerKind::Conv3 { filters } => 9 * prev[0] * filters + filters,
            LayerKind::Conv1 { filters } => prev[0] * filters + filters,
            LayerKind::Dense { units } => prev[0] * units + units,
            _ => 0,
        };
        per_layer.push((layer.name.clone(), count));
        prev = shape.output;
    }
    let total = per_layer.iter().map(|&(_, c)| c).sum();
    Ok(ParamCount { per_layer, total })
}
