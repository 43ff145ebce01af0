use super::arch::{ArchitectureSpec, Origin};
use super::manifest::WeightManifest;
use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::layers::{param_name, BIAS, WEIGHT};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoadPolicy {
    /// Every base-origin layer must be present in the manifest.
    Strict,
    /// Load whichever layers the manifest names; leave the rest as initialised.
    ByNamePrefix,
}

/// Which layers a partial load filled in.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Layers whose weight and bias came from the manifest.
    pub loaded: Vec<String>,
    /// Parameterised layers left at their initial values.
    pub skipped: Vec<String>,
    /// Manifest tensors that matched no parameter.
    pub unused: Vec<String>,
}

/// Copies matching `<layer>.weight` / `<layer>.bias` tensors from `manifest`
/// into `params`. A shape conflict on a matched name is an error and leaves
/// `params` untouched.
pub fn load_weights_partial(
    arch: &ArchitectureSpec,
    params: &mut ParamSet<f32>,
    manifest: &WeightManifest,
    policy: LoadPolicy,
) -> Result<LoadReport> {
    let mut report = LoadReport::default();
    let mut updates = Vec::new();
    for layer in arch.layers.iter().filter(|l| l.trainable) {
        let names = [param_name(&layer.name, WEIGHT), param_name(&layer.name, BIAS)];
        let found: Vec<_> = names.iter().map(|n| manifest.get(n)).collect();
        match (found[0], found[1]) {
            (Some(w), Some(b)) => {
                for (name, t) in names.iter().zip([w, b]) {
                    let target = params
                        .get(name)
                        .ok_or_else(|| Error::Config(format!("parameter set lacks '{name}'")))?;
                    if target.shape() != t.shape() {
                        return Err(Error::Load {
                            offset: 0,
                            reason: format!(
                                "layer {}: manifest tensor '{name}' has shape {:?}, model expects {:?}",
                                layer.name,
                                t.shape(),
                                target.shape()
                            ),
                        });
                    }
                    updates.push((name.clone(), t.clone()));
                }
                report.loaded.push(layer.name.clone());
            }
            (None, None) => {
                if policy == LoadPolicy::Strict && layer.origin == Origin::Base {
                    return Err(Error::Load {
                        offset: 0,
                        reason: format!("strict load: base layer {} missing from manifest", layer.name),
                    });
                }
                report.skipped.push(layer.name.clone());
            }
            _ => {
                return Err(Error::Load {
                    offset: 0,
                    reason: format!("manifest has only one of weight/bias for layer {}", layer.name),
                })
            }
        }
    }
    for (name, _) in &manifest.tensors {
        if params.get(name).is_none() {
            report.unused.push(name.clone());
        }
    }
    for (name, t) in updates {
        params.set(&name, t)?;
    }
    Ok(report)
}

/// Manifest holding the weights of the base-origin layers of `params`.
pub fn export_base_manifest(arch: &ArchitectureSpec, params: &ParamSet<f32>) -> Result<WeightManifest> {
    let mut tensors = Vec::new();
    for layer in arch.layers.iter().filter(|l| l.trainable && l.origin == Origin::Base) {
        let (w, b) = params.layer(&layer.name)?;
        tensors.push((param_name(&layer.name, WEIGHT), w.clone()));
        tensors.push((param_name(&layer.name, BIAS), b.clone()));
    }
    Ok(WeightManifest {
        meta: Default::default(),
        tensors,
    })
}
