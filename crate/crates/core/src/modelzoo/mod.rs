//! VGG-16 base and the two tuned architectures: declarative specs, parameter
//! sets, whole-network passes, weight files and checkpoints.

mod arch;
mod checkpoint;
mod loading;
mod manifest;
mod net;
mod params;

pub use arch::{
    build, build_arch1, build_arch2, build_vgg16_base, param_count, ArchKind, ArchitectureSpec, L2Spec, LayerKind,
    LayerShape, LayerSpec, Origin, ParamCount, DEFAULT_DROPOUT, DEFAULT_INPUT_SIZE, DEFAULT_L2_LAMBDA,
};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, ModelConfig};
pub use loading::{export_base_manifest, load_weights_partial, LoadPolicy, LoadReport};
pub use manifest::{IndexEntry, WeightManifest, MAGIC};
pub use net::{backward, forward, layer_seed, predict_logits, ForwardPass};
pub use params::{init_weights, ParamSet};
