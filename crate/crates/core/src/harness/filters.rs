//! Kernel visualisation as a tiled graymap.

use crate::error::{Error, Result};
use crate::imgpipe::encode_pgm;
use crate::modelzoo::{ArchitectureSpec, LayerKind, ParamSet};

/// Pixels per kernel element in the rendered grid.
pub const TILE_SCALE: usize = 8;
const GAP: usize = 1;

/// One `k x k` tile per output channel: the kernel averaged over input
/// channels, min-max scaled into `[0, 1]`. A constant kernel maps to 0.5.
pub fn filter_tiles(arch: &ArchitectureSpec, params: &ParamSet<f32>, layer: &str) -> Result<(usize, Vec<Vec<f32>>)> {
    let spec = arch
        .layer(layer)
        .ok_or_else(|| Error::Config(format!("no layer named '{layer}'")))?;
    if !matches!(spec.kind, LayerKind::Conv3 { .. } | LayerKind::Conv1 { .. }) {
        return Err(Error::Config(format!(
            "layer '{layer}' is a {} layer, not a convolution",
            spec.kind.tag()
        )));
    }
    let (w, _) = params.layer(layer)?;
    let [out_c, in_c, k, _] = w.dims4("filter_tiles")?;
    let area = k * k;
    let tiles = w
        .data()
        .chunks(in_c * area)
        .take(out_c)
        .map(|kernel| {
            let mean: Vec<f32> = (0..area)
                .map(|p| (0..in_c).map(|c| kernel[c * area + p]).sum::<f32>() / in_c as f32)
                .collect();
            let lo = mean.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = mean.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            if hi > lo {
                mean.iter().map(|v| (v - lo) / (hi - lo)).collect()
            } else {
                vec![0.5; area]
            }
        })
        .collect();
    Ok((k, tiles))
}

/// Lays tiles out on a near-square grid and encodes it as P5.
pub fn render_grid(k: usize, tiles: &[Vec<f32>]) -> Result<Vec<u8>> {
    if tiles.is_empty() {
        return Err(Error::Config("no filters to render".into()));
    }
    let cols = (tiles.len() as f64).sqrt().ceil() as usize;
    let rows = tiles.len().div_ceil(cols);
    let cell = k * TILE_SCALE;
    let width = cols * (cell + GAP) + GAP;
    let height = rows * (cell + GAP) + GAP;
    let mut pixels = vec![0u8; width * height];
    for (t, tile) in tiles.iter().enumerate() {
        let (ty, tx) = (t / cols, t % cols);
        let (oy, ox) = (GAP + ty * (cell + GAP), GAP + tx * (cell + GAP));
        for y in 0..cell {
            for x in 0..cell {
                let v = tile[(y / TILE_SCALE) * k + x / TILE_SCALE];
                pixels[(oy + y) * width + ox + x] = (v * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    encode_pgm(width, height, &pixels)
}

pub fn export_filter_grid(arch: &ArchitectureSpec, params: &ParamSet<f32>, layer: &str) -> Result<Vec<u8>> {
    let (k, tiles) = filter_tiles(arch, params, layer)?;
    render_grid(k, &tiles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelzoo::{build_arch1, build_arch2, init_weights};
    use crate::tensor::Tensor;

    #[test]
    fn conv1_1_at_divisor_8_has_8_tiles() {
        let arch = build_arch1(8, 64).unwrap();
        let params = init_weights(&arch, 0).unwrap();
        let (k, tiles) = filter_tiles(&arch, &params, "conv1_1").unwrap();
        assert_eq!((k, tiles.len()), (3, 8));
        for t in &tiles {
            assert_eq!(t.iter().copied().fold(f32::INFINITY, f32::min), 0.0);
            assert_eq!(t.iter().copied().fold(f32::NEG_INFINITY, f32::max), 1.0);
        }
        let pgm = export_filter_grid(&arch, &params, "conv1_1").unwrap();
        // 3x3 grid of 24-pixel cells with 1-pixel gaps
        assert!(pgm.starts_with(b"P5\n76 76\n255\n"));
    }

    #[test]
    fn constant_kernel_is_mid_gray() {
        let arch = build_arch2(16, 32).unwrap();
        let mut params = init_weights(&arch, 0).unwrap();
        let shape = params.get("conv6_1.weight").unwrap().shape().to_vec();
        params.set("conv6_1.weight", Tensor::full(&shape, 0.3)).unwrap();
        let (k, tiles) = filter_tiles(&arch, &params, "conv6_1").unwrap();
        assert_eq!(k, 1);
        assert!(tiles.iter().all(|t| t == &vec![0.5]));
    }

    #[test]
    fn non_conv_layers_rejected() {
        let arch = build_arch1(8, 64).unwrap();
        let params = init_weights(&arch, 0).unwrap();
        for name in ["fc1", "pool1", "nope"] {
            assert!(matches!(filter_tiles(&arch, &params, name), Err(Error::Config(_))));
        }
    }
}
