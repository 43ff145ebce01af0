#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statenet::imgpipe::{encode_ppm, CLASS_NAMES};
use statenet::Tensor;

/// Base colour of each class.
pub const PALETTE: [[f32; 3]; 7] = [
    [220.0, 40.0, 40.0],
    [240.0, 200.0, 30.0],
    [40.0, 170.0, 60.0],
    [40.0, 80.0, 220.0],
    [200.0, 60.0, 200.0],
    [40.0, 200.0, 210.0],
    [120.0, 120.0, 120.0],
];

/// A class-specific solid colour overlaid with a class-specific pattern;
/// `variant` jitters the pattern phase and adds mild noise.
pub fn synthetic_image(class: usize, variant: u64, size: usize) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(variant * 31 + class as u64);
    let phase = rng.random_range(0..8) as usize;
    let mut data = vec![0f32; 3 * size * size];
    for y in 0..size {
        for x in 0..size {
            let on = match class {
                0 => true,
                1 => (x + phase) % 8 < 4,
                2 => (y + phase) % 8 < 4,
                3 => ((x + phase) / 6 + y / 6).is_multiple_of(2),
                4 => (x + y + phase) % 10 < 5,
                5 => (x + phase) % 4 < 1,
                _ => (x * 7 + y * 13 + phase).is_multiple_of(5),
            };
            let shade = if on { 1.0 } else { 0.45 };
            for c in 0..3 {
                let noise: f32 = rng.random_range(-12.0..12.0);
                data[(c * size + y) * size + x] = (PALETTE[class][c] * shade + noise).clamp(0.0, 255.0);
            }
        }
    }
    Tensor::from_vec(&[3, size, size], data).unwrap()
}

/// Writes `<root>/<class>/img_NN.ppm`, `per_class` images per class.
pub fn write_dataset(root: &Path, per_class: usize, size: usize, seed: u64) {
    for (c, class) in CLASS_NAMES.iter().enumerate() {
        let dir = root.join(class);
        std::fs::create_dir_all(&dir).unwrap();
        for i in 0..per_class {
            let img = synthetic_image(c, seed * 1000 + i as u64, size);
            std::fs::write(dir.join(format!("img_{i:02}.ppm")), encode_ppm(&img).unwrap()).unwrap();
        }
    }
}

/// Maximum relative error between two gradient estimates.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < 1e-12 {
        (a - b).abs()
    } else {
        (a - b).abs() / denom
    }
}

/// Central difference of `f` along coordinate `i` of `x`.
pub fn central_diff(f: &dyn Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>, i: usize, h: f64) -> f64 {
    let mut plus = x.clone();
    plus.data_mut()[i] += h;
    let mut minus = x.clone();
    minus.data_mut()[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}
