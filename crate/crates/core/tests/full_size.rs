use statenet::modelzoo::{build_arch1, build_arch2, init_weights, predict_logits};
use statenet::Tensor;

fn input(n: usize) -> Tensor<f32> {
    let data = (0..n * 3 * 224 * 224)
        .map(|i| ((i * 7919) % 1000) as f32 / 1000.0)
        .collect();
    Tensor::from_vec(&[n, 3, 224, 224], data).unwrap()
}

#[test]
fn arch2_forward_at_full_width() {
    let arch = build_arch2(1, 224).unwrap();
    let params = init_weights(&arch, 3).unwrap();
    let logits = predict_logits(&arch, &params, &input(2)).unwrap();
    assert_eq!(logits.shape(), &[2, 7]);
    assert!(logits.data().iter().all(|v| v.is_finite()));
}

#[test]
fn arch1_forward_at_full_width() {
    let arch = build_arch1(1, 224).unwrap();
    let params = init_weights(&arch, 3).unwrap();
    let logits = predict_logits(&arch, &params, &input(1)).unwrap();
    assert_eq!(logits.shape(), &[1, 7]);
    assert!(logits.data().iter().all(|v| v.is_finite()));
}
