use super::LayerGrad;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Flat input index of the maximum of every pooling window, in output order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolArgmax {
    input_shape: [usize; 4],
    indices: Vec<usize>,
}

impl PoolArgmax {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// 2x2 max pooling with stride 2. Ties go to the first position in row-major
/// window order.
pub fn maxpool2x2_forward<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolArgmax)> {
    let [n, c, h, w] = input.dims4("maxpool2x2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dim(
            "maxpool2x2",
            format!("spatial extent must be even, got {h}x{w}"),
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut indices = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for xx in 0..ow {
                let top = base + 2 * y * w + 2 * xx;
                let mut best = top;
                for idx in [top + 1, top + w, top + w + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                indices.push(best);
            }
        }
    }
    Ok((
        Tensor::from_vec(&[n, c, oh, ow], out)?,
        PoolArgmax {
            input_shape: [n, c, h, w],
            indices,
        },
    ))
}

/// Routes each upstream value to the winning position of its window.
pub fn maxpool2x2_backward<T: Real>(argmax: &PoolArgmax, upstream: &Tensor<T>) -> Result<LayerGrad<T>> {
    if upstream.len() != argmax.indices.len() {
        return Err(Error::dim(
            "maxpool2x2_backward",
            format!(
                "upstream has {} elements, forward produced {}",
                upstream.len(),
                argmax.indices.len()
            ),
        ));
    }
    let mut d = Tensor::zeros(&argmax.input_shape);
    let dd = d.data_mut();
    for (&i, &g) in argmax.indices.iter().zip(upstream.data()) {
        dd[i] = dd[i] + g;
    }
    Ok(LayerGrad::input_only(d))
}

/// Spatial mean per channel: `[N,C,H,W] -> [N,C]`.
pub fn global_avg_pool_forward<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.dims4("global_avg_pool")?;
    let hw = h * w;
    let inv = T::from_f64(1.0 / hw as f64);
    let out = input
        .data()
        .chunks(hw)
        .map(|plane| plane.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::from_vec(&[n, c], out)
}

/// Spreads `upstream / (H*W)` uniformly over each channel.
pub fn global_avg_pool_backward<T: Real>(input_shape: &[usize], upstream: &Tensor<T>) -> Result<LayerGrad<T>> {
    let (n, c, h, w) = match *input_shape {
        [n, c, h, w] => (n, c, h, w),
        _ => {
            return Err(Error::dim(
                "global_avg_pool_backward",
                format!("expected rank-4 input shape, got {input_shape:?}"),
            ))
        }
    };
    if upstream.shape() != [n, c] {
        return Err(Error::dim(
            "global_avg_pool_backward",
            format!("upstream shape {:?} differs from [{n}, {c}]", upstream.shape()),
        ));
    }
    let hw = h * w;
    let inv = T::from_f64(1.0 / hw as f64);
    let mut d = Vec::with_capacity(n * c * hw);
    for &g in upstream.data() {
        d.extend(std::iter::repeat_n(g * inv, hw));
    }
    Ok(LayerGrad::input_only(Tensor::from_vec(input_shape, d)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::testutil::{assert_grad, dot, random};

    #[test]
    fn halves_vgg_input() {
        let x = Tensor::<f32>::zeros(&[1, 1, 224, 224]);
        assert_eq!(maxpool2x2_forward(&x).unwrap().0.shape(), &[1, 1, 112, 112]);
    }

    #[test]
    fn constant_input_constant_output() {
        let x = Tensor::full(&[2, 3, 4, 6], 1.5f32);
        let (y, _) = maxpool2x2_forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn routes_gradient_to_window_maximum() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0f32, 2., 3., 4.]).unwrap();
        let (y, arg) = maxpool2x2_forward(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        let g = maxpool2x2_backward(&arg, &Tensor::full(&[1, 1, 1, 1], 0.7f32)).unwrap();
        assert_eq!(g.d_input.data(), &[0., 0., 0., 0.7]);
    }

    #[test]
    fn odd_extent_rejected() {
        let x = Tensor::<f32>::zeros(&[1, 1, 3, 4]);
        assert!(matches!(maxpool2x2_forward(&x), Err(Error::Dimension { .. })));
    }

    #[test]
    fn backward_preserves_gradient_mass() {
        let x = random(&[2, 2, 4, 4], 5);
        let (_, arg) = maxpool2x2_forward(&x).unwrap();
        let up = random(&[2, 2, 2, 2], 6);
        let g = maxpool2x2_backward(&arg, &up).unwrap();
        let l1 = |t: &Tensor<f64>| t.data().iter().map(|v| v.abs()).sum::<f64>();
        assert!((l1(&g.d_input) - l1(&up)).abs() < 1e-12);
    }

    #[test]
    fn maxpool_matches_finite_differences() {
        let x = random(&[1, 2, 4, 4], 15);
        let (_, arg) = maxpool2x2_forward(&x).unwrap();
        let up = random(&[1, 2, 2, 2], 16);
        let g = maxpool2x2_backward(&arg, &up).unwrap();
        assert_grad(&|x| dot(&up, &maxpool2x2_forward(x).unwrap().0), &x, &g.d_input, 1e-6);
    }

    #[test]
    fn gap_shapes_and_values() {
        let x = Tensor::<f32>::zeros(&[1, 512, 7, 7]);
        assert_eq!(global_avg_pool_forward(&x).unwrap().shape(), &[1, 512]);
        let c = Tensor::full(&[1, 2, 3, 3], -4.0f32);
        assert_eq!(global_avg_pool_forward(&c).unwrap().data(), &[-4.0, -4.0]);
        let q = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0f32, 2., 3., 4.]).unwrap();
        assert_eq!(global_avg_pool_forward(&q).unwrap().data(), &[2.5]);
    }

    #[test]
    fn gap_matches_finite_differences() {
        let x = random(&[2, 3, 2, 3], 17);
        let up = random(&[2, 3], 18);
        let g = global_avg_pool_backward(x.shape(), &up).unwrap();
        assert_grad(
            &|x| dot(&up, &global_avg_pool_forward(x).unwrap()),
            &x,
            &g.d_input,
            1e-6,
        );
    }
}
