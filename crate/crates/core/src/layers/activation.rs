use super::LayerGrad;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub fn relu_forward<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

/// Passes `upstream` through where the forward input was strictly positive.
pub fn relu_backward<T: Real>(input: &Tensor<T>, upstream: &Tensor<T>) -> Result<LayerGrad<T>> {
    if input.shape() != upstream.shape() {
        return Err(Error::dim(
            "relu_backward",
            format!("input {:?} vs upstream {:?}", input.shape(), upstream.shape()),
        ));
    }
    let d = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Ok(LayerGrad::input_only(Tensor::from_vec(input.shape(), d)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::testutil::{assert_grad, dot, random};

    #[test]
    fn sign_cases() {
        let x = Tensor::from_vec(&[3], vec![-1.0f32, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0., 0., 2.]);
        let pos = Tensor::from_vec(&[2], vec![0.5f32, 3.0]).unwrap();
        assert_eq!(relu_forward(&pos), pos);
    }

    #[test]
    fn dead_unit_blocks_gradient() {
        let x = Tensor::from_vec(&[2], vec![-1.0f32, 1.0]).unwrap();
        let up = Tensor::from_vec(&[2], vec![123.0f32, 4.0]).unwrap();
        assert_eq!(relu_backward(&x, &up).unwrap().d_input.data(), &[0.0, 4.0]);
    }

    #[test]
    fn matches_finite_differences() {
        // keep coordinates away from the kink
        let x = random(&[4, 5], 9).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
        let up = random(&[4, 5], 10);
        let g = relu_backward(&x, &up).unwrap();
        assert_grad(&|x| dot(&up, &relu_forward(x)), &x, &g.d_input, 1e-6);
    }
}
