//! Inverted dropout: survivors are scaled by `1/(1-rate)` at train time so
//! that inference is the identity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask<T: Real = f32> {
    keep_probability: f64,
    mask: Tensor<T>,
    seed: u64,
}

impl<T: Real> DropoutMask<T> {
    /// Draws a mask of `0` / `1/keep` entries. Same `(shape, rate, seed)` gives
    /// the same mask.
    pub fn generate(shape: &[usize], rate: f64, seed: u64) -> Result<Self> {
        check_rate(rate)?;
        let keep = 1.0 - rate;
        let scale = T::from_f64(1.0 / keep);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
            .collect();
        Ok(DropoutMask {
            keep_probability: keep,
            mask: Tensor::from_vec(shape, data)?,
            seed,
        })
    }

    pub fn keep_probability(&self) -> f64 {
        self.keep_probability
    }

    pub fn mask(&self) -> &Tensor<T> {
        &self.mask
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Returns the output and, in train mode with a nonzero rate, the mask needed
/// for the backward pass.
pub fn dropout_apply<T: Real>(
    input: &Tensor<T>,
    rate: f64,
    mode: Mode,
    seed: u64,
) -> Result<(Tensor<T>, Option<DropoutMask<T>>)> {
    check_rate(rate)?;
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let mask = DropoutMask::generate(input.shape(), rate, seed)?;
    let out = input.mul(&mask.mask)?;
    Ok((out, Some(mask)))
}

pub fn dropout_backward<T: Real>(mask: Option<&DropoutMask<T>>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    match mask {
        None => Ok(upstream.clone()),
        Some(m) => upstream.mul(&m.mask),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_zero_rate_are_identity() {
        let x = Tensor::from_vec(&[4], vec![1.0f32, -2.0, 3.5, 0.25]).unwrap();
        let (y, m) = dropout_apply(&x, 0.2, Mode::Eval, 1).unwrap();
        assert_eq!(y, x);
        assert!(m.is_none());
        let (y, _) = dropout_apply(&x, 0.0, Mode::Train, 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn rate_out_of_range() {
        let x = Tensor::<f32>::zeros(&[2]);
        assert!(matches!(dropout_apply(&x, 1.0, Mode::Train, 0), Err(Error::Config(_))));
        assert!(matches!(dropout_apply(&x, -0.1, Mode::Eval, 0), Err(Error::Config(_))));
    }

    #[test]
    fn mask_values_and_determinism() {
        let a = DropoutMask::<f32>::generate(&[1000], 0.2, 42).unwrap();
        let b = DropoutMask::<f32>::generate(&[1000], 0.2, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.mask().data().iter().all(|&v| v == 0.0 || v == 1.25));
        let c = DropoutMask::<f32>::generate(&[1000], 0.2, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        let x = Tensor::full(&[1_000_000], 1.0f32);
        let (y, _) = dropout_apply(&x, 0.2, Mode::Train, 7).unwrap();
        let mean = y.data().iter().map(|&v| v as f64).sum::<f64>() / 1e6;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn backward_uses_mask() {
        let x = Tensor::full(&[50], 2.0f64);
        let (_, m) = dropout_apply(&x, 0.5, Mode::Train, 3).unwrap();
        let up = Tensor::full(&[50], 1.0f64);
        let d = dropout_backward(m.as_ref(), &up).unwrap();
        assert_eq!(&d, m.unwrap().mask());
    }
}
