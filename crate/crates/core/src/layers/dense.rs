use super::{LayerGrad, BIAS, WEIGHT};
use crate::error::{Error, Result};
use crate::tensor::{gemm, MatView, Real, Tensor};

fn check<T: Real>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let [n, f] = input.dims2("dense")?;
    let [f2, u] = weights.dims2("dense")?;
    if f != f2 {
        return Err(Error::dim(
            "dense",
            format!("input {:?} does not match weights {:?}", input.shape(), weights.shape()),
        ));
    }
    Ok((n, f, u))
}

/// `input [N,F] * weights [F,U] + bias [U]`.
pub fn dense_forward<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, f, u) = check(input, weights)?;
    if bias.shape() != [u] {
        return Err(Error::dim(
            "dense",
            format!("bias {:?} does not match {u} units", bias.shape()),
        ));
    }
    let mut out: Vec<T> = (0..n).flat_map(|_| bias.data().iter().copied()).collect();
    gemm(
        n,
        f,
        u,
        MatView::row_major(input.data(), n, f),
        MatView::row_major(weights.data(), f, u),
        T::one(),
        &mut out,
    );
    Tensor::from_vec(&[n, u], out)
}

pub fn dense_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    upstream: &Tensor<T>,
    want_params: bool,
) -> Result<LayerGrad<T>> {
    let (n, f, u) = check(input, weights)?;
    if upstream.shape() != [n, u] {
        return Err(Error::dim(
            "dense_backward",
            format!("upstream {:?} differs from forward output [{n}, {u}]", upstream.shape()),
        ));
    }
    let mut d_input = vec![T::zero(); n * f];
    gemm(
        n,
        u,
        f,
        MatView::row_major(upstream.data(), n, u),
        MatView::row_major(weights.data(), f, u).t(),
        T::zero(),
        &mut d_input,
    );
    let mut d_params = Vec::new();
    if want_params {
        let mut d_w = vec![T::zero(); f * u];
        gemm(
            f,
            n,
            u,
            MatView::row_major(input.data(), n, f).t(),
            MatView::row_major(upstream.data(), n, u),
            T::zero(),
            &mut d_w,
        );
        let mut d_b = vec![T::zero(); u];
        for row in upstream.data().chunks(u) {
            for (acc, &g) in d_b.iter_mut().zip(row) {
                *acc = *acc + g;
            }
        }
        d_params.push((WEIGHT.to_string(), Tensor::from_vec(&[f, u], d_w)?));
        d_params.push((BIAS.to_string(), Tensor::from_vec(&[u], d_b)?));
    }
    Ok(LayerGrad {
        d_input: Tensor::from_vec(&[n, f], d_input)?,
        d_params,
    })
}
