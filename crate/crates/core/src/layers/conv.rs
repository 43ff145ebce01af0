//! Stride-1 "same" convolution (cross-correlation) for 3x3 and 1x1 kernels.
//!
//! The main path lowers each sample to an im2col matrix and multiplies it by
//! the flattened kernel bank. [`conv2d_forward_direct`] is a straightforward
//! loop nest over the same definition, kept as a cross-check.

use rayon::prelude::*;

use super::{LayerGrad, BIAS, WEIGHT};
use crate::error::{Error, Result};
use crate::tensor::{gemm, is_deterministic, MatView, Real, Tensor};

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k_out: usize,
    ksize: usize,
}

impl Geometry {
    fn pad(&self) -> usize {
        self.ksize / 2
    }
    fn hw(&self) -> usize {
        self.h * self.w
    }
    fn patch(&self) -> usize {
        self.c * self.ksize * self.ksize
    }
}

fn geometry<T: Real>(input: &Tensor<T>, kernels: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Geometry> {
    let [n, c, h, w] = input.dims4("conv2d")?;
    let [k_out, kc, kh, kw] = kernels.dims4("conv2d")?;
    if kh != kw || !(kh == 1 || kh == 3) {
        return Err(Error::Config(format!(
            "conv2d supports 1x1 and 3x3 kernels, got {kh}x{kw}"
        )));
    }
    if kc != c {
        return Err(Error::Config(format!(
            "conv2d channel mismatch: input {:?} has {c} channels, kernels {:?} expect {kc}",
            input.shape(),
            kernels.shape()
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [k_out] {
            return Err(Error::dim(
                "conv2d",
                format!("bias shape {:?} does not match {k_out} filters", b.shape()),
            ));
        }
    }
    Ok(Geometry {
        n,
        c,
        h,
        w,
        k_out,
        ksize: kh,
    })
}

/// Lowers one `[C,H,W]` sample to a `[C*k*k, H*W]` patch matrix.
fn im2col<T: Real>(g: &Geometry, sample: &[T], cols: &mut [T]) {
    let (h, w, k, pad) = (g.h, g.w, g.ksize, g.pad());
    let hw = g.hw();
    for c in 0..g.c {
        let plane = &sample[c * hw..(c + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ki as isize - pad as isize;
                    let out_row = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, o) in out_row.iter_mut().enumerate() {
                        let sx = x as isize + kj as isize - pad as isize;
                        *o = if sx < 0 || sx >= w as isize {
                            T::zero()
                        } else {
                            src_row[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch gradients back onto the sample.
fn col2im<T: Real>(g: &Geometry, cols: &[T], sample: &mut [T]) {
    let (h, w, k, pad) = (g.h, g.w, g.ksize, g.pad());
    let hw = g.hw();
    sample.fill(T::zero());
    for c in 0..g.c {
        let plane = &mut sample[c * hw..(c + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * hw..(row + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ki as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for x in 0..w {
                        let sx = x as isize + kj as isize - pad as isize;
                        if sx >= 0 && sx < w as isize {
                            dst_row[sx as usize] = dst_row[sx as usize] + src[y * w + x];
                        }
                    }
                }
            }
        }
    }
}

fn forward_sample<T: Real>(g: &Geometry, sample: &[T], kernels: &[T], bias: &[T], cols: &mut Vec<T>, out: &mut [T]) {
    let hw = g.hw();
    let patch = g.patch();
    for (k, chunk) in out.chunks_mut(hw).enumerate() {
        chunk.fill(bias[k]);
    }
    let lowered: &[T] = if g.ksize == 1 {
        sample
    } else {
        cols.resize(patch * hw, T::zero());
        im2col(g, sample, cols);
        cols
    };
    gemm(
        g.k_out,
        patch,
        hw,
        MatView::row_major(kernels, g.k_out, patch),
        MatView::row_major(lowered, patch, hw),
        T::one(),
        out,
    );
}

/// Convolution with stride 1 and padding `k/2`, so `H' = H` and `W' = W`.
///
/// `input` is `[N,C,H,W]`, `kernels` `[K,C,k,k]` with `k` in {1, 3}, `bias` `[K]`.
pub fn conv2d_forward<T: Real>(input: &Tensor<T>, kernels: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let g = geometry(input, kernels, Some(bias))?;
    let in_stride = g.c * g.hw();
    let out_stride = g.k_out * g.hw();
    let mut out = vec![T::zero(); g.n * out_stride];
    let samples = input.data().chunks(in_stride).zip(out.chunks_mut(out_stride));
    if is_deterministic() {
        let mut cols = Vec::new();
        for (x, y) in samples {
            forward_sample(&g, x, kernels.data(), bias.data(), &mut cols, y);
        }
    } else {
        samples
            .collect::<Vec<_>>()
            .into_par_iter()
            .for_each_init(Vec::new, |cols, (x, y)| {
                forward_sample(&g, x, kernels.data(), bias.data(), cols, y)
            });
    }
    Tensor::from_vec(&[g.n, g.k_out, g.h, g.w], out)
}

/// Reference loop-nest convolution with the same semantics as [`conv2d_forward`].
pub fn conv2d_forward_direct<T: Real>(input: &Tensor<T>, kernels: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let g = geometry(input, kernels, Some(bias))?;
    let (h, w, k, pad) = (g.h as isize, g.w as isize, g.ksize, g.pad() as isize);
    let x = input.data();
    let kd = kernels.data();
    let mut out = Vec::with_capacity(g.n * g.k_out * g.hw());
    for n in 0..g.n {
        for o in 0..g.k_out {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = bias.data()[o];
                    for c in 0..g.c {
                        for ki in 0..k {
                            for kj in 0..k {
                                let sy = y + ki as isize - pad;
                                let sx = xx + kj as isize - pad;
                                if sy < 0 || sy >= h || sx < 0 || sx >= w {
                                    continue;
                                }
                                let xi = ((n * g.c + c) * g.h + sy as usize) * g.w + sx as usize;
                                let wi = ((o * g.c + c) * k + ki) * k + kj;
                                acc = acc + x[xi] * kd[wi];
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    Tensor::from_vec(&[g.n, g.k_out, g.h, g.w], out)
}

/// Which gradients [`conv2d_backward`] should produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvParamGrads {
    pub params: bool,
    pub input: bool,
}

impl ConvParamGrads {
    pub const ALL: ConvParamGrads = ConvParamGrads {
        params: true,
        input: true,
    };
}

struct SampleGrad<T> {
    d_kernels: Vec<T>,
    d_bias: Vec<T>,
}

#[allow(clippy::too_many_arguments)]
fn backward_sample<T: Real>(
    g: &Geometry,
    sample: &[T],
    kernels: &[T],
    upstream: &[T],
    want: ConvParamGrads,
    acc: Option<&mut SampleGrad<T>>,
    cols: &mut Vec<T>,
    d_sample: Option<&mut [T]>,
) -> Option<SampleGrad<T>> {
    let hw = g.hw();
    let patch = g.patch();
    let mut fresh = None;
    if want.params {
        let lowered: &[T] = if g.ksize == 1 {
            sample
        } else {
            cols.resize(patch * hw, T::zero());
            im2col(g, sample, cols);
            cols
        };
        let (target, beta) = match acc {
            Some(a) => (a, T::one()),
            None => {
                fresh = Some(SampleGrad {
                    d_kernels: vec![T::zero(); g.k_out * patch],
                    d_bias: vec![T::zero(); g.k_out],
                });
                (fresh.as_mut().unwrap(), T::zero())
            }
        };
        // dW += dY [K,HW] * cols^T [HW,patch]
        gemm(
            g.k_out,
            hw,
            patch,
            MatView::row_major(upstream, g.k_out, hw),
            MatView::row_major(lowered, patch, hw).t(),
            beta,
            &mut target.d_kernels,
        );
        for (k, chunk) in upstream.chunks(hw).enumerate() {
            let s: T = chunk.iter().copied().sum();
            target.d_bias[k] = target.d_bias[k] + s;
        }
    }
    if let Some(d_sample) = d_sample {
        // dcols = W^T [patch,K] * dY [K,HW]
        if g.ksize == 1 {
            gemm(
                patch,
                g.k_out,
                hw,
                MatView::row_major(kernels, g.k_out, patch).t(),
                MatView::row_major(upstream, g.k_out, hw),
                T::zero(),
                d_sample,
            );
        } else {
            cols.resize(patch * hw, T::zero());
            gemm(
                patch,
                g.k_out,
                hw,
                MatView::row_major(kernels, g.k_out, patch).t(),
                MatView::row_major(upstream, g.k_out, hw),
                T::zero(),
                cols,
            );
            col2im(g, cols, d_sample);
        }
    }
    fresh
}

/// Reverse mode of [`conv2d_forward`]. `upstream` has the forward output's shape.
///
/// Returns `d_input` (zeros when `want.input` is false) and, when
/// `want.params` is set, `weight` and `bias` gradients summed over the batch.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    upstream: &Tensor<T>,
    want: ConvParamGrads,
) -> Result<LayerGrad<T>> {
    let g = geometry(input, kernels, None)?;
    let expected = [g.n, g.k_out, g.h, g.w];
    if upstream.shape() != expected {
        return Err(Error::dim(
            "conv2d_backward",
            format!(
                "upstream shape {:?} differs from forward output {:?}",
                upstream.shape(),
                expected
            ),
        ));
    }
    let in_stride = g.c * g.hw();
    let out_stride = g.k_out * g.hw();
    let mut d_input = vec![T::zero(); if want.input { input.len() } else { 0 }];
    let mut total = SampleGrad {
        d_kernels: vec![T::zero(); if want.params { kernels.len() } else { 0 }],
        d_bias: vec![T::zero(); if want.params { g.k_out } else { 0 }],
    };

    let xs = input.data().chunks(in_stride);
    let dys = upstream.data().chunks(out_stride);
    let mut dxs: Vec<Option<&mut [T]>> = if want.input {
        d_input.chunks_mut(in_stride).map(Some).collect()
    } else {
        (0..g.n).map(|_| None).collect()
    };

    if is_deterministic() {
        let mut cols = Vec::new();
        for ((x, dy), dx) in xs.zip(dys).zip(dxs.iter_mut()) {
            backward_sample(
                &g,
                x,
                kernels.data(),
                dy,
                want,
                Some(&mut total),
                &mut cols,
                dx.as_deref_mut(),
            );
        }
    } else {
        let partials: Vec<Option<SampleGrad<T>>> = xs
            .zip(dys)
            .zip(dxs)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map_init(Vec::new, |cols, ((x, dy), dx)| {
                backward_sample(&g, x, kernels.data(), dy, want, None, cols, dx)
            })
            .collect();
        // Fixed-order reduction keeps the result independent of scheduling.
        for p in partials.into_iter().flatten() {
            for (t, v) in total.d_kernels.iter_mut().zip(p.d_kernels) {
                *t = *t + v;
            }
            for (t, v) in total.d_bias.iter_mut().zip(p.d_bias) {
                *t = *t + v;
            }
        }
    }

    let d_input = if want.input {
        Tensor::from_vec(input.shape(), d_input)?
    } else {
        Tensor::zeros(input.shape())
    };
    let mut d_params = Vec::new();
    if want.params {
        d_params.push((WEIGHT.to_string(), Tensor::from_vec(kernels.shape(), total.d_kernels)?));
        d_params.push((BIAS.to_string(), Tensor::from_vec(&[g.k_out], total.d_bias)?));
    }
    Ok(LayerGrad { d_input, d_params })
}
