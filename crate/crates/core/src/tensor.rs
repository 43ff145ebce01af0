//! Dense row-major tensors of 1 to 4 dimensions.
//!
//! Activations are laid out NCHW and convolution kernels OIHW. There is no
//! implicit broadcasting: binary operations take either two tensors of the same
//! shape or a tensor and a scalar.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::OnceLock;

use num_traits::Float;

use crate::error::{Error, Result};

/// Element type of a [`Tensor`]. Implemented for `f32` (storage and training)
/// and `f64` (gradient checking).
pub trait Real: Float + Default + fmt::Debug + fmt::Display + Send + Sync + std::iter::Sum + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` over strided row/column views.
    ///
    /// # Safety
    /// Every index reachable through the given extents and strides must lie
    /// inside the corresponding buffer.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

static DETERMINISTIC: AtomicBool = AtomicBool::new(false);
static DETERMINISTIC_ENV: OnceLock<bool> = OnceLock::new();

/// Environment variable that forces deterministic mode when set to `1`.
pub const DETERMINISTIC_ENV_VAR: &str = "STATENET_DETERMINISTIC";

/// Turn deterministic mode on or off for the whole process.
pub fn set_deterministic(on: bool) {
    DETERMINISTIC.store(on, Ordering::SeqCst);
}

/// True when kernels must run single-threaded in a fixed order.
pub fn is_deterministic() -> bool {
    let env = *DETERMINISTIC_ENV.get_or_init(|| {
        std::env::var(DETERMINISTIC_ENV_VAR)
            .map(|v| v.trim() == "1")
            .unwrap_or(false)
    });
    env || DETERMINISTIC.load(Ordering::SeqCst)
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T: Real = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(op: &'static str, shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(Error::dim(op, format!("rank must be 1..=4, got shape {shape:?}")));
    }
    if shape.contains(&0) {
        return Err(Error::dim(op, format!("zero extent in shape {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl<T: Real> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = check_shape("from_vec", shape)?;
        if n != data.len() {
            return Err(Error::dim(
                "from_vec",
                format!("shape {shape:?} needs {n} elements, got {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// # Panics
    /// On an invalid shape; use [`Tensor::from_vec`] for fallible construction.
    pub fn full(shape: &[usize], value: T) -> Self {
        let n = check_shape("full", shape).expect("invalid tensor shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(&other.shape)
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false: every extent is positive.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Extents of a rank-4 tensor.
    pub fn dims4(&self, op: &'static str) -> Result<[usize; 4]> {
        match self.shape[..] {
            [a, b, c, d] => Ok([a, b, c, d]),
            _ => Err(Error::dim(
                op,
                format!("expected a rank-4 tensor, got shape {:?}", self.shape),
            )),
        }
    }

    /// Extents of a rank-2 tensor.
    pub fn dims2(&self, op: &'static str) -> Result<[usize; 2]> {
        match self.shape[..] {
            [a, b] => Ok([a, b]),
            _ => Err(Error::dim(
                op,
                format!("expected a rank-2 tensor, got shape {:?}", self.shape),
            )),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Element-type conversion through `f64`.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Same data in row-major order under a new shape.
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Self> {
        self.clone().into_reshape(new_shape)
    }

    pub fn into_reshape(mut self, new_shape: &[usize]) -> Result<Self> {
        let n = check_shape("reshape", new_shape)?;
        if n != self.data.len() {
            return Err(Error::dim(
                "reshape",
                format!(
                    "cannot reshape {:?} ({} elements) to {:?} ({n} elements)",
                    self.shape,
                    self.data.len(),
                    new_shape
                ),
            ));
        }
        self.shape = new_shape.to_vec();
        Ok(self)
    }

    pub fn elementwise(&self, op: BinaryOp, rhs: Operand<'_, T>) -> Result<Self> {
        let f = |a: T, b: T| match op {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
        };
        let data = match rhs {
            Operand::Scalar(s) => self.data.iter().map(|&a| f(a, s)).collect(),
            Operand::Tensor(other) => {
                if other.shape != self.shape {
                    return Err(Error::dim(
                        op.name(),
                        format!("shapes {:?} and {:?} differ", self.shape, other.shape),
                    ));
                }
                self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect()
            }
        };
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.elementwise(BinaryOp::Add, Operand::Tensor(other))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.elementwise(BinaryOp::Sub, Operand::Tensor(other))
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.elementwise(BinaryOp::Mul, Operand::Tensor(other))
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    /// Rank-2 matrix product `[M,K] x [K,N] -> [M,N]`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        let [m, k] = self.dims2("matmul")?;
        let [k2, n] = rhs.dims2("matmul")?;
        if k != k2 {
            return Err(Error::dim(
                "matmul",
                format!("inner extents differ: {:?} x {:?}", self.shape, rhs.shape),
            ));
        }
        let mut out = vec![T::zero(); m * n];
        gemm(
            m,
            k,
            n,
            MatView::row_major(&self.data, m, k),
            MatView::row_major(&rhs.data, k, n),
            T::zero(),
            &mut out,
        );
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?} ", self.shape)?;
        if self.data.len() <= 16 {
            f.debug_list().entries(&self.data).finish()
        } else {
            write!(f, "[{} elements]", self.data.len())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

impl BinaryOp {
    fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
        }
    }
}

/// Right-hand side of [`Tensor::elementwise`].
#[derive(Clone, Copy, Debug)]
pub enum Operand<'a, T: Real> {
    Tensor(&'a Tensor<T>),
    Scalar(T),
}

/// Borrowed strided matrix, used to feed transposed operands to [`gemm`]
/// without copying.
#[derive(Clone, Copy)]
pub(crate) struct MatView<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a, T> MatView<'a, T> {
    pub(crate) fn row_major(data: &'a [T], rows: usize, cols: usize) -> Self {
        MatView {
            data,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub(crate) fn t(self) -> Self {
        MatView {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn max_index(&self) -> usize {
        (self.rows - 1) * self.rs + (self.cols - 1) * self.cs
    }
}

/// `c = a * b + beta * c` with `c` row-major `[a.rows, b.cols]`.
pub(crate) fn gemm<T: Real>(m: usize, k: usize, n: usize, a: MatView<'_, T>, b: MatView<'_, T>, beta: T, c: &mut [T]) {
    assert!(a.rows == m && a.cols == k && b.rows == k && b.cols == n);
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for x in &mut c[..m * n] {
            *x = *x * beta;
        }
        return;
    }
    assert!(a.max_index() < a.data.len() && b.max_index() < b.data.len());
    // SAFETY: extents and strides were checked against the buffer lengths above.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t2(rows: &[&[f32]]) -> Tensor {
        let n = rows[0].len();
        Tensor::from_vec(&[rows.len(), n], rows.iter().flat_map(|r| r.iter().copied()).collect()).unwrap()
    }

    #[test]
    fn matmul_identity_and_zero() {
        let a = t2(&[&[1., 2.], &[3., 4.]]);
        assert_eq!(a.matmul(&Tensor::eye(2)).unwrap(), a);
        let z = Tensor::zeros(&[2, 2]);
        assert_eq!(a.matmul(&z).unwrap(), z);
    }

    #[test]
    fn matmul_two_by_two() {
        let a = t2(&[&[1., 2.], &[3., 4.]]);
        let b = t2(&[&[5., 6.], &[7., 8.]]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[19., 22., 43., 50.]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        let b = Tensor::<f32>::zeros(&[2, 3]);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3] x [2, 3]"), "{msg}");
    }

    #[test]
    fn gemm_transposed_views() {
        // a^T * b where a is stored [2,3]
        let a = [1.0f64, 2., 3., 4., 5., 6.];
        let b = [1.0f64, 0., 0., 1.];
        let mut c = [0.0f64; 6];
        gemm(
            3,
            2,
            2,
            MatView::row_major(&a, 2, 3).t(),
            MatView::row_major(&b, 2, 2),
            0.0,
            &mut c,
        );
        assert_eq!(c, [1., 4., 2., 5., 3., 6.]);
    }

    #[test]
    fn elementwise_cases() {
        let x = Tensor::from_vec(&[3], vec![1.0f32, 2., 3.]).unwrap();
        assert_eq!(x.add(&Tensor::zeros_like(&x)).unwrap(), x);
        assert_eq!(x.scale(2.0).data(), &[2., 4., 6.]);
        let a = Tensor::from_vec(&[2], vec![1.0f32, 2.]).unwrap();
        let b = Tensor::from_vec(&[2], vec![3.0f32, 4.]).unwrap();
        assert_eq!(a.mul(&b).unwrap().data(), &[3., 8.]);
        assert_eq!(
            a.elementwise(BinaryOp::Sub, Operand::Scalar(1.0)).unwrap().data(),
            &[0., 1.]
        );
        assert!(matches!(a.add(&x).unwrap_err(), Error::Dimension { op: "add", .. }));
    }

    #[test]
    fn reshape_cases() {
        let x = Tensor::from_vec(&[2, 3], (0..6).map(|v| v as f32).collect()).unwrap();
        let flat = x.reshape(&[6]).unwrap();
        assert_eq!(flat.data(), x.data());
        assert_eq!(flat.shape(), &[6]);
        assert_eq!(flat.reshape(&[2, 3]).unwrap(), x);
        assert!(x.reshape(&[4]).is_err());

        let big = Tensor::<f32>::zeros(&[1, 512, 7, 7]);
        assert_eq!(big.reshape(&[1, 25088]).unwrap().shape(), &[1, 25088]);
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(Tensor::<f32>::from_vec(&[], vec![]).is_err());
        assert!(Tensor::<f32>::from_vec(&[1, 1, 1, 1, 1], vec![0.0]).is_err());
        assert!(Tensor::<f32>::from_vec(&[0], vec![]).is_err());
        assert!(Tensor::<f32>::from_vec(&[2], vec![0.0]).is_err());
    }

    proptest! {
        #[test]
        fn identity_is_exact(n in 1usize..9, seed in any::<u64>()) {
            let data: Vec<f32> = (0..n * n)
                .map(|i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f32 / 7.0 - 50.0)
                .collect();
            let a = Tensor::from_vec(&[n, n], data).unwrap();
            let eye = Tensor::eye(n);
            prop_assert_eq!(a.matmul(&eye).unwrap(), a.clone());
            prop_assert_eq!(eye.matmul(&a).unwrap(), a);
        }

        #[test]
        fn reshape_round_trip(dims in proptest::collection::vec(1usize..5, 1..=4)) {
            let n: usize = dims.iter().product();
            let x = Tensor::from_vec(&dims, (0..n).map(|v| v as f32).collect()).unwrap();
            let flat = x.reshape(&[n]).unwrap();
            prop_assert_eq!(flat.reshape(&dims).unwrap(), x);
        }

        #[test]
        fn ops_do_not_mutate_inputs(v in proptest::collection::vec(-10f32..10., 1..20)) {
            let x = Tensor::from_vec(&[v.len()], v.clone()).unwrap();
            let before = x.clone();
            let _ = x.add(&x).unwrap();
            let _ = x.scale(3.0);
            let _ = x.reshape(&[v.len(), 1]).unwrap();
            prop_assert_eq!(x, before);
        }
    }
}
