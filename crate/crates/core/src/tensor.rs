//! Dense row-major tensors (last axis fastest).

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

use crate::error::{shape_err, Result};

/// Floating-point element type of the numeric engine.
///
/// Production paths run in `f32`; gradient checks instantiate `f64`.
pub trait Scalar:
    Float + Default + Debug + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    /// `c = alpha * a * b + beta * c` on strided matrices.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn from_f64(x: f64) -> Self;

    fn as_f64(self) -> f64;
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: callers pass slices whose extents cover the strided
                // m×k, k×n and m×n views; `matmul` below is the only caller
                // and checks lengths before dispatching.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    )
                }
            }

            fn from_f64(x: f64) -> Self {
                x as $t
            }

            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Row-major matrix product `c (+)= op(a) · op(b)`.
///
/// `a` is `m×k` (stored `k×m` when `trans_a`), `b` is `k×n` (stored `n×k`
/// when `trans_b`), `c` is `m×n`.
#[allow(clippy::too_many_arguments)]
pub fn matmul<S: Scalar>(
    a: &[S],
    trans_a: bool,
    b: &[S],
    trans_b: bool,
    c: &mut [S],
    m: usize,
    k: usize,
    n: usize,
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { S::one() } else { S::zero() };
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|v| *v = S::zero());
        }
        return;
    }
    S::gemm(
        m,
        k,
        n,
        S::one(),
        a,
        rsa,
        csa,
        b,
        rsb,
        csb,
        beta,
        c,
        n as isize,
        1,
    );
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S = f32> {
    dims: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(dims: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(shape_err(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::filled(dims, S::zero())
    }

    pub fn filled(dims: &[usize], value: S) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(usize) -> S) -> Self {
        let n: usize = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != self.data.len() {
            return Err(shape_err(format!(
                "cannot reshape {:?} into {dims:?}",
                self.dims
            )));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    /// Row-major flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        index
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| {
                debug_assert!(i < d);
                acc * d + i
            })
    }

    pub fn get(&self, index: &[usize]) -> S {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: S) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| T::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn ensure_dims(&self, dims: &[usize], what: &str) -> Result<()> {
        if self.dims != dims {
            return Err(shape_err(format!(
                "{what}: expected {dims:?}, got {:?}",
                self.dims
            )));
        }
        Ok(())
    }

    pub fn ensure_same_dims(&self, other: &Self, what: &str) -> Result<()> {
        self.ensure_dims(&other.dims, what)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.ensure_same_dims(other, "add")?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, &b)| *a += b);
        Ok(())
    }

    pub fn scale(&mut self, factor: S) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Stack equally-shaped tensors along a new leading axis.
    pub fn stack(items: &[&Tensor<S>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| shape_err("cannot stack zero tensors"))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            t.ensure_same_dims(first, "stack")?;
            data.extend_from_slice(&t.data);
        }
        let mut dims = vec![items.len()];
        dims.extend_from_slice(&first.dims);
        Ok(Tensor { dims, data })
    }

    /// Sub-tensor at position `i` of the leading axis.
    pub fn index_axis0(&self, i: usize) -> Tensor<S> {
        let inner: usize = self.dims[1..].iter().product();
        Tensor {
            dims: self.dims[1..].to_vec(),
            data: self.data[i * inner..(i + 1) * inner].to_vec(),
        }
    }
}
