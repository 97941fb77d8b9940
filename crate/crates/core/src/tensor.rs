//! Dense NCHW tensors.
//!
//! Every value flowing through the network is a [`Tensor`]: a 4-D array in
//! batch/channel/row/column order, row-major within each channel plane, with
//! an optional gradient buffer of the same shape. The element type is either
//! `f32` (training and inference) or `f64` (gradient checking); see [`Float`].

use std::fmt;

use crate::error::{Error, Result};

/// Storage precision of a tensor or a whole graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn tag(self) -> u8 {
        match self {
            Precision::F32 => 0,
            Precision::F64 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Precision::F32),
            1 => Some(Precision::F64),
            _ => None,
        }
    }

    pub fn byte_width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

/// Scalar element type of a tensor.
pub trait Float:
    num_traits::Float
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
    const PRECISION: Precision;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    /// `c = alpha * a * b + beta * c` on strided row/column-major views.
    ///
    /// # Safety
    /// The strides and dimensions must describe in-bounds elements of the
    /// backing buffers, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
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

impl Float for f32 {
    const PRECISION: Precision = Precision::F32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }

    unsafe fn gemm_raw(
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
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Float for f64 {
    const PRECISION: Precision = Precision::F64;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }

    unsafe fn gemm_raw(
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
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Batch, channel, row and column extents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn with_channels(self, c: usize) -> Self {
        Shape { c, ..self }
    }

    pub fn with_spatial(self, h: usize, w: usize) -> Self {
        Shape { h, w, ..self }
    }

    fn validate(self) -> Result<Self> {
        if self.dims().iter().any(|&d| d == 0) {
            return Err(Error::InvalidShape(self.dims()));
        }
        Ok(self)
    }
}

impl From<(usize, usize, usize, usize)> for Shape {
    fn from((n, c, h, w): (usize, usize, usize, usize)) -> Self {
        Shape { n, c, h, w }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T: Float> {
    shape: Shape,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Float> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("has_grad", &self.grad.is_some())
            .finish()
    }
}

impl<T: Float> Tensor<T> {
    pub fn full(shape: impl Into<Shape>, value: T) -> Result<Self> {
        let shape = shape.into().validate()?;
        Ok(Tensor {
            shape,
            data: vec![value; shape.len()],
            grad: None,
        })
    }

    pub fn zeros(shape: impl Into<Shape>) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: impl Into<Shape>) -> Result<Self> {
        Self::full(shape, T::one())
    }

    pub fn from_values(shape: impl Into<Shape>, values: Vec<T>) -> Result<Self> {
        let shape = shape.into().validate()?;
        if values.len() != shape.len() {
            return Err(Error::LengthMismatch {
                shape,
                expected: shape.len(),
                actual: values.len(),
            });
        }
        Ok(Tensor {
            shape,
            data: values,
            grad: None,
        })
    }

    pub fn from_f64_values(shape: impl Into<Shape>, values: &[f64]) -> Result<Self> {
        Self::from_values(shape, values.iter().map(|&v| T::from_f64(v)).collect())
    }

    /// Builds a tensor whose shape was already validated by another tensor.
    pub(crate) fn from_parts(shape: Shape, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        Tensor {
            shape,
            data,
            grad: None,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Tensor::from_parts(self.shape, vec![T::zero(); self.data.len()])
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

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

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn cast<U: Float>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            grad: self
                .grad
                .as_ref()
                .map(|g| g.iter().map(|v| U::from_f64(v.as_f64())).collect()),
        }
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(n, c, y, x)]
    }

    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let s = self.shape;
        ((n * s.c + c) * s.h + y) * s.w + x
    }

    /// The `c`-th channel plane of batch item `n`.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &mut self.data[start..start + p]
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated (zeroed) on first use.
    pub fn grad_mut(&mut self) -> &mut [T] {
        let len = self.data.len();
        self.grad.get_or_insert_with(|| vec![T::zero(); len])
    }

    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|v| *v = T::zero()),
            None => self.grad = Some(vec![T::zero(); self.data.len()]),
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn accumulate_grad(&mut self, g: &[T]) {
        debug_assert_eq!(g.len(), self.data.len());
        for (acc, &v) in self.grad_mut().iter_mut().zip(g) {
            *acc += v;
        }
    }

    /// Gradient buffer as its own tensor (zeros when absent).
    pub fn grad_tensor(&self) -> Tensor<T> {
        match &self.grad {
            Some(g) => Tensor::from_parts(self.shape, g.clone()),
            None => self.zeros_like(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor::from_parts(self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Entrywise `f(self[i], other[i])`; shapes must match.
    pub fn zip_map(&self, other: &Tensor<T>, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape,
                right: other.shape,
            });
        }
        Ok(Tensor::from_parts(
            self.shape,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Self> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn clamp(&self, lo: T, hi: T) -> Self {
        self.map(|v| v.max(lo).min(hi))
    }

    /// Adds `other` into `self` in place.
    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "add_assign",
                left: self.shape,
                right: other.shape,
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Channels `[start, start + count)` as a new tensor.
    pub fn slice_channels(&self, start: usize, count: usize) -> Result<Self> {
        let s = self.shape;
        if count == 0 || start + count > s.c {
            return Err(Error::invalid(
                "slice_channels",
                format!("range {start}..{} out of {} channels", start + count, s.c),
            ));
        }
        let plane = s.plane();
        let mut data = Vec::with_capacity(s.n * count * plane);
        for n in 0..s.n {
            let base = (n * s.c + start) * plane;
            data.extend_from_slice(&self.data[base..base + count * plane]);
        }
        Ok(Tensor::from_parts(s.with_channels(count), data))
    }
}

/// Stacks `b`'s channels after `a`'s.
pub fn concat_channels<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape, b.shape);
    if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
        return Err(Error::ShapeMismatch {
            op: "concat_channels",
            left: sa,
            right: sb,
        });
    }
    let plane = sa.plane();
    let mut data = Vec::with_capacity(sa.len() + sb.len());
    for n in 0..sa.n {
        data.extend_from_slice(&a.data[n * sa.c * plane..(n + 1) * sa.c * plane]);
        data.extend_from_slice(&b.data[n * sb.c * plane..(n + 1) * sb.c * plane]);
    }
    Ok(Tensor::from_parts(sa.with_channels(sa.c + sb.c), data))
}

/// Backward of [`concat_channels`]: splits an upstream gradient into the
/// blocks belonging to the first `c_a` channels and the remainder.
pub fn split_channels<T: Float>(grad: &Tensor<T>, c_a: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let c = grad.shape.c;
    if c_a == 0 || c_a >= c {
        return Err(Error::invalid(
            "split_channels",
            format!("cannot split {c} channels at {c_a}"),
        ));
    }
    Ok((grad.slice_channels(0, c_a)?, grad.slice_channels(c_a, c - c_a)?))
}

/// A strided read-only matrix view.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a, T> {
    pub data: &'a [T],
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T> MatRef<'a, T> {
    /// Contiguous row-major matrix with `cols` columns.
    pub fn rows(data: &'a [T], cols: usize) -> Self {
        MatRef { data, rs: cols, cs: 1 }
    }

    /// Transpose of a contiguous row-major matrix that has `cols` columns.
    pub fn transposed(data: &'a [T], cols: usize) -> Self {
        MatRef { data, rs: 1, cs: cols }
    }

    pub fn strided(data: &'a [T], rs: usize, cs: usize) -> Self {
        MatRef { data, rs, cs }
    }

    fn fits(&self, rows: usize, cols: usize) -> bool {
        rows == 0 || cols == 0 || (rows - 1) * self.rs + (cols - 1) * self.cs < self.data.len()
    }
}

/// `c (m×n, row stride ldc) = alpha * a (m×k) * b (k×n) + beta * c`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Float>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: MatRef<'_, T>,
    b: MatRef<'_, T>,
    beta: T,
    c: &mut [T],
    ldc: usize,
) {
    assert!(a.fits(m, k), "gemm: lhs out of bounds");
    assert!(b.fits(k, n), "gemm: rhs out of bounds");
    assert!(m == 0 || n == 0 || c.len() >= (m - 1) * ldc + n, "gemm: output out of bounds");
    // SAFETY: every accessed element was bounds-checked above and `c` is a
    // unique borrow, so it cannot alias `a` or `b`.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}
