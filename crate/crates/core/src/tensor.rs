//! Rank-4 NCHW tensors and the structural operations the block topology needs:
//! element-wise addition, channel concatenation and channel slicing.
//!
//! Tensors are generic over [`Scalar`]; production paths use `f32`, gradient
//! checks instantiate everything with `f64`.

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Floating point element type accepted by every kernel.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Default
    + Send
    + Sync
    + fmt::Debug
    + fmt::Display
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn from_usize_lossy(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("usize conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `(N, C, H, W)` extents.
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

    /// A length-`len` vector stored as `(len, 1, 1, 1)`.
    pub const fn vector(len: usize) -> Self {
        Shape::new(len, 1, 1, 1)
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    /// Elements per sample (`C·H·W`).
    pub const fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn with_channels(self, c: usize) -> Self {
        Shape { c, ..self }
    }

    pub fn with_batch(self, n: usize) -> Self {
        Shape { n, ..self }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.n, self.c, self.h, self.w)
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("len", &self.data.len())
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: Shape) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::invalid(
                "Tensor::from_vec",
                format!("{} values for shape {shape} ({} expected)", data.len(), shape.numel()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        data.push(f([n, c, h, w]));
                    }
                }
            }
        }
        Tensor { shape, data }
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

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    fn offset(&self, [n, c, h, w]: [usize; 4]) -> usize {
        ((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w
    }

    pub fn get(&self, idx: [usize; 4]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: [usize; 4], v: T) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// Contiguous `H·W` plane of sample `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn sample(&self, n: usize) -> &[T] {
        let s = self.shape.sample_len();
        &self.data[n * s..(n + 1) * s]
    }

    /// Same data, new shape of equal element count.
    pub fn reshape(self, shape: Shape) -> Result<Self> {
        if shape.numel() != self.shape.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape,
                right: shape,
            });
        }
        Ok(Tensor { shape, data: self.data })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// In-place `self += other`.
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

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "max_abs_diff",
                left: self.shape,
                right: other.shape,
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs().to_f64_lossy())
            .fold(0.0, f64::max))
    }

    /// Arithmetic mean of channel `c` across batch and spatial positions.
    pub fn channel_mean(&self, c: usize) -> f64 {
        let count = self.shape.n * self.shape.plane();
        if count == 0 {
            return 0.0;
        }
        let total: f64 = (0..self.shape.n)
            .flat_map(|n| self.plane(n, c).iter())
            .map(|v| v.to_f64_lossy())
            .sum();
        total / count as f64
    }
}

/// `out[i] = a[i] + b[i]`.
pub fn add_elementwise<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch {
            op: "add_elementwise",
            left: a.shape,
            right: b.shape,
        });
    }
    Ok(Tensor {
        shape: a.shape,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| x + y).collect(),
    })
}

/// Concatenate along channels: `a`'s channels first, then `b`'s.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape, b.shape);
    if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
        return Err(Error::ShapeMismatch {
            op: "concat_channels",
            left: sa,
            right: sb,
        });
    }
    let out_shape = sa.with_channels(sa.c + sb.c);
    let mut data = Vec::with_capacity(out_shape.numel());
    for n in 0..sa.n {
        data.extend_from_slice(a.sample(n));
        data.extend_from_slice(b.sample(n));
    }
    Ok(Tensor { shape: out_shape, data })
}

/// Channels `lo..hi` of `t`.
pub fn slice_channels<T: Scalar>(t: &Tensor<T>, lo: usize, hi: usize) -> Result<Tensor<T>> {
    let s = t.shape;
    if lo > hi || hi > s.c {
        return Err(Error::invalid(
            "slice_channels",
            format!("range {lo}..{hi} out of bounds for {} channels", s.c),
        ));
    }
    let plane = s.plane();
    let out_shape = s.with_channels(hi - lo);
    let mut data = Vec::with_capacity(out_shape.numel());
    for n in 0..s.n {
        let base = n * s.sample_len();
        data.extend_from_slice(&t.data[base + lo * plane..base + hi * plane]);
    }
    Ok(Tensor { shape: out_shape, data })
}
