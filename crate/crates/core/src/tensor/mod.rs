//! Dense NCHW tensors and the layer kernels the network needs.

mod activation;
mod conv;
mod gemm;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};

pub use activation::{relu, relu_backward, relu_backward_inplace, relu_inplace};
pub(crate) use conv::conv2d_backward_opt;
pub use conv::{
    conv2d_backward, conv2d_forward, conv_output_dim, deconv2d_backward, deconv2d_forward,
    deconv_output_dim, ConvGrads, ConvParams,
};

/// Floating point element type of tensors and networks.
pub trait Scalar:
    Float
    + FromPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    const NAME: &'static str;

    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` over strided row/column layouts.
    ///
    /// # Safety
    /// Every index reachable through the given dims and strides must lie in
    /// the corresponding slice.
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

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    fn lit(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    unsafe fn gemm_raw(
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
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    fn lit(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    unsafe fn gemm_raw(
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
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Dimensions of a batch of feature maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
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

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn check_eq(&self, other: &Shape, what: &str) -> Result<()> {
        for (axis, a, b) in [
            ("batch", self.n, other.n),
            ("channel", self.c, other.c),
            ("height", self.h, other.h),
            ("width", self.w, other.w),
        ] {
            if a != b {
                return Err(Error::shape(format!(
                    "{what}: {axis} axis is {b}, expected {a}"
                )));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// A 4-D array in row-major `(n, c, h, w)` order.
///
/// Gradients are not stored alongside the values: every backward kernel
/// returns fresh, same-shaped gradient tensors, which keeps the kernels pure.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(shape: Shape) -> Self {
        Tensor4 { shape, data: vec![T::zero(); shape.len()] }
    }

    pub fn filled(shape: Shape, value: T) -> Self {
        Tensor4 { shape, data: vec![value; shape.len()] }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(format!(
                "buffer holds {} values but shape {shape} needs {}",
                data.len(),
                shape.len()
            )));
        }
        Ok(Tensor4 { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Tensor4 { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
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

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.shape.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.shape.sample_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Copies batch item `n` out as a single-item tensor.
    pub fn take_sample(&self, n: usize) -> Tensor4<T> {
        Tensor4 {
            shape: Shape { n: 1, ..self.shape },
            data: self.sample(n).to_vec(),
        }
    }

    /// Stacks single-or-multi item tensors along the batch axis.
    pub fn stack(parts: &[Tensor4<T>]) -> Result<Tensor4<T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("cannot stack an empty list of tensors"))?
            .shape;
        let mut data = Vec::new();
        let mut n = 0;
        for p in parts {
            Shape { n: p.shape.n, ..first }.check_eq(&p.shape, "stack")?;
            data.extend_from_slice(&p.data);
            n += p.shape.n;
        }
        Ok(Tensor4 { shape: Shape { n, ..first }, data })
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(parts: &[&Tensor4<T>]) -> Result<Tensor4<T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("cannot concatenate an empty list of tensors"))?
            .shape;
        for p in parts {
            Shape { c: p.shape.c, ..first }.check_eq(&p.shape, "channel concat")?;
        }
        let c: usize = parts.iter().map(|p| p.shape.c).sum();
        let shape = Shape { c, ..first };
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..first.n {
            for p in parts {
                data.extend_from_slice(p.sample(n));
            }
        }
        Ok(Tensor4 { shape, data })
    }

    /// Splits along the channel axis into pieces of the given widths.
    pub fn split_channels(&self, widths: &[usize]) -> Result<Vec<Tensor4<T>>> {
        if widths.iter().sum::<usize>() != self.shape.c {
            return Err(Error::shape(format!(
                "channel split {widths:?} does not cover {} channels",
                self.shape.c
            )));
        }
        let plane = self.shape.plane();
        let mut out: Vec<Tensor4<T>> = widths
            .iter()
            .map(|&c| Tensor4::zeros(Shape { c, ..self.shape }))
            .collect();
        for n in 0..self.shape.n {
            let src = self.sample(n);
            let mut offset = 0;
            for (piece, &c) in out.iter_mut().zip(widths) {
                piece.sample_mut(n).copy_from_slice(&src[offset..offset + c * plane]);
                offset += c * plane;
            }
        }
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Tensor4<T>) -> Result<()> {
        self.shape.check_eq(&other.shape, "elementwise add")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor4<T> {
        Tensor4 { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64() * v.as_f64()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 { shape: self.shape, data: self.data.iter().map(|v| U::lit(v.as_f64())).collect() }
    }
}
