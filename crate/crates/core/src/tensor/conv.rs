//! Convolution and transposed convolution via im2col + GEMM.
//!
//! Weights of a convolution are stored `(out_c, in_c, k, k)`. Weights of a
//! transposed convolution are stored `(in_c, out_c, k, k)`, i.e. exactly the
//! weight of the convolution whose input-gradient it computes.

use std::ops::Range;

use super::gemm::{gemm, Layout};
use super::{Scalar, Shape, Tensor4};
use crate::error::{Error, Result};

/// Upper bound on im2col buffer elements; larger images are processed in
/// bands of output rows.
const MAX_COL_ELEMS: usize = 1 << 22;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T> {
    pub weight: Tensor4<T>,
    pub bias: Vec<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(weight: Tensor4<T>, bias: Vec<T>, stride: usize, padding: usize) -> Result<Self> {
        let s = weight.shape();
        if s.h != s.w {
            return Err(Error::shape(format!("kernel must be square, got {}x{}", s.h, s.w)));
        }
        if stride == 0 {
            return Err(Error::shape("stride must be positive"));
        }
        let p = ConvParams { weight, bias, stride, padding };
        if p.bias.len() != s.n && p.bias.len() != s.c {
            return Err(Error::shape(format!(
                "bias has {} entries, kernel {} has neither leading axis of that size",
                p.bias.len(),
                s
            )));
        }
        Ok(p)
    }

    /// Zero weights for a convolution `in_c -> out_c`.
    pub fn zeros_conv(in_c: usize, out_c: usize, k: usize, stride: usize, padding: usize) -> Self {
        ConvParams {
            weight: Tensor4::zeros(Shape::new(out_c, in_c, k, k)),
            bias: vec![T::zero(); out_c],
            stride,
            padding,
        }
    }

    /// Zero weights for a transposed convolution `in_c -> out_c`.
    pub fn zeros_deconv(in_c: usize, out_c: usize, k: usize, stride: usize, padding: usize) -> Self {
        ConvParams {
            weight: Tensor4::zeros(Shape::new(in_c, out_c, k, k)),
            bias: vec![T::zero(); out_c],
            stride,
            padding,
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape().h
    }

    pub fn param_count(&self) -> usize {
        self.weight.shape().len() + self.bias.len()
    }
}

/// Gradients with the layout of a [`ConvParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T> {
    pub weight: Tensor4<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvGrads<T> {
    pub fn zeros_like(p: &ConvParams<T>) -> Self {
        ConvGrads { weight: Tensor4::zeros(p.weight.shape()), bias: vec![T::zero(); p.bias.len()] }
    }

    pub fn add_assign(&mut self, other: &ConvGrads<T>) {
        for (a, &b) in self.weight.data_mut().iter_mut().zip(other.weight.data()) {
            *a += b;
        }
        for (a, &b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }
}

/// Spatial output size of a convolution.
pub fn conv_output_dim(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    (stride > 0 && input > 0 && padded >= k).then(|| (padded - k) / stride + 1)
}

/// Spatial output size of a transposed convolution.
pub fn deconv_output_dim(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let full = (input.checked_sub(1)?) * stride + k;
    full.checked_sub(2 * pad).filter(|&d| d > 0)
}

/// Geometry of a convolution from an image `(c, h, w)` to a `(oh, ow)` grid.
#[derive(Clone, Copy, Debug)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geom {
    fn col_rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn bands(&self) -> impl Iterator<Item = Range<usize>> {
        let per_row = (self.col_rows() * self.ow).max(1);
        let band = (MAX_COL_ELEMS / per_row).clamp(1, self.oh.max(1));
        let oh = self.oh;
        (0..oh).step_by(band).map(move |r0| r0..(r0 + band).min(oh))
    }
}

/// Unfolds output rows `rows` of `img` into `cols` (`c*k*k` by `rows.len()*ow`).
fn im2col<T: Scalar>(img: &[T], g: &Geom, rows: Range<usize>, cols: &mut [T]) {
    let ncols = rows.len() * g.ow;
    let mut r = 0;
    for ci in 0..g.c {
        let plane = &img[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let dst = &mut cols[r * ncols..(r + 1) * ncols];
                for (band_row, oy) in rows.clone().enumerate() {
                    let out = &mut dst[band_row * g.ow..(band_row + 1) * g.ow];
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, o) in out.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *o = if ix >= 0 && ix < g.w as isize { src[ix as usize] } else { T::zero() };
                    }
                }
                r += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `cols` back onto `img`, accumulating.
fn col2im_add<T: Scalar>(cols: &[T], g: &Geom, rows: Range<usize>, img: &mut [T]) {
    let ncols = rows.len() * g.ow;
    let mut r = 0;
    for ci in 0..g.c {
        let plane = &mut img[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let src = &cols[r * ncols..(r + 1) * ncols];
                for (band_row, oy) in rows.clone().enumerate() {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let row = &src[band_row * g.ow..(band_row + 1) * g.ow];
                    for (ox, &v) in row.iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
                r += 1;
            }
        }
    }
}

fn add_bias<T: Scalar>(out: &mut Tensor4<T>, bias: &[T]) {
    let s = out.shape();
    let plane = s.plane();
    for n in 0..s.n {
        let sample = out.sample_mut(n);
        for (c, &b) in bias.iter().enumerate() {
            for v in &mut sample[c * plane..(c + 1) * plane] {
                *v += b;
            }
        }
    }
}

fn bias_grad<T: Scalar>(grad_out: &Tensor4<T>) -> Vec<T> {
    let s = grad_out.shape();
    let plane = s.plane();
    let mut g = vec![T::zero(); s.c];
    for n in 0..s.n {
        let sample = grad_out.sample(n);
        for (c, acc) in g.iter_mut().enumerate() {
            for &v in &sample[c * plane..(c + 1) * plane] {
                *acc += v;
            }
        }
    }
    g
}

fn conv_geom<T: Scalar>(input: Shape, params: &ConvParams<T>) -> Result<Geom> {
    let ws = params.weight.shape();
    if input.c != ws.c {
        return Err(Error::shape(format!(
            "conv2d: channel axis of input is {}, kernel expects {}",
            input.c, ws.c
        )));
    }
    if params.bias.len() != ws.n {
        return Err(Error::shape(format!(
            "conv2d: bias has {} entries for {} output channels",
            params.bias.len(),
            ws.n
        )));
    }
    let k = ws.h;
    let dim = |v: usize, axis: &str| {
        conv_output_dim(v, k, params.stride, params.padding).ok_or_else(|| {
            Error::shape(format!(
                "conv2d: {axis} axis of size {v} is too small for a {k}x{k} kernel with padding {}",
                params.padding
            ))
        })
    };
    Ok(Geom {
        c: input.c,
        h: input.h,
        w: input.w,
        k,
        stride: params.stride,
        pad: params.padding,
        oh: dim(input.h, "height")?,
        ow: dim(input.w, "width")?,
    })
}

pub fn conv2d_forward<T: Scalar>(input: &Tensor4<T>, params: &ConvParams<T>) -> Result<Tensor4<T>> {
    let s = input.shape();
    let g = conv_geom(s, params)?;
    let oc = params.weight.shape().n;
    let mut out = Tensor4::zeros(Shape::new(s.n, oc, g.oh, g.ow));
    let wl = Layout::row_major(oc, g.col_rows());
    let mut cols = Vec::new();
    for n in 0..s.n {
        let x = input.sample(n);
        let y = out.sample_mut(n);
        for rows in g.bands() {
            let ncols = rows.len() * g.ow;
            cols.resize(g.col_rows() * ncols, T::zero());
            im2col(x, &g, rows.clone(), &mut cols);
            let cl = Layout { rows: oc, cols: ncols, rs: g.oh * g.ow, cs: 1 };
            gemm(
                params.weight.data(),
                wl,
                &cols,
                Layout::row_major(g.col_rows(), ncols),
                T::zero(),
                &mut y[rows.start * g.ow..],
                cl,
            );
        }
    }
    add_bias(&mut out, &params.bias);
    Ok(out)
}

/// Returns `(dL/dinput, dL/dparams)`.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor4<T>,
    params: &ConvParams<T>,
    grad_out: &Tensor4<T>,
) -> Result<(Tensor4<T>, ConvGrads<T>)> {
    let (gi, gp) = conv2d_backward_opt(input, params, grad_out, true)?;
    Ok((gi.expect("input gradient requested"), gp))
}

pub(crate) fn conv2d_backward_opt<T: Scalar>(
    input: &Tensor4<T>,
    params: &ConvParams<T>,
    grad_out: &Tensor4<T>,
    need_input: bool,
) -> Result<(Option<Tensor4<T>>, ConvGrads<T>)> {
    let s = input.shape();
    let g = conv_geom(s, params)?;
    let oc = params.weight.shape().n;
    Shape::new(s.n, oc, g.oh, g.ow).check_eq(&grad_out.shape(), "conv2d backward grad_out")?;

    let mut grads = ConvGrads::zeros_like(params);
    let mut grad_in = need_input.then(|| Tensor4::zeros(s));
    let ckk = g.col_rows();
    let mut cols = Vec::new();
    let mut gcols = Vec::new();
    for n in 0..s.n {
        let x = input.sample(n);
        let gy = grad_out.sample(n);
        for rows in g.bands() {
            let ncols = rows.len() * g.ow;
            let gl = Layout { rows: oc, cols: ncols, rs: g.oh * g.ow, cs: 1 };
            let gy_band = &gy[rows.start * g.ow..];

            cols.resize(ckk * ncols, T::zero());
            im2col(x, &g, rows.clone(), &mut cols);
            // dW += dY * cols^T
            gemm(
                gy_band,
                gl,
                &cols,
                Layout::row_major(ckk, ncols).transposed(),
                T::one(),
                grads.weight.data_mut(),
                Layout::row_major(oc, ckk),
            );

            if let Some(gi) = grad_in.as_mut() {
                // dcols = W^T * dY
                gcols.resize(ckk * ncols, T::zero());
                gemm(
                    params.weight.data(),
                    Layout::row_major(oc, ckk).transposed(),
                    gy_band,
                    gl,
                    T::zero(),
                    &mut gcols,
                    Layout::row_major(ckk, ncols),
                );
                col2im_add(&gcols, &g, rows, gi.sample_mut(n));
            }
        }
    }
    grads.bias = bias_grad(grad_out);
    Ok((grad_in, grads))
}

/// Geometry of the convolution whose adjoint a transposed convolution is:
/// it maps the transposed convolution's output back onto its input grid.
fn deconv_geom<T: Scalar>(input: Shape, params: &ConvParams<T>) -> Result<Geom> {
    let ws = params.weight.shape();
    if input.c != ws.n {
        return Err(Error::shape(format!(
            "deconv2d: channel axis of input is {}, kernel expects {}",
            input.c, ws.n
        )));
    }
    if params.bias.len() != ws.c {
        return Err(Error::shape(format!(
            "deconv2d: bias has {} entries for {} output channels",
            params.bias.len(),
            ws.c
        )));
    }
    let k = ws.h;
    let dim = |v: usize, axis: &str| {
        deconv_output_dim(v, k, params.stride, params.padding).ok_or_else(|| {
            Error::shape(format!(
                "deconv2d: {axis} axis of size {v} gives an empty output for kernel {k}, padding {}",
                params.padding
            ))
        })
    };
    let h = dim(input.h, "height")?;
    let w = dim(input.w, "width")?;
    Ok(Geom { c: ws.c, h, w, k, stride: params.stride, pad: params.padding, oh: input.h, ow: input.w })
}

pub fn deconv2d_forward<T: Scalar>(input: &Tensor4<T>, params: &ConvParams<T>) -> Result<Tensor4<T>> {
    let s = input.shape();
    let g = deconv_geom(s, params)?;
    let ckk = g.col_rows();
    let mut out = Tensor4::zeros(Shape::new(s.n, g.c, g.h, g.w));
    let wl = Layout::row_major(s.c, ckk).transposed();
    let mut cols = Vec::new();
    for n in 0..s.n {
        let x = input.sample(n);
        for rows in g.bands() {
            let ncols = rows.len() * g.ow;
            cols.resize(ckk * ncols, T::zero());
            let xl = Layout { rows: s.c, cols: ncols, rs: g.oh * g.ow, cs: 1 };
            gemm(
                params.weight.data(),
                wl,
                &x[rows.start * g.ow..],
                xl,
                T::zero(),
                &mut cols,
                Layout::row_major(ckk, ncols),
            );
            col2im_add(&cols, &g, rows, out.sample_mut(n));
        }
    }
    add_bias(&mut out, &params.bias);
    Ok(out)
}

pub fn deconv2d_backward<T: Scalar>(
    input: &Tensor4<T>,
    params: &ConvParams<T>,
    grad_out: &Tensor4<T>,
) -> Result<(Tensor4<T>, ConvGrads<T>)> {
    let s = input.shape();
    let g = deconv_geom(s, params)?;
    Shape::new(s.n, g.c, g.h, g.w).check_eq(&grad_out.shape(), "deconv2d backward grad_out")?;
    let ckk = g.col_rows();
    let mut grads = ConvGrads::zeros_like(params);
    let mut grad_in = Tensor4::zeros(s);
    let mut cols = Vec::new();
    for n in 0..s.n {
        let x = input.sample(n);
        let gy = grad_out.sample(n);
        for rows in g.bands() {
            let ncols = rows.len() * g.ow;
            cols.resize(ckk * ncols, T::zero());
            im2col(gy, &g, rows.clone(), &mut cols);
            let band = Layout { rows: s.c, cols: ncols, rs: g.oh * g.ow, cs: 1 };
            // dX = W * cols(dY)
            gemm(
                params.weight.data(),
                Layout::row_major(s.c, ckk),
                &cols,
                Layout::row_major(ckk, ncols),
                T::zero(),
                &mut grad_in.sample_mut(n)[rows.start * g.ow..],
                band,
            );
            // dW += X * cols(dY)^T
            gemm(
                &x[rows.start * g.ow..],
                band,
                &cols,
                Layout::row_major(ckk, ncols).transposed(),
                T::one(),
                grads.weight.data_mut(),
                Layout::row_major(s.c, ckk),
            );
        }
    }
    grads.bias = bias_grad(grad_out);
    Ok((grad_in, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor4<f64> {
        Tensor4::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0))
    }

    fn random_params(
        w: Shape,
        bias_len: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> ConvParams<f64> {
        let weight = random(w, rng);
        let bias = (0..bias_len).map(|_| rng.random_range(-1.0..1.0)).collect();
        ConvParams::new(weight, bias, stride, pad).unwrap()
    }

    /// Direct six-loop cross-correlation.
    fn conv_reference(x: &Tensor4<f64>, p: &ConvParams<f64>) -> Tensor4<f64> {
        let s = x.shape();
        let ws = p.weight.shape();
        let k = ws.h;
        let oh = (s.h + 2 * p.padding - k) / p.stride + 1;
        let ow = (s.w + 2 * p.padding - k) / p.stride + 1;
        Tensor4::from_fn(Shape::new(s.n, ws.n, oh, ow), |n, o, oy, ox| {
            let mut acc = p.bias[o];
            for i in 0..s.c {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * p.stride + ky) as isize - p.padding as isize;
                        let ix = (ox * p.stride + kx) as isize - p.padding as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < s.h && (ix as usize) < s.w {
                            acc += p.weight.get(o, i, ky, kx) * x.get(n, i, iy as usize, ix as usize);
                        }
                    }
                }
            }
            acc
        })
    }

    /// Scatter-add transposed convolution.
    fn deconv_reference(x: &Tensor4<f64>, p: &ConvParams<f64>) -> Tensor4<f64> {
        let s = x.shape();
        let ws = p.weight.shape();
        let k = ws.h;
        let oh = (s.h - 1) * p.stride + k - 2 * p.padding;
        let ow = (s.w - 1) * p.stride + k - 2 * p.padding;
        let mut out = Tensor4::zeros(Shape::new(s.n, ws.c, oh, ow));
        for n in 0..s.n {
            for i in 0..s.c {
                for y in 0..s.h {
                    for xx in 0..s.w {
                        for o in 0..ws.c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let oy = (y * p.stride + ky) as isize - p.padding as isize;
                                    let ox = (xx * p.stride + kx) as isize - p.padding as isize;
                                    if oy >= 0 && ox >= 0 && (oy as usize) < oh && (ox as usize) < ow {
                                        let idx = out.index(n, o, oy as usize, ox as usize);
                                        out.data_mut()[idx] += x.get(n, i, y, xx) * p.weight.get(i, o, ky, kx);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        for n in 0..s.n {
            for o in 0..ws.c {
                for y in 0..oh {
                    for xx in 0..ow {
                        let idx = out.index(n, o, y, xx);
                        out.data_mut()[idx] += p.bias[o];
                    }
                }
            }
        }
        out
    }

    fn max_abs_diff(a: &Tensor4<f64>, b: &Tensor4<f64>) -> f64 {
        assert_eq!(a.shape(), b.shape());
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn rel_err(analytic: f64, numeric: f64) -> f64 {
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = random_params(Shape::new(1, 1, 3, 3), 1, 1, 1, &mut rng);
        p.bias[0] = 0.25;
        let out = conv2d_forward(&Tensor4::zeros(Shape::new(1, 1, 3, 3)), &p).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn centered_delta_is_identity() {
        let mut w = Tensor4::zeros(Shape::new(1, 1, 3, 3));
        w.set(0, 0, 1, 1, 1.0);
        let p = ConvParams::new(w, vec![0.0], 1, 1).unwrap();
        let x = Tensor4::from_fn(Shape::new(1, 1, 3, 3), |_, _, y, x| (y * 3 + x) as f64 * 0.1);
        assert_eq!(conv2d_forward(&x, &p).unwrap(), x);
    }

    #[test]
    fn matches_loop_reference_stride2() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(Shape::new(1, 2, 5, 5), &mut rng);
        let p = random_params(Shape::new(3, 2, 3, 3), 3, 2, 1, &mut rng);
        let out = conv2d_forward(&x, &p).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 3, 3, 3));
        assert!(max_abs_diff(&out, &conv_reference(&x, &p)) <= 1e-12);
    }

    #[test]
    fn matches_loop_reference_in_bands() {
        // Large enough that the im2col buffer is split into several bands.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(Shape::new(1, 8, 100, 1400), &mut rng);
        let p = random_params(Shape::new(2, 8, 3, 3), 2, 1, 1, &mut rng);
        let g = conv_geom(x.shape(), &p).unwrap();
        assert!(g.bands().count() > 1);
        assert!(max_abs_diff(&conv2d_forward(&x, &p).unwrap(), &conv_reference(&x, &p)) <= 1e-12);
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let p = ConvParams::<f64>::zeros_conv(3, 4, 3, 1, 1);
        let err = conv2d_forward(&Tensor4::zeros(Shape::new(1, 2, 4, 4)), &p).unwrap_err();
        assert!(err.to_string().contains("channel axis"));
    }

    #[test]
    fn conv_backward_zero_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(Shape::new(2, 2, 4, 5), &mut rng);
        let p = random_params(Shape::new(3, 2, 3, 3), 3, 2, 1, &mut rng);
        let y = conv2d_forward(&x, &p).unwrap();
        let (gi, gp) = conv2d_backward(&x, &p, &Tensor4::zeros(y.shape())).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(gp.weight.data().iter().chain(&gp.bias).all(|&v| v == 0.0));
    }

    #[test]
    fn conv_bias_grad_counts_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(Shape::new(2, 2, 5, 6), &mut rng);
        let p = random_params(Shape::new(3, 2, 3, 3), 3, 2, 1, &mut rng);
        let y = conv2d_forward(&x, &p).unwrap();
        let (_, gp) = conv2d_backward(&x, &p, &Tensor4::filled(y.shape(), 1.0)).unwrap();
        let expected = (y.shape().h * y.shape().w * 2) as f64;
        assert!(gp.bias.iter().all(|&b| b == expected));
    }

    /// Finite-difference check of a layer against a random linear functional
    /// of its output.
    fn check_layer_gradients(
        forward: fn(&Tensor4<f64>, &ConvParams<f64>) -> Result<Tensor4<f64>>,
        backward: fn(&Tensor4<f64>, &ConvParams<f64>, &Tensor4<f64>) -> Result<(Tensor4<f64>, ConvGrads<f64>)>,
        x: Tensor4<f64>,
        p: ConvParams<f64>,
        rng: &mut ChaCha8Rng,
    ) {
        let y = forward(&x, &p).unwrap();
        let probe = random(y.shape(), rng);
        let loss = |x: &Tensor4<f64>, p: &ConvParams<f64>| -> f64 {
            forward(x, p).unwrap().data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
        };
        let (gi, gp) = backward(&x, &p, &probe).unwrap();
        let eps = 1e-5;
        for i in 0..x.data().len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += eps;
            let mut xm = x.clone();
            xm.data_mut()[i] -= eps;
            let fd = (loss(&xp, &p) - loss(&xm, &p)) / (2.0 * eps);
            assert!(rel_err(gi.data()[i], fd) < 1e-6, "input {i}: {} vs {fd}", gi.data()[i]);
        }
        for i in 0..p.weight.data().len() {
            let mut pp = p.clone();
            pp.weight.data_mut()[i] += eps;
            let mut pm = p.clone();
            pm.weight.data_mut()[i] -= eps;
            let fd = (loss(&x, &pp) - loss(&x, &pm)) / (2.0 * eps);
            assert!(rel_err(gp.weight.data()[i], fd) < 1e-6, "weight {i}");
        }
        for i in 0..p.bias.len() {
            let mut pp = p.clone();
            pp.bias[i] += eps;
            let mut pm = p.clone();
            pm.bias[i] -= eps;
            let fd = (loss(&x, &pp) - loss(&x, &pm)) / (2.0 * eps);
            assert!(rel_err(gp.bias[i], fd) < 1e-6, "bias {i}");
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for stride in [1, 2] {
            let x = random(Shape::new(1, 2, 7, 8), &mut rng);
            let p = random_params(Shape::new(2, 2, 3, 3), 2, stride, 1, &mut rng);
            check_layer_gradients(conv2d_forward, conv2d_backward, x, p, &mut rng);
        }
    }

    #[test]
    fn deconv_doubles_and_matches_scatter_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(Shape::new(1, 2, 3, 3), &mut rng);
        let p = random_params(Shape::new(2, 3, 4, 4), 3, 2, 1, &mut rng);
        let out = deconv2d_forward(&x, &p).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 3, 6, 6));
        assert!(max_abs_diff(&out, &deconv_reference(&x, &p)) <= 1e-12);
    }

    #[test]
    fn deconv_zero_input_gives_bias() {
        let mut p = ConvParams::<f64>::zeros_deconv(1, 2, 4, 2, 1);
        p.bias = vec![0.5, -1.0];
        let out = deconv2d_forward(&Tensor4::zeros(Shape::new(1, 1, 4, 4)), &p).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 2, 8, 8));
        assert!(out.sample(0)[..64].iter().all(|&v| v == 0.5));
        assert!(out.sample(0)[64..].iter().all(|&v| v == -1.0));
    }

    #[test]
    fn deconv_is_adjoint_of_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random(Shape::new(1, 3, 4, 5), &mut rng);
        let mut p = random_params(Shape::new(3, 2, 4, 4), 2, 2, 1, &mut rng);
        p.bias = vec![0.0; 2];
        let deconv = deconv2d_forward(&x, &p).unwrap();
        // The conv with the same buffer maps (2, 8, 10) -> (3, 4, 5).
        let conv_p = ConvParams::new(p.weight.clone(), vec![0.0; 3], 2, 1).unwrap();
        let probe_input = Tensor4::zeros(Shape::new(1, 2, 8, 10));
        let (grad_input, _) = conv2d_backward(&probe_input, &conv_p, &x).unwrap();
        assert!(max_abs_diff(&deconv, &grad_input) <= 1e-12);
    }

    #[test]
    fn deconv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(Shape::new(1, 2, 3, 4), &mut rng);
        let p = random_params(Shape::new(2, 2, 4, 4), 2, 2, 1, &mut rng);
        check_layer_gradients(deconv2d_forward, deconv2d_backward, x, p, &mut rng);
    }

    #[test]
    fn deconv_backward_zero_grad_and_bias_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random(Shape::new(2, 2, 3, 3), &mut rng);
        let p = random_params(Shape::new(2, 3, 4, 4), 3, 2, 1, &mut rng);
        let y = deconv2d_forward(&x, &p).unwrap();
        let (gi, gp) = deconv2d_backward(&x, &p, &Tensor4::zeros(y.shape())).unwrap();
        assert!(gi.data().iter().chain(gp.weight.data()).chain(&gp.bias).all(|&v| v == 0.0));

        let gy = random(y.shape(), &mut rng);
        let (_, gp) = deconv2d_backward(&x, &p, &gy).unwrap();
        for c in 0..3 {
            let mut sum = 0.0;
            for n in 0..2 {
                for yy in 0..6 {
                    for xx in 0..6 {
                        sum += gy.get(n, c, yy, xx);
                    }
                }
            }
            assert!((gp.bias[c] - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn stride2_output_is_ceil_half() {
        for h in 1..20 {
            assert_eq!(conv_output_dim(h, 3, 2, 1), Some(h.div_ceil(2)));
            assert_eq!(conv_output_dim(h, 3, 1, 1), Some(h));
            assert_eq!(deconv_output_dim(h, 4, 2, 1), Some(2 * h));
        }
    }
}
