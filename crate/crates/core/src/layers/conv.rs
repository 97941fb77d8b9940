//! Same-padded, stride-1 2-D convolution via im2col + GEMM.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{gemm, Float, MatRef, Shape, Tensor};

/// Upper bound on im2col buffer elements; larger planes are processed in row
/// bands.
const COL_BUDGET: usize = 1 << 22;

/// Convolution parameters: weight `(c_out, c_in, k, k)` and bias `(1, c_out, 1, 1)`.
#[derive(Debug, Clone)]
pub struct Conv2d<T: Float> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    input: Option<Tensor<T>>,
}

pub struct ConvGrads<T: Float> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Float> Conv2d<T> {
    /// Zero-initialized convolution with an odd square kernel.
    pub fn new(c_in: usize, c_out: usize, kernel: usize) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::invalid("conv2d", format!("kernel size {kernel} is not odd")));
        }
        Ok(Conv2d {
            weight: Tensor::zeros((c_out, c_in, kernel, kernel))?,
            bias: Tensor::zeros((1, c_out, 1, 1))?,
            input: None,
        })
    }

    pub fn from_params(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        check_params(&weight, &bias)?;
        Ok(Conv2d {
            weight,
            bias,
            input: None,
        })
    }

    /// He fan-in initialization: `w ~ N(0, 2 / (c_in k²))`, zero bias.
    pub fn init_he(&mut self, rng: &mut impl Rng) {
        let s = self.weight.shape();
        let fan_in = (s.c * s.h * s.w) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        for w in self.weight.data_mut() {
            *w = T::from_f64(normal.sample(rng));
        }
        self.bias.data_mut().iter_mut().for_each(|b| *b = T::zero());
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape().c
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape().n
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape().h
    }

    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_forward(x, &self.weight, &self.bias)
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let y = self.apply(&x)?;
        self.input = Some(x);
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::invalid("conv2d_backward", "no cached forward input"))?;
        let grads = conv2d_backward(&x, &self.weight, grad_out)?;
        self.weight.accumulate_grad(grads.weight.data());
        self.bias.accumulate_grad(grads.bias.data());
        Ok(grads.input)
    }
}

fn check_params<T: Float>(weight: &Tensor<T>, bias: &Tensor<T>) -> Result<()> {
    let ws = weight.shape();
    if ws.h != ws.w || ws.h % 2 == 0 {
        return Err(Error::invalid(
            "conv2d",
            format!("kernel must be square and odd, got {}x{}", ws.h, ws.w),
        ));
    }
    if bias.len() != ws.n {
        return Err(Error::invalid(
            "conv2d",
            format!("bias has {} entries for {} output channels", bias.len(), ws.n),
        ));
    }
    Ok(())
}

struct Geometry {
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
    /// Rows of the unrolled patch matrix: `c_in * k * k`.
    patch: usize,
    band: usize,
}

impl Geometry {
    fn new(x: Shape, k: usize) -> Self {
        let patch = x.c * k * k;
        let band = (COL_BUDGET / (patch * x.w)).clamp(1, x.h);
        Geometry {
            c_in: x.c,
            h: x.h,
            w: x.w,
            k,
            pad: (k - 1) / 2,
            patch,
            band,
        }
    }

    /// Unrolls output rows `[y0, y0 + rows)` of one image into `col`
    /// (`patch × rows·w`, row-major).
    fn im2col<T: Float>(&self, img: &[T], y0: usize, rows: usize, col: &mut [T]) {
        let (h, w, k, pad) = (self.h, self.w, self.k, self.pad as isize);
        let cols = rows * w;
        for i in 0..self.c_in {
            let chan = &img[i * h * w..(i + 1) * h * w];
            for dy in 0..k {
                for dx in 0..k {
                    let r = (i * k + dy) * k + dx;
                    let dst = &mut col[r * cols..(r + 1) * cols];
                    let shift = dx as isize - pad;
                    let (lo, hi) = valid_range(w, shift);
                    for yy in 0..rows {
                        let row = &mut dst[yy * w..(yy + 1) * w];
                        let sy = (y0 + yy) as isize + dy as isize - pad;
                        if sy < 0 || sy >= h as isize || lo >= hi {
                            row.fill(T::zero());
                            continue;
                        }
                        let src = &chan[sy as usize * w..(sy as usize + 1) * w];
                        row[..lo].fill(T::zero());
                        row[hi..].fill(T::zero());
                        let s0 = (lo as isize + shift) as usize;
                        row[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                    }
                }
            }
        }
    }

    /// Adjoint of [`Geometry::im2col`]: scatters `col` back into `img`.
    fn col2im<T: Float>(&self, col: &[T], y0: usize, rows: usize, img: &mut [T]) {
        let (h, w, k, pad) = (self.h, self.w, self.k, self.pad as isize);
        let cols = rows * w;
        for i in 0..self.c_in {
            let chan = &mut img[i * h * w..(i + 1) * h * w];
            for dy in 0..k {
                for dx in 0..k {
                    let r = (i * k + dy) * k + dx;
                    let src = &col[r * cols..(r + 1) * cols];
                    let shift = dx as isize - pad;
                    let (lo, hi) = valid_range(w, shift);
                    if lo >= hi {
                        continue;
                    }
                    for yy in 0..rows {
                        let sy = (y0 + yy) as isize + dy as isize - pad;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let dst = &mut chan[sy as usize * w..(sy as usize + 1) * w];
                        let s0 = (lo as isize + shift) as usize;
                        for (d, &v) in dst[s0..s0 + (hi - lo)]
                            .iter_mut()
                            .zip(&src[yy * w + lo..yy * w + hi])
                        {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

/// Output columns `[lo, hi)` whose source column `x + shift` lies inside `[0, w)`.
fn valid_range(w: usize, shift: isize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (w as isize - shift).clamp(0, w as isize) as usize;
    (lo.min(w), hi)
}

/// `out[o] = bias[o] + Σ_{i,dy,dx} w[o,i,dy,dx] · x_padded[i, y+dy, x+dx]`.
pub fn conv2d_forward<T: Float>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    check_params(weight, bias)?;
    let xs = x.shape();
    let ws = weight.shape();
    if xs.c != ws.c {
        return Err(Error::ChannelMismatch {
            op: "conv2d",
            expected: ws.c,
            actual: xs.c,
        });
    }
    let (c_out, plane) = (ws.n, xs.plane());
    let out_shape = xs.with_channels(c_out);
    let mut out = vec![T::zero(); out_shape.len()];
    let geo = Geometry::new(xs, ws.h);
    let mut col = if ws.h > 1 {
        vec![T::zero(); geo.patch * geo.band * xs.w]
    } else {
        Vec::new()
    };
    let wmat = MatRef::rows(weight.data(), geo.patch);
    for n in 0..xs.n {
        let img = &x.data()[n * xs.c * plane..(n + 1) * xs.c * plane];
        let dst = &mut out[n * c_out * plane..(n + 1) * c_out * plane];
        for (o, b) in bias.data().iter().enumerate() {
            dst[o * plane..(o + 1) * plane].fill(*b);
        }
        if ws.h == 1 {
            gemm(c_out, xs.c, plane, T::one(), wmat, MatRef::rows(img, plane), T::one(), dst, plane);
            continue;
        }
        let mut y0 = 0;
        while y0 < xs.h {
            let rows = geo.band.min(xs.h - y0);
            let cols = rows * xs.w;
            geo.im2col(img, y0, rows, &mut col);
            gemm(
                c_out,
                geo.patch,
                cols,
                T::one(),
                wmat,
                MatRef::rows(&col[..geo.patch * cols], cols),
                T::one(),
                &mut dst[y0 * xs.w..],
                plane,
            );
            y0 += rows;
        }
    }
    Ok(Tensor::from_parts(out_shape, out))
}

pub fn conv2d_backward<T: Float>(x: &Tensor<T>, weight: &Tensor<T>, grad_out: &Tensor<T>) -> Result<ConvGrads<T>> {
    let xs = x.shape();
    let ws = weight.shape();
    let gs = grad_out.shape();
    if xs.c != ws.c || gs != xs.with_channels(ws.n) {
        return Err(Error::ShapeMismatch {
            op: "conv2d_backward",
            left: xs.with_channels(ws.n),
            right: gs,
        });
    }
    let (c_out, plane) = (ws.n, xs.plane());
    let geo = Geometry::new(xs, ws.h);

    let mut grad_b = vec![T::zero(); c_out];
    for n in 0..xs.n {
        for (o, gb) in grad_b.iter_mut().enumerate() {
            *gb += grad_out.plane(n, o).iter().copied().sum::<T>();
        }
    }

    let mut grad_w = vec![T::zero(); ws.len()];
    let mut grad_x = vec![T::zero(); xs.len()];
    let mut col = if ws.h > 1 {
        vec![T::zero(); geo.patch * geo.band * xs.w]
    } else {
        Vec::new()
    };
    let wt = MatRef::transposed(weight.data(), geo.patch);
    for n in 0..xs.n {
        let img = &x.data()[n * xs.c * plane..(n + 1) * xs.c * plane];
        let g = &grad_out.data()[n * c_out * plane..(n + 1) * c_out * plane];
        let gx = &mut grad_x[n * xs.c * plane..(n + 1) * xs.c * plane];
        if ws.h == 1 {
            gemm(c_out, plane, xs.c, T::one(), MatRef::rows(g, plane), MatRef::transposed(img, plane), T::one(), &mut grad_w, xs.c);
            gemm(xs.c, c_out, plane, T::one(), wt, MatRef::rows(g, plane), T::zero(), gx, plane);
            continue;
        }
        let mut y0 = 0;
        while y0 < xs.h {
            let rows = geo.band.min(xs.h - y0);
            let cols = rows * xs.w;
            let gband = MatRef::strided(&g[y0 * xs.w..], plane, 1);
            geo.im2col(img, y0, rows, &mut col);
            gemm(
                c_out,
                cols,
                geo.patch,
                T::one(),
                gband,
                MatRef::transposed(&col[..geo.patch * cols], cols),
                T::one(),
                &mut grad_w,
                geo.patch,
            );
            gemm(geo.patch, c_out, cols, T::one(), wt, gband, T::zero(), &mut col[..geo.patch * cols], cols);
            geo.col2im(&col[..geo.patch * cols], y0, rows, gx);
            y0 += rows;
        }
    }
    Ok(ConvGrads {
        input: Tensor::from_parts(xs, grad_x),
        weight: Tensor::from_parts(ws, grad_w),
        bias: Tensor::from_parts(Shape::new(1, c_out, 1, 1), grad_b),
    })
}
