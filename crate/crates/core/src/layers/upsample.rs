//! Fixed bilinear upsampling to an explicit target size.
//!
//! Sampling is align-corners: output pixel `i` of `n_out` reads source
//! coordinate `i · (n_in − 1) / (n_out − 1)`, so corner pixels are copied
//! exactly. The interpolation weights are computed once per (input, output)
//! size pair and are never trained.

use crate::error::{Error, Result};
use crate::tensor::{Float, Shape, Tensor};

/// `a + (b − a)·f`, exact when `a == b`.
fn lerp(a: f64, b: f64, f: f64) -> f64 {
    a + (b - a) * f
}

/// Interpolation taps along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisWeights {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
    /// Weight of `hi`; `lo` gets `1 − frac`.
    pub frac: Vec<f64>,
}

impl AxisWeights {
    pub fn new(n_in: usize, n_out: usize) -> Self {
        let mut lo = Vec::with_capacity(n_out);
        let mut hi = Vec::with_capacity(n_out);
        let mut frac = Vec::with_capacity(n_out);
        for i in 0..n_out {
            let src = if n_out > 1 {
                (i * (n_in - 1)) as f64 / (n_out - 1) as f64
            } else {
                0.0
            };
            let l = (src.floor() as usize).min(n_in - 1);
            lo.push(l);
            hi.push((l + 1).min(n_in - 1));
            frac.push(src - l as f64);
        }
        AxisWeights { lo, hi, frac }
    }
}

/// The separable interpolation kernel mapping `(h_in, w_in)` to `(h_out, w_out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearKernel {
    pub input_hw: (usize, usize),
    pub output_hw: (usize, usize),
    pub rows: AxisWeights,
    pub cols: AxisWeights,
}

impl BilinearKernel {
    pub fn new(input_hw: (usize, usize), output_hw: (usize, usize)) -> Result<Self> {
        if output_hw.0 < input_hw.0 || output_hw.1 < input_hw.1 {
            return Err(Error::invalid(
                "bilinear_upsample",
                format!("target {output_hw:?} is smaller than input {input_hw:?}"),
            ));
        }
        Ok(BilinearKernel {
            input_hw,
            output_hw,
            rows: AxisWeights::new(input_hw.0, output_hw.0),
            cols: AxisWeights::new(input_hw.1, output_hw.1),
        })
    }

    pub fn is_identity(&self) -> bool {
        self.input_hw == self.output_hw
    }

    /// FNV-1a over every tap, used to assert the kernel never changes.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for axis in [&self.rows, &self.cols] {
            axis.lo.iter().for_each(|&v| feed(v as u64));
            axis.hi.iter().for_each(|&v| feed(v as u64));
            axis.frac.iter().for_each(|v| feed(v.to_bits()));
        }
        h
    }

    pub fn apply<T: Float>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = x.shape();
        if (s.h, s.w) != self.input_hw {
            return Err(Error::invalid(
                "bilinear_upsample",
                format!("kernel built for {:?}, input is {}", self.input_hw, s),
            ));
        }
        if self.is_identity() {
            return Ok(x.clone());
        }
        let (ho, wo) = self.output_hw;
        let os = s.with_spatial(ho, wo);
        let mut out = vec![T::zero(); os.len()];
        let mut row_buf = vec![0.0f64; wo];
        for (p, dst) in out.chunks_mut(ho * wo).enumerate() {
            let src = &x.data()[p * s.plane()..(p + 1) * s.plane()];
            let sample_row = |r: usize, buf: &mut [f64]| {
                let line = &src[r * s.w..(r + 1) * s.w];
                for (j, b) in buf.iter_mut().enumerate() {
                    let (l, h, f) = (self.cols.lo[j], self.cols.hi[j], self.cols.frac[j]);
                    *b = lerp(line[l].as_f64(), line[h].as_f64(), f);
                }
            };
            let mut lo_buf = vec![0.0f64; wo];
            for i in 0..ho {
                let (l, h, f) = (self.rows.lo[i], self.rows.hi[i], self.rows.frac[i]);
                sample_row(l, &mut lo_buf);
                sample_row(h, &mut row_buf);
                for (j, o) in dst[i * wo..(i + 1) * wo].iter_mut().enumerate() {
                    *o = T::from_f64(lerp(lo_buf[j], row_buf[j], f));
                }
            }
        }
        Ok(Tensor::from_parts(os, out))
    }

    /// Adjoint of [`BilinearKernel::apply`].
    pub fn backward<T: Float>(&self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let s = grad_out.shape();
        if (s.h, s.w) != self.output_hw {
            return Err(Error::invalid(
                "bilinear_backward",
                format!("kernel built for output {:?}, gradient is {}", self.output_hw, s),
            ));
        }
        if self.is_identity() {
            return Ok(grad_out.clone());
        }
        let (hi, wi) = self.input_hw;
        let is = s.with_spatial(hi, wi);
        let mut gx = vec![0.0f64; is.len()];
        let mut row_acc = vec![0.0f64; s.w];
        for (p, dst) in gx.chunks_mut(hi * wi).enumerate() {
            let g = &grad_out.data()[p * s.plane()..(p + 1) * s.plane()];
            for i in 0..s.h {
                let (rl, rh, rf) = (self.rows.lo[i], self.rows.hi[i], self.rows.frac[i]);
                for (j, acc) in row_acc.iter_mut().enumerate() {
                    *acc = g[i * s.w + j].as_f64();
                }
                for (j, &v) in row_acc.iter().enumerate() {
                    let (cl, ch, cf) = (self.cols.lo[j], self.cols.hi[j], self.cols.frac[j]);
                    dst[rl * wi + cl] += v * (1.0 - rf) * (1.0 - cf);
                    dst[rl * wi + ch] += v * (1.0 - rf) * cf;
                    dst[rh * wi + cl] += v * rf * (1.0 - cf);
                    dst[rh * wi + ch] += v * rf * cf;
                }
            }
        }
        Ok(Tensor::from_parts(is, gx.into_iter().map(T::from_f64).collect()))
    }
}

pub fn bilinear_upsample<T: Float>(x: &Tensor<T>, target_hw: (usize, usize)) -> Result<Tensor<T>> {
    let s = x.shape();
    BilinearKernel::new((s.h, s.w), target_hw)?.apply(x)
}

pub fn bilinear_backward<T: Float>(grad_out: &Tensor<T>, input_hw: (usize, usize)) -> Result<Tensor<T>> {
    let s = grad_out.shape();
    BilinearKernel::new(input_hw, (s.h, s.w))?.backward(grad_out)
}

/// Upsampling layer; rebuilds its kernel only when the size pair changes.
#[derive(Debug, Clone, Default)]
pub struct Upsample {
    kernel: Option<BilinearKernel>,
}

impl Upsample {
    pub fn new() -> Self {
        Upsample { kernel: None }
    }

    pub fn kernel(&self) -> Option<&BilinearKernel> {
        self.kernel.as_ref()
    }

    fn kernel_for(&mut self, input: Shape, target_hw: (usize, usize)) -> Result<&BilinearKernel> {
        let wanted = ((input.h, input.w), target_hw);
        if self
            .kernel
            .as_ref()
            .map_or(true, |k| (k.input_hw, k.output_hw) != wanted)
        {
            self.kernel = Some(BilinearKernel::new(wanted.0, wanted.1)?);
        }
        Ok(self.kernel.as_ref().unwrap())
    }

    pub fn forward<T: Float>(&mut self, x: &Tensor<T>, target_hw: (usize, usize)) -> Result<Tensor<T>> {
        self.kernel_for(x.shape(), target_hw)?.apply(x)
    }

    pub fn backward<T: Float>(&self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        self.kernel
            .as_ref()
            .ok_or_else(|| Error::invalid("bilinear_backward", "no forward pass recorded"))?
            .backward(grad_out)
    }
}
