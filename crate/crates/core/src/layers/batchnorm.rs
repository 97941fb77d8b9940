//! Per-channel batch normalization over (n, h, w).

use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::tensor::{Float, Shape, Tensor};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct BatchNorm2d<T: Float> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    /// Weight given to the new batch statistics in the running averages.
    pub momentum: f64,
    cache: Option<BatchNormCache<T>>,
}

/// Forward state needed by [`batchnorm_backward`].
#[derive(Debug, Clone)]
pub struct BatchNormCache<T: Float> {
    pub mode: Mode,
    /// Normalized input `x̂`.
    pub normalized: Tensor<T>,
    pub inv_std: Vec<f64>,
}

impl<T: Float> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Result<Self> {
        Self::with_hyper(channels, DEFAULT_EPS, DEFAULT_MOMENTUM)
    }

    pub fn with_hyper(channels: usize, eps: f64, momentum: f64) -> Result<Self> {
        if eps <= 0.0 || !(0.0..=1.0).contains(&momentum) {
            return Err(Error::invalid(
                "batchnorm",
                format!("eps must be positive and momentum in [0, 1] (eps {eps}, momentum {momentum})"),
            ));
        }
        let s = Shape::new(1, channels, 1, 1);
        Ok(BatchNorm2d {
            gamma: Tensor::ones(s)?,
            beta: Tensor::zeros(s)?,
            running_mean: Tensor::zeros(s)?,
            running_var: Tensor::ones(s)?,
            eps,
            momentum,
            cache: None,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Inference-mode application; touches no state.
    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, _) = batchnorm_forward(x, self, Mode::Infer)?;
        Ok(y)
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (y, cache) = batchnorm_forward(x, self, mode)?;
        if let (Mode::Train, Some(stats)) = (mode, batch_stats(x)) {
            let m = (x.shape().n * x.shape().plane()) as f64;
            let mom = self.momentum;
            for (c, (mean, var)) in stats.into_iter().enumerate() {
                let unbiased = if m > 1.0 { var * m / (m - 1.0) } else { var };
                let rm = &mut self.running_mean.data_mut()[c];
                *rm = T::from_f64((1.0 - mom) * rm.as_f64() + mom * mean);
                let rv = &mut self.running_var.data_mut()[c];
                *rv = T::from_f64((1.0 - mom) * rv.as_f64() + mom * unbiased);
            }
        }
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::invalid("batchnorm_backward", "no cached forward state"))?;
        let (gx, ggamma, gbeta) = batchnorm_backward(grad_out, self, &cache)?;
        self.gamma.accumulate_grad(&ggamma);
        self.beta.accumulate_grad(&gbeta);
        Ok(gx)
    }
}

/// Per-channel (mean, biased variance) over batch and spatial positions.
fn batch_stats<T: Float>(x: &Tensor<T>) -> Option<Vec<(f64, f64)>> {
    let s = x.shape();
    let m = (s.n * s.plane()) as f64;
    if m == 0.0 {
        return None;
    }
    Some(
        (0..s.c)
            .map(|c| {
                let mean = (0..s.n)
                    .flat_map(|n| x.plane(n, c))
                    .map(|v| v.as_f64())
                    .sum::<f64>()
                    / m;
                let var = (0..s.n)
                    .flat_map(|n| x.plane(n, c))
                    .map(|v| {
                        let d = v.as_f64() - mean;
                        d * d
                    })
                    .sum::<f64>()
                    / m;
                (mean, var)
            })
            .collect(),
    )
}

/// Train mode normalizes with batch statistics; infer mode with the running
/// statistics. Running statistics are not updated here.
pub fn batchnorm_forward<T: Float>(
    x: &Tensor<T>,
    p: &BatchNorm2d<T>,
    mode: Mode,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let s = x.shape();
    if s.c != p.channels() {
        return Err(Error::ChannelMismatch {
            op: "batchnorm",
            expected: p.channels(),
            actual: s.c,
        });
    }
    let (means, inv_std): (Vec<f64>, Vec<f64>) = match mode {
        Mode::Train => batch_stats(x)
            .ok_or_else(|| Error::invalid("batchnorm", "zero batch-spatial extent"))?
            .into_iter()
            .map(|(mean, var)| (mean, 1.0 / (var + p.eps).sqrt()))
            .unzip(),
        Mode::Infer => p
            .running_mean
            .data()
            .iter()
            .zip(p.running_var.data())
            .map(|(m, v)| (m.as_f64(), 1.0 / (v.as_f64() + p.eps).sqrt()))
            .unzip(),
    };
    let mut out = x.zeros_like();
    let mut normalized = x.zeros_like();
    for n in 0..s.n {
        for c in 0..s.c {
            let (g, b) = (p.gamma.data()[c].as_f64(), p.beta.data()[c].as_f64());
            let (mean, istd) = (means[c], inv_std[c]);
            let src = x.plane(n, c);
            let xhat: Vec<f64> = src.iter().map(|v| (v.as_f64() - mean) * istd).collect();
            for (o, xh) in out.plane_mut(n, c).iter_mut().zip(&xhat) {
                *o = T::from_f64(g * xh + b);
            }
            for (o, xh) in normalized.plane_mut(n, c).iter_mut().zip(&xhat) {
                *o = T::from_f64(*xh);
            }
        }
    }
    Ok((
        out,
        BatchNormCache {
            mode,
            normalized,
            inv_std,
        },
    ))
}

/// Returns `(grad_x, grad_gamma, grad_beta)`.
pub fn batchnorm_backward<T: Float>(
    grad_out: &Tensor<T>,
    p: &BatchNorm2d<T>,
    cache: &BatchNormCache<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let s = grad_out.shape();
    if s.c != p.channels() {
        return Err(Error::ChannelMismatch {
            op: "batchnorm_backward",
            expected: p.channels(),
            actual: s.c,
        });
    }
    let xhat = &cache.normalized;
    if xhat.shape() != s {
        return Err(Error::ShapeMismatch {
            op: "batchnorm_backward",
            left: xhat.shape(),
            right: s,
        });
    }
    let m = (s.n * s.plane()) as f64;
    let mut gx = grad_out.zeros_like();
    let mut ggamma = vec![T::zero(); s.c];
    let mut gbeta = vec![T::zero(); s.c];
    for c in 0..s.c {
        let g = p.gamma.data()[c].as_f64();
        let istd = cache.inv_std[c];
        let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
        for n in 0..s.n {
            for (dy, xh) in grad_out.plane(n, c).iter().zip(xhat.plane(n, c)) {
                sum_dy += dy.as_f64();
                sum_dy_xhat += dy.as_f64() * xh.as_f64();
            }
        }
        ggamma[c] = T::from_f64(sum_dy_xhat);
        gbeta[c] = T::from_f64(sum_dy);
        for n in 0..s.n {
            let dst = gx.plane_mut(n, c);
            let (dy, xh) = (grad_out.plane(n, c), xhat.plane(n, c));
            match cache.mode {
                // Batch statistics depend on x, hence the two centering terms.
                Mode::Train => {
                    let k = g * istd / m;
                    for ((o, dy), xh) in dst.iter_mut().zip(dy).zip(xh) {
                        *o = T::from_f64(k * (m * dy.as_f64() - sum_dy - xh.as_f64() * sum_dy_xhat));
                    }
                }
                Mode::Infer => {
                    for (o, dy) in dst.iter_mut().zip(dy) {
                        *o = T::from_f64(dy.as_f64() * g * istd);
                    }
                }
            }
        }
    }
    Ok((gx, ggamma, gbeta))
}
