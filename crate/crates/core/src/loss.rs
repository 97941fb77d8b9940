//! Class-balanced cross-entropy and the deeply supervised objective.
//!
//! For one image with ground truth `G`, `β = |negatives| / |pixels|` and
//!
//! ```text
//! Δ(P, G) = −β Σ_{k: G(k)=1} log P(k) − (1 − β) Σ_{k: G(k)=0} log(1 − P(k))
//! ```
//!
//! The side objective is `Σ_m α_m Δ(side_m, G)` over the five side outputs and
//! the total objective adds `Δ(pred, G)` for the final prediction. Losses are
//! sums over pixels, not means.

use crate::error::{Error, Result};
use crate::tensor::{Float, Shape, Tensor};

pub const SIDE_OUTPUTS: usize = 5;
pub const DEFAULT_CLAMP_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub alpha: [f64; SIDE_OUTPUTS],
    pub clamp_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: [1.0; SIDE_OUTPUTS],
            clamp_eps: DEFAULT_CLAMP_EPS,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Config(format!("side weights must be non-negative: {:?}", self.alpha)));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps <= 1e-3) {
            return Err(Error::Config(format!("clamp_eps {} outside (0, 1e-3]", self.clamp_eps)));
        }
        Ok(())
    }
}

/// Pixel counts and class weight of one ground-truth image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassBalance {
    pub beta: f64,
    pub positives: usize,
    pub negatives: usize,
    pub total: usize,
}

/// Binary ground truth `(n, 1, H, W)` with a per-image class balance.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedTarget {
    shape: Shape,
    labels: Vec<bool>,
    balance: Vec<ClassBalance>,
}

impl BalancedTarget {
    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    /// Class balance of batch item `n`.
    pub fn balance(&self, n: usize) -> ClassBalance {
        self.balance[n]
    }

    /// β of the first (for batch size 1, the only) image.
    pub fn beta(&self) -> f64 {
        self.balance[0].beta
    }
}

/// Computes β per image: the fraction of negative (non-contour) pixels.
pub fn compute_beta<T: Float>(gt: &Tensor<T>) -> Result<BalancedTarget> {
    let s = gt.shape();
    if s.c != 1 {
        return Err(Error::ChannelMismatch {
            op: "compute_beta",
            expected: 1,
            actual: s.c,
        });
    }
    let mut labels = Vec::with_capacity(gt.len());
    for (i, v) in gt.data().iter().enumerate() {
        let v = v.as_f64();
        if v == 1.0 {
            labels.push(true);
        } else if v == 0.0 {
            labels.push(false);
        } else {
            return Err(Error::NonBinary { index: i, value: v });
        }
    }
    let plane = s.plane();
    let balance = labels
        .chunks(plane)
        .map(|img| {
            let positives = img.iter().filter(|&&l| l).count();
            let negatives = plane - positives;
            ClassBalance {
                beta: negatives as f64 / plane as f64,
                positives,
                negatives,
                total: plane,
            }
        })
        .collect();
    Ok(BalancedTarget {
        shape: s,
        labels,
        balance,
    })
}

/// A scalar loss and its gradient with respect to the probability map.
#[derive(Debug, Clone)]
pub struct LossValue<T: Float> {
    pub value: f64,
    pub grad: Tensor<T>,
}

/// Class-balanced binary cross-entropy of a probability map.
///
/// Probabilities are clamped to `[eps, 1 − eps]` before the logarithm; the
/// gradient is zero where the clamp is active.
pub fn balanced_bce<T: Float>(pred: &Tensor<T>, target: &BalancedTarget, clamp_eps: f64) -> Result<LossValue<T>> {
    if pred.shape() != target.shape {
        return Err(Error::ShapeMismatch {
            op: "balanced_bce",
            left: pred.shape(),
            right: target.shape,
        });
    }
    let plane = target.shape.plane();
    let mut grad = vec![T::zero(); pred.len()];
    let mut value = 0.0;
    for (n, bal) in target.balance.iter().enumerate() {
        let range = n * plane..(n + 1) * plane;
        let (mut pos_sum, mut neg_sum) = (0.0, 0.0);
        for ((p, &label), g) in pred.data()[range.clone()]
            .iter()
            .zip(&target.labels[range.clone()])
            .zip(&mut grad[range])
        {
            let raw = p.as_f64();
            let q = raw.clamp(clamp_eps, 1.0 - clamp_eps);
            let inside = raw == q;
            if label {
                pos_sum += q.ln();
                if inside {
                    *g = T::from_f64(-bal.beta / q);
                }
            } else {
                neg_sum += (1.0 - q).ln();
                if inside {
                    *g = T::from_f64((1.0 - bal.beta) / (1.0 - q));
                }
            }
        }
        value += -bal.beta * pos_sum - (1.0 - bal.beta) * neg_sum;
    }
    Ok(LossValue {
        value,
        grad: Tensor::from_parts(pred.shape(), grad),
    })
}

/// Side losses, per side output already weighted by its `α_m`.
#[derive(Debug, Clone)]
pub struct SideLoss<T: Float> {
    pub value: f64,
    pub terms: Vec<f64>,
    pub grads: Vec<Tensor<T>>,
}

pub fn side_loss<T: Float>(sides: &[Tensor<T>], target: &BalancedTarget, cfg: &LossConfig) -> Result<SideLoss<T>> {
    if sides.len() != SIDE_OUTPUTS {
        return Err(Error::invalid(
            "side_loss",
            format!("expected {SIDE_OUTPUTS} side outputs, got {}", sides.len()),
        ));
    }
    let mut terms = Vec::with_capacity(SIDE_OUTPUTS);
    let mut grads = Vec::with_capacity(SIDE_OUTPUTS);
    for (side, &alpha) in sides.iter().zip(&cfg.alpha) {
        let l = balanced_bce(side, target, cfg.clamp_eps)?;
        terms.push(alpha * l.value);
        grads.push(l.grad.scale(T::from_f64(alpha)));
    }
    Ok(SideLoss {
        value: terms.iter().sum(),
        terms,
        grads,
    })
}

#[derive(Debug, Clone)]
pub struct TotalLoss<T: Float> {
    pub side: f64,
    pub pred: f64,
    /// Exactly `side + pred`.
    pub total: f64,
    pub grad_pred: Tensor<T>,
    pub grad_sides: Vec<Tensor<T>>,
}

pub fn total_loss<T: Float>(
    pred: &Tensor<T>,
    sides: &[Tensor<T>],
    target: &BalancedTarget,
    cfg: &LossConfig,
) -> Result<TotalLoss<T>> {
    let s = side_loss(sides, target, cfg)?;
    let p = balanced_bce(pred, target, cfg.clamp_eps)?;
    Ok(TotalLoss {
        side: s.value,
        pred: p.value,
        total: s.value + p.value,
        grad_pred: p.grad,
        grad_sides: s.grads,
    })
}
