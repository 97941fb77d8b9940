//! Central finite-difference checks for every differentiable layer and for
//! the end-to-end training loss, all in f64.
//!
//! Layer checks use the scalar `Σ r ⊙ y` with a fixed random `r`, so the
//! upstream gradient is `r`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::layers::{
    batchnorm_backward, batchnorm_forward, bilinear_backward, bilinear_upsample, conv2d_backward, conv2d_forward,
    dropout, maxpool2x2, maxpool_backward, relu, relu_backward, sigmoid, sigmoid_backward, BatchNorm2d, Mode,
};
use crate::loss::{balanced_bce, compute_beta, total_loss, LossConfig};
use crate::network::{NetworkConfig, NetworkGraph};
use crate::rng::{stream, Purpose};
use crate::tensor::{concat_channels, split_channels, Shape, Tensor};

pub const STEP: f64 = 1e-5;
pub const LAYER_TOLERANCE: f64 = 1e-4;
pub const LOSS_TOLERANCE: f64 = 1e-6;
pub const END_TO_END_TOLERANCE: f64 = 1e-3;
/// Denominator floor for layer checks.
pub const LAYER_FLOOR: f64 = 1e-6;
/// End-to-end step. Larger steps push some of the ~10^4 ReLU inputs of the
/// first stages across zero on almost every probe.
pub const END_TO_END_STEP: f64 = 1e-6;
/// Round-off allowance of one loss evaluation, in ulps of the loss value.
pub const NOISE_ULPS: f64 = 64.0;
/// Step reductions tried when a probe crosses a ReLU or max-pool kink.
pub const KINK_RETRIES: usize = 3;
pub const END_TO_END_ENTRIES: usize = 20;
/// Width divisor of the end-to-end network (full topology, fewer channels).
pub const END_TO_END_DIVISOR: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub entries: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Largest relative error over `indices` between `analytic` and central
/// differences of `eval` around `x`.
pub fn compare(analytic: &[f64], x: &[f64], indices: &[usize], floor: f64, mut eval: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for &j in indices {
        probe[j] = x[j] + STEP;
        let lp = eval(&probe);
        probe[j] = x[j] - STEP;
        let lm = eval(&probe);
        probe[j] = x[j];
        worst = worst.max(rel_err(analytic[j], (lp - lm) / (2.0 * STEP), floor));
    }
    worst
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn tensor(shape: impl Into<Shape>, v: &[f64]) -> Tensor<f64> {
    Tensor::from_f64_values(shape, v).expect("valid gradcheck shape")
}

fn dot(a: &Tensor<f64>, r: &[f64]) -> f64 {
    a.data().iter().zip(r).map(|(x, y)| x * y).sum()
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

struct Suite {
    rng: ChaCha8Rng,
    out: Vec<CheckResult>,
}

impl Suite {
    fn push(&mut self, name: impl Into<String>, err: f64, tolerance: f64, entries: usize) {
        self.out.push(CheckResult {
            name: name.into(),
            max_rel_err: err,
            tolerance,
            entries,
        });
    }

    fn conv(&mut self, kernel: usize) -> Result<()> {
        let (xs, ws) = ((1, 2, 4, 4), (3, 2, kernel, kernel));
        let x = uniform(&mut self.rng, 32, -1.0, 1.0);
        let w = uniform(&mut self.rng, 6 * kernel * kernel, -1.0, 1.0);
        let b = uniform(&mut self.rng, 3, -1.0, 1.0);
        let r = uniform(&mut self.rng, 48, -1.0, 1.0);
        let (xt, wt) = (tensor(xs, &x), tensor(ws, &w));
        let g = conv2d_backward(&xt, &wt, &tensor((1, 3, 4, 4), &r))?;
        let f = |x: &[f64], w: &[f64], b: &[f64]| {
            dot(&conv2d_forward(&tensor(xs, x), &tensor(ws, w), &tensor((1, 3, 1, 1), b)).unwrap(), &r)
        };
        let name = format!("conv{kernel}x{kernel}");
        let e = compare(g.input.data(), &x, &all(x.len()), LAYER_FLOOR, |p| f(p, &w, &b));
        self.push(format!("{name}.input"), e, LAYER_TOLERANCE, x.len());
        let e = compare(g.weight.data(), &w, &all(w.len()), LAYER_FLOOR, |p| f(&x, p, &b));
        self.push(format!("{name}.weight"), e, LAYER_TOLERANCE, w.len());
        let e = compare(g.bias.data(), &b, &all(b.len()), LAYER_FLOOR, |p| f(&x, &w, p));
        self.push(format!("{name}.bias"), e, LAYER_TOLERANCE, b.len());
        Ok(())
    }

    fn batchnorm(&mut self) -> Result<()> {
        let s = (2, 2, 3, 3);
        let x = uniform(&mut self.rng, 36, -2.0, 2.0);
        let gamma = uniform(&mut self.rng, 2, 0.5, 1.5);
        let beta = uniform(&mut self.rng, 2, -0.5, 0.5);
        let r = uniform(&mut self.rng, 36, -1.0, 1.0);
        let layer = |gm: &[f64], bt: &[f64]| {
            let mut bn = BatchNorm2d::<f64>::new(2).unwrap();
            bn.gamma = tensor((1, 2, 1, 1), gm);
            bn.beta = tensor((1, 2, 1, 1), bt);
            bn
        };
        let bn = layer(&gamma, &beta);
        let (_, cache) = batchnorm_forward(&tensor(s, &x), &bn, Mode::Train)?;
        let (gx, gg, gb) = batchnorm_backward(&tensor(s, &r), &bn, &cache)?;
        let f = |x: &[f64], gm: &[f64], bt: &[f64]| {
            dot(&batchnorm_forward(&tensor(s, x), &layer(gm, bt), Mode::Train).unwrap().0, &r)
        };
        let e = compare(gx.data(), &x, &all(36), LAYER_FLOOR, |p| f(p, &gamma, &beta));
        self.push("batchnorm.input", e, LAYER_TOLERANCE, 36);
        let e = compare(&gg, &gamma, &all(2), LAYER_FLOOR, |p| f(&x, p, &beta));
        self.push("batchnorm.gamma", e, LAYER_TOLERANCE, 2);
        let e = compare(&gb, &beta, &all(2), LAYER_FLOOR, |p| f(&x, &gamma, p));
        self.push("batchnorm.beta", e, LAYER_TOLERANCE, 2);
        Ok(())
    }

    fn relu(&mut self) -> Result<()> {
        let s = (1, 2, 4, 4);
        // keep clear of the kink at 0
        let x: Vec<f64> = uniform(&mut self.rng, 32, 0.05, 1.0)
            .into_iter()
            .map(|v| if self.rng.random::<bool>() { v } else { -v })
            .collect();
        let r = uniform(&mut self.rng, 32, -1.0, 1.0);
        let g = relu_backward(&tensor(s, &x), &tensor(s, &r))?;
        let e = compare(g.data(), &x, &all(32), LAYER_FLOOR, |p| dot(&relu(&tensor(s, p)), &r));
        self.push("relu", e, LAYER_TOLERANCE, 32);
        Ok(())
    }

    fn sigmoid(&mut self) -> Result<()> {
        let s = (1, 2, 4, 4);
        let x = uniform(&mut self.rng, 32, -4.0, 4.0);
        let r = uniform(&mut self.rng, 32, -1.0, 1.0);
        let g = sigmoid_backward(&sigmoid(&tensor(s, &x)), &tensor(s, &r))?;
        let e = compare(g.data(), &x, &all(32), LAYER_FLOOR, |p| dot(&sigmoid(&tensor(s, p)), &r));
        self.push("sigmoid", e, LAYER_TOLERANCE, 32);
        Ok(())
    }

    fn maxpool(&mut self) -> Result<()> {
        // distinct values spaced far beyond the step, so no argmax flips
        let s = (1, 2, 5, 4);
        let mut x: Vec<f64> = (0..40).map(|i| i as f64 * 0.05).collect();
        x.shuffle(&mut self.rng);
        let r = uniform(&mut self.rng, 8, -1.0, 1.0);
        let (_, idx) = maxpool2x2(&tensor(s, &x))?;
        let g = maxpool_backward(&tensor((1, 2, 2, 2), &r), &idx)?;
        let e = compare(g.data(), &x, &all(40), LAYER_FLOOR, |p| {
            dot(&maxpool2x2(&tensor(s, p)).unwrap().0, &r)
        });
        self.push("maxpool2x2", e, LAYER_TOLERANCE, 40);
        Ok(())
    }

    fn upsample(&mut self) -> Result<()> {
        let s = (1, 2, 3, 4);
        let x = uniform(&mut self.rng, 24, -1.0, 1.0);
        let r = uniform(&mut self.rng, 2 * 7 * 9, -1.0, 1.0);
        let g = bilinear_backward(&tensor((1, 2, 7, 9), &r), (3, 4))?;
        let e = compare(g.data(), &x, &all(24), LAYER_FLOOR, |p| {
            dot(&bilinear_upsample(&tensor(s, p), (7, 9)).unwrap(), &r)
        });
        self.push("bilinear_upsample", e, LAYER_TOLERANCE, 24);
        Ok(())
    }

    fn dropout(&mut self) -> Result<()> {
        let s = (1, 2, 4, 4);
        let x = uniform(&mut self.rng, 32, -1.0, 1.0);
        let r = uniform(&mut self.rng, 32, -1.0, 1.0);
        let (_, mask) = dropout(&tensor(s, &x), 0.5, Mode::Train, 7, 1, 3)?;
        let mask = mask.expect("train-mode dropout has a mask");
        let g: Vec<f64> = r.iter().zip(&mask).map(|(a, m)| a * m).collect();
        let e = compare(&g, &x, &all(32), LAYER_FLOOR, |p| {
            dot(&dropout(&tensor(s, p), 0.5, Mode::Train, 7, 1, 3).unwrap().0, &r)
        });
        self.push("dropout", e, LAYER_TOLERANCE, 32);
        Ok(())
    }

    fn concat(&mut self) -> Result<()> {
        let a = uniform(&mut self.rng, 2 * 4, -1.0, 1.0);
        let b = uniform(&mut self.rng, 3 * 4, -1.0, 1.0);
        let r = uniform(&mut self.rng, 5 * 4, -1.0, 1.0);
        let (ga, gb) = split_channels(&tensor((1, 5, 2, 2), &r), 2)?;
        let f = |a: &[f64], b: &[f64]| dot(&concat_channels(&tensor((1, 2, 2, 2), a), &tensor((1, 3, 2, 2), b)).unwrap(), &r);
        let e = compare(ga.data(), &a, &all(8), LAYER_FLOOR, |p| f(p, &b))
            .max(compare(gb.data(), &b, &all(12), LAYER_FLOOR, |p| f(&a, p)));
        self.push("concat", e, LAYER_TOLERANCE, 20);
        Ok(())
    }

    fn loss(&mut self) -> Result<()> {
        let s = (1, 1, 4, 4);
        let p = uniform(&mut self.rng, 16, 0.05, 0.95);
        let gt: Vec<f64> = (0..16).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
        let target = compute_beta(&tensor(s, &gt))?;
        let g = balanced_bce(&tensor(s, &p), &target, 1e-12)?.grad;
        let e = compare(g.data(), &p, &all(16), LAYER_FLOOR, |q| {
            balanced_bce(&tensor(s, q), &target, 1e-12).unwrap().value
        });
        self.push("balanced_bce", e, LOSS_TOLERANCE, 16);
        Ok(())
    }

    /// Total training loss through the whole graph on a `(1, 3, 32, 32)`
    /// input, spot-checking entries of every registered parameter.
    ///
    /// An entry whose `±step` probes change any ReLU state or max-pool winner
    /// straddles a kink; its step shrinks tenfold up to `KINK_RETRIES` times,
    /// after which the entry is skipped and another drawn.
    fn end_to_end(&mut self, seed: u64, step: f64) -> Result<()> {
        let mut g = NetworkGraph::<f64>::new(NetworkConfig::narrow(END_TO_END_DIVISOR), seed)?;
        let x = tensor((1, 3, 32, 32), &uniform(&mut self.rng, 3 * 1024, 0.0, 1.0));
        let gt: Vec<f64> = (0..1024).map(|_| if self.rng.random::<f64>() < 0.2 { 1.0 } else { 0.0 }).collect();
        let target = compute_beta(&tensor((1, 1, 32, 32), &gt))?;
        let cfg = LossConfig::default();
        let eval = |g: &mut NetworkGraph<f64>| -> Result<_> {
            let out = g.forward(&x)?;
            total_loss(&out.pred, out.sides.as_deref().unwrap_or(&[]), &target, &cfg)
        };
        let l = eval(&mut g)?;
        let pattern = g.activation_pattern();
        g.zero_grad();
        g.backward(&l.grad_pred, &l.grad_sides)?;
        let grads: Vec<(String, Vec<f64>)> = g
            .params()
            .iter()
            .map(|p| (p.name.clone(), p.tensor.grad().map(<[f64]>::to_vec).unwrap_or_default()))
            .collect();
        let probe = |g: &mut NetworkGraph<f64>, pi: usize, j: usize, h: f64| -> Result<Option<f64>> {
            let orig = g.params()[pi].tensor.data()[j];
            g.params_mut()[pi].tensor.data_mut()[j] = orig + h;
            let lp = eval(g)?.total;
            let smooth = g.activation_pattern() == pattern;
            g.params_mut()[pi].tensor.data_mut()[j] = orig - h;
            let lm = eval(g)?.total;
            let smooth = smooth && g.activation_pattern() == pattern;
            g.params_mut()[pi].tensor.data_mut()[j] = orig;
            Ok(smooth.then(|| (lp - lm) / (2.0 * h)))
        };
        for (pi, (name, grad)) in grads.iter().enumerate() {
            let mut idx = all(grad.len());
            idx.shuffle(&mut self.rng);
            let want = END_TO_END_ENTRIES.min(idx.len());
            let (mut worst, mut done) = (0.0f64, 0);
            for &j in &idx {
                if done == want {
                    break;
                }
                // shrink the step until both probes stay on one smooth piece
                let mut h = step;
                for _ in 0..KINK_RETRIES {
                    if let Some(numeric) = probe(&mut g, pi, j, h)? {
                        // below this size a central difference is round-off;
                        // conv biases feeding batch norm have an exactly zero
                        // gradient and land here
                        let floor = NOISE_ULPS * f64::EPSILON * l.total.abs() / h / END_TO_END_TOLERANCE;
                        worst = worst.max(rel_err(grad[j], numeric, floor));
                        done += 1;
                        break;
                    }
                    h /= 10.0;
                }
            }
            // a parameter with no usable entry is a failure, not a pass
            if done == 0 {
                worst = f64::INFINITY;
            }
            self.push(format!("end_to_end.{name}"), worst, END_TO_END_TOLERANCE, done);
        }
        Ok(())
    }
}

/// Layer checks only.
pub fn layer_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut s = Suite {
        rng: stream(seed, Purpose::GradCheck, 0, 0),
        out: Vec::new(),
    };
    s.conv(3)?;
    s.conv(1)?;
    s.batchnorm()?;
    s.relu()?;
    s.sigmoid()?;
    s.maxpool()?;
    s.upsample()?;
    s.dropout()?;
    s.concat()?;
    s.loss()?;
    Ok(s.out)
}

/// End-to-end spot checks, one result per registered parameter.
pub fn end_to_end_suite(seed: u64) -> Result<Vec<CheckResult>> {
    end_to_end_suite_with(seed, END_TO_END_STEP)
}

pub fn end_to_end_suite_with(seed: u64, step: f64) -> Result<Vec<CheckResult>> {
    let mut s = Suite {
        rng: stream(seed, Purpose::GradCheck, 1, 0),
        out: Vec::new(),
    };
    s.end_to_end(seed, step)?;
    Ok(s.out)
}

pub fn full_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = layer_suite(seed)?;
    out.extend(end_to_end_suite(seed)?);
    Ok(out)
}
