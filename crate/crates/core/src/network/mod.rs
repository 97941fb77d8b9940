//! The assembled encoder/decoder graph with deep side supervision.
//!
//! Encoder stage `k` runs its conv/BN/ReLU blocks, hands the result to the
//! decoder as the stage-`k` skip, then max-pools. Decoder stage `k` upsamples
//! the feature from below to the skip's exact size, concatenates
//! `[decoder, skip]`, runs its blocks and a dropout. Side head `k` reads the
//! decoder stage-`k` output; the prediction head reads decoder stage 1.

mod checkpoint;
mod config;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_with, load_into, peek_precision, read_records, save_checkpoint,
    save_checkpoint_with, write_records, Record, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{
    ConvSpec, NetworkConfig, Section, DECODER_CONVS, ENCODER_CONVS, MIN_INPUT_SIDE, STAGES, VGG16_WIDTHS,
};

use crate::error::{Error, Result};
use crate::layers::{relu, sigmoid, BatchNorm2d, Conv2d, Dropout, MaxPool2x2, Mode, Relu, Sigmoid, Upsample};
use crate::rng::{stream, Purpose};
use crate::tensor::{concat_channels, split_channels, Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Gamma,
    Beta,
}

impl ParamKind {
    /// Whether weight decay applies by default.
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::Weight | ParamKind::Gamma)
    }
}

#[derive(Debug)]
pub struct Param<'a, T: Float> {
    pub name: String,
    pub kind: ParamKind,
    pub section: Section,
    pub tensor: &'a Tensor<T>,
}

#[derive(Debug)]
pub struct ParamMut<'a, T: Float> {
    pub name: String,
    pub kind: ParamKind,
    pub section: Section,
    pub tensor: &'a mut Tensor<T>,
}

/// 3×3 conv → BN → ReLU.
#[derive(Debug, Clone)]
pub struct ConvBlock<T: Float> {
    pub name: String,
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
    relu: Relu<T>,
}

impl<T: Float> ConvBlock<T> {
    fn new(spec: &ConvSpec, cfg: &NetworkConfig) -> Result<Self> {
        Ok(ConvBlock {
            name: spec.name.clone(),
            conv: Conv2d::new(spec.c_in, spec.c_out, spec.kernel)?,
            bn: BatchNorm2d::with_hyper(spec.c_out, cfg.bn_eps, cfg.bn_momentum)?,
            relu: Relu::new(),
        })
    }

    fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let y = self.conv.forward(x)?;
        let y = self.bn.forward(&y, mode)?;
        Ok(self.relu.forward(y))
    }

    fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(relu(&self.bn.apply(&self.conv.apply(x)?)?))
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.relu.backward(g)?;
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }
}

fn run_blocks<T: Float>(blocks: &mut [ConvBlock<T>], mut x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
    for b in blocks {
        x = b.forward(x, mode)?;
    }
    Ok(x)
}

fn apply_blocks<T: Float>(blocks: &[ConvBlock<T>], x: &Tensor<T>) -> Result<Tensor<T>> {
    let mut y = x.clone();
    for b in blocks {
        y = b.apply(&y)?;
    }
    Ok(y)
}

fn backward_blocks<T: Float>(blocks: &mut [ConvBlock<T>], g: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = g.clone();
    for b in blocks.iter_mut().rev() {
        g = b.backward(&g)?;
    }
    Ok(g)
}

#[derive(Debug, Clone)]
pub struct EncoderStage<T: Float> {
    pub blocks: Vec<ConvBlock<T>>,
    pool: MaxPool2x2,
}

/// Refined module: upsample, concat with the skip, conv blocks, dropout.
#[derive(Debug, Clone)]
pub struct DecoderStage<T: Float> {
    pub stage: usize,
    pub blocks: Vec<ConvBlock<T>>,
    pub upsample: Upsample,
    dropout: Dropout<T>,
    feat_channels: usize,
}

impl<T: Float> DecoderStage<T> {
    fn forward(&mut self, feat: &Tensor<T>, skip: &Tensor<T>, mode: Mode, iteration: u64) -> Result<Tensor<T>> {
        if feat.shape().n != skip.shape().n {
            return Err(Error::ShapeMismatch {
                op: "refined_module",
                left: feat.shape(),
                right: skip.shape(),
            });
        }
        let s = skip.shape();
        let up = self.upsample.forward(feat, (s.h, s.w))?;
        let y = run_blocks(&mut self.blocks, concat_channels(&up, skip)?, mode)?;
        self.dropout.forward(&y, mode, iteration)
    }

    fn apply(&self, feat: &Tensor<T>, skip: &Tensor<T>) -> Result<Tensor<T>> {
        let s = skip.shape();
        let up = crate::layers::bilinear_upsample(feat, (s.h, s.w))?;
        apply_blocks(&self.blocks, &concat_channels(&up, skip)?)
    }

    /// Returns (gradient w.r.t. the decoder feature, gradient w.r.t. the skip).
    fn backward(&mut self, g: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let g = self.dropout.backward(g)?;
        let g = backward_blocks(&mut self.blocks, &g)?;
        let (g_up, g_skip) = split_channels(&g, self.feat_channels)?;
        Ok((self.upsample.backward(&g_up)?, g_skip))
    }
}

/// 1×1 conv to one channel → bilinear resize to the input size → sigmoid.
#[derive(Debug, Clone)]
pub struct SideHead<T: Float> {
    pub name: String,
    pub conv: Conv2d<T>,
    pub upsample: Upsample,
    sigmoid: Sigmoid<T>,
}

impl<T: Float> SideHead<T> {
    fn new(spec: &ConvSpec) -> Result<Self> {
        Ok(SideHead {
            name: spec.name.clone(),
            conv: Conv2d::new(spec.c_in, spec.c_out, spec.kernel)?,
            upsample: Upsample::new(),
            sigmoid: Sigmoid::new(),
        })
    }

    pub fn forward(&mut self, feat: &Tensor<T>, input_hw: (usize, usize)) -> Result<Tensor<T>> {
        let y = self.conv.forward(feat.clone())?;
        let y = self.upsample.forward(&y, input_hw)?;
        Ok(self.sigmoid.forward(&y))
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.sigmoid.backward(g)?;
        let g = self.upsample.backward(&g)?;
        self.conv.backward(&g)
    }
}

#[derive(Debug, Clone)]
pub struct PredHead<T: Float> {
    pub conv: Conv2d<T>,
    sigmoid: Sigmoid<T>,
}

#[derive(Debug, Clone)]
pub struct Output<T: Float> {
    pub pred: Tensor<T>,
    /// Side maps `side1..side5`; present only in train mode.
    pub sides: Option<Vec<Tensor<T>>>,
}

#[derive(Debug, Clone)]
pub struct NetworkGraph<T: Float> {
    config: NetworkConfig,
    seed: u64,
    mode: Mode,
    iteration: u64,
    pub encoder: Vec<EncoderStage<T>>,
    /// Indexed by `stage - 1`.
    pub decoder: Vec<DecoderStage<T>>,
    pub sides: Vec<SideHead<T>>,
    pub pred: PredHead<T>,
}

struct Unit<'a, T: Float> {
    name: &'a str,
    section: Section,
    conv: &'a Conv2d<T>,
    bn: Option<&'a BatchNorm2d<T>>,
}

struct UnitMut<'a, T: Float> {
    name: &'a str,
    section: Section,
    conv: &'a mut Conv2d<T>,
    bn: Option<&'a mut BatchNorm2d<T>>,
}

/// Default-width graph for `input_channels`-channel images.
pub fn build_tdcedn<T: Float>(input_channels: usize, seed: u64) -> Result<NetworkGraph<T>> {
    NetworkGraph::new(
        NetworkConfig {
            input_channels,
            ..NetworkConfig::default()
        },
        seed,
    )
}

impl<T: Float> NetworkGraph<T> {
    /// Builds the graph and initializes every convolution (He fan-in) from
    /// its own seeded stream; BN starts at gamma = 1, beta = 0.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let encoder = config
            .encoder_specs()
            .iter()
            .map(|stage| {
                Ok(EncoderStage {
                    blocks: stage.iter().map(|s| ConvBlock::new(s, &config)).collect::<Result<_>>()?,
                    pool: MaxPool2x2::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let decoder = config
            .decoder_specs()
            .iter()
            .enumerate()
            .map(|(i, stage)| {
                Ok(DecoderStage {
                    stage: i + 1,
                    blocks: stage.iter().map(|s| ConvBlock::new(s, &config)).collect::<Result<_>>()?,
                    upsample: Upsample::new(),
                    dropout: Dropout::new(config.dropout_rate, seed, (i + 1) as u64)?,
                    feat_channels: config.decoder_feat_channels(i + 1),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let sides = config.side_specs().iter().map(SideHead::new).collect::<Result<Vec<_>>>()?;
        let p = config.pred_spec();
        let pred = PredHead {
            conv: Conv2d::new(p.c_in, p.c_out, p.kernel)?,
            sigmoid: Sigmoid::new(),
        };
        let mut g = NetworkGraph {
            config,
            seed,
            mode: Mode::Train,
            iteration: 0,
            encoder,
            decoder,
            sides,
            pred,
        };
        for (i, u) in g.units_mut().into_iter().enumerate() {
            u.conv.init_he(&mut stream(seed, Purpose::Init, i as u64, 0));
        }
        Ok(g)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Sets the counter that keys dropout masks.
    pub fn set_iteration(&mut self, iteration: u64) {
        self.iteration = iteration;
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = x.shape();
        if s.c != self.config.input_channels {
            return Err(Error::ChannelMismatch {
                op: "network_forward",
                expected: self.config.input_channels,
                actual: s.c,
            });
        }
        if s.h < MIN_INPUT_SIDE || s.w < MIN_INPUT_SIDE {
            return Err(Error::invalid(
                "network_forward",
                format!("input {}x{} is smaller than {MIN_INPUT_SIDE}x{MIN_INPUT_SIDE}", s.h, s.w),
            ));
        }
        Ok(())
    }

    /// Runs the graph in its current mode. Train mode caches state for
    /// [`NetworkGraph::backward`] and returns the side maps; infer mode is
    /// equivalent to [`NetworkGraph::infer`].
    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Output<T>> {
        if self.mode == Mode::Infer {
            return Ok(Output {
                pred: self.infer(x)?,
                sides: None,
            });
        }
        self.check_input(x)?;
        let mode = self.mode;
        let input_hw = (x.shape().h, x.shape().w);
        let mut skips = Vec::with_capacity(STAGES);
        let mut h = x.clone();
        for stage in &mut self.encoder {
            let skip = run_blocks(&mut stage.blocks, h, mode)?;
            h = stage.pool.forward(&skip)?;
            skips.push(skip);
        }
        let mut feats: Vec<Option<Tensor<T>>> = vec![None; STAGES];
        for k in (0..STAGES).rev() {
            let y = self.decoder[k].forward(&h, &skips[k], mode, self.iteration)?;
            feats[k] = Some(y.clone());
            h = y;
        }
        let sides = self
            .sides
            .iter_mut()
            .zip(&feats)
            .map(|(head, f)| head.forward(f.as_ref().expect("decoder output"), input_hw))
            .collect::<Result<Vec<_>>>()?;
        let logits = self.pred.conv.forward(h)?;
        let pred = self.pred.sigmoid.forward(&logits);
        Ok(Output {
            pred,
            sides: Some(sides),
        })
    }

    /// Inference pass: running BN statistics, no dropout, no side heads.
    /// Touches no state.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(STAGES);
        let mut h = x.clone();
        for stage in &self.encoder {
            let skip = apply_blocks(&stage.blocks, &h)?;
            h = crate::layers::maxpool2x2(&skip)?.0;
            skips.push(skip);
        }
        for k in (0..STAGES).rev() {
            h = self.decoder[k].apply(&h, &skips[k])?;
        }
        Ok(sigmoid(&self.pred.conv.apply(&h)?))
    }

    /// Backpropagates gradients of a scalar loss w.r.t. the prediction and the
    /// five side maps through the last train-mode forward pass. Parameter
    /// gradients accumulate; the input gradient is returned.
    pub fn backward(&mut self, grad_pred: &Tensor<T>, grad_sides: &[Tensor<T>]) -> Result<Tensor<T>> {
        if grad_sides.len() != STAGES {
            return Err(Error::invalid(
                "network_backward",
                format!("expected {STAGES} side gradients, got {}", grad_sides.len()),
            ));
        }
        let g = self.pred.sigmoid.backward(grad_pred)?;
        let mut g_dec = self.pred.conv.backward(&g)?;
        let mut g_skips = Vec::with_capacity(STAGES);
        for k in 0..STAGES {
            let g_side = self.sides[k].backward(&grad_sides[k])?;
            g_dec.add_assign(&g_side)?;
            let (g_feat, g_skip) = self.decoder[k].backward(&g_dec)?;
            g_skips.push(g_skip);
            g_dec = g_feat;
        }
        let mut g = g_dec;
        for (stage, g_skip) in self.encoder.iter_mut().zip(&g_skips).rev() {
            let mut g_out = stage.pool.backward(&g)?;
            g_out.add_assign(g_skip)?;
            g = backward_blocks(&mut stage.blocks, &g_out)?;
        }
        Ok(g)
    }

    fn units(&self) -> Vec<Unit<'_, T>> {
        let enc = self.encoder.iter().flat_map(|s| &s.blocks).map(|b| Unit {
            name: &b.name,
            section: Section::Encoder,
            conv: &b.conv,
            bn: Some(&b.bn),
        });
        let dec = self.decoder.iter().rev().flat_map(|s| &s.blocks).map(|b| Unit {
            name: &b.name,
            section: Section::Decoder,
            conv: &b.conv,
            bn: Some(&b.bn),
        });
        let sides = self.sides.iter().map(|h| Unit {
            name: &h.name,
            section: Section::Side,
            conv: &h.conv,
            bn: None,
        });
        let pred = std::iter::once(Unit {
            name: "pred",
            section: Section::Prediction,
            conv: &self.pred.conv,
            bn: None,
        });
        enc.chain(dec).chain(sides).chain(pred).collect()
    }

    fn units_mut(&mut self) -> Vec<UnitMut<'_, T>> {
        let enc = self.encoder.iter_mut().flat_map(|s| &mut s.blocks).map(|b| UnitMut {
            name: &b.name,
            section: Section::Encoder,
            conv: &mut b.conv,
            bn: Some(&mut b.bn),
        });
        let dec = self.decoder.iter_mut().rev().flat_map(|s| &mut s.blocks).map(|b| UnitMut {
            name: &b.name,
            section: Section::Decoder,
            conv: &mut b.conv,
            bn: Some(&mut b.bn),
        });
        let sides = self.sides.iter_mut().map(|h| UnitMut {
            name: &h.name,
            section: Section::Side,
            conv: &mut h.conv,
            bn: None,
        });
        let pred = std::iter::once(UnitMut {
            name: "pred",
            section: Section::Prediction,
            conv: &mut self.pred.conv,
            bn: None,
        });
        enc.chain(dec).chain(sides).chain(pred).collect()
    }

    /// Layer names in registry order.
    pub fn layer_names(&self) -> Vec<String> {
        self.units().iter().map(|u| u.name.to_string()).collect()
    }

    /// Trainable tensors in registry order.
    pub fn params(&self) -> Vec<Param<'_, T>> {
        let mut out = Vec::new();
        for u in self.units() {
            let p = |suffix: &str, kind, tensor| Param {
                name: format!("{}.{suffix}", u.name),
                kind,
                section: u.section,
                tensor,
            };
            out.push(p("weight", ParamKind::Weight, &u.conv.weight));
            out.push(p("bias", ParamKind::Bias, &u.conv.bias));
            if let Some(bn) = u.bn {
                out.push(p("bn.gamma", ParamKind::Gamma, &bn.gamma));
                out.push(p("bn.beta", ParamKind::Beta, &bn.beta));
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut out = Vec::new();
        for u in self.units_mut() {
            let name = |suffix: &str| format!("{}.{suffix}", u.name);
            out.push(ParamMut {
                name: name("weight"),
                kind: ParamKind::Weight,
                section: u.section,
                tensor: &mut u.conv.weight,
            });
            out.push(ParamMut {
                name: name("bias"),
                kind: ParamKind::Bias,
                section: u.section,
                tensor: &mut u.conv.bias,
            });
            if let Some(bn) = u.bn {
                out.push(ParamMut {
                    name: name("bn.gamma"),
                    kind: ParamKind::Gamma,
                    section: u.section,
                    tensor: &mut bn.gamma,
                });
                out.push(ParamMut {
                    name: name("bn.beta"),
                    kind: ParamKind::Beta,
                    section: u.section,
                    tensor: &mut bn.beta,
                });
            }
        }
        out
    }

    /// Every tensor a checkpoint stores: parameters, then BN running
    /// statistics.
    pub fn state(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = self.params().into_iter().map(|p| (p.name, p.tensor)).collect();
        for u in self.units() {
            if let Some(bn) = u.bn {
                out.push((format!("{}.bn.running_mean", u.name), &bn.running_mean));
                out.push((format!("{}.bn.running_var", u.name), &bn.running_var));
            }
        }
        out
    }

    pub fn state_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut params = Vec::new();
        let mut buffers = Vec::new();
        for u in self.units_mut() {
            params.push((format!("{}.weight", u.name), &mut u.conv.weight));
            params.push((format!("{}.bias", u.name), &mut u.conv.bias));
            if let Some(bn) = u.bn {
                params.push((format!("{}.bn.gamma", u.name), &mut bn.gamma));
                params.push((format!("{}.bn.beta", u.name), &mut bn.beta));
                buffers.push((format!("{}.bn.running_mean", u.name), &mut bn.running_mean));
                buffers.push((format!("{}.bn.running_var", u.name), &mut bn.running_var));
            }
        }
        params.extend(buffers);
        params
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.tensor.len()).sum()
    }

    /// Trainable parameters of a section, BN affine parameters excluded.
    pub fn conv_param_count(&self, section: Section) -> usize {
        self.params()
            .iter()
            .filter(|p| p.section == section && matches!(p.kind, ParamKind::Weight | ParamKind::Bias))
            .map(|p| p.tensor.len())
            .sum()
    }

    pub fn encoder_param_count(&self) -> usize {
        self.conv_param_count(Section::Encoder)
    }

    /// Drops all accumulated gradients.
    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.tensor.clear_grad();
        }
    }

    /// Hash of the ReLU on/off states and max-pool winners cached by the last
    /// train-mode forward pass. Two parameter settings with equal patterns
    /// lie on the same smooth piece of the loss.
    pub fn activation_pattern(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for stage in &self.encoder {
            for b in &stage.blocks {
                b.relu.pattern().hash(&mut h);
            }
            stage.pool.argmax().hash(&mut h);
        }
        for stage in &self.decoder {
            for b in &stage.blocks {
                b.relu.pattern().hash(&mut h);
            }
        }
        h.finish()
    }

    /// Checksums of every upsampling kernel built so far (decoder stages,
    /// then side heads). The kernels are fixed and not trainable.
    pub fn upsample_checksums(&self) -> Vec<u64> {
        self.decoder
            .iter()
            .map(|d| &d.upsample)
            .chain(self.sides.iter().map(|s| &s.upsample))
            .filter_map(|u| u.kernel().map(|k| k.checksum()))
            .collect()
    }

    /// Copies parameters and buffers into a graph of another precision.
    pub fn cast<U: Float>(&self) -> NetworkGraph<U> {
        let mut out = NetworkGraph::<U>::new(self.config.clone(), self.seed).expect("config already validated");
        out.mode = self.mode;
        out.iteration = self.iteration;
        for ((_, dst), (_, src)) in out.state_mut().into_iter().zip(self.state()) {
            *dst = src.cast();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{compute_beta, total_loss, LossConfig};
    use rand::Rng;

    fn tiny() -> NetworkConfig {
        NetworkConfig {
            widths: [2, 3, 3, 4, 4],
            ..NetworkConfig::default()
        }
    }

    fn random_input<T: Float>(shape: (usize, usize, usize, usize), seed: u64) -> Tensor<T> {
        let mut rng = stream(seed, Purpose::GradCheck, 0, 0);
        let n = shape.0 * shape.1 * shape.2 * shape.3;
        Tensor::from_f64_values(shape, &(0..n).map(|_| rng.random::<f64>()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn default_encoder_count() {
        let g = build_tdcedn::<f32>(3, 0).unwrap();
        assert_eq!(g.encoder_param_count(), 14_714_688);
        assert_eq!(g.param_count(), g.config().total_params());
    }

    #[test]
    fn registry_names_unique_and_complete() {
        let g = NetworkGraph::<f32>::new(tiny(), 1).unwrap();
        let mut names: Vec<String> = g.params().into_iter().map(|p| p.name).collect();
        let n = names.len();
        assert_eq!(n, 26 * 4 + 6 * 2);
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
        assert_eq!(g.state().len(), n + 26 * 2);
    }

    #[test]
    fn same_seed_same_init() {
        let a = NetworkGraph::<f32>::new(tiny(), 5).unwrap();
        let b = NetworkGraph::<f32>::new(tiny(), 5).unwrap();
        let c = NetworkGraph::<f32>::new(tiny(), 6).unwrap();
        let same = a.state().iter().zip(b.state()).all(|(x, y)| x.1.data() == y.1.data());
        assert!(same);
        assert_ne!(a.params()[0].tensor.data(), c.params()[0].tensor.data());
    }

    #[test]
    fn output_shapes_follow_input() {
        let mut g = NetworkGraph::<f32>::new(tiny(), 2).unwrap();
        for &(h, w) in &[(64, 64), (100, 68), (32, 45)] {
            let x = random_input::<f32>((1, 3, h, w), 1);
            let out = g.forward(&x).unwrap();
            assert_eq!(out.pred.shape().dims(), [1, 1, h, w]);
            let sides = out.sides.unwrap();
            assert_eq!(sides.len(), 5);
            for s in &sides {
                assert_eq!(s.shape().dims(), [1, 1, h, w]);
                assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
            }
            assert_eq!(g.infer(&x).unwrap().shape().dims(), [1, 1, h, w]);
        }
    }

    #[test]
    fn undersized_or_wrong_channels_rejected() {
        let mut g = NetworkGraph::<f32>::new(tiny(), 2).unwrap();
        assert!(g.forward(&random_input((1, 3, 31, 64), 0)).is_err());
        assert!(g.forward(&random_input((1, 1, 32, 32), 0)).is_err());
    }

    #[test]
    fn infer_mode_is_pure() {
        let mut g = NetworkGraph::<f32>::new(tiny(), 3).unwrap();
        g.set_mode(Mode::Infer);
        let x = random_input((1, 3, 40, 36), 4);
        let a = g.forward(&x).unwrap();
        assert!(a.sides.is_none());
        let b = g.forward(&x).unwrap();
        assert_eq!(a.pred, b.pred);
    }

    #[test]
    fn zero_side_weights_give_one_half() {
        let mut h = SideHead::<f32>::new(&tiny().side_specs()[2]).unwrap();
        let feat = random_input((1, 3, 8, 8), 0);
        let y = h.forward(&feat, (32, 32)).unwrap();
        assert_eq!(y.shape().dims(), [1, 1, 32, 32]);
        assert!(y.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn refined_module_shapes() {
        // 400 -> 200 -> 100 -> 50 -> 25 -> 12 under floor pooling.
        let cfg = NetworkConfig::narrow(32);
        let mut g = NetworkGraph::<f32>::new(cfg.clone(), 0).unwrap();
        let w = cfg.widths;
        let feat = random_input((1, w[4], 12, 12), 0);
        let skip = random_input((1, w[4], 25, 25), 1);
        let y = g.decoder[4].forward(&feat, &skip, Mode::Train, 0).unwrap();
        assert_eq!(y.shape().dims(), [1, w[4], 25, 25]);
        assert_eq!(g.decoder[4].blocks[0].conv.c_in(), 2 * w[4]);
    }

    #[test]
    fn upsample_kernels_fixed_across_backward() {
        let mut g = NetworkGraph::<f32>::new(tiny(), 2).unwrap();
        let x = random_input((1, 3, 36, 34), 1);
        let out = g.forward(&x).unwrap();
        let before = g.upsample_checksums();
        assert_eq!(before.len(), 10);
        let ones = Tensor::ones(out.pred.shape()).unwrap();
        g.backward(&ones, &vec![ones.clone(); 5]).unwrap();
        assert_eq!(g.upsample_checksums(), before);
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let mut g = NetworkGraph::<f64>::new(tiny(), 11).unwrap();
        let x = random_input::<f64>((1, 3, 32, 32), 2);
        let mut rng = stream(3, Purpose::GradCheck, 1, 0);
        let gt_vals: Vec<f64> = (0..1024).map(|_| if rng.random::<f64>() < 0.2 { 1.0 } else { 0.0 }).collect();
        let gt = Tensor::<f64>::from_f64_values((1, 1, 32, 32), &gt_vals).unwrap();
        let target = compute_beta(&gt).unwrap();
        let cfg = LossConfig::default();
        let loss = |g: &mut NetworkGraph<f64>| {
            let out = g.forward(&x).unwrap();
            total_loss(&out.pred, out.sides.as_ref().unwrap(), &target, &cfg).unwrap()
        };
        let l = loss(&mut g);
        g.zero_grad();
        g.backward(&l.grad_pred, &l.grad_sides).unwrap();
        let analytic: Vec<(String, Vec<f64>)> = g
            .params()
            .iter()
            .map(|p| (p.name.clone(), p.tensor.grad().unwrap().to_vec()))
            .collect();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for (pi, (name, grad)) in analytic.iter().enumerate() {
            for _ in 0..3 {
                let j = rng.random_range(0..grad.len());
                let orig = g.params()[pi].tensor.data()[j];
                g.params_mut()[pi].tensor.data_mut()[j] = orig + h;
                let lp = loss(&mut g).total;
                g.params_mut()[pi].tensor.data_mut()[j] = orig - h;
                let lm = loss(&mut g).total;
                g.params_mut()[pi].tensor.data_mut()[j] = orig;
                let num = (lp - lm) / (2.0 * h);
                let err = (num - grad[j]).abs() / num.abs().max(grad[j].abs()).max(1e-4);
                assert!(err < 1e-3, "{name}[{j}]: analytic {} numeric {num}", grad[j]);
                worst = worst.max(err);
            }
        }
        assert!(worst < 1e-3);
    }
}
