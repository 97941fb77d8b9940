//! Static description of the encoder/decoder layout.

use crate::error::{Error, Result};
use crate::layers::{BN_DEFAULT_EPS, BN_DEFAULT_MOMENTUM, DEFAULT_DROPOUT_RATE};

/// Convolutions per encoder stage (stages 1..=5), VGG-16 up to `pool5`.
pub const ENCODER_CONVS: [usize; 5] = [2, 2, 3, 3, 3];
/// Convolutions per decoder stage (stages 1..=5), mirroring the encoder.
pub const DECODER_CONVS: [usize; 5] = [2, 2, 3, 3, 3];
pub const VGG16_WIDTHS: [usize; 5] = [64, 128, 256, 512, 512];
pub const STAGES: usize = 5;
/// Smallest input side that survives five 2×2 poolings.
pub const MIN_INPUT_SIDE: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input_channels: usize,
    /// Channel width of encoder stages 1..=5; decoder stage `s` outputs
    /// `widths[s - 1]` channels.
    pub widths: [usize; 5],
    pub dropout_rate: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_channels: 3,
            widths: VGG16_WIDTHS,
            dropout_rate: DEFAULT_DROPOUT_RATE,
            bn_eps: BN_DEFAULT_EPS,
            bn_momentum: BN_DEFAULT_MOMENTUM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Encoder,
    Decoder,
    Side,
    Prediction,
}

/// One convolution of the layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: String,
    pub section: Section,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub batchnorm: bool,
}

impl ConvSpec {
    pub fn conv_params(&self) -> usize {
        self.c_out * self.c_in * self.kernel * self.kernel + self.c_out
    }

    pub fn bn_params(&self) -> usize {
        if self.batchnorm {
            2 * self.c_out
        } else {
            0
        }
    }
}

impl NetworkConfig {
    /// Same layout with every width divided by `divisor` (at least 1 channel).
    pub fn narrow(divisor: usize) -> Self {
        let d = divisor.max(1);
        NetworkConfig {
            widths: VGG16_WIDTHS.map(|w| (w / d).max(1)),
            ..NetworkConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!(
                "channel counts must be positive (input {}, widths {:?})",
                self.input_channels, self.widths
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if self.bn_eps <= 0.0 || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::Config("invalid batch-norm hyperparameters".into()));
        }
        Ok(())
    }

    pub fn encoder_specs(&self) -> Vec<Vec<ConvSpec>> {
        let mut c_in = self.input_channels;
        (0..STAGES)
            .map(|s| {
                let width = self.widths[s];
                (0..ENCODER_CONVS[s])
                    .map(|j| {
                        let spec = ConvSpec {
                            name: format!("conv{}_{}", s + 1, j + 1),
                            section: Section::Encoder,
                            c_in,
                            c_out: width,
                            kernel: 3,
                            batchnorm: true,
                        };
                        c_in = width;
                        spec
                    })
                    .collect()
            })
            .collect()
    }

    /// Channels entering decoder stage `s` (1-based) from below: the pooled
    /// encoder output for stage 5, otherwise decoder stage `s + 1`'s output.
    pub fn decoder_feat_channels(&self, stage: usize) -> usize {
        self.widths[if stage == STAGES { STAGES - 1 } else { stage }]
    }

    /// Decoder stage specs indexed by `stage - 1`. Within a stage, layers
    /// are numbered downward (`deconv5_3`, `deconv5_2`, `deconv5_1`).
    pub fn decoder_specs(&self) -> Vec<Vec<ConvSpec>> {
        (1..=STAGES)
            .map(|stage| {
                let width = self.widths[stage - 1];
                let n = DECODER_CONVS[stage - 1];
                let mut c_in = self.decoder_feat_channels(stage) + width;
                (0..n)
                    .map(|j| {
                        let spec = ConvSpec {
                            name: format!("deconv{}_{}", stage, n - j),
                            section: Section::Decoder,
                            c_in,
                            c_out: width,
                            kernel: 3,
                            batchnorm: true,
                        };
                        c_in = width;
                        spec
                    })
                    .collect()
            })
            .collect()
    }

    pub fn side_specs(&self) -> Vec<ConvSpec> {
        (1..=STAGES)
            .map(|stage| ConvSpec {
                name: format!("side{stage}"),
                section: Section::Side,
                c_in: self.widths[stage - 1],
                c_out: 1,
                kernel: 1,
                batchnorm: false,
            })
            .collect()
    }

    pub fn pred_spec(&self) -> ConvSpec {
        ConvSpec {
            name: "pred".into(),
            section: Section::Prediction,
            c_in: self.widths[0],
            c_out: 1,
            kernel: 1,
            batchnorm: false,
        }
    }

    /// Every convolution in registry order.
    pub fn all_specs(&self) -> Vec<ConvSpec> {
        let mut v: Vec<ConvSpec> = self.encoder_specs().into_iter().flatten().collect();
        // decoder in execution order: stage 5 first
        v.extend(self.decoder_specs().into_iter().rev().flatten());
        v.extend(self.side_specs());
        v.push(self.pred_spec());
        v
    }

    /// Trainable convolution weights and biases of the encoder (BN excluded).
    pub fn encoder_conv_params(&self) -> usize {
        self.encoder_specs().iter().flatten().map(ConvSpec::conv_params).sum()
    }

    pub fn section_params(&self, section: Section) -> usize {
        self.all_specs()
            .iter()
            .filter(|s| s.section == section)
            .map(|s| s.conv_params() + s.bn_params())
            .sum()
    }

    pub fn total_params(&self) -> usize {
        self.all_specs().iter().map(|s| s.conv_params() + s.bn_params()).sum()
    }
}
