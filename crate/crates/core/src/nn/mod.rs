//! Minimal trainable network stack: tensors, frequency-only convolutions,
//! ReLU/sigmoid, an optional LSTM+FC bottleneck, Adam, a training loop and
//! checkpoint I/O — enough to instantiate desk-scale convolutional
//! (denoising-autoencoder style) and convolutional-recurrent mask
//! estimators.
//!
//! A model maps a `[w_in, F, T]` stack of normalized context windows to
//! `[w_out, F, T]` mask estimates through a sigmoid head. Context frames
//! travel on the channel axis; nothing ever convolves across time, so the
//! CDAE is exactly per-column and all time mixing in the CRN lives in its
//! unidirectional LSTM.

mod adam;
mod checkpoint;
mod layers;
mod tensor;
mod train;

pub use adam::{adam_step, AdamState, TrainConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use layers::{ConvFreq, ConvTransposedFreq, FullyConnected, Layer, Lstm, Relu, Sigmoid};
pub use tensor::Tensor;
pub use train::{train, EpochRecord, TrainExample};

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use crate::context::{ContextWindowConfig, MaskEstimator};
use crate::{Error, Result};

/// Mask-estimator families. `Const` is a parameter-free stub that emits a
/// constant mask — useful for plumbing tests and identity/silence paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Cdae,
    Crn,
    Const,
}

/// Everything needed to build a model deterministically. The layer stack
/// is generated from these few numbers rather than spelled out by hand:
/// an encoder of stride-`stride_freq` convolutions with the listed channel
/// counts, an optional LSTM+FC bottleneck (CRN), and a mirrored
/// transposed-convolution decoder ending in `w_out` channels and a
/// sigmoid.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub context: ContextWindowConfig,
    pub freq_bins: usize,
    pub encoder_channels: Vec<usize>,
    pub kernel_freq: usize,
    pub stride_freq: usize,
    /// Bottleneck width; read only when `architecture = crn`.
    pub lstm_units: usize,
    /// Mask value emitted by the `const` architecture.
    pub const_value: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            architecture: Architecture::Cdae,
            context: ContextWindowConfig::default(),
            freq_bins: 65,
            encoder_channels: vec![16, 32],
            kernel_freq: 3,
            stride_freq: 2,
            lstm_units: 64,
            const_value: 0.5,
        }
    }
}

/// One layer of the generated stack, carrying exactly the numbers its
/// parameter count and construction need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    ConvFreq {
        in_channels: usize,
        feature_maps: usize,
        kernel: usize,
        stride: usize,
    },
    ConvTransposedFreq {
        in_channels: usize,
        feature_maps: usize,
        kernel: usize,
        stride: usize,
    },
    Relu,
    Sigmoid,
    Lstm {
        input_dim: usize,
        units: usize,
    },
    FullyConnected {
        input_dim: usize,
        out_channels: usize,
        out_freq: usize,
    },
}

impl LayerSpec {
    /// Closed-form trainable-scalar count of this layer.
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::ConvFreq {
                in_channels,
                feature_maps,
                kernel,
                ..
            }
            | LayerSpec::ConvTransposedFreq {
                in_channels,
                feature_maps,
                kernel,
                ..
            } => feature_maps * in_channels * kernel + feature_maps,
            LayerSpec::Relu | LayerSpec::Sigmoid => 0,
            LayerSpec::Lstm { input_dim, units } => 4 * units * (input_dim + units + 1),
            LayerSpec::FullyConnected {
                input_dim,
                out_channels,
                out_freq,
            } => {
                let units = out_channels * out_freq;
                units * input_dim + units
            }
        }
    }

    fn build(&self) -> Layer {
        match *self {
            LayerSpec::ConvFreq {
                in_channels,
                feature_maps,
                kernel,
                stride,
            } => Layer::Conv(ConvFreq::new(in_channels, feature_maps, kernel, stride)),
            LayerSpec::ConvTransposedFreq {
                in_channels,
                feature_maps,
                kernel,
                stride,
            } => Layer::ConvT(ConvTransposedFreq::new(
                in_channels,
                feature_maps,
                kernel,
                stride,
            )),
            LayerSpec::Relu => Layer::Relu(Relu::default()),
            LayerSpec::Sigmoid => Layer::Sigmoid(Sigmoid::default()),
            LayerSpec::Lstm { input_dim, units } => Layer::Lstm(Lstm::new(input_dim, units)),
            LayerSpec::FullyConnected {
                input_dim,
                out_channels,
                out_freq,
            } => Layer::Fc(FullyConnected::new(input_dim, out_channels, out_freq)),
        }
    }
}

fn conv_out_extent(f: usize, kernel: usize, stride: usize) -> Result<usize> {
    let pad = (kernel - 1) / 2;
    let span = f + 2 * pad;
    if span < kernel {
        return Err(Error::DimensionMismatch(format!(
            "kernel {kernel} does not fit {f} frequency bins"
        )));
    }
    Ok((span - kernel) / stride + 1)
}

fn convt_out_extent(f: usize, kernel: usize, stride: usize) -> usize {
    (f - 1) * stride + kernel - 2 * ((kernel - 1) / 2)
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.context.validate()?;
        if self.freq_bins == 0 {
            return Err(Error::InvalidArgument("freq_bins must be positive".into()));
        }
        match self.architecture {
            Architecture::Const => {
                if !(0.0..=1.0).contains(&self.const_value) {
                    return Err(Error::InvalidArgument(format!(
                        "const_value must lie in [0, 1], got {}",
                        self.const_value
                    )));
                }
            }
            Architecture::Cdae | Architecture::Crn => {
                if self.encoder_channels.is_empty() || self.encoder_channels.contains(&0) {
                    return Err(Error::InvalidArgument(
                        "encoder_channels must be non-empty positive counts".into(),
                    ));
                }
                if self.kernel_freq == 0 || self.stride_freq == 0 {
                    return Err(Error::InvalidArgument(
                        "kernel_freq and stride_freq must be positive".into(),
                    ));
                }
                if self.architecture == Architecture::Crn && self.lstm_units == 0 {
                    return Err(Error::InvalidArgument(
                        "crn needs lstm_units >= 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Expand the config into the concrete layer stack, checking that the
    /// mirrored decoder restores the frequency extent.
    pub fn layer_specs(&self) -> Result<Vec<LayerSpec>> {
        self.validate()?;
        if self.architecture == Architecture::Const {
            return Ok(Vec::new());
        }
        let (k, s) = (self.kernel_freq, self.stride_freq);
        let mut specs = Vec::new();
        let mut channels = self.context.w_in;
        let mut f = self.freq_bins;

        for &ch in &self.encoder_channels {
            specs.push(LayerSpec::ConvFreq {
                in_channels: channels,
                feature_maps: ch,
                kernel: k,
                stride: s,
            });
            specs.push(LayerSpec::Relu);
            f = conv_out_extent(f, k, s)?;
            if f == 0 {
                return Err(Error::DimensionMismatch(
                    "encoder collapses the frequency axis to nothing".into(),
                ));
            }
            channels = ch;
        }

        if self.architecture == Architecture::Crn {
            let d = channels * f;
            specs.push(LayerSpec::Lstm {
                input_dim: d,
                units: self.lstm_units,
            });
            specs.push(LayerSpec::FullyConnected {
                input_dim: self.lstm_units,
                out_channels: channels,
                out_freq: f,
            });
            specs.push(LayerSpec::Relu);
        }

        for i in (0..self.encoder_channels.len()).rev() {
            let out_ch = if i == 0 {
                self.context.w_out
            } else {
                self.encoder_channels[i - 1]
            };
            specs.push(LayerSpec::ConvTransposedFreq {
                in_channels: channels,
                feature_maps: out_ch,
                kernel: k,
                stride: s,
            });
            f = convt_out_extent(f, k, s);
            channels = out_ch;
            if i == 0 {
                specs.push(LayerSpec::Sigmoid);
            } else {
                specs.push(LayerSpec::Relu);
            }
        }

        if f != self.freq_bins {
            return Err(Error::DimensionMismatch(format!(
                "decoder restores {f} frequency bins instead of {} — \
                 kernel/stride {k}/{s} cannot mirror this extent chain",
                self.freq_bins
            )));
        }
        Ok(specs)
    }
}

/// Exact number of trainable scalars a config builds, from the layer-wise
/// closed forms (independent of the actual weight buffers).
pub fn count_params(config: &ModelConfig) -> Result<usize> {
    Ok(config.layer_specs()?.iter().map(LayerSpec::param_count).sum())
}

/// A sequential mask-estimation model.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    layers: Vec<Layer>,
    last_input_shape: Option<Vec<usize>>,
}

impl Model {
    /// Build with all-zero weights; call [`Model::init_weights`] (or load
    /// a checkpoint) before using the output for anything but plumbing.
    pub fn new(config: ModelConfig) -> Result<Self> {
        let layers = config.layer_specs()?.iter().map(LayerSpec::build).collect();
        Ok(Model {
            config,
            layers,
            last_input_shape: None,
        })
    }

    /// Deterministic Glorot-uniform initialization: one seeded stream,
    /// layers drawn in order.
    pub fn init_weights(&mut self, seed: u64) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            layer.init_weights(&mut rng);
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (c, f, t_len) = input.dims3();
        let ctx = self.config.context;
        if c != ctx.w_in || f != self.config.freq_bins {
            return Err(Error::DimensionMismatch(format!(
                "model expects input [{}, {}, T], got {:?}",
                ctx.w_in,
                self.config.freq_bins,
                input.shape()
            )));
        }
        self.last_input_shape = Some(input.shape().to_vec());
        if self.config.architecture == Architecture::Const {
            let v = self.config.const_value;
            let mut out = Tensor::zeros(&[ctx.w_out, f, t_len]);
            out.data_mut().fill(v);
            return Ok(out);
        }
        let mut cur = input.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur)?;
        }
        debug_assert_eq!(cur.shape(), &[ctx.w_out, f, t_len]);
        Ok(cur)
    }

    /// Backpropagate `dLoss/dOutput`, accumulating parameter gradients;
    /// returns `dLoss/dInput`.
    pub fn backward(&mut self, loss_grad: &Tensor) -> Result<Tensor> {
        if self.config.architecture == Architecture::Const {
            let shape = self
                .last_input_shape
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("backward called before forward".into()))?;
            return Ok(Tensor::zeros(shape));
        }
        let mut grad = loss_grad.clone();
        for layer in self.layers.iter_mut().rev() {
            grad = layer.backward(&grad)?;
        }
        Ok(grad)
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            layer.zero_grads();
        }
    }

    /// Actual parameter count of the built layers. Always equals
    /// [`count_params`] of the config — the test suite holds the two
    /// routes against each other.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            layer.append_params(&mut out);
        }
        out
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            layer.append_grads(&mut out);
        }
        out
    }

    /// Overwrite all parameters from a flat vector in declaration order.
    /// Values are not range-checked; feeding non-finite parameters is the
    /// caller's own foot-gun (the trainer aborts on the resulting loss).
    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut cursor = params;
        for layer in &mut self.layers {
            layer.load_params(&mut cursor)?;
        }
        Ok(())
    }
}

impl MaskEstimator for Model {
    fn context(&self) -> ContextWindowConfig {
        self.config.context
    }

    fn freq_bins(&self) -> usize {
        self.config.freq_bins
    }

    /// Inference on a shared reference: run forward on a scratch clone so
    /// the activation caches never escape. Estimates are in (0, 1) by the
    /// sigmoid head (or the clamped constant for `const` models).
    fn estimate(&self, input: &Tensor) -> Result<Tensor> {
        let mut scratch = self.clone();
        scratch.forward(input)
    }
}
