//! Speech enhancement by time-frequency soft masking with sliding
//! context-window post-processing.
//!
//! The crate is organised around the enhancement pipeline:
//!
//! * [`dsp`] — framing, windowing, forward/inverse STFT, magnitudes and
//!   per-utterance normalization.
//! * [`mask`] — ideal ratio masks, mask application and the compressed
//!   mean-squared-error loss used for training.
//! * [`context`] — sliding time-context windows, recombination of
//!   overlapping per-window mask estimates by averaging, and the
//!   algorithmic latency accounting that motivates the window sizes.
//! * [`nn`] — small from-scratch neural mask estimators (convolutional
//!   autoencoder and a recurrent variant), Adam, training loop and
//!   checkpoint serialization.
//! * [`data`] — deterministic mixture synthesis: segment concatenation
//!   with exponential fades, gain/SNR augmentation and peak handling.
//! * [`metrics`] — SNR, scale-invariant SDR and log-spectral distance.
//! * [`wav`] / [`gridfile`] — strict 16-bit mono PCM WAV I/O and a raw
//!   binary format for masks and magnitude grids.
//!
//! Heavy loops (window evaluation, batch gradients, synthesis, metrics)
//! are data-parallel via rayon when the default `parallel` feature is on;
//! all reductions are performed in deterministic order, so parallel and
//! sequential builds produce byte-identical results.

pub mod context;
pub mod corpus;
pub mod data;
pub mod dsp;
pub mod gridfile;
pub mod mask;
pub mod metrics;
pub mod nn;
pub(crate) mod par;
pub mod wav;

/// Crate-wide error type. Variants map onto the process exit codes used
/// by the CLI: bad arguments, malformed data, numerical failure.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input too short: got {got}, need at least {need}")]
    InputTooShort { got: usize, need: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{path}: {msg}")]
    Format { path: String, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn format(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
