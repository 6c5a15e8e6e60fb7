//! Sliding time-context windows and multi-context mask averaging.
//!
//! A mask estimator that consumes `w` time bins at once can be slid along
//! the spectrogram one hop at a time, so every interior bin `t` receives
//! `w` independent estimates — one from each window that covers it. The
//! combined mask is their plain average:
//!
//! ```text
//! M(t) = mean over k in [max(1, t-w+1), min(t, T-w+1)] of M_k(t)
//! ```
//!
//! (1-based indices; window `k` spans bins `k..k+w-1`). The index clamp
//! collapses the three edge regimes — the first `w-1` bins see `t`
//! windows, the interior sees `w`, the last `w-1` bins see `T-t+1` — into
//! one formula, which also covers short sequences with `w <= T < 2w-1`
//! where the leading and trailing ramps overlap.
//!
//! Sliding is causal: the estimate for bin `t` is final once bin
//! `t + w - 1` has arrived, so the scheme adds exactly `(w-1)` hops of
//! algorithmic latency and nothing else.

use crate::dsp::MagnitudeSpectrogram;
use crate::mask::RatioMask;
use crate::nn::Tensor;
use crate::{par, Error, Result};

/// Input/output context geometry for a mask estimator. `w_out` is either
/// `w_in` (the model emits a full window, enabling averaging) or `1` (it
/// emits only the most recent bin).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextWindowConfig {
    pub w_in: usize,
    pub w_out: usize,
}

impl Default for ContextWindowConfig {
    fn default() -> Self {
        ContextWindowConfig { w_in: 1, w_out: 1 }
    }
}

impl ContextWindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w_in == 0 {
            return Err(Error::InvalidArgument("w_in must be at least 1".into()));
        }
        if self.w_out != 1 && self.w_out != self.w_in {
            return Err(Error::InvalidArgument(format!(
                "w_out must be 1 or equal to w_in ({}), got {}",
                self.w_in, self.w_out
            )));
        }
        Ok(())
    }
}

/// `K` stacked `w x F` grids, window `k` (0-based) covering time bins
/// `k..k+w-1` of the underlying spectrogram. Used both for framed model
/// inputs (arbitrary reals) and for per-window mask estimates (entries in
/// `[0, 1]`; enforced when the estimates are combined into a
/// [`RatioMask`]).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStack {
    data: Vec<f64>,
    num_windows: usize,
    width: usize,
    freq_bins: usize,
}

impl WindowStack {
    pub fn zeros(num_windows: usize, width: usize, freq_bins: usize) -> Self {
        WindowStack {
            data: vec![0.0; num_windows * width * freq_bins],
            num_windows,
            width,
            freq_bins,
        }
    }

    pub fn from_values(
        data: Vec<f64>,
        num_windows: usize,
        width: usize,
        freq_bins: usize,
    ) -> Result<Self> {
        if data.len() != num_windows * width * freq_bins {
            return Err(Error::DimensionMismatch(format!(
                "window stack needs {} values for {} windows of {} x {}, got {}",
                num_windows * width * freq_bins,
                num_windows,
                width,
                freq_bins,
                data.len()
            )));
        }
        Ok(WindowStack {
            data,
            num_windows,
            width,
            freq_bins,
        })
    }

    pub fn num_windows(&self) -> usize {
        self.num_windows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    /// The `w x F` grid of window `k`, row-major over (position, freq).
    pub fn window(&self, k: usize) -> &[f64] {
        let stride = self.width * self.freq_bins;
        &self.data[k * stride..(k + 1) * stride]
    }

    pub fn window_mut(&mut self, k: usize) -> &mut [f64] {
        let stride = self.width * self.freq_bins;
        &mut self.data[k * stride..(k + 1) * stride]
    }

    /// Value at window `k`, in-window position `pos` (0 = oldest bin), bin `f`.
    pub fn at(&self, k: usize, pos: usize, f: usize) -> f64 {
        self.data[(k * self.width + pos) * self.freq_bins + f]
    }
}

/// Slice a spectrogram into all `K = T - w + 1` length-`w` windows.
/// Sequences shorter than the window are a hard error; there is no
/// principled padding for them.
pub fn frame_windows(ybar: &MagnitudeSpectrogram, width: usize) -> Result<WindowStack> {
    if width == 0 {
        return Err(Error::InvalidArgument("window width must be at least 1".into()));
    }
    let t_bins = ybar.time_bins();
    if t_bins < width {
        return Err(Error::InputTooShort {
            got: t_bins,
            need: width,
        });
    }
    let num_windows = t_bins - width + 1;
    let f_bins = ybar.freq_bins();
    let mut stack = WindowStack::zeros(num_windows, width, f_bins);
    for k in 0..num_windows {
        let dst = stack.window_mut(k);
        for pos in 0..width {
            dst[pos * f_bins..(pos + 1) * f_bins].copy_from_slice(ybar.row(k + pos));
        }
    }
    Ok(stack)
}

/// Average overlapping per-window estimates into a single `T x F` mask.
///
/// Each output bin accumulates its covering windows in ascending `k` and
/// divides once, so the summation order is fixed and results are
/// reproducible bit-for-bit, parallel or not.
pub fn combine(est: &WindowStack, time_bins: usize) -> Result<RatioMask> {
    let w = est.width();
    if time_bins < w || est.num_windows() != time_bins - w + 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} windows of width {} cannot tile {} time bins (need T - w + 1)",
            est.num_windows(),
            w,
            time_bins
        )));
    }
    let f_bins = est.freq_bins();
    let last_window = est.num_windows() - 1;
    let rows = par::map_indexed(time_bins, 256, |t| {
        let k_lo = t.saturating_sub(w - 1);
        let k_hi = t.min(last_window);
        let mut row = vec![0.0f64; f_bins];
        for k in k_lo..=k_hi {
            let pos = t - k;
            let src = &est.window(k)[pos * f_bins..(pos + 1) * f_bins];
            for (acc, &v) in row.iter_mut().zip(src) {
                *acc += v;
            }
        }
        let count = (k_hi - k_lo + 1) as f64;
        for acc in &mut row {
            *acc /= count;
        }
        row
    });
    RatioMask::from_values(rows.concat(), time_bins, f_bins)
}

/// Added algorithmic latency of a width-`w` sliding window: `(w - 1)`
/// hops. A single-bin window adds nothing; the figure is fixed for the
/// whole stream regardless of its length.
pub fn latency_seconds(width: usize, t_hop_s: f64) -> f64 {
    width.saturating_sub(1) as f64 * t_hop_s
}

/// Anything that maps a stack of normalized input windows to per-window
/// mask estimates. Inputs and outputs are `[channels, freq, window]`
/// tensors: `[w_in, F, K]` in, `[w_out, F, K]` out, estimates in `[0, 1]`.
pub trait MaskEstimator {
    fn context(&self) -> ContextWindowConfig;
    fn freq_bins(&self) -> usize;
    fn estimate(&self, input: &Tensor) -> Result<Tensor>;
}

/// Full sliding-window inference over one utterance: frame the normalized
/// spectrogram, evaluate the model on every window, and assemble a `T x F`
/// mask.
///
/// With `w_out = w_in` the window outputs are averaged by [`combine`].
/// With `w_out = 1` each window contributes the estimate of its most
/// recent bin, which covers bins `w_in..T`; the first `w_in - 1` bins
/// reuse the first window's (sole) output column, the only estimate
/// available for them in this mode. That warm-up choice is ours — the
/// averaging scheme itself doesn't define one — and it stays within the
/// `(w-1)`-hop latency budget since window 1 is complete at bin `w_in`.
pub fn run_sliding_inference<M: MaskEstimator + ?Sized>(
    model: &M,
    ybar: &MagnitudeSpectrogram,
    cfg: &ContextWindowConfig,
) -> Result<RatioMask> {
    cfg.validate()?;
    if model.context() != *cfg {
        return Err(Error::DimensionMismatch(format!(
            "model was built for w_in={}, w_out={} but inference requested w_in={}, w_out={}",
            model.context().w_in,
            model.context().w_out,
            cfg.w_in,
            cfg.w_out
        )));
    }
    if model.freq_bins() != ybar.freq_bins() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} frequency bins, spectrogram has {}",
            model.freq_bins(),
            ybar.freq_bins()
        )));
    }
    let windows = frame_windows(ybar, cfg.w_in)?;
    let input = stack_to_tensor(&windows);
    let out = model.estimate(&input)?;
    let t_bins = ybar.time_bins();
    let f_bins = ybar.freq_bins();
    let num_windows = windows.num_windows();
    if out.shape() != [cfg.w_out, f_bins, num_windows] {
        return Err(Error::DimensionMismatch(format!(
            "estimator returned shape {:?}, expected [{}, {}, {}]",
            out.shape(),
            cfg.w_out,
            f_bins,
            num_windows
        )));
    }

    if cfg.w_out == cfg.w_in {
        let mut stack = WindowStack::zeros(num_windows, cfg.w_in, f_bins);
        for k in 0..num_windows {
            let dst = stack.window_mut(k);
            for pos in 0..cfg.w_in {
                for f in 0..f_bins {
                    dst[pos * f_bins + f] = out.at3(pos, f, k);
                }
            }
        }
        combine(&stack, t_bins)
    } else {
        // w_out = 1: window k finalizes bin k + w_in - 1.
        let mut values = vec![0.0f64; t_bins * f_bins];
        for t in 0..t_bins {
            let k = t.saturating_sub(cfg.w_in - 1);
            for f in 0..f_bins {
                values[t * f_bins + f] = out.at3(0, f, k);
            }
        }
        RatioMask::from_values(values, t_bins, f_bins)
    }
}

/// Repack a window stack `[K][w][F]` as a `[w, F, K]` tensor for batch
/// model evaluation (the window axis becomes the tensor's time axis).
pub fn stack_to_tensor(stack: &WindowStack) -> Tensor {
    let (k_total, w, f_bins) = (stack.num_windows(), stack.width(), stack.freq_bins());
    let mut tensor = Tensor::zeros(&[w, f_bins, k_total]);
    for k in 0..k_total {
        let src = stack.window(k);
        for pos in 0..w {
            for f in 0..f_bins {
                tensor.set3(pos, f, k, src[pos * f_bins + f]);
            }
        }
    }
    tensor
}
