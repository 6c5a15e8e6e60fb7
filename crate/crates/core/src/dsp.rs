//! Framing, windowing, forward/inverse STFT and magnitude utilities.
//!
//! Analysis uses a periodic Hann window of `frame_len` samples advanced by
//! `hop_len`; at the default 128/64 split adjacent windows sum to one, so
//! the frame grid tiles the signal exactly. Synthesis is weighted
//! overlap-add: each inverse frame is multiplied by the window again and
//! the result divided by the overlap-added squared window, which makes the
//! roundtrip exact wherever that denominator is healthy and keeps
//! modified (masked) spectra well behaved at frame seams.
//!
//! Everything here runs in double precision.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::{Error, Result};

/// Analysis frame length used throughout the enhancement experiments
/// (8 ms at 16 kHz).
pub const DEFAULT_FRAME_LEN: usize = 128;
/// Hop between adjacent frames (4 ms at 16 kHz, 50% overlap).
pub const DEFAULT_HOP_LEN: usize = 64;
/// Sample rate all corpus audio is expected to carry.
pub const EXPECTED_SAMPLE_RATE: u32 = 16_000;

/// Floor applied to the overlap-added squared window before dividing in
/// [`istft`], and to the standard deviation in [`normalize`].
pub const WEIGHT_FLOOR: f64 = 1e-8;

/// A mono waveform with its sample rate. Samples are finite `f64`s,
/// nominally in `[-1, 1]` (the WAV codec clamps on write).
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Numeric(format!("non-finite sample at index {i}")));
        }
        Ok(Waveform {
            samples,
            sample_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Analysis window shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    /// Periodic Hann, `w[n] = 0.5 (1 - cos(2 pi n / L))`. Adjacent frames
    /// at 50% overlap sum to one.
    Hann,
    /// All-ones; useful for diagnostics.
    Rect,
}

/// STFT analysis/synthesis parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop_len: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            frame_len: DEFAULT_FRAME_LEN,
            hop_len: DEFAULT_HOP_LEN,
            window: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 2 || self.frame_len % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "frame_len must be even and >= 2, got {}",
                self.frame_len
            )));
        }
        if self.hop_len == 0 || self.hop_len > self.frame_len {
            return Err(Error::InvalidArgument(format!(
                "hop_len must be in 1..={}, got {}",
                self.frame_len, self.hop_len
            )));
        }
        Ok(())
    }

    /// Number of non-redundant frequency bins, `frame_len / 2 + 1`.
    pub fn freq_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Number of full frames that fit into `num_samples`.
    pub fn time_bins(&self, num_samples: usize) -> Option<usize> {
        if num_samples < self.frame_len {
            None
        } else {
            Some(1 + (num_samples - self.frame_len) / self.hop_len)
        }
    }

    /// Hop duration in seconds at the given rate.
    pub fn hop_seconds(&self, sample_rate_hz: u32) -> f64 {
        self.hop_len as f64 / sample_rate_hz as f64
    }
}

/// Complex STFT coefficients, stored time-major: bin `(t, f)` lives at
/// `values[t * freq_bins + f]`. Only the non-redundant half spectrum is
/// kept (`freq_bins = frame_len / 2 + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    values: Vec<Complex64>,
    time_bins: usize,
    freq_bins: usize,
}

impl ComplexSpectrogram {
    pub fn zeros(time_bins: usize, freq_bins: usize) -> Self {
        ComplexSpectrogram {
            values: vec![Complex64::new(0.0, 0.0); time_bins * freq_bins],
            time_bins,
            freq_bins,
        }
    }

    pub fn from_values(values: Vec<Complex64>, time_bins: usize, freq_bins: usize) -> Result<Self> {
        if values.len() != time_bins * freq_bins {
            return Err(Error::DimensionMismatch(format!(
                "spectrogram needs {} values for {} x {} bins, got {}",
                time_bins * freq_bins,
                time_bins,
                freq_bins,
                values.len()
            )));
        }
        Ok(ComplexSpectrogram {
            values,
            time_bins,
            freq_bins,
        })
    }

    pub fn time_bins(&self) -> usize {
        self.time_bins
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    pub fn at(&self, t: usize, f: usize) -> Complex64 {
        self.values[t * self.freq_bins + f]
    }

    pub fn row(&self, t: usize) -> &[Complex64] {
        &self.values[t * self.freq_bins..(t + 1) * self.freq_bins]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [Complex64] {
        &mut self.values[t * self.freq_bins..(t + 1) * self.freq_bins]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
}

/// Magnitude (or any non-negative real) grid with the same time-major
/// layout as [`ComplexSpectrogram`].
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    values: Vec<f64>,
    time_bins: usize,
    freq_bins: usize,
}

impl MagnitudeSpectrogram {
    pub fn zeros(time_bins: usize, freq_bins: usize) -> Self {
        MagnitudeSpectrogram {
            values: vec![0.0; time_bins * freq_bins],
            time_bins,
            freq_bins,
        }
    }

    pub fn from_values(values: Vec<f64>, time_bins: usize, freq_bins: usize) -> Result<Self> {
        if values.len() != time_bins * freq_bins {
            return Err(Error::DimensionMismatch(format!(
                "grid needs {} values for {} x {} bins, got {}",
                time_bins * freq_bins,
                time_bins,
                freq_bins,
                values.len()
            )));
        }
        Ok(MagnitudeSpectrogram {
            values,
            time_bins,
            freq_bins,
        })
    }

    pub fn time_bins(&self) -> usize {
        self.time_bins
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    pub fn at(&self, t: usize, f: usize) -> f64 {
        self.values[t * self.freq_bins + f]
    }

    pub fn at_mut(&mut self, t: usize, f: usize) -> &mut f64 {
        &mut self.values[t * self.freq_bins + f]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.freq_bins..(t + 1) * self.freq_bins]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Mean/deviation pair produced by [`normalize`]; kept so a consumer can
/// undo the transform or reuse identical statistics across related grids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationStats {
    pub mean: f64,
    /// Population standard deviation, floored at [`WEIGHT_FLOOR`].
    pub std: f64,
}

/// Window coefficients for a frame of `len` samples.
pub fn window_coefficients(kind: WindowKind, len: usize) -> Vec<f64> {
    match kind {
        WindowKind::Hann => (0..len)
            .map(|n| 0.5 * (1.0 - (std::f64::consts::TAU * n as f64 / len as f64).cos()))
            .collect(),
        WindowKind::Rect => vec![1.0; len],
    }
}

/// Forward STFT. Frames that would run past the end of the signal are
/// dropped, so the last `< hop_len` samples of an arbitrary-length input
/// may be unrepresented; callers that need exact-length resynthesis pad
/// back up afterwards.
pub fn stft(waveform: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    let n = cfg.frame_len;
    let time_bins = cfg.time_bins(waveform.len()).ok_or(Error::InputTooShort {
        got: waveform.len(),
        need: n,
    })?;
    let freq_bins = cfg.freq_bins();
    let window = window_coefficients(cfg.window, n);

    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut frame = vec![Complex64::new(0.0, 0.0); n];
    let mut out = ComplexSpectrogram::zeros(time_bins, freq_bins);
    for t in 0..time_bins {
        let start = t * cfg.hop_len;
        for (i, slot) in frame.iter_mut().enumerate() {
            *slot = Complex64::new(waveform.samples[start + i] * window[i], 0.0);
        }
        fft.process(&mut frame);
        out.row_mut(t).copy_from_slice(&frame[..freq_bins]);
    }
    Ok(out)
}

/// Inverse STFT by weighted overlap-add. The output covers
/// `(time_bins - 1) * hop_len + frame_len` samples; wherever the
/// accumulated squared window falls below [`WEIGHT_FLOOR`] (only the very
/// first sample for a Hann window) the output is effectively zeroed
/// rather than amplified.
pub fn istft(spec: &ComplexSpectrogram, cfg: &StftConfig, sample_rate_hz: u32) -> Result<Waveform> {
    cfg.validate()?;
    let n = cfg.frame_len;
    if spec.freq_bins() != cfg.freq_bins() {
        return Err(Error::DimensionMismatch(format!(
            "spectrogram has {} frequency bins, config implies {}",
            spec.freq_bins(),
            cfg.freq_bins()
        )));
    }
    if spec.time_bins() == 0 {
        return Err(Error::DimensionMismatch("empty spectrogram".into()));
    }
    let window = window_coefficients(cfg.window, n);
    let out_len = (spec.time_bins() - 1) * cfg.hop_len + n;
    let mut acc = vec![0.0f64; out_len];
    let mut weight = vec![0.0f64; out_len];

    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let mut frame = vec![Complex64::new(0.0, 0.0); n];
    for t in 0..spec.time_bins() {
        let row = spec.row(t);
        frame[..row.len()].copy_from_slice(row);
        // Rebuild the redundant half from conjugate symmetry.
        for k in 1..n / 2 {
            frame[n - k] = row[k].conj();
        }
        ifft.process(&mut frame);
        let start = t * cfg.hop_len;
        for i in 0..n {
            let sample = frame[i].re / n as f64;
            acc[start + i] += sample * window[i];
            weight[start + i] += window[i] * window[i];
        }
    }
    let samples = acc
        .iter()
        .zip(&weight)
        .map(|(&a, &w)| a / w.max(WEIGHT_FLOOR))
        .collect();
    Waveform::new(samples, sample_rate_hz)
}

/// Element-wise magnitude of a complex spectrogram.
pub fn magnitude(spec: &ComplexSpectrogram) -> MagnitudeSpectrogram {
    MagnitudeSpectrogram {
        values: spec.values.iter().map(|v| v.norm()).collect(),
        time_bins: spec.time_bins,
        freq_bins: spec.freq_bins,
    }
}

/// Zero-mean, unit-deviation normalization over the whole grid. The
/// deviation is floored at [`WEIGHT_FLOOR`] so constant grids map to zero
/// instead of dividing by zero; the returned stats always reflect the
/// values actually used.
pub fn normalize(grid: &MagnitudeSpectrogram) -> (MagnitudeSpectrogram, NormalizationStats) {
    let n = grid.values.len().max(1) as f64;
    let mean = grid.values.iter().sum::<f64>() / n;
    let var = grid.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(WEIGHT_FLOOR);
    let values = grid.values.iter().map(|v| (v - mean) / std).collect();
    (
        MagnitudeSpectrogram {
            values,
            time_bins: grid.time_bins,
            freq_bins: grid.freq_bins,
        },
        NormalizationStats { mean, std },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_chacha::ChaCha20Rng;
    use rand_core::{RngCore, SeedableRng};

    fn uniform(rng: &mut ChaCha20Rng) -> f64 {
        // 53-bit mantissa in [0, 1).
        (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn random_waveform(seed: u64, len: usize) -> Waveform {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let samples = (0..len).map(|_| 2.0 * uniform(&mut rng) - 1.0).collect();
        Waveform::new(samples, EXPECTED_SAMPLE_RATE).unwrap()
    }

    /// O(N^2) DFT straight from the definition; the oracle for `stft`.
    fn naive_dft(frame: &[f64]) -> Vec<Complex64> {
        let n = frame.len();
        (0..n)
            .map(|k| {
                let mut sum = Complex64::new(0.0, 0.0);
                for (i, &x) in frame.iter().enumerate() {
                    let phase = -std::f64::consts::TAU * (k * i) as f64 / n as f64;
                    sum += Complex64::new(phase.cos(), phase.sin()) * x;
                }
                sum
            })
            .collect()
    }

    #[test]
    fn hann_is_periodic_and_cola_at_half_overlap() {
        let w = window_coefficients(WindowKind::Hann, 128);
        assert_abs_diff_eq!(w[0], 0.0, epsilon = 1e-15);
        // Periodic Hann peaks at L/2 with value exactly 1.
        assert_abs_diff_eq!(w[64], 1.0, epsilon = 1e-15);
        for n in 0..64 {
            assert_abs_diff_eq!(w[n] + w[n + 64], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn stft_matches_direct_dft_per_frame() {
        let cfg = StftConfig::default();
        let wav = random_waveform(7, 1000);
        let spec = stft(&wav, &cfg).unwrap();
        let window = window_coefficients(cfg.window, cfg.frame_len);

        for t in 0..spec.time_bins() {
            let start = t * cfg.hop_len;
            let windowed: Vec<f64> = (0..cfg.frame_len)
                .map(|i| wav.samples[start + i] * window[i])
                .collect();
            let oracle = naive_dft(&windowed);
            for f in 0..spec.freq_bins() {
                let got = spec.at(t, f);
                assert_abs_diff_eq!(got.re, oracle[f].re, epsilon = 1e-9);
                assert_abs_diff_eq!(got.im, oracle[f].im, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn stft_shape_follows_frame_arithmetic() {
        let cfg = StftConfig::default();
        // 16000 samples -> 1 + (16000 - 128) / 64 = 249 frames.
        let spec = stft(&random_waveform(1, 16_000), &cfg).unwrap();
        assert_eq!(spec.time_bins(), 249);
        assert_eq!(spec.freq_bins(), 65);

        // Exactly one frame when len == frame_len.
        let spec = stft(&random_waveform(2, 128), &cfg).unwrap();
        assert_eq!(spec.time_bins(), 1);
    }

    #[test]
    fn stft_rejects_short_input() {
        let cfg = StftConfig::default();
        let err = stft(&random_waveform(3, 127), &cfg).unwrap_err();
        assert!(matches!(err, crate::Error::InputTooShort { got: 127, need: 128 }));
    }

    #[test]
    fn roundtrip_reconstructs_interior_to_machine_precision() {
        let cfg = StftConfig::default();
        let wav = random_waveform(11, 16_000);
        let spec = stft(&wav, &cfg).unwrap();
        let back = istft(&spec, &cfg, wav.sample_rate_hz).unwrap();

        // Interior: samples covered by the full complement of overlapping
        // frames, i.e. [frame_len, out_len - frame_len).
        let out_len = back.len();
        assert_eq!(out_len, (spec.time_bins() - 1) * cfg.hop_len + cfg.frame_len);
        for i in cfg.frame_len..out_len - cfg.frame_len {
            assert_abs_diff_eq!(back.samples[i], wav.samples[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn roundtrip_holds_for_rect_window_too() {
        let cfg = StftConfig {
            window: WindowKind::Rect,
            ..StftConfig::default()
        };
        let wav = random_waveform(13, 4096);
        let back = istft(&stft(&wav, &cfg).unwrap(), &cfg, wav.sample_rate_hz).unwrap();
        for i in cfg.frame_len..back.len() - cfg.frame_len {
            assert_abs_diff_eq!(back.samples[i], wav.samples[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn istft_of_zeros_is_silence() {
        let cfg = StftConfig::default();
        let spec = ComplexSpectrogram::zeros(10, cfg.freq_bins());
        let wav = istft(&spec, &cfg, EXPECTED_SAMPLE_RATE).unwrap();
        assert!(wav.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn single_frame_windowed_impulse_survives_the_roundtrip() {
        // One frame holding an impulse at the window peak: synthesis must
        // undo the window weighting and return the impulse.
        let cfg = StftConfig::default();
        let mut samples = vec![0.0; cfg.frame_len];
        samples[64] = 0.8; // periodic Hann is exactly 1 there
        let wav = Waveform::new(samples, EXPECTED_SAMPLE_RATE).unwrap();
        let spec = stft(&wav, &cfg).unwrap();
        assert_eq!(spec.time_bins(), 1);
        let back = istft(&spec, &cfg, EXPECTED_SAMPLE_RATE).unwrap();
        for (i, &s) in back.samples.iter().enumerate() {
            let expected = if i == 64 { 0.8 } else { 0.0 };
            assert_abs_diff_eq!(s, expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn spectral_energy_tracks_windowed_energy() {
        // Parseval per frame, summed: (1/N) sum_k |X_k|^2 over the full
        // spectrum equals the windowed frame energy. Reassemble the full
        // spectrum from the stored half.
        let cfg = StftConfig::default();
        let wav = random_waveform(23, 8000);
        let spec = stft(&wav, &cfg).unwrap();
        let window = window_coefficients(cfg.window, cfg.frame_len);

        let mut spectral = 0.0;
        for t in 0..spec.time_bins() {
            let row = spec.row(t);
            let mut frame_energy = row[0].norm_sqr() + row[cfg.frame_len / 2].norm_sqr();
            for v in &row[1..cfg.frame_len / 2] {
                frame_energy += 2.0 * v.norm_sqr();
            }
            spectral += frame_energy / cfg.frame_len as f64;
        }

        let mut windowed = 0.0;
        for t in 0..spec.time_bins() {
            let start = t * cfg.hop_len;
            for i in 0..cfg.frame_len {
                windowed += (wav.samples[start + i] * window[i]).powi(2);
            }
        }
        assert!((spectral - windowed).abs() / windowed < 0.01);
    }

    #[test]
    fn magnitude_spot_values() {
        let spec = ComplexSpectrogram::from_values(
            vec![
                Complex64::new(3.0, 4.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(-2.0, 0.0),
            ],
            1,
            3,
        )
        .unwrap();
        let mag = magnitude(&spec);
        assert_eq!(mag.values(), &[5.0, 0.0, 2.0]);
    }

    #[test]
    fn normalize_two_level_grid() {
        // {0, 2} equally populated: mean 1, std 1, outputs {-1, +1}.
        let mag = MagnitudeSpectrogram::from_values(vec![0.0, 2.0, 0.0, 2.0], 2, 2).unwrap();
        let (norm, stats) = normalize(&mag);
        assert_abs_diff_eq!(stats.mean, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(stats.std, 1.0, epsilon = 1e-15);
        assert_eq!(norm.values(), &[-1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn magnitude_is_pointwise_norm() {
        let cfg = StftConfig::default();
        let spec = stft(&random_waveform(17, 512), &cfg).unwrap();
        let mag = magnitude(&spec);
        for t in 0..spec.time_bins() {
            for f in 0..spec.freq_bins() {
                assert_abs_diff_eq!(mag.at(t, f), spec.at(t, f).norm(), epsilon = 0.0);
            }
        }
    }

    #[test]
    fn normalize_centres_and_scales() {
        let cfg = StftConfig::default();
        let mag = magnitude(&stft(&random_waveform(19, 2048), &cfg).unwrap());
        let (norm, stats) = normalize(&mag);

        let n = norm.values().len() as f64;
        let mean = norm.values().iter().sum::<f64>() / n;
        let var = norm.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(var.sqrt(), 1.0, epsilon = 1e-9);

        // Undo with the returned stats.
        for (i, v) in norm.values().iter().enumerate() {
            assert_abs_diff_eq!(v * stats.std + stats.mean, mag.values()[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn normalize_constant_grid_hits_floor_instead_of_exploding() {
        let mag = MagnitudeSpectrogram::from_values(vec![0.25; 12], 3, 4).unwrap();
        let (norm, stats) = normalize(&mag);
        assert_eq!(stats.std, WEIGHT_FLOOR);
        assert!(norm.values().iter().all(|v| v.abs() < 1e-6));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            /// Interior reconstruction is exact for any signal long enough
            /// to frame, not just the fixtures above.
            #[test]
            fn roundtrip_interior(seed in 0u64..1000, extra in 0usize..1000) {
                let cfg = StftConfig::default();
                let wav = random_waveform(seed, cfg.frame_len * 3 + extra);
                let spec = stft(&wav, &cfg).unwrap();
                let back = istft(&spec, &cfg, wav.sample_rate_hz).unwrap();
                for i in cfg.frame_len..back.len() - cfg.frame_len {
                    prop_assert!((back.samples[i] - wav.samples[i]).abs() < 1e-9);
                }
            }

            #[test]
            fn stft_output_is_finite(seed in 0u64..1000, len in 128usize..2000) {
                let wav = random_waveform(seed, len);
                let spec = stft(&wav, &StftConfig::default()).unwrap();
                prop_assert!(spec.values().iter().all(|v| v.re.is_finite() && v.im.is_finite()));
            }
        }
    }
}
