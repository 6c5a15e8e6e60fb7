//! Ideal ratio masks, mask application, and the compressed-spectrum MSE
//! loss used to train mask estimators.
//!
//! A ratio mask is computed per time-frequency bin from the clean and
//! noise power,
//!
//! ```text
//! M(t, f) = ( |S(t,f)|^2 / (|S(t,f)|^2 + |N(t,f)|^2) )^beta,   0 < beta <= 1
//! ```
//!
//! and enhancement multiplies the noisy spectrum by the mask bin-wise,
//! keeping the noisy phase. Bins where speech and noise are both silent
//! are defined to be fully suppressed rather than left 0/0.

use crate::dsp::{ComplexSpectrogram, MagnitudeSpectrogram};
use crate::{Error, Result};

/// Bins whose total power falls below this are treated as silent and get
/// mask value 0.
pub const SILENCE_FLOOR: f64 = 1e-12;

/// Floor applied to the estimated magnitude inside the loss gradient so
/// the `c - 1 < 0` power stays finite at zero. The loss value itself is
/// computed from the unmodified magnitudes.
pub const GRAD_MAG_FLOOR: f64 = 1e-8;

/// Default spectral compression for the loss.
pub const DEFAULT_LOSS_COMPRESSION: f64 = 0.3;

/// Mask compression exponent, restricted to `(0, 1]`. `beta = 1` is the
/// plain power ratio; `beta = 0.5` (the default here) is the square-root
/// variant used for the oracle experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionBeta(f64);

impl CompressionBeta {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "mask compression beta must lie in (0, 1], got {beta}"
            )));
        }
        Ok(CompressionBeta(beta))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for CompressionBeta {
    fn default() -> Self {
        CompressionBeta(0.5)
    }
}

/// A per-bin ratio mask with every entry in `[0, 1]`, stored time-major
/// like the spectrogram types.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioMask {
    values: Vec<f64>,
    time_bins: usize,
    freq_bins: usize,
}

impl RatioMask {
    pub fn from_values(values: Vec<f64>, time_bins: usize, freq_bins: usize) -> Result<Self> {
        if values.len() != time_bins * freq_bins {
            return Err(Error::DimensionMismatch(format!(
                "mask needs {} values for {} x {} bins, got {}",
                time_bins * freq_bins,
                time_bins,
                freq_bins,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Numeric(format!("mask value {v} outside [0, 1]")));
        }
        Ok(RatioMask {
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

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.freq_bins..(t + 1) * self.freq_bins]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Oracle ratio mask from aligned clean-speech and noise spectra.
pub fn ideal_ratio_mask(
    speech: &ComplexSpectrogram,
    noise: &ComplexSpectrogram,
    beta: CompressionBeta,
) -> Result<RatioMask> {
    if speech.time_bins() != noise.time_bins() || speech.freq_bins() != noise.freq_bins() {
        return Err(Error::DimensionMismatch(format!(
            "speech is {} x {} but noise is {} x {}",
            speech.time_bins(),
            speech.freq_bins(),
            noise.time_bins(),
            noise.freq_bins()
        )));
    }
    let values = speech
        .values()
        .iter()
        .zip(noise.values())
        .map(|(s, n)| {
            let ps = s.norm_sqr();
            let pn = n.norm_sqr();
            if ps + pn < SILENCE_FLOOR {
                0.0
            } else {
                (ps / (ps + pn)).powf(beta.value())
            }
        })
        .collect();
    RatioMask::from_values(values, speech.time_bins(), speech.freq_bins())
}

/// Bin-wise product of mask and noisy spectrum. The mask only scales
/// magnitudes, so the enhanced spectrum keeps the noisy phase.
pub fn apply_mask(mask: &RatioMask, noisy: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
    if mask.time_bins() != noisy.time_bins() || mask.freq_bins() != noisy.freq_bins() {
        return Err(Error::DimensionMismatch(format!(
            "mask is {} x {} but spectrogram is {} x {}",
            mask.time_bins(),
            mask.freq_bins(),
            noisy.time_bins(),
            noisy.freq_bins()
        )));
    }
    let values = mask
        .values()
        .iter()
        .zip(noisy.values())
        .map(|(&m, y)| y * m)
        .collect();
    ComplexSpectrogram::from_values(values, noisy.time_bins(), noisy.freq_bins())
}

/// Loss value and its gradient with respect to the estimated magnitudes,
/// in the same flattened order as the inputs.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub loss: f64,
    pub gradient: Vec<f64>,
}

/// Compressed-spectrum squared error over flat magnitude buffers:
///
/// ```text
/// L = sum_i (est_i^c - target_i^c)^2
/// dL/dest_i = 2 (est_i^c - target_i^c) * c * max(est_i, 1e-8)^(c-1)
/// ```
///
/// The reduction is a plain sum over bins; callers decide how to average
/// (the trainer divides batch-summed losses by the batch size). The same
/// routine serves single grids and stacked context windows, since the
/// window axis just contributes more bins.
pub fn compressed_mse_flat(est: &[f64], target: &[f64], compression: f64) -> Result<LossReport> {
    if est.len() != target.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {} bins, target has {}",
            est.len(),
            target.len()
        )));
    }
    if !(compression > 0.0 && compression <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "loss compression must lie in (0, 1], got {compression}"
        )));
    }
    if let Some(v) = est.iter().chain(target).find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "magnitudes must be finite and non-negative, got {v}"
        )));
    }
    let c = compression;
    let mut loss = 0.0;
    let mut gradient = Vec::with_capacity(est.len());
    for (&e, &t) in est.iter().zip(target) {
        let diff = e.powf(c) - t.powf(c);
        loss += diff * diff;
        gradient.push(2.0 * diff * c * e.max(GRAD_MAG_FLOOR).powf(c - 1.0));
    }
    Ok(LossReport { loss, gradient })
}

/// [`compressed_mse_flat`] over magnitude grids with a shape check.
pub fn compressed_mse(
    est: &MagnitudeSpectrogram,
    target: &MagnitudeSpectrogram,
    compression: f64,
) -> Result<LossReport> {
    if est.time_bins() != target.time_bins() || est.freq_bins() != target.freq_bins() {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {} x {} but target is {} x {}",
            est.time_bins(),
            est.freq_bins(),
            target.time_bins(),
            target.freq_bins()
        )));
    }
    compressed_mse_flat(est.values(), target.values(), compression)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::ComplexSpectrogram;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn spec_from(values: &[(f64, f64)], t: usize, f: usize) -> ComplexSpectrogram {
        let v = values.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
        ComplexSpectrogram::from_values(v, t, f).unwrap()
    }

    #[test]
    fn irm_is_one_on_noise_free_bins() {
        for beta in [0.25, 0.5, 1.0] {
            let s = spec_from(&[(0.7, -0.3)], 1, 1);
            let n = spec_from(&[(0.0, 0.0)], 1, 1);
            let m = ideal_ratio_mask(&s, &n, CompressionBeta::new(beta).unwrap()).unwrap();
            assert_abs_diff_eq!(m.at(0, 0), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn irm_is_half_for_equal_power_at_beta_one() {
        let s = spec_from(&[(0.5, 0.5)], 1, 1);
        let n = spec_from(&[(-0.5, 0.5)], 1, 1);
        let m = ideal_ratio_mask(&s, &n, CompressionBeta::new(1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(m.at(0, 0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn irm_spot_value_at_beta_half() {
        // |S|^2 = 3, |N|^2 = 1 -> (3/4)^0.5 = 0.86602540...
        let s = spec_from(&[(3.0f64.sqrt(), 0.0)], 1, 1);
        let n = spec_from(&[(1.0, 0.0)], 1, 1);
        let m = ideal_ratio_mask(&s, &n, CompressionBeta::default()).unwrap();
        assert_abs_diff_eq!(m.at(0, 0), 0.866_025_403_784_438_6, epsilon = 1e-12);
    }

    #[test]
    fn irm_silent_bins_are_fully_suppressed() {
        let s = spec_from(&[(0.0, 0.0), (1e-8, 0.0)], 1, 2);
        let n = spec_from(&[(0.0, 0.0), (0.0, 0.0)], 1, 2);
        let m = ideal_ratio_mask(&s, &n, CompressionBeta::default()).unwrap();
        assert_eq!(m.at(0, 0), 0.0);
        // 1e-16 total power is still below the silence floor.
        assert_eq!(m.at(0, 1), 0.0);
    }

    #[test]
    fn beta_outside_unit_interval_is_rejected() {
        assert!(CompressionBeta::new(0.0).is_err());
        assert!(CompressionBeta::new(-0.5).is_err());
        assert!(CompressionBeta::new(1.5).is_err());
        assert!(CompressionBeta::new(f64::NAN).is_err());
        assert!(CompressionBeta::new(1.0).is_ok());
    }

    #[test]
    fn apply_mask_scales_magnitude_and_keeps_phase() {
        let y = spec_from(&[(0.6, -0.8), (-1.0, 2.0)], 1, 2);
        let m = RatioMask::from_values(vec![0.25, 0.75], 1, 2).unwrap();
        let s_hat = apply_mask(&m, &y).unwrap();
        for f in 0..2 {
            let before = y.at(0, f);
            let after = s_hat.at(0, f);
            assert_abs_diff_eq!(after.norm(), m.at(0, f) * before.norm(), epsilon = 1e-15);
            assert_abs_diff_eq!(after.arg(), before.arg(), epsilon = 1e-15);
        }
    }

    #[test]
    fn mask_values_outside_unit_interval_are_rejected() {
        assert!(RatioMask::from_values(vec![0.0, 1.0], 1, 2).is_ok());
        assert!(RatioMask::from_values(vec![1.0 + 1e-9], 1, 1).is_err());
        assert!(RatioMask::from_values(vec![-0.1], 1, 1).is_err());
        assert!(RatioMask::from_values(vec![f64::NAN], 1, 1).is_err());
    }

    #[test]
    fn loss_is_zero_iff_estimates_match() {
        let est = vec![0.3, 1.2, 0.0, 5.0];
        let report = compressed_mse_flat(&est, &est, 0.3).unwrap();
        assert_eq!(report.loss, 0.0);
        assert!(report.gradient.iter().all(|&g| g == 0.0));

        let other = vec![0.3, 1.2, 0.0, 5.1];
        assert!(compressed_mse_flat(&est, &other, 0.3).unwrap().loss > 0.0);
    }

    #[test]
    fn loss_gradient_matches_central_differences() {
        // Magnitudes comfortably above the gradient floor so the clamp is
        // inactive and the analytic form is the true derivative.
        let est = vec![0.11, 0.9, 2.3, 0.47, 1.05, 0.2];
        let target = vec![0.5, 0.85, 1.9, 0.02, 1.05, 0.6];
        let c = 0.3;
        let report = compressed_mse_flat(&est, &target, c).unwrap();

        let h = 1e-6;
        for i in 0..est.len() {
            let mut plus = est.clone();
            let mut minus = est.clone();
            plus[i] += h;
            minus[i] -= h;
            let lp = compressed_mse_flat(&plus, &target, c).unwrap().loss;
            let lm = compressed_mse_flat(&minus, &target, c).unwrap().loss;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (report.gradient[i] - fd).abs() / fd.abs().max(1e-8);
            assert!(
                rel < 1e-4,
                "bin {i}: analytic {} vs fd {fd}",
                report.gradient[i]
            );
        }
    }

    #[test]
    fn loss_spot_value_on_a_unit_bin() {
        // est 1, target 0, c = 0.3: loss (1 - 0)^2 = 1 and gradient
        // 2 * 1 * 0.3 * 1^(c-1) = 0.6.
        let report = compressed_mse_flat(&[1.0], &[0.0], 0.3).unwrap();
        assert_abs_diff_eq!(report.loss, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(report.gradient[0], 0.6, epsilon = 1e-15);
    }

    #[test]
    fn negative_magnitudes_are_rejected() {
        assert!(compressed_mse_flat(&[-0.1], &[0.0], 0.3).is_err());
        assert!(compressed_mse_flat(&[0.1], &[-0.4], 0.3).is_err());
        assert!(compressed_mse_flat(&[f64::NAN], &[0.0], 0.3).is_err());
    }

    #[test]
    fn oracle_mask_shrinks_spectral_error_against_noisy_baseline() {
        // Random mixture Y = S + N; the beta = 1 oracle mask must leave
        // |M . Y| closer to |S| than |Y| is, in Frobenius norm.
        use rand_chacha::ChaCha20Rng;
        use rand_core::{RngCore, SeedableRng};
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let mut unit = move || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5;

        let (t, f) = (6, 5);
        let s_vals: Vec<Complex64> = (0..t * f).map(|_| Complex64::new(unit(), unit())).collect();
        let n_vals: Vec<Complex64> = (0..t * f).map(|_| Complex64::new(unit(), unit())).collect();
        let y_vals: Vec<Complex64> = s_vals.iter().zip(&n_vals).map(|(a, b)| a + b).collect();
        let s = ComplexSpectrogram::from_values(s_vals, t, f).unwrap();
        let n = ComplexSpectrogram::from_values(n_vals, t, f).unwrap();
        let y = ComplexSpectrogram::from_values(y_vals, t, f).unwrap();

        let m = ideal_ratio_mask(&s, &n, CompressionBeta::new(1.0).unwrap()).unwrap();
        let s_hat = apply_mask(&m, &y).unwrap();

        let frob = |a: &ComplexSpectrogram| -> f64 {
            a.values()
                .iter()
                .zip(s.values())
                .map(|(x, r)| (x.norm() - r.norm()).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        assert!(frob(&s_hat) < frob(&y));
    }

    #[test]
    fn gradient_stays_finite_at_zero_magnitude() {
        let report = compressed_mse_flat(&[0.0], &[1.0], 0.3).unwrap();
        assert!(report.gradient[0].is_finite());
        // Pulling the estimate up towards the target: negative gradient.
        assert!(report.gradient[0] < 0.0);
    }

    #[test]
    fn loss_sums_over_stacked_windows() {
        // The windowed variant is the same reduction over a longer buffer.
        let a = vec![0.2, 0.4, 0.8];
        let b = vec![0.1, 0.9, 0.5];
        let ta = vec![0.3, 0.3, 0.3];
        let tb = vec![0.6, 0.6, 0.6];
        let separate = compressed_mse_flat(&a, &ta, 0.3).unwrap().loss
            + compressed_mse_flat(&b, &tb, 0.3).unwrap().loss;
        let stacked = compressed_mse_flat(
            &[a, b].concat(),
            &[ta, tb].concat(),
            0.3,
        )
        .unwrap()
        .loss;
        assert_abs_diff_eq!(separate, stacked, epsilon = 1e-15);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            /// Masks land in [0, 1] for any finite spectra and admissible beta.
            #[test]
            fn irm_in_unit_interval(
                sr in -10.0f64..10.0, si in -10.0f64..10.0,
                nr in -10.0f64..10.0, ni in -10.0f64..10.0,
                beta in 0.01f64..1.0,
            ) {
                let s = spec_from(&[(sr, si)], 1, 1);
                let n = spec_from(&[(nr, ni)], 1, 1);
                let m = ideal_ratio_mask(&s, &n, CompressionBeta::new(beta).unwrap()).unwrap();
                prop_assert!((0.0..=1.0).contains(&m.at(0, 0)));
            }

            /// More speech power can only raise the mask.
            #[test]
            fn irm_monotone_in_speech_power(
                ps in 0.0f64..10.0, extra in 0.0f64..10.0, pn in 0.001f64..10.0,
                beta in 0.01f64..1.0,
            ) {
                let n = spec_from(&[(pn.sqrt(), 0.0)], 1, 1);
                let beta = CompressionBeta::new(beta).unwrap();
                let lo = ideal_ratio_mask(&spec_from(&[(ps.sqrt(), 0.0)], 1, 1), &n, beta).unwrap();
                let hi = ideal_ratio_mask(
                    &spec_from(&[((ps + extra).sqrt(), 0.0)], 1, 1), &n, beta).unwrap();
                prop_assert!(hi.at(0, 0) >= lo.at(0, 0) - 1e-15);
            }

            /// Smaller beta lifts the mask: x^b is increasing in b for x in (0,1).
            #[test]
            fn smaller_beta_gives_larger_mask(
                ps in 0.001f64..10.0, pn in 0.001f64..10.0,
            ) {
                let s = spec_from(&[(ps.sqrt(), 0.0)], 1, 1);
                let n = spec_from(&[(pn.sqrt(), 0.0)], 1, 1);
                let half = ideal_ratio_mask(&s, &n, CompressionBeta::new(0.5).unwrap()).unwrap();
                let one = ideal_ratio_mask(&s, &n, CompressionBeta::new(1.0).unwrap()).unwrap();
                prop_assert!(half.at(0, 0) >= one.at(0, 0) - 1e-15);
            }
        }
    }
}
