//! Mini-batch training of mask estimators on magnitude-spectrogram pairs.
//!
//! Each example keeps its full clean/noisy grids; the trainer cuts random
//! fixed-length runs of window positions ("segments") out of them once up
//! front, then visits the segment pool in a reshuffled order every epoch.
//! Batch members are evaluated in parallel on scratch clones of the
//! model and their gradients summed in index order, so a fixed seed gives
//! bit-identical weights no matter the thread count.

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use super::{adam_step, AdamState, Model, Tensor, TrainConfig};
use crate::dsp::{normalize, MagnitudeSpectrogram, NormalizationStats};
use crate::mask::compressed_mse_flat;
use crate::rand_util::{shuffle, uniform_index};
use crate::{par, Error, Result};

/// One utterance: raw clean and noisy magnitudes plus the noisy grid's
/// normalization statistics (model inputs are normalized per utterance;
/// the loss compares raw magnitudes).
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub clean_mag: MagnitudeSpectrogram,
    pub noisy_mag: MagnitudeSpectrogram,
    pub stats: NormalizationStats,
}

impl TrainExample {
    pub fn from_grids(
        clean_mag: MagnitudeSpectrogram,
        noisy_mag: MagnitudeSpectrogram,
    ) -> Result<Self> {
        if clean_mag.time_bins() != noisy_mag.time_bins()
            || clean_mag.freq_bins() != noisy_mag.freq_bins()
        {
            return Err(Error::DimensionMismatch(format!(
                "clean grid is {} x {} but noisy grid is {} x {}",
                clean_mag.time_bins(),
                clean_mag.freq_bins(),
                noisy_mag.time_bins(),
                noisy_mag.freq_bins()
            )));
        }
        let (_, stats) = normalize(&noisy_mag);
        Ok(TrainExample {
            clean_mag,
            noisy_mag,
            stats,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    example: usize,
    start: usize,
    len: usize,
}

/// Mean compressed-MSE per segment for one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Forward/backward over one segment on a scratch clone; returns the
/// summed loss and the flat parameter gradient.
fn eval_segment(
    model: &Model,
    dataset: &[TrainExample],
    seg: Segment,
    compression: f64,
) -> Result<(f64, Vec<f64>)> {
    let ctx = model.config().context;
    let (w_in, w_out) = (ctx.w_in, ctx.w_out);
    let f_bins = model.config().freq_bins;
    let ex = &dataset[seg.example];
    let l = seg.len;

    let mut input = Tensor::zeros(&[w_in, f_bins, l]);
    {
        let data = input.data_mut();
        let (mean, std) = (ex.stats.mean, ex.stats.std);
        for c in 0..w_in {
            for f in 0..f_bins {
                let row = &mut data[(c * f_bins + f) * l..(c * f_bins + f + 1) * l];
                for (j, v) in row.iter_mut().enumerate() {
                    *v = (ex.noisy_mag.at(seg.start + j + c, f) - mean) / std;
                }
            }
        }
    }

    // Targets and the raw noisy magnitudes the mask will scale. Output
    // channel c of a full-window model estimates bin (position + c); a
    // last-bin model estimates bin (position + w_in - 1).
    let mut target = vec![0.0; w_out * f_bins * l];
    let mut noisy_win = vec![0.0; w_out * f_bins * l];
    for c in 0..w_out {
        let offset = if w_out == 1 { w_in - 1 } else { c };
        for f in 0..f_bins {
            for j in 0..l {
                let t_bin = seg.start + j + offset;
                target[(c * f_bins + f) * l + j] = ex.clean_mag.at(t_bin, f);
                noisy_win[(c * f_bins + f) * l + j] = ex.noisy_mag.at(t_bin, f);
            }
        }
    }

    let mut scratch = model.clone();
    let out = scratch.forward(&input)?;
    let s_hat: Vec<f64> = out
        .data()
        .iter()
        .zip(&noisy_win)
        .map(|(&m, &y)| m * y)
        .collect();
    if s_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("estimated magnitudes became non-finite".into()));
    }
    let report = compressed_mse_flat(&s_hat, &target, compression)?;

    // dL/dmask = dL/d|S_hat| . |Y|
    let grad: Vec<f64> = report
        .gradient
        .iter()
        .zip(&noisy_win)
        .map(|(&g, &y)| g * y)
        .collect();
    let grad = Tensor::from_vec(&[w_out, f_bins, l], grad)?;
    scratch.zero_grads();
    scratch.backward(&grad)?;
    Ok((report.loss, scratch.flat_grads()))
}

/// Train in place. Returns one record per epoch; `epochs = 0` is a legal
/// no-op (the model keeps its initial weights).
pub fn train(
    model: &mut Model,
    dataset: &[TrainExample],
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training dataset is empty".into()));
    }
    let w_in = model.config().context.w_in;
    let f_bins = model.config().freq_bins;
    for (i, ex) in dataset.iter().enumerate() {
        if ex.noisy_mag.freq_bins() != f_bins {
            return Err(Error::DimensionMismatch(format!(
                "example {i} has {} frequency bins, model expects {f_bins}",
                ex.noisy_mag.freq_bins()
            )));
        }
        if ex.noisy_mag.time_bins() < w_in {
            return Err(Error::InputTooShort {
                got: ex.noisy_mag.time_bins(),
                need: w_in,
            });
        }
    }

    // Draw the segment pool once; epochs only reshuffle the visit order.
    let mut seg_rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    seg_rng.set_stream(1);
    let mut segments = Vec::with_capacity(dataset.len() * cfg.segments_per_example);
    for (ei, ex) in dataset.iter().enumerate() {
        let positions = ex.noisy_mag.time_bins() - w_in + 1;
        let len = cfg.segment_len.min(positions);
        for _ in 0..cfg.segments_per_example {
            let start = uniform_index(&mut seg_rng, positions - len + 1);
            segments.push(Segment {
                example: ei,
                start,
                len,
            });
        }
    }

    let mut order_rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(2);
    let mut order: Vec<usize> = (0..segments.len()).collect();

    let mut params = model.flat_params();
    let mut state = AdamState::new(params.len());
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        shuffle(&mut order_rng, &mut order);
        let mut epoch_loss = 0.0;

        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let locate = |msg: String| {
                Error::Numeric(format!("epoch {epoch}, batch {batch_idx}: {msg}"))
            };
            let results = par::map_indexed(batch.len(), 2, |i| {
                eval_segment(model, dataset, segments[batch[i]], cfg.compression)
            });

            let mut batch_loss = 0.0;
            let mut grads = vec![0.0; params.len()];
            for r in results {
                let (loss, g) = r.map_err(|e| locate(e.to_string()))?;
                batch_loss += loss;
                for (acc, v) in grads.iter_mut().zip(&g) {
                    *acc += v;
                }
            }
            if !batch_loss.is_finite() {
                return Err(locate(format!("loss {batch_loss}")));
            }
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grads {
                *g *= inv;
            }
            adam_step(&mut params, &grads, &mut state, cfg)?;
            model.set_flat_params(&params)?;
            epoch_loss += batch_loss;
        }

        let mean_loss = epoch_loss / segments.len() as f64;
        log::info!("epoch {epoch}: mean segment loss {mean_loss:.6}");
        log.push(EpochRecord { epoch, mean_loss });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::ContextWindowConfig;
    use crate::nn::{Architecture, ModelConfig};
    use crate::rand_util::uniform_01;

    fn tiny_config(w_in: usize, w_out: usize) -> ModelConfig {
        ModelConfig {
            architecture: Architecture::Cdae,
            context: ContextWindowConfig { w_in, w_out },
            freq_bins: 9,
            encoder_channels: vec![2, 3],
            kernel_freq: 3,
            stride_freq: 2,
            ..ModelConfig::default()
        }
    }

    /// Structured toy data: the clean grid carries energy only in the low
    /// bins while the noise floods everything, so a learnable mask exists.
    fn toy_dataset(n: usize, t_bins: usize) -> Vec<TrainExample> {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        (0..n)
            .map(|_| {
                let mut clean = vec![0.0; t_bins * 9];
                let mut noisy = vec![0.0; t_bins * 9];
                for t in 0..t_bins {
                    for f in 0..9 {
                        let s = if f < 4 { 0.8 + 0.4 * uniform_01(&mut rng) } else { 0.0 };
                        let nz = 0.3 + 0.1 * uniform_01(&mut rng);
                        clean[t * 9 + f] = s;
                        noisy[t * 9 + f] = s + nz;
                    }
                }
                TrainExample::from_grids(
                    MagnitudeSpectrogram::from_values(clean, t_bins, 9).unwrap(),
                    MagnitudeSpectrogram::from_values(noisy, t_bins, 9).unwrap(),
                )
                .unwrap()
            })
            .collect()
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 4,
            segment_len: 5,
            segments_per_example: 3,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn frozen_learning_rate_repeats_the_epoch_loss() {
        let dataset = toy_dataset(3, 20);
        let mut model = Model::new(tiny_config(3, 3)).unwrap();
        model.init_weights(1);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..quick_cfg()
        };
        let log = train(&mut model, &dataset, &cfg).unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log[0].mean_loss, log[1].mean_loss);
        assert_eq!(log[1].mean_loss, log[2].mean_loss);
    }

    #[test]
    fn fixed_seed_reproduces_weights_bit_for_bit() {
        let dataset = toy_dataset(3, 20);
        let run = |seed: u64| {
            let mut model = Model::new(tiny_config(3, 1)).unwrap();
            model.init_weights(5);
            let cfg = TrainConfig { seed, ..quick_cfg() };
            train(&mut model, &dataset, &cfg).unwrap();
            model.flat_params()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn loss_goes_down_on_learnable_toy_data() {
        let dataset = toy_dataset(4, 24);
        let mut model = Model::new(tiny_config(3, 3)).unwrap();
        model.init_weights(2);
        let cfg = TrainConfig {
            epochs: 25,
            learning_rate: 5e-3,
            batch_size: 6,
            segment_len: 6,
            segments_per_example: 4,
            seed: 3,
            ..TrainConfig::default()
        };
        let log = train(&mut model, &dataset, &cfg).unwrap();
        let first = log.first().unwrap().mean_loss;
        let last = log.last().unwrap().mean_loss;
        assert!(last < first, "loss did not improve: {first} -> {last}");
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let dataset = toy_dataset(2, 16);
        let mut model = Model::new(tiny_config(2, 2)).unwrap();
        model.init_weights(4);
        let before = model.flat_params();
        let cfg = TrainConfig { epochs: 0, ..quick_cfg() };
        let log = train(&mut model, &dataset, &cfg).unwrap();
        assert!(log.is_empty());
        assert_eq!(model.flat_params(), before);
    }

    #[test]
    fn non_finite_weights_abort_with_a_numeric_error() {
        let dataset = toy_dataset(2, 16);
        let mut model = Model::new(tiny_config(2, 2)).unwrap();
        model.init_weights(6);
        let mut params = model.flat_params();
        params[3] = f64::NAN;
        model.set_flat_params(&params).unwrap();
        let err = train(&mut model, &dataset, &quick_cfg()).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
    }

    #[test]
    fn sequences_shorter_than_the_window_are_rejected() {
        let dataset = toy_dataset(1, 4);
        let mut model = Model::new(tiny_config(8, 8)).unwrap();
        model.init_weights(1);
        let err = train(&mut model, &dataset, &quick_cfg()).unwrap_err();
        assert!(matches!(err, Error::InputTooShort { .. }));
    }

    #[test]
    fn windowed_training_matches_the_model_output_shape() {
        // w_out = w_in training must push a [w, F, L] gradient through;
        // reaching a finite loss on such a segment is the shape contract.
        let dataset = toy_dataset(1, 12);
        let seg = Segment {
            example: 0,
            start: 2,
            len: 4,
        };
        let mut model = Model::new(tiny_config(4, 4)).unwrap();
        model.init_weights(9);
        let (loss, grads) = eval_segment(&model, &dataset, seg, 0.3).unwrap();
        assert!(loss.is_finite() && loss > 0.0);
        assert_eq!(grads.len(), model.param_count());
    }

    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;
}
