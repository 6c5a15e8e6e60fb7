//! The layer zoo: frequency-only convolutions (plain and transposed),
//! ReLU, sigmoid, a unidirectional LSTM and a per-step fully connected
//! layer. Each layer caches what its backward pass needs, accumulates
//! parameter gradients into its own buffers, and returns the gradient
//! with respect to its input.
//!
//! Convolutions slide over the frequency axis only and are applied
//! independently to every time column; context frames enter as channels.
//! Half padding `(kernel - 1) / 2` is applied implicitly on both
//! frequency edges.
//!
//! All loops run the time axis innermost over contiguous rows. Channel
//! loops fan out across threads for large tensors; every write chunk is
//! disjoint and every reduction has a fixed order, so results do not
//! depend on the thread count.

use rand_chacha::ChaCha20Rng;

use super::Tensor;
use crate::rand_util::uniform_01;
use crate::{par, Error, Result};

/// Minimum number of output elements before a layer loop moves onto the
/// thread pool.
const PAR_MIN: usize = 32 * 1024;

fn glorot(rng: &mut ChaCha20Rng, fan_in: usize, fan_out: usize, out: &mut [f64]) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for w in out {
        *w = (2.0 * uniform_01(rng) - 1.0) * limit;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn backward_before_forward() -> Error {
    Error::InvalidArgument("backward called before forward".into())
}

/// 1-D convolution over frequency, per time column, context frames as
/// channels. Weights are `[out_ch][in_ch][kernel]`.
#[derive(Debug, Clone)]
pub struct ConvFreq {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    grad_weights: Vec<f64>,
    grad_bias: Vec<f64>,
    cached_input: Option<Tensor>,
}

impl ConvFreq {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        let n = out_channels * in_channels * kernel;
        ConvFreq {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad: (kernel - 1) / 2,
            weights: vec![0.0; n],
            bias: vec![0.0; out_channels],
            grad_weights: vec![0.0; n],
            grad_bias: vec![0.0; out_channels],
            cached_input: None,
        }
    }

    pub fn out_freq(&self, in_freq: usize) -> Result<usize> {
        let span = in_freq + 2 * self.pad;
        if span < self.kernel {
            return Err(Error::DimensionMismatch(format!(
                "conv kernel {} does not fit {} frequency bins (pad {})",
                self.kernel, in_freq, self.pad
            )));
        }
        Ok((span - self.kernel) / self.stride + 1)
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        let (c, f, t) = x.dims3();
        if c != self.in_channels {
            return Err(Error::DimensionMismatch(format!(
                "conv expects {} input channels, got {}",
                self.in_channels, c
            )));
        }
        Ok((c, f, t))
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (c_in, f_in, t_len) = self.check_input(x)?;
        let f_out = self.out_freq(f_in)?;
        let mut out = Tensor::zeros(&[self.out_channels, f_out, t_len]);
        let (weights, bias, k, s, p) = (&self.weights, &self.bias, self.kernel, self.stride, self.pad);
        let xd = x.data();
        par::for_each_chunk_mut(out.data_mut(), f_out * t_len, PAR_MIN, |co, chunk| {
            for fo in 0..f_out {
                let row = &mut chunk[fo * t_len..(fo + 1) * t_len];
                row.fill(bias[co]);
                for ci in 0..c_in {
                    for j in 0..k {
                        let fi = fo * s + j;
                        if fi < p || fi - p >= f_in {
                            continue;
                        }
                        let w = weights[(co * c_in + ci) * k + j];
                        let xrow = &xd[(ci * f_in + fi - p) * t_len..][..t_len];
                        for (r, &v) in row.iter_mut().zip(xrow) {
                            *r += w * v;
                        }
                    }
                }
            }
        });
        self.cached_input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, gout: &Tensor) -> Result<Tensor> {
        let x = self.cached_input.as_ref().ok_or_else(backward_before_forward)?;
        let (c_in, f_in, t_len) = x.dims3();
        let f_out = self.out_freq(f_in)?;
        if gout.shape() != [self.out_channels, f_out, t_len] {
            return Err(Error::DimensionMismatch(format!(
                "conv backward got shape {:?}, expected [{}, {}, {}]",
                gout.shape(),
                self.out_channels,
                f_out,
                t_len
            )));
        }
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        let gd = gout.data();
        let xd = x.data();

        for co in 0..self.out_channels {
            self.grad_bias[co] += gd[co * f_out * t_len..(co + 1) * f_out * t_len]
                .iter()
                .sum::<f64>();
        }

        par::for_each_chunk_mut(&mut self.grad_weights, c_in * k, PAR_MIN, |co, gw| {
            for ci in 0..c_in {
                for j in 0..k {
                    let mut acc = 0.0;
                    for fo in 0..f_out {
                        let fi = fo * s + j;
                        if fi < p || fi - p >= f_in {
                            continue;
                        }
                        let grow = &gd[(co * f_out + fo) * t_len..][..t_len];
                        let xrow = &xd[(ci * f_in + fi - p) * t_len..][..t_len];
                        acc += grow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    gw[ci * k + j] += acc;
                }
            }
        });

        let mut gin = Tensor::zeros(&[c_in, f_in, t_len]);
        let (weights, c_out) = (&self.weights, self.out_channels);
        par::for_each_chunk_mut(gin.data_mut(), f_in * t_len, PAR_MIN, |ci, chunk| {
            for co in 0..c_out {
                for fo in 0..f_out {
                    let grow = &gd[(co * f_out + fo) * t_len..][..t_len];
                    for j in 0..k {
                        let fi = fo * s + j;
                        if fi < p || fi - p >= f_in {
                            continue;
                        }
                        let w = weights[(co * c_in + ci) * k + j];
                        let row = &mut chunk[(fi - p) * t_len..][..t_len];
                        for (r, &g) in row.iter_mut().zip(grow) {
                            *r += w * g;
                        }
                    }
                }
            }
        });
        Ok(gin)
    }
}

/// Transposed frequency convolution (the decoder counterpart): output
/// extent `(f_in - 1) * stride + kernel - 2 * pad`. Weights are
/// `[in_ch][out_ch][kernel]`.
#[derive(Debug, Clone)]
pub struct ConvTransposedFreq {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    grad_weights: Vec<f64>,
    grad_bias: Vec<f64>,
    cached_input: Option<Tensor>,
}

impl ConvTransposedFreq {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        let n = in_channels * out_channels * kernel;
        ConvTransposedFreq {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad: (kernel - 1) / 2,
            weights: vec![0.0; n],
            bias: vec![0.0; out_channels],
            grad_weights: vec![0.0; n],
            grad_bias: vec![0.0; out_channels],
            cached_input: None,
        }
    }

    pub fn out_freq(&self, in_freq: usize) -> Result<usize> {
        let raw = (in_freq - 1) * self.stride + self.kernel;
        if raw <= 2 * self.pad {
            return Err(Error::DimensionMismatch(format!(
                "transposed conv collapses {in_freq} frequency bins to nothing"
            )));
        }
        Ok(raw - 2 * self.pad)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (c_in, f_in, t_len) = x.dims3();
        if c_in != self.in_channels {
            return Err(Error::DimensionMismatch(format!(
                "transposed conv expects {} input channels, got {}",
                self.in_channels, c_in
            )));
        }
        let f_out = self.out_freq(f_in)?;
        let mut out = Tensor::zeros(&[self.out_channels, f_out, t_len]);
        let (weights, bias, k, s, p, c_out) = (
            &self.weights,
            &self.bias,
            self.kernel,
            self.stride,
            self.pad,
            self.out_channels,
        );
        let xd = x.data();
        par::for_each_chunk_mut(out.data_mut(), f_out * t_len, PAR_MIN, |co, chunk| {
            for row in chunk.chunks_mut(t_len) {
                row.fill(bias[co]);
            }
            for ci in 0..c_in {
                for fi in 0..f_in {
                    let xrow = &xd[(ci * f_in + fi) * t_len..][..t_len];
                    for j in 0..k {
                        let fo = fi * s + j;
                        if fo < p || fo - p >= f_out {
                            continue;
                        }
                        let w = weights[(ci * c_out + co) * k + j];
                        let row = &mut chunk[(fo - p) * t_len..][..t_len];
                        for (r, &v) in row.iter_mut().zip(xrow) {
                            *r += w * v;
                        }
                    }
                }
            }
        });
        self.cached_input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, gout: &Tensor) -> Result<Tensor> {
        let x = self.cached_input.as_ref().ok_or_else(backward_before_forward)?;
        let (c_in, f_in, t_len) = x.dims3();
        let f_out = self.out_freq(f_in)?;
        if gout.shape() != [self.out_channels, f_out, t_len] {
            return Err(Error::DimensionMismatch(format!(
                "transposed conv backward got shape {:?}, expected [{}, {}, {}]",
                gout.shape(),
                self.out_channels,
                f_out,
                t_len
            )));
        }
        let (k, s, p, c_out) = (self.kernel, self.stride, self.pad, self.out_channels);
        let gd = gout.data();
        let xd = x.data();

        for co in 0..c_out {
            self.grad_bias[co] += gd[co * f_out * t_len..(co + 1) * f_out * t_len]
                .iter()
                .sum::<f64>();
        }

        par::for_each_chunk_mut(&mut self.grad_weights, c_out * k, PAR_MIN, |ci, gw| {
            for co in 0..c_out {
                for j in 0..k {
                    let mut acc = 0.0;
                    for fi in 0..f_in {
                        let fo = fi * s + j;
                        if fo < p || fo - p >= f_out {
                            continue;
                        }
                        let xrow = &xd[(ci * f_in + fi) * t_len..][..t_len];
                        let grow = &gd[(co * f_out + fo - p) * t_len..][..t_len];
                        acc += xrow.iter().zip(grow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    gw[co * k + j] += acc;
                }
            }
        });

        let mut gin = Tensor::zeros(&[c_in, f_in, t_len]);
        let weights = &self.weights;
        par::for_each_chunk_mut(gin.data_mut(), f_in * t_len, PAR_MIN, |ci, chunk| {
            for co in 0..c_out {
                for fi in 0..f_in {
                    let row = &mut chunk[fi * t_len..(fi + 1) * t_len];
                    for j in 0..k {
                        let fo = fi * s + j;
                        if fo < p || fo - p >= f_out {
                            continue;
                        }
                        let w = weights[(ci * c_out + co) * k + j];
                        let grow = &gd[(co * f_out + fo - p) * t_len..][..t_len];
                        for (r, &g) in row.iter_mut().zip(grow) {
                            *r += w * g;
                        }
                    }
                }
            }
        });
        Ok(gin)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    cached_input: Option<Tensor>,
}

impl Relu {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        self.cached_input = Some(x.clone());
        x.map(|v| v.max(0.0))
    }

    pub fn backward(&mut self, gout: &Tensor) -> Result<Tensor> {
        let x = self.cached_input.as_ref().ok_or_else(backward_before_forward)?;
        if x.shape() != gout.shape() {
            return Err(Error::DimensionMismatch("relu backward shape".into()));
        }
        let mut gin = gout.clone();
        for (g, &v) in gin.data_mut().iter_mut().zip(x.data()) {
            if v <= 0.0 {
                *g = 0.0;
            }
        }
        Ok(gin)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid {
    cached_output: Option<Tensor>,
}

impl Sigmoid {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let y = x.map(sigmoid);
        self.cached_output = Some(y.clone());
        y
    }

    pub fn backward(&mut self, gout: &Tensor) -> Result<Tensor> {
        let y = self.cached_output.as_ref().ok_or_else(backward_before_forward)?;
        if y.shape() != gout.shape() {
            return Err(Error::DimensionMismatch("sigmoid backward shape".into()));
        }
        let mut gin = gout.clone();
        for (g, &v) in gin.data_mut().iter_mut().zip(y.data()) {
            *g *= v * (1.0 - v);
        }
        Ok(gin)
    }
}

struct LstmCache {
    in_channels: usize,
    in_freq: usize,
    t_len: usize,
    xs: Vec<f64>,      // [T][D] gathered input columns
    gates: Vec<f64>,   // [T][4H] post-activation, gate order i, f, g, o
    cells: Vec<f64>,   // [T][H]
    tanh_c: Vec<f64>,  // [T][H]
    hiddens: Vec<f64>, // [T][H]
}

/// Unidirectional LSTM over the time axis. The `[C, F, T]` input is read
/// as `D = C * F` features per time step; output is `[H, 1, T]`. Running
/// strictly forward preserves the causality story — nothing flows from
/// later bins to earlier ones. Forget-gate biases start at 1.
pub struct Lstm {
    input_dim: usize,
    units: usize,
    w_x: Vec<f64>, // [4H][D]
    w_h: Vec<f64>, // [4H][H]
    bias: Vec<f64>,
    grad_w_x: Vec<f64>,
    grad_w_h: Vec<f64>,
    grad_bias: Vec<f64>,
    cache: Option<LstmCache>,
}

impl Clone for Lstm {
    fn clone(&self) -> Self {
        // Activation caches are per-pass scratch; clones start clean.
        Lstm {
            input_dim: self.input_dim,
            units: self.units,
            w_x: self.w_x.clone(),
            w_h: self.w_h.clone(),
            bias: self.bias.clone(),
            grad_w_x: self.grad_w_x.clone(),
            grad_w_h: self.grad_w_h.clone(),
            grad_bias: self.grad_bias.clone(),
            cache: None,
        }
    }
}

impl std::fmt::Debug for Lstm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Lstm")
            .field("input_dim", &self.input_dim)
            .field("units", &self.units)
            .finish()
    }
}

impl Lstm {
    pub fn new(input_dim: usize, units: usize) -> Self {
        Lstm {
            input_dim,
            units,
            w_x: vec![0.0; 4 * units * input_dim],
            w_h: vec![0.0; 4 * units * units],
            bias: vec![0.0; 4 * units],
            grad_w_x: vec![0.0; 4 * units * input_dim],
            grad_w_h: vec![0.0; 4 * units * units],
            grad_bias: vec![0.0; 4 * units],
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (c, f, t_len) = x.dims3();
        let d = self.input_dim;
        if c * f != d {
            return Err(Error::DimensionMismatch(format!(
                "lstm expects {} features, got {} x {} = {}",
                d,
                c,
                f,
                c * f
            )));
        }
        let h = self.units;
        let mut xs = vec![0.0; t_len * d];
        for di in 0..d {
            let row = x.row(di);
            for (ti, &v) in row.iter().enumerate() {
                xs[ti * d + di] = v;
            }
        }

        let mut gates = vec![0.0; t_len * 4 * h];
        let mut cells = vec![0.0; t_len * h];
        let mut tanh_c = vec![0.0; t_len * h];
        let mut hiddens = vec![0.0; t_len * h];
        let mut a = vec![0.0; 4 * h];

        for ti in 0..t_len {
            let x_t = &xs[ti * d..(ti + 1) * d];
            for r in 0..4 * h {
                let mut acc = self.bias[r];
                let wx = &self.w_x[r * d..(r + 1) * d];
                for (w, &v) in wx.iter().zip(x_t) {
                    acc += w * v;
                }
                if ti > 0 {
                    let wh = &self.w_h[r * h..(r + 1) * h];
                    let h_prev = &hiddens[(ti - 1) * h..ti * h];
                    for (w, &v) in wh.iter().zip(h_prev) {
                        acc += w * v;
                    }
                }
                a[r] = acc;
            }
            for j in 0..h {
                let i_g = sigmoid(a[j]);
                let f_g = sigmoid(a[h + j]);
                let g_g = a[2 * h + j].tanh();
                let o_g = sigmoid(a[3 * h + j]);
                let c_prev = if ti > 0 { cells[(ti - 1) * h + j] } else { 0.0 };
                let c_t = f_g * c_prev + i_g * g_g;
                let tc = c_t.tanh();
                gates[ti * 4 * h + j] = i_g;
                gates[ti * 4 * h + h + j] = f_g;
                gates[ti * 4 * h + 2 * h + j] = g_g;
                gates[ti * 4 * h + 3 * h + j] = o_g;
                cells[ti * h + j] = c_t;
                tanh_c[ti * h + j] = tc;
                hiddens[ti * h + j] = o_g * tc;
            }
        }

        let mut out = Tensor::zeros(&[h, 1, t_len]);
        for j in 0..h {
            for ti in 0..t_len {
                out.data_mut()[j * t_len + ti] = hiddens[ti * h + j];
            }
        }
        self.cache = Some(LstmCache {
            in_channels: c,
            in_freq: f,
            t_len,
            xs,
            gates,
            cells,
            tanh_c,
            hiddens,
        });
        Ok(out)
    }

    pub fn backward(&mut self, gout: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or_else(backward_before_forward)?;
        let (d, h, t_len) = (self.input_dim, self.units, cache.t_len);
        if gout.shape() != [h, 1, t_len] {
            return Err(Error::DimensionMismatch(format!(
                "lstm backward got shape {:?}, expected [{h}, 1, {t_len}]",
                gout.shape()
            )));
        }
        let gd = gout.data();
        let mut gin = Tensor::zeros(&[cache.in_channels, cache.in_freq, t_len]);
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut da = vec![0.0; 4 * h];

        for ti in (0..t_len).rev() {
            for j in 0..h {
                let dh = gd[j * t_len + ti] + dh_next[j];
                let i_g = cache.gates[ti * 4 * h + j];
                let f_g = cache.gates[ti * 4 * h + h + j];
                let g_g = cache.gates[ti * 4 * h + 2 * h + j];
                let o_g = cache.gates[ti * 4 * h + 3 * h + j];
                let tc = cache.tanh_c[ti * h + j];
                let c_prev = if ti > 0 { cache.cells[(ti - 1) * h + j] } else { 0.0 };

                let dc = dh * o_g * (1.0 - tc * tc) + dc_next[j];
                da[j] = dc * g_g * i_g * (1.0 - i_g);
                da[h + j] = dc * c_prev * f_g * (1.0 - f_g);
                da[2 * h + j] = dc * i_g * (1.0 - g_g * g_g);
                da[3 * h + j] = dh * tc * o_g * (1.0 - o_g);
                dc_next[j] = dc * f_g;
            }

            let x_t = &cache.xs[ti * d..(ti + 1) * d];
            for r in 0..4 * h {
                let a = da[r];
                self.grad_bias[r] += a;
                let gwx = &mut self.grad_w_x[r * d..(r + 1) * d];
                for (g, &v) in gwx.iter_mut().zip(x_t) {
                    *g += a * v;
                }
                if ti > 0 {
                    let h_prev = &cache.hiddens[(ti - 1) * h..ti * h];
                    let gwh = &mut self.grad_w_h[r * h..(r + 1) * h];
                    for (g, &v) in gwh.iter_mut().zip(h_prev) {
                        *g += a * v;
                    }
                }
            }

            for di in 0..d {
                let mut acc = 0.0;
                for r in 0..4 * h {
                    acc += self.w_x[r * d + di] * da[r];
                }
                gin.data_mut()[di * t_len + ti] = acc;
            }
            for j in 0..h {
                let mut acc = 0.0;
                for r in 0..4 * h {
                    acc += self.w_h[r * h + j] * da[r];
                }
                dh_next[j] = acc;
            }
        }
        Ok(gin)
    }
}

/// Per-time-step affine map `D -> U`, reshaping the output back to
/// `[out_channels, out_freq, T]` so a decoder can follow.
#[derive(Debug, Clone)]
pub struct FullyConnected {
    input_dim: usize,
    units: usize,
    out_channels: usize,
    out_freq: usize,
    weights: Vec<f64>, // [U][D]
    bias: Vec<f64>,
    grad_weights: Vec<f64>,
    grad_bias: Vec<f64>,
    cached_input: Option<Tensor>,
}

impl FullyConnected {
    pub fn new(input_dim: usize, out_channels: usize, out_freq: usize) -> Self {
        let units = out_channels * out_freq;
        FullyConnected {
            input_dim,
            units,
            out_channels,
            out_freq,
            weights: vec![0.0; units * input_dim],
            bias: vec![0.0; units],
            grad_weights: vec![0.0; units * input_dim],
            grad_bias: vec![0.0; units],
            cached_input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (c, f, t_len) = x.dims3();
        let d = self.input_dim;
        if c * f != d {
            return Err(Error::DimensionMismatch(format!(
                "fully-connected expects {} features, got {}",
                d,
                c * f
            )));
        }
        let mut out = Tensor::zeros(&[self.out_channels, self.out_freq, t_len]);
        let (weights, bias) = (&self.weights, &self.bias);
        let xd = x.data();
        par::for_each_chunk_mut(out.data_mut(), t_len, PAR_MIN, |u, row| {
            row.fill(bias[u]);
            for di in 0..d {
                let w = weights[u * d + di];
                let xrow = &xd[di * t_len..(di + 1) * t_len];
                for (r, &v) in row.iter_mut().zip(xrow) {
                    *r += w * v;
                }
            }
        });
        self.cached_input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, gout: &Tensor) -> Result<Tensor> {
        let x = self.cached_input.as_ref().ok_or_else(backward_before_forward)?;
        let (c, f, t_len) = x.dims3();
        let d = self.input_dim;
        if gout.shape() != [self.out_channels, self.out_freq, t_len] {
            return Err(Error::DimensionMismatch(format!(
                "fully-connected backward got shape {:?}, expected [{}, {}, {}]",
                gout.shape(),
                self.out_channels,
                self.out_freq,
                t_len
            )));
        }
        let gd = gout.data();
        let xd = x.data();

        for u in 0..self.units {
            self.grad_bias[u] += gd[u * t_len..(u + 1) * t_len].iter().sum::<f64>();
        }
        par::for_each_chunk_mut(&mut self.grad_weights, d, PAR_MIN, |u, gw| {
            let grow = &gd[u * t_len..(u + 1) * t_len];
            for (di, g) in gw.iter_mut().enumerate() {
                let xrow = &xd[di * t_len..(di + 1) * t_len];
                *g += grow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
            }
        });

        let mut gin = Tensor::zeros(&[c, f, t_len]);
        let (weights, units) = (&self.weights, self.units);
        par::for_each_chunk_mut(gin.data_mut(), t_len, PAR_MIN, |di, row| {
            for u in 0..units {
                let w = weights[u * d + di];
                let grow = &gd[u * t_len..(u + 1) * t_len];
                for (r, &g) in row.iter_mut().zip(grow) {
                    *r += w * g;
                }
            }
        });
        Ok(gin)
    }
}

/// A layer in a sequential model.
#[derive(Debug, Clone)]
pub enum Layer {
    Conv(ConvFreq),
    ConvT(ConvTransposedFreq),
    Relu(Relu),
    Sigmoid(Sigmoid),
    Lstm(Lstm),
    Fc(FullyConnected),
}

impl Layer {
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv(l) => l.forward(x),
            Layer::ConvT(l) => l.forward(x),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::Sigmoid(l) => Ok(l.forward(x)),
            Layer::Lstm(l) => l.forward(x),
            Layer::Fc(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, gout: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv(l) => l.backward(gout),
            Layer::ConvT(l) => l.backward(gout),
            Layer::Relu(l) => l.backward(gout),
            Layer::Sigmoid(l) => l.backward(gout),
            Layer::Lstm(l) => l.backward(gout),
            Layer::Fc(l) => l.backward(gout),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv(l) => l.weights.len() + l.bias.len(),
            Layer::ConvT(l) => l.weights.len() + l.bias.len(),
            Layer::Relu(_) | Layer::Sigmoid(_) => 0,
            Layer::Lstm(l) => l.w_x.len() + l.w_h.len() + l.bias.len(),
            Layer::Fc(l) => l.weights.len() + l.bias.len(),
        }
    }

    /// Parameters in declaration order (weights before biases; for the
    /// LSTM: input weights, recurrent weights, biases). Checkpoints rely
    /// on this ordering.
    pub fn append_params(&self, out: &mut Vec<f64>) {
        match self {
            Layer::Conv(l) => {
                out.extend_from_slice(&l.weights);
                out.extend_from_slice(&l.bias);
            }
            Layer::ConvT(l) => {
                out.extend_from_slice(&l.weights);
                out.extend_from_slice(&l.bias);
            }
            Layer::Relu(_) | Layer::Sigmoid(_) => {}
            Layer::Lstm(l) => {
                out.extend_from_slice(&l.w_x);
                out.extend_from_slice(&l.w_h);
                out.extend_from_slice(&l.bias);
            }
            Layer::Fc(l) => {
                out.extend_from_slice(&l.weights);
                out.extend_from_slice(&l.bias);
            }
        }
    }

    pub fn append_grads(&self, out: &mut Vec<f64>) {
        match self {
            Layer::Conv(l) => {
                out.extend_from_slice(&l.grad_weights);
                out.extend_from_slice(&l.grad_bias);
            }
            Layer::ConvT(l) => {
                out.extend_from_slice(&l.grad_weights);
                out.extend_from_slice(&l.grad_bias);
            }
            Layer::Relu(_) | Layer::Sigmoid(_) => {}
            Layer::Lstm(l) => {
                out.extend_from_slice(&l.grad_w_x);
                out.extend_from_slice(&l.grad_w_h);
                out.extend_from_slice(&l.grad_bias);
            }
            Layer::Fc(l) => {
                out.extend_from_slice(&l.grad_weights);
                out.extend_from_slice(&l.grad_bias);
            }
        }
    }

    /// Consume this layer's parameters from the front of `src`,
    /// mirroring [`Layer::append_params`].
    pub fn load_params(&mut self, src: &mut &[f64]) -> Result<()> {
        fn take<'a>(src: &mut &'a [f64], n: usize) -> Result<&'a [f64]> {
            if src.len() < n {
                return Err(Error::DimensionMismatch(format!(
                    "parameter vector too short: need {n} more values, have {}",
                    src.len()
                )));
            }
            let (head, tail) = src.split_at(n);
            *src = tail;
            Ok(head)
        }
        match self {
            Layer::Conv(l) => {
                l.weights.copy_from_slice(take(src, l.weights.len())?);
                l.bias.copy_from_slice(take(src, l.bias.len())?);
            }
            Layer::ConvT(l) => {
                l.weights.copy_from_slice(take(src, l.weights.len())?);
                l.bias.copy_from_slice(take(src, l.bias.len())?);
            }
            Layer::Relu(_) | Layer::Sigmoid(_) => {}
            Layer::Lstm(l) => {
                l.w_x.copy_from_slice(take(src, l.w_x.len())?);
                l.w_h.copy_from_slice(take(src, l.w_h.len())?);
                l.bias.copy_from_slice(take(src, l.bias.len())?);
            }
            Layer::Fc(l) => {
                l.weights.copy_from_slice(take(src, l.weights.len())?);
                l.bias.copy_from_slice(take(src, l.bias.len())?);
            }
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        match self {
            Layer::Conv(l) => {
                l.grad_weights.fill(0.0);
                l.grad_bias.fill(0.0);
            }
            Layer::ConvT(l) => {
                l.grad_weights.fill(0.0);
                l.grad_bias.fill(0.0);
            }
            Layer::Relu(_) | Layer::Sigmoid(_) => {}
            Layer::Lstm(l) => {
                l.grad_w_x.fill(0.0);
                l.grad_w_h.fill(0.0);
                l.grad_bias.fill(0.0);
            }
            Layer::Fc(l) => {
                l.grad_weights.fill(0.0);
                l.grad_bias.fill(0.0);
            }
        }
    }

    /// Glorot-uniform weights, zero biases (LSTM forget gates start at 1).
    /// Draws happen in parameter declaration order, so a fixed seed pins
    /// every weight.
    pub fn init_weights(&mut self, rng: &mut ChaCha20Rng) {
        match self {
            Layer::Conv(l) => {
                let (fi, fo) = (l.in_channels * l.kernel, l.out_channels * l.kernel);
                glorot(rng, fi, fo, &mut l.weights);
                l.bias.fill(0.0);
            }
            Layer::ConvT(l) => {
                let (fi, fo) = (l.in_channels * l.kernel, l.out_channels * l.kernel);
                glorot(rng, fi, fo, &mut l.weights);
                l.bias.fill(0.0);
            }
            Layer::Relu(_) | Layer::Sigmoid(_) => {}
            Layer::Lstm(l) => {
                let (d, h) = (l.input_dim, l.units);
                glorot(rng, d, h, &mut l.w_x);
                glorot(rng, h, h, &mut l.w_h);
                l.bias.fill(0.0);
                l.bias[h..2 * h].fill(1.0);
            }
            Layer::Fc(l) => {
                glorot(rng, l.input_dim, l.units, &mut l.weights);
                l.bias.fill(0.0);
            }
        }
    }
}
