//! Dense row-major tensor, just enough for the layer stack.

use crate::{Error, Result};

/// Row-major dense tensor of `f64`. Layers work with three axes laid out
/// `[channels, freq, time]`, so the time axis has stride 1 and per-row
/// slices are contiguous; a `[C, F, T]` tensor reinterpreted as
/// `[C * F, T]` needs no copying.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite tensor value {v}")));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The three axes of a `[C, F, T]` tensor; panics on other ranks
    /// (programmer error, not input error).
    pub fn dims3(&self) -> (usize, usize, usize) {
        match self.shape[..] {
            [c, f, t] => (c, f, t),
            _ => panic!("expected a 3-axis tensor, got shape {:?}", self.shape),
        }
    }

    pub fn at3(&self, c: usize, f: usize, t: usize) -> f64 {
        let (_, fs, ts) = self.dims3();
        self.data[(c * fs + f) * ts + t]
    }

    pub fn set3(&mut self, c: usize, f: usize, t: usize, v: f64) {
        let (_, fs, ts) = self.dims3();
        self.data[(c * fs + f) * ts + t] = v;
    }

    /// Contiguous time row for flat index `r = c * F + f`.
    pub fn row(&self, r: usize) -> &[f64] {
        let t = *self.shape.last().expect("tensor has no axes");
        &self.data[r * t..(r + 1) * t]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}
