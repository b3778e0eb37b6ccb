use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor(Array2<f64>);

impl Tensor {
    pub fn from_array(a: Array2<f64>) -> Self {
        if a.is_standard_layout() {
            Tensor(a)
        } else {
            Tensor(a.as_standard_layout().into_owned())
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let len = data.len();
        Array2::from_shape_vec((rows, cols), data)
            .map(Tensor)
            .map_err(|_| Error::invalid(format!("{len} values do not fill a {rows}×{cols} tensor")))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor(Array2::zeros((rows, cols)))
    }

    pub fn full(rows: usize, cols: usize, v: f64) -> Self {
        Tensor(Array2::from_elem((rows, cols), v))
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::full(1, 1, v)
    }

    pub fn from_rows<const N: usize>(rows: &[[f64; N]]) -> Self {
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::from_vec(rows.len(), N, data).expect("row lengths are uniform")
    }

    /// Glorot/Xavier uniform initialization.
    pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        Tensor(Array2::from_shape_simple_fn((rows, cols), || {
            rng.random_range(-limit..=limit)
        }))
    }

    pub fn shape(&self) -> [usize; 2] {
        let (r, c) = self.0.dim();
        [r, c]
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        self.0
            .as_slice()
            .expect("tensors are kept in standard layout")
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        self.0
            .as_slice_mut()
            .expect("tensors are kept in standard layout")
    }

    pub fn array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.0[(r, c)]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data()[r * c..(r + 1) * c]
    }

    /// The single value of a `1×1` tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.shape(), [1, 1], "item() on a non-scalar tensor");
        self.0[(0, 0)]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl From<Array2<f64>> for Tensor {
    fn from(a: Array2<f64>) -> Self {
        Tensor::from_array(a)
    }
}
