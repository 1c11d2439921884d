//! Flat, index-aligned storage for per-step vectors and matrices.
//!
//! Long trajectories hold millions of steps, so sequences are kept in one
//! contiguous buffer rather than a `Vec` of heap-allocated nalgebra values.

use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};

/// A sequence of vectors of fixed dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct VecSeries {
    dim: usize,
    data: Vec<f64>,
}

impl VecSeries {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, len: usize) -> Self {
        Self { dim, data: Vec::with_capacity(dim * len) }
    }

    pub fn zeros(dim: usize, len: usize) -> Self {
        Self { dim, data: vec![0.0; dim * len] }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0 && data.len() % dim == 0, "flat buffer is not a whole number of rows");
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.dim);
        self.data.extend_from_slice(v);
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn set(&mut self, i: usize, v: &[f64]) {
        self.get_mut(i).copy_from_slice(v);
    }

    pub fn view(&self, i: usize) -> DVectorView<'_, f64> {
        DVectorView::from_slice(self.get(i), self.dim)
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(self.get(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// A sequence of square matrices, each stored column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MatSeries {
    dim: usize,
    data: Vec<f64>,
}

impl MatSeries {
    pub fn with_capacity(dim: usize, len: usize) -> Self {
        Self { dim, data: Vec::with_capacity(dim * dim * len) }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0 && data.len() % (dim * dim) == 0, "flat buffer is not a whole number of matrices");
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.dim * self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, m: &DMatrix<f64>) {
        assert_eq!(m.shape(), (self.dim, self.dim));
        self.data.extend_from_slice(m.as_slice());
    }

    pub fn get(&self, i: usize) -> DMatrixView<'_, f64> {
        let n = self.dim * self.dim;
        DMatrixView::from_slice(&self.data[i * n..(i + 1) * n], self.dim, self.dim)
    }

    /// Overwrites column `j` of matrix `i`.
    pub fn set_column(&mut self, i: usize, j: usize, v: &[f64]) {
        assert_eq!(v.len(), self.dim);
        let at = i * self.dim * self.dim + j * self.dim;
        self.data[at..at + self.dim].copy_from_slice(v);
    }

    pub fn matrix(&self, i: usize) -> DMatrix<f64> {
        self.get(i).into_owned()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}
