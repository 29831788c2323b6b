use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use num_traits::Float;

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T = f32> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Row-level access used by the training kernels. Implemented by plain
/// matrices (single-threaded) and by [`SharedRows`] (lock-free workers).
pub(crate) trait RowStore<T> {
    fn read_row(&self, row: usize, out: &mut [T]);
    /// `row += scale * v`
    fn add_scaled(&mut self, row: usize, scale: T, v: &[T]);
}

impl<T: Float + Default> RowStore<T> for Matrix<T> {
    fn read_row(&self, row: usize, out: &mut [T]) {
        out.copy_from_slice(self.row(row));
    }

    fn add_scaled(&mut self, row: usize, scale: T, v: &[T]) {
        for (x, &d) in self.row_mut(row).iter_mut().zip(v) {
            *x = *x + scale * d;
        }
    }
}

/// Floats that can live in a relaxed atomic cell.
pub(crate) trait AtomicFloat: Copy {
    type Cell: Send + Sync;
    fn cell(self) -> Self::Cell;
    fn load(cell: &Self::Cell) -> Self;
    fn store(cell: &Self::Cell, value: Self);
    fn into_inner(cell: Self::Cell) -> Self;
}

impl AtomicFloat for f32 {
    type Cell = AtomicU32;
    fn cell(self) -> AtomicU32 {
        AtomicU32::new(self.to_bits())
    }
    fn load(cell: &AtomicU32) -> f32 {
        f32::from_bits(cell.load(Ordering::Relaxed))
    }
    fn store(cell: &AtomicU32, value: f32) {
        cell.store(value.to_bits(), Ordering::Relaxed)
    }
    fn into_inner(cell: AtomicU32) -> f32 {
        f32::from_bits(cell.into_inner())
    }
}

impl AtomicFloat for f64 {
    type Cell = AtomicU64;
    fn cell(self) -> AtomicU64 {
        AtomicU64::new(self.to_bits())
    }
    fn load(cell: &AtomicU64) -> f64 {
        f64::from_bits(cell.load(Ordering::Relaxed))
    }
    fn store(cell: &AtomicU64, value: f64) {
        cell.store(value.to_bits(), Ordering::Relaxed)
    }
    fn into_inner(cell: AtomicU64) -> f64 {
        f64::from_bits(cell.into_inner())
    }
}

/// Matrix whose cells are relaxed atomics. Concurrent writers may lose
/// updates but never tear a value.
pub(crate) struct SharedMatrix<T: AtomicFloat> {
    rows: usize,
    cols: usize,
    cells: Vec<T::Cell>,
}

impl<T: AtomicFloat + Default> SharedMatrix<T> {
    pub fn from_matrix(m: &Matrix<T>) -> Self {
        SharedMatrix {
            rows: m.rows(),
            cols: m.cols(),
            cells: m.as_slice().iter().map(|&x| x.cell()).collect(),
        }
    }

    pub fn into_matrix(self) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.cells.into_iter().map(T::into_inner).collect(),
        }
    }

    pub fn rows(&self) -> SharedRows<'_, T> {
        SharedRows(self)
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        T::load(&self.cells[row * self.cols + col])
    }

    pub fn set(&self, row: usize, col: usize, value: T) {
        T::store(&self.cells[row * self.cols + col], value)
    }
}

pub(crate) struct SharedRows<'a, T: AtomicFloat>(&'a SharedMatrix<T>);

impl<T: AtomicFloat> Clone for SharedRows<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: AtomicFloat> Copy for SharedRows<'_, T> {}

impl<T: AtomicFloat + Float + Default> RowStore<T> for SharedRows<'_, T> {
    fn read_row(&self, row: usize, out: &mut [T]) {
        for (col, o) in out.iter_mut().enumerate() {
            *o = self.0.get(row, col);
        }
    }

    fn add_scaled(&mut self, row: usize, scale: T, v: &[T]) {
        for (col, &d) in v.iter().enumerate() {
            let x = self.0.get(row, col);
            self.0.set(row, col, x + scale * d);
        }
    }
}
