use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `rows x width` grid of 64-bit counters, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterTable {
    rows: usize,
    width: usize,
    cells: Vec<u64>,
}

impl CounterTable {
    pub fn new(rows: usize, width: usize) -> Self {
        CounterTable { rows, width, cells: vec![0; rows * width] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, row: usize, slot: usize) -> u64 {
        self.cells[row * self.width + slot]
    }

    #[inline]
    pub fn add(&mut self, row: usize, slot: usize, weight: u64) {
        self.cells[row * self.width + slot] += weight;
    }

    pub fn row(&self, row: usize) -> &[u64] {
        &self.cells[row * self.width..(row + 1) * self.width]
    }

    pub fn row_sums(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.rows).map(|r| self.row(r).iter().sum())
    }

    /// Counter-wise sum.
    pub fn merge(&mut self, other: &CounterTable) -> Result<()> {
        if (self.rows, self.width) != (other.rows, other.width) {
            return Err(Error::ConfigMismatch(format!(
                "table shape {}x{} vs {}x{}",
                self.rows, self.width, other.rows, other.width
            )));
        }
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a += b;
        }
        Ok(())
    }

    /// Checks shape and that every row sums to `n`.
    pub(crate) fn check(&self, rows: usize, width: usize, n: u64) -> Result<()> {
        if self.rows != rows || self.width != width || self.cells.len() != rows * width {
            return Err(Error::InvalidParameter(format!(
                "table is {}x{} with {} cells, expected {rows}x{width}",
                self.rows,
                self.width,
                self.cells.len()
            )));
        }
        if let Some(sum) = self.row_sums().find(|&s| s != n) {
            return Err(Error::InvalidParameter(format!("table row sums to {sum}, stream length is {n}")));
        }
        Ok(())
    }
}
