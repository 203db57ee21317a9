//! Dense row-major matrix of `f64`.
//!
//! The weight containers in this crate are small and dense, and every hot
//! loop walks contiguous rows, so a flat `Vec<f64>` with row-major indexing
//! is all that is needed. Serialization is nested arrays (one inner array
//! per row) so model files stay self-describing.

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

/// Dense row-major `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows_data: Vec<Vec<f64>>) -> Option<Self> {
        let rows = rows_data.len();
        let cols = rows_data.first().map_or(0, Vec::len);
        if rows_data.iter().any(|r| r.len() != cols) {
            return None;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in rows_data {
            data.extend(r);
        }
        Some(Mat { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Dot product of row `r` of `self` with row `c` of `other`.
    #[inline]
    pub fn row_dot(&self, r: usize, other: &Mat, c: usize) -> f64 {
        dot(self.row(r), other.row(c))
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Plain dot product.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Serialize for Mat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.rows))?;
        for r in 0..self.rows {
            seq.serialize_element(self.row(r))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Mat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct MatVisitor;

        impl<'de> Visitor<'de> for MatVisitor {
            type Value = Mat;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a sequence of equal-length rows of numbers")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Mat, A::Error> {
                let mut rows_data: Vec<Vec<f64>> = Vec::new();
                while let Some(row) = seq.next_element::<Vec<f64>>()? {
                    rows_data.push(row);
                }
                Mat::from_rows(rows_data).ok_or_else(|| de::Error::custom("ragged matrix rows"))
            }
        }

        deserializer.deserialize_seq(MatVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major() {
        let m = Mat::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.at(0, 1), 2.0);
        assert_eq!(m.at(1, 0), 3.0);
        assert_eq!(m.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Mat::from_rows(vec![vec![1.0], vec![1.0, 2.0]]).is_none());
    }

    #[test]
    fn serde_round_trip_is_value_exact() {
        let mut m = Mat::zeros(2, 3);
        *m.at_mut(0, 0) = 0.1 + 0.2; // not exactly representable as a short decimal
        *m.at_mut(1, 2) = -1.0 / 3.0;
        *m.at_mut(0, 2) = 1e-300;
        let text = serde_json::to_string(&m).unwrap();
        let back: Mat = serde_json::from_str(&text).unwrap();
        assert_eq!(m, back);
    }
}
