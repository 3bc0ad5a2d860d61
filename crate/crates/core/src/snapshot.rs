//! Flat matrix layout shared by every weight snapshot: a dimensions header
//! followed by the entries in row-major order.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{DsaError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSnapshot {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries, `rows * cols` of them.
    pub data: Vec<f64>,
}

impl MatrixSnapshot {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            data.extend(m.row(r).iter().copied());
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.iter().copied().collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.rows * self.cols != self.data.len() {
            return Err(DsaError::Parse {
                what: "matrix snapshot".into(),
                message: format!(
                    "{}x{} header but {} entries",
                    self.rows,
                    self.cols,
                    self.data.len()
                ),
            });
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(DsaError::Parse {
                what: "matrix snapshot".into(),
                message: "non-finite entry".into(),
            });
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }

    pub fn to_vector(&self) -> Result<DVector<f64>> {
        let m = self.to_matrix()?;
        if m.ncols() != 1 {
            return Err(DsaError::Parse {
                what: "vector snapshot".into(),
                message: format!("expected one column, got {}", m.ncols()),
            });
        }
        Ok(m.column(0).into_owned())
    }
}
