use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};

/// An `n × p` block of observations, one row per sample. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
}

impl SampleMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::invalid(format!(
                "sample matrix must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry at row {}, column {}",
                pos % data.nrows(),
                pos / data.nrows()
            )));
        }
        Ok(Self { data })
    }

    /// Builds a sample matrix from row vectors of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    /// Row `i` as a column vector.
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }

    pub fn rows(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        (0..self.n()).map(move |i| self.row(i))
    }

    /// Sub-sample keeping the given row indices, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        Self::new(self.data.select_rows(idx))
    }

    /// Adds `shift` to every row.
    pub fn translated(&self, shift: DVectorView<'_, f64>) -> Result<Self> {
        if shift.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: shift.len(),
            });
        }
        let mut data = self.data.clone();
        for mut row in data.row_iter_mut() {
            row += shift.transpose();
        }
        Self::new(data)
    }

    pub fn require_min_rows(&self, required: usize) -> Result<()> {
        if self.n() < required {
            return Err(Error::InsufficientSamples {
                required,
                found: self.n(),
            });
        }
        Ok(())
    }
}

/// Validates that `v` has length `p` and finite entries.
pub(crate) fn check_vector(v: &[f64], p: usize) -> Result<()> {
    if v.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("vector contains non-finite entries"));
    }
    Ok(())
}
