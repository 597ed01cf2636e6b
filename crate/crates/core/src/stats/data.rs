use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use super::cov::CovMatrix;
use crate::error::{Error, Result};

/// An `n x p` table of observations with named columns. Columns are centered
/// on construction, so every downstream moment is a central moment.
#[derive(Debug, Clone)]
pub struct Dataset {
    columns: Vec<String>,
    index: HashMap<String, usize>,
    values: DMatrix<f64>,
    cov: OnceLock<CovMatrix>,
}

impl Dataset {
    pub fn new(columns: Vec<String>, mut values: DMatrix<f64>) -> Result<Self> {
        if columns.len() != values.ncols() {
            return Err(Error::invalid(format!(
                "{} column names for {} columns",
                columns.len(),
                values.ncols()
            )));
        }
        if values.nrows() == 0 {
            return Err(Error::invalid("dataset has no rows"));
        }
        let mut index = HashMap::with_capacity(columns.len());
        for (i, c) in columns.iter().enumerate() {
            if index.insert(c.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate column `{c}`")));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::invalid(format!("non-finite value in row {r}, column `{}`", columns[c])));
        }
        for mut col in values.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        Ok(Self { columns, index, values, cov: OnceLock::new() })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn column(&self, name: &str) -> Result<DVector<f64>> {
        Ok(self.values.column(self.index_of(name)?).into_owned())
    }

    /// Columns `names` as an `n x k` matrix, in the given order.
    pub fn matrix_of(&self, names: &[&str]) -> Result<DMatrix<f64>> {
        let idx: Vec<usize> = names.iter().map(|n| self.index_of(n)).collect::<Result<_>>()?;
        Ok(self.values.select_columns(&idx))
    }

    /// Moment covariance (divisor `n`) of all columns, computed once.
    pub fn covariance(&self) -> &CovMatrix {
        self.cov.get_or_init(|| {
            let n = self.n() as f64;
            let mut s = self.values.tr_mul(&self.values);
            s /= n;
            // Symmetrize against rounding in the product.
            let s = (&s + s.transpose()) * 0.5;
            CovMatrix::from_parts(self.columns.clone(), s, Some(self.n()))
        })
    }

    /// The rows `rows` (repeats allowed) as a new, re-centered dataset.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        Dataset::new(self.columns.clone(), self.values.select_rows(rows))
    }

    /// A dataset restricted to the named columns.
    pub fn select_columns(&self, names: &[&str]) -> Result<Dataset> {
        let m = self.matrix_of(names)?;
        Dataset::new(names.iter().map(|s| s.to_string()).collect(), m)
    }
}
