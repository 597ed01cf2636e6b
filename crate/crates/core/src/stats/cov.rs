use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest condition number accepted when inverting a covariance block.
pub const MAX_CONDITION: f64 = 1e10;

/// A labelled symmetric covariance matrix, optionally tagged with the
/// sample size it was estimated from (`None` for population matrices).
#[derive(Debug, Clone)]
pub struct CovMatrix {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    values: DMatrix<f64>,
    n: Option<usize>,
}

impl CovMatrix {
    pub fn new(labels: Vec<String>, values: DMatrix<f64>, n: Option<usize>) -> Result<Self> {
        let p = labels.len();
        if values.nrows() != p || values.ncols() != p {
            return Err(Error::invalid(format!("covariance must be {p}x{p}")));
        }
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..p {
            if !(values[(i, i)] > 0.0) {
                return Err(Error::invalid(format!("non-positive variance for `{}`", labels[i])));
            }
            for j in 0..i {
                if (values[(i, j)] - values[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid("covariance matrix is not symmetric"));
                }
            }
        }
        let cov = Self::from_parts(labels, values, n);
        if cov.index.len() != p {
            return Err(Error::invalid("duplicate covariance labels"));
        }
        Ok(cov)
    }

    pub(crate) fn from_parts(labels: Vec<String>, values: DMatrix<f64>, n: Option<usize>) -> Self {
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Self { labels, index, values, n }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n(&self) -> Option<usize> {
        self.n
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn indices(&self, names: &[&str]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.index_of(n)).collect()
    }

    pub fn get(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.values[(self.index_of(a)?, self.index_of(b)?)])
    }

    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.values[(rows[i], cols[j])])
    }

    /// Restriction to the named variables, in the given order.
    pub fn restrict(&self, names: &[&str]) -> Result<CovMatrix> {
        let idx = self.indices(names)?;
        Ok(Self::from_parts(
            names.iter().map(|s| s.to_string()).collect(),
            self.block(&idx, &idx),
            self.n,
        ))
    }

    /// Regression coefficients of each target on `regressors`, one column
    /// per target: `S_zz^-1 S_z,targets`.
    pub fn regression_coefficients(&self, targets: &[usize], regressors: &[usize]) -> Result<DMatrix<f64>> {
        let szz = self.block(regressors, regressors);
        let szt = self.block(regressors, targets);
        solve_spd(&szz, &szt, "regressor covariance")
    }

    /// `sigma_ab - S_aZ S_ZZ^-1 S_Zb`.
    pub fn conditional_covariance(&self, a: &str, b: &str, given: &[&str]) -> Result<f64> {
        let (ai, bi, z) = (self.index_of(a)?, self.index_of(b)?, self.indices(given)?);
        if z.contains(&ai) || z.contains(&bi) {
            return Err(Error::invalid("conditioning set must exclude a and b"));
        }
        self.conditional_covariance_idx(ai, bi, &z)
    }

    pub(crate) fn conditional_covariance_idx(&self, a: usize, b: usize, z: &[usize]) -> Result<f64> {
        if z.is_empty() {
            return Ok(self.values[(a, b)]);
        }
        let coef = self.regression_coefficients(&[b], z)?;
        let sza = self.block(z, &[a]);
        Ok(self.values[(a, b)] - (sza.transpose() * coef)[(0, 0)])
    }

    /// Conditional covariance matrix of `targets` given `given`: the Schur
    /// complement `S_TT - S_TG S_GG^-1 S_GT`.
    pub fn conditional_matrix(&self, targets: &[usize], given: &[usize]) -> Result<DMatrix<f64>> {
        let stt = self.block(targets, targets);
        if given.is_empty() {
            return Ok(stt);
        }
        let coef = self.regression_coefficients(targets, given)?;
        let m = stt - self.block(targets, given) * coef;
        Ok((&m + m.transpose()) * 0.5)
    }

    /// Partial correlation of `a` and `b` given `z`.
    pub(crate) fn partial_correlation_idx(&self, a: usize, b: usize, z: &[usize]) -> Result<f64> {
        let saa = self.conditional_covariance_idx(a, a, z)?;
        let sbb = self.conditional_covariance_idx(b, b, z)?;
        let sab = self.conditional_covariance_idx(a, b, z)?;
        if saa <= 0.0 || sbb <= 0.0 {
            return Err(Error::Numerical("degenerate conditional variance".into()));
        }
        Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
    }
}

pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = eig.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let min = eig.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `m x = rhs` for symmetric positive definite `m`, refusing
/// matrices whose condition number exceeds [`MAX_CONDITION`].
pub(crate) fn solve_spd(m: &DMatrix<f64>, rhs: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, rhs.ncols()));
    }
    let condition = condition_number(m);
    if !(condition < MAX_CONDITION) {
        return Err(Error::IllConditioned { context: context.to_string(), condition });
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::IllConditioned { context: context.to_string(), condition })?;
    Ok(chol.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> CovMatrix {
        CovMatrix::new(
            vec!["a".into(), "b".into(), "z".into()],
            DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.4, 0.5, 1.0, 0.2, 0.4, 0.2, 1.0]),
            None,
        )
        .unwrap()
    }

    #[test]
    fn schur_complement_examples() {
        let s = three();
        assert_eq!(s.conditional_covariance("a", "b", &[]).unwrap(), 0.5);
        assert!((s.conditional_covariance("a", "b", &["z"]).unwrap() - 0.42).abs() < 1e-15);
        let id = CovMatrix::new(
            vec!["a".into(), "b".into(), "z".into()],
            DMatrix::identity(3, 3),
            None,
        )
        .unwrap();
        assert_eq!(id.conditional_covariance("a", "b", &["z"]).unwrap(), 0.0);
    }

    #[test]
    fn rejects_singular_conditioning() {
        let s = CovMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.3, 0.3, 1.0, 1.0, 0.3, 1.0, 1.0]),
            None,
        )
        .unwrap();
        assert!(matches!(
            s.conditional_covariance("a", "a", &["b", "c"]),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn validates_shape_and_symmetry() {
        assert!(CovMatrix::new(vec!["a".into()], DMatrix::from_element(1, 1, 0.0), None).is_err());
        assert!(CovMatrix::new(
            vec!["a".into(), "b".into()],
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.3, 1.0]),
            None
        )
        .is_err());
    }
}
