use nalgebra::{DMatrix, DVector};

use super::data::Dataset;
use crate::error::{Error, Result};

/// Least-squares residual of `target` after projection on `regressors`.
#[derive(Debug, Clone)]
pub struct ResidualVector {
    pub target: String,
    pub regressors: Vec<String>,
    pub coefficients: Vec<f64>,
    pub values: DVector<f64>,
}

fn check_distinct(target: &str, regressors: &[&str]) -> Result<()> {
    if regressors.contains(&target) {
        return Err(Error::invalid(format!("`{target}` cannot be regressed on itself")));
    }
    for (i, r) in regressors.iter().enumerate() {
        if regressors[..i].contains(r) {
            return Err(Error::invalid(format!("regressor `{r}` listed twice")));
        }
    }
    Ok(())
}

/// Residual of the least-squares projection of `target` on `regressors`,
/// using the sample second moments of the (centered) data.
pub fn resproj(data: &Dataset, target: &str, regressors: &[&str]) -> Result<ResidualVector> {
    check_distinct(target, regressors)?;
    if data.n() <= regressors.len() {
        return Err(Error::invalid(format!(
            "n = {} too small for {} regressors",
            data.n(),
            regressors.len()
        )));
    }
    let t = data.index_of(target)?;
    let r: Vec<usize> = regressors.iter().map(|n| data.index_of(n)).collect::<Result<_>>()?;
    let coef = data.covariance().regression_coefficients(&[t], &r)?;
    let mut values = data.values().column(t).into_owned();
    for (k, &j) in r.iter().enumerate() {
        values.axpy(-coef[(k, 0)], &data.values().column(j), 1.0);
    }
    Ok(ResidualVector {
        target: target.to_string(),
        regressors: regressors.iter().map(|s| s.to_string()).collect(),
        coefficients: coef.column(0).iter().copied().collect(),
        values,
    })
}

/// Residualizes several columns on the same regressors; returns `n x k`.
pub fn residualize(data: &Dataset, targets: &[&str], regressors: &[&str]) -> Result<DMatrix<f64>> {
    let t: Vec<usize> = targets.iter().map(|n| data.index_of(n)).collect::<Result<_>>()?;
    let mut out = data.values().select_columns(&t);
    if regressors.is_empty() {
        return Ok(out);
    }
    if data.n() <= regressors.len() {
        return Err(Error::invalid("too few rows for the regressor set"));
    }
    let r: Vec<usize> = regressors.iter().map(|n| data.index_of(n)).collect::<Result<_>>()?;
    let coef = data.covariance().regression_coefficients(&t, &r)?;
    let z = data.values().select_columns(&r);
    out -= z * coef;
    Ok(out)
}

/// Ordinary least-squares coefficients of `y` on `regressors` (no intercept;
/// data are centered).
pub fn ols(data: &Dataset, y: &str, regressors: &[&str]) -> Result<Vec<(String, f64)>> {
    if regressors.is_empty() {
        return Err(Error::invalid("ols needs at least one regressor"));
    }
    let res = resproj(data, y, regressors)?;
    Ok(res.regressors.into_iter().zip(res.coefficients).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn linear_data(n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = DMatrix::zeros(n, 3);
        for i in 0..n {
            let s: f64 = StandardNormal.sample(&mut rng);
            let e: f64 = StandardNormal.sample(&mut rng);
            let q: f64 = StandardNormal.sample(&mut rng);
            m[(i, 0)] = s;
            m[(i, 1)] = 2.0 * s + e;
            m[(i, 2)] = q;
        }
        Dataset::new(vec!["s".into(), "v".into(), "q".into()], m).unwrap()
    }

    #[test]
    fn empty_regressors_returns_centered_target() {
        let d = linear_data(50);
        let r = resproj(&d, "v", &[]).unwrap();
        assert_eq!(r.values, d.column("v").unwrap());
    }

    #[test]
    fn residual_orthogonal_to_regressors() {
        let d = linear_data(500);
        let r = resproj(&d, "v", &["s", "q"]).unwrap();
        for c in ["s", "q"] {
            let x = d.column(c).unwrap();
            let ip = r.values.dot(&x) / d.n() as f64;
            assert!(ip.abs() < 1e-8 * x.norm() / (d.n() as f64).sqrt(), "{ip}");
        }
        assert!((r.coefficients[0] - 2.0).abs() < 0.2);
    }

    #[test]
    fn collinear_regressors_rejected() {
        let d = linear_data(100);
        let mut m = d.values().clone();
        m.set_column(2, &(d.column("s").unwrap() * 2.0));
        let d2 = Dataset::new(d.columns().to_vec(), m).unwrap();
        assert!(matches!(resproj(&d2, "v", &["s", "q"]), Err(Error::IllConditioned { .. })));
        assert!(resproj(&d, "v", &["v"]).is_err());
    }
}
