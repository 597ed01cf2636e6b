use statrs::distribution::{ContinuousCDF, Normal};

use super::data::Dataset;
use super::{IndependenceOracle, TestConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialCorrResult {
    pub correlation: f64,
    pub p_value: f64,
    pub independent: bool,
}

/// Two-sided p-value of the Fisher z test of zero partial correlation.
pub fn fisher_z_p_value(r: f64, n: usize, conditioning: usize) -> Result<f64> {
    if n <= conditioning + 3 {
        return Err(Error::invalid(format!(
            "n = {n} too small for a partial correlation given {conditioning} variables"
        )));
    }
    let r = r.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
    let z = r.atanh() * ((n - conditioning - 3) as f64).sqrt();
    let normal = Normal::standard();
    Ok((2.0 * normal.sf(z.abs())).min(1.0))
}

/// Tests `rho_ab.Z = 0` with the Fisher z transform.
pub fn partial_corr_independent(
    data: &Dataset,
    a: &str,
    b: &str,
    given: &[&str],
    cfg: &TestConfig,
) -> Result<PartialCorrResult> {
    let cov = data.covariance();
    let (ai, bi, z) = (cov.index_of(a)?, cov.index_of(b)?, cov.indices(given)?);
    if ai == bi || z.contains(&ai) || z.contains(&bi) {
        return Err(Error::invalid("a, b and the conditioning set must be disjoint"));
    }
    if data.n() <= given.len() + 3 {
        return Err(Error::invalid(format!("n = {} too small for |Z| = {}", data.n(), given.len())));
    }
    let r = cov.partial_correlation_idx(ai, bi, &z)?;
    let p = fisher_z_p_value(r, data.n(), given.len())?;
    Ok(PartialCorrResult { correlation: r, p_value: p, independent: p >= cfg.alpha })
}

/// Partial-correlation conditional independence decisions on a dataset.
pub struct PartialCorrTest<'a> {
    pub data: &'a Dataset,
    pub cfg: &'a TestConfig,
}

impl IndependenceOracle for PartialCorrTest<'_> {
    fn independent(&self, a: &str, b: &str, given: &[&str]) -> Result<bool> {
        Ok(partial_corr_independent(self.data, a, b, given, self.cfg)?.independent)
    }

    fn blanket(&self, v: &str, set: &[&str]) -> Result<Vec<String>> {
        if set.is_empty() {
            return Ok(Vec::new());
        }
        // All partial correlations of v with each s given the rest come from
        // one precision matrix of {v} ∪ set.
        let mut names = vec![v];
        names.extend_from_slice(set);
        let sub = self.data.covariance().restrict(&names)?;
        let k = names.len();
        let condition = super::cov::condition_number(sub.values());
        if !(condition < super::cov::MAX_CONDITION) {
            return Err(Error::IllConditioned { context: "blanket covariance".into(), condition });
        }
        let precision = sub
            .values()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::IllConditioned { context: "blanket covariance".into(), condition })?
            .inverse();
        let mut out = Vec::new();
        for j in 1..k {
            let r = -precision[(0, j)] / (precision[(0, 0)] * precision[(j, j)]).sqrt();
            let p = fisher_z_p_value(r, self.data.n(), k - 2)?;
            if p < self.cfg.alpha {
                out.push(names[j].to_string());
            }
        }
        Ok(out)
    }
}
