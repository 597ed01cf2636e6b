use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::cov::CovMatrix;
use super::data::Dataset;
use super::TestConfig;
use crate::error::{Error, Result};

/// Absolute threshold below which a population tetrad is treated as zero.
pub const POPULATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TetradResult {
    pub statistic: f64,
    pub p_value: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy)]
pub enum TetradInput<'a> {
    /// Exact covariance: the constraint holds when the statistic vanishes.
    Population(&'a CovMatrix),
    /// Finite sample: the statistic is tested by a nonparametric bootstrap.
    Sample(&'a Dataset),
}

/// `s_{wi x.Z} s_{wj y.Z} - s_{wi y.Z} s_{wj x.Z}`.
pub fn tetrad_statistic(cov: &CovMatrix, wi: &str, wj: &str, x: &str, y: &str, given: &[&str]) -> Result<f64> {
    let idx = cov.indices(&[wi, wj, x, y])?;
    let z = cov.indices(given)?;
    tetrad_idx(cov, [idx[0], idx[1], idx[2], idx[3]], &z)
}

fn tetrad_idx(cov: &CovMatrix, [wi, wj, x, y]: [usize; 4], z: &[usize]) -> Result<f64> {
    let c = |a, b| cov.conditional_covariance_idx(a, b, z);
    Ok(c(wi, x)? * c(wj, y)? - c(wi, y)? * c(wj, x)?)
}

pub fn tetrad_holds(
    input: TetradInput<'_>,
    wi: &str,
    wj: &str,
    x: &str,
    y: &str,
    given: &[&str],
    cfg: &TestConfig,
) -> Result<TetradResult> {
    let four = [wi, wj, x, y];
    for (i, a) in four.iter().enumerate() {
        if four[..i].contains(a) || given.contains(a) {
            return Err(Error::invalid("tetrad variables must be distinct and outside the conditioning set"));
        }
    }
    match input {
        TetradInput::Population(cov) => {
            let statistic = tetrad_statistic(cov, wi, wj, x, y, given)?;
            let holds = statistic.abs() < POPULATION_TOLERANCE;
            Ok(TetradResult { statistic, p_value: if holds { 1.0 } else { 0.0 }, holds })
        }
        TetradInput::Sample(data) => bootstrap(data, four, given, cfg),
    }
}

fn bootstrap(data: &Dataset, four: [&str; 4], given: &[&str], cfg: &TestConfig) -> Result<TetradResult> {
    let mut names: Vec<&str> = four.to_vec();
    names.extend_from_slice(given);
    let local = data.select_columns(&names)?;
    let z: Vec<usize> = (4..names.len()).collect();
    let statistic = tetrad_idx(local.covariance(), [0, 1, 2, 3], &z)?;

    let n = local.n();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = vec![0usize; n];
    let mut exceed = 0usize;
    let mut used = 0usize;
    for _ in 0..cfg.n_boot {
        rows.iter_mut().for_each(|r| *r = rng.gen_range(0..n));
        let resample = local.select_rows(&rows)?;
        // A degenerate resample is skipped rather than failing the test.
        match tetrad_idx(resample.covariance(), [0, 1, 2, 3], &z) {
            Ok(t) => {
                used += 1;
                if (t - statistic).abs() >= statistic.abs() {
                    exceed += 1;
                }
            }
            Err(e) if e.is_numerical() => continue,
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::Numerical("every bootstrap resample was degenerate".into()));
    }
    let p_value = (1 + exceed) as f64 / (used + 1) as f64;
    Ok(TetradResult { statistic, p_value, holds: p_value >= cfg.alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn rank_one_block_holds() {
        // Covariances with X,Y factor through a single loading per W.
        let (a, b, cx, cy) = (0.7, -0.4, 0.9, 0.5);
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.1, a * cx, a * cy,
                0.1, 1.0, b * cx, b * cy,
                a * cx, b * cx, 1.0, 0.3,
                a * cy, b * cy, 0.3, 1.0,
            ],
        );
        let cov = CovMatrix::new(vec!["w1".into(), "w2".into(), "x".into(), "y".into()], m, None).unwrap();
        let r = tetrad_holds(TetradInput::Population(&cov), "w1", "w2", "x", "y", &[], &TestConfig::default()).unwrap();
        assert!(r.holds);
        assert!(tetrad_holds(TetradInput::Population(&cov), "w1", "w1", "x", "y", &[], &TestConfig::default()).is_err());
    }
}
