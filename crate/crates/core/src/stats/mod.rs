//! Statistical primitives: covariance algebra, least-squares residuals,
//! conditional independence tests, tetrad tests and Hoeffding's D.

mod cov;
mod data;
mod hoeffding;
mod partial;
mod regression;
mod tetrad;

pub use cov::{CovMatrix, MAX_CONDITION};
pub use data::Dataset;
pub use hoeffding::{hoeffding_d, hoeffding_independent, HoeffdingResult};
pub use partial::{fisher_z_p_value, partial_corr_independent, PartialCorrResult, PartialCorrTest};
pub use regression::{ols, residualize, resproj, ResidualVector};
pub use tetrad::{tetrad_holds, tetrad_statistic, TetradInput, TetradResult, POPULATION_TOLERANCE};

pub(crate) use cov::solve_spd;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Significance level, resampling counts and seed shared by the tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub alpha: f64,
    pub n_boot: usize,
    pub n_perm: usize,
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self { alpha: 0.05, n_boot: 400, n_perm: 400, seed: 0 }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.n_boot < 100 || self.n_perm < 100 {
            return Err(Error::invalid("bootstrap and permutation counts must be at least 100"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Answers conditional independence queries, either from data or from a
/// known graph.
pub trait IndependenceOracle {
    fn independent(&self, a: &str, b: &str, given: &[&str]) -> Result<bool>;

    /// Members of `set` that stay dependent on `v` given the rest of `set`.
    fn blanket(&self, v: &str, set: &[&str]) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for (i, s) in set.iter().enumerate() {
            let rest: Vec<&str> = set.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, n)| *n).collect();
            if !self.independent(v, s, &rest)? {
                out.push(s.to_string());
            }
        }
        Ok(out)
    }
}

/// Local Markov blanket of `v` within `set`.
pub fn lmb(oracle: &dyn IndependenceOracle, v: &str, set: &[&str]) -> Result<Vec<String>> {
    if set.contains(&v) {
        return Err(Error::invalid(format!("`{v}` must not be in its own blanket candidate set")));
    }
    oracle.blanket(v, set)
}

pub(crate) fn as_strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}
