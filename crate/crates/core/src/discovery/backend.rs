//! The two ways of answering Algorithm-level questions: exact population
//! moments with a known graph, or finite-sample tests on data.

use crate::error::Result;
use crate::graph::{active_noncausal_path_exists, DSeparationOracle};
use crate::sem::LinearSem;
use crate::seed::{mix, name_hash};
use crate::stats::{
    hoeffding_independent, lmb, partial_corr_independent, resproj, tetrad_holds, CovMatrix, Dataset,
    PartialCorrTest, TestConfig, TetradInput, POPULATION_TOLERANCE,
};

/// Outcome of the residual independence check for one instrument.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ResidualCheck {
    pub independent: bool,
    pub p_value: f64,
}

pub(crate) trait Backend: Sync {
    /// Whether `sigma_ab.given` is zero.
    fn vanishes(&self, a: &str, b: &str, given: &[&str]) -> Result<bool>;

    /// Whether the conditional tetrad of `(wi, wj; x, y)` holds, with its p-value.
    fn tetrad(&self, wi: &str, wj: &str, x: &str, y: &str, given: &[&str]) -> Result<(bool, f64)>;

    fn blanket(&self, v: &str, set: &[&str]) -> Result<Vec<String>>;

    /// Independence of the residual of `w` on `blanket` and the residual of
    /// `y` on `{w} ∪ blanket`.
    fn residuals_independent(&self, w: &str, blanket: &[&str], y: &str, stream: u64) -> Result<ResidualCheck>;

    fn covariance(&self) -> &CovMatrix;
}

pub(crate) struct Population<'a> {
    pub model: &'a LinearSem,
    pub cov: CovMatrix,
}

impl Backend for Population<'_> {
    fn vanishes(&self, a: &str, b: &str, given: &[&str]) -> Result<bool> {
        Ok(self.cov.conditional_covariance(a, b, given)?.abs() < POPULATION_TOLERANCE)
    }

    fn tetrad(&self, wi: &str, wj: &str, x: &str, y: &str, given: &[&str]) -> Result<(bool, f64)> {
        let r = tetrad_holds(TetradInput::Population(&self.cov), wi, wj, x, y, given, &TestConfig::default())?;
        Ok((r.holds, r.p_value))
    }

    fn blanket(&self, v: &str, set: &[&str]) -> Result<Vec<String>> {
        lmb(&DSeparationOracle { graph: self.model.graph() }, v, set)
    }

    fn residuals_independent(&self, w: &str, blanket: &[&str], y: &str, _stream: u64) -> Result<ResidualCheck> {
        // Almost everywhere in parameter space the residuals are independent
        // exactly when no active non-causal path links w and y.
        let dependent = active_noncausal_path_exists(self.model.graph(), w, y, blanket)?;
        Ok(ResidualCheck { independent: !dependent, p_value: if dependent { 0.0 } else { 1.0 } })
    }

    fn covariance(&self) -> &CovMatrix {
        &self.cov
    }
}

pub(crate) struct Sample<'a> {
    pub data: &'a Dataset,
    pub cfg: &'a TestConfig,
}

impl Sample<'_> {
    fn stream_cfg(&self, parts: &[&str], stream: u64) -> TestConfig {
        let hashes: Vec<u64> = parts.iter().map(|p| name_hash(p)).chain([stream]).collect();
        self.cfg.with_seed(mix(self.cfg.seed, &hashes))
    }
}

impl Backend for Sample<'_> {
    fn vanishes(&self, a: &str, b: &str, given: &[&str]) -> Result<bool> {
        Ok(partial_corr_independent(self.data, a, b, given, self.cfg)?.independent)
    }

    fn tetrad(&self, wi: &str, wj: &str, x: &str, y: &str, given: &[&str]) -> Result<(bool, f64)> {
        let mut parts = vec![wi, wj];
        parts.extend_from_slice(given);
        let cfg = self.stream_cfg(&parts, 0);
        let r = tetrad_holds(TetradInput::Sample(self.data), wi, wj, x, y, given, &cfg)?;
        Ok((r.holds, r.p_value))
    }

    fn blanket(&self, v: &str, set: &[&str]) -> Result<Vec<String>> {
        lmb(&PartialCorrTest { data: self.data, cfg: self.cfg }, v, set)
    }

    fn residuals_independent(&self, w: &str, blanket: &[&str], y: &str, stream: u64) -> Result<ResidualCheck> {
        let rw = resproj(self.data, w, blanket)?;
        let mut regs = vec![w];
        regs.extend_from_slice(blanket);
        let ry = resproj(self.data, y, &regs)?;
        let mut parts = vec![w];
        parts.extend_from_slice(blanket);
        let cfg = self.stream_cfg(&parts, stream);
        let h = hoeffding_independent(rw.values.as_slice(), ry.values.as_slice(), &cfg)?;
        Ok(ResidualCheck { independent: h.independent, p_value: h.p_value })
    }

    fn covariance(&self) -> &CovMatrix {
        self.data.covariance()
    }
}
