//! Exhaustive pairwise search for conditional instruments.
//!
//! For every pair `{W_i, W_j}` of candidates and every conditioning set `Z`
//! (by non-decreasing size), a tuple is accepted when both instruments are
//! conditionally associated with `X`, the conditional tetrad on
//! `(W_i, W_j; X, Y)` holds, and the residuals of each instrument and of `Y`
//! after blanket regression are independent. The effect estimate of an
//! accepted tuple is `sigma_{w_i y.Z} / sigma_{w_i x.Z}`.

mod backend;

use itertools::Itertools;
use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use backend::{Backend, Population, Sample};

use crate::error::{Error, Result};
use crate::graph::{active_noncausal_path_exists, graphical_iv_criteria};
use crate::sem::LinearSem;
use crate::stats::{as_strs, Dataset, TestConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    pub test: TestConfig,
    /// Largest conditioning set examined.
    pub max_z: usize,
    /// Stop at the first accepted tuple instead of enumerating all of them.
    pub first_only: bool,
    /// Estimates of accepted tuples further apart than this raise a warning.
    /// `None` uses `1e-9` with a population oracle and `0.05` on data.
    pub spread_tolerance: Option<f64>,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self { test: TestConfig::default(), max_z: 3, first_only: true, spread_tolerance: None }
    }
}

/// Where the moments and independence decisions come from.
#[derive(Debug, Clone, Copy)]
pub enum DiscoveryInput<'a> {
    /// Exact covariances and graphical independence from a known model.
    Oracle(&'a LinearSem),
    Sample(&'a Dataset),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvTuple {
    pub wi: String,
    pub wj: String,
    pub z: Vec<String>,
    pub dce_estimate: f64,
    /// p-values of the tetrad test and of the two residual tests.
    pub p_values: [f64; 3],
    /// No accepted tuple for this pair uses a smaller conditioning set.
    pub minimal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadWarning {
    pub min: f64,
    pub max: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryResult {
    /// Estimate of the first accepted tuple; `None` when nothing was accepted.
    pub dce: Option<f64>,
    pub accepted_tuples: Vec<IvTuple>,
    /// Set when accepted tuples disagree, the signature of an equivalence
    /// class that cannot be resolved from these constraints alone.
    pub warning: Option<SpreadWarning>,
}

fn check_roles(names: &dyn Fn(&str) -> bool, x: &str, y: &str, v: &[&str]) -> Result<()> {
    if x == y {
        return Err(Error::invalid("treatment and outcome must differ"));
    }
    for n in v.iter().chain([&x, &y]) {
        if !names(n) {
            return Err(Error::UnknownVariable(n.to_string()));
        }
    }
    if v.contains(&x) || v.contains(&y) {
        return Err(Error::invalid("candidate set must exclude treatment and outcome"));
    }
    if v.iter().duplicates().next().is_some() {
        return Err(Error::invalid("candidate set has duplicates"));
    }
    Ok(())
}

/// Evaluates one `(W_i, W_j, Z)` tuple; `Ok(None)` when it is rejected.
fn evaluate(b: &dyn Backend, wi: &str, wj: &str, z: &[&str], x: &str, y: &str) -> Result<Option<IvTuple>> {
    if b.vanishes(wi, x, z)? || b.vanishes(wj, x, z)? {
        return Ok(None);
    }
    let (holds, p_tetrad) = b.tetrad(wi, wj, x, y, z)?;
    if !holds {
        return Ok(None);
    }
    let mut p = [p_tetrad, 0.0, 0.0];
    for (k, (w, other)) in [(wi, wj), (wj, wi)].into_iter().enumerate() {
        let mut set = z.to_vec();
        set.push(other);
        let blanket = b.blanket(w, &set)?;
        let check = b.residuals_independent(w, &as_strs(&blanket), y, k as u64)?;
        p[k + 1] = check.p_value;
        if !check.independent {
            return Ok(None);
        }
    }
    let cov = b.covariance();
    let dce = cov.conditional_covariance(wi, y, z)? / cov.conditional_covariance(wi, x, z)?;
    Ok(Some(IvTuple {
        wi: wi.to_string(),
        wj: wj.to_string(),
        z: z.iter().map(|s| s.to_string()).collect(),
        dce_estimate: dce,
        p_values: p,
        minimal: true,
    }))
}

/// All accepted tuples of one pair at its smallest accepted size, or the
/// first one when `first_only`.
fn search_pair(b: &dyn Backend, wi: &str, wj: &str, v: &[&str], x: &str, y: &str, cfg: &DiscoveryConfig) -> Vec<IvTuple> {
    let rest: Vec<&str> = v.iter().copied().filter(|c| *c != wi && *c != wj).collect();
    let mut found = Vec::new();
    for size in 0..=cfg.max_z.min(rest.len()) {
        for z in rest.iter().copied().combinations(size) {
            match evaluate(b, wi, wj, &z, x, y) {
                Ok(Some(t)) => {
                    found.push(t);
                    if cfg.first_only {
                        return found;
                    }
                }
                Ok(None) => {}
                Err(e) => debug!("skipping ({wi}, {wj}, {z:?}): {e}"),
            }
        }
        if !found.is_empty() {
            break;
        }
    }
    found
}

/// Runs the pairwise search over candidates `v` for the effect of `x` on `y`.
pub fn discover(input: DiscoveryInput<'_>, x: &str, y: &str, v: &[&str], cfg: &DiscoveryConfig) -> Result<DiscoveryResult> {
    cfg.test.validate()?;
    let mut v: Vec<&str> = v.to_vec();
    v.sort_unstable();
    let (backend, default_tol): (Box<dyn Backend>, f64) = match input {
        DiscoveryInput::Oracle(model) => {
            let g = model.graph();
            check_roles(&|n| g.contains(n) && g.kind(g.id(n).unwrap()) == crate::graph::VertexKind::Observed, x, y, &v)?;
            (Box::new(Population { model, cov: model.population_covariance()? }), 1e-9)
        }
        DiscoveryInput::Sample(data) => {
            check_roles(&|n| data.has_column(n), x, y, &v)?;
            (Box::new(Sample { data, cfg: &cfg.test }), 0.05)
        }
    };
    let pairs: Vec<(&str, &str)> = v.iter().copied().tuple_combinations().collect();
    let b = backend.as_ref();
    let accepted: Vec<IvTuple> = if cfg.first_only {
        pairs
            .par_iter()
            .find_map_first(|&(wi, wj)| search_pair(b, wi, wj, &v, x, y, cfg).into_iter().next())
            .into_iter()
            .collect()
    } else {
        pairs.par_iter().map(|&(wi, wj)| search_pair(b, wi, wj, &v, x, y, cfg)).collect::<Vec<_>>().concat()
    };
    let tol = cfg.spread_tolerance.unwrap_or(default_tol);
    let warning = accepted.iter().map(|t| t.dce_estimate).minmax().into_option().and_then(|(min, max)| {
        (max - min > tol).then_some(SpreadWarning { min, max, spread: max - min })
    });
    Ok(DiscoveryResult { dce: accepted.first().map(|t| t.dce_estimate), accepted_tuples: accepted, warning })
}

/// Checks the completeness guarantee on a known model: whenever some pair
/// in `v` is a pair of conditional instruments given a `Z` (of size at most
/// `max_z`) that also blocks every active non-causal path into `x`, `found`
/// must carry the true effect.
pub fn completeness_check(model: &LinearSem, x: &str, y: &str, v: &[&str], found: &DiscoveryResult, max_z: usize) -> Result<bool> {
    let g = model.graph();
    let mut v: Vec<&str> = v.to_vec();
    v.sort_unstable();
    let good = |w: &str, z: &[&str]| -> Result<bool> {
        Ok(graphical_iv_criteria(g, w, z, x, y)? && !active_noncausal_path_exists(g, w, x, z)?)
    };
    let mut premise = false;
    'outer: for (wi, wj) in v.iter().copied().tuple_combinations() {
        let rest: Vec<&str> = v.iter().copied().filter(|c| *c != wi && *c != wj).collect();
        for size in 0..=max_z.min(rest.len()) {
            for z in rest.iter().copied().combinations(size) {
                if good(wi, &z)? && good(wj, &z)? {
                    premise = true;
                    break 'outer;
                }
            }
        }
    }
    if !premise {
        return Ok(true);
    }
    let truth = model.true_dce(x, y)?.value;
    Ok(found.dce.is_some_and(|d| (d - truth).abs() <= 1e-9))
}
