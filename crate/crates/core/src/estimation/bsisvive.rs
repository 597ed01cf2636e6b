//! Back-door protected selection: rank candidates by how dependent their
//! blanket residuals are on the outcome's, hold the worst fraction out as
//! background, and greedily shrink the conditioning set while the residual
//! independence of the selected instruments improves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sisvive::{sisvive, SisviveConfig, SisviveResult};
use crate::error::{Error, Result};
use crate::seed::{mix, name_hash};
use crate::stats::{as_strs, hoeffding_independent, lmb, resproj, Dataset, PartialCorrTest, TestConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BsisviveConfig {
    /// Fraction of candidates placed in the background set.
    pub t: f64,
    pub test: TestConfig,
    /// Stop after the preliminary fit (no conditioning-set refinement).
    pub skip_refinement: bool,
    pub sisvive: SisviveConfig,
}

impl Default for BsisviveConfig {
    fn default() -> Self {
        Self { t: 0.5, test: TestConfig::default(), skip_refinement: false, sisvive: SisviveConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementStep {
    pub removed: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BsisviveResult {
    pub dce: f64,
    /// `(variable, score)` in ranking order, most dependent first.
    pub scores: Vec<(String, f64)>,
    pub background: Vec<String>,
    pub preliminary: SisviveResult,
    pub initial_score: Option<f64>,
    pub trace: Vec<RefinementStep>,
    pub conditioning: Vec<String>,
    pub final_fit: Option<SisviveResult>,
}

fn stream(cfg: &TestConfig, name: &str) -> TestConfig {
    cfg.with_seed(mix(cfg.seed, &[name_hash(name)]))
}

/// Minus the Hoeffding p-value between the blanket residual of `vi` (within
/// `v`) and the residual of `y` on `vi` and that blanket. Larger means more
/// evidence of an active back-door path.
pub fn res_dependence_score(data: &Dataset, vi: &str, v: &[&str], y: &str, cfg: &TestConfig) -> Result<f64> {
    if !v.contains(&vi) {
        return Err(Error::invalid(format!("`{vi}` is not in the candidate set")));
    }
    if v.contains(&y) {
        return Err(Error::invalid("candidate set must exclude the outcome"));
    }
    let rest: Vec<&str> = v.iter().copied().filter(|c| *c != vi).collect();
    let blanket = lmb(&PartialCorrTest { data, cfg }, vi, &rest)?;
    let blanket = as_strs(&blanket);
    let ri = resproj(data, vi, &blanket)?;
    let mut regs = vec![vi];
    regs.extend_from_slice(&blanket);
    let ry = resproj(data, y, &regs)?;
    let h = hoeffding_independent(ri.values.as_slice(), ry.values.as_slice(), &stream(cfg, vi))?;
    Ok(-h.p_value)
}

/// Product over `w` of the Hoeffding p-values between the residual of each
/// `W_i` on the rest of `w ∪ z ∪ c` and the residual of `y` on `w ∪ z ∪ c`.
pub fn b_score(data: &Dataset, w: &[&str], z: &[&str], c: &[&str], x: &str, y: &str, cfg: &TestConfig) -> Result<f64> {
    let mut all: Vec<&str> = w.to_vec();
    all.extend_from_slice(z);
    all.extend_from_slice(c);
    for (i, a) in all.iter().enumerate() {
        if all[..i].contains(a) || *a == x || *a == y {
            return Err(Error::invalid(format!("`{a}` appears in more than one role")));
        }
    }
    let ry = resproj(data, y, &all)?;
    let mut score = 1.0;
    for wi in w {
        let rest: Vec<&str> = all.iter().copied().filter(|a| a != wi).collect();
        let ri = resproj(data, wi, &rest)?;
        score *= hoeffding_independent(ri.values.as_slice(), ry.values.as_slice(), &stream(cfg, wi))?.p_value;
    }
    Ok(score)
}

/// Ranks `v` by [`res_dependence_score`], most dependent first; ties by name.
pub fn rank_candidates(data: &Dataset, v: &[&str], y: &str, cfg: &TestConfig) -> Result<Vec<(String, f64)>> {
    let mut sorted: Vec<&str> = v.to_vec();
    sorted.sort_unstable();
    let mut scores = sorted
        .par_iter()
        .map(|vi| Ok((vi.to_string(), res_dependence_score(data, vi, &sorted, y, cfg)?)))
        .collect::<Result<Vec<_>>>()?;
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(scores)
}

pub fn b_sisvive(data: &Dataset, v: &[&str], x: &str, y: &str, c: &BsisviveConfig) -> Result<BsisviveResult> {
    if !(0.0..=1.0).contains(&c.t) {
        return Err(Error::invalid(format!("background fraction must lie in [0, 1], got {}", c.t)));
    }
    if v.len() < 2 {
        return Err(Error::invalid("need at least two candidates"));
    }
    c.test.validate()?;
    if v.contains(&x) {
        return Err(Error::invalid("candidate set must exclude the treatment"));
    }
    let scores = rank_candidates(data, v, y, &c.test)?;
    let nb = (c.t * v.len() as f64).ceil() as usize;
    let mut background: Vec<String> = scores[..nb].iter().map(|s| s.0.clone()).collect();
    background.sort_unstable();
    let mut pool: Vec<&str> = scores[nb..].iter().map(|s| s.0.as_str()).collect();
    pool.sort_unstable();
    if pool.is_empty() {
        return Err(Error::invalid("background fraction leaves no candidates"));
    }
    let bg = as_strs(&background);
    let preliminary = sisvive(data, &pool, &bg, x, y, &c.sisvive)?;
    if c.skip_refinement {
        return Ok(BsisviveResult {
            dce: preliminary.dce,
            scores,
            conditioning: background.clone(),
            background,
            preliminary,
            initial_score: None,
            trace: Vec::new(),
            final_fit: None,
        });
    }

    let w = as_strs(&preliminary.valid_w);
    let z = as_strs(&preliminary.invalid_z);
    let mut cond: Vec<&str> = bg.clone();
    let mut current = b_score(data, &w, &z, &cond, x, y, &c.test)?;
    let initial_score = Some(current);
    let mut trace = Vec::new();
    while !cond.is_empty() {
        let removal_scores = (0..cond.len())
            .into_par_iter()
            .map(|i| {
                let reduced: Vec<&str> = cond.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, s)| *s).collect();
                b_score(data, &w, &z, &reduced, x, y, &c.test)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut best: Option<(usize, f64)> = None;
        for (i, &s) in removal_scores.iter().enumerate() {
            // `cond` is name-sorted, so a strict comparison keeps the first name on ties.
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        let (i, s) = best.expect("nonempty conditioning set");
        if s > current {
            trace.push(RefinementStep { removed: cond.remove(i).to_string(), score: s });
            current = s;
        } else {
            break;
        }
    }
    let final_fit = sisvive(data, &pool, &cond, x, y, &c.sisvive)?;
    let conditioning = cond.iter().map(|s| s.to_string()).collect();
    Ok(BsisviveResult {
        dce: final_fit.dce,
        scores,
        background,
        preliminary,
        initial_score,
        trace,
        conditioning,
        final_fit: Some(final_fit),
    })
}
