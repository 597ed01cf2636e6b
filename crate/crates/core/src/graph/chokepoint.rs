use serde::Serialize;

use super::trek::directed_paths;
use super::Dag;
use crate::error::{Error, Result};

/// Which of the four downstream choke point conditions hold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConditionFlags {
    /// A directed path to the outcome avoids the treatment and the conditioning set.
    pub unblocked_directed_path: bool,
    /// Common ancestors of the instrument and that path are blocked.
    pub ancestors_blocked: bool,
    /// The path runs through a vertex that blocks every directed path to the outcome.
    pub choke_on_outcome_paths: bool,
    /// The same vertex blocks every directed path to the treatment.
    pub choke_on_treatment_paths: bool,
}

impl ConditionFlags {
    pub fn all(&self) -> bool {
        self.unblocked_directed_path
            && self.ancestors_blocked
            && self.choke_on_outcome_paths
            && self.choke_on_treatment_paths
    }

    fn and(self, o: Self) -> Self {
        Self {
            unblocked_directed_path: self.unblocked_directed_path && o.unblocked_directed_path,
            ancestors_blocked: self.ancestors_blocked && o.ancestors_blocked,
            choke_on_outcome_paths: self.choke_on_outcome_paths && o.choke_on_outcome_paths,
            choke_on_treatment_paths: self.choke_on_treatment_paths && o.choke_on_treatment_paths,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InstrumentDiagnosis {
    pub instrument: String,
    pub flags: ConditionFlags,
    /// Vertices satisfying every condition for this instrument.
    pub choke_candidates: Vec<String>,
    /// Unblocked directed paths to the outcome, as vertex names.
    pub paths: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChokePointDiagnosis {
    pub choke_point: Option<String>,
    /// Conjunction of the per-instrument flags.
    pub satisfied: ConditionFlags,
    pub per_instrument: Vec<InstrumentDiagnosis>,
}

fn interior_hits(path: &[usize], set: &[bool]) -> bool {
    path.len() > 2 && path[1..path.len() - 1].iter().any(|&v| set[v])
}

/// Vertices other than `target` reaching `target` by directed paths whose
/// vertices all avoid `blocked` (the target itself is exempt).
fn reach_into(g: &Dag, target: usize, blocked: &[bool]) -> Vec<bool> {
    let mut seen = vec![false; g.len()];
    let mut stack = vec![target];
    while let Some(v) = stack.pop() {
        for &p in g.parents(v) {
            if !seen[p] && !blocked[p] && p != target {
                seen[p] = true;
                stack.push(p);
            }
        }
    }
    seen
}

/// True when some trek between `w` and `v` sourced strictly above `w`
/// avoids the conditioning set entirely.
fn has_open_common_ancestor(g: &Dag, w: usize, v: usize, in_z: &[bool]) -> bool {
    let above_w = reach_into(g, w, in_z);
    let mut blocked = in_z.to_vec();
    blocked[w] = true;
    let mut into_v = reach_into(g, v, &blocked);
    if !blocked[v] {
        into_v[v] = true;
    }
    above_w.iter().zip(&into_v).any(|(&a, &b)| a && b)
}

fn diagnose_one(
    g: &Dag,
    w: usize,
    pair: [usize; 2],
    z: &[usize],
    x: usize,
    y: usize,
) -> (ConditionFlags, Vec<usize>, Vec<Vec<usize>>) {
    let n = g.len();
    let mut in_z = vec![false; n];
    z.iter().for_each(|&v| in_z[v] = true);
    let mut z_and_x = in_z.clone();
    z_and_x[x] = true;

    let to_y = directed_paths(g, w, y);
    let to_x = directed_paths(g, w, x);
    let open: Vec<Vec<usize>> = to_y.iter().filter(|p| !interior_hits(p, &z_and_x)).cloned().collect();

    let mut flags = ConditionFlags { unblocked_directed_path: !open.is_empty(), ..Default::default() };
    let mut candidates: Vec<usize> = Vec::new();
    for path in &open {
        if path[1..].iter().any(|&v| has_open_common_ancestor(g, w, v, &in_z)) {
            continue;
        }
        flags.ancestors_blocked = true;
        for &z0 in &path[1..path.len() - 1] {
            if in_z[z0] || z0 == x || pair.contains(&z0) {
                continue;
            }
            let mut with_z0 = z_and_x.clone();
            with_z0[z0] = true;
            if !to_y.iter().all(|p| interior_hits(p, &with_z0)) {
                continue;
            }
            flags.choke_on_outcome_paths = true;
            let mut z_z0 = in_z.clone();
            z_z0[z0] = true;
            if to_x.iter().all(|p| interior_hits(p, &z_z0)) {
                flags.choke_on_treatment_paths = true;
                if !candidates.contains(&z0) {
                    candidates.push(z0);
                }
            }
        }
    }
    candidates.sort_unstable();
    (flags, candidates, open)
}

/// Evaluates the downstream conditional choke point conditions for both
/// members of a candidate instrument pair by exhaustive path analysis.
/// The reported choke point is a vertex satisfying all conditions for both.
pub fn choke_point_diagnosis(
    g: &Dag,
    wi: &str,
    wj: &str,
    z: &[&str],
    x: &str,
    y: &str,
) -> Result<ChokePointDiagnosis> {
    let (a, b, xi, yi, zi) = (g.id(wi)?, g.id(wj)?, g.id(x)?, g.id(y)?, g.ids(z)?);
    if a == b || [a, b].iter().any(|v| zi.contains(v) || *v == xi || *v == yi) {
        return Err(Error::invalid("instruments must be distinct and outside {x, y} and the conditioning set"));
    }
    let mut satisfied: Option<ConditionFlags> = None;
    let mut per_instrument = Vec::new();
    let mut common: Option<Vec<usize>> = None;
    for w in [a, b] {
        let (flags, cands, paths) = diagnose_one(g, w, [a, b], &zi, xi, yi);
        satisfied = Some(satisfied.map_or(flags, |s| s.and(flags)));
        common = Some(match common {
            None => cands.clone(),
            Some(c) => c.into_iter().filter(|v| cands.contains(v)).collect(),
        });
        per_instrument.push(InstrumentDiagnosis {
            instrument: g.name(w).to_string(),
            flags,
            choke_candidates: g.names_of(cands),
            paths: paths.into_iter().map(|p| g.names_of(p)).collect(),
        });
    }
    let satisfied = satisfied.unwrap_or_default();
    let choke_point = common
        .and_then(|c| c.first().copied())
        .filter(|_| satisfied.all())
        .map(|v| g.name(v).to_string());
    Ok(ChokePointDiagnosis { choke_point, satisfied, per_instrument })
}
