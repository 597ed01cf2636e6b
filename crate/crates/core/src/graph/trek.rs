use std::collections::BTreeSet;

use super::Dag;
use crate::error::{Error, Result};

/// A simple trek: two directed paths out of a common source that share no
/// other vertex. `left` ends at the first sink and `right` at the second;
/// both include the source as their first element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trek {
    pub source: usize,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

impl Trek {
    pub fn left_sink(&self) -> usize {
        *self.left.last().unwrap()
    }

    pub fn right_sink(&self) -> usize {
        *self.right.last().unwrap()
    }
}

pub(crate) fn directed_paths(g: &Dag, from: usize, to: usize) -> Vec<Vec<usize>> {
    fn walk(g: &Dag, to: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let cur = *path.last().unwrap();
        if cur == to {
            out.push(path.clone());
            return;
        }
        for &c in g.children(cur) {
            if g.is_descendant(to, c) {
                path.push(c);
                walk(g, to, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    if g.is_descendant(to, from) {
        walk(g, to, &mut vec![from], &mut out);
    }
    out
}

/// Every simple trek between `a` and `b`. Exponential in general; meant for
/// small graphs and explanations.
pub fn enumerate_treks(g: &Dag, a: usize, b: usize) -> Vec<Trek> {
    let mut treks = Vec::new();
    for source in 0..g.len() {
        if !(g.is_descendant(a, source) && g.is_descendant(b, source)) {
            continue;
        }
        let lefts = directed_paths(g, source, a);
        let rights = directed_paths(g, source, b);
        for l in &lefts {
            for r in &rights {
                if l[1..].iter().all(|v| !r[1..].contains(v)) {
                    treks.push(Trek { source, left: l.clone(), right: r.clone() });
                }
            }
        }
    }
    treks
}

/// Vertices that reach some member of `targets` along a directed path whose
/// vertices (endpoints included) all avoid `blocked`.
fn reaches_avoiding(g: &Dag, targets: &[usize], blocked: &[bool]) -> Vec<bool> {
    let mut seen = vec![false; g.len()];
    let mut stack: Vec<usize> = targets.iter().copied().filter(|&t| !blocked[t]).collect();
    for &t in &stack {
        seen[t] = true;
    }
    while let Some(v) = stack.pop() {
        for &p in g.parents(v) {
            if !seen[p] && !blocked[p] {
                seen[p] = true;
                stack.push(p);
            }
        }
    }
    seen
}

pub(crate) fn t_separated_idx(g: &Dag, vi: &[usize], vj: &[usize], ci: &[usize], cj: &[usize]) -> bool {
    let mut block_i = vec![false; g.len()];
    let mut block_j = vec![false; g.len()];
    ci.iter().for_each(|&c| block_i[c] = true);
    cj.iter().for_each(|&c| block_j[c] = true);
    // An unblocked trek exists iff some source reaches VI avoiding CI and
    // reaches VJ avoiding CJ. Non-simple treks contain simple ones, so
    // restricting to simple treks does not change the answer.
    let left = reaches_avoiding(g, vi, &block_i);
    let right = reaches_avoiding(g, vj, &block_j);
    !left.iter().zip(&right).any(|(&l, &r)| l && r)
}

/// True iff `(ci; cj)` t-separates `vi` from `vj`.
pub fn t_separated(g: &Dag, vi: &[&str], vj: &[&str], ci: &[&str], cj: &[&str]) -> Result<bool> {
    Ok(t_separated_idx(g, &g.ids(vi)?, &g.ids(vj)?, &g.ids(ci)?, &g.ids(cj)?))
}

fn combinations(pool: &[usize], k: usize, mut f: impl FnMut(&[usize]) -> bool) -> bool {
    fn rec(pool: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        if cur.len() == k {
            return f(cur);
        }
        for i in start..pool.len() {
            if pool.len() - i < k - cur.len() {
                break;
            }
            cur.push(pool[i]);
            if rec(pool, k, i + 1, cur, f) {
                return true;
            }
            cur.pop();
        }
        false
    }
    rec(pool, k, 0, &mut Vec::with_capacity(k), &mut f)
}

/// Smallest `|CA| + |CB|` over pairs that t-separate `a` from `b`, capped at
/// `min(|a|, |b|)`. This is the rank of the cross-covariance block for
/// generic parameters of any linear model on `g`.
pub fn generic_rank(g: &Dag, a: &[&str], b: &[&str]) -> Result<usize> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("generic_rank needs nonempty vertex sets"));
    }
    let ai: BTreeSet<usize> = g.ids(a)?.into_iter().collect();
    let bi: BTreeSet<usize> = g.ids(b)?.into_iter().collect();
    let (ai, bi): (Vec<usize>, Vec<usize>) = (ai.into_iter().collect(), bi.into_iter().collect());
    let cap = ai.len().min(bi.len());
    // Trek sources are common ancestors; left paths run through ancestors
    // of `a` below some source, right paths likewise for `b`.
    let anc_a = g.ancestors_of(&ai);
    let anc_b = g.ancestors_of(&bi);
    let sources: Vec<usize> = anc_a.intersection(&anc_b).copied().collect();
    let below_source = |v: &usize| sources.iter().any(|&s| g.is_descendant(*v, s));
    let pool_a: Vec<usize> = anc_a.iter().copied().filter(below_source).collect();
    let pool_b: Vec<usize> = anc_b.iter().copied().filter(below_source).collect();

    for total in 0..cap {
        for ka in 0..=total {
            let kb = total - ka;
            if ka > pool_a.len() || kb > pool_b.len() {
                continue;
            }
            let found = combinations(&pool_a, ka, |ca| {
                combinations(&pool_b, kb, |cb| t_separated_idx(g, &ai, &bi, ca, cb))
            });
            if found {
                return Ok(total);
            }
        }
    }
    Ok(cap)
}
