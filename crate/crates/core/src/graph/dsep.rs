use std::collections::VecDeque;
use std::ops::ControlFlow;

use super::Dag;
use crate::error::{Error, Result};
use crate::stats::IndependenceOracle;

fn check_disjoint(sets: &[&[usize]]) -> Result<()> {
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            if a.iter().any(|x| b.contains(x)) {
                return Err(Error::invalid("vertex sets must be pairwise disjoint"));
            }
        }
    }
    Ok(())
}

/// Indicator over all vertices that are ancestors of (or in) `given`.
fn ancestor_mask(g: &Dag, given: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; g.len()];
    for a in g.ancestors_of(given) {
        mask[a] = true;
    }
    mask
}

/// Vertices d-connected to some member of `from` given `given`, via the
/// reachability ("Bayes ball") traversal. Colliders are open when they or
/// any descendant are conditioned, i.e. when they are ancestors of `given`.
pub(crate) fn d_connected_set(g: &Dag, from: &[usize], given: &[usize]) -> Vec<bool> {
    let n = g.len();
    let mut in_given = vec![false; n];
    for &s in given {
        in_given[s] = true;
    }
    let open_collider = ancestor_mask(g, given);

    // Direction 0: arrived from a child (moving up); 1: arrived from a parent.
    let mut visited = vec![[false; 2]; n];
    let mut reachable = vec![false; n];
    let mut queue: VecDeque<(usize, usize)> = from.iter().map(|&a| (a, 0)).collect();
    while let Some((v, dir)) = queue.pop_front() {
        if visited[v][dir] {
            continue;
        }
        visited[v][dir] = true;
        if !in_given[v] {
            reachable[v] = true;
        }
        if dir == 0 {
            if !in_given[v] {
                queue.extend(g.parents(v).iter().map(|&p| (p, 0)));
                queue.extend(g.children(v).iter().map(|&c| (c, 1)));
            }
        } else {
            if !in_given[v] {
                queue.extend(g.children(v).iter().map(|&c| (c, 1)));
            }
            if open_collider[v] {
                queue.extend(g.parents(v).iter().map(|&p| (p, 0)));
            }
        }
    }
    reachable
}

pub(crate) fn d_separated_idx(g: &Dag, a: &[usize], b: &[usize], s: &[usize]) -> bool {
    let reach = d_connected_set(g, a, s);
    !b.iter().any(|&v| reach[v])
}

/// True iff `s` d-separates every vertex of `a` from every vertex of `b`.
pub fn d_separated(g: &Dag, a: &[&str], b: &[&str], s: &[&str]) -> Result<bool> {
    let (a, b, s) = (g.ids(a)?, g.ids(b)?, g.ids(s)?);
    check_disjoint(&[&a, &b, &s])?;
    Ok(d_separated_idx(g, &a, &b, &s))
}

/// Calls `visit` on every simple path from `from` to `to` that is active
/// given `given`. Paths are vertex sequences including both endpoints.
pub fn for_each_active_path<F>(g: &Dag, from: usize, to: usize, given: &[usize], mut visit: F)
where
    F: FnMut(&[usize]) -> ControlFlow<()>,
{
    let mut in_given = vec![false; g.len()];
    for &s in given {
        in_given[s] = true;
    }
    let open_collider = ancestor_mask(g, given);
    let mut on_path = vec![false; g.len()];
    let mut path = vec![from];
    on_path[from] = true;
    let _ = extend_active(g, to, &in_given, &open_collider, &mut on_path, &mut path, &mut visit);
}

fn extend_active<F>(
    g: &Dag,
    to: usize,
    in_given: &[bool],
    open_collider: &[bool],
    on_path: &mut [bool],
    path: &mut Vec<usize>,
    visit: &mut F,
) -> ControlFlow<()>
where
    F: FnMut(&[usize]) -> ControlFlow<()>,
{
    let cur = *path.last().unwrap();
    if cur == to {
        return visit(path);
    }
    let prev = (path.len() >= 2).then(|| path[path.len() - 2]);
    let neighbours = g.parents(cur).iter().chain(g.children(cur).iter());
    for &next in neighbours {
        if on_path[next] {
            continue;
        }
        // Activity of `cur` is decided once both its path edges are known.
        if let Some(p) = prev {
            let collider = g.has_edge(p, cur) && g.has_edge(next, cur);
            let active = if collider { open_collider[cur] } else { !in_given[cur] };
            if !active {
                continue;
            }
        }
        on_path[next] = true;
        path.push(next);
        let flow = extend_active(g, to, in_given, open_collider, on_path, path, visit);
        path.pop();
        on_path[next] = false;
        flow?;
    }
    ControlFlow::Continue(())
}

fn is_directed_from_start(g: &Dag, path: &[usize]) -> bool {
    path.windows(2).all(|w| g.has_edge(w[0], w[1]))
}

/// True iff some path between `v` and `y`, active given `given`, is either a
/// back-door path into `v` or contains a collider. Directed paths from `v`
/// to `y` are the only active paths that do not count.
pub fn active_noncausal_path_exists(g: &Dag, v: &str, y: &str, given: &[&str]) -> Result<bool> {
    let (vi, yi, s) = (g.id(v)?, g.id(y)?, g.ids(given)?);
    if s.contains(&vi) || s.contains(&yi) {
        return Err(Error::invalid("endpoints must not be in the conditioning set"));
    }
    Ok(active_noncausal_idx(g, vi, yi, &s))
}

pub(crate) fn active_noncausal_idx(g: &Dag, v: usize, y: usize, given: &[usize]) -> bool {
    let mut found = false;
    for_each_active_path(g, v, y, given, |p| {
        // Any simple path that is not directed v -> ... -> y either points
        // into v without colliders or contains a collider.
        if is_directed_from_start(g, p) {
            ControlFlow::Continue(())
        } else {
            found = true;
            ControlFlow::Break(())
        }
    });
    found
}

/// The graphical criteria for `w` being an instrument for `x -> y` given `z`.
pub fn graphical_iv_criteria(g: &Dag, w: &str, z: &[&str], x: &str, y: &str) -> Result<bool> {
    let (wi, xi, yi, zi) = (g.id(w)?, g.id(x)?, g.id(y)?, g.ids(z)?);
    if !g.has_edge(xi, yi) {
        return Err(Error::invalid(format!("edge {x} -> {y} is required")));
    }
    if zi.contains(&wi) || zi.contains(&xi) || zi.contains(&yi) || wi == xi || wi == yi {
        return Err(Error::invalid("w, x, y must be distinct and outside the conditioning set"));
    }
    if zi.iter().any(|&z| g.is_descendant(z, xi) || g.is_descendant(z, yi)) {
        return Ok(false);
    }
    if d_separated_idx(g, &[wi], &[xi], &zi) {
        return Ok(false);
    }
    let cut = g.without_edge(x, y)?;
    Ok(d_separated_idx(&cut, &[wi], &[yi], &zi))
}

/// Conditional independence answered by d-separation in a known graph.
pub struct DSeparationOracle<'a> {
    pub graph: &'a Dag,
}

impl IndependenceOracle for DSeparationOracle<'_> {
    fn independent(&self, a: &str, b: &str, given: &[&str]) -> Result<bool> {
        d_separated(self.graph, &[a], &[b], given)
    }
}
