//! Directed acyclic graphs over named vertices and the purely graphical
//! queries used by the discovery procedures: d-separation, t-separation and
//! generic rank, instrument validity, choke points and the expanded graph.

mod chokepoint;
mod dsep;
mod expanded;
mod trek;

pub use chokepoint::{choke_point_diagnosis, ChokePointDiagnosis, ConditionFlags};
pub use dsep::{
    active_noncausal_path_exists, d_separated, for_each_active_path, graphical_iv_criteria,
    DSeparationOracle,
};
pub use expanded::{error_vertex_name, expanded_graph, exogenous_vertices, residual_support};
pub use trek::{enumerate_treks, generic_rank, t_separated, Trek};

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Observed,
    Latent,
    /// Exogenous error term; only produced by [`expanded_graph`].
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub name: String,
    pub kind: VertexKind,
}

impl Vertex {
    pub fn observed(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: VertexKind::Observed }
    }

    pub fn latent(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: VertexKind::Latent }
    }
}

/// An acyclic directed graph. Immutable after construction; all derived
/// structure (topological order, descendant closure) is computed once.
#[derive(Debug, Clone)]
pub struct Dag {
    vertices: Vec<Vertex>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo: Vec<usize>,
    // descendants[a][d] is true when d is a descendant of a (reflexive).
    descendants: Vec<Vec<bool>>,
}

impl Dag {
    pub fn new<S: AsRef<str>>(vertices: Vec<Vertex>, edges: &[(S, S)]) -> Result<Self> {
        let mut index = HashMap::with_capacity(vertices.len());
        for (i, v) in vertices.iter().enumerate() {
            if v.name.is_empty() {
                return Err(Error::invalid("empty vertex name"));
            }
            if index.insert(v.name.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate vertex name `{}`", v.name)));
            }
        }
        let n = vertices.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for (a, b) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            let pa = *index.get(a).ok_or_else(|| Error::UnknownVariable(a.to_string()))?;
            let ch = *index.get(b).ok_or_else(|| Error::UnknownVariable(b.to_string()))?;
            if pa == ch {
                return Err(Error::Cycle(vec![a.to_string(), a.to_string()]));
            }
            if children[pa].contains(&ch) {
                continue;
            }
            children[pa].push(ch);
            parents[ch].push(pa);
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }
        for (i, v) in vertices.iter().enumerate() {
            if v.kind == VertexKind::Error && (!parents[i].is_empty() || children[i].len() != 1) {
                return Err(Error::invalid(format!(
                    "error vertex `{}` must have no parents and exactly one child",
                    v.name
                )));
            }
        }

        let topo = match topological_sort(&parents, &children) {
            Some(t) => t,
            None => {
                let cycle = find_cycle(&children)
                    .into_iter()
                    .map(|i| vertices[i].name.clone())
                    .collect();
                return Err(Error::Cycle(cycle));
            }
        };

        let mut descendants = vec![vec![false; n]; n];
        for &v in topo.iter().rev() {
            descendants[v][v] = true;
            for &c in &children[v] {
                let (head, tail) = split_pair(&mut descendants, v, c);
                for (d, &flag) in head.iter_mut().zip(tail.iter()) {
                    *d |= flag;
                }
            }
        }

        Ok(Self { vertices, index, parents, children, topo, descendants })
    }

    /// Convenience constructor from name lists.
    pub fn from_names(observed: &[&str], latent: &[&str], edges: &[(&str, &str)]) -> Result<Self> {
        let vertices = observed
            .iter()
            .map(|n| Vertex::observed(*n))
            .chain(latent.iter().map(|n| Vertex::latent(*n)))
            .collect();
        Self::new(vertices, edges)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn name(&self, i: usize) -> &str {
        &self.vertices[i].name
    }

    pub fn kind(&self, i: usize) -> VertexKind {
        self.vertices[i].kind
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn ids(&self, names: &[&str]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.id(n)).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.children[from].binary_search(&to).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    /// Edges as (parent, child) index pairs, ordered by parent then child.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(p, cs)| cs.iter().map(move |&c| (p, c)))
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// True when `d` is a descendant of `a`; every vertex is its own descendant.
    pub fn is_descendant(&self, d: usize, a: usize) -> bool {
        self.descendants[a][d]
    }

    pub fn names_of(&self, ids: impl IntoIterator<Item = usize>) -> Vec<String> {
        ids.into_iter().map(|i| self.vertices[i].name.clone()).collect()
    }

    pub fn observed_names(&self) -> Vec<String> {
        self.names_where(VertexKind::Observed)
    }

    pub fn latent_names(&self) -> Vec<String> {
        self.names_where(VertexKind::Latent)
    }

    fn names_where(&self, kind: VertexKind) -> Vec<String> {
        self.vertices.iter().filter(|v| v.kind == kind).map(|v| v.name.clone()).collect()
    }

    /// Ancestors of `set` (reflexive).
    pub fn ancestors_of(&self, set: &[usize]) -> BTreeSet<usize> {
        (0..self.len())
            .filter(|&a| set.iter().any(|&s| self.descendants[a][s]))
            .collect()
    }

    /// A copy with the edge `from -> to` removed.
    pub fn without_edge(&self, from: &str, to: &str) -> Result<Dag> {
        let (f, t) = (self.id(from)?, self.id(to)?);
        if !self.has_edge(f, t) {
            return Err(Error::invalid(format!("edge {from} -> {to} not present")));
        }
        let edges: Vec<(&str, &str)> = self
            .edges()
            .filter(|&(p, c)| (p, c) != (f, t))
            .map(|(p, c)| (self.name(p), self.name(c)))
            .collect();
        Dag::new(self.vertices.clone(), &edges)
    }

    pub fn edge_names(&self) -> Vec<(String, String)> {
        self.edges().map(|(p, c)| (self.name(p).to_string(), self.name(c).to_string())).collect()
    }

    pub fn to_spec(&self) -> GraphSpec {
        GraphSpec {
            vertices: self
                .vertices
                .iter()
                .filter(|v| v.kind != VertexKind::Error)
                .cloned()
                .collect(),
            edges: self
                .edges()
                .filter(|&(p, _)| self.kind(p) != VertexKind::Error)
                .map(|(p, c)| (self.name(p).to_string(), self.name(c).to_string()))
                .collect(),
        }
    }
}

/// Serialized form of a [`Dag`]. Error vertices never appear in files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<(String, String)>,
}

impl GraphSpec {
    pub fn build(&self) -> Result<Dag> {
        if let Some(v) = self.vertices.iter().find(|v| v.kind == VertexKind::Error) {
            return Err(Error::invalid(format!(
                "error vertex `{}` in graph file; error terms are implicit",
                v.name
            )));
        }
        Dag::new(self.vertices.clone(), &self.edges)
    }
}

fn split_pair<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = v.split_at_mut(b);
        (&mut lo[a], &hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(a);
        (&mut hi[0], &lo[b])
    }
}

// Kahn's algorithm; ties broken by index so the order is reproducible.
fn topological_sort(parents: &[Vec<usize>], children: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = parents.len();
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.insert(c);
            }
        }
    }
    (order.len() == n).then_some(order)
}

fn find_cycle(children: &[Vec<usize>]) -> Vec<usize> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    fn visit(v: usize, ch: &[Vec<usize>], mark: &mut [Mark], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
        mark[v] = Mark::Open;
        stack.push(v);
        for &c in &ch[v] {
            match mark[c] {
                Mark::Open => {
                    let start = stack.iter().position(|&s| s == c).unwrap();
                    let mut cycle = stack[start..].to_vec();
                    cycle.push(c);
                    return Some(cycle);
                }
                Mark::New => {
                    if let Some(cy) = visit(c, ch, mark, stack) {
                        return Some(cy);
                    }
                }
                Mark::Done => {}
            }
        }
        stack.pop();
        mark[v] = Mark::Done;
        None
    }
    let mut mark = vec![Mark::New; children.len()];
    for v in 0..children.len() {
        if mark[v] == Mark::New {
            if let Some(c) = visit(v, children, &mut mark, &mut Vec::new()) {
                return c;
            }
        }
    }
    Vec::new()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1() -> Dag {
        Dag::from_names(&["W", "X", "Y"], &["U"], &[("W", "X"), ("X", "Y"), ("U", "X"), ("U", "Y")])
            .unwrap()
    }

    #[test]
    fn builds_g1() {
        let g = g1();
        assert_eq!(g.len(), 4);
        assert_eq!(g.edge_count(), 4);
        assert_eq!(g.latent_names(), vec!["U"]);
        let (w, y) = (g.id("W").unwrap(), g.id("Y").unwrap());
        assert!(g.is_descendant(y, w));
        assert!(!g.is_descendant(w, y));
        assert!(g.is_descendant(w, w));
    }

    #[test]
    fn rejects_cycle_and_names_it() {
        let err = Dag::from_names(&["A", "B", "C"], &[], &[("A", "B"), ("B", "C"), ("C", "A")])
            .unwrap_err();
        match err {
            Error::Cycle(c) => {
                assert_eq!(c.first(), c.last());
                assert_eq!(c.len(), 4);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_unknown_and_duplicate() {
        assert!(matches!(
            Dag::from_names(&["A"], &[], &[("A", "B")]),
            Err(Error::UnknownVariable(_))
        ));
        assert!(Dag::from_names(&["A", "A"], &[], &[]).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let g = g1();
        let json = serde_json::to_string(&g.to_spec()).unwrap();
        assert!(json.contains(r#"{"name":"U","kind":"latent"}"#));
        let back: GraphSpec = serde_json::from_str(&json).unwrap();
        let h = back.build().unwrap();
        assert_eq!(h.edge_names(), g.edge_names());
    }

    #[test]
    fn without_edge_requires_edge() {
        let g = g1();
        let h = g.without_edge("X", "Y").unwrap();
        assert_eq!(h.edge_count(), 3);
        assert!(g.without_edge("Y", "X").is_err());
    }
}
