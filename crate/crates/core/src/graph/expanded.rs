use super::dsep::d_connected_set;
use super::{Dag, Vertex, VertexKind};
use crate::error::{Error, Result};

pub fn error_vertex_name(v: &str) -> String {
    format!("e_{v}")
}

/// Adds an explicit error vertex `e_V -> V` for every observed vertex and
/// for every latent vertex that has parents. Parentless latents are already
/// exogenous and are left untouched.
pub fn expanded_graph(g: &Dag) -> Result<Dag> {
    if g.vertices().iter().any(|v| v.kind == VertexKind::Error) {
        return Err(Error::invalid("graph already contains error vertices"));
    }
    let mut vertices = g.vertices().to_vec();
    let mut edges = g.edge_names();
    for (i, v) in g.vertices().iter().enumerate() {
        if v.kind == VertexKind::Observed || !g.parents(i).is_empty() {
            let e = error_vertex_name(&v.name);
            if g.contains(&e) {
                return Err(Error::invalid(format!("vertex name `{e}` clashes with an error term")));
            }
            vertices.push(Vertex { name: e.clone(), kind: VertexKind::Error });
            edges.push((e, v.name.clone()));
        }
    }
    Dag::new(vertices, &edges)
}

/// Exogenous sources of an expanded graph: error vertices and parentless latents.
pub fn exogenous_vertices(expanded: &Dag) -> Vec<usize> {
    (0..expanded.len())
        .filter(|&i| match expanded.kind(i) {
            VertexKind::Error => true,
            VertexKind::Latent => expanded.parents(i).is_empty(),
            VertexKind::Observed => false,
        })
        .collect()
}

/// Exogenous terms that load on the least-squares residual of `target` given
/// `given`: those d-connected to `target` given `given` in the expanded graph.
pub fn residual_support(g: &Dag, target: &str, given: &[&str]) -> Result<Vec<String>> {
    let ex = expanded_graph(g)?;
    let t = ex.id(target)?;
    let s = ex.ids(given)?;
    if s.contains(&t) {
        return Err(Error::invalid("target must not be in the conditioning set"));
    }
    let reach = d_connected_set(&ex, &[t], &s);
    let mut out: Vec<String> = exogenous_vertices(&ex)
        .into_iter()
        .filter(|&e| reach[e])
        .map(|e| ex.name(e).to_string())
        .collect();
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expands_single_vertex() {
        let g = Dag::from_names(&["V"], &[], &[]).unwrap();
        let e = expanded_graph(&g).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e.edge_names(), vec![("e_V".to_string(), "V".to_string())]);
    }

    #[test]
    fn expands_g1_leaving_latent_exogenous() {
        let g = Dag::from_names(&["W", "X", "Y"], &["U"], &[("W", "X"), ("X", "Y"), ("U", "X"), ("U", "Y")])
            .unwrap();
        let e = expanded_graph(&g).unwrap();
        assert_eq!(e.len(), g.len() + 3);
        assert_eq!(e.edge_count(), g.edge_count() + 3);
        assert!(!e.contains("e_U"));
        assert!(expanded_graph(&e).is_err());
    }

    #[test]
    fn support_examples() {
        let chain = Dag::from_names(&["V1", "V2", "V3"], &[], &[("V1", "V2"), ("V2", "V3")]).unwrap();
        assert_eq!(residual_support(&chain, "V2", &["V1", "V3"]).unwrap(), vec!["e_V2", "e_V3"]);
        let lone = Dag::from_names(&["V"], &[], &[]).unwrap();
        assert_eq!(residual_support(&lone, "V", &[]).unwrap(), vec!["e_V"]);
        let g1 = Dag::from_names(&["W", "X", "Y"], &["U"], &[("W", "X"), ("X", "Y"), ("U", "X"), ("U", "Y")])
            .unwrap();
        assert_eq!(residual_support(&g1, "W", &["X", "Y"]).unwrap(), vec!["U", "e_W", "e_X", "e_Y"]);
    }
}
