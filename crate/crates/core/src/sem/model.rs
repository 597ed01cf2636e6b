use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::template::TemplateRoles;
use crate::error::{Error, Result};
use crate::graph::{Dag, GraphSpec, Vertex, VertexKind};
use crate::stats::{CovMatrix, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorFamily {
    Laplace,
}

/// Zero-location error distribution of one vertex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorDist {
    pub family: ErrorFamily,
    pub scale: f64,
}

impl ErrorDist {
    pub fn laplace(scale: f64) -> Self {
        Self { family: ErrorFamily::Laplace, scale }
    }

    /// Laplace with the given variance (`2 s^2`).
    pub fn laplace_with_variance(variance: f64) -> Self {
        Self::laplace((variance / 2.0).sqrt())
    }

    pub fn variance(&self) -> f64 {
        match self.family {
            ErrorFamily::Laplace => 2.0 * self.scale * self.scale,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self.family {
            // Difference of two unit exponentials is standard Laplace.
            ErrorFamily::Laplace => {
                let a: f64 = Exp1.sample(rng);
                let b: f64 = Exp1.sample(rng);
                self.scale * (a - b)
            }
        }
    }
}

/// Effect of `X` on `Y` read off the structural coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueDce {
    pub value: f64,
    /// False when the graph has no `X -> Y` edge; `value` is then 0.
    pub edge_present: bool,
}

/// A linear structural equation model `V_i = sum_j lambda_ij V_j + e_i` over
/// a DAG of observed and latent vertices with independent errors.
#[derive(Debug, Clone)]
pub struct LinearSem {
    graph: Dag,
    // Incoming coefficients per vertex: (parent, lambda), parent-sorted.
    incoming: Vec<Vec<(usize, f64)>>,
    errors: Vec<ErrorDist>,
    roles: Option<TemplateRoles>,
}

impl LinearSem {
    /// `coefficients` are `(child, parent, lambda)` and must match the edges
    /// exactly; every vertex needs an error distribution with positive scale.
    pub fn new(graph: Dag, coefficients: &[(String, String, f64)], errors: &[(String, ErrorDist)]) -> Result<Self> {
        if graph.vertices().iter().any(|v| v.kind == VertexKind::Error) {
            return Err(Error::invalid("structural models carry error terms implicitly"));
        }
        let n = graph.len();
        let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (child, parent, lambda) in coefficients {
            let (c, p) = (graph.id(child)?, graph.id(parent)?);
            if !graph.has_edge(p, c) {
                return Err(Error::invalid(format!("coefficient for missing edge {parent} -> {child}")));
            }
            if !lambda.is_finite() {
                return Err(Error::invalid(format!("non-finite coefficient on {parent} -> {child}")));
            }
            if incoming[c].iter().any(|&(q, _)| q == p) {
                return Err(Error::invalid(format!("duplicate coefficient for {parent} -> {child}")));
            }
            incoming[c].push((p, *lambda));
        }
        for (c, inc) in incoming.iter_mut().enumerate() {
            if inc.len() != graph.parents(c).len() {
                return Err(Error::invalid(format!("missing coefficients into `{}`", graph.name(c))));
            }
            inc.sort_by_key(|&(p, _)| p);
        }
        let mut errs: Vec<Option<ErrorDist>> = vec![None; n];
        for (v, d) in errors {
            let i = graph.id(v)?;
            if !(d.scale > 0.0 && d.scale.is_finite()) {
                return Err(Error::invalid(format!("error scale for `{v}` must be positive")));
            }
            errs[i] = Some(*d);
        }
        let errors = errs
            .into_iter()
            .enumerate()
            .map(|(i, e)| e.ok_or_else(|| Error::invalid(format!("no error distribution for `{}`", graph.name(i)))))
            .collect::<Result<Vec<_>>>()?;
        let model = Self { graph, incoming, errors, roles: None };
        model.population_covariance()?;
        Ok(model)
    }

    pub(crate) fn with_roles(mut self, roles: TemplateRoles) -> Self {
        self.roles = Some(roles);
        self
    }

    pub fn graph(&self) -> &Dag {
        &self.graph
    }

    pub fn roles(&self) -> Option<&TemplateRoles> {
        self.roles.as_ref()
    }

    pub fn coefficient(&self, child: &str, parent: &str) -> Result<Option<f64>> {
        let (c, p) = (self.graph.id(child)?, self.graph.id(parent)?);
        Ok(self.incoming[c].iter().find(|&&(q, _)| q == p).map(|&(_, l)| l))
    }

    pub fn error(&self, v: &str) -> Result<ErrorDist> {
        Ok(self.errors[self.graph.id(v)?])
    }

    /// Observed variable names in graph order.
    pub fn observed_order(&self) -> Vec<String> {
        self.graph.observed_names()
    }

    /// Total-effect matrix `(I - Lambda)^-1`, filled in topological order.
    fn total_effects(&self) -> DMatrix<f64> {
        let n = self.graph.len();
        let mut t = DMatrix::<f64>::zeros(n, n);
        for &v in self.graph.topological_order() {
            t[(v, v)] = 1.0;
            for &(p, l) in &self.incoming[v] {
                let row = t.row(p) * l;
                let mut target = t.row_mut(v);
                target += row;
            }
        }
        t
    }

    /// Exact covariance over every vertex (observed and latent).
    pub fn full_covariance(&self) -> CovMatrix {
        let t = self.total_effects();
        let omega = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.errors.len(),
            self.errors.iter().map(ErrorDist::variance),
        ));
        let s = &t * omega * t.transpose();
        let s = (&s + s.transpose()) * 0.5;
        let labels = self.graph.vertices().iter().map(|v| v.name.clone()).collect();
        CovMatrix::from_parts(labels, s, None)
    }

    /// Exact covariance of the observed variables.
    pub fn population_covariance(&self) -> Result<CovMatrix> {
        let full = self.full_covariance();
        let names = self.observed_order();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let cov = full.restrict(&refs)?;
        if !refs.is_empty() {
            let eig = SymmetricEigen::new(cov.values().clone()).eigenvalues;
            let min = eig.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            if min <= 1e-10 {
                return Err(Error::Numerical(format!(
                    "implied observed covariance is not positive definite (min eigenvalue {min:.3e})"
                )));
            }
        }
        Ok(cov)
    }

    fn simulate(&self, n: usize, seed: u64, fixed: Option<(usize, f64)>) -> (DMatrix<f64>, DMatrix<f64>) {
        let nv = self.graph.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = DMatrix::<f64>::zeros(n, nv);
        let mut errors = DMatrix::<f64>::zeros(n, nv);
        for &v in self.graph.topological_order() {
            for r in 0..n {
                errors[(r, v)] = self.errors[v].draw(&mut rng);
            }
            if let Some((xv, value)) = fixed {
                if xv == v {
                    values.column_mut(v).fill(value);
                    continue;
                }
            }
            let mut col = errors.column(v).into_owned();
            for &(p, l) in &self.incoming[v] {
                col.axpy(l, &values.column(p), 1.0);
            }
            values.set_column(v, &col);
        }
        (values, errors)
    }

    fn observed_dataset(&self, values: &DMatrix<f64>) -> Result<Dataset> {
        let obs: Vec<usize> =
            (0..self.graph.len()).filter(|&i| self.graph.kind(i) == VertexKind::Observed).collect();
        Dataset::new(self.graph.names_of(obs.iter().copied()), values.select_columns(&obs))
    }

    /// Ancestral sample of the observed variables; deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::invalid("sample size must be at least 1"));
        }
        let (values, _) = self.simulate(n, seed, None);
        self.observed_dataset(&values)
    }

    /// Sample with every vertex value and every error draw, columns in graph
    /// vertex order. Values are not centered.
    pub fn sample_with_errors(&self, n: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        self.simulate(n, seed, None)
    }

    /// Sample under the perfect intervention `do(target = value)`: incoming
    /// edges of `target` are cut and its value fixed. Values are not centered.
    pub fn sample_intervention(&self, target: &str, value: f64, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        let t = self.graph.id(target)?;
        Ok(self.simulate(n, seed, Some((t, value))).0)
    }

    pub fn true_dce(&self, x: &str, y: &str) -> Result<TrueDce> {
        Ok(match self.coefficient(y, x)? {
            Some(value) => TrueDce { value, edge_present: true },
            None => TrueDce { value: 0.0, edge_present: false },
        })
    }

    pub fn to_spec(&self) -> ModelSpec {
        let graph = self.graph.to_spec();
        let mut coefficients = Vec::new();
        for (c, inc) in self.incoming.iter().enumerate() {
            for &(p, l) in inc {
                coefficients.push((self.graph.name(c).to_string(), self.graph.name(p).to_string(), l));
            }
        }
        let errors = self
            .errors
            .iter()
            .enumerate()
            .map(|(i, d)| ErrorSpec { v: self.graph.name(i).to_string(), family: d.family, scale: d.scale })
            .collect();
        ModelSpec { vertices: graph.vertices, edges: graph.edges, coefficients, errors, roles: self.roles.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    pub v: String,
    pub family: ErrorFamily,
    pub scale: f64,
}

/// Serialized model: graph JSON plus coefficients `[child, parent, lambda]`,
/// error distributions and, for generated benchmark models, group roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<(String, String)>,
    pub coefficients: Vec<(String, String, f64)>,
    pub errors: Vec<ErrorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roles: Option<TemplateRoles>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<LinearSem> {
        let graph = GraphSpec { vertices: self.vertices.clone(), edges: self.edges.clone() }.build()?;
        let errors: Vec<(String, ErrorDist)> = self
            .errors
            .iter()
            .map(|e| (e.v.clone(), ErrorDist { family: e.family, scale: e.scale }))
            .collect();
        let model = LinearSem::new(graph, &self.coefficients, &errors)?;
        Ok(match &self.roles {
            Some(r) => model.with_roles(r.clone()),
            None => model,
        })
    }
}

/// Builds a model from `(parent, child, lambda)` edges with the given error
/// variances; vertices named in `latent` are latent, the rest observed in
/// first-appearance order.
pub fn model_from_edges(
    observed: &[&str],
    latent: &[&str],
    edges: &[(&str, &str, f64)],
    error_variance: &HashMap<&str, f64>,
    default_variance: f64,
) -> Result<LinearSem> {
    let pairs: Vec<(&str, &str)> = edges.iter().map(|&(p, c, _)| (p, c)).collect();
    let g = Dag::from_names(observed, latent, &pairs)?;
    let coefs: Vec<(String, String, f64)> = edges.iter().map(|&(p, c, l)| (c.to_string(), p.to_string(), l)).collect();
    let errors: Vec<(String, ErrorDist)> = g
        .vertices()
        .iter()
        .map(|v| {
            let var = error_variance.get(v.name.as_str()).copied().unwrap_or(default_variance);
            (v.name.clone(), ErrorDist::laplace_with_variance(var))
        })
        .collect();
    LinearSem::new(g, &coefs, &errors)
}
