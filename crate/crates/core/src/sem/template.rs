//! The four-group synthetic template used by the benchmark.
//!
//! Groups and edges:
//! * `W` (candidate instruments): parents `Z_B` and the latent `U_w`;
//!   children `X`, `Z_F`, `Z_C`.
//! * `Z_F`: parents `W`; children `X`, `Y`.
//! * `Z_C`: parents `W` and `U`; child `X`.
//! * `Z_B`: parent `U`; children `X`, `Y`, `W`.
//! * `U -> X`, `U -> Y` with the fixed confounding coefficient, and `X -> Y`.
//!
//! Free coefficients are standard normal draws that are rescaled, vertex by
//! vertex in topological order, so that every observed variable has unit
//! variance. The confounding coefficients are left untouched by the scaling.
//! Draws that leave any vertex with error variance at or below
//! [`MIN_ERROR_VARIANCE`] are rejected.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{ErrorDist, LinearSem};
use crate::error::{Error, Result};
use crate::graph::{Dag, Vertex};

pub const MAX_DRAWS: usize = 10_000;
pub const MIN_ERROR_VARIANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateConfig {
    pub n_w: usize,
    pub n_zf: usize,
    pub n_zc: usize,
    pub n_zb: usize,
    /// `lambda_xu = lambda_yu`.
    pub confounder_strength: f64,
    pub min_abs_dce: f64,
    #[serde(default)]
    pub seed: u64,
}

impl TemplateConfig {
    /// The standard benchmark configuration at one confounding level.
    pub fn benchmark(confounder_strength: f64, seed: u64) -> Self {
        Self { n_w: 25, n_zf: 10, n_zc: 10, n_zb: 1, confounder_strength, min_abs_dce: 0.05, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_abs_dce >= 0.0) {
            return Err(Error::invalid("min_abs_dce must be nonnegative"));
        }
        if !(self.confounder_strength.abs() < 1.0) {
            return Err(Error::invalid("confounder_strength must lie in (-1, 1) for unit-variance outcomes"));
        }
        Ok(())
    }
}

/// Group membership of a generated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRoles {
    pub w: Vec<String>,
    pub zf: Vec<String>,
    pub zc: Vec<String>,
    pub zb: Vec<String>,
    pub x: String,
    pub y: String,
    pub u: String,
    pub uw: String,
}

impl TemplateRoles {
    /// Every observed variable except the treatment and the outcome.
    pub fn candidates(&self) -> Vec<String> {
        self.w.iter().chain(&self.zf).chain(&self.zc).chain(&self.zb).cloned().collect()
    }
}

fn names(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

fn structure(c: &TemplateConfig) -> (TemplateRoles, Dag) {
    let roles = TemplateRoles {
        w: names("W", c.n_w),
        zf: names("ZF", c.n_zf),
        zc: names("ZC", c.n_zc),
        zb: names("ZB", c.n_zb),
        x: "X".into(),
        y: "Y".into(),
        u: "U".into(),
        uw: "Uw".into(),
    };
    let mut vertices: Vec<Vertex> = roles.candidates().into_iter().map(Vertex::observed).collect();
    vertices.push(Vertex::observed("X"));
    vertices.push(Vertex::observed("Y"));
    vertices.push(Vertex::latent("U"));
    vertices.push(Vertex::latent("Uw"));

    let mut edges: Vec<(String, String)> = Vec::new();
    let mut add = |a: &String, b: &String| edges.push((a.clone(), b.clone()));
    let (x, y, u, uw) = (&roles.x, &roles.y, &roles.u, &roles.uw);
    for zb in &roles.zb {
        add(u, zb);
        add(zb, x);
        add(zb, y);
        for w in &roles.w {
            add(zb, w);
        }
    }
    for w in &roles.w {
        add(uw, w);
        add(w, x);
        for zf in &roles.zf {
            add(w, zf);
        }
        for zc in &roles.zc {
            add(w, zc);
        }
    }
    for zf in &roles.zf {
        add(zf, x);
        add(zf, y);
    }
    for zc in &roles.zc {
        add(u, zc);
        add(zc, x);
    }
    add(u, x);
    add(u, y);
    add(x, y);
    let dag = Dag::new(vertices, &edges).expect("template structure is acyclic");
    (roles, dag)
}

fn quad(cov: &[Vec<f64>], a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    a.iter().map(|&(i, ca)| b.iter().map(|&(j, cb)| ca * cb * cov[i][j]).sum::<f64>()).sum()
}

/// One standardized draw: coefficients and error distributions for every vertex.
fn draw(dag: &Dag, roles: &TemplateRoles, strength: f64, rng: &mut ChaCha8Rng) -> (Vec<(String, String, f64)>, Vec<(String, ErrorDist)>) {
    let n = dag.len();
    let (xi, yi, ui) = (dag.id(&roles.x).unwrap(), dag.id(&roles.y).unwrap(), dag.id(&roles.u).unwrap());
    // Covariance among vertices processed so far.
    let mut cov = vec![vec![0.0; n]; n];
    let mut coefficients = Vec::new();
    let mut errors = Vec::new();
    for &v in dag.topological_order() {
        let parents = dag.parents(v);
        if parents.is_empty() {
            // Latent sources: unit-variance Laplace.
            cov[v][v] = 1.0;
            errors.push((dag.name(v).to_string(), ErrorDist::laplace_with_variance(1.0)));
            continue;
        }
        let fixed = |p: usize| p == ui && (v == xi || v == yi);
        let free: Vec<(usize, f64)> = parents
            .iter()
            .filter(|&&p| !fixed(p))
            .map(|&p| (p, StandardNormal.sample(&mut *rng)))
            .collect();
        let fixed_part: Vec<(usize, f64)> = parents.iter().filter(|&&p| fixed(p)).map(|&p| (p, strength)).collect();

        // Var(c * (free + e) + fixed) = 1 with a unit-variance raw error e.
        let qa = quad(&cov, &free, &free) + 1.0;
        let qb = 2.0 * quad(&cov, &free, &fixed_part);
        let qc = quad(&cov, &fixed_part, &fixed_part) - 1.0;
        let scale = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);

        let mut all: Vec<(usize, f64)> = free.iter().map(|&(p, b)| (p, b * scale)).collect();
        all.extend_from_slice(&fixed_part);
        let var = quad(&cov, &all, &all) + scale * scale;
        for k in 0..n {
            let c: f64 = all.iter().map(|&(p, l)| l * cov[p][k]).sum();
            cov[v][k] = c;
            cov[k][v] = c;
        }
        cov[v][v] = var;
        for &(p, l) in &all {
            coefficients.push((dag.name(v).to_string(), dag.name(p).to_string(), l));
        }
        errors.push((dag.name(v).to_string(), ErrorDist::laplace_with_variance(scale * scale)));
    }
    (coefficients, errors)
}

/// A generated benchmark model and its group roles.
#[derive(Debug, Clone)]
pub struct Template {
    pub model: LinearSem,
    pub roles: TemplateRoles,
}

/// Draws template models until `|lambda_yx| >= min_abs_dce`.
pub fn generate_template(c: &TemplateConfig) -> Result<Template> {
    c.validate()?;
    let (roles, dag) = structure(c);
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    for _ in 0..MAX_DRAWS {
        let (coefficients, errors) = draw(&dag, &roles, c.confounder_strength, &mut rng);
        if errors.iter().any(|(_, e)| e.variance() <= MIN_ERROR_VARIANCE) {
            continue;
        }
        let dce = coefficients
            .iter()
            .find(|(ch, pa, _)| *ch == roles.y && *pa == roles.x)
            .map(|t| t.2)
            .unwrap_or(0.0);
        if dce.abs() < c.min_abs_dce {
            continue;
        }
        let model = LinearSem::new(dag.clone(), &coefficients, &errors)?.with_roles(roles.clone());
        return Ok(Template { model, roles });
    }
    Err(Error::Generation(format!(
        "no draw reached |dce| >= {} with error variances above {MIN_ERROR_VARIANCE} within {MAX_DRAWS} attempts",
        c.min_abs_dce
    )))
}
