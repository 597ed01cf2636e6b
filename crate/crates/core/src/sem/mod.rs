//! Linear non-Gaussian structural equation models: exact covariances,
//! ancestral and interventional sampling, and the synthetic template.

mod model;
mod template;

pub use model::{model_from_edges, ErrorDist, ErrorFamily, ErrorSpec, LinearSem, ModelSpec, TrueDce};
pub use template::{generate_template, Template, TemplateConfig, TemplateRoles, MAX_DRAWS, MIN_ERROR_VARIANCE};
