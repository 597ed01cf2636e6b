//! Causal effect estimators and the registry that selects them by name.

mod baseline;
mod bsisvive;
mod lasso;
mod sisvive;

pub use baseline::{ols_effect, tsls, tsls_cov, MIN_FIRST_STAGE_R2};
pub use bsisvive::{b_score, b_sisvive, rank_candidates, res_dependence_score, BsisviveConfig, BsisviveResult, RefinementStep};
pub use lasso::{lasso, GramLasso, LassoFit, MAX_SWEEPS, TOLERANCE};
pub use sisvive::{sisvive, SisviveConfig, SisviveResult};

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::discovery::{discover, DiscoveryConfig, DiscoveryInput};
use crate::error::{Error, Result};
use crate::sem::TemplateRoles;
use crate::stats::{as_strs, Dataset, TestConfig};

/// Settings shared by every estimator; each one reads what it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub test: TestConfig,
    pub t: f64,
    pub max_z: usize,
    pub sisvive: SisviveConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { test: TestConfig::default(), t: 0.5, max_z: 3, sisvive: SisviveConfig::default() }
    }
}

impl EstimatorConfig {
    /// The same settings with every random stream re-seeded from `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.test.seed = seed;
        c.sisvive.seed = crate::seed::mix(seed, &[1]);
        c
    }
}

pub struct EstimationContext<'a> {
    pub data: &'a Dataset,
    pub x: &'a str,
    pub y: &'a str,
    /// Candidate instruments / covariates (everything except `x`, `y`).
    pub candidates: &'a [String],
    /// Group membership, needed only by the oracle baselines.
    pub roles: Option<&'a TemplateRoles>,
    /// User-chosen instruments and conditioning set for plain TSLS.
    pub instruments: Option<&'a [String]>,
    pub conditioning: &'a [String],
    pub config: &'a EstimatorConfig,
}

impl<'a> EstimationContext<'a> {
    pub fn new(data: &'a Dataset, x: &'a str, y: &'a str, candidates: &'a [String], config: &'a EstimatorConfig) -> Self {
        Self { data, x, y, candidates, roles: None, instruments: None, conditioning: &[], config }
    }

    pub fn with_roles(mut self, roles: &'a TemplateRoles) -> Self {
        self.roles = Some(roles);
        self
    }

    pub fn with_instruments(mut self, instruments: &'a [String], conditioning: &'a [String]) -> Self {
        self.instruments = Some(instruments);
        self.conditioning = conditioning;
        self
    }

    fn roles(&self, method: &str) -> Result<&TemplateRoles> {
        self.roles.ok_or_else(|| Error::invalid(format!("`{method}` needs the generating model's group roles")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub method: String,
    /// `None` when the method declines to estimate (no instruments found).
    pub dce: Option<f64>,
    pub details: Value,
}

pub trait Estimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    fn estimate(&self, ctx: &EstimationContext<'_>) -> Result<Estimate>;
}

fn done(method: &str, dce: f64, details: Value) -> Result<Estimate> {
    Ok(Estimate { method: method.to_string(), dce: Some(dce), details })
}

fn coefficient_of(coefs: &[(String, f64)], x: &str) -> f64 {
    coefs.iter().find(|(n, _)| n == x).map(|c| c.1).expect("x is a regressor")
}

struct Naive1;
impl Estimator for Naive1 {
    fn name(&self) -> &'static str {
        "naive1"
    }
    fn describe(&self) -> &'static str {
        "least squares of Y on X"
    }
    fn estimate(&self, ctx: &EstimationContext<'_>) -> Result<Estimate> {
        let c = ols_effect(ctx.data, ctx.y, &[ctx.x])?;
        done(self.name(), c[0].1, Value::Null)
    }
}

struct Naive2;
impl Estimator for Naive2 {
    fn name(&self) -> &'static str {
        "naive2"
    }
    fn describe(&self) -> &'static str {
        "TSLS with every candidate as an instrument"
    }
    fn estimate(&self, ctx: &EstimationContext<'_>) -> Result<Estimate> {
        done(self.name(), tsls(ctx.data, ctx.x, ctx.y, &as_strs(ctx.candidates), &[])?, Value::Null)
    }
}

struct Naive3;
impl Estimator for Naive3 {
    fn name(&self) -> &'static str {
        "naive3"
    }
    fn describe(&self) -> &'static str {
        "least squares of Y on X and every candidate"
    }
    fn estimate(&self, ctx: &EstimationContext<'_>) -> Result<Estimate> {
        let mut regs = vec![ctx.x];
        regs.extend(as_strs(ctx.candidates));
        let c = ols_effect(ctx.data, ctx.y, &regs)?;
        done(self.name(), coefficient_of(&c, ctx.x), Value::Null)
    }
}

struct Tsls;
impl Estimator for Tsls {
    fn name(&self) -> &'static str {
        "tsls"
    }
    fn describe(&self) -> &'static str {
        "TSLS on user-supplied instruments and conditioning set"
    }
    fn estimate(&self, ctx: &EstimationContext<'_>) -> Result<Estimate> {
        let inst = ctx.instruments.ok_or_else(|| Error::invalid("`tsls` needs an explicit instrument list"))?;
        let dce = tsls(ctx.data, ctx.x, ctx.y, &as_strs(inst), &as_strs(ctx.conditioning))?;
        done(self.name(), dce, json!({ "instruments": inst, "conditioning": ctx.conditioning }))
    }
}

struct Oracle;
impl Estimator for Oracle {
    fn name(&self) -> &'static str {
        "oracle"
    }
    fn describe(&self) -> &'static str {
        "TSLS on the true instruments, adjusting for the forward and back-door groups"
    }
    fn estimate(&self, ctx: &EstimationContext<'_>) -> Result<Estimate> {
        let r = ctx.roles(self.name())?;
        let cond: Vec<&str> = r.zf.iter().chain(&r.zb).map(String::as_str).collect();
        done(self.name(), tsls(ctx.data, ctx.x, ctx.y, &as_strs(&r.w), &cond)?, Value::Null)
    }
}

struct WOracle;
impl Estimator for WOracle {
    fn name(&self) -> &'static str {
        "w-oracle"
    }
    fn describe(&self) -> &'static str {
        "TSLS on the true instruments, adjusting for every other candidate"
    }
    fn estimate(&self, ctx: &EstimationContext<'_>) -> Result<Estimate> {
        let r = ctx.roles(self.name())?;
        let cond: Vec<&str> =
            ctx.candidates.iter().filter(|c| !r.w.contains(c)).map(String::as_str).collect();
        done(self.name(), tsls(ctx.data, ctx.x, ctx.y, &as_strs(&r.w), &cond)?, Value::Null)
    }
}

fn sisvive_estimate(name: &str, ctx: &EstimationContext<'_>, candidates: &[&str]) -> Result<Estimate> {
    let fit = sisvive(ctx.data, candidates, &[], ctx.x, ctx.y, &ctx.config.sisvive)?;
    done(name, fit.dce, serde_json::to_value(&fit)?)
}

struct SOracle;
impl Estimator for SOracle {
    fn name(&self) -> &'static str {
        "s-oracle"
    }
    fn describe(&self) -> &'static str {
        "sisvive after removing the collider group"
    }
    fn estimate(&self, ctx: &EstimationContext<'_>) -> Result<Estimate> {
        let r = ctx.roles(self.name())?;
        let cands: Vec<&str> = ctx.candidates.iter().filter(|c| !r.zc.contains(c)).map(String::as_str).collect();
        sisvive_estimate(self.name(), ctx, &cands)
    }
}

struct Sisvive;
impl Estimator for Sisvive {
    fn name(&self) -> &'static str {
        "sisvive"
    }
    fn describe(&self) -> &'static str {
        "sisvive with every candidate and no background"
    }
    fn estimate(&self, ctx: &EstimationContext<'_>) -> Result<Estimate> {
        sisvive_estimate(self.name(), ctx, &as_strs(ctx.candidates))
    }
}

struct Bsisvive {
    skip_refinement: bool,
}
impl Estimator for Bsisvive {
    fn name(&self) -> &'static str {
        if self.skip_refinement {
            "bsisnaive"
        } else {
            "bsisvive"
        }
    }
    fn describe(&self) -> &'static str {
        if self.skip_refinement {
            "back-door ranked background, preliminary sisvive only"
        } else {
            "back-door ranked background with greedy conditioning-set refinement"
        }
    }
    fn estimate(&self, ctx: &EstimationContext<'_>) -> Result<Estimate> {
        let c = BsisviveConfig {
            t: ctx.config.t,
            test: ctx.config.test.clone(),
            skip_refinement: self.skip_refinement,
            sisvive: ctx.config.sisvive.clone(),
        };
        let r = b_sisvive(ctx.data, &as_strs(ctx.candidates), ctx.x, ctx.y, &c)?;
        done(self.name(), r.dce, serde_json::to_value(&r)?)
    }
}

struct Alg1;
impl Estimator for Alg1 {
    fn name(&self) -> &'static str {
        "alg1"
    }
    fn describe(&self) -> &'static str {
        "pairwise conditional instrument search with tetrad and residual tests"
    }
    fn estimate(&self, ctx: &EstimationContext<'_>) -> Result<Estimate> {
        let cfg = DiscoveryConfig { test: ctx.config.test.clone(), max_z: ctx.config.max_z, ..Default::default() };
        let r = discover(DiscoveryInput::Sample(ctx.data), ctx.x, ctx.y, &as_strs(ctx.candidates), &cfg)?;
        Ok(Estimate { method: self.name().to_string(), dce: r.dce, details: json!(r) })
    }
}

/// Estimators keyed by name.
#[derive(Clone, Default)]
pub struct EstimatorRegistry {
    entries: BTreeMap<&'static str, Arc<dyn Estimator>>,
}

impl EstimatorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        r.register(Arc::new(Naive1));
        r.register(Arc::new(Naive2));
        r.register(Arc::new(Naive3));
        r.register(Arc::new(Tsls));
        r.register(Arc::new(Oracle));
        r.register(Arc::new(WOracle));
        r.register(Arc::new(SOracle));
        r.register(Arc::new(Sisvive));
        r.register(Arc::new(Bsisvive { skip_refinement: false }));
        r.register(Arc::new(Bsisvive { skip_refinement: true }));
        r.register(Arc::new(Alg1));
        r
    }

    /// Adds or replaces an estimator under its own name.
    pub fn register(&mut self, e: Arc<dyn Estimator>) {
        self.entries.insert(e.name(), e);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Estimator>> {
        self.entries.get(name).cloned().ok_or_else(|| {
            Error::invalid(format!("unknown method `{name}` (known: {})", self.names().join(", ")))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

/// The nine estimators compared in the benchmark, in report order.
pub const BENCHMARK_METHODS: [&str; 9] =
    ["naive1", "naive2", "naive3", "oracle", "w-oracle", "s-oracle", "sisvive", "bsisvive", "bsisnaive"];
