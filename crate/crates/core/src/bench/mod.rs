//! The simulation benchmark: for every (sample size, confounding level)
//! cell, draw template models, sample data, run each estimator and
//! summarize absolute errors against the true effect.

mod io;

pub use io::{load_dataset, load_graph, load_model, write_dataset, write_graph, write_json, write_model};

use std::fmt::Write as _;
use std::path::Path;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimation::{EstimationContext, EstimatorConfig, EstimatorRegistry, BENCHMARK_METHODS};
use crate::seed::{mix, name_hash};
use crate::sem::{generate_template, TemplateConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Group sizes and rejection threshold; the confounding strength and
    /// seed are set per cell and trial.
    pub template: TemplateConfig,
    pub sample_sizes: Vec<usize>,
    pub confounder_levels: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<String>,
    pub master_seed: u64,
    pub estimator: EstimatorConfig,
    /// Worker threads; `None` uses rayon's default. Results do not depend
    /// on it, so it is left out of reports and the config hash.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            template: TemplateConfig::benchmark(0.25, 0),
            sample_sizes: vec![100, 1000, 5000],
            confounder_levels: vec![0.25, 0.5],
            trials: 200,
            methods: BENCHMARK_METHODS.iter().map(|s| s.to_string()).collect(),
            master_seed: 0,
            estimator: EstimatorConfig::default(),
            workers: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self, registry: &EstimatorRegistry) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.sample_sizes.is_empty() || self.confounder_levels.is_empty() || self.methods.is_empty() {
            return Err(Error::invalid("sample sizes, confounder levels and methods must be nonempty"));
        }
        for m in &self.methods {
            registry.get(m)?;
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::invalid(format!("method `{m}` listed twice")));
            }
        }
        for &level in &self.confounder_levels {
            TemplateConfig { confounder_strength: level, ..self.template.clone() }.validate()?;
        }
        self.estimator.test.validate()?;
        self.estimator.sisvive.validate()
    }

    /// SHA-256 of the canonical JSON of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// `(label, n, level)` in report order: confounding level major.
    pub fn conditions(&self) -> Vec<(String, usize, f64)> {
        let mut out = Vec::new();
        for &level in &self.confounder_levels {
            for &n in &self.sample_sizes {
                out.push((format!("{n}/{level:.2}"), n, level));
            }
        }
        out
    }
}

/// Seed of trial `trial` in condition `condition`.
pub fn trial_seed(master: u64, condition: usize, trial: usize) -> u64 {
    mix(master, &[condition as u64, trial as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub condition: String,
    pub trial: usize,
    pub method: String,
    pub true_dce: f64,
    pub estimate: Option<f64>,
    pub abs_error: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub method: String,
    pub condition: String,
    pub sample_size: usize,
    pub confounding: f64,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub count: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub master_seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub cells: Vec<CellSummary>,
    pub trials: Vec<TrialRecord>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

fn run_trial(cfg: &ExperimentConfig, registry: &EstimatorRegistry, ci: usize, cond: &(String, usize, f64), trial: usize) -> Vec<TrialRecord> {
    let (label, n, level) = cond;
    let seed = trial_seed(cfg.master_seed, ci, trial);
    let record = |method: &str, truth: f64, estimate: Option<f64>, failure: Option<String>| TrialRecord {
        condition: label.clone(),
        trial,
        method: method.to_string(),
        true_dce: truth,
        estimate,
        abs_error: estimate.map(|e| (e - truth).abs()),
        failure,
    };
    let tc = TemplateConfig { confounder_strength: *level, seed: mix(seed, &[0]), ..cfg.template.clone() };
    let generated = generate_template(&tc).and_then(|t| {
        let data = t.model.sample(*n, mix(seed, &[1]))?;
        Ok((t, data))
    });
    let (template, data) = match generated {
        Ok(v) => v,
        Err(e) => {
            return cfg.methods.iter().map(|m| record(m, f64::NAN, None, Some(e.to_string()))).collect();
        }
    };
    let roles = &template.roles;
    let truth = template.model.true_dce(&roles.x, &roles.y).map(|d| d.value).unwrap_or(f64::NAN);
    let candidates = roles.candidates();
    cfg.methods
        .iter()
        .map(|m| {
            let ecfg = cfg.estimator.with_seed(mix(seed, &[2, name_hash(m)]));
            let ctx = EstimationContext::new(&data, &roles.x, &roles.y, &candidates, &ecfg).with_roles(roles);
            match registry.get(m).and_then(|e| e.estimate(&ctx)) {
                Ok(est) => match est.dce {
                    Some(d) => record(m, truth, Some(d), None),
                    None => record(m, truth, None, Some("no estimate".into())),
                },
                Err(e) => {
                    debug!("{label} trial {trial} {m}: {e}");
                    record(m, truth, None, Some(e.to_string()))
                }
            }
        })
        .collect()
}

/// Runs every configured cell. Method failures are recorded per trial and
/// never abort the run.
pub fn run_benchmark(cfg: &ExperimentConfig, registry: &EstimatorRegistry) -> Result<BenchReport> {
    cfg.validate(registry)?;
    let conditions = cfg.conditions();
    let jobs: Vec<(usize, usize)> =
        (0..conditions.len()).flat_map(|c| (0..cfg.trials).map(move |t| (c, t))).collect();
    let work = || -> Vec<TrialRecord> {
        jobs.par_iter()
            .map(|&(ci, t)| run_trial(cfg, registry, ci, &conditions[ci], t))
            .collect::<Vec<_>>()
            .concat()
    };
    let trials = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut cells = Vec::new();
    for (label, n, level) in &conditions {
        for m in &cfg.methods {
            let rows: Vec<&TrialRecord> = trials.iter().filter(|r| &r.condition == label && &r.method == m).collect();
            let mut errs: Vec<f64> = rows.iter().filter_map(|r| r.abs_error).collect();
            errs.sort_by(f64::total_cmp);
            cells.push(CellSummary {
                method: m.clone(),
                condition: label.clone(),
                sample_size: *n,
                confounding: *level,
                median: quantile(&errs, 0.5),
                q1: quantile(&errs, 0.25),
                q3: quantile(&errs, 0.75),
                count: errs.len(),
                failures: rows.len() - errs.len(),
            });
        }
        info!("finished condition {label}");
    }
    Ok(BenchReport { master_seed: cfg.master_seed, config_hash: cfg.hash(), config: cfg.clone(), cells, trials })
}

impl BenchReport {
    pub fn cell(&self, method: &str, condition: &str) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.method == method && c.condition == condition)
    }

    /// Median absolute errors, methods as rows and conditions as columns.
    pub fn table(&self) -> String {
        let conditions = self.config.conditions();
        let width = conditions.iter().map(|c| c.0.len()).max().unwrap_or(0).max(6) + 2;
        let label_w = self.config.methods.iter().map(String::len).max().unwrap_or(0).max(6) + 2;
        let mut out = format!("{:>label_w$}", "");
        for (label, _, _) in &conditions {
            let _ = write!(out, "{label:>width$}");
        }
        out.push('\n');
        for m in &self.config.methods {
            let _ = write!(out, "{:>label_w$}", m.to_uppercase());
            for (label, _, _) in &conditions {
                let cell = match self.cell(m, label).and_then(|c| c.median) {
                    Some(v) => format!("{v:.2}"),
                    None => "NA".into(),
                };
                let _ = write!(out, "{cell:>width$}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(self, path)
    }
}

/// Writes the JSON report and, next to it, the text table (`.txt`).
pub fn write_report(report: &BenchReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    report.write(path)?;
    std::fs::write(path.with_extension("txt"), report.table())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), Some(2.5));
        assert_eq!(quantile(&v, 0.25), Some(1.75));
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn condition_labels_follow_table_order() {
        let c = ExperimentConfig::default();
        let labels: Vec<String> = c.conditions().into_iter().map(|c| c.0).collect();
        assert_eq!(labels, ["100/0.25", "1000/0.25", "5000/0.25", "100/0.50", "1000/0.50", "5000/0.50"]);
    }

    #[test]
    fn validation_rejects_unknown_methods() {
        let r = EstimatorRegistry::with_builtins();
        let mut c = ExperimentConfig { trials: 1, ..Default::default() };
        assert!(c.validate(&r).is_ok());
        c.methods.push("magic".into());
        assert!(c.validate(&r).is_err());
        c.methods.pop();
        c.trials = 0;
        assert!(c.validate(&r).is_err());
    }
}
