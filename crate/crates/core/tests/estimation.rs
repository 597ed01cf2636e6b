use std::collections::HashMap;

use approx::assert_relative_eq;
use ivdisc::estimation::{
    b_sisvive, ols_effect, res_dependence_score, sisvive, tsls, tsls_cov, BsisviveConfig, EstimationContext,
    EstimatorConfig, EstimatorRegistry, SisviveConfig,
};
use ivdisc::sem::{generate_template, model_from_edges, LinearSem, TemplateConfig};
use ivdisc::stats::{CovMatrix, Dataset, TestConfig};
use ivdisc::Error;
use nalgebra::DMatrix;

// Five candidate instruments, two of which also affect Y directly.
fn majority_valid() -> LinearSem {
    let edges = [
        ("W1", "X", 0.8),
        ("W2", "X", 0.7),
        ("W3", "X", -0.6),
        ("W4", "X", 0.9),
        ("W5", "X", 0.5),
        ("W4", "Y", 0.6),
        ("W5", "Y", -0.7),
        ("U", "X", 0.8),
        ("U", "Y", 0.8),
        ("X", "Y", 0.4),
    ];
    model_from_edges(&["W1", "W2", "W3", "W4", "W5", "X", "Y"], &["U"], &edges, &HashMap::new(), 1.0).unwrap()
}

const W: [&str; 5] = ["W1", "W2", "W3", "W4", "W5"];

fn renamed(d: &Dataset, map: &[(&str, &str)]) -> Dataset {
    let cols = d
        .columns()
        .iter()
        .map(|c| map.iter().find(|m| m.0 == c).map_or(c.clone(), |m| m.1.to_string()))
        .collect();
    Dataset::new(cols, d.values().clone()).unwrap()
}

#[test]
fn single_instrument_tsls_is_ratio_of_covariances() {
    let d = majority_valid().sample(500, 3).unwrap();
    let s = d.covariance();
    let ratio = s.get("W1", "Y").unwrap() / s.get("W1", "X").unwrap();
    assert_relative_eq!(tsls(&d, "X", "Y", &["W1"], &[]).unwrap(), ratio, max_relative = 1e-10);
}

#[test]
fn tsls_rejects_overlapping_roles_and_weak_instruments() {
    let d = majority_valid().sample(300, 1).unwrap();
    assert!(tsls(&d, "X", "Y", &[], &[]).is_err());
    assert!(tsls(&d, "X", "Y", &["W1"], &["W1"]).is_err());
    let labels = ["Z", "X", "Y"].map(String::from).to_vec();
    let cov = CovMatrix::new(labels, DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.3, 0.0, 1.0, 0.5, 0.3, 0.5, 1.0]), None).unwrap();
    assert!(matches!(tsls_cov(&cov, "X", "Y", &["Z"], &[]), Err(Error::WeakInstruments { .. })));
}

#[test]
fn ols_rejects_collinear_regressors() {
    let d = majority_valid().sample(200, 2).unwrap();
    let mut m = d.values().clone();
    let w1 = m.column(0).clone_owned();
    m.set_column(1, &(w1 * 2.0));
    let d = Dataset::new(d.columns().to_vec(), m).unwrap();
    assert!(ols_effect(&d, "Y", &["W1", "W2"]).is_err());
}

#[test]
fn sisvive_recovers_effect_with_majority_valid() {
    let m = majority_valid();
    let truth = m.true_dce("X", "Y").unwrap().value;
    let good = (0..100)
        .filter(|&seed| {
            let d = m.sample(2000, seed).unwrap();
            let r = sisvive(&d, &W, &[], "X", "Y", &SisviveConfig { seed, ..Default::default() }).unwrap();
            (r.dce - truth).abs() < 0.1
        })
        .count();
    assert!(good >= 80, "{good}/100 within 0.1");
}

#[test]
fn sisvive_ignores_candidate_order_and_names() {
    let d = majority_valid().sample(1000, 7).unwrap();
    let cfg = SisviveConfig::default();
    let a = sisvive(&d, &W, &[], "X", "Y", &cfg).unwrap();
    let b = sisvive(&d, &["W5", "W3", "W1", "W4", "W2"], &[], "X", "Y", &cfg).unwrap();
    assert_eq!(a, b);

    let map = [("W1", "A5"), ("W2", "A4"), ("W3", "A3"), ("W4", "A2"), ("W5", "A1")];
    let r = renamed(&d, &map);
    let c = sisvive(&r, &["A1", "A2", "A3", "A4", "A5"], &[], "X", "Y", &cfg).unwrap();
    assert_relative_eq!(a.dce, c.dce, epsilon = 1e-6);
    let back = |v: &[String]| {
        let mut out: Vec<&str> = v.iter().map(|n| map.iter().find(|m| m.1 == n).unwrap().0).collect();
        out.sort_unstable();
        out
    };
    assert_eq!(back(&c.invalid_z), a.invalid_z);
}

#[test]
fn huge_penalty_reduces_to_tsls() {
    let d = majority_valid().sample(800, 5).unwrap();
    let cfg = SisviveConfig { lambda: Some(1e9), ..Default::default() };
    let r = sisvive(&d, &["W1", "W2", "W3", "W4"], &["W5"], "X", "Y", &cfg).unwrap();
    assert!(r.invalid_z.is_empty());
    assert!(r.alpha_coefs.values().all(|&a| a == 0.0));
    let t = tsls(&d, "X", "Y", &["W1", "W2", "W3", "W4"], &["W5"]).unwrap();
    assert_relative_eq!(r.dce, t, max_relative = 1e-9);
}

#[test]
fn sisvive_rejects_bad_sets() {
    let d = majority_valid().sample(100, 0).unwrap();
    let cfg = SisviveConfig::default();
    assert!(sisvive(&d, &["W1", "X"], &[], "X", "Y", &cfg).is_err());
    assert!(sisvive(&d, &["W1", "W2"], &["W2"], "X", "Y", &cfg).is_err());
    assert!(sisvive(&d, &["W1", "Q"], &[], "X", "Y", &cfg).is_err());
    assert!(sisvive(&d, &W, &[], "X", "Y", &SisviveConfig { folds: 1, ..cfg }).is_err());
}

#[test]
fn empty_background_matches_plain_sisvive() {
    let d = majority_valid().sample(600, 11).unwrap();
    let plain = sisvive(&d, &W, &[], "X", "Y", &SisviveConfig::default()).unwrap();
    for skip_refinement in [true, false] {
        let c = BsisviveConfig { t: 0.0, skip_refinement, ..Default::default() };
        let r = b_sisvive(&d, &W, "X", "Y", &c).unwrap();
        assert!(r.background.is_empty() && r.trace.is_empty());
        assert_eq!(r.dce, plain.dce);
    }
}

#[test]
fn dependence_score_is_a_negated_p_value() {
    let d = majority_valid().sample(500, 2).unwrap();
    let cfg = TestConfig::default();
    for w in W {
        let s = res_dependence_score(&d, w, &W, "Y", &cfg).unwrap();
        assert!((-1.0..=0.0).contains(&s), "{w}: {s}");
        assert_eq!(s, res_dependence_score(&d, w, &W, "Y", &cfg).unwrap());
    }
    assert!(res_dependence_score(&d, "X", &W, "Y", &cfg).is_err());
    assert!(res_dependence_score(&d, "W1", &["W1", "Y"], "Y", &cfg).is_err());
}

#[test]
fn refinement_scores_strictly_increase() {
    let tc = TemplateConfig { n_w: 4, n_zf: 2, n_zc: 2, n_zb: 1, confounder_strength: 0.5, min_abs_dce: 0.05, seed: 0 };
    for seed in 0..4 {
        let t = generate_template(&TemplateConfig { seed, ..tc.clone() }).unwrap();
        let d = t.model.sample(1000, seed).unwrap();
        let cands = t.roles.candidates();
        let v: Vec<&str> = cands.iter().map(String::as_str).collect();
        let r = b_sisvive(&d, &v, "X", "Y", &BsisviveConfig::default()).unwrap();
        let mut last = r.initial_score.unwrap();
        for step in &r.trace {
            assert!(step.score > last);
            last = step.score;
        }
        assert_eq!(r.conditioning.len() + r.trace.len(), r.background.len());
        assert_eq!(r.dce, r.final_fit.as_ref().unwrap().dce);
    }
}

#[test]
fn bsisvive_validates_inputs() {
    let d = majority_valid().sample(200, 0).unwrap();
    let c = BsisviveConfig::default();
    assert!(b_sisvive(&d, &["W1"], "X", "Y", &c).is_err());
    assert!(b_sisvive(&d, &["W1", "X"], "X", "Y", &c).is_err());
    assert!(b_sisvive(&d, &W, "X", "Y", &BsisviveConfig { t: 1.0, ..c.clone() }).is_err());
    assert!(b_sisvive(&d, &W, "X", "Y", &BsisviveConfig { t: 1.5, ..c }).is_err());
}

#[test]
fn registry_lookup_and_requirements() {
    let r = EstimatorRegistry::with_builtins();
    assert_eq!(r.names().len(), 11);
    let err = r.get("nope").err().unwrap().to_string();
    assert!(err.contains("bsisvive") && err.contains("naive1"), "{err}");

    let d = majority_valid().sample(300, 4).unwrap();
    let cands: Vec<String> = W.iter().map(|s| s.to_string()).collect();
    let cfg = EstimatorConfig::default();
    let ctx = EstimationContext::new(&d, "X", "Y", &cands, &cfg);
    assert!(r.get("tsls").unwrap().estimate(&ctx).is_err());
    assert!(r.get("oracle").unwrap().estimate(&ctx).is_err());

    let inst = vec!["W1".to_string(), "W2".to_string()];
    let cond = vec!["W4".to_string()];
    let e = r.get("tsls").unwrap().estimate(&ctx.with_instruments(&inst, &cond)).unwrap();
    assert_eq!(e.dce, Some(tsls(&d, "X", "Y", &["W1", "W2"], &["W4"]).unwrap()));
    let n1 = r.get("naive1").unwrap().estimate(&EstimationContext::new(&d, "X", "Y", &cands, &cfg)).unwrap();
    assert_eq!(n1.dce, Some(ols_effect(&d, "Y", &["X"]).unwrap()[0].1));
}
