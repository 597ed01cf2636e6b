use std::fs;
use std::path::PathBuf;

use ivdisc::bench::{load_dataset, load_graph, load_model, run_benchmark, write_dataset, write_model, ExperimentConfig};
use ivdisc::estimation::EstimatorRegistry;
use ivdisc::sem::{generate_template, TemplateConfig};
use ivdisc::Error;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ivdisc-io-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn small_template(seed: u64) -> TemplateConfig {
    TemplateConfig { n_w: 3, n_zf: 1, n_zc: 1, n_zb: 1, confounder_strength: 0.25, min_abs_dce: 0.05, seed }
}

#[test]
fn dataset_round_trip() {
    let d = generate_template(&small_template(1)).unwrap().model.sample(50, 2).unwrap();
    let p = scratch("round.csv");
    write_dataset(&d, &p).unwrap();
    let back = load_dataset(&p).unwrap();
    assert_eq!(back.columns(), d.columns());
    // Loading re-centers, which may move the last bit.
    assert!((back.values() - d.values()).abs().max() < 1e-12);
}

#[test]
fn model_round_trip_and_graph_view() {
    let m = generate_template(&small_template(3)).unwrap().model;
    let p = scratch("model.json");
    write_model(&m, &p).unwrap();
    let back = load_model(&p).unwrap();
    assert_eq!(back.to_spec(), m.to_spec());
    let g = load_graph(&p).unwrap();
    assert_eq!(g.edge_names(), m.graph().edge_names());
}

#[test]
fn malformed_csv_reports_line() {
    let cases = [
        ("dup.csv", "a,a\n1,2\n", ":1"),
        ("ragged.csv", "a,b\n1,2\n3\n", ":3"),
        ("text.csv", "a,b\n1,2\n3,x\n", ":3"),
        ("empty.csv", "a,b\n", ":2"),
    ];
    for (name, body, loc) in cases {
        let p = scratch(name);
        fs::write(&p, body).unwrap();
        match load_dataset(&p) {
            Err(Error::Parse { location, .. }) => assert!(location.ends_with(loc), "{name}: {location}"),
            other => panic!("{name}: {other:?}"),
        }
    }
    assert!(matches!(load_dataset(scratch("missing.csv")), Err(Error::Io(_))));
}

#[test]
fn malformed_graphs_rejected() {
    let unknown = scratch("unknown.json");
    fs::write(&unknown, r#"{"vertices":[{"name":"A","kind":"observed"}],"edges":[["A","B"]]}"#).unwrap();
    assert!(matches!(load_graph(&unknown), Err(Error::Parse { .. })));
    let cyclic = scratch("cyclic.json");
    fs::write(
        &cyclic,
        r#"{"vertices":[{"name":"A","kind":"observed"},{"name":"B","kind":"observed"}],"edges":[["A","B"],["B","A"]]}"#,
    )
    .unwrap();
    assert!(matches!(load_graph(&cyclic), Err(Error::Cycle(_))));
    let broken = scratch("broken.json");
    fs::write(&broken, "{").unwrap();
    assert!(matches!(load_graph(&broken), Err(Error::Parse { .. })));
}

#[test]
fn sample_covariance_approaches_population() {
    let m = generate_template(&small_template(5)).unwrap().model;
    let pop = m.population_covariance().unwrap();
    let d = m.sample(200_000, 9).unwrap();
    let s = d.covariance();
    assert_eq!(pop.labels(), s.labels());
    let gap = (pop.values() - s.values()).abs().max();
    assert!(gap < 0.02, "max gap {gap}");
}

fn bench_config(methods: &[&str]) -> ExperimentConfig {
    ExperimentConfig {
        template: small_template(0),
        sample_sizes: vec![300],
        confounder_levels: vec![0.25, 0.5],
        trials: 4,
        methods: methods.iter().map(|s| s.to_string()).collect(),
        master_seed: 42,
        ..Default::default()
    }
}

#[test]
fn benchmark_is_deterministic_and_method_order_free() {
    let r = EstimatorRegistry::with_builtins();
    let a = run_benchmark(&bench_config(&["naive1", "oracle", "sisvive"]), &r).unwrap();
    let b = run_benchmark(&bench_config(&["naive1", "oracle", "sisvive"]), &r).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

    let c = run_benchmark(&bench_config(&["sisvive", "naive1", "oracle"]), &r).unwrap();
    for cell in &a.cells {
        assert_eq!(c.cell(&cell.method, &cell.condition), Some(cell));
    }
    assert_eq!(a.trials.len(), 2 * 4 * 3);
    assert!(a.table().contains("ORACLE"));
    assert_ne!(a.config_hash, c.config_hash);
}
