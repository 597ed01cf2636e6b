use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use ivdisc::bench::{
    load_dataset, load_graph, load_model, run_benchmark, write_dataset, write_graph, write_json, write_model,
    write_report, ExperimentConfig,
};
use ivdisc::discovery::{discover, DiscoveryConfig, DiscoveryInput};
use ivdisc::estimation::{EstimationContext, EstimatorConfig, EstimatorRegistry};
use ivdisc::graph::{choke_point_diagnosis, d_separated, generic_rank, graphical_iv_criteria, t_separated};
use ivdisc::seed::mix;
use ivdisc::sem::{generate_template, ModelSpec, TemplateConfig};
use ivdisc::{Error, Result};

#[derive(Parser)]
#[command(name = "ivdisc", version, about = "Conditional instrument discovery and causal effect estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a model (benchmark template or explicit model) and sample data from it.
    Simulate(SimulateArgs),
    /// Estimate the effect of the treatment on the outcome with one method.
    Discover(DiscoverArgs),
    /// Answer graphical queries on a graph file.
    Oracle(OracleArgs),
    /// Run the simulation benchmark.
    Bench(BenchArgs),
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// JSON with either `template` (group sizes) or `model` (explicit model), and `n`.
    #[arg(long)]
    config: PathBuf,
    /// Sampled data (CSV).
    #[arg(long)]
    out: PathBuf,
    /// Graph of the generating model (JSON).
    #[arg(long)]
    graph_out: Option<PathBuf>,
    /// Full generating model with coefficients and roles (JSON).
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overrides the sample size in the config.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    template: Option<TemplateConfig>,
    model: Option<ModelSpec>,
    n: usize,
}

#[derive(clap::Args)]
struct DiscoverArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    treatment: String,
    #[arg(long)]
    outcome: String,
    #[arg(long)]
    method: String,
    #[arg(long)]
    alpha: Option<f64>,
    /// Fraction of candidates held out as background.
    #[arg(long = "T", alias = "t")]
    t: Option<f64>,
    #[arg(long)]
    max_z: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n_perm: Option<usize>,
    #[arg(long)]
    n_boot: Option<usize>,
    /// Generating model; supplies group roles to the oracle baselines.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Run `alg1` on the exact moments of `--model` instead of data.
    #[arg(long, requires = "model")]
    population: bool,
    /// Report every accepted tuple instead of stopping at the first (`alg1`).
    #[arg(long)]
    all_tuples: bool,
    /// Comma-separated candidate set; defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    candidates: Option<Vec<String>>,
    /// Instruments for `tsls`.
    #[arg(long, value_delimiter = ',')]
    instruments: Option<Vec<String>>,
    /// Conditioning set for `tsls`.
    #[arg(long, value_delimiter = ',', default_value = "")]
    conditioning: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    IvCriteria,
    Dsep,
    Tsep,
    Chokepoint,
}

#[derive(clap::Args)]
struct OracleArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_enum)]
    check: Check,
    /// `key=value` pairs; set-valued keys take comma-separated names.
    #[arg(long, num_args = 1..)]
    args: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of methods.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// JSON report; a text table is written next to it with a `.txt` extension.
    #[arg(long)]
    out: PathBuf,
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        location: format!("{}:{}:{}", path.display(), e.line(), e.column()),
        message: e.to_string(),
    })
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_json(value, p),
        None => {
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, value)?;
            writeln!(out)?;
            Ok(())
        }
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let cfg: SimulateConfig = read_config(&a.config)?;
    let model = match (&cfg.template, &cfg.model) {
        (Some(t), None) => generate_template(&TemplateConfig { seed: mix(a.seed, &[0]), ..t.clone() })?.model,
        (None, Some(m)) => m.build()?,
        _ => return Err(Error::InvalidInput("simulate config needs exactly one of `template` or `model`".into())),
    };
    let n = a.n.unwrap_or(cfg.n);
    let data = model.sample(n, mix(a.seed, &[1]))?;
    write_dataset(&data, &a.out)?;
    if let Some(p) = &a.graph_out {
        write_graph(model.graph(), p)?;
    }
    if let Some(p) = &a.model_out {
        write_model(&model, p)?;
    }
    log::info!("wrote {n} rows of {} variables to {}", data.p(), a.out.display());
    Ok(())
}

fn estimator_config(a: &DiscoverArgs) -> EstimatorConfig {
    let mut c = EstimatorConfig::default().with_seed(a.seed);
    if let Some(v) = a.alpha {
        c.test.alpha = v;
    }
    if let Some(v) = a.t {
        c.t = v;
    }
    if let Some(v) = a.max_z {
        c.max_z = v;
    }
    if let Some(v) = a.n_perm {
        c.test.n_perm = v;
    }
    if let Some(v) = a.n_boot {
        c.test.n_boot = v;
    }
    c
}

fn discover_cmd(a: &DiscoverArgs) -> Result<()> {
    let config = estimator_config(a);
    config.test.validate()?;
    let model = a.model.as_deref().map(load_model).transpose()?;
    let (x, y) = (a.treatment.as_str(), a.outcome.as_str());

    let (dce, details, candidates) = if a.population {
        if a.method != "alg1" {
            return Err(Error::InvalidInput("--population is only available for `alg1`".into()));
        }
        let model = model.as_ref().expect("clap enforces --model");
        let candidates = a.candidates.clone().unwrap_or_else(|| {
            model.graph().observed_names().into_iter().filter(|v| v != x && v != y).collect()
        });
        let cfg = DiscoveryConfig {
            test: config.test.clone(),
            max_z: config.max_z,
            first_only: !a.all_tuples,
            spread_tolerance: None,
        };
        let v: Vec<&str> = candidates.iter().map(String::as_str).collect();
        let r = discover(DiscoveryInput::Oracle(model), x, y, &v, &cfg)?;
        (r.dce, serde_json::to_value(&r)?, candidates)
    } else {
        let path = a.data.as_deref().ok_or_else(|| Error::InvalidInput("--data is required".into()))?;
        let data = load_dataset(path)?;
        let candidates = a.candidates.clone().unwrap_or_else(|| {
            data.columns().iter().filter(|c| *c != x && *c != y).cloned().collect()
        });
        for v in [x, y].into_iter().chain(candidates.iter().map(String::as_str)) {
            data.index_of(v)?;
        }
        let registry = EstimatorRegistry::with_builtins();
        let (dce, details) = if a.method == "alg1" && a.all_tuples {
            let cfg = DiscoveryConfig {
                test: config.test.clone(),
                max_z: config.max_z,
                first_only: false,
                spread_tolerance: None,
            };
            let v: Vec<&str> = candidates.iter().map(String::as_str).collect();
            let r = discover(DiscoveryInput::Sample(&data), x, y, &v, &cfg)?;
            (r.dce, serde_json::to_value(&r)?)
        } else {
            let estimator = registry.get(&a.method)?;
            let mut ctx = EstimationContext::new(&data, x, y, &candidates, &config);
            if let Some(roles) = model.as_ref().and_then(|m| m.roles()) {
                ctx = ctx.with_roles(roles);
            }
            if let Some(inst) = &a.instruments {
                ctx = ctx.with_instruments(inst, &a.conditioning);
            }
            let est = estimator.estimate(&ctx)?;
            (est.dce, est.details)
        };
        (dce, details, candidates)
    };

    let mut out = BTreeMap::new();
    out.insert("method", json!(a.method));
    out.insert("treatment", json!(x));
    out.insert("outcome", json!(y));
    out.insert("candidates", json!(candidates));
    out.insert("dce", json!(dce));
    out.insert("seed", json!(a.seed));
    out.insert("config", serde_json::to_value(&config)?);
    out.insert("details", details);
    emit(&out, a.out.as_deref())
}

fn parse_kv(args: &[String]) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out = BTreeMap::new();
    for a in args {
        let (k, v) = a
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("expected key=value, got `{a}`")))?;
        let vals = v.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect();
        if out.insert(k.to_string(), vals).is_some() {
            return Err(Error::InvalidInput(format!("argument `{k}` given twice")));
        }
    }
    Ok(out)
}

struct Args(BTreeMap<String, Vec<String>>);

impl Args {
    fn one(&self, key: &str) -> Result<&str> {
        match self.0.get(key).map(Vec::as_slice) {
            Some([v]) => Ok(v),
            _ => Err(Error::InvalidInput(format!("`{key}=NAME` is required"))),
        }
    }

    fn set(&self, key: &str) -> Vec<&str> {
        self.0.get(key).map(|v| v.iter().map(String::as_str).collect()).unwrap_or_default()
    }

    fn nonempty(&self, key: &str) -> Result<Vec<&str>> {
        let s = self.set(key);
        if s.is_empty() {
            return Err(Error::InvalidInput(format!("`{key}=A,B,...` is required")));
        }
        Ok(s)
    }

    fn only(&self, allowed: &[&str]) -> Result<()> {
        match self.0.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::InvalidInput(format!("unexpected argument `{k}` (allowed: {})", allowed.join(", ")))),
            None => Ok(()),
        }
    }
}

fn oracle(a: &OracleArgs) -> Result<()> {
    let g = load_graph(&a.graph)?;
    let args = Args(parse_kv(&a.args)?);
    let result = match a.check {
        Check::IvCriteria => {
            args.only(&["w", "z", "x", "y"])?;
            let (w, z, x, y) = (args.one("w")?, args.set("z"), args.one("x")?, args.one("y")?);
            json!({ "check": "iv-criteria", "w": w, "z": z, "x": x, "y": y,
                    "holds": graphical_iv_criteria(&g, w, &z, x, y)? })
        }
        Check::Dsep => {
            args.only(&["a", "b", "given"])?;
            let (sa, sb, given) = (args.nonempty("a")?, args.nonempty("b")?, args.set("given"));
            json!({ "check": "dsep", "a": sa, "b": sb, "given": given,
                    "separated": d_separated(&g, &sa, &sb, &given)? })
        }
        Check::Tsep => {
            args.only(&["a", "b", "ca", "cb"])?;
            let (sa, sb, ca, cb) = (args.nonempty("a")?, args.nonempty("b")?, args.set("ca"), args.set("cb"));
            json!({ "check": "tsep", "a": sa, "b": sb, "ca": ca, "cb": cb,
                    "separated": t_separated(&g, &sa, &sb, &ca, &cb)?,
                    "generic_rank": generic_rank(&g, &sa, &sb)? })
        }
        Check::Chokepoint => {
            args.only(&["wi", "wj", "z", "x", "y"])?;
            let (wi, wj, z, x, y) = (args.one("wi")?, args.one("wj")?, args.set("z"), args.one("x")?, args.one("y")?);
            let d = choke_point_diagnosis(&g, wi, wj, &z, x, y)?;
            json!({ "check": "chokepoint", "wi": wi, "wj": wj, "z": z, "x": x, "y": y, "diagnosis": d })
        }
    };
    emit(&result, a.out.as_deref())
}

fn bench(a: &BenchArgs) -> Result<()> {
    let mut cfg: ExperimentConfig = match &a.config {
        Some(p) => read_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if a.workers.is_some() {
        cfg.workers = a.workers;
    }
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    if let Some(m) = &a.methods {
        cfg.methods = m.clone();
    }
    let report = run_benchmark(&cfg, &EstimatorRegistry::with_builtins())?;
    write_report(&report, &a.out)?;
    std::io::stdout().lock().write_all(report.table().as_bytes())?;
    Ok(())
}

/// The reader went away, e.g. output piped into `head`.
fn broken_pipe(e: &Error) -> bool {
    let kind = match e {
        Error::Io(io) => Some(io.kind()),
        Error::Json(j) => j.io_error_kind(),
        _ => None,
    };
    kind == Some(std::io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Discover(a) => discover_cmd(a),
        Command::Oracle(a) => oracle(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
