use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cos_core::io::{read_dataset, write_dataset};
use cos_core::study::{run_scenario_group, table1_groups};
use cos_core::{
    balance_table, block_bootstrap_many, compute_aggregates, Aggregate, AggregateSpec, ClusteredDataset, ErrorCategory,
    ModelSpec, QuantileMethod, SimulationConfig, Trial,
};
use serde::Deserialize;

use crate::args::{BalanceArgs, Command, DataArgs, EstimateArgs, Format, ReplicateArgs, SimulateArgs};
use crate::report;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(cos_core::Error),
    Output { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e.category() {
                ErrorCategory::Ingestion => 3,
                ErrorCategory::Estimation => 4,
                ErrorCategory::Internal => 5,
            },
            CliError::Output { .. } => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => {
                let kind = match e.category() {
                    ErrorCategory::Ingestion => "input error",
                    ErrorCategory::Estimation => "estimation error",
                    ErrorCategory::Internal => "internal error",
                };
                write!(f, "{kind}: {e}")
            }
            CliError::Output { path, message } => write!(f, "cannot write {}: {message}", path.display()),
        }
    }
}

impl From<cos_core::Error> for CliError {
    fn from(e: cos_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Balance(a) => balance(a),
        Command::ReplicateTable1(a) => replicate(a),
    }
}

fn resolve_seed(seed: Option<u64>) -> (u64, &'static str) {
    match seed {
        Some(s) => (s, "given"),
        None => {
            let s = rand::random::<u64>();
            eprintln!("seed: {s} (drawn at random; pass --seed {s} to repeat this run)");
            (s, "random")
        }
    }
}

fn header(command: &str, fields: &[(&str, String)]) -> Vec<String> {
    let mut lines = vec![format!("cos {} {command}", env!("CARGO_PKG_VERSION"))];
    lines.extend(fields.iter().map(|(k, v)| format!("{k}={v}")));
    lines
}

/// Writes to `out` if given, stdout otherwise.
fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Output {
            path: path.to_path_buf(),
            message: e.to_string(),
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Output {
                    path: PathBuf::from("<stdout>"),
                    message: e.to_string(),
                })
        }
    }
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    let (seed, source) = resolve_seed(a.seed);
    let config = SimulationConfig {
        quantile_method: a.quantile_method,
        ..SimulationConfig::new(a.trial, a.m, a.n, seed)
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let sim = cos_core::simulate(&config)?;

    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::Output {
        path: a.out_dir.clone(),
        message: e.to_string(),
    })?;
    let comments = header(
        "simulate",
        &[
            ("trial", config.trial.to_string()),
            ("m", config.m.to_string()),
            ("n", config.n.to_string()),
            ("seed", seed.to_string()),
            ("seed_source", source.to_string()),
            ("quantile_method", config.quantile_method.to_string()),
            ("empty_clusters", sim.empty_clusters.to_string()),
        ],
    );
    let path = |name: &str| a.out_dir.join(name);
    write_dataset(&sim.dataset, path("units.csv"), path("clusters.csv"), &comments)?;
    sim.write_truth_file(path("truth.csv"), &comments)?;

    let ds = &sim.dataset;
    println!(
        "trial {} seed {seed}: {} units in {} clusters ({} treated, {} empty dropped), sample ATE {:.4}",
        config.trial,
        ds.n_units(),
        ds.n_clusters(),
        ds.treated_clusters(),
        sim.empty_clusters,
        sim.sample_ate()
    );
    println!("wrote units.csv, clusters.csv, truth.csv to {}", a.out_dir.display());
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    levels: Option<Vec<f64>>,
    quantile_method: Option<String>,
    #[serde(default)]
    aggregates: BTreeMap<String, Vec<String>>,
}

pub fn load_aggregate_spec(path: Option<&Path>) -> CliResult<AggregateSpec> {
    let Some(path) = path else {
        return Ok(AggregateSpec::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse_aggregate_spec(&text).map_err(|m| CliError::Usage(format!("{}: {m}", path.display())))
}

fn parse_aggregate_spec(text: &str) -> Result<AggregateSpec, String> {
    let cfg: FileConfig = toml::from_str(text).map_err(|e| e.to_string())?;
    let mut spec = AggregateSpec::default();
    if let Some(levels) = cfg.levels {
        spec = spec.with_levels(levels).map_err(|e| e.to_string())?;
    }
    if let Some(m) = cfg.quantile_method {
        spec = spec.with_method(m.parse::<QuantileMethod>()?);
    }
    for (cov, rules) in cfg.aggregates {
        let rules = rules
            .iter()
            .map(|r| r.parse::<Aggregate>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        spec = spec.with_override(cov, rules).map_err(|e| e.to_string())?;
    }
    Ok(spec)
}

fn describe_spec(spec: &AggregateSpec) -> Vec<(&'static str, String)> {
    let levels: Vec<String> = spec.levels().iter().map(f64::to_string).collect();
    let mut out = vec![
        ("aggregate_levels", levels.join(",")),
        ("quantile_method", spec.method().to_string()),
    ];
    for (cov, rules) in spec.overrides() {
        let rules: Vec<String> = rules.iter().map(Aggregate::label).collect();
        out.push(("aggregate_override", format!("{cov}:[{}]", rules.join(","))));
    }
    out
}

fn load(data: &DataArgs) -> CliResult<(ClusteredDataset, AggregateSpec)> {
    let spec = load_aggregate_spec(data.config.as_deref())?;
    let ds = read_dataset(&data.units, &data.clusters)?;
    if ds.is_one_armed() {
        eprintln!(
            "warning: {} treated and {} control clusters; estimation needs both arms",
            ds.treated_clusters(),
            ds.control_clusters()
        );
    }
    Ok((ds, spec))
}

fn estimate(a: EstimateArgs) -> CliResult<()> {
    if a.bootstrap < 2 {
        return Err(CliError::Usage(format!("--bootstrap must be at least 2, got {}", a.bootstrap)));
    }
    let (ds, agg) = load(&a.data)?;
    let (seed, source) = resolve_seed(a.seed);
    let specs: Vec<ModelSpec> = a.adjust.iter().map(|&s| ModelSpec::new(s).quadratic(a.quadratic)).collect();
    let results = block_bootstrap_many(&ds, &agg, &specs, a.bootstrap, seed)?;

    let adjust: Vec<String> = a.adjust.iter().map(ToString::to_string).collect();
    let mut fields = vec![
        ("units", a.data.units.display().to_string()),
        ("clusters", a.data.clusters.display().to_string()),
        ("n_units", ds.n_units().to_string()),
        ("n_clusters", ds.n_clusters().to_string()),
        ("treated_clusters", ds.treated_clusters().to_string()),
        ("adjust", adjust.join(",")),
        ("quadratic", a.quadratic.to_string()),
        ("bootstrap", a.bootstrap.to_string()),
        ("seed", seed.to_string()),
        ("seed_source", source.to_string()),
    ];
    fields.extend(describe_spec(&agg));
    let head = header("estimate", &fields);

    let text = report::estimates(&head, &results, a.format);
    emit(a.out.as_deref(), &text)?;
    if a.out.is_some() && a.format != Format::Pretty {
        print!("{}", report::estimates(&[], &results, Format::Pretty));
    }
    Ok(())
}

fn balance(a: BalanceArgs) -> CliResult<()> {
    let (ds, agg) = load(&a.data)?;
    let table = if a.no_aggregates {
        None
    } else {
        Some(compute_aggregates(&ds, &agg)?)
    };
    let rows = balance_table(&ds, table.as_ref())?;

    let mut fields = vec![
        ("units", a.data.units.display().to_string()),
        ("clusters", a.data.clusters.display().to_string()),
        ("aggregates", (!a.no_aggregates).to_string()),
    ];
    fields.extend(describe_spec(&agg));
    let head = header("balance", &fields);
    emit(a.out.as_deref(), &report::balance(&head, &rows, a.format))
}

fn replicate(a: ReplicateArgs) -> CliResult<()> {
    if a.reps < 1 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    if a.boot < 2 {
        return Err(CliError::Usage(format!("--boot must be at least 2, got {}", a.boot)));
    }
    let (seed, source) = resolve_seed(a.seed);
    let trials: Vec<Trial> = if a.trial.is_empty() { Trial::ALL.to_vec() } else { a.trial.clone() };
    let groups: Vec<_> = table1_groups(seed, a.reps, a.boot)
        .into_iter()
        .filter(|g| trials.contains(&g.trial))
        .collect();

    let mut rows = Vec::new();
    for (k, group) in groups.iter().enumerate() {
        let start = Instant::now();
        let res = run_scenario_group(group)?;
        eprintln!(
            "[{}/{}] trial {} m={} n={}: {} reps in {:.1}s",
            k + 1,
            groups.len(),
            group.trial,
            group.m,
            group.n,
            group.reps,
            start.elapsed().as_secs_f64()
        );
        rows.extend(res);
    }

    let names: Vec<String> = trials.iter().map(ToString::to_string).collect();
    let head = header(
        "replicate-table1",
        &[
            ("trials", names.join(",")),
            ("reps", a.reps.to_string()),
            ("boot", a.boot.to_string()),
            ("seed", seed.to_string()),
            ("seed_source", source.to_string()),
            ("rep_seed", "derive(seed; trial, m, n, rep)".to_string()),
            ("bootstrap_seed", "substream(rep_seed, 0xB007)".to_string()),
        ],
    );
    emit(a.out.as_deref(), &report::table1(&head, &rows, a.format))
}
