//! Command-line front end: train a model, estimate queries against it,
//! enumerate sub-plan estimates, apply delta updates, run ablation benches,
//! and generate synthetic databases.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cardbound::catalog::{ingest_dir, load_schema_path, LoadedTable};
use cardbound::factorgraph::{
    estimate, estimate_explained, joinhist_estimate, progressive_estimate, EstimateReport,
    JoinHistMode,
};
use cardbound::generator::{generate_db, write_db, SyntheticSpec};
use cardbound::model::{parse_workload, train, Model, RunConfig};
use cardbound::oracle::{
    error_metrics, evaluate_workload, ErrorMetrics, ExactConfig, WorkloadRow,
};
use cardbound::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cardbound",
    version,
    about = "Cardinality upper bounds for multi-table join queries"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a model from a schema and a directory of CSV files.
    Train(TrainArgs),
    /// Estimate one query or a whole workload file against a model.
    Estimate(EstimateArgs),
    /// Estimate every connected sub-plan of one query.
    Subplans(SubplansArgs),
    /// Apply insert/delete delta CSVs to a model in place.
    Update(UpdateArgs),
    /// Compare estimators, binning strategies, bin counts, and histogram
    /// baselines against exact join counts.
    Bench(BenchArgs),
    /// Generate a synthetic database from a JSON description.
    Gen(GenArgs),
}

/// Training knobs shared by `train` and `bench`. Precedence: command line
/// beats the config file, which beats the built-in defaults.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON config file with the same fields as the embedded defaults.
    /// The CARDBOUND_CONFIG environment variable overrides this path.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bins per key group.
    #[arg(long)]
    k: Option<usize>,
    /// Binning strategy: gbsa, width, or depth.
    #[arg(long)]
    strategy: Option<String>,
    /// Per-table estimator: truescan, sample, or chowliu.
    #[arg(long)]
    estimator: Option<String>,
    /// Sampling rate in (0, 1].
    #[arg(long)]
    rate: Option<f64>,
    /// Seed for all randomized steps.
    #[arg(long)]
    seed: Option<u64>,
    /// Sub-plan enumeration cap.
    #[arg(long)]
    cap: Option<usize>,
}

impl ConfigArgs {
    fn build(&self, workload: Option<&Path>) -> Result<RunConfig> {
        let path = std::env::var_os("CARDBOUND_CONFIG")
            .map(PathBuf::from)
            .or_else(|| self.config.clone());
        let mut cfg = match path {
            Some(p) => {
                let bytes = std::fs::read(&p).map_err(|e| {
                    Error::Query(format!("config {}: {e}", p.display()))
                })?;
                serde_json::from_slice::<RunConfig>(&bytes)
                    .map_err(|e| Error::Query(format!("config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(k) = self.k {
            cfg.k_per_group = k;
        }
        if let Some(s) = &self.strategy {
            cfg.strategy = s.parse()?;
        }
        if let Some(e) = &self.estimator {
            cfg.estimator = e.parse()?;
        }
        if let Some(r) = self.rate {
            cfg.rate = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(c) = self.cap {
            cfg.subplan_cap = c;
        }
        if let Some(w) = workload {
            cfg.workload = Some(w.to_path_buf());
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Schema description file.
    #[arg(long)]
    schema: PathBuf,
    /// Directory holding one `<table>.csv` per schema table.
    #[arg(long)]
    data: PathBuf,
    /// Where to write the model.
    #[arg(long)]
    model: PathBuf,
    /// Workload file used to split the bin budget across key groups.
    #[arg(long)]
    workload: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EstimateArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// One SQL statement or JSON query object.
    query: Option<String>,
    /// Workload file: one query per line, estimated in order.
    #[arg(long, conflicts_with = "query")]
    workload: Option<PathBuf>,
    /// Attach the factor-graph trace to each result.
    #[arg(long)]
    explain: bool,
    /// Output format.
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args)]
struct SubplansArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// One SQL statement or JSON query object.
    query: String,
    /// Cap on enumerated sub-plans (defaults to the model's configuration).
    #[arg(long)]
    cap: Option<usize>,
    /// Output format.
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args)]
struct UpdateArgs {
    /// Model file to update in place.
    #[arg(long)]
    model: PathBuf,
    /// Directory of `<table>.insert.csv` / `<table>.delete.csv` files.
    delta: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Schema description file.
    #[arg(long)]
    schema: PathBuf,
    /// Directory holding one `<table>.csv` per schema table.
    #[arg(long)]
    data: PathBuf,
    /// Workload file evaluated by every grid cell.
    #[arg(long)]
    workload: PathBuf,
    /// Output format.
    #[arg(long, default_value = "json")]
    format: String,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct GenArgs {
    /// JSON description of the synthetic database.
    spec: PathBuf,
    /// Directory to write `schema.json` and the table CSVs into.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Estimate(a) => cmd_estimate(a),
        Cmd::Subplans(a) => cmd_subplans(a),
        Cmd::Update(a) => cmd_update(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Gen(a) => cmd_gen(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

/// 1 usage, 2 data, 3 internal.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Query(_) => 1,
        Error::Schema(_)
        | Error::Ingest(_)
        | Error::Model(_)
        | Error::Oracle(_)
        | Error::Generator(_)
        | Error::Io(_) => 2,
        Error::Estimate(_) => 3,
    }
}

fn json_line(value: &impl Serialize) {
    println!("{}", serde_json::to_string(value).expect("serializable output"));
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = a.config.build(a.workload.as_deref())?;
    let model = train(&a.schema, &a.data, cfg)?;
    model.save(&a.model)?;
    let bins: BTreeMap<usize, usize> =
        model.binmaps.iter().map(|(&g, bm)| (g, bm.num_bins())).collect();
    #[derive(Serialize)]
    struct TrainOut<'a> {
        model: String,
        tables: usize,
        groups: usize,
        bins: &'a BTreeMap<usize, usize>,
        estimator: String,
    }
    json_line(&TrainOut {
        model: a.model.display().to_string(),
        tables: model.catalog.tables.len(),
        groups: model.catalog.groups.len(),
        bins: &bins,
        estimator: model.config.estimator.to_string(),
    });
    Ok(())
}

/// An estimate line: the report plus the query it answers and an optional
/// trace.
#[derive(Serialize)]
struct EstimateLine {
    query: String,
    #[serde(flatten)]
    report: EstimateReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    explain: Option<serde_json::Value>,
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    query: &'a str,
    error: String,
}

fn format_table_estimates(lines: &[std::result::Result<EstimateLine, (String, String)>]) {
    println!("{:<28} {:>14} {:>9}  query", "aliases", "estimate", "ms");
    for line in lines {
        match line {
            Ok(l) => {
                println!(
                    "{:<28} {:>14.3} {:>9.3}  {}",
                    l.report.aliases.join(","),
                    l.report.estimate,
                    l.report.wall_time_ms,
                    l.query
                );
                if let Some(ex) = &l.explain {
                    println!("{}", serde_json::to_string_pretty(ex).expect("trace"));
                }
            }
            Err((q, e)) => println!("{:<28} {:>14} {:>9}  {q}\n       ! {e}", "-", "error", "-"),
        }
    }
}

fn cmd_estimate(a: EstimateArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let queries: Vec<String> = match (&a.query, &a.workload) {
        (Some(q), None) => vec![q.clone()],
        (None, Some(path)) => std::fs::read_to_string(path)
            .map_err(|e| Error::Query(format!("workload {}: {e}", path.display())))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect(),
        _ => {
            return Err(Error::Query(
                "give exactly one query, or --workload FILE for a batch".into(),
            ))
        }
    };
    let batch = a.workload.is_some();
    let mut lines = Vec::with_capacity(queries.len());
    for q in &queries {
        let one = || -> Result<EstimateLine> {
            let ir = cardbound::queryir::QueryIR::parse(&model.catalog, q)?;
            let (report, explain) = if a.explain {
                let (r, v) = estimate_explained(&ir, &model)?;
                (r, Some(v))
            } else {
                (estimate(&ir, &model)?, None)
            };
            Ok(EstimateLine { query: q.clone(), report, explain })
        };
        match one() {
            Ok(line) => lines.push(Ok(line)),
            Err(e) if batch => lines.push(Err((q.clone(), e.to_string()))),
            Err(e) => return Err(e),
        }
    }
    if a.format == "table" {
        format_table_estimates(&lines);
    } else {
        for line in &lines {
            match line {
                Ok(l) => json_line(l),
                Err((q, e)) => json_line(&ErrorLine { query: q, error: e.clone() }),
            }
        }
    }
    Ok(())
}

fn cmd_subplans(a: SubplansArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let ir = cardbound::queryir::QueryIR::parse(&model.catalog, &a.query)?;
    let cap = a.cap.unwrap_or(model.config.subplan_cap);
    let out = progressive_estimate(&ir, &model, cap)?;
    let total_ms: f64 = out.reports.iter().map(|r| r.wall_time_ms).sum();
    #[derive(Serialize)]
    struct Summary {
        subplans: usize,
        truncated: bool,
        total_wall_time_ms: f64,
    }
    let summary = Summary {
        subplans: out.reports.len(),
        truncated: out.truncated,
        total_wall_time_ms: total_ms,
    };
    if a.format == "table" {
        println!("{:<36} {:>14} {:>9}", "aliases", "estimate", "ms");
        for r in &out.reports {
            println!(
                "{:<36} {:>14.3} {:>9.3}",
                r.aliases.join(","),
                r.estimate,
                r.wall_time_ms
            );
        }
        println!(
            "sub-plans {} | truncated {} | total {:.3} ms",
            summary.subplans, summary.truncated, summary.total_wall_time_ms
        );
    } else {
        for r in &out.reports {
            json_line(r);
        }
        json_line(&summary);
    }
    Ok(())
}

fn cmd_update(a: UpdateArgs) -> Result<()> {
    let mut model = Model::load(&a.model)?;
    let report = model.update_from_dir(&a.delta)?;
    model.save(&a.model)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    json_line(&report);
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let bytes = std::fs::read(&a.spec)
        .map_err(|e| Error::Query(format!("spec {}: {e}", a.spec.display())))?;
    let spec: SyntheticSpec = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Query(format!("spec {}: {e}", a.spec.display())))?;
    let db = generate_db(&spec)?;
    write_db(&db, &a.out)?;
    #[derive(Serialize)]
    struct GenOut {
        out: String,
        tables: usize,
        total_rows: u64,
    }
    json_line(&GenOut {
        out: a.out.display().to_string(),
        tables: db.csvs.len(),
        total_rows: spec.tables.iter().map(|t| t.rows).sum(),
    });
    Ok(())
}

// ---------------------------------------------------------------------------
// Bench: fixed grids over estimators, binning strategies, bin counts, and
// histogram baselines, each cell scored against exact join counts.

#[derive(Serialize)]
struct BenchCell {
    section: &'static str,
    label: String,
    queries: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<ErrorMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_wall_time_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn mean_latency(rows: &[WorkloadRow]) -> Option<f64> {
    if rows.is_empty() {
        None
    } else {
        Some(rows.iter().map(|r| r.wall_time_ms).sum::<f64>() / rows.len() as f64)
    }
}

fn cell_ok(
    section: &'static str,
    label: String,
    rows: Vec<WorkloadRow>,
) -> BenchCell {
    let metrics = error_metrics(&rows);
    BenchCell {
        section,
        label,
        queries: rows.len(),
        mean_wall_time_ms: mean_latency(&rows),
        metrics: Some(metrics),
        error: None,
    }
}

fn cell_err(section: &'static str, label: String, n: usize, e: &Error) -> BenchCell {
    BenchCell {
        section,
        label,
        queries: n,
        metrics: None,
        mean_wall_time_ms: None,
        error: Some(e.to_string()),
    }
}

/// Score the histogram baseline (or the bound engine, when `mode` is none)
/// against exact counts, row for row.
fn run_baseline(
    model: &Model,
    queries: &[cardbound::queryir::QueryIR],
    tables: &BTreeMap<String, LoadedTable>,
    mode: Option<JoinHistMode>,
) -> Vec<WorkloadRow> {
    let cfg = ExactConfig::default();
    let mut rows = Vec::with_capacity(queries.len());
    for ir in queries {
        let started = std::time::Instant::now();
        let est = match mode {
            Some(m) => joinhist_estimate(ir, model, m),
            None => estimate(ir, model),
        };
        let mut row = WorkloadRow {
            query: ir.print_sql(),
            estimate: None,
            truth: None,
            ratio: None,
            zero_truth: false,
            error: None,
            wall_time_ms: 0.0,
        };
        match est {
            Ok(r) => {
                row.estimate = Some(r.estimate);
                match cardbound::oracle::exact_cardinality(&model.catalog, ir, tables, &cfg) {
                    Ok(t) => {
                        row.truth = Some(t);
                        if t == 0 {
                            row.zero_truth = true;
                            row.ratio = Some(r.estimate + 1.0);
                        } else {
                            row.ratio = Some(r.estimate / t as f64);
                        }
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
        rows.push(row);
    }
    rows
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let base = a.config.build(None)?;
    let catalog = load_schema_path(&a.schema)?;
    let loaded = ingest_dir(&catalog, &a.data)?;
    let tables: BTreeMap<String, LoadedTable> = catalog
        .tables
        .iter()
        .zip(loaded)
        .map(|(def, t)| (def.name.clone(), t))
        .collect();
    let text = std::fs::read_to_string(&a.workload)
        .map_err(|e| Error::Query(format!("workload {}: {e}", a.workload.display())))?;
    let queries = parse_workload(&catalog, &text)?;
    let nq = queries.len();
    let oracle_cfg = ExactConfig::default();

    let train_cell = |cfg: RunConfig| -> Result<Model> {
        cardbound::model::train_tables(
            catalog.clone(),
            tables.clone(),
            BTreeMap::new(),
            &[],
            cfg,
        )
    };
    let mut cells: Vec<BenchCell> = Vec::new();

    for kind in ["truescan", "sample", "chowliu"] {
        let mut cfg = base.clone();
        cfg.estimator = kind.parse()?;
        match train_cell(cfg) {
            Ok(m) => {
                let report = evaluate_workload(&m, &queries, &tables, &oracle_cfg);
                cells.push(cell_ok("estimator", kind.to_string(), report.rows));
            }
            Err(e) => cells.push(cell_err("estimator", kind.to_string(), nq, &e)),
        }
    }

    for strat in ["gbsa", "depth", "width"] {
        let mut cfg = base.clone();
        cfg.estimator = "truescan".parse()?;
        cfg.strategy = strat.parse()?;
        match train_cell(cfg) {
            Ok(m) => {
                let report = evaluate_workload(&m, &queries, &tables, &oracle_cfg);
                cells.push(cell_ok("binning", strat.to_string(), report.rows));
            }
            Err(e) => cells.push(cell_err("binning", strat.to_string(), nq, &e)),
        }
    }

    for k in [1usize, 10, 50, 100] {
        let mut cfg = base.clone();
        cfg.estimator = "truescan".parse()?;
        cfg.k_per_group = k;
        match train_cell(cfg) {
            Ok(m) => {
                let report = evaluate_workload(&m, &queries, &tables, &oracle_cfg);
                cells.push(cell_ok("k", k.to_string(), report.rows));
            }
            Err(e) => cells.push(cell_err("k", k.to_string(), nq, &e)),
        }
    }

    {
        let mut cfg = base.clone();
        cfg.estimator = "truescan".parse()?;
        match train_cell(cfg) {
            Ok(m) => {
                for mode in
                    [JoinHistMode::Classic, JoinHistMode::WithBound, JoinHistMode::WithConditional]
                {
                    let rows = run_baseline(&m, &queries, &tables, Some(mode));
                    cells.push(cell_ok("joinhist", mode.to_string(), rows));
                }
                let rows = run_baseline(&m, &queries, &tables, None);
                cells.push(cell_ok("joinhist", "bound".to_string(), rows));
            }
            Err(e) => cells.push(cell_err("joinhist", "all".to_string(), nq, &e)),
        }
    }

    if a.format == "table" {
        println!(
            "{:<10} {:<18} {:>8} {:>9} {:>9} {:>9} {:>7} {:>9}",
            "section", "label", "queries", "p50", "p95", "p99", "under", "mean_ms"
        );
        let opt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.3}"),
            None => "-".into(),
        };
        for c in &cells {
            match (&c.metrics, &c.error) {
                (Some(m), _) => println!(
                    "{:<10} {:<18} {:>8} {:>9} {:>9} {:>9} {:>7} {:>9}",
                    c.section,
                    c.label,
                    c.queries,
                    opt(m.p50),
                    opt(m.p95),
                    opt(m.p99),
                    opt(m.under_fraction),
                    opt(c.mean_wall_time_ms),
                ),
                (None, Some(e)) => {
                    println!("{:<10} {:<18} ! {e}", c.section, c.label)
                }
                (None, None) => unreachable!("cell is either scored or failed"),
            }
        }
    } else {
        for c in &cells {
            json_line(c);
        }
    }
    Ok(())
}
