//! Command-line front end: estimation on CSV data plus Monte Carlo
//! simulation and coverage studies on synthetic designs.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use setid_dml::config::{Command, RunConfig, Variant};
use setid_dml::dataset::{Dataset, ModelKind};
use setid_dml::error::{Error, Result};
use setid_dml::schema;
use setid_dml::sim;

#[derive(Parser)]
#[command(name = "setid-dml", about = "Set-identified double machine learning", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Estimate bounds and support function from a CSV dataset.
    Estimate(CommonArgs),
    /// Monte Carlo study of estimator variants on a synthetic design.
    Simulate(CommonArgs),
    /// Monte Carlo coverage study of the confidence regions.
    Coverage(CommonArgs),
}

/// Flags override the corresponding config-file fields.
#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    data_path: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    /// Comma-separated list of estimator variants.
    #[arg(long)]
    estimator_variants: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<String>,
}

fn parse_model(name: &str) -> Result<ModelKind> {
    match name {
        "plp" => Ok(ModelKind::Plp),
        "apd" => Ok(ModelKind::Apd),
        "lee" => Ok(ModelKind::Lee),
        other => Err(Error::invalid(format!("unknown model '{other}'"))),
    }
}

fn parse_variants(text: &str) -> Result<Vec<Variant>> {
    text.split(',')
        .map(|v| match v.trim() {
            "orthogonal_crossfit" => Ok(Variant::OrthogonalCrossfit),
            "orthogonal_nosplit" => Ok(Variant::OrthogonalNosplit),
            "naive" => Ok(Variant::Naive),
            "oracle" => Ok(Variant::Oracle),
            other => Err(Error::invalid(format!("unknown variant '{other}'"))),
        })
        .collect()
}

fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_path(&args.config)?;
    if let Some(model) = &args.model {
        cfg.model = parse_model(model)?;
    }
    if let Some(path) = &args.data_path {
        cfg.data_path = Some(path.clone());
    }
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(g) = args.grid_size {
        cfg.grid_size = g;
    }
    if let Some(b) = args.b {
        cfg.b = b;
    }
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(m) = args.m {
        cfg.m = m;
    }
    if let Some(v) = &args.estimator_variants {
        cfg.estimator_variants = parse_variants(v)?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.output_dir {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn init_thread_pool() {
    if let Ok(text) = std::env::var("SETID_DML_THREADS") {
        if let Ok(threads) = text.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
        }
    }
}

fn write_json<T: serde::Serialize>(
    dir: &Path,
    name: &str,
    value: &T,
    schema_text: &str,
) -> Result<()> {
    let json = serde_json::to_value(value)
        .map_err(|e| Error::schema(None, format!("serialize {name}: {e}")))?;
    schema::validate_str(schema_text, &json)?;
    let text = serde_json::to_string_pretty(&json)
        .map_err(|e| Error::schema(None, format!("serialize {name}: {e}")))?;
    std::fs::write(dir.join(name), text + "\n")?;
    Ok(())
}

fn cmd_estimate(cfg: &RunConfig) -> Result<()> {
    cfg.validate(Command::Estimate)?;
    let path = cfg.data_path.as_ref().unwrap();
    let data = Dataset::read_csv_path(Path::new(path))?;
    let out = sim::run_estimate(cfg, &data, None)?;
    let dir = Path::new(&cfg.output_dir);
    std::fs::create_dir_all(dir)?;
    write_json(dir, "results.json", &out.results, schema::RESULTS_SCHEMA)?;
    write_json(dir, "region.json", &out.region, schema::REGION_SCHEMA)?;
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    cfg.validate(Command::Simulate)?;
    let out = sim::run_simulation(cfg)?;
    let dir = Path::new(&cfg.output_dir);
    std::fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_path(dir.join("sim.csv"))?;
    w.write_record(["rep", "variant", "bound", "estimate", "truth"])?;
    for r in &out.rows {
        w.write_record(&[
            r.rep.to_string(),
            r.variant.clone(),
            r.bound.clone(),
            r.estimate.to_string(),
            r.truth.to_string(),
        ])?;
    }
    w.flush()?;

    let mut h = csv::Writer::from_path(dir.join("hist.csv"))?;
    h.write_record(["variant", "bound", "bin_left", "bin_right", "count"])?;
    for b in sim::histogram(&out.rows, 30) {
        h.write_record(&[
            b.variant,
            b.bound,
            b.left.to_string(),
            b.right.to_string(),
            b.count.to_string(),
        ])?;
    }
    h.flush()?;

    write_json(dir, "summary.json", &out.summary, schema::SUMMARY_SCHEMA)?;
    Ok(())
}

fn cmd_coverage(cfg: &RunConfig) -> Result<()> {
    cfg.validate(Command::Coverage)?;
    let out = sim::run_coverage(cfg)?;
    let dir = Path::new(&cfg.output_dir);
    std::fs::create_dir_all(dir)?;
    write_json(dir, "coverage.json", &out, schema::COVERAGE_SCHEMA)?;
    Ok(())
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Estimate(args) => load_config(args).and_then(|cfg| cmd_estimate(&cfg)),
        Cmd::Simulate(args) => load_config(args).and_then(|cfg| cmd_simulate(&cfg)),
        Cmd::Coverage(args) => load_config(args).and_then(|cfg| cmd_coverage(&cfg)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
