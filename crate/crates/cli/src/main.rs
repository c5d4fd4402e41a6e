use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use graft_core::evalkit::{baseline_dt, baseline_nt, baseline_rw_dcm, score};
use graft_core::hetgraph::{read_graph, write_graph};
use graft_core::ingest::{accumulate, parse_events, snapshot_series};
use graft_core::metapath::metapath_distances;
use graft_core::sweep::{run_sweep, write_csv, Axis, Method, SweepPlan};
use graft_core::synthbench::{generate, write_instance, SynthSpec};
use graft_core::transfer::{acret_transfer, MuMode, TransferConfig};

#[derive(Parser)]
#[command(name = "graft", version, about = "Transfer dependency-graph structure between domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic source, true target and partial target.
    Synth(SynthArgs),
    /// Build a dependency graph from a JSON-lines event stream.
    Ingest(IngestArgs),
    /// Estimate the full target graph from a source and a partial target.
    Transfer(TransferArgs),
    /// Run a comparison method.
    Baseline(BaselineArgs),
    /// Score an estimated graph against a ground truth.
    Eval(EvalArgs),
    /// Score methods over a grid of synthetic settings.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n_source: usize,
    #[arg(long)]
    n_target: usize,
    #[arg(long)]
    dynamic_factor: f64,
    #[arg(long)]
    maturity: f64,
    #[arg(long, default_value_t = 3)]
    n_types: usize,
    #[arg(long)]
    edge_prob: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write cumulative snapshots of this width (milliseconds).
    #[arg(long, requires = "snapshot_dir")]
    window_ms: Option<i64>,
    #[arg(long, requires = "window_ms")]
    snapshot_dir: Option<PathBuf>,
}

/// Pipeline settings. Values from `--config` are applied first, then any
/// flags given here.
#[derive(Args, Clone, Default)]
struct PipelineArgs {
    /// File of `key=value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// `auto` or a fixed value in [0,1].
    #[arg(long)]
    mu: Option<MuMode>,
    #[arg(long)]
    theta: Option<u32>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    d1: Option<usize>,
    #[arg(long)]
    d2: Option<usize>,
    #[arg(long)]
    z_entity: Option<f64>,
    #[arg(long)]
    z_edge: Option<f64>,
    #[arg(long)]
    max_path_len: Option<usize>,
    /// `auto` or a fixed distance for unreachable pairs.
    #[arg(long)]
    distance_cap: Option<String>,
}

impl PipelineArgs {
    fn resolve(&self) -> Result<TransferConfig> {
        let mut cfg = TransferConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.merge_kv(&text).with_context(|| format!("config {}", path.display()))?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.mu {
            cfg.mu_mode = v;
        }
        if let Some(v) = self.theta {
            cfg.theta = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.d1 {
            cfg.d1 = v;
        }
        if let Some(v) = self.d2 {
            cfg.d2 = v;
        }
        if let Some(v) = self.z_entity {
            cfg.z_entity = v;
        }
        if let Some(v) = self.z_edge {
            cfg.z_edge = v;
        }
        if let Some(v) = self.max_path_len {
            cfg.max_path_len = v;
        }
        if let Some(v) = &self.distance_cap {
            cfg.set("distance_cap", v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TransferArgs {
    #[arg(long)]
    source: PathBuf,
    /// Partially observed target graph.
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON run report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// CSV of the dependency-stage objective per iteration.
    #[arg(long)]
    trace_csv: Option<PathBuf>,
    /// Write each meta-path distance matrix of the source as CSV.
    #[arg(long)]
    dump_similarity: Option<PathBuf>,
    /// Include stage timings in the report.
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct BaselineArgs {
    /// One of nt, dt, rw-dcm.
    #[arg(long)]
    method: Method,
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// size, dynfactor, maturity or mu.
    #[arg(long)]
    axis: Axis,
    /// Grid as `a,b,c` or `start:stop:step`.
    #[arg(long)]
    values: String,
    /// Comma-separated subset of nt, dt, rw-dcm, acret.
    #[arg(long, value_delimiter = ',', required = true)]
    methods: Vec<Method>,
    /// Comma-separated instance seeds.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 1200)]
    n_source: usize,
    #[arg(long, default_value_t = 600)]
    n_target: usize,
    #[arg(long, default_value_t = 0.2)]
    dynamic_factor: f64,
    #[arg(long, default_value_t = 0.5)]
    maturity: f64,
    #[arg(long, default_value_t = 3)]
    n_types: usize,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let num = |s: &str| s.trim().parse::<f64>().with_context(|| format!("bad grid value {s:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || stop < start {
                bail!("grid {text:?} needs start <= stop and a positive step");
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            // Rounded so that 0:1:0.1 yields 0.3 rather than 0.30000000000000004.
            Ok((0..=n).map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12).collect())
        }
        [_] => text.split(',').map(num).collect(),
        _ => bail!("grid {text:?} is neither a list nor start:stop:step"),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_source: a.n_source,
        n_target: a.n_target,
        dynamic_factor: a.dynamic_factor,
        maturity: a.maturity,
        n_types: a.n_types,
        edge_prob: a.edge_prob,
        seed: a.seed,
    };
    let inst = generate(&spec)?;
    write_instance(&inst, &a.out)?;
    info!(
        "requested F {} measured {:.6}; {} observed of {} true entities",
        spec.dynamic_factor, inst.meta.measured_dynamic_factor, inst.meta.partial_entities, inst.meta.truth_entities
    );
    Ok(())
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let file = fs::File::open(&a.events).with_context(|| format!("opening {}", a.events.display()))?;
    let events = parse_events(BufReader::new(file))?;
    let ingested = accumulate(&events)?;
    write_graph(&ingested.graph, &a.out)?;
    info!(
        "{} events, {} skipped: {} entities, {} edges",
        events.len(),
        ingested.skipped,
        ingested.graph.len(),
        ingested.graph.edge_count()
    );
    if let (Some(window), Some(dir)) = (a.window_ms, a.snapshot_dir) {
        let series = snapshot_series(&events, window)?;
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for (k, g) in series.iter().enumerate() {
            write_graph(g, dir.join(format!("snapshot_{:04}.graph", k + 1)))?;
        }
    }
    Ok(())
}

fn cmd_transfer(a: TransferArgs) -> Result<()> {
    let mut cfg = a.pipeline.resolve()?;
    cfg.record_timings = a.timings;
    let gs = read_graph(&a.source)?;
    let hat = read_graph(&a.target)?;
    if let Some(dir) = &a.dump_similarity {
        let mats = metapath_distances(&gs, cfg.max_path_len, cfg.distance_cap)?;
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (k, m) in mats.iter().enumerate() {
            let name = m.provenance().map(|p| p.to_string()).unwrap_or_default();
            write_text(&dir.join(format!("{k:02}_{name}.csv")), &m.to_csv())?;
        }
    }
    let (g, report) = acret_transfer(&gs, &hat, &cfg)?;
    write_graph(&g, &a.out)?;
    if let Some(path) = &a.report {
        write_text(path, &report.to_json()?)?;
    }
    if let Some(path) = &a.trace_csv {
        let mut csv = String::from("iteration,objective\n");
        for (i, f) in report.dcm.iter().flat_map(|t| &t.trace) {
            csv.push_str(&format!("{i},{f}\n"));
        }
        write_text(path, &csv)?;
    }
    info!(
        "{} selected entities, mu {:.4}: {} entities, {} edges",
        report.selected.len(),
        report.mu_used,
        g.len(),
        g.edge_count()
    );
    Ok(())
}

fn cmd_baseline(a: BaselineArgs) -> Result<()> {
    let cfg = a.pipeline.resolve()?;
    let gs = read_graph(&a.source)?;
    let hat = read_graph(&a.target)?;
    let g = match a.method {
        Method::Nt => baseline_nt(&hat),
        Method::Dt => baseline_dt(&gs, &hat)?,
        Method::RwDcm => baseline_rw_dcm(&gs, &hat, &cfg)?,
        Method::Acret => bail!("acret is not a baseline; use the transfer subcommand"),
    };
    write_graph(&g, &a.out)?;
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let est = read_graph(&a.estimate)?;
    let truth = read_graph(&a.truth)?;
    let json = serde_json::to_string_pretty(&score(&est, &truth))? + "\n";
    match &a.out {
        Some(path) => write_text(path, &json),
        None => io::stdout().write_all(json.as_bytes()).context("writing stdout"),
    }
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let plan = SweepPlan {
        axis: a.axis,
        values: parse_grid(&a.values)?,
        methods: a.methods,
        seeds: a.seeds,
        base: SynthSpec {
            n_source: a.n_source,
            n_target: a.n_target,
            dynamic_factor: a.dynamic_factor,
            maturity: a.maturity,
            n_types: a.n_types,
            edge_prob: None,
            seed: 0,
        },
        config: a.pipeline.resolve()?,
        jobs: a.jobs,
    };
    let rows = run_sweep(&plan)?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf)?;
    write_text(&a.out, std::str::from_utf8(&buf)?)?;
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        bail!("{failed} of {} sweep rows failed; see the status column of {}", rows.len(), a.out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRAFT_LOG", "warn")).init();
    let cli = Cli::parse();
    let (name, result) = match cli.command {
        Command::Synth(a) => ("synth", cmd_synth(a)),
        Command::Ingest(a) => ("ingest", cmd_ingest(a)),
        Command::Transfer(a) => ("transfer", cmd_transfer(a)),
        Command::Baseline(a) => ("baseline", cmd_baseline(a)),
        Command::Eval(a) => ("eval", cmd_eval(a)),
        Command::Sweep(a) => ("sweep", cmd_sweep(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("graft {name}: {e:#}");
            ExitCode::FAILURE
        }
    }
}
