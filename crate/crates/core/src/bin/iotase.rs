use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use iotase::config::Config;
use iotase::dataset::{generate_for, bundled_catalog, load_descriptions, CatalogSpec, CLINIC_QUERY, DOG_PARK_QUERY, GAS_QUERY, PARKING_QUERY};
use iotase::docstore::{clean_dataset, load_dataset, save_dataset};
use iotase::embedder::build_embedder;
use iotase::engine::{load_or_build_index, Engine};
use iotase::eval::{load_cases, run_intent_eval, run_latency_probe, benchmark_cases};
use iotase::ingest::{Schedule, StreamSimulator};
use iotase::server;

#[derive(Parser)]
#[command(name = "iotase", version, about = "Real-time IoT agentic search engine")]
struct Cli {
    /// TOML config file; IOTASE_* variables and flags override it.
    #[arg(long, global = true, env = "IOTASE_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset directory; defaults to the bundled demo dataset.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Index snapshot to load when it matches the catalog.
    #[arg(long)]
    index: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        listen: Option<String>,
        #[command(flatten)]
        data: DataArgs,
        /// `mock` or `http`.
        #[arg(long)]
        llm: Option<String>,
        /// Write retained traces here as NDJSON on shutdown.
        #[arg(long)]
        trace_dump: Option<PathBuf>,
    },
    #[command(subcommand)]
    Dataset(DatasetCmd),
    #[command(subcommand)]
    Index(IndexCmd),
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Emit seeded sensor updates as NDJSON, or post them to a running server.
    Simulate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ticks per second of wall time; every node reports once per tick.
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        /// Seconds of wall time to run.
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        /// Base URL of a server to post ticks to, e.g. http://127.0.0.1:8080.
        #[arg(long)]
        target: Option<String>,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Write a synthetic dataset in the store's load format.
    Generate {
        #[arg(long, default_value_t = 500)]
        services: usize,
        #[arg(long, default_value_t = 37_033)]
        devices: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// JSONL of {name, description}; replaces the bundled catalog.
        #[arg(long)]
        descriptions: Option<PathBuf>,
    },
    /// Validate and clean a dataset, printing per-service counts.
    Load {
        #[arg(long)]
        data: PathBuf,
        /// Write the cleaned dataset here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum IndexCmd {
    /// Embed the catalog and write an index snapshot.
    Build {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Show the top services for a query.
    Search {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Top-k intent accuracy over the benchmark queries.
    Intents {
        #[command(flatten)]
        data: DataArgs,
        /// Embedder: `hashed` or `remote`.
        #[arg(long)]
        provider: Option<String>,
        /// Cases file; defaults to the bundled 25 queries.
        #[arg(long)]
        cases: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        json: bool,
    },
    /// End-to-end query latency and error rate.
    Latency {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// One query per line; defaults to the benchmark and demo queries.
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

fn apply_data(cfg: &mut Config, data: &DataArgs) {
    if let Some(d) = &data.data {
        cfg.data_dir = Some(d.clone());
    }
    if let Some(i) = &data.index {
        cfg.index_path = Some(i.clone());
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let mut cfg = Config::load(cli.config.as_deref())?;

    match cli.command {
        Command::Serve { listen, data, llm, trace_dump } => {
            if let Some(l) = listen {
                cfg.listen = l;
            }
            if let Some(l) = llm {
                cfg.providers.llm = l;
            }
            apply_data(&mut cfg, &data);
            let listen = cfg.listen.clone();
            let engine = Arc::new(Engine::open(cfg)?);
            let h = engine.health();
            tracing::info!(services = h.catalog_size, documents = h.documents, "engine ready");
            tokio::runtime::Runtime::new()?.block_on(server::serve(engine.clone(), &listen))?;
            if let Some(path) = trace_dump {
                let n = engine.traces().dump(&path)?;
                tracing::info!(traces = n, path = %path.display(), "traces written");
            }
        }
        Command::Dataset(DatasetCmd::Generate { services, devices, seed, out, descriptions }) => {
            let spec = CatalogSpec::new(services, devices, seed);
            let catalog = match descriptions {
                Some(path) => load_descriptions(&path)?,
                None => bundled_catalog(services)?,
            };
            let start = Instant::now();
            let ds = generate_for(&spec, catalog)?;
            let manifest = ds.write(&out)?;
            tracing::info!(elapsed_ms = start.elapsed().as_millis() as u64, "dataset written");
            println!("{} services, {} documents -> {}", manifest.services.len(), manifest.document_count(), out.display());
        }
        Command::Dataset(DatasetCmd::Load { data, out }) => {
            let loaded = load_dataset(&data)?;
            let (docs, report) = clean_dataset(loaded.documents);
            let counts = {
                let mut m = std::collections::BTreeMap::new();
                for d in &docs {
                    *m.entry(d.service_name.clone()).or_insert(0usize) += 1;
                }
                m
            };
            if let Some(out) = &out {
                save_dataset(out, &loaded.catalog, &loaded.regions, &loaded.field_schema, &docs)?;
            }
            print_json(&serde_json::json!({
                "services": loaded.catalog.len(),
                "documents": docs.len(),
                "cleaning": report,
                "per_service": counts,
            }))?;
        }
        Command::Index(IndexCmd::Build { data, out }) => {
            let catalog = match data {
                Some(dir) => load_dataset(&dir)?.catalog,
                None => bundled_catalog(iotase::dataset::DEFAULT_SERVICES)?,
            };
            let embedder = build_embedder(&cfg.embedder)?;
            cfg.index_path = None;
            let start = Instant::now();
            let idx = load_or_build_index(&cfg, &catalog, embedder.as_ref())?;
            idx.write_snapshot(&out)?;
            println!(
                "{} services, d={}, built in {} ms, snapshot {}",
                idx.len(),
                idx.dimension(),
                start.elapsed().as_millis(),
                idx.snapshot_hash()
            );
        }
        Command::Index(IndexCmd::Search { data, query, k }) => {
            apply_data(&mut cfg, &data);
            let engine = Engine::open(cfg)?;
            for (i, hit) in engine.rag().semantic_route(&query, k)?.iter().enumerate() {
                println!("{}. {} ({:.4})", i + 1, hit.name, hit.similarity);
            }
        }
        Command::Eval(EvalCmd::Intents { data, provider, cases, k, json }) => {
            apply_data(&mut cfg, &data);
            if let Some(p) = provider {
                cfg.embedder.provider = p;
            }
            let cases = match cases {
                Some(p) => load_cases(&p)?,
                None => benchmark_cases(),
            };
            let engine = Engine::open(cfg)?;
            let report = run_intent_eval(engine.rag().as_ref(), &cases, k);
            if json {
                print_json(&report)?;
            } else {
                print!("{}", report.render_table());
            }
        }
        Command::Eval(EvalCmd::Latency { data, n, parallel, queries, json }) => {
            apply_data(&mut cfg, &data);
            let queries = match queries {
                Some(p) => read_lines(&p)?,
                None => default_probe_queries(),
            };
            if queries.is_empty() {
                bail!("no queries to run");
            }
            let engine = Engine::open(cfg)?;
            let report = run_latency_probe(&queries, n, parallel, |i, q| {
                engine.query(&format!("probe-{i}"), q, None).is_ok()
            });
            if json {
                print_json(&report)?;
            } else {
                print!("{}", report.render_table());
            }
        }
        Command::Simulate { data, seed, rate, duration, target } => {
            if rate <= 0.0 || duration < 0.0 {
                bail!("rate must be positive and duration non-negative");
            }
            let docs = match data.or(cfg.data_dir) {
                Some(dir) => load_dataset(&dir)?.documents,
                None => iotase::dataset::scenario_dataset().documents,
            };
            simulate(&docs, seed, rate, duration, target.as_deref())?;
        }
    }
    Ok(())
}

fn read_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn default_probe_queries() -> Vec<String> {
    let mut qs: Vec<String> = benchmark_cases().into_iter().map(|c| c.query).collect();
    qs.extend([DOG_PARK_QUERY, PARKING_QUERY, GAS_QUERY, CLINIC_QUERY].map(String::from));
    qs
}

fn simulate(
    docs: &[iotase::datamodel::DeviceDocument],
    seed: u64,
    rate: f64,
    duration: f64,
    target: Option<&str>,
) -> anyhow::Result<()> {
    let start = docs.iter().map(|d| d.updated_at).max().unwrap_or_else(chrono::Utc::now);
    let mut sim = StreamSimulator::new(docs, Schedule::starting_at(start), seed);
    let ticks = (rate * duration).ceil() as u64;
    let period = Duration::from_secs_f64(1.0 / rate);
    let client = reqwest::blocking::Client::new();
    let stdout = std::io::stdout();
    let began = Instant::now();
    for t in 0..ticks {
        let batch = sim.next_tick();
        let mut body = String::new();
        for m in &batch {
            body.push_str(&serde_json::to_string(m)?);
            body.push('\n');
        }
        match target {
            Some(url) => {
                let resp = client.post(format!("{}/ingest", url.trim_end_matches('/'))).body(body).send()?;
                if !resp.status().is_success() {
                    bail!("ingest returned {}", resp.status());
                }
            }
            None => stdout.lock().write_all(body.as_bytes())?,
        }
        let due = period * (t as u32 + 1);
        if let Some(wait) = due.checked_sub(began.elapsed()) {
            std::thread::sleep(wait);
        }
    }
    tracing::info!(ticks, nodes = sim.node_count(), "simulation finished");
    Ok(())
}
