use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use coddtest::engine::{EngineProfile, EngineSpec};
use coddtest::harness::{run_campaign, CampaignConfig};
use coddtest::oracle::OracleMode;

/// Hunts for logic bugs in an SQL engine by comparing queries with their
/// constant-folded counterparts.
#[derive(Debug, Parser)]
#[command(name = "coddtest", version)]
struct Args {
    /// Engine profile: `sqlite`, or the path of a profile TOML file.
    #[arg(long, default_value = "sqlite")]
    engine: String,
    /// Shared library of the engine build to test; the statically linked
    /// SQLite is used when omitted.
    #[arg(long)]
    engine_path: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Campaign length in seconds.
    #[arg(long, conflicts_with = "num_tests")]
    duration: Option<u64>,
    /// Stop after this many completed tests.
    #[arg(long)]
    num_tests: Option<u64>,
    #[arg(long, default_value_t = 3)]
    max_depth: usize,
    #[arg(long, value_enum, default_value_t = Mode::Combined)]
    mode: Mode,
    /// Per-statement timeout.
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
    /// Output directory for reports and statistics.
    #[arg(long, default_value = "coddtest-out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    reduce: Switch,
    /// Seconds between statistics records.
    #[arg(long, default_value_t = 10)]
    stats_interval: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Combined,
    Expressions,
    Subqueries,
    Relations,
}

impl From<Mode> for OracleMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Combined => OracleMode::Combined,
            Mode::Expressions => OracleMode::Expressions,
            Mode::Subqueries => OracleMode::Subqueries,
            Mode::Relations => OracleMode::Relations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

fn engine_spec(args: &Args) -> Result<EngineSpec> {
    let profile = if args.engine == "sqlite" {
        EngineProfile::sqlite()
    } else {
        EngineProfile::load(args.engine.as_ref()).with_context(|| format!("loading profile {}", args.engine))?
    };
    match &args.engine_path {
        Some(path) => Ok(EngineSpec::sqlite_from_path(profile, path)?),
        None if args.engine == "sqlite" => Ok(EngineSpec::bundled_sqlite()),
        None => bail!("--engine-path is required with a custom profile"),
    }
}

fn config(args: &Args) -> Result<CampaignConfig> {
    if args.duration.is_none() && args.num_tests.is_none() {
        bail!("one of --duration or --num-tests is required");
    }
    if args.max_depth == 0 {
        bail!("--max-depth must be at least 1");
    }
    let mut c = CampaignConfig::new(engine_spec(args)?);
    c.seed = args.seed;
    c.threads = args.threads;
    c.duration = args.duration.map(Duration::from_secs);
    c.max_tests = args.num_tests;
    c.oracle = c.oracle.with_mode(args.mode.into()).with_max_depth(args.max_depth);
    c.timeout = Duration::from_millis(args.timeout_ms);
    c.out_dir = Some(args.out.clone());
    c.reduce = args.reduce == Switch::On;
    c.stats_interval = Duration::from_secs(args.stats_interval.max(1));
    Ok(c)
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();
    let config = config(&args)?;

    let cancel = Arc::new(AtomicBool::new(false));
    let flag = cancel.clone();
    ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed)).context("installing signal handler")?;

    eprintln!(
        "testing {} with {} thread(s), mode {}, seed {}",
        config.engine.describe(),
        config.threads,
        config.oracle.mode,
        config.seed
    );
    let stats = run_campaign(&config, &cancel)?;
    print!("{}", stats.summary());
    println!("output in {}", args.out.display());
    Ok(())
}
