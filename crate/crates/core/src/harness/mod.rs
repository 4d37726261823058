//! Campaign driver: worker threads, statistics, deduplication, reduction
//! and report output.
//!
//! Each worker owns one engine session and a private RNG stream derived from
//! the campaign seed and its index. It loops: generate a state, apply it,
//! run a fixed number of oracle iterations against it, repeat. Workers send
//! immutable messages to the calling thread, which aggregates statistics and
//! is the only writer of output files.

pub mod reduce;
pub mod report;

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use reduce::{reduce, ReduceError};
pub use report::{error_signature, replay, BucketKey, BugReport, Dedup, Deduplicator};

use crate::engine::{EngineSpec, ErrorKind, QueryCounters, Session, DEFAULT_TIMEOUT};
use crate::error::HarnessError;
use crate::oracle::{run_any, OracleConfig, Outcome};
use crate::state_gen::{apply_state, generate_state, DatabaseState, StateConfig};

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub engine: EngineSpec,
    pub seed: u64,
    pub threads: usize,
    /// Stop after this much wall time.
    pub duration: Option<Duration>,
    /// Stop after this many completed tests (Pass or Discrepancy).
    pub max_tests: Option<u64>,
    /// Stop each worker after this many generated states.
    pub states_per_worker: Option<u64>,
    /// Stop once this many new bug reports have been produced.
    pub max_reports: Option<u64>,
    pub oracle: OracleConfig,
    pub state: StateConfig,
    /// Oracle iterations run against each generated state.
    pub iterations_per_state: usize,
    /// Per-statement timeout.
    pub timeout: Duration,
    /// Where reports, `stats.jsonl` and `summary.txt` go; nothing is
    /// written when unset.
    pub out_dir: Option<PathBuf>,
    pub reduce: bool,
    pub reduce_timeout: Duration,
    pub stats_interval: Duration,
}

impl CampaignConfig {
    pub fn new(engine: EngineSpec) -> Self {
        Self {
            engine,
            seed: 0,
            threads: 1,
            duration: None,
            max_tests: None,
            states_per_worker: None,
            max_reports: None,
            oracle: OracleConfig { collect_plans: true, ..OracleConfig::default() },
            state: StateConfig::default(),
            iterations_per_state: 100,
            timeout: DEFAULT_TIMEOUT,
            out_dir: None,
            reduce: true,
            reduce_timeout: Duration::from_secs(60),
            stats_interval: Duration::from_secs(10),
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.threads == 0 {
            return Err(HarnessError::Config("at least one thread is required".into()));
        }
        if self.duration.is_none() && self.max_tests.is_none() && self.states_per_worker.is_none() {
            return Err(HarnessError::Config("a duration, test count or state count is required".into()));
        }
        if self.iterations_per_state == 0 {
            return Err(HarnessError::Config("iterations per state must be positive".into()));
        }
        Ok(())
    }
}

/// Campaign totals. Derived ratios are methods, so they are never stale.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CampaignStats {
    /// Completed tests: Pass plus Discrepancy.
    pub tests: u64,
    /// All oracle iterations, whatever their outcome.
    pub iterations: u64,
    pub successful_queries: u64,
    pub unsuccessful_queries: u64,
    /// Engine time spent in counted queries.
    pub busy_micros: u64,
    pub unique_plans: u64,
    pub verdict_histogram: BTreeMap<String, u64>,
    /// The same histogram split by worker.
    pub worker_histograms: Vec<BTreeMap<String, u64>>,
    pub states: u64,
    pub state_failures: u64,
    pub reports: u64,
    pub duplicate_reports: u64,
    /// Time from campaign start to the first bug report.
    pub first_report_after: Option<Duration>,
    pub wall_time: Duration,
}

impl CampaignStats {
    /// Queries per completed test.
    pub fn qpt(&self) -> f64 {
        ratio((self.successful_queries + self.unsuccessful_queries) as f64, self.tests as f64)
    }

    pub fn tests_per_second(&self) -> f64 {
        ratio(self.tests as f64, self.wall_time.as_secs_f64())
    }

    /// Mean engine time per counted query, in microseconds.
    pub fn mean_query_micros(&self) -> f64 {
        ratio(self.busy_micros as f64, (self.successful_queries + self.unsuccessful_queries) as f64)
    }

    pub fn plans_per_10k_tests(&self) -> f64 {
        ratio(self.unique_plans as f64 * 10_000.0, self.tests as f64)
    }

    pub fn count(&self, outcome: &str) -> u64 {
        self.verdict_histogram.get(outcome).copied().unwrap_or(0)
    }

    fn record(&self) -> serde_json::Value {
        serde_json::json!({
            "wall_time_s": self.wall_time.as_secs_f64(),
            "tests": self.tests,
            "iterations": self.iterations,
            "successful_queries": self.successful_queries,
            "unsuccessful_queries": self.unsuccessful_queries,
            "qpt": self.qpt(),
            "unique_plans": self.unique_plans,
            "tests_per_second": self.tests_per_second(),
            "mean_query_us": self.mean_query_micros(),
            "states": self.states,
            "state_failures": self.state_failures,
            "reports": self.reports,
            "duplicate_reports": self.duplicate_reports,
            "verdicts": self.verdict_histogram,
        })
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k:<24}{v}\n"));
        line("wall time", format!("{:.1} s", self.wall_time.as_secs_f64()));
        line("tests", self.tests.to_string());
        line("iterations", self.iterations.to_string());
        line("successful queries", self.successful_queries.to_string());
        line("unsuccessful queries", self.unsuccessful_queries.to_string());
        line("queries per test", format!("{:.2}", self.qpt()));
        line("unique plans", self.unique_plans.to_string());
        line("tests per second", format!("{:.1}", self.tests_per_second()));
        line("mean query latency", format!("{:.1} us", self.mean_query_micros()));
        line("states", format!("{} ({} failed)", self.states, self.state_failures));
        line("bug reports", format!("{} ({} duplicates)", self.reports, self.duplicate_reports));
        if let Some(t) = self.first_report_after {
            line("first report after", format!("{:.1} s", t.as_secs_f64()));
        }
        s.push_str("verdicts\n");
        for (k, v) in &self.verdict_histogram {
            s.push_str(&format!("  {k:<34}{v}\n"));
        }
        s
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

enum Message {
    Iteration { worker: usize, outcome: Outcome, queries: QueryCounters, plans: Vec<u64> },
    State { applied: bool },
    Report(Box<BugReport>),
    Duplicate,
}

/// Runs a campaign until the configured duration or test count is reached,
/// or `cancel` is set. Fails only if the engine cannot be opened or output
/// cannot be written.
pub fn run_campaign(config: &CampaignConfig, cancel: &AtomicBool) -> Result<CampaignStats, HarnessError> {
    config.validate()?;
    let sessions: Vec<Session> =
        (0..config.threads).map(|_| Session::open(&config.engine, config.timeout)).collect::<Result<_, _>>()?;
    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.clone(), source })?;
    }
    let start = Instant::now();
    let deadline = config.duration.map(|d| start + d);
    let tests_done = AtomicU64::new(0);
    let reports_done = AtomicU64::new(0);
    let dedup = Mutex::new(Deduplicator::default());
    let stop = || {
        cancel.load(Ordering::Relaxed)
            || deadline.is_some_and(|d| Instant::now() >= d)
            || config.max_tests.is_some_and(|n| tests_done.load(Ordering::Relaxed) >= n)
            || config.max_reports.is_some_and(|n| reports_done.load(Ordering::Relaxed) >= n)
    };

    let (tx, rx) = mpsc::channel::<Message>();
    let mut stats = CampaignStats::default();
    let mut io_error = None;
    std::thread::scope(|scope| {
        for (worker, session) in sessions.into_iter().enumerate() {
            let tx = tx.clone();
            let (stop, tests_done, dedup) = (&stop, &tests_done, &dedup);
            scope.spawn(move || worker_loop(worker, session, config, tx, stop, tests_done, dedup));
        }
        drop(tx);
        let mut plans = HashSet::new();
        let mut stats_file = config.out_dir.as_ref().map(|d| open_append(&d.join("stats.jsonl")));
        let mut last_flush = Instant::now();
        loop {
            match rx.recv_timeout(Duration::from_millis(200)) {
                Ok(msg) => {
                    if matches!(msg, Message::Report(_)) {
                        reports_done.fetch_add(1, Ordering::Relaxed);
                        stats.first_report_after.get_or_insert(start.elapsed());
                    }
                    if let Err(e) = aggregate(msg, &mut stats, &mut plans, config.out_dir.as_deref()) {
                        io_error.get_or_insert(e);
                    }
                }
                Err(mpsc::RecvTimeoutError::Timeout) => {}
                Err(mpsc::RecvTimeoutError::Disconnected) => break,
            }
            if last_flush.elapsed() >= config.stats_interval {
                last_flush = Instant::now();
                stats.wall_time = start.elapsed();
                flush_stats(&mut stats_file, &stats);
            }
        }
        stats.wall_time = start.elapsed();
        flush_stats(&mut stats_file, &stats);
    });
    if let Some(dir) = &config.out_dir {
        let path = dir.join("summary.txt");
        std::fs::write(&path, stats.summary()).map_err(|source| HarnessError::Io { path, source })?;
    }
    match io_error {
        Some(e) => Err(e),
        None => Ok(stats),
    }
}

fn open_append(path: &Path) -> Option<File> {
    OpenOptions::new().create(true).append(true).open(path).ok()
}

fn flush_stats(file: &mut Option<Option<File>>, stats: &CampaignStats) {
    if let Some(Some(f)) = file {
        let _ = writeln!(f, "{}", stats.record());
    }
}

fn aggregate(
    msg: Message,
    stats: &mut CampaignStats,
    plans: &mut HashSet<u64>,
    out_dir: Option<&Path>,
) -> Result<(), HarnessError> {
    match msg {
        Message::Iteration { worker, outcome, queries, plans: p } => {
            if stats.worker_histograms.len() <= worker {
                stats.worker_histograms.resize_with(worker + 1, BTreeMap::new);
            }
            *stats.worker_histograms[worker].entry(outcome.name()).or_default() += 1;
            stats.iterations += 1;
            if outcome.is_test() {
                stats.tests += 1;
            }
            stats.successful_queries += queries.successful;
            stats.unsuccessful_queries += queries.unsuccessful;
            stats.busy_micros += queries.busy_micros;
            *stats.verdict_histogram.entry(outcome.name()).or_default() += 1;
            plans.extend(p);
            stats.unique_plans = plans.len() as u64;
        }
        Message::State { applied } => {
            stats.states += 1;
            if !applied {
                stats.state_failures += 1;
            }
        }
        Message::Report(report) => {
            stats.reports += 1;
            tracing::warn!(bucket = %report.id, outcome = %report.outcome.name(), site = %report.key.site, "new bug report");
            if let Some(dir) = out_dir {
                report.persist(dir)?;
            }
        }
        Message::Duplicate => stats.duplicate_reports += 1,
    }
    Ok(())
}

fn worker_loop(
    worker: usize,
    mut session: Session,
    config: &CampaignConfig,
    tx: mpsc::Sender<Message>,
    stop: &dyn Fn() -> bool,
    tests_done: &AtomicU64,
    dedup: &Mutex<Deduplicator>,
) {
    let mut rng = worker_rng(config.seed, worker);
    let mut states = 0;
    while !stop() && config.states_per_worker.is_none_or(|n| states < n) {
        states += 1;
        let state_seed = rng.next_u64();
        let state = generate_state(state_seed, &config.state);
        let applied = session.reset().is_ok() && apply_state(&state, &mut session).is_ok();
        if tx.send(Message::State { applied }).is_err() {
            return;
        }
        if !applied {
            continue;
        }
        for _ in 0..config.iterations_per_state {
            if stop() {
                return;
            }
            let verdict = run_any(&state, &mut session, &mut rng, &config.oracle);
            if verdict.outcome.is_test() {
                tests_done.fetch_add(1, Ordering::Relaxed);
            }
            let msg = Message::Iteration {
                worker,
                outcome: verdict.outcome,
                queries: verdict.queries,
                plans: verdict.plans.iter().map(|p| p.0).collect(),
            };
            if tx.send(msg).is_err() {
                return;
            }
            if !verdict.outcome.is_reportable() {
                continue;
            }
            let key = BucketKey::of(&verdict);
            let fresh = matches!(dedup.lock().unwrap().dedup(&key), Dedup::New(_));
            if !fresh {
                let _ = tx.send(Message::Duplicate);
                continue;
            }
            let Some(mut report) =
                BugReport::new(&verdict, &session, state.creation_script.clone(), table_names(&state), state_seed, worker)
            else {
                continue;
            };
            if config.reduce && verdict.outcome != Outcome::EngineError(ErrorKind::Hang) {
                match reduce(&report, &mut session, &config.oracle, config.reduce_timeout) {
                    Ok(r) => report = r,
                    Err(e) => tracing::info!(bucket = %report.id, "not reduced: {e}"),
                }
                // Reduction rebuilt the database; restore this state.
                if session.reset().is_err() || apply_state(&state, &mut session).is_err() {
                    let _ = tx.send(Message::Report(Box::new(report)));
                    break;
                }
            }
            let _ = tx.send(Message::Report(Box::new(report)));
        }
    }
}

/// The random stream of one worker: the campaign seed with the worker index
/// as stream number, so workers never share or shift each other's draws.
pub fn worker_rng(seed: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker as u64);
    rng
}

fn table_names(state: &DatabaseState) -> Vec<String> {
    state.tables.iter().map(|t| t.name.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qpt_is_recomputed() {
        let mut s = CampaignStats { tests: 4, successful_queries: 12, unsuccessful_queries: 1, ..Default::default() };
        assert!((s.qpt() - 13.0 / 4.0).abs() < 1e-12);
        s.tests = 0;
        assert_eq!(s.qpt(), 0.0);
    }

    #[test]
    fn config_is_validated() {
        let mut c = CampaignConfig::new(EngineSpec::bundled_sqlite());
        assert!(c.validate().is_err());
        c.max_tests = Some(1);
        assert!(c.validate().is_ok());
        c.threads = 0;
        assert!(c.validate().is_err());
    }
}
