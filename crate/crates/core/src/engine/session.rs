use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Engine, EngineSpec, ErrorKind, ExecutionError, PlanFingerprint, QueryResult};
use crate::error::DriverError;
use crate::value::SqlType;

/// Per-session query accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCounters {
    pub successful: u64,
    pub unsuccessful: u64,
    /// Total engine time spent in counted statements.
    pub busy_micros: u64,
}

impl QueryCounters {
    pub fn total(&self) -> u64 {
        self.successful + self.unsuccessful
    }

    pub fn add(&mut self, other: &QueryCounters) {
        self.successful += other.successful;
        self.unsuccessful += other.unsuccessful;
        self.busy_micros += other.busy_micros;
    }

    pub fn since(&self, earlier: &QueryCounters) -> QueryCounters {
        QueryCounters {
            successful: self.successful - earlier.successful,
            unsuccessful: self.unsuccessful - earlier.unsuccessful,
            busy_micros: self.busy_micros - earlier.busy_micros,
        }
    }
}

/// An engine session plus the bookkeeping the oracle needs around it: a
/// fixed timeout, query counters, and the state script to replay if the
/// engine has to be reopened.
pub struct Session {
    spec: EngineSpec,
    engine: Box<dyn Engine>,
    timeout: Duration,
    counters: QueryCounters,
    script: Vec<String>,
    recoveries: u64,
}

impl Session {
    pub fn open(spec: &EngineSpec, timeout: Duration) -> Result<Self, DriverError> {
        let engine = spec.open()?;
        Ok(Self {
            spec: spec.clone(),
            engine,
            timeout,
            counters: QueryCounters::default(),
            script: Vec::new(),
            recoveries: 0,
        })
    }

    pub fn spec(&self) -> &EngineSpec {
        &self.spec
    }

    pub fn engine(&mut self) -> &mut dyn Engine {
        &mut *self.engine
    }

    pub fn profile(&self) -> &super::EngineProfile {
        self.engine.profile()
    }

    pub fn version(&self) -> String {
        self.engine.version()
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn counters(&self) -> QueryCounters {
        self.counters
    }

    pub fn recoveries(&self) -> u64 {
        self.recoveries
    }

    /// Executes a statement that counts towards the oracle's query totals.
    pub fn execute(&mut self, sql: &str) -> Result<QueryResult, ExecutionError> {
        let start = Instant::now();
        let result = self.engine.execute(sql, self.timeout);
        self.counters.busy_micros += start.elapsed().as_micros() as u64;
        match &result {
            Ok(_) => self.counters.successful += 1,
            Err(e) => {
                self.counters.unsuccessful += 1;
                if e.kind == ErrorKind::Crash {
                    self.recover();
                }
            }
        }
        result
    }

    /// Executes bookkeeping statements (state setup, cleanup, probes) that
    /// are not part of any test.
    pub fn execute_uncounted(&mut self, sql: &str) -> Result<QueryResult, ExecutionError> {
        let result = self.engine.execute(sql, self.timeout);
        if matches!(&result, Err(e) if e.kind == ErrorKind::Crash) {
            self.recover();
        }
        result
    }

    pub fn probe_type(&mut self, expr: &str, context_tables: &[String]) -> Result<SqlType, ExecutionError> {
        self.engine.probe_type(expr, context_tables, self.timeout)
    }

    pub fn explain_plan(&mut self, query: &str) -> Result<PlanFingerprint, ExecutionError> {
        self.engine.explain_plan(query, self.timeout)
    }

    /// Drops everything and starts from an empty database.
    pub fn reset(&mut self) -> Result<(), DriverError> {
        self.script.clear();
        self.engine.reopen()
    }

    /// Runs one state-creation statement and remembers it for replay.
    pub fn run_setup(&mut self, sql: &str) -> Result<QueryResult, ExecutionError> {
        let r = self.execute_uncounted(sql)?;
        self.script.push(sql.to_owned());
        Ok(r)
    }

    /// Statements that built the current state, in order.
    pub fn script(&self) -> &[String] {
        &self.script
    }

    fn recover(&mut self) {
        self.recoveries += 1;
        tracing::warn!(engine = %self.spec.describe(), "engine session died; reopening and replaying state");
        if self.engine.reopen().is_err() {
            match self.spec.open() {
                Ok(e) => self.engine = e,
                Err(err) => {
                    tracing::error!(%err, "cannot reopen engine");
                    return;
                }
            }
        }
        for stmt in &self.script {
            if let Err(e) = self.engine.execute(stmt, self.timeout) {
                tracing::error!(%e, "state replay failed");
                break;
            }
        }
    }
}
