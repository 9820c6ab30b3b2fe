//! Append-only event log with the materialized orchestration state.
//!
//! All commands go through one mutex: plan against the current state,
//! append the events, then commit them. A command whose events cannot be
//! written leaves the state untouched.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use crowdrule_core::builder::BuilderAction;
use crowdrule_core::dataset::Dataset;
use crowdrule_core::orchestration::{
    Event, ExperimentConfig, Hit, OrchestrationError, OrchestrationState, Orchestrator, Planned, Reply, RespondOutcome,
    SessionInfo, SubmitOutcome,
};
use crowdrule_core::sim::Platform;

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

/// Seconds since the Unix epoch.
pub fn system_clock() -> Clock {
    Arc::new(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()))
}

/// 1, 2, 3, ... on successive calls.
pub fn logical_clock() -> Clock {
    let n = Arc::new(AtomicU64::new(0));
    Arc::new(move || n.fetch_add(1, Ordering::SeqCst) + 1)
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Orchestration(#[from] OrchestrationError),
    #[error("event log {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("event log {path}, line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// What opening a log found.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Recovery {
    pub events: usize,
    /// Bytes of an unfinished last line that were cut off.
    pub truncated_bytes: u64,
}

struct Inner {
    orchestrator: Orchestrator,
    file: File,
}

pub struct Store {
    inner: Mutex<Inner>,
    ds: Arc<Dataset>,
    path: PathBuf,
    fsync: bool,
    clock: Clock,
}

/// Parses a log. A last line without its newline is a torn write: it is
/// dropped if it does not parse. Any other bad line is an error.
pub fn read_log(path: &Path, text: &str) -> Result<(Vec<Event>, u64), StoreError> {
    let mut events = Vec::new();
    let mut offset = 0usize;
    for (i, chunk) in text.split_inclusive('\n').enumerate() {
        let complete = chunk.ends_with('\n');
        let line = chunk.trim_end();
        if line.is_empty() {
            offset += chunk.len();
            continue;
        }
        match serde_json::from_str::<Event>(line) {
            Ok(e) => events.push(e),
            Err(_) if !complete => return Ok((events, (text.len() - offset) as u64)),
            Err(e) => {
                return Err(StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
        offset += chunk.len();
    }
    Ok((events, 0))
}

impl Store {
    /// Opens or creates the log at `path` and replays it.
    pub fn open(
        path: impl AsRef<Path>,
        config: ExperimentConfig,
        ds: Arc<Dataset>,
        fsync: bool,
        clock: Clock,
    ) -> Result<(Store, Recovery), StoreError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io_err(e)),
        };
        let (events, torn) = read_log(&path, &text)?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err)?;
        if torn > 0 {
            file.set_len(text.len() as u64 - torn).map_err(io_err)?;
        } else if !text.is_empty() && !text.ends_with('\n') {
            file.write_all(b"\n").map_err(io_err)?;
        }
        let orchestrator = Orchestrator::replay(config, &events);
        let recovery = Recovery {
            events: events.len(),
            truncated_bytes: torn,
        };
        let store = Store {
            inner: Mutex::new(Inner { orchestrator, file }),
            ds,
            path,
            fsync,
            clock,
        };
        Ok((store, recovery))
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.ds
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Runs `f` against the current state.
    pub fn read<R>(&self, f: impl FnOnce(&OrchestrationState) -> R) -> R {
        f(&self.lock().orchestrator.state)
    }

    pub fn snapshot(&self) -> String {
        self.read(|s| s.snapshot())
    }

    pub fn config(&self) -> ExperimentConfig {
        self.lock().orchestrator.config.clone()
    }

    fn run<T>(&self, plan: impl FnOnce(&Orchestrator, &Dataset, u64) -> Planned<T>) -> Result<T, StoreError> {
        let mut inner = self.lock();
        let now = (self.clock)();
        let (out, events) = plan(&inner.orchestrator, &self.ds, now)?;
        if !events.is_empty() {
            let mut buf = String::new();
            for e in &events {
                buf.push_str(&serde_json::to_string(e).expect("events serialize"));
                buf.push('\n');
            }
            let io_err = |source| StoreError::Io {
                path: self.path.clone(),
                source,
            };
            inner.file.write_all(buf.as_bytes()).map_err(io_err)?;
            inner.file.flush().map_err(io_err)?;
            if self.fsync {
                inner.file.sync_data().map_err(io_err)?;
            }
            inner.orchestrator.commit(&events);
        }
        Ok(out)
    }

    pub fn session(&self, worker_id: &str) -> Result<SessionInfo, StoreError> {
        self.run(|o, ds, now| o.plan_session(worker_id, ds, now))
    }

    /// Like `session`, also returning the clock reading it ran at.
    pub fn session_at(&self, worker_id: &str) -> Result<(SessionInfo, u64), StoreError> {
        self.run(|o, ds, now| o.plan_session(worker_id, ds, now).map(|(i, e)| ((i, now), e)))
    }

    pub fn next_task(&self, worker_id: &str) -> Result<Hit, StoreError> {
        self.run(|o, ds, now| o.plan_next_task(worker_id, ds, now))
    }

    pub fn respond(
        &self,
        worker_id: &str,
        question_id: &str,
        reply: Reply,
        explanation: Option<&str>,
    ) -> Result<RespondOutcome, StoreError> {
        self.run(|o, ds, now| o.plan_respond(worker_id, question_id, reply, explanation, ds, now))
    }

    pub fn submit_rule(
        &self,
        worker_id: &str,
        question_id: &str,
        actions: &[BuilderAction],
    ) -> Result<SubmitOutcome, StoreError> {
        self.run(|o, ds, now| o.plan_submit_rule(worker_id, question_id, actions, ds, now))
    }
}

impl Platform for Store {
    type Error = StoreError;

    fn session(&mut self, worker_id: &str) -> Result<SessionInfo, StoreError> {
        Store::session(self, worker_id)
    }

    fn next_task(&mut self, worker_id: &str) -> Result<Option<Hit>, StoreError> {
        match Store::next_task(self, worker_id) {
            Ok(h) => Ok(Some(h)),
            Err(StoreError::Orchestration(OrchestrationError::LimitExceeded { .. })) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn respond(
        &mut self,
        worker_id: &str,
        question_id: &str,
        reply: Reply,
        explanation: Option<&str>,
    ) -> Result<RespondOutcome, StoreError> {
        Store::respond(self, worker_id, question_id, reply, explanation)
    }

    fn submit_rule(
        &mut self,
        worker_id: &str,
        question_id: &str,
        actions: &[BuilderAction],
    ) -> Result<SubmitOutcome, StoreError> {
        Store::submit_rule(self, worker_id, question_id, actions)
    }
}
