//! JSONL audit trail.
//!
//! Events are produced by the driver thread and by concurrent Debug One
//! episodes. Sequence numbers and timestamps are assigned when an event is
//! committed to the log, and episode buffers are committed in schedule order,
//! so a run with a deterministic clock produces a byte-identical log.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{IoContext, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    LlmCall,
    ToolCall,
    TestRun,
    PhaseTransition,
}

/// An event before it has been sequenced.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditEvent {
    pub phase: String,
    pub attempt: u32,
    pub kind: RecordKind,
    pub data: Value,
}

impl AuditEvent {
    pub fn new(phase: impl Into<String>, attempt: u32, kind: RecordKind, data: Value) -> Self {
        AuditEvent {
            phase: phase.into(),
            attempt,
            kind,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub ts: String,
    pub phase: String,
    /// 1-based attempt index; 0 before the first attempt.
    pub attempt: u32,
    pub kind: RecordKind,
    pub data: Value,
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock: a fixed origin advanced by one millisecond per reading.
#[derive(Debug, Default)]
pub struct LogicalClock {
    ticks: AtomicU64,
}

impl Clock for LogicalClock {
    fn now(&self) -> DateTime<Utc> {
        let tick = self.ticks.fetch_add(1, Ordering::SeqCst);
        let origin = Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap();
        origin + Duration::milliseconds(tick as i64)
    }
}

/// Anything that accepts audit events.
pub trait EventSink: Sync {
    fn emit(&self, event: AuditEvent);
}

/// Per-episode buffer, committed to the log later in a fixed order.
#[derive(Debug, Default)]
pub struct EventBuffer {
    events: Mutex<Vec<AuditEvent>>,
}

impl EventBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_events(self) -> Vec<AuditEvent> {
        self.events.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

impl EventSink for EventBuffer {
    fn emit(&self, event: AuditEvent) {
        self.events.lock().unwrap_or_else(|e| e.into_inner()).push(event);
    }
}

struct LogInner {
    next_seq: u64,
    writer: Option<BufWriter<File>>,
    records: Vec<AuditRecord>,
    write_error: Option<String>,
}

pub struct AuditLog {
    clock: Box<dyn Clock>,
    inner: Mutex<LogInner>,
}

impl std::fmt::Debug for AuditLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuditLog").finish_non_exhaustive()
    }
}

impl AuditLog {
    /// In-memory log only.
    pub fn in_memory(clock: Box<dyn Clock>) -> Self {
        AuditLog {
            clock,
            inner: Mutex::new(LogInner {
                next_seq: 1,
                writer: None,
                records: Vec::new(),
                write_error: None,
            }),
        }
    }

    /// Log that also streams every record to `path` as JSON lines.
    pub fn to_file(path: &Path, clock: Box<dyn Clock>) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).at(parent)?;
        }
        let file = File::create(path).at(path)?;
        let log = Self::in_memory(clock);
        log.lock().writer = Some(BufWriter::new(file));
        Ok(log)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, LogInner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn commit(&self, events: impl IntoIterator<Item = AuditEvent>) {
        let mut inner = self.lock();
        for event in events {
            let record = AuditRecord {
                seq: inner.next_seq,
                ts: self.clock.now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
                phase: event.phase,
                attempt: event.attempt,
                kind: event.kind,
                data: event.data,
            };
            inner.next_seq += 1;
            if let Some(writer) = inner.writer.as_mut() {
                let line = serde_json::to_string(&record).expect("audit records serialize");
                let res = writeln!(writer, "{line}").and_then(|_| writer.flush());
                if let Err(e) = res {
                    tracing::error!(error = %e, "failed to write audit record");
                    inner.write_error.get_or_insert_with(|| e.to_string());
                }
            }
            inner.records.push(record);
        }
    }

    pub fn records(&self) -> Vec<AuditRecord> {
        self.lock().records.clone()
    }

    /// First write failure, if any record could not be persisted.
    pub fn write_error(&self) -> Option<String> {
        self.lock().write_error.clone()
    }
}

impl EventSink for AuditLog {
    fn emit(&self, event: AuditEvent) {
        self.commit([event]);
    }
}

/// Serializes records the way the file writer does, one per line.
pub fn to_jsonl(records: &[AuditRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("audit records serialize"));
        out.push('\n');
    }
    out
}
