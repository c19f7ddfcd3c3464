use std::path::Path;
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    NodeOpened,
    CallProposed,
    CallExecuted,
    Evaluated,
    FeedbackRecorded,
    Backtracked,
    Terminated,
    Warning,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::NodeOpened => "node-opened",
            EventKind::CallProposed => "call-proposed",
            EventKind::CallExecuted => "call-executed",
            EventKind::Evaluated => "evaluated",
            EventKind::FeedbackRecorded => "feedback-recorded",
            EventKind::Backtracked => "backtracked",
            EventKind::Terminated => "terminated",
            EventKind::Warning => "warning",
        }
    }
}

/// One line of the trace file. The timestamp stays in memory only, so trace
/// files of identical runs are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub event: EventKind,
    pub node: Option<u64>,
    pub detail: Value,
    #[serde(skip)]
    pub at: Option<SystemTime>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    events: Vec<TraceEvent>,
}

impl RunTrace {
    pub fn push(&mut self, event: EventKind, node: Option<u64>, detail: Value) -> u64 {
        let seq = self.events.len() as u64;
        self.events.push(TraceEvent {
            seq,
            event,
            node,
            detail,
            at: Some(SystemTime::now()),
        });
        seq
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.event == kind)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.of_kind(kind).count()
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_ndjson(text: &str) -> Result<Self, serde_json::Error> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(RunTrace { events })
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_ndjson())
    }
}
