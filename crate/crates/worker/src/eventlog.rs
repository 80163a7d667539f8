//! Worker-side event log: observed-state transitions and note lines in the
//! same tab-separated format the coordinator writes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use preempt_protocol::eventlog::LogEntry;
use preempt_protocol::{ObservedState, TaskId, TaskState, TransitionEvent};

pub fn observed_as_state(o: ObservedState) -> TaskState {
    match o {
        ObservedState::Running => TaskState::Running,
        ObservedState::Suspended => TaskState::Suspended,
        ObservedState::Succeeded => TaskState::Succeeded,
        ObservedState::Failed => TaskState::Failed,
        ObservedState::Killed => TaskState::Killed,
    }
}

pub struct EventLogFile {
    writer: Mutex<BufWriter<File>>,
    start: Instant,
}

impl EventLogFile {
    pub fn create(path: &Path) -> std::io::Result<EventLogFile> {
        Ok(EventLogFile {
            writer: Mutex::new(BufWriter::new(File::create(path)?)),
            start: Instant::now(),
        })
    }

    pub fn now_ms(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }

    fn write(&self, entry: &LogEntry) {
        let mut w = self.writer.lock().unwrap();
        let _ = writeln!(w, "{}", entry.format_line());
        let _ = w.flush();
    }

    pub fn transition(
        &self,
        task_id: &TaskId,
        from: TaskState,
        event: TransitionEvent,
        to: TaskState,
    ) {
        self.write(&LogEntry::Transition {
            ts_ms: self.now_ms(),
            task_id: task_id.0.clone(),
            from,
            event,
            to,
        });
    }

    pub fn note(&self, task_id: &str, text: &str) {
        self.write(&LogEntry::Note {
            ts_ms: self.now_ms(),
            task_id: task_id.to_string(),
            text: text.to_string(),
        });
    }
}
