//! Structured event log shared by the coordinator and workers.
//!
//! One tab-separated line per state transition:
//!
//! ```text
//! <timestamp_ms>\t<task_id>\t<old_state>\t<event>\t<new_state>
//! ```
//!
//! Two extra line shapes use the same five columns: attempt resets (a
//! record-level restart after kill or worker loss, not a state-machine
//! transition) log the literal event `attempt_reset`, and free-form notes
//! log `-` states with the note text in the event column.

use std::fmt::Write as _;

use thiserror::Error;

use crate::state::{apply_transition, TaskState, TransitionEvent};

/// The literal event name logged for attempt resets.
pub const ATTEMPT_RESET: &str = "attempt_reset";

#[derive(Debug, Clone, PartialEq)]
pub enum LogEntry {
    Transition {
        ts_ms: u64,
        task_id: String,
        from: TaskState,
        event: TransitionEvent,
        to: TaskState,
    },
    /// Record-level restart: a terminal (or orphaned-suspended) attempt was
    /// replaced by a fresh `Pending` attempt.
    AttemptReset {
        ts_ms: u64,
        task_id: String,
        from: TaskState,
    },
    Note {
        ts_ms: u64,
        task_id: String,
        text: String,
    },
}

impl LogEntry {
    pub fn ts_ms(&self) -> u64 {
        match self {
            LogEntry::Transition { ts_ms, .. }
            | LogEntry::AttemptReset { ts_ms, .. }
            | LogEntry::Note { ts_ms, .. } => *ts_ms,
        }
    }

    pub fn task_id(&self) -> &str {
        match self {
            LogEntry::Transition { task_id, .. }
            | LogEntry::AttemptReset { task_id, .. }
            | LogEntry::Note { task_id, .. } => task_id,
        }
    }

    pub fn format_line(&self) -> String {
        let mut s = String::new();
        match self {
            LogEntry::Transition {
                ts_ms,
                task_id,
                from,
                event,
                to,
            } => {
                write!(s, "{ts_ms}\t{task_id}\t{from}\t{event}\t{to}").unwrap();
            }
            LogEntry::AttemptReset { ts_ms, task_id, from } => {
                write!(s, "{ts_ms}\t{task_id}\t{from}\t{ATTEMPT_RESET}\tPENDING").unwrap();
            }
            LogEntry::Note { ts_ms, task_id, text } => {
                write!(s, "{ts_ms}\t{task_id}\t-\tnote:{text}\t-").unwrap();
            }
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum LogParseError {
    #[error("line {line}: expected 5 tab-separated fields, got {got}")]
    FieldCount { line: usize, got: usize },
    #[error("line {line}: bad field {field}: {value:?}")]
    BadField {
        line: usize,
        field: &'static str,
        value: String,
    },
}

/// Parses a full log file. Blank lines are skipped.
pub fn parse_log(text: &str) -> Result<Vec<LogEntry>, LogParseError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 5 {
            return Err(LogParseError::FieldCount {
                line: line_no,
                got: fields.len(),
            });
        }
        let ts_ms: u64 = fields[0].parse().map_err(|_| LogParseError::BadField {
            line: line_no,
            field: "timestamp",
            value: fields[0].into(),
        })?;
        let task_id = fields[1].to_string();
        if let Some(text) = fields[3].strip_prefix("note:") {
            entries.push(LogEntry::Note {
                ts_ms,
                task_id,
                text: text.to_string(),
            });
            continue;
        }
        let from = TaskState::parse(fields[2]).ok_or_else(|| LogParseError::BadField {
            line: line_no,
            field: "old_state",
            value: fields[2].into(),
        })?;
        if fields[3] == ATTEMPT_RESET {
            entries.push(LogEntry::AttemptReset { ts_ms, task_id, from });
            continue;
        }
        let event = TransitionEvent::parse(fields[3]).ok_or_else(|| LogParseError::BadField {
            line: line_no,
            field: "event",
            value: fields[3].into(),
        })?;
        let to = TaskState::parse(fields[4]).ok_or_else(|| LogParseError::BadField {
            line: line_no,
            field: "new_state",
            value: fields[4].into(),
        })?;
        entries.push(LogEntry::Transition {
            ts_ms,
            task_id,
            from,
            event,
            to,
        });
    }
    Ok(entries)
}

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("task {task_id}: transition {from}+{event} not in table")]
    IllegalEdge {
        task_id: String,
        from: TaskState,
        event: TransitionEvent,
    },
    #[error("task {task_id}: logged successor {logged} but table says {expected}")]
    WrongSuccessor {
        task_id: String,
        logged: TaskState,
        expected: TaskState,
    },
    #[error("task {task_id}: transition from {from} but previous state was {prev}")]
    Discontinuity {
        task_id: String,
        from: TaskState,
        prev: TaskState,
    },
    #[error("task {task_id}: attempt reset from non-resettable state {from}")]
    BadReset { task_id: String, from: TaskState },
}

/// Replays a log against the transition table: every logged transition must
/// be a legal table edge, chain continuously per task, and record the
/// table's successor. Attempt resets may only leave terminal or suspended
/// states.
pub fn validate_trace(entries: &[LogEntry]) -> Result<(), TraceError> {
    use std::collections::HashMap;
    let mut current: HashMap<&str, TaskState> = HashMap::new();
    for e in entries {
        match e {
            LogEntry::Note { .. } => {}
            LogEntry::AttemptReset { task_id, from, .. } => {
                if let Some(prev) = current.get(task_id.as_str()) {
                    if prev != from {
                        return Err(TraceError::Discontinuity {
                            task_id: task_id.clone(),
                            from: *from,
                            prev: *prev,
                        });
                    }
                }
                if !(from.is_terminal() || *from == TaskState::Suspended) {
                    return Err(TraceError::BadReset {
                        task_id: task_id.clone(),
                        from: *from,
                    });
                }
                current.insert(task_id, TaskState::Pending);
            }
            LogEntry::Transition {
                task_id,
                from,
                event,
                to,
                ..
            } => {
                if let Some(prev) = current.get(task_id.as_str()) {
                    if prev != from {
                        return Err(TraceError::Discontinuity {
                            task_id: task_id.clone(),
                            from: *from,
                            prev: *prev,
                        });
                    }
                }
                let expected =
                    apply_transition(*from, *event).map_err(|_| TraceError::IllegalEdge {
                        task_id: task_id.clone(),
                        from: *from,
                        event: *event,
                    })?;
                if expected != *to {
                    return Err(TraceError::WrongSuccessor {
                        task_id: task_id.clone(),
                        logged: *to,
                        expected,
                    });
                }
                current.insert(task_id, *to);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_round_trip() {
        let entries = vec![
            LogEntry::Transition {
                ts_ms: 10,
                task_id: "t1".into(),
                from: TaskState::Pending,
                event: TransitionEvent::Launch,
                to: TaskState::Launching,
            },
            LogEntry::AttemptReset {
                ts_ms: 20,
                task_id: "t1".into(),
                from: TaskState::Killed,
            },
            LogEntry::Note {
                ts_ms: 30,
                task_id: "t1".into(),
                text: "summary tuples=4096 checksum=ok".into(),
            },
        ];
        let text: String = entries
            .iter()
            .map(|e| e.format_line() + "\n")
            .collect();
        let parsed = parse_log(&text).unwrap();
        assert_eq!(parsed, entries);
    }

    #[test]
    fn validator_accepts_a_legal_suspend_trace() {
        let text = "\
0\tt1\tPENDING\tlaunch\tLAUNCHING
1\tt1\tLAUNCHING\tlaunched\tRUNNING
2\tt1\tRUNNING\tscheduler_suspend\tMUST_SUSPEND
3\tt1\tMUST_SUSPEND\tcommand_sent\tSUSPENDING_SENT
4\tt1\tSUSPENDING_SENT\tworker_confirmed_suspended\tSUSPENDED
";
        let entries = parse_log(text).unwrap();
        validate_trace(&entries).unwrap();
    }

    #[test]
    fn validator_rejects_an_illegal_edge() {
        let text = "0\tt1\tSUSPENDED\tworker_reported_success\tSUCCEEDED\n";
        let entries = parse_log(text).unwrap();
        assert!(matches!(
            validate_trace(&entries),
            Err(TraceError::IllegalEdge { .. })
        ));
    }

    #[test]
    fn validator_rejects_a_discontinuous_chain() {
        let text = "\
0\tt1\tPENDING\tlaunch\tLAUNCHING
1\tt1\tRUNNING\tscheduler_suspend\tMUST_SUSPEND
";
        let entries = parse_log(text).unwrap();
        assert!(matches!(
            validate_trace(&entries),
            Err(TraceError::Discontinuity { .. })
        ));
    }
}
