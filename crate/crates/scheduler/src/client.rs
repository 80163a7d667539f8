//! Blocking clients for the coordinator's control API and event stream.

use std::net::TcpStream;
use std::time::Duration;

use preempt_protocol::{
    read_message, write_message, CodecError, Message, PreemptPrimitive, Priority, StateEvent,
    TaskId, TaskLaunchDescriptor, TaskRecord, WorkerId, WorkerRecord,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("protocol error: {0}")]
    Codec(#[from] CodecError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("coordinator error {code}: {message}")]
    Coordinator { code: String, message: String },
    #[error("unexpected reply: {0}")]
    UnexpectedReply(String),
}

impl ClientError {
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Coordinator { code, .. } => Some(code),
            _ => None,
        }
    }
}

pub struct ControlClient {
    stream: TcpStream,
}

impl ControlClient {
    pub fn connect(addr: &str) -> Result<ControlClient, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(ControlClient { stream })
    }

    fn call(&mut self, msg: &Message) -> Result<Message, ClientError> {
        write_message(&mut self.stream, msg)?;
        let reply = read_message(&mut self.stream)?;
        if let Message::Error { code, message } = reply {
            return Err(ClientError::Coordinator { code, message });
        }
        Ok(reply)
    }

    pub fn submit(
        &mut self,
        descriptor: TaskLaunchDescriptor,
        priority: Priority,
        target_worker: Option<WorkerId>,
    ) -> Result<TaskId, ClientError> {
        match self.call(&Message::SubmitTask {
            descriptor,
            priority,
            target_worker,
        })? {
            Message::SubmitOk { task_id } => Ok(task_id),
            other => Err(ClientError::UnexpectedReply(format!("{other:?}"))),
        }
    }

    pub fn request_preemption(
        &mut self,
        task_id: &TaskId,
        primitive: PreemptPrimitive,
    ) -> Result<(), ClientError> {
        match self.call(&Message::RequestPreemption {
            task_id: task_id.clone(),
            primitive,
        })? {
            Message::Ack => Ok(()),
            other => Err(ClientError::UnexpectedReply(format!("{other:?}"))),
        }
    }

    pub fn request_resume(&mut self, task_id: &TaskId) -> Result<(), ClientError> {
        match self.call(&Message::RequestResume {
            task_id: task_id.clone(),
        })? {
            Message::Ack => Ok(()),
            other => Err(ClientError::UnexpectedReply(format!("{other:?}"))),
        }
    }

    pub fn restart_task(&mut self, task_id: &TaskId) -> Result<(), ClientError> {
        match self.call(&Message::RestartTask {
            task_id: task_id.clone(),
        })? {
            Message::Ack => Ok(()),
            other => Err(ClientError::UnexpectedReply(format!("{other:?}"))),
        }
    }

    pub fn snapshot(&mut self) -> Result<(Vec<TaskRecord>, Vec<WorkerRecord>), ClientError> {
        match self.call(&Message::SnapshotRequest)? {
            Message::Snapshot { tasks, workers } => Ok((tasks, workers)),
            other => Err(ClientError::UnexpectedReply(format!("{other:?}"))),
        }
    }

    pub fn shutdown(&mut self) -> Result<(), ClientError> {
        match self.call(&Message::Shutdown)? {
            Message::Ack => Ok(()),
            other => Err(ClientError::UnexpectedReply(format!("{other:?}"))),
        }
    }
}

/// Push stream of coordinator state events.
pub struct EventStream {
    stream: TcpStream,
}

impl EventStream {
    pub fn connect(addr: &str) -> Result<EventStream, ClientError> {
        let mut stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        write_message(&mut stream, &Message::Subscribe)?;
        match read_message(&mut stream)? {
            Message::Ack => Ok(EventStream { stream }),
            other => Err(ClientError::UnexpectedReply(format!("{other:?}"))),
        }
    }

    /// Next event, or `None` if `timeout` elapses first.
    pub fn next_event(&mut self, timeout: Duration) -> Result<Option<StateEvent>, ClientError> {
        self.stream.set_read_timeout(Some(timeout))?;
        match read_message(&mut self.stream) {
            Ok(Message::Event(ev)) => Ok(Some(ev)),
            Ok(other) => Err(ClientError::UnexpectedReply(format!("{other:?}"))),
            Err(CodecError::Io(e))
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }
}
