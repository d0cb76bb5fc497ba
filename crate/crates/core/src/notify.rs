//! Terminal-state notifications fanned out to configured sinks.
//!
//! One notification per file reaching a terminal state: success with counts,
//! duplicate, or failure with the reason. Sinks are best-effort: a failing
//! sink is reported back but never fails the pipeline. The line format is
//! stable and parses back to an equal notification:
//!
//! ```text
//! event=SUCCESS sr=1 file=tbl_Circuits.csv detail="rows=7958 cols=12" at=2009-02-11T09:30:00Z
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, SecondsFormat, Timelike, Utc};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NotifyEvent {
    Success,
    Duplicate,
    Failure,
}

impl std::fmt::Display for NotifyEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NotifyEvent::Success => f.write_str("SUCCESS"),
            NotifyEvent::Duplicate => f.write_str("DUPLICATE"),
            NotifyEvent::Failure => f.write_str("FAILURE"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Notification {
    pub event: NotifyEvent,
    pub sr_num: u64,
    pub fil_name: String,
    pub detail: String,
    /// Whole-second precision so the serialized form round-trips exactly.
    pub emitted_at: DateTime<Utc>,
}

impl Notification {
    pub fn new(event: NotifyEvent, sr_num: u64, fil_name: &str, detail: String) -> Self {
        let now = Utc::now();
        Notification {
            event,
            sr_num,
            fil_name: fil_name.to_string(),
            detail,
            emitted_at: now.with_nanosecond(0).unwrap_or(now),
        }
    }

    pub fn success(sr_num: u64, fil_name: &str, rows: u64, cols: u32) -> Self {
        Self::new(
            NotifyEvent::Success,
            sr_num,
            fil_name,
            format!("rows={rows} cols={cols}"),
        )
    }

    pub fn duplicate(sr_num: u64, fil_name: &str, detail: String) -> Self {
        Self::new(NotifyEvent::Duplicate, sr_num, fil_name, detail)
    }

    pub fn failure(sr_num: u64, fil_name: &str, detail: String) -> Self {
        Self::new(NotifyEvent::Failure, sr_num, fil_name, detail)
    }

    /// Serializes to the stable single-line format.
    pub fn to_line(&self) -> String {
        format!(
            "event={} sr={} file={} detail=\"{}\" at={}",
            self.event,
            self.sr_num,
            self.fil_name,
            escape_detail(&self.detail),
            self.emitted_at.to_rfc3339_opts(SecondsFormat::Secs, true),
        )
    }

    /// Parses a line produced by [`Notification::to_line`].
    pub fn parse_line(line: &str) -> Result<Self, NotifyParseError> {
        let rest = line
            .strip_prefix("event=")
            .ok_or(NotifyParseError::Malformed("missing event"))?;
        let (event_text, rest) = rest
            .split_once(" sr=")
            .ok_or(NotifyParseError::Malformed("missing sr"))?;
        let event = match event_text {
            "SUCCESS" => NotifyEvent::Success,
            "DUPLICATE" => NotifyEvent::Duplicate,
            "FAILURE" => NotifyEvent::Failure,
            _ => return Err(NotifyParseError::Malformed("unknown event")),
        };
        let (sr_text, rest) = rest
            .split_once(" file=")
            .ok_or(NotifyParseError::Malformed("missing file"))?;
        let sr_num = sr_text
            .parse()
            .map_err(|_| NotifyParseError::Malformed("bad serial"))?;
        let (fil_name, rest) = rest
            .split_once(" detail=\"")
            .ok_or(NotifyParseError::Malformed("missing detail"))?;
        let (detail, rest) = take_quoted(rest)?;
        let at_text = rest
            .strip_prefix(" at=")
            .ok_or(NotifyParseError::Malformed("missing timestamp"))?;
        let emitted_at = DateTime::parse_from_rfc3339(at_text)
            .map_err(|_| NotifyParseError::Malformed("bad timestamp"))?
            .with_timezone(&Utc);
        Ok(Notification {
            event,
            sr_num,
            fil_name: fil_name.to_string(),
            detail,
            emitted_at,
        })
    }
}

fn escape_detail(detail: &str) -> String {
    let mut out = String::with_capacity(detail.len());
    for ch in detail.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out
}

/// Consumes the escaped detail text up to its closing quote, returning the
/// decoded detail and the remainder after the quote.
fn take_quoted(input: &str) -> Result<(String, &str), NotifyParseError> {
    let mut out = String::new();
    let mut chars = input.char_indices();
    while let Some((i, ch)) = chars.next() {
        match ch {
            '"' => return Ok((out, &input[i + 1..])),
            '\\' => match chars.next() {
                Some((_, '\\')) => out.push('\\'),
                Some((_, '"')) => out.push('"'),
                Some((_, 'n')) => out.push('\n'),
                Some((_, 'r')) => out.push('\r'),
                _ => return Err(NotifyParseError::Malformed("bad escape")),
            },
            other => out.push(other),
        }
    }
    Err(NotifyParseError::Malformed("unterminated detail"))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NotifyParseError {
    #[error("malformed notification line: {0}")]
    Malformed(&'static str),
}

/// A notification transport. Implementations must tolerate concurrent
/// callers.
pub trait Sink: Send + Sync {
    fn name(&self) -> String;
    fn deliver(&self, line: &str) -> std::io::Result<()>;
}

/// Appends one line per notification to a file.
pub struct FileSink {
    path: PathBuf,
    guard: Mutex<()>,
}

impl FileSink {
    pub fn new(path: &Path) -> Self {
        FileSink {
            path: path.to_path_buf(),
            guard: Mutex::new(()),
        }
    }
}

impl Sink for FileSink {
    fn name(&self) -> String {
        format!("file:{}", self.path.display())
    }

    fn deliver(&self, line: &str) -> std::io::Result<()> {
        let _serialized = self.guard.lock().expect("file sink lock");
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
        file.sync_data()
    }
}

/// Pipes each notification line to an external command's standard input.
/// This is the hook for attaching a real mailer.
pub struct CommandSink {
    command: String,
}

impl CommandSink {
    pub fn new(command: &str) -> Self {
        CommandSink {
            command: command.to_string(),
        }
    }
}

impl Sink for CommandSink {
    fn name(&self) -> String {
        format!("command:{}", self.command)
    }

    fn deliver(&self, line: &str) -> std::io::Result<()> {
        use std::process::{Command, Stdio};
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()?;
        if let Some(stdin) = child.stdin.as_mut() {
            stdin.write_all(line.as_bytes())?;
            stdin.write_all(b"\n")?;
        }
        drop(child.stdin.take());
        let status = child.wait()?;
        if status.success() {
            Ok(())
        } else {
            Err(std::io::Error::other(format!(
                "notification command exited with {status}"
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct SinkOutcome {
    pub sink: String,
    pub result: Result<(), String>,
}

#[derive(Debug, Clone, Default)]
pub struct DeliveryReport {
    pub outcomes: Vec<SinkOutcome>,
}

impl DeliveryReport {
    pub fn failures(&self) -> impl Iterator<Item = &SinkOutcome> {
        self.outcomes.iter().filter(|o| o.result.is_err())
    }
}

/// Delivers one notification to every sink. Sink failures are collected in
/// the report, never raised; zero sinks is a successful no-op.
pub fn notify(notification: &Notification, sinks: &[Box<dyn Sink>]) -> DeliveryReport {
    let line = notification.to_line();
    let outcomes = sinks
        .iter()
        .map(|sink| SinkOutcome {
            sink: sink.name(),
            result: sink.deliver(&line).map_err(|e| e.to_string()),
        })
        .collect();
    DeliveryReport { outcomes }
}
