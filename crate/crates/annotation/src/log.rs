//! Append-only jsonl event log; session state is rebuilt by replaying it.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{AnnotationError, Result};
use crate::model::{AnnotationScore, ReviewRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Score(AnnotationScore),
    Review(ReviewRecord),
}

pub struct EventLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl EventLog {
    /// Opens the log and returns every event in it. A damaged final line
    /// (an interrupted write) is dropped from the file.
    pub fn open(path: impl Into<PathBuf>) -> Result<(Self, Vec<Event>)> {
        let path = path.into();
        let mut bytes = Vec::new();
        if path.exists() {
            File::open(&path)?.read_to_end(&mut bytes)?;
        }
        let mut events = Vec::new();
        let mut offset = 0usize;
        let mut line_no = 0usize;
        while offset < bytes.len() {
            line_no += 1;
            let end = bytes[offset..].iter().position(|b| *b == b'\n').map(|i| offset + i);
            let line_end = end.unwrap_or(bytes.len());
            let parsed = std::str::from_utf8(&bytes[offset..line_end])
                .ok()
                .filter(|s| !s.trim().is_empty())
                .map(serde_json::from_str::<Event>);
            match (parsed, end) {
                (None, Some(e)) => offset = e + 1,
                (Some(Ok(ev)), Some(e)) => {
                    events.push(ev);
                    offset = e + 1;
                }
                (_, None) => {
                    warn!(path = %path.display(), line = line_no, "dropping incomplete trailing event");
                    OpenOptions::new().write(true).open(&path)?.set_len(offset as u64)?;
                    break;
                }
                (Some(Err(err)), Some(_)) => {
                    return Err(AnnotationError::CorruptLog {
                        line: line_no,
                        message: err.to_string(),
                    })
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok((
            Self {
                path,
                file: Mutex::new(file),
            },
            events,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, event: &Event) -> Result<()> {
        let mut line = serde_json::to_vec(event).map_err(std::io::Error::other)?;
        line.push(b'\n');
        let mut file = self.file.lock().expect("event log lock poisoned");
        file.write_all(&line)?;
        file.sync_data()?;
        Ok(())
    }
}
