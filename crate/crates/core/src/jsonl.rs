//! JSON-lines helpers shared by the logs.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("io on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Reads every record. A final line without a trailing newline that fails
/// to parse is treated as a torn write and skipped; any other bad line is an
/// error.
pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    read_from(path, 0).map(|(v, _)| v)
}

/// Like [`read`], starting at byte `offset`. Also returns the byte length of
/// the well-formed prefix, so appends can resume after a torn tail.
pub fn read_from<T: DeserializeOwned>(path: &Path, offset: u64) -> Result<(Vec<T>, u64), JsonlError> {
    let io_err = |source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(io_err(e)),
    };
    let mut reader = BufReader::new(file);
    io::Seek::seek(&mut reader, io::SeekFrom::Start(offset)).map_err(io_err)?;
    let mut out = Vec::new();
    let mut good = offset;
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(io_err)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.ends_with('\n');
        let trimmed = buf.trim();
        if trimmed.is_empty() {
            good += n as u64;
            continue;
        }
        match serde_json::from_str(trimmed) {
            Ok(v) if complete => {
                out.push(v);
                good += n as u64;
            }
            Ok(_) | Err(_) if !complete => break,
            Ok(_) => unreachable!(),
            Err(source) => {
                return Err(JsonlError::Parse {
                    path: path.display().to_string(),
                    line: line_no,
                    source,
                })
            }
        }
    }
    Ok((out, good))
}

/// Serializes one record per line.
pub fn to_string<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable record"));
        out.push('\n');
    }
    out
}

pub fn write_all<T: Serialize>(path: &Path, items: &[T]) -> io::Result<()> {
    std::fs::write(path, to_string(items))
}

/// Append-only handle. Each record is written with a single `write_all` and
/// flushed before returning.
#[derive(Debug)]
pub struct Appender {
    file: File,
}

impl Appender {
    /// Opens `path` for appending, first truncating any torn tail beyond
    /// `valid_len` bytes.
    pub fn open(path: &Path, valid_len: Option<u64>) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        if let Some(len) = valid_len {
            if file.metadata()?.len() > len {
                OpenOptions::new().write(true).open(path)?.set_len(len)?;
            }
        }
        Ok(Appender { file })
    }

    pub fn append<T: Serialize>(&mut self, item: &T) -> io::Result<u64> {
        let mut line = serde_json::to_vec(item).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        self.file.metadata().map(|m| m.len())
    }
}
