//! Reading and writing pipeline artifacts.
//!
//! Line-delimited artifacts start with one header object naming the format,
//! its version and the configuration that produced the file. All writes go
//! through a temporary file in the target directory followed by a rename.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: expected format {expected:?} version {FORMAT_VERSION}, found {found:?}")]
    Format {
        path: PathBuf,
        expected: String,
        found: String,
    },
}

impl ArtifactError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl ArtifactHeader {
    pub fn new(format: &str, config: serde_json::Value) -> Self {
        Self {
            format: format.to_string(),
            version: FORMAT_VERSION,
            config,
        }
    }
}

/// Replaces `path` with `bytes` atomically.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| ArtifactError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| ArtifactError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| ArtifactError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| ArtifactError::io(path, e))?;
    tmp.persist(path).map_err(|e| ArtifactError::io(path, e.error))?;
    Ok(())
}

pub fn to_jsonl<T: Serialize>(header: &ArtifactHeader, items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    serde_json::to_writer(&mut out, header).expect("header serializes");
    out.push(b'\n');
    for item in items {
        serde_json::to_writer(&mut out, item).expect("record serializes");
        out.push(b'\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, header: &ArtifactHeader, items: &[T]) -> Result<(), ArtifactError> {
    atomic_write(path, &to_jsonl(header, items))
}

/// Reads a line-delimited artifact whose header names `format`.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path, format: &str) -> Result<(ArtifactHeader, Vec<T>), ArtifactError> {
    let file = File::open(path).map_err(|e| ArtifactError::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let parse_err = |line: usize, message: String| ArtifactError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header: ArtifactHeader = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| ArtifactError::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| parse_err(1, format!("bad header: {e}")))?
        }
        None => return Err(parse_err(1, "empty file".into())),
    };
    if header.format != format || header.version != FORMAT_VERSION {
        return Err(ArtifactError::Format {
            path: path.to_path_buf(),
            expected: format.to_string(),
            found: format!("{} v{}", header.format, header.version),
        });
    }
    let mut items = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| ArtifactError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?);
    }
    Ok((header, items))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let bytes = fs::read(path).map_err(|e| ArtifactError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| ArtifactError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_format_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/items.jsonl");
        let header = ArtifactHeader::new("test.items", serde_json::json!({"seed": 3}));
        write_jsonl(&path, &header, &[1u32, 2, 3]).unwrap();
        let (h, items): (_, Vec<u32>) = read_jsonl(&path, "test.items").unwrap();
        assert_eq!(h, header);
        assert_eq!(items, [1, 2, 3]);
        let err = read_jsonl::<u32>(&path, "other").unwrap_err();
        assert!(matches!(err, ArtifactError::Format { .. }));
        // no temp files left behind
        assert_eq!(fs::read_dir(dir.path().join("sub")).unwrap().count(), 1);
    }
}
