//! Line-delimited JSON helpers shared by every store in the pipeline.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for LineError {}

pub fn read<T: DeserializeOwned, R: Read>(r: R) -> Result<Vec<T>, LineError> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(r).lines().enumerate() {
        let line = line.map_err(|e| LineError {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| LineError {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_path<T: DeserializeOwned>(path: &Path) -> std::io::Result<Vec<T>> {
    let f = File::open(path)?;
    read(f).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))
}

/// Like [`read_path`] but a missing file reads as empty.
pub fn read_path_or_empty<T: DeserializeOwned>(path: &Path) -> std::io::Result<Vec<T>> {
    if path.exists() {
        read_path(path)
    } else {
        Ok(Vec::new())
    }
}

pub fn write<T: Serialize, W: Write>(mut w: W, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_path<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    write(BufWriter::new(File::create(path)?), items)
}

/// Appends one record and flushes, so a crash never leaves a partial line.
pub fn append<T: Serialize>(file: &mut File, item: &T) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(item)?;
    line.push(b'\n');
    file.write_all(&line)?;
    file.flush()
}

pub fn open_append(path: &Path) -> std::io::Result<File> {
    OpenOptions::new().create(true).append(true).open(path)
}
