//! JSONL and JSON helpers for the artifact files passed between pipeline stages.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut out: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Strict JSONL reader for artifacts this crate produced itself: any bad line is an error.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(input: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("line {}: {e}", i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl_file<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_jsonl(items, BufWriter::new(File::create(path)?))
}

pub fn read_jsonl_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_jsonl(BufReader::new(File::open(path)?))
}

/// Pretty JSON with a trailing newline. Field order follows struct order and
/// every map in the crate's artifacts is a `BTreeMap`, so output is byte-stable.
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}
