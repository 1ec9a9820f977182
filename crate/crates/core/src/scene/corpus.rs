//! Line-delimited corpus files: one scene (with its labeled samples) per
//! line, UTF-8, preceded by a single header line echoing the generating
//! configuration so any corpus is re-derivable from its own header.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GoldSample, SceneGraph};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus i/o error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("corpus {path} line {line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
}

/// First line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusHeader {
    pub file_kind: String,
    pub pipeline_version: String,
    /// Resolved generating configuration, free-form.
    pub config: serde_json::Value,
}

impl CorpusHeader {
    pub fn new(config: serde_json::Value) -> Self {
        Self {
            file_kind: "scene_corpus".to_string(),
            pipeline_version: crate::PIPELINE_VERSION.to_string(),
            config,
        }
    }
}

/// One corpus line: a scene plus the labeled samples asked about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub scene: SceneGraph,
    pub samples: Vec<GoldSample>,
}

pub fn write_corpus(
    path: &Path,
    header: &CorpusHeader,
    entries: &[CorpusEntry],
) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    let mut write_line = |value: String| -> Result<(), CorpusError> {
        out.write_all(value.as_bytes()).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)
    };
    write_line(serde_json::to_string(header).expect("header serializes"))?;
    for entry in entries {
        write_line(serde_json::to_string(entry).expect("corpus entry serializes"))?;
    }
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<(CorpusHeader, Vec<CorpusEntry>), CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut header = None;
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if idx == 0 {
            header = Some(serde_json::from_str::<CorpusHeader>(&line).map_err(|e| {
                CorpusError::Malformed {
                    path: path.display().to_string(),
                    line: 1,
                    message: format!("bad header: {e}"),
                }
            })?);
            continue;
        }
        let entry: CorpusEntry =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                path: path.display().to_string(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        entry
            .scene
            .validate()
            .map_err(|e| CorpusError::Malformed {
                path: path.display().to_string(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        entries.push(entry);
    }
    let header = header.ok_or_else(|| CorpusError::Malformed {
        path: path.display().to_string(),
        line: 1,
        message: "missing corpus header".to_string(),
    })?;
    Ok((header, entries))
}
