//! Training-record emission and JSONL serialization.
//!
//! Each filtered sample yields one short-answer record and, when a
//! program was selected, one rationale record; the two optimization
//! targets stay separate so a downstream trainer summing per-record
//! length-normalized cross-entropy recovers the combined objective.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cot::Rationale;
use crate::filter::{FilterOutcome, FilterStatus};
use crate::scene::TaskKind;

/// Task instruction for free-form (and counting) questions.
pub const FREEFORM_INSTRUCTION: &str = "Answer with a single word or phrase";
/// Task instruction for multiple-choice questions.
pub const MULTI_CHOICE_INSTRUCTION: &str =
    "Answer with the option letter from the given choices directly";
/// Suffix selecting rationale output instead of a short answer.
pub const RATIONALE_SUFFIX: &str = "Explain the rationale to answer the question";

/// The task instruction used for label records.
pub fn task_instruction(task: TaskKind) -> &'static str {
    match task {
        TaskKind::MultipleChoice => MULTI_CHOICE_INSTRUCTION,
        TaskKind::VqaFreeform | TaskKind::Counting => FREEFORM_INSTRUCTION,
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
    #[error("sample {sample_id}: outcome {status} requires a rationale but none was provided")]
    RationaleMissing { sample_id: String, status: String },
}

/// Which optimization target a record carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Label,
    Rationale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program_hash: Option<String>,
    pub trace_len: u32,
    pub filter_status: String,
    pub pipeline_version: String,
    pub global_seed: u64,
}

/// One JSONL line of training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub id: String,
    /// Scene id or image file path.
    pub image_ref: String,
    pub query: String,
    pub task: TaskKind,
    pub instruction: String,
    pub target: String,
    pub objective: Objective,
    pub meta: RecordMeta,
    /// Unknown fields: rejected in strict mode, preserved in lenient mode.
    #[serde(flatten, default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

/// Identity of one pipeline sample, for record construction.
#[derive(Debug, Clone)]
pub struct SampleIdentity<'a> {
    pub sample_id: &'a str,
    pub image_ref: &'a str,
    pub query_text: &'a str,
    pub task: TaskKind,
    pub global_seed: u64,
}

/// Build the records for one filtered sample: two for a selected program
/// (label + rationale), one label-only record for the fallback, none when
/// generation failed on an unlabeled sample.
pub fn emit_records(
    sample: &SampleIdentity<'_>,
    outcome: &FilterOutcome,
    rationale: Option<&Rationale>,
) -> Result<Vec<TrainingRecord>, DatasetError> {
    let meta = |program_hash: Option<String>, trace_len: u32| RecordMeta {
        program_hash,
        trace_len,
        filter_status: outcome.status.name().to_string(),
        pipeline_version: crate::PIPELINE_VERSION.to_string(),
        global_seed: sample.global_seed,
    };
    let record = |objective: Objective, instruction: &str, target: &str, meta: RecordMeta| {
        let suffix = match objective {
            Objective::Label => "label",
            Objective::Rationale => "rationale",
        };
        TrainingRecord {
            id: format!("{}#{suffix}", sample.sample_id),
            image_ref: sample.image_ref.to_string(),
            query: sample.query_text.to_string(),
            task: sample.task,
            instruction: instruction.to_string(),
            target: target.to_string(),
            objective,
            meta,
            extra: serde_json::Map::new(),
        }
    };

    match &outcome.status {
        FilterStatus::SelectedProgram {
            program_hash,
            answer,
            trace,
            ..
        }
        | FilterStatus::UnlabeledTop {
            program_hash,
            answer,
            trace,
        } => {
            let rationale = rationale.ok_or_else(|| DatasetError::RationaleMissing {
                sample_id: sample.sample_id.to_string(),
                status: outcome.status.name().to_string(),
            })?;
            debug_assert!(!answer.is_empty() && !rationale.text.is_empty());
            let trace_len = trace.entries.len() as u32;
            Ok(vec![
                record(
                    Objective::Label,
                    task_instruction(sample.task),
                    answer,
                    meta(Some(program_hash.clone()), trace_len),
                ),
                record(
                    Objective::Rationale,
                    RATIONALE_SUFFIX,
                    &rationale.text,
                    meta(Some(program_hash.clone()), trace_len),
                ),
            ])
        }
        FilterStatus::LabelOnly { gold_answer } => Ok(vec![record(
            Objective::Label,
            task_instruction(sample.task),
            gold_answer,
            meta(None, 0),
        )]),
        FilterStatus::GenerationFailed => Ok(Vec::new()),
    }
}

// ── JSONL I/O ─────────────────────────────────────────────────────────

/// Optional first line of a records file, echoing the producing config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub file_kind: String,
    pub pipeline_version: String,
    pub config: serde_json::Value,
}

impl RunHeader {
    pub fn new(config: serde_json::Value) -> Self {
        Self {
            file_kind: "training_records".to_string(),
            pipeline_version: crate::PIPELINE_VERSION.to_string(),
            config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadMode {
    /// Unknown fields are errors.
    Strict,
    /// Unknown fields are preserved in `extra`.
    Lenient,
}

/// One record per line, UTF-8, stable field order. An empty list writes
/// an empty file.
pub fn write_jsonl(records: &[TrainingRecord], path: &Path) -> Result<(), DatasetError> {
    write_jsonl_impl(records, path, None)
}

/// Same as [`write_jsonl`] with a leading header line.
pub fn write_jsonl_with_header(
    records: &[TrainingRecord],
    path: &Path,
    header: &RunHeader,
) -> Result<(), DatasetError> {
    write_jsonl_impl(records, path, Some(header))
}

fn write_jsonl_impl(
    records: &[TrainingRecord],
    path: &Path,
    header: Option<&RunHeader>,
) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    if let Some(header) = header {
        let line = serde_json::to_string(header).expect("header serializes");
        out.write_all(line.as_bytes()).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    for record in records {
        let line = serde_json::to_string(record).expect("record serializes");
        out.write_all(line.as_bytes()).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Read records, skipping an optional leading header line.
pub fn read_jsonl(path: &Path, mode: ReadMode) -> Result<Vec<TrainingRecord>, DatasetError> {
    read_jsonl_with_header(path, mode).map(|(_, records)| records)
}

pub fn read_jsonl_with_header(
    path: &Path,
    mode: ReadMode,
) -> Result<(Option<RunHeader>, Vec<TrainingRecord>), DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut header = None;
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        // A header is an object without an "id"; only valid as line 1.
        if idx == 0 {
            let probe: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| DatasetError::Schema {
                    path: path.display().to_string(),
                    line: line_no,
                    message: e.to_string(),
                })?;
            if probe.get("id").is_none() {
                header = Some(serde_json::from_value(probe).map_err(|e| {
                    DatasetError::Schema {
                        path: path.display().to_string(),
                        line: line_no,
                        message: format!("bad header: {e}"),
                    }
                })?);
                continue;
            }
        }
        let record: TrainingRecord =
            serde_json::from_str(&line).map_err(|e| DatasetError::Schema {
                path: path.display().to_string(),
                line: line_no,
                message: e.to_string(),
            })?;
        if mode == ReadMode::Strict && !record.extra.is_empty() {
            let fields: Vec<&String> = record.extra.keys().collect();
            return Err(DatasetError::Schema {
                path: path.display().to_string(),
                line: line_no,
                message: format!("unknown fields {fields:?}"),
            });
        }
        records.push(record);
    }
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::FilterOutcome;
    use crate::interp::{ExecutionTrace, TraceOutcome};

    fn sample_identity(global_seed: u64) -> SampleIdentity<'static> {
        SampleIdentity {
            sample_id: "s_0001_q0",
            image_ref: "s_0001",
            query_text: "How many dogs are in the picture?",
            task: TaskKind::Counting,
            global_seed,
        }
    }

    fn empty_trace() -> ExecutionTrace {
        ExecutionTrace {
            entries: vec![],
            outcome: TraceOutcome::Returned {
                value: "2".to_string(),
            },
            step_budget_used: 5,
        }
    }

    fn selected_outcome() -> FilterOutcome {
        FilterOutcome {
            status: FilterStatus::SelectedProgram {
                candidate_rank: 2,
                program_hash: "00ff".to_string(),
                answer: "2".to_string(),
                trace: empty_trace(),
            },
            candidates_executed: 5,
            candidates_correct: 2,
        }
    }

    fn rationale() -> Rationale {
        Rationale {
            text: "Thus, the answer is 2.".to_string(),
            covered_steps: vec![],
            final_answer_span: (20, 21),
        }
    }

    #[test]
    fn selected_program_emits_label_and_rationale_records() {
        let records = emit_records(&sample_identity(7), &selected_outcome(), Some(&rationale()))
            .unwrap();
        assert_eq!(records.len(), 2);
        let label = &records[0];
        assert_eq!(label.objective, Objective::Label);
        assert_eq!(label.instruction, FREEFORM_INSTRUCTION);
        assert_eq!(label.target, "2");
        assert_eq!(label.meta.global_seed, 7);
        assert_eq!(label.meta.program_hash.as_deref(), Some("00ff"));
        let rat = &records[1];
        assert_eq!(rat.objective, Objective::Rationale);
        assert!(rat.instruction.ends_with(RATIONALE_SUFFIX));
        assert_eq!(rat.target, "Thus, the answer is 2.");
    }

    #[test]
    fn label_only_emits_exactly_one_record() {
        let outcome = FilterOutcome {
            status: FilterStatus::LabelOnly {
                gold_answer: "3".to_string(),
            },
            candidates_executed: 5,
            candidates_correct: 0,
        };
        let records = emit_records(&sample_identity(0), &outcome, None).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].objective, Objective::Label);
        assert_eq!(records[0].target, "3");
        assert!(records[0].meta.program_hash.is_none());
    }

    #[test]
    fn missing_rationale_is_a_hard_error() {
        let err = emit_records(&sample_identity(0), &selected_outcome(), None).unwrap_err();
        assert!(matches!(err, DatasetError::RationaleMissing { .. }));
    }

    #[test]
    fn multiple_choice_uses_the_letter_instruction() {
        let sample = SampleIdentity {
            task: TaskKind::MultipleChoice,
            ..sample_identity(0)
        };
        let outcome = FilterOutcome {
            status: FilterStatus::LabelOnly {
                gold_answer: "B".to_string(),
            },
            candidates_executed: 1,
            candidates_correct: 0,
        };
        let records = emit_records(&sample, &outcome, None).unwrap();
        assert_eq!(records[0].instruction, MULTI_CHOICE_INSTRUCTION);
    }

    #[test]
    fn jsonl_round_trips_with_and_without_header() {
        let records = emit_records(&sample_identity(7), &selected_outcome(), Some(&rationale()))
            .unwrap();
        let dir = tempfile::tempdir().unwrap();

        let bare = dir.path().join("bare.jsonl");
        write_jsonl(&records, &bare).unwrap();
        assert_eq!(read_jsonl(&bare, ReadMode::Strict).unwrap(), records);

        let with_header = dir.path().join("header.jsonl");
        let header = RunHeader::new(serde_json::json!({"seed": 7}));
        write_jsonl_with_header(&records, &with_header, &header).unwrap();
        let (read_header, read_records) =
            read_jsonl_with_header(&with_header, ReadMode::Strict).unwrap();
        assert_eq!(read_header, Some(header));
        assert_eq!(read_records, records);
    }

    #[test]
    fn empty_record_list_writes_an_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        write_jsonl(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
        assert!(read_jsonl(&path, ReadMode::Strict).unwrap().is_empty());
    }

    #[test]
    fn missing_field_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let records =
            emit_records(&sample_identity(7), &selected_outcome(), Some(&rationale())).unwrap();
        let mut good = serde_json::to_string(&records[0]).unwrap();
        good.push('\n');
        let bad_line = {
            let mut v: serde_json::Value = serde_json::to_value(&records[1]).unwrap();
            v.as_object_mut().unwrap().remove("objective");
            serde_json::to_string(&v).unwrap()
        };
        std::fs::write(&path, format!("{good}{bad_line}\n")).unwrap();
        let err = read_jsonl(&path, ReadMode::Strict).unwrap_err();
        match err {
            DatasetError::Schema { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("objective"), "message: {message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_strict_rejects_lenient_preserves() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extra.jsonl");
        let records =
            emit_records(&sample_identity(7), &selected_outcome(), Some(&rationale())).unwrap();
        let line = {
            let mut v: serde_json::Value = serde_json::to_value(&records[0]).unwrap();
            v.as_object_mut()
                .unwrap()
                .insert("surprise".to_string(), serde_json::json!(42));
            serde_json::to_string(&v).unwrap()
        };
        std::fs::write(&path, format!("{line}\n")).unwrap();

        let err = read_jsonl(&path, ReadMode::Strict).unwrap_err();
        assert!(matches!(err, DatasetError::Schema { line: 1, .. }));

        let lenient = read_jsonl(&path, ReadMode::Lenient).unwrap();
        assert_eq!(lenient[0].extra.get("surprise"), Some(&serde_json::json!(42)));
        // Lenient round-trip preserves the unknown field.
        let out = dir.path().join("roundtrip.jsonl");
        write_jsonl(&lenient, &out).unwrap();
        assert_eq!(read_jsonl(&out, ReadMode::Lenient).unwrap(), lenient);
    }
}
