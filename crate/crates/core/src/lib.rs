//! Batch synthesis of chain-of-thought training data for vision-language
//! models.
//!
//! The pipeline samples candidate tool-use programs for a visual question,
//! executes each one against vision tools while recording a full trace,
//! keeps a candidate whose answer matches the gold label, rewrites the
//! winning trace into a natural-language rationale, and emits JSONL records
//! carrying both a short-answer objective and a rationale objective.
//!
//! Everything runs offline against a synthetic scene-graph world with exact
//! oracle tools (optionally corrupted by seeded noise); remote HTTP backends
//! plug in behind the same tool registry for production use.
//!
//! Module map:
//!
//! - [`scene`] — synthetic scene graphs, structured queries, brute-force oracle
//! - [`vpl`] — lexer/parser/static checker/pretty-printer for the program language
//! - [`interp`] — the execution engine and trace recorder
//! - [`tools`] — the tool registry with oracle and remote backends
//! - [`llm`] — OpenAI-compatible chat-completions client
//! - [`progen`] — candidate program generation (LLM or template enumerator)
//! - [`filter`] — answer normalization, matching, and candidate selection
//! - [`cot`] — execution-trace-to-rationale rendering and validation
//! - [`dataset`] — training-record emission and JSONL I/O
//! - [`harness`] — end-to-end pipeline driver, reports, and scoring

pub mod assets;
pub mod cot;
pub mod dataset;
mod english;
pub mod filter;
pub mod harness;
pub mod interp;
pub mod llm;
pub mod progen;
pub mod scene;
pub mod seed;
pub mod tools;
pub mod vpl;

#[cfg(test)]
pub(crate) mod mockhttp;

/// Schema/pipeline version embedded in every emitted record.
pub const PIPELINE_VERSION: &str = concat!("cotpipe-", env!("CARGO_PKG_VERSION"));
