//! Candidate filtering: normalize and match answers against gold labels,
//! then keep a single winning (program, answer, trace) tuple or fall back
//! to label-only supervision.
//!
//! String rules come first; an optional LLM judge is consulted only when
//! they fail, and a judge transport failure falls back to the string
//! verdict.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interp::ExecutionTrace;
use crate::progen::Candidate;

/// Number words mapped to digits during normalization.
const NUMBER_WORDS: [&str; 21] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen", "twenty",
];

/// Lowercase, strip edge whitespace/punctuation, drop articles, map number
/// words zero-twenty to digits, collapse internal whitespace.
pub fn normalize_answer(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let trimmed = lowered.trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation());
    let mut tokens = Vec::new();
    for token in trimmed.split_whitespace() {
        if matches!(token, "a" | "an" | "the") {
            continue;
        }
        match NUMBER_WORDS.iter().position(|w| *w == token) {
            Some(value) => tokens.push(value.to_string()),
            None => tokens.push(token.to_string()),
        }
    }
    tokens.join(" ")
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge transport failure: {0}")]
    Transport(String),
}

/// Answer-equivalence judge consulted when string rules fail.
pub trait LlmJudge: Send + Sync {
    fn affirm_equivalence(&self, prediction: &str, reference: &str) -> Result<bool, JudgeError>;
}

/// True when the prediction matches the gold answer: normalized equality,
/// a trailing-"s" plural of one side, or (when present) a judge verdict.
pub fn answers_match(pred: &str, gold: &str, judge: Option<&dyn LlmJudge>) -> bool {
    if pred.is_empty() || gold.is_empty() {
        return false;
    }
    let np = normalize_answer(pred);
    let ng = normalize_answer(gold);
    if !np.is_empty() && np == ng {
        return true;
    }
    if plural_of(&np, &ng) || plural_of(&ng, &np) {
        return true;
    }
    if let Some(judge) = judge {
        match judge.affirm_equivalence(pred, gold) {
            Ok(verdict) => return verdict,
            Err(err) => {
                log::warn!("judge failed ({err}); falling back to string verdict");
                return false;
            }
        }
    }
    false
}

/// `longer` is `shorter` plus a trailing "s".
fn plural_of(longer: &str, shorter: &str) -> bool {
    !shorter.is_empty() && longer.len() == shorter.len() + 1 && longer.starts_with(shorter)
        && longer.ends_with('s')
}

/// A candidate paired with its execution result. `result` is `None` when
/// execution failed; the trace records why.
#[derive(Debug, Clone)]
pub struct ExecutedCandidate {
    pub candidate: Candidate,
    pub result: Option<String>,
    pub trace: ExecutionTrace,
}

/// Terminal disposition of one sample after filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FilterStatus {
    /// A gold label exists and this candidate's answer matched it.
    SelectedProgram {
        candidate_rank: u32,
        program_hash: String,
        answer: String,
        trace: ExecutionTrace,
    },
    /// A gold label exists but no executed candidate matched.
    LabelOnly { gold_answer: String },
    /// No gold label; the top-scoring executable candidate is kept.
    UnlabeledTop {
        program_hash: String,
        answer: String,
        trace: ExecutionTrace,
    },
    /// No gold label and nothing executed successfully.
    GenerationFailed,
}

impl FilterStatus {
    pub fn name(&self) -> &'static str {
        match self {
            FilterStatus::SelectedProgram { .. } => "selected_program",
            FilterStatus::LabelOnly { .. } => "label_only",
            FilterStatus::UnlabeledTop { .. } => "unlabeled_top",
            FilterStatus::GenerationFailed => "generation_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    #[serde(flatten)]
    pub status: FilterStatus,
    pub candidates_executed: u32,
    pub candidates_correct: u32,
}

/// Select one tuple (or the label-only fallback) among executed candidates.
///
/// `gold_answer` is `Some` for labeled samples. `executed` must hold one
/// entry per parse-valid candidate; rank order does not matter, selection
/// is by score (ties broken by ascending program hash).
pub fn filter_candidates(
    gold_answer: Option<&str>,
    executed: &[ExecutedCandidate],
    judge: Option<&dyn LlmJudge>,
) -> FilterOutcome {
    let selectable = |ec: &&ExecutedCandidate| ec.result.is_some() && ec.candidate.program().is_some();

    fn pick_best<'a>(pool: Vec<&'a ExecutedCandidate>) -> Option<&'a ExecutedCandidate> {
        pool.into_iter().max_by(|a, b| {
            a.candidate
                .score
                .partial_cmp(&b.candidate.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| {
                    let ha = a.candidate.program().map(|p| p.program_hash).unwrap_or(u64::MAX);
                    let hb = b.candidate.program().map(|p| p.program_hash).unwrap_or(u64::MAX);
                    hb.cmp(&ha) // on score ties the smaller hash wins
                })
        })
    }

    match gold_answer {
        Some(gold) => {
            let matching: Vec<&ExecutedCandidate> = executed
                .iter()
                .filter(selectable)
                .filter(|ec| answers_match(ec.result.as_deref().unwrap_or(""), gold, judge))
                .collect();
            let candidates_correct = matching.len() as u32;
            let status = match pick_best(matching) {
                Some(best) => {
                    let program = best.candidate.program().expect("selectable has program");
                    FilterStatus::SelectedProgram {
                        candidate_rank: best.candidate.rank,
                        program_hash: program.hash_hex(),
                        answer: best.result.clone().expect("selectable has result"),
                        trace: best.trace.clone(),
                    }
                }
                None => FilterStatus::LabelOnly {
                    gold_answer: gold.to_string(),
                },
            };
            FilterOutcome {
                status,
                candidates_executed: executed.len() as u32,
                candidates_correct,
            }
        }
        None => {
            let succeeded: Vec<&ExecutedCandidate> =
                executed.iter().filter(selectable).collect();
            let status = match pick_best(succeeded) {
                Some(best) => {
                    let program = best.candidate.program().expect("selectable has program");
                    FilterStatus::UnlabeledTop {
                        program_hash: program.hash_hex(),
                        answer: best.result.clone().expect("selectable has result"),
                        trace: best.trace.clone(),
                    }
                }
                None => FilterStatus::GenerationFailed,
            };
            FilterOutcome {
                status,
                candidates_executed: executed.len() as u32,
                candidates_correct: 0,
            }
        }
    }
}
