//! Rewriting execution traces into natural-language rationales.
//!
//! The template renderer is a pure function emitting one fixed-pattern
//! sentence per trace entry plus a concluding sentence carrying the final
//! answer. The LLM renderer asks a model for a fluent rewrite but accepts
//! it only if it passes the same coverage and answer-consistency checks;
//! anything else falls back to the template output.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::assets::{PromptKind, PromptTemplate, Vocabulary};
use crate::english::{article, pluralize};
use crate::filter::normalize_answer;
use crate::interp::{ExecutionTrace, TraceEntry};
use crate::llm::LlmClient;

#[derive(Debug, Error)]
pub enum CotError {
    #[error("cannot render a rationale for a failed trace")]
    FailedTrace,
}

/// A natural-language rendering of an execution trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Rationale {
    pub text: String,
    /// Trace steps the text accounts for; complete for every accepted
    /// rationale.
    pub covered_steps: Vec<u32>,
    /// Byte range of the final answer inside `text`.
    pub final_answer_span: (usize, usize),
}

impl Rationale {
    pub fn final_answer_text(&self) -> &str {
        &self.text[self.final_answer_span.0..self.final_answer_span.1]
    }
}

/// Deterministic template rendering. The trace must have returned and
/// `answer` must be its rendered result.
pub fn render_rationale_template(
    trace: &ExecutionTrace,
    query_text: &str,
    answer: &str,
) -> Result<Rationale, CotError> {
    if !trace.succeeded() {
        return Err(CotError::FailedTrace);
    }
    let categories = box_category_map(trace);
    let mut text = String::new();
    for entry in &trace.entries {
        for sentence in entry_sentences(entry, &categories) {
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(&sentence);
        }
    }
    if !text.is_empty() {
        text.push(' ');
    }
    let span = push_final_sentence(&mut text, query_text, answer);
    let rationale = Rationale {
        text,
        covered_steps: trace.entries.iter().map(|e| e.step).collect(),
        final_answer_span: span,
    };
    debug_assert!(
        normalize_answer(rationale.final_answer_text()) == normalize_answer(answer),
        "template rationale must carry the answer"
    );
    Ok(rationale)
}

/// LLM rendering with strict validation; falls back to the template on
/// transport failure or when validation rejects the model output.
pub fn render_rationale_llm(
    trace: &ExecutionTrace,
    query_text: &str,
    program_source: &str,
    answer: &str,
    llm: &LlmClient,
    template_override: Option<&PromptTemplate>,
) -> Result<Rationale, CotError> {
    if !trace.succeeded() {
        return Err(CotError::FailedTrace);
    }
    let bundled;
    let template = match template_override {
        Some(t) => t,
        None => {
            bundled = PromptTemplate::bundled(PromptKind::CotConversion);
            &bundled
        }
    };
    let trace_text: Vec<String> = trace.entries.iter().map(TraceEntry::to_string).collect();
    let attempt = template
        .fill(&[
            ("query", query_text),
            ("program", program_source),
            ("execution_trace", &trace_text.join("\n")),
            ("output", answer),
        ])
        .map_err(|e| e.to_string())
        .and_then(|prompt| {
            llm.complete(&prompt, 1, 0.0)
                .map_err(|e| e.to_string())
                .map(|choices| choices[0].text.trim().to_string())
        });

    match attempt {
        Ok(text) => match validate_rationale(&text, trace, answer) {
            Ok((covered_steps, final_answer_span)) => Ok(Rationale {
                text,
                covered_steps,
                final_answer_span,
            }),
            Err(reason) => {
                log::warn!("llm rationale rejected ({reason}); using template fallback");
                render_rationale_template(trace, query_text, answer)
            }
        },
        Err(err) => {
            log::warn!("llm rationale failed ({err}); using template fallback");
            render_rationale_template(trace, query_text, answer)
        }
    }
}

/// Coverage and answer-faithfulness validation for externally produced
/// rationale text. Returns the covered steps and the final-answer span.
pub fn validate_rationale(
    text: &str,
    trace: &ExecutionTrace,
    answer: &str,
) -> Result<(Vec<u32>, (usize, usize)), String> {
    let lowered = text.to_lowercase();
    for entry in &trace.entries {
        for anchor in entry_anchors(entry) {
            if !lowered.contains(&anchor.to_lowercase()) {
                return Err(format!(
                    "step {} ({}) is not mentioned: missing {anchor:?}",
                    entry.step, entry.tool
                ));
            }
        }
    }
    let span = find_answer_span(text, answer)
        .ok_or_else(|| format!("final answer {answer:?} does not appear"))?;
    Ok((trace.entries.iter().map(|e| e.step).collect(), span))
}

// ── Template sentences ────────────────────────────────────────────────

/// Grid-box string to detected category, from find entries.
fn box_category_map(trace: &ExecutionTrace) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for entry in &trace.entries {
        if entry.tool == "find" {
            if let Some(category) = entry.args.first() {
                for grid_box in parse_box_list(&entry.result) {
                    map.insert(grid_box, category.clone());
                }
            }
        }
    }
    map
}

/// Boxes out of a rendered patch list like "[1 2 3 4, 5 6 7 8]".
fn parse_box_list(rendered: &str) -> Vec<String> {
    let inner = rendered
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .unwrap_or("");
    if inner.trim().is_empty() {
        return Vec::new();
    }
    inner.split(", ").map(str::to_string).collect()
}

fn receiver_box(entry: &TraceEntry) -> &str {
    entry
        .receiver
        .as_ref()
        .map(|r| r.grid_box.as_str())
        .unwrap_or("0 0 999 999")
}

fn entry_sentences(entry: &TraceEntry, categories: &BTreeMap<String, String>) -> Vec<String> {
    match entry.tool.as_str() {
        "find" => {
            let category = entry.args.first().cloned().unwrap_or_default();
            let boxes = parse_box_list(&entry.result);
            match boxes.len() {
                0 => vec![format!(
                    "There are no {} in the picture.",
                    pluralize(&category)
                )],
                1 => vec![format!(
                    "There is {} {category} at {}.",
                    article(&category),
                    boxes[0]
                )],
                n => vec![format!(
                    "There are {n} {} in the picture.",
                    pluralize(&category)
                )],
            }
        }
        "exists" => {
            let category = entry.args.first().cloned().unwrap_or_default();
            if entry.result == "True" {
                vec![format!(
                    "There is {} {category} in the picture.",
                    article(&category)
                )]
            } else {
                vec![format!("There is no {category} in the picture.")]
            }
        }
        "verify_property" => {
            let category = entry.args.first().cloned().unwrap_or_default();
            let property = entry.args.get(1).cloned().unwrap_or_default();
            let verb = if entry.result == "True" { "is" } else { "is not" };
            vec![format!(
                "The {category} at {} {verb} {property}.",
                receiver_box(entry)
            )]
        }
        "compute_depth" => {
            let grid_box = receiver_box(entry);
            let category = categories
                .get(grid_box)
                .map(String::as_str)
                .unwrap_or("object");
            vec![format!(
                "The {category} at {grid_box} has depth {}.",
                entry.result
            )]
        }
        "simple_query" => {
            let question = entry.args.first().cloned().unwrap_or_default();
            let grid_box = receiver_box(entry);
            if question == "What color is this?" {
                let category = categories
                    .get(grid_box)
                    .map(String::as_str)
                    .unwrap_or("object");
                vec![format!(
                    "The {category} at {grid_box} is {}.",
                    entry.result
                )]
            } else if question == "What is this?" {
                vec![format!(
                    "The object at {grid_box} is {} {}.",
                    article(&entry.result),
                    entry.result
                )]
            } else {
                vec![format!(
                    "The answer to \"{question}\" is {}.",
                    entry.result
                )]
            }
        }
        "llm_query" => {
            let question = entry.args.first().cloned().unwrap_or_default();
            vec![format!(
                "According to external knowledge, the answer to \"{question}\" is {}.",
                entry.result
            )]
        }
        other => vec![format!("The {other} step produced {}.", entry.result)],
    }
}

/// Append the concluding sentence; returns the answer's byte span.
fn push_final_sentence(text: &mut String, query_text: &str, answer: &str) -> (usize, usize) {
    if let (Some(count), Some(phrase)) = (answer.parse::<u64>().ok(), counted_phrase(query_text)) {
        let noun = if count == 1 {
            singularize_phrase(&phrase)
        } else {
            phrase
        };
        let lead = if count == 1 {
            "Thus, there is "
        } else {
            "Thus, there are "
        };
        text.push_str(lead);
        let start = text.len();
        text.push_str(answer);
        let end = text.len();
        text.push_str(&format!(" {noun}."));
        return (start, end);
    }
    text.push_str("Thus, the answer is ");
    let start = text.len();
    text.push_str(answer);
    let end = text.len();
    text.push('.');
    (start, end)
}

/// The "{...}" of "How many {...} are in the picture?".
fn counted_phrase(query_text: &str) -> Option<String> {
    let rest = query_text.strip_prefix("How many ")?;
    let phrase = rest
        .strip_suffix(" are in the picture?")
        .or_else(|| rest.strip_suffix(" are in the photo?"))
        .or_else(|| rest.strip_suffix(" are there?"))?;
    Some(phrase.to_string())
}

/// Undo pluralization of the trailing category in a counted phrase, e.g.
/// "yellow buses" -> "yellow bus", "tennis balls" -> "tennis ball".
fn singularize_phrase(phrase: &str) -> String {
    let vocab = Vocabulary::bundled_static();
    let words: Vec<&str> = phrase.split(' ').collect();
    // Try the longest category suffix first (categories span <= 2 words).
    for take in (1..=2.min(words.len())).rev() {
        let suffix = words[words.len() - take..].join(" ");
        if let Some(category) = vocab
            .categories
            .iter()
            .find(|cat| pluralize(cat) == suffix)
        {
            let mut out = words[..words.len() - take].join(" ");
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(category);
            return out;
        }
    }
    // Unknown noun: naive de-pluralization.
    phrase
        .strip_suffix("es")
        .or_else(|| phrase.strip_suffix('s'))
        .unwrap_or(phrase)
        .to_string()
}

// ── Validation helpers ────────────────────────────────────────────────

/// Tokens an external rationale must mention for one trace entry.
fn entry_anchors(entry: &TraceEntry) -> Vec<String> {
    match entry.tool.as_str() {
        "find" => {
            let mut anchors = vec![entry.args.first().cloned().unwrap_or_default()];
            let boxes = parse_box_list(&entry.result);
            if boxes.len() == 1 {
                anchors.push(boxes.into_iter().next().expect("one box"));
            } else if !boxes.is_empty() {
                // Either every box or the count must appear; the count is
                // the cheap anchor shared with the template style.
                anchors.push(boxes.len().to_string());
            }
            anchors
        }
        "exists" => vec![entry.args.first().cloned().unwrap_or_default()],
        "verify_property" => vec![
            entry.args.get(1).cloned().unwrap_or_default(),
            receiver_box(entry).to_string(),
        ],
        "compute_depth" => vec![entry.result.clone()],
        "simple_query" | "llm_query" => vec![entry.result.clone()],
        _ => vec![entry.result.clone()],
    }
}

/// Last substring whose normalized form equals the normalized answer.
fn find_answer_span(text: &str, answer: &str) -> Option<(usize, usize)> {
    let target = normalize_answer(answer);
    if target.is_empty() {
        return None;
    }
    let target_words = target.split(' ').count();
    let tokens: Vec<(usize, usize)> = tokenize_offsets(text);
    let mut found = None;
    for start in 0..tokens.len() {
        // Articles vanish under normalization, so windows may hold a few
        // more raw tokens than the target has words.
        for len in 1..=(target_words + 2).min(tokens.len() - start) {
            let span = (tokens[start].0, tokens[start + len - 1].1);
            if normalize_answer(&text[span.0..span.1]) == target {
                found = Some(span);
            }
        }
    }
    found
}

fn tokenize_offsets(text: &str) -> Vec<(usize, usize)> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (idx, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push((s, idx));
            }
        } else if start.is_none() {
            start = Some(idx);
        }
    }
    if let Some(s) = start {
        tokens.push((s, text.len()));
    }
    tokens
}
