//! End-to-end pipeline driver: candidate generation, traced execution,
//! filtering, rationale rendering, and record emission over a corpus,
//! with a reconciled report.
//!
//! Samples are processed by a bounded worker pool and merged in sample-id
//! order; identical (corpus, config) produce byte-identical JSONL and
//! report files regardless of worker count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cot::{self, Rationale};
use crate::dataset::{self, RunHeader, SampleIdentity, TrainingRecord};
use crate::filter::{self, ExecutedCandidate, FilterOutcome, FilterStatus, LlmJudge};
use crate::interp::{self, ExecutionTrace, StepBudget, Value};
use crate::llm::{LlmClient, LlmConfig, LlmJudgeClient};
use crate::progen::{self, GenConfig, GenMode};
use crate::scene::{CorpusEntry, GoldSample, TaskKind};
use crate::tools::{NoiseConfig, ToolRegistry, VisualInput};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Tools(#[from] crate::tools::ToolError),
    #[error(transparent)]
    Llm(#[from] crate::llm::LlmError),
    #[error("report i/o error at {path}: {source}")]
    ReportIo {
        path: String,
        source: std::io::Error,
    },
}

/// Complete pipeline configuration; serialized into every output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub global_seed: u64,
    pub k: usize,
    pub temperature: f64,
    pub mode: GenMode,
    pub corruption_rate: f64,
    pub noise: NoiseConfig,
    pub offline: bool,
    /// 0 = library default. Not echoed into outputs: worker count never
    /// affects them.
    #[serde(skip)]
    pub workers: usize,
    pub step_budget: u32,
    /// Ignore gold labels (the unlabeled data path).
    pub unlabeled: bool,
    /// Where outputs land; not part of the data-determining echo.
    #[serde(skip)]
    pub out_path: PathBuf,
    #[serde(skip)]
    pub report_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub llm: Option<LlmConfig>,
    /// Rewrite traces with the LLM (validated, template fallback).
    pub llm_cot: bool,
    /// Consult the LLM judge when string matching fails.
    pub llm_judge: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prompt_template_path: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            global_seed: 0,
            k: 5,
            temperature: 0.5,
            mode: GenMode::Template,
            corruption_rate: 0.5,
            noise: NoiseConfig::zero(0),
            offline: true,
            workers: 0,
            step_budget: interp::DEFAULT_STEP_BUDGET,
            unlabeled: false,
            out_path: PathBuf::from("data.jsonl"),
            report_path: None,
            llm: None,
            llm_cot: false,
            llm_judge: false,
            prompt_template_path: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k < 1 {
            return Err(PipelineError::BadConfig("k must be >= 1".to_string()));
        }
        if self.temperature < 0.0 {
            return Err(PipelineError::BadConfig(
                "temperature must be >= 0".to_string(),
            ));
        }
        if self.step_budget == 0 {
            return Err(PipelineError::BadConfig(
                "step budget must be > 0".to_string(),
            ));
        }
        self.noise
            .validate()
            .map_err(|e| PipelineError::BadConfig(e.to_string()))?;
        let wants_llm = self.mode == GenMode::Llm || self.llm_cot || self.llm_judge;
        if self.offline && wants_llm {
            return Err(PipelineError::BadConfig(
                "offline mode forbids llm generation, llm rationales, and the judge".to_string(),
            ));
        }
        if wants_llm && self.llm.is_none() {
            return Err(PipelineError::BadConfig(
                "llm settings required for llm mode".to_string(),
            ));
        }
        Ok(())
    }

    fn gen_config(&self) -> GenConfig {
        GenConfig {
            k: self.k,
            temperature: self.temperature,
            mode: self.mode,
            seed: self.global_seed,
            corruption_rate: self.corruption_rate,
            prompt_template_path: self.prompt_template_path.clone(),
        }
    }

    fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Per-task (and overall) aggregate metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub n_samples: u64,
    pub n_labeled: u64,
    /// Fraction of labeled samples whose rank-1 candidate executed and
    /// matched (prefix of the same k-candidate run).
    pub success_at_1: f64,
    /// Fraction of labeled samples with any matching candidate.
    pub success_at_k: f64,
    pub success_delta: f64,
    pub label_only_fraction: f64,
    pub mean_trace_len: f64,
    pub mean_candidates_executed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub overall: TaskReport,
    pub per_task: BTreeMap<String, TaskReport>,
    pub n_label_records: u64,
    pub n_rationale_records: u64,
    pub n_sample_errors: u64,
    pub config: serde_json::Value,
    /// Measured, not part of the serialized report so identical runs
    /// produce identical files.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl PipelineReport {
    /// Human-readable rendering for standard output.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "pipeline report ({} samples, {:.2}s)\n",
            self.overall.n_samples, self.wall_time_secs
        ));
        out.push_str(&format!(
            "  records: {} label, {} rationale; sample errors: {}\n",
            self.n_label_records, self.n_rationale_records, self.n_sample_errors
        ));
        let mut row = |name: &str, t: &TaskReport| {
            out.push_str(&format!(
                "  {name:<16} n={:<5} success@1={:.3} success@k={:.3} delta={:+.3} label_only={:.3} trace_len={:.2} cand_exec={:.2}\n",
                t.n_samples,
                t.success_at_1,
                t.success_at_k,
                t.success_delta,
                t.label_only_fraction,
                t.mean_trace_len,
                t.mean_candidates_executed,
            ));
        };
        row("overall", &self.overall);
        for (task, report) in &self.per_task {
            row(task, report);
        }
        out
    }
}

/// Everything recorded about one processed sample.
#[derive(Debug)]
struct SampleOutput {
    task: TaskKind,
    labeled: bool,
    outcome: FilterOutcome,
    rank1_correct: bool,
    records: Vec<TrainingRecord>,
    error: Option<String>,
}

/// Run the full pipeline over a corpus; returns the JSONL path and the
/// report. Per-sample errors are recorded in the report and never abort
/// the batch; file-level I/O errors do.
pub fn run_pipeline(
    corpus: &[CorpusEntry],
    config: &PipelineConfig,
) -> Result<(PathBuf, PipelineReport), PipelineError> {
    config.validate()?;
    let started = Instant::now();

    let registry = ToolRegistry::oracle(config.noise.clone())?;
    let llm_client = match (&config.llm, config.offline) {
        (Some(llm_config), false) => Some(LlmClient::new(llm_config.clone())?),
        _ => None,
    };
    let judge: Option<LlmJudgeClient> = match (&llm_client, config.llm_judge) {
        (Some(_), true) => {
            let llm_config = config.llm.clone().expect("validated");
            Some(LlmJudgeClient::new(
                LlmClient::new(llm_config)?,
                crate::assets::PromptTemplate::bundled(crate::assets::PromptKind::AnswerVerification),
            ))
        }
        _ => None,
    };
    let judge_ref: Option<&dyn LlmJudge> = judge.as_ref().map(|j| j as &dyn LlmJudge);

    // Expand (scene, sample) pairs; ids follow corpus order.
    let samples: Vec<(String, Arc<crate::scene::SceneGraph>, &GoldSample)> = corpus
        .iter()
        .flat_map(|entry| {
            let scene = Arc::new(entry.scene.clone());
            entry
                .samples
                .iter()
                .enumerate()
                .map(move |(j, sample)| {
                    (format!("{}_q{j}", scene.scene_id), scene.clone(), sample)
                })
        })
        .collect();

    let process = |(sample_id, scene, gold): &(String, Arc<crate::scene::SceneGraph>, &GoldSample)| {
        process_sample(
            sample_id,
            scene.clone(),
            gold,
            config,
            &registry,
            llm_client.as_ref(),
            judge_ref,
        )
    };

    let outputs: Vec<SampleOutput> = if config.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| PipelineError::BadConfig(e.to_string()))?;
        pool.install(|| samples.par_iter().map(process).collect())
    } else {
        samples.par_iter().map(process).collect()
    };

    // Ordered single-writer sink.
    let mut records: Vec<TrainingRecord> = Vec::new();
    for output in &outputs {
        records.extend(output.records.iter().cloned());
    }
    let header = RunHeader::new(config.echo());
    dataset::write_jsonl_with_header(&records, &config.out_path, &header)?;

    let report = build_report(config, &outputs, &records, started.elapsed().as_secs_f64());
    if let Some(report_path) = &config.report_path {
        write_report(&report, report_path)?;
    }
    Ok((config.out_path.clone(), report))
}

fn process_sample(
    sample_id: &str,
    scene: Arc<crate::scene::SceneGraph>,
    gold: &GoldSample,
    config: &PipelineConfig,
    registry: &ToolRegistry,
    llm: Option<&LlmClient>,
    judge: Option<&dyn LlmJudge>,
) -> SampleOutput {
    let input = VisualInput::Scene(scene);
    let mut error = None;

    // Step 1: candidate programs.
    let candidates = match progen::generate_candidates(
        gold,
        &config.gen_config(),
        llm,
        caption_for(config, registry, &input).as_deref(),
    ) {
        Ok(set) => set,
        Err(err) => {
            error = Some(err.to_string());
            progen::CandidateSet { candidates: vec![] }
        }
    };

    // Step 2: execute each parse-valid candidate, sharing results between
    // identical programs.
    let mut by_hash: BTreeMap<u64, (Option<String>, ExecutionTrace)> = BTreeMap::new();
    let mut executed: Vec<ExecutedCandidate> = Vec::new();
    for candidate in &candidates.candidates {
        let Some(program) = candidate.program() else {
            continue;
        };
        let entry = by_hash.entry(program.program_hash).or_insert_with(|| {
            interp::execute(program, &input, registry, StepBudget(config.step_budget))
        });
        executed.push(ExecutedCandidate {
            candidate: candidate.clone(),
            result: entry.0.clone(),
            trace: entry.1.clone(),
        });
    }

    // Step 3: filter.
    let gold_answer = (!config.unlabeled).then_some(gold.gold_answer.as_str());
    let outcome = filter::filter_candidates(gold_answer, &executed, judge);

    // Step 4: rationale for the kept tuple.
    let rationale = render_rationale(config, gold, &outcome, &executed, llm);

    // Records; a missing rationale here is a pipeline bug, surfaced as a
    // per-sample error rather than silence.
    let identity = SampleIdentity {
        sample_id,
        image_ref: &gold.scene_id,
        query_text: &gold.query_text,
        task: gold.task,
        global_seed: config.global_seed,
    };
    let records = match dataset::emit_records(&identity, &outcome, rationale.as_ref()) {
        Ok(records) => records,
        Err(err) => {
            error = Some(err.to_string());
            Vec::new()
        }
    };

    let rank1_correct = gold_answer.is_some_and(|gold_text| {
        executed
            .iter()
            .find(|ec| ec.candidate.rank == 1)
            .and_then(|ec| ec.result.as_deref())
            .is_some_and(|result| filter::answers_match(result, gold_text, judge))
    });

    SampleOutput {
        task: gold.task,
        labeled: gold_answer.is_some(),
        outcome,
        rank1_correct,
        records,
        error,
    }
}

/// Caption slot for the code-generation prompt (LLM mode only), answered
/// by the registry outside any trace (call index 0).
fn caption_for(
    config: &PipelineConfig,
    registry: &ToolRegistry,
    input: &VisualInput,
) -> Option<String> {
    if config.mode != GenMode::Llm {
        return None;
    }
    let root = input.root_patch();
    registry
        .invoke(
            input,
            0,
            "simple_query",
            &root,
            &[Value::Str("Describe the image.".to_string())],
        )
        .ok()
        .map(|v| v.render())
}

fn render_rationale(
    config: &PipelineConfig,
    gold: &GoldSample,
    outcome: &FilterOutcome,
    executed: &[ExecutedCandidate],
    llm: Option<&LlmClient>,
) -> Option<Rationale> {
    let (answer, trace, program_hash) = match &outcome.status {
        FilterStatus::SelectedProgram {
            answer,
            trace,
            program_hash,
            ..
        }
        | FilterStatus::UnlabeledTop {
            answer,
            trace,
            program_hash,
        } => (answer, trace, program_hash),
        _ => return None,
    };
    let source = executed
        .iter()
        .find(|ec| {
            ec.candidate
                .program()
                .is_some_and(|p| p.hash_hex() == *program_hash)
        })
        .map(|ec| ec.candidate.source.as_str())
        .unwrap_or("");
    let rationale = match (config.llm_cot, llm) {
        (true, Some(client)) => cot::render_rationale_llm(
            trace,
            &gold.query_text,
            source,
            answer,
            client,
            None,
        ),
        _ => cot::render_rationale_template(trace, &gold.query_text, answer),
    };
    match rationale {
        Ok(r) => Some(r),
        Err(err) => {
            // Unreachable for selected tuples (their traces returned);
            // surfaced through emit_records' hard error if it ever fires.
            log::error!("rationale rendering failed: {err}");
            None
        }
    }
}

#[derive(Default)]
struct TaskAccumulator {
    n_samples: u64,
    n_labeled: u64,
    n_rank1_correct: u64,
    n_selected_labeled: u64,
    n_label_only: u64,
    n_selected_traces: u64,
    sum_trace_len: u64,
    sum_candidates_executed: u64,
}

impl TaskAccumulator {
    fn add(&mut self, output: &SampleOutput) {
        self.n_samples += 1;
        self.sum_candidates_executed += output.outcome.candidates_executed as u64;
        if output.labeled {
            self.n_labeled += 1;
            if output.rank1_correct {
                self.n_rank1_correct += 1;
            }
        }
        match &output.outcome.status {
            FilterStatus::SelectedProgram { trace, .. } => {
                if output.labeled {
                    self.n_selected_labeled += 1;
                }
                self.n_selected_traces += 1;
                self.sum_trace_len += trace.entries.len() as u64;
            }
            FilterStatus::UnlabeledTop { trace, .. } => {
                self.n_selected_traces += 1;
                self.sum_trace_len += trace.entries.len() as u64;
            }
            FilterStatus::LabelOnly { .. } => self.n_label_only += 1,
            FilterStatus::GenerationFailed => {}
        }
    }

    fn report(&self) -> TaskReport {
        let frac = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let success_at_1 = frac(self.n_rank1_correct, self.n_labeled);
        let success_at_k = frac(self.n_selected_labeled, self.n_labeled);
        TaskReport {
            n_samples: self.n_samples,
            n_labeled: self.n_labeled,
            success_at_1,
            success_at_k,
            success_delta: success_at_k - success_at_1,
            label_only_fraction: frac(self.n_label_only, self.n_labeled),
            mean_trace_len: frac(self.sum_trace_len, self.n_selected_traces),
            mean_candidates_executed: frac(self.sum_candidates_executed, self.n_samples),
        }
    }
}

fn build_report(
    config: &PipelineConfig,
    outputs: &[SampleOutput],
    records: &[TrainingRecord],
    wall_time_secs: f64,
) -> PipelineReport {
    let mut overall = TaskAccumulator::default();
    let mut per_task: BTreeMap<String, TaskAccumulator> = BTreeMap::new();
    let mut n_sample_errors = 0u64;
    for output in outputs {
        overall.add(output);
        per_task
            .entry(output.task.as_str().to_string())
            .or_default()
            .add(output);
        if output.error.is_some() {
            n_sample_errors += 1;
        }
    }
    let n_label_records = records
        .iter()
        .filter(|r| r.objective == dataset::Objective::Label)
        .count() as u64;
    let n_rationale_records = records
        .iter()
        .filter(|r| r.objective == dataset::Objective::Rationale)
        .count() as u64;
    PipelineReport {
        overall: overall.report(),
        per_task: per_task
            .into_iter()
            .map(|(task, acc)| (task, acc.report()))
            .collect(),
        n_label_records,
        n_rationale_records,
        n_sample_errors,
        config: config.echo(),
        wall_time_secs,
    }
}

/// Serialize the report (stable JSON, no wall time) next to the JSONL.
pub fn write_report(report: &PipelineReport, path: &Path) -> Result<(), PipelineError> {
    let body = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, body + "\n").map_err(|source| PipelineError::ReportIo {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_report(path: &Path) -> Result<PipelineReport, PipelineError> {
    let body = std::fs::read_to_string(path).map_err(|source| PipelineError::ReportIo {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&body).map_err(|e| PipelineError::BadConfig(e.to_string()))
}

// ── Scoring ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Exact match against the first reference (string rules only).
    Em,
    /// Reference-consensus score: min(1, matches/3) per item.
    VqaScore,
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("predictions ({0}) and references ({1}) differ in length")]
    LengthMismatch(usize, usize),
    #[error("item {0} has no reference answers")]
    EmptyReferences(usize),
}

/// Score predictions against per-item reference lists.
pub fn score_answers(
    predictions: &[String],
    references: &[Vec<String>],
    metric: Metric,
) -> Result<f64, ScoreError> {
    if predictions.len() != references.len() {
        return Err(ScoreError::LengthMismatch(
            predictions.len(),
            references.len(),
        ));
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (idx, (pred, refs)) in predictions.iter().zip(references).enumerate() {
        if refs.is_empty() {
            return Err(ScoreError::EmptyReferences(idx));
        }
        total += match metric {
            Metric::Em => {
                if filter::answers_match(pred, &refs[0], None) {
                    1.0
                } else {
                    0.0
                }
            }
            Metric::VqaScore => {
                let matches = refs
                    .iter()
                    .filter(|r| filter::answers_match(pred, r, None))
                    .count();
                (matches as f64 / 3.0).min(1.0)
            }
        };
    }
    Ok(total / predictions.len() as f64)
}
