//! Candidate program generation: k programs per query, either sampled
//! from an LLM through the code-generation prompt or enumerated from the
//! deterministic template catalog.
//!
//! Template mode models the error distribution of a sampling LLM with one
//! knob: with probability `corruption_rate` the top-ranked candidate is a
//! corrupted variant instead of the canonical program. The canonical
//! program is always present for k >= 2, which is what makes top-k
//! success approach 1 as noise goes to 0.

pub mod template;

pub use template::{canonical_program, template_catalog, TemplateCandidate, VariantKind};

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assets::{AssetError, PromptKind, PromptTemplate};
use crate::llm::{LlmClient, LlmError};
use crate::scene::GoldSample;
use crate::seed::rng_for;
use crate::tools::ToolRegistry;
use crate::vpl::{self, ParseError, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenMode {
    Llm,
    Template,
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    /// Candidates per query.
    pub k: usize,
    /// LLM sampling temperature.
    pub temperature: f64,
    pub mode: GenMode,
    /// Template-mode randomness.
    pub seed: u64,
    /// Template mode: probability that rank 1 is a corrupted variant.
    pub corruption_rate: f64,
    /// Override for the code-generation prompt asset (LLM mode).
    pub prompt_template_path: Option<PathBuf>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            k: 5,
            temperature: 0.5,
            mode: GenMode::Template,
            seed: 0,
            corruption_rate: 0.5,
            prompt_template_path: None,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.k < 1 {
            return Err(GenError::BadConfig("k must be >= 1".to_string()));
        }
        if self.temperature < 0.0 {
            return Err(GenError::BadConfig("temperature must be >= 0".to_string()));
        }
        if !(0.0..=1.0).contains(&self.corruption_rate) {
            return Err(GenError::BadConfig(
                "corruption_rate must be in [0, 1]".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generation config: {0}")]
    BadConfig(String),
    #[error("llm mode requires an llm client")]
    MissingClient,
    #[error("llm generation failed: {0}")]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Asset(#[from] AssetError),
}

/// One sampled program.
#[derive(Debug, Clone)]
pub struct Candidate {
    /// 1 = top.
    pub rank: u32,
    pub source: String,
    /// Higher is better: sum of token log-probs when the LLM provides
    /// them, negative rank otherwise; template mode samples a
    /// plausibility score.
    pub score: f64,
    pub parse_result: Result<Program, ParseError>,
}

impl Candidate {
    pub fn program(&self) -> Option<&Program> {
        self.parse_result.as_ref().ok()
    }

    /// Hash for dedup and tie-breaks; unparsable sources hash their text.
    pub fn dedup_hash(&self) -> u64 {
        match &self.parse_result {
            Ok(program) => program.program_hash,
            Err(_) => {
                let digest = Sha256::digest(self.source.as_bytes());
                u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields >= 8 bytes"))
            }
        }
    }
}

/// Candidates sorted by score descending, ties by hash ascending, ranks
/// 1..=n.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    fn assemble(mut candidates: Vec<Candidate>) -> Self {
        candidates.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.dedup_hash().cmp(&b.dedup_hash()))
        });
        for (idx, candidate) in candidates.iter_mut().enumerate() {
            candidate.rank = idx as u32 + 1;
        }
        Self { candidates }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn rank1(&self) -> Option<&Candidate> {
        self.candidates.first()
    }
}

/// Generate candidates for one sample.
///
/// `llm` must be present iff mode is [`GenMode::Llm`]; `caption` fills the
/// prompt's caption slot (LLM mode).
pub fn generate_candidates(
    sample: &GoldSample,
    config: &GenConfig,
    llm: Option<&LlmClient>,
    caption: Option<&str>,
) -> Result<CandidateSet, GenError> {
    config.validate()?;
    match config.mode {
        GenMode::Template => Ok(generate_template(sample, config)),
        GenMode::Llm => {
            let client = llm.ok_or(GenError::MissingClient)?;
            generate_llm(sample, config, client, caption)
        }
    }
}

/// The per-sample parameter rng; exposed so analyses can reproduce the
/// exact catalog a pipeline run used.
pub fn params_rng(sample: &GoldSample, config: &GenConfig) -> ChaCha8Rng {
    rng_for(
        config.seed,
        &["progen-params", &sample.scene_id, &sample.query_text],
    )
}

/// The catalog used in template mode for this sample and config:
/// canonical first, then the corrupted variants in slot-fill order.
pub fn catalog_for(sample: &GoldSample, config: &GenConfig) -> Vec<TemplateCandidate> {
    let n_variants = config.k.saturating_sub(1).max(1);
    let mut rng = params_rng(sample, config);
    template_catalog(sample, &mut rng, n_variants)
}

fn generate_template(sample: &GoldSample, config: &GenConfig) -> CandidateSet {
    let k = config.k;
    let catalog = catalog_for(sample, config);
    let mut rng = rng_for(
        config.seed,
        &["progen-slots", &sample.scene_id, &sample.query_text],
    );

    // First draw alone decides whether rank 1 is canonical, so the knob is
    // exactly P(top-1 canonical) = 1 - corruption_rate.
    let corrupted_first = rng.gen::<f64>() < config.corruption_rate;
    let mut variant_slots: Vec<usize> = (1..catalog.len()).collect();
    variant_slots.shuffle(&mut rng);

    let slots: Vec<usize> = if k == 1 {
        vec![if corrupted_first { variant_slots[0] } else { 0 }]
    } else {
        let canonical_pos = if corrupted_first {
            rng.gen_range(1..k)
        } else {
            0
        };
        let mut variants = variant_slots.into_iter();
        (0..k)
            .map(|pos| {
                if pos == canonical_pos {
                    0
                } else {
                    variants.next().expect("catalog holds k-1 variants")
                }
            })
            .collect()
    };

    // Strictly decreasing plausibility scores.
    let mut scores: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
    scores.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    for i in 1..scores.len() {
        if scores[i] >= scores[i - 1] {
            scores[i] = scores[i - 1] - 1e-12;
        }
    }

    let candidates: Vec<Candidate> = slots
        .iter()
        .zip(&scores)
        .enumerate()
        .map(|(idx, (slot, score))| {
            let source = catalog[*slot].source.clone();
            Candidate {
                rank: idx as u32 + 1,
                parse_result: vpl::parse(&source),
                source,
                score: *score,
            }
        })
        .collect();
    CandidateSet::assemble(candidates)
}

fn generate_llm(
    sample: &GoldSample,
    config: &GenConfig,
    client: &LlmClient,
    caption: Option<&str>,
) -> Result<CandidateSet, GenError> {
    let template = match &config.prompt_template_path {
        Some(path) => PromptTemplate::from_path(path)?,
        None => PromptTemplate::bundled(PromptKind::CodeGeneration),
    };
    let prompt = template.fill(&[
        ("tool_api_description", &ToolRegistry::api_description()),
        ("query", &sample.query_text),
        ("caption", caption.unwrap_or("an image")),
    ])?;
    let choices = client.complete(&prompt, config.k, config.temperature)?;

    let mut candidates: Vec<Candidate> = choices
        .iter()
        .enumerate()
        .map(|(idx, choice)| {
            let source = extract_program_text(&choice.text);
            Candidate {
                rank: idx as u32 + 1,
                score: choice.sum_logprob.unwrap_or(-(idx as f64 + 1.0)),
                parse_result: vpl::parse(&source),
                source,
            }
        })
        .collect();

    // Dedup by program hash, keeping the best-scoring copy.
    candidates.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut seen = std::collections::BTreeSet::new();
    candidates.retain(|c| seen.insert(c.dedup_hash()));

    Ok(CandidateSet::assemble(candidates))
}

/// Pull a program out of raw model text: strip code fences, start from
/// the function definition, or treat the text as a bare body (with its
/// indentation intact) emitted as a continuation of the prompt's `def`
/// line.
fn extract_program_text(text: &str) -> String {
    let mut body = text.trim_end();
    if body.trim_start().starts_with("```") {
        if let Some(pos) = body.find("```") {
            let after = &body[pos + 3..];
            let after = after.strip_prefix("python").unwrap_or(after);
            body = after.strip_prefix('\n').unwrap_or(after);
        }
    }
    if let Some(end) = body.find("```") {
        body = &body[..end];
    }
    let body = body.trim_start_matches('\n').trim_end();
    if let Some(pos) = body.find("def execute_command") {
        return body[pos..].trim_end().to_string();
    }
    // Continuation style: the prompt already printed the def line.
    format!("def execute_command(image):\n{body}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_query, generate_scene, QueryKind, SceneGenConfig};

    fn sample_for(seed: u64, kind: QueryKind) -> Option<GoldSample> {
        let scene = generate_scene(seed, &SceneGenConfig::default()).unwrap();
        generate_query(&scene, seed, kind).ok()
    }

    fn any_sample(seed: u64) -> GoldSample {
        for kind in QueryKind::ALL {
            if let Some(s) = sample_for(seed, kind) {
                return s;
            }
        }
        panic!("no sample for seed {seed}")
    }

    #[test]
    fn template_mode_returns_exactly_k_sorted_candidates() {
        let sample = any_sample(3);
        for k in [1usize, 2, 5, 8] {
            let config = GenConfig {
                k,
                seed: 3,
                ..GenConfig::default()
            };
            let set = generate_candidates(&sample, &config, None, None).unwrap();
            assert_eq!(set.len(), k);
            for (idx, c) in set.candidates.iter().enumerate() {
                assert_eq!(c.rank as usize, idx + 1);
                assert!(c.parse_result.is_ok(), "template candidate must parse");
            }
            for pair in set.candidates.windows(2) {
                assert!(pair[0].score > pair[1].score);
            }
        }
    }

    #[test]
    fn template_mode_is_deterministic() {
        let sample = any_sample(5);
        let config = GenConfig {
            seed: 9,
            ..GenConfig::default()
        };
        let a = generate_candidates(&sample, &config, None, None).unwrap();
        let b = generate_candidates(&sample, &config, None, None).unwrap();
        let hashes = |set: &CandidateSet| -> Vec<u64> {
            set.candidates.iter().map(Candidate::dedup_hash).collect()
        };
        assert_eq!(hashes(&a), hashes(&b));
    }

    #[test]
    fn canonical_is_always_present_for_k_at_least_two() {
        let sample = any_sample(7);
        let canonical_hash = vpl::parse(&canonical_program(&sample.query))
            .unwrap()
            .program_hash;
        for seed in 0..50 {
            let config = GenConfig {
                seed,
                corruption_rate: 0.9,
                ..GenConfig::default()
            };
            let set = generate_candidates(&sample, &config, None, None).unwrap();
            assert!(set
                .candidates
                .iter()
                .any(|c| c.dedup_hash() == canonical_hash));
        }
    }

    #[test]
    fn corruption_rate_controls_top1_canonical_probability() {
        let sample = any_sample(2);
        let canonical_hash = vpl::parse(&canonical_program(&sample.query))
            .unwrap()
            .program_hash;
        let rate = 0.3;
        let n = 2000;
        let mut canonical_first = 0u32;
        for seed in 0..n {
            let config = GenConfig {
                seed,
                corruption_rate: rate,
                ..GenConfig::default()
            };
            let set = generate_candidates(&sample, &config, None, None).unwrap();
            if set.rank1().unwrap().dedup_hash() == canonical_hash {
                canonical_first += 1;
            }
        }
        // Expect 1400 of 2000; 4-sigma band is about +/- 82.
        let expected = ((1.0 - rate) * n as f64) as i64;
        assert!(
            ((expected - 85)..=(expected + 85)).contains(&(canonical_first as i64)),
            "canonical-first count {canonical_first} outside the binomial band"
        );
    }

    #[test]
    fn k1_returns_the_single_top_candidate() {
        let sample = any_sample(4);
        let config = GenConfig {
            k: 1,
            seed: 1,
            corruption_rate: 0.0,
            ..GenConfig::default()
        };
        let set = generate_candidates(&sample, &config, None, None).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.rank1().unwrap().rank, 1);
        let canonical_hash = vpl::parse(&canonical_program(&sample.query))
            .unwrap()
            .program_hash;
        assert_eq!(set.rank1().unwrap().dedup_hash(), canonical_hash);
    }

    #[test]
    fn llm_mode_requires_a_client() {
        let sample = any_sample(6);
        let config = GenConfig {
            mode: GenMode::Llm,
            ..GenConfig::default()
        };
        assert!(matches!(
            generate_candidates(&sample, &config, None, None),
            Err(GenError::MissingClient)
        ));
    }

    #[test]
    fn llm_mode_deduplicates_identical_choices() {
        use crate::llm::{LlmClient, LlmConfig};
        use crate::mockhttp::MockHttp;

        let program = "def execute_command(image):\\n    return str(0)";
        let choice = format!(r#"{{"message": {{"content": "{program}"}}}}"#);
        let body = format!(
            r#"{{"choices": [{}]}}"#,
            vec![choice.as_str(); 5].join(",")
        );
        let server = MockHttp::serve(vec![(200, body)]);
        let client = LlmClient::new(LlmConfig {
            base_url: server.base_url(),
            model: "m".to_string(),
            api_key_env: String::new(),
            timeout_ms: 2000,
            request_logprobs: false,
        })
        .unwrap();
        let sample = any_sample(8);
        let config = GenConfig {
            mode: GenMode::Llm,
            ..GenConfig::default()
        };
        let set = generate_candidates(&sample, &config, Some(&client), Some("a scene")).unwrap();
        assert_eq!(set.len(), 1, "five identical sources dedup to one");
        assert!(set.candidates[0].parse_result.is_ok());
    }

    #[test]
    fn program_text_extraction_handles_fences_and_bodies() {
        let fenced = "```python\ndef execute_command(image):\n    return str(1)\n```";
        assert!(extract_program_text(fenced).starts_with("def execute_command"));
        let body_only = "    return str(1)";
        let extracted = extract_program_text(body_only);
        assert!(extracted.starts_with("def execute_command(image):\n"));
        assert!(vpl::parse(&extracted).is_ok());
        let chatty = "Here is the function:\ndef execute_command(image):\n    return str(2)";
        assert!(extract_program_text(chatty).starts_with("def execute_command"));
    }
}
