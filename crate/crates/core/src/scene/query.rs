//! Seeded query generation: produce labeled samples whose gold answers are
//! oracle-verified at construction time. Pairs that the scene cannot settle
//! cleanly (dead-zone centers, depth ties, missing referents) are rejected
//! rather than labeled.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::assets::Vocabulary;
use crate::english::pluralize;
use crate::seed::rng_for;

use super::{
    oracle_answer, GoldSample, SceneGraph, SpatialRelation, StructuredQuery, OPTION_LETTERS,
    DEPTH_TIE_EPSILON,
};

/// The query families [`generate_query`] can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryKind {
    Count,
    Exists,
    Attribute,
    Spatial,
    DepthCompare,
    MultiChoice,
}

impl QueryKind {
    pub const ALL: [QueryKind; 6] = [
        QueryKind::Count,
        QueryKind::Exists,
        QueryKind::Attribute,
        QueryKind::Spatial,
        QueryKind::DepthCompare,
        QueryKind::MultiChoice,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            QueryKind::Count => "count",
            QueryKind::Exists => "exists",
            QueryKind::Attribute => "attribute",
            QueryKind::Spatial => "spatial",
            QueryKind::DepthCompare => "depth_compare",
            QueryKind::MultiChoice => "multi_choice",
        }
    }
}

#[derive(Debug, Error)]
pub enum QueryGenError {
    #[error("scene {scene_id} cannot support a {kind} query")]
    NoViableQuery { scene_id: String, kind: String },
}

/// Generate a labeled sample of the requested kind.
pub fn generate_query(
    scene: &SceneGraph,
    seed: u64,
    kind: QueryKind,
) -> Result<GoldSample, QueryGenError> {
    let mut rng = rng_for(seed, &["query", &scene.scene_id, kind.as_str()]);
    let vocab = Vocabulary::bundled_static();
    let query = match kind {
        QueryKind::Count => gen_count(scene, vocab, &mut rng),
        QueryKind::Exists => gen_exists(scene, vocab, &mut rng),
        QueryKind::Attribute => gen_attribute(scene, vocab, &mut rng),
        QueryKind::Spatial => gen_spatial(scene, &mut rng),
        QueryKind::DepthCompare => gen_depth_compare(scene, &mut rng),
        QueryKind::MultiChoice => gen_multi_choice(scene, vocab, &mut rng),
    }
    .ok_or_else(|| QueryGenError::NoViableQuery {
        scene_id: scene.scene_id.clone(),
        kind: kind.as_str().to_string(),
    })?;

    let gold_answer = oracle_answer(scene, &query);
    debug_assert!(!gold_answer.is_empty());
    Ok(GoldSample {
        scene_id: scene.scene_id.clone(),
        query_text: render_query_text(&query),
        task: query.task(),
        gold_answer,
        query,
    })
}

/// Deterministic natural-language rendering of a query.
pub fn render_query_text(query: &StructuredQuery) -> String {
    match query {
        StructuredQuery::Count {
            category,
            attributes,
        } => {
            let noun = pluralize(category);
            if attributes.is_empty() {
                format!("How many {noun} are in the picture?")
            } else {
                format!("How many {} {noun} are in the picture?", attributes.join(" "))
            }
        }
        StructuredQuery::Exists { category } => {
            format!(
                "Is there {} {category} in the picture?",
                crate::english::article(category)
            )
        }
        StructuredQuery::Attribute {
            category,
            attribute_class,
        } => format!("What {attribute_class} is the {category}?"),
        StructuredQuery::Spatial {
            relation,
            subject,
            object,
        } => format!("Is the {subject} {} the {object}?", relation.phrase()),
        StructuredQuery::DepthCompare { left, right } => {
            format!("Which is closer to the camera, the {left} or the {right}?")
        }
        StructuredQuery::MultiChoice { inner, options } => {
            let mut text = render_query_text(inner);
            for (idx, option) in options.iter().enumerate() {
                text.push_str(&format!(" ({}) {option}", OPTION_LETTERS[idx]));
            }
            text
        }
    }
}

/// Categories present in the scene, deduplicated, in sorted order.
fn present_categories(scene: &SceneGraph) -> Vec<String> {
    let mut cats: Vec<String> = scene.objects.iter().map(|o| o.category.clone()).collect();
    cats.sort();
    cats.dedup();
    cats
}

/// Categories appearing exactly once, sorted.
fn unique_categories(scene: &SceneGraph) -> Vec<String> {
    present_categories(scene)
        .into_iter()
        .filter(|c| scene.objects_of_category(c).count() == 1)
        .collect()
}

fn absent_categories(scene: &SceneGraph, vocab: &Vocabulary) -> Vec<String> {
    let present = present_categories(scene);
    vocab
        .categories
        .iter()
        .filter(|c| !present.contains(c))
        .cloned()
        .collect()
}

fn gen_count(
    scene: &SceneGraph,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
) -> Option<StructuredQuery> {
    let present = present_categories(scene);
    // Attribute-filtered counts need a present category with at least one
    // attributed object.
    let attr_candidates: Vec<(String, Vec<String>)> = present
        .iter()
        .filter_map(|cat| {
            let mut attrs: Vec<String> = scene
                .objects_of_category(cat)
                .flat_map(|o| o.attributes.iter().cloned())
                .collect();
            attrs.sort();
            attrs.dedup();
            (!attrs.is_empty()).then(|| (cat.clone(), attrs))
        })
        .collect();

    let want_attr = rng.gen_bool(0.5) && !attr_candidates.is_empty();
    if want_attr {
        let (category, attrs) = attr_candidates.choose(rng)?.clone();
        let attribute = attrs.choose(rng)?.clone();
        return Some(StructuredQuery::Count {
            category,
            attributes: vec![attribute],
        });
    }

    let absent = absent_categories(scene, vocab);
    let pick_absent = rng.gen_bool(0.2) && !absent.is_empty();
    let category = if pick_absent {
        absent.choose(rng)?.clone()
    } else if !present.is_empty() {
        present.choose(rng)?.clone()
    } else {
        absent.choose(rng)?.clone()
    };
    Some(StructuredQuery::Count {
        category,
        attributes: vec![],
    })
}

fn gen_exists(
    scene: &SceneGraph,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
) -> Option<StructuredQuery> {
    let present = present_categories(scene);
    let absent = absent_categories(scene, vocab);
    let pick_present = if present.is_empty() {
        false
    } else if absent.is_empty() {
        true
    } else {
        rng.gen_bool(0.5)
    };
    let pool = if pick_present { &present } else { &absent };
    Some(StructuredQuery::Exists {
        category: pool.choose(rng)?.clone(),
    })
}

fn gen_attribute(
    scene: &SceneGraph,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
) -> Option<StructuredQuery> {
    let candidates: Vec<String> = unique_categories(scene)
        .into_iter()
        .filter(|cat| {
            scene.first_of_category(cat).is_some_and(|obj| {
                obj.attributes
                    .iter()
                    .any(|a| vocab.class_of(a) == Some("color"))
            })
        })
        .collect();
    Some(StructuredQuery::Attribute {
        category: candidates.choose(rng)?.clone(),
        attribute_class: "color".to_string(),
    })
}

fn gen_spatial(scene: &SceneGraph, rng: &mut ChaCha8Rng) -> Option<StructuredQuery> {
    let unique = unique_categories(scene);
    let mut candidates = Vec::new();
    for subject in &unique {
        for object in &unique {
            if subject == object {
                continue;
            }
            for relation in SpatialRelation::ALL {
                let query = StructuredQuery::Spatial {
                    relation,
                    subject: subject.clone(),
                    object: object.clone(),
                };
                if oracle_answer(scene, &query) != "ambiguous" {
                    candidates.push(query);
                }
            }
        }
    }
    candidates.choose(rng).cloned()
}

fn gen_depth_compare(scene: &SceneGraph, rng: &mut ChaCha8Rng) -> Option<StructuredQuery> {
    let unique = unique_categories(scene);
    let mut candidates = Vec::new();
    for left in &unique {
        for right in &unique {
            if left >= right {
                continue;
            }
            let (a, b) = (
                scene.first_of_category(left)?,
                scene.first_of_category(right)?,
            );
            if (a.depth - b.depth).abs() < DEPTH_TIE_EPSILON {
                continue;
            }
            candidates.push(StructuredQuery::DepthCompare {
                left: left.clone(),
                right: right.clone(),
            });
        }
    }
    candidates.choose(rng).cloned()
}

fn gen_multi_choice(
    scene: &SceneGraph,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
) -> Option<StructuredQuery> {
    let mut inners = Vec::new();
    if let Some(q) = gen_attribute(scene, vocab, rng) {
        inners.push(q);
    }
    if let Some(q) = gen_depth_compare(scene, rng) {
        inners.push(q);
    }
    let inner = inners.choose(rng)?.clone();
    let correct = oracle_answer(scene, &inner);

    let distractor_pool: Vec<String> = match &inner {
        StructuredQuery::Attribute { .. } => vocab
            .attributes_in_class("color")
            .iter()
            .filter(|c| **c != correct)
            .cloned()
            .collect(),
        StructuredQuery::DepthCompare { left, right } => {
            // The farther category first, then unrelated categories.
            let farther = if correct == *left { right } else { left };
            let mut pool = vec![farther.clone()];
            pool.extend(
                vocab
                    .categories
                    .iter()
                    .filter(|c| **c != correct && *c != farther)
                    .cloned(),
            );
            pool
        }
        _ => return None,
    };
    if distractor_pool.is_empty() {
        return None;
    }

    let n_options = rng.gen_range(2..=4usize).min(1 + distractor_pool.len());
    let mut options: Vec<String> = vec![correct];
    // For depth questions always include the competing category.
    options.extend(distractor_pool.iter().take(n_options - 1).cloned());
    options.shuffle(rng);

    Some(StructuredQuery::MultiChoice {
        inner: Box::new(inner),
        options,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, BoundingBox, SceneGenConfig, SceneObject, TaskKind};
    use std::collections::BTreeSet;

    fn single_object_scene() -> SceneGraph {
        let scene = SceneGraph {
            scene_id: "s_one".to_string(),
            width: 1000,
            height: 1000,
            objects: vec![SceneObject {
                object_id: "o0".to_string(),
                category: "dog".to_string(),
                bbox: BoundingBox::new(10.0, 10.0, 200.0, 200.0).unwrap(),
                attributes: BTreeSet::from(["brown".to_string()]),
                depth: 0.4,
            }],
            relations: vec![],
        };
        scene.validate().unwrap();
        scene
    }

    #[test]
    fn spatial_on_single_object_scene_is_rejected() {
        let scene = single_object_scene();
        assert!(matches!(
            generate_query(&scene, 0, QueryKind::Spatial),
            Err(QueryGenError::NoViableQuery { .. })
        ));
        assert!(matches!(
            generate_query(&scene, 0, QueryKind::DepthCompare),
            Err(QueryGenError::NoViableQuery { .. })
        ));
    }

    #[test]
    fn generated_gold_matches_oracle_for_all_kinds() {
        let config = SceneGenConfig::default();
        let mut produced = 0usize;
        for seed in 0..40u64 {
            let scene = generate_scene(seed, &config).unwrap();
            for kind in QueryKind::ALL {
                let Ok(sample) = generate_query(&scene, seed * 31 + 1, kind) else {
                    continue;
                };
                produced += 1;
                assert_eq!(sample.gold_answer, oracle_answer(&scene, &sample.query));
                assert!(!sample.gold_answer.is_empty());
                assert_ne!(sample.gold_answer, "ambiguous");
                assert_ne!(sample.gold_answer, "unknown");
                assert!(!sample.query_text.is_empty());
            }
        }
        assert!(produced > 100, "only {produced} samples produced");
    }

    #[test]
    fn generation_is_deterministic() {
        let scene = generate_scene(3, &SceneGenConfig::default()).unwrap();
        for kind in QueryKind::ALL {
            let a = generate_query(&scene, 11, kind).ok();
            let b = generate_query(&scene, 11, kind).ok();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn multi_choice_has_two_to_four_options_with_one_correct() {
        let config = SceneGenConfig::default();
        for seed in 0..60u64 {
            let scene = generate_scene(seed, &config).unwrap();
            let Ok(sample) = generate_query(&scene, seed, QueryKind::MultiChoice) else {
                continue;
            };
            let StructuredQuery::MultiChoice { inner, options } = &sample.query else {
                panic!("wrong kind");
            };
            assert!((2..=4).contains(&options.len()));
            assert_eq!(sample.task, TaskKind::MultipleChoice);
            let correct = oracle_answer(&scene, inner);
            let matches = options.iter().filter(|o| **o == correct).count();
            assert_eq!(matches, 1, "exactly one correct option");
            let letter_idx = OPTION_LETTERS
                .iter()
                .position(|l| *l == sample.gold_answer)
                .expect("gold is a letter");
            assert_eq!(options[letter_idx], correct);
        }
    }

    #[test]
    fn count_query_text_renders_attributes() {
        let q = StructuredQuery::Count {
            category: "bus".to_string(),
            attributes: vec!["yellow".to_string()],
        };
        assert_eq!(
            render_query_text(&q),
            "How many yellow buses are in the picture?"
        );
        let q = StructuredQuery::Count {
            category: "tennis ball".to_string(),
            attributes: vec![],
        };
        assert_eq!(
            render_query_text(&q),
            "How many tennis balls are in the picture?"
        );
    }

    #[test]
    fn task_assignment_follows_kind() {
        let scene = generate_scene(5, &SceneGenConfig::default()).unwrap();
        if let Ok(s) = generate_query(&scene, 1, QueryKind::Count) {
            assert_eq!(s.task, TaskKind::Counting);
        }
        if let Ok(s) = generate_query(&scene, 1, QueryKind::Exists) {
            assert_eq!(s.task, TaskKind::VqaFreeform);
        }
    }
}
