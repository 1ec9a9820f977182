//! Deterministic template enumerator: builds the canonical program for a
//! structured query plus parameterized corrupted variants that simulate
//! LLM error modes (dropped filters, wrong targets, spurious steps,
//! off-by-one aggregation).
//!
//! The canonical program is guaranteed to return the gold answer under
//! zero-noise oracle tools; variants are built to answer differently, but
//! their actual outcomes depend on the scene and are left to execution.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::assets::Vocabulary;
use crate::scene::{GoldSample, SpatialRelation, StructuredQuery, OPTION_LETTERS};

/// How a variant deviates from the canonical program. Parameters are part
/// of the descriptor so outcomes can be reasoned about analytically.
#[derive(Debug, Clone, PartialEq)]
pub enum VariantKind {
    Canonical,
    /// Counting without the attribute filter.
    DroppedFilter,
    /// Filter on a different property.
    WrongProperty { property: String },
    /// Adds the count of an unrelated category.
    SpuriousCount { category: String },
    /// Shifts the final count.
    OffByK { delta: i64 },
    /// Targets a different category.
    WrongCategory { category: String },
    /// Adds an attribute filter the question never asked for.
    AddedFilter { property: String },
    /// Negates an existence answer.
    Negated,
    /// Returns a constant string.
    ConstantAnswer { answer: String },
    /// Existence decided by count > 1 instead of > 0.
    ThresholdTwo,
    /// Asks the category question instead of the attribute question.
    WrongQuestion,
    /// Indexes past the end of the detection list.
    IndexBeyond { index: i64 },
    /// Comparison operator inverted.
    FlippedComparison,
    /// Comparison operands swapped (returns unchanged).
    SwappedOperands,
    /// Compares the wrong axis for the spatial relation.
    WrongAxis,
    /// Compares against an unrelated category.
    WrongPair { category: String },
    /// Option letters rotated by `by`.
    LetterShift { by: usize },
    /// Option letters reversed.
    ReversedOptions,
    /// Returns a fixed (incorrect) option letter.
    ConstantLetter { letter: String },
    /// Multi-choice with the inner question corrupted.
    InnerWrongQuestion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateCandidate {
    pub kind: VariantKind,
    pub source: String,
}

/// The canonical program plus `n_variants` corrupted variants for a
/// sample, deterministic in `rng`.
pub fn template_catalog(
    sample: &GoldSample,
    rng: &mut ChaCha8Rng,
    n_variants: usize,
) -> Vec<TemplateCandidate> {
    let vocab = Vocabulary::bundled_static();
    let mut catalog = vec![TemplateCandidate {
        kind: VariantKind::Canonical,
        source: canonical_program(&sample.query),
    }];
    let base = base_variants(sample, vocab, rng);
    for i in 0..n_variants {
        let kind = if i < base.len() {
            base[i].clone()
        } else {
            extra_variant(sample, vocab, rng, i)
        };
        let source = variant_program(&sample.query, &kind);
        catalog.push(TemplateCandidate { kind, source });
    }
    catalog
}

/// The canonical program for a query.
pub fn canonical_program(query: &StructuredQuery) -> String {
    variant_program(query, &VariantKind::Canonical)
}

// ── Variant selection ─────────────────────────────────────────────────

fn pick_other(pool: &[String], exclude: &[&str], rng: &mut ChaCha8Rng) -> String {
    let others: Vec<&String> = pool
        .iter()
        .filter(|v| !exclude.contains(&v.as_str()))
        .collect();
    match others.choose(rng) {
        Some(v) => (*v).clone(),
        None => pool.first().cloned().unwrap_or_default(),
    }
}

fn all_attributes(vocab: &Vocabulary) -> Vec<String> {
    vocab.all_attributes().map(str::to_string).collect()
}

/// The four standard error modes for each query family.
fn base_variants(
    sample: &GoldSample,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
) -> Vec<VariantKind> {
    let gold = sample.gold_answer.as_str();
    match &sample.query {
        StructuredQuery::Count {
            category,
            attributes,
        } => {
            if attributes.is_empty() {
                vec![
                    VariantKind::WrongCategory {
                        category: pick_other(&vocab.categories, &[category], rng),
                    },
                    VariantKind::OffByK { delta: 1 },
                    VariantKind::SpuriousCount {
                        category: pick_other(&vocab.categories, &[category], rng),
                    },
                    VariantKind::AddedFilter {
                        property: pick_other(&all_attributes(vocab), &[], rng),
                    },
                ]
            } else {
                let excluded: Vec<&str> = attributes.iter().map(String::as_str).collect();
                vec![
                    VariantKind::DroppedFilter,
                    VariantKind::WrongProperty {
                        property: pick_other(&all_attributes(vocab), &excluded, rng),
                    },
                    VariantKind::SpuriousCount {
                        category: pick_other(&vocab.categories, &[category], rng),
                    },
                    VariantKind::OffByK { delta: 1 },
                ]
            }
        }
        StructuredQuery::Exists { category } => vec![
            VariantKind::Negated,
            VariantKind::WrongCategory {
                category: pick_other(&vocab.categories, &[category], rng),
            },
            VariantKind::ConstantAnswer {
                answer: (if gold == "yes" { "no" } else { "yes" }).to_string(),
            },
            VariantKind::ThresholdTwo,
        ],
        StructuredQuery::Attribute { category, .. } => vec![
            VariantKind::WrongQuestion,
            VariantKind::ConstantAnswer {
                answer: pick_other(vocab.attributes_in_class("color"), &[gold], rng),
            },
            VariantKind::WrongCategory {
                category: pick_other(&vocab.categories, &[category], rng),
            },
            VariantKind::IndexBeyond {
                index: rng.gen_range(3..8),
            },
        ],
        StructuredQuery::Spatial { .. } => vec![
            VariantKind::FlippedComparison,
            VariantKind::SwappedOperands,
            VariantKind::ConstantAnswer {
                answer: (if gold == "yes" { "no" } else { "yes" }).to_string(),
            },
            VariantKind::WrongAxis,
        ],
        StructuredQuery::DepthCompare { left, right } => {
            let farther = if gold == left.as_str() { right } else { left };
            vec![
                VariantKind::FlippedComparison,
                VariantKind::ConstantAnswer {
                    answer: farther.clone(),
                },
                VariantKind::WrongPair {
                    category: pick_other(&vocab.categories, &[left, right], rng),
                },
                VariantKind::SwappedOperands,
            ]
        }
        StructuredQuery::MultiChoice { options, .. } => {
            let wrong_letters: Vec<String> = OPTION_LETTERS
                .iter()
                .take(options.len())
                .map(|l| l.to_string())
                .filter(|l| l != gold)
                .collect();
            vec![
                VariantKind::LetterShift { by: 1 },
                VariantKind::ReversedOptions,
                VariantKind::ConstantLetter {
                    letter: wrong_letters.first().cloned().unwrap_or_else(|| "A".to_string()),
                },
                VariantKind::InnerWrongQuestion,
            ]
        }
    }
}

/// Additional variants past the standard four, for k > 5.
fn extra_variant(
    sample: &GoldSample,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
    index: usize,
) -> VariantKind {
    match &sample.query {
        StructuredQuery::Count { .. } => VariantKind::OffByK {
            delta: index as i64 - 2,
        },
        StructuredQuery::Exists { category }
        | StructuredQuery::Attribute { category, .. } => VariantKind::WrongCategory {
            category: pick_other(&vocab.categories, &[category], rng),
        },
        StructuredQuery::Spatial { subject, object, .. } => VariantKind::WrongPair {
            category: pick_other(&vocab.categories, &[subject, object], rng),
        },
        StructuredQuery::DepthCompare { left, right } => VariantKind::WrongPair {
            category: pick_other(&vocab.categories, &[left, right], rng),
        },
        StructuredQuery::MultiChoice { options, .. } => VariantKind::LetterShift {
            by: 1 + index % options.len().max(1),
        },
    }
}

// ── Program builders ──────────────────────────────────────────────────

fn quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn spatial_axis_op(relation: SpatialRelation) -> (&'static str, &'static str) {
    match relation {
        SpatialRelation::LeftOf => ("center_x", "<"),
        SpatialRelation::RightOf => ("center_x", ">"),
        SpatialRelation::Above => ("center_y", "<"),
        SpatialRelation::Below => ("center_y", ">"),
    }
}

fn flip(op: &str) -> &'static str {
    if op == "<" {
        ">"
    } else {
        "<"
    }
}

/// Counting program with an optional verify filter, spurious extra count,
/// and final shift.
fn count_program(
    category: &str,
    properties: &[String],
    spurious: Option<&str>,
    delta: i64,
) -> String {
    let mut out = String::from("def execute_command(image):\n");
    let mut tail = String::new();
    if properties.is_empty() {
        out.push_str(&format!(
            "    patches = image.find({})\n",
            quoted(category)
        ));
        tail.push_str("len(patches)");
    } else {
        let condition = properties
            .iter()
            .map(|p| format!("patch.verify_property({}, {})", quoted(category), quoted(p)))
            .collect::<Vec<_>>()
            .join(" and ");
        out.push_str("    count = 0\n");
        out.push_str(&format!(
            "    patches = image.find({})\n",
            quoted(category)
        ));
        out.push_str("    for patch in patches:\n");
        out.push_str(&format!("        if {condition}:\n"));
        out.push_str("            count += 1\n");
        tail.push_str("count");
    }
    if let Some(extra) = spurious {
        out.push_str(&format!("    extras = image.find({})\n", quoted(extra)));
        tail.push_str(" + len(extras)");
    }
    match delta.cmp(&0) {
        std::cmp::Ordering::Greater => tail.push_str(&format!(" + {delta}")),
        std::cmp::Ordering::Less => tail.push_str(&format!(" - {}", -delta)),
        std::cmp::Ordering::Equal => {}
    }
    out.push_str(&format!("    return str({tail})\n"));
    out
}

fn exists_program(category: &str, negated: bool, threshold_two: bool) -> String {
    if threshold_two {
        return format!(
            "def execute_command(image):\n    patches = image.find({})\n    return bool_to_yesno(len(patches) > 1)\n",
            quoted(category)
        );
    }
    let inner = if negated {
        format!("not image.exists({})", quoted(category))
    } else {
        format!("image.exists({})", quoted(category))
    };
    format!("def execute_command(image):\n    return bool_to_yesno({inner})\n")
}

fn constant_program(answer: &str) -> String {
    format!("def execute_command(image):\n    return {}\n", quoted(answer))
}

fn attribute_program(category: &str, question: &str, index: i64) -> String {
    format!(
        "def execute_command(image):\n    patches = image.find({})\n    return patches[{index}].simple_query({})\n",
        quoted(category),
        quoted(question)
    )
}

fn spatial_program(
    subject: &str,
    object: &str,
    axis: &str,
    op: &str,
    swapped_operands: bool,
) -> String {
    let (lhs, rhs) = if swapped_operands {
        ("second", "first")
    } else {
        ("first", "second")
    };
    format!(
        "def execute_command(image):\n    first = image.find({})[0]\n    second = image.find({})[0]\n    if {lhs}.{axis} {op} {rhs}.{axis}:\n        return \"yes\"\n    return \"no\"\n",
        quoted(subject),
        quoted(object)
    )
}

fn depth_program(left: &str, right: &str, op: &str, swapped_operands: bool) -> String {
    let (lhs, rhs) = if swapped_operands {
        ("second", "first")
    } else {
        ("first", "second")
    };
    format!(
        "def execute_command(image):\n    first = image.find({})[0]\n    second = image.find({})[0]\n    if {lhs}.compute_depth() {op} {rhs}.compute_depth():\n        return {}\n    return {}\n",
        quoted(left),
        quoted(right),
        quoted(left),
        quoted(right)
    )
}

/// Inner computation producing `value`, then an if/elif ladder mapping
/// option values to letters. `letter_map[i]` is the letter index returned
/// when `options[i]` matches; the fallback is the last arm's letter.
fn multi_choice_program(
    inner: &StructuredQuery,
    options: &[String],
    letter_map: &[usize],
    inner_wrong_question: bool,
) -> String {
    let mut out = String::from("def execute_command(image):\n");
    match inner {
        StructuredQuery::Attribute { category, .. } => {
            let question = if inner_wrong_question {
                "What is this?"
            } else {
                "What color is this?"
            };
            out.push_str(&format!(
                "    patches = image.find({})\n    value = patches[0].simple_query({})\n",
                quoted(category),
                quoted(question)
            ));
        }
        StructuredQuery::DepthCompare { left, right } => {
            let op = if inner_wrong_question { ">" } else { "<" };
            out.push_str(&format!(
                "    first = image.find({})[0]\n    second = image.find({})[0]\n    if first.compute_depth() {op} second.compute_depth():\n        value = {}\n    else:\n        value = {}\n",
                quoted(left),
                quoted(right),
                quoted(left),
                quoted(right)
            ));
        }
        other => {
            // Query generation only wraps attribute/depth questions; fall
            // back to the inner canonical answer ladder over raw options.
            let _ = other;
            out.push_str("    value = image.simple_query(\"What is this?\")\n");
        }
    }
    for (idx, option) in options.iter().enumerate() {
        let kw = if idx == 0 { "if" } else { "elif" };
        let letter = OPTION_LETTERS[letter_map[idx]];
        out.push_str(&format!(
            "    {kw} value == {}:\n        return {}\n",
            quoted(option),
            quoted(letter)
        ));
    }
    let fallback = OPTION_LETTERS[letter_map[options.len() - 1]];
    out.push_str(&format!("    return {}\n", quoted(fallback)));
    out
}

/// Render the program for a (query, variant) pair.
pub fn variant_program(query: &StructuredQuery, kind: &VariantKind) -> String {
    if let VariantKind::ConstantAnswer { answer } = kind {
        return constant_program(answer);
    }
    if let VariantKind::ConstantLetter { letter } = kind {
        return constant_program(letter);
    }
    match query {
        StructuredQuery::Count {
            category,
            attributes,
        } => match kind {
            VariantKind::Canonical => count_program(category, attributes, None, 0),
            VariantKind::DroppedFilter => count_program(category, &[], None, 0),
            VariantKind::WrongProperty { property } => {
                count_program(category, std::slice::from_ref(property), None, 0)
            }
            VariantKind::SpuriousCount { category: extra } => {
                count_program(category, attributes, Some(extra), 0)
            }
            VariantKind::OffByK { delta } => count_program(category, attributes, None, *delta),
            VariantKind::WrongCategory { category: wrong } => {
                count_program(wrong, attributes, None, 0)
            }
            VariantKind::AddedFilter { property } => {
                count_program(category, std::slice::from_ref(property), None, 0)
            }
            other => unreachable!("{other:?} is not a counting variant"),
        },
        StructuredQuery::Exists { category } => match kind {
            VariantKind::Canonical => exists_program(category, false, false),
            VariantKind::Negated => exists_program(category, true, false),
            VariantKind::ThresholdTwo => exists_program(category, false, true),
            VariantKind::WrongCategory { category: wrong } => {
                exists_program(wrong, false, false)
            }
            other => unreachable!("{other:?} is not an existence variant"),
        },
        StructuredQuery::Attribute { category, .. } => match kind {
            VariantKind::Canonical => attribute_program(category, "What color is this?", 0),
            VariantKind::WrongQuestion => attribute_program(category, "What is this?", 0),
            VariantKind::WrongCategory { category: wrong } => {
                attribute_program(wrong, "What color is this?", 0)
            }
            VariantKind::IndexBeyond { index } => {
                attribute_program(category, "What color is this?", *index)
            }
            other => unreachable!("{other:?} is not an attribute variant"),
        },
        StructuredQuery::Spatial {
            relation,
            subject,
            object,
        } => {
            let (axis, op) = spatial_axis_op(*relation);
            match kind {
                VariantKind::Canonical => spatial_program(subject, object, axis, op, false),
                VariantKind::FlippedComparison => {
                    spatial_program(subject, object, axis, flip(op), false)
                }
                VariantKind::SwappedOperands => spatial_program(subject, object, axis, op, true),
                VariantKind::WrongAxis => {
                    let other_axis = if axis == "center_x" {
                        "center_y"
                    } else {
                        "center_x"
                    };
                    spatial_program(subject, object, other_axis, op, false)
                }
                VariantKind::WrongPair { category } => {
                    spatial_program(subject, category, axis, op, false)
                }
                other => unreachable!("{other:?} is not a spatial variant"),
            }
        }
        StructuredQuery::DepthCompare { left, right } => match kind {
            VariantKind::Canonical => depth_program(left, right, "<", false),
            VariantKind::FlippedComparison => depth_program(left, right, ">", false),
            VariantKind::SwappedOperands => depth_program(left, right, "<", true),
            VariantKind::WrongPair { category } => depth_program(left, category, "<", false),
            other => unreachable!("{other:?} is not a depth variant"),
        },
        StructuredQuery::MultiChoice { inner, options } => {
            let identity: Vec<usize> = (0..options.len()).collect();
            match kind {
                VariantKind::Canonical => {
                    multi_choice_program(inner, options, &identity, false)
                }
                VariantKind::LetterShift { by } => {
                    let map: Vec<usize> =
                        (0..options.len()).map(|i| (i + by) % options.len()).collect();
                    multi_choice_program(inner, options, &map, false)
                }
                VariantKind::ReversedOptions => {
                    let map: Vec<usize> = (0..options.len()).rev().collect();
                    multi_choice_program(inner, options, &map, false)
                }
                VariantKind::InnerWrongQuestion => {
                    multi_choice_program(inner, options, &identity, true)
                }
                other => unreachable!("{other:?} is not a multi-choice variant"),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_query, generate_scene, QueryKind, SceneGenConfig};
    use crate::seed::rng_for;
    use crate::vpl;

    #[test]
    fn every_catalog_program_parses() {
        let config = SceneGenConfig::default();
        let mut checked = 0usize;
        for seed in 0..30u64 {
            let scene = generate_scene(seed, &config).unwrap();
            for kind in QueryKind::ALL {
                let Ok(sample) = generate_query(&scene, seed, kind) else {
                    continue;
                };
                let mut rng = rng_for(7, &["params", &scene.scene_id]);
                for candidate in template_catalog(&sample, &mut rng, 6) {
                    vpl::parse(&candidate.source).unwrap_or_else(|e| {
                        panic!(
                            "{:?} program for {:?} does not parse: {e}\n{}",
                            candidate.kind, sample.query, candidate.source
                        )
                    });
                    checked += 1;
                }
            }
        }
        assert!(checked > 300, "only {checked} programs checked");
    }

    #[test]
    fn canonical_counting_program_matches_reference_shape() {
        let query = StructuredQuery::Count {
            category: "bus".to_string(),
            attributes: vec!["yellow".to_string()],
        };
        let expected = "def execute_command(image):\n    count = 0\n    patches = image.find(\"bus\")\n    for patch in patches:\n        if patch.verify_property(\"bus\", \"yellow\"):\n            count += 1\n    return str(count)\n";
        assert_eq!(canonical_program(&query), expected);
    }

    #[test]
    fn variants_differ_from_canonical() {
        let config = SceneGenConfig::default();
        let scene = generate_scene(11, &config).unwrap();
        for kind in QueryKind::ALL {
            let Ok(sample) = generate_query(&scene, 3, kind) else {
                continue;
            };
            let mut rng = rng_for(7, &["params", &scene.scene_id]);
            let catalog = template_catalog(&sample, &mut rng, 4);
            let canonical_hash = vpl::parse(&catalog[0].source).unwrap().program_hash;
            for variant in &catalog[1..] {
                let hash = vpl::parse(&variant.source).unwrap().program_hash;
                assert_ne!(
                    hash, canonical_hash,
                    "variant {:?} collides with canonical for {kind:?}",
                    variant.kind
                );
            }
        }
    }
}
