//! Scene-graph oracle backend: answers every tool call exactly from the
//! annotated scene, then corrupts the answer according to the seeded
//! noise configuration. With all probabilities zero this is the ground
//! truth the rest of the pipeline is verified against.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::assets::{KnowledgeTable, Vocabulary};
use crate::english::pluralize;
use crate::interp::{PatchHandle, Value};
use crate::scene::{BoundingBox, SceneGraph, SceneObject};
use crate::seed::rng_for;

use super::{NoiseConfig, ToolBackend, ToolError, VisualInput};

pub struct OracleBackend {
    noise: NoiseConfig,
    knowledge: KnowledgeTable,
}

impl OracleBackend {
    pub fn new(noise: NoiseConfig) -> Self {
        Self {
            noise,
            knowledge: KnowledgeTable::bundled(),
        }
    }

    pub fn with_knowledge(noise: NoiseConfig, knowledge: KnowledgeTable) -> Self {
        Self { noise, knowledge }
    }
}

impl ToolBackend for OracleBackend {
    fn call(
        &self,
        input: &VisualInput,
        call_index: u32,
        tool: &str,
        receiver: &PatchHandle,
        args: &[Value],
    ) -> Result<Value, ToolError> {
        let VisualInput::Scene(scene) = input else {
            return Err(ToolError::Backend(
                "oracle backend requires a scene-graph input".to_string(),
            ));
        };
        // Per-call rng: independent of evaluation order and worker count.
        let mut rng = rng_for(
            self.noise.seed,
            &["tool", &scene.scene_id, tool, &call_index.to_string()],
        );
        match tool {
            "find" => {
                let category = expect_str(tool, args, 0)?;
                Ok(Value::PatchList(self.find(
                    scene, receiver, category, call_index, &mut rng,
                )))
            }
            "exists" => {
                let category = expect_str(tool, args, 0)?;
                let found = self.find(scene, receiver, category, call_index, &mut rng);
                Ok(Value::Bool(!found.is_empty()))
            }
            "verify_property" => {
                let category = expect_str(tool, args, 0)?;
                let property = expect_str(tool, args, 1)?;
                Ok(Value::Bool(self.verify_property(
                    scene, receiver, category, property, &mut rng,
                )))
            }
            "simple_query" => {
                let question = expect_str(tool, args, 0)?;
                Ok(Value::Str(self.simple_query(
                    scene, receiver, question, &mut rng,
                )))
            }
            "compute_depth" => Ok(Value::Float(self.compute_depth(scene, receiver, &mut rng))),
            "llm_query" => {
                let question = expect_str(tool, args, 0)?;
                Ok(Value::Str(self.knowledge.answer(question).to_string()))
            }
            other => Err(ToolError::Backend(format!(
                "oracle backend has no tool {other:?}"
            ))),
        }
    }
}

fn expect_str<'a>(tool: &str, args: &'a [Value], idx: usize) -> Result<&'a str, ToolError> {
    match args.get(idx) {
        Some(Value::Str(s)) => Ok(s),
        other => Err(ToolError::BadArgs(format!(
            "{tool} argument {idx} must be a string, got {:?}",
            other.map(Value::type_name)
        ))),
    }
}

fn center_in(bbox: &BoundingBox, region: &BoundingBox) -> bool {
    region.contains_point(bbox.center_x(), bbox.center_y())
}

impl OracleBackend {
    /// Objects of the category whose box center lies in the receiver
    /// region, left-to-right by x1 then y1. Misses and spurious boxes per
    /// the noise configuration; unknown categories yield an empty list.
    fn find(
        &self,
        scene: &SceneGraph,
        receiver: &PatchHandle,
        category: &str,
        call_index: u32,
        rng: &mut ChaCha8Rng,
    ) -> Vec<PatchHandle> {
        let region = &receiver.bbox;
        let mut patches = Vec::new();
        for obj in scene.objects_of_category(category) {
            if !center_in(&obj.bbox, region) {
                continue;
            }
            // One draw per true object, even at p_miss == 0, keeps the
            // stream aligned across noise settings.
            let dropped = rng.gen::<f64>() < self.noise.p_miss;
            if dropped {
                continue;
            }
            let clipped = obj
                .bbox
                .intersect(region)
                .expect("center inside region implies overlap");
            patches.push(PatchHandle {
                patch_id: format!("p_{}", obj.object_id),
                scene_ref: scene.scene_id.clone(),
                bbox: clipped,
                image_width: scene.width,
                image_height: scene.height,
                object_id: Some(obj.object_id.clone()),
            });
        }
        if rng.gen::<f64>() < self.noise.p_false_positive {
            if let Some(bbox) = random_sub_box(region, rng) {
                patches.push(PatchHandle {
                    patch_id: format!("spurious_{call_index}"),
                    scene_ref: scene.scene_id.clone(),
                    bbox,
                    image_width: scene.width,
                    image_height: scene.height,
                    object_id: None,
                });
            }
        }
        patches.sort_by(|a, b| {
            a.bbox
                .x1
                .partial_cmp(&b.bbox.x1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(
                    a.bbox
                        .y1
                        .partial_cmp(&b.bbox.y1)
                        .unwrap_or(std::cmp::Ordering::Equal),
                )
        });
        patches
    }

    /// True iff the patch's object carries the property, flipped with
    /// p_attr_flip. Spurious detections answer false.
    fn verify_property(
        &self,
        scene: &SceneGraph,
        patch: &PatchHandle,
        category: &str,
        property: &str,
        rng: &mut ChaCha8Rng,
    ) -> bool {
        let truth = if patch.patch_id.starts_with("spurious_") {
            false
        } else {
            self.resolve_object(scene, patch, Some(category))
                .map(|obj| obj.attributes.contains(property))
                .unwrap_or(false)
        };
        let flip = rng.gen::<f64>() < self.noise.p_attr_flip;
        truth != flip
    }

    /// The object a patch refers to: its linked object, or the best
    /// category/area match whose center lies inside the patch.
    fn resolve_object<'s>(
        &self,
        scene: &'s SceneGraph,
        patch: &PatchHandle,
        category: Option<&str>,
    ) -> Option<&'s SceneObject> {
        if let Some(id) = &patch.object_id {
            return scene.object(id);
        }
        let mut best: Option<&SceneObject> = None;
        for obj in &scene.objects {
            if let Some(cat) = category {
                if obj.category != cat {
                    continue;
                }
            }
            if !center_in(&obj.bbox, &patch.bbox) {
                continue;
            }
            let area = obj.bbox.width() * obj.bbox.height();
            if best.map_or(true, |b| area > b.bbox.width() * b.bbox.height()) {
                best = Some(obj);
            }
        }
        best
    }

    fn simple_query(
        &self,
        scene: &SceneGraph,
        patch: &PatchHandle,
        question: &str,
        rng: &mut ChaCha8Rng,
    ) -> String {
        let answer = self.answer_question(scene, patch, question);
        let corrupt = rng.gen::<f64>() < self.noise.p_vqa_error;
        if !corrupt {
            return answer.render();
        }
        answer.corrupted(rng).render()
    }

    fn answer_question(
        &self,
        scene: &SceneGraph,
        patch: &PatchHandle,
        question: &str,
    ) -> QueryAnswer {
        let vocab = Vocabulary::bundled_static();
        if question == "Describe the image." {
            return QueryAnswer::Caption(scene.caption());
        }
        if question == "What is this?" {
            return match self.resolve_object(scene, patch, None) {
                Some(obj) => QueryAnswer::Category(obj.category.clone()),
                None => QueryAnswer::Unknown,
            };
        }
        if question == "What color is this?" {
            return match self.resolve_object(scene, patch, None).and_then(|obj| {
                obj.attributes
                    .iter()
                    .find(|a| vocab.class_of(a) == Some("color"))
                    .cloned()
            }) {
                Some(color) => QueryAnswer::Color(color),
                None => QueryAnswer::Unknown,
            };
        }
        if let Some(category) = question
            .strip_prefix("What color is the ")
            .and_then(|rest| rest.strip_suffix('?'))
        {
            return match scene.first_of_category(category).and_then(|obj| {
                obj.attributes
                    .iter()
                    .find(|a| vocab.class_of(a) == Some("color"))
                    .cloned()
            }) {
                Some(color) => QueryAnswer::Color(color),
                None => QueryAnswer::Unknown,
            };
        }
        if let Some(plural) = question
            .strip_prefix("How many ")
            .and_then(|rest| rest.strip_suffix(" are there?"))
        {
            let category = vocab
                .categories
                .iter()
                .find(|cat| pluralize(cat) == plural || cat.as_str() == plural);
            return match category {
                Some(cat) => {
                    let n = scene
                        .objects_of_category(cat)
                        .filter(|obj| center_in(&obj.bbox, &patch.bbox))
                        .count();
                    QueryAnswer::Count(n)
                }
                None => QueryAnswer::Unknown,
            };
        }
        QueryAnswer::Unknown
    }

    /// Median depth of the objects the patch covers (the linked object's
    /// depth when the patch came from a detection), plus optional jitter.
    fn compute_depth(&self, scene: &SceneGraph, patch: &PatchHandle, rng: &mut ChaCha8Rng) -> f64 {
        let depth = if let Some(id) = &patch.object_id {
            scene.object(id).map(|o| o.depth).unwrap_or(1.0)
        } else {
            let mut depths: Vec<f64> = scene
                .objects
                .iter()
                .filter(|obj| center_in(&obj.bbox, &patch.bbox))
                .map(|obj| obj.depth)
                .collect();
            if depths.is_empty() {
                1.0
            } else {
                depths.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                let mid = depths.len() / 2;
                if depths.len() % 2 == 1 {
                    depths[mid]
                } else {
                    (depths[mid - 1] + depths[mid]) / 2.0
                }
            }
        };
        let jitter = rng.gen::<f64>() < self.noise.p_depth_jitter;
        if !jitter {
            return depth;
        }
        (depth + gaussian(rng) * self.noise.depth_jitter_sigma).clamp(0.001, 1.0)
    }
}

/// Typed intermediate answer, so corruption can sample a wrong value of
/// the same kind.
enum QueryAnswer {
    Category(String),
    Color(String),
    Count(usize),
    Caption(String),
    Unknown,
}

impl QueryAnswer {
    fn render(&self) -> String {
        match self {
            QueryAnswer::Category(s) | QueryAnswer::Color(s) | QueryAnswer::Caption(s) => {
                s.clone()
            }
            QueryAnswer::Count(n) => n.to_string(),
            QueryAnswer::Unknown => "unknown".to_string(),
        }
    }

    fn corrupted(self, rng: &mut ChaCha8Rng) -> QueryAnswer {
        let vocab = Vocabulary::bundled_static();
        match self {
            QueryAnswer::Category(current) => {
                QueryAnswer::Category(sample_other(&vocab.categories, &current, rng))
            }
            QueryAnswer::Color(current) => QueryAnswer::Color(sample_other(
                vocab.attributes_in_class("color"),
                &current,
                rng,
            )),
            QueryAnswer::Count(n) => {
                if n == 0 || rng.gen::<bool>() {
                    QueryAnswer::Count(n + 1)
                } else {
                    QueryAnswer::Count(n - 1)
                }
            }
            other @ (QueryAnswer::Caption(_) | QueryAnswer::Unknown) => other,
        }
    }
}

fn sample_other(pool: &[String], current: &str, rng: &mut ChaCha8Rng) -> String {
    let others: Vec<&String> = pool.iter().filter(|v| v.as_str() != current).collect();
    if others.is_empty() {
        current.to_string()
    } else {
        others[rng.gen_range(0..others.len())].clone()
    }
}

/// Standard normal via Box-Muller; two uniform draws per sample.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// A random box strictly inside the region, for spurious detections.
fn random_sub_box(region: &BoundingBox, rng: &mut ChaCha8Rng) -> Option<BoundingBox> {
    let (rw, rh) = (region.width(), region.height());
    if rw < 2.0 || rh < 2.0 {
        return BoundingBox::new(region.x1, region.y1, region.x2, region.y2).ok();
    }
    let w = (rng.gen_range(0.05..0.4) * rw).max(1.0);
    let h = (rng.gen_range(0.05..0.4) * rh).max(1.0);
    let x1 = region.x1 + rng.gen_range(0.0..(rw - w));
    let y1 = region.y1 + rng.gen_range(0.0..(rh - h));
    BoundingBox::new(x1.round(), y1.round(), (x1 + w).round(), (y1 + h).round()).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::Value;
    use std::collections::BTreeSet;
    use std::sync::Arc;

    fn obj(
        id: &str,
        category: &str,
        bbox: (f64, f64, f64, f64),
        attrs: &[&str],
        depth: f64,
    ) -> SceneObject {
        SceneObject {
            object_id: id.to_string(),
            category: category.to_string(),
            bbox: BoundingBox::new(bbox.0, bbox.1, bbox.2, bbox.3).unwrap(),
            attributes: attrs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
            depth,
        }
    }

    fn fixture_scene() -> Arc<SceneGraph> {
        let scene = SceneGraph {
            scene_id: "s_tools".to_string(),
            width: 1000,
            height: 1000,
            objects: vec![
                obj("o0", "bus", (400.0, 300.0, 700.0, 600.0), &["red"], 0.5),
                obj("o1", "bus", (100.0, 300.0, 380.0, 620.0), &["yellow"], 0.3),
                obj("o2", "dog", (720.0, 700.0, 900.0, 900.0), &["brown"], 0.2),
                obj("o3", "bus", (750.0, 280.0, 980.0, 610.0), &[], 0.9),
            ],
            relations: vec![],
        };
        scene.validate().unwrap();
        Arc::new(scene)
    }

    fn call(
        backend: &OracleBackend,
        scene: &Arc<SceneGraph>,
        call_index: u32,
        tool: &str,
        receiver: &PatchHandle,
        args: &[Value],
    ) -> Value {
        backend
            .call(
                &VisualInput::Scene(scene.clone()),
                call_index,
                tool,
                receiver,
                args,
            )
            .unwrap()
    }

    fn str_arg(s: &str) -> Value {
        Value::Str(s.to_string())
    }

    #[test]
    fn noise_free_find_is_exact_and_ordered() {
        let scene = fixture_scene();
        let backend = OracleBackend::new(NoiseConfig::zero(0));
        let root = PatchHandle::root("s_tools", 1000, 1000);
        let Value::PatchList(patches) = call(&backend, &scene, 1, "find", &root, &[str_arg("bus")])
        else {
            panic!("find returns a patch list")
        };
        let ids: Vec<&str> = patches
            .iter()
            .map(|p| p.object_id.as_deref().unwrap())
            .collect();
        // Left-to-right by x1.
        assert_eq!(ids, vec!["o1", "o0", "o3"]);
    }

    #[test]
    fn unknown_category_finds_nothing() {
        let scene = fixture_scene();
        let backend = OracleBackend::new(NoiseConfig::zero(0));
        let root = PatchHandle::root("s_tools", 1000, 1000);
        let Value::PatchList(patches) =
            call(&backend, &scene, 1, "find", &root, &[str_arg("zebra")])
        else {
            panic!()
        };
        assert!(patches.is_empty());
    }

    #[test]
    fn certain_miss_probability_empties_every_find() {
        let scene = fixture_scene();
        let mut noise = NoiseConfig::zero(0);
        noise.p_miss = 1.0;
        let backend = OracleBackend::new(noise);
        let root = PatchHandle::root("s_tools", 1000, 1000);
        for call_index in 1..20 {
            let Value::PatchList(patches) =
                call(&backend, &scene, call_index, "find", &root, &[str_arg("bus")])
            else {
                panic!()
            };
            assert!(patches.is_empty());
        }
    }

    #[test]
    fn find_in_region_respects_centers_and_clips() {
        let scene = fixture_scene();
        let backend = OracleBackend::new(NoiseConfig::zero(0));
        let region = PatchHandle {
            patch_id: "crop_1".to_string(),
            scene_ref: "s_tools".to_string(),
            bbox: BoundingBox::new(0.0, 0.0, 600.0, 1000.0).unwrap(),
            image_width: 1000,
            image_height: 1000,
            object_id: None,
        };
        let Value::PatchList(patches) =
            call(&backend, &scene, 1, "find", &region, &[str_arg("bus")])
        else {
            panic!()
        };
        // o0 center (550) is inside; o3 (865) is not. o0's box is clipped.
        assert_eq!(patches.len(), 2);
        assert_eq!(patches[1].object_id.as_deref(), Some("o0"));
        assert!(patches[1].bbox.x2 <= 600.0);
        assert!(region.bbox.contains_box(&patches[1].bbox));
    }

    #[test]
    fn verify_property_reads_attributes_and_boundary_flip_inverts() {
        let scene = fixture_scene();
        let zero = OracleBackend::new(NoiseConfig::zero(0));
        let root = PatchHandle::root("s_tools", 1000, 1000);
        let Value::PatchList(patches) = call(&zero, &scene, 1, "find", &root, &[str_arg("bus")])
        else {
            panic!()
        };
        let yellow_bus = &patches[0];
        let plain_bus = &patches[2];
        let args = [str_arg("bus"), str_arg("yellow")];
        assert_eq!(
            call(&zero, &scene, 2, "verify_property", yellow_bus, &args),
            Value::Bool(true)
        );
        assert_eq!(
            call(&zero, &scene, 3, "verify_property", plain_bus, &args),
            Value::Bool(false)
        );

        let mut noise = NoiseConfig::zero(0);
        noise.p_attr_flip = 1.0;
        let flipped = OracleBackend::new(noise);
        assert_eq!(
            call(&flipped, &scene, 2, "verify_property", yellow_bus, &args),
            Value::Bool(false)
        );
        assert_eq!(
            call(&flipped, &scene, 3, "verify_property", plain_bus, &args),
            Value::Bool(true)
        );
    }

    #[test]
    fn attr_flip_rate_matches_binomial_expectation() {
        let scene = fixture_scene();
        let mut noise = NoiseConfig::zero(42);
        noise.p_attr_flip = 0.2;
        let backend = OracleBackend::new(noise);
        let zero = OracleBackend::new(NoiseConfig::zero(0));
        let root = PatchHandle::root("s_tools", 1000, 1000);
        let Value::PatchList(patches) = call(&zero, &scene, 1, "find", &root, &[str_arg("bus")])
        else {
            panic!()
        };
        let patch = &patches[0];
        let args = [str_arg("bus"), str_arg("yellow")];
        let mut flips = 0u32;
        let n = 1000;
        for call_index in 0..n {
            let truth = call(&zero, &scene, call_index + 10, "verify_property", patch, &args);
            let noisy = call(&backend, &scene, call_index + 10, "verify_property", patch, &args);
            if truth != noisy {
                flips += 1;
            }
        }
        // 200 expected; 4-sigma band is about +/- 51.
        assert!(
            (149..=251).contains(&flips),
            "flips = {flips}, outside the binomial band"
        );
    }

    #[test]
    fn simple_query_answers_the_closed_template_set() {
        let scene = fixture_scene();
        let backend = OracleBackend::new(NoiseConfig::zero(0));
        let zero_root = PatchHandle::root("s_tools", 1000, 1000);
        let Value::PatchList(patches) =
            call(&backend, &scene, 1, "find", &zero_root, &[str_arg("bus")])
        else {
            panic!()
        };
        let yellow_bus = &patches[0];
        assert_eq!(
            call(&backend, &scene, 2, "simple_query", yellow_bus, &[str_arg("What color is this?")]),
            Value::Str("yellow".to_string())
        );
        assert_eq!(
            call(&backend, &scene, 3, "simple_query", yellow_bus, &[str_arg("What is this?")]),
            Value::Str("bus".to_string())
        );
        assert_eq!(
            call(&backend, &scene, 4, "simple_query", &zero_root, &[str_arg("How many buses are there?")]),
            Value::Str("3".to_string())
        );
        assert_eq!(
            call(&backend, &scene, 5, "simple_query", &zero_root, &[str_arg("What color is the dog?")]),
            Value::Str("brown".to_string())
        );
        assert_eq!(
            call(&backend, &scene, 6, "simple_query", &zero_root, &[str_arg("Why is the sky blue?")]),
            Value::Str("unknown".to_string())
        );
        let Value::Str(caption) =
            call(&backend, &scene, 7, "simple_query", &zero_root, &[str_arg("Describe the image.")])
        else {
            panic!()
        };
        assert!(caption.contains("bus"));
    }

    #[test]
    fn depth_order_is_preserved_without_jitter() {
        let scene = fixture_scene();
        let backend = OracleBackend::new(NoiseConfig::zero(0));
        let root = PatchHandle::root("s_tools", 1000, 1000);
        let Value::PatchList(buses) = call(&backend, &scene, 1, "find", &root, &[str_arg("bus")])
        else {
            panic!()
        };
        let Value::Float(d_yellow) = call(&backend, &scene, 2, "compute_depth", &buses[0], &[])
        else {
            panic!()
        };
        let Value::Float(d_far) = call(&backend, &scene, 3, "compute_depth", &buses[2], &[])
        else {
            panic!()
        };
        assert_eq!(d_yellow, 0.3);
        assert_eq!(d_far, 0.9);
        assert!(d_yellow < d_far);
    }

    #[test]
    fn llm_query_answers_from_the_knowledge_table() {
        let scene = fixture_scene();
        let backend = OracleBackend::new(NoiseConfig::zero(0));
        let root = PatchHandle::root("s_tools", 1000, 1000);
        assert_eq!(
            call(&backend, &scene, 1, "llm_query", &root, &[str_arg("Who invented the piano?")]),
            Value::Str("Cristofori".to_string())
        );
        assert_eq!(
            call(&backend, &scene, 2, "llm_query", &root, &[str_arg("Who invented the kazoo?")]),
            Value::Str("unknown".to_string())
        );
    }

    #[test]
    fn exists_is_nonempty_find() {
        let scene = fixture_scene();
        let backend = OracleBackend::new(NoiseConfig::zero(0));
        let root = PatchHandle::root("s_tools", 1000, 1000);
        assert_eq!(
            call(&backend, &scene, 1, "exists", &root, &[str_arg("dog")]),
            Value::Bool(true)
        );
        assert_eq!(
            call(&backend, &scene, 2, "exists", &root, &[str_arg("zebra")]),
            Value::Bool(false)
        );
    }

    #[test]
    fn noisy_outputs_depend_only_on_seed_scene_tool_and_call_index() {
        let scene = fixture_scene();
        let mut noise = NoiseConfig::zero(42);
        noise.p_miss = 0.3;
        noise.p_false_positive = 0.2;
        let a = OracleBackend::new(noise.clone());
        let b = OracleBackend::new(noise);
        let root = PatchHandle::root("s_tools", 1000, 1000);
        for call_index in 1..50 {
            let ra = call(&a, &scene, call_index, "find", &root, &[str_arg("bus")]);
            let rb = call(&b, &scene, call_index, "find", &root, &[str_arg("bus")]);
            assert_eq!(ra, rb);
        }
    }
}
