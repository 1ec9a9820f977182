//! The synthetic visual world: scene graphs, structured queries over them,
//! and a brute-force oracle that answers any structured query exactly.
//!
//! Scenes stand in for annotated images. A scene is a set of boxed,
//! attributed objects with depths plus a sparse list of relation
//! annotations; queries are structured values with a deterministic
//! natural-language rendering. Everything here is immutable after
//! construction and generated purely from explicit seeds.

mod corpus;
mod gen;
mod oracle;
mod query;

pub use corpus::{read_corpus, write_corpus, CorpusEntry, CorpusHeader};
pub use gen::{generate_scene, SceneGenConfig};
pub use oracle::oracle_answer;
pub use query::{generate_query, QueryGenError, QueryKind};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fraction of image width/height treated as "too close to call" when
/// comparing box centers for spatial questions.
pub const SPATIAL_DEAD_ZONE_FRACTION: f64 = 0.02;

/// Depth differences below this are ties and are rejected at
/// query-generation time.
pub const DEPTH_TIE_EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene {scene_id}: object {object_id} box {bbox:?} exceeds bounds {width}x{height}")]
    BoxOutOfBounds {
        scene_id: String,
        object_id: String,
        bbox: BoundingBox,
        width: u32,
        height: u32,
    },
    #[error("scene {scene_id}: duplicate object id {object_id}")]
    DuplicateObjectId { scene_id: String, object_id: String },
    #[error("scene {scene_id}: relation references unknown object id {object_id}")]
    DanglingRelation { scene_id: String, object_id: String },
    #[error("scene {scene_id}: object {object_id} depth {depth} outside (0, 1]")]
    BadDepth {
        scene_id: String,
        object_id: String,
        depth: f64,
    },
    #[error("invalid bounding box: ({0}, {1}, {2}, {3})")]
    BadBox(f64, f64, f64, f64),
}

/// An axis-aligned box in pixel coordinates with x1 < x2 and y1 < y2.
/// Serialized as the 4-tuple `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "(f64, f64, f64, f64)", try_from = "(f64, f64, f64, f64)")]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, SceneError> {
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite())
            || x1 >= x2
            || y1 >= y2
        {
            return Err(SceneError::BadBox(x1, y1, x2, y2));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn center_x(&self) -> f64 {
        (self.x1 + self.x2) / 2.0
    }

    pub fn center_y(&self) -> f64 {
        (self.y1 + self.y2) / 2.0
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        other.x1 >= self.x1 && other.y1 >= self.y1 && other.x2 <= self.x2 && other.y2 <= self.y2
    }

    /// Intersection, if the boxes overlap with positive area.
    pub fn intersect(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x1 = self.x1.max(other.x1);
        let y1 = self.y1.max(other.y1);
        let x2 = self.x2.min(other.x2);
        let y2 = self.y2.min(other.y2);
        (x1 < x2 && y1 < y2).then_some(BoundingBox { x1, y1, x2, y2 })
    }
}

impl From<BoundingBox> for (f64, f64, f64, f64) {
    fn from(b: BoundingBox) -> Self {
        (b.x1, b.y1, b.x2, b.y2)
    }
}

impl TryFrom<(f64, f64, f64, f64)> for BoundingBox {
    type Error = SceneError;

    fn try_from(t: (f64, f64, f64, f64)) -> Result<Self, Self::Error> {
        BoundingBox::new(t.0, t.1, t.2, t.3)
    }
}

/// One annotated object in a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub object_id: String,
    pub category: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub attributes: BTreeSet<String>,
    /// In (0, 1]; smaller is closer to the camera.
    pub depth: f64,
}

impl SceneObject {
    pub fn has_attributes(&self, required: &[String]) -> bool {
        required.iter().all(|a| self.attributes.contains(a))
    }
}

/// Closed relation vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    LeftOf,
    RightOf,
    Above,
    Below,
    On,
    Holding,
    Near,
}

/// A relation annotation between two objects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub subject: String,
    pub predicate: RelationKind,
    pub object: String,
}

/// A synthetic annotated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub scene_id: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<SceneObject>,
    pub relations: Vec<Relation>,
}

impl SceneGraph {
    /// Check every structural invariant.
    pub fn validate(&self) -> Result<(), SceneError> {
        let bounds = BoundingBox {
            x1: 0.0,
            y1: 0.0,
            x2: self.width as f64,
            y2: self.height as f64,
        };
        let mut seen = BTreeSet::new();
        for obj in &self.objects {
            if !seen.insert(obj.object_id.as_str()) {
                return Err(SceneError::DuplicateObjectId {
                    scene_id: self.scene_id.clone(),
                    object_id: obj.object_id.clone(),
                });
            }
            if !bounds.contains_box(&obj.bbox) {
                return Err(SceneError::BoxOutOfBounds {
                    scene_id: self.scene_id.clone(),
                    object_id: obj.object_id.clone(),
                    bbox: obj.bbox,
                    width: self.width,
                    height: self.height,
                });
            }
            if !(obj.depth > 0.0 && obj.depth <= 1.0) {
                return Err(SceneError::BadDepth {
                    scene_id: self.scene_id.clone(),
                    object_id: obj.object_id.clone(),
                    depth: obj.depth,
                });
            }
        }
        for rel in &self.relations {
            for id in [&rel.subject, &rel.object] {
                if !seen.contains(id.as_str()) {
                    return Err(SceneError::DanglingRelation {
                        scene_id: self.scene_id.clone(),
                        object_id: id.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn object(&self, object_id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.object_id == object_id)
    }

    pub fn objects_of_category<'a>(
        &'a self,
        category: &'a str,
    ) -> impl Iterator<Item = &'a SceneObject> + 'a {
        self.objects.iter().filter(move |o| o.category == category)
    }

    /// First object of the category in annotation order, if any.
    pub fn first_of_category(&self, category: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.category == category)
    }

    /// Deterministic one-line caption used as the image-description answer.
    pub fn caption(&self) -> String {
        use std::collections::BTreeMap;
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for obj in &self.objects {
            *counts.entry(obj.category.as_str()).or_default() += 1;
        }
        let phrases: Vec<String> = counts
            .iter()
            .map(|(cat, n)| {
                if *n == 1 {
                    format!("{} {}", crate::english::article(cat), cat)
                } else {
                    format!("{} {}", n, crate::english::pluralize(cat))
                }
            })
            .collect();
        if phrases.is_empty() {
            "an empty scene".to_string()
        } else {
            format!("a scene with {}", phrases.join(", "))
        }
    }
}

/// Spatial relations a question can ask about (the geometric subset of
/// [`RelationKind`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialRelation {
    LeftOf,
    RightOf,
    Above,
    Below,
}

impl SpatialRelation {
    pub const ALL: [SpatialRelation; 4] = [
        SpatialRelation::LeftOf,
        SpatialRelation::RightOf,
        SpatialRelation::Above,
        SpatialRelation::Below,
    ];

    pub fn phrase(&self) -> &'static str {
        match self {
            SpatialRelation::LeftOf => "to the left of",
            SpatialRelation::RightOf => "to the right of",
            SpatialRelation::Above => "above",
            SpatialRelation::Below => "below",
        }
    }
}

/// A structured question over a scene, with parameters per kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StructuredQuery {
    /// How many objects of `category` carry all of `attributes`?
    Count {
        category: String,
        attributes: Vec<String>,
    },
    /// Is there any object of `category`?
    Exists { category: String },
    /// Which attribute of `attribute_class` does the unique `category`
    /// object carry?
    Attribute {
        category: String,
        attribute_class: String,
    },
    /// Does the unique `subject` object stand in `relation` to the unique
    /// `object` object (by box centers)?
    Spatial {
        relation: SpatialRelation,
        subject: String,
        object: String,
    },
    /// Which of the two categories is closer to the camera?
    DepthCompare { left: String, right: String },
    /// A wrapped question with 2-4 options, exactly one correct; the
    /// answer is the option letter.
    MultiChoice {
        inner: Box<StructuredQuery>,
        options: Vec<String>,
    },
}

impl StructuredQuery {
    pub fn kind(&self) -> QueryKind {
        match self {
            StructuredQuery::Count { .. } => QueryKind::Count,
            StructuredQuery::Exists { .. } => QueryKind::Exists,
            StructuredQuery::Attribute { .. } => QueryKind::Attribute,
            StructuredQuery::Spatial { .. } => QueryKind::Spatial,
            StructuredQuery::DepthCompare { .. } => QueryKind::DepthCompare,
            StructuredQuery::MultiChoice { .. } => QueryKind::MultiChoice,
        }
    }

    /// The task family this query belongs to.
    pub fn task(&self) -> TaskKind {
        match self {
            StructuredQuery::Count { .. } => TaskKind::Counting,
            StructuredQuery::MultiChoice { .. } => TaskKind::MultipleChoice,
            _ => TaskKind::VqaFreeform,
        }
    }
}

/// Option letters for multiple-choice questions.
pub const OPTION_LETTERS: [&str; 4] = ["A", "B", "C", "D"];

/// Task families mirroring the training mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    VqaFreeform,
    MultipleChoice,
    Counting,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::VqaFreeform,
        TaskKind::MultipleChoice,
        TaskKind::Counting,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::VqaFreeform => "vqa_freeform",
            TaskKind::MultipleChoice => "multiple_choice",
            TaskKind::Counting => "counting",
        }
    }
}

/// A labeled sample: a query over a scene plus its oracle-verified answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldSample {
    pub scene_id: String,
    pub query: StructuredQuery,
    pub query_text: String,
    pub gold_answer: String,
    pub task: TaskKind,
}
