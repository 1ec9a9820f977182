//! Brute-force ground truth: answer any structured query by exhaustive
//! enumeration over the scene's objects. This is the reference every other
//! component is checked against, so it stays as direct as possible.

use super::{
    SceneGraph, SceneObject, SpatialRelation, StructuredQuery, OPTION_LETTERS,
    DEPTH_TIE_EPSILON, SPATIAL_DEAD_ZONE_FRACTION,
};
use crate::filter::normalize_answer;

/// Answer a query exactly. Total: every input yields a non-empty string;
/// questions the scene cannot settle answer "ambiguous" or "unknown".
pub fn oracle_answer(scene: &SceneGraph, query: &StructuredQuery) -> String {
    match query {
        StructuredQuery::Count {
            category,
            attributes,
        } => {
            let n = scene
                .objects_of_category(category)
                .filter(|o| o.has_attributes(attributes))
                .count();
            n.to_string()
        }
        StructuredQuery::Exists { category } => {
            if scene.objects_of_category(category).next().is_some() {
                "yes".to_string()
            } else {
                "no".to_string()
            }
        }
        StructuredQuery::Attribute {
            category,
            attribute_class,
        } => scene
            .first_of_category(category)
            .and_then(|obj| attribute_of_class(scene, obj, attribute_class))
            .unwrap_or_else(|| "unknown".to_string()),
        StructuredQuery::Spatial {
            relation,
            subject,
            object,
        } => {
            let (Some(a), Some(b)) = (
                scene.first_of_category(subject),
                scene.first_of_category(object),
            ) else {
                return "unknown".to_string();
            };
            spatial_answer(scene, a, b, *relation)
        }
        StructuredQuery::DepthCompare { left, right } => {
            let (Some(a), Some(b)) = (
                scene.first_of_category(left),
                scene.first_of_category(right),
            ) else {
                return "unknown".to_string();
            };
            if (a.depth - b.depth).abs() < DEPTH_TIE_EPSILON {
                "ambiguous".to_string()
            } else if a.depth < b.depth {
                a.category.clone()
            } else {
                b.category.clone()
            }
        }
        StructuredQuery::MultiChoice { inner, options } => {
            let value = oracle_answer(scene, inner);
            let normalized = normalize_answer(&value);
            for (idx, option) in options.iter().enumerate() {
                if normalize_answer(option) == normalized {
                    return OPTION_LETTERS[idx].to_string();
                }
            }
            "unknown".to_string()
        }
    }
}

fn attribute_of_class(scene: &SceneGraph, obj: &SceneObject, class: &str) -> Option<String> {
    // Scenes do not carry their vocabulary; attribute classes come from
    // the bundled one.
    let _ = scene;
    let vocab = crate::assets::Vocabulary::bundled_static();
    obj.attributes
        .iter()
        .find(|attr| vocab.class_of(attr) == Some(class))
        .cloned()
}

fn spatial_answer(
    scene: &SceneGraph,
    a: &SceneObject,
    b: &SceneObject,
    relation: SpatialRelation,
) -> String {
    let (delta, dead_zone) = match relation {
        SpatialRelation::LeftOf | SpatialRelation::RightOf => (
            b.bbox.center_x() - a.bbox.center_x(),
            SPATIAL_DEAD_ZONE_FRACTION * scene.width as f64,
        ),
        SpatialRelation::Above | SpatialRelation::Below => (
            b.bbox.center_y() - a.bbox.center_y(),
            SPATIAL_DEAD_ZONE_FRACTION * scene.height as f64,
        ),
    };
    if delta.abs() <= dead_zone {
        return "ambiguous".to_string();
    }
    let holds = match relation {
        SpatialRelation::LeftOf | SpatialRelation::Above => delta > 0.0,
        SpatialRelation::RightOf | SpatialRelation::Below => delta < 0.0,
    };
    if holds {
        "yes".to_string()
    } else {
        "no".to_string()
    }
}
