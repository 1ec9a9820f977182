//! Remote HTTP tool backend: one POST per tool call with a flat
//! key-value JSON payload. Wire schemas are documented per tool in
//! `docs/remote_tools.md` and exercised by mock-server tests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::interp::{PatchHandle, Value};
use crate::scene::BoundingBox;

use super::{NetworkGate, ToolBackend, ToolError, VisualInput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteToolConfig {
    /// E.g. "http://tools.internal:8080".
    pub base_url: String,
    /// Name of the environment variable holding the API key; empty for
    /// unauthenticated endpoints. The key itself is never logged.
    pub api_key_env: String,
    pub timeout_ms: u64,
    /// Route overrides per tool; a missing entry uses the tool name.
    #[serde(default)]
    pub routes: BTreeMap<String, String>,
    /// Connection-pool bound.
    #[serde(default = "default_max_connections")]
    pub max_connections: usize,
}

fn default_max_connections() -> usize {
    8
}

impl RemoteToolConfig {
    pub fn validate(&self) -> Result<(), ToolError> {
        if self.timeout_ms == 0 {
            return Err(ToolError::BadArgs("timeout_ms must be > 0".to_string()));
        }
        if self.base_url.is_empty() {
            return Err(ToolError::BadArgs("base_url must be set".to_string()));
        }
        Ok(())
    }
}

pub struct RemoteBackend {
    config: RemoteToolConfig,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    /// Offline mode rejects construction before any socket work.
    pub fn new(config: RemoteToolConfig) -> Result<Self, ToolError> {
        config.validate()?;
        NetworkGate::check_construction()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_millis(config.timeout_ms))
            .pool_max_idle_per_host(config.max_connections)
            .build()
            .map_err(|e| ToolError::Transport(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn url_for(&self, tool: &str) -> String {
        let route = self
            .config
            .routes
            .get(tool)
            .map(String::as_str)
            .unwrap_or(tool);
        format!(
            "{}/{}",
            self.config.base_url.trim_end_matches('/'),
            route.trim_start_matches('/')
        )
    }

    fn post(&self, tool: &str, payload: Json) -> Result<Json, ToolError> {
        NetworkGate::register_attempt()?;
        let url = self.url_for(tool);
        log::debug!("POST {url} payload {payload}");
        let mut request = self.client.post(&url).json(&payload);
        if !self.config.api_key_env.is_empty() {
            if let Ok(key) = std::env::var(&self.config.api_key_env) {
                request = request.header("Authorization", format!("Bearer {key}"));
            }
        }
        let response = request
            .send()
            .map_err(|e| ToolError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(ToolError::Status(status.as_u16()));
        }
        let body: Json = response
            .json()
            .map_err(|e| ToolError::Schema(e.to_string()))?;
        log::debug!("response from {url}: {body}");
        Ok(body)
    }
}

fn box_fields(prefix: &str, bbox: &BoundingBox) -> Json {
    json!({
        format!("{prefix}_x1"): bbox.x1,
        format!("{prefix}_y1"): bbox.y1,
        format!("{prefix}_x2"): bbox.x2,
        format!("{prefix}_y2"): bbox.y2,
    })
}

fn merge(mut base: Json, extra: Json) -> Json {
    if let (Some(base_map), Some(extra_map)) = (base.as_object_mut(), extra.as_object()) {
        for (k, v) in extra_map {
            base_map.insert(k.clone(), v.clone());
        }
    }
    base
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

fn field<'j>(body: &'j Json, name: &str) -> Result<&'j Json, ToolError> {
    body.get(name)
        .ok_or_else(|| ToolError::Schema(format!("response is missing field {name:?}")))
}

fn field_bool(body: &Json, name: &str) -> Result<bool, ToolError> {
    field(body, name)?
        .as_bool()
        .ok_or_else(|| ToolError::Schema(format!("field {name:?} is not a bool")))
}

fn field_str(body: &Json, name: &str) -> Result<String, ToolError> {
    Ok(field(body, name)?
        .as_str()
        .ok_or_else(|| ToolError::Schema(format!("field {name:?} is not a string")))?
        .to_string())
}

fn field_f64(body: &Json, name: &str) -> Result<f64, ToolError> {
    field(body, name)?
        .as_f64()
        .ok_or_else(|| ToolError::Schema(format!("field {name:?} is not a number")))
}

impl ToolBackend for RemoteBackend {
    fn call(
        &self,
        input: &VisualInput,
        call_index: u32,
        tool: &str,
        receiver: &PatchHandle,
        args: &[Value],
    ) -> Result<Value, ToolError> {
        let image = input.scene_ref();
        let (width, height) = input.dims();
        match tool {
            "find" | "exists" => {
                let category = expect_str(tool, args, 0)?;
                let payload = merge(
                    json!({ "image": image, "category": category }),
                    box_fields("region", &receiver.bbox),
                );
                let body = self.post(tool, payload)?;
                if tool == "exists" {
                    return Ok(Value::Bool(field_bool(&body, "exists")?));
                }
                let boxes = field(&body, "boxes")?
                    .as_array()
                    .ok_or_else(|| ToolError::Schema("field \"boxes\" is not an array".to_string()))?;
                let mut patches = Vec::new();
                for (i, item) in boxes.iter().enumerate() {
                    let coords: Vec<f64> = item
                        .as_array()
                        .map(|a| a.iter().filter_map(Json::as_f64).collect())
                        .unwrap_or_default();
                    if coords.len() != 4 {
                        return Err(ToolError::Schema(format!(
                            "box {i} is not a 4-number array"
                        )));
                    }
                    let bbox = BoundingBox::new(coords[0], coords[1], coords[2], coords[3])
                        .map_err(|e| ToolError::Schema(format!("box {i}: {e}")))?;
                    // Detections are clipped into the queried region.
                    let Some(clipped) = receiver.bbox.intersect(&bbox) else {
                        continue;
                    };
                    patches.push(PatchHandle {
                        patch_id: format!("r{call_index}_{i}"),
                        scene_ref: image.to_string(),
                        bbox: clipped,
                        image_width: width,
                        image_height: height,
                        object_id: None,
                    });
                }
                Ok(Value::PatchList(patches))
            }
            "verify_property" => {
                let category = expect_str(tool, args, 0)?;
                let property = expect_str(tool, args, 1)?;
                let payload = merge(
                    json!({ "image": image, "category": category, "property": property }),
                    box_fields("patch", &receiver.bbox),
                );
                let body = self.post(tool, payload)?;
                Ok(Value::Bool(field_bool(&body, "verdict")?))
            }
            "simple_query" => {
                let question = expect_str(tool, args, 0)?;
                let payload = merge(
                    json!({ "image": image, "question": question }),
                    box_fields("patch", &receiver.bbox),
                );
                let body = self.post(tool, payload)?;
                Ok(Value::Str(field_str(&body, "answer")?))
            }
            "compute_depth" => {
                let payload = merge(
                    json!({ "image": image }),
                    box_fields("patch", &receiver.bbox),
                );
                let body = self.post(tool, payload)?;
                Ok(Value::Float(field_f64(&body, "depth")?))
            }
            "llm_query" => {
                let question = expect_str(tool, args, 0)?;
                let body = self.post(tool, json!({ "question": question }))?;
                Ok(Value::Str(field_str(&body, "answer")?))
            }
            other => Err(ToolError::Backend(format!(
                "remote backend has no tool {other:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mockhttp::MockHttp;
    use crate::tools::ToolRegistry;

    fn config(base_url: &str) -> RemoteToolConfig {
        RemoteToolConfig {
            base_url: base_url.to_string(),
            api_key_env: String::new(),
            timeout_ms: 2000,
            routes: BTreeMap::new(),
            max_connections: 2,
        }
    }

    fn remote_input() -> VisualInput {
        VisualInput::Remote {
            image_handle: "img_1".to_string(),
            width: 1000,
            height: 1000,
        }
    }

    #[test]
    fn detection_route_maps_to_patches() {
        let server = MockHttp::serve(vec![(
            200,
            r#"{"boxes": [[10.0, 20.0, 110.0, 220.0], [300.0, 30.0, 400.0, 130.0]]}"#.to_string(),
        )]);
        let backend = RemoteBackend::new(config(&server.base_url())).unwrap();
        let input = remote_input();
        let root = input.root_patch();
        let result = backend
            .call(&input, 1, "find", &root, &[Value::Str("bus".to_string())])
            .unwrap();
        let Value::PatchList(patches) = result else {
            panic!("expected a patch list")
        };
        assert_eq!(patches.len(), 2);
        assert_eq!(patches[0].patch_id, "r1_0");
        assert_eq!(patches[0].bbox.x1, 10.0);
        let request = server.requests()[0].clone();
        assert!(request.contains("\"category\":\"bus\""));
        assert!(request.contains("\"region_x2\":1000.0"));
    }

    #[test]
    fn repeated_server_errors_surface_after_one_retry() {
        let server = MockHttp::serve(vec![
            (500, "{}".to_string()),
            (500, "{}".to_string()),
        ]);
        let registry = ToolRegistry::remote(config(&server.base_url())).unwrap();
        let input = remote_input();
        let root = input.root_patch();
        let err = registry
            .invoke(&input, 1, "simple_query", &root, &[Value::Str("q".to_string())])
            .unwrap_err();
        assert!(matches!(err, ToolError::Status(500)));
        // Retried exactly once.
        assert_eq!(server.requests().len(), 2);
    }

    #[test]
    fn transient_error_recovers_on_retry() {
        let server = MockHttp::serve(vec![
            (503, "{}".to_string()),
            (200, r#"{"answer": "yellow"}"#.to_string()),
        ]);
        let registry = ToolRegistry::remote(config(&server.base_url())).unwrap();
        let input = remote_input();
        let root = input.root_patch();
        let value = registry
            .invoke(&input, 1, "simple_query", &root, &[Value::Str("q".to_string())])
            .unwrap();
        assert_eq!(value, Value::Str("yellow".to_string()));
    }

    #[test]
    fn schema_mismatch_is_an_error() {
        let server = MockHttp::serve(vec![(200, r#"{"wrong": 1}"#.to_string())]);
        let backend = RemoteBackend::new(config(&server.base_url())).unwrap();
        let input = remote_input();
        let root = input.root_patch();
        let err = backend
            .call(&input, 1, "compute_depth", &root, &[])
            .unwrap_err();
        assert!(matches!(err, ToolError::Schema(_)));
    }

    #[test]
    fn zero_timeout_is_rejected_before_any_network_work() {
        let mut cfg = config("http://localhost:9");
        cfg.timeout_ms = 0;
        assert!(matches!(
            RemoteBackend::new(cfg),
            Err(ToolError::BadArgs(_))
        ));
    }
}
