//! The closed tool set behind a uniform registry.
//!
//! Two backends implement the same contract: a scene-graph oracle with
//! seeded noise injection (offline), and remote HTTP services (online).
//! Backends are stateless with respect to calls; per-call randomness is
//! derived as hash(seed, scene_id, tool_name, call_index), so worker count
//! and evaluation order cannot change noisy outputs.

mod net;
mod oracle;
mod remote;

pub use net::{network_attempts, reset_network_attempts, set_offline, NetworkGate};
pub use oracle::OracleBackend;
pub use remote::{RemoteBackend, RemoteToolConfig};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interp::{PatchHandle, Value};
use crate::scene::SceneGraph;
use crate::vpl;

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("http status {0}")]
    Status(u16),
    #[error("response schema: {0}")]
    Schema(String),
    #[error("offline mode forbids network access")]
    Offline,
    #[error("bad tool arguments: {0}")]
    BadArgs(String),
    #[error("{0}")]
    Backend(String),
}

impl ToolError {
    /// Transient faults worth one retry; schema and argument errors are
    /// deterministic and are not.
    fn is_transient(&self) -> bool {
        matches!(self, ToolError::Transport(_) | ToolError::Status(_))
    }
}

/// What a program executes against: a synthetic scene (oracle backends) or
/// an opaque image handle (remote backends).
#[derive(Debug, Clone)]
pub enum VisualInput {
    Scene(Arc<SceneGraph>),
    Remote {
        image_handle: String,
        width: u32,
        height: u32,
    },
}

impl VisualInput {
    pub fn scene_ref(&self) -> &str {
        match self {
            VisualInput::Scene(scene) => &scene.scene_id,
            VisualInput::Remote { image_handle, .. } => image_handle,
        }
    }

    pub fn dims(&self) -> (u32, u32) {
        match self {
            VisualInput::Scene(scene) => (scene.width, scene.height),
            VisualInput::Remote { width, height, .. } => (*width, *height),
        }
    }

    pub fn root_patch(&self) -> PatchHandle {
        let (w, h) = self.dims();
        PatchHandle::root(self.scene_ref(), w, h)
    }
}

/// Seeded corruption applied by oracle backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub seed: u64,
    /// Probability a true detection is dropped.
    pub p_miss: f64,
    /// Probability a spurious detection is added.
    pub p_false_positive: f64,
    /// Probability a property verification answer is flipped.
    pub p_attr_flip: f64,
    /// Probability a visual-question answer is corrupted.
    pub p_vqa_error: f64,
    /// Probability a depth reading receives gaussian jitter.
    pub p_depth_jitter: f64,
    pub depth_jitter_sigma: f64,
}

impl NoiseConfig {
    /// Exact oracle: all probabilities zero.
    pub fn zero(seed: u64) -> Self {
        Self {
            seed,
            p_miss: 0.0,
            p_false_positive: 0.0,
            p_attr_flip: 0.0,
            p_vqa_error: 0.0,
            p_depth_jitter: 0.0,
            depth_jitter_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ToolError> {
        let probs = [
            ("p_miss", self.p_miss),
            ("p_false_positive", self.p_false_positive),
            ("p_attr_flip", self.p_attr_flip),
            ("p_vqa_error", self.p_vqa_error),
            ("p_depth_jitter", self.p_depth_jitter),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(ToolError::BadArgs(format!(
                    "{name} = {p} is not a probability"
                )));
            }
        }
        Ok(())
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::zero(0)
    }
}

/// A tool implementation: given the visual input and per-call index,
/// answer one tool invocation.
pub trait ToolBackend: Send + Sync {
    fn call(
        &self,
        input: &VisualInput,
        call_index: u32,
        tool: &str,
        receiver: &PatchHandle,
        args: &[Value],
    ) -> Result<Value, ToolError>;
}

/// How a builtin name is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    /// Dispatched to the backend and recorded in the execution trace.
    TracedTool,
    /// Computed by the interpreter; never traced.
    Pure,
}

/// The uniform dispatch point for every tool call.
pub struct ToolRegistry {
    backend: Arc<dyn ToolBackend>,
}

impl ToolRegistry {
    /// Oracle tools answering from the scene graph, with seeded noise.
    pub fn oracle(noise: NoiseConfig) -> Result<Self, ToolError> {
        noise.validate()?;
        Ok(Self {
            backend: Arc::new(OracleBackend::new(noise)),
        })
    }

    /// Remote HTTP tools. Fails in offline mode before any request.
    pub fn remote(config: RemoteToolConfig) -> Result<Self, ToolError> {
        Ok(Self {
            backend: Arc::new(RemoteBackend::new(config)?),
        })
    }

    /// Any backend; used by tests to instrument call counts.
    pub fn with_backend(backend: Arc<dyn ToolBackend>) -> Self {
        Self { backend }
    }

    /// Resolve a builtin name. Every name the parser admits resolves; the
    /// registry can never be missing a binding at execution time.
    pub fn binding(name: &str) -> Option<Binding> {
        if crate::interp::TRACED_TOOLS.contains(&name) {
            Some(Binding::TracedTool)
        } else if name == "crop"
            || vpl::FREE_FUNCTIONS.contains(&name)
            || vpl::PATCH_ATTRS.contains(&name)
        {
            Some(Binding::Pure)
        } else {
            None
        }
    }

    /// Invoke a traced tool, retrying once on transient faults.
    pub fn invoke(
        &self,
        input: &VisualInput,
        call_index: u32,
        tool: &str,
        receiver: &PatchHandle,
        args: &[Value],
    ) -> Result<Value, ToolError> {
        match self.backend.call(input, call_index, tool, receiver, args) {
            Err(err) if err.is_transient() => {
                log::debug!("tool {tool} failed transiently ({err}); retrying once");
                self.backend.call(input, call_index, tool, receiver, args)
            }
            other => other,
        }
    }

    /// Plain-text description of the tool API, used as the
    /// `tool_api_description` slot of the code-generation prompt.
    pub fn api_description() -> String {
        "\
Methods on the image or any patch:
  find(category: str) -> list[patch]       detect objects of a category, left to right
  exists(category: str) -> bool            is any object of the category present
  verify_property(category: str, property: str) -> bool
                                            does the patch's object have the property
  simple_query(question: str) -> str       answer a simple visual question about the patch
  compute_depth() -> float                  median depth of the patch, 0 (near) to 1 (far)
  crop(x1, y1, x2, y2) -> patch            restrict to a sub-region (pixel coordinates)
  llm_query(question: str) -> str          answer a question that needs outside knowledge

Patch attributes: left, right, top, bottom, center_x, center_y (pixels).

Free functions:
  len(xs) -> int, str(x) -> str, int(x) -> int,
  bool_to_yesno(b) -> str, distance(p1, p2) -> float
"
        .to_string()
    }
}

impl std::fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolRegistry").finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_vpl_builtin_resolves() {
        for name in vpl::FREE_FUNCTIONS {
            assert!(ToolRegistry::binding(name).is_some(), "{name} unbound");
        }
        for name in vpl::METHODS {
            assert!(ToolRegistry::binding(name).is_some(), "{name} unbound");
        }
        for name in vpl::PATCH_ATTRS {
            assert!(ToolRegistry::binding(name).is_some(), "{name} unbound");
        }
        assert!(ToolRegistry::binding("magic").is_none());
    }

    #[test]
    fn noise_probabilities_are_validated() {
        let mut noise = NoiseConfig::zero(0);
        noise.p_miss = 1.5;
        assert!(noise.validate().is_err());
        assert!(NoiseConfig::zero(1).validate().is_ok());
    }
}
