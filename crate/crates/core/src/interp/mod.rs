//! The execution engine: evaluates a program against a visual input
//! through the tool registry, recording every tool call in an
//! [`ExecutionTrace`].
//!
//! Evaluation is single-threaded per program, bounded by a step budget,
//! and deterministic given (program, input, tool seed). All failure modes
//! (type errors, bounds, budget, tool errors) are recorded in the trace
//! outcome; evaluation never panics.

mod eval;

pub(crate) use eval::TRACED_TOOLS;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scene::BoundingBox;
use crate::tools::{ToolRegistry, VisualInput};
use crate::vpl::Program;

/// Boxes render on this integer grid in traces, results, and rationales.
pub const BOX_GRID: u32 = 999;

/// Default evaluation budget: one step per statement/expression node.
pub const DEFAULT_STEP_BUDGET: u32 = 10_000;

/// Evaluation step allowance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepBudget(pub u32);

impl Default for StepBudget {
    fn default() -> Self {
        StepBudget(DEFAULT_STEP_BUDGET)
    }
}

/// A rectangular view into a visual input.
///
/// `object_id` links oracle-produced patches back to the scene object they
/// detect; crops and spurious detections carry `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchHandle {
    pub patch_id: String,
    /// Scene id or opaque image handle.
    pub scene_ref: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub image_width: u32,
    pub image_height: u32,
    pub object_id: Option<String>,
}

impl PatchHandle {
    /// The root patch covering a whole input.
    pub fn root(scene_ref: &str, width: u32, height: u32) -> Self {
        Self {
            patch_id: "image".to_string(),
            scene_ref: scene_ref.to_string(),
            bbox: BoundingBox::new(0.0, 0.0, width as f64, height as f64)
                .expect("image extent is a valid box"),
            image_width: width,
            image_height: height,
            object_id: None,
        }
    }

    pub fn is_root(&self) -> bool {
        self.patch_id == "image"
    }

    pub fn left(&self) -> f64 {
        self.bbox.x1
    }

    pub fn right(&self) -> f64 {
        self.bbox.x2
    }

    pub fn top(&self) -> f64 {
        self.bbox.y1
    }

    pub fn bottom(&self) -> f64 {
        self.bbox.y2
    }

    pub fn center_x(&self) -> f64 {
        self.bbox.center_x()
    }

    pub fn center_y(&self) -> f64 {
        self.bbox.center_y()
    }

    /// Box as four integers on the 0-999 grid, e.g. "826 665 869 721".
    pub fn grid_box(&self) -> String {
        render_grid_box(&self.bbox, self.image_width, self.image_height)
    }
}

/// Quantize a box onto the 0-999 grid, space-separated.
pub fn render_grid_box(bbox: &BoundingBox, image_width: u32, image_height: u32) -> String {
    let q = |v: f64, extent: u32| -> u32 {
        if extent == 0 {
            return 0;
        }
        let scaled = (v / extent as f64 * BOX_GRID as f64).round();
        scaled.clamp(0.0, BOX_GRID as f64) as u32
    };
    format!(
        "{} {} {} {}",
        q(bbox.x1, image_width),
        q(bbox.y1, image_height),
        q(bbox.x2, image_width),
        q(bbox.y2, image_height)
    )
}

/// Runtime values.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    Patch(PatchHandle),
    PatchList(Vec<PatchHandle>),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "str",
            Value::Bool(_) => "bool",
            Value::Patch(_) => "patch",
            Value::PatchList(_) => "patch list",
        }
    }

    /// Canonical rendering: ints in decimal, floats with 3 decimals, bools
    /// as True/False, boxes on the 0-999 grid.
    pub fn render(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Float(v) => format!("{v:.3}"),
            Value::Str(s) => s.clone(),
            Value::Bool(b) => (if *b { "True" } else { "False" }).to_string(),
            Value::Patch(p) => p.grid_box(),
            Value::PatchList(ps) => {
                let boxes: Vec<String> = ps.iter().map(PatchHandle::grid_box).collect();
                format!("[{}]", boxes.join(", "))
            }
        }
    }
}

/// Why an execution failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecErrorKind {
    TypeError,
    IndexOutOfBounds,
    ValueError,
    StepBudgetExhausted,
    ToolError,
}

/// Receiver of a traced tool call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverRef {
    pub patch_id: String,
    /// Grid-quantized "x1 y1 x2 y2".
    #[serde(rename = "box")]
    pub grid_box: String,
}

/// One recorded tool invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 1-based tool-call ordinal, strictly increasing.
    pub step: u32,
    pub tool: String,
    pub receiver: Option<ReceiverRef>,
    pub args: Vec<String>,
    pub result: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TraceOutcome {
    Returned {
        value: String,
    },
    Failed {
        kind: ExecErrorKind,
        message: String,
        /// Step of the last trace entry at failure time; the trace ends
        /// here.
        step: u32,
    },
}

/// Ordered record of every tool call made while executing one program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub entries: Vec<TraceEntry>,
    pub outcome: TraceOutcome,
    pub step_budget_used: u32,
}

impl ExecutionTrace {
    pub fn succeeded(&self) -> bool {
        matches!(self.outcome, TraceOutcome::Returned { .. })
    }

    /// One-entry-per-line debug dump, e.g.
    /// `step 2 verify_property(bus, yellow) on 102 331 407 664 -> True`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&entry.to_string());
            out.push('\n');
        }
        match &self.outcome {
            TraceOutcome::Returned { value } => {
                out.push_str(&format!("returned {value}\n"));
            }
            TraceOutcome::Failed {
                kind,
                message,
                step,
            } => {
                out.push_str(&format!("failed at step {step}: {kind:?}: {message}\n"));
            }
        }
        out
    }
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {} {}({})", self.step, self.tool, self.args.join(", "))?;
        if let Some(receiver) = &self.receiver {
            if receiver.patch_id != "image" {
                write!(f, " on {}", receiver.grid_box)?;
            }
        }
        write!(f, " -> {}", self.result)
    }
}

/// Execute a parsed program against a visual input.
///
/// Returns the rendered result (absent on failure) and the complete trace.
pub fn execute(
    program: &Program,
    input: &VisualInput,
    tools: &ToolRegistry,
    budget: StepBudget,
) -> (Option<String>, ExecutionTrace) {
    eval::run(program, input, tools, budget)
}
