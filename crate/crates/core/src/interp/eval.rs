//! The tree-walking evaluator.

use std::collections::BTreeMap;

use crate::scene::BoundingBox;
use crate::tools::{ToolRegistry, VisualInput};
use crate::vpl::{ArithOp, BoolOp, CompareOp, Expr, Program, Stmt};

use super::{
    ExecErrorKind, ExecutionTrace, PatchHandle, ReceiverRef, StepBudget, TraceEntry, TraceOutcome,
    Value,
};

/// Tool methods that go through the registry and are recorded in the
/// trace. `crop` is pure geometry and the free functions are pure values;
/// neither is a vision-module call.
pub(crate) const TRACED_TOOLS: [&str; 6] = [
    "find",
    "exists",
    "verify_property",
    "simple_query",
    "compute_depth",
    "llm_query",
];

struct Failure {
    kind: ExecErrorKind,
    message: String,
}

impl Failure {
    fn new(kind: ExecErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    fn type_error(message: impl Into<String>) -> Self {
        Self::new(ExecErrorKind::TypeError, message)
    }
}

type Eval<T> = Result<T, Failure>;

enum Flow {
    Normal,
    Returned(Value),
}

struct Interp<'a> {
    tools: &'a ToolRegistry,
    input: &'a VisualInput,
    env: BTreeMap<String, Value>,
    trace: Vec<TraceEntry>,
    steps_used: u32,
    budget: u32,
    crop_counter: u32,
}

pub(super) fn run(
    program: &Program,
    input: &VisualInput,
    tools: &ToolRegistry,
    budget: StepBudget,
) -> (Option<String>, ExecutionTrace) {
    let root = input.root_patch();
    let mut env = BTreeMap::new();
    env.insert("image".to_string(), Value::Patch(root));
    let mut interp = Interp {
        tools,
        input,
        env,
        trace: Vec::new(),
        steps_used: 0,
        budget: budget.0.max(1),
        crop_counter: 0,
    };

    match interp.eval_block(&program.ast) {
        Ok(Flow::Returned(value)) => {
            let rendered = value.render();
            let trace = ExecutionTrace {
                entries: interp.trace,
                outcome: TraceOutcome::Returned {
                    value: rendered.clone(),
                },
                step_budget_used: interp.steps_used,
            };
            (Some(rendered), trace)
        }
        Ok(Flow::Normal) => {
            // Statically unreachable (missing-return check); keep a typed
            // failure rather than a panic.
            let step = interp.trace.len() as u32;
            let trace = ExecutionTrace {
                entries: interp.trace,
                outcome: TraceOutcome::Failed {
                    kind: ExecErrorKind::ValueError,
                    message: "function ended without returning".to_string(),
                    step,
                },
                step_budget_used: interp.steps_used,
            };
            (None, trace)
        }
        Err(failure) => {
            let step = interp.trace.len() as u32;
            let trace = ExecutionTrace {
                entries: interp.trace,
                outcome: TraceOutcome::Failed {
                    kind: failure.kind,
                    message: failure.message,
                    step,
                },
                step_budget_used: interp.steps_used,
            };
            (None, trace)
        }
    }
}

impl<'a> Interp<'a> {
    fn step(&mut self) -> Eval<()> {
        self.steps_used += 1;
        if self.steps_used > self.budget {
            return Err(Failure::new(
                ExecErrorKind::StepBudgetExhausted,
                format!("step budget of {} exhausted", self.budget),
            ));
        }
        Ok(())
    }

    fn eval_block(&mut self, block: &[Stmt]) -> Eval<Flow> {
        for stmt in block {
            if let Flow::Returned(v) = self.eval_stmt(stmt)? {
                return Ok(Flow::Returned(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn eval_stmt(&mut self, stmt: &Stmt) -> Eval<Flow> {
        self.step()?;
        match stmt {
            Stmt::Assign { name, value } => {
                let value = self.eval_expr(value)?;
                self.env.insert(name.clone(), value);
                Ok(Flow::Normal)
            }
            Stmt::AugAssign { name, value } => {
                let rhs = self.eval_expr(value)?;
                let current = self.lookup(name)?;
                let sum = arith(ArithOp::Add, current, rhs)?;
                self.env.insert(name.clone(), sum);
                Ok(Flow::Normal)
            }
            Stmt::For {
                var,
                iterable,
                body,
            } => {
                let items = match self.eval_expr(iterable)? {
                    Value::PatchList(items) => items,
                    other => {
                        return Err(Failure::type_error(format!(
                            "for-loop iterable must be a patch list, got {}",
                            other.type_name()
                        )))
                    }
                };
                for item in items {
                    self.env.insert(var.clone(), Value::Patch(item));
                    if let Flow::Returned(v) = self.eval_block(body)? {
                        return Ok(Flow::Returned(v));
                    }
                }
                Ok(Flow::Normal)
            }
            Stmt::If { arms, else_body } => {
                for arm in arms {
                    if self.eval_condition(&arm.condition)? {
                        return self.eval_block(&arm.body);
                    }
                }
                if let Some(body) = else_body {
                    return self.eval_block(body);
                }
                Ok(Flow::Normal)
            }
            Stmt::Return { value } => {
                let value = self.eval_expr(value)?;
                Ok(Flow::Returned(value))
            }
        }
    }

    fn eval_condition(&mut self, expr: &Expr) -> Eval<bool> {
        match self.eval_expr(expr)? {
            Value::Bool(b) => Ok(b),
            other => Err(Failure::type_error(format!(
                "condition must be a bool, got {}",
                other.type_name()
            ))),
        }
    }

    fn lookup(&self, name: &str) -> Eval<Value> {
        self.env.get(name).cloned().ok_or_else(|| {
            Failure::type_error(format!("variable {name:?} is not bound"))
        })
    }

    fn eval_expr(&mut self, expr: &Expr) -> Eval<Value> {
        self.step()?;
        match expr {
            Expr::IntLit(v) => Ok(Value::Int(*v)),
            Expr::FloatLit(v) => Ok(Value::Float(*v)),
            Expr::StrLit(s) => Ok(Value::Str(s.clone())),
            Expr::BoolLit(b) => Ok(Value::Bool(*b)),
            Expr::Var(name) => self.lookup(name),
            Expr::Index { receiver, index } => {
                let receiver = self.eval_expr(receiver)?;
                let index = self.eval_expr(index)?;
                let (Value::PatchList(items), Value::Int(idx)) = (&receiver, &index) else {
                    return Err(Failure::type_error(format!(
                        "cannot index {} with {}",
                        receiver.type_name(),
                        index.type_name()
                    )));
                };
                let idx = *idx;
                if idx < 0 || idx as usize >= items.len() {
                    return Err(Failure::new(
                        ExecErrorKind::IndexOutOfBounds,
                        format!("index {idx} out of bounds for list of {}", items.len()),
                    ));
                }
                Ok(Value::Patch(items[idx as usize].clone()))
            }
            Expr::Compare { op, left, right } => {
                let left = self.eval_expr(left)?;
                let right = self.eval_expr(right)?;
                compare(*op, left, right)
            }
            Expr::Arith { op, left, right } => {
                let left = self.eval_expr(left)?;
                let right = self.eval_expr(right)?;
                arith(*op, left, right)
            }
            Expr::BoolBin { op, left, right } => {
                let left = match self.eval_expr(left)? {
                    Value::Bool(b) => b,
                    other => {
                        return Err(Failure::type_error(format!(
                            "boolean operator needs bool operands, got {}",
                            other.type_name()
                        )))
                    }
                };
                // Short-circuit: the right side (and any tool calls in it)
                // is only evaluated when it can change the result.
                match (op, left) {
                    (BoolOp::And, false) => Ok(Value::Bool(false)),
                    (BoolOp::Or, true) => Ok(Value::Bool(true)),
                    _ => match self.eval_expr(right)? {
                        Value::Bool(b) => Ok(Value::Bool(b)),
                        other => Err(Failure::type_error(format!(
                            "boolean operator needs bool operands, got {}",
                            other.type_name()
                        ))),
                    },
                }
            }
            Expr::Not(inner) => match self.eval_expr(inner)? {
                Value::Bool(b) => Ok(Value::Bool(!b)),
                other => Err(Failure::type_error(format!(
                    "'not' needs a bool operand, got {}",
                    other.type_name()
                ))),
            },
            Expr::Call { callee, args } => {
                let args = args
                    .iter()
                    .map(|a| self.eval_expr(a))
                    .collect::<Eval<Vec<_>>>()?;
                self.call_free_function(callee, args)
            }
            Expr::MethodCall {
                receiver,
                name,
                args,
            } => {
                let receiver = match self.eval_expr(receiver)? {
                    Value::Patch(p) => p,
                    other => {
                        return Err(Failure::type_error(format!(
                            "method .{name}() needs a patch receiver, got {}",
                            other.type_name()
                        )))
                    }
                };
                let args = args
                    .iter()
                    .map(|a| self.eval_expr(a))
                    .collect::<Eval<Vec<_>>>()?;
                if name == "crop" {
                    return self.crop(&receiver, &args);
                }
                self.tool_call(name, &receiver, &args)
            }
            Expr::Attr { receiver, name } => {
                let receiver = match self.eval_expr(receiver)? {
                    Value::Patch(p) => p,
                    other => {
                        return Err(Failure::type_error(format!(
                            "attribute .{name} needs a patch receiver, got {}",
                            other.type_name()
                        )))
                    }
                };
                let value = match name.as_str() {
                    "left" => receiver.left(),
                    "right" => receiver.right(),
                    "top" => receiver.top(),
                    "bottom" => receiver.bottom(),
                    "center_x" => receiver.center_x(),
                    "center_y" => receiver.center_y(),
                    other => {
                        return Err(Failure::type_error(format!("unknown attribute {other:?}")))
                    }
                };
                Ok(Value::Float(value))
            }
        }
    }

    fn call_free_function(&mut self, callee: &str, args: Vec<Value>) -> Eval<Value> {
        let arity = |n: usize| -> Eval<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(Failure::type_error(format!(
                    "{callee}() takes {n} argument(s), got {}",
                    args.len()
                )))
            }
        };
        match callee {
            "len" => {
                arity(1)?;
                match &args[0] {
                    Value::PatchList(items) => Ok(Value::Int(items.len() as i64)),
                    Value::Str(s) => Ok(Value::Int(s.chars().count() as i64)),
                    other => Err(Failure::type_error(format!(
                        "len() needs a patch list or string, got {}",
                        other.type_name()
                    ))),
                }
            }
            "str" => {
                arity(1)?;
                Ok(Value::Str(args[0].render()))
            }
            "int" => {
                arity(1)?;
                match &args[0] {
                    Value::Int(v) => Ok(Value::Int(*v)),
                    Value::Float(v) => Ok(Value::Int(*v as i64)),
                    Value::Bool(b) => Ok(Value::Int(i64::from(*b))),
                    Value::Str(s) => s.trim().parse::<i64>().map(Value::Int).map_err(|_| {
                        Failure::new(
                            ExecErrorKind::ValueError,
                            format!("int() cannot parse {s:?}"),
                        )
                    }),
                    other => Err(Failure::type_error(format!(
                        "int() cannot convert {}",
                        other.type_name()
                    ))),
                }
            }
            "bool_to_yesno" => {
                arity(1)?;
                match &args[0] {
                    Value::Bool(b) => Ok(Value::Str(
                        (if *b { "yes" } else { "no" }).to_string(),
                    )),
                    other => Err(Failure::type_error(format!(
                        "bool_to_yesno() needs a bool, got {}",
                        other.type_name()
                    ))),
                }
            }
            "distance" => {
                arity(2)?;
                let (Value::Patch(a), Value::Patch(b)) = (&args[0], &args[1]) else {
                    return Err(Failure::type_error("distance() needs two patches"));
                };
                let dx = a.center_x() - b.center_x();
                let dy = a.center_y() - b.center_y();
                Ok(Value::Float((dx * dx + dy * dy).sqrt()))
            }
            other => Err(Failure::type_error(format!("unknown builtin {other:?}"))),
        }
    }

    /// Pure geometric crop: the child box is the intersection with the
    /// parent, so crops always compose (child ⊆ parent).
    fn crop(&mut self, receiver: &PatchHandle, args: &[Value]) -> Eval<Value> {
        if args.len() != 4 {
            return Err(Failure::type_error(format!(
                "crop() takes 4 arguments, got {}",
                args.len()
            )));
        }
        let mut coords = [0f64; 4];
        for (slot, arg) in coords.iter_mut().zip(args) {
            *slot = match arg {
                Value::Int(v) => *v as f64,
                Value::Float(v) => *v,
                other => {
                    return Err(Failure::type_error(format!(
                        "crop() needs numeric coordinates, got {}",
                        other.type_name()
                    )))
                }
            };
        }
        let requested =
            BoundingBox::new(coords[0], coords[1], coords[2], coords[3]).map_err(|_| {
                Failure::new(
                    ExecErrorKind::ValueError,
                    format!("crop box ({coords:?}) is degenerate"),
                )
            })?;
        let clipped = receiver.bbox.intersect(&requested).ok_or_else(|| {
            Failure::new(
                ExecErrorKind::ValueError,
                "crop box does not overlap the patch",
            )
        })?;
        self.crop_counter += 1;
        Ok(Value::Patch(PatchHandle {
            patch_id: format!("crop_{}", self.crop_counter),
            scene_ref: receiver.scene_ref.clone(),
            bbox: clipped,
            image_width: receiver.image_width,
            image_height: receiver.image_height,
            object_id: None,
        }))
    }

    fn tool_call(&mut self, tool: &str, receiver: &PatchHandle, args: &[Value]) -> Eval<Value> {
        debug_assert!(TRACED_TOOLS.contains(&tool), "untraced tool {tool}");
        let call_index = self.trace.len() as u32 + 1;
        let rendered_args: Vec<String> = args.iter().map(Value::render).collect();

        let result = self
            .tools
            .invoke(self.input, call_index, tool, receiver, args)
            .map_err(|err| Failure::new(ExecErrorKind::ToolError, err.to_string()))?;

        // Containment: anything a tool detects inside a patch stays inside
        // that patch.
        if let Value::PatchList(patches) = &result {
            for patch in patches {
                debug_assert!(
                    receiver.bbox.contains_box(&patch.bbox),
                    "tool result escapes its receiver"
                );
            }
        }

        self.trace.push(TraceEntry {
            step: call_index,
            tool: tool.to_string(),
            receiver: Some(ReceiverRef {
                patch_id: receiver.patch_id.clone(),
                grid_box: receiver.grid_box(),
            }),
            args: rendered_args,
            result: result.render(),
        });
        Ok(result)
    }
}

fn numeric(value: &Value) -> Option<f64> {
    match value {
        Value::Int(v) => Some(*v as f64),
        Value::Float(v) => Some(*v),
        _ => None,
    }
}

fn compare(op: CompareOp, left: Value, right: Value) -> Eval<Value> {
    use std::cmp::Ordering;
    let ordering: Ordering = match (&left, &right) {
        (Value::Str(a), Value::Str(b)) => a.cmp(b),
        (Value::Bool(a), Value::Bool(b)) => match op {
            CompareOp::Eq | CompareOp::Ne => a.cmp(b),
            _ => {
                return Err(Failure::type_error(
                    "bools only support == and != comparisons",
                ))
            }
        },
        _ => match (numeric(&left), numeric(&right)) {
            (Some(a), Some(b)) => a.partial_cmp(&b).ok_or_else(|| {
                Failure::new(ExecErrorKind::ValueError, "comparison with NaN")
            })?,
            _ => {
                return Err(Failure::type_error(format!(
                    "cannot compare {} with {}",
                    left.type_name(),
                    right.type_name()
                )))
            }
        },
    };
    let result = match op {
        CompareOp::Eq => ordering == Ordering::Equal,
        CompareOp::Ne => ordering != Ordering::Equal,
        CompareOp::Lt => ordering == Ordering::Less,
        CompareOp::Le => ordering != Ordering::Greater,
        CompareOp::Gt => ordering == Ordering::Greater,
        CompareOp::Ge => ordering != Ordering::Less,
    };
    Ok(Value::Bool(result))
}

fn arith(op: ArithOp, left: Value, right: Value) -> Eval<Value> {
    // String concatenation is the one non-numeric case.
    if let (ArithOp::Add, Value::Str(a), Value::Str(b)) = (op, &left, &right) {
        return Ok(Value::Str(format!("{a}{b}")));
    }
    let (Some(a), Some(b)) = (numeric(&left), numeric(&right)) else {
        return Err(Failure::type_error(format!(
            "cannot apply '{}' to {} and {}",
            op.symbol(),
            left.type_name(),
            right.type_name()
        )));
    };
    let both_int = matches!((&left, &right), (Value::Int(_), Value::Int(_)));
    match op {
        ArithOp::Div => {
            if b == 0.0 {
                return Err(Failure::new(ExecErrorKind::ValueError, "division by zero"));
            }
            // Division always yields a float; use int() to truncate.
            Ok(Value::Float(a / b))
        }
        _ if both_int => {
            let (ia, ib) = (a as i64, b as i64);
            let value = match op {
                ArithOp::Add => ia.checked_add(ib),
                ArithOp::Sub => ia.checked_sub(ib),
                ArithOp::Mul => ia.checked_mul(ib),
                ArithOp::Div => unreachable!(),
            };
            value.map(Value::Int).ok_or_else(|| {
                Failure::new(ExecErrorKind::ValueError, "integer overflow")
            })
        }
        _ => Ok(Value::Float(match op {
            ArithOp::Add => a + b,
            ArithOp::Sub => a - b,
            ArithOp::Mul => a * b,
            ArithOp::Div => unreachable!(),
        })),
    }
}
