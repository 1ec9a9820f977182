//! Shared helpers for the integration suites: hand-built fixture scenes
//! and a seeded random-AST generator for parser fuzzing.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use cotpipe::scene::{BoundingBox, SceneGraph, SceneObject};
use cotpipe::vpl::{ArithOp, BoolOp, CompareOp, Expr, IfArm, Program, Stmt};

pub fn obj(
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

pub fn scene_1000(scene_id: &str, objects: Vec<SceneObject>) -> SceneGraph {
    let scene = SceneGraph {
        scene_id: scene_id.to_string(),
        width: 1000,
        height: 1000,
        objects,
        relations: vec![],
    };
    scene.validate().unwrap();
    scene
}

/// Three buses, one yellow, plus a bystander dog.
pub fn three_bus_scene() -> SceneGraph {
    scene_1000(
        "s_buses",
        vec![
            obj("o0", "bus", (102.0, 331.0, 407.0, 664.0), &["yellow"], 0.4),
            obj("o1", "bus", (463.0, 322.0, 766.0, 658.0), &["red"], 0.5),
            obj("o2", "bus", (790.0, 341.0, 952.0, 655.0), &[], 0.6),
            obj("o3", "dog", (20.0, 700.0, 180.0, 920.0), &["brown"], 0.2),
        ],
    )
}

/// One tennis ball whose box quantizes to "826 665 869 721".
pub fn tennis_ball_scene() -> SceneGraph {
    scene_1000(
        "s_tennis",
        vec![
            obj("o0", "tennis ball", (827.0, 666.0, 870.0, 722.0), &["yellow"], 0.3),
            obj("o1", "person", (100.0, 100.0, 420.0, 900.0), &[], 0.5),
        ],
    )
}

// ── Random-AST fuzzing ────────────────────────────────────────────────

const VARS: [&str; 6] = ["a", "b", "c", "total", "value", "flag"];
const CATEGORIES: [&str; 5] = ["bus", "dog", "cat", "cup", "tree"];
const PROPERTIES: [&str; 4] = ["yellow", "red", "wooden", "shiny"];

/// A random program that passes every static check: only builtin names,
/// variables assigned before use, all paths return.
pub fn random_program(rng: &mut ChaCha8Rng) -> Program {
    let mut assigned: Vec<String> = vec!["image".to_string()];
    let mut body = random_block(rng, &mut assigned, 0, 4);
    body.push(Stmt::Return {
        value: random_expr(rng, &assigned, 2),
    });
    let ast = body;
    let program = Program {
        source: String::new(),
        program_hash: 0,
        ast,
    };
    // Re-parse the canonical print to get a fully consistent Program.
    cotpipe::vpl::parse(&cotpipe::vpl::pretty_print(&program)).expect("generated program parses")
}

fn random_block(
    rng: &mut ChaCha8Rng,
    assigned: &mut Vec<String>,
    depth: usize,
    max_stmts: usize,
) -> Vec<Stmt> {
    let n = rng.gen_range(1..=max_stmts);
    let mut block = Vec::new();
    for _ in 0..n {
        block.push(random_stmt(rng, assigned, depth));
    }
    block
}

fn random_stmt(rng: &mut ChaCha8Rng, assigned: &mut Vec<String>, depth: usize) -> Stmt {
    let can_nest = depth < 2;
    match rng.gen_range(0..if can_nest { 6 } else { 4 }) {
        0 | 1 => {
            let name = VARS[rng.gen_range(0..VARS.len())].to_string();
            let value = random_expr(rng, assigned, 2);
            if !assigned.contains(&name) {
                assigned.push(name.clone());
            }
            Stmt::Assign { name, value }
        }
        2 => {
            // AugAssign needs an existing non-image variable; fall back to
            // a fresh assignment when none exists.
            let candidates: Vec<&String> =
                assigned.iter().filter(|v| v.as_str() != "image").collect();
            if candidates.is_empty() {
                let name = VARS[0].to_string();
                let value = random_expr(rng, assigned, 2);
                assigned.push(name.clone());
                Stmt::Assign { name, value }
            } else {
                let name = candidates[rng.gen_range(0..candidates.len())].clone();
                Stmt::AugAssign {
                    name,
                    value: random_expr(rng, assigned, 1),
                }
            }
        }
        3 => Stmt::Return {
            value: random_expr(rng, assigned, 2),
        },
        4 => {
            // For loop: body assignments are not definite afterwards.
            let var = format!("item{depth}");
            let iterable = Expr::MethodCall {
                receiver: Box::new(Expr::Var("image".to_string())),
                name: "find".to_string(),
                args: vec![random_category(rng)],
            };
            let mut inner = assigned.clone();
            inner.push(var.clone());
            let body = random_block(rng, &mut inner, depth + 1, 3);
            Stmt::For {
                var,
                iterable,
                body,
            }
        }
        _ => {
            let n_arms = rng.gen_range(1..=2);
            let mut arms = Vec::new();
            for _ in 0..n_arms {
                let mut inner = assigned.clone();
                arms.push(IfArm {
                    condition: random_bool_expr(rng, assigned, 1),
                    body: random_block(rng, &mut inner, depth + 1, 3),
                });
            }
            let else_body = if rng.gen_bool(0.5) {
                let mut inner = assigned.clone();
                Some(random_block(rng, &mut inner, depth + 1, 3))
            } else {
                None
            };
            Stmt::If { arms, else_body }
        }
    }
}

fn random_category(rng: &mut ChaCha8Rng) -> Expr {
    Expr::StrLit(CATEGORIES[rng.gen_range(0..CATEGORIES.len())].to_string())
}

fn random_expr(rng: &mut ChaCha8Rng, assigned: &[String], depth: usize) -> Expr {
    if depth == 0 {
        return random_atom(rng, assigned);
    }
    match rng.gen_range(0..10) {
        0 => Expr::Arith {
            op: [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div]
                [rng.gen_range(0..4)],
            left: Box::new(random_expr(rng, assigned, depth - 1)),
            right: Box::new(random_expr(rng, assigned, depth - 1)),
        },
        1 => random_bool_expr(rng, assigned, depth - 1),
        2 => Expr::Call {
            callee: "len".to_string(),
            args: vec![find_expr(rng)],
        },
        3 => Expr::Call {
            callee: "str".to_string(),
            args: vec![random_expr(rng, assigned, depth - 1)],
        },
        4 => Expr::Call {
            callee: "int".to_string(),
            args: vec![random_expr(rng, assigned, depth - 1)],
        },
        5 => Expr::MethodCall {
            receiver: Box::new(Expr::Var("image".to_string())),
            name: "simple_query".to_string(),
            args: vec![Expr::StrLit("What is this?".to_string())],
        },
        6 => Expr::Index {
            receiver: Box::new(find_expr(rng)),
            index: Box::new(Expr::IntLit(rng.gen_range(0..3))),
        },
        7 => Expr::Attr {
            receiver: Box::new(Expr::Index {
                receiver: Box::new(find_expr(rng)),
                index: Box::new(Expr::IntLit(0)),
            }),
            name: ["left", "right", "top", "bottom", "center_x", "center_y"]
                [rng.gen_range(0..6)]
            .to_string(),
        },
        _ => random_atom(rng, assigned),
    }
}

fn find_expr(rng: &mut ChaCha8Rng) -> Expr {
    Expr::MethodCall {
        receiver: Box::new(Expr::Var("image".to_string())),
        name: "find".to_string(),
        args: vec![random_category(rng)],
    }
}

fn random_bool_expr(rng: &mut ChaCha8Rng, assigned: &[String], depth: usize) -> Expr {
    match rng.gen_range(0..4) {
        0 if depth > 0 => Expr::BoolBin {
            op: if rng.gen_bool(0.5) {
                BoolOp::And
            } else {
                BoolOp::Or
            },
            left: Box::new(random_bool_expr(rng, assigned, depth - 1)),
            right: Box::new(random_bool_expr(rng, assigned, depth - 1)),
        },
        1 if depth > 0 => Expr::Not(Box::new(random_bool_expr(rng, assigned, depth - 1))),
        2 => Expr::MethodCall {
            receiver: Box::new(Expr::Var("image".to_string())),
            name: "exists".to_string(),
            args: vec![random_category(rng)],
        },
        _ => Expr::Compare {
            op: [
                CompareOp::Eq,
                CompareOp::Ne,
                CompareOp::Lt,
                CompareOp::Le,
                CompareOp::Gt,
                CompareOp::Ge,
            ][rng.gen_range(0..6)],
            left: Box::new(random_atom(rng, assigned)),
            right: Box::new(random_atom(rng, assigned)),
        },
    }
}

fn random_atom(rng: &mut ChaCha8Rng, assigned: &[String]) -> Expr {
    // Literals stay non-negative: the grammar has no unary minus.
    match rng.gen_range(0..6) {
        0 => Expr::IntLit(rng.gen_range(0..100)),
        1 => Expr::FloatLit((rng.gen_range(0.0..50.0f64) * 4.0).round() / 4.0),
        2 => Expr::StrLit(PROPERTIES[rng.gen_range(0..PROPERTIES.len())].to_string()),
        3 => Expr::BoolLit(rng.gen_bool(0.5)),
        4 if assigned.len() > 1 => {
            Expr::Var(assigned[rng.gen_range(1..assigned.len())].clone())
        }
        _ => Expr::IntLit(rng.gen_range(0..10)),
    }
}
