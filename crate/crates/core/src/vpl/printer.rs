//! Canonical pretty-printer: 4-space indentation, double-quoted strings,
//! minimal parentheses. `parse(pretty_print(p)).ast == p.ast`, and the
//! printed form is the input to the program hash.

use std::fmt::Write;

use super::{ArithOp, BoolOp, Expr, Program, Stmt};

/// Canonical rendering of a whole program.
pub fn pretty_print(program: &Program) -> String {
    format!("def execute_command(image):\n{}", render_body(&program.ast))
}

/// Canonical rendering of a function body at one indent level.
pub(crate) fn render_body(ast: &[Stmt]) -> String {
    let mut out = String::new();
    for stmt in ast {
        render_stmt(stmt, 1, &mut out);
    }
    out
}

fn render_stmt(stmt: &Stmt, depth: usize, out: &mut String) {
    let pad = "    ".repeat(depth);
    match stmt {
        Stmt::Assign { name, value } => {
            let _ = writeln!(out, "{pad}{name} = {}", render_expr(value, 0));
        }
        Stmt::AugAssign { name, value } => {
            let _ = writeln!(out, "{pad}{name} += {}", render_expr(value, 0));
        }
        Stmt::For {
            var,
            iterable,
            body,
        } => {
            let _ = writeln!(out, "{pad}for {var} in {}:", render_expr(iterable, 0));
            for inner in body {
                render_stmt(inner, depth + 1, out);
            }
        }
        Stmt::If { arms, else_body } => {
            for (idx, arm) in arms.iter().enumerate() {
                let kw = if idx == 0 { "if" } else { "elif" };
                let _ = writeln!(out, "{pad}{kw} {}:", render_expr(&arm.condition, 0));
                for inner in &arm.body {
                    render_stmt(inner, depth + 1, out);
                }
            }
            if let Some(body) = else_body {
                let _ = writeln!(out, "{pad}else:");
                for inner in body {
                    render_stmt(inner, depth + 1, out);
                }
            }
        }
        Stmt::Return { value } => {
            let _ = writeln!(out, "{pad}return {}", render_expr(value, 0));
        }
    }
}

// Binding strength, loosest to tightest. An expression is parenthesized
// when its own level is below what its context requires.
const PREC_OR: u8 = 1;
const PREC_AND: u8 = 2;
const PREC_NOT: u8 = 3;
const PREC_CMP: u8 = 4;
const PREC_ADD: u8 = 5;
const PREC_MUL: u8 = 6;
const PREC_POSTFIX: u8 = 7;

fn render_expr(expr: &Expr, min_prec: u8) -> String {
    let (text, prec) = match expr {
        Expr::IntLit(v) => (v.to_string(), PREC_POSTFIX),
        Expr::FloatLit(v) => (render_float(*v), PREC_POSTFIX),
        Expr::StrLit(s) => (render_str(s), PREC_POSTFIX),
        Expr::BoolLit(b) => ((if *b { "True" } else { "False" }).to_string(), PREC_POSTFIX),
        Expr::Var(name) => (name.clone(), PREC_POSTFIX),
        Expr::Index { receiver, index } => (
            format!(
                "{}[{}]",
                render_expr(receiver, PREC_POSTFIX),
                render_expr(index, 0)
            ),
            PREC_POSTFIX,
        ),
        Expr::Compare { op, left, right } => (
            format!(
                "{} {} {}",
                render_expr(left, PREC_ADD),
                op.symbol(),
                render_expr(right, PREC_ADD)
            ),
            PREC_CMP,
        ),
        Expr::Arith { op, left, right } => {
            let (own, next) = match op {
                ArithOp::Add | ArithOp::Sub => (PREC_ADD, PREC_MUL),
                ArithOp::Mul | ArithOp::Div => (PREC_MUL, PREC_POSTFIX),
            };
            (
                format!(
                    "{} {} {}",
                    render_expr(left, own),
                    op.symbol(),
                    render_expr(right, next)
                ),
                own,
            )
        }
        Expr::BoolBin { op, left, right } => {
            let (own, word) = match op {
                BoolOp::Or => (PREC_OR, "or"),
                BoolOp::And => (PREC_AND, "and"),
            };
            (
                format!(
                    "{} {word} {}",
                    render_expr(left, own),
                    render_expr(right, own + 1)
                ),
                own,
            )
        }
        Expr::Not(inner) => (
            format!("not {}", render_expr(inner, PREC_NOT)),
            PREC_NOT,
        ),
        Expr::Call { callee, args } => (
            format!("{callee}({})", render_args(args)),
            PREC_POSTFIX,
        ),
        Expr::MethodCall {
            receiver,
            name,
            args,
        } => (
            format!(
                "{}.{name}({})",
                render_expr(receiver, PREC_POSTFIX),
                render_args(args)
            ),
            PREC_POSTFIX,
        ),
        Expr::Attr { receiver, name } => (
            format!("{}.{name}", render_expr(receiver, PREC_POSTFIX)),
            PREC_POSTFIX,
        ),
    };
    if prec < min_prec {
        format!("({text})")
    } else {
        text
    }
}

fn render_args(args: &[Expr]) -> String {
    args.iter()
        .map(|a| render_expr(a, 0))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Floats keep a decimal point so they re-lex as floats.
fn render_float(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

fn render_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
