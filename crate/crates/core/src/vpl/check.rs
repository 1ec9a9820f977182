//! Static checks: closed-world builtin names, definite assignment, and
//! guaranteed return. Runs on every parse; a program that passes here can
//! only fail at runtime for value-level reasons (types, bounds, budget,
//! tools).

use std::collections::BTreeSet;

use super::{Expr, ParseError, StaticErrorKind, Stmt};

/// Free functions callable without a receiver.
pub const FREE_FUNCTIONS: [&str; 5] = ["len", "str", "int", "bool_to_yesno", "distance"];

/// Methods callable on the image or any patch.
pub const METHODS: [&str; 7] = [
    "find",
    "exists",
    "verify_property",
    "simple_query",
    "compute_depth",
    "crop",
    "llm_query",
];

/// Read-only accessor attributes of a patch.
pub const PATCH_ATTRS: [&str; 6] = ["left", "right", "top", "bottom", "center_x", "center_y"];

pub(crate) fn check(ast: &[Stmt]) -> Result<(), ParseError> {
    let count = super::statement_count(ast);
    if count > super::MAX_STATEMENTS {
        return Err(ParseError::of_static(
            StaticErrorKind::TooManyStatements,
            format!(
                "program has {count} statements; the limit is {}",
                super::MAX_STATEMENTS
            ),
        ));
    }

    let mut assigned = BTreeSet::from(["image".to_string()]);
    check_block(ast, &mut assigned)?;

    if !block_returns(ast) {
        return Err(ParseError::of_static(
            StaticErrorKind::MissingReturn,
            "not every path through the function returns a value",
        ));
    }
    Ok(())
}

/// Definite-assignment walk. `assigned` is extended with names this block
/// assigns on every path.
fn check_block(block: &[Stmt], assigned: &mut BTreeSet<String>) -> Result<(), ParseError> {
    for stmt in block {
        match stmt {
            Stmt::Assign { name, value } => {
                check_expr(value, assigned)?;
                assigned.insert(name.clone());
            }
            Stmt::AugAssign { name, value } => {
                if !assigned.contains(name) {
                    return Err(use_before_assign(name));
                }
                check_expr(value, assigned)?;
            }
            Stmt::For {
                var,
                iterable,
                body,
            } => {
                check_expr(iterable, assigned)?;
                // The body may run zero times: its assignments (and the
                // loop variable) are not definite afterwards.
                let mut inner = assigned.clone();
                inner.insert(var.clone());
                check_block(body, &mut inner)?;
            }
            Stmt::If { arms, else_body } => {
                let mut results: Vec<BTreeSet<String>> = Vec::new();
                for arm in arms {
                    check_expr(&arm.condition, assigned)?;
                    let mut inner = assigned.clone();
                    check_block(&arm.body, &mut inner)?;
                    results.push(inner);
                }
                match else_body {
                    Some(body) => {
                        let mut inner = assigned.clone();
                        check_block(body, &mut inner)?;
                        results.push(inner);
                        // With an else, a name assigned in every branch is
                        // definite afterwards.
                        let common = results
                            .iter()
                            .skip(1)
                            .fold(results[0].clone(), |acc, set| &acc & set);
                        assigned.extend(common);
                    }
                    None => {
                        // Without an else the fallthrough path assigns
                        // nothing.
                    }
                }
            }
            Stmt::Return { value } => check_expr(value, assigned)?,
        }
    }
    Ok(())
}

fn use_before_assign(name: &str) -> ParseError {
    ParseError::of_static(
        StaticErrorKind::UseBeforeAssign,
        format!("variable {name:?} may be used before assignment"),
    )
}

fn check_expr(expr: &Expr, assigned: &BTreeSet<String>) -> Result<(), ParseError> {
    match expr {
        Expr::IntLit(_) | Expr::FloatLit(_) | Expr::StrLit(_) | Expr::BoolLit(_) => Ok(()),
        Expr::Var(name) => {
            if assigned.contains(name) {
                Ok(())
            } else {
                Err(use_before_assign(name))
            }
        }
        Expr::Index { receiver, index } => {
            check_expr(receiver, assigned)?;
            check_expr(index, assigned)
        }
        Expr::Compare { left, right, .. }
        | Expr::Arith { left, right, .. }
        | Expr::BoolBin { left, right, .. } => {
            check_expr(left, assigned)?;
            check_expr(right, assigned)
        }
        Expr::Not(inner) => check_expr(inner, assigned),
        Expr::Call { callee, args } => {
            if !FREE_FUNCTIONS.contains(&callee.as_str()) {
                return Err(ParseError::of_static(
                    StaticErrorKind::UnknownBuiltin,
                    format!("unknown builtin {callee:?}"),
                ));
            }
            args.iter().try_for_each(|a| check_expr(a, assigned))
        }
        Expr::MethodCall {
            receiver,
            name,
            args,
        } => {
            if !METHODS.contains(&name.as_str()) {
                return Err(ParseError::of_static(
                    StaticErrorKind::UnknownBuiltin,
                    format!("unknown builtin {name:?}"),
                ));
            }
            check_expr(receiver, assigned)?;
            args.iter().try_for_each(|a| check_expr(a, assigned))
        }
        Expr::Attr { receiver, name } => {
            if !PATCH_ATTRS.contains(&name.as_str()) {
                return Err(ParseError::of_static(
                    StaticErrorKind::UnknownBuiltin,
                    format!("unknown builtin {name:?}"),
                ));
            }
            check_expr(receiver, assigned)
        }
    }
}

/// Does every path through the block hit a return?
fn block_returns(block: &[Stmt]) -> bool {
    block.iter().any(|stmt| match stmt {
        Stmt::Return { .. } => true,
        Stmt::If { arms, else_body } => {
            else_body.as_deref().is_some_and(block_returns)
                && arms.iter().all(|arm| block_returns(&arm.body))
        }
        // A for body may run zero times; it guarantees nothing.
        _ => false,
    })
}
