//! The Visual Program Language: a restricted, deterministic Python subset
//! for tool-use programs of the form
//!
//! ```text
//! def execute_command(image):
//!     count = 0
//!     patches = image.find("bus")
//!     for patch in patches:
//!         if patch.verify_property("bus", "yellow"):
//!             count += 1
//!     return str(count)
//! ```
//!
//! Deliberately absent: imports, while-loops, nested function definitions,
//! try/except, comprehensions, slicing. Every callable name must come from
//! the closed builtin set, every variable must be assigned before use, and
//! every path must return; programs over 200 statements are rejected. The
//! grammar is published in `docs/vpl_grammar.ebnf`.

mod check;
mod lexer;
mod parser;
mod printer;

pub use check::{FREE_FUNCTIONS, METHODS, PATCH_ATTRS};
pub use printer::pretty_print;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Hard cap on total statement count.
pub const MAX_STATEMENTS: usize = 200;

/// A parsed, statically checked program.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    /// Original source text as given to [`parse`].
    pub source: String,
    /// Body of `execute_command(image)`.
    pub ast: Vec<Stmt>,
    /// 64-bit content hash of the canonical pretty-print; formatting
    /// variants of the same program share a hash.
    pub program_hash: u64,
}

impl Program {
    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.program_hash)
    }
}

/// Statements. `If` carms one arm per `if`/`elif` condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Stmt {
    Assign {
        name: String,
        value: Expr,
    },
    /// `name += value`, the only augmented assignment.
    AugAssign {
        name: String,
        value: Expr,
    },
    For {
        var: String,
        iterable: Expr,
        body: Vec<Stmt>,
    },
    If {
        arms: Vec<IfArm>,
        else_body: Option<Vec<Stmt>>,
    },
    Return {
        value: Expr,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfArm {
    pub condition: Expr,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            CompareOp::Eq => "==",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoolOp {
    And,
    Or,
}

/// Expressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    IntLit(i64),
    FloatLit(f64),
    StrLit(String),
    BoolLit(bool),
    Var(String),
    Index {
        receiver: Box<Expr>,
        index: Box<Expr>,
    },
    Compare {
        op: CompareOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Arith {
        op: ArithOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    BoolBin {
        op: BoolOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Not(Box<Expr>),
    /// Free-function call; `callee` is from the closed builtin set.
    Call {
        callee: String,
        args: Vec<Expr>,
    },
    /// Method call on a patch value; `name` is from the closed builtin set.
    MethodCall {
        receiver: Box<Expr>,
        name: String,
        args: Vec<Expr>,
    },
    /// Read-only accessor attribute on a patch value.
    Attr {
        receiver: Box<Expr>,
        name: String,
    },
}

/// Why parsing failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseErrorKind {
    Lexical,
    Syntax,
    Static(StaticErrorKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StaticErrorKind {
    UnknownBuiltin,
    UseBeforeAssign,
    MissingReturn,
    TooManyStatements,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[error("{kind:?} error at {line}:{col}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// 1-based; 0 when the error is not tied to a source position.
    pub line: u32,
    pub col: u32,
    /// Token descriptions that would have been accepted here (syntax
    /// errors only).
    pub expected: Vec<String>,
    pub message: String,
}

impl ParseError {
    pub(crate) fn lexical(line: u32, col: u32, message: impl Into<String>) -> Self {
        Self {
            kind: ParseErrorKind::Lexical,
            line,
            col,
            expected: Vec::new(),
            message: message.into(),
        }
    }

    pub(crate) fn syntax(
        line: u32,
        col: u32,
        expected: Vec<String>,
        message: impl Into<String>,
    ) -> Self {
        Self {
            kind: ParseErrorKind::Syntax,
            line,
            col,
            expected,
            message: message.into(),
        }
    }

    pub(crate) fn of_static(kind: StaticErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind: ParseErrorKind::Static(kind),
            line: 0,
            col: 0,
            expected: Vec::new(),
            message: message.into(),
        }
    }
}

/// Parse, statically check, and hash a program.
pub fn parse(source: &str) -> Result<Program, ParseError> {
    let tokens = lexer::lex(source)?;
    let ast = parser::parse_tokens(&tokens)?;
    check::check(&ast)?;
    let program_hash = hash_ast(&ast);
    Ok(Program {
        source: source.to_string(),
        ast,
        program_hash,
    })
}

/// Content hash of the canonical rendering of a body.
pub(crate) fn hash_ast(ast: &[Stmt]) -> u64 {
    let canonical = printer::render_body(ast);
    let digest = Sha256::digest(canonical.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields >= 8 bytes"))
}

/// Total number of statements, counting nested bodies.
pub fn statement_count(ast: &[Stmt]) -> usize {
    ast.iter()
        .map(|stmt| match stmt {
            Stmt::For { body, .. } => 1 + statement_count(body),
            Stmt::If { arms, else_body } => {
                1 + arms.iter().map(|arm| statement_count(&arm.body)).sum::<usize>()
                    + else_body.as_deref().map(statement_count).unwrap_or(0)
            }
            _ => 1,
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    const COUNTING: &str = "def execute_command(image):\n    count = 0\n    patches = image.find(\"bus\")\n    for patch in patches:\n        if patch.verify_property(\"bus\", \"yellow\"):\n            count += 1\n    return str(count)\n";

    #[test]
    fn minimal_program_parses() {
        let p = parse("def execute_command(image):\n    return image.simple_query('What is this?')").unwrap();
        assert_eq!(p.ast.len(), 1);
        assert!(matches!(p.ast[0], Stmt::Return { .. }));
    }

    #[test]
    fn counting_program_parses() {
        let p = parse(COUNTING).unwrap();
        assert_eq!(p.ast.len(), 4);
        assert_eq!(statement_count(&p.ast), 6);
    }

    #[test]
    fn unknown_builtin_is_a_static_error() {
        let err = parse("def execute_command(image):\n    return image.magic()").unwrap_err();
        assert_eq!(
            err.kind,
            ParseErrorKind::Static(StaticErrorKind::UnknownBuiltin)
        );
        assert!(err.message.contains("magic"));
    }

    #[test]
    fn use_before_assign_is_a_static_error() {
        let err = parse("def execute_command(image):\n    return str(count)").unwrap_err();
        assert_eq!(
            err.kind,
            ParseErrorKind::Static(StaticErrorKind::UseBeforeAssign)
        );
    }

    #[test]
    fn missing_return_is_a_static_error() {
        let err = parse("def execute_command(image):\n    x = 1").unwrap_err();
        assert_eq!(
            err.kind,
            ParseErrorKind::Static(StaticErrorKind::MissingReturn)
        );
    }

    #[test]
    fn if_without_else_does_not_guarantee_return() {
        let src = "def execute_command(image):\n    if image.exists(\"dog\"):\n        return \"yes\"";
        let err = parse(src).unwrap_err();
        assert_eq!(
            err.kind,
            ParseErrorKind::Static(StaticErrorKind::MissingReturn)
        );
    }

    #[test]
    fn whitespace_variants_share_a_hash() {
        let a = parse(COUNTING).unwrap();
        let b = parse(&COUNTING.replace("    ", "  ")).unwrap();
        let c = parse(&format!("# counts buses\n{COUNTING}\n")).unwrap();
        assert_eq!(a.program_hash, b.program_hash);
        assert_eq!(a.program_hash, c.program_hash);
    }

    #[test]
    fn statement_limit_is_enforced() {
        let mut src = String::from("def execute_command(image):\n");
        for i in 0..MAX_STATEMENTS {
            src.push_str(&format!("    x{i} = {i}\n"));
        }
        src.push_str("    return str(x0)\n");
        let err = parse(&src).unwrap_err();
        assert_eq!(
            err.kind,
            ParseErrorKind::Static(StaticErrorKind::TooManyStatements)
        );
    }

    #[test]
    fn round_trip_preserves_ast() {
        let p = parse(COUNTING).unwrap();
        let printed = pretty_print(&p);
        let reparsed = parse(&printed).unwrap();
        assert_eq!(p.ast, reparsed.ast);
        assert_eq!(p.program_hash, reparsed.program_hash);
        // Idempotence: printing a canonical program is a fixed point.
        assert_eq!(printed, pretty_print(&reparsed));
    }
}
