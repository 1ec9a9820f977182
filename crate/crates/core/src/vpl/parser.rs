//! Recursive-descent parser over the lexer's token stream.

use super::lexer::{Kw, Tok, Token};
use super::{ArithOp, BoolOp, CompareOp, Expr, IfArm, ParseError, Stmt};

pub(crate) fn parse_tokens(tokens: &[Token]) -> Result<Vec<Stmt>, ParseError> {
    let mut p = Parser { tokens, pos: 0 };
    p.parse_program()
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn advance(&mut self) -> &Token {
        let tok = &self.tokens[self.pos.min(self.tokens.len() - 1)];
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        tok
    }

    fn at(&self, tok: &Tok) -> bool {
        &self.peek().tok == tok
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.at(tok) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, context: &str) -> Result<(), ParseError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.error(vec![tok.describe()], context))
        }
    }

    fn error(&self, expected: Vec<String>, context: &str) -> ParseError {
        let here = self.peek();
        ParseError::syntax(
            here.line,
            here.col,
            expected,
            format!("{context}, found {}", here.tok.describe()),
        )
    }

    // program := "def" "execute_command" "(" "image" ")" ":" NEWLINE INDENT stmt+ DEDENT EOF
    fn parse_program(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect(Tok::Keyword(Kw::Def), "expected a function definition")?;
        match &self.advance().tok {
            Tok::Ident(name) if name == "execute_command" => {}
            _ => {
                return Err(self.error(
                    vec!["identifier \"execute_command\"".to_string()],
                    "the function must be named execute_command",
                ))
            }
        }
        self.expect(Tok::LParen, "expected '(' after the function name")?;
        match &self.advance().tok {
            Tok::Ident(param) if param == "image" => {}
            _ => {
                return Err(self.error(
                    vec!["identifier \"image\"".to_string()],
                    "the single parameter must be named image",
                ))
            }
        }
        self.expect(Tok::RParen, "expected ')' after the parameter")?;
        self.expect(Tok::Colon, "expected ':' after the function header")?;
        self.expect(Tok::Newline, "expected a newline after the function header")?;
        let body = self.parse_block()?;
        self.expect(Tok::Eof, "expected end of input after the function body")?;
        Ok(body)
    }

    // block := INDENT stmt+ DEDENT
    fn parse_block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect(Tok::Indent, "expected an indented block")?;
        let mut stmts = Vec::new();
        while !self.at(&Tok::Dedent) && !self.at(&Tok::Eof) {
            stmts.push(self.parse_stmt()?);
        }
        self.expect(Tok::Dedent, "expected the block to end")?;
        if stmts.is_empty() {
            return Err(self.error(vec!["statement".to_string()], "empty block"));
        }
        Ok(stmts)
    }

    fn parse_stmt(&mut self) -> Result<Stmt, ParseError> {
        match &self.peek().tok {
            Tok::Keyword(Kw::Return) => {
                self.advance();
                let value = self.parse_expr()?;
                self.expect(Tok::Newline, "expected end of line after return")?;
                Ok(Stmt::Return { value })
            }
            Tok::Keyword(Kw::For) => self.parse_for(),
            Tok::Keyword(Kw::If) => self.parse_if(),
            Tok::Keyword(Kw::Def) => Err(self.error(
                vec!["statement".to_string()],
                "nested function definitions are not allowed",
            )),
            Tok::Ident(_) => self.parse_assign(),
            _ => Err(self.error(
                vec![
                    "'return'".to_string(),
                    "'for'".to_string(),
                    "'if'".to_string(),
                    "identifier".to_string(),
                ],
                "expected a statement",
            )),
        }
    }

    // for := "for" IDENT "in" expr ":" NEWLINE block
    fn parse_for(&mut self) -> Result<Stmt, ParseError> {
        self.advance(); // for
        let var = match &self.advance().tok {
            Tok::Ident(name) => name.clone(),
            _ => return Err(self.error(vec!["identifier".to_string()], "expected a loop variable")),
        };
        self.expect(Tok::Keyword(Kw::In), "expected 'in' in for statement")?;
        let iterable = self.parse_expr()?;
        self.expect(Tok::Colon, "expected ':' after for header")?;
        self.expect(Tok::Newline, "expected a newline after for header")?;
        let body = self.parse_block()?;
        Ok(Stmt::For {
            var,
            iterable,
            body,
        })
    }

    // if := "if" expr ":" NEWLINE block ("elif" expr ":" NEWLINE block)* ("else" ":" NEWLINE block)?
    fn parse_if(&mut self) -> Result<Stmt, ParseError> {
        self.advance(); // if
        let mut arms = Vec::new();
        let condition = self.parse_expr()?;
        self.expect(Tok::Colon, "expected ':' after if condition")?;
        self.expect(Tok::Newline, "expected a newline after if condition")?;
        arms.push(IfArm {
            condition,
            body: self.parse_block()?,
        });
        loop {
            if self.eat(&Tok::Keyword(Kw::Elif)) {
                let condition = self.parse_expr()?;
                self.expect(Tok::Colon, "expected ':' after elif condition")?;
                self.expect(Tok::Newline, "expected a newline after elif condition")?;
                arms.push(IfArm {
                    condition,
                    body: self.parse_block()?,
                });
            } else if self.eat(&Tok::Keyword(Kw::Else)) {
                self.expect(Tok::Colon, "expected ':' after else")?;
                self.expect(Tok::Newline, "expected a newline after else")?;
                let else_body = self.parse_block()?;
                return Ok(Stmt::If {
                    arms,
                    else_body: Some(else_body),
                });
            } else {
                return Ok(Stmt::If {
                    arms,
                    else_body: None,
                });
            }
        }
    }

    // assign := IDENT ("=" | "+=") expr NEWLINE
    fn parse_assign(&mut self) -> Result<Stmt, ParseError> {
        let name = match &self.advance().tok {
            Tok::Ident(name) => name.clone(),
            _ => unreachable!("caller checked"),
        };
        let stmt = if self.eat(&Tok::Assign) {
            Stmt::Assign {
                name,
                value: self.parse_expr()?,
            }
        } else if self.eat(&Tok::PlusAssign) {
            Stmt::AugAssign {
                name,
                value: self.parse_expr()?,
            }
        } else {
            return Err(self.error(
                vec!["'='".to_string(), "'+='".to_string()],
                "expected an assignment (expression statements are not allowed)",
            ));
        };
        self.expect(Tok::Newline, "expected end of line after assignment")?;
        Ok(stmt)
    }

    // Precedence, loosest first: or < and < not < comparison < +- < */ < postfix.
    fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        self.parse_or()
    }

    fn parse_or(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_and()?;
        while self.eat(&Tok::Keyword(Kw::Or)) {
            let right = self.parse_and()?;
            left = Expr::BoolBin {
                op: BoolOp::Or,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn parse_and(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_not()?;
        while self.eat(&Tok::Keyword(Kw::And)) {
            let right = self.parse_not()?;
            left = Expr::BoolBin {
                op: BoolOp::And,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn parse_not(&mut self) -> Result<Expr, ParseError> {
        if self.eat(&Tok::Keyword(Kw::Not)) {
            Ok(Expr::Not(Box::new(self.parse_not()?)))
        } else {
            self.parse_comparison()
        }
    }

    fn parse_comparison(&mut self) -> Result<Expr, ParseError> {
        let left = self.parse_additive()?;
        let op = match &self.peek().tok {
            Tok::EqEq => Some(CompareOp::Eq),
            Tok::NotEq => Some(CompareOp::Ne),
            Tok::Lt => Some(CompareOp::Lt),
            Tok::Le => Some(CompareOp::Le),
            Tok::Gt => Some(CompareOp::Gt),
            Tok::Ge => Some(CompareOp::Ge),
            _ => None,
        };
        let Some(op) = op else { return Ok(left) };
        self.advance();
        let right = self.parse_additive()?;
        // Chained comparisons (a < b < c) are outside the subset.
        if matches!(
            self.peek().tok,
            Tok::EqEq | Tok::NotEq | Tok::Lt | Tok::Le | Tok::Gt | Tok::Ge
        ) {
            return Err(self.error(
                vec!["end of expression".to_string()],
                "chained comparisons are not allowed",
            ));
        }
        Ok(Expr::Compare {
            op,
            left: Box::new(left),
            right: Box::new(right),
        })
    }

    fn parse_additive(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_multiplicative()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => break,
            };
            self.advance();
            let right = self.parse_multiplicative()?;
            left = Expr::Arith {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn parse_multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_postfix()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                _ => break,
            };
            self.advance();
            let right = self.parse_postfix()?;
            left = Expr::Arith {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    // postfix := primary ( "." IDENT ( "(" args ")" )? | "[" expr "]" )*
    fn parse_postfix(&mut self) -> Result<Expr, ParseError> {
        let mut expr = self.parse_primary()?;
        loop {
            if self.eat(&Tok::Dot) {
                let name = match &self.advance().tok {
                    Tok::Ident(name) => name.clone(),
                    _ => {
                        return Err(self.error(
                            vec!["identifier".to_string()],
                            "expected a method or attribute name after '.'",
                        ))
                    }
                };
                if self.at(&Tok::LParen) {
                    let args = self.parse_args()?;
                    expr = Expr::MethodCall {
                        receiver: Box::new(expr),
                        name,
                        args,
                    };
                } else {
                    expr = Expr::Attr {
                        receiver: Box::new(expr),
                        name,
                    };
                }
            } else if self.eat(&Tok::LBracket) {
                let index = self.parse_expr()?;
                if self.at(&Tok::Colon) {
                    return Err(self.error(
                        vec!["']'".to_string()],
                        "slicing is not allowed",
                    ));
                }
                self.expect(Tok::RBracket, "expected ']' after index")?;
                expr = Expr::Index {
                    receiver: Box::new(expr),
                    index: Box::new(index),
                };
            } else {
                break;
            }
        }
        Ok(expr)
    }

    fn parse_args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect(Tok::LParen, "expected '('")?;
        let mut args = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.parse_expr()?);
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(Tok::RParen, "expected ')' or ',' in argument list")?;
            break;
        }
        Ok(args)
    }

    fn parse_primary(&mut self) -> Result<Expr, ParseError> {
        let tok = self.peek().tok.clone();
        match tok {
            Tok::Int(v) => {
                self.advance();
                Ok(Expr::IntLit(v))
            }
            Tok::Float(v) => {
                self.advance();
                Ok(Expr::FloatLit(v))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Expr::StrLit(s))
            }
            Tok::Keyword(Kw::True) => {
                self.advance();
                Ok(Expr::BoolLit(true))
            }
            Tok::Keyword(Kw::False) => {
                self.advance();
                Ok(Expr::BoolLit(false))
            }
            Tok::Ident(name) => {
                self.advance();
                if self.at(&Tok::LParen) {
                    let args = self.parse_args()?;
                    Ok(Expr::Call { callee: name, args })
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Tok::LParen => {
                self.advance();
                let inner = self.parse_expr()?;
                self.expect(Tok::RParen, "expected ')' to close the group")?;
                Ok(inner)
            }
            Tok::LBracket => Err(self.error(
                vec!["expression".to_string()],
                "list literals and comprehensions are not allowed",
            )),
            _ => Err(self.error(
                vec![
                    "literal".to_string(),
                    "identifier".to_string(),
                    "'('".to_string(),
                    "'not'".to_string(),
                ],
                "expected an expression",
            )),
        }
    }
}
