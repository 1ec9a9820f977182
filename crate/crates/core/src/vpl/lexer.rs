//! Indentation-aware lexer. Produces a flat token stream with explicit
//! Newline/Indent/Dedent tokens, Python style.

use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Keyword(Kw),
    // punctuation / operators
    LParen,
    RParen,
    LBracket,
    RBracket,
    Colon,
    Comma,
    Dot,
    Assign,
    PlusAssign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kw {
    Def,
    Return,
    For,
    In,
    If,
    Elif,
    Else,
    And,
    Or,
    Not,
    True,
    False,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(name) => format!("identifier {name:?}"),
            Tok::Int(v) => format!("integer {v}"),
            Tok::Float(v) => format!("float {v}"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::Keyword(kw) => format!("keyword {:?}", kw).to_lowercase(),
            Tok::LParen => "'('".to_string(),
            Tok::RParen => "')'".to_string(),
            Tok::LBracket => "'['".to_string(),
            Tok::RBracket => "']'".to_string(),
            Tok::Colon => "':'".to_string(),
            Tok::Comma => "','".to_string(),
            Tok::Dot => "'.'".to_string(),
            Tok::Assign => "'='".to_string(),
            Tok::PlusAssign => "'+='".to_string(),
            Tok::EqEq => "'=='".to_string(),
            Tok::NotEq => "'!='".to_string(),
            Tok::Lt => "'<'".to_string(),
            Tok::Le => "'<='".to_string(),
            Tok::Gt => "'>'".to_string(),
            Tok::Ge => "'>='".to_string(),
            Tok::Plus => "'+'".to_string(),
            Tok::Minus => "'-'".to_string(),
            Tok::Star => "'*'".to_string(),
            Tok::Slash => "'/'".to_string(),
            Tok::Newline => "end of line".to_string(),
            Tok::Indent => "indented block".to_string(),
            Tok::Dedent => "end of block".to_string(),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

/// Python keywords outside the VPL subset; rejected at the lexer with a
/// dedicated message instead of a generic syntax error.
const FORBIDDEN_KEYWORDS: [&str; 19] = [
    "while", "import", "from", "try", "except", "finally", "lambda", "class", "with", "yield",
    "global", "nonlocal", "del", "assert", "raise", "pass", "break", "continue", "as",
];

pub(crate) fn lex(source: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut indents: Vec<usize> = vec![0];

    for (line_idx, raw_line) in source.lines().enumerate() {
        let line_no = (line_idx + 1) as u32;

        // Indentation first;  tabs are rejected to keep levels unambiguous.
        let mut indent = 0usize;
        let mut chars = raw_line.char_indices().peekable();
        while let Some((_, c)) = chars.peek() {
            match c {
                ' ' => {
                    indent += 1;
                    chars.next();
                }
                '\t' => {
                    return Err(ParseError::lexical(
                        line_no,
                        (indent + 1) as u32,
                        "tab character in indentation",
                    ))
                }
                _ => break,
            }
        }
        let rest: &str = &raw_line[indent..];
        if rest.is_empty() || rest.starts_with('#') {
            continue; // blank or comment-only line
        }

        // Indent / dedent bookkeeping.
        let current = *indents.last().expect("indent stack is never empty");
        if indent > current {
            indents.push(indent);
            tokens.push(Token {
                tok: Tok::Indent,
                line: line_no,
                col: 1,
            });
        } else if indent < current {
            while *indents.last().expect("stack non-empty") > indent {
                indents.pop();
                tokens.push(Token {
                    tok: Tok::Dedent,
                    line: line_no,
                    col: 1,
                });
            }
            if *indents.last().expect("stack non-empty") != indent {
                return Err(ParseError::lexical(
                    line_no,
                    1,
                    "dedent does not match any outer indentation level",
                ));
            }
        }

        lex_line(rest, line_no, indent as u32, &mut tokens)?;
        tokens.push(Token {
            tok: Tok::Newline,
            line: line_no,
            col: (raw_line.len() + 1) as u32,
        });
    }

    let last_line = source.lines().count().max(1) as u32;
    while indents.len() > 1 {
        indents.pop();
        tokens.push(Token {
            tok: Tok::Dedent,
            line: last_line,
            col: 1,
        });
    }
    tokens.push(Token {
        tok: Tok::Eof,
        line: last_line,
        col: 1,
    });
    Ok(tokens)
}

fn lex_line(
    rest: &str,
    line: u32,
    indent_cols: u32,
    tokens: &mut Vec<Token>,
) -> Result<(), ParseError> {
    let bytes = rest.as_bytes();
    let mut i = 0usize;
    let col_of = |i: usize| indent_cols + i as u32 + 1;

    while i < bytes.len() {
        let c = bytes[i] as char;
        let col = col_of(i);
        match c {
            ' ' => {
                i += 1;
            }
            '\t' => {
                return Err(ParseError::lexical(line, col, "tab character in code"));
            }
            '#' => break, // trailing comment
            '(' | ')' | '[' | ']' | ':' | ',' | '.' | '+' | '-' | '*' | '/' => {
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ':' => Tok::Colon,
                    ',' => Tok::Comma,
                    '.' => {
                        // A dot starting a number like ".5" is not supported.
                        if bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit()) {
                            return Err(ParseError::lexical(
                                line,
                                col,
                                "numbers must start with a digit",
                            ));
                        }
                        Tok::Dot
                    }
                    '+' => {
                        if bytes.get(i + 1) == Some(&b'=') {
                            i += 1;
                            Tok::PlusAssign
                        } else {
                            Tok::Plus
                        }
                    }
                    '-' => Tok::Minus,
                    '*' => Tok::Star,
                    '/' => {
                        if bytes.get(i + 1) == Some(&b'/') {
                            return Err(ParseError::lexical(
                                line,
                                col,
                                "floor division '//' is not supported; use int(a / b)",
                            ));
                        }
                        Tok::Slash
                    }
                    _ => unreachable!(),
                };
                tokens.push(Token { tok, line, col });
                i += 1;
            }
            '=' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push(Token {
                        tok: Tok::EqEq,
                        line,
                        col,
                    });
                    i += 2;
                } else {
                    tokens.push(Token {
                        tok: Tok::Assign,
                        line,
                        col,
                    });
                    i += 1;
                }
            }
            '!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push(Token {
                        tok: Tok::NotEq,
                        line,
                        col,
                    });
                    i += 2;
                } else {
                    return Err(ParseError::lexical(line, col, "unexpected character '!'"));
                }
            }
            '<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push(Token {
                        tok: Tok::Le,
                        line,
                        col,
                    });
                    i += 2;
                } else {
                    tokens.push(Token {
                        tok: Tok::Lt,
                        line,
                        col,
                    });
                    i += 1;
                }
            }
            '>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push(Token {
                        tok: Tok::Ge,
                        line,
                        col,
                    });
                    i += 2;
                } else {
                    tokens.push(Token {
                        tok: Tok::Gt,
                        line,
                        col,
                    });
                    i += 1;
                }
            }
            '"' | '\'' => {
                let (value, consumed) = lex_string(&rest[i..], c, line, col)?;
                tokens.push(Token {
                    tok: Tok::Str(value),
                    line,
                    col,
                });
                i += consumed;
            }
            c if c.is_ascii_digit() => {
                let (tok, consumed) = lex_number(&rest[i..], line, col)?;
                tokens.push(Token { tok, line, col });
                i += consumed;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                let word = &rest[start..i];
                let tok = match word {
                    "def" => Tok::Keyword(Kw::Def),
                    "return" => Tok::Keyword(Kw::Return),
                    "for" => Tok::Keyword(Kw::For),
                    "in" => Tok::Keyword(Kw::In),
                    "if" => Tok::Keyword(Kw::If),
                    "elif" => Tok::Keyword(Kw::Elif),
                    "else" => Tok::Keyword(Kw::Else),
                    "and" => Tok::Keyword(Kw::And),
                    "or" => Tok::Keyword(Kw::Or),
                    "not" => Tok::Keyword(Kw::Not),
                    "True" => Tok::Keyword(Kw::True),
                    "False" => Tok::Keyword(Kw::False),
                    w if FORBIDDEN_KEYWORDS.contains(&w) => {
                        return Err(ParseError::lexical(
                            line,
                            col,
                            format!("keyword {w:?} is outside the language subset"),
                        ));
                    }
                    _ => Tok::Ident(word.to_string()),
                };
                tokens.push(Token { tok, line, col });
            }
            other => {
                return Err(ParseError::lexical(
                    line,
                    col,
                    format!("unexpected character {other:?}"),
                ));
            }
        }
    }
    Ok(())
}

fn lex_string(rest: &str, quote: char, line: u32, col: u32) -> Result<(String, usize), ParseError> {
    let mut value = String::new();
    let mut chars = rest.char_indices();
    chars.next(); // opening quote
    while let Some((idx, c)) = chars.next() {
        match c {
            c if c == quote => return Ok((value, idx + 1)),
            '\\' => match chars.next() {
                Some((_, esc)) => value.push(match esc {
                    'n' => '\n',
                    't' => '\t',
                    'r' => '\r',
                    '\\' => '\\',
                    '\'' => '\'',
                    '"' => '"',
                    other => {
                        return Err(ParseError::lexical(
                            line,
                            col,
                            format!("unsupported escape sequence '\\{other}'"),
                        ))
                    }
                }),
                None => break,
            },
            '\n' => break,
            c => value.push(c),
        }
    }
    Err(ParseError::lexical(line, col, "unterminated string literal"))
}

fn lex_number(rest: &str, line: u32, col: u32) -> Result<(Tok, usize), ParseError> {
    let bytes = rest.as_bytes();
    let mut i = 0usize;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    let mut is_float = false;
    if bytes.get(i) == Some(&b'.') {
        if !bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit()) {
            return Err(ParseError::lexical(
                line,
                col,
                "float literal needs digits after the decimal point",
            ));
        }
        is_float = true;
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    let text = &rest[..i];
    if is_float {
        let value: f64 = text
            .parse()
            .map_err(|_| ParseError::lexical(line, col, format!("bad float literal {text:?}")))?;
        Ok((Tok::Float(value), i))
    } else {
        let value: i64 = text.parse().map_err(|_| {
            ParseError::lexical(line, col, format!("integer literal {text:?} overflows"))
        })?;
        Ok((Tok::Int(value), i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(source: &str) -> Vec<Tok> {
        lex(source).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn lexes_simple_line() {
        let ts = toks("def execute_command(image):");
        assert_eq!(
            ts,
            vec![
                Tok::Keyword(Kw::Def),
                Tok::Ident("execute_command".to_string()),
                Tok::LParen,
                Tok::Ident("image".to_string()),
                Tok::RParen,
                Tok::Colon,
                Tok::Newline,
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn indentation_produces_indent_dedent() {
        let ts = toks("a = 1\nif a:\n    b = 2\nc = 3\n");
        let indents = ts.iter().filter(|t| **t == Tok::Indent).count();
        let dedents = ts.iter().filter(|t| **t == Tok::Dedent).count();
        assert_eq!(indents, 1);
        assert_eq!(dedents, 1);
    }

    #[test]
    fn dangling_dedents_close_at_eof() {
        let ts = toks("if a:\n    if b:\n        c = 1\n");
        let dedents = ts.iter().filter(|t| **t == Tok::Dedent).count();
        assert_eq!(dedents, 2);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let ts = toks("a = 1\n\n# note\na += 2  # trailing\n");
        assert!(!ts.iter().any(|t| matches!(t, Tok::Indent)));
        assert_eq!(ts.iter().filter(|t| **t == Tok::Newline).count(), 2);
    }

    #[test]
    fn forbidden_keywords_are_lexical_errors() {
        for source in ["while True:", "import os", "try:", "x = lambda: 1"] {
            let err = lex(source).unwrap_err();
            assert_eq!(err.kind, super::super::ParseErrorKind::Lexical);
        }
    }

    #[test]
    fn floor_division_is_rejected() {
        assert!(lex("x = 4 // 2").is_err());
    }

    #[test]
    fn strings_support_both_quotes_and_escapes() {
        assert_eq!(
            toks("x = 'a\"b'")[2],
            Tok::Str("a\"b".to_string())
        );
        assert_eq!(
            toks("x = \"line\\n\"")[2],
            Tok::Str("line\n".to_string())
        );
        assert!(lex("x = 'unterminated").is_err());
    }

    #[test]
    fn numbers_lex_to_int_and_float() {
        assert_eq!(toks("x = 42")[2], Tok::Int(42));
        assert_eq!(toks("x = 1.5")[2], Tok::Float(1.5));
        assert!(lex("x = 1.").is_err());
        assert!(lex("x = .5").is_err());
    }

    #[test]
    fn tabs_are_rejected() {
        assert!(lex("\tx = 1").is_err());
        assert!(lex("x =\t1").is_err());
    }

    #[test]
    fn inconsistent_dedent_is_an_error() {
        let err = lex("if a:\n        b = 1\n    c = 2\n").unwrap_err();
        assert!(err.message.contains("dedent"));
    }
}
