//! Tokenizer for the model format. `#` starts a comment reaching the end of
//! the line; identifiers are ASCII.

use crate::ast::Span;
use crate::{Diagnostic, Severity};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Comma,
    Dot,
    Colon,
    Slash,
    Arrow,
    Eq,
    Ne,
    Lt,
    Le,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(name) => format!("`{name}`"),
            Tok::Int(value) => format!("`{value}`"),
            Tok::Str(value) => format!("\"{value}\""),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Ne => "`!=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Eof => "end of file".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn lex(text: &str, file: &str, diagnostics: &mut Vec<Diagnostic>) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    let mut chars = text.chars().peekable();

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }

    loop {
        let span = Span { line, col };
        let Some(&c) = chars.peek() else {
            tokens.push(Token { tok: Tok::Eof, span });
            break;
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            '{' => {
                bump!();
                tokens.push(Token { tok: Tok::LBrace, span });
            }
            '}' => {
                bump!();
                tokens.push(Token { tok: Tok::RBrace, span });
            }
            '(' => {
                bump!();
                tokens.push(Token { tok: Tok::LParen, span });
            }
            ')' => {
                bump!();
                tokens.push(Token { tok: Tok::RParen, span });
            }
            ';' => {
                bump!();
                tokens.push(Token { tok: Tok::Semi, span });
            }
            ',' => {
                bump!();
                tokens.push(Token { tok: Tok::Comma, span });
            }
            '.' => {
                bump!();
                tokens.push(Token { tok: Tok::Dot, span });
            }
            ':' => {
                bump!();
                tokens.push(Token { tok: Tok::Colon, span });
            }
            '/' => {
                bump!();
                tokens.push(Token { tok: Tok::Slash, span });
            }
            '=' => {
                bump!();
                tokens.push(Token { tok: Tok::Eq, span });
            }
            '!' => {
                bump!();
                if chars.peek() == Some(&'=') {
                    bump!();
                    tokens.push(Token { tok: Tok::Ne, span });
                } else {
                    diagnostics.push(bad_char(file, span, '!'));
                }
            }
            '<' => {
                bump!();
                if chars.peek() == Some(&'=') {
                    bump!();
                    tokens.push(Token { tok: Tok::Le, span });
                } else {
                    tokens.push(Token { tok: Tok::Lt, span });
                }
            }
            '-' => {
                bump!();
                match chars.peek() {
                    Some('>') => {
                        bump!();
                        tokens.push(Token { tok: Tok::Arrow, span });
                    }
                    Some(d) if d.is_ascii_digit() => {
                        let mut digits = String::from("-");
                        while matches!(chars.peek(), Some(d) if d.is_ascii_digit()) {
                            digits.push(bump!().unwrap());
                        }
                        push_int(&mut tokens, &digits, span, file, diagnostics);
                    }
                    _ => diagnostics.push(bad_char(file, span, '-')),
                }
            }
            '"' => {
                bump!();
                let mut value = String::new();
                let mut closed = false;
                while let Some(&c) = chars.peek() {
                    if c == '"' {
                        bump!();
                        closed = true;
                        break;
                    }
                    if c == '\n' {
                        break;
                    }
                    value.push(bump!().unwrap());
                }
                if closed {
                    tokens.push(Token {
                        tok: Tok::Str(value),
                        span,
                    });
                } else {
                    diagnostics.push(Diagnostic {
                        severity: Severity::Error,
                        file: file.to_string(),
                        line: span.line,
                        col: span.col,
                        message: "unterminated string".into(),
                        token: value,
                    });
                }
            }
            d if d.is_ascii_digit() => {
                let mut digits = String::new();
                while matches!(chars.peek(), Some(d) if d.is_ascii_digit()) {
                    digits.push(bump!().unwrap());
                }
                push_int(&mut tokens, &digits, span, file, diagnostics);
            }
            a if a.is_ascii_alphabetic() || a == '_' => {
                let mut name = String::new();
                while matches!(chars.peek(), Some(c) if c.is_ascii_alphanumeric() || *c == '_') {
                    name.push(bump!().unwrap());
                }
                tokens.push(Token {
                    tok: Tok::Ident(name),
                    span,
                });
            }
            other => {
                bump!();
                diagnostics.push(bad_char(file, span, other));
            }
        }
    }
    tokens
}

fn push_int(
    tokens: &mut Vec<Token>,
    digits: &str,
    span: Span,
    file: &str,
    diagnostics: &mut Vec<Diagnostic>,
) {
    match digits.parse() {
        Ok(value) => tokens.push(Token {
            tok: Tok::Int(value),
            span,
        }),
        Err(_) => diagnostics.push(Diagnostic {
            severity: Severity::Error,
            file: file.to_string(),
            line: span.line,
            col: span.col,
            message: format!("integer out of range: {digits}"),
            token: digits.to_string(),
        }),
    }
}

fn bad_char(file: &str, span: Span, c: char) -> Diagnostic {
    Diagnostic {
        severity: Severity::Error,
        file: file.to_string(),
        line: span.line,
        col: span.col,
        message: format!("unexpected character `{c}`"),
        token: c.to_string(),
    }
}
