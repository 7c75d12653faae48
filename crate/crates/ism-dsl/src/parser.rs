//! Recursive-descent parser with recovery at `;` and `}` boundaries, so one
//! pass reports as many diagnostics as possible.
//!
//! ```text
//! file         := metaDecl? item*
//! metaDecl     := "model" NAME ("version" INT)? ";"
//! item         := importDecl | systemDecl | protocolDecl | docclassDecl | partitionDecl
//! importDecl   := "import" STRING ";"
//! systemDecl   := "system" NAME "{" systemItem* "}"
//! systemItem   := "states" NAME ("," NAME)* ";"
//!               | "init" NAME ";"
//!               | "in" NAME "{" NAME ("," NAME)* "}" ";"
//!               | "out" NAME "{" NAME ("," NAME)* "}" ";"
//!               | "accept" NAME ("," NAME)* ";"
//!               | trans
//! trans        := "trans" NAME "->" NAME ":" io "/" io ";"
//! io           := NAME "." NAME | "eps"
//! protocolDecl := "protocol" NAME "{" ("role" NAME ";")* channelDecl* "}"
//! channelDecl  := "channel" NAME "." NAME "->" NAME "." NAME ";"
//! docclassDecl := "docclass" NAME "for" NAME "{" docItem* "}"
//! docItem      := "parse" NAME "." NAME "->" NAME params? ";"
//!               | "state" NAME "->" NAME params? ";"
//!               | "cond" NAME ":" cond ";"
//! params       := "(" NAME "=" INT ("," NAME "=" INT)* ")"
//! cond         := "true" | operand cmp operand
//! operand      := "rest" "." NAME | "prm" "." NAME | INT
//! cmp          := "=" | "!=" | "<" | "<="
//! partitionDecl:= "partition" NAME "for" NAME "{" classDecl* "}"
//! classDecl    := "class" NAME "{" trans* "}"
//! ```

use ism_core::predicate::{CmpOp, Operand, Pred};
use ism_core::system::EPSILON_TOKEN;

use crate::ast::*;
use crate::lexer::{lex, Tok, Token};
use crate::{Diagnostic, Severity};

pub fn parse_model_named(text: &str, file: &str) -> (ModelFile, Vec<Diagnostic>) {
    let mut diagnostics = Vec::new();
    let tokens = lex(text, file, &mut diagnostics);
    let mut parser = Parser {
        tokens,
        pos: 0,
        file: file.to_string(),
        diagnostics,
    };
    let model = parser.file();
    (model, parser.diagnostics)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    file: String,
    diagnostics: Vec<Diagnostic>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos.min(self.tokens.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos.min(self.tokens.len() - 1)].span
    }

    fn bump(&mut self) -> Tok {
        let tok = self.tokens[self.pos.min(self.tokens.len() - 1)].tok.clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        tok
    }

    fn at_keyword(&self, word: &str) -> bool {
        matches!(self.peek(), Tok::Ident(name) if name == word)
    }

    fn error(&mut self, message: String) {
        let span = self.span();
        let token = self.peek().describe();
        self.diagnostics.push(Diagnostic {
            severity: Severity::Error,
            file: self.file.clone(),
            line: span.line,
            col: span.col,
            message,
            token,
        });
    }

    /// Skips to just past the next `;`, or stops before `}`/EOF.
    fn recover_to_semi(&mut self) {
        loop {
            match self.peek() {
                Tok::Semi => {
                    self.bump();
                    return;
                }
                Tok::RBrace | Tok::Eof => return,
                _ => {
                    self.bump();
                }
            }
        }
    }

    /// Skips a malformed block up to its closing brace.
    fn recover_block(&mut self) {
        let mut depth = 0usize;
        loop {
            match self.peek() {
                Tok::LBrace => {
                    depth += 1;
                    self.bump();
                }
                Tok::RBrace => {
                    self.bump();
                    if depth <= 1 {
                        return;
                    }
                    depth -= 1;
                }
                Tok::Semi if depth == 0 => {
                    self.bump();
                    return;
                }
                Tok::Eof => return,
                _ => {
                    self.bump();
                }
            }
        }
    }

    fn expect_semi(&mut self) {
        if matches!(self.peek(), Tok::Semi) {
            self.bump();
        } else {
            self.error(format!("expected `;`, found {}", self.peek().describe()));
            self.recover_to_semi();
        }
    }

    fn expect(&mut self, expected: Tok, what: &str) -> bool {
        if self.peek() == &expected {
            self.bump();
            true
        } else {
            self.error(format!(
                "expected {what}, found {}",
                self.peek().describe()
            ));
            false
        }
    }

    fn ident(&mut self, what: &str) -> Option<Spanned<String>> {
        let span = self.span();
        match self.peek() {
            Tok::Ident(name) => {
                let name = name.clone();
                self.bump();
                Some(Spanned::new(name, span))
            }
            _ => {
                self.error(format!("expected {what}, found {}", self.peek().describe()));
                None
            }
        }
    }

    fn file(&mut self) -> ModelFile {
        let mut model = ModelFile::default();
        loop {
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(word) => match word.as_str() {
                    "model" => {
                        self.bump();
                        let Some(name) = self.ident("a model name") else {
                            self.recover_to_semi();
                            continue;
                        };
                        let mut version = None;
                        if self.at_keyword("version") {
                            self.bump();
                            if let Tok::Int(v) = self.peek() {
                                version = Some(*v);
                                self.bump();
                            } else {
                                self.error("expected a version number".into());
                            }
                        }
                        self.expect_semi();
                        if model.meta.is_some() {
                            self.error("duplicate `model` header".into());
                        } else {
                            model.meta = Some(MetaDecl { name, version });
                        }
                    }
                    "import" => {
                        self.bump();
                        let span = self.span();
                        match self.peek().clone() {
                            Tok::Str(path) => {
                                self.bump();
                                model.imports.push(Spanned::new(path, span));
                                self.expect_semi();
                            }
                            _ => {
                                self.error("expected a quoted import path".into());
                                self.recover_to_semi();
                            }
                        }
                    }
                    "system" => {
                        if let Some(decl) = self.system_decl() {
                            model.systems.push(decl);
                        }
                    }
                    "protocol" => {
                        if let Some(decl) = self.protocol_decl() {
                            model.protocols.push(decl);
                        }
                    }
                    "docclass" => {
                        if let Some(decl) = self.docclass_decl() {
                            model.docclasses.push(decl);
                        }
                    }
                    "partition" => {
                        if let Some(decl) = self.partition_decl() {
                            model.partitions.push(decl);
                        }
                    }
                    other => {
                        self.error(format!("unexpected `{other}` at top level"));
                        self.recover_block();
                    }
                },
                _ => {
                    self.error(format!(
                        "expected a declaration, found {}",
                        self.peek().describe()
                    ));
                    self.recover_block();
                }
            }
        }
        model
    }

    fn ident_list(&mut self, what: &str) -> Vec<Spanned<String>> {
        let mut out = Vec::new();
        loop {
            if let Some(name) = self.ident(what) {
                out.push(name);
            } else {
                self.recover_to_semi();
                return out;
            }
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                _ => break,
            }
        }
        out
    }

    fn io(&mut self) -> Option<IoDecl> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Ident(name) if name == EPSILON_TOKEN => {
                self.bump();
                Some(IoDecl::Epsilon(span))
            }
            Tok::Ident(port) => {
                self.bump();
                if !self.expect(Tok::Dot, "`.` between port and character") {
                    return None;
                }
                let character = self.ident("a character name")?;
                Some(IoDecl::Symbol {
                    port: Spanned::new(port, span),
                    character,
                })
            }
            _ => {
                self.error(format!(
                    "expected `port.character` or `{EPSILON_TOKEN}`, found {}",
                    self.peek().describe()
                ));
                None
            }
        }
    }

    fn trans_decl(&mut self) -> Option<TransDecl> {
        // Caller consumed the `trans` keyword.
        let from = self.ident("a source state")?;
        if !self.expect(Tok::Arrow, "`->`") {
            return None;
        }
        let to = self.ident("a target state")?;
        if !self.expect(Tok::Colon, "`:`") {
            return None;
        }
        let input = self.io()?;
        if !self.expect(Tok::Slash, "`/` between input and output") {
            return None;
        }
        let output = self.io()?;
        self.expect_semi();
        Some(TransDecl {
            from,
            to,
            input,
            output,
        })
    }

    fn port_decl(&mut self) -> Option<PortDecl> {
        let name = self.ident("a port name")?;
        if !self.expect(Tok::LBrace, "`{` before the alphabet") {
            return None;
        }
        let alphabet = self.ident_list("a character name");
        if !self.expect(Tok::RBrace, "`}` after the alphabet") {
            return None;
        }
        self.expect_semi();
        Some(PortDecl { name, alphabet })
    }

    fn system_decl(&mut self) -> Option<SystemDecl> {
        self.bump(); // system
        let name = self.ident("a system name")?;
        if !self.expect(Tok::LBrace, "`{`") {
            self.recover_block();
            return None;
        }
        let mut decl = SystemDecl {
            name,
            ..SystemDecl::default()
        };
        loop {
            match self.peek().clone() {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Eof => {
                    self.error("unterminated system block".into());
                    break;
                }
                Tok::Ident(word) => match word.as_str() {
                    "states" => {
                        self.bump();
                        let mut states = self.ident_list("a state name");
                        decl.states.append(&mut states);
                        self.expect_semi();
                    }
                    "init" => {
                        self.bump();
                        if let Some(state) = self.ident("the initial state") {
                            if decl.initial.is_some() {
                                self.error("duplicate `init`".into());
                            }
                            decl.initial = Some(state);
                        }
                        self.expect_semi();
                    }
                    "in" => {
                        self.bump();
                        if let Some(port) = self.port_decl() {
                            decl.inputs.push(port);
                        } else {
                            self.recover_to_semi();
                        }
                    }
                    "out" => {
                        self.bump();
                        if let Some(port) = self.port_decl() {
                            decl.outputs.push(port);
                        } else {
                            self.recover_to_semi();
                        }
                    }
                    "accept" => {
                        self.bump();
                        let mut accepting = self.ident_list("an accepting state");
                        decl.accepting.append(&mut accepting);
                        self.expect_semi();
                    }
                    "trans" => {
                        self.bump();
                        if let Some(trans) = self.trans_decl() {
                            decl.transitions.push(trans);
                        } else {
                            self.recover_to_semi();
                        }
                    }
                    other => {
                        self.error(format!("unexpected `{other}` in system block"));
                        self.recover_to_semi();
                    }
                },
                _ => {
                    self.error(format!(
                        "unexpected {} in system block",
                        self.peek().describe()
                    ));
                    self.recover_to_semi();
                }
            }
        }
        Some(decl)
    }

    fn protocol_decl(&mut self) -> Option<ProtocolDecl> {
        self.bump(); // protocol
        let name = self.ident("a protocol name")?;
        if !self.expect(Tok::LBrace, "`{`") {
            self.recover_block();
            return None;
        }
        let mut decl = ProtocolDecl {
            name,
            ..ProtocolDecl::default()
        };
        loop {
            match self.peek().clone() {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Eof => {
                    self.error("unterminated protocol block".into());
                    break;
                }
                Tok::Ident(word) => match word.as_str() {
                    "role" => {
                        self.bump();
                        if let Some(role) = self.ident("a role name") {
                            decl.roles.push(role);
                        }
                        self.expect_semi();
                    }
                    "channel" => {
                        self.bump();
                        if let Some(channel) = self.channel_decl() {
                            decl.channels.push(channel);
                        } else {
                            self.recover_to_semi();
                        }
                    }
                    other => {
                        self.error(format!("unexpected `{other}` in protocol block"));
                        self.recover_to_semi();
                    }
                },
                _ => {
                    self.error(format!(
                        "unexpected {} in protocol block",
                        self.peek().describe()
                    ));
                    self.recover_to_semi();
                }
            }
        }
        Some(decl)
    }

    fn channel_decl(&mut self) -> Option<ChannelDecl> {
        let from_role = self.ident("a sending role")?;
        if !self.expect(Tok::Dot, "`.`") {
            return None;
        }
        let from_port = self.ident("an output port")?;
        if !self.expect(Tok::Arrow, "`->`") {
            return None;
        }
        let to_role = self.ident("a receiving role")?;
        if !self.expect(Tok::Dot, "`.`") {
            return None;
        }
        let to_port = self.ident("an input port")?;
        self.expect_semi();
        Some(ChannelDecl {
            from_role,
            from_port,
            to_role,
            to_port,
        })
    }

    fn params(&mut self) -> Vec<(Spanned<String>, i64)> {
        let mut params = Vec::new();
        if !matches!(self.peek(), Tok::LParen) {
            return params;
        }
        self.bump();
        loop {
            let Some(name) = self.ident("a parameter name") else {
                break;
            };
            if !self.expect(Tok::Eq, "`=`") {
                break;
            }
            match self.peek() {
                Tok::Int(value) => {
                    params.push((name, *value));
                    self.bump();
                }
                _ => {
                    self.error("expected an integer parameter value".into());
                    break;
                }
            }
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                _ => break,
            }
        }
        self.expect(Tok::RParen, "`)`");
        params
    }

    fn operand(&mut self) -> Option<Operand> {
        match self.peek().clone() {
            Tok::Int(value) => {
                self.bump();
                Some(Operand::Int(value))
            }
            Tok::Ident(ns) if ns == "rest" || ns == "prm" => {
                self.bump();
                if !self.expect(Tok::Dot, "`.`") {
                    return None;
                }
                let field = self.ident("a field name")?;
                Some(if ns == "rest" {
                    Operand::RestField(field.value)
                } else {
                    Operand::Param(field.value)
                })
            }
            _ => {
                self.error(format!(
                    "expected `rest.field`, `prm.field` or an integer, found {}",
                    self.peek().describe()
                ));
                None
            }
        }
    }

    fn cond(&mut self) -> Option<Pred> {
        if self.at_keyword("true") {
            self.bump();
            return Some(Pred::True);
        }
        let lhs = self.operand()?;
        let op = match self.peek() {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            _ => {
                self.error(format!(
                    "expected a comparison operator, found {}",
                    self.peek().describe()
                ));
                return None;
            }
        };
        self.bump();
        let rhs = self.operand()?;
        Some(Pred::atom(lhs, op, rhs))
    }

    fn docclass_decl(&mut self) -> Option<DocClassDecl> {
        self.bump(); // docclass
        let name = self.ident("a document-class model name")?;
        if !self.at_keyword("for") {
            self.error("expected `for`".into());
            self.recover_block();
            return None;
        }
        self.bump();
        let system = self.ident("a system name")?;
        if !self.expect(Tok::LBrace, "`{`") {
            self.recover_block();
            return None;
        }
        let mut decl = DocClassDecl {
            name,
            system,
            ..DocClassDecl::default()
        };
        loop {
            match self.peek().clone() {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Eof => {
                    self.error("unterminated docclass block".into());
                    break;
                }
                Tok::Ident(word) => match word.as_str() {
                    "parse" => {
                        self.bump();
                        let parsed = (|| {
                            let port = self.ident("a port name")?;
                            if !self.expect(Tok::Dot, "`.`") {
                                return None;
                            }
                            let character = self.ident("a character name")?;
                            if !self.expect(Tok::Arrow, "`->`") {
                                return None;
                            }
                            let class = self.ident("a document class")?;
                            let params = self.params();
                            Some(ParseDecl {
                                port,
                                character,
                                class,
                                params,
                            })
                        })();
                        match parsed {
                            Some(parse) => {
                                decl.parses.push(parse);
                                self.expect_semi();
                            }
                            None => self.recover_to_semi(),
                        }
                    }
                    "state" => {
                        self.bump();
                        let parsed = (|| {
                            let state = self.ident("a state name")?;
                            if !self.expect(Tok::Arrow, "`->`") {
                                return None;
                            }
                            let mode = self.ident("a mode name")?;
                            let rest = self.params();
                            Some(ModeDecl { state, mode, rest })
                        })();
                        match parsed {
                            Some(mode) => {
                                decl.modes.push(mode);
                                self.expect_semi();
                            }
                            None => self.recover_to_semi(),
                        }
                    }
                    "cond" => {
                        self.bump();
                        let parsed = (|| {
                            let name = self.ident("a condition name")?;
                            if !self.expect(Tok::Colon, "`:`") {
                                return None;
                            }
                            let pred = self.cond()?;
                            Some(CondDecl { name, pred })
                        })();
                        match parsed {
                            Some(cond) => {
                                decl.conditions.push(cond);
                                self.expect_semi();
                            }
                            None => self.recover_to_semi(),
                        }
                    }
                    other => {
                        self.error(format!("unexpected `{other}` in docclass block"));
                        self.recover_to_semi();
                    }
                },
                _ => {
                    self.error(format!(
                        "unexpected {} in docclass block",
                        self.peek().describe()
                    ));
                    self.recover_to_semi();
                }
            }
        }
        Some(decl)
    }

    fn partition_decl(&mut self) -> Option<PartitionDecl> {
        self.bump(); // partition
        let name = self.ident("a partition name")?;
        if !self.at_keyword("for") {
            self.error("expected `for`".into());
            self.recover_block();
            return None;
        }
        self.bump();
        let system = self.ident("a system name")?;
        if !self.expect(Tok::LBrace, "`{`") {
            self.recover_block();
            return None;
        }
        let mut decl = PartitionDecl {
            name,
            system,
            ..PartitionDecl::default()
        };
        loop {
            match self.peek().clone() {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Eof => {
                    self.error("unterminated partition block".into());
                    break;
                }
                Tok::Ident(word) if word == "class" => {
                    self.bump();
                    let Some(name) = self.ident("a class name") else {
                        self.recover_to_semi();
                        continue;
                    };
                    if !self.expect(Tok::LBrace, "`{`") {
                        self.recover_block();
                        continue;
                    }
                    let mut transitions = Vec::new();
                    loop {
                        match self.peek().clone() {
                            Tok::RBrace => {
                                self.bump();
                                break;
                            }
                            Tok::Eof => {
                                self.error("unterminated class block".into());
                                break;
                            }
                            Tok::Ident(word) if word == "trans" => {
                                self.bump();
                                if let Some(trans) = self.trans_decl() {
                                    transitions.push(trans);
                                } else {
                                    self.recover_to_semi();
                                }
                            }
                            _ => {
                                self.error(format!(
                                    "expected `trans` or `}}`, found {}",
                                    self.peek().describe()
                                ));
                                self.recover_to_semi();
                            }
                        }
                    }
                    decl.classes.push(ClassDecl { name, transitions });
                }
                _ => {
                    self.error(format!(
                        "expected `class` or `}}`, found {}",
                        self.peek().describe()
                    ));
                    self.recover_to_semi();
                }
            }
        }
        Some(decl)
    }
}
