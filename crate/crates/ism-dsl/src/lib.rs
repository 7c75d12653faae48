//! The `.ism` model format: a textual syntax for transition systems,
//! document-class models, partitions and protocols.
//!
//! Parsing recovers at `;` and `}` boundaries and reports every diagnostic
//! with a source position; serialization emits a canonical form that parses
//! back to a structurally equal model.

mod ast;
mod lexer;
mod parser;
mod resolve;
mod serialize;

use std::fmt;
use std::path::{Path, PathBuf};

pub use ast::{
    ChannelDecl, ClassDecl, CondDecl, DocClassDecl, IoDecl, MetaDecl, ModeDecl, ModelFile,
    ParseDecl, PartitionDecl, PortDecl, ProtocolDecl, Span, Spanned, SystemDecl, TransDecl,
};
pub use parser::parse_model_named;
pub use resolve::{resolve, ResolvedModel};
pub use serialize::serialize_model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Warning => f.write_str("warning"),
            Severity::Error => f.write_str("error"),
        }
    }
}

/// A located parse or resolution message. Every error points into the
/// source text it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub file: String,
    pub line: u32,
    pub col: u32,
    pub message: String,
    pub token: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}: {}: {}",
            self.file, self.line, self.col, self.severity, self.message
        )
    }
}

impl Diagnostic {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

/// Parses one source text. Recovery keeps going after errors, so the model
/// carries everything that could be understood.
pub fn parse_model(text: &str) -> (ModelFile, Vec<Diagnostic>) {
    parse_model_named(text, "<input>")
}

/// Loads a file and every transitively imported file exactly once, merging
/// all declarations into one model. Import paths resolve relative to the
/// importing file.
pub fn load_model(path: &Path) -> (ModelFile, Vec<Diagnostic>) {
    let mut merged = ModelFile::default();
    let mut diagnostics = Vec::new();
    let mut visited = std::collections::BTreeSet::new();
    let mut queue: Vec<PathBuf> = vec![path.to_path_buf()];
    let mut first = true;

    while let Some(next) = queue.pop() {
        let canonical = next.canonicalize().unwrap_or_else(|_| next.clone());
        if !visited.insert(canonical) {
            continue;
        }
        let label = next.display().to_string();
        let text = match std::fs::read_to_string(&next) {
            Ok(text) => text,
            Err(err) => {
                diagnostics.push(Diagnostic {
                    severity: Severity::Error,
                    file: label,
                    line: 1,
                    col: 1,
                    message: format!("cannot read file: {err}"),
                    token: String::new(),
                });
                continue;
            }
        };
        let (model, mut file_diagnostics) = parse_model_named(&text, &label);
        diagnostics.append(&mut file_diagnostics);
        let base = next.parent().map(Path::to_path_buf).unwrap_or_default();
        for import in &model.imports {
            queue.push(base.join(&import.value));
        }
        if first {
            merged.meta = model.meta.clone();
            first = false;
        }
        merged.systems.extend(model.systems);
        merged.docclasses.extend(model.docclasses);
        merged.partitions.extend(model.partitions);
        merged.protocols.extend(model.protocols);
    }
    (merged, diagnostics)
}
