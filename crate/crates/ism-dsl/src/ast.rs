//! Syntax tree of a model file, with source positions on every name that
//! can fail resolution.

use std::collections::{BTreeMap, BTreeSet};

use ism_core::predicate::Pred;
use ism_core::system::{StateId, Symbol, SystemDef, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    /// 1-based line.
    pub line: u32,
    /// 1-based column.
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spanned<T> {
    pub value: T,
    pub span: Span,
}

impl<T> Spanned<T> {
    pub fn new(value: T, span: Span) -> Self {
        Spanned { value, span }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaDecl {
    pub name: Spanned<String>,
    pub version: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortDecl {
    pub name: Spanned<String>,
    pub alphabet: Vec<Spanned<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IoDecl {
    Epsilon(Span),
    Symbol {
        port: Spanned<String>,
        character: Spanned<String>,
    },
}

impl IoDecl {
    pub fn span(&self) -> Span {
        match self {
            IoDecl::Epsilon(span) => *span,
            IoDecl::Symbol { port, .. } => port.span,
        }
    }

    pub fn to_symbol(&self) -> Option<Symbol> {
        match self {
            IoDecl::Epsilon(_) => None,
            IoDecl::Symbol { port, character } => {
                Some(Symbol::new(port.value.clone(), character.value.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransDecl {
    pub from: Spanned<String>,
    pub to: Spanned<String>,
    pub input: IoDecl,
    pub output: IoDecl,
}

impl TransDecl {
    pub fn to_transition(&self) -> Transition {
        Transition::new(
            self.from.value.as_str(),
            self.to.value.as_str(),
            self.input.to_symbol(),
            self.output.to_symbol(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SystemDecl {
    pub name: Spanned<String>,
    pub states: Vec<Spanned<String>>,
    pub initial: Option<Spanned<String>>,
    pub inputs: Vec<PortDecl>,
    pub outputs: Vec<PortDecl>,
    pub accepting: Vec<Spanned<String>>,
    pub transitions: Vec<TransDecl>,
}

impl Default for Spanned<String> {
    fn default() -> Self {
        Spanned::new(String::new(), Span::default())
    }
}

impl SystemDecl {
    /// The declaration as an unvalidated core definition.
    pub fn to_def(&self) -> SystemDef {
        let mut def = SystemDef::new(self.name.value.clone());
        def.states = self
            .states
            .iter()
            .map(|s| StateId::new(s.value.clone()))
            .collect();
        def.initial = self.initial.as_ref().map(|s| StateId::new(s.value.clone()));
        for port in &self.inputs {
            def = def.input_port(
                &port.name.value,
                port.alphabet.iter().map(|c| c.value.as_str()),
            );
        }
        for port in &self.outputs {
            def = def.output_port(
                &port.name.value,
                port.alphabet.iter().map(|c| c.value.as_str()),
            );
        }
        def.accepting = self
            .accepting
            .iter()
            .map(|s| StateId::new(s.value.clone()))
            .collect();
        def.transitions = self.transitions.iter().map(TransDecl::to_transition).collect();
        def
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDecl {
    pub port: Spanned<String>,
    pub character: Spanned<String>,
    pub class: Spanned<String>,
    pub params: Vec<(Spanned<String>, i64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeDecl {
    pub state: Spanned<String>,
    pub mode: Spanned<String>,
    pub rest: Vec<(Spanned<String>, i64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CondDecl {
    pub name: Spanned<String>,
    pub pred: Pred,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DocClassDecl {
    pub name: Spanned<String>,
    pub system: Spanned<String>,
    pub parses: Vec<ParseDecl>,
    pub modes: Vec<ModeDecl>,
    pub conditions: Vec<CondDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDecl {
    pub name: Spanned<String>,
    pub transitions: Vec<TransDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PartitionDecl {
    pub name: Spanned<String>,
    pub system: Spanned<String>,
    pub classes: Vec<ClassDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelDecl {
    pub from_role: Spanned<String>,
    pub from_port: Spanned<String>,
    pub to_role: Spanned<String>,
    pub to_port: Spanned<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProtocolDecl {
    pub name: Spanned<String>,
    /// Role order is semantic: it fixes the product tuple positions.
    pub roles: Vec<Spanned<String>>,
    pub channels: Vec<ChannelDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModelFile {
    pub meta: Option<MetaDecl>,
    pub imports: Vec<Spanned<String>>,
    pub systems: Vec<SystemDecl>,
    pub docclasses: Vec<DocClassDecl>,
    pub partitions: Vec<PartitionDecl>,
    pub protocols: Vec<ProtocolDecl>,
}

/// Span-free, order-insensitive projection used to compare models
/// structurally. Sets are sorted; role order is kept because it is
/// semantic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalized {
    pub meta: Option<(String, Option<i64>)>,
    pub imports: BTreeSet<String>,
    pub systems: BTreeMap<String, SystemDef>,
    pub docclasses: BTreeMap<String, NormalizedDocClass>,
    pub partitions: BTreeMap<String, NormalizedPartition>,
    pub protocols: BTreeMap<String, NormalizedProtocol>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedDocClass {
    pub system: String,
    pub parse: BTreeMap<(String, String), (String, BTreeMap<String, i64>)>,
    pub modes: BTreeMap<String, (String, BTreeMap<String, i64>)>,
    pub conditions: BTreeMap<String, Pred>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedPartition {
    pub system: String,
    pub classes: BTreeMap<String, BTreeSet<Transition>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedProtocol {
    pub roles: Vec<String>,
    pub channels: BTreeSet<(String, String, String, String)>,
}

impl ModelFile {
    pub fn normalized(&self) -> Normalized {
        let systems = self
            .systems
            .iter()
            .map(|s| {
                let mut def = s.to_def();
                def.transitions.sort();
                def.transitions.dedup();
                (s.name.value.clone(), def)
            })
            .collect();
        let docclasses = self
            .docclasses
            .iter()
            .map(|d| {
                (
                    d.name.value.clone(),
                    NormalizedDocClass {
                        system: d.system.value.clone(),
                        parse: d
                            .parses
                            .iter()
                            .map(|p| {
                                (
                                    (p.port.value.clone(), p.character.value.clone()),
                                    (
                                        p.class.value.clone(),
                                        p.params
                                            .iter()
                                            .map(|(k, v)| (k.value.clone(), *v))
                                            .collect(),
                                    ),
                                )
                            })
                            .collect(),
                        modes: d
                            .modes
                            .iter()
                            .map(|m| {
                                (
                                    m.state.value.clone(),
                                    (
                                        m.mode.value.clone(),
                                        m.rest
                                            .iter()
                                            .map(|(k, v)| (k.value.clone(), *v))
                                            .collect(),
                                    ),
                                )
                            })
                            .collect(),
                        conditions: d
                            .conditions
                            .iter()
                            .map(|c| (c.name.value.clone(), c.pred.clone()))
                            .collect(),
                    },
                )
            })
            .collect();
        let partitions = self
            .partitions
            .iter()
            .map(|p| {
                (
                    p.name.value.clone(),
                    NormalizedPartition {
                        system: p.system.value.clone(),
                        classes: p
                            .classes
                            .iter()
                            .map(|c| {
                                (
                                    c.name.value.clone(),
                                    c.transitions
                                        .iter()
                                        .map(TransDecl::to_transition)
                                        .collect(),
                                )
                            })
                            .collect(),
                    },
                )
            })
            .collect();
        let protocols = self
            .protocols
            .iter()
            .map(|p| {
                (
                    p.name.value.clone(),
                    NormalizedProtocol {
                        roles: p.roles.iter().map(|r| r.value.clone()).collect(),
                        channels: p
                            .channels
                            .iter()
                            .map(|c| {
                                (
                                    c.from_role.value.clone(),
                                    c.from_port.value.clone(),
                                    c.to_role.value.clone(),
                                    c.to_port.value.clone(),
                                )
                            })
                            .collect(),
                    },
                )
            })
            .collect();
        Normalized {
            meta: self
                .meta
                .as_ref()
                .map(|m| (m.name.value.clone(), m.version)),
            imports: self.imports.iter().map(|i| i.value.clone()).collect(),
            systems,
            docclasses,
            partitions,
            protocols,
        }
    }
}
