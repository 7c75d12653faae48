//! Equivalence partitions of transition relations and their compatibility
//! with the meaning of input characters.
//!
//! A partition of a deterministic relation materializes as disjoint
//! sub-functions; splitting state into mode and rest gives the per-mode
//! function tables of the state pattern; a nondeterministic relation can be
//! split into a deterministic part plus an exceptional rest, or grouped by
//! document classes into the edges of an extended automaton.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::predicate::Pred;
use crate::semantics::meaning;
use crate::system::{StateId, Symbol, ValidatedSystem};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionError {
    #[error("classes do not partition the transition relation: {problem}")]
    NotAPartition { problem: String },
    #[error("system `{system}` is not deterministic; its relation defines no functions")]
    NondeterministicSource { system: String },
    #[error("no parse entry for character `{symbol}`")]
    UnparsableCharacter { symbol: String },
    #[error("transition `{transition}`: {matching} conditions evaluate to true (need exactly 1)")]
    AmbiguousCondition { transition: String, matching: usize },
    #[error("mode projection misses state `{state}`")]
    IncompleteProjection { state: StateId },
    #[error("mode projection maps `{first}` and `{second}` to the same (mode, rest) pair")]
    ProjectionCollision { first: StateId, second: StateId },
    #[error("document class `{0}` is reserved")]
    ReservedDocClass(String),
    #[error("parse function is not invertible: `{first}` and `{second}` map to the same document")]
    NotInvertible { first: String, second: String },
}

/// An equivalence partition of a system's transition relation. Classes hold
/// indices into the canonical transition order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSpec {
    pub classes: BTreeMap<String, BTreeSet<usize>>,
}

impl PartitionSpec {
    pub fn new(classes: BTreeMap<String, BTreeSet<usize>>) -> Self {
        PartitionSpec { classes }
    }

    /// Checks that the classes cover the relation exactly, without overlap.
    pub fn check_partitions(&self, ts: &ValidatedSystem) -> Result<(), PartitionError> {
        let mut seen: BTreeMap<usize, &str> = BTreeMap::new();
        for (name, members) in &self.classes {
            for &ix in members {
                if ix >= ts.transitions().len() {
                    return Err(PartitionError::NotAPartition {
                        problem: format!("class `{name}` references transition index {ix} out of range"),
                    });
                }
                if let Some(other) = seen.insert(ix, name) {
                    return Err(PartitionError::NotAPartition {
                        problem: format!(
                            "transition `{}` is in classes `{other}` and `{name}`",
                            ts.transitions()[ix]
                        ),
                    });
                }
            }
        }
        if seen.len() != ts.transitions().len() {
            let missing = (0..ts.transitions().len())
                .find(|ix| !seen.contains_key(ix))
                .expect("some index is missing");
            return Err(PartitionError::NotAPartition {
                problem: format!("transition `{}` is in no class", ts.transitions()[missing]),
            });
        }
        Ok(())
    }

    fn class_of(&self, ix: usize) -> &str {
        self.classes
            .iter()
            .find(|(_, members)| members.contains(&ix))
            .map(|(name, _)| name.as_str())
            .expect("checked partition covers every transition")
    }
}

/// Witness of a compatibility violation: two equal-meaning characters whose
/// transitions to the same (output, successor) sit in different classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompatibilityWitness {
    pub first: Option<Symbol>,
    pub second: Option<Symbol>,
    pub state: StateId,
    pub class_of_first: String,
    pub class_of_second: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompatibilityReport {
    pub compatible: bool,
    pub witness: Option<CompatibilityWitness>,
}

/// A partition is compatible with the meaning of the input characters if
/// whenever `(i,o,p,q)` lies in a class and `i ~_p i'`, then `(i',o,p,q)`
/// lies in the same class.
pub fn check_compatibility(
    ts: &ValidatedSystem,
    part: &PartitionSpec,
) -> Result<CompatibilityReport, PartitionError> {
    part.check_partitions(ts)?;

    // Group the inputs occurring at each state; only characters that are
    // processed at p can violate compatibility (an equal-meaning partner of
    // a processed character is itself processed, since the meanings agree).
    let mut inputs_at: BTreeMap<&StateId, BTreeSet<&Option<Symbol>>> = BTreeMap::new();
    for t in ts.transitions() {
        inputs_at.entry(&t.from).or_default().insert(&t.input);
    }

    for (state, inputs) in inputs_at {
        let inputs: Vec<_> = inputs.into_iter().collect();
        for (n, &first) in inputs.iter().enumerate() {
            let m1 = meaning(ts, state, first);
            for &second in &inputs[n + 1..] {
                let m2 = meaning(ts, state, second);
                if m1.pairs != m2.pairs {
                    continue;
                }
                for (out, to) in &m1.pairs {
                    let ix1 = find_transition(ts, state, first, out, to);
                    let ix2 = find_transition(ts, state, second, out, to);
                    let c1 = part.class_of(ix1);
                    let c2 = part.class_of(ix2);
                    if c1 != c2 {
                        return Ok(CompatibilityReport {
                            compatible: false,
                            witness: Some(CompatibilityWitness {
                                first: first.clone(),
                                second: second.clone(),
                                state: state.clone(),
                                class_of_first: c1.to_string(),
                                class_of_second: c2.to_string(),
                            }),
                        });
                    }
                }
            }
        }
    }
    Ok(CompatibilityReport {
        compatible: true,
        witness: None,
    })
}

fn find_transition(
    ts: &ValidatedSystem,
    from: &StateId,
    input: &Option<Symbol>,
    output: &Option<Symbol>,
    to: &StateId,
) -> usize {
    *ts.matching(from, input)
        .iter()
        .find(|&&ix| {
            let t = &ts.transitions()[ix];
            &t.output == output && &t.to == to
        })
        .expect("pair stems from a transition")
}

/// A sub-function table: (input, state) -> (output, successor).
pub type FunctionTable = BTreeMap<(Option<Symbol>, StateId), (Option<Symbol>, StateId)>;

/// Materializes each class of a deterministic relation as a lookup table.
/// The union of the tables reconstructs the relation exactly.
pub fn partition_deterministic(
    ts: &ValidatedSystem,
    part: &PartitionSpec,
) -> Result<BTreeMap<String, FunctionTable>, PartitionError> {
    if !ts.is_deterministic() {
        return Err(PartitionError::NondeterministicSource {
            system: ts.name().to_string(),
        });
    }
    part.check_partitions(ts)?;
    let mut tables: BTreeMap<String, FunctionTable> = BTreeMap::new();
    for (name, members) in &part.classes {
        let mut table = FunctionTable::new();
        for &ix in members {
            let t = &ts.transitions()[ix];
            table.insert(
                (t.input.clone(), t.from.clone()),
                (t.output.clone(), t.to.clone()),
            );
        }
        tables.insert(name.clone(), table);
    }
    Ok(tables)
}

/// Rest part of a partitioned state: named integer fields.
pub type Rest = BTreeMap<String, i64>;

/// A total map from states into mode and rest parts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModeProjection {
    pub map: BTreeMap<StateId, (String, Rest)>,
}

impl ModeProjection {
    pub fn get(&self, state: &StateId) -> Result<&(String, Rest), PartitionError> {
        self.map
            .get(state)
            .ok_or_else(|| PartitionError::IncompleteProjection { state: state.clone() })
    }

    fn check_total(&self, ts: &ValidatedSystem) -> Result<(), PartitionError> {
        for state in ts.states() {
            self.get(state)?;
        }
        Ok(())
    }

    /// The state pattern needs the projection to be invertible.
    fn check_injective(&self, ts: &ValidatedSystem) -> Result<(), PartitionError> {
        let mut seen: BTreeMap<&(String, Rest), &StateId> = BTreeMap::new();
        for state in ts.states() {
            let pair = self.get(state)?;
            if let Some(prev) = seen.insert(pair, state) {
                return Err(PartitionError::ProjectionCollision {
                    first: prev.clone(),
                    second: state.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Per-mode function table: (input, rest) -> (output, successor).
pub type ModeTable = BTreeMap<(Option<Symbol>, Rest), (Option<Symbol>, StateId)>;

/// Splits each class function by the mode component of its source states:
/// `(o,q) = delta_l(i, p_mode, p_rest) = delta_l_{p_mode}(i, p_rest)`.
pub fn state_pattern(
    ts: &ValidatedSystem,
    part: &PartitionSpec,
    projection: &ModeProjection,
) -> Result<BTreeMap<(String, String), ModeTable>, PartitionError> {
    if !ts.is_deterministic() {
        return Err(PartitionError::NondeterministicSource {
            system: ts.name().to_string(),
        });
    }
    part.check_partitions(ts)?;
    projection.check_total(ts)?;
    projection.check_injective(ts)?;

    let mut tables: BTreeMap<(String, String), ModeTable> = BTreeMap::new();
    for (name, members) in &part.classes {
        for &ix in members {
            let t = &ts.transitions()[ix];
            let (mode, rest) = projection.get(&t.from)?;
            tables
                .entry((name.clone(), mode.clone()))
                .or_default()
                .insert(
                    (t.input.clone(), rest.clone()),
                    (t.output.clone(), t.to.clone()),
                );
        }
    }
    Ok(tables)
}

/// Result of splitting a relation into a deterministic part and the
/// exceptional rest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExceptionSplit {
    pub deterministic: BTreeSet<usize>,
    pub exceptional: BTreeSet<usize>,
}

impl ExceptionSplit {
    /// The split as a named partition; an empty exceptional class is
    /// omitted so the classes still partition the relation.
    pub fn as_partition_spec(&self) -> PartitionSpec {
        let mut classes = BTreeMap::new();
        classes.insert("deterministic".to_string(), self.deterministic.clone());
        if !self.exceptional.is_empty() {
            classes.insert("exceptional".to_string(), self.exceptional.clone());
        }
        PartitionSpec::new(classes)
    }
}

/// Greedily assigns, in canonical transition order, the first transition of
/// each (state, input) key to the deterministic part; everything else is
/// exceptional. A state never mixes spontaneous and input-consuming
/// transitions inside the deterministic part, so that part is itself a
/// deterministic relation.
pub fn split_exceptions(ts: &ValidatedSystem) -> ExceptionSplit {
    let mut deterministic = BTreeSet::new();
    let mut exceptional = BTreeSet::new();
    let mut taken: BTreeSet<(&StateId, &Option<Symbol>)> = BTreeSet::new();
    let mut flavor: BTreeMap<&StateId, bool> = BTreeMap::new();

    for (ix, t) in ts.transitions().iter().enumerate() {
        let spontaneous = t.input.is_none();
        let key = (&t.from, &t.input);
        let flavor_ok = flavor
            .get(&t.from)
            .map(|&f| f == spontaneous)
            .unwrap_or(true);
        if !taken.contains(&key) && flavor_ok {
            taken.insert(key);
            flavor.insert(&t.from, spontaneous);
            deterministic.insert(ix);
        } else {
            exceptional.insert(ix);
        }
    }
    ExceptionSplit {
        deterministic,
        exceptional,
    }
}

/// Parse result of one character: its document class plus parameter values.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DocParse {
    pub class: String,
    pub params: BTreeMap<String, i64>,
}

/// Reserved document class standing for the empty character.
pub const EPSILON_DOC_CLASS: &str = "eps";

/// An invertible parse of I/O characters into document classes with
/// parameters, a mode/rest split of the state, and a closed set of named
/// conditions over rest fields and input parameters.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DocClassModel {
    pub parse: BTreeMap<Symbol, DocParse>,
    pub projection: ModeProjection,
    pub conditions: Vec<(String, Pred)>,
}

impl DocClassModel {
    pub fn check(&self) -> Result<(), PartitionError> {
        let mut seen: BTreeMap<&DocParse, &Symbol> = BTreeMap::new();
        for (symbol, parse) in &self.parse {
            if parse.class == EPSILON_DOC_CLASS {
                return Err(PartitionError::ReservedDocClass(parse.class.clone()));
            }
            if let Some(prev) = seen.insert(parse, symbol) {
                return Err(PartitionError::NotInvertible {
                    first: prev.to_string(),
                    second: symbol.to_string(),
                });
            }
        }
        Ok(())
    }

    fn parse_io(&self, io: &Option<Symbol>) -> Result<DocParse, PartitionError> {
        match io {
            None => Ok(DocParse {
                class: EPSILON_DOC_CLASS.to_string(),
                params: BTreeMap::new(),
            }),
            Some(symbol) => self
                .parse
                .get(symbol)
                .cloned()
                .ok_or_else(|| PartitionError::UnparsableCharacter {
                    symbol: symbol.to_string(),
                }),
        }
    }
}

/// One edge of the extended automaton:
/// `p_mode --docCls_i, cond / docCls_o--> q_mode`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExtendedAutomatonEdge {
    pub from_mode: String,
    pub to_mode: String,
    pub input_class: String,
    pub condition: String,
    pub output_class: String,
}

impl std::fmt::Display for ExtendedAutomatonEdge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} -[{}, {} / {}]-> {}",
            self.from_mode, self.input_class, self.condition, self.output_class, self.to_mode
        )
    }
}

/// Groups transitions by (input class, output class, source mode, target
/// mode, condition), ignoring output parameters. Exactly one condition must
/// hold per transition, evaluated on the source rest state and the input
/// parameters.
pub fn doc_class_partition(
    ts: &ValidatedSystem,
    dcm: &DocClassModel,
) -> Result<(Vec<ExtendedAutomatonEdge>, PartitionSpec), PartitionError> {
    dcm.check()?;
    let mut groups: BTreeMap<ExtendedAutomatonEdge, BTreeSet<usize>> = BTreeMap::new();
    for (ix, t) in ts.transitions().iter().enumerate() {
        let input = dcm.parse_io(&t.input)?;
        let output = dcm.parse_io(&t.output)?;
        let (from_mode, from_rest) = dcm.projection.get(&t.from)?.clone();
        let (to_mode, _) = dcm.projection.get(&t.to)?.clone();

        let matching: Vec<&String> = dcm
            .conditions
            .iter()
            .filter(|(_, pred)| pred.eval_numeric(&from_rest, &input.params))
            .map(|(name, _)| name)
            .collect();
        if matching.len() != 1 {
            return Err(PartitionError::AmbiguousCondition {
                transition: t.to_string(),
                matching: matching.len(),
            });
        }

        let edge = ExtendedAutomatonEdge {
            from_mode,
            to_mode,
            input_class: input.class,
            condition: matching[0].clone(),
            output_class: output.class,
        };
        groups.entry(edge).or_default().insert(ix);
    }

    let mut edges = Vec::new();
    let mut classes = BTreeMap::new();
    for (edge, members) in groups {
        let name = format!(
            "{}__{}__{}__{}__{}",
            edge.from_mode, edge.input_class, edge.condition, edge.output_class, edge.to_mode
        );
        classes.insert(name, members);
        edges.push(edge);
    }
    Ok((edges, PartitionSpec::new(classes)))
}

/// Outcome of checking that equal-meaning characters share a document class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocClassPropositionReport {
    pub holds: bool,
    pub witness: Option<(Symbol, Symbol, StateId)>,
}

/// Scans all reachable states for pairs of input characters with equal,
/// non-empty meaning whose document classes differ. Characters the state
/// does not process put no constraint on the classes: the compatibility
/// condition only ever binds transitions, and unprocessed characters have
/// none.
pub fn verify_docclass_proposition(
    ts: &ValidatedSystem,
    dcm: &DocClassModel,
) -> DocClassPropositionReport {
    let symbols: Vec<Symbol> = ts
        .input_symbols()
        .into_iter()
        .filter(|s| dcm.parse.contains_key(s))
        .collect();
    for state in ts.reachable_states() {
        for (n, first) in symbols.iter().enumerate() {
            let m1 = meaning(ts, state, &Some(first.clone()));
            if m1.is_empty() {
                continue;
            }
            for second in &symbols[n + 1..] {
                let m2 = meaning(ts, state, &Some(second.clone()));
                if m1.pairs == m2.pairs
                    && dcm.parse[first].class != dcm.parse[second].class
                {
                    return DocClassPropositionReport {
                        holds: false,
                        witness: Some((first.clone(), second.clone(), state.clone())),
                    };
                }
            }
        }
    }
    DocClassPropositionReport {
        holds: true,
        witness: None,
    }
}
