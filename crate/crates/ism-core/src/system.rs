//! Finite I/O-transition systems and their structural properties.
//!
//! A system is a finite state set with named input and output ports, each
//! carrying a finite alphabet, and a transition relation whose elements
//! consume at most one input character and emit at most one output character
//! per step. The empty character is written `eps` in the surface syntax and
//! represented as an absent input/output here.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

/// Reserved surface spelling of the empty character.
pub const EPSILON_TOKEN: &str = "eps";

/// Reserved name of the internal tick port. Tick ports are ordinary input
/// ports except that no channel may couple them.
pub const TICK_PORT: &str = "tick";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(String);

impl StateId {
    pub fn new(name: impl Into<String>) -> Self {
        StateId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StateId {
    fn from(s: &str) -> Self {
        StateId::new(s)
    }
}

/// A single character of some port alphabet. `eps` is reserved: the empty
/// character is modeled as the absence of a symbol, never as a `Character`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Character(String);

impl Character {
    pub fn new(symbol: impl Into<String>) -> Self {
        Character(symbol.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Character {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Character {
    fn from(s: &str) -> Self {
        Character::new(s)
    }
}

/// A character observed on a specific port. Input characters of a system are
/// identified by the pair, so equal-meaning comparisons range across ports.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol {
    pub port: String,
    pub character: Character,
}

impl Symbol {
    pub fn new(port: impl Into<String>, character: impl Into<Character>) -> Self {
        Symbol {
            port: port.into(),
            character: character.into(),
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.port, self.character)
    }
}

/// Renders an optional symbol, using the reserved token for the empty case.
pub fn fmt_io(io: &Option<Symbol>) -> String {
    match io {
        Some(sym) => format!("{}.{}", sym.port, sym.character),
        None => EPSILON_TOKEN.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    Input,
    Output,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Input => f.write_str("input"),
            Direction::Output => f.write_str("output"),
        }
    }
}

/// A named port with a finite, non-empty alphabet. `eps` never appears in a
/// declared alphabet; it is implicitly admissible on every port.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Port {
    pub name: String,
    pub alphabet: BTreeSet<Character>,
}

impl Port {
    pub fn new<I, C>(name: impl Into<String>, alphabet: I) -> Self
    where
        I: IntoIterator<Item = C>,
        C: Into<Character>,
    {
        Port {
            name: name.into(),
            alphabet: alphabet.into_iter().map(Into::into).collect(),
        }
    }
}

/// One element of the transition relation. An absent input (or output) means
/// the empty character on every component of that direction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transition {
    pub from: StateId,
    pub to: StateId,
    pub input: Option<Symbol>,
    pub output: Option<Symbol>,
}

impl Transition {
    pub fn new(
        from: impl Into<StateId>,
        to: impl Into<StateId>,
        input: Option<Symbol>,
        output: Option<Symbol>,
    ) -> Self {
        Transition {
            from: from.into(),
            to: to.into(),
            input,
            output,
        }
    }

    /// Canonical ordering key: (from, input port, input char, output port,
    /// output char, to), with the empty character sorting first.
    fn canonical_key(&self) -> (&StateId, &Option<Symbol>, &Option<Symbol>, &StateId) {
        (&self.from, &self.input, &self.output, &self.to)
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} -> {} : {} / {}",
            self.from,
            self.to,
            fmt_io(&self.input),
            fmt_io(&self.output)
        )
    }
}

/// A transition system as declared, prior to validation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SystemDef {
    pub name: String,
    pub states: BTreeSet<StateId>,
    pub initial: Option<StateId>,
    pub input_ports: Vec<Port>,
    pub output_ports: Vec<Port>,
    pub transitions: Vec<Transition>,
    pub accepting: BTreeSet<StateId>,
}

impl SystemDef {
    pub fn new(name: impl Into<String>) -> Self {
        SystemDef {
            name: name.into(),
            ..SystemDef::default()
        }
    }

    pub fn states<I, S>(mut self, states: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<StateId>,
    {
        self.states.extend(states.into_iter().map(Into::into));
        self
    }

    pub fn initial(mut self, state: impl Into<StateId>) -> Self {
        self.initial = Some(state.into());
        self
    }

    pub fn input_port<I, C>(mut self, name: &str, alphabet: I) -> Self
    where
        I: IntoIterator<Item = C>,
        C: Into<Character>,
    {
        self.input_ports.push(Port::new(name, alphabet));
        self
    }

    pub fn output_port<I, C>(mut self, name: &str, alphabet: I) -> Self
    where
        I: IntoIterator<Item = C>,
        C: Into<Character>,
    {
        self.output_ports.push(Port::new(name, alphabet));
        self
    }

    pub fn accepting<I, S>(mut self, states: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<StateId>,
    {
        self.accepting.extend(states.into_iter().map(Into::into));
        self
    }

    pub fn transition(
        mut self,
        from: impl Into<StateId>,
        to: impl Into<StateId>,
        input: Option<Symbol>,
        output: Option<Symbol>,
    ) -> Self {
        self.transitions.push(Transition::new(from, to, input, output));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SystemError {
    #[error("system {system}: unknown state `{state}` referenced by {referent}")]
    UnknownState {
        system: String,
        state: String,
        referent: String,
    },
    #[error("system {system}: {direction} port `{port}`: {problem}")]
    AlphabetViolation {
        system: String,
        port: String,
        direction: Direction,
        problem: String,
    },
    #[error("system {system}: duplicate {direction} port name `{port}`")]
    DuplicatePortName {
        system: String,
        port: String,
        direction: Direction,
    },
    #[error("system {system}: {problem}")]
    InvalidName { system: String, problem: String },
}

/// A structurally checked system. Transitions are stored in canonical order,
/// deduplicated, and indexed by (state, input) for constant-time successor
/// lookup. Values are immutable after construction; all queries are pure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedSystem {
    def: SystemDef,
    transitions: Vec<Transition>,
    by_state_input: BTreeMap<(StateId, Option<Symbol>), Vec<usize>>,
    by_state: BTreeMap<StateId, Vec<usize>>,
    reachable: BTreeSet<StateId>,
}

/// Report of the three reactive-system requirements: at least two input
/// ports, at most one non-empty input component per transition, and a
/// per-input-port projection that is not a partial-function graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReactivityReport {
    pub has_multiple_input_ports: bool,
    pub single_non_empty_input: bool,
    pub per_component_nondeterministic: BTreeMap<String, bool>,
    pub is_reactive: bool,
}

/// Checks every structural invariant of a system definition and builds the
/// indexed form used by all analyses.
pub fn validate_system(def: SystemDef) -> Result<ValidatedSystem, SystemError> {
    ValidatedSystem::validate(def)
}

impl ValidatedSystem {
    pub fn validate(def: SystemDef) -> Result<ValidatedSystem, SystemError> {
        let sys = def.name.clone();
        if def.name.is_empty() {
            return Err(SystemError::InvalidName {
                system: sys,
                problem: "system name is empty".into(),
            });
        }
        let initial = def.initial.clone().ok_or_else(|| SystemError::UnknownState {
            system: sys.clone(),
            state: "<none>".into(),
            referent: "initial state declaration".into(),
        })?;
        if def.states.is_empty() || !def.states.contains(&initial) {
            return Err(SystemError::UnknownState {
                system: sys,
                state: initial.to_string(),
                referent: "initial state declaration".into(),
            });
        }
        for state in &def.accepting {
            if !def.states.contains(state) {
                return Err(SystemError::UnknownState {
                    system: sys,
                    state: state.to_string(),
                    referent: "accepting set".into(),
                });
            }
        }
        for state in &def.states {
            if state.as_str().is_empty() || state.as_str() == EPSILON_TOKEN {
                return Err(SystemError::InvalidName {
                    system: sys,
                    problem: format!("state name `{state}` is reserved or empty"),
                });
            }
        }

        for (ports, direction) in [
            (&def.input_ports, Direction::Input),
            (&def.output_ports, Direction::Output),
        ] {
            let mut seen = BTreeSet::new();
            for port in ports {
                if port.name.is_empty() {
                    return Err(SystemError::InvalidName {
                        system: sys,
                        problem: format!("{direction} port with empty name"),
                    });
                }
                if !seen.insert(port.name.clone()) {
                    return Err(SystemError::DuplicatePortName {
                        system: sys,
                        port: port.name.clone(),
                        direction,
                    });
                }
                if port.alphabet.is_empty() {
                    return Err(SystemError::AlphabetViolation {
                        system: sys,
                        port: port.name.clone(),
                        direction,
                        problem: "alphabet is empty".into(),
                    });
                }
                for ch in &port.alphabet {
                    if ch.as_str().is_empty() || ch.as_str() == EPSILON_TOKEN {
                        return Err(SystemError::AlphabetViolation {
                            system: sys,
                            port: port.name.clone(),
                            direction,
                            problem: format!("character `{ch}` is reserved or empty"),
                        });
                    }
                }
            }
        }

        let in_ports: BTreeMap<&str, &Port> =
            def.input_ports.iter().map(|p| (p.name.as_str(), p)).collect();
        let out_ports: BTreeMap<&str, &Port> =
            def.output_ports.iter().map(|p| (p.name.as_str(), p)).collect();

        for t in &def.transitions {
            for (state, referent) in [(&t.from, "transition source"), (&t.to, "transition target")]
            {
                if !def.states.contains(state) {
                    return Err(SystemError::UnknownState {
                        system: sys,
                        state: state.to_string(),
                        referent: format!("{referent} of `{t}`"),
                    });
                }
            }
            if let Some(sym) = &t.input {
                let port = in_ports.get(sym.port.as_str()).ok_or_else(|| {
                    SystemError::AlphabetViolation {
                        system: sys.clone(),
                        port: sym.port.clone(),
                        direction: Direction::Input,
                        problem: format!("port not declared (transition `{t}`)"),
                    }
                })?;
                if !port.alphabet.contains(&sym.character) {
                    return Err(SystemError::AlphabetViolation {
                        system: sys,
                        port: sym.port.clone(),
                        direction: Direction::Input,
                        problem: format!("character `{}` not in alphabet", sym.character),
                    });
                }
            }
            if let Some(sym) = &t.output {
                let port = out_ports.get(sym.port.as_str()).ok_or_else(|| {
                    SystemError::AlphabetViolation {
                        system: sys.clone(),
                        port: sym.port.clone(),
                        direction: Direction::Output,
                        problem: format!("port not declared (transition `{t}`)"),
                    }
                })?;
                if !port.alphabet.contains(&sym.character) {
                    return Err(SystemError::AlphabetViolation {
                        system: sys,
                        port: sym.port.clone(),
                        direction: Direction::Output,
                        problem: format!("character `{}` not in alphabet", sym.character),
                    });
                }
            }
        }

        // Canonical order and deduplication; the relation is a set.
        let mut transitions = def.transitions.clone();
        transitions.sort_by(|a, b| a.canonical_key().cmp(&b.canonical_key()));
        transitions.dedup();

        let mut by_state_input: BTreeMap<(StateId, Option<Symbol>), Vec<usize>> = BTreeMap::new();
        let mut by_state: BTreeMap<StateId, Vec<usize>> = BTreeMap::new();
        for (ix, t) in transitions.iter().enumerate() {
            by_state_input
                .entry((t.from.clone(), t.input.clone()))
                .or_default()
                .push(ix);
            by_state.entry(t.from.clone()).or_default().push(ix);
        }

        let mut validated = ValidatedSystem {
            def,
            transitions,
            by_state_input,
            by_state,
            reachable: BTreeSet::new(),
        };
        validated.reachable = validated.compute_reachable();
        Ok(validated)
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    pub fn states(&self) -> &BTreeSet<StateId> {
        &self.def.states
    }

    pub fn initial(&self) -> &StateId {
        self.def.initial.as_ref().expect("validated system has an initial state")
    }

    pub fn accepting(&self) -> &BTreeSet<StateId> {
        &self.def.accepting
    }

    pub fn input_ports(&self) -> &[Port] {
        &self.def.input_ports
    }

    pub fn output_ports(&self) -> &[Port] {
        &self.def.output_ports
    }

    pub fn input_port(&self, name: &str) -> Option<&Port> {
        self.def.input_ports.iter().find(|p| p.name == name)
    }

    pub fn output_port(&self, name: &str) -> Option<&Port> {
        self.def.output_ports.iter().find(|p| p.name == name)
    }

    /// Transitions in canonical order.
    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// All input symbols admitted by the declared input alphabets.
    pub fn input_symbols(&self) -> Vec<Symbol> {
        let mut out = Vec::new();
        for port in &self.def.input_ports {
            for ch in &port.alphabet {
                out.push(Symbol::new(port.name.clone(), ch.clone()));
            }
        }
        out
    }

    /// A system with a non-empty acceptance component is a role.
    pub fn is_role(&self) -> bool {
        !self.def.accepting.is_empty()
    }

    pub fn definition(&self) -> &SystemDef {
        &self.def
    }

    /// Transition indices leaving `state`, in canonical order.
    pub fn outgoing(&self, state: &StateId) -> &[usize] {
        self.by_state.get(state).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All (output, successor) pairs for `input` at `state`. The empty set is
    /// a legal result; `input = None` queries spontaneous transitions.
    pub fn step(
        &self,
        state: &StateId,
        input: &Option<Symbol>,
    ) -> BTreeSet<(Option<Symbol>, StateId)> {
        assert!(
            self.def.states.contains(state),
            "step: state `{state}` not declared in `{}`",
            self.def.name
        );
        self.by_state_input
            .get(&(state.clone(), input.clone()))
            .map(|ixs| {
                ixs.iter()
                    .map(|&ix| {
                        let t = &self.transitions[ix];
                        (t.output.clone(), t.to.clone())
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Transition indices matching (state, input).
    pub fn matching(&self, state: &StateId, input: &Option<Symbol>) -> &[usize] {
        self.by_state_input
            .get(&(state.clone(), input.clone()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    fn compute_reachable(&self) -> BTreeSet<StateId> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        let initial = self.initial().clone();
        seen.insert(initial.clone());
        queue.push_back(initial);
        while let Some(state) = queue.pop_front() {
            for &ix in self.outgoing(&state) {
                let to = &self.transitions[ix].to;
                if seen.insert(to.clone()) {
                    queue.push_back(to.clone());
                }
            }
        }
        seen
    }

    /// Least fixed point of successor expansion from the initial state.
    pub fn reachable_states(&self) -> &BTreeSet<StateId> {
        &self.reachable
    }

    /// The relation is deterministic when it is the graph of a partial
    /// function over (state, input): at most one transition per key, and no
    /// state offering both a spontaneous and an input-consuming resolution.
    pub fn is_deterministic(&self) -> bool {
        for ixs in self.by_state_input.values() {
            if ixs.len() > 1 {
                return false;
            }
        }
        for ixs in self.by_state.values() {
            let mut has_eps = false;
            let mut has_input = false;
            for &ix in ixs {
                match self.transitions[ix].input {
                    None => has_eps = true,
                    Some(_) => has_input = true,
                }
            }
            if has_eps && has_input {
                return false;
            }
        }
        true
    }

    /// Statelessness is judged on reachable states: declared-but-unreachable
    /// states are modeling noise.
    pub fn is_stateless(&self) -> bool {
        self.reachable.len() == 1
    }

    /// Evaluates the three reactive-system requirements.
    ///
    /// Requirement three projects the reachable transition relation onto each
    /// input port; the projection keys are (character-or-empty, state) and a
    /// port qualifies as nondeterministic when some key admits two distinct
    /// successor states. Keying successors rather than (output, successor)
    /// pairs keeps "reactive implies stateful" a theorem of the finite
    /// representation: two distinct successors of one reachable state are two
    /// reachable states.
    pub fn check_reactive(&self) -> ReactivityReport {
        let has_multiple_input_ports = self.def.input_ports.len() >= 2;
        // At most one non-empty input component is guaranteed by the
        // transition shape.
        let single_non_empty_input = true;

        let mut per_component = BTreeMap::new();
        for port in &self.def.input_ports {
            let mut successors: BTreeMap<(Option<&Character>, &StateId), BTreeSet<&StateId>> =
                BTreeMap::new();
            for t in &self.transitions {
                if !self.reachable.contains(&t.from) {
                    continue;
                }
                let projected = match &t.input {
                    Some(sym) if sym.port == port.name => Some(&sym.character),
                    _ => None,
                };
                successors
                    .entry((projected, &t.from))
                    .or_default()
                    .insert(&t.to);
            }
            let nondet = successors.values().any(|set| set.len() >= 2);
            per_component.insert(port.name.clone(), nondet);
        }

        let is_reactive = has_multiple_input_ports
            && single_non_empty_input
            && !per_component.is_empty()
            && per_component.values().all(|&b| b);
        ReactivityReport {
            has_multiple_input_ports,
            single_non_empty_input,
            per_component_nondeterministic: per_component,
            is_reactive,
        }
    }

    /// Rebuilds the system under bijective renamings of states, characters
    /// and ports. Absent entries leave the name unchanged.
    pub fn renamed(
        &self,
        states: &BTreeMap<StateId, StateId>,
        characters: &BTreeMap<Character, Character>,
        ports: &BTreeMap<String, String>,
    ) -> SystemDef {
        let rs = |s: &StateId| states.get(s).cloned().unwrap_or_else(|| s.clone());
        let rc = |c: &Character| characters.get(c).cloned().unwrap_or_else(|| c.clone());
        let rp = |p: &str| ports.get(p).cloned().unwrap_or_else(|| p.to_string());
        let rport = |p: &Port| Port {
            name: rp(&p.name),
            alphabet: p.alphabet.iter().map(rc).collect(),
        };
        let rsym = |sym: &Option<Symbol>| {
            sym.as_ref().map(|s| Symbol {
                port: rp(&s.port),
                character: rc(&s.character),
            })
        };
        SystemDef {
            name: self.def.name.clone(),
            states: self.def.states.iter().map(rs).collect(),
            initial: Some(rs(self.initial())),
            input_ports: self.def.input_ports.iter().map(rport).collect(),
            output_ports: self.def.output_ports.iter().map(rport).collect(),
            transitions: self
                .transitions
                .iter()
                .map(|t| Transition {
                    from: rs(&t.from),
                    to: rs(&t.to),
                    input: rsym(&t.input),
                    output: rsym(&t.output),
                })
                .collect(),
            accepting: self.def.accepting.iter().map(rs).collect(),
        }
    }
}

/// Shorthand for an input/output symbol in construction code.
pub fn sym(port: &str, character: &str) -> Option<Symbol> {
    Some(Symbol::new(port, character))
}
