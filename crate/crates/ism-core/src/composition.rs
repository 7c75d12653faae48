//! Channel coupling of systems into product systems, and the four
//! composition operators for simple systems.
//!
//! A channel identifies an output port of one system with an input port of
//! another; the coupled components carry the same character at every step.
//! Product construction uses rendezvous semantics: a send and its matching
//! receive fire in the same product step, every other component stutters,
//! and nothing is buffered. Transitions on uncoupled ports fire freely;
//! uncoupled inputs stay inputs of the product and uncoupled outputs stay
//! observable.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::system::{
    fmt_io, validate_system, Character, Port, StateId, Symbol, SystemDef, SystemError, Transition,
    ValidatedSystem, TICK_PORT,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompositionError {
    #[error("unknown system `{0}`")]
    UnknownSystem(String),
    #[error("system `{system}` has no {direction} port `{port}`")]
    UnknownPort {
        system: String,
        port: String,
        direction: &'static str,
    },
    #[error("channel from `{0}` to itself: systems do not interact with their own subsystems")]
    SelfCoupling(String),
    #[error("alphabet of `{from}` is not contained in alphabet of `{to}`: `{character}` unreceivable")]
    AlphabetMismatch {
        from: String,
        to: String,
        character: Character,
    },
    #[error("port `{0}` already participates in a channel")]
    PortAlreadyCoupled(String),
    #[error("port `{0}` is a tick port; tick ports may not be coupled")]
    TickCoupled(String),
    #[error("system `{system}` is not a simple system: {reason}")]
    NotSimple { system: String, reason: String },
    #[error("feedback requires output alphabet within input alphabet: `{character}` not accepted")]
    FeedbackAlphabetMismatch { character: Character },
    #[error("while composition exceeded {cap} iterations at state `{state}` on input `{input}`")]
    IterationCapExceeded {
        cap: usize,
        state: StateId,
        input: Character,
    },
    #[error(transparent)]
    Invalid(#[from] SystemError),
}

/// One side of a channel.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Endpoint {
    pub system: String,
    pub port: String,
}

impl Endpoint {
    pub fn new(system: impl Into<String>, port: impl Into<String>) -> Self {
        Endpoint {
            system: system.into(),
            port: port.into(),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.system, self.port)
    }
}

/// An idealized channel: the output port and input port carry identical
/// characters at identical times.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Channel {
    pub from: Endpoint,
    pub to: Endpoint,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

/// Builds and checks a channel against the systems and channels already
/// present: distinct systems, receivable alphabet, at most one channel per
/// port, no coupling of tick ports.
pub fn make_channel(
    systems: &[&ValidatedSystem],
    existing: &[Channel],
    from: Endpoint,
    to: Endpoint,
) -> Result<Channel, CompositionError> {
    let find = |name: &str| {
        systems
            .iter()
            .find(|s| s.name() == name)
            .copied()
            .ok_or_else(|| CompositionError::UnknownSystem(name.to_string()))
    };
    let sender = find(&from.system)?;
    let receiver = find(&to.system)?;
    if from.system == to.system {
        return Err(CompositionError::SelfCoupling(from.system));
    }
    let out_port = sender
        .output_port(&from.port)
        .ok_or_else(|| CompositionError::UnknownPort {
            system: from.system.clone(),
            port: from.port.clone(),
            direction: "output",
        })?;
    let in_port = receiver
        .input_port(&to.port)
        .ok_or_else(|| CompositionError::UnknownPort {
            system: to.system.clone(),
            port: to.port.clone(),
            direction: "input",
        })?;
    if in_port.name == TICK_PORT {
        return Err(CompositionError::TickCoupled(to.to_string()));
    }
    for ch in &out_port.alphabet {
        if !in_port.alphabet.contains(ch) {
            return Err(CompositionError::AlphabetMismatch {
                from: from.to_string(),
                to: to.to_string(),
                character: ch.clone(),
            });
        }
    }
    for channel in existing {
        for used in [&channel.from, &channel.to] {
            if *used == from || *used == to {
                return Err(CompositionError::PortAlreadyCoupled(used.to_string()));
            }
        }
    }
    Ok(Channel { from, to })
}

/// How one product transition moves its components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProductMove {
    /// One component fires alone; its transition touches no coupled port.
    Free { component: usize, transition: usize },
    /// A send and the matching receive fire together over one channel.
    Sync {
        sender: usize,
        sender_transition: usize,
        receiver: usize,
        receiver_transition: usize,
        channel: usize,
        character: Character,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductTransition {
    pub from: usize,
    pub to: usize,
    pub mv: ProductMove,
}

/// Construction notes: sends that no receiver transition could ever accept,
/// and transitions that would need to interact on two channels in one step
/// (impossible under rendezvous pairing, so they never fire).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConstructionReport {
    pub senders_without_receiver: Vec<(String, Transition, Channel)>,
    pub unfireable: Vec<(String, Transition)>,
}

/// The synchronized product of channel-coupled systems, restricted to the
/// states reachable from the tuple of initial states.
#[derive(Debug, Clone)]
pub struct ProductSystem {
    components: Vec<ValidatedSystem>,
    channels: Vec<Channel>,
    states: Vec<Vec<StateId>>,
    state_ix: BTreeMap<Vec<StateId>, usize>,
    transitions: Vec<ProductTransition>,
    outgoing: Vec<Vec<usize>>,
    report: ConstructionReport,
}

impl ProductSystem {
    pub fn components(&self) -> &[ValidatedSystem] {
        &self.components
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn component_index(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c.name() == name)
    }

    /// Reachable product states; index 0 is the initial tuple.
    pub fn states(&self) -> &[Vec<StateId>] {
        &self.states
    }

    /// Index of a reachable state tuple, if it is one.
    pub fn state_index(&self, tuple: &[StateId]) -> Option<usize> {
        self.state_ix.get(tuple).copied()
    }

    pub fn initial(&self) -> usize {
        0
    }

    pub fn transitions(&self) -> &[ProductTransition] {
        &self.transitions
    }

    /// Indices of transitions leaving a product state.
    pub fn outgoing(&self, state: usize) -> &[usize] {
        &self.outgoing[state]
    }

    pub fn report(&self) -> &ConstructionReport {
        &self.report
    }

    /// A product state accepts when every component state accepts its role.
    pub fn is_accepting(&self, state: usize) -> bool {
        self.states[state]
            .iter()
            .zip(&self.components)
            .all(|(s, c)| c.accepting().contains(s))
    }

    /// True when the component stutters in the given move.
    pub fn stutters(&self, mv: &ProductMove, component: usize) -> bool {
        match mv {
            ProductMove::Free { component: c, .. } => *c != component,
            ProductMove::Sync {
                sender, receiver, ..
            } => *sender != component && *receiver != component,
        }
    }

    /// The environment input consumed by this move, if any.
    pub fn env_input(&self, mv: &ProductMove) -> Option<(usize, Symbol)> {
        let (component, transition) = match mv {
            ProductMove::Free {
                component,
                transition,
            } => (*component, *transition),
            ProductMove::Sync {
                sender,
                sender_transition,
                ..
            } => (*sender, *sender_transition),
        };
        let t = &self.components[component].transitions()[transition];
        t.input.as_ref().map(|sym| (component, sym.clone()))
    }

    pub fn render_state(&self, state: usize) -> String {
        let names: Vec<&str> = self.states[state].iter().map(StateId::as_str).collect();
        format!("({})", names.join(","))
    }

    pub fn render_move(&self, mv: &ProductMove) -> (String, String) {
        let part = |component: usize, transition: usize| {
            let t = &self.components[component].transitions()[transition];
            format!(
                "{}:{}-[{}/{}]->{}",
                self.components[component].name(),
                t.from,
                fmt_io(&t.input),
                fmt_io(&t.output),
                t.to
            )
        };
        match mv {
            ProductMove::Free {
                component,
                transition,
            } => (part(*component, *transition), "-".to_string()),
            ProductMove::Sync {
                sender,
                sender_transition,
                receiver,
                receiver_transition,
                channel,
                character,
            } => (
                format!(
                    "{},{}",
                    part(*sender, *sender_transition),
                    part(*receiver, *receiver_transition)
                ),
                format!("{}:{}", self.channels[*channel], character),
            ),
        }
    }

    /// One line per transition: `from -> to : moves : channel`.
    pub fn edge_list(&self) -> String {
        let mut out = String::new();
        for t in &self.transitions {
            let (moves, channel) = self.render_move(&t.mv);
            out.push_str(&format!(
                "{} -> {} : {} : {}\n",
                self.render_state(t.from),
                self.render_state(t.to),
                moves,
                channel
            ));
        }
        out
    }

    /// The product flattened into a single system. Component states join
    /// into tuple names; uncoupled ports survive with a `system__port`
    /// prefix; the coupling channels disappear.
    pub fn flatten(&self, name: &str) -> Result<ValidatedSystem, SystemError> {
        let coupled: BTreeSet<(String, String, bool)> = self
            .channels
            .iter()
            .flat_map(|c| {
                [
                    (c.from.system.clone(), c.from.port.clone(), false),
                    (c.to.system.clone(), c.to.port.clone(), true),
                ]
            })
            .collect();
        let state_name = |tuple: &[StateId]| {
            StateId::new(
                tuple
                    .iter()
                    .map(StateId::as_str)
                    .collect::<Vec<_>>()
                    .join("__"),
            )
        };

        let mut def = SystemDef::new(name);
        for tuple in &self.states {
            def.states.insert(state_name(tuple));
        }
        def.initial = Some(state_name(&self.states[0]));
        for (ix, tuple) in self.states.iter().enumerate() {
            if self.is_accepting(ix) && self.components.iter().all(|c| c.is_role()) {
                def.accepting.insert(state_name(tuple));
            }
        }
        for component in &self.components {
            for port in component.input_ports() {
                if !coupled.contains(&(component.name().to_string(), port.name.clone(), true)) {
                    def.input_ports.push(Port {
                        name: format!("{}__{}", component.name(), port.name),
                        alphabet: port.alphabet.clone(),
                    });
                }
            }
            for port in component.output_ports() {
                if !coupled.contains(&(component.name().to_string(), port.name.clone(), false)) {
                    def.output_ports.push(Port {
                        name: format!("{}__{}", component.name(), port.name),
                        alphabet: port.alphabet.clone(),
                    });
                }
            }
        }

        let prefixed = |component: usize, io: &Option<Symbol>| {
            io.as_ref().map(|sym| Symbol {
                port: format!("{}__{}", self.components[component].name(), sym.port),
                character: sym.character.clone(),
            })
        };
        for pt in &self.transitions {
            let (input, output) = match &pt.mv {
                ProductMove::Free {
                    component,
                    transition,
                } => {
                    let t = &self.components[*component].transitions()[*transition];
                    (prefixed(*component, &t.input), prefixed(*component, &t.output))
                }
                ProductMove::Sync {
                    sender,
                    sender_transition,
                    receiver,
                    receiver_transition,
                    ..
                } => {
                    // The sender's input is free by construction and the
                    // receiver's output is uncoupled: those are the only
                    // externally visible parts of a synchronized step.
                    let ts = &self.components[*sender].transitions()[*sender_transition];
                    let tr = &self.components[*receiver].transitions()[*receiver_transition];
                    (prefixed(*sender, &ts.input), prefixed(*receiver, &tr.output))
                }
            };
            def.transitions.push(Transition {
                from: state_name(&self.states[pt.from]),
                to: state_name(&self.states[pt.to]),
                input,
                output,
            });
        }
        validate_system(def)
    }
}

/// Builds the reachable product of `components` under `channels`.
pub fn product(
    components: Vec<ValidatedSystem>,
    channels: Vec<Channel>,
) -> Result<ProductSystem, CompositionError> {
    {
        let refs: Vec<&ValidatedSystem> = components.iter().collect();
        let mut checked: Vec<Channel> = Vec::new();
        for channel in &channels {
            let validated = make_channel(
                &refs,
                &checked,
                channel.from.clone(),
                channel.to.clone(),
            )?;
            checked.push(validated);
        }
    }

    // Coupled ports per component, with the channel index.
    let mut coupled_out: Vec<BTreeMap<&str, usize>> = vec![BTreeMap::new(); components.len()];
    let mut coupled_in: Vec<BTreeMap<&str, usize>> = vec![BTreeMap::new(); components.len()];
    let position = |name: &str| {
        components
            .iter()
            .position(|c| c.name() == name)
            .expect("channel endpoints resolved above")
    };
    for (chix, channel) in channels.iter().enumerate() {
        coupled_out[position(&channel.from.system)].insert(&channel.from.port, chix);
        coupled_in[position(&channel.to.system)].insert(&channel.to.port, chix);
    }

    // Static analysis per component transition: how it may fire.
    #[derive(Clone, Copy, PartialEq)]
    enum Role {
        Free,
        Sender(usize),
        Receiver(usize),
        Unfireable,
    }
    let mut roles: Vec<Vec<Role>> = Vec::new();
    let mut report = ConstructionReport::default();
    for (cix, component) in components.iter().enumerate() {
        let mut component_roles = Vec::new();
        for t in component.transitions() {
            let recv = t
                .input
                .as_ref()
                .and_then(|sym| coupled_in[cix].get(sym.port.as_str()).copied());
            let send = t
                .output
                .as_ref()
                .and_then(|sym| coupled_out[cix].get(sym.port.as_str()).copied());
            let role = match (recv, send) {
                (None, None) => Role::Free,
                (None, Some(chix)) => Role::Sender(chix),
                (Some(chix), None) => Role::Receiver(chix),
                (Some(_), Some(_)) => {
                    report
                        .unfireable
                        .push((component.name().to_string(), t.clone()));
                    Role::Unfireable
                }
            };
            component_roles.push(role);
        }
        roles.push(component_roles);
    }

    // Senders whose character no receiver transition accepts anywhere.
    for (cix, component) in components.iter().enumerate() {
        for (tix, t) in component.transitions().iter().enumerate() {
            if let Role::Sender(chix) = roles[cix][tix] {
                let channel = &channels[chix];
                let rix = position(&channel.to.system);
                let character = &t.output.as_ref().expect("senders emit").character;
                let receivable = components[rix].transitions().iter().any(|u| {
                    u.input
                        .as_ref()
                        .map(|sym| sym.port == channel.to.port && &sym.character == character)
                        .unwrap_or(false)
                });
                if !receivable {
                    report.senders_without_receiver.push((
                        component.name().to_string(),
                        t.clone(),
                        channel.clone(),
                    ));
                }
            }
        }
    }

    let initial: Vec<StateId> = components.iter().map(|c| c.initial().clone()).collect();
    let mut states = vec![initial.clone()];
    let mut state_ix = BTreeMap::new();
    state_ix.insert(initial, 0usize);
    let mut transitions: Vec<ProductTransition> = Vec::new();
    let mut outgoing: Vec<Vec<usize>> = vec![Vec::new()];
    let mut queue = VecDeque::new();
    queue.push_back(0usize);

    while let Some(six) = queue.pop_front() {
        let tuple = states[six].clone();
        let mut successors: Vec<(Vec<StateId>, ProductMove)> = Vec::new();

        for (cix, component) in components.iter().enumerate() {
            for &tix in component.outgoing(&tuple[cix]) {
                match roles[cix][tix] {
                    Role::Free => {
                        let mut next = tuple.clone();
                        next[cix] = component.transitions()[tix].to.clone();
                        successors.push((
                            next,
                            ProductMove::Free {
                                component: cix,
                                transition: tix,
                            },
                        ));
                    }
                    Role::Sender(chix) => {
                        let channel = &channels[chix];
                        let rix = position(&channel.to.system);
                        let character = components[cix].transitions()[tix]
                            .output
                            .as_ref()
                            .expect("senders emit")
                            .character
                            .clone();
                        let wanted = Symbol::new(channel.to.port.clone(), character.clone());
                        for &uix in components[rix].matching(&tuple[rix], &Some(wanted.clone())) {
                            if roles[rix][uix] != Role::Receiver(chix) {
                                continue;
                            }
                            let mut next = tuple.clone();
                            next[cix] = components[cix].transitions()[tix].to.clone();
                            next[rix] = components[rix].transitions()[uix].to.clone();
                            successors.push((
                                next,
                                ProductMove::Sync {
                                    sender: cix,
                                    sender_transition: tix,
                                    receiver: rix,
                                    receiver_transition: uix,
                                    channel: chix,
                                    character: character.clone(),
                                },
                            ));
                        }
                    }
                    Role::Receiver(_) | Role::Unfireable => {}
                }
            }
        }

        for (next, mv) in successors {
            let target = match state_ix.get(&next) {
                Some(&ix) => ix,
                None => {
                    let ix = states.len();
                    states.push(next.clone());
                    state_ix.insert(next, ix);
                    outgoing.push(Vec::new());
                    queue.push_back(ix);
                    ix
                }
            };
            let tix = transitions.len();
            transitions.push(ProductTransition {
                from: six,
                to: target,
                mv,
            });
            outgoing[six].push(tix);
        }
    }

    Ok(ProductSystem {
        components,
        channels,
        states,
        state_ix,
        transitions,
        outgoing,
        report,
    })
}

/// A deterministic single-input single-output system in which every
/// transition consumes and emits exactly one character.
struct SimpleView<'a> {
    in_port: &'a Port,
    out_port: &'a Port,
    table: BTreeMap<(StateId, Character), (Character, StateId)>,
}

fn as_simple(ts: &ValidatedSystem) -> Result<SimpleView<'_>, CompositionError> {
    let fail = |reason: &str| CompositionError::NotSimple {
        system: ts.name().to_string(),
        reason: reason.to_string(),
    };
    if ts.input_ports().len() != 1 || ts.output_ports().len() != 1 {
        return Err(fail("needs exactly one input port and one output port"));
    }
    if !ts.is_deterministic() {
        return Err(fail("transition relation is not a function graph"));
    }
    let mut table = BTreeMap::new();
    for t in ts.transitions() {
        let (input, output) = match (&t.input, &t.output) {
            (Some(i), Some(o)) => (i, o),
            _ => return Err(fail("every step must consume and emit a character")),
        };
        table.insert(
            (t.from.clone(), input.character.clone()),
            (output.character.clone(), t.to.clone()),
        );
    }
    Ok(SimpleView {
        in_port: &ts.input_ports()[0],
        out_port: &ts.output_ports()[0],
        table,
    })
}

/// Sequential composition: feeds `f`'s output to `g` within one composed
/// step, computing g∘f. The coupling channel does not appear in the result.
pub fn compose_sequential(
    f: &ValidatedSystem,
    g: &ValidatedSystem,
) -> Result<ValidatedSystem, CompositionError> {
    let sf = as_simple(f)?;
    let sg = as_simple(g)?;
    for ch in &sf.out_port.alphabet {
        if !sg.in_port.alphabet.contains(ch) {
            return Err(CompositionError::AlphabetMismatch {
                from: format!("{}.{}", f.name(), sf.out_port.name),
                to: format!("{}.{}", g.name(), sg.in_port.name),
                character: ch.clone(),
            });
        }
    }

    let name = format!("{}_seq_{}", f.name(), g.name());
    let joined = |qf: &StateId, qg: &StateId| StateId::new(format!("{qf}__{qg}"));
    let mut def = SystemDef::new(&name)
        .input_port(&sf.in_port.name.clone(), sf.in_port.alphabet.clone())
        .output_port(&sg.out_port.name.clone(), sg.out_port.alphabet.clone());

    let start = (f.initial().clone(), g.initial().clone());
    let mut seen = BTreeSet::new();
    seen.insert(start.clone());
    let mut queue = VecDeque::new();
    queue.push_back(start);
    while let Some((qf, qg)) = queue.pop_front() {
        def.states.insert(joined(&qf, &qg));
        for input in &sf.in_port.alphabet {
            let Some((mid, qf2)) = sf.table.get(&(qf.clone(), input.clone())) else {
                continue;
            };
            let Some((out, qg2)) = sg.table.get(&(qg.clone(), mid.clone())) else {
                continue;
            };
            def.transitions.push(Transition {
                from: joined(&qf, &qg),
                to: joined(qf2, qg2),
                input: Some(Symbol::new(sf.in_port.name.clone(), input.clone())),
                output: Some(Symbol::new(sg.out_port.name.clone(), out.clone())),
            });
            if seen.insert((qf2.clone(), qg2.clone())) {
                queue.push_back((qf2.clone(), qg2.clone()));
            }
        }
    }
    for (qf, qg) in &seen {
        def.states.insert(joined(qf, qg));
    }
    def.initial = Some(joined(f.initial(), g.initial()));
    Ok(validate_system(def)?)
}

/// Parallel composition: componentwise stepping over pair characters
/// `cf__cg` on paired ports.
pub fn compose_parallel(
    f: &ValidatedSystem,
    g: &ValidatedSystem,
) -> Result<ValidatedSystem, CompositionError> {
    let sf = as_simple(f)?;
    let sg = as_simple(g)?;

    let pair_char =
        |a: &Character, b: &Character| Character::new(format!("{}__{}", a.as_str(), b.as_str()));
    let joined = |qf: &StateId, qg: &StateId| StateId::new(format!("{qf}__{qg}"));

    let in_alphabet: Vec<(Character, Character)> = sf
        .in_port
        .alphabet
        .iter()
        .flat_map(|a| sg.in_port.alphabet.iter().map(move |b| (a.clone(), b.clone())))
        .collect();
    let in_port = format!("{}__{}", sf.in_port.name, sg.in_port.name);
    let out_port = format!("{}__{}", sf.out_port.name, sg.out_port.name);

    let mut def = SystemDef::new(format!("{}_par_{}", f.name(), g.name()))
        .input_port(
            &in_port,
            in_alphabet.iter().map(|(a, b)| pair_char(a, b)),
        )
        .output_port(
            &out_port,
            sf.out_port
                .alphabet
                .iter()
                .flat_map(|a| sg.out_port.alphabet.iter().map(move |b| pair_char(a, b))),
        );

    let start = (f.initial().clone(), g.initial().clone());
    let mut seen = BTreeSet::new();
    seen.insert(start.clone());
    let mut queue = VecDeque::new();
    queue.push_back(start);
    while let Some((qf, qg)) = queue.pop_front() {
        def.states.insert(joined(&qf, &qg));
        for (a, b) in &in_alphabet {
            let Some((of, qf2)) = sf.table.get(&(qf.clone(), a.clone())) else {
                continue;
            };
            let Some((og, qg2)) = sg.table.get(&(qg.clone(), b.clone())) else {
                continue;
            };
            def.transitions.push(Transition {
                from: joined(&qf, &qg),
                to: joined(qf2, qg2),
                input: Some(Symbol::new(in_port.clone(), pair_char(a, b))),
                output: Some(Symbol::new(out_port.clone(), pair_char(of, og))),
            });
            if seen.insert((qf2.clone(), qg2.clone())) {
                queue.push_back((qf2.clone(), qg2.clone()));
            }
        }
    }
    def.initial = Some(joined(f.initial(), g.initial()));
    Ok(validate_system(def)?)
}

fn check_feedback(view: &SimpleView<'_>) -> Result<(), CompositionError> {
    for ch in &view.out_port.alphabet {
        if !view.in_port.alphabet.contains(ch) {
            return Err(CompositionError::FeedbackAlphabetMismatch {
                character: ch.clone(),
            });
        }
    }
    Ok(())
}

/// Loop composition: applies `f` exactly `n` times within one composed
/// step, feeding each output back as the next input.
pub fn compose_loop(f: &ValidatedSystem, n: usize) -> Result<ValidatedSystem, CompositionError> {
    let sf = as_simple(f)?;
    check_feedback(&sf)?;
    let mut def = SystemDef::new(format!("{}_loop{}", f.name(), n))
        .input_port(&sf.in_port.name.clone(), sf.in_port.alphabet.clone())
        .output_port(&sf.out_port.name.clone(), sf.out_port.alphabet.clone());
    def.states = f.states().clone();
    def.initial = Some(f.initial().clone());

    for state in f.states() {
        'input: for input in &sf.in_port.alphabet {
            let mut at = state.clone();
            let mut current = input.clone();
            let mut out = None;
            for _ in 0..n {
                match sf.table.get(&(at.clone(), current.clone())) {
                    Some((o, q)) => {
                        out = Some(o.clone());
                        at = q.clone();
                        current = o.clone();
                    }
                    None => continue 'input,
                }
            }
            if let Some(out) = out {
                def.transitions.push(Transition {
                    from: state.clone(),
                    to: at,
                    input: Some(Symbol::new(sf.in_port.name.clone(), input.clone())),
                    output: Some(Symbol::new(sf.out_port.name.clone(), out)),
                });
            }
        }
    }
    Ok(validate_system(def)?)
}

pub const DEFAULT_WHILE_CAP: usize = 10_000;

/// While composition: applies `f` repeatedly, feeding each output back as
/// the next input, until the continue predicate rejects the output; that
/// output is the result of the composed step. The iteration cap keeps the
/// construction total.
pub fn compose_while(
    f: &ValidatedSystem,
    keep_going: impl Fn(&Character) -> bool,
    cap: Option<usize>,
) -> Result<ValidatedSystem, CompositionError> {
    let sf = as_simple(f)?;
    check_feedback(&sf)?;
    let cap = cap.unwrap_or(DEFAULT_WHILE_CAP);

    let mut def = SystemDef::new(format!("{}_while", f.name()))
        .input_port(&sf.in_port.name.clone(), sf.in_port.alphabet.clone())
        .output_port(&sf.out_port.name.clone(), sf.out_port.alphabet.clone());
    def.states = f.states().clone();
    def.initial = Some(f.initial().clone());

    for state in f.states() {
        'input: for input in &sf.in_port.alphabet {
            let mut at = state.clone();
            let mut current = input.clone();
            let mut result = None;
            for iteration in 0.. {
                if iteration >= cap {
                    return Err(CompositionError::IterationCapExceeded {
                        cap,
                        state: state.clone(),
                        input: input.clone(),
                    });
                }
                match sf.table.get(&(at.clone(), current.clone())) {
                    Some((o, q)) => {
                        at = q.clone();
                        current = o.clone();
                        if !keep_going(o) {
                            result = Some(o.clone());
                            break;
                        }
                    }
                    None => continue 'input,
                }
            }
            if let Some(out) = result {
                def.transitions.push(Transition {
                    from: state.clone(),
                    to: at,
                    input: Some(Symbol::new(sf.in_port.name.clone(), input.clone())),
                    output: Some(Symbol::new(sf.out_port.name.clone(), out)),
                });
            }
        }
    }
    Ok(validate_system(def)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::fixtures::{controller, echo, train};
    use crate::system::sym;

    fn st(s: &str) -> StateId {
        StateId::new(s)
    }

    /// A saturating increment on c0..c10: ck -> ck+1, undefined at c10.
    fn increment(name: &str) -> ValidatedSystem {
        let alphabet: Vec<String> = (0..=10).map(|n| format!("c{n}")).collect();
        let mut def = SystemDef::new(name)
            .states(["s"])
            .initial("s")
            .input_port("num", alphabet.iter().map(String::as_str))
            .output_port("num_out", alphabet.iter().map(String::as_str));
        for n in 0..10 {
            def = def.transition(
                "s",
                "s",
                sym("num", &format!("c{n}")),
                sym("num_out", &format!("c{}", n + 1)),
            );
        }
        validate_system(def).unwrap()
    }

    use crate::system::fixtures::bridge_channels;

    fn bridge_product() -> ProductSystem {
        product(
            vec![train("t1"), train("t2"), controller()],
            bridge_channels(),
        )
        .unwrap()
    }

    #[test]
    fn channel_between_train_and_controller_is_accepted() {
        let t1 = train("t1");
        let ctrl = controller();
        let channel = make_channel(
            &[&t1, &ctrl],
            &[],
            Endpoint::new("t1", "pos"),
            Endpoint::new("ctrl", "in1"),
        )
        .unwrap();
        assert_eq!(channel.to.port, "in1");
    }

    #[test]
    fn coupling_a_port_twice_is_rejected() {
        let t1 = train("t1");
        let ctrl = controller();
        let first = make_channel(
            &[&t1, &ctrl],
            &[],
            Endpoint::new("t1", "pos"),
            Endpoint::new("ctrl", "in1"),
        )
        .unwrap();
        let err = make_channel(
            &[&t1, &ctrl],
            &[first],
            Endpoint::new("t1", "pos"),
            Endpoint::new("ctrl", "in2"),
        )
        .unwrap_err();
        assert!(matches!(err, CompositionError::PortAlreadyCoupled(_)));
    }

    #[test]
    fn unreceivable_characters_are_an_alphabet_mismatch() {
        let wide = validate_system(
            SystemDef::new("wide")
                .states(["s"])
                .initial("s")
                .output_port("o", ["a", "b"])
                .input_port("i", ["a"]),
        )
        .unwrap();
        let narrow = validate_system(
            SystemDef::new("narrow")
                .states(["s"])
                .initial("s")
                .input_port("i", ["a"])
                .output_port("o", ["a"]),
        )
        .unwrap();
        let err = make_channel(
            &[&wide, &narrow],
            &[],
            Endpoint::new("wide", "o"),
            Endpoint::new("narrow", "i"),
        )
        .unwrap_err();
        assert!(matches!(err, CompositionError::AlphabetMismatch { .. }));
    }

    #[test]
    fn self_coupling_is_rejected() {
        let echo = echo();
        let err = make_channel(
            &[&echo],
            &[],
            Endpoint::new("echo", "b"),
            Endpoint::new("echo", "a"),
        )
        .unwrap_err();
        assert!(matches!(err, CompositionError::SelfCoupling(_)));
    }

    #[test]
    fn bridge_product_is_built_and_respects_mode_bounds() {
        let p = bridge_product();
        assert!(!p.states().is_empty());
        // Projecting the controller onto idle/granting/busy keeps the
        // product inside the 3 x 3 x 3 mode-tuple space.
        let ctrl_mode = |s: &StateId| match s.as_str() {
            "free" => "idle",
            "g1" | "g2" | "g1w2" | "g2w1" => "granting",
            _ => "busy",
        };
        let modes: BTreeSet<(String, String, &str)> = p
            .states()
            .iter()
            .map(|tuple| {
                (
                    tuple[0].to_string(),
                    tuple[1].to_string(),
                    ctrl_mode(&tuple[2]),
                )
            })
            .collect();
        assert!(modes.len() <= 27, "mode tuples: {}", modes.len());
        assert!(p.report().senders_without_receiver.is_empty());
        assert!(p.report().unfireable.is_empty());
    }

    #[test]
    fn single_component_product_is_isomorphic_to_the_component() {
        let t1 = train("t1");
        let p = product(vec![t1.clone()], vec![]).unwrap();
        assert_eq!(p.states().len(), t1.reachable_states().len());
        assert_eq!(p.transitions().len(), t1.transitions().len());
    }

    #[test]
    fn uncoupled_components_interleave_freely() {
        let a = train("t1");
        let b = train("t2");
        let p = product(vec![a, b], vec![]).unwrap();
        assert_eq!(p.states().len(), 9); // 3 x 3 reachable tuples
    }

    #[test]
    fn sender_without_receiver_is_flagged_and_dropped() {
        let ctrl = controller();
        let mut def = train("t1").definition().clone();
        def.transitions.retain(|t| t.input.is_none() || t.from != st("wait"));
        let crippled = validate_system(def).unwrap();
        let p = product(
            vec![crippled, train("t2"), ctrl],
            bridge_channels(),
        )
        .unwrap();
        assert!(p
            .report()
            .senders_without_receiver
            .iter()
            .any(|(system, t, _)| system == "ctrl"
                && t.output.as_ref().map(|o| o.port.as_str()) == Some("out1")));
    }

    #[test]
    fn sequential_composition_of_increments_adds_two() {
        let f = increment("inc1");
        let g = increment("inc2");
        let composed = compose_sequential(&f, &g).unwrap();
        // Oracle: compose the tables directly.
        for n in 0..9 {
            let hits = composed.step(composed.initial(), &sym("num", &format!("c{n}")));
            assert_eq!(hits.len(), 1);
            let (out, _) = hits.into_iter().next().unwrap();
            assert_eq!(out.unwrap().character.as_str(), format!("c{}", n + 2));
        }
        // c9 -> c10 -> undefined in g: composed is undefined there.
        assert!(composed
            .step(composed.initial(), &sym("num", "c9"))
            .is_empty());
    }

    #[test]
    fn identity_is_a_sequential_unit() {
        let f = increment("inc");
        let id = {
            let alphabet: Vec<String> = (0..=10).map(|n| format!("c{n}")).collect();
            let mut def = SystemDef::new("id")
                .states(["s"])
                .initial("s")
                .input_port("num", alphabet.iter().map(String::as_str))
                .output_port("num_out", alphabet.iter().map(String::as_str));
            for n in 0..=10 {
                def = def.transition(
                    "s",
                    "s",
                    sym("num", &format!("c{n}")),
                    sym("num_out", &format!("c{n}")),
                );
            }
            validate_system(def).unwrap()
        };
        let composed = compose_sequential(&f, &id).unwrap();
        for n in 0..10 {
            let direct = f.step(f.initial(), &sym("num", &format!("c{n}")));
            let viaid = composed.step(composed.initial(), &sym("num", &format!("c{n}")));
            let out = |set: BTreeSet<(Option<Symbol>, StateId)>| {
                set.into_iter()
                    .map(|(o, _)| o.unwrap().character)
                    .collect::<Vec<_>>()
            };
            assert_eq!(out(direct), out(viaid));
        }
    }

    #[test]
    fn nondeterministic_operand_is_not_simple() {
        let nd = validate_system(
            SystemDef::new("nd")
                .states(["s", "a", "b"])
                .initial("s")
                .input_port("i", ["x"])
                .output_port("o", ["y"])
                .transition("s", "a", sym("i", "x"), sym("o", "y"))
                .transition("s", "b", sym("i", "x"), sym("o", "y")),
        )
        .unwrap();
        let f = increment("inc");
        assert!(matches!(
            compose_sequential(&f, &nd),
            Err(CompositionError::NotSimple { .. })
        ));
    }

    #[test]
    fn parallel_of_identities_is_identity_on_pairs() {
        let mk_id = |name: &str| {
            validate_system(
                SystemDef::new(name)
                    .states(["s"])
                    .initial("s")
                    .input_port("i", ["x", "y"])
                    .output_port("o", ["x", "y"])
                    .transition("s", "s", sym("i", "x"), sym("o", "x"))
                    .transition("s", "s", sym("i", "y"), sym("o", "y")),
            )
            .unwrap()
        };
        let p = compose_parallel(&mk_id("a"), &mk_id("b")).unwrap();
        for pair in ["x__x", "x__y", "y__x", "y__y"] {
            let hits = p.step(p.initial(), &sym("i__i", pair));
            assert_eq!(hits.len(), 1);
            let (out, _) = hits.into_iter().next().unwrap();
            assert_eq!(out.unwrap().character.as_str(), pair);
        }
    }

    #[test]
    fn parallel_with_stateless_partner_keeps_the_state_count() {
        let id = validate_system(
            SystemDef::new("id")
                .states(["s"])
                .initial("s")
                .input_port("i", ["x"])
                .output_port("o", ["x"])
                .transition("s", "s", sym("i", "x"), sym("o", "x")),
        )
        .unwrap();
        // The tank has two input ports, so pair it down to one first.
        let fill_only = validate_system(
            SystemDef::new("filler")
                .states(["empty_0", "filled_1", "full_2"])
                .initial("empty_0")
                .input_port("fill", ["dx"])
                .output_port("level", ["l0", "l1", "l2"])
                .transition("empty_0", "filled_1", sym("fill", "dx"), sym("level", "l1"))
                .transition("filled_1", "full_2", sym("fill", "dx"), sym("level", "l2")),
        )
        .unwrap();
        let p = compose_parallel(&fill_only, &id).unwrap();
        assert_eq!(p.reachable_states().len(), fill_only.reachable_states().len());
        // Componentwise oracle.
        let hits = p.step(&st("empty_0__s"), &sym("fill__i", "dx__x"));
        assert_eq!(hits.len(), 1);
        let (out, to) = hits.into_iter().next().unwrap();
        assert_eq!(out.unwrap().character.as_str(), "l1__x");
        assert_eq!(to, st("filled_1__s"));
    }

    #[test]
    fn loop_three_increments() {
        let f = increment("inc");
        let looped = compose_loop(&f, 3).unwrap();
        let hits = looped.step(looped.initial(), &sym("num", "c2"));
        assert_eq!(hits.len(), 1);
        let (out, _) = hits.into_iter().next().unwrap();
        assert_eq!(out.unwrap().character.as_str(), "c5");
    }

    #[test]
    fn loop_once_is_the_operation_itself() {
        let f = increment("inc");
        let once = compose_loop(&f, 1).unwrap();
        for n in 0..10 {
            let input = sym("num", &format!("c{n}"));
            let direct: BTreeSet<_> = f
                .step(f.initial(), &input)
                .into_iter()
                .map(|(o, _)| o.unwrap().character)
                .collect();
            let looped: BTreeSet<_> = once
                .step(once.initial(), &input)
                .into_iter()
                .map(|(o, _)| o.unwrap().character)
                .collect();
            assert_eq!(direct, looped);
        }
    }

    #[test]
    fn while_increments_until_ten() {
        let f = increment("inc");
        let w = compose_while(&f, |c| crate::predicate::trailing_int(c.as_str()).unwrap() < 10, None)
            .unwrap();
        let hits = w.step(w.initial(), &sym("num", "c7"));
        assert_eq!(hits.len(), 1);
        let (out, _) = hits.into_iter().next().unwrap();
        assert_eq!(out.unwrap().character.as_str(), "c10");
    }

    #[test]
    fn while_that_never_stops_hits_the_cap() {
        let spin = validate_system(
            SystemDef::new("spin")
                .states(["s"])
                .initial("s")
                .input_port("i", ["a"])
                .output_port("o", ["a"])
                .transition("s", "s", sym("i", "a"), sym("o", "a")),
        )
        .unwrap();
        let err = compose_while(&spin, |_| true, Some(16)).unwrap_err();
        assert!(matches!(err, CompositionError::IterationCapExceeded { .. }));
    }

    #[test]
    fn sequential_composition_is_associative_on_tables() {
        let f = increment("f");
        let g = increment("g");
        let h = increment("h");
        let left = compose_sequential(&compose_sequential(&f, &g).unwrap(), &h).unwrap();
        let right = compose_sequential(&f, &compose_sequential(&g, &h).unwrap()).unwrap();
        for n in 0..=10 {
            let input = sym("num", &format!("c{n}"));
            let outs = |sys: &ValidatedSystem| {
                sys.step(sys.initial(), &input)
                    .into_iter()
                    .map(|(o, _)| o.unwrap().character)
                    .collect::<BTreeSet<_>>()
            };
            assert_eq!(outs(&left), outs(&right));
        }
    }

    #[test]
    fn total_coupling_of_deterministic_simple_systems_is_deterministic() {
        let f = increment("f");
        let g = increment("g");
        let p = product(
            vec![f, g],
            vec![Channel {
                from: Endpoint::new("f", "num_out"),
                to: Endpoint::new("g", "num"),
            }],
        )
        .unwrap();
        let flat = p.flatten("super").unwrap();
        assert!(flat.is_deterministic());
        // The coupled channel vanished: only f's input and g's output remain.
        assert_eq!(flat.input_ports().len(), 1);
        assert_eq!(flat.output_ports().len(), 1);
    }
}
