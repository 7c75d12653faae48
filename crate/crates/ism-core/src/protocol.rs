//! Protocols: channel-coupled roles with acceptance, and their verification.
//!
//! A protocol is a set of roles (systems with a non-empty acceptance
//! component) coupled by channels, analyzed on the reachable product graph.
//! Verification covers well-formedness (no open channels, every deliverable
//! character processed), consistency (freedom from deadlock, livelock and
//! starvation relative to the acceptance condition), and user-supplied
//! safety predicates. Every finding carries a witness trace that replays
//! through the simulator.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::composition::{product, Channel, CompositionError, ProductMove, ProductSystem};
use crate::predicate::{Pred, PredicateError};
use crate::semantics::meaning;
use crate::system::{Character, StateId, Symbol, ValidatedSystem, TICK_PORT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("role `{0}` has no accepting state")]
    RoleWithoutAcceptance(String),
    #[error("duplicate role name `{0}`")]
    DuplicateRole(String),
    #[error("a protocol needs at least one role")]
    NoRoles,
    #[error("models disagree on port `{port}`: {problem}")]
    AlphabetMismatch { port: String, problem: String },
    #[error(transparent)]
    Composition(#[from] CompositionError),
}

/// Roles coupled by channels, with the reachable product built eagerly so
/// all analyses share one graph.
#[derive(Debug, Clone)]
pub struct Protocol {
    product: ProductSystem,
}

impl Protocol {
    pub fn new(roles: Vec<ValidatedSystem>, channels: Vec<Channel>) -> Result<Self, ProtocolError> {
        if roles.is_empty() {
            return Err(ProtocolError::NoRoles);
        }
        let mut names = BTreeSet::new();
        for role in &roles {
            if !role.is_role() {
                return Err(ProtocolError::RoleWithoutAcceptance(role.name().to_string()));
            }
            if !names.insert(role.name().to_string()) {
                return Err(ProtocolError::DuplicateRole(role.name().to_string()));
            }
        }
        let product = product(roles, channels)?;
        Ok(Protocol { product })
    }

    pub fn roles(&self) -> &[ValidatedSystem] {
        self.product.components()
    }

    pub fn channels(&self) -> &[Channel] {
        self.product.channels()
    }

    pub fn product(&self) -> &ProductSystem {
        &self.product
    }

    /// Product states whose every component state is accepting in its role.
    pub fn accepting_states(&self) -> BTreeSet<usize> {
        (0..self.product.states().len())
            .filter(|&ix| self.product.is_accepting(ix))
            .collect()
    }
}

/// A replayable path through the product: transition indices from the
/// initial state.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub steps: Vec<usize>,
}

impl Trace {
    pub fn end_state(&self, product: &ProductSystem) -> usize {
        self.steps
            .last()
            .map(|&ix| product.transitions()[ix].to)
            .unwrap_or(product.initial())
    }

    /// One line per step, `stateTuple | role:transition | channel:char`,
    /// closed by a final line for the end state with empty move fields.
    pub fn render(&self, product: &ProductSystem) -> String {
        let mut out = String::new();
        for &ix in &self.steps {
            let t = &product.transitions()[ix];
            let (moves, channel) = product.render_move(&t.mv);
            out.push_str(&format!(
                "{} | {} | {}\n",
                product.render_state(t.from),
                moves,
                channel
            ));
        }
        out.push_str(&format!(
            "{} | - | -\n",
            product.render_state(self.end_state(product))
        ));
        out
    }
}

/// Shortest-path parents over the product graph, for witness extraction.
fn bfs_parents(product: &ProductSystem) -> Vec<Option<(usize, usize)>> {
    let mut parents: Vec<Option<(usize, usize)>> = vec![None; product.states().len()];
    let mut seen = vec![false; product.states().len()];
    let mut queue = VecDeque::new();
    seen[product.initial()] = true;
    queue.push_back(product.initial());
    while let Some(state) = queue.pop_front() {
        for &tix in product.outgoing(state) {
            let to = product.transitions()[tix].to;
            if !seen[to] {
                seen[to] = true;
                parents[to] = Some((state, tix));
                queue.push_back(to);
            }
        }
    }
    parents
}

fn trace_to(parents: &[Option<(usize, usize)>], mut state: usize) -> Trace {
    let mut steps = Vec::new();
    while let Some((prev, tix)) = parents[state] {
        steps.push(tix);
        state = prev;
    }
    steps.reverse();
    Trace { steps }
}

/// An output port that emits a reachable character without being coupled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenChannelFinding {
    pub role: String,
    pub port: String,
    pub character: Character,
    pub state: usize,
    pub trace: Trace,
}

/// A family of reachable product states in which a role can deliver a
/// character whose meaning at the receiver is empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnprocessedFinding {
    pub channel: Channel,
    pub character: Character,
    pub sender: String,
    pub receiver: String,
    pub receiver_state: StateId,
    pub states: Vec<usize>,
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WellFormedReport {
    pub open_channels: Vec<OpenChannelFinding>,
    pub unprocessed: Vec<UnprocessedFinding>,
}

impl WellFormedReport {
    pub fn well_formed(&self) -> bool {
        self.open_channels.is_empty() && self.unprocessed.is_empty()
    }
}

/// Checks the two well-formedness conditions over the reachable product:
/// every emitting output port is coupled, and the meaning of every
/// deliverable character at its receiver state is non-empty.
pub fn check_well_formed(protocol: &Protocol) -> WellFormedReport {
    let product = protocol.product();
    let roles = protocol.roles();
    let parents = bfs_parents(product);

    let coupled_out: BTreeSet<(&str, &str)> = protocol
        .channels()
        .iter()
        .map(|c| (c.from.system.as_str(), c.from.port.as_str()))
        .collect();
    let coupled_in: BTreeSet<(&str, &str)> = protocol
        .channels()
        .iter()
        .map(|c| (c.to.system.as_str(), c.to.port.as_str()))
        .collect();

    // Open channels: every emission that actually occurs on the reachable
    // product comes from a product transition, so scan those directly.
    let mut open_channels = Vec::new();
    let mut seen_open: BTreeSet<(usize, String)> = BTreeSet::new();
    for pt in product.transitions() {
        let moved: Vec<(usize, usize)> = match &pt.mv {
            ProductMove::Free {
                component,
                transition,
            } => vec![(*component, *transition)],
            ProductMove::Sync {
                sender,
                sender_transition,
                receiver,
                receiver_transition,
                ..
            } => vec![(*sender, *sender_transition), (*receiver, *receiver_transition)],
        };
        for (rix, tix) in moved {
            let role = &roles[rix];
            let Some(out) = &role.transitions()[tix].output else {
                continue;
            };
            if !coupled_out.contains(&(role.name(), out.port.as_str()))
                && seen_open.insert((rix, out.port.clone()))
            {
                open_channels.push(OpenChannelFinding {
                    role: role.name().to_string(),
                    port: out.port.clone(),
                    character: out.character.clone(),
                    state: pt.from,
                    trace: trace_to(&parents, pt.from),
                });
            }
        }
    }

    // Processed check: wherever a role can deliver a character over a
    // channel, the receiver's meaning for it must be non-empty.
    let mut unprocessed: BTreeMap<(usize, Character, StateId), UnprocessedFinding> =
        BTreeMap::new();
    for (six, tuple) in product.states().iter().enumerate() {
        for (rix, role) in roles.iter().enumerate() {
            for &tix in role.outgoing(&tuple[rix]) {
                let t = &role.transitions()[tix];
                let Some(out) = &t.output else { continue };
                // Sends happen on transitions that are otherwise free: a
                // transition also consuming on a coupled port never fires
                // as a sender.
                if let Some(input) = &t.input {
                    if coupled_in.contains(&(role.name(), input.port.as_str())) {
                        continue;
                    }
                }
                if !coupled_out.contains(&(role.name(), out.port.as_str())) {
                    continue;
                }
                let (chix, channel) = protocol
                    .channels()
                    .iter()
                    .enumerate()
                    .find(|(_, c)| c.from.system == role.name() && c.from.port == out.port)
                    .expect("coupled port has its channel");
                let receiver_ix = product
                    .component_index(&channel.to.system)
                    .expect("channel endpoints are roles");
                let receiver = &roles[receiver_ix];
                let receiver_state = &tuple[receiver_ix];
                let delivered = Symbol::new(channel.to.port.clone(), out.character.clone());
                if meaning(receiver, receiver_state, &Some(delivered)).is_empty() {
                    let key = (chix, out.character.clone(), receiver_state.clone());
                    let entry = unprocessed
                        .entry(key)
                        .or_insert_with(|| UnprocessedFinding {
                            channel: channel.clone(),
                            character: out.character.clone(),
                            sender: role.name().to_string(),
                            receiver: receiver.name().to_string(),
                            receiver_state: receiver_state.clone(),
                            states: Vec::new(),
                            trace: trace_to(&parents, six),
                        });
                    entry.states.push(six);
                    let candidate = trace_to(&parents, six);
                    if candidate.steps.len() < entry.trace.steps.len() {
                        entry.trace = candidate;
                    }
                }
            }
        }
    }

    WellFormedReport {
        open_channels,
        unprocessed: unprocessed.into_values().collect(),
    }
}

/// Availability of environment inputs during consistency analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnvMode {
    /// The environment always supplies inputs on uncoupled ports.
    #[default]
    Angelic,
    /// The environment may withhold inputs: steps that need one count as
    /// blocked.
    Demonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConsistencyOptions {
    pub env: EnvMode,
    /// Exclude starvation cycles a strongly fair scheduler would exit.
    pub fair: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadlockFinding {
    pub state: usize,
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LivelockFinding {
    /// The condemned strongly connected component.
    pub component: Vec<usize>,
    pub cycle: Vec<usize>,
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StarvationFinding {
    pub role: String,
    pub component: Vec<usize>,
    pub cycle: Vec<usize>,
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConsistencyReport {
    pub deadlocks: Vec<DeadlockFinding>,
    pub livelocks: Vec<LivelockFinding>,
    pub starvation: Vec<StarvationFinding>,
}

impl ConsistencyReport {
    pub fn consistent(&self) -> bool {
        self.deadlocks.is_empty() && self.livelocks.is_empty() && self.starvation.is_empty()
    }
}

/// Checks the protocol acceptance condition over every reachable product
/// state: no deadlocks (non-accepting states without progress), no
/// livelocks (cycles from which no accepting state is reachable), and no
/// starvation (accepting-free cycles that park some role in a
/// non-accepting state of its own while the others move on).
pub fn check_consistency(protocol: &Protocol, options: ConsistencyOptions) -> ConsistencyReport {
    let product = protocol.product();
    let n = product.states().len();
    let parents = bfs_parents(product);

    let env_move = |tix: usize| product.env_input(&product.transitions()[tix].mv).is_some();
    let tick_self_loop = |tix: usize| {
        let t = &product.transitions()[tix];
        t.from == t.to
            && product
                .env_input(&t.mv)
                .map(|(_, sym)| sym.port == TICK_PORT)
                .unwrap_or(false)
    };
    let usable = |tix: usize| match options.env {
        EnvMode::Angelic => true,
        EnvMode::Demonic => !env_move(tix),
    };

    // Deadlocks: non-accepting states with no usable progress. Under the
    // angelic environment a state whose only moves are tick self-loops has
    // no progress either.
    let mut deadlocks = Vec::new();
    for state in 0..n {
        if product.is_accepting(state) {
            continue;
        }
        let blocked = product
            .outgoing(state)
            .iter()
            .all(|&tix| !usable(tix) || tick_self_loop(tix));
        if blocked {
            deadlocks.push(DeadlockFinding {
                state,
                trace: trace_to(&parents, state),
            });
        }
    }

    // Livelocks: strongly connected components of the doomed region, the
    // states from which no accepting state is reachable.
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    for state in 0..n {
        for &tix in product.outgoing(state) {
            if usable(tix) {
                reverse[product.transitions()[tix].to].push(state);
            }
        }
    }
    let mut can_accept = vec![false; n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for state in 0..n {
        if product.is_accepting(state) {
            can_accept[state] = true;
            queue.push_back(state);
        }
    }
    while let Some(state) = queue.pop_front() {
        for &prev in &reverse[state] {
            if !can_accept[prev] {
                can_accept[prev] = true;
                queue.push_back(prev);
            }
        }
    }

    let doomed_edges: Vec<Vec<usize>> = (0..n)
        .map(|state| {
            if can_accept[state] {
                return Vec::new();
            }
            product
                .outgoing(state)
                .iter()
                .copied()
                .filter(|&tix| usable(tix) && !can_accept[product.transitions()[tix].to])
                .collect()
        })
        .collect();
    let mut livelocks = Vec::new();
    for component in nontrivial_sccs(n, &doomed_edges, product) {
        let cycle = witness_cycle(&component, &doomed_edges, product);
        let entry = component[0];
        livelocks.push(LivelockFinding {
            component,
            cycle,
            trace: trace_to(&parents, entry),
        });
    }

    // Starvation: per role, cycles through non-accepting product states on
    // which the role neither moves nor rests in one of its own accepting
    // states.
    let mut starvation = Vec::new();
    for (rix, role) in protocol.roles().iter().enumerate() {
        let starved_edges: Vec<Vec<usize>> = (0..n)
            .map(|state| {
                if product.is_accepting(state)
                    || role.accepting().contains(&product.states()[state][rix])
                {
                    return Vec::new();
                }
                product
                    .outgoing(state)
                    .iter()
                    .copied()
                    .filter(|&tix| {
                        let t = &product.transitions()[tix];
                        usable(tix)
                            && product.stutters(&t.mv, rix)
                            && !product.is_accepting(t.to)
                    })
                    .collect()
            })
            .collect();
        for component in nontrivial_sccs(n, &starved_edges, product) {
            if options.fair && has_escape(&component, product, &usable) {
                continue;
            }
            let cycle = witness_cycle(&component, &starved_edges, product);
            let entry = component[0];
            starvation.push(StarvationFinding {
                role: role.name().to_string(),
                component,
                cycle,
                trace: trace_to(&parents, entry),
            });
        }
    }

    ConsistencyReport {
        deadlocks,
        livelocks,
        starvation,
    }
}

/// Iterative Tarjan over the given edge lists; returns components that
/// contain a cycle (two or more states, or a single state with a self-loop).
fn nontrivial_sccs(n: usize, edges: &[Vec<usize>], product: &ProductSystem) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut components = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        // Explicit DFS stack: (state, next edge position).
        let mut dfs: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(&mut (v, ref mut pos)) = dfs.last_mut() {
            if *pos == 0 {
                index[v] = next_index;
                low[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if let Some(&tix) = edges[v].get(*pos) {
                *pos += 1;
                let w = product.transitions()[tix].to;
                if index[w] == UNVISITED {
                    dfs.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                dfs.pop();
                if let Some(&mut (parent, _)) = dfs.last_mut() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut component = Vec::new();
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        component.push(w);
                        if w == v {
                            break;
                        }
                    }
                    component.sort_unstable();
                    let cyclic = component.len() > 1
                        || edges[v]
                            .iter()
                            .any(|&tix| product.transitions()[tix].to == v);
                    if cyclic {
                        components.push(component);
                    }
                }
            }
        }
    }
    components.sort();
    components
}

/// A cycle inside the component, as transition indices.
fn witness_cycle(component: &[usize], edges: &[Vec<usize>], product: &ProductSystem) -> Vec<usize> {
    let inside: BTreeSet<usize> = component.iter().copied().collect();
    let start = component[0];
    // Shortest path from start back to start through component edges.
    let mut parent: BTreeMap<usize, usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    queue.push_back(start);
    let mut seen = BTreeSet::new();
    seen.insert(start);
    while let Some(state) = queue.pop_front() {
        for &tix in &edges[state] {
            let to = product.transitions()[tix].to;
            if to == start {
                let mut cycle = vec![tix];
                let mut at = state;
                while at != start {
                    let ptix = parent[&at];
                    cycle.push(ptix);
                    at = product.transitions()[ptix].from;
                }
                cycle.reverse();
                return cycle;
            }
            if inside.contains(&to) && seen.insert(to) {
                parent.insert(to, tix);
                queue.push_back(to);
            }
        }
    }
    unreachable!("strongly connected component always closes a cycle");
}

fn has_escape(
    component: &[usize],
    product: &ProductSystem,
    usable: &impl Fn(usize) -> bool,
) -> bool {
    let inside: BTreeSet<usize> = component.iter().copied().collect();
    component.iter().any(|&state| {
        product
            .outgoing(state)
            .iter()
            .any(|&tix| usable(tix) && !inside.contains(&product.transitions()[tix].to))
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetyReport {
    pub holds: bool,
    pub counterexample: Option<Trace>,
}

/// Evaluates the predicate on every reachable product state; on violation
/// returns the shortest reaching trace.
pub fn verify_safety(
    protocol: &Protocol,
    predicate: &Pred,
) -> Result<SafetyReport, PredicateError> {
    let product = protocol.product();
    let parents = bfs_parents(product);
    for (six, tuple) in product.states().iter().enumerate() {
        let assignment: BTreeMap<String, StateId> = protocol
            .roles()
            .iter()
            .zip(tuple)
            .map(|(role, state)| (role.name().to_string(), state.clone()))
            .collect();
        if !predicate.eval_product(&assignment)? {
            return Ok(SafetyReport {
                holds: false,
                counterexample: Some(trace_to(&parents, six)),
            });
        }
    }
    Ok(SafetyReport {
        holds: true,
        counterexample: None,
    })
}

/// How the simulator resolves nondeterminism.
#[derive(Debug, Clone)]
pub enum Choice {
    /// Uniform choice among enabled transitions, seeded for replay.
    Seed(u64),
    /// A scripted list of product transition indices.
    Script(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stop {
    /// Ran the requested number of steps.
    Completed,
    /// No transition was enabled; cross-check against deadlock findings.
    NoEnabledTransition,
    /// The script ended before the step budget.
    ScriptEnd,
    /// The scripted transition is not enabled at the current state.
    ScriptMismatch { wanted: usize, state: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimTrace {
    pub trace: Trace,
    pub end_state: usize,
    pub stop: Stop,
}

/// Executes the product step by step. Environment inputs are treated as
/// available; a fixed seed or script makes the run deterministic.
pub fn simulate(protocol: &Protocol, steps: usize, choice: Choice) -> SimTrace {
    let product = protocol.product();
    let mut rng = match &choice {
        Choice::Seed(seed) => Some(ChaCha8Rng::seed_from_u64(*seed)),
        Choice::Script(_) => None,
    };
    let mut script = match choice {
        Choice::Script(steps) => Some(steps.into_iter()),
        Choice::Seed(_) => None,
    };

    let mut state = product.initial();
    let mut trace = Trace::default();
    let mut stop = Stop::Completed;
    for _ in 0..steps {
        let enabled = product.outgoing(state);
        if enabled.is_empty() {
            stop = Stop::NoEnabledTransition;
            break;
        }
        let tix = match (&mut rng, &mut script) {
            (Some(rng), _) => enabled[rng.gen_range(0..enabled.len())],
            (_, Some(script)) => match script.next() {
                Some(tix) => {
                    if !enabled.contains(&tix) {
                        stop = Stop::ScriptMismatch { wanted: tix, state };
                        break;
                    }
                    tix
                }
                None => {
                    stop = Stop::ScriptEnd;
                    break;
                }
            },
            _ => unreachable!(),
        };
        trace.steps.push(tix);
        state = product.transitions()[tix].to;
    }
    SimTrace {
        trace,
        end_state: state,
        stop,
    }
}

/// One disagreement between the sender's model of the receiver and the
/// actual receiver: a misconception or misunderstanding, depending on which
/// side is wrong.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MismatchFinding {
    pub state: StateId,
    pub symbol: Symbol,
    pub assumed: BTreeSet<(Option<Symbol>, StateId)>,
    pub actual: BTreeSet<(Option<Symbol>, StateId)>,
}

/// Compares assumed and actual meaning of every deliverable character at
/// every reachable receiver state.
pub fn mismatch_analysis(
    sender_model: &ValidatedSystem,
    actual_receiver: &ValidatedSystem,
    channel: &Channel,
) -> Result<Vec<MismatchFinding>, ProtocolError> {
    let port = &channel.to.port;
    let assumed_port =
        sender_model
            .input_port(port)
            .ok_or_else(|| ProtocolError::AlphabetMismatch {
                port: port.clone(),
                problem: format!("missing in sender model `{}`", sender_model.name()),
            })?;
    let actual_port =
        actual_receiver
            .input_port(port)
            .ok_or_else(|| ProtocolError::AlphabetMismatch {
                port: port.clone(),
                problem: format!("missing in receiver `{}`", actual_receiver.name()),
            })?;
    if assumed_port.alphabet != actual_port.alphabet {
        return Err(ProtocolError::AlphabetMismatch {
            port: port.clone(),
            problem: "alphabets differ".into(),
        });
    }
    let alphabet = actual_port.alphabet.clone();

    let mut findings = Vec::new();
    for state in actual_receiver.reachable_states() {
        for character in &alphabet {
            let symbol = Symbol::new(port.clone(), character.clone());
            let actual = meaning(actual_receiver, state, &Some(symbol.clone())).pairs;
            let assumed = if sender_model.states().contains(state) {
                meaning(sender_model, state, &Some(symbol.clone())).pairs
            } else {
                BTreeSet::new()
            };
            if assumed != actual {
                findings.push(MismatchFinding {
                    state: state.clone(),
                    symbol,
                    assumed,
                    actual,
                });
            }
        }
    }
    Ok(findings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::fixtures::{bridge_channels, controller, controller_def, train};
    use crate::system::{sym, validate_system, SystemDef};

    fn bridge() -> Protocol {
        Protocol::new(
            vec![train("t1"), train("t2"), controller()],
            bridge_channels(),
        )
        .unwrap()
    }

    fn with_controller(def: SystemDef) -> Protocol {
        Protocol::new(
            vec![train("t1"), train("t2"), validate_system(def).unwrap()],
            bridge_channels(),
        )
        .unwrap()
    }

    /// Controller that never grants once both trains wait.
    fn deadlocking_controller() -> SystemDef {
        let mut def = controller_def("ctrl");
        def.transitions.retain(|t| {
            !(t.input.is_none() && (t.from.as_str() == "g1w2" || t.from.as_str() == "g2w1"))
        });
        def
    }

    /// Controller that keeps serving but never accepts again: after the
    /// first service it returns to a non-accepting copy of its idle state.
    fn livelocked_controller() -> SystemDef {
        let mut def = controller_def("ctrl");
        def.states.insert("free2".into());
        for t in &mut def.transitions {
            if t.to.as_str() == "free" {
                t.to = "free2".into();
            }
        }
        def.transition("free2", "g1", sym("in1", "arrived"), None)
            .transition("free2", "g2", sym("in2", "arrived"), None)
    }

    /// Controller that may serve train 1 forever while train 2 waits; the
    /// grant to train 2 stays possible, so acceptance stays reachable.
    fn starving_controller() -> SystemDef {
        SystemDef::new("ctrl")
            .states(["free", "g1", "b1", "w2", "w2g1", "w2b1", "b2", "b2g1"])
            .initial("free")
            .input_port("in1", ["arrived", "left"])
            .input_port("in2", ["arrived", "left"])
            .output_port("out1", ["go"])
            .output_port("out2", ["go"])
            .accepting(["free"])
            .transition("free", "g1", sym("in1", "arrived"), None)
            .transition("g1", "b1", None, sym("out1", "go"))
            .transition("b1", "free", sym("in1", "left"), None)
            .transition("free", "w2", sym("in2", "arrived"), None)
            .transition("g1", "w2g1", sym("in2", "arrived"), None)
            .transition("b1", "w2b1", sym("in2", "arrived"), None)
            .transition("w2", "w2g1", sym("in1", "arrived"), None)
            .transition("w2g1", "w2b1", None, sym("out1", "go"))
            .transition("w2b1", "w2", sym("in1", "left"), None)
            .transition("w2", "b2", None, sym("out2", "go"))
            .transition("b2", "free", sym("in2", "left"), None)
            .transition("b2", "b2g1", sym("in1", "arrived"), None)
            .transition("b2g1", "g1", sym("in2", "left"), None)
    }

    /// One-state controller that grants unconditionally.
    fn unsafe_controller() -> SystemDef {
        SystemDef::new("ctrl")
            .states(["hub"])
            .initial("hub")
            .input_port("in1", ["arrived", "left"])
            .input_port("in2", ["arrived", "left"])
            .output_port("out1", ["go"])
            .output_port("out2", ["go"])
            .accepting(["hub"])
            .transition("hub", "hub", sym("in1", "arrived"), None)
            .transition("hub", "hub", sym("in1", "left"), None)
            .transition("hub", "hub", sym("in2", "arrived"), None)
            .transition("hub", "hub", sym("in2", "left"), None)
            .transition("hub", "hub", None, sym("out1", "go"))
            .transition("hub", "hub", None, sym("out2", "go"))
    }

    #[test]
    fn bridge_protocol_is_well_formed() {
        let report = check_well_formed(&bridge());
        assert!(report.well_formed(), "{report:?}");
    }

    #[test]
    fn deleting_left_consumers_breaks_the_processed_check() {
        let mut def = controller_def("ctrl");
        def.transitions.retain(|t| {
            t.input
                .as_ref()
                .map(|sym| sym.character.as_str() != "left")
                .unwrap_or(true)
        });
        let report = check_well_formed(&with_controller(def));
        assert!(!report.well_formed());
        assert!(!report.unprocessed.is_empty());
        assert!(report
            .unprocessed
            .iter()
            .all(|f| f.character.as_str() == "left"));
    }

    #[test]
    fn uncoupled_emitting_port_is_an_open_channel() {
        let spy = validate_system(
            SystemDef::new("spy")
                .states(["s"])
                .initial("s")
                .input_port("in", ["ping"])
                .output_port("log", ["event"])
                .accepting(["s"])
                .transition("s", "s", sym("in", "ping"), sym("log", "event")),
        )
        .unwrap();
        let pinger = validate_system(
            SystemDef::new("pinger")
                .states(["s"])
                .initial("s")
                .output_port("out", ["ping"])
                .accepting(["s"])
                .transition("s", "s", None, sym("out", "ping")),
        )
        .unwrap();
        let protocol = Protocol::new(
            vec![pinger, spy],
            vec![Channel {
                from: crate::composition::Endpoint::new("pinger", "out"),
                to: crate::composition::Endpoint::new("spy", "in"),
            }],
        )
        .unwrap();
        let report = check_well_formed(&protocol);
        assert_eq!(report.open_channels.len(), 1);
        assert_eq!(report.open_channels[0].port, "log");
    }

    #[test]
    fn accepting_states_are_componentwise() {
        let protocol = bridge();
        let accepting = protocol.accepting_states();
        let product = protocol.product();
        for &six in &accepting {
            let tuple = &product.states()[six];
            assert_eq!(tuple[0].as_str(), "away");
            assert_eq!(tuple[1].as_str(), "away");
            assert_eq!(tuple[2].as_str(), "free");
        }
        assert!(accepting.contains(&product.initial()));
    }

    #[test]
    fn all_accepting_roles_accept_every_reachable_state() {
        let relay = |name: &str, from: &str, to: &str| {
            validate_system(
                SystemDef::new(name)
                    .states(["s"])
                    .initial("s")
                    .input_port(from, ["x"])
                    .output_port(to, ["x"])
                    .accepting(["s"])
                    .transition("s", "s", sym(from, "x"), None)
                    .transition("s", "s", None, sym(to, "x")),
            )
            .unwrap()
        };
        let a = relay("a", "in", "out");
        let b = relay("b", "in", "out");
        let protocol = Protocol::new(
            vec![a, b],
            vec![
                Channel {
                    from: crate::composition::Endpoint::new("a", "out"),
                    to: crate::composition::Endpoint::new("b", "in"),
                },
                Channel {
                    from: crate::composition::Endpoint::new("b", "out"),
                    to: crate::composition::Endpoint::new("a", "in"),
                },
            ],
        )
        .unwrap();
        assert_eq!(
            protocol.accepting_states().len(),
            protocol.product().states().len()
        );
    }

    #[test]
    fn role_without_acceptance_is_rejected() {
        let mut def = controller_def("ctrl");
        def.accepting.clear();
        let err = Protocol::new(
            vec![train("t1"), train("t2"), validate_system(def).unwrap()],
            bridge_channels(),
        )
        .unwrap_err();
        assert!(matches!(err, ProtocolError::RoleWithoutAcceptance(_)));
    }

    #[test]
    fn bridge_protocol_is_consistent() {
        let report = check_consistency(&bridge(), ConsistencyOptions::default());
        assert!(report.consistent(), "{report:?}");
    }

    #[test]
    fn missing_grants_deadlock_when_both_trains_wait() {
        let protocol = with_controller(deadlocking_controller());
        let report = check_consistency(&protocol, ConsistencyOptions::default());
        assert!(!report.deadlocks.is_empty());
        assert!(report.livelocks.is_empty(), "{:?}", report.livelocks);
        assert!(report.starvation.is_empty(), "{:?}", report.starvation);
        for deadlock in &report.deadlocks {
            let tuple = &protocol.product().states()[deadlock.state];
            assert_eq!(tuple[0].as_str(), "wait");
            assert_eq!(tuple[1].as_str(), "wait");
            assert!(protocol.product().outgoing(deadlock.state).is_empty());
        }
    }

    #[test]
    fn never_accepting_again_is_a_livelock_without_starvation() {
        let protocol = with_controller(livelocked_controller());
        let report = check_consistency(&protocol, ConsistencyOptions::default());
        assert!(report.deadlocks.is_empty(), "{:?}", report.deadlocks);
        assert!(!report.livelocks.is_empty());
        assert!(report.starvation.is_empty(), "{:?}", report.starvation);
    }

    #[test]
    fn serving_one_train_forever_starves_the_other() {
        let protocol = with_controller(starving_controller());
        let report = check_consistency(&protocol, ConsistencyOptions::default());
        assert!(report.deadlocks.is_empty(), "{:?}", report.deadlocks);
        assert!(report.livelocks.is_empty(), "{:?}", report.livelocks);
        assert!(!report.starvation.is_empty());
        assert!(report.starvation.iter().any(|f| f.role == "t2"));
        let finding = report.starvation.iter().find(|f| f.role == "t2").unwrap();
        for &state in &finding.component {
            assert_eq!(protocol.product().states()[state][1].as_str(), "wait");
        }
    }

    #[test]
    fn strong_fairness_excludes_escapable_starvation() {
        let protocol = with_controller(starving_controller());
        let report = check_consistency(
            &protocol,
            ConsistencyOptions {
                env: EnvMode::Angelic,
                fair: true,
            },
        );
        assert!(report.starvation.is_empty(), "{:?}", report.starvation);
    }

    #[test]
    fn witness_traces_replay_through_the_simulator() {
        let protocol = with_controller(deadlocking_controller());
        let report = check_consistency(&protocol, ConsistencyOptions::default());
        for deadlock in &report.deadlocks {
            let sim = simulate(
                &protocol,
                deadlock.trace.steps.len(),
                Choice::Script(deadlock.trace.steps.clone()),
            );
            assert_eq!(sim.stop, Stop::Completed);
            assert_eq!(sim.end_state, deadlock.state);
        }
    }

    #[test]
    fn bridge_safety_holds_for_the_reference_controller() {
        let pred = crate::predicate::parse_pred("not(t1=bridge and t2=bridge)").unwrap();
        let report = verify_safety(&bridge(), &pred).unwrap();
        assert!(report.holds);
    }

    #[test]
    fn unconditional_grants_violate_bridge_safety() {
        let protocol = with_controller(unsafe_controller());
        let pred = crate::predicate::parse_pred("not(t1=bridge and t2=bridge)").unwrap();
        let report = verify_safety(&protocol, &pred).unwrap();
        assert!(!report.holds);
        let trace = report.counterexample.unwrap();
        let end = trace.end_state(protocol.product());
        let tuple = &protocol.product().states()[end];
        assert_eq!(tuple[0].as_str(), "bridge");
        assert_eq!(tuple[1].as_str(), "bridge");
        let sim = simulate(&protocol, trace.steps.len(), Choice::Script(trace.steps.clone()));
        assert_eq!(sim.stop, Stop::Completed);
        assert_eq!(sim.end_state, end);
    }

    #[test]
    fn trivially_true_predicates_hold() {
        let report = verify_safety(&bridge(), &Pred::True).unwrap();
        assert!(report.holds);
    }

    #[test]
    fn seeded_simulation_respects_channel_identity() {
        let protocol = bridge();
        let product = protocol.product();
        let sim = simulate(&protocol, 50, Choice::Seed(1));
        assert!(!sim.trace.steps.is_empty());
        for &tix in &sim.trace.steps {
            if let ProductMove::Sync {
                sender,
                sender_transition,
                receiver,
                receiver_transition,
                character,
                ..
            } = &product.transitions()[tix].mv
            {
                let sent = product.components()[*sender].transitions()[*sender_transition]
                    .output
                    .as_ref()
                    .unwrap();
                let received = product.components()[*receiver].transitions()
                    [*receiver_transition]
                    .input
                    .as_ref()
                    .unwrap();
                assert_eq!(&sent.character, character);
                assert_eq!(&received.character, character);
            }
        }
    }

    #[test]
    fn some_seed_reaches_the_deadlock() {
        let protocol = with_controller(deadlocking_controller());
        let report = check_consistency(&protocol, ConsistencyOptions::default());
        let deadlock_states: BTreeSet<usize> =
            report.deadlocks.iter().map(|f| f.state).collect();
        let mut reached = false;
        for seed in 0..64 {
            let sim = simulate(&protocol, 200, Choice::Seed(seed));
            if sim.stop == Stop::NoEnabledTransition {
                assert!(deadlock_states.contains(&sim.end_state));
                reached = true;
                break;
            }
        }
        assert!(reached, "no seed ran into the seeded deadlock");
    }

    #[test]
    fn zero_steps_is_an_empty_trace_at_the_initial_state() {
        let protocol = bridge();
        let sim = simulate(&protocol, 0, Choice::Seed(7));
        assert!(sim.trace.steps.is_empty());
        assert_eq!(sim.end_state, protocol.product().initial());
        assert_eq!(sim.stop, Stop::Completed);
    }

    #[test]
    fn identical_models_have_no_mismatch() {
        let channel = &bridge_channels()[0];
        let findings = mismatch_analysis(&controller(), &controller(), channel).unwrap();
        assert!(findings.is_empty());
    }

    #[test]
    fn single_mutation_is_pinpointed() {
        let assumed = controller();
        let mut def = controller_def("ctrl");
        for t in &mut def.transitions {
            if t.from.as_str() == "b1"
                && t.input.as_ref().map(|s| s.character.as_str()) == Some("left")
            {
                t.to = "g1".into();
            }
        }
        let actual = validate_system(def).unwrap();
        let channel = &bridge_channels()[0]; // t1.pos -> ctrl.in1
        let findings = mismatch_analysis(&assumed, &actual, channel).unwrap();
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].state.as_str(), "b1");
        assert_eq!(findings[0].symbol.character.as_str(), "left");
    }

    #[test]
    fn disjoint_alphabets_are_rejected() {
        let other = validate_system(
            SystemDef::new("other")
                .states(["s"])
                .initial("s")
                .input_port("in1", ["ping", "pong"])
                .accepting(["s"])
                .transition("s", "s", sym("in1", "ping"), None),
        )
        .unwrap();
        let channel = &bridge_channels()[0];
        let err = mismatch_analysis(&other, &controller(), channel).unwrap_err();
        assert!(matches!(err, ProtocolError::AlphabetMismatch { .. }));
    }

    #[test]
    fn trace_rendering_has_one_line_per_step_plus_the_end_state() {
        let protocol = bridge();
        let sim = simulate(&protocol, 5, Choice::Seed(3));
        let rendered = sim.trace.render(protocol.product());
        assert_eq!(rendered.lines().count(), sim.trace.steps.len() + 1);
        for line in rendered.lines() {
            assert_eq!(line.split(" | ").count(), 3);
        }
    }

    #[test]
    fn demonic_environment_blocks_states_needing_inputs() {
        // A role that needs an environment tick to progress: angelic sees
        // progress, demonic reports a deadlock.
        let ticker = validate_system(
            SystemDef::new("ticker")
                .states(["idle", "busy"])
                .initial("idle")
                .input_port("tick", ["t"])
                .output_port("out", ["ping"])
                .accepting(["idle"])
                .transition("idle", "busy", None, sym("out", "ping"))
                .transition("busy", "idle", sym("tick", "t"), None),
        )
        .unwrap();
        let sink = validate_system(
            SystemDef::new("sink")
                .states(["s"])
                .initial("s")
                .input_port("in", ["ping"])
                .accepting(["s"])
                .transition("s", "s", sym("in", "ping"), None),
        )
        .unwrap();
        let protocol = Protocol::new(
            vec![ticker, sink],
            vec![Channel {
                from: crate::composition::Endpoint::new("ticker", "out"),
                to: crate::composition::Endpoint::new("sink", "in"),
            }],
        )
        .unwrap();
        let angelic = check_consistency(&protocol, ConsistencyOptions::default());
        assert!(angelic.deadlocks.is_empty());
        let demonic = check_consistency(
            &protocol,
            ConsistencyOptions {
                env: EnvMode::Demonic,
                fair: false,
            },
        );
        assert!(!demonic.deadlocks.is_empty());
    }

    #[test]
    fn tick_self_loops_are_not_progress() {
        let spinner = validate_system(
            SystemDef::new("spinner")
                .states(["idle", "stuck"])
                .initial("idle")
                .input_port("tick", ["t"])
                .output_port("out", ["ping"])
                .accepting(["idle"])
                .transition("idle", "stuck", None, sym("out", "ping"))
                .transition("stuck", "stuck", sym("tick", "t"), None),
        )
        .unwrap();
        let sink = validate_system(
            SystemDef::new("sink")
                .states(["s"])
                .initial("s")
                .input_port("in", ["ping"])
                .accepting(["s"])
                .transition("s", "s", sym("in", "ping"), None),
        )
        .unwrap();
        let protocol = Protocol::new(
            vec![spinner, sink],
            vec![Channel {
                from: crate::composition::Endpoint::new("spinner", "out"),
                to: crate::composition::Endpoint::new("sink", "in"),
            }],
        )
        .unwrap();
        let report = check_consistency(&protocol, ConsistencyOptions::default());
        assert!(
            !report.deadlocks.is_empty(),
            "tick self-loops alone are no progress"
        );
    }
}
