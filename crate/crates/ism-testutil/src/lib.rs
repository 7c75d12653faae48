//! Seeded generators, reference model builders and independent brute-force
//! oracles shared by the test suites. The oracles walk raw definitions so
//! they cannot share a code path with the indexed implementations they
//! check.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use ism_core::composition::{Channel, Endpoint};
use ism_core::system::{sym, Character, StateId, Symbol, SystemDef, Transition};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Bounds for the random system generator.
#[derive(Debug, Clone, Copy)]
pub struct GenParams {
    pub max_states: usize,
    pub max_ports: usize,
    pub max_chars_per_port: usize,
    pub max_transitions: usize,
    pub allow_epsilon: bool,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            max_states: 5,
            max_ports: 3,
            max_chars_per_port: 2,
            max_transitions: 12,
            allow_epsilon: true,
        }
    }
}

/// A random system definition, valid by construction: transitions are
/// sampled from the declared states and alphabets.
pub fn gen_system(rng: &mut ChaCha8Rng, name: &str, params: GenParams) -> SystemDef {
    let n_states = rng.gen_range(1..=params.max_states);
    let states: Vec<String> = (0..n_states).map(|i| format!("q{i}")).collect();
    let n_in = rng.gen_range(1..=params.max_ports);
    let n_out = rng.gen_range(1..=params.max_ports);

    let mut def = SystemDef::new(name)
        .states(states.iter().map(String::as_str))
        .initial("q0");
    let mut in_syms: Vec<Option<Symbol>> = if params.allow_epsilon {
        vec![None]
    } else {
        Vec::new()
    };
    let mut out_syms: Vec<Option<Symbol>> = vec![None];
    for p in 0..n_in {
        let chars: Vec<String> = (0..rng.gen_range(1..=params.max_chars_per_port))
            .map(|c| format!("a{c}"))
            .collect();
        def = def.input_port(&format!("in{p}"), chars.iter().map(String::as_str));
        for c in &chars {
            in_syms.push(sym(&format!("in{p}"), c));
        }
    }
    for p in 0..n_out {
        let chars: Vec<String> = (0..rng.gen_range(1..=params.max_chars_per_port))
            .map(|c| format!("x{c}"))
            .collect();
        def = def.output_port(&format!("out{p}"), chars.iter().map(String::as_str));
        for c in &chars {
            out_syms.push(sym(&format!("out{p}"), c));
        }
    }

    let n_trans = rng.gen_range(0..=params.max_transitions);
    for _ in 0..n_trans {
        let from = &states[rng.gen_range(0..n_states)];
        let to = &states[rng.gen_range(0..n_states)];
        let input = in_syms[rng.gen_range(0..in_syms.len())].clone();
        let output = out_syms[rng.gen_range(0..out_syms.len())].clone();
        def = def.transition(from.as_str(), to.as_str(), input, output);
    }
    if rng.gen_bool(0.5) {
        def = def.accepting(["q0"]);
    }
    def
}

/// A random bijective renaming of the system's states, characters and
/// ports.
#[allow(clippy::type_complexity)]
pub fn gen_renaming(
    rng: &mut ChaCha8Rng,
    def: &SystemDef,
) -> (
    BTreeMap<StateId, StateId>,
    BTreeMap<Character, Character>,
    BTreeMap<String, String>,
) {
    let mut suffixes: Vec<u32> = (0..1000).collect();
    suffixes.shuffle(rng);
    let mut next = suffixes.into_iter();

    let states = def
        .states
        .iter()
        .map(|s| (s.clone(), StateId::new(format!("r{}", next.next().unwrap()))))
        .collect();
    let mut characters = BTreeMap::new();
    for port in def.input_ports.iter().chain(&def.output_ports) {
        for ch in &port.alphabet {
            characters
                .entry(ch.clone())
                .or_insert_with(|| Character::new(format!("k{}", next.next().unwrap())));
        }
    }
    let ports = def
        .input_ports
        .iter()
        .chain(&def.output_ports)
        .map(|p| (p.name.clone(), format!("p{}", next.next().unwrap())))
        .collect();
    (states, characters, ports)
}

/// Brute-force mng_p(i): a raw scan of the declared transition list.
pub fn naive_meaning(
    def: &SystemDef,
    state: &StateId,
    input: &Option<Symbol>,
) -> BTreeSet<(Option<Symbol>, StateId)> {
    def.transitions
        .iter()
        .filter(|t| &t.from == state && &t.input == input)
        .map(|t| (t.output.clone(), t.to.clone()))
        .collect()
}

/// Brute-force n-step meaning: explicit path enumeration over the raw
/// definition.
pub fn naive_sequence_meaning(
    def: &SystemDef,
    state: &StateId,
    seq: &[Option<Symbol>],
) -> BTreeSet<(Vec<Option<Symbol>>, StateId)> {
    fn walk(
        def: &SystemDef,
        at: &StateId,
        seq: &[Option<Symbol>],
        outs: &mut Vec<Option<Symbol>>,
        acc: &mut BTreeSet<(Vec<Option<Symbol>>, StateId)>,
    ) {
        match seq.split_first() {
            None => {
                acc.insert((outs.clone(), at.clone()));
            }
            Some((input, rest)) => {
                for t in &def.transitions {
                    if &t.from == at && &t.input == input {
                        outs.push(t.output.clone());
                        walk(def, &t.to, rest, outs, acc);
                        outs.pop();
                    }
                }
            }
        }
    }
    let mut acc = BTreeSet::new();
    let mut outs = Vec::new();
    walk(def, state, seq, &mut outs, &mut acc);
    acc
}

/// Brute-force reachability over the raw definition.
pub fn naive_reachable(def: &SystemDef) -> BTreeSet<StateId> {
    let initial = def.initial.clone().expect("definition has an initial state");
    let mut seen = BTreeSet::new();
    seen.insert(initial.clone());
    let mut queue = VecDeque::new();
    queue.push_back(initial);
    while let Some(at) = queue.pop_front() {
        for t in &def.transitions {
            if t.from == at && seen.insert(t.to.clone()) {
                queue.push_back(t.to.clone());
            }
        }
    }
    seen
}

/// Independent product reachability: a direct expansion of the rendezvous
/// semantics over raw definitions, written without the indexed product
/// construction.
pub fn naive_product_states(
    defs: &[SystemDef],
    channels: &[(String, String, String, String)],
) -> BTreeSet<Vec<StateId>> {
    let coupled_in = |system: &str, port: &str| {
        channels
            .iter()
            .any(|(_, _, ts, tp)| ts == system && tp == port)
    };
    let coupled_out = |system: &str, port: &str| {
        channels
            .iter()
            .any(|(fs, fp, _, _)| fs == system && fp == port)
    };
    let receiver_of = |system: &str, port: &str| {
        channels
            .iter()
            .find(|(fs, fp, _, _)| fs == system && fp == port)
            .map(|(_, _, ts, tp)| (ts.clone(), tp.clone()))
    };

    let initial: Vec<StateId> = defs
        .iter()
        .map(|d| d.initial.clone().expect("initial state"))
        .collect();
    let mut seen = BTreeSet::new();
    seen.insert(initial.clone());
    let mut queue = VecDeque::new();
    queue.push_back(initial);

    while let Some(tuple) = queue.pop_front() {
        for (cix, def) in defs.iter().enumerate() {
            for t in &def.transitions {
                if t.from != tuple[cix] {
                    continue;
                }
                let consumes_coupled = t
                    .input
                    .as_ref()
                    .map(|s| coupled_in(&def.name, &s.port))
                    .unwrap_or(false);
                let emits_coupled = t
                    .output
                    .as_ref()
                    .map(|s| coupled_out(&def.name, &s.port))
                    .unwrap_or(false);
                match (consumes_coupled, emits_coupled) {
                    (false, false) => {
                        let mut next = tuple.clone();
                        next[cix] = t.to.clone();
                        if seen.insert(next.clone()) {
                            queue.push_back(next);
                        }
                    }
                    (false, true) => {
                        let out = t.output.as_ref().unwrap();
                        let (rsys, rport) = receiver_of(&def.name, &out.port).unwrap();
                        let rix = defs.iter().position(|d| d.name == rsys).unwrap();
                        for u in &defs[rix].transitions {
                            let matches = u.from == tuple[rix]
                                && u.input
                                    .as_ref()
                                    .map(|s| s.port == rport && s.character == out.character)
                                    == Some(true)
                                && !u
                                    .output
                                    .as_ref()
                                    .map(|s| coupled_out(&defs[rix].name, &s.port))
                                    .unwrap_or(false);
                            if matches {
                                let mut next = tuple.clone();
                                next[cix] = t.to.clone();
                                next[rix] = u.to.clone();
                                if seen.insert(next.clone()) {
                                    queue.push_back(next.clone());
                                }
                            }
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    seen
}

/// The bridge train role.
pub fn train(name: &str) -> SystemDef {
    SystemDef::new(name)
        .states(["away", "wait", "bridge"])
        .initial("away")
        .input_port("go_in", ["go"])
        .output_port("pos", ["arrived", "left"])
        .accepting(["away"])
        .transition("away", "wait", None, sym("pos", "arrived"))
        .transition("wait", "bridge", sym("go_in", "go"), None)
        .transition("bridge", "away", None, sym("pos", "left"))
}

/// The reference bridge controller.
pub fn controller() -> SystemDef {
    SystemDef::new("ctrl")
        .states(["free", "g1", "g2", "g1w2", "g2w1", "b1", "b2", "b1w2", "b2w1"])
        .initial("free")
        .input_port("in1", ["arrived", "left"])
        .input_port("in2", ["arrived", "left"])
        .output_port("out1", ["go"])
        .output_port("out2", ["go"])
        .accepting(["free"])
        .transition("free", "g1", sym("in1", "arrived"), None)
        .transition("free", "g2", sym("in2", "arrived"), None)
        .transition("g1", "g1w2", sym("in2", "arrived"), None)
        .transition("g2", "g2w1", sym("in1", "arrived"), None)
        .transition("g1", "b1", None, sym("out1", "go"))
        .transition("g2", "b2", None, sym("out2", "go"))
        .transition("g1w2", "b1w2", None, sym("out1", "go"))
        .transition("g2w1", "b2w1", None, sym("out2", "go"))
        .transition("b1", "free", sym("in1", "left"), None)
        .transition("b2", "free", sym("in2", "left"), None)
        .transition("b1", "b1w2", sym("in2", "arrived"), None)
        .transition("b2", "b2w1", sym("in1", "arrived"), None)
        .transition("b1w2", "g2", sym("in1", "left"), None)
        .transition("b2w1", "g1", sym("in2", "left"), None)
}

/// The capacity-two tank.
pub fn tank() -> SystemDef {
    SystemDef::new("tank")
        .states(["empty_0", "filled_1", "full_2"])
        .initial("empty_0")
        .input_port("fill", ["dx"])
        .input_port("take", ["dx"])
        .output_port("level", ["l0", "l1", "l2"])
        .transition("empty_0", "filled_1", sym("fill", "dx"), sym("level", "l1"))
        .transition("filled_1", "full_2", sym("fill", "dx"), sym("level", "l2"))
        .transition("filled_1", "empty_0", sym("take", "dx"), sym("level", "l0"))
        .transition("full_2", "filled_1", sym("take", "dx"), sym("level", "l1"))
}

/// The four bridge channels for roles named t1, t2 and ctrl.
pub fn bridge_channels() -> Vec<Channel> {
    vec![
        Channel {
            from: Endpoint::new("t1", "pos"),
            to: Endpoint::new("ctrl", "in1"),
        },
        Channel {
            from: Endpoint::new("t2", "pos"),
            to: Endpoint::new("ctrl", "in2"),
        },
        Channel {
            from: Endpoint::new("ctrl", "out1"),
            to: Endpoint::new("t1", "go_in"),
        },
        Channel {
            from: Endpoint::new("ctrl", "out2"),
            to: Endpoint::new("t2", "go_in"),
        },
    ]
}

/// Channel endpoints in the plain tuple form the naive product expects.
pub fn bridge_channel_tuples() -> Vec<(String, String, String, String)> {
    bridge_channels()
        .into_iter()
        .map(|c| (c.from.system, c.from.port, c.to.system, c.to.port))
        .collect()
}

/// Deletes one transition by index from a definition.
pub fn without_transition(def: &SystemDef, index: usize) -> SystemDef {
    let mut def = def.clone();
    def.transitions.remove(index);
    def
}

/// All transitions consuming a character, with their definition order index.
pub fn consuming_transitions(def: &SystemDef) -> Vec<(usize, Transition)> {
    def.transitions
        .iter()
        .enumerate()
        .filter(|(_, t)| t.input.is_some())
        .map(|(i, t)| (i, t.clone()))
        .collect()
}
