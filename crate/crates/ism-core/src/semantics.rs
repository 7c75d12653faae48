//! Meaning of input characters within a transition relation.
//!
//! The meaning of an input character at a receiver state is the set of
//! (output, successor) pairs the character can produce there; the transition
//! relation is the context of interpretation and the size of the set is the
//! scope for interpretation. Everything here is a pure function over
//! validated systems.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::system::{StateId, Symbol, ValidatedSystem};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticsError {
    #[error("cycle of spontaneous transitions through state `{state}`")]
    EpsilonCycle { state: StateId },
    #[error("no continuation meaning supplied for state `{state}`")]
    MissingContinuation { state: StateId },
}

/// The meaning of one input character at one receiver state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeaningSet {
    pub system: String,
    pub state: StateId,
    pub input: Option<Symbol>,
    pub pairs: BTreeSet<(Option<Symbol>, StateId)>,
}

impl MeaningSet {
    /// Interpretation selects one element; this is how much room it has.
    pub fn scope_for_interpretation(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Meaning of a character sequence: all (output sequence, final state) pairs
/// along transition chains consuming the sequence. Output sequences retain
/// empty entries; comparisons drop them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceMeaning {
    pub system: String,
    pub state: StateId,
    pub inputs: Vec<Option<Symbol>>,
    pub pairs: BTreeSet<(Vec<Option<Symbol>>, StateId)>,
}

impl SequenceMeaning {
    /// Pairs with empty outputs dropped; the form under which two sequence
    /// meanings are compared.
    pub fn canonical_pairs(&self) -> BTreeSet<(Vec<Symbol>, StateId)> {
        self.pairs
            .iter()
            .map(|(outs, q)| {
                (
                    outs.iter().filter_map(|o| o.clone()).collect::<Vec<_>>(),
                    q.clone(),
                )
            })
            .collect()
    }

    pub fn same_meaning(&self, other: &SequenceMeaning) -> bool {
        self.canonical_pairs() == other.canonical_pairs()
    }
}

/// mng_p(i): the exact set of (output, successor) pairs for `input` at
/// `state`. The empty set is a defined value meaning "not processed here".
pub fn meaning(ts: &ValidatedSystem, state: &StateId, input: &Option<Symbol>) -> MeaningSet {
    MeaningSet {
        system: ts.name().to_string(),
        state: state.clone(),
        input: input.clone(),
        pairs: ts.step(state, input),
    }
}

/// Two characters have the same meaning at `state` iff their meaning sets
/// are equal; two unprocessed characters agree on the empty set.
pub fn same_meaning(
    ts: &ValidatedSystem,
    state: &StateId,
    a: &Option<Symbol>,
    b: &Option<Symbol>,
) -> bool {
    meaning(ts, state, a).pairs == meaning(ts, state, b).pairs
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstitutabilityReport {
    pub per_state: BTreeMap<StateId, bool>,
    /// Conjunction over all reachable states: the sender may substitute the
    /// character in the complete interaction.
    pub everywhere: bool,
}

/// Where a sender can substitute `a` by `b` without changing the receiver's
/// scope for interpretation.
pub fn substitutable(
    ts: &ValidatedSystem,
    a: &Option<Symbol>,
    b: &Option<Symbol>,
) -> SubstitutabilityReport {
    let mut per_state = BTreeMap::new();
    for state in ts.states() {
        per_state.insert(state.clone(), same_meaning(ts, state, a, b));
    }
    let everywhere = ts
        .reachable_states()
        .iter()
        .all(|state| per_state[state]);
    SubstitutabilityReport {
        per_state,
        everywhere,
    }
}

/// Extends the meaning of `input` at `state` by every chain of spontaneous
/// transitions from each successor. Each produced pair records the last
/// non-empty output observed along its chain. A cycle of spontaneous
/// transitions is an error: the closure would not terminate.
pub fn epsilon_closure_meaning(
    ts: &ValidatedSystem,
    state: &StateId,
    input: &Option<Symbol>,
) -> Result<MeaningSet, SemanticsError> {
    let base = meaning(ts, state, input);
    let mut pairs = BTreeSet::new();
    for (out, q) in &base.pairs {
        pairs.insert((out.clone(), q.clone()));
        let mut on_chain = BTreeSet::new();
        on_chain.insert(q.clone());
        extend_chain(ts, q, out, &mut on_chain, &mut pairs)?;
    }
    Ok(MeaningSet {
        system: base.system,
        state: base.state,
        input: base.input,
        pairs,
    })
}

fn extend_chain(
    ts: &ValidatedSystem,
    at: &StateId,
    last_out: &Option<Symbol>,
    on_chain: &mut BTreeSet<StateId>,
    pairs: &mut BTreeSet<(Option<Symbol>, StateId)>,
) -> Result<(), SemanticsError> {
    for &ix in ts.matching(at, &None) {
        let t = &ts.transitions()[ix];
        if on_chain.contains(&t.to) {
            return Err(SemanticsError::EpsilonCycle { state: t.to.clone() });
        }
        let out = t.output.clone().or_else(|| last_out.clone());
        pairs.insert((out.clone(), t.to.clone()));
        on_chain.insert(t.to.clone());
        extend_chain(ts, &t.to, &out, on_chain, pairs)?;
        on_chain.remove(&t.to);
    }
    Ok(())
}

/// n-step meaning: all (output sequence, final state) pairs along chains
/// consuming `seq` from `state`.
pub fn meaning_of_sequence(
    ts: &ValidatedSystem,
    state: &StateId,
    seq: &[Option<Symbol>],
) -> SequenceMeaning {
    assert!(!seq.is_empty(), "meaning_of_sequence: empty sequence");
    let mut frontier: Vec<(Vec<Option<Symbol>>, StateId)> = vec![(Vec::new(), state.clone())];
    for input in seq {
        let mut next = Vec::new();
        for (outs, at) in frontier {
            for (out, q) in ts.step(&at, input) {
                let mut outs = outs.clone();
                outs.push(out);
                next.push((outs, q));
            }
        }
        frontier = next;
    }
    SequenceMeaning {
        system: ts.name().to_string(),
        state: state.clone(),
        inputs: seq.to_vec(),
        pairs: frontier.into_iter().collect(),
    }
}

/// Composes a one-step meaning with continuation meanings per successor
/// state: {(o1.o2, q2) | (o1, q1) in m1, (o2, q2) in continuation[q1]}.
/// Equal state names in the two meanings refer to identical states; that
/// convention is what makes the composition compute the sequence meaning.
pub fn compose_meanings(
    m1: &MeaningSet,
    continuation: &BTreeMap<StateId, MeaningSet>,
) -> Result<SequenceMeaning, SemanticsError> {
    let mut pairs = BTreeSet::new();
    let mut inputs = vec![m1.input.clone(), None];
    for (o1, q1) in &m1.pairs {
        let cont = continuation
            .get(q1)
            .ok_or_else(|| SemanticsError::MissingContinuation { state: q1.clone() })?;
        inputs[1] = cont.input.clone();
        for (o2, q2) in &cont.pairs {
            pairs.insert((vec![o1.clone(), o2.clone()], q2.clone()));
        }
    }
    Ok(SequenceMeaning {
        system: m1.system.clone(),
        state: m1.state.clone(),
        inputs,
        pairs,
    })
}

/// One equivalence class of the equal-meaning partition at a state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeaningClass {
    pub symbols: BTreeSet<Symbol>,
    pub pairs: BTreeSet<(Option<Symbol>, StateId)>,
}

/// Partitions all declared input characters into equal-meaning classes at
/// `state`. Characters the state does not process share the empty-set class.
pub fn meaning_partition(ts: &ValidatedSystem, state: &StateId) -> Vec<MeaningClass> {
    let mut classes: BTreeMap<BTreeSet<(Option<Symbol>, StateId)>, BTreeSet<Symbol>> =
        BTreeMap::new();
    for symbol in ts.input_symbols() {
        let m = meaning(ts, state, &Some(symbol.clone()));
        classes.entry(m.pairs).or_default().insert(symbol);
    }
    classes
        .into_iter()
        .map(|(pairs, symbols)| MeaningClass { symbols, pairs })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::fixtures::{tank, train};
    use crate::system::{sym, validate_system, StateId, SystemDef};

    fn st(s: &str) -> StateId {
        StateId::new(s)
    }

    #[test]
    fn tank_meaning_of_fill_at_filled() {
        let tank = tank();
        let m = meaning(&tank, &st("filled_1"), &sym("fill", "dx"));
        assert_eq!(m.scope_for_interpretation(), 1);
        assert!(m.pairs.contains(&(sym("level", "l2"), st("full_2"))));
    }

    #[test]
    fn unprocessed_character_means_the_empty_set() {
        let train = train("t1");
        let m = meaning(&train, &st("away"), &sym("go_in", "go"));
        assert!(m.is_empty());
    }

    #[test]
    fn deterministic_systems_have_scope_at_most_one() {
        let tank = tank();
        assert!(tank.is_deterministic());
        for state in tank.states() {
            for symbol in tank.input_symbols() {
                assert!(meaning(&tank, state, &Some(symbol.clone())).pairs.len() <= 1);
            }
        }
    }

    #[test]
    fn same_meaning_is_reflexive_and_holds_for_two_unprocessed_characters() {
        let tank = tank();
        let fill = sym("fill", "dx");
        assert!(same_meaning(&tank, &st("empty_0"), &fill, &fill));
        // At full_2 a fill is unprocessed; so is a hypothetical other port
        // character. Both meanings are the empty set.
        assert!(same_meaning(
            &tank,
            &st("full_2"),
            &sym("fill", "dx"),
            &sym("fill", "dx")
        ));
        let train = train("t1");
        assert!(same_meaning(
            &train,
            &st("away"),
            &sym("go_in", "go"),
            &sym("go_in", "go")
        ));
    }

    #[test]
    fn fill_and_take_differ_at_filled() {
        let tank = tank();
        assert!(!same_meaning(
            &tank,
            &st("filled_1"),
            &sym("fill", "dx"),
            &sym("take", "dx")
        ));
    }

    #[test]
    fn substitutable_everywhere_for_identical_characters() {
        let tank = tank();
        let report = substitutable(&tank, &sym("fill", "dx"), &sym("fill", "dx"));
        assert!(report.everywhere);
        assert!(report.per_state.values().all(|&b| b));
    }

    #[test]
    fn substitutable_at_one_state_but_not_everywhere() {
        // i and i' agree at p (both unprocessed) but disagree at p'.
        let sys = validate_system(
            SystemDef::new("wit")
                .states(["p", "q"])
                .initial("p")
                .input_port("in", ["a", "b"])
                .transition("p", "q", sym("in", "a"), None)
                .transition("p", "q", sym("in", "b"), None)
                .transition("q", "p", sym("in", "a"), None),
        )
        .unwrap();
        let report = substitutable(&sys, &sym("in", "a"), &sym("in", "b"));
        assert!(report.per_state[&st("p")]);
        assert!(!report.per_state[&st("q")]);
        assert!(!report.everywhere);
    }

    #[test]
    fn closure_follows_spontaneous_chains() {
        let train = train("t1");
        let closure = epsilon_closure_meaning(&train, &st("away"), &None).unwrap();
        assert!(closure
            .pairs
            .contains(&(sym("pos", "arrived"), st("wait"))));
    }

    #[test]
    fn closure_without_spontaneous_transitions_is_the_meaning() {
        let tank = tank();
        let m = meaning(&tank, &st("empty_0"), &sym("fill", "dx"));
        let closure =
            epsilon_closure_meaning(&tank, &st("empty_0"), &sym("fill", "dx")).unwrap();
        assert_eq!(m.pairs, closure.pairs);
    }

    #[test]
    fn epsilon_self_loop_is_a_cycle_error() {
        let sys = validate_system(
            SystemDef::new("looper")
                .states(["s"])
                .initial("s")
                .input_port("in", ["a"])
                .transition("s", "s", None, None),
        )
        .unwrap();
        let err = epsilon_closure_meaning(&sys, &st("s"), &None).unwrap_err();
        assert!(matches!(err, SemanticsError::EpsilonCycle { .. }));
    }

    #[test]
    fn sequence_meaning_on_the_train() {
        let train = train("t1");
        let m = meaning_of_sequence(&train, &st("away"), &[None, sym("go_in", "go")]);
        assert_eq!(m.pairs.len(), 1);
        let (outs, end) = m.pairs.iter().next().unwrap();
        assert_eq!(outs, &vec![sym("pos", "arrived"), None]);
        assert_eq!(end, &st("bridge"));
        // Canonical comparison drops the empty entry.
        assert_eq!(
            m.canonical_pairs().into_iter().next().unwrap(),
            (vec![sym("pos", "arrived").unwrap()], st("bridge"))
        );
    }

    #[test]
    fn singleton_sequence_equals_meaning_up_to_tupling() {
        let tank = tank();
        let single = meaning_of_sequence(&tank, &st("filled_1"), &[sym("take", "dx")]);
        let m = meaning(&tank, &st("filled_1"), &sym("take", "dx"));
        let tupled: BTreeSet<_> = m
            .pairs
            .iter()
            .map(|(o, q)| (vec![o.clone()], q.clone()))
            .collect();
        assert_eq!(single.pairs, tupled);
    }

    #[test]
    fn different_sequences_can_have_identical_meanings() {
        let sys = validate_system(
            SystemDef::new("conv")
                .states(["s0", "s1", "s2"])
                .initial("s0")
                .input_port("in", ["a", "b", "c"])
                .output_port("out", ["x", "y"])
                .transition("s0", "s1", sym("in", "a"), sym("out", "x"))
                .transition("s0", "s1", sym("in", "c"), sym("out", "x"))
                .transition("s1", "s2", sym("in", "b"), sym("out", "y")),
        )
        .unwrap();
        let ab = meaning_of_sequence(&sys, &st("s0"), &[sym("in", "a"), sym("in", "b")]);
        let cb = meaning_of_sequence(&sys, &st("s0"), &[sym("in", "c"), sym("in", "b")]);
        assert!(ab.same_meaning(&cb));
        assert!(!ab.pairs.is_empty());
    }

    #[test]
    fn compose_agrees_with_sequence_meaning() {
        let tank = tank();
        for p in tank.states() {
            for i1 in tank.input_symbols() {
                for i2 in tank.input_symbols() {
                    let m1 = meaning(&tank, p, &Some(i1.clone()));
                    let continuation: BTreeMap<_, _> = m1
                        .pairs
                        .iter()
                        .map(|(_, q)| (q.clone(), meaning(&tank, q, &Some(i2.clone()))))
                        .collect();
                    let composed = compose_meanings(&m1, &continuation).unwrap();
                    let direct = meaning_of_sequence(
                        &tank,
                        p,
                        &[Some(i1.clone()), Some(i2.clone())],
                    );
                    assert_eq!(composed.pairs, direct.pairs);
                }
            }
        }
    }

    #[test]
    fn compose_of_empty_meaning_is_empty() {
        let train = train("t1");
        let m1 = meaning(&train, &st("away"), &sym("go_in", "go"));
        assert!(m1.is_empty());
        let composed = compose_meanings(&m1, &BTreeMap::new()).unwrap();
        assert!(composed.pairs.is_empty());
    }

    #[test]
    fn compose_with_missing_continuation_fails() {
        let train = train("t1");
        let m1 = meaning(&train, &st("wait"), &sym("go_in", "go"));
        let err = compose_meanings(&m1, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, SemanticsError::MissingContinuation { .. }));
    }

    #[test]
    fn meaning_partition_groups_synonyms() {
        let sys = validate_system(
            SystemDef::new("xorish")
                .states(["s"])
                .initial("s")
                .input_port("in", ["a", "b", "c"])
                .output_port("out", ["o1", "o2"])
                .transition("s", "s", sym("in", "a"), sym("out", "o1"))
                .transition("s", "s", sym("in", "b"), sym("out", "o1"))
                .transition("s", "s", sym("in", "c"), sym("out", "o2")),
        )
        .unwrap();
        let classes = meaning_partition(&sys, &st("s"));
        assert_eq!(classes.len(), 2);
        let sizes: Vec<usize> = classes.iter().map(|c| c.symbols.len()).collect();
        assert!(sizes.contains(&2) && sizes.contains(&1));
    }

    #[test]
    fn all_unprocessed_characters_form_a_single_class() {
        let sys = validate_system(
            SystemDef::new("idle")
                .states(["s", "t"])
                .initial("s")
                .input_port("in", ["a", "b"])
                .transition("s", "t", sym("in", "a"), None),
        )
        .unwrap();
        let classes = meaning_partition(&sys, &st("t"));
        assert_eq!(classes.len(), 1);
        assert_eq!(classes[0].symbols.len(), 2);
        assert!(classes[0].pairs.is_empty());
    }

    #[test]
    fn tank_partition_separates_fill_and_take_at_filled() {
        let tank = tank();
        let classes = meaning_partition(&tank, &st("filled_1"));
        let class_of = |port: &str| {
            classes
                .iter()
                .position(|c| c.symbols.iter().any(|s| s.port == port))
                .unwrap()
        };
        assert_ne!(class_of("fill"), class_of("take"));
    }
}
