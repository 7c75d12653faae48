//! Classification of interfaces along determinism, statefulness and
//! synchronicity, and the horizontal/vertical layer verdict it induces.
//!
//! Bidirectional interactions split into the symmetric case, where the one
//! sensible combination is mutual hinting between nondeterministic,
//! stateful, asynchronously sending parties, and the asymmetric case, where
//! a synchronous caller uses a deterministic receiver. Calls mark a step
//! into a lower layer; mutual hinting stays on eye level; unidirectional
//! flows leave the layer direction an arbitrary convention.

use std::fmt;

use thiserror::Error;

use crate::system::ValidatedSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Determinism {
    Deterministic,
    Nondeterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Statefulness {
    Stateless,
    Stateful,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Synchronicity {
    Synchronous,
    Asynchronous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum InterfaceDirection {
    Unidirectional,
    Bidirectional,
}

/// How one endpoint behaves: receiver dimensions are derivable from a
/// model, sender synchronicity is declared (the transition relation does
/// not encode blocking), and direction states which flows the endpoint
/// takes part in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EndpointProfile {
    pub receiver_determinism: Determinism,
    pub receiver_statefulness: Statefulness,
    pub sender_synchronicity: Synchronicity,
    pub direction: InterfaceDirection,
}

impl EndpointProfile {
    fn triple(&self) -> (Determinism, Statefulness, Synchronicity) {
        (
            self.receiver_determinism,
            self.receiver_statefulness,
            self.sender_synchronicity,
        )
    }
}

/// Channel counts between the two endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ChannelTopology {
    pub a_to_b: usize,
    pub b_to_a: usize,
}

impl ChannelTopology {
    pub fn direction(&self) -> Option<InterfaceDirection> {
        match (self.a_to_b > 0, self.b_to_a > 0) {
            (true, true) => Some(InterfaceDirection::Bidirectional),
            (true, false) | (false, true) => Some(InterfaceDirection::Unidirectional),
            (false, false) => None,
        }
    }
}

/// Refinement of the use relation in the asymmetric bidirectional case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OperationStyle {
    /// A plain call.
    #[default]
    Call,
    /// The relation was split into a deterministic part plus exceptions.
    CallWithExceptions,
    /// Transport is involved; remote exceptions apply.
    RemoteCall,
    /// The call direction paired with a bottom-up event stream.
    CallPlusObservation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum InterfaceClass {
    Pipe,
    Observation,
    Operation,
    OperationWithExceptions,
    RemoteOperation,
    ProtocolMutualHinting,
    UseAndObservation,
}

impl fmt::Display for InterfaceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterfaceClass::Pipe => "pipe",
            InterfaceClass::Observation => "observation",
            InterfaceClass::Operation => "operation",
            InterfaceClass::OperationWithExceptions => "operation-with-exceptions",
            InterfaceClass::RemoteOperation => "remote-operation",
            InterfaceClass::ProtocolMutualHinting => "protocol-mutual-hinting",
            InterfaceClass::UseAndObservation => "use-and-observation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("profiles cannot be classified: {rule}")]
    UnclassifiableProfile { rule: String },
}

/// Classifies the interface between two endpoints.
pub fn classify_interface(
    a: &EndpointProfile,
    b: &EndpointProfile,
    channels: &ChannelTopology,
    style: OperationStyle,
) -> Result<InterfaceClass, ClassifyError> {
    let rule = |text: &str| ClassifyError::UnclassifiableProfile {
        rule: text.to_string(),
    };
    let direction = channels
        .direction()
        .ok_or_else(|| rule("no channels between the endpoints"))?;
    if a.direction != direction || b.direction != direction {
        return Err(rule(
            "declared endpoint directions disagree with the channel topology",
        ));
    }

    match direction {
        InterfaceDirection::Unidirectional => {
            // Backward communication is irrelevant, so synchronicity is
            // disregarded. A deterministic receiver makes the coupling a
            // pipe between simple systems; otherwise the sender assumes
            // nothing about the receiver and merely lets it observe.
            let receiver = if channels.a_to_b > 0 { b } else { a };
            Ok(match receiver.receiver_determinism {
                Determinism::Deterministic => InterfaceClass::Pipe,
                Determinism::Nondeterministic => InterfaceClass::Observation,
            })
        }
        InterfaceDirection::Bidirectional => {
            if a.triple() == b.triple() {
                classify_symmetric(a).map_err(|text| rule(&text))
            } else {
                classify_asymmetric(a, b, style).map_err(|text| rule(&text))
            }
        }
    }
}

fn classify_symmetric(profile: &EndpointProfile) -> Result<InterfaceClass, String> {
    if profile.receiver_determinism == Determinism::Deterministic {
        return Err(
            "all parties acting deterministically is only possible with an additional clock tick"
                .to_string(),
        );
    }
    if profile.receiver_statefulness == Statefulness::Stateless {
        return Err("reactive participants behave statefully".to_string());
    }
    if profile.sender_synchronicity == Synchronicity::Synchronous {
        return Err(
            "synchronous sending conflicts with spontaneous transitions of the partners"
                .to_string(),
        );
    }
    Ok(InterfaceClass::ProtocolMutualHinting)
}

fn classify_asymmetric(
    a: &EndpointProfile,
    b: &EndpointProfile,
    style: OperationStyle,
) -> Result<InterfaceClass, String> {
    let user_uses = |user: &EndpointProfile, used: &EndpointProfile| {
        user.sender_synchronicity == Synchronicity::Synchronous
            && used.receiver_determinism == Determinism::Deterministic
    };
    match (user_uses(a, b), user_uses(b, a)) {
        (true, true) => Err("the use direction is ambiguous: both sides qualify".to_string()),
        (false, false) => Err(
            "asymmetric interaction without a synchronous user of a deterministic receiver"
                .to_string(),
        ),
        _ => Ok(match style {
            OperationStyle::Call => InterfaceClass::Operation,
            OperationStyle::CallWithExceptions => InterfaceClass::OperationWithExceptions,
            OperationStyle::RemoteCall => InterfaceClass::RemoteOperation,
            OperationStyle::CallPlusObservation => InterfaceClass::UseAndObservation,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerRelation {
    Horizontal,
    Vertical,
    Undirected,
}

impl fmt::Display for LayerRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerRelation::Horizontal => "horizontal",
            LayerRelation::Vertical => "vertical",
            LayerRelation::Undirected => "undirected",
        })
    }
}

/// The layer verdict of an interface class: calls step into a lower layer,
/// mutual hinting stays on eye level, unidirectional flows decide nothing.
pub fn classify_layer_relation(class: InterfaceClass) -> LayerRelation {
    match class {
        InterfaceClass::Operation
        | InterfaceClass::OperationWithExceptions
        | InterfaceClass::RemoteOperation
        | InterfaceClass::UseAndObservation => LayerRelation::Vertical,
        InterfaceClass::ProtocolMutualHinting => LayerRelation::Horizontal,
        InterfaceClass::Pipe | InterfaceClass::Observation => LayerRelation::Undirected,
    }
}

/// Derives the receiver dimensions of a profile from a model; the sender
/// dimension is declared.
pub fn profile_from_model(
    ts: &ValidatedSystem,
    sender: Synchronicity,
) -> EndpointProfile {
    EndpointProfile {
        receiver_determinism: if ts.is_deterministic() {
            Determinism::Deterministic
        } else {
            Determinism::Nondeterministic
        },
        receiver_statefulness: if ts.is_stateless() {
            Statefulness::Stateless
        } else {
            Statefulness::Stateful
        },
        sender_synchronicity: sender,
        direction: if !ts.input_ports().is_empty() && !ts.output_ports().is_empty() {
            InterfaceDirection::Bidirectional
        } else {
            InterfaceDirection::Unidirectional
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::fixtures::{echo, tank, train};

    fn profile(
        det: Determinism,
        st: Statefulness,
        sync: Synchronicity,
        dir: InterfaceDirection,
    ) -> EndpointProfile {
        EndpointProfile {
            receiver_determinism: det,
            receiver_statefulness: st,
            sender_synchronicity: sync,
            direction: dir,
        }
    }

    const BIDI: ChannelTopology = ChannelTopology { a_to_b: 1, b_to_a: 1 };

    #[test]
    fn mutual_hinting_is_the_symmetric_protocol_class() {
        let p = profile(
            Determinism::Nondeterministic,
            Statefulness::Stateful,
            Synchronicity::Asynchronous,
            InterfaceDirection::Bidirectional,
        );
        let class = classify_interface(&p, &p, &BIDI, OperationStyle::Call).unwrap();
        assert_eq!(class, InterfaceClass::ProtocolMutualHinting);
        assert_eq!(classify_layer_relation(class), LayerRelation::Horizontal);
    }

    #[test]
    fn synchronous_caller_of_deterministic_receiver_is_an_operation() {
        let user = profile(
            Determinism::Nondeterministic,
            Statefulness::Stateful,
            Synchronicity::Synchronous,
            InterfaceDirection::Bidirectional,
        );
        let used = profile(
            Determinism::Deterministic,
            Statefulness::Stateful,
            Synchronicity::Asynchronous,
            InterfaceDirection::Bidirectional,
        );
        let class = classify_interface(&user, &used, &BIDI, OperationStyle::Call).unwrap();
        assert_eq!(class, InterfaceClass::Operation);
        assert_eq!(classify_layer_relation(class), LayerRelation::Vertical);

        let with_exc =
            classify_interface(&user, &used, &BIDI, OperationStyle::CallWithExceptions).unwrap();
        assert_eq!(with_exc, InterfaceClass::OperationWithExceptions);
        let remote = classify_interface(&user, &used, &BIDI, OperationStyle::RemoteCall).unwrap();
        assert_eq!(remote, InterfaceClass::RemoteOperation);
        let with_obs =
            classify_interface(&user, &used, &BIDI, OperationStyle::CallPlusObservation).unwrap();
        assert_eq!(with_obs, InterfaceClass::UseAndObservation);
        assert_eq!(classify_layer_relation(with_obs), LayerRelation::Vertical);
    }

    #[test]
    fn symmetric_all_deterministic_is_ruled_out() {
        let p = profile(
            Determinism::Deterministic,
            Statefulness::Stateful,
            Synchronicity::Synchronous,
            InterfaceDirection::Bidirectional,
        );
        let err = classify_interface(&p, &p, &BIDI, OperationStyle::Call).unwrap_err();
        let ClassifyError::UnclassifiableProfile { rule } = err;
        assert!(rule.contains("clock tick"));
    }

    #[test]
    fn unidirectional_classes_and_layer_verdicts() {
        let uni = |det| {
            profile(
                det,
                Statefulness::Stateful,
                Synchronicity::Asynchronous,
                InterfaceDirection::Unidirectional,
            )
        };
        let one_way = ChannelTopology { a_to_b: 1, b_to_a: 0 };
        let pipe = classify_interface(
            &uni(Determinism::Deterministic),
            &uni(Determinism::Deterministic),
            &one_way,
            OperationStyle::Call,
        )
        .unwrap();
        assert_eq!(pipe, InterfaceClass::Pipe);
        assert_eq!(classify_layer_relation(pipe), LayerRelation::Undirected);

        let obs = classify_interface(
            &uni(Determinism::Deterministic),
            &uni(Determinism::Nondeterministic),
            &one_way,
            OperationStyle::Call,
        )
        .unwrap();
        assert_eq!(obs, InterfaceClass::Observation);
        assert_eq!(classify_layer_relation(obs), LayerRelation::Undirected);
    }

    #[test]
    fn exhaustive_rule_table_is_total_and_never_horizontal_for_asymmetric_pairs() {
        let dets = [Determinism::Deterministic, Determinism::Nondeterministic];
        let stats = [Statefulness::Stateless, Statefulness::Stateful];
        let syncs = [Synchronicity::Synchronous, Synchronicity::Asynchronous];
        let styles = [
            OperationStyle::Call,
            OperationStyle::CallWithExceptions,
            OperationStyle::RemoteCall,
            OperationStyle::CallPlusObservation,
        ];
        let topologies = [
            ChannelTopology { a_to_b: 1, b_to_a: 0 },
            ChannelTopology { a_to_b: 0, b_to_a: 1 },
            BIDI,
        ];
        let mut symmetric_ok = 0;
        let mut total = 0;
        for (&da, &sa, &ya) in iproduct(&dets, &stats, &syncs) {
            for (&db, &sb, &yb) in iproduct(&dets, &stats, &syncs) {
                for topology in &topologies {
                    let dir = topology.direction().unwrap();
                    let a = profile(da, sa, ya, dir);
                    let b = profile(db, sb, yb, dir);
                    for style in &styles {
                        total += 1;
                        match classify_interface(&a, &b, topology, *style) {
                            Ok(class) => {
                                if class == InterfaceClass::ProtocolMutualHinting {
                                    assert_eq!(a.triple(), b.triple());
                                    symmetric_ok += 1;
                                }
                                if a.triple() != b.triple()
                                    && dir == InterfaceDirection::Bidirectional
                                {
                                    assert_ne!(
                                        classify_layer_relation(class),
                                        LayerRelation::Horizontal
                                    );
                                }
                            }
                            Err(ClassifyError::UnclassifiableProfile { rule }) => {
                                assert!(!rule.is_empty());
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(total, 8 * 8 * 3 * 4);
        // Exactly one symmetric triple classifies, whatever the style.
        assert_eq!(symmetric_ok, 4);
    }

    fn iproduct<'a, A, B, C>(
        a: &'a [A],
        b: &'a [B],
        c: &'a [C],
    ) -> impl Iterator<Item = (&'a A, &'a B, &'a C)> {
        a.iter()
            .flat_map(move |x| b.iter().flat_map(move |y| c.iter().map(move |z| (x, y, z))))
    }

    #[test]
    fn direction_mismatch_is_unclassifiable() {
        let p = profile(
            Determinism::Nondeterministic,
            Statefulness::Stateful,
            Synchronicity::Asynchronous,
            InterfaceDirection::Unidirectional,
        );
        let err = classify_interface(&p, &p, &BIDI, OperationStyle::Call).unwrap_err();
        let ClassifyError::UnclassifiableProfile { rule } = err;
        assert!(rule.contains("disagree"));
    }

    #[test]
    fn profiles_from_models_match_the_core_analyses() {
        let train = profile_from_model(&train("t1"), Synchronicity::Asynchronous);
        assert_eq!(train.receiver_determinism, Determinism::Deterministic);
        assert_eq!(train.receiver_statefulness, Statefulness::Stateful);
        assert_eq!(train.sender_synchronicity, Synchronicity::Asynchronous);
        assert_eq!(train.direction, InterfaceDirection::Bidirectional);

        let echo = profile_from_model(&echo(), Synchronicity::Synchronous);
        assert_eq!(echo.receiver_determinism, Determinism::Deterministic);
        assert_eq!(echo.receiver_statefulness, Statefulness::Stateless);

        let tank = profile_from_model(&tank(), Synchronicity::Synchronous);
        assert_eq!(tank.receiver_determinism, Determinism::Deterministic);
        assert_eq!(tank.receiver_statefulness, Statefulness::Stateful);
    }
}
