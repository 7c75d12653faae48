//! Finite discrete I/O-transition systems coupled by idealized channels.
//!
//! The crate models systems as labeled transition relations over named,
//! alphabet-typed input and output ports. On top of that base it provides
//! a meaning calculus for input characters ([`semantics`]), meaning-compatible
//! equivalence partitions of transition relations ([`partition`]), channel
//! coupling and the four simple-system composition operators ([`composition`]),
//! protocol verification with replayable witness traces ([`protocol`]), and
//! interface/layer classification ([`classify`]).

pub mod classify;
pub mod composition;
pub mod partition;
pub mod predicate;
pub mod protocol;
pub mod semantics;
pub mod system;

pub use system::{
    validate_system, Character, Port, ReactivityReport, StateId, Symbol, SystemDef, SystemError,
    Transition, ValidatedSystem,
};
