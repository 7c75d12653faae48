//! Cross-reference resolution: turns a parsed model into validated core
//! structures, reporting every dangling name with its source position.

use std::collections::{BTreeMap, BTreeSet};

use ism_core::composition::{Channel, Endpoint};
use ism_core::partition::{DocClassModel, DocParse, ModeProjection, PartitionSpec};
use ism_core::protocol::Protocol;
use ism_core::system::{validate_system, StateId, Symbol, ValidatedSystem};

use crate::ast::*;
use crate::{Diagnostic, Severity};

/// Everything a model file declares, in validated core form.
#[derive(Debug, Clone, Default)]
pub struct ResolvedModel {
    pub systems: BTreeMap<String, ValidatedSystem>,
    /// Document-class models, with the system each one belongs to.
    pub docclasses: BTreeMap<String, (String, DocClassModel)>,
    /// Named partitions, with the system each one belongs to.
    pub partitions: BTreeMap<String, (String, PartitionSpec)>,
    pub protocols: BTreeMap<String, Protocol>,
}

struct Resolver<'a> {
    file: &'a str,
    diagnostics: Vec<Diagnostic>,
}

impl Resolver<'_> {
    fn error(&mut self, span: Span, token: &str, message: String) {
        self.diagnostics.push(Diagnostic {
            severity: Severity::Error,
            file: self.file.to_string(),
            line: span.line,
            col: span.col,
            message,
            token: token.to_string(),
        });
    }
}

/// Resolves all declarations. Declarations with errors are dropped from the
/// result; everything else survives.
pub fn resolve(model: &ModelFile, file: &str) -> (ResolvedModel, Vec<Diagnostic>) {
    let mut r = Resolver {
        file,
        diagnostics: Vec::new(),
    };
    let mut resolved = ResolvedModel::default();

    for decl in &model.systems {
        if resolved.systems.contains_key(&decl.name.value) {
            r.error(
                decl.name.span,
                &decl.name.value,
                format!("duplicate system `{}`", decl.name.value),
            );
            continue;
        }
        if let Some(system) = resolve_system(&mut r, decl) {
            resolved.systems.insert(decl.name.value.clone(), system);
        }
    }

    for decl in &model.docclasses {
        if let Some((system, dcm)) = resolve_docclass(&mut r, decl, &resolved.systems) {
            if resolved
                .docclasses
                .insert(decl.name.value.clone(), (system, dcm))
                .is_some()
            {
                r.error(
                    decl.name.span,
                    &decl.name.value,
                    format!("duplicate docclass `{}`", decl.name.value),
                );
            }
        }
    }

    for decl in &model.partitions {
        if let Some((system, spec)) = resolve_partition(&mut r, decl, &resolved.systems) {
            if resolved
                .partitions
                .insert(decl.name.value.clone(), (system, spec))
                .is_some()
            {
                r.error(
                    decl.name.span,
                    &decl.name.value,
                    format!("duplicate partition `{}`", decl.name.value),
                );
            }
        }
    }

    for decl in &model.protocols {
        if let Some(protocol) = resolve_protocol(&mut r, decl, &resolved.systems) {
            if resolved
                .protocols
                .insert(decl.name.value.clone(), protocol)
                .is_some()
            {
                r.error(
                    decl.name.span,
                    &decl.name.value,
                    format!("duplicate protocol `{}`", decl.name.value),
                );
            }
        }
    }

    (resolved, r.diagnostics)
}

fn resolve_system(r: &mut Resolver<'_>, decl: &SystemDecl) -> Option<ValidatedSystem> {
    let mut ok = true;
    let states: BTreeSet<&str> = decl.states.iter().map(|s| s.value.as_str()).collect();
    let mut check_state = |r: &mut Resolver<'_>, state: &Spanned<String>, what: &str| {
        if !states.contains(state.value.as_str()) {
            r.error(
                state.span,
                &state.value,
                format!("undeclared state `{}` in {what}", state.value),
            );
            return false;
        }
        true
    };

    match &decl.initial {
        Some(initial) => {
            ok &= check_state(r, initial, "init");
        }
        None => {
            r.error(
                decl.name.span,
                &decl.name.value,
                format!("system `{}` has no `init` declaration", decl.name.value),
            );
            ok = false;
        }
    }
    for state in &decl.accepting {
        ok &= check_state(r, state, "accept");
    }

    let mut alphabets: BTreeMap<(&str, bool), BTreeSet<&str>> = BTreeMap::new();
    for (ports, is_input) in [(&decl.inputs, true), (&decl.outputs, false)] {
        for port in ports {
            let chars = port.alphabet.iter().map(|c| c.value.as_str()).collect();
            if alphabets
                .insert((port.name.value.as_str(), is_input), chars)
                .is_some()
            {
                r.error(
                    port.name.span,
                    &port.name.value,
                    format!("duplicate port `{}`", port.name.value),
                );
                ok = false;
            }
        }
    }

    for trans in &decl.transitions {
        ok &= check_state(r, &trans.from, "a transition");
        ok &= check_state(r, &trans.to, "a transition");
        for (io, is_input) in [(&trans.input, true), (&trans.output, false)] {
            if let IoDecl::Symbol { port, character } = io {
                match alphabets.get(&(port.value.as_str(), is_input)) {
                    None => {
                        let direction = if is_input { "input" } else { "output" };
                        r.error(
                            port.span,
                            &port.value,
                            format!("undeclared {direction} port `{}`", port.value),
                        );
                        ok = false;
                    }
                    Some(alphabet) if !alphabet.contains(character.value.as_str()) => {
                        r.error(
                            character.span,
                            &character.value,
                            format!(
                                "character `{}` is not in the alphabet of `{}`",
                                character.value, port.value
                            ),
                        );
                        ok = false;
                    }
                    Some(_) => {}
                }
            }
        }
    }

    if !ok {
        return None;
    }
    match validate_system(decl.to_def()) {
        Ok(system) => Some(system),
        Err(err) => {
            r.error(decl.name.span, &decl.name.value, err.to_string());
            None
        }
    }
}

fn resolve_docclass(
    r: &mut Resolver<'_>,
    decl: &DocClassDecl,
    systems: &BTreeMap<String, ValidatedSystem>,
) -> Option<(String, DocClassModel)> {
    let Some(system) = systems.get(&decl.system.value) else {
        r.error(
            decl.system.span,
            &decl.system.value,
            format!("unknown system `{}`", decl.system.value),
        );
        return None;
    };
    let mut ok = true;

    let mut parse = BTreeMap::new();
    for p in &decl.parses {
        let port = system
            .input_port(&p.port.value)
            .or_else(|| system.output_port(&p.port.value));
        match port {
            None => {
                r.error(
                    p.port.span,
                    &p.port.value,
                    format!("system `{}` has no port `{}`", system.name(), p.port.value),
                );
                ok = false;
            }
            Some(port) if !port.alphabet.contains(&p.character.value.as_str().into()) => {
                r.error(
                    p.character.span,
                    &p.character.value,
                    format!(
                        "character `{}` is not in the alphabet of `{}`",
                        p.character.value, p.port.value
                    ),
                );
                ok = false;
            }
            Some(_) => {
                parse.insert(
                    Symbol::new(p.port.value.clone(), p.character.value.clone()),
                    DocParse {
                        class: p.class.value.clone(),
                        params: p
                            .params
                            .iter()
                            .map(|(k, v)| (k.value.clone(), *v))
                            .collect(),
                    },
                );
            }
        }
    }

    let mut projection = ModeProjection::default();
    for m in &decl.modes {
        if !system.states().contains(&StateId::new(m.state.value.clone())) {
            r.error(
                m.state.span,
                &m.state.value,
                format!("undeclared state `{}`", m.state.value),
            );
            ok = false;
            continue;
        }
        projection.map.insert(
            StateId::new(m.state.value.clone()),
            (
                m.mode.value.clone(),
                m.rest.iter().map(|(k, v)| (k.value.clone(), *v)).collect(),
            ),
        );
    }

    let mut conditions = Vec::new();
    let mut seen = BTreeSet::new();
    for c in &decl.conditions {
        if !seen.insert(c.name.value.clone()) {
            r.error(
                c.name.span,
                &c.name.value,
                format!("duplicate condition `{}`", c.name.value),
            );
            ok = false;
            continue;
        }
        conditions.push((c.name.value.clone(), c.pred.clone()));
    }

    if !ok {
        return None;
    }
    let dcm = DocClassModel {
        parse,
        projection,
        conditions,
    };
    if let Err(err) = dcm.check() {
        r.error(decl.name.span, &decl.name.value, err.to_string());
        return None;
    }
    Some((decl.system.value.clone(), dcm))
}

fn resolve_partition(
    r: &mut Resolver<'_>,
    decl: &PartitionDecl,
    systems: &BTreeMap<String, ValidatedSystem>,
) -> Option<(String, PartitionSpec)> {
    let Some(system) = systems.get(&decl.system.value) else {
        r.error(
            decl.system.span,
            &decl.system.value,
            format!("unknown system `{}`", decl.system.value),
        );
        return None;
    };
    let mut ok = true;
    let mut classes = BTreeMap::new();
    for class in &decl.classes {
        let mut members = BTreeSet::new();
        for trans in &class.transitions {
            let wanted = trans.to_transition();
            match system.transitions().iter().position(|t| t == &wanted) {
                Some(ix) => {
                    members.insert(ix);
                }
                None => {
                    r.error(
                        trans.from.span,
                        &trans.from.value,
                        format!(
                            "`{wanted}` is not a transition of system `{}`",
                            system.name()
                        ),
                    );
                    ok = false;
                }
            }
        }
        if classes.insert(class.name.value.clone(), members).is_some() {
            r.error(
                class.name.span,
                &class.name.value,
                format!("duplicate class `{}`", class.name.value),
            );
            ok = false;
        }
    }
    if !ok {
        return None;
    }
    Some((decl.system.value.clone(), PartitionSpec::new(classes)))
}

fn resolve_protocol(
    r: &mut Resolver<'_>,
    decl: &ProtocolDecl,
    systems: &BTreeMap<String, ValidatedSystem>,
) -> Option<Protocol> {
    let mut ok = true;
    let mut roles = Vec::new();
    let mut role_names = BTreeSet::new();
    for role in &decl.roles {
        match systems.get(&role.value) {
            Some(system) => {
                if role_names.insert(role.value.clone()) {
                    roles.push(system.clone());
                } else {
                    r.error(
                        role.span,
                        &role.value,
                        format!("duplicate role `{}`", role.value),
                    );
                    ok = false;
                }
            }
            None => {
                r.error(
                    role.span,
                    &role.value,
                    format!("unknown system `{}` used as a role", role.value),
                );
                ok = false;
            }
        }
    }
    let mut channels = Vec::new();
    for channel in &decl.channels {
        for role in [&channel.from_role, &channel.to_role] {
            if !role_names.contains(&role.value) {
                r.error(
                    role.span,
                    &role.value,
                    format!("channel endpoint `{}` is not a role of this protocol", role.value),
                );
                ok = false;
            }
        }
        channels.push(Channel {
            from: Endpoint::new(channel.from_role.value.clone(), channel.from_port.value.clone()),
            to: Endpoint::new(channel.to_role.value.clone(), channel.to_port.value.clone()),
        });
    }
    if !ok {
        return None;
    }
    match Protocol::new(roles, channels) {
        Ok(protocol) => Some(protocol),
        Err(err) => {
            r.error(decl.name.span, &decl.name.value, err.to_string());
            None
        }
    }
}
