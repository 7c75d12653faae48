//! The closed predicate language shared by partition conditions, safety
//! predicates and while-composition guards.
//!
//! Grammar:
//!
//! ```text
//! pred    := term ("or" term)*
//! term    := factor ("and" factor)*
//! factor  := "not" factor | "(" pred ")" | "true" | atom
//! atom    := operand cmp operand
//! operand := "rest" "." NAME | "prm" "." NAME | NAME | INT
//! cmp     := "=" | "!=" | "<" | "<="
//! ```
//!
//! The same syntax is evaluated in three contexts: over (rest-state fields,
//! input parameters), over product states (`role = state` atoms), and over
//! output characters (`out = name`, or numeric comparison against the
//! character's trailing integer).

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::system::{StateId, Symbol};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredicateError {
    #[error("predicate parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("atom `{atom}` is not applicable in this context: {reason}")]
    NotApplicable { atom: String, reason: String },
    #[error("unknown role `{role}` in predicate")]
    UnknownRole { role: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Operand {
    /// A field of the rest part of a partitioned state.
    RestField(String),
    /// A parameter of the incoming document.
    Param(String),
    /// A bare identifier: a role name, state name or character name,
    /// depending on evaluation context.
    Ident(String),
    Int(i64),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::RestField(n) => write!(f, "rest.{n}"),
            Operand::Param(n) => write!(f, "prm.{n}"),
            Operand::Ident(n) => write!(f, "{n}"),
            Operand::Int(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pred {
    True,
    Atom {
        lhs: Operand,
        op: CmpOp,
        rhs: Operand,
    },
    Not(Box<Pred>),
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
}

impl fmt::Display for Pred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pred::True => f.write_str("true"),
            Pred::Atom { lhs, op, rhs } => write!(f, "{lhs} {op} {rhs}"),
            Pred::Not(p) => write!(f, "not({p})"),
            Pred::And(a, b) => write!(f, "({a} and {b})"),
            Pred::Or(a, b) => write!(f, "({a} or {b})"),
        }
    }
}

impl Pred {
    pub fn atom(lhs: Operand, op: CmpOp, rhs: Operand) -> Pred {
        Pred::Atom { lhs, op, rhs }
    }

    /// Evaluation over rest-state fields and input parameters. Missing
    /// fields or non-numeric operands make the atom false rather than
    /// failing: a condition that cannot observe its operands cannot hold.
    pub fn eval_numeric(
        &self,
        rest: &BTreeMap<String, i64>,
        prm: &BTreeMap<String, i64>,
    ) -> bool {
        match self {
            Pred::True => true,
            Pred::Not(p) => !p.eval_numeric(rest, prm),
            Pred::And(a, b) => a.eval_numeric(rest, prm) && b.eval_numeric(rest, prm),
            Pred::Or(a, b) => a.eval_numeric(rest, prm) || b.eval_numeric(rest, prm),
            Pred::Atom { lhs, op, rhs } => {
                let value = |o: &Operand| -> Option<i64> {
                    match o {
                        Operand::RestField(n) => rest.get(n).copied(),
                        Operand::Param(n) => prm.get(n).copied(),
                        Operand::Int(v) => Some(*v),
                        Operand::Ident(_) => None,
                    }
                };
                match (value(lhs), value(rhs)) {
                    (Some(l), Some(r)) => apply(*op, l, r),
                    _ => false,
                }
            }
        }
    }

    /// Evaluation over a product state: atoms are `role = state` or
    /// `role != state` with both sides identifiers.
    pub fn eval_product(
        &self,
        assignment: &BTreeMap<String, StateId>,
    ) -> Result<bool, PredicateError> {
        match self {
            Pred::True => Ok(true),
            Pred::Not(p) => Ok(!p.eval_product(assignment)?),
            Pred::And(a, b) => Ok(a.eval_product(assignment)? && b.eval_product(assignment)?),
            Pred::Or(a, b) => Ok(a.eval_product(assignment)? || b.eval_product(assignment)?),
            Pred::Atom { lhs, op, rhs } => match (lhs, op, rhs) {
                (Operand::Ident(role), CmpOp::Eq | CmpOp::Ne, Operand::Ident(state)) => {
                    let actual = assignment
                        .get(role)
                        .ok_or_else(|| PredicateError::UnknownRole { role: role.clone() })?;
                    let eq = actual.as_str() == state;
                    Ok(if *op == CmpOp::Eq { eq } else { !eq })
                }
                _ => Err(PredicateError::NotApplicable {
                    atom: format!("{lhs} {op} {rhs}"),
                    reason: "product-state predicates compare a role to a state".into(),
                }),
            },
        }
    }

    /// Evaluation over an output character: `out = name` compares the
    /// character name, numeric comparisons use the character's trailing
    /// integer (for example `c10` has value 10). An empty output makes every
    /// atom false.
    pub fn eval_output(&self, output: Option<&Symbol>) -> Result<bool, PredicateError> {
        match self {
            Pred::True => Ok(true),
            Pred::Not(p) => Ok(!p.eval_output(output)?),
            Pred::And(a, b) => Ok(a.eval_output(output)? && b.eval_output(output)?),
            Pred::Or(a, b) => Ok(a.eval_output(output)? || b.eval_output(output)?),
            Pred::Atom { lhs, op, rhs } => {
                let sym = match output {
                    Some(sym) => sym,
                    None => return Ok(false),
                };
                match (lhs, op, rhs) {
                    (Operand::Ident(key), CmpOp::Eq | CmpOp::Ne, Operand::Ident(name))
                        if key == "out" =>
                    {
                        let eq = sym.character.as_str() == name;
                        Ok(if *op == CmpOp::Eq { eq } else { !eq })
                    }
                    (Operand::Ident(key), op, Operand::Int(rhs)) if key == "out" => {
                        let value = trailing_int(sym.character.as_str()).ok_or_else(|| {
                            PredicateError::NotApplicable {
                                atom: format!("out {op} {rhs}"),
                                reason: format!(
                                    "character `{}` has no trailing integer",
                                    sym.character
                                ),
                            }
                        })?;
                        Ok(apply(*op, value, *rhs))
                    }
                    _ => Err(PredicateError::NotApplicable {
                        atom: format!("{lhs} {op} {rhs}"),
                        reason: "output predicates compare `out` to a name or integer".into(),
                    }),
                }
            }
        }
    }
}

fn apply(op: CmpOp, l: i64, r: i64) -> bool {
    match op {
        CmpOp::Eq => l == r,
        CmpOp::Ne => l != r,
        CmpOp::Lt => l < r,
        CmpOp::Le => l <= r,
    }
}

/// Trailing integer value of a character name, e.g. `c10` -> 10.
pub fn trailing_int(name: &str) -> Option<i64> {
    let digits: String = name
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    if digits.is_empty() {
        None
    } else {
        digits.parse().ok()
    }
}

/// Parses the predicate language.
pub fn parse_pred(text: &str) -> Result<Pred, PredicateError> {
    let mut parser = PredParser {
        chars: text.char_indices().peekable(),
        text,
    };
    let pred = parser.pred()?;
    parser.skip_ws();
    if let Some(&(offset, _)) = parser.chars.peek() {
        return Err(PredicateError::Parse {
            offset,
            message: format!("unexpected trailing input `{}`", &text[offset..]),
        });
    }
    Ok(pred)
}

struct PredParser<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    text: &'a str,
}

impl<'a> PredParser<'a> {
    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some((_, c)) if c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn eat(&mut self, expected: char) -> Result<(), PredicateError> {
        self.skip_ws();
        match self.chars.next() {
            Some((_, c)) if c == expected => Ok(()),
            Some((offset, c)) => Err(PredicateError::Parse {
                offset,
                message: format!("expected `{expected}`, found `{c}`"),
            }),
            None => Err(PredicateError::Parse {
                offset: self.text.len(),
                message: format!("expected `{expected}`, found end of input"),
            }),
        }
    }

    fn word(&mut self) -> Option<String> {
        self.skip_ws();
        let mut out = String::new();
        while matches!(self.chars.peek(), Some((_, c)) if c.is_ascii_alphanumeric() || *c == '_')
        {
            out.push(self.chars.next().unwrap().1);
        }
        if out.is_empty() {
            None
        } else {
            Some(out)
        }
    }

    fn peek_word(&mut self) -> Option<String> {
        self.skip_ws();
        let saved = self.chars.clone();
        let word = self.word();
        self.chars = saved;
        word
    }

    fn pred(&mut self) -> Result<Pred, PredicateError> {
        let mut lhs = self.term()?;
        while self.peek_word().as_deref() == Some("or") {
            self.word();
            let rhs = self.term()?;
            lhs = Pred::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Pred, PredicateError> {
        let mut lhs = self.factor()?;
        while self.peek_word().as_deref() == Some("and") {
            self.word();
            let rhs = self.factor()?;
            lhs = Pred::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Pred, PredicateError> {
        self.skip_ws();
        match self.peek_word().as_deref() {
            Some("not") => {
                self.word();
                // Accept both `not x` and `not(x)`.
                self.skip_ws();
                if matches!(self.chars.peek(), Some((_, '('))) {
                    self.chars.next();
                    let inner = self.pred()?;
                    self.eat(')')?;
                    return Ok(Pred::Not(Box::new(inner)));
                }
                return Ok(Pred::Not(Box::new(self.factor()?)));
            }
            Some("true") => {
                self.word();
                return Ok(Pred::True);
            }
            _ => {}
        }
        if matches!(self.chars.peek(), Some((_, '('))) {
            self.chars.next();
            let inner = self.pred()?;
            self.eat(')')?;
            return Ok(inner);
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Pred, PredicateError> {
        let lhs = self.operand()?;
        let op = self.cmp_op()?;
        let rhs = self.operand()?;
        Ok(Pred::Atom { lhs, op, rhs })
    }

    fn operand(&mut self) -> Result<Operand, PredicateError> {
        self.skip_ws();
        if matches!(self.chars.peek(), Some((_, c)) if c.is_ascii_digit() || *c == '-') {
            let mut out = String::new();
            if matches!(self.chars.peek(), Some((_, '-'))) {
                out.push(self.chars.next().unwrap().1);
            }
            while matches!(self.chars.peek(), Some((_, c)) if c.is_ascii_digit()) {
                out.push(self.chars.next().unwrap().1);
            }
            let offset = self.offset();
            return out.parse().map(Operand::Int).map_err(|_| PredicateError::Parse {
                offset,
                message: format!("bad integer `{out}`"),
            });
        }
        let offset = self.offset();
        let word = self.word().ok_or_else(|| PredicateError::Parse {
            offset,
            message: "expected an operand".into(),
        })?;
        if matches!(self.chars.peek(), Some((_, '.'))) && (word == "rest" || word == "prm") {
            self.chars.next();
            let offset = self.offset();
            let field = self.word().ok_or_else(|| PredicateError::Parse {
                offset,
                message: format!("expected a field name after `{word}.`"),
            })?;
            return Ok(if word == "rest" {
                Operand::RestField(field)
            } else {
                Operand::Param(field)
            });
        }
        Ok(Operand::Ident(word))
    }

    fn cmp_op(&mut self) -> Result<CmpOp, PredicateError> {
        self.skip_ws();
        let offset = self.offset();
        match self.chars.next() {
            Some((_, '=')) => Ok(CmpOp::Eq),
            Some((_, '!')) => {
                self.eat('=')?;
                Ok(CmpOp::Ne)
            }
            Some((_, '<')) => {
                if matches!(self.chars.peek(), Some((_, '='))) {
                    self.chars.next();
                    Ok(CmpOp::Le)
                } else {
                    Ok(CmpOp::Lt)
                }
            }
            other => Err(PredicateError::Parse {
                offset,
                message: format!(
                    "expected a comparison operator, found {:?}",
                    other.map(|(_, c)| c)
                ),
            }),
        }
    }

    fn offset(&mut self) -> usize {
        self.chars.peek().map(|&(o, _)| o).unwrap_or(self.text.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_boolean_structure() {
        let p = parse_pred("not(t1=bridge and t2=bridge)").unwrap();
        match p {
            Pred::Not(inner) => assert!(matches!(*inner, Pred::And(_, _))),
            other => panic!("expected Not, got {other:?}"),
        }
    }

    #[test]
    fn evaluates_product_atoms() {
        let p = parse_pred("not(t1=bridge and t2=bridge)").unwrap();
        let mut assignment = BTreeMap::new();
        assignment.insert("t1".to_string(), StateId::new("bridge"));
        assignment.insert("t2".to_string(), StateId::new("away"));
        assert!(p.eval_product(&assignment).unwrap());
        assignment.insert("t2".to_string(), StateId::new("bridge"));
        assert!(!p.eval_product(&assignment).unwrap());
    }

    #[test]
    fn unknown_role_is_an_error() {
        let p = parse_pred("ghost=idle").unwrap();
        let err = p.eval_product(&BTreeMap::new()).unwrap_err();
        assert!(matches!(err, PredicateError::UnknownRole { .. }));
    }

    #[test]
    fn evaluates_numeric_conditions() {
        let p = parse_pred("rest.x < 2 and prm.amount = 1").unwrap();
        let rest: BTreeMap<_, _> = [("x".to_string(), 1)].into();
        let prm: BTreeMap<_, _> = [("amount".to_string(), 1)].into();
        assert!(p.eval_numeric(&rest, &prm));
        let rest: BTreeMap<_, _> = [("x".to_string(), 2)].into();
        assert!(!p.eval_numeric(&rest, &prm));
    }

    #[test]
    fn missing_field_makes_the_atom_false() {
        let p = parse_pred("rest.x = 0").unwrap();
        assert!(!p.eval_numeric(&BTreeMap::new(), &BTreeMap::new()));
    }

    #[test]
    fn evaluates_output_predicates() {
        let p = parse_pred("out < 10").unwrap();
        let c7 = Symbol::new("num", "c7");
        let c10 = Symbol::new("num", "c10");
        assert!(p.eval_output(Some(&c7)).unwrap());
        assert!(!p.eval_output(Some(&c10)).unwrap());
        assert!(!p.eval_output(None).unwrap());

        let name = parse_pred("out = c7").unwrap();
        assert!(name.eval_output(Some(&c7)).unwrap());
        assert!(!name.eval_output(Some(&c10)).unwrap());
    }

    #[test]
    fn rejects_trailing_garbage() {
        assert!(matches!(
            parse_pred("true banana"),
            Err(PredicateError::Parse { .. })
        ));
    }
}
