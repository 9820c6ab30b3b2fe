//! Boolean constraint rules over domain predicates.
//!
//! A rule is either one of the two constants or a binary tree of literals
//! joined by AND / OR. Negation only exists on literals.

mod dnf;
mod text;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{EvalError, PredicateRegistry, State, StateSet, Value};

pub use dnf::{equivalent, to_dnf, ConstantRule, DnfError, DnfExpr, EquivalenceError};
pub use text::{parse_rule, ParseError};

/// Maximum number of literals in one rule.
pub const LENGTH_LIMIT: usize = 16;

/// A predicate applied to concrete arguments, possibly negated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub predicate_id: String,
    pub bindings: BTreeMap<String, Value>,
    pub negated: bool,
}

impl Literal {
    pub fn new(predicate_id: impl Into<String>) -> Self {
        Literal {
            predicate_id: predicate_id.into(),
            bindings: BTreeMap::new(),
            negated: false,
        }
    }

    pub fn with(mut self, slot: impl Into<String>, value: impl Into<Value>) -> Self {
        self.bindings.insert(slot.into(), value.into());
        self
    }

    pub fn negate(mut self) -> Self {
        self.negated = !self.negated;
        self
    }

    /// The literal with polarity stripped; two literals over the same atom
    /// are the same boolean variable.
    pub fn atom(&self) -> (&str, &BTreeMap<String, Value>) {
        (&self.predicate_id, &self.bindings)
    }

    pub fn eval(&self, state: &State, registry: &PredicateRegistry) -> Result<bool, EvalError> {
        Ok(registry.evaluate(&self.predicate_id, &self.bindings, state)? != self.negated)
    }

    pub fn display(&self, registry: &PredicateRegistry) -> Option<String> {
        registry.display(&self.predicate_id, &self.bindings, self.negated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Logical {
    And,
    Or,
}

impl fmt::Display for Logical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Logical::And => "AND",
            Logical::Or => "OR",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Literal(Literal),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
}

impl Node {
    pub fn lit(l: Literal) -> Self {
        Node::Literal(l)
    }

    pub fn and(a: Node, b: Node) -> Self {
        Node::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Node, b: Node) -> Self {
        Node::Or(Box::new(a), Box::new(b))
    }

    pub fn join(op: Logical, a: Node, b: Node) -> Self {
        match op {
            Logical::And => Node::and(a, b),
            Logical::Or => Node::or(a, b),
        }
    }

    pub fn literals(&self) -> Vec<&Literal> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a Literal>) {
        match self {
            Node::Literal(l) => out.push(l),
            Node::And(a, b) | Node::Or(a, b) => {
                a.collect(out);
                b.collect(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Literal(_) => 1,
            Node::And(a, b) | Node::Or(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Evaluates with literal values supplied by `leaf`.
    pub fn eval_with<E>(&self, leaf: &mut impl FnMut(&Literal) -> Result<bool, E>) -> Result<bool, E> {
        Ok(match self {
            Node::Literal(l) => leaf(l)?,
            Node::And(a, b) => a.eval_with(leaf)? && b.eval_with(leaf)?,
            Node::Or(a, b) => a.eval_with(leaf)? || b.eval_with(leaf)?,
        })
    }
}

/// A constraint for one action: which states it may be applied in.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RuleExpr {
    AllStates,
    NoStates,
    Expr(Node),
}

impl RuleExpr {
    pub fn literal_count(&self) -> usize {
        match self {
            RuleExpr::Expr(n) => n.literals().len(),
            _ => 0,
        }
    }

    pub fn literals(&self) -> Vec<&Literal> {
        match self {
            RuleExpr::Expr(n) => n.literals(),
            _ => Vec::new(),
        }
    }

    pub fn eval_with<E>(&self, mut leaf: impl FnMut(&Literal) -> Result<bool, E>) -> Result<bool, E> {
        match self {
            RuleExpr::AllStates => Ok(true),
            RuleExpr::NoStates => Ok(false),
            RuleExpr::Expr(n) => n.eval_with(&mut leaf),
        }
    }
}

impl From<Node> for RuleExpr {
    fn from(n: Node) -> Self {
        RuleExpr::Expr(n)
    }
}

pub fn eval_rule(rule: &RuleExpr, state: &State, registry: &PredicateRegistry) -> Result<bool, EvalError> {
    rule.eval_with(|l| l.eval(state, registry))
}

/// States a rule includes and excludes, each sorted by state id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub included: Vec<String>,
    pub excluded: Vec<String>,
}

pub fn partition(rule: &RuleExpr, states: &StateSet, registry: &PredicateRegistry) -> Result<Partition, EvalError> {
    let mut included = Vec::new();
    let mut excluded = Vec::new();
    for s in states.iter() {
        if eval_rule(rule, s, registry)? {
            included.push(s.state_id.clone());
        } else {
            excluded.push(s.state_id.clone());
        }
    }
    included.sort();
    excluded.sort();
    Ok(Partition { included, excluded })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    #[error("unknown predicate `{predicate}`")]
    UnknownPredicate { predicate: String },
    #[error("predicate `{predicate}`: slot `{slot}` is not bound")]
    MissingBinding { predicate: String, slot: String },
    #[error("predicate `{predicate}` has no slot `{slot}`")]
    UnexpectedBinding { predicate: String, slot: String },
    #[error("predicate `{predicate}`: `{value}` is outside the domain of slot `{slot}`")]
    OutOfDomain {
        predicate: String,
        slot: String,
        value: String,
    },
    #[error("rule has {count} literals; the limit is {limit}")]
    TooLong { count: usize, limit: usize },
}

/// Checks literal well-formedness, argument domains and the length limit.
pub fn validate_rule(rule: &RuleExpr, registry: &PredicateRegistry) -> Result<(), Vec<Violation>> {
    let mut errs = Vec::new();
    let lits = rule.literals();
    for lit in &lits {
        check_literal(lit, registry, &mut errs);
    }
    if lits.len() > LENGTH_LIMIT {
        errs.push(Violation::TooLong {
            count: lits.len(),
            limit: LENGTH_LIMIT,
        });
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

pub(crate) fn check_literal(lit: &Literal, registry: &PredicateRegistry, errs: &mut Vec<Violation>) {
    let Some(spec) = registry.get(&lit.predicate_id) else {
        errs.push(Violation::UnknownPredicate {
            predicate: lit.predicate_id.clone(),
        });
        return;
    };
    for slot in &spec.arg_slots {
        match lit.bindings.get(&slot.name) {
            None => errs.push(Violation::MissingBinding {
                predicate: spec.predicate_id.clone(),
                slot: slot.name.clone(),
            }),
            Some(v) if !slot.domain.contains(v) => errs.push(Violation::OutOfDomain {
                predicate: spec.predicate_id.clone(),
                slot: slot.name.clone(),
                value: v.to_string(),
            }),
            Some(_) => {}
        }
    }
    for name in lit.bindings.keys() {
        if !spec.arg_slots.iter().any(|s| &s.name == name) {
            errs.push(Violation::UnexpectedBinding {
                predicate: spec.predicate_id.clone(),
                slot: name.clone(),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArgSlot, PredicateSpec};

    fn fixture() -> (StateSet, PredicateRegistry) {
        let mk = |id: &str, level: i64, bracket: bool| crate::model::State {
            state_id: id.into(),
            level: level as u32,
            features: BTreeMap::from([
                ("has_bracket".to_string(), Value::Bool(bracket)),
                ("level".to_string(), Value::Int(level)),
            ]),
            render: String::new(),
        };
        // truth of (has_bracket AND level >= 3), by hand:
        // d1: F/1 -> false, d2: T/2 -> false, d3: F/4 -> false, d4: T/5 -> true
        let states = StateSet::from_states([
            mk("d1", 1, false),
            mk("d2", 2, true),
            mk("d3", 4, false),
            mk("d4", 5, true),
        ])
        .unwrap();
        let reg = PredicateRegistry::new(vec![
            PredicateSpec {
                predicate_id: "has_bracket".into(),
                display_template: "has a bracket".into(),
                negated_display: "has no bracket".into(),
                arg_slots: vec![],
                evaluator_id: "is_true".into(),
                params: BTreeMap::from([("feature".to_string(), Value::from("has_bracket"))]),
            },
            PredicateSpec {
                predicate_id: "level_at_least".into(),
                display_template: "level >= {level}".into(),
                negated_display: "level < {level}".into(),
                arg_slots: vec![ArgSlot {
                    name: "level".into(),
                    domain: (1..=5).map(Value::Int).collect(),
                }],
                evaluator_id: "at_least".into(),
                params: BTreeMap::from([("feature".to_string(), Value::from("level"))]),
            },
        ])
        .unwrap();
        (states, reg)
    }

    fn bracket() -> Literal {
        Literal::new("has_bracket")
    }

    fn level(n: i64) -> Literal {
        Literal::new("level_at_least").with("level", n)
    }

    #[test]
    fn constants() {
        let (states, reg) = fixture();
        for s in states.iter() {
            assert!(eval_rule(&RuleExpr::AllStates, s, &reg).unwrap());
            assert!(!eval_rule(&RuleExpr::NoStates, s, &reg).unwrap());
        }
    }

    #[test]
    fn negated_literal_where_predicate_holds() {
        let (states, reg) = fixture();
        let d2 = states.get("d2").unwrap();
        let rule = RuleExpr::Expr(Node::lit(bracket().negate()));
        assert!(!eval_rule(&rule, d2, &reg).unwrap());
    }

    #[test]
    fn conjunction_truth_vector() {
        let (states, reg) = fixture();
        let rule = RuleExpr::Expr(Node::and(Node::lit(bracket()), Node::lit(level(3))));
        let got: Vec<bool> = states.iter().map(|s| eval_rule(&rule, s, &reg).unwrap()).collect();
        assert_eq!(got, vec![false, false, false, true]);
    }

    #[test]
    fn partition_single_literal() {
        let (states, reg) = fixture();
        let p = partition(&RuleExpr::Expr(Node::lit(bracket())), &states, &reg).unwrap();
        assert_eq!(p.included, vec!["d2", "d4"]);
        assert_eq!(p.excluded, vec!["d1", "d3"]);
    }

    #[test]
    fn validate_rejects_out_of_domain() {
        let (_, reg) = fixture();
        let rule = RuleExpr::Expr(Node::lit(level(9)));
        let errs = validate_rule(&rule, &reg).unwrap_err();
        assert!(matches!(errs[0], Violation::OutOfDomain { .. }));
        assert!(validate_rule(&RuleExpr::AllStates, &reg).is_ok());
    }

    #[test]
    fn validate_length_limit() {
        let (_, reg) = fixture();
        let mut node = Node::lit(bracket());
        for _ in 1..17 {
            node = Node::or(node, Node::lit(bracket()));
        }
        let rule = RuleExpr::Expr(node);
        assert_eq!(rule.literal_count(), 17);
        let errs = validate_rule(&rule, &reg).unwrap_err();
        assert_eq!(errs, vec![Violation::TooLong { count: 17, limit: 16 }]);
    }

    #[test]
    fn validate_flags_missing_and_unknown() {
        let (_, reg) = fixture();
        let rule = RuleExpr::Expr(Node::or(
            Node::lit(Literal::new("level_at_least")),
            Node::lit(Literal::new("ghost")),
        ));
        let errs = validate_rule(&rule, &reg).unwrap_err();
        assert_eq!(errs.len(), 2);
    }
}
