//! Domain model: states, actions and the predicate registry.
//!
//! Everything in here is immutable once loaded and is shared read-only
//! between the rule engine, the builder, orchestration and the service.

mod io;
mod predicate;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

pub use io::{
    load_actions, load_predicates, load_states, parse_actions, parse_predicates, parse_states, read_jsonl, write_jsonl,
    write_states, LoadError,
};
pub use predicate::{ArgSlot, EvalError, Evaluator, PredicateRegistry, PredicateSpec, RegistryError};

/// A scalar feature value or predicate argument.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(OrderedFloat<f64>),
    Str(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(f.0),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// JSON literal form, used by the canonical rule text.
    pub fn to_json_literal(&self) -> String {
        serde_json::to_string(self).expect("scalar values always serialize")
    }

    /// Numeric equality treats `3` and `3.0` as the same value.
    pub fn loosely_eq(&self, other: &Value) -> bool {
        match (self.as_f64(), other.as_f64()) {
            (Some(a), Some(b)) => a == b,
            _ => self == other,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{}", x.0),
            Value::Str(s) => f.write_str(s),
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

/// One situation the agent can encounter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub state_id: String,
    pub level: u32,
    pub features: BTreeMap<String, Value>,
    /// Display payload forwarded verbatim to clients.
    pub render: String,
}

impl State {
    /// Looks up a feature; `level` falls back to the dedicated field.
    pub fn feature(&self, name: &str) -> Option<Value> {
        match self.features.get(name) {
            Some(v) => Some(v.clone()),
            None if name == "level" => Some(Value::Int(self.level as i64)),
            None => None,
        }
    }
}

/// A candidate intervention plus the one state where it is known to be safe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub action_id: String,
    pub text: String,
    /// `None` only for fake-gold actions.
    pub known_valid_state: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_fake_gold: bool,
}

/// Indexed, immutable collection of states.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateSet {
    states: Vec<State>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StateSetError {
    #[error("duplicate state id `{0}`")]
    DuplicateId(String),
    #[error("state `{0}` has no features")]
    NoFeatures(String),
    #[error("no candidate states to pick an exemplar from")]
    EmptyCandidates,
    #[error("unknown state `{0}`")]
    UnknownState(String),
}

impl StateSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_states(states: impl IntoIterator<Item = State>) -> Result<Self, StateSetError> {
        let mut set = StateSet::new();
        for s in states {
            set.insert(s)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, state: State) -> Result<(), StateSetError> {
        if state.features.is_empty() {
            return Err(StateSetError::NoFeatures(state.state_id));
        }
        if self.index.contains_key(&state.state_id) {
            return Err(StateSetError::DuplicateId(state.state_id));
        }
        self.index.insert(state.state_id.clone(), self.states.len());
        self.states.push(state);
        Ok(())
    }

    pub fn get(&self, state_id: &str) -> Option<&State> {
        self.index.get(state_id).map(|&i| &self.states[i])
    }

    pub fn contains(&self, state_id: &str) -> bool {
        self.index.contains_key(state_id)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// States in load order.
    pub fn iter(&self) -> impl Iterator<Item = &State> {
        self.states.iter()
    }

    pub fn as_slice(&self) -> &[State] {
        &self.states
    }

    /// Picks a representative state: candidates are sorted by id and the
    /// cursor wraps around, so incrementing it pages through all of them.
    pub fn exemplar(&self, candidates: &[String], cursor: usize) -> Result<&State, StateSetError> {
        let id = exemplar_id(candidates, cursor)?;
        self.get(id).ok_or_else(|| StateSetError::UnknownState(id.to_string()))
    }
}

/// Deterministic exemplar choice over raw ids.
pub fn exemplar_id(candidates: &[String], cursor: usize) -> Result<&str, StateSetError> {
    if candidates.is_empty() {
        return Err(StateSetError::EmptyCandidates);
    }
    let mut sorted: Vec<&String> = candidates.iter().collect();
    sorted.sort();
    Ok(sorted[cursor % sorted.len()].as_str())
}

/// Actions indexed by id.
#[derive(Debug, Clone, Default)]
pub struct ActionCatalog {
    actions: Vec<ActionSpec>,
    index: HashMap<String, usize>,
}

impl ActionCatalog {
    pub fn new(actions: Vec<ActionSpec>) -> Self {
        let index = actions
            .iter()
            .enumerate()
            .map(|(i, a)| (a.action_id.clone(), i))
            .collect();
        ActionCatalog { actions, index }
    }

    pub fn get(&self, action_id: &str) -> Option<&ActionSpec> {
        self.index.get(action_id).map(|&i| &self.actions[i])
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ActionSpec> {
        self.actions.iter()
    }

    /// Actions that have a known-valid state (everything but fake gold).
    pub fn real(&self) -> impl Iterator<Item = &ActionSpec> {
        self.actions.iter().filter(|a| !a.is_fake_gold)
    }
}
