//! Line-delimited JSON readers and writers for the dataset files.
//!
//! Blank lines are ignored. Line numbers in errors are 1-based.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{ActionSpec, PredicateRegistry, PredicateSpec, RegistryError, State, StateSet, StateSetError};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: action `{action}` references unknown state `{state}`")]
    DanglingReference { line: usize, action: String, state: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

fn read(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses one JSON object per non-blank line, checking `required` keys first
/// so a missing key is reported by name rather than as a serde message.
pub fn read_jsonl<T: DeserializeOwned>(text: &str, required: &[&'static str]) -> Result<Vec<(usize, T)>, LoadError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(raw).map_err(|e| LoadError::Parse {
            line,
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| LoadError::Parse {
            line,
            message: "expected a JSON object".into(),
        })?;
        if let Some(field) = required.iter().find(|f| !obj.contains_key(**f)) {
            return Err(LoadError::MissingField { line, field });
        }
        let item = serde_json::from_value(value).map_err(|e| LoadError::Parse {
            line,
            message: e.to_string(),
        })?;
        out.push((line, item));
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(items: impl IntoIterator<Item = &'a T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_states(text: &str) -> Result<StateSet, LoadError> {
    let rows: Vec<(usize, State)> = read_jsonl(text, &["state_id", "level", "features", "render"])?;
    let mut set = StateSet::new();
    for (line, state) in rows {
        set.insert(state).map_err(|e| match e {
            StateSetError::DuplicateId(id) => LoadError::DuplicateId { line, id },
            other => LoadError::Invalid {
                line,
                message: other.to_string(),
            },
        })?;
    }
    Ok(set)
}

pub fn load_states(path: impl AsRef<Path>) -> Result<StateSet, LoadError> {
    parse_states(&read(path.as_ref())?)
}

pub fn write_states(states: &StateSet) -> String {
    write_jsonl(states.iter())
}

pub fn parse_actions(text: &str, states: &StateSet) -> Result<Vec<ActionSpec>, LoadError> {
    let rows: Vec<(usize, ActionSpec)> = read_jsonl(text, &["action_id", "text", "known_valid_state"])?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, action) in rows {
        if !seen.insert(action.action_id.clone()) {
            return Err(LoadError::DuplicateId {
                line,
                id: action.action_id,
            });
        }
        match (&action.known_valid_state, action.is_fake_gold) {
            (Some(s), false) if !states.contains(s) => {
                return Err(LoadError::DanglingReference {
                    line,
                    action: action.action_id.clone(),
                    state: s.clone(),
                })
            }
            (Some(_), false) | (None, true) => {}
            (None, false) => {
                return Err(LoadError::Invalid {
                    line,
                    message: format!("action `{}` has no known-valid state", action.action_id),
                })
            }
            (Some(_), true) => {
                return Err(LoadError::Invalid {
                    line,
                    message: format!("fake-gold action `{}` must not reference a state", action.action_id),
                })
            }
        }
        out.push(action);
    }
    Ok(out)
}

pub fn load_actions(path: impl AsRef<Path>, states: &StateSet) -> Result<Vec<ActionSpec>, LoadError> {
    parse_actions(&read(path.as_ref())?, states)
}

pub fn parse_predicates(text: &str) -> Result<PredicateRegistry, LoadError> {
    let rows: Vec<(usize, PredicateSpec)> = read_jsonl(
        text,
        &[
            "predicate_id",
            "display_template",
            "negated_display",
            "arg_slots",
            "evaluator_id",
        ],
    )?;
    Ok(PredicateRegistry::new(rows.into_iter().map(|(_, p)| p).collect())?)
}

pub fn load_predicates(path: impl AsRef<Path>) -> Result<PredicateRegistry, LoadError> {
    parse_predicates(&read(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const S1: &str = r#"{"state_id":"s1","level":1,"features":{"x":1},"render":"r1"}"#;
    const S2: &str = r#"{"state_id":"s2","level":2,"features":{"x":2},"render":"r2"}"#;

    #[test]
    fn empty_file_gives_empty_set() {
        assert!(parse_states("").unwrap().is_empty());
        assert!(parse_actions("\n\n", &StateSet::new()).unwrap().is_empty());
    }

    #[test]
    fn duplicate_state_ids() {
        let err = parse_states(&format!("{S1}\n{S1}\n")).unwrap_err();
        assert!(matches!(err, LoadError::DuplicateId { line: 2, ref id } if id == "s1"));
    }

    #[test]
    fn parse_error_carries_line() {
        let err = parse_states(&format!("{S1}\n\n{{oops\n")).unwrap_err();
        assert!(matches!(err, LoadError::Parse { line: 3, .. }));
    }

    #[test]
    fn missing_field_named() {
        let err = parse_states(r#"{"state_id":"s1","level":1,"features":{"x":1}}"#).unwrap_err();
        assert!(matches!(
            err,
            LoadError::MissingField {
                line: 1,
                field: "render"
            }
        ));
    }

    #[test]
    fn dangling_action_reference() {
        let states = parse_states(&format!("{S1}\n{S2}")).unwrap();
        let ok = r#"{"action_id":"a1","text":"t","known_valid_state":"s2"}"#;
        let bad = r#"{"action_id":"a2","text":"t","known_valid_state":"zzz"}"#;
        assert_eq!(parse_actions(ok, &states).unwrap().len(), 1);
        let err = parse_actions(&format!("{ok}\n{bad}"), &states).unwrap_err();
        assert!(matches!(err, LoadError::DanglingReference { line: 2, ref state, .. } if state == "zzz"));
    }

    #[test]
    fn fake_gold_action_without_state() {
        let line = r#"{"action_id":"fg","text":"t","known_valid_state":null,"is_fake_gold":true}"#;
        let acts = parse_actions(line, &StateSet::new()).unwrap();
        assert!(acts[0].is_fake_gold);
    }

    #[test]
    fn states_round_trip() {
        let set = parse_states(&format!("{S1}\n{S2}\n")).unwrap();
        let again = parse_states(&write_states(&set)).unwrap();
        assert_eq!(set, again);
    }

    #[test]
    fn unknown_evaluator_in_file() {
        let line = r#"{"predicate_id":"p","display_template":"p","negated_display":"not p","arg_slots":[],"evaluator_id":"nonexistent","params":{"feature":"x"}}"#;
        let err = parse_predicates(line).unwrap_err();
        assert!(matches!(
            err,
            LoadError::Registry(RegistryError::UnknownEvaluator { .. })
        ));
    }
}
