//! Everything a deployment loads from disk, bundled.
//!
//! A dataset directory holds:
//!
//! | file | record |
//! |---|---|
//! | `states.jsonl` | [`State`] |
//! | `actions.jsonl` | [`ActionSpec`] |
//! | `predicates.jsonl` | [`PredicateSpec`](crate::model::PredicateSpec) |
//! | `tutorial.jsonl` | [`TutorialItem`] |
//! | `negative_gold.jsonl` | [`LabeledPair`] |
//! | `help_examples.jsonl` | [`HelpExample`] |
//! | `conditions.json` | [`ConditionTable`] |
//! | `truth.jsonl` | [`TruthRule`] (optional, simulation only) |

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{
    load_actions, load_predicates, load_states, read_jsonl, ActionCatalog, ActionSpec, LoadError, PredicateRegistry,
    State, StateSet,
};
use crate::orchestration::{Answer, ConditionTable};
use crate::rule::{eval_rule, validate_rule, RuleExpr};

/// An expert-labeled (state, action) pair with its answer and the
/// explanation shown after the worker answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TutorialItem {
    pub state_id: String,
    pub action_id: String,
    pub answer: Answer,
    pub explanation: String,
}

/// A (state, action) pair an expert marked as not applicable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledPair {
    pub state_id: String,
    pub action_id: String,
}

/// Expert rule for one action, used by the rule tutorial and Get Help.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelpExample {
    pub action_id: String,
    pub rule: RuleExpr,
    pub explanation: String,
}

/// Hidden ground-truth constraint for one action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRule {
    pub action_id: String,
    pub rule: RuleExpr,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub states: StateSet,
    pub actions: ActionCatalog,
    pub registry: PredicateRegistry,
    pub tutorial: Vec<TutorialItem>,
    pub negative_gold: Vec<LabeledPair>,
    pub help_examples: Vec<HelpExample>,
    pub conditions: ConditionTable,
}

/// Per-action ground truth, C(s, a).
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    rules: BTreeMap<String, RuleExpr>,
}

impl GroundTruth {
    pub fn new(rules: impl IntoIterator<Item = TruthRule>) -> Self {
        GroundTruth {
            rules: rules.into_iter().map(|t| (t.action_id, t.rule)).collect(),
        }
    }

    pub fn rule(&self, action_id: &str) -> Option<&RuleExpr> {
        self.rules.get(action_id)
    }

    /// Fake-gold and unknown actions apply nowhere.
    pub fn applies(&self, state: &State, action_id: &str, registry: &PredicateRegistry) -> bool {
        self.rules
            .get(action_id)
            .is_some_and(|r| eval_rule(r, state, registry).unwrap_or(false))
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

fn read_file(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_records<T: serde::de::DeserializeOwned>(path: &Path, required: &[&'static str]) -> Result<Vec<T>, LoadError> {
    Ok(read_jsonl(&read_file(path)?, required)?
        .into_iter()
        .map(|(_, t)| t)
        .collect())
}

fn invalid(message: String) -> LoadError {
    LoadError::Invalid { line: 0, message }
}

impl Dataset {
    pub fn load(dir: impl AsRef<Path>) -> Result<Dataset, LoadError> {
        let dir = dir.as_ref();
        let states = load_states(dir.join("states.jsonl"))?;
        let actions = ActionCatalog::new(load_actions(dir.join("actions.jsonl"), &states)?);
        let registry = load_predicates(dir.join("predicates.jsonl"))?;
        let tutorial = load_records(
            &dir.join("tutorial.jsonl"),
            &["state_id", "action_id", "answer", "explanation"],
        )?;
        let negative_gold = load_records(&dir.join("negative_gold.jsonl"), &["state_id", "action_id"])?;
        let help_examples = load_records(&dir.join("help_examples.jsonl"), &["action_id", "rule", "explanation"])?;
        let conditions_text = read_file(&dir.join("conditions.json"))?;
        let conditions: ConditionTable = serde_json::from_str(&conditions_text).map_err(|e| LoadError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        let ds = Dataset {
            states,
            actions,
            registry,
            tutorial,
            negative_gold,
            help_examples,
            conditions,
        };
        ds.check()?;
        Ok(ds)
    }

    /// Cross-file referential checks.
    pub fn check(&self) -> Result<(), LoadError> {
        let pair_ok = |s: &str, a: &str| self.states.contains(s) && self.actions.get(a).is_some();
        for t in &self.tutorial {
            if !pair_ok(&t.state_id, &t.action_id) {
                return Err(invalid(format!(
                    "tutorial item ({}, {}) is dangling",
                    t.state_id, t.action_id
                )));
            }
        }
        for p in &self.negative_gold {
            if !pair_ok(&p.state_id, &p.action_id) {
                return Err(invalid(format!(
                    "negative gold ({}, {}) is dangling",
                    p.state_id, p.action_id
                )));
            }
        }
        for h in &self.help_examples {
            if self.actions.get(&h.action_id).is_none() {
                return Err(invalid(format!("help example for unknown action {}", h.action_id)));
            }
            if let Err(v) = validate_rule(&h.rule, &self.registry) {
                return Err(invalid(format!("help example for {}: {}", h.action_id, v[0])));
            }
        }
        self.registry
            .check_states(&self.states)
            .map_err(|e| invalid(e.to_string()))?;
        self.conditions.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    pub fn action(&self, action_id: &str) -> Option<ActionSpec> {
        if let Some(a) = self.actions.get(action_id) {
            return Some(a.clone());
        }
        crate::orchestration::parse_fake_gold_id(action_id).map(crate::orchestration::fake_gold_action)
    }
}

pub fn load_truth(path: impl AsRef<Path>) -> Result<GroundTruth, LoadError> {
    let rows: Vec<TruthRule> = load_records(path.as_ref(), &["action_id", "rule"])?;
    Ok(GroundTruth::new(rows))
}
