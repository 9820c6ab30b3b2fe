use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::is_unknown_task;
use crate::dataset::{Dataset, GroundTruth};
use crate::model::{read_jsonl, LoadError};
use crate::orchestration::{Answer, Condition, ResponseRecord, RuleSubmission, Section};
use crate::rule::partition;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairSource {
    /// A yes answer to this question.
    Response { question_id: String },
    /// A state included by the rule accepted for this question.
    Rule { question_id: String },
}

/// A (state, action) pair some worker claimed the action applies to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositivePair {
    pub source: PairSource,
    pub worker_id: String,
    pub condition: Condition,
    pub state_id: String,
    pub action_id: String,
}

/// Positives from retained records: yes answers to unknown task questions,
/// and every state included by an accepted task rule.
pub fn positive_pairs(responses: &[ResponseRecord], rules: &[RuleSubmission], ds: &Dataset) -> Vec<PositivePair> {
    let mut out: Vec<PositivePair> = responses
        .iter()
        .filter(|r| is_unknown_task(r) && r.answer == Answer::Yes)
        .map(|r| PositivePair {
            source: PairSource::Response {
                question_id: r.question_id.clone(),
            },
            worker_id: r.worker_id.clone(),
            condition: r.condition,
            state_id: r.state_id.clone(),
            action_id: r.action_id.clone(),
        })
        .collect();
    for s in rules.iter().filter(|s| s.accepted && s.section == Section::Task) {
        let Some(rule) = &s.rule else { continue };
        let Ok(p) = partition(rule, &ds.states, &ds.registry) else {
            continue;
        };
        out.extend(p.included.into_iter().map(|state_id| PositivePair {
            source: PairSource::Rule {
                question_id: s.question_id.clone(),
            },
            worker_id: s.worker_id.clone(),
            condition: s.condition,
            state_id,
            action_id: s.action_id.clone(),
        }));
    }
    out
}

/// What the judge sees. Carries nothing about where the pair came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindedItem {
    pub blinded_id: String,
    pub state_render: String,
    pub action_text: String,
}

/// Blinded id to the pair behind it; stays with the experimenter.
pub type BlindMap = BTreeMap<String, PositivePair>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindedExport {
    pub items: Vec<BlindedItem>,
    pub map: BlindMap,
    /// Set when fewer positives existed than were asked for.
    pub clamped: bool,
}

/// Samples up to `sample_size` positives uniformly without replacement.
/// Item order is the sampling order, so it carries no grouping.
pub fn export_blinded(positives: &[PositivePair], sample_size: usize, seed: u64, ds: &Dataset) -> BlindedExport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sample_size.min(positives.len());
    let mut items = Vec::with_capacity(n);
    let mut map = BlindMap::new();
    for (k, i) in sample(&mut rng, positives.len(), n).into_iter().enumerate() {
        let p = &positives[i];
        let blinded_id = format!("j{:05}", k + 1);
        items.push(BlindedItem {
            blinded_id: blinded_id.clone(),
            state_render: ds.states.get(&p.state_id).map(|s| s.render.clone()).unwrap_or_default(),
            action_text: ds.action(&p.action_id).map(|a| a.text).unwrap_or_default(),
        });
        map.insert(blinded_id, p.clone());
    }
    BlindedExport {
        items,
        map,
        clamped: sample_size > positives.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub blinded_id: String,
    pub verdict: Verdict,
    #[serde(default = "default_judge")]
    pub judge_id: String,
}

fn default_judge() -> String {
    "judge".into()
}

#[derive(Debug, thiserror::Error)]
pub enum JudgingError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("line {line}: `{blinded_id}` was already judged by `{judge_id}`")]
    Duplicate {
        line: usize,
        blinded_id: String,
        judge_id: String,
    },
    #[error("line {line}: `{blinded_id}` is not in the blind map")]
    Unknown { line: usize, blinded_id: String },
}

/// Reads `{blinded_id, verdict[, judge_id]}` lines. Each item may be judged
/// once per judge; ids must come from `map`.
pub fn import_judgments(text: &str, map: &BlindMap) -> Result<Vec<JudgmentRecord>, JudgingError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (line, j) in read_jsonl::<JudgmentRecord>(text, &["blinded_id", "verdict"])? {
        if !map.contains_key(&j.blinded_id) {
            return Err(JudgingError::Unknown {
                line,
                blinded_id: j.blinded_id,
            });
        }
        if !seen.insert((j.blinded_id.clone(), j.judge_id.clone())) {
            return Err(JudgingError::Duplicate {
                line,
                blinded_id: j.blinded_id,
                judge_id: j.judge_id,
            });
        }
        out.push(j);
    }
    Ok(out)
}

/// Judges every mapped pair against the hidden rules, for simulations.
pub fn oracle_judgments(map: &BlindMap, truth: &GroundTruth, ds: &Dataset, judge_id: &str) -> Vec<JudgmentRecord> {
    map.iter()
        .map(|(id, p)| {
            let ok = ds
                .states
                .get(&p.state_id)
                .is_some_and(|s| truth.applies(s, &p.action_id, &ds.registry));
            JudgmentRecord {
                blinded_id: id.clone(),
                verdict: if ok { Verdict::Correct } else { Verdict::Incorrect },
                judge_id: judge_id.to_string(),
            }
        })
        .collect()
}
