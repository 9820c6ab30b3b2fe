use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Answer, GoldKind, ResponseRecord, RuleSubmission};
use crate::dataset::Dataset;
use crate::rule::eval_rule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Whether a Yes on a fake-gold question removes the worker. Positive
    /// and negative gold failures always do.
    pub fake_gold_filters: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            fake_gold_filters: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerFilter {
    pub worker_id: String,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub responses: Vec<ResponseRecord>,
    pub rules: Vec<RuleSubmission>,
    pub filtered_workers: Vec<WorkerFilter>,
    pub dropped_rules: Vec<(RuleSubmission, String)>,
}

/// Why a response disqualifies its worker, if it does.
pub fn gold_failure(r: &ResponseRecord, cfg: &FilterConfig) -> Option<String> {
    let expected = r.gold_kind.expected()?;
    if r.answer == Answer::SkipReplaced || r.answer == expected {
        return None;
    }
    if r.gold_kind == GoldKind::FakeGold && !cfg.fake_gold_filters {
        return None;
    }
    let kind = match r.gold_kind {
        GoldKind::PositiveGold => "positive gold",
        GoldKind::NegativeGold => "negative gold",
        _ => "fake gold",
    };
    Some(format!("answered {:?} on {kind} question {}", r.answer, r.question_id).to_lowercase())
}

/// Case-by-case: one failed gold question removes all of that worker's
/// responses. Rule-based: a submission that does not include its action's
/// known-valid state is dropped on its own.
pub fn filter_workers(
    responses: &[ResponseRecord],
    rules: &[RuleSubmission],
    ds: &Dataset,
    cfg: &FilterConfig,
) -> FilterOutcome {
    let mut reasons: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for r in responses {
        if let Some(why) = gold_failure(r, cfg) {
            reasons.entry(&r.worker_id).or_default().push(why);
        }
    }
    let kept = responses
        .iter()
        .filter(|r| !reasons.contains_key(r.worker_id.as_str()))
        .cloned()
        .collect();

    let mut out_rules = Vec::new();
    let mut dropped = Vec::new();
    for s in rules {
        let verdict = match (&s.rule, s.accepted) {
            (_, false) => Err(s.reason.clone().unwrap_or_else(|| "rejected at submission".into())),
            (None, true) => Err("no rule".into()),
            (Some(rule), true) => {
                let known = ds
                    .actions
                    .get(&s.action_id)
                    .and_then(|a| a.known_valid_state.as_deref())
                    .and_then(|id| ds.states.get(id));
                match known {
                    None => Err("action has no known-valid state".into()),
                    Some(state) => match eval_rule(rule, state, &ds.registry) {
                        Ok(true) => Ok(()),
                        Ok(false) => Err("rule excludes the known-valid state".into()),
                        Err(e) => Err(e.to_string()),
                    },
                }
            }
        };
        match verdict {
            Ok(()) => out_rules.push(s.clone()),
            Err(why) => dropped.push((s.clone(), why)),
        }
    }

    FilterOutcome {
        responses: kept,
        rules: out_rules,
        filtered_workers: reasons
            .into_iter()
            .map(|(w, reasons)| WorkerFilter {
                worker_id: w.to_string(),
                reasons,
            })
            .collect(),
        dropped_rules: dropped,
    }
}
