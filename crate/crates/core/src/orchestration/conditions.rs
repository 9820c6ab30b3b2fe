use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Condition, Mode};

/// Question counts for one HIT, by kind. `given_yes` / `given_no` are
/// tutorial-style questions placed in the task portion with their answers
/// shown.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Composition {
    #[serde(default)]
    pub tutorial: u32,
    #[serde(default)]
    pub given_yes: u32,
    #[serde(default)]
    pub given_no: u32,
    #[serde(default)]
    pub positive_gold: u32,
    #[serde(default)]
    pub negative_gold: u32,
    #[serde(default)]
    pub fake_gold: u32,
    #[serde(default)]
    pub unknown: u32,
}

impl Composition {
    pub fn task_count(&self) -> u32 {
        self.given_yes + self.given_no + self.positive_gold + self.negative_gold + self.fake_gold + self.unknown
    }

    pub fn total(&self) -> u32 {
        self.tutorial + self.task_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionParams {
    pub first: Composition,
    pub later: Composition,
    pub hit_limit: u32,
    pub time_limit_minutes: u32,
}

impl ConditionParams {
    pub fn composition(&self, hit_index: u32) -> &Composition {
        if hit_index <= 1 {
            &self.first
        } else {
            &self.later
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TableError {
    #[error("condition table has no entry for {0}")]
    Missing(Condition),
    #[error("{condition}: {message}")]
    Inconsistent { condition: Condition, message: String },
}

/// Composition counts per condition, loaded from `conditions.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConditionTable(pub BTreeMap<Condition, ConditionParams>);

const CASE_FIRST_TUTORIAL: u32 = 3;
const CASE_FIRST_TASK: u32 = 6;
const CASE_LATER_TASK: u32 = 7;
const CASE_LIMIT: u32 = 5;
const CASE_MINUTES: u32 = 20;
const RULE_FIRST_TUTORIAL: u32 = 2;
const RULE_FIRST_TASK: u32 = 3;
const RULE_LATER_TASK: u32 = 4;
const RULE_LIMIT: u32 = 3;
const RULE_MINUTES: u32 = 45;

impl ConditionTable {
    /// The compositions used in the experiments.
    pub fn standard() -> Self {
        let c = |tutorial, given_yes, given_no, positive_gold, negative_gold, fake_gold, unknown| Composition {
            tutorial,
            given_yes,
            given_no,
            positive_gold,
            negative_gold,
            fake_gold,
            unknown,
        };
        let case = |first, later| ConditionParams {
            first,
            later,
            hit_limit: CASE_LIMIT,
            time_limit_minutes: CASE_MINUTES,
        };
        let baseline_later = c(0, 0, 0, 1, 0, 0, 6);
        let fake_first = c(3, 0, 0, 1, 0, 1, 4);
        let fake_later = c(0, 0, 0, 1, 0, 1, 5);
        let mut t = BTreeMap::new();
        t.insert(Condition::Baseline, case(c(3, 0, 0, 1, 0, 0, 5), baseline_later));
        t.insert(
            Condition::TutorialOverload,
            case(c(3, 3, 2, 0, 0, 0, 1), baseline_later),
        );
        t.insert(Condition::GoldOverload, case(c(3, 0, 0, 3, 2, 0, 1), baseline_later));
        for cond in [
            Condition::FakeGold,
            Condition::FgContinuity,
            Condition::FgSkip,
            Condition::FgExplainOneSided,
            Condition::FgExplainTwoSided,
        ] {
            t.insert(cond, case(fake_first, fake_later));
        }
        t.insert(
            Condition::RuleBased,
            ConditionParams {
                first: c(2, 0, 0, 0, 0, 0, 3),
                later: c(0, 0, 0, 0, 0, 0, 4),
                hit_limit: RULE_LIMIT,
                time_limit_minutes: RULE_MINUTES,
            },
        );
        ConditionTable(t)
    }

    pub fn get(&self, c: Condition) -> Result<&ConditionParams, TableError> {
        self.0.get(&c).ok_or(TableError::Missing(c))
    }

    /// Checks every entry against the fixed HIT shapes: case-by-case
    /// 3 tutorial + 6 task then 7 task, at most 5 HITs; rule-based 2 + 3
    /// then 4, at most 3; one positive gold per case-by-case task except
    /// where the condition replaces it.
    pub fn validate(&self) -> Result<(), TableError> {
        for (&cond, p) in &self.0 {
            let bad = |message: String| TableError::Inconsistent {
                condition: cond,
                message,
            };
            let (tut, first, later, limit) = match cond.mode() {
                Mode::CaseByCase => (CASE_FIRST_TUTORIAL, CASE_FIRST_TASK, CASE_LATER_TASK, CASE_LIMIT),
                Mode::RuleBased => (RULE_FIRST_TUTORIAL, RULE_FIRST_TASK, RULE_LATER_TASK, RULE_LIMIT),
            };
            if p.first.tutorial != tut || p.first.task_count() != first {
                return Err(bad(format!("first HIT must be {tut} tutorial + {first} task")));
            }
            if p.later.tutorial != 0 || p.later.task_count() != later {
                return Err(bad(format!("later HITs must be {later} task questions")));
            }
            if p.hit_limit != limit {
                return Err(bad(format!("HIT limit must be {limit}")));
            }
            if cond.mode() == Mode::RuleBased {
                let gold = |c: &Composition| c.task_count() != c.unknown;
                if gold(&p.first) || gold(&p.later) {
                    return Err(bad("rule-based HITs hold only action questions".into()));
                }
            }
            if cond.has_fake_gold() && (p.first.fake_gold != 1 || p.later.fake_gold != 1) {
                return Err(bad("exactly one fake gold per task".into()));
            }
        }
        Ok(())
    }
}
