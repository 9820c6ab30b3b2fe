//! Experimental conditions, HIT composition, gold questions, the
//! explanation gate, worker filtering and the event-sourced task state.

mod compose;
mod conditions;
mod engine;
mod filter;
mod gate;
mod help;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::ActionSpec;
use crate::rule::RuleExpr;

pub use compose::{build_hit, handle_skip};
pub use conditions::{Composition, ConditionParams, ConditionTable, TableError};
pub use engine::{
    assign_condition, Event, ExperimentConfig, OrchestrationState, Orchestrator, Planned, Reply, RespondOutcome,
    SessionInfo, SubmitOutcome,
};
pub use filter::{filter_workers, gold_failure, FilterConfig, FilterOutcome, WorkerFilter};
pub use gate::{count_syllables, gate_explanation, readability, GateOutcome, GateReject, Readability};
pub use help::{check_reconstruction, get_help, HelpFeedback};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Baseline,
    TutorialOverload,
    GoldOverload,
    FakeGold,
    FgContinuity,
    FgSkip,
    FgExplainOneSided,
    FgExplainTwoSided,
    RuleBased,
}

impl Condition {
    pub const ALL: [Condition; 9] = [
        Condition::Baseline,
        Condition::TutorialOverload,
        Condition::GoldOverload,
        Condition::FakeGold,
        Condition::FgContinuity,
        Condition::FgSkip,
        Condition::FgExplainOneSided,
        Condition::FgExplainTwoSided,
        Condition::RuleBased,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::TutorialOverload => "tutorial_overload",
            Condition::GoldOverload => "gold_overload",
            Condition::FakeGold => "fake_gold",
            Condition::FgContinuity => "fg_continuity",
            Condition::FgSkip => "fg_skip",
            Condition::FgExplainOneSided => "fg_explain_one_sided",
            Condition::FgExplainTwoSided => "fg_explain_two_sided",
            Condition::RuleBased => "rule_based",
        }
    }

    pub fn mode(self) -> Mode {
        if self == Condition::RuleBased {
            Mode::RuleBased
        } else {
            Mode::CaseByCase
        }
    }

    pub fn has_fake_gold(self) -> bool {
        matches!(
            self,
            Condition::FakeGold
                | Condition::FgContinuity
                | Condition::FgSkip
                | Condition::FgExplainOneSided
                | Condition::FgExplainTwoSided
        )
    }

    /// Whether an explanation must accompany `answer`.
    pub fn explanation_required(self, answer: Answer) -> bool {
        match self {
            Condition::FgExplainTwoSided => matches!(answer, Answer::Yes | Answer::No),
            Condition::FgExplainOneSided => answer == Answer::Yes,
            _ => false,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| format!("unknown condition `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    CaseByCase,
    RuleBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Yes,
    No,
    /// Logged for a question the worker skipped; it was replaced in place.
    SkipReplaced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldKind {
    /// A question with no known answer.
    None,
    PositiveGold,
    NegativeGold,
    FakeGold,
    /// Expert-labeled, answer shown to the worker.
    Tutorial,
}

impl GoldKind {
    /// The answer that passes this gold check.
    pub fn expected(self) -> Option<Answer> {
        match self {
            GoldKind::PositiveGold => Some(Answer::Yes),
            GoldKind::NegativeGold | GoldKind::FakeGold => Some(Answer::No),
            GoldKind::None | GoldKind::Tutorial => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Tutorial,
    Task,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub state_id: String,
    pub action_id: String,
    pub gold_kind: GoldKind,
    pub section: Section,
    /// Shown with tutorial-style questions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub given_answer: Option<Answer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tutorial_explanation: Option<String>,
    /// Rule-based tutorial: the expert rule to rebuild.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_rule: Option<RuleExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    pub hit_id: String,
    pub worker_id: String,
    pub condition: Condition,
    pub hit_index: u32,
    pub questions: Vec<Question>,
    pub issued_at: u64,
    /// Advisory; expiry is not enforced.
    pub time_limit_minutes: u32,
    /// Counter for question ids, including replacements.
    pub next_question: u32,
}

impl Hit {
    pub fn question(&self, question_id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.question_id == question_id)
    }

    pub fn count(&self, kind: GoldKind) -> usize {
        self.questions.iter().filter(|q| q.gold_kind == kind).count()
    }

    pub fn expired(&self, now: u64) -> bool {
        now > self.issued_at + u64::from(self.time_limit_minutes) * 60
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub worker_id: String,
    pub hit_id: String,
    pub question_id: String,
    pub state_id: String,
    pub action_id: String,
    pub gold_kind: GoldKind,
    pub section: Section,
    pub answer: Answer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    pub condition: Condition,
    pub timestamp: u64,
}

/// One rule a worker sent for an action question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSubmission {
    pub worker_id: String,
    pub hit_id: String,
    pub question_id: String,
    pub action_id: String,
    pub section: Section,
    pub rule: Option<RuleExpr>,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub condition: Condition,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerProfile {
    pub worker_id: String,
    pub condition: Condition,
    pub hits_issued: u32,
    pub hits_completed: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filtered: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OrchestrationError {
    #[error("unknown worker `{0}`")]
    UnknownWorker(String),
    #[error("HIT limit of {limit} reached")]
    LimitExceeded { limit: u32 },
    #[error("not enough {0} to build a HIT")]
    ExhaustedPool(&'static str),
    #[error("unknown question `{0}`")]
    UnknownQuestion(String),
    #[error("question `{0}` was already answered")]
    AlreadyAnswered(String),
    #[error("skipping is only available in fg_skip, not {0}")]
    ConditionMismatch(Condition),
    #[error("tutorial questions cannot be skipped")]
    NotSkippable,
    #[error("{0} questions do not take this kind of answer")]
    WrongMode(Condition),
    #[error(transparent)]
    Table(#[from] TableError),
}

pub const FAKE_GOLD_PREFIX: &str = "fake-gold-";

/// The self-referential action that applies to no state. Its correct
/// answer is always No.
pub fn fake_gold_action(remaining: u32) -> ActionSpec {
    ActionSpec {
        action_id: format!("{FAKE_GOLD_PREFIX}{remaining}"),
        text: format!("Keep up the good work! You only have {remaining} questions left before you complete this HIT!"),
        known_valid_state: None,
        is_fake_gold: true,
    }
}

pub fn parse_fake_gold_id(action_id: &str) -> Option<u32> {
    action_id.strip_prefix(FAKE_GOLD_PREFIX)?.parse().ok()
}
