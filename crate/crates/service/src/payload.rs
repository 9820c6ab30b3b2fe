//! Wire types for the /v1 API. Every body is a JSON object.

use serde::{Deserialize, Serialize};

use crowdrule_core::builder::{BuilderAction, Phase};
use crowdrule_core::dataset::Dataset;
use crowdrule_core::model::{PredicateSpec, State};
use crowdrule_core::orchestration::{
    Answer, Condition, GateReject, GoldKind, Hit, Mode, OrchestrationState, Question, Reply, RespondOutcome, Section,
    SessionInfo,
};
use crowdrule_core::rule::RuleExpr;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRequest {
    pub worker_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionToken {
    pub worker_id: String,
    pub condition: Condition,
    pub issued_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionResponse {
    pub token: SessionToken,
    pub condition: Condition,
    pub mode: Mode,
    pub hit_index: u32,
    pub hits_completed: u32,
    pub hit_limit: u32,
}

impl SessionResponse {
    pub fn new(info: SessionInfo, issued_at: u64) -> Self {
        SessionResponse {
            token: SessionToken {
                worker_id: info.worker_id,
                condition: info.condition,
                issued_at,
            },
            condition: info.condition,
            mode: info.mode,
            hit_index: info.hit_index,
            hits_completed: info.hits_completed,
            hit_limit: info.hit_limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateView {
    pub state_id: String,
    pub render: String,
}

impl From<&State> for StateView {
    fn from(s: &State) -> Self {
        StateView {
            state_id: s.state_id.clone(),
            render: s.render.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionView {
    pub action_id: String,
    pub text: String,
}

/// A question as the worker sees it. Gold status is never sent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionView {
    pub question_id: String,
    pub section: Section,
    /// For rule questions, the action's known-valid state.
    pub state: StateView,
    pub action: ActionView,
    /// Only on tutorial-style questions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub given_answer: Option<Answer>,
    /// Rule tutorial: the expert rule to rebuild, rendered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_rule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_explanation: Option<String>,
    /// The action differs from the previous question's.
    pub action_changed: bool,
    pub answered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitView {
    pub hit_id: String,
    pub hit_index: u32,
    pub condition: Condition,
    pub mode: Mode,
    pub issued_at: u64,
    /// Advisory only.
    pub time_limit_minutes: u32,
    pub questions: Vec<QuestionView>,
}

pub fn question_view(q: &Question, previous_action: Option<&str>, answered: bool, ds: &Dataset) -> QuestionView {
    let state = ds.states.get(&q.state_id).map(StateView::from).unwrap_or(StateView {
        state_id: q.state_id.clone(),
        render: String::new(),
    });
    let text = ds.action(&q.action_id).map(|a| a.text).unwrap_or_default();
    QuestionView {
        question_id: q.question_id.clone(),
        section: q.section,
        state,
        action: ActionView {
            action_id: q.action_id.clone(),
            text,
        },
        given_answer: if q.gold_kind == GoldKind::Tutorial {
            q.given_answer
        } else {
            None
        },
        expert_rule: q
            .expert_rule
            .as_ref()
            .map(|r| crowdrule_core::builder::render_rule(r, &ds.registry)),
        expert_explanation: q.expert_rule.as_ref().and(q.tutorial_explanation.clone()),
        action_changed: previous_action.is_some_and(|p| p != q.action_id),
        answered,
    }
}

pub fn hit_view(hit: &Hit, st: &OrchestrationState, ds: &Dataset) -> HitView {
    let answered = |qid: &str| {
        st.responses.iter().any(|r| r.question_id == qid)
            || st.submissions.iter().any(|s| s.question_id == qid && s.accepted)
    };
    let mut previous: Option<&str> = None;
    let questions = hit
        .questions
        .iter()
        .map(|q| {
            let v = question_view(q, previous, answered(&q.question_id), ds);
            previous = Some(&q.action_id);
            v
        })
        .collect();
    HitView {
        hit_id: hit.hit_id.clone(),
        hit_index: hit.hit_index,
        condition: hit.condition,
        mode: hit.condition.mode(),
        issued_at: hit.issued_at,
        time_limit_minutes: hit.time_limit_minutes,
        questions,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerQuery {
    pub worker_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRequest {
    pub worker_id: String,
    pub question_id: String,
    pub answer: Reply,
    #[serde(default)]
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ResponseReply {
    Accepted {
        hit_complete: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        correct: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        explanation: Option<String>,
    },
    GateRejected {
        reason: GateReject,
        message: String,
    },
    /// The skipped question was swapped for this one.
    Replaced {
        question: QuestionView,
    },
}

impl ResponseReply {
    pub fn new(out: RespondOutcome, ds: &Dataset) -> Self {
        match out {
            RespondOutcome::Accepted {
                hit_complete,
                correct,
                explanation,
            } => ResponseReply::Accepted {
                hit_complete,
                correct,
                explanation,
            },
            RespondOutcome::GateRejected { reason, message } => ResponseReply::GateRejected { reason, message },
            RespondOutcome::Replaced { question } => ResponseReply::Replaced {
                question: question_view(&question, None, false, ds),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuilderRequest {
    #[serde(default)]
    pub actions: Vec<BuilderAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionsResponse {
    pub phase: Phase,
    pub tokens: String,
    pub options: Vec<BuilderAction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreviewRequest {
    #[serde(default)]
    pub actions: Vec<BuilderAction>,
    /// Advance by one for "Show More Examples".
    #[serde(default)]
    pub cursor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewResponse {
    pub tokens: String,
    pub rule: RuleExpr,
    pub included: usize,
    pub excluded: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub included_exemplar: Option<StateView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded_exemplar: Option<StateView>,
    pub cursor: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub worker_id: String,
    pub question_id: String,
    pub actions: Vec<BuilderAction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelpRequest {
    pub action_id: String,
    #[serde(default)]
    pub actions: Vec<BuilderAction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconstructResponse {
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlossaryEntry {
    pub predicate_id: String,
    /// The phrase with its slots shown as `{slot}`.
    pub phrase: String,
    pub negated_phrase: String,
    pub slots: Vec<String>,
}

impl From<&PredicateSpec> for GlossaryEntry {
    fn from(p: &PredicateSpec) -> Self {
        GlossaryEntry {
            predicate_id: p.predicate_id.clone(),
            phrase: p.display_template.clone(),
            negated_phrase: p.negated_display.clone(),
            slots: p.arg_slots.iter().map(|s| s.name.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictAck {
    pub blinded_id: String,
    pub remaining: usize,
}

/// Every error body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    /// For builder errors: the offending action's position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}
