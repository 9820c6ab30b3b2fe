//! Event-sourced task state.
//!
//! Every command is planned against the current state and yields events;
//! applying events is the only way state changes. Randomness is drawn while
//! planning, from a stream keyed by the event count, so replaying a log
//! needs no RNG and reproduces the state exactly.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::filter::gold_failure;
use super::{
    build_hit, gate_explanation, handle_skip, Answer, Condition, FilterConfig, GateOutcome, GateReject, Hit, Mode,
    OrchestrationError, Question, ResponseRecord, RuleSubmission, Section, WorkerProfile,
};
use crate::builder::{finalize, replay, BuilderAction};
use crate::dataset::Dataset;
use crate::rule::eval_rule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub active_conditions: Vec<Condition>,
    #[serde(default)]
    pub filter: FilterConfig,
}

impl ExperimentConfig {
    pub fn new(seed: u64, active_conditions: Vec<Condition>) -> Self {
        ExperimentConfig {
            seed,
            active_conditions,
            filter: FilterConfig::default(),
        }
    }
}

/// Sticky, order-independent assignment: a stored condition wins; otherwise
/// the condition is a uniform draw keyed by (seed, worker id).
pub fn assign_condition(worker_id: &str, config: &ExperimentConfig, stored: Option<Condition>) -> Condition {
    if let Some(c) = stored {
        return c;
    }
    let mut h = Sha256::new();
    h.update(config.seed.to_le_bytes());
    h.update(worker_id.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    *config
        .active_conditions
        .choose(&mut rng)
        .unwrap_or(&Condition::Baseline)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    WorkerAssigned {
        worker_id: String,
        condition: Condition,
        at: u64,
    },
    HitIssued {
        hit: Hit,
    },
    Responded {
        response: ResponseRecord,
    },
    QuestionReplaced {
        hit_id: String,
        old_question_id: String,
        question: Question,
    },
    RuleSubmitted {
        submission: RuleSubmission,
    },
    WorkerFiltered {
        worker_id: String,
        reason: String,
    },
}

/// Materialized view of the event log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrchestrationState {
    pub workers: BTreeMap<String, WorkerProfile>,
    pub hits: BTreeMap<String, Hit>,
    /// question id -> hit id, for questions currently in a HIT.
    pub question_hit: BTreeMap<String, String>,
    pub completed: BTreeSet<String>,
    pub responses: Vec<ResponseRecord>,
    pub submissions: Vec<RuleSubmission>,
    pub hit_seq: u64,
    pub event_count: u64,
}

impl OrchestrationState {
    pub fn apply(&mut self, e: &Event) {
        self.event_count += 1;
        match e {
            Event::WorkerAssigned {
                worker_id, condition, ..
            } => {
                self.workers.entry(worker_id.clone()).or_insert_with(|| WorkerProfile {
                    worker_id: worker_id.clone(),
                    condition: *condition,
                    hits_issued: 0,
                    hits_completed: 0,
                    filtered: None,
                });
            }
            Event::HitIssued { hit } => {
                self.hit_seq += 1;
                for q in &hit.questions {
                    self.question_hit.insert(q.question_id.clone(), hit.hit_id.clone());
                }
                if let Some(w) = self.workers.get_mut(&hit.worker_id) {
                    w.hits_issued += 1;
                }
                self.hits.insert(hit.hit_id.clone(), hit.clone());
            }
            Event::Responded { response } => {
                self.responses.push(response.clone());
                if response.answer != Answer::SkipReplaced {
                    self.complete(&response.hit_id, &response.question_id);
                }
            }
            Event::QuestionReplaced {
                hit_id,
                old_question_id,
                question,
            } => {
                if let Some(hit) = self.hits.get_mut(hit_id) {
                    if let Some(slot) = hit.questions.iter_mut().find(|q| &q.question_id == old_question_id) {
                        *slot = question.clone();
                    }
                    hit.next_question += 1;
                }
                self.question_hit.remove(old_question_id);
                self.question_hit.insert(question.question_id.clone(), hit_id.clone());
            }
            Event::RuleSubmitted { submission } => {
                self.submissions.push(submission.clone());
                if submission.accepted {
                    self.complete(&submission.hit_id, &submission.question_id);
                }
            }
            Event::WorkerFiltered { worker_id, reason } => {
                if let Some(w) = self.workers.get_mut(worker_id) {
                    w.filtered.get_or_insert_with(|| reason.clone());
                }
            }
        }
    }

    fn complete(&mut self, hit_id: &str, question_id: &str) {
        if !self.completed.insert(question_id.to_string()) {
            return;
        }
        let Some(hit) = self.hits.get(hit_id) else { return };
        if hit.questions.iter().all(|q| self.completed.contains(&q.question_id)) {
            if let Some(w) = self.workers.get_mut(&hit.worker_id) {
                w.hits_completed += 1;
            }
        }
    }

    pub fn hit_complete(&self, hit: &Hit) -> bool {
        hit.questions.iter().all(|q| self.completed.contains(&q.question_id))
    }

    /// The worker's most recent HIT if it still has open questions.
    pub fn open_hit(&self, worker_id: &str) -> Option<&Hit> {
        self.hits
            .values()
            .filter(|h| h.worker_id == worker_id)
            .max_by_key(|h| h.hit_index)
            .filter(|h| !self.hit_complete(h))
    }

    /// Canonical serialization of the view, used to compare replays.
    pub fn snapshot(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub worker_id: String,
    pub condition: Condition,
    pub mode: Mode,
    /// Index of the open HIT, or of the next one to be issued.
    pub hit_index: u32,
    pub hits_completed: u32,
    pub hit_limit: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reply {
    Yes,
    No,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RespondOutcome {
    Accepted {
        hit_complete: bool,
        /// For tutorial-style questions: whether the answer matched, and why.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        correct: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        explanation: Option<String>,
    },
    GateRejected {
        reason: GateReject,
        message: String,
    },
    Replaced {
        question: Question,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SubmitOutcome {
    Accepted { hit_complete: bool },
    Rejected { reason: String },
}

pub type Planned<T> = Result<(T, Vec<Event>), OrchestrationError>;

#[derive(Debug, Clone)]
pub struct Orchestrator {
    pub config: ExperimentConfig,
    pub state: OrchestrationState,
}

impl Orchestrator {
    pub fn new(config: ExperimentConfig) -> Self {
        Orchestrator {
            config,
            state: OrchestrationState::default(),
        }
    }

    /// Rebuilds the view from a log.
    pub fn replay<'a>(config: ExperimentConfig, events: impl IntoIterator<Item = &'a Event>) -> Self {
        let mut o = Orchestrator::new(config);
        for e in events {
            o.state.apply(e);
        }
        o
    }

    pub fn commit(&mut self, events: &[Event]) {
        for e in events {
            self.state.apply(e);
        }
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.state.event_count);
        rng
    }

    fn worker(&self, worker_id: &str) -> Result<&WorkerProfile, OrchestrationError> {
        self.state
            .workers
            .get(worker_id)
            .ok_or_else(|| OrchestrationError::UnknownWorker(worker_id.to_string()))
    }

    fn locate(&self, worker_id: &str, question_id: &str) -> Result<(&Hit, &Question), OrchestrationError> {
        let unknown = || OrchestrationError::UnknownQuestion(question_id.to_string());
        let hit_id = self.state.question_hit.get(question_id).ok_or_else(unknown)?;
        let hit = &self.state.hits[hit_id];
        if hit.worker_id != worker_id {
            return Err(unknown());
        }
        let q = hit.question(question_id).ok_or_else(unknown)?;
        Ok((hit, q))
    }

    pub fn plan_session(&self, worker_id: &str, ds: &Dataset, now: u64) -> Planned<SessionInfo> {
        let stored = self.state.workers.get(worker_id);
        let condition = assign_condition(worker_id, &self.config, stored.map(|w| w.condition));
        let events = match stored {
            Some(_) => vec![],
            None => vec![Event::WorkerAssigned {
                worker_id: worker_id.to_string(),
                condition,
                at: now,
            }],
        };
        let params = ds.conditions.get(condition)?;
        let (issued, completed) = stored.map_or((0, 0), |w| (w.hits_issued, w.hits_completed));
        let hit_index = match self.state.open_hit(worker_id) {
            Some(h) => h.hit_index,
            None => issued + 1,
        };
        Ok((
            SessionInfo {
                worker_id: worker_id.to_string(),
                condition,
                mode: condition.mode(),
                hit_index,
                hits_completed: completed,
                hit_limit: params.hit_limit,
            },
            events,
        ))
    }

    pub fn plan_next_task(&self, worker_id: &str, ds: &Dataset, now: u64) -> Planned<Hit> {
        let worker = self.worker(worker_id)?;
        if let Some(h) = self.state.open_hit(worker_id) {
            return Ok((h.clone(), vec![]));
        }
        let hit_id = format!("h{:05}", self.state.hit_seq + 1);
        let hit = build_hit(worker, ds, &hit_id, now, &mut self.rng())?;
        Ok((hit.clone(), vec![Event::HitIssued { hit }]))
    }

    pub fn plan_respond(
        &self,
        worker_id: &str,
        question_id: &str,
        reply: Reply,
        explanation: Option<&str>,
        ds: &Dataset,
        now: u64,
    ) -> Planned<RespondOutcome> {
        let worker = self.worker(worker_id)?;
        let (hit, q) = self.locate(worker_id, question_id)?;
        if hit.condition.mode() != Mode::CaseByCase {
            return Err(OrchestrationError::WrongMode(hit.condition));
        }
        if self.state.completed.contains(question_id) {
            return Err(OrchestrationError::AlreadyAnswered(question_id.to_string()));
        }
        let record = |answer: Answer, explanation: Option<String>| ResponseRecord {
            worker_id: worker_id.to_string(),
            hit_id: hit.hit_id.clone(),
            question_id: question_id.to_string(),
            state_id: q.state_id.clone(),
            action_id: q.action_id.clone(),
            gold_kind: q.gold_kind,
            section: q.section,
            answer,
            explanation,
            condition: hit.condition,
            timestamp: now,
        };
        let answer = match reply {
            Reply::Skip => {
                let replacement = handle_skip(hit, question_id, ds, &mut self.rng())?;
                let events = vec![
                    Event::Responded {
                        response: record(Answer::SkipReplaced, None),
                    },
                    Event::QuestionReplaced {
                        hit_id: hit.hit_id.clone(),
                        old_question_id: question_id.to_string(),
                        question: replacement.clone(),
                    },
                ];
                return Ok((RespondOutcome::Replaced { question: replacement }, events));
            }
            Reply::Yes => Answer::Yes,
            Reply::No => Answer::No,
        };
        let keep = if q.section == Section::Tutorial {
            None
        } else {
            match gate_explanation(explanation, hit.condition, answer) {
                GateOutcome::Accept { keep } => keep,
                GateOutcome::Reject(reason) => {
                    let message = reason.to_string();
                    return Ok((RespondOutcome::GateRejected { reason, message }, vec![]));
                }
            }
        };
        let response = record(answer, keep);
        let mut events = Vec::new();
        if worker.filtered.is_none() {
            if let Some(reason) = gold_failure(&response, &self.config.filter) {
                events.push(Event::WorkerFiltered {
                    worker_id: worker_id.to_string(),
                    reason,
                });
            }
        }
        events.insert(0, Event::Responded { response });
        let hit_complete = hit
            .questions
            .iter()
            .all(|x| x.question_id == question_id || self.state.completed.contains(&x.question_id));
        Ok((
            RespondOutcome::Accepted {
                hit_complete,
                correct: q.given_answer.map(|g| g == answer),
                explanation: q.tutorial_explanation.clone(),
            },
            events,
        ))
    }

    /// Idempotent per question: once a rule is accepted, later submissions
    /// for the same question return the stored verdict.
    pub fn plan_submit_rule(
        &self,
        worker_id: &str,
        question_id: &str,
        actions: &[BuilderAction],
        ds: &Dataset,
        now: u64,
    ) -> Planned<SubmitOutcome> {
        self.worker(worker_id)?;
        let (hit, q) = self.locate(worker_id, question_id)?;
        if hit.condition.mode() != Mode::RuleBased {
            return Err(OrchestrationError::WrongMode(hit.condition));
        }
        if self.state.completed.contains(question_id) {
            return Ok((
                SubmitOutcome::Accepted {
                    hit_complete: self.state.hit_complete(hit),
                },
                vec![],
            ));
        }
        let (rule, verdict) = match replay(actions, &ds.registry) {
            Err((i, e)) => (None, Err(format!("action {i} is not allowed here: {e}"))),
            Ok(b) => match finalize(&b) {
                Err(_) => (None, Err("incomplete".to_string())),
                Ok(rule) => {
                    let state = ds.states.get(&q.state_id);
                    let includes = state.is_some_and(|s| eval_rule(&rule, s, &ds.registry).unwrap_or(false));
                    let v = if includes {
                        Ok(())
                    } else {
                        Err("the rule excludes the known-valid state".to_string())
                    };
                    (Some(rule), v)
                }
            },
        };
        let submission = RuleSubmission {
            worker_id: worker_id.to_string(),
            hit_id: hit.hit_id.clone(),
            question_id: question_id.to_string(),
            action_id: q.action_id.clone(),
            section: q.section,
            rule,
            accepted: verdict.is_ok(),
            reason: verdict.clone().err(),
            condition: hit.condition,
            timestamp: now,
        };
        let outcome = match verdict {
            Ok(()) => SubmitOutcome::Accepted {
                hit_complete: hit
                    .questions
                    .iter()
                    .all(|x| x.question_id == question_id || self.state.completed.contains(&x.question_id)),
            },
            Err(reason) => SubmitOutcome::Rejected { reason },
        };
        Ok((outcome, vec![Event::RuleSubmitted { submission }]))
    }

    pub fn session(&mut self, worker_id: &str, ds: &Dataset, now: u64) -> Result<SessionInfo, OrchestrationError> {
        let (out, ev) = self.plan_session(worker_id, ds, now)?;
        self.commit(&ev);
        Ok(out)
    }

    pub fn next_task(&mut self, worker_id: &str, ds: &Dataset, now: u64) -> Result<Hit, OrchestrationError> {
        let (out, ev) = self.plan_next_task(worker_id, ds, now)?;
        self.commit(&ev);
        Ok(out)
    }

    pub fn respond(
        &mut self,
        worker_id: &str,
        question_id: &str,
        reply: Reply,
        explanation: Option<&str>,
        ds: &Dataset,
        now: u64,
    ) -> Result<RespondOutcome, OrchestrationError> {
        let (out, ev) = self.plan_respond(worker_id, question_id, reply, explanation, ds, now)?;
        self.commit(&ev);
        Ok(out)
    }

    pub fn submit_rule(
        &mut self,
        worker_id: &str,
        question_id: &str,
        actions: &[BuilderAction],
        ds: &Dataset,
        now: u64,
    ) -> Result<SubmitOutcome, OrchestrationError> {
        let (out, ev) = self.plan_submit_rule(worker_id, question_id, actions, ds, now)?;
        self.commit(&ev);
        Ok(out)
    }
}
