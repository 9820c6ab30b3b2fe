//! Seeded simulated workers.
//!
//! Personas talk to a [`Platform`]: the in-process [`LocalPlatform`] here,
//! or the HTTP service. Each worker gets its own RNG stream derived from
//! the run seed and its index, so a run is reproducible from
//! (population, config, seed).

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{positive_pairs, PositivePair, Proportion};
use crate::builder::{rule_to_actions, BuilderAction, RootChoice};
use crate::dataset::{Dataset, GroundTruth};
use crate::orchestration::{
    filter_workers, Answer, Condition, Event, ExperimentConfig, GoldKind, Hit, Mode, OrchestrationError, Orchestrator,
    Question, Reply, RespondOutcome, ResponseRecord, RuleSubmission, SessionInfo, SubmitOutcome,
};
use crate::rule::{to_dnf, DnfExpr, Literal, RuleExpr};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Persona {
    /// Answers correctly with probability `accuracy`.
    Diligent {
        accuracy: f64,
    },
    LazyYes,
    LazyNo,
    Random {
        yes_prob: f64,
    },
    /// Builds the hidden rule, each literal perturbed with probability `noise`.
    RuleWriter {
        noise: f64,
    },
}

impl Persona {
    pub fn label(&self) -> &'static str {
        match self {
            Persona::Diligent { .. } => "diligent",
            Persona::LazyYes => "lazy_yes",
            Persona::LazyNo => "lazy_no",
            Persona::Random { .. } => "random",
            Persona::RuleWriter { .. } => "rule_writer",
        }
    }

    fn probability(&self) -> Option<f64> {
        match *self {
            Persona::Diligent { accuracy } => Some(accuracy),
            Persona::Random { yes_prob } => Some(yes_prob),
            Persona::RuleWriter { noise } => Some(noise),
            Persona::LazyYes | Persona::LazyNo => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaSpec {
    #[serde(flatten)]
    pub persona: Persona,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PopulationError {
    #[error("{persona}: probability {value} is outside [0, 1]")]
    Probability { persona: &'static str, value: f64 },
}

pub fn validate_population(pop: &[PersonaSpec]) -> Result<(), PopulationError> {
    for p in pop {
        if let Some(v) = p.persona.probability() {
            if !(0.0..=1.0).contains(&v) {
                return Err(PopulationError::Probability {
                    persona: p.persona.label(),
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Explanations that pass the readability gate.
pub const EXPLANATIONS: [&str; 6] = [
    "The diagram shows the relationship between every quantity, so this particular hint would support the student.",
    "Considering the labelled blocks, this suggestion is appropriate because the student has already organized the information.",
    "Looking at the bracket and the blocks together, the student would benefit from reconsidering the total amount.",
    "Because the larger quantity is represented correctly, this explanation would probably confuse the student unnecessarily.",
    "The student completed several important elements already, therefore this recommendation addresses a different difficulty.",
    "Examining the diagram carefully, I believe this instruction matches the situation the student is currently facing.",
];

/// What a simulated worker can do.
pub trait Platform {
    type Error: fmt::Display;

    fn session(&mut self, worker_id: &str) -> Result<SessionInfo, Self::Error>;
    /// `None` once the worker has reached the HIT limit.
    fn next_task(&mut self, worker_id: &str) -> Result<Option<Hit>, Self::Error>;
    fn respond(
        &mut self,
        worker_id: &str,
        question_id: &str,
        reply: Reply,
        explanation: Option<&str>,
    ) -> Result<RespondOutcome, Self::Error>;
    fn submit_rule(
        &mut self,
        worker_id: &str,
        question_id: &str,
        actions: &[BuilderAction],
    ) -> Result<SubmitOutcome, Self::Error>;
}

/// An in-process orchestrator with a logical clock. Every committed event
/// is kept in `log`.
pub struct LocalPlatform<'a> {
    pub orchestrator: Orchestrator,
    pub ds: &'a Dataset,
    pub log: Vec<Event>,
    pub clock: u64,
}

impl<'a> LocalPlatform<'a> {
    pub fn new(config: ExperimentConfig, ds: &'a Dataset) -> Self {
        LocalPlatform {
            orchestrator: Orchestrator::new(config),
            ds,
            log: Vec::new(),
            clock: 0,
        }
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn keep<T>(&mut self, planned: Result<(T, Vec<Event>), OrchestrationError>) -> Result<T, OrchestrationError> {
        let (out, events) = planned?;
        self.orchestrator.commit(&events);
        self.log.extend(events);
        Ok(out)
    }
}

impl Platform for LocalPlatform<'_> {
    type Error = OrchestrationError;

    fn session(&mut self, worker_id: &str) -> Result<SessionInfo, Self::Error> {
        let now = self.tick();
        let p = self.orchestrator.plan_session(worker_id, self.ds, now);
        self.keep(p)
    }

    fn next_task(&mut self, worker_id: &str) -> Result<Option<Hit>, Self::Error> {
        let now = self.tick();
        let p = self.orchestrator.plan_next_task(worker_id, self.ds, now);
        match self.keep(p) {
            Ok(h) => Ok(Some(h)),
            Err(OrchestrationError::LimitExceeded { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn respond(
        &mut self,
        worker_id: &str,
        question_id: &str,
        reply: Reply,
        explanation: Option<&str>,
    ) -> Result<RespondOutcome, Self::Error> {
        let now = self.tick();
        let p = self
            .orchestrator
            .plan_respond(worker_id, question_id, reply, explanation, self.ds, now);
        self.keep(p)
    }

    fn submit_rule(
        &mut self,
        worker_id: &str,
        question_id: &str,
        actions: &[BuilderAction],
    ) -> Result<SubmitOutcome, Self::Error> {
        let now = self.tick();
        let p = self
            .orchestrator
            .plan_submit_rule(worker_id, question_id, actions, self.ds, now);
        self.keep(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimWorker {
    pub worker_id: String,
    pub persona: Persona,
    pub condition: Condition,
    pub hits_completed: u32,
    /// Set when the worker stopped before the HIT limit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abandoned: Option<String>,
}

const MAX_SKIPS_PER_HIT: usize = 3;
const RULE_ATTEMPTS: usize = 3;

struct Worker<'a> {
    id: String,
    persona: Persona,
    rng: ChaCha8Rng,
    ds: &'a Dataset,
    truth: &'a GroundTruth,
}

impl Worker<'_> {
    fn truth_of(&self, q: &Question) -> bool {
        if let Some(a) = q.given_answer {
            return a == Answer::Yes;
        }
        if q.gold_kind == GoldKind::FakeGold {
            return false;
        }
        self.ds
            .states
            .get(&q.state_id)
            .is_some_and(|s| self.truth.applies(s, &q.action_id, &self.ds.registry))
    }

    /// The answer, or `None` to skip.
    fn decide(&mut self, q: &Question, can_skip: bool) -> Option<Answer> {
        let yes = match self.persona {
            Persona::LazyYes => true,
            Persona::LazyNo => false,
            Persona::Random { yes_prob } => self.rng.gen_bool(yes_prob),
            Persona::Diligent { accuracy } => {
                let right = self.rng.gen_bool(accuracy);
                // an unsure worker skips when allowed
                if !right && can_skip && q.given_answer.is_none() {
                    return None;
                }
                self.truth_of(q) == right
            }
            Persona::RuleWriter { noise } => self.truth_of(q) == self.rng.gen_bool(1.0 - noise),
        };
        Some(if yes { Answer::Yes } else { Answer::No })
    }

    fn perturb(&mut self, dnf: &DnfExpr, noise: f64) -> RuleExpr {
        let atoms = self.ds.registry.atoms();
        let clauses = dnf
            .clauses()
            .iter()
            .map(|c| {
                c.iter()
                    .map(|l| {
                        if !self.rng.gen_bool(noise) {
                            return l.clone();
                        }
                        if self.rng.gen_bool(0.5) {
                            return l.clone().negate();
                        }
                        let (p, b) = atoms.choose(&mut self.rng).expect("registry has atoms").clone();
                        Literal {
                            predicate_id: p,
                            bindings: b,
                            negated: self.rng.gen_bool(0.5),
                        }
                    })
                    .collect()
            })
            .collect();
        DnfExpr::new(clauses)
            .map(|d| d.to_rule())
            .unwrap_or(RuleExpr::AllStates)
    }

    /// Rules to try for a question, in order.
    fn rule_attempts(&mut self, q: &Question) -> Vec<Vec<BuilderAction>> {
        let target = q.expert_rule.clone().or_else(|| self.truth.rule(&q.action_id).cloned());
        let root = |root| vec![BuilderAction::ChooseRoot { root }];
        let noise = match self.persona {
            Persona::LazyYes => return vec![root(RootChoice::AllStates)],
            Persona::LazyNo => return vec![root(RootChoice::NoStates)],
            Persona::Random { .. } => {
                let base = target
                    .as_ref()
                    .and_then(|t| to_dnf(t).ok())
                    .unwrap_or_else(|| single(self.ds));
                let r = self.perturb(&base, 1.0);
                let mut out: Vec<_> = rule_to_actions(&r, &self.ds.registry).ok().into_iter().collect();
                out.push(root(RootChoice::AllStates));
                return out;
            }
            Persona::Diligent { accuracy } => 1.0 - accuracy,
            Persona::RuleWriter { noise } => noise,
        };
        let Some(target) = target else {
            return vec![root(RootChoice::AllStates)];
        };
        let mut out = Vec::new();
        if noise > 0.0 {
            if let Ok(dnf) = to_dnf(&target) {
                for _ in 0..RULE_ATTEMPTS {
                    let r = self.perturb(&dnf, noise);
                    out.extend(rule_to_actions(&r, &self.ds.registry).ok());
                }
            }
        }
        out.extend(rule_to_actions(&target, &self.ds.registry).ok());
        out
    }
}

fn single(ds: &Dataset) -> DnfExpr {
    let (p, b) = ds.registry.atoms().into_iter().next().expect("registry has atoms");
    DnfExpr::new(vec![vec![Literal {
        predicate_id: p,
        bindings: b,
        negated: false,
    }]])
    .expect("non-empty")
}

fn work_hit<P: Platform>(
    p: &mut P,
    w: &mut Worker<'_>,
    hit: &Hit,
    condition: Condition,
) -> Result<Result<(), String>, P::Error> {
    match condition.mode() {
        Mode::CaseByCase => {
            let mut queue: Vec<Question> = hit.questions.clone();
            let mut skips = 0;
            while let Some(q) = (!queue.is_empty()).then(|| queue.remove(0)) {
                let can_skip = condition == Condition::FgSkip
                    && skips < MAX_SKIPS_PER_HIT
                    && q.section == crate::orchestration::Section::Task;
                let Some(answer) = w.decide(&q, can_skip) else {
                    skips += 1;
                    match p.respond(&w.id, &q.question_id, Reply::Skip, None)? {
                        RespondOutcome::Replaced { question } => queue.insert(0, question),
                        other => return Ok(Err(format!("skip not honoured: {other:?}"))),
                    }
                    continue;
                };
                let reply = if answer == Answer::Yes { Reply::Yes } else { Reply::No };
                let mut bank: Vec<&str> = EXPLANATIONS.to_vec();
                bank.shuffle(&mut w.rng);
                let mut explanation = condition.explanation_required(answer).then(|| bank[0]);
                let mut tries = 1;
                loop {
                    match p.respond(&w.id, &q.question_id, reply, explanation)? {
                        RespondOutcome::Accepted { .. } => break,
                        RespondOutcome::GateRejected { message, .. } => {
                            if tries >= bank.len() {
                                return Ok(Err(format!("gave up on the explanation: {message}")));
                            }
                            explanation = Some(bank[tries]);
                            tries += 1;
                        }
                        RespondOutcome::Replaced { .. } => return Ok(Err("unexpected replacement".into())),
                    }
                }
            }
        }
        Mode::RuleBased => {
            for q in &hit.questions {
                let mut done = false;
                let mut last = String::new();
                for attempt in w.rule_attempts(q) {
                    match p.submit_rule(&w.id, &q.question_id, &attempt)? {
                        SubmitOutcome::Accepted { .. } => {
                            done = true;
                            break;
                        }
                        SubmitOutcome::Rejected { reason } => last = reason,
                    }
                }
                if !done {
                    return Ok(Err(format!("no rule accepted: {last}")));
                }
            }
        }
    }
    Ok(Ok(()))
}

fn worker_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Runs every worker of the population to the HIT limit, one after another.
pub fn run_population<P: Platform>(
    platform: &mut P,
    population: &[PersonaSpec],
    ds: &Dataset,
    truth: &GroundTruth,
    seed: u64,
) -> Result<Vec<SimWorker>, P::Error> {
    let mut out = Vec::new();
    let mut index = 0;
    for spec in population {
        for k in 0..spec.count {
            let mut w = Worker {
                id: format!("{}-{k:03}", spec.persona.label()),
                persona: spec.persona,
                rng: worker_rng(seed, index),
                ds,
                truth,
            };
            index += 1;
            let s = platform.session(&w.id)?;
            let mut done = s.hits_completed;
            let mut abandoned = None;
            while let Some(hit) = platform.next_task(&w.id)? {
                match work_hit(platform, &mut w, &hit, s.condition)? {
                    Ok(()) => done += 1,
                    Err(why) => {
                        abandoned = Some(why);
                        break;
                    }
                }
            }
            out.push(SimWorker {
                worker_id: w.id,
                persona: spec.persona,
                condition: s.condition,
                hits_completed: done,
                abandoned,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub workers: Vec<SimWorker>,
    pub filtered_workers: Vec<String>,
    pub unfiltered_positives: usize,
    pub filtered_positives: usize,
    /// Precision against the hidden rules, before and after filtering.
    pub unfiltered_precision: Option<f64>,
    pub filtered_precision: Option<f64>,
}

/// Share of pairs the hidden rules agree with.
pub fn oracle_precision(pairs: &[PositivePair], truth: &GroundTruth, ds: &Dataset) -> Option<Proportion> {
    let correct = pairs
        .iter()
        .filter(|p| {
            ds.states
                .get(&p.state_id)
                .is_some_and(|s| truth.applies(s, &p.action_id, &ds.registry))
        })
        .count();
    Proportion::new(correct as u64, pairs.len() as u64).ok()
}

pub fn summarize(
    workers: Vec<SimWorker>,
    responses: &[ResponseRecord],
    rules: &[RuleSubmission],
    config: &ExperimentConfig,
    ds: &Dataset,
    truth: &GroundTruth,
) -> SimOutcome {
    let raw = positive_pairs(responses, rules, ds);
    let kept = filter_workers(responses, rules, ds, &config.filter);
    let filtered = positive_pairs(&kept.responses, &kept.rules, ds);
    SimOutcome {
        workers,
        filtered_workers: kept.filtered_workers.into_iter().map(|f| f.worker_id).collect(),
        unfiltered_positives: raw.len(),
        filtered_positives: filtered.len(),
        unfiltered_precision: oracle_precision(&raw, truth, ds).map(|p| p.value()),
        filtered_precision: oracle_precision(&filtered, truth, ds).map(|p| p.value()),
    }
}

/// In-process simulation. Returns the platform, holding the event log, and
/// the outcome.
pub fn simulate<'a>(
    population: &[PersonaSpec],
    config: ExperimentConfig,
    ds: &'a Dataset,
    truth: &GroundTruth,
    seed: u64,
) -> Result<(LocalPlatform<'a>, SimOutcome), SimError> {
    validate_population(population)?;
    let mut p = LocalPlatform::new(config.clone(), ds);
    let workers = run_population(&mut p, population, ds, truth, seed)?;
    let st = &p.orchestrator.state;
    let outcome = summarize(workers, &st.responses, &st.submissions, &config, ds, truth);
    Ok((p, outcome))
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Orchestration(#[from] OrchestrationError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestration::{gate_explanation, GateOutcome};

    #[test]
    fn explanation_bank_passes_gate() {
        for e in EXPLANATIONS {
            let out = gate_explanation(Some(e), Condition::FgExplainTwoSided, Answer::Yes);
            assert!(matches!(out, GateOutcome::Accept { .. }), "{e}: {out:?}");
        }
    }

    #[test]
    fn probabilities_checked() {
        let bad = [PersonaSpec {
            persona: Persona::Diligent { accuracy: 1.5 },
            count: 1,
        }];
        assert!(validate_population(&bad).is_err());
        let spec: Vec<PersonaSpec> =
            serde_json::from_str(r#"[{"kind":"diligent","accuracy":0.9,"count":2},{"kind":"lazy_yes","count":1}]"#)
                .unwrap();
        assert_eq!(spec[0].persona, Persona::Diligent { accuracy: 0.9 });
        assert_eq!(spec[1].count, 1);
        validate_population(&spec).unwrap();
    }
}
