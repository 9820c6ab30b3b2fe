use rand::seq::SliceRandom;
use rand::Rng;

use super::{
    fake_gold_action, Answer, Condition, GoldKind, Hit, Mode, OrchestrationError, Question, Section, WorkerProfile,
};
use crate::dataset::Dataset;
use crate::model::ActionSpec;

const DRAW_ATTEMPTS: usize = 64;

fn question(state_id: &str, action_id: &str, gold_kind: GoldKind, section: Section) -> Question {
    Question {
        question_id: String::new(),
        state_id: state_id.to_string(),
        action_id: action_id.to_string(),
        gold_kind,
        section,
        given_answer: None,
        tutorial_explanation: None,
        expert_rule: None,
    }
}

fn real_actions(ds: &Dataset) -> Vec<&ActionSpec> {
    ds.actions.real().collect()
}

fn random_state<'a>(ds: &'a Dataset, rng: &mut impl Rng) -> Result<&'a str, OrchestrationError> {
    ds.states
        .as_slice()
        .choose(rng)
        .map(|s| s.state_id.as_str())
        .ok_or(OrchestrationError::ExhaustedPool("states"))
}

/// Draws until `ok` holds, falling back to the last draw when the pool is
/// too small to avoid repeats.
fn draw<T: Clone>(
    mut gen: impl FnMut(&mut dyn rand::RngCore) -> Option<T>,
    ok: impl Fn(&T) -> bool,
    rng: &mut dyn rand::RngCore,
) -> Option<T> {
    let mut last = None;
    for _ in 0..DRAW_ATTEMPTS {
        let x = gen(rng)?;
        if ok(&x) {
            return Some(x);
        }
        last = Some(x);
    }
    last
}

/// A (state, action) pair with no known answer, distinct from `taken`.
fn unknown_pair(
    ds: &Dataset,
    fixed_state: Option<&str>,
    taken: &[(String, String)],
    rng: &mut dyn rand::RngCore,
) -> Result<(String, String), OrchestrationError> {
    let actions = real_actions(ds);
    if actions.is_empty() {
        return Err(OrchestrationError::ExhaustedPool("actions"));
    }
    if ds.states.is_empty() {
        return Err(OrchestrationError::ExhaustedPool("states"));
    }
    let gen = |rng: &mut dyn rand::RngCore| {
        let a = actions.choose(rng)?;
        let s = match fixed_state {
            Some(s) => s.to_string(),
            None => ds.states.as_slice().choose(rng)?.state_id.clone(),
        };
        Some((s, a.action_id.clone()))
    };
    let fresh = |p: &(String, String)| !taken.iter().any(|t| t == p || (fixed_state.is_some() && t.1 == p.1));
    draw(gen, fresh, rng).ok_or(OrchestrationError::ExhaustedPool("actions"))
}

fn positive_pair(
    ds: &Dataset,
    taken: &[(String, String)],
    rng: &mut dyn rand::RngCore,
) -> Result<(String, String), OrchestrationError> {
    let actions = real_actions(ds);
    let gen = |rng: &mut dyn rand::RngCore| {
        let a = actions.choose(rng)?;
        Some((a.known_valid_state.clone()?, a.action_id.clone()))
    };
    draw(gen, |p| !taken.contains(p), rng).ok_or(OrchestrationError::ExhaustedPool("actions"))
}

/// Builds the next HIT for `worker`. Tutorial questions come first in
/// fixture order; the task portion is shuffled.
pub fn build_hit(
    worker: &WorkerProfile,
    ds: &Dataset,
    hit_id: &str,
    issued_at: u64,
    rng: &mut impl Rng,
) -> Result<Hit, OrchestrationError> {
    let condition = worker.condition;
    let params = ds.conditions.get(condition)?;
    let hit_index = worker.hits_issued + 1;
    if hit_index > params.hit_limit {
        return Err(OrchestrationError::LimitExceeded {
            limit: params.hit_limit,
        });
    }
    let comp = *params.composition(hit_index);
    let mut tutorial: Vec<Question> = Vec::new();
    let mut task: Vec<Question> = Vec::new();
    let mut taken: Vec<(String, String)> = Vec::new();

    match condition.mode() {
        Mode::CaseByCase => {
            let mut pool: Vec<_> = ds.tutorial.iter().collect();
            pool.shuffle(rng);
            let take = comp.tutorial as usize;
            if pool.len() < take {
                return Err(OrchestrationError::ExhaustedPool("tutorial items"));
            }
            for item in pool.drain(..take) {
                let mut q = question(&item.state_id, &item.action_id, GoldKind::Tutorial, Section::Tutorial);
                q.given_answer = Some(item.answer);
                q.tutorial_explanation = Some(item.explanation.clone());
                tutorial.push(q);
            }
            for (answer, n) in [(Answer::Yes, comp.given_yes), (Answer::No, comp.given_no)] {
                let picked: Vec<_> = pool
                    .iter()
                    .filter(|t| t.answer == answer)
                    .take(n as usize)
                    .copied()
                    .collect();
                if picked.len() < n as usize {
                    return Err(OrchestrationError::ExhaustedPool("tutorial items"));
                }
                for item in picked {
                    let mut q = question(&item.state_id, &item.action_id, GoldKind::Tutorial, Section::Task);
                    q.given_answer = Some(item.answer);
                    q.tutorial_explanation = Some(item.explanation.clone());
                    task.push(q);
                }
            }

            for _ in 0..comp.positive_gold {
                let (s, a) = positive_pair(ds, &taken, rng)?;
                task.push(question(&s, &a, GoldKind::PositiveGold, Section::Task));
                taken.push((s, a));
            }
            let continuity = match condition {
                Condition::FgContinuity => Some(match task.iter().find(|q| q.gold_kind == GoldKind::PositiveGold) {
                    Some(q) => q.state_id.clone(),
                    None => random_state(ds, rng)?.to_string(),
                }),
                _ => None,
            };
            let negatives: Vec<_> = ds
                .negative_gold
                .choose_multiple(rng, comp.negative_gold as usize)
                .collect();
            if negatives.len() < comp.negative_gold as usize {
                return Err(OrchestrationError::ExhaustedPool("negative gold"));
            }
            for p in negatives {
                task.push(question(
                    &p.state_id,
                    &p.action_id,
                    GoldKind::NegativeGold,
                    Section::Task,
                ));
                taken.push((p.state_id.clone(), p.action_id.clone()));
            }
            for _ in 0..comp.fake_gold {
                let s = match &continuity {
                    Some(s) => s.clone(),
                    None => random_state(ds, rng)?.to_string(),
                };
                // action id is fixed once positions are known
                task.push(question(&s, "", GoldKind::FakeGold, Section::Task));
            }
            for _ in 0..comp.unknown {
                let (s, a) = unknown_pair(ds, continuity.as_deref(), &taken, rng)?;
                task.push(question(&s, &a, GoldKind::None, Section::Task));
                taken.push((s, a));
            }
        }
        Mode::RuleBased => {
            let examples: Vec<_> = ds.help_examples.choose_multiple(rng, comp.tutorial as usize).collect();
            if examples.len() < comp.tutorial as usize {
                return Err(OrchestrationError::ExhaustedPool("expert examples"));
            }
            for ex in examples {
                let action = ds.actions.get(&ex.action_id).expect("checked at load");
                let state = action.known_valid_state.clone().expect("real action");
                let mut q = question(&state, &ex.action_id, GoldKind::Tutorial, Section::Tutorial);
                q.tutorial_explanation = Some(ex.explanation.clone());
                q.expert_rule = Some(ex.rule.clone());
                tutorial.push(q);
                taken.push((state, ex.action_id.clone()));
            }
            let used: Vec<&str> = taken.iter().map(|t| t.1.as_str()).collect();
            let candidates: Vec<_> = real_actions(ds)
                .into_iter()
                .filter(|a| !used.contains(&a.action_id.as_str()))
                .collect();
            let picked: Vec<_> = candidates.choose_multiple(rng, comp.unknown as usize).collect();
            if picked.len() < comp.unknown as usize {
                return Err(OrchestrationError::ExhaustedPool("actions"));
            }
            for a in picked {
                let state = a.known_valid_state.clone().expect("real action");
                task.push(question(&state, &a.action_id, GoldKind::None, Section::Task));
            }
        }
    }

    task.shuffle(rng);
    let mut questions = tutorial;
    questions.extend(task);
    let total = questions.len();
    for (i, q) in questions.iter_mut().enumerate() {
        q.question_id = format!("{hit_id}-q{i}");
        if q.gold_kind == GoldKind::FakeGold {
            q.action_id = fake_gold_action((total - i - 1) as u32).action_id;
        }
    }
    Ok(Hit {
        hit_id: hit_id.to_string(),
        worker_id: worker.worker_id.clone(),
        condition,
        hit_index,
        questions,
        issued_at,
        time_limit_minutes: params.time_limit_minutes,
        next_question: total as u32,
    })
}

/// A replacement for a skipped question, of the same kind. The caller puts
/// it in place of the old one.
pub fn handle_skip(
    hit: &Hit,
    question_id: &str,
    ds: &Dataset,
    rng: &mut impl Rng,
) -> Result<Question, OrchestrationError> {
    if hit.condition != Condition::FgSkip {
        return Err(OrchestrationError::ConditionMismatch(hit.condition));
    }
    let old = hit
        .question(question_id)
        .ok_or_else(|| OrchestrationError::UnknownQuestion(question_id.to_string()))?;
    if old.section != Section::Task {
        return Err(OrchestrationError::NotSkippable);
    }
    let taken: Vec<(String, String)> = hit
        .questions
        .iter()
        .map(|q| (q.state_id.clone(), q.action_id.clone()))
        .collect();
    let mut q = match old.gold_kind {
        GoldKind::None => {
            let (s, a) = unknown_pair(ds, None, &taken, rng)?;
            question(&s, &a, GoldKind::None, Section::Task)
        }
        GoldKind::PositiveGold => {
            let (s, a) = positive_pair(ds, &taken, rng)?;
            question(&s, &a, GoldKind::PositiveGold, Section::Task)
        }
        GoldKind::FakeGold => {
            let states = ds.states.as_slice();
            let gen = |rng: &mut dyn rand::RngCore| states.choose(rng).map(|s| s.state_id.clone());
            let s = draw(gen, |s| s != &old.state_id, rng).ok_or(OrchestrationError::ExhaustedPool("states"))?;
            question(&s, &old.action_id, GoldKind::FakeGold, Section::Task)
        }
        GoldKind::NegativeGold => {
            let pool = &ds.negative_gold;
            let gen = |rng: &mut dyn rand::RngCore| pool.choose(rng).cloned();
            let p = draw(
                gen,
                |p| !taken.contains(&(p.state_id.clone(), p.action_id.clone())),
                rng,
            )
            .ok_or(OrchestrationError::ExhaustedPool("negative gold"))?;
            question(&p.state_id, &p.action_id, GoldKind::NegativeGold, Section::Task)
        }
        GoldKind::Tutorial => {
            let pool: Vec<_> = ds
                .tutorial
                .iter()
                .filter(|t| Some(t.answer) == old.given_answer)
                .collect();
            let gen = |rng: &mut dyn rand::RngCore| pool.choose(rng).copied();
            let t = draw(
                gen,
                |t| !taken.contains(&(t.state_id.clone(), t.action_id.clone())),
                rng,
            )
            .ok_or(OrchestrationError::ExhaustedPool("tutorial items"))?;
            let mut q = question(&t.state_id, &t.action_id, GoldKind::Tutorial, Section::Task);
            q.given_answer = Some(t.answer);
            q.tutorial_explanation = Some(t.explanation.clone());
            q
        }
    };
    q.question_id = format!("{}-q{}", hit.hit_id, hit.next_question);
    Ok(q)
}
