//! Synthetic "diagram" domain used for demos, simulation and tests.
//!
//! Each state is a word-problem diagram at some level: a number of blocks,
//! possibly a bracket, a set of object labels, and which element holds the
//! larger value. Actions are hints a tutor might give. Every action has a
//! hidden ground-truth rule; its known-valid state is drawn from the states
//! that rule includes.
//!
//! Generation is deterministic. `data/demo/` holds the generated files and
//! a test keeps them in sync.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, GroundTruth, HelpExample, LabeledPair, TruthRule, TutorialItem};
use crate::model::{
    write_jsonl, ActionCatalog, ActionSpec, ArgSlot, PredicateRegistry, PredicateSpec, State, StateSet, Value,
};
use crate::orchestration::{Answer, ConditionTable};
use crate::rule::{eval_rule, partition, DnfExpr, Literal, RuleExpr};

pub const DEMO_SEED: u64 = 20_190_101;
pub const LEVELS: u32 = 12;
pub const STATES_PER_LEVEL: u32 = 45;
pub const ACTION_COUNT: usize = 100;
pub const LABELS: [&str; 4] = ["apples", "pencils", "marbles", "stickers"];
pub const KINDS: [&str; 3] = ["block", "bracket", "sum"];

/// Included-state range accepted for a generated ground-truth rule.
const TRUTH_MIN: usize = 8;
const TRUTH_MAX: usize = 90;

fn slot(name: &str, domain: Vec<Value>) -> ArgSlot {
    ArgSlot {
        name: name.into(),
        domain,
    }
}

fn ints(range: std::ops::RangeInclusive<i64>) -> Vec<Value> {
    range.map(Value::Int).collect()
}

fn pred(id: &str, shown: &str, negated: &str, slots: Vec<ArgSlot>, evaluator: &str, feature: &str) -> PredicateSpec {
    PredicateSpec {
        predicate_id: id.into(),
        display_template: shown.into(),
        negated_display: negated.into(),
        arg_slots: slots,
        evaluator_id: evaluator.into(),
        params: BTreeMap::from([("feature".to_string(), Value::from(feature))]),
    }
}

pub fn predicates() -> Vec<PredicateSpec> {
    let kinds = KINDS.iter().map(|k| Value::from(*k)).collect();
    let labels = LABELS.iter().map(|k| Value::from(*k)).collect();
    vec![
        pred(
            "larger_value_is",
            "the larger value is a {kind}",
            "the larger value is not a {kind}",
            vec![slot("kind", kinds)],
            "equals",
            "larger_value_kind",
        ),
        pred(
            "has_bracket",
            "the diagram has a bracket",
            "the diagram has no bracket",
            vec![],
            "is_true",
            "has_bracket",
        ),
        pred(
            "blocks_at_least",
            "there are at least {count} blocks",
            "there are fewer than {count} blocks",
            vec![slot("count", ints(1..=6))],
            "at_least",
            "block_count",
        ),
        pred(
            "blocks_exactly",
            "there are exactly {count} blocks",
            "there are not exactly {count} blocks",
            vec![slot("count", ints(0..=6))],
            "equals",
            "block_count",
        ),
        pred(
            "level_at_least",
            "the level is {level} or higher",
            "the level is below {level}",
            vec![slot("level", ints(2..=12))],
            "at_least",
            "level",
        ),
        pred(
            "level_at_most",
            "the level is {level} or lower",
            "the level is above {level}",
            vec![slot("level", ints(1..=11))],
            "at_most",
            "level",
        ),
        pred(
            "has_label",
            "some blocks are labelled {label}",
            "no block is labelled {label}",
            vec![slot("label", labels)],
            "contains",
            "label_set",
        ),
        pred(
            "blocks_between",
            "there are between {low} and {high} blocks",
            "there are not between {low} and {high} blocks",
            vec![slot("low", ints(1..=3)), slot("high", ints(3..=6))],
            "between",
            "block_count",
        ),
    ]
}

pub fn registry() -> PredicateRegistry {
    PredicateRegistry::new(predicates()).expect("demo predicates are valid")
}

/// The two-predicate road example used to illustrate parenthesization.
pub fn tires_predicates() -> Vec<PredicateSpec> {
    let v = |xs: &[&str]| xs.iter().map(|x| Value::from(*x)).collect();
    vec![
        pred(
            "road_is",
            "the road is {condition}",
            "the road is not {condition}",
            vec![slot("condition", v(&["wet", "snowy", "dry"]))],
            "equals",
            "road",
        ),
        pred(
            "car_has",
            "the car has {tires} tires",
            "the car does not have {tires} tires",
            vec![slot("tires", v(&["hydroplaning-resistant", "studded", "all-season"]))],
            "equals",
            "tires",
        ),
    ]
}

/// `( ( wet AND hydroplaning-resistant ) OR ( snowy AND studded ) )`
pub fn tires_rule() -> DnfExpr {
    let road = |c: &str| Literal::new("road_is").with("condition", c);
    let car = |t: &str| Literal::new("car_has").with("tires", t);
    DnfExpr::new(vec![
        vec![road("wet"), car("hydroplaning-resistant")],
        vec![road("snowy"), car("studded")],
    ])
    .expect("non-empty")
}

fn render(level: u32, blocks: i64, bracket: bool, larger: &str, labels: &str) -> String {
    let labels = if labels.is_empty() { "none" } else { labels };
    format!(
        "level {level} | blocks: {blocks} | bracket: {} | larger value: {larger} | labels: {labels}",
        if bracket { "yes" } else { "no" }
    )
}

fn states(rng: &mut ChaCha8Rng) -> Vec<State> {
    let mut out = Vec::with_capacity((LEVELS * STATES_PER_LEVEL) as usize);
    for level in 1..=LEVELS {
        for i in 0..STATES_PER_LEVEL {
            let larger = *KINDS.choose(rng).unwrap();
            let bracket = larger == "bracket" || rng.gen_bool(0.35);
            let blocks: i64 = rng.gen_range(0..=6);
            let labels: Vec<&str> = LABELS.iter().copied().filter(|_| rng.gen_bool(0.4)).collect();
            let labels = labels.join(",");
            let features = BTreeMap::from([
                ("larger_value_kind".to_string(), Value::from(larger)),
                ("block_count".to_string(), Value::Int(blocks)),
                ("has_bracket".to_string(), Value::Bool(bracket)),
                ("label_set".to_string(), Value::from(labels.as_str())),
            ]);
            out.push(State {
                state_id: format!("s{level:02}-{i:02}"),
                level,
                render: render(level, blocks, bracket, larger, &labels),
                features,
            });
        }
    }
    out
}

const HINTS: [&str; 10] = [
    "Ask the student to count the {label} blocks again.",
    "Point at the bracket and ask what total it stands for.",
    "Suggest drawing one more block for the missing number.",
    "Remind the student that the larger value goes on the longer bar.",
    "Ask which block shows the difference between the two amounts.",
    "Suggest labelling each block with the {label} it stands for.",
    "Encourage the student to check the diagram against the story.",
    "Tell the student to split the bracket into {n} equal parts.",
    "Ask the student to remove the block that is counted twice.",
    "Suggest writing the number sentence under the diagram.",
];

fn hint_text(i: usize, rng: &mut ChaCha8Rng) -> String {
    let label = LABELS.choose(rng).unwrap();
    let n = rng.gen_range(2..=5);
    let base = HINTS[i % HINTS.len()]
        .replace("{label}", label.trim_end_matches('s'))
        .replace("{n}", &n.to_string());
    format!("Hint {}: {base}", i + 1)
}

fn feature_of(reg: &PredicateRegistry, predicate_id: &str) -> Option<Value> {
    reg.get(predicate_id).and_then(|p| p.params.get("feature").cloned())
}

/// Random 1-2 clause rule; literals in a clause test distinct features.
fn random_truth(rng: &mut ChaCha8Rng, reg: &PredicateRegistry, atoms: &[(String, BTreeMap<String, Value>)]) -> DnfExpr {
    let clauses = (0..rng.gen_range(1..=2))
        .map(|_| {
            let mut used = Vec::new();
            let mut clause = Vec::new();
            for _ in 0..rng.gen_range(1..=3) {
                let (pid, b) = atoms.choose(rng).unwrap();
                let feature = feature_of(reg, pid);
                if used.contains(&feature) {
                    continue;
                }
                used.push(feature);
                clause.push(Literal {
                    predicate_id: pid.clone(),
                    bindings: b.clone(),
                    negated: rng.gen_bool(0.3),
                });
            }
            clause
        })
        .collect();
    DnfExpr::new(clauses).expect("non-empty")
}

#[derive(Debug, Clone)]
pub struct DemoData {
    pub predicates: Vec<PredicateSpec>,
    pub states: Vec<State>,
    pub actions: Vec<ActionSpec>,
    pub truth: Vec<TruthRule>,
    pub tutorial: Vec<TutorialItem>,
    pub negative_gold: Vec<LabeledPair>,
    pub help_examples: Vec<HelpExample>,
}

pub fn generate() -> DemoData {
    let mut rng = ChaCha8Rng::seed_from_u64(DEMO_SEED);
    let predicates = predicates();
    let reg = PredicateRegistry::new(predicates.clone()).expect("valid");
    let states = states(&mut rng);
    let set = StateSet::from_states(states.clone()).expect("unique ids");
    let atoms = reg.atoms();

    let mut actions = Vec::with_capacity(ACTION_COUNT);
    let mut truth = Vec::with_capacity(ACTION_COUNT);
    let mut included: Vec<Vec<String>> = Vec::with_capacity(ACTION_COUNT);
    for i in 0..ACTION_COUNT {
        let (rule, inc) = loop {
            let rule = random_truth(&mut rng, &reg, &atoms).to_rule();
            let p = partition(&rule, &set, &reg).expect("demo rules evaluate");
            if (TRUTH_MIN..=TRUTH_MAX).contains(&p.included.len()) {
                break (rule, p.included);
            }
        };
        let action_id = format!("a{:03}", i + 1);
        actions.push(ActionSpec {
            action_id: action_id.clone(),
            text: hint_text(i, &mut rng),
            known_valid_state: Some(inc.choose(&mut rng).unwrap().clone()),
            is_fake_gold: false,
        });
        truth.push(TruthRule { action_id, rule });
        included.push(inc);
    }

    // expert-labeled pairs: six yes and six no for the tutorial, ten no for
    // negative gold, all on distinct actions
    let mut order: Vec<usize> = (0..ACTION_COUNT).collect();
    order.shuffle(&mut rng);
    let mut order = order.into_iter();
    let describe = |rule: &RuleExpr| crate::builder::render_rule(rule, &reg);
    let mut tutorial = Vec::new();
    for answer in [Answer::Yes, Answer::No].into_iter().cycle().take(12) {
        let a = order.next().unwrap();
        let state = loop {
            let s = states.choose(&mut rng).unwrap();
            if eval_rule(&truth[a].rule, s, &reg).unwrap() == (answer == Answer::Yes) {
                break s;
            }
        };
        let explanation = match answer {
            Answer::Yes => format!(
                "Yes. This hint fits here because in this diagram {}.",
                describe(&truth[a].rule)
            ),
            _ => format!(
                "No. This hint only fits when {}, which is not the case in this diagram.",
                describe(&truth[a].rule)
            ),
        };
        tutorial.push(TutorialItem {
            state_id: state.state_id.clone(),
            action_id: actions[a].action_id.clone(),
            answer,
            explanation,
        });
    }
    let mut negative_gold = Vec::new();
    for _ in 0..10 {
        let a = order.next().unwrap();
        let state = loop {
            let s = states.choose(&mut rng).unwrap();
            if !included[a].contains(&s.state_id) {
                break s;
            }
        };
        negative_gold.push(LabeledPair {
            state_id: state.state_id.clone(),
            action_id: actions[a].action_id.clone(),
        });
    }
    let help_examples = (0..6)
        .map(|_| {
            let a = order.next().unwrap();
            HelpExample {
                action_id: actions[a].action_id.clone(),
                rule: truth[a].rule.clone(),
                explanation: format!("This hint only makes sense when {}.", describe(&truth[a].rule)),
            }
        })
        .collect();

    DemoData {
        predicates,
        states,
        actions,
        truth,
        tutorial,
        negative_gold,
        help_examples,
    }
}

impl DemoData {
    pub fn dataset(&self) -> Dataset {
        Dataset {
            states: StateSet::from_states(self.states.clone()).expect("unique ids"),
            actions: ActionCatalog::new(self.actions.clone()),
            registry: PredicateRegistry::new(self.predicates.clone()).expect("valid"),
            tutorial: self.tutorial.clone(),
            negative_gold: self.negative_gold.clone(),
            help_examples: self.help_examples.clone(),
            conditions: ConditionTable::standard(),
        }
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth::new(self.truth.clone())
    }

    /// File name and content of every dataset file.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        let mut conditions = serde_json::to_string_pretty(&ConditionTable::standard()).expect("serializes");
        conditions.push('\n');
        vec![
            ("states.jsonl", write_jsonl(&self.states)),
            ("actions.jsonl", write_jsonl(&self.actions)),
            ("predicates.jsonl", write_jsonl(&self.predicates)),
            ("tutorial.jsonl", write_jsonl(&self.tutorial)),
            ("negative_gold.jsonl", write_jsonl(&self.negative_gold)),
            ("help_examples.jsonl", write_jsonl(&self.help_examples)),
            ("truth.jsonl", write_jsonl(&self.truth)),
            ("conditions.json", conditions),
        ]
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> io::Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (name, content) in self.files() {
            std::fs::write(dir.join(name), content)?;
        }
        Ok(())
    }
}
