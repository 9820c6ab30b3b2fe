//! The rendered-token corpus any client must reproduce byte for byte.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crowdrule_core::builder::{dnf_to_actions, render_tokens, replay, BuilderAction};
use crowdrule_core::demo;
use crowdrule_core::model::{read_jsonl, write_jsonl, PredicateRegistry};
use crowdrule_core::rule::{DnfExpr, Literal};

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct Row {
    case: String,
    rule: String,
    actions: Vec<BuilderAction>,
    tokens: String,
}

fn path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/golden/render_tokens.jsonl")
}

fn registry() -> PredicateRegistry {
    let mut specs = demo::predicates();
    specs.extend(demo::tires_predicates());
    PredicateRegistry::new(specs).unwrap()
}

fn random_dnf(rng: &mut ChaCha8Rng) -> DnfExpr {
    let atoms: Vec<Literal> = demo::registry()
        .atoms()
        .into_iter()
        .map(|(predicate_id, bindings)| Literal {
            predicate_id,
            bindings,
            negated: false,
        })
        .collect();
    let pool_size = rng.gen_range(1..=8);
    let pool: Vec<Literal> = atoms
        .choose_multiple(rng, pool_size)
        .map(|l| {
            if rng.gen_bool(0.3) {
                l.clone().negate()
            } else {
                l.clone()
            }
        })
        .collect();
    let clauses = (0..rng.gen_range(1..=4))
        .map(|_| {
            let k = rng.gen_range(1..=3).min(pool.len());
            pool.choose_multiple(rng, k).cloned().collect()
        })
        .collect();
    DnfExpr::new(clauses).unwrap()
}

fn corpus() -> Vec<Row> {
    let reg = registry();
    let mut dnfs = vec![("tires".to_string(), demo::tires_rule())];
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for i in 1..50 {
        dnfs.push((format!("random-{i:02}"), random_dnf(&mut rng)));
    }
    dnfs.into_iter()
        .map(|(case, d)| {
            let actions = dnf_to_actions(&d, &reg).unwrap();
            let tokens = render_tokens(&replay(&actions, &reg).unwrap());
            Row {
                case,
                rule: d.to_rule().to_string(),
                actions,
                tokens,
            }
        })
        .collect()
}

/// Run with `CROWDRULE_WRITE_GOLDEN=1` to regenerate.
#[test]
fn corpus_is_current() {
    let rows = corpus();
    let text = write_jsonl(&rows);
    if std::env::var_os("CROWDRULE_WRITE_GOLDEN").is_some() {
        std::fs::create_dir_all(path().parent().unwrap()).unwrap();
        std::fs::write(path(), &text).unwrap();
    }
    let on_disk = std::fs::read_to_string(path()).unwrap_or_default();
    assert!(on_disk == text, "data/golden/render_tokens.jsonl is stale");
    assert_eq!(rows.len(), 50);
}

#[test]
fn corpus_replays_to_its_tokens() {
    let reg = registry();
    let text = std::fs::read_to_string(path()).unwrap();
    let rows: Vec<(usize, Row)> = read_jsonl(&text, &["case", "actions", "tokens"]).unwrap();
    for (line, row) in rows {
        let b = replay(&row.actions, &reg).unwrap_or_else(|e| panic!("line {line}: {e:?}"));
        assert_eq!(render_tokens(&b), row.tokens, "line {line}");
    }
}

#[test]
fn tires_tokens() {
    let row = corpus().remove(0);
    assert_eq!(
        row.tokens,
        "( ( the road is wet AND the car has hydroplaning-resistant tires ) OR ( the road is snowy AND the car has studded tires ) )"
    );
}
