use std::sync::OnceLock;

use proptest::prelude::*;

use crowdrule_core::analytics::*;
use crowdrule_core::dataset::Dataset;
use crowdrule_core::demo;
use crowdrule_core::model::write_jsonl;
use crowdrule_core::orchestration::{Answer, Condition, GoldKind, ResponseRecord, Section};

/// Brute force over every table with the observed margins, in floating
/// point with u128 binomials from Pascal's triangle.
fn oracle(t: &ContingencyTable, tails: Tails) -> f64 {
    let mut pascal = vec![vec![1u128; 1]];
    for n in 1..=t.total() as usize {
        let prev = &pascal[n - 1];
        let mut row = vec![1u128; n + 1];
        for k in 1..n {
            row[k] = prev[k - 1] + prev[k];
        }
        pascal.push(row);
    }
    let choose = |n: u64, k: u64| if k > n { 0 } else { pascal[n as usize][k as usize] };
    let (r1, r2, c1) = (t.a + t.b, t.c + t.d, t.a + t.c);
    let n = t.total();
    if r1 == 0 || r2 == 0 || c1 == 0 || c1 == n {
        return 1.0;
    }
    let denom = choose(n, c1) as f64;
    let prob = |x: u64| (choose(r1, x) * choose(r2, c1 - x)) as f64 / denom;
    let observed = prob(t.a);
    let mut p = 0.0;
    // every top-left value that keeps all four cells non-negative
    for x in 0..=r1 {
        if x > c1 || c1 - x > r2 {
            continue;
        }
        let px = prob(x);
        let keep = match tails {
            Tails::Less => x <= t.a,
            Tails::Greater => x >= t.a,
            Tails::Two => px <= observed * (1.0 + 1e-12),
        };
        if keep {
            p += px;
        }
    }
    p.min(1.0)
}

fn arb_table() -> impl Strategy<Value = ContingencyTable> {
    (0u64..=40, 0u64..=40, 0u64..=40, 0u64..=40)
        .prop_filter("total at most 40", |(a, b, c, d)| a + b + c + d <= 40)
        .prop_map(|(a, b, c, d)| ContingencyTable::new(a, b, c, d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fisher_matches_enumeration(t in arb_table()) {
        for tails in [Tails::Less, Tails::Greater, Tails::Two] {
            let p = fisher_exact(&t, tails);
            let q = oracle(&t, tails);
            prop_assert!((p - q).abs() <= 1e-9, "{:?} {:?}: {} vs {}", t, tails, p, q);
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn two_tailed_symmetry(t in arb_table()) {
        let p = fisher_exact_rational(&t, Tails::Two);
        prop_assert_eq!(&fisher_exact_rational(&t.swap_rows(), Tails::Two), &p);
        prop_assert_eq!(&fisher_exact_rational(&t.swap_columns(), Tails::Two), &p);
        prop_assert_eq!(&fisher_exact_rational(&t.transpose(), Tails::Two), &p);
        // one tail in one orientation is the other tail in the swapped one
        prop_assert_eq!(
            fisher_exact_rational(&t, Tails::Less),
            fisher_exact_rational(&t.swap_rows(), Tails::Greater)
        );
    }

    #[test]
    fn identical_proportions_give_one(x in 0u64..=6, y in 0u64..=6, k in 1u64..=3, m in 1u64..=3) {
        let t = ContingencyTable::new(k * x, k * y, m * x, m * y);
        prop_assert_eq!(fisher_exact(&t, Tails::Two), 1.0);
    }
}

fn ds() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| demo::generate().dataset())
}

fn response(i: usize, answer: Answer, condition: Condition) -> ResponseRecord {
    ResponseRecord {
        worker_id: format!("w{}", i % 7),
        hit_id: "h1".into(),
        question_id: format!("q{i}"),
        state_id: ds().states.as_slice()[i % 540].state_id.clone(),
        action_id: format!("a{:03}", i % 100 + 1),
        gold_kind: GoldKind::None,
        section: Section::Task,
        answer,
        explanation: None,
        condition,
        timestamp: i as u64,
    }
}

#[test]
fn positive_rate_values() {
    let rs = |yes: usize, n: usize| -> Vec<ResponseRecord> {
        (0..n)
            .map(|i| {
                response(
                    i,
                    if i < yes { Answer::Yes } else { Answer::No },
                    Condition::FgExplainOneSided,
                )
            })
            .collect()
    };
    assert_eq!(positive_rate(&rs(0, 10)).unwrap().value(), 0.0);
    assert_eq!(positive_rate(&rs(5, 10)).unwrap().value(), 0.5);
    let p = positive_rate(&rs(103, 1000)).unwrap();
    assert_eq!(format!("{:.3}", p.value()), "0.103");
    let mut with_skip = rs(5, 10);
    with_skip.push(response(99, Answer::SkipReplaced, Condition::FgSkip));
    assert_eq!(positive_rate(&with_skip).unwrap().denominator, 10);
    assert!(positive_rate(&[]).is_err());
}

fn positives(n: usize) -> Vec<PositivePair> {
    (0..n)
        .map(|i| PositivePair {
            source: PairSource::Response {
                question_id: format!("q{i}"),
            },
            worker_id: format!("w{}", i % 9),
            condition: Condition::ALL[i % 9],
            state_id: ds().states.as_slice()[i % 540].state_id.clone(),
            action_id: format!("a{:03}", i % 100 + 1),
        })
        .collect()
}

#[test]
fn blinded_export_sizes() {
    let pool = positives(1246);
    let e = export_blinded(&pool, 102, 4, ds());
    assert_eq!(e.items.len(), 102);
    assert_eq!(e.map.len(), 102);
    assert!(!e.clamped);
    let distinct: std::collections::BTreeSet<_> = e.map.values().map(|p| &p.source).collect();
    assert_eq!(distinct.len(), 102);
    assert!(export_blinded(&pool, 0, 4, ds()).items.is_empty());
    let all = export_blinded(&pool[..30], 50, 4, ds());
    assert_eq!((all.items.len(), all.clamped), (30, true));
    assert_eq!(export_blinded(&pool, 102, 4, ds()), e);
    assert_ne!(export_blinded(&pool, 102, 5, ds()).map, e.map);
}

#[test]
fn blinded_file_has_no_condition_ids() {
    let e = export_blinded(&positives(900), 500, 1, ds());
    let file = write_jsonl(&e.items);
    for c in Condition::ALL {
        assert!(!file.contains(c.id()), "{c} leaked");
    }
    for w in 0..9 {
        assert!(!file.contains(&format!("\"w{w}\"")));
    }
    let first: serde_json::Value = serde_json::from_str(file.lines().next().unwrap()).unwrap();
    let keys: Vec<_> = first.as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys, ["action_text", "blinded_id", "state_render"]);
}

#[test]
fn judgment_import() {
    let e = export_blinded(&positives(10), 3, 1, ds());
    let ids: Vec<_> = e.map.keys().cloned().collect();
    let text = format!(
        "{{\"blinded_id\":\"{}\",\"verdict\":\"correct\"}}\n\n{{\"blinded_id\":\"{}\",\"verdict\":\"incorrect\",\"judge_id\":\"b\"}}\n",
        ids[0], ids[1]
    );
    let js = import_judgments(&text, &e.map).unwrap();
    assert_eq!(js.len(), 2);
    assert_eq!(precision(&js).unwrap().value(), 0.5);
    let dup = format!("{}{}", text, text.lines().next().unwrap());
    assert!(matches!(
        import_judgments(&dup, &e.map),
        Err(JudgingError::Duplicate { line: 4, .. })
    ));
    let unknown = "{\"blinded_id\":\"nope\",\"verdict\":\"correct\"}";
    assert!(matches!(
        import_judgments(unknown, &e.map),
        Err(JudgingError::Unknown { .. })
    ));
    assert!(import_judgments("{\"blinded_id\":\"x\"}", &e.map).is_err());
}

#[test]
fn report_rows_and_pairs() {
    let conds = [
        Condition::Baseline,
        Condition::TutorialOverload,
        Condition::GoldOverload,
        Condition::FakeGold,
    ];
    let mut rs = Vec::new();
    for (k, c) in conds.iter().enumerate() {
        for i in 0..20 {
            let answer = if c == &Condition::GoldOverload || i % (k + 2) != 0 {
                Answer::No
            } else {
                Answer::Yes
            };
            let mut r = response(i + 100 * k, answer, *c);
            r.worker_id = format!("{c}-{}", i % 3);
            rs.push(r);
        }
    }
    let pos = positive_pairs(&rs, &[], ds());
    let e = export_blinded(&pos, 1000, 2, ds());
    let truth = demo::generate().ground_truth();
    let js = oracle_judgments(&e.map, &truth, ds(), "oracle");
    let r = report(&rs, &[], &e.map, &js, ds(), &ReportConfig::default());
    assert_eq!(r.rows.len(), 4);
    let precision_tests = r.pairwise.iter().filter(|p| p.measure == Measure::Precision).count();
    assert_eq!(precision_tests, 6);
    let gold = r.rows.iter().find(|x| x.condition == Condition::GoldOverload).unwrap();
    assert_eq!((gold.positives, gold.precision), (0, None));
    let base = r.rows.iter().find(|x| x.condition == Condition::Baseline).unwrap();
    assert_eq!((base.positives, base.answered, base.workers), (10, 20, 3));
    assert_eq!(base.positive_rate, Some(0.5));
    assert!(render_text(&r).contains("n/a"));
    let svg = render_svg(&r);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<rect").count(), 4);
    let no_judge = report(&rs, &[], &e.map, &[], ds(), &ReportConfig::default());
    assert!(no_judge.warnings.iter().any(|w| w.contains("no judgments")));
}
