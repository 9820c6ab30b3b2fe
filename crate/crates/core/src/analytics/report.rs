use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{fisher_exact, is_unknown_task, BlindMap, ContingencyTable, JudgmentRecord, Tails, Verdict};
use crate::dataset::Dataset;
use crate::orchestration::{filter_workers, Answer, Condition, FilterConfig, ResponseRecord, RuleSubmission, Section};
use crate::rule::partition;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    #[serde(default)]
    pub tails: Tails,
    #[serde(default)]
    pub filter: FilterConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub condition: Condition,
    pub workers: usize,
    pub filtered_workers: usize,
    /// Retained answers to unknown questions; for rules, states judged.
    pub answered: u64,
    pub positives: u64,
    pub positive_rate: Option<f64>,
    pub judged: u64,
    pub correct: u64,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Precision,
    PositiveRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub measure: Measure,
    pub first: Condition,
    pub second: Condition,
    /// Rows are the two conditions; columns correct/incorrect or yes/no.
    pub table: ContingencyTable,
    pub tails: Tails,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ConditionRow>,
    pub pairwise: Vec<PairwiseTest>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Default)]
struct Tally {
    workers: BTreeSet<String>,
    filtered: BTreeSet<String>,
    answered: u64,
    positives: u64,
    judged: u64,
    correct: u64,
}

/// Filters the raw records, then tallies positives and judged precision
/// per condition and compares every pair of conditions.
pub fn report(
    responses: &[ResponseRecord],
    rules: &[RuleSubmission],
    map: &BlindMap,
    judgments: &[JudgmentRecord],
    ds: &Dataset,
    cfg: &ReportConfig,
) -> Report {
    let mut warnings = Vec::new();
    let mut t: BTreeMap<Condition, Tally> = BTreeMap::new();
    for r in responses {
        t.entry(r.condition).or_default().workers.insert(r.worker_id.clone());
    }
    for s in rules {
        t.entry(s.condition).or_default().workers.insert(s.worker_id.clone());
    }
    let kept = filter_workers(responses, rules, ds, &cfg.filter);
    let worker_condition: BTreeMap<&str, Condition> = responses
        .iter()
        .map(|r| (r.worker_id.as_str(), r.condition))
        .chain(rules.iter().map(|s| (s.worker_id.as_str(), s.condition)))
        .collect();
    for f in &kept.filtered_workers {
        if let Some(c) = worker_condition.get(f.worker_id.as_str()) {
            t.entry(*c).or_default().filtered.insert(f.worker_id.clone());
        }
    }
    for r in kept
        .responses
        .iter()
        .filter(|r| is_unknown_task(r) && r.answer != Answer::SkipReplaced)
    {
        let e = t.entry(r.condition).or_default();
        e.answered += 1;
        e.positives += u64::from(r.answer == Answer::Yes);
    }
    for s in kept.rules.iter().filter(|s| s.accepted && s.section == Section::Task) {
        let Some(p) = s
            .rule
            .as_ref()
            .and_then(|r| partition(r, &ds.states, &ds.registry).ok())
        else {
            continue;
        };
        let e = t.entry(s.condition).or_default();
        e.answered += (p.included.len() + p.excluded.len()) as u64;
        e.positives += p.included.len() as u64;
    }
    if judgments.is_empty() {
        warnings.push("no judgments imported; precision is n/a".to_string());
    }
    let mut missing = 0;
    for j in judgments {
        match map.get(&j.blinded_id) {
            Some(p) => {
                let e = t.entry(p.condition).or_default();
                e.judged += 1;
                e.correct += u64::from(j.verdict == Verdict::Correct);
            }
            None => missing += 1,
        }
    }
    if missing > 0 {
        warnings.push(format!("{missing} judgments refer to unknown blinded ids"));
    }

    let ratio = |n: u64, d: u64| (d > 0).then(|| n as f64 / d as f64);
    let rows: Vec<ConditionRow> = t
        .iter()
        .map(|(c, e)| ConditionRow {
            condition: *c,
            workers: e.workers.len(),
            filtered_workers: e.filtered.len(),
            answered: e.answered,
            positives: e.positives,
            positive_rate: ratio(e.positives, e.answered),
            judged: e.judged,
            correct: e.correct,
            precision: ratio(e.correct, e.judged),
        })
        .collect();

    let mut pairwise = Vec::new();
    for measure in [Measure::Precision, Measure::PositiveRate] {
        for (i, x) in rows.iter().enumerate() {
            for y in &rows[i + 1..] {
                let split = |r: &ConditionRow| match measure {
                    Measure::Precision => (r.correct, r.judged - r.correct),
                    Measure::PositiveRate => (r.positives, r.answered - r.positives),
                };
                let ((a, b), (c, d)) = (split(x), split(y));
                let table = ContingencyTable::new(a, b, c, d);
                pairwise.push(PairwiseTest {
                    measure,
                    first: x.condition,
                    second: y.condition,
                    table,
                    tails: cfg.tails,
                    p_value: fisher_exact(&table, cfg.tails),
                });
            }
        }
    }
    Report {
        rows,
        pairwise,
        warnings,
    }
}

fn pct(x: Option<f64>) -> String {
    x.map_or("n/a".to_string(), |v| format!("{:.1}%", v * 100.0))
}

pub fn render_text(r: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<22} {:>7} {:>8} {:>9} {:>9} {:>8} {:>7} {:>9}",
        "condition", "workers", "filtered", "answered", "positives", "pos.rate", "judged", "precision"
    );
    for row in &r.rows {
        let _ = writeln!(
            out,
            "{:<22} {:>7} {:>8} {:>9} {:>9} {:>8} {:>7} {:>9}",
            row.condition.id(),
            row.workers,
            row.filtered_workers,
            row.answered,
            row.positives,
            pct(row.positive_rate),
            row.judged,
            pct(row.precision)
        );
    }
    out.push('\n');
    for p in &r.pairwise {
        let measure = match p.measure {
            Measure::Precision => "precision",
            Measure::PositiveRate => "positive rate",
        };
        let _ = writeln!(
            out,
            "{measure:<13} {} vs {}: p = {:.4} ({:?}, [[{}, {}], [{}, {}]])",
            p.first, p.second, p.p_value, p.tails, p.table.a, p.table.b, p.table.c, p.table.d
        );
    }
    for w in &r.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

/// Bar chart of precision per condition, labelled with the judged count.
pub fn render_svg(r: &Report) -> String {
    const BAR: usize = 60;
    const GAP: usize = 30;
    const HEIGHT: f64 = 200.0;
    let width = 60 + r.rows.len() * (BAR + GAP);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="300" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        out,
        r#"<text x="10" y="16" font-size="13">Precision by condition</text>"#
    );
    let _ = writeln!(
        out,
        r#"<line x1="40" y1="240" x2="{}" y2="240" stroke="black"/>"#,
        width - 10
    );
    for (i, row) in r.rows.iter().enumerate() {
        let x = 50 + i * (BAR + GAP);
        let v = row.precision.unwrap_or(0.0);
        let h = v * HEIGHT;
        let _ = writeln!(
            out,
            r##"<rect x="{x}" y="{:.1}" width="{BAR}" height="{h:.1}" fill="#4a7ab5"/>"##,
            240.0 - h
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="middle">{} (n={})</text>"#,
            x + BAR / 2,
            235.0 - h,
            pct(row.precision),
            row.judged
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="256" text-anchor="middle">{}</text>"#,
            x + BAR / 2,
            row.condition.id()
        );
    }
    out.push_str("</svg>\n");
    out
}
