//! Precision and positive rate, the blinded judging workflow, Fisher's
//! exact test and the per-condition report.

mod fisher;
mod judging;
mod report;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::orchestration::{Answer, GoldKind, ResponseRecord, Section};

pub use fisher::{fisher_exact, fisher_exact_rational, ContingencyTable, Tails};
pub use judging::{
    export_blinded, import_judgments, oracle_judgments, positive_pairs, BlindMap, BlindedExport, BlindedItem,
    JudgingError, JudgmentRecord, PairSource, PositivePair, Verdict,
};
pub use report::{render_svg, render_text, report, ConditionRow, Measure, PairwiseTest, Report, ReportConfig};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("no {0} to compute a proportion from")]
    Empty(&'static str),
}

/// A count ratio kept exact; `value` is the decimal form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proportion {
    pub numerator: u64,
    pub denominator: u64,
}

impl Proportion {
    pub fn new(numerator: u64, denominator: u64) -> Result<Self, AnalyticsError> {
        if denominator == 0 {
            return Err(AnalyticsError::Empty("items"));
        }
        Ok(Proportion { numerator, denominator })
    }

    /// Reduced form.
    pub fn ratio(&self) -> Ratio<u64> {
        Ratio::new(self.numerator, self.denominator)
    }

    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

/// Share of judgments marked correct.
pub fn precision(judgments: &[JudgmentRecord]) -> Result<Proportion, AnalyticsError> {
    if judgments.is_empty() {
        return Err(AnalyticsError::Empty("judgments"));
    }
    let correct = judgments.iter().filter(|j| j.verdict == Verdict::Correct).count();
    Proportion::new(correct as u64, judgments.len() as u64)
}

/// Share of yes answers. Skipped questions are not answers and are left
/// out of both counts.
pub fn positive_rate(responses: &[ResponseRecord]) -> Result<Proportion, AnalyticsError> {
    let answered: Vec<_> = responses.iter().filter(|r| r.answer != Answer::SkipReplaced).collect();
    if answered.is_empty() {
        return Err(AnalyticsError::Empty("responses"));
    }
    let yes = answered.iter().filter(|r| r.answer == Answer::Yes).count();
    Proportion::new(yes as u64, answered.len() as u64)
}

/// Whether a response is to a task question with no known answer, the only
/// kind that counts toward positives and positive rate.
pub fn is_unknown_task(r: &ResponseRecord) -> bool {
    r.gold_kind == GoldKind::None && r.section == Section::Task
}
