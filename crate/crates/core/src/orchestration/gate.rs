//! Explanation gate: minimum length and Flesch-Kincaid grade.

use serde::{Deserialize, Serialize};

use super::{Answer, Condition};

pub const MIN_WORDS: usize = 8;
pub const MIN_GRADE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Readability {
    pub words: usize,
    pub sentences: usize,
    pub syllables: usize,
    pub grade: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum GateReject {
    Missing,
    TooShort { words: usize, min: usize },
    BelowGrade { grade: f64, min: f64 },
}

impl std::fmt::Display for GateReject {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GateReject::Missing => f.write_str("an explanation is required"),
            GateReject::TooShort { words, min } => write!(f, "explanation has {words} words; at least {min} needed"),
            GateReject::BelowGrade { grade, min } => {
                write!(f, "explanation reads at grade {grade:.2}; at least {min} needed")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateOutcome {
    /// `keep` is the explanation to store, if one was required.
    Accept {
        keep: Option<String>,
    },
    Reject(GateReject),
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Vowel-group syllable count with silent-e suppression, at least 1.
pub fn count_syllables(word: &str) -> usize {
    let w: Vec<char> = word
        .chars()
        .filter(char::is_ascii_alphabetic)
        .map(|c| c.to_ascii_lowercase())
        .collect();
    if w.is_empty() {
        return 0;
    }
    let mut groups = 0;
    let mut prev = false;
    for &c in &w {
        let v = is_vowel(c);
        if v && !prev {
            groups += 1;
        }
        prev = v;
    }
    let n = w.len();
    if w[n - 1] == 'e' {
        let consonant_le = n >= 3 && w[n - 2] == 'l' && !is_vowel(w[n - 3]);
        if !consonant_le {
            groups -= 1;
        }
    }
    groups.max(1)
}

fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace().filter(|w| w.chars().any(char::is_alphanumeric))
}

pub fn readability(text: &str) -> Readability {
    let words_v: Vec<&str> = words(text).collect();
    let sentences = text
        .split(['.', '!', '?'])
        .filter(|s| words(s).next().is_some())
        .count()
        .max(1);
    let syllables: usize = words_v.iter().map(|w| count_syllables(w).max(1)).sum();
    let n = words_v.len();
    let grade = if n == 0 {
        0.0
    } else {
        0.39 * n as f64 / sentences as f64 + 11.8 * syllables as f64 / n as f64 - 15.59
    };
    Readability {
        words: n,
        sentences,
        syllables,
        grade,
    }
}

pub fn gate_explanation(text: Option<&str>, condition: Condition, answer: Answer) -> GateOutcome {
    if !condition.explanation_required(answer) {
        return GateOutcome::Accept { keep: None };
    }
    let text = text.map(str::trim).unwrap_or("");
    if text.is_empty() {
        return GateOutcome::Reject(GateReject::Missing);
    }
    let r = readability(text);
    if r.words < MIN_WORDS {
        return GateOutcome::Reject(GateReject::TooShort {
            words: r.words,
            min: MIN_WORDS,
        });
    }
    if r.grade < MIN_GRADE {
        return GateOutcome::Reject(GateReject::BelowGrade {
            grade: r.grade,
            min: MIN_GRADE,
        });
    }
    GateOutcome::Accept {
        keep: Some(text.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syllables() {
        for (w, n) in [
            ("the", 1),
            ("action", 2),
            ("already", 3),
            ("diagram", 2),
            ("make", 1),
            ("table", 2),
            ("little", 2),
            ("free", 1),
            ("rhythm", 1),
            ("six", 1),
            ("Exists,", 2),
        ] {
            assert_eq!(count_syllables(w), n, "{w}");
        }
    }

    #[test]
    fn worked_example() {
        let text = "The action tells the student to add a six block that already exists in the diagram.";
        let r = readability(text);
        assert_eq!((r.words, r.sentences, r.syllables), (16, 1, 22));
        // 0.39 * 16 + 11.8 * 22 / 16 - 15.59
        assert!((r.grade - 6.875).abs() < 1e-9);
        assert!(matches!(
            gate_explanation(Some(text), Condition::FgExplainOneSided, Answer::Yes),
            GateOutcome::Accept { keep: Some(_) }
        ));
    }

    #[test]
    fn seven_words_rejected() {
        let out = gate_explanation(
            Some("The student already has this block there."),
            Condition::FgExplainTwoSided,
            Answer::No,
        );
        assert_eq!(out, GateOutcome::Reject(GateReject::TooShort { words: 7, min: 8 }));
    }

    #[test]
    fn one_sided_no_needs_nothing() {
        assert_eq!(
            gate_explanation(None, Condition::FgExplainOneSided, Answer::No),
            GateOutcome::Accept { keep: None }
        );
        assert_eq!(
            gate_explanation(Some("   "), Condition::FgExplainOneSided, Answer::Yes),
            GateOutcome::Reject(GateReject::Missing)
        );
    }

    #[test]
    fn simple_words_fall_below_grade() {
        // 10 words, 2 sentences, 10 syllables: 0.39 * 5 + 11.8 - 15.59 = -1.84
        let out = gate_explanation(
            Some("It is a good one. I do not see why."),
            Condition::FgExplainTwoSided,
            Answer::Yes,
        );
        assert!(matches!(out, GateOutcome::Reject(GateReject::BelowGrade { .. })));
    }

    #[test]
    fn sentence_splitting() {
        assert_eq!(readability("One two. Three four!! Five six?").sentences, 3);
        assert_eq!(readability("no terminator here").sentences, 1);
        assert_eq!(readability("...").words, 0);
    }
}
