use serde::{Deserialize, Serialize};

use crate::builder::{finalize, render_rule, replay, BuilderAction, BuilderState, Phase};
use crate::dataset::Dataset;
use crate::model::ActionSpec;
use crate::rule::{equivalent, partition, RuleExpr};

/// Share of all states above which a rule is flagged as too broad.
pub const BROAD_SHARE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum HelpFeedback {
    /// The rule is not finished yet.
    Prompt { message: String },
    /// The rule is complete but its partition looks wrong.
    Warning {
        message: String,
        included: usize,
        total: usize,
    },
    /// Everything checked out: an expert rule to study and rebuild.
    Example {
        action_id: String,
        action_text: String,
        rule: RuleExpr,
        rendered: String,
        explanation: String,
        task: String,
    },
}

fn prompt(message: &str) -> HelpFeedback {
    HelpFeedback::Prompt {
        message: message.to_string(),
    }
}

pub fn get_help(b: &BuilderState, action: &ActionSpec, ds: &Dataset) -> HelpFeedback {
    match b.phase() {
        Phase::Start => {
            return prompt(
                "Start by opening the first dropdown. Pick \"a state if\" to describe the situations where this action applies.",
            )
        }
        Phase::ArgSelect => {
            return prompt("Fill the empty slot: pick a value first, then the phrase that describes it.")
        }
        Phase::PredSelect => return prompt("Now pick the phrase that goes with the value you chose."),
        Phase::ChoiceboxPending | Phase::Terminal => {}
    }
    let Ok(rule) = finalize(b) else {
        return prompt("Finish the open parts of your rule first.");
    };
    let total = ds.states.len();
    let Ok(part) = partition(&rule, &ds.states, &ds.registry) else {
        return prompt("This rule could not be checked. Try clearing the workspace.");
    };
    let included = part.included.len();
    let warn = |message: &str| HelpFeedback::Warning {
        message: message.to_string(),
        included,
        total,
    };
    if included == 0 {
        return warn(
            "Your rule includes no states at all. It must at least include the example state shown for this action.",
        );
    }
    if let Some(known) = &action.known_valid_state {
        if part.included.binary_search(known).is_err() {
            return warn("Your rule leaves out the example state where this action is known to be fine. Change it so that state is included.");
        }
    }
    if included as f64 > BROAD_SHARE * total as f64 {
        return warn(
            "Your rule includes almost every state. Most actions only fit some situations; try adding conditions.",
        );
    }
    let others: Vec<_> = ds
        .help_examples
        .iter()
        .filter(|h| h.action_id != action.action_id)
        .collect();
    if others.is_empty() {
        return prompt("Your rule passes every check.");
    }
    let pos = ds
        .actions
        .iter()
        .position(|a| a.action_id == action.action_id)
        .unwrap_or(0);
    let ex = others[pos % others.len()];
    let action_text = ds
        .actions
        .get(&ex.action_id)
        .map(|a| a.text.clone())
        .unwrap_or_default();
    HelpFeedback::Example {
        action_id: ex.action_id.clone(),
        action_text,
        rendered: render_rule(&ex.rule, &ds.registry),
        rule: ex.rule.clone(),
        explanation: ex.explanation.clone(),
        task: "Your rule passes our checks. Here is an expert rule for another action. Rebuild it with the dropdowns to practise, then return to your own rule.".into(),
    }
}

/// Whether `attempt` rebuilds `target` up to logical equivalence.
pub fn check_reconstruction(target: &RuleExpr, attempt: &[BuilderAction], ds: &Dataset) -> bool {
    let Ok(b) = replay(attempt, &ds.registry) else {
        return false;
    };
    let Ok(rule) = finalize(&b) else {
        return false;
    };
    equivalent(&rule, target).unwrap_or(false)
}
