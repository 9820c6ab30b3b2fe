//! Guided dropdown construction of rules.
//!
//! The builder starts at "The action applies to ▾" with three root choices.
//! Choosing "a state if" opens a literal slot. Literals are picked argument
//! first: the worker selects argument values and is then offered only the
//! predicates (positive and negated) that accept them. An argument value that
//! belongs to exactly one single-slot predicate is condensed into a direct
//! literal choice.
//!
//! Parentheses are never typed. The first logical after a lone literal `A`
//! wraps it as `( A OR _ )`. From then on, every completed literal `D` gets
//! two choiceboxes around the right parenthesis that follows it,
//! `… D -- ) --`. Picking the inner one opens `… ( D op _ ) ) …`, the outer
//! one `( ( … D ) op _ ) …`. Every DNF is reachable this way, see
//! [`dnf_to_actions`].
//!
//! States are immutable values; [`apply`] returns a new state.

mod compile;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{PredicateRegistry, Value};
use crate::rule::{check_literal, Literal, Logical, Node, RuleExpr, LENGTH_LIMIT};

pub use compile::{dnf_to_actions, rule_to_actions, CompileError};

/// Text shown before the first choice.
pub const START_TEXT: &str = "The action applies to ▾";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootChoice {
    AllStates,
    NoStates,
    StateIf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Inner,
    Outer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Start,
    ArgSelect,
    PredSelect,
    ChoiceboxPending,
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Token {
    LParen,
    RParen,
    Literal {
        literal: Literal,
        text: String,
    },
    Logical {
        logical: Logical,
    },
    Choicebox {
        position: Position,
    },
    /// An unfilled literal position.
    Slot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EditReplacement {
    Literal { literal: Literal },
    Logical { logical: Logical },
}

/// One user interaction with the builder. This is also the wire format the
/// UI replays to the server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BuilderAction {
    ChooseRoot {
        root: RootChoice,
    },
    ChooseArg {
        slot: String,
        value: Value,
    },
    ChoosePredicate {
        predicate_id: String,
        negated: bool,
    },
    /// Condensed argument+predicate dropdown.
    ChooseLiteral {
        literal: Literal,
    },
    /// AND/OR directly after a lone literal.
    ChooseLogical {
        logical: Logical,
    },
    ChooseChoicebox {
        position: Position,
        logical: Logical,
    },
    Finish,
    Clear,
    Edit {
        index: usize,
        replacement: EditReplacement,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuilderError {
    #[error("the rule is complete; no further choices")]
    Terminal,
    #[error("action not available here: {0:?}")]
    Illegal(Box<BuilderAction>),
    #[error("rule is incomplete")]
    Incomplete,
    #[error("token {0} cannot be edited")]
    NotEditable(usize),
    #[error("replacement does not match the kind of token {0}")]
    EditKindMismatch(usize),
    #[error("replacement literal is invalid: {0}")]
    InvalidLiteral(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Step {
    Root(RootChoice),
    Literal(Literal),
    Logical(Logical),
    Choicebox(Position, Logical),
    Finish,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuilderState {
    root: Option<RootChoice>,
    tokens: Vec<Token>,
    pending: BTreeMap<String, Value>,
    finished: bool,
    steps: Vec<Step>,
}

impl Default for BuilderState {
    fn default() -> Self {
        new_builder()
    }
}

pub fn new_builder() -> BuilderState {
    BuilderState {
        root: None,
        tokens: Vec::new(),
        pending: BTreeMap::new(),
        finished: false,
        steps: Vec::new(),
    }
}

impl BuilderState {
    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn root(&self) -> Option<RootChoice> {
        self.root
    }

    /// Argument values chosen for the open slot so far.
    pub fn pending_args(&self) -> &BTreeMap<String, Value> {
        &self.pending
    }

    pub fn phase(&self) -> Phase {
        match self.root {
            None => Phase::Start,
            Some(_) if self.finished => Phase::Terminal,
            Some(RootChoice::AllStates | RootChoice::NoStates) => Phase::Terminal,
            Some(RootChoice::StateIf) => {
                if self.has_slot() {
                    if self.pending.is_empty() {
                        Phase::ArgSelect
                    } else {
                        Phase::PredSelect
                    }
                } else {
                    Phase::ChoiceboxPending
                }
            }
        }
    }

    pub fn literal_count(&self) -> usize {
        self.tokens
            .iter()
            .filter(|t| matches!(t, Token::Literal { .. }))
            .count()
    }

    fn has_slot(&self) -> bool {
        self.tokens.iter().any(|t| matches!(t, Token::Slot))
    }

    fn last_literal_index(&self) -> Option<usize> {
        self.tokens.iter().rposition(|t| matches!(t, Token::Literal { .. }))
    }

    fn is_lone_literal(&self) -> bool {
        self.literal_count() == 1 && !self.tokens.iter().any(|t| matches!(t, Token::Logical { .. }))
    }

    fn remove_choiceboxes(&mut self) {
        self.tokens.retain(|t| !matches!(t, Token::Choicebox { .. }));
    }

    fn add_choiceboxes(&mut self) {
        if self.is_lone_literal() || self.literal_count() >= LENGTH_LIMIT {
            return;
        }
        let d = self.last_literal_index().expect("a literal was just placed");
        debug_assert_eq!(self.tokens.get(d + 1), Some(&Token::RParen));
        self.tokens.insert(
            d + 1,
            Token::Choicebox {
                position: Position::Inner,
            },
        );
        self.tokens.insert(
            d + 3,
            Token::Choicebox {
                position: Position::Outer,
            },
        );
    }

    fn place_literal(&mut self, literal: Literal, registry: &PredicateRegistry) {
        let text = literal.display(registry).unwrap_or_else(|| literal.to_string());
        let slot = self
            .tokens
            .iter()
            .position(|t| matches!(t, Token::Slot))
            .expect("literal choices are only offered with an open slot");
        self.tokens[slot] = Token::Literal {
            literal: literal.clone(),
            text,
        };
        self.pending.clear();
        self.steps.push(Step::Literal(literal));
        self.add_choiceboxes();
    }

    fn open_logical(&mut self, op: Logical) {
        // [A] -> ( A op _ )
        self.tokens.insert(0, Token::LParen);
        self.tokens
            .extend([Token::Logical { logical: op }, Token::Slot, Token::RParen]);
        self.steps.push(Step::Logical(op));
    }

    fn open_choicebox(&mut self, position: Position, op: Logical) {
        self.remove_choiceboxes();
        let d = self.last_literal_index().expect("choiceboxes follow a literal");
        let tail = [Token::Logical { logical: op }, Token::Slot, Token::RParen];
        match position {
            Position::Inner => {
                // … D ) …  ->  … ( D op _ ) ) …
                self.tokens.insert(d, Token::LParen);
                let at = d + 2;
                self.tokens.splice(at..at, tail);
            }
            Position::Outer => {
                // ( … D ) …  ->  ( ( … D ) op _ ) …
                let r = d + 1;
                let l = matching_lparen(&self.tokens, r).expect("balanced parentheses");
                self.tokens.insert(l, Token::LParen);
                let at = r + 2;
                self.tokens.splice(at..at, tail);
            }
        }
        self.steps.push(Step::Choicebox(position, op));
    }

    fn step(&mut self, action: &BuilderAction, registry: &PredicateRegistry) {
        match action {
            BuilderAction::ChooseRoot { root } => {
                self.root = Some(*root);
                if *root == RootChoice::StateIf {
                    self.tokens.push(Token::Slot);
                }
                self.steps.push(Step::Root(*root));
            }
            BuilderAction::ChooseArg { slot, value } => {
                self.pending.insert(slot.clone(), value.clone());
            }
            BuilderAction::ChoosePredicate { predicate_id, negated } => {
                let literal = Literal {
                    predicate_id: predicate_id.clone(),
                    bindings: self.pending.clone(),
                    negated: *negated,
                };
                self.place_literal(literal, registry);
            }
            BuilderAction::ChooseLiteral { literal } => self.place_literal(literal.clone(), registry),
            BuilderAction::ChooseLogical { logical } => self.open_logical(*logical),
            BuilderAction::ChooseChoicebox { position, logical } => self.open_choicebox(*position, *logical),
            BuilderAction::Finish => {
                self.remove_choiceboxes();
                self.finished = true;
                self.steps.push(Step::Finish);
            }
            BuilderAction::Clear | BuilderAction::Edit { .. } => unreachable!("handled in apply"),
        }
    }
}

fn matching_lparen(tokens: &[Token], r: usize) -> Option<usize> {
    let mut depth = 0usize;
    for i in (0..=r).rev() {
        match tokens[i] {
            Token::RParen => depth += 1,
            Token::LParen => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Index of the parenthesis matching the one at `i`, in either direction.
pub fn matching_paren(tokens: &[Token], i: usize) -> Option<usize> {
    match tokens.get(i)? {
        Token::RParen => matching_lparen(tokens, i),
        Token::LParen => {
            let mut depth = 0usize;
            for (j, t) in tokens.iter().enumerate().skip(i) {
                match t {
                    Token::LParen => depth += 1,
                    Token::RParen => {
                        depth -= 1;
                        if depth == 0 {
                            return Some(j);
                        }
                    }
                    _ => {}
                }
            }
            None
        }
        _ => None,
    }
}

fn literal_choices(literal: Literal) -> [BuilderAction; 2] {
    let neg = literal.clone().negate();
    [
        BuilderAction::ChooseLiteral { literal },
        BuilderAction::ChooseLiteral { literal: neg },
    ]
}

/// Whether `literal` is offered as one condensed dropdown rather than as
/// argument choice(s) followed by a predicate choice.
pub fn is_condensed(literal: &Literal, registry: &PredicateRegistry) -> bool {
    let Some(spec) = registry.get(&literal.predicate_id) else {
        return false;
    };
    match spec.arg_slots.as_slice() {
        [] => true,
        [slot] => literal
            .bindings
            .get(&slot.name)
            .is_some_and(|v| registry.accepting(&slot.name, v).len() == 1),
        _ => false,
    }
}

/// The actions currently available. Clear and Edit are always accepted by
/// [`apply`] and are not listed.
pub fn options(b: &BuilderState, registry: &PredicateRegistry) -> Result<Vec<BuilderAction>, BuilderError> {
    let mut out = Vec::new();
    match b.phase() {
        Phase::Terminal => return Err(BuilderError::Terminal),
        Phase::Start => {
            for root in [RootChoice::AllStates, RootChoice::NoStates, RootChoice::StateIf] {
                out.push(BuilderAction::ChooseRoot { root });
            }
        }
        Phase::ArgSelect => {
            for spec in registry.iter() {
                if spec.arg_slots.is_empty() {
                    out.extend(literal_choices(Literal::new(&spec.predicate_id)));
                    continue;
                }
                for slot in &spec.arg_slots {
                    for value in &slot.domain {
                        let accepting = registry.accepting(&slot.name, value);
                        let action = if accepting.len() == 1 && accepting[0].arg_slots.len() == 1 {
                            let lit = Literal::new(&spec.predicate_id).with(slot.name.clone(), value.clone());
                            literal_choices(lit).to_vec()
                        } else {
                            vec![BuilderAction::ChooseArg {
                                slot: slot.name.clone(),
                                value: value.clone(),
                            }]
                        };
                        for a in action {
                            if !out.contains(&a) {
                                out.push(a);
                            }
                        }
                    }
                }
            }
        }
        Phase::PredSelect => {
            for spec in registry.iter() {
                let consistent = b
                    .pending
                    .iter()
                    .all(|(k, v)| spec.arg_slots.iter().any(|s| &s.name == k && s.domain.contains(v)));
                if !consistent {
                    continue;
                }
                if spec.arg_slots.len() == b.pending.len() {
                    for negated in [false, true] {
                        out.push(BuilderAction::ChoosePredicate {
                            predicate_id: spec.predicate_id.clone(),
                            negated,
                        });
                    }
                } else {
                    for slot in spec.arg_slots.iter().filter(|s| !b.pending.contains_key(&s.name)) {
                        for value in &slot.domain {
                            let a = BuilderAction::ChooseArg {
                                slot: slot.name.clone(),
                                value: value.clone(),
                            };
                            if !out.contains(&a) {
                                out.push(a);
                            }
                        }
                    }
                }
            }
        }
        Phase::ChoiceboxPending => {
            if b.literal_count() < LENGTH_LIMIT {
                for logical in [Logical::And, Logical::Or] {
                    if b.is_lone_literal() {
                        out.push(BuilderAction::ChooseLogical { logical });
                    } else {
                        for position in [Position::Inner, Position::Outer] {
                            out.push(BuilderAction::ChooseChoicebox { position, logical });
                        }
                    }
                }
            }
            out.push(BuilderAction::Finish);
        }
    }
    Ok(out)
}

pub fn apply(
    b: &BuilderState,
    action: &BuilderAction,
    registry: &PredicateRegistry,
) -> Result<BuilderState, BuilderError> {
    match action {
        BuilderAction::Clear => Ok(new_builder()),
        BuilderAction::Edit { index, replacement } => edit(b, *index, replacement, registry),
        _ => {
            if !options(b, registry)?.contains(action) {
                return Err(BuilderError::Illegal(Box::new(action.clone())));
            }
            let mut next = b.clone();
            next.step(action, registry);
            Ok(next)
        }
    }
}

/// Replaces literal or logical token `index` and drops every choice made
/// after it. Literals and logicals are created left to right, so "after"
/// in creation order is "to the right" in the text.
fn edit(
    b: &BuilderState,
    index: usize,
    replacement: &EditReplacement,
    registry: &PredicateRegistry,
) -> Result<BuilderState, BuilderError> {
    let token = b.tokens.get(index).ok_or(BuilderError::NotEditable(index))?;
    let ordinal = |pred: fn(&Token) -> bool| b.tokens[..index].iter().filter(|t| pred(t)).count();
    let (step_idx, new_step) = match (token, replacement) {
        (Token::Literal { .. }, EditReplacement::Literal { literal }) => {
            let mut errs = Vec::new();
            check_literal(literal, registry, &mut errs);
            if let Some(e) = errs.first() {
                return Err(BuilderError::InvalidLiteral(e.to_string()));
            }
            let k = ordinal(|t| matches!(t, Token::Literal { .. }));
            let idx = nth_step(&b.steps, k, |s| matches!(s, Step::Literal(_)));
            (idx, Step::Literal(literal.clone()))
        }
        (Token::Logical { .. }, EditReplacement::Logical { logical }) => {
            let k = ordinal(|t| matches!(t, Token::Logical { .. }));
            let idx = nth_step(&b.steps, k, |s| matches!(s, Step::Logical(_) | Step::Choicebox(..)));
            let step = match b.steps[idx] {
                Step::Choicebox(pos, _) => Step::Choicebox(pos, *logical),
                _ => Step::Logical(*logical),
            };
            (idx, step)
        }
        (Token::Literal { .. } | Token::Logical { .. }, _) => return Err(BuilderError::EditKindMismatch(index)),
        _ => return Err(BuilderError::NotEditable(index)),
    };
    let mut steps: Vec<Step> = b.steps[..step_idx].to_vec();
    steps.push(new_step);
    Ok(replay_steps(&steps, registry))
}

fn nth_step(steps: &[Step], k: usize, pred: impl Fn(&Step) -> bool) -> usize {
    steps
        .iter()
        .enumerate()
        .filter(|(_, s)| pred(s))
        .nth(k)
        .map(|(i, _)| i)
        .expect("every literal/logical token has a step")
}

fn replay_steps(steps: &[Step], registry: &PredicateRegistry) -> BuilderState {
    let mut b = new_builder();
    for s in steps {
        let action = match s {
            Step::Root(root) => BuilderAction::ChooseRoot { root: *root },
            Step::Literal(l) => BuilderAction::ChooseLiteral { literal: l.clone() },
            Step::Logical(op) => BuilderAction::ChooseLogical { logical: *op },
            Step::Choicebox(position, logical) => BuilderAction::ChooseChoicebox {
                position: *position,
                logical: *logical,
            },
            Step::Finish => BuilderAction::Finish,
        };
        b.step(&action, registry);
    }
    b
}

/// Applies `actions` from a fresh builder. On failure returns the index of
/// the offending action.
pub fn replay(actions: &[BuilderAction], registry: &PredicateRegistry) -> Result<BuilderState, (usize, BuilderError)> {
    let mut b = new_builder();
    for (i, a) in actions.iter().enumerate() {
        b = apply(&b, a, registry).map_err(|e| (i, e))?;
    }
    Ok(b)
}

/// Converts a builder with no open slot into a rule. Pending choiceboxes
/// are ignored, so a rule can be previewed before Finish.
pub fn finalize(b: &BuilderState) -> Result<RuleExpr, BuilderError> {
    match b.root {
        None => Err(BuilderError::Incomplete),
        Some(RootChoice::AllStates) => Ok(RuleExpr::AllStates),
        Some(RootChoice::NoStates) => Ok(RuleExpr::NoStates),
        Some(RootChoice::StateIf) => {
            if b.has_slot() {
                return Err(BuilderError::Incomplete);
            }
            let toks: Vec<&Token> = b
                .tokens
                .iter()
                .filter(|t| !matches!(t, Token::Choicebox { .. }))
                .collect();
            let mut pos = 0;
            let node = parse_tokens(&toks, &mut pos).ok_or(BuilderError::Incomplete)?;
            if pos != toks.len() {
                return Err(BuilderError::Incomplete);
            }
            Ok(RuleExpr::Expr(node))
        }
    }
}

fn parse_tokens(toks: &[&Token], pos: &mut usize) -> Option<Node> {
    match toks.get(*pos)? {
        Token::Literal { literal, .. } => {
            *pos += 1;
            Some(Node::Literal(literal.clone()))
        }
        Token::LParen => {
            *pos += 1;
            let left = parse_tokens(toks, pos)?;
            let Token::Logical { logical } = toks.get(*pos)? else {
                return None;
            };
            *pos += 1;
            let right = parse_tokens(toks, pos)?;
            if !matches!(toks.get(*pos)?, Token::RParen) {
                return None;
            }
            *pos += 1;
            Some(Node::join(*logical, left, right))
        }
        _ => None,
    }
}

/// Text rendering shared with the UI: `--` marks a choicebox, `_` an open
/// slot (preceded by any argument values already chosen for it), and `▾` the
/// logical dropdown after a lone literal.
pub fn render_tokens(b: &BuilderState) -> String {
    match b.root {
        None => return START_TEXT.to_string(),
        Some(RootChoice::AllStates) => return "all states".into(),
        Some(RootChoice::NoStates) => return "no states".into(),
        Some(RootChoice::StateIf) => {}
    }
    let mut parts: Vec<String> = Vec::with_capacity(b.tokens.len() + 1);
    for t in &b.tokens {
        match t {
            Token::LParen => parts.push("(".into()),
            Token::RParen => parts.push(")".into()),
            Token::Literal { text, .. } => parts.push(text.clone()),
            Token::Logical { logical } => parts.push(logical.to_string()),
            Token::Choicebox { .. } => parts.push("--".into()),
            Token::Slot => {
                parts.extend(b.pending.values().map(|v| v.to_string()));
                parts.push("_".into());
            }
        }
    }
    if b.phase() == Phase::ChoiceboxPending && b.is_lone_literal() && b.literal_count() < LENGTH_LIMIT {
        parts.push("▾".into());
    }
    parts.join(" ")
}

/// Renders a finished rule the way a finished builder would show it.
pub fn render_rule(rule: &RuleExpr, registry: &PredicateRegistry) -> String {
    fn node(n: &Node, registry: &PredicateRegistry, out: &mut Vec<String>) {
        match n {
            Node::Literal(l) => out.push(l.display(registry).unwrap_or_else(|| l.to_string())),
            Node::And(a, b) | Node::Or(a, b) => {
                let op = if matches!(n, Node::And(..)) {
                    Logical::And
                } else {
                    Logical::Or
                };
                out.push("(".into());
                node(a, registry, out);
                out.push(op.to_string());
                node(b, registry, out);
                out.push(")".into());
            }
        }
    }
    match rule {
        RuleExpr::AllStates => "all states".into(),
        RuleExpr::NoStates => "no states".into(),
        RuleExpr::Expr(n) => {
            let mut out = Vec::new();
            node(n, registry, &mut out);
            out.join(" ")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArgSlot, PredicateSpec};

    pub(crate) fn letters() -> PredicateRegistry {
        let specs = ["A", "B", "C", "D", "E", "F"]
            .iter()
            .map(|n| PredicateSpec {
                predicate_id: n.to_string(),
                display_template: n.to_string(),
                negated_display: format!("not {n}"),
                arg_slots: vec![],
                evaluator_id: "is_true".into(),
                params: BTreeMap::from([("feature".to_string(), Value::from(*n))]),
            })
            .collect();
        PredicateRegistry::new(specs).unwrap()
    }

    fn lit(n: &str) -> BuilderAction {
        BuilderAction::ChooseLiteral {
            literal: Literal::new(n),
        }
    }

    fn cb(position: Position, logical: Logical) -> BuilderAction {
        BuilderAction::ChooseChoicebox { position, logical }
    }

    fn run(actions: &[BuilderAction]) -> BuilderState {
        replay(actions, &letters()).unwrap()
    }

    fn state_if() -> BuilderAction {
        BuilderAction::ChooseRoot {
            root: RootChoice::StateIf,
        }
    }

    #[test]
    fn start_options() {
        let b = new_builder();
        assert_eq!(render_tokens(&b), "The action applies to ▾");
        let opts = options(&b, &letters()).unwrap();
        assert_eq!(
            opts,
            vec![
                BuilderAction::ChooseRoot {
                    root: RootChoice::AllStates
                },
                BuilderAction::ChooseRoot {
                    root: RootChoice::NoStates
                },
                BuilderAction::ChooseRoot {
                    root: RootChoice::StateIf
                },
            ]
        );
    }

    #[test]
    fn terminating_roots() {
        for (root, expect, text) in [
            (RootChoice::AllStates, RuleExpr::AllStates, "all states"),
            (RootChoice::NoStates, RuleExpr::NoStates, "no states"),
        ] {
            let b = run(&[BuilderAction::ChooseRoot { root }]);
            assert_eq!(b.phase(), Phase::Terminal);
            assert_eq!(finalize(&b).unwrap(), expect);
            assert_eq!(render_tokens(&b), text);
            assert_eq!(options(&b, &letters()), Err(BuilderError::Terminal));
        }
    }

    #[test]
    fn first_logical_wraps() {
        let b = run(&[state_if(), lit("A")]);
        assert_eq!(render_tokens(&b), "A ▾");
        let b = apply(&b, &BuilderAction::ChooseLogical { logical: Logical::Or }, &letters()).unwrap();
        assert_eq!(render_tokens(&b), "( A OR _ )");
        let b = apply(&b, &lit("B"), &letters()).unwrap();
        assert_eq!(render_tokens(&b), "( A OR B -- ) --");
        assert_eq!(b.phase(), Phase::ChoiceboxPending);
    }

    #[test]
    fn inner_choicebox_wraps_last_literal() {
        // … D -- ) --, inner AND, F  ->  … ( D AND F ) ) …
        let b = run(&[
            state_if(),
            lit("A"),
            BuilderAction::ChooseLogical { logical: Logical::Or },
            lit("D"),
            cb(Position::Inner, Logical::And),
            lit("F"),
        ]);
        assert_eq!(render_tokens(&b), "( A OR ( D AND F -- ) -- )");
    }

    #[test]
    fn outer_choicebox_wraps_group() {
        // … D ) --, outer OR, F  ->  ( … D ) OR F )
        let b = run(&[
            state_if(),
            lit("A"),
            BuilderAction::ChooseLogical { logical: Logical::And },
            lit("D"),
            cb(Position::Outer, Logical::Or),
            lit("F"),
        ]);
        assert_eq!(render_tokens(&b), "( ( A AND D ) OR F -- ) --");
    }

    #[test]
    fn tires_shape() {
        let b = run(&[
            state_if(),
            lit("A"),
            BuilderAction::ChooseLogical { logical: Logical::And },
            lit("B"),
            cb(Position::Outer, Logical::Or),
            lit("C"),
            cb(Position::Inner, Logical::And),
            lit("D"),
            BuilderAction::Finish,
        ]);
        assert_eq!(render_tokens(&b), "( ( A AND B ) OR ( C AND D ) )");
        let rule = finalize(&b).unwrap();
        assert_eq!(
            rule.to_string(),
            "( ( lit:A[] AND lit:B[] ) OR ( lit:C[] AND lit:D[] ) )"
        );
        assert_eq!(render_rule(&rule, &letters()), render_tokens(&b));
    }

    #[test]
    fn finalize_incomplete() {
        let b = run(&[state_if()]);
        assert_eq!(finalize(&b), Err(BuilderError::Incomplete));
        let b = run(&[
            state_if(),
            lit("A"),
            BuilderAction::ChooseLogical { logical: Logical::Or },
        ]);
        assert_eq!(finalize(&b), Err(BuilderError::Incomplete));
        assert_eq!(finalize(&new_builder()), Err(BuilderError::Incomplete));
    }

    #[test]
    fn finalize_simple_or() {
        let b = run(&[
            state_if(),
            lit("A"),
            BuilderAction::ChooseLogical { logical: Logical::Or },
            lit("B"),
        ]);
        let expect = RuleExpr::Expr(Node::or(Node::lit(Literal::new("A")), Node::lit(Literal::new("B"))));
        assert_eq!(finalize(&b).unwrap(), expect);
    }

    #[test]
    fn illegal_actions_rejected() {
        let reg = letters();
        let b = new_builder();
        assert!(matches!(apply(&b, &lit("A"), &reg), Err(BuilderError::Illegal(_))));
        let b = run(&[state_if(), lit("A")]);
        // no choiceboxes exist next to a lone literal
        assert!(apply(&b, &cb(Position::Inner, Logical::And), &reg).is_err());
        let b = run(&[
            state_if(),
            lit("A"),
            BuilderAction::ChooseLogical { logical: Logical::Or },
        ]);
        // choicebox before the slot is filled
        assert!(apply(&b, &cb(Position::Outer, Logical::And), &reg).is_err());
        assert!(apply(&b, &BuilderAction::Finish, &reg).is_err());
    }

    #[test]
    fn edit_truncates() {
        let reg = letters();
        let b = run(&[
            state_if(),
            lit("A"),
            BuilderAction::ChooseLogical { logical: Logical::Or },
            lit("B"),
        ]);
        assert_eq!(b.tokens().len(), 7);
        let e = apply(
            &b,
            &BuilderAction::Edit {
                index: 2,
                replacement: EditReplacement::Logical { logical: Logical::And },
            },
            &reg,
        )
        .unwrap();
        assert_eq!(render_tokens(&e), "( A AND _ )");
        assert_eq!(&e.tokens()[..2], &b.tokens()[..2]);
        assert!(!e
            .tokens()
            .iter()
            .any(|t| matches!(t, Token::Literal { text, .. } if text == "B")));

        let e = apply(
            &b,
            &BuilderAction::Edit {
                index: 1,
                replacement: EditReplacement::Literal {
                    literal: Literal::new("C").negate(),
                },
            },
            &reg,
        )
        .unwrap();
        assert_eq!(render_tokens(&e), "not C ▾");
    }

    #[test]
    fn edit_errors() {
        let reg = letters();
        let b = run(&[
            state_if(),
            lit("A"),
            BuilderAction::ChooseLogical { logical: Logical::Or },
            lit("B"),
        ]);
        let paren = BuilderAction::Edit {
            index: 0,
            replacement: EditReplacement::Logical { logical: Logical::And },
        };
        assert_eq!(apply(&b, &paren, &reg), Err(BuilderError::NotEditable(0)));
        let mismatch = BuilderAction::Edit {
            index: 1,
            replacement: EditReplacement::Logical { logical: Logical::And },
        };
        assert_eq!(apply(&b, &mismatch, &reg), Err(BuilderError::EditKindMismatch(1)));
        let unknown = BuilderAction::Edit {
            index: 1,
            replacement: EditReplacement::Literal {
                literal: Literal::new("ZZZ"),
            },
        };
        assert!(matches!(
            apply(&b, &unknown, &reg),
            Err(BuilderError::InvalidLiteral(_))
        ));
    }

    #[test]
    fn edit_reopens_finished_rule() {
        let reg = letters();
        let b = run(&[state_if(), lit("A"), BuilderAction::Finish]);
        assert_eq!(b.phase(), Phase::Terminal);
        let e = apply(
            &b,
            &BuilderAction::Edit {
                index: 0,
                replacement: EditReplacement::Literal {
                    literal: Literal::new("B"),
                },
            },
            &reg,
        )
        .unwrap();
        assert_eq!(e.phase(), Phase::ChoiceboxPending);
    }

    #[test]
    fn clear_resets() {
        let b = run(&[state_if(), lit("A")]);
        assert_eq!(apply(&b, &BuilderAction::Clear, &letters()).unwrap(), new_builder());
    }

    #[test]
    fn length_limit_stops_logicals() {
        let reg = letters();
        let mut b = run(&[state_if(), lit("A")]);
        b = apply(&b, &BuilderAction::ChooseLogical { logical: Logical::Or }, &reg).unwrap();
        b = apply(&b, &lit("B"), &reg).unwrap();
        while b.literal_count() < LENGTH_LIMIT {
            b = apply(&b, &cb(Position::Outer, Logical::Or), &reg).unwrap();
            b = apply(&b, &lit("C"), &reg).unwrap();
        }
        assert_eq!(options(&b, &reg).unwrap(), vec![BuilderAction::Finish]);
        assert!(!render_tokens(&b).contains("--"));
    }

    fn arg_registry() -> PredicateRegistry {
        let p = |id: &str, slots: Vec<ArgSlot>, eval: &str| PredicateSpec {
            predicate_id: id.into(),
            display_template: id.to_string(),
            negated_display: format!("not {id}"),
            arg_slots: slots,
            evaluator_id: eval.into(),
            params: BTreeMap::from([("feature".to_string(), Value::from("n"))]),
        };
        let s = |name: &str, vals: &[i64]| ArgSlot {
            name: name.into(),
            domain: vals.iter().map(|&v| Value::Int(v)).collect(),
        };
        PredicateRegistry::new(vec![
            p("ge", vec![s("count", &[1, 2])], "at_least"),
            p("eq", vec![s("count", &[0, 1, 2])], "equals"),
            p("between", vec![s("low", &[0]), s("high", &[3])], "between"),
        ])
        .unwrap()
    }

    #[test]
    fn arguments_first_then_predicates() {
        let reg = arg_registry();
        let b = replay(&[state_if()], &reg).unwrap();
        let opts = options(&b, &reg).unwrap();
        // count=0 only fits `eq`, a single-slot predicate, so it is condensed
        let eq0 = Literal::new("eq").with("count", 0);
        assert!(opts.contains(&BuilderAction::ChooseLiteral { literal: eq0.clone() }));
        assert!(opts.contains(&BuilderAction::ChooseLiteral { literal: eq0.negate() }));
        assert!(!opts.contains(&BuilderAction::ChooseArg {
            slot: "count".into(),
            value: Value::Int(0)
        }));
        // count=1 is shared by ge and eq
        let arg1 = BuilderAction::ChooseArg {
            slot: "count".into(),
            value: Value::Int(1),
        };
        assert!(opts.contains(&arg1));
        // low=0 fits only `between`, but that takes two arguments
        let low0 = BuilderAction::ChooseArg {
            slot: "low".into(),
            value: Value::Int(0),
        };
        assert!(opts.contains(&low0));

        let b1 = apply(&b, &arg1, &reg).unwrap();
        assert_eq!(b1.phase(), Phase::PredSelect);
        assert_eq!(render_tokens(&b1), "1 _");
        let preds = options(&b1, &reg).unwrap();
        assert_eq!(preds.len(), 4);
        let b2 = apply(
            &b1,
            &BuilderAction::ChoosePredicate {
                predicate_id: "ge".into(),
                negated: true,
            },
            &reg,
        )
        .unwrap();
        let rule = finalize(&b2).unwrap();
        assert_eq!(rule.to_string(), "lit:!ge[count=1]");

        let b3 = apply(&b, &low0, &reg).unwrap();
        let next = options(&b3, &reg).unwrap();
        assert_eq!(
            next,
            vec![BuilderAction::ChooseArg {
                slot: "high".into(),
                value: Value::Int(3)
            }]
        );
        let b4 = apply(&b3, &next[0], &reg).unwrap();
        assert_eq!(options(&b4, &reg).unwrap().len(), 2);
    }

    #[test]
    fn wire_format() {
        let a = BuilderAction::ChooseChoicebox {
            position: Position::Inner,
            logical: Logical::And,
        };
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            r#"{"kind":"choose_choicebox","position":"inner","logical":"AND"}"#
        );
        let arg = BuilderAction::ChooseArg {
            slot: "count".into(),
            value: Value::Int(3),
        };
        let json = serde_json::to_string(&arg).unwrap();
        assert_eq!(json, r#"{"kind":"choose_arg","slot":"count","value":3}"#);
        assert_eq!(serde_json::from_str::<BuilderAction>(&json).unwrap(), arg);
        let l = BuilderAction::ChooseLiteral {
            literal: Literal::new("A").negate(),
        };
        assert_eq!(
            serde_json::to_string(&l).unwrap(),
            r#"{"kind":"choose_literal","literal":"lit:!A[]"}"#
        );
    }
}
