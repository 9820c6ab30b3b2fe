use super::{is_condensed, BuilderAction, Position, RootChoice};
use crate::model::PredicateRegistry;
use crate::rule::{check_literal, to_dnf, ConstantRule, DnfExpr, Literal, Logical, RuleExpr, LENGTH_LIMIT};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("{count} literals exceed the limit of {limit}")]
    TooLong { count: usize, limit: usize },
    #[error("literal {literal} is invalid: {reason}")]
    InvalidLiteral { literal: String, reason: String },
}

fn literal_actions(lit: &Literal, registry: &PredicateRegistry, out: &mut Vec<BuilderAction>) {
    if is_condensed(lit, registry) {
        out.push(BuilderAction::ChooseLiteral { literal: lit.clone() });
        return;
    }
    let spec = registry.get(&lit.predicate_id).expect("validated");
    for slot in &spec.arg_slots {
        out.push(BuilderAction::ChooseArg {
            slot: slot.name.clone(),
            value: lit.bindings[&slot.name].clone(),
        });
    }
    out.push(BuilderAction::ChoosePredicate {
        predicate_id: lit.predicate_id.clone(),
        negated: lit.negated,
    });
}

/// A builder action sequence whose finalized rule is equivalent to `dnf`.
///
/// Clauses are built left to right. Inside a clause the second literal uses
/// the inner choicebox and later ones the outer; a new clause starts with
/// an outer OR.
pub fn dnf_to_actions(dnf: &DnfExpr, registry: &PredicateRegistry) -> Result<Vec<BuilderAction>, CompileError> {
    let count = dnf.literal_count();
    if count > LENGTH_LIMIT {
        return Err(CompileError::TooLong {
            count,
            limit: LENGTH_LIMIT,
        });
    }
    let mut out = vec![BuilderAction::ChooseRoot {
        root: RootChoice::StateIf,
    }];
    let mut placed = 0usize;
    for clause in dnf.clauses() {
        for (j, lit) in clause.iter().enumerate() {
            let mut errs = Vec::new();
            check_literal(lit, registry, &mut errs);
            if let Some(e) = errs.first() {
                return Err(CompileError::InvalidLiteral {
                    literal: lit.to_string(),
                    reason: e.to_string(),
                });
            }
            let logical = if j == 0 { Logical::Or } else { Logical::And };
            match (placed, j) {
                (0, _) => {}
                (1, _) => out.push(BuilderAction::ChooseLogical { logical }),
                (_, 1) => out.push(BuilderAction::ChooseChoicebox {
                    position: Position::Inner,
                    logical,
                }),
                _ => out.push(BuilderAction::ChooseChoicebox {
                    position: Position::Outer,
                    logical,
                }),
            }
            literal_actions(lit, registry, &mut out);
            placed += 1;
        }
    }
    out.push(BuilderAction::Finish);
    Ok(out)
}

/// Like [`dnf_to_actions`] for any rule; constant rules become a single
/// root choice.
pub fn rule_to_actions(rule: &RuleExpr, registry: &PredicateRegistry) -> Result<Vec<BuilderAction>, CompileError> {
    match to_dnf(rule) {
        Ok(dnf) => dnf_to_actions(&dnf, registry),
        Err(ConstantRule(all)) => Ok(vec![BuilderAction::ChooseRoot {
            root: if all {
                RootChoice::AllStates
            } else {
                RootChoice::NoStates
            },
        }]),
    }
}
