use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{State, StateSet, Value};

/// One argument position of a predicate and the finite set of values it takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgSlot {
    pub name: String,
    pub domain: Vec<Value>,
}

/// A domain predicate as loaded from a registry file.
///
/// `display_template` and `negated_display` contain `{slot}` placeholders.
/// `params` holds fixed kernel parameters; the usual one is `feature`, naming
/// the state feature the kernel reads. A slot named `feature` may supply it
/// per literal instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateSpec {
    pub predicate_id: String,
    pub display_template: String,
    pub negated_display: String,
    #[serde(default)]
    pub arg_slots: Vec<ArgSlot>,
    pub evaluator_id: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, Value>,
}

/// Built-in evaluation kernels. Operands are the bound slot values in slot
/// order, excluding a slot named `feature`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluator {
    /// feature == operand
    Equals,
    /// feature >= operand
    AtLeast,
    /// feature <= operand
    AtMost,
    /// low <= feature <= high
    Between,
    /// comma-separated feature contains operand
    Contains,
    /// feature is boolean true
    IsTrue,
}

impl Evaluator {
    pub fn from_id(id: &str) -> Option<Self> {
        Some(match id {
            "equals" => Evaluator::Equals,
            "at_least" => Evaluator::AtLeast,
            "at_most" => Evaluator::AtMost,
            "between" => Evaluator::Between,
            "contains" => Evaluator::Contains,
            "is_true" => Evaluator::IsTrue,
            _ => return None,
        })
    }

    fn operand_count(self) -> usize {
        match self {
            Evaluator::IsTrue => 0,
            Evaluator::Between => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("duplicate predicate `{0}`")]
    DuplicatePredicate(String),
    #[error("predicate `{predicate}`: unknown evaluator `{evaluator}`")]
    UnknownEvaluator { predicate: String, evaluator: String },
    #[error("predicate `{predicate}`: slot `{slot}` has an empty domain")]
    EmptyDomain { predicate: String, slot: String },
    #[error("predicate `{predicate}`: duplicate slot `{slot}`")]
    DuplicateSlot { predicate: String, slot: String },
    #[error("predicate `{predicate}`: evaluator `{evaluator}` takes {expected} operand(s), found {found}")]
    Arity {
        predicate: String,
        evaluator: String,
        expected: usize,
        found: usize,
    },
    #[error("predicate `{0}` names no feature to read")]
    NoFeature(String),
    #[error("predicate `{0}` is missing a display form")]
    MissingDisplay(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("predicate `{predicate}`: missing binding for slot `{slot}`")]
    MissingBinding { predicate: String, slot: String },
    #[error("state `{state}` has no feature `{feature}`")]
    MissingFeature { state: String, feature: String },
    #[error("predicate `{predicate}` on state `{state}`: {detail}")]
    TypeMismatch {
        predicate: String,
        state: String,
        detail: String,
    },
}

#[derive(Debug, Clone)]
struct Compiled {
    spec: PredicateSpec,
    evaluator: Evaluator,
}

/// Validated predicate collection.
#[derive(Debug, Clone, Default)]
pub struct PredicateRegistry {
    preds: Vec<Compiled>,
    index: HashMap<String, usize>,
}

impl PredicateRegistry {
    pub fn new(specs: Vec<PredicateSpec>) -> Result<Self, RegistryError> {
        let mut reg = PredicateRegistry::default();
        for spec in specs {
            reg.push(spec)?;
        }
        Ok(reg)
    }

    fn push(&mut self, spec: PredicateSpec) -> Result<(), RegistryError> {
        let pid = spec.predicate_id.clone();
        if self.index.contains_key(&pid) {
            return Err(RegistryError::DuplicatePredicate(pid));
        }
        let evaluator = Evaluator::from_id(&spec.evaluator_id).ok_or_else(|| RegistryError::UnknownEvaluator {
            predicate: pid.clone(),
            evaluator: spec.evaluator_id.clone(),
        })?;
        if spec.display_template.trim().is_empty() || spec.negated_display.trim().is_empty() {
            return Err(RegistryError::MissingDisplay(pid));
        }
        let mut seen = Vec::new();
        for slot in &spec.arg_slots {
            if slot.domain.is_empty() {
                return Err(RegistryError::EmptyDomain {
                    predicate: pid.clone(),
                    slot: slot.name.clone(),
                });
            }
            if seen.contains(&&slot.name) {
                return Err(RegistryError::DuplicateSlot {
                    predicate: pid.clone(),
                    slot: slot.name.clone(),
                });
            }
            seen.push(&slot.name);
        }
        let has_feature_slot = spec.arg_slots.iter().any(|s| s.name == "feature");
        if !has_feature_slot && spec.params.get("feature").and_then(Value::as_str).is_none() {
            return Err(RegistryError::NoFeature(pid));
        }
        let operands = spec.arg_slots.len() - usize::from(has_feature_slot);
        if operands != evaluator.operand_count() {
            return Err(RegistryError::Arity {
                predicate: pid,
                evaluator: spec.evaluator_id.clone(),
                expected: evaluator.operand_count(),
                found: operands,
            });
        }
        self.index.insert(spec.predicate_id.clone(), self.preds.len());
        self.preds.push(Compiled { spec, evaluator });
        Ok(())
    }

    pub fn get(&self, predicate_id: &str) -> Option<&PredicateSpec> {
        self.index.get(predicate_id).map(|&i| &self.preds[i].spec)
    }

    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PredicateSpec> {
        self.preds.iter().map(|c| &c.spec)
    }

    /// Evaluates the positive form of `predicate_id` under `bindings`.
    pub fn evaluate(
        &self,
        predicate_id: &str,
        bindings: &BTreeMap<String, Value>,
        state: &State,
    ) -> Result<bool, EvalError> {
        let c = self
            .index
            .get(predicate_id)
            .map(|&i| &self.preds[i])
            .ok_or_else(|| EvalError::UnknownPredicate(predicate_id.to_string()))?;
        let spec = &c.spec;
        let mut operands = Vec::with_capacity(2);
        let mut feature_name = spec.params.get("feature").and_then(Value::as_str).map(str::to_string);
        for slot in &spec.arg_slots {
            let v = bindings.get(&slot.name).ok_or_else(|| EvalError::MissingBinding {
                predicate: predicate_id.to_string(),
                slot: slot.name.clone(),
            })?;
            if slot.name == "feature" {
                feature_name = v.as_str().map(str::to_string);
            } else {
                operands.push(v);
            }
        }
        let feature_name = feature_name.ok_or_else(|| EvalError::MissingBinding {
            predicate: predicate_id.to_string(),
            slot: "feature".into(),
        })?;
        let actual = state.feature(&feature_name).ok_or_else(|| EvalError::MissingFeature {
            state: state.state_id.clone(),
            feature: feature_name.clone(),
        })?;
        let mismatch = |detail: String| EvalError::TypeMismatch {
            predicate: predicate_id.to_string(),
            state: state.state_id.clone(),
            detail,
        };
        let num = |v: &Value| v.as_f64().ok_or_else(|| mismatch(format!("`{v}` is not a number")));
        match c.evaluator {
            Evaluator::Equals => Ok(actual.loosely_eq(operands[0])),
            Evaluator::AtLeast => Ok(num(&actual)? >= num(operands[0])?),
            Evaluator::AtMost => Ok(num(&actual)? <= num(operands[0])?),
            Evaluator::Between => {
                let x = num(&actual)?;
                Ok(num(operands[0])? <= x && x <= num(operands[1])?)
            }
            Evaluator::Contains => {
                let list = actual
                    .as_str()
                    .ok_or_else(|| mismatch(format!("feature `{feature_name}` is not a label list")))?;
                let needle = operands[0].to_string();
                Ok(list.split(',').map(str::trim).any(|l| l == needle))
            }
            Evaluator::IsTrue => actual
                .as_bool()
                .ok_or_else(|| mismatch(format!("feature `{feature_name}` is not boolean"))),
        }
    }

    /// Human-readable phrase for a literal.
    pub fn display(&self, predicate_id: &str, bindings: &BTreeMap<String, Value>, negated: bool) -> Option<String> {
        let spec = self.get(predicate_id)?;
        let mut out = if negated {
            spec.negated_display.clone()
        } else {
            spec.display_template.clone()
        };
        for (name, value) in bindings {
            out = out.replace(&format!("{{{name}}}"), &value.to_string());
        }
        Some(out)
    }

    /// Every (predicate, full binding) pair: the slot-domain product of each
    /// predicate. Polarity is not included.
    pub fn atoms(&self) -> Vec<(String, BTreeMap<String, Value>)> {
        let mut out = Vec::new();
        for spec in self.iter() {
            let mut partial: Vec<BTreeMap<String, Value>> = vec![BTreeMap::new()];
            for slot in &spec.arg_slots {
                partial = partial
                    .into_iter()
                    .flat_map(|b| {
                        slot.domain.iter().map(move |v| {
                            let mut b = b.clone();
                            b.insert(slot.name.clone(), v.clone());
                            b
                        })
                    })
                    .collect();
            }
            out.extend(partial.into_iter().map(|b| (spec.predicate_id.clone(), b)));
        }
        out
    }

    /// Distinct `(slot, value)` argument choices across all predicates, in
    /// registry order.
    pub fn arg_values(&self) -> Vec<(String, Value)> {
        let mut out: Vec<(String, Value)> = Vec::new();
        for spec in self.iter() {
            for slot in &spec.arg_slots {
                for v in &slot.domain {
                    if !out.iter().any(|(n, x)| n == &slot.name && x == v) {
                        out.push((slot.name.clone(), v.clone()));
                    }
                }
            }
        }
        out
    }

    /// Predicates for which `(slot, value)` is a legal argument.
    pub fn accepting(&self, slot: &str, value: &Value) -> Vec<&PredicateSpec> {
        self.iter()
            .filter(|p| p.arg_slots.iter().any(|s| s.name == slot && s.domain.contains(value)))
            .collect()
    }

    /// Checks that every formable literal evaluates on every state.
    pub fn check_states(&self, states: &StateSet) -> Result<(), EvalError> {
        let atoms = self.atoms();
        for state in states.iter() {
            for (pid, b) in &atoms {
                self.evaluate(pid, b, state)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(id: &str, eval: &str, slots: Vec<ArgSlot>, feature: &str) -> PredicateSpec {
        PredicateSpec {
            predicate_id: id.into(),
            display_template: format!("{id} holds"),
            negated_display: format!("{id} fails"),
            arg_slots: slots,
            evaluator_id: eval.into(),
            params: BTreeMap::from([("feature".to_string(), Value::from(feature))]),
        }
    }

    fn state() -> State {
        State {
            state_id: "s".into(),
            level: 4,
            features: BTreeMap::from([
                ("n".to_string(), Value::Int(3)),
                ("flag".to_string(), Value::Bool(true)),
                ("labels".to_string(), Value::from("cats, dogs")),
            ]),
            render: String::new(),
        }
    }

    fn slot(name: &str, vals: &[i64]) -> ArgSlot {
        ArgSlot {
            name: name.into(),
            domain: vals.iter().map(|&v| Value::Int(v)).collect(),
        }
    }

    #[test]
    fn unknown_evaluator_rejected() {
        let err = PredicateRegistry::new(vec![spec("p", "nonexistent", vec![], "n")]).unwrap_err();
        assert!(matches!(err, RegistryError::UnknownEvaluator { .. }));
    }

    #[test]
    fn empty_domain_rejected() {
        let err = PredicateRegistry::new(vec![spec("p", "equals", vec![slot("v", &[])], "n")]).unwrap_err();
        assert!(matches!(err, RegistryError::EmptyDomain { .. }));
    }

    #[test]
    fn arity_checked() {
        let err = PredicateRegistry::new(vec![spec("p", "is_true", vec![slot("v", &[1])], "flag")]).unwrap_err();
        assert!(matches!(err, RegistryError::Arity { .. }));
    }

    #[test]
    fn one_predicate_two_values_gives_two_atoms() {
        let reg = PredicateRegistry::new(vec![spec("p", "equals", vec![slot("v", &[1, 2])], "n")]).unwrap();
        let atoms = reg.atoms();
        assert_eq!(atoms.len(), 2);
        assert_eq!(atoms[0].1["v"], Value::Int(1));
        assert_eq!(atoms[1].1["v"], Value::Int(2));
    }

    #[test]
    fn kernels() {
        let reg = PredicateRegistry::new(vec![
            spec("eq", "equals", vec![slot("v", &[3])], "n"),
            spec("ge", "at_least", vec![slot("v", &[4])], "n"),
            spec("le", "at_most", vec![slot("v", &[3])], "n"),
            spec("bt", "between", vec![slot("lo", &[1]), slot("hi", &[3])], "n"),
            spec("flag", "is_true", vec![], "flag"),
            spec("lvl", "at_least", vec![slot("v", &[4])], "level"),
            PredicateSpec {
                arg_slots: vec![ArgSlot {
                    name: "label".into(),
                    domain: vec![Value::from("dogs")],
                }],
                ..spec("lab", "contains", vec![], "labels")
            },
        ])
        .unwrap();
        let s = state();
        let b = |pairs: &[(&str, Value)]| {
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect::<BTreeMap<_, _>>()
        };
        assert!(reg.evaluate("eq", &b(&[("v", Value::Int(3))]), &s).unwrap());
        assert!(!reg.evaluate("ge", &b(&[("v", Value::Int(4))]), &s).unwrap());
        assert!(reg.evaluate("le", &b(&[("v", Value::Int(3))]), &s).unwrap());
        assert!(reg
            .evaluate("bt", &b(&[("lo", Value::Int(1)), ("hi", Value::Int(3))]), &s)
            .unwrap());
        assert!(reg.evaluate("flag", &b(&[]), &s).unwrap());
        assert!(reg.evaluate("lvl", &b(&[("v", Value::Int(4))]), &s).unwrap());
        assert!(reg.evaluate("lab", &b(&[("label", Value::from("dogs"))]), &s).unwrap());
        assert!(matches!(
            reg.evaluate("eq", &b(&[]), &s),
            Err(EvalError::MissingBinding { .. })
        ));
        assert!(matches!(
            reg.evaluate("nope", &b(&[]), &s),
            Err(EvalError::UnknownPredicate(_))
        ));
    }

    #[test]
    fn display_substitutes_slots() {
        let mut p = spec("p", "equals", vec![slot("v", &[1])], "n");
        p.display_template = "n is {v}".into();
        p.negated_display = "n is not {v}".into();
        let reg = PredicateRegistry::new(vec![p]).unwrap();
        let b = BTreeMap::from([("v".to_string(), Value::Int(1))]);
        assert_eq!(reg.display("p", &b, false).unwrap(), "n is 1");
        assert_eq!(reg.display("p", &b, true).unwrap(), "n is not 1");
    }
}
