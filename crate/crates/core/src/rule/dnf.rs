use std::collections::{BTreeMap, HashMap};

use super::{Literal, Node, RuleExpr, LENGTH_LIMIT};
use crate::model::Value;

/// A disjunction of non-empty conjunctions of literals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DnfExpr {
    clauses: Vec<Vec<Literal>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DnfError {
    #[error("a DNF needs at least one clause")]
    NoClauses,
    #[error("clause {0} is empty")]
    EmptyClause(usize),
}

/// Returned by [`to_dnf`] for the two constant rules, which have no literal form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("constant rule ({0}) has no literal DNF")]
pub struct ConstantRule(pub bool);

impl DnfExpr {
    pub fn new(clauses: Vec<Vec<Literal>>) -> Result<Self, DnfError> {
        if clauses.is_empty() {
            return Err(DnfError::NoClauses);
        }
        if let Some(i) = clauses.iter().position(Vec::is_empty) {
            return Err(DnfError::EmptyClause(i));
        }
        Ok(DnfExpr { clauses })
    }

    pub fn clauses(&self) -> &[Vec<Literal>] {
        &self.clauses
    }

    pub fn literal_count(&self) -> usize {
        self.clauses.iter().map(Vec::len).sum()
    }

    /// Left-nested tree: clauses ANDed internally, then ORed together.
    pub fn to_rule(&self) -> RuleExpr {
        let clause_node = |c: &Vec<Literal>| {
            c.iter()
                .cloned()
                .map(Node::Literal)
                .reduce(Node::and)
                .expect("clauses are non-empty")
        };
        let node = self
            .clauses
            .iter()
            .map(clause_node)
            .reduce(Node::or)
            .expect("at least one clause");
        RuleExpr::Expr(node)
    }
}

/// Distributes AND over OR. No simplification is attempted.
pub fn to_dnf(rule: &RuleExpr) -> Result<DnfExpr, ConstantRule> {
    match rule {
        RuleExpr::AllStates => Err(ConstantRule(true)),
        RuleExpr::NoStates => Err(ConstantRule(false)),
        RuleExpr::Expr(n) => Ok(DnfExpr { clauses: node_dnf(n) }),
    }
}

fn node_dnf(node: &Node) -> Vec<Vec<Literal>> {
    match node {
        Node::Literal(l) => vec![vec![l.clone()]],
        Node::Or(a, b) => {
            let mut out = node_dnf(a);
            out.extend(node_dnf(b));
            out
        }
        Node::And(a, b) => {
            let left = node_dnf(a);
            let right = node_dnf(b);
            let mut out = Vec::with_capacity(left.len() * right.len());
            for l in &left {
                for r in &right {
                    let mut c = l.clone();
                    c.extend(r.iter().cloned());
                    out.push(c);
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EquivalenceError {
    #[error("{count} distinct literals exceed the truth-table limit of {limit}")]
    TooManyLiterals { count: usize, limit: usize },
}

type Atom<'a> = (&'a str, &'a BTreeMap<String, Value>);

/// Truth-table equivalence with literals as free boolean variables.
///
/// A literal and its negation share one variable. Works for the constant
/// rules as well.
pub fn equivalent(a: &RuleExpr, b: &RuleExpr) -> Result<bool, EquivalenceError> {
    let mut vars: HashMap<Atom<'_>, usize> = HashMap::new();
    for lit in a.literals().into_iter().chain(b.literals()) {
        let n = vars.len();
        vars.entry(lit.atom()).or_insert(n);
    }
    if vars.len() > LENGTH_LIMIT {
        return Err(EquivalenceError::TooManyLiterals {
            count: vars.len(),
            limit: LENGTH_LIMIT,
        });
    }
    let eval = |rule: &RuleExpr, assignment: u32| {
        rule.eval_with::<std::convert::Infallible>(|l| {
            let bit = (assignment >> vars[&l.atom()]) & 1 == 1;
            Ok(bit != l.negated)
        })
        .unwrap_or_else(|e| match e {})
    };
    Ok((0..1u32 << vars.len()).all(|m| eval(a, m) == eval(b, m)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(name: &str) -> Node {
        Node::lit(Literal::new(name))
    }

    #[test]
    fn single_literal_dnf() {
        let d = to_dnf(&RuleExpr::Expr(l("A"))).unwrap();
        assert_eq!(d.clauses(), &[vec![Literal::new("A")]]);
    }

    #[test]
    fn one_distribution_step() {
        let r = RuleExpr::Expr(Node::and(Node::or(l("A"), l("B")), l("C")));
        let d = to_dnf(&r).unwrap();
        let (a, b, c) = (Literal::new("A"), Literal::new("B"), Literal::new("C"));
        assert_eq!(d.clauses(), &[vec![a, c.clone()], vec![b, c]]);
    }

    #[test]
    fn dnf_input_unchanged() {
        let r = RuleExpr::Expr(Node::or(Node::and(l("W"), l("H")), Node::and(l("S"), l("T"))));
        let d = to_dnf(&r).unwrap();
        assert_eq!(d.clauses().len(), 2);
        assert!(d.clauses().iter().all(|c| c.len() == 2));
        assert_eq!(d.to_rule(), r);
    }

    #[test]
    fn constants_have_no_dnf() {
        assert_eq!(to_dnf(&RuleExpr::AllStates), Err(ConstantRule(true)));
        assert_eq!(to_dnf(&RuleExpr::NoStates), Err(ConstantRule(false)));
    }

    #[test]
    fn equivalence_examples() {
        let a = RuleExpr::Expr(l("A"));
        assert!(equivalent(&a, &a).unwrap());
        let ab = RuleExpr::Expr(Node::and(l("A"), l("B")));
        let ba = RuleExpr::Expr(Node::and(l("B"), l("A")));
        assert!(equivalent(&ab, &ba).unwrap());
        let lhs = RuleExpr::Expr(Node::or(l("A"), Node::and(l("B"), l("C"))));
        let rhs = RuleExpr::Expr(Node::and(Node::or(l("A"), l("B")), Node::or(l("A"), l("C"))));
        assert!(equivalent(&lhs, &rhs).unwrap());
        assert!(!equivalent(&ab, &lhs).unwrap());
    }

    #[test]
    fn negation_shares_variable() {
        let taut = RuleExpr::Expr(Node::or(l("A"), Node::lit(Literal::new("A").negate())));
        assert!(equivalent(&taut, &RuleExpr::AllStates).unwrap());
        let contra = RuleExpr::Expr(Node::and(l("A"), Node::lit(Literal::new("A").negate())));
        assert!(equivalent(&contra, &RuleExpr::NoStates).unwrap());
    }

    #[test]
    fn too_many_literals() {
        let node = (0..17).map(|i| l(&format!("P{i}"))).reduce(Node::or).unwrap();
        let r = RuleExpr::Expr(node);
        assert_eq!(
            equivalent(&r, &r),
            Err(EquivalenceError::TooManyLiterals { count: 17, limit: 16 })
        );
    }

    #[test]
    fn dnf_constructor_rejects_empty() {
        assert_eq!(DnfExpr::new(vec![]), Err(DnfError::NoClauses));
        assert_eq!(
            DnfExpr::new(vec![vec![Literal::new("A")], vec![]]),
            Err(DnfError::EmptyClause(1))
        );
    }
}
