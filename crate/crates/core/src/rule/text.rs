//! Canonical text form of rules.
//!
//! ```text
//! rule    := "ALL" | "NONE" | node
//! node    := literal | "(" " " node " " op " " node " " ")"
//! op      := "AND" | "OR"
//! literal := "lit:" ["!"] ident "[" [ident "=" json ("," ident "=" json)*] "]"
//! ```
//!
//! Bindings are written in slot-name order and values as JSON scalars.
//! The parser accepts any amount of whitespace between tokens; `Display`
//! always emits single spaces.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Literal, Logical, Node, RuleExpr};
use crate::model::Value;

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("lit:")?;
        if self.negated {
            f.write_str("!")?;
        }
        write!(f, "{}[", self.predicate_id)?;
        for (i, (k, v)) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}={}", v.to_json_literal())?;
        }
        f.write_str("]")
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Literal(l) => write!(f, "{l}"),
            Node::And(a, b) => write!(f, "( {a} AND {b} )"),
            Node::Or(a, b) => write!(f, "( {a} OR {b} )"),
        }
    }
}

impl fmt::Display for RuleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleExpr::AllStates => f.write_str("ALL"),
            RuleExpr::NoStates => f.write_str("NONE"),
            RuleExpr::Expr(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("rule text, byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

fn is_ident(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, tok: &str) -> bool {
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<(), ParseError> {
        if self.eat(tok) {
            Ok(())
        } else {
            self.err(format!("expected `{tok}`"))
        }
    }

    fn ident(&mut self) -> Result<&'a str, ParseError> {
        let len = self.rest().find(|c| !is_ident(c)).unwrap_or(self.rest().len());
        if len == 0 {
            return self.err("expected an identifier");
        }
        let s = &self.rest()[..len];
        self.pos += len;
        Ok(s)
    }

    fn value(&mut self) -> Result<Value, ParseError> {
        let mut stream = serde_json::Deserializer::from_str(self.rest()).into_iter::<Value>();
        match stream.next() {
            Some(Ok(v)) => {
                self.pos += stream.byte_offset();
                Ok(v)
            }
            _ => self.err("expected a JSON scalar"),
        }
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        self.expect("lit:")?;
        let negated = self.eat("!");
        let predicate_id = self.ident()?.to_string();
        self.expect("[")?;
        let mut bindings = BTreeMap::new();
        if !self.eat("]") {
            loop {
                let name = self.ident()?.to_string();
                self.expect("=")?;
                let v = self.value()?;
                if bindings.insert(name.clone(), v).is_some() {
                    return self.err(format!("slot `{name}` bound twice"));
                }
                if self.eat("]") {
                    break;
                }
                self.expect(",")?;
            }
        }
        Ok(Literal {
            predicate_id,
            bindings,
            negated,
        })
    }

    fn node(&mut self) -> Result<Node, ParseError> {
        self.skip_ws();
        if self.eat("(") {
            let left = self.node()?;
            self.skip_ws();
            let op = if self.eat("AND") {
                Logical::And
            } else if self.eat("OR") {
                Logical::Or
            } else {
                return self.err("expected `AND` or `OR`");
            };
            let right = self.node()?;
            self.skip_ws();
            self.expect(")")?;
            Ok(Node::join(op, left, right))
        } else {
            Ok(Node::Literal(self.literal()?))
        }
    }
}

pub fn parse_rule(src: &str) -> Result<RuleExpr, ParseError> {
    let mut p = Parser { src, pos: 0 };
    p.skip_ws();
    let rule = if p.eat("ALL") {
        RuleExpr::AllStates
    } else if p.eat("NONE") {
        RuleExpr::NoStates
    } else {
        RuleExpr::Expr(p.node()?)
    };
    p.skip_ws();
    if p.pos != src.len() {
        return p.err("trailing input");
    }
    Ok(rule)
}

impl std::str::FromStr for RuleExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_rule(s)
    }
}

impl Serialize for RuleExpr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RuleExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_rule(&s).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Literal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Literal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut p = Parser { src: &s, pos: 0 };
        let lit = p.literal().map_err(serde::de::Error::custom)?;
        if p.pos != s.len() {
            return Err(serde::de::Error::custom("trailing input after literal"));
        }
        Ok(lit)
    }
}
