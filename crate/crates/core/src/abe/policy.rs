//! Monotone access policies and attribute sets.
//!
//! Textual form (also used by the JSON scenario files and the CLI):
//!
//! ```text
//! AND(campus:staff, OR(campus:floor3, THRESHOLD(2, city:a, city:b, city:c)))
//! ```
//!
//! A leaf is `authority:attribute`. The binary form is a prefix-notation
//! token stream, see [`AccessPolicy::to_bytes`].

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AbeError;
use crate::codec::{Reader, Writer};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Attribute {
    pub authority: String,
    pub name: String,
}

impl Attribute {
    pub fn new(authority: impl Into<String>, name: impl Into<String>) -> Self {
        Attribute { authority: authority.into(), name: name.into() }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.authority, self.name)
    }
}

fn valid_ident(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b"-_.".contains(&b))
}

impl FromStr for Attribute {
    type Err = AbeError;

    fn from_str(s: &str) -> Result<Self, AbeError> {
        let (auth, name) = s.trim().split_once(':').ok_or_else(|| AbeError::PolicySyntax(format!("leaf `{s}` lacks `authority:`")))?;
        if !valid_ident(auth) || !valid_ident(name) {
            return Err(AbeError::PolicySyntax(format!("bad leaf `{s}`")));
        }
        Ok(Attribute::new(auth, name))
    }
}

impl Serialize for Attribute {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Attribute {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A set of (authority, attribute) pairs; duplicates collapse.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeSet(BTreeSet<Attribute>);

impl AttributeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: Attribute) -> bool {
        self.0.insert(a)
    }

    pub fn contains(&self, a: &Attribute) -> bool {
        self.0.contains(a)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Attribute> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn union(&self, other: &AttributeSet) -> AttributeSet {
        AttributeSet(self.0.union(&other.0).cloned().collect())
    }
}

impl FromIterator<Attribute> for AttributeSet {
    fn from_iter<I: IntoIterator<Item = Attribute>>(iter: I) -> Self {
        AttributeSet(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a AttributeSet {
    type Item = &'a Attribute;
    type IntoIter = std::collections::btree_set::Iter<'a, Attribute>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PolicyNode {
    And(Vec<PolicyNode>),
    Or(Vec<PolicyNode>),
    Threshold { k: usize, children: Vec<PolicyNode> },
    Leaf(Attribute),
}

impl PolicyNode {
    pub fn leaf(authority: &str, name: &str) -> Self {
        PolicyNode::Leaf(Attribute::new(authority, name))
    }

    fn validate(&self) -> Result<(), AbeError> {
        match self {
            PolicyNode::Leaf(_) => Ok(()),
            PolicyNode::And(c) | PolicyNode::Or(c) => {
                if c.is_empty() {
                    return Err(AbeError::InvalidPolicy("gate without children".into()));
                }
                c.iter().try_for_each(PolicyNode::validate)
            }
            PolicyNode::Threshold { k, children } => {
                if *k == 0 || *k > children.len() {
                    return Err(AbeError::InvalidPolicy(format!("threshold {k} of {}", children.len())));
                }
                children.iter().try_for_each(PolicyNode::validate)
            }
        }
    }

    fn satisfied_by(&self, attrs: &AttributeSet) -> bool {
        match self {
            PolicyNode::Leaf(a) => attrs.contains(a),
            PolicyNode::And(c) => c.iter().all(|n| n.satisfied_by(attrs)),
            PolicyNode::Or(c) => c.iter().any(|n| n.satisfied_by(attrs)),
            PolicyNode::Threshold { k, children } => children.iter().filter(|n| n.satisfied_by(attrs)).count() >= *k,
        }
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Attribute>) {
        match self {
            PolicyNode::Leaf(a) => out.push(a),
            PolicyNode::And(c) | PolicyNode::Or(c) | PolicyNode::Threshold { children: c, .. } => {
                c.iter().for_each(|n| n.collect_leaves(out))
            }
        }
    }

    fn depth(&self) -> usize {
        match self {
            PolicyNode::Leaf(_) => 0,
            PolicyNode::And(c) | PolicyNode::Or(c) | PolicyNode::Threshold { children: c, .. } => {
                1 + c.iter().map(PolicyNode::depth).max().unwrap_or(0)
            }
        }
    }
}

impl fmt::Display for PolicyNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, c: &[PolicyNode]) -> fmt::Result {
            for (i, n) in c.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{n}")?;
            }
            Ok(())
        }
        match self {
            PolicyNode::Leaf(a) => write!(f, "{a}"),
            PolicyNode::And(c) => {
                f.write_str("AND(")?;
                list(f, c)?;
                f.write_str(")")
            }
            PolicyNode::Or(c) => {
                f.write_str("OR(")?;
                list(f, c)?;
                f.write_str(")")
            }
            PolicyNode::Threshold { k, children } => {
                write!(f, "THRESHOLD({k}, ")?;
                list(f, children)?;
                f.write_str(")")
            }
        }
    }
}

/// A validated, non-empty monotone policy tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccessPolicy {
    root: PolicyNode,
}

const TOK_AND: u8 = 0x01;
const TOK_OR: u8 = 0x02;
const TOK_THRESHOLD: u8 = 0x03;
const TOK_LEAF: u8 = 0x04;

impl AccessPolicy {
    pub fn new(root: PolicyNode) -> Result<Self, AbeError> {
        root.validate()?;
        Ok(AccessPolicy { root })
    }

    pub fn root(&self) -> &PolicyNode {
        &self.root
    }

    /// Leaves in pre-order; the ABE share vectors use this order.
    pub fn leaves(&self) -> Vec<&Attribute> {
        let mut out = Vec::new();
        self.root.collect_leaves(&mut out);
        out
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Prefix token stream: `AND n`, `OR n`, `THRESHOLD k n`, `LEAF authority name`,
    /// counts as u16, strings as length-prefixed sections.
    pub fn to_bytes(&self) -> Vec<u8> {
        fn walk(n: &PolicyNode, w: &mut Writer) {
            match n {
                PolicyNode::And(c) => {
                    w.put_u8(TOK_AND).put_u16(c.len() as u16);
                    c.iter().for_each(|x| walk(x, w));
                }
                PolicyNode::Or(c) => {
                    w.put_u8(TOK_OR).put_u16(c.len() as u16);
                    c.iter().for_each(|x| walk(x, w));
                }
                PolicyNode::Threshold { k, children } => {
                    w.put_u8(TOK_THRESHOLD).put_u16(*k as u16).put_u16(children.len() as u16);
                    children.iter().for_each(|x| walk(x, w));
                }
                PolicyNode::Leaf(a) => {
                    w.put_u8(TOK_LEAF);
                    w.put_section(a.authority.as_bytes()).expect("identifier fits");
                    w.put_section(a.name.as_bytes()).expect("identifier fits");
                }
            }
        }
        let mut w = Writer::new();
        walk(&self.root, &mut w);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AbeError> {
        fn node(r: &mut Reader<'_>, depth: usize) -> Result<PolicyNode, AbeError> {
            if depth > 32 {
                return Err(AbeError::Malformed("policy nesting too deep"));
            }
            let tok = r.u8()?;
            let children = |r: &mut Reader<'_>, n: u16| (0..n).map(|_| node(r, depth + 1)).collect::<Result<Vec<_>, _>>();
            Ok(match tok {
                TOK_AND => {
                    let n = r.u16()?;
                    PolicyNode::And(children(r, n)?)
                }
                TOK_OR => {
                    let n = r.u16()?;
                    PolicyNode::Or(children(r, n)?)
                }
                TOK_THRESHOLD => {
                    let k = r.u16()? as usize;
                    let n = r.u16()?;
                    PolicyNode::Threshold { k, children: children(r, n)? }
                }
                TOK_LEAF => {
                    let auth = std::str::from_utf8(r.section()?).map_err(|_| AbeError::Malformed("leaf authority"))?;
                    let name = std::str::from_utf8(r.section()?).map_err(|_| AbeError::Malformed("leaf name"))?;
                    PolicyNode::Leaf(Attribute::new(auth, name))
                }
                _ => return Err(AbeError::Malformed("unknown policy token")),
            })
        }
        let mut r = Reader::new(bytes);
        let root = node(&mut r, 0)?;
        r.finish()?;
        AccessPolicy::new(root)
    }
}

impl fmt::Display for AccessPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl FromStr for AccessPolicy {
    type Err = AbeError;

    fn from_str(s: &str) -> Result<Self, AbeError> {
        let mut p = Parser { src: s, pos: 0 };
        let root = p.node()?;
        p.skip_ws();
        if p.pos != s.len() {
            return Err(AbeError::PolicySyntax(format!("trailing input at {}", p.pos)));
        }
        AccessPolicy::new(root)
    }
}

impl Serialize for AccessPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AccessPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn word(&mut self) -> &str {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let len = rest.find(|c: char| !(c.is_ascii_alphanumeric() || "-_.:".contains(c))).unwrap_or(rest.len());
        self.pos += len;
        &self.src[start..start + len]
    }

    fn args(&mut self) -> Result<Vec<PolicyNode>, AbeError> {
        let mut out = vec![self.node()?];
        while self.eat(',') {
            out.push(self.node()?);
        }
        if !self.eat(')') {
            return Err(AbeError::PolicySyntax(format!("expected `)` at {}", self.pos)));
        }
        Ok(out)
    }

    fn node(&mut self) -> Result<PolicyNode, AbeError> {
        let w = self.word().to_string();
        if w.is_empty() {
            return Err(AbeError::PolicySyntax(format!("expected a gate or leaf at {}", self.pos)));
        }
        if !self.eat('(') {
            return Ok(PolicyNode::Leaf(w.parse()?));
        }
        match w.to_ascii_uppercase().as_str() {
            "AND" => Ok(PolicyNode::And(self.args()?)),
            "OR" => Ok(PolicyNode::Or(self.args()?)),
            "THRESHOLD" => {
                let k: usize = self.word().parse().map_err(|_| AbeError::PolicySyntax("threshold count".into()))?;
                if !self.eat(',') {
                    return Err(AbeError::PolicySyntax("expected `,` after threshold count".into()));
                }
                Ok(PolicyNode::Threshold { k, children: self.args()? })
            }
            other => Err(AbeError::PolicySyntax(format!("unknown gate `{other}`"))),
        }
    }
}

/// Recursive evaluation: leaf = membership, AND = all, OR = any,
/// THRESHOLD(k) = at least k children.
pub fn policy_satisfied(policy: &AccessPolicy, attrs: &AttributeSet) -> bool {
    policy.root.satisfied_by(attrs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> AttributeSet {
        items.iter().map(|s| s.parse().unwrap()).collect()
    }

    #[test]
    fn or_and_semantics() {
        let p: AccessPolicy = "OR(x:a, x:b)".parse().unwrap();
        assert!(policy_satisfied(&p, &set(&["x:b"])));
        let p: AccessPolicy = "AND(x:a)".parse().unwrap();
        assert!(!policy_satisfied(&p, &set(&[])));
    }

    #[test]
    fn empty_gates_and_bad_thresholds_rejected() {
        assert!(AccessPolicy::new(PolicyNode::And(vec![])).is_err());
        assert!(AccessPolicy::new(PolicyNode::Or(vec![])).is_err());
        assert!("THRESHOLD(0, x:a)".parse::<AccessPolicy>().is_err());
        assert!("THRESHOLD(3, x:a, x:b)".parse::<AccessPolicy>().is_err());
        assert!("AND(x:a".parse::<AccessPolicy>().is_err());
        assert!("NOT(x:a)".parse::<AccessPolicy>().is_err());
        assert!("plain".parse::<AccessPolicy>().is_err());
    }

    #[test]
    fn threshold_counts() {
        let p: AccessPolicy = "THRESHOLD(2, x:a, x:b, x:c)".parse().unwrap();
        assert!(policy_satisfied(&p, &set(&["x:a", "x:c"])));
        assert!(!policy_satisfied(&p, &set(&["x:b"])));
    }

    #[test]
    fn text_and_binary_forms_round_trip() {
        let src = "AND(campus:staff, OR(campus:floor3, THRESHOLD(2, city:a, city:b, city:c)))";
        let p: AccessPolicy = src.parse().unwrap();
        assert_eq!(p.to_string(), src);
        assert_eq!(AccessPolicy::from_bytes(&p.to_bytes()).unwrap(), p);
        assert_eq!(p.leaves().len(), 5);
        assert_eq!(p.depth(), 3);
    }

    #[test]
    fn binary_rejects_trailing_and_unknown_tokens() {
        let p: AccessPolicy = "x:a".parse().unwrap();
        let mut b = p.to_bytes();
        b.push(0);
        assert!(AccessPolicy::from_bytes(&b).is_err());
        assert!(AccessPolicy::from_bytes(&[0x09]).is_err());
    }
}
