//! Threshold access trees and the policy text grammar.
//!
//! ```text
//! expr   := term | expr "OR" term
//! term   := factor | term "AND" factor
//! factor := ATTR | "(" expr ")" | k "of" "(" expr ("," expr)* ")"
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type AttributeSet = BTreeSet<String>;

/// Builds an [`AttributeSet`] from string slices.
pub fn attribute_set<I, S>(attrs: I) -> AttributeSet
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    attrs.into_iter().map(Into::into).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AccessTree {
    Leaf(String),
    /// Satisfied when at least `k` children are.
    Gate { k: usize, children: Vec<AccessTree> },
}

/// Chosen satisfying subtree: which children of each gate are used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatisfyingPlan {
    /// Index of the leaf in depth-first order.
    Leaf(usize),
    /// `(1-based child position, plan)` for exactly `k` children.
    Gate(Vec<(usize, SatisfyingPlan)>),
}

impl SatisfyingPlan {
    pub fn leaf_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<usize>) {
        match self {
            SatisfyingPlan::Leaf(i) => out.push(*i),
            SatisfyingPlan::Gate(chosen) => chosen.iter().for_each(|(_, p)| p.collect(out)),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            SatisfyingPlan::Leaf(_) => 1,
            SatisfyingPlan::Gate(chosen) => chosen.iter().map(|(_, p)| p.size()).sum(),
        }
    }
}

impl AccessTree {
    pub fn leaf(attr: impl Into<String>) -> Self {
        AccessTree::Leaf(attr.into())
    }

    pub fn threshold(k: usize, children: Vec<AccessTree>) -> Result<Self> {
        let tree = AccessTree::Gate { k, children };
        tree.validate()?;
        Ok(tree)
    }

    pub fn and(children: Vec<AccessTree>) -> Result<Self> {
        Self::threshold(children.len(), children)
    }

    pub fn or(children: Vec<AccessTree>) -> Result<Self> {
        Self::threshold(1, children)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AccessTree::Leaf(attr) if attr.is_empty() => {
                Err(Error::MalformedTree("empty attribute name".into()))
            }
            AccessTree::Leaf(_) => Ok(()),
            AccessTree::Gate { k, children } => {
                if children.is_empty() {
                    return Err(Error::MalformedTree("gate without children".into()));
                }
                if *k == 0 || *k > children.len() {
                    return Err(Error::MalformedTree(format!(
                        "threshold {k} outside 1..={}",
                        children.len()
                    )));
                }
                children.iter().try_for_each(AccessTree::validate)
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            AccessTree::Leaf(_) => 1,
            AccessTree::Gate { children, .. } => children.iter().map(AccessTree::leaf_count).sum(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            AccessTree::Leaf(_) => 1,
            AccessTree::Gate { children, .. } => {
                1 + children.iter().map(AccessTree::depth).max().unwrap_or(0)
            }
        }
    }

    /// Leaf attributes in depth-first order.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            AccessTree::Leaf(attr) => out.push(attr),
            AccessTree::Gate { children, .. } => {
                children.iter().for_each(|c| c.collect_leaves(out))
            }
        }
    }

    pub fn satisfies(&self, attrs: &AttributeSet) -> bool {
        match self {
            AccessTree::Leaf(attr) => attrs.contains(attr),
            AccessTree::Gate { k, children } => {
                children.iter().filter(|c| c.satisfies(attrs)).count() >= *k
            }
        }
    }

    /// Smallest satisfying subtree; ties go to the leftmost children.
    pub fn satisfying_plan(&self, attrs: &AttributeSet) -> Option<SatisfyingPlan> {
        self.plan_from(attrs, &mut 0)
    }

    fn plan_from(&self, attrs: &AttributeSet, next_leaf: &mut usize) -> Option<SatisfyingPlan> {
        match self {
            AccessTree::Leaf(attr) => {
                let index = *next_leaf;
                *next_leaf += 1;
                attrs.contains(attr).then_some(SatisfyingPlan::Leaf(index))
            }
            AccessTree::Gate { k, children } => {
                let mut candidates: Vec<(usize, SatisfyingPlan)> = children
                    .iter()
                    .enumerate()
                    .filter_map(|(i, c)| c.plan_from(attrs, next_leaf).map(|p| (i + 1, p)))
                    .collect();
                if candidates.len() < *k {
                    return None;
                }
                candidates.sort_by_key(|(pos, plan)| (plan.size(), *pos));
                candidates.truncate(*k);
                candidates.sort_by_key(|(pos, _)| *pos);
                Some(SatisfyingPlan::Gate(candidates))
            }
        }
    }

    /// Flattens AND-in-AND and OR-in-OR, and collapses single-child gates.
    pub fn canonical(self) -> Self {
        match self {
            AccessTree::Leaf(_) => self,
            AccessTree::Gate { k, children } => {
                let n = children.len();
                let mut children: Vec<AccessTree> =
                    children.into_iter().map(AccessTree::canonical).collect();
                if n == 1 {
                    return children.pop().unwrap();
                }
                let kind = GateKind::of(k, n);
                if kind != GateKind::Threshold {
                    children = children
                        .into_iter()
                        .flat_map(|c| match c {
                            AccessTree::Gate { k: ck, children: cc }
                                if GateKind::of(ck, cc.len()) == kind =>
                            {
                                cc
                            }
                            other => vec![other],
                        })
                        .collect();
                }
                let k = match kind {
                    GateKind::And => children.len(),
                    _ => k,
                };
                AccessTree::Gate { k, children }
            }
        }
    }

    fn unwrap_single(&self) -> &AccessTree {
        match self {
            AccessTree::Gate { children, .. } if children.len() == 1 => children[0].unwrap_single(),
            _ => self,
        }
    }

    fn fmt_child(&self, parent: GateKind, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let node = self.unwrap_single();
        let needs_parens = matches!(
            node,
            AccessTree::Gate { k, children }
                if parent == GateKind::And && GateKind::of(*k, children.len()) == GateKind::Or
        );
        if needs_parens {
            write!(f, "({node})")
        } else {
            write!(f, "{node}")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GateKind {
    And,
    Or,
    Threshold,
}

impl GateKind {
    fn of(k: usize, n: usize) -> Self {
        if k == n {
            GateKind::And
        } else if k == 1 {
            GateKind::Or
        } else {
            GateKind::Threshold
        }
    }
}

impl fmt::Display for AccessTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccessTree::Leaf(attr) => f.write_str(attr),
            AccessTree::Gate { children, .. } if children.len() == 1 => children[0].fmt(f),
            AccessTree::Gate { k, children } => {
                let kind = GateKind::of(*k, children.len());
                let sep = match kind {
                    GateKind::And => " AND ",
                    GateKind::Or => " OR ",
                    GateKind::Threshold => ", ",
                };
                if kind == GateKind::Threshold {
                    write!(f, "{k} of (")?;
                }
                for (i, child) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    child.fmt_child(kind, f)?;
                }
                if kind == GateKind::Threshold {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for AccessTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_policy(s)
    }
}

pub fn satisfies(tree: &AccessTree, attrs: &AttributeSet) -> bool {
    tree.satisfies(attrs)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    LParen,
    RParen,
    Comma,
    And,
    Or,
    Of,
    Word(String),
}

fn is_attr_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':' | '@' | '/')
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        let token = match c {
            c if c.is_whitespace() => {
                chars.next();
                continue;
            }
            '(' => Token::LParen,
            ')' => Token::RParen,
            ',' => Token::Comma,
            c if is_attr_char(c) => {
                let mut word = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if !is_attr_char(c) {
                        break;
                    }
                    word.push(c);
                    chars.next();
                }
                let token = match word.as_str() {
                    w if w.eq_ignore_ascii_case("and") => Token::And,
                    w if w.eq_ignore_ascii_case("or") => Token::Or,
                    w if w.eq_ignore_ascii_case("of") => Token::Of,
                    _ => Token::Word(word),
                };
                tokens.push((pos, token));
                continue;
            }
            other => {
                return Err(Error::Syntax { position: pos, message: format!("unexpected character `{other}`") })
            }
        };
        chars.next();
        tokens.push((pos, token));
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    index: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.index).map(|(_, t)| t)
    }

    fn peek_at(&self, offset: usize) -> Option<&Token> {
        self.tokens.get(self.index + offset).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.index).map_or(self.end, |(p, _)| *p)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax { position: self.position(), message: message.into() })
    }

    fn expect(&mut self, token: Token, what: &str) -> Result<()> {
        if self.peek() == Some(&token) {
            self.index += 1;
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn expr(&mut self) -> Result<AccessTree> {
        let mut terms = vec![self.term()?];
        while self.peek() == Some(&Token::Or) {
            self.index += 1;
            terms.push(self.term()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { AccessTree::Gate { k: 1, children: terms } })
    }

    fn term(&mut self) -> Result<AccessTree> {
        let mut factors = vec![self.factor()?];
        while self.peek() == Some(&Token::And) {
            self.index += 1;
            factors.push(self.factor()?);
        }
        let n = factors.len();
        Ok(if n == 1 { factors.pop().unwrap() } else { AccessTree::Gate { k: n, children: factors } })
    }

    fn factor(&mut self) -> Result<AccessTree> {
        match self.peek().cloned() {
            Some(Token::LParen) => {
                self.index += 1;
                let inner = self.expr()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Token::Word(word)) if self.peek_at(1) == Some(&Token::Of) => {
                let start = self.position();
                let k: usize = match word.parse() {
                    Ok(k) => k,
                    Err(_) => return self.error("threshold must be a positive integer"),
                };
                self.index += 2;
                self.expect(Token::LParen, "`(` after `of`")?;
                let mut children = vec![self.expr()?];
                while self.peek() == Some(&Token::Comma) {
                    self.index += 1;
                    children.push(self.expr()?);
                }
                self.expect(Token::RParen, "`)` closing threshold list")?;
                if k == 0 || k > children.len() {
                    return Err(Error::Syntax {
                        position: start,
                        message: format!("threshold {k} outside 1..={}", children.len()),
                    });
                }
                Ok(AccessTree::Gate { k, children })
            }
            Some(Token::Word(word)) => {
                self.index += 1;
                Ok(AccessTree::Leaf(word))
            }
            Some(_) => self.error("expected attribute, `(` or threshold"),
            None => self.error("unexpected end of policy"),
        }
    }
}

/// Parses policy text into its canonical tree.
pub fn parse_policy(text: &str) -> Result<AccessTree> {
    let mut parser = Parser { tokens: tokenize(text)?, index: 0, end: text.len() };
    let tree = parser.expr()?;
    if parser.peek().is_some() {
        return parser.error("unexpected trailing input");
    }
    Ok(tree.canonical())
}
