//! Decryption policies as threshold access trees.
//!
//! Policy text grammar (keywords are case-insensitive, attributes are not):
//!
//! ```text
//! policy   := or_expr
//! or_expr  := and_expr ("or" and_expr)*
//! and_expr := primary ("and" primary)*
//! primary  := ATTR | INT "of" "(" policy ("," policy)* ")" | "(" policy ")"
//! ```
//!
//! `and`/`or` chains flatten into a single n-ary gate. A tree prints back to the same tree
//! through [`PolicyTree`]'s `Display` impl.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{CryptoRng, RngCore};

use crate::error::{Error, Result};
use crate::group::Scalar;

const KEYWORDS: [&str; 3] = ["and", "or", "of"];

fn is_attribute_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | ':' | '-')
}

fn is_keyword(word: &str) -> bool {
    KEYWORDS.iter().any(|k| word.eq_ignore_ascii_case(k))
}

/// Checks an attribute string against `[A-Za-z0-9_.:-]+`, excluding the policy keywords.
pub fn validate_attribute(attr: &str) -> Result<()> {
    if attr.is_empty() || !attr.chars().all(is_attribute_char) || is_keyword(attr) {
        return Err(Error::InvalidAttribute(attr.to_owned()));
    }
    Ok(())
}

/// A set of attribute strings held by a user or requested from an authority.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct AttributeSet(BTreeSet<String>);

impl AttributeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn try_from_iter<I, S>(iter: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = Self::new();
        for attr in iter {
            set.insert(attr)?;
        }
        Ok(set)
    }

    /// Returns whether the attribute was newly inserted.
    pub fn insert(&mut self, attr: impl Into<String>) -> Result<bool> {
        let attr = attr.into();
        validate_attribute(&attr)?;
        Ok(self.0.insert(attr))
    }

    pub fn contains(&self, attr: &str) -> bool {
        self.0.contains(attr)
    }

    pub fn is_subset(&self, other: &AttributeSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn extend_from(&mut self, other: &AttributeSet) {
        self.0.extend(other.0.iter().cloned());
    }
}

/// Parses a comma-separated attribute list; surrounding whitespace is ignored.
impl FromStr for AttributeSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::try_from_iter(s.split(',').map(str::trim).filter(|a| !a.is_empty()))
    }
}

impl fmt::Display for AttributeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for attr in &self.0 {
            if !first {
                f.write_str(",")?;
            }
            f.write_str(attr)?;
            first = false;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PolicyNode {
    Leaf {
        attribute: String,
        /// Position of this leaf in left-to-right depth-first order.
        index: usize,
    },
    Gate {
        threshold: usize,
        children: Vec<PolicyNode>,
    },
}

impl PolicyNode {
    /// A leaf whose index is assigned when the tree is built.
    pub fn leaf(attribute: impl Into<String>) -> Self {
        PolicyNode::Leaf {
            attribute: attribute.into(),
            index: 0,
        }
    }

    pub fn gate(threshold: usize, children: Vec<PolicyNode>) -> Self {
        PolicyNode::Gate {
            threshold,
            children,
        }
    }

    pub fn and(children: Vec<PolicyNode>) -> Self {
        Self::gate(children.len(), children)
    }

    pub fn or(children: Vec<PolicyNode>) -> Self {
        Self::gate(1, children)
    }

    fn validate_and_index(&mut self, next: &mut usize) -> Result<()> {
        match self {
            PolicyNode::Leaf { attribute, index } => {
                validate_attribute(attribute)?;
                *index = *next;
                *next += 1;
            }
            PolicyNode::Gate {
                threshold,
                children,
            } => {
                if *threshold < 1 || *threshold > children.len() {
                    return Err(Error::ThresholdOutOfRange {
                        threshold: *threshold,
                        children: children.len(),
                    });
                }
                for child in children {
                    child.validate_and_index(next)?;
                }
            }
        }
        Ok(())
    }

    fn evaluate(&self, attrs: &AttributeSet) -> bool {
        match self {
            PolicyNode::Leaf { attribute, .. } => attrs.contains(attribute),
            PolicyNode::Gate {
                threshold,
                children,
            } => children.iter().filter(|c| c.evaluate(attrs)).count() >= *threshold,
        }
    }
}

/// A validated threshold access tree with leaf indices assigned.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyTree {
    root: PolicyNode,
    leaf_count: usize,
}

impl PolicyTree {
    /// Validates gate thresholds and attributes, then (re)assigns leaf indices.
    pub fn new(mut root: PolicyNode) -> Result<Self> {
        let mut next = 0;
        root.validate_and_index(&mut next)?;
        Ok(PolicyTree {
            root,
            leaf_count: next,
        })
    }

    pub fn root(&self) -> &PolicyNode {
        &self.root
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    /// `(leaf_index, attribute)` in index order.
    pub fn leaves(&self) -> Vec<(usize, &str)> {
        fn walk<'a>(node: &'a PolicyNode, out: &mut Vec<(usize, &'a str)>) {
            match node {
                PolicyNode::Leaf { attribute, index } => out.push((*index, attribute)),
                PolicyNode::Gate { children, .. } => children.iter().for_each(|c| walk(c, out)),
            }
        }
        let mut out = Vec::with_capacity(self.leaf_count);
        walk(&self.root, &mut out);
        out
    }

    /// Every distinct attribute mentioned by the tree.
    pub fn attributes(&self) -> AttributeSet {
        AttributeSet(self.leaves().into_iter().map(|(_, a)| a.to_owned()).collect())
    }
}

impl FromStr for PolicyTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_policy(s)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Context {
    Top,
    AndOperand,
    OrOperand,
}

fn write_node(node: &PolicyNode, ctx: Context, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match node {
        PolicyNode::Leaf { attribute, .. } => f.write_str(attribute),
        PolicyNode::Gate {
            threshold,
            children,
        } => {
            let n = children.len();
            let (keyword, operand_ctx, parens) = if n >= 2 && *threshold == n {
                (" and ", Context::AndOperand, ctx == Context::AndOperand)
            } else if n >= 2 && *threshold == 1 {
                (" or ", Context::OrOperand, ctx != Context::Top)
            } else {
                write!(f, "{threshold} of (")?;
                for (i, child) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write_node(child, Context::Top, f)?;
                }
                return f.write_str(")");
            };
            if parens {
                f.write_str("(")?;
            }
            for (i, child) in children.iter().enumerate() {
                if i > 0 {
                    f.write_str(keyword)?;
                }
                write_node(child, operand_ctx, f)?;
            }
            if parens {
                f.write_str(")")?;
            }
            Ok(())
        }
    }
}

/// Canonical printout: lowercase keywords, minimal parentheses.
impl fmt::Display for PolicyTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, Context::Top, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Word(String),
    LParen,
    RParen,
    Comma,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' => {
                chars.next();
                tokens.push((pos, Tok::LParen));
            }
            ')' => {
                chars.next();
                tokens.push((pos, Tok::RParen));
            }
            ',' => {
                chars.next();
                tokens.push((pos, Tok::Comma));
            }
            c if is_attribute_char(c) => {
                let mut end = pos;
                while let Some(&(i, c)) = chars.peek() {
                    if !is_attribute_char(c) {
                        break;
                    }
                    end = i + c.len_utf8();
                    chars.next();
                }
                tokens.push((pos, Tok::Word(text[pos..end].to_owned())));
            }
            other => {
                return Err(Error::PolicySyntax {
                    position: pos,
                    message: format!("unexpected character {other:?}"),
                })
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::PolicySyntax {
            position: self.offset(),
            message: message.into(),
        })
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn chain(&mut self, kw: &str, operand: fn(&mut Self) -> Result<PolicyNode>) -> Result<Vec<PolicyNode>> {
        let mut items = vec![operand(self)?];
        while self.at_keyword(kw) {
            self.pos += 1;
            items.push(operand(self)?);
        }
        Ok(items)
    }

    fn policy(&mut self) -> Result<PolicyNode> {
        let mut items = self.chain("or", Self::and_expr)?;
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            PolicyNode::or(items)
        })
    }

    fn and_expr(&mut self) -> Result<PolicyNode> {
        let mut items = self.chain("and", Self::primary)?;
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            PolicyNode::and(items)
        })
    }

    fn primary(&mut self) -> Result<PolicyNode> {
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.policy()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Some(Tok::Word(w)) => {
                let threshold_form = w.bytes().all(|b| b.is_ascii_digit())
                    && matches!(self.tokens.get(self.pos + 1), Some((_, Tok::Word(k))) if k.eq_ignore_ascii_case("of"));
                if threshold_form {
                    self.threshold_gate(&w)
                } else if is_keyword(&w) {
                    self.error(format!("unexpected keyword {w:?}"))
                } else {
                    self.pos += 1;
                    Ok(PolicyNode::leaf(w))
                }
            }
            Some(Tok::RParen) => self.error("unexpected ')'"),
            Some(Tok::Comma) => self.error("unexpected ','"),
            None => self.error("unexpected end of policy"),
        }
    }

    fn threshold_gate(&mut self, digits: &str) -> Result<PolicyNode> {
        let at = self.offset();
        let threshold: usize = digits.parse().map_err(|_| Error::PolicySyntax {
            position: at,
            message: format!("threshold {digits} is too large"),
        })?;
        self.pos += 2;
        self.expect(Tok::LParen, "'(' after 'of'")?;
        let mut children = vec![self.policy()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            children.push(self.policy()?);
        }
        self.expect(Tok::RParen, "',' or ')'")?;
        if threshold < 1 || threshold > children.len() {
            return Err(Error::ThresholdOutOfRange {
                threshold,
                children: children.len(),
            });
        }
        Ok(PolicyNode::gate(threshold, children))
    }
}

pub fn parse_policy(text: &str) -> Result<PolicyTree> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(Error::PolicySyntax {
            position: 0,
            message: "empty policy".into(),
        });
    }
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: text.len(),
    };
    let root = parser.policy()?;
    if parser.peek().is_some() {
        return parser.error("trailing input after policy");
    }
    PolicyTree::new(root)
}

/// `F(ω)`: whether the attribute set satisfies the tree.
pub fn evaluate(tree: &PolicyTree, attrs: &AttributeSet) -> bool {
    tree.root.evaluate(attrs)
}

/// Secret-sharing of `s` down the tree; `leaf_shares[y]` is the share of leaf index `y`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharePlan {
    pub secret: Scalar,
    pub leaf_shares: Vec<Scalar>,
}

fn eval_poly(coefficients: &[Scalar], x: u64) -> Scalar {
    let x = Scalar::from(x);
    coefficients
        .iter()
        .rev()
        .fold(Scalar::zero(), |acc, c| acc * x + *c)
}

/// Top-down polynomial sharing: a gate of threshold k holding value v draws a random
/// degree-(k-1) polynomial with constant term v and hands child i (1-based) its value at i.
pub fn assign_shares<R: RngCore + CryptoRng + ?Sized>(
    tree: &PolicyTree,
    secret: Scalar,
    rng: &mut R,
) -> SharePlan {
    fn share<R: RngCore + CryptoRng + ?Sized>(
        node: &PolicyNode,
        value: Scalar,
        out: &mut [Scalar],
        rng: &mut R,
    ) {
        match node {
            PolicyNode::Leaf { index, .. } => out[*index] = value,
            PolicyNode::Gate {
                threshold,
                children,
            } => {
                let mut poly = Vec::with_capacity(*threshold);
                poly.push(value);
                poly.extend((1..*threshold).map(|_| Scalar::random(rng)));
                for (i, child) in children.iter().enumerate() {
                    share(child, eval_poly(&poly, i as u64 + 1), out, rng);
                }
            }
        }
    }
    let mut leaf_shares = vec![Scalar::zero(); tree.leaf_count];
    share(&tree.root, secret, &mut leaf_shares, rng);
    SharePlan {
        secret,
        leaf_shares,
    }
}

/// Lagrange basis coefficient at zero: `∏_{j∈S, j≠i} (0−j)/(i−j)`.
pub fn lagrange_coeff(i: u64, set: &[u64]) -> Result<Scalar> {
    if !set.contains(&i) {
        return Err(Error::InvalidInterpolationSet("index is not a member of the set"));
    }
    if set.contains(&0) {
        return Err(Error::InvalidInterpolationSet("zero is reserved for the secret"));
    }
    let distinct: BTreeSet<_> = set.iter().collect();
    if distinct.len() != set.len() {
        return Err(Error::InvalidInterpolationSet("duplicate index"));
    }
    let xi = Scalar::from(i);
    let (num, den) = set
        .iter()
        .filter(|&&j| j != i)
        .fold((Scalar::one(), Scalar::one()), |(num, den), &j| {
            let xj = Scalar::from(j);
            (num * -xj, den * (xi - xj))
        });
    Ok(num * den.inverse().expect("distinct indices give a nonzero denominator"))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PlanNode {
    Leaf {
        index: usize,
        attribute: String,
    },
    Gate {
        /// Exactly `threshold` satisfied children, in positional order.
        selected: Vec<PlanChild>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanChild {
    /// 1-based position of the child under its gate.
    pub position: u64,
    /// `Δ_{position,S}(0)` for the selected position set S.
    pub coefficient: Scalar,
    pub node: PlanNode,
}

/// Which leaves to combine, and with which Lagrange coefficients, to reconstruct the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SatisfyingPlan {
    pub root: PlanNode,
}

impl SatisfyingPlan {
    /// Each selected leaf with the product of coefficients on its path to the root, so that
    /// `Σ coeff · share = secret`.
    pub fn leaf_coefficients(&self) -> Vec<(usize, &str, Scalar)> {
        fn walk<'a>(node: &'a PlanNode, acc: Scalar, out: &mut Vec<(usize, &'a str, Scalar)>) {
            match node {
                PlanNode::Leaf { index, attribute } => out.push((*index, attribute, acc)),
                PlanNode::Gate { selected } => {
                    for child in selected {
                        walk(&child.node, acc * child.coefficient, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, Scalar::one(), &mut out);
        out
    }
}

/// Deterministic smallest-index selection of satisfied children at every gate.
pub fn satisfying_plan(tree: &PolicyTree, attrs: &AttributeSet) -> Result<SatisfyingPlan> {
    fn plan(node: &PolicyNode, attrs: &AttributeSet) -> Option<PlanNode> {
        match node {
            PolicyNode::Leaf { attribute, index } => attrs.contains(attribute).then(|| PlanNode::Leaf {
                index: *index,
                attribute: attribute.clone(),
            }),
            PolicyNode::Gate {
                threshold,
                children,
            } => {
                let chosen: Vec<(u64, PlanNode)> = children
                    .iter()
                    .enumerate()
                    .filter_map(|(i, c)| plan(c, attrs).map(|p| (i as u64 + 1, p)))
                    .take(*threshold)
                    .collect();
                if chosen.len() < *threshold {
                    return None;
                }
                let positions: Vec<u64> = chosen.iter().map(|(p, _)| *p).collect();
                let selected = chosen
                    .into_iter()
                    .map(|(position, node)| PlanChild {
                        position,
                        coefficient: lagrange_coeff(position, &positions)
                            .expect("positions are distinct and nonzero"),
                        node,
                    })
                    .collect();
                Some(PlanNode::Gate { selected })
            }
        }
    }
    plan(&tree.root, attrs)
        .map(|root| SatisfyingPlan { root })
        .ok_or(Error::PolicyNotSatisfied)
}
