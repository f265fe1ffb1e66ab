//! Role-based trust management (RT0) deciding which attributes a DA may issue to whom.
//!
//! Credentials, one per line:
//!
//! ```text
//! Hosp.doctor <- Alice              # membership
//! VO.doctor   <- Hosp.doctor        # role inclusion
//! VO.team     <- VO.partner.doctor  # linked role
//! VO.ward     <- Hosp.staff & VO.doctor
//! ```
//!
//! Attribute map, one entry per line: `VO.doctor -> doctor, staff @ hospA` lets members of
//! `VO.doctor` receive `doctor` and `staff` from any DA whose path contains the label `hospA`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::policy::{validate_attribute, AttributeSet};
use crate::scheme::validate_label;

fn is_principal(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn is_role_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-')
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Role {
    pub principal: String,
    pub name: String,
}

impl Role {
    pub fn new(principal: impl Into<String>, name: impl Into<String>) -> Self {
        Role {
            principal: principal.into(),
            name: name.into(),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.principal, self.name)
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split('.').map(str::trim).collect();
        match parts[..] {
            [p, r] if is_principal(p) && is_role_name(r) => Ok(Role::new(p, r)),
            _ => Err(format!("expected a role `Principal.role`, got {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum CredentialBody {
    Member(String),
    RoleRef(Role),
    /// `A.r1.r2`: members of `B.r2` for every `B` in `A.r1`.
    LinkedRole(Role, String),
    Intersection(Vec<CredentialBody>),
}

impl fmt::Display for CredentialBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CredentialBody::Member(p) => f.write_str(p),
            CredentialBody::RoleRef(r) => write!(f, "{r}"),
            CredentialBody::LinkedRole(r, n) => write!(f, "{r}.{n}"),
            CredentialBody::Intersection(parts) => {
                for (i, part) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" & ")?;
                    }
                    write!(f, "{part}")?;
                }
                Ok(())
            }
        }
    }
}

fn parse_simple_body(s: &str) -> std::result::Result<CredentialBody, String> {
    let parts: Vec<&str> = s.split('.').map(str::trim).collect();
    match parts[..] {
        [p] if is_principal(p) => Ok(CredentialBody::Member(p.to_owned())),
        [p, r] if is_principal(p) && is_role_name(r) => Ok(CredentialBody::RoleRef(Role::new(p, r))),
        [p, r, t] if is_principal(p) && is_role_name(r) && is_role_name(t) => {
            Ok(CredentialBody::LinkedRole(Role::new(p, r), t.to_owned()))
        }
        _ => Err(format!("malformed credential body {s:?}")),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Credential {
    pub head: Role,
    pub body: CredentialBody,
}

impl fmt::Display for Credential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <- {}", self.head, self.body)
    }
}

impl FromStr for Credential {
    type Err = String;

    fn from_str(line: &str) -> std::result::Result<Self, String> {
        let (head, body) = line
            .split_once("<-")
            .ok_or_else(|| "missing `<-`".to_owned())?;
        let head: Role = head.trim().parse()?;
        let parts = body
            .split('&')
            .map(|p| parse_simple_body(p.trim()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let body = match <[CredentialBody; 1]>::try_from(parts) {
            Ok([single]) => single,
            Err(parts) => CredentialBody::Intersection(parts),
        };
        Ok(Credential { head, body })
    }
}

fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(before, _)| before).trim()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CredentialSet {
    pub credentials: Vec<Credential>,
}

impl CredentialSet {
    pub fn new(credentials: Vec<Credential>) -> Self {
        CredentialSet { credentials }
    }

    pub fn push(&mut self, credential: Credential) {
        self.credentials.push(credential);
    }

    pub fn extend(&mut self, other: &CredentialSet) {
        self.credentials.extend(other.credentials.iter().cloned());
    }

    pub fn len(&self) -> usize {
        self.credentials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.credentials.is_empty()
    }

    /// Every principal named anywhere in the set.
    pub fn principals(&self) -> BTreeSet<String> {
        fn visit(body: &CredentialBody, out: &mut BTreeSet<String>) {
            match body {
                CredentialBody::Member(p) => {
                    out.insert(p.clone());
                }
                CredentialBody::RoleRef(r) | CredentialBody::LinkedRole(r, _) => {
                    out.insert(r.principal.clone());
                }
                CredentialBody::Intersection(parts) => parts.iter().for_each(|p| visit(p, out)),
            }
        }
        let mut out = BTreeSet::new();
        for c in &self.credentials {
            out.insert(c.head.principal.clone());
            visit(&c.body, &mut out);
        }
        out
    }

    /// Distinct credential heads.
    pub fn defined_roles(&self) -> BTreeSet<Role> {
        self.credentials.iter().map(|c| c.head.clone()).collect()
    }
}

impl fmt::Display for CredentialSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.credentials.iter().try_for_each(|c| writeln!(f, "{c}"))
    }
}

pub fn parse_credentials(text: &str) -> Result<CredentialSet> {
    let mut set = CredentialSet::default();
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let credential = line.parse().map_err(|message| Error::CredentialSyntax {
            line: i + 1,
            message,
        })?;
        set.push(credential);
    }
    Ok(set)
}

impl FromStr for CredentialSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_credentials(s)
    }
}

/// The least fixpoint of a credential set: members of every defined role.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Membership {
    members: BTreeMap<Role, BTreeSet<String>>,
    rounds: usize,
}

impl Membership {
    pub fn members(&self, role: &Role) -> BTreeSet<String> {
        self.members.get(role).cloned().unwrap_or_default()
    }

    pub fn contains(&self, role: &Role, principal: &str) -> bool {
        self.members.get(role).is_some_and(|m| m.contains(principal))
    }

    /// Number of passes over the credentials that added at least one membership.
    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Role, &BTreeSet<String>)> {
        self.members.iter()
    }

    fn body_members(&self, body: &CredentialBody) -> BTreeSet<String> {
        match body {
            CredentialBody::Member(p) => BTreeSet::from([p.clone()]),
            CredentialBody::RoleRef(role) => self.members(role),
            CredentialBody::LinkedRole(role, linked) => self
                .members(role)
                .into_iter()
                .flat_map(|b| self.members(&Role::new(b, linked.clone())))
                .collect(),
            CredentialBody::Intersection(parts) => {
                let mut sets = parts.iter().map(|p| self.body_members(p));
                let first = sets.next().unwrap_or_default();
                sets.fold(first, |acc, s| acc.intersection(&s).cloned().collect())
            }
        }
    }
}

/// Computes every role's membership by iterating the credentials until nothing grows.
pub fn solve(creds: &CredentialSet) -> Membership {
    let mut state = Membership::default();
    loop {
        let mut grew = false;
        for credential in &creds.credentials {
            let found = state.body_members(&credential.body);
            let entry = state.members.entry(credential.head.clone()).or_default();
            let before = entry.len();
            entry.extend(found);
            grew |= entry.len() > before;
        }
        if !grew {
            return state;
        }
        state.rounds += 1;
    }
}

pub fn role_members(creds: &CredentialSet, role: &Role) -> BTreeSet<String> {
    solve(creds).members(role)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttributeMapEntry {
    pub role: Role,
    pub attributes: Vec<String>,
    pub issuer_scope: String,
}

impl fmt::Display for AttributeMapEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {} @ {}", self.role, self.attributes.join(", "), self.issuer_scope)
    }
}

impl FromStr for AttributeMapEntry {
    type Err = String;

    fn from_str(line: &str) -> std::result::Result<Self, String> {
        let (role, rest) = line
            .split_once("->")
            .ok_or_else(|| "missing `->`".to_owned())?;
        let (attrs, scope) = rest
            .rsplit_once('@')
            .ok_or_else(|| "missing `@ scope`".to_owned())?;
        let role: Role = role.trim().parse()?;
        let issuer_scope = scope.trim().to_owned();
        validate_label(&issuer_scope).map_err(|e| e.to_string())?;
        let attributes: Vec<String> = attrs.split(',').map(|a| a.trim().to_owned()).collect();
        for a in &attributes {
            validate_attribute(a).map_err(|e| e.to_string())?;
        }
        Ok(AttributeMapEntry {
            role,
            attributes,
            issuer_scope,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AttributeMap {
    pub entries: Vec<AttributeMapEntry>,
}

impl AttributeMap {
    pub fn extend(&mut self, other: &AttributeMap) {
        self.entries.extend(other.entries.iter().cloned());
    }
}

impl fmt::Display for AttributeMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.entries.iter().try_for_each(|e| writeln!(f, "{e}"))
    }
}

pub fn parse_attribute_map(text: &str) -> Result<AttributeMap> {
    let mut map = AttributeMap::default();
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let entry = line.parse().map_err(|message| Error::AttributeMapSyntax {
            line: i + 1,
            message,
        })?;
        map.entries.push(entry);
    }
    Ok(map)
}

impl FromStr for AttributeMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_attribute_map(s)
    }
}

/// Attributes a DA at `issuer_path` may issue to `principal`.
pub fn authorized_attributes(
    creds: &CredentialSet,
    amap: &AttributeMap,
    principal: &str,
    issuer_path: &[String],
) -> AttributeSet {
    let membership = solve(creds);
    let mut out = AttributeSet::new();
    for entry in &amap.entries {
        if membership.contains(&entry.role, principal)
            && issuer_path.contains(&entry.issuer_scope)
        {
            for a in &entry.attributes {
                out.insert(a.as_str()).expect("map attributes are validated");
            }
        }
    }
    out
}
