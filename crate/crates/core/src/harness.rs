//! Deterministic simulation of a virtual organization driven by a line-oriented script.
//!
//! ```text
//! SCENARIO seed=7
//! SETUP
//! DELEGATE parent=root label=hospA [as=name]
//! RERANDOMIZE da=hospA path=root/hospB as=rogue
//! LOAD_CREDENTIALS text="VO.doctor <- HospA.doctor\nHospA.doctor <- Alice"
//! LOAD_ATTRIBUTE_MAP text="VO.doctor -> doctor @ hospA"
//! KEY_REQUEST da=hospA user=Alice attrs=doctor [expect=ok]
//! ENCRYPT policy="doctor" plaintext="chart" label=record1
//! DECRYPT user=Alice ct=record1 [expect=ok]
//! EPOCH_BUMP exclude=hospB
//! ```
//!
//! Values may be double-quoted with `\"`, `\\` and `\n` escapes. `#` starts a comment.
//! All randomness comes from one ChaCha20 stream seeded by the scenario seed, so a scenario
//! always produces the same [`EventLog`] bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::codec::Codec;
use crate::error::{Error, Result};
use crate::group::GroupContext;
use crate::policy::{parse_policy, AttributeSet};
use crate::scheme::{
    self, Ciphertext, DaKey, DaOrigin, MasterKey, PublicParams, UserKey, ROOT_LABEL,
};
use crate::trust::{authorized_attributes, parse_attribute_map, parse_credentials, AttributeMap, CredentialSet};

/// Hex digits of each object digest shown in log lines.
const DIGEST_CHARS: usize = 16;

/// The scheme operations a scenario run can invoke, as recorded in [`EventLog::operations`].
pub const SCHEME_OPERATIONS: [&str; 9] = [
    "setup",
    "delegate",
    "rerandomize",
    "recover_master_witness",
    "issue_user_key",
    "merge_keys",
    "encrypt",
    "decrypt",
    "epoch_rekey",
];

pub const HEALTHCARE: &str = include_str!("healthcare.scenario");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Ok,
    PolicyDenied,
    AuthFail,
    EpochMismatch,
    TmDenied,
    MergeRefused,
    FormatError,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Ok => "ok",
            Outcome::PolicyDenied => "policy-denied",
            Outcome::AuthFail => "auth-fail",
            Outcome::EpochMismatch => "epoch-mismatch",
            Outcome::TmDenied => "tm-denied",
            Outcome::MergeRefused => "merge-refused",
            Outcome::FormatError => "format-error",
        }
    }

    fn of_error(e: &Error) -> Self {
        match e {
            Error::PolicyNotSatisfied => Outcome::PolicyDenied,
            Error::AuthenticationFailed => Outcome::AuthFail,
            Error::EpochMismatch { .. } => Outcome::EpochMismatch,
            Error::MergeRefused(_) => Outcome::MergeRefused,
            _ => Outcome::FormatError,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            Outcome::Ok,
            Outcome::PolicyDenied,
            Outcome::AuthFail,
            Outcome::EpochMismatch,
            Outcome::TmDenied,
            Outcome::MergeRefused,
            Outcome::FormatError,
        ]
        .into_iter()
        .find(|o| o.as_str() == s)
        .ok_or_else(|| format!("unknown outcome {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Event {
    Setup,
    Delegate {
        parent: String,
        label: String,
        name: Option<String>,
    },
    Rerandomize {
        da: String,
        path: Vec<String>,
        name: String,
    },
    KeyRequest {
        da: String,
        user: String,
        attrs: AttributeSet,
        expect: Outcome,
    },
    Encrypt {
        policy: String,
        plaintext: String,
        label: String,
    },
    Decrypt {
        user: String,
        ct: String,
        expect: Outcome,
    },
    EpochBump {
        exclude: Vec<String>,
    },
    LoadCredentials {
        text: String,
    },
    LoadAttributeMap {
        text: String,
    },
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::Setup => "SETUP",
            Event::Delegate { .. } => "DELEGATE",
            Event::Rerandomize { .. } => "RERANDOMIZE",
            Event::KeyRequest { .. } => "KEY_REQUEST",
            Event::Encrypt { .. } => "ENCRYPT",
            Event::Decrypt { .. } => "DECRYPT",
            Event::EpochBump { .. } => "EPOCH_BUMP",
            Event::LoadCredentials { .. } => "LOAD_CREDENTIALS",
            Event::LoadAttributeMap { .. } => "LOAD_ATTRIBUTE_MAP",
        }
    }
}

fn quote(value: &str) -> String {
    let simple = !value.is_empty()
        && value
            .chars()
            .all(|c| !c.is_whitespace() && c != '"' && c != '\\' && c != '#');
    if simple {
        return value.to_owned();
    }
    let mut out = String::from("\"");
    for c in value.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        match self {
            Event::Setup => Ok(()),
            Event::Delegate { parent, label, name } => {
                write!(f, " parent={} label={}", quote(parent), quote(label))?;
                match name {
                    Some(n) => write!(f, " as={}", quote(n)),
                    None => Ok(()),
                }
            }
            Event::Rerandomize { da, path, name } => {
                write!(f, " da={} path={} as={}", quote(da), quote(&path.join("/")), quote(name))
            }
            Event::KeyRequest { da, user, attrs, expect } => write!(
                f,
                " da={} user={} attrs={} expect={expect}",
                quote(da),
                quote(user),
                quote(&attrs.to_string())
            ),
            Event::Encrypt { policy, plaintext, label } => write!(
                f,
                " policy={} plaintext={} label={}",
                quote(policy),
                quote(plaintext),
                quote(label)
            ),
            Event::Decrypt { user, ct, expect } => {
                write!(f, " user={} ct={} expect={expect}", quote(user), quote(ct))
            }
            Event::EpochBump { exclude } if exclude.is_empty() => Ok(()),
            Event::EpochBump { exclude } => write!(f, " exclude={}", quote(&exclude.join(","))),
            Event::LoadCredentials { text } | Event::LoadAttributeMap { text } => {
                write!(f, " text={}", quote(text))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub seed: u64,
    pub events: Vec<Event>,
    /// Source line of each event, for error messages.
    lines: Vec<usize>,
}

impl Scenario {
    pub fn new(seed: u64, events: Vec<Event>) -> Self {
        let lines = (1..=events.len()).collect();
        Scenario { seed, events, lines }
    }

    pub fn healthcare() -> Self {
        parse_scenario(HEALTHCARE).expect("built-in scenario parses")
    }

    fn line_of(&self, index: usize) -> usize {
        self.lines.get(index).copied().unwrap_or(index + 1)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SCENARIO seed={}", self.seed)?;
        self.events.iter().try_for_each(|e| writeln!(f, "{e}"))
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_scenario(s)
    }
}

fn tokenize(line: &str) -> std::result::Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        while chars.next_if(|c| c.is_whitespace()).is_some() {}
        match chars.peek() {
            None | Some('#') => return Ok(out),
            _ => {}
        }
        let mut key = String::new();
        while let Some(c) = chars.next_if(|c| *c != '=' && !c.is_whitespace()) {
            key.push(c);
        }
        if chars.next() != Some('=') {
            return Err(format!("expected key=value, found {key:?}"));
        }
        let mut value = String::new();
        if chars.next_if_eq(&'"').is_some() {
            loop {
                match chars.next() {
                    None => return Err("unterminated quoted value".into()),
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some('n') => value.push('\n'),
                        Some('"') => value.push('"'),
                        Some('\\') => value.push('\\'),
                        other => return Err(format!("unknown escape \\{}", other.unwrap_or(' '))),
                    },
                    Some(c) => value.push(c),
                }
            }
            if chars.peek().is_some_and(|c| !c.is_whitespace()) {
                return Err("quoted value must be followed by whitespace".into());
            }
        } else {
            while let Some(c) = chars.next_if(|c| !c.is_whitespace()) {
                value.push(c);
            }
        }
        if out.iter().any(|(k, _)| *k == key) {
            return Err(format!("duplicate key {key:?}"));
        }
        out.push((key, value));
    }
}

struct Args {
    pairs: Vec<(String, String)>,
}

impl Args {
    fn opt(&mut self, key: &str) -> Option<String> {
        let i = self.pairs.iter().position(|(k, _)| k == key)?;
        Some(self.pairs.remove(i).1)
    }

    fn req(&mut self, key: &str) -> std::result::Result<String, String> {
        self.opt(key).ok_or_else(|| format!("missing {key}="))
    }

    fn expect(&mut self) -> std::result::Result<Outcome, String> {
        self.opt("expect").map_or(Ok(Outcome::Ok), |v| v.parse())
    }

    fn list(&mut self, key: &str, sep: char) -> Vec<String> {
        self.opt(key)
            .map(|v| v.split(sep).map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
            .unwrap_or_default()
    }

    fn done(self) -> std::result::Result<(), String> {
        match self.pairs.first() {
            None => Ok(()),
            Some((k, _)) => Err(format!("unknown argument {k:?}")),
        }
    }
}

fn parse_event(keyword: &str, rest: &str) -> std::result::Result<Event, String> {
    let mut args = Args { pairs: tokenize(rest)? };
    let event = match keyword {
        "SETUP" => Event::Setup,
        "DELEGATE" => Event::Delegate {
            parent: args.req("parent")?,
            label: args.req("label")?,
            name: args.opt("as"),
        },
        "RERANDOMIZE" => Event::Rerandomize {
            da: args.req("da")?,
            path: args.req("path")?.split('/').map(String::from).collect(),
            name: args.req("as")?,
        },
        "KEY_REQUEST" => Event::KeyRequest {
            da: args.req("da")?,
            user: args.req("user")?,
            attrs: args.req("attrs")?.parse().map_err(|e: Error| e.to_string())?,
            expect: args.expect()?,
        },
        "ENCRYPT" => Event::Encrypt {
            policy: args.req("policy")?,
            plaintext: args.req("plaintext")?,
            label: args.req("label")?,
        },
        "DECRYPT" => Event::Decrypt {
            user: args.req("user")?,
            ct: args.req("ct")?,
            expect: args.expect()?,
        },
        "EPOCH_BUMP" => Event::EpochBump {
            exclude: args.list("exclude", ','),
        },
        "LOAD_CREDENTIALS" => Event::LoadCredentials { text: args.req("text")? },
        "LOAD_ATTRIBUTE_MAP" => Event::LoadAttributeMap { text: args.req("text")? },
        other => return Err(format!("unknown event {other:?}")),
    };
    args.done()?;
    Ok(event)
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut seed = None;
    let mut events = Vec::new();
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| Error::Scenario { line: line_no, message };
        let trimmed = raw.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (keyword, rest) = trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""));
        if seed.is_none() {
            if keyword != "SCENARIO" {
                return Err(err("scenario must start with a SCENARIO seed=N header".into()));
            }
            let mut args = Args { pairs: tokenize(rest).map_err(err)? };
            let value = args.req("seed").map_err(err)?;
            args.done().map_err(err)?;
            seed = Some(value.parse::<u64>().map_err(|_| err(format!("invalid seed {value:?}")))?);
            continue;
        }
        if keyword == "SCENARIO" {
            return Err(err("duplicate SCENARIO header".into()));
        }
        events.push(parse_event(keyword, rest).map_err(err)?);
        lines.push(line_no);
    }
    let seed = seed.ok_or(Error::Scenario {
        line: 1,
        message: "missing SCENARIO seed=N header".into(),
    })?;
    Ok(Scenario { seed, events, lines })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventRecord {
    pub index: usize,
    pub event: &'static str,
    pub outcome: Outcome,
    /// Set for events that carry an `expect`.
    pub expected: Option<Outcome>,
    /// `(name, full hex SHA-256 of canonical bytes)`.
    pub digests: Vec<(String, String)>,
    pub text: String,
}

impl EventRecord {
    pub fn passed(&self) -> bool {
        self.expected.is_none_or(|e| e == self.outcome)
    }
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:03} {} {}", self.index, self.event, self.outcome)?;
        if let Some(expected) = self.expected {
            let mark = if self.passed() { "pass" } else { "FAIL" };
            write!(f, " expect={expected} {mark}")?;
        }
        for (name, digest) in &self.digests {
            write!(f, " {name}={}", &digest[..DIGEST_CHARS])?;
        }
        write!(f, " :: {}", self.text)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
    /// Scheme operations invoked during the run.
    pub operations: BTreeSet<&'static str>,
}

impl EventLog {
    pub fn all_passed(&self) -> bool {
        self.records.iter().all(EventRecord::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &EventRecord> {
        self.records.iter().filter(|r| !r.passed())
    }

    pub fn to_text(&self) -> String {
        self.records.iter().map(|r| format!("{r}\n")).collect()
    }
}

impl fmt::Display for EventLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

struct Authority {
    key: DaKey,
    /// Harness name of the parent, for re-delegation after an epoch bump.
    parent: Option<String>,
    label: String,
}

struct Vo {
    pp: PublicParams,
    mk: MasterKey,
}

struct Runner {
    rng: ChaCha20Rng,
    vo: Option<Vo>,
    /// Creation order matters for re-delegation, so keep a separate order list.
    authorities: BTreeMap<String, Authority>,
    authority_order: Vec<String>,
    creds: CredentialSet,
    amap: AttributeMap,
    wallets: BTreeMap<String, BTreeMap<u64, UserKey>>,
    ciphertexts: BTreeMap<String, (Ciphertext, Vec<u8>)>,
    log: EventLog,
}

struct Step {
    outcome: Outcome,
    expected: Option<Outcome>,
    digests: Vec<(String, String)>,
    text: String,
}

impl Step {
    fn ok(text: String) -> Self {
        Step {
            outcome: Outcome::Ok,
            expected: None,
            digests: Vec::new(),
            text,
        }
    }

    fn digest(mut self, name: &str, obj: &impl Codec) -> Self {
        self.digests.push((name.to_owned(), obj.digest()));
        self
    }
}

impl Runner {
    fn vo(&self) -> std::result::Result<&Vo, String> {
        self.vo.as_ref().ok_or_else(|| "SETUP has not run".to_owned())
    }

    fn authority(&self, name: &str) -> std::result::Result<&Authority, String> {
        self.authorities
            .get(name)
            .ok_or_else(|| format!("undefined authority {name:?}"))
    }

    fn define_authority(&mut self, name: String, authority: Authority) -> std::result::Result<(), String> {
        if self.authorities.contains_key(&name) {
            return Err(format!("authority {name:?} already defined"));
        }
        self.authority_order.push(name.clone());
        self.authorities.insert(name, authority);
        Ok(())
    }

    fn op(&mut self, name: &'static str) {
        self.log.operations.insert(name);
    }

    fn step(&mut self, event: &Event) -> std::result::Result<Step, String> {
        match event {
            Event::Setup => {
                if self.vo.is_some() {
                    return Err("SETUP already ran".into());
                }
                let (pp, mk, root) = scheme::setup(GroupContext::bls12_381(), &mut self.rng);
                self.op("setup");
                let step = Step::ok(format!("VO created at epoch {}", pp.current_epoch))
                    .digest("pp", &pp)
                    .digest("root", &root);
                self.define_authority(
                    ROOT_LABEL.to_owned(),
                    Authority {
                        key: root,
                        parent: None,
                        label: ROOT_LABEL.to_owned(),
                    },
                )?;
                self.vo = Some(Vo { pp, mk });
                Ok(step)
            }
            Event::Delegate { parent, label, name } => {
                let pp = self.vo()?.pp.clone();
                let parent_key = self.authority(parent)?.key.clone();
                let key = scheme::delegate(&pp, &parent_key, label, &mut self.rng).map_err(|e| e.to_string())?;
                self.op("delegate");
                let name = name.clone().unwrap_or_else(|| label.clone());
                let step = Step::ok(format!("{parent} delegated {name} at path {}", key.path.join("/")))
                    .digest("da", &key);
                self.define_authority(
                    name,
                    Authority {
                        key,
                        parent: Some(parent.clone()),
                        label: label.clone(),
                    },
                )?;
                Ok(step)
            }
            Event::Rerandomize { da, path, name } => {
                let pp = self.vo()?.pp.clone();
                let source = self.authority(da)?.key.clone();
                let forged = scheme::rerandomize(&pp, &source, path, &mut self.rng).map_err(|e| e.to_string())?;
                self.op("rerandomize");
                let same = scheme::recover_master_witness(&source, &pp) == scheme::recover_master_witness(&forged, &pp);
                self.op("recover_master_witness");
                let step = Step::ok(format!(
                    "FLAW-DEMO: {da} forged {name} claiming path {}; master witness {}",
                    path.join("/"),
                    if same { "identical" } else { "differs" }
                ))
                .digest("da", &forged);
                self.define_authority(
                    name.clone(),
                    Authority {
                        key: forged,
                        parent: None,
                        label: path.last().cloned().unwrap_or_default(),
                    },
                )?;
                Ok(step)
            }
            Event::KeyRequest { da, user, attrs, expect } => {
                let pp = self.vo()?.pp.clone();
                let key = self.authority(da)?.key.clone();
                let authorized = authorized_attributes(&self.creds, &self.amap, user, &key.path);
                let mut step = if attrs.is_empty() || !attrs.is_subset(&authorized) {
                    Step {
                        outcome: Outcome::TmDenied,
                        expected: None,
                        digests: Vec::new(),
                        text: format!("{da} may issue {user} only {{{authorized}}}, requested {{{attrs}}}"),
                    }
                } else {
                    self.issue(&pp, da, &key, user, attrs)
                };
                step.expected = Some(*expect);
                Ok(step)
            }
            Event::Encrypt { policy, plaintext, label } => {
                let pp = self.vo()?.pp.clone();
                if self.ciphertexts.contains_key(label) {
                    return Err(format!("ciphertext {label:?} already defined"));
                }
                let tree = parse_policy(policy).map_err(|e| e.to_string())?;
                let ct = scheme::encrypt(&pp, &tree, plaintext.as_bytes(), &mut self.rng);
                self.op("encrypt");
                let step = Step::ok(format!("{label} encrypted under \"{tree}\" at epoch {}", ct.epoch))
                    .digest("ct", &ct);
                self.ciphertexts
                    .insert(label.clone(), (ct, plaintext.as_bytes().to_vec()));
                Ok(step)
            }
            Event::Decrypt { user, ct, expect } => {
                let pp = self.vo()?.pp.clone();
                let (ciphertext, plaintext) = self
                    .ciphertexts
                    .get(ct)
                    .ok_or_else(|| format!("undefined ciphertext {ct:?}"))?;
                let wallet = self.wallets.get(user);
                let key = wallet.and_then(|w| w.get(&ciphertext.epoch).or_else(|| w.values().next_back()));
                let (outcome, text) = match key {
                    None => (Outcome::TmDenied, format!("{user} holds no key")),
                    Some(key) => {
                        let result = scheme::decrypt(&pp, key, ciphertext);
                        self.log.operations.insert("decrypt");
                        match result {
                            Ok(m) if m == *plaintext => {
                                (Outcome::Ok, format!("{user} read {ct} with epoch {} key", key.epoch))
                            }
                            Ok(_) => (Outcome::AuthFail, format!("{user} decrypted {ct} to the wrong plaintext")),
                            Err(e) => (Outcome::of_error(&e), format!("{user} on {ct}: {e}")),
                        }
                    }
                };
                Ok(Step {
                    outcome,
                    expected: Some(*expect),
                    digests: Vec::new(),
                    text,
                })
            }
            Event::EpochBump { exclude } => {
                let vo = self.vo.as_mut().ok_or("SETUP has not run")?;
                for name in exclude {
                    if !self.authorities.contains_key(name) {
                        return Err(format!("undefined authority {name:?}"));
                    }
                }
                let (pp, root) = scheme::epoch_rekey(&mut vo.mk, &vo.pp, &mut self.rng);
                vo.pp = pp.clone();
                self.log.operations.insert("epoch_rekey");
                let mut renewed: BTreeMap<String, DaKey> = BTreeMap::from([(ROOT_LABEL.to_owned(), root)]);
                for name in &self.authority_order {
                    let authority = &self.authorities[name];
                    let Some(parent) = &authority.parent else { continue };
                    if exclude.contains(name) || authority.key.origin == DaOrigin::Rerandomized {
                        continue;
                    }
                    let Some(parent_key) = renewed.get(parent) else { continue };
                    let key = scheme::delegate(&pp, parent_key, &authority.label, &mut self.rng)
                        .expect("label was validated at first delegation");
                    self.log.operations.insert("delegate");
                    renewed.insert(name.clone(), key);
                }
                let mut step = Step::ok(String::new()).digest("pp", &pp);
                let mut kept = Vec::new();
                for name in &self.authority_order {
                    match renewed.remove(name) {
                        Some(key) => {
                            step = step.digest(name, &key);
                            self.authorities.get_mut(name).unwrap().key = key;
                        }
                        None => kept.push(name.as_str()),
                    }
                }
                step.text = format!(
                    "epoch {} begins; stale authorities: {}",
                    pp.current_epoch,
                    if kept.is_empty() { "none".to_owned() } else { kept.join(", ") }
                );
                Ok(step)
            }
            Event::LoadCredentials { text } => {
                let creds = parse_credentials(text).map_err(|e| e.to_string())?;
                self.creds.extend(&creds);
                Ok(Step::ok(format!("{} credentials loaded, {} total", creds.len(), self.creds.len()))
                    .digest("creds", &self.creds))
            }
            Event::LoadAttributeMap { text } => {
                let amap = parse_attribute_map(text).map_err(|e| e.to_string())?;
                self.amap.extend(&amap);
                Ok(Step::ok(format!(
                    "{} attribute map entries loaded, {} total",
                    amap.entries.len(),
                    self.amap.entries.len()
                ))
                .digest("amap", &self.amap))
            }
        }
    }

    fn issue(&mut self, pp: &PublicParams, da: &str, key: &DaKey, user: &str, attrs: &AttributeSet) -> Step {
        let shard = match scheme::issue_user_key(pp, key, user, attrs) {
            Ok(shard) => shard,
            Err(e) => {
                self.op("issue_user_key");
                return Step {
                    outcome: Outcome::of_error(&e),
                    expected: None,
                    digests: Vec::new(),
                    text: format!("{da} could not issue {user}: {e}"),
                };
            }
        };
        self.op("issue_user_key");
        let shard = UserKey::from(shard);
        let shard_digest = shard.digest();
        let epoch = shard.epoch;
        let wallet = self.wallets.entry(user.to_owned()).or_default();
        let merged = match wallet.get(&epoch) {
            None => Ok(shard),
            Some(existing) => {
                self.log.operations.insert("merge_keys");
                scheme::merge_keys(&[existing.clone(), shard])
            }
        };
        match merged {
            Ok(merged) => {
                let text = format!(
                    "{da} issued {user} {{{attrs}}} at epoch {epoch}; wallet holds {{{}}}",
                    merged.attributes()
                );
                wallet.insert(epoch, merged);
                Step {
                    outcome: Outcome::Ok,
                    expected: None,
                    digests: vec![("key".to_owned(), shard_digest)],
                    text,
                }
            }
            Err(e) => Step {
                outcome: Outcome::of_error(&e),
                expected: None,
                digests: vec![("key".to_owned(), shard_digest)],
                text: format!("{user} could not merge the shard from {da}: {e}"),
            },
        }
    }
}

/// Executes the scenario. Expected cryptographic failures are logged, never raised; only
/// structural problems such as references to undefined labels abort the run.
pub fn run_scenario(scenario: &Scenario) -> Result<EventLog> {
    let mut runner = Runner {
        rng: ChaCha20Rng::seed_from_u64(scenario.seed),
        vo: None,
        authorities: BTreeMap::new(),
        authority_order: Vec::new(),
        creds: CredentialSet::default(),
        amap: AttributeMap::default(),
        wallets: BTreeMap::new(),
        ciphertexts: BTreeMap::new(),
        log: EventLog::default(),
    };
    for (i, event) in scenario.events.iter().enumerate() {
        let step = runner.step(event).map_err(|message| Error::Scenario {
            line: scenario.line_of(i),
            message,
        })?;
        runner.log.records.push(EventRecord {
            index: i + 1,
            event: event.name(),
            outcome: step.outcome,
            expected: step.expected,
            digests: step.digests,
            text: step.text,
        });
    }
    Ok(runner.log)
}
