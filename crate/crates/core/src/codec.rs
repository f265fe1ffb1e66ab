//! Canonical binary serialization of every persistent object.
//!
//! ```text
//! "DHV1" | object tag (1) | curve id (1) | field count (u16 BE) | fields...
//! field := tag (1) | length (u32 BE) | payload
//! ```
//!
//! Fields appear in ascending tag order; repeated fields (lists and maps) appear consecutively,
//! maps in ascending key order. Decoding accepts exactly the bytes encoding would produce, so
//! equal objects always have equal bytes and digests.
//!
//! The armored form wraps the bytes in base64 between `-----BEGIN DHABE <TYPE>-----` and
//! `-----END DHABE <TYPE>-----` lines.

use std::collections::BTreeMap;

use base64::Engine;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::group::{GroupContext, GroupElement, Gt, Scalar, G1, G2};
use crate::kem::{DemPayload, NONCE_LEN};
use crate::policy::{parse_policy, validate_attribute};
use crate::scheme::{
    validate_label, Ciphertext, DaKey, DaOrigin, LeafComponents, MasterKey, PublicParams, Seed,
    UserKey,
};
use crate::trust::{AttributeMap, AttributeMapEntry, Credential, CredentialSet};

pub const MAGIC: [u8; 4] = *b"DHV1";
const HEADER_LEN: usize = 4 + 1 + 1 + 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ObjectTag {
    PublicParams = 0x01,
    MasterKey = 0x02,
    DaKey = 0x03,
    UserKey = 0x04,
    Ciphertext = 0x05,
    CredentialSet = 0x06,
    AttributeMap = 0x07,
}

impl ObjectTag {
    pub const ALL: [ObjectTag; 7] = [
        ObjectTag::PublicParams,
        ObjectTag::MasterKey,
        ObjectTag::DaKey,
        ObjectTag::UserKey,
        ObjectTag::Ciphertext,
        ObjectTag::CredentialSet,
        ObjectTag::AttributeMap,
    ];

    pub fn from_byte(b: u8) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| *t as u8 == b)
            .ok_or_else(|| Error::format(format!("unknown object tag {b:#04x}")))
    }

    pub fn armor_label(self) -> &'static str {
        match self {
            ObjectTag::PublicParams => "PUBLIC PARAMS",
            ObjectTag::MasterKey => "MASTER KEY",
            ObjectTag::DaKey => "DA KEY",
            ObjectTag::UserKey => "USER KEY",
            ObjectTag::Ciphertext => "CIPHERTEXT",
            ObjectTag::CredentialSet => "CREDENTIALS",
            ObjectTag::AttributeMap => "ATTRIBUTE MAP",
        }
    }
}

#[derive(Default)]
pub struct FieldWriter {
    fields: Vec<(u8, Vec<u8>)>,
}

impl FieldWriter {
    pub fn put(&mut self, tag: u8, payload: impl Into<Vec<u8>>) {
        self.fields.push((tag, payload.into()));
    }

    pub fn put_u64(&mut self, tag: u8, v: u64) {
        self.put(tag, v.to_be_bytes());
    }

    pub fn put_str(&mut self, tag: u8, s: &str) {
        self.put(tag, s.as_bytes());
    }

    pub fn put_elem<E: GroupElement>(&mut self, tag: u8, e: &E) {
        self.put(tag, e.encode());
    }
}

pub struct FieldReader<'a> {
    fields: Vec<(u8, &'a [u8])>,
    pos: usize,
}

impl<'a> FieldReader<'a> {
    fn parse(mut body: &'a [u8], count: usize) -> Result<Self> {
        let mut fields = Vec::with_capacity(count);
        for _ in 0..count {
            if body.len() < 5 {
                return Err(Error::format("truncated field header"));
            }
            let tag = body[0];
            let len = u32::from_be_bytes(body[1..5].try_into().unwrap()) as usize;
            body = &body[5..];
            if body.len() < len {
                return Err(Error::format("truncated field payload"));
            }
            fields.push((tag, &body[..len]));
            body = &body[len..];
        }
        if !body.is_empty() {
            return Err(Error::format("trailing bytes after last field"));
        }
        Ok(FieldReader { fields, pos: 0 })
    }

    pub fn take(&mut self, tag: u8) -> Result<&'a [u8]> {
        match self.fields.get(self.pos) {
            Some((t, payload)) if *t == tag => {
                self.pos += 1;
                Ok(payload)
            }
            Some((t, _)) => Err(Error::format(format!("expected field {tag}, found field {t}"))),
            None => Err(Error::format(format!("missing field {tag}"))),
        }
    }

    /// All consecutive fields with this tag, possibly none.
    pub fn take_repeated(&mut self, tag: u8) -> Vec<&'a [u8]> {
        let mut out = Vec::new();
        while let Some((t, payload)) = self.fields.get(self.pos) {
            if *t != tag {
                break;
            }
            out.push(*payload);
            self.pos += 1;
        }
        out
    }

    pub fn take_fixed<const N: usize>(&mut self, tag: u8) -> Result<[u8; N]> {
        let payload = self.take(tag)?;
        payload
            .try_into()
            .map_err(|_| Error::format(format!("field {tag} must be {N} bytes")))
    }

    pub fn take_u64(&mut self, tag: u8) -> Result<u64> {
        self.take_fixed::<8>(tag).map(u64::from_be_bytes)
    }

    pub fn take_str(&mut self, tag: u8) -> Result<String> {
        utf8(self.take(tag)?)
    }

    pub fn take_elem<E: GroupElement>(&mut self, tag: u8) -> Result<E> {
        E::decode(self.take(tag)?)
    }

    pub fn take_scalar(&mut self, tag: u8) -> Result<Scalar> {
        Scalar::from_bytes(self.take(tag)?)
    }

    pub fn finish(self) -> Result<()> {
        match self.fields.get(self.pos) {
            None => Ok(()),
            Some((t, _)) => Err(Error::format(format!("unexpected field {t}"))),
        }
    }
}

fn utf8(bytes: &[u8]) -> Result<String> {
    String::from_utf8(bytes.to_vec()).map_err(|_| Error::format("invalid UTF-8"))
}

/// Sequential reader over a field payload with inner structure.
struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(Error::format("truncated field payload"));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    fn short_str(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        utf8(self.bytes(n)?)
    }

    fn end(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::format("trailing bytes inside field"))
        }
    }
}

fn put_short_str(out: &mut Vec<u8>, s: &str) {
    let len = u16::try_from(s.len()).expect("labels and attributes are shorter than 64 KiB");
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn require_sorted<K: Ord>(keys: &[K], what: &str) -> Result<()> {
    if keys.windows(2).all(|w| w[0] < w[1]) {
        Ok(())
    } else {
        Err(Error::format(format!("{what} not in canonical order")))
    }
}

pub trait Codec: Sized {
    const TAG: ObjectTag;

    fn write_fields(&self, w: &mut FieldWriter);

    fn read_fields(r: &mut FieldReader<'_>, ctx: GroupContext) -> Result<Self>;

    fn curve_id(&self) -> u8 {
        GroupContext::BLS12_381
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut w = FieldWriter::default();
        self.write_fields(&mut w);
        let count = u16::try_from(w.fields.len()).expect("object has fewer than 65536 fields");
        let mut out = Vec::with_capacity(HEADER_LEN + w.fields.iter().map(|(_, p)| 5 + p.len()).sum::<usize>());
        out.extend_from_slice(&MAGIC);
        out.push(Self::TAG as u8);
        out.push(self.curve_id());
        out.extend_from_slice(&count.to_be_bytes());
        for (tag, payload) in &w.fields {
            out.push(*tag);
            out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
            out.extend_from_slice(payload);
        }
        out
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let tag = peek_tag(bytes)?;
        if tag != Self::TAG {
            return Err(Error::format(format!(
                "expected a {} object, found a {}",
                Self::TAG.armor_label(),
                tag.armor_label()
            )));
        }
        let ctx = GroupContext::from_curve_id(bytes[5])?;
        let count = u16::from_be_bytes([bytes[6], bytes[7]]) as usize;
        let mut reader = FieldReader::parse(&bytes[HEADER_LEN..], count)?;
        let value = Self::read_fields(&mut reader, ctx)?;
        reader.finish()?;
        Ok(value)
    }

    fn to_armored(&self) -> String {
        armor(Self::TAG, &self.to_bytes())
    }

    fn from_armored(text: &str) -> Result<Self> {
        let (tag, bytes) = dearmor(text)?;
        if tag != Self::TAG {
            return Err(Error::format(format!(
                "armor label {} does not match expected {}",
                tag.armor_label(),
                Self::TAG.armor_label()
            )));
        }
        Self::from_bytes(&bytes)
    }

    /// Accepts either the binary or the armored form.
    fn decode_any(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(&MAGIC) {
            Self::from_bytes(bytes)
        } else {
            let text = std::str::from_utf8(bytes).map_err(|_| Error::format("not a DHV1 object"))?;
            Self::from_armored(text)
        }
    }

    /// Hex SHA-256 of the canonical bytes.
    fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

/// Reads the object tag from a binary header, validating magic and length.
pub fn peek_tag(bytes: &[u8]) -> Result<ObjectTag> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format("object shorter than its header"));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::format("bad magic, not a DHV1 object"));
    }
    ObjectTag::from_byte(bytes[4])
}

pub fn armor(tag: ObjectTag, bytes: &[u8]) -> String {
    let label = tag.armor_label();
    let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
    let mut out = format!("-----BEGIN DHABE {label}-----\n");
    for chunk in encoded.as_bytes().chunks(64) {
        out.push_str(std::str::from_utf8(chunk).unwrap());
        out.push('\n');
    }
    out.push_str(&format!("-----END DHABE {label}-----\n"));
    out
}

pub fn dearmor(text: &str) -> Result<(ObjectTag, Vec<u8>)> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let begin = lines.next().ok_or_else(|| Error::format("empty armor"))?;
    let label = begin
        .strip_prefix("-----BEGIN DHABE ")
        .and_then(|l| l.strip_suffix("-----"))
        .ok_or_else(|| Error::format("missing armor BEGIN line"))?;
    let tag = ObjectTag::ALL
        .into_iter()
        .find(|t| t.armor_label() == label)
        .ok_or_else(|| Error::format(format!("unknown armor label {label:?}")))?;
    let end = format!("-----END DHABE {label}-----");
    let mut body = String::new();
    let mut closed = false;
    for line in lines.by_ref() {
        if line == end {
            closed = true;
            break;
        }
        body.push_str(line);
    }
    if !closed {
        return Err(Error::format("missing armor END line"));
    }
    if lines.next().is_some() {
        return Err(Error::format("trailing text after armor"));
    }
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(body)
        .map_err(|e| Error::format(format!("invalid base64 in armor: {e}")))?;
    if peek_tag(&bytes)? != tag {
        return Err(Error::format("armor label does not match the object tag"));
    }
    Ok((tag, bytes))
}

impl Codec for PublicParams {
    const TAG: ObjectTag = ObjectTag::PublicParams;

    fn curve_id(&self) -> u8 {
        self.ctx.curve_id()
    }

    fn write_fields(&self, w: &mut FieldWriter) {
        w.put_elem(1, &self.a1);
        w.put_elem(2, &self.a2);
        w.put_elem(3, &self.y);
        w.put_u64(4, self.current_epoch);
    }

    fn read_fields(r: &mut FieldReader<'_>, ctx: GroupContext) -> Result<Self> {
        Ok(PublicParams {
            ctx,
            a1: r.take_elem::<G1>(1)?,
            a2: r.take_elem::<G2>(2)?,
            y: r.take_elem::<Gt>(3)?,
            current_epoch: r.take_u64(4)?,
        })
    }
}

impl Codec for MasterKey {
    const TAG: ObjectTag = ObjectTag::MasterKey;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.put(1, self.alpha.to_bytes());
        w.put(2, self.root_seed);
        for (epoch, seed) in &self.epoch_seeds {
            let mut entry = epoch.to_be_bytes().to_vec();
            entry.extend_from_slice(seed);
            w.put(3, entry);
        }
    }

    fn read_fields(r: &mut FieldReader<'_>, _ctx: GroupContext) -> Result<Self> {
        let alpha = r.take_scalar(1)?;
        let root_seed: Seed = r.take_fixed(2)?;
        let mut entries = Vec::new();
        for payload in r.take_repeated(3) {
            if payload.len() != 40 {
                return Err(Error::format("epoch seed entry must be 40 bytes"));
            }
            let epoch = u64::from_be_bytes(payload[..8].try_into().unwrap());
            let seed: Seed = payload[8..].try_into().unwrap();
            entries.push((epoch, seed));
        }
        let epochs: Vec<u64> = entries.iter().map(|(e, _)| *e).collect();
        require_sorted(&epochs, "epoch seeds")?;
        Ok(MasterKey {
            alpha,
            root_seed,
            epoch_seeds: entries.into_iter().collect(),
        })
    }
}

impl Codec for DaKey {
    const TAG: ObjectTag = ObjectTag::DaKey;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.put_elem(1, &self.z);
        w.put(2, self.tau.to_bytes());
        w.put(3, self.seed);
        w.put_u64(4, self.epoch);
        for label in &self.path {
            w.put_str(5, label);
        }
        let origin = match self.origin {
            DaOrigin::Delegated => 0u8,
            DaOrigin::Rerandomized => 1,
        };
        w.put(6, [origin]);
    }

    fn read_fields(r: &mut FieldReader<'_>, _ctx: GroupContext) -> Result<Self> {
        let z = r.take_elem::<G2>(1)?;
        let tau = r.take_scalar(2)?;
        let seed: Seed = r.take_fixed(3)?;
        let epoch = r.take_u64(4)?;
        let path = r
            .take_repeated(5)
            .into_iter()
            .map(|p| {
                let label = utf8(p)?;
                validate_label(&label).map_err(|e| Error::format(e.to_string()))?;
                Ok(label)
            })
            .collect::<Result<Vec<_>>>()?;
        if path.is_empty() {
            return Err(Error::format("DA key has an empty path"));
        }
        let origin = match r.take_fixed::<1>(6)? {
            [0] => DaOrigin::Delegated,
            [1] => DaOrigin::Rerandomized,
            [other] => return Err(Error::format(format!("unknown DA origin {other}"))),
        };
        Ok(DaKey {
            z,
            tau,
            seed,
            path,
            epoch,
            origin,
        })
    }
}

impl Codec for UserKey {
    const TAG: ObjectTag = ObjectTag::UserKey;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.put_str(1, &self.user_id);
        w.put_u64(2, self.epoch);
        w.put_elem(3, &self.k);
        w.put_elem(4, &self.l);
        for (attr, component) in &self.attr_components {
            let mut entry = Vec::with_capacity(2 + attr.len() + G1::ENCODED_LEN);
            put_short_str(&mut entry, attr);
            entry.extend_from_slice(&component.encode());
            w.put(5, entry);
        }
        for path in &self.issuer_paths {
            let mut entry = (path.len() as u16).to_be_bytes().to_vec();
            path.iter().for_each(|l| put_short_str(&mut entry, l));
            w.put(6, entry);
        }
    }

    fn read_fields(r: &mut FieldReader<'_>, _ctx: GroupContext) -> Result<Self> {
        let user_id = r.take_str(1)?;
        let epoch = r.take_u64(2)?;
        let k = r.take_elem::<G2>(3)?;
        let l = r.take_elem::<G2>(4)?;
        let mut components = Vec::new();
        for payload in r.take_repeated(5) {
            let mut c = Cursor(payload);
            let attr = c.short_str()?;
            validate_attribute(&attr).map_err(|e| Error::format(e.to_string()))?;
            let point = G1::decode(c.bytes(G1::ENCODED_LEN)?)?;
            c.end()?;
            components.push((attr, point));
        }
        let keys: Vec<&String> = components.iter().map(|(a, _)| a).collect();
        require_sorted(&keys, "attribute components")?;
        let mut issuer_paths = Vec::new();
        for payload in r.take_repeated(6) {
            let mut c = Cursor(payload);
            let n = c.u16()?;
            let path = (0..n).map(|_| c.short_str()).collect::<Result<Vec<_>>>()?;
            c.end()?;
            issuer_paths.push(path);
        }
        Ok(UserKey {
            user_id,
            epoch,
            k,
            l,
            attr_components: components.into_iter().collect::<BTreeMap<_, _>>(),
            issuer_paths,
        })
    }
}

impl Codec for Ciphertext {
    const TAG: ObjectTag = ObjectTag::Ciphertext;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.put_str(1, &self.tree.to_string());
        w.put_u64(2, self.epoch);
        w.put_elem(3, &self.c0);
        for leaf in &self.leaves {
            let mut entry = leaf.c.encode();
            entry.extend_from_slice(&leaf.d.encode());
            w.put(4, entry);
        }
        w.put(5, [self.dem.alg_id]);
        w.put(6, self.dem.nonce);
        w.put(7, self.dem.body.clone());
    }

    fn read_fields(r: &mut FieldReader<'_>, _ctx: GroupContext) -> Result<Self> {
        let policy = r.take_str(1)?;
        let tree = parse_policy(&policy).map_err(|e| Error::format(format!("embedded policy: {e}")))?;
        if tree.to_string() != policy {
            return Err(Error::format("embedded policy is not in canonical form"));
        }
        let epoch = r.take_u64(2)?;
        let c0 = r.take_elem::<G1>(3)?;
        let leaves = r
            .take_repeated(4)
            .into_iter()
            .map(|payload| {
                let mut c = Cursor(payload);
                let leaf = LeafComponents {
                    c: G1::decode(c.bytes(G1::ENCODED_LEN)?)?,
                    d: G2::decode(c.bytes(G2::ENCODED_LEN)?)?,
                };
                c.end()?;
                Ok(leaf)
            })
            .collect::<Result<Vec<_>>>()?;
        if leaves.len() != tree.leaf_count() {
            return Err(Error::format("leaf component count does not match the policy"));
        }
        let [alg_id] = r.take_fixed::<1>(5)?;
        let nonce: [u8; NONCE_LEN] = r.take_fixed(6)?;
        let body = r.take(7)?.to_vec();
        Ok(Ciphertext {
            tree,
            epoch,
            c0,
            leaves,
            dem: DemPayload { alg_id, nonce, body },
        })
    }
}

impl Codec for CredentialSet {
    const TAG: ObjectTag = ObjectTag::CredentialSet;

    fn write_fields(&self, w: &mut FieldWriter) {
        for c in &self.credentials {
            w.put_str(1, &c.to_string());
        }
    }

    fn read_fields(r: &mut FieldReader<'_>, _ctx: GroupContext) -> Result<Self> {
        let credentials = r
            .take_repeated(1)
            .into_iter()
            .map(|p| {
                let line = utf8(p)?;
                let c: Credential = line.parse().map_err(Error::Format)?;
                if c.to_string() != line {
                    return Err(Error::format("credential is not in canonical form"));
                }
                Ok(c)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CredentialSet { credentials })
    }
}

impl Codec for AttributeMap {
    const TAG: ObjectTag = ObjectTag::AttributeMap;

    fn write_fields(&self, w: &mut FieldWriter) {
        for e in &self.entries {
            w.put_str(1, &e.to_string());
        }
    }

    fn read_fields(r: &mut FieldReader<'_>, _ctx: GroupContext) -> Result<Self> {
        let entries = r
            .take_repeated(1)
            .into_iter()
            .map(|p| {
                let line = utf8(p)?;
                let e: AttributeMapEntry = line.parse().map_err(Error::Format)?;
                if e.to_string() != line {
                    return Err(Error::format("attribute map entry is not in canonical form"));
                }
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AttributeMap { entries })
    }
}
