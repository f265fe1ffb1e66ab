//! Pairing-group backend.
//!
//! Everything above this module works with the opaque [`Scalar`], [`G1`], [`G2`] and [`Gt`]
//! types. The only curve currently wired in is BLS12-381 (a type-3 pairing), identified on the
//! wire by [`GroupContext::BLS12_381`].
//!
//! All groups are written additively, including the target group: `gt * s` is exponentiation
//! and `gt_a + gt_b` is the group operation.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::OnceLock;

use ark_bls12_381::{g1, Bls12_381, Fr, G1Affine, G1Projective, G2Affine, G2Projective};
use ark_ec::hashing::curve_maps::wb::WBMap;
use ark_ec::hashing::map_to_curve_hasher::MapToCurveBasedHasher;
use ark_ec::hashing::HashToCurve;
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::{CurveGroup, PrimeGroup};
use ark_ff::field_hashers::DefaultFieldHasher;
use ark_ff::{BigInteger, Field, PrimeField, Zero};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use ark_std::UniformRand;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256, Sha512};

use crate::error::{Error, Result};

/// Width of an encoded scalar: ⌈log2 q / 8⌉ bytes for the BLS12-381 scalar field.
pub const SCALAR_LEN: usize = 32;

/// Identifies the pairing curve and exposes its fixed generators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GroupContext {
    curve_id: u8,
}

impl GroupContext {
    pub const BLS12_381: u8 = 0x01;

    pub fn bls12_381() -> Self {
        GroupContext {
            curve_id: Self::BLS12_381,
        }
    }

    pub fn from_curve_id(curve_id: u8) -> Result<Self> {
        match curve_id {
            Self::BLS12_381 => Ok(Self::bls12_381()),
            other => Err(Error::format(format!("unknown curve id {other:#04x}"))),
        }
    }

    pub fn curve_id(&self) -> u8 {
        self.curve_id
    }

    /// The prime group order q as big-endian bytes.
    pub fn order_be_bytes(&self) -> Vec<u8> {
        Fr::MODULUS.to_bytes_be()
    }

    pub fn g1(&self) -> G1 {
        G1::generator()
    }

    pub fn g2(&self) -> G2 {
        G2::generator()
    }

    /// `pair(g1, g2)`, computed once per process.
    pub fn gt(&self) -> Gt {
        Gt::generator()
    }
}

impl Default for GroupContext {
    fn default() -> Self {
        Self::bls12_381()
    }
}

/// An integer modulo the group order q.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Scalar(pub(crate) Fr);

impl Scalar {
    pub fn zero() -> Self {
        Scalar(Fr::zero())
    }

    pub fn one() -> Self {
        Scalar(Fr::from(1u64))
    }

    pub fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        Scalar(Fr::rand(rng))
    }

    /// Uniform over `[1, q)`.
    pub fn random_nonzero<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let s = Self::random(rng);
            if !s.is_zero() {
                return s;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn inverse(&self) -> Option<Self> {
        self.0.inverse().map(Scalar)
    }

    /// Fixed-width big-endian encoding.
    pub fn to_bytes(&self) -> [u8; SCALAR_LEN] {
        let be = self.0.into_bigint().to_bytes_be();
        let mut out = [0u8; SCALAR_LEN];
        out[SCALAR_LEN - be.len()..].copy_from_slice(&be);
        out
    }

    /// Rejects anything but the canonical encoding of a value below q.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != SCALAR_LEN {
            return Err(Error::format(format!(
                "scalar must be {SCALAR_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        let s = Scalar(Fr::from_be_bytes_mod_order(bytes));
        if s.to_bytes()[..] != *bytes {
            return Err(Error::format("scalar is not reduced modulo the group order"));
        }
        Ok(s)
    }

    /// Interprets `bytes` as a big-endian integer and reduces it modulo q.
    pub fn from_bytes_wide(bytes: &[u8]) -> Self {
        Scalar(Fr::from_be_bytes_mod_order(bytes))
    }
}

impl From<u64> for Scalar {
    fn from(v: u64) -> Self {
        Scalar(Fr::from(v))
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar(0x{})", hex::encode(self.to_bytes()))
    }
}

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 + rhs.0)
    }
}

impl AddAssign for Scalar {
    fn add_assign(&mut self, rhs: Scalar) {
        self.0 += rhs.0;
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 - rhs.0)
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 * rhs.0)
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

/// Canonical byte encodings shared by every group element type.
pub trait GroupElement: Sized + Copy + Eq {
    const ENCODED_LEN: usize;
    const GROUP_NAME: &'static str;

    fn encode(&self) -> Vec<u8>;

    /// Decodes a canonical encoding, checking length, curve membership and that the
    /// element lies in the prime-order subgroup.
    fn decode(bytes: &[u8]) -> Result<Self>;
}

fn decode_canonical<T: CanonicalDeserialize + CanonicalSerialize>(
    bytes: &[u8],
    expected_len: usize,
    name: &str,
) -> Result<T> {
    if bytes.len() != expected_len {
        return Err(Error::format(format!(
            "{name} element must be {expected_len} bytes, got {}",
            bytes.len()
        )));
    }
    let value = T::deserialize_compressed(bytes)
        .map_err(|e| Error::format(format!("invalid {name} element: {e}")))?;
    let mut again = Vec::with_capacity(expected_len);
    value
        .serialize_compressed(&mut again)
        .map_err(|e| Error::format(format!("{name} re-encode failed: {e}")))?;
    if again != bytes {
        return Err(Error::format(format!("non-canonical {name} encoding")));
    }
    Ok(value)
}

fn encode_compressed<T: CanonicalSerialize>(value: &T, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len);
    value
        .serialize_compressed(&mut out)
        .expect("serializing into a Vec cannot fail");
    debug_assert_eq!(out.len(), len);
    out
}

macro_rules! curve_group {
    ($name:ident, $proj:ty, $affine:ty, $len:expr, $label:expr) => {
        #[derive(Clone, Copy, PartialEq, Eq)]
        pub struct $name(pub(crate) $proj);

        impl $name {
            pub fn identity() -> Self {
                $name(<$proj>::zero())
            }

            pub fn generator() -> Self {
                $name(<$proj as PrimeGroup>::generator())
            }

            pub fn is_identity(&self) -> bool {
                self.0.is_zero()
            }

            pub(crate) fn affine(&self) -> $affine {
                self.0.into_affine()
            }
        }

        impl GroupElement for $name {
            const ENCODED_LEN: usize = $len;
            const GROUP_NAME: &'static str = $label;

            fn encode(&self) -> Vec<u8> {
                encode_compressed(&self.affine(), $len)
            }

            fn decode(bytes: &[u8]) -> Result<Self> {
                decode_canonical::<$affine>(bytes, $len, $label).map(|p| $name(p.into()))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}(0x{}..)", $label, hex::encode(&self.encode()[..8]))
            }
        }

        impl Add for $name {
            type Output = $name;
            fn add(self, rhs: $name) -> $name {
                $name(self.0 + rhs.0)
            }
        }

        impl Sub for $name {
            type Output = $name;
            fn sub(self, rhs: $name) -> $name {
                $name(self.0 - rhs.0)
            }
        }

        impl Neg for $name {
            type Output = $name;
            fn neg(self) -> $name {
                $name(-self.0)
            }
        }

        impl Mul<Scalar> for $name {
            type Output = $name;
            fn mul(self, rhs: Scalar) -> $name {
                $name(self.0 * rhs.0)
            }
        }
    };
}

curve_group!(G1, G1Projective, G1Affine, 48, "G1");
curve_group!(G2, G2Projective, G2Affine, 96, "G2");

/// Element of the pairing target group.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Gt(pub(crate) PairingOutput<Bls12_381>);

impl Gt {
    pub fn identity() -> Self {
        Gt(PairingOutput::zero())
    }

    pub fn generator() -> Self {
        static GENERATOR: OnceLock<Gt> = OnceLock::new();
        *GENERATOR.get_or_init(|| pair(&G1::generator(), &G2::generator()))
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_zero()
    }
}

impl GroupElement for Gt {
    const ENCODED_LEN: usize = 576;
    const GROUP_NAME: &'static str = "GT";

    fn encode(&self) -> Vec<u8> {
        encode_compressed(&self.0, Self::ENCODED_LEN)
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        decode_canonical::<PairingOutput<Bls12_381>>(bytes, Self::ENCODED_LEN, Self::GROUP_NAME)
            .map(Gt)
    }
}

impl fmt::Debug for Gt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GT(0x{}..)", hex::encode(&self.encode()[..8]))
    }
}

impl Add for Gt {
    type Output = Gt;
    fn add(self, rhs: Gt) -> Gt {
        Gt(self.0 + rhs.0)
    }
}

impl Sub for Gt {
    type Output = Gt;
    fn sub(self, rhs: Gt) -> Gt {
        Gt(self.0 - rhs.0)
    }
}

impl Neg for Gt {
    type Output = Gt;
    fn neg(self) -> Gt {
        Gt(-self.0)
    }
}

impl Mul<Scalar> for Gt {
    type Output = Gt;
    fn mul(self, rhs: Scalar) -> Gt {
        Gt(self.0 * rhs.0)
    }
}

pub fn pair(p: &G1, r: &G2) -> Gt {
    Gt(Bls12_381::pairing(p.affine(), r.affine()))
}

/// Sum (product, multiplicatively) of pairings, sharing one final exponentiation.
pub fn multi_pair(terms: &[(G1, G2)]) -> Gt {
    let (lhs, rhs): (Vec<G1Projective>, Vec<G2Projective>) =
        terms.iter().map(|(p, r)| (p.0, r.0)).unzip();
    let lhs = G1Projective::normalize_batch(&lhs);
    let rhs = G2Projective::normalize_batch(&rhs);
    Gt(Bls12_381::multi_pairing(lhs, rhs))
}

type G1Hasher = MapToCurveBasedHasher<G1Projective, DefaultFieldHasher<Sha256, 128>, WBMap<g1::Config>>;

/// Hash into the prime-order subgroup of G1; `domain_tag` is the hash-to-curve DST.
///
/// Panics if `domain_tag` is empty.
pub fn hash_to_g1(domain_tag: &[u8], msg: &[u8]) -> G1 {
    assert!(!domain_tag.is_empty(), "hash_to_g1 needs a domain tag");
    let hasher = G1Hasher::new(domain_tag).expect("BLS12-381 WB map parameters are valid");
    let point = hasher
        .hash(msg)
        .expect("hash-to-curve on BLS12-381 G1 is total");
    G1(point.into())
}

/// Hash to a nonzero scalar by wide (512-bit) reduction modulo q.
///
/// Panics if `domain_tag` is empty.
pub fn hash_to_scalar(domain_tag: &[u8], msg: &[u8]) -> Scalar {
    assert!(!domain_tag.is_empty(), "hash_to_scalar needs a domain tag");
    let mut counter = 0u32;
    loop {
        let digest = Sha512::new()
            .chain_update((domain_tag.len() as u32).to_be_bytes())
            .chain_update(domain_tag)
            .chain_update(counter.to_be_bytes())
            .chain_update(msg)
            .finalize();
        let s = Scalar::from_bytes_wide(&digest);
        if !s.is_zero() {
            return s;
        }
        counter += 1;
    }
}
