//! Hierarchical ciphertext-policy attribute-based encryption for virtual organizations.
//!
//! A VO root delegates domain authorities (DAs) to any depth; each DA issues attribute keys
//! that users merge across DAs and use against threshold-tree policies. Epoch re-keying
//! models organizations joining and leaving. An RT0 trust-management engine decides which
//! attributes each DA may issue, and [`harness`] replays whole VO scenarios deterministically.

pub mod codec;
pub mod error;
pub mod group;
pub mod harness;
pub mod kem;
pub mod policy;
pub mod scheme;
pub mod trust;

pub use codec::{Codec, ObjectTag};
pub use error::{Error, ErrorKind, Result};
pub use group::{GroupContext, GroupElement, Gt, Scalar, G1, G2};
pub use policy::{parse_policy, AttributeSet, PolicyNode, PolicyTree};
pub use scheme::{
    decrypt, delegate, encrypt, epoch_rekey, issue_user_key, merge_keys, merge_shards,
    recover_master_witness, rerandomize, setup, Ciphertext, DaKey, DaOrigin, MasterKey,
    MasterWitness, PublicParams, UserKey, UserKeyShard,
};
pub use trust::{authorized_attributes, role_members, AttributeMap, CredentialSet, Role};
