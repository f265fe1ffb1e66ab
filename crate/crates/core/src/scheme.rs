//! Dynamic hierarchical attribute-based encryption.
//!
//! A virtual organization (VO) is set up once by a root authority. Domain authorities (DAs)
//! form a tree below it through [`delegate`]; any DA can issue attribute keys to users with
//! [`issue_user_key`]. Because every DA of an epoch shares the same user-binding seed, shards
//! issued to one user by different DAs carry the same `K`, `L` and can be combined with
//! [`merge_shards`], while shards of different users cannot.
//!
//! Ciphertexts carry their policy tree. Leaf `y` holds `C_y = A1·λ_y − H(att(y)‖e)·r_y` and
//! `D_y = g2·r_y`; a user key holds `K = g2·(α + a·t)`, `L = g2·t` and `K_x = H(x‖e)·t`.
//! Pairing a leaf against the key gives `e(g1,g2)^{a·t·λ_y}`; Lagrange recombination up the tree
//! yields `e(g1,g2)^{a·t·s}`, which `e(C0, K)` divides out to leave the KEM value `Y·s`.
//!
//! DA keys are master-equivalent: `Z − A2·τ = g2·α` for every DA of the VO. This makes the
//! accountability gap of the construction explicit, see [`rerandomize`] and
//! [`recover_master_witness`].

use std::collections::{BTreeMap, HashMap};

use rand::{CryptoRng, RngCore};

use crate::error::{Error, Result};
use crate::group::{hash_to_g1, hash_to_scalar, multi_pair, pair, GroupContext, GroupElement, Gt, Scalar, G1, G2};
use crate::kem::{self, DemPayload};
use crate::policy::{self, AttributeSet, PolicyTree};

pub type Seed = [u8; 32];

pub const ROOT_LABEL: &str = "root";

/// Attached to every DA key produced by [`rerandomize`].
pub const FLAW_DEMO_WARNING: &str =
    "FLAW-DEMO: this domain authority was forged by re-randomizing another authority's key; \
     its issued keys are indistinguishable from the original's";

const PRF_TAG: &[u8] = b"DHABE:PRF";
const ATTR_TAG: &[u8] = b"DHABE:ATTR";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicParams {
    pub ctx: GroupContext,
    /// `g1·a`
    pub a1: G1,
    /// `g2·a`
    pub a2: G2,
    /// `e(g1, g2)·α`
    pub y: Gt,
    pub current_epoch: u64,
}

impl PublicParams {
    /// `e(A1, g2) = e(g1, A2)`.
    pub fn is_consistent(&self) -> bool {
        pair(&self.a1, &self.ctx.g2()) == pair(&self.ctx.g1(), &self.a2)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MasterKey {
    pub(crate) alpha: Scalar,
    pub(crate) root_seed: Seed,
    pub(crate) epoch_seeds: BTreeMap<u64, Seed>,
}

impl MasterKey {
    pub fn epoch_seed(&self, epoch: u64) -> Option<&Seed> {
        self.epoch_seeds.get(&epoch)
    }

    pub fn latest_epoch(&self) -> u64 {
        self.epoch_seeds.keys().next_back().copied().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DaOrigin {
    /// Created by setup, epoch re-keying or legitimate delegation.
    Delegated,
    /// Forged from another DA's key; see [`FLAW_DEMO_WARNING`].
    Rerandomized,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DaKey {
    /// `g2·(α + a·τ)`
    pub z: G2,
    pub tau: Scalar,
    pub seed: Seed,
    pub path: Vec<String>,
    pub epoch: u64,
    pub origin: DaOrigin,
}

impl DaKey {
    pub fn depth(&self) -> usize {
        self.path.len()
    }

    pub fn warning(&self) -> Option<&'static str> {
        (self.origin == DaOrigin::Rerandomized).then_some(FLAW_DEMO_WARNING)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserKeyShard {
    pub user_id: String,
    pub epoch: u64,
    /// `g2·(α + a·t_u)`
    pub k: G2,
    /// `g2·t_u`
    pub l: G2,
    pub attr_components: BTreeMap<String, G1>,
    pub issuer_path: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserKey {
    pub user_id: String,
    pub epoch: u64,
    pub k: G2,
    pub l: G2,
    pub attr_components: BTreeMap<String, G1>,
    pub issuer_paths: Vec<Vec<String>>,
}

impl UserKey {
    pub fn attributes(&self) -> AttributeSet {
        AttributeSet::try_from_iter(self.attr_components.keys().cloned())
            .expect("attribute components are keyed by validated attributes")
    }
}

impl From<UserKeyShard> for UserKey {
    fn from(shard: UserKeyShard) -> Self {
        UserKey {
            user_id: shard.user_id,
            epoch: shard.epoch,
            k: shard.k,
            l: shard.l,
            attr_components: shard.attr_components,
            issuer_paths: vec![shard.issuer_path],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LeafComponents {
    pub c: G1,
    pub d: G2,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    pub tree: PolicyTree,
    pub epoch: u64,
    /// `g1·s`
    pub c0: G1,
    /// Indexed by leaf index.
    pub leaves: Vec<LeafComponents>,
    pub dem: DemPayload,
}

/// The unblinded master element `g2·α`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MasterWitness(pub G2);

impl MasterWitness {
    pub fn matches(&self, pp: &PublicParams) -> bool {
        pair(&pp.ctx.g1(), &self.0) == pp.y
    }
}

pub fn validate_label(label: &str) -> Result<()> {
    let ok = !label.is_empty()
        && label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | ':' | '-'));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidLabel(label.to_owned()))
    }
}

fn random_seed<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Seed {
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    seed
}

/// `H1(x ‖ epoch)`.
pub fn attribute_point(attribute: &str, epoch: u64) -> G1 {
    let mut msg = attribute.as_bytes().to_vec();
    msg.extend_from_slice(&epoch.to_be_bytes());
    hash_to_g1(ATTR_TAG, &msg)
}

/// `t_u`, shared by every DA holding the epoch seed.
fn user_exponent(seed: &Seed, epoch: u64, user_id: &str) -> Scalar {
    let mut msg = Vec::with_capacity(40 + user_id.len());
    msg.extend_from_slice(seed);
    msg.extend_from_slice(&epoch.to_be_bytes());
    msg.extend_from_slice(user_id.as_bytes());
    hash_to_scalar(PRF_TAG, &msg)
}

fn root_key<R: RngCore + CryptoRng + ?Sized>(
    pp: &PublicParams,
    alpha: Scalar,
    seed: Seed,
    rng: &mut R,
) -> DaKey {
    let tau = Scalar::random_nonzero(rng);
    DaKey {
        z: pp.ctx.g2() * alpha + pp.a2 * tau,
        tau,
        seed,
        path: vec![ROOT_LABEL.to_owned()],
        epoch: pp.current_epoch,
        origin: DaOrigin::Delegated,
    }
}

/// Creates a VO at epoch 0. Returns the public parameters, the master key and the root DA key.
pub fn setup<R: RngCore + CryptoRng + ?Sized>(
    ctx: GroupContext,
    rng: &mut R,
) -> (PublicParams, MasterKey, DaKey) {
    let alpha = Scalar::random_nonzero(rng);
    let a = Scalar::random_nonzero(rng);
    let pp = PublicParams {
        ctx,
        a1: ctx.g1() * a,
        a2: ctx.g2() * a,
        y: ctx.gt() * alpha,
        current_epoch: 0,
    };
    let root_seed = random_seed(rng);
    let mk = MasterKey {
        alpha,
        root_seed,
        epoch_seeds: BTreeMap::from([(0, root_seed)]),
    };
    let root = root_key(&pp, alpha, root_seed, rng);
    (pp, mk, root)
}

fn reblind<R: RngCore + CryptoRng + ?Sized>(pp: &PublicParams, da: &DaKey, rng: &mut R) -> (G2, Scalar) {
    let delta = Scalar::random_nonzero(rng);
    (da.z + pp.a2 * delta, da.tau + delta)
}

/// Creates a sub-authority one level below `parent`. There is no depth limit.
pub fn delegate<R: RngCore + CryptoRng + ?Sized>(
    pp: &PublicParams,
    parent: &DaKey,
    child_label: &str,
    rng: &mut R,
) -> Result<DaKey> {
    validate_label(child_label)?;
    let (z, tau) = reblind(pp, parent, rng);
    let mut path = parent.path.clone();
    path.push(child_label.to_owned());
    Ok(DaKey {
        z,
        tau,
        seed: parent.seed,
        path,
        epoch: parent.epoch,
        origin: DaOrigin::Delegated,
    })
}

/// Forges a sibling authority at the same depth as `da`, claiming `forged_path`.
///
/// This is the delegation algebra without the depth increase. Nothing in the resulting key
/// distinguishes it from a legitimately delegated one except the [`DaOrigin::Rerandomized`]
/// marker, which the forger would of course not set.
pub fn rerandomize<R: RngCore + CryptoRng + ?Sized>(
    pp: &PublicParams,
    da: &DaKey,
    forged_path: &[String],
    rng: &mut R,
) -> Result<DaKey> {
    if forged_path.len() != da.depth() {
        return Err(Error::ForgedPathDepth {
            expected: da.depth(),
            found: forged_path.len(),
        });
    }
    forged_path.iter().try_for_each(|l| validate_label(l))?;
    let (z, tau) = reblind(pp, da, rng);
    Ok(DaKey {
        z,
        tau,
        seed: da.seed,
        path: forged_path.to_vec(),
        epoch: da.epoch,
        origin: DaOrigin::Rerandomized,
    })
}

/// `Z − A2·τ = g2·α`, identical for every DA key of the VO.
pub fn recover_master_witness(da: &DaKey, pp: &PublicParams) -> MasterWitness {
    MasterWitness(da.z - pp.a2 * da.tau)
}

pub fn issue_user_key(
    pp: &PublicParams,
    da: &DaKey,
    user_id: &str,
    attrs: &AttributeSet,
) -> Result<UserKeyShard> {
    if attrs.is_empty() {
        return Err(Error::EmptyAttributeSet);
    }
    if user_id.is_empty() {
        return Err(Error::InvalidLabel(user_id.to_owned()));
    }
    if da.epoch != pp.current_epoch {
        return Err(Error::EpochMismatch {
            expected: pp.current_epoch,
            found: da.epoch,
        });
    }
    let epoch = da.epoch;
    let t = user_exponent(&da.seed, epoch, user_id);
    let attr_components = attrs
        .iter()
        .map(|x| (x.to_owned(), attribute_point(x, epoch) * t))
        .collect();
    Ok(UserKeyShard {
        user_id: user_id.to_owned(),
        epoch,
        k: da.z + pp.a2 * (t - da.tau),
        l: pp.ctx.g2() * t,
        attr_components,
        issuer_path: da.path.clone(),
    })
}

/// Public well-formedness check `e(g1, K) = Y · e(A1, L)`.
pub fn verify_key_pair(pp: &PublicParams, k: &G2, l: &G2) -> bool {
    multi_pair(&[(pp.ctx.g1(), *k), (-pp.a1, *l)]) == pp.y
}

pub fn verify_shard(pp: &PublicParams, shard: &UserKeyShard) -> bool {
    verify_key_pair(pp, &shard.k, &shard.l)
}

/// Combines shards issued to one user, possibly by different DAs.
///
/// Refuses unless every shard agrees bit-exactly on user id, epoch, `K` and `L`. Later shards
/// win on duplicate attributes.
pub fn merge_shards(shards: &[UserKeyShard]) -> Result<UserKey> {
    let keys: Vec<UserKey> = shards.iter().cloned().map(UserKey::from).collect();
    merge_keys(&keys)
}

/// [`merge_shards`] over already-merged keys.
pub fn merge_keys(keys: &[UserKey]) -> Result<UserKey> {
    let (first, rest) = keys
        .split_first()
        .ok_or(Error::MergeRefused("nothing to merge"))?;
    let mut merged = first.clone();
    for key in rest {
        if key.user_id != merged.user_id {
            return Err(Error::MergeRefused("user ids differ"));
        }
        if key.epoch != merged.epoch {
            return Err(Error::MergeRefused("epochs differ"));
        }
        if key.k.encode() != merged.k.encode() || key.l.encode() != merged.l.encode() {
            return Err(Error::MergeRefused("user binding components differ"));
        }
        merged
            .attr_components
            .extend(key.attr_components.iter().map(|(a, c)| (a.clone(), *c)));
        merged.issuer_paths.extend(key.issuer_paths.iter().cloned());
    }
    Ok(merged)
}

fn header_bytes(tree: &PolicyTree, epoch: u64, c0: &G1) -> Vec<u8> {
    let policy = tree.to_string();
    let mut out = Vec::with_capacity(4 + policy.len() + 8 + G1::ENCODED_LEN);
    out.extend_from_slice(&(policy.len() as u32).to_be_bytes());
    out.extend_from_slice(policy.as_bytes());
    out.extend_from_slice(&epoch.to_be_bytes());
    out.extend_from_slice(&c0.encode());
    out
}

/// Encrypts under `tree` at the current epoch.
pub fn encrypt<R: RngCore + CryptoRng + ?Sized>(
    pp: &PublicParams,
    tree: &PolicyTree,
    plaintext: &[u8],
    rng: &mut R,
) -> Ciphertext {
    let epoch = pp.current_epoch;
    let s = Scalar::random_nonzero(rng);
    let shares = policy::assign_shares(tree, s, rng);
    let g2 = pp.ctx.g2();
    let mut points: HashMap<&str, G1> = HashMap::new();
    let leaves = tree
        .leaves()
        .into_iter()
        .map(|(index, attribute)| {
            let h = *points
                .entry(attribute)
                .or_insert_with(|| attribute_point(attribute, epoch));
            let r = Scalar::random_nonzero(rng);
            LeafComponents {
                c: pp.a1 * shares.leaf_shares[index] - h * r,
                d: g2 * r,
            }
        })
        .collect();
    let c0 = pp.ctx.g1() * s;
    let dem_key = kem::derive_key(&(pp.y * s), &header_bytes(tree, epoch, &c0));
    Ciphertext {
        tree: tree.clone(),
        epoch,
        c0,
        leaves,
        dem: kem::seal(&dem_key, plaintext, rng),
    }
}

pub fn decrypt(pp: &PublicParams, key: &UserKey, ct: &Ciphertext) -> Result<Vec<u8>> {
    kem::check_alg(&ct.dem)?;
    if ct.epoch > pp.current_epoch {
        return Err(Error::format("ciphertext is from a future epoch"));
    }
    if ct.leaves.len() != ct.tree.leaf_count() {
        return Err(Error::format("ciphertext leaf count does not match its policy"));
    }
    if key.epoch != ct.epoch {
        return Err(Error::EpochMismatch {
            expected: ct.epoch,
            found: key.epoch,
        });
    }
    let plan = policy::satisfying_plan(&ct.tree, &key.attributes())?;

    // e(C0, K) · ∏ [e(C_y, L) · e(K_x, D_y)]^(−coeff_y)
    let mut terms = vec![(ct.c0, key.k)];
    for (index, attribute, coeff) in plan.leaf_coefficients() {
        let leaf = &ct.leaves[index];
        let k_x = key.attr_components[attribute];
        terms.push((-(leaf.c * coeff), key.l));
        terms.push((-(k_x * coeff), leaf.d));
    }
    let kem_value = multi_pair(&terms);
    let dem_key = kem::derive_key(&kem_value, &header_bytes(&ct.tree, ct.epoch, &ct.c0));
    kem::open(&dem_key, &ct.dem)
}

/// Advances the VO to a new epoch with a fresh user-binding seed.
///
/// `α` and `Y` are unchanged, so artifacts of earlier epochs keep working together. Only DAs
/// re-delegated from the returned root can issue keys for the new epoch.
pub fn epoch_rekey<R: RngCore + CryptoRng + ?Sized>(
    mk: &mut MasterKey,
    pp: &PublicParams,
    rng: &mut R,
) -> (PublicParams, DaKey) {
    let epoch = pp.current_epoch + 1;
    let seed = random_seed(rng);
    mk.epoch_seeds.insert(epoch, seed);
    let next = PublicParams {
        current_epoch: epoch,
        ..pp.clone()
    };
    let root = root_key(&next, mk.alpha, seed, rng);
    (next, root)
}
