//! Random generators and independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use dhabe::policy::{AttributeSet, PolicyNode, PolicyTree};
use dhabe::trust::{Credential, CredentialBody, CredentialSet, Role};
use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::Rng;

pub const UNIVERSE: [&str; 8] = ["a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7"];

pub const MAX_TREE_DEPTH: usize = 4;
pub const MAX_LEAVES: usize = 12;

fn random_node<R: Rng>(rng: &mut R, depth_left: usize, universe: &[&str]) -> PolicyNode {
    if depth_left == 0 || rng.gen_bool(0.35) {
        return PolicyNode::leaf(*universe.choose(rng).unwrap());
    }
    let n = if rng.gen_bool(0.05) { 1 } else { rng.gen_range(2..=4) };
    let k = rng.gen_range(1..=n);
    let children = (0..n).map(|_| random_node(rng, depth_left - 1, universe)).collect();
    PolicyNode::gate(k, children)
}

/// A tree of depth at most 4 (root at depth 0) with at most 12 leaves.
pub fn random_tree<R: Rng>(rng: &mut R) -> PolicyTree {
    random_tree_over(rng, &UNIVERSE)
}

pub fn random_tree_over<R: Rng>(rng: &mut R, universe: &[&str]) -> PolicyTree {
    loop {
        let tree = PolicyTree::new(random_node(rng, MAX_TREE_DEPTH, universe)).unwrap();
        if tree.leaf_count() <= MAX_LEAVES {
            return tree;
        }
    }
}

/// Threshold semantics evaluated directly on the node structure.
pub fn oracle_satisfied(node: &PolicyNode, attrs: &BTreeSet<String>) -> bool {
    match node {
        PolicyNode::Leaf { attribute, .. } => attrs.contains(attribute),
        PolicyNode::Gate { threshold, children } => {
            children.iter().filter(|c| oracle_satisfied(c, attrs)).count() >= *threshold
        }
    }
}

fn collect_satisfying<R: Rng>(rng: &mut R, node: &PolicyNode, out: &mut BTreeSet<String>) {
    match node {
        PolicyNode::Leaf { attribute, .. } => {
            out.insert(attribute.clone());
        }
        PolicyNode::Gate { threshold, children } => {
            for child in children.choose_multiple(rng, *threshold) {
                collect_satisfying(rng, child, out);
            }
        }
    }
}

/// A random satisfying set: the attributes of a random minimal witness plus random extras.
pub fn satisfying_set<R: Rng>(rng: &mut R, tree: &PolicyTree) -> AttributeSet {
    let mut set = BTreeSet::new();
    collect_satisfying(rng, tree.root(), &mut set);
    for a in UNIVERSE {
        if rng.gen_bool(0.15) {
            set.insert(a.to_owned());
        }
    }
    assert!(oracle_satisfied(tree.root(), &set));
    AttributeSet::try_from_iter(set).unwrap()
}

/// A random non-empty set that does not satisfy the tree.
pub fn non_satisfying_set<R: Rng>(rng: &mut R, tree: &PolicyTree) -> AttributeSet {
    for _ in 0..200 {
        let mut set: BTreeSet<String> = UNIVERSE
            .iter()
            .filter(|_| rng.gen_bool(0.4))
            .map(|a| a.to_string())
            .collect();
        set.insert("outsider".to_owned());
        if !oracle_satisfied(tree.root(), &set) {
            return AttributeSet::try_from_iter(set).unwrap();
        }
    }
    AttributeSet::try_from_iter(["outsider"]).unwrap()
}

pub fn to_btree(attrs: &AttributeSet) -> BTreeSet<String> {
    attrs.iter().map(String::from).collect()
}

/// The prime group order as a big integer.
pub fn group_order() -> BigUint {
    BigUint::from_bytes_be(&dhabe::GroupContext::bls12_381().order_be_bytes())
}

pub fn scalar_to_big(s: &dhabe::Scalar) -> BigUint {
    BigUint::from_bytes_be(&s.to_bytes())
}

/// Lagrange basis polynomial for `i` over `set`, evaluated at zero, modulo `q`.
pub fn big_lagrange_at_zero(i: u64, set: &[u64], q: &BigUint) -> BigUint {
    let mut num = BigUint::from(1u32);
    let mut den = BigUint::from(1u32);
    for &j in set.iter().filter(|&&j| j != i) {
        // (0 - j) / (i - j) = j / (j - i)
        num = num * BigUint::from(j) % q;
        let diff = (BigUint::from(j) + q - BigUint::from(i)) % q;
        den = den * diff % q;
    }
    let inv = den.modpow(&(q - BigUint::from(2u32)), q);
    num * inv % q
}

// RT0 credential generation over a small name space.

pub const PRINCIPALS: [&str; 5] = ["A", "B", "C", "D", "E"];
pub const ROLE_NAMES: [&str; 3] = ["r", "s", "t"];

fn random_role<R: Rng>(rng: &mut R, principals: &[&str]) -> Role {
    Role::new(*principals.choose(rng).unwrap(), *ROLE_NAMES.choose(rng).unwrap())
}

fn random_simple_body<R: Rng>(rng: &mut R, principals: &[&str]) -> CredentialBody {
    match rng.gen_range(0..3) {
        0 => CredentialBody::Member((*principals.choose(rng).unwrap()).to_owned()),
        1 => CredentialBody::RoleRef(random_role(rng, principals)),
        _ => CredentialBody::LinkedRole(
            random_role(rng, principals),
            (*ROLE_NAMES.choose(rng).unwrap()).to_owned(),
        ),
    }
}

pub fn random_credential<R: Rng>(rng: &mut R, principals: &[&str]) -> Credential {
    let body = if rng.gen_bool(0.2) {
        let n = rng.gen_range(2..=3);
        CredentialBody::Intersection((0..n).map(|_| random_simple_body(rng, principals)).collect())
    } else if rng.gen_bool(0.35) {
        CredentialBody::Member((*principals.choose(rng).unwrap()).to_owned())
    } else {
        random_simple_body(rng, principals)
    };
    Credential {
        head: random_role(rng, principals),
        body,
    }
}

/// Up to 8 credentials over up to 5 principals.
pub fn random_credential_set<R: Rng>(rng: &mut R) -> CredentialSet {
    let np = rng.gen_range(1..=PRINCIPALS.len());
    let principals = &PRINCIPALS[..np];
    let n = rng.gen_range(0..=8);
    CredentialSet::new((0..n).map(|_| random_credential(rng, principals)).collect())
}

/// Naive closure over `(role, principal)` facts, recomputing every derivation from the previous
/// fact set until nothing new appears.
pub fn oracle_closure(creds: &CredentialSet) -> BTreeSet<(Role, String)> {
    fn derive(body: &CredentialBody, facts: &BTreeSet<(Role, String)>, universe: &BTreeSet<String>) -> BTreeSet<String> {
        universe
            .iter()
            .filter(|p| holds(body, p, facts, universe))
            .cloned()
            .collect()
    }

    fn holds(body: &CredentialBody, p: &str, facts: &BTreeSet<(Role, String)>, universe: &BTreeSet<String>) -> bool {
        match body {
            CredentialBody::Member(m) => m == p,
            CredentialBody::RoleRef(r) => facts.contains(&(r.clone(), p.to_owned())),
            CredentialBody::LinkedRole(r, name) => universe.iter().any(|b| {
                facts.contains(&(r.clone(), b.clone())) && facts.contains(&(Role::new(b.clone(), name.clone()), p.to_owned()))
            }),
            CredentialBody::Intersection(parts) => parts.iter().all(|part| holds(part, p, facts, universe)),
        }
    }

    let universe = creds.principals();
    let mut facts = BTreeSet::new();
    loop {
        let mut next = facts.clone();
        for c in &creds.credentials {
            for p in derive(&c.body, &facts, &universe) {
                next.insert((c.head.clone(), p));
            }
        }
        if next == facts {
            return facts;
        }
        facts = next;
    }
}

/// Every role nameable from the generator's name space.
pub fn all_roles() -> Vec<Role> {
    PRINCIPALS
        .iter()
        .flat_map(|p| ROLE_NAMES.iter().map(move |r| Role::new(*p, *r)))
        .collect()
}

// Random instances of every serializable object.

pub mod objects {
    use super::*;
    use dhabe::scheme::{epoch_rekey, rerandomize};
    use dhabe::trust::{AttributeMap, AttributeMapEntry};
    use dhabe::*;
    use rand::RngCore;
    use rand_chacha::ChaCha20Rng;

    pub fn vo(rng: &mut ChaCha20Rng) -> (PublicParams, MasterKey, DaKey) {
        let (mut pp, mut mk, mut root) = setup(GroupContext::bls12_381(), rng);
        for _ in 0..rng.gen_range(0..3) {
            (pp, root) = epoch_rekey(&mut mk, &pp, rng);
        }
        (pp, mk, root)
    }

    pub fn da_key(rng: &mut ChaCha20Rng, pp: &PublicParams, root: &DaKey) -> DaKey {
        let depth = rng.gen_range(0..4);
        let da = (0..depth).fold(root.clone(), |da, i| delegate(pp, &da, &format!("L{i}-{}", rng.gen::<u16>()), rng).unwrap());
        if rng.gen_bool(0.3) {
            let path: Vec<String> = da.path.iter().map(|l| format!("{l}.f")).collect();
            rerandomize(pp, &da, &path, rng).unwrap()
        } else {
            da
        }
    }

    pub fn attribute_set(rng: &mut ChaCha20Rng) -> AttributeSet {
        let mut set: Vec<&str> = UNIVERSE.iter().copied().filter(|_| rng.gen_bool(0.4)).collect();
        if set.is_empty() {
            set.push(UNIVERSE.choose(rng).unwrap());
        }
        AttributeSet::try_from_iter(set).unwrap()
    }

    pub fn user_key(rng: &mut ChaCha20Rng, pp: &PublicParams, root: &DaKey) -> UserKey {
        let user = format!("user{}", rng.gen_range(0..1000));
        let shards: Vec<UserKeyShard> = (0..rng.gen_range(1..=3))
            .map(|_| {
                let da = da_key(rng, pp, root);
                issue_user_key(pp, &da, &user, &attribute_set(rng)).unwrap()
            })
            .collect();
        merge_shards(&shards).unwrap()
    }

    pub fn ciphertext(rng: &mut ChaCha20Rng, pp: &PublicParams) -> Ciphertext {
        let tree = random_tree(rng);
        let mut msg = vec![0u8; rng.gen_range(0..64)];
        rng.fill_bytes(&mut msg);
        encrypt(pp, &tree, &msg, rng)
    }

    pub fn credential_set(rng: &mut ChaCha20Rng) -> CredentialSet {
        random_credential_set(rng)
    }

    pub fn attribute_map(rng: &mut ChaCha20Rng) -> AttributeMap {
        let entries = (0..rng.gen_range(0..5))
            .map(|_| AttributeMapEntry {
                role: random_role(rng, &PRINCIPALS),
                attributes: attribute_set(rng).iter().map(String::from).collect(),
                issuer_scope: format!("org{}", rng.gen_range(0..4)),
            })
            .collect();
        AttributeMap { entries }
    }
}
