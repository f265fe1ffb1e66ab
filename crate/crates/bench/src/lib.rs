//! Fixtures shared by the benchmarks.

use dhabe::{
    delegate, issue_user_key, parse_policy, setup, AttributeSet, DaKey, GroupContext, MasterKey, PolicyTree,
    PublicParams, UserKey,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub struct Fixture {
    pub rng: ChaCha20Rng,
    pub pp: PublicParams,
    pub mk: MasterKey,
    pub root: DaKey,
}

impl Fixture {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (pp, mk, root) = setup(GroupContext::bls12_381(), &mut rng);
        Fixture { rng, pp, mk, root }
    }

    /// An authority `depth` delegations below the root.
    pub fn authority(&mut self, depth: usize) -> DaKey {
        (0..depth).fold(self.root.clone(), |da, i| {
            delegate(&self.pp, &da, &format!("level{i}"), &mut self.rng).unwrap()
        })
    }

    /// A key holding attributes `a0..a{n}`.
    pub fn user_key(&mut self, n: usize) -> UserKey {
        issue_user_key(&self.pp, &self.root, "bench-user", &attributes(n)).unwrap().into()
    }
}

pub fn attributes(n: usize) -> AttributeSet {
    AttributeSet::try_from_iter((0..n).map(|i| format!("a{i}"))).unwrap()
}

/// `a0 and a1 and ... and a{n-1}`.
pub fn conjunction(n: usize) -> PolicyTree {
    let text: Vec<String> = (0..n).map(|i| format!("a{i}")).collect();
    parse_policy(&text.join(" and ")).unwrap()
}

/// `n` of `2n` attributes; decryption uses the first `n`.
pub fn threshold(n: usize) -> PolicyTree {
    let text: Vec<String> = (0..2 * n).map(|i| format!("a{i}")).collect();
    parse_policy(&format!("{n} of ({})", text.join(", "))).unwrap()
}
