mod common;

use std::collections::BTreeSet;

use common::{all_roles, oracle_closure, random_credential, random_credential_set, PRINCIPALS};
use dhabe::trust::{authorized_attributes, parse_attribute_map, parse_credentials, role_members, solve, CredentialSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn members_by_oracle(creds: &CredentialSet) -> BTreeSet<(dhabe::Role, String)> {
    oracle_closure(creds)
}

fn members_by_solver(creds: &CredentialSet) -> BTreeSet<(dhabe::Role, String)> {
    let m = solve(creds);
    all_roles()
        .into_iter()
        .flat_map(|r| m.members(&r).into_iter().map(move |p| (r.clone(), p)))
        .collect()
}

#[test]
fn solver_matches_naive_closure() {
    let mut rng = ChaCha20Rng::seed_from_u64(500);
    for case in 0..500 {
        let creds = random_credential_set(&mut rng);
        assert_eq!(members_by_solver(&creds), members_by_oracle(&creds), "case {case}:\n{creds}");
        for role in all_roles() {
            let expected: BTreeSet<String> = members_by_oracle(&creds)
                .into_iter()
                .filter(|(r, _)| *r == role)
                .map(|(_, p)| p)
                .collect();
            assert_eq!(role_members(&creds, &role), expected);
        }
    }
}

#[test]
fn adding_a_credential_never_shrinks_membership() {
    let mut rng = ChaCha20Rng::seed_from_u64(501);
    for case in 0..500 {
        let mut creds = random_credential_set(&mut rng);
        if creds.len() == 8 {
            creds.credentials.pop();
        }
        let before = members_by_solver(&creds);
        creds.push(random_credential(&mut rng, &PRINCIPALS));
        let after = members_by_solver(&creds);
        assert!(before.is_subset(&after), "case {case}:\n{creds}");
    }
}

#[test]
fn productive_rounds_are_bounded() {
    let mut rng = ChaCha20Rng::seed_from_u64(502);
    for _ in 0..500 {
        let creds = random_credential_set(&mut rng);
        let bound = creds.principals().len() * creds.defined_roles().len();
        assert!(solve(&creds).rounds() <= bound.max(1));
    }
}

#[test]
fn long_delegation_chains_converge() {
    // Credentials listed against evaluation order force one productive round per link.
    let text: String = (0..20)
        .rev()
        .map(|i| format!("P{}.r <- P{i}.r\n", i + 1))
        .chain(std::iter::once("P0.r <- Z\n".to_owned()))
        .collect();
    let creds = parse_credentials(&text).unwrap();
    let m = solve(&creds);
    assert!(m.contains(&"P20.r".parse().unwrap(), "Z"));
    assert!(m.rounds() <= creds.principals().len() * creds.defined_roles().len());
}

#[test]
fn authorization_is_scoped_to_the_issuer_path() {
    let mut rng = ChaCha20Rng::seed_from_u64(503);
    let amap = parse_attribute_map("A.r -> a0, a1 @ orgA\nB.s -> a2 @ orgB\nA.r -> a3 @ root").unwrap();
    for _ in 0..200 {
        let creds = random_credential_set(&mut rng);
        let m = solve(&creds);
        let path: Vec<String> = ["root", "orgA", "orgB"]
            .iter()
            .filter(|_| rng.gen_bool(0.5))
            .map(|s| s.to_string())
            .collect();
        for p in PRINCIPALS {
            let got = authorized_attributes(&creds, &amap, p, &path);
            let mut want = BTreeSet::new();
            for e in &amap.entries {
                if m.contains(&e.role, p) && path.contains(&e.issuer_scope) {
                    want.extend(e.attributes.iter().cloned());
                }
            }
            assert_eq!(common::to_btree(&got), want);
        }
    }
}

#[test]
fn unknown_principal_gets_nothing() {
    let creds = parse_credentials("VO.doctor <- Alice").unwrap();
    let amap = parse_attribute_map("VO.doctor -> doctor, staff @ root").unwrap();
    let root = vec!["root".to_owned()];
    assert!(authorized_attributes(&creds, &amap, "Mallory", &root).is_empty());
    assert_eq!(authorized_attributes(&creds, &amap, "Alice", &root).to_string(), "doctor,staff");
    assert!(authorized_attributes(&creds, &amap, "Alice", &["elsewhere".to_owned()]).is_empty());
}
