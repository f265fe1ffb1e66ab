mod common;

use std::collections::BTreeMap;
use std::path::PathBuf;

use dhabe::harness::{parse_scenario, run_scenario, Event, Outcome, Scenario, SCHEME_OPERATIONS};
use dhabe::trust::{authorized_attributes, parse_attribute_map, parse_credentials, AttributeMap, CredentialSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn golden_log_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/healthcare.log")
}

#[test]
fn healthcare_scenario_meets_every_expectation() {
    let log = run_scenario(&Scenario::healthcare()).unwrap();
    let failures: Vec<String> = log.failures().map(|r| r.to_string()).collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn healthcare_log_is_byte_identical_across_runs() {
    let first = run_scenario(&Scenario::healthcare()).unwrap().to_text();
    let second = run_scenario(&Scenario::healthcare()).unwrap().to_text();
    assert_eq!(first, second);
    let reparsed: Scenario = Scenario::healthcare().to_string().parse().unwrap();
    assert_eq!(run_scenario(&reparsed).unwrap().to_text(), first);
}

/// Set `DHABE_UPDATE_GOLDEN=1` to rewrite the pinned log.
#[test]
fn healthcare_log_matches_golden() {
    let text = run_scenario(&Scenario::healthcare()).unwrap().to_text();
    if std::env::var_os("DHABE_UPDATE_GOLDEN").is_some() {
        std::fs::write(golden_log_path(), &text).unwrap();
        return;
    }
    assert_eq!(std::fs::read_to_string(golden_log_path()).unwrap(), text);
}

#[test]
fn healthcare_exercises_every_scheme_operation() {
    let log = run_scenario(&Scenario::healthcare()).unwrap();
    for op in SCHEME_OPERATIONS {
        assert!(log.operations.contains(op), "{op} never ran");
    }
}

#[test]
fn healthcare_shows_the_rogue_authority_flaw() {
    let sc = Scenario::healthcare();
    let log = run_scenario(&sc).unwrap();
    let key_digest = |da: &str, user: &str| {
        sc.events
            .iter()
            .zip(&log.records)
            .find(|(e, _)| matches!(e, Event::KeyRequest { da: d, user: u, .. } if d == da && u == user))
            .map(|(_, r)| r.digests[0].1.clone())
            .unwrap()
    };
    assert_eq!(key_digest("hospB", "Alice"), key_digest("rogue", "Alice"));
    let rerand = log.records.iter().find(|r| r.event == "RERANDOMIZE").unwrap();
    assert!(rerand.text.starts_with("FLAW-DEMO"));
    assert!(rerand.text.contains("master witness identical"));
}

#[test]
fn seed_changes_digests_but_not_outcomes() {
    let mut sc = Scenario::healthcare();
    let base = run_scenario(&sc).unwrap();
    sc.seed += 1;
    let other = run_scenario(&sc).unwrap();
    assert_ne!(base.to_text(), other.to_text());
    let outcomes = |l: &dhabe::harness::EventLog| l.records.iter().map(|r| r.outcome).collect::<Vec<_>>();
    assert_eq!(outcomes(&base), outcomes(&other));
}

/// Replays a scenario's bookkeeping independently and checks that every granted key request
/// stayed within the attributes trust management authorizes.
fn assert_tm_sound(sc: &Scenario) {
    let log = run_scenario(sc).unwrap();
    let mut creds = CredentialSet::default();
    let mut amap = AttributeMap::default();
    let mut paths: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (event, record) in sc.events.iter().zip(&log.records) {
        match event {
            Event::Setup => {
                paths.insert("root".into(), vec!["root".into()]);
            }
            Event::Delegate { parent, label, name } => {
                let mut p = paths[parent].clone();
                p.push(label.clone());
                paths.insert(name.clone().unwrap_or(label.clone()), p);
            }
            Event::Rerandomize { path, name, .. } => {
                paths.insert(name.clone(), path.clone());
            }
            Event::LoadCredentials { text } => creds.extend(&parse_credentials(text).unwrap()),
            Event::LoadAttributeMap { text } => amap.extend(&parse_attribute_map(text).unwrap()),
            Event::KeyRequest { da, user, attrs, .. } if record.outcome == Outcome::Ok => {
                let allowed = authorized_attributes(&creds, &amap, user, &paths[da]);
                assert!(attrs.is_subset(&allowed), "{event} granted beyond {allowed}");
            }
            _ => {}
        }
    }
}

fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let orgs = ["orgA", "orgB", "orgC"];
    let mut text = format!("SCENARIO seed={seed}\nSETUP\n");
    for org in orgs {
        text += &format!("DELEGATE parent=root label={org}\n");
    }
    text += "DELEGATE parent=orgA label=unit as=unitA\n";
    text += "RERANDOMIZE da=orgB path=root/orgC as=rogue\n";
    let creds = common::random_credential_set(&mut rng);
    text += &format!("LOAD_CREDENTIALS text={:?}\n", creds.to_string());
    let mut amap = String::new();
    for role in common::all_roles().choose_multiple(&mut rng, 6) {
        let attrs: Vec<&str> = common::UNIVERSE.choose_multiple(&mut rng, 2).copied().collect();
        amap += &format!("{role} -> {} @ {}\n", attrs.join(", "), ["root", "orgA", "orgB", "orgC", "unit"].choose(&mut rng).unwrap());
    }
    text += &format!("LOAD_ATTRIBUTE_MAP text={:?}\n", amap);
    for _ in 0..25 {
        let da = ["root", "orgA", "orgB", "orgC", "unitA", "rogue"].choose(&mut rng).unwrap();
        let user = common::PRINCIPALS.choose(&mut rng).unwrap();
        let n = rng.gen_range(1..3);
        let attrs: Vec<&str> = common::UNIVERSE.choose_multiple(&mut rng, n).copied().collect();
        text += &format!("KEY_REQUEST da={da} user={user} attrs={}\n", attrs.join(","));
    }
    parse_scenario(&text).unwrap()
}

#[test]
fn key_requests_never_exceed_authorization() {
    assert_tm_sound(&Scenario::healthcare());
    let mut granted = 0;
    for seed in 0..40 {
        let sc = random_scenario(seed);
        assert_tm_sound(&sc);
        granted += run_scenario(&sc)
            .unwrap()
            .records
            .iter()
            .filter(|r| r.event == "KEY_REQUEST" && r.outcome == Outcome::Ok)
            .count();
    }
    assert!(granted > 0, "random scenarios never granted a key, the check is vacuous");
}
