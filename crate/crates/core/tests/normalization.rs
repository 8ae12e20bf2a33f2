use std::collections::BTreeMap;

use phpvul::normalize::{normalize, NormalizeConfig};
use phpvul::php;
use phpvul::php::NodeKind;
use phpvul::sinks::SinkRules;
use phpvul::slicer::{marker_count, verify_snippet, Snippet};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

const RESERVED: [&str; 5] = ["this", "GLOBALS", "_SESSION", "_FILES", "_ENV"];

fn variables(code: &str) -> Vec<String> {
    let program = php::parse(code).unwrap();
    let mut names: Vec<String> = program
        .root
        .walk()
        .filter_map(|n| match &n.kind {
            NodeKind::Variable(v) => Some(v.clone()),
            _ => None,
        })
        .filter(|v| !RESERVED.contains(&v.as_str()))
        .collect();
    names.sort();
    names.dedup();
    names
}

/// Rename `$name` occurrences textually, including inside interpolated
/// strings and the taint marker.
fn rename_text(code: &str, map: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    let mut rest = code;
    while let Some(i) = rest.find('$') {
        out.push_str(&rest[..=i]);
        rest = &rest[i + 1..];
        let end = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        let ident = &rest[..end];
        out.push_str(map.get(ident).map_or(ident, String::as_str));
        rest = &rest[end..];
    }
    out.push_str(rest);
    out
}

#[test]
fn fixture_snippets_are_idempotent_and_keep_their_sink() {
    let cfg = NormalizeConfig::default();
    let snippets = common::raw_snippets();
    assert!(snippets.len() >= 60, "only {} snippets", snippets.len());
    for s in &snippets {
        let once = normalize(s, &cfg).unwrap_or_else(|e| panic!("{e}\n{}", s.code));
        let twice = normalize(&once, &cfg).unwrap();
        assert_eq!(once.code, twice.code, "not idempotent:\n{}", s.code);

        let v = verify_snippet(&once.code, s.cwe, &SinkRules::default()).unwrap();
        assert_eq!(v.sink_line, s.sink_line, "{}", once.code);
        assert_eq!(v.taint_var, once.taint_var);
        assert_eq!(marker_count(&once.code), 1);
        assert_eq!(
            php::parse(&once.code).unwrap().all_statements().len(),
            php::parse(&s.code).unwrap().all_statements().len(),
            "statement count changed:\n{}\n--\n{}",
            s.code,
            once.code
        );
    }
}

#[test]
fn alpha_renamings_normalize_identically() {
    let cfg = NormalizeConfig::default();
    let snippets: Vec<Snippet> = common::raw_snippets()
        .into_iter()
        .filter(|s| variables(&s.code).len() >= 2)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for round in 0..20 {
        let s = snippets.choose(&mut rng).unwrap();
        let names = variables(&s.code);
        let mut fresh: Vec<String> = (0..names.len())
            .map(|i| format!("r{round}_{i}_{}", rng.random_range(0..1000)))
            .collect();
        fresh.shuffle(&mut rng);
        let map: BTreeMap<String, String> = names.iter().cloned().zip(fresh).collect();
        let renamed = common::snippet_of(&rename_text(&s.code, &map), s.cwe);
        assert_ne!(renamed.code, s.code);
        let a = normalize(s, &cfg).unwrap();
        let b = normalize(&renamed, &cfg).unwrap();
        assert_eq!(
            a.code, b.code,
            "renaming {map:?} changed the canonical form"
        );
    }
}

#[test]
fn disabled_normalization_is_the_identity() {
    let cfg = NormalizeConfig {
        enabled: false,
        ..NormalizeConfig::default()
    };
    for s in common::raw_snippets().iter().take(20) {
        assert_eq!(normalize(s, &cfg).unwrap().code, s.code);
    }
}
