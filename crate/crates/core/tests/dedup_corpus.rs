use phpvul::dataset::load;
use phpvul::dedup::{dedup, similarity, DedupConfig};

mod common;

/// Textbook quadratic LCS over non-whitespace chars.
fn lcs(a: &str, b: &str) -> usize {
    let strip = |s: &str| {
        s.chars()
            .filter(|c| !c.is_whitespace())
            .collect::<Vec<char>>()
    };
    let (a, b) = (strip(a), strip(b));
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t[a.len()][b.len()]
}

fn oracle_similarity(a: &str, b: &str) -> f64 {
    let total = a.chars().filter(|c| !c.is_whitespace()).count()
        + b.chars().filter(|c| !c.is_whitespace()).count();
    if total == 0 {
        return 1.0;
    }
    2.0 * lcs(a, b) as f64 / total as f64
}

#[test]
fn anchor_pair() {
    assert_eq!(similarity("abcd", "abce"), 0.75);
    assert_eq!(oracle_similarity("abcd", "abce"), 0.75);
}

#[test]
fn corpus_post_check() {
    let samples = load(&common::fixture("dedup/snippets.jsonl")).unwrap();
    assert_eq!(samples.len(), 50);
    let cfg = DedupConfig::default();
    let kept = dedup(&samples, &cfg);
    assert!(kept.len() < samples.len(), "fixture has no near-duplicates");
    assert!(kept.len() >= 20);

    // No retained pair (same CWE) reaches the threshold.
    for (i, a) in kept.iter().enumerate() {
        for b in &kept[i + 1..] {
            if a.cwe == b.cwe {
                let s = oracle_similarity(&a.code, &b.code);
                assert!(s < cfg.threshold, "{} ~ {} = {s}", a.id, b.id);
            }
        }
    }
    // Every removed sample has a retained twin.
    for s in samples
        .iter()
        .filter(|s| !kept.iter().any(|k| k.id == s.id))
    {
        assert!(
            kept.iter()
                .any(|k| k.cwe == s.cwe && oracle_similarity(&k.code, &s.code) >= cfg.threshold),
            "{} dropped without a twin",
            s.id
        );
    }
    // The library similarity agrees with the oracle on the whole corpus.
    for a in &samples[..10] {
        for b in &samples {
            assert!(
                (similarity(&a.code, &b.code) - oracle_similarity(&a.code, &b.code)).abs() < 1e-12
            );
        }
    }
}
