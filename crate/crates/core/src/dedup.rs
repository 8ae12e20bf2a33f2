//! Near-duplicate removal by longest-common-subsequence similarity over
//! whitespace-free text.

use rayon::prelude::*;

use crate::dataset::Sample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DedupConfig {
    /// Samples at or above this similarity to a kept one are dropped.
    pub threshold: f64,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig { threshold: 0.90 }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(format!(
                "dedup.threshold must be in (0, 1], got {}",
                self.threshold
            ));
        }
        Ok(())
    }
}

fn strip(text: &str) -> Vec<char> {
    text.chars().filter(|c| !c.is_whitespace()).collect()
}

/// LCS length, two-row dynamic programming.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn ratio(a: &[char], b: &[char]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * lcs_len(a, b) as f64 / (a.len() + b.len()) as f64
}

/// `2·LCS / (|a| + |b|)` after removing whitespace; 1.0 for two empty texts.
pub fn similarity(a: &str, b: &str) -> f64 {
    ratio(&strip(a), &strip(b))
}

/// Whether two stripped texts reach `threshold`. The length bound
/// `2·min / (|a|+|b|)` caps the ratio, so pairs below it skip the DP.
fn reaches(a: &[char], b: &[char], threshold: f64) -> bool {
    let total = a.len() + b.len();
    if total > 0 && 2.0 * (a.len().min(b.len()) as f64) / (total as f64) < threshold {
        return false;
    }
    ratio(a, b) >= threshold
}

pub fn tie_order(a: &Sample, b: &Sample) -> std::cmp::Ordering {
    (&a.project, &a.file, a.line, &a.id).cmp(&(&b.project, &b.file, b.line, &b.id))
}

/// Greedy keep-first pass in (project, file, line, id) order, separately
/// for each CWE. The result is in that order.
pub fn dedup(samples: &[Sample], cfg: &DedupConfig) -> Vec<Sample> {
    let mut sorted: Vec<&Sample> = samples.iter().collect();
    sorted.sort_by(|a, b| tie_order(a, b));
    let stripped: Vec<Vec<char>> = sorted.par_iter().map(|s| strip(&s.code)).collect();
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..sorted.len() {
        let clash = kept.par_iter().any(|&j| {
            sorted[j].cwe == sorted[i].cwe && reaches(&stripped[i], &stripped[j], cfg.threshold)
        });
        if !clash {
            kept.push(i);
        }
    }
    kept.into_iter().map(|i| sorted[i].clone()).collect()
}

/// Largest similarity over all same-CWE pairs, for post-checks.
pub fn max_pairwise_similarity(samples: &[Sample]) -> f64 {
    let stripped: Vec<Vec<char>> = samples.iter().map(|s| strip(&s.code)).collect();
    (0..samples.len())
        .into_par_iter()
        .map(|i| {
            (i + 1..samples.len())
                .filter(|&j| samples[i].cwe == samples[j].cwe)
                .map(|j| ratio(&stripped[i], &stripped[j]))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}
