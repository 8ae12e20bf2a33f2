//! Sample records, JSON-lines persistence, statistics and splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sinks::SinkKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Good,
    Bad,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Good => "good",
            Label::Bad => "bad",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "good" => Ok(Label::Good),
            "bad" => Ok(Label::Bad),
            other => Err(format!("label must be `good` or `bad`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One dataset record. Field order here is the on-disk order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub id: String,
    pub cwe: SinkKind,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    pub project: String,
    pub file: String,
    pub line: usize,
    pub taint_var: String,
    pub synthetic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl Sample {
    pub fn validate(&self) -> Result<(), String> {
        if self.line < 1 {
            return Err(format!("sample `{}`: line must be at least 1", self.id));
        }
        if self.synthetic && self.origin.is_none() {
            return Err(format!(
                "sample `{}`: synthetic sample without origin",
                self.id
            ));
        }
        crate::php::syntax_check(&self.code)
            .map_err(|e| format!("sample `{}`: code does not parse: {e}", self.id))
    }

    /// Lines of code, counting non-empty lines.
    pub fn loc(&self) -> usize {
        self.code.lines().filter(|l| !l.trim().is_empty()).count()
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("split ratios {0}")]
    Ratios(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn to_jsonl(samples: &[Sample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s).expect("sample serializes"));
        out.push('\n');
    }
    out
}

pub fn persist(samples: &[Sample], path: &Path) -> Result<(), DatasetError> {
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(to_jsonl(samples).as_bytes())
        .map_err(io_err(path))
}

/// Load and validate a JSON-lines file. Blank lines are skipped.
pub fn load(path: &Path) -> Result<Vec<Sample>, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = |message: String| DatasetError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let sample: Sample = serde_json::from_str(&line).map_err(|e| record(e.to_string()))?;
        sample.validate().map_err(record)?;
        out.push(sample);
    }
    Ok(out)
}

/// Parse an `id<TAB>label` file; `#` comments and blank lines are ignored.
pub fn parse_labels(text: &str) -> Result<BTreeMap<String, Label>, (usize, String)> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (id, label) = line
            .rsplit_once('\t')
            .ok_or_else(|| (i + 1, "expected `id<TAB>label`".to_string()))?;
        let label: Label = label.parse().map_err(|e| (i + 1, e))?;
        out.insert(id.to_string(), label);
    }
    Ok(out)
}

/// Attach labels by id; returns the ids in `labels` that matched nothing.
pub fn apply_labels(samples: &mut [Sample], labels: &BTreeMap<String, Label>) -> Vec<String> {
    let mut used = BTreeSet::new();
    for s in samples.iter_mut() {
        if let Some(l) = labels.get(&s.id) {
            s.label = Some(*l);
            used.insert(s.id.clone());
        }
    }
    labels
        .keys()
        .filter(|k| !used.contains(*k))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ratios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for Ratios {
    fn default() -> Self {
        Ratios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl Ratios {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(DatasetError::Ratios(format!(
                "must all be positive, got {self}"
            )));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Ratios(format!("must sum to 1, got {self}")));
        }
        Ok(())
    }

    pub fn get(&self, split: Split) -> f64 {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

impl fmt::Display for Ratios {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.train, self.val, self.test)
    }
}

impl FromStr for Ratios {
    type Err = DatasetError;

    /// `train,val,test`, e.g. `0.8,0.1,0.1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| DatasetError::Ratios(format!("`{s}`: {e}")))?;
        let [train, val, test] = parts[..] else {
            return Err(DatasetError::Ratios(format!(
                "`{s}`: expected three values"
            )));
        };
        let r = Ratios { train, val, test };
        r.validate()?;
        Ok(r)
    }
}

/// Split sizes for `n` items: floor allocation, remainder to train.
pub fn split_sizes(n: usize, ratios: &Ratios) -> [usize; 3] {
    if n < 3 {
        return [n, 0, 0];
    }
    let val = (n as f64 * ratios.val).floor() as usize;
    let test = (n as f64 * ratios.test).floor() as usize;
    [n - val - test, val, test]
}

/// Seeded shuffle, then contiguous train/val/test partition. The returned
/// samples keep their input order.
pub fn split_random(
    samples: &[Sample],
    ratios: &Ratios,
    seed: u64,
) -> Result<Vec<Sample>, DatasetError> {
    ratios.validate()?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let [train, val, _] = split_sizes(samples.len(), ratios);
    let mut out = samples.to_vec();
    for (rank, &i) in order.iter().enumerate() {
        out[i].split = Some(if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Origin sample sits in a test project.
    OriginInTest,
    /// Train-bound sample whose origin sits in a validation project.
    OriginInVal,
    /// Origin id does not name any real sample.
    UnknownOrigin,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::OriginInTest => "origin in test project",
            DropReason::OriginInVal => "origin in val project",
            DropReason::UnknownOrigin => "unknown origin",
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct ProjectSplit {
    /// Kept samples (real first, then synthetic), each with `split` set.
    pub samples: Vec<Sample>,
    pub projects: BTreeMap<String, Split>,
    pub dropped: Vec<(String, DropReason)>,
    pub warnings: Vec<String>,
}

impl ProjectSplit {
    pub fn drop_counts(&self) -> BTreeMap<DropReason, usize> {
        let mut out = BTreeMap::new();
        for (_, r) in &self.dropped {
            *out.entry(*r).or_insert(0) += 1;
        }
        out
    }
}

/// Project-disjoint split. Projects are assigned whole, largest first, to
/// the split furthest below its target mass; once train has a project and
/// only as many projects remain as there are still-empty splits, they fill
/// those. A synthetic
/// sample goes to its host project's split and is dropped when its origin
/// would leak evaluation data into training: origins in test projects may
/// only feed test, origins in val projects may not feed train.
pub fn split_project_disjoint(
    real: &[Sample],
    syn: &[Sample],
    ratios: &Ratios,
    seed: u64,
) -> Result<ProjectSplit, DatasetError> {
    ratios.validate()?;
    let mut real_mass: BTreeMap<&str, usize> = BTreeMap::new();
    let mut syn_mass: BTreeMap<&str, usize> = BTreeMap::new();
    for s in real {
        *real_mass.entry(&s.project).or_insert(0) += 1;
    }
    for s in syn {
        *syn_mass.entry(&s.project).or_insert(0) += 1;
    }
    let mut projects: Vec<(&str, usize)> = real_mass.iter().map(|(p, m)| (*p, *m)).collect();
    projects.extend(
        syn_mass
            .iter()
            .filter(|(p, _)| !real_mass.contains_key(*p))
            .map(|(p, m)| (*p, *m)),
    );
    // Seeded tie-break among equal masses.
    projects.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    projects.sort_by(|a, b| b.1.cmp(&a.1));

    let total: usize = projects.iter().map(|p| p.1).sum();
    let mut mass = [0usize; 3];
    let mut count = [0usize; 3];
    let mut assignment = BTreeMap::new();
    for (i, (project, m)) in projects.iter().enumerate() {
        let remaining = projects.len() - i;
        let empty: Vec<usize> = (1..3).filter(|&k| count[k] == 0).collect();
        let deficit = |k: usize| ratios.get(Split::ALL[k]) * total as f64 - mass[k] as f64;
        let pick = |cands: &[usize]| {
            let mut best = cands[0];
            for &k in &cands[1..] {
                if deficit(k) > deficit(best) {
                    best = k;
                }
            }
            best
        };
        let k = if count[0] > 0 && !empty.is_empty() && remaining <= empty.len() {
            pick(&empty)
        } else {
            pick(&[0, 1, 2])
        };
        mass[k] += m;
        count[k] += 1;
        assignment.insert(project.to_string(), Split::ALL[k]);
    }

    let mut out = ProjectSplit {
        projects: assignment,
        ..ProjectSplit::default()
    };
    for split in [Split::Val, Split::Test] {
        if !out.projects.values().any(|s| *s == split) {
            out.warnings.push(format!(
                "{split} split is empty: {} project(s) cannot fill three splits",
                out.projects.len()
            ));
        }
    }

    let real_project: BTreeMap<&str, &str> = real
        .iter()
        .map(|s| (s.id.as_str(), s.project.as_str()))
        .collect();
    for s in real {
        let mut s = s.clone();
        s.split = Some(out.projects[&s.project]);
        out.samples.push(s);
    }
    for s in syn {
        let split = out.projects[&s.project];
        let origin_split = s
            .origin
            .as_deref()
            .and_then(|o| real_project.get(o))
            .map(|p| out.projects[*p]);
        let verdict = match (split, origin_split) {
            (_, None) => Err(DropReason::UnknownOrigin),
            (Split::Test, Some(_)) => Ok(()),
            (_, Some(Split::Test)) => Err(DropReason::OriginInTest),
            (Split::Train, Some(Split::Val)) => Err(DropReason::OriginInVal),
            _ => Ok(()),
        };
        match verdict {
            Ok(()) => {
                let mut s = s.clone();
                s.split = Some(split);
                out.samples.push(s);
            }
            Err(reason) => out.dropped.push((s.id.clone(), reason)),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CweStats {
    pub cwe: SinkKind,
    pub total: usize,
    pub vuln: usize,
    pub projects: usize,
    pub synthetic_fraction: f64,
    pub mean_loc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub per_cwe: Vec<CweStats>,
}

pub fn stats(samples: &[Sample]) -> DatasetStats {
    let per_cwe = SinkKind::ALL
        .iter()
        .map(|&cwe| {
            let rows: Vec<&Sample> = samples.iter().filter(|s| s.cwe == cwe).collect();
            let total = rows.len();
            let ratio = |n: usize| {
                if total == 0 {
                    0.0
                } else {
                    n as f64 / total as f64
                }
            };
            CweStats {
                cwe,
                total,
                vuln: rows.iter().filter(|s| s.label == Some(Label::Bad)).count(),
                projects: rows
                    .iter()
                    .map(|s| &s.project)
                    .collect::<BTreeSet<_>>()
                    .len(),
                synthetic_fraction: ratio(rows.iter().filter(|s| s.synthetic).count()),
                mean_loc: ratio(rows.iter().map(|s| s.loc()).sum()),
            }
        })
        .collect();
    DatasetStats { per_cwe }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:>8} {:>8} {:>9} {:>10} {:>9}",
            "CWE", "Total", "Vuln", "Projects", "Synthetic", "Mean LoC"
        )?;
        for r in &self.per_cwe {
            writeln!(
                f,
                "{:<8} {:>8} {:>8} {:>9} {:>10.4} {:>9.2}",
                r.cwe.as_str(),
                r.total,
                r.vuln,
                r.projects,
                r.synthetic_fraction,
                r.mean_loc
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample(id: &str, project: &str) -> Sample {
        Sample {
            id: id.to_string(),
            cwe: SinkKind::Cwe79,
            code: "<?php\necho $a; /* taint: $a */".to_string(),
            label: Some(Label::Good),
            project: project.to_string(),
            file: "a.php".to_string(),
            line: 2,
            taint_var: "a".to_string(),
            synthetic: false,
            origin: None,
            split: None,
        }
    }

    fn synthetic(id: &str, host: &str, origin: &str) -> Sample {
        Sample {
            synthetic: true,
            origin: Some(origin.to_string()),
            ..sample(id, host)
        }
    }

    #[test]
    fn jsonl_round_trip_and_field_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let mut xs = vec![sample("a", "P"), sample("b", "P"), synthetic("c", "Q", "a")];
        xs[1].label = None;
        xs[2].split = Some(Split::Val);
        persist(&xs, &path).unwrap();
        assert_eq!(load(&path).unwrap(), xs);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(r#"{"id":"a","cwe":"CWE-79","code":"#));
        assert!(!text.lines().nth(1).unwrap().contains("label"));

        persist(&[], &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "");
        assert!(load(&path).unwrap().is_empty());
    }

    #[test]
    fn bad_records_name_their_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let good = serde_json::to_string(&sample("a", "P")).unwrap();
        let bad = good.replace("\"good\"", "\"maybe\"");
        fs::write(&path, format!("{good}\n{bad}\n")).unwrap();
        let err = load(&path).unwrap_err().to_string();
        assert!(err.contains("s.jsonl:2:"), "{err}");

        let orphan = serde_json::to_string(&Sample {
            synthetic: true,
            ..sample("a", "P")
        })
        .unwrap();
        fs::write(&path, orphan).unwrap();
        assert!(load(&path)
            .unwrap_err()
            .to_string()
            .contains("without origin"));
    }

    #[test]
    fn labels_file() {
        let labels = parse_labels("# c\na:1\tbad\n\nb\tgood\n").unwrap();
        assert_eq!(labels["a:1"], Label::Bad);
        assert_eq!(parse_labels("a\tmaybe").unwrap_err().0, 1);
        let mut xs = vec![sample("a:1", "P")];
        assert_eq!(apply_labels(&mut xs, &labels), ["b"]);
        assert_eq!(xs[0].label, Some(Label::Bad));
    }

    #[test]
    fn random_split_sizes() {
        let xs: Vec<Sample> = (0..10).map(|i| sample(&i.to_string(), "P")).collect();
        let out = split_random(&xs, &Ratios::default(), 3).unwrap();
        let count = |s| out.iter().filter(|x| x.split == Some(s)).count();
        assert_eq!(
            [count(Split::Train), count(Split::Val), count(Split::Test)],
            [8, 1, 1]
        );
        assert_eq!(out, split_random(&xs, &Ratios::default(), 3).unwrap());
        let two = split_random(&xs[..2], &Ratios::default(), 3).unwrap();
        assert!(two.iter().all(|x| x.split == Some(Split::Train)));
    }

    #[test]
    fn seeds_matter() {
        let xs: Vec<Sample> = (0..100).map(|i| sample(&i.to_string(), "P")).collect();
        let a = split_random(&xs, &Ratios::default(), 0).unwrap();
        let b = split_random(&xs, &Ratios::default(), 1).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| x.split != y.split));
    }

    #[test]
    fn ratios_parse() {
        assert_eq!("0.7, 0.2,0.1".parse::<Ratios>().unwrap().val, 0.2);
        assert!("0.5,0.5,0.5".parse::<Ratios>().is_err());
        assert!("1,0,0".parse::<Ratios>().is_err());
        assert!("0.5,0.5".parse::<Ratios>().is_err());
    }

    #[test]
    fn three_projects_three_splits() {
        let real: Vec<Sample> = ["P1", "P2", "P3"]
            .iter()
            .flat_map(|p| (0..4).map(move |i| sample(&format!("{p}:{i}"), p)))
            .collect();
        let out = split_project_disjoint(&real, &[], &Ratios::default(), 9).unwrap();
        let splits: BTreeSet<Split> = out.projects.values().copied().collect();
        assert_eq!(splits.len(), 3);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn provenance_drops() {
        let real: Vec<Sample> = ["P1", "P2", "P3"]
            .iter()
            .flat_map(|p| (0..4).map(move |i| sample(&format!("{p}:{i}"), p)))
            .collect();
        let base = split_project_disjoint(&real, &[], &Ratios::default(), 1).unwrap();
        let of = |s: Split| {
            base.projects
                .iter()
                .find(|(_, v)| **v == s)
                .unwrap()
                .0
                .clone()
        };
        let (tr, va, te) = (of(Split::Train), of(Split::Val), of(Split::Test));
        let syn = vec![
            synthetic("s1", &tr, &format!("{te}:0")),
            synthetic("s2", &tr, &format!("{va}:0")),
            synthetic("s3", &va, &format!("{te}:1")),
            synthetic("s4", &va, &format!("{tr}:1")),
            synthetic("s5", &te, &format!("{tr}:2")),
            synthetic("s6", &tr, "nowhere"),
        ];
        let out = split_project_disjoint(&real, &syn, &Ratios::default(), 1).unwrap();
        assert_eq!(out.projects, base.projects);
        let kept: Vec<&str> = out
            .samples
            .iter()
            .filter(|s| s.synthetic)
            .map(|s| s.id.as_str())
            .collect();
        assert_eq!(kept, ["s4", "s5"]);
        let counts = out.drop_counts();
        assert_eq!(counts[&DropReason::OriginInTest], 2);
        assert_eq!(counts[&DropReason::OriginInVal], 1);
        assert_eq!(counts[&DropReason::UnknownOrigin], 1);
    }

    #[test]
    fn single_project_goes_to_train() {
        let real = vec![sample("a", "P"), sample("b", "P")];
        let out = split_project_disjoint(&real, &[], &Ratios::default(), 0).unwrap();
        assert!(out.samples.iter().all(|s| s.split == Some(Split::Train)));
        assert_eq!(out.warnings.len(), 2);
    }

    #[test]
    fn stats_count() {
        let mut xs = vec![sample("a", "P"), sample("b", "P"), sample("c", "Q")];
        xs[0].label = Some(Label::Bad);
        let st = stats(&xs);
        assert_eq!(
            (
                st.per_cwe[0].total,
                st.per_cwe[0].vuln,
                st.per_cwe[0].projects
            ),
            (3, 1, 2)
        );
        assert_eq!(st.per_cwe[1].total, 0);
        let empty = stats(&[]);
        assert!(empty
            .per_cwe
            .iter()
            .all(|r| r.total == 0 && r.mean_loc == 0.0));
        assert!(st.to_string().contains("CWE-79"));
    }
}
