//! File- and project-level drivers: extraction of labeled-to-be samples and
//! vulnerability scans.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;
use walkdir::WalkDir;

use crate::classify::{classify_remote, classify_rule, ClassifyError, EndpointConfig};
use crate::dataset::{Label, Sample};
use crate::normalize::{normalize_with, NormalizeConfig};
use crate::php::{self, line_of, Program};
use crate::sinks::{find_sinks_with, taint_candidates, SinkKind, SinkRules};
use crate::slicer::{slice_with, SliceOptions};
use crate::synth::{hosts_from_program, HostUnit};

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub cwe: SinkKind,
    pub rules: SinkRules,
    pub normalize: NormalizeConfig,
}

impl PipelineOptions {
    pub fn new(cwe: SinkKind) -> Self {
        PipelineOptions {
            cwe,
            rules: SinkRules::default(),
            normalize: NormalizeConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{}: {source}", path.display())]
    Root {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Skipped {
    pub file: String,
    pub reason: String,
}

/// Samples of one source text, plus the number of candidates whose slice
/// or normalization failed. Ids are `{project}:{file}:{line}:{var}`, with
/// `#2`, `#3`, ... appended to repeats.
pub fn extract_source(
    text: &str,
    project: &str,
    file: &str,
    opts: &PipelineOptions,
) -> Result<(Vec<Sample>, usize), php::ParseError> {
    let program = php::parse(text)?;
    Ok(extract_program(&program, text, project, file, opts))
}

fn extract_program(
    program: &Program,
    text: &str,
    project: &str,
    file: &str,
    opts: &PipelineOptions,
) -> (Vec<Sample>, usize) {
    let slice_opts = SliceOptions {
        rules: opts.rules.clone(),
        ..SliceOptions::default()
    };
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = Vec::new();
    let mut failed = 0;
    for site in find_sinks_with(program, opts.cwe, &opts.rules) {
        let line = line_of(text, site.span.start);
        for cand in taint_candidates(&site) {
            let snippet = slice_with(program, &cand, &slice_opts)
                .ok()
                .and_then(|s| normalize_with(&s, &opts.normalize, &opts.rules).ok());
            let Some(snippet) = snippet else {
                failed += 1;
                continue;
            };
            let base = format!("{project}:{file}:{line}:{}", cand.var);
            let n = seen.entry(base.clone()).or_insert(0);
            *n += 1;
            let id = if *n == 1 { base } else { format!("{base}#{n}") };
            out.push(Sample {
                id,
                cwe: opts.cwe,
                code: snippet.code,
                label: None,
                project: project.to_string(),
                file: file.to_string(),
                line,
                taint_var: snippet.taint_var,
                synthetic: false,
                origin: None,
                split: None,
            });
        }
    }
    (out, failed)
}

/// `.php` files under `root`, as (absolute path, `/`-separated relative
/// path), sorted.
pub fn php_files(root: &Path) -> Result<Vec<(PathBuf, String)>, PipelineError> {
    fs::read_dir(root).map_err(|source| PipelineError::Root {
        path: root.to_path_buf(),
        source,
    })?;
    let mut out: Vec<(PathBuf, String)> = WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .filter(|e| {
            e.path()
                .extension()
                .is_some_and(|x| x.eq_ignore_ascii_case("php"))
        })
        .map(|e| {
            let rel = e
                .path()
                .strip_prefix(root)
                .unwrap_or(e.path())
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            (e.path().to_path_buf(), rel)
        })
        .collect();
    out.sort_by(|a, b| a.1.cmp(&b.1));
    Ok(out)
}

/// Name of a project directory: its last path component.
pub fn project_name(root: &Path) -> String {
    root.canonicalize()
        .ok()
        .as_deref()
        .unwrap_or(root)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "project".to_string())
}

/// Project directories: `root` itself, or each subdirectory of it.
pub fn project_dirs(
    root: &Path,
    projects_root: bool,
) -> Result<Vec<(String, PathBuf)>, PipelineError> {
    if !projects_root {
        return Ok(vec![(project_name(root), root.to_path_buf())]);
    }
    let entries = fs::read_dir(root).map_err(|source| PipelineError::Root {
        path: root.to_path_buf(),
        source,
    })?;
    let mut out: Vec<(String, PathBuf)> = entries
        .filter_map(Result::ok)
        .filter(|e| e.path().is_dir())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .collect();
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub samples: Vec<Sample>,
    pub skipped: Vec<Skipped>,
    /// Candidates whose slice or normalization failed the invariant.
    pub discarded: usize,
    pub files: usize,
}

pub fn extract_project(
    root: &Path,
    project: &str,
    opts: &PipelineOptions,
) -> Result<Extraction, PipelineError> {
    let files = php_files(root)?;
    let results: Vec<Result<(Vec<Sample>, usize), Skipped>> = files
        .par_iter()
        .map(|(path, rel)| {
            let skip = |reason: String| Skipped {
                file: rel.clone(),
                reason,
            };
            let text = fs::read_to_string(path).map_err(|e| skip(e.to_string()))?;
            extract_source(&text, project, rel, opts).map_err(|e| skip(e.to_string()))
        })
        .collect();
    let mut out = Extraction {
        files: files.len(),
        ..Extraction::default()
    };
    for r in results {
        match r {
            Ok((samples, failed)) => {
                out.samples.extend(samples);
                out.discarded += failed;
            }
            Err(s) => out.skipped.push(s),
        }
    }
    Ok(out)
}

/// Synthesis hosts from every parsable file of a project.
pub fn project_hosts(
    root: &Path,
    project: &str,
) -> Result<(Vec<HostUnit>, Vec<Skipped>), PipelineError> {
    let mut hosts = Vec::new();
    let mut skipped = Vec::new();
    for (path, rel) in php_files(root)? {
        let parsed = fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|t| php::parse(&t).map_err(|e| e.to_string()));
        match parsed {
            Ok(p) => hosts.extend(hosts_from_program(&p, project, &rel)),
            Err(reason) => skipped.push(Skipped { file: rel, reason }),
        }
    }
    Ok((hosts, skipped))
}

#[derive(Debug, Clone)]
pub enum Classifier {
    Rule,
    Remote(EndpointConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub file: String,
    pub line: usize,
    /// Variable name as written in the source.
    pub taint_var: String,
    pub label: Label,
    pub score: f64,
    pub sample_id: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ScanReport {
    pub cwe: Option<SinkKind>,
    /// Every classified candidate, by file then line.
    pub findings: Vec<Finding>,
    pub skipped: Vec<Skipped>,
    pub discarded: usize,
}

impl ScanReport {
    pub fn bad(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.label == Label::Bad)
    }
}

impl fmt::Display for ScanReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<40} {:>6} {:<16} {:<5} {:>6}",
            "File", "Line", "Variable", "Label", "Score"
        )?;
        for x in &self.findings {
            writeln!(
                f,
                "{:<40} {:>6} {:<16} {:<5} {:>6.2}",
                x.file,
                x.line,
                format!("${}", x.taint_var),
                x.label.as_str(),
                x.score
            )?;
        }
        writeln!(
            f,
            "{} candidate(s), {} bad, {} discarded, {} file(s) skipped",
            self.findings.len(),
            self.bad().count(),
            self.discarded,
            self.skipped.len()
        )?;
        for s in &self.skipped {
            writeln!(f, "skipped {}: {}", s.file, s.reason)?;
        }
        Ok(())
    }
}

/// Extract every candidate under `root` and classify it. Unparsable files
/// are listed as skipped.
pub fn scan_project(
    root: &Path,
    opts: &PipelineOptions,
    classifier: &Classifier,
) -> Result<ScanReport, PipelineError> {
    let project = project_name(root);
    let ex = extract_project(root, &project, opts)?;
    let preds = match classifier {
        Classifier::Rule => classify_rule(&ex.samples, &opts.rules),
        Classifier::Remote(cfg) => classify_remote(&ex.samples, cfg)?,
    };
    let mut findings: Vec<Finding> = ex
        .samples
        .iter()
        .zip(preds)
        .map(|(s, p)| Finding {
            file: s.file.clone(),
            line: s.line,
            taint_var: source_var(&s.id),
            label: p.label,
            score: p.score,
            sample_id: s.id.clone(),
        })
        .collect();
    findings.sort_by(|a, b| (&a.file, a.line, &a.sample_id).cmp(&(&b.file, b.line, &b.sample_id)));
    Ok(ScanReport {
        cwe: Some(opts.cwe),
        findings,
        skipped: ex.skipped,
        discarded: ex.discarded,
    })
}

/// The `{var}` part of an extraction id.
fn source_var(id: &str) -> String {
    let last = id.rsplit(':').next().unwrap_or(id);
    last.split('#').next().unwrap_or(last).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_and_lines() {
        let text = "<?php\n$a = $_GET['a'];\necho $a . $b;\necho $a;\n";
        let (samples, failed) =
            extract_source(text, "P", "x.php", &PipelineOptions::new(SinkKind::Cwe79)).unwrap();
        let ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["P:x.php:3:a", "P:x.php:3:b", "P:x.php:4:a"]);
        assert_eq!(failed, 0);
        assert_eq!(
            samples[0].code,
            "<?php\n$var0 = $_GET['a'];\necho $var0 . 'x'; /* taint: $var0 */"
        );
        assert_eq!(
            samples[1].code,
            "<?php\necho 'x' . $var0; /* taint: $var0 */"
        );
    }

    #[test]
    fn repeated_ids_get_suffixes() {
        let text = "<?php echo $a; echo $a;";
        let (samples, _) =
            extract_source(text, "P", "x.php", &PipelineOptions::new(SinkKind::Cwe79)).unwrap();
        let ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["P:x.php:1:a", "P:x.php:1:a#2"]);
        assert_eq!(source_var(ids[1]), "a");
    }

    #[test]
    fn scan_isolates_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("a.php"),
            "<?php\n$u = $_GET['u'];\necho $u;\n",
        )
        .unwrap();
        fs::write(dir.path().join("b.php"), "<?php\nclass X {}\n").unwrap();
        fs::write(dir.path().join("c.txt"), "echo $u;").unwrap();
        let report = scan_project(
            dir.path(),
            &PipelineOptions::new(SinkKind::Cwe79),
            &Classifier::Rule,
        )
        .unwrap();
        assert_eq!(report.findings.len(), 1);
        assert_eq!(
            (report.findings[0].line, report.findings[0].label),
            (3, Label::Bad)
        );
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].file, "b.php");

        assert!(scan_project(
            &dir.path().join("missing"),
            &PipelineOptions::new(SinkKind::Cwe79),
            &Classifier::Rule
        )
        .is_err());
    }
}
