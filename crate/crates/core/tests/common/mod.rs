#![allow(dead_code)]

pub mod gen;

use std::fs;
use std::path::{Path, PathBuf};

use phpvul::dataset::{Label, Sample};
use phpvul::pipeline::{extract_source, PipelineOptions};
use phpvul::sinks::{SinkKind, SinkRules};
use phpvul::slicer::{verify_snippet, Origin, Snippet};

pub const CORPUS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/corpus");

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

/// (file name, contents) of every corpus file, sorted by name.
pub fn corpus_files() -> Vec<(String, String)> {
    let mut out: Vec<_> = fs::read_dir(CORPUS)
        .expect("corpus dir")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "php"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read_to_string(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

pub struct Case {
    pub file: String,
    pub cwe: SinkKind,
    pub label: Label,
    /// `direct`, `sanitized`, `constant` or `indirect`.
    pub flow: String,
    pub sample: Sample,
}

/// The labeled fixture programs, each extracted to its single snippet.
pub fn labeled_cases() -> Vec<Case> {
    let dir = fixture("labeled");
    let table = fs::read_to_string(dir.join("cases.tsv")).unwrap();
    let mut out = Vec::new();
    for line in table
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
    {
        let cols: Vec<&str> = line.split('\t').collect();
        let [file, cwe, label, flow] = cols[..] else {
            panic!("bad row {line}")
        };
        let cwe: SinkKind = cwe.parse().unwrap();
        let text = fs::read_to_string(dir.join("src").join(file)).unwrap();
        let (mut samples, failed) =
            extract_source(&text, "labeled", file, &PipelineOptions::new(cwe)).unwrap();
        assert_eq!((samples.len(), failed), (1, 0), "{file}: {samples:#?}");
        let mut sample = samples.pop().unwrap();
        let label: Label = label.parse().unwrap();
        sample.label = Some(label);
        out.push(Case {
            file: file.into(),
            cwe,
            label,
            flow: flow.into(),
            sample,
        });
    }
    out
}

/// Every snippet extracted from the parser corpus, for both CWEs.
pub fn corpus_snippets() -> Vec<Sample> {
    let mut out = Vec::new();
    for (name, text) in corpus_files() {
        for cwe in SinkKind::ALL {
            let (samples, _) =
                extract_source(&text, "corpus", &name, &PipelineOptions::new(cwe)).unwrap();
            out.extend(samples);
        }
    }
    out
}

/// Rebuild the slicer-side view of a snippet's code.
pub fn snippet_of(code: &str, cwe: SinkKind) -> Snippet {
    let v =
        verify_snippet(code, cwe, &SinkRules::default()).unwrap_or_else(|e| panic!("{e}\n{code}"));
    Snippet {
        code: code.to_string(),
        cwe,
        taint_var: v.taint_var,
        sink_line: v.sink_line,
        origin: Origin::default(),
        from_function: None,
        slice_empty: false,
        rewrites: Vec::new(),
    }
}

/// Un-normalized snippets: the corpus and the labeled programs, both CWEs.
pub fn raw_snippets() -> Vec<Snippet> {
    let mut sources: Vec<(String, String)> = corpus_files();
    for entry in fs::read_dir(fixture("labeled/src")).unwrap() {
        let p = entry.unwrap().path();
        sources.push((p.display().to_string(), fs::read_to_string(&p).unwrap()));
    }
    sources.sort();
    let mut out = Vec::new();
    for (name, text) in sources {
        for cwe in SinkKind::ALL {
            let mut opts = PipelineOptions::new(cwe);
            opts.normalize.enabled = false;
            let (samples, _) = extract_source(&text, "fx", &name, &opts).unwrap();
            out.extend(samples.iter().map(|s| snippet_of(&s.code, cwe)));
        }
    }
    out
}
