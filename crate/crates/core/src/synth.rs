//! Semi-synthetic sample generation: a labeled pure sample is woven into one
//! execution path of clean host code, then sliced and normalized again.
//!
//! For every (raw sample, host, round) triple:
//!
//! 1. draw a seeded control-flow path through the host and flatten it into
//!    straight-line code (loop and branch headers dropped, `for` initializers
//!    kept as plain statements);
//! 2. delete host statements that are sinks of the sample's kind;
//! 3. rename host variables that share a name with a sample variable;
//! 4. insert the sample's top-level statements at random cut points,
//!    keeping their relative order;
//! 5. re-parse, slice from the sample's sink and normalize.
//!
//! Rounds that fail to parse or to produce a valid snippet are counted and
//! dropped.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{Label, Sample};
use crate::flow::{build_cfg_stmts, random_path_capped, stmt_def_use, DEFAULT_MAX_PATH_BLOCKS};
use crate::normalize::{normalize_with, NormalizeConfig};
use crate::php::{self, emit_program_marked, emit_statement, Node, NodeId, NodeKind, Program};
use crate::sinks::{find_sinks_with, SinkKind, SinkRules, TaintCandidate};
use crate::slicer::{slice_with, taint_marker, verify_snippet, SliceOptions};

/// A labeled snippet used as insertion material.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSample {
    pub code: String,
    pub label: Label,
    pub cwe: SinkKind,
    pub id: String,
}

impl RawSample {
    /// `None` for unlabeled samples.
    pub fn from_sample(s: &Sample) -> Option<RawSample> {
        Some(RawSample {
            code: s.code.clone(),
            label: s.label?,
            cwe: s.cwe,
            id: s.id.clone(),
        })
    }
}

/// Host code: a function body or a file's top-level code, without the
/// opening `<?php` tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostUnit {
    pub code: String,
    pub project: String,
    pub file: String,
    pub id: String,
}

impl HostUnit {
    pub fn program(&self) -> Result<Program, php::ParseError> {
        php::parse(&format!("<?php\n{}", self.code))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    /// Rounds per (sample, host) pair.
    pub rounds: usize,
    pub seed: u64,
    pub max_path_blocks: usize,
    /// Only use samples with at most [`MAX_SIMPLE_DF_EDGES`] data-flow
    /// edges and [`MAX_SIMPLE_BRANCHES`] branch statements.
    pub select_simple: bool,
}

pub const MAX_SIMPLE_DF_EDGES: usize = 8;
pub const MAX_SIMPLE_BRANCHES: usize = 2;

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rounds: 1,
            seed: 0,
            max_path_blocks: DEFAULT_MAX_PATH_BLOCKS,
            select_simple: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.rounds < 1 {
            return Err("synth.rounds must be at least 1".into());
        }
        if self.max_path_blocks < 1 {
            return Err("synth.max_path_blocks must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynthReport {
    /// Raw samples left out by `select_simple` or because they are invalid.
    pub raw_skipped: usize,
    pub attempts: usize,
    pub passes: usize,
    pub syntax_failures: usize,
    pub sink_failures: usize,
}

impl SynthReport {
    pub fn discards(&self) -> usize {
        self.syntax_failures + self.sink_failures
    }
}

impl fmt::Display for SynthReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "raw skipped:      {}", self.raw_skipped)?;
        writeln!(f, "attempts:         {}", self.attempts)?;
        writeln!(f, "passes:           {}", self.passes)?;
        writeln!(f, "syntax failures:  {}", self.syntax_failures)?;
        writeln!(f, "sink failures:    {}", self.sink_failures)
    }
}

/// Count (def, use) pairs along the statement order, where the use is
/// reached by that def, and branch statements.
pub fn complexity(program: &Program) -> (usize, usize) {
    let stmts = program.all_statements();
    let mut last_def: HashMap<String, usize> = HashMap::new();
    let mut edges = 0;
    let mut branches = 0;
    for (i, s) in stmts.iter().enumerate() {
        if matches!(
            s.kind,
            NodeKind::If | NodeKind::While | NodeKind::For { .. } | NodeKind::Foreach { .. }
        ) {
            branches += 1;
        }
        let du = stmt_def_use(s);
        edges += du
            .uses
            .iter()
            .filter(|u| last_def.get(*u).is_some_and(|d| *d != i))
            .count();
        for d in du.defs {
            last_def.insert(d, i);
        }
    }
    (edges, branches)
}

pub fn is_simple(raw: &RawSample) -> bool {
    match php::parse(&raw.code) {
        Ok(p) => {
            let (edges, branches) = complexity(&p);
            edges <= MAX_SIMPLE_DF_EDGES && branches <= MAX_SIMPLE_BRANCHES
        }
        Err(_) => false,
    }
}

/// Delete every statement (at any depth) that is a sink of `kind`.
pub fn remove_triggers(program: &Program, kind: SinkKind, rules: &SinkRules) -> Program {
    let sinks: BTreeSet<NodeId> = find_sinks_with(program, kind, rules)
        .iter()
        .map(|s| s.stmt_id)
        .collect();
    fn prune(node: &mut Node, sinks: &BTreeSet<NodeId>) {
        node.children.retain(|c| !sinks.contains(&c.id));
        for c in &mut node.children {
            prune(c, sinks);
        }
    }
    let mut root = program.root.clone();
    prune(&mut root, &sinks);
    Program { root }
}

pub fn remove_vuln_triggers(
    host: &HostUnit,
    kind: SinkKind,
    rules: &SinkRules,
) -> Result<HostUnit, php::ParseError> {
    let cleaned = remove_triggers(&host.program()?, kind, rules);
    Ok(HostUnit {
        code: body_text(cleaned.statements()),
        ..host.clone()
    })
}

fn body_text(stmts: &[Node]) -> String {
    stmts
        .iter()
        .map(emit_statement)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Top-level statements of a snippet as canonical text; the statement
/// holding the sink keeps its taint marker.
pub fn split_top_level(raw: &RawSample, rules: &SinkRules) -> Result<Vec<String>, String> {
    let program = php::parse(&raw.code).map_err(|e| e.to_string())?;
    let sink = verify_snippet(&raw.code, raw.cwe, rules)?;
    let marker = taint_marker(&sink.taint_var);
    Ok(program
        .statements()
        .iter()
        .map(|stmt| {
            if stmt.find(sink.stmt_id).is_some() {
                let single =
                    Program::from_statements_keep_ids(vec![stmt.clone()], program.max_id() + 1);
                let text = emit_program_marked(&single, sink.stmt_id, &marker);
                text.trim_start_matches("<?php\n").to_string()
            } else {
                emit_statement(stmt)
            }
        })
        .collect())
}

/// Flatten one path through `stmts` into straight-line statements.
pub fn linearize(stmts: &[Node], seed: u64, max_blocks: usize) -> Vec<Node> {
    let cfg = build_cfg_stmts(stmts);
    let path = random_path_capped(&cfg, seed, max_blocks);
    let index: HashMap<NodeId, &Node> = stmts
        .iter()
        .flat_map(|s| s.walk())
        .map(|n| (n.id, n))
        .collect();
    let mut seen_for = BTreeSet::new();
    let mut out = Vec::new();
    for &b in &path.blocks {
        for id in &cfg.blocks[b].stmts {
            let Some(node) = index.get(id) else { continue };
            match &node.kind {
                NodeKind::ExprStmt | NodeKind::EchoStmt | NodeKind::GlobalDecl => {
                    out.push((*node).clone())
                }
                NodeKind::For { init, .. } if seen_for.insert(node.id) => {
                    for e in &node.children[..*init] {
                        out.push(Node::new(NodeKind::ExprStmt, vec![e.clone()]));
                    }
                }
                _ => {}
            }
        }
    }
    out
}

fn variable_names(node: &Node, out: &mut BTreeSet<String>) {
    for n in node.walk() {
        if let NodeKind::Variable(name) | NodeKind::Param(name) = &n.kind {
            out.insert(name.clone());
        }
    }
}

/// Rename host variables that collide with `taken` to `{name}_h`,
/// `{name}_h2`, ...
pub fn avoid_capture(host: &mut [Node], taken: &BTreeSet<String>) {
    let mut used = taken.clone();
    for s in host.iter() {
        variable_names(s, &mut used);
    }
    let mut host_names = BTreeSet::new();
    for s in host.iter() {
        variable_names(s, &mut host_names);
    }
    let mut map = HashMap::new();
    for name in host_names.intersection(taken) {
        let mut n = 1;
        let fresh = loop {
            let cand = if n == 1 {
                format!("{name}_h")
            } else {
                format!("{name}_h{n}")
            };
            if !used.contains(&cand) {
                break cand;
            }
            n += 1;
        };
        used.insert(fresh.clone());
        map.insert(name.clone(), fresh);
    }
    fn apply(node: &mut Node, map: &HashMap<String, String>) {
        if let NodeKind::Variable(n) = &mut node.kind {
            if let Some(to) = map.get(n.as_str()) {
                *n = to.clone();
            }
        }
        for c in &mut node.children {
            apply(c, map);
        }
    }
    for s in host {
        apply(s, &map);
    }
}

/// Insert `raw` into `host` at `raw.len()` uniform cut points, keeping
/// both orders.
pub fn interleave<T: Clone>(host: &[T], raw: &[T], rng: &mut impl Rng) -> Vec<T> {
    let mut cuts: Vec<usize> = (0..raw.len())
        .map(|_| rng.random_range(0..=host.len()))
        .collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(host.len() + raw.len());
    let mut r = 0;
    for (i, h) in host.iter().enumerate() {
        while r < raw.len() && cuts[r] == i {
            out.push(raw[r].clone());
            r += 1;
        }
        out.push(h.clone());
    }
    out.extend(raw[r..].iter().cloned());
    out
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of one (raw, host, round) triple.
pub fn triple_seed(seed: u64, raw: usize, host: usize, round: usize) -> u64 {
    splitmix(splitmix(splitmix(splitmix(seed) ^ raw as u64) ^ host as u64) ^ round as u64)
}

enum Outcome {
    Pass(Box<Sample>),
    Syntax,
    Sink,
}

struct Prepared<'a> {
    raw: &'a RawSample,
    stmts: Vec<String>,
    taint_var: String,
    vars: BTreeSet<String>,
}

#[allow(clippy::too_many_arguments)]
fn one_round(
    raw: &Prepared,
    host: &HostUnit,
    host_stmts: &[Node],
    round: usize,
    seed: u64,
    cfg: &SynthConfig,
    norm: &NormalizeConfig,
    rules: &SinkRules,
) -> Outcome {
    let mut linear = linearize(host_stmts, seed, cfg.max_path_blocks);
    let cleaned = remove_triggers(&Program::new(linear), raw.raw.cwe, rules);
    linear = cleaned.statements().to_vec();
    avoid_capture(&mut linear, &raw.vars);
    let host_text: Vec<String> = linear.iter().map(emit_statement).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed));
    let merged = interleave(&host_text, &raw.stmts, &mut rng);
    let code = format!("<?php\n{}", merged.join("\n"));
    let Ok(program) = php::parse(&code) else {
        return Outcome::Syntax;
    };

    let sinks = find_sinks_with(&program, raw.raw.cwe, rules);
    let [site] = &sinks[..] else {
        return Outcome::Sink;
    };
    if !site.concat_vars.contains(&raw.taint_var) {
        return Outcome::Sink;
    }
    let cand = TaintCandidate {
        sink: site.clone(),
        var: raw.taint_var.clone(),
    };
    let opts = SliceOptions {
        rules: rules.clone(),
        ..SliceOptions::default()
    };
    let Ok(snippet) = slice_with(&program, &cand, &opts) else {
        return Outcome::Sink;
    };
    let Ok(snippet) = normalize_with(&snippet, norm, rules) else {
        return Outcome::Sink;
    };
    Outcome::Pass(Box::new(Sample {
        id: format!("syn:{}:{}:{round}", raw.raw.id, host.id),
        cwe: raw.raw.cwe,
        code: snippet.code,
        label: Some(raw.raw.label),
        project: host.project.clone(),
        file: host.file.clone(),
        line: snippet.sink_line,
        taint_var: snippet.taint_var,
        synthetic: true,
        origin: Some(raw.raw.id.clone()),
        split: None,
    }))
}

pub fn synthesize(
    raw: &[RawSample],
    hosts: &[HostUnit],
    cfg: &SynthConfig,
) -> (Vec<Sample>, SynthReport) {
    synthesize_with(
        raw,
        hosts,
        cfg,
        &NormalizeConfig::default(),
        &SinkRules::default(),
    )
}

/// Output is sorted by (raw id, host id, round) and does not depend on
/// input order or thread count.
pub fn synthesize_with(
    raw: &[RawSample],
    hosts: &[HostUnit],
    cfg: &SynthConfig,
    norm: &NormalizeConfig,
    rules: &SinkRules,
) -> (Vec<Sample>, SynthReport) {
    let mut report = SynthReport::default();
    let mut raw: Vec<&RawSample> = raw.iter().collect();
    raw.sort_by(|a, b| a.id.cmp(&b.id));
    let mut hosts: Vec<&HostUnit> = hosts.iter().collect();
    hosts.sort_by(|a, b| a.id.cmp(&b.id));

    let prepared: Vec<Prepared> = raw
        .iter()
        .filter_map(|r| {
            if cfg.select_simple && !is_simple(r) {
                report.raw_skipped += 1;
                return None;
            }
            let (Ok(stmts), Ok(sink), Ok(program)) = (
                split_top_level(r, rules),
                verify_snippet(&r.code, r.cwe, rules),
                php::parse(&r.code),
            ) else {
                report.raw_skipped += 1;
                return None;
            };
            let mut vars = BTreeSet::new();
            variable_names(&program.root, &mut vars);
            Some(Prepared {
                raw: r,
                stmts,
                taint_var: sink.taint_var,
                vars,
            })
        })
        .collect();
    // Hosts that do not parse contribute attempts that all fail on syntax.
    let host_stmts: Vec<Option<Vec<Node>>> = hosts
        .iter()
        .map(|h| h.program().ok().map(|p| p.statements().to_vec()))
        .collect();

    let triples: Vec<(usize, usize, usize)> = (0..prepared.len())
        .flat_map(|r| (0..hosts.len()).flat_map(move |h| (0..cfg.rounds).map(move |t| (r, h, t))))
        .collect();
    let outcomes: Vec<Outcome> = triples
        .par_iter()
        .map(|&(r, h, t)| {
            let Some(stmts) = &host_stmts[h] else {
                return Outcome::Syntax;
            };
            let seed = triple_seed(cfg.seed, r, h, t);
            one_round(&prepared[r], hosts[h], stmts, t, seed, cfg, norm, rules)
        })
        .collect();

    let mut out = Vec::new();
    for o in outcomes {
        report.attempts += 1;
        match o {
            Outcome::Pass(s) => {
                report.passes += 1;
                out.push(*s);
            }
            Outcome::Syntax => report.syntax_failures += 1,
            Outcome::Sink => report.sink_failures += 1,
        }
    }
    (out, report)
}

/// Hosts of one parsed file: its top-level code (`{file}#main`, if any
/// statements remain besides function declarations) and each top-level
/// function body (`{file}#fn:{name}`).
pub fn hosts_from_program(program: &Program, project: &str, file: &str) -> Vec<HostUnit> {
    let mut out = Vec::new();
    let top: Vec<Node> = program
        .statements()
        .iter()
        .filter(|s| !matches!(s.kind, NodeKind::FunctionDecl(_)))
        .cloned()
        .collect();
    let unit = |code: String, id: String| HostUnit {
        code,
        project: project.to_string(),
        file: file.to_string(),
        id,
    };
    if !top.is_empty() {
        out.push(unit(body_text(&top), format!("{file}#main")));
    }
    for s in program.statements() {
        if let NodeKind::FunctionDecl(name) = &s.kind {
            let body = s.body().map(|b| b.children.clone()).unwrap_or_default();
            out.push(unit(body_text(&body), format!("{file}#fn:{name}")));
        }
    }
    out
}
