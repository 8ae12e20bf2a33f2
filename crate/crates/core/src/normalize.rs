//! Snippet normalization: bulky or markup-bearing string literals are
//! replaced by a short placeholder and user variables are renamed to
//! `var0`, `var1`, ... in order of first appearance. Function names,
//! superglobals and SQL-bearing literals are left alone.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::php::{self, emit_program_marked, Node, NodeKind, Program};
use crate::sinks::SinkRules;
use crate::slicer::{taint_marker, verify_snippet, Snippet, DEFAULT_CONSTANT};

/// Html marker meaning "`<` followed by an ASCII letter".
pub const TAG_OPEN_MARKER: &str = "<[a-z]";

/// Variables that keep their names.
const RESERVED_VARS: &[&str] = &["this", "GLOBALS", "_SESSION", "_FILES", "_ENV"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizeConfig {
    pub max_string_len: usize,
    /// Case-insensitive substrings that mark a literal as markup;
    /// [`TAG_OPEN_MARKER`] is a pattern rather than a substring.
    pub html_markers: Vec<String>,
    pub placeholder: String,
    pub enabled: bool,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        NormalizeConfig {
            max_string_len: 20,
            html_markers: [TAG_OPEN_MARKER, "href", "style", "</"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            placeholder: "s".to_string(),
            enabled: true,
        }
    }
}

impl NormalizeConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_string_len < 1 {
            return Err("normalize.max_string_len must be at least 1".into());
        }
        if self.placeholder.is_empty() {
            return Err("normalize.placeholder must not be empty".into());
        }
        if self
            .placeholder
            .chars()
            .any(|c| matches!(c, '\'' | '"' | '\\' | '$' | '{'))
        {
            return Err("normalize.placeholder must not contain quotes, `\\`, `$` or `{`".into());
        }
        Ok(())
    }

    fn is_markup(&self, text: &str) -> bool {
        let lower = text.to_ascii_lowercase();
        self.html_markers.iter().any(|m| {
            if m == TAG_OPEN_MARKER {
                lower
                    .as_bytes()
                    .windows(2)
                    .any(|w| w[0] == b'<' && w[1].is_ascii_alphabetic())
            } else {
                lower.contains(&m.to_ascii_lowercase())
            }
        })
    }
}

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("snippet does not satisfy the single-sink invariant: {0}")]
    Invariant(String),
}

/// Replace long or markup literals in place. Superglobal keys, SQL-bearing
/// literals and the slicer's constants are exempt.
pub fn elide_program(program: &mut Program, cfg: &NormalizeConfig, rules: &SinkRules) {
    fn visit(node: &mut Node, cfg: &NormalizeConfig, rules: &SinkRules) {
        if let NodeKind::SuperGlobal(_) = node.kind {
            return;
        }
        if let NodeKind::StringLit { value, quote } = &mut node.kind {
            let is_constant = *quote == php::ast::Quote::Single && value == DEFAULT_CONSTANT;
            let bulky = value.chars().count() > cfg.max_string_len || cfg.is_markup(value);
            if bulky && !is_constant && !rules.is_sql_literal(value) {
                *value = cfg.placeholder.clone();
            }
            return;
        }
        for child in &mut node.children {
            visit(child, cfg, rules);
        }
    }
    visit(&mut program.root, cfg, rules);
}

/// Rename user variables to `var0..` in first-occurrence order; returns the
/// mapping.
pub fn rename_program(program: &mut Program) -> BTreeMap<String, String> {
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for node in program.root.walk() {
        let name = match &node.kind {
            NodeKind::Variable(n) | NodeKind::Param(n) => n,
            _ => continue,
        };
        if RESERVED_VARS.contains(&name.as_str()) || map.contains_key(name) {
            continue;
        }
        let fresh = format!("var{}", map.len());
        map.insert(name.clone(), fresh);
    }
    fn apply(node: &mut Node, map: &BTreeMap<String, String>) {
        if let NodeKind::Variable(n) | NodeKind::Param(n) = &mut node.kind {
            if let Some(to) = map.get(n.as_str()) {
                *n = to.clone();
            }
        }
        for child in &mut node.children {
            apply(child, map);
        }
    }
    apply(&mut program.root, &map);
    map
}

fn transform(
    snippet: &Snippet,
    rules: &SinkRules,
    f: impl FnOnce(&mut Program) -> BTreeMap<String, String>,
) -> Result<Snippet, NormalizeError> {
    let before =
        verify_snippet(&snippet.code, snippet.cwe, rules).map_err(NormalizeError::Invariant)?;
    let mut program =
        php::parse(&snippet.code).map_err(|e| NormalizeError::Invariant(e.to_string()))?;
    let map = f(&mut program);
    let taint_var = map
        .get(&before.taint_var)
        .cloned()
        .unwrap_or(before.taint_var);
    let code = emit_program_marked(&program, before.stmt_id, &taint_marker(&taint_var));
    let after = verify_snippet(&code, snippet.cwe, rules).map_err(NormalizeError::Invariant)?;
    Ok(Snippet {
        code,
        taint_var: after.taint_var,
        sink_line: after.sink_line,
        ..snippet.clone()
    })
}

pub fn elide_strings(
    snippet: &Snippet,
    cfg: &NormalizeConfig,
    rules: &SinkRules,
) -> Result<Snippet, NormalizeError> {
    transform(snippet, rules, |p| {
        elide_program(p, cfg, rules);
        BTreeMap::new()
    })
}

pub fn rename_vars(snippet: &Snippet, rules: &SinkRules) -> Result<Snippet, NormalizeError> {
    transform(snippet, rules, rename_program)
}

pub fn normalize(snippet: &Snippet, cfg: &NormalizeConfig) -> Result<Snippet, NormalizeError> {
    normalize_with(snippet, cfg, &SinkRules::default())
}

/// Elide then rename; the identity when `cfg.enabled` is false.
pub fn normalize_with(
    snippet: &Snippet,
    cfg: &NormalizeConfig,
    rules: &SinkRules,
) -> Result<Snippet, NormalizeError> {
    if !cfg.enabled {
        return Ok(snippet.clone());
    }
    transform(snippet, rules, |p| {
        elide_program(p, cfg, rules);
        rename_program(p)
    })
}
