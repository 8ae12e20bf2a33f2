//! Sink localization.
//!
//! A sink is a statement whose output or query text is assembled from
//! variables: `echo`/`print` (CWE-79) or a concatenation whose literal parts
//! look like SQL (CWE-89). What counts as "assembled from" is the set of
//! *flow operands* of the sink expression: operands whose value ends up in
//! the output verbatim or through a call. Arithmetic and comparisons are not
//! followed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::php::{Node, NodeId, NodeKind, Program, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SinkKind {
    #[serde(rename = "CWE-79")]
    Cwe79,
    #[serde(rename = "CWE-89")]
    Cwe89,
}

impl SinkKind {
    pub const ALL: [SinkKind; 2] = [SinkKind::Cwe79, SinkKind::Cwe89];

    pub fn as_str(self) -> &'static str {
        match self {
            SinkKind::Cwe79 => "CWE-79",
            SinkKind::Cwe89 => "CWE-89",
        }
    }
}

impl fmt::Display for SinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown CWE `{0}` (expected 79 or 89)")]
pub struct UnknownCwe(pub String);

impl FromStr for SinkKind {
    type Err = UnknownCwe;

    /// Accepts `79`, `CWE-79`, `cwe79` and the same for 89.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .trim()
            .to_ascii_uppercase()
            .trim_start_matches("CWE")
            .trim_start_matches(['-', '_'])
            .to_string();
        match digits.as_str() {
            "79" => Ok(SinkKind::Cwe79),
            "89" => Ok(SinkKind::Cwe89),
            _ => Err(UnknownCwe(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkSite {
    pub kind: SinkKind,
    pub stmt_id: NodeId,
    pub span: Span,
    /// Root expressions of the sink: echo arguments, the print operand, the
    /// arguments of a configured output call or the matching concatenations.
    pub exprs: Vec<NodeId>,
    /// Distinct flow-operand variable names, first occurrence first.
    pub concat_vars: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaintCandidate {
    pub sink: SinkSite,
    pub var: String,
}

/// One candidate per concatenated variable, in order.
pub fn taint_candidates(site: &SinkSite) -> Vec<TaintCandidate> {
    site.concat_vars
        .iter()
        .map(|var| TaintCandidate {
            sink: site.clone(),
            var: var.clone(),
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("rules line {line}: expected `key = value`")]
    Malformed { line: usize },
    #[error("rules line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("rules line {line}: `{key}` needs at least one entry")]
    Empty { line: usize, key: String },
    #[error("reading rules file: {0}")]
    Io(#[from] std::io::Error),
}

/// Declarative sink and sanitizer lists.
///
/// ```text
/// # statements and calls that write to the response
/// cwe79.sink = echo,print,printf
/// cwe89.keywords = SELECT,INSERT,UPDATE,DELETE,REPLACE
/// cwe89.infix = WHERE,FROM
/// cwe79.sanitizers = htmlspecialchars,htmlentities,intval
/// cwe89.sanitizers = intval,addslashes
/// ```
///
/// `echo` and `print` are language constructs; any other `cwe79.sink` entry
/// names a function whose arguments are output. Keywords are matched on the
/// trimmed, upper-cased literal: `keywords` as prefixes, `infix` entries
/// anywhere when followed by a space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkRules {
    pub cwe79_sinks: Vec<String>,
    pub cwe89_keywords: Vec<String>,
    pub cwe89_infix: Vec<String>,
    pub cwe79_sanitizers: Vec<String>,
    pub cwe89_sanitizers: Vec<String>,
}

fn list(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for SinkRules {
    fn default() -> Self {
        SinkRules {
            cwe79_sinks: list(&["echo", "print"]),
            cwe89_keywords: list(&["SELECT", "INSERT", "UPDATE", "DELETE", "REPLACE"]),
            cwe89_infix: list(&["WHERE", "FROM"]),
            cwe79_sanitizers: list(&["htmlspecialchars", "htmlentities", "intval"]),
            cwe89_sanitizers: list(&[
                "intval",
                "addslashes",
                "mysql_real_escape_string",
                "mysqli_real_escape_string",
                "pg_escape_string",
                "pg_escape_literal",
            ]),
        }
    }
}

impl SinkRules {
    /// Parse a rules file. Keys that are absent keep their defaults.
    pub fn parse(text: &str) -> Result<Self, RulesError> {
        let mut rules = SinkRules::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(RulesError::Malformed { line })?;
            let key = key.trim();
            let items: Vec<String> = value
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if items.is_empty() {
                return Err(RulesError::Empty {
                    line,
                    key: key.to_string(),
                });
            }
            let upper = |v: Vec<String>| v.into_iter().map(|s| s.to_ascii_uppercase()).collect();
            let lower = |v: Vec<String>| v.into_iter().map(|s| s.to_ascii_lowercase()).collect();
            match key {
                "cwe79.sink" => rules.cwe79_sinks = lower(items),
                "cwe89.keywords" => rules.cwe89_keywords = upper(items),
                "cwe89.infix" => rules.cwe89_infix = upper(items),
                "cwe79.sanitizers" => rules.cwe79_sanitizers = lower(items),
                "cwe89.sanitizers" => rules.cwe89_sanitizers = lower(items),
                _ => {
                    return Err(RulesError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
        }
        Ok(rules)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, RulesError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Does this literal text carry SQL semantics?
    pub fn is_sql_literal(&self, text: &str) -> bool {
        let upper = text.trim().to_ascii_uppercase();
        self.cwe89_keywords
            .iter()
            .any(|k| upper.starts_with(k.as_str()))
            || self
                .cwe89_infix
                .iter()
                .any(|k| upper.contains(&format!("{k} ")))
    }

    pub fn sanitizers(&self, kind: SinkKind) -> &[String] {
        match kind {
            SinkKind::Cwe79 => &self.cwe79_sanitizers,
            SinkKind::Cwe89 => &self.cwe89_sanitizers,
        }
    }

    fn output_calls(&self) -> impl Iterator<Item = &str> {
        self.cwe79_sinks
            .iter()
            .map(String::as_str)
            .filter(|s| *s != "echo" && *s != "print")
    }
}

/// A flow operand: the node whose value reaches the sink, and the variable
/// it names (`_GET` etc. for superglobals, the root base for element reads).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowOperand {
    pub node: NodeId,
    pub var: String,
}

/// Flow operands and string literals reachable from `expr`.
pub fn flow_operands(expr: &Node) -> Vec<FlowOperand> {
    let mut vars = Vec::new();
    collect_flow(expr, &mut vars, &mut Vec::new());
    vars
}

fn flow_literals(expr: &Node) -> Vec<&str> {
    let mut lits = Vec::new();
    collect_flow(expr, &mut Vec::new(), &mut lits);
    lits
}

/// Name of the variable at the root of an element read, if any.
fn root_var(node: &Node) -> Option<&Node> {
    let mut cur = node;
    loop {
        match &cur.kind {
            NodeKind::Variable(_) | NodeKind::SuperGlobal(_) => return Some(cur),
            NodeKind::ArrayAccess => cur = &cur.children[0],
            _ => return None,
        }
    }
}

fn var_name(node: &Node) -> String {
    match &node.kind {
        NodeKind::Variable(name) => name.clone(),
        NodeKind::SuperGlobal(g) => g.name().to_string(),
        _ => unreachable!("root_var returns variables only"),
    }
}

fn collect_flow<'a>(node: &'a Node, vars: &mut Vec<FlowOperand>, lits: &mut Vec<&'a str>) {
    match &node.kind {
        NodeKind::Variable(_) | NodeKind::SuperGlobal(_) => vars.push(FlowOperand {
            node: node.id,
            var: var_name(node),
        }),
        NodeKind::ArrayAccess => match root_var(node) {
            Some(root) => vars.push(FlowOperand {
                node: node.id,
                var: var_name(root),
            }),
            None => collect_flow(&node.children[0], vars, lits),
        },
        NodeKind::StringLit { value, .. } => lits.push(value),
        NodeKind::Concat | NodeKind::Call(_) | NodeKind::PrintExpr => {
            for child in &node.children {
                collect_flow(child, vars, lits);
            }
        }
        NodeKind::Ternary { short } => {
            let branches = if *short {
                &node.children[..]
            } else {
                &node.children[1..]
            };
            for child in branches {
                collect_flow(child, vars, lits);
            }
        }
        NodeKind::BinaryOp(crate::php::ast::BinOp::Coalesce) => {
            for child in &node.children {
                collect_flow(child, vars, lits);
            }
        }
        NodeKind::UnaryOp(op) if !matches!(op, crate::php::ast::UnOp::Not) => {
            collect_flow(&node.children[0], vars, lits)
        }
        NodeKind::Assign(_) => collect_flow(&node.children[1], vars, lits),
        _ => {}
    }
}

fn dedup_names(ops: &[FlowOperand]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for op in ops {
        if !out.contains(&op.var) {
            out.push(op.var.clone());
        }
    }
    out
}

/// Root expressions of the sink in `stmt`'s own expressions, if any.
pub fn sink_exprs<'a>(stmt: &'a Node, kind: SinkKind, rules: &SinkRules) -> Vec<&'a Node> {
    let mut roots = Vec::new();
    let echo_enabled = rules.cwe79_sinks.iter().any(|s| s == "echo");
    let print_enabled = rules.cwe79_sinks.iter().any(|s| s == "print");
    match kind {
        SinkKind::Cwe79 => {
            if stmt.kind == NodeKind::EchoStmt && echo_enabled {
                roots.extend(stmt.children.iter());
            } else {
                for e in stmt.own_exprs() {
                    find_output(e, rules, print_enabled, &mut roots);
                }
            }
        }
        SinkKind::Cwe89 => {
            for e in stmt.own_exprs() {
                find_sql(e, rules, &mut roots);
            }
        }
    }
    roots
}

fn find_output<'a>(node: &'a Node, rules: &SinkRules, print: bool, out: &mut Vec<&'a Node>) {
    match &node.kind {
        NodeKind::PrintExpr if print => out.push(&node.children[0]),
        NodeKind::Call(name) if rules.output_calls().any(|c| c.eq_ignore_ascii_case(name)) => {
            out.extend(node.children.iter())
        }
        _ => {
            for child in &node.children {
                find_output(child, rules, print, out);
            }
        }
    }
}

fn find_sql<'a>(node: &'a Node, rules: &SinkRules, out: &mut Vec<&'a Node>) {
    if node.kind == NodeKind::Concat {
        let has_sql = flow_literals(node).iter().any(|l| rules.is_sql_literal(l));
        if has_sql && !flow_operands(node).is_empty() {
            out.push(node);
            return;
        }
    }
    for child in &node.children {
        find_sql(child, rules, out);
    }
}

/// The sink site of one statement, considering only its own expressions.
pub fn sink_at(stmt: &Node, kind: SinkKind, rules: &SinkRules) -> Option<SinkSite> {
    let roots = sink_exprs(stmt, kind, rules);
    let ops: Vec<FlowOperand> = roots.iter().flat_map(|r| flow_operands(r)).collect();
    if ops.is_empty() {
        return None;
    }
    Some(SinkSite {
        kind,
        stmt_id: stmt.id,
        span: stmt.span,
        exprs: roots.iter().map(|r| r.id).collect(),
        concat_vars: dedup_names(&ops),
    })
}

pub fn find_sinks(program: &Program, kind: SinkKind) -> Vec<SinkSite> {
    find_sinks_with(program, kind, &SinkRules::default())
}

/// Every sink of `kind` in the program, function bodies included, ordered by
/// source position.
pub fn find_sinks_with(program: &Program, kind: SinkKind, rules: &SinkRules) -> Vec<SinkSite> {
    let mut sites: Vec<SinkSite> = program
        .all_statements()
        .into_iter()
        .filter_map(|stmt| sink_at(stmt, kind, rules))
        .collect();
    sites.sort_by_key(|s| (s.span.start, s.stmt_id));
    sites
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::php::parse;
    use proptest::prelude::*;

    fn sites(src: &str, kind: SinkKind) -> Vec<SinkSite> {
        find_sinks(&parse(src).unwrap(), kind)
    }

    #[test]
    fn echo_with_variable() {
        let s = sites("<?php echo $x . \"<br>\";", SinkKind::Cwe79);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].concat_vars, ["x"]);
    }

    #[test]
    fn sql_concatenation() {
        let s = sites(
            "<?php $q = \"SELECT * FROM t WHERE id=\" . $id;",
            SinkKind::Cwe89,
        );
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].concat_vars, ["id"]);
        let s = sites("<?php $q .= \" where id=$id\";", SinkKind::Cwe89);
        assert_eq!(s[0].concat_vars, ["id"]);
    }

    #[test]
    fn static_echo_is_not_a_sink() {
        assert!(sites("<?php echo \"static\";", SinkKind::Cwe79).is_empty());
    }

    #[test]
    fn repeated_variable_counted_once() {
        let s = sites("<?php echo $u . $v . $u;", SinkKind::Cwe79);
        assert_eq!(s[0].concat_vars, ["u", "v"]);
        let cands = taint_candidates(&s[0]);
        assert_eq!(cands.len(), 2);
        assert_eq!(cands[1].var, "v");
    }

    #[test]
    fn flow_operand_rules() {
        let s = sites(
            "<?php echo $row['name'] . htmlspecialchars($t) . ($n + 1) . ($c ? $a : 'z') . $_GET['q'];",
            SinkKind::Cwe79,
        );
        assert_eq!(s[0].concat_vars, ["row", "t", "a", "_GET"]);
    }

    #[test]
    fn print_and_configured_calls() {
        let s = sites("<?php $r = print $a; printf('%s', $b);", SinkKind::Cwe79);
        assert_eq!(s.len(), 1);
        let rules = SinkRules::parse("cwe79.sink = echo, print, printf\n").unwrap();
        let p = parse("<?php $r = print $a; printf('%s', $b);").unwrap();
        let s = find_sinks_with(&p, SinkKind::Cwe79, &rules);
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].concat_vars, ["b"]);
    }

    #[test]
    fn sinks_inside_functions_and_headers() {
        let s = sites(
            "<?php function f($p) { if (print $p) { echo 'x' . $p; } }",
            SinkKind::Cwe79,
        );
        assert_eq!(s.len(), 2);
        assert!(s[0].span.start < s[1].span.start);
    }

    #[test]
    fn rules_file_errors() {
        assert!(matches!(
            SinkRules::parse("bogus = 1"),
            Err(RulesError::UnknownKey { line: 1, .. })
        ));
        assert!(matches!(
            SinkRules::parse("# c\ncwe89.keywords"),
            Err(RulesError::Malformed { line: 2 })
        ));
        let r = SinkRules::parse("cwe89.keywords = select , merge # more\n").unwrap();
        assert_eq!(r.cwe89_keywords, ["SELECT", "MERGE"]);
    }

    #[test]
    fn cwe_parsing() {
        assert_eq!("79".parse::<SinkKind>().unwrap(), SinkKind::Cwe79);
        assert_eq!("CWE-89".parse::<SinkKind>().unwrap(), SinkKind::Cwe89);
        assert_eq!("cwe89".parse::<SinkKind>().unwrap(), SinkKind::Cwe89);
        assert!("22".parse::<SinkKind>().is_err());
    }

    fn rename_all(src: &str, from: &[&str], to: &[&str]) -> String {
        let mut out = src.to_string();
        for (i, f) in from.iter().enumerate() {
            out = out.replace(&format!("${f}"), &format!("$__tmp{i}"));
        }
        for (i, t) in to.iter().enumerate() {
            out = out.replace(&format!("$__tmp{i}"), &format!("${t}"));
        }
        out
    }

    proptest! {
        #[test]
        fn non_sql_literals_never_match(lit in "[a-z ,.=]{0,30}", var in "[a-z]{1,6}") {
            prop_assume!(!lit.to_ascii_uppercase().contains("WHERE ") && !lit.to_ascii_uppercase().contains("FROM "));
            prop_assume!(!["select", "insert", "update", "delete", "replace"].iter().any(|k| lit.trim_start().starts_with(k)));
            let src = format!("<?php $q = '{lit}' . ${var}; $r = \"{lit}${var}\";");
            prop_assert!(sites(&src, SinkKind::Cwe89).is_empty());
        }

        #[test]
        fn renaming_preserves_sites(names in proptest::collection::vec("[a-z]{3,6}", 3)) {
            prop_assume!(names[0] != names[1] && names[1] != names[2] && names[0] != names[2]);
            let src = "<?php $a = $_GET['k']; echo $a . $b; $q = 'SELECT * FROM t WHERE x=' . $c; if ($a) { print $b; }";
            let renamed = rename_all(src, &["a", "b", "c"], &[&names[0], &names[1], &names[2]]);
            for kind in SinkKind::ALL {
                let before = sites(src, kind);
                let after = sites(&renamed, kind);
                prop_assert_eq!(before.len(), after.len());
                for (x, y) in before.iter().zip(&after) {
                    prop_assert_eq!(x.stmt_id, y.stmt_id);
                    prop_assert_eq!(x.concat_vars.len(), y.concat_vars.len());
                }
            }
        }
    }
}
