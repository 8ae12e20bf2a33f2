//! Heuristic taint baseline: superglobal reads are sources, the configured
//! sanitizer calls (plus prepared-statement helpers for SQL) clear taint,
//! numeric and boolean results are clean. Branches merge by union and loop
//! bodies run to a fixpoint.

use std::collections::BTreeSet;

use crate::php::ast::{AssignOp, BinOp, CastType, UnOp};
use crate::php::{self, Node, NodeId, NodeKind};
use crate::sinks::{sink_exprs, SinkKind, SinkRules};
use crate::slicer::verify_snippet;

type State = BTreeSet<String>;

struct Taint<'a> {
    kind: SinkKind,
    rules: &'a SinkRules,
    sanitizers: Vec<String>,
    /// Sink statements of interest; all sinks of `kind` when empty.
    targets: BTreeSet<NodeId>,
    hit: bool,
}

impl Taint<'_> {
    fn is_sanitizer(&self, name: &str) -> bool {
        let lower = name.to_ascii_lowercase();
        self.sanitizers.iter().any(|s| *s == lower)
            || (self.kind == SinkKind::Cwe89
                && (lower.contains("prepare") || lower.contains("bind")))
    }

    fn expr(&self, node: &Node, st: &mut State) -> bool {
        match &node.kind {
            NodeKind::SuperGlobal(_) => {
                for k in &node.children {
                    self.expr(k, st);
                }
                true
            }
            NodeKind::Variable(name) => st.contains(name),
            NodeKind::Assign(op) => {
                let value = self.expr(&node.children[1], st);
                self.assign(&node.children[0], *op, value, st)
            }
            NodeKind::Call(name) => {
                let mut any = false;
                for a in &node.children {
                    any |= self.expr(a, st);
                }
                any && !self.is_sanitizer(name)
            }
            NodeKind::UnaryOp(op) => {
                let inner = self.expr(&node.children[0], st);
                match op {
                    UnOp::Silence => inner,
                    UnOp::Cast(CastType::String | CastType::Array) => inner,
                    _ => false,
                }
            }
            NodeKind::BinaryOp(op) => {
                let l = self.expr(&node.children[0], st);
                let r = self.expr(&node.children[1], st);
                *op == BinOp::Coalesce && (l || r)
            }
            NodeKind::Ternary { short } => {
                let c = self.expr(&node.children[0], st);
                let rest: Vec<bool> = node.children[1..]
                    .iter()
                    .map(|n| self.expr(n, st))
                    .collect();
                (*short && c) || rest.into_iter().any(|t| t)
            }
            NodeKind::ArrayAccess => {
                let base = self.expr(&node.children[0], st);
                if let Some(i) = node.children.get(1) {
                    self.expr(i, st);
                }
                base
            }
            NodeKind::PrintExpr => {
                self.expr(&node.children[0], st);
                false
            }
            NodeKind::Concat | NodeKind::ArrayLit | NodeKind::ArrayItem { .. } => {
                let mut any = false;
                for c in &node.children {
                    any |= self.expr(c, st);
                }
                any
            }
            _ => {
                for c in &node.children {
                    self.expr(c, st);
                }
                false
            }
        }
    }

    fn assign(&self, target: &Node, op: AssignOp, value: bool, st: &mut State) -> bool {
        let result = match op {
            AssignOp::Assign => value,
            AssignOp::Concat | AssignOp::Coalesce => value || self.expr(target, &mut st.clone()),
            _ => false,
        };
        match &target.kind {
            NodeKind::Variable(name) => {
                if result {
                    st.insert(name.clone());
                } else {
                    st.remove(name);
                }
            }
            NodeKind::ArrayAccess => {
                // Element writes only ever add taint to the base.
                let mut base = target;
                while base.kind == NodeKind::ArrayAccess {
                    if let Some(i) = base.children.get(1) {
                        self.expr(i, st);
                    }
                    base = &base.children[0];
                }
                if let (true, NodeKind::Variable(name)) = (result, &base.kind) {
                    st.insert(name.clone());
                }
            }
            _ => {}
        }
        result
    }

    fn check_sink(&mut self, stmt: &Node, st: &State) {
        let wanted = if self.targets.is_empty() {
            crate::sinks::sink_at(stmt, self.kind, self.rules).is_some()
        } else {
            self.targets.contains(&stmt.id)
        };
        if !wanted {
            return;
        }
        let mut scratch = st.clone();
        for e in sink_exprs(stmt, self.kind, self.rules) {
            if self.expr(e, &mut scratch) {
                self.hit = true;
            }
        }
    }

    fn block(&mut self, stmts: &[Node], st: &mut State) {
        for s in stmts {
            self.stmt(s, st);
        }
    }

    fn body(&mut self, node: &Node, st: &mut State) {
        if node.kind == NodeKind::Block {
            self.block(&node.children, st);
        } else {
            self.stmt(node, st);
        }
    }

    fn stmt(&mut self, node: &Node, st: &mut State) {
        self.check_sink(node, st);
        match &node.kind {
            NodeKind::If => {
                self.expr(&node.children[0], st);
                let mut then = st.clone();
                self.body(&node.children[1], &mut then);
                if let Some(else_branch) = node.children.get(2) {
                    self.body(&else_branch.children[0], st);
                }
                st.extend(then);
            }
            NodeKind::While | NodeKind::For { .. } | NodeKind::Foreach { .. } => {
                let body = node.body().expect("loops have bodies");
                loop {
                    let before = st.clone();
                    let mut it = st.clone();
                    if let NodeKind::Foreach { .. } = node.kind {
                        let exprs = node.own_exprs();
                        let subject = self.expr(&exprs[0], &mut it);
                        for t in &exprs[1..] {
                            self.assign(t, AssignOp::Assign, subject, &mut it);
                        }
                    } else {
                        for e in node.own_exprs() {
                            self.expr(e, &mut it);
                        }
                    }
                    self.body(body, &mut it);
                    st.extend(it);
                    if *st == before {
                        break;
                    }
                }
            }
            NodeKind::FunctionDecl(_) | NodeKind::InlineHtml(_) => {}
            _ => {
                for e in node.own_exprs() {
                    self.expr(e, st);
                }
            }
        }
    }
}

/// Whether a tainted value can reach the snippet's sink. Falls back to
/// "any sink of `kind`" when the snippet has no well-formed marker.
pub fn is_tainted(code: &str, kind: SinkKind, rules: &SinkRules) -> Result<bool, php::ParseError> {
    let program = php::parse(code)?;
    let targets = verify_snippet(code, kind, rules)
        .map(|v| BTreeSet::from([v.stmt_id]))
        .unwrap_or_default();
    let mut t = Taint {
        kind,
        rules,
        sanitizers: rules
            .sanitizers(kind)
            .iter()
            .map(|s| s.to_ascii_lowercase())
            .collect(),
        targets,
        hit: false,
    };
    t.block(program.statements(), &mut State::new());
    Ok(t.hit)
}
