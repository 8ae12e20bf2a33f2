use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::php::{Node, NodeId, NodeKind, Program};

use super::cfg::Cfg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Read,
    /// Whole-value overwrite (`$a = ...`, foreach target, `global $a`).
    Write,
    /// Read-modify-write: compound assignment, `++`/`--`, element writes.
    ReadWrite,
}

/// One variable occurrence inside a statement's own expressions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Access {
    /// Id of the `Variable` / `SuperGlobal` node.
    pub node: NodeId,
    pub name: String,
    pub kind: AccessKind,
}

/// Variable occurrences of a statement's own expressions (headers included,
/// nested bodies excluded), in evaluation order: an assignment's value is
/// read before its target is written.
pub fn accesses(stmt: &Node) -> Vec<Access> {
    let mut out = Vec::new();
    match &stmt.kind {
        NodeKind::Foreach { .. } => {
            let exprs = stmt.own_exprs();
            expr(&exprs[0], &mut out);
            for t in &exprs[1..] {
                target(t, false, &mut out);
            }
        }
        NodeKind::GlobalDecl => {
            for v in &stmt.children {
                if let Some(name) = v.variable_name() {
                    out.push(Access {
                        node: v.id,
                        name: name.to_string(),
                        kind: AccessKind::Write,
                    });
                }
            }
        }
        _ => {
            for e in stmt.own_exprs() {
                expr(e, &mut out);
            }
        }
    }
    out
}

/// Variable occurrences of a single expression, in evaluation order.
pub fn expr_accesses(node: &Node) -> Vec<Access> {
    let mut out = Vec::new();
    expr(node, &mut out);
    out
}

/// Occurrences when `node` is assigned to (`compound`: read-modify-write).
pub fn target_accesses(node: &Node, compound: bool) -> Vec<Access> {
    let mut out = Vec::new();
    target(node, compound, &mut out);
    out
}

fn expr(node: &Node, out: &mut Vec<Access>) {
    match &node.kind {
        NodeKind::Variable(name) => out.push(Access {
            node: node.id,
            name: name.clone(),
            kind: AccessKind::Read,
        }),
        NodeKind::SuperGlobal(global) => {
            for key in &node.children {
                expr(key, out);
            }
            out.push(Access {
                node: node.id,
                name: global.name().to_string(),
                kind: AccessKind::Read,
            });
        }
        NodeKind::Assign(op) => {
            expr(&node.children[1], out);
            target(&node.children[0], op.is_compound(), out);
        }
        NodeKind::UnaryOp(op) if op.is_inc_dec() => target(&node.children[0], true, out),
        _ => {
            for child in &node.children {
                expr(child, out);
            }
        }
    }
}

fn target(node: &Node, compound: bool, out: &mut Vec<Access>) {
    match &node.kind {
        NodeKind::Variable(name) => out.push(Access {
            node: node.id,
            name: name.clone(),
            kind: if compound {
                AccessKind::ReadWrite
            } else {
                AccessKind::Write
            },
        }),
        NodeKind::ArrayAccess => {
            // Indexes are evaluated first; the element write updates the base.
            let mut base = node;
            let mut indexes = Vec::new();
            while base.kind == NodeKind::ArrayAccess {
                indexes.extend(base.children.get(1));
                base = &base.children[0];
            }
            for index in indexes.into_iter().rev() {
                expr(index, out);
            }
            match &base.kind {
                NodeKind::Variable(_) | NodeKind::SuperGlobal(_) => target(base, true, out),
                _ => expr(base, out),
            }
        }
        NodeKind::SuperGlobal(global) => {
            for key in &node.children {
                expr(key, out);
            }
            out.push(Access {
                node: node.id,
                name: global.name().to_string(),
                kind: AccessKind::ReadWrite,
            });
        }
        _ => expr(node, out),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StmtDefUse {
    pub defs: BTreeSet<String>,
    pub uses: BTreeSet<String>,
}

pub fn stmt_def_use(stmt: &Node) -> StmtDefUse {
    let mut du = StmtDefUse::default();
    for a in accesses(stmt) {
        match a.kind {
            AccessKind::Read => {
                du.uses.insert(a.name);
            }
            AccessKind::Write => {
                du.defs.insert(a.name);
            }
            AccessKind::ReadWrite => {
                du.uses.insert(a.name.clone());
                du.defs.insert(a.name);
            }
        }
    }
    du
}

/// Per-statement definitions and uses for every statement of a CFG.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DefUse {
    pub defs: BTreeMap<NodeId, BTreeSet<String>>,
    pub uses: BTreeMap<NodeId, BTreeSet<String>>,
}

impl DefUse {
    pub fn defs_of(&self, stmt: NodeId) -> impl Iterator<Item = &str> {
        self.defs
            .get(&stmt)
            .into_iter()
            .flatten()
            .map(String::as_str)
    }

    pub fn uses_of(&self, stmt: NodeId) -> impl Iterator<Item = &str> {
        self.uses
            .get(&stmt)
            .into_iter()
            .flatten()
            .map(String::as_str)
    }
}

pub fn def_use(cfg: &Cfg, program: &Program) -> DefUse {
    let index: HashMap<NodeId, &Node> = program.root.walk().map(|n| (n.id, n)).collect();
    let mut out = DefUse::default();
    for id in cfg.statements() {
        let Some(node) = index.get(&id) else { continue };
        let du = stmt_def_use(node);
        out.defs.insert(id, du.defs);
        out.uses.insert(id, du.uses);
    }
    out
}
