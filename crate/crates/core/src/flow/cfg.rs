use std::fmt;

use crate::php::{Node, NodeId, NodeKind, Program};

pub type BlockId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Fallthrough,
    True,
    False,
    LoopBack,
    LoopExit,
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::Fallthrough => "fallthrough",
            EdgeKind::True => "true",
            EdgeKind::False => "false",
            EdgeKind::LoopBack => "loop-back",
            EdgeKind::LoopExit => "loop-exit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub from: BlockId,
    pub to: BlockId,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Block {
    /// Statement ids in execution order. Control statements sit in the block
    /// that evaluates their condition.
    pub stmts: Vec<NodeId>,
}

/// Control-flow graph over one statement list (top-level code or a function
/// body). Blocks `0` and `1` are the empty entry and exit blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    pub blocks: Vec<Block>,
    pub edges: Vec<Edge>,
}

impl Cfg {
    pub const ENTRY: BlockId = 0;
    pub const EXIT: BlockId = 1;

    pub fn entry(&self) -> BlockId {
        Self::ENTRY
    }

    pub fn exit(&self) -> BlockId {
        Self::EXIT
    }

    pub fn successors(&self, block: BlockId) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.from == block)
    }

    pub fn predecessors(&self, block: BlockId) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.to == block)
    }

    pub fn interior_blocks(&self) -> impl Iterator<Item = BlockId> + '_ {
        2..self.blocks.len()
    }

    pub fn block_of(&self, stmt: NodeId) -> Option<BlockId> {
        self.blocks.iter().position(|b| b.stmts.contains(&stmt))
    }

    pub fn has_edge(&self, from: BlockId, to: BlockId) -> bool {
        self.edges.iter().any(|e| e.from == from && e.to == to)
    }

    /// All statement ids, in block order.
    pub fn statements(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.blocks.iter().flat_map(|b| b.stmts.iter().copied())
    }
}

/// CFG of a program's top-level code. Function declarations are opaque
/// statements; their bodies get their own graph via [`build_cfg_function`].
pub fn build_cfg(program: &Program) -> Cfg {
    build_cfg_stmts(program.statements())
}

/// CFG of a function body.
pub fn build_cfg_function(decl: &Node) -> Cfg {
    let body = decl.body().map(|b| b.children.as_slice()).unwrap_or(&[]);
    build_cfg_stmts(body)
}

pub fn build_cfg_stmts(stmts: &[Node]) -> Cfg {
    let mut b = Builder {
        blocks: vec![Block::default(), Block::default()],
        edges: Vec::new(),
        loops: Vec::new(),
    };
    let first = b.new_block();
    b.edge(Cfg::ENTRY, first, EdgeKind::Fallthrough);
    if let Some(end) = b.seq(stmts, first) {
        b.edge(end, Cfg::EXIT, EdgeKind::Fallthrough);
    }
    Cfg {
        blocks: b.blocks,
        edges: b.edges,
    }
}

struct Builder {
    blocks: Vec<Block>,
    edges: Vec<Edge>,
    /// (header, after) of each enclosing loop, innermost last.
    loops: Vec<(BlockId, BlockId)>,
}

impl Builder {
    fn new_block(&mut self) -> BlockId {
        self.blocks.push(Block::default());
        self.blocks.len() - 1
    }

    fn edge(&mut self, from: BlockId, to: BlockId, kind: EdgeKind) {
        self.edges.push(Edge { from, to, kind });
    }

    /// Lay out `stmts` starting in `cur`; returns the block control falls out
    /// of, or `None` if every path left via return/break/continue.
    fn seq(&mut self, stmts: &[Node], cur: BlockId) -> Option<BlockId> {
        let mut cur = Some(cur);
        for stmt in stmts {
            // Code after a jump is unreachable but still gets a block so every
            // statement is covered.
            let block = match cur {
                Some(b) => b,
                None => self.new_block(),
            };
            cur = self.stmt(stmt, block);
        }
        cur
    }

    fn loop_target(&self, depth: &Node) -> Option<(BlockId, BlockId)> {
        let n = match depth.children.first().map(|c| &c.kind) {
            Some(NodeKind::Number(raw)) => raw.parse::<usize>().unwrap_or(1).max(1),
            _ => 1,
        };
        self.loops.len().checked_sub(n).map(|i| self.loops[i])
    }

    fn stmt(&mut self, node: &Node, cur: BlockId) -> Option<BlockId> {
        match &node.kind {
            NodeKind::Return => {
                self.blocks[cur].stmts.push(node.id);
                self.edge(cur, Cfg::EXIT, EdgeKind::Fallthrough);
                None
            }
            NodeKind::Break => {
                self.blocks[cur].stmts.push(node.id);
                match self.loop_target(node) {
                    Some((_, after)) => self.edge(cur, after, EdgeKind::LoopExit),
                    None => self.edge(cur, Cfg::EXIT, EdgeKind::Fallthrough),
                }
                None
            }
            NodeKind::Continue => {
                self.blocks[cur].stmts.push(node.id);
                match self.loop_target(node) {
                    Some((header, _)) => self.edge(cur, header, EdgeKind::LoopBack),
                    None => self.edge(cur, Cfg::EXIT, EdgeKind::Fallthrough),
                }
                None
            }
            NodeKind::Block => self.seq(&node.children, cur),
            NodeKind::If => {
                self.blocks[cur].stmts.push(node.id);
                let then_b = self.new_block();
                self.edge(cur, then_b, EdgeKind::True);
                let then_end = self.seq(&node.children[1].children, then_b);
                let else_end = match node.children.get(2) {
                    Some(else_branch) => {
                        let else_b = self.new_block();
                        self.edge(cur, else_b, EdgeKind::False);
                        let inner = &else_branch.children[0];
                        if inner.kind == NodeKind::If {
                            self.stmt(inner, else_b)
                        } else {
                            self.seq(&inner.children, else_b)
                        }
                    }
                    None => Some(cur),
                };
                if then_end.is_none() && else_end.is_none() {
                    return None;
                }
                let join = self.new_block();
                if let Some(end) = then_end {
                    self.edge(end, join, EdgeKind::Fallthrough);
                }
                match (node.children.get(2), else_end) {
                    (None, _) => self.edge(cur, join, EdgeKind::False),
                    (Some(_), Some(end)) => self.edge(end, join, EdgeKind::Fallthrough),
                    (Some(_), None) => {}
                }
                Some(join)
            }
            NodeKind::While | NodeKind::For { .. } | NodeKind::Foreach { .. } => {
                let header = if self.blocks[cur].stmts.is_empty() {
                    cur
                } else {
                    let h = self.new_block();
                    self.edge(cur, h, EdgeKind::Fallthrough);
                    h
                };
                self.blocks[header].stmts.push(node.id);
                let body_b = self.new_block();
                self.edge(header, body_b, EdgeKind::True);
                let after = self.new_block();
                self.loops.push((header, after));
                let body_end = self.seq(&node.children.last().unwrap().children, body_b);
                self.loops.pop();
                if let Some(end) = body_end {
                    self.edge(end, header, EdgeKind::LoopBack);
                }
                self.edge(header, after, EdgeKind::LoopExit);
                Some(after)
            }
            _ => {
                self.blocks[cur].stmts.push(node.id);
                Some(cur)
            }
        }
    }
}

/// Statement ids a CFG over `stmts` must cover: every nested statement
/// except blocks and function bodies.
pub fn covered_statements(stmts: &[Node]) -> Vec<NodeId> {
    fn visit(node: &Node, out: &mut Vec<NodeId>) {
        if node.kind != NodeKind::Block {
            out.push(node.id);
        }
        if matches!(node.kind, NodeKind::FunctionDecl(_)) {
            return;
        }
        for inner in node.nested_statements() {
            visit(inner, out);
        }
    }
    let mut out = Vec::new();
    for stmt in stmts {
        visit(stmt, &mut out);
    }
    out
}
