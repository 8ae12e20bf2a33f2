//! Syntax tree for the supported PHP subset.
//!
//! Every construct is a [`Node`]: a [`NodeKind`] (carrying any literal
//! payload), an ordered child list, a byte span into the parsed text and an
//! identifier that is unique within its [`Program`]. Child order always
//! matches source order, so a pre-order walk visits nodes in the order their
//! text is emitted.
//!
//! Child layout per kind:
//!
//! | kind | children |
//! |------|----------|
//! | `Program`, `Block` | statements |
//! | `EchoStmt` | one or more expressions |
//! | `ExprStmt`, `PrintExpr` | one expression |
//! | `Assign` | target, value |
//! | `If` | condition, then-`Block`, optional `ElseBranch` |
//! | `ElseBranch` | a `Block` (`else`) or an `If` (`elseif`) |
//! | `While` | condition, `Block` |
//! | `For` | init exprs, cond exprs, step exprs, `Block` |
//! | `Foreach` | subject, optional key target, value target, `Block` |
//! | `FunctionDecl` | `Param`s, `Block` |
//! | `Param` | optional default value |
//! | `Return`, `Break`, `Continue` | optional expression |
//! | `GlobalDecl` | `Variable`s |
//! | `Call` | arguments |
//! | `SuperGlobal` | optional key expression (`$_GET['k']`) |
//! | `Concat` | two or more operands |
//! | `ArrayAccess` | base, optional index (`$a[]`) |
//! | `ArrayLit` | `ArrayItem`s |
//! | `ArrayItem` | optional key, value |
//! | `Ternary` | condition, then (absent when `short`), else |
//! | `BinaryOp` | left, right |
//! | `UnaryOp` | operand |

use std::fmt;

pub type NodeId = u32;

/// Half-open byte range into the source text.
#[derive(
    Debug,
    Clone,
    Copy,
    PartialEq,
    Eq,
    Hash,
    Default,
    PartialOrd,
    Ord,
    serde::Serialize,
    serde::Deserialize,
)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quote {
    Single,
    Double,
}

/// The request superglobals treated as taint sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SuperGlobal {
    Get,
    Post,
    Request,
    Cookie,
    Server,
}

impl SuperGlobal {
    pub const ALL: [SuperGlobal; 5] = [
        SuperGlobal::Get,
        SuperGlobal::Post,
        SuperGlobal::Request,
        SuperGlobal::Cookie,
        SuperGlobal::Server,
    ];

    /// Variable name without the leading `$`.
    pub fn name(self) -> &'static str {
        match self {
            SuperGlobal::Get => "_GET",
            SuperGlobal::Post => "_POST",
            SuperGlobal::Request => "_REQUEST",
            SuperGlobal::Cookie => "_COOKIE",
            SuperGlobal::Server => "_SERVER",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        SuperGlobal::ALL.into_iter().find(|g| g.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AssignOp {
    Assign,
    Concat,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Coalesce,
}

impl AssignOp {
    pub fn as_str(self) -> &'static str {
        match self {
            AssignOp::Assign => "=",
            AssignOp::Concat => ".=",
            AssignOp::Add => "+=",
            AssignOp::Sub => "-=",
            AssignOp::Mul => "*=",
            AssignOp::Div => "/=",
            AssignOp::Mod => "%=",
            AssignOp::Coalesce => "??=",
        }
    }

    pub fn from_token(tok: &str) -> Option<Self> {
        Some(match tok {
            "=" => AssignOp::Assign,
            ".=" => AssignOp::Concat,
            "+=" => AssignOp::Add,
            "-=" => AssignOp::Sub,
            "*=" => AssignOp::Mul,
            "/=" => AssignOp::Div,
            "%=" => AssignOp::Mod,
            "??=" => AssignOp::Coalesce,
            _ => return None,
        })
    }

    /// Compound operators read the target before writing it.
    pub fn is_compound(self) -> bool {
        self != AssignOp::Assign
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    LogicalOr,
    LogicalXor,
    LogicalAnd,
    Coalesce,
    Or,
    And,
    BitOr,
    BitXor,
    BitAnd,
    Eq,
    NotEq,
    Identical,
    NotIdentical,
    Spaceship,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Shl,
    Shr,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Pow,
}

impl BinOp {
    pub fn as_str(self) -> &'static str {
        match self {
            BinOp::LogicalOr => "or",
            BinOp::LogicalXor => "xor",
            BinOp::LogicalAnd => "and",
            BinOp::Coalesce => "??",
            BinOp::Or => "||",
            BinOp::And => "&&",
            BinOp::BitOr => "|",
            BinOp::BitXor => "^",
            BinOp::BitAnd => "&",
            BinOp::Eq => "==",
            BinOp::NotEq => "!=",
            BinOp::Identical => "===",
            BinOp::NotIdentical => "!==",
            BinOp::Spaceship => "<=>",
            BinOp::Lt => "<",
            BinOp::LtEq => "<=",
            BinOp::Gt => ">",
            BinOp::GtEq => ">=",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Pow => "**",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CastType {
    Int,
    Float,
    Bool,
    String,
    Array,
}

impl CastType {
    pub fn as_str(self) -> &'static str {
        match self {
            CastType::Int => "int",
            CastType::Float => "float",
            CastType::Bool => "bool",
            CastType::String => "string",
            CastType::Array => "array",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    Neg,
    Plus,
    BitNot,
    Silence,
    PreInc,
    PreDec,
    PostInc,
    PostDec,
    Cast(CastType),
}

impl UnOp {
    pub fn is_inc_dec(self) -> bool {
        matches!(
            self,
            UnOp::PreInc | UnOp::PreDec | UnOp::PostInc | UnOp::PostDec
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Program,
    InlineHtml(String),
    EchoStmt,
    PrintExpr,
    ExprStmt,
    Assign(AssignOp),
    If,
    ElseBranch,
    While,
    For {
        init: usize,
        cond: usize,
        step: usize,
    },
    Foreach {
        has_key: bool,
    },
    FunctionDecl(String),
    Param(String),
    Return,
    GlobalDecl,
    Break,
    Continue,
    Block,
    Call(String),
    Variable(String),
    SuperGlobal(SuperGlobal),
    StringLit {
        value: String,
        quote: Quote,
    },
    Concat,
    ArrayAccess,
    ArrayLit,
    ArrayItem {
        has_key: bool,
    },
    Ternary {
        short: bool,
    },
    BinaryOp(BinOp),
    UnaryOp(UnOp),
    ConstFetch(String),
    Number(String),
    Bool(bool),
    Null,
}

impl NodeKind {
    /// Short tag used in diagnostics and coverage reports.
    pub fn tag(&self) -> &'static str {
        match self {
            NodeKind::Program => "Program",
            NodeKind::InlineHtml(_) => "InlineHtml",
            NodeKind::EchoStmt => "EchoStmt",
            NodeKind::PrintExpr => "PrintExpr",
            NodeKind::ExprStmt => "ExprStmt",
            NodeKind::Assign(_) => "Assign",
            NodeKind::If => "If",
            NodeKind::ElseBranch => "ElseBranch",
            NodeKind::While => "While",
            NodeKind::For { .. } => "For",
            NodeKind::Foreach { .. } => "Foreach",
            NodeKind::FunctionDecl(_) => "FunctionDecl",
            NodeKind::Param(_) => "Param",
            NodeKind::Return => "Return",
            NodeKind::GlobalDecl => "GlobalDecl",
            NodeKind::Break => "Break",
            NodeKind::Continue => "Continue",
            NodeKind::Block => "Block",
            NodeKind::Call(_) => "Call",
            NodeKind::Variable(_) => "Variable",
            NodeKind::SuperGlobal(_) => "SuperGlobal",
            NodeKind::StringLit { .. } => "StringLit",
            NodeKind::Concat => "Concat",
            NodeKind::ArrayAccess => "ArrayAccess",
            NodeKind::ArrayLit => "ArrayLit",
            NodeKind::ArrayItem { .. } => "ArrayItem",
            NodeKind::Ternary { .. } => "Ternary",
            NodeKind::BinaryOp(_) => "BinaryOp",
            NodeKind::UnaryOp(_) => "UnaryOp",
            NodeKind::ConstFetch(_) => "ConstFetch",
            NodeKind::Number(_) => "Number",
            NodeKind::Bool(_) => "Bool",
            NodeKind::Null => "Null",
        }
    }

    /// All kind tags, used by the fixture coverage check.
    pub const ALL_TAGS: [&'static str; 33] = [
        "Program",
        "InlineHtml",
        "EchoStmt",
        "PrintExpr",
        "ExprStmt",
        "Assign",
        "If",
        "ElseBranch",
        "While",
        "For",
        "Foreach",
        "FunctionDecl",
        "Param",
        "Return",
        "GlobalDecl",
        "Break",
        "Continue",
        "Block",
        "Call",
        "Variable",
        "SuperGlobal",
        "StringLit",
        "Concat",
        "ArrayAccess",
        "ArrayLit",
        "ArrayItem",
        "Ternary",
        "BinaryOp",
        "UnaryOp",
        "ConstFetch",
        "Number",
        "Bool",
        "Null",
    ];

    /// Statement-level kinds (everything that occupies its own line when emitted).
    pub fn is_statement(&self) -> bool {
        matches!(
            self,
            NodeKind::InlineHtml(_)
                | NodeKind::EchoStmt
                | NodeKind::ExprStmt
                | NodeKind::If
                | NodeKind::While
                | NodeKind::For { .. }
                | NodeKind::Foreach { .. }
                | NodeKind::FunctionDecl(_)
                | NodeKind::Return
                | NodeKind::GlobalDecl
                | NodeKind::Break
                | NodeKind::Continue
                | NodeKind::Block
        )
    }

    /// Statements that guard nested statements with a condition.
    pub fn is_control(&self) -> bool {
        matches!(
            self,
            NodeKind::If | NodeKind::While | NodeKind::For { .. } | NodeKind::Foreach { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub span: Span,
    pub children: Vec<Node>,
}

impl Node {
    pub fn new(kind: NodeKind, children: Vec<Node>) -> Self {
        Node {
            id: 0,
            kind,
            span: Span::default(),
            children,
        }
    }

    pub fn leaf(kind: NodeKind) -> Self {
        Node::new(kind, Vec::new())
    }

    pub fn with_span(mut self, span: Span) -> Self {
        self.span = span;
        self
    }

    pub fn variable(name: &str) -> Self {
        Node::leaf(NodeKind::Variable(name.to_string()))
    }

    pub fn string(value: &str, quote: Quote) -> Self {
        Node::leaf(NodeKind::StringLit {
            value: value.to_string(),
            quote,
        })
    }

    /// `$_GET['key']`
    pub fn get_param(key: &str) -> Self {
        Node::new(
            NodeKind::SuperGlobal(SuperGlobal::Get),
            vec![Node::string(key, Quote::Single)],
        )
    }

    /// Compare kinds, payloads and children recursively; spans and ids are ignored.
    pub fn structurally_eq(&self, other: &Node) -> bool {
        self.kind == other.kind
            && self.children.len() == other.children.len()
            && self
                .children
                .iter()
                .zip(&other.children)
                .all(|(a, b)| a.structurally_eq(b))
    }

    /// Pre-order traversal (source order).
    pub fn walk(&self) -> Walk<'_> {
        Walk { stack: vec![self] }
    }

    pub fn find(&self, id: NodeId) -> Option<&Node> {
        self.walk().find(|n| n.id == id)
    }

    pub fn find_mut(&mut self, id: NodeId) -> Option<&mut Node> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(id))
    }

    /// Ids of the nodes from `self` down to `id`, inclusive, if `id` is in this subtree.
    pub fn path_to(&self, id: NodeId) -> Option<Vec<NodeId>> {
        if self.id == id {
            return Some(vec![self.id]);
        }
        for child in &self.children {
            if let Some(mut path) = child.path_to(id) {
                path.insert(0, self.id);
                return Some(path);
            }
        }
        None
    }

    pub fn max_id(&self) -> NodeId {
        self.walk().map(|n| n.id).max().unwrap_or(0)
    }

    /// Assign pre-order ids starting at `*next`.
    pub fn renumber(&mut self, next: &mut NodeId) {
        self.id = *next;
        *next += 1;
        for child in &mut self.children {
            child.renumber(next);
        }
    }

    /// Give every node with id 0 (freshly constructed) an id above `*next`.
    pub fn assign_fresh_ids(&mut self, next: &mut NodeId) {
        if self.id == 0 && self.kind != NodeKind::Program {
            *next += 1;
            self.id = *next;
        }
        for child in &mut self.children {
            child.assign_fresh_ids(next);
        }
    }

    pub fn variable_name(&self) -> Option<&str> {
        match &self.kind {
            NodeKind::Variable(name) => Some(name),
            _ => None,
        }
    }

    pub fn string_value(&self) -> Option<&str> {
        match &self.kind {
            NodeKind::StringLit { value, .. } => Some(value),
            _ => None,
        }
    }

    /// The `Block` body of a control statement or function.
    pub fn body(&self) -> Option<&Node> {
        match self.kind {
            NodeKind::While
            | NodeKind::For { .. }
            | NodeKind::Foreach { .. }
            | NodeKind::FunctionDecl(_) => self.children.last(),
            NodeKind::If => self.children.get(1),
            _ => None,
        }
    }

    /// Expressions owned directly by a statement: its own operands and headers,
    /// excluding nested statement bodies.
    pub fn own_exprs(&self) -> &[Node] {
        match self.kind {
            NodeKind::EchoStmt | NodeKind::ExprStmt | NodeKind::Return | NodeKind::GlobalDecl => {
                &self.children
            }
            NodeKind::If => &self.children[..1],
            NodeKind::While => &self.children[..1],
            NodeKind::For { .. } | NodeKind::Foreach { .. } => {
                &self.children[..self.children.len() - 1]
            }
            _ => &[],
        }
    }

    /// Statements nested directly under this statement (bodies and else branches).
    pub fn nested_statements(&self) -> Vec<&Node> {
        match self.kind {
            NodeKind::Program | NodeKind::Block => self.children.iter().collect(),
            NodeKind::If => {
                let mut out: Vec<&Node> = self.children[1].children.iter().collect();
                if let Some(else_branch) = self.children.get(2) {
                    let inner = &else_branch.children[0];
                    if inner.kind == NodeKind::Block {
                        out.extend(inner.children.iter());
                    } else {
                        out.push(inner);
                    }
                }
                out
            }
            NodeKind::While
            | NodeKind::For { .. }
            | NodeKind::Foreach { .. }
            | NodeKind::FunctionDecl(_) => self.children.last().unwrap().children.iter().collect(),
            _ => Vec::new(),
        }
    }
}

pub struct Walk<'a> {
    stack: Vec<&'a Node>,
}

impl<'a> Iterator for Walk<'a> {
    type Item = &'a Node;

    fn next(&mut self) -> Option<&'a Node> {
        let node = self.stack.pop()?;
        self.stack.extend(node.children.iter().rev());
        Some(node)
    }
}

/// A parsed file: a `Program` node whose children are the top-level statements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub root: Node,
}

impl Program {
    pub fn new(statements: Vec<Node>) -> Self {
        let mut root = Node::new(NodeKind::Program, statements);
        let mut next = 0;
        root.renumber(&mut next);
        Program { root }
    }

    /// Build a program that keeps the existing ids and numbers new nodes above them.
    pub fn from_statements_keep_ids(statements: Vec<Node>, mut next: NodeId) -> Self {
        let mut root = Node::new(NodeKind::Program, statements);
        root.id = 0;
        for child in &mut root.children {
            child.assign_fresh_ids(&mut next);
        }
        Program { root }
    }

    pub fn statements(&self) -> &[Node] {
        &self.root.children
    }

    pub fn find(&self, id: NodeId) -> Option<&Node> {
        self.root.find(id)
    }

    pub fn structurally_eq(&self, other: &Program) -> bool {
        self.root.structurally_eq(&other.root)
    }

    /// Every statement node in the program, outer before inner, including
    /// statements inside function bodies.
    pub fn all_statements(&self) -> Vec<&Node> {
        self.root
            .walk()
            .filter(|n| n.kind.is_statement() && n.kind != NodeKind::Block)
            .collect()
    }

    pub fn max_id(&self) -> NodeId {
        self.root.max_id()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::emit::emit_program(self))
    }
}
