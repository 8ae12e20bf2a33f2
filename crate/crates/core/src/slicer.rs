//! Backward slicing of one taint candidate into a self-contained snippet.
//!
//! The slice keeps the sink, every statement that (transitively) defines a
//! relevant variable, and the control statements enclosing anything kept.
//! Control dependence is syntactic enclosure. Sinks inside functions are
//! sliced over the function body after *globalization*: parameters become
//! request input and `global` declarations disappear.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{accesses, expr_accesses, stmt_def_use, target_accesses, Access, AccessKind};
use crate::php::ast::{AssignOp, Quote};
use crate::php::{self, emit_program_marked, line_of, Node, NodeId, NodeKind, Program, Span};
use crate::sinks::{flow_operands, sink_at, SinkKind, SinkRules, TaintCandidate};

/// Stand-in for concatenated variables other than the one under analysis.
pub const DEFAULT_CONSTANT: &str = "x";

pub fn taint_marker(var: &str) -> String {
    format!("/* taint: ${var} */")
}

const MARKER_OPEN: &str = "/* taint: $";

/// Where a snippet came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub project: String,
    pub file: String,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewriteMode {
    /// Parameter reads replaced by `$_GET['p']`.
    Substitute,
    /// `$p = $_GET['p'];` prepended; reads left alone.
    Prepend,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamRewrite {
    pub param: String,
    pub mode: RewriteMode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snippet {
    pub code: String,
    pub cwe: SinkKind,
    pub taint_var: String,
    /// 1-based line of the sink (and its marker) in `code`.
    pub sink_line: usize,
    pub origin: Origin,
    /// Name of the function the sink sat in, if the body was globalized.
    pub from_function: Option<String>,
    /// Nothing but the sink mentions the taint variable.
    pub slice_empty: bool,
    pub rewrites: Vec<ParamRewrite>,
}

#[derive(Debug, Error)]
pub enum SliceError {
    #[error("sink statement {0} not found in program")]
    SinkNotFound(NodeId),
    #[error("variable `{0}` is not an operand of the sink")]
    NotAnOperand(String),
    #[error("slice violates the single-sink invariant: {0}")]
    InvariantViolated(String),
}

#[derive(Debug, Clone)]
pub struct SliceOptions {
    pub constant: String,
    pub rules: SinkRules,
}

impl Default for SliceOptions {
    fn default() -> Self {
        SliceOptions {
            constant: DEFAULT_CONSTANT.to_string(),
            rules: SinkRules::default(),
        }
    }
}

pub fn slice(program: &Program, cand: &TaintCandidate) -> Result<Snippet, SliceError> {
    slice_with(program, cand, &SliceOptions::default())
}

pub fn slice_with(
    program: &Program,
    cand: &TaintCandidate,
    opts: &SliceOptions,
) -> Result<Snippet, SliceError> {
    let sink_id = cand.sink.stmt_id;
    let path = program
        .root
        .path_to(sink_id)
        .ok_or(SliceError::SinkNotFound(sink_id))?;
    let decl = path
        .iter()
        .rev()
        .filter_map(|id| program.find(*id))
        .find(|n| matches!(n.kind, NodeKind::FunctionDecl(_)));

    let mut next_id = program.max_id() + 1;
    let (mut scope, from_function, rewrites) = match decl {
        Some(decl) => {
            let name = match &decl.kind {
                NodeKind::FunctionDecl(name) => name.clone(),
                _ => unreachable!(),
            };
            (
                decl.body().unwrap().children.clone(),
                Some(name),
                Vec::new(),
            )
        }
        None => (program.statements().to_vec(), None, Vec::new()),
    };

    // The other concatenated variables become constants.
    {
        let sink = find_in(&mut scope, sink_id).ok_or(SliceError::SinkNotFound(sink_id))?;
        let site = sink_at(sink, cand.sink.kind, &opts.rules)
            .ok_or_else(|| SliceError::NotAnOperand(cand.var.clone()))?;
        if !site.concat_vars.contains(&cand.var) {
            return Err(SliceError::NotAnOperand(cand.var.clone()));
        }
        let replace: Vec<NodeId> = site
            .exprs
            .iter()
            .filter_map(|id| sink.find(*id))
            .flat_map(flow_operands)
            .filter(|op| op.var != cand.var)
            .map(|op| op.node)
            .collect();
        for id in replace {
            if let Some(node) = sink.find_mut(id) {
                *node = Node::string(&opts.constant, Quote::Single).with_span(node.span);
                node.id = id;
            }
        }
    }

    let mut rewrites = rewrites;
    if let Some(decl) = decl {
        let params: Vec<String> = decl
            .children
            .iter()
            .filter_map(|c| match &c.kind {
                NodeKind::Param(p) => Some(p.clone()),
                _ => None,
            })
            .collect();
        rewrites = globalize_stmts(&mut scope, &params, &mut next_id);
    }

    // The taint variable after rewriting: `_GET` if the read was substituted.
    let sink = find_in(&mut scope, sink_id).ok_or(SliceError::SinkNotFound(sink_id))?;
    let site = sink_at(sink, cand.sink.kind, &opts.rules).ok_or_else(|| {
        SliceError::InvariantViolated("sink lost its operands during rewriting".into())
    })?;
    if site.concat_vars.len() != 1 {
        return Err(SliceError::InvariantViolated(format!(
            "sink has {} variables after constant substitution",
            site.concat_vars.len()
        )));
    }
    let taint_var = site.concat_vars[0].clone();

    let infos = statement_infos(&scope);
    let included = closure(&infos, sink_id, &taint_var);
    let slice_empty = !infos.iter().any(|info| {
        info.id != sink_id
            && (info.du_defs.contains(&taint_var) || info.du_uses.contains(&taint_var))
    });

    let kept = rebuild(scope, &included);
    let sliced = Program::from_statements_keep_ids(kept, next_id);
    let code = emit_program_marked(&sliced, sink_id, &taint_marker(&taint_var));
    let verified = verify_snippet(&code, cand.sink.kind, &opts.rules)
        .map_err(SliceError::InvariantViolated)?;
    if verified.taint_var != taint_var {
        return Err(SliceError::InvariantViolated(format!(
            "re-scan found `{}` instead of `{taint_var}`",
            verified.taint_var
        )));
    }

    Ok(Snippet {
        code,
        cwe: cand.sink.kind,
        taint_var,
        sink_line: verified.sink_line,
        origin: Origin {
            span: cand.sink.span,
            ..Origin::default()
        },
        from_function,
        slice_empty,
        rewrites,
    })
}

fn find_in(stmts: &mut [Node], id: NodeId) -> Option<&mut Node> {
    stmts.iter_mut().find_map(|s| s.find_mut(id))
}

// ---------------------------------------------------------------------------
// Closure

#[derive(Debug)]
pub(crate) struct StmtInfo {
    pub id: NodeId,
    pub du_defs: BTreeSet<String>,
    pub du_uses: BTreeSet<String>,
    /// Enclosing control statements, outermost first.
    pub enclosing: Vec<NodeId>,
}

/// Every statement of `scope` (function bodies excluded) with its def/use
/// sets and enclosing controls.
pub(crate) fn statement_infos(scope: &[Node]) -> Vec<StmtInfo> {
    fn visit(node: &Node, enclosing: &mut Vec<NodeId>, out: &mut Vec<StmtInfo>) {
        match node.kind {
            NodeKind::FunctionDecl(_) => return,
            NodeKind::Block => {
                for s in &node.children {
                    visit(s, enclosing, out);
                }
                return;
            }
            _ => {}
        }
        let du = stmt_def_use(node);
        out.push(StmtInfo {
            id: node.id,
            du_defs: du.defs,
            du_uses: du.uses,
            enclosing: enclosing.clone(),
        });
        if node.kind.is_control() {
            enclosing.push(node.id);
            for s in node.nested_statements() {
                visit(s, enclosing, out);
            }
            enclosing.pop();
        }
    }
    let mut out = Vec::new();
    let mut enclosing = Vec::new();
    for s in scope {
        visit(s, &mut enclosing, &mut out);
    }
    out
}

/// Fixed point: start from the sink with `{taint}` relevant; pull in every
/// statement defining a relevant variable, add its uses, and add the
/// enclosing controls of everything included together with their uses.
pub(crate) fn closure(infos: &[StmtInfo], sink: NodeId, taint: &str) -> HashSet<NodeId> {
    let by_id: HashMap<NodeId, &StmtInfo> = infos.iter().map(|i| (i.id, i)).collect();
    let mut included = HashSet::new();
    let mut relevant: BTreeSet<String> = BTreeSet::from([taint.to_string()]);

    let include = |id: NodeId,
                   add_uses: bool,
                   included: &mut HashSet<NodeId>,
                   relevant: &mut BTreeSet<String>| {
        let info = by_id[&id];
        included.insert(id);
        if add_uses {
            relevant.extend(info.du_uses.iter().cloned());
        }
        for ctrl in &info.enclosing {
            if included.insert(*ctrl) {
                relevant.extend(by_id[ctrl].du_uses.iter().cloned());
            }
        }
    };

    // The sink's own uses other than the taint variable were either replaced
    // by constants or do not flow into the sink.
    include(sink, false, &mut included, &mut relevant);
    loop {
        let mut changed = false;
        for info in infos {
            if info.id == sink || included.contains(&info.id) {
                continue;
            }
            if info.du_defs.iter().any(|d| relevant.contains(d)) {
                include(info.id, true, &mut included, &mut relevant);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    included
}

/// Drop everything not included, keeping order and nesting.
fn rebuild(stmts: Vec<Node>, included: &HashSet<NodeId>) -> Vec<Node> {
    let mut out = Vec::new();
    for mut stmt in stmts {
        match stmt.kind {
            NodeKind::FunctionDecl(_) => {}
            NodeKind::Block => {
                stmt.children = rebuild(std::mem::take(&mut stmt.children), included);
                if !stmt.children.is_empty() {
                    out.push(stmt);
                }
            }
            NodeKind::If if included.contains(&stmt.id) => {
                let then = &mut stmt.children[1];
                then.children = rebuild(std::mem::take(&mut then.children), included);
                if stmt.children.len() == 3 {
                    let mut else_branch = stmt.children.pop().unwrap();
                    let inner = else_branch.children.pop().unwrap();
                    let kept = if inner.kind == NodeKind::If {
                        rebuild(vec![inner], included).pop()
                    } else {
                        let mut block = inner;
                        block.children = rebuild(std::mem::take(&mut block.children), included);
                        (!block.children.is_empty()).then_some(block)
                    };
                    if let Some(inner) = kept {
                        else_branch.children.push(inner);
                        stmt.children.push(else_branch);
                    }
                }
                out.push(stmt);
            }
            NodeKind::While | NodeKind::For { .. } | NodeKind::Foreach { .. }
                if included.contains(&stmt.id) =>
            {
                let body = stmt.children.last_mut().unwrap();
                body.children = rebuild(std::mem::take(&mut body.children), included);
                out.push(stmt);
            }
            _ if included.contains(&stmt.id) && !stmt.kind.is_control() => out.push(stmt),
            _ => {}
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Globalization

/// Result of unwrapping a function body into top-level code.
#[derive(Debug, Clone)]
pub struct Globalized {
    pub program: Program,
    pub rewrites: Vec<ParamRewrite>,
}

/// Turn a function declaration into top-level code: `global` declarations
/// are dropped and parameters become request input.
///
/// A parameter whose every parameter-reached read sees only the parameter's
/// value is substituted at those reads. If some read may also see a local
/// assignment, or the parameter is partially overwritten (`.=`, `++`,
/// element writes) while still holding the input, substitution would change
/// the data flow, so `$p = $_GET['p'];` is prepended instead. Parameters
/// whose reads are all preceded by local writes are left alone.
pub fn globalize(decl: &Node) -> Globalized {
    let params: Vec<String> = decl
        .children
        .iter()
        .filter_map(|c| match &c.kind {
            NodeKind::Param(p) => Some(p.clone()),
            _ => None,
        })
        .collect();
    let mut body = decl.body().map(|b| b.children.clone()).unwrap_or_default();
    let mut next = decl.max_id() + 1;
    let rewrites = globalize_stmts(&mut body, &params, &mut next);
    Globalized {
        program: Program::new(body),
        rewrites,
    }
}

fn globalize_stmts(
    body: &mut Vec<Node>,
    params: &[String],
    next: &mut NodeId,
) -> Vec<ParamRewrite> {
    drop_globals(body);
    let mut rd = ReachingDefs::default();
    let mut state = State::new();
    for p in params {
        state.insert(p.clone(), BTreeSet::from([Def::Param]));
    }
    rd.stmts(body, state);

    let mut rewrites = Vec::new();
    let mut prepend = Vec::new();
    for p in params {
        let param_reads: Vec<(&NodeId, &BTreeSet<Def>)> = rd
            .reads
            .iter()
            .filter(|(_, (name, defs))| name == p && defs.contains(&Def::Param))
            .map(|(id, (_, defs))| (id, defs))
            .collect();
        let partial = rd.partial.contains(p);
        if param_reads.is_empty() && !partial {
            continue;
        }
        let mixed = partial || param_reads.iter().any(|(_, defs)| defs.len() > 1);
        if mixed {
            let mut stmt = Node::new(
                NodeKind::ExprStmt,
                vec![Node::new(
                    NodeKind::Assign(AssignOp::Assign),
                    vec![Node::variable(p), Node::get_param(p)],
                )],
            );
            stmt.assign_fresh_ids(next);
            prepend.push(stmt);
            rewrites.push(ParamRewrite {
                param: p.clone(),
                mode: RewriteMode::Prepend,
            });
        } else {
            let ids: Vec<NodeId> = param_reads.iter().map(|(id, _)| **id).collect();
            for id in ids {
                if let Some(node) = find_in(body, id) {
                    let mut replacement = Node::get_param(p).with_span(node.span);
                    replacement.children[0].assign_fresh_ids(next);
                    replacement.id = id;
                    *node = replacement;
                }
            }
            rewrites.push(ParamRewrite {
                param: p.clone(),
                mode: RewriteMode::Substitute,
            });
        }
    }
    if !prepend.is_empty() {
        prepend.append(body);
        *body = prepend;
    }
    rewrites
}

fn drop_globals(stmts: &mut Vec<Node>) {
    stmts.retain(|s| s.kind != NodeKind::GlobalDecl);
    for s in stmts.iter_mut() {
        for child in &mut s.children {
            match child.kind {
                NodeKind::Block => drop_globals(&mut child.children),
                NodeKind::ElseBranch => {
                    if child.children[0].kind == NodeKind::Block {
                        drop_globals(&mut child.children[0].children);
                    } else {
                        let mut inner = vec![child.children.remove(0)];
                        drop_globals(&mut inner);
                        child.children.insert(0, inner.pop().unwrap());
                    }
                }
                _ => {}
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Def {
    Param,
    At(NodeId),
}

type State = BTreeMap<String, BTreeSet<Def>>;

/// Flow-sensitive reaching definitions over the AST. Branches merge by
/// union, loops iterate to a fixed point, and jumps are treated as
/// fall-through (more definitions reach, which only makes the rewrite more
/// conservative).
#[derive(Default)]
struct ReachingDefs {
    /// Read occurrence → (variable, definitions reaching it).
    reads: BTreeMap<NodeId, (String, BTreeSet<Def>)>,
    /// Parameters overwritten in place while still holding the input.
    partial: BTreeSet<String>,
}

fn merge(mut a: State, b: State) -> State {
    for (k, v) in b {
        a.entry(k).or_default().extend(v);
    }
    a
}

impl ReachingDefs {
    fn apply(&mut self, acc: &[Access], mut state: State) -> State {
        for a in acc {
            let reaching = state.get(&a.name).cloned().unwrap_or_default();
            match a.kind {
                AccessKind::Read => {
                    self.reads
                        .entry(a.node)
                        .or_insert_with(|| (a.name.clone(), BTreeSet::new()))
                        .1
                        .extend(reaching);
                }
                AccessKind::Write => {
                    state.insert(a.name.clone(), BTreeSet::from([Def::At(a.node)]));
                }
                AccessKind::ReadWrite => {
                    if reaching.contains(&Def::Param) {
                        self.partial.insert(a.name.clone());
                    }
                    self.reads
                        .entry(a.node)
                        .or_insert_with(|| (a.name.clone(), BTreeSet::new()))
                        .1
                        .extend(reaching);
                    state
                        .entry(a.name.clone())
                        .or_default()
                        .insert(Def::At(a.node));
                }
            }
        }
        state
    }

    fn stmts(&mut self, stmts: &[Node], mut state: State) -> State {
        for s in stmts {
            state = self.stmt(s, state);
        }
        state
    }

    /// Run `body` (preceded by `head` each iteration) to a fixed point.
    fn looping(
        &mut self,
        state: State,
        head: &[Access],
        targets: &[Access],
        body: &[Node],
        step: &[Access],
    ) -> State {
        let mut entry = state.clone();
        loop {
            let checked = self.apply(head, entry.clone());
            let mut inner = self.apply(targets, checked.clone());
            inner = self.stmts(body, inner);
            inner = self.apply(step, inner);
            let next = merge(state.clone(), inner);
            if next == entry {
                return checked;
            }
            entry = next;
        }
    }

    fn stmt(&mut self, node: &Node, state: State) -> State {
        match &node.kind {
            NodeKind::FunctionDecl(_) => state,
            NodeKind::Block => self.stmts(&node.children, state),
            NodeKind::If => {
                let state = self.apply(&expr_accesses(&node.children[0]), state);
                let then = self.stmts(&node.children[1].children, state.clone());
                let other = match node.children.get(2) {
                    Some(e) if e.children[0].kind == NodeKind::If => {
                        self.stmt(&e.children[0], state)
                    }
                    Some(e) => self.stmts(&e.children[0].children, state),
                    None => state,
                };
                merge(then, other)
            }
            NodeKind::While => {
                let head = expr_accesses(&node.children[0]);
                self.looping(state, &head, &[], &node.children[1].children, &[])
            }
            NodeKind::For { init, cond, step } => {
                let all = |nodes: &[Node]| nodes.iter().flat_map(expr_accesses).collect::<Vec<_>>();
                let (i, rest) = node.children.split_at(*init);
                let (c, rest) = rest.split_at(*cond);
                let s = &rest[..*step];
                let state = self.apply(&all(i), state);
                let body = &node.children.last().unwrap().children;
                self.looping(state, &all(c), &[], body, &all(s))
            }
            NodeKind::Foreach { .. } => {
                let exprs = node.own_exprs();
                let state = self.apply(&expr_accesses(&exprs[0]), state);
                let targets: Vec<Access> = exprs[1..]
                    .iter()
                    .flat_map(|t| target_accesses(t, false))
                    .collect();
                let body = &node.children.last().unwrap().children;
                self.looping(state, &[], &targets, body, &[])
            }
            _ => self.apply(&accesses(node), state),
        }
    }
}

// ---------------------------------------------------------------------------
// Verification

/// What a valid snippet re-scans to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedSink {
    pub taint_var: String,
    pub sink_line: usize,
    pub stmt_id: NodeId,
}

/// Count taint markers in `code`.
pub fn marker_count(code: &str) -> usize {
    code.matches(MARKER_OPEN).count()
}

/// Variable named by the first taint marker.
pub fn marker_var(code: &str) -> Option<(String, usize)> {
    let start = code.find(MARKER_OPEN)?;
    let rest = &code[start + MARKER_OPEN.len()..];
    let end = rest.find(" */")?;
    Some((rest[..end].to_string(), line_of(code, start)))
}

/// Check the single-sink invariant: the code parses, has exactly one sink
/// of `kind` with exactly one variable, and exactly one marker naming that
/// variable on the sink's line.
pub fn verify_snippet(
    code: &str,
    kind: SinkKind,
    rules: &SinkRules,
) -> Result<VerifiedSink, String> {
    let program = php::parse(code).map_err(|e| format!("does not parse: {e}"))?;
    let sites = crate::sinks::find_sinks_with(&program, kind, rules);
    if sites.len() != 1 {
        return Err(format!("{} sinks of {kind}", sites.len()));
    }
    let site = &sites[0];
    if site.concat_vars.len() != 1 {
        return Err(format!("sink has variables {:?}", site.concat_vars));
    }
    let count = marker_count(code);
    if count != 1 {
        return Err(format!("{count} taint markers"));
    }
    let (var, line) = marker_var(code).ok_or("malformed taint marker")?;
    if var != site.concat_vars[0] {
        return Err(format!(
            "marker names `{var}` but sink reads `{}`",
            site.concat_vars[0]
        ));
    }
    let first = line_of(code, site.span.start);
    let last = line_of(code, site.span.end);
    if line < first || line > last {
        return Err(format!(
            "marker on line {line}, sink on lines {first}..={last}"
        ));
    }
    Ok(VerifiedSink {
        taint_var: var,
        sink_line: line,
        stmt_id: site.stmt_id,
    })
}
