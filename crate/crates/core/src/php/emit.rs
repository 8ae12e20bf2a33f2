//! Canonical pretty-printer.
//!
//! Output is deterministic: four-space indentation, braces on every body,
//! one statement per line and only the parentheses precedence requires.
//! Parsing the output yields a structurally equal tree.

use super::ast::{Node, NodeId, NodeKind, Program, Quote, UnOp};
use super::parser::{
    binop_non_assoc, binop_prec, binop_right_assoc, PREC_ASSIGN, PREC_CONCAT, PREC_LOW_OR,
    PREC_POSTFIX, PREC_PRIMARY, PREC_PRINT, PREC_TERNARY, PREC_UNARY,
};

const INDENT: &str = "    ";

/// Emit a whole program.
pub fn emit_program(program: &Program) -> String {
    Emitter { mark: None }.program(program)
}

/// Emit a program with `marker` (normally a comment) appended to the line of
/// statement `stmt_id`: after the `;` of a simple statement or after the `{`
/// that opens a compound one.
pub fn emit_program_marked(program: &Program, stmt_id: NodeId, marker: &str) -> String {
    Emitter {
        mark: Some((stmt_id, marker)),
    }
    .program(program)
}

/// Emit a single statement at indentation level zero.
pub fn emit_statement(node: &Node) -> String {
    let mut out = String::new();
    Emitter { mark: None }.stmt(node, 0, &mut out);
    out
}

/// Emit a single expression.
pub fn emit_expr(node: &Node) -> String {
    let mut out = String::new();
    expr(node, PREC_LOW_OR, &mut out);
    out
}

struct Emitter<'m> {
    mark: Option<(NodeId, &'m str)>,
}

impl Emitter<'_> {
    fn program(&self, program: &Program) -> String {
        let mut out = String::from("<?php");
        for stmt in program.statements() {
            out.push('\n');
            self.stmt(stmt, 0, &mut out);
        }
        out
    }

    fn marker_for(&self, node: &Node, out: &mut String) {
        if let Some((id, marker)) = self.mark {
            if id == node.id {
                out.push(' ');
                out.push_str(marker);
            }
        }
    }

    fn indent(out: &mut String, level: usize) {
        for _ in 0..level {
            out.push_str(INDENT);
        }
    }

    fn simple(&self, node: &Node, level: usize, text: &str, out: &mut String) {
        Self::indent(out, level);
        out.push_str(text);
        self.marker_for(node, out);
    }

    /// Header line, body statements and the closing brace.
    fn compound(&self, node: &Node, level: usize, header: &str, body: &Node, out: &mut String) {
        Self::indent(out, level);
        out.push_str(header);
        out.push_str(" {");
        self.marker_for(node, out);
        self.block_tail(body, level, out);
    }

    fn block_tail(&self, body: &Node, level: usize, out: &mut String) {
        for stmt in &body.children {
            out.push('\n');
            self.stmt(stmt, level + 1, out);
        }
        out.push('\n');
        Self::indent(out, level);
        out.push('}');
    }

    fn stmt(&self, node: &Node, level: usize, out: &mut String) {
        match &node.kind {
            NodeKind::EchoStmt => {
                let args: Vec<String> = node.children.iter().map(emit_expr).collect();
                self.simple(node, level, &format!("echo {};", args.join(", ")), out);
            }
            NodeKind::ExprStmt => {
                self.simple(
                    node,
                    level,
                    &format!("{};", emit_expr(&node.children[0])),
                    out,
                );
            }
            NodeKind::Return => {
                let text = match node.children.first() {
                    Some(value) => format!("return {};", emit_expr(value)),
                    None => "return;".to_string(),
                };
                self.simple(node, level, &text, out);
            }
            NodeKind::Break | NodeKind::Continue => {
                let word = if node.kind == NodeKind::Break {
                    "break"
                } else {
                    "continue"
                };
                let text = match node.children.first() {
                    Some(depth) => format!("{word} {};", emit_expr(depth)),
                    None => format!("{word};"),
                };
                self.simple(node, level, &text, out);
            }
            NodeKind::GlobalDecl => {
                let vars: Vec<String> = node.children.iter().map(emit_expr).collect();
                self.simple(node, level, &format!("global {};", vars.join(", ")), out);
            }
            NodeKind::InlineHtml(raw) => {
                // The lexer drops one newline directly after `?>`, so a leading
                // newline in the HTML needs a sacrificial one in front of it.
                let sep = if raw.starts_with('\n') || raw.starts_with("\r\n") {
                    "\n"
                } else {
                    ""
                };
                Self::indent(out, level);
                out.push_str("?>");
                out.push_str(sep);
                out.push_str(raw);
                out.push_str("<?php");
                self.marker_for(node, out);
            }
            NodeKind::Block => {
                Self::indent(out, level);
                out.push('{');
                self.marker_for(node, out);
                self.block_tail(node, level, out);
            }
            NodeKind::If => self.if_chain(node, level, out, false),
            NodeKind::While => {
                let header = format!("while ({})", emit_expr(&node.children[0]));
                self.compound(node, level, &header, &node.children[1], out);
            }
            NodeKind::For { init, cond, step } => {
                let list =
                    |nodes: &[Node]| nodes.iter().map(emit_expr).collect::<Vec<_>>().join(", ");
                let (init_nodes, rest) = node.children.split_at(*init);
                let (cond_nodes, rest) = rest.split_at(*cond);
                let step_nodes = &rest[..*step];
                let spaced = |nodes: &[Node]| {
                    if nodes.is_empty() {
                        String::new()
                    } else {
                        format!(" {}", list(nodes))
                    }
                };
                let header = format!(
                    "for ({};{};{})",
                    list(init_nodes),
                    spaced(cond_nodes),
                    spaced(step_nodes)
                );
                self.compound(node, level, &header, node.children.last().unwrap(), out);
            }
            NodeKind::Foreach { has_key } => {
                let subject = emit_expr(&node.children[0]);
                let target = if *has_key {
                    format!(
                        "{} => {}",
                        emit_expr(&node.children[1]),
                        emit_expr(&node.children[2])
                    )
                } else {
                    emit_expr(&node.children[1])
                };
                let header = format!("foreach ({subject} as {target})");
                self.compound(node, level, &header, node.children.last().unwrap(), out);
            }
            NodeKind::FunctionDecl(name) => {
                let (params, body) = node.children.split_at(node.children.len() - 1);
                let params: Vec<String> = params.iter().map(param).collect();
                let header = format!("function {name}({})", params.join(", "));
                self.compound(node, level, &header, &body[0], out);
            }
            other => {
                // Expression kinds never appear in statement position in a
                // well-formed tree; emit them as expression statements.
                debug_assert!(false, "expression {} in statement position", other.tag());
                self.simple(node, level, &format!("{};", emit_expr(node)), out);
            }
        }
    }

    fn if_chain(&self, node: &Node, level: usize, out: &mut String, is_elseif: bool) {
        let cond = emit_expr(&node.children[0]);
        if is_elseif {
            out.push_str(&format!(" elseif ({cond}) {{"));
        } else {
            Self::indent(out, level);
            out.push_str(&format!("if ({cond}) {{"));
        }
        self.marker_for(node, out);
        self.block_tail(&node.children[1], level, out);
        if let Some(else_branch) = node.children.get(2) {
            let inner = &else_branch.children[0];
            if inner.kind == NodeKind::If {
                self.if_chain(inner, level, out, true);
            } else {
                out.push_str(" else {");
                self.marker_for(else_branch, out);
                self.block_tail(inner, level, out);
            }
        }
    }
}

fn param(node: &Node) -> String {
    let NodeKind::Param(name) = &node.kind else {
        return emit_expr(node);
    };
    match node.children.first() {
        Some(default) => format!("${name} = {}", emit_expr(default)),
        None => format!("${name}"),
    }
}

/// Binding power of an expression node as the parser would produce it.
fn node_prec(node: &Node) -> u8 {
    match &node.kind {
        NodeKind::Assign(_) => PREC_ASSIGN,
        NodeKind::PrintExpr => PREC_PRINT,
        NodeKind::Call(name) if is_include(name) => PREC_PRINT,
        NodeKind::Ternary { .. } => PREC_TERNARY,
        NodeKind::BinaryOp(op) => binop_prec(*op),
        NodeKind::Concat => PREC_CONCAT,
        NodeKind::UnaryOp(UnOp::PostInc | UnOp::PostDec) => PREC_POSTFIX,
        NodeKind::UnaryOp(_) => PREC_UNARY,
        _ => PREC_PRIMARY,
    }
}

fn is_include(name: &str) -> bool {
    matches!(
        name,
        "include" | "include_once" | "require" | "require_once"
    )
}

fn expr(node: &Node, min: u8, out: &mut String) {
    if node_prec(node) < min {
        out.push('(');
        expr(node, PREC_LOW_OR, out);
        out.push(')');
        return;
    }
    let kids = &node.children;
    match &node.kind {
        NodeKind::Variable(name) => {
            out.push('$');
            out.push_str(name);
        }
        NodeKind::SuperGlobal(global) => {
            out.push('$');
            out.push_str(global.name());
            if let Some(key) = kids.first() {
                out.push('[');
                expr(key, PREC_LOW_OR, out);
                out.push(']');
            }
        }
        NodeKind::StringLit { value, quote } => {
            let q = match quote {
                Quote::Single => '\'',
                Quote::Double => '"',
            };
            out.push(q);
            out.push_str(value);
            out.push(q);
        }
        NodeKind::Number(raw) | NodeKind::ConstFetch(raw) => out.push_str(raw),
        NodeKind::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        NodeKind::Null => out.push_str("null"),
        NodeKind::Call(name) if is_include(name) => {
            out.push_str(name);
            out.push(' ');
            expr(&kids[0], PREC_ASSIGN, out);
        }
        NodeKind::Call(name) => {
            out.push_str(name);
            out.push('(');
            comma_list(kids, out);
            out.push(')');
        }
        NodeKind::ArrayLit => {
            out.push('[');
            comma_list(kids, out);
            out.push(']');
        }
        NodeKind::ArrayItem { has_key } => {
            if *has_key {
                expr(&kids[0], PREC_LOW_OR, out);
                out.push_str(" => ");
                expr(&kids[1], PREC_LOW_OR, out);
            } else {
                expr(&kids[0], PREC_LOW_OR, out);
            }
        }
        NodeKind::ArrayAccess => {
            expr(&kids[0], PREC_POSTFIX, out);
            out.push('[');
            if let Some(index) = kids.get(1) {
                expr(index, PREC_LOW_OR, out);
            }
            out.push(']');
        }
        NodeKind::Assign(op) => {
            expr(&kids[0], PREC_POSTFIX, out);
            out.push(' ');
            out.push_str(op.as_str());
            out.push(' ');
            expr(&kids[1], PREC_ASSIGN, out);
        }
        NodeKind::PrintExpr => {
            out.push_str("print ");
            expr(&kids[0], PREC_ASSIGN, out);
        }
        NodeKind::Concat => {
            for (i, part) in kids.iter().enumerate() {
                if i > 0 {
                    out.push_str(" . ");
                }
                expr(part, PREC_CONCAT + 1, out);
            }
        }
        NodeKind::Ternary { short } => {
            expr(&kids[0], PREC_TERNARY + 1, out);
            if *short {
                out.push_str(" ?: ");
                expr(&kids[1], PREC_TERNARY + 1, out);
            } else {
                out.push_str(" ? ");
                expr(&kids[1], PREC_TERNARY + 1, out);
                out.push_str(" : ");
                expr(&kids[2], PREC_TERNARY + 1, out);
            }
        }
        NodeKind::BinaryOp(op) => {
            let p = binop_prec(*op);
            let (left_min, right_min) = if binop_right_assoc(*op) {
                (p + 1, p)
            } else if binop_non_assoc(*op) {
                (p + 1, p + 1)
            } else {
                (p, p + 1)
            };
            expr(&kids[0], left_min, out);
            out.push(' ');
            out.push_str(op.as_str());
            out.push(' ');
            expr(&kids[1], right_min, out);
        }
        NodeKind::UnaryOp(op) => unary(*op, &kids[0], out),
        other => {
            debug_assert!(false, "statement {} in expression position", other.tag());
            out.push_str(other.tag());
        }
    }
}

fn unary(op: UnOp, operand: &Node, out: &mut String) {
    let prefix = match op {
        UnOp::Not => "!",
        UnOp::Neg => "-",
        UnOp::Plus => "+",
        UnOp::BitNot => "~",
        UnOp::Silence => "@",
        UnOp::PreInc => "++",
        UnOp::PreDec => "--",
        UnOp::Cast(cast) => {
            out.push('(');
            out.push_str(cast.as_str());
            out.push(')');
            expr(operand, PREC_UNARY, out);
            return;
        }
        UnOp::PostInc | UnOp::PostDec => {
            expr(operand, PREC_POSTFIX, out);
            out.push_str(if op == UnOp::PostInc { "++" } else { "--" });
            return;
        }
    };
    out.push_str(prefix);
    match op {
        UnOp::PreInc | UnOp::PreDec => expr(operand, PREC_POSTFIX, out),
        // `- -$a` and `-(--$a)` must not fuse into `--`.
        UnOp::Neg | UnOp::Plus if matches!(operand.kind, NodeKind::UnaryOp(_)) => {
            out.push('(');
            expr(operand, PREC_LOW_OR, out);
            out.push(')');
        }
        _ => expr(operand, PREC_UNARY, out),
    }
}

fn comma_list(nodes: &[Node], out: &mut String) {
    for (i, node) in nodes.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        expr(node, PREC_LOW_OR, out);
    }
}

#[cfg(test)]
mod tests {
    use crate::php::parse;

    fn canon(src: &str) -> String {
        parse(src).unwrap().to_string()
    }

    #[test]
    fn canonical_layout() {
        assert_eq!(
            canon("<?php if($a){echo $a;}else{echo 'x';}"),
            "<?php\nif ($a) {\n    echo $a;\n} else {\n    echo 'x';\n}"
        );
        assert_eq!(
            canon("<?php for($i=0;$i<3;$i++) foreach ($r as $k=>$v) echo $v;"),
            "<?php\nfor ($i = 0; $i < 3; $i++) {\n    foreach ($r as $k => $v) {\n        echo $v;\n    }\n}"
        );
        assert_eq!(canon("<?php for(;;){}"), "<?php\nfor (;;) {\n}");
    }

    #[test]
    fn minimal_parentheses() {
        assert_eq!(
            canon("<?php echo ($a . $b) . $c;"),
            "<?php\necho ($a . $b) . $c;"
        );
        assert_eq!(
            canon("<?php $x = ($a + $b) * $c;"),
            "<?php\n$x = ($a + $b) * $c;"
        );
        assert_eq!(
            canon("<?php $x = $a + ($b * $c);"),
            "<?php\n$x = $a + $b * $c;"
        );
        assert_eq!(canon("<?php $x = - -$a;"), "<?php\n$x = -(-$a);");
        assert_eq!(canon("<?php $x = (-2) ** 2;"), "<?php\n$x = (-2) ** 2;");
    }

    #[test]
    fn marker_placement() {
        let p = parse("<?php $a = 1;\nif ($a) {\n    echo $a;\n}").unwrap();
        let echo = p.all_statements()[2].id;
        let iff = p.all_statements()[1].id;
        assert_eq!(
            super::emit_program_marked(&p, echo, "/* m */"),
            "<?php\n$a = 1;\nif ($a) {\n    echo $a; /* m */\n}"
        );
        assert_eq!(
            super::emit_program_marked(&p, iff, "/* m */"),
            "<?php\n$a = 1;\nif ($a) { /* m */\n    echo $a;\n}"
        );
    }

    #[test]
    fn inline_html_round_trips() {
        let src = "<p>hi</p>\n<?php echo 1; ?>\n\n<b>x</b>";
        let first = parse(src).unwrap();
        let again = parse(&first.to_string()).unwrap();
        assert!(first.structurally_eq(&again), "{first}");
    }
}
