use super::ast::{AssignOp, BinOp, Node, NodeKind, Program, Quote, Span, SuperGlobal, UnOp};
use super::error::ParseError;
use super::lexer::{Lexer, Tok, Token};

// Binding powers, loosest first. Shared with the emitter so that
// parenthesization and parsing agree.
pub(crate) const PREC_LOW_OR: u8 = 1;
pub(crate) const PREC_LOW_XOR: u8 = 2;
pub(crate) const PREC_LOW_AND: u8 = 3;
pub(crate) const PREC_PRINT: u8 = 4;
pub(crate) const PREC_ASSIGN: u8 = 5;
pub(crate) const PREC_TERNARY: u8 = 6;
pub(crate) const PREC_COALESCE: u8 = 7;
pub(crate) const PREC_OR: u8 = 8;
pub(crate) const PREC_AND: u8 = 9;
pub(crate) const PREC_BIT_OR: u8 = 10;
pub(crate) const PREC_BIT_XOR: u8 = 11;
pub(crate) const PREC_BIT_AND: u8 = 12;
pub(crate) const PREC_EQUALITY: u8 = 13;
pub(crate) const PREC_COMPARE: u8 = 14;
pub(crate) const PREC_CONCAT: u8 = 15;
pub(crate) const PREC_SHIFT: u8 = 16;
pub(crate) const PREC_ADD: u8 = 17;
pub(crate) const PREC_MUL: u8 = 18;
pub(crate) const PREC_UNARY: u8 = 19;
pub(crate) const PREC_POW: u8 = 20;
pub(crate) const PREC_POSTFIX: u8 = 21;
pub(crate) const PREC_PRIMARY: u8 = 22;

pub(crate) fn binop_prec(op: BinOp) -> u8 {
    match op {
        BinOp::LogicalOr => PREC_LOW_OR,
        BinOp::LogicalXor => PREC_LOW_XOR,
        BinOp::LogicalAnd => PREC_LOW_AND,
        BinOp::Coalesce => PREC_COALESCE,
        BinOp::Or => PREC_OR,
        BinOp::And => PREC_AND,
        BinOp::BitOr => PREC_BIT_OR,
        BinOp::BitXor => PREC_BIT_XOR,
        BinOp::BitAnd => PREC_BIT_AND,
        BinOp::Eq | BinOp::NotEq | BinOp::Identical | BinOp::NotIdentical | BinOp::Spaceship => {
            PREC_EQUALITY
        }
        BinOp::Lt | BinOp::LtEq | BinOp::Gt | BinOp::GtEq => PREC_COMPARE,
        BinOp::Shl | BinOp::Shr => PREC_SHIFT,
        BinOp::Add | BinOp::Sub => PREC_ADD,
        BinOp::Mul | BinOp::Div | BinOp::Mod => PREC_MUL,
        BinOp::Pow => PREC_POW,
    }
}

pub(crate) fn binop_right_assoc(op: BinOp) -> bool {
    matches!(op, BinOp::Coalesce | BinOp::Pow)
}

/// Equality and comparison operators cannot be chained without parentheses.
pub(crate) fn binop_non_assoc(op: BinOp) -> bool {
    matches!(binop_prec(op), PREC_EQUALITY | PREC_COMPARE)
}

fn binop_from_punct(p: &str) -> Option<BinOp> {
    Some(match p {
        "??" => BinOp::Coalesce,
        "||" => BinOp::Or,
        "&&" => BinOp::And,
        "|" => BinOp::BitOr,
        "^" => BinOp::BitXor,
        "&" => BinOp::BitAnd,
        "==" => BinOp::Eq,
        "!=" | "<>" => BinOp::NotEq,
        "===" => BinOp::Identical,
        "!==" => BinOp::NotIdentical,
        "<=>" => BinOp::Spaceship,
        "<" => BinOp::Lt,
        "<=" => BinOp::LtEq,
        ">" => BinOp::Gt,
        ">=" => BinOp::GtEq,
        "<<" => BinOp::Shl,
        ">>" => BinOp::Shr,
        "+" => BinOp::Add,
        "-" => BinOp::Sub,
        "*" => BinOp::Mul,
        "/" => BinOp::Div,
        "%" => BinOp::Mod,
        "**" => BinOp::Pow,
        _ => return None,
    })
}

/// Statement keywords that open constructs outside the subset.
const UNSUPPORTED_STATEMENTS: &[(&str, &str)] = &[
    ("class", "class declaration"),
    ("interface", "interface declaration"),
    ("trait", "trait declaration"),
    ("abstract", "class declaration"),
    ("final", "class declaration"),
    ("namespace", "namespace"),
    ("use", "use import"),
    ("switch", "switch statement"),
    ("goto", "goto"),
    ("try", "try/catch"),
    ("throw", "throw"),
    ("do", "do/while loop"),
    ("static", "static variable"),
    ("const", "const declaration"),
    ("declare", "declare directive"),
    ("readonly", "class declaration"),
];

const INCLUDE_KEYWORDS: &[&str] = &["include", "include_once", "require", "require_once"];

/// Parse PHP source into a [`Program`].
///
/// Comments are skipped exactly as [`strip_comments`](super::strip_comments)
/// would remove them; spans refer to `text` as given.
pub fn parse(text: &str) -> Result<Program, ParseError> {
    parse_inner(text).map_err(|e| e.clamp(text.len()))
}

fn parse_inner(text: &str) -> Result<Program, ParseError> {
    if !text.to_ascii_lowercase().contains("<?php") {
        return Err(ParseError::syntax(
            "missing `<?php` open tag",
            Span::new(0, text.len().min(1)),
        ));
    }
    let tokens = Lexer::tokenize(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        offset: 0,
    };
    let mut statements = Vec::new();
    while !parser.at_eof() {
        if let Some(stmt) = parser.statement()? {
            statements.push(stmt);
        }
    }
    let mut program = Program::new(statements);
    program.root.span = Span::new(0, text.len());
    Ok(program)
}

/// Parse one expression (no open tag needed). Used for `{$...}` interpolation.
fn parse_fragment_expr(fragment: &str, offset: usize) -> Result<Node, ParseError> {
    let prefix = "<?php ";
    let text = format!("{prefix}{fragment}");
    let tokens = Lexer::tokenize(&text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        offset,
    };
    // Spans from the fragment lexer are relative to `text`; shift them back.
    for tok in &mut parser.tokens {
        tok.span.start = tok.span.start.saturating_sub(prefix.len());
        tok.span.end = tok.span.end.saturating_sub(prefix.len());
    }
    let node = parser.expr()?;
    if !parser.at_eof() {
        return Err(parser.unexpected("end of interpolated expression"));
    }
    Ok(node)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    /// Added to token spans (non-zero only for interpolation fragments).
    offset: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span_here(&self) -> Span {
        let s = self.tokens[self.pos].span;
        Span::new(s.start + self.offset, s.end + self.offset)
    }

    fn start(&self) -> usize {
        self.span_here().start
    }

    fn prev_end(&self) -> usize {
        if self.pos == 0 {
            return self.offset;
        }
        self.tokens[self.pos - 1].span.end + self.offset
    }

    fn since(&self, start: usize) -> Span {
        Span::new(start, self.prev_end().max(start))
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        tok
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(name) if name.eq_ignore_ascii_case(kw))
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::OpenTagEcho => "`<?=`".into(),
            Tok::CloseTag => "`?>`".into(),
            Tok::InlineHtml(_) => "inline HTML".into(),
            Tok::Variable(v) => format!("`${v}`"),
            Tok::Ident(i) => format!("`{i}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::SingleStr(_) | Tok::DoubleStr(_) => "string literal".into(),
            Tok::Cast(c) => format!("`({})`", c.as_str()),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        ParseError::syntax(
            format!("expected {expected}, found {}", Self::describe(self.peek())),
            self.span_here(),
        )
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), ParseError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{p}`")))
        }
    }

    /// `;` or a closing tag ends a statement.
    fn terminator(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Punct(";") | Tok::CloseTag => {
                self.advance();
                Ok(())
            }
            _ => Err(self.unexpected("`;`")),
        }
    }

    fn unsupported_here(&self, construct: &str) -> ParseError {
        ParseError::unsupported(construct, self.span_here())
    }

    // ---------------------------------------------------------------
    // Statements

    fn statement(&mut self) -> Result<Option<Node>, ParseError> {
        let start = self.start();
        match self.peek().clone() {
            Tok::Punct(";") | Tok::CloseTag => {
                self.advance();
                Ok(None)
            }
            Tok::InlineHtml(html) => {
                self.advance();
                Ok(Some(
                    Node::leaf(NodeKind::InlineHtml(html)).with_span(self.since(start)),
                ))
            }
            Tok::OpenTagEcho => {
                self.advance();
                let args = self.expr_list_nonempty()?;
                self.terminator()?;
                Ok(Some(
                    Node::new(NodeKind::EchoStmt, args).with_span(self.since(start)),
                ))
            }
            Tok::Punct("{") => Ok(Some(self.block()?)),
            Tok::Ident(word) => {
                let lower = word.to_ascii_lowercase();
                if let Some((_, what)) = UNSUPPORTED_STATEMENTS.iter().find(|(kw, _)| *kw == lower)
                {
                    // `static::` and friends start an expression, still unsupported.
                    return Err(self.unsupported_here(what));
                }
                match lower.as_str() {
                    "echo" => {
                        self.advance();
                        let args = self.expr_list_nonempty()?;
                        self.terminator()?;
                        Ok(Some(
                            Node::new(NodeKind::EchoStmt, args).with_span(self.since(start)),
                        ))
                    }
                    "if" => {
                        self.advance();
                        Ok(Some(self.if_rest(start)?))
                    }
                    "while" => Ok(Some(self.while_stmt()?)),
                    "for" => Ok(Some(self.for_stmt()?)),
                    "foreach" => Ok(Some(self.foreach_stmt()?)),
                    "function" => {
                        if matches!(self.peek_at(1), Tok::Ident(_)) {
                            Ok(Some(self.function_decl()?))
                        } else if matches!(self.peek_at(1), Tok::Punct("&")) {
                            Err(self.unsupported_here("return by reference"))
                        } else {
                            Err(self.unsupported_here("closure"))
                        }
                    }
                    "return" => {
                        self.advance();
                        let mut children = Vec::new();
                        if !matches!(self.peek(), Tok::Punct(";") | Tok::CloseTag) {
                            children.push(self.expr()?);
                        }
                        self.terminator()?;
                        Ok(Some(
                            Node::new(NodeKind::Return, children).with_span(self.since(start)),
                        ))
                    }
                    "global" => {
                        self.advance();
                        let mut vars = Vec::new();
                        loop {
                            let vstart = self.start();
                            match self.advance().tok {
                                Tok::Variable(name) => vars.push(
                                    Node::leaf(NodeKind::Variable(name))
                                        .with_span(self.since(vstart)),
                                ),
                                _ => {
                                    self.pos -= 1;
                                    return Err(self.unexpected("variable"));
                                }
                            }
                            if !self.eat_punct(",") {
                                break;
                            }
                        }
                        self.terminator()?;
                        Ok(Some(
                            Node::new(NodeKind::GlobalDecl, vars).with_span(self.since(start)),
                        ))
                    }
                    "break" | "continue" => {
                        self.advance();
                        let kind = if lower == "break" {
                            NodeKind::Break
                        } else {
                            NodeKind::Continue
                        };
                        let mut children = Vec::new();
                        if let Tok::Number(n) = self.peek().clone() {
                            let nstart = self.start();
                            self.advance();
                            children.push(
                                Node::leaf(NodeKind::Number(n)).with_span(self.since(nstart)),
                            );
                        }
                        self.terminator()?;
                        Ok(Some(Node::new(kind, children).with_span(self.since(start))))
                    }
                    "else" | "elseif" | "endif" | "endwhile" | "endfor" | "endforeach" => {
                        Err(self.unexpected("statement"))
                    }
                    _ => self.expr_statement(start).map(Some),
                }
            }
            _ => self.expr_statement(start).map(Some),
        }
    }

    fn expr_statement(&mut self, start: usize) -> Result<Node, ParseError> {
        let expr = self.expr()?;
        self.terminator()?;
        Ok(Node::new(NodeKind::ExprStmt, vec![expr]).with_span(self.since(start)))
    }

    fn block(&mut self) -> Result<Node, ParseError> {
        let start = self.start();
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.is_punct("}") {
            if self.at_eof() {
                return Err(self.unexpected("`}`"));
            }
            if let Some(stmt) = self.statement()? {
                stmts.push(stmt);
            }
        }
        self.advance();
        Ok(Node::new(NodeKind::Block, stmts).with_span(self.since(start)))
    }

    /// Body of a control statement: a braced block or a single statement.
    fn body(&mut self) -> Result<Node, ParseError> {
        if self.is_punct("{") {
            return self.block();
        }
        if self.is_punct(":") {
            return Err(self.unsupported_here("alternative control syntax"));
        }
        let start = self.start();
        let stmt = self.statement()?;
        Ok(Node::new(NodeKind::Block, stmt.into_iter().collect()).with_span(self.since(start)))
    }

    fn paren_expr(&mut self) -> Result<Node, ParseError> {
        self.expect_punct("(")?;
        let expr = self.expr()?;
        self.expect_punct(")")?;
        Ok(expr)
    }

    /// After `if` / `elseif`: condition, body and any else chain.
    fn if_rest(&mut self, start: usize) -> Result<Node, ParseError> {
        let cond = self.paren_expr()?;
        let then = self.body()?;
        let mut children = vec![cond, then];
        let else_start = self.start();
        if self.is_keyword("elseif") {
            self.advance();
            let nested_start = self.prev_end() - "elseif".len();
            let nested = self.if_rest(nested_start)?;
            children.push(
                Node::new(NodeKind::ElseBranch, vec![nested]).with_span(self.since(else_start)),
            );
        } else if self.is_keyword("else") {
            self.advance();
            let inner = if self.is_keyword("if") {
                let nested_start = self.start();
                self.advance();
                self.if_rest(nested_start)?
            } else {
                self.body()?
            };
            children.push(
                Node::new(NodeKind::ElseBranch, vec![inner]).with_span(self.since(else_start)),
            );
        }
        Ok(Node::new(NodeKind::If, children).with_span(self.since(start)))
    }

    fn while_stmt(&mut self) -> Result<Node, ParseError> {
        let start = self.start();
        self.advance();
        let cond = self.paren_expr()?;
        let body = self.body()?;
        Ok(Node::new(NodeKind::While, vec![cond, body]).with_span(self.since(start)))
    }

    fn for_stmt(&mut self) -> Result<Node, ParseError> {
        let start = self.start();
        self.advance();
        self.expect_punct("(")?;
        let init = self.expr_list_until(";")?;
        self.expect_punct(";")?;
        let cond = self.expr_list_until(";")?;
        self.expect_punct(";")?;
        let step = self.expr_list_until(")")?;
        self.expect_punct(")")?;
        let body = self.body()?;
        let kind = NodeKind::For {
            init: init.len(),
            cond: cond.len(),
            step: step.len(),
        };
        let mut children = init;
        children.extend(cond);
        children.extend(step);
        children.push(body);
        Ok(Node::new(kind, children).with_span(self.since(start)))
    }

    fn foreach_target(&mut self) -> Result<Node, ParseError> {
        if self.is_punct("&") {
            return Err(self.unsupported_here("foreach by reference"));
        }
        if self.is_keyword("list") || self.is_punct("[") {
            return Err(self.unsupported_here("list destructuring"));
        }
        let target = self.postfix_operand()?;
        match target.kind {
            NodeKind::Variable(_) | NodeKind::ArrayAccess => Ok(target),
            _ => Err(ParseError::syntax("invalid foreach target", target.span)),
        }
    }

    fn foreach_stmt(&mut self) -> Result<Node, ParseError> {
        let start = self.start();
        self.advance();
        self.expect_punct("(")?;
        let subject = self.expr()?;
        if !self.is_keyword("as") {
            return Err(self.unexpected("`as`"));
        }
        self.advance();
        let first = self.foreach_target()?;
        let mut children = vec![subject];
        let has_key = if self.eat_punct("=>") {
            let value = self.foreach_target()?;
            children.push(first);
            children.push(value);
            true
        } else {
            children.push(first);
            false
        };
        self.expect_punct(")")?;
        children.push(self.body()?);
        Ok(Node::new(NodeKind::Foreach { has_key }, children).with_span(self.since(start)))
    }

    /// Skip an optional type declaration (`int`, `?string`, `A|B`).
    fn skip_type(&mut self) {
        self.eat_punct("?");
        while let Tok::Ident(_) = self.peek() {
            self.advance();
            if !self.eat_punct("|") {
                break;
            }
        }
    }

    fn function_decl(&mut self) -> Result<Node, ParseError> {
        let start = self.start();
        self.advance();
        let name = match self.advance().tok {
            Tok::Ident(name) => name,
            _ => unreachable!("checked by caller"),
        };
        self.expect_punct("(")?;
        let mut children = Vec::new();
        while !self.is_punct(")") {
            let pstart = self.start();
            self.skip_type();
            if self.is_punct("&") {
                return Err(self.unsupported_here("by-reference parameter"));
            }
            if self.is_punct("...") {
                return Err(self.unsupported_here("variadic parameter"));
            }
            let pname = match self.peek().clone() {
                Tok::Variable(v) => {
                    self.advance();
                    v
                }
                _ => return Err(self.unexpected("parameter")),
            };
            let mut default = Vec::new();
            if self.eat_punct("=") {
                default.push(self.expr()?);
            }
            children.push(Node::new(NodeKind::Param(pname), default).with_span(self.since(pstart)));
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(")")?;
        if self.eat_punct(":") {
            self.skip_type();
        }
        children.push(self.block()?);
        Ok(Node::new(NodeKind::FunctionDecl(name), children).with_span(self.since(start)))
    }

    // ---------------------------------------------------------------
    // Expressions

    fn expr(&mut self) -> Result<Node, ParseError> {
        self.expr_bp(PREC_LOW_OR)
    }

    fn expr_list_nonempty(&mut self) -> Result<Vec<Node>, ParseError> {
        let mut out = vec![self.expr()?];
        while self.eat_punct(",") {
            out.push(self.expr()?);
        }
        Ok(out)
    }

    fn expr_list_until(&mut self, close: &str) -> Result<Vec<Node>, ParseError> {
        if self.is_punct(close) {
            return Ok(Vec::new());
        }
        self.expr_list_nonempty()
    }

    fn infix_here(&self) -> Option<(Infix, u8)> {
        match self.peek() {
            Tok::Punct("?") => Some((Infix::Ternary, PREC_TERNARY)),
            Tok::Punct(".") => Some((Infix::Concat, PREC_CONCAT)),
            Tok::Punct(p) => binop_from_punct(p).map(|op| (Infix::Bin(op), binop_prec(op))),
            Tok::Ident(word) => {
                let op = match word.to_ascii_lowercase().as_str() {
                    "or" => BinOp::LogicalOr,
                    "xor" => BinOp::LogicalXor,
                    "and" => BinOp::LogicalAnd,
                    "instanceof" => return Some((Infix::Instanceof, PREC_UNARY)),
                    _ => return None,
                };
                Some((Infix::Bin(op), binop_prec(op)))
            }
            _ => None,
        }
    }

    fn expr_bp(&mut self, min: u8) -> Result<Node, ParseError> {
        let start = self.start();
        let mut left = self.prefix()?;
        while let Some((infix, prec)) = self.infix_here() {
            if prec < min {
                break;
            }
            match infix {
                Infix::Instanceof => return Err(self.unsupported_here("instanceof")),
                Infix::Ternary => {
                    self.advance();
                    if self.eat_punct(":") {
                        let other = self.expr_bp(PREC_TERNARY + 1)?;
                        left = Node::new(NodeKind::Ternary { short: true }, vec![left, other])
                            .with_span(self.since(start));
                    } else {
                        let then = self.expr()?;
                        self.expect_punct(":")?;
                        let other = self.expr_bp(PREC_TERNARY + 1)?;
                        left =
                            Node::new(NodeKind::Ternary { short: false }, vec![left, then, other])
                                .with_span(self.since(start));
                    }
                }
                Infix::Concat => {
                    let mut operands = vec![left];
                    while self.eat_punct(".") {
                        operands.push(self.expr_bp(PREC_CONCAT + 1)?);
                    }
                    left = Node::new(NodeKind::Concat, operands).with_span(self.since(start));
                }
                Infix::Bin(op) => {
                    self.advance();
                    let rhs_min = if binop_right_assoc(op) {
                        prec
                    } else {
                        prec + 1
                    };
                    let right = self.expr_bp(rhs_min)?;
                    left = Node::new(NodeKind::BinaryOp(op), vec![left, right])
                        .with_span(self.since(start));
                }
            }
        }
        Ok(left)
    }

    fn unary(&mut self, op: UnOp, start: usize) -> Result<Node, ParseError> {
        self.advance();
        let operand = self.expr_bp(PREC_UNARY)?;
        Ok(Node::new(NodeKind::UnaryOp(op), vec![operand]).with_span(self.since(start)))
    }

    fn prefix(&mut self) -> Result<Node, ParseError> {
        let start = self.start();
        match self.peek().clone() {
            Tok::Cast(cast) => self.unary(UnOp::Cast(cast), start),
            Tok::Punct("!") => self.unary(UnOp::Not, start),
            Tok::Punct("-") => self.unary(UnOp::Neg, start),
            Tok::Punct("+") => self.unary(UnOp::Plus, start),
            Tok::Punct("~") => self.unary(UnOp::BitNot, start),
            Tok::Punct("@") => self.unary(UnOp::Silence, start),
            Tok::Punct(p @ ("++" | "--")) => {
                self.advance();
                let operand = self.postfix_operand()?;
                let op = if p == "++" {
                    UnOp::PreInc
                } else {
                    UnOp::PreDec
                };
                Ok(Node::new(NodeKind::UnaryOp(op), vec![operand]).with_span(self.since(start)))
            }
            Tok::Punct("&") => Err(self.unsupported_here("reference")),
            Tok::Ident(word) if word.eq_ignore_ascii_case("print") => {
                self.advance();
                let operand = self.expr_bp(PREC_ASSIGN)?;
                Ok(Node::new(NodeKind::PrintExpr, vec![operand]).with_span(self.since(start)))
            }
            Tok::Ident(word)
                if INCLUDE_KEYWORDS
                    .iter()
                    .any(|kw| word.eq_ignore_ascii_case(kw)) =>
            {
                self.advance();
                let operand = self.expr_bp(PREC_ASSIGN)?;
                Ok(
                    Node::new(NodeKind::Call(word.to_ascii_lowercase()), vec![operand])
                        .with_span(self.since(start)),
                )
            }
            _ => self.postfix_operand_with_assign(),
        }
    }

    /// A postfix expression, followed by an assignment if one comes next.
    fn postfix_operand_with_assign(&mut self) -> Result<Node, ParseError> {
        let start = self.start();
        let target = self.postfix_operand()?;
        let op = match self.peek() {
            Tok::Punct(p) => AssignOp::from_token(p),
            _ => None,
        };
        let Some(op) = op else {
            return Ok(target);
        };
        match target.kind {
            NodeKind::Variable(_) | NodeKind::ArrayAccess | NodeKind::SuperGlobal(_) => {}
            NodeKind::ArrayLit => return Err(self.unsupported_here("list destructuring")),
            _ => return Err(self.unexpected("end of expression")),
        }
        self.advance();
        if op == AssignOp::Assign && self.is_punct("&") {
            return Err(self.unsupported_here("assignment by reference"));
        }
        let value = self.expr_bp(PREC_ASSIGN)?;
        Ok(Node::new(NodeKind::Assign(op), vec![target, value]).with_span(self.since(start)))
    }

    /// Primary expression plus `[...]` and `++`/`--` suffixes.
    fn postfix_operand(&mut self) -> Result<Node, ParseError> {
        let start = self.start();
        let mut node = self.primary()?;
        loop {
            match self.peek() {
                Tok::Punct("[") => {
                    self.advance();
                    let mut children = vec![node];
                    if !self.is_punct("]") {
                        children.push(self.expr()?);
                    }
                    self.expect_punct("]")?;
                    node = Node::new(NodeKind::ArrayAccess, children).with_span(self.since(start));
                }
                Tok::Punct(p @ ("++" | "--")) => {
                    let op = if *p == "++" {
                        UnOp::PostInc
                    } else {
                        UnOp::PostDec
                    };
                    self.advance();
                    node =
                        Node::new(NodeKind::UnaryOp(op), vec![node]).with_span(self.since(start));
                }
                Tok::Punct("->") | Tok::Punct("?->") => {
                    return Err(self.unsupported_here("object member access"))
                }
                Tok::Punct("::") => return Err(self.unsupported_here("static member access")),
                Tok::Punct("(") => return Err(self.unsupported_here("dynamic call")),
                _ => return Ok(node),
            }
        }
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let start = self.start();
        let token = self.advance();
        let node = match token.tok {
            Tok::Variable(name) => match SuperGlobal::from_name(&name) {
                Some(global) => {
                    let mut children = Vec::new();
                    if self.eat_punct("[") {
                        children.push(self.expr()?);
                        self.expect_punct("]")?;
                    }
                    Node::new(NodeKind::SuperGlobal(global), children)
                }
                None => Node::leaf(NodeKind::Variable(name)),
            },
            Tok::Number(n) => Node::leaf(NodeKind::Number(n)),
            Tok::SingleStr(s) => Node::string(&s, Quote::Single),
            Tok::DoubleStr(body) => {
                let span = token.span;
                return interpolate(&body, span.start + self.offset + 1);
            }
            Tok::Punct("(") => {
                let inner = self.expr()?;
                self.expect_punct(")")?;
                return Ok(inner);
            }
            Tok::Punct("[") => {
                let items = self.array_items("]")?;
                Node::new(NodeKind::ArrayLit, items)
            }
            Tok::Punct("$") => {
                self.pos -= 1;
                return Err(self.unsupported_here("variable variable"));
            }
            Tok::Punct("`") => {
                self.pos -= 1;
                return Err(self.unsupported_here("backtick shell execution"));
            }
            Tok::Punct("<<<") => {
                self.pos -= 1;
                return Err(self.unsupported_here("heredoc/nowdoc"));
            }
            Tok::Punct("\\") => {
                self.pos -= 1;
                return Err(self.unsupported_here("namespaced name"));
            }
            Tok::Ident(word) => {
                let lower = word.to_ascii_lowercase();
                match lower.as_str() {
                    "true" => Node::leaf(NodeKind::Bool(true)),
                    "false" => Node::leaf(NodeKind::Bool(false)),
                    "null" => Node::leaf(NodeKind::Null),
                    "array" if self.is_punct("(") => {
                        self.advance();
                        let items = self.array_items(")")?;
                        Node::new(NodeKind::ArrayLit, items)
                    }
                    "new" | "clone" => {
                        self.pos -= 1;
                        return Err(self.unsupported_here("object instantiation"));
                    }
                    "function" | "fn" => {
                        self.pos -= 1;
                        return Err(self.unsupported_here("closure"));
                    }
                    "list" => {
                        self.pos -= 1;
                        return Err(self.unsupported_here("list destructuring"));
                    }
                    "match" if self.is_punct("(") => {
                        self.pos -= 1;
                        return Err(self.unsupported_here("match expression"));
                    }
                    "yield" => {
                        self.pos -= 1;
                        return Err(self.unsupported_here("generator"));
                    }
                    "exit" | "die" => {
                        let mut args = Vec::new();
                        if self.eat_punct("(") {
                            args = self.call_args()?;
                        }
                        Node::new(NodeKind::Call(lower), args)
                    }
                    _ => {
                        if self.is_punct("\\") {
                            return Err(self.unsupported_here("namespaced name"));
                        }
                        if self.eat_punct("(") {
                            let args = self.call_args()?;
                            Node::new(NodeKind::Call(word), args)
                        } else if self.is_punct("::") {
                            return Err(self.unsupported_here("static member access"));
                        } else {
                            Node::leaf(NodeKind::ConstFetch(word))
                        }
                    }
                }
            }
            _ => {
                self.pos -= 1;
                return Err(self.unexpected("expression"));
            }
        };
        Ok(node.with_span(self.since(start)))
    }

    /// Arguments after an opening `(`, consuming the closing `)`.
    fn call_args(&mut self) -> Result<Vec<Node>, ParseError> {
        let mut args = Vec::new();
        while !self.is_punct(")") {
            if self.is_punct("...") {
                return Err(self.unsupported_here("argument unpacking"));
            }
            if self.is_punct("&") {
                return Err(self.unsupported_here("reference"));
            }
            if matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Punct(":")) {
                return Err(self.unsupported_here("named argument"));
            }
            args.push(self.expr()?);
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(")")?;
        Ok(args)
    }

    fn array_items(&mut self, close: &str) -> Result<Vec<Node>, ParseError> {
        let mut items = Vec::new();
        while !self.is_punct(close) {
            let start = self.start();
            if self.is_punct("...") {
                return Err(self.unsupported_here("array unpacking"));
            }
            if self.is_punct("&") {
                return Err(self.unsupported_here("reference"));
            }
            let first = self.expr()?;
            let item = if self.eat_punct("=>") {
                let value = self.expr()?;
                Node::new(NodeKind::ArrayItem { has_key: true }, vec![first, value])
            } else {
                Node::new(NodeKind::ArrayItem { has_key: false }, vec![first])
            };
            items.push(item.with_span(self.since(start)));
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(close)?;
        Ok(items)
    }
}

#[derive(Debug, Clone, Copy)]
enum Infix {
    Ternary,
    Concat,
    Instanceof,
    Bin(BinOp),
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_' || c >= 0x80
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c >= 0x80
}

/// Desugar a double-quoted string body into a `StringLit` or a `Concat` of
/// literal segments and interpolated variables. `base` is the byte offset of
/// the body in the source.
pub(crate) fn interpolate(body: &str, base: usize) -> Result<Node, ParseError> {
    let bytes = body.as_bytes();
    let mut parts: Vec<Node> = Vec::new();
    let mut interpolated = false;
    let mut seg_start = 0;
    let mut i = 0;

    let flush = |parts: &mut Vec<Node>, from: usize, to: usize| {
        if to > from {
            parts.push(
                Node::string(&body[from..to], Quote::Double)
                    .with_span(Span::new(base + from, base + to)),
            );
        }
    };

    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'$' if bytes.get(i + 1).copied().is_some_and(is_ident_start) => {
                flush(&mut parts, seg_start, i);
                let (node, end) = simple_interpolation(body, i, base)?;
                parts.push(node);
                interpolated = true;
                i = end;
                seg_start = end;
            }
            b'$' if bytes.get(i + 1) == Some(&b'{') => {
                flush(&mut parts, seg_start, i);
                let close = body[i..].find('}').map(|off| i + off).ok_or_else(|| {
                    ParseError::syntax(
                        "unterminated `${` interpolation",
                        Span::new(base + i, base + body.len()),
                    )
                })?;
                let name = &body[i + 2..close];
                if name.is_empty() || !name.bytes().all(is_ident_char) {
                    return Err(ParseError::unsupported(
                        "dynamic `${...}` interpolation",
                        Span::new(base + i, base + close + 1),
                    ));
                }
                parts.push(Node::variable(name).with_span(Span::new(base + i, base + close + 1)));
                interpolated = true;
                i = close + 1;
                seg_start = i;
            }
            b'{' if bytes.get(i + 1) == Some(&b'$') => {
                flush(&mut parts, seg_start, i);
                let close = matching_brace(body, i).ok_or_else(|| {
                    ParseError::syntax(
                        "unterminated `{$` interpolation",
                        Span::new(base + i, base + body.len()),
                    )
                })?;
                let inner = parse_fragment_expr(&body[i + 1..close], base + i + 1)?;
                parts.push(inner);
                interpolated = true;
                i = close + 1;
                seg_start = i;
            }
            _ => i += 1,
        }
    }
    let span = Span::new(base.saturating_sub(1), base + body.len() + 1);
    if !interpolated {
        return Ok(Node::string(body, Quote::Double).with_span(span));
    }
    flush(&mut parts, seg_start, bytes.len());
    if parts.len() < 2 {
        parts.insert(
            0,
            Node::string("", Quote::Double).with_span(Span::new(base, base)),
        );
    }
    Ok(Node::new(NodeKind::Concat, parts).with_span(span))
}

fn matching_brace(body: &str, open: usize) -> Option<usize> {
    let bytes = body.as_bytes();
    let mut depth = 0usize;
    let mut i = open;
    while i < bytes.len() {
        match bytes[i] {
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            b'\'' => {
                let close = body[i + 1..].find('\'')?;
                i += close + 1;
            }
            _ => {}
        }
        i += 1;
    }
    None
}

/// `$name`, `$name[key]` inside a double-quoted string starting at `dollar`.
fn simple_interpolation(
    body: &str,
    dollar: usize,
    base: usize,
) -> Result<(Node, usize), ParseError> {
    let bytes = body.as_bytes();
    let mut end = dollar + 1;
    while end < bytes.len() && is_ident_char(bytes[end]) {
        end += 1;
    }
    let name = &body[dollar + 1..end];
    let var_span = Span::new(base + dollar, base + end);
    let mut node = match SuperGlobal::from_name(name) {
        Some(global) => Node::leaf(NodeKind::SuperGlobal(global)),
        None => Node::variable(name),
    }
    .with_span(var_span);

    if body[end..].starts_with("->") && bytes.get(end + 2).copied().is_some_and(is_ident_start) {
        return Err(ParseError::unsupported(
            "property interpolation",
            Span::new(base + dollar, base + end + 2),
        ));
    }
    if bytes.get(end) == Some(&b'[') {
        let key_start = end + 1;
        let close = body[key_start..]
            .find(']')
            .map(|off| key_start + off)
            .ok_or_else(|| ParseError::syntax("unterminated interpolated index", var_span))?;
        let raw = &body[key_start..close];
        let key_span = Span::new(base + key_start, base + close);
        let key = if let Some(var) = raw.strip_prefix('$') {
            if var.is_empty() || !var.bytes().all(is_ident_char) {
                return Err(ParseError::syntax("invalid interpolated index", key_span));
            }
            Node::variable(var)
        } else if !raw.is_empty() && raw.bytes().all(|b| b.is_ascii_digit()) {
            Node::leaf(NodeKind::Number(raw.to_string()))
        } else if let Some(digits) = raw
            .strip_prefix('-')
            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
        {
            Node::new(
                NodeKind::UnaryOp(UnOp::Neg),
                vec![Node::leaf(NodeKind::Number(digits.to_string())).with_span(key_span)],
            )
        } else if !raw.is_empty() && raw.bytes().all(is_ident_char) {
            Node::string(raw, Quote::Single)
        } else {
            return Err(ParseError::syntax("invalid interpolated index", key_span));
        }
        .with_span(key_span);
        let full = Span::new(base + dollar, base + close + 1);
        node = if matches!(node.kind, NodeKind::SuperGlobal(_)) {
            node.children.push(key);
            node.with_span(full)
        } else {
            Node::new(NodeKind::ArrayAccess, vec![node, key]).with_span(full)
        };
        end = close + 1;
    }
    Ok((node, end))
}
