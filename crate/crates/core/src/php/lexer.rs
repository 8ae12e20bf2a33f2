use super::ast::{CastType, Span};
use super::comments::{comment_at, find_open_tag, quoted_end, Comment, OPEN_TAG_ECHO};
use super::error::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    OpenTagEcho,
    CloseTag,
    InlineHtml(String),
    Variable(String),
    Ident(String),
    Number(String),
    SingleStr(String),
    /// Raw body of a double-quoted string; interpolation is resolved by the parser.
    DoubleStr(String),
    Cast(CastType),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: Span,
}

// Longest first so that prefix matching picks the longest operator.
const PUNCTS: &[&str] = &[
    "<<<", "===", "!==", "<=>", "**=", "...", "??=", "<<=", ">>=", "?->", "==", "!=", "<>", "<=",
    ">=", "&&", "||", "??", "++", "--", "+=", "-=", "*=", "/=", ".=", "%=", "|=", "&=", "^=", "->",
    "=>", "::", "**", "<<", ">>", ";", ",", "(", ")", "{", "}", "[", "]", "=", ".", "+", "-", "*",
    "/", "%", "<", ">", "!", "?", ":", "&", "|", "^", "~", "@", "$", "\\", "`",
];

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_' || b >= 0x80
}

fn is_ident_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b >= 0x80
}

fn cast_type(name: &str) -> Option<CastType> {
    Some(match name.to_ascii_lowercase().as_str() {
        "int" | "integer" => CastType::Int,
        "float" | "double" | "real" => CastType::Float,
        "bool" | "boolean" => CastType::Bool,
        "string" => CastType::String,
        "array" => CastType::Array,
        _ => return None,
    })
}

pub(crate) struct Lexer<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    tokens: Vec<Token>,
}

impl<'a> Lexer<'a> {
    pub fn tokenize(text: &'a str) -> Result<Vec<Token>, ParseError> {
        let mut lexer = Lexer {
            text,
            bytes: text.as_bytes(),
            pos: 0,
            tokens: Vec::new(),
        };
        lexer.run()?;
        Ok(lexer.tokens)
    }

    fn push(&mut self, tok: Tok, start: usize, end: usize) {
        self.tokens.push(Token {
            tok,
            span: Span::new(start, end),
        });
    }

    fn run(&mut self) -> Result<(), ParseError> {
        loop {
            if !self.html()? {
                break;
            }
            if !self.php()? {
                break;
            }
        }
        let len = self.text.len();
        self.push(Tok::Eof, len, len);
        Ok(())
    }

    /// Consume inline HTML up to the next open tag. Returns false at end of input.
    fn html(&mut self) -> Result<bool, ParseError> {
        let start = self.pos;
        let (html_end, next) = match find_open_tag(self.text, self.pos) {
            Some((tag_start, tag_end)) => (tag_start, Some((tag_start, tag_end))),
            None => (self.text.len(), None),
        };
        let html = &self.text[start..html_end];
        if !html.trim().is_empty() {
            self.push(Tok::InlineHtml(html.to_string()), start, html_end);
        }
        match next {
            Some((tag_start, tag_end)) => {
                if &self.text[tag_start..tag_end] == OPEN_TAG_ECHO {
                    self.push(Tok::OpenTagEcho, tag_start, tag_end);
                }
                self.pos = tag_end;
                Ok(true)
            }
            None => {
                self.pos = self.text.len();
                Ok(false)
            }
        }
    }

    /// Lex PHP code until a close tag. Returns false at end of input.
    fn php(&mut self) -> Result<bool, ParseError> {
        loop {
            self.skip_trivia()?;
            if self.pos >= self.bytes.len() {
                return Ok(false);
            }
            let start = self.pos;
            let b = self.bytes[start];
            if b == b'?' && self.bytes.get(start + 1) == Some(&b'>') {
                self.pos += 2;
                self.push(Tok::CloseTag, start, self.pos);
                // A single newline directly after the close tag belongs to it.
                if self.text[self.pos..].starts_with("\r\n") {
                    self.pos += 2;
                } else if self.text[self.pos..].starts_with('\n') {
                    self.pos += 1;
                }
                return Ok(true);
            }
            if b == b'$'
                && self
                    .bytes
                    .get(start + 1)
                    .copied()
                    .is_some_and(is_ident_start)
            {
                let end = self.ident_end(start + 1);
                self.push(
                    Tok::Variable(self.text[start + 1..end].to_string()),
                    start,
                    end,
                );
                self.pos = end;
            } else if is_ident_start(b) {
                let end = self.ident_end(start);
                self.push(Tok::Ident(self.text[start..end].to_string()), start, end);
                self.pos = end;
            } else if b.is_ascii_digit()
                || (b == b'.' && self.bytes.get(start + 1).is_some_and(u8::is_ascii_digit))
            {
                let end = self.number_end(start);
                self.push(Tok::Number(self.text[start..end].to_string()), start, end);
                self.pos = end;
            } else if b == b'\'' || b == b'"' {
                let end = quoted_end(self.text, start).ok_or_else(|| {
                    ParseError::lex(
                        "unterminated string literal",
                        Span::new(start, self.text.len()),
                    )
                })?;
                let body = self.text[start + 1..end - 1].to_string();
                let tok = if b == b'\'' {
                    Tok::SingleStr(body)
                } else {
                    Tok::DoubleStr(body)
                };
                self.push(tok, start, end);
                self.pos = end;
            } else if b == b'(' {
                if let Some((cast, end)) = self.cast_at(start) {
                    self.push(Tok::Cast(cast), start, end);
                    self.pos = end;
                } else {
                    self.push(Tok::Punct("("), start, start + 1);
                    self.pos += 1;
                }
            } else if let Some(p) = PUNCTS.iter().find(|p| self.text[start..].starts_with(**p)) {
                self.push(Tok::Punct(p), start, start + p.len());
                self.pos += p.len();
            } else {
                let ch = self.text[start..].chars().next().unwrap();
                return Err(ParseError::lex(
                    format!("unexpected character {ch:?}"),
                    Span::new(start, start + ch.len_utf8()),
                ));
            }
        }
    }

    fn skip_trivia(&mut self) -> Result<(), ParseError> {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
                continue;
            }
            if b == b'/' || b == b'#' {
                match comment_at(self.text, self.pos)? {
                    Some(Comment::Line(end)) | Some(Comment::Block(end)) => {
                        self.pos = end;
                        continue;
                    }
                    None => {}
                }
            }
            break;
        }
        Ok(())
    }

    fn ident_end(&self, mut i: usize) -> usize {
        while i < self.bytes.len() && is_ident_char(self.bytes[i]) {
            i += 1;
        }
        i
    }

    fn number_end(&self, start: usize) -> usize {
        let bytes = self.bytes;
        let mut i = start;
        if bytes[i] == b'0' && matches!(bytes.get(i + 1), Some(b'x' | b'X' | b'b' | b'B')) {
            i += 2;
            while i < bytes.len() && (bytes[i].is_ascii_hexdigit() || bytes[i] == b'_') {
                i += 1;
            }
            return i;
        }
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
        if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
            let mut j = i + 1;
            if matches!(bytes.get(j), Some(b'+' | b'-')) {
                j += 1;
            }
            if bytes.get(j).is_some_and(u8::is_ascii_digit) {
                i = j;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
        }
        i
    }

    fn cast_at(&self, start: usize) -> Option<(CastType, usize)> {
        let bytes = self.bytes;
        let mut i = start + 1;
        while i < bytes.len() && matches!(bytes[i], b' ' | b'\t') {
            i += 1;
        }
        let name_start = i;
        while i < bytes.len() && bytes[i].is_ascii_alphabetic() {
            i += 1;
        }
        let cast = cast_type(&self.text[name_start..i])?;
        while i < bytes.len() && matches!(bytes[i], b' ' | b'\t') {
            i += 1;
        }
        (bytes.get(i) == Some(&b')')).then_some((cast, i + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        Lexer::tokenize(src)
            .unwrap()
            .into_iter()
            .map(|t| t.tok)
            .collect()
    }

    #[test]
    fn basic_tokens() {
        assert_eq!(
            toks("<?php $a .= 'x' . 1.5;"),
            vec![
                Tok::Variable("a".into()),
                Tok::Punct(".="),
                Tok::SingleStr("x".into()),
                Tok::Punct("."),
                Tok::Number("1.5".into()),
                Tok::Punct(";"),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn casts_and_parens() {
        assert_eq!(
            toks("<?php (int) $a; ($b);"),
            vec![
                Tok::Cast(CastType::Int),
                Tok::Variable("a".into()),
                Tok::Punct(";"),
                Tok::Punct("("),
                Tok::Variable("b".into()),
                Tok::Punct(")"),
                Tok::Punct(";"),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn inline_html_around_tags() {
        assert_eq!(
            toks("<b>hi</b><?php echo 1 ?>\n<i>x</i>"),
            vec![
                Tok::InlineHtml("<b>hi</b>".into()),
                Tok::Ident("echo".into()),
                Tok::Number("1".into()),
                Tok::CloseTag,
                Tok::InlineHtml("<i>x</i>".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn unterminated_string() {
        let err = Lexer::tokenize("<?php echo 'abc").unwrap_err();
        assert_eq!(err.kind, super::super::error::ParseErrorKind::Lex);
    }
}
