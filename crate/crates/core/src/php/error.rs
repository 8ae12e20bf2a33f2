use std::fmt;

use thiserror::Error;

use super::ast::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Lex,
    Syntax,
    Unsupported,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::Lex => "lex error",
            ParseErrorKind::Syntax => "syntax error",
            ParseErrorKind::Unsupported => "unsupported construct",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at {}..{}: {message}", span.start, span.end)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub message: String,
    pub span: Span,
}

impl ParseError {
    pub fn lex(message: impl Into<String>, span: Span) -> Self {
        ParseError {
            kind: ParseErrorKind::Lex,
            message: message.into(),
            span,
        }
    }

    pub fn syntax(message: impl Into<String>, span: Span) -> Self {
        ParseError {
            kind: ParseErrorKind::Syntax,
            message: message.into(),
            span,
        }
    }

    pub fn unsupported(construct: &str, span: Span) -> Self {
        ParseError {
            kind: ParseErrorKind::Unsupported,
            message: format!("{construct} is not supported"),
            span,
        }
    }

    /// Clamp the span into `0..=len` so it always lies within the input.
    pub(crate) fn clamp(mut self, len: usize) -> Self {
        self.span.start = self.span.start.min(len);
        self.span.end = self.span.end.clamp(self.span.start, len);
        self
    }
}
