//! Front end for the supported PHP subset: comment stripping, parsing and
//! canonical emission.
//!
//! ```
//! let program = phpvul::php::parse("<?php echo \"id=$x\";").unwrap();
//! assert_eq!(program.to_string(), "<?php\necho \"id=\" . $x;");
//! ```

pub mod ast;
mod comments;
pub mod emit;
mod error;
mod lexer;
mod parser;

pub use ast::{Node, NodeId, NodeKind, Program, Span};
pub use comments::strip_comments;
pub use emit::{emit_expr, emit_program, emit_program_marked, emit_statement};
pub use error::{ParseError, ParseErrorKind};
pub use parser::parse;

/// Canonical text of a program.
pub fn emit(program: &Program) -> String {
    emit_program(program)
}

/// Succeeds iff `text` parses within the subset.
pub fn syntax_check(text: &str) -> Result<(), ParseError> {
    parse(text).map(|_| ())
}

/// 1-based line number of a byte offset.
pub fn line_of(text: &str, offset: usize) -> usize {
    let offset = offset.min(text.len());
    text.as_bytes()[..offset]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
        + 1
}
