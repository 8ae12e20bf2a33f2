//! Comment removal.
//!
//! The scanner here is shared with the lexer so both agree on what counts as
//! a comment: `//` and `#` run to the end of the line (or to a closing `?>`),
//! `/* */` blocks are removed but their newlines are kept so line numbers
//! survive.

use super::ast::Span;
use super::error::ParseError;

pub(crate) const OPEN_TAG: &str = "<?php";
pub(crate) const OPEN_TAG_ECHO: &str = "<?=";

/// Result of probing for a comment at some offset.
pub(crate) enum Comment {
    /// Line comment ending at the given offset (exclusive; the newline or `?>` is not part of it).
    Line(usize),
    /// Block comment ending at the given offset (exclusive, after `*/`).
    Block(usize),
}

/// If a comment starts at `pos`, return where it ends.
pub(crate) fn comment_at(text: &str, pos: usize) -> Result<Option<Comment>, ParseError> {
    let rest = &text.as_bytes()[pos..];
    if rest.starts_with(b"/*") {
        return match text[pos + 2..].find("*/") {
            Some(off) => Ok(Some(Comment::Block(pos + 2 + off + 2))),
            None => Err(ParseError::lex(
                "unterminated block comment",
                Span::new(pos, text.len()),
            )),
        };
    }
    if rest.starts_with(b"//") || rest.starts_with(b"#") {
        let bytes = text.as_bytes();
        let mut end = pos;
        while end < bytes.len() {
            if bytes[end] == b'\n' || (bytes[end] == b'\r' && bytes.get(end + 1) == Some(&b'\n')) {
                break;
            }
            if bytes[end] == b'?' && bytes.get(end + 1) == Some(&b'>') {
                break;
            }
            end += 1;
        }
        return Ok(Some(Comment::Line(end)));
    }
    Ok(None)
}

/// End offset (exclusive) of a quoted literal starting at `pos`, or the text
/// length if it is never closed.
pub(crate) fn quoted_end(text: &str, pos: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let quote = bytes[pos];
    let mut i = pos + 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b if b == quote => return Some(i + 1),
            _ => i += 1,
        }
    }
    None
}

/// Find the next PHP open tag at or after `pos`; returns (tag start, tag end).
pub(crate) fn find_open_tag(text: &str, pos: usize) -> Option<(usize, usize)> {
    let mut search = pos;
    while let Some(off) = text[search..].find("<?") {
        let start = search + off;
        let rest = &text[start..];
        if rest.len() >= OPEN_TAG.len() && rest[..OPEN_TAG.len()].eq_ignore_ascii_case(OPEN_TAG) {
            let after = &rest[OPEN_TAG.len()..];
            if after.is_empty() || after.starts_with(|c: char| c.is_ascii_whitespace()) {
                return Some((start, start + OPEN_TAG.len()));
            }
        } else if rest.starts_with(OPEN_TAG_ECHO) {
            return Some((start, start + OPEN_TAG_ECHO.len()));
        }
        search = start + 2;
    }
    None
}

/// Remove all comments outside string literals, keeping newlines of block
/// comments and leaving every other byte untouched.
pub fn strip_comments(text: &str) -> Result<String, ParseError> {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    loop {
        // Inline HTML up to the next open tag.
        let Some((_, tag_end)) = find_open_tag(text, pos) else {
            out.push_str(&text[pos..]);
            return Ok(out);
        };
        out.push_str(&text[pos..tag_end]);
        pos = tag_end;

        // PHP mode.
        loop {
            if pos >= bytes.len() {
                return Ok(out);
            }
            match bytes[pos] {
                b'\'' | b'"' | b'`' => {
                    let end = quoted_end(text, pos).unwrap_or(bytes.len());
                    out.push_str(&text[pos..end]);
                    pos = end;
                }
                b'?' if bytes.get(pos + 1) == Some(&b'>') => {
                    out.push_str("?>");
                    pos += 2;
                    break;
                }
                b'/' | b'#' => match comment_at(text, pos)? {
                    Some(Comment::Line(end)) => pos = end,
                    Some(Comment::Block(end)) => {
                        out.extend(text[pos..end].chars().filter(|&c| c == '\n'));
                        pos = end;
                    }
                    None => {
                        out.push('/');
                        pos += 1;
                    }
                },
                _ => {
                    let ch = text[pos..].chars().next().unwrap();
                    out.push(ch);
                    pos += ch.len_utf8();
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_comment_removed() {
        assert_eq!(
            strip_comments("<?php echo $a; // out").unwrap(),
            "<?php echo $a; "
        );
        assert_eq!(
            strip_comments("<?php echo $a; # out\necho 1;").unwrap(),
            "<?php echo $a; \necho 1;"
        );
    }

    #[test]
    fn string_contents_preserved() {
        let src = "<?php $s = \"// not a comment\";";
        assert_eq!(strip_comments(src).unwrap(), src);
        let src = "<?php $s = 'it\\'s /* still */ text';";
        assert_eq!(strip_comments(src).unwrap(), src);
    }

    #[test]
    fn block_comment_keeps_newlines() {
        let src = "<?php /* a\nb */ echo 1;";
        let out = strip_comments(src).unwrap();
        assert_eq!(out, "<?php \n echo 1;");
        assert_eq!(src.matches('\n').count(), out.matches('\n').count());
    }

    #[test]
    fn unterminated_block_is_lex_error() {
        let err = strip_comments("<?php /* open").unwrap_err();
        assert_eq!(err.kind, super::super::error::ParseErrorKind::Lex);
    }

    #[test]
    fn line_comment_stops_at_close_tag() {
        assert_eq!(
            strip_comments("<?php echo 1; // x ?><b>// html</b>").unwrap(),
            "<?php echo 1; ?><b>// html</b>"
        );
    }

    #[test]
    fn html_outside_tags_untouched() {
        let src = "<p># not php</p><?php echo 1; /* c */ ?>\n<!-- /* -->";
        assert_eq!(
            strip_comments(src).unwrap(),
            "<p># not php</p><?php echo 1;  ?>\n<!-- /* -->"
        );
    }
}
