use super::ast::Span;
use super::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    /// Bare or quoted word. Bare words are kept in source case.
    Word {
        text: String,
        quoted: bool,
    },
    Number(String),
    Str(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    Dot,
    Semi,
    Eof,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: Span,
}

const OPS: [&str; 13] = ["<>", "!=", "<=", ">=", "||", "=", "<", ">", "+", "-", "*", "/", "%"];

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if src[i..].starts_with("--") {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if src[i..].starts_with("/*") {
            match src[i + 2..].find("*/") {
                Some(end) => i += end + 4,
                None => return Err(SyntaxError::new(start, "unterminated block comment")),
            }
            continue;
        }
        let tok = match c {
            b'(' => {
                i += 1;
                Tok::LParen
            }
            b')' => {
                i += 1;
                Tok::RParen
            }
            b',' => {
                i += 1;
                Tok::Comma
            }
            b';' => {
                i += 1;
                Tok::Semi
            }
            b'.' if !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                i += 1;
                Tok::Dot
            }
            b'\'' => {
                let (s, next) = quoted(src, i, '\'')?;
                i = next;
                Tok::Str(s)
            }
            b'"' => {
                let (s, next) = quoted(src, i, '"')?;
                i = next;
                if s.is_empty() {
                    return Err(SyntaxError::new(start, "empty quoted identifier"));
                }
                Tok::Word { text: s, quoted: true }
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
                    return Err(SyntaxError::new(start, "malformed number"));
                }
                Tok::Number(src[start..i].to_string())
            }
            c if c.is_ascii_alphabetic() || c == b'_' || c >= 0x80 => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] >= 0x80) {
                    i += 1;
                }
                Tok::Word {
                    text: src[start..i].to_string(),
                    quoted: false,
                }
            }
            _ => match OPS.iter().find(|op| src[i..].starts_with(**op)) {
                Some(op) => {
                    i += op.len();
                    Tok::Op(op)
                }
                None => {
                    let ch = src[i..].chars().next().unwrap_or('?');
                    return Err(SyntaxError::new(start, format!("unexpected character `{ch}`")));
                }
            },
        };
        out.push(Token {
            tok,
            span: Span::new(start, i),
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(src.len(), src.len()),
    });
    Ok(out)
}

/// Reads a quoted run starting at `start`; a doubled quote is an escape.
fn quoted(src: &str, start: usize, q: char) -> Result<(String, usize), SyntaxError> {
    let mut out = String::new();
    let mut chars = src[start + 1..].char_indices().peekable();
    while let Some((off, ch)) = chars.next() {
        if ch == q {
            if chars.peek().map(|(_, c)| *c) == Some(q) {
                out.push(q);
                chars.next();
                continue;
            }
            return Ok((out, start + 1 + off + 1));
        }
        out.push(ch);
    }
    let what = if q == '\'' {
        "string literal"
    } else {
        "quoted identifier"
    };
    Err(SyntaxError::new(start, format!("unterminated {what}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn basic_tokens() {
        let t = toks("SELECT a.b, 'it''s' FROM t WHERE x >= 1.5e3 -- tail\n;");
        assert_eq!(
            t,
            vec![
                Tok::Word {
                    text: "SELECT".into(),
                    quoted: false
                },
                Tok::Word {
                    text: "a".into(),
                    quoted: false
                },
                Tok::Dot,
                Tok::Word {
                    text: "b".into(),
                    quoted: false
                },
                Tok::Comma,
                Tok::Str("it's".into()),
                Tok::Word {
                    text: "FROM".into(),
                    quoted: false
                },
                Tok::Word {
                    text: "t".into(),
                    quoted: false
                },
                Tok::Word {
                    text: "WHERE".into(),
                    quoted: false
                },
                Tok::Word {
                    text: "x".into(),
                    quoted: false
                },
                Tok::Op(">="),
                Tok::Number("1.5e3".into()),
                Tok::Semi,
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn spans_are_byte_offsets() {
        let t = tokenize("SELECT  \"Qu\"\"x\"").unwrap();
        assert_eq!((t[1].span.start, t[1].span.end), (8, 15));
        assert_eq!(
            t[1].tok,
            Tok::Word {
                text: "Qu\"x".into(),
                quoted: true
            }
        );
    }

    #[test]
    fn errors_carry_offsets() {
        assert_eq!(tokenize("SELECT 'abc").unwrap_err().offset, 7);
        assert_eq!(tokenize("SELECT 1 /* x").unwrap_err().offset, 9);
        assert_eq!(tokenize("SELECT @x").unwrap_err().offset, 7);
        assert_eq!(tokenize("SELECT 12abc").unwrap_err().offset, 7);
    }
}
