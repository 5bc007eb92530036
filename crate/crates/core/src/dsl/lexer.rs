use super::Span;
use thiserror::Error;

/// Token payload. Alphanumeric runs split at a digit-to-letter boundary, so
/// `10s` lexes as `Int(10)` + `Word("s")` and `duration` as one `Word`; the
/// parser reassembles adjacent tokens where the grammar calls for an ID or a
/// dotted IP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Word(String),
    Int(u64),
    Str(String),
    Colon,
    Comma,
    Dot,
    Percent,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    LParen,
    RParen,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
    /// True when no whitespace separates this token from the previous one.
    /// Compound lexemes (IPs, `10s`, `2G`, digit-led IDs) require adjacency.
    pub adjacent: bool,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LexError {
    #[error("{span}: unexpected character `{ch}`")]
    UnexpectedChar { span: Span, ch: char },
    #[error("{span}: unterminated string literal")]
    UnterminatedString { span: Span },
    #[error("{span}: invalid escape `\\{ch}` (only \\\" and \\\\ are supported)")]
    BadEscape { span: Span, ch: char },
    #[error("{span}: integer literal too large")]
    IntOverflow { span: Span },
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor {
            chars: src.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn span(&self) -> Span {
        Span {
            line: self.line,
            col: self.col,
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }
}

/// Lex DSL source into tokens. Comments (`//` to end of line) and whitespace
/// are skipped; every other character must belong to the grammar's alphabet.
pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    let mut cur = Cursor::new(source);
    let mut out = Vec::new();
    let mut adjacent = false;

    while let Some(c) = cur.peek() {
        if c.is_whitespace() {
            cur.bump();
            adjacent = false;
            continue;
        }
        if c == '/' {
            // only `//` comments; a lone slash is outside the alphabet
            let span = cur.span();
            cur.bump();
            if cur.peek() == Some('/') {
                while let Some(c) = cur.peek() {
                    if c == '\n' {
                        break;
                    }
                    cur.bump();
                }
                adjacent = false;
                continue;
            }
            return Err(LexError::UnexpectedChar { span, ch: '/' });
        }

        let span = cur.span();
        let tok = match c {
            ':' => {
                cur.bump();
                Tok::Colon
            }
            ',' => {
                cur.bump();
                Tok::Comma
            }
            '.' => {
                cur.bump();
                Tok::Dot
            }
            '%' => {
                cur.bump();
                Tok::Percent
            }
            '{' => {
                cur.bump();
                Tok::LBrace
            }
            '}' => {
                cur.bump();
                Tok::RBrace
            }
            '[' => {
                cur.bump();
                Tok::LBracket
            }
            ']' => {
                cur.bump();
                Tok::RBracket
            }
            '(' => {
                cur.bump();
                Tok::LParen
            }
            ')' => {
                cur.bump();
                Tok::RParen
            }
            '"' => {
                cur.bump();
                let mut s = String::new();
                loop {
                    match cur.bump() {
                        None | Some('\n') => {
                            return Err(LexError::UnterminatedString { span })
                        }
                        Some('"') => break,
                        Some('\\') => match cur.bump() {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some(ch) => {
                                return Err(LexError::BadEscape { span: cur.span(), ch })
                            }
                            None => return Err(LexError::UnterminatedString { span }),
                        },
                        Some(ch) => s.push(ch),
                    }
                }
                Tok::Str(s)
            }
            c if c.is_ascii_digit() => {
                let mut digits = String::new();
                while let Some(d) = cur.peek() {
                    if d.is_ascii_digit() {
                        digits.push(d);
                        cur.bump();
                    } else {
                        break;
                    }
                }
                let n: u64 = digits
                    .parse()
                    .map_err(|_| LexError::IntOverflow { span })?;
                Tok::Int(n)
            }
            c if c.is_ascii_alphabetic() => {
                let mut word = String::new();
                while let Some(d) = cur.peek() {
                    if d.is_ascii_alphanumeric() {
                        word.push(d);
                        cur.bump();
                    } else {
                        break;
                    }
                }
                Tok::Word(word)
            }
            other => {
                return Err(LexError::UnexpectedChar { span, ch: other });
            }
        };
        out.push(Token {
            tok,
            span,
            adjacent,
        });
        adjacent = true;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn duration_field_splits_magnitude_and_unit() {
        assert_eq!(
            toks("duration:10s"),
            vec![
                Tok::Word("duration".into()),
                Tok::Colon,
                Tok::Int(10),
                Tok::Word("s".into()),
            ]
        );
    }

    #[test]
    fn cloud_header() {
        assert_eq!(
            toks("Cloud:C1 {"),
            vec![
                Tok::Word("Cloud".into()),
                Tok::Colon,
                Tok::Word("C1".into()),
                Tok::LBrace,
            ]
        );
    }

    #[test]
    fn character_outside_alphabet_is_an_error() {
        let err = tokenize("spe@ed").unwrap_err();
        assert_eq!(
            err,
            LexError::UnexpectedChar {
                span: Span { line: 1, col: 4 },
                ch: '@'
            }
        );
    }

    #[test]
    fn comments_and_whitespace_are_skipped() {
        assert_eq!(
            toks("a // comment:{}@\n b"),
            vec![Tok::Word("a".into()), Tok::Word("b".into())]
        );
    }

    #[test]
    fn string_escapes() {
        assert_eq!(toks(r#""a\"b\\c""#), vec![Tok::Str(r#"a"b\c"#.into())]);
        assert!(matches!(
            tokenize("\"abc"),
            Err(LexError::UnterminatedString { .. })
        ));
    }

    #[test]
    fn adjacency_tracking() {
        let ts = tokenize("192.168 10 s").unwrap();
        assert!(!ts[0].adjacent); // 192
        assert!(ts[1].adjacent); // .
        assert!(ts[2].adjacent); // 168
        assert!(!ts[3].adjacent); // 10
        assert!(!ts[4].adjacent); // s
    }

    #[test]
    fn spans_are_one_based() {
        let ts = tokenize("Cloud:C1").unwrap();
        assert_eq!(ts[0].span, Span { line: 1, col: 1 });
        assert_eq!(ts[1].span, Span { line: 1, col: 6 });
        assert_eq!(ts[2].span, Span { line: 1, col: 7 });
    }
}
