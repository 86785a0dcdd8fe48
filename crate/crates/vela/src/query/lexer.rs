//! Tokenizer for the query language. Keywords are case-insensitive;
//! string literals are double-quoted; every token carries its source
//! position for error reporting.

use super::QueryError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Float(f64),
    // punctuation
    LParen,
    RParen,
    Comma,
    Colon,
    Semi,
    Pipe,
    Arrow,
    At,
    Dot,
    Star,
    Plus,
    Minus,
    Slash,
    Percent,
    Assign,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Bang,
    DollarMinus,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Str(_) => "string literal".into(),
            Tok::Int(_) => "integer".into(),
            Tok::Float(_) => "float".into(),
            Tok::Eof => "end of input".into(),
            other => format!("{:?}", other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn lex(input: &str) -> Result<Vec<Token>, QueryError> {
    let chars: Vec<char> = input.chars().collect();
    let mut out = Vec::new();
    let mut i = 0usize;
    let (mut line, mut col) = (1u32, 1u32);
    while i < chars.len() {
        let span = Span { line, col };
        let c = chars[i];
        // (token to emit, chars consumed)
        let (tok, n): (Option<Tok>, usize) = match c {
            ' ' | '\t' | '\r' | '\n' => (None, 1),
            '#' => {
                let mut n = 0;
                while i + n < chars.len() && chars[i + n] != '\n' {
                    n += 1;
                }
                (None, n.max(1))
            }
            '(' => (Some(Tok::LParen), 1),
            ')' => (Some(Tok::RParen), 1),
            ',' => (Some(Tok::Comma), 1),
            ':' => (Some(Tok::Colon), 1),
            ';' => (Some(Tok::Semi), 1),
            '|' => (Some(Tok::Pipe), 1),
            '@' => (Some(Tok::At), 1),
            '.' => (Some(Tok::Dot), 1),
            '*' => (Some(Tok::Star), 1),
            '+' => (Some(Tok::Plus), 1),
            '/' => (Some(Tok::Slash), 1),
            '%' => (Some(Tok::Percent), 1),
            '-' if chars.get(i + 1) == Some(&'>') => (Some(Tok::Arrow), 2),
            '-' => (Some(Tok::Minus), 1),
            '=' if chars.get(i + 1) == Some(&'=') => (Some(Tok::Eq), 2),
            '=' => (Some(Tok::Assign), 1),
            '!' if chars.get(i + 1) == Some(&'=') => (Some(Tok::Ne), 2),
            '!' => (Some(Tok::Bang), 1),
            '<' if chars.get(i + 1) == Some(&'=') => (Some(Tok::Le), 2),
            '<' => (Some(Tok::Lt), 1),
            '>' if chars.get(i + 1) == Some(&'=') => (Some(Tok::Ge), 2),
            '>' => (Some(Tok::Gt), 1),
            '$' if chars.get(i + 1) == Some(&'-') => (Some(Tok::DollarMinus), 2),
            '$' => return Err(QueryError::syntax("expected '$-'", span, &["$-"])),
            '"' => {
                let mut s = String::new();
                let mut n = 1;
                loop {
                    match chars.get(i + n) {
                        None => {
                            return Err(QueryError::syntax(
                                "unterminated string",
                                span,
                                &["\""],
                            ))
                        }
                        Some('"') => {
                            n += 1;
                            break;
                        }
                        Some('\\') => {
                            match chars.get(i + n + 1) {
                                Some('n') => s.push('\n'),
                                Some('t') => s.push('\t'),
                                Some(&e) => s.push(e),
                                None => {
                                    return Err(QueryError::syntax(
                                        "unterminated escape",
                                        span,
                                        &["\""],
                                    ))
                                }
                            }
                            n += 2;
                        }
                        Some(&other) => {
                            s.push(other);
                            n += 1;
                        }
                    }
                }
                (Some(Tok::Str(s)), n)
            }
            c if c.is_ascii_digit() => {
                let mut n = 0;
                let mut is_float = false;
                while i + n < chars.len() {
                    let d = chars[i + n];
                    if d.is_ascii_digit() {
                        n += 1;
                    } else if d == '.'
                        && !is_float
                        && chars.get(i + n + 1).map_or(false, |x| x.is_ascii_digit())
                    {
                        is_float = true;
                        n += 1;
                    } else {
                        break;
                    }
                }
                let text: String = chars[i..i + n].iter().collect();
                let tok = if is_float {
                    Tok::Float(text.parse().unwrap())
                } else {
                    match text.parse::<i64>() {
                        Ok(v) => Tok::Int(v),
                        Err(_) => {
                            return Err(QueryError::syntax(
                                &format!("integer literal '{text}' out of range"),
                                span,
                                &["integer"],
                            ))
                        }
                    }
                };
                (Some(tok), n)
            }
            c if c.is_alphabetic() || c == '_' => {
                // identifiers may contain '-' (tag-a) but never '->'
                let mut n = 0;
                while i + n < chars.len() {
                    let d = chars[i + n];
                    if d.is_alphanumeric() || d == '_' {
                        n += 1;
                    } else if d == '-'
                        && chars.get(i + n + 1).map_or(false, |x| x.is_alphanumeric())
                        && chars.get(i + n + 1) != Some(&'>')
                    {
                        n += 1;
                    } else {
                        break;
                    }
                }
                let text: String = chars[i..i + n].iter().collect();
                (Some(Tok::Ident(text)), n)
            }
            other => {
                return Err(QueryError::syntax(
                    &format!("unexpected character '{other}'"),
                    span,
                    &[],
                ))
            }
        };
        if let Some(tok) = tok {
            out.push(Token { tok, span });
        }
        for k in 0..n {
            if chars[i + k] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        i += n;
    }
    out.push(Token { tok: Tok::Eof, span: Span { line, col } });
    Ok(out)
}
