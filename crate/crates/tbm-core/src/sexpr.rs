//! Minimal s-expression reader with source positions.
//!
//! Atoms are symbols, integers, or floats; `;` starts a comment running to
//! end of line. Positions are 1-based and survive into parse errors so a
//! scenario file can point at the offending form.

use crate::error::TbmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SexprKind {
    Sym(String),
    Int(i64),
    Float(f64),
    List(Vec<Sexpr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sexpr {
    pub kind: SexprKind,
    pub pos: Pos,
}

impl Sexpr {
    pub fn as_sym(&self) -> Option<&str> {
        match &self.kind {
            SexprKind::Sym(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexpr]> {
        match &self.kind {
            SexprKind::List(items) => Some(items),
            _ => None,
        }
    }

    pub fn error(&self, msg: impl Into<String>) -> TbmError {
        TbmError::Parse {
            line: self.pos.line,
            col: self.pos.col,
            msg: msg.into(),
        }
    }
}

struct Reader<'a> {
    src: &'a [u8],
    at: usize,
    line: u32,
    col: u32,
}

impl<'a> Reader<'a> {
    fn new(src: &'a str) -> Self {
        Reader {
            src: src.as_bytes(),
            at: 0,
            line: 1,
            col: 1,
        }
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn err(&self, msg: impl Into<String>) -> TbmError {
        TbmError::Parse {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.at).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.at += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_blank(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_ascii_whitespace() {
                self.bump();
            } else if c == b';' {
                while let Some(c) = self.peek() {
                    if c == b'\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn read(&mut self) -> Result<Sexpr, TbmError> {
        self.skip_blank();
        let pos = self.pos();
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_blank();
                    match self.peek() {
                        None => {
                            return Err(TbmError::Parse {
                                line: pos.line,
                                col: pos.col,
                                msg: "unclosed list".into(),
                            })
                        }
                        Some(b')') => {
                            self.bump();
                            return Ok(Sexpr {
                                kind: SexprKind::List(items),
                                pos,
                            });
                        }
                        Some(_) => items.push(self.read()?),
                    }
                }
            }
            Some(b')') => Err(self.err("unexpected ')'")),
            Some(_) => self.read_atom(),
        }
    }

    fn read_atom(&mut self) -> Result<Sexpr, TbmError> {
        let pos = self.pos();
        let start = self.at;
        while let Some(c) = self.peek() {
            if c.is_ascii_whitespace() || c == b'(' || c == b')' || c == b';' {
                break;
            }
            self.bump();
        }
        let text = std::str::from_utf8(&self.src[start..self.at])
            .map_err(|_| self.err("atom is not valid utf-8"))?;
        Ok(Sexpr {
            kind: classify(text),
            pos,
        })
    }
}

/// Numbers must start with a digit (after an optional sign or decimal
/// point); everything else is a symbol, so `-inf`, `+`, and `?x` all read
/// as symbols.
fn classify(text: &str) -> SexprKind {
    if let Ok(i) = text.parse::<i64>() {
        return SexprKind::Int(i);
    }
    let body = text.strip_prefix(['+', '-']).unwrap_or(text);
    let numeric_shape = body.starts_with(|c: char| c.is_ascii_digit())
        || (body.starts_with('.') && body[1..].starts_with(|c: char| c.is_ascii_digit()));
    if numeric_shape {
        if let Ok(f) = text.parse::<f64>() {
            return SexprKind::Float(f);
        }
    }
    SexprKind::Sym(text.to_string())
}

/// Read every top-level form in `src`.
pub fn parse_all(src: &str) -> Result<Vec<Sexpr>, TbmError> {
    let mut r = Reader::new(src);
    let mut out = Vec::new();
    loop {
        r.skip_blank();
        if r.peek().is_none() {
            return Ok(out);
        }
        out.push(r.read()?);
    }
}

/// Read exactly one form.
pub fn parse_one(src: &str) -> Result<Sexpr, TbmError> {
    let mut r = Reader::new(src);
    let e = r.read()?;
    r.skip_blank();
    if r.peek().is_some() {
        return Err(r.err("trailing input after form"));
    }
    Ok(e)
}
