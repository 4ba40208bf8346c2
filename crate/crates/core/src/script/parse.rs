use std::fmt;

use super::{HashKind, ScriptType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub pos: Pos,
    pub message: String,
}

impl Diagnostic {
    pub fn new(pos: Pos, message: impl Into<String>) -> Self {
        Diagnostic {
            pos,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pos, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i128),
    Secs(i128),
    Hex(Vec<u8>),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Colon,
    EqEq,
    NotEq,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Secs(n) => write!(f, "`{n}s`"),
            Tok::Hex(b) => write!(f, "`0x{}`", hex::encode(b)),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::EqEq => f.write_str("`==`"),
            Tok::NotEq => f.write_str("`!=`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, Diagnostic> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c == '0' && matches!(chars.get(i + 1), Some('x' | 'X')) {
            i += 2;
            while i < chars.len() && chars[i].is_ascii_hexdigit() {
                i += 1;
            }
            let digits: String = chars[start + 2..i].iter().collect();
            let bytes = hex::decode(&digits).map_err(|_| Diagnostic::new(pos, format!("malformed hex literal `0x{digits}`")))?;
            Tok::Hex(bytes)
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let n: i128 = text
                .parse()
                .map_err(|_| Diagnostic::new(pos, format!("integer literal `{text}` is too large")))?;
            if chars.get(i) == Some(&'s') && !chars.get(i + 1).is_some_and(|c| c.is_ascii_alphanumeric()) {
                i += 1;
                Tok::Secs(n)
            } else {
                Tok::Int(n)
            }
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let (tok, len) = match (c, two.as_str()) {
                (_, "==") => (Tok::EqEq, 2),
                (_, "!=") => (Tok::NotEq, 2),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                ('{', _) => (Tok::LBrace, 1),
                ('}', _) => (Tok::RBrace, 1),
                ('[', _) => (Tok::LBracket, 1),
                (']', _) => (Tok::RBracket, 1),
                (',', _) => (Tok::Comma, 1),
                (':', _) => (Tok::Colon, 1),
                _ => return Err(Diagnostic::new(pos, format!("unexpected character `{c}`"))),
            };
            i += len;
            tok
        };
        col += i - start;
        out.push((tok, pos));
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: ScriptType,
    pub pos: Pos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    CheckSig,
    CheckMultiSig,
    After,
    Older,
    Hash(HashKind),
    Bytes,
    Size,
}

impl Builtin {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "checkSig" => Builtin::CheckSig,
            "checkMultiSig" => Builtin::CheckMultiSig,
            "after" => Builtin::After,
            "older" => Builtin::Older,
            "sha256" => Builtin::Hash(HashKind::Sha256),
            "sha1" => Builtin::Hash(HashKind::Sha1),
            "ripemd160" => Builtin::Hash(HashKind::Ripemd160),
            "bytes" => Builtin::Bytes,
            "size" => Builtin::Size,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::CheckSig => "checkSig",
            Builtin::CheckMultiSig => "checkMultiSig",
            Builtin::After => "after",
            Builtin::Older => "older",
            Builtin::Hash(HashKind::Sha256) => "sha256",
            Builtin::Hash(HashKind::Sha1) => "sha1",
            Builtin::Hash(HashKind::Ripemd160) => "ripemd160",
            Builtin::Bytes => "bytes",
            Builtin::Size => "size",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprKind {
    Var(String),
    Int(i128),
    Secs(i128),
    Hex(Vec<u8>),
    Bool(bool),
    List(Vec<Expr>),
    Call(Builtin, Vec<Expr>),
    Eq(Box<Expr>, Box<Expr>),
    Ne(Box<Expr>, Box<Expr>),
}

/// `ty` is filled in by the typechecker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
    pub ty: Option<ScriptType>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    pub name: String,
    pub params: Vec<Param>,
    pub verifies: Vec<Expr>,
    pub unlock: Option<(String, Pos)>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contract {
    pub name: String,
    pub params: Vec<Param>,
    pub clauses: Vec<Clause>,
    pub pos: Pos,
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn next(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> PResult<Pos> {
        let (tok, pos) = self.next();
        if tok == want {
            Ok(pos)
        } else {
            Err(Diagnostic::new(pos, format!("expected {want}, found {tok}")))
        }
    }

    fn ident(&mut self) -> PResult<(String, Pos)> {
        match self.next() {
            (Tok::Ident(s), pos) => Ok((s, pos)),
            (tok, pos) => Err(Diagnostic::new(pos, format!("expected identifier, found {tok}"))),
        }
    }

    fn keyword(&mut self, kw: &str) -> PResult<Pos> {
        match self.next() {
            (Tok::Ident(s), pos) if s == kw => Ok(pos),
            (tok, pos) => Err(Diagnostic::new(pos, format!("expected `{kw}`, found {tok}"))),
        }
    }

    fn ty(&mut self) -> PResult<ScriptType> {
        let (name, pos) = self.ident()?;
        let kind = match name.as_str() {
            "Bytes" => return Ok(ScriptType::Bytes),
            "PublicKey" => return Ok(ScriptType::PublicKey),
            "Signature" => return Ok(ScriptType::Signature),
            "Time" => return Ok(ScriptType::Time),
            "Duration" => return Ok(ScriptType::Duration),
            "Boolean" => return Ok(ScriptType::Boolean),
            "Number" => return Ok(ScriptType::Number),
            "Value" => return Ok(ScriptType::Value),
            "Sha256" => HashKind::Sha256,
            "Sha1" => HashKind::Sha1,
            "Ripemd160" => HashKind::Ripemd160,
            _ => return Err(Diagnostic::new(pos, format!("unknown type `{name}`"))),
        };
        self.expect(Tok::LParen)?;
        let inner = self.ty()?;
        self.expect(Tok::RParen)?;
        Ok(ScriptType::Hash(kind, Box::new(inner)))
    }

    fn params(&mut self) -> PResult<Vec<Param>> {
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let (name, pos) = self.ident()?;
                self.expect(Tok::Colon)?;
                let ty = self.ty()?;
                params.push(Param { name, ty, pos });
                if *self.peek() != Tok::Comma {
                    break;
                }
                self.next();
            }
        }
        self.expect(Tok::RParen)?;
        Ok(params)
    }

    fn args(&mut self, close: Tok) -> PResult<Vec<Expr>> {
        let mut args = Vec::new();
        if *self.peek() != close {
            loop {
                args.push(self.expr()?);
                if *self.peek() != Tok::Comma {
                    break;
                }
                self.next();
            }
        }
        self.expect(close)?;
        Ok(args)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let (tok, pos) = self.next();
        let kind = match tok {
            Tok::Int(n) => ExprKind::Int(n),
            Tok::Secs(n) => ExprKind::Secs(n),
            Tok::Hex(b) => ExprKind::Hex(b),
            Tok::LBracket => ExprKind::List(self.args(Tok::RBracket)?),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                return Ok(e);
            }
            Tok::Ident(name) => match name.as_str() {
                "true" => ExprKind::Bool(true),
                "false" => ExprKind::Bool(false),
                _ if *self.peek() == Tok::LParen => {
                    let builtin = Builtin::from_name(&name)
                        .ok_or_else(|| Diagnostic::new(pos, format!("unknown function `{name}`")))?;
                    self.next();
                    ExprKind::Call(builtin, self.args(Tok::RParen)?)
                }
                _ => ExprKind::Var(name),
            },
            tok => return Err(Diagnostic::new(pos, format!("expected expression, found {tok}"))),
        };
        Ok(Expr { kind, pos, ty: None })
    }

    fn expr(&mut self) -> PResult<Expr> {
        let lhs = self.primary()?;
        let ne = match self.peek() {
            Tok::EqEq => false,
            Tok::NotEq => true,
            _ => return Ok(lhs),
        };
        let pos = self.next().1;
        let rhs = self.primary()?;
        let (l, r) = (Box::new(lhs), Box::new(rhs));
        let kind = if ne { ExprKind::Ne(l, r) } else { ExprKind::Eq(l, r) };
        Ok(Expr { kind, pos, ty: None })
    }

    fn clause(&mut self) -> PResult<Clause> {
        let pos = self.keyword("clause")?;
        let (name, _) = self.ident()?;
        let params = self.params()?;
        self.expect(Tok::LBrace)?;
        let mut verifies = Vec::new();
        let mut unlock = None;
        loop {
            match self.next() {
                (Tok::RBrace, _) => break,
                (Tok::Ident(kw), kpos) if unlock.is_some() => {
                    return Err(Diagnostic::new(kpos, format!("`{kw}` after unlock; unlock must be the last statement")))
                }
                (Tok::Ident(kw), _) if kw == "verify" => verifies.push(self.expr()?),
                (Tok::Ident(kw), kpos) if kw == "unlock" => {
                    let (target, _) = self.ident()?;
                    unlock = Some((target, kpos));
                }
                (Tok::Ident(kw), kpos) if matches!(kw.as_str(), "while" | "for" | "loop") => {
                    return Err(Diagnostic::new(kpos, "loops are not supported"))
                }
                (tok, p) => return Err(Diagnostic::new(p, format!("expected `verify`, `unlock` or `}}`, found {tok}"))),
            }
        }
        Ok(Clause {
            name,
            params,
            verifies,
            unlock,
            pos,
        })
    }

    fn contract(&mut self) -> PResult<Contract> {
        let pos = self.keyword("contract")?;
        let (name, _) = self.ident()?;
        let params = self.params()?;
        self.expect(Tok::LBrace)?;
        let mut clauses = Vec::new();
        while *self.peek() != Tok::RBrace {
            clauses.push(self.clause()?);
        }
        self.expect(Tok::RBrace)?;
        self.expect(Tok::Eof)?;
        Ok(Contract {
            name,
            params,
            clauses,
            pos,
        })
    }
}

/// Syntax only; see [`super::parse_and_typecheck`].
pub fn parse(src: &str) -> Result<Contract, Diagnostic> {
    Parser { toks: lex(src)?, at: 0 }.contract()
}
