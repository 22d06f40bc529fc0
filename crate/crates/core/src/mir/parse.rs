//! Recursive-descent parser for the mini-IR text format.

use super::*;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Sym(char),
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

struct Token {
    tok: Tok,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> u8 {
        let c = self.src[self.pos];
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn next_token(&mut self) -> Result<Token, ParseError> {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'#') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => break,
            }
        }
        let (line, col) = (self.line, self.col);
        let tok = match self.peek() {
            None => Tok::Eof,
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while let Some(c) = self.peek() {
                    if c.is_ascii_alphanumeric() || c == b'_' {
                        self.bump();
                    } else {
                        break;
                    }
                }
                Tok::Ident(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while let Some(c) = self.peek() {
                    if c.is_ascii_digit() {
                        self.bump();
                    } else {
                        break;
                    }
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let v: i64 = text.parse().map_err(|_| ParseError {
                    line,
                    col,
                    msg: format!("integer literal out of range: {text}"),
                })?;
                Tok::Int(v)
            }
            Some(c) if b"[]{}()=,+-*".contains(&c) => {
                self.bump();
                Tok::Sym(c as char)
            }
            Some(c) => {
                return Err(ParseError {
                    line,
                    col,
                    msg: format!("unexpected character {:?}", c as char),
                })
            }
        };
        Ok(Token { tok, line, col })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    cur: Token,
    next_id: u32,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut lexer = Lexer::new(src);
        let cur = lexer.next_token()?;
        Ok(Parser {
            lexer,
            cur,
            next_id: 0,
        })
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            line: self.cur.line,
            col: self.cur.col,
            msg: msg.into(),
        })
    }

    fn advance(&mut self) -> Result<Tok, ParseError> {
        let next = self.lexer.next_token()?;
        Ok(std::mem::replace(&mut self.cur, next).tok)
    }

    fn expect_sym(&mut self, c: char) -> Result<(), ParseError> {
        if self.cur.tok == Tok::Sym(c) {
            self.advance()?;
            Ok(())
        } else {
            self.err(format!("expected {c:?}, found {}", describe(&self.cur.tok)))
        }
    }

    fn expect_ident(&mut self) -> Result<String, ParseError> {
        match self.cur.tok.clone() {
            Tok::Ident(s) => {
                self.advance()?;
                Ok(s)
            }
            other => self.err(format!("expected a name, found {}", describe(&other))),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match &self.cur.tok {
            Tok::Ident(s) if s == kw => {
                self.advance()?;
                Ok(())
            }
            other => self.err(format!("expected {kw:?}, found {}", describe(other))),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.cur.tok, Tok::Ident(s) if s == kw)
    }

    /// Integer with optional leading minus.
    fn expect_int(&mut self) -> Result<i64, ParseError> {
        let neg = if self.cur.tok == Tok::Sym('-') {
            self.advance()?;
            true
        } else {
            false
        };
        match self.cur.tok {
            Tok::Int(v) => {
                self.advance()?;
                Ok(if neg { -v } else { v })
            }
            ref other => self.err(format!("expected an integer, found {}", describe(other))),
        }
    }

    fn fresh_id(&mut self) -> InstrId {
        let id = InstrId(self.next_id);
        self.next_id += 1;
        id
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut p = Program::default();
        loop {
            if self.at_keyword("array") {
                self.advance()?;
                let name = self.expect_ident()?;
                self.expect_sym('[')?;
                let len = self.expect_int()?;
                self.expect_sym(']')?;
                self.expect_keyword("esz")?;
                let esz = self.expect_int()?;
                if len < 0 || esz < 0 {
                    return self.err("array length and element size must be non-negative");
                }
                p.globals.push(ArrayDecl {
                    name,
                    len: len as u64,
                    esz: esz as u32,
                });
            } else if self.at_keyword("fn") {
                let f = self.function()?;
                p.functions.push(f);
            } else if self.cur.tok == Tok::Eof {
                break;
            } else {
                return self.err(format!(
                    "expected \"array\" or \"fn\", found {}",
                    describe(&self.cur.tok)
                ));
            }
        }
        Ok(p)
    }

    fn function(&mut self) -> Result<Function, ParseError> {
        self.expect_keyword("fn")?;
        let name = self.expect_ident()?;
        self.expect_sym('(')?;
        let mut params = Vec::new();
        if self.cur.tok != Tok::Sym(')') {
            loop {
                params.push(self.param()?);
                if self.cur.tok == Tok::Sym(',') {
                    self.advance()?;
                } else {
                    break;
                }
            }
        }
        self.expect_sym(')')?;
        self.expect_sym('{')?;
        let body = self.stmt_list()?;
        self.expect_sym('}')?;
        Ok(Function { name, params, body })
    }

    fn param(&mut self) -> Result<Param, ParseError> {
        let kind = if self.at_keyword("arr") {
            ParamKind::Array
        } else if self.at_keyword("int") {
            ParamKind::Scalar
        } else {
            return self.err(format!(
                "expected \"arr\" or \"int\", found {}",
                describe(&self.cur.tok)
            ));
        };
        self.advance()?;
        let name = self.expect_ident()?;
        let mut restrict = false;
        let mut readonly = false;
        loop {
            if self.at_keyword("restrict") {
                self.advance()?;
                restrict = true;
            } else if self.at_keyword("readonly") {
                self.advance()?;
                readonly = true;
            } else {
                break;
            }
        }
        Ok(Param {
            name,
            kind,
            restrict,
            readonly,
        })
    }

    fn stmt_list(&mut self) -> Result<Vec<Stmt>, ParseError> {
        let mut out = Vec::new();
        while self.cur.tok != Tok::Sym('}') && self.cur.tok != Tok::Eof {
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        if self.at_keyword("for") {
            self.advance()?;
            let ivar = self.expect_ident()?;
            self.expect_sym('=')?;
            let lower = self.bound()?;
            self.expect_keyword("to")?;
            let upper = self.bound()?;
            self.expect_keyword("step")?;
            let step = self.expect_int()?;
            self.expect_sym('{')?;
            let body = self.stmt_list()?;
            self.expect_sym('}')?;
            Ok(Stmt::Loop(Loop {
                ivar,
                lower,
                upper,
                step,
                body,
            }))
        } else {
            self.instr().map(Stmt::Instr)
        }
    }

    fn bound(&mut self) -> Result<Bound, ParseError> {
        match self.cur.tok.clone() {
            Tok::Ident(s) => {
                self.advance()?;
                Ok(Bound::Sym(s))
            }
            Tok::Int(_) | Tok::Sym('-') => Ok(Bound::Const(self.expect_int()?)),
            other => self.err(format!(
                "expected a loop bound, found {}",
                describe(&other)
            )),
        }
    }

    fn instr(&mut self) -> Result<Instr, ParseError> {
        let pnd = if self.at_keyword("pnd") {
            self.advance()?;
            if !self.at_keyword("load") {
                return self.err("the pnd flag is only valid on load instructions");
            }
            true
        } else {
            false
        };
        let kind = if self.at_keyword("load") {
            self.advance()?;
            let dst = self.expect_ident()?;
            self.expect_sym('=')?;
            let addr = self.addr_expr()?;
            InstrKind::Load { dst, addr, pnd }
        } else if self.at_keyword("store") {
            self.advance()?;
            let addr = self.addr_expr()?;
            self.expect_sym('=')?;
            let src = self.expect_ident()?;
            InstrKind::Store { addr, src }
        } else if self.at_keyword("alu") {
            self.advance()?;
            let dst = self.expect_ident()?;
            self.expect_sym('=')?;
            let lhs = self.expect_ident()?;
            let op = match self.cur.tok {
                Tok::Sym('+') => AluOp::Add,
                Tok::Sym('-') => AluOp::Sub,
                Tok::Sym('*') => AluOp::Mul,
                ref other => {
                    return self.err(format!(
                        "expected an alu operator (+, -, *), found {}",
                        describe(other)
                    ))
                }
            };
            self.advance()?;
            let rhs = self.expect_ident()?;
            InstrKind::Alu { dst, lhs, op, rhs }
        } else if self.at_keyword("call") {
            self.advance()?;
            let callee = self.expect_ident()?;
            self.expect_keyword("reads")?;
            let may_read = self.modref_set()?;
            self.expect_keyword("writes")?;
            let may_write = self.modref_set()?;
            InstrKind::Call {
                callee,
                summary: ModRefSummary {
                    may_read,
                    may_write,
                },
            }
        } else {
            return self.err(format!(
                "expected an instruction, found {}",
                describe(&self.cur.tok)
            ));
        };
        Ok(Instr {
            id: self.fresh_id(),
            kind,
        })
    }

    fn modref_set(&mut self) -> Result<ModRef, ParseError> {
        self.expect_sym('(')?;
        if self.cur.tok == Tok::Sym('*') {
            self.advance()?;
            self.expect_sym(')')?;
            return Ok(ModRef::Unknown);
        }
        let mut names = BTreeSet::new();
        if self.cur.tok != Tok::Sym(')') {
            loop {
                names.insert(self.expect_ident()?);
                if self.cur.tok == Tok::Sym(',') {
                    self.advance()?;
                } else {
                    break;
                }
            }
        }
        self.expect_sym(')')?;
        Ok(ModRef::Known(names))
    }

    fn addr_expr(&mut self) -> Result<AddrExpr, ParseError> {
        let base = self.expect_ident()?;
        self.expect_sym('[')?;
        let index = self.affine()?;
        self.expect_sym(']')?;
        Ok(AddrExpr { base, index })
    }

    /// affine := ["-"] term (("+" | "-") term)*
    /// term   := INT | NAME | INT "*" NAME
    fn affine(&mut self) -> Result<AffineExpr, ParseError> {
        let mut terms = Vec::new();
        let mut offset = 0i64;
        let mut sign = 1i64;
        if self.cur.tok == Tok::Sym('-') {
            self.advance()?;
            sign = -1;
        }
        loop {
            match self.cur.tok.clone() {
                Tok::Int(v) => {
                    self.advance()?;
                    if self.cur.tok == Tok::Sym('*') {
                        self.advance()?;
                        let name = self.expect_ident()?;
                        terms.push((sign * v, name));
                    } else {
                        offset += sign * v;
                    }
                }
                Tok::Ident(name) => {
                    self.advance()?;
                    terms.push((sign, name));
                }
                ref other => {
                    return self.err(format!(
                        "expected an affine term, found {}",
                        describe(other)
                    ))
                }
            }
            sign = match self.cur.tok {
                Tok::Sym('+') => 1,
                Tok::Sym('-') => -1,
                _ => break,
            };
            self.advance()?;
        }
        Ok(AffineExpr::new(terms, offset))
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Ident(s) => format!("{s:?}"),
        Tok::Int(v) => format!("integer {v}"),
        Tok::Sym(c) => format!("{c:?}"),
        Tok::Eof => "end of input".to_string(),
    }
}

/// Parse a program. Errors carry a line/column. Array references are
/// resolved against the declared globals and parameters; an undeclared base
/// is a parse error. Deeper structural checks live in [`validate`].
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut parser = Parser::new(text)?;
    let program = parser.program()?;
    check_array_refs(&program)?;
    Ok(program)
}

/// Parse a bare affine expression (used by scenario input files).
pub fn parse_affine(text: &str) -> Result<AffineExpr, ParseError> {
    let mut parser = Parser::new(text)?;
    let e = parser.affine()?;
    if parser.cur.tok != Tok::Eof {
        return parser.err("trailing input after affine expression");
    }
    Ok(e)
}

fn check_array_refs(p: &Program) -> Result<(), ParseError> {
    for f in &p.functions {
        let known = |name: &str| {
            p.global(name).is_some()
                || f.param(name)
                    .map(|q| q.kind == ParamKind::Array)
                    .unwrap_or(false)
        };
        for instr in {
            let mut v = Vec::new();
            super::collect_instrs(&f.body, &mut v);
            v
        } {
            if let Some(addr) = instr.addr() {
                if !known(&addr.base) {
                    return Err(ParseError {
                        line: 0,
                        col: 0,
                        msg: format!(
                            "reference to undeclared array {:?} in function {:?}",
                            addr.base, f.name
                        ),
                    });
                }
            }
        }
    }
    Ok(())
}
