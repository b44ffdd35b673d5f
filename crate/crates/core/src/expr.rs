//! A small arithmetic language for user-defined maps.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr   := sum (("<" | "<=" | ">" | ">=") sum)?
//! sum    := term (("+" | "-") term)*
//! term   := unary (("*" | "/") unary)*
//! unary  := ("-" | "+") unary | power
//! power  := atom ("^" unary)?
//! atom   := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! Identifiers: `x_i`, `r_i`, `v_i` (1-based; bare `x`, `r`, `v` when the
//! dimension is 1), `tau`, `eps`, `pi`, and named parameters. Functions:
//! `sin cos tan exp ln sqrt abs min max pow if`. Comparisons yield 1 or 0;
//! `if(c, a, b)` is `a` when `c != 0`.

use std::collections::BTreeMap;

/// Parse failure at a byte offset within the expression source.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprError {
    pub offset: usize,
    pub message: String,
    /// Set when the failure is an unresolved identifier.
    pub unknown: Option<String>,
}

impl ExprError {
    fn at(offset: usize, message: impl Into<String>) -> Self {
        ExprError {
            offset,
            message: message.into(),
            unknown: None,
        }
    }
}

impl std::fmt::Display for ExprError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (column {})", self.message, self.offset + 1)
    }
}

impl std::error::Error for ExprError {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slot {
    X(usize),
    R(usize),
    V(usize),
    Tau,
    Eps,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Min,
    Max,
    Pow,
    If,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "pow" => Func::Pow,
            "if" => Func::If,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max | Func::Pow => 2,
            Func::If => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Slot),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Values bound to the identifiers during evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub x: &'a [f64],
    pub r: &'a [f64],
    pub v: &'a [f64],
    pub tau: f64,
    pub eps: f64,
}

impl Expr {
    pub fn eval(&self, env: &Env<'_>) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::Var(slot) => match *slot {
                Slot::X(i) => env.x[i],
                Slot::R(i) => env.r[i],
                Slot::V(i) => env.v[i],
                Slot::Tau => env.tau,
                Slot::Eps => env.eps,
            },
            Expr::Neg(a) => -a.eval(env),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(env), b.eval(env));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                    BinOp::Lt => f64::from(u8::from(a < b)),
                    BinOp::Le => f64::from(u8::from(a <= b)),
                    BinOp::Gt => f64::from(u8::from(a > b)),
                    BinOp::Ge => f64::from(u8::from(a >= b)),
                }
            }
            Expr::Call(Func::If, args) => {
                if args[0].eval(env) != 0.0 {
                    args[1].eval(env)
                } else {
                    args[2].eval(env)
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(env);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Exp => a.exp(),
                    Func::Ln => a.ln(),
                    Func::Sqrt => a.sqrt(),
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval(env)),
                    Func::Max => a.max(args[1].eval(env)),
                    Func::Pow => a.powf(args[1].eval(env)),
                    Func::If => unreachable!(),
                }
            }
        }
    }

    /// True if the expression reads `slot`.
    pub fn uses(&self, slot: Slot) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(s) => *s == slot,
            Expr::Neg(a) => a.uses(slot),
            Expr::Bin(_, a, b) => a.uses(slot) || b.uses(slot),
            Expr::Call(_, args) => args.iter().any(|a| a.uses(slot)),
        }
    }
}

/// Identifiers visible to an expression.
#[derive(Debug, Clone, Default)]
pub struct Symbols {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub params: BTreeMap<String, f64>,
}

impl Symbols {
    fn resolve(&self, name: &str) -> Option<Expr> {
        let indexed = |prefix: &str, dim: usize| -> Option<usize> {
            if name == prefix && dim == 1 {
                return Some(0);
            }
            let rest = name.strip_prefix(prefix)?.strip_prefix('_')?;
            let i: usize = rest.parse().ok()?;
            (1..=dim).contains(&i).then(|| i - 1)
        };
        if let Some(i) = indexed("x", self.n) {
            return Some(Expr::Var(Slot::X(i)));
        }
        if let Some(i) = indexed("r", self.p) {
            return Some(Expr::Var(Slot::R(i)));
        }
        if let Some(i) = indexed("v", self.m) {
            return Some(Expr::Var(Slot::V(i)));
        }
        match name {
            "tau" => Some(Expr::Var(Slot::Tau)),
            "eps" => Some(Expr::Var(Slot::Eps)),
            "pi" => Some(Expr::Num(std::f64::consts::PI)),
            _ => self.params.get(name).map(|&c| Expr::Num(c)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    End,
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit())) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut k = i + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    i = k;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let value = text
                .parse()
                .map_err(|_| ExprError::at(start, format!("malformed number `{text}`")))?;
            out.push((Tok::Num(value), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
            continue;
        }
        let two = src.get(i..i + 2);
        let tok = match (c, two) {
            (_, Some("<=")) => Tok::Op("<="),
            (_, Some(">=")) => Tok::Op(">="),
            ('<', _) => Tok::Op("<"),
            ('>', _) => Tok::Op(">"),
            ('+', _) => Tok::Op("+"),
            ('-', _) => Tok::Op("-"),
            ('*', _) => Tok::Op("*"),
            ('/', _) => Tok::Op("/"),
            ('^', _) => Tok::Op("^"),
            ('(', _) => Tok::LParen,
            (')', _) => Tok::RParen,
            (',', _) => Tok::Comma,
            _ => return Err(ExprError::at(start, format!("unexpected character `{c}`"))),
        };
        i += match tok {
            Tok::Op(s) => s.len(),
            _ => 1,
        };
        out.push((tok, start));
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    symbols: &'a Symbols,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ExprError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(ExprError::at(self.offset(), format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let lhs = self.sum()?;
        let op = match self.peek() {
            Tok::Op("<") => BinOp::Lt,
            Tok::Op("<=") => BinOp::Le,
            Tok::Op(">") => BinOp::Gt,
            Tok::Op(">=") => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.sum()?;
        Ok(Expr::Bin(op, Box::new(lhs), Box::new(rhs)))
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op("+") => BinOp::Add,
                Tok::Op("-") => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op("*") => BinOp::Mul,
                Tok::Op("/") => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Tok::Op("-") => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Op("+") => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Op("^") {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let (tok, at) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    let func = Func::lookup(&name).ok_or_else(|| ExprError {
                        offset: at,
                        message: format!("unknown function `{name}`"),
                        unknown: Some(name.clone()),
                    })?;
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen, "`)` or `,`")?;
                    if args.len() != func.arity() {
                        return Err(ExprError::at(
                            at,
                            format!("`{name}` takes {} argument(s), got {}", func.arity(), args.len()),
                        ));
                    }
                    Ok(Expr::Call(func, args))
                } else {
                    self.symbols.resolve(&name).ok_or_else(|| ExprError {
                        offset: at,
                        message: format!("unknown symbol `{name}`"),
                        unknown: Some(name),
                    })
                }
            }
            Tok::End => Err(ExprError::at(at, "unexpected end of expression")),
            other => Err(ExprError::at(at, format!("unexpected token {other:?}"))),
        }
    }
}

pub fn parse(src: &str, symbols: &Symbols) -> Result<Expr, ExprError> {
    let mut parser = Parser {
        toks: tokenize(src)?,
        pos: 0,
        symbols,
    };
    let e = parser.expr()?;
    if *parser.peek() != Tok::End {
        return Err(ExprError::at(parser.offset(), "trailing input"));
    }
    Ok(e)
}
