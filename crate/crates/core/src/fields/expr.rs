//! Expression ASTs over chart coordinates: parsing, evaluation, exact
//! symbolic differentiation, and printing.
//!
//! Grammar (whitespace-insensitive, `^` binds tighter than unary minus,
//! which binds tighter than `*`/`/`, which bind tighter than `+`/`-`;
//! `*`, `/`, `+`, `-` are left-associative, `^` is right-associative):
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := unary (('*'|'/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | coord | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp | log | sqrt | tanh
//! ```

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Builtin unary functions, closed under differentiation together with the
/// arithmetic operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
}

impl UnaryFn {
    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Exp => "exp",
            UnaryFn::Log => "log",
            UnaryFn::Sqrt => "sqrt",
            UnaryFn::Tanh => "tanh",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => UnaryFn::Sin,
            "cos" => UnaryFn::Cos,
            "exp" => UnaryFn::Exp,
            "log" => UnaryFn::Log,
            "sqrt" => UnaryFn::Sqrt,
            "tanh" => UnaryFn::Tanh,
            _ => return None,
        })
    }

    pub const ALL_NAMES: [&'static str; 6] = ["sin", "cos", "exp", "log", "sqrt", "tanh"];

    fn apply(self, x: f64) -> Result<f64> {
        let v = match self {
            UnaryFn::Sin => x.sin(),
            UnaryFn::Cos => x.cos(),
            UnaryFn::Exp => x.exp(),
            UnaryFn::Log => {
                if x <= 0.0 {
                    return Err(Error::Domain(format!("log of non-positive value {x}")));
                }
                x.ln()
            }
            UnaryFn::Sqrt => {
                if x < 0.0 {
                    return Err(Error::Domain(format!("sqrt of negative value {x}")));
                }
                x.sqrt()
            }
            UnaryFn::Tanh => x.tanh(),
        };
        finite(v)
    }
}

/// Expression tree. Coordinates are stored by index into the owning chart.
///
/// Invariant kept by the smart constructors: `Const` values are finite and
/// non-negative (negative literals are represented as `Neg(Const)`), so the
/// printed form of any node re-parses to a structurally equal tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Coord(usize),
    Neg(Arc<Expr>),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Pow(Arc<Expr>, Arc<Expr>),
    Call(UnaryFn, Arc<Expr>),
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("non-finite result {v}")))
    }
}

pub fn constant(c: f64) -> Arc<Expr> {
    debug_assert!(c.is_finite());
    if c < 0.0 {
        Arc::new(Expr::Neg(Arc::new(Expr::Const(-c))))
    } else {
        // normalizes -0.0 to 0.0
        Arc::new(Expr::Const(c + 0.0))
    }
}

pub fn coord(i: usize) -> Arc<Expr> {
    Arc::new(Expr::Coord(i))
}

pub fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 0.0)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 1.0)
}

fn const_of(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(c) => Some(*c),
        Expr::Neg(inner) => match inner.as_ref() {
            Expr::Const(c) => Some(-*c),
            _ => None,
        },
        _ => None,
    }
}

fn fold2(a: &Arc<Expr>, b: &Arc<Expr>, op: impl Fn(f64, f64) -> f64) -> Option<Arc<Expr>> {
    let (x, y) = (const_of(a)?, const_of(b)?);
    let v = op(x, y);
    v.is_finite().then(|| constant(v))
}

pub fn add(a: &Arc<Expr>, b: &Arc<Expr>) -> Arc<Expr> {
    if is_zero(a) {
        return b.clone();
    }
    if is_zero(b) {
        return a.clone();
    }
    if let Some(f) = fold2(a, b, |x, y| x + y) {
        return f;
    }
    if let Expr::Neg(inner) = b.as_ref() {
        return sub(a, inner);
    }
    Arc::new(Expr::Add(a.clone(), b.clone()))
}

pub fn sub(a: &Arc<Expr>, b: &Arc<Expr>) -> Arc<Expr> {
    if is_zero(b) {
        return a.clone();
    }
    if is_zero(a) {
        return neg(b);
    }
    if Arc::ptr_eq(a, b) {
        return constant(0.0);
    }
    if let Some(f) = fold2(a, b, |x, y| x - y) {
        return f;
    }
    if let Expr::Neg(inner) = b.as_ref() {
        if !is_zero(a) {
            return add_raw(a, inner);
        }
    }
    Arc::new(Expr::Sub(a.clone(), b.clone()))
}

// Add without the Neg-rewrite, to avoid mutual recursion between add and sub.
fn add_raw(a: &Arc<Expr>, b: &Arc<Expr>) -> Arc<Expr> {
    if is_zero(a) {
        return b.clone();
    }
    if is_zero(b) {
        return a.clone();
    }
    if let Some(f) = fold2(a, b, |x, y| x + y) {
        return f;
    }
    Arc::new(Expr::Add(a.clone(), b.clone()))
}

pub fn mul(a: &Arc<Expr>, b: &Arc<Expr>) -> Arc<Expr> {
    if is_zero(a) || is_zero(b) {
        return constant(0.0);
    }
    if is_one(a) {
        return b.clone();
    }
    if is_one(b) {
        return a.clone();
    }
    if let Some(f) = fold2(a, b, |x, y| x * y) {
        return f;
    }
    if let (Expr::Neg(na), Expr::Neg(nb)) = (a.as_ref(), b.as_ref()) {
        return mul(na, nb);
    }
    Arc::new(Expr::Mul(a.clone(), b.clone()))
}

pub fn div(a: &Arc<Expr>, b: &Arc<Expr>) -> Arc<Expr> {
    if is_one(b) {
        return a.clone();
    }
    if is_zero(a) {
        return constant(0.0);
    }
    if let Some(y) = const_of(b) {
        if y != 0.0 {
            if let Some(f) = fold2(a, b, |x, y| x / y) {
                return f;
            }
        }
    }
    Arc::new(Expr::Div(a.clone(), b.clone()))
}

pub fn neg(a: &Arc<Expr>) -> Arc<Expr> {
    match a.as_ref() {
        Expr::Const(c) if *c == 0.0 => a.clone(),
        Expr::Neg(inner) => inner.clone(),
        _ => Arc::new(Expr::Neg(a.clone())),
    }
}

pub fn pow(base: &Arc<Expr>, exp: &Arc<Expr>) -> Arc<Expr> {
    if is_zero(exp) {
        return constant(1.0);
    }
    if is_one(exp) {
        return base.clone();
    }
    if is_one(base) {
        return constant(1.0);
    }
    if let (Some(x), Some(y)) = (const_of(base), const_of(exp)) {
        let v = x.powf(y);
        if v.is_finite() {
            return constant(v);
        }
    }
    Arc::new(Expr::Pow(base.clone(), exp.clone()))
}

pub fn call(f: UnaryFn, a: &Arc<Expr>) -> Arc<Expr> {
    if let Some(x) = const_of(a) {
        if let Ok(v) = f.apply(x) {
            return constant(v);
        }
    }
    Arc::new(Expr::Call(f, a.clone()))
}

/// IEEE double evaluation. Domain problems (division by zero, log of a
/// non-positive value, fractional powers of negatives, overflow to
/// non-finite) are reported as errors, never returned as NaN/inf.
pub fn eval(e: &Expr, point: &[f64]) -> Result<f64> {
    match e {
        Expr::Const(c) => Ok(*c),
        Expr::Coord(i) => point
            .get(*i)
            .copied()
            .ok_or_else(|| Error::Domain(format!("point has no coordinate {i}"))),
        Expr::Neg(a) => Ok(-eval(a, point)?),
        Expr::Add(a, b) => finite(eval(a, point)? + eval(b, point)?),
        Expr::Sub(a, b) => finite(eval(a, point)? - eval(b, point)?),
        Expr::Mul(a, b) => finite(eval(a, point)? * eval(b, point)?),
        Expr::Div(a, b) => {
            let d = eval(b, point)?;
            if d == 0.0 {
                return Err(Error::Domain("division by zero".into()));
            }
            finite(eval(a, point)? / d)
        }
        Expr::Pow(a, b) => {
            let base = eval(a, point)?;
            let exp = eval(b, point)?;
            if base == 0.0 && exp < 0.0 {
                return Err(Error::Domain("zero raised to a negative power".into()));
            }
            if base < 0.0 && exp.fract() != 0.0 {
                return Err(Error::Domain(format!(
                    "negative base {base} raised to non-integer power {exp}"
                )));
            }
            finite(base.powf(exp))
        }
        Expr::Call(f, a) => f.apply(eval(a, point)?),
    }
}

/// Exact symbolic partial derivative with respect to coordinate `i`.
pub fn derivative(e: &Arc<Expr>, i: usize) -> Arc<Expr> {
    match e.as_ref() {
        Expr::Const(_) => constant(0.0),
        Expr::Coord(j) => constant(if *j == i { 1.0 } else { 0.0 }),
        Expr::Neg(a) => neg(&derivative(a, i)),
        Expr::Add(a, b) => add(&derivative(a, i), &derivative(b, i)),
        Expr::Sub(a, b) => sub(&derivative(a, i), &derivative(b, i)),
        Expr::Mul(a, b) => {
            let da = derivative(a, i);
            let db = derivative(b, i);
            add(&mul(&da, b), &mul(a, &db))
        }
        Expr::Div(a, b) => {
            // (a/b)' = a'/b - a b'/b^2
            let da = derivative(a, i);
            let db = derivative(b, i);
            sub(&div(&da, b), &div(&mul(a, &db), &mul(b, b)))
        }
        Expr::Pow(base, exp) => {
            let dbase = derivative(base, i);
            if let Some(c) = const_of(exp) {
                // c * base^(c-1) * base'
                let e1 = pow(base, &constant(c - 1.0));
                return mul(&mul(exp, &e1), &dbase);
            }
            // u^v * (v' log u + v u'/u)
            let dexp = derivative(exp, i);
            let term1 = mul(&dexp, &call(UnaryFn::Log, base));
            let term2 = mul(exp, &div(&dbase, base));
            mul(e, &add(&term1, &term2))
        }
        Expr::Call(f, a) => {
            let da = derivative(a, i);
            let outer = match f {
                UnaryFn::Sin => call(UnaryFn::Cos, a),
                UnaryFn::Cos => neg(&call(UnaryFn::Sin, a)),
                UnaryFn::Exp => call(UnaryFn::Exp, a),
                UnaryFn::Log => div(&constant(1.0), a),
                UnaryFn::Sqrt => div(&constant(0.5), &call(UnaryFn::Sqrt, a)),
                UnaryFn::Tanh => {
                    let t = call(UnaryFn::Tanh, a);
                    sub(&constant(1.0), &mul(&t, &t))
                }
            };
            mul(&outer, &da)
        }
    }
}

/// True if the expression mentions coordinate `i`.
pub fn uses_coord(e: &Expr, i: usize) -> bool {
    match e {
        Expr::Const(_) => false,
        Expr::Coord(j) => *j == i,
        Expr::Neg(a) | Expr::Call(_, a) => uses_coord(a, i),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
            uses_coord(a, i) || uses_coord(b, i)
        }
    }
}

/// Substitute the constant `value` for coordinate `i`, folding where possible.
pub fn substitute(e: &Arc<Expr>, i: usize, value: f64) -> Arc<Expr> {
    match e.as_ref() {
        Expr::Const(_) => e.clone(),
        Expr::Coord(j) => {
            if *j == i {
                constant(value)
            } else {
                e.clone()
            }
        }
        Expr::Neg(a) => neg(&substitute(a, i, value)),
        Expr::Add(a, b) => add(&substitute(a, i, value), &substitute(b, i, value)),
        Expr::Sub(a, b) => sub(&substitute(a, i, value), &substitute(b, i, value)),
        Expr::Mul(a, b) => mul(&substitute(a, i, value), &substitute(b, i, value)),
        Expr::Div(a, b) => div(&substitute(a, i, value), &substitute(b, i, value)),
        Expr::Pow(a, b) => pow(&substitute(a, i, value), &substitute(b, i, value)),
        Expr::Call(f, a) => call(*f, &substitute(a, i, value)),
    }
}

/// Renumber coordinates; `map[old] = Some(new)` keeps a coordinate,
/// `None` marks it as forbidden (error if referenced).
pub fn remap_coords(e: &Arc<Expr>, map: &[Option<usize>]) -> Result<Arc<Expr>> {
    Ok(match e.as_ref() {
        Expr::Const(_) => e.clone(),
        Expr::Coord(j) => {
            let new = map.get(*j).copied().flatten().ok_or_else(|| {
                Error::InvalidInput(format!("expression references dropped coordinate {j}"))
            })?;
            coord(new)
        }
        Expr::Neg(a) => neg(&remap_coords(a, map)?),
        Expr::Add(a, b) => add(&remap_coords(a, map)?, &remap_coords(b, map)?),
        Expr::Sub(a, b) => sub(&remap_coords(a, map)?, &remap_coords(b, map)?),
        Expr::Mul(a, b) => mul(&remap_coords(a, map)?, &remap_coords(b, map)?),
        Expr::Div(a, b) => div(&remap_coords(a, map)?, &remap_coords(b, map)?),
        Expr::Pow(a, b) => pow(&remap_coords(a, map)?, &remap_coords(b, map)?),
        Expr::Call(f, a) => call(*f, &remap_coords(a, map)?),
    })
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(..) => 3,
        Expr::Pow(..) => 4,
        Expr::Const(_) | Expr::Coord(_) | Expr::Call(..) => 5,
    }
}

/// Print with the minimal parentheses that make `parse . print` the
/// structural identity.
pub fn pretty(e: &Expr, names: &[String]) -> String {
    let mut out = String::new();
    write_expr(e, names, &mut out);
    out
}

fn write_child(child: &Expr, min_prec: u8, names: &[String], out: &mut String) {
    if prec(child) < min_prec {
        out.push('(');
        write_expr(child, names, out);
        out.push(')');
    } else {
        write_expr(child, names, out);
    }
}

fn write_expr(e: &Expr, names: &[String], out: &mut String) {
    match e {
        Expr::Const(c) => {
            let _ = write!(out, "{c}");
        }
        Expr::Coord(i) => out.push_str(names.get(*i).map(String::as_str).unwrap_or("?")),
        Expr::Neg(a) => {
            out.push('-');
            write_child(a, 4, names, out);
        }
        Expr::Add(a, b) => {
            write_child(a, 1, names, out);
            out.push_str(" + ");
            write_child(b, 2, names, out);
        }
        Expr::Sub(a, b) => {
            write_child(a, 1, names, out);
            out.push_str(" - ");
            write_child(b, 2, names, out);
        }
        Expr::Mul(a, b) => {
            write_child(a, 2, names, out);
            out.push('*');
            write_child(b, 3, names, out);
        }
        Expr::Div(a, b) => {
            write_child(a, 2, names, out);
            out.push('/');
            write_child(b, 3, names, out);
        }
        Expr::Pow(a, b) => {
            write_child(a, 5, names, out);
            out.push('^');
            write_child(b, 3, names, out);
        }
        Expr::Call(f, a) => {
            out.push_str(f.name());
            out.push('(');
            write_expr(a, names, out);
            out.push(')');
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Next token together with its starting byte offset; `None` at EOF.
    fn next(&mut self) -> Result<Option<(Tok, usize)>> {
        self.skip_ws();
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'0'..=b'9' | b'.' => {
                let mut end = self.pos;
                while end < self.src.len() && (self.src[end].is_ascii_digit() || self.src[end] == b'.')
                {
                    end += 1;
                }
                // optional exponent
                if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
                    let mut e = end + 1;
                    if e < self.src.len() && (self.src[e] == b'+' || self.src[e] == b'-') {
                        e += 1;
                    }
                    if e < self.src.len() && self.src[e].is_ascii_digit() {
                        while e < self.src.len() && self.src[e].is_ascii_digit() {
                            e += 1;
                        }
                        end = e;
                    }
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                let value: f64 = text.parse().map_err(|_| Error::Syntax {
                    offset: start,
                    message: format!("invalid number literal \"{text}\""),
                })?;
                self.pos = end;
                Tok::Num(value)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
                {
                    end += 1;
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap().to_string();
                self.pos = end;
                Tok::Ident(text)
            }
            other => {
                return Err(Error::Syntax {
                    offset: start,
                    message: format!("unexpected character {:?}", other as char),
                })
            }
        };
        Ok(Some((tok, start)))
    }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    coords: &'a [String],
    len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&(Tok, usize)> {
        self.toks.get(self.idx)
    }

    fn bump(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.idx).cloned();
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn eat(&mut self, want: &Tok, expect: &str) -> Result<usize> {
        match self.bump() {
            Some((t, off)) if &t == want => Ok(off),
            Some((_, off)) => Err(Error::Syntax {
                offset: off,
                message: format!("expected {expect}"),
            }),
            None => Err(Error::Syntax {
                offset: self.len,
                message: format!("expected {expect}, found end of input"),
            }),
        }
    }

    fn expr(&mut self) -> Result<Arc<Expr>> {
        let mut acc = self.term()?;
        while let Some((tok, _)) = self.peek() {
            match tok {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    acc = add(&acc, &rhs);
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    acc = sub(&acc, &rhs);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Arc<Expr>> {
        let mut acc = self.unary()?;
        while let Some((tok, _)) = self.peek() {
            match tok {
                Tok::Star => {
                    self.bump();
                    let rhs = self.unary()?;
                    acc = mul(&acc, &rhs);
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.unary()?;
                    acc = div(&acc, &rhs);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Arc<Expr>> {
        if let Some((Tok::Minus, _)) = self.peek() {
            self.bump();
            let inner = self.unary()?;
            return Ok(neg(&inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Arc<Expr>> {
        let base = self.atom()?;
        if let Some((Tok::Caret, _)) = self.peek() {
            self.bump();
            let exp = self.unary()?;
            return Ok(pow(&base, &exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Arc<Expr>> {
        match self.bump() {
            Some((Tok::Num(v), _)) => Ok(constant(v)),
            Some((Tok::LParen, _)) => {
                let inner = self.expr()?;
                self.eat(&Tok::RParen, "closing parenthesis")?;
                Ok(inner)
            }
            Some((Tok::Ident(name), off)) => {
                if let Some(f) = UnaryFn::from_name(&name) {
                    self.eat(&Tok::LParen, &format!("'(' after function {name}"))?;
                    let arg = self.expr()?;
                    self.eat(&Tok::RParen, "closing parenthesis")?;
                    return Ok(call(f, &arg));
                }
                match self.coords.iter().position(|c| c == &name) {
                    Some(i) => Ok(coord(i)),
                    None => Err(Error::UnknownSymbol { name, offset: off }),
                }
            }
            Some((t, off)) => Err(Error::Syntax {
                offset: off,
                message: format!("unexpected token {t:?}"),
            }),
            None => Err(Error::Syntax {
                offset: self.len,
                message: "unexpected end of input".into(),
            }),
        }
    }
}

/// Parse `text` over the given coordinate names.
pub fn parse(text: &str, coords: &[String]) -> Result<Arc<Expr>> {
    let mut lexer = Lexer::new(text);
    let mut toks = Vec::new();
    while let Some(t) = lexer.next()? {
        toks.push(t);
    }
    let mut parser = Parser {
        toks,
        idx: 0,
        coords,
        len: text.len(),
    };
    let e = parser.expr()?;
    if let Some((t, off)) = parser.peek() {
        return Err(Error::Syntax {
            offset: *off,
            message: format!("trailing input starting with {t:?}"),
        });
    }
    Ok(e)
}
