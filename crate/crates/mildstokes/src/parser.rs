//! Reader for `.dsys` system files, exponents and formal data.
//!
//! A file is a sequence of statements, each starting with a keyword:
//!
//! ```text
//! # B_{1/2}
//! var t
//! rank 1
//! A = [[1 + 0.5*t]]
//! param theta = 0.3
//! ```
//!
//! Entries are expressions in `t` and `s = 1/t` built from `+ - * / ^`,
//! parentheses, the constant `pi` and the functions `exp`, `log`, `sqrt`.
//! Imaginary numbers are written as suffixed literals (`2i`, `0.5i`); a bare
//! `i` is rejected. `u = exp(2πi s)` is reserved and has no expansion at
//! `t = 0`.

use mildstokes_core::diffmod::{graded_module, DiffSystem, FormalDatum, FormalPiece};
use mildstokes_core::exponents::Exponent;
use mildstokes_core::linalg::CMat;
use mildstokes_core::series::{MatrixSeries, Series, SeriesError, DEFAULT_TRUNCATION, MAX_RAMIFICATION};
use mildstokes_core::Complex64;
use thiserror::Error;

/// Extra orders carried while expanding, so that negative powers of `t`
/// inside an entry do not eat into the requested truncation.
const MARGIN: i64 = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: expected {expected}, found {found}")]
    Syntax { line: usize, col: usize, expected: String, found: String },
    #[error("{line}:{col}: no expansion at t = 0: {reason}")]
    Expansion { line: usize, col: usize, reason: String },
    #[error("{line}:{col}: exponent has s-degree {degree} > 1")]
    NonMildExponent { line: usize, col: usize, degree: String },
    #[error("{line}:{col}: {message}")]
    Invalid { line: usize, col: usize, message: String },
}

impl ParseError {
    /// 1-based `(line, column)`.
    pub fn position(&self) -> (usize, usize) {
        match self {
            ParseError::Syntax { line, col, .. }
            | ParseError::Expansion { line, col, .. }
            | ParseError::NonMildExponent { line, col, .. }
            | ParseError::Invalid { line, col, .. } => (*line, *col),
        }
    }
}

pub type Result<T> = std::result::Result<T, ParseError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Complex64),
    Ident(String),
    Sym(char),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: Pos,
    text: String,
}

fn describe(t: &Token) -> String {
    match t.tok {
        Tok::Eof => String::from("end of input"),
        _ => format!("`{}`", t.text),
    }
}

fn lex(src: &str) -> Result<Vec<Token>> {
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
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let body: String = chars[start..i].iter().collect();
            let value: f64 = body.parse().map_err(|_| ParseError::Syntax {
                line,
                col,
                expected: String::from("a number"),
                found: format!("`{body}`"),
            })?;
            let imag = i < chars.len() && chars[i] == 'i';
            if imag {
                i += 1;
            }
            if i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                return Err(ParseError::Syntax {
                    line,
                    col: col + (i - start),
                    expected: String::from("an operator after the number"),
                    found: format!("`{}`", chars[i]),
                });
            }
            let z = if imag { Complex64::new(0.0, value) } else { Complex64::new(value, 0.0) };
            out.push(Token { tok: Tok::Num(z), pos, text: chars[start..i].iter().collect() });
            col += i - start;
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            out.push(Token { tok: Tok::Ident(word.clone()), pos, text: word });
            col += i - start;
            continue;
        }
        if "+-*/^()[],=".contains(c) {
            out.push(Token { tok: Tok::Sym(c), pos, text: c.to_string() });
            i += 1;
            col += 1;
            continue;
        }
        return Err(ParseError::Syntax {
            line,
            col,
            expected: String::from("a number, name or operator"),
            found: format!("`{c}`"),
        });
    }
    out.push(Token { tok: Tok::Eof, pos: Pos { line, col }, text: String::new() });
    Ok(out)
}

/// Expression tree with source positions.
#[derive(Debug, Clone)]
pub enum Expr {
    Num(Complex64, Pos),
    Var(char, Pos),
    Pi(Pos),
    Neg(Box<Expr>, Pos),
    Bin(char, Box<Expr>, Box<Expr>, Pos),
    Call(String, Box<Expr>, Pos),
}

impl Expr {
    pub fn pos(&self) -> Pos {
        match self {
            Expr::Num(_, p) | Expr::Var(_, p) | Expr::Pi(p) | Expr::Neg(_, p) => *p,
            Expr::Bin(_, _, _, p) | Expr::Call(_, _, p) => *p,
        }
    }
}

const FUNCTIONS: [&str; 3] = ["exp", "log", "sqrt"];

struct Parser {
    toks: Vec<Token>,
    at: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self> {
        Ok(Parser { toks: lex(src)?, at: 0 })
    }

    fn peek(&self) -> &Token {
        &self.toks[self.at]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> ParseError {
        let t = self.peek();
        ParseError::Syntax { line: t.pos.line, col: t.pos.col, expected: expected.into(), found: describe(t) }
    }

    fn is_sym(&self, c: char) -> bool {
        self.peek().tok == Tok::Sym(c)
    }

    fn expect_sym(&mut self, c: char) -> Result<Token> {
        if self.is_sym(c) {
            Ok(self.bump())
        } else {
            Err(self.error(&format!("`{c}`")))
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, Pos)> {
        match &self.peek().tok {
            Tok::Ident(w) => {
                let w = w.clone();
                let p = self.bump().pos;
                Ok((w, p))
            }
            _ => Err(self.error(what)),
        }
    }

    fn expect_uint(&mut self, what: &str) -> Result<(u64, Pos)> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Num(z) if z.im == 0.0 && z.re >= 0.0 && z.re.fract() == 0.0 && !t.text.contains('.') => {
                self.bump();
                Ok((z.re as u64, t.pos))
            }
            _ => Err(self.error(what)),
        }
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while self.is_sym('+') || self.is_sym('-') {
            let op = self.bump();
            let Tok::Sym(c) = op.tok else { unreachable!() };
            let rhs = self.term()?;
            lhs = Expr::Bin(c, Box::new(lhs), Box::new(rhs), op.pos);
        }
        Ok(lhs)
    }

    // term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while self.is_sym('*') || self.is_sym('/') {
            let op = self.bump();
            let Tok::Sym(c) = op.tok else { unreachable!() };
            let rhs = self.unary()?;
            lhs = Expr::Bin(c, Box::new(lhs), Box::new(rhs), op.pos);
        }
        Ok(lhs)
    }

    // unary := ('-' | '+') unary | power
    fn unary(&mut self) -> Result<Expr> {
        if self.is_sym('-') {
            let p = self.bump().pos;
            return Ok(Expr::Neg(Box::new(self.unary()?), p));
        }
        if self.is_sym('+') {
            self.bump();
            return self.unary();
        }
        self.power()
    }

    // power := atom ('^' unary)?   (right associative)
    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.is_sym('^') {
            let p = self.bump().pos;
            let exp = self.unary()?;
            return Ok(Expr::Bin('^', Box::new(base), Box::new(exp), p));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Num(z) => {
                self.bump();
                Ok(Expr::Num(*z, t.pos))
            }
            Tok::Sym('(') => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(')')?;
                Ok(e)
            }
            Tok::Ident(w) => match w.as_str() {
                "t" | "s" | "u" => {
                    self.bump();
                    Ok(Expr::Var(w.chars().next().unwrap(), t.pos))
                }
                "pi" => {
                    self.bump();
                    Ok(Expr::Pi(t.pos))
                }
                "i" => Err(ParseError::Syntax {
                    line: t.pos.line,
                    col: t.pos.col,
                    expected: String::from("a numeric literal such as `1i`"),
                    found: String::from("bare `i`"),
                }),
                f if FUNCTIONS.contains(&f) => {
                    let name = f.to_string();
                    self.bump();
                    self.expect_sym('(')?;
                    let arg = self.expr()?;
                    self.expect_sym(')')?;
                    Ok(Expr::Call(name, Box::new(arg), t.pos))
                }
                _ => Err(self.error("an expression")),
            },
            _ => Err(self.error("an expression")),
        }
    }

    fn matrix(&mut self) -> Result<(Vec<Vec<Expr>>, Pos)> {
        let open = self.expect_sym('[')?;
        let mut rows = Vec::new();
        loop {
            let row_pos = self.peek().pos;
            self.expect_sym('[')?;
            let mut row = vec![self.expr()?];
            while self.is_sym(',') {
                self.bump();
                row.push(self.expr()?);
            }
            self.expect_sym(']')?;
            if let Some(first) = rows.first() {
                let first: &Vec<Expr> = first;
                if row.len() != first.len() {
                    return Err(ParseError::Invalid {
                        line: row_pos.line,
                        col: row_pos.col,
                        message: format!("row has {} entries, expected {}", row.len(), first.len()),
                    });
                }
            }
            rows.push(row);
            if self.is_sym(',') {
                self.bump();
                continue;
            }
            break;
        }
        self.expect_sym(']')?;
        if rows.len() != rows[0].len() {
            return Err(ParseError::Invalid {
                line: open.pos.line,
                col: open.pos.col,
                message: format!("matrix is {}x{}, not square", rows.len(), rows[0].len()),
            });
        }
        Ok((rows, open.pos))
    }

    fn at_end(&self) -> bool {
        self.peek().tok == Tok::Eof
    }
}

/// Expanded value of an expression and whether the expansion is finite
/// (a Laurent polynomial, so evaluating it is exact).
#[derive(Debug, Clone)]
struct Value {
    s: Series,
    exact: bool,
}

fn expansion_err(pos: Pos, reason: impl Into<String>) -> ParseError {
    ParseError::Expansion { line: pos.line, col: pos.col, reason: reason.into() }
}

fn series_err(pos: Pos, e: SeriesError) -> ParseError {
    expansion_err(pos, e.to_string())
}

fn as_constant(v: &Series) -> Option<Complex64> {
    let n = v.normalized();
    match n.valuation() {
        None => Some(Complex64::new(0.0, 0.0)),
        Some(0) => {
            let nonzero = n.coeffs().iter().skip(1).all(|c| c.norm() == 0.0);
            nonzero.then(|| n.coeffs()[0])
        }
        _ => None,
    }
}

fn is_monomial(v: &Series) -> bool {
    v.coeffs().iter().filter(|c| c.norm() != 0.0).count() <= 1
}

/// Small rational `p/q` with `q ≤ 12` matching `x`.
fn as_rational(x: f64) -> Option<(i64, i64)> {
    (1..=MAX_RAMIFICATION as i64).find_map(|q| {
        let p = (x * q as f64).round();
        ((x * q as f64 - p).abs() < 1e-12).then_some((p as i64, q))
    })
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

struct Expander {
    trunc: i64,
}

impl Expander {
    fn constant(&self, c: Complex64) -> Value {
        Value { s: Series::constant(c, 1, self.trunc), exact: true }
    }

    fn eval(&self, e: &Expr) -> Result<Value> {
        match e {
            Expr::Num(z, _) => Ok(self.constant(*z)),
            Expr::Pi(_) => Ok(self.constant(Complex64::new(std::f64::consts::PI, 0.0))),
            Expr::Var('t', _) => Ok(Value { s: Series::t(1, self.trunc), exact: true }),
            Expr::Var('s', _) => {
                Ok(Value { s: Series::monomial(Complex64::new(1.0, 0.0), -1, 1, self.trunc), exact: true })
            }
            Expr::Var(_, p) => Err(expansion_err(*p, "u = exp(2*pi*i*s) has an essential singularity")),
            Expr::Neg(x, _) => {
                let v = self.eval(x)?;
                Ok(Value { s: v.s.scale(Complex64::new(-1.0, 0.0)), exact: v.exact })
            }
            Expr::Bin(op, a, b, p) => {
                let x = self.eval(a)?;
                let y = self.eval(b)?;
                match op {
                    '+' => Ok(Value { s: x.s.checked_add(&y.s).map_err(|e| series_err(*p, e))?, exact: x.exact && y.exact }),
                    '-' => Ok(Value { s: x.s.checked_sub(&y.s).map_err(|e| series_err(*p, e))?, exact: x.exact && y.exact }),
                    '*' => Ok(Value { s: x.s.checked_mul(&y.s).map_err(|e| series_err(*p, e))?, exact: x.exact && y.exact }),
                    '/' => {
                        if y.s.normalized().valuation().is_none() {
                            return Err(expansion_err(b.pos(), "division by zero"));
                        }
                        let exact = x.exact && y.exact && is_monomial(&y.s);
                        Ok(Value { s: x.s.checked_div(&y.s).map_err(|e| series_err(*p, e))?, exact })
                    }
                    '^' => self.power(x, y, b.pos()),
                    _ => unreachable!(),
                }
            }
            Expr::Call(f, arg, p) => {
                let v = self.eval(arg)?;
                if let Some(c) = as_constant(&v.s) {
                    let r = match f.as_str() {
                        "exp" => c.exp(),
                        "log" => {
                            if c.norm() == 0.0 {
                                return Err(expansion_err(arg.pos(), "log of zero"));
                            }
                            c.ln()
                        }
                        _ => c.sqrt(),
                    };
                    return Ok(self.constant(r));
                }
                let s = match f.as_str() {
                    "exp" => v.s.exp(),
                    "log" => v.s.log(),
                    _ => return self.power(v, self.constant(Complex64::new(0.5, 0.0)), *p),
                }
                .map_err(|e| series_err(arg.pos(), e))?;
                Ok(Value { s, exact: false })
            }
        }
    }

    fn power(&self, base: Value, exp: Value, epos: Pos) -> Result<Value> {
        let q = as_constant(&exp.s).ok_or_else(|| expansion_err(epos, "exponent must be a constant"))?;
        if q.im == 0.0 && q.re.fract() == 0.0 && q.re.abs() < 1e6 {
            let n = q.re as i64;
            let exact = base.exact && (n >= 0 || is_monomial(&base.s));
            let s = base.s.powi(n).map_err(|e| series_err(epos, e))?;
            return Ok(Value { s, exact });
        }
        let b = base.s.normalized();
        let Some(v) = b.valuation() else {
            return Ok(self.constant(Complex64::new(0.0, 0.0)));
        };
        let exact = base.exact && is_monomial(&b);
        if v == 0 {
            let s = b.powc(q).map_err(|e| series_err(epos, e))?;
            return Ok(Value { s, exact: exact && as_constant(&b).is_some() });
        }
        // c t^{v/m} (1 + g) with a rational power
        let (pn, pd) = (q.im == 0.0)
            .then(|| as_rational(q.re))
            .flatten()
            .ok_or_else(|| expansion_err(epos, "non-rational power of a series with a zero or pole"))?;
        let m = b.ramification() as i64;
        let (num, den) = (v * pn, m * pd);
        let g = gcd(num, den);
        let (num, den) = (num / g, den / g);
        if den > MAX_RAMIFICATION as i64 {
            return Err(series_err(epos, SeriesError::RamificationCap(den as u32)));
        }
        let lead = b.coeffs()[0];
        let unit = b.scale(lead.inv());
        let unit = Series::new(unit.ramification(), 0, unit.coeffs().to_vec());
        let tail = unit.powc(q).map_err(|e| series_err(epos, e))?;
        let mono = Series::monomial(lead.powc(q), num, den as u32, self.trunc * den);
        let s = mono.checked_mul(&tail).map_err(|e| series_err(epos, e))?;
        Ok(Value { s, exact })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    T,
    S,
}

/// Contents of a `.dsys` file.
#[derive(Debug, Clone)]
pub struct SystemFile {
    pub var: Variable,
    pub rank: usize,
    pub ramification: u32,
    pub truncation: i64,
    pub matrix: Option<MatrixSeries>,
    pub exact: bool,
    pub formal: Option<FormalDatum>,
    pub params: Vec<(String, f64)>,
}

impl SystemFile {
    /// The system of the file, or the graded module of its formal block.
    pub fn system(&self) -> std::result::Result<DiffSystem, mildstokes_core::diffmod::DiffError> {
        match &self.matrix {
            Some(a) => Ok(DiffSystem::new(a.clone()).with_exact(self.exact)),
            None => graded_module(self.formal.as_ref().expect("file has A or formal"), self.truncation),
        }
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().rev().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

fn invalid(pos: Pos, message: impl Into<String>) -> ParseError {
    ParseError::Invalid { line: pos.line, col: pos.col, message: message.into() }
}

/// Parses a system file.
pub fn parse_system(text: &str) -> Result<SystemFile> {
    let mut p = Parser::new(text)?;
    let mut var = Variable::T;
    let mut rank: Option<(usize, Pos)> = None;
    let mut ram: Option<(u32, Pos)> = None;
    let mut trunc = DEFAULT_TRUNCATION;
    let mut exact: Option<bool> = None;
    let mut matrix: Option<(Vec<Vec<Expr>>, Pos)> = None;
    let mut formal: Option<(Vec<(Expr, Vec<Vec<Expr>>)>, Pos)> = None;
    let mut params: Vec<(String, Expr)> = Vec::new();
    while !p.at_end() {
        let (kw, kpos) = p.expect_ident("a statement (`rank`, `ram`, `trunc`, `var`, `exact`, `A`, `formal`, `param`)")?;
        match kw.as_str() {
            "var" => {
                let (v, vp) = p.expect_ident("`t` or `s`")?;
                var = match v.as_str() {
                    "t" => Variable::T,
                    "s" => Variable::S,
                    _ => return Err(ParseError::Syntax { line: vp.line, col: vp.col, expected: "`t` or `s`".into(), found: format!("`{v}`") }),
                };
            }
            "rank" => {
                let (n, np) = p.expect_uint("a positive integer")?;
                if n == 0 {
                    return Err(invalid(np, "rank must be positive"));
                }
                rank = Some((n as usize, np));
            }
            "ram" => {
                let (n, np) = p.expect_uint("a positive integer")?;
                if n == 0 || n > MAX_RAMIFICATION as u64 {
                    return Err(invalid(np, format!("ramification must be in 1..={MAX_RAMIFICATION}")));
                }
                ram = Some((n as u32, np));
            }
            "trunc" => {
                let (n, np) = p.expect_uint("a positive integer")?;
                if n == 0 || n > 64 {
                    return Err(invalid(np, "truncation must be in 1..=64"));
                }
                trunc = n as i64;
            }
            "exact" => {
                let (v, vp) = p.expect_ident("`yes` or `no`")?;
                exact = Some(match v.as_str() {
                    "yes" => true,
                    "no" => false,
                    _ => return Err(ParseError::Syntax { line: vp.line, col: vp.col, expected: "`yes` or `no`".into(), found: format!("`{v}`") }),
                });
            }
            "A" => {
                p.expect_sym('=')?;
                matrix = Some(p.matrix()?);
            }
            "formal" => {
                p.expect_sym('=')?;
                let open = p.expect_sym('[')?;
                let mut pieces = Vec::new();
                loop {
                    p.expect_sym('(')?;
                    let a = p.expr()?;
                    p.expect_sym(',')?;
                    let (g, _) = p.matrix()?;
                    p.expect_sym(')')?;
                    pieces.push((a, g));
                    if p.is_sym(',') {
                        p.bump();
                        continue;
                    }
                    break;
                }
                p.expect_sym(']')?;
                formal = Some((pieces, open.pos));
            }
            "param" => {
                let (name, _) = p.expect_ident("a parameter name")?;
                p.expect_sym('=')?;
                params.push((name, p.expr()?));
            }
            _ => {
                return Err(ParseError::Syntax {
                    line: kpos.line,
                    col: kpos.col,
                    expected: "a statement keyword".into(),
                    found: format!("`{kw}`"),
                })
            }
        }
    }
    if matrix.is_none() && formal.is_none() {
        let t = p.peek();
        return Err(ParseError::Syntax { line: t.pos.line, col: t.pos.col, expected: "`A = [[...]]` or `formal = [...]`".into(), found: describe(t) });
    }
    let ex = Expander { trunc: trunc + MARGIN };

    let mut matrix_series = None;
    let mut all_exact = true;
    let mut n = None;
    if let Some((rows, mpos)) = &matrix {
        let mut entries = Vec::with_capacity(rows.len());
        for row in rows {
            let mut r = Vec::with_capacity(row.len());
            for e in row {
                let v = ex.eval(e)?;
                all_exact &= v.exact;
                r.push(v.s);
            }
            entries.push(r);
        }
        let mut a = MatrixSeries::from_entries(&entries).map_err(|e| series_err(*mpos, e))?;
        if let Some((m, rp)) = ram {
            if m % a.ramification() != 0 {
                return Err(invalid(rp, format!("entries need ramification {}", a.ramification())));
            }
            a = a.with_ramification(m).map_err(|e| series_err(rp, e))?;
        }
        let a = a.truncate(trunc.max(a.low()));
        n = Some((rows.len(), *mpos));
        matrix_series = Some(a);
    }
    let mut datum = None;
    if let Some((pieces, fpos)) = &formal {
        let mut out = Vec::new();
        for (a, g) in pieces {
            let exponent = expand_exponent(&ex, a)?;
            let gm = constant_matrix(&ex, g)?;
            out.push(FormalPiece::new(exponent, gm));
        }
        let fd = FormalDatum::new(out);
        if let Some((k, _)) = n {
            if fd.rank() != k {
                return Err(invalid(*fpos, format!("formal datum has rank {}, matrix has rank {k}", fd.rank())));
            }
        }
        if n.is_none() {
            n = Some((fd.rank(), *fpos));
        }
        datum = Some(fd);
    }
    let (k, kpos) = n.unwrap();
    if let Some((r, rp)) = rank {
        if r != k {
            return Err(invalid(rp, format!("rank {r} does not match the {k}x{k} matrix at {}:{}", kpos.line, kpos.col)));
        }
    }
    let mut values = Vec::new();
    for (name, e) in &params {
        let v = ex.eval(e)?;
        let c = as_constant(&v.s).filter(|c| c.im == 0.0).ok_or_else(|| invalid(e.pos(), "parameter must be a real constant"))?;
        values.push((name.clone(), c.re));
    }
    let ramification = match (&matrix_series, &datum) {
        (Some(a), _) => a.ramification(),
        (None, Some(fd)) => fd.ramification(),
        _ => 1,
    };
    Ok(SystemFile {
        var,
        rank: k,
        ramification,
        truncation: trunc,
        exact: exact.unwrap_or(all_exact),
        matrix: matrix_series,
        formal: datum,
        params: values,
    })
}

fn constant_matrix(ex: &Expander, rows: &[Vec<Expr>]) -> Result<CMat> {
    let n = rows.len();
    let mut m = CMat::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            let v = ex.eval(e)?;
            m[(i, j)] = as_constant(&v.s).ok_or_else(|| invalid(e.pos(), "matrix entry must be a constant"))?;
        }
    }
    Ok(m)
}

fn expand_exponent(ex: &Expander, e: &Expr) -> Result<Exponent> {
    let v = ex.eval(e)?.s.normalized();
    let pos = e.pos();
    let Some(val) = v.valuation() else {
        return Ok(Exponent::zero());
    };
    let m = v.ramification() as i64;
    if val < -m {
        let g = gcd(-val, m);
        return Err(ParseError::NonMildExponent { line: pos.line, col: pos.col, degree: format!("{}/{}", -val / g, m / g) });
    }
    let scale = v.coeffs().iter().fold(1.0f64, |a, c| a.max(c.norm()));
    for k in 0..=v.trunc().min(ex.trunc) {
        if v.coeff(k).is_some_and(|c| c.norm() > 1e-12 * scale) {
            return Err(expansion_err(pos, "an exponent has no constant or decaying terms in s"));
        }
    }
    let coeffs: Vec<Complex64> = (1..=m).map(|l| v.coeff(-l).unwrap_or_default()).collect();
    Ok(Exponent::new(coeffs).minimal())
}

/// Parses an exponent `Σ c_ℓ s^{ℓ/m}`; the ramification is the minimal one.
pub fn parse_exponent(text: &str) -> Result<Exponent> {
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    if !p.at_end() {
        return Err(p.error("end of input"));
    }
    expand_exponent(&Expander { trunc: DEFAULT_TRUNCATION }, &e)
}

/// Parses a formal datum `[(exponent, [[G]]), …]`.
pub fn parse_formal(text: &str) -> Result<FormalDatum> {
    let mut p = Parser::new(text)?;
    let ex = Expander { trunc: DEFAULT_TRUNCATION };
    p.expect_sym('[')?;
    let mut pieces = Vec::new();
    loop {
        p.expect_sym('(')?;
        let a = p.expr()?;
        p.expect_sym(',')?;
        let (g, _) = p.matrix()?;
        p.expect_sym(')')?;
        pieces.push(FormalPiece::new(expand_exponent(&ex, &a)?, constant_matrix(&ex, &g)?));
        if p.is_sym(',') {
            p.bump();
            continue;
        }
        break;
    }
    p.expect_sym(']')?;
    if !p.at_end() {
        return Err(p.error("end of input"));
    }
    Ok(FormalDatum::new(pieces))
}

/// Parses a constant expression such as `0.3+0.2i` or `log(2)`.
pub fn parse_constant(text: &str) -> Result<Complex64> {
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    if !p.at_end() {
        return Err(p.error("end of input"));
    }
    let v = Expander { trunc: 2 }.eval(&e)?;
    as_constant(&v.s).ok_or_else(|| invalid(e.pos(), "expected a constant"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rank_two_example() {
        let f = parse_system("rank 2\nA = [[1+2*t, t],[0, 3]]").unwrap();
        let a = f.matrix.unwrap();
        let a0 = a.coeff(0).unwrap();
        assert_eq!(a0[(0, 0)], c(1.0, 0.0));
        assert_eq!(a0[(1, 1)], c(3.0, 0.0));
        assert_eq!(a0[(0, 1)], c(0.0, 0.0));
        assert_eq!(a.coeff(1).unwrap()[(0, 0)], c(2.0, 0.0));
        assert!(f.exact);
    }

    #[test]
    fn b_half_example() {
        let f = parse_system("A = [[1 + 0.5*t]]").unwrap();
        assert_eq!(f.rank, 1);
        let a = f.matrix.unwrap();
        assert_eq!(a.coeff(1).unwrap()[(0, 0)], c(0.5, 0.0));
        assert_eq!(a.trunc(), DEFAULT_TRUNCATION);
    }

    #[test]
    fn dangling_comma_is_located() {
        let err = parse_system("A = [[1+t,]").unwrap_err();
        assert_eq!(err.position(), (1, 11));
    }

    #[test]
    fn complex_literals_and_bare_i() {
        let z = parse_constant("(1+2i)*2").unwrap();
        assert_eq!(z, c(2.0, 4.0));
        assert!(matches!(parse_constant("1+i"), Err(ParseError::Syntax { col: 3, .. })));
    }

    #[test]
    fn exponent_examples() {
        let a = parse_exponent("log(2)*s").unwrap();
        assert_eq!(a.ramification(), 1);
        assert!((a.c(1) - c(2f64.ln(), 0.0)).norm() < 1e-15);
        let b = parse_exponent("s + 2*s^(1/2)").unwrap();
        assert_eq!(b.ramification(), 2);
        assert!((b.c(2) - c(1.0, 0.0)).norm() < 1e-15 && (b.c(1) - c(2.0, 0.0)).norm() < 1e-15);
        assert!(matches!(parse_exponent("s^2"), Err(ParseError::NonMildExponent { .. })));
    }

    #[test]
    fn essential_singularities_are_rejected() {
        assert!(matches!(parse_system("A = [[u]]"), Err(ParseError::Expansion { col: 7, .. })));
        assert!(matches!(parse_system("A = [[exp(s)]]"), Err(ParseError::Expansion { .. })));
    }

    #[test]
    fn rational_entries_expand() {
        let f = parse_system("A = [[1/(1-t)]]").unwrap();
        assert!(!f.exact);
        let a = f.matrix.unwrap();
        for k in 0..=16 {
            assert!((a.coeff(k).unwrap()[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        }
        let g = parse_system("A = [[(1+t)^(1/2)]]").unwrap().matrix.unwrap();
        assert!((g.coeff(1).unwrap()[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
        let r = parse_system("A = [[1 + t^(1/2)]]").unwrap();
        assert_eq!(r.ramification, 2);
        assert!(r.exact);
    }

    #[test]
    fn formal_block_and_params() {
        let f = parse_system("formal = [(log(2)*s, [[-1]]), (0, [[-0.5]])]\nparam theta = pi/4").unwrap();
        assert!(f.matrix.is_none());
        assert_eq!(f.rank, 2);
        assert!((f.param("theta").unwrap() - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!(f.system().is_ok());
    }

    #[test]
    fn rank_mismatch_is_reported() {
        let err = parse_system("rank 3\nA = [[1]]").unwrap_err();
        assert_eq!(err.position(), (1, 6));
    }
}
