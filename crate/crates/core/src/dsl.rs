//! Text format and evaluator for immersion specifications (`.sdl` files).
//!
//! A spec names the chart dimension and the `n+1` component expressions of an
//! immersion `F: U ⊂ R^n -> R^{n+1}`:
//!
//! ```text
//! n=3;
//! # optional metadata and per-variable domain boxes
//! name = "paraboloid";
//! u1 in [-1, 1];
//! F = (u1, u2, u3, (u1^2 + u2^2 + u3^2)/2);
//! ```
//!
//! Expressions use the variables `u1..un`, numeric literals, `+ - * / ^`
//! (exponents are integer or rational literals; `^` binds tighter than unary
//! minus, so `-u1^2` is `-(u1^2)`), and the functions `exp`, `log`, `sin`,
//! `cos`, `sqrt`. Components are evaluated directly over the jet ring, so a
//! single evaluation yields the full truncated Taylor expansion at a point.
//!
//! The extension form `profile_<k>(expr)` refers to the `k`-th entry of an
//! externally supplied table of univariate profile functions. Generated
//! warped-product charts use it for profiles defined by an ODE rather than a
//! closed form; evaluating it requires a [`ProfileSource`].

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::jet::{jet_space, Jet};
use crate::scalar::Real;

/// Exponent of the `^` operator: `p/q` as written (never reduced).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rational {
    pub num: i64,
    pub den: i64,
}

impl Rational {
    pub fn integer(n: i64) -> Self {
        Rational { num: n, den: 1 }
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }
}

/// Expression tree over the chart variables.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based variable index (`u1` is `Var(0)`).
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Rational),
    Call(Func, Box<Expr>),
    /// Externally defined univariate profile applied to the argument.
    Profile(usize, Box<Expr>),
}

/// Supplier of Taylor coefficients for the profiles referenced by
/// `profile_<k>(...)` nodes.
pub trait ProfileSource<T: Real>: Sync {
    fn profile_count(&self) -> usize;
    /// Taylor coefficients `f^(j)(at)/j!` for `j = 0..len` of profile `k`.
    fn taylor(&self, k: usize, at: T, len: usize) -> Result<Vec<T>>;
}

/// Empty profile table (any `profile_<k>` reference becomes an error).
pub struct NoProfiles;

impl<T: Real> ProfileSource<T> for NoProfiles {
    fn profile_count(&self) -> usize {
        0
    }

    fn taylor(&self, k: usize, _at: T, _len: usize) -> Result<Vec<T>> {
        Err(Error::Domain {
            expr: format!("profile_{k}"),
            msg: "no profile table supplied for this spec".into(),
        })
    }
}

/// A validated immersion specification.
#[derive(Clone, Debug, PartialEq)]
pub struct ImmersionSpec {
    chart_dim: usize,
    name: Option<String>,
    domain_hint: Vec<Option<(f64, f64)>>,
    components: Vec<Expr>,
}

impl ImmersionSpec {
    /// Parse the `.sdl` text format; rejects syntax and semantic errors with
    /// line/column positions.
    pub fn parse(text: &str) -> Result<Self> {
        Parser::new(text)?.file()
    }

    /// Programmatic construction with the same validation as the parser.
    pub fn from_parts(
        chart_dim: usize,
        name: Option<String>,
        domain_hint: Vec<Option<(f64, f64)>>,
        components: Vec<Expr>,
    ) -> Result<Self> {
        if chart_dim == 0 || chart_dim > crate::jet::MAX_VARS {
            return Err(Error::Dimension(format!(
                "chart dimension {chart_dim} out of supported range"
            )));
        }
        if components.len() != chart_dim + 1 {
            return Err(Error::Dimension(format!(
                "expected {} components for chart dimension {}, got {}",
                chart_dim + 1,
                chart_dim,
                components.len()
            )));
        }
        let mut hints = domain_hint;
        hints.resize(chart_dim, None);
        let spec = ImmersionSpec {
            chart_dim,
            name,
            domain_hint: hints,
            components,
        };
        for c in &spec.components {
            spec.check_vars(c)?;
        }
        Ok(spec)
    }

    fn check_vars(&self, e: &Expr) -> Result<()> {
        match e {
            Expr::Var(v) if *v >= self.chart_dim => Err(Error::Dimension(format!(
                "variable u{} exceeds chart dimension {}",
                v + 1,
                self.chart_dim
            ))),
            Expr::Num(_) | Expr::Var(_) => Ok(()),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) | Expr::Profile(_, a) => {
                self.check_vars(a)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                self.check_vars(a)?;
                self.check_vars(b)
            }
        }
    }

    pub fn chart_dim(&self) -> usize {
        self.chart_dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.chart_dim + 1
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn domain_hint(&self) -> &[Option<(f64, f64)>] {
        &self.domain_hint
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    /// Render to canonical `.sdl` text; `parse(print(spec)) == spec`.
    pub fn print(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n={};", self.chart_dim);
        if let Some(name) = &self.name {
            let _ = writeln!(out, "name = \"{}\";", name);
        }
        for (v, hint) in self.domain_hint.iter().enumerate() {
            if let Some((lo, hi)) = hint {
                let _ = writeln!(out, "u{} in [{}, {}];", v + 1, lo, hi);
            }
        }
        let comps: Vec<String> = self.components.iter().map(print_expr).collect();
        let single = format!("F = ({});", comps.join(", "));
        if single.len() <= 100 {
            let _ = writeln!(out, "{single}");
        } else {
            let _ = writeln!(out, "F = (");
            for (i, c) in comps.iter().enumerate() {
                let sep = if i + 1 < comps.len() { "," } else { "" };
                let _ = writeln!(out, "    {c}{sep}");
            }
            let _ = writeln!(out, ");");
        }
        out
    }

    /// Whether the point lies inside every declared domain box.
    pub fn in_domain(&self, p: &[f64]) -> bool {
        p.len() == self.chart_dim
            && p.iter().zip(&self.domain_hint).all(|(x, h)| match h {
                Some((lo, hi)) => *lo <= *x && *x <= *hi,
                None => true,
            })
    }

    /// Taylor-expand every component about `p` to the given order.
    pub fn eval_jet<T: Real>(&self, p: &[T], order: usize) -> Result<Vec<Jet<T>>> {
        self.eval_jet_with(p, order, &NoProfiles)
    }

    /// Like [`eval_jet`](Self::eval_jet) with a profile table for
    /// `profile_<k>` nodes.
    pub fn eval_jet_with<T: Real>(
        &self,
        p: &[T],
        order: usize,
        profiles: &dyn ProfileSource<T>,
    ) -> Result<Vec<Jet<T>>> {
        if p.len() != self.chart_dim {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, chart dimension is {}",
                p.len(),
                self.chart_dim
            )));
        }
        let space = jet_space(self.chart_dim, order)?;
        let vars: Vec<Jet<T>> = p
            .iter()
            .enumerate()
            .map(|(v, &x)| Jet::variable(&space, v, x))
            .collect::<Result<_>>()?;
        self.components
            .iter()
            .map(|c| eval_expr(c, &vars, &space, profiles))
            .collect()
    }

    /// Pointwise evaluation (order-zero jets).
    pub fn eval_point<T: Real>(&self, p: &[T]) -> Result<Vec<T>> {
        Ok(self.eval_jet(p, 0)?.iter().map(|j| j.value()).collect())
    }
}

pub(crate) fn eval_expr<T: Real>(
    e: &Expr,
    vars: &[Jet<T>],
    space: &std::sync::Arc<crate::jet::JetSpace>,
    profiles: &dyn ProfileSource<T>,
) -> Result<Jet<T>> {
    // attach the offending subexpression to domain errors bubbling out of the
    // jet ring
    let blame = |err: Error| match err {
        Error::Domain { msg, .. } => Error::Domain {
            expr: print_expr(e),
            msg,
        },
        other => other,
    };
    match e {
        Expr::Num(x) => Ok(Jet::constant(space, T::of(*x))),
        Expr::Var(v) => Ok(vars[*v].clone()),
        Expr::Neg(a) => Ok(-eval_expr(a, vars, space, profiles)?),
        Expr::Add(a, b) => {
            eval_expr(a, vars, space, profiles)?.checked_add(&eval_expr(b, vars, space, profiles)?)
        }
        Expr::Sub(a, b) => {
            eval_expr(a, vars, space, profiles)?.checked_sub(&eval_expr(b, vars, space, profiles)?)
        }
        Expr::Mul(a, b) => {
            eval_expr(a, vars, space, profiles)?.checked_mul(&eval_expr(b, vars, space, profiles)?)
        }
        Expr::Div(a, b) => eval_expr(a, vars, space, profiles)?
            .checked_div(&eval_expr(b, vars, space, profiles)?)
            .map_err(blame),
        Expr::Pow(a, r) => {
            let base = eval_expr(a, vars, space, profiles)?;
            if r.den == 1 {
                base.powi(r.num).map_err(blame)
            } else {
                base.powf(T::of(r.as_f64())).map_err(blame)
            }
        }
        Expr::Call(f, a) => {
            let x = eval_expr(a, vars, space, profiles)?;
            match f {
                Func::Exp => Ok(x.exp()),
                Func::Log => x.ln().map_err(blame),
                Func::Sin => Ok(x.sin()),
                Func::Cos => Ok(x.cos()),
                Func::Sqrt => x.sqrt().map_err(blame),
            }
        }
        Expr::Profile(k, a) => {
            let x = eval_expr(a, vars, space, profiles)?;
            let cs = profiles.taylor(*k, x.value(), space.order() + 1).map_err(blame)?;
            Ok(x.compose_univariate(&cs))
        }
    }
}

/// Parse a single expression over the variables `u1..u<chart_dim>`.
pub fn parse_expr(text: &str, chart_dim: usize) -> Result<Expr> {
    let mut p = Parser::new(text)?;
    p.chart_dim = chart_dim;
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return Err(p.err(format!(
            "trailing input after expression: {}",
            p.peek().describe()
        )));
    }
    Ok(e)
}

/// Render an expression with minimal parentheses (canonical form).
pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    pe(e, 0, &mut s);
    s
}

fn binding(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 10,
        Expr::Mul(..) | Expr::Div(..) => 20,
        Expr::Neg(..) => 30,
        Expr::Pow(..) => 40,
        _ => 100,
    }
}

fn pe(e: &Expr, ctx: u8, out: &mut String) {
    let bp = binding(e);
    if bp < ctx {
        out.push('(');
        pe(e, 0, out);
        out.push(')');
        return;
    }
    match e {
        Expr::Num(x) => {
            let _ = write!(out, "{x}");
        }
        Expr::Var(v) => {
            let _ = write!(out, "u{}", v + 1);
        }
        Expr::Neg(a) => {
            out.push('-');
            pe(a, bp + 1, out);
        }
        Expr::Add(a, b) => {
            pe(a, bp, out);
            out.push_str(" + ");
            pe(b, bp + 1, out);
        }
        Expr::Sub(a, b) => {
            pe(a, bp, out);
            out.push_str(" - ");
            pe(b, bp + 1, out);
        }
        Expr::Mul(a, b) => {
            pe(a, bp, out);
            out.push('*');
            pe(b, bp + 1, out);
        }
        Expr::Div(a, b) => {
            pe(a, bp, out);
            out.push('/');
            pe(b, bp + 1, out);
        }
        Expr::Pow(a, r) => {
            pe(a, bp + 1, out);
            if r.den == 1 && r.num >= 0 {
                let _ = write!(out, "^{}", r.num);
            } else if r.den == 1 {
                let _ = write!(out, "^({})", r.num);
            } else {
                let _ = write!(out, "^({}/{})", r.num, r.den);
            }
        }
        Expr::Call(f, a) => {
            let _ = write!(out, "{}(", f.name());
            pe(a, 0, out);
            out.push(')');
        }
        Expr::Profile(k, a) => {
            let _ = write!(out, "profile_{k}(");
            pe(a, 0, out);
            out.push(')');
        }
    }
}

// ---------------------------------------------------------------------------
// lexer / parser
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Str(String),
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Semi,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Eq,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(x) => format!("number {x}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Eof => "end of input".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrack => "`[`".into(),
            Tok::RBrack => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::Eq => "`=`".into(),
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    chart_dim: usize,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize, usize)>> {
    let mut toks = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut it = text.chars().peekable();
    macro_rules! bump {
        () => {{
            let c = it.next().unwrap();
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        }};
    }
    while let Some(&c) = it.peek() {
        let (tl, tc) = (line, col);
        if c.is_whitespace() {
            bump!();
        } else if c == '#' {
            while let Some(&c) = it.peek() {
                if c == '\n' {
                    break;
                }
                bump!();
            }
        } else if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some(&c) = it.peek() {
                if c.is_ascii_digit() || c == '.' {
                    s.push(bump!());
                } else if (c == 'e' || c == 'E') && !s.contains(['e', 'E']) {
                    s.push(bump!());
                    if let Some(&sign) = it.peek() {
                        if sign == '+' || sign == '-' {
                            s.push(bump!());
                        }
                    }
                } else {
                    break;
                }
            }
            let x: f64 = s.parse().map_err(|_| Error::Parse {
                line: tl,
                col: tc,
                msg: format!("malformed number `{s}`"),
            })?;
            toks.push((Tok::Num(x), tl, tc));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&c) = it.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    s.push(bump!());
                } else {
                    break;
                }
            }
            toks.push((Tok::Ident(s), tl, tc));
        } else if c == '"' {
            bump!();
            let mut s = String::new();
            loop {
                match it.peek() {
                    Some(&'"') => {
                        bump!();
                        break;
                    }
                    Some(_) => s.push(bump!()),
                    None => {
                        return Err(Error::Parse {
                            line: tl,
                            col: tc,
                            msg: "unterminated string".into(),
                        })
                    }
                }
            }
            toks.push((Tok::Str(s), tl, tc));
        } else {
            let t = match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '[' => Tok::LBrack,
                ']' => Tok::RBrack,
                ',' => Tok::Comma,
                ';' => Tok::Semi,
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                '^' => Tok::Caret,
                '=' => Tok::Eq,
                other => {
                    return Err(Error::Parse {
                        line: tl,
                        col: tc,
                        msg: format!("unexpected character `{other}`"),
                    })
                }
            };
            bump!();
            toks.push((t, tl, tc));
        }
    }
    toks.push((Tok::Eof, line, col));
    Ok(toks)
}

impl Parser {
    fn new(text: &str) -> Result<Self> {
        Ok(Parser {
            toks: lex(text)?,
            pos: 0,
            chart_dim: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn here(&self) -> (usize, usize) {
        (self.toks[self.pos].1, self.toks[self.pos].2)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        let (line, col) = self.here();
        Error::Parse {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        if *self.peek() == want {
            self.next();
            Ok(())
        } else {
            Err(self.err(format!(
                "expected {}, found {}",
                want.describe(),
                self.peek().describe()
            )))
        }
    }

    fn integer(&mut self) -> Result<i64> {
        match self.peek().clone() {
            Tok::Num(x) if x.fract() == 0.0 && x.abs() < 9e15 => {
                self.next();
                Ok(x as i64)
            }
            other => Err(self.err(format!("expected an integer, found {}", other.describe()))),
        }
    }

    fn signed_number(&mut self) -> Result<f64> {
        let neg = if *self.peek() == Tok::Minus {
            self.next();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Num(x) => {
                self.next();
                Ok(if neg { -x } else { x })
            }
            other => Err(self.err(format!("expected a number, found {}", other.describe()))),
        }
    }

    /// Identifier classified as a variable reference, with bound check.
    fn variable(&self, name: &str) -> Option<Result<usize>> {
        let digits = name.strip_prefix('u')?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let idx: usize = match digits.parse() {
            Ok(i) => i,
            Err(_) => return Some(Err(self.err(format!("variable index in `{name}` too large")))),
        };
        if idx == 0 {
            return Some(Err(self.err("variables are numbered from u1")));
        }
        if idx > self.chart_dim {
            return Some(Err(self.err(format!(
                "variable u{idx} exceeds chart dimension {}",
                self.chart_dim
            ))));
        }
        Some(Ok(idx - 1))
    }

    fn file(&mut self) -> Result<ImmersionSpec> {
        // header: n=<int>;
        match self.peek().clone() {
            Tok::Ident(name) if name == "n" => {
                self.next();
            }
            other => {
                return Err(self.err(format!(
                    "expected header `n=<int>;`, found {}",
                    other.describe()
                )));
            }
        }
        self.expect(Tok::Eq)?;
        let n = self.integer()?;
        if n < 1 || n as usize > crate::jet::MAX_VARS {
            return Err(self.err(format!(
                "chart dimension must be between 1 and {}, got {n}",
                crate::jet::MAX_VARS
            )));
        }
        self.chart_dim = n as usize;
        self.expect(Tok::Semi)?;

        let mut name: Option<String> = None;
        let mut domain: Vec<Option<(f64, f64)>> = vec![None; self.chart_dim];
        let components;
        loop {
            match self.peek().clone() {
                Tok::Ident(id) if id == "name" => {
                    self.next();
                    self.expect(Tok::Eq)?;
                    match self.peek().clone() {
                        Tok::Str(s) => {
                            self.next();
                            name = Some(s);
                        }
                        other => {
                            return Err(self.err(format!(
                                "expected a quoted string, found {}",
                                other.describe()
                            )));
                        }
                    }
                    self.expect(Tok::Semi)?;
                }
                Tok::Ident(id) if id == "F" => {
                    self.next();
                    self.expect(Tok::Eq)?;
                    components = self.component_list()?;
                    if *self.peek() == Tok::Semi {
                        self.next();
                    }
                    break;
                }
                Tok::Ident(id) => {
                    if let Some(v) = self.variable(&id) {
                        let v = v?;
                        self.next();
                        match self.peek().clone() {
                            Tok::Ident(kw) if kw == "in" => {
                                self.next();
                            }
                            other => {
                                return Err(self.err(format!(
                                    "expected `in`, found {}",
                                    other.describe()
                                )));
                            }
                        }
                        self.expect(Tok::LBrack)?;
                        let lo = self.signed_number()?;
                        self.expect(Tok::Comma)?;
                        let hi = self.signed_number()?;
                        if hi <= lo {
                            return Err(self.err(format!("empty domain box [{lo}, {hi}]")));
                        }
                        self.expect(Tok::RBrack)?;
                        self.expect(Tok::Semi)?;
                        domain[v] = Some((lo, hi));
                    } else {
                        return Err(self.err(format!(
                            "expected a domain line, `name = ...`, or `F = (...)`, found identifier `{id}`"
                        )));
                    }
                }
                other => {
                    return Err(self.err(format!(
                        "expected a domain line, `name = ...`, or `F = (...)`, found {}",
                        other.describe()
                    )))
                }
            }
        }
        if *self.peek() != Tok::Eof {
            return Err(self.err(format!(
                "trailing input after immersion: {}",
                self.peek().describe()
            )));
        }
        if components.len() != self.chart_dim + 1 {
            return Err(self.err(format!(
                "immersion into R^{} needs {} components, got {}",
                self.chart_dim + 1,
                self.chart_dim + 1,
                components.len()
            )));
        }
        ImmersionSpec::from_parts(self.chart_dim, name, domain, components)
    }

    fn component_list(&mut self) -> Result<Vec<Expr>> {
        self.expect(Tok::LParen)?;
        let mut comps = vec![self.expr()?];
        while *self.peek() == Tok::Comma {
            self.next();
            if *self.peek() == Tok::RParen {
                break; // trailing comma
            }
            comps.push(self.expr()?);
        }
        self.expect(Tok::RParen)?;
        Ok(comps)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.next();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.next();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.prefix()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.next();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.prefix()?));
                }
                Tok::Slash => {
                    self.next();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.prefix()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn prefix(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Minus {
            self.next();
            Ok(Expr::Neg(Box::new(self.prefix()?)))
        } else {
            self.postfix()
        }
    }

    fn postfix(&mut self) -> Result<Expr> {
        let mut e = self.atom()?;
        while *self.peek() == Tok::Caret {
            self.next();
            e = Expr::Pow(Box::new(e), self.exponent()?);
        }
        Ok(e)
    }

    /// `^` exponents: `2`, `-2`, `(2)`, `(-2)`, `(p/q)`, `(-p/q)`.
    fn exponent(&mut self) -> Result<Rational> {
        match self.peek().clone() {
            Tok::Minus => {
                self.next();
                Ok(Rational::integer(-self.integer()?))
            }
            Tok::Num(_) => Ok(Rational::integer(self.integer()?)),
            Tok::LParen => {
                self.next();
                let neg = if *self.peek() == Tok::Minus {
                    self.next();
                    true
                } else {
                    false
                };
                let p = self.integer()?;
                let den = if *self.peek() == Tok::Slash {
                    self.next();
                    let q = self.integer()?;
                    if q <= 0 {
                        return Err(self.err("exponent denominator must be positive"));
                    }
                    q
                } else {
                    1
                };
                self.expect(Tok::RParen)?;
                Ok(Rational {
                    num: if neg { -p } else { p },
                    den,
                })
            }
            other => Err(self.err(format!(
                "exponent must be an integer or rational literal (p/q), found {}",
                other.describe()
            ))),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Num(x) => {
                self.next();
                Ok(Expr::Num(x))
            }
            Tok::LParen => {
                self.next();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(id) => {
                if let Some(v) = self.variable(&id) {
                    let v = v?;
                    self.next();
                    return Ok(Expr::Var(v));
                }
                let func = match id.as_str() {
                    "exp" => Some(Func::Exp),
                    "log" => Some(Func::Log),
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "sqrt" => Some(Func::Sqrt),
                    _ => None,
                };
                if let Some(f) = func {
                    self.next();
                    self.expect(Tok::LParen)?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen)?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                if let Some(digits) = id.strip_prefix("profile_") {
                    if digits.bytes().all(|b| b.is_ascii_digit()) && !digits.is_empty() {
                        let k: usize = digits.parse().map_err(|_| {
                            self.err(format!("profile index in `{id}` too large"))
                        })?;
                        self.next();
                        self.expect(Tok::LParen)?;
                        let arg = self.expr()?;
                        self.expect(Tok::RParen)?;
                        return Ok(Expr::Profile(k, Box::new(arg)));
                    }
                }
                Err(self.err(format!("unknown identifier `{id}`")))
            }
            other => Err(self.err(format!(
                "expected an expression, found {}",
                other.describe()
            ))),
        }
    }
}
