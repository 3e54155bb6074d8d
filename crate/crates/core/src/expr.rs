//! Expression trees for vector fields and constraint maps.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | base ('^' ['-'] integer)?
//! base   := number | ident | '(' expr ')' | func '(' expr (',' expr)? ')'
//! func   := sin | cos | exp | sqrt | arctan | atan | abs | min | max
//! ```
//!
//! Sums and products are flattened at construction, `a - b` becomes `Sum[a, Neg b]` and
//! `Neg(Const c)` folds to `Const(-c)`. The printer emits text that parses back to the same
//! tree.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::{outward_inflation, ExtendedBound, Interval, IntervalBox, IntervalError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {msg}")]
    Syntax { offset: usize, msg: String },
    #[error("unknown identifier '{name}' at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error(transparent)]
    Interval(#[from] IntervalError),
    #[error("variable index {index} out of range for {len} inputs")]
    VariableOutOfRange { index: usize, len: usize },
    #[error("jacobian entry ({row}, {col}) is unbounded on both sides")]
    UnboundedBothSides { row: usize, col: usize },
    #[error("derivative is unbounded: {0}")]
    UnboundedDerivative(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Sqrt,
    Atan,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryOp {
    Div,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Atan => "arctan",
            UnaryOp::Abs => "abs",
        }
    }
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn neg(e: Expr) -> Expr {
        match e {
            Expr::Const(c) => Expr::Const(-c),
            e => Expr::Unary(UnaryOp::Neg, Box::new(e)),
        }
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Expr {
        if op == UnaryOp::Neg {
            Expr::neg(e)
        } else {
            Expr::Unary(op, Box::new(e))
        }
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn pow(e: Expr, n: i32) -> Expr {
        Expr::Pow(Box::new(e), n)
    }

    /// Flattening n-ary sum; a single term is returned as is.
    pub fn sum(terms: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(terms.len());
        for t in terms {
            match t {
                Expr::Sum(inner) => flat.extend(inner),
                t => flat.push(t),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Expr::Sum(flat)
        }
    }

    /// Flattening n-ary product; a single factor is returned as is.
    pub fn product(factors: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(factors.len());
        for f in factors {
            match f {
                Expr::Product(inner) => flat.extend(inner),
                f => flat.push(f),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Expr::Product(flat)
        }
    }

    /// Largest variable index referenced plus one (0 for constant trees).
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.arity(),
            Expr::Binary(_, a, b) => a.arity().max(b.arity()),
            Expr::Sum(v) | Expr::Product(v) => v.iter().map(Expr::arity).max().unwrap_or(0),
        }
    }

    pub fn eval_point(&self, z: &[f64]) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => *z.get(*i).ok_or(ExprError::VariableOutOfRange {
                index: *i,
                len: z.len(),
            })?,
            Expr::Unary(op, a) => {
                let x = a.eval_point(z)?;
                match op {
                    UnaryOp::Neg => -x,
                    UnaryOp::Sin => x.sin(),
                    UnaryOp::Cos => x.cos(),
                    UnaryOp::Exp => x.exp(),
                    UnaryOp::Sqrt => {
                        if x < 0.0 {
                            return Err(ExprError::Domain(format!("sqrt of negative value {x}")));
                        }
                        x.sqrt()
                    }
                    UnaryOp::Atan => x.atan(),
                    UnaryOp::Abs => x.abs(),
                }
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval_point(z)?;
                let y = b.eval_point(z)?;
                match op {
                    BinaryOp::Div => {
                        if y == 0.0 {
                            return Err(ExprError::Domain("division by zero".into()));
                        }
                        x / y
                    }
                    BinaryOp::Min => x.min(y),
                    BinaryOp::Max => x.max(y),
                }
            }
            Expr::Pow(a, n) => {
                let x = a.eval_point(z)?;
                if *n < 0 && x == 0.0 {
                    return Err(ExprError::Domain("negative power of zero".into()));
                }
                x.powi(*n)
            }
            Expr::Sum(v) => {
                let mut s = 0.0;
                for t in v {
                    s += t.eval_point(z)?;
                }
                s
            }
            Expr::Product(v) => {
                let mut p = 1.0;
                for t in v {
                    p *= t.eval_point(z)?;
                }
                p
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::Overflow(format!("non-finite value {v}")))
        }
    }

    /// Natural interval extension over `b`.
    pub fn eval_interval(&self, b: &IntervalBox) -> Result<Interval, ExprError> {
        self.eval_dims(b.dims())
    }

    pub fn eval_dims(&self, z: &[Interval]) -> Result<Interval, ExprError> {
        let r = match self {
            Expr::Const(c) => Interval::point(*c),
            Expr::Var(i) => *z.get(*i).ok_or(ExprError::VariableOutOfRange {
                index: *i,
                len: z.len(),
            })?,
            Expr::Unary(op, a) => {
                let x = a.eval_dims(z)?;
                match op {
                    UnaryOp::Neg => -x,
                    UnaryOp::Sin => x.sin(),
                    UnaryOp::Cos => x.cos(),
                    UnaryOp::Exp => x.exp(),
                    UnaryOp::Sqrt => x.sqrt()?,
                    UnaryOp::Atan => x.atan(),
                    UnaryOp::Abs => x.abs(),
                }
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval_dims(z)?;
                let y = b.eval_dims(z)?;
                match op {
                    BinaryOp::Div => x.div(y)?,
                    BinaryOp::Min => x.min(y),
                    BinaryOp::Max => x.max(y),
                }
            }
            Expr::Pow(a, n) => a.eval_dims(z)?.powi(*n)?,
            Expr::Sum(v) => {
                let mut s = Interval::point(0.0);
                for t in v {
                    s = s + t.eval_dims(z)?;
                }
                s
            }
            Expr::Product(v) => {
                let mut it = v.iter();
                let mut p = match it.next() {
                    Some(t) => t.eval_dims(z)?,
                    None => Interval::point(1.0),
                };
                for t in it {
                    p = p * t.eval_dims(z)?;
                }
                p
            }
        };
        if r.is_finite() {
            Ok(r)
        } else {
            Err(ExprError::Overflow(format!("non-finite enclosure {r:?}")))
        }
    }

    /// Value enclosure and Clarke-gradient enclosure over `z`.
    fn eval_grad(&self, z: &[Interval]) -> Result<(Interval, Vec<Ext>), ExprError> {
        let n = z.len();
        let out = match self {
            Expr::Const(c) => (Interval::point(*c), vec![Ext::ZERO; n]),
            Expr::Var(i) => {
                let v = *z.get(*i).ok_or(ExprError::VariableOutOfRange {
                    index: *i,
                    len: n,
                })?;
                let mut g = vec![Ext::ZERO; n];
                g[*i] = Ext::ONE;
                (v, g)
            }
            Expr::Unary(op, a) => {
                let (x, dx) = a.eval_grad(z)?;
                let (v, scale) = match op {
                    UnaryOp::Neg => (-x, Ext::point(-1.0)),
                    UnaryOp::Sin => (x.sin(), Ext::from(x.cos())),
                    UnaryOp::Cos => (x.cos(), Ext::from(-x.sin())),
                    UnaryOp::Exp => {
                        let e = x.exp();
                        (e, Ext::from(e))
                    }
                    UnaryOp::Sqrt => {
                        let s = x.sqrt()?;
                        if s.hi() == 0.0 {
                            return Err(ExprError::UnboundedDerivative(
                                "sqrt evaluated only at 0".into(),
                            ));
                        }
                        let scale = if s.lo() == 0.0 {
                            Ext::new(0.5 / s.hi(), f64::INFINITY)
                        } else {
                            Ext::from(Interval::point(0.5).div(s)?)
                        };
                        (s, scale)
                    }
                    UnaryOp::Atan => {
                        let d = Interval::point(1.0).div(Interval::point(1.0) + x.sqr())?;
                        (x.atan(), Ext::from(d))
                    }
                    UnaryOp::Abs => {
                        let s = if x.lo() > 0.0 {
                            Ext::ONE
                        } else if x.hi() < 0.0 {
                            Ext::point(-1.0)
                        } else {
                            Ext::new(-1.0, 1.0)
                        };
                        (x.abs(), s)
                    }
                };
                (v, dx.iter().map(|d| d.mul(scale)).collect())
            }
            Expr::Binary(op, a, b) => {
                let (x, dx) = a.eval_grad(z)?;
                let (y, dy) = b.eval_grad(z)?;
                match op {
                    BinaryOp::Div => {
                        let q = x.div(y)?;
                        let r = Interval::point(1.0).div(y)?;
                        let qr = Ext::from(q * r);
                        let r = Ext::from(r);
                        let g = dx
                            .iter()
                            .zip(&dy)
                            .map(|(da, db)| da.mul(r).add(db.mul(qr).neg()))
                            .collect();
                        (q, g)
                    }
                    BinaryOp::Min | BinaryOp::Max => {
                        let v = if *op == BinaryOp::Min { x.min(y) } else { x.max(y) };
                        // branch that is strictly active everywhere on the box, if any
                        let pick_a = if *op == BinaryOp::Min {
                            x.hi() < y.lo()
                        } else {
                            x.lo() > y.hi()
                        };
                        let pick_b = if *op == BinaryOp::Min {
                            y.hi() < x.lo()
                        } else {
                            y.lo() > x.hi()
                        };
                        let g = if pick_a {
                            dx
                        } else if pick_b {
                            dy
                        } else {
                            dx.iter().zip(&dy).map(|(p, q)| p.hull(*q)).collect()
                        };
                        (v, g)
                    }
                }
            }
            Expr::Pow(a, k) => {
                let (x, dx) = a.eval_grad(z)?;
                let v = x.powi(*k)?;
                let scale = Ext::from(x.powi(*k - 1)? * (*k as f64));
                (v, dx.iter().map(|d| d.mul(scale)).collect())
            }
            Expr::Sum(terms) => {
                let mut v = Interval::point(0.0);
                let mut g = vec![Ext::ZERO; n];
                for t in terms {
                    let (tv, tg) = t.eval_grad(z)?;
                    v = v + tv;
                    for (acc, d) in g.iter_mut().zip(tg) {
                        *acc = acc.add(d);
                    }
                }
                (v, g)
            }
            Expr::Product(factors) => {
                let parts = factors
                    .iter()
                    .map(|f| f.eval_grad(z))
                    .collect::<Result<Vec<_>, _>>()?;
                let vals: Vec<Interval> = parts.iter().map(|p| p.0).collect();
                let v = vals
                    .iter()
                    .copied()
                    .reduce(|a, b| a * b)
                    .unwrap_or(Interval::point(1.0));
                let mut g = vec![Ext::ZERO; n];
                for (k, (_, dk)) in parts.iter().enumerate() {
                    let others = vals
                        .iter()
                        .enumerate()
                        .filter(|(l, _)| *l != k)
                        .map(|(_, v)| *v)
                        .reduce(|a, b| a * b)
                        .unwrap_or(Interval::point(1.0));
                    let others = Ext::from(others);
                    for (acc, d) in g.iter_mut().zip(dk) {
                        *acc = acc.add(d.mul(others));
                    }
                }
                (v, g)
            }
        };
        if !out.0.is_finite() {
            return Err(ExprError::Overflow(format!("non-finite enclosure {:?}", out.0)));
        }
        Ok(out)
    }

    /// Prints the expression with the given variable names.
    pub fn to_text(&self, names: &[String]) -> String {
        let mut s = String::new();
        self.write_expr(&mut s, names);
        s
    }

    fn write_expr(&self, s: &mut String, names: &[String]) {
        match self {
            Expr::Sum(terms) => {
                for (k, t) in terms.iter().enumerate() {
                    if k == 0 {
                        t.write_term(s, names);
                        continue;
                    }
                    match t {
                        Expr::Unary(UnaryOp::Neg, inner) => {
                            s.push_str(" - ");
                            inner.write_term(s, names);
                        }
                        Expr::Const(c) if c.is_sign_negative() => {
                            let _ = write!(s, " - {:?}", -c);
                        }
                        t => {
                            s.push_str(" + ");
                            t.write_term(s, names);
                        }
                    }
                }
            }
            e => e.write_term(s, names),
        }
    }

    fn write_term(&self, s: &mut String, names: &[String]) {
        match self {
            Expr::Sum(_) => self.write_paren(s, names),
            Expr::Product(fs) => {
                for (k, f) in fs.iter().enumerate() {
                    if k > 0 {
                        s.push('*');
                    }
                    f.write_factor(s, names);
                }
            }
            Expr::Binary(BinaryOp::Div, a, b) => {
                a.write_term(s, names);
                s.push_str(" / ");
                b.write_factor(s, names);
            }
            Expr::Unary(UnaryOp::Neg, a) => {
                s.push('-');
                a.write_factor(s, names);
            }
            Expr::Const(c) if c.is_sign_negative() => {
                let _ = write!(s, "{c:?}");
            }
            e => e.write_factor(s, names),
        }
    }

    fn write_factor(&self, s: &mut String, names: &[String]) {
        match self {
            Expr::Pow(a, n) => {
                a.write_base(s, names);
                let _ = write!(s, "^{n}");
            }
            e => e.write_base(s, names),
        }
    }

    fn write_base(&self, s: &mut String, names: &[String]) {
        match self {
            Expr::Const(c) if !c.is_sign_negative() => {
                let _ = write!(s, "{c:?}");
            }
            Expr::Var(i) => match names.get(*i) {
                Some(n) => s.push_str(n),
                None => {
                    let _ = write!(s, "z{i}");
                }
            },
            Expr::Unary(op, a) if *op != UnaryOp::Neg => {
                s.push_str(op.name());
                s.push('(');
                a.write_expr(s, names);
                s.push(')');
            }
            Expr::Binary(op @ (BinaryOp::Min | BinaryOp::Max), a, b) => {
                s.push_str(if *op == BinaryOp::Min { "min(" } else { "max(" });
                a.write_expr(s, names);
                s.push_str(", ");
                b.write_expr(s, names);
                s.push(')');
            }
            e => e.write_paren(s, names),
        }
    }

    fn write_paren(&self, s: &mut String, names: &[String]) {
        s.push('(');
        self.write_expr(s, names);
        s.push(')');
    }
}

/// Extended-real interval used for derivative enclosures; `lo < +inf`, `hi > -inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Ext {
    lo: f64,
    hi: f64,
}

fn mul0(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

impl Ext {
    const ZERO: Ext = Ext { lo: 0.0, hi: 0.0 };
    const ONE: Ext = Ext { lo: 1.0, hi: 1.0 };

    fn new(lo: f64, hi: f64) -> Ext {
        Ext { lo, hi }.inflated()
    }

    fn point(x: f64) -> Ext {
        Ext { lo: x, hi: x }
    }

    fn inflated(self) -> Ext {
        if outward_inflation() {
            let w = |x: f64, up: bool| {
                if !x.is_finite() {
                    return x;
                }
                let mut v = x;
                for _ in 0..crate::interval::INFLATE_ULPS {
                    v = if up { v.next_up() } else { v.next_down() };
                }
                v
            };
            Ext {
                lo: w(self.lo, false),
                hi: w(self.hi, true),
            }
        } else {
            self
        }
    }

    fn add(self, o: Ext) -> Ext {
        Ext::new(self.lo + o.lo, self.hi + o.hi)
    }

    fn neg(self) -> Ext {
        Ext {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    fn mul(self, o: Ext) -> Ext {
        let p = [
            mul0(self.lo, o.lo),
            mul0(self.lo, o.hi),
            mul0(self.hi, o.lo),
            mul0(self.hi, o.hi),
        ];
        Ext::new(
            p.iter().copied().fold(f64::INFINITY, f64::min),
            p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }

    fn hull(self, o: Ext) -> Ext {
        Ext {
            lo: self.lo.min(o.lo),
            hi: self.hi.max(o.hi),
        }
    }
}

impl From<Interval> for Ext {
    fn from(x: Interval) -> Ext {
        Ext {
            lo: x.lo(),
            hi: x.hi(),
        }
    }
}

/// Bounds on one Clarke partial derivative; at least one side is finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClarkeInterval {
    pub lo: ExtendedBound,
    pub hi: ExtendedBound,
}

impl ClarkeInterval {
    pub fn new(lo: ExtendedBound, hi: ExtendedBound) -> Result<Self, ExprError> {
        if lo > hi
            || (!lo.is_finite() && !hi.is_finite())
            || lo == ExtendedBound::PosInf
            || hi == ExtendedBound::NegInf
        {
            return Err(ExprError::Domain(format!(
                "invalid derivative bounds [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn finite(lo: f64, hi: f64) -> Self {
        Self::new(ExtendedBound::Finite(lo), ExtendedBound::Finite(hi))
            .expect("finite ordered derivative bounds")
    }

    pub fn lo_f64(&self) -> f64 {
        self.lo.to_f64()
    }

    pub fn hi_f64(&self) -> f64 {
        self.hi.to_f64()
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    /// Both bounds as a finite interval, if available.
    pub fn as_interval(&self) -> Option<Interval> {
        Interval::new(self.lo.finite()?, self.hi.finite()?).ok()
    }

    /// Sign-stable: the partial keeps one sign across the box.
    pub fn is_sign_stable(&self) -> bool {
        self.lo_f64() >= 0.0 || self.hi_f64() <= 0.0
    }
}

/// Row-major matrix of Clarke partial-derivative bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianBounds {
    rows: usize,
    cols: usize,
    entries: Vec<ClarkeInterval>,
}

impl JacobianBounds {
    pub fn from_entries(
        rows: usize,
        cols: usize,
        entries: Vec<ClarkeInterval>,
    ) -> Result<Self, ExprError> {
        if entries.len() != rows * cols {
            return Err(ExprError::Domain(format!(
                "{} jacobian entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> ClarkeInterval {
        self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: ClarkeInterval) {
        self.entries[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[ClarkeInterval] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }
}

/// Clarke Jacobian enclosure of `exprs` over `b`, one row per expression.
pub fn clarke_jacobian_bounds(exprs: &[Expr], b: &IntervalBox) -> Result<JacobianBounds, ExprError> {
    let cols = b.len();
    let mut entries = Vec::with_capacity(exprs.len() * cols);
    for (row, e) in exprs.iter().enumerate() {
        let (_, g) = e.eval_grad(b.dims())?;
        for (col, d) in g.into_iter().enumerate() {
            if d.lo.is_nan() || d.hi.is_nan() || (d.lo == f64::NEG_INFINITY && d.hi == f64::INFINITY)
            {
                return Err(ExprError::UnboundedBothSides { row, col });
            }
            entries.push(ClarkeInterval {
                lo: ExtendedBound::from_f64(d.lo),
                hi: ExtendedBound::from_f64(d.hi),
            });
        }
    }
    Ok(JacobianBounds {
        rows: exprs.len(),
        cols,
        entries,
    })
}

/// Free variable names of `texts`, sorted naturally (`x2` before `x10`).
///
/// Stops at the first syntax error; the subsequent parse reports it.
pub fn infer_variables(texts: &[&str]) -> Vec<String> {
    let mut found: Vec<String> = Vec::new();
    for t in texts {
        loop {
            let refs: Vec<&str> = found.iter().map(String::as_str).collect();
            match parse_expr(t, &refs) {
                Err(ExprError::UnknownIdentifier { name, .. }) if !found.contains(&name) => found.push(name),
                _ => break,
            }
        }
    }
    found.sort_by(|a, b| {
        let key = |s: &str| {
            let split = s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
            (s[..split].to_string(), s[split..].parse::<u64>().unwrap_or(0), s.len())
        };
        key(a).cmp(&key(b))
    });
    found
}

/// Parses `text` against the declared variable names.
pub fn parse_expr(text: &str, variables: &[&str]) -> Result<Expr, ExprError> {
    let mut p = Parser {
        src: text.as_bytes(),
        text,
        pos: 0,
        vars: variables,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err(p.pos, "unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn err(&self, offset: usize, msg: &str) -> ExprError {
        ExprError::Syntax {
            offset,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(self.pos, &format!("expected '{}'", c as char)))
        }
    }

    /// Parses an operand following the operator at `op_at`.
    fn operand<T>(
        &mut self,
        op_at: usize,
        f: impl FnOnce(&mut Self) -> Result<T, ExprError>,
    ) -> Result<T, ExprError> {
        match self.peek() {
            None => Err(self.err(op_at, "missing operand")),
            Some(c) if b"+*/^),".contains(&c) => Err(self.err(op_at, "missing operand")),
            _ => f(self),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut terms = vec![self.term()?];
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            let at = self.pos;
            self.pos += 1;
            let t = self.operand(at, Self::term)?;
            terms.push(if c == b'-' { Expr::neg(t) } else { t });
        }
        Ok(Expr::sum(terms))
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut factors = vec![self.factor()?];
        loop {
            match self.peek() {
                Some(b'*') => {
                    let at = self.pos;
                    self.pos += 1;
                    factors.push(self.operand(at, Self::factor)?);
                }
                Some(b'/') => {
                    let at = self.pos;
                    self.pos += 1;
                    let f = self.operand(at, Self::factor)?;
                    let left = Expr::product(std::mem::take(&mut factors));
                    factors.push(Expr::binary(BinaryOp::Div, left, f));
                }
                _ => break,
            }
        }
        Ok(Expr::product(factors))
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(b'-') {
            let at = self.pos;
            self.pos += 1;
            let f = self.operand(at, Self::factor)?;
            return Ok(Expr::neg(f));
        }
        let b = self.base()?;
        if self.peek() == Some(b'^') {
            let at = self.pos;
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            if self.src.get(self.pos) == Some(&b'-') {
                self.pos += 1;
            }
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let n: i32 = self.text[start..self.pos]
                .parse()
                .map_err(|_| self.err(at, "expected integer exponent"))?;
            return Ok(Expr::pow(b, n));
        }
        Ok(b)
    }

    fn base(&mut self) -> Result<Expr, ExprError> {
        let start = match self.peek() {
            None => return Err(self.err(self.pos, "unexpected end of input")),
            Some(_) => self.pos,
        };
        let c = self.src[start];
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            self.expect(b')')?;
            return Ok(e);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < self.src.len()
                && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let name = &self.text[start..self.pos];
            if self.peek() == Some(b'(') {
                return self.call(name, start);
            }
            return match self.vars.iter().position(|v| *v == name) {
                Some(i) => Ok(Expr::Var(i)),
                None => Err(ExprError::UnknownIdentifier {
                    name: name.to_string(),
                    offset: start,
                }),
            };
        }
        Err(self.err(start, &format!("unexpected character '{}'", c as char)))
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
        };
        digits(&mut self.pos);
        if self.pos < s.len() && s[self.pos] == b'.' {
            self.pos += 1;
            digits(&mut self.pos);
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let mut p = self.pos + 1;
            if p < s.len() && (s[p] == b'+' || s[p] == b'-') {
                p += 1;
            }
            if p < s.len() && s[p].is_ascii_digit() {
                digits(&mut p);
                self.pos = p;
            }
        }
        self.text[start..self.pos]
            .parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| self.err(start, "malformed number"))
    }

    fn call(&mut self, name: &str, at: usize) -> Result<Expr, ExprError> {
        let unary = match name {
            "sin" => Some(UnaryOp::Sin),
            "cos" => Some(UnaryOp::Cos),
            "exp" => Some(UnaryOp::Exp),
            "sqrt" => Some(UnaryOp::Sqrt),
            "arctan" | "atan" => Some(UnaryOp::Atan),
            "abs" => Some(UnaryOp::Abs),
            _ => None,
        };
        let binary = match name {
            "min" => Some(BinaryOp::Min),
            "max" => Some(BinaryOp::Max),
            _ => None,
        };
        if unary.is_none() && binary.is_none() {
            return Err(ExprError::UnknownIdentifier {
                name: name.to_string(),
                offset: at,
            });
        }
        self.expect(b'(')?;
        let a = self.expr()?;
        let e = if let Some(op) = unary {
            Expr::unary(op, a)
        } else {
            self.expect(b',')?;
            let b = self.expr()?;
            Expr::binary(binary.unwrap(), a, b)
        };
        self.expect(b')')?;
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variables_are_inferred_in_natural_order() {
        assert_eq!(infer_variables(&["x10 + sin(x2)*y", "x1^2"]), ["x1", "x2", "x10", "y"]);
        assert!(infer_variables(&["2 + 3*4"]).is_empty());
    }

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    const EXAMPLE3: &str = crate::model::fixtures::EXAMPLE3.expr;

    #[test]
    fn parse_linear() {
        let e = parse_expr("x1 + 0.1*x2", &["x1", "x2"]).unwrap();
        assert_eq!(
            e,
            Expr::Sum(vec![
                Expr::Var(0),
                Expr::Product(vec![Expr::Const(0.1), Expr::Var(1)])
            ])
        );
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            parse_expr("x1 +* x2", &["x1", "x2"]),
            Err(ExprError::Syntax {
                offset: 3,
                msg: "missing operand".into()
            })
        );
        assert!(matches!(
            parse_expr("x1 + y", &["x1"]),
            Err(ExprError::UnknownIdentifier { ref name, offset: 5 }) if name == "y"
        ));
        assert!(parse_expr("(x", &["x"]).is_err());
        assert!(parse_expr("x)", &["x"]).is_err());
        assert!(parse_expr("foo(x)", &["x"]).is_err());
    }

    #[test]
    fn subtraction_and_division_shapes() {
        let e = parse_expr("a - 2*b/c", &["a", "b", "c"]).unwrap();
        assert_eq!(
            e,
            Expr::Sum(vec![
                Expr::Var(0),
                Expr::neg(Expr::binary(
                    BinaryOp::Div,
                    Expr::Product(vec![Expr::Const(2.0), Expr::Var(1)]),
                    Expr::Var(2)
                ))
            ])
        );
        assert_eq!(parse_expr("-3", &[]).unwrap(), Expr::Const(-3.0));
        assert_eq!(
            parse_expr("x*arctan(x^2 - 2*x + 5)", &["x"])
                .unwrap()
                .to_text(&["x".into()]),
            "x*arctan(x^2 - 2.0*x + 5.0)"
        );
    }

    #[test]
    fn point_evaluation() {
        let e = parse_expr("x^3 - 0.1*x", &["x"]).unwrap();
        assert!((e.eval_point(&[3.0]).unwrap() - 26.7).abs() < 1e-12);
        assert!((e.eval_point(&[-1.0]).unwrap() + 0.9).abs() < 1e-12);
        assert!(parse_expr("sqrt(x)", &["x"]).unwrap().eval_point(&[-1.0]).is_err());
        assert!(parse_expr("1/x", &["x"]).unwrap().eval_point(&[0.0]).is_err());
    }

    #[test]
    fn natural_example3() {
        let e = parse_expr(EXAMPLE3, &["x1", "x2", "x3"]).unwrap();
        let b = IntervalBox::from_bounds(&[(-2.0, 2.0); 3]).unwrap();
        assert_eq!(e.eval_interval(&b).unwrap(), iv(-80.0, 80.0));
    }

    #[test]
    fn natural_linear_is_exact() {
        let e = parse_expr("x1 + 0.1*x2", &["x1", "x2"]).unwrap();
        let b = IntervalBox::from_bounds(&[(1.15, 1.4), (2.05, 2.3)]).unwrap();
        let r = e.eval_interval(&b).unwrap();
        assert!((r.lo() - 1.355).abs() < 1e-12 && (r.hi() - 1.63).abs() < 1e-12);
    }

    #[test]
    fn natural_example1_contains_range() {
        let e = parse_expr("x*arctan(x^2 - 2*x + 5)", &["x"]).unwrap();
        let b = IntervalBox::from_bounds(&[(1.0, 3.0)]).unwrap();
        let r = e.eval_interval(&b).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..=20_000 {
            let x = 1.0 + 2.0 * k as f64 / 20_000.0;
            let v = x * (x * x - 2.0 * x + 5.0).atan();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        assert!(r.lo() <= lo && hi <= r.hi());
        assert!((lo - 1.3258).abs() < 1e-4 && (hi - 4.3393).abs() < 1e-4);
    }

    #[test]
    fn jacobian_cubic() {
        let e = parse_expr("x^3 - 0.1*x", &["x"]).unwrap();
        let b = IntervalBox::from_bounds(&[(-1.0, 3.0)]).unwrap();
        let j = clarke_jacobian_bounds(&[e], &b).unwrap();
        let d = j.get(0, 0).as_interval().unwrap();
        assert!((d.lo() + 0.1).abs() < 1e-12 && (d.hi() - 26.9).abs() < 1e-12);
    }

    #[test]
    fn jacobian_abs_kink() {
        let e = parse_expr("abs(x)", &["x"]).unwrap();
        let b = IntervalBox::from_bounds(&[(-1.0, 2.0)]).unwrap();
        let j = clarke_jacobian_bounds(&[e], &b).unwrap();
        assert_eq!(j.get(0, 0), ClarkeInterval::finite(-1.0, 1.0));
    }

    #[test]
    fn jacobian_example3_first_partial() {
        let e = parse_expr(EXAMPLE3, &["x1", "x2", "x3"]).unwrap();
        let b = IntervalBox::from_bounds(&[(-2.0, 2.0); 3]).unwrap();
        let j = clarke_jacobian_bounds(&[e], &b).unwrap();
        // oracle: x2x3 + 2x1x2 + x3^2 + 2x3x1 + x2^2 + 3x1^2 term by term
        let lo = -4.0 - 8.0 + 0.0 - 8.0 + 0.0 + 0.0;
        let hi = 4.0 + 8.0 + 4.0 + 8.0 + 4.0 + 12.0;
        assert_eq!((lo, hi), (-20.0, 40.0));
        for col in 0..3 {
            assert_eq!(j.get(0, col), ClarkeInterval::finite(lo, hi));
        }
    }

    #[test]
    fn jacobian_min_max_and_sqrt() {
        let vars = ["x", "y"];
        let b = IntervalBox::from_bounds(&[(0.0, 1.0), (2.0, 3.0)]).unwrap();
        let e = parse_expr("min(x, y)", &vars).unwrap();
        let j = clarke_jacobian_bounds(&[e], &b).unwrap();
        assert_eq!(j.get(0, 0), ClarkeInterval::finite(1.0, 1.0));
        assert_eq!(j.get(0, 1), ClarkeInterval::finite(0.0, 0.0));
        let b2 = IntervalBox::from_bounds(&[(0.0, 3.0), (2.0, 3.0)]).unwrap();
        let e = parse_expr("max(x, y)", &vars).unwrap();
        let j = clarke_jacobian_bounds(&[e], &b2).unwrap();
        assert_eq!(j.get(0, 0), ClarkeInterval::finite(0.0, 1.0));
        let e = parse_expr("sqrt(x)", &vars).unwrap();
        let j = clarke_jacobian_bounds(&[e], &b).unwrap();
        assert_eq!(j.get(0, 0).lo, ExtendedBound::Finite(0.5));
        assert_eq!(j.get(0, 0).hi, ExtendedBound::PosInf);
        let e = parse_expr("sqrt(x) - sqrt(1 - x)", &vars).unwrap();
        assert!(clarke_jacobian_bounds(&[e.clone()], &b).unwrap().get(0, 0).lo_f64() > 0.0);
        let e = parse_expr("sqrt(x)*cos(10*x)", &vars).unwrap();
        assert!(matches!(
            clarke_jacobian_bounds(&[e], &b),
            Err(ExprError::UnboundedBothSides { row: 0, col: 0 })
        ));
    }

    #[test]
    fn print_roundtrip_examples() {
        let names: Vec<String> = ["x1", "x2", "x3"].iter().map(|s| s.to_string()).collect();
        let vars = ["x1", "x2", "x3"];
        for text in [
            EXAMPLE3,
            "-x1^2 - (x2 + x3)",
            "x1 / x2 / x3 * (x1 / x2)",
            "-(-2.5) + (-2)^2 - -x1 * 1e-7",
            "min(x1, -x2) + max(abs(x3), sqrt(x1^2))",
            "x1*x2 - 3 / (x2 - 1)^-1",
        ] {
            let e = parse_expr(text, &vars).unwrap();
            let printed = e.to_text(&names);
            assert_eq!(parse_expr(&printed, &vars).unwrap(), e, "{text} -> {printed}");
        }
    }
}
