//! Model files, bundled benchmarks and tube serialization.
//!
//! ```text
//! system "<name>" {
//!   time: discrete(dt=0.1);            # or continuous(dt=0.05)
//!   state: x1, x2;
//!   disturbance: w1, w2 in [[lo, hi], [lo, hi]];
//!   dynamics { x1' = <expr>; x2' = <expr>; }
//!   init: [[lo, hi], [lo, hi]];
//!   observe { y1 = <expr over states>; }
//!   noisematrix: [[1, 0], [0, 1]];     # optional, identity by default
//!   noise: [[lo, hi], [lo, hi]];
//!   constraint { <expr over states> in [lo, hi]; }
//!   jac_override { f1/dx2 in [lo, inf]; }
//! }
//! ```
//!
//! `#` starts a comment that runs to the end of the line. Only `time`, `state`, `dynamics`
//! and `init` are mandatory.

use std::fmt::Write as _;
use std::path::Path;

use crate::decomp::TimeSemantics;
use crate::error::{Error, Result};
use crate::expr::{parse_expr, ClarkeInterval, Expr, ExprError};
use crate::inclusion::{JacOverride, VectorFunction};
use crate::interval::{ExtendedBound, Interval, IntervalBox};
use crate::reach::ReachTube;

/// Scalar range-enclosure fixtures.
pub mod fixtures {
    #[derive(Debug, Clone, Copy)]
    pub struct RangeFixture {
        pub name: &'static str,
        pub expr: &'static str,
        pub vars: &'static [&'static str],
        pub domain: &'static [(f64, f64)],
    }

    pub const EXAMPLE1: RangeFixture = RangeFixture {
        name: "arctan-composition",
        expr: "x*arctan(x^2 - 2*x + 5)",
        vars: &["x"],
        domain: &[(1.0, 3.0)],
    };

    pub const EXAMPLE2: RangeFixture = RangeFixture {
        name: "almost-sign-stable-cubic",
        expr: "x^3 - 0.1*x",
        vars: &["x"],
        domain: &[(-1.0, 3.0)],
    };

    pub const EXAMPLE3: RangeFixture = RangeFixture {
        name: "ten-term-cubic",
        expr: "x1*x2*x3 + x1^2*x2 + x2^2*x3 + x3^2*x1 + x1^2*x3 + x3^2*x2 + x2^2*x1 + x1^3 + x2^3 + x3^3",
        vars: &["x1", "x2", "x3"],
        domain: &[(-2.0, 2.0), (-2.0, 2.0), (-2.0, 2.0)],
    };

    pub const ALL: [RangeFixture; 3] = [EXAMPLE1, EXAMPLE2, EXAMPLE3];
}

const BUNDLED: [(&str, &str); 6] = [
    ("vanderpol", include_str!("../models/vanderpol.mm")),
    ("scott_example", include_str!("../models/scott_example.mm")),
    ("scott_redundant", include_str!("../models/scott_redundant.mm")),
    ("jaulin_2_11", include_str!("../models/jaulin_2_11.mm")),
    ("ct_abate", include_str!("../models/ct_abate.mm")),
    ("unicycle", include_str!("../models/unicycle.mm")),
];

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

/// Source text of a bundled model (name with or without the `.mm` suffix).
pub fn bundled_source(name: &str) -> Option<&'static str> {
    let n = name.strip_suffix(".mm").unwrap_or(name);
    BUNDLED.iter().find(|(k, _)| *k == n).map(|(_, s)| *s)
}

pub fn bundled(name: &str) -> Result<SystemModel> {
    let src = bundled_source(name)
        .ok_or_else(|| Error::Validation(format!("no bundled model named '{name}'")))?;
    SystemModel::parse(src)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub names: Vec<String>,
    /// Output maps over the state variables.
    pub exprs: Vec<Expr>,
    /// `n_y × n_v` noise matrix.
    pub v: Vec<Vec<f64>>,
    pub noise: IntervalBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub expr: Expr,
    pub bounds: Interval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub name: String,
    pub semantics: TimeSemantics,
    pub dt: f64,
    pub state: Vec<String>,
    pub disturbance: Vec<String>,
    /// One expression per state over `[x; w]`.
    pub dynamics: Vec<Expr>,
    pub disturbance_box: IntervalBox,
    pub init: IntervalBox,
    pub observation: Option<Observation>,
    pub constraints: Vec<Constraint>,
    pub jac_overrides: Vec<JacOverride>,
}

impl SystemModel {
    pub fn n_x(&self) -> usize {
        self.state.len()
    }

    pub fn n_w(&self) -> usize {
        self.disturbance.len()
    }

    /// State names followed by disturbance names.
    pub fn var_names(&self) -> Vec<String> {
        self.state.iter().chain(&self.disturbance).cloned().collect()
    }

    pub fn dynamics_fn(&self) -> Result<VectorFunction> {
        VectorFunction::new(self.dynamics.clone(), self.n_x() + self.n_w())?
            .with_overrides(self.jac_overrides.clone())
    }

    pub fn observation_fn(&self) -> Result<Option<VectorFunction>> {
        self.observation
            .as_ref()
            .map(|o| VectorFunction::new(o.exprs.clone(), self.n_x()))
            .transpose()
    }

    /// Stacked constraint map with its lower and upper bounds.
    pub fn constraint_fn(&self) -> Result<Option<(VectorFunction, Vec<f64>, Vec<f64>)>> {
        if self.constraints.is_empty() {
            return Ok(None);
        }
        let f = VectorFunction::new(
            self.constraints.iter().map(|c| c.expr.clone()).collect(),
            self.n_x(),
        )?;
        Ok(Some((
            f,
            self.constraints.iter().map(|c| c.bounds.lo()).collect(),
            self.constraints.iter().map(|c| c.bounds.hi()).collect(),
        )))
    }

    /// Checks dimensions and variable references.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.state.is_empty() {
            return bad("model declares no states".into());
        }
        let mut names = self.var_names();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate variable name".into());
        }
        if self.dynamics.len() != self.n_x() {
            return bad(format!(
                "{} states but {} dynamics equations",
                self.n_x(),
                self.dynamics.len()
            ));
        }
        if self.init.len() != self.n_x() {
            return bad(format!("init box has {} dims, expected {}", self.init.len(), self.n_x()));
        }
        if self.disturbance_box.len() != self.n_w() {
            return bad(format!(
                "disturbance box has {} dims, expected {}",
                self.disturbance_box.len(),
                self.n_w()
            ));
        }
        self.dynamics_fn()?;
        if let Some(o) = &self.observation {
            if o.exprs.iter().any(|e| e.arity() > self.n_x()) {
                return bad("observation may only reference state variables".into());
            }
            if o.v.len() != o.exprs.len() {
                return bad(format!(
                    "noise matrix has {} rows, expected {}",
                    o.v.len(),
                    o.exprs.len()
                ));
            }
            if o.v.iter().any(|r| r.len() != o.noise.len()) {
                return bad(format!("noise matrix rows must have {} entries", o.noise.len()));
            }
        }
        if self.constraints.iter().any(|c| c.expr.arity() > self.n_x()) {
            return bad("constraints may only reference state variables".into());
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SystemModel> {
        let path = path.as_ref();
        if !path.exists() {
            if let Some(src) = path.to_str().and_then(bundled_source) {
                return SystemModel::parse(src);
            }
        }
        SystemModel::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<SystemModel> {
        let m = ModelParser::new(text).model()?;
        m.validate()?;
        Ok(m)
    }

    /// Canonical model-file text; parses back to an identical model.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let names = self.var_names();
        let _ = writeln!(s, "system \"{}\" {{", self.name);
        let kind = match self.semantics {
            TimeSemantics::Discrete => "discrete",
            TimeSemantics::Continuous => "continuous",
        };
        let _ = writeln!(s, "  time: {kind}(dt={:?});", self.dt);
        let _ = writeln!(s, "  state: {};", self.state.join(", "));
        if !self.disturbance.is_empty() {
            let _ = writeln!(
                s,
                "  disturbance: {} in {};",
                self.disturbance.join(", "),
                fmt_box(&self.disturbance_box)
            );
        }
        s.push_str("  dynamics {\n");
        for (n, e) in self.state.iter().zip(&self.dynamics) {
            let _ = writeln!(s, "    {n}' = {};", e.to_text(&names));
        }
        s.push_str("  }\n");
        let _ = writeln!(s, "  init: {};", fmt_box(&self.init));
        if let Some(o) = &self.observation {
            s.push_str("  observe {\n");
            for (n, e) in o.names.iter().zip(&o.exprs) {
                let _ = writeln!(s, "    {n} = {};", e.to_text(&self.state));
            }
            s.push_str("  }\n");
            let rows: Vec<String> = o
                .v
                .iter()
                .map(|r| {
                    let cells: Vec<String> = r.iter().map(|x| format!("{x:?}")).collect();
                    format!("[{}]", cells.join(", "))
                })
                .collect();
            let _ = writeln!(s, "  noisematrix: [{}];", rows.join(", "));
            let _ = writeln!(s, "  noise: {};", fmt_box(&o.noise));
        }
        if !self.constraints.is_empty() {
            s.push_str("  constraint {\n");
            for c in &self.constraints {
                let _ = writeln!(
                    s,
                    "    {} in [{:?}, {:?}];",
                    c.expr.to_text(&self.state),
                    c.bounds.lo(),
                    c.bounds.hi()
                );
            }
            s.push_str("  }\n");
        }
        if !self.jac_overrides.is_empty() {
            s.push_str("  jac_override {\n");
            for o in &self.jac_overrides {
                let _ = writeln!(
                    s,
                    "    f{}/d{} in [{}, {}];",
                    o.row + 1,
                    names[o.col],
                    fmt_ext(o.bounds.lo),
                    fmt_ext(o.bounds.hi)
                );
            }
            s.push_str("  }\n");
        }
        s.push_str("}\n");
        s
    }
}

fn fmt_box(b: &IntervalBox) -> String {
    let parts: Vec<String> = b
        .iter()
        .map(|d| format!("[{:?}, {:?}]", d.lo(), d.hi()))
        .collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_ext(x: ExtendedBound) -> String {
    match x {
        ExtendedBound::NegInf => "-inf".into(),
        ExtendedBound::PosInf => "inf".into(),
        ExtendedBound::Finite(v) => format!("{v:?}"),
    }
}

struct ModelParser<'a> {
    src: &'a str,
    pos: usize,
}

#[derive(Default)]
struct Draft {
    time: Option<(TimeSemantics, f64)>,
    state: Option<Vec<String>>,
    disturbance: Vec<String>,
    disturbance_box: Vec<Interval>,
    dynamics: Option<Vec<(String, String, usize)>>,
    init: Option<Vec<Interval>>,
    observe: Option<Vec<(String, String, usize)>>,
    noisematrix: Option<Vec<Vec<f64>>>,
    noise: Option<Vec<Interval>>,
    constraints: Vec<(String, usize, Interval)>,
    overrides: Vec<(usize, String, usize, ExtendedBound, ExtendedBound)>,
}

impl<'a> ModelParser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn err_at(&self, offset: usize, msg: impl Into<String>) -> Error {
        let before = &self.src[..offset.min(self.src.len())];
        let line = before.matches('\n').count() + 1;
        let col = before.len() - before.rfind('\n').map(|p| p + 1).unwrap_or(0) + 1;
        Error::Parse {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn skip(&mut self) {
        let b = self.src.as_bytes();
        loop {
            while self.pos < b.len() && b[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < b.len() && b[self.pos] == b'#' {
                while self.pos < b.len() && b[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip();
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err_at(self.pos, format!("expected '{c}'")))
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip();
        let start = self.pos;
        let b = self.src.as_bytes();
        while self.pos < b.len() && (b[self.pos].is_ascii_alphanumeric() || b[self.pos] == b'_') {
            self.pos += 1;
        }
        if start == self.pos || b[start].is_ascii_digit() {
            return Err(self.err_at(start, "expected identifier"));
        }
        Ok(self.src[start..self.pos].to_string())
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        let at = self.pos;
        let id = self.ident()?;
        if id == kw {
            Ok(())
        } else {
            Err(self.err_at(at, format!("expected '{kw}', found '{id}'")))
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip();
        let start = self.pos;
        let b = self.src.as_bytes();
        while self.pos < b.len()
            && (b[self.pos].is_ascii_alphanumeric() || b"+-.".contains(&b[self.pos]))
        {
            self.pos += 1;
        }
        let tok = &self.src[start..self.pos];
        tok.parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| self.err_at(start, format!("expected number, found '{tok}'")))
    }

    fn finite_number(&mut self) -> Result<f64> {
        let at = self.pos;
        let v = self.number()?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err_at(at, "expected a finite number"))
        }
    }

    fn interval(&mut self) -> Result<Interval> {
        self.skip();
        let at = self.pos;
        self.expect('[')?;
        let lo = self.finite_number()?;
        self.expect(',')?;
        let hi = self.finite_number()?;
        self.expect(']')?;
        Interval::new(lo, hi).map_err(|e| self.err_at(at, e.to_string()))
    }

    fn list<T>(&mut self, mut item: impl FnMut(&mut Self) -> Result<T>) -> Result<Vec<T>> {
        self.expect('[')?;
        let mut out = Vec::new();
        if self.eat(']') {
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if self.eat(']') {
                return Ok(out);
            }
            self.expect(',')?;
        }
    }

    fn boxed(&mut self) -> Result<Vec<Interval>> {
        self.list(Self::interval)
    }

    /// Raw text up to (not including) the next top-level `;`, with its start offset.
    fn until_semicolon(&mut self) -> Result<(String, usize)> {
        self.skip();
        let start = self.pos;
        let rest = &self.src[self.pos..];
        let end = rest
            .find(';')
            .ok_or_else(|| self.err_at(start, "missing ';'"))?;
        let raw = &rest[..end];
        let text = match raw.find('#') {
            Some(_) => raw
                .lines()
                .map(|l| l.split('#').next().unwrap_or(""))
                .collect::<Vec<_>>()
                .join("\n"),
            None => raw.to_string(),
        };
        self.pos += end + 1;
        Ok((text, start))
    }

    fn model(&mut self) -> Result<SystemModel> {
        self.keyword("system")?;
        self.skip();
        let at = self.pos;
        self.expect('"')?;
        let rest = &self.src[self.pos..];
        let close = rest
            .find('"')
            .ok_or_else(|| self.err_at(at, "unterminated model name"))?;
        let name = rest[..close].to_string();
        self.pos += close + 1;
        self.expect('{')?;
        let mut d = Draft::default();
        loop {
            if self.eat('}') {
                break;
            }
            let at = self.pos;
            let key = self.ident()?;
            match key.as_str() {
                "time" => {
                    self.expect(':')?;
                    let kat = self.pos;
                    let kind = match self.ident()?.as_str() {
                        "discrete" => TimeSemantics::Discrete,
                        "continuous" => TimeSemantics::Continuous,
                        k => return Err(self.err_at(kat, format!("unknown time kind '{k}'"))),
                    };
                    self.expect('(')?;
                    self.keyword("dt")?;
                    self.expect('=')?;
                    let dt = self.finite_number()?;
                    self.expect(')')?;
                    self.expect(';')?;
                    d.time = Some((kind, dt));
                }
                "state" => {
                    self.expect(':')?;
                    let mut names = vec![self.ident()?];
                    while self.eat(',') {
                        names.push(self.ident()?);
                    }
                    self.expect(';')?;
                    d.state = Some(names);
                }
                "disturbance" => {
                    self.expect(':')?;
                    let mut names = vec![self.ident()?];
                    while self.eat(',') {
                        names.push(self.ident()?);
                    }
                    self.keyword("in")?;
                    d.disturbance_box = self.boxed()?;
                    self.expect(';')?;
                    d.disturbance = names;
                }
                "dynamics" | "observe" => {
                    self.expect('{')?;
                    let mut eqs = Vec::new();
                    while !self.eat('}') {
                        let lhs = self.ident()?;
                        if key == "dynamics" {
                            self.expect('\'')?;
                        }
                        self.expect('=')?;
                        let (text, off) = self.until_semicolon()?;
                        eqs.push((lhs, text, off));
                    }
                    if key == "dynamics" {
                        d.dynamics = Some(eqs);
                    } else {
                        d.observe = Some(eqs);
                    }
                }
                "init" => {
                    self.expect(':')?;
                    d.init = Some(self.boxed()?);
                    self.expect(';')?;
                }
                "noisematrix" => {
                    self.expect(':')?;
                    d.noisematrix = Some(self.list(|p| p.list(Self::finite_number))?);
                    self.expect(';')?;
                }
                "noise" => {
                    self.expect(':')?;
                    d.noise = Some(self.boxed()?);
                    self.expect(';')?;
                }
                "constraint" => {
                    self.expect('{')?;
                    while !self.eat('}') {
                        let (text, off) = self.until_semicolon()?;
                        let split = find_in_keyword(&text)
                            .ok_or_else(|| self.err_at(off, "expected '<expr> in [lo, hi]'"))?;
                        let mut sub = ModelParser::new(&text[split + 2..]);
                        let iv = sub.interval().map_err(|_| {
                            self.err_at(off + split, "malformed constraint interval")
                        })?;
                        if sub.peek().is_some() {
                            return Err(self.err_at(off + split, "trailing text after interval"));
                        }
                        d.constraints.push((text[..split].to_string(), off, iv));
                    }
                }
                "jac_override" => {
                    self.expect('{')?;
                    while !self.eat('}') {
                        let rat = self.pos;
                        let f = self.ident()?;
                        let row: usize = f
                            .strip_prefix('f')
                            .and_then(|r| r.parse().ok())
                            .filter(|r| *r >= 1)
                            .ok_or_else(|| self.err_at(rat, "expected f<row>"))?;
                        self.expect('/')?;
                        let cat = self.pos;
                        let dv = self.ident()?;
                        let var = dv
                            .strip_prefix('d')
                            .filter(|v| !v.is_empty())
                            .ok_or_else(|| self.err_at(cat, "expected d<variable>"))?
                            .to_string();
                        self.keyword("in")?;
                        self.expect('[')?;
                        let lo = ExtendedBound::from_f64(self.number()?);
                        self.expect(',')?;
                        let hi = ExtendedBound::from_f64(self.number()?);
                        self.expect(']')?;
                        self.expect(';')?;
                        d.overrides.push((row - 1, var, cat, lo, hi));
                    }
                }
                k => return Err(self.err_at(at, format!("unknown section '{k}'"))),
            }
        }
        if self.peek().is_some() {
            return Err(self.err_at(self.pos, "trailing input after model"));
        }
        self.build(name, d)
    }

    fn expr(&self, text: &str, offset: usize, vars: &[&str]) -> Result<Expr> {
        parse_expr(text, vars).map_err(|e| match e {
            ExprError::Syntax { offset: o, msg } => self.err_at(offset + o, msg),
            ExprError::UnknownIdentifier { name, offset: o } => {
                self.err_at(offset + o, format!("undeclared variable '{name}'"))
            }
            e => Error::Expr(e),
        })
    }

    fn build(&self, name: String, d: Draft) -> Result<SystemModel> {
        let missing = |s: &str| Error::Validation(format!("model is missing the '{s}' section"));
        let (semantics, dt) = d.time.ok_or_else(|| missing("time"))?;
        let state = d.state.ok_or_else(|| missing("state"))?;
        let eqs = d.dynamics.ok_or_else(|| missing("dynamics"))?;
        let init = IntervalBox::new(d.init.ok_or_else(|| missing("init"))?);
        let all: Vec<&str> = state
            .iter()
            .chain(&d.disturbance)
            .map(String::as_str)
            .collect();
        let states: Vec<&str> = state.iter().map(String::as_str).collect();
        if eqs.len() != state.len() {
            return Err(Error::Validation(format!(
                "{} states but {} dynamics equations",
                state.len(),
                eqs.len()
            )));
        }
        let mut dynamics: Vec<Option<Expr>> = vec![None; state.len()];
        for (lhs, text, off) in &eqs {
            let i = states
                .iter()
                .position(|s| s == lhs)
                .ok_or_else(|| Error::Validation(format!("equation for undeclared state '{lhs}'")))?;
            if dynamics[i].is_some() {
                return Err(Error::Validation(format!("state '{lhs}' has two equations")));
            }
            dynamics[i] = Some(self.expr(text, *off, &all)?);
        }
        let dynamics = dynamics.into_iter().map(Option::unwrap).collect();
        let observation = match d.observe {
            None => {
                if d.noise.is_some() || d.noisematrix.is_some() {
                    return Err(Error::Validation("noise given without an observe block".into()));
                }
                None
            }
            Some(obs) => {
                let noise = IntervalBox::new(d.noise.ok_or_else(|| missing("noise"))?);
                let v = match d.noisematrix {
                    Some(v) => v,
                    None => (0..obs.len())
                        .map(|r| (0..noise.len()).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
                        .collect(),
                };
                let mut names = Vec::new();
                let mut exprs = Vec::new();
                for (n, text, off) in &obs {
                    names.push(n.clone());
                    exprs.push(self.expr(text, *off, &states)?);
                }
                Some(Observation {
                    names,
                    exprs,
                    v,
                    noise,
                })
            }
        };
        let constraints = d
            .constraints
            .iter()
            .map(|(text, off, iv)| {
                Ok(Constraint {
                    expr: self.expr(text, *off, &states)?,
                    bounds: *iv,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let jac_overrides = d
            .overrides
            .into_iter()
            .map(|(row, var, at, lo, hi)| {
                let col = all
                    .iter()
                    .position(|v| *v == var)
                    .ok_or_else(|| self.err_at(at, format!("undeclared variable '{var}'")))?;
                let bounds = ClarkeInterval::new(lo, hi).map_err(|e| self.err_at(at, e.to_string()))?;
                Ok(JacOverride { row, col, bounds })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SystemModel {
            name,
            semantics,
            dt,
            state,
            disturbance: d.disturbance,
            dynamics,
            disturbance_box: IntervalBox::new(d.disturbance_box),
            init,
            observation,
            constraints,
            jac_overrides,
        })
    }
}

/// Byte offset of a standalone `in` keyword followed by `[`.
fn find_in_keyword(text: &str) -> Option<usize> {
    let b = text.as_bytes();
    (0..b.len().saturating_sub(1)).rev().find(|&k| {
        &b[k..k + 2] == b"in"
            && (k == 0 || !(b[k - 1].is_ascii_alphanumeric() || b[k - 1] == b'_'))
            && text[k + 2..].trim_start().starts_with('[')
    })
}

fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV rendering of a tube: `t, <x>_lo, <x>_hi, ...` plus `_lo_upd/_hi_upd` columns when
/// any step was refined.
pub fn tube_to_csv(tube: &ReachTube) -> String {
    let refined = tube.steps.iter().any(|s| s.updated.is_some());
    let mut s = String::from("t");
    for n in &tube.names {
        let _ = write!(s, ",{n}_lo,{n}_hi");
    }
    if refined {
        for n in &tube.names {
            let _ = write!(s, ",{n}_lo_upd,{n}_hi_upd");
        }
    }
    s.push('\n');
    for step in &tube.steps {
        s.push_str(&fmt_num(step.t));
        for d in step.propagated.iter() {
            let _ = write!(s, ",{},{}", fmt_num(d.lo()), fmt_num(d.hi()));
        }
        if refined {
            let b = step.updated.as_ref().unwrap_or(&step.propagated);
            for d in b.iter() {
                let _ = write!(s, ",{},{}", fmt_num(d.lo()), fmt_num(d.hi()));
            }
        }
        s.push('\n');
    }
    s
}

pub fn write_tube_csv(tube: &ReachTube, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, tube_to_csv(tube))?;
    Ok(())
}

pub fn write_tube_json(tube: &ReachTube, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(tube)?)?;
    Ok(())
}

pub fn read_tube_json(path: impl AsRef<Path>) -> Result<ReachTube> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// SVG with one panel per state dimension; each tube contributes a lower and an upper
/// polyline per panel (refined boxes when present).
pub fn render_svg(tubes: &[ReachTube]) -> Result<String> {
    let first = tubes
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to plot".into()))?;
    if first.steps.is_empty() {
        return Err(Error::InvalidArgument("cannot plot an empty tube".into()));
    }
    let dims = first.names.len();
    let (pw, ph, margin, legend_h) = (640.0, 220.0, 50.0, 24.0 * tubes.len() as f64 + 10.0);
    let height = dims as f64 * (ph + margin) + margin + legend_h;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="12">"#,
        pw + 2.0 * margin
    );
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let t_max = tubes
        .iter()
        .flat_map(|t| t.steps.last().map(|s| s.t))
        .fold(f64::MIN, f64::max);
    let t_min = first.steps[0].t;
    for d in 0..dims {
        let top = margin + d as f64 * (ph + margin);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in tubes {
            for st in &t.steps {
                let b = st.updated.as_ref().unwrap_or(&st.propagated);
                lo = lo.min(b[d].lo());
                hi = hi.max(b[d].hi());
            }
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let tx = |t: f64| margin + (t - t_min) / (t_max - t_min).max(1e-12) * pw;
        let ty = |v: f64| top + ph - (v - lo) / (hi - lo) * ph;
        let _ = writeln!(
            s,
            r#"<g class="panel" data-dim="{}"><rect x="{margin}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#,
            first.names[d]
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text><text x="5" y="{}">{:.3}</text><text x="5" y="{}">{:.3}</text>"#,
            margin,
            top - 6.0,
            first.names[d],
            top + 10.0,
            hi,
            top + ph,
            lo
        );
        for (k, t) in tubes.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            for (side, dash) in [("lo", ""), ("hi", "")] {
                let pts: Vec<String> = t
                    .steps
                    .iter()
                    .map(|st| {
                        let b = st.updated.as_ref().unwrap_or(&st.propagated);
                        let v = if side == "lo" { b[d].lo() } else { b[d].hi() };
                        format!("{:.2},{:.2}", tx(st.t), ty(v))
                    })
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<polyline class="bound" data-method="{}" data-side="{side}" fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                    t.method,
                    pts.join(" ")
                );
            }
        }
        s.push_str("</g>\n");
    }
    let ly = margin + dims as f64 * (ph + margin);
    s.push_str("<g class=\"legend\">\n");
    for (k, t) in tubes.iter().enumerate() {
        let y = ly + 24.0 * k as f64;
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<line x1="{margin}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            margin + 30.0,
            margin + 40.0,
            y + 4.0,
            t.method
        );
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

pub fn write_plot(tubes: &[ReachTube], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_svg(tubes)?)?;
    Ok(())
}
