//! Closed real intervals, interval vectors and the Hausdorff-style tightness metric.
//!
//! Endpoints are plain `f64` values rounded to nearest. Calling
//! [`set_outward_inflation`] makes every arithmetic result widen by a few ULPs on each
//! side, which recovers bitwise conservatism when it matters.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

static INFLATE: AtomicBool = AtomicBool::new(false);

/// Number of ULPs added on each side of every result in inflate mode.
pub const INFLATE_ULPS: u32 = 4;

/// Turns outward inflation of arithmetic results on or off for the whole process.
pub fn set_outward_inflation(enabled: bool) {
    INFLATE.store(enabled, AtomicOrdering::Relaxed);
}

pub fn outward_inflation() -> bool {
    INFLATE.load(AtomicOrdering::Relaxed)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntervalError {
    #[error("invalid interval bounds [{lo}, {hi}]")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error("division by an interval containing zero: {0}")]
    DivisionByZeroInterval(Interval),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dimension index {index} out of range for a box of {dims} dimensions")]
    IndexOutOfRange { index: usize, dims: usize },
}

fn next_up(x: f64, n: u32) -> f64 {
    let mut v = x;
    for _ in 0..n {
        v = v.next_up();
    }
    v
}

fn next_down(x: f64, n: u32) -> f64 {
    let mut v = x;
    for _ in 0..n {
        v = v.next_down();
    }
    v
}

/// A closed interval `[lo, hi]` with finite endpoints.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = IntervalError;

    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(x: Interval) -> Self {
        [x.lo, x.hi]
    }
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}, {:?}]", self.lo, self.hi)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match f.precision() {
            Some(p) => write!(f, "[{:.*}, {:.*}]", p, self.lo, p, self.hi),
            None => write!(f, "[{}, {}]", self.lo, self.hi),
        }
    }
}

impl Interval {
    /// Builds `[lo, hi]`, rejecting NaN, infinite endpoints and `lo > hi`.
    pub fn new(lo: f64, hi: f64) -> Result<Self, IntervalError> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(IntervalError::InvalidBounds { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: f64) -> Self {
        assert!(x.is_finite(), "point interval needs a finite value, got {x}");
        Self { lo: x, hi: x }
    }

    /// Result constructor used by the arithmetic. Applies inflation when enabled and keeps
    /// NaN-free ordering; the caller is responsible for finiteness checks.
    pub(crate) fn raw(lo: f64, hi: f64) -> Self {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        if outward_inflation() {
            Self {
                lo: next_down(lo, INFLATE_ULPS),
                hi: next_up(hi, INFLATE_ULPS),
            }
        } else {
            Self { lo, hi }
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    /// Intersection, or `None` when the intervals do not overlap.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn bisect(&self) -> (Interval, Interval) {
        let m = self.midpoint();
        (Interval { lo: self.lo, hi: m }, Interval { lo: m, hi: self.hi })
    }

    /// Hausdorff distance between two real intervals.
    pub fn hausdorff(&self, other: &Interval) -> f64 {
        (self.lo - other.lo).abs().max((self.hi - other.hi).abs())
    }

    pub fn div(self, rhs: Interval) -> Result<Interval, IntervalError> {
        if rhs.contains_zero() {
            return Err(IntervalError::DivisionByZeroInterval(rhs));
        }
        let inv = Interval::raw(1.0 / rhs.hi, 1.0 / rhs.lo);
        Ok(self * inv)
    }

    /// Integer power with exact handling of even exponents over sign-changing intervals.
    pub fn powi(self, n: i32) -> Result<Interval, IntervalError> {
        match n.cmp(&0) {
            Ordering::Equal => Ok(Interval::raw(1.0, 1.0)),
            Ordering::Less => Interval::raw(1.0, 1.0).div(self.powi(-n)?),
            Ordering::Greater => {
                let a = self.lo.powi(n);
                let b = self.hi.powi(n);
                if n % 2 == 1 || self.lo >= 0.0 {
                    Ok(Interval::raw(a, b))
                } else if self.hi <= 0.0 {
                    Ok(Interval::raw(b, a))
                } else {
                    Ok(Interval::raw(0.0, a.max(b)))
                }
            }
        }
    }

    pub fn sqr(self) -> Interval {
        self.powi(2).expect("positive exponent never fails")
    }

    pub fn sqrt(self) -> Result<Interval, IntervalError> {
        if self.lo < 0.0 {
            return Err(IntervalError::DomainError(format!(
                "sqrt of an interval with negative part {self}"
            )));
        }
        Ok(Interval::raw(self.lo.sqrt(), self.hi.sqrt()))
    }

    pub fn exp(self) -> Interval {
        Interval::raw(self.lo.exp(), self.hi.exp())
    }

    pub fn atan(self) -> Interval {
        Interval::raw(self.lo.atan(), self.hi.atan())
    }

    pub fn abs(self) -> Interval {
        if self.lo >= 0.0 {
            Interval::raw(self.lo, self.hi)
        } else if self.hi <= 0.0 {
            Interval::raw(-self.hi, -self.lo)
        } else {
            Interval::raw(0.0, (-self.lo).max(self.hi))
        }
    }

    pub fn min(self, other: Interval) -> Interval {
        Interval::raw(self.lo.min(other.lo), self.hi.min(other.hi))
    }

    pub fn max(self, other: Interval) -> Interval {
        Interval::raw(self.lo.max(other.lo), self.hi.max(other.hi))
    }

    pub fn sin(self) -> Interval {
        // sin(x) = cos(x - pi/2)
        periodic_range(self, FRAC_PI_2, -FRAC_PI_2, f64::sin)
    }

    pub fn cos(self) -> Interval {
        periodic_range(self, 0.0, PI, f64::cos)
    }
}

/// Range of a 2π-periodic function with maximum 1 at `peak + 2kπ` and minimum -1 at
/// `trough + 2kπ`, monotone in between.
fn periodic_range(x: Interval, peak: f64, trough: f64, f: fn(f64) -> f64) -> Interval {
    const TWO_PI: f64 = 2.0 * PI;
    if x.width() >= TWO_PI {
        return Interval::raw(-1.0, 1.0);
    }
    let hits = |c: f64| {
        let k = ((x.lo - c) / TWO_PI).ceil();
        c + k * TWO_PI <= x.hi
    };
    let a = f(x.lo);
    let b = f(x.hi);
    let hi = if hits(peak) { 1.0 } else { a.max(b) };
    let lo = if hits(trough) { -1.0 } else { a.min(b) };
    Interval::raw(lo, hi)
}

impl Add for Interval {
    type Output = Interval;

    fn add(self, rhs: Interval) -> Interval {
        Interval::raw(self.lo + rhs.lo, self.hi + rhs.hi)
    }
}

impl Sub for Interval {
    type Output = Interval;

    fn sub(self, rhs: Interval) -> Interval {
        Interval::raw(self.lo - rhs.hi, self.hi - rhs.lo)
    }
}

impl Mul for Interval {
    type Output = Interval;

    fn mul(self, rhs: Interval) -> Interval {
        let p = [
            self.lo * rhs.lo,
            self.lo * rhs.hi,
            self.hi * rhs.lo,
            self.hi * rhs.hi,
        ];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::raw(lo, hi)
    }
}

impl Mul<f64> for Interval {
    type Output = Interval;

    fn mul(self, c: f64) -> Interval {
        Interval::raw(self.lo * c, self.hi * c)
    }
}

impl Neg for Interval {
    type Output = Interval;

    fn neg(self) -> Interval {
        Interval::raw(-self.hi, -self.lo)
    }
}

/// An axis-aligned box, one [`Interval`] per dimension.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntervalBox {
    dims: Vec<Interval>,
}

impl fmt::Debug for IntervalBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.dims.iter()).finish()
    }
}

impl fmt::Display for IntervalBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, d) in self.dims.iter().enumerate() {
            if k > 0 {
                write!(f, " x ")?;
            }
            fmt::Display::fmt(d, f)?;
        }
        Ok(())
    }
}

impl From<Vec<Interval>> for IntervalBox {
    fn from(dims: Vec<Interval>) -> Self {
        Self { dims }
    }
}

impl FromIterator<Interval> for IntervalBox {
    fn from_iter<T: IntoIterator<Item = Interval>>(iter: T) -> Self {
        Self {
            dims: iter.into_iter().collect(),
        }
    }
}

impl std::ops::Index<usize> for IntervalBox {
    type Output = Interval;

    fn index(&self, i: usize) -> &Interval {
        &self.dims[i]
    }
}

fn check_dims(expected: usize, found: usize) -> Result<(), IntervalError> {
    if expected == found {
        Ok(())
    } else {
        Err(IntervalError::DimensionMismatch { expected, found })
    }
}

impl IntervalBox {
    pub fn new(dims: Vec<Interval>) -> Self {
        Self { dims }
    }

    /// Builds a box from `(lo, hi)` pairs.
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self, IntervalError> {
        bounds
            .iter()
            .map(|&(lo, hi)| Interval::new(lo, hi))
            .collect::<Result<Vec<_>, _>>()
            .map(Self::new)
    }

    /// Builds the box `[lo, hi]` from two corner vectors.
    pub fn from_corners(lo: &[f64], hi: &[f64]) -> Result<Self, IntervalError> {
        check_dims(lo.len(), hi.len())?;
        lo.iter()
            .zip(hi)
            .map(|(&a, &b)| Interval::new(a, b))
            .collect::<Result<Vec<_>, _>>()
            .map(Self::new)
    }

    pub fn point(x: &[f64]) -> Self {
        x.iter().map(|&v| Interval::point(v)).collect()
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn dims(&self) -> &[Interval] {
        &self.dims
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Interval> {
        self.dims.iter()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.dims.iter().map(Interval::lo).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.dims.iter().map(Interval::hi).collect()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.dims.iter().map(Interval::midpoint).collect()
    }

    /// Largest edge length.
    pub fn diameter(&self) -> f64 {
        self.dims.iter().map(Interval::width).fold(0.0, f64::max)
    }

    pub fn widths(&self) -> Vec<f64> {
        self.dims.iter().map(Interval::width).collect()
    }

    pub fn with_dim(&self, index: usize, value: Interval) -> Self {
        let mut dims = self.dims.clone();
        dims[index] = value;
        Self { dims }
    }

    /// Concatenation `self × other`.
    pub fn product(&self, other: &IntervalBox) -> Self {
        self.dims.iter().chain(other.dims.iter()).copied().collect()
    }

    pub fn contains_point(&self, x: &[f64]) -> Result<bool, IntervalError> {
        check_dims(self.len(), x.len())?;
        Ok(self.dims.iter().zip(x).all(|(d, &v)| d.contains(v)))
    }

    /// True when `other ⊆ self`.
    pub fn contains_box(&self, other: &IntervalBox) -> Result<bool, IntervalError> {
        check_dims(self.len(), other.len())?;
        Ok(self
            .dims
            .iter()
            .zip(&other.dims)
            .all(|(outer, inner)| inner.is_subset_of(outer)))
    }

    pub fn is_subset_of(&self, other: &IntervalBox) -> Result<bool, IntervalError> {
        other.contains_box(self)
    }

    /// Componentwise intersection; `Ok(None)` when some dimension has no overlap.
    pub fn intersect(&self, other: &IntervalBox) -> Result<Option<IntervalBox>, IntervalError> {
        check_dims(self.len(), other.len())?;
        Ok(self
            .dims
            .iter()
            .zip(&other.dims)
            .map(|(a, b)| a.intersect(b))
            .collect::<Option<Vec<_>>>()
            .map(IntervalBox::new))
    }

    pub fn hull(&self, other: &IntervalBox) -> Result<IntervalBox, IntervalError> {
        check_dims(self.len(), other.len())?;
        Ok(self
            .dims
            .iter()
            .zip(&other.dims)
            .map(|(a, b)| a.hull(b))
            .collect())
    }

    /// Splits dimension `dim` at its midpoint.
    pub fn bisect(&self, dim: usize) -> Result<(IntervalBox, IntervalBox), IntervalError> {
        if dim >= self.len() {
            return Err(IntervalError::IndexOutOfRange {
                index: dim,
                dims: self.len(),
            });
        }
        let (a, b) = self.dims[dim].bisect();
        Ok((self.with_dim(dim, a), self.with_dim(dim, b)))
    }

    /// Every vertex of the box. Degenerate dimensions contribute a single coordinate.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(self.len())];
        for d in &self.dims {
            let choices: &[f64] = if d.is_degenerate() {
                &[d.lo]
            } else {
                &[d.lo, d.hi]
            };
            out = out
                .into_iter()
                .flat_map(|v| {
                    choices.iter().map(move |&c| {
                        let mut v = v.clone();
                        v.push(c);
                        v
                    })
                })
                .collect();
        }
        out
    }
}

/// Maximum over dimensions of the endpoint-wise Hausdorff distance.
pub fn hausdorff_q(a: &IntervalBox, b: &IntervalBox) -> Result<f64, IntervalError> {
    check_dims(a.len(), b.len())?;
    Ok(a.dims
        .iter()
        .zip(&b.dims)
        .map(|(x, y)| x.hausdorff(y))
        .fold(0.0, f64::max))
}

/// A real number or one of the two infinities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtendedBound {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtendedBound {
    pub fn from_f64(x: f64) -> Self {
        if x == f64::INFINITY {
            ExtendedBound::PosInf
        } else if x == f64::NEG_INFINITY {
            ExtendedBound::NegInf
        } else {
            ExtendedBound::Finite(x)
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExtendedBound::NegInf => f64::NEG_INFINITY,
            ExtendedBound::Finite(x) => x,
            ExtendedBound::PosInf => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedBound::Finite(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedBound::Finite(_))
    }
}

impl PartialOrd for ExtendedBound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

impl fmt::Display for ExtendedBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedBound::NegInf => write!(f, "-inf"),
            ExtendedBound::Finite(x) => write!(f, "{x}"),
            ExtendedBound::PosInf => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for Interval {
    type Err = IntervalError;

    /// Parses `[lo, hi]` or a bare number.
    fn from_str(s: &str) -> Result<Self, IntervalError> {
        let bad = || IntervalError::DomainError(format!("cannot parse interval '{s}'"));
        let t = s.trim();
        if let Some(inner) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let (a, b) = inner.split_once(',').ok_or_else(bad)?;
            let lo: f64 = a.trim().parse().map_err(|_| bad())?;
            let hi: f64 = b.trim().parse().map_err(|_| bad())?;
            Interval::new(lo, hi)
        } else {
            let x: f64 = t.parse().map_err(|_| bad())?;
            Interval::new(x, x)
        }
    }
}

impl std::str::FromStr for IntervalBox {
    type Err = IntervalError;

    /// Accepts `[a,b] x [c,d]`, `[a,b]^3` factors, or the nested form `[[a,b],[c,d]]`.
    fn from_str(s: &str) -> Result<Self, IntervalError> {
        let bad = || IntervalError::DomainError(format!("cannot parse box '{s}'"));
        let t = s.trim();
        if let Some(inner) = t.strip_prefix("[[").and_then(|r| r.strip_suffix("]]")) {
            return inner
                .split("],")
                .map(|part| format!("[{}]", part.trim().trim_start_matches('[').trim_end_matches(']')).parse())
                .collect();
        }
        let mut dims = Vec::new();
        let mut rest = t;
        while !rest.is_empty() {
            let close = rest.find(']').ok_or_else(bad)?;
            let iv: Interval = rest[..=close].parse()?;
            rest = rest[close + 1..].trim_start();
            let mut reps = 1;
            if let Some(r) = rest.strip_prefix('^') {
                let end = r.find(|c: char| !c.is_ascii_digit()).unwrap_or(r.len());
                reps = r[..end].parse().map_err(|_| bad())?;
                rest = r[end..].trim_start();
            }
            dims.extend(std::iter::repeat_n(iv, reps));
            rest = rest
                .strip_prefix(['x', '*', ','])
                .map_or(rest, str::trim_start);
            if !rest.is_empty() && !rest.starts_with('[') {
                return Err(bad());
            }
        }
        if dims.is_empty() {
            return Err(bad());
        }
        Ok(IntervalBox { dims })
    }
}
