//! Inclusion-function engines and the tools that compare them.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomp::{
    self, DecompEval, EdgeBounds, SupportingVector, TimeSemantics, DEFAULT_CANDIDATE_CAP,
};
use crate::error::{Error, Result};
use crate::expr::{clarke_jacobian_bounds, ClarkeInterval, Expr, JacobianBounds};
use crate::interval::{hausdorff_q, Interval, IntervalBox};

/// Default cap on subdivision cells.
pub const DEFAULT_CELL_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MethodId {
    Natural,
    Centered,
    MixedCentered,
    JacobianSign,
    Remainder,
    TightVertex,
    BestOf(Vec<MethodId>),
}

impl MethodId {
    pub const BASIC: [MethodId; 6] = [
        MethodId::Natural,
        MethodId::Centered,
        MethodId::MixedCentered,
        MethodId::JacobianSign,
        MethodId::Remainder,
        MethodId::TightVertex,
    ];

    /// Best-of over every basic method.
    pub fn best() -> MethodId {
        MethodId::BestOf(Self::BASIC.to_vec())
    }

    pub fn best_of(methods: Vec<MethodId>) -> Result<MethodId> {
        if methods.is_empty() {
            return Err(Error::InvalidArgument("best-of needs at least one method".into()));
        }
        if methods.iter().any(|m| matches!(m, MethodId::BestOf(_))) {
            return Err(Error::InvalidArgument("best-of cannot be nested".into()));
        }
        Ok(MethodId::BestOf(methods))
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            MethodId::Natural => "natural",
            MethodId::Centered => "centered",
            MethodId::MixedCentered => "mixed-centered",
            MethodId::JacobianSign => "jacobian-sign",
            MethodId::Remainder => "remainder",
            MethodId::TightVertex => "tight",
            MethodId::BestOf(_) => "best",
        }
    }

    /// Parses a comma-separated method list.
    pub fn parse_list(s: &str) -> Result<Vec<MethodId>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodId::BestOf(list) if list.as_slice() != Self::BASIC.as_slice() => {
                let names: Vec<_> = list.iter().map(|m| m.short_name()).collect();
                write!(f, "best({})", names.join("+"))
            }
            m => f.write_str(m.short_name()),
        }
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Ok(match t.to_ascii_lowercase().as_str() {
            "natural" | "n" | "t_n" => MethodId::Natural,
            "centered" | "c" | "t_c" => MethodId::Centered,
            "mixed-centered" | "mixed" | "m" | "t_m" => MethodId::MixedCentered,
            "jacobian-sign" | "l" | "t_l" => MethodId::JacobianSign,
            "remainder" | "r" | "t_r" => MethodId::Remainder,
            "tight" | "vertex" | "o" | "t_o" => MethodId::TightVertex,
            "best" => MethodId::best(),
            _ => {
                if let Some(inner) = t.strip_prefix("best(").and_then(|r| r.strip_suffix(')')) {
                    let list = inner
                        .split('+')
                        .map(str::parse)
                        .collect::<Result<Vec<MethodId>>>()?;
                    return MethodId::best_of(list);
                }
                return Err(Error::InvalidArgument(format!("unknown method '{t}'")));
            }
        })
    }
}

/// A user-supplied replacement for one Jacobian-bound entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacOverride {
    pub row: usize,
    pub col: usize,
    pub bounds: ClarkeInterval,
}

/// A vector-valued map `R^n_vars -> R^len` given by expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFunction {
    exprs: Vec<Expr>,
    n_vars: usize,
    overrides: Vec<JacOverride>,
}

impl VectorFunction {
    pub fn new(exprs: Vec<Expr>, n_vars: usize) -> Result<Self> {
        if let Some(e) = exprs.iter().find(|e| e.arity() > n_vars) {
            return Err(Error::Validation(format!(
                "expression references variable {} but only {n_vars} are declared",
                e.arity() - 1
            )));
        }
        Ok(Self {
            exprs,
            n_vars,
            overrides: Vec::new(),
        })
    }

    pub fn with_overrides(mut self, overrides: Vec<JacOverride>) -> Result<Self> {
        for o in &overrides {
            if o.row >= self.exprs.len() || o.col >= self.n_vars {
                return Err(Error::Validation(format!(
                    "jacobian override ({}, {}) is out of range",
                    o.row + 1,
                    o.col + 1
                )));
            }
        }
        self.overrides = overrides;
        Ok(self)
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> usize {
        self.exprs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exprs.is_empty()
    }

    pub fn overrides(&self) -> &[JacOverride] {
        &self.overrides
    }

    fn check_box(&self, b: &IntervalBox) -> Result<()> {
        if b.len() != self.n_vars {
            return Err(Error::DimensionMismatch {
                expected: self.n_vars,
                found: b.len(),
            });
        }
        Ok(())
    }

    /// Clarke Jacobian bounds over `b` with overrides applied.
    pub fn jacobian(&self, b: &IntervalBox) -> Result<JacobianBounds> {
        self.check_box(b)?;
        let mut j = clarke_jacobian_bounds(&self.exprs, b)?;
        for o in &self.overrides {
            j.set(o.row, o.col, o.bounds);
        }
        Ok(j)
    }

    pub fn eval_point(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.exprs
            .iter()
            .map(|e| e.eval_point(z).map_err(Error::from))
            .collect()
    }

    pub fn natural(&self, b: &IntervalBox) -> Result<IntervalBox> {
        self.check_box(b)?;
        self.exprs
            .iter()
            .map(|e| e.eval_interval(b).map_err(Error::from))
            .collect::<Result<Vec<_>>>()
            .map(IntervalBox::new)
    }
}

fn finite_entry(j: &JacobianBounds, i: usize, k: usize) -> Result<Interval> {
    j.get(i, k)
        .as_interval()
        .ok_or(Error::InfiniteJacobianEntry { row: i, col: k })
}

/// Centered form of row `i`: `f_i(mid) + Σ_k J_ik (Z_k − mid_k)`.
fn centered_row(f: &Expr, i: usize, jac: &JacobianBounds, b: &IntervalBox) -> Result<Interval> {
    let mid = b.midpoint();
    let mut acc = Interval::point(f.eval_point(&mid)?);
    for (k, zk) in b.iter().enumerate() {
        let d = *zk - Interval::point(mid[k]);
        acc = acc + finite_entry(jac, i, k)? * d;
    }
    Ok(acc)
}

/// Jacobians over the sub-boxes `Z_{1→k}`: first `k+1` dims kept, the rest at the midpoint.
fn mixed_jacobians(func: &VectorFunction, b: &IntervalBox) -> Result<Vec<JacobianBounds>> {
    let mid = b.midpoint();
    (0..b.len())
        .map(|k| {
            let sub: IntervalBox = b
                .iter()
                .enumerate()
                .map(|(l, z)| if l <= k { *z } else { Interval::point(mid[l]) })
                .collect();
            func.jacobian(&sub)
        })
        .collect()
}

fn mixed_row(f: &Expr, i: usize, jacs: &[JacobianBounds], b: &IntervalBox) -> Result<Interval> {
    let mid = b.midpoint();
    let mut acc = Interval::point(f.eval_point(&mid)?);
    for (k, zk) in b.iter().enumerate() {
        let d = *zk - Interval::point(mid[k]);
        acc = acc + finite_entry(&jacs[k], i, k)? * d;
    }
    Ok(acc)
}

/// Box with coordinate `i` pinned to `v`.
fn pinned(b: &IntervalBox, i: usize, v: f64) -> IntervalBox {
    b.with_dim(i, Interval::point(v))
}

/// Evaluation options shared by every engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub candidate_cap: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            candidate_cap: DEFAULT_CANDIDATE_CAP,
        }
    }
}

/// Per-row bounds of `method` applied to `func` over `b`.
///
/// In continuous time row `i`'s upper (lower) bound is computed with coordinate `i` fixed
/// to its upper (lower) endpoint, giving embedding-system rates. `jac` may supply
/// precomputed Jacobian bounds valid over `b` for the decomposition methods.
pub fn edge_bounds(
    method: &MethodId,
    func: &VectorFunction,
    b: &IntervalBox,
    semantics: TimeSemantics,
    jac: Option<&JacobianBounds>,
    opts: EvalOptions,
) -> Result<EdgeBounds> {
    func.check_box(b)?;
    if semantics == TimeSemantics::Continuous && func.len() > b.len() {
        return Err(Error::InvalidArgument(
            "continuous-time map has more rows than inputs".into(),
        ));
    }
    let get_jac = || -> Result<JacobianBounds> {
        match jac {
            Some(j) => Ok(j.clone()),
            None => func.jacobian(b),
        }
    };
    let f = func.exprs();
    let continuous = semantics == TimeSemantics::Continuous;
    let rows = |g: &dyn Fn(usize, &IntervalBox) -> Result<Interval>| -> Result<EdgeBounds> {
        let mut out = EdgeBounds {
            lower: Vec::with_capacity(f.len()),
            upper: Vec::with_capacity(f.len()),
        };
        for i in 0..f.len() {
            if continuous {
                out.lower.push(g(i, &pinned(b, i, b[i].lo()))?.lo());
                out.upper.push(g(i, &pinned(b, i, b[i].hi()))?.hi());
            } else {
                let r = g(i, b)?;
                out.lower.push(r.lo());
                out.upper.push(r.hi());
            }
        }
        Ok(out)
    };
    match method {
        MethodId::Natural => rows(&|i, bx| Ok(f[i].eval_interval(bx)?)),
        MethodId::Centered => {
            if continuous {
                rows(&|i, bx| centered_row(&f[i], i, &func.jacobian(bx)?, bx))
            } else {
                let j = get_jac()?;
                rows(&|i, bx| centered_row(&f[i], i, &j, bx))
            }
        }
        MethodId::MixedCentered => {
            if continuous {
                rows(&|i, bx| mixed_row(&f[i], i, &mixed_jacobians(func, bx)?, bx))
            } else {
                let jacs = mixed_jacobians(func, b)?;
                rows(&|i, bx| mixed_row(&f[i], i, &jacs, bx))
            }
        }
        MethodId::JacobianSign => decomp::t_l_bounds(f, &get_jac()?, b, semantics),
        MethodId::Remainder => {
            decomp::t_r_bounds(f, &get_jac()?, b, semantics, opts.candidate_cap)
        }
        MethodId::TightVertex => decomp::t_o_bounds(f, &get_jac()?, b, semantics),
        MethodId::BestOf(list) => {
            let shared = match jac {
                Some(j) => Some(j.clone()),
                None => match func.jacobian(b) {
                    Ok(j) => Some(j),
                    Err(e) if e.is_inapplicable() => None,
                    Err(Error::Expr(crate::expr::ExprError::UnboundedBothSides { .. })) => None,
                    Err(e) => return Err(e),
                },
            };
            let mut acc: Option<EdgeBounds> = None;
            let mut first_err = None;
            for m in list {
                if matches!(m, MethodId::BestOf(_)) {
                    return Err(Error::InvalidArgument("best-of cannot be nested".into()));
                }
                match edge_bounds(m, func, b, semantics, shared.as_ref(), opts) {
                    Ok(e) => {
                        acc = Some(match acc {
                            None => e,
                            Some(a) => a.intersect(&e),
                        })
                    }
                    Err(e) if is_skippable(&e) => {
                        first_err.get_or_insert(e);
                    }
                    Err(e) => return Err(e),
                }
            }
            let out = match acc {
                Some(a) => a,
                None => return Err(first_err.unwrap_or(Error::EmptyIntersection)),
            };
            if !continuous && out.lower.iter().zip(&out.upper).any(|(l, u)| l > u) {
                return Err(Error::EmptyIntersection);
            }
            Ok(out)
        }
    }
}

fn is_skippable(e: &Error) -> bool {
    e.is_inapplicable()
        || matches!(
            e,
            Error::Expr(crate::expr::ExprError::UnboundedBothSides { .. })
                | Error::Expr(crate::expr::ExprError::UnboundedDerivative(_))
        )
}

/// Discrete-time enclosure of the image of `b` under `func`.
pub fn enclose(method: &MethodId, func: &VectorFunction, b: &IntervalBox) -> Result<IntervalBox> {
    edge_bounds(
        method,
        func,
        b,
        TimeSemantics::Discrete,
        None,
        EvalOptions::default(),
    )?
    .into_box()
}

pub fn t_n_inclusion(func: &VectorFunction, b: &IntervalBox) -> Result<IntervalBox> {
    enclose(&MethodId::Natural, func, b)
}

pub fn t_c_inclusion(f: &[Expr], jac: &JacobianBounds, b: &IntervalBox) -> Result<IntervalBox> {
    f.iter()
        .enumerate()
        .map(|(i, fi)| centered_row(fi, i, jac, b))
        .collect::<Result<Vec<_>>>()
        .map(IntervalBox::new)
}

pub fn t_m_inclusion(func: &VectorFunction, b: &IntervalBox) -> Result<IntervalBox> {
    enclose(&MethodId::MixedCentered, func, b)
}

/// Componentwise intersection of sound enclosures.
pub fn best_of(results: &[IntervalBox]) -> Result<IntervalBox> {
    let (first, rest) = results
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("best_of needs at least one input".into()))?;
    let mut acc = first.clone();
    for r in rest {
        acc = acc.intersect(r)?.ok_or(Error::EmptyIntersection)?;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBounds {
    /// Needs an estimate of the true range; `None` when no oracle was supplied.
    pub q_lower_estimate: Option<f64>,
    pub q_upper: f64,
    pub q_upper_hat: f64,
}

/// Error bounds of the remainder-form enclosure of a scalar map over `b` (discrete time).
pub fn error_bounds(
    f: &Expr,
    jac_row: &[ClarkeInterval],
    b: &IntervalBox,
    oracle_range: Option<Interval>,
) -> Result<ErrorBounds> {
    let cands: Vec<SupportingVector> =
        decomp::supporting_vectors(jac_row, TimeSemantics::Discrete, 0, DEFAULT_CANDIDATE_CAP)?;
    let lo = b.lower();
    let hi = b.upper();
    let mut q_hat = f64::INFINITY;
    let mut q_34 = f64::INFINITY;
    let mut min_d1 = f64::INFINITY;
    let mut max_d2 = f64::NEG_INFINITY;
    for sv in &cands {
        let (zp, zm) = decomp::corner_points(sv, &hi, &lo, None)?;
        let d3: f64 = sv
            .m
            .iter()
            .zip(zm.iter().zip(&zp))
            .map(|(m, (a, b))| m * (a - b))
            .sum();
        let fp = f.eval_point(&zp)?;
        let fm = f.eval_point(&zm)?;
        let d4 = fp - fm;
        q_hat = q_hat.min(d3);
        q_34 = q_34.min(d3 + d4);
        min_d1 = min_d1.min(fp + d3);
        max_d2 = max_d2.max(fm - d3);
    }
    Ok(ErrorBounds {
        q_lower_estimate: oracle_range.map(|r| (min_d1 - r.hi()).max(r.lo() - max_d2)),
        q_upper: q_hat.min(q_34),
        q_upper_hat: q_hat,
    })
}

/// Single-row convenience wrapper used by callers that hold a decomposition already.
pub fn remainder_bounds(f: &Expr, d: &DecompEval, b: &IntervalBox) -> Result<(f64, f64)> {
    d.bounds(f, b)
}

/// Sample-based estimate of the range of every component of `func` over `b`.
///
/// Points are the box vertices (up to 12 dims), a regular grid of roughly
/// `min(samples, 10^4)` points and `samples` uniform draws from a seeded generator.
pub fn sampled_range(
    func: &VectorFunction,
    b: &IntervalBox,
    samples: usize,
    seed: u64,
) -> Result<IntervalBox> {
    func.check_box(b)?;
    let n = b.len();
    let mut lo = vec![f64::INFINITY; func.len()];
    let mut hi = vec![f64::NEG_INFINITY; func.len()];
    let mut visit = |z: &[f64]| -> Result<()> {
        for (k, e) in func.exprs().iter().enumerate() {
            let v = e.eval_point(z)?;
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
        Ok(())
    };
    if n <= 12 {
        for v in b.vertices() {
            visit(&v)?;
        }
    }
    if n > 0 {
        let budget = samples.clamp(1, 10_000) as f64;
        let per_dim = (budget.powf(1.0 / n as f64).floor() as usize).max(2);
        let total = per_dim.pow(n as u32);
        let mut z = vec![0.0; n];
        for idx in 0..total {
            let mut r = idx;
            for (d, zd) in z.iter_mut().enumerate() {
                let k = r % per_dim;
                r /= per_dim;
                let t = k as f64 / (per_dim - 1) as f64;
                *zd = b[d].lo() + t * b[d].width();
            }
            visit(&z)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            for (d, zd) in z.iter_mut().enumerate() {
                let t: f64 = rng.random();
                *zd = (b[d].lo() + t * b[d].width()).min(b[d].hi());
            }
            visit(&z)?;
        }
    } else {
        visit(&[])?;
    }
    IntervalBox::from_corners(&lo, &hi).map_err(Error::from)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subdivision {
    pub cells: Vec<IntervalBox>,
    pub enclosures: Vec<IntervalBox>,
    pub hull: IntervalBox,
}

/// Splits `b` into `k` congruent pieces per dimension.
pub fn subdivide(b: &IntervalBox, k: usize, cap: usize) -> Result<Vec<IntervalBox>> {
    if k == 0 {
        return Err(Error::InvalidArgument("subdivision count must be positive".into()));
    }
    let cells = (k as u128).saturating_pow(b.len() as u32);
    if cells > cap as u128 {
        return Err(Error::CellBudgetExceeded { cells, cap });
    }
    let pieces: Vec<Vec<Interval>> = b
        .iter()
        .map(|d| {
            (0..k)
                .map(|s| {
                    let a = if s == 0 {
                        d.lo()
                    } else {
                        d.lo() + d.width() * s as f64 / k as f64
                    };
                    let e = if s + 1 == k {
                        d.hi()
                    } else {
                        d.lo() + d.width() * (s + 1) as f64 / k as f64
                    };
                    Interval::new(a, e.max(a))
                })
                .collect::<std::result::Result<Vec<_>, _>>()
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(cells as usize);
    for idx in 0..cells as usize {
        let mut r = idx;
        let cell: IntervalBox = pieces
            .iter()
            .map(|p| {
                let c = p[r % k];
                r /= k;
                c
            })
            .collect();
        out.push(cell);
    }
    Ok(out)
}

/// Applies `method` on every cell of a `k`-per-dimension subdivision.
pub fn subdivide_apply(
    method: &MethodId,
    func: &VectorFunction,
    b: &IntervalBox,
    k: usize,
    cap: usize,
) -> Result<Subdivision> {
    let cells = subdivide(b, k, cap)?;
    let enclosures = cells
        .par_iter()
        .map(|c| enclose(method, func, c))
        .collect::<Result<Vec<_>>>()?;
    let mut hull = enclosures[0].clone();
    for e in &enclosures[1..] {
        hull = hull.hull(e)?;
    }
    Ok(Subdivision {
        cells,
        enclosures,
        hull,
    })
}

/// Largest per-cell distance between the method's enclosure and a sampled range estimate.
pub fn max_cell_error(
    method: &MethodId,
    func: &VectorFunction,
    b: &IntervalBox,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let sub = subdivide_apply(method, func, b, k, DEFAULT_CELL_CAP)?;
    sub.cells
        .par_iter()
        .zip(sub.enclosures.par_iter())
        .map(|(c, e)| {
            let truth = sampled_range(func, c, samples, seed)?;
            Ok(hausdorff_q(e, &truth)?)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Least-squares slope of `log(err)` against `log(k)`.
pub fn loglog_slope(ks: &[usize], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn scalar(text: &str) -> VectorFunction {
        VectorFunction::new(vec![parse_expr(text, &["x"]).unwrap()], 1).unwrap()
    }

    fn b1(lo: f64, hi: f64) -> IntervalBox {
        IntervalBox::from_bounds(&[(lo, hi)]).unwrap()
    }

    #[test]
    fn method_names_roundtrip() {
        for m in MethodId::BASIC.iter().cloned().chain([MethodId::best()]) {
            assert_eq!(m.to_string().parse::<MethodId>().unwrap(), m);
        }
        assert_eq!("R".parse::<MethodId>().unwrap(), MethodId::Remainder);
        let b: MethodId = "best(natural+remainder)".parse().unwrap();
        assert_eq!(b, MethodId::BestOf(vec![MethodId::Natural, MethodId::Remainder]));
        assert!("nope".parse::<MethodId>().is_err());
    }

    #[test]
    fn centered_cubic_hand_value() {
        let f = scalar("x^3 - 0.1*x");
        let r = enclose(&MethodId::Centered, &f, &b1(-1.0, 3.0)).unwrap();
        // f(1) + [-0.1, 26.9]*[-2, 2]
        assert!((r[0].lo() + 52.9).abs() < 1e-12 && (r[0].hi() - 54.7).abs() < 1e-12);
    }

    #[test]
    fn linear_is_exact_for_centered_forms() {
        let vars = ["x", "y"];
        let f = VectorFunction::new(vec![parse_expr("3*x - 2*y + 1", &vars).unwrap()], 2).unwrap();
        let b = IntervalBox::from_bounds(&[(0.0, 1.0), (-1.0, 2.0)]).unwrap();
        for m in [MethodId::Centered, MethodId::MixedCentered, MethodId::Natural] {
            let r = enclose(&m, &f, &b).unwrap();
            assert!((r[0].lo() + 3.0).abs() < 1e-12 && (r[0].hi() - 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_box_returns_point_value() {
        let f = scalar("x^3 - 0.1*x");
        for m in MethodId::BASIC.iter().chain([&MethodId::best()]) {
            let r = enclose(m, &f, &b1(2.0, 2.0));
            let Ok(r) = r else { continue };
            assert!((r[0].lo() - 7.8).abs() < 1e-12 && (r[0].hi() - 7.8).abs() < 1e-12, "{m}");
        }
    }

    #[test]
    fn best_of_examples() {
        let a = b1(0.0, 4.0);
        let b = b1(1.0, 5.0);
        assert_eq!(best_of(&[a.clone(), b]).unwrap(), b1(1.0, 4.0));
        assert_eq!(best_of(&[a.clone()]).unwrap(), a);
        assert!(matches!(best_of(&[a, b1(5.0, 6.0)]), Err(Error::EmptyIntersection)));
    }

    #[test]
    fn best_of_skips_inapplicable() {
        let f = scalar("x^3 - 0.1*x");
        let r = enclose(&MethodId::best(), &f, &b1(-1.0, 3.0)).unwrap();
        assert!((r[0].lo() + 1.3).abs() < 1e-12 && (r[0].hi() - 27.1).abs() < 1e-12);
    }

    #[test]
    fn error_bounds_cubic() {
        let f = scalar("x^3 - 0.1*x");
        let b = b1(-1.0, 3.0);
        let j = f.jacobian(&b).unwrap();
        let oracle = Interval::new(-0.9, 26.7).unwrap();
        let e = error_bounds(&f.exprs()[0], j.row(0), &b, Some(oracle)).unwrap();
        assert!((e.q_upper_hat - 0.4).abs() < 1e-12);
        assert!((e.q_upper - 0.4).abs() < 1e-12);
        assert!((e.q_lower_estimate.unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn error_bounds_linear_are_zero() {
        let f = scalar("2*x + 1");
        let b = b1(-1.0, 3.0);
        let j = f.jacobian(&b).unwrap();
        let e = error_bounds(&f.exprs()[0], j.row(0), &b, Some(Interval::new(-1.0, 7.0).unwrap()))
            .unwrap();
        assert_eq!((e.q_upper_hat, e.q_upper, e.q_lower_estimate), (0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn subdivision_basics() {
        let f = scalar("x^2");
        let s1 = subdivide_apply(&MethodId::Natural, &f, &b1(-1.0, 1.0), 1, 10).unwrap();
        assert_eq!(s1.cells.len(), 1);
        assert_eq!(s1.enclosures[0], enclose(&MethodId::Natural, &f, &b1(-1.0, 1.0)).unwrap());
        let s2 = subdivide_apply(&MethodId::Natural, &f, &b1(-1.0, 1.0), 2, 10).unwrap();
        assert_eq!(s2.cells, vec![b1(-1.0, 0.0), b1(0.0, 1.0)]);
        assert_eq!(s2.hull, b1(0.0, 1.0));
        let vars = ["x", "y"];
        let g = VectorFunction::new(vec![parse_expr("x*y", &vars).unwrap()], 2).unwrap();
        let b = IntervalBox::from_bounds(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert!(matches!(
            subdivide_apply(&MethodId::Natural, &g, &b, 4, 10),
            Err(Error::CellBudgetExceeded { cells: 16, cap: 10 })
        ));
    }

    #[test]
    fn sampled_range_is_deterministic() {
        let f = scalar("x^3 - 0.1*x");
        let a = sampled_range(&f, &b1(-1.0, 3.0), 1000, 7).unwrap();
        let b = sampled_range(&f, &b1(-1.0, 3.0), 1000, 7).unwrap();
        assert_eq!(a, b);
        assert!((a[0].lo() + 0.9).abs() < 1e-12 && (a[0].hi() - 26.7).abs() < 1e-12);
    }

    #[test]
    fn slope_fit() {
        let s = loglog_slope(&[1, 2, 4, 8], &[1.0, 0.5, 0.25, 0.125]);
        assert!((s + 1.0).abs() < 1e-12);
    }
}
