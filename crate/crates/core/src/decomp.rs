//! Remainder-form decomposition functions.
//!
//! For a supporting vector `m` with per-coordinate branch tags, the corner map is
//! `ζ(p, q)_j = q_j` on upper-branch coordinates, `p_j` on lower-branch coordinates and the
//! diagonal value on the continuous-time diagonal coordinate. Each `m` yields the
//! decomposition-function member
//!
//! ```text
//! g_m(p, q) = f(ζ(p, q)) + m · (ζ(q, p) − ζ(p, q))
//! ```
//!
//! The upper decomposition is `min_m g_m(p, q)`, the lower one `max_m g_m(p, q)`; both are
//! increasing in `p` and decreasing in `q` on the box the Jacobian bounds were taken over.
//! Enclosures use `[max_m g_m(z̲, z̄), min_m g_m(z̄, z̲)]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{ClarkeInterval, Expr, JacobianBounds};
use crate::interval::{Interval, IntervalBox};

/// Default cap on supporting-vector candidates per output row.
pub const DEFAULT_CANDIDATE_CAP: usize = 1 << 16;

/// Tolerance under which a lower bound above the upper bound is treated as rounding noise.
const INVERSION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimeSemantics {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Upper,
    Lower,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportingVector {
    pub m: Vec<f64>,
    pub branches: Vec<Branch>,
}

impl SupportingVector {
    /// Corner point `ζ(p, q)`.
    pub fn corner(&self, p: &[f64], q: &[f64], diag: Option<f64>) -> Result<Vec<f64>> {
        self.branches
            .iter()
            .enumerate()
            .map(|(j, b)| match b {
                Branch::Upper => Ok(q[j]),
                Branch::Lower => Ok(p[j]),
                Branch::Diagonal => diag.ok_or(Error::MissingDiagonalValue),
            })
            .collect()
    }

    /// `g_m(p, q)`.
    pub fn member(&self, f: &Expr, p: &[f64], q: &[f64], diag: Option<f64>) -> Result<f64> {
        let a = self.corner(p, q, diag)?;
        let b = self.corner(q, p, diag)?;
        let slope: f64 = self
            .m
            .iter()
            .zip(a.iter().zip(&b))
            .map(|(m, (x, y))| m * (y - x))
            .sum();
        Ok(f.eval_point(&a)? + slope)
    }
}

fn branch_choices(
    c: &ClarkeInterval,
    row: usize,
    col: usize,
) -> Result<Vec<(f64, Branch)>> {
    let lo = c.lo_f64().min(0.0);
    let hi = c.hi_f64().max(0.0);
    match (lo.is_finite(), hi.is_finite()) {
        (false, false) => Err(Error::UnboundedBothSides { row, col }),
        (true, false) => Ok(vec![(lo, Branch::Lower)]),
        (false, true) => Ok(vec![(hi, Branch::Upper)]),
        (true, true) if lo == hi => Ok(vec![(lo, Branch::Lower)]),
        (true, true) => Ok(vec![(hi, Branch::Upper), (lo, Branch::Lower)]),
    }
}

fn check_row_dims(row: &[ClarkeInterval], semantics: TimeSemantics, i: usize) -> Result<()> {
    if semantics == TimeSemantics::Continuous && i >= row.len() {
        return Err(Error::InvalidArgument(format!(
            "continuous-time row {i} has no diagonal coordinate among {} inputs",
            row.len()
        )));
    }
    Ok(())
}

/// All candidate supporting vectors for row `i`, upper choices enumerated first.
pub fn supporting_vectors(
    row: &[ClarkeInterval],
    semantics: TimeSemantics,
    i: usize,
    cap: usize,
) -> Result<Vec<SupportingVector>> {
    check_row_dims(row, semantics, i)?;
    let mut per_coord = Vec::with_capacity(row.len());
    let mut count: u128 = 1;
    for (j, c) in row.iter().enumerate() {
        let choices = if semantics == TimeSemantics::Continuous && j == i {
            vec![(0.0, Branch::Diagonal)]
        } else {
            branch_choices(c, i, j)?
        };
        count = count.saturating_mul(choices.len() as u128);
        per_coord.push(choices);
    }
    if count > cap as u128 {
        return Err(Error::CandidateExplosion { row: i, count, cap });
    }
    let mut out = vec![SupportingVector {
        m: Vec::with_capacity(row.len()),
        branches: Vec::with_capacity(row.len()),
    }];
    for choices in &per_coord {
        let mut next = Vec::with_capacity(out.len() * choices.len());
        for sv in &out {
            for &(m, b) in choices {
                let mut s = sv.clone();
                s.m.push(m);
                s.branches.push(b);
                next.push(s);
            }
        }
        out = next;
    }
    Ok(out)
}

/// The single supporting vector of the Jacobian-sign decomposition.
pub fn jacobian_sign_vector(
    row: &[ClarkeInterval],
    semantics: TimeSemantics,
    i: usize,
) -> Result<SupportingVector> {
    check_row_dims(row, semantics, i)?;
    let mut sv = SupportingVector {
        m: Vec::with_capacity(row.len()),
        branches: Vec::with_capacity(row.len()),
    };
    for (j, c) in row.iter().enumerate() {
        let (m, b) = if semantics == TimeSemantics::Continuous && j == i {
            (0.0, Branch::Diagonal)
        } else {
            let lo = c.lo_f64().min(0.0);
            let hi = c.hi_f64().max(0.0);
            match (lo.is_finite(), hi.is_finite()) {
                (false, false) => return Err(Error::UnboundedBothSides { row: i, col: j }),
                (true, false) => (lo, Branch::Lower),
                (false, true) => (hi, Branch::Upper),
                (true, true) if lo.abs() <= hi.abs() => (lo, Branch::Lower),
                (true, true) => (hi, Branch::Upper),
            }
        };
        sv.m.push(m);
        sv.branches.push(b);
    }
    Ok(sv)
}

/// `(ζ⁺, ζ⁻) = (ζ(a, b), ζ(b, a))`.
pub fn corner_points(
    sv: &SupportingVector,
    a: &[f64],
    b: &[f64],
    diagonal_value: Option<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != sv.m.len() || b.len() != sv.m.len() {
        return Err(Error::DimensionMismatch {
            expected: sv.m.len(),
            found: a.len().min(b.len()),
        });
    }
    Ok((
        sv.corner(a, b, diagonal_value)?,
        sv.corner(b, a, diagonal_value)?,
    ))
}

/// Decomposition function of one output row.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompEval {
    pub row: usize,
    pub candidates: Vec<SupportingVector>,
    pub semantics: TimeSemantics,
}

impl DecompEval {
    pub fn remainder(
        row: usize,
        jac_row: &[ClarkeInterval],
        semantics: TimeSemantics,
        cap: usize,
    ) -> Result<Self> {
        Ok(Self {
            row,
            candidates: supporting_vectors(jac_row, semantics, row, cap)?,
            semantics,
        })
    }

    pub fn jacobian_sign(
        row: usize,
        jac_row: &[ClarkeInterval],
        semantics: TimeSemantics,
    ) -> Result<Self> {
        Ok(Self {
            row,
            candidates: vec![jacobian_sign_vector(jac_row, semantics, row)?],
            semantics,
        })
    }

    fn diag(&self, diagonal_value: Option<f64>) -> Result<Option<f64>> {
        match self.semantics {
            TimeSemantics::Discrete => Ok(None),
            TimeSemantics::Continuous => diagonal_value.map(Some).ok_or(Error::MissingDiagonalValue),
        }
    }

    /// `min_m g_m(p, q)`.
    pub fn upper(&self, f: &Expr, p: &[f64], q: &[f64], diagonal_value: Option<f64>) -> Result<f64> {
        let d = self.diag(diagonal_value)?;
        let mut best = f64::INFINITY;
        for sv in &self.candidates {
            best = best.min(sv.member(f, p, q, d)?);
        }
        Ok(best)
    }

    /// `max_m g_m(p, q)`.
    pub fn lower(&self, f: &Expr, p: &[f64], q: &[f64], diagonal_value: Option<f64>) -> Result<f64> {
        let d = self.diag(diagonal_value)?;
        let mut best = f64::NEG_INFINITY;
        for sv in &self.candidates {
            best = best.max(sv.member(f, p, q, d)?);
        }
        Ok(best)
    }

    /// `[lower(z̲, z̄), upper(z̄, z̲)]`, with diagonal values `z̲_i` / `z̄_i` in continuous time.
    pub fn bounds(&self, f: &Expr, b: &IntervalBox) -> Result<(f64, f64)> {
        let lo = b.lower();
        let hi = b.upper();
        let (dl, du) = match self.semantics {
            TimeSemantics::Discrete => (None, None),
            TimeSemantics::Continuous => (Some(lo[self.row]), Some(hi[self.row])),
        };
        Ok((self.lower(f, &lo, &hi, dl)?, self.upper(f, &hi, &lo, du)?))
    }
}

/// Per-row lower and upper bounds. In discrete time they form an enclosure; in continuous
/// time they are the embedding-system rates and need not be ordered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl EdgeBounds {
    pub fn into_box(self) -> Result<IntervalBox> {
        self.lower
            .iter()
            .zip(&self.upper)
            .enumerate()
            .map(|(dim, (&lo, &hi))| {
                if !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::NonFiniteState);
                }
                if lo <= hi {
                    Ok(Interval::new(lo, hi)?)
                } else if lo - hi <= INVERSION_SLACK * lo.abs().max(hi.abs()).max(1.0) {
                    Ok(Interval::new(hi, lo)?)
                } else {
                    Err(Error::InvertedBounds { dim, lo, hi })
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(IntervalBox::new)
    }

    /// Componentwise tightest combination of several valid bounds.
    pub fn intersect(&self, other: &EdgeBounds) -> EdgeBounds {
        EdgeBounds {
            lower: self
                .lower
                .iter()
                .zip(&other.lower)
                .map(|(a, b)| a.max(*b))
                .collect(),
            upper: self
                .upper
                .iter()
                .zip(&other.upper)
                .map(|(a, b)| a.min(*b))
                .collect(),
        }
    }
}

fn check_jac(f: &[Expr], jac: &JacobianBounds, b: &IntervalBox) -> Result<()> {
    if jac.rows() != f.len() {
        return Err(Error::DimensionMismatch {
            expected: f.len(),
            found: jac.rows(),
        });
    }
    if jac.cols() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            found: jac.cols(),
        });
    }
    Ok(())
}

/// Remainder-form bounds for every row.
pub fn t_r_bounds(
    f: &[Expr],
    jac: &JacobianBounds,
    b: &IntervalBox,
    semantics: TimeSemantics,
    cap: usize,
) -> Result<EdgeBounds> {
    check_jac(f, jac, b)?;
    let mut out = EdgeBounds {
        lower: Vec::with_capacity(f.len()),
        upper: Vec::with_capacity(f.len()),
    };
    for (i, fi) in f.iter().enumerate() {
        let d = DecompEval::remainder(i, jac.row(i), semantics, cap)?;
        let (lo, hi) = d.bounds(fi, b)?;
        out.lower.push(lo);
        out.upper.push(hi);
    }
    Ok(out)
}

pub fn t_r_inclusion(
    f: &[Expr],
    jac: &JacobianBounds,
    b: &IntervalBox,
    semantics: TimeSemantics,
) -> Result<IntervalBox> {
    t_r_bounds(f, jac, b, semantics, DEFAULT_CANDIDATE_CAP)?.into_box()
}

/// Jacobian-sign (single candidate) bounds for every row.
pub fn t_l_bounds(
    f: &[Expr],
    jac: &JacobianBounds,
    b: &IntervalBox,
    semantics: TimeSemantics,
) -> Result<EdgeBounds> {
    check_jac(f, jac, b)?;
    let mut out = EdgeBounds {
        lower: Vec::with_capacity(f.len()),
        upper: Vec::with_capacity(f.len()),
    };
    for (i, fi) in f.iter().enumerate() {
        let d = DecompEval::jacobian_sign(i, jac.row(i), semantics)?;
        let (lo, hi) = d.bounds(fi, b)?;
        out.lower.push(lo);
        out.upper.push(hi);
    }
    Ok(out)
}

pub fn t_l_inclusion(
    f: &[Expr],
    jac: &JacobianBounds,
    b: &IntervalBox,
    semantics: TimeSemantics,
) -> Result<IntervalBox> {
    t_l_bounds(f, jac, b, semantics)?.into_box()
}

/// Vertex-enumeration bounds; needs a sign-stable Jacobian.
pub fn t_o_bounds(
    f: &[Expr],
    jac: &JacobianBounds,
    b: &IntervalBox,
    semantics: TimeSemantics,
) -> Result<EdgeBounds> {
    check_jac(f, jac, b)?;
    let continuous = semantics == TimeSemantics::Continuous;
    let mut unstable = Vec::new();
    for i in 0..f.len() {
        for j in 0..jac.cols() {
            if continuous && i == j {
                continue;
            }
            if !jac.get(i, j).is_sign_stable() {
                unstable.push((i, j));
            }
        }
    }
    if !unstable.is_empty() {
        return Err(Error::NotSignStable { entries: unstable });
    }
    let mut out = EdgeBounds {
        lower: Vec::with_capacity(f.len()),
        upper: Vec::with_capacity(f.len()),
    };
    for (i, fi) in f.iter().enumerate() {
        let (lo_box, hi_box) = if continuous {
            if i >= b.len() {
                return Err(Error::InvalidArgument(format!(
                    "continuous-time row {i} has no diagonal coordinate"
                )));
            }
            (
                b.with_dim(i, Interval::point(b[i].lo())),
                b.with_dim(i, Interval::point(b[i].hi())),
            )
        } else {
            (b.clone(), b.clone())
        };
        let mut lo = f64::INFINITY;
        for v in lo_box.vertices() {
            lo = lo.min(fi.eval_point(&v)?);
        }
        let mut hi = f64::NEG_INFINITY;
        for v in hi_box.vertices() {
            hi = hi.max(fi.eval_point(&v)?);
        }
        out.lower.push(lo);
        out.upper.push(hi);
    }
    Ok(out)
}

pub fn t_o_vertex_inclusion(
    f: &[Expr],
    jac: &JacobianBounds,
    b: &IntervalBox,
    semantics: TimeSemantics,
) -> Result<IntervalBox> {
    t_o_bounds(f, jac, b, semantics)?.into_box()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{clarke_jacobian_bounds, parse_expr};
    use crate::interval::ExtendedBound;

    fn cubic() -> (Expr, IntervalBox, JacobianBounds) {
        let f = parse_expr("x^3 - 0.1*x", &["x"]).unwrap();
        let b = IntervalBox::from_bounds(&[(-1.0, 3.0)]).unwrap();
        let j = clarke_jacobian_bounds(&[f.clone()], &b).unwrap();
        (f, b, j)
    }

    #[test]
    fn candidates_scalar() {
        let (_, _, j) = cubic();
        let c = supporting_vectors(j.row(0), TimeSemantics::Discrete, 0, 16).unwrap();
        assert_eq!(c.len(), 2);
        assert!((c[0].m[0] - 26.9).abs() < 1e-12 && c[0].branches[0] == Branch::Upper);
        assert!((c[1].m[0] + 0.1).abs() < 1e-12 && c[1].branches[0] == Branch::Lower);

        let c = supporting_vectors(&[ClarkeInterval::finite(2.0, 5.0)], TimeSemantics::Discrete, 0, 16)
            .unwrap();
        assert_eq!(c.iter().map(|s| s.m[0]).collect::<Vec<_>>(), vec![5.0, 0.0]);

        let half = ClarkeInterval::new(ExtendedBound::Finite(-3.0), ExtendedBound::PosInf).unwrap();
        let c = supporting_vectors(&[half], TimeSemantics::Discrete, 0, 16).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].m[0], -3.0);

        let zero = ClarkeInterval::finite(0.0, 0.0);
        assert_eq!(
            supporting_vectors(&[zero], TimeSemantics::Discrete, 0, 16)
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn candidates_continuous_diagonal_and_cap() {
        let row = [ClarkeInterval::finite(-1.0, 1.0); 3];
        let c = supporting_vectors(&row, TimeSemantics::Continuous, 1, 16).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.iter().all(|s| s.m[1] == 0.0 && s.branches[1] == Branch::Diagonal));
        assert!(matches!(
            supporting_vectors(&row, TimeSemantics::Discrete, 0, 4),
            Err(Error::CandidateExplosion { count: 8, .. })
        ));
    }

    #[test]
    fn corner_rule() {
        let up = SupportingVector {
            m: vec![26.9],
            branches: vec![Branch::Upper],
        };
        let low = SupportingVector {
            m: vec![-0.1],
            branches: vec![Branch::Lower],
        };
        assert_eq!(corner_points(&up, &[3.0], &[-1.0], None).unwrap(), (vec![-1.0], vec![3.0]));
        assert_eq!(corner_points(&low, &[3.0], &[-1.0], None).unwrap(), (vec![3.0], vec![-1.0]));
        let diag = SupportingVector {
            m: vec![0.0],
            branches: vec![Branch::Diagonal],
        };
        assert!(matches!(
            corner_points(&diag, &[1.0], &[0.0], None),
            Err(Error::MissingDiagonalValue)
        ));
    }

    #[test]
    fn remainder_cubic_hand_values() {
        let (f, b, j) = cubic();
        let d = DecompEval::remainder(0, j.row(0), TimeSemantics::Discrete, 16).unwrap();
        // hand enumeration: min{f(-1) + 26.9*4, f(3) - 0.1*(-4)}
        let up = (-0.9f64 + 26.9 * 4.0).min(26.7 + 0.4);
        let lo = (26.7f64 - 107.6).max(-0.9 - 0.4);
        assert!((d.upper(&f, &[3.0], &[-1.0], None).unwrap() - up).abs() < 1e-12);
        assert!((d.lower(&f, &[-1.0], &[3.0], None).unwrap() - lo).abs() < 1e-12);
        let r = t_r_inclusion(&[f.clone()], &j, &b, TimeSemantics::Discrete).unwrap();
        assert!((r[0].lo() + 1.3).abs() < 1e-12 && (r[0].hi() - 27.1).abs() < 1e-12);
        let l = t_l_inclusion(&[f.clone()], &j, &b, TimeSemantics::Discrete).unwrap();
        assert!((l[0].lo() + 1.3).abs() < 1e-12 && (l[0].hi() - 27.1).abs() < 1e-12);
        for z in [-1.0, 0.3, 2.0] {
            assert_eq!(d.upper(&f, &[z], &[z], None).unwrap(), f.eval_point(&[z]).unwrap());
        }
    }

    #[test]
    fn example3_remainder() {
        let vars = ["x1", "x2", "x3"];
        let f = parse_expr(crate::model::fixtures::EXAMPLE3.expr, &vars).unwrap();
        let b = IntervalBox::from_bounds(&[(-2.0, 2.0); 3]).unwrap();
        let j = clarke_jacobian_bounds(&[f.clone()], &b).unwrap();
        let r = t_r_inclusion(&[f.clone()], &j, &b, TimeSemantics::Discrete).unwrap();
        // oracle: enumerate m ∈ {40, -20}^3 by hand-built corners
        let mut up = f64::INFINITY;
        let mut lo = f64::NEG_INFINITY;
        for mask in 0..8u32 {
            let mut zp = [0.0; 3];
            let mut zm = [0.0; 3];
            let mut ms = [0.0; 3];
            for k in 0..3 {
                if mask & (1 << k) != 0 {
                    ms[k] = 40.0;
                    zp[k] = -2.0;
                    zm[k] = 2.0;
                } else {
                    ms[k] = -20.0;
                    zp[k] = 2.0;
                    zm[k] = -2.0;
                }
            }
            let dot: f64 = (0..3).map(|k| ms[k] * (zm[k] - zp[k])).sum();
            up = up.min(f.eval_point(&zp).unwrap() + dot);
            lo = lo.max(f.eval_point(&zm).unwrap() - dot);
        }
        assert_eq!((lo, up), (-320.0, 320.0));
        assert_eq!((r[0].lo(), r[0].hi()), (lo, up));
    }

    #[test]
    fn tight_vertex() {
        let f = parse_expr("x1^3 + x2", &["x1", "x2"]).unwrap();
        let b = IntervalBox::from_bounds(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let j = clarke_jacobian_bounds(&[f.clone()], &b).unwrap();
        let r = t_o_vertex_inclusion(&[f], &j, &b, TimeSemantics::Discrete).unwrap();
        assert_eq!((r[0].lo(), r[0].hi()), (0.0, 2.0));

        let f = parse_expr("-x", &["x"]).unwrap();
        let b = IntervalBox::from_bounds(&[(2.0, 5.0)]).unwrap();
        let j = clarke_jacobian_bounds(&[f.clone()], &b).unwrap();
        let r = t_o_vertex_inclusion(&[f], &j, &b, TimeSemantics::Discrete).unwrap();
        assert_eq!((r[0].lo(), r[0].hi()), (-5.0, -2.0));

        let (f, b, j) = cubic();
        assert!(matches!(
            t_o_vertex_inclusion(&[f], &j, &b, TimeSemantics::Discrete),
            Err(Error::NotSignStable { ref entries }) if entries == &vec![(0, 0)]
        ));
    }

    #[test]
    fn linear_is_exact() {
        let f = parse_expr("2*x - 3*y + 1", &["x", "y"]).unwrap();
        let b = IntervalBox::from_bounds(&[(-1.0, 2.0), (0.5, 1.0)]).unwrap();
        let j = clarke_jacobian_bounds(&[f.clone()], &b).unwrap();
        let r = t_r_inclusion(&[f], &j, &b, TimeSemantics::Discrete).unwrap();
        assert_eq!((r[0].lo(), r[0].hi()), (-2.0 - 3.0 + 1.0, 4.0 - 1.5 + 1.0));
    }

    #[test]
    fn continuous_uses_diagonal_value() {
        // ẋ = -x + w: upper rate at x̄, lower rate at x̲
        let f = parse_expr("-x + w", &["x", "w"]).unwrap();
        let b = IntervalBox::from_bounds(&[(1.0, 2.0), (-0.1, 0.1)]).unwrap();
        let j = clarke_jacobian_bounds(&[f.clone()], &b).unwrap();
        let e = t_r_bounds(&[f], &j, &b, TimeSemantics::Continuous, 16).unwrap();
        assert!((e.upper[0] - (-2.0 + 0.1)).abs() < 1e-15);
        assert!((e.lower[0] - (-1.0 - 0.1)).abs() < 1e-15);
    }
}
