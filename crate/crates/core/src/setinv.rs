//! Decomposition-based set inversion.
//!
//! Shrinks a prior box to a sub-box that still holds every point whose image lies in
//! `[y_lo, y_hi]`. Each dimension is swept twice by midpoint bisection: once to pull the
//! upper edge down, once to push the lower edge up. A slab is discarded only when the
//! chosen method's enclosure of it misses the target interval entirely.

use serde::{Deserialize, Serialize};

use crate::decomp::TimeSemantics;
use crate::error::{Error, Result};
use crate::expr::JacobianBounds;
use crate::inclusion::{edge_bounds, EvalOptions, MethodId, VectorFunction};
use crate::interval::{Interval, IntervalBox};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DimOrder {
    #[default]
    Ascending,
    Permutation(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionConfig {
    /// Bisection stops once the working width is at most this value.
    pub epsilon: f64,
    /// Interpret `epsilon` as a fraction of each prior width.
    pub relative: bool,
    pub passes: usize,
    pub order: DimOrder,
    pub method: MethodId,
    pub eval: EvalOptions,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            relative: false,
            passes: 1,
            order: DimOrder::Ascending,
            method: MethodId::Remainder,
            eval: EvalOptions::default(),
        }
    }
}

impl InversionConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Validation(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.passes == 0 {
            return Err(Error::Validation("passes must be at least 1".into()));
        }
        if let DimOrder::Permutation(p) = &self.order {
            let mut seen = vec![false; n];
            if p.len() != n || p.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
                return Err(Error::Validation(format!(
                    "dimension order {p:?} is not a permutation of 0..{n}"
                )));
            }
        }
        Ok(())
    }

    fn order(&self, n: usize) -> Vec<usize> {
        match &self.order {
            DimOrder::Ascending => (0..n).collect(),
            DimOrder::Permutation(p) => p.clone(),
        }
    }
}

struct Checker<'a> {
    nu: &'a VectorFunction,
    jac: Option<&'a JacobianBounds>,
    y_lo: &'a [f64],
    y_hi: &'a [f64],
    cfg: &'a InversionConfig,
}

impl Checker<'_> {
    /// True when the enclosure of `nu` over `b` misses the target in some output.
    fn inconsistent(&self, b: &IntervalBox) -> Result<bool> {
        let e = edge_bounds(
            &self.cfg.method,
            self.nu,
            b,
            TimeSemantics::Discrete,
            self.jac,
            self.cfg.eval,
        )?;
        Ok((0..self.y_lo.len()).any(|d| e.upper[d] < self.y_lo[d] || e.lower[d] > self.y_hi[d]))
    }
}

/// Inverts `nu` over `prior` against `[y_lo, y_hi]`.
///
/// `jac` must bound the Jacobian of `nu` over `prior` (it stays valid on every sub-box);
/// when `None` it is computed per pass over the current box.
pub fn set_invert(
    nu: &VectorFunction,
    jac: Option<&JacobianBounds>,
    prior: &IntervalBox,
    y_lo: &[f64],
    y_hi: &[f64],
    cfg: &InversionConfig,
) -> Result<IntervalBox> {
    let n = prior.len();
    cfg.validate(n)?;
    if nu.n_vars() != n {
        return Err(Error::DimensionMismatch {
            expected: nu.n_vars(),
            found: n,
        });
    }
    for v in [y_lo, y_hi] {
        if v.len() != nu.len() {
            return Err(Error::DimensionMismatch {
                expected: nu.len(),
                found: v.len(),
            });
        }
    }
    if let Some((d, (lo, hi))) = y_lo
        .iter()
        .zip(y_hi)
        .enumerate()
        .find(|(_, (lo, hi))| !(lo <= hi))
    {
        return Err(Error::InvalidArgument(format!(
            "constraint bounds inverted in output {d}: {lo} > {hi}"
        )));
    }
    let order = cfg.order(n);
    let mut x = prior.clone();
    for _ in 0..cfg.passes {
        let own;
        let jac = match jac {
            Some(j) => Some(j),
            None if needs_jacobian(&cfg.method) => {
                own = nu.jacobian(&x)?;
                Some(&own)
            }
            None => None,
        };
        let chk = Checker {
            nu,
            jac,
            y_lo,
            y_hi,
            cfg,
        };
        if chk.inconsistent(&x)? {
            return Err(Error::EmptySolution);
        }
        let before = x.clone();
        for &i in &order {
            let eps = if cfg.relative {
                cfg.epsilon * prior[i].width()
            } else {
                cfg.epsilon
            };
            x = sweep_dim(&chk, x, i, eps)?;
        }
        if chk.inconsistent(&x)? {
            return Err(Error::EmptySolution);
        }
        if x == before {
            break;
        }
    }
    Ok(x)
}

fn needs_jacobian(m: &MethodId) -> bool {
    !matches!(m, MethodId::Natural | MethodId::MixedCentered)
}

fn sweep_dim(chk: &Checker, mut x: IntervalBox, i: usize, eps: f64) -> Result<IntervalBox> {
    let (lo, hi) = (x[i].lo(), x[i].hi());
    // Upper edge: test slabs [mid, hi].
    let mut new_hi = hi;
    let (mut a, mut b) = (lo, hi);
    while b - a > eps {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if chk.inconsistent(&x.with_dim(i, Interval::new(mid, hi)?))? {
            b = mid;
            new_hi = mid;
        } else {
            a = mid;
        }
    }
    x = x.with_dim(i, Interval::new(lo, new_hi)?);
    // Lower edge: bisect on the same dyadic grid of [lo, hi] so that a smaller eps only
    // continues the sequence; slabs reaching past new_hi cover the whole remaining component.
    let mut new_lo = lo;
    let (mut a, mut b) = (lo, hi);
    while b - a > eps {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if mid < new_hi && chk.inconsistent(&x.with_dim(i, Interval::new(lo, mid)?))? {
            a = mid;
            new_lo = mid;
        } else {
            b = mid;
        }
    }
    Ok(x.with_dim(i, Interval::new(new_lo, new_hi)?))
}
