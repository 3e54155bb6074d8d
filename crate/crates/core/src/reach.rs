//! Embedding systems, reach tubes and trajectory simulation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decomp::TimeSemantics;
use crate::error::{Error, Result};
use crate::inclusion::{edge_bounds, EvalOptions, MethodId, VectorFunction};
use crate::interval::{Interval, IntervalBox};
use crate::model::SystemModel;
use crate::setinv::{set_invert, InversionConfig};

pub const DEFAULT_SUBSTEPS: usize = 10;

/// Relative slack below which an RK4 end-of-step inversion is treated as round-off.
const RK4_INVERSION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeStep {
    pub t: f64,
    pub propagated: IntervalBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub updated: Option<IntervalBox>,
}

impl TubeStep {
    /// The tightest box known at this step.
    pub fn current(&self) -> &IntervalBox {
        self.updated.as_ref().unwrap_or(&self.propagated)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachTube {
    pub method: String,
    pub names: Vec<String>,
    pub steps: Vec<TubeStep>,
}

impl ReachTube {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last(&self) -> Option<&TubeStep> {
        self.steps.last()
    }

    /// Whether `traj[k]` lies in step `k`'s current box, with absolute slack `tol`.
    pub fn frames(&self, traj: &[Vec<f64>], tol: f64) -> bool {
        self.steps.iter().zip(traj).all(|(s, x)| {
            s.current()
                .iter()
                .zip(x)
                .all(|(d, v)| *v >= d.lo() - tol && *v <= d.hi() + tol)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachOptions {
    /// RK4 substeps per `dt` (continuous time only).
    pub substeps: usize,
    /// Refine every step against the model's constraint block.
    pub refine: Option<InversionConfig>,
    pub eval: EvalOptions,
}

impl Default for ReachOptions {
    fn default() -> Self {
        Self {
            substeps: DEFAULT_SUBSTEPS,
            refine: None,
            eval: EvalOptions::default(),
        }
    }
}

/// Model dynamics prepared for repeated stepping.
#[derive(Debug, Clone)]
pub struct Propagator {
    func: VectorFunction,
    w: IntervalBox,
    semantics: TimeSemantics,
    dt: f64,
    n_x: usize,
}

impl Propagator {
    pub fn new(model: &SystemModel) -> Result<Self> {
        Ok(Self {
            func: model.dynamics_fn()?,
            w: model.disturbance_box.clone(),
            semantics: model.semantics,
            dt: model.dt,
            n_x: model.n_x(),
        })
    }

    fn check(&self, current: &IntervalBox) -> Result<()> {
        if current.len() != self.n_x {
            return Err(Error::DimensionMismatch {
                expected: self.n_x,
                found: current.len(),
            });
        }
        Ok(())
    }

    /// One discrete step of the embedding system (or of the plain inclusion for T_N/T_C/T_M).
    pub fn step_discrete(&self, method: &MethodId, current: &IntervalBox, opts: EvalOptions) -> Result<IntervalBox> {
        self.check(current)?;
        let z = current.product(&self.w);
        edge_bounds(method, &self.func, &z, TimeSemantics::Discrete, None, opts)?.into_box()
    }

    /// Embedding vector field at `(lo, hi)`: lower rates then upper rates.
    fn rates(&self, method: &MethodId, lo: &[f64], hi: &[f64], opts: EvalOptions) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut dims = Vec::with_capacity(self.n_x + self.w.len());
        for (a, b) in lo.iter().zip(hi) {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::NonFiniteState);
            }
            dims.push(Interval::new(a.min(*b), a.max(*b))?);
        }
        dims.extend(self.w.iter().copied());
        let e = edge_bounds(method, &self.func, &IntervalBox::new(dims), TimeSemantics::Continuous, None, opts)?;
        if e.lower.iter().chain(&e.upper).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState);
        }
        Ok((e.lower, e.upper))
    }

    /// Integrates the embedding system over one `dt` with fixed-step RK4.
    pub fn integrate_continuous(
        &self,
        method: &MethodId,
        current: &IntervalBox,
        substeps: usize,
        opts: EvalOptions,
    ) -> Result<IntervalBox> {
        self.check(current)?;
        if substeps == 0 {
            return Err(Error::InvalidArgument("substeps must be at least 1".into()));
        }
        let h = self.dt / substeps as f64;
        let mut lo = current.lower();
        let mut hi = current.upper();
        let axpy = |x: &[f64], k: &[f64], s: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + s * b).collect() };
        for _ in 0..substeps {
            let (k1l, k1u) = self.rates(method, &lo, &hi, opts)?;
            let (k2l, k2u) = self.rates(method, &axpy(&lo, &k1l, h / 2.0), &axpy(&hi, &k1u, h / 2.0), opts)?;
            let (k3l, k3u) = self.rates(method, &axpy(&lo, &k2l, h / 2.0), &axpy(&hi, &k2u, h / 2.0), opts)?;
            let (k4l, k4u) = self.rates(method, &axpy(&lo, &k3l, h), &axpy(&hi, &k3u, h), opts)?;
            for i in 0..self.n_x {
                lo[i] += h / 6.0 * (k1l[i] + 2.0 * k2l[i] + 2.0 * k3l[i] + k4l[i]);
                hi[i] += h / 6.0 * (k1u[i] + 2.0 * k2u[i] + 2.0 * k3u[i] + k4u[i]);
                if !lo[i].is_finite() || !hi[i].is_finite() {
                    return Err(Error::NonFiniteState);
                }
                if lo[i] > hi[i] {
                    if lo[i] - hi[i] > RK4_INVERSION_SLACK * lo[i].abs().max(hi[i].abs()).max(1.0) {
                        return Err(Error::InvertedBounds {
                            dim: i,
                            lo: lo[i],
                            hi: hi[i],
                        });
                    }
                    std::mem::swap(&mut lo[i], &mut hi[i]);
                }
            }
        }
        Ok(IntervalBox::from_corners(&lo, &hi)?)
    }

    pub fn advance(&self, method: &MethodId, current: &IntervalBox, opts: &ReachOptions) -> Result<IntervalBox> {
        match self.semantics {
            TimeSemantics::Discrete => self.step_discrete(method, current, opts.eval),
            TimeSemantics::Continuous => self.integrate_continuous(method, current, opts.substeps, opts.eval),
        }
    }
}

pub fn embed_step_discrete(model: &SystemModel, method: &MethodId, current: &IntervalBox) -> Result<IntervalBox> {
    if model.semantics != TimeSemantics::Discrete {
        return Err(Error::InvalidArgument("model is not discrete-time".into()));
    }
    Propagator::new(model)?.step_discrete(method, current, EvalOptions::default())
}

pub fn embed_integrate_continuous(
    model: &SystemModel,
    method: &MethodId,
    current: &IntervalBox,
    substeps: usize,
) -> Result<IntervalBox> {
    if model.semantics != TimeSemantics::Continuous {
        return Err(Error::InvalidArgument("model is not continuous-time".into()));
    }
    Propagator::new(model)?.integrate_continuous(method, current, substeps, EvalOptions::default())
}

/// Refines `b` against the model's constraint block.
pub fn refine_with_constraints(model: &SystemModel, b: &IntervalBox, cfg: &InversionConfig) -> Result<IntervalBox> {
    let (f, lo, hi) = model
        .constraint_fn()?
        .ok_or_else(|| Error::Validation("refinement needs a constraint block in the model".into()))?;
    set_invert(&f, None, b, &lo, &hi, cfg)
}

/// Reach tube over `steps` steps of length `dt`, starting at the model's init box.
///
/// On failure the error is [`Error::Reach`] carrying every step computed so far.
pub fn reach_tube(model: &SystemModel, method: &MethodId, steps: usize, opts: &ReachOptions) -> Result<ReachTube> {
    if opts.refine.is_some() && model.constraints.is_empty() {
        return Err(Error::Validation("refinement needs a constraint block in the model".into()));
    }
    let prop = Propagator::new(model)?;
    let mut tube = ReachTube {
        method: method.to_string(),
        names: model.state.clone(),
        steps: Vec::with_capacity(steps + 1),
    };
    let refine = |b: &IntervalBox| -> Result<Option<IntervalBox>> {
        opts.refine
            .as_ref()
            .map(|cfg| refine_with_constraints(model, b, cfg))
            .transpose()
    };
    let fail = |tube: ReachTube, step: usize, e: Error| Error::Reach {
        step,
        partial: Box::new(tube),
        source: Box::new(e),
    };
    let updated = match refine(&model.init) {
        Ok(u) => u,
        Err(e) => return Err(fail(tube, 0, e)),
    };
    tube.steps.push(TubeStep {
        t: 0.0,
        propagated: model.init.clone(),
        updated,
    });
    for k in 1..=steps {
        let cur = tube.steps[k - 1].current().clone();
        let next = prop.advance(method, &cur, opts).and_then(|p| Ok((refine(&p)?, p)));
        match next {
            Ok((updated, propagated)) => tube.steps.push(TubeStep {
                t: k as f64 * model.dt,
                propagated,
                updated,
            }),
            Err(e) => return Err(fail(tube, k, e)),
        }
    }
    Ok(tube)
}

/// Point successor of `x` under disturbance `w` over one `dt`.
pub fn simulate_step(model: &SystemModel, func: &VectorFunction, x: &[f64], w: &[f64], substeps: usize) -> Result<Vec<f64>> {
    let eval = |x: &[f64]| -> Result<Vec<f64>> {
        let z: Vec<f64> = x.iter().chain(w).copied().collect();
        func.eval_point(&z)
    };
    match model.semantics {
        TimeSemantics::Discrete => eval(x),
        TimeSemantics::Continuous => {
            let h = model.dt / substeps.max(1) as f64;
            let mut x = x.to_vec();
            let axpy = |x: &[f64], k: &[f64], s: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + s * b).collect() };
            for _ in 0..substeps.max(1) {
                let k1 = eval(&x)?;
                let k2 = eval(&axpy(&x, &k1, h / 2.0))?;
                let k3 = eval(&axpy(&x, &k2, h / 2.0))?;
                let k4 = eval(&axpy(&x, &k3, h))?;
                for i in 0..x.len() {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState);
            }
            Ok(x)
        }
    }
}

fn uniform<R: Rng + ?Sized>(b: &IntervalBox, rng: &mut R) -> Vec<f64> {
    b.iter()
        .map(|d| if d.is_degenerate() { d.lo() } else { rng.random_range(d.lo()..=d.hi()) })
        .collect()
}

/// Uniform draw from the init box, repaired to satisfy equality constraints.
///
/// Each degenerate constraint `g(x) = c` is solved (secant iterations) for the
/// highest-index state it references, keeping the others fixed; the draw is retried
/// until the result lies in the init box and meets every inequality constraint.
pub fn sample_initial<R: Rng + ?Sized>(model: &SystemModel, rng: &mut R) -> Result<Vec<f64>> {
    'draw: for _ in 0..10_000 {
        let mut x = uniform(&model.init, rng);
        for c in model.constraints.iter().filter(|c| c.bounds.is_degenerate()) {
            let j = c.expr.arity().saturating_sub(1);
            let target = c.bounds.lo();
            let g = |x: &[f64]| c.expr.eval_point(x).map(|v| v - target);
            let (mut a, mut b) = (x[j], x[j] + 1.0);
            let mut xa = x.clone();
            let mut ga = g(&xa)?;
            for _ in 0..60 {
                if ga.abs() <= 1e-14 {
                    break;
                }
                let mut xb = x.clone();
                xb[j] = b;
                let gb = g(&xb)?;
                if gb == ga {
                    continue 'draw;
                }
                let next = b - gb * (b - a) / (gb - ga);
                a = b;
                ga = gb;
                b = next;
                xa = xb;
            }
            x[j] = xa[j];
            if g(&x)?.abs() > 1e-10 {
                continue 'draw;
            }
        }
        let inside = model.init.contains_point(&x)?
            && model
                .constraints
                .iter()
                .filter(|c| !c.bounds.is_degenerate())
                .map(|c| c.expr.eval_point(&x).map(|v| c.bounds.contains(v)))
                .collect::<std::result::Result<Vec<_>, _>>()?
                .into_iter()
                .all(|ok| ok);
        if inside {
            return Ok(x);
        }
    }
    Err(Error::Validation("could not sample an initial state satisfying the constraints".into()))
}

/// A seeded random trajectory of `steps` steps with piecewise-constant disturbances.
pub fn random_trajectory<R: Rng + ?Sized>(
    model: &SystemModel,
    func: &VectorFunction,
    steps: usize,
    substeps: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let mut x = sample_initial(model, rng)?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x.clone());
    for _ in 0..steps {
        let w = uniform(&model.disturbance_box, rng);
        x = simulate_step(model, func, &x, &w, substeps)?;
        out.push(x.clone());
    }
    Ok(out)
}

/// Noisy measurement `y = ν(x) + V v` with `v` uniform in the noise box.
pub fn random_measurement<R: Rng + ?Sized>(model: &SystemModel, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let obs = model
        .observation
        .as_ref()
        .ok_or_else(|| Error::Validation("model has no observe block".into()))?;
    let v = uniform(&obs.noise, rng);
    obs.exprs
        .iter()
        .zip(&obs.v)
        .map(|(e, row)| Ok(e.eval_point(x)? + row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::bundled;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vanderpol_first_row_is_exact() {
        let m = bundled("vanderpol").unwrap();
        for method in MethodId::BASIC.iter().cloned().chain([MethodId::best()]) {
            let b = embed_step_discrete(&m, &method, &m.init).unwrap();
            assert!((b[0].lo() - 1.355).abs() < 1e-12, "{method}: {:?}", b[0]);
            assert!((b[0].hi() - 1.63).abs() < 1e-12, "{method}: {:?}", b[0]);
        }
    }

    #[test]
    fn horizon_zero() {
        let m = bundled("vanderpol").unwrap();
        let t = reach_tube(&m, &MethodId::Remainder, 0, &ReachOptions::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.steps[0].propagated, m.init);
    }

    #[test]
    fn decay_matches_closed_form() {
        let m = SystemModel::parse(
            r#"system "decay" { time: continuous(dt=0.01); state: x;
               disturbance: w in [[-0.1, 0.1]]; dynamics { x' = -x + w; } init: [[0, 0]]; }"#,
        )
        .unwrap();
        let t = reach_tube(&m, &MethodId::Remainder, 100, &ReachOptions::default()).unwrap();
        let r = 0.1 * (1.0 - (-1.0f64).exp());
        let last = &t.last().unwrap().propagated;
        assert!((last[0].hi() - r).abs() < 1e-6 && (last[0].lo() + r).abs() < 1e-6, "{last:?}");
    }

    #[test]
    fn failure_carries_partial_tube() {
        let m = SystemModel::parse(
            r#"system "blow" { time: discrete(dt=1); state: x; dynamics { x' = x^2 + 1; } init: [[1, 2]]; }"#,
        )
        .unwrap();
        match reach_tube(&m, &MethodId::Natural, 50, &ReachOptions::default()) {
            Err(Error::Reach { step, partial, .. }) => {
                assert_eq!(partial.len(), step);
                assert!(step > 1);
            }
            other => panic!("expected a reach failure, got {other:?}"),
        }
    }

    #[test]
    fn redundant_initial_samples_satisfy_constraint() {
        let m = bundled("scott_redundant").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = sample_initial(&m, &mut rng).unwrap();
            assert!((x[2] - x[0] - 6.0 * x[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn refinement_requires_constraints() {
        let m = bundled("vanderpol").unwrap();
        let opts = ReachOptions {
            refine: Some(InversionConfig::default()),
            ..ReachOptions::default()
        };
        assert!(reach_tube(&m, &MethodId::Remainder, 1, &opts).unwrap_err().is_validation());
    }
}
