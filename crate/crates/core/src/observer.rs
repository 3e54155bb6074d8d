//! Interval observer: measurement constraints and the predict/update loop.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inclusion::MethodId;
use crate::model::SystemModel;
use crate::reach::{Propagator, ReachOptions, ReachTube, TubeStep};
use crate::setinv::{set_invert, InversionConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub t: f64,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintInterval {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Interval `[y − s̄, y − s̲]` containing `y − V v` for every `v` in `[v_lo, v_hi]`.
pub fn measurement_to_constraint(y: &[f64], v: &[Vec<f64>], v_lo: &[f64], v_hi: &[f64]) -> Result<ConstraintInterval> {
    if v.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: v.len(),
        });
    }
    if v_hi.len() != v_lo.len() {
        return Err(Error::DimensionMismatch {
            expected: v_lo.len(),
            found: v_hi.len(),
        });
    }
    if let Some(row) = v.iter().find(|r| r.len() != v_lo.len()) {
        return Err(Error::DimensionMismatch {
            expected: v_lo.len(),
            found: row.len(),
        });
    }
    if v_lo.iter().zip(v_hi).any(|(a, b)| !(a <= b)) {
        return Err(Error::InvalidArgument("noise bounds are inverted".into()));
    }
    let mut lo = Vec::with_capacity(y.len());
    let mut hi = Vec::with_capacity(y.len());
    for (yi, row) in y.iter().zip(v) {
        let (mut s_hi, mut s_lo) = (0.0, 0.0);
        for ((&a, &l), &u) in row.iter().zip(v_lo).zip(v_hi) {
            let (plus, minus) = (a.max(0.0), a.max(0.0) - a);
            s_hi += plus * u - minus * l;
            s_lo += plus * l - minus * u;
        }
        lo.push(yi - s_hi);
        hi.push(yi - s_lo);
    }
    Ok(ConstraintInterval { lo, hi })
}

/// Reads `t,y1,...,yn` rows (a non-numeric first line is taken as a header).
pub fn parse_measurements_csv(text: &str) -> Result<Vec<Measurement>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let nums: std::result::Result<Vec<f64>, _> = cells.iter().map(|c| c.parse::<f64>()).collect();
        let nums = match nums {
            Ok(n) => n,
            Err(_) if out.is_empty() && ln == 0 => continue,
            Err(_) => {
                return Err(Error::Parse {
                    line: ln + 1,
                    col: 1,
                    msg: "expected numeric fields".into(),
                })
            }
        };
        if nums.len() < 2 || nums.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: ln + 1,
                col: 1,
                msg: "expected t followed by at least one finite output".into(),
            });
        }
        out.push(Measurement {
            t: nums[0],
            y: nums[1..].to_vec(),
        });
    }
    Ok(out)
}

pub fn load_measurements(path: impl AsRef<Path>) -> Result<Vec<Measurement>> {
    parse_measurements_csv(&std::fs::read_to_string(path)?)
}

pub fn measurements_to_csv(ms: &[Measurement]) -> String {
    let n = ms.first().map_or(0, |m| m.y.len());
    let mut s = String::from("t");
    for i in 1..=n {
        s.push_str(&format!(",y{i}"));
    }
    s.push('\n');
    for m in ms {
        s.push_str(&format!("{:.16e}", m.t));
        for v in &m.y {
            s.push_str(&format!(",{v:.16e}"));
        }
        s.push('\n');
    }
    s
}

/// Step index of each measurement; timestamps must be non-negative multiples of `dt`
/// and strictly increasing.
fn align(ms: &[Measurement], dt: f64, n_y: usize) -> Result<Vec<usize>> {
    let mut prev: Option<usize> = None;
    ms.iter()
        .map(|m| {
            if m.y.len() != n_y {
                return Err(Error::DimensionMismatch {
                    expected: n_y,
                    found: m.y.len(),
                });
            }
            let k = (m.t / dt).round();
            if !(m.t >= 0.0) || (k * dt - m.t).abs() > 1e-9 * dt.max(m.t.abs()) {
                return Err(Error::Validation(format!(
                    "measurement time {} is not a multiple of dt = {dt}",
                    m.t
                )));
            }
            let k = k as usize;
            if prev.is_some_and(|p| k <= p) {
                return Err(Error::Validation("measurement times must be strictly increasing".into()));
            }
            prev = Some(k);
            Ok(k)
        })
        .collect()
}

/// Predict/update loop: propagate each `dt`, and at measurement times shrink the
/// propagated box to the states consistent with the measurement.
///
/// `steps` defaults to the last measurement's step index.
pub fn observe(
    model: &SystemModel,
    method: &MethodId,
    measurements: &[Measurement],
    cfg: &InversionConfig,
    opts: &ReachOptions,
    steps: Option<usize>,
) -> Result<ReachTube> {
    let obs = model
        .observation
        .as_ref()
        .ok_or_else(|| Error::Validation("model has no observe block".into()))?;
    let nu = model.observation_fn()?.expect("observation present");
    let idx = align(measurements, model.dt, obs.exprs.len())?;
    let steps = steps.unwrap_or_else(|| idx.last().copied().unwrap_or(0));
    let prop = Propagator::new(model)?;
    let (v_lo, v_hi) = (obs.noise.lower(), obs.noise.upper());
    let mut tube = ReachTube {
        method: method.to_string(),
        names: model.state.clone(),
        steps: Vec::with_capacity(steps + 1),
    };
    let mut next_meas = idx.iter().zip(measurements).peekable();
    for k in 0..=steps {
        let propagated = if k == 0 {
            Ok(model.init.clone())
        } else {
            prop.advance(method, tube.steps[k - 1].current(), opts)
        };
        let result = propagated.and_then(|p| {
            let mut updated = None;
            if next_meas.peek().is_some_and(|(i, _)| **i == k) {
                let (_, m) = next_meas.next().expect("peeked");
                let c = measurement_to_constraint(&m.y, &obs.v, &v_lo, &v_hi)?;
                let jac = nu.jacobian(&p)?;
                updated = Some(set_invert(&nu, Some(&jac), &p, &c.lo, &c.hi, cfg)?);
            }
            Ok((p, updated))
        });
        match result {
            Ok((propagated, updated)) => tube.steps.push(TubeStep {
                t: k as f64 * model.dt,
                propagated,
                updated,
            }),
            Err(e) => {
                return Err(Error::Reach {
                    step: k,
                    partial: Box::new(tube),
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(tube)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::bundled;
    use crate::reach::{random_measurement, random_trajectory, reach_tube};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_symmetric_noise() {
        let c = measurement_to_constraint(&[0.8], &[vec![1.0]], &[-0.05], &[0.05]).unwrap();
        assert!((c.lo[0] - 0.75).abs() < 1e-15 && (c.hi[0] - 0.85).abs() < 1e-15);
    }

    #[test]
    fn mixed_sign_matrix() {
        let c = measurement_to_constraint(&[1.0], &[vec![1.0, -1.0]], &[-0.1, 0.0], &[0.1, 0.2]).unwrap();
        assert!((c.lo[0] - 0.9).abs() < 1e-15 && (c.hi[0] - 1.3).abs() < 1e-15, "{c:?}");
    }

    #[test]
    fn zero_matrix() {
        let c = measurement_to_constraint(&[2.0], &[vec![0.0]], &[-1.0], &[1.0]).unwrap();
        assert_eq!((c.lo[0], c.hi[0]), (2.0, 2.0));
    }

    #[test]
    fn dimension_checks() {
        assert!(matches!(
            measurement_to_constraint(&[1.0, 2.0], &[vec![1.0]], &[0.0], &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn csv_roundtrip() {
        let ms = vec![
            Measurement { t: 0.0, y: vec![1.0, 2.5] },
            Measurement { t: 0.1, y: vec![-1e-3, 4.0] },
        ];
        assert_eq!(parse_measurements_csv(&measurements_to_csv(&ms)).unwrap(), ms);
    }

    #[test]
    fn misaligned_times_rejected() {
        let m = bundled("scott_example").unwrap();
        let ms = vec![Measurement { t: 0.5, y: vec![0.0] }];
        let r = observe(&m, &MethodId::Remainder, &ms, &InversionConfig::default(), &ReachOptions::default(), None);
        assert!(r.unwrap_err().is_validation());
    }

    #[test]
    fn measurements_tighten_linear_tube() {
        let m = bundled("scott_example").unwrap();
        let f = m.dynamics_fn().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let traj = random_trajectory(&m, &f, 20, 1, &mut rng).unwrap();
        let ms: Vec<Measurement> = traj
            .iter()
            .enumerate()
            .map(|(k, x)| Measurement {
                t: k as f64,
                y: random_measurement(&m, x, &mut rng).unwrap(),
            })
            .collect();
        let cfg = InversionConfig::with_epsilon(1e-4);
        let with = observe(&m, &MethodId::Remainder, &ms, &cfg, &ReachOptions::default(), None).unwrap();
        let without = reach_tube(&m, &MethodId::Remainder, 20, &ReachOptions::default()).unwrap();
        assert!(with.frames(&traj, 1e-9));
        for (a, b) in with.steps.iter().zip(&without.steps) {
            assert!(a.updated.as_ref().unwrap().is_subset_of(&a.propagated).unwrap());
            assert!(a.current().is_subset_of(b.current()).unwrap());
        }
    }
}
