//! Randomized invariants of the library, driven by proptest.

mod common;

use mixmono::decomp::{t_o_bounds, t_r_bounds, DecompEval, TimeSemantics, DEFAULT_CANDIDATE_CAP};
use mixmono::expr::parse_expr;
use mixmono::inclusion::{best_of, enclose, error_bounds, sampled_range};
use mixmono::interval::hausdorff_q;
use mixmono::model::{bundled, tube_to_csv};
use mixmono::observer::measurement_to_constraint;
use mixmono::reach::{reach_tube, Propagator, ReachOptions};
use mixmono::setinv::{set_invert, InversionConfig};
use mixmono::{Interval, IntervalBox, MethodId, SystemModel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REL: f64 = 1e-12;

fn within(outer: &Interval, v: f64) -> bool {
    let tol = REL * v.abs().max(1.0);
    v >= outer.lo() - tol && v <= outer.hi() + tol
}

fn iv_within(outer: &Interval, inner: &Interval) -> bool {
    within(outer, inner.lo()) && within(outer, inner.hi())
}

fn interval() -> impl Strategy<Value = Interval> {
    (-4.0f64..4.0, 0.0f64..3.0).prop_map(|(c, w)| Interval::new(c - w / 2.0, c + w / 2.0).unwrap())
}

/// A pair `inner ⊆ outer`.
fn nested() -> impl Strategy<Value = (Interval, Interval)> {
    (interval(), 0.0f64..1.0, 0.0f64..1.0).prop_map(|(outer, a, b)| {
        let (a, b) = (a.min(b), a.max(b));
        let inner = Interval::new(outer.lo() + a * outer.width(), outer.lo() + b * outer.width()).unwrap();
        (inner, outer)
    })
}

fn unary_ops() -> Vec<(&'static str, fn(Interval) -> Option<Interval>, fn(f64) -> Option<f64>)> {
    vec![
        ("neg", |x| Some(-x), |v| Some(-v)),
        ("sqr", |x| Some(x.sqr()), |v| Some(v * v)),
        ("cube", |x| x.powi(3).ok(), |v| Some(v * v * v)),
        ("inv-square", |x| x.powi(-2).ok(), |v| (v != 0.0).then(|| 1.0 / (v * v))),
        ("sqrt", |x| x.sqrt().ok(), |v| (v >= 0.0).then(|| v.sqrt())),
        ("exp", |x| Some(x.exp()), |v| Some(v.exp())),
        ("atan", |x| Some(x.atan()), |v| Some(v.atan())),
        ("abs", |x| Some(x.abs()), |v| Some(v.abs())),
        ("sin", |x| Some(x.sin()), |v| Some(v.sin())),
        ("cos", |x| Some(x.cos()), |v| Some(v.cos())),
    ]
}

fn binary_ops() -> Vec<(&'static str, fn(Interval, Interval) -> Option<Interval>, fn(f64, f64) -> f64)> {
    vec![
        ("add", |a, b| Some(a + b), |x, y| x + y),
        ("sub", |a, b| Some(a - b), |x, y| x - y),
        ("mul", |a, b| Some(a * b), |x, y| x * y),
        ("div", |a, b| a.div(b).ok(), |x, y| x / y),
        ("min", |a, b| Some(a.min(b)), f64::min),
        ("max", |a, b| Some(a.max(b)), f64::max),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interval_ops_are_inclusion_monotone((xi, xo) in nested(), (yi, yo) in nested()) {
        for (name, op, _) in unary_ops() {
            if let (Some(a), Some(b)) = (op(xi), op(xo)) {
                prop_assert!(iv_within(&b, &a), "{name}: {a:?} ⊄ {b:?}");
            }
        }
        for (name, op, _) in binary_ops() {
            if let (Some(a), Some(b)) = (op(xi, yi), op(xo, yo)) {
                prop_assert!(iv_within(&b, &a), "{name}: {a:?} ⊄ {b:?}");
            }
        }
    }

    #[test]
    fn interval_ops_are_sound(x in interval(), y in interval(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unary: Vec<_> = unary_ops().into_iter().filter_map(|(n, op, f)| op(x).map(|r| (n, r, f))).collect();
        let binary: Vec<_> = binary_ops().into_iter().filter_map(|(n, op, f)| op(x, y).map(|r| (n, r, f))).collect();
        for _ in 0..10_000 {
            let a = x.lo() + rng.random::<f64>() * x.width();
            let b = y.lo() + rng.random::<f64>() * y.width();
            for (name, r, f) in &unary {
                if let Some(v) = f(a) {
                    prop_assert!(within(r, v), "{name}({a}) = {v} ∉ {r:?}");
                }
            }
            for (name, r, f) in &binary {
                let v = f(a, b);
                prop_assert!(within(r, v), "{name}({a}, {b}) = {v} ∉ {r:?}");
            }
        }
    }

    #[test]
    fn hausdorff_is_a_metric(a in prop::collection::vec(interval(), 3), b in prop::collection::vec(interval(), 3), c in prop::collection::vec(interval(), 3)) {
        let (a, b, c) = (IntervalBox::new(a), IntervalBox::new(b), IntervalBox::new(c));
        let d = |x: &IntervalBox, y: &IntervalBox| hausdorff_q(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        if a != b {
            prop_assert!(d(&a, &b) > 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn natural_inclusion_is_sound(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_instance(&mut rng);
        let r = inst.func.natural(&inst.domain).unwrap();
        for _ in 0..100_000 {
            let z = common::uniform_point(&mut rng, &inst.domain);
            let v = inst.func.exprs()[0].eval_point(&z).unwrap();
            prop_assert!(within(&r[0], v), "{}: f({z:?}) = {v} ∉ {:?}", inst.text, r[0]);
        }
    }

    #[test]
    fn jacobian_bounds_contain_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Smooth generator: the CJSS family minus sqrt near zero is smooth on its domain.
        let inst = common::random_cjss_instance(&mut rng);
        let jac = inst.func.jacobian(&inst.domain).unwrap();
        let f = &inst.func.exprs()[0];
        for _ in 0..1_000 {
            let z = common::uniform_point(&mut rng, &inst.domain);
            for k in 0..z.len() {
                let h = 1e-6 * inst.domain[k].width();
                let (mut zp, mut zm) = (z.clone(), z.clone());
                zp[k] += h;
                zm[k] -= h;
                let fd = (f.eval_point(&zp).unwrap() - f.eval_point(&zm).unwrap()) / (2.0 * h);
                let e = jac.get(0, k);
                let tol = 10.0 * h;
                prop_assert!(fd >= e.lo_f64() - tol && fd <= e.hi_f64() + tol, "{}: ∂{k} = {fd} ∉ {e:?}", inst.text);
            }
        }
    }

    #[test]
    fn point_boxes_evaluate_like_points(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_instance(&mut rng);
        let z = common::uniform_point(&mut rng, &inst.domain);
        let f = &inst.func.exprs()[0];
        let v = f.eval_point(&z).unwrap();
        let r = f.eval_interval(&IntervalBox::point(&z)).unwrap();
        let ulp = (v.next_up() - v).max(v - v.next_down());
        prop_assert!((r.lo() - v).abs() <= ulp && (r.hi() - v).abs() <= ulp, "{}: {r:?} vs {v}", inst.text);
    }

    #[test]
    fn expression_printing_roundtrips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_instance(&mut rng);
        let names: Vec<String> = common::VARS.iter().map(|s| s.to_string()).collect();
        let f = &inst.func.exprs()[0];
        let text = f.to_text(&names);
        let back = parse_expr(&text, &common::VARS).unwrap();
        prop_assert_eq!(&back, f, "{}", text);
    }

    #[test]
    fn decomposition_axioms(seed in any::<u64>(), continuous in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_instance(&mut rng);
        let sem = if continuous { TimeSemantics::Continuous } else { TimeSemantics::Discrete };
        let b = &inst.domain;
        let f = &inst.func.exprs()[0];
        let jac = inst.func.jacobian(b).unwrap();
        let d = match DecompEval::remainder(0, jac.row(0), sem, DEFAULT_CANDIDATE_CAP) {
            Ok(d) => d,
            Err(e) => { prop_assert!(e.is_inapplicable()); return Ok(()); }
        };
        for _ in 0..1_000 {
            let z = common::uniform_point(&mut rng, b);
            let fz = f.eval_point(&z).unwrap();
            let diag = continuous.then_some(z[0]);
            let tol = REL * fz.abs().max(1.0);
            prop_assert!((d.upper(f, &z, &z, diag).unwrap() - fz).abs() <= tol);
            prop_assert!((d.lower(f, &z, &z, diag).unwrap() - fz).abs() <= tol);
            // Bump one off-diagonal coordinate upward.
            let p = common::uniform_point(&mut rng, b);
            let q = common::uniform_point(&mut rng, b);
            let k = rng.random_range(0..b.len());
            if continuous && k == 0 {
                continue;
            }
            let mut p2 = p.clone();
            p2[k] += rng.random::<f64>() * (b[k].hi() - p[k]);
            let mut q2 = q.clone();
            q2[k] += rng.random::<f64>() * (b[k].hi() - q[k]);
            let dv = continuous.then_some(p[0]);
            for up in [true, false] {
                let g = |a: &[f64], c: &[f64]| if up { d.upper(f, a, c, dv) } else { d.lower(f, a, c, dv) }.unwrap();
                let base = g(&p, &q);
                let tol = REL * base.abs().max(1.0);
                prop_assert!(g(&p2, &q) >= base - tol, "{}: not increasing in p", inst.text);
                prop_assert!(g(&p, &q2) <= base + tol, "{}: not decreasing in q", inst.text);
            }
        }
    }

    #[test]
    fn sign_stable_rows_make_remainder_tight(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_cjss_instance(&mut rng);
        let jac = inst.func.jacobian(&inst.domain).unwrap();
        let d = DecompEval::remainder(0, jac.row(0), TimeSemantics::Discrete, DEFAULT_CANDIDATE_CAP).unwrap();
        prop_assert!(d.candidates.iter().any(|sv| sv.m.iter().all(|m| *m == 0.0)));
        let r = t_r_bounds(inst.func.exprs(), &jac, &inst.domain, TimeSemantics::Discrete, DEFAULT_CANDIDATE_CAP).unwrap();
        let o = t_o_bounds(inst.func.exprs(), &jac, &inst.domain, TimeSemantics::Discrete).unwrap();
        let tol = 4.0 * f64::EPSILON * o.upper[0].abs().max(o.lower[0].abs()).max(1.0);
        prop_assert!((r.lower[0] - o.lower[0]).abs() <= tol && (r.upper[0] - o.upper[0]).abs() <= tol);
    }

    #[test]
    fn best_of_is_inside_each_input_and_sound(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_instance(&mut rng);
        let outs: Vec<IntervalBox> = MethodId::BASIC
            .iter()
            .filter_map(|m| enclose(m, &inst.func, &inst.domain).ok())
            .collect();
        let meet = best_of(&outs).unwrap();
        let oracle = sampled_range(&inst.func, &inst.domain, 20_000, seed).unwrap();
        for o in &outs {
            prop_assert!(meet.is_subset_of(o).unwrap());
        }
        prop_assert!(iv_within(&meet[0], &oracle[0]), "{}: {:?} vs {:?}", inst.text, meet[0], oracle[0]);
        let best = enclose(&MethodId::best(), &inst.func, &inst.domain).unwrap();
        prop_assert!(iv_within(&best[0], &meet[0]) && iv_within(&meet[0], &best[0]));
    }

    #[test]
    fn error_bound_chain(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = loop {
            let i = common::random_instance(&mut rng);
            if i.domain.len() <= 2 { break i; }
        };
        let jac = inst.func.jacobian(&inst.domain).unwrap();
        let oracle = sampled_range(&inst.func, &inst.domain, 50_000, seed).unwrap();
        let tr = enclose(&MethodId::Remainder, &inst.func, &inst.domain).unwrap();
        let q = hausdorff_q(&tr, &oracle).unwrap();
        let eb = error_bounds(&inst.func.exprs()[0], jac.row(0), &inst.domain, Some(oracle[0])).unwrap();
        let allow = 1e-3 * tr[0].width().max(1e-9);
        prop_assert!(eb.q_lower_estimate.unwrap() <= q + allow);
        prop_assert!(q <= eb.q_upper + allow, "{}: q {q} > q_upper {}", inst.text, eb.q_upper);
        prop_assert!(eb.q_upper <= eb.q_upper_hat + 1e-12);
    }

    #[test]
    fn set_inversion_properties(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = loop {
            let i = common::random_instance(&mut rng);
            if i.domain.len() <= 2 { break i; }
        };
        let a = common::uniform_point(&mut rng, &inst.domain);
        let c = common::uniform_point(&mut rng, &inst.domain);
        let (fa, fc) = (inst.func.eval_point(&a).unwrap()[0], inst.func.eval_point(&c).unwrap()[0]);
        let (lo, hi) = (fa.min(fc), fa.max(fc));
        let grid: Vec<Vec<f64>> = common::grid(&inst.domain, 40)
            .into_iter()
            .filter(|x| { let v = inst.func.eval_point(x).unwrap()[0]; v >= lo && v <= hi })
            .collect();
        let run = |method: MethodId, eps: f64, passes: usize| {
            let cfg = InversionConfig { epsilon: eps, passes, method, ..InversionConfig::default() };
            set_invert(&inst.func, None, &inst.domain, &[lo], &[hi], &cfg)
        };
        for method in [MethodId::Natural, MethodId::JacobianSign, MethodId::Remainder] {
            let out = run(method.clone(), 1e-3, 1).unwrap();
            prop_assert!(out.is_subset_of(&inst.domain).unwrap());
            for x in &grid {
                prop_assert!(out.contains_point(x).unwrap(), "{method}: {x:?} dropped");
            }
            let more = run(method.clone(), 1e-3, 3).unwrap();
            prop_assert!(more.is_subset_of(&out).unwrap());
        }
        // Halving epsilon never enlarges the output of an inclusion-monotone method (single pass).
        let coarse = run(MethodId::Natural, 1e-2, 1).unwrap();
        let fine = run(MethodId::Natural, 5e-3, 1).unwrap();
        prop_assert!(fine.is_subset_of(&coarse).unwrap(), "{fine:?} ⊄ {coarse:?}");
    }

    #[test]
    fn measurement_constraint_covers_noise(seed in any::<u64>(), ny in 1usize..4, nv in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<Vec<f64>> = (0..ny).map(|_| (0..nv).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let v_lo: Vec<f64> = (0..nv).map(|_| rng.random_range(-1.0..0.0)).collect();
        let v_hi: Vec<f64> = v_lo.iter().map(|l| l + rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..ny).map(|_| rng.random_range(-5.0..5.0)).collect();
        let c = measurement_to_constraint(&y, &v, &v_lo, &v_hi).unwrap();
        for _ in 0..10_000 {
            let s: Vec<f64> = v_lo.iter().zip(&v_hi).map(|(l, h)| l + rng.random::<f64>() * (h - l)).collect();
            for i in 0..ny {
                let val = y[i] - v[i].iter().zip(&s).map(|(a, b)| a * b).sum::<f64>();
                let tol = REL * val.abs().max(1.0);
                prop_assert!(val >= c.lo[i] - tol && val <= c.hi[i] + tol);
            }
        }
    }
}

/// Positive linear system: every Jacobian entry is sign-stable at every step.
fn positive_linear() -> SystemModel {
    SystemModel::parse(
        r#"system "pos" { time: discrete(dt=1); state: a, b; disturbance: w in [[0, 0.05]];
           dynamics { a' = 0.5*a + 0.2*b + w; b' = 0.1*a + 0.6*b + 0.3*a^2; }
           init: [[0.1, 0.3], [0.2, 0.5]]; }"#,
    )
    .unwrap()
}

#[test]
fn reach_step_ordering_on_sign_stable_system() {
    let m = positive_linear();
    let opts = ReachOptions::default();
    let tube = |meth: MethodId| reach_tube(&m, &meth, 20, &opts).unwrap();
    let (o, r, l) = (tube(MethodId::TightVertex), tube(MethodId::Remainder), tube(MethodId::JacobianSign));
    let prop = Propagator::new(&m).unwrap();
    for k in 0..20 {
        // One-step comparison from a shared box isolates per-step ordering.
        let cur = r.steps[k].propagated.clone();
        let step = |meth: MethodId| prop.advance(&meth, &cur, &opts).unwrap();
        let (so, sr, sl) = (step(MethodId::TightVertex), step(MethodId::Remainder), step(MethodId::JacobianSign));
        for d in 0..2 {
            assert!(iv_within(&sr[d], &so[d]) && iv_within(&sl[d], &sr[d]), "step {k}");
        }
    }
    assert!(o.steps.len() == 21 && l.steps.len() == 21);
}

#[test]
fn continuous_step_agrees_with_euler_to_second_order() {
    let ct = SystemModel::parse(
        r#"system "c" { time: continuous(dt=0.01); state: a, b; disturbance: w in [[-0.05, 0.05]];
           dynamics { a' = -a + 0.5*sin(b) + w; b' = a - 0.3*b; }
           init: [[0.9, 1.1], [-0.2, 0.1]]; }"#,
    )
    .unwrap();
    let mut errs = Vec::new();
    for dt in [0.02, 0.01, 0.005] {
        let mut m = ct.clone();
        m.dt = dt;
        let cont = Propagator::new(&m).unwrap().advance(&MethodId::Remainder, &m.init, &ReachOptions::default()).unwrap();
        // Euler embedding: x + dt·rates, evaluated by the continuous-time decomposition.
        let f = m.dynamics_fn().unwrap();
        let z = m.init.product(&m.disturbance_box);
        let e = mixmono::inclusion::edge_bounds(
            &MethodId::Remainder, &f, &z, TimeSemantics::Continuous, None, Default::default(),
        )
        .unwrap();
        let err = (0..2)
            .map(|i| {
                let lo = m.init[i].lo() + dt * e.lower[i];
                let hi = m.init[i].hi() + dt * e.upper[i];
                (cont[i].lo() - lo).abs().max((cont[i].hi() - hi).abs())
            })
            .fold(0.0, f64::max);
        errs.push(err);
    }
    // Halving dt should cut the gap roughly fourfold.
    assert!(errs[1] < errs[0] / 3.0 && errs[2] < errs[1] / 3.0, "{errs:?}");
}

#[test]
fn tube_records_satisfy_invariants() {
    let m = bundled("scott_redundant").unwrap();
    let opts = ReachOptions { refine: Some(InversionConfig::with_epsilon(1e-4)), ..ReachOptions::default() };
    let t = reach_tube(&m, &MethodId::Remainder, 30, &opts).unwrap();
    assert_eq!(t.steps[0].propagated, m.init);
    for s in &t.steps {
        assert!(s.updated.as_ref().unwrap().is_subset_of(&s.propagated).unwrap());
    }
    // Locale-independent scientific notation with 17 significant digits.
    let csv = tube_to_csv(&t);
    let row = csv.lines().nth(1).unwrap();
    for cell in row.split(',') {
        let (mant, _) = cell.split_once('e').unwrap();
        assert_eq!(mant.trim_start_matches('-').replace('.', "").len(), 17, "{cell}");
    }
}
