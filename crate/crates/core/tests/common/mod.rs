//! Shared generators and oracles for the integration suites.
#![allow(dead_code)]

use mixmono::expr::parse_expr;
use mixmono::interval::IntervalBox;
use mixmono::VectorFunction;
use rand::Rng;

pub const VARS: [&str; 4] = ["x1", "x2", "x3", "x4"];

#[derive(Debug, Clone)]
pub struct Instance {
    pub text: String,
    pub func: VectorFunction,
    pub domain: IntervalBox,
}

fn coef<R: Rng>(rng: &mut R) -> f64 {
    let c: f64 = rng.random_range(-2.0..2.0);
    let c = (c * 100.0).round() / 100.0;
    if c == 0.0 {
        0.5
    } else {
        c
    }
}

fn mixed_factor<R: Rng>(rng: &mut R, n: usize) -> String {
    let i = rng.random_range(0..n);
    let j = rng.random_range(0..n);
    let (a, b) = (VARS[i], VARS[j]);
    let c = (rng.random_range(-1.0f64..1.0) * 10.0).round() / 10.0;
    match rng.random_range(0..12) {
        0 => a.to_string(),
        1 => format!("{a}^2"),
        2 => format!("{a}^3"),
        3 => format!("sin({a})"),
        4 => format!("cos({a})"),
        5 => format!("abs({a} - ({c}))"),
        6 => format!("exp(0.5*{a})"),
        7 => format!("arctan({a})"),
        8 => format!("{a}*{b}"),
        9 => format!("max({a}, {b})"),
        10 => format!("min({a}, {c})"),
        _ => format!("sin({a})*{b}"),
    }
}

fn build(text: String, n: usize, domain: IntervalBox) -> Instance {
    let e = parse_expr(&text, &VARS[..n]).unwrap_or_else(|e| panic!("{text}: {e}"));
    Instance {
        func: VectorFunction::new(vec![e], n).unwrap(),
        text,
        domain,
    }
}

/// Scalar polynomial / trig / abs mix over a random box in `[-2.5, 2.5]^n`, `n ≤ 4`.
pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let n = rng.random_range(1..=4);
    let terms = rng.random_range(2..=5);
    let parts: Vec<String> = (0..terms)
        .map(|_| format!("({})*{}", coef(rng), mixed_factor(rng, n)))
        .collect();
    let domain: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let c = rng.random_range(-1.5..1.5);
            let h = rng.random_range(0.05..1.0);
            (c - h, c + h)
        })
        .collect();
    build(parts.join(" + "), n, IntervalBox::from_bounds(&domain).unwrap())
}

/// Instance whose Clarke Jacobian bounds are sign-stable over the domain.
pub fn random_cjss_instance<R: Rng>(rng: &mut R) -> Instance {
    loop {
        let n = rng.random_range(1..=3);
        let terms = rng.random_range(1..=4);
        let parts: Vec<String> = (0..terms)
            .map(|_| {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                let (a, b) = (VARS[i], VARS[j]);
                let f = match rng.random_range(0..7) {
                    0 => a.to_string(),
                    1 => format!("{a}^2"),
                    2 => format!("{a}^3"),
                    3 => format!("exp({a})"),
                    4 => format!("arctan({a})"),
                    5 => format!("sqrt({a})"),
                    _ => format!("{a}*{b}"),
                };
                format!("({})*{f}", coef(rng))
            })
            .collect();
        let domain: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let lo = rng.random_range(0.2..1.5);
                (lo, lo + rng.random_range(0.05..0.8))
            })
            .collect();
        let inst = build(parts.join(" + "), n, IntervalBox::from_bounds(&domain).unwrap());
        let jac = inst.func.jacobian(&inst.domain).unwrap();
        if (0..n).all(|k| jac.get(0, k).is_sign_stable()) {
            return inst;
        }
    }
}

/// Exhaustive tensor grid with `per_dim` points per dimension (endpoints included).
pub fn grid(b: &IntervalBox, per_dim: usize) -> Vec<Vec<f64>> {
    let n = b.len();
    let total = per_dim.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            (0..n)
                .map(|d| {
                    let k = idx % per_dim;
                    idx /= per_dim;
                    if k + 1 == per_dim {
                        b[d].hi()
                    } else {
                        b[d].lo() + b[d].width() * k as f64 / (per_dim - 1) as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// Grid with roughly `budget` points in total.
pub fn grid_budget(b: &IntervalBox, budget: usize) -> Vec<Vec<f64>> {
    let per = ((budget as f64).powf(1.0 / b.len() as f64).floor() as usize).max(2);
    grid(b, per)
}

/// Like [`random_instance`] with a fixed number of variables.
pub fn random_instance_with_dims<R: Rng>(rng: &mut R, n: usize) -> Instance {
    loop {
        let inst = random_instance(rng);
        if inst.domain.len() == n {
            return inst;
        }
    }
}

pub fn uniform_point<R: Rng>(rng: &mut R, b: &IntervalBox) -> Vec<f64> {
    b.iter().map(|d| d.lo() + rng.random::<f64>() * d.width()).collect()
}
