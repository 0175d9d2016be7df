//! Scalar Gaussian primitives: density, distribution function, inverse
//! Mills ratio, truncated moments and quadrature rules.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{invalid, Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Below this standardized cutoff the Mills ratio switches to a continued fraction.
const DEEP_TAIL: f64 = -8.0;

pub const DEFAULT_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: f64,
    pub sd: f64,
}

impl GaussianSpec {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(invalid(format!("mean must be finite, got {mean}")));
        }
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(invalid(format!("sd must be positive and finite, got {sd}")));
        }
        Ok(Self { mean, sd })
    }

    pub fn standard() -> Self {
        Self { mean: 0.0, sd: 1.0 }
    }

    pub fn z(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }

    pub fn pdf(&self, x: f64) -> f64 {
        norm_pdf(self.z(x)) / self.sd
    }

    pub fn cdf(&self, x: f64) -> f64 {
        norm_cdf(self.z(x))
    }

    fn reflected(&self) -> Self {
        Self { mean: -self.mean, sd: self.sd }
    }
}

/// Standard normal density and distribution function at a finite point.
pub fn std_pdf_cdf(z: f64) -> Result<(f64, f64)> {
    if !z.is_finite() {
        return Err(Error::Domain(format!("std_pdf_cdf needs a finite argument, got {z}")));
    }
    Ok((norm_pdf(z), norm_cdf(z)))
}

pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF; accepts infinities.
pub fn norm_cdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        1.0
    } else if z == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-z / SQRT_2)
    }
}

/// Continued-fraction tail terms for x = -z >= 8.
///
/// Returns (t1, t2) with lambda(z) = x + t1 and t1 = 1/(x + 2 t2).
fn mills_tail(x: f64) -> (f64, f64) {
    let mut t = 0.0;
    let mut prev = 0.0;
    for k in (1..=80).rev() {
        prev = t;
        t = 1.0 / (x + (k + 1) as f64 * t);
    }
    (t, prev)
}

/// Inverse Mills ratio phi(z)/Phi(z). Finite for every z < +inf, 0 at +inf.
pub fn inverse_mills(z: f64) -> f64 {
    if z == f64::INFINITY {
        return 0.0;
    }
    if z < DEEP_TAIL {
        let x = -z;
        let (t1, _) = mills_tail(x);
        return x + t1;
    }
    norm_pdf(z) / norm_cdf(z)
}

/// Mean and variance of X given X <= c, for X ~ g. `c` may be +inf.
pub fn truncated_lower_moments(g: &GaussianSpec, c: f64) -> Result<(f64, f64)> {
    if c.is_nan() || c == f64::NEG_INFINITY {
        return Err(Error::Domain(format!("lower truncation point must be > -inf, got {c}")));
    }
    if c == f64::INFINITY {
        return Ok((g.mean, g.sd * g.sd));
    }
    let z = g.z(c);
    let s2 = g.sd * g.sd;
    if z < DEEP_TAIL {
        let x = -z;
        let (t1, t2) = mills_tail(x);
        let mean = c - g.sd * t1;
        let factor = (2.0 * t2 - t1) / (x + 2.0 * t2);
        return Ok((mean, s2 * factor));
    }
    let lam = inverse_mills(z);
    let mean = g.mean - g.sd * lam;
    let var = s2 * (1.0 - z * lam - lam * lam);
    Ok((mean, var))
}

/// Mean and variance of X given X >= c. `c` may be -inf.
pub fn truncated_upper_moments(g: &GaussianSpec, c: f64) -> Result<(f64, f64)> {
    if c.is_nan() || c == f64::INFINITY {
        return Err(Error::Domain(format!("upper truncation point must be < +inf, got {c}")));
    }
    let (m, v) = truncated_lower_moments(&g.reflected(), -c)?;
    Ok((-m, v))
}

// ---------------------------------------------------------------------------
// Quadrature rules

/// Nodes and weights of a Gauss rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

type RuleCache = OnceLock<Mutex<HashMap<usize, Arc<Rule>>>>;

static HERMITE: RuleCache = OnceLock::new();
static LEGENDRE: RuleCache = OnceLock::new();

fn cached(cache: &RuleCache, n: usize, build: fn(usize) -> Rule) -> Arc<Rule> {
    let map = cache.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = map.lock().expect("quadrature cache poisoned");
    guard.entry(n).or_insert_with(|| Arc::new(build(n))).clone()
}

/// Gauss-Hermite rule for the weight exp(-x^2) (physicists' convention).
pub fn hermite_rule(n: usize) -> Arc<Rule> {
    cached(&HERMITE, n, build_hermite)
}

/// Gauss-Legendre rule on [-1, 1].
pub fn legendre_rule(n: usize) -> Arc<Rule> {
    cached(&LEGENDRE, n, build_legendre)
}

fn build_hermite(n: usize) -> Rule {
    // Newton iteration on orthonormal Hermite polynomials, roots seeded from
    // the usual asymptotic guesses and refined by symmetry.
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z: f64 = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    Rule { nodes, weights }
}

fn build_legendre(n: usize) -> Rule {
    let nf = n as f64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    Rule { nodes, weights }
}

/// Panels per standard deviation in `gauss_expectation`.
const PANELS_PER_SD: usize = 4;

/// E[f(X)] for X ~ g.
///
/// Composite Gauss-Legendre against the density on mean +/- 12 sd, with
/// `nodes` points on each quarter-sd panel. A pure Hermite rule converges
/// badly when f has a kink (as max-type payoffs do); narrow panels keep
/// the error near 1e-6 there while polynomial moments stay exact to
/// rounding.
pub fn gauss_expectation<F: Fn(f64) -> f64>(f: F, g: &GaussianSpec, nodes: usize) -> Result<f64> {
    if nodes < 8 {
        return Err(invalid(format!("gauss_expectation needs at least 8 nodes, got {nodes}")));
    }
    let rule = legendre_rule(nodes);
    let panels = 24 * PANELS_PER_SD;
    let half = 0.5 * g.sd / PANELS_PER_SD as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = g.mean + g.sd * (-12.0 + (p as f64 + 0.5) / PANELS_PER_SD as f64);
        for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
            let x = mid + half * t;
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::Evaluation { abscissa: x });
            }
            acc += w * half * v * g.pdf(x);
        }
    }
    Ok(acc)
}

/// Gauss-Legendre integral of f over [a, b] with a single n-node panel.
pub fn legendre_integral<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let rule = legendre_rule(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&t, &w)| w * f(mid + half * t))
        .sum::<f64>()
        * half
}

/// Adaptive Gauss-Legendre on [a, b]: an interval is accepted when its
/// 10-node value agrees with the sum over its halves to within `tol`
/// (scaled by the interval's share of [a, b]).
pub fn adaptive_legendre<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn go<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let coarse = legendre_integral(f, a, b, 10);
        let left = legendre_integral(f, a, m, 10);
        let right = legendre_integral(f, m, b, 10);
        if depth >= 40 || (left + right - coarse).abs() <= tol * (b - a) / whole {
            left + right
        } else {
            go(f, a, m, whole, tol, depth + 1) + go(f, m, b, whole, tol, depth + 1)
        }
    }
    if b <= a {
        return 0.0;
    }
    go(f, a, b, b - a, tol, 0)
}

/// Composite Gauss-Legendre integral of f(x) * density_g(x) over [lo, hi],
/// clipped to mean +- 12 sd. Panels are at most one sd wide.
pub fn gaussian_region_integral<F: Fn(f64) -> f64>(f: F, g: &GaussianSpec, lo: f64, hi: f64) -> f64 {
    let a = lo.max(g.mean - 12.0 * g.sd);
    let b = hi.min(g.mean + 12.0 * g.sd);
    if b <= a {
        return 0.0;
    }
    let panels = ((b - a) / g.sd).ceil().max(1.0) as usize;
    let width = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let p0 = a + k as f64 * width;
            legendre_integral(|x| f(x) * g.pdf(x), p0, p0 + width, 20)
        })
        .sum()
}
