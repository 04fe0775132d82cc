//! Deterministic quadrature: Gauss–Legendre rules, globally adaptive
//! Gauss–Kronrod (7/15) for vector-valued integrands, iterated box
//! integration, and the region-doubling divergence detector.

use serde::Serialize;

use crate::{DivergenceReport, Error, Result};

/// Integral value with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadValue {
    pub value: f64,
    pub error: f64,
}

impl QuadValue {
    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-8, rel: 1e-10 }
    }
}

impl Tolerance {
    pub fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

fn gk15<F>(f: &F, a: f64, b: f64, m: usize, scratch: &mut [f64]) -> Segment
where
    F: Fn(f64, &mut [f64]),
{
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = vec![0.0; m];
    let mut gauss = vec![0.0; m];
    for (k, &x) in XGK.iter().enumerate() {
        let nodes: &[f64] = if x == 0.0 { &[0.0] } else { &[-1.0, 1.0] };
        for &s in nodes {
            scratch.iter_mut().for_each(|v| *v = 0.0);
            f(centre + s * half * x, scratch);
            for i in 0..m {
                kron[i] += WGK[k] * scratch[i];
                if k % 2 == 1 {
                    gauss[i] += WG[k / 2] * scratch[i];
                }
            }
        }
    }
    let mut error: f64 = 0.0;
    for i in 0..m {
        kron[i] *= half;
        gauss[i] *= half;
        error = error.max((kron[i] - gauss[i]).abs());
    }
    Segment { a, b, value: kron, error }
}

/// Globally adaptive Gauss–Kronrod integration of an `m`-vector integrand on
/// `[a, b]`. The error target applies to the largest component.
pub fn adaptive_vec<F>(f: F, m: usize, a: f64, b: f64, tol: Tolerance) -> (Vec<f64>, f64)
where
    F: Fn(f64, &mut [f64]),
{
    if a == b {
        return (vec![0.0; m], 0.0);
    }
    const MAX_SEGMENTS: usize = 2000;
    let mut scratch = vec![0.0; m];
    let mut segments = vec![gk15(&f, a, b, m, &mut scratch)];
    loop {
        let mut total = vec![0.0; m];
        let mut err = 0.0;
        for s in &segments {
            for i in 0..m {
                total[i] += s.value[i];
            }
            err += s.error;
        }
        let scale = total.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if err <= tol.target(scale) || segments.len() >= MAX_SEGMENTS {
            return (total, err);
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("non-empty");
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            // cannot split further; keep the segment and give up refining
            segments.push(s);
            let mut total = vec![0.0; m];
            let mut err = 0.0;
            for s in &segments {
                for i in 0..m {
                    total[i] += s.value[i];
                }
                err += s.error;
            }
            return (total, err);
        }
        segments.push(gk15(&f, s.a, mid, m, &mut scratch));
        segments.push(gk15(&f, mid, s.b, m, &mut scratch));
    }
}

pub fn adaptive<F>(f: F, a: f64, b: f64, tol: Tolerance) -> QuadValue
where
    F: Fn(f64) -> f64,
{
    let (v, e) = adaptive_vec(|x, out| out[0] = f(x), 1, a, b, tol);
    QuadValue { value: v[0], error: e }
}

/// Iterated adaptive integration of an `m`-vector integrand over the box
/// `[lower, upper]`; dimension 0 is the outermost.
pub fn integrate_box_vec<F>(f: &F, m: usize, lower: &[f64], upper: &[f64], tol: Tolerance) -> (Vec<f64>, f64)
where
    F: Fn(&[f64], &mut [f64]),
{
    assert_eq!(lower.len(), upper.len());
    box_rec(f, m, lower, upper, tol, &[])
}

fn box_rec<F>(f: &F, m: usize, lower: &[f64], upper: &[f64], tol: Tolerance, prefix: &[f64]) -> (Vec<f64>, f64)
where
    F: Fn(&[f64], &mut [f64]),
{
    let axis = prefix.len();
    let with = |x: f64| {
        let mut p = prefix.to_vec();
        p.push(x);
        p
    };
    if axis + 1 == lower.len() {
        return adaptive_vec(|x, out| f(&with(x), out), m, lower[axis], upper[axis], tol);
    }
    let inner_tol = Tolerance { abs: tol.abs * 0.1, rel: tol.rel * 0.1 };
    let inner_err = std::cell::Cell::new(0.0f64);
    let (v, e) = adaptive_vec(
        |x, out| {
            let (vals, err) = box_rec(f, m, lower, upper, inner_tol, &with(x));
            inner_err.set(inner_err.get().max(err));
            out.copy_from_slice(&vals);
        },
        m,
        lower[axis],
        upper[axis],
        tol,
    );
    (v, e + (upper[axis] - lower[axis]) * inner_err.get())
}

pub fn integrate_box<F>(f: F, lower: &[f64], upper: &[f64], tol: Tolerance) -> QuadValue
where
    F: Fn(&[f64]) -> f64,
{
    let (v, e) = integrate_box_vec(&|x: &[f64], out: &mut [f64]| out[0] = f(x), 1, lower, upper, tol);
    QuadValue { value: v[0], error: e }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule on `[a, b]`: `panels` equal panels of
/// `order` nodes each. Returns `(x, w)` pairs.
pub fn composite_rule(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (nodes, weights) = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * width;
        for (x, w) in nodes.iter().zip(&weights) {
            out.push((lo + 0.5 * width * (x + 1.0), 0.5 * width * w));
        }
    }
    out
}

/// Tensor product of per-axis rules; returns `(point, weight)` pairs.
pub fn tensor_rule(axes: &[Vec<(f64, f64)>]) -> Vec<(Vec<f64>, f64)> {
    let mut out = vec![(Vec::new(), 1.0)];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for (p, w) in &out {
            for &(x, wx) in axis {
                let mut q = p.clone();
                q.push(x);
                next.push((q, w * wx));
            }
        }
        out = next;
    }
    out
}

/// Settings of the region-doubling divergence detector.
#[derive(Debug, Clone, Copy)]
pub struct DoublingRule {
    /// Relative growth per doubling that counts towards divergence.
    pub growth: f64,
    /// Number of consecutive growing doublings that declares divergence.
    pub consecutive: usize,
    pub max_doublings: usize,
}

impl Default for DoublingRule {
    fn default() -> Self {
        Self { growth: 0.10, consecutive: 4, max_doublings: 40 }
    }
}

/// Integrates over a family of nested regions indexed by half-width, doubling
/// the half-width from `r0` until the estimate settles. The integral is
/// declared divergent when `rule.consecutive` successive doublings each grow
/// the estimate by more than `rule.growth` (relative).
pub fn doubling_integral<F>(
    mut region_integral: F,
    r0: f64,
    tol: Tolerance,
    rule: DoublingRule,
    context: &str,
) -> Result<QuadValue>
where
    F: FnMut(f64) -> QuadValue,
{
    let mut r = r0;
    let mut prev = region_integral(r);
    let mut history = vec![(r, prev.value)];
    let mut streak = 0usize;
    for _ in 0..rule.max_doublings {
        r *= 2.0;
        let next = region_integral(r);
        history.push((r, next.value));
        let change = next.value - prev.value;
        let growth = if prev.value.abs() > 0.0 {
            change / prev.value.abs()
        } else if change > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if growth > rule.growth {
            streak += 1;
            if streak >= rule.consecutive {
                return Err(Error::Divergent(DivergenceReport { context: context.to_string(), history }));
            }
        } else {
            streak = 0;
        }
        if !next.value.is_finite() {
            return Err(Error::Divergent(DivergenceReport { context: context.to_string(), history }));
        }
        if change.abs() <= tol.target(next.value) + next.error {
            return Ok(QuadValue { value: next.value, error: next.error + change.abs() });
        }
        prev = next;
    }
    Ok(QuadValue { value: prev.value, error: prev.error + (history[history.len() - 1].1 - history[history.len() - 2].1).abs() })
}
