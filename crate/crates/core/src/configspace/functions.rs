//! Catalog of compactly supported smooth test functions and vector fields.
//!
//! Every catalog member evaluates its value, gradient and Laplacian
//! analytically through [`Jet`], and reports a bounding box outside of which
//! all three vanish.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::Bounds;

/// Value, gradient and Laplacian at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub laplacian: f64,
}

impl Jet {
    pub fn zero(d: usize) -> Self {
        Self { value: 0.0, gradient: vec![0.0; d], laplacian: 0.0 }
    }

    fn scale(mut self, c: f64) -> Self {
        self.value *= c;
        self.gradient.iter_mut().for_each(|g| *g *= c);
        self.laplacian *= c;
        self
    }

    fn add(mut self, other: &Jet) -> Self {
        self.value += other.value;
        for (g, o) in self.gradient.iter_mut().zip(&other.gradient) {
            *g += o;
        }
        self.laplacian += other.laplacian;
        self
    }

    fn mul(&self, other: &Jet) -> Self {
        let dot: f64 = self.gradient.iter().zip(&other.gradient).map(|(a, b)| a * b).sum();
        Jet {
            value: self.value * other.value,
            gradient: self
                .gradient
                .iter()
                .zip(&other.gradient)
                .map(|(a, b)| self.value * b + other.value * a)
                .collect(),
            laplacian: self.value * other.laplacian + other.value * self.laplacian + 2.0 * dot,
        }
    }
}

/// Smooth compactly supported function on `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothTestFunction {
    /// `amplitude * exp(-1 / (1 - |x - center|^2 / radius^2))` inside the ball.
    Bump { center: Vec<f64>, radius: f64, amplitude: f64 },
    /// Smoothed indicator: equals `amplitude` on `[lower, upper]`, vanishes
    /// outside `[lower - ramp, upper + ramp]`.
    Plateau { lower: Vec<f64>, upper: Vec<f64>, ramp: f64, amplitude: f64 },
    Scaled { factor: f64, inner: Box<SmoothTestFunction> },
    Sum { terms: Vec<SmoothTestFunction> },
    Product { factors: Vec<SmoothTestFunction> },
}

impl SmoothTestFunction {
    pub fn bump(center: Vec<f64>, radius: f64, amplitude: f64) -> Self {
        assert!(radius > 0.0, "bump radius must be positive");
        Self::Bump { center, radius, amplitude }
    }

    pub fn plateau(lower: Vec<f64>, upper: Vec<f64>, ramp: f64, amplitude: f64) -> Self {
        assert!(ramp > 0.0, "plateau ramp must be positive");
        assert!(lower.iter().zip(&upper).all(|(a, b)| a <= b), "plateau bounds out of order");
        Self::Plateau { lower, upper, ramp, amplitude }
    }

    pub fn zero() -> Self {
        Self::Sum { terms: Vec::new() }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self::Scaled { factor, inner: Box::new(self) }
    }

    pub fn jet(&self, x: &[f64]) -> Jet {
        let d = x.len();
        match self {
            Self::Bump { center, radius, amplitude } => {
                let r2 = radius * radius;
                let dist2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                let u = dist2 / r2;
                if u >= 1.0 {
                    return Jet::zero(d);
                }
                let a = 1.0 / (1.0 - u);
                let g = amplitude * (-a).exp();
                let g1 = -g * a * a;
                let g2 = g * a.powi(4) - 2.0 * g * a.powi(3);
                Jet {
                    value: g,
                    gradient: x.iter().zip(center).map(|(xi, ci)| g1 * 2.0 * (xi - ci) / r2).collect(),
                    laplacian: g2 * 4.0 * u / r2 + g1 * 2.0 * d as f64 / r2,
                }
            }
            Self::Plateau { lower, upper, ramp, amplitude } => {
                let factors: Vec<[f64; 3]> = (0..d)
                    .map(|k| plateau_factor(x[k], lower[k], upper[k], *ramp))
                    .collect();
                let value = amplitude * factors.iter().map(|f| f[0]).product::<f64>();
                let others = |k: usize| -> f64 {
                    factors.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, f)| f[0]).product()
                };
                let gradient = (0..d).map(|k| amplitude * factors[k][1] * others(k)).collect();
                let laplacian = (0..d).map(|k| amplitude * factors[k][2] * others(k)).sum();
                Jet { value, gradient, laplacian }
            }
            Self::Scaled { factor, inner } => inner.jet(x).scale(*factor),
            Self::Sum { terms } => terms.iter().fold(Jet::zero(d), |acc, t| acc.add(&t.jet(x))),
            Self::Product { factors } => {
                let mut acc = Jet { value: 1.0, gradient: vec![0.0; d], laplacian: 0.0 };
                for f in factors {
                    acc = acc.mul(&f.jet(x));
                }
                acc
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::Bump { center, radius, amplitude } => {
                let dist2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                let u = dist2 / (radius * radius);
                if u >= 1.0 {
                    0.0
                } else {
                    amplitude * (-1.0 / (1.0 - u)).exp()
                }
            }
            Self::Plateau { lower, upper, ramp, amplitude } => {
                amplitude
                    * (0..x.len())
                        .map(|k| plateau_factor(x[k], lower[k], upper[k], *ramp)[0])
                        .product::<f64>()
            }
            Self::Scaled { factor, inner } => factor * inner.value(x),
            Self::Sum { terms } => terms.iter().map(|t| t.value(x)).sum(),
            Self::Product { factors } => factors.iter().map(|t| t.value(x)).product(),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.jet(x).gradient
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        self.jet(x).laplacian
    }

    /// Box outside of which the function and its derivatives vanish.
    pub fn support(&self) -> Bounds {
        match self {
            Self::Bump { center, radius, .. } => Bounds {
                lower: center.iter().map(|c| c - radius).collect(),
                upper: center.iter().map(|c| c + radius).collect(),
            },
            Self::Plateau { lower, upper, ramp, .. } => Bounds {
                lower: lower.iter().map(|a| a - ramp).collect(),
                upper: upper.iter().map(|b| b + ramp).collect(),
            },
            Self::Scaled { factor, inner } => {
                if *factor == 0.0 {
                    Bounds::empty()
                } else {
                    inner.support()
                }
            }
            Self::Sum { terms } => terms.iter().fold(Bounds::empty(), |acc, t| acc.hull(&t.support())),
            Self::Product { factors } => {
                let mut it = factors.iter();
                match it.next() {
                    None => Bounds::everywhere(),
                    Some(first) => it.fold(first.support(), |acc, t| acc.intersect(&t.support())),
                }
            }
        }
    }

    /// Upper bound on `sup |f|`.
    pub fn sup_bound(&self) -> f64 {
        match self {
            Self::Bump { amplitude, .. } => amplitude.abs() * (-1.0f64).exp(),
            Self::Plateau { amplitude, .. } => amplitude.abs(),
            Self::Scaled { factor, inner } => factor.abs() * inner.sup_bound(),
            Self::Sum { terms } => terms.iter().map(|t| t.sup_bound()).sum(),
            Self::Product { factors } => factors.iter().map(|t| t.sup_bound()).product(),
        }
    }

    /// Upper bound on the Lipschitz constant `sup |∇f|`.
    pub fn lipschitz_bound(&self, d: usize) -> f64 {
        match self {
            Self::Bump { radius, amplitude, .. } => amplitude.abs() * bump_slope_constant() / radius,
            Self::Plateau { ramp, amplitude, .. } => {
                amplitude.abs() * 2.0 * smoothstep_slope_constant() / ramp * (d as f64).sqrt()
            }
            Self::Scaled { factor, inner } => factor.abs() * inner.lipschitz_bound(d),
            Self::Sum { terms } => terms.iter().map(|t| t.lipschitz_bound(d)).sum(),
            Self::Product { factors } => (0..factors.len())
                .map(|j| {
                    factors[j].lipschitz_bound(d)
                        * factors
                            .iter()
                            .enumerate()
                            .filter(|(k, _)| *k != j)
                            .map(|(_, f)| f.sup_bound())
                            .product::<f64>()
                })
                .sum(),
        }
    }

    /// Conservative nonnegativity flag from the catalog structure.
    pub fn is_nonnegative(&self) -> bool {
        match self {
            Self::Bump { amplitude, .. } | Self::Plateau { amplitude, .. } => *amplitude >= 0.0,
            Self::Scaled { factor, inner } => *factor >= 0.0 && inner.is_nonnegative(),
            Self::Sum { terms } => terms.iter().all(|t| t.is_nonnegative()),
            Self::Product { factors } => factors.iter().all(|t| t.is_nonnegative()),
        }
    }
}

fn psi(t: f64) -> [f64; 3] {
    if t <= 0.0 {
        return [0.0; 3];
    }
    let v = (-1.0 / t).exp();
    let t2 = t * t;
    [v, v / t2, v * (1.0 / (t2 * t2) - 2.0 / (t2 * t))]
}

/// Smooth step `S(t)` rising from 0 at `t <= 0` to 1 at `t >= 1`, with first
/// and second derivatives.
pub(crate) fn smoothstep(t: f64) -> [f64; 3] {
    if t <= 0.0 {
        return [0.0; 3];
    }
    if t >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    let [a, a1, a2] = psi(t);
    let [b, b1, b2] = psi(1.0 - t);
    // d/dt psi(1 - t) = -psi'(1 - t)
    let (b1, b2) = (-b1, b2);
    let s = a + b;
    let num = a1 * b - a * b1;
    let num1 = a2 * b - a * b2;
    [a / s, num / (s * s), num1 / (s * s) - 2.0 * num * (a1 + b1) / (s * s * s)]
}

fn plateau_factor(t: f64, a: f64, b: f64, ramp: f64) -> [f64; 3] {
    let [l, l1, l2] = smoothstep((t - (a - ramp)) / ramp);
    let [h, h1, h2] = smoothstep(((b + ramp) - t) / ramp);
    let (l1, l2) = (l1 / ramp, l2 / (ramp * ramp));
    let (h1, h2) = (-h1 / ramp, h2 / (ramp * ramp));
    [l * h, l1 * h + l * h1, l2 * h + 2.0 * l1 * h1 + l * h2]
}

fn grid_max(f: impl Fn(f64) -> f64) -> f64 {
    let n = 200_000;
    (1..n).map(|i| f(i as f64 / n as f64)).fold(0.0, f64::max)
}

// sup over the unit bump profile of |d/dr exp(-1/(1-r^2))|, with a margin
fn bump_slope_constant() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        1.01 * grid_max(|r| {
            let u = r * r;
            let a = 1.0 / (1.0 - u);
            2.0 * r * a * a * (-a).exp()
        })
    })
}

fn smoothstep_slope_constant() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| 1.01 * grid_max(|t| smoothstep(t)[1].abs()))
}

/// Compactly supported smooth vector field with one catalog function per
/// component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothVectorField {
    pub components: Vec<SmoothTestFunction>,
}

impl SmoothVectorField {
    pub fn new(components: Vec<SmoothTestFunction>) -> Self {
        Self { components }
    }

    pub fn zero(d: usize) -> Self {
        Self { components: vec![SmoothTestFunction::zero(); d] }
    }

    /// `v(x) = b(x) u`.
    pub fn along(direction: &[f64], profile: SmoothTestFunction) -> Self {
        Self {
            components: direction.iter().map(|&u| profile.clone().scaled(u)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.value(x)).collect()
    }

    pub fn divergence(&self, x: &[f64]) -> f64 {
        self.components.iter().enumerate().map(|(k, c)| c.gradient(x)[k]).sum()
    }

    /// Value and divergence together.
    pub fn value_div(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let mut value = Vec::with_capacity(self.dim());
        let mut div = 0.0;
        for (k, c) in self.components.iter().enumerate() {
            let j = c.jet(x);
            value.push(j.value);
            div += j.gradient[k];
        }
        (value, div)
    }

    pub fn support(&self) -> Bounds {
        self.components.iter().fold(Bounds::empty(), |acc, c| acc.hull(&c.support()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { components: self.components.iter().map(|f| f.clone().scaled(c)).collect() }
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| SmoothTestFunction::Sum { terms: vec![a.clone(), b.clone()] })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: &SmoothTestFunction, x: &[f64]) {
        let h = 1e-5;
        let j = f.jet(x);
        let mut lap = 0.0;
        for k in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let (fp, fm) = (f.value(&xp), f.value(&xm));
            let g = (fp - fm) / (2.0 * h);
            assert!((g - j.gradient[k]).abs() <= 1e-6 * j.gradient[k].abs().max(1.0), "grad {g} vs {}", j.gradient[k]);
            let h2 = 1e-4;
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h2;
            xm[k] -= h2;
            lap += (f.value(&xp) - 2.0 * f.value(x) + f.value(&xm)) / (h2 * h2);
        }
        assert!((lap - j.laplacian).abs() <= 1e-4 * j.laplacian.abs().max(1.0), "lap {lap} vs {}", j.laplacian);
        assert!((f.value(x) - j.value).abs() < 1e-15);
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let f = SmoothTestFunction::bump(vec![0.3, -0.2], 1.5, 2.0);
        for x in [[0.0, 0.0], [0.9, 0.4], [-0.7, -1.0], [1.2, -0.1]] {
            fd_check(&f, &x);
        }
    }

    #[test]
    fn plateau_derivatives_match_finite_differences() {
        let f = SmoothTestFunction::plateau(vec![0.0], vec![1.0], 0.5, 1.3);
        for x in [-0.4, -0.25, -0.1, 0.5, 1.2, 1.45] {
            fd_check(&f, &[x]);
        }
        assert_eq!(f.value(&[0.5]), 1.3);
        assert_eq!(f.value(&[1.6]), 0.0);
    }

    #[test]
    fn products_and_sums_match_finite_differences() {
        let a = SmoothTestFunction::bump(vec![0.0], 1.0, 1.0);
        let b = SmoothTestFunction::bump(vec![0.4], 0.8, 3.0);
        let p = SmoothTestFunction::Product { factors: vec![a.clone(), b.clone()] };
        let s = SmoothTestFunction::Sum { terms: vec![a, b.scaled(-0.5)] };
        for x in [-0.3, 0.1, 0.55] {
            fd_check(&p, &[x]);
            fd_check(&s, &[x]);
        }
        assert_eq!(p.support().lower, vec![-0.4]);
        assert!((s.support().upper[0] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn vanishes_outside_support() {
        let f = SmoothTestFunction::bump(vec![1.0], 0.5, 1.0);
        let j = f.jet(&[1.6]);
        assert_eq!(j, Jet::zero(1));
    }

    #[test]
    fn lipschitz_bound_dominates_gradient() {
        let f = SmoothTestFunction::bump(vec![0.0], 0.7, 1.0);
        let l = f.lipschitz_bound(1);
        let worst = (0..10_000)
            .map(|i| f.gradient(&[-0.7 + 1.4 * i as f64 / 10_000.0])[0].abs())
            .fold(0.0, f64::max);
        assert!(worst <= l && worst > 0.9 * l);
    }

    #[test]
    fn divergence_of_vector_field() {
        let v = SmoothVectorField::new(vec![
            SmoothTestFunction::bump(vec![0.0, 0.0], 1.0, 1.0),
            SmoothTestFunction::bump(vec![0.2, 0.0], 1.0, -2.0),
        ]);
        let x = [0.3, 0.1];
        let h = 1e-6;
        let fd = (v.components[0].value(&[x[0] + h, x[1]]) - v.components[0].value(&[x[0] - h, x[1]])) / (2.0 * h)
            + (v.components[1].value(&[x[0], x[1] + h]) - v.components[1].value(&[x[0], x[1] - h])) / (2.0 * h);
        assert!((v.divergence(&x) - fd).abs() < 1e-8);
    }
}
