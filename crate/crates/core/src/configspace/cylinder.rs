//! Local smooth functionals `F(γ) = f(⟨φ_1, γ⟩, …, ⟨φ_k, γ⟩)`.

use serde::{Deserialize, Serialize};

use super::{Bounds, Configuration, SmoothTestFunction};
use crate::{Error, Result};

/// Scalar profile with analytic first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Identity,
    Tanh,
    /// `exp(-t^2)`
    Gauss,
    Sin,
    Square,
}

impl Profile {
    pub fn eval(self, t: f64) -> [f64; 3] {
        match self {
            Profile::Identity => [t, 1.0, 0.0],
            Profile::Tanh => {
                let v = t.tanh();
                let s = 1.0 - v * v;
                [v, s, -2.0 * v * s]
            }
            Profile::Gauss => {
                let v = (-t * t).exp();
                [v, -2.0 * t * v, (4.0 * t * t - 2.0) * v]
            }
            Profile::Sin => [t.sin(), t.cos(), -t.sin()],
            Profile::Square => [t * t, 2.0 * t, 2.0],
        }
    }
}

/// Value, gradient and Hessian (row-major `k × k`) of an outer function.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterJet {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<f64>,
}

impl OuterJet {
    fn constant(k: usize, value: f64) -> Self {
        Self { value, gradient: vec![0.0; k], hessian: vec![0.0; k * k] }
    }
}

/// Smooth function `R^k → R` built from a small expression catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OuterFunction {
    Constant { value: f64 },
    /// `w · t + bias`
    Linear { weights: Vec<f64>, bias: f64 },
    /// `profile(inner(t))`
    Apply { profile: Profile, inner: Box<OuterFunction> },
    Scaled { factor: f64, inner: Box<OuterFunction> },
    Sum { terms: Vec<OuterFunction> },
    Product { factors: Vec<OuterFunction> },
}

impl OuterFunction {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    /// `t_i`
    pub fn coordinate(k: usize, i: usize) -> Self {
        let mut weights = vec![0.0; k];
        weights[i] = 1.0;
        Self::Linear { weights, bias: 0.0 }
    }

    pub fn linear(weights: Vec<f64>, bias: f64) -> Self {
        Self::Linear { weights, bias }
    }

    pub fn apply(profile: Profile, inner: OuterFunction) -> Self {
        Self::Apply { profile, inner: Box::new(inner) }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self::Scaled { factor, inner: Box::new(self) }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Self::Constant { .. } => true,
            Self::Linear { weights, .. } => weights.iter().all(|w| *w == 0.0),
            Self::Apply { inner, .. } => inner.is_constant(),
            Self::Scaled { factor, inner } => *factor == 0.0 || inner.is_constant(),
            Self::Sum { terms } => terms.iter().all(|t| t.is_constant()),
            Self::Product { factors } => factors.iter().all(|t| t.is_constant()),
        }
    }

    pub fn value(&self, t: &[f64]) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Linear { weights, bias } => bias + weights.iter().zip(t).map(|(w, x)| w * x).sum::<f64>(),
            Self::Apply { profile, inner } => profile.eval(inner.value(t))[0],
            Self::Scaled { factor, inner } => factor * inner.value(t),
            Self::Sum { terms } => terms.iter().map(|f| f.value(t)).sum(),
            Self::Product { factors } => factors.iter().map(|f| f.value(t)).product(),
        }
    }

    pub fn jet(&self, t: &[f64]) -> OuterJet {
        let k = t.len();
        match self {
            Self::Constant { value } => OuterJet::constant(k, *value),
            Self::Linear { weights, .. } => {
                let mut gradient = vec![0.0; k];
                gradient[..weights.len()].copy_from_slice(weights);
                OuterJet { value: self.value(t), gradient, hessian: vec![0.0; k * k] }
            }
            Self::Apply { profile, inner } => {
                let g = inner.jet(t);
                let [p0, p1, p2] = profile.eval(g.value);
                let mut hessian = vec![0.0; k * k];
                for i in 0..k {
                    for j in 0..k {
                        hessian[i * k + j] = p2 * g.gradient[i] * g.gradient[j] + p1 * g.hessian[i * k + j];
                    }
                }
                OuterJet { value: p0, gradient: g.gradient.iter().map(|v| p1 * v).collect(), hessian }
            }
            Self::Scaled { factor, inner } => {
                let g = inner.jet(t);
                OuterJet {
                    value: factor * g.value,
                    gradient: g.gradient.iter().map(|v| factor * v).collect(),
                    hessian: g.hessian.iter().map(|v| factor * v).collect(),
                }
            }
            Self::Sum { terms } => {
                let mut acc = OuterJet::constant(k, 0.0);
                for f in terms {
                    let g = f.jet(t);
                    acc.value += g.value;
                    acc.gradient.iter_mut().zip(&g.gradient).for_each(|(a, b)| *a += b);
                    acc.hessian.iter_mut().zip(&g.hessian).for_each(|(a, b)| *a += b);
                }
                acc
            }
            Self::Product { factors } => {
                let mut acc = OuterJet::constant(k, 1.0);
                for f in factors {
                    let g = f.jet(t);
                    let mut hessian = vec![0.0; k * k];
                    for i in 0..k {
                        for j in 0..k {
                            hessian[i * k + j] = acc.hessian[i * k + j] * g.value
                                + acc.value * g.hessian[i * k + j]
                                + acc.gradient[i] * g.gradient[j]
                                + acc.gradient[j] * g.gradient[i];
                        }
                    }
                    let gradient =
                        (0..k).map(|i| acc.gradient[i] * g.value + acc.value * g.gradient[i]).collect();
                    acc = OuterJet { value: acc.value * g.value, gradient, hessian };
                }
                acc
            }
        }
    }
}

/// Cylinder function with catalog outer and inner functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderFunction {
    pub outer: OuterFunction,
    pub inner: Vec<SmoothTestFunction>,
}

impl CylinderFunction {
    pub fn new(outer: OuterFunction, inner: Vec<SmoothTestFunction>) -> Self {
        Self { outer, inner }
    }

    /// `F(γ) = c`.
    pub fn constant(c: f64) -> Self {
        Self { outer: OuterFunction::constant(c), inner: Vec::new() }
    }

    /// `F(γ) = profile(⟨φ, γ⟩)`.
    pub fn of_pairing(profile: Profile, phi: SmoothTestFunction) -> Self {
        Self { outer: OuterFunction::apply(profile, OuterFunction::coordinate(1, 0)), inner: vec![phi] }
    }

    pub fn k(&self) -> usize {
        self.inner.len()
    }

    pub fn is_constant(&self) -> bool {
        self.outer.is_constant()
    }

    /// Union of inner supports; `F` only depends on points inside it.
    pub fn support(&self) -> Bounds {
        self.inner.iter().fold(Bounds::empty(), |acc, f| acc.hull(&f.support()))
    }

    /// `(⟨φ_1, γ⟩, …, ⟨φ_k, γ⟩)` over an iterator of points.
    pub fn pairings<'a, I>(&self, points: I) -> Vec<f64>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut t = vec![0.0; self.k()];
        let supports: Vec<Bounds> = self.inner.iter().map(|f| f.support()).collect();
        for p in points {
            for (i, f) in self.inner.iter().enumerate() {
                if supports[i].contains(p) {
                    t[i] += f.value(p);
                }
            }
        }
        t
    }

    pub fn pairings_config(&self, g: &Configuration) -> Vec<f64> {
        let mut t = vec![0.0; self.k()];
        for a in g.atoms() {
            for (i, f) in self.inner.iter().enumerate() {
                t[i] += a.multiplicity as f64 * f.value(a.location.coords());
            }
        }
        t
    }

    pub fn eval_pairings(&self, t: &[f64]) -> f64 {
        self.outer.value(t)
    }

    pub fn eval(&self, g: &Configuration) -> f64 {
        self.eval_pairings(&self.pairings_config(g))
    }

    /// Gradient with respect to one point at `y` of a configuration whose
    /// pairings are `t`.
    pub fn point_gradient(&self, t: &[f64], y: &[f64]) -> Vec<f64> {
        let jet = self.outer.jet(t);
        self.point_gradient_with(&jet, y)
    }

    pub fn point_gradient_with(&self, jet: &OuterJet, y: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; y.len()];
        for (i, f) in self.inner.iter().enumerate() {
            if jet.gradient[i] == 0.0 || !f.support().contains(y) {
                continue;
            }
            for (g, d) in grad.iter_mut().zip(f.gradient(y)) {
                *g += jet.gradient[i] * d;
            }
        }
        grad
    }

    /// Laplacian with respect to one point at `y`.
    pub fn point_laplacian(&self, t: &[f64], y: &[f64]) -> f64 {
        let jet = self.outer.jet(t);
        self.point_laplacian_with(&jet, y)
    }

    pub fn point_laplacian_with(&self, jet: &OuterJet, y: &[f64]) -> f64 {
        let k = self.k();
        let jets: Vec<_> = self.inner.iter().map(|f| f.jet(y)).collect();
        let mut out = 0.0;
        for i in 0..k {
            out += jet.gradient[i] * jets[i].laplacian;
            for j in 0..k {
                let dot: f64 = jets[i].gradient.iter().zip(&jets[j].gradient).map(|(a, b)| a * b).sum();
                out += jet.hessian[i * k + j] * dot;
            }
        }
        out
    }

    fn check_atom(&self, g: &Configuration, x: &[f64]) -> Result<()> {
        if g.multiplicity_at(x) == 0 {
            return Err(Error::NotAnAtom);
        }
        Ok(())
    }

    /// `∇_x F(γ)` for an atom `x` of `γ`.
    pub fn gradient_at(&self, g: &Configuration, x: &[f64]) -> Result<Vec<f64>> {
        self.check_atom(g, x)?;
        Ok(self.point_gradient(&self.pairings_config(g), x))
    }

    /// `Δ_x F(γ)` for an atom `x` of `γ`.
    pub fn laplacian_at(&self, g: &Configuration, x: &[f64]) -> Result<f64> {
        self.check_atom(g, x)?;
        Ok(self.point_laplacian(&self.pairings_config(g), x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::Window;

    fn sample_function() -> CylinderFunction {
        let phi1 = SmoothTestFunction::bump(vec![0.3], 1.2, 2.0);
        let phi2 = SmoothTestFunction::bump(vec![-0.2], 0.9, 1.5);
        let outer = OuterFunction::Sum {
            terms: vec![
                OuterFunction::apply(Profile::Tanh, OuterFunction::linear(vec![0.8, -0.4], 0.1)),
                OuterFunction::Product {
                    factors: vec![
                        OuterFunction::apply(Profile::Gauss, OuterFunction::coordinate(2, 0)),
                        OuterFunction::apply(Profile::Sin, OuterFunction::coordinate(2, 1)),
                    ],
                },
            ],
        };
        CylinderFunction::new(outer, vec![phi1, phi2])
    }

    fn moved(points: &[f64], i: usize, h: f64) -> Configuration {
        let mut p = points.to_vec();
        p[i] += h;
        Configuration::from_points(p.chunks(1), Window::whole(1))
    }

    #[test]
    fn profiles_match_finite_differences() {
        let h = 1e-5;
        for p in [Profile::Identity, Profile::Tanh, Profile::Gauss, Profile::Sin, Profile::Square] {
            for t in [-1.3, -0.2, 0.0, 0.7, 2.1] {
                let [_, d1, d2] = p.eval(t);
                let fd1 = (p.eval(t + h)[0] - p.eval(t - h)[0]) / (2.0 * h);
                let fd2 = (p.eval(t + h)[1] - p.eval(t - h)[1]) / (2.0 * h);
                assert!((d1 - fd1).abs() < 1e-8, "{p:?} {t}");
                assert!((d2 - fd2).abs() < 1e-8, "{p:?} {t}");
            }
        }
    }

    #[test]
    fn outer_hessian_matches_finite_differences() {
        let f = sample_function().outer;
        let t = [0.4, -0.7];
        let jet = f.jet(&t);
        let h = 1e-5;
        for i in 0..2 {
            let mut tp = t;
            let mut tm = t;
            tp[i] += h;
            tm[i] -= h;
            let g = (f.value(&tp) - f.value(&tm)) / (2.0 * h);
            assert!((g - jet.gradient[i]).abs() < 1e-8);
            let (gp, gm) = (f.jet(&tp), f.jet(&tm));
            for j in 0..2 {
                let hij = (gp.gradient[j] - gm.gradient[j]) / (2.0 * h);
                assert!((hij - jet.hessian[i * 2 + j]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn gradient_and_laplacian_match_finite_differences() {
        let f = sample_function();
        let points = [0.1, 0.5, -0.6, 3.0];
        let g = Configuration::from_points(points.chunks(1), Window::whole(1));
        let h = 1e-5;
        for (i, x) in points.iter().enumerate() {
            let grad = f.gradient_at(&g, &[*x]).unwrap()[0];
            let fp = f.eval(&moved(&points, i, h));
            let fm = f.eval(&moved(&points, i, -h));
            let fd = (fp - fm) / (2.0 * h);
            assert!((grad - fd).abs() <= 1e-6 * grad.abs().max(1e-3), "{grad} vs {fd}");
            let lap = f.laplacian_at(&g, &[*x]).unwrap();
            let fd2 = (fp - 2.0 * f.eval(&g) + fm) / (h * h);
            assert!((lap - fd2).abs() <= 1e-3 * lap.abs().max(1.0), "{lap} vs {fd2}");
        }
    }

    #[test]
    fn linear_outer_gives_inner_gradient() {
        let phi = SmoothTestFunction::bump(vec![0.0], 1.0, 1.0);
        let f = CylinderFunction::of_pairing(Profile::Identity, phi.clone());
        let g = Configuration::from_points([0.3f64].chunks(1), Window::whole(1));
        assert_eq!(f.gradient_at(&g, &[0.3]).unwrap(), phi.gradient(&[0.3]));
    }

    #[test]
    fn locality_and_atom_errors() {
        let f = CylinderFunction::of_pairing(Profile::Tanh, SmoothTestFunction::bump(vec![0.0], 1.0, 1.0));
        let g = Configuration::from_points([5.0f64].chunks(1), Window::whole(1));
        assert_eq!(f.gradient_at(&g, &[5.0]).unwrap(), vec![0.0]);
        assert_eq!(f.gradient_at(&g, &[1.0]), Err(Error::NotAnAtom));
        assert_eq!(f.eval(&g), 0.0);
    }
}
