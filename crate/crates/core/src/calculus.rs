//! Logarithmic derivatives of `λ*`, Γ-gradients, integration by parts at the
//! `λ*`, `π_{λ*}` and cluster-measure levels, and the Dirichlet form against
//! its generator.
//!
//! Functionals of the cluster configuration are lifted as `𝓘F = F ∘ 𝔭`; the
//! gradient of `𝓘F` in a cluster coordinate `y_i` is the point gradient of `F`
//! at `y_i`, so coordinates projecting onto one merged atom each receive that
//! atom's gradient.

use serde::{Deserialize, Serialize};

use crate::configspace::{
    project_lifted_in, shift_cluster, Bounds, ClusterVector, Configuration, CylinderFunction, LiftedConfiguration,
    OuterJet, SmoothTestFunction, SmoothVectorField, Window,
};
use crate::measures::{gaussian_beta, lambda_star_s_grad_quadrature, ClusterProcessModel, LambdaStarMethod};
use crate::quasiinv::ZERO_DENSITY_FLOOR;
use crate::sampler::LiftedSampler;
use crate::stats::{Estimate, McRunner, Moments};
use crate::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `∇^Γ F(γ)`: the gradient at each atom, omitting atoms where it vanishes
/// because they lie outside every inner support.
pub fn gamma_gradient(f: &CylinderFunction, g: &Configuration) -> Vec<(Vec<f64>, Vec<f64>)> {
    let supp = f.support();
    let jet = f.outer.jet(&f.pairings_config(g));
    g.atoms()
        .iter()
        .filter(|a| supp.contains(a.location.coords()))
        .map(|a| (a.location.0.clone(), f.point_gradient_with(&jet, a.location.coords())))
        .collect()
}

/// `∇_v F(γ) = Σ_{x ∈ γ} ∇_x F(γ) · v(x)`, counting multiplicities.
pub fn directional_derivative(f: &CylinderFunction, g: &Configuration, v: &SmoothVectorField) -> f64 {
    let vs = v.support();
    let supp = f.support();
    let jet = f.outer.jet(&f.pairings_config(g));
    g.atoms()
        .iter()
        .filter(|a| vs.contains(a.location.coords()) && supp.contains(a.location.coords()))
        .map(|a| {
            let x = a.location.coords();
            a.multiplicity as f64 * dot(&f.point_gradient_with(&jet, x), &v.value(x))
        })
        .sum()
}

/// `β(ȳ) = ∇ log s_n(ȳ)` as an `n·d` vector; zero where `s_n` is below the
/// density floor.
pub fn beta_vector(model: &ClusterProcessModel, y: &ClusterVector) -> Result<Vec<f64>> {
    if y.dim() != model.dim {
        return Err(Error::DimensionMismatch { expected: model.dim, got: y.dim() });
    }
    if y.is_empty() {
        return Err(Error::VacuousCluster);
    }
    if model.resolved_method() == LambdaStarMethod::GaussianClosedForm {
        let sigma = model
            .law
            .gaussian_sigma()
            .ok_or_else(|| Error::ModelMismatch("closed form needs Gaussian clusters".into()))?;
        return Ok(gaussian_beta(sigma, y.coords()));
    }
    let (s, grad) = lambda_star_s_grad_quadrature(model, y)?;
    if s.value < ZERO_DENSITY_FLOOR {
        return Ok(vec![0.0; grad.len()]);
    }
    Ok(grad.iter().map(|g| g / s.value).collect())
}

/// `β^{v̄}(ȳ) = Σ_i (β_i(ȳ) · v(y_i) + div v(y_i))`.
pub fn beta_along(model: &ClusterProcessModel, y: &ClusterVector, v: &SmoothVectorField) -> Result<f64> {
    let vs = v.support();
    if y.is_empty() || !y.meets(&vs) {
        return Ok(0.0);
    }
    let beta = beta_vector(model, y)?;
    let d = y.dim();
    let mut out = 0.0;
    for (i, p) in y.points().enumerate() {
        if !vs.contains(p) {
            continue;
        }
        let (val, div) = v.value_div(p);
        out += dot(&beta[i * d..(i + 1) * d], &val) + div;
    }
    Ok(out)
}

/// `B^{v̄}_{π_{λ*}}(γ̄) = Σ_{x̄ ∈ γ̄} β^{v̄}(x̄)`.
pub fn b_pi(model: &ClusterProcessModel, g: &LiftedConfiguration, v: &SmoothVectorField) -> Result<f64> {
    g.clusters().iter().map(|c| beta_along(model, c, v)).sum()
}

/// `V(γ)_x = Σ_i A_i(γ) v_i(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderVectorField {
    pub terms: Vec<(CylinderFunction, SmoothVectorField)>,
}

impl CylinderVectorField {
    pub fn new(terms: Vec<(CylinderFunction, SmoothVectorField)>) -> Self {
        Self { terms }
    }

    /// `V = 1 · v`.
    pub fn constant(v: SmoothVectorField) -> Self {
        Self { terms: vec![(CylinderFunction::constant(1.0), v)] }
    }

    pub fn support(&self) -> Bounds {
        self.terms.iter().fold(Bounds::empty(), |acc, (a, v)| acc.hull(&a.support()).hull(&v.support()))
    }

    pub fn value(&self, g: &Configuration, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (a, v) in &self.terms {
            let c = a.eval(g);
            for (o, vi) in out.iter_mut().zip(v.value(x)) {
                *o += c * vi;
            }
        }
        out
    }
}

/// The three terms of an integration-by-parts identity and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IbpReport {
    /// `∫ F ∇_v G`
    pub f_grad_g: Estimate,
    /// `∫ G ∇_v F`
    pub g_grad_f: Estimate,
    /// `∫ F G B^v`
    pub fg_b: Estimate,
    /// Sum of the three terms (zero in theory) with its paired SE.
    pub residual: Estimate,
}

impl IbpReport {
    fn from_moments(m: &Moments) -> Self {
        Self { f_grad_g: m.estimate(0), g_grad_f: m.estimate(1), fg_b: m.estimate(2), residual: m.linear(&[1.0, 1.0, 1.0]) }
    }

    fn zero() -> Self {
        let z = Estimate::exact(0.0);
        Self { f_grad_g: z, g_grad_f: z, fg_b: z, residual: z }
    }

    pub fn passes(&self, k: f64) -> bool {
        self.residual.within(0.0, k)
    }
}

/// `f̃(ȳ) = Σ_i f(y_i)` and `∇_{v̄} f̃(ȳ) = Σ_i ∇f(y_i) · v(y_i)`.
fn lift_sum(f: &SmoothTestFunction, v: &SmoothVectorField, y: &ClusterVector) -> (f64, f64) {
    let supp = f.support();
    let mut val = 0.0;
    let mut der = 0.0;
    for p in y.points().filter(|p| supp.contains(p)) {
        let jet = f.jet(p);
        val += jet.value;
        der += dot(&jet.gradient, &v.value(p));
    }
    (val, der)
}

/// `∫ f̃ ∇_{v̄} g̃ dλ* + ∫ g̃ ∇_{v̄} f̃ dλ* + ∫ f̃ g̃ β^{v̄} dλ*` for the sum lifts
/// `f̃, g̃` of base-space test functions, by Monte Carlo over centres on
/// `supp v ⊕ R_trunc` and clusters.
pub fn ibp_residual_lambda_star(
    model: &ClusterProcessModel,
    f: &SmoothTestFunction,
    g: &SmoothTestFunction,
    v: &SmoothVectorField,
    n_samples: usize,
    seed: u64,
) -> Result<IbpReport> {
    let eff = v.support().inflate(model.r_trunc()).intersect(&model.intensity.support());
    if eff.is_empty() {
        return Ok(IbpReport::zero());
    }
    let mass = model.intensity.box_mass(&eff.lower, &eff.upper).value;
    let m = McRunner::new(seed).try_run(n_samples, 3, |rng, row| {
        let mut x = vec![0.0; model.dim];
        model.intensity.sample_in(&eff, rng, &mut x);
        let y = model.law.sample(rng);
        if y.is_empty() {
            return Ok(());
        }
        let y = shift_cluster(&y, &x)?;
        let (fv, fd) = lift_sum(f, v, &y);
        let (gv, gd) = lift_sum(g, v, &y);
        row[0] = mass * fv * gd;
        row[1] = mass * gv * fd;
        if fv != 0.0 && gv != 0.0 {
            row[2] = mass * fv * gv * beta_along(model, &y, v)?;
        }
        Ok::<(), Error>(())
    })?;
    Ok(IbpReport::from_moments(&m))
}

/// Lifted evaluation of a cylinder function on one draw.
struct Lifted<'a> {
    f: &'a CylinderFunction,
    value: f64,
    jet: OuterJet,
}

impl<'a> Lifted<'a> {
    fn new(f: &'a CylinderFunction, g: &LiftedConfiguration) -> Self {
        let t = f.pairings(g.points());
        Self { f, value: f.outer.value(&t), jet: f.outer.jet(&t) }
    }

    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        self.f.point_gradient_with(&self.jet, y)
    }

    fn laplacian(&self, y: &[f64]) -> f64 {
        self.f.point_laplacian_with(&self.jet, y)
    }

    /// `Σ_{x̄ ∈ γ̄} Σ_i ∇_{y_i}(𝓘F) · v(y_i)`.
    fn along(&self, g: &LiftedConfiguration, v: &SmoothVectorField) -> f64 {
        let vs = v.support();
        let fs = self.f.support();
        g.points().filter(|p| vs.contains(p) && fs.contains(p)).map(|p| dot(&self.gradient(p), &v.value(p))).sum()
    }
}

fn window_of(model: &ClusterProcessModel, b: Bounds) -> Result<Window> {
    if b.is_empty() {
        return Window::new(vec![0.0; model.dim], vec![1.0; model.dim]);
    }
    Window::from_bounds(&b)
}

/// `E[F ∇_v G] + E[G ∇_v F] + E[F G B^v]` under the cluster measure, with all
/// three computed on one stream of `π_{λ*}` draws through the lifts `𝓘F`, `𝓘G`.
pub fn ibp_residual_mucl(
    model: &ClusterProcessModel,
    f: &CylinderFunction,
    g: &CylinderFunction,
    v: &SmoothVectorField,
    n_samples: usize,
    seed: u64,
) -> Result<IbpReport> {
    ibp_general(model, f, g, &CylinderVectorField::constant(v.clone()), n_samples, seed)
}

/// Integration by parts along a cylinder vector field, with
/// `B^V = Σ_i (A_i B^{v_i} + ∇_{v_i} A_i)`.
pub fn ibp_general(
    model: &ClusterProcessModel,
    f: &CylinderFunction,
    g: &CylinderFunction,
    field: &CylinderVectorField,
    n_samples: usize,
    seed: u64,
) -> Result<IbpReport> {
    let vs = field.terms.iter().fold(Bounds::empty(), |acc, (_, v)| acc.hull(&v.support()));
    if vs.is_empty() {
        return Ok(IbpReport::zero());
    }
    let k = window_of(model, f.support().hull(&g.support()).hull(&field.support()))?;
    let sampler = LiftedSampler::new(model, &k)?;
    let m = McRunner::new(seed).try_run(n_samples, 3, |rng, row| {
        let lifted = sampler.sample(rng);
        let lf = Lifted::new(f, &lifted);
        let lg = Lifted::new(g, &lifted);
        let mut b = 0.0;
        for (a, v) in &field.terms {
            let la = Lifted::new(a, &lifted);
            row[0] += la.value * lf.value * lg.along(&lifted, v);
            row[1] += la.value * lg.value * lf.along(&lifted, v);
            if lf.value != 0.0 && lg.value != 0.0 {
                b += la.value * b_pi(model, &lifted, v)? + la.along(&lifted, v);
            }
        }
        row[2] = lf.value * lg.value * b;
        Ok::<(), Error>(())
    })?;
    Ok(IbpReport::from_moments(&m))
}

fn carre_du_champ(lf: &Lifted<'_>, lg: &Lifted<'_>, g: &LiftedConfiguration) -> f64 {
    let sf = lf.f.support();
    let sg = lg.f.support();
    g.points().filter(|p| sf.contains(p) && sg.contains(p)).map(|p| dot(&lf.gradient(p), &lg.gradient(p))).fold(0.0, |a, b| a + b)
}

/// `E(F, G) = E[Σ_{x̄} ∇_{x̄}(𝓘F) · ∇_{x̄}(𝓘G)]`.
pub fn dirichlet_form(model: &ClusterProcessModel, f: &CylinderFunction, g: &CylinderFunction, n_samples: usize, seed: u64) -> Result<Estimate> {
    let k = window_of(model, f.support().hull(&g.support()))?;
    let sampler = LiftedSampler::new(model, &k)?;
    let m = McRunner::new(seed).run(n_samples, 1, |rng, row| {
        let lifted = sampler.sample(rng);
        row[0] = carre_du_champ(&Lifted::new(f, &lifted), &Lifted::new(g, &lifted), &lifted);
    });
    Ok(m.estimate(0))
}

/// `H(𝓘F)` split into its diffusive part `-Σ Δ` and drift part `-Σ β·∇`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorValue {
    pub diffusive: f64,
    pub drift: f64,
}

impl GeneratorValue {
    pub fn total(&self) -> f64 {
        self.diffusive + self.drift
    }
}

/// `(H𝓘F)(γ̄) = -Σ_{x̄ ∈ γ̄} (Δ_{x̄}(𝓘F) + ∇_{x̄}(𝓘F) · β(x̄))`.
pub fn generator_apply(model: &ClusterProcessModel, f: &CylinderFunction, g: &LiftedConfiguration) -> Result<GeneratorValue> {
    generator_lifted(model, &Lifted::new(f, g), g)
}

fn generator_lifted(model: &ClusterProcessModel, lf: &Lifted<'_>, g: &LiftedConfiguration) -> Result<GeneratorValue> {
    let supp = lf.f.support();
    let mut out = GeneratorValue { diffusive: 0.0, drift: 0.0 };
    if lf.f.is_constant() {
        return Ok(out);
    }
    let d = model.dim;
    for c in g.clusters().iter().filter(|c| c.meets(&supp)) {
        let beta = beta_vector(model, c)?;
        for (i, p) in c.points().enumerate() {
            if !supp.contains(p) {
                continue;
            }
            out.diffusive -= lf.laplacian(p);
            out.drift -= dot(&lf.gradient(p), &beta[i * d..(i + 1) * d]);
        }
    }
    Ok(out)
}

/// `E(F, G)` against `E[(HF) G]` on one stream of draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirichletReport {
    pub form: Estimate,
    pub generator: Estimate,
    pub diffusive: Estimate,
    pub drift: Estimate,
    pub residual: Estimate,
    /// Smallest per-draw value of `Σ ∇(𝓘F)·∇(𝓘F)` (nonnegative by construction).
    pub min_energy_f: f64,
}

impl DirichletReport {
    pub fn passes(&self, k: f64) -> bool {
        self.residual.within(0.0, k)
    }
}

pub fn dirichlet_vs_generator(
    model: &ClusterProcessModel,
    f: &CylinderFunction,
    g: &CylinderFunction,
    n_samples: usize,
    seed: u64,
) -> Result<DirichletReport> {
    let k = window_of(model, f.support().hull(&g.support()))?;
    let sampler = LiftedSampler::new(model, &k)?;
    let rows = McRunner::new(seed).map(n_samples, |rng, _| -> Result<[f64; 5]> {
        let lifted = sampler.sample(rng);
        let lf = Lifted::new(f, &lifted);
        let lg = Lifted::new(g, &lifted);
        let h = generator_lifted(model, &lf, &lifted)?;
        Ok([
            carre_du_champ(&lf, &lg, &lifted),
            h.total() * lg.value,
            h.diffusive * lg.value,
            h.drift * lg.value,
            carre_du_champ(&lf, &lf, &lifted),
        ])
    });
    let mut m = Moments::new(5);
    let mut min_energy_f = f64::INFINITY;
    for row in rows {
        let row = row?;
        min_energy_f = min_energy_f.min(row[4]);
        m.push(&row);
    }
    Ok(DirichletReport {
        form: m.estimate(0),
        generator: m.estimate(1),
        diffusive: m.estimate(2),
        drift: m.estimate(3),
        residual: m.linear(&[1.0, -1.0, 0.0, 0.0, 0.0]),
        min_energy_f,
    })
}

/// The lifted evaluation `(𝓘F)(γ̄)` restricted to a window.
pub fn lifted_eval(f: &CylinderFunction, g: &LiftedConfiguration, k: &Window) -> f64 {
    f.eval(&project_lifted_in(g, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::{OuterFunction, Profile};
    use crate::measures::lambda_star_s;
    use proptest::prelude::*;

    fn ex1() -> ClusterProcessModel {
        ClusterProcessModel::gaussian_lebesgue(vec![1.0], vec![0.1, 0.3, 0.3, 0.3]).unwrap()
    }

    fn bump(c: f64, r: f64, a: f64) -> SmoothTestFunction {
        SmoothTestFunction::bump(vec![c], r, a)
    }

    fn field(c: f64, r: f64, a: f64) -> SmoothVectorField {
        SmoothVectorField::along(&[1.0], bump(c, r, a))
    }

    fn fd_log_s(model: &ClusterProcessModel, y: &[f64], j: usize) -> f64 {
        let h = 1e-5;
        let mut a = y.to_vec();
        let mut b = y.to_vec();
        a[j] += h;
        b[j] -= h;
        let s = |c: &[f64]| lambda_star_s(model, &ClusterVector::scalar(c)).unwrap().value.ln();
        (s(&a) - s(&b)) / (2.0 * h)
    }

    #[test]
    fn beta_gaussian_examples() {
        let m = ex1();
        assert_eq!(beta_vector(&m, &ClusterVector::scalar(&[0.7])).unwrap(), vec![0.0]);
        let b = beta_vector(&m, &ClusterVector::scalar(&[1.3, -0.4])).unwrap();
        assert!((b[0] + 1.7 / 2.0).abs() <= 1e-8 && (b[1] - 1.7 / 2.0).abs() <= 1e-8);
    }

    #[test]
    fn beta_quadrature_matches_finite_differences() {
        let m = ex1().with_numerics(|n| n.lambda_star_method = LambdaStarMethod::Quadrature).unwrap();
        for y in [[0.2, -0.5, 1.1], [0.0, 0.0, 0.3], [-1.0, 2.0, 0.5]] {
            let b = beta_vector(&m, &ClusterVector::scalar(&y)).unwrap();
            for j in 0..3 {
                let fd = fd_log_s(&m, &y, j);
                assert!((b[j] - fd).abs() <= 1e-5 * fd.abs().max(1.0), "{y:?} {j}: {} vs {fd}", b[j]);
            }
        }
    }

    #[test]
    fn beta_along_examples() {
        let m = ex1();
        let y = ClusterVector::scalar(&[0.2, 0.9]);
        assert_eq!(beta_along(&m, &y, &SmoothVectorField::zero(1)).unwrap(), 0.0);
        assert_eq!(beta_along(&m, &ClusterVector::scalar(&[5.0, 6.0]), &field(0.0, 1.0, 1.0)).unwrap(), 0.0);
        let v = field(0.5, 1.0, 2.0);
        let b = beta_vector(&m, &y).unwrap();
        let hand: f64 = [0.2, 0.9].iter().enumerate().map(|(i, p)| b[i] * v.value(&[*p])[0] + v.divergence(&[*p])).sum();
        assert!((beta_along(&m, &y, &v).unwrap() - hand).abs() <= 1e-10);
    }

    #[test]
    fn b_pi_linear_and_local() {
        let m = ex1();
        let g = LiftedConfiguration::new(vec![ClusterVector::scalar(&[0.2, 0.9]), ClusterVector::scalar(&[-0.3])]);
        assert_eq!(b_pi(&m, &LiftedConfiguration::default(), &field(0.0, 1.0, 1.0)).unwrap(), 0.0);
        assert_eq!(b_pi(&m, &g, &field(9.0, 1.0, 1.0)).unwrap(), 0.0);
        let (v, w) = (field(0.0, 1.0, 1.0), field(0.5, 0.7, -2.0));
        let sum = b_pi(&m, &g, &v.plus(&w.scaled(3.0))).unwrap();
        let parts = b_pi(&m, &g, &v).unwrap() + 3.0 * b_pi(&m, &g, &w).unwrap();
        assert!((sum - parts).abs() <= 1e-10);
    }

    #[test]
    fn gradients_and_directional_derivative() {
        let f = CylinderFunction::of_pairing(Profile::Tanh, bump(0.0, 1.0, 2.0));
        let w = Window::interval(-3.0, 3.0).unwrap();
        assert!(gamma_gradient(&f, &Configuration::empty(w.clone())).is_empty());
        let g = Configuration::from_points([[0.1].as_slice(), [0.5].as_slice(), [2.0].as_slice()], w.clone());
        let grads = gamma_gradient(&f, &g);
        assert_eq!(grads.len(), 2);
        assert!(gamma_gradient(&CylinderFunction::constant(2.0), &g).iter().all(|(_, v)| v.iter().all(|x| *x == 0.0)));
        assert_eq!(directional_derivative(&f, &g, &SmoothVectorField::zero(1)), 0.0);
        assert_eq!(directional_derivative(&f, &g, &field(5.0, 1.0, 1.0)), 0.0);
        // flow finite difference: x ↦ x + t v(x) to first order
        let v = field(0.2, 1.0, 1.5);
        let h = 1e-6;
        let moved = |t: f64| {
            let pts: Vec<Vec<f64>> = g.points().map(|p| vec![p[0] + t * v.value(p)[0]]).collect();
            f.eval(&Configuration::from_points(pts.iter().map(|p| p.as_slice()), w.clone()))
        };
        let fd = (moved(h) - moved(-h)) / (2.0 * h);
        let an = directional_derivative(&f, &g, &v);
        assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "{fd} {an}");
    }

    #[test]
    fn generator_examples() {
        let m = ClusterProcessModel::gaussian_lebesgue(vec![1.0], vec![0.0, 0.0, 1.0]).unwrap();
        let f = CylinderFunction::of_pairing(Profile::Sin, bump(0.0, 1.5, 1.0));
        let g = LiftedConfiguration::new(vec![ClusterVector::scalar(&[0.3, -0.2])]);
        assert_eq!(generator_apply(&m, &CylinderFunction::constant(3.0), &g).unwrap().total(), 0.0);
        let far = LiftedConfiguration::new(vec![ClusterVector::scalar(&[7.0, 8.0])]);
        assert_eq!(generator_apply(&m, &f, &far).unwrap().total(), 0.0);
        let phi = bump(0.0, 1.5, 1.0);
        let t = phi.value(&[0.3]) + phi.value(&[-0.2]);
        let [_, d1, d2] = Profile::Sin.eval(t);
        let beta = [-(0.3 - -0.2) / 2.0, (0.3 - -0.2) / 2.0];
        let mut hand = 0.0;
        for (i, y) in [0.3, -0.2].iter().enumerate() {
            let j = phi.jet(&[*y]);
            hand -= d2 * j.gradient[0] * j.gradient[0] + d1 * j.laplacian + d1 * j.gradient[0] * beta[i];
        }
        assert!((generator_apply(&m, &f, &g).unwrap().total() - hand).abs() <= 1e-8);
    }

    #[test]
    fn lambda_star_ibp_small() {
        let m = ex1();
        let (f, g, v) = (bump(0.0, 1.0, 1.0), bump(0.5, 1.0, 1.0), field(0.2, 1.2, 1.0));
        let z = ibp_residual_lambda_star(&m, &f, &g, &SmoothVectorField::zero(1), 100, 1).unwrap();
        assert_eq!(z.residual.mean, 0.0);
        let r = ibp_residual_lambda_star(&m, &SmoothTestFunction::zero(), &g, &v, 1000, 1).unwrap();
        assert_eq!(r.residual.mean, 0.0);
        let r = ibp_residual_lambda_star(&m, &f, &g, &v, 50_000, 2).unwrap();
        assert!(r.passes(4.0), "{r:?}");
    }

    #[test]
    fn mucl_ibp_small() {
        let m = ex1();
        let f = CylinderFunction::of_pairing(Profile::Tanh, bump(0.0, 1.0, 1.0));
        let g = CylinderFunction::constant(1.0);
        let v = field(0.2, 1.2, 1.0);
        let r = ibp_residual_mucl(&m, &f, &g, &v, 30_000, 3).unwrap();
        assert_eq!(r.f_grad_g.mean, 0.0);
        assert!(r.passes(4.0), "{r:?}");
        let z = ibp_residual_mucl(&m, &f, &g, &SmoothVectorField::zero(1), 100, 3).unwrap();
        assert_eq!(z.residual.mean, 0.0);
    }

    #[test]
    fn general_field_degenerates_to_constant_coefficient() {
        let m = ex1();
        let f = CylinderFunction::of_pairing(Profile::Tanh, bump(0.0, 1.0, 1.0));
        let g = CylinderFunction::of_pairing(Profile::Gauss, bump(0.4, 1.0, 1.0));
        let v = field(0.2, 1.2, 1.0);
        let a = ibp_residual_mucl(&m, &f, &g, &v, 2000, 5).unwrap();
        let b = ibp_general(&m, &f, &g, &CylinderVectorField::constant(v), 2000, 5).unwrap();
        assert_eq!(a, b);
        let coef = CylinderFunction::new(
            OuterFunction::apply(Profile::Sin, OuterFunction::coordinate(1, 0)),
            vec![bump(-0.2, 1.0, 1.0)],
        );
        let two = CylinderVectorField::new(vec![(coef, field(0.0, 1.0, 1.0)), (CylinderFunction::constant(0.5), field(0.6, 0.8, 1.0))]);
        let r = ibp_general(&m, &f, &g, &two, 30_000, 6).unwrap();
        assert!(r.passes(4.0), "{r:?}");
    }

    #[test]
    fn dirichlet_examples() {
        let m = ex1();
        let f = CylinderFunction::of_pairing(Profile::Tanh, bump(0.0, 1.0, 1.0));
        let c = CylinderFunction::constant(1.0);
        assert_eq!(dirichlet_form(&m, &c, &f, 500, 1).unwrap().mean, 0.0);
        let g = CylinderFunction::of_pairing(Profile::Gauss, bump(0.4, 1.0, 1.0));
        assert_eq!(dirichlet_form(&m, &f, &g, 500, 1).unwrap(), dirichlet_form(&m, &g, &f, 500, 1).unwrap());
        let r = dirichlet_vs_generator(&m, &f, &f, 20_000, 2).unwrap();
        assert!(r.min_energy_f >= 0.0);
        assert!(r.passes(4.0), "{r:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn beta_exchange_symmetry(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let m = ex1();
            let x = beta_vector(&m, &ClusterVector::scalar(&[a, b])).unwrap();
            let y = beta_vector(&m, &ClusterVector::scalar(&[b, a])).unwrap();
            prop_assert!((x[0] - y[1]).abs() <= 1e-8 && (x[1] - y[0]).abs() <= 1e-8);
        }

        #[test]
        fn generator_is_linear(a in -2.0f64..2.0, y1 in -1.0f64..1.0, y2 in -1.0f64..1.0) {
            let m = ex1();
            let g = LiftedConfiguration::new(vec![ClusterVector::scalar(&[y1, y2])]);
            let phi = bump(0.0, 1.5, 1.0);
            let f1 = CylinderFunction::of_pairing(Profile::Sin, phi.clone());
            let f2 = CylinderFunction::of_pairing(Profile::Tanh, phi.clone());
            let comb = CylinderFunction::new(
                OuterFunction::Sum { terms: vec![
                    OuterFunction::apply(Profile::Sin, OuterFunction::coordinate(1, 0)),
                    OuterFunction::apply(Profile::Tanh, OuterFunction::coordinate(1, 0)).scaled(a),
                ] },
                vec![phi],
            );
            let lhs = generator_apply(&m, &comb, &g).unwrap().total();
            let rhs = generator_apply(&m, &f1, &g).unwrap().total() + a * generator_apply(&m, &f2, &g).unwrap().total();
            prop_assert!((lhs - rhs).abs() <= 1e-10);
        }
    }
}
