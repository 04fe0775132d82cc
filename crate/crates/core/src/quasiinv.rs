//! Compactly supported diffeomorphisms, the `λ*`-density ratio `ρ`, the
//! Poisson Radon–Nikodym density `R`, and Monte Carlo quasi-invariance checks.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::configspace::{
    apply_diffeo_config, lift_diffeo, project_lifted_in, shift_cluster, Bounds, ClusterVector, CylinderFunction,
    LiftedConfiguration, SmoothTestFunction, Window,
};
use crate::measures::{lambda_star_s, ClusterProcessModel, IntensityModel};
use crate::quadrature::{integrate_box, QuadValue};
use crate::sampler::{sample_poisson, LiftedSampler};
use crate::stats::{combined_se, mix_seed, Estimate, McRunner};
use crate::{Error, Result};

/// Densities below this are treated as zero and the ratio is set to 1.
pub const ZERO_DENSITY_FLOOR: f64 = 1e-300;

const INVERSE_TOL: f64 = 1e-15;
const INVERSE_MAX_ITER: usize = 200;

/// `φ(x) = x + ε b(x) u` (or its inverse when `inverted`), with `b` a catalog
/// bump, `u` a unit vector and `|ε| Lip(b) < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactDiffeo {
    pub bump: SmoothTestFunction,
    pub direction: Vec<f64>,
    pub epsilon: f64,
    #[serde(default)]
    pub inverted: bool,
}

impl CompactDiffeo {
    pub fn new(bump: SmoothTestFunction, direction: Vec<f64>, epsilon: f64) -> Result<Self> {
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(crate::error::invalid("diffeomorphism direction must be a nonzero vector"));
        }
        let d = direction.len();
        if !(epsilon.abs() * bump.lipschitz_bound(d) < 1.0) {
            return Err(crate::error::invalid("|epsilon| * Lip(b) must be below 1"));
        }
        let direction = direction.iter().map(|v| v / norm).collect();
        Ok(Self { bump, direction, epsilon, inverted: false })
    }

    pub fn identity(d: usize) -> Self {
        let mut direction = vec![0.0; d];
        direction[0] = 1.0;
        Self { bump: SmoothTestFunction::zero(), direction, epsilon: 0.0, inverted: false }
    }

    pub fn is_identity(&self) -> bool {
        self.epsilon == 0.0 || self.bump.support().is_empty()
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    /// Box outside of which `φ` is the identity.
    pub fn support(&self) -> Bounds {
        if self.is_identity() {
            Bounds::empty()
        } else {
            self.bump.support()
        }
    }

    /// The inverse diffeomorphism.
    pub fn inverse(&self) -> Self {
        Self { inverted: !self.inverted, ..self.clone() }
    }

    fn push(&self, x: &[f64]) -> Vec<f64> {
        let s = self.epsilon * self.bump.value(x);
        x.iter().zip(&self.direction).map(|(xi, ui)| xi + s * ui).collect()
    }

    fn push_jacobian(&self, x: &[f64]) -> f64 {
        let g = self.bump.gradient(x);
        1.0 + self.epsilon * g.iter().zip(&self.direction).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Solves `x + ε b(x) u = y`; writing `x = y - t u` reduces this to the
    /// scalar equation `t = ε b(y - t u)`, solved by Newton iteration from
    /// `t = 0` (the derivative stays above `1 - |ε| Lip(b) > 0`).
    fn pull(&self, y: &[f64]) -> Vec<f64> {
        // φ is the identity off its support and maps the support onto itself
        if self.is_identity() || !self.bump.support().contains(y) {
            return y.to_vec();
        }
        let at = |t: f64| -> Vec<f64> { y.iter().zip(&self.direction).map(|(a, u)| a - t * u).collect() };
        let mut t = 0.0;
        for _ in 0..INVERSE_MAX_ITER {
            let x = at(t);
            let g = t - self.epsilon * self.bump.value(&x);
            if g.abs() <= INVERSE_TOL {
                break;
            }
            let grad = self.bump.gradient(&x);
            let dg = 1.0 + self.epsilon * grad.iter().zip(&self.direction).map(|(a, b)| a * b).sum::<f64>();
            t -= g / dg;
        }
        at(t)
    }

    /// `φ(x)`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        if self.inverted { self.pull(x) } else { self.push(x) }
    }

    /// `φ^{-1}(y)`.
    pub fn apply_inverse(&self, y: &[f64]) -> Vec<f64> {
        if self.inverted { self.push(y) } else { self.pull(y) }
    }

    /// Jacobian determinant `J_φ(x)`; analytic by the matrix determinant
    /// lemma, `det(I + ε u ∇bᵀ) = 1 + ε ∇b·u`.
    pub fn jacobian(&self, x: &[f64]) -> f64 {
        if self.inverted {
            1.0 / self.push_jacobian(&self.pull(x))
        } else {
            self.push_jacobian(x)
        }
    }

    /// `J_{φ^{-1}}(y) = 1 / J_φ(φ^{-1}(y))`.
    pub fn inverse_jacobian(&self, y: &[f64]) -> f64 {
        1.0 / self.jacobian(&self.apply_inverse(y))
    }
}

fn require_ac(model: &ClusterProcessModel) -> Result<()> {
    if model.lambda_star_ac() {
        Ok(())
    } else {
        Err(Error::ModelMismatch("the convolution measure is not absolutely continuous for this model".into()))
    }
}

fn rho_flagged(model: &ClusterProcessModel, phi: &CompactDiffeo, y: &ClusterVector) -> Result<(f64, bool)> {
    if y.is_empty() {
        return Err(Error::VacuousCluster);
    }
    let supp = phi.support();
    if !y.meets(&supp) {
        return Ok((1.0, false));
    }
    let mut coords = Vec::with_capacity(y.coords().len());
    let mut jac = 1.0;
    for p in y.points() {
        coords.extend(phi.apply_inverse(p));
        jac *= phi.inverse_jacobian(p);
    }
    let x = ClusterVector::new(y.dim(), coords)?;
    let sx = lambda_star_s(model, &x)?.value;
    let sy = lambda_star_s(model, y)?.value;
    if sx < ZERO_DENSITY_FLOOR || sy < ZERO_DENSITY_FLOOR {
        return Ok((1.0, true));
    }
    Ok((sx / sy * jac, false))
}

/// `ρ(ȳ) = d(φ̄_*λ*)/dλ* (ȳ) = s(φ̄^{-1}ȳ)/s(ȳ) · Π J_{φ^{-1}}(y_i)`.
pub fn rho_lambda_star(model: &ClusterProcessModel, phi: &CompactDiffeo, y: &ClusterVector) -> Result<f64> {
    require_ac(model)?;
    rho_flagged(model, phi, y).map(|(r, _)| r)
}

/// `λ`-density ratio `ρ_λ(y) = ℓ(φ^{-1}y) J_{φ^{-1}}(y) / ℓ(y)` on the base space.
pub fn rho_base(lambda: &IntensityModel, phi: &CompactDiffeo, y: &[f64]) -> f64 {
    if !phi.support().contains(y) {
        return 1.0;
    }
    let num = lambda.density(&phi.apply_inverse(y));
    let den = lambda.density(y);
    if num < ZERO_DENSITY_FLOOR || den < ZERO_DENSITY_FLOOR {
        return 1.0;
    }
    num / den * phi.inverse_jacobian(y)
}

/// Quasi-invariance evaluator for one `(model, φ)` pair with the cached
/// normalization `∫(1 - ρ) dλ*`.
#[derive(Debug)]
pub struct QuasiInvariance<'a> {
    model: &'a ClusterProcessModel,
    phi: CompactDiffeo,
    normalization: OnceLock<Result<Estimate>>,
    floor_hits: AtomicU64,
}

impl<'a> QuasiInvariance<'a> {
    pub fn new(model: &'a ClusterProcessModel, phi: CompactDiffeo) -> Result<Self> {
        require_ac(model)?;
        if phi.dim() != model.dim {
            return Err(Error::DimensionMismatch { expected: model.dim, got: phi.dim() });
        }
        Ok(Self { model, phi, normalization: OnceLock::new(), floor_hits: AtomicU64::new(0) })
    }

    pub fn phi(&self) -> &CompactDiffeo {
        &self.phi
    }

    /// Number of `ρ` evaluations where the zero-density floor was hit.
    pub fn floor_hits(&self) -> u64 {
        self.floor_hits.load(Ordering::Relaxed)
    }

    pub fn rho(&self, y: &ClusterVector) -> Result<f64> {
        let (r, floored) = rho_flagged(self.model, &self.phi, y)?;
        if floored {
            self.floor_hits.fetch_add(1, Ordering::Relaxed);
        }
        Ok(r)
    }

    /// `∫_{𝔛_{supp φ}} (1 - ρ) dλ*` by Monte Carlo over centres on
    /// `supp φ ⊕ R_trunc` and independent clusters. Zero in exact arithmetic.
    pub fn normalization(&self) -> Result<Estimate> {
        self.normalization.get_or_init(|| self.compute_normalization()).clone()
    }

    fn compute_normalization(&self) -> Result<Estimate> {
        if self.phi.is_identity() {
            return Ok(Estimate::exact(0.0));
        }
        let reach = self.phi.support().inflate(self.model.r_trunc());
        let eff = reach.intersect(&self.model.intensity.support());
        if eff.is_empty() {
            return Ok(Estimate::exact(0.0));
        }
        let mass = self.model.intensity.box_mass(&eff.lower, &eff.upper).value;
        let n = self.model.numerics.normalization_samples;
        let runner = McRunner::new(mix_seed(self.model.numerics.seed, 0x6e6f726d));
        let m = runner.try_run(n, 1, |rng, row| {
            let mut x = vec![0.0; self.model.dim];
            self.model.intensity.sample_in(&eff, rng, &mut x);
            let y = self.model.law.sample(rng);
            if y.is_empty() {
                return Ok(());
            }
            let y = shift_cluster(&y, &x)?;
            row[0] = mass * (1.0 - self.rho(&y)?);
            Ok::<(), Error>(())
        })?;
        Ok(m.estimate(0))
    }

    /// `Π_{x̄ ∈ γ̄} ρ(x̄)`, with only clusters meeting `supp φ` contributing.
    pub fn rho_product(&self, g: &LiftedConfiguration) -> Result<f64> {
        let supp = self.phi.support();
        let mut log = 0.0;
        for c in g.clusters().iter().filter(|c| c.meets(&supp)) {
            log += self.rho(c)?.ln();
        }
        Ok(log.exp())
    }

    /// `R(γ̄) = exp{∫(1 - ρ) dλ*} Π ρ(x̄)`.
    pub fn rn_density_lifted(&self, g: &LiftedConfiguration) -> Result<f64> {
        if self.phi.is_identity() {
            return Ok(1.0);
        }
        Ok(self.normalization()?.mean.exp() * self.rho_product(g)?)
    }

    /// Smallest window on which both `φ` and `F` are observed.
    fn window_for(&self, f: &CylinderFunction) -> Result<Window> {
        let b = self.phi.support().hull(&f.support());
        if b.is_empty() {
            return Window::new(vec![0.0; self.model.dim], vec![1.0; self.model.dim]);
        }
        Window::from_bounds(&b)
    }
}

/// Two Monte Carlo sides of an identity, paired on the same draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedResidual {
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// `lhs - rhs` with the paired standard error, including the
    /// normalization uncertainty where it applies.
    pub residual: Estimate,
}

impl PairedResidual {
    pub fn passes(&self, k: f64) -> bool {
        self.residual.within(0.0, k)
    }
}

/// `E[F(φ γ)]` against `E[F(γ) R(γ̄)]` over `γ̄ ~ π_{λ*}` with `γ = 𝔭γ̄`.
pub fn quasi_invariance_residual(
    qi: &QuasiInvariance<'_>,
    f: &CylinderFunction,
    n_samples: usize,
    seed: u64,
) -> Result<PairedResidual> {
    let k = qi.window_for(f)?;
    let sampler = LiftedSampler::new(qi.model, &k)?;
    let norm = qi.normalization()?;
    let scale = norm.mean.exp();
    let m = McRunner::new(seed).try_run(n_samples, 2, |rng, row| {
        let lifted = sampler.sample(rng);
        let g = project_lifted_in(&lifted, &k);
        row[0] = f.eval(&apply_diffeo_config(&qi.phi, &g));
        row[1] = f.eval(&g) * qi.rho_product(&lifted)? * scale;
        Ok::<(), Error>(())
    })?;
    let lhs = m.estimate(0);
    let mut rhs = m.estimate(1);
    let paired = m.linear(&[1.0, -1.0]);
    // d(rhs)/d(normalization) = rhs
    let norm_se = rhs.mean.abs() * norm.se;
    rhs.se = combined_se(rhs.se, norm_se);
    let residual = Estimate { se: combined_se(paired.se, norm_se), ..paired };
    Ok(PairedResidual { lhs, rhs, residual })
}

/// `E[R]` over `π_{λ*}` samples on `supp φ`; equals 1.
pub fn rn_mean_check(qi: &QuasiInvariance<'_>, n_samples: usize, seed: u64) -> Result<Estimate> {
    if qi.phi.is_identity() {
        return Ok(Estimate::exact(1.0));
    }
    let k = Window::from_bounds(&qi.phi.support())?;
    let sampler = LiftedSampler::new(qi.model, &k)?;
    let norm = qi.normalization()?;
    let scale = norm.mean.exp();
    let m = McRunner::new(seed).try_run(n_samples, 1, |rng, row| {
        row[0] = qi.rho_product(&sampler.sample(rng))? * scale;
        Ok::<(), Error>(())
    })?;
    let mut e = m.estimate(0);
    e.se = combined_se(e.se, e.mean.abs() * norm.se);
    Ok(e)
}

/// Base-space second-moment check for a plain Poisson measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L2Check {
    /// Monte Carlo `E[R²]`.
    pub empirical: Estimate,
    /// `exp{∫(ρ² - ρ) dλ}` by quadrature.
    pub closed: QuadValue,
    /// `∫(1 - ρ) dλ` by quadrature (zero in exact arithmetic).
    pub normalization: QuadValue,
}

impl L2Check {
    pub fn passes(&self, k: f64) -> bool {
        self.empirical.within(self.closed.value, k)
    }
}

/// Second moment of `R^φ_{π_λ}` against its closed form.
pub fn rn_l2_check(lambda: &IntensityModel, phi: &CompactDiffeo, n_samples: usize, seed: u64) -> Result<L2Check> {
    let eff = phi.support().intersect(&lambda.support());
    if phi.is_identity() || eff.is_empty() {
        return Ok(L2Check {
            empirical: Estimate::exact(1.0),
            closed: QuadValue::exact(1.0),
            normalization: QuadValue::exact(0.0),
        });
    }
    let tol = crate::quadrature::Tolerance::default();
    let integrand = |g: &dyn Fn(f64) -> f64| {
        integrate_box(|y: &[f64]| lambda.density(y) * g(rho_base(lambda, phi, y)), &eff.lower, &eff.upper, tol)
    };
    let normalization = integrand(&|r| 1.0 - r);
    let second = integrand(&|r| r * r - r);
    let closed = QuadValue { value: second.value.exp(), error: second.value.exp() * second.error };
    let w = Window::from_bounds(&eff)?;
    let scale = normalization.value.exp();
    let m = McRunner::new(seed).try_run(n_samples, 1, |rng: &mut ChaCha8Rng, row| {
        let g = sample_poisson(lambda, &w, rng)?;
        let mut r = scale;
        for a in g.atoms() {
            r *= rho_base(lambda, phi, a.location.coords()).powi(a.multiplicity as i32);
        }
        row[0] = r * r;
        Ok::<(), Error>(())
    })?;
    Ok(L2Check { empirical: m.estimate(0), closed, normalization })
}

/// `ρ_φ(φ̄(x̄)) · ρ_{φ^{-1}}(x̄)`, equal to 1 by the chain rule.
pub fn composition_check(model: &ClusterProcessModel, phi: &CompactDiffeo, x: &ClusterVector) -> Result<f64> {
    let fx = lift_diffeo(phi, x);
    Ok(rho_lambda_star(model, phi, &fx)? * rho_lambda_star(model, &phi.inverse(), x)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::Profile;
    use proptest::prelude::*;

    fn ex1() -> ClusterProcessModel {
        ClusterProcessModel::gaussian_lebesgue(vec![1.0], vec![0.1, 0.3, 0.3, 0.3]).unwrap()
    }

    fn phi1() -> CompactDiffeo {
        CompactDiffeo::new(SmoothTestFunction::bump(vec![0.5], 1.0, 1.0), vec![1.0], 0.1).unwrap()
    }

    #[test]
    fn diffeo_inverse_round_trip() {
        let phi = phi1();
        for i in 0..=40 {
            let x = -1.0 + 0.075 * i as f64;
            let y = phi.apply(&[x]);
            let back = phi.apply_inverse(&y);
            assert!((back[0] - x).abs() <= 1e-12, "{x}");
            let inv = phi.inverse();
            assert!((phi.apply(&inv.apply(&[x]))[0] - x).abs() <= 1e-12);
            assert!((inv.jacobian(&y) * phi.jacobian(&[x]) - 1.0).abs() < 1e-12);
        }
        assert_eq!(phi.apply(&[3.0]), vec![3.0]);
        assert_eq!(phi.jacobian(&[3.0]), 1.0);
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let phi = CompactDiffeo::new(SmoothTestFunction::bump(vec![0.0, 0.0], 1.0, 1.0), vec![1.0, 1.0], 0.2).unwrap();
        let x = [0.2, -0.3];
        let h = 1e-6;
        let mut m = [[0.0; 2]; 2];
        for j in 0..2 {
            let mut a = x;
            let mut b = x;
            a[j] += h;
            b[j] -= h;
            let (fa, fb) = (phi.apply(&a), phi.apply(&b));
            for i in 0..2 {
                m[i][j] = (fa[i] - fb[i]) / (2.0 * h);
            }
        }
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        assert!((det - phi.jacobian(&x)).abs() < 1e-8);
    }

    #[test]
    fn rejects_non_contracting_epsilon() {
        assert!(CompactDiffeo::new(SmoothTestFunction::bump(vec![0.0], 1.0, 1.0), vec![1.0], 100.0).is_err());
    }

    #[test]
    fn rho_examples() {
        let m = ex1();
        let id = CompactDiffeo::identity(1);
        assert_eq!(rho_lambda_star(&m, &id, &ClusterVector::scalar(&[0.3, 0.1])).unwrap(), 1.0);
        let phi = phi1();
        assert_eq!(rho_lambda_star(&m, &phi, &ClusterVector::scalar(&[5.0, 7.0])).unwrap(), 1.0);
        for i in 0..=20 {
            let y = -0.5 + 0.1 * i as f64;
            let r = rho_lambda_star(&m, &phi, &ClusterVector::scalar(&[y])).unwrap();
            let expected = 1.0 / phi.jacobian(&phi.apply_inverse(&[y]));
            assert!((r / expected - 1.0).abs() <= 1e-8, "{y}: {r} vs {expected}");
        }
    }

    #[test]
    fn rho_requires_absolute_continuity() {
        let m = ClusterProcessModel::new(
            IntensityModel::lebesgue(),
            crate::measures::ClusterLaw::delta(1).unwrap(),
            Default::default(),
        )
        .unwrap();
        assert!(matches!(
            rho_lambda_star(&m, &phi1(), &ClusterVector::scalar(&[0.5])),
            Err(Error::ModelMismatch(_))
        ));
    }

    #[test]
    fn rn_density_examples() {
        let m = ex1();
        let id = QuasiInvariance::new(&m, CompactDiffeo::identity(1)).unwrap();
        let g = LiftedConfiguration::new(vec![ClusterVector::scalar(&[0.5, 0.6])]);
        assert_eq!(id.rn_density_lifted(&g).unwrap(), 1.0);
        let small = m.clone().with_numerics(|n| n.normalization_samples = 20_000).unwrap();
        let qi = QuasiInvariance::new(&small, phi1()).unwrap();
        let far = LiftedConfiguration::new(vec![ClusterVector::scalar(&[9.0])]);
        let c = qi.normalization().unwrap();
        assert!(c.within(0.0, 4.0), "{c:?}");
        assert_eq!(qi.rn_density_lifted(&far).unwrap(), c.mean.exp());
        // locality
        let mixed = LiftedConfiguration::new(vec![ClusterVector::scalar(&[0.4, 0.7]), ClusterVector::scalar(&[9.0])]);
        let local = mixed.meeting(&qi.phi().support());
        assert_eq!(qi.rn_density_lifted(&mixed).unwrap(), qi.rn_density_lifted(&local).unwrap());
    }

    #[test]
    fn residual_identity_diffeo_is_exact() {
        let m = ex1();
        let qi = QuasiInvariance::new(&m, CompactDiffeo::identity(1)).unwrap();
        let f = CylinderFunction::of_pairing(Profile::Tanh, SmoothTestFunction::bump(vec![0.5], 1.0, 1.0));
        let r = quasi_invariance_residual(&qi, &f, 2000, 3).unwrap();
        assert_eq!(r.residual.mean, 0.0);
    }

    #[test]
    fn residual_small_run() {
        let m = ex1().with_numerics(|n| n.normalization_samples = 100_000).unwrap();
        let qi = QuasiInvariance::new(&m, phi1()).unwrap();
        let f = CylinderFunction::of_pairing(Profile::Tanh, SmoothTestFunction::bump(vec![0.5], 1.0, 2.0));
        let r = quasi_invariance_residual(&qi, &f, 20_000, 5).unwrap();
        assert!(r.passes(4.0), "{r:?}");
        let e = rn_mean_check(&qi, 20_000, 6).unwrap();
        assert!(e.within(1.0, 4.0), "{e:?}");
    }

    #[test]
    fn l2_examples() {
        let id = rn_l2_check(&IntensityModel::lebesgue(), &CompactDiffeo::identity(1), 10, 1).unwrap();
        assert_eq!((id.empirical.mean, id.closed.value), (1.0, 1.0));
        let zero = IntensityModel::BumpDensity { density: SmoothTestFunction::bump(vec![10.0], 1.0, 1.0) };
        let c = rn_l2_check(&zero, &phi1(), 10, 1).unwrap();
        assert_eq!((c.empirical.mean, c.closed.value), (1.0, 1.0));
        let c = rn_l2_check(&IntensityModel::lebesgue(), &phi1(), 20_000, 2).unwrap();
        assert!(c.normalization.value.abs() < 1e-8);
        assert!(c.passes(4.0), "{c:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn composition_is_identity(a in -1.0f64..2.0, b in -1.0f64..2.0, c in -1.0f64..2.0) {
            let m = ex1();
            let v = composition_check(&m, &phi1(), &ClusterVector::scalar(&[a, b, c])).unwrap();
            prop_assert!((v - 1.0).abs() < 1e-6);
        }

        #[test]
        fn inverse_is_accurate(x in -2.0f64..3.0, eps in -0.3f64..0.3) {
            let phi = CompactDiffeo::new(SmoothTestFunction::bump(vec![0.5], 1.0, 1.0), vec![1.0], eps).unwrap();
            let y = phi.apply(&[x]);
            prop_assert!((phi.apply(&phi.apply_inverse(&y))[0] - y[0]).abs() <= 1e-12);
        }
    }
}
