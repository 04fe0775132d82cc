//! Centre intensities `λ`, cluster laws `η`, and the convolution measure `λ*`.
//!
//! `λ*_n(dȳ) = p_n s_n(ȳ) dȳ` with `s_n(ȳ) = ∫ h_n(ȳ - x) λ(dx)`, where `h_n`
//! is the in-cluster density of a size-`n` cluster relative to its centre.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::configspace::{Bounds, ClusterVector, SmoothTestFunction, Window};
use crate::quadrature::{self, DoublingRule, QuadValue, Tolerance};
use crate::stats::{Estimate, McRunner};
use crate::{properness, DivergenceReport, Error, Result};

/// Half-width at which heavy-tailed offset laws start the doubling search.
const HEAVY_TAIL_START: f64 = 10.0;

/// Intensity measure of cluster centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntensityModel {
    /// `c · dx`
    Lebesgue { scale: f64 },
    /// `e^{|x|} dx` on the line.
    ExpWeight,
    /// `ℓ(x) dx` with a nonnegative catalog density.
    BumpDensity { density: SmoothTestFunction },
}

impl IntensityModel {
    pub fn lebesgue() -> Self {
        Self::Lebesgue { scale: 1.0 }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Self::Lebesgue { scale } if !(*scale > 0.0 && scale.is_finite()) => {
                Err(crate::error::invalid("Lebesgue scale must be positive and finite"))
            }
            Self::ExpWeight if dim != 1 => Err(Error::ModelMismatch("exp_weight intensity is one-dimensional".into())),
            Self::BumpDensity { density } if !density.is_nonnegative() => {
                Err(crate::error::invalid("intensity density must be nonnegative"))
            }
            _ => Ok(()),
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        match self {
            Self::Lebesgue { scale } => *scale,
            Self::ExpWeight => x[0].abs().exp(),
            Self::BumpDensity { density } => density.value(x),
        }
    }

    pub fn translation_invariant(&self) -> bool {
        matches!(self, Self::Lebesgue { .. })
    }

    /// All catalog intensities are absolutely continuous.
    pub fn non_atomic(&self) -> bool {
        true
    }

    /// Whether `λ(X) < ∞`.
    pub fn finite_total(&self) -> bool {
        matches!(self, Self::BumpDensity { .. })
    }

    /// Box outside of which the density vanishes.
    pub fn support(&self) -> Bounds {
        match self {
            Self::BumpDensity { density } => density.support(),
            _ => Bounds::everywhere(),
        }
    }

    /// `λ([a, b])` on the line.
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match self {
            Self::Lebesgue { scale } => scale * (b - a),
            Self::ExpWeight => exp_weight_primitive(b) - exp_weight_primitive(a),
            Self::BumpDensity { .. } => self.box_mass(&[a], &[b]).value,
        }
    }

    /// `λ` of an axis-aligned box; infinite for unbounded boxes of infinite mass.
    pub fn box_mass(&self, lower: &[f64], upper: &[f64]) -> QuadValue {
        if lower.iter().zip(upper).any(|(a, b)| b <= a) {
            return QuadValue::exact(0.0);
        }
        match self {
            Self::Lebesgue { scale } => {
                QuadValue::exact(scale * lower.iter().zip(upper).map(|(a, b)| b - a).product::<f64>())
            }
            Self::ExpWeight => QuadValue::exact(exp_weight_primitive(upper[0]) - exp_weight_primitive(lower[0])),
            Self::BumpDensity { density } => {
                let b = density.support().intersect(&Bounds::new(lower.to_vec(), upper.to_vec()));
                if b.is_empty() {
                    return QuadValue::exact(0.0);
                }
                quadrature::integrate_box(|x| density.value(x), &b.lower, &b.upper, Tolerance::default())
            }
        }
    }

    pub fn mass(&self, w: &Window) -> f64 {
        self.box_mass(&w.lower, &w.upper).value
    }

    /// Part of the window that can carry mass.
    pub fn effective_window(&self, w: &Window) -> Option<Bounds> {
        let b = w.bounds().intersect(&self.support());
        if b.is_empty() { None } else { Some(b) }
    }

    /// Draws one point from `λ` restricted to the (finite-mass) box.
    pub fn sample_in(&self, b: &Bounds, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            Self::Lebesgue { .. } => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = b.lower[k] + (b.upper[k] - b.lower[k]) * rng.random::<f64>();
                }
            }
            Self::ExpWeight => {
                let (fa, fb) = (exp_weight_primitive(b.lower[0]), exp_weight_primitive(b.upper[0]));
                let u = fa + (fb - fa) * rng.random::<f64>();
                out[0] = u.signum() * u.abs().ln_1p();
            }
            Self::BumpDensity { density } => {
                let bound = density.sup_bound();
                loop {
                    for (k, o) in out.iter_mut().enumerate() {
                        *o = b.lower[k] + (b.upper[k] - b.lower[k]) * rng.random::<f64>();
                    }
                    if rng.random::<f64>() * bound <= density.value(out) {
                        return;
                    }
                }
            }
        }
    }

    /// `C_K = sup_x λ(K + x)`; for bump densities the total mass is returned
    /// as an upper bound.
    pub fn sup_translate_mass(&self, k: &Window) -> f64 {
        match self {
            Self::Lebesgue { scale } => scale * k.volume(),
            Self::ExpWeight => f64::INFINITY,
            Self::BumpDensity { density } => {
                let s = density.support();
                self.box_mass(&s.lower, &s.upper).value
            }
        }
    }
}

/// Antiderivative of `e^{|x|}` vanishing at 0.
fn exp_weight_primitive(x: f64) -> f64 {
    x.signum() * x.abs().exp_m1()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Law of a single in-cluster point relative to the cluster centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OffsetLaw {
    /// Independent centred normal coordinates with the given deviations.
    Gaussian { sigma: Vec<f64> },
    /// Point mass at a fixed offset.
    Dirac { offset: Vec<f64> },
    /// Density `|x| / (x^2 + 1)^2` on the line.
    HeavyTail,
}

impl OffsetLaw {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Self::Gaussian { sigma } => {
                if sigma.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: sigma.len() });
                }
                if sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return Err(crate::error::invalid("Gaussian deviations must be positive"));
                }
                Ok(())
            }
            Self::Dirac { offset } if offset.len() != dim => {
                Err(Error::DimensionMismatch { expected: dim, got: offset.len() })
            }
            Self::HeavyTail if dim != 1 => Err(Error::ModelMismatch("heavy_tail offsets are one-dimensional".into())),
            _ => Ok(()),
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, Self::Dirac { .. })
    }

    pub fn bounded_support(&self) -> bool {
        matches!(self, Self::Dirac { .. })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            Self::Gaussian { sigma } => {
                for (o, s) in out.iter_mut().zip(sigma) {
                    *o = s * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Self::Dirac { offset } => out.copy_from_slice(offset),
            Self::HeavyTail => {
                let u: f64 = rng.random();
                let r = (u / (1.0 - u)).sqrt();
                out[0] = if rng.random::<bool>() { r } else { -r };
            }
        }
    }

    /// Density and its gradient at `z`; `None` for point masses.
    pub fn density_grad(&self, z: &[f64], grad: &mut [f64]) -> Option<f64> {
        match self {
            Self::Gaussian { sigma } => {
                let mut e = 0.0;
                let mut norm = 1.0;
                for (zk, s) in z.iter().zip(sigma) {
                    e += zk * zk / (s * s);
                    norm *= (2.0 * std::f64::consts::PI).sqrt() * s;
                }
                let v = (-0.5 * e).exp() / norm;
                for ((g, zk), s) in grad.iter_mut().zip(z).zip(sigma) {
                    *g = -v * zk / (s * s);
                }
                Some(v)
            }
            Self::Dirac { .. } => None,
            Self::HeavyTail => {
                let x = z[0];
                let q = x * x + 1.0;
                grad[0] = x.signum() / (q * q) - 4.0 * x.abs() * x / (q * q * q);
                Some(x.abs() / (q * q))
            }
        }
    }

    pub fn density(&self, z: &[f64]) -> Option<f64> {
        let mut g = vec![0.0; z.len()];
        self.density_grad(z, &mut g)
    }

    /// `P(z ∈ [lower, upper])`.
    pub fn box_prob(&self, lower: &[f64], upper: &[f64]) -> f64 {
        match self {
            Self::Gaussian { sigma } => sigma
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    let (a, b) = (lower[k] / s, upper[k] / s);
                    if a > 0.0 {
                        0.5 * (erfc(a / std::f64::consts::SQRT_2) - erfc(b / std::f64::consts::SQRT_2))
                    } else {
                        normal_cdf(b) - normal_cdf(a)
                    }
                })
                .product(),
            Self::Dirac { offset } => {
                let inside = offset.iter().enumerate().all(|(k, o)| *o >= lower[k] && *o <= upper[k]);
                if inside { 1.0 } else { 0.0 }
            }
            Self::HeavyTail => {
                let cdf = |x: f64| {
                    if x < 0.0 { 0.5 / (x * x + 1.0) } else { 1.0 - 0.5 / (x * x + 1.0) }
                };
                (cdf(upper[0]) - cdf(lower[0])).max(0.0)
            }
        }
    }

    /// Upper bound on `P(|z|_∞ > r)`.
    pub fn tail_prob(&self, r: f64) -> f64 {
        match self {
            Self::Gaussian { sigma } => {
                sigma.iter().map(|s| erfc(r / (s * std::f64::consts::SQRT_2))).sum::<f64>().min(1.0)
            }
            Self::Dirac { offset } => {
                if offset.iter().all(|o| o.abs() <= r) { 0.0 } else { 1.0 }
            }
            Self::HeavyTail => 1.0 / (r * r + 1.0),
        }
    }

    /// Radius beyond which the density is treated as zero in quadrature;
    /// `None` for heavy tails, which are integrated by region doubling.
    pub fn cutoff(&self, sigmas: f64) -> Option<f64> {
        match self {
            Self::Gaussian { sigma } => Some(sigmas * sigma.iter().cloned().fold(0.0, f64::max)),
            Self::Dirac { offset } => Some(offset.iter().map(|o| o.abs()).fold(0.0, f64::max)),
            Self::HeavyTail => None,
        }
    }
}

/// Joint law of the points of a cluster of given size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InClusterLaw {
    /// Points i.i.d. from one offset law.
    Iid { offset: OffsetLaw },
    /// Points i.i.d. from `laws[n - 1]` for a size-`n` cluster.
    PerSize { laws: Vec<OffsetLaw> },
    /// All points of the cluster share one offset.
    Coincident { offset: OffsetLaw },
}

impl InClusterLaw {
    pub fn offset_law(&self, n: usize) -> &OffsetLaw {
        match self {
            Self::Iid { offset } | Self::Coincident { offset } => offset,
            Self::PerSize { laws } => &laws[(n.max(1) - 1).min(laws.len() - 1)],
        }
    }

    fn laws(&self) -> Vec<&OffsetLaw> {
        match self {
            Self::Iid { offset } | Self::Coincident { offset } => vec![offset],
            Self::PerSize { laws } => laws.iter().collect(),
        }
    }
}

/// Cluster law `η`: size probabilities `p_0..p_{n_max}` and in-cluster law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLaw {
    pub dim: usize,
    pub size_probs: Vec<f64>,
    pub in_cluster: InClusterLaw,
}

impl ClusterLaw {
    pub fn new(dim: usize, size_probs: Vec<f64>, in_cluster: InClusterLaw) -> Result<Self> {
        let law = Self { dim, size_probs, in_cluster };
        law.validate(usize::MAX)?;
        Ok(law)
    }

    /// Independent `N(0, σ_k^2)` coordinates for every point.
    pub fn product_gaussian(sigma: Vec<f64>, size_probs: Vec<f64>) -> Result<Self> {
        Self::new(sigma.len(), size_probs, InClusterLaw::Iid { offset: OffsetLaw::Gaussian { sigma } })
    }

    /// Single point at the centre.
    pub fn delta(dim: usize) -> Result<Self> {
        Self::new(dim, vec![0.0, 1.0], InClusterLaw::Iid { offset: OffsetLaw::Dirac { offset: vec![0.0; dim] } })
    }

    pub fn validate(&self, n_max: usize) -> Result<()> {
        if self.dim == 0 {
            return Err(crate::error::invalid("dimension must be at least 1"));
        }
        if self.size_probs.is_empty() || self.size_probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(crate::error::invalid("size probabilities must be nonnegative"));
        }
        let total: f64 = self.size_probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(crate::error::invalid(format!("size probabilities sum to {total}, not 1")));
        }
        if self.n_max() > n_max {
            return Err(crate::error::invalid(format!("cluster sizes exceed n_max = {n_max}")));
        }
        if let InClusterLaw::PerSize { laws } = &self.in_cluster {
            if laws.len() < self.n_max() {
                return Err(crate::error::invalid("per_size needs one offset law per cluster size"));
            }
        }
        for l in self.in_cluster.laws() {
            l.validate(self.dim)?;
        }
        Ok(())
    }

    /// Largest size with positive probability.
    pub fn n_max(&self) -> usize {
        self.size_probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }

    pub fn p(&self, n: usize) -> f64 {
        self.size_probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn mean_size(&self) -> f64 {
        self.size_probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn sample_size(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (n, p) in self.size_probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return n;
            }
        }
        self.n_max()
    }

    /// Offsets of a size-`n` cluster relative to its centre.
    pub fn sample_given_size(&self, n: usize, rng: &mut ChaCha8Rng) -> ClusterVector {
        let d = self.dim;
        let mut coords = vec![0.0; n * d];
        match &self.in_cluster {
            InClusterLaw::Coincident { offset } => {
                if n > 0 {
                    offset.sample(rng, &mut coords[..d]);
                    for i in 1..n {
                        coords.copy_within(0..d, i * d);
                    }
                }
            }
            law => {
                let offset = law.offset_law(n);
                for chunk in coords.chunks_exact_mut(d) {
                    offset.sample(rng, chunk);
                }
            }
        }
        ClusterVector::new(d, coords).expect("consistent dimension")
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> ClusterVector {
        let n = self.sample_size(rng);
        self.sample_given_size(n, rng)
    }

    /// Whether `η_n` has a density on `X^n` for every `n` with `p_n > 0`.
    pub fn absolutely_continuous(&self) -> bool {
        (1..=self.n_max()).filter(|n| self.p(*n) > 0.0).all(|n| self.has_density(n))
    }

    fn has_density(&self, n: usize) -> bool {
        match &self.in_cluster {
            InClusterLaw::Coincident { offset } => n <= 1 && offset.is_continuous(),
            law => law.offset_law(n).is_continuous(),
        }
    }

    /// Conditional density `h_n(ȳ)` of a size-`n` cluster, with gradient.
    pub fn h_n_grad(&self, y: &[f64], grad: &mut [f64]) -> Result<f64> {
        let d = self.dim;
        let n = y.len() / d;
        if !self.has_density(n) {
            return Err(Error::ModelMismatch("in-cluster law has no density".into()));
        }
        let offset = self.in_cluster.offset_law(n);
        let mut vals = vec![0.0; n];
        let mut grads = vec![0.0; n * d];
        for i in 0..n {
            vals[i] = offset.density_grad(&y[i * d..(i + 1) * d], &mut grads[i * d..(i + 1) * d]).unwrap_or(0.0);
        }
        let total: f64 = vals.iter().product();
        for i in 0..n {
            let others: f64 = vals.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v).product();
            for k in 0..d {
                grad[i * d + k] = grads[i * d + k] * others;
            }
        }
        Ok(total)
    }

    pub fn h_n(&self, y: &[f64]) -> Result<f64> {
        let mut g = vec![0.0; y.len()];
        self.h_n_grad(y, &mut g)
    }

    /// Union bound on the probability that a cluster has a point farther
    /// than `r` (sup-norm) from its centre.
    pub fn tail_prob(&self, r: f64) -> f64 {
        let p: f64 = match &self.in_cluster {
            InClusterLaw::Coincident { offset } => (1.0 - self.p(0)) * offset.tail_prob(r),
            law => (1..=self.n_max()).map(|n| self.p(n) * n as f64 * law.offset_law(n).tail_prob(r)).sum(),
        };
        p.min(1.0)
    }

    /// Standard deviations when every offset law is the same centred Gaussian
    /// and points are independent.
    pub fn gaussian_sigma(&self) -> Option<&[f64]> {
        let laws = match &self.in_cluster {
            InClusterLaw::Iid { offset } => vec![offset],
            InClusterLaw::PerSize { laws } => laws.iter().take(self.n_max().max(1)).collect(),
            InClusterLaw::Coincident { .. } => return None,
        };
        let first = match laws.first() {
            Some(OffsetLaw::Gaussian { sigma }) => sigma,
            _ => return None,
        };
        laws.iter()
            .all(|l| matches!(l, OffsetLaw::Gaussian { sigma } if sigma == first))
            .then_some(first.as_slice())
    }

    /// Whether in-cluster configurations are a.s. simple.
    pub fn simple_clusters(&self) -> bool {
        match &self.in_cluster {
            InClusterLaw::Coincident { .. } => self.n_max() <= 1,
            law => (2..=self.n_max())
                .filter(|n| self.p(*n) > 0.0)
                .all(|n| law.offset_law(n).is_continuous()),
        }
    }

    /// Whether in-cluster configurations have no fixed points.
    pub fn no_fixed_points(&self) -> bool {
        self.in_cluster.laws().iter().all(|l| l.is_continuous()) || self.n_max() == 0
    }

    pub fn bounded_support(&self) -> bool {
        self.in_cluster.laws().iter().all(|l| l.bounded_support()) || self.n_max() == 0
    }

    fn cutoff(&self, sigmas: f64) -> Option<f64> {
        let mut r: f64 = 0.0;
        for l in self.in_cluster.laws() {
            r = r.max(l.cutoff(sigmas)?);
        }
        Some(r)
    }
}

/// How `s_n` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaStarMethod {
    /// Closed form when the model admits it, quadrature otherwise.
    #[default]
    Auto,
    Quadrature,
    GaussianClosedForm,
}

/// Numerical parameters of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Centre-space truncation radius; derived from `eps_trunc` when absent.
    pub r_trunc: Option<f64>,
    pub eps_trunc: f64,
    pub quad_abs: f64,
    pub quad_rel: f64,
    /// Gaussian tails are cut at this many deviations in quadrature.
    pub tail_sigmas: f64,
    pub n_max: usize,
    pub mc_samples: usize,
    pub laplace_nodes: usize,
    pub laplace_clusters: usize,
    pub droplet_grid: usize,
    pub normalization_samples: usize,
    pub lambda_star_method: LambdaStarMethod,
    pub seed: u64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            r_trunc: None,
            eps_trunc: 1e-4,
            quad_abs: 1e-8,
            quad_rel: 1e-10,
            tail_sigmas: 8.0,
            n_max: 8,
            mc_samples: 100_000,
            laplace_nodes: 64,
            laplace_clusters: 4096,
            droplet_grid: 1024,
            normalization_samples: 1_000_000,
            lambda_star_method: LambdaStarMethod::Auto,
            seed: 0x5eed,
        }
    }
}

impl Numerics {
    pub fn tolerance(&self) -> Tolerance {
        Tolerance { abs: self.quad_abs, rel: self.quad_rel }
    }
}

/// Result of the truncation-radius check done at model construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationCheck {
    pub r_trunc: f64,
    pub eps_trunc: f64,
    /// Analytic union bound on the cluster-spread tail at `r_trunc`.
    pub union_bound: f64,
    /// Fraction of Monte Carlo clusters with a point beyond `r_trunc`.
    pub mc_fraction: f64,
    pub mc_draws: usize,
}

/// `(d, λ, η, numerics)`: the data that determine a Poisson cluster measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub dim: usize,
    pub intensity: IntensityModel,
    pub size_probs: Vec<f64>,
    pub in_cluster: InClusterLaw,
    #[serde(default)]
    pub numerics: Numerics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterProcessModel {
    pub dim: usize,
    pub intensity: IntensityModel,
    pub law: ClusterLaw,
    pub numerics: Numerics,
    truncation: TruncationCheck,
}

const TRUNCATION_MC_DRAWS: usize = 20_000;

impl ClusterProcessModel {
    pub fn new(intensity: IntensityModel, law: ClusterLaw, numerics: Numerics) -> Result<Self> {
        let dim = law.dim;
        intensity.validate(dim)?;
        law.validate(numerics.n_max)?;
        if !(numerics.eps_trunc > 0.0 && numerics.eps_trunc < 1.0) {
            return Err(crate::error::invalid("eps_trunc must lie in (0, 1)"));
        }
        let r_trunc = match numerics.r_trunc {
            Some(r) if r > 0.0 && r.is_finite() => r,
            Some(_) => return Err(crate::error::invalid("r_trunc must be positive")),
            None => solve_radius(&law, numerics.eps_trunc),
        };
        let runner = McRunner::new(crate::stats::mix_seed(numerics.seed, 0x7275));
        let m = runner.run(TRUNCATION_MC_DRAWS, 1, |rng, row| {
            let c = law.sample(rng);
            row[0] = if c.coords().iter().any(|v| v.abs() > r_trunc) { 1.0 } else { 0.0 };
        });
        let truncation = TruncationCheck {
            r_trunc,
            eps_trunc: numerics.eps_trunc,
            union_bound: law.tail_prob(r_trunc),
            mc_fraction: m.mean(0),
            mc_draws: TRUNCATION_MC_DRAWS,
        };
        Ok(Self { dim, intensity, law, numerics, truncation })
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let law = ClusterLaw { dim: spec.dim, size_probs: spec.size_probs.clone(), in_cluster: spec.in_cluster.clone() };
        Self::new(spec.intensity.clone(), law, spec.numerics.clone())
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            dim: self.dim,
            intensity: self.intensity.clone(),
            size_probs: self.law.size_probs.clone(),
            in_cluster: self.law.in_cluster.clone(),
            numerics: self.numerics.clone(),
        }
    }

    /// Gaussian clusters on Lebesgue centres in one dimension with unit spread.
    pub fn gaussian_lebesgue(sigma: Vec<f64>, size_probs: Vec<f64>) -> Result<Self> {
        Self::new(IntensityModel::lebesgue(), ClusterLaw::product_gaussian(sigma, size_probs)?, Numerics::default())
    }

    pub fn with_numerics(mut self, f: impl FnOnce(&mut Numerics)) -> Result<Self> {
        f(&mut self.numerics);
        Self::new(self.intensity, self.law, self.numerics)
    }

    pub fn r_trunc(&self) -> f64 {
        self.truncation.r_trunc
    }

    pub fn truncation(&self) -> &TruncationCheck {
        &self.truncation
    }

    pub fn tolerance(&self) -> Tolerance {
        self.numerics.tolerance()
    }

    /// Whether `λ*` has a density on every `X^n` with `p_n > 0`.
    pub fn lambda_star_ac(&self) -> bool {
        self.law.absolutely_continuous()
    }

    fn closed_form_applicable(&self) -> bool {
        matches!(self.intensity, IntensityModel::Lebesgue { .. }) && self.law.gaussian_sigma().is_some()
    }

    pub fn resolved_method(&self) -> LambdaStarMethod {
        match self.numerics.lambda_star_method {
            LambdaStarMethod::Auto if self.closed_form_applicable() => LambdaStarMethod::GaussianClosedForm,
            LambdaStarMethod::Auto => LambdaStarMethod::Quadrature,
            m => m,
        }
    }
}

fn solve_radius(law: &ClusterLaw, eps: f64) -> f64 {
    let mut hi = 1.0;
    while law.tail_prob(hi) > eps {
        hi *= 2.0;
        if hi > 1e12 {
            return hi;
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if law.tail_prob(mid) > eps { lo = mid } else { hi = mid }
    }
    hi
}

fn check_cluster(model: &ClusterProcessModel, y: &ClusterVector) -> Result<usize> {
    if y.dim() != model.dim {
        return Err(Error::DimensionMismatch { expected: model.dim, got: y.dim() });
    }
    if y.is_empty() {
        return Err(Error::VacuousCluster);
    }
    Ok(y.len())
}

/// `s_n(ȳ)` from the Gaussian closed form (Lebesgue centres, independent
/// centred normal offsets with per-coordinate deviations `σ_k`).
pub fn lambda_star_gaussian_closed(model: &ClusterProcessModel, y: &ClusterVector) -> Result<f64> {
    let n = check_cluster(model, y)?;
    let scale = match model.intensity {
        IntensityModel::Lebesgue { scale } => scale,
        _ => return Err(Error::ModelMismatch("closed form needs Lebesgue centres".into())),
    };
    let sigma = model
        .law
        .gaussian_sigma()
        .ok_or_else(|| Error::ModelMismatch("closed form needs i.i.d. Gaussian offsets".into()))?;
    Ok(scale * gaussian_s_n(sigma, n, y.coords()))
}

fn gaussian_s_n(sigma: &[f64], n: usize, y: &[f64]) -> f64 {
    let d = sigma.len();
    let nf = n as f64;
    let mut out = 1.0;
    for (k, s) in sigma.iter().enumerate() {
        let (mut sum, mut sq) = (0.0, 0.0);
        for i in 0..n {
            let v = y[i * d + k];
            sum += v;
            sq += v * v;
        }
        let s2 = s * s;
        out *= (2.0 * std::f64::consts::PI * s2).powf(-(nf - 1.0) / 2.0)
            * nf.powf(-0.5)
            * (-(sq - sum * sum / nf) / (2.0 * s2)).exp();
    }
    out
}

/// Closed-form `∇ log s_n` for the Gaussian model.
pub(crate) fn gaussian_beta(sigma: &[f64], y: &[f64]) -> Vec<f64> {
    let d = sigma.len();
    let n = y.len() / d;
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for k in 0..d {
            mean[k] += y[i * d + k] / n as f64;
        }
    }
    (0..n * d).map(|j| -(y[j] - mean[j % d]) / (sigma[j % d] * sigma[j % d])).collect()
}

/// `s_n(ȳ)` and `∇ s_n(ȳ)` by quadrature sharing one set of nodes.
pub fn lambda_star_s_grad_quadrature(model: &ClusterProcessModel, y: &ClusterVector) -> Result<(QuadValue, Vec<f64>)> {
    let n = check_cluster(model, y)?;
    let d = model.dim;
    if !model.law.has_density(n) {
        return Err(Error::ModelMismatch("lambda_star is not absolutely continuous for this model".into()));
    }
    let m = 1 + n * d;
    let yc = y.coords();
    let integrand = |x: &[f64], out: &mut [f64]| {
        let l = model.intensity.density(x);
        if l == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let z: Vec<f64> = yc.iter().enumerate().map(|(j, v)| v - x[j % d]).collect();
        let (head, grad) = out.split_at_mut(1);
        let h = model.law.h_n_grad(&z, grad).unwrap_or(0.0);
        head[0] = h * l;
        grad.iter_mut().for_each(|g| *g *= l);
    };
    let tol = model.tolerance();
    let lo: Vec<f64> = (0..d).map(|k| y.points().map(|p| p[k]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..d).map(|k| y.points().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let (vals, err) = match model.law.cutoff(model.numerics.tail_sigmas) {
        Some(r) => {
            let region = Bounds::new(lo.iter().map(|v| v - r).collect(), hi.iter().map(|v| v + r).collect())
                .intersect(&model.intensity.support());
            if region.is_empty() {
                (vec![0.0; m], 0.0)
            } else {
                quadrature::integrate_box_vec(&integrand, m, &region.lower, &region.upper, tol)
            }
        }
        None => {
            if d != 1 {
                return Err(Error::ModelMismatch("heavy-tailed offsets are one-dimensional".into()));
            }
            let centre = 0.5 * (lo[0] + hi[0]);
            let r0 = HEAVY_TAIL_START + 0.5 * (hi[0] - lo[0]);
            let mut acc = vec![0.0; m];
            let mut acc_err = 0.0;
            let mut last_r = 0.0;
            let f1 = |x: f64, out: &mut [f64]| integrand(&[x], out);
            let mut grads_at_end = vec![0.0; m];
            let q = quadrature::doubling_integral(
                |r| {
                    let pieces: Vec<(f64, f64)> = if last_r == 0.0 {
                        vec![(centre - r, centre + r)]
                    } else {
                        vec![(centre - r, centre - last_r), (centre + last_r, centre + r)]
                    };
                    for (a, b) in pieces {
                        let (v, e) = quadrature::adaptive_vec(f1, m, a, b, tol);
                        acc.iter_mut().zip(&v).for_each(|(s, x)| *s += x);
                        acc_err += e;
                    }
                    last_r = r;
                    grads_at_end.copy_from_slice(&acc);
                    QuadValue { value: acc[0], error: acc_err }
                },
                r0,
                tol,
                DoublingRule::default(),
                "lambda_star density",
            )?;
            grads_at_end[0] = q.value;
            (grads_at_end, q.error)
        }
    };
    Ok((QuadValue { value: vals[0], error: err }, vals[1..].to_vec()))
}

/// `s_n(ȳ)` with the model's configured method.
pub fn lambda_star_s(model: &ClusterProcessModel, y: &ClusterVector) -> Result<QuadValue> {
    match model.resolved_method() {
        LambdaStarMethod::GaussianClosedForm => lambda_star_gaussian_closed(model, y).map(QuadValue::exact),
        _ => lambda_star_s_grad_quadrature(model, y).map(|(s, _)| s),
    }
}

/// `λ*`-density `p_n s_n(ȳ)` on `X^n`.
pub fn lambda_star_density(model: &ClusterProcessModel, y: &ClusterVector) -> Result<QuadValue> {
    let s = lambda_star_s(model, y)?;
    let p = model.law.p(y.len());
    Ok(QuadValue { value: p * s.value, error: p * s.error })
}

/// `λ*_n` of a box `B_1 × … × B_n ⊂ X^n` (coordinates in point order),
/// i.e. `p_n ∫ η_n(B - x) λ(dx)`, with region doubling in one dimension.
pub fn lambda_star_box_mass(model: &ClusterProcessModel, n: usize, b: &Bounds) -> Result<QuadValue> {
    let d = model.dim;
    if n == 0 {
        return Err(Error::VacuousCluster);
    }
    if b.lower.len() != n * d {
        return Err(Error::DimensionMismatch { expected: n * d, got: b.lower.len() });
    }
    let p = model.law.p(n);
    if p == 0.0 {
        return Ok(QuadValue::exact(0.0));
    }
    let law = &model.law;
    let integrand = |x: &[f64]| -> f64 {
        let l = model.intensity.density(x);
        if l == 0.0 {
            return 0.0;
        }
        let shifted = |i: usize| -> (Vec<f64>, Vec<f64>) {
            (
                (0..d).map(|k| b.lower[i * d + k] - x[k]).collect(),
                (0..d).map(|k| b.upper[i * d + k] - x[k]).collect(),
            )
        };
        let prob = match &law.in_cluster {
            InClusterLaw::Coincident { offset } => {
                let mut lo = vec![f64::NEG_INFINITY; d];
                let mut hi = vec![f64::INFINITY; d];
                for i in 0..n {
                    let (a, c) = shifted(i);
                    for k in 0..d {
                        lo[k] = lo[k].max(a[k]);
                        hi[k] = hi[k].min(c[k]);
                    }
                }
                if lo.iter().zip(&hi).any(|(a, c)| a > c) { 0.0 } else { offset.box_prob(&lo, &hi) }
            }
            other => {
                let offset = other.offset_law(n);
                (0..n).map(|i| {
                    let (a, c) = shifted(i);
                    offset.box_prob(&a, &c)
                })
                .product()
            }
        };
        prob * l
    };
    let tol = model.tolerance();
    let blo: Vec<f64> = (0..d).map(|k| (0..n).map(|i| b.lower[i * d + k]).fold(f64::INFINITY, f64::min)).collect();
    let bhi: Vec<f64> = (0..d).map(|k| (0..n).map(|i| b.upper[i * d + k]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let q = if d == 1 {
        let centre = 0.5 * (blo[0] + bhi[0]);
        let reach = law.cutoff(model.numerics.tail_sigmas).unwrap_or(HEAVY_TAIL_START);
        let r0 = reach + 0.5 * (bhi[0] - blo[0]);
        let support = model.intensity.support();
        let clip = |a: f64, c: f64| -> (f64, f64) {
            if support.is_empty() { (0.0, 0.0) } else { (a.max(support.lower[0]), c.min(support.upper[0])) }
        };
        let mut acc = QuadValue::exact(0.0);
        let mut last_r = 0.0;
        quadrature::doubling_integral(
            |r| {
                let pieces = if last_r == 0.0 {
                    vec![(centre - r, centre + r)]
                } else {
                    vec![(centre - r, centre - last_r), (centre + last_r, centre + r)]
                };
                for (a, c) in pieces {
                    let (a, c) = clip(a, c);
                    if c > a {
                        let v = quadrature::adaptive(|x| integrand(&[x]), a, c, tol);
                        acc.value += v.value;
                        acc.error += v.error;
                    }
                }
                last_r = r;
                acc
            },
            r0,
            tol,
            DoublingRule::default(),
            "lambda_star box mass",
        )?
    } else {
        let r = law
            .cutoff(model.numerics.tail_sigmas)
            .ok_or_else(|| Error::ModelMismatch("heavy-tailed offsets are one-dimensional".into()))?;
        let region = Bounds::new(blo.iter().map(|v| v - r).collect(), bhi.iter().map(|v| v + r).collect())
            .intersect(&model.intensity.support());
        if region.is_empty() {
            QuadValue::exact(0.0)
        } else if !region.lower.iter().chain(&region.upper).all(|v| v.is_finite()) {
            return Err(Error::Divergent(DivergenceReport { context: "lambda_star box mass".into(), history: vec![] }));
        } else {
            quadrature::integrate_box(integrand, &region.lower, &region.upper, tol)
        }
    };
    Ok(QuadValue { value: p * q.value, error: p * q.error })
}

/// `λ*(𝔛_B)` by Monte Carlo over `η` of the droplet measure `λ(D_B(ȳ))`.
pub fn lambda_star_region_mass(model: &ClusterProcessModel, b: &Window, n_samples: usize, seed: u64) -> Result<Estimate> {
    properness::mean_droplet_mass(model, b, n_samples, seed)
}

/// Rows of the orthogonal matrix `U_n` with `z = ȳ U_n`: column 0 is
/// `1/√n`, column `j` the `j`-th Helmert contrast.
pub fn helmert(n: usize) -> Vec<Vec<f64>> {
    let mut u = vec![vec![0.0; n]; n];
    for row in u.iter_mut() {
        row[0] = 1.0 / (n as f64).sqrt();
    }
    for j in 1..n {
        let c = 1.0 / ((j * (j + 1)) as f64).sqrt();
        for row in u.iter_mut().take(j) {
            row[j] = c;
        }
        u[j][j] = -(j as f64) * c;
    }
    u
}

/// Applies `U_n` coordinatewise in each of the `d` spatial directions.
pub fn to_orthogonal(y: &[f64], n: usize, d: usize) -> Vec<f64> {
    let u = helmert(n);
    let mut z = vec![0.0; n * d];
    for j in 0..n {
        for k in 0..d {
            z[j * d + k] = (0..n).map(|i| y[i * d + k] * u[i][j]).sum();
        }
    }
    z
}

/// Inverse of [`to_orthogonal`].
pub fn from_orthogonal(z: &[f64], n: usize, d: usize) -> Vec<f64> {
    let u = helmert(n);
    let mut y = vec![0.0; n * d];
    for i in 0..n {
        for k in 0..d {
            y[i * d + k] = (0..n).map(|j| z[j * d + k] * u[i][j]).sum();
        }
    }
    y
}

/// Both sides of the orthogonal decomposition of `λ*_n` on `B_1 × B'`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthogonalCheck {
    /// `λ*_n(B_1 × B')` by quadrature of the density in `z`-coordinates.
    pub direct: QuadValue,
    /// `p_n n^{-d/2} λ(B_1) η'_n(B')` with `η'_n` estimated by Monte Carlo.
    pub product: Estimate,
    pub residual: f64,
    pub se: f64,
}

/// `B_1` is a box in `X`, `B'` a box in `X^{n-1}` (contrast coordinates).
pub fn orthogonal_decomposition_check(
    model: &ClusterProcessModel,
    n: usize,
    b1: &Bounds,
    b_rest: &Bounds,
    n_samples: usize,
    seed: u64,
) -> Result<OrthogonalCheck> {
    let d = model.dim;
    let scale = match model.intensity {
        IntensityModel::Lebesgue { scale } => scale,
        _ => return Err(Error::ModelMismatch("orthogonal decomposition needs a translation-invariant intensity".into())),
    };
    if n == 0 {
        return Err(Error::VacuousCluster);
    }
    if b1.lower.len() != d || b_rest.lower.len() != (n - 1) * d {
        return Err(Error::DimensionMismatch { expected: n * d, got: b1.lower.len() + b_rest.lower.len() });
    }
    let p = model.law.p(n);
    let vol1: f64 = b1.lower.iter().zip(&b1.upper).map(|(a, b)| (b - a).max(0.0)).product();
    let lower: Vec<f64> = b1.lower.iter().chain(&b_rest.lower).cloned().collect();
    let upper: Vec<f64> = b1.upper.iter().chain(&b_rest.upper).cloned().collect();
    let direct = if vol1 == 0.0 || p == 0.0 {
        QuadValue::exact(0.0)
    } else {
        let err = std::cell::Cell::new(0.0f64);
        let q = quadrature::integrate_box(
            |z| {
                let y = ClusterVector::new(d, from_orthogonal(z, n, d)).expect("dimension");
                match lambda_star_s(model, &y) {
                    Ok(s) => {
                        err.set(err.get().max(s.error));
                        p * s.value
                    }
                    Err(_) => f64::NAN,
                }
            },
            &lower,
            &upper,
            model.tolerance(),
        );
        let vol: f64 = lower.iter().zip(&upper).map(|(a, b)| b - a).product();
        QuadValue { value: q.value, error: q.error + p * vol * err.get() }
    };
    let contrast = if n == 1 {
        Estimate::exact(1.0)
    } else {
        let m = McRunner::new(seed).run(n_samples, 1, |rng, row| {
            let y = model.law.sample_given_size(n, rng);
            let z = to_orthogonal(y.coords(), n, d);
            let inside = z[d..].iter().enumerate().all(|(j, v)| *v >= b_rest.lower[j] && *v <= b_rest.upper[j]);
            row[0] = if inside { 1.0 } else { 0.0 };
        });
        m.estimate(0)
    };
    let factor = p * (n as f64).powf(-(d as f64) / 2.0) * scale * vol1;
    let product = Estimate { mean: factor * contrast.mean, se: factor * contrast.se, n: contrast.n };
    let residual = (direct.value - product.mean).abs();
    let se = (product.se * product.se + direct.error * direct.error).sqrt();
    Ok(OrthogonalCheck { direct, product, residual, se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::substream;

    fn ex1(size_probs: Vec<f64>) -> ClusterProcessModel {
        ClusterProcessModel::gaussian_lebesgue(vec![1.0], size_probs).unwrap()
    }

    fn quad(model: &ClusterProcessModel) -> ClusterProcessModel {
        model.clone().with_numerics(|n| n.lambda_star_method = LambdaStarMethod::Quadrature).unwrap()
    }

    #[test]
    fn gaussian_closed_form_values() {
        let m = ex1(vec![0.0, 0.0, 1.0]);
        let s = lambda_star_gaussian_closed(&m, &ClusterVector::scalar(&[0.0, 0.0])).unwrap();
        assert!((s - 0.5 / std::f64::consts::PI.sqrt()).abs() < 1e-15);
        let s = lambda_star_gaussian_closed(&m, &ClusterVector::scalar(&[1.0, -1.0])).unwrap();
        assert!((s - (-1.0f64).exp() / (2.0 * std::f64::consts::PI.sqrt())).abs() < 1e-15);
        let m1 = ex1(vec![0.0, 1.0]);
        for y in [-3.0, 0.0, 2.5] {
            assert!((lambda_star_gaussian_closed(&m1, &ClusterVector::scalar(&[y])).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let m = quad(&ex1(vec![0.0, 0.4, 0.3, 0.3]));
        for y in [[0.0, 0.0, 0.0], [1.0, -1.0, 0.5], [-2.0, 2.0, 0.0]] {
            for n in 1..=3 {
                let c = ClusterVector::scalar(&y[..n]);
                let q = lambda_star_s(&m, &c).unwrap().value;
                let e = lambda_star_gaussian_closed(&m, &c).unwrap();
                assert!((q - e).abs() <= 1e-9 * e, "{n} {y:?}: {q} vs {e}");
            }
        }
    }

    #[test]
    fn density_includes_size_probability() {
        let m = ex1(vec![0.0, 0.25, 0.75]);
        let v = lambda_star_density(&m, &ClusterVector::scalar(&[0.0, 0.0])).unwrap().value;
        assert!((v - 0.75 * 0.5 / std::f64::consts::PI.sqrt()).abs() < 1e-15);
        assert_eq!(lambda_star_density(&m, &ClusterVector::empty(1)), Err(Error::VacuousCluster));
    }

    #[test]
    fn blowup_density_diverges() {
        let law = ClusterLaw::new(1, vec![0.0, 1.0], InClusterLaw::Iid { offset: OffsetLaw::HeavyTail }).unwrap();
        let m = ClusterProcessModel::new(IntensityModel::ExpWeight, law, Numerics::default()).unwrap();
        match lambda_star_density(&m, &ClusterVector::scalar(&[0.5])) {
            Err(Error::Divergent(r)) => {
                assert!(r.history.len() >= 5);
                assert!(r.history.windows(2).all(|w| w[1].1 > w[0].1));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
        let b = Bounds::new(vec![0.0], vec![1.0]);
        assert!(matches!(lambda_star_box_mass(&m, 1, &b), Err(Error::Divergent(_))));
    }

    #[test]
    fn heavy_tail_on_lebesgue_converges() {
        let law = ClusterLaw::new(1, vec![0.0, 1.0], InClusterLaw::Iid { offset: OffsetLaw::HeavyTail }).unwrap();
        let m = ClusterProcessModel::new(IntensityModel::lebesgue(), law, Numerics::default()).unwrap();
        let s = lambda_star_s(&m, &ClusterVector::scalar(&[0.3])).unwrap();
        assert!((s.value - 1.0).abs() < 1e-6, "{s:?}");
        let b = lambda_star_box_mass(&m, 1, &Bounds::new(vec![0.0], vec![1.0])).unwrap();
        assert!((b.value - 1.0).abs() < 1e-6, "{b:?}");
    }

    #[test]
    fn box_mass_for_single_points_is_lambda() {
        let m = ex1(vec![0.0, 1.0]);
        let q = lambda_star_box_mass(&m, 1, &Bounds::new(vec![-0.5], vec![2.0])).unwrap();
        assert!((q.value - 2.5).abs() < 1e-8);
    }

    #[test]
    fn helmert_is_orthogonal() {
        for n in 1..6 {
            let u = helmert(n);
            for a in 0..n {
                for b in 0..n {
                    let dot: f64 = (0..n).map(|i| u[i][a] * u[i][b]).sum();
                    assert!((dot - if a == b { 1.0 } else { 0.0 }).abs() < 1e-14);
                }
            }
        }
        let z = to_orthogonal(&[1.0, 3.0], 2, 1);
        assert!((z[1] - (1.0 - 3.0) / 2f64.sqrt()).abs() < 1e-15);
        let y = from_orthogonal(&z, 2, 1);
        assert!((y[0] - 1.0).abs() < 1e-14 && (y[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn orthogonal_decomposition_examples() {
        let m = ex1(vec![0.0, 0.0, 1.0]);
        let r = orthogonal_decomposition_check(
            &m,
            2,
            &Bounds::new(vec![0.0], vec![1.0]),
            &Bounds::new(vec![-0.5], vec![1.0]),
            200_000,
            7,
        )
        .unwrap();
        let exact = (1.0 / 2f64.sqrt()) * (normal_cdf(1.0) - normal_cdf(-0.5));
        assert!((r.direct.value - exact).abs() < 1e-8, "{r:?}");
        assert!(r.residual <= 3.0 * r.se, "{r:?}");
        let m1 = ex1(vec![0.0, 1.0]);
        let r = orthogonal_decomposition_check(&m1, 1, &Bounds::new(vec![0.0], vec![2.0]), &Bounds::new(vec![], vec![]), 10, 1)
            .unwrap();
        assert!(r.residual < 1e-8);
        let r = orthogonal_decomposition_check(&m, 2, &Bounds::new(vec![0.5], vec![0.5]), &Bounds::new(vec![-1.0], vec![1.0]), 10, 1)
            .unwrap();
        assert_eq!((r.direct.value, r.product.mean), (0.0, 0.0));
    }

    #[test]
    fn non_translation_invariant_decomposition_errors() {
        let law = ClusterLaw::product_gaussian(vec![1.0], vec![0.0, 1.0]).unwrap();
        let m = ClusterProcessModel::new(IntensityModel::ExpWeight, law, Numerics::default()).unwrap();
        let r = orthogonal_decomposition_check(&m, 1, &Bounds::new(vec![0.0], vec![1.0]), &Bounds::new(vec![], vec![]), 10, 1);
        assert!(matches!(r, Err(Error::ModelMismatch(_))));
    }

    #[test]
    fn exp_weight_mass_and_sampling() {
        let l = IntensityModel::ExpWeight;
        assert!((l.interval_mass(-1.0, 2.0) - ((1f64.exp() - 1.0) + (2f64.exp() - 1.0))).abs() < 1e-12);
        let mut rng = substream(1, 0);
        let b = Bounds::new(vec![-1.0], vec![2.0]);
        let mut x = [0.0];
        let mut above = 0usize;
        let n = 100_000;
        for _ in 0..n {
            l.sample_in(&b, &mut rng, &mut x);
            assert!((-1.0..=2.0).contains(&x[0]));
            if x[0] > 1.0 {
                above += 1;
            }
        }
        let p = l.interval_mass(1.0, 2.0) / l.interval_mass(-1.0, 2.0);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((above as f64 / n as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn bump_intensity_sampler_matches_density() {
        let l = IntensityModel::BumpDensity { density: SmoothTestFunction::bump(vec![0.0], 1.0, 3.0) };
        let b = l.support();
        let total = l.box_mass(&b.lower, &b.upper).value;
        let inner = l.interval_mass(-0.3, 0.3);
        let mut rng = substream(2, 0);
        let mut x = [0.0];
        let n = 100_000;
        let mut hits = 0usize;
        for _ in 0..n {
            l.sample_in(&b, &mut rng, &mut x);
            if x[0].abs() <= 0.3 {
                hits += 1;
            }
        }
        let p = inner / total;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn offset_laws_integrate_to_one_and_match_samplers() {
        let heavy = OffsetLaw::HeavyTail;
        let total = quadrature::adaptive(|x| heavy.density(&[x]).unwrap(), -1e3, 1e3, Tolerance::default()).value;
        assert!((total - (1.0 - 1.0 / (1e6 + 1.0))).abs() < 1e-7);
        assert!((heavy.box_prob(&[-2.0], &[1.0]) - (0.5 * (1.0 - 1.0 / 5.0) + 0.5 * (1.0 - 1.0 / 2.0))).abs() < 1e-14);
        let mut rng = substream(3, 0);
        let mut z = [0.0];
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| {
                heavy.sample(&mut rng, &mut z);
                z[0] > -2.0 && z[0] < 1.0
            })
            .count();
        let p = heavy.box_prob(&[-2.0], &[1.0]);
        assert!((hits as f64 / n as f64 - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
        let g = OffsetLaw::Gaussian { sigma: vec![0.5, 2.0] };
        let p = g.box_prob(&[-0.5, 0.0], &[0.5, 10.0]);
        assert!((p - (normal_cdf(1.0) - normal_cdf(-1.0)) * (normal_cdf(5.0) - 0.5)).abs() < 1e-14);
    }

    #[test]
    fn h_n_is_exchangeable_and_normalized() {
        let law = ClusterLaw::product_gaussian(vec![1.3], vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let a = law.h_n(&[0.1, -0.7, 1.2]).unwrap();
        let b = law.h_n(&[1.2, 0.1, -0.7]).unwrap();
        assert_eq!(a, b);
        let law2 = ClusterLaw::product_gaussian(vec![1.3], vec![0.0, 0.0, 1.0]).unwrap();
        let t2 = quadrature::integrate_box(|y| law2.h_n(y).unwrap(), &[-11.0; 2], &[11.0; 2], Tolerance::default());
        assert!((t2.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn truncation_radius_meets_bound() {
        let m = ex1(vec![0.1, 0.3, 0.3, 0.3]);
        let t = m.truncation();
        assert!(t.union_bound <= t.eps_trunc * 1.0001);
        assert!(t.mc_fraction <= 10.0 * t.eps_trunc);
        assert!(t.r_trunc > 3.0 && t.r_trunc < 6.0);
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(ClusterLaw::product_gaussian(vec![1.0], vec![0.5, 0.6]).is_err());
        assert!(ClusterLaw::product_gaussian(vec![-1.0], vec![0.0, 1.0]).is_err());
        let mut probs = vec![0.0; 10];
        probs[9] = 1.0;
        let law = ClusterLaw::product_gaussian(vec![1.0], probs).unwrap();
        assert!(ClusterProcessModel::new(IntensityModel::lebesgue(), law, Numerics::default()).is_err());
        let law = ClusterLaw::product_gaussian(vec![1.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(ClusterProcessModel::new(IntensityModel::ExpWeight, law, Numerics::default()).is_err());
    }
}
