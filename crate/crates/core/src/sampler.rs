//! Poisson, marked, lifted and projected samplers.
//!
//! A Poisson cluster configuration in a window `K` is produced by projection:
//! centres are drawn from `λ` on the enlarged window `K ⊕ R_trunc`, every
//! centre receives an independent cluster from `η`, clusters that put a point
//! in `K` are kept (a sample of `π_{λ*}` restricted to `𝔛_K`), and their
//! points are unpacked.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::configspace::{
    project_lifted_in, shift_cluster, Bounds, ClusterVector, Configuration, LiftedConfiguration, Window,
};
use crate::measures::{ClusterProcessModel, IntensityModel};
use crate::stats::McRunner;
use crate::{DivergenceReport, Error, Result};

/// Means below this use inversion, above it PTRS rejection.
const INVERSION_LIMIT: f64 = 30.0;

/// Poisson variate by sequential inversion (small means) or Hörmann's
/// transformed rejection with squeeze (large means).
pub fn poisson_count(mean: f64, rng: &mut ChaCha8Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean < INVERSION_LIMIT {
        let u: f64 = rng.random();
        let mut p = (-mean).exp();
        let mut cdf = p;
        let mut k = 0u64;
        while u > cdf {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
            if p == 0.0 && cdf < u {
                break;
            }
        }
        return k;
    }
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -mean + k * loglam - ln_gamma(k + 1.0) {
            return k as u64;
        }
    }
}

fn finite_mass(lambda: &IntensityModel, w: &Window) -> Result<(f64, Option<Bounds>)> {
    let Some(eff) = lambda.effective_window(w) else {
        return Ok((0.0, None));
    };
    let mass = lambda.box_mass(&eff.lower, &eff.upper).value;
    if !mass.is_finite() {
        return Err(Error::Divergent(DivergenceReport {
            context: "intensity mass of the sampling window".into(),
            history: vec![(f64::INFINITY, mass)],
        }));
    }
    Ok((mass, Some(eff)))
}

/// Centres of a Poisson configuration with intensity `λ` on `Λ`, as raw
/// coordinates in draw order.
fn poisson_points(lambda: &IntensityModel, mass: f64, eff: &Bounds, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = poisson_count(mass, rng);
    let d = eff.lower.len();
    (0..n)
        .map(|_| {
            let mut x = vec![0.0; d];
            lambda.sample_in(eff, rng, &mut x);
            x
        })
        .collect()
}

/// Poisson configuration with intensity `λ` on the window `Λ`.
pub fn sample_poisson(lambda: &IntensityModel, w: &Window, rng: &mut ChaCha8Rng) -> Result<Configuration> {
    let (mass, eff) = finite_mass(lambda, w)?;
    let Some(eff) = eff else {
        return Ok(Configuration::empty(w.clone()));
    };
    let pts = poisson_points(lambda, mass, &eff, rng);
    Ok(Configuration::from_points(pts.iter().map(|p| p.as_slice()), w.clone()))
}

/// Marked Poisson configuration: centres on `Λ_c`, each carrying its own
/// shifted cluster `ȳ_x + x`.
pub fn sample_marked(model: &ClusterProcessModel, wc: &Window, rng: &mut ChaCha8Rng) -> Result<Vec<(Vec<f64>, ClusterVector)>> {
    let (mass, eff) = finite_mass(&model.intensity, wc)?;
    let Some(eff) = eff else {
        return Ok(Vec::new());
    };
    Ok(marked_from(model, mass, &eff, rng))
}

fn marked_from(model: &ClusterProcessModel, mass: f64, eff: &Bounds, rng: &mut ChaCha8Rng) -> Vec<(Vec<f64>, ClusterVector)> {
    let centres = poisson_points(&model.intensity, mass, eff, rng);
    centres
        .into_iter()
        .map(|x| {
            let y = model.law.sample(rng);
            let shifted = shift_cluster(&y, &x).expect("model dimension");
            (x, shifted)
        })
        .collect()
}

/// Truncation metadata attached to lifted samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationInfo {
    pub r_trunc: f64,
    pub eps_trunc: f64,
    /// Centre window `K ⊕ R_trunc` (intersected with the support of `λ`).
    pub centre_window: Option<Bounds>,
    pub centre_mass: f64,
    /// `ε_trunc · λ(K ⊕ R_trunc)`: scale of the expected number of clusters
    /// missed by the truncation.
    pub bias_scale: f64,
}

/// Sampler of `π_{λ*}` restricted to `𝔛_K` with precomputed centre window.
#[derive(Debug, Clone)]
pub struct LiftedSampler<'a> {
    model: &'a ClusterProcessModel,
    k: Window,
    eff: Option<Bounds>,
    mass: f64,
}

impl<'a> LiftedSampler<'a> {
    pub fn new(model: &'a ClusterProcessModel, k: &Window) -> Result<Self> {
        if k.dim() != model.dim {
            return Err(Error::DimensionMismatch { expected: model.dim, got: k.dim() });
        }
        if !k.is_bounded() {
            return Err(crate::error::invalid("lifted sampling needs a bounded window"));
        }
        let (mass, eff) = finite_mass(&model.intensity, &k.inflate(model.r_trunc()))?;
        Ok(Self { model, k: k.clone(), eff, mass })
    }

    pub fn window(&self) -> &Window {
        &self.k
    }

    pub fn truncation(&self) -> TruncationInfo {
        TruncationInfo {
            r_trunc: self.model.r_trunc(),
            eps_trunc: self.model.numerics.eps_trunc,
            centre_window: self.eff.clone(),
            centre_mass: self.mass,
            bias_scale: self.model.numerics.eps_trunc * self.mass,
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> LiftedConfiguration {
        let Some(eff) = &self.eff else {
            return LiftedConfiguration::default();
        };
        let kb = self.k.bounds();
        let clusters = marked_from(self.model, self.mass, eff, rng)
            .into_iter()
            .map(|(_, c)| c)
            .filter(|c| c.meets(&kb))
            .collect();
        LiftedConfiguration::new(clusters)
    }

    pub fn sample_mucl(&self, rng: &mut ChaCha8Rng) -> Configuration {
        project_lifted_in(&self.sample(rng), &self.k)
    }
}

/// One draw of `π_{λ*}` on `𝔛_K` (clusters meeting `K`).
pub fn sample_lifted(model: &ClusterProcessModel, k: &Window, rng: &mut ChaCha8Rng) -> Result<LiftedConfiguration> {
    Ok(LiftedSampler::new(model, k)?.sample(rng))
}

/// One draw of the Poisson cluster configuration in `K`.
pub fn sample_mucl(model: &ClusterProcessModel, k: &Window, rng: &mut ChaCha8Rng) -> Result<Configuration> {
    Ok(LiftedSampler::new(model, k)?.sample_mucl(rng))
}

/// `n` independent cluster configurations on seeded substreams.
pub fn sample_mucl_many(model: &ClusterProcessModel, k: &Window, n: usize, seed: u64) -> Result<Vec<Configuration>> {
    let s = LiftedSampler::new(model, k)?;
    Ok(McRunner::new(seed).map(n, |rng, _| s.sample_mucl(rng)))
}

/// `n` independent lifted configurations on seeded substreams.
pub fn sample_lifted_many(model: &ClusterProcessModel, k: &Window, n: usize, seed: u64) -> Result<Vec<LiftedConfiguration>> {
    let s = LiftedSampler::new(model, k)?;
    Ok(McRunner::new(seed).map(n, |rng, _| s.sample(rng)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::count;
    use crate::measures::{ClusterLaw, Numerics};
    use crate::stats::{chi_square_poisson, substream};

    fn delta_model() -> ClusterProcessModel {
        ClusterProcessModel::new(IntensityModel::lebesgue(), ClusterLaw::delta(1).unwrap(), Numerics::default()).unwrap()
    }

    #[test]
    fn poisson_counts_pass_chi_square() {
        for mean in [0.5, 2.0, 12.0, 45.0, 300.0] {
            let mut rng = substream(11, mean as u64);
            let counts: Vec<u64> = (0..50_000).map(|_| poisson_count(mean, &mut rng)).collect();
            let t = chi_square_poisson(&counts, mean);
            assert!(t.p_value > 0.001, "mean {mean}: {t:?}");
        }
    }

    #[test]
    fn zero_mass_window_is_empty() {
        let l = IntensityModel::BumpDensity {
            density: crate::configspace::SmoothTestFunction::bump(vec![0.0], 1.0, 1.0),
        };
        let mut rng = substream(1, 0);
        let w = Window::interval(5.0, 6.0).unwrap();
        for _ in 0..100 {
            assert!(sample_poisson(&l, &w, &mut rng).unwrap().is_empty());
        }
    }

    #[test]
    fn unbounded_window_of_infinite_mass_errors() {
        let mut rng = substream(1, 0);
        assert!(matches!(
            sample_poisson(&IntensityModel::lebesgue(), &Window::whole(1), &mut rng),
            Err(Error::Divergent(_))
        ));
    }

    #[test]
    fn marked_examples() {
        let mut rng = substream(2, 0);
        let m = delta_model();
        let w = Window::interval(0.0, 3.0).unwrap();
        for (x, c) in sample_marked(&m, &w, &mut rng).unwrap() {
            assert_eq!(c.coords(), x.as_slice());
        }
        let vacuous = ClusterProcessModel::gaussian_lebesgue(vec![1.0], vec![1.0]).unwrap();
        let marks = sample_marked(&vacuous, &w, &mut rng).unwrap();
        assert!(marks.iter().all(|(_, c)| c.is_empty()));
        assert!(sample_lifted(&vacuous, &w, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn delta_clusters_reduce_to_poisson() {
        let m = delta_model();
        let k = Window::interval(0.0, 2.0).unwrap();
        let samples = sample_mucl_many(&m, &k, 40_000, 9).unwrap();
        let counts: Vec<u64> = samples.iter().map(|g| count(g, &k)).collect();
        assert!(chi_square_poisson(&counts, 2.0).p_value > 0.001);
    }

    #[test]
    fn determinism() {
        let m = ClusterProcessModel::gaussian_lebesgue(vec![1.0], vec![0.1, 0.3, 0.3, 0.3]).unwrap();
        let k = Window::interval(0.0, 1.0).unwrap();
        let a = sample_lifted_many(&m, &k, 500, 42).unwrap();
        let b = sample_lifted_many(&m, &k, 500, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn retained_clusters_meet_window() {
        let m = ClusterProcessModel::gaussian_lebesgue(vec![1.0], vec![0.0, 0.0, 1.0]).unwrap();
        let k = Window::interval(0.0, 1.0).unwrap();
        let s = LiftedSampler::new(&m, &k).unwrap();
        let mut rng = substream(5, 0);
        for _ in 0..200 {
            for c in s.sample(&mut rng).clusters() {
                assert!(c.meets(&k.bounds()));
            }
        }
        let t = s.truncation();
        assert!((t.centre_mass - (1.0 + 2.0 * m.r_trunc())).abs() < 1e-12);
    }
}
