//! Closed-form and empirical Laplace functionals `L[f] = E exp(-⟨f, γ⟩)`.

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::configspace::{pair, shift_cluster, Bounds, ClusterVector, Configuration, SmoothTestFunction, Window};
use crate::measures::{ClusterProcessModel, IntensityModel};
use crate::properness::{droplet_mass_bounds, merge_intervals};
use crate::quadrature::{composite_rule, integrate_box, tensor_rule, QuadValue};
use crate::stats::{mean_se, mix_seed, Estimate, McRunner};
use crate::{Error, Result};

const GL_ORDER: usize = 16;

fn require_nonnegative(f: &SmoothTestFunction) -> Result<()> {
    if f.is_nonnegative() {
        Ok(())
    } else {
        Err(crate::error::invalid("Laplace functionals need a nonnegative test function"))
    }
}

/// `∫ (1 - e^{-f}) dλ` over `supp f`.
fn poisson_exponent(lambda: &IntensityModel, f: &SmoothTestFunction) -> QuadValue {
    let b = f.support().intersect(&lambda.support());
    if b.is_empty() {
        return QuadValue::exact(0.0);
    }
    let tol = crate::quadrature::Tolerance::default();
    integrate_box(|x: &[f64]| -(-f.value(x)).exp_m1() * lambda.density(x), &b.lower, &b.upper, tol)
}

/// `L_{π_λ}[f] = exp{-∫ (1 - e^{-f}) dλ}`.
pub fn laplace_poisson_closed(lambda: &IntensityModel, f: &SmoothTestFunction) -> Result<QuadValue> {
    require_nonnegative(f)?;
    let e = poisson_exponent(lambda, f);
    let v = (-e.value).exp();
    Ok(QuadValue { value: v, error: v * e.error })
}

/// For `f = a · plateau`, the Poisson Laplace values of the exact indicators
/// of the inner box and of the outer (ramp-inflated) box. The smooth value
/// lies between them.
pub fn plateau_bracket(lambda: &IntensityModel, f: &SmoothTestFunction) -> Option<(f64, f64)> {
    let SmoothTestFunction::Plateau { lower, upper, ramp, amplitude } = f else {
        return None;
    };
    let c = -(-amplitude).exp_m1();
    let inner = lambda.box_mass(lower, upper).value;
    let lo: Vec<f64> = lower.iter().map(|a| a - ramp).collect();
    let hi: Vec<f64> = upper.iter().map(|b| b + ramp).collect();
    let outer = lambda.box_mass(&lo, &hi).value;
    Some(((-c * outer).exp(), (-c * inner).exp()))
}

/// Closed-form cluster Laplace functional with its Monte Carlo error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterLaplace {
    pub value: Estimate,
    /// `∫ E_η[1 - e^{-Σ f(y_i + x)}] λ(dx)` with its standard error.
    pub exponent: Estimate,
}

/// `exp{-∫ E_η[1 - e^{-Σ_i f(y_i + x)}] λ(dx)}`.
///
/// The `η` expectation is a Monte Carlo average over `numerics.laplace_clusters`
/// clusters shared by all centre positions. For each cluster the centre
/// integral runs over `∪_i (supp f - y_i)` (exactly merged in one dimension,
/// the bounding box otherwise) with composite Gauss–Legendre rules of
/// `numerics.laplace_nodes` nodes per interval and axis.
pub fn laplace_mucl_closed(model: &ClusterProcessModel, f: &SmoothTestFunction, seed: u64) -> Result<ClusterLaplace> {
    require_nonnegative(f)?;
    let supp = f.support();
    if supp.is_empty() || model.law.p(0) == 1.0 {
        return Ok(ClusterLaplace { value: Estimate::exact(1.0), exponent: Estimate::exact(0.0) });
    }
    let k = Window::from_bounds(&supp)?;
    droplet_mass_bounds(model, &k)?;
    let lambda_supp = model.intensity.support();
    let panels = (model.numerics.laplace_nodes / GL_ORDER).max(1);
    let runner = McRunner::new(mix_seed(seed, 0x6c61)).with_batch_size(64);
    let m = runner.run(model.numerics.laplace_clusters, 1, |rng: &mut ChaCha8Rng, row| {
        let y = model.law.sample(rng);
        row[0] = cluster_exponent(model, f, &supp, &lambda_supp, &y, panels);
    });
    let exponent = m.estimate(0);
    let v = (-exponent.mean).exp();
    Ok(ClusterLaplace { value: Estimate { mean: v, se: v * exponent.se, n: exponent.n }, exponent })
}

/// Points where a one-dimensional catalog function changes regime.
fn breakpoints_1d(f: &SmoothTestFunction, out: &mut Vec<f64>) {
    match f {
        SmoothTestFunction::Bump { center, radius, .. } => out.extend([center[0] - radius, center[0] + radius]),
        SmoothTestFunction::Plateau { lower, upper, ramp, .. } => {
            out.extend([lower[0] - ramp, lower[0], upper[0], upper[0] + ramp])
        }
        SmoothTestFunction::Scaled { inner, .. } => breakpoints_1d(inner, out),
        SmoothTestFunction::Sum { terms: fs } | SmoothTestFunction::Product { factors: fs } => {
            fs.iter().for_each(|g| breakpoints_1d(g, out))
        }
    }
}

/// `[a, b]` cut at the interior points of `cuts`.
fn split_at(a: f64, b: f64, cuts: &[f64]) -> Vec<(f64, f64)> {
    let mut inner: Vec<f64> = cuts.iter().copied().filter(|c| *c > a && *c < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    let mut edges = vec![a];
    edges.extend(inner);
    edges.push(b);
    edges.windows(2).map(|w| (w[0], w[1])).collect()
}

fn cluster_exponent(
    model: &ClusterProcessModel,
    f: &SmoothTestFunction,
    supp: &Bounds,
    lambda_supp: &Bounds,
    y: &ClusterVector,
    panels: usize,
) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let integrand = |x: &[f64]| -> f64 {
        let mut s = 0.0;
        for p in y.points() {
            let z: Vec<f64> = p.iter().zip(x).map(|(a, b)| a + b).collect();
            if supp.contains(&z) {
                s += f.value(&z);
            }
        }
        -(-s).exp_m1() * model.intensity.density(x)
    };
    let shifted = |p: &[f64]| Bounds {
        lower: supp.lower.iter().zip(p).map(|(a, v)| a - v).collect(),
        upper: supp.upper.iter().zip(p).map(|(b, v)| b - v).collect(),
    };
    if model.dim == 1 {
        let iv = merge_intervals(
            y.points()
                .map(|p| shifted(p).intersect(lambda_supp))
                .filter(|b| !b.is_empty())
                .map(|b| (b.lower[0], b.upper[0]))
                .collect(),
        );
        let mut cuts = Vec::new();
        breakpoints_1d(f, &mut cuts);
        let shifted_cuts: Vec<f64> = y.points().flat_map(|p| cuts.iter().map(move |c| c - p[0])).collect();
        return iv
            .into_iter()
            .flat_map(|(a, b)| split_at(a, b, &shifted_cuts))
            .map(|(a, b)| composite_rule(a, b, panels, GL_ORDER).into_iter().map(|(x, w)| w * integrand(&[x])).sum::<f64>())
            .sum();
    }
    let hull = y.points().fold(Bounds::empty(), |acc, p| acc.hull(&shifted(p))).intersect(lambda_supp);
    if hull.is_empty() {
        return 0.0;
    }
    let axes: Vec<Vec<(f64, f64)>> =
        (0..model.dim).map(|k| composite_rule(hull.lower[k], hull.upper[k], panels, GL_ORDER)).collect();
    tensor_rule(&axes).into_iter().map(|(x, w)| w * integrand(&x)).sum()
}

/// Sample mean of `e^{-⟨f, γ⟩}`; every window must cover `supp f`.
pub fn laplace_empirical(samples: &[Configuration], f: &SmoothTestFunction) -> Result<Estimate> {
    let supp = f.support();
    if !supp.is_empty() && samples.iter().any(|g| !g.window().covers(&supp)) {
        return Err(Error::WindowTooSmall);
    }
    let values: Vec<f64> = samples.iter().map(|g| (-pair(f, g)).exp()).collect();
    Ok(mean_se(&values))
}

/// `exp{-∫_𝔛 (1 - e^{-f̃}) dλ*}` with `f̃(ȳ) = Σ f(y_i)`, the integral estimated
/// by plain Monte Carlo over centres on `supp f ⊕ R_trunc` and clusters.
pub fn laplace_lifted_form(model: &ClusterProcessModel, f: &SmoothTestFunction, n_samples: usize, seed: u64) -> Result<Estimate> {
    require_nonnegative(f)?;
    let eff = f.support().inflate(model.r_trunc()).intersect(&model.intensity.support());
    if eff.is_empty() {
        return Ok(Estimate::exact(1.0));
    }
    let mass = model.intensity.box_mass(&eff.lower, &eff.upper).value;
    if !mass.is_finite() {
        return Err(Error::Divergent(crate::DivergenceReport {
            context: "intensity mass of the centre region".into(),
            history: vec![(model.r_trunc(), mass)],
        }));
    }
    let m = McRunner::new(seed).try_run(n_samples, 1, |rng, row| {
        let mut x = vec![0.0; model.dim];
        model.intensity.sample_in(&eff, rng, &mut x);
        let y = shift_cluster(&model.law.sample(rng), &x)?;
        let s: f64 = y.points().map(|p| f.value(p)).sum();
        row[0] = -mass * (-s).exp_m1();
        Ok::<(), Error>(())
    })?;
    let e = m.estimate(0);
    let v = (-e.mean).exp();
    Ok(Estimate { mean: v, se: v * e.se, n: e.n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{ClusterLaw, Numerics};
    use crate::sampler::{sample_mucl_many, sample_poisson};

    fn bump(c: f64, r: f64, a: f64) -> SmoothTestFunction {
        SmoothTestFunction::bump(vec![c], r, a)
    }

    #[test]
    fn poisson_closed_examples() {
        let l = IntensityModel::lebesgue();
        assert_eq!(laplace_poisson_closed(&l, &SmoothTestFunction::zero()).unwrap().value, 1.0);
        let far = IntensityModel::BumpDensity { density: bump(0.0, 1.0, 1.0) };
        assert_eq!(laplace_poisson_closed(&far, &bump(5.0, 1.0, 2.0)).unwrap().value, 1.0);
        assert!(laplace_poisson_closed(&l, &bump(0.0, 1.0, -1.0)).is_err());
    }

    #[test]
    fn plateau_approximates_indicator() {
        let l = IntensityModel::lebesgue();
        let f = SmoothTestFunction::plateau(vec![0.0], vec![1.0], 0.01, std::f64::consts::LN_2);
        let v = laplace_poisson_closed(&l, &f).unwrap().value;
        let (lo, hi) = plateau_bracket(&l, &f).unwrap();
        assert!((hi - (-0.5f64).exp()).abs() < 1e-12);
        assert!(lo <= v && v <= hi, "{lo} {v} {hi}");
        assert!((v - 0.60653).abs() < 5e-3);
    }

    #[test]
    fn monotone_in_f() {
        let l = IntensityModel::lebesgue();
        let small = laplace_poisson_closed(&l, &bump(0.0, 1.0, 1.0)).unwrap().value;
        let large = laplace_poisson_closed(&l, &bump(0.0, 1.0, 2.0)).unwrap().value;
        assert!(0.0 < large && large < small && small <= 1.0);
    }

    #[test]
    fn empirical_examples() {
        let w = Window::interval(0.0, 1.0).unwrap();
        let empty = vec![Configuration::empty(w.clone()); 5];
        let e = laplace_empirical(&empty, &bump(0.5, 0.4, 1.0)).unwrap();
        assert_eq!((e.mean, e.se), (1.0, 0.0));
        let one = Configuration::from_points([[0.5].as_slice()], w.clone());
        assert_eq!(laplace_empirical(std::slice::from_ref(&one), &SmoothTestFunction::zero()).unwrap().mean, 1.0);
        assert_eq!(laplace_empirical(&[one], &bump(0.5, 1.0, 1.0)), Err(Error::WindowTooSmall));
    }

    #[test]
    fn empirical_poisson_matches_closed() {
        let l = IntensityModel::lebesgue();
        let f = bump(1.0, 0.8, 1.5);
        let w = Window::interval(0.0, 2.0).unwrap();
        let samples: Vec<Configuration> = McRunner::new(4).map(20_000, |rng, _| sample_poisson(&l, &w, rng).unwrap());
        let e = laplace_empirical(&samples, &f).unwrap();
        let c = laplace_poisson_closed(&l, &f).unwrap().value;
        assert!(e.within(c, 4.0), "{e:?} vs {c}");
    }

    #[test]
    fn vacuous_and_delta_reductions() {
        let vac = ClusterProcessModel::gaussian_lebesgue(vec![1.0], vec![1.0]).unwrap();
        assert_eq!(laplace_mucl_closed(&vac, &bump(0.0, 1.0, 1.0), 1).unwrap().value.mean, 1.0);
        let delta =
            ClusterProcessModel::new(IntensityModel::lebesgue(), ClusterLaw::delta(1).unwrap(), Numerics::default()).unwrap();
        let f = bump(0.3, 1.2, 2.0);
        let a = laplace_mucl_closed(&delta, &f, 1).unwrap().value;
        let b = laplace_poisson_closed(&IntensityModel::lebesgue(), &f).unwrap().value;
        assert!((a.mean - b).abs() < 1e-8, "{a:?} {b}");
        assert_eq!(a.se, 0.0);
    }

    #[test]
    fn cluster_closed_form_matches_sampler_and_lifted_form() {
        let m = ClusterProcessModel::gaussian_lebesgue(vec![1.0], vec![0.1, 0.3, 0.3, 0.3]).unwrap();
        let f = bump(0.5, 1.0, 1.0);
        let closed = laplace_mucl_closed(&m, &f, 7).unwrap().value;
        let k = Window::from_bounds(&f.support()).unwrap();
        let samples = sample_mucl_many(&m, &k, 20_000, 8).unwrap();
        let emp = laplace_empirical(&samples, &f).unwrap();
        assert!(emp.minus(&closed).within(0.0, 4.0), "{emp:?} {closed:?}");
        let lifted = laplace_lifted_form(&m, &f, 100_000, 9).unwrap();
        assert!(lifted.minus(&closed).within(0.0, 4.0), "{lifted:?} {closed:?}");
    }

    #[test]
    fn two_dimensional_cluster_functional() {
        let m = ClusterProcessModel::gaussian_lebesgue(vec![0.5, 0.5], vec![0.0, 0.5, 0.5])
            .unwrap()
            .with_numerics(|n| {
                n.laplace_nodes = 16;
                n.laplace_clusters = 512
            })
            .unwrap();
        let f = SmoothTestFunction::bump(vec![0.0, 0.0], 1.0, 1.0);
        let closed = laplace_mucl_closed(&m, &f, 3).unwrap().value;
        let lifted = laplace_lifted_form(&m, &f, 100_000, 4).unwrap();
        assert!(lifted.minus(&closed).within(0.0, 4.0), "{lifted:?} {closed:?}");
    }

    #[test]
    fn blowup_is_reported() {
        let m = ClusterProcessModel::new(
            IntensityModel::ExpWeight,
            ClusterLaw::new(1, vec![0.0, 1.0], crate::measures::InClusterLaw::Iid {
                offset: crate::measures::OffsetLaw::HeavyTail,
            })
            .unwrap(),
            Numerics::default(),
        )
        .unwrap();
        let r = laplace_mucl_closed(&m, &bump(0.0, 1.0, 1.0), 1);
        assert!(matches!(r, Err(Error::Divergent(_))));
    }
}
