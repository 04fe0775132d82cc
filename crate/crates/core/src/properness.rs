//! Droplet clusters, local finiteness and simplicity criteria, and the
//! probability generating functional of counts in a compact set.
//!
//! The droplet cluster of `ȳ` for a base set `B` is `D_B(ȳ) = ∪_i (B - y_i)`,
//! the set of centres `x` for which the shifted cluster `ȳ + x` puts at least
//! one point in `B`. Its layer `ℓ` is the set of centres putting exactly `ℓ`
//! points in `B`.

use serde::Serialize;

use crate::configspace::{Bounds, ClusterVector, Configuration, LiftedConfiguration, Window};
use crate::measures::{ClusterProcessModel, InClusterLaw, IntensityModel, OffsetLaw};
use crate::quadrature::{self, DoublingRule, QuadValue};
use crate::stats::{Estimate, McRunner};
use crate::{DivergenceReport, Error, Result};

/// `D_B(ȳ)` as a union of shifted copies of `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropletSet {
    pub base: Bounds,
    /// The boxes `B - y_i`, one per cluster point.
    pub boxes: Vec<Bounds>,
}

impl DropletSet {
    pub fn new(base: &Window, y: &ClusterVector) -> Self {
        let boxes = y
            .points()
            .map(|p| {
                Bounds::new(
                    base.lower.iter().zip(p).map(|(a, v)| a - v).collect(),
                    base.upper.iter().zip(p).map(|(b, v)| b - v).collect(),
                )
            })
            .collect();
        Self { base: base.bounds(), boxes }
    }

    /// Number of cluster points that land in `B` when the centre is at `x`.
    pub fn layer_count(&self, x: &[f64]) -> usize {
        self.boxes.iter().filter(|b| b.contains(x)).count()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.boxes.iter().any(|b| b.contains(x))
    }

    pub fn bounding_box(&self) -> Bounds {
        self.boxes.iter().fold(Bounds::empty(), |acc, b| acc.hull(b))
    }
}

/// Sorted union of closed intervals.
pub(crate) fn merge_intervals(mut iv: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    iv.retain(|(a, b)| b > a);
    iv.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
    for (a, b) in iv {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn check_dims(model: &ClusterProcessModel, b: &Window, y: &ClusterVector) -> Result<()> {
    if b.dim() != model.dim {
        return Err(Error::DimensionMismatch { expected: model.dim, got: b.dim() });
    }
    if !y.is_empty() && y.dim() != model.dim {
        return Err(Error::DimensionMismatch { expected: model.dim, got: y.dim() });
    }
    Ok(())
}

fn finite_or_divergent(v: f64, y: &ClusterVector) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergent(DivergenceReport {
            context: format!("droplet measure of cluster {:?}", y.coords()),
            history: vec![(f64::INFINITY, v)],
        }))
    }
}

/// `λ(D_B(ȳ))`.
pub fn droplet_measure(model: &ClusterProcessModel, b: &Window, y: &ClusterVector) -> Result<f64> {
    check_dims(model, b, y)?;
    if y.is_empty() {
        return Ok(0.0);
    }
    let set = DropletSet::new(b, y);
    let lambda = &model.intensity;
    let v = if model.dim == 1 {
        let iv = set.boxes.iter().map(|bx| (bx.lower[0], bx.upper[0])).collect();
        merge_intervals(iv).into_iter().map(|(a, c)| lambda.interval_mass(a, c)).sum()
    } else if set.boxes.len() <= 3 {
        let sums = intersection_sums(lambda, &set.boxes);
        sums.iter().enumerate().map(|(k, s)| if k % 2 == 0 { *s } else { -*s }).sum()
    } else {
        let layers = grid_layers(lambda, &set, model.numerics.droplet_grid);
        layers.iter().sum()
    };
    finite_or_divergent(v, y)
}

/// `I_k = Σ_{|S| = k} λ(∩_{i∈S} box_i)` for `k = 1..=n` (index `k - 1`).
fn intersection_sums(lambda: &IntensityModel, boxes: &[Bounds]) -> Vec<f64> {
    let n = boxes.len();
    let mut sums = vec![0.0; n];
    for mask in 1u32..(1 << n) {
        let mut inter: Option<Bounds> = None;
        for (i, bx) in boxes.iter().enumerate() {
            if mask & (1 << i) != 0 {
                inter = Some(match inter {
                    None => bx.clone(),
                    Some(acc) => acc.intersect(bx),
                });
            }
        }
        let inter = inter.expect("non-empty mask");
        if !inter.is_empty() {
            sums[mask.count_ones() as usize - 1] += lambda.box_mass(&inter.lower, &inter.upper).value;
        }
    }
    sums
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Midpoint-grid layer measures on the bounding box, refined once when two
/// resolutions disagree by more than `1e-3` relative.
fn grid_layers(lambda: &IntensityModel, set: &DropletSet, cells: usize) -> Vec<f64> {
    let coarse = grid_layers_at(lambda, set, cells);
    let fine = grid_layers_at(lambda, set, 2 * cells);
    let (tc, tf): (f64, f64) = (coarse.iter().sum(), fine.iter().sum());
    if (tc - tf).abs() > 1e-3 * tf.abs() {
        grid_layers_at(lambda, set, 4 * cells)
    } else {
        fine
    }
}

fn grid_layers_at(lambda: &IntensityModel, set: &DropletSet, cells: usize) -> Vec<f64> {
    let bb = set.bounding_box();
    let d = bb.lower.len();
    let h: Vec<f64> = (0..d).map(|k| (bb.upper[k] - bb.lower[k]) / cells as f64).collect();
    let vol: f64 = h.iter().product();
    let mut layers = vec![0.0; set.boxes.len()];
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    loop {
        for k in 0..d {
            x[k] = bb.lower[k] + (idx[k] as f64 + 0.5) * h[k];
        }
        let c = set.layer_count(&x);
        if c > 0 {
            layers[c - 1] += lambda.density(&x) * vol;
        }
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < cells {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == d {
                return layers;
            }
        }
    }
}

/// `λ{x : #{i : x + y_i ∈ B} = ℓ}` for `ℓ = 1..=n` (index `ℓ - 1`).
pub fn droplet_layer_measures(model: &ClusterProcessModel, b: &Window, y: &ClusterVector) -> Result<Vec<f64>> {
    check_dims(model, b, y)?;
    if y.is_empty() {
        return Ok(Vec::new());
    }
    let set = DropletSet::new(b, y);
    let n = set.boxes.len();
    let lambda = &model.intensity;
    let layers = if model.dim == 1 {
        let mut events: Vec<(f64, i32)> = Vec::with_capacity(2 * n);
        for bx in &set.boxes {
            events.push((bx.lower[0], 1));
            events.push((bx.upper[0], -1));
        }
        events.sort_by(|a, c| a.0.total_cmp(&c.0).then(c.1.cmp(&a.1)));
        let mut layers = vec![0.0; n];
        let mut depth = 0i32;
        for w in 0..events.len() {
            depth += events[w].1;
            if depth > 0 && w + 1 < events.len() {
                layers[depth as usize - 1] += lambda.interval_mass(events[w].0, events[w + 1].0);
            }
        }
        layers
    } else if n <= 3 {
        let sums = intersection_sums(lambda, &set.boxes);
        (1..=n)
            .map(|l| {
                (l..=n)
                    .map(|k| {
                        let sign = if (k - l) % 2 == 0 { 1.0 } else { -1.0 };
                        sign * binomial(k, l) * sums[k - 1]
                    })
                    .sum()
            })
            .collect()
    } else {
        grid_layers(lambda, &set, model.numerics.droplet_grid)
    };
    for v in &layers {
        finite_or_divergent(*v, y)?;
    }
    Ok(layers)
}

pub fn droplet_layer_measure(model: &ClusterProcessModel, b: &Window, y: &ClusterVector, layer: usize) -> Result<f64> {
    if layer == 0 {
        return Err(crate::error::invalid("layers are numbered from 1"));
    }
    Ok(droplet_layer_measures(model, b, y)?.get(layer - 1).copied().unwrap_or(0.0))
}

/// Deterministic bounds on the mean droplet mass `E_η λ(D_K(ȳ))`.
///
/// With `J_n = ∫ λ(K - y) η_n^{(1)}(dy)` the mean droplet mass of a single
/// point of a size-`n` cluster, the mean lies between `Σ p_n J_n` and
/// `Σ n p_n J_n` (for coincident points both bounds use `J_n` once). Each
/// `J_n` is integrated with region doubling, so divergence is detected.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropletMassBounds {
    pub lower: f64,
    pub upper: f64,
}

pub fn droplet_mass_bounds(model: &ClusterProcessModel, k: &Window) -> Result<DropletMassBounds> {
    let law = &model.law;
    let mut lower = 0.0;
    let mut upper = 0.0;
    let mut cache: Vec<(OffsetLaw, f64)> = Vec::new();
    for n in 1..=law.n_max() {
        let p = law.p(n);
        if p == 0.0 {
            continue;
        }
        let offset = law.in_cluster.offset_law(n).clone();
        let j = match cache.iter().find(|(o, _)| *o == offset) {
            Some((_, j)) => *j,
            None => {
                let j = single_point_droplet_mean(model, &offset, k)?.value;
                cache.push((offset, j));
                j
            }
        };
        let copies = if matches!(law.in_cluster, InClusterLaw::Coincident { .. }) { 1.0 } else { n as f64 };
        lower += p * j;
        upper += p * copies * j;
    }
    Ok(DropletMassBounds { lower, upper })
}

/// `∫ λ(K - y) η(dy)` for one offset law.
fn single_point_droplet_mean(model: &ClusterProcessModel, offset: &OffsetLaw, k: &Window) -> Result<QuadValue> {
    let lambda = &model.intensity;
    let mass_shifted = |y: &[f64]| -> f64 {
        let lo: Vec<f64> = k.lower.iter().zip(y).map(|(a, v)| a - v).collect();
        let hi: Vec<f64> = k.upper.iter().zip(y).map(|(b, v)| b - v).collect();
        lambda.box_mass(&lo, &hi).value
    };
    if let OffsetLaw::Dirac { offset } = offset {
        return Ok(QuadValue::exact(mass_shifted(offset)));
    }
    let tol = model.tolerance();
    let d = model.dim;
    let reach = offset.cutoff(model.numerics.tail_sigmas);
    if d == 1 {
        let r0 = reach.unwrap_or(10.0);
        let mut acc = QuadValue::exact(0.0);
        let mut last_r = 0.0;
        let f = |y: f64| offset.density(&[y]).unwrap_or(0.0) * mass_shifted(&[y]);
        return quadrature::doubling_integral(
            |r| {
                let pieces = if last_r == 0.0 { vec![(-r, r)] } else { vec![(-r, -last_r), (last_r, r)] };
                for (a, b) in pieces {
                    let v = quadrature::adaptive(f, a, b, tol);
                    acc.value += v.value;
                    acc.error += v.error;
                }
                last_r = r;
                acc
            },
            r0,
            tol,
            DoublingRule::default(),
            "mean droplet mass",
        );
    }
    let r = reach.ok_or_else(|| Error::ModelMismatch("heavy-tailed offsets are one-dimensional".into()))?;
    Ok(quadrature::integrate_box(
        |y| offset.density(y).unwrap_or(0.0) * mass_shifted(y),
        &vec![-r; d],
        &vec![r; d],
        tol,
    ))
}

/// Monte Carlo mean of `λ(D_K(ȳ))` over `η`, after checking finiteness of
/// the mean with [`droplet_mass_bounds`].
pub fn mean_droplet_mass(model: &ClusterProcessModel, k: &Window, n_samples: usize, seed: u64) -> Result<Estimate> {
    if n_samples == 0 {
        return Err(crate::error::invalid("sample count must be at least 1"));
    }
    droplet_mass_bounds(model, k)?;
    let m = McRunner::new(seed).try_run(n_samples, 1, |rng, row| {
        let y = model.law.sample(rng);
        row[0] = droplet_measure(model, k, &y)?;
        Ok::<(), Error>(())
    })?;
    Ok(m.estimate(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Unknown,
}

/// Outcome of the sufficient conditions for local finiteness and simplicity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufficiencyReport {
    /// `C_K = sup_x λ(K + x)` (an upper bound for bump densities).
    pub c_k: f64,
    pub mean_size: f64,
    /// Bounded translates of `K` and finite mean cluster size.
    pub a_ii_prime: Verdict,
    /// In-cluster configurations a.s. bounded.
    pub a_ii_double_prime: Verdict,
    /// In-cluster configurations a.s. simple.
    pub b_i: Verdict,
    /// `λ` non-atomic.
    pub b_ii_prime: Verdict,
    /// In-cluster configurations without fixed points.
    pub b_ii_double_prime: Verdict,
}

pub fn check_sufficient(model: &ClusterProcessModel, k: &Window) -> SufficiencyReport {
    let c_k = model.intensity.sup_translate_mass(k);
    let mean_size = model.law.mean_size();
    let pass_if = |ok: bool, otherwise: Verdict| if ok { Verdict::Pass } else { otherwise };
    SufficiencyReport {
        c_k,
        mean_size,
        a_ii_prime: pass_if(c_k.is_finite() && mean_size.is_finite(), Verdict::Fail),
        a_ii_double_prime: pass_if(model.law.bounded_support(), Verdict::Unknown),
        b_i: pass_if(model.law.simple_clusters(), Verdict::Fail),
        b_ii_prime: pass_if(model.intensity.non_atomic(), Verdict::Unknown),
        b_ii_double_prime: pass_if(model.law.no_fixed_points(), Verdict::Fail),
    }
}

/// `L[f_q] = exp{-E_η Σ_ℓ (1 - q^ℓ) λ(layer_ℓ)}` with `f_q = -ln q · 1_K`;
/// the standard error is propagated through the exponential.
pub fn pgf_closed(model: &ClusterProcessModel, k: &Window, q: f64, n_samples: usize, seed: u64) -> Result<Estimate> {
    if !(q > 0.0 && q < 1.0) {
        return Err(crate::error::invalid("q must lie in (0, 1)"));
    }
    droplet_mass_bounds(model, k)?;
    let m = McRunner::new(seed).try_run(n_samples, 1, |rng, row| {
        let y = model.law.sample(rng);
        let layers = droplet_layer_measures(model, k, &y)?;
        row[0] = layers.iter().enumerate().map(|(l, v)| (1.0 - q.powi(l as i32 + 1)) * v).sum();
        Ok::<(), Error>(())
    })?;
    let e = m.estimate(0);
    let value = (-e.mean).exp();
    Ok(Estimate { mean: value, se: value * e.se, n: e.n })
}

/// Empirical mean of `q^{γ(K)}`.
pub fn pgf_empirical(samples: &[Configuration], k: &Window, q: f64) -> Estimate {
    if samples.is_empty() {
        return Estimate::exact(1.0);
    }
    let values: Vec<f64> = samples.iter().map(|g| q.powi(crate::configspace::count(g, k) as i32)).collect();
    crate::stats::mean_se(&values)
}

/// A pair of points closer than the scan tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoincidentPair {
    pub sample: usize,
    /// Cluster indices of the two points (equal for in-cluster ties).
    pub clusters: (usize, usize),
    pub location: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplicityReport {
    pub max_multiplicity: u32,
    pub pairs_found: usize,
    /// First offending pairs (at most 100).
    pub offending: Vec<CoincidentPair>,
}

const MAX_REPORTED_PAIRS: usize = 100;

/// Scans all point pairs, within and across clusters, for sup-norm distance
/// at most `tol`.
pub fn simplicity_scan(samples: &[LiftedConfiguration], tol: f64) -> SimplicityReport {
    let mut report = SimplicityReport { max_multiplicity: 0, pairs_found: 0, offending: Vec::new() };
    for (s, g) in samples.iter().enumerate() {
        let mut pts: Vec<(&[f64], usize)> =
            g.clusters().iter().enumerate().flat_map(|(c, x)| x.points().map(move |p| (p, c))).collect();
        if pts.is_empty() {
            continue;
        }
        let d = pts[0].0.len();
        pts.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                if pts[j].0[0] - pts[i].0[0] > tol {
                    break;
                }
                if (0..d).all(|k| (pts[j].0[k] - pts[i].0[k]).abs() <= tol) {
                    report.pairs_found += 1;
                    if report.offending.len() < MAX_REPORTED_PAIRS {
                        report.offending.push(CoincidentPair {
                            sample: s,
                            clusters: (pts[i].1, pts[j].1),
                            location: pts[i].0.to_vec(),
                        });
                    }
                }
            }
        }
        let w = Window::whole(d).with_merge_tol(tol);
        let cfg = Configuration::from_points(pts.iter().map(|(p, _)| *p), w);
        report.max_multiplicity = report.max_multiplicity.max(cfg.max_multiplicity());
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{ClusterLaw, Numerics};

    fn unit() -> Window {
        Window::interval(0.0, 1.0).unwrap()
    }

    fn delta_model() -> ClusterProcessModel {
        ClusterProcessModel::new(IntensityModel::lebesgue(), ClusterLaw::delta(1).unwrap(), Numerics::default()).unwrap()
    }

    fn gaussian_pairs() -> ClusterProcessModel {
        ClusterProcessModel::gaussian_lebesgue(vec![1.0], vec![0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn droplet_measure_examples() {
        let m = delta_model();
        assert_eq!(droplet_measure(&m, &unit(), &ClusterVector::scalar(&[0.0])).unwrap(), 1.0);
        assert_eq!(droplet_measure(&m, &unit(), &ClusterVector::scalar(&[0.0, 10.0])).unwrap(), 2.0);
        assert_eq!(droplet_measure(&m, &unit(), &ClusterVector::scalar(&[0.0, 0.5])).unwrap(), 1.5);
        assert_eq!(droplet_measure(&m, &unit(), &ClusterVector::empty(1)).unwrap(), 0.0);
    }

    #[test]
    fn layer_examples() {
        let m = delta_model();
        let l = droplet_layer_measures(&m, &unit(), &ClusterVector::scalar(&[0.0, 10.0])).unwrap();
        assert_eq!(l, vec![2.0, 0.0]);
        let l = droplet_layer_measures(&m, &unit(), &ClusterVector::scalar(&[0.0, 0.5])).unwrap();
        assert!((l[1] - 0.5).abs() < 1e-15 && (l[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_dimensional_inclusion_exclusion_and_grid_agree() {
        let law = ClusterLaw::product_gaussian(vec![1.0, 1.0], vec![0.0, 1.0]).unwrap();
        let m = ClusterProcessModel::new(IntensityModel::lebesgue(), law, Numerics::default()).unwrap();
        let b = Window::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let y = ClusterVector::new(2, vec![0.0, 0.0, 0.5, 0.25, -0.2, 0.6]).unwrap();
        let total = droplet_measure(&m, &b, &y).unwrap();
        let layers = droplet_layer_measures(&m, &b, &y).unwrap();
        assert!((layers.iter().sum::<f64>() - total).abs() < 1e-12);
        let set = DropletSet::new(&b, &y);
        let grid = grid_layers(&m.intensity, &set, 512);
        for (a, g) in layers.iter().zip(&grid) {
            assert!((a - g).abs() < 1e-2, "{layers:?} vs {grid:?}");
        }
        // exact: [0,1]^2 ∪ [-0.5,0.5]x[-0.25,0.75] ∪ [0.2,1.2]x[-0.6,0.4]
        let i12 = 0.5 * 0.75;
        let i13 = 0.8 * 0.4;
        let i23 = 0.3 * 0.65;
        let i123 = 0.3 * 0.4;
        assert!((total - (3.0 - i12 - i13 - i23 + i123)).abs() < 1e-12);
    }

    #[test]
    fn grid_path_used_for_large_clusters() {
        let law = ClusterLaw::product_gaussian(vec![1.0, 1.0], vec![0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let m = ClusterProcessModel::new(IntensityModel::lebesgue(), law, Numerics::default()).unwrap();
        let b = Window::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let y = ClusterVector::new(2, vec![0.0, 0.0, 3.0, 0.0, 0.0, 3.0, 3.0, 3.0]).unwrap();
        let total = droplet_measure(&m, &b, &y).unwrap();
        assert!((total - 4.0).abs() < 1e-2, "{total}");
    }

    #[test]
    fn mean_droplet_mass_examples() {
        let m = delta_model();
        let e = mean_droplet_mass(&m, &unit(), 100, 1).unwrap();
        assert_eq!((e.mean, e.se), (1.0, 0.0));
        let vacuous = ClusterProcessModel::gaussian_lebesgue(vec![1.0], vec![1.0]).unwrap();
        assert_eq!(mean_droplet_mass(&vacuous, &unit(), 100, 1).unwrap().mean, 0.0);
    }

    #[test]
    fn gaussian_pairs_droplet_matches_quadrature() {
        let m = gaussian_pairs();
        let e = mean_droplet_mass(&m, &unit(), 200_000, 3).unwrap();
        // λ(D) = 2 - (1 - |u|)_+ with u = y1 - y2 ~ N(0, 2)
        let oracle = quadrature::adaptive(
            |u| {
                let h = (-u * u / 4.0).exp() / (4.0 * std::f64::consts::PI).sqrt();
                h * (2.0 - (1.0 - u.abs()).max(0.0))
            },
            -20.0,
            20.0,
            quadrature::Tolerance::default(),
        );
        assert!(e.within(oracle.value, 3.0), "{e:?} vs {oracle:?}");
        let b = droplet_mass_bounds(&m, &unit()).unwrap();
        assert!(b.lower <= e.mean && e.mean <= b.upper);
    }

    #[test]
    fn blowup_mean_droplet_diverges() {
        let law = ClusterLaw::new(1, vec![0.0, 1.0], InClusterLaw::Iid { offset: OffsetLaw::HeavyTail }).unwrap();
        let m = ClusterProcessModel::new(IntensityModel::ExpWeight, law, Numerics::default()).unwrap();
        assert!(matches!(mean_droplet_mass(&m, &unit(), 10, 1), Err(Error::Divergent(_))));
        let law = ClusterLaw::new(1, vec![0.0, 1.0], InClusterLaw::Iid { offset: OffsetLaw::HeavyTail }).unwrap();
        let m = ClusterProcessModel::new(IntensityModel::lebesgue(), law, Numerics::default()).unwrap();
        let b = droplet_mass_bounds(&m, &unit()).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sufficiency_verdicts() {
        let r = check_sufficient(&gaussian_pairs(), &unit());
        assert_eq!(r.a_ii_prime, Verdict::Pass);
        assert_eq!(r.b_ii_prime, Verdict::Pass);
        assert_eq!(r.c_k, 1.0);
        let law = ClusterLaw::product_gaussian(vec![1.0], vec![0.0, 1.0]).unwrap();
        let exp = ClusterProcessModel::new(IntensityModel::ExpWeight, law, Numerics::default()).unwrap();
        assert_eq!(check_sufficient(&exp, &unit()).a_ii_prime, Verdict::Fail);
        let fixed = ClusterLaw::new(1, vec![0.0, 0.0, 1.0], InClusterLaw::Iid { offset: OffsetLaw::Dirac { offset: vec![0.3] } })
            .unwrap();
        let m = ClusterProcessModel::new(IntensityModel::lebesgue(), fixed, Numerics::default()).unwrap();
        let r = check_sufficient(&m, &unit());
        assert_eq!(r.b_ii_double_prime, Verdict::Fail);
        assert_eq!(r.b_i, Verdict::Fail);
        assert_eq!(r.a_ii_double_prime, Verdict::Pass);
    }

    #[test]
    fn pgf_examples() {
        let m = delta_model();
        let v = pgf_closed(&m, &unit(), 0.5, 1000, 1).unwrap();
        assert!((v.mean - (-0.5f64).exp()).abs() < 1e-15 && v.se == 0.0);
        let v = pgf_closed(&gaussian_pairs(), &unit(), 1.0 - 1e-9, 1000, 1).unwrap();
        assert!((v.mean - 1.0).abs() < 1e-8);
        assert!(pgf_closed(&m, &unit(), 1.0, 10, 1).is_err());
        assert_eq!(pgf_empirical(&[], &unit(), 0.3).mean, 1.0);
        let g = Configuration::from_points([0.5f64, 0.7].chunks(1), Window::whole(1));
        assert_eq!(pgf_empirical(&[g], &unit(), 1.0).mean, 1.0);
    }

    #[test]
    fn pgf_is_monotone_in_q() {
        let m = gaussian_pairs();
        let qs = [0.1, 0.3, 0.6, 0.9];
        let v: Vec<f64> = qs.iter().map(|q| pgf_closed(&m, &unit(), *q, 20_000, 5).unwrap().mean).collect();
        assert!(v.windows(2).all(|w| w[0] <= w[1]), "{v:?}");
    }

    #[test]
    fn simplicity_scan_examples() {
        assert_eq!(simplicity_scan(&[], 1e-12).max_multiplicity, 0);
        let dup = LiftedConfiguration::new(vec![ClusterVector::scalar(&[0.3, 0.3]), ClusterVector::scalar(&[1.0])]);
        let r = simplicity_scan(&[dup], 1e-12);
        assert_eq!(r.max_multiplicity, 2);
        assert_eq!(r.offending[0].clusters, (0, 0));
        let cross = LiftedConfiguration::new(vec![ClusterVector::scalar(&[0.3]), ClusterVector::scalar(&[0.3])]);
        let r = simplicity_scan(&[cross], 1e-12);
        assert_eq!((r.pairs_found, r.max_multiplicity), (1, 2));
    }
}
