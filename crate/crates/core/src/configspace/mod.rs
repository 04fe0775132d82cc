//! Points, cluster vectors and configurations, and the maps between them.
//!
//! A [`ClusterVector`] is an ordered tuple of points (one cluster); a
//! [`LiftedConfiguration`] is a finite set of cluster vectors; projecting it
//! unpacks every cluster into a [`Configuration`], a finite multiset of points
//! observed in a [`Window`].

mod cylinder;
mod functions;

use serde::{Deserialize, Serialize};

use crate::quasiinv::CompactDiffeo;
use crate::{Error, Result};

pub use cylinder::{CylinderFunction, OuterFunction, OuterJet, Profile};
pub use functions::{Jet, SmoothTestFunction, SmoothVectorField};

/// Default distance below which two atoms are merged.
pub const DEFAULT_MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|c| c.is_finite()));
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Self::new(v)
    }
}

/// Axis-aligned box that may be empty or unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        Self { lower, upper }
    }

    /// The empty box (dimension-free).
    pub fn empty() -> Self {
        Self { lower: Vec::new(), upper: Vec::new() }
    }

    /// Marker for "no restriction" (dimension-free).
    pub fn everywhere() -> Self {
        Self { lower: vec![f64::NEG_INFINITY], upper: vec![f64::INFINITY] }
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty() || self.lower.iter().zip(&self.upper).any(|(a, b)| a > b)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        !self.is_empty() && x.iter().enumerate().all(|(k, v)| *v >= self.lo(k) && *v <= self.hi(k))
    }

    fn lo(&self, k: usize) -> f64 {
        if self.lower.len() == 1 { self.lower[0] } else { self.lower[k] }
    }

    fn hi(&self, k: usize) -> f64 {
        if self.upper.len() == 1 { self.upper[0] } else { self.upper[k] }
    }

    pub fn hull(&self, other: &Bounds) -> Bounds {
        if self.is_empty() {
            return other.clone();
        }
        if other.is_empty() {
            return self.clone();
        }
        let d = self.lower.len().max(other.lower.len());
        Bounds {
            lower: (0..d).map(|k| self.lo(k).min(other.lo(k))).collect(),
            upper: (0..d).map(|k| self.hi(k).max(other.hi(k))).collect(),
        }
    }

    pub fn intersect(&self, other: &Bounds) -> Bounds {
        if self.is_empty() || other.is_empty() {
            return Bounds::empty();
        }
        let d = self.lower.len().max(other.lower.len());
        let b = Bounds {
            lower: (0..d).map(|k| self.lo(k).max(other.lo(k))).collect(),
            upper: (0..d).map(|k| self.hi(k).min(other.hi(k))).collect(),
        };
        if b.is_empty() { Bounds::empty() } else { b }
    }

    pub fn inflate(&self, r: f64) -> Bounds {
        if self.is_empty() {
            return self.clone();
        }
        Bounds {
            lower: self.lower.iter().map(|a| a - r).collect(),
            upper: self.upper.iter().map(|b| b + r).collect(),
        }
    }

    pub fn volume(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).product()
    }
}

/// Observation window: closed axis-aligned box with the atom-merge tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default = "default_tol")]
    pub merge_tol: f64,
}

fn default_tol() -> f64 {
    DEFAULT_MERGE_TOL
}

impl Window {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.is_empty() {
            return Err(crate::error::invalid("window dimension must be at least 1"));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(crate::error::invalid("window requires lower < upper componentwise"));
        }
        Ok(Self { lower, upper, merge_tol: DEFAULT_MERGE_TOL })
    }

    /// One-dimensional interval `[a, b]`.
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a], vec![b])
    }

    /// The whole space `R^d`.
    pub fn whole(d: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; d],
            upper: vec![f64::INFINITY; d],
            merge_tol: DEFAULT_MERGE_TOL,
        }
    }

    pub fn from_bounds(b: &Bounds) -> Result<Self> {
        Self::new(b.lower.clone(), b.upper.clone())
    }

    pub fn with_merge_tol(mut self, tol: f64) -> Self {
        self.merge_tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::new(self.lower.clone(), self.upper.clone())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).product()
    }

    /// Componentwise inflation `W ⊕ r`.
    pub fn inflate(&self, r: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|a| a - r).collect(),
            upper: self.upper.iter().map(|b| b + r).collect(),
            merge_tol: self.merge_tol,
        }
    }

    /// Whether the window contains the (non-empty) box.
    pub fn covers(&self, b: &Bounds) -> bool {
        if b.is_empty() {
            return true;
        }
        (0..self.dim()).all(|k| b.lo(k) >= self.lower[k] && b.hi(k) <= self.upper[k])
    }

    /// Smallest window containing both.
    pub fn hull(&self, other: &Bounds) -> Self {
        let h = self.bounds().hull(other);
        Self { lower: h.lower, upper: h.upper, merge_tol: self.merge_tol }
    }
}

/// Ordered tuple of `n >= 0` points of `R^d`, stored flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterVector {
    dim: usize,
    coords: Vec<f64>,
}

impl ClusterVector {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: coords.len() });
        }
        Ok(Self { dim, coords })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, coords: Vec::new() }
    }

    pub fn from_points(points: &[Point]) -> Result<Self> {
        let dim = points.first().map(|p| p.dim()).unwrap_or(1);
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.dim() });
            }
            coords.extend_from_slice(p.coords());
        }
        Ok(Self { dim, coords })
    }

    /// One-dimensional cluster from scalar coordinates.
    pub fn scalar(values: &[f64]) -> Self {
        Self { dim: 1, coords: values.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Flat coordinates, i.e. the cluster as a point of `R^{n d}`.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    /// Componentwise mean of the points.
    pub fn centroid(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        let mut c = vec![0.0; self.dim];
        for p in self.points() {
            for (ck, pk) in c.iter_mut().zip(p) {
                *ck += pk / n;
            }
        }
        c
    }

    /// Whether any point of the cluster lies in the box.
    pub fn meets(&self, b: &Bounds) -> bool {
        self.points().any(|p| b.contains(p))
    }
}

/// Atom of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: Point,
    pub multiplicity: u32,
}

/// Finite multiset of points observed in a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    atoms: Vec<Atom>,
    window: Window,
}

impl Configuration {
    pub fn empty(window: Window) -> Self {
        Self { atoms: Vec::new(), window }
    }

    /// Builds a configuration from unit-mass points, dropping those outside
    /// the window and merging points closer than the window's tolerance.
    pub fn from_points<'a, I>(points: I, window: Window) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        Self::from_weighted(points.into_iter().map(|p| (p, 1)), window)
    }

    pub fn from_weighted<'a, I>(points: I, window: Window) -> Self
    where
        I: IntoIterator<Item = (&'a [f64], u32)>,
    {
        let mut pts: Vec<(&[f64], u32)> =
            points.into_iter().filter(|(p, m)| *m > 0 && window.contains(p)).collect();
        pts.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
        let tol = window.merge_tol;
        let mut atoms: Vec<Atom> = Vec::with_capacity(pts.len());
        for (p, m) in pts {
            let mut merged = false;
            for atom in atoms.iter_mut().rev() {
                if atom.location.0[0] < p[0] - tol {
                    break;
                }
                if max_dist(&atom.location.0, p) <= tol {
                    atom.multiplicity += m;
                    merged = true;
                    break;
                }
            }
            if !merged {
                atoms.push(Atom { location: Point(p.to_vec()), multiplicity: m });
            }
        }
        Self { atoms, window }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Total number of points counted with multiplicity.
    pub fn total(&self) -> u64 {
        self.atoms.iter().map(|a| a.multiplicity as u64).sum()
    }

    pub fn max_multiplicity(&self) -> u32 {
        self.atoms.iter().map(|a| a.multiplicity).max().unwrap_or(0)
    }

    /// Multiplicity of the atom at `x` (0 if none).
    pub fn multiplicity_at(&self, x: &[f64]) -> u32 {
        self.atoms
            .iter()
            .find(|a| max_dist(&a.location.0, x) <= self.window.merge_tol)
            .map(|a| a.multiplicity)
            .unwrap_or(0)
    }

    /// Points with multiplicity expanded.
    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.atoms
            .iter()
            .flat_map(|a| std::iter::repeat_n(a.location.coords(), a.multiplicity as usize))
    }

    pub fn restrict(&self, window: &Window) -> Configuration {
        Self::from_weighted(self.atoms.iter().map(|a| (a.location.coords(), a.multiplicity)), window.clone())
    }

    /// Multiset union (the window is the hull of both windows).
    pub fn union(&self, other: &Configuration) -> Configuration {
        let window = self.window.hull(&other.window.bounds());
        Self::from_weighted(
            self.atoms.iter().chain(&other.atoms).map(|a| (a.location.coords(), a.multiplicity)),
            window,
        )
    }
}

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Finite set of non-empty cluster vectors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LiftedConfiguration {
    clusters: Vec<ClusterVector>,
}

impl LiftedConfiguration {
    /// Vacuous clusters are dropped.
    pub fn new(clusters: Vec<ClusterVector>) -> Self {
        Self { clusters: clusters.into_iter().filter(|c| !c.is_empty()).collect() }
    }

    pub fn clusters(&self) -> &[ClusterVector] {
        &self.clusters
    }

    pub fn clusters_mut(&mut self) -> &mut [ClusterVector] {
        &mut self.clusters
    }

    pub fn into_clusters(self) -> Vec<ClusterVector> {
        self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// All points of all clusters.
    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.clusters.iter().flat_map(|c| c.points())
    }

    /// Clusters that have a point in the box.
    pub fn meeting(&self, b: &Bounds) -> LiftedConfiguration {
        Self { clusters: self.clusters.iter().filter(|c| c.meets(b)).cloned().collect() }
    }
}

/// Unpacks one cluster into a configuration on the whole space.
pub fn project_vector(x: &ClusterVector) -> Configuration {
    Configuration::from_points(x.points(), Window::whole(x.dim()))
}

/// Multiset union of the projections of all clusters.
pub fn project_lifted(g: &LiftedConfiguration) -> Configuration {
    let d = g.clusters.first().map(|c| c.dim()).unwrap_or(1);
    project_lifted_in(g, &Window::whole(d))
}

/// Projection restricted to a window.
pub fn project_lifted_in(g: &LiftedConfiguration, window: &Window) -> Configuration {
    Configuration::from_points(g.points(), window.clone())
}

/// `⟨f, γ⟩ = Σ multiplicity · f(x)`.
pub fn pair(f: &SmoothTestFunction, g: &Configuration) -> f64 {
    g.atoms.iter().map(|a| a.multiplicity as f64 * f.value(a.location.coords())).sum()
}

/// Number of points (with multiplicity) of `γ` inside `B`.
pub fn count(g: &Configuration, b: &Window) -> u64 {
    g.atoms
        .iter()
        .filter(|a| b.contains(a.location.coords()))
        .map(|a| a.multiplicity as u64)
        .sum()
}

/// `(y_1 + x, …, y_n + x)`.
pub fn shift_cluster(y: &ClusterVector, x: &[f64]) -> Result<ClusterVector> {
    if x.len() != y.dim() {
        return Err(Error::DimensionMismatch { expected: y.dim(), got: x.len() });
    }
    let d = y.dim();
    let coords = y.coords.iter().enumerate().map(|(i, v)| v + x[i % d]).collect();
    Ok(ClusterVector { dim: d, coords })
}

/// Applies the diffeomorphism to every point of the cluster.
pub fn lift_diffeo(phi: &CompactDiffeo, x: &ClusterVector) -> ClusterVector {
    let mut coords = Vec::with_capacity(x.coords.len());
    for p in x.points() {
        coords.extend(phi.apply(p));
    }
    ClusterVector { dim: x.dim, coords }
}

/// `φ(γ) = {φ(x) : x ∈ γ}` with multiplicities carried over, then re-merged.
pub fn apply_diffeo_config(phi: &CompactDiffeo, g: &Configuration) -> Configuration {
    let moved: Vec<(Vec<f64>, u32)> =
        g.atoms.iter().map(|a| (phi.apply(a.location.coords()), a.multiplicity)).collect();
    Configuration::from_weighted(moved.iter().map(|(p, m)| (p.as_slice(), *m)), g.window.clone())
}
