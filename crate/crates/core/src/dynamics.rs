//! Euler–Maruyama simulation of the equilibrium diffusion: independent
//! distorted Brownian motions of cluster vectors with drift `β = ∇ log s_n`.
//!
//! The SDE is normalized as `dX = β(X) dt + √2 dW`, whose generator
//! `Δ + β·∇` is minus the Dirichlet operator of [`crate::calculus`].
//! Other normalizations (`½Δ`) change the time scale by a factor of two.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::calculus::beta_vector;
use crate::configspace::{
    project_lifted_in, ClusterVector, CylinderFunction, LiftedConfiguration, OuterFunction, SmoothTestFunction, Window,
};
use crate::measures::ClusterProcessModel;
use crate::sampler::{sample_mucl_many, LiftedSampler};
use crate::stats::{ks_two_sample, Estimate, McRunner, Moments};
use crate::{Error, Result};

/// Maximum number of step halvings before a step is rejected.
pub const MAX_HALVINGS: u32 = 10;

const PATH_BATCH: usize = 8;

/// Drift multiplier; `-1` gives the negated-drift control dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepConfig {
    pub dt: f64,
    pub drift_scale: f64,
}

impl StepConfig {
    pub fn new(dt: f64) -> Self {
        Self { dt, drift_scale: 1.0 }
    }
}

/// One path of the lifted dynamics.
#[derive(Debug, Clone)]
pub struct DynamicsState {
    pub lifted: LiftedConfiguration,
    pub time: f64,
    /// Simulation region `K ⊕ R_drift`; sampling adds `R_trunc` for centres.
    pub buffer: Window,
    drift: Vec<Vec<f64>>,
}

impl DynamicsState {
    pub fn new(model: &ClusterProcessModel, lifted: LiftedConfiguration, buffer: Window) -> Result<Self> {
        let drift = lifted.clusters().iter().map(|c| beta_vector(model, c)).collect::<Result<_>>()?;
        Ok(Self { lifted, time: 0.0, buffer, drift })
    }

    /// Configuration on `K`, from clusters whose centroid is still inside the buffer.
    pub fn observed(&self, k: &Window) -> crate::configspace::Configuration {
        let kept: Vec<ClusterVector> =
            self.lifted.clusters().iter().filter(|c| self.buffer.contains(&c.centroid())).cloned().collect();
        project_lifted_in(&LiftedConfiguration::new(kept), k)
    }
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Advances one cluster by `dt`, halving the sub-step whenever the drift at
/// the proposed point cannot be evaluated.
fn advance_cluster(
    model: &ClusterProcessModel,
    x: &mut ClusterVector,
    beta: &mut Vec<f64>,
    cfg: StepConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let mut remaining = cfg.dt;
    let mut h = cfg.dt;
    let mut halvings = 0;
    let mut noise = vec![0.0; x.coords().len()];
    while remaining > 0.0 {
        let step = h.min(remaining);
        let scale = (2.0 * step).sqrt();
        noise.iter_mut().for_each(|z| *z = rng.sample::<f64, _>(StandardNormal));
        let proposal: Vec<f64> = x
            .coords()
            .iter()
            .zip(beta.iter())
            .zip(&noise)
            .map(|((xi, bi), zi)| xi + cfg.drift_scale * bi * step + scale * zi)
            .collect();
        let candidate = ClusterVector::new(x.dim(), proposal)?;
        match beta_vector(model, &candidate) {
            Ok(b) if finite(&b) && finite(candidate.coords()) => {
                *x = candidate;
                *beta = b;
                remaining -= step;
            }
            _ => {
                halvings += 1;
                if halvings > MAX_HALVINGS {
                    return Err(Error::StepRejected(MAX_HALVINGS));
                }
                h *= 0.5;
            }
        }
    }
    Ok(())
}

/// `x̄ ← x̄ + β(x̄) dt + √(2 dt) ξ` for every cluster independently.
pub fn em_step(model: &ClusterProcessModel, state: &mut DynamicsState, cfg: StepConfig, rng: &mut ChaCha8Rng) -> Result<()> {
    if !(cfg.dt > 0.0) {
        return Err(crate::error::invalid("dt must be positive"));
    }
    for (c, b) in state.lifted.clusters_mut().iter_mut().zip(state.drift.iter_mut()) {
        advance_cluster(model, c, b, cfg, rng)?;
    }
    state.time += cfg.dt;
    Ok(())
}

/// `R_drift = 4 √(2T)`: four standard deviations of a coordinate's Brownian
/// displacement over `[0, T]`.
pub fn drift_radius(t_end: f64) -> f64 {
    4.0 * (2.0 * t_end).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryMeta {
    pub t_end: f64,
    pub dt: f64,
    pub drift_scale: f64,
    pub n_paths: usize,
    pub r_trunc: f64,
    pub r_drift: f64,
    pub observation_window: Window,
    pub buffer: Window,
    pub note: String,
}

/// Observable values `values[checkpoint][observable][path]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryTable {
    pub times: Vec<f64>,
    pub values: Vec<Vec<Vec<f64>>>,
    pub meta: TrajectoryMeta,
}

impl TrajectoryTable {
    pub fn n_observables(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    pub fn slice(&self, checkpoint: usize, observable: usize) -> &[f64] {
        &self.values[checkpoint][observable]
    }

    /// Rows `(path, time, observable, value)` in path-major order.
    pub fn rows(&self) -> Vec<(usize, f64, usize, f64)> {
        let mut out = Vec::new();
        for p in 0..self.meta.n_paths {
            for (c, t) in self.times.iter().enumerate() {
                for o in 0..self.n_observables() {
                    out.push((p, *t, o, self.values[c][o][p]));
                }
            }
        }
        out
    }
}

/// `⟨f, γ⟩` as a cylinder function.
pub fn pairing_observable(f: SmoothTestFunction) -> CylinderFunction {
    CylinderFunction::new(OuterFunction::coordinate(1, 0), vec![f])
}

/// Simulates `n_paths` stationary paths on `K` and records pairings with the
/// observables at each checkpoint (rounded to the step grid; `0` is always
/// recorded).
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    model: &ClusterProcessModel,
    k: &Window,
    t_end: f64,
    cfg: StepConfig,
    n_paths: usize,
    observables: &[SmoothTestFunction],
    checkpoints: &[f64],
    seed: u64,
) -> Result<TrajectoryTable> {
    let obs: Vec<CylinderFunction> = observables.iter().cloned().map(pairing_observable).collect();
    simulate_cylinder(model, k, t_end, cfg, n_paths, &obs, checkpoints, seed)
}

/// As [`simulate`], with general cylinder-function observables.
#[allow(clippy::too_many_arguments)]
pub fn simulate_cylinder(
    model: &ClusterProcessModel,
    k: &Window,
    t_end: f64,
    cfg: StepConfig,
    n_paths: usize,
    observables: &[CylinderFunction],
    checkpoints: &[f64],
    seed: u64,
) -> Result<TrajectoryTable> {
    if !(t_end >= 0.0) || !(cfg.dt > 0.0) {
        return Err(crate::error::invalid("T must be nonnegative and dt positive"));
    }
    let steps = (t_end / cfg.dt).round() as usize;
    let mut marks: Vec<usize> = std::iter::once(0)
        .chain(checkpoints.iter().filter(|t| **t <= t_end).map(|t| (t / cfg.dt).round() as usize))
        .collect();
    marks.sort_unstable();
    marks.dedup();
    let r_drift = drift_radius(t_end);
    let buffer = k.inflate(r_drift);
    let sampler = LiftedSampler::new(model, &buffer)?;
    let paths = McRunner::new(seed).with_batch_size(PATH_BATCH).map(n_paths, |rng, _| -> Result<Vec<Vec<f64>>> {
        let mut state = DynamicsState::new(model, sampler.sample(rng), buffer.clone())?;
        let mut rec = Vec::with_capacity(marks.len());
        let mut next = 0;
        for step in 0..=steps {
            if next < marks.len() && marks[next] == step {
                let g = state.observed(k);
                rec.push(observables.iter().map(|f| f.eval(&g)).collect());
                next += 1;
            }
            if step < steps {
                em_step(model, &mut state, cfg, rng)?;
            }
        }
        Ok(rec)
    });
    let paths: Vec<Vec<Vec<f64>>> = paths.into_iter().collect::<Result<_>>()?;
    let mut values = vec![vec![Vec::with_capacity(n_paths); observables.len()]; marks.len()];
    for rec in &paths {
        for (c, row) in rec.iter().enumerate() {
            for (o, v) in row.iter().enumerate() {
                values[c][o].push(*v);
            }
        }
    }
    Ok(TrajectoryTable {
        times: marks.iter().map(|m| *m as f64 * cfg.dt).collect(),
        values,
        meta: TrajectoryMeta {
            t_end,
            dt: cfg.dt,
            drift_scale: cfg.drift_scale,
            n_paths,
            r_trunc: model.r_trunc(),
            r_drift,
            observation_window: k.clone(),
            buffer,
            note: "clusters not meeting the buffer at t = 0 are never simulated; clusters whose centroid leaves the buffer are evolved but not observed".into(),
        },
    })
}

/// Marginal comparison of one observable at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityEntry {
    pub observable: usize,
    pub time: f64,
    /// Paired `E[f_t] - E[f_0]` over paths.
    pub mean_drift: Estimate,
    /// Paired `Var[f_t] - Var[f_0]` over paths (delta method).
    pub variance_drift: Estimate,
    /// Two-sample KS p-value against an independent direct-sampler ensemble.
    pub ks_p: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityReport {
    pub entries: Vec<StationarityEntry>,
    /// Per-comparison KS level after the Bonferroni correction.
    pub ks_level: f64,
}

impl StationarityReport {
    pub fn any_flagged(&self) -> bool {
        self.entries.iter().any(|e| e.flagged)
    }

    /// Every mean and variance drift within `k` standard errors of zero.
    pub fn moments_within(&self, k: f64) -> bool {
        self.entries.iter().all(|e| e.mean_drift.within(0.0, k) && e.variance_drift.within(0.0, k))
    }
}

/// Compares every checkpoint after `0` with the `t = 0` slice (paired) and with
/// `reference[observable]`, an independent ensemble from the direct sampler.
pub fn stationarity_report(table: &TrajectoryTable, reference: &[Vec<f64>], level: f64) -> StationarityReport {
    let n_cmp = (table.times.len().saturating_sub(1) * table.n_observables()).max(1);
    let ks_level = level / n_cmp as f64;
    let mut entries = Vec::new();
    for c in 1..table.times.len() {
        for o in 0..table.n_observables() {
            let x0 = table.slice(0, o);
            let xt = table.slice(c, o);
            let (mean_drift, variance_drift) = paired_drifts(x0, xt);
            let ks_p = match reference.get(o) {
                Some(r) if !r.is_empty() && !xt.is_empty() => ks_two_sample(xt, r).1,
                _ => 1.0,
            };
            entries.push(StationarityEntry {
                observable: o,
                time: table.times[c],
                mean_drift,
                variance_drift,
                ks_p,
                flagged: ks_p < ks_level,
            });
        }
    }
    StationarityReport { entries, ks_level }
}

fn paired_drifts(x0: &[f64], xt: &[f64]) -> (Estimate, Estimate) {
    let n = x0.len() as f64;
    let m0 = x0.iter().sum::<f64>() / n;
    let mt = xt.iter().sum::<f64>() / n;
    let mut m = Moments::new(4);
    for (a, b) in x0.iter().zip(xt) {
        m.push(&[*a, *b, (a - m0).powi(2), (b - mt).powi(2)]);
    }
    (m.linear(&[-1.0, 1.0, 0.0, 0.0]), m.linear(&[0.0, 0.0, -1.0, 1.0]))
}

/// Direct-sampler ensemble of pairings on `K`, one vector per observable.
pub fn direct_ensemble(
    model: &ClusterProcessModel,
    k: &Window,
    observables: &[SmoothTestFunction],
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let samples = sample_mucl_many(model, k, n, seed)?;
    Ok(observables.iter().map(|f| samples.iter().map(|g| crate::configspace::pair(f, g)).collect()).collect())
}

/// `E[F_0 G_t] - E[G_0 F_t]` over stationary paths.
#[allow(clippy::too_many_arguments)]
pub fn symmetry_residual(
    model: &ClusterProcessModel,
    k: &Window,
    f: &CylinderFunction,
    g: &CylinderFunction,
    t: f64,
    cfg: StepConfig,
    n_paths: usize,
    seed: u64,
) -> Result<Estimate> {
    if !(t > 0.0) {
        return Err(crate::error::invalid("t must be positive"));
    }
    let table = simulate_cylinder(model, k, t, cfg, n_paths, &[f.clone(), g.clone()], &[t], seed)?;
    let last = table.times.len() - 1;
    let mut m = Moments::new(2);
    for p in 0..n_paths {
        let (f0, g0) = (table.values[0][0][p], table.values[0][1][p]);
        let (ft, gt) = (table.values[last][0][p], table.values[last][1][p]);
        m.push(&[f0 * gt, g0 * ft]);
    }
    Ok(m.linear(&[1.0, -1.0]))
}

/// Sample autocorrelation of one observable between `t = 0` and each checkpoint.
pub fn autocorrelation(table: &TrajectoryTable, observable: usize) -> Vec<(f64, f64)> {
    let x0 = table.slice(0, observable);
    table
        .times
        .iter()
        .enumerate()
        .map(|(c, t)| {
            let mut m = Moments::new(2);
            for (a, b) in x0.iter().zip(table.slice(c, observable)) {
                m.push(&[*a, *b]);
            }
            (*t, m.correlation(0, 1))
        })
        .collect()
}

/// Difference and sum coordinates of size-2 clusters evolved from a fixed start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCoordinates {
    /// `Var(y_1 - y_2)` at the final time.
    pub difference_variance: Estimate,
    /// Mean of `(y_1 + y_2) / 2` minus its start value.
    pub centroid_drift: Estimate,
    /// `Var((y_1 + y_2)/√2)` increment, `2t` for Brownian motion.
    pub sum_variance: Estimate,
}

/// Evolves `n` independent size-2 clusters (one-dimensional) from `start` for
/// time `t` and summarizes their difference and sum coordinates.
pub fn pair_coordinates(
    model: &ClusterProcessModel,
    start: [f64; 2],
    t: f64,
    cfg: StepConfig,
    n: usize,
    seed: u64,
) -> Result<PairCoordinates> {
    if model.dim != 1 {
        return Err(Error::ModelMismatch("pair coordinates are one-dimensional".into()));
    }
    let steps = (t / cfg.dt).round() as usize;
    let ends = McRunner::new(seed).with_batch_size(256).map(n, |rng, _| -> Result<[f64; 2]> {
        let mut x = ClusterVector::scalar(&start);
        let mut b = beta_vector(model, &x)?;
        for _ in 0..steps {
            advance_cluster(model, &mut x, &mut b, cfg, rng)?;
        }
        Ok([x.coords()[0], x.coords()[1]])
    });
    let c0 = 0.5 * (start[0] + start[1]);
    let s0 = (start[0] + start[1]) / 2f64.sqrt();
    let mut m = Moments::new(3);
    let rows: Vec<[f64; 2]> = ends.into_iter().collect::<Result<_>>()?;
    for [a, b] in &rows {
        m.push(&[a - b, 0.5 * (a + b) - c0, (a + b) / 2f64.sqrt() - s0]);
    }
    let var_estimate = |col: usize, centred: bool| {
        let mean = if centred { m.mean(col) } else { 0.0 };
        let sq: Vec<f64> = rows
            .iter()
            .map(|[a, b]| {
                let v = match col {
                    0 => a - b,
                    _ => (a + b) / 2f64.sqrt() - s0,
                };
                (v - mean).powi(2)
            })
            .collect();
        crate::stats::mean_se(&sq)
    };
    Ok(PairCoordinates {
        difference_variance: var_estimate(0, true),
        centroid_drift: m.estimate(1),
        sum_variance: var_estimate(2, false),
    })
}
