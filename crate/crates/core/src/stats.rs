//! Seeded Monte Carlo plumbing and the small amount of test statistics the
//! verification harnesses need.
//!
//! Parallel estimators batch their draws by hand: batch `i` always runs on
//! ChaCha stream `i` of the derived seed and partial moments are merged in
//! batch order, so results do not depend on the rayon thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { mean: value, se: 0.0, n: 0 }
    }

    /// `|self - target| <= k * se`, treating a zero SE as an exact comparison
    /// with a `1e-12` relative slack.
    pub fn within(&self, target: f64, k: f64) -> bool {
        let slack = 1e-12 * target.abs().max(1.0);
        (self.mean - target).abs() <= k * self.se + slack
    }

    /// Difference of two independent estimates.
    pub fn minus(&self, other: &Estimate) -> Estimate {
        Estimate {
            mean: self.mean - other.mean,
            se: combined_se(self.se, other.se),
            n: self.n.min(other.n),
        }
    }
}

pub fn combined_se(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

/// Running means and co-moments of a fixed number of columns.
#[derive(Debug, Clone)]
pub struct Moments {
    n: usize,
    mean: Vec<f64>,
    // row-major co-moment matrix, sum of (x_i - mean_i)(x_j - mean_j)
    comoment: Vec<f64>,
}

impl Moments {
    pub fn new(columns: usize) -> Self {
        Self { n: 0, mean: vec![0.0; columns], comoment: vec![0.0; columns * columns] }
    }

    pub fn columns(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, row: &[f64]) {
        let m = self.columns();
        debug_assert_eq!(row.len(), m);
        self.n += 1;
        let n = self.n as f64;
        let mut delta = [0.0f64; 16];
        let mut heap;
        let delta: &mut [f64] = if m <= 16 {
            &mut delta[..m]
        } else {
            heap = vec![0.0; m];
            &mut heap
        };
        for i in 0..m {
            delta[i] = row[i] - self.mean[i];
            self.mean[i] += delta[i] / n;
        }
        for i in 0..m {
            let post_i = row[i] - self.mean[i];
            for j in 0..m {
                self.comoment[i * m + j] += post_i * delta[j];
            }
        }
    }

    /// Chan et al. pairwise merge.
    pub fn merge(&mut self, other: &Moments) {
        let m = self.columns();
        assert_eq!(m, other.columns());
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        let delta: Vec<f64> = (0..m).map(|i| other.mean[i] - self.mean[i]).collect();
        for i in 0..m {
            for j in 0..m {
                self.comoment[i * m + j] +=
                    other.comoment[i * m + j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for i in 0..m {
            self.mean[i] += delta[i] * nb / n;
        }
        self.n += other.n;
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.mean[i]
    }

    pub fn variance(&self, i: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let m = self.columns();
        (self.comoment[i * m + i] / (self.n as f64 - 1.0)).max(0.0)
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.comoment[i * self.columns() + j] / (self.n as f64 - 1.0)
    }

    pub fn estimate(&self, i: usize) -> Estimate {
        let se = if self.n < 2 { 0.0 } else { (self.variance(i) / self.n as f64).sqrt() };
        Estimate { mean: self.mean[i], se, n: self.n }
    }

    /// Estimate of `Σ w_i E[X_i]` using the per-draw covariance, so common
    /// random numbers across columns are accounted for.
    pub fn linear(&self, weights: &[f64]) -> Estimate {
        let m = self.columns();
        assert_eq!(weights.len(), m);
        let mean = (0..m).map(|i| weights[i] * self.mean[i]).sum();
        let mut var = 0.0;
        for i in 0..m {
            for j in 0..m {
                var += weights[i] * weights[j] * self.covariance(i, j);
            }
        }
        let se = if self.n < 2 { 0.0 } else { (var.max(0.0) / self.n as f64).sqrt() };
        Estimate { mean, se, n: self.n }
    }

    /// Sample correlation of two columns.
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        let denom = (self.variance(i) * self.variance(j)).sqrt();
        if denom == 0.0 {
            0.0
        } else {
            self.covariance(i, j) / denom
        }
    }
}

/// SplitMix64 finalizer; used to derive independent seeds from `(seed, tag)`.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic substream `index` of `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Batched, seeded, order-stable parallel Monte Carlo driver.
#[derive(Debug, Clone, Copy)]
pub struct McRunner {
    pub seed: u64,
    pub batch_size: usize,
}

impl McRunner {
    pub fn new(seed: u64) -> Self {
        Self { seed, batch_size: 2048 }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    /// Runs `n` draws of `draw`, each filling a row of `columns` values.
    pub fn run<F>(&self, n: usize, columns: usize, draw: F) -> Moments
    where
        F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
    {
        self.try_run(n, columns, |rng, row| {
            draw(rng, row);
            Ok::<(), std::convert::Infallible>(())
        })
        .unwrap_or_else(|e| match e {})
    }

    /// Fallible variant; the first error in batch order is returned.
    pub fn try_run<F, E>(&self, n: usize, columns: usize, draw: F) -> Result<Moments, E>
    where
        F: Fn(&mut ChaCha8Rng, &mut [f64]) -> Result<(), E> + Sync,
        E: Send,
    {
        let batches = n.div_ceil(self.batch_size);
        let partials: Vec<Result<Moments, E>> = (0..batches)
            .into_par_iter()
            .map(|b| {
                let mut rng = substream(self.seed, b as u64);
                let start = b * self.batch_size;
                let len = self.batch_size.min(n - start);
                let mut acc = Moments::new(columns);
                let mut row = vec![0.0; columns];
                for _ in 0..len {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    draw(&mut rng, &mut row)?;
                    acc.push(&row);
                }
                Ok(acc)
            })
            .collect();
        let mut total = Moments::new(columns);
        for p in partials {
            total.merge(&p?);
        }
        Ok(total)
    }

    /// Runs `n` independent jobs producing arbitrary values, in index order.
    pub fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut ChaCha8Rng, usize) -> T + Sync,
    {
        let batches = n.div_ceil(self.batch_size);
        let nested: Vec<Vec<T>> = (0..batches)
            .into_par_iter()
            .map(|b| {
                let mut rng = substream(self.seed, b as u64);
                let start = b * self.batch_size;
                let end = (start + self.batch_size).min(n);
                (start..end).map(|i| job(&mut rng, i)).collect()
            })
            .collect();
        nested.into_iter().flatten().collect()
    }
}

/// Chi-square goodness of fit of integer counts against a Poisson law.
///
/// Cells are `0..=k_max` with the upper tail pooled into the last cell; `k_max`
/// is chosen so every expected cell count is at least 5.
pub fn chi_square_poisson(counts: &[u64], mean: f64) -> ChiSquareTest {
    let n = counts.len() as f64;
    let mut probs = Vec::new();
    let mut p = (-mean).exp();
    let mut cdf = 0.0;
    let mut k = 0u64;
    loop {
        // stop once the remaining tail (including this cell) would be too small
        if n * (1.0 - cdf - p) < 5.0 {
            probs.push(1.0 - cdf);
            break;
        }
        probs.push(p);
        cdf += p;
        k += 1;
        p *= mean / k as f64;
    }
    let cells = probs.len();
    let mut observed = vec![0u64; cells];
    for &c in counts {
        let idx = (c as usize).min(cells - 1);
        observed[idx] += 1;
    }
    chi_square_from_cells(&observed, &probs)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

pub fn chi_square_from_cells(observed: &[u64], probs: &[f64]) -> ChiSquareTest {
    let n: u64 = observed.iter().sum();
    let n = n as f64;
    let mut stat = 0.0;
    let mut used = 0usize;
    for (&o, &p) in observed.iter().zip(probs) {
        let e = n * p;
        if e > 0.0 {
            stat += (o as f64 - e).powi(2) / e;
            used += 1;
        }
    }
    let dof = used.saturating_sub(1).max(1);
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    ChiSquareTest { statistic: stat, dof, p_value: 1.0 - dist.cdf(stat) }
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    if a.is_empty() || b.is_empty() {
        return (0.0, 1.0);
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    (d, kolmogorov_q(lambda))
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = sign * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Plain mean and standard error of a slice.
pub fn mean_se(values: &[f64]) -> Estimate {
    let mut m = Moments::new(1);
    for &v in values {
        m.push(&[v]);
    }
    m.estimate(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn merge_matches_sequential() {
        let mut rng = substream(7, 0);
        let rows: Vec<[f64; 2]> = (0..1000).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let mut seq = Moments::new(2);
        rows.iter().for_each(|r| seq.push(r));
        let mut a = Moments::new(2);
        let mut b = Moments::new(2);
        rows[..300].iter().for_each(|r| a.push(r));
        rows[300..].iter().for_each(|r| b.push(r));
        a.merge(&b);
        assert!((a.mean(1) - seq.mean(1)).abs() < 1e-14);
        assert!((a.covariance(0, 1) - seq.covariance(0, 1)).abs() < 1e-14);
        assert!((a.variance(0) - seq.variance(0)).abs() < 1e-14);
    }

    #[test]
    fn runner_is_thread_count_independent() {
        let runner = McRunner::new(11).with_batch_size(100);
        let draw = |rng: &mut ChaCha8Rng, row: &mut [f64]| row[0] = rng.random::<f64>();
        let a = runner.run(1000, 1, draw);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| runner.run(1000, 1, draw));
        assert_eq!(a.mean(0).to_bits(), b.mean(0).to_bits());
        assert_eq!(a.variance(0).to_bits(), b.variance(0).to_bits());
    }

    #[test]
    fn linear_uses_covariance() {
        let mut m = Moments::new(2);
        for i in 0..100 {
            let x = i as f64;
            m.push(&[x, x]);
        }
        let d = m.linear(&[1.0, -1.0]);
        assert_eq!(d.mean, 0.0);
        assert!(d.se < 1e-12);
    }

    #[test]
    fn ks_identical_samples() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert!(p > 0.99);
        let b: Vec<f64> = a.iter().map(|x| x + 50.0).collect();
        let (_, p) = ks_two_sample(&a, &b);
        assert!(p < 1e-3);
    }

    #[test]
    fn chi_square_accepts_exact_frequencies() {
        // counts laid out proportionally to Poisson(2)
        let mut counts = Vec::new();
        let mut p = (-2.0f64).exp();
        for k in 0..12u64 {
            let c = (p * 100_000.0).round() as usize;
            counts.extend(std::iter::repeat_n(k, c));
            p *= 2.0 / (k + 1) as f64;
        }
        assert!(chi_square_poisson(&counts, 2.0).p_value > 0.5);
        assert!(chi_square_poisson(&counts, 2.3).p_value < 1e-6);
    }
}
