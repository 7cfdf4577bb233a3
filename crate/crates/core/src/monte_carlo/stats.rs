use rayon::prelude::*;

use super::rng::{stream, Purpose};
use super::PathConfig;
use rand_chacha::ChaCha8Rng;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl MeanEstimate {
    /// `|mean - target| <= k * std_error`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }
}

/// Running mean vector and co-moment matrix over `dim` jointly observed
/// quantities, mergeable in a fixed order.
#[derive(Debug, Clone)]
pub(crate) struct CoMoments {
    n: usize,
    mean: Vec<f64>,
    // Row-major dim x dim sum of centered products.
    comoment: Vec<f64>,
    scratch: Vec<f64>,
}

impl CoMoments {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            comoment: vec![0.0; dim * dim],
            scratch: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, obs: &[f64]) {
        let dim = self.dim();
        self.n += 1;
        let n = self.n as f64;
        for i in 0..dim {
            self.scratch[i] = obs[i] - self.mean[i];
            self.mean[i] += self.scratch[i] / n;
        }
        for i in 0..dim {
            let after = obs[i] - self.mean[i];
            for j in 0..dim {
                self.comoment[i * dim + j] += after * self.scratch[j];
            }
        }
    }

    /// Chan et al. pairwise merge.
    pub fn merge(&mut self, other: &CoMoments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let dim = self.dim();
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta: Vec<f64> = (0..dim).map(|i| other.mean[i] - self.mean[i]).collect();
        for i in 0..dim {
            for j in 0..dim {
                self.comoment[i * dim + j] +=
                    other.comoment[i * dim + j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for i in 0..dim {
            self.mean[i] += delta[i] * nb / n;
        }
        self.n += other.n;
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.mean[i]
    }

    /// Sample covariance with the `n - 1` denominator.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.comoment[i * self.dim() + j] / (self.n as f64 - 1.0)
    }

    pub fn std_error(&self, i: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.covariance(i, i).max(0.0) / self.n as f64).sqrt()
    }

    /// Standard error of `mean(i) - mean(j)` from paired observations.
    pub fn paired_std_error(&self, i: usize, j: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let var = self.covariance(i, i) + self.covariance(j, j) - 2.0 * self.covariance(i, j);
        (var.max(0.0) / self.n as f64).sqrt()
    }

    pub fn estimate(&self, i: usize) -> MeanEstimate {
        MeanEstimate {
            mean: self.mean(i),
            std_error: self.std_error(i),
            n: self.n,
        }
    }
}

/// Mean of `draw` over `cfg.n_paths` iid samples; each chunk owns one stream
/// and chunks are merged in order.
pub(crate) fn estimate_iid(cfg: &PathConfig, draw: impl Fn(&mut ChaCha8Rng) -> f64 + Sync) -> MeanEstimate {
    let chunks: Vec<CoMoments> = (0..cfg.n_chunks())
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(cfg.seed, c, Purpose::Draws);
            let mut acc = CoMoments::new(1);
            for _ in cfg.chunk_range(c) {
                acc.push(&[draw(&mut rng)]);
            }
            acc
        })
        .collect();
    let mut total = CoMoments::new(1);
    for c in &chunks {
        total.merge(c);
    }
    total.estimate(0)
}
