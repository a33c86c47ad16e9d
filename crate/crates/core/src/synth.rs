//! Synthetic labeled Gaussian mixtures with a tunable bias dial.
//!
//! Each centre has a preferred label (assigned round-robin, so the dataset is
//! globally balanced). An example's label is drawn from
//! `(1 − β)·uniform + β·δ(preferred)`, so `β = 0` gives label-free geometry
//! and `β = 1` gives single-label clusters.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingDataset, Label, NUM_LABELS};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub dim: usize,
    pub n_true_clusters: usize,
    pub beta: f64,
    pub sigma: f64,
    pub center_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n: 9000, dim: 32, n_true_clusters: 30, beta: 0.5, sigma: 1.0, center_scale: 50.0, seed: 42 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_true_clusters == 0 || self.n < self.n_true_clusters {
            return Err(Error::param(format!(
                "need n >= n_true_clusters >= 1, got n={}, n_true_clusters={}",
                self.n, self.n_true_clusters
            )));
        }
        if self.dim == 0 {
            return Err(Error::param("dim must be at least 1"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::param(format!("beta must be in [0, 1], got {}", self.beta)));
        }
        if !(self.center_scale >= 0.0 && self.center_scale.is_finite()) {
            return Err(Error::param(format!("center_scale must be non-negative, got {}", self.center_scale)));
        }
        Ok(())
    }

    pub fn preferred_label(center: usize) -> Label {
        Label::ALL[center % NUM_LABELS]
    }
}

/// A generated dataset together with the true centre of every example.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: EmbeddingDataset,
    pub centers: Array2<f64>,
    pub center_of: Vec<usize>,
}

pub fn generate(config: &SynthConfig) -> Result<EmbeddingDataset> {
    generate_with_truth(config).map(|o| o.dataset)
}

pub fn generate_with_truth(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, Stream::Synth);
    let noise = Normal::new(0.0, config.sigma).map_err(|e| Error::param(e.to_string()))?;

    let scale = config.center_scale;
    let centers = Array2::from_shape_fn((config.n_true_clusters, config.dim), |_| {
        if scale > 0.0 {
            rng.random_range(-scale..=scale)
        } else {
            0.0
        }
    });

    let mut vectors = Array2::<f32>::zeros((config.n, config.dim));
    let mut labels = Vec::with_capacity(config.n);
    let mut center_of = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let c = rng.random_range(0..config.n_true_clusters);
        for j in 0..config.dim {
            vectors[[i, j]] = (centers[[c, j]] + noise.sample(&mut rng)) as f32;
        }
        let label = if rng.random::<f64>() < config.beta {
            SynthConfig::preferred_label(c)
        } else {
            Label::ALL[rng.random_range(0..NUM_LABELS)]
        };
        labels.push(label);
        center_of.push(c);
    }
    let ids = (0..config.n).map(|i| format!("synth-{i}")).collect();
    let dataset = EmbeddingDataset::new(
        format!("synth-beta{}", config.beta),
        "train",
        Some(ids),
        labels,
        vectors,
    )?;
    Ok(SynthOutput { dataset, centers, center_of })
}
