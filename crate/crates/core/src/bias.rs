//! Per-cluster label-distribution bias and the PECO curve.
//!
//! Each cluster's label distribution is compared with a reference
//! distribution by L2 distance `d`. A cluster is an outlier at threshold `t`
//! when `d > t`. Sweeping `t` over `[0, 1]` and counting outliers gives the
//! PECO curve ("progressive evaluation of cluster outliers"); the area under
//! the curve, normalized by the cluster count, is the dataset's bias score.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::clusterer::Assignment;
use crate::dataset::{normalize, Label, LabelCounts, LabelDistribution, NUM_LABELS};
use crate::error::{Error, Result};

pub const DEFAULT_GRID_STEP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterBiasProfile {
    pub cluster_id: usize,
    pub size: usize,
    pub counts: LabelCounts,
    pub distribution: LabelDistribution,
    /// L2 distance between `distribution` and the reference.
    pub d: f64,
    /// `d` divided by the largest distance attainable from the reference.
    pub d_normalized: f64,
}

/// Profiles for the non-empty clusters, plus the ids of empty ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub profiles: Vec<ClusterBiasProfile>,
    pub empty_clusters: Vec<usize>,
}

impl ProfileSet {
    pub fn warnings(&self) -> Vec<String> {
        if self.empty_clusters.is_empty() {
            Vec::new()
        } else {
            vec![format!(
                "{} empty cluster(s) excluded from profiles: {:?} (k may be too large for n)",
                self.empty_clusters.len(),
                self.empty_clusters
            )]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceMode {
    /// Label distribution of the analyzed split.
    #[default]
    Empirical,
    Uniform,
}

impl std::str::FromStr for ReferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "empirical" => Ok(ReferenceMode::Empirical),
            "uniform" => Ok(ReferenceMode::Uniform),
            other => Err(Error::param(format!("unknown reference mode {other:?}"))),
        }
    }
}

impl ReferenceMode {
    pub fn resolve(self, labels: &[Label]) -> Result<LabelDistribution> {
        match self {
            ReferenceMode::Uniform => Ok(LabelDistribution::uniform()),
            ReferenceMode::Empirical => normalize(&crate::dataset::label_histogram(labels)),
        }
    }
}

pub fn cluster_profiles(
    assignment: &Assignment,
    labels: &[Label],
    k: usize,
    reference: &LabelDistribution,
) -> Result<ProfileSet> {
    if assignment.len() != labels.len() {
        return Err(Error::param(format!(
            "assignment has {} entries but there are {} labels",
            assignment.len(),
            labels.len()
        )));
    }
    let mut counts = vec![[0usize; NUM_LABELS]; k];
    for (&c, label) in assignment.cluster_of().iter().zip(labels) {
        if c >= k {
            return Err(Error::param(format!("cluster id {c} out of range for k={k}")));
        }
        counts[c][label.index()] += 1;
    }
    let d_max = reference.max_l2_distance();
    let mut profiles = Vec::with_capacity(k);
    let mut empty_clusters = Vec::new();
    for (cluster_id, counts) in counts.into_iter().enumerate() {
        let size: usize = counts.iter().sum();
        if size == 0 {
            empty_clusters.push(cluster_id);
            continue;
        }
        let distribution = normalize(&counts)?;
        let d = distribution.l2_distance(reference);
        profiles.push(ClusterBiasProfile {
            cluster_id,
            size,
            counts,
            distribution,
            d,
            d_normalized: if d_max > 0.0 { d / d_max } else { 0.0 },
        });
    }
    Ok(ProfileSet { profiles, empty_clusters })
}

/// Ids of the clusters with `d > t` (strict).
pub fn outlier_clusters(profiles: &[ClusterBiasProfile], t: f64) -> BTreeSet<usize> {
    profiles.iter().filter(|p| p.d > t).map(|p| p.cluster_id).collect()
}

/// How each outlier cluster contributes to the curve height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Every cluster counts once.
    #[default]
    Clusters,
    /// Clusters count in proportion to their size.
    Examples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PecoCurve {
    pub grid_step: f64,
    pub thresholds: Vec<f64>,
    pub outlier_counts: Vec<usize>,
    /// Curve height in `[0, 1]`: outlier fraction of clusters (or of
    /// examples when size-weighted).
    pub heights: Vec<f64>,
    pub k: usize,
    pub weighting: Weighting,
    pub auc: f64,
}

/// Threshold grid `0, step, 2·step, …` closed at 1.0.
pub fn threshold_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::param(format!("grid step must be in (0, 0.5], got {step}")));
    }
    let steps = (1.0 / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=steps).map(|i| (i as f64 * step).min(1.0)).collect();
    let last = *grid.last().unwrap();
    if 1.0 - last > 1e-9 {
        grid.push(1.0);
    } else {
        *grid.last_mut().unwrap() = 1.0;
    }
    Ok(grid)
}

pub fn peco_curve(profiles: &[ClusterBiasProfile], grid_step: f64, weighting: Weighting) -> Result<PecoCurve> {
    if profiles.is_empty() {
        return Err(Error::param("PECO curve needs at least one cluster profile"));
    }
    let thresholds = threshold_grid(grid_step)?;
    let k = profiles.len();
    let total_size: usize = profiles.iter().map(|p| p.size).sum();
    let mut outlier_counts = Vec::with_capacity(thresholds.len());
    let mut heights = Vec::with_capacity(thresholds.len());
    for &t in &thresholds {
        let outliers: Vec<&ClusterBiasProfile> = profiles.iter().filter(|p| p.d > t).collect();
        outlier_counts.push(outliers.len());
        heights.push(match weighting {
            Weighting::Clusters => outliers.len() as f64 / k as f64,
            Weighting::Examples => {
                outliers.iter().map(|p| p.size).sum::<usize>() as f64 / total_size as f64
            }
        });
    }
    let mut curve = PecoCurve { grid_step, thresholds, outlier_counts, heights, k, weighting, auc: 0.0 };
    curve.auc = peco_auc(&curve);
    Ok(curve)
}

/// Left Riemann sum of the normalized curve height over the threshold grid.
pub fn peco_auc(curve: &PecoCurve) -> f64 {
    curve
        .thresholds
        .windows(2)
        .zip(&curve.heights)
        .map(|(w, h)| (w[1] - w[0]) * h)
        .sum()
}
