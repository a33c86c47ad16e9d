//! Core domain types: relation labels, label distributions and labeled
//! embedding datasets.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of relation labels.
pub const NUM_LABELS: usize = 3;

/// NLI relation label. The integer codes are fixed and used by every file
/// format and report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Entailment = 0,
    Neutral = 1,
    Contradiction = 2,
}

impl Label {
    pub const ALL: [Label; NUM_LABELS] = [Label::Entailment, Label::Neutral, Label::Contradiction];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Label::Entailment),
            1 => Ok(Label::Neutral),
            2 => Ok(Label::Contradiction),
            other => Err(Error::LabelCode(format!("label code {other} is not in 0..=2"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Entailment => "entailment",
            Label::Neutral => "neutral",
            Label::Contradiction => "contradiction",
        }
    }

    /// One-letter tag used for pair keys (`"ne"`, `"nc"`, `"ec"`).
    pub fn short(self) -> char {
        match self {
            Label::Entailment => 'e',
            Label::Neutral => 'n',
            Label::Contradiction => 'c',
        }
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label.code()
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(code: u8) -> Result<Self> {
        Label::from_code(code)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = Error;

    /// Accepts the label names (case-insensitive) or the codes `0`/`1`/`2`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "entailment" | "0" => Ok(Label::Entailment),
            "neutral" | "1" => Ok(Label::Neutral),
            "contradiction" | "2" => Ok(Label::Contradiction),
            _ => Err(Error::LabelCode(format!("unknown label {t:?}"))),
        }
    }
}

/// Per-label counts, indexed by label code.
pub type LabelCounts = [usize; NUM_LABELS];

pub fn label_histogram(labels: &[Label]) -> LabelCounts {
    let mut counts = [0usize; NUM_LABELS];
    for label in labels {
        counts[label.index()] += 1;
    }
    counts
}

pub fn normalize(counts: &LabelCounts) -> Result<LabelDistribution> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyCluster("cannot normalize an all-zero label histogram".into()));
    }
    let total = total as f64;
    Ok(LabelDistribution { probs: counts.map(|c| c as f64 / total) })
}

/// A probability distribution over the three labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; NUM_LABELS]", into = "[f64; NUM_LABELS]")]
pub struct LabelDistribution {
    probs: [f64; NUM_LABELS],
}

impl LabelDistribution {
    const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(probs: [f64; NUM_LABELS]) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::Value(format!("probabilities {probs:?} must lie in [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Value(format!("probabilities {probs:?} sum to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform() -> Self {
        Self { probs: [1.0 / NUM_LABELS as f64; NUM_LABELS] }
    }

    pub fn probs(&self) -> &[f64; NUM_LABELS] {
        &self.probs
    }

    pub fn prob(&self, label: Label) -> f64 {
        self.probs[label.index()]
    }

    /// Euclidean distance between the two probability vectors.
    pub fn l2_distance(&self, other: &LabelDistribution) -> f64 {
        self.probs
            .iter()
            .zip(other.probs.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest distance attainable from `self` by any distribution, i.e. the
    /// distance to the farthest simplex vertex.
    pub fn max_l2_distance(&self) -> f64 {
        Label::ALL
            .iter()
            .map(|&l| {
                let mut vertex = [0.0; NUM_LABELS];
                vertex[l.index()] = 1.0;
                LabelDistribution { probs: vertex }.l2_distance(self)
            })
            .fold(0.0, f64::max)
    }
}

impl TryFrom<[f64; NUM_LABELS]> for LabelDistribution {
    type Error = Error;

    fn try_from(probs: [f64; NUM_LABELS]) -> Result<Self> {
        LabelDistribution::new(probs)
    }
}

impl From<LabelDistribution> for [f64; NUM_LABELS] {
    fn from(d: LabelDistribution) -> Self {
        d.probs
    }
}

/// Labeled embedding vectors, stored as `f32` exactly as they appear on disk.
/// Analysis code widens to `f64` through [`EmbeddingDataset::vectors_f64`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    name: String,
    split: String,
    ids: Option<Vec<String>>,
    labels: Vec<Label>,
    vectors: Array2<f32>,
}

impl EmbeddingDataset {
    pub fn new(
        name: impl Into<String>,
        split: impl Into<String>,
        ids: Option<Vec<String>>,
        labels: Vec<Label>,
        vectors: Array2<f32>,
    ) -> Result<Self> {
        let (rows, dim) = vectors.dim();
        if dim == 0 {
            return Err(Error::format("embedding dimension must be at least 1"));
        }
        if labels.len() != rows {
            return Err(Error::format(format!(
                "{} labels for {rows} vector rows",
                labels.len()
            )));
        }
        if let Some(ids) = &ids {
            if ids.len() != rows {
                return Err(Error::format(format!("{} ids for {rows} vector rows", ids.len())));
            }
        }
        if let Some((i, v)) = vectors.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Value(format!(
                "non-finite entry {v} at row {} column {}",
                i / dim,
                i % dim
            )));
        }
        Ok(Self { name: name.into(), split: split.into(), ids, labels, vectors })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn split(&self) -> &str {
        &self.split
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn vectors(&self) -> &Array2<f32> {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.vectors.row(i)
    }

    pub fn vectors_f64(&self) -> Array2<f64> {
        self.vectors.mapv(f64::from)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_split(mut self, split: impl Into<String>) -> Self {
        self.split = split.into();
        self
    }

    /// Keep only the examples whose label is one of `keep`, preserving order.
    pub fn filter_labels(&self, keep: &[Label]) -> EmbeddingDataset {
        let rows: Vec<usize> =
            (0..self.len()).filter(|&i| keep.contains(&self.labels[i])).collect();
        let vectors = self.vectors.select(ndarray::Axis(0), &rows);
        EmbeddingDataset {
            name: self.name.clone(),
            split: self.split.clone(),
            ids: self.ids.as_ref().map(|ids| rows.iter().map(|&i| ids[i].clone()).collect()),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            vectors,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    use Label::{Contradiction as C, Entailment as E, Neutral as N};

    #[test]
    fn histogram_counts_each_code() {
        assert_eq!(label_histogram(&[E, N, C, N]), [1, 2, 1]);
        assert_eq!(label_histogram(&[]), [0, 0, 0]);
        let balanced: Vec<Label> = (0..300).map(|i| Label::ALL[i % 3]).collect();
        assert_eq!(label_histogram(&balanced), [100, 100, 100]);
    }

    #[test]
    fn normalize_examples() {
        let d = normalize(&[10, 10, 10]).unwrap();
        for p in d.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(normalize(&[3, 1, 0]).unwrap().probs(), &[0.75, 0.25, 0.0]);
        assert!(matches!(normalize(&[0, 0, 0]), Err(Error::EmptyCluster(_))));
    }

    #[test]
    fn label_parsing() {
        assert_eq!("Entailment".parse::<Label>().unwrap(), E);
        assert_eq!(" NEUTRAL ".parse::<Label>().unwrap(), N);
        assert_eq!("2".parse::<Label>().unwrap(), C);
        assert!(matches!("maybe".parse::<Label>(), Err(Error::LabelCode(_))));
        assert!(matches!(Label::from_code(3), Err(Error::LabelCode(_))));
    }

    #[test]
    fn distribution_rejects_bad_sums() {
        assert!(LabelDistribution::new([0.5, 0.5, 0.5]).is_err());
        assert!(LabelDistribution::new([-0.1, 0.6, 0.5]).is_err());
        assert!(LabelDistribution::new([0.2, 0.3, 0.5]).is_ok());
    }

    #[test]
    fn uniform_max_distance_is_sqrt6_over_3() {
        let d = LabelDistribution::uniform().max_l2_distance();
        assert!((d - 6f64.sqrt() / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dataset_invariants() {
        let v = array![[1.0f32, 2.0], [3.0, 4.0]];
        assert!(EmbeddingDataset::new("x", "test", None, vec![E, N], v.clone()).is_ok());
        assert!(EmbeddingDataset::new("x", "test", None, vec![E], v.clone()).is_err());
        assert!(EmbeddingDataset::new("x", "test", Some(vec!["a".into()]), vec![E, N], v).is_err());
        let bad = array![[f32::NAN, 0.0]];
        assert!(matches!(
            EmbeddingDataset::new("x", "test", None, vec![E], bad),
            Err(Error::Value(_))
        ));
        assert!(EmbeddingDataset::new("x", "test", None, vec![], Array2::zeros((0, 0))).is_err());
    }

    #[test]
    fn filter_keeps_order_and_ids() {
        let v = array![[0.0f32], [1.0], [2.0], [3.0]];
        let ids = Some(vec!["a".into(), "b".into(), "c".into(), "d".into()]);
        let ds = EmbeddingDataset::new("x", "train", ids, vec![E, N, C, E], v).unwrap();
        let f = ds.filter_labels(&[E, C]);
        assert_eq!(f.labels(), &[E, C, E]);
        assert_eq!(f.ids().unwrap(), &["a", "c", "d"]);
        assert_eq!(f.vectors().column(0).to_vec(), vec![0.0, 2.0, 3.0]);
    }

    fn labels_strategy() -> impl Strategy<Value = Vec<Label>> {
        prop::collection::vec(prop::sample::select(Label::ALL.to_vec()), 1..200)
    }

    proptest! {
        #[test]
        fn normalized_histogram_sums_to_one(labels in labels_strategy()) {
            let d = normalize(&label_histogram(&labels)).unwrap();
            prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn histogram_is_permutation_invariant(labels in labels_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = labels.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(label_histogram(&labels), label_histogram(&shuffled));
        }
    }
}
