//! Cluster-majority pseudoclassification: label every example with its
//! cluster's majority label and measure how often that is right.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bias::ClusterBiasProfile;
use crate::clusterer::Assignment;
use crate::dataset::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelMap {
    pub majority: BTreeMap<usize, Label>,
    /// Fraction of profiled examples that fall in a mapped cluster.
    pub coverage: f64,
}

impl PseudoLabelMap {
    pub fn get(&self, cluster: usize) -> Option<Label> {
        self.majority.get(&cluster).copied()
    }
}

/// Majority label per cluster; ties resolve to the lowest label code.
pub fn majority_labels(profiles: &[ClusterBiasProfile]) -> Result<PseudoLabelMap> {
    if profiles.is_empty() {
        return Err(Error::param("majority labels need at least one cluster profile"));
    }
    let mut majority = BTreeMap::new();
    let mut covered = 0usize;
    let mut total = 0usize;
    for p in profiles {
        total += p.size;
        if p.size == 0 {
            continue;
        }
        let mut best = Label::Entailment;
        for label in Label::ALL {
            if p.counts[label.index()] > p.counts[best.index()] {
                best = label;
            }
        }
        majority.insert(p.cluster_id, best);
        covered += p.size;
    }
    let coverage = if total == 0 { 0.0 } else { covered as f64 / total as f64 };
    Ok(PseudoLabelMap { majority, coverage })
}

pub fn pseudo_accuracy(map: &PseudoLabelMap, assignment: &Assignment, labels: &[Label]) -> Result<f64> {
    if assignment.len() != labels.len() {
        return Err(Error::param(format!(
            "assignment has {} entries but there are {} labels",
            assignment.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::param("pseudo accuracy of an empty label set is undefined"));
    }
    let mut correct = 0usize;
    for (&c, &label) in assignment.cluster_of().iter().zip(labels) {
        let predicted = map
            .get(c)
            .ok_or_else(|| Error::param(format!("cluster {c} has no majority label")))?;
        correct += usize::from(predicted == label);
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// The three label pairs, keyed as in the report: `"ne"`, `"nc"`, `"ec"`.
pub const LABEL_PAIRS: [(Label, Label); 3] = [
    (Label::Neutral, Label::Entailment),
    (Label::Neutral, Label::Contradiction),
    (Label::Entailment, Label::Contradiction),
];

pub fn pair_key(pair: (Label, Label)) -> String {
    [pair.0.short(), pair.1.short()].iter().collect()
}

pub const PAIR_BASELINE: f64 = 0.5;
pub const THREE_WAY_BASELINE: f64 = 1.0 / 3.0;
