//! End-to-end analysis: reduce → cluster → profile → PECO → pseudoclassify,
//! plus the run configuration and report schema.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bias::{cluster_profiles, peco_curve, ClusterBiasProfile, PecoCurve, ReferenceMode, Weighting};
use crate::clusterer::{fit_kmeans, Assignment, ClusterModel, KMeansParams, Metric};
use crate::dataset::{EmbeddingDataset, Label, LabelDistribution};
use crate::error::{Error, Result};
use crate::projector::{projected_points, tsne, ProjectedPoint, TsneParams};
use crate::pseudo::{majority_labels, pair_key, pseudo_accuracy, LABEL_PAIRS, PAIR_BASELINE, THREE_WAY_BASELINE};
use crate::reducer::{clamp_components, fit_pca, normalize_rows, PcaModel};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TsneInput {
    #[default]
    Pca,
    Raw,
}

impl std::str::FromStr for TsneInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pca" => Ok(TsneInput::Pca),
            "raw" => Ok(TsneInput::Raw),
            other => Err(Error::param(format!("unknown t-SNE input {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneSettings {
    pub input: TsneInput,
    pub params: TsneParams,
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

/// Everything needed to reproduce a run; embedded verbatim in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    /// Evaluation split. When set, models are fit on the input and scored on
    /// this split.
    pub holdout: Option<PathBuf>,
    pub k: usize,
    pub pca_dims: usize,
    pub metric: Metric,
    pub seed: u64,
    pub reference: ReferenceMode,
    pub grid_step: f64,
    pub threshold: f64,
    pub weighted: bool,
    pub normalize: bool,
    pub max_iter: usize,
    pub tol: f64,
    pub pairwise: bool,
    pub tsne: Option<TsneSettings>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            holdout: None,
            k: crate::clusterer::DEFAULT_K,
            pca_dims: crate::reducer::DEFAULT_COMPONENTS,
            metric: Metric::Euclidean,
            seed: 42,
            reference: ReferenceMode::Empirical,
            grid_step: crate::bias::DEFAULT_GRID_STEP,
            threshold: crate::projector::DEFAULT_MARK_THRESHOLD,
            weighted: false,
            normalize: false,
            max_iter: crate::clusterer::DEFAULT_MAX_ITER,
            tol: crate::clusterer::DEFAULT_TOL,
            pairwise: true,
            tsne: None,
            out_dir: PathBuf::from("peco-out"),
        }
    }
}

impl RunConfig {
    pub fn kmeans_params(&self) -> KMeansParams {
        KMeansParams { k: self.k, metric: self.metric, seed: self.seed, max_iter: self.max_iter, tol: self.tol }
    }

    pub fn weighting(&self) -> Weighting {
        if self.weighted {
            Weighting::Examples
        } else {
            Weighting::Clusters
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        if self.pca_dims == 0 {
            return Err(Error::param("PCA dimension must be at least 1"));
        }
        crate::bias::threshold_grid(self.grid_step)?;
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(Error::param(format!("threshold must be non-negative, got {}", self.threshold)));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter must be at least 1"));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::param("tol must be non-negative"));
        }
        Ok(())
    }
}

/// A fitted reduce-and-cluster pipeline.
#[derive(Debug, Clone)]
pub struct FittedPipeline {
    pub pca: PcaModel,
    pub clusters: ClusterModel,
    pub train_reduced: Array2<f64>,
    pub train_assignment: Assignment,
    pub warnings: Vec<String>,
}

impl FittedPipeline {
    /// Reduce and assign rows of another split with the fitted models.
    pub fn project(&self, dataset: &EmbeddingDataset, normalize: bool) -> Result<(Array2<f64>, Assignment)> {
        let raw = prepare_vectors(dataset, normalize)?;
        let reduced = self.pca.transform(raw.view())?;
        let assignment = self.clusters.assign(reduced.view())?;
        Ok((reduced, assignment))
    }
}

fn prepare_vectors(dataset: &EmbeddingDataset, normalize: bool) -> Result<Array2<f64>> {
    let mut x = dataset.vectors_f64();
    if normalize {
        normalize_rows(&mut x)?;
    }
    Ok(x)
}

/// PCA (clamped to what the data supports) followed by k-means.
pub fn fit_pipeline(dataset: &EmbeddingDataset, config: &RunConfig) -> Result<FittedPipeline> {
    let n = dataset.len();
    if n < config.k {
        return Err(Error::param(format!("dataset has {n} examples but k={}", config.k)));
    }
    let x = prepare_vectors(dataset, config.normalize)?;
    let mut warnings = Vec::new();
    let (dims, clamped) = clamp_components(config.pca_dims, n, dataset.dim());
    warnings.extend(clamped);
    if dims == 0 {
        return Err(Error::InsufficientData(format!("cannot fit PCA on {n} example(s)")));
    }
    let pca = fit_pca(x.view(), dims)?;
    let reduced = pca.transform(x.view())?;
    let (clusters, assignment) = fit_kmeans(reduced.view(), &config.kmeans_params())?;
    if !clusters.converged() {
        warnings.push(format!("k-means stopped at max_iter={} before converging", config.max_iter));
    }
    Ok(FittedPipeline { pca, clusters, train_reduced: reduced, train_assignment: assignment, warnings })
}

/// Majority-label accuracy of a fitted pipeline on `eval` (or on its own
/// training split when `eval` is `None`).
fn majority_accuracy(
    fitted: &FittedPipeline,
    train: &EmbeddingDataset,
    eval: Option<&EmbeddingDataset>,
    config: &RunConfig,
) -> Result<f64> {
    let train_profiles =
        cluster_profiles(&fitted.train_assignment, train.labels(), config.k, &LabelDistribution::uniform())?;
    let map = majority_labels(&train_profiles.profiles)?;
    match eval {
        None => pseudo_accuracy(&map, &fitted.train_assignment, train.labels()),
        Some(eval) => {
            let (_, assignment) = fitted.project(eval, config.normalize)?;
            pseudo_accuracy(&map, &assignment, eval.labels())
        }
    }
}

/// Restrict to two labels, refit reduction and clustering on the subset,
/// and return the cluster-majority accuracy.
pub fn pairwise_pseudo_accuracy(
    dataset: &EmbeddingDataset,
    pair: (Label, Label),
    config: &RunConfig,
    holdout: Option<&EmbeddingDataset>,
) -> Result<f64> {
    let keep = [pair.0, pair.1];
    let subset = dataset.filter_labels(&keep);
    if subset.len() < config.k {
        return Err(Error::param(format!(
            "pair {}: {} examples, fewer than k={}",
            pair_key(pair),
            subset.len(),
            config.k
        )));
    }
    let fitted = fit_pipeline(&subset, config)?;
    let eval_subset = holdout.map(|h| h.filter_labels(&keep));
    if let Some(e) = &eval_subset {
        if e.is_empty() {
            return Err(Error::param(format!("pair {}: holdout split has no examples", pair_key(pair))));
        }
    }
    majority_accuracy(&fitted, &subset, eval_subset.as_ref(), config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub three_way: f64,
    pub pair: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoclassificationReport {
    pub three_way: f64,
    /// Keyed `"ne"`, `"nc"`, `"ec"`; `null` when the pair could not be run.
    pub pairs: BTreeMap<String, Option<f64>>,
    /// Plain mean of the available pair accuracies.
    pub pairs_mean: Option<f64>,
    pub baseline: Baselines,
    /// `"train"` when fit and scored on the same split, `"holdout"` otherwise.
    pub evaluation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub n_components: usize,
    pub explained_variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSummary {
    pub inertia: f64,
    pub iterations_run: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub format_version: u32,
    pub dataset: String,
    pub split: String,
    pub n: usize,
    pub dim: usize,
    pub k: usize,
    pub metric: Metric,
    pub reference_mode: ReferenceMode,
    pub reference: LabelDistribution,
    pub pca: PcaSummary,
    pub clustering: ClusteringSummary,
    pub profiles: Vec<ClusterBiasProfile>,
    pub peco: PecoCurve,
    pub pseudoclassification: PseudoclassificationReport,
    pub warnings: Vec<String>,
    pub config: RunConfig,
}

/// Full analysis output: the serializable report plus the artefacts that
/// are written to separate files.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: AnalysisReport,
    pub pca: PcaModel,
    pub clusters: ClusterModel,
    pub points: Option<Vec<ProjectedPoint>>,
}

/// Run the whole pipeline on `dataset`. With a holdout split, models are fit
/// on `dataset` and every metric is computed on the holdout assignments.
pub fn analyze(dataset: &EmbeddingDataset, holdout: Option<&EmbeddingDataset>, config: &RunConfig) -> Result<Analysis> {
    config.validate()?;
    if let Some(h) = holdout {
        if h.dim() != dataset.dim() {
            return Err(Error::param(format!(
                "holdout dimension {} differs from training dimension {}",
                h.dim(),
                dataset.dim()
            )));
        }
        if h.is_empty() {
            return Err(Error::param("holdout split is empty"));
        }
    }
    let fitted = fit_pipeline(dataset, config)?;
    let mut warnings = fitted.warnings.clone();

    let (eval_ds, eval_reduced, eval_assignment) = match holdout {
        None => (dataset, fitted.train_reduced.clone(), fitted.train_assignment.clone()),
        Some(h) => {
            let (reduced, assignment) = fitted.project(h, config.normalize)?;
            (h, reduced, assignment)
        }
    };

    let reference = config.reference.resolve(eval_ds.labels())?;
    let profile_set = cluster_profiles(&eval_assignment, eval_ds.labels(), config.k, &reference)?;
    warnings.extend(profile_set.warnings());
    let peco = peco_curve(&profile_set.profiles, config.grid_step, config.weighting())?;

    let three_way = majority_accuracy(&fitted, dataset, holdout, config)?;
    let mut pairs = BTreeMap::new();
    if config.pairwise {
        for pair in LABEL_PAIRS {
            let value = match pairwise_pseudo_accuracy(dataset, pair, config, holdout) {
                Ok(acc) => Some(acc),
                Err(e) => {
                    warnings.push(format!("pairwise {} skipped: {e}", pair_key(pair)));
                    None
                }
            };
            pairs.insert(pair_key(pair), value);
        }
    }
    let available: Vec<f64> = pairs.values().flatten().copied().collect();
    let pairs_mean = (!available.is_empty()).then(|| available.iter().sum::<f64>() / available.len() as f64);

    let points = match &config.tsne {
        None => None,
        Some(settings) => {
            let input = match settings.input {
                TsneInput::Pca => eval_reduced.clone(),
                TsneInput::Raw => prepare_vectors(eval_ds, config.normalize)?,
            };
            let mut params = settings.params.clone();
            let n = input.nrows();
            if n < 4 {
                return Err(Error::param(format!("t-SNE needs at least 4 points, got {n}")));
            }
            let max_perplexity = (n - 1) as f64 / 3.0;
            if params.perplexity > max_perplexity {
                warnings.push(format!(
                    "t-SNE perplexity clamped from {} to {max_perplexity:.3} (n={n})",
                    params.perplexity
                ));
                params.perplexity = max_perplexity;
            }
            let result = tsne(input.view(), &params)?;
            Some(projected_points(
                &result.embedding,
                eval_ds.labels(),
                &eval_assignment,
                &profile_set.profiles,
                config.threshold,
            )?)
        }
    };

    let report = AnalysisReport {
        format_version: REPORT_FORMAT_VERSION,
        dataset: eval_ds.name().to_owned(),
        split: eval_ds.split().to_owned(),
        n: eval_ds.len(),
        dim: eval_ds.dim(),
        k: config.k,
        metric: config.metric,
        reference_mode: config.reference,
        reference,
        pca: PcaSummary {
            n_components: fitted.pca.n_components(),
            explained_variance: fitted.pca.explained_variance().to_vec(),
        },
        clustering: ClusteringSummary {
            inertia: fitted.clusters.inertia(),
            iterations_run: fitted.clusters.iterations_run(),
            converged: fitted.clusters.converged(),
        },
        profiles: profile_set.profiles,
        peco,
        pseudoclassification: PseudoclassificationReport {
            three_way,
            pairs,
            pairs_mean,
            baseline: Baselines { three_way: THREE_WAY_BASELINE, pair: PAIR_BASELINE },
            evaluation: if holdout.is_some() { "holdout" } else { "train" }.to_owned(),
        },
        warnings,
        config: config.clone(),
    };
    Ok(Analysis { report, pca: fitted.pca, clusters: fitted.clusters, points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub dataset: String,
    pub source: Option<PathBuf>,
    pub n: usize,
    pub k: usize,
    pub auc: f64,
    pub three_way_accuracy: f64,
    pub outlier_counts: Vec<usize>,
    pub heights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub format_version: u32,
    pub grid_step: f64,
    pub thresholds: Vec<f64>,
    /// Sorted by AUC, most biased first.
    pub ranking: Vec<ComparisonEntry>,
    pub warnings: Vec<String>,
    pub config: RunConfig,
}

/// Analyze several datasets on a shared threshold grid. Datasets run
/// concurrently; results keep input order until the final ranking sort.
pub fn compare(datasets: &[EmbeddingDataset], config: &RunConfig) -> Result<(ComparisonReport, Vec<Analysis>)> {
    if datasets.len() < 2 {
        return Err(Error::param(format!("comparison needs at least 2 datasets, got {}", datasets.len())));
    }
    // t-SNE output paths are per-analysis; comparisons never draw maps.
    let per_dataset = RunConfig { tsne: None, holdout: None, ..config.clone() };
    let results: Vec<Result<Analysis>> = std::thread::scope(|scope| {
        let handles: Vec<_> = datasets
            .iter()
            .map(|ds| {
                let cfg = &per_dataset;
                scope.spawn(move || analyze(ds, None, cfg))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("analysis thread panicked")).collect()
    });
    let analyses = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut names: Vec<String> = Vec::new();
    let mut warnings = Vec::new();
    let mut ranking = Vec::new();
    for (i, analysis) in analyses.iter().enumerate() {
        let base = analysis.report.dataset.clone();
        let mut name = if base.is_empty() { format!("dataset{}", i + 1) } else { base };
        if names.contains(&name) {
            name = format!("{name}#{}", i + 1);
        }
        names.push(name.clone());
        warnings.extend(analysis.report.warnings.iter().map(|w| format!("{name}: {w}")));
        let peco = &analysis.report.peco;
        ranking.push(ComparisonEntry {
            dataset: name,
            source: config.inputs.get(i).cloned(),
            n: analysis.report.n,
            k: analysis.report.k,
            auc: peco.auc,
            three_way_accuracy: analysis.report.pseudoclassification.three_way,
            outlier_counts: peco.outlier_counts.clone(),
            heights: peco.heights.clone(),
        });
    }
    ranking.sort_by(|a, b| b.auc.total_cmp(&a.auc));
    let report = ComparisonReport {
        format_version: REPORT_FORMAT_VERSION,
        grid_step: config.grid_step,
        thresholds: analyses[0].report.peco.thresholds.clone(),
        ranking,
        warnings,
        config: config.clone(),
    };
    Ok((report, analyses))
}

/// Overlay CSV: one row per threshold, one column per dataset (input
/// order), values are normalized curve heights.
pub fn overlay_csv(report: &ComparisonReport, input_order: &[String]) -> String {
    let mut out = String::from("threshold");
    for name in input_order {
        out.push(',');
        out.push_str(&csv_escape(name));
    }
    out.push('\n');
    let by_name: BTreeMap<&str, &ComparisonEntry> =
        report.ranking.iter().map(|e| (e.dataset.as_str(), e)).collect();
    for (i, t) in report.thresholds.iter().enumerate() {
        out.push_str(&format!("{t}"));
        for name in input_order {
            out.push(',');
            if let Some(entry) = by_name.get(name.as_str()) {
                out.push_str(&format!("{}", entry.heights[i]));
            }
        }
        out.push('\n');
    }
    out
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_owned()
    }
}
