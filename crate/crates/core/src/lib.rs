//! Label-bias auditing for sentence-pair embeddings.
//!
//! Embeddings are reduced with PCA, clustered with k-means, and each
//! cluster's label distribution is compared against a reference. Sweeping a
//! distance threshold gives the PECO curve; its area summarises how strongly
//! labels are predictable from geometry alone.

pub mod bias;
pub mod clusterer;
pub mod dataset;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod projector;
pub mod pseudo;
pub mod reducer;
pub mod rng;
pub mod synth;

pub use bias::{cluster_profiles, outlier_clusters, peco_auc, peco_curve, ClusterBiasProfile, PecoCurve, ReferenceMode, Weighting};
pub use clusterer::{fit_kmeans, Assignment, ClusterModel, KMeansParams, Metric};
pub use dataset::{EmbeddingDataset, Label, LabelDistribution};
pub use error::{Error, ErrorClass, Result};
pub use io::{read_embeddings, read_path, write_embeddings, write_path, InputFormat};
pub use pipeline::{analyze, compare, AnalysisReport, ComparisonReport, RunConfig};
pub use reducer::{fit_pca, PcaModel};
pub use synth::{generate, SynthConfig};
