//! 2-D bias maps: t-SNE projection plus per-point bias marking.

mod plot;
mod tsne;

pub use plot::{emit_plot, projected_points, PlotFormat, ProjectedPoint, DEFAULT_MARK_THRESHOLD};
pub use tsne::{tsne, TsneMethod, TsneParams, TsneResult, EXACT_MAX_N};
