//! Bias-map output: CSV rows or a static SVG scatter plot.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bias::ClusterBiasProfile;
use crate::clusterer::Assignment;
use crate::dataset::Label;
use crate::error::{Error, Result};

pub const DEFAULT_MARK_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
    pub label: Label,
    pub cluster_id: usize,
    pub high_bias: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotFormat {
    Csv,
    Svg,
}

/// Attach labels, clusters and bias marks to 2-D coordinates. A point is
/// high-bias when its cluster's `d` is at least `threshold`.
pub fn projected_points(
    coords: &ndarray::Array2<f64>,
    labels: &[Label],
    assignment: &Assignment,
    profiles: &[ClusterBiasProfile],
    threshold: f64,
) -> Result<Vec<ProjectedPoint>> {
    if coords.ncols() != 2 || coords.nrows() != labels.len() || labels.len() != assignment.len() {
        return Err(Error::param(format!(
            "{}x{} coordinates for {} labels and {} assignments",
            coords.nrows(),
            coords.ncols(),
            labels.len(),
            assignment.len()
        )));
    }
    let max_id = profiles.iter().map(|p| p.cluster_id + 1).max().unwrap_or(0);
    let mut d_of = vec![None; max_id];
    for p in profiles {
        d_of[p.cluster_id] = Some(p.d);
    }
    coords
        .rows()
        .into_iter()
        .zip(labels)
        .zip(assignment.cluster_of())
        .map(|((row, &label), &cluster_id)| {
            let d = d_of
                .get(cluster_id)
                .copied()
                .flatten()
                .ok_or_else(|| Error::param(format!("no profile for cluster {cluster_id}")))?;
            if !(row[0].is_finite() && row[1].is_finite()) {
                return Err(Error::Numerical("projected coordinates are not finite".into()));
            }
            Ok(ProjectedPoint { x: row[0], y: row[1], label, cluster_id, high_bias: d >= threshold })
        })
        .collect()
}

fn label_color(label: Label) -> &'static str {
    match label {
        Label::Entailment => "#2ca02c",
        Label::Contradiction => "#d62728",
        Label::Neutral => "#000000",
    }
}

/// Write the points as CSV (`x,y,label,cluster_id,high_bias`) or SVG.
/// Returns the number of bytes written.
pub fn emit_plot<W: Write>(points: &[ProjectedPoint], mut sink: W, format: PlotFormat, threshold: f64) -> Result<u64> {
    let body = match format {
        PlotFormat::Csv => render_csv(points),
        PlotFormat::Svg => render_svg(points, threshold),
    };
    sink.write_all(body.as_bytes())?;
    sink.flush()?;
    Ok(body.len() as u64)
}

fn render_csv(points: &[ProjectedPoint]) -> String {
    let mut out = String::from("x,y,label,cluster_id,high_bias\n");
    for p in points {
        out.push_str(&format!("{},{},{},{},{}\n", p.x, p.y, p.label.code(), p.cluster_id, p.high_bias));
    }
    out
}

fn render_svg(points: &[ProjectedPoint], threshold: f64) -> String {
    const SIZE: f64 = 800.0;
    const MARGIN: f64 = 40.0;
    let mut out = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">X: cluster d &#8805; {threshold}; dot: d &lt; {threshold}</text>\n"
    );
    if !points.is_empty() {
        let (min_x, max_x) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.x), hi.max(p.x)));
        let (min_y, max_y) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
        let span = (max_x - min_x).max(max_y - min_y).max(1e-12);
        let scale = (SIZE - 2.0 * MARGIN) / span;
        let px = |x: f64| MARGIN + (x - min_x) * scale;
        let py = |y: f64| SIZE - MARGIN - (y - min_y) * scale;

        // Low-bias dots first so X markers stay visible on top.
        for p in points.iter().filter(|p| !p.high_bias) {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.5\" fill=\"{}\"/>\n",
                px(p.x),
                py(p.y),
                label_color(p.label)
            ));
        }
        for p in points.iter().filter(|p| p.high_bias) {
            let (cx, cy, r) = (px(p.x), py(p.y), 4.0);
            out.push_str(&format!(
                "<path d=\"M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
                cx - r,
                cy - r,
                cx + r,
                cy + r,
                cx - r,
                cy + r,
                cx + r,
                cy - r,
                label_color(p.label)
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}
