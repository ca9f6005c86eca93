//! Static SVG figures: loss curves, cosine histogram and APS overlays.

use std::path::Path;

use plotters::prelude::*;
use vichan_core::metrics::CosineSummary;

use crate::error::{HarnessError, Result};
use crate::eval::PredictionRow;
use crate::train::EpochRecord;

const SIZE: (u32, u32) = (800, 500);
const PALETTE: [RGBColor; 4] = [RGBColor(31, 119, 180), RGBColor(214, 39, 40), RGBColor(44, 160, 44), RGBColor(148, 103, 189)];

fn err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Plot(e.to_string())
}

fn prepare(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e)),
        None => Ok(()),
    }
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

/// Training (solid) and validation (thin) loss per epoch for each series.
pub fn curves_plot(path: &Path, series: &[(&str, &[EpochRecord])]) -> Result<()> {
    prepare(path)?;
    let max_epoch = series.iter().flat_map(|(_, r)| r.iter().map(|e| e.epoch)).max().unwrap_or(1).max(2);
    let (lo, hi) = span(series.iter().flat_map(|(_, r)| r.iter().flat_map(|e| [e.train_loss, e.val_loss])));
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Loss per epoch", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(64)
        .build_cartesian_2d(1f64..max_epoch as f64, lo..hi)
        .map_err(err)?;
    chart.configure_mesh().x_desc("epoch").y_desc("loss").draw().map_err(err)?;
    for (k, (name, recs)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(recs.iter().map(|e| (e.epoch as f64, e.train_loss)), color.stroke_width(2)))
            .map_err(err)?
            .label(format!("{name} train"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart
            .draw_series(LineSeries::new(recs.iter().map(|e| (e.epoch as f64, e.val_loss)), color.stroke_width(1)))
            .map_err(err)?
            .label(format!("{name} val"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(1)));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(err)?;
    root.present().map_err(err)
}

/// Per-sample cosine similarity counts over the summary's bins.
pub fn cosine_histogram(path: &Path, summary: &CosineSummary) -> Result<()> {
    prepare(path)?;
    let bins = summary.histogram.len();
    let width = 2.0 / bins as f64;
    let top = summary.histogram.iter().copied().max().unwrap_or(1).max(1) as f64 * 1.1;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("Cosine similarity (mean {:.4}, median {:.4})", summary.mean, summary.median), ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(-1f64..1f64, 0f64..top)
        .map_err(err)?;
    chart.configure_mesh().x_desc("cosine similarity").y_desc("samples").draw().map_err(err)?;
    chart
        .draw_series(summary.histogram.iter().enumerate().map(|(k, &c)| {
            let x0 = -1.0 + k as f64 * width;
            Rectangle::new([(x0, 0.0), (x0 + width, c as f64)], PALETTE[0].filled())
        }))
        .map_err(err)?;
    root.present().map_err(err)
}

/// Target against predicted APS over azimuth for one sample.
pub fn aps_overlay(path: &Path, row: &PredictionRow, cosine: f64) -> Result<()> {
    prepare(path)?;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{} (cosine {cosine:.4})", row.snapshot_id), ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(0f64..row.target.len() as f64, 0f64..1.05f64)
        .map_err(err)?;
    chart.configure_mesh().x_desc("azimuth (deg)").y_desc("normalised power").draw().map_err(err)?;
    for (k, (name, values)) in [("target", &row.target), ("prediction", &row.prediction)].into_iter().enumerate() {
        let color = PALETTE[k];
        chart
            .draw_series(LineSeries::new(values.iter().enumerate().map(|(i, &v)| (i as f64, v)), color.stroke_width(2)))
            .map_err(err)?
            .label(name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(err)?;
    root.present().map_err(err)
}
