//! CSV, JSON and plot writers.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use plotters::prelude::*;
use serde::Serialize;

use crate::CliError;

/// First line of every CSV; the only line that differs between identical runs.
pub const GENERATED_PREFIX: &str = "# generated: ";

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{}: {e}", path.display()))
}

/// A table written as two comment lines (timestamp, resolved config) and
/// a header row.
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path, config: &impl Serialize) -> Result<(), CliError> {
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let cfg = serde_json::to_string(config).map_err(|e| io_err(path, e))?;
        let mut buf = Vec::new();
        writeln!(buf, "{GENERATED_PREFIX}{stamp}").map_err(|e| io_err(path, e))?;
        writeln!(buf, "# config: {cfg}").map_err(|e| io_err(path, e))?;
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&self.columns).map_err(|e| io_err(path, e))?;
            for r in &self.rows {
                w.write_record(r).map_err(|e| io_err(path, e))?;
            }
            w.flush().map_err(|e| io_err(path, e))?;
        }
        std::fs::write(path, buf).map_err(|e| io_err(path, e))
    }
}

/// Shortest round-trip decimal; empty for `None`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Validation(e.to_string()))?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| io_err(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Log-log plot of `|gap|` and its standard error against ε.
pub fn plot_gaps(path: &Path, title: &str, eps: &[f64], gaps: &[f64], errs: &[f64]) -> Result<(), String> {
    let pos = |v: &[f64]| v.iter().copied().filter(|x| *x > 0.0 && x.is_finite()).collect::<Vec<_>>();
    let ys: Vec<f64> = pos(&gaps.iter().map(|g| g.abs()).chain(errs.iter().copied()).collect::<Vec<_>>());
    if eps.is_empty() || ys.is_empty() {
        return Err("nothing positive to plot".into());
    }
    let (e0, e1) = eps.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    let (y0, y1) = ys.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &y| (a.min(y), b.max(y)));
    let root = SVGBackend::new(path, (640, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| e.to_string())?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((e0 / 1.5..e1 * 1.5).log_scale(), (y0 / 2.0..y1 * 2.0).log_scale())
        .map_err(|e| e.to_string())?;
    chart.configure_mesh().x_desc("epsilon").y_desc("|gap|").draw().map_err(|e| e.to_string())?;
    let gap_pts: Vec<(f64, f64)> = eps.iter().zip(gaps).filter(|(_, g)| g.abs() > 0.0).map(|(&e, g)| (e, g.abs())).collect();
    chart
        .draw_series(LineSeries::new(gap_pts.clone(), &BLUE))
        .map_err(|e| e.to_string())?
        .label("|gap|")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE));
    chart.draw_series(gap_pts.iter().map(|&p| Circle::new(p, 3, BLUE.filled()))).map_err(|e| e.to_string())?;
    let err_pts: Vec<(f64, f64)> = eps.iter().zip(errs).filter(|(_, s)| **s > 0.0).map(|(&e, &s)| (e, s)).collect();
    chart
        .draw_series(LineSeries::new(err_pts, &RED))
        .map_err(|e| e.to_string())?
        .label("stderr")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
    chart.configure_series_labels().border_style(BLACK).draw().map_err(|e| e.to_string())?;
    root.present().map_err(|e| e.to_string())
}
