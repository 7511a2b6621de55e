//! Gaussian kernel density curves and density-normalised histograms of
//! per-class scores on [0, 1].
//!
//! Kernel mass that falls outside [0, 1] is not reflected back. Instead each
//! curve is divided by its trapezoid integral over the grid, so every
//! reported density integrates to one on the grid.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

pub const GRID_POINTS: usize = 512;
pub const HISTOGRAM_BINS: usize = 40;
pub const DENSITY_CSV_HEADER: [&str; 3] = ["grid", "not_hateful", "hateful"];
pub const HISTOGRAM_CSV_HEADER: [&str; 4] = ["bin_lo", "bin_hi", "not_hateful", "hateful"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCurve {
    pub label: Label,
    pub n: usize,
    pub bandwidth: f64,
    /// Density at each grid point.
    pub density: Vec<f64>,
    pub histogram_counts: Vec<usize>,
    /// `count / (n_in_range * bin_width)`.
    pub histogram_density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurves {
    pub grid: Vec<f64>,
    pub bin_edges: Vec<f64>,
    pub not_hateful: ClassCurve,
    pub hateful: ClassCurve,
}

#[derive(Serialize)]
struct ClassSummary {
    label: Label,
    n: usize,
    bandwidth: f64,
    integral: f64,
    mode: f64,
}

impl KdeCurves {
    pub fn class(&self, label: Label) -> &ClassCurve {
        match label {
            Label::NotHateful => &self.not_hateful,
            Label::Hateful => &self.hateful,
        }
    }

    /// Density of `label` linearly interpolated at `x` in [0, 1].
    pub fn density_at(&self, label: Label, x: f64) -> f64 {
        let d = &self.class(label).density;
        let pos = (x.clamp(0.0, 1.0) * (GRID_POINTS - 1) as f64).min((GRID_POINTS - 1) as f64);
        let i = (pos.floor() as usize).min(GRID_POINTS - 2);
        let t = pos - i as f64;
        d[i] * (1.0 - t) + d[i + 1] * t
    }

    pub fn write_density_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(DENSITY_CSV_HEADER)?;
        for (i, g) in self.grid.iter().enumerate() {
            w.write_record([g, &self.not_hateful.density[i], &self.hateful.density[i]].map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn write_histogram_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(HISTOGRAM_CSV_HEADER)?;
        for b in 0..HISTOGRAM_BINS {
            w.write_record(
                [
                    self.bin_edges[b],
                    self.bin_edges[b + 1],
                    self.not_hateful.histogram_density[b],
                    self.hateful.histogram_density[b],
                ]
                .map(|v| v.to_string()),
            )?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    /// Per-class n, bandwidth, grid integral and mode.
    pub fn summary_json(&self) -> serde_json::Value {
        let summarize = |c: &ClassCurve| {
            let (imax, _) = c.density.iter().enumerate().fold(
                (0, f64::MIN),
                |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
            );
            ClassSummary {
                label: c.label,
                n: c.n,
                bandwidth: c.bandwidth,
                integral: trapezoid(&self.grid, &c.density),
                mode: self.grid[imax],
            }
        };
        serde_json::json!({
            "grid_points": GRID_POINTS,
            "histogram_bins": HISTOGRAM_BINS,
            "classes": [summarize(&self.not_hateful), summarize(&self.hateful)],
        })
    }
}

pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Scott's rule `n^(-1/5) * sigma`, with the sample standard deviation.
pub fn scott_bandwidth(scores: &[f64]) -> Result<f64> {
    let n = scores.len() as f64;
    if scores.len() < 2 {
        return Err(Error::ZeroVariance("fewer than two scores; pass an explicit bandwidth"));
    }
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(Error::ZeroVariance("all scores are equal; pass an explicit bandwidth"));
    }
    Ok(n.powf(-0.2) * var.sqrt())
}

fn grid() -> Vec<f64> {
    (0..GRID_POINTS).map(|i| i as f64 / (GRID_POINTS - 1) as f64).collect()
}

fn curve(label: Label, scores: &[f64], bandwidth: Option<f64>, grid: &[f64]) -> Result<ClassCurve> {
    if scores.is_empty() {
        return Err(Error::EmptyClass(label.as_str()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}"))),
        None => scott_bandwidth(scores)?,
    };
    let norm = 1.0 / (scores.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&x| {
            norm * scores
                .iter()
                .map(|&s| (-0.5 * ((x - s) / h).powi(2)).exp())
                .sum::<f64>()
        })
        .collect();
    let mass = trapezoid(grid, &density);
    if !(mass > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "no {label} kernel mass falls on [0, 1]; scores must be probabilities"
        )));
    }
    density.iter_mut().for_each(|d| *d /= mass);

    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for &s in scores {
        if (0.0..=1.0).contains(&s) {
            counts[((s * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)] += 1;
        }
    }
    let in_range: usize = counts.iter().sum();
    let width = 1.0 / HISTOGRAM_BINS as f64;
    let histogram_density = counts
        .iter()
        .map(|&c| {
            if in_range == 0 {
                0.0
            } else {
                c as f64 / (in_range as f64 * width)
            }
        })
        .collect();
    Ok(ClassCurve {
        label,
        n: scores.len(),
        bandwidth: h,
        density,
        histogram_counts: counts,
        histogram_density,
    })
}

/// Density curves and histograms for both classes. `bandwidth`, if given,
/// applies to both; otherwise each class uses Scott's rule.
pub fn kde_report(not_hateful: &[f64], hateful: &[f64], bandwidth: Option<f64>) -> Result<KdeCurves> {
    let grid = grid();
    let bin_edges = (0..=HISTOGRAM_BINS).map(|i| i as f64 / HISTOGRAM_BINS as f64).collect();
    Ok(KdeCurves {
        not_hateful: curve(Label::NotHateful, not_hateful, bandwidth, &grid)?,
        hateful: curve(Label::Hateful, hateful, bandwidth, &grid)?,
        grid,
        bin_edges,
    })
}
