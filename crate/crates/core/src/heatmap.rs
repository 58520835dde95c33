//! Fixation heatmaps over a screen-proportioned grid.
//!
//! Text grid format:
//!
//! ```text
//! heatmap v1 <width_cells> <height_cells> <screen_w> <screen_h> <weighting>
//! <row 0: width_cells space-separated values>
//! ...
//! <row height_cells-1>
//! ```
//!
//! Row 0 is the top of the screen. Values use Rust's shortest round-trip
//! float formatting, so a grid parses back bit-identical.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{EventKind, GazeEvent};
use crate::ingest::ActivityId;
use crate::stats::sum::neumaier_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Each fixation adds its duration in ms.
    #[default]
    Duration,
    /// Each fixation adds 1.
    Count,
}

impl Weighting {
    pub fn as_str(self) -> &'static str {
        match self {
            Weighting::Duration => "duration",
            Weighting::Count => "count",
        }
    }
}

impl FromStr for Weighting {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "duration" => Ok(Weighting::Duration),
            "count" => Ok(Weighting::Count),
            other => Err(format!("unknown weighting {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub screen_w: f64,
    pub screen_h: f64,
    pub width_cells: usize,
    pub height_cells: usize,
    pub weighting: Weighting,
    /// Smoothing kernel width in cells; 0 disables smoothing.
    pub sigma_cells: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            screen_w: 1920.0,
            screen_h: 1080.0,
            width_cells: 96,
            height_cells: 54,
            weighting: Weighting::Duration,
            sigma_cells: 1.5,
        }
    }
}

impl GridConfig {
    fn validate(&self) -> Result<()> {
        if self.width_cells == 0 || self.height_cells == 0 {
            return Err(Error::Config("heatmap grid has zero cells".into()));
        }
        if !(self.screen_w > 0.0 && self.screen_h > 0.0 && self.screen_w.is_finite() && self.screen_h.is_finite()) {
            return Err(Error::Config(format!(
                "heatmap screen {}x{} has zero area",
                self.screen_w, self.screen_h
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub participant_id: String,
    /// `None` covers every fixation regardless of activity.
    pub activity: Option<ActivityId>,
    pub width_cells: usize,
    pub height_cells: usize,
    pub screen_w: f64,
    pub screen_h: f64,
    pub weighting: Weighting,
    /// Row-major, `height_cells * width_cells`.
    pub cells: Vec<f64>,
    pub total_mass: f64,
    /// Fixations whose centroid fell off screen and were clipped to the border.
    pub clipped: usize,
}

impl HeatmapGrid {
    pub fn empty(participant_id: &str, activity: Option<ActivityId>, config: &GridConfig) -> Result<Self> {
        config.validate()?;
        Ok(HeatmapGrid {
            participant_id: participant_id.to_string(),
            activity,
            width_cells: config.width_cells,
            height_cells: config.height_cells,
            screen_w: config.screen_w,
            screen_h: config.screen_h,
            weighting: config.weighting,
            cells: vec![0.0; config.width_cells * config.height_cells],
            total_mass: 0.0,
            clipped: 0,
        })
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.cells[row * self.width_cells + col]
    }

    pub fn cell_sum(&self) -> f64 {
        neumaier_sum(self.cells.iter().copied())
    }

    /// (col, row) of the largest cell; first in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.cells.iter().enumerate() {
            if v > self.cells[best] {
                best = i;
            }
        }
        (best % self.width_cells, best / self.width_cells)
    }

    /// Cell containing a screen point, clipped to the border. The flag is
    /// set when clipping happened.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize, bool) {
        let fx = (x / self.screen_w * self.width_cells as f64).floor();
        let fy = (y / self.screen_h * self.height_cells as f64).floor();
        let clamp = |f: f64, n: usize| -> (usize, bool) {
            if f.is_nan() || f < 0.0 {
                (0, true)
            } else if f >= n as f64 {
                (n - 1, true)
            } else {
                (f as usize, false)
            }
        };
        let (c, cx) = clamp(fx, self.width_cells);
        let (r, cy) = clamp(fy, self.height_cells);
        (c, r, cx || cy)
    }
}

/// Add each fixation's weight to the cell containing its centroid.
///
/// Only fixations are used. With `activity` set, fixations tagged with a
/// different activity (or untagged) are skipped.
pub fn accumulate(
    participant_id: &str,
    events: &[GazeEvent],
    activity: Option<&ActivityId>,
    config: &GridConfig,
) -> Result<HeatmapGrid> {
    let mut grid = HeatmapGrid::empty(participant_id, activity.cloned(), config)?;
    let mut weights = Vec::new();
    for e in events {
        if e.kind != EventKind::Fixation {
            continue;
        }
        if activity.is_some() && e.activity.as_ref() != activity {
            continue;
        }
        let (c, r, clipped) = grid.cell_of(e.centroid.x, e.centroid.y);
        if clipped {
            grid.clipped += 1;
        }
        let w = match config.weighting {
            Weighting::Duration => e.duration as f64,
            Weighting::Count => 1.0,
        };
        grid.cells[r * grid.width_cells + c] += w;
        weights.push(w);
    }
    grid.total_mass = neumaier_sum(weights);
    Ok(grid)
}

/// Normalized Gaussian weights from `src` to every in-range target in
/// `0..n`, truncated at 4 sigma. Returned as (first target, weights).
fn scatter_kernel(src: usize, n: usize, sigma: f64) -> (usize, Vec<f64>) {
    let radius = (4.0 * sigma).ceil() as usize;
    let lo = src.saturating_sub(radius);
    let hi = (src + radius).min(n - 1);
    let mut w: Vec<f64> = (lo..=hi)
        .map(|t| {
            let d = t as f64 - src as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let total = neumaier_sum(w.iter().copied());
    for v in &mut w {
        *v /= total;
    }
    (lo, w)
}

/// One pass along an axis. Each source cell spreads its mass over the
/// targets inside the grid, so every pass conserves the sum.
fn smooth_axis(cells: &[f64], w: usize, h: usize, sigma: f64, horizontal: bool) -> Vec<f64> {
    let n = if horizontal { w } else { h };
    let kernels: Vec<(usize, Vec<f64>)> = (0..n).map(|i| scatter_kernel(i, n, sigma)).collect();
    let mut out = vec![0.0; cells.len()];
    for r in 0..h {
        for c in 0..w {
            let v = cells[r * w + c];
            if v == 0.0 {
                continue;
            }
            let (lo, ref k) = kernels[if horizontal { c } else { r }];
            for (j, kw) in k.iter().enumerate() {
                let t = lo + j;
                let idx = if horizontal { r * w + t } else { t * w + c };
                out[idx] += v * kw;
            }
        }
    }
    out
}

/// Separable Gaussian smoothing that conserves the total mass.
pub fn smooth(grid: &HeatmapGrid, sigma_cells: f64) -> Result<HeatmapGrid> {
    if !(sigma_cells.is_finite() && sigma_cells >= 0.0) {
        return Err(Error::Domain(format!("smoothing sigma {sigma_cells} must be finite and >= 0")));
    }
    if sigma_cells == 0.0 {
        return Ok(grid.clone());
    }
    let (w, h) = (grid.width_cells, grid.height_cells);
    let pass = smooth_axis(&grid.cells, w, h, sigma_cells, true);
    let cells = smooth_axis(&pass, w, h, sigma_cells, false);
    Ok(HeatmapGrid { cells, ..grid.clone() })
}

/// Scale cells to [0, 1] by the maximum. An all-zero grid stays zero.
pub fn normalize_for_display(grid: &HeatmapGrid) -> HeatmapGrid {
    let max = grid.cells.iter().copied().fold(0.0f64, f64::max);
    let cells = if max > 0.0 {
        grid.cells.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; grid.cells.len()]
    };
    HeatmapGrid { cells, ..grid.clone() }
}

pub fn write_grid<W: Write>(grid: &HeatmapGrid, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "heatmap v1 {} {} {} {} {}",
        grid.width_cells,
        grid.height_cells,
        grid.screen_w,
        grid.screen_h,
        grid.weighting.as_str()
    )?;
    for row in grid.cells.chunks(grid.width_cells) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn grid_string(grid: &HeatmapGrid) -> String {
    let mut buf = Vec::new();
    write_grid(grid, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("grid text is ASCII")
}

/// Parse the text grid format. Participant, activity and clip count are not
/// part of the format and come back empty; `total_mass` is the cell sum.
pub fn read_grid(text: &str) -> Result<HeatmapGrid> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let fmt_err = |line: usize, message: String| Error::Format { line: line as u64 + 1, message };
    let (ln, header) = lines.next().ok_or_else(|| fmt_err(0, "empty heatmap".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 7 || parts[0] != "heatmap" || parts[1] != "v1" {
        return Err(fmt_err(ln, format!("bad heatmap header {header:?}")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| fmt_err(ln, format!("{s:?}: {e}")));
    let int = |s: &str| s.parse::<usize>().map_err(|e| fmt_err(ln, format!("{s:?}: {e}")));
    let config = GridConfig {
        width_cells: int(parts[2])?,
        height_cells: int(parts[3])?,
        screen_w: num(parts[4])?,
        screen_h: num(parts[5])?,
        weighting: parts[6].parse().map_err(|e| fmt_err(ln, e))?,
        sigma_cells: 0.0,
    };
    let mut grid = HeatmapGrid::empty("", None, &config)?;
    let mut rows = 0;
    for (ln, line) in lines {
        if rows == grid.height_cells {
            return Err(fmt_err(ln, "more rows than the header declares".into()));
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| fmt_err(ln, format!("{s:?}: {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() != grid.width_cells {
            return Err(fmt_err(ln, format!("expected {} values, found {}", grid.width_cells, vals.len())));
        }
        grid.cells[rows * grid.width_cells..(rows + 1) * grid.width_cells].copy_from_slice(&vals);
        rows += 1;
    }
    if rows != grid.height_cells {
        return Err(Error::Format {
            line: 0,
            message: format!("expected {} rows, found {rows}", grid.height_cells),
        });
    }
    grid.total_mass = grid.cell_sum();
    Ok(grid)
}

/// Binary 8-bit grayscale PGM (P5), brightest at the maximum cell.
pub fn write_pgm<W: Write>(grid: &HeatmapGrid, mut out: W) -> std::io::Result<()> {
    let norm = normalize_for_display(grid);
    write!(out, "P5\n{} {}\n255\n", grid.width_cells, grid.height_cells)?;
    let bytes: Vec<u8> = norm.cells.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    out.write_all(&bytes)
}
