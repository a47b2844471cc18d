//! Numeric CSV tables and self-contained SVG plots.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// A CSV with a header row and numeric cells (empty cells read as NaN).
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn parse(text: &str, source: &str) -> CliResult<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| CliError::Input(format!("{source}: empty CSV")))?;
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        if columns.iter().any(|c| c.is_empty() || c.parse::<f64>().is_ok()) {
            return Err(CliError::Input(format!("{source}: first line must be a header of column names")));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != columns.len() {
                return Err(CliError::Input(format!(
                    "{source}: row {} has {} fields, header has {}",
                    i + 2,
                    cells.len(),
                    columns.len()
                )));
            }
            let row = cells
                .iter()
                .map(|c| if c.is_empty() { Ok(f64::NAN) } else { c.parse::<f64>() })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| CliError::Input(format!("{source}: row {} is not numeric", i + 2)))?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(CliError::Input(format!("{source}: CSV has a header but no rows")));
        }
        Ok(Self { columns, rows })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.index(name).map(|j| self.rows.iter().map(|r| r[j]).collect())
    }

    /// Shortest round-trip formatting; NaN becomes an empty cell.
    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| if v.is_nan() { String::new() } else { format_cell(*v) }).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

pub fn format_cell(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Histogram series to draw; all non-bin columns when absent.
    pub columns: Option<Vec<String>>,
    pub markers: Vec<Marker>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#7f7f7f", "#9467bd", "#ff7f0e"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

/// Histogram bars (`bin_left,bin_right,<series…>`), line overlays
/// (`x,<series…>`) and vertical markers. At least one table is required.
pub fn render_svg(hist: Option<&Table>, lines: Option<&Table>, spec: &PlotSpec) -> CliResult<String> {
    if hist.is_none() && lines.is_none() {
        return Err(CliError::Input("nothing to plot: give a histogram or a line table".into()));
    }
    let mut bars: Vec<(String, Vec<(f64, f64, f64)>)> = Vec::new();
    if let Some(h) = hist {
        let (Some(l), Some(r)) = (h.index("bin_left"), h.index("bin_right")) else {
            return Err(CliError::Input("histogram table needs bin_left and bin_right columns".into()));
        };
        let names: Vec<String> = match &spec.columns {
            Some(c) => c.clone(),
            None => h.columns.iter().filter(|c| *c != "bin_left" && *c != "bin_right").cloned().collect(),
        };
        if names.is_empty() {
            return Err(CliError::Input("histogram table has no series columns".into()));
        }
        for name in names {
            let j = h.index(&name).ok_or_else(|| CliError::Input(format!("histogram has no column `{name}`")))?;
            let v = h.rows.iter().filter(|row| row[j].is_finite()).map(|row| (row[l], row[r], row[j])).collect();
            bars.push((name, v));
        }
    }
    let mut curves: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    if let Some(t) = lines {
        if t.columns.len() < 2 {
            return Err(CliError::Input("line table needs an x column and at least one series".into()));
        }
        for j in 1..t.columns.len() {
            curves.push((t.columns[j].clone(), t.rows.iter().map(|row| (row[0], row[j])).collect()));
        }
    }
    let xs = bars
        .iter()
        .flat_map(|(_, b)| b.iter().flat_map(|&(l, r, _)| [l, r]))
        .chain(curves.iter().flat_map(|(_, c)| c.iter().filter(|p| p.1.is_finite()).map(|p| p.0)))
        .chain(spec.markers.iter().map(|m| m.value))
        .filter(|x| x.is_finite());
    let (mut x0, mut x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !x0.is_finite() {
        return Err(CliError::Input("no finite values to plot".into()));
    }
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let (ymin, ymax) = bars
        .iter()
        .flat_map(|(_, b)| b.iter().map(|p| p.2))
        .chain(curves.iter().flat_map(|(_, c)| c.iter().map(|p| p.1)))
        .filter(|y| y.is_finite())
        .fold((0.0f64, 0.0f64), |(a, b), y| (a.min(y), b.max(y)));
    let pad = 0.05 * (ymax - ymin);
    let (y0, y1) = if ymax > ymin { (if ymin < 0.0 { ymin - pad } else { 0.0 }, if ymax > 0.0 { ymax + pad } else { 0.0 }) } else { (0.0, 1.0) };
    let f = Frame { x0, x1, y0, y1 };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect class="background" x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    if !spec.title.is_empty() {
        let _ = writeln!(s, r#"<text class="title" x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(&spec.title));
    }
    let (ax, ay) = (f.px(x0), f.py(0.0));
    let bottom = f.py(y0);
    let _ = writeln!(s, r#"<line class="axis" x1="{ax:.2}" y1="{ay:.2}" x2="{:.2}" y2="{ay:.2}" stroke="black"/>"#, WIDTH - RIGHT);
    let _ = writeln!(s, r#"<line class="axis" x1="{ax:.2}" y1="{bottom:.2}" x2="{ax:.2}" y2="{TOP:.2}" stroke="black"/>"#);
    for k in 0..=5 {
        let xv = x0 + (x1 - x0) * k as f64 / 5.0;
        let yv = y0 + (f.y1 - y0) * k as f64 / 5.0;
        let (px, py) = (f.px(xv), f.py(yv));
        let _ = writeln!(s, r#"<line class="tick" x1="{px:.2}" y1="{bottom:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, bottom + 5.0);
        let _ = writeln!(s, r#"<text class="tick-label" x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, bottom + 18.0, tick_label(xv));
        let _ = writeln!(s, r#"<line class="tick" x1="{:.2}" y1="{py:.2}" x2="{ax:.2}" y2="{py:.2}" stroke="black"/>"#, ax - 5.0);
        let _ = writeln!(s, r#"<text class="tick-label" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, ax - 8.0, py + 4.0, tick_label(yv));
    }
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 12.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        escape(&spec.y_label)
    );
    for (k, (_, b)) in bars.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for &(l, r, v) in b {
            let (pl, pr, pt) = (f.px(l), f.px(r), f.py(v.max(0.0)));
            let _ = writeln!(
                s,
                r#"<rect class="bar series-{k}" x="{pl:.2}" y="{pt:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.45"/>"#,
                (pr - pl).max(0.0),
                (ay - pt).max(0.0)
            );
        }
    }
    for (k, (_, c)) in curves.iter().enumerate() {
        let color = PALETTE[(k + bars.len()) % PALETTE.len()];
        for run in c.split(|p| !p.1.is_finite() || !p.0.is_finite()).filter(|r| !r.is_empty()) {
            let pts: Vec<String> = run.iter().map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
            let _ = writeln!(s, r#"<polyline class="curve series-{k}" fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#, pts.join(" "));
        }
    }
    for m in spec.markers.iter().filter(|m| m.value.is_finite()) {
        let px = f.px(m.value);
        let _ = writeln!(s, r#"<line class="marker" x1="{px:.2}" y1="{bottom:.2}" x2="{px:.2}" y2="{TOP:.2}" stroke="black" stroke-dasharray="4 3"/>"#);
        let _ = writeln!(s, r#"<text class="marker-label" x="{:.2}" y="{:.2}">{}</text>"#, px + 3.0, TOP + 12.0, escape(&m.label));
    }
    let legend = bars.iter().map(|b| &b.0).chain(curves.iter().map(|c| &c.0));
    for (k, name) in legend.enumerate() {
        let y = TOP + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text class="legend" x="{:.2}" y="{y:.2}" text-anchor="end" fill="{}">{}</text>"#,
            WIDTH - RIGHT - 4.0,
            PALETTE[k % PALETTE.len()],
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Trapezoid integral of `y(x)` over consecutive finite points.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).filter(|v| v.is_finite()).sum()
}
