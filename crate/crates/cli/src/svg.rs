//! Minimal SVG line plots.
//!
//! A plot is described by a [`PlotSpec`] naming CSV columns, and is always drawn from the CSV
//! text itself, so any figure can be regenerated from its CSV file alone.

use std::fmt::Write as _;

use anyhow::{bail, Result};

use crate::table::Table;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x: String,
    pub y: Vec<String>,
    /// Column with half-widths of error bars, aligned with a single `y` column.
    pub err: Option<String>,
    /// Column whose distinct values split rows into separate series.
    pub group: Option<String>,
    pub log_x: bool,
    pub log_y: bool,
}

impl PlotSpec {
    pub fn new(title: &str, x: &str, y: &[&str]) -> PlotSpec {
        PlotSpec {
            title: title.into(),
            x: x.into(),
            y: y.iter().map(|s| s.to_string()).collect(),
            err: None,
            group: None,
            log_x: false,
            log_y: false,
        }
    }
    pub fn err(mut self, col: &str) -> Self {
        self.err = Some(col.into());
        self
    }
    pub fn group(mut self, col: &str) -> Self {
        self.group = Some(col.into());
        self
    }
    pub fn log_x(mut self) -> Self {
        self.log_x = true;
        self
    }
    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Series {
    name: String,
    points: Vec<(f64, f64, f64)>,
}

fn extract(table: &Table, spec: &PlotSpec) -> Result<Vec<Series>> {
    if spec.y.is_empty() {
        bail!("plot needs at least one y column");
    }
    if spec.err.is_some() && spec.y.len() != 1 {
        bail!("error bars need exactly one y column");
    }
    let xs = table.floats(&spec.x)?;
    let errs = match &spec.err {
        Some(c) => table.floats(c)?,
        None => vec![0.0; xs.len()],
    };
    let groups = match &spec.group {
        Some(c) => table.strings(c)?,
        None => vec![String::new(); xs.len()],
    };
    let mut out: Vec<Series> = Vec::new();
    for y in &spec.y {
        let ys = table.floats(y)?;
        for i in 0..xs.len() {
            let name = match (&spec.group, spec.y.len()) {
                (Some(_), 1) => groups[i].clone(),
                (Some(_), _) => format!("{} {}", groups[i], y),
                (None, _) => y.clone(),
            };
            let pos = match out.iter().position(|s| s.name == name) {
                Some(p) => p,
                None => {
                    out.push(Series { name, points: Vec::new() });
                    out.len() - 1
                }
            };
            out[pos].points.push((xs[i], ys[i], errs[i]));
        }
    }
    Ok(out)
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let vals: Vec<f64> = values.filter(|v| v.is_finite() && (!log || *v > 0.0)).map(|v| if log { v.log10() } else { v }).collect();
        let (mut lo, mut hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        if hi - lo < 1e-12 {
            let pad = if lo.abs() > 0.0 { lo.abs() * 0.1 } else { 1.0 };
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi, log }
    }

    fn map(&self, v: f64, a: f64, b: f64) -> Option<f64> {
        let t = if self.log {
            if v <= 0.0 {
                return None;
            }
            v.log10()
        } else {
            v
        };
        t.is_finite().then(|| a + (t - self.lo) / (self.hi - self.lo) * (b - a))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        (0..=4)
            .map(|k| {
                let t = self.lo + (self.hi - self.lo) * k as f64 / 4.0;
                let v = if self.log { 10f64.powf(t) } else { t };
                (v, label(v))
            })
            .collect()
    }
}

fn label(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Draws a plot from CSV text.
pub fn plot_csv(csv_text: &str, spec: &PlotSpec) -> Result<String> {
    let table = Table::from_csv(csv_text)?;
    let series = extract(&table, spec)?;
    let xa = Axis::fit(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)), spec.log_x);
    let ya = Axis::fit(
        series.iter().flat_map(|s| s.points.iter().flat_map(|p| [p.1 - p.2, p.1 + p.2])),
        spec.log_y,
    );
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#, (x0 + x1) / 2.0, esc(&spec.title));
    let _ = writeln!(s, r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" stroke="black" fill="none"/>"#);
    for (v, l) in xa.ticks() {
        if let Some(px) = xa.map(v, x0, x1) {
            let _ = writeln!(s, r#"<line x1="{px:.1}" y1="{y0:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/>"#, y0 + 5.0);
            let _ = writeln!(s, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{l}</text>"#, y0 + 18.0);
        }
    }
    for (v, l) in ya.ticks() {
        if let Some(py) = ya.map(v, y0, y1) {
            let _ = writeln!(s, r#"<line x1="{:.1}" y1="{py:.1}" x2="{x0:.1}" y2="{py:.1}" stroke="black"/>"#, x0 - 5.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{l}</text>"#, x0 - 8.0, py + 4.0);
        }
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 12.0, esc(&spec.x));
    let ylab = esc(&spec.y.join(", "));
    let _ = writeln!(s, r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{ylab}</text>"#, (y0 + y1) / 2.0, (y0 + y1) / 2.0);
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter_map(|&(x, y, _)| Some(format!("{:.2},{:.2}", xa.map(x, x0, x1)?, ya.map(y, y0, y1)?)))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(s, r#"<polyline points="{}" stroke="{color}" stroke-width="1.5" fill="none"/>"#, pts.join(" "));
        }
        for &(x, y, e) in &ser.points {
            let (Some(px), Some(py)) = (xa.map(x, x0, x1), ya.map(y, y0, y1)) else { continue };
            let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="{color}"/>"#);
            if e > 0.0 {
                if let (Some(lo), Some(hi)) = (ya.map(y - e, y0, y1), ya.map(y + e, y0, y1)) {
                    let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{lo:.2}" x2="{px:.2}" y2="{hi:.2}" stroke="{color}"/>"#);
                }
            }
        }
        let ly = TOP + 14.0 * k as f64 + 6.0;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 22.0, ly + 4.0, esc(&ser.name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "n,method,err,se\n50,kernel,0.4,0.01\n50,net,0.3,0.02\n100,kernel,0.35,0\n100,net,0.1,0.01\n";

    #[test]
    fn groups_become_series() {
        let svg = plot_csv(CSV, &PlotSpec::new("gap", "n", &["err"]).err("se").group("method")).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">kernel<") && svg.contains(">net<"));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn deterministic_and_tolerant_of_degenerate_ranges() {
        let spec = PlotSpec::new("t", "n", &["err"]).log_x();
        assert_eq!(plot_csv(CSV, &spec).unwrap(), plot_csv(CSV, &spec).unwrap());
        let flat = "x,y\n1,2\n";
        assert!(plot_csv(flat, &PlotSpec::new("t", "x", &["y"])).unwrap().contains("<circle"));
        assert!(plot_csv(flat, &PlotSpec::new("t", "x", &["nope"])).is_err());
    }

    #[test]
    fn titles_are_escaped() {
        let svg = plot_csv("x,y\n1,2\n", &PlotSpec::new("a<b & c", "x", &["y"])).unwrap();
        assert!(svg.contains("a&lt;b &amp; c"));
    }
}
