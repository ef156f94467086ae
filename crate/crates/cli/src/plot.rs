//! Minimal SVG line and scatter plots.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliResult, Context};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub markers: bool,
}

impl Series {
    pub fn line(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            points,
            markers: false,
        }
    }

    pub fn with_markers(mut self) -> Self {
        self.markers = true;
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            if !v.is_finite() || (log && v <= 0.0) {
                continue;
            }
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = if lo.abs() > 1e-12 { 0.1 * lo.abs() } else { 1.0 };
            lo -= pad;
            hi += pad;
        } else if !log {
            let pad = 0.04 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi, log }
    }

    fn frac(&self, v: f64) -> Option<f64> {
        let v = if self.log {
            if v <= 0.0 {
                return None;
            }
            v.log10()
        } else {
            v
        };
        v.is_finite().then(|| (v - self.lo) / (self.hi - self.lo))
    }

    /// Tick positions in data units.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            if b - a >= 1 {
                let step = ((b - a) as f64 / 6.0).ceil().max(1.0) as i32;
                return (a..=b).step_by(step as usize).map(|e| 10f64.powi(e)).collect();
            }
            return linear_ticks(self.lo, self.hi).into_iter().map(|e| 10f64.powf(e)).collect();
        }
        linear_ticks(self.lo, self.hi)
    }
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.0e}")
    } else if a >= 100.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
}

/// Frame, ticks and labels for a panel at `(x0, y0)` of size `w × h`.
#[allow(clippy::too_many_arguments)]
fn frame(out: &mut String, x0: f64, y0: f64, w: f64, h: f64, xa: &Axis, ya: &Axis, labels: [&str; 3]) {
    let [title, x_label, y_label] = labels;
    let _ = writeln!(
        out,
        r#"<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="black"/>"#
    );
    for t in xa.ticks() {
        if let Some(f) = xa.frac(t) {
            let x = x0 + f * w;
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                y0 + h,
                y0 + h + 16.0,
                fmt_tick(t)
            );
        }
    }
    for t in ya.ticks() {
        if let Some(f) = ya.frac(t) {
            let y = y0 + h - f * h;
            let _ = writeln!(
                out,
                r##"<line x1="{x0}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                x0 + w,
                x0 - 6.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"#,
        x0 + w / 2.0,
        y0 - 14.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        x0 + w / 2.0,
        y0 + h + 38.0,
        escape(x_label)
    );
    let (yx, yy) = (x0 - 58.0, y0 + h / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{yx:.2}" y="{yy:.2}" text-anchor="middle" transform="rotate(-90 {yx:.2} {yy:.2})">{}</text>"#,
        escape(y_label)
    );
}

impl LinePlot {
    pub fn to_svg(&self) -> String {
        let mut out = String::new();
        header(&mut out, WIDTH, HEIGHT);
        let pts = || self.series.iter().flat_map(|s| s.points.iter());
        let xa = Axis::fit(pts().map(|p| p.0), self.log_x);
        let ya = Axis::fit(pts().map(|p| p.1), self.log_y);
        let (w, h) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        frame(
            &mut out,
            LEFT,
            TOP,
            w,
            h,
            &xa,
            &ya,
            [&self.title, &self.x_label, &self.y_label],
        );
        for (i, s) in self.series.iter().enumerate() {
            let c = color(i);
            let coords: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter_map(|&(x, y)| {
                    let (fx, fy) = (xa.frac(x)?, ya.frac(y)?);
                    Some((LEFT + fx * w, TOP + h - fy * h))
                })
                .collect();
            if coords.len() > 1 {
                let path: Vec<String> = coords.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{c}" stroke-width="1.6" points="{}"/>"#,
                    path.join(" ")
                );
            }
            if s.markers || coords.len() == 1 {
                for (x, y) in &coords {
                    let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{c}"/>"#);
                }
            }
            let ly = TOP + 10.0 + 18.0 * i as f64;
            let lx = LEFT + w + 12.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 20.0,
                lx + 26.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_svg()).stage(format!("writing {}", path.display()))
    }
}

/// Points colored by an integer class, one panel per entry.
#[derive(Debug, Clone, Default)]
pub struct ScatterPlot {
    pub title: String,
    pub panels: Vec<(String, Vec<(f64, f64, usize)>)>,
}

impl ScatterPlot {
    pub fn to_svg(&self) -> String {
        let side = 300.0;
        let gap = 90.0;
        let n = self.panels.len().max(1) as f64;
        let width = LEFT + n * side + (n - 1.0) * gap + 30.0;
        let height = side + TOP + BOTTOM + 30.0;
        let mut out = String::new();
        header(&mut out, width, height);
        let all = || self.panels.iter().flat_map(|p| p.1.iter());
        let xa = Axis::fit(all().map(|p| p.0), false);
        let ya = Axis::fit(all().map(|p| p.1), false);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="15">{}</text>"#,
            width / 2.0,
            escape(&self.title)
        );
        for (j, (name, pts)) in self.panels.iter().enumerate() {
            let x0 = LEFT + j as f64 * (side + gap);
            let y0 = TOP + 20.0;
            frame(&mut out, x0, y0, side, side, &xa, &ya, [name, "x1", "x2"]);
            for &(x, y, c) in pts {
                if let (Some(fx), Some(fy)) = (xa.frac(x), ya.frac(y)) {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{}" fill-opacity="0.7"/>"#,
                        x0 + fx * side,
                        y0 + side - fy * side,
                        color(c)
                    );
                }
            }
        }
        out.push_str("</svg>\n");
        out
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_svg()).stage(format!("writing {}", path.display()))
    }
}
