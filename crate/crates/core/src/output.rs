//! CSV, SVG and run-manifest writers.

use crate::config::ConfigFile;
use crate::geometry::{Polarization, ScanMode};
use crate::scan::{CorrelationCurve, Engine, ScanError};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub const ANALYTIC_HEADER: &str = "x_m,g2_normalized,g2_raw";
pub const MONTECARLO_HEADER: &str = "x_m,g2_normalized,stderr,n_realizations";
pub const FIGURE_HEADER: &str = "x_m,g2_normalized,stderr,n_realizations,g2_analytic";

/// Analytic curve as CSV. Numbers use Rust's shortest round-trip formatting,
/// which is locale-independent.
pub fn analytic_csv(curve: &CorrelationCurve) -> String {
    let mut out = String::with_capacity(64 * curve.points.len());
    out.push_str(ANALYTIC_HEADER);
    out.push('\n');
    for p in &curve.points {
        let raw = p.g2_raw.unwrap_or(f64::NAN);
        writeln!(out, "{},{},{}", p.x, p.g2, raw).unwrap();
    }
    out
}

pub fn montecarlo_csv(curve: &CorrelationCurve) -> String {
    let mut out = String::with_capacity(64 * curve.points.len());
    out.push_str(MONTECARLO_HEADER);
    out.push('\n');
    for p in &curve.points {
        writeln!(out, "{},{},{},{}", p.x, p.g2, p.stderr, curve.n_realizations).unwrap();
    }
    out
}

/// Monte Carlo points with the closed-form value alongside.
pub fn figure_csv(curve: &CorrelationCurve) -> String {
    let mut out = String::with_capacity(80 * curve.points.len());
    out.push_str(FIGURE_HEADER);
    out.push('\n');
    let model = curve.model.as_deref().unwrap_or(&[]);
    for (i, p) in curve.points.iter().enumerate() {
        let m = model.get(i).copied().unwrap_or(f64::NAN);
        writeln!(out, "{},{},{},{},{}", p.x, p.g2, p.stderr, curve.n_realizations, m).unwrap();
    }
    out
}

/// Read a Monte Carlo (or figure) CSV back into a curve.
pub fn read_montecarlo_csv(text: &str, mode: ScanMode, polarization: Polarization) -> Result<CorrelationCurve, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty csv")?;
    if header != MONTECARLO_HEADER && header != FIGURE_HEADER {
        return Err(format!("unexpected header {header:?}"));
    }
    let (mut xs, mut g2, mut err) = (Vec::new(), Vec::new(), Vec::new());
    let mut n_realizations = 0;
    for (line_no, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 4 {
            return Err(format!("row {}: expected at least 4 columns", line_no + 2));
        }
        let num = |i: usize| -> Result<f64, String> {
            cols[i].parse::<f64>().map_err(|e| format!("row {}: {e}", line_no + 2))
        };
        xs.push(num(0)?);
        g2.push(num(1)?);
        err.push(num(2)?);
        n_realizations = cols[3].parse().map_err(|e| format!("row {}: {e}", line_no + 2))?;
    }
    let mut curve = CorrelationCurve::from_samples(mode, polarization, &xs, &g2, &err, Engine::MonteCarlo)
        .map_err(|e: ScanError| e.to_string())?;
    curve.n_realizations = n_realizations;
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesStyle {
    Line,
    /// Markers with ±stderr error bars.
    Markers,
}

#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub label: String,
    pub style: SeriesStyle,
    pub color: &'static str,
    /// `(x in m, g2, stderr)`.
    pub points: Vec<(f64, f64, f64)>,
}

impl PlotSeries {
    pub fn line(label: &str, color: &'static str, curve: &CorrelationCurve) -> Self {
        PlotSeries {
            label: label.to_string(),
            style: SeriesStyle::Line,
            color,
            points: curve.points.iter().map(|p| (p.x, p.g2, 0.0)).collect(),
        }
    }

    pub fn markers(label: &str, color: &'static str, curve: &CorrelationCurve) -> Self {
        PlotSeries {
            label: label.to_string(),
            style: SeriesStyle::Markers,
            color,
            points: curve.points.iter().map(|p| (p.x, p.g2, p.stderr)).collect(),
        }
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// "Nice" tick step close to `range / target`.
fn tick_step(range: f64, target: f64) -> f64 {
    let raw = range / target;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

/// Line/marker plot with the scan coordinate in mm on the x axis. Each line
/// series becomes one `<polyline>`, each marker series one `<g>` group, and
/// `peaks` are drawn as dashed vertical guides.
pub fn render_svg(title: &str, series: &[PlotSeries], peaks: &[f64]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 460.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 55.0;

    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x_min, mut x_max, mut y_min, mut y_max) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y, e) in all {
        let x = x * 1e3;
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y - e);
        y_max = y_max.max(y + e);
    }
    if x_min > x_max {
        (x_min, x_max, y_min, y_max) = (-1.0, 1.0, 0.0, 2.0);
    }
    if x_max - x_min <= 0.0 {
        x_max = x_min + 1.0;
    }
    let pad = ((y_max - y_min) * 0.05).max(1e-3);
    y_min -= pad;
    y_max += pad;

    let sx = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * (W - LEFT - RIGHT);
    let sy = |y: f64| H - BOTTOM - (y - y_min) / (y_max - y_min) * (H - TOP - BOTTOM);

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    )
    .unwrap();

    // axes and ticks
    svg.push_str("<g class=\"axes\" stroke=\"black\" fill=\"none\">\n");
    writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    )
    .unwrap();
    svg.push_str("</g>\n<g class=\"ticks\" font-size=\"11\">\n");
    let xt = tick_step(x_max - x_min, 8.0);
    let mut t = (x_min / xt).ceil() * xt;
    while t <= x_max + 1e-9 * xt {
        let px = sx(t);
        writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            H - BOTTOM,
            H - BOTTOM + 5.0,
            H - BOTTOM + 18.0,
            fmt_tick(t, xt)
        )
        .unwrap();
        t += xt;
    }
    let yt = tick_step(y_max - y_min, 6.0);
    let mut t = (y_min / yt).ceil() * yt;
    while t <= y_max + 1e-9 * yt {
        let py = sy(t);
        writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            fmt_tick(t, yt)
        )
        .unwrap();
        t += yt;
    }
    svg.push_str("</g>\n");
    writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">detector position x (mm)</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 15.0
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">normalized g2</text>"#,
        (TOP + H - BOTTOM) / 2.0,
        (TOP + H - BOTTOM) / 2.0
    )
    .unwrap();

    if !peaks.is_empty() {
        svg.push_str("<g class=\"peaks\" stroke=\"#888\" stroke-dasharray=\"4 3\">\n");
        for &p in peaks {
            let px = sx(p * 1e3);
            writeln!(
                svg,
                r#"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{}"/>"#,
                H - BOTTOM
            )
            .unwrap();
        }
        svg.push_str("</g>\n");
    }

    for s in series {
        match s.style {
            SeriesStyle::Line => {
                let pts: Vec<String> = s
                    .points
                    .iter()
                    .map(|&(x, y, _)| format!("{:.2},{:.2}", sx(x * 1e3), sy(y)))
                    .collect();
                writeln!(
                    svg,
                    r#"<polyline class="curve" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                    s.color,
                    pts.join(" ")
                )
                .unwrap();
            }
            SeriesStyle::Markers => {
                writeln!(svg, r#"<g class="markers" stroke="{0}" fill="{0}">"#, s.color).unwrap();
                for &(x, y, e) in &s.points {
                    let px = sx(x * 1e3);
                    if e > 0.0 {
                        writeln!(
                            svg,
                            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}"/>"#,
                            sy(y - e),
                            sy(y + e)
                        )
                        .unwrap();
                    }
                    writeln!(svg, r#"<circle cx="{px:.2}" cy="{:.2}" r="2.5"/>"#, sy(y)).unwrap();
                }
                svg.push_str("</g>\n");
            }
        }
    }

    // legend
    svg.push_str("<g class=\"legend\">\n");
    for (i, s) in series.iter().enumerate() {
        let y = TOP + 16.0 + 16.0 * i as f64;
        let x = W - RIGHT - 200.0;
        match s.style {
            SeriesStyle::Line => writeln!(
                svg,
                r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="1.5"/>"#,
                x + 20.0,
                s.color
            ),
            SeriesStyle::Markers => writeln!(
                svg,
                r#"<circle cx="{}" cy="{y}" r="2.5" fill="{}"/>"#,
                x + 10.0,
                s.color
            ),
        }
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            x + 26.0,
            y + 4.0,
            escape(&s.label)
        )
        .unwrap();
    }
    svg.push_str("</g>\n</svg>\n");
    svg
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{:.*}", decimals, v);
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Record of one CLI invocation, written after all other outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub wall_time: f64,
    pub artifact_paths: Vec<PathBuf>,
    pub config: ConfigFile,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> io::Result<()> {
        if let Some(missing) = self.artifact_paths.iter().find(|p| !p.exists()) {
            return Err(io::Error::new(
                io::ErrorKind::NotFound,
                format!("artifact {} was not written", missing.display()),
            ));
        }
        let text = toml::to_string(self).map_err(io::Error::other)?;
        fs::write(path, text)
    }

    pub fn read(path: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(io::Error::other)
    }
}

/// `<dir>/<stem>.manifest` for an output file.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    output.with_extension("manifest")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ExperimentConfig, ScanPlan};
    use crate::scan::run_scan;

    fn curve() -> CorrelationCurve {
        let cfg = ExperimentConfig::reference();
        let plan = ScanPlan::symmetric(ScanMode::Opposite, 3e-3, 0.05e-3, 0.0).unwrap();
        run_scan(&cfg, &plan, Engine::Analytic).unwrap()
    }

    #[test]
    fn analytic_csv_layout() {
        let csv = analytic_csv(&curve());
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(ANALYTIC_HEADER));
        assert_eq!(csv.lines().count(), 122);
        assert!(csv.ends_with('\n'));
        let center = csv.lines().nth(61).unwrap();
        assert!(center.starts_with("0,2,"), "{center}");
    }

    #[test]
    fn montecarlo_csv_reads_back() {
        let mut c = curve();
        for p in &mut c.points {
            p.stderr = 0.01;
            p.source = Engine::MonteCarlo;
        }
        c.n_realizations = 1234;
        let text = montecarlo_csv(&c);
        let back = read_montecarlo_csv(&text, ScanMode::Opposite, Polarization::Parallel).unwrap();
        assert_eq!(back.values(), c.values());
        assert_eq!(back.xs(), c.xs());
        assert_eq!(back.n_realizations, 1234);
    }

    #[test]
    fn svg_is_well_formed() {
        let c = curve();
        let svg = render_svg(
            "g2 <test> & more",
            &[
                PlotSeries::line("analytic", "#1f77b4", &c),
                PlotSeries::markers("mc", "#d62728", &c),
            ],
            &[0.0, 0.85e-3],
        );
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let polylines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
        let groups = doc
            .descendants()
            .filter(|n| n.has_tag_name("g") && n.attribute("class") == Some("markers"))
            .count();
        assert_eq!(polylines, 1);
        assert_eq!(groups, 1);
    }

    #[test]
    fn tick_steps_are_nice() {
        assert_eq!(tick_step(6.0, 8.0), 1.0);
        assert_eq!(tick_step(1.0, 6.0), 0.2);
        assert_eq!(fmt_tick(-0.0000001, 0.5), "0.0");
    }
}
