//! Static analyst reports: SVG line/bar charts and their CSV data, rendered
//! from a completed run directory. SVG is emitted by hand — scaled polylines,
//! ticks, filled sign regions — so output is dependency-free and byte-stable.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, Context, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Svg,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 45.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn around(xs: &[f64], ys: &[f64]) -> Frame {
        let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &x in xs {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
        }
        let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &y in ys {
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        if x_min == x_max {
            x_max = x_min + 1.0;
        }
        if y_min == y_max {
            y_max = y_min + 1.0;
            y_min -= 1.0;
        }
        let pad = (y_max - y_min) * 0.08;
        Frame { x_min, x_max, y_min: y_min - pad, y_max: y_max + pad }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1000.0 || a < 0.001 {
        format!("{v:.2e}")
    } else if a >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.4}")
    }
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-size="15" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        xml_escape(title)
    );
    s
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(s: &mut String, frame: &Frame, x_label: &str) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    let _ = writeln!(
        s,
        r##"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#444" stroke-width="1"/>
<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#444" stroke-width="1"/>"##
    );
    for i in 0..=5 {
        let x = frame.x_min + (frame.x_max - frame.x_min) * i as f64 / 5.0;
        let px = frame.px(x);
        let _ = writeln!(
            s,
            r##"<line x1="{px}" y1="{y0}" x2="{px}" y2="{}" stroke="#444"/>
<text x="{px}" y="{}" text-anchor="middle">{}</text>"##,
            y0 + 4.0,
            y0 + 18.0,
            fmt_num(x)
        );
        let y = frame.y_min + (frame.y_max - frame.y_min) * i as f64 / 5.0;
        let py = frame.py(y);
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{py}" x2="{x0}" y2="{py}" stroke="#444"/>
<text x="{}" y="{}" text-anchor="end">{}</text>"##,
            x0 - 4.0,
            x0 - 7.0,
            py + 4.0,
            fmt_num(y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 8.0,
        xml_escape(x_label)
    );
}

fn polyline(s: &mut String, frame: &Frame, points: &[(f64, f64)], color: &str) {
    let mut attr = String::new();
    for &(x, y) in points {
        let _ = write!(attr, "{:.2},{:.2} ", frame.px(x), frame.py(y));
    }
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
        attr.trim_end()
    );
}

fn legend(s: &mut String, entries: &[(&str, &str)]) {
    let mut x = MARGIN_LEFT + 10.0;
    for (label, color) in entries {
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="12" height="12" fill="{color}"/>
<text x="{}" y="{}">{}</text>"#,
            MARGIN_TOP - 6.0,
            x + 16.0,
            MARGIN_TOP + 4.0,
            xml_escape(label)
        );
        x += 16.0 + 8.0 * label.len() as f64 + 24.0;
    }
}

/// Multi-series line chart.
fn line_chart(title: &str, x_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let xs: Vec<f64> = series.iter().flat_map(|(_, p)| p.iter().map(|&(x, _)| x)).collect();
    let ys: Vec<f64> = series.iter().flat_map(|(_, p)| p.iter().map(|&(_, y)| y)).collect();
    let frame = Frame::around(&xs, &ys);
    let mut s = svg_open(title);
    axes(&mut s, &frame, x_label);
    for (i, (_, points)) in series.iter().enumerate() {
        polyline(&mut s, &frame, points, PALETTE[i % PALETTE.len()]);
    }
    let entries: Vec<(&str, &str)> = series
        .iter()
        .enumerate()
        .map(|(i, (name, _))| (name.as_str(), PALETTE[i % PALETTE.len()]))
        .collect();
    legend(&mut s, &entries);
    s.push_str("</svg>\n");
    s
}

/// Single series with the regions above zero filled red (metric-increasing)
/// and below zero filled blue (metric-decreasing).
fn shaded_zero_chart(title: &str, points: &[(f64, f64)]) -> String {
    let xs: Vec<f64> = points.iter().map(|&(x, _)| x).collect();
    let mut ys: Vec<f64> = points.iter().map(|&(_, y)| y).collect();
    ys.push(0.0);
    let frame = Frame::around(&xs, &ys);
    let mut s = svg_open(title);
    axes(&mut s, &frame, "t");
    let zero = frame.py(0.0);

    for (clamp, color) in [(f64::max as fn(f64, f64) -> f64, "#d6272855"), (f64::min, "#1f77b455")] {
        let mut path = format!("M {:.2} {zero:.2} ", frame.px(points[0].0));
        for &(x, y) in points {
            let _ = write!(path, "L {:.2} {:.2} ", frame.px(x), frame.py(clamp(y, 0.0)));
        }
        let _ = write!(path, "L {:.2} {zero:.2} Z", frame.px(points[points.len() - 1].0));
        let _ = writeln!(s, r#"<path d="{path}" fill="{color}" stroke="none"/>"#);
    }
    let _ = writeln!(
        s,
        r##"<line x1="{}" y1="{zero:.2}" x2="{}" y2="{zero:.2}" stroke="#888" stroke-dasharray="4,3"/>"##,
        MARGIN_LEFT,
        WIDTH - MARGIN_RIGHT
    );
    polyline(&mut s, &frame, points, PALETTE[0]);
    s.push_str("</svg>\n");
    s
}

/// Control chart: the series, center line, limit lines, signal markers.
fn control_chart(
    title: &str,
    points: &[(f64, f64)],
    center: f64,
    lcl: f64,
    ucl: f64,
) -> String {
    let xs: Vec<f64> = points.iter().map(|&(x, _)| x).collect();
    let mut ys: Vec<f64> = points.iter().map(|&(_, y)| y).collect();
    ys.extend([lcl, ucl]);
    let frame = Frame::around(&xs, &ys);
    let mut s = svg_open(title);
    axes(&mut s, &frame, "t");
    for (value, color) in [(center, "#2ca02c"), (lcl, "#d62728"), (ucl, "#d62728")] {
        let py = frame.py(value);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="{color}" stroke-dasharray="6,3"/>"#,
            MARGIN_LEFT,
            WIDTH - MARGIN_RIGHT
        );
    }
    polyline(&mut s, &frame, points, PALETTE[0]);
    for &(x, y) in points {
        if y < lcl || y > ucl {
            let _ = writeln!(
                s,
                r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#d62728"/>"##,
                frame.px(x),
                frame.py(y)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Horizontal-category bar chart for the effect decomposition.
fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let ys: Vec<f64> = bars.iter().map(|&(_, v)| v).chain([0.0]).collect();
    let frame = Frame::around(&[0.0, bars.len() as f64], &ys);
    let mut s = svg_open(title);
    axes(&mut s, &frame, "");
    let zero = frame.py(0.0);
    let slot = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / bars.len() as f64;
    for (i, (name, value)) in bars.iter().enumerate() {
        let x = MARGIN_LEFT + slot * (i as f64 + 0.2);
        let w = slot * 0.6;
        let py = frame.py(*value);
        let (top, h) = if *value >= 0.0 { (py, zero - py) } else { (zero, py - zero) };
        let color = if *value >= 0.0 { "#d62728" } else { "#1f77b4" };
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{top:.2}" width="{w:.2}" height="{h:.2}" fill="{color}"/>
<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            x + w / 2.0,
            HEIGHT - MARGIN_BOTTOM + 16.0,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table(dir: &Path, name: &str) -> Result<Table> {
    let path = dir.join(name);
    let text = std::fs::read_to_string(&path)
        .map_err(|_| anyhow!("missing artifact '{name}' in {}", dir.display()))?;
    let mut lines = text.lines();
    let header: Vec<String> =
        lines.next().ok_or_else(|| anyhow!("artifact '{name}' is empty"))?.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| cell.parse::<f64>().unwrap_or(f64::NAN))
            .collect();
        rows.push(row);
    }
    Ok(Table { header, rows })
}

fn numeric_column(table: &Table, idx: usize) -> Vec<f64> {
    table.rows.iter().map(|r| r[idx]).collect()
}

/// Render the report files for a completed run directory. Returns the names
/// of the files written.
pub fn emit_report(dir: &Path, format: ReportFormat) -> Result<Vec<String>> {
    let mut written = Vec::new();
    let mut emit = |name: &str, content: String| -> Result<()> {
        std::fs::write(dir.join(name), content)
            .with_context(|| format!("writing report file {name}"))?;
        written.push(name.to_string());
        Ok(())
    };

    // actual vs fitted
    let residuals = read_table(dir, "residuals.csv")?;
    let t: Vec<f64> = numeric_column(&residuals, 0);
    let actual: Vec<f64> = numeric_column(&residuals, 1);
    let fitted: Vec<f64> = numeric_column(&residuals, 2);
    match format {
        ReportFormat::Csv => {
            let mut out = String::from("t,actual,fitted\n");
            for i in 0..t.len() {
                let _ = writeln!(out, "{},{},{}", t[i], actual[i], fitted[i]);
            }
            emit("report_fit.csv", out)?;
        }
        ReportFormat::Svg => {
            let series = vec![
                ("actual".to_string(), t.iter().copied().zip(actual.iter().copied()).collect()),
                ("fitted".to_string(), t.iter().copied().zip(fitted.iter().copied()).collect()),
            ];
            emit("report_fit.svg", line_chart("Metric: actual vs fitted", "t", &series))?;
        }
    }

    // per-feature centered series with sign shading
    let ghat = read_table(dir, "ghat.csv")?;
    for (col, name) in ghat.header.iter().enumerate().skip(1) {
        let points: Vec<(f64, f64)> = ghat
            .rows
            .iter()
            .map(|r| (r[0], r[col]))
            .collect();
        match format {
            ReportFormat::Csv => {
                let mut out = String::from("t,ghat\n");
                for &(x, y) in &points {
                    let _ = writeln!(out, "{x},{y}");
                }
                emit(&format!("report_ghat_{name}.csv"), out)?;
            }
            ReportFormat::Svg => {
                emit(
                    &format!("report_ghat_{name}.svg"),
                    shaded_zero_chart(&format!("Centered contribution series: {name}"), &points),
                )?;
            }
        }
    }

    // effect decomposition
    let effects_path = dir.join("effects.csv");
    if effects_path.exists() {
        let text = std::fs::read_to_string(&effects_path)?;
        let mut bars: Vec<(String, f64)> = Vec::new();
        for line in text.lines().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() == 4 {
                bars.push((cells[2].to_string(), cells[3].parse().unwrap_or(f64::NAN)));
            }
        }
        match format {
            ReportFormat::Csv => {
                let mut out = String::from("feature,effect\n");
                for (name, value) in &bars {
                    let _ = writeln!(out, "{name},{value}");
                }
                emit("report_effects.csv", out)?;
            }
            ReportFormat::Svg => {
                emit("report_effects.svg", bar_chart("Effects vs reference period", &bars))?;
            }
        }
    }

    // residual control chart
    let spc = read_table(dir, "spc_residuals.csv")?;
    let rt: Vec<f64> = numeric_column(&spc, 0);
    let value: Vec<f64> = numeric_column(&spc, 1);
    let lcl = spc.rows.first().map_or(0.0, |r| r[2]);
    let ucl = spc.rows.first().map_or(0.0, |r| r[3]);
    match format {
        ReportFormat::Csv => {
            let mut out = String::from("t,residual,lcl,ucl\n");
            for i in 0..rt.len() {
                let _ = writeln!(out, "{},{},{lcl},{ucl}", rt[i], value[i]);
            }
            emit("report_spc.csv", out)?;
        }
        ReportFormat::Svg => {
            let points: Vec<(f64, f64)> =
                rt.iter().copied().zip(value.iter().copied()).collect();
            emit(
                "report_spc.svg",
                control_chart("Residual control chart", &points, (lcl + ucl) / 2.0, lcl, ucl),
            )?;
        }
    }

    Ok(written)
}
