//! CSV ingestion and emission, and static SVG plots.
//!
//! Written CSV uses comma separation, `.` decimals and LF line endings.
//! Floats are printed with the shortest representation that parses back to
//! the same value. Indices in every output are 1-based.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{AcdError, Result};
use crate::influence::InfluenceReport;
use crate::sim::{ReplicateRow, StabilityReport};

/// Read a numeric CSV with a header row; `response` names the y column.
pub fn read_csv(path: &Path, response: &str) -> Result<Dataset> {
    let text = fs::read(path)?;
    parse_csv(&text, response)
}

fn csv_error(row: usize, column: impl Into<String>, message: impl Into<String>) -> AcdError {
    AcdError::Csv {
        row,
        column: column.into(),
        message: message.into(),
    }
}

/// Parse CSV bytes; rows are numbered from 1 at the header line.
pub fn parse_csv(bytes: &[u8], response: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(1, "", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(csv_error(1, "", "missing header row"));
    }
    let y_col = header
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| csv_error(1, response, format!("response column '{response}' not in header")))?;
    if header.len() < 2 {
        return Err(csv_error(1, "", "need at least one predictor column besides the response"));
    }

    let mut values: Vec<f64> = Vec::new();
    let mut n = 0;
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { len, expected_len, .. } => csv_error(
                line,
                "",
                format!("row has {len} fields, header has {expected_len}"),
            ),
            _ => csv_error(line, "", e.to_string()),
        })?;
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| csv_error(line, header[c].clone(), format!("non-numeric cell '{cell}'")))?;
            values.push(v);
        }
        n += 1;
    }
    let cols = header.len();
    let all = DMatrix::from_row_slice(n, cols, &values);
    let y = all.column(y_col).into_owned();
    let keep: Vec<usize> = (0..cols).filter(|&c| c != y_col).collect();
    let x = all.select_columns(&keep);
    let names = keep.iter().map(|&c| header[c].clone()).collect();
    Dataset::with_names(x, DVector::from(y), Some(names))
}

fn label_for(k: usize, names: Option<&[String]>) -> String {
    match (k, names) {
        (0, _) => "intercept".into(),
        (k, Some(names)) if k <= names.len() => names[k - 1].clone(),
        (k, _) => format!("X{k}"),
    }
}

/// Report CSV text: a comment line, a header and one row per observation.
pub fn render_report_csv(r: &InfluenceReport, names: Option<&[String]>) -> String {
    let mut top = String::new();
    if let Some(audit) = &r.audit {
        let v1 = &audit.svd.v1;
        let mut order: Vec<usize> = (0..v1.len()).collect();
        order.sort_by(|&a, &b| v1[b].abs().total_cmp(&v1[a].abs()).then(a.cmp(&b)));
        let parts: Vec<String> = order
            .iter()
            .take(5)
            .map(|&k| format!("{}:{}", label_for(k, names), v1[k]))
            .collect();
        top = parts.join(",");
    }
    let mut out = String::new();
    let _ = writeln!(out, "# threshold={} rule={} v1_top={}", r.threshold, r.rule.label(), top);
    out.push_str("index,D_raw,D_norm,flagged\n");
    for i in 0..r.n() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            i + 1,
            r.d_raw[i],
            r.d_norm[i],
            u8::from(r.is_flagged(i))
        );
    }
    out
}

/// Writes `<prefix>.csv` and `<prefix>.svg`.
pub fn write_report(r: &InfluenceReport, names: Option<&[String]>, prefix: &Path) -> Result<(PathBuf, PathBuf)> {
    let csv_path = with_suffix(prefix, "csv");
    let svg_path = with_suffix(prefix, "svg");
    fs::write(&csv_path, render_report_csv(r, names))?;
    fs::write(&svg_path, index_plot_svg(r, "Adaptive Cook's distance"))?;
    Ok((csv_path, svg_path))
}

pub fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn render_replicates_csv(rows: &[ReplicateRow]) -> String {
    let mut out = String::from("replicate,method,metric,value\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.replicate + 1, r.method.label(), r.metric, r.value);
    }
    out
}

/// Selection proportions, one column pair per report; `*` marks proportions of at least 0.5.
pub fn render_stability_csv(columns: &[(&str, &StabilityReport)]) -> String {
    let mut out = String::from("variable");
    for (label, _) in columns {
        let _ = write!(out, ",{label},{label}_stable");
    }
    out.push('\n');
    let Some((_, first)) = columns.first() else {
        return out;
    };
    for (k, name) in first.names.iter().enumerate() {
        out.push_str(name);
        for (_, rep) in columns {
            let v = rep.proportions[k];
            let _ = write!(out, ",{},{}", v, if v >= 0.5 { "*" } else { "" });
        }
        out.push('\n');
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        H - BOTTOM,
        W - RIGHT,
        H - BOTTOM
    );
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, H - BOTTOM);
    s
}

fn y_axis(s: &mut String, lo: f64, hi: f64, label: &str) {
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        let y = H - BOTTOM - (H - TOP - BOTTOM) * t as f64 / 4.0;
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 4.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            trim_number(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(label)
    );
}

fn trim_number(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Normalized distance against observation index, with the cutoff line and
/// flagged points labeled by their 1-based index.
pub fn index_plot_svg(r: &InfluenceReport, title: &str) -> String {
    let n = r.n();
    let mut s = svg_open(title);
    y_axis(&mut s, 0.0, 1.0, "normalized distance");
    let px = |i: usize| LEFT + (W - LEFT - RIGHT) * (i as f64 + 0.5) / n as f64;
    let py = |v: f64| H - BOTTOM - (H - TOP - BOTTOM) * v.clamp(0.0, 1.05);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">observation</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0
    );
    if r.threshold.is_finite() && r.threshold <= 1.05 {
        let y = py(r.threshold);
        let _ = writeln!(
            s,
            r#"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="gray" stroke-dasharray="5,4"/>"#,
            W - RIGHT
        );
    }
    for i in 0..n {
        let (x, y) = (px(i), py(r.d_norm[i]));
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{y:.2}" stroke="lightgray"/>"#, H - BOTTOM);
        if r.is_flagged(i) {
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="firebrick"/>"#);
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" fill="firebrick">{}</text>"#,
                y - 6.0,
                i + 1
            );
        } else {
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="steelblue"/>"#);
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Five-number summary used by the box plot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let iqr = q3 - q1;
    let lower_whisker = v.iter().cloned().find(|&x| x >= q1 - 1.5 * iqr).unwrap_or(q1);
    let upper_whisker = v.iter().rev().cloned().find(|&x| x <= q3 + 1.5 * iqr).unwrap_or(q3);
    Some(BoxStats {
        q1,
        median,
        q3,
        lower_whisker,
        upper_whisker,
    })
}

/// Side-by-side box plots, one per labeled group.
pub fn boxplot_svg(groups: &[(String, Vec<f64>)], title: &str, ylabel: &str) -> String {
    let mut s = svg_open(title);
    let all: Vec<f64> = groups.iter().flat_map(|(_, v)| v.iter().cloned()).collect();
    let mut lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    y_axis(&mut s, lo, hi, ylabel);
    let py = |v: f64| H - BOTTOM - (H - TOP - BOTTOM) * (v - lo) / (hi - lo);
    let slot = (W - LEFT - RIGHT) / groups.len().max(1) as f64;
    for (g, (label, values)) in groups.iter().enumerate() {
        let cx = LEFT + slot * (g as f64 + 0.5);
        let half = (slot * 0.25).min(40.0);
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{}" text-anchor="middle">{}</text>"#,
            H - BOTTOM + 16.0,
            escape(label)
        );
        let Some(b) = box_stats(values) else { continue };
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            py(b.lower_whisker),
            py(b.upper_whisker)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="lightsteelblue" stroke="black"/>"#,
            cx - half,
            py(b.q3),
            2.0 * half,
            (py(b.q1) - py(b.q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            py(b.median),
            cx + half,
            py(b.median)
        );
        for &v in values {
            if v < b.lower_whisker || v > b.upper_whisker {
                let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{:.2}" r="2.5" fill="none" stroke="black"/>"#, py(v));
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Group replicate rows by method, keeping first-appearance order.
pub fn group_by_method(rows: &[ReplicateRow]) -> Vec<(String, Vec<f64>)> {
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for r in rows {
        let label = r.method.label();
        match groups.iter_mut().find(|(l, _)| l == label) {
            Some((_, v)) => v.push(r.value),
            None => groups.push((label.to_string(), vec![r.value])),
        }
    }
    groups
}
