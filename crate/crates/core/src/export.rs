//! Comma-separated exports of boundary and performance tables, and a static
//! HTML report.
//!
//! Numbers are written with 6 significant digits. `+inf` is written `Inf`;
//! entries a design does not define are left blank.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::boundary::{AdaptiveBoundaries, BoundaryTable, DesignTables, StandardBoundaries};
use crate::config::{save_parameters, Parameters};
use crate::error::{Error, Result};
use crate::model::Design;
use crate::simulator::{DesignMetrics, PerformanceGrid};

/// Formats `v` with at most 6 significant digits.
pub fn fmt6(v: f64) -> String {
    if v == f64::INFINITY {
        return "Inf".into();
    }
    if v == f64::NEG_INFINITY {
        return "-Inf".into();
    }
    if v.is_nan() {
        return "NaN".into();
    }
    let rounded: f64 = format!("{v:.5e}").parse().expect("valid float");
    // Avoid "-0".
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    rounded.to_string()
}

/// Parses a cell written by this module. Blank cells give `None`.
pub fn parse_cell(cell: &str) -> Result<Option<f64>> {
    match cell.trim() {
        "" => Ok(None),
        "Inf" => Ok(Some(f64::INFINITY)),
        "-Inf" => Ok(Some(f64::NEG_INFINITY)),
        other => other
            .parse()
            .map(Some)
            .map_err(|_| Error::invalid("table", format!("not a number: {other:?}"))),
    }
}

/// Tables addressable by name, as used in export URLs and file names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableName {
    Adaptive,
    Combined,
    Subpop1,
    Performance,
    Parameters,
}

impl TableName {
    pub const ALL: [TableName; 5] = [
        TableName::Adaptive,
        TableName::Combined,
        TableName::Subpop1,
        TableName::Performance,
        TableName::Parameters,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TableName::Adaptive => "ad",
            TableName::Combined => "sc",
            TableName::Subpop1 => "ss",
            TableName::Performance => "performance",
            TableName::Parameters => "parameters",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        let name = name.strip_suffix(".csv").unwrap_or(name);
        Self::ALL.into_iter().find(|t| t.as_str() == name)
    }

    pub fn design(self) -> Option<Design> {
        match self {
            TableName::Adaptive => Some(Design::Adaptive),
            TableName::Combined => Some(Design::StandardCombined),
            TableName::Subpop1 => Some(Design::StandardSubpop1),
            _ => None,
        }
    }
}

fn push_row(out: &mut String, cells: &[String]) {
    out.push_str(&cells.join(","));
    out.push('\n');
}

fn count_at(counts: &[f64], k: usize) -> f64 {
    // Streams that stop enrolling keep their last cumulative count.
    counts.get(k).or(counts.last()).copied().unwrap_or(0.0)
}

pub const ADAPTIVE_COLUMNS: [&str; 8] = [
    "stage",
    "n_subpop1",
    "n_subpop2",
    "n_total",
    "u_combined",
    "u_subpop1",
    "l_subpop1",
    "l_subpop2",
];

pub const STANDARD_COLUMNS: [&str; 6] = [
    "stage",
    "n_subpop1",
    "n_subpop2",
    "n_total",
    "efficacy",
    "futility",
];

pub fn adaptive_table_csv(b: &AdaptiveBoundaries) -> String {
    let mut out = String::new();
    push_row(&mut out, &ADAPTIVE_COLUMNS.map(String::from));
    let s = &b.schedule;
    let blank = String::new;
    for k in 0..b.stages() {
        let (n1, n2) = (count_at(&s.subpop1, k), count_at(&s.subpop2, k));
        let defined = k < b.k_star();
        push_row(
            &mut out,
            &[
                (k + 1).to_string(),
                fmt6(n1),
                fmt6(n2),
                fmt6(n1 + n2),
                if defined { fmt6(b.combined_efficacy[k]) } else { blank() },
                fmt6(b.subpop1_efficacy[k]),
                fmt6(b.subpop1_futility[k]),
                if defined { fmt6(b.subpop2_futility[k]) } else { blank() },
            ],
        );
    }
    out
}

pub fn standard_table_csv(b: &StandardBoundaries) -> String {
    let mut out = String::new();
    push_row(&mut out, &STANDARD_COLUMNS.map(String::from));
    let s = &b.schedule;
    for k in 0..b.stages() {
        let (n1, n2) = (count_at(&s.subpop1, k), count_at(&s.subpop2, k));
        push_row(
            &mut out,
            &[
                (k + 1).to_string(),
                fmt6(n1),
                fmt6(n2),
                fmt6(n1 + n2),
                fmt6(b.efficacy[k]),
                fmt6(b.futility[k]),
            ],
        );
    }
    out
}

pub fn design_table_csv(table: &BoundaryTable) -> String {
    match table {
        BoundaryTable::Adaptive(b) => adaptive_table_csv(b),
        BoundaryTable::Standard(b) => standard_table_csv(b),
    }
}

type MetricAccessor = fn(&DesignMetrics) -> (f64, f64);

const METRICS: [(&str, MetricAccessor); 7] = [
    ("power_h0c", |m| (m.reject_h0c.value, m.reject_h0c.std_error)),
    ("power_h01", |m| (m.reject_h01.value, m.reject_h01.std_error)),
    ("power_any", |m| (m.reject_any.value, m.reject_any.std_error)),
    ("expected_n", |m| (m.sample_size.value, m.sample_size.std_error)),
    ("expected_n_subpop1", |m| {
        (m.sample_size_subpop1.value, m.sample_size_subpop1.std_error)
    }),
    ("expected_n_subpop2", |m| {
        (m.sample_size_subpop2.value, m.sample_size_subpop2.std_error)
    }),
    ("expected_duration", |m| {
        (m.duration_years.value, m.duration_years.std_error)
    }),
];

/// One column per grid point. The header holds the subpopulation 2 effects,
/// the first row the matching `p2t`, then `<design>_<metric>` rows each
/// followed by its `_se` row.
pub fn performance_table_csv(grid: &PerformanceGrid) -> String {
    let mut out = String::new();
    let mut header = vec!["metric".to_string()];
    header.extend(grid.effects.iter().map(|&e| fmt6(e)));
    push_row(&mut out, &header);
    let mut p2t = vec!["p2t".to_string()];
    p2t.extend(grid.p2t.iter().map(|&p| fmt6(p)));
    push_row(&mut out, &p2t);
    for design in Design::ALL {
        let metrics = grid.metrics(design);
        for (name, get) in METRICS {
            let mut row = vec![format!("{}_{name}", design.label())];
            row.extend(metrics.iter().map(|m| fmt6(get(m).0)));
            push_row(&mut out, &row);
            let mut se = vec![format!("{}_{name}_se", design.label())];
            se.extend(metrics.iter().map(|m| fmt6(get(m).1)));
            push_row(&mut out, &se);
        }
    }
    out
}

/// Header and numeric cells of an exported table. The first column of a
/// performance table is a row label and is returned in `labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTable {
    pub header: Vec<String>,
    pub labels: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

/// Re-reads any table written by this module.
pub fn parse_table(text: &str) -> Result<ParsedTable> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::invalid("table", e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let labelled = header.first().map(String::as_str) == Some("metric");
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedRow {
            line: i + 2,
            reason: e.to_string(),
        })?;
        let mut cells = record.iter();
        if labelled {
            labels.push(cells.next().unwrap_or_default().to_string());
        }
        rows.push(cells.map(parse_cell).collect::<Result<Vec<_>>>()?);
    }
    Ok(ParsedTable {
        header,
        labels,
        rows,
    })
}

/// A named data series for [`svg_line_chart`].
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
}

const PALETTE: [&str; 3] = ["#1b6ca8", "#d1495b", "#3a7d44"];

fn fmt_tick(v: f64) -> String {
    let r: f64 = format!("{v:.2e}").parse().expect("valid float");
    if r == 0.0 { "0".into() } else { r.to_string() }
}

/// Self-contained SVG line chart of several series over common `xs`.
pub fn svg_line_chart(title: &str, x_label: &str, xs: &[f64], series: &[Series]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 300.0;
    const LEFT: f64 = 56.0;
    const RIGHT: f64 = 120.0;
    const TOP: f64 = 30.0;
    const BOTTOM: f64 = 44.0;
    let finite = |v: &&f64| v.is_finite();
    let (mut x0, mut x1) = bounds(xs.iter().filter(finite).copied());
    let (mut y0, mut y1) = bounds(
        series
            .iter()
            .flat_map(|s| s.values.iter())
            .filter(finite)
            .copied(),
    );
    if x0 == x1 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y0 == y1 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    y0 = y0.min(0.0);
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        escape(title)
    );
    let _ = write!(
        svg,
        r#"<line x1="{LEFT}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{b}" stroke="black"/>"#,
        b = H - BOTTOM,
        r = W - RIGHT
    );
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = write!(
            svg,
            r##"<line x1="{LEFT}" y1="{p:.1}" x2="{r}" y2="{p:.1}" stroke="#ddd"/><text x="{t}" y="{q:.1}" text-anchor="end">{}</text>"##,
            fmt_tick(y),
            p = py(y),
            q = py(y) + 4.0,
            r = W - RIGHT,
            t = LEFT - 4.0
        );
        let x = x0 + (x1 - x0) * i as f64 / 4.0;
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            px(x),
            H - BOTTOM + 14.0,
            fmt_tick(x)
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 8.0,
        escape(x_label)
    );
    for (i, s) in series.iter().enumerate() {
        let points: Vec<String> = xs
            .iter()
            .zip(s.values)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        let _ = write!(
            svg,
            r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#,
            points.join(" "),
            c = s.color
        );
        let ly = TOP + 16.0 * i as f64 + 8.0;
        let _ = write!(
            svg,
            r#"<line x1="{a}" y1="{ly}" x2="{b}" y2="{ly}" stroke="{c}" stroke-width="2"/><text x="{t}" y="{ty}">{}</text>"#,
            escape(s.label),
            a = W - RIGHT + 10.0,
            b = W - RIGHT + 28.0,
            t = W - RIGHT + 32.0,
            ty = ly + 4.0,
            c = s.color
        );
    }
    svg.push_str("</svg>");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Power, sample size and duration charts for a performance grid.
pub fn performance_charts(grid: &PerformanceGrid) -> Vec<String> {
    let collect = |design: Design, f: fn(&DesignMetrics) -> f64| -> Vec<f64> {
        grid.metrics(design).iter().map(f).collect()
    };
    let x = "subpopulation 2 treatment effect";
    let chart = |title: &str, curves: Vec<(String, Vec<f64>)>| {
        let series: Vec<Series> = curves
            .iter()
            .zip(PALETTE.iter().cycle())
            .map(|((label, values), color)| Series {
                label,
                color,
                values,
            })
            .collect();
        svg_line_chart(title, x, &grid.effects, &series)
    };
    let per_design = |f: fn(&DesignMetrics) -> f64| {
        Design::ALL
            .iter()
            .map(|&d| (d.label().to_string(), collect(d, f)))
            .collect::<Vec<_>>()
    };
    vec![
        chart(
            "Power for H0C",
            vec![
                ("AD".into(), collect(Design::Adaptive, |m| m.reject_h0c.value)),
                ("SC".into(), collect(Design::StandardCombined, |m| m.reject_h0c.value)),
            ],
        ),
        chart(
            "Power for H01",
            vec![
                ("AD".into(), collect(Design::Adaptive, |m| m.reject_h01.value)),
                ("SS".into(), collect(Design::StandardSubpop1, |m| m.reject_h01.value)),
            ],
        ),
        chart("Expected sample size", per_design(|m| m.sample_size.value)),
        chart("Expected duration (years)", per_design(|m| m.duration_years.value)),
    ]
}

fn html_table(csv_text: &str) -> String {
    let mut out = String::from("<table>");
    for (i, line) in csv_text.lines().enumerate() {
        let tag = if i == 0 { "th" } else { "td" };
        out.push_str("<tr>");
        for cell in line.split(',') {
            let _ = write!(out, "<{tag}>{}</{tag}>", escape(cell));
        }
        out.push_str("</tr>");
    }
    out.push_str("</table>");
    out
}

/// Single self-contained HTML page with parameters, boundary tables and,
/// when given, performance tables and charts.
pub fn html_report(
    params: &Parameters,
    tables: &DesignTables,
    performance: Option<&PerformanceGrid>,
) -> String {
    let mut html = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Enrichment design report</title>\
         <style>body{font-family:sans-serif;max-width:60em;margin:2em auto}\
         table{border-collapse:collapse;margin:1em 0}td,th{border:1px solid #bbb;padding:2px 6px;text-align:right}\
         figure{display:inline-block;margin:0.5em}</style></head><body>\n<h1>Enrichment design report</h1>\n",
    );
    html.push_str("<h2>Parameters</h2>\n");
    html.push_str(&html_table(&save_parameters(params)));
    let sections = [
        ("Adaptive design (AD)", adaptive_table_csv(&tables.adaptive)),
        ("Standard design, combined population (SC)", standard_table_csv(&tables.combined)),
        ("Standard design, subpopulation 1 (SS)", standard_table_csv(&tables.subpop1)),
    ];
    for (title, table) in sections {
        let _ = write!(html, "\n<h2>{}</h2>\n{}", escape(title), html_table(&table));
    }
    if let Some(grid) = performance {
        html.push_str("\n<h2>Performance</h2>\n");
        for chart in performance_charts(grid) {
            let _ = write!(html, "<figure>{chart}</figure>");
        }
        html.push_str(&html_table(&performance_table_csv(grid)));
    }
    html.push_str("\n</body></html>\n");
    html
}
