//! Writing analytics tables as CSV, JSON and SVG charts.
//!
//! Heatmap colour ramp (share of articles with biased language):
//!
//! | bin        | colour    |
//! |------------|-----------|
//! | no data    | `#e0e0e0` |
//! | [0, 20)    | `#fee5d9` |
//! | [20, 40)   | `#fcae91` |
//! | [40, 60)   | `#fb6a4a` |
//! | [60, 80)   | `#de2d26` |
//! | [80, 100]  | `#a50f15` |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::gazetteer::StateTag;
use super::tables::{PairwiseTest, PublisherYearCell, StateYearCell, StateYearTable};
use crate::jsonl::write_atomic;

pub const RAMP: [&str; 5] = ["#fee5d9", "#fcae91", "#fb6a4a", "#de2d26", "#a50f15"];
pub const NO_DATA: &str = "#e0e0e0";

pub fn ramp_color(pct: Option<f64>) -> &'static str {
    match pct {
        None => NO_DATA,
        Some(p) => RAMP[((p / 20.0).floor().max(0.0) as usize).min(4)],
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Formats {
    pub delimited: bool,
    pub structured: bool,
    pub chart: bool,
}

impl Formats {
    pub const ALL: Formats = Formats { delimited: true, structured: true, chart: true };
    pub const DATA: Formats = Formats { delimited: true, structured: true, chart: false };
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticsTables {
    pub publisher_year: Vec<PublisherYearCell>,
    pub state_year: StateYearTable,
    pub pairwise_tests: Vec<PairwiseTest>,
    pub state_tags: Vec<StateTag>,
}

/// Header row first, then one line per row; an empty table yields only the
/// header.
pub fn csv_string<T: Serialize>(header: &[&str], rows: &[T]) -> io::Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(io::Error::other)?;
    for r in rows {
        w.serialize(r).map_err(io::Error::other)?;
    }
    let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn json_string<T: Serialize + ?Sized>(value: &T) -> io::Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    s.push('\n');
    Ok(s)
}

const PUBLISHER_YEAR_HEADER: &[&str] = &[
    "publisher",
    "year",
    "n_articles",
    "n_biased_articles",
    "pct_articles_biased",
    "n_paragraphs",
    "n_biased_paragraphs",
    "mean_paragraph_score",
    "mean_article_score",
];

const STATE_YEAR_HEADER: &[&str] = &[
    "state",
    "year",
    "n_paragraphs",
    "n_biased_paragraphs",
    "pct_paragraphs_biased",
    "n_articles",
    "n_biased_articles",
    "pct_articles_biased",
];

#[derive(Serialize)]
struct PairwiseRow<'a> {
    publisher_a: &'a str,
    publisher_b: &'a str,
    n_a: Option<usize>,
    n_b: Option<usize>,
    mean_a: Option<f64>,
    mean_b: Option<f64>,
    t: Option<f64>,
    df: Option<f64>,
    p_value: Option<f64>,
    zero_variance: Option<bool>,
}

const PAIRWISE_HEADER: &[&str] = &[
    "publisher_a", "publisher_b", "n_a", "n_b", "mean_a", "mean_b", "t", "df", "p_value", "zero_variance",
];

#[derive(Serialize)]
struct TagRow<'a> {
    article_id: &'a str,
    state: Option<&'a str>,
    match_source: Option<super::gazetteer::MatchSource>,
    match_count: usize,
    all_matches: String,
}

const TAG_HEADER: &[&str] = &["article_id", "state", "match_source", "match_count", "all_matches"];
const UNTAGGED_HEADER: &[&str] = &["article_id", "publisher", "year", "title"];

fn pairwise_rows(tests: &[PairwiseTest]) -> Vec<PairwiseRow<'_>> {
    tests
        .iter()
        .map(|t| {
            let r = t.result.as_ref();
            PairwiseRow {
                publisher_a: &t.publisher_a,
                publisher_b: &t.publisher_b,
                n_a: r.map(|r| r.n_a),
                n_b: r.map(|r| r.n_b),
                mean_a: r.map(|r| r.mean_a),
                mean_b: r.map(|r| r.mean_b),
                t: r.and_then(|r| r.t),
                df: r.and_then(|r| r.df),
                p_value: r.map(|r| r.p_value),
                zero_variance: r.map(|r| r.zero_variance),
            }
        })
        .collect()
}

fn tag_rows(tags: &[StateTag]) -> Vec<TagRow<'_>> {
    tags.iter()
        .map(|t| TagRow {
            article_id: &t.article_id,
            state: t.state.as_deref(),
            match_source: t.match_source,
            match_count: t.match_count,
            all_matches: t
                .all_matches
                .iter()
                .map(|(s, (title, body))| format!("{s}:{title}/{body}"))
                .collect::<Vec<_>>()
                .join(";"),
        })
        .collect()
}

/// Writes the requested formats under `out_dir` and returns the paths
/// written, in a fixed order.
pub fn emit_report(out_dir: &Path, tables: &AnalyticsTables, formats: Formats) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> io::Result<()> {
        let path = out_dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_atomic(&path, body.as_bytes())?;
        written.push(path);
        Ok(())
    };

    if formats.delimited {
        put("publisher_year.csv".into(), csv_string(PUBLISHER_YEAR_HEADER, &tables.publisher_year)?)?;
        put("state_year.csv".into(), csv_string(STATE_YEAR_HEADER, &tables.state_year.cells)?)?;
        put("pairwise_tests.csv".into(), csv_string(PAIRWISE_HEADER, &pairwise_rows(&tables.pairwise_tests))?)?;
        put("untagged.csv".into(), csv_string(UNTAGGED_HEADER, &tables.state_year.untagged)?)?;
        put("state_tags.csv".into(), csv_string(TAG_HEADER, &tag_rows(&tables.state_tags))?)?;
    }
    if formats.structured {
        put("publisher_year.json".into(), json_string(&tables.publisher_year)?)?;
        put("state_year.json".into(), json_string(&tables.state_year.cells)?)?;
        put("pairwise_tests.json".into(), json_string(&tables.pairwise_tests)?)?;
        put(
            "untagged.json".into(),
            json_string(&serde_json::json!({
                "n_articles_total": tables.state_year.n_articles_total,
                "n_untagged": tables.state_year.untagged.len(),
                "articles": tables.state_year.untagged,
            }))?,
        )?;
        put("state_tags.json".into(), json_string(&tables.state_tags)?)?;
    }
    if formats.chart {
        let series = publisher_series(&tables.publisher_year);
        for (publisher, points) in &series {
            put(
                format!("charts/publisher_{}.svg", slug(publisher)),
                line_chart_svg(publisher, &[(publisher.as_str(), points.as_slice())]),
            )?;
        }
        let all: Vec<(&str, &[(i32, f64)])> = series.iter().map(|(p, v)| (p.as_str(), v.as_slice())).collect();
        put("charts/publishers_combined.svg".into(), line_chart_svg("All publishers", &all))?;
        put("charts/state_heatmap.svg".into(), state_heatmap_svg(&tables.state_year.cells))?;
    }
    Ok(written)
}

/// Mean paragraph score per year for each publisher.
pub fn publisher_series(cells: &[PublisherYearCell]) -> BTreeMap<String, Vec<(i32, f64)>> {
    let mut out: BTreeMap<String, Vec<(i32, f64)>> = BTreeMap::new();
    for c in cells {
        if let Some(y) = c.year {
            out.entry(c.publisher.clone()).or_default().push((y, c.mean_paragraph_score));
        }
    }
    for v in out.values_mut() {
        v.sort_by_key(|p| p.0);
    }
    out
}

pub fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    let trimmed = out.trim_matches('_');
    if trimmed.is_empty() { "unnamed".into() } else { trimmed.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const LINE_COLORS: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Line chart of score (0..=2) over year.
pub fn line_chart_svg(title: &str, series: &[(&str, &[(i32, f64)])]) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 360.0, 50.0, 150.0, 30.0, 40.0);
    let years: Vec<i32> = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)).collect();
    let (y0, y1) = match (years.iter().min(), years.iter().max()) {
        (Some(&a), Some(&b)) => (a, b.max(a + 1)),
        _ => (0, 1),
    };
    let px = |y: i32| left + (f64::from(y - y0) / f64::from(y1 - y0)) * (w - left - right);
    let py = |v: f64| top + (1.0 - v / 2.0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<text x="{left}" y="18" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        h - bottom,
        w - right,
        h - bottom
    );
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.1}" stroke="black"/>"#, h - bottom);
    for v in [0.0, 0.5, 1.0, 1.5, 2.0] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.1}</text>"#,
            left - 4.0,
            py(v) + 3.0
        );
    }
    for y in y0..=y1 {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">{y}</text>"#,
            px(y),
            h - bottom + 14.0
        );
    }
    for (i, (name, points)) in series.iter().enumerate() {
        let color = LINE_COLORS[i % LINE_COLORS.len()];
        let pts: Vec<String> = points.iter().map(|&(y, v)| format!("{:.2},{:.2}", px(y), py(v))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        for &(y, v) in points.iter() {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(y), py(v));
        }
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
            w - right + 10.0,
            ly,
            w - right + 24.0,
            ly + 9.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// (state, postal code, column, row) on a 12 × 8 tile grid.
pub const TILE_GRID: [(&str, &str, u8, u8); 50] = [
    ("Alaska", "AK", 0, 0), ("Maine", "ME", 11, 0),
    ("Vermont", "VT", 10, 1), ("New Hampshire", "NH", 11, 1),
    ("Washington", "WA", 1, 2), ("Idaho", "ID", 2, 2), ("Montana", "MT", 3, 2), ("North Dakota", "ND", 4, 2),
    ("Minnesota", "MN", 5, 2), ("Illinois", "IL", 6, 2), ("Wisconsin", "WI", 7, 2), ("Michigan", "MI", 8, 2),
    ("New York", "NY", 9, 2), ("Rhode Island", "RI", 10, 2), ("Massachusetts", "MA", 11, 2),
    ("Oregon", "OR", 1, 3), ("Nevada", "NV", 2, 3), ("Wyoming", "WY", 3, 3), ("South Dakota", "SD", 4, 3),
    ("Iowa", "IA", 5, 3), ("Indiana", "IN", 6, 3), ("Ohio", "OH", 7, 3), ("Pennsylvania", "PA", 8, 3),
    ("New Jersey", "NJ", 9, 3), ("Connecticut", "CT", 10, 3),
    ("California", "CA", 1, 4), ("Utah", "UT", 2, 4), ("Colorado", "CO", 3, 4), ("Nebraska", "NE", 4, 4),
    ("Missouri", "MO", 5, 4), ("Kentucky", "KY", 6, 4), ("West Virginia", "WV", 7, 4), ("Virginia", "VA", 8, 4),
    ("Maryland", "MD", 9, 4), ("Delaware", "DE", 10, 4),
    ("Arizona", "AZ", 2, 5), ("New Mexico", "NM", 3, 5), ("Kansas", "KS", 4, 5), ("Arkansas", "AR", 5, 5),
    ("Tennessee", "TN", 6, 5), ("North Carolina", "NC", 7, 5), ("South Carolina", "SC", 8, 5),
    ("Oklahoma", "OK", 4, 6), ("Louisiana", "LA", 5, 6), ("Mississippi", "MS", 6, 6), ("Alabama", "AL", 7, 6),
    ("Georgia", "GA", 8, 6),
    ("Hawaii", "HI", 0, 7), ("Texas", "TX", 4, 7), ("Florida", "FL", 9, 7),
];

/// Tile-grid heatmap of the all-years share of biased articles per state.
pub fn state_heatmap_svg(cells: &[StateYearCell]) -> String {
    let overall: BTreeMap<&str, f64> = cells
        .iter()
        .filter(|c| c.year.is_none())
        .map(|c| (c.state.as_str(), c.pct_articles_biased))
        .collect();
    let tile = 44.0;
    let (w, h) = (12.0 * tile + 20.0, 8.0 * tile + 70.0);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    for (name, code, col, row) in TILE_GRID {
        let pct = overall.get(name).copied();
        let (x, y) = (10.0 + f64::from(col) * tile, 10.0 + f64::from(row) * tile);
        let label = pct.map_or_else(|| "n/a".to_string(), |p| format!("{p:.1}%"));
        let _ = writeln!(
            s,
            r#"<g><title>{name}: {label}</title><rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="{}" stroke="white"/><text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{code}</text></g>"#,
            tile - 2.0,
            tile - 2.0,
            ramp_color(pct),
            x + tile / 2.0 - 1.0,
            y + tile / 2.0 + 3.0
        );
    }
    let ly = 10.0 + 8.0 * tile + 15.0;
    for (i, (color, label)) in RAMP
        .iter()
        .zip(["0-20%", "20-40%", "40-60%", "60-80%", "80-100%"])
        .chain(std::iter::once((&NO_DATA, "no data")))
        .enumerate()
    {
        let x = 10.0 + 85.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{ly:.1}" width="14" height="14" fill="{color}"/><text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{label}</text>"#,
            x + 18.0,
            ly + 11.0
        );
    }
    s.push_str("</svg>\n");
    s
}
