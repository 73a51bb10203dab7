//! CSV results and the SVG plot derived from them.
//!
//! The CSV is authoritative. The plot is rendered by parsing the CSV text back,
//! so it can only show what the CSV holds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;
use vp_core::BerPoint;

use crate::args::{OutputFormat, RunSpec};

pub const CSV_HEADER: &str = "scheme,snr_db,sigma_q2,trials,bits,bit_errors,ber,ci_half_width,seed";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("nothing to write")]
    Empty,
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed CSV: {0}")]
    Csv(String),
}

/// CSV text for `points`. BER and variances use shortest round-trip
/// formatting, dB values two decimals.
pub fn to_csv(points: &[BerPoint], seed: u64) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(','))
        .expect("in-memory write");
    for p in points {
        w.write_record([
            p.scheme.name().to_string(),
            format!("{:.2}", p.snr_db),
            p.sigma_q2.to_string(),
            p.trials.to_string(),
            p.bits.to_string(),
            p.bit_errors.to_string(),
            p.ber.to_string(),
            p.ci_half_width.to_string(),
            seed.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

/// One parsed CSV row, just the columns the plot needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub scheme: String,
    pub snr_db: f64,
    pub bits: u64,
    pub ber: f64,
    pub ci_half_width: f64,
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>, OutputError> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| OutputError::Csv(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(OutputError::Csv("unexpected header".into()));
    }
    let num = |rec: &csv::StringRecord, i: usize| -> Result<f64, OutputError> {
        rec[i]
            .parse::<f64>()
            .map_err(|e| OutputError::Csv(format!("column {i}: {e}")))
    };
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| OutputError::Csv(e.to_string()))?;
            Ok(CsvRow {
                scheme: rec[0].to_string(),
                snr_db: num(&rec, 1)?,
                bits: rec[4]
                    .parse()
                    .map_err(|e| OutputError::Csv(format!("bits: {e}")))?,
                ber: num(&rec, 6)?,
                ci_half_width: num(&rec, 7)?,
            })
        })
        .collect()
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Log-scale BER-vs-SNR plot of a results CSV, one series per scheme.
///
/// A zero-error point cannot sit on a log axis; it is drawn as a hollow
/// downward triangle at `3 / bits`, the 95 % upper bound for zero observed
/// errors, and the series line skips it.
pub fn render_svg(csv_text: &str) -> Result<String, OutputError> {
    let rows = parse_csv(csv_text)?;
    if rows.is_empty() {
        return Err(OutputError::Empty);
    }
    let mut series: BTreeMap<&str, Vec<&CsvRow>> = BTreeMap::new();
    let mut order = Vec::new();
    for row in &rows {
        if !series.contains_key(row.scheme.as_str()) {
            order.push(row.scheme.as_str());
        }
        series.entry(&row.scheme).or_default().push(row);
    }

    let plotted = |r: &CsvRow| {
        if r.ber > 0.0 {
            r.ber
        } else if r.bits > 0 {
            3.0 / r.bits as f64
        } else {
            1.0
        }
    };
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y_min = f64::INFINITY;
    for r in &rows {
        x_min = x_min.min(r.snr_db);
        x_max = x_max.max(r.snr_db);
        y_min = y_min
            .min(plotted(r))
            .min((r.ber - r.ci_half_width).max(plotted(r) / 10.0));
    }
    if x_max <= x_min {
        x_min -= 1.0;
        x_max += 1.0;
    }
    let decade_lo = y_min.log10().floor().min(-1.0) as i32;
    let decade_hi = 0;

    let (w, h) = (720.0, 480.0);
    let (left, right, top, bottom) = (80.0, 150.0, 30.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x_min) / (x_max - x_min) * pw;
    let sy = |y: f64| {
        let t = (y.log10() - decade_lo as f64) / (decade_hi - decade_lo) as f64;
        top + (1.0 - t) * ph
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for d in decade_lo..=decade_hi {
        let y = sy(10f64.powi(d));
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0
        );
    }
    let mut snrs: Vec<f64> = rows.iter().map(|r| r.snr_db).collect();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    for x in &snrs {
        let px = sx(*x);
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{top}" x2="{px:.2}" y2="{:.2}" stroke="#eee"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{x}</text>"##,
            top + ph,
            top + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">SNR (dB)</text>"#,
        left + pw / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">BER</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );

    for (k, name) in order.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts = &series[name];
        let line: Vec<String> = pts
            .iter()
            .filter(|r| r.ber > 0.0)
            .map(|r| format!("{:.2},{:.2}", sx(r.snr_db), sy(r.ber)))
            .collect();
        if line.len() > 1 {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                line.join(" ")
            );
        }
        for r in pts {
            let (px, py) = (sx(r.snr_db), sy(plotted(r)));
            if r.ber > 0.0 {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="{color}"/>"#
                );
            } else {
                let _ = writeln!(
                    s,
                    r#"<path d="M{:.2},{:.2} L{:.2},{:.2} L{px:.2},{:.2} Z" fill="none" stroke="{color}"/>"#,
                    px - 4.0,
                    py - 3.0,
                    px + 4.0,
                    py - 3.0,
                    py + 4.0
                );
            }
        }
        let ly = top + 20.0 + 20.0 * k as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Path of the plot written alongside `csv_path`.
pub fn svg_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("svg")
}

/// Writes the CSV (to `spec.out` or stdout) and, if requested, the SVG.
pub fn emit_results(points: &[BerPoint], spec: &RunSpec) -> Result<(), OutputError> {
    if points.is_empty() {
        return Err(OutputError::Empty);
    }
    let text = to_csv(points, spec.seed);
    match &spec.out {
        Some(path) => write_file(path, &text)?,
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| OutputError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })?,
    }
    if let (OutputFormat::CsvSvg, Some(path)) = (spec.format, &spec.out) {
        write_file(&svg_path(path), &render_svg(&text)?)?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), OutputError> {
    fs::write(path, text).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}
