//! Contour-enhanced funnel plot: effects against standard errors on an
//! inverted axis, with shaded bands where a study's two-sided p-value
//! crosses the requested significance levels.

use std::fmt::Write;

use copas_core::normal;
use serde::Serialize;

use crate::commands::{emit, write_file, SCHEMA};
use crate::error::{CliError, CliResult};
use crate::input::{read_studies, StudyRecord};
use crate::FunnelArgs;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
/// Band fills from the least to the most significant region.
const SHADES: [&str; 4] = ["#d9d9d9", "#bdbdbd", "#969696", "#737373"];

struct Frame {
    x_lo: f64,
    x_hi: f64,
    s_hi: f64,
}

impl Frame {
    fn px(&self, y: f64) -> f64 {
        MARGIN + (y - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - 2.0 * MARGIN)
    }

    /// s = 0 at the top.
    fn py(&self, s: f64) -> f64 {
        MARGIN + s / self.s_hi * (HEIGHT - 2.0 * MARGIN)
    }
}

/// Nice tick positions covering [lo, hi].
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.3}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Two-sided critical values for the confidence levels, ascending.
fn critical_values(levels: &[f64]) -> CliResult<Vec<f64>> {
    let mut levels = levels.to_vec();
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(CliError::Data(format!(
            "contour level must be in (0,1), got {l}"
        )));
    }
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    Ok(levels
        .iter()
        .map(|l| normal::quantile(0.5 + 0.5 * l))
        .collect())
}

pub fn render_svg(records: &[StudyRecord], levels: &[f64]) -> CliResult<(String, String)> {
    let z = critical_values(levels)?;
    let s_hi = records.iter().map(|r| r.s).fold(0.0, f64::max) * 1.05;
    let z_top = z.last().copied().unwrap_or(1.96);
    let reach = records
        .iter()
        .map(|r| r.y.abs())
        .fold(z_top * s_hi, f64::max)
        * 1.05;
    let frame = Frame {
        x_lo: -reach,
        x_hi: reach,
        s_hi,
    };
    let (left, right) = (MARGIN, WIDTH - MARGIN);
    let (top, bottom) = (MARGIN, HEIGHT - MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r#"<defs><clipPath id="plot"><rect x="{left}" y="{top}" width="{}" height="{}"/></clipPath></defs>"#,
        right - left,
        bottom - top
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="white"/>"#,
        right - left,
        bottom - top
    );

    // Band k lies between critical values z[k] and z[k+1]; the last one is open.
    let _ = writeln!(svg, r#"<g clip-path="url(#plot)">"#);
    let apex = (frame.px(0.0), frame.py(0.0));
    for (k, &za) in z.iter().enumerate() {
        let shade = SHADES[k.min(SHADES.len() - 1)];
        for sign in [-1.0, 1.0] {
            let inner = frame.px(sign * za * s_hi);
            let outer = match z.get(k + 1) {
                Some(&zb) => format!("{:.2},{:.2}", frame.px(sign * zb * s_hi), frame.py(s_hi)),
                None => {
                    let edge = frame.px(sign * reach * 10.0);
                    format!("{edge:.2},{:.2} {edge:.2},{:.2}", apex.1, frame.py(s_hi))
                }
            };
            let _ = writeln!(
                svg,
                r#"<polygon class="contour" data-level="{}" points="{:.2},{:.2} {outer} {inner:.2},{:.2}" fill="{shade}"/>"#,
                fmt_tick(levels_sorted(levels)[k]),
                apex.0,
                apex.1,
                frame.py(s_hi)
            );
        }
    }
    let _ = writeln!(svg, "</g>");

    // Axes with ticks.
    let _ = writeln!(
        svg,
        r#"<g stroke="black" fill="none"><line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}"/></g>"#
    );
    for t in ticks(frame.x_lo, frame.x_hi) {
        let x = frame.px(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{bottom}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            bottom + 5.0,
            bottom + 18.0,
            fmt_tick(t)
        );
    }
    for t in ticks(0.0, s_hi) {
        let y = frame.py(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 5.0,
            left - 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Effect size</text>"#,
        0.5 * (left + right),
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">Standard error</text>"#,
        0.5 * (top + bottom),
        0.5 * (top + bottom)
    );

    let mut csv = csv::Writer::from_writer(Vec::new());
    let encode = |e: csv::Error| CliError::Io(format!("cannot encode CSV: {e}"));
    csv.write_record(["study_id", "y", "s", "x_px", "y_px", "p_value"])
        .map_err(encode)?;
    for r in records {
        let (x, y) = (frame.px(r.y), frame.py(r.s));
        let p = 2.0 * normal::cdf(-(r.y / r.s).abs());
        let _ = writeln!(
            svg,
            r#"<circle class="study" cx="{x:.2}" cy="{y:.2}" r="3.5" fill="black"><title>{}</title></circle>"#,
            escape(&r.study_id)
        );
        csv.write_record([
            r.study_id.clone(),
            r.y.to_string(),
            r.s.to_string(),
            format!("{x:.2}"),
            format!("{y:.2}"),
            p.to_string(),
        ])
        .map_err(encode)?;
    }
    svg.push_str("</svg>\n");
    let csv = String::from_utf8(
        csv.into_inner()
            .map_err(|e| CliError::Io(format!("cannot encode CSV: {e}")))?,
    )
    .expect("CSV of UTF-8 fields");
    Ok((svg, csv))
}

fn levels_sorted(levels: &[f64]) -> Vec<f64> {
    let mut l = levels.to_vec();
    l.sort_by(f64::total_cmp);
    l.dedup();
    l
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Serialize)]
struct FunnelReport {
    schema: u32,
    command: &'static str,
    input: String,
    n_studies: usize,
    contours: Vec<f64>,
    svg: String,
    csv: String,
}

pub fn run(args: &FunnelArgs) -> CliResult<()> {
    let input = read_studies(&args.input)?;
    let (svg, csv) = render_svg(&input.records, &args.contours)?;
    let csv_path = args
        .csv
        .clone()
        .unwrap_or_else(|| args.out.with_extension("csv"));
    write_file(&args.out, svg.as_bytes())?;
    write_file(&csv_path, csv.as_bytes())?;
    emit(
        &FunnelReport {
            schema: SCHEMA,
            command: "funnel",
            input: args.input.display().to_string(),
            n_studies: input.records.len(),
            contours: levels_sorted(&args.contours),
            svg: args.out.display().to_string(),
            csv: csv_path.display().to_string(),
        },
        None,
    )
}
