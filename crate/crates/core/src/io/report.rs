//! CSV and SVG output for sweeps and ablations.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::eval::{AblationRow, IntervalReport};
use crate::types::Scheme;

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

fn offset_header(width: usize) -> impl Iterator<Item = String> {
    (0..width).map(|o| format!("offset_{o}"))
}

/// Columns `scheme, interval, miou_avg, miou_min, fps, offset_0, ...`;
/// rows with fewer offsets leave the trailing cells empty.
pub fn write_sweep_csv<W: Write>(out: W, reports: &[IntervalReport]) -> Result<()> {
    let width = reports
        .iter()
        .map(|r| r.per_offset_miou.len())
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["scheme", "interval", "miou_avg", "miou_min", "fps"]
        .map(String::from)
        .to_vec();
    header.extend(offset_header(width));
    w.write_record(&header).map_err(csv_err)?;
    for r in reports {
        let mut row = vec![
            r.scheme.name().to_string(),
            r.keyframe_interval.to_string(),
            format!("{:.4}", r.miou_avg),
            format!("{:.4}", r.miou_min),
            format!("{:.2}", r.throughput),
        ];
        row.extend(r.per_offset_miou.iter().map(|v| format!("{v:.4}")));
        row.resize(header.len(), String::new());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
}

pub fn write_ablation_csv<W: Write>(out: W, rows: &[AblationRow]) -> Result<()> {
    let width = rows
        .iter()
        .map(|r| r.per_offset_miou.len())
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["variant".to_string(), "miou_avg".to_string()];
    header.extend(offset_header(width));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut row = vec![r.variant.clone(), format!("{:.4}", r.miou_avg)];
        row.extend(r.per_offset_miou.iter().map(|v| format!("{v:.4}")));
        row.resize(header.len(), String::new());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
}

fn color(scheme: Scheme) -> &'static str {
    match scheme {
        Scheme::Baseline => "#555555",
        Scheme::Prop => "#d95f02",
        Scheme::Inter => "#1b9e77",
    }
}

/// Line plot of average and minimum mIoU against keyframe interval, one
/// pair of lines per scheme (minimum dashed).
pub fn sweep_svg(reports: &[IntervalReport]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    let max_n = reports
        .iter()
        .map(|r| r.keyframe_interval)
        .max()
        .unwrap_or(1)
        .max(2) as f64;
    let lo = reports
        .iter()
        .map(|r| r.miou_min)
        .fold(f64::INFINITY, f64::min)
        .min(100.0)
        .floor();
    let lo = if lo.is_finite() {
        (lo - 1.0).max(0.0)
    } else {
        0.0
    };
    let hi = reports
        .iter()
        .map(|r| r.miou_avg)
        .fold(f64::NEG_INFINITY, f64::max)
        .ceil()
        .clamp(lo + 1.0, 100.0);
    let x = |n: usize| PAD + (n as f64 - 1.0) / (max_n - 1.0) * (W - 2.0 * PAD);
    let y = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{PAD},{PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    for n in 1..=max_n as usize {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{n}</text>"#,
            x(n),
            H - PAD + 16.0
        );
    }
    for v in [lo, (lo + hi) / 2.0, hi] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.1}</text>"#,
            PAD - 6.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">keyframe interval</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">mIoU (%)</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (row, scheme) in Scheme::ALL.into_iter().enumerate() {
        let mut pts: Vec<&IntervalReport> = reports.iter().filter(|r| r.scheme == scheme).collect();
        if pts.is_empty() {
            continue;
        }
        pts.sort_by_key(|r| r.keyframe_interval);
        for (dash, value) in [
            (
                "",
                (|r: &IntervalReport| r.miou_avg) as fn(&IntervalReport) -> f64,
            ),
            (r#" stroke-dasharray="4 3""#, |r| r.miou_min),
        ] {
            let points: Vec<String> = pts
                .iter()
                .map(|r| format!("{:.1},{:.1}", x(r.keyframe_interval), y(value(r))))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"#,
                points.join(" "),
                color(scheme)
            );
        }
        let ly = PAD + 16.0 * row as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{}">{}</text>"#,
            W - PAD - 60.0,
            color(scheme),
            scheme.name()
        );
    }
    s.push_str("</svg>\n");
    s
}
