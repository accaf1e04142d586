use std::fmt::Write as _;
use std::io::Write;

use super::{StatsTable, SweepPoint};
use crate::error::Result;

fn csv_err(e: csv::Error) -> crate::error::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => std::io::Error::other(format!("{other:?}")).into(),
    }
}

/// `tau,tp,fp,fn,tn,accuracy,f_score`, one row per point.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau", "tp", "fp", "fn", "tn", "accuracy", "f_score"])
        .map_err(csv_err)?;
    for p in points {
        let c = p.confusion;
        w.write_record([
            format!("{}", p.tau),
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.tn.to_string(),
            format!("{:.6}", p.accuracy),
            format!("{:.6}", p.f_score),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `scribe,occurrences,columns,occ_per_column,mean_confidence`, with a
/// final `total` row.
pub fn write_stats_csv<W: Write>(table: &StatsTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scribe", "occurrences", "columns", "occ_per_column", "mean_confidence"])
        .map_err(csv_err)?;
    let rows = table
        .rows
        .iter()
        .map(|r| {
            (
                r.scribe.to_string(),
                r.occurrences,
                r.columns,
                r.occ_per_column,
                r.mean_confidence,
            )
        })
        .chain(std::iter::once((
            "total".to_string(),
            table.total.occurrences,
            table.total.columns,
            table.total.occ_per_column,
            table.total.mean_confidence,
        )));
    for (scribe, occ, cols, ratio, conf) in rows {
        w.write_record([
            scribe,
            occ.to_string(),
            cols.to_string(),
            format!("{ratio:.2}"),
            format!("{conf:.4}"),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Accuracy and F-score against threshold as a standalone SVG line chart.
pub fn render_sweep_svg(points: &[SweepPoint]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const L: f64 = 60.0;
    const R: f64 = 20.0;
    const T: f64 = 30.0;
    const B: f64 = 50.0;
    let (t0, t1) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.tau), hi.max(p.tau))
    });
    let (t0, t1) = if points.is_empty() {
        (0.0, 1.0)
    } else if t1 > t0 {
        (t0, t1)
    } else {
        (t0 - 0.005, t0 + 0.005)
    };
    let sx = |t: f64| L + (t - t0) / (t1 - t0) * (W - L - R);
    let sy = |v: f64| H - B - v * (H - T - B);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    for k in 0..=10 {
        let v = k as f64 / 10.0;
        let y = sy(v);
        let _ = writeln!(
            s,
            r##"<line x1="{L}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{:.0}</text>"##,
            W - R,
            L - 6.0,
            y + 4.0,
            v * 100.0
        );
    }
    for p in points {
        let x = sx(p.tau);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{:.2}</text>"#,
            H - B + 18.0,
            p.tau
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{L}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/><line x1="{L}" y1="{T}" x2="{L}" y2="{:.1}" stroke="black"/>"#,
        H - B,
        W - R,
        H - B,
        H - B
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">confidence threshold</text><text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">%</text>"#,
        (L + W - R) / 2.0,
        H - 12.0,
        H / 2.0,
        H / 2.0
    );
    for (name, color, pick, ly) in [
        (
            "accuracy",
            "#1f77b4",
            (|p: &SweepPoint| p.accuracy) as fn(&SweepPoint) -> f64,
            T,
        ),
        ("F-score", "#d62728", |p: &SweepPoint| p.f_score, T + 16.0),
    ] {
        let pts: Vec<String> = points
            .iter()
            .map(|p| format!("{:.1},{:.1}", sx(p.tau), sy(pick(p))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        for p in points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                sx(p.tau),
                sy(pick(p))
            );
        }
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{name}</text>"#,
            W - R - 110.0,
            W - R - 90.0,
            W - R - 84.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}
