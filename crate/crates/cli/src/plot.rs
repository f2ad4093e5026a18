//! Hand-written SVG charts. Every chart comes with a CSV holding the
//! numbers it shows, formatted the same way.

use std::fmt::Write as _;

use embeval::analysis::{CorrelationReport, DeltaRow};

use crate::report::{fmt_num, is_similarity_classifier};

const TOP: f64 = 50.0;
const PLOT_H: f64 = 240.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn signed(v: f64) -> String {
    let s = fmt_num(v);
    if s != "0" && !s.starts_with('-') {
        format!("+{s}")
    } else {
        s
    }
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

fn open_svg(width: f64, height: f64, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-size="15" text-anchor="middle">{}</text>"#,
        width / 2.0,
        esc(title)
    );
    s
}

/// Bar chart of normalization deltas. With `scale_similarity`,
/// similarity-task deltas are divided by ten.
pub fn delta_chart(rows: &[DeltaRow], scale_similarity: bool) -> (String, String) {
    let single_task = rows.windows(2).all(|w| w[0].task == w[1].task);
    let bars: Vec<(String, &DeltaRow, f64)> = rows
        .iter()
        .map(|d| {
            let label = if single_task {
                d.encoder.clone()
            } else {
                format!("{} / {}", d.encoder, d.task)
            };
            let value = d.chart_value(is_similarity_classifier(&d.classifier), scale_similarity);
            (label, d, value)
        })
        .collect();

    let step = 64.0;
    let width = 80.0 + step * bars.len().max(1) as f64;
    let height = TOP + PLOT_H + 130.0;
    let title = if scale_similarity {
        "Normalization delta (pp, similarity deltas scaled down tenfold)"
    } else {
        "Normalization delta (pp)"
    };
    let mut svg = open_svg(width, height, title);
    let hi = bars.iter().map(|b| b.2).fold(0.0, f64::max);
    let lo = bars.iter().map(|b| b.2).fold(0.0, f64::min);
    let scale = if hi > lo { PLOT_H / (hi - lo) } else { 0.0 };
    let y0 = TOP + hi * scale;
    let _ = writeln!(
        svg,
        r##"<line x1="40" x2="{}" y1="{y0:.2}" y2="{y0:.2}" stroke="#333"/>"##,
        width - 20.0
    );
    for (i, (label, d, v)) in bars.iter().enumerate() {
        let x = 50.0 + step * i as f64;
        let h = v.abs() * scale;
        let y = if *v >= 0.0 { y0 - h } else { y0 };
        let color = if is_similarity_classifier(&d.classifier) { "#4c72b0" } else { "#dd8452" };
        let _ = writeln!(
            svg,
            r#"<rect class="bar" data-label="{}" x="{x:.2}" y="{y:.2}" width="{:.2}" height="{h:.2}" fill="{color}"/>"#,
            esc(label),
            step - 16.0
        );
        let ty = if *v >= 0.0 { y - 5.0 } else { y + h + 14.0 };
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ty:.2}" font-size="12" text-anchor="middle">{}</text>"#,
            x + (step - 16.0) / 2.0,
            signed(*v)
        );
        let lx = x + (step - 16.0) / 2.0;
        let ly = TOP + PLOT_H + 20.0;
        let _ = writeln!(
            svg,
            r#"<text x="{lx:.2}" y="{ly:.2}" font-size="11" text-anchor="end" transform="rotate(-40 {lx:.2} {ly:.2})">{}</text>"#,
            esc(label)
        );
    }
    svg.push_str("</svg>\n");

    let csv = csv_string(
        &["label", "task", "classifier", "delta_pp", "value"],
        bars.iter()
            .map(|(label, d, v)| {
                vec![
                    label.clone(),
                    d.task.clone(),
                    d.classifier.clone(),
                    fmt_num(d.delta_pp),
                    fmt_num(*v),
                ]
            })
            .collect(),
    );
    (svg, csv)
}

fn heat_color(v: Option<f64>) -> String {
    match v {
        None => "#dddddd".into(),
        Some(v) => {
            let t = v.clamp(-1.0, 1.0);
            let (r, g, b) = if t >= 0.0 {
                (255.0 - 155.0 * t, 255.0 - 120.0 * t, 255.0)
            } else {
                (255.0, 255.0 + 120.0 * t, 255.0 + 155.0 * t)
            };
            format!("rgb({},{},{})", r.round(), g.round(), b.round())
        }
    }
}

/// Transfer × probing correlation heatmap, one cell per task pair.
pub fn heatmap(report: &CorrelationReport) -> (String, String) {
    let cell = 64.0;
    let left = 150.0;
    let top = TOP + 90.0;
    let width = left + cell * report.probing.len() as f64 + 30.0;
    let height = top + cell * report.transfer.len() as f64 + 30.0;
    let mut svg = open_svg(width, height, "Transfer vs probing rank correlation");
    for (j, p) in report.probing.iter().enumerate() {
        let x = left + cell * (j as f64 + 0.5);
        let y = top - 8.0;
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="11" transform="rotate(-45 {x:.2} {y:.2})">{}</text>"#,
            esc(p)
        );
    }
    let mut rows = Vec::new();
    for (i, (t, row)) in report.transfer.iter().zip(&report.cells).enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
            left - 8.0,
            y + cell / 2.0 + 4.0,
            esc(t)
        );
        for (j, (p, v)) in report.probing.iter().zip(row).enumerate() {
            let x = left + cell * j as f64;
            let _ = writeln!(
                svg,
                r##"<rect class="cell" data-transfer="{}" data-probing="{}" x="{x:.2}" y="{y:.2}" width="{cell}" height="{cell}" fill="{}" stroke="#fff"/>"##,
                esc(t),
                esc(p),
                heat_color(*v)
            );
            let text = v.map(fmt_num).unwrap_or_else(|| "n/a".into());
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{text}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
            rows.push(vec![t.clone(), p.clone(), v.map(fmt_num).unwrap_or_default()]);
        }
    }
    svg.push_str("</svg>\n");
    (svg, csv_string(&["transfer", "probing", "spearman"], rows))
}

/// One series of a size-sweep chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    /// `sweep` (a curve over sizes) or `reference` (a single encoder).
    pub kind: String,
    pub name: String,
    pub points: Vec<(usize, f64)>,
}

const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

/// Mean accuracy against embedding size. Sizes sit at evenly spaced
/// positions; reference encoders are dashed horizontal lines.
pub fn sweep_chart(title: &str, series: &[Series]) -> (String, String) {
    let mut sizes: Vec<usize> = series
        .iter()
        .filter(|s| s.kind == "sweep")
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    sizes.sort_unstable();
    sizes.dedup();
    let scores: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.01 };
    let (lo, hi) = (lo - pad, hi + pad);

    let left = 60.0;
    let plot_w = 80.0 * sizes.len().max(2) as f64;
    let width = left + plot_w + 200.0;
    let height = TOP + PLOT_H + 70.0;
    let mut svg = open_svg(width, height, title);
    let xpos = |size: usize| {
        let i = sizes.iter().position(|&s| s == size).unwrap_or(0) as f64;
        left + 20.0 + i * (plot_w - 40.0) / (sizes.len().max(2) - 1) as f64
    };
    let ypos = |v: f64| TOP + PLOT_H - (v - lo) / (hi - lo) * PLOT_H;
    let _ = writeln!(
        svg,
        r##"<rect x="{left}" y="{TOP}" width="{plot_w}" height="{PLOT_H}" fill="none" stroke="#333"/>"##
    );
    for &s in &sizes {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{s}</text>"#,
            xpos(s),
            TOP + PLOT_H + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">embedding size</text>"#,
        left + plot_w / 2.0,
        TOP + PLOT_H + 40.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 18 {:.2})">mean accuracy</text>"#,
        TOP + PLOT_H / 2.0,
        TOP + PLOT_H / 2.0
    );
    let mut rows = Vec::new();
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if s.kind == "sweep" {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(size, v)| format!("{:.2},{:.2}", xpos(size), ypos(v)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="series" data-series="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                esc(&s.name),
                pts.join(" ")
            );
            for &(size, v) in &s.points {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    xpos(size),
                    ypos(v)
                );
            }
        } else if let Some(&(_, v)) = s.points.first() {
            let _ = writeln!(
                svg,
                r#"<line class="reference" data-series="{}" x1="{left}" x2="{}" y1="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="6 4"/>"#,
                esc(&s.name),
                left + plot_w,
                ypos(v),
                ypos(v)
            );
        }
        let ly = TOP + 14.0 + 18.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}" font-size="11" fill="{color}">{}</text>"#,
            left + plot_w + 12.0,
            esc(&s.name)
        );
        for &(size, v) in &s.points {
            rows.push(vec![s.kind.clone(), s.name.clone(), size.to_string(), fmt_num(v)]);
        }
    }
    svg.push_str("</svg>\n");
    (svg, csv_string(&["kind", "series", "size", "mean_score"], rows))
}
