//! Report serialization: JSON, CSV and an SVG with PR and F1 curves.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Svg];

    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Json => "report.json",
            ReportFormat::Csv => "report.csv",
            ReportFormat::Svg => "report.svg",
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// One row per (class, IoU threshold), then summary rows whose `class_id`
/// column reads `summary` and whose `class_name` column names the metric.
pub fn report_csv(r: &EvalReport) -> String {
    let mut s = String::from("class_id,class_name,iou,ap,ap_all_point,n_gt,n_det\n");
    for c in &r.classes {
        for (i, t) in r.iou_thresholds.iter().enumerate() {
            writeln!(
                s,
                "{},{},{t},{},{},{},{}",
                c.class_id,
                c.name.replace(',', ";"),
                opt(c.ap[i]),
                opt(c.ap_all_point[i]),
                c.n_gt,
                c.n_det
            )
            .expect("string write");
        }
    }
    let mut summary = vec![
        ("mAP50".to_string(), r.map50),
        ("mAP50_95".to_string(), r.map50_95),
        ("AP95".to_string(), r.ap95),
        ("mAP50_all_point".to_string(), r.map50_all_point),
        ("mean_tp_iou".to_string(), r.mean_tp_iou),
    ];
    for p in &r.operating_points {
        summary.push((format!("precision@{}", p.confidence), p.precision));
        summary.push((format!("recall@{}", p.confidence), p.recall));
        summary.push((format!("f1@{}", p.confidence), p.f1));
    }
    for (name, v) in summary {
        writeln!(s, "summary,{name},,{v},,,").expect("string write");
    }
    s
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn polyline(points: &[(f64, f64)], x0: f64, y0: f64, size: f64, color: &str) -> String {
    let pts: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{:.2},{:.2}", x0 + x * size, y0 + (1.0 - y) * size))
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        pts.join(" ")
    )
}

fn axes(s: &mut String, x0: f64, y0: f64, size: f64, title: &str, xl: &str, yl: &str) {
    writeln!(
        s,
        "<rect x=\"{x0}\" y=\"{y0}\" width=\"{size}\" height=\"{size}\" fill=\"none\" stroke=\"#444\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{title}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{xl}</text>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"11\">{yl}</text>",
        x0 + size / 2.0,
        y0 - 8.0,
        x0 + size / 2.0,
        y0 + size + 18.0,
        x0 - 30.0,
        y0 - 8.0,
    )
    .expect("string write");
}

/// PR curves per class at IoU 0.5 (left) and micro F1 against the
/// configured confidence thresholds (right).
pub fn report_svg(r: &EvalReport) -> String {
    let (size, pad) = (300.0, 50.0);
    let width = 2.0 * size + 3.0 * pad + 120.0;
    let height = size + 2.0 * pad;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"13\">\n"
    );
    axes(&mut s, pad, pad, size, "Precision-recall (IoU 0.5)", "recall", "precision");
    for (i, c) in r.classes.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = c
            .pr_curve_50
            .recall
            .iter()
            .copied()
            .zip(c.pr_curve_50.precision.iter().copied())
            .collect();
        if !pts.is_empty() {
            s.push_str(&polyline(&pts, pad, pad, size, color));
        }
        writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\" font-size=\"11\">{} (AP50 {})</text>",
            2.0 * size + 3.0 * pad,
            pad + 14.0 * (i as f64 + 1.0),
            c.name,
            c.ap50.map_or("n/a".into(), |a| format!("{a:.3}"))
        )
        .expect("string write");
    }
    let x1 = 2.0 * pad + size;
    axes(&mut s, x1, pad, size, "F1 vs confidence", "confidence", "F1");
    let f1: Vec<(f64, f64)> = r.operating_points.iter().map(|p| (p.confidence, p.f1)).collect();
    if !f1.is_empty() {
        s.push_str(&polyline(&f1, x1, pad, size, "#000"));
        for (x, y) in &f1 {
            writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\"/>",
                x1 + x * size,
                pad + (1.0 - y) * size
            )
            .expect("string write");
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the requested formats into `dir` (created if needed).
pub fn report_emit(r: &EvalReport, dir: &Path, formats: &[ReportFormat]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in formats {
        let body = match f {
            ReportFormat::Json => {
                let mut s = serde_json::to_string_pretty(r)?;
                s.push('\n');
                s
            }
            ReportFormat::Csv => report_csv(r),
            ReportFormat::Svg => report_svg(r),
        };
        let path = dir.join(f.file_name());
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
