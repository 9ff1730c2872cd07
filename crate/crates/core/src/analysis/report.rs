use std::fmt::Write as _;
use std::path::Path;

use super::{BoundingBox, CorrelationReport, PcaModel};
use crate::dataset::format_float;
use crate::io::parse_error;
use crate::{Error, Result};

fn finish<W: std::io::Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// `rank,feature,class,r,abs_r,status`; undefined features come last with
/// empty rank and r.
pub fn write_ranking_csv(path: &Path, report: &CorrelationReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| parse_error(path, e))?;
    let wrap = |e| parse_error(path, e);
    w.write_record(["rank", "feature", "class", "r", "abs_r", "status"]).map_err(wrap)?;
    for (i, f) in report.ranking.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            f.feature.clone(),
            f.class.clone(),
            format_float(f.r),
            format_float(f.r.abs()),
            "defined".into(),
        ])
        .map_err(wrap)?;
    }
    for name in &report.undefined {
        let class = super::class_of(name);
        w.write_record(["", name, &class, "", "", "undefined"]).map_err(wrap)?;
    }
    finish(w, path)
}

/// `class,count,min,q1,median,q3,max` over |r|.
pub fn write_class_summary_csv(path: &Path, report: &CorrelationReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| parse_error(path, e))?;
    let wrap = |e| parse_error(path, e);
    w.write_record(["class", "count", "min", "q1", "median", "q3", "max"]).map_err(wrap)?;
    for c in &report.classes {
        let mut rec = vec![c.class.clone(), c.count.to_string()];
        rec.extend([c.min, c.q1, c.median, c.q3, c.max].map(format_float));
        w.write_record(&rec).map_err(wrap)?;
    }
    finish(w, path)
}

/// `run,label,pc1..pck`.
pub fn write_projection_csv(path: &Path, runs: &[usize], labels: &[u8], points: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| parse_error(path, e))?;
    let wrap = |e| parse_error(path, e);
    let k = points.first().map_or(0, Vec::len);
    let mut header = vec!["run".to_string(), "label".to_string()];
    header.extend((1..=k).map(|i| format!("pc{i}")));
    w.write_record(&header).map_err(wrap)?;
    for ((run, label), p) in runs.iter().zip(labels).zip(points) {
        let mut rec = vec![run.to_string(), label.to_string()];
        rec.extend(p.iter().map(|&v| format_float(v)));
        w.write_record(&rec).map_err(wrap)?;
    }
    finish(w, path)
}

/// `component,eigenvalue,explained_ratio,degenerate,<feature loadings...>`.
pub fn write_components_csv(path: &Path, model: &PcaModel, feature_names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| parse_error(path, e))?;
    let wrap = |e| parse_error(path, e);
    let mut header: Vec<String> = ["component", "eigenvalue", "explained_ratio", "degenerate"]
        .map(String::from)
        .to_vec();
    header.extend(feature_names.iter().cloned());
    w.write_record(&header).map_err(wrap)?;
    let ratio = model.explained_ratio();
    for (i, v) in model.components.iter().enumerate() {
        let mut rec = vec![
            format!("pc{}", i + 1),
            format_float(model.eigenvalues[i]),
            format_float(ratio[i]),
            model.degenerate[i].to_string(),
        ];
        rec.extend(v.iter().map(|&a| format_float(a)));
        w.write_record(&rec).map_err(wrap)?;
    }
    finish(w, path)
}

/// PC1/PC2 scatter, benign in blue and faulty in red, with an optional
/// dashed region outline.
pub fn scatter_svg(points: &[[f64; 2]], labels: &[u8], region: Option<&BoundingBox>, title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const PAD: f64 = 48.0;
    let mut all: Vec<[f64; 2]> = points.to_vec();
    if let Some(r) = region {
        all.push([r.x_min, r.y_min]);
        all.push([r.x_max, r.y_max]);
    }
    let b = BoundingBox::of(all).unwrap_or(BoundingBox { x_min: -1.0, x_max: 1.0, y_min: -1.0, y_max: 1.0 });
    let span_x = (b.x_max - b.x_min).max(1e-12);
    let span_y = (b.y_max - b.y_min).max(1e-12);
    let sx = |x: f64| PAD + (x - b.x_min) / span_x * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - b.y_min) / span_y * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(s, r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#, W - 2.0 * PAD, H - 2.0 * PAD);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">PC1</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(s, r#"<text x="14" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {})">PC2</text>"#, H / 2.0, H / 2.0);
    if let Some(r) = region {
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="gray" stroke-dasharray="6 4"/>"#,
            sx(r.x_min),
            sy(r.y_max),
            sx(r.x_max) - sx(r.x_min),
            sy(r.y_min) - sy(r.y_max)
        );
    }
    // Benign first so faulty points stay visible on top.
    for want in [0u8, 1] {
        let color = if want == 0 { "#1f77b4" } else { "#d62728" };
        for (p, &l) in points.iter().zip(labels) {
            if l == want {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}" fill-opacity="0.6"/>"#, sx(p[0]), sy(p[1]));
            }
        }
    }
    let _ = writeln!(s, r##"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="#1f77b4">benign</text>"##, W - PAD - 90.0, PAD + 16.0);
    let _ = writeln!(s, r##"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="#d62728">faulty</text>"##, W - PAD - 40.0, PAD + 16.0);
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
