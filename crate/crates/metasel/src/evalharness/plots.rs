//! SVG plots emitted next to the report: pooled ROC curves for the four
//! methods, and the shape-vs-texture output agreement scatter.

use std::fmt::Write;

use super::{EvaluationReport, SampleRecord};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 520.0;
const MARGIN: f64 = 60.0;

struct Frame {
    svg: String,
}

impl Frame {
    fn new(title: &str, x_label: &str, y_label: &str) -> Frame {
        let mut svg = String::new();
        let _ = write!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{:.1}" y="28" font-family="sans-serif" font-size="17" text-anchor="middle">{title}</text>
"#,
            WIDTH / 2.0
        );
        let (x0, y0, x1, y1) = plot_box();
        let _ = write!(
            svg,
            r#"<rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black" stroke-width="1"/>
"#,
            x1 - x0,
            y0 - y1
        );
        for i in 0..=5 {
            let t = i as f64 / 5.0;
            let px = x0 + t * (x1 - x0);
            let py = y0 - t * (y0 - y1);
            let _ = write!(
                svg,
                r#"<line x1="{px:.1}" y1="{y0:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/>
<text x="{px:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{t:.1}</text>
<line x1="{x0:.1}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="black"/>
<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{t:.1}</text>
"#,
                y0 + 5.0,
                y0 + 18.0,
                x0 - 5.0,
                x0 - 8.0,
                py + 4.0
            );
        }
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">{x_label}</text>
<text x="18" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.1})">{y_label}</text>
"#,
            (x0 + x1) / 2.0,
            y0 + 40.0,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0
        );
        Frame { svg }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn plot_box() -> (f64, f64, f64, f64) {
    // (x0, y0, x1, y1) with y0 = bottom (data 0), y1 = top (data 1)
    (MARGIN, HEIGHT - MARGIN, WIDTH - 30.0, 50.0)
}

fn to_px(x: f64, y: f64) -> (f64, f64) {
    let (x0, y0, x1, y1) = plot_box();
    (x0 + x * (x1 - x0), y0 - y * (y0 - y1))
}

const METHOD_COLORS: [(&str, &str); 4] = [
    ("GLCM", "#d62728"),
    ("Morphological", "#1f77b4"),
    ("Meta-learning", "#2ca02c"),
    ("Oracle", "#7f7f7f"),
];

/// Stepwise ROC polyline points for one score column.
fn roc_points(records: &[&SampleRecord], get: fn(&SampleRecord) -> f64) -> Vec<(f64, f64)> {
    let n_pos = records.iter().filter(|r| r.label == 1).count();
    let n_neg = records.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return vec![(0.0, 0.0), (1.0, 1.0)];
    }
    let mut scored: Vec<(f64, u8)> = records.iter().map(|r| (get(r), r.label)).collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        while j < scored.len() && scored[j].0 == scored[i].0 {
            if scored[j].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        i = j;
    }
    points
}

/// Pooled ROC curves of the four methods.
pub fn roc_svg(report: &EvaluationReport) -> String {
    let records: Vec<&SampleRecord> = report.all_records().map(|(_, r)| r).collect();
    let mut frame = Frame::new(
        "ROC, pooled over test folds",
        "false positive rate",
        "true positive rate",
    );

    let (dx0, dy0) = to_px(0.0, 0.0);
    let (dx1, dy1) = to_px(1.0, 1.0);
    let _ = write!(
        frame.svg,
        r##"<line x1="{dx0:.1}" y1="{dy0:.1}" x2="{dx1:.1}" y2="{dy1:.1}" stroke="#bbbbbb" stroke-dasharray="4 4"/>
"##
    );

    let getters: [fn(&SampleRecord) -> f64; 4] = [
        |r| r.p_texture,
        |r| r.p_shape,
        |r| r.p_meta,
        |r| r.p_oracle,
    ];
    let aucs = [
        report.pooled.glcm.auc,
        report.pooled.morphological.auc,
        report.pooled.meta_learning.auc,
        report.pooled.oracle.auc,
    ];
    for (k, ((name, color), get)) in METHOD_COLORS.iter().zip(getters).enumerate() {
        let pts = roc_points(&records, get);
        let path: String = pts
            .iter()
            .map(|&(x, y)| {
                let (px, py) = to_px(x, y);
                format!("{px:.1},{py:.1}")
            })
            .collect::<Vec<_>>()
            .join(" ");
        let _ = write!(
            frame.svg,
            r#"<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.8"/>
"#
        );
        let ly = 70.0 + 18.0 * k as f64;
        let _ = write!(
            frame.svg,
            r#"<line x1="{0:.1}" y1="{ly:.1}" x2="{1:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/>
<text x="{2:.1}" y="{3:.1}" font-family="sans-serif" font-size="12">{name} (AUC {4:.3})</text>
"#,
            MARGIN + 16.0,
            MARGIN + 40.0,
            MARGIN + 46.0,
            ly + 4.0,
            aucs[k]
        );
    }
    frame.finish()
}

/// Shape-vs-texture probability scatter, pooled over test folds.
pub fn agreement_svg(report: &EvaluationReport) -> String {
    let mut frame = Frame::new(
        "Classifier output agreement",
        "shape classifier probability",
        "texture classifier probability",
    );
    let (dx0, dy0) = to_px(0.0, 0.0);
    let (dx1, dy1) = to_px(1.0, 1.0);
    let _ = write!(
        frame.svg,
        r##"<line x1="{dx0:.1}" y1="{dy0:.1}" x2="{dx1:.1}" y2="{dy1:.1}" stroke="#bbbbbb" stroke-dasharray="4 4"/>
"##
    );
    for (_, r) in report.all_records() {
        let (px, py) = to_px(r.p_shape, r.p_texture);
        let color = if r.label == 1 { "#d62728" } else { "#1f77b4" };
        let _ = write!(
            frame.svg,
            r#"<circle cx="{px:.1}" cy="{py:.1}" r="2.6" fill="{color}" fill-opacity="0.55"/>
"#
        );
    }
    if let Some(corr) = report.output_correlation {
        let _ = write!(
            frame.svg,
            r#"<text x="{:.1}" y="70" font-family="sans-serif" font-size="12">correlation {corr:.3}</text>
"#,
            MARGIN + 16.0
        );
    }
    let legend = [("malignant", "#d62728"), ("benign", "#1f77b4")];
    for (k, (name, color)) in legend.iter().enumerate() {
        let ly = 90.0 + 18.0 * k as f64;
        let _ = write!(
            frame.svg,
            r#"<circle cx="{0:.1}" cy="{ly:.1}" r="4" fill="{color}"/>
<text x="{1:.1}" y="{2:.1}" font-family="sans-serif" font-size="12">{name}</text>
"#,
            MARGIN + 20.0,
            MARGIN + 32.0,
            ly + 4.0
        );
    }
    frame.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalharness::{run_experiment, ExperimentConfig};
    use crate::synthgen::{generate_samples, GenConfig};

    #[test]
    fn svgs_are_well_formed_and_deterministic() {
        let samples: Vec<_> = generate_samples(&GenConfig {
            count: 16,
            image_size: 64,
            ..Default::default()
        })
        .unwrap()
        .into_iter()
        .map(|(s, _)| s)
        .collect();
        let report = run_experiment(
            &samples,
            &ExperimentConfig {
                fold_count: 2,
                patch_size: 32,
                ..Default::default()
            },
        )
        .unwrap();

        let roc = roc_svg(&report);
        assert!(roc.starts_with("<svg"));
        assert!(roc.ends_with("</svg>\n"));
        assert!(roc.contains("Meta-learning"));
        assert_eq!(roc, roc_svg(&report));

        let agreement = agreement_svg(&report);
        assert!(agreement.contains("circle"));
        assert!(agreement.contains("correlation"));
    }
}
