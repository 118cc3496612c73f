use std::path::PathBuf;

use sensolab_core::conjoint::{EffectPlot, EffectPoint, EffectSeries};
use sensolab_core::latent::{PlotPayload, RING_RADII};
use sensolab_core::summary::{BoxSummary, HistogramTable};
use sensolab_core::svg;
use sensolab_core::table::LabeledMatrix;

/// Compare against `tests/golden/<name>`; set `UPDATE_GOLDEN=1` to rewrite.
fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() || !path.exists() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(expected, actual, "golden mismatch for {name}");
}

fn matrix(rows: &[&str], cols: &[&str], values: &[[f64; 2]]) -> LabeledMatrix {
    LabeledMatrix {
        row_labels: rows.iter().map(|s| s.to_string()).collect(),
        col_labels: cols.iter().map(|s| s.to_string()).collect(),
        values: values.iter().map(|r| r.to_vec()).collect(),
    }
}

fn corr_payload() -> PlotPayload {
    PlotPayload::CorrLoadings {
        x: matrix(&["Sweet", "Sour", "Crisp"], &["PC1", "PC2"], &[[0.9, 0.1], [-0.8, 0.3], [0.2, -0.95]]),
        y: None,
        x_explained: vec![0.82, 0.73, 0.94],
        y_explained: vec![],
        ring_radii: RING_RADII,
    }
}

fn circle_radii(svg: &str) -> Vec<f64> {
    svg.lines()
        .filter(|l| l.starts_with("<circle") && l.contains("fill=\"none\""))
        .map(|l| {
            let start = l.find(" r=\"").unwrap() + 4;
            l[start..].split('"').next().unwrap().parse().unwrap()
        })
        .collect()
}

#[test]
fn correlation_loadings_draws_both_rings() {
    let s = svg::render_latent(&corr_payload());
    let radii = circle_radii(&s);
    assert_eq!(radii.len(), 2);
    // Inner ring at sqrt(0.5) of the outer ring, up to the 2-decimal rounding.
    assert!((radii[0] / radii[1] - 0.5f64.sqrt()).abs() < 1e-3);
    for label in ["Sweet", "Sour", "Crisp", "PC1", "PC2"] {
        assert!(s.contains(label), "missing {label}");
    }
    golden("corr_loadings.svg", &s);
}

#[test]
fn scores_and_explvar_are_stable() {
    let scores = PlotPayload::Scores {
        scores: matrix(&["A", "B", "C & D"], &["PC1", "PC2"], &[[-2.0, 0.5], [0.3, -1.2], [1.7, 0.7]]),
        explvar_x: vec![60.0, 90.0],
    };
    let s = svg::render_latent(&scores);
    assert!(s.contains("C &amp; D"));
    assert_eq!(s, svg::render_latent(&scores));
    golden("scores.svg", &s);

    let explvar = PlotPayload::Explvar {
        components: vec![1, 2, 3],
        calibrated_x: vec![50.0, 75.0, 90.0],
        validated_x: Some(vec![40.0, 60.0, 70.0]),
        calibrated_y: vec![],
        validated_y: None,
    };
    let s = svg::render_latent(&explvar);
    assert_eq!(s.matches("<polyline").count(), 2);
    golden("explvar.svg", &s);
}

#[test]
fn summary_charts() {
    let stats = vec![
        BoxSummary { series_label: "P1".into(), min: 1.0, q25: 3.0, median: 5.0, q75: 6.0, max: 9.0 },
        BoxSummary { series_label: "P2".into(), min: 2.0, q25: 4.0, median: 4.5, q75: 7.0, max: 8.0 },
    ];
    let s = svg::render_box(&stats);
    golden("box.svg", &s);

    let h = HistogramTable {
        series_labels: vec!["P1".into(), "P2".into()],
        bin_values: vec![1, 2, 3],
        counts: vec![vec![1, 2, 1], vec![0, 3, 1]],
        percents: vec![vec![25.0, 50.0, 25.0], vec![0.0, 75.0, 25.0]],
        as_percent: false,
    };
    golden("histogram.svg", &svg::render_histogram(&h, false));
    let stacked = svg::render_histogram(&h, true);
    // 2 series × 3 bins of bars plus the legend swatches.
    assert_eq!(stacked.matches("stroke-width=\"0.5\"").count(), 6 + 3);
    golden("stacked.svg", &stacked);
}

fn point(level: &str, estimate: f64) -> EffectPoint {
    EffectPoint { level: level.into(), estimate, lower: estimate - 0.5, upper: estimate + 0.5 }
}

#[test]
fn effect_plots() {
    let main = EffectPlot::Main { term: "Product".into(), points: vec![point("1", 5.0), point("2", 6.2)] };
    golden("main_effect.svg", &svg::render_effect(&main));

    let inter = EffectPlot::Interaction {
        term: "Information:Product".into(),
        x_factor: "Information".into(),
        series_factor: "Product".into(),
        series: vec![
            EffectSeries { level: "1".into(), points: vec![point("1", 5.0), point("2", 5.5)] },
            EffectSeries { level: "2".into(), points: vec![point("1", 6.0), point("2", 4.8)] },
        ],
    };
    let s = svg::render_effect(&inter);
    assert!(s.contains("Product 1") && s.contains("Product 2"));
    assert_eq!(s.matches("<polyline").count(), 2);
    golden("interaction.svg", &s);
}

#[test]
fn sector_wedges_show_counts() {
    let pts = matrix(&["C1", "C2", "C3"], &["PC1", "PC2"], &[[1.0, 0.2], [-0.5, 0.5], [0.1, -0.9]]);
    let b: Vec<f64> = (0..4).map(|k| k as f64 * std::f64::consts::FRAC_PI_2).collect();
    let s = svg::render_sectors(&pts, &b, &[1, 1, 0, 1]);
    golden("sectors.svg", &s);
}
