//! Deterministic SVG rendering of plot payloads.
//!
//! Every renderer returns a complete standalone document. Coordinates are
//! written with two decimals so the same payload always yields the same
//! bytes.

use std::fmt::Write;

use crate::conjoint::{EffectPlot, EffectPoint};
use crate::inddiff::ColoredPoints;
use crate::latent::PlotPayload;
use crate::summary::{BoxSummary, HistogramTable};
use crate::table::LabeledMatrix;

const WIDTH: f64 = 560.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 48.0;

const X_COLOR: &str = "#1f77b4";
const Y_COLOR: &str = "#d62728";
const SERIES: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Two-decimal coordinate with negative zero folded to zero.
fn n(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Short tick label: up to three significant decimals, trailing zeros cut.
fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.into_iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Range { lo: 0.0, hi: 1.0 };
        }
        Range { lo, hi }.padded()
    }

    fn fixed(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    fn padded(self) -> Self {
        let span = self.hi - self.lo;
        if span <= 0.0 {
            let pad = if self.lo == 0.0 { 1.0 } else { self.lo.abs() * 0.1 };
            return Range { lo: self.lo - pad, hi: self.hi + pad };
        }
        Range { lo: self.lo - 0.05 * span, hi: self.hi + 0.05 * span }
    }

    fn include_zero(self) -> Self {
        Range { lo: self.lo.min(0.0), hi: self.hi.max(0.0) }
    }

    /// Roughly five round tick positions inside the range.
    fn ticks(self) -> Vec<f64> {
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let mut t = (self.lo / step).ceil() * step;
        let mut out = Vec::new();
        while t <= self.hi + step * 1e-9 {
            out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
            t += step;
        }
        out
    }
}

struct Frame {
    x: Range,
    y: Range,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
}

impl Frame {
    fn new(x: Range, y: Range) -> Self {
        Frame {
            x,
            y,
            left: MARGIN_LEFT,
            right: WIDTH - MARGIN_RIGHT,
            top: MARGIN_TOP,
            bottom: HEIGHT - MARGIN_BOTTOM,
        }
    }

    /// Frame with equal data-per-pixel on both axes, as needed for circles.
    fn square(r: Range) -> Self {
        let side = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT).min(HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);
        Frame {
            x: r,
            y: r,
            left: MARGIN_LEFT,
            right: MARGIN_LEFT + side,
            top: MARGIN_TOP,
            bottom: MARGIN_TOP + side,
        }
    }

    fn px(&self, v: f64) -> f64 {
        self.left + (v - self.x.lo) / (self.x.hi - self.x.lo) * (self.right - self.left)
    }

    fn py(&self, v: f64) -> f64 {
        self.bottom - (v - self.y.lo) / (self.y.hi - self.y.lo) * (self.bottom - self.top)
    }

    fn scale_x(&self) -> f64 {
        (self.right - self.left) / (self.x.hi - self.x.lo)
    }
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(title: &str) -> Self {
        let mut s = Svg { body: String::new() };
        let _ = write!(
            s.body,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n\
             <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            w = WIDTH,
            h = HEIGHT
        );
        s.text(WIDTH / 2.0, 20.0, "middle", title, Some("bold"));
        s
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, extra: &str) {
        let _ = writeln!(
            self.body,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\"{extra}/>",
            n(x1),
            n(y1),
            n(x2),
            n(y2)
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str, weight: Option<&str>) {
        let w = weight.map(|w| format!(" font-weight=\"{w}\"")).unwrap_or_default();
        let _ = writeln!(
            self.body,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\"{w}>{}</text>",
            n(x),
            n(y),
            escape(s)
        );
    }

    fn colored_text(&mut self, x: f64, y: f64, s: &str, fill: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{}\" y=\"{}\" fill=\"{fill}\">{}</text>",
            n(x),
            n(y),
            escape(s)
        );
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, stroke: &str, fill: &str, extra: &str) {
        let _ = writeln!(
            self.body,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" stroke=\"{stroke}\" fill=\"{fill}\"{extra}/>",
            n(cx),
            n(cy),
            n(r)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\" stroke=\"black\" stroke-width=\"0.5\"/>",
            n(x),
            n(y),
            n(w.max(0.0)),
            n(h.max(0.0))
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, extra: &str) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{},{}", n(*x), n(*y))).collect();
        let _ = writeln!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"{extra}/>",
            p.join(" ")
        );
    }

    fn axes(&mut self, f: &Frame, x_label: &str, y_label: &str, x_ticks: bool) {
        let _ = writeln!(
            self.body,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
            n(f.left),
            n(f.top),
            n(f.right - f.left),
            n(f.bottom - f.top)
        );
        if x_ticks {
            for t in f.x.ticks() {
                let x = f.px(t);
                self.line(x, f.bottom, x, f.bottom + 4.0, "black", "");
                self.text(x, f.bottom + 16.0, "middle", &tick_label(t), None);
            }
        }
        for t in f.y.ticks() {
            let y = f.py(t);
            self.line(f.left - 4.0, y, f.left, y, "black", "");
            self.text(f.left - 6.0, y + 4.0, "end", &tick_label(t), None);
        }
        self.text((f.left + f.right) / 2.0, HEIGHT - 10.0, "middle", x_label, None);
        let cy = (f.top + f.bottom) / 2.0;
        let _ = writeln!(
            self.body,
            "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>",
            n(cy),
            n(cy),
            escape(y_label)
        );
    }

    fn zero_lines(&mut self, f: &Frame) {
        let dash = " stroke-dasharray=\"3,3\"";
        if f.x.lo < 0.0 && f.x.hi > 0.0 {
            self.line(f.px(0.0), f.top, f.px(0.0), f.bottom, "gray", dash);
        }
        if f.y.lo < 0.0 && f.y.hi > 0.0 {
            self.line(f.left, f.py(0.0), f.right, f.py(0.0), "gray", dash);
        }
    }

    fn legend(&mut self, entries: &[(String, &str)], f: &Frame) {
        for (i, (label, color)) in entries.iter().enumerate() {
            let y = f.top + 12.0 + 14.0 * i as f64;
            self.rect(f.right - 110.0, y - 8.0, 8.0, 8.0, color);
            self.text(f.right - 98.0, y, "start", label, None);
        }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn column(m: &LabeledMatrix, j: usize) -> Vec<f64> {
    m.values.iter().map(|r| r.get(j).copied().unwrap_or(f64::NAN)).collect()
}

fn axis_label(m: &LabeledMatrix, j: usize, explained: Option<&[f64]>) -> String {
    let name = m.col_labels.get(j).cloned().unwrap_or_else(|| format!("PC{}", j + 1));
    match explained.and_then(|e| e.get(j)) {
        Some(e) => format!("{name} ({e:.1}%)"),
        None => name,
    }
}

/// Per-component explained variance from a cumulative vector.
fn per_component(cumulative: &[f64]) -> Vec<f64> {
    cumulative
        .iter()
        .enumerate()
        .map(|(i, &c)| if i == 0 { c } else { c - cumulative[i - 1] })
        .collect()
}

fn scatter_labels(s: &mut Svg, f: &Frame, m: &LabeledMatrix, color: &str) {
    let (xs, ys) = (column(m, 0), column(m, 1));
    for (i, label) in m.row_labels.iter().enumerate() {
        let (x, y) = (f.px(xs[i]), f.py(ys[i]));
        s.circle(x, y, 2.5, color, color, "");
        s.colored_text(x + 4.0, y - 4.0, label, color);
    }
}

/// Column 1 against column 2 of each matrix. A one-component model is
/// drawn against a zero second axis.
fn with_two_columns(m: &LabeledMatrix) -> LabeledMatrix {
    if m.col_labels.len() >= 2 {
        return m.clone();
    }
    let mut out = m.clone();
    out.col_labels.push(String::new());
    for r in &mut out.values {
        r.push(0.0);
    }
    out
}

/// Render a latent-model plot payload.
pub fn render_latent(p: &PlotPayload) -> String {
    match p {
        PlotPayload::Scores { scores, explvar_x } => {
            let m = with_two_columns(scores);
            let f = Frame::new(
                Range::of(column(&m, 0)).include_zero(),
                Range::of(column(&m, 1)).include_zero(),
            );
            let ex = per_component(explvar_x);
            let mut s = Svg::new("Scores");
            s.axes(&f, &axis_label(&m, 0, Some(&ex)), &axis_label(&m, 1, Some(&ex)), true);
            s.zero_lines(&f);
            scatter_labels(&mut s, &f, &m, X_COLOR);
            s.finish()
        }
        PlotPayload::Loadings { x, y } => {
            let xm = with_two_columns(x);
            let ym = y.as_ref().map(with_two_columns);
            let all = |j| {
                let mut v = column(&xm, j);
                if let Some(ym) = &ym {
                    v.extend(column(ym, j));
                }
                v
            };
            let f = Frame::new(Range::of(all(0)).include_zero(), Range::of(all(1)).include_zero());
            let mut s = Svg::new("Loadings");
            s.axes(&f, &axis_label(&xm, 0, None), &axis_label(&xm, 1, None), true);
            s.zero_lines(&f);
            scatter_labels(&mut s, &f, &xm, X_COLOR);
            if let Some(ym) = &ym {
                scatter_labels(&mut s, &f, ym, Y_COLOR);
            }
            s.finish()
        }
        PlotPayload::CorrLoadings { x, y, ring_radii, .. } => {
            let xm = with_two_columns(x);
            let f = Frame::square(Range::fixed(-1.1, 1.1));
            let mut s = Svg::new("Correlation loadings");
            s.axes(&f, &axis_label(&xm, 0, None), &axis_label(&xm, 1, None), true);
            s.zero_lines(&f);
            for r in ring_radii {
                s.circle(f.px(0.0), f.py(0.0), r * f.scale_x(), "gray", "none", "");
            }
            scatter_labels(&mut s, &f, &xm, X_COLOR);
            if let Some(y) = y {
                scatter_labels(&mut s, &f, &with_two_columns(y), Y_COLOR);
            }
            s.finish()
        }
        PlotPayload::Explvar { components, calibrated_x, validated_x, calibrated_y, validated_y } => {
            let xs: Vec<f64> = std::iter::once(0.0).chain(components.iter().map(|&c| c as f64)).collect();
            let f = Frame::new(Range::fixed(0.0, xs.last().copied().unwrap_or(1.0).max(1.0)), Range::fixed(0.0, 100.0));
            let mut s = Svg::new("Explained variance");
            s.axes(&f, "Components", "Explained variance (%)", true);
            let mut legend = Vec::new();
            let mut curve = |s: &mut Svg, v: &[f64], color: &'static str, dash: &str, name: &str| {
                let pts: Vec<(f64, f64)> = std::iter::once(0.0)
                    .chain(v.iter().copied())
                    .zip(&xs)
                    .map(|(y, &x)| (f.px(x), f.py(y.clamp(-5.0, 100.0))))
                    .collect();
                s.polyline(&pts, color, dash);
                legend.push((name.to_string(), color));
            };
            let dash = " stroke-dasharray=\"5,3\"";
            curve(&mut s, calibrated_x, X_COLOR, "", "Calibrated X");
            if let Some(v) = validated_x {
                curve(&mut s, v, X_COLOR, dash, "Validated X");
            }
            if !calibrated_y.is_empty() {
                curve(&mut s, calibrated_y, Y_COLOR, "", "Calibrated Y");
            }
            if let Some(v) = validated_y {
                curve(&mut s, v, Y_COLOR, dash, "Validated Y");
            }
            s.legend(&legend, &f);
            s.finish()
        }
    }
}

/// Correlation-loadings style plot with preference-map sector wedges.
/// `boundaries` are start angles in radians.
pub fn render_sectors(points: &LabeledMatrix, boundaries: &[f64], counts: &[usize]) -> String {
    let m = with_two_columns(points);
    let r = Range::of(column(&m, 0).into_iter().chain(column(&m, 1)).map(f64::abs)).hi;
    let f = Frame::square(Range::fixed(-r, r));
    let mut s = Svg::new("Preference map sectors");
    s.axes(&f, &axis_label(&m, 0, None), &axis_label(&m, 1, None), true);
    let (cx, cy) = (f.px(0.0), f.py(0.0));
    let reach = r * f.scale_x();
    let width = if boundaries.is_empty() { 0.0 } else { std::f64::consts::TAU / boundaries.len() as f64 };
    for (k, &b) in boundaries.iter().enumerate() {
        s.line(cx, cy, cx + reach * b.cos(), cy - reach * b.sin(), "gray", "");
        let mid = b + width / 2.0;
        let label = format!("{}", counts.get(k).copied().unwrap_or(0));
        s.text(cx + 0.85 * reach * mid.cos(), cy - 0.85 * reach * mid.sin(), "middle", &label, Some("bold"));
    }
    scatter_labels(&mut s, &f, &m, X_COLOR);
    s.finish()
}

/// Box plots of five-number summaries, one box per series.
pub fn render_box(stats: &[BoxSummary]) -> String {
    let f = Frame::new(
        Range::fixed(0.0, stats.len().max(1) as f64),
        Range::of(stats.iter().flat_map(|b| [b.min, b.max])),
    );
    let mut s = Svg::new("Box plot");
    s.axes(&f, "", "Rating", false);
    let slot = f.scale_x();
    for (i, b) in stats.iter().enumerate() {
        let c = f.px(i as f64 + 0.5);
        let half = slot * 0.3;
        s.line(c, f.py(b.min), c, f.py(b.q25), "black", "");
        s.line(c, f.py(b.q75), c, f.py(b.max), "black", "");
        s.line(c - half / 2.0, f.py(b.min), c + half / 2.0, f.py(b.min), "black", "");
        s.line(c - half / 2.0, f.py(b.max), c + half / 2.0, f.py(b.max), "black", "");
        s.rect(c - half, f.py(b.q75), 2.0 * half, f.py(b.q25) - f.py(b.q75), "#aec7e8");
        s.line(c - half, f.py(b.median), c + half, f.py(b.median), "black", " stroke-width=\"2\"");
        s.text(c, f.bottom + 16.0, "middle", &b.series_label, None);
    }
    s.finish()
}

/// Grouped histogram (one bar group per rating value) or, when `stacked`,
/// one stacked bar per series showing the rating distribution in percent.
pub fn render_histogram(h: &HistogramTable, stacked: bool) -> String {
    if stacked {
        let f = Frame::new(Range::fixed(0.0, h.series_labels.len().max(1) as f64), Range::fixed(0.0, 100.0));
        let mut s = Svg::new("Rating distribution");
        s.axes(&f, "", "Percent", false);
        let slot = f.scale_x();
        for (i, label) in h.series_labels.iter().enumerate() {
            let mut base = 0.0;
            let x = f.px(i as f64 + 0.15);
            for (b, &p) in h.percents[i].iter().enumerate() {
                s.rect(x, f.py(base + p), slot * 0.7, f.py(base) - f.py(base + p), SERIES[b % SERIES.len()]);
                base += p;
            }
            s.text(f.px(i as f64 + 0.5), f.bottom + 16.0, "middle", label, None);
        }
        let legend: Vec<(String, &str)> = h
            .bin_values
            .iter()
            .enumerate()
            .map(|(b, v)| (v.to_string(), SERIES[b % SERIES.len()]))
            .collect();
        s.legend(&legend, &f);
        return s.finish();
    }
    let value = |i: usize, b: usize| if h.as_percent { h.percents[i][b] } else { h.counts[i][b] as f64 };
    let nser = h.series_labels.len().max(1);
    let top = (0..h.series_labels.len())
        .flat_map(|i| (0..h.bin_values.len()).map(move |b| (i, b)))
        .map(|(i, b)| value(i, b))
        .fold(0.0, f64::max);
    let f = Frame::new(
        Range::fixed(0.0, h.bin_values.len().max(1) as f64),
        Range::fixed(0.0, if top > 0.0 { top * 1.05 } else { 1.0 }),
    );
    let mut s = Svg::new("Histogram");
    s.axes(&f, "Rating", if h.as_percent { "Percent" } else { "Count" }, false);
    let slot = f.scale_x();
    let bar = slot * 0.8 / nser as f64;
    for (b, v) in h.bin_values.iter().enumerate() {
        for i in 0..h.series_labels.len() {
            let x = f.px(b as f64 + 0.1) + bar * i as f64;
            let y = value(i, b);
            s.rect(x, f.py(y), bar, f.py(0.0) - f.py(y), SERIES[i % SERIES.len()]);
        }
        s.text(f.px(b as f64 + 0.5), f.bottom + 16.0, "middle", &v.to_string(), None);
    }
    if h.series_labels.len() > 1 {
        let legend: Vec<(String, &str)> = h
            .series_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), SERIES[i % SERIES.len()]))
            .collect();
        s.legend(&legend, &f);
    }
    s.finish()
}

fn effect_series(s: &mut Svg, f: &Frame, pts: &[EffectPoint], color: &str, offset: f64) {
    let line: Vec<(f64, f64)> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| (f.px(i as f64 + 0.5 + offset), f.py(p.estimate)))
        .collect();
    s.polyline(&line, color, "");
    for (i, p) in pts.iter().enumerate() {
        let x = f.px(i as f64 + 0.5 + offset);
        s.line(x, f.py(p.lower), x, f.py(p.upper), color, "");
        s.circle(x, f.py(p.estimate), 3.0, color, color, "");
    }
}

/// Main-effect or two-factor interaction plot of LS means with 95% bars.
pub fn render_effect(p: &EffectPlot) -> String {
    match p {
        EffectPlot::Main { term, points } => {
            let f = Frame::new(
                Range::fixed(0.0, points.len().max(1) as f64),
                Range::of(points.iter().flat_map(|p| [p.lower, p.upper])),
            );
            let mut s = Svg::new(&format!("Main effect: {term}"));
            s.axes(&f, term, "LS mean", false);
            for (i, p) in points.iter().enumerate() {
                s.text(f.px(i as f64 + 0.5), f.bottom + 16.0, "middle", &p.level, None);
            }
            effect_series(&mut s, &f, points, X_COLOR, 0.0);
            s.finish()
        }
        EffectPlot::Interaction { term, x_factor, series_factor, series } => {
            let nx = series.first().map_or(1, |s| s.points.len()).max(1);
            let f = Frame::new(
                Range::fixed(0.0, nx as f64),
                Range::of(series.iter().flat_map(|s| s.points.iter().flat_map(|p| [p.lower, p.upper]))),
            );
            let mut s = Svg::new(&format!("Interaction: {term}"));
            s.axes(&f, x_factor, "LS mean", false);
            if let Some(first) = series.first() {
                for (i, p) in first.points.iter().enumerate() {
                    s.text(f.px(i as f64 + 0.5), f.bottom + 16.0, "middle", &p.level, None);
                }
            }
            let k = series.len().max(1) as f64;
            let mut legend = Vec::new();
            for (j, ser) in series.iter().enumerate() {
                let color = SERIES[j % SERIES.len()];
                let offset = (j as f64 - (k - 1.0) / 2.0) * 0.04;
                effect_series(&mut s, &f, &ser.points, color, offset);
                legend.push((format!("{series_factor} {}", ser.level), color));
            }
            s.legend(&legend, &f);
            s.finish()
        }
    }
}

/// Scatter of points coloured by an a-priori grouping.
pub fn render_colored(p: &ColoredPoints) -> String {
    let f = Frame::new(
        Range::of(p.x.iter().copied()).include_zero(),
        Range::of(p.y.iter().copied()).include_zero(),
    );
    let mut s = Svg::new("Coloured by characteristic");
    s.axes(&f, "Component 1", "Component 2", true);
    s.zero_lines(&f);
    let color_of = |g: usize| p.legend.get(g).map_or("black", |e| e.color.as_str());
    for i in 0..p.labels.len() {
        let c = color_of(p.group[i]);
        let (x, y) = (f.px(p.x[i]), f.py(p.y[i]));
        s.circle(x, y, 3.0, c, c, "");
        s.colored_text(x + 4.0, y - 4.0, &p.labels[i], c);
    }
    let legend: Vec<(String, &str)> = p.legend.iter().map(|e| (e.level.clone(), e.color.as_str())).collect();
    s.legend(&legend, &f);
    s.finish()
}
