//! Static two-panel SVG of loss and accuracy curves.

use std::fmt::Write as _;

use crate::metrics::MetricsRow;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 420.0;
const PANEL_W: f64 = 400.0;
const PANEL_H: f64 = 300.0;
const TOP: f64 = 50.0;
const LEFTS: [f64; 2] = [70.0, 540.0];
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

/// One run's metrics and its legend label.
pub struct Series {
    pub label: String,
    pub rows: Vec<MetricsRow>,
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Axis { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 {
            hi = lo + 1.0;
        }
        Axis { lo, hi }
    }

    fn map(&self, v: f64, len: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo) * len
    }
}

fn curve(rows: &[&MetricsRow], pick: fn(&MetricsRow) -> f64, x: &Axis, y: &Axis, left: f64) -> String {
    let mut d = String::new();
    for (i, r) in rows.iter().enumerate() {
        let px = left + x.map(r.epoch as f64, PANEL_W);
        let py = TOP + PANEL_H - y.map(pick(r), PANEL_H);
        let _ = write!(d, "{}{px:.2},{py:.2}", if i == 0 { "M" } else { " L" });
    }
    d
}

fn panel(svg: &mut String, left: f64, title: &str, x: &Axis, y: &Axis) {
    let _ = writeln!(
        svg,
        r##"<rect x="{left}" y="{TOP}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="15">{title}</text>"#,
        left + PANEL_W / 2.0,
        TOP - 12.0
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let yv = y.lo + f * (y.hi - y.lo);
        let py = TOP + PANEL_H - f * PANEL_H;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="11">{yv:.3}</text>"#,
            left - 6.0,
            py + 4.0
        );
        let xv = x.lo + f * (x.hi - x.lo);
        let px = left + f * PANEL_W;
        let _ = writeln!(
            svg,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle" font-size="11">{xv:.0}</text>"#,
            TOP + PANEL_H + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">epoch</text>"#,
        left + PANEL_W / 2.0,
        TOP + PANEL_H + 34.0
    );
}

/// Loss (left) and label accuracy (right) per epoch. Validation curves are
/// solid, training curves dashed; colors distinguish runs. `timestamp`, if
/// given, is embedded as a comment.
pub fn render_svg(series: &[Series], timestamp: Option<u64>) -> String {
    let all = || series.iter().flat_map(|s| s.rows.iter());
    let x = Axis::fit(all().map(|r| r.epoch as f64));
    let loss = Axis::fit(all().map(|r| r.total_loss));
    let acc = Axis::fit(all().map(|r| r.label_acc).chain([0.0, 1.0]));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    if let Some(t) = timestamp {
        let _ = writeln!(svg, "<!-- generated at unix time {t} -->");
    }
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    panel(&mut svg, LEFTS[0], "total loss", &x, &loss);
    panel(&mut svg, LEFTS[1], "label accuracy", &x, &acc);

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        for (split, dash) in [("train", r#" stroke-dasharray="5,4""#), ("val", "")] {
            let rows: Vec<&MetricsRow> = s.rows.iter().filter(|r| r.split == split).collect();
            if rows.is_empty() {
                continue;
            }
            for (left, axis, pick) in [
                (LEFTS[0], &loss, (|r: &MetricsRow| r.total_loss) as fn(&MetricsRow) -> f64),
                (LEFTS[1], &acc, |r: &MetricsRow| r.label_acc),
            ] {
                let _ = writeln!(
                    svg,
                    r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>"#,
                    curve(&rows, pick, &x, axis, left)
                );
            }
        }
        let ly = HEIGHT - 28.0 + 0.0 * i as f64;
        let lx = LEFTS[0] + i as f64 * 200.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">solid: val, dashed: train</text>"#,
        WIDTH - 20.0,
        HEIGHT - 24.0
    );
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
