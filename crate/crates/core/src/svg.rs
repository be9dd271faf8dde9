//! Deterministic, dependency-free SVG charts for the pipeline's figures.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dependence::PdpCurve;
use crate::error::{Error, Result};
use crate::explain::{BeeswarmRecord, ImportanceRanking, PairedImportance, Profile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    ImportanceBar,
    Beeswarm,
    PdpCurve,
    LocalProfile,
    PairedImportance,
}

/// Which dependence column to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveScale {
    RelativeProbability,
    OddsRatio,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlotData {
    ImportanceBar {
        title: String,
        ranking: ImportanceRanking,
        top_n: usize,
    },
    Beeswarm {
        title: String,
        /// Features top to bottom.
        features: Vec<String>,
        records: Vec<BeeswarmRecord>,
    },
    PdpCurve {
        title: String,
        curves: Vec<PdpCurve>,
        scale: CurveScale,
    },
    LocalProfile {
        title: String,
        profile: Profile,
    },
    PairedImportance {
        title: String,
        paired: PairedImportance,
    },
}

impl PlotData {
    pub fn kind(&self) -> PlotKind {
        match self {
            PlotData::ImportanceBar { .. } => PlotKind::ImportanceBar,
            PlotData::Beeswarm { .. } => PlotKind::Beeswarm,
            PlotData::PdpCurve { .. } => PlotKind::PdpCurve,
            PlotData::LocalProfile { .. } => PlotKind::LocalProfile,
            PlotData::PairedImportance { .. } => PlotKind::PairedImportance,
        }
    }
}

const WIDTH: f64 = 820.0;
const LEFT: f64 = 230.0;
const RIGHT: f64 = 40.0;
const TOP: f64 = 50.0;
const ROW: f64 = 22.0;
const BOTTOM: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Canvas {
    body: String,
    height: f64,
}

impl Canvas {
    fn new(height: f64, title: &str) -> Self {
        let mut c = Canvas {
            body: String::new(),
            height,
        };
        c.text(WIDTH / 2.0, 28.0, title, "middle", 16.0);
        c
    }

    fn text(&mut self, x: f64, y: f64, s: &str, anchor: &str, size: f64) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-size="{size}">{}</text>"#,
            escape(s)
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}"/>"#
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{fill}"/>"#);
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{h:.0}\" viewBox=\"0 0 {WIDTH} {h:.0}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<g font-family=\"sans-serif\">\n{}</g>\n</svg>\n",
            self.body,
            h = self.height
        )
    }
}

fn no_data(title: &str) -> String {
    let mut c = Canvas::new(160.0, title);
    c.text(WIDTH / 2.0, 95.0, "no data", "middle", 14.0);
    c.finish()
}

/// Linear map from a data range onto the plotting band.
struct Scale {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, px_lo: f64, px_hi: f64) -> Self {
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        };
        Scale { lo, hi, px_lo, px_hi }
    }

    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

fn x_axis(c: &mut Canvas, s: &Scale, y: f64, label: &str) {
    c.line(s.px_lo, y, s.px_hi, y, "black");
    for k in 0..=4 {
        let v = s.lo + (s.hi - s.lo) * k as f64 / 4.0;
        let x = s.map(v);
        c.line(x, y, x, y + 4.0, "black");
        c.text(x, y + 16.0, &format!("{v:.3}"), "middle", 10.0);
    }
    c.text((s.px_lo + s.px_hi) / 2.0, y + 36.0, label, "middle", 12.0);
}

/// Blue (low) to red (high).
fn color(t: Option<f64>) -> String {
    match t {
        None => "#9e9e9e".into(),
        Some(t) => {
            let t = t.clamp(0.0, 1.0);
            let r = (30.0 + 225.0 * t).round() as u8;
            let b = (255.0 - 225.0 * t).round() as u8;
            format!("#{r:02x}40{b:02x}")
        }
    }
}

fn bars(title: &str, items: &[(String, f64)], axis: &str) -> String {
    if items.is_empty() {
        return no_data(title);
    }
    let height = TOP + ROW * items.len() as f64 + BOTTOM;
    let mut c = Canvas::new(height, title);
    let lo = items.iter().map(|i| i.1).fold(0.0, f64::min);
    let hi = items.iter().map(|i| i.1).fold(0.0, f64::max);
    let s = Scale::new(lo, hi, LEFT, WIDTH - RIGHT);
    let zero = s.map(0.0);
    for (k, (name, v)) in items.iter().enumerate() {
        let y = TOP + ROW * k as f64;
        let x = s.map(*v);
        let fill = if *v >= 0.0 { "#d6404a" } else { "#3a6fc4" };
        c.rect(x.min(zero), y + 3.0, (x - zero).abs(), ROW - 6.0, fill);
        c.text(LEFT - 6.0, y + ROW / 2.0 + 4.0, name, "end", 11.0);
    }
    x_axis(&mut c, &s, TOP + ROW * items.len() as f64 + 4.0, axis);
    c.finish()
}

fn jitter(seed: u64) -> f64 {
    (crate::numeric::mix_seed(seed, 0) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

fn beeswarm(title: &str, features: &[String], records: &[BeeswarmRecord]) -> String {
    if features.is_empty() || records.is_empty() {
        return no_data(title);
    }
    let height = TOP + ROW * features.len() as f64 + BOTTOM;
    let mut c = Canvas::new(height, title);
    let lo = records.iter().map(|r| r.shap).fold(f64::INFINITY, f64::min).min(0.0);
    let hi = records.iter().map(|r| r.shap).fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let s = Scale::new(lo, hi, LEFT, WIDTH - RIGHT);
    c.line(s.map(0.0), TOP, s.map(0.0), TOP + ROW * features.len() as f64, "#bbbbbb");
    for (k, f) in features.iter().enumerate() {
        let y = TOP + ROW * k as f64 + ROW / 2.0;
        c.text(LEFT - 6.0, y + 4.0, f, "end", 11.0);
        for r in records.iter().filter(|r| &r.feature == f) {
            c.circle(s.map(r.shap), y + jitter(r.jitter_seed) * (ROW - 6.0), 2.0, &color(r.color));
        }
    }
    x_axis(&mut c, &s, TOP + ROW * features.len() as f64 + 4.0, "SHAP value (log-odds margin)");
    c.finish()
}

fn curves(title: &str, curves: &[PdpCurve], scale: CurveScale) -> String {
    let series: Vec<(String, Vec<(f64, f64)>)> = curves
        .iter()
        .map(|c| {
            let pts = c
                .grid
                .iter()
                .enumerate()
                .filter_map(|(i, &g)| {
                    let y = match scale {
                        CurveScale::RelativeProbability => Some(c.rp[i]),
                        CurveScale::OddsRatio => c.odds_ratio[i],
                    };
                    y.filter(|v| v.is_finite()).map(|v| (g, v))
                })
                .collect();
            (c.feature.clone(), pts)
        })
        .filter(|(_, p): &(String, Vec<(f64, f64)>)| !p.is_empty())
        .collect();
    if series.is_empty() {
        return no_data(title);
    }
    let panel_h = 220.0;
    let height = TOP + (panel_h + BOTTOM) * series.len() as f64;
    let mut c = Canvas::new(height, title);
    let unit = match scale {
        CurveScale::RelativeProbability => "relative probability (mean prediction = 1)",
        CurveScale::OddsRatio => "odds ratio vs. baseline",
    };
    for (k, (name, pts)) in series.iter().enumerate() {
        let top = TOP + (panel_h + BOTTOM) * k as f64;
        let xs = Scale::new(
            pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
            pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
            LEFT,
            WIDTH - RIGHT,
        );
        let ylo = pts.iter().map(|p| p.1).fold(1.0, f64::min);
        let yhi = pts.iter().map(|p| p.1).fold(1.0, f64::max);
        let ys = Scale::new(ylo, yhi, top + panel_h, top + 10.0);
        c.line(LEFT, ys.map(1.0), WIDTH - RIGHT, ys.map(1.0), "#bbbbbb");
        c.line(LEFT, top + 10.0, LEFT, top + panel_h, "black");
        for v in [ys.lo, 1.0, ys.hi] {
            c.text(LEFT - 6.0, ys.map(v) + 4.0, &format!("{v:.3}"), "end", 10.0);
        }
        c.text(LEFT - 60.0, top + panel_h / 2.0, unit, "end", 10.0);
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", xs.map(x), ys.map(y)))
            .collect();
        let _ = writeln!(
            c.body,
            r##"<polyline fill="none" stroke="#d6404a" stroke-width="2" points="{}"/>"##,
            path.join(" ")
        );
        for &(x, y) in pts {
            c.circle(xs.map(x), ys.map(y), 2.5, "#d6404a");
        }
        x_axis(&mut c, &xs, top + panel_h + 4.0, name);
    }
    c.finish()
}

fn paired(title: &str, p: &PairedImportance) -> String {
    if p.rows.is_empty() {
        return no_data(title);
    }
    let n = p.rows.len();
    let height = TOP + ROW * n as f64 + BOTTOM + 20.0;
    let mut c = Canvas::new(height, title);
    let mid = WIDTH / 2.0;
    let hi = p
        .rows
        .iter()
        .map(|r| r.importance_a.max(r.importance_b))
        .fold(0.0, f64::max);
    let half = mid - 150.0;
    let sa = Scale::new(0.0, hi, 0.0, half - 20.0);
    for (k, r) in p.rows.iter().enumerate() {
        let y = TOP + ROW * k as f64;
        let wa = sa.map(r.importance_a);
        let wb = sa.map(r.importance_b);
        c.rect(mid - 80.0 - wa, y + 3.0, wa, ROW - 6.0, "#3a6fc4");
        c.rect(mid + 80.0, y + 3.0, wb, ROW - 6.0, "#d6404a");
        c.text(mid, y + ROW / 2.0 + 4.0, &r.feature, "middle", 10.0);
    }
    let base = TOP + ROW * n as f64 + 18.0;
    c.text(mid - 80.0, base, &format!("{} (mean |SHAP|)", p.label_a), "end", 12.0);
    c.text(mid + 80.0, base, &format!("{} (mean |SHAP|)", p.label_b), "start", 12.0);
    let rho = match (p.spearman.rho, p.spearman.p_value) {
        (Some(r), Some(pv)) => format!("Spearman rho = {r:.4} (p = {pv:.4}), n = {}", p.spearman.n),
        _ => format!("Spearman rho undefined, n = {}", p.spearman.n),
    };
    c.text(mid, base + 22.0, &rho, "middle", 12.0);
    c.finish()
}

/// Renders plot data as a standalone SVG document. Fails when `kind` does not match the data.
pub fn render_svg(kind: PlotKind, data: &PlotData) -> Result<String> {
    if data.kind() != kind {
        return Err(Error::PlotSchema("plot data does not match the requested kind"));
    }
    Ok(match data {
        PlotData::ImportanceBar { title, ranking, top_n } => {
            let items: Vec<(String, f64)> = ranking
                .top(*top_n)
                .iter()
                .map(|e| (e.feature.clone(), e.mean_abs_shap))
                .collect();
            bars(title, &items, "mean |SHAP value| (log-odds margin)")
        }
        PlotData::Beeswarm { title, features, records } => beeswarm(title, features, records),
        PlotData::PdpCurve { title, curves: cs, scale } => curves(title, cs, *scale),
        PlotData::LocalProfile { title, profile } => {
            let items: Vec<(String, f64)> = profile
                .contributions
                .iter()
                .map(|c| {
                    let v = c.value.map_or("missing".into(), |v| format!("{v}"));
                    (format!("{} = {v}", c.feature), c.shap)
                })
                .collect();
            bars(
                &format!("{title} (sum of SHAP = {:+.2})", profile.total),
                &items,
                "SHAP value (log-odds margin)",
            )
        }
        PlotData::PairedImportance { title, paired: p } => paired(title, p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::ImportanceEntry;

    fn ranking(n: usize) -> ImportanceRanking {
        ImportanceRanking {
            entries: (0..n)
                .map(|i| ImportanceEntry {
                    feature: format!("f{i}"),
                    index: i,
                    mean_abs_shap: (n - i) as f64 / 10.0,
                })
                .collect(),
        }
    }

    #[test]
    fn empty_data_renders_annotation() {
        let d = PlotData::Beeswarm {
            title: "empty".into(),
            features: vec![],
            records: vec![],
        };
        let s = render_svg(PlotKind::Beeswarm, &d).unwrap();
        assert!(s.starts_with("<svg") && s.contains("no data"));
    }

    #[test]
    fn bars_are_descending_and_counted() {
        let d = PlotData::ImportanceBar {
            title: "imp".into(),
            ranking: ranking(30),
            top_n: 25,
        };
        let s = render_svg(PlotKind::ImportanceBar, &d).unwrap();
        let widths: Vec<f64> = s
            .lines()
            .filter(|l| l.starts_with("<rect x"))
            .map(|l| {
                let w = l.split("width=\"").nth(1).unwrap();
                w[..w.find('"').unwrap()].parse().unwrap()
            })
            .collect();
        assert_eq!(widths.len(), 25);
        assert!(widths.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(s, render_svg(PlotKind::ImportanceBar, &d).unwrap());
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let d = PlotData::ImportanceBar {
            title: "imp".into(),
            ranking: ranking(2),
            top_n: 2,
        };
        assert!(matches!(render_svg(PlotKind::Beeswarm, &d), Err(Error::PlotSchema(_))));
    }

    #[test]
    fn text_is_escaped() {
        assert_eq!(escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }
}
