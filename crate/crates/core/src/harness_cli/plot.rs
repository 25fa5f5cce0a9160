//! Self-contained SVG line and bar charts. Numbers are printed with fixed
//! precision so identical input gives identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bar {
    pub label: String,
    pub value: f64,
    /// Half-width of an error bar.
    pub error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BarChart {
    pub title: String,
    pub y_label: String,
    pub bars: Vec<Bar>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Tick step of roughly `target` ticks over `span`, from {1, 2, 5} x 10^k.
fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    step: f64,
}

impl Axis {
    fn fit(lo: f64, hi: f64) -> Axis {
        let (mut lo, mut hi) = (lo, hi);
        if (hi - lo).abs() < 1e-12 {
            let pad = if lo.abs() > 1e-12 { lo.abs() * 0.1 } else { 1.0 };
            lo -= pad;
            hi += pad;
        }
        let step = nice_step(hi - lo, 5);
        Axis {
            lo: (lo / step).floor() * step,
            hi: (hi / step).ceil() * step,
            step,
        }
    }

    fn ticks(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step).round() as usize;
        (0..=n).map(|i| self.lo + i as f64 * self.step).collect()
    }

    fn map(&self, v: f64, a: f64, b: f64) -> f64 {
        a + (v - self.lo) / (self.hi - self.lo) * (b - a)
    }
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10()).ceil() as usize };
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn frame(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0}" height="{H:.0}" viewBox="0 0 {W:.0} {H:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W:.0}" height="{H:.0}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        esc(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 15.0,
        esc(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (TOP + H - BOTTOM) / 2.0,
        (TOP + H - BOTTOM) / 2.0,
        esc(y_label)
    );
}

fn y_axis(out: &mut String, y: &Axis) {
    let (x0, x1) = (LEFT, W - RIGHT);
    for v in y.ticks() {
        let py = y.map(v, H - BOTTOM, TOP);
        let _ = writeln!(out, r##"<line x1="{x0:.1}" y1="{py:.1}" x2="{x1:.1}" y2="{py:.1}" stroke="#dddddd"/>"##);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            py + 4.0,
            tick_label(v, y.step)
        );
    }
    let _ = writeln!(
        out,
        r#"<line x1="{x0:.1}" y1="{:.1}" x2="{x0:.1}" y2="{:.1}" stroke="black"/>"#,
        TOP,
        H - BOTTOM
    );
    let _ = writeln!(
        out,
        r#"<line x1="{x0:.1}" y1="{:.1}" x2="{x1:.1}" y2="{:.1}" stroke="black"/>"#,
        H - BOTTOM,
        H - BOTTOM
    );
}

pub fn line_chart_svg(chart: &LineChart) -> Result<String> {
    let pts: Vec<(f64, f64)> = chart.series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if pts.is_empty() {
        return Err(Error::invalid("line chart has no points"));
    }
    if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("line chart points must be finite"));
    }
    let fold = |f: fn(f64, f64) -> f64, init: f64, sel: fn(&(f64, f64)) -> f64| pts.iter().map(sel).fold(init, f);
    let x = Axis::fit(fold(f64::min, f64::INFINITY, |p| p.0), fold(f64::max, f64::NEG_INFINITY, |p| p.0));
    let y = Axis::fit(fold(f64::min, f64::INFINITY, |p| p.1), fold(f64::max, f64::NEG_INFINITY, |p| p.1));

    let mut out = String::new();
    frame(&mut out, &chart.title, &chart.x_label, &chart.y_label);
    y_axis(&mut out, &y);
    for v in x.ticks() {
        let px = x.map(v, LEFT, W - RIGHT);
        let _ = writeln!(
            out,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            H - BOTTOM + 18.0,
            tick_label(v, x.step)
        );
    }
    for (i, s) in chart.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = s
            .points
            .iter()
            .map(|&(a, b)| format!("{:.1},{:.1}", x.map(a, LEFT, W - RIGHT), y.map(b, H - BOTTOM, TOP)))
            .collect();
        if coords.len() > 1 {
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                coords.join(" ")
            );
        }
        for c in &coords {
            let (cx, cy) = c.split_once(',').expect("formatted pair");
            let _ = writeln!(out, r#"<circle cx="{cx}" cy="{cy}" r="3.5" fill="{color}"/>"#);
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 24.0,
            ly + 4.0,
            esc(&s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn bar_chart_svg(chart: &BarChart) -> Result<String> {
    if chart.bars.is_empty() {
        return Err(Error::invalid("bar chart has no bars"));
    }
    if chart.bars.iter().any(|b| !b.value.is_finite() || b.error.is_some_and(|e| !e.is_finite())) {
        return Err(Error::invalid("bar values must be finite"));
    }
    let hi = chart
        .bars
        .iter()
        .map(|b| b.value + b.error.unwrap_or(0.0))
        .fold(0.0, f64::max);
    let lo = chart
        .bars
        .iter()
        .map(|b| b.value - b.error.unwrap_or(0.0))
        .fold(0.0, f64::min);
    let y = Axis::fit(lo, hi);
    let mut out = String::new();
    frame(&mut out, &chart.title, "", &chart.y_label);
    y_axis(&mut out, &y);
    let slot = (W - RIGHT - LEFT) / chart.bars.len() as f64;
    let zero = y.map(0.0, H - BOTTOM, TOP);
    for (i, b) in chart.bars.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let cx = LEFT + slot * (i as f64 + 0.5);
        let top = y.map(b.value, H - BOTTOM, TOP);
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}"/>"#,
            cx - slot * 0.3,
            top.min(zero),
            slot * 0.6,
            (zero - top).abs()
        );
        if let Some(e) = b.error {
            let (y0, y1) = (y.map(b.value - e, H - BOTTOM, TOP), y.map(b.value + e, H - BOTTOM, TOP));
            let _ = writeln!(
                out,
                r#"<line x1="{cx:.1}" y1="{y0:.1}" x2="{cx:.1}" y2="{y1:.1}" stroke="black"/>"#
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            H - BOTTOM + 18.0,
            esc(&b.label)
        );
        let _ = writeln!(
            out,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle" font-size="11">{:.2}</text>"#,
            top.min(zero) - 4.0,
            b.value
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_line_chart(chart: &LineChart, path: &Path) -> Result<()> {
    std::fs::write(path, line_chart_svg(chart)?)?;
    Ok(())
}

pub fn emit_bar_chart(chart: &BarChart, path: &Path) -> Result<()> {
    std::fs::write(path, bar_chart_svg(chart)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart(points: Vec<(f64, f64)>) -> LineChart {
        LineChart {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series { label: "a".into(), points }],
        }
    }

    #[test]
    fn single_point_has_one_marker() {
        let svg = line_chart_svg(&chart(vec![(0.0, 100.0)])).unwrap();
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn empty_input_rejected() {
        assert!(line_chart_svg(&chart(vec![])).is_err());
        assert!(line_chart_svg(&chart(vec![(0.0, f64::NAN)])).is_err());
        assert!(bar_chart_svg(&BarChart { title: "t".into(), y_label: "y".into(), bars: vec![] }).is_err());
    }

    #[test]
    fn output_is_deterministic_and_escaped() {
        let mut c = chart(vec![(0.0, 100.0), (0.1, 80.0), (0.2, 55.5)]);
        c.title = "a < b & c".into();
        let a = line_chart_svg(&c).unwrap();
        assert_eq!(a, line_chart_svg(&c).unwrap());
        assert!(a.contains("a &lt; b &amp; c"));
        assert_eq!(a.matches("<circle").count(), 3);
    }

    #[test]
    fn bars_with_errors() {
        let c = BarChart {
            title: "b".into(),
            y_label: "score".into(),
            bars: vec![
                Bar { label: "full".into(), value: 0.6, error: Some(0.1) },
                Bar { label: "off".into(), value: 0.0, error: None },
            ],
        };
        let svg = bar_chart_svg(&c).unwrap();
        assert_eq!(svg.matches("<rect").count(), 3);
        assert!(svg.contains(">full<") && svg.contains(">0.60<"));
    }

    #[test]
    fn nice_ticks() {
        let a = Axis::fit(0.0, 100.0);
        assert_eq!(a.ticks(), vec![0.0, 20.0, 40.0, 60.0, 80.0, 100.0]);
        assert_eq!(tick_label(-0.0, 0.1), "0.0");
    }
}
