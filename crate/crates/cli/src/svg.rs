//! Static SVG for the jammed extremum-seeking figure: `x` against `t` on
//! top, the timer `r` against `t` below. Output bytes depend only on the
//! arcs.

use std::fmt::Write as _;

use shds::HybridArc;

const WIDTH: f64 = 800.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP_PANEL: (f64, f64) = (30.0, 330.0);
const BOTTOM_PANEL: (f64, f64) = (390.0, 520.0);
const HEIGHT: f64 = 570.0;
/// Polyline vertices kept per segment.
const MAX_POINTS: usize = 200;

pub struct Fig1Style {
    pub delta: f64,
    pub t_max: f64,
}

struct Axes {
    t_max: f64,
    y_lo: f64,
    y_hi: f64,
    panel: (f64, f64),
}

impl Axes {
    fn px(&self, t: f64) -> f64 {
        LEFT + (WIDTH - LEFT - RIGHT) * t / self.t_max
    }

    fn py(&self, y: f64) -> f64 {
        let (top, bottom) = self.panel;
        bottom - (bottom - top) * (y - self.y_lo) / (self.y_hi - self.y_lo)
    }
}

fn polylines(out: &mut String, arc: &HybridArc, axes: &Axes, value: impl Fn(&HybridArc, usize, usize) -> f64, style: &str) {
    for (k, seg) in arc.segments.iter().enumerate() {
        if seg.len() < 2 {
            continue;
        }
        let step = seg.len().div_ceil(MAX_POINTS).max(1);
        let mut idx: Vec<usize> = (0..seg.len()).step_by(step).collect();
        if *idx.last().unwrap() != seg.len() - 1 {
            idx.push(seg.len() - 1);
        }
        let pts: Vec<String> = idx
            .iter()
            .map(|&i| format!("{:.2},{:.2}", axes.px(seg.t(i)), axes.py(value(arc, k, i))))
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" {style}/>"#, pts.join(" "));
    }
}

fn frame(out: &mut String, axes: &Axes, label: &str, ticks: &[f64]) {
    let (top, bottom) = axes.panel;
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT}" y="{top}" width="{}" height="{}" fill="none" stroke="#000" stroke-width="1"/>"##,
        WIDTH - LEFT - RIGHT,
        bottom - top
    );
    for &y in ticks {
        let _ = writeln!(
            out,
            r##"<text x="{}" y="{:.2}" font-size="11" text-anchor="end">{y}</text>"##,
            LEFT - 6.0,
            axes.py(y) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="16" y="{:.2}" font-size="13" transform="rotate(-90 16 {:.2})" text-anchor="middle">{label}</text>"##,
        0.5 * (top + bottom),
        0.5 * (top + bottom)
    );
    let n_ticks = axes.t_max.ceil() as usize;
    let every = n_ticks.div_ceil(10).max(1);
    for k in (0..=n_ticks).step_by(every) {
        let t = k as f64;
        if t > axes.t_max {
            break;
        }
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{}" font-size="11" text-anchor="middle">{k}</text>"##,
            axes.px(t),
            bottom + 14.0
        );
    }
}

pub fn fig1_svg(jammed: &[HybridArc], nominal: &HybridArc, style: &Fig1Style) -> String {
    let x_of = |a: &HybridArc, k: usize, i: usize| a.segments[k].x(i)[0];
    let r_of = |a: &HybridArc, k: usize, i: usize| a.segments[k].r(i)[0];
    let extent = jammed
        .iter()
        .chain(std::iter::once(nominal))
        .flat_map(|a| a.segments.iter().flat_map(|s| (0..s.len()).map(move |i| s.x(i)[0].abs())))
        .fold(style.delta, f64::max);
    let bound = (extent * 1.1 * 10.0).ceil() / 10.0;
    let x_axes = Axes {
        t_max: style.t_max,
        y_lo: -bound,
        y_hi: bound,
        panel: TOP_PANEL,
    };
    let r_hi = nominal
        .segments
        .iter()
        .flat_map(|s| (0..s.len()).map(move |i| s.r(i)[0]))
        .fold(0.0, f64::max)
        .max(1e-9);
    let r_axes = Axes {
        t_max: style.t_max,
        y_lo: 0.0,
        y_hi: r_hi * 1.05,
        panel: BOTTOM_PANEL,
    };

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#fff"/>"##);
    frame(&mut out, &x_axes, "x", &[-bound, 0.0, bound]);
    for y in [-style.delta, style.delta] {
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#555" stroke-dasharray="4 3"/>"##,
            WIDTH - RIGHT,
            py = x_axes.py(y)
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">|x| = {}</text>"##,
        WIDTH - RIGHT - 4.0,
        x_axes.py(style.delta) - 4.0,
        style.delta
    );
    let _ = writeln!(out, r#"<g id="jammed">"#);
    for arc in jammed {
        polylines(&mut out, arc, &x_axes, x_of, r##"fill="none" stroke="#7f7f7f" stroke-opacity="0.35" stroke-width="0.8""##);
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r#"<g id="nominal">"#);
    polylines(&mut out, nominal, &x_axes, x_of, r##"fill="none" stroke="#1f4fd1" stroke-width="2""##);
    let _ = writeln!(out, "</g>");

    frame(&mut out, &r_axes, "r", &[0.0, r_hi]);
    polylines(&mut out, nominal, &r_axes, r_of, r##"fill="none" stroke="#000" stroke-width="1.2""##);
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{}" font-size="13" text-anchor="middle">t</text>"##,
        0.5 * (LEFT + WIDTH - RIGHT),
        HEIGHT - 12.0
    );
    let _ = writeln!(out, "</svg>");
    out
}
