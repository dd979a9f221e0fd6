//! Minimal standalone SVG charts: line charts with optional log axes and
//! 2D scatter overlays.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

pub const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub label: String,
    pub color: String,
    pub radius: f64,
    pub opacity: f64,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

struct Axis {
    scale: Scale,
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, scale: Scale) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| usable(*v, scale)) {
            let t = transform(v, scale);
            lo = lo.min(t);
            hi = hi.max(t);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.04 * (hi - lo);
        Axis { scale, lo: lo - pad, hi: hi + pad }
    }

    fn frac(&self, v: f64) -> f64 {
        (transform(v, self.scale) - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<f64> {
        match self.scale {
            Scale::Log => {
                let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
                if b >= a {
                    let stride = ((b - a) / 6 + 1) as usize;
                    (a..=b).step_by(stride).map(|e| 10f64.powi(e)).collect()
                } else {
                    vec![10f64.powf(0.5 * (self.lo + self.hi))]
                }
            }
            Scale::Linear => {
                let step = nice_step((self.hi - self.lo) / 5.0);
                let mut t = (self.lo / step).ceil() * step;
                let mut out = Vec::new();
                while t <= self.hi + 1e-9 * step {
                    out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
                    t += step;
                }
                out
            }
        }
    }
}

fn usable(v: f64, scale: Scale) -> bool {
    v.is_finite() && (scale == Scale::Linear || v > 0.0)
}

fn transform(v: f64, scale: Scale) -> f64 {
    match scale {
        Scale::Linear => v,
        Scale::Log => v.log10(),
    }
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let m = if r <= 1.0 {
        1.0
    } else if r <= 2.0 {
        2.0
    } else if r <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x: Axis,
    y: Axis,
    plot_w: f64,
    plot_h: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + self.x.frac(x) * self.plot_w
    }

    fn py(&self, y: f64) -> f64 {
        TOP + (1.0 - self.y.frac(y)) * self.plot_h
    }
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (LEFT, LEFT + f.plot_w, TOP, TOP + f.plot_h);
    let _ = writeln!(out, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, f.plot_w, f.plot_h);
    for t in f.x.ticks() {
        let px = f.px(t);
        let _ = writeln!(out, r##"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{y1}" stroke="#e0e0e0"/>"##);
        let _ = writeln!(out, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, y1 + 16.0, label(t));
    }
    for t in f.y.ticks() {
        let py = f.py(t);
        let _ = writeln!(out, r##"<line x1="{x0}" y1="{py:.2}" x2="{x1}" y2="{py:.2}" stroke="#e0e0e0"/>"##);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 6.0, py + 4.0, label(t));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 12.0, escape(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

fn legend(out: &mut String, entries: &[(&str, &str)]) {
    let x = WIDTH - RIGHT + 15.0;
    for (i, (name, color)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let _ = writeln!(out, r#"<rect x="{x}" y="{}" width="12" height="12" fill="{color}"/>"#, y - 10.0);
        let _ = writeln!(out, r#"<text x="{}" y="{y}">{}</text>"#, x + 18.0, escape(name));
    }
}

/// Polyline chart. Points that cannot be shown on a log axis are dropped.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series], xscale: Scale, yscale: Scale) -> String {
    let frame = Frame {
        x: Axis::fit(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)), xscale),
        y: Axis::fit(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)), yscale),
        plot_w: WIDTH - LEFT - RIGHT,
        plot_h: HEIGHT - TOP - BOTTOM,
    };
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &frame, xlabel, ylabel);
    for s in series {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| usable(*x, xscale) && usable(*y, yscale))
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#, s.color, pts.join(" "));
        for p in &pts {
            let (cx, cy) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(out, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{}"/>"#, s.color);
        }
    }
    let entries: Vec<(&str, &str)> = series.iter().map(|s| (s.label.as_str(), s.color.as_str())).collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

/// Scatter overlay with equal aspect ratio.
pub fn scatter(title: &str, layers: &[Layer]) -> String {
    let all = || layers.iter().flat_map(|l| l.points.iter());
    let mut x = Axis::fit(all().map(|p| p.0), Scale::Linear);
    let mut y = Axis::fit(all().map(|p| p.1), Scale::Linear);
    let (avail_w, avail_h) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let per_px = ((x.hi - x.lo) / avail_w).max((y.hi - y.lo) / avail_h);
    let grow = |a: &mut Axis, span_px: f64| {
        let mid = 0.5 * (a.lo + a.hi);
        a.lo = mid - 0.5 * per_px * span_px;
        a.hi = mid + 0.5 * per_px * span_px;
    };
    grow(&mut x, avail_w);
    grow(&mut y, avail_h);
    let frame = Frame { x, y, plot_w: avail_w, plot_h: avail_h };

    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &frame, "x0", "x1");
    for l in layers {
        let _ = writeln!(out, r#"<g fill="{}" fill-opacity="{}">"#, l.color, l.opacity);
        for &(px, py) in l.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="{}"/>"#, frame.px(px), frame.py(py), l.radius);
        }
        out.push_str("</g>\n");
    }
    let entries: Vec<(&str, &str)> = layers.iter().map(|l| (l.label.as_str(), l.color.as_str())).collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}
