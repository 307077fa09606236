//! Standalone SVG phase portraits.
//!
//! Output depends only on the document and style: coordinates are printed
//! with three decimals and elements are emitted in document order.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::export::PortraitDocument;
use crate::phase::{AxisScale, Classification, EquilibriumKind, NullclineVariable};

/// Viridis sampled at nine evenly spaced positions.
pub const COLORMAP: [(f64, [u8; 3]); 9] = [
    (0.0, [0x44, 0x01, 0x54]),
    (0.125, [0x47, 0x2d, 0x7b]),
    (0.25, [0x3b, 0x52, 0x8b]),
    (0.375, [0x2c, 0x72, 0x8e]),
    (0.5, [0x21, 0x91, 0x8c]),
    (0.625, [0x28, 0xae, 0x80]),
    (0.75, [0x5e, 0xc9, 0x62]),
    (0.875, [0xad, 0xdc, 0x30]),
    (1.0, [0xfd, 0xe7, 0x25]),
];

const V_NULLCLINE_COLOR: &str = "#1f4fd8";
const N_NULLCLINE_COLOR: &str = "#808080";
const TRAJECTORY_COLORS: [&str; 6] = [
    "#d62728", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];
const COLORBAR_SPACE: f64 = 90.0;
const COLORBAR_WIDTH: f64 = 14.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorStop {
    pub position: f64,
    pub color: String,
}

fn hex([r, g, b]: [u8; 3]) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

pub fn colormap_stops() -> Vec<ColorStop> {
    COLORMAP
        .iter()
        .map(|&(position, rgb)| ColorStop {
            position,
            color: hex(rgb),
        })
        .collect()
}

/// Linear interpolation of [`COLORMAP`] at `index`, clamped to `[0, 1]`.
pub fn color_at(index: f64) -> String {
    let x = if index.is_nan() {
        0.0
    } else {
        index.clamp(0.0, 1.0)
    };
    let k = COLORMAP
        .windows(2)
        .position(|w| x <= w[1].0)
        .unwrap_or(COLORMAP.len() - 2);
    let ((p0, c0), (p1, c1)) = (COLORMAP[k], COLORMAP[k + 1]);
    let f = (x - p0) / (p1 - p0);
    let mix = |a: u8, b: u8| (a as f64 + f * (b as f64 - a as f64)).round() as u8;
    hex([mix(c0[0], c1[0]), mix(c0[1], c1[1]), mix(c0[2], c1[2])])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderStyle {
    pub width: u32,
    pub height: u32,
    pub margin: u32,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            width: 900,
            height: 700,
            margin: 70,
        }
    }
}

/// Three decimals without a negative zero.
fn f3(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

/// Maps phase-plane coordinates to pixels.
#[derive(Debug, Clone, Copy)]
pub struct PlotFrame {
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
    v_range: (f64, f64),
    w_range: (f64, f64),
    log: bool,
}

impl PlotFrame {
    pub fn new(doc: &PortraitDocument, style: &RenderStyle) -> Self {
        let m = style.margin as f64;
        let log = doc.axes.n_d_axis_scale == AxisScale::Log;
        let axis = |n: f64| if log { n.ln() } else { n };
        Self {
            left: m,
            right: (style.width as f64 - m - COLORBAR_SPACE).max(m + 1.0),
            top: m,
            bottom: (style.height as f64 - m).max(m + 1.0),
            v_range: doc.axes.v_c_range,
            w_range: (axis(doc.axes.n_d_range.0), axis(doc.axes.n_d_range.1)),
            log,
        }
    }

    /// Pixels per volt and per axis unit of `N_d`.
    pub fn scale(&self) -> (f64, f64) {
        (
            (self.right - self.left) / (self.v_range.1 - self.v_range.0),
            (self.bottom - self.top) / (self.w_range.1 - self.w_range.0),
        )
    }

    pub fn x(&self, v: f64) -> f64 {
        self.left + (v - self.v_range.0) * self.scale().0
    }

    pub fn y_axis(&self, w: f64) -> f64 {
        self.bottom - (w - self.w_range.0) * self.scale().1
    }

    pub fn y(&self, n: f64) -> f64 {
        self.y_axis(if self.log { n.ln() } else { n })
    }
}

fn nice_step(span: f64, target: f64) -> (f64, f64, i32) {
    let raw = span / target;
    let e = raw.log10().floor() as i32;
    let mag = 10f64.powi(e);
    for m in [1.0, 2.0, 5.0] {
        if m * mag >= raw {
            return (m * mag, m, e);
        }
    }
    (10.0 * mag, 1.0, e + 1)
}

/// Evenly spaced round tick values inside `[lo, hi]` with their labels.
fn linear_ticks(lo: f64, hi: f64, scientific: bool) -> Vec<(f64, String)> {
    let (step, m, e) = nice_step(hi - lo, 6.0);
    let k0 = (lo / step - 1e-9).ceil() as i64;
    let k1 = (hi / step + 1e-9).floor() as i64;
    (k0..=k1)
        .map(|k| {
            let v = k as f64 * step;
            let label = if scientific {
                let mant = k as f64 * m;
                if k == 0 {
                    "0".to_string()
                } else {
                    format!("{mant}e{e}")
                }
            } else {
                let decimals = (-e).max(0) as usize;
                let s = format!("{v:.decimals$}");
                if s.starts_with('-') && s.trim_start_matches(['-', '0', '.']).is_empty() {
                    s[1..].to_string()
                } else {
                    s
                }
            };
            (v, label)
        })
        .collect()
}

/// Decades inside `[lo, hi]`.
fn decade_ticks(lo: f64, hi: f64) -> Vec<i32> {
    let k0 = (lo.log10() - 1e-9).ceil() as i32;
    let k1 = (hi.log10() + 1e-9).floor() as i32;
    (k0..=k1).collect()
}

fn arrow_path(frame: &PlotFrame, x0: f64, y0: f64, theta: f64, radii: (f64, f64)) -> String {
    let (px, py) = frame.scale();
    let x1 = x0 + radii.0 * theta.cos() * px;
    let y1 = y0 - radii.1 * theta.sin() * py;
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len = dx.hypot(dy);
    let head = (0.35 * len).min(6.0);
    let ang = dy.atan2(dx);
    let barb = |s: f64| {
        let a = ang + std::f64::consts::PI - s * 0.45;
        (x1 + head * a.cos(), y1 + head * a.sin())
    };
    let (b1, b2) = (barb(1.0), barb(-1.0));
    format!(
        "M{},{}L{},{}M{},{}L{},{}L{},{}",
        f3(x0),
        f3(y0),
        f3(x1),
        f3(y1),
        f3(b1.0),
        f3(b1.1),
        f3(x1),
        f3(y1),
        f3(b2.0),
        f3(b2.1)
    )
}

fn polyline_path(points: impl Iterator<Item = (f64, f64)>) -> String {
    let mut d = String::new();
    for (k, (x, y)) in points.enumerate() {
        let _ = write!(d, "{}{},{}", if k == 0 { 'M' } else { 'L' }, f3(x), f3(y));
    }
    d
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders the document as a standalone SVG.
pub fn render_portrait(doc: &PortraitDocument, style: &RenderStyle) -> String {
    let fr = PlotFrame::new(doc, style);
    let (w, h) = (style.width, style.height);
    let hash = xml_escape(&doc.config_hash);
    let mut s = String::with_capacity(64 * 1024);

    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12" data-config-hash="{hash}">"#
    );
    let _ = writeln!(
        s,
        "<desc>M-CNN cell phase portrait; config-hash {hash}</desc>"
    );
    let _ = writeln!(
        s,
        r#"<defs><clipPath id="plot-area"><rect x="{}" y="{}" width="{}" height="{}"/></clipPath>"#,
        f3(fr.left),
        f3(fr.top),
        f3(fr.right - fr.left),
        f3(fr.bottom - fr.top)
    );
    s.push_str(r#"<linearGradient id="colormap" x1="0" y1="1" x2="0" y2="0">"#);
    for stop in &doc.normalization.colormap {
        let _ = write!(
            s,
            r#"<stop offset="{}" stop-color="{}"/>"#,
            f3(stop.position),
            stop.color
        );
    }
    s.push_str("</linearGradient></defs>\n");
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);

    render_axes(&mut s, doc, &fr);

    // Vector field.
    s.push_str("<g class=\"field\">\n");
    for sample in &doc.field {
        let x0 = fr.x(sample.point.v_c);
        let y0 = fr.y(sample.point.n_d);
        match sample.theta {
            Some(theta) => {
                let _ = writeln!(
                    s,
                    r#"<path class="arrow" d="{}" stroke="{}" stroke-width="1.2" fill="none"/>"#,
                    arrow_path(&fr, x0, y0, theta, doc.normalization.radii),
                    color_at(sample.color_index)
                );
            }
            None => {
                let _ = writeln!(
                    s,
                    r##"<circle class="zero" cx="{}" cy="{}" r="2" fill="#000000"/>"##,
                    f3(x0),
                    f3(y0)
                );
            }
        }
    }
    s.push_str("</g>\n");

    // Nullclines.
    s.push_str("<g class=\"nullclines\" clip-path=\"url(#plot-area)\" fill=\"none\">\n");
    for nc in &doc.nullclines {
        let (class, color, dash) = match nc.variable {
            NullclineVariable::VC => ("nullcline-v", V_NULLCLINE_COLOR, "7 4"),
            NullclineVariable::ND => ("nullcline-n", N_NULLCLINE_COLOR, "1.5 3.5"),
        };
        for line in nc.polylines.iter().filter(|l| l.len() >= 2) {
            let d = polyline_path(line.iter().map(|p| (fr.x(p.v_c), fr.y(p.n_d))));
            let _ = writeln!(
                s,
                r#"<path class="{class}" d="{d}" stroke="{color}" stroke-width="2" stroke-dasharray="{dash}" stroke-linecap="round"/>"#
            );
        }
    }
    s.push_str("</g>\n");

    // Equilibria off the continuum.
    s.push_str("<g class=\"equilibria\">\n");
    for eq in doc
        .equilibria
        .iter()
        .filter(|e| e.kind != EquilibriumKind::OnContinuum)
    {
        let (x, y) = (fr.x(eq.point.v_c), fr.y(eq.point.n_d));
        let (class, fill) = match eq.classification {
            Classification::Stable => ("stable", "#000000"),
            Classification::Unstable => ("unstable", "#ffffff"),
            Classification::Saddle => ("saddle", "#bbbbbb"),
            Classification::NonHyperbolic => ("non-hyperbolic", "#ffffff"),
        };
        let r = 5.0;
        let _ = writeln!(
            s,
            r##"<path class="equilibrium {class}" d="M{},{}L{},{}L{},{}L{},{}Z" fill="{fill}" stroke="#000000"/>"##,
            f3(x),
            f3(y - r),
            f3(x + r),
            f3(y),
            f3(x),
            f3(y + r),
            f3(x - r),
            f3(y)
        );
    }
    s.push_str("</g>\n");

    // Trajectories.
    s.push_str("<g class=\"trajectories\">\n");
    for (k, rec) in doc.trajectories.iter().enumerate() {
        let color = TRAJECTORY_COLORS[k % TRAJECTORY_COLORS.len()];
        let t = &rec.trajectory;
        let d = polyline_path(t.points.iter().map(|p| (fr.x(p.v_c), fr.y(p.n_d))));
        if rec.failure.is_some() {
            let _ = writeln!(
                s,
                r##"<path class="trajectory failed" d="{d}" stroke="#d62728" stroke-width="2" stroke-dasharray="5 3" fill="none" clip-path="url(#plot-area)"/>"##
            );
        } else {
            let _ = writeln!(
                s,
                r#"<path class="trajectory" d="{d}" stroke="{color}" stroke-width="2" fill="none" clip-path="url(#plot-area)"/>"#
            );
        }
        let (sx, sy) = (fr.x(t.initial.v_c), fr.y(t.initial.n_d));
        let _ = writeln!(
            s,
            r#"<circle class="start-marker" cx="{}" cy="{}" r="4.5" fill="white" stroke="{color}" stroke-width="2"/>"#,
            f3(sx),
            f3(sy)
        );
        let (ex, ey) = (fr.x(t.terminal.v_c), fr.y(t.terminal.n_d));
        let c = 5.0;
        let _ = writeln!(
            s,
            r#"<path class="end-marker" d="M{},{}L{},{}M{},{}L{},{}" stroke="{color}" stroke-width="2.5"/>"#,
            f3(ex - c),
            f3(ey - c),
            f3(ex + c),
            f3(ey + c),
            f3(ex - c),
            f3(ey + c),
            f3(ex + c),
            f3(ey - c)
        );
    }
    s.push_str("</g>\n");

    render_colorbar(&mut s, doc, &fr);
    s.push_str("</svg>\n");
    s
}

fn render_axes(s: &mut String, doc: &PortraitDocument, fr: &PlotFrame) {
    s.push_str("<g class=\"axes\" stroke=\"#000000\">\n");
    let _ = writeln!(
        s,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none"/>"#,
        f3(fr.left),
        f3(fr.top),
        f3(fr.right - fr.left),
        f3(fr.bottom - fr.top)
    );
    let (v0, v1) = doc.axes.v_c_range;
    for (v, label) in linear_ticks(v0, v1, false) {
        let x = fr.x(v);
        let _ = writeln!(
            s,
            r#"<line class="tick" x1="{x}" y1="{}" x2="{x}" y2="{}"/><text x="{x}" y="{}" text-anchor="middle" stroke="none">{label}</text>"#,
            f3(fr.bottom),
            f3(fr.bottom + 6.0),
            f3(fr.bottom + 20.0),
            x = f3(x)
        );
    }
    let (n0, n1) = doc.axes.n_d_range;
    match doc.axes.n_d_axis_scale {
        AxisScale::Log => {
            let decades = decade_ticks(n0, n1);
            for &k in &decades {
                let y = fr.y(10f64.powi(k));
                let _ = writeln!(
                    s,
                    r#"<line class="tick" x1="{}" y1="{y}" x2="{}" y2="{y}"/><text x="{}" y="{}" text-anchor="end" stroke="none">10<tspan baseline-shift="super" font-size="9">{k}</tspan></text>"#,
                    f3(fr.left - 6.0),
                    f3(fr.left),
                    f3(fr.left - 9.0),
                    f3(y + 4.0),
                    y = f3(y)
                );
            }
            let k0 = (n0.log10().floor()) as i32;
            let k1 = (n1.log10().ceil()) as i32;
            for k in k0..k1 {
                for m in 2..10 {
                    let n = m as f64 * 10f64.powi(k);
                    if n > n0 && n < n1 {
                        let y = f3(fr.y(n));
                        let _ = writeln!(
                            s,
                            r#"<line class="minor-tick" x1="{}" y1="{y}" x2="{}" y2="{y}"/>"#,
                            f3(fr.left - 3.0),
                            f3(fr.left)
                        );
                    }
                }
            }
        }
        AxisScale::Linear => {
            for (n, label) in linear_ticks(n0, n1, true) {
                let y = fr.y(n);
                let _ = writeln!(
                    s,
                    r#"<line class="tick" x1="{}" y1="{y}" x2="{}" y2="{y}"/><text x="{}" y="{}" text-anchor="end" stroke="none">{label}</text>"#,
                    f3(fr.left - 6.0),
                    f3(fr.left),
                    f3(fr.left - 9.0),
                    f3(y + 4.0),
                    y = f3(y)
                );
            }
        }
    }
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="{}" y="{}" text-anchor="middle" stroke="none" font-size="14">V<tspan baseline-shift="sub" font-size="10">C</tspan> (V)</text>"#,
        f3((fr.left + fr.right) / 2.0),
        f3(fr.bottom + 44.0)
    );
    let (lx, ly) = (fr.left - 52.0, (fr.top + fr.bottom) / 2.0);
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="{x}" y="{y}" text-anchor="middle" stroke="none" font-size="14" transform="rotate(-90 {x} {y})">N<tspan baseline-shift="sub" font-size="10">d</tspan> (m<tspan baseline-shift="super" font-size="10">-3</tspan>)</text>"#,
        x = f3(lx),
        y = f3(ly)
    );
    s.push_str("</g>\n");
}

fn render_colorbar(s: &mut String, doc: &PortraitDocument, fr: &PlotFrame) {
    let x = fr.right + 24.0;
    let (top, bottom) = (fr.top, fr.bottom);
    s.push_str("<g class=\"colorbar\">\n");
    let _ = writeln!(
        s,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="url(#colormap)" stroke="#000000"/>"##,
        f3(x),
        f3(top),
        f3(COLORBAR_WIDTH),
        f3(bottom - top)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">log scaled norm</text>"#,
        f3(x + COLORBAR_WIDTH / 2.0),
        f3(top - 10.0)
    );
    if let Some((lo, hi)) = doc.normalization.norm_range {
        let (l0, l1) = (lo.log10(), hi.log10());
        for c in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let y = bottom - c * (bottom - top);
            let value = 10f64.powf(l0 + c * (l1 - l0));
            let _ = writeln!(
                s,
                r##"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#000000"/><text x="{}" y="{}" font-size="10">{value:.2e}</text>"##,
                f3(x + COLORBAR_WIDTH),
                f3(x + COLORBAR_WIDTH + 4.0),
                f3(x + COLORBAR_WIDTH + 6.0),
                f3(y + 3.5),
                y = f3(y)
            );
        }
    }
    s.push_str("</g>\n");
}
