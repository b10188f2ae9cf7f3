//! Planar scene export: `S`, `S_r̃`, `Σ^δ`, patch outlines and trajectories.

use std::f64::consts::TAU;
use std::fmt::Write;

use crate::geometry::SetRep;
use crate::linalg::{dist, normalized, sub};
use crate::simulator::ClosedLoopRun;
use crate::synthesis::{PatchDomain, PatchyFeedback};
use crate::{Error, Point, Result};

const SIZE: f64 = 800.0;
const RAY_SAMPLES: usize = 256;

struct Frame {
    lo: Point,
    scale: f64,
    pad: f64,
}

impl Frame {
    fn new(lo: Point, hi: Point) -> Self {
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        let pad = 0.05 * SIZE;
        Self { lo, scale: (SIZE - 2.0 * pad) / span, pad }
    }

    fn map(&self, p: &[f64]) -> (f64, f64) {
        let x = self.pad + (p[0] - self.lo[0]) * self.scale;
        let y = SIZE - self.pad - (p[1] - self.lo[1]) * self.scale;
        (x, y)
    }

    fn path(&self, pts: &[Point], closed: bool) -> String {
        let mut d = String::new();
        for (i, p) in pts.iter().enumerate() {
            let (x, y) = self.map(p);
            let _ = write!(d, "{}{x:.1},{y:.1}", if i == 0 { "M" } else { "L" });
        }
        if closed {
            d.push('Z');
        }
        d
    }
}

fn interior_point(s: &SetRep) -> Point {
    match s {
        SetRep::Polytope(p) => p.chebyshev_center().to_vec(),
        SetRep::Ball { center, .. } => center.clone(),
        SetRep::Oracle(_) => {
            let (lo, hi) = s.bounding_box();
            lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect()
        }
    }
}

/// Level curve `Δ = level` of a set star-shaped about `c`, by bisection along rays.
fn level_curve(s: &SetRep, level: f64, c: &[f64]) -> Vec<Point> {
    let reach = s.diameter() + level.abs() + 1.0;
    let mut out = Vec::with_capacity(RAY_SAMPLES);
    if s.signed_distance(c) > level {
        return out;
    }
    for k in 0..RAY_SAMPLES {
        let th = TAU * k as f64 / RAY_SAMPLES as f64;
        let at = |t: f64| vec![c[0] + t * th.cos(), c[1] + t * th.sin()];
        let (mut a, mut b) = (0.0, reach);
        for _ in 0..50 {
            let m = 0.5 * (a + b);
            if s.signed_distance(&at(m)) <= level {
                a = m;
            } else {
                b = m;
            }
        }
        out.push(at(a));
    }
    out
}

/// Closed outline of the convex hull of two discs.
fn capsule(a: &[f64], b: &[f64], ra: f64, rb: f64) -> Vec<Point> {
    let circle = |c: &[f64], r: f64| -> Vec<Point> {
        (0..24).map(|k| {
            let th = TAU * k as f64 / 24.0;
            vec![c[0] + r * th.cos(), c[1] + r * th.sin()]
        })
        .collect()
    };
    let len = dist(a, b);
    let Some(u) = normalized(&sub(b, a)) else { return circle(a, ra.max(rb)) };
    let k = (rb - ra) / len;
    if k.abs() >= 1.0 {
        return if k > 0.0 { circle(b, rb) } else { circle(a, ra) };
    }
    let phi = k.asin();
    let base = u[1].atan2(u[0]);
    // flank normals sit at base ± (π/2 + φ)
    let start = base + std::f64::consts::FRAC_PI_2 + phi;
    let end = base - std::f64::consts::FRAC_PI_2 - phi;
    let arc = |c: &[f64], r: f64, from: f64, to: f64, out: &mut Vec<Point>| {
        for j in 0..=6 {
            let th = from + (to - from) * j as f64 / 6.0;
            out.push(vec![c[0] + r * th.cos(), c[1] + r * th.sin()]);
        }
    };
    let mut out = Vec::new();
    arc(b, rb, start, end, &mut out);
    arc(a, ra, end, start - TAU, &mut out);
    out
}

fn domain_outlines(d: &PatchDomain) -> Vec<Vec<Point>> {
    match d {
        PatchDomain::ShiftedWedge { cone, .. } => vec![capsule(&cone.a, &cone.b, cone.ra, cone.rb)],
        PatchDomain::TubeSegment { vertices, radii, .. } => {
            if vertices.len() == 1 {
                return vec![capsule(&vertices[0], &vertices[0], radii[0], radii[0])];
            }
            (0..vertices.len() - 1).map(|k| capsule(&vertices[k], &vertices[k + 1], radii[k], radii[k + 1])).collect()
        }
        PatchDomain::Ball { center, radius } => vec![capsule(center, center, *radius, *radius)],
    }
}

fn hue(i: usize, n: usize) -> f64 {
    300.0 * i as f64 / n.max(1) as f64
}

/// `#rrggbb` for hue in degrees, saturation and lightness in `[0, 1]`.
fn hsl(h: f64, s: f64, l: f64) -> String {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = (h / 60.0).rem_euclid(6.0);
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let q = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    format!("#{:02x}{:02x}{:02x}", q(r), q(g), q(b))
}

/// The scene as an SVG document.
pub fn render(s: &SetRep, target: &SetRep, delta: f64, r_tilde: f64, fb: &PatchyFeedback, runs: &[ClosedLoopRun]) -> Result<String> {
    if s.dim() != 2 {
        return Err(Error::RenderDimension);
    }
    let (lo, hi) = s.bounding_box();
    let fr = Frame::new(lo, hi);
    let c = interior_point(s);
    let outline_s = fr.path(&level_curve(s, 0.0, &c), true);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<defs><clipPath id="S"><path d="{outline_s}"/></clipPath></defs>"#);
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(svg, r##"<path d="{outline_s}" fill="#f4f4f4" stroke="#000000" stroke-width="1.5"/>"##);
    let _ = writeln!(svg, r#"<g clip-path="url(#S)" fill="none" stroke-width="0.3" stroke-opacity="0.35">"#);
    let n = fb.len();
    for (i, p) in fb.patches.iter().enumerate() {
        let col = if p.is_boundary() { "#1f4e9c".to_string() } else { hsl(hue(i, n), 0.5, 0.7) };
        for o in domain_outlines(&p.domain) {
            let _ = writeln!(svg, r#"<path d="{}" stroke="{col}"/>"#, fr.path(&o, true));
        }
    }
    let _ = writeln!(svg, "</g>");
    if r_tilde > 0.0 {
        let inner = level_curve(s, -r_tilde, &c);
        if !inner.is_empty() {
            let _ = writeln!(
                svg,
                r##"<path d="{}" fill="none" stroke="#555555" stroke-width="1" stroke-dasharray="6,4"/>"##,
                fr.path(&inner, true)
            );
        }
    }
    let tc = interior_point(target);
    let _ = writeln!(
        svg,
        r##"<path d="{}" fill="#ffd54f" fill-opacity="0.4" stroke="#b8860b" stroke-width="1.2"/>"##,
        fr.path(&level_curve(target, delta, &tc), true)
    );
    let _ = writeln!(svg, r#"<g fill="none" stroke-width="1.3">"#);
    for r in runs {
        let mut k = 0;
        while k + 1 < r.states.len() {
            let cur = r.patches[k];
            let mut j = k + 1;
            while j + 1 < r.states.len() && r.patches[j] == cur {
                j += 1;
            }
            let col = match cur {
                Some(i) => hsl(hue(i, n), 0.9, 0.4),
                None => "#000000".into(),
            };
            let _ = writeln!(svg, r#"<path d="{}" stroke="{col}"/>"#, fr.path(&r.states[k..=j], false));
            k = j;
        }
        if let Some(x0) = r.states.first() {
            let (x, y) = fr.map(x0);
            let _ = writeln!(svg, r##"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="#000000"/>"##);
        }
    }
    let _ = writeln!(svg, "</g>\n</svg>");
    Ok(svg)
}
