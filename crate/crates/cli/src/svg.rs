//! Utility-vs-compute plot: observed points and fitted laws.
//!
//! The x axis is log10 FLOPs, the y axis is the delta. Each fitted law is
//! drawn solid across its fitted compute range and dotted where it is
//! extrapolated to the plot edges. Nothing is computed here that is not
//! already in the CSV.

use std::fmt::Write;

use dataplan_core::ingest::UtilityPoint;
use dataplan_core::scaling::ScalingFit;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, log_c: f64) -> f64 {
        LEFT + (log_c - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, delta: f64) -> f64 {
        HEIGHT - BOTTOM - (delta - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn padded(lo: f64, hi: f64, frac: f64) -> (f64, f64) {
    if hi > lo {
        let pad = (hi - lo) * frac;
        (lo - pad, hi + pad)
    } else {
        let pad = lo.abs().max(1e-3) * 0.5;
        (lo - pad, hi + pad)
    }
}

/// Renders `fits` and `points`; `extra_compute` widens the x range, e.g. to
/// show a budget beyond the measured points.
pub fn render(fits: &[ScalingFit], points: &[UtilityPoint], extra_compute: &[f64]) -> String {
    let computes = points
        .iter()
        .map(|p| p.compute)
        .chain(
            fits.iter()
                .flat_map(|f| [f.compute_range.0, f.compute_range.1]),
        )
        .chain(extra_compute.iter().copied())
        .filter(|c| *c > 0.0 && c.is_finite())
        .map(f64::log10);
    let (xlo, xhi) = computes.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| {
        (a.min(c), b.max(c))
    });
    let (xlo, xhi) = if xlo.is_finite() {
        padded(xlo, xhi, 0.05)
    } else {
        (0.0, 1.0)
    };

    let line_at =
        |f: &ScalingFit, log_c: f64| f.intercept + f.slope * log_c * std::f64::consts::LN_10;
    let deltas = points
        .iter()
        .map(|p| p.delta.value)
        .chain(fits.iter().flat_map(|f| [line_at(f, xlo), line_at(f, xhi)]));
    let (ylo, yhi) = deltas.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| {
        (a.min(d), b.max(d))
    });
    let (ylo, yhi) = if ylo.is_finite() {
        padded(ylo, yhi, 0.05)
    } else {
        (0.0, 1.0)
    };
    let frame = Frame {
        x: (xlo, xhi),
        y: (ylo, yhi),
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    axes(&mut s, &frame);

    let mut ids: Vec<&str> = fits.iter().map(|f| f.source_id.as_str()).collect();
    for p in points {
        if !ids.contains(&p.source_id.as_str()) {
            ids.push(&p.source_id);
        }
    }
    let colour = |id: &str| PALETTE[ids.iter().position(|x| *x == id).unwrap_or(0) % PALETTE.len()];

    for f in fits {
        let c = colour(&f.source_id);
        let (lo, hi) = (f.compute_range.0.log10(), f.compute_range.1.log10());
        let mut segment = |a: f64, b: f64, dotted: bool| {
            if b <= a {
                return;
            }
            let dash = if dotted {
                r#" stroke-dasharray="3 4""#
            } else {
                ""
            };
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{c}" stroke-width="2"{dash}/>"#,
                frame.px(a),
                frame.py(line_at(f, a)),
                frame.px(b),
                frame.py(line_at(f, b)),
            );
        };
        segment(xlo, lo, true);
        segment(lo, hi, false);
        segment(hi, xhi, true);
    }
    for p in points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}"/>"#,
            frame.px(p.compute.log10()),
            frame.py(p.delta.value),
            colour(&p.source_id)
        );
    }
    for (i, id) in ids.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            x + 20.0,
            colour(id),
            x + 26.0,
            y + 4.0,
            escape(id)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn axes(s: &mut String, frame: &Frame) {
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        s,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    let first = frame.x.0.ceil() as i64;
    let last = frame.x.1.floor() as i64;
    let stride = ((last - first) / 8).max(1);
    for e in (first..=last).step_by(stride as usize) {
        let x = frame.px(e as f64);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">1e{e}</text>"#,
            y0 + 5.0,
            y0 + 18.0
        );
    }
    for i in 0..=4 {
        let v = frame.y.0 + (frame.y.1 - frame.y.0) * i as f64 / 4.0;
        let y = frame.py(v);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{}" text-anchor="middle">compute (FLOPs)</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16,{:.2}) rotate(-90)" text-anchor="middle">utility delta</text>"#,
        (y0 + y1) / 2.0
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
